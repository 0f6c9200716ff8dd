//! Sensor-network graphs and the matrix objects the consensus analysis
//! rests on: adjacency, degree, Laplacian, signed incidence, the centering
//! projector, and the algebraic connectivity.
//!
//! All matrices are built with integer-valued arithmetic in f64, so
//! identities like B*B^T = 2L hold machine-exactly. Connectivity is decided
//! by breadth-first traversal; the spectral value lambda2 is a diagnostic,
//! not the authority.

use std::collections::{HashSet, VecDeque};

use ndarray::Array2;
use thiserror::Error;

use crate::linalg::{self, LinalgError};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("edge ({a}, {b}) references a node outside 0..{n}")]
    NodeOutOfRange { a: usize, b: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({a}, {b})")]
    DuplicateEdge { a: usize, b: usize },
    #[error("graph is not connected")]
    NotConnected,
    #[error(transparent)]
    Eigen(#[from] LinalgError),
}

/// Undirected unweighted graph with every derived matrix precomputed.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    /// Normalized (lo, hi) pairs, sorted.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    adjacency: Array2<f64>,
    laplacian: Array2<f64>,
    /// n x 2|edges|; each undirected edge appears as two opposed directed
    /// columns (-1 at the source row, +1 at the destination row), columns
    /// grouped by destination ascending, then source ascending.
    incidence: Array2<f64>,
    lambda2: f64,
    connected: bool,
}

impl Graph {
    /// Builds a connected graph; rejects malformed edge lists and
    /// disconnected topologies.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Graph, GraphError> {
        let g = Graph::allow_disconnected(n, edges)?;
        if !g.connected {
            return Err(GraphError::NotConnected);
        }
        Ok(g)
    }

    /// Like [`Graph::new`] but keeps disconnected graphs, for diagnostics
    /// that must inspect them instead of refusing outright.
    pub fn allow_disconnected(n: usize, edges: &[(usize, usize)]) -> Result<Graph, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewNodes(n));
        }
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange { a, b, n });
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge { a, b });
            }
            normalized.push(key);
        }
        normalized.sort_unstable();

        let mut adjacency = Array2::<f64>::zeros((n, n));
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            adjacency[[a, b]] = 1.0;
            adjacency[[b, a]] = 1.0;
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let mut laplacian = adjacency.mapv(|v| -v);
        for i in 0..n {
            laplacian[[i, i]] = neighbors[i].len() as f64;
        }

        let mut incidence = Array2::<f64>::zeros((n, 2 * normalized.len()));
        let mut col = 0;
        for dst in 0..n {
            for &src in &neighbors[dst] {
                incidence[[src, col]] = -1.0;
                incidence[[dst, col]] = 1.0;
                col += 1;
            }
        }

        let eig = linalg::sym_eigen(&laplacian)?;
        let lambda2 = eig.values[1].max(0.0);
        let connected = bfs_reaches_all(n, &neighbors);

        Ok(Graph {
            n,
            edges: normalized,
            neighbors,
            adjacency,
            laplacian,
            incidence,
            lambda2,
            connected,
        })
    }

    /// Path 0-1-...-(n-1).
    pub fn path(n: usize) -> Graph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::new(n, &edges).expect("path graph is connected")
    }

    /// Cycle 0-1-...-(n-1)-0; needs n >= 3.
    pub fn cycle(n: usize) -> Graph {
        assert!(n >= 3, "cycle needs at least 3 nodes");
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::new(n, &edges).expect("cycle graph is connected")
    }

    /// Complete graph on n nodes.
    pub fn complete(n: usize) -> Graph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Graph::new(n, &edges).expect("complete graph is connected")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree_of(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    pub fn degree(&self) -> Array2<f64> {
        let mut d = Array2::<f64>::zeros((self.n, self.n));
        for i in 0..self.n {
            d[[i, i]] = self.neighbors[i].len() as f64;
        }
        d
    }

    pub fn laplacian(&self) -> &Array2<f64> {
        &self.laplacian
    }

    pub fn incidence(&self) -> &Array2<f64> {
        &self.incidence
    }

    /// Second-smallest Laplacian eigenvalue; ~0 for disconnected graphs.
    pub fn algebraic_connectivity(&self) -> f64 {
        self.lambda2
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// Projector onto the zero-mean subspace, M = I - (1/n) 1 1^T,
    /// computed directly from n.
    pub fn centering_projector(&self) -> Array2<f64> {
        let inv = 1.0 / self.n as f64;
        Array2::from_shape_fn((self.n, self.n), |(i, j)| {
            if i == j {
                1.0 - inv
            } else {
                -inv
            }
        })
    }

    /// Checks the three pseudo-inverse expressions for the centering
    /// projector, M = L L^+ = (BB^T)(BB^T)^+ = B (B^T B)^+ B^T, against the
    /// direct formula. Returns the worst entrywise deviation.
    pub fn projector_identity_check(&self, tol: f64) -> Result<ProjectorCheck, LinalgError> {
        let m = self.centering_projector();
        let l_pinv = linalg::sym_pseudo_inverse(&self.laplacian)?;
        let via_laplacian = self.laplacian.dot(&l_pinv);
        let bbt = self.incidence.dot(&self.incidence.t());
        let bbt_pinv = linalg::sym_pseudo_inverse(&bbt)?;
        let via_bbt = bbt.dot(&bbt_pinv);
        let btb = self.incidence.t().dot(&self.incidence);
        let btb_pinv = linalg::sym_pseudo_inverse(&btb)?;
        let via_gram = self.incidence.dot(&btb_pinv).dot(&self.incidence.t());

        let max_deviation = [via_laplacian, via_bbt, via_gram]
            .iter()
            .map(|e| linalg::max_abs(&(e - &m)))
            .fold(0.0, f64::max);
        Ok(ProjectorCheck {
            passes: max_deviation <= tol,
            max_deviation,
        })
    }
}

/// Result of [`Graph::projector_identity_check`].
#[derive(Debug, Clone, Copy)]
pub struct ProjectorCheck {
    pub passes: bool,
    pub max_deviation: f64,
}

fn bfs_reaches_all(n: usize, neighbors: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &neighbors[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

/// Builds a connected graph on n nodes from raw entropy words: a random
/// attachment tree plus extra edges selected by the remaining bits. Test
/// helper shared by the property suites.
#[cfg(test)]
pub(crate) fn connected_graph_from_entropy(n: usize, entropy: &[u64]) -> Graph {
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = (entropy[k - 1] % k as u64) as usize;
        edges.push((parent, k));
    }
    let mut word = n - 1;
    let mut bit = 0;
    for i in 0..n {
        for j in i + 1..n {
            if edges.contains(&(i, j)) {
                continue;
            }
            if (entropy[word % entropy.len()] >> bit) & 1 == 1 {
                edges.push((i, j));
            }
            bit += 1;
            if bit == 64 {
                bit = 0;
                word += 1;
            }
        }
    }
    Graph::new(n, &edges).expect("attachment tree keeps the graph connected")
}
