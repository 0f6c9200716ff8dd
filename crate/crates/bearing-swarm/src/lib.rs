//! Distributed bearing-only target tracking over a sensor network.
//!
//! A team of stationary sensors measures only the bearing toward a moving
//! target. Each node packs its local observation into a 6-dimensional
//! information vector, the network runs a signum-driven dynamic
//! average-consensus protocol on those vectors, and every node recovers the
//! target position from its own consensus estimate with a 2x2 least-squares
//! solve. After a certifiable finite time the local estimates agree with
//! the centralized least-squares solution up to integration chatter.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: plane vectors, 2x2 systems, and a self-contained Jacobi
//!   eigensolver.
//! - [`graph`]: network topology and its spectral objects.
//! - [`geometry`]: bearing synthesis and local information packing.
//! - [`consensus`]: the signum protocol, gain rule, and finite-time bound.
//! - [`tracker`]: per-node recovery and the centralized oracle.
//! - [`scenario`]: trajectory models, validation, and rate certification.
//! - [`engine`]: the fixed-step closed-loop simulator and metrics.

pub mod consensus;
pub mod engine;
pub mod geometry;
pub mod graph;
pub mod linalg;
pub mod scenario;
pub mod tol;
pub mod tracker;

// The guide's chapters double as doc-tests so every snippet in the book
// keeps compiling and passing against the current API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }
    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(Network, "../../../book/src/network.md");
    chapter!(Bearings, "../../../book/src/bearings.md");
    chapter!(Consensus, "../../../book/src/consensus.md");
    chapter!(Tracking, "../../../book/src/tracking.md");
    chapter!(Scenarios, "../../../book/src/scenarios.md");
    chapter!(Running, "../../../book/src/running.md");
}
