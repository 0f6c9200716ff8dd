//! Signum-driven dynamic average consensus.
//!
//! Every node holds an internal state w_i in R^6 and publishes the estimate
//! x_i = w_i + phi_i, where phi_i is its packed local signal. The protocol
//!
//! ```text
//! dw_i/dt = -beta * sum over neighbors j of sgn(x_i - x_j)   (entrywise)
//! ```
//!
//! drives every x_i to the network average of the phi_j in finite time,
//! provided beta >= 1 + gamma * sqrt(n_hat) / lambda2_hat, where gamma
//! bounds the signal rates and (n_hat, lambda2_hat) conservatively bound
//! the network size and its algebraic connectivity.
//!
//! # Discretization
//!
//! Under forward Euler every accepted full step changes w_i by an integer
//! multiple of the quantum beta*h, because the right-hand side is an
//! integer sign-sum times -beta. [`ConsensusState`] therefore accumulates
//! those integers exactly and materializes w = base + quantum * accum on
//! demand. Two consequences:
//!
//! - the column sums of w are conserved to machine precision over any
//!   number of steps (the integer part is conserved exactly),
//! - a discrete trajectory cannot settle below the quantum; all
//!   convergence diagnostics compare against the chatter floor
//!   10 * beta * h rather than zero.

use ndarray::Array2;
use thiserror::Error;

use crate::graph::Graph;
use crate::tol;

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("connectivity lower bound must be positive, got {0}")]
    NonPositiveLambdaBound(f64),
    #[error("signal-rate bound must be nonnegative, got {0}")]
    NegativeRateBound(f64),
    #[error("node-count bound must be at least 1, got {0}")]
    ZeroNodeBound(usize),
    #[error("gain must be nonnegative, got {0}")]
    NegativeGain(f64),
}

/// Protocol gain together with the bounds that justified it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ProtocolGains {
    pub beta: f64,
    /// Certified bound on the packed-signal rates, sup-norm per second.
    pub gamma_hat: f64,
    /// Upper bound on the node count known to the protocol.
    pub n_hat: usize,
    /// Lower bound on the algebraic connectivity known to the protocol.
    pub lambda2_hat: f64,
    /// False when beta was overridden below the sufficient gain; such runs
    /// carry no convergence guarantee.
    pub meets_bound: bool,
}

impl ProtocolGains {
    /// Smallest sufficient gain for the given bounds,
    /// beta = 1 + gamma_hat * sqrt(n_hat) / lambda2_hat.
    pub fn from_rate_bound(
        gamma_hat: f64,
        n_hat: usize,
        lambda2_hat: f64,
    ) -> Result<ProtocolGains, ConsensusError> {
        let beta = required_gain(gamma_hat, n_hat, lambda2_hat)?;
        Ok(ProtocolGains {
            beta,
            gamma_hat,
            n_hat,
            lambda2_hat,
            meets_bound: true,
        })
    }

    /// Manual gain override; records whether the choice still meets the
    /// sufficient bound.
    pub fn with_beta(
        beta: f64,
        gamma_hat: f64,
        n_hat: usize,
        lambda2_hat: f64,
    ) -> Result<ProtocolGains, ConsensusError> {
        if beta < 0.0 {
            return Err(ConsensusError::NegativeGain(beta));
        }
        let required = required_gain(gamma_hat, n_hat, lambda2_hat)?;
        Ok(ProtocolGains {
            beta,
            gamma_hat,
            n_hat,
            lambda2_hat,
            meets_bound: beta >= required,
        })
    }

    /// The sufficient gain for this parameter set.
    pub fn required_beta(&self) -> f64 {
        required_gain(self.gamma_hat, self.n_hat, self.lambda2_hat)
            .expect("bounds validated at construction")
    }
}

fn required_gain(gamma_hat: f64, n_hat: usize, lambda2_hat: f64) -> Result<f64, ConsensusError> {
    if !(gamma_hat >= 0.0) {
        return Err(ConsensusError::NegativeRateBound(gamma_hat));
    }
    if n_hat == 0 {
        return Err(ConsensusError::ZeroNodeBound(n_hat));
    }
    if !(lambda2_hat > 0.0) {
        return Err(ConsensusError::NonPositiveLambdaBound(lambda2_hat));
    }
    Ok(1.0 + gamma_hat * (n_hat as f64).sqrt() / lambda2_hat)
}

/// Entrywise sign-sums k_i = sum over neighbors j of sgn(x_i - x_j), with
/// sgn(0) = 0. Integer-valued so conservation can be tracked exactly: each
/// edge contributes +s to one row and -s to the other.
pub fn sign_sums(x: &Array2<f64>, g: &Graph) -> Array2<i64> {
    let mut sums = Array2::<i64>::zeros(x.raw_dim());
    for &(a, b) in g.edges() {
        for k in 0..x.ncols() {
            let d = x[[a, k]] - x[[b, k]];
            let s = if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            };
            sums[[a, k]] += s;
            sums[[b, k]] -= s;
        }
    }
    sums
}

/// Continuous-time right-hand side dw/dt = -beta * sign_sums(x).
pub fn protocol_rhs(x: &Array2<f64>, g: &Graph, beta: f64) -> Array2<f64> {
    sign_sums(x, g).mapv(|s| -beta * s as f64)
}

/// Protocol state under forward Euler with exact integer accounting of the
/// quantized increments.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    beta: f64,
    h: f64,
    /// beta * h, the magnitude every full-step increment is a multiple of.
    quantum: f64,
    /// Float part of w: the initial state plus any partial-step increments.
    base: Array2<f64>,
    /// Integer count of quanta accumulated per entry; w = base + quantum *
    /// accum.
    accum: Array2<i64>,
    /// Current estimates x = w + phi, refreshed by the caller each step.
    pub x: Array2<f64>,
    /// Current time.
    pub t: f64,
}

impl ConsensusState {
    /// Fresh state with w = 0, as the convergence guarantee requires.
    pub fn new(n: usize, beta: f64, h: f64, t0: f64) -> ConsensusState {
        Self::with_initial_w(Array2::zeros((n, 6)), beta, h, t0)
    }

    /// State with a caller-chosen w(t0); only experiments probing the
    /// zero-initialization requirement should use this.
    pub fn with_initial_w(w0: Array2<f64>, beta: f64, h: f64, t0: f64) -> ConsensusState {
        let dim = w0.raw_dim();
        ConsensusState {
            beta,
            h,
            quantum: beta * h,
            base: w0,
            accum: Array2::zeros(dim),
            x: Array2::zeros(dim),
            t: t0,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Materializes the internal state w = base + quantum * accum.
    pub fn w(&self) -> Array2<f64> {
        let mut w = self.base.clone();
        w.zip_mut_with(&self.accum, |b, &a| *b += self.quantum * a as f64);
        w
    }

    /// Applies x = w + phi for the current signals.
    pub fn refresh_estimates(&mut self, phi: &Array2<f64>) {
        self.x = self.w() + phi;
    }

    /// One full Euler step w <- w - beta * h * signs, counted exactly.
    pub fn apply_signs(&mut self, signs: &Array2<i64>) {
        self.accum.zip_mut_with(signs, |a, &s| *a -= s);
        self.t += self.h;
    }

    /// Final truncated step of length dt < h; the increment lands in the
    /// float part.
    pub fn apply_signs_partial(&mut self, signs: &Array2<i64>, dt: f64) {
        let scale = self.beta * dt;
        self.base.zip_mut_with(signs, |b, &s| *b -= scale * s as f64);
        self.t += dt;
    }

    /// Worst column-sum magnitude of w; conserved at its initial value up
    /// to one rounding per entry.
    pub fn conservation_residual(&self) -> f64 {
        let w = self.w();
        let mut worst = 0.0_f64;
        for k in 0..w.ncols() {
            worst = worst.max(w.column(k).sum().abs());
        }
        worst
    }
}

/// Per-row deviation from the network-average signal,
/// x_tilde_i = x_i - mean over j of phi_j.
pub fn consensus_error(x: &Array2<f64>, phi: &Array2<f64>) -> Array2<f64> {
    let mean = phi.mean_axis(ndarray::Axis(0)).expect("nonempty signal");
    x - &mean.broadcast((x.nrows(), x.ncols())).unwrap()
}

/// Euclidean norm of an error array viewed as one stacked vector.
pub fn stacked_norm(e: &Array2<f64>) -> f64 {
    e.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The two published finite-time certificates; they disagree whenever
/// lambda2 differs from 1, so pessimistic callers take the max.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FiniteTimeBound {
    /// t0 + |x_tilde(t0)| / lambda2.
    pub by_lambda2: f64,
    /// t0 + |x_tilde(t0)| / sqrt(lambda2).
    pub by_sqrt_lambda2: f64,
}

impl FiniteTimeBound {
    /// The later of the two candidates; sound under either reading.
    pub fn certified(&self) -> f64 {
        self.by_lambda2.max(self.by_sqrt_lambda2)
    }
}

/// Finite-time certificates from the initial consensus error.
pub fn finite_time_bound(
    x_tilde0: &Array2<f64>,
    lambda2: f64,
    t0: f64,
) -> Result<FiniteTimeBound, ConsensusError> {
    if !(lambda2 > 0.0) {
        return Err(ConsensusError::NonPositiveLambdaBound(lambda2));
    }
    let norm = stacked_norm(x_tilde0);
    Ok(FiniteTimeBound {
        by_lambda2: t0 + norm / lambda2,
        by_sqrt_lambda2: t0 + norm / lambda2.sqrt(),
    })
}

/// Diagnostics from a signal-driven protocol run.
#[derive(Debug, Clone, Copy)]
pub struct SignalRun {
    /// First time the stacked consensus error dropped to the chatter floor,
    /// if it ever did.
    pub t_cross: Option<f64>,
    /// The chatter floor 10 * beta * h used for the crossing test.
    pub floor: f64,
    /// Final stacked consensus error.
    pub final_error: f64,
    /// Max stacked consensus error seen after the crossing.
    pub max_error_after_cross: f64,
    /// Max over steps of the conservation residual.
    pub max_conservation: f64,
    /// Max over steps of |mean(x) - mean(phi)| (sup over coordinates).
    pub max_mean_gap: f64,
    /// Steps where V = |x_tilde|^2 / 2 grew by more than the chatter
    /// allowance floor * |x_tilde|.
    pub lyapunov_violations: usize,
}

/// Runs the protocol against an arbitrary signal source phi(t) (rows are
/// nodes, 6 columns) on the grid t0 + k h, final partial step truncated to
/// land on tf. Used by convergence tests; the full tracking loop lives in
/// the engine.
pub fn simulate_signals<F>(
    g: &Graph,
    gains: &ProtocolGains,
    h: f64,
    t0: f64,
    tf: f64,
    mut phi_at: F,
) -> SignalRun
where
    F: FnMut(f64) -> Array2<f64>,
{
    let mut state = ConsensusState::new(g.n(), gains.beta, h, t0);
    let floor = tol::CHATTER_FLOOR_FACTOR * gains.beta * h;
    let (full_steps, partial_dt) = step_plan(t0, tf, h);

    let mut run = SignalRun {
        t_cross: None,
        floor,
        final_error: f64::NAN,
        max_error_after_cross: 0.0,
        max_conservation: 0.0,
        max_mean_gap: 0.0,
        lyapunov_violations: 0,
    };
    let mut prev_v: Option<(f64, f64)> = None;

    for k in 0..=full_steps {
        let t = t0 + k as f64 * h;
        let phi = phi_at(t);
        observe(&mut state, &phi, t, &mut run, &mut prev_v);
        if k < full_steps {
            let signs = sign_sums(&state.x, g);
            state.apply_signs(&signs);
        }
    }
    if let Some(dt) = partial_dt {
        let signs = sign_sums(&state.x, g);
        state.apply_signs_partial(&signs, dt);
        let phi = phi_at(tf);
        observe(&mut state, &phi, tf, &mut run, &mut prev_v);
    }
    run
}

fn observe(
    state: &mut ConsensusState,
    phi: &Array2<f64>,
    t: f64,
    run: &mut SignalRun,
    prev_v: &mut Option<(f64, f64)>,
) {
    state.refresh_estimates(phi);
    let err = consensus_error(&state.x, phi);
    let norm = stacked_norm(&err);
    run.final_error = norm;
    if run.t_cross.is_none() {
        if norm <= run.floor {
            run.t_cross = Some(t);
        }
    } else {
        run.max_error_after_cross = run.max_error_after_cross.max(norm);
    }
    run.max_conservation = run.max_conservation.max(state.conservation_residual());

    let x_mean = state.x.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let phi_mean = phi.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let gap = x_mean
        .iter()
        .zip(phi_mean.iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    run.max_mean_gap = run.max_mean_gap.max(gap);

    let v = 0.5 * norm * norm;
    if let Some((v_prev, norm_prev)) = *prev_v {
        if v > v_prev + run.floor * norm_prev {
            run.lyapunov_violations += 1;
        }
    }
    *prev_v = Some((v, norm));
}

/// Number of full steps of size h in [t0, tf], plus the truncated remainder
/// when tf is not on the grid.
pub fn step_plan(t0: f64, tf: f64, h: f64) -> (usize, Option<f64>) {
    assert!(h > 0.0 && tf >= t0, "degenerate time window");
    let span = tf - t0;
    let full = (span / h + 1e-9).floor();
    let dt = span - full * h;
    let partial = if dt > 1e-6 * h { Some(dt) } else { None };
    (full as usize, partial)
}
