//! Closed-loop simulation: target motion feeds bearing measurements, the
//! consensus protocol averages the packed information, and every node
//! solves for the target each step.
//!
//! The integrator is explicit Euler on the grid t_k = t0 + k h with a
//! truncated final step landing exactly on tf. The protocol right-hand
//! side is discontinuous, so higher-order smooth integrators buy nothing;
//! the achievable error floor scales with beta * h instead, and the
//! summary reports everything against that floor.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::consensus::{self, ConsensusState};
use crate::geometry::{self, GeometryError};
use crate::linalg::Vec2;
use crate::scenario::{PreparedScenario, ScenarioError};
use crate::tol;
use crate::tracker::{self, StackedObservation, TrackerError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("geometry failure at t = {t:.6}: {source}")]
    GeometryAt { t: f64, source: GeometryError },
    #[error("oracle solve failed at t = {t:.6}: {source}")]
    OracleAt { t: f64, source: TrackerError },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// One node's slice of a recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeStep {
    pub p_hat: [f64; 2],
    /// False while the node's information matrix is still singular
    /// (pre-consensus transient); p_hat then holds the fallback.
    pub valid: bool,
    /// Tracking error against the centralized oracle,
    /// sqrt(|p_star - p_hat|^2 / 2).
    pub rmse: f64,
    /// Consensus error against the true signal average,
    /// sqrt(|x_i - mean phi|^2 / 6).
    pub msce: f64,
}

/// Snapshot of the whole network at one time step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub nodes: Vec<NodeStep>,
    /// Centralized least-squares solution from the true geometry.
    pub p_star: [f64; 2],
    /// Ground-truth target position.
    pub p_true: [f64; 2],
    /// Stacked consensus error norm |x - 1 (x) mean phi|.
    pub x_tilde_norm: f64,
    /// Worst column-sum magnitude of the internal states w.
    pub conservation_residual: f64,
}

/// Aggregate results; statistics cover every step regardless of record
/// decimation.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub beta: f64,
    pub h: f64,
    /// 10 * beta * h, the scale discrete chatter cannot drop below.
    pub chatter_floor: f64,
    pub t_star_by_lambda2: f64,
    pub t_star_by_sqrt_lambda2: f64,
    pub t_star_certified: f64,
    /// First time the stacked consensus error reached analyzer floor.
    pub t_cross: Option<f64>,
    /// Per node, first time its oracle-relative error dropped below the
    /// floor.
    pub node_first_below_floor: Vec<Option<f64>>,
    /// Per node, mean error over the final tenth of the window.
    pub steady_state_rmse: Vec<f64>,
    pub steady_state_msce: Vec<f64>,
    pub steady_state_rmse_max: f64,
    pub steady_state_msce_max: f64,
    pub max_conservation_residual: f64,
    /// Worst gap between the mean estimate and the mean signal.
    pub max_mean_gap: f64,
    /// Post-certificate max over steps of
    /// max_i |p_i - p_star| / (beta h kappa(P_mean)).
    pub oracle_gap_ratio_max: f64,
    /// Post-certificate max of max_i |p_i - p_star|.
    pub oracle_gap_max: f64,
    /// Worst conditioning of the averaged information matrix.
    pub kappa_max: f64,
    /// Worst observability margin seen on the run grid.
    pub min_sigma: f64,
    /// Steps where the consensus energy grew beyond the chatter allowance.
    pub lyapunov_violations: usize,
    pub steps: usize,
    pub wall_seconds: f64,
    /// Populated when the run stopped early; records up to the abort are
    /// kept.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
}

struct Accumulators {
    t_cross: Option<f64>,
    node_first_below: Vec<Option<f64>>,
    steady_rmse_sum: Vec<f64>,
    steady_msce_sum: Vec<f64>,
    steady_samples: usize,
    max_conservation: f64,
    max_mean_gap: f64,
    oracle_gap_ratio_max: f64,
    oracle_gap_max: f64,
    kappa_max: f64,
    min_sigma: f64,
    lyapunov_violations: usize,
    prev_v: Option<(f64, f64)>,
}

/// Runs a prepared scenario to completion. Mid-run failures (conceivable
/// only for forced preparations) stop the loop and land in
/// `summary.aborted` with the records gathered so far.
pub fn run(prep: &PreparedScenario) -> RunOutput {
    let started = Instant::now();
    let cfg = &prep.config;
    let n = prep.graph.n();
    let beta = prep.gains.beta;
    let h = cfg.sim.h;
    let floor = tol::CHATTER_FLOOR_FACTOR * beta * h;
    let t_star = prep.bound.certified();
    let decimate = cfg.output.decimate.max(1);

    let centroid = {
        let mut c = Vec2::ZERO;
        for &s in &prep.sensors {
            c = c + s;
        }
        c * (1.0 / n as f64)
    };

    let (full_steps, partial_dt) = consensus::step_plan(cfg.sim.t0, cfg.sim.tf, h);
    let total_points = full_steps + 1 + partial_dt.is_some() as usize;
    let steady_from = (0.9 * (total_points - 1) as f64).floor() as usize;

    let mut state = ConsensusState::new(n, beta, h, cfg.sim.t0);
    let mut last_valid: Vec<Option<Vec2>> = vec![None; n];
    let mut records = Vec::with_capacity(total_points / decimate + 2);
    let mut acc = Accumulators {
        t_cross: None,
        node_first_below: vec![None; n],
        steady_rmse_sum: vec![0.0; n],
        steady_msce_sum: vec![0.0; n],
        steady_samples: 0,
        max_conservation: 0.0,
        max_mean_gap: 0.0,
        oracle_gap_ratio_max: 0.0,
        oracle_gap_max: 0.0,
        kappa_max: 0.0,
        min_sigma: f64::INFINITY,
        lyapunov_violations: 0,
        prev_v: None,
    };
    let mut aborted = None;

    for point in 0..total_points {
        let is_last = point == total_points - 1;
        let t = if point <= full_steps {
            cfg.sim.t0 + point as f64 * h
        } else {
            cfg.sim.tf
        };

        let step_result = advance_one(
            prep, &mut state, &mut last_valid, centroid, t, point, floor, t_star, steady_from,
            &mut acc,
        );
        match step_result {
            Ok(record) => {
                if point % decimate == 0 || is_last {
                    records.push(record);
                }
            }
            Err(err) => {
                aborted = Some(err.to_string());
                break;
            }
        }
        if !is_last {
            let signs = consensus::sign_sums(&state.x, &prep.graph);
            if point < full_steps {
                state.apply_signs(&signs);
            } else {
                state.apply_signs_partial(&signs, partial_dt.expect("last transition is partial"));
            }
        }
    }

    let steady_norm = 1.0 / acc.steady_samples.max(1) as f64;
    let steady_state_rmse: Vec<f64> = acc.steady_rmse_sum.iter().map(|s| s * steady_norm).collect();
    let steady_state_msce: Vec<f64> = acc.steady_msce_sum.iter().map(|s| s * steady_norm).collect();
    let summary = RunSummary {
        beta,
        h,
        chatter_floor: floor,
        t_star_by_lambda2: prep.bound.by_lambda2,
        t_star_by_sqrt_lambda2: prep.bound.by_sqrt_lambda2,
        t_star_certified: t_star,
        t_cross: acc.t_cross,
        node_first_below_floor: acc.node_first_below,
        steady_state_rmse_max: steady_state_rmse.iter().fold(0.0_f64, |m, &v| m.max(v)),
        steady_state_msce_max: steady_state_msce.iter().fold(0.0_f64, |m, &v| m.max(v)),
        steady_state_rmse,
        steady_state_msce,
        max_conservation_residual: acc.max_conservation,
        max_mean_gap: acc.max_mean_gap,
        oracle_gap_ratio_max: acc.oracle_gap_ratio_max,
        oracle_gap_max: acc.oracle_gap_max,
        kappa_max: acc.kappa_max,
        min_sigma: acc.min_sigma,
        lyapunov_violations: acc.lyapunov_violations,
        steps: total_points - 1,
        wall_seconds: started.elapsed().as_secs_f64(),
        aborted,
    };
    RunOutput { records, summary }
}

#[allow(clippy::too_many_arguments)]
fn advance_one(
    prep: &PreparedScenario,
    state: &mut ConsensusState,
    last_valid: &mut [Option<Vec2>],
    centroid: Vec2,
    t: f64,
    point: usize,
    floor: f64,
    t_star: f64,
    steady_from: usize,
    acc: &mut Accumulators,
) -> Result<StepRecord, EngineError> {
    let n = prep.graph.n();
    let (p_true, _) = prep.config.trajectory.sample(t)?;
    let infos = geometry::measure_all(p_true, &prep.sensors)
        .map_err(|source| EngineError::GeometryAt { t, source })?;
    let phi = geometry::packed_matrix(&infos);
    state.refresh_estimates(&phi);

    let obs = StackedObservation::from_information(&infos);
    acc.min_sigma = acc.min_sigma.min(obs.sigma_min());
    let p_star =
        tracker::centralized_solution(&obs).map_err(|source| EngineError::OracleAt { t, source })?;

    let (p_mean, _) = tracker::average_information(&infos);
    let kappa = p_mean.sym_condition();
    acc.kappa_max = acc.kappa_max.max(kappa);

    let x_tilde = consensus::consensus_error(&state.x, &phi);
    let x_tilde_norm = consensus::stacked_norm(&x_tilde);
    let conservation = state.conservation_residual();
    acc.max_conservation = acc.max_conservation.max(conservation);

    if acc.t_cross.is_none() && x_tilde_norm <= floor {
        acc.t_cross = Some(t);
    }

    let x_mean = state.x.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let phi_mean = phi.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let mean_gap = x_mean
        .iter()
        .zip(phi_mean.iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    acc.max_mean_gap = acc.max_mean_gap.max(mean_gap);

    let v = 0.5 * x_tilde_norm * x_tilde_norm;
    if let Some((v_prev, norm_prev)) = acc.prev_v {
        if v > v_prev + floor * norm_prev {
            acc.lyapunov_violations += 1;
        }
    }
    acc.prev_v = Some((v, x_tilde_norm));

    let mut nodes = Vec::with_capacity(n);
    let mut worst_gap = 0.0_f64;
    for i in 0..n {
        let mut packed = [0.0_f64; 6];
        for (k, slot) in packed.iter_mut().enumerate() {
            *slot = state.x[[i, k]];
        }
        let fallback = last_valid[i].unwrap_or(centroid);
        let est = tracker::local_solution(i, &packed, fallback);
        if est.valid {
            last_valid[i] = Some(est.p_hat);
        }
        let gap = est.p_hat.dist(p_star);
        worst_gap = worst_gap.max(gap);
        let rmse = gap / std::f64::consts::SQRT_2;
        let msce = x_tilde.row(i).iter().map(|v| v * v).sum::<f64>().sqrt() / 6.0_f64.sqrt();
        if acc.node_first_below[i].is_none() && rmse < floor {
            acc.node_first_below[i] = Some(t);
        }
        if point >= steady_from {
            acc.steady_rmse_sum[i] += rmse;
            acc.steady_msce_sum[i] += msce;
        }
        nodes.push(NodeStep {
            p_hat: est.p_hat.into(),
            valid: est.valid,
            rmse,
            msce,
        });
    }
    if point >= steady_from {
        acc.steady_samples += 1;
    }
    if t >= t_star {
        acc.oracle_gap_max = acc.oracle_gap_max.max(worst_gap);
        let denom = state.beta() * state.step_size() * kappa;
        acc.oracle_gap_ratio_max = acc.oracle_gap_ratio_max.max(worst_gap / denom);
    }

    Ok(StepRecord {
        t,
        nodes,
        p_star: p_star.into(),
        p_true: p_true.into(),
        x_tilde_norm,
        conservation_residual: conservation,
    })
}

/// Which scenario knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Beta,
    H,
    Lambda2Hat,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "h" => Ok(SweepParam::H),
            "lambda2_hat" => Ok(SweepParam::Lambda2Hat),
            other => Err(format!(
                "unknown sweep parameter {other:?} (expected beta, h, or lambda2_hat)"
            )),
        }
    }
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::H => "h",
            SweepParam::Lambda2Hat => "lambda2_hat",
        }
    }
}

/// One sweep result row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub beta: f64,
    pub h: f64,
    pub converged: bool,
    pub t_cross: Option<f64>,
    pub t_star_certified: f64,
    pub steady_state_rmse_max: f64,
    pub steady_state_msce_max: f64,
    pub max_conservation_residual: f64,
}

/// Runs the scenario once per value, in input order. Gain sweeps are
/// force-prepared so deliberately under-gained protocols (beta below the
/// bound, even zero) can be studied; other parameters must still validate.
pub fn sweep(
    cfg: &crate::scenario::ScenarioConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>, ScenarioError> {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut v_cfg = cfg.clone();
        let forced = match param {
            SweepParam::Beta => {
                v_cfg.bounds.beta = Some(value);
                true
            }
            SweepParam::H => {
                v_cfg.sim.h = value;
                false
            }
            SweepParam::Lambda2Hat => {
                v_cfg.bounds.lambda2_hat = value;
                false
            }
        };
        let prep = if forced {
            crate::scenario::prepare_forced(&v_cfg)?
        } else {
            crate::scenario::prepare(&v_cfg)?
        };
        let out = run(&prep);
        rows.push(SweepRow {
            value,
            beta: out.summary.beta,
            h: out.summary.h,
            converged: out.summary.t_cross.is_some(),
            t_cross: out.summary.t_cross,
            t_star_certified: out.summary.t_star_certified,
            steady_state_rmse_max: out.summary.steady_state_rmse_max,
            steady_state_msce_max: out.summary.steady_state_msce_max,
            max_conservation_residual: out.summary.max_conservation_residual,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{self, presets};

    fn quick_arc() -> scenario::ScenarioConfig {
        // The bundled arc scenario at a coarser step so unit tests stay
        // fast; acceptance runs the full-resolution version.
        let mut cfg = presets::arc_crossing();
        cfg.sim.h = 1e-3;
        cfg
    }

    #[test]
    fn static_target_locks_all_nodes_to_truth() {
        let prep = scenario::prepare(&presets::stationary_target()).unwrap();
        let out = run(&prep);
        assert!(out.summary.aborted.is_none());
        let floor = out.summary.chatter_floor;
        let t_cross = out.summary.t_cross.expect("static run must converge");
        assert!(
            t_cross <= out.summary.t_star_certified,
            "crossed {t_cross} vs certificate {}",
            out.summary.t_star_certified
        );
        // After consensus every node pins the oracle, and the oracle pins
        // the truth.
        let last = out.records.last().unwrap();
        let p_true = Vec2::from(last.p_true);
        let p_star = Vec2::from(last.p_star);
        assert!(p_star.dist(p_true) <= 1e-9);
        for node in &last.nodes {
            assert!(node.valid);
            assert!(Vec2::from(node.p_hat).dist(p_true) <= floor);
            assert!(node.msce <= floor);
        }
        assert!(out.summary.max_conservation_residual <= 1e-10);
        assert!(out.summary.max_mean_gap <= 1e-10);
        assert_eq!(out.summary.lyapunov_violations, 0);
    }

    #[test]
    fn arc_run_reaches_floor_and_matches_oracle() {
        let prep = scenario::prepare(&quick_arc()).unwrap();
        let out = run(&prep);
        assert!(out.summary.aborted.is_none());
        let t_cross = out.summary.t_cross.expect("must converge");
        assert!(t_cross <= out.summary.t_star_certified);
        // Steady error sits in the chatter band around beta h.
        let scale = out.summary.beta * out.summary.h;
        let steady = out.summary.steady_state_rmse_max;
        assert!(
            steady >= 0.1 * scale && steady <= 100.0 * scale,
            "steady rmse {steady} vs beta*h {scale}"
        );
        assert!(out.summary.oracle_gap_ratio_max <= 100.0);
        assert!(out.summary.max_conservation_residual <= 1e-10);
        assert_eq!(out.summary.lyapunov_violations, 0);
        assert!(out.summary.kappa_max < 10.0);
        assert!(out.summary.min_sigma >= 0.05);
    }

    #[test]
    fn metrics_are_internally_consistent() {
        // Per-node consensus errors and the stacked norm are computed by
        // different accumulation paths; they must agree:
        // sum of 6 * msce_i^2 = |x_tilde|^2.
        let prep = scenario::prepare(&presets::constant_velocity()).unwrap();
        let out = run(&prep);
        for rec in &out.records {
            let sum: f64 = rec.nodes.iter().map(|n| 6.0 * n.msce * n.msce).sum();
            let norm2 = rec.x_tilde_norm * rec.x_tilde_norm;
            assert!(
                (sum - norm2).abs() <= 1e-13 * (1.0 + norm2),
                "t = {}: {sum} vs {norm2}",
                rec.t
            );
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let prep = scenario::prepare(&presets::stationary_target()).unwrap();
        let a = run(&prep);
        let b = run(&prep);
        assert_eq!(a.records, b.records);
        assert_eq!(
            a.summary.steady_state_rmse_max,
            b.summary.steady_state_rmse_max
        );
    }

    #[test]
    fn decimation_thins_records_but_keeps_endpoints() {
        let mut cfg = presets::stationary_target();
        cfg.output.decimate = 100;
        let prep = scenario::prepare(&cfg).unwrap();
        let out = run(&prep);
        // Points 0, 100, ..., 6000; the endpoint lands on the grid.
        assert_eq!(out.records.len(), 61);
        assert_eq!(out.records.first().unwrap().t, 0.0);
        assert_eq!(out.records.last().unwrap().t, 6.0);
        assert_eq!(out.summary.steps, 6000);

        // A decimation that misses the endpoint must still record it.
        cfg.output.decimate = 7;
        let out = run(&scenario::prepare(&cfg).unwrap());
        assert_eq!(out.records.len(), 6000 / 7 + 2);
        assert_eq!(out.records.last().unwrap().t, 6.0);
    }

    #[test]
    fn velocity_switch_still_tracks() {
        let prep = scenario::prepare(&presets::velocity_switch()).unwrap();
        let out = run(&prep);
        assert!(out.summary.t_cross.is_some());
        assert!(out.summary.max_conservation_residual <= 1e-10);
        // The oracle still matches truth pointwise (noiseless geometry is
        // agnostic to velocity jumps).
        for rec in out.records.iter().rev().take(50) {
            assert!(Vec2::from(rec.p_star).dist(Vec2::from(rec.p_true)) <= 1e-9);
        }
    }

    #[test]
    fn abort_is_recorded_with_partial_records() {
        // Hand-built prepared scenario whose trajectory dives into a
        // sensor mid-run; validation would refuse it, the engine must stop
        // cleanly instead of panicking.
        let cfg = scenario::ScenarioConfig {
            graph: scenario::GraphSpec {
                n: 2,
                edges: vec![[0, 1]],
            },
            sensors: vec![[1.0, 0.0], [0.0, 1.0]],
            trajectory: scenario::Trajectory::PiecewiseConstantVelocity {
                start: [0.0, 0.0],
                segments: vec![scenario::VelocitySegment {
                    duration: 2.0,
                    velocity: [1.0, 0.0],
                }],
            },
            sim: scenario::SimParams {
                h: 1e-2,
                t0: 0.0,
                tf: 2.0,
            },
            bounds: scenario::BoundsSpec {
                n_hat: 2,
                lambda2_hat: 1.0,
                gamma: Some(10.0),
                beta: None,
            },
            output: scenario::OutputSpec::default(),
        };
        let graph = crate::graph::Graph::new(2, &[(0, 1)]).unwrap();
        let gains =
            crate::consensus::ProtocolGains::from_rate_bound(10.0, 2, 1.0).unwrap();
        let prep = scenario::PreparedScenario {
            config: cfg,
            graph,
            sensors: vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
            gains,
            certificate: scenario::GammaCertificate {
                raw_sup: 0.0,
                certified: 10.0,
                grid_step: 1e-3,
                min_clearance: 0.0,
                min_sigma: 1.0,
            },
            bound: crate::consensus::FiniteTimeBound {
                by_lambda2: 1.0,
                by_sqrt_lambda2: 1.0,
            },
            report: scenario::ValidationReport {
                checks: vec![],
                metrics: None,
            },
        };
        let out = run(&prep);
        let message = out.summary.aborted.expect("run must abort at the sensor");
        assert!(message.contains("sensor 0"), "{message}");
        assert!(!out.records.is_empty());
        assert!(out.records.last().unwrap().t < 2.0);
    }

    #[test]
    fn gain_sweep_flags_disabled_protocol() {
        let mut cfg = presets::stationary_target();
        cfg.sim.tf = 2.0;
        let required = {
            let prep = scenario::prepare(&cfg).unwrap();
            prep.gains.required_beta()
        };
        let rows = sweep(&cfg, SweepParam::Beta, &[0.0, required, 2.0 * required]).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(!rows[0].converged, "beta = 0 cannot converge");
        assert!(rows[1].converged && rows[1].t_cross.unwrap() <= rows[1].t_star_certified);
        assert!(rows[2].converged && rows[2].t_cross.unwrap() <= rows[2].t_star_certified);
    }

    #[test]
    fn step_sweep_scales_the_floor() {
        let mut cfg = presets::stationary_target();
        cfg.sim.tf = 4.0;
        let rows = sweep(&cfg, SweepParam::H, &[1e-3, 5e-4]).unwrap();
        let ratio = rows[0].steady_state_msce_max / rows[1].steady_state_msce_max;
        // Halving h should roughly halve the chatter floor.
        assert!(
            ratio > 1.3 && ratio < 3.0,
            "floor ratio {ratio} out of family"
        );
    }

    #[test]
    fn sweep_param_parsing() {
        assert_eq!("beta".parse::<SweepParam>().unwrap(), SweepParam::Beta);
        assert_eq!("h".parse::<SweepParam>().unwrap(), SweepParam::H);
        assert_eq!(
            "lambda2_hat".parse::<SweepParam>().unwrap(),
            SweepParam::Lambda2Hat
        );
        assert!("gamma".parse::<SweepParam>().is_err());
    }
}
