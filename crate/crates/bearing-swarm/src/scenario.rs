//! Scenario definition, validation, and certification.
//!
//! A scenario bundles the network, the sensor layout, a target trajectory,
//! and the integration window, plus the conservative bounds (n_hat,
//! lambda2_hat) the protocol is allowed to know. Before a run starts, the
//! validator certifies the two standing assumptions the convergence theory
//! needs:
//!
//! - observability: the bearing lines must pin down the target (smallest
//!   singular value of the stacked observation matrix stays above a
//!   margin),
//! - bounded signal rates: the packed local signals must have a finite,
//!   known rate bound gamma, obtained here by a dense finite-difference
//!   sweep inflated by 25%, or claimed explicitly in the config.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{self, ConsensusError, FiniteTimeBound, ProtocolGains};
use crate::geometry::{self, GeometryError};
use crate::graph::{Graph, GraphError};
use crate::linalg::Vec2;
use crate::tol;
use crate::tracker;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("time {t} outside trajectory window [{t0}, {tf}]")]
    TimeOutOfWindow { t: f64, t0: f64, tf: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("degenerate simulation window: h = {h}, t0 = {t0}, tf = {tf}")]
    BadWindow { h: f64, t0: f64, tf: f64 },
    #[error("scenario lists {sensors} sensors for {n} graph nodes")]
    SensorCountMismatch { sensors: usize, n: usize },
    #[error(
        "trajectory passes within {distance:.3e} of sensor {sensor} at t = {t:.6}; \
         rate certification refused"
    )]
    ClearanceViolation { t: f64, sensor: usize, distance: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error("validation failed: {0}")]
    ValidationFailed(Box<ValidationReport>),
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One sinusoidal component of a coordinate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidTerm {
    pub amplitude: [f64; 2],
    pub omega: [f64; 2],
    #[serde(default)]
    pub phase: [f64; 2],
}

/// One leg of a piecewise-constant-velocity path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySegment {
    pub duration: f64,
    pub velocity: [f64; 2],
}

/// Target motion model. All kinds expose exact position and velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Trajectory {
    /// C1 interpolating spline through timed waypoints (cubic Hermite with
    /// finite-difference tangents; one-sided at the ends).
    WaypointSpline {
        times: Vec<f64>,
        points: Vec<[f64; 2]>,
    },
    /// center + drift * t + sum of sinusoidal terms, per coordinate.
    /// Smooth everywhere; covers static targets (no drift, no terms) and
    /// straight-line motion (no terms).
    Sinusoid {
        center: [f64; 2],
        #[serde(default)]
        drift: [f64; 2],
        #[serde(default)]
        terms: Vec<SinusoidTerm>,
    },
    /// Constant-velocity legs starting at t = 0. Velocity jumps at the leg
    /// boundaries put this outside the smooth-signal assumption; the
    /// validator flags it.
    PiecewiseConstantVelocity {
        start: [f64; 2],
        segments: Vec<VelocitySegment>,
    },
}

impl Trajectory {
    /// Time window on which the trajectory is defined.
    pub fn coverage(&self) -> (f64, f64) {
        match self {
            Trajectory::WaypointSpline { times, .. } => (
                times.first().copied().unwrap_or(0.0),
                times.last().copied().unwrap_or(0.0),
            ),
            Trajectory::Sinusoid { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Trajectory::PiecewiseConstantVelocity { segments, .. } => {
                (0.0, segments.iter().map(|s| s.duration).sum())
            }
        }
    }

    /// True when the velocity is discontinuous somewhere in the window.
    pub fn has_velocity_jumps(&self) -> bool {
        match self {
            Trajectory::PiecewiseConstantVelocity { segments, .. } => segments
                .windows(2)
                .any(|w| w[0].velocity != w[1].velocity),
            _ => false,
        }
    }

    /// Rejects malformed parameter sets (unsorted waypoint times, length
    /// mismatches, nonpositive leg durations).
    pub fn check_well_formed(&self) -> Result<(), ScenarioError> {
        match self {
            Trajectory::WaypointSpline { times, points } => {
                if times.len() != points.len() {
                    return Err(ScenarioError::InvalidTrajectory(format!(
                        "{} waypoint times for {} points",
                        times.len(),
                        points.len()
                    )));
                }
                if times.len() < 2 {
                    return Err(ScenarioError::InvalidTrajectory(
                        "waypoint spline needs at least 2 waypoints".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(ScenarioError::InvalidTrajectory(
                        "waypoint times must be strictly increasing".into(),
                    ));
                }
            }
            Trajectory::Sinusoid { .. } => {}
            Trajectory::PiecewiseConstantVelocity { segments, .. } => {
                if segments.is_empty() {
                    return Err(ScenarioError::InvalidTrajectory(
                        "piecewise trajectory needs at least one segment".into(),
                    ));
                }
                if segments.iter().any(|s| !(s.duration > 0.0)) {
                    return Err(ScenarioError::InvalidTrajectory(
                        "segment durations must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Exact position and velocity at time t.
    pub fn sample(&self, t: f64) -> Result<(Vec2, Vec2), ScenarioError> {
        let (t0, tf) = self.coverage();
        // Tiny slack so windows assembled from float sums still cover their
        // nominal endpoints.
        if t < t0 - 1e-9 || t > tf + 1e-9 {
            return Err(ScenarioError::TimeOutOfWindow { t, t0, tf });
        }
        match self {
            Trajectory::WaypointSpline { times, points } => {
                Ok(sample_spline(times, points, t.clamp(t0, tf)))
            }
            Trajectory::Sinusoid {
                center,
                drift,
                terms,
            } => {
                let mut p = Vec2::from(*center) + Vec2::from(*drift) * t;
                let mut v = Vec2::from(*drift);
                for term in terms {
                    p.x += term.amplitude[0] * (term.omega[0] * t + term.phase[0]).sin();
                    p.y += term.amplitude[1] * (term.omega[1] * t + term.phase[1]).sin();
                    v.x += term.amplitude[0] * term.omega[0] * (term.omega[0] * t + term.phase[0]).cos();
                    v.y += term.amplitude[1] * term.omega[1] * (term.omega[1] * t + term.phase[1]).cos();
                }
                Ok((p, v))
            }
            Trajectory::PiecewiseConstantVelocity { start, segments } => {
                // Velocity is right-continuous at leg boundaries; the
                // window end takes the final leg's velocity.
                let mut p = Vec2::from(*start);
                let mut remaining = t.clamp(0.0, tf);
                for seg in segments {
                    let v = Vec2::from(seg.velocity);
                    if remaining < seg.duration {
                        return Ok((p + v * remaining, v));
                    }
                    p = p + v * seg.duration;
                    remaining -= seg.duration;
                }
                let v = Vec2::from(segments.last().expect("checked nonempty").velocity);
                Ok((p, v))
            }
        }
    }
}

/// Cubic Hermite evaluation with finite-difference tangents.
fn sample_spline(times: &[f64], points: &[[f64; 2]], t: f64) -> (Vec2, Vec2) {
    let n = times.len();
    // Segment index such that times[k] <= t <= times[k + 1].
    let k = match times.partition_point(|&tk| tk <= t) {
        0 => 0,
        idx if idx >= n => n - 2,
        idx => idx - 1,
    };

    let tangent = |i: usize| -> Vec2 {
        let (lo, hi) = if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        (Vec2::from(points[hi]) - Vec2::from(points[lo])) * (1.0 / (times[hi] - times[lo]))
    };

    let dt = times[k + 1] - times[k];
    let s = (t - times[k]) / dt;
    let p0 = Vec2::from(points[k]);
    let p1 = Vec2::from(points[k + 1]);
    let m0 = tangent(k);
    let m1 = tangent(k + 1);

    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let p = p0 * h00 + m0 * (h10 * dt) + p1 * h01 + m1 * (h11 * dt);

    let d00 = (6.0 * s2 - 6.0 * s) / dt;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / dt;
    let d11 = 3.0 * s2 - 2.0 * s;
    let v = p0 * d00 + m0 * d10 + p1 * d01 + m1 * d11;
    (p, v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    /// Integrator step.
    pub h: f64,
    pub t0: f64,
    pub tf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    /// Node-count upper bound the protocol may use.
    pub n_hat: usize,
    /// Connectivity lower bound the protocol may use.
    pub lambda2_hat: f64,
    /// Claimed signal-rate bound. When present it replaces the measured
    /// certificate (the validator still checks it against the measured
    /// rates).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Manual gain override; below-bound values fail validation and need a
    /// forced run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Keep every k-th record (summary statistics always use every step).
    pub decimate: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { decimate: 10 }
    }
}

/// A complete experiment description, the unit the CLI loads and runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: GraphSpec,
    pub sensors: Vec<[f64; 2]>,
    pub trajectory: Trajectory,
    pub sim: SimParams,
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn sensors_vec(&self) -> Vec<Vec2> {
        self.sensors.iter().map(|&s| Vec2::from(s)).collect()
    }

    fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.graph.edges.iter().map(|e| (e[0], e[1])).collect()
    }
}

/// Certified signal-rate bound plus the margins observed while measuring
/// it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaCertificate {
    /// Max finite-difference rate seen on the grid, sup over nodes and
    /// packed coordinates.
    pub raw_sup: f64,
    /// The bound handed to the gain rule: 1.25 * raw_sup (floored at a
    /// small positive value so static targets keep a valid bound), or the
    /// config's claimed value verbatim.
    pub certified: f64,
    /// Grid resolution used, at most a tenth of the integrator step.
    pub grid_step: f64,
    /// Closest sensor approach seen along the trajectory.
    pub min_clearance: f64,
    /// Worst observability margin seen along the trajectory.
    pub min_sigma: f64,
}

/// Measures signal rates, sensor clearance, and observability along the
/// whole window in one streaming pass over a grid of step <= h/10 that
/// lands exactly on tf.
pub fn certify_gamma(cfg: &ScenarioConfig) -> Result<GammaCertificate, ScenarioError> {
    let sensors = cfg.sensors_vec();
    let span = cfg.sim.tf - cfg.sim.t0;
    if !(cfg.sim.h > 0.0) || !(span > 0.0) {
        return Err(ScenarioError::BadWindow {
            h: cfg.sim.h,
            t0: cfg.sim.t0,
            tf: cfg.sim.tf,
        });
    }
    let steps = (span / (cfg.sim.h / tol::CERT_GRID_REFINE)).ceil() as usize;
    let g = span / steps as f64;

    let mut min_clearance = f64::INFINITY;
    let mut min_sigma = f64::INFINITY;
    let mut raw_sup = 0.0_f64;
    // Sliding window of packed signals for central differences.
    let mut window: [Option<ndarray::Array2<f64>>; 3] = [None, None, None];

    for j in 0..=steps {
        let t = if j == steps {
            cfg.sim.tf
        } else {
            cfg.sim.t0 + j as f64 * g
        };
        let (p, _) = cfg.trajectory.sample(t)?;
        for (i, &s) in sensors.iter().enumerate() {
            let d = p.dist(s);
            min_clearance = min_clearance.min(d);
            if d < tol::MIN_CLEARANCE {
                return Err(ScenarioError::ClearanceViolation {
                    t,
                    sensor: i,
                    distance: d,
                });
            }
        }
        let infos = geometry::measure_all(p, &sensors)?;
        min_sigma =
            min_sigma.min(tracker::StackedObservation::from_information(&infos).sigma_min());
        let packed = geometry::packed_matrix(&infos);

        window.rotate_left(1);
        window[2] = Some(packed);
        match j {
            0 => {}
            1 => {
                // One-sided rate at the left endpoint.
                let fwd = (window[2].as_ref().unwrap() - window[1].as_ref().unwrap()) / g;
                raw_sup = raw_sup.max(max_abs_entry(&fwd));
            }
            _ => {
                let central =
                    (window[2].as_ref().unwrap() - window[0].as_ref().unwrap()) / (2.0 * g);
                raw_sup = raw_sup.max(max_abs_entry(&central));
            }
        }
    }
    // One-sided rate at the right endpoint.
    let back = (window[2].as_ref().unwrap() - window[1].as_ref().unwrap()) / g;
    raw_sup = raw_sup.max(max_abs_entry(&back));

    let certified = (tol::GAMMA_INFLATION * raw_sup).max(tol::GAMMA_FLOOR);
    Ok(GammaCertificate {
        raw_sup,
        certified,
        grid_step: g,
        min_clearance,
        min_sigma,
    })
}

fn max_abs_entry(a: &ndarray::Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// One validation check: a named pass/fail with explanation. Advisory
/// checks document model-assumption caveats without blocking the run.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub required: bool,
    pub passed: bool,
    pub detail: String,
}

/// Scalar facts about a validated scenario, echoed into reports and run
/// summaries.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioMetrics {
    pub n: usize,
    pub n_hat: usize,
    pub lambda2: f64,
    pub lambda2_hat: f64,
    pub gamma_raw: f64,
    pub gamma_certified: f64,
    pub beta: f64,
    pub beta_required: f64,
    pub min_clearance: f64,
    pub min_sigma: f64,
    /// Stacked consensus error norm at t0 (internal states start at zero).
    pub initial_error_norm: f64,
    pub t_star_by_lambda2: f64,
    pub t_star_by_sqrt_lambda2: f64,
    pub t_star_certified: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
    pub metrics: Option<ScenarioMetrics>,
}

impl ValidationReport {
    /// True when every required check passed (advisory findings do not
    /// block).
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn failed_required(&self) -> Vec<&ValidationCheck> {
        self.checks
            .iter()
            .filter(|c| c.required && !c.passed)
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed: Vec<&str> = self
            .failed_required()
            .iter()
            .map(|c| c.name)
            .collect();
        write!(f, "failed checks: {}", failed.join(", "))
    }
}

/// Everything the engine needs to run: validated config, constructed
/// graph, certified gains, and the finite-time certificate.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub config: ScenarioConfig,
    pub graph: Graph,
    pub sensors: Vec<Vec2>,
    pub gains: ProtocolGains,
    pub certificate: GammaCertificate,
    pub bound: FiniteTimeBound,
    pub report: ValidationReport,
}

/// Runs every validation check. Malformed configs (bad edge lists, sensor
/// count mismatches, broken trajectories) are hard errors; assumption
/// violations come back as failed checks in the report.
pub fn validate_scenario(cfg: &ScenarioConfig) -> Result<ValidationReport, ScenarioError> {
    cfg.trajectory.check_well_formed()?;
    if !(cfg.sim.h > 0.0) || !(cfg.sim.tf > cfg.sim.t0) {
        return Err(ScenarioError::BadWindow {
            h: cfg.sim.h,
            t0: cfg.sim.t0,
            tf: cfg.sim.tf,
        });
    }
    if cfg.sensors.len() != cfg.graph.n {
        return Err(ScenarioError::SensorCountMismatch {
            sensors: cfg.sensors.len(),
            n: cfg.graph.n,
        });
    }
    let graph = Graph::allow_disconnected(cfg.graph.n, &cfg.edge_pairs())?;

    let mut checks = Vec::new();
    let connected = graph.is_connected();
    checks.push(ValidationCheck {
        name: "network-connectivity",
        required: true,
        passed: connected,
        detail: if connected {
            format!("connected, algebraic connectivity {:.6}", graph.algebraic_connectivity())
        } else {
            "graph is not connected; consensus cannot reach isolated nodes".into()
        },
    });

    let n_ok = cfg.bounds.n_hat >= graph.n();
    checks.push(ValidationCheck {
        name: "node-count-bound",
        required: true,
        passed: n_ok,
        detail: if n_ok {
            format!("n_hat = {} >= n = {}", cfg.bounds.n_hat, graph.n())
        } else {
            format!("n_hat < n: {} < {}", cfg.bounds.n_hat, graph.n())
        },
    });

    let lambda2 = graph.algebraic_connectivity();
    let l_ok = cfg.bounds.lambda2_hat > 0.0
        && cfg.bounds.lambda2_hat <= lambda2 + tol::LAMBDA2_POSITIVE_TOL;
    checks.push(ValidationCheck {
        name: "spectral-bound",
        required: true,
        passed: l_ok,
        detail: format!(
            "lambda2_hat = {} vs actual lambda2 = {:.6}",
            cfg.bounds.lambda2_hat, lambda2
        ),
    });

    let (cov0, cov1) = cfg.trajectory.coverage();
    let window_ok = cfg.sim.t0 >= cov0 - 1e-9 && cfg.sim.tf <= cov1 + 1e-9;
    checks.push(ValidationCheck {
        name: "window-coverage",
        required: true,
        passed: window_ok,
        detail: format!(
            "simulation [{}, {}] vs trajectory coverage [{}, {}]",
            cfg.sim.t0, cfg.sim.tf, cov0, cov1
        ),
    });

    let smooth = !cfg.trajectory.has_velocity_jumps();
    checks.push(ValidationCheck {
        name: "smooth-trajectory",
        required: false,
        passed: smooth,
        detail: if smooth {
            "velocity continuous on the window".into()
        } else {
            "velocity jumps at segment boundaries: signal rates are bounded but not \
             continuous, so the finite-time certificate is heuristic here"
                .into()
        },
    });

    if !window_ok {
        for name in [
            "target-clearance",
            "observability-margin",
            "rate-certificate",
            "gain-bound",
        ] {
            checks.push(ValidationCheck {
                name,
                required: true,
                passed: false,
                detail: "not evaluated: trajectory does not cover the simulation window".into(),
            });
        }
        return Ok(ValidationReport {
            checks,
            metrics: None,
        });
    }

    let cert = match certify_gamma(cfg) {
        Ok(cert) => cert,
        Err(ScenarioError::ClearanceViolation {
            t,
            sensor,
            distance,
        }) => {
            checks.push(ValidationCheck {
                name: "target-clearance",
                required: true,
                passed: false,
                detail: format!(
                    "trajectory within {distance:.3e} of sensor {sensor} at t = {t:.6} \
                     (minimum {:.3e})",
                    tol::MIN_CLEARANCE
                ),
            });
            for name in ["observability-margin", "rate-certificate", "gain-bound"] {
                checks.push(ValidationCheck {
                    name,
                    required: true,
                    passed: false,
                    detail: "not evaluated: clearance violation".into(),
                });
            }
            return Ok(ValidationReport {
                checks,
                metrics: None,
            });
        }
        Err(other) => return Err(other),
    };

    checks.push(ValidationCheck {
        name: "target-clearance",
        required: true,
        passed: true,
        detail: format!(
            "closest sensor approach {:.4} (minimum {:.3e})",
            cert.min_clearance,
            tol::MIN_CLEARANCE
        ),
    });

    let sigma_ok = cert.min_sigma >= tol::OBSERVABILITY_MIN;
    checks.push(ValidationCheck {
        name: "observability-margin",
        required: true,
        passed: sigma_ok,
        detail: format!(
            "worst sigma_min(H) = {:.4} (minimum {})",
            cert.min_sigma,
            tol::OBSERVABILITY_MIN
        ),
    });

    // A claimed rate bound must dominate the measured rates; a measured
    // certificate passes by construction.
    let (gamma_certified, rate_ok, rate_detail) = match cfg.bounds.gamma {
        Some(claimed) => (
            claimed,
            claimed >= cert.raw_sup,
            format!(
                "claimed gamma = {} vs measured sup {:.4}",
                claimed, cert.raw_sup
            ),
        ),
        None => (
            cert.certified,
            true,
            format!(
                "certified gamma = {:.4} (measured sup {:.4}, inflated 25%)",
                cert.certified, cert.raw_sup
            ),
        ),
    };
    checks.push(ValidationCheck {
        name: "rate-certificate",
        required: true,
        passed: rate_ok,
        detail: rate_detail,
    });

    let gains = match cfg.bounds.beta {
        Some(beta) => ProtocolGains::with_beta(
            beta,
            gamma_certified,
            cfg.bounds.n_hat,
            cfg.bounds.lambda2_hat,
        )?,
        None => ProtocolGains::from_rate_bound(
            gamma_certified,
            cfg.bounds.n_hat,
            cfg.bounds.lambda2_hat,
        )?,
    };
    checks.push(ValidationCheck {
        name: "gain-bound",
        required: true,
        passed: gains.meets_bound,
        detail: format!(
            "beta = {:.6} vs required {:.6}",
            gains.beta,
            gains.required_beta()
        ),
    });

    // Finite-time certificate from the initial signals (internal states
    // start at zero, so the initial error is the centered signal stack).
    let (p0, _) = cfg.trajectory.sample(cfg.sim.t0)?;
    let infos0 = geometry::measure_all(p0, &cfg.sensors_vec())?;
    let phi0 = geometry::packed_matrix(&infos0);
    let x_tilde0 = consensus::consensus_error(&phi0, &phi0);
    let initial_error_norm = consensus::stacked_norm(&x_tilde0);
    let bound = consensus::finite_time_bound(&x_tilde0, lambda2.max(1e-300), cfg.sim.t0)?;

    let metrics = ScenarioMetrics {
        n: graph.n(),
        n_hat: cfg.bounds.n_hat,
        lambda2,
        lambda2_hat: cfg.bounds.lambda2_hat,
        gamma_raw: cert.raw_sup,
        gamma_certified,
        beta: gains.beta,
        beta_required: gains.required_beta(),
        min_clearance: cert.min_clearance,
        min_sigma: cert.min_sigma,
        initial_error_norm,
        t_star_by_lambda2: bound.by_lambda2,
        t_star_by_sqrt_lambda2: bound.by_sqrt_lambda2,
        t_star_certified: bound.certified(),
    };
    Ok(ValidationReport {
        checks,
        metrics: Some(metrics),
    })
}

/// Validates and assembles a runnable scenario; fails when any required
/// check fails.
pub fn prepare(cfg: &ScenarioConfig) -> Result<PreparedScenario, ScenarioError> {
    prepare_inner(cfg, false)
}

/// Like [`prepare`] but proceeds past failed checks, for deliberate
/// negative-result experiments. Conditions that leave the system
/// undefined (disconnected graphs are fine; missing rate certificates are
/// not) still fail.
pub fn prepare_forced(cfg: &ScenarioConfig) -> Result<PreparedScenario, ScenarioError> {
    prepare_inner(cfg, true)
}

fn prepare_inner(cfg: &ScenarioConfig, force: bool) -> Result<PreparedScenario, ScenarioError> {
    let report = validate_scenario(cfg)?;
    if !report.ok() && !force {
        return Err(ScenarioError::ValidationFailed(Box::new(report)));
    }
    if report.metrics.is_none() {
        // Even a forced run needs the certificate to size its gains.
        return Err(ScenarioError::ValidationFailed(Box::new(report)));
    }
    let metrics = report.metrics.as_ref().unwrap();

    let graph = Graph::allow_disconnected(cfg.graph.n, &cfg.edge_pairs())?;
    let gains = match cfg.bounds.beta {
        Some(beta) => ProtocolGains::with_beta(
            beta,
            metrics.gamma_certified,
            cfg.bounds.n_hat,
            cfg.bounds.lambda2_hat,
        )?,
        None => ProtocolGains::from_rate_bound(
            metrics.gamma_certified,
            cfg.bounds.n_hat,
            cfg.bounds.lambda2_hat,
        )?,
    };
    let bound = FiniteTimeBound {
        by_lambda2: metrics.t_star_by_lambda2,
        by_sqrt_lambda2: metrics.t_star_by_sqrt_lambda2,
    };
    let certificate = GammaCertificate {
        raw_sup: metrics.gamma_raw,
        certified: metrics.gamma_certified,
        grid_step: cfg.sim.h / tol::CERT_GRID_REFINE,
        min_clearance: metrics.min_clearance,
        min_sigma: metrics.min_sigma,
    };
    Ok(PreparedScenario {
        config: cfg.clone(),
        graph,
        sensors: cfg.sensors_vec(),
        gains,
        certificate,
        bound,
        report,
    })
}

/// The scenarios bundled with the crate; the JSON files under `scenarios/`
/// mirror these exactly.
pub mod presets {
    use super::*;

    /// Five sensors on an arc watching a curved target pass, cycle
    /// network. The claimed rate bound of 100 is deliberately conservative
    /// (the measured rates are far lower), which drives the gain to ~560.
    pub fn arc_crossing() -> ScenarioConfig {
        ScenarioConfig {
            graph: GraphSpec {
                n: 5,
                edges: vec![[0, 1], [1, 2], [2, 3], [3, 4], [0, 4]],
            },
            sensors: vec![
                [-1.97, 0.35],
                [-1.64, -1.15],
                [0.0, -2.0],
                [1.64, -1.15],
                [1.97, 0.35],
            ],
            trajectory: Trajectory::WaypointSpline {
                times: vec![0.0, 2.5, 5.0, 7.5, 10.0],
                points: vec![
                    [-0.50, -0.15],
                    [-0.25, 0.05],
                    [0.0, 0.12],
                    [0.25, 0.05],
                    [0.50, -0.10],
                ],
            },
            sim: SimParams {
                h: 1e-4,
                t0: 0.0,
                tf: 10.0,
            },
            bounds: BoundsSpec {
                n_hat: 5,
                lambda2_hat: 0.4,
                gamma: Some(100.0),
                beta: None,
            },
            output: OutputSpec { decimate: 10 },
        }
    }

    /// Static target inside a square of sensors; the measured rate is
    /// zero, exercising the floored certificate and the unit gain.
    pub fn stationary_target() -> ScenarioConfig {
        ScenarioConfig {
            graph: GraphSpec {
                n: 4,
                edges: vec![[0, 1], [1, 2], [2, 3], [0, 3]],
            },
            sensors: vec![[-1.5, -1.5], [1.5, -1.5], [1.5, 1.5], [-1.5, 1.5]],
            trajectory: Trajectory::Sinusoid {
                center: [0.05, 0.10],
                drift: [0.0, 0.0],
                terms: vec![],
            },
            sim: SimParams {
                h: 1e-3,
                t0: 0.0,
                tf: 6.0,
            },
            bounds: BoundsSpec {
                n_hat: 4,
                lambda2_hat: 1.0,
                gamma: None,
                beta: None,
            },
            output: OutputSpec { decimate: 10 },
        }
    }

    /// Straight-line target through a star network (hub node 0).
    pub fn constant_velocity() -> ScenarioConfig {
        ScenarioConfig {
            graph: GraphSpec {
                n: 5,
                edges: vec![[0, 1], [0, 2], [0, 3], [0, 4]],
            },
            sensors: vec![
                [0.0, 2.0],
                [-1.9, 0.62],
                [-1.18, -1.62],
                [1.18, -1.62],
                [1.9, 0.62],
            ],
            trajectory: Trajectory::Sinusoid {
                center: [-0.4, -0.1],
                drift: [0.1, 0.04],
                terms: vec![],
            },
            sim: SimParams {
                h: 1e-3,
                t0: 0.0,
                tf: 8.0,
            },
            bounds: BoundsSpec {
                n_hat: 5,
                lambda2_hat: 0.8,
                gamma: None,
                beta: None,
            },
            output: OutputSpec { decimate: 10 },
        }
    }

    /// Two constant-velocity legs with a turn at t = 5; the validator
    /// flags the velocity jump as an advisory finding.
    pub fn velocity_switch() -> ScenarioConfig {
        ScenarioConfig {
            graph: GraphSpec {
                n: 4,
                edges: vec![[0, 1], [1, 2], [2, 3], [0, 3], [0, 2]],
            },
            sensors: vec![[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]],
            trajectory: Trajectory::PiecewiseConstantVelocity {
                start: [-0.4, 0.1],
                segments: vec![
                    VelocitySegment {
                        duration: 5.0,
                        velocity: [0.12, 0.02],
                    },
                    VelocitySegment {
                        duration: 5.0,
                        velocity: [-0.02, -0.06],
                    },
                ],
            },
            sim: SimParams {
                h: 1e-3,
                t0: 0.0,
                tf: 10.0,
            },
            bounds: BoundsSpec {
                n_hat: 4,
                lambda2_hat: 1.5,
                gamma: None,
                beta: None,
            },
            output: OutputSpec { decimate: 10 },
        }
    }

    /// All bundled scenarios with their file stems.
    pub fn all() -> Vec<(&'static str, ScenarioConfig)> {
        vec![
            ("arc_crossing", arc_crossing()),
            ("stationary", stationary_target()),
            ("constant_velocity", constant_velocity()),
            ("velocity_switch", velocity_switch()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sinusoid_analytic_velocity() {
        // p(t) = (t, sin t) -> v(t) = (1, cos t).
        let tr = Trajectory::Sinusoid {
            center: [0.0, 0.0],
            drift: [1.0, 0.0],
            terms: vec![SinusoidTerm {
                amplitude: [0.0, 1.0],
                omega: [1.0, 1.0],
                phase: [0.0, 0.0],
            }],
        };
        for t in [0.0, 0.7, 2.0, -3.1] {
            let (p, v) = tr.sample(t).unwrap();
            assert_abs_diff_eq!(p.x, t, epsilon = 1e-15);
            assert_abs_diff_eq!(p.y, t.sin(), epsilon = 1e-15);
            assert_abs_diff_eq!(v.x, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(v.y, t.cos(), epsilon = 1e-15);
        }
    }

    #[test]
    fn piecewise_linear_motion() {
        let tr = Trajectory::PiecewiseConstantVelocity {
            start: [0.0, 0.0],
            segments: vec![VelocitySegment {
                duration: 4.0,
                velocity: [1.0, 0.0],
            }],
        };
        let (p, v) = tr.sample(2.0).unwrap();
        assert_eq!(p, Vec2::new(2.0, 0.0));
        assert_eq!(v, Vec2::new(1.0, 0.0));
        assert!(!tr.has_velocity_jumps());

        let tr2 = Trajectory::PiecewiseConstantVelocity {
            start: [0.0, 0.0],
            segments: vec![
                VelocitySegment {
                    duration: 1.0,
                    velocity: [1.0, 0.0],
                },
                VelocitySegment {
                    duration: 1.0,
                    velocity: [0.0, 1.0],
                },
            ],
        };
        assert!(tr2.has_velocity_jumps());
        // Position is continuous across the switch.
        let (before, _) = tr2.sample(1.0 - 1e-12).unwrap();
        let (at, v_at) = tr2.sample(1.0).unwrap();
        assert!(before.dist(at) <= 1e-11);
        assert_eq!(v_at, Vec2::new(0.0, 1.0));
        let (end, v_end) = tr2.sample(2.0).unwrap();
        assert_eq!(end, Vec2::new(1.0, 1.0));
        assert_eq!(v_end, Vec2::new(0.0, 1.0));
    }

    #[test]
    fn out_of_window_sampling_rejected() {
        let tr = Trajectory::WaypointSpline {
            times: vec![0.0, 1.0],
            points: vec![[0.0, 0.0], [1.0, 1.0]],
        };
        assert!(matches!(
            tr.sample(1.5),
            Err(ScenarioError::TimeOutOfWindow { .. })
        ));
        assert!(matches!(
            tr.sample(-0.5),
            Err(ScenarioError::TimeOutOfWindow { .. })
        ));
        let pw = Trajectory::PiecewiseConstantVelocity {
            start: [0.0, 0.0],
            segments: vec![VelocitySegment {
                duration: 1.0,
                velocity: [1.0, 0.0],
            }],
        };
        assert!(matches!(
            pw.sample(2.0),
            Err(ScenarioError::TimeOutOfWindow { .. })
        ));
    }

    #[test]
    fn malformed_trajectories_rejected() {
        let bad = Trajectory::WaypointSpline {
            times: vec![0.0, 1.0, 0.5],
            points: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
        };
        assert!(matches!(
            bad.check_well_formed(),
            Err(ScenarioError::InvalidTrajectory(_))
        ));
        let mismatched = Trajectory::WaypointSpline {
            times: vec![0.0, 1.0],
            points: vec![[0.0, 0.0]],
        };
        assert!(mismatched.check_well_formed().is_err());
        let empty = Trajectory::PiecewiseConstantVelocity {
            start: [0.0, 0.0],
            segments: vec![],
        };
        assert!(empty.check_well_formed().is_err());
    }

    #[test]
    fn spline_interpolates_waypoints_and_velocity_is_consistent() {
        let times = vec![0.0, 1.0, 3.0];
        let points = vec![[0.0, 0.0], [1.0, 2.0], [2.0, -1.0]];
        let tr = Trajectory::WaypointSpline {
            times: times.clone(),
            points: points.clone(),
        };
        for (t, p) in times.iter().zip(&points) {
            let (got, _) = tr.sample(*t).unwrap();
            assert!(got.dist(Vec2::from(*p)) <= 1e-12);
        }
        // Central-difference check of the analytic velocity.
        let dt = 1e-6;
        for t in [0.3, 0.9, 1.5, 2.4, 2.9] {
            let (_, v) = tr.sample(t).unwrap();
            let (pm, _) = tr.sample(t - dt).unwrap();
            let (pp, _) = tr.sample(t + dt).unwrap();
            let fd = (pp - pm) * (1.0 / (2.0 * dt));
            assert!(
                fd.dist(v) <= 1e-6 * (1.0 + v.norm()),
                "t = {t}: fd {fd:?} vs analytic {v:?}"
            );
        }
    }

    #[test]
    fn static_target_gets_floored_certificate() {
        let cfg = presets::stationary_target();
        let cert = certify_gamma(&cfg).unwrap();
        assert_eq!(cert.raw_sup, 0.0);
        assert_eq!(cert.certified, tol::GAMMA_FLOOR);
        assert!(cert.min_clearance > 1.0);
    }

    #[test]
    fn circling_target_rate_bounded_by_speed_over_range() {
        // Circle of radius 3 at angular rate 0.7 around two near-origin
        // sensors. The packed-signal rates are bounded by
        // C * speed / min_range with C = max(1, 2 * max sensor norm);
        // 1.01 covers finite-difference slop.
        let r = 3.0;
        let omega = 0.7;
        let cfg = ScenarioConfig {
            graph: GraphSpec {
                n: 2,
                edges: vec![[0, 1]],
            },
            sensors: vec![[0.3, 0.0], [0.0, -0.2]],
            trajectory: Trajectory::Sinusoid {
                center: [0.0, 0.0],
                drift: [0.0, 0.0],
                terms: vec![SinusoidTerm {
                    amplitude: [r, r],
                    omega: [omega, omega],
                    phase: [std::f64::consts::FRAC_PI_2, 0.0],
                }],
            },
            sim: SimParams {
                h: 1e-3,
                t0: 0.0,
                tf: 9.0,
            },
            bounds: BoundsSpec {
                n_hat: 2,
                lambda2_hat: 1.0,
                gamma: None,
                beta: None,
            },
            output: OutputSpec::default(),
        };
        let cert = certify_gamma(&cfg).unwrap();
        let speed = r * omega;
        let rho_min = r - 0.3;
        let c = 1.0_f64.max(2.0 * 0.3);
        assert!(
            cert.raw_sup <= 1.01 * c * speed / rho_min,
            "raw {} vs bound {}",
            cert.raw_sup,
            c * speed / rho_min
        );
        assert!(cert.raw_sup > 0.0);
    }

    #[test]
    fn grazing_trajectory_refused() {
        let cfg = ScenarioConfig {
            graph: GraphSpec {
                n: 2,
                edges: vec![[0, 1]],
            },
            sensors: vec![[0.0, 0.0], [1.0, 1.0]],
            trajectory: Trajectory::PiecewiseConstantVelocity {
                start: [-1.0, 1e-4],
                segments: vec![VelocitySegment {
                    duration: 2.0,
                    velocity: [1.0, 0.0],
                }],
            },
            sim: SimParams {
                h: 1e-3,
                t0: 0.0,
                tf: 2.0,
            },
            bounds: BoundsSpec {
                n_hat: 2,
                lambda2_hat: 1.0,
                gamma: None,
                beta: None,
            },
            output: OutputSpec::default(),
        };
        match certify_gamma(&cfg) {
            Err(ScenarioError::ClearanceViolation { sensor: 0, .. }) => {}
            other => panic!("expected clearance violation, got {other:?}"),
        }
        // Validation reports it as a failed check rather than an error.
        let report = validate_scenario(&cfg).unwrap();
        assert!(!report.ok());
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "target-clearance" && !c.passed));
    }

    #[test]
    fn refining_grid_stays_under_inflated_certificate() {
        let coarse_cfg = presets::constant_velocity();
        let coarse = certify_gamma(&coarse_cfg).unwrap();
        let mut fine_cfg = coarse_cfg.clone();
        fine_cfg.sim.h /= 2.0;
        let fine = certify_gamma(&fine_cfg).unwrap();
        assert!(
            fine.raw_sup <= coarse.certified,
            "refined sup {} exceeds certified {}",
            fine.raw_sup,
            coarse.certified
        );
    }

    #[test]
    fn all_presets_validate_cleanly() {
        for (name, cfg) in presets::all() {
            let report = validate_scenario(&cfg).unwrap();
            assert!(
                report.ok(),
                "{name}: {:?}",
                report.failed_required()
            );
            let metrics = report.metrics.unwrap();
            assert!(metrics.min_sigma >= tol::OBSERVABILITY_MIN, "{name}");
            assert!(metrics.min_clearance >= tol::MIN_CLEARANCE, "{name}");
            assert!(metrics.beta >= 1.0, "{name}");
        }
    }

    #[test]
    fn arc_crossing_reports_claimed_rate_gain() {
        let report = validate_scenario(&presets::arc_crossing()).unwrap();
        assert!(report.ok());
        let m = report.metrics.unwrap();
        // Gain rule at the claimed bounds: 1 + 100 sqrt(5) / 0.4.
        assert_abs_diff_eq!(m.beta, 560.0169943749475, epsilon = 1e-9);
        assert_abs_diff_eq!(m.lambda2, 1.3819660112501051, epsilon = 1e-12);
        // The claimed rate dominates the measured one by a wide margin.
        assert!(m.gamma_raw < 1.0);
    }

    #[test]
    fn velocity_switch_is_advisory_flagged() {
        let report = validate_scenario(&presets::velocity_switch()).unwrap();
        assert!(report.ok());
        let smooth = report
            .checks
            .iter()
            .find(|c| c.name == "smooth-trajectory")
            .unwrap();
        assert!(!smooth.passed);
        assert!(!smooth.required);
    }

    #[test]
    fn bound_violations_fail_the_right_checks() {
        let mut cfg = presets::arc_crossing();
        cfg.bounds.n_hat = 3;
        let report = validate_scenario(&cfg).unwrap();
        assert!(!report.ok());
        let failed = report.failed_required();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].name, "node-count-bound");
        assert!(failed[0].detail.contains("n_hat < n"));
        assert!(matches!(
            prepare(&cfg),
            Err(ScenarioError::ValidationFailed(_))
        ));
        // Forced preparation still yields a runnable scenario.
        assert!(prepare_forced(&cfg).is_ok());

        let mut cfg = presets::arc_crossing();
        cfg.bounds.lambda2_hat = 2.0;
        let report = validate_scenario(&cfg).unwrap();
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "spectral-bound" && !c.passed));

        let mut cfg = presets::arc_crossing();
        cfg.graph.edges = vec![[0, 1], [1, 2], [2, 3]];
        let report = validate_scenario(&cfg).unwrap();
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "network-connectivity" && !c.passed));

        let mut cfg = presets::arc_crossing();
        cfg.bounds.gamma = Some(1e-4);
        let report = validate_scenario(&cfg).unwrap();
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "rate-certificate" && !c.passed));

        let mut cfg = presets::arc_crossing();
        cfg.bounds.beta = Some(0.5);
        let report = validate_scenario(&cfg).unwrap();
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "gain-bound" && !c.passed));
    }

    #[test]
    fn hard_config_errors() {
        let mut cfg = presets::arc_crossing();
        cfg.sensors.pop();
        assert!(matches!(
            validate_scenario(&cfg),
            Err(ScenarioError::SensorCountMismatch { sensors: 4, n: 5 })
        ));

        let mut cfg = presets::arc_crossing();
        cfg.graph.edges.push([0, 0]);
        assert!(matches!(
            validate_scenario(&cfg),
            Err(ScenarioError::Graph(GraphError::SelfLoop(0)))
        ));

        let mut cfg = presets::arc_crossing();
        cfg.sim.tf = cfg.sim.t0;
        assert!(matches!(
            validate_scenario(&cfg),
            Err(ScenarioError::BadWindow { .. })
        ));
    }

    #[test]
    fn config_json_roundtrip_and_unknown_field() {
        for (_, cfg) in presets::all() {
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            let back = ScenarioConfig::from_json(&text).unwrap();
            assert_eq!(back, cfg);
        }
        let err = ScenarioConfig::from_json(
            r#"{"graph": {"n": 2, "edges": [[0,1]], "weights": []}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("weights"), "{err}");
    }

    #[test]
    fn bundled_files_mirror_presets() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
        for (stem, cfg) in presets::all() {
            let path = root.join(format!("{stem}.json"));
            let loaded = ScenarioConfig::from_path(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(loaded, cfg, "{stem}.json drifted from its preset");
        }
    }
}
