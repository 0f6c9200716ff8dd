//! Writers for the run artifacts: the wide CSV record stream, the summary
//! document, and the three standard plots.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use bearing_swarm::engine::{RunOutput, RunSummary, SweepRow};
use bearing_swarm::scenario::{PreparedScenario, ScenarioConfig, ValidationReport};
use serde::Serialize;

use crate::svg::{self, Figure, Line, Marker, Markers, RefLine};

/// Every float is serialized in scientific notation with 17 significant
/// digits, which round-trips f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Paths written by a run, echoed to stdout.
pub struct OutputBundle {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub plots: [PathBuf; 3],
}

/// Everything needed to reproduce and interpret a run. The embedded
/// config has all defaults and command-line overrides materialized.
#[derive(Serialize)]
struct SummaryDoc<'a> {
    config: &'a ScenarioConfig,
    forced: bool,
    validation: &'a ValidationReport,
    run: &'a RunSummary,
}

/// Column order: t, then per node i (p_i_x, p_i_y, valid_i, rmse_i,
/// msce_i), then pstar_x, pstar_y, ptrue_x, ptrue_y, xtilde_norm,
/// conservation_residual. Booleans are 1/0.
pub fn records_csv(out: &RunOutput, n: usize) -> String {
    let mut text = String::with_capacity(out.records.len() * 32 * 26);
    text.push('t');
    for i in 0..n {
        let _ = write!(text, ",p_{i}_x,p_{i}_y,valid_{i},rmse_{i},msce_{i}");
    }
    text.push_str(",pstar_x,pstar_y,ptrue_x,ptrue_y,xtilde_norm,conservation_residual\n");
    for rec in &out.records {
        let _ = write!(text, "{}", fmt_f64(rec.t));
        for node in &rec.nodes {
            let _ = write!(
                text,
                ",{},{},{},{},{}",
                fmt_f64(node.p_hat[0]),
                fmt_f64(node.p_hat[1]),
                node.valid as u8,
                fmt_f64(node.rmse),
                fmt_f64(node.msce)
            );
        }
        let _ = writeln!(
            text,
            ",{},{},{},{},{},{}",
            fmt_f64(rec.p_star[0]),
            fmt_f64(rec.p_star[1]),
            fmt_f64(rec.p_true[0]),
            fmt_f64(rec.p_true[1]),
            fmt_f64(rec.x_tilde_norm),
            fmt_f64(rec.conservation_residual)
        );
    }
    text
}

pub fn sweep_csv(param: &str, rows: &[SweepRow]) -> String {
    let mut text = format!(
        "# param = {param}\nvalue,beta,h,converged,t_cross,t_star_certified,steady_rmse_max,steady_msce_max,max_conservation\n"
    );
    for row in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(row.value),
            fmt_f64(row.beta),
            fmt_f64(row.h),
            row.converged as u8,
            row.t_cross.map(fmt_f64).unwrap_or_default(),
            fmt_f64(row.t_star_certified),
            fmt_f64(row.steady_state_rmse_max),
            fmt_f64(row.steady_state_msce_max),
            fmt_f64(row.max_conservation_residual)
        );
    }
    text
}

pub fn sweep_table(param: &str, rows: &[SweepRow]) -> String {
    let mut text = format!(
        "{:>12}  {:>12}  {:>9}  {:>10}  {:>10}  {:>12}  {:>12}\n",
        param, "beta", "h", "converged", "t_cross", "steady_rmse", "steady_msce"
    );
    for row in rows {
        let _ = writeln!(
            text,
            "{:>12.5e}  {:>12.5e}  {:>9.3e}  {:>10}  {:>10}  {:>12.5e}  {:>12.5e}",
            row.value,
            row.beta,
            row.h,
            if row.converged { "yes" } else { "NO" },
            row.t_cross
                .map(|t| format!("{t:.4}"))
                .unwrap_or_else(|| "-".to_string()),
            row.steady_state_rmse_max,
            row.steady_state_msce_max
        );
    }
    text
}

fn node_color(i: usize) -> String {
    svg::PALETTE[i % svg::PALETTE.len()].to_string()
}

/// True path, per-node estimates once valid, sensors, and network links.
pub fn trajectory_figure(prep: &PreparedScenario, out: &RunOutput) -> Figure {
    let n = prep.graph.n();
    let mut fig = Figure::new("target and per-node estimates", "x", "y");
    fig.equal_aspect = true;

    for &(a, b) in prep.graph.edges() {
        fig.lines.push(Line {
            label: String::new(),
            color: "#c8c8c8".into(),
            width: 1.0,
            dash: None,
            pts: vec![
                (prep.sensors[a].x, prep.sensors[a].y),
                (prep.sensors[b].x, prep.sensors[b].y),
            ],
        });
    }
    fig.markers.push(Markers {
        label: "sensors".into(),
        color: "#333333".into(),
        marker: Marker::Square,
        size: 5.0,
        pts: prep.sensors.iter().map(|s| (s.x, s.y)).collect(),
    });
    fig.lines.push(Line {
        label: "target".into(),
        color: "#000000".into(),
        width: 2.0,
        dash: None,
        pts: out.records.iter().map(|r| (r.p_true[0], r.p_true[1])).collect(),
    });
    for i in 0..n {
        let pts: Vec<(f64, f64)> = out
            .records
            .iter()
            .filter(|r| r.nodes[i].valid)
            .map(|r| (r.nodes[i].p_hat[0], r.nodes[i].p_hat[1]))
            .collect();
        fig.lines.push(Line {
            label: format!("node {i}"),
            color: node_color(i),
            width: 1.0,
            dash: None,
            pts,
        });
    }
    if let Some(first) = out.records.first() {
        fig.markers.push(Markers {
            label: "start".into(),
            color: "#000000".into(),
            marker: Marker::Circle,
            size: 4.0,
            pts: vec![(first.p_true[0], first.p_true[1])],
        });
    }
    fig
}

fn error_figure(
    title: &str,
    y_label: &str,
    out: &RunOutput,
    n: usize,
    pick: impl Fn(&bearing_swarm::engine::NodeStep) -> f64,
) -> Figure {
    let mut fig = Figure::new(title, "t", y_label);
    fig.log_y = true;
    for i in 0..n {
        fig.lines.push(Line {
            label: format!("node {i}"),
            color: node_color(i),
            width: 1.2,
            dash: None,
            pts: out.records.iter().map(|r| (r.t, pick(&r.nodes[i]))).collect(),
        });
    }
    fig.hlines.push(RefLine {
        value: out.summary.chatter_floor,
        label: "chatter floor".into(),
    });
    fig.vlines.push(RefLine {
        value: out.summary.t_star_certified,
        label: "t*".into(),
    });
    fig
}

pub fn rmse_figure(out: &RunOutput, n: usize) -> Figure {
    error_figure(
        "oracle-relative tracking error",
        "rmse_i",
        out,
        n,
        |node| node.rmse,
    )
}

pub fn msce_figure(out: &RunOutput, n: usize) -> Figure {
    error_figure("consensus estimation error", "msce_i", out, n, |node| {
        node.msce
    })
}

pub fn write_bundle(
    dir: &Path,
    prep: &PreparedScenario,
    out: &RunOutput,
    forced: bool,
) -> io::Result<OutputBundle> {
    fs::create_dir_all(dir)?;
    let n = prep.graph.n();
    let bundle = OutputBundle {
        records: dir.join("records.csv"),
        summary: dir.join("summary.json"),
        plots: [
            dir.join("trajectory.svg"),
            dir.join("rmse.svg"),
            dir.join("msce.svg"),
        ],
    };
    fs::write(&bundle.records, records_csv(out, n))?;
    let doc = SummaryDoc {
        config: &prep.config,
        forced,
        validation: &prep.report,
        run: &out.summary,
    };
    let mut json = serde_json::to_string_pretty(&doc).expect("summary serializes");
    json.push('\n');
    fs::write(&bundle.summary, json)?;
    fs::write(&bundle.plots[0], trajectory_figure(prep, out).render())?;
    fs::write(&bundle.plots[1], rmse_figure(out, n).render())?;
    fs::write(&bundle.plots[2], msce_figure(out, n).render())?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [
            0.0,
            1.0,
            -1.0,
            560.0169943749475,
            1e-300,
            std::f64::consts::PI,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }
}
