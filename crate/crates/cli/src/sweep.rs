//! Refinement sweeps: rerun a scenario shrinking tau (or delta) per level,
//! collect the a priori boundedness monitors and the error-term integrals,
//! and assert no blow-up across levels plus the axis-specific decrease.

use crate::config::RunConfig;
use crate::runner::{self, RunArtifacts};
use anyhow::{anyhow, Result};
use chd_core::stepper::Trajectory;
use chd_core::{lp_gradient_norm, second_gradient_form, GridDesc};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Tau,
    Delta,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tau" => Ok(SweepAxis::Tau),
            "delta" => Ok(SweepAxis::Delta),
            other => Err(format!(
                "unknown sweep axis {other:?} (expected tau or delta)"
            )),
        }
    }
}

/// Boundedness monitors per level (sup over time unless stated).
#[derive(Debug, Clone, Copy)]
pub struct Monitors {
    pub grad_c_sup: f64,
    pub v_sup: f64,
    pub grad_z_sup: f64,
    pub dissipation_total: f64,
    pub sqrt_delta_h2_sup: f64,
    pub delta_h2_sup: f64,
    pub sqrt_delta_c_rate: f64,
}

fn collect_monitors(grid: &GridDesc, traj: &Trajectory, delta: f64, p: f64) -> Monitors {
    let mut grad_c_sup: f64 = 0.0;
    let mut v_sup: f64 = 0.0;
    let mut grad_z_sup: f64 = 0.0;
    let mut h2_sup: f64 = 0.0;
    let mut c_rate_sq = 0.0;
    for state in &traj.states {
        grad_c_sup = grad_c_sup.max(lp_gradient_norm(grid, &state.c, 2.0));
        grad_z_sup = grad_z_sup.max(lp_gradient_norm(grid, &state.z, p));
        v_sup = v_sup.max(grid.mass_inner(&state.v, &state.v).sqrt());
        h2_sup = h2_sup.max(second_gradient_form(grid, &state.u, &state.u));
        if state.k > 0 {
            let c_dot: Vec<f64> = state
                .c
                .iter()
                .zip(&state.c_prev)
                .map(|(a, b)| (a - b) / traj.tau)
                .collect();
            c_rate_sq += traj.tau * grid.mass_inner(&c_dot, &c_dot);
        }
    }
    Monitors {
        grad_c_sup,
        v_sup,
        grad_z_sup,
        dissipation_total: traj
            .ledger
            .rows
            .last()
            .map(|r| r.dissipation)
            .unwrap_or(0.0),
        sqrt_delta_h2_sup: (delta * h2_sup).sqrt(),
        delta_h2_sup: delta * h2_sup,
        sqrt_delta_c_rate: (delta * c_rate_sq).sqrt(),
    }
}

#[derive(Debug)]
pub struct SweepLevel {
    pub value: f64,
    pub monitors: Monitors,
    /// Time integrals of |e1|..|e4|.
    pub err_integrals: [f64; 4],
    pub worst_slack: f64,
    pub certified: bool,
}

#[derive(Debug)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub levels: Vec<SweepLevel>,
    pub checks: Vec<(String, bool, String)>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok, _)| *ok) && self.levels.iter().all(|l| l.certified)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let axis = match self.axis {
            SweepAxis::Tau => "tau",
            SweepAxis::Delta => "delta",
        };
        let _ = writeln!(
            out,
            "{axis:>10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "sup|grad c|",
            "sup|v|",
            "sup|grad z|",
            "D(0,T)",
            "sqrt(d)|u|H2",
            "d<Au,u>",
            "int|e123|",
            "slack"
        );
        for l in &self.levels {
            let e123 = l.err_integrals[0] + l.err_integrals[1] + l.err_integrals[2];
            let _ = writeln!(
                out,
                "{:>10.3e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                l.value,
                l.monitors.grad_c_sup,
                l.monitors.v_sup,
                l.monitors.grad_z_sup,
                l.monitors.dissipation_total,
                l.monitors.sqrt_delta_h2_sup,
                l.monitors.delta_h2_sup,
                e123,
                l.worst_slack
            );
        }
        out.push_str("checks:\n");
        for (name, ok, detail) in &self.checks {
            let _ = writeln!(
                out,
                "  [{}] {name}{}{detail}",
                if *ok { "PASS" } else { "FAIL" },
                if detail.is_empty() { "" } else { ": " }
            );
        }
        let _ = writeln!(
            out,
            "overall: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Reruns the configured scenario `levels` times, scaling the chosen axis by
/// `factor` per level (default halving); writes each level's outputs to
/// `out_dir/levelN` and the report table to `out_dir/sweep_report.txt`.
pub fn sweep(
    config: &RunConfig,
    axis: SweepAxis,
    levels: usize,
    factor: f64,
    out_dir: &Path,
) -> Result<SweepReport> {
    if levels < 3 {
        return Err(anyhow!("a sweep needs at least 3 levels, got {levels}"));
    }
    if !(factor > 0.0 && factor < 1.0) {
        return Err(anyhow!("sweep factor must lie in (0,1), got {factor}"));
    }

    let mut out_levels = Vec::new();
    for level in 0..levels {
        let scale = factor.powi(level as i32);
        let mut cfg = config.clone();
        match axis {
            SweepAxis::Tau => cfg.stepper.tau *= scale,
            SweepAxis::Delta => cfg.stepper.delta *= scale,
        }
        let value = match axis {
            SweepAxis::Tau => cfg.stepper.tau,
            SweepAxis::Delta => cfg.stepper.delta,
        };
        let artifacts: RunArtifacts = runner::execute(&cfg)?;
        let lvl_dir = out_dir.join(format!("level{level}"));
        runner::write_outputs(&cfg, &artifacts, &lvl_dir)?;
        if artifacts.trajectory.states.is_empty() {
            return Err(anyhow!("level {level}: material assumptions failed"));
        }

        let traj = &artifacts.trajectory;
        let monitors = collect_monitors(&artifacts.grid, traj, cfg.stepper.delta, cfg.material.p);
        let mut err_integrals = [0.0; 4];
        for row in traj.ledger.rows.iter().skip(1) {
            let tau = cfg.stepper.tau;
            err_integrals[0] += tau * row.e1.abs();
            err_integrals[1] += tau * row.e2.abs();
            err_integrals[2] += tau * row.e3.abs();
            err_integrals[3] += tau * row.e4.abs();
        }
        out_levels.push(SweepLevel {
            value,
            monitors,
            err_integrals,
            worst_slack: traj.ledger.worst_slack(),
            certified: artifacts.all_certified(),
        });
    }

    let mut checks = Vec::new();

    // No blow-up: each monitor stays within 2x of its first-level value.
    let monitor_list: [(&str, fn(&Monitors) -> f64); 6] = [
        ("sup |grad c|_L2", |m| m.grad_c_sup),
        ("sup |v|_L2", |m| m.v_sup),
        ("sup |grad z|_Lp", |m| m.grad_z_sup),
        ("total dissipation", |m| m.dissipation_total),
        ("sqrt(delta) |u|_H2", |m| m.sqrt_delta_h2_sup),
        ("sqrt(delta) |dt c|_L2L2", |m| m.sqrt_delta_c_rate),
    ];
    for (name, get) in monitor_list {
        let first = get(&out_levels[0].monitors);
        let max = out_levels
            .iter()
            .map(|l| get(&l.monitors))
            .fold(0.0f64, f64::max);
        let ok = max <= 2.0 * first + 1e-9;
        checks.push((
            format!("bounded: {name}"),
            ok,
            format!("first {first:.4e}, max {max:.4e}"),
        ));
    }

    match axis {
        SweepAxis::Tau => {
            // error terms shrink by at least 1.5x per halving
            for pair in out_levels.windows(2) {
                let coarse: f64 = pair[0].err_integrals[..3].iter().sum();
                let fine: f64 = pair[1].err_integrals[..3].iter().sum();
                let ok = fine * 1.5 <= coarse + 1e-14 || (coarse < 1e-14 && fine < 1e-14);
                checks.push((
                    format!(
                        "error integral decrease {:.3e} -> {:.3e}",
                        pair[0].value, pair[1].value
                    ),
                    ok,
                    format!("{coarse:.4e} -> {fine:.4e}"),
                ));
            }
        }
        SweepAxis::Delta => {
            for pair in out_levels.windows(2) {
                let coarse = pair[0].monitors.delta_h2_sup;
                let fine = pair[1].monitors.delta_h2_sup;
                checks.push((
                    format!(
                        "delta<Au,u> decrease {:.3e} -> {:.3e}",
                        pair[0].value, pair[1].value
                    ),
                    fine < coarse + 1e-15,
                    format!("{coarse:.4e} -> {fine:.4e}"),
                ));
            }
        }
    }

    let report = SweepReport {
        axis,
        levels: out_levels,
        checks,
    };
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("sweep_report.txt"), report.table())?;
    Ok(report)
}
