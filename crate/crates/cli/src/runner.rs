//! Single-run driver: builds the world from a config, advances the
//! simulation, certifies every per-step check, and writes the trajectory CSV,
//! the ledger CSV and a plain-text summary.

use crate::config::RunConfig;
use anyhow::{anyhow, Context, Result};
use chd_core::diagnostics::{check_energy_inequality, Z_ZERO_THRESHOLD};
use chd_core::stepper::{run_simulation, Trajectory};
use chd_core::{build_grid, scenario, GridDesc};
use std::fs;
use std::io::Write;
use std::path::Path;

pub struct RunArtifacts {
    pub trajectory: Trajectory,
    pub grid: GridDesc,
    pub certifications: Vec<(String, bool, String)>,
    pub damage_onset: Option<f64>,
}

impl RunArtifacts {
    pub fn all_certified(&self) -> bool {
        self.certifications.iter().all(|(_, ok, _)| *ok)
    }
}

/// Runs the configured scenario and evaluates every certification.
pub fn execute(config: &RunConfig) -> Result<RunArtifacts> {
    let grid = build_grid(&config.grid).context("grid construction failed")?;
    let scen = scenario::by_name(
        &config.scenario_name,
        &grid,
        &config.material,
        config.stepper.delta,
        config.stretch_rate,
        config.amplitude,
    )
    .map_err(|e| anyhow!("{e}"))?;

    let mut certifications = Vec::new();

    let report = config.material.validate_assumptions(config.seed);
    certifications.push((
        "material assumptions".to_string(),
        report.all_passed(),
        format!("\n{report}"),
    ));
    if !report.all_passed() {
        // a model violating the standing assumptions must not be integrated
        return Ok(RunArtifacts {
            trajectory: Trajectory {
                states: Vec::new(),
                mus: Vec::new(),
                xis: Vec::new(),
                ledger: chd_core::diagnostics::EnergyLedger::new(0.0, 0.0),
                tau: config.stepper.tau,
                mass_target: 0.0,
            },
            grid,
            certifications,
            damage_onset: None,
        });
    }

    let trajectory = run_simulation(&grid, &config.material, config.stepper.clone(), &scen)
        .map_err(|e| anyhow!("{e}"))?;

    let outer_tol = config.stepper.outer_tol;
    let worst_r = trajectory
        .ledger
        .rows
        .iter()
        .map(|r| r.r1.max(r.r2).max(r.r3).max(r.r4))
        .fold(0.0f64, f64::max);
    certifications.push((
        "Euler-Lagrange residuals".to_string(),
        worst_r <= outer_tol,
        format!("max over steps {worst_r:.3e} <= {outer_tol:.1e}"),
    ));

    let tol = trajectory.ledger.certification_tolerance();
    let slack_ok = check_energy_inequality(&trajectory.ledger, tol);
    certifications.push((
        "energy inequality".to_string(),
        slack_ok.is_ok(),
        match &slack_ok {
            Ok(()) => format!(
                "worst slack {:.3e} >= -{tol:.3e}",
                trajectory.ledger.worst_slack()
            ),
            Err(v) => format!("violated at step {} with slack {:.3e}", v.step, v.slack),
        },
    ));
    certifications.push((
        "dissipation monotone".to_string(),
        trajectory.ledger.dissipation_nondecreasing(),
        String::new(),
    ));

    let worst_mass = trajectory
        .ledger
        .rows
        .iter()
        .map(|r| r.mass_dev)
        .fold(0.0f64, f64::max);
    let worst_irrev = trajectory
        .ledger
        .rows
        .iter()
        .map(|r| r.irrev_viol)
        .fold(0.0f64, f64::max);
    let mut bounds_ok = true;
    for state in &trajectory.states {
        for &z in &state.z {
            if !(0.0..=1.0).contains(&z) {
                bounds_ok = false;
            }
        }
    }
    certifications.push((
        "mass conservation".to_string(),
        worst_mass <= 1e-12,
        format!("worst deviation {worst_mass:.3e}"),
    ));
    certifications.push((
        "irreversibility".to_string(),
        worst_irrev == 0.0,
        format!("worst violation {worst_irrev:.3e}"),
    ));
    certifications.push(("damage bounds".to_string(), bounds_ok, String::new()));

    // subgradient contract: nonpositive, supported on {z ~ 0}
    let mut xi_ok = true;
    for (xi, state) in trajectory.xis.iter().zip(trajectory.states.iter().skip(1)) {
        for i in 0..xi.len() {
            if xi[i] > 0.0 || (xi[i] != 0.0 && state.z[i] > Z_ZERO_THRESHOLD) {
                xi_ok = false;
            }
        }
    }
    certifications.push((
        "subgradient sign and support".to_string(),
        xi_ok,
        String::new(),
    ));

    let damage_onset = damage_onset_time(&trajectory);

    Ok(RunArtifacts {
        trajectory,
        grid,
        certifications,
        damage_onset,
    })
}

/// First time at which the damage strictly decreased anywhere.
fn damage_onset_time(traj: &Trajectory) -> Option<f64> {
    for pair in traj.states.windows(2) {
        for i in 0..pair[1].z.len() {
            if pair[1].z[i] < pair[0].z[i] - 1e-14 {
                return Some(pair[1].t);
            }
        }
    }
    None
}

pub fn write_outputs(config: &RunConfig, artifacts: &RunArtifacts, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    if !artifacts.trajectory.states.is_empty() {
        let ledger_file = fs::File::create(dir.join("ledger.csv"))?;
        artifacts
            .trajectory
            .ledger
            .write_csv(std::io::BufWriter::new(ledger_file))?;
        let traj_file = fs::File::create(dir.join("trajectory.csv"))?;
        write_trajectory_csv(
            &artifacts.grid,
            &artifacts.trajectory,
            config.snapshot_stride,
            std::io::BufWriter::new(traj_file),
        )?;
    }
    let mut summary = fs::File::create(dir.join("summary.txt"))?;
    write!(summary, "{}", summary_text(config, artifacts))?;
    Ok(())
}

pub fn summary_text(config: &RunConfig, artifacts: &RunArtifacts) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "scenario: {}\ngrid: {}D, {} nodes\ntau = {}, delta = {}, T = {}\n",
        config.scenario_name,
        config.grid.dimension,
        config.grid.nodes[..config.grid.dimension]
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(" x "),
        config.stepper.tau,
        config.stepper.delta,
        config.stepper.t_final,
    ));
    if let Some(last) = artifacts.trajectory.ledger.rows.last() {
        out.push_str(&format!(
            "final: E = {:.6e}, K = {:.6e}, D = {:.6e}, W_ext = {:.6e}\n",
            last.energy, last.kinetic, last.dissipation, last.w_ext
        ));
        let worst_r = artifacts
            .trajectory
            .ledger
            .rows
            .iter()
            .map(|r| r.r1.max(r.r2).max(r.r3).max(r.r4))
            .fold(0.0f64, f64::max);
        out.push_str(&format!(
            "max residual = {worst_r:.3e}, worst slack = {:.3e}\n",
            artifacts.trajectory.ledger.worst_slack()
        ));
    }
    match artifacts.damage_onset {
        Some(t) => out.push_str(&format!("damage onset at t = {t}\n")),
        None => out.push_str("damage onset: none\n"),
    }
    out.push_str("certifications:\n");
    for (name, ok, detail) in &artifacts.certifications {
        out.push_str(&format!(
            "  [{}] {name}{}{detail}\n",
            if *ok { "PASS" } else { "FAIL" },
            if detail.is_empty() { "" } else { ": " },
        ));
    }
    out.push_str(&format!(
        "overall: {}\n",
        if artifacts.all_certified() {
            "PASS"
        } else {
            "FAIL"
        }
    ));
    out
}

/// One row per node per snapshot; the initial snapshot has no recovered
/// potential or subgradient, written as NaN.
pub fn write_trajectory_csv<W: Write>(
    grid: &GridDesc,
    traj: &Trajectory,
    stride: usize,
    mut out: W,
) -> Result<()> {
    let n = grid.n_nodes();
    if grid.dimension == 1 {
        writeln!(out, "k,t,node,x,c,u_x,z,mu,xi")?;
    } else {
        writeln!(out, "k,t,node,x,y,c,u_x,u_y,z,mu,xi")?;
    }
    let m = traj.n_steps();
    for k in 0..=m {
        if k != 0 && k != m && k % stride != 0 {
            continue;
        }
        let state = &traj.states[k];
        for i in 0..n {
            let [x, y] = grid.coord(i);
            let (mu, xi) = if k == 0 {
                (f64::NAN, f64::NAN)
            } else {
                (traj.mus[k - 1][i], traj.xis[k - 1][i])
            };
            if grid.dimension == 1 {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    k, state.t, i, x, state.c[i], state.u[i], state.z[i], mu, xi
                )?;
            } else {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    k,
                    state.t,
                    i,
                    x,
                    y,
                    state.c[i],
                    state.u[i],
                    state.u[n + i],
                    state.z[i],
                    mu,
                    xi
                )?;
            }
        }
    }
    Ok(())
}

/// Orchestrates a full run; returns the process exit code (0 iff every
/// certification passed).
pub fn run(config: &RunConfig, out_dir: &Path, verbose: bool) -> Result<i32> {
    let artifacts = execute(config)?;
    write_outputs(config, &artifacts, out_dir)?;
    if verbose {
        print!("{}", summary_text(config, &artifacts));
    } else {
        println!(
            "{}: {}",
            config.scenario_name,
            if artifacts.all_certified() {
                "PASS"
            } else {
                "FAIL"
            }
        );
    }
    Ok(if artifacts.all_certified() { 0 } else { 1 })
}
