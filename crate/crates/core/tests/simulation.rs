//! Run-level invariants on short trajectories: exact constraint handling,
//! residual certification at every accepted step, ledger coherence, 2D paths.

use chd_core::diagnostics::check_energy_inequality;
use chd_core::stepper::{run_simulation, StepperParams};
use chd_core::{build_grid, scenario, BoundaryTag, GridConfig, MaterialModel};

#[test]
fn stretch_run_certifies_every_step() {
    let grid = build_grid(&GridConfig::line(
        1.0,
        17,
        BoundaryTag::Dirichlet,
        BoundaryTag::Dirichlet,
    ))
    .unwrap();
    let mut mat = MaterialModel::default_for_dim(1);
    mat.alpha = 2e-3; // damage activates mid-run
    let scen = scenario::stretch(&grid, &mat, 1e-3, 0.4, 0.05).unwrap();
    let params = StepperParams {
        t_final: 0.2,
        ..StepperParams::default()
    };
    let traj = run_simulation(&grid, &mat, params, &scen).unwrap();
    assert_eq!(traj.n_steps(), 20);

    let tol = traj.ledger.certification_tolerance();
    check_energy_inequality(&traj.ledger, tol).unwrap();
    assert!(traj.ledger.dissipation_nondecreasing());

    for row in traj.ledger.rows.iter().skip(1) {
        assert!(
            row.r1.max(row.r2).max(row.r3).max(row.r4) <= 1e-6,
            "{row:?}"
        );
        assert!(row.mass_dev <= 1e-12);
        assert_eq!(row.irrev_viol, 0.0);
    }
    // irreversibility and bounds hold exactly along the whole trajectory
    for pair in traj.states.windows(2) {
        for i in 0..grid.n_nodes() {
            assert!(pair[1].z[i] <= pair[0].z[i]);
            assert!((0.0..=1.0).contains(&pair[1].z[i]));
        }
    }
    // the Dirichlet trace follows the ramp exactly
    let last = traj.states.last().unwrap();
    let b_final = scen.boundary.eval(last.t);
    for &i in grid.dirichlet_nodes() {
        assert_eq!(last.u[i], b_final[i]);
    }
    // damage actually moved in this configuration
    assert!(last.z.iter().cloned().fold(1.0, f64::min) < 1.0);
}

#[test]
fn phase_separation_amplifies_the_unstable_mode() {
    // L = 10 puts the first cosine inside the spinodal band, so the
    // perturbation must grow under the conserved flow while mass stays fixed.
    let grid = build_grid(&GridConfig::line(
        10.0,
        33,
        BoundaryTag::Dirichlet,
        BoundaryTag::Neumann,
    ))
    .unwrap();
    let mut mat = MaterialModel::default_for_dim(1);
    mat.ehat = chd_core::SymTensor::scalar(0.3);
    let scen = scenario::phase_separation(&grid, &mat, 1e-3, 0.02).unwrap();
    let params = StepperParams {
        t_final: 0.3,
        ..StepperParams::default()
    };
    let traj = run_simulation(&grid, &mat, params, &scen).unwrap();

    let amp = |c: &[f64]| c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let first = amp(&traj.states[0].c);
    let last = amp(&traj.states.last().unwrap().c);
    assert!(last > first * 1.02, "no growth: {first} -> {last}");

    for row in traj.ledger.rows.iter().skip(1) {
        assert!(row.mass_dev <= 1e-12);
        assert!(row.w_ext.abs() < 1e-13, "quiescent boundary");
    }
    check_energy_inequality(&traj.ledger, traj.ledger.certification_tolerance()).unwrap();
}

#[test]
fn two_dimensional_stretch_smoke() {
    let grid = build_grid(&GridConfig::rect(
        [1.0, 1.0],
        [7, 7],
        [
            BoundaryTag::Dirichlet,
            BoundaryTag::Dirichlet,
            BoundaryTag::Neumann,
            BoundaryTag::Neumann,
        ],
    ))
    .unwrap();
    let mat = MaterialModel::default_for_dim(2);
    let scen = scenario::stretch(&grid, &mat, 1e-3, 0.3, 0.05).unwrap();
    let params = StepperParams {
        t_final: 0.05,
        ..StepperParams::default()
    };
    let traj = run_simulation(&grid, &mat, params, &scen).unwrap();
    assert_eq!(traj.n_steps(), 5);
    let tol = traj.ledger.certification_tolerance();
    check_energy_inequality(&traj.ledger, tol).unwrap();
    for row in traj.ledger.rows.iter().skip(1) {
        assert!(row.r1.max(row.r2).max(row.r3).max(row.r4) <= 1e-6);
        assert!(row.mass_dev <= 1e-12);
    }
}

#[test]
fn full_coupling_with_affine_mobility_and_lame_trace_term() {
    // nonuniform initial damage feeds a genuinely varying mobility weight
    // through the affine law, and lambda > 0 exercises the 2D trace coupling
    let grid = build_grid(&GridConfig::rect(
        [1.0, 1.0],
        [6, 6],
        [
            BoundaryTag::Dirichlet,
            BoundaryTag::Dirichlet,
            BoundaryTag::Neumann,
            BoundaryTag::Neumann,
        ],
    ))
    .unwrap();
    let mut mat = MaterialModel::default_for_dim(2);
    mat.lambda_l = 0.4;
    mat.psi_scale = 2.0;
    mat.alpha = 1e-3;
    mat.mobility = chd_core::MobilityLaw::Affine { m0: 0.5, m1: 0.5 };
    let mut scen = scenario::stretch(&grid, &mat, 1e-3, 0.5, 0.05).unwrap();
    for (i, z) in scen.z0.iter_mut().enumerate() {
        let [x, y] = grid.coord(i);
        *z = 0.6 + 0.3 * (std::f64::consts::TAU * (x + 0.5 * y)).cos();
        assert!((0.0..=1.0).contains(z));
    }
    let params = StepperParams {
        t_final: 0.04,
        ..StepperParams::default()
    };
    let traj = run_simulation(&grid, &mat, params, &scen).unwrap();
    check_energy_inequality(&traj.ledger, traj.ledger.certification_tolerance()).unwrap();
    for row in traj.ledger.rows.iter().skip(1) {
        assert!(row.r1.max(row.r2).max(row.r3).max(row.r4) <= 1e-6, "{row:?}");
        assert!(row.mass_dev <= 1e-12);
        assert_eq!(row.irrev_viol, 0.0);
    }
    // damage irreversibility holds from the nonuniform start
    for pair in traj.states.windows(2) {
        for i in 0..grid.n_nodes() {
            assert!(pair[1].z[i] <= pair[0].z[i] + 1e-15);
        }
    }
}

#[test]
fn step_failure_carries_partial_trajectory() {
    let grid = build_grid(&GridConfig::line(
        1.0,
        9,
        BoundaryTag::Dirichlet,
        BoundaryTag::Dirichlet,
    ))
    .unwrap();
    let mat = MaterialModel::default_for_dim(1);
    let scen = scenario::stretch(&grid, &mat, 1e-3, 0.4, 0.05).unwrap();
    let params = StepperParams {
        t_final: 0.1,
        max_outer: 1,
        outer_tol: 1e-15, // unattainable: force an outer-budget failure
        ..StepperParams::default()
    };
    match run_simulation(&grid, &mat, params, &scen) {
        Err(chd_core::SimulationError::StepFailed { step, partial, .. }) => {
            assert_eq!(step, 1);
            assert_eq!(partial.states.len(), 1);
        }
        other => panic!("expected StepFailed, got {other:?}"),
    }
}
