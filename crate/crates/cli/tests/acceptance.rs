//! End-to-end acceptance suite. Each test prints one PASS/FAIL line (visible
//! with `--nocapture`) and asserts its thresholds; heavy runs are shared
//! between criteria through lazy statics.

use std::sync::OnceLock;
use vsheet_core::diagnostics;
use vsheet_core::grid::{self, FlowState, HybridGrid};
use vsheet_core::model::PhysParams;
use vsheet_core::pipeline::{
    self, Bump, FitOutcome, FitWindows, LocalizedRunOutput, LocalizedScenario, Mode,
    SheetRunOutput, SheetScenario, ShiftMode, TorusScenario,
};
use vsheet_core::profiles::SelfSimilarProfile;
use vsheet_core::solver::{self, DtControl, Scheme, SolverConfig, Stepper};

fn pass_line(criterion: &str, detail: &str) {
    println!("[PASS] {criterion}: {detail}");
}

// ---- shared heavy runs -------------------------------------------------

// Headline 1D periodic-sheet run: a thin profile (small mu) keeps the
// persistent low-wavenumber content of the unit-period perturbation above
// the discretization floor; gamma = 2 takes the exact pressure path.
fn headline_params() -> PhysParams {
    PhysParams::new(2.0, 0.004, 0.0, 1.0, [1.0, 0.0], 16.0).unwrap()
}

fn headline_scenario() -> SheetScenario {
    SheetScenario {
        params: headline_params(),
        dim: 1,
        half_width: 300.0,
        cells_per_unit: 80,
        n2: 1,
        solver: SolverConfig::new(Scheme::SemiImplicit, DtControl::Fixed(2e-3), 500.0, 1.0),
        eps: 1e-2,
        modes: vec![
            Mode { field: 0, amp: 1.0, k2: 0, k3: 1, phase: 0.0 },
            Mode { field: 1, amp: 0.6, k2: 0, k3: 1, phase: 0.7 },
            Mode { field: 3, amp: 0.8, k2: 0, k3: 1, phase: 1.9 },
        ],
        shift_mode: ShiftMode::ZeroMassConstrained,
        windows: FitWindows { flat: (50.0, 500.0), sharp: (2.0, 50.0), error_terms: (2.0, 30.0) },
        min_fit_amplitude: 1e-11,
        slice_times: vec![],
    }
}

fn headline_run() -> &'static SheetRunOutput {
    static RUN: OnceLock<SheetRunOutput> = OnceLock::new();
    RUN.get_or_init(|| pipeline::run_periodic_sheet(&headline_scenario()).expect("headline run"))
}

// 2D periodic-sheet run with a narrow profile and a weak sheet: the shift
// dynamics and the ansatz error terms are all measurably nonzero, and the
// sharp modes decay exponentially.
fn sheet2d_params() -> PhysParams {
    PhysParams::new(2.0, 0.02, 0.0, 1.0, [0.0, 0.25], 1.0).unwrap()
}

fn sheet2d_scenario() -> SheetScenario {
    SheetScenario {
        params: sheet2d_params(),
        dim: 2,
        half_width: 124.0,
        cells_per_unit: 40,
        n2: 16,
        solver: SolverConfig::new(Scheme::ExplicitRk2, DtControl::Fixed(3.5e-3), 100.0, 0.25),
        eps: 1e-2,
        modes: vec![
            Mode { field: 0, amp: 1.0, k2: 0, k3: 1, phase: 0.4 },
            Mode { field: 3, amp: 0.8, k2: 0, k3: 1, phase: 1.9 },
            Mode { field: 0, amp: 0.5, k2: 1, k3: 1, phase: 0.0 },
            Mode { field: 2, amp: 0.6, k2: 1, k3: 0, phase: 0.3 },
        ],
        shift_mode: ShiftMode::ZeroMassConstrained,
        windows: FitWindows { flat: (10.0, 100.0), sharp: (0.5, 8.0), error_terms: (0.5, 6.0) },
        min_fit_amplitude: 1e-12,
        slice_times: vec![],
    }
}

fn sheet2d_run() -> &'static SheetRunOutput {
    static RUN: OnceLock<SheetRunOutput> = OnceLock::new();
    RUN.get_or_init(|| pipeline::run_periodic_sheet(&sheet2d_scenario()).expect("2d sheet run"))
}

// Localized 1D run: diffusion-wave ansatz with the domain sized to contain
// the acoustic kernels to the final time.
fn localized_params() -> PhysParams {
    PhysParams::new(1.4, 1.0, 0.0, 1.0, [1.0, 0.0], 16.0).unwrap()
}

/// Calibrated constant of the error-envelope audit (one-time sweep at the
/// localized defaults; derived data).
const ENVELOPE_CONSTANT: f64 = 6.0;

fn localized_scenario() -> LocalizedScenario {
    LocalizedScenario {
        params: localized_params(),
        dim: 1,
        half_width: 890.0,
        n3: 35600,
        n2: 1,
        solver: SolverConfig::new(Scheme::SemiImplicit, DtControl::Fixed(4e-3), 500.0, 1.0),
        bump: Bump {
            eps: 1e-2,
            width: 1.0,
            center: 0.0,
            amps: [1.0, 0.8, 0.0, 0.5],
            modulation: None,
        },
        windows: FitWindows { flat: (50.0, 500.0), sharp: (2.0, 50.0), error_terms: (2.0, 50.0) },
        min_fit_amplitude: 1e-11,
        envelope_constant: ENVELOPE_CONSTANT,
        slice_times: vec![],
    }
}

fn localized_run() -> &'static LocalizedRunOutput {
    static RUN: OnceLock<LocalizedRunOutput> = OnceLock::new();
    RUN.get_or_init(|| pipeline::run_localized_sheet(&localized_scenario()).expect("localized run"))
}

fn fitted(outcome: &FitOutcome, what: &str) -> diagnostics::DecayFit {
    match outcome {
        FitOutcome::Fitted(f) => *f,
        FitOutcome::Skipped { reason } => panic!("{what} fit skipped: {reason}"),
    }
}

// ---- criteria ----------------------------------------------------------

#[test]
fn acceptance_01_profile_ode_residual() {
    let profile = SelfSimilarProfile::from_params(&localized_params());
    let mut worst = 0.0_f64;
    for k in 0..=10_000 {
        let xi = -15.0 + 30.0 * k as f64 / 10_000.0;
        worst = worst.max(profile.ode_residual(xi).abs());
    }
    assert!(worst < 1e-10, "profile ODE residual {worst:.3e}");
    pass_line("criterion 01 profile ODE residual", &format!("max {worst:.3e} < 1e-10"));
}

#[test]
fn acceptance_02_wave_is_a_solution() {
    // interior flux-divergence residual of the exact wave at h = 0.2, 0.1,
    // 0.05 on a [-40, 40] line
    let rows =
        pipeline::wave_residual_table(&localized_params(), 40.0, &[400, 800, 1600]).unwrap();
    let orders = pipeline::observed_orders(&rows);
    for o in &orders {
        assert!(*o >= 1.9, "wave residual orders {orders:?}");
    }
    pass_line(
        "criterion 02 viscous wave residual",
        &format!(
            "errors {:?} at h = 0.2/0.1/0.05, observed orders {orders:?} >= 1.9",
            rows.iter().map(|r| r.error).collect::<Vec<_>>()
        ),
    );
}

/// Error-over-(h^2 + dt^2) ratio of the coarsest manufactured-heat run,
/// frozen once; the criterion asserts the error never exceeds 1.5x of it.
const HEAT_ERROR_SCALE: f64 = 0.0575;

#[test]
fn acceptance_03_manufactured_heat_solution() {
    let rows =
        pipeline::heat_convergence_table(&localized_params(), 20.0, &[200, 400, 800], 10.0)
            .unwrap();
    let orders = pipeline::observed_orders(&rows);
    for o in &orders {
        assert!(*o >= 1.9, "heat orders {orders:?}");
    }
    for r in &rows {
        let bound = 1.5 * HEAT_ERROR_SCALE * (r.h * r.h + r.dt * r.dt);
        assert!(r.error < bound, "error {} vs C(h^2+dt^2) = {bound} at h = {}", r.error, r.h);
    }
    pass_line(
        "criterion 03 manufactured heat solution",
        &format!(
            "errors {:?}, observed orders {orders:?} >= 1.9",
            rows.iter().map(|r| r.error).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn acceptance_04_galilean_covariance() {
    // boost along x3 with c3 t_end equal to one period: evolved-then-boosted
    // equals boosted-then-evolved pointwise on the torus grid
    let p = localized_params();
    let g = HybridGrid::torus(1, 1, 64).unwrap();
    let c3 = 0.2;
    let t_end = 5.0;
    let dt = 1e-3;
    let mut ic = FlowState::constant(&g, p.rho_bar, [0.0; 3]);
    for j in 0..g.n3 {
        let x = g.x3(j);
        ic.rho[j] += 2e-3 * (2.0 * std::f64::consts::PI * x).cos();
        ic.m[0][j] += 1e-3 * (2.0 * std::f64::consts::PI * x).sin();
    }
    let mut boosted = ic.clone();
    for j in 0..g.n3 {
        boosted.m[2][j] += boosted.rho[j] * c3;
    }
    let cfg = SolverConfig::new(Scheme::SemiImplicit, DtControl::Fixed(dt), t_end, t_end);
    let mut sa = Stepper::new(g, p);
    let mut sb = Stepper::new(g, p);
    let steps = (t_end / dt).round() as usize;
    let mut a = ic;
    let mut b = boosted;
    for k in 0..steps {
        sa.step(&mut a, &cfg, dt, None, k).unwrap();
        sb.step(&mut b, &cfg, dt, None, k).unwrap();
    }
    let field_scale = 1.0 + p.rho_bar * c3;
    let tol = 10.0 * (g.h3 * g.h3 + dt * dt) * field_scale;
    let mut worst = 0.0_f64;
    for j in 0..g.n3 {
        worst = worst.max((b.rho[j] - a.rho[j]).abs());
        worst = worst.max((b.m[2][j] - (a.m[2][j] + a.rho[j] * c3)).abs());
        worst = worst.max((b.m[0][j] - a.m[0][j]).abs());
    }
    assert!(worst < tol, "covariance gap {worst:.3e} vs tol {tol:.3e}");
    pass_line(
        "criterion 04 galilean covariance",
        &format!("max gap {worst:.3e} < 10 (h^2 + dt^2) scale = {tol:.3e} at t = 5"),
    );
}

#[test]
fn acceptance_05_coincidence_identity() {
    // torus runs from (rho_bar, +-m_bar) + the same perturbation stay
    // related by m_+ = m_- + 2 rho_- u_bar (1D: the transverse shift is
    // trivial)
    let p = localized_params();
    let g = HybridGrid::torus(1, 1, 64).unwrap();
    let mb = p.m_bar3();
    let mut minus = FlowState::constant(&g, p.rho_bar, [-mb[0], -mb[1], -mb[2]]);
    let mut plus = FlowState::constant(&g, p.rho_bar, mb);
    for j in 0..g.n3 {
        let x = g.x3(j);
        let v = 2e-3 * (2.0 * std::f64::consts::PI * x).cos();
        let w = 1e-3 * (2.0 * std::f64::consts::PI * x).sin();
        minus.rho[j] += v;
        plus.rho[j] += v;
        minus.m[2][j] += w;
        plus.m[2][j] += w;
        minus.m[0][j] += 0.5 * w;
        plus.m[0][j] += 0.5 * w;
    }
    let dt = 1e-3;
    let t_end = 5.0;
    let cfg = SolverConfig::new(Scheme::SemiImplicit, DtControl::Fixed(dt), t_end, t_end);
    let mut sm = Stepper::new(g, p);
    let mut sp = Stepper::new(g, p);
    for k in 0..(t_end / dt).round() as usize {
        sm.step(&mut minus, &cfg, dt, None, k).unwrap();
        sp.step(&mut plus, &cfg, dt, None, k).unwrap();
    }
    let field_scale = p.rho_bar + mb[0].abs();
    let tol = 5.0 * (g.h3 * g.h3 + dt * dt) * field_scale;
    let mut worst = 0.0_f64;
    for j in 0..g.n3 {
        worst = worst.max((plus.rho[j] - minus.rho[j]).abs());
        worst = worst.max((plus.m[2][j] - minus.m[2][j]).abs());
        worst = worst
            .max((plus.m[0][j] - (minus.m[0][j] + 2.0 * minus.rho[j] * p.u_bar[0])).abs());
    }
    assert!(worst < tol, "coincidence gap {worst:.3e} vs tol {tol:.3e}");
    pass_line(
        "criterion 05 coincidence identity",
        &format!("max gap {worst:.3e} < 5 (h^2 + dt^2) scale = {tol:.3e} at t = 5"),
    );
}

#[test]
fn acceptance_06_torus_decay() {
    // second viscosity 2 puts the slow acoustic branch near rate 0.35, so
    // the fit window [2, 40] stays far above round-off
    let params = PhysParams::new(1.4, 1.0, 2.0, 1.0, [1.0, 0.0], 16.0).unwrap();
    let sc = TorusScenario {
        params,
        dim: 1,
        n2: 1,
        n3: 64,
        solver: SolverConfig::new(Scheme::SemiImplicit, DtControl::Fixed(8e-4), 40.0, 0.25),
        eps: 1e-2,
        modes: vec![
            Mode { field: 0, amp: 1.0, k2: 0, k3: 1, phase: 0.0 },
            Mode { field: 3, amp: 0.7, k2: 0, k3: 1, phase: 1.2 },
            Mode { field: 1, amp: 0.5, k2: 0, k3: 1, phase: 0.4 },
        ],
        background_sign: 1.0,
        fit_window: Some((2.0, 40.0)),
    };
    let out = pipeline::run_torus_decay(&sc).unwrap();
    assert!(out.converged);
    assert!(out.mean_drift_max < 1e-12, "mean drift {:.3e}", out.mean_drift_max);
    let fit = out.fit.expect("decay fit");
    assert!(fit.slope < 0.0, "decay rate {:.4}", fit.slope);
    assert!(fit.r2 > 0.99, "r2 {}", fit.r2);
    pass_line(
        "criterion 06 torus decay",
        &format!(
            "rate {:.4} (recorded), r2 {:.5} > 0.99, mean drift {:.2e} < 1e-12",
            fit.slope, fit.r2, out.mean_drift_max
        ),
    );
}

#[test]
fn acceptance_07_shift_ledger() {
    // eps = 0: sigma stays identically zero
    let mut zero = sheet2d_scenario();
    zero.eps = 0.0;
    zero.dim = 1;
    zero.n2 = 1;
    zero.modes = vec![Mode { field: 0, amp: 1.0, k2: 0, k3: 1, phase: 0.0 }];
    zero.half_width = 24.0;
    zero.solver = SolverConfig::new(Scheme::ExplicitRk2, DtControl::Fixed(3.5e-3), 10.0, 0.5);
    zero.windows = FitWindows { flat: (1.0, 10.0), sharp: (1.0, 10.0), error_terms: (1.0, 10.0) };
    zero.min_fit_amplitude = 1e-5;
    let out0 = pipeline::run_periodic_sheet(&zero).unwrap();
    assert!(out0.max_abs_sigma < 1e-14, "eps = 0 sigma drifted to {:.3e}", out0.max_abs_sigma);

    // eps = 1e-2: zero-mass audit bounded by 1e-8 x initial L1 for t <= 100,
    // and |sigma'| fits a decaying exponential
    let out = sheet2d_run();
    let bound = 1e-8 * out.initial_l1;
    assert!(
        out.mass_audit_max < bound,
        "mass audit {:.3e} vs 1e-8 L1 = {bound:.3e}",
        out.mass_audit_max
    );
    let fit = fitted(&out.fit_sigma_dot, "sigma'");
    assert!(fit.slope < 0.0 && fit.r2 > 0.95, "sigma' rate {:.3}, r2 {:.4}", fit.slope, fit.r2);
    pass_line(
        "criterion 07 shift ledger",
        &format!(
            "eps=0 sigma {:.1e} < 1e-14; audit {:.2e} < 1e-8 L1 ({:.2e}); |sigma'| rate {:.3}, r2 {:.4} > 0.95",
            out0.max_abs_sigma, out.mass_audit_max, bound, fit.slope, fit.r2
        ),
    );
}

#[test]
fn acceptance_08_error_term_decay() {
    let out = sheet2d_run();
    let f0 = fitted(&out.fit_f0, "f0");
    let g = fitted(&out.fit_g, "g");
    let ga = fitted(&out.fit_g_anti, "G");
    for (name, fit) in [("f0", &f0), ("g", &g), ("G", &ga)] {
        assert!(fit.slope < 0.0, "{name} rate {:.3}", fit.slope);
        assert!(fit.r2 > 0.95, "{name} r2 {:.4}", fit.r2);
    }
    // zero-mode identities: the flat parts of f0 and f2_3 vanish
    let mut worst_rel = 0.0_f64;
    for r in &out.rows {
        if r.audits.f2_l2 > 1e-12 {
            worst_rel = worst_rel
                .max(r.audits.f0_flat_l2 / r.audits.f2_l2)
                .max(r.audits.f23_flat_l2 / r.audits.f2_l2);
        }
    }
    assert!(worst_rel < 1e-8, "zero-mode identity ratio {worst_rel:.3e}");
    pass_line(
        "criterion 08 error-term decay",
        &format!(
            "rates f0 {:.3} / g {:.3} / G {:.3}, all r2 > 0.95; flat identities < {worst_rel:.1e} of ||f2||",
            f0.slope, g.slope, ga.slope
        ),
    );
}

#[test]
fn acceptance_09_headline_periodic_decay() {
    let out = headline_run();
    let fit = fitted(&out.fit_flat, "sup(phi_flat, zeta_flat)");
    assert!(
        (fit.slope + 0.75).abs() <= 0.15,
        "headline slope {:.4} not within -0.75 +- 0.15",
        fit.slope
    );
    assert!(fit.r2 > 0.98, "headline r2 {:.5}", fit.r2);

    // 2D variant: sharp modes decay exponentially
    let out2 = sheet2d_run();
    let sharp = fitted(&out2.fit_sharp, "sup sharp");
    assert!(sharp.slope < 0.0, "sharp rate {:.3}", sharp.slope);
    assert!(sharp.r2 > 0.98, "sharp r2 {:.5}", sharp.r2);
    pass_line(
        "criterion 09 headline periodic decay",
        &format!(
            "1D slope {:.4} (target -0.75 += 0.15), r2 {:.5} > 0.98; 2D sharp rate {:.3} (recorded), r2 {:.5} > 0.98",
            fit.slope, fit.r2, sharp.slope, sharp.r2
        ),
    );
}

#[test]
fn acceptance_10_headline_localized_decay() {
    let out = localized_run();
    let fit = fitted(&out.fit_flat, "sup(phi_flat, zeta_flat)");
    assert!(
        (fit.slope + 0.5).abs() <= 0.15,
        "localized slope {:.4} not within -0.5 +- 0.15",
        fit.slope
    );
    assert!(fit.r2 > 0.98, "localized r2 {:.5}", fit.r2);
    assert!(out.mass_drift_max < 1e-10, "mass drift {:.3e}", out.mass_drift_max);
    pass_line(
        "criterion 10 headline localized decay",
        &format!(
            "slope {:.4} (target -0.5 +- 0.15), r2 {:.5} > 0.98; mass conserved to {:.2e} < 1e-10",
            fit.slope, fit.r2, out.mass_drift_max
        ),
    );
}

#[test]
fn acceptance_11_localized_error_envelope() {
    // quick dedicated lattice plus the audit carried by the long run
    let params = localized_params();
    let line = HybridGrid::line(1, 200.0, 4000, 1).unwrap();
    let alphas = [0.01, -0.008, 0.0, 0.012];
    let eps = 0.05; // weighted-norm measure of data producing these alphas
    let mut worst = [0.0_f64; 2];
    for t in [0.0, 2.0, 10.0, 40.0, 120.0] {
        let terms = vsheet_core::ansatz::error_terms_localized(alphas, t, &line, &params);
        let m = pipeline::envelope_margins(
            &line,
            &terms,
            alphas,
            t,
            eps,
            ENVELOPE_CONSTANT,
            &params,
        );
        worst[0] = worst[0].max(m[0]);
        worst[1] = worst[1].max(m[1]);
    }
    assert!(worst[0] <= 1.0 && worst[1] <= 1.0, "lattice margins {worst:?}");

    let out = localized_run();
    assert!(
        out.envelope_margin_max[0] <= 1.0 && out.envelope_margin_max[1] <= 1.0,
        "run margins {:?}",
        out.envelope_margin_max
    );
    pass_line(
        "criterion 11 localized error envelope",
        &format!(
            "lattice margins [{:.3}, {:.3}], run margins [{:.3}, {:.3}] <= 1 with one calibrated constant",
            worst[0], worst[1], out.envelope_margin_max[0], out.envelope_margin_max[1]
        ),
    );
}

#[test]
fn acceptance_12_energy_ledger_boundedness() {
    let out = headline_run();
    let t_end = out.rows.last().unwrap().t;
    let early = t_end / 10.0;
    let functionals: [(&str, fn(&pipeline::PeriodicLedgerRow) -> f64); 2] =
        [("a0", |r| r.energy.a0), ("a1", |r| r.energy.a1)];
    for (name, f) in functionals {
        let early_max =
            out.rows.iter().filter(|r| r.t <= early).map(f).fold(0.0_f64, f64::max);
        let overall = out.rows.iter().map(f).fold(0.0_f64, f64::max);
        assert!(
            overall <= 2.0 * early_max,
            "{name}: overall {overall:.3e} vs early {early_max:.3e}"
        );
    }
    let b_int = |lo: f64| -> f64 {
        out.rows
            .windows(2)
            .filter(|w| w[0].t >= lo)
            .map(|w| 0.5 * (w[0].energy.b0 + w[1].energy.b0) * (w[1].t - w[0].t))
            .sum()
    };
    let total = b_int(0.0);
    let last = b_int(0.9 * t_end);
    assert!(last < 0.05 * total, "B0 integral increment {last:.3e} vs total {total:.3e}");
    pass_line(
        "criterion 12 energy-ledger boundedness",
        &format!(
            "sup A within 2x early max; B0 integral {total:.3e} with last-10% increment {:.2}%",
            100.0 * last / total
        ),
    );
}

#[test]
fn acceptance_13_diagnostics_identities() {
    let mut worst_zeta = 0.0_f64;
    let mut worst_psi = 0.0_f64;
    let mut worst_pyth = 0.0_f64;
    for r in &headline_run().rows {
        worst_zeta = worst_zeta.max(r.zeta_identity_residual);
        worst_psi = worst_psi.max(r.psi_identity_residual);
        worst_pyth = worst_pyth.max(r.pythagoras_residual);
    }
    for r in &localized_run().rows {
        worst_zeta = worst_zeta.max(r.zeta_identity_residual);
        worst_psi = worst_psi.max(r.psi_identity_residual);
        worst_pyth = worst_pyth.max(r.pythagoras_residual);
    }
    assert!(worst_zeta < 1e-12, "zeta identity residual {worst_zeta:.3e}");
    assert!(worst_psi < 1e-12, "psi identity residual {worst_psi:.3e}");
    assert!(worst_pyth < 1e-12, "mode-split pythagoras residual {worst_pyth:.3e}");

    // Z3 = Psi3 exactly: the normal viscous-wave velocity vanishes
    let p = localized_params();
    let g = HybridGrid::line(1, 30.0, 600, 1).unwrap();
    let bundle = vsheet_core::ansatz::assemble_localized([0.0; 4], 1.0, &g, &p).unwrap();
    let mut s = FlowState { t: 1.0, rho: bundle.rho.clone(), m: bundle.m.clone() };
    for i in 0..g.n3 {
        let x = g.x3(i);
        s.rho[i] += 0.01 * (-x * x / 9.0).exp();
        s.m[2][i] += 0.02 * (-x * x / 4.0).exp() * x;
    }
    let pert = diagnostics::extract_perturbation(&g, &s, &bundle, &p).unwrap();
    let z = diagnostics::build_z(&g, &pert, &p, 1.0);
    assert_eq!(z.z[2], z.pair.psi[2], "Z3 must equal Psi3 bitwise");
    pass_line(
        "criterion 13 diagnostics identities",
        &format!(
            "zeta {worst_zeta:.1e}, psi {worst_psi:.1e}, pythagoras {worst_pyth:.1e} all < 1e-12; Z3 = Psi3 exactly"
        ),
    );
}

// keep the solver cap helper linked (documents the dt choices above)
#[allow(dead_code)]
fn caps_documentation() {
    let _ = solver::acoustic_cn_dt_cap(
        &HybridGrid::line(1, 300.0, 48000, 1).unwrap(),
        &headline_params(),
    );
    let _ = grid::integrate_profile(
        &HybridGrid::line(1, 1.0, 16, 1).unwrap(),
        &[0.0; 16],
    );
}
