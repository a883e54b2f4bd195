use vsheet_core::model::PhysParams;
use vsheet_core::pipeline::{self, FitWindows, Mode, SheetScenario, ShiftMode};
use vsheet_core::solver::{DtControl, Scheme, SolverConfig};

#[test]
#[ignore]
fn audit_components_short() {
    let params = PhysParams::new(1.4, 1.0, 0.0, 1.0, [1.0, 0.0], 16.0).unwrap();
    let sc = SheetScenario {
        params,
        dim: 1,
        half_width: 112.0,
        cells_per_unit: 20,
        n2: 1,
        solver: SolverConfig::new(Scheme::ExplicitRk2, DtControl::Fixed(5.5e-4), 4.0, 0.25),
        eps: 1e-2,
        modes: vec![
            Mode { field: 0, amp: 1.0, k2: 0, k3: 1, phase: 0.0 },
            Mode { field: 1, amp: 0.6, k2: 0, k3: 1, phase: 0.7 },
            Mode { field: 3, amp: 0.8, k2: 0, k3: 1, phase: 1.9 },
        ],
        shift_mode: ShiftMode::ZeroMassConstrained,
        windows: FitWindows { flat: (1.0, 4.0), sharp: (1.0, 4.0), error_terms: (0.5, 4.0) },
        min_fit_amplitude: 1e-30,
        slice_times: vec![],
    };
    let out = pipeline::run_periodic_sheet(&sc).unwrap();
    for r in &out.rows {
        println!(
            "t = {:6.3}  mass = [{:+.3e} {:+.3e} {:+.3e} {:+.3e}]  sigma = {:+.4e}  sup = {:.3e}",
            r.t, r.mass[0], r.mass[1], r.mass[2], r.mass[3], r.sigma, r.sup_flat
        );
    }
}
