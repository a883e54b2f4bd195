use vsheet_core::model::PhysParams;
use vsheet_core::pipeline::{self, FitWindows, Mode, SheetScenario, ShiftMode};
use vsheet_core::solver::{DtControl, Scheme, SolverConfig};

#[test]
#[ignore]
fn thin_wave_signal_vs_floor() {
    for eps in [0.0, 1e-2] {
        let params = PhysParams::new(1.4, 0.004, 0.0, 1.0, [1.0, 0.0], 16.0).unwrap();
        let sc = SheetScenario {
            params,
            dim: 1,
            half_width: 48.0,
            cells_per_unit: 80,
            n2: 1,
            solver: SolverConfig::new(Scheme::SemiImplicit, DtControl::Fixed(2e-3), 60.0, 2.0),
            eps,
            modes: vec![
                Mode { field: 0, amp: 1.0, k2: 0, k3: 1, phase: 0.0 },
                Mode { field: 1, amp: 0.6, k2: 0, k3: 1, phase: 0.7 },
                Mode { field: 3, amp: 0.8, k2: 0, k3: 1, phase: 1.9 },
            ],
            shift_mode: ShiftMode::ZeroMassConstrained,
            windows: FitWindows { flat: (20.0, 60.0), sharp: (1.0, 10.0), error_terms: (2.0, 20.0) },
            min_fit_amplitude: 1e-30,
            slice_times: vec![],
        };
        let out = pipeline::run_periodic_sheet(&sc).unwrap();
        print!("eps {eps:.0e}: ");
        for t in [6.0, 10.0, 20.0, 30.0, 40.0, 60.0] {
            let v = out.rows.iter().min_by(|a, b| ((a.t - t).abs()).partial_cmp(&(b.t - t).abs()).unwrap()).unwrap().sup_flat;
            print!("s({t:.0}) = {v:.3e}  ");
        }
        println!("audit {:.1e} sigma {:.2e}", out.mass_audit_max, out.max_abs_sigma);
        if eps > 0.0 {
            println!("fit_flat = {:?}", out.fit_flat);
            println!("fit_sigma = {:?}", out.fit_sigma_dot);
            println!("fit_g = {:?}", out.fit_g);
        }
    }
}
