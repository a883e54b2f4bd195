use vsheet_core::model::PhysParams;
use vsheet_core::pipeline::{self, FitWindows, Mode, SheetScenario, ShiftMode};
use vsheet_core::solver::{DtControl, Scheme, SolverConfig};

#[test]
#[ignore]
fn headline_periodic_dress_rehearsal() {
    for eps in [1e-2, 0.0] {
        let params = PhysParams::new(2.0, 0.004, 0.0, 1.0, [1.0, 0.0], 16.0).unwrap();
        let sc = SheetScenario {
            params,
            dim: 1,
            half_width: 300.0,
            cells_per_unit: 80,
            n2: 1,
            solver: SolverConfig::new(Scheme::SemiImplicit, DtControl::Fixed(2e-3), 500.0, 1.0),
            eps,
            modes: vec![
                Mode { field: 0, amp: 1.0, k2: 0, k3: 1, phase: 0.0 },
                Mode { field: 1, amp: 0.6, k2: 0, k3: 1, phase: 0.7 },
                Mode { field: 3, amp: 0.8, k2: 0, k3: 1, phase: 1.9 },
            ],
            shift_mode: ShiftMode::ZeroMassConstrained,
            windows: FitWindows {
                flat: (50.0, 500.0),
                sharp: (1.0, 10.0),
                error_terms: (2.0, 30.0),
            },
            min_fit_amplitude: 1e-30,
            slice_times: vec![],
        };
        let t0 = std::time::Instant::now();
        let out = pipeline::run_periodic_sheet(&sc).unwrap();
        println!("eps {eps:.0e}: wall {:.1?} steps {}", t0.elapsed(), out.steps);
        print!("  ");
        for t in [10.0, 25.0, 50.0, 100.0, 200.0, 350.0, 500.0] {
            let v = out
                .rows
                .iter()
                .min_by(|a, b| ((a.t - t).abs()).partial_cmp(&(b.t - t).abs()).unwrap())
                .unwrap()
                .sup_flat;
            print!("s({t:.0}) = {v:.3e}  ");
        }
        println!();
        println!("  audit {:.2e}  init_l1 {:.2e}  sigma_max {:.2e}", out.mass_audit_max, out.initial_l1, out.max_abs_sigma);
        println!("  fit_flat = {:?}", out.fit_flat);
        println!("  fit_g = {:?}  ", out.fit_g);
        // energy ledger boundedness statistics
        let early_max = out.rows.iter().filter(|r| r.t <= 50.0).map(|r| r.energy.a0).fold(0.0_f64, f64::max);
        let all_max = out.rows.iter().map(|r| r.energy.a0).fold(0.0_f64, f64::max);
        let b0_int: f64 = out.rows.windows(2).map(|w| 0.5 * (w[0].energy.b0 + w[1].energy.b0) * (w[1].t - w[0].t)).sum();
        let b0_last: f64 = out.rows.windows(2).filter(|w| w[0].t >= 450.0).map(|w| 0.5 * (w[0].energy.b0 + w[1].energy.b0) * (w[1].t - w[0].t)).sum();
        println!("  a0 early {early_max:.3e} overall {all_max:.3e}  b0_int {b0_int:.3e} last10% {b0_last:.3e}");
    }
}
