use std::sync::Arc;

use approx::assert_relative_eq;

use super::*;
use crate::grid::{project, Density, GridSpec};
use crate::kernels::{CoagulationKernel, FragmentationSpec};
use crate::observables::moment;
use crate::oracles::{constant_coagulation, l1_relative_error};

fn grid(x_min: f64, x_max: f64, n: usize) -> Arc<GridSpec> {
    Arc::new(GridSpec::new(x_min, x_max, n).unwrap())
}

fn exp_density(g: &Arc<GridSpec>) -> Density {
    project(|x: f64| (-x).exp(), g).unwrap()
}

fn constant() -> CoagulationKernel {
    CoagulationKernel::Constant { k0: 1.0 }
}

fn assemble(
    k: Option<&CoagulationKernel>,
    f: Option<&FragmentationSpec>,
    g: &Arc<GridSpec>,
    truncation: TruncationMode,
) -> OperatorTables {
    let options = AssemblyOptions {
        truncation,
        ..AssemblyOptions::default()
    };
    OperatorTables::assemble(k, f, g.clone(), options).unwrap()
}

fn mass_rate(t: &OperatorTables, numbers: &[f64]) -> (f64, Rates) {
    let r = t.rates(numbers);
    let m: f64 = r.numbers.iter().zip(t.grid().pivots()).map(|(n, p)| n * p).sum();
    (m, r)
}

#[test]
fn constant_kernel_death_table_is_cell_width() {
    let g = grid(0.1, 10.0, 8);
    let classical = assemble(Some(&constant()), None, &g, TruncationMode::ClassicalTruncation);
    let conservative = assemble(Some(&constant()), None, &g, TruncationMode::ConservativeTruncation);
    let p = g.pivots();
    for i in 0..8 {
        for j in 0..8 {
            assert_eq!(classical.death_entry(i, j), Some(g.widths()[j]));
            let expect = if p[i] + p[j] > g.x_max() { 0.0 } else { g.widths()[j] };
            assert_eq!(conservative.death_entry(i, j), Some(expect));
        }
    }
}

#[test]
fn pair_weights_conserve_mass() {
    let g = grid(1e-3, 1e3, 64);
    for k in [
        constant(),
        CoagulationKernel::Shear { k0: 1.0 },
        CoagulationKernel::SumPower { k0: 1.0, mu1: 0.2, mu2: 0.6 },
    ] {
        let t = assemble(Some(&k), None, &g, TruncationMode::ConservativeTruncation);
        assert!(!t.coagulation_pairs().is_empty());
        for pair in t.coagulation_pairs() {
            let s = g.pivots()[pair.i as usize] + g.pivots()[pair.j as usize];
            assert_relative_eq!(pair.assigned_mass(&g), s, max_relative = 1e-12);
            if pair.w_hi != 0.0 {
                // Bracketed products keep the particle count too.
                assert_relative_eq!(pair.w_lo + pair.w_hi, 1.0, max_relative = 1e-12);
            }
            assert!(pair.w_lo >= 0.0 && pair.w_hi >= 0.0);
        }
    }
}

#[test]
fn binary_breakage_rows_hold_two_fragments() {
    let g = grid(1e-3, 1e3, 64);
    let f = FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap();
    let t = assemble(None, Some(&f), &g, TruncationMode::ConservativeTruncation);
    let p = g.pivots();
    for j in 0..64 {
        let y = p[j];
        let s = t.loss_rate(j).unwrap();
        assert_eq!(s, y);
        // Interval number integrals the row is built from: exactly N = 2.
        let mut exact = f.breakage_partial_number(y, 0.0, g.x_min()).unwrap()
            + f.breakage_partial_number(y, g.x_min(), p[0]).unwrap();
        for k in 0..j {
            exact += f.breakage_partial_number(y, p[k], p[k + 1]).unwrap();
        }
        assert!((s * exact - 2.0 * s).abs() <= 1e-10 * s, "row {j}: {exact}");
        // The table itself reproduces 2 S(p_j) up to the defect of the single
        // target below p_0 (mass is kept there, not number), which loses
        // (p_0 − x_min)² / (y p_0) fragments per event.
        let (_, dust_number) = t.dust_per_event(j).unwrap();
        let row: f64 = (0..=j).map(|i| t.birth_entry(j, i).unwrap()).sum();
        let defect = (p[0] - g.x_min()).powi(2) / (y * p[0]);
        assert_relative_eq!(row + s * dust_number, 2.0 * s - s * defect, max_relative = 1e-10);
        // Mass balance of the row.
        let (dust_mass, _) = t.dust_per_event(j).unwrap();
        let mass: f64 = (0..=j).map(|i| t.birth_entry(j, i).unwrap() * p[i]).sum();
        assert_relative_eq!(mass + s * dust_mass, s * y, max_relative = 1e-12);
    }
}

#[test]
fn multiple_breakage_rows_conserve_mass() {
    let g = grid(1e-9, 1e3, 128);
    for alpha in [-0.9, -0.5, 0.0, 1.5] {
        let f = FragmentationSpec::power_law(0.5, 0.5, alpha).unwrap();
        let t = assemble(None, Some(&f), &g, TruncationMode::ConservativeTruncation);
        for j in 0..128 {
            let s = t.loss_rate(j).unwrap();
            let (dust_mass, _) = t.dust_per_event(j).unwrap();
            let mass: f64 = (0..=j).map(|i| t.birth_entry(j, i).unwrap() * g.pivots()[i]).sum();
            assert_relative_eq!(mass + s * dust_mass, s * g.pivots()[j], max_relative = 1e-12);
        }
    }
}

#[test]
fn zero_density_has_zero_rate() {
    let g = grid(1e-3, 1e3, 32);
    let f = FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap();
    let t = assemble(Some(&constant()), Some(&f), &g, TruncationMode::ClassicalTruncation);
    let r = t.rhs(&Density::zeros(g.clone())).unwrap();
    assert!(r.values().iter().all(|&v| v == 0.0));
}

#[test]
fn constant_kernel_number_rate() {
    let g = grid(1e-3, 1e3, 256);
    let t = assemble(Some(&constant()), None, &g, TruncationMode::ConservativeTruncation);
    let d = exp_density(&g);
    let r = t.rhs(&d).unwrap();
    let dm0: f64 = r.values().iter().zip(g.widths()).map(|(v, w)| v * w).sum();
    let m0 = moment(&d, 0.0);
    assert_relative_eq!(dm0, -0.5 * m0 * m0, max_relative = 0.02);
    assert_relative_eq!(dm0, -0.5, max_relative = 0.02);
}

#[test]
fn monodisperse_linear_breakage_rates() {
    let g = grid(1e-3, 1e3, 64);
    let f = FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap();
    let t = assemble(None, Some(&f), &g, TruncationMode::ConservativeTruncation);
    let c = 40;
    let p = g.pivots()[c];
    let mut numbers = vec![0.0; 64];
    numbers[c] = 3.0;
    let r = t.rates(&numbers);
    assert_eq!(t.loss_rate(c), Some(p));
    // Net change in the parent cell: its own fragment births minus p N.
    assert_relative_eq!(r.numbers[c], t.birth_entry(c, c).unwrap() * 3.0 - p * 3.0, max_relative = 1e-14);
    // Number gain p N (N − 1) = p N, split between grid, dust and defect.
    let gain: f64 = r.numbers.iter().sum();
    assert_relative_eq!(gain + r.dust_number - r.number_defect, p * 3.0, max_relative = 1e-12);
    assert!(r.numbers[c + 1..].iter().all(|&v| v == 0.0));
}

#[test]
fn conservative_truncation_conserves_mass_rate() {
    let g = grid(1e-3, 10.0, 48);
    let d = project(|x: f64| (-x / 3.0).exp(), &g).unwrap();
    let numbers = d.numbers();
    let cons = assemble(Some(&constant()), None, &g, TruncationMode::ConservativeTruncation);
    let (m, r) = mass_rate(&cons, &numbers);
    assert!(m.abs() <= 1e-12 * moment(&d, 1.0), "mass rate {m}");
    assert_eq!(r.overflow_mass, 0.0);

    let classical = assemble(Some(&constant()), None, &g, TruncationMode::ClassicalTruncation);
    let (m, r) = mass_rate(&classical, &numbers);
    assert!(r.overflow_mass > 0.0);
    assert_relative_eq!(m + r.overflow_mass, 0.0, epsilon = 1e-12 * moment(&d, 1.0));
}

#[test]
fn grid_mismatch_and_budget_errors() {
    let g = grid(1e-3, 1e3, 32);
    let t = assemble(Some(&constant()), None, &g, TruncationMode::ConservativeTruncation);
    let other = Density::zeros(grid(1e-3, 1e3, 16));
    assert!(matches!(t.rhs(&other), Err(SolverError::GridMismatch)));
    let tiny = AssemblyOptions {
        max_table_bytes: 1024,
        ..AssemblyOptions::default()
    };
    let err = OperatorTables::assemble(Some(&constant()), None, g, tiny).unwrap_err();
    assert!(matches!(err, SolverError::TableBudget { .. }));
    assert!(err.to_string().contains("coarser grid"));
}

#[test]
fn zero_density_step_takes_target() {
    let g = grid(1e-3, 1e3, 32);
    let t = assemble(Some(&constant()), None, &g, TruncationMode::ConservativeTruncation);
    let d = Density::zeros(g.clone());
    let (next, stats) = step(&t, &d, 0.25, ControllerConfig::default()).unwrap();
    assert_eq!(stats.dt, 0.25);
    assert_eq!(next.values(), d.values());
    assert!(step(&t, &d, 0.0, ControllerConfig::default()).is_err());
}

#[test]
fn stiff_problem_reports_underflow() {
    let g = grid(1e-3, 1e3, 32);
    let f = FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap();
    let t = assemble(None, Some(&f), &g, TruncationMode::ConservativeTruncation);
    let config = ControllerConfig {
        dt_min: 0.1,
        ..ControllerConfig::default()
    };
    let err = step(&t, &exp_density(&g), 1.0, config).unwrap_err();
    assert!(matches!(err, SolverError::Stiffness { .. }));
    assert!(err.to_string().contains("implicit"));
}

#[test]
fn steps_are_deterministic_and_report_fluxes() {
    let g = grid(1e-3, 1e3, 64);
    let f = FragmentationSpec::power_law(1.0, 0.5, -0.5).unwrap();
    let t = assemble(Some(&constant()), Some(&f), &g, TruncationMode::ClassicalTruncation);
    let d = exp_density(&g);
    let a = step(&t, &d, 0.1, ControllerConfig::default()).unwrap();
    let b = step(&t, &d, 0.1, ControllerConfig::default()).unwrap();
    assert_eq!(a, b);
    let stats = a.1;
    assert!(stats.dt > 0.0);
    assert!(stats.overflow_flux >= 0.0 && stats.dust_flux >= 0.0);
}

#[test]
fn zero_end_time_keeps_initial_snapshot() {
    let g = grid(1e-3, 1e3, 32);
    let t = assemble(Some(&constant()), None, &g, TruncationMode::ConservativeTruncation);
    let d = exp_density(&g);
    let r = evolve(&t, &d, 0.0, &OutputSchedule::default(), ControllerConfig::default(), &[]).unwrap();
    assert_eq!(r.snapshots.len(), 1);
    assert_eq!(r.times(), &[0.0]);
    assert!(evolve(&t, &d, -1.0, &OutputSchedule::default(), ControllerConfig::default(), &[]).is_err());
}

#[test]
fn schedule_resolution() {
    assert_eq!(OutputSchedule::Uniform { count: 4 }.resolve(2.0), vec![0.5, 1.0, 1.5, 2.0]);
    let times = OutputSchedule::Times { times: vec![1.0, 0.5, 0.5] };
    assert_eq!(times.resolve(3.0), vec![0.5, 1.0, 3.0]);
    assert!(!OutputSchedule::Times { times: vec![4.0] }.violations(3.0).is_empty());
    assert!(!OutputSchedule::Uniform { count: 0 }.violations(3.0).is_empty());
}

fn run_constant(n: usize, t_end: f64) -> RunReport {
    let g = grid(1e-3, 1e3, n);
    let t = assemble(Some(&constant()), None, &g, TruncationMode::ConservativeTruncation);
    evolve(
        &t,
        &exp_density(&g),
        t_end,
        &OutputSchedule::Uniform { count: 10 },
        ControllerConfig::default(),
        &[],
    )
    .unwrap()
}

#[test]
fn constant_kernel_benchmark_long_time() {
    let r = run_constant(256, 10.0);
    let err = l1_relative_error(r.final_density(), |x| constant_coagulation(10.0, x)).unwrap();
    assert!(err <= 0.02, "L1 error {err}");
    assert_relative_eq!(r.moments.moment(0.0).unwrap()[10], 2.0 / 12.0, max_relative = 0.01);
    // Conservative mode: mass is exact up to time-integration error.
    let m1 = r.moments.moment(1.0).unwrap();
    for (k, m) in m1.iter().enumerate() {
        let t = r.times()[k];
        assert!((m - m1[0]).abs() <= 1e-9 * m1[0] * t.max(1.0), "t = {t}: {m}");
    }
    for d in &r.snapshots {
        let max = d.values().iter().cloned().fold(0.0, f64::max);
        assert!(d.values().iter().all(|&v| v >= -1e-12 * max));
    }
}

#[test]
fn constant_kernel_error_halves_with_resolution() {
    let coarse = run_constant(128, 1.0);
    let fine = run_constant(256, 1.0);
    let e = |r: &RunReport| l1_relative_error(r.final_density(), |x| constant_coagulation(1.0, x)).unwrap();
    let (ec, ef) = (e(&coarse), e(&fine));
    assert!(ec / ef >= 1.8, "errors {ec} -> {ef}");
}

#[test]
fn combined_run_keeps_mass() {
    let g = grid(1e-3, 1e2, 160);
    let f = FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap();
    let t = assemble(Some(&constant()), Some(&f), &g, TruncationMode::ConservativeTruncation);
    let r = evolve(
        &t,
        &exp_density(&g),
        5.0,
        &OutputSchedule::Uniform { count: 5 },
        ControllerConfig::default(),
        &[],
    )
    .unwrap();
    let m1 = r.moments.moment(1.0).unwrap();
    let drift = (m1[5] - m1[0]).abs() / m1[0];
    assert!(drift <= 5e-3, "drift {drift}");
    assert!(r.mass_balance.max_residual <= 1e-12);
}

#[test]
fn fragmentation_number_balance() {
    let g = grid(1e-9, 1e3, 256);
    let f = FragmentationSpec::power_law(1.0, 1.0, -0.5).unwrap();
    let t = assemble(None, Some(&f), &g, TruncationMode::ConservativeTruncation);
    let r = evolve(
        &t,
        &exp_density(&g),
        1.0,
        &OutputSchedule::Uniform { count: 20 },
        ControllerConfig::default(),
        &[],
    )
    .unwrap();
    let m0 = r.moments.moment(0.0).unwrap();
    let source = |d: &Density| -> f64 {
        let n = f.fragment_count();
        (n - 1.0) * d.numbers().iter().enumerate().map(|(i, x)| t.loss_rate(i).unwrap() * x).sum::<f64>()
    };
    for k in 1..r.snapshots.len() {
        let dt = r.times()[k] - r.times()[k - 1];
        let fd = (m0[k] - m0[k - 1]) / dt;
        let avg = 0.5 * (source(&r.snapshots[k]) + source(&r.snapshots[k - 1]));
        assert_relative_eq!(fd, avg, max_relative = 0.01);
    }
}

#[test]
fn pure_fragmentation_mass_net_of_dust() {
    let g = grid(1e-3, 1e3, 256);
    let f = FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap();
    let t = assemble(None, Some(&f), &g, TruncationMode::ConservativeTruncation);
    let r = evolve(
        &t,
        &exp_density(&g),
        1.0,
        &OutputSchedule::Uniform { count: 4 },
        ControllerConfig::default(),
        &[],
    )
    .unwrap();
    let m1 = r.moments.moment(1.0).unwrap();
    for k in 0..m1.len() {
        let net = m1[k] + r.dust_cum[k];
        assert!((net - m1[0]).abs() <= 1e-8 * m1[0], "{net} vs {}", m1[0]);
    }
    for st in &r.step_log {
        assert!(st.dust_flux >= 0.0 && st.dt > 0.0);
    }
}
