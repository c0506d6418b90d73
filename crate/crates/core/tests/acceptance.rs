//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use coagfrag::audit::{audit, recheck, suggest_constants, Hypothesis, SamplingPlan, Verdict};
use coagfrag::config::fixture;
use coagfrag::kernels::{CoagulationEnvelope, CoagulationKernel, FragmentationSpec, HypothesisConstants};
use coagfrag::observables::moment_ladder;
use coagfrag::oracles::{constant_coagulation, l1_relative_error};
use coagfrag::quadrature::tanh_sinh;
use coagfrag::runner;
use coagfrag::solver::evolve;
use coagfrag::stability::{gronwall_run, refinement_consistency};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Constant-kernel oracle on [1e-3, 1e3] x 256 at t = 1.
fn criterion_1() -> Outcome {
    let scenario = fixture("scott-constant").map_err(err)?.scenario().map_err(err)?;
    let start = Instant::now();
    let tables = scenario.tables().map_err(err)?;
    let d0 = scenario.initial_density().map_err(err)?;
    let report = evolve(&tables, &d0, 1.0, &scenario.schedule, scenario.controller, &[]).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let m0 = *report.moments.moment(0.0).map_err(err)?.last().unwrap();
    let m0_err = (m0 - 2.0 / 3.0).abs() / (2.0 / 3.0);
    let l1 = l1_relative_error(report.final_density(), |x| constant_coagulation(1.0, x)).map_err(err)?;
    check(
        scenario.grid.n_cells() == 256 && m0_err <= 0.01 && l1 <= 0.02 && elapsed <= 30.0,
        format!("M0(1) = {m0:.8} (rel. err {m0_err:.2e} <= 1e-2), L1 error {l1:.2e} <= 2e-2, runtime {elapsed:.2}s <= 30s"),
    )
}

/// Linear binary fragmentation oracle at t = 1.
fn criterion_2() -> Outcome {
    let scenario = fixture("ziff-linear-binary").map_err(err)?.scenario().map_err(err)?;
    let tables = scenario.tables().map_err(err)?;
    let d0 = scenario.initial_density().map_err(err)?;
    let report = evolve(&tables, &d0, 1.0, &scenario.schedule, scenario.controller, &[]).map_err(err)?;
    let m0 = *report.moments.moment(0.0).map_err(err)?.last().unwrap();
    let m1 = report.moments.moment(1.0).map_err(err)?;
    let m0_err = (m0 - 2.0).abs() / 2.0;
    let drift = (m1.last().unwrap() + report.mass_balance.dust_cum - m1[0]).abs() / m1[0];
    check(
        m0_err <= 0.01 && drift <= 1e-6,
        format!("M0(1) = {m0:.8} (rel. err {m0_err:.2e} <= 1e-2), M1 drift net of dust {drift:.2e} <= 1e-6"),
    )
}

/// Multiple fragmentation, N = 3: M0(t) = 1 + 2t on [0, 2].
fn criterion_3() -> Outcome {
    let scenario = fixture("powerlaw-number-growth").map_err(err)?.scenario().map_err(err)?;
    let tables = scenario.tables().map_err(err)?;
    let d0 = scenario.initial_density().map_err(err)?;
    let report = evolve(&tables, &d0, 2.0, &scenario.schedule, scenario.controller, &[]).map_err(err)?;
    let m0 = report.moments.moment(0.0).map_err(err)?;
    let worst = report
        .times()
        .iter()
        .zip(&m0)
        .map(|(t, m)| (m - (1.0 + 2.0 * t)).abs() / (1.0 + 2.0 * t))
        .fold(0.0, f64::max);
    check(
        worst <= 0.02 && report.times().len() >= 2,
        format!("max rel. deviation from 1+2t over {} samples: {worst:.2e} <= 2e-2", m0.len()),
    )
}

/// Closed-form partial mass reproduces y for 100 parents and three alphas.
fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_quad: f64 = 0.0;
    for alpha in [-0.9, -0.5, 0.0] {
        let f = FragmentationSpec::power_law(1.0, 1.0, alpha).map_err(err)?;
        for k in 0..100 {
            let y = 10f64.powf(-6.0 + 12.0 * k as f64 / 99.0);
            let whole = f.breakage_partial_mass(y, 0.0, y).map_err(err)?;
            let split = f.breakage_partial_mass(y, 0.0, y / 3.0).map_err(err)?
                + f.breakage_partial_mass(y, y / 3.0, y).map_err(err)?;
            worst = worst.max((whole - y).abs() / y).max((split - y).abs() / y);
            // Independent check by quadrature of x b(y, x).
            let q = tanh_sinh(&|x| x * f.breakage(y, x), 0.0, y, 1e-13, 12).value;
            worst_quad = worst_quad.max((q - y).abs() / y);
        }
    }
    check(
        worst <= 1e-12 && worst_quad <= 1e-9,
        format!("max rel. error {worst:.2e} <= 1e-12 (quadrature cross-check {worst_quad:.2e})"),
    )
}

/// Audit verdicts on the preset kernel families.
fn criterion_5() -> Outcome {
    let plan = SamplingPlan::default();
    let mut notes = Vec::new();
    let mut ok = true;
    for k in [
        CoagulationKernel::Shear { k0: 1.0 },
        CoagulationKernel::ModifiedSmoluchowski { k0: 1.0, c: 1.0 },
    ] {
        let c = suggest_constants(Some(&k), None).map_err(err)?;
        let r = audit(Some(&k), None, &c, &plan, 0).map_err(err)?;
        let pass = r.verdict(Hypothesis::A1) == Verdict::Pass && r.verdict(Hypothesis::A2) == Verdict::Pass;
        ok &= pass;
        notes.push(format!("{} A1-A2 {}", k.name(), if pass { "pass" } else { "FAIL" }));
    }

    let f = FragmentationSpec::power_law(1.0, 0.5, 0.0).map_err(err)?;
    let c = suggest_constants(None, Some(&f)).map_err(err)?;
    let env = c.fragmentation.unwrap();
    let r = audit(None, Some(&f), &c, &plan, 0).map_err(err)?;
    let pass = [Hypothesis::A3, Hypothesis::A4, Hypothesis::A5]
        .iter()
        .all(|&h| r.verdict(h) == Verdict::Pass)
        && env.nu == -0.5
        && env.l_gamma == 2.0;
    ok &= pass;
    notes.push(format!(
        "powerlaw-frag A3-A5 {} (nu = {}, L = {})",
        if pass { "pass" } else { "FAIL" },
        env.nu,
        env.l_gamma
    ));

    let product = CoagulationKernel::ProductPower { k0: 1.0, mu1: 1.0, mu2: 1.0 };
    let declared = HypothesisConstants {
        coagulation: Some(CoagulationEnvelope { k1: 1.0, mu: 0.99 }),
        fragmentation: None,
    };
    let first = audit(Some(&product), None, &declared, &plan, 7).map_err(err)?;
    let second = audit(Some(&product), None, &declared, &plan, 7).map_err(err)?;
    let a2 = first.get(Hypothesis::A2);
    let reproducible = first == second
        && !a2.witnesses.is_empty()
        && a2.witnesses.iter().all(|w| {
            recheck(w, Some(&product), None, &declared) == Some((w.lhs, w.rhs)) && w.lhs > w.rhs
        });
    let pass = a2.verdict == Verdict::Fail && reproducible;
    ok &= pass;
    let w = a2.witnesses.first();
    notes.push(format!(
        "product A2 {} with {} reproducible witnesses (first at {:?})",
        if a2.verdict == Verdict::Fail { "fails" } else { "PASSES" },
        a2.witnesses.len(),
        w.map(|w| w.points.clone()).unwrap_or_default()
    ));
    check(ok, notes.join("; "))
}

/// Moment ladder for (mu, nu, rho0, delta) = (0.5, -0.2, 1, 0.05).
fn criterion_6() -> Outcome {
    let r = moment_ladder(0.5, -0.2, 1.0, 0.05).map_err(err)?;
    let expect = [1.0, 1.3, 1.6];
    let seq_ok = r.sequence.len() == 3 && r.sequence.iter().zip(expect).all(|(a, b)| (a - b).abs() <= 1e-12);
    let inc_ok = (r.increment - 0.3).abs() <= 1e-15 && r.sequence.windows(2).all(|w| ((w[1] - w[0]) - 0.3).abs() <= 1e-12);
    let term = r.terminal_order.unwrap_or(f64::NAN);
    let term_ok = (term - 1.75).abs() <= 1e-12;
    check(
        seq_ok && inc_ok && term_ok,
        format!("sequence {:?}, increment {}, terminal {}", r.sequence, r.increment, term),
    )
}

/// Gronwall contraction on the combined scenario, plus bit-exact zero
/// distance for identical data.
fn criterion_7() -> Outcome {
    let config = fixture("gronwall-combined").map_err(err)?;
    let scenario = config.scenario().map_err(err)?;
    let trace = gronwall_run(&scenario, 1e-3, 0.05).map_err(err)?;
    let zero = gronwall_run(&scenario, 0.0, 0.05).map_err(err)?;
    let worst = trace
        .samples
        .iter()
        .map(|s| s.u / (s.bound * 1.05))
        .fold(0.0, f64::max);
    let phi_finite = trace.samples.iter().all(|s| s.phi.is_finite() && s.phi >= trace.l_frag);
    let exact_zero = zero.samples.iter().all(|s| s.u == 0.0);
    let t_last = trace.samples.last().map_or(0.0, |s| s.t);
    check(
        trace.holds() && trace.samples.len() == 21 && t_last == 2.0 && phi_finite && exact_zero,
        format!(
            "{} samples on [0, {t_last}], max u/(1.05 bound) = {worst:.3e}, phi finite and >= L_frag: {phi_finite}, \
             eps = 0 gives u == 0 exactly: {exact_zero}",
            trace.samples.len()
        ),
    )
}

/// Refinement 128 -> 256 -> 512 on the constant-kernel scenario.
fn criterion_8() -> Outcome {
    let scenario = fixture("scott-constant").map_err(err)?.scenario().map_err(err)?;
    let r = refinement_consistency(&scenario, &[128, 256, 512]).map_err(err)?;
    let order = r.min_order.unwrap_or(f64::NAN);
    let d: Vec<String> = r.pairs.iter().map(|p| format!("{:.3e}", p.distance)).collect();
    check(r.decreasing && order >= 1.0, format!("distances [{}], empirical order {order:.3} >= 1", d.join(", ")))
}

fn dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(err)?
        .map(|e| {
            let e = e.map_err(err)?;
            Ok((e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).map_err(err)?))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

/// Repeated runs of every fixture write bit-identical artifacts.
fn criterion_9() -> Outcome {
    let root = tempfile::tempdir().map_err(err)?;
    let mut compared = 0;
    for name in coagfrag::config::FIXTURES {
        let config = fixture(name).map_err(err)?;
        let a = root.path().join(format!("{name}-a"));
        let b = root.path().join(format!("{name}-b"));
        runner::run(&config, &a, false).map_err(err)?;
        runner::run(&config, &b, false).map_err(err)?;
        if name == "gronwall-combined" {
            runner::compare(&config, &a, None).map_err(err)?;
            runner::compare(&config, &b, None).map_err(err)?;
        }
        let (fa, fb) = (dir_bytes(&a)?, dir_bytes(&b)?);
        if fa != fb {
            return Err(format!("artifacts of `{name}` differ between runs"));
        }
        compared += fa.len();
    }
    check(compared > 0, format!("{compared} artifacts compared byte-for-byte across two runs of each fixture"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("constant-kernel oracle", criterion_1),
        ("linear binary fragmentation oracle", criterion_2),
        ("multiple fragmentation number growth", criterion_3),
        ("breakage mass conservation", criterion_4),
        ("hypothesis audit on kernel families", criterion_5),
        ("moment ladder", criterion_6),
        ("Gronwall contraction", criterion_7),
        ("grid-refinement consistency", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {tag}: {name}: {detail}", k + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
