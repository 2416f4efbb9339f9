//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line before asserting; the soft
//! estimates criterion reports SOFT-MISS when it misses with a diagnostic.

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinsense::dynamics::{apply_depolarizing, build_hamiltonian, evolve};
use spinsense::experiments::{find_peak, linspace, DEFAULT_WINDOW};
use spinsense::io::{execute, load_preset, parse_config, RunReport, Summary};
use spinsense::sequences::{
    classify_mapping_errors, mapping_coherences, mapping_targets, CalibrationVariant, MappingAgreement,
    MAPPING_RATIOS,
};
use spinsense::spin::{expectation, initial_state, DensityState, Observable, QubitPrep, SamplePrep, SpinSystemConfig};
use spinsense::dynamics::PropagatorCache;

fn report(n: u32, pass: bool, detail: &str, elapsed: Duration) {
    println!(
        "criterion {n}: {} {detail} [{:.2} s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
}

fn preset(name: &str) -> RunReport {
    execute(&load_preset(name).unwrap()).unwrap()
}

fn peak_of<'a>(r: &'a RunReport, column: &str) -> Option<&'a spinsense::experiments::PeakReport> {
    r.peaks
        .iter()
        .find(|p| p.column == column)
        .unwrap_or_else(|| panic!("no column {column}"))
        .peak
        .as_ref()
}

fn contrast_or_zero(r: &RunReport, column: &str) -> f64 {
    peak_of(r, column).map(|p| p.contrast).unwrap_or(0.0)
}

fn step(grid: &[f64]) -> f64 {
    (grid[1] - grid[0]).abs()
}

#[test]
fn criterion_01_free_evolution_ancilla_coherence() {
    let start = Instant::now();
    let g = 1.0;
    let taus = linspace(0.0, 4.0 * PI / g, 100);
    let mut literal = 0.0f64;
    let mut real_part = 0.0f64;
    let mut closed_form = 0.0f64;
    let mut invariance = 0.0f64;
    let mut reference: Option<Vec<Complex64>> = None;
    for j in [0.0, g / 80.0, g / 8.0] {
        for omega in [0.0, g / 10.0] {
            let cfg = SpinSystemConfig::single(omega, g, j, PI / 4.0);
            let h = build_hamiltonian(&cfg, false).unwrap();
            let rho0 = initial_state(&cfg, QubitPrep::XPlus, QubitPrep::XPlus, SamplePrep::MaxMixed).unwrap();
            let c0 = expectation(&rho0, Observable::CoherenceF).unwrap();
            let mut values = Vec::new();
            for &t in &taus {
                let c = expectation(&evolve(&rho0, &h, t).unwrap(), Observable::CoherenceF).unwrap();
                let stated = c0 * (0.5 * (1.0 + (g * t).cos()));
                literal = literal.max((c - stated).norm());
                real_part = real_part.max((c.re - stated.re).abs());
                let exact = c0 * (Complex64::new(1.0, 0.0) + Complex64::new(0.0, g * t).exp()) * 0.5;
                closed_form = closed_form.max((c - exact).norm());
                values.push(c);
            }
            match &reference {
                None => reference = Some(values),
                Some(r) => {
                    for (a, b) in r.iter().zip(&values) {
                        invariance = invariance.max((a - b).norm());
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = literal < 1e-10 && invariance < 1e-10 && elapsed.as_secs_f64() < 1.0;
    report(
        1,
        pass,
        &format!(
            "complex identity max err {literal:.3e} (tol 1e-10); real part {real_part:.3e}; \
             closed form (1+e^(i g t))/2 {closed_form:.3e}; J/omega_L invariance {invariance:.3e}"
        ),
        elapsed,
    );
    assert!(real_part < 1e-10 && closed_form < 1e-10 && invariance < 1e-10);
    assert!(literal < 1e-10, "complex identity violated: max error {literal}");
}

#[test]
fn criterion_02_mapping_coherences() {
    let start = Instant::now();
    let cache = PropagatorCache::new();
    let v = CalibrationVariant::PINNED;
    let theta = PI / 4.0;
    let mut errors = [0.0; 3];
    for (e, r) in errors.iter_mut().zip(MAPPING_RATIOS) {
        let (cf, cs) = mapping_coherences(1.0, r, theta, &v, &cache).unwrap();
        let (tf, ts) = mapping_targets(r, theta, 1.0);
        *e = (cf - tf).norm().max((cs - ts).norm());
    }
    let agreement = classify_mapping_errors(&errors);
    let elapsed = start.elapsed();
    let pass = agreement != MappingAgreement::Failed && elapsed.as_secs_f64() < 10.0;
    report(
        2,
        pass,
        &format!("{agreement:?}; errors at J/g = 1/160, 1/80, 1/40: {:.3e} / {:.3e} / {:.3e}", errors[0], errors[1], errors[2]),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_03_direct_detection_resonance_and_repetitions() {
    let start = Instant::now();
    let r = preset("fig1c");
    let sys = r.config.system.clone().unwrap();
    let c = sys.couplings[0];
    let predicted = PI / (2.0 * sys.omega_l + c.j * c.theta.cos());
    let pos = peak_of(&r, "S_X ideal").expect("peak").position;
    let dx = step(&r.result.grid);
    let located = (pos - predicted).abs() <= dx && r.result.grid.len() == 401;

    let cfg = parse_config("units = \"1/g\"\npreset = \"fig1c\"\nexperiment = \"optimize_repetitions\"\n").unwrap();
    let n_opt = match execute(&cfg).unwrap().summary {
        Summary::OptimizeRepetitions(s) => s.n_opt,
        other => panic!("{other:?}"),
    };
    let elapsed = start.elapsed();
    let pass = located && (21..=25).contains(&n_opt) && elapsed.as_secs_f64() < 60.0;
    report(
        3,
        pass,
        &format!(
            "extremum {pos:.6} vs predicted {predicted:.6} (step {dx:.2e}); N_opt = {n_opt} (23 ± 2)"
        ),
        elapsed,
    );
    assert!(pass);
}

fn random_state(rng: &mut ChaCha8Rng, n_samples: usize) -> DensityState {
    let d = 1 << (n_samples + 2);
    let a = DMatrix::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut m = &a * a.adjoint();
    let tr = m.trace();
    m /= tr;
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    DensityState::from_matrix(m, n_samples).unwrap()
}

fn sensor_up_population(s: &DensityState) -> f64 {
    let d = s.dim();
    (0..d / 2).map(|i| s.matrix()[(i, i)].re).sum()
}

#[test]
fn criterion_04_relaxation_channel() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut trace_err, mut min_eig, mut semigroup, mut fixed) = (0.0f64, f64::INFINITY, 0.0f64, 0.0f64);
    for k in 0..1000 {
        let n = 1 + k % 2;
        let rho = random_state(&mut rng, n);
        let gamma = rng.gen_range(0.0..2.0);
        let (t1, t2) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        let a = apply_depolarizing(&rho, gamma, t1).unwrap();
        trace_err = trace_err.max((a.trace() - Complex64::new(1.0, 0.0)).norm());
        min_eig = min_eig.min(a.min_eigenvalue());
        let ab = apply_depolarizing(&a, gamma, t2).unwrap();
        let direct = apply_depolarizing(&rho, gamma, t1 + t2).unwrap();
        semigroup = semigroup.max((ab.matrix() - direct.matrix()).camax());
        let inf = apply_depolarizing(&rho, 1.0, 1e6).unwrap();
        fixed = fixed.max((sensor_up_population(&inf) - 0.5).abs());
    }
    let elapsed = start.elapsed();
    let pass = trace_err < 1e-12 && min_eig >= -1e-10 && semigroup < 1e-12 && fixed < 1e-12 && elapsed.as_secs_f64() < 10.0;
    report(
        4,
        pass,
        &format!(
            "trace {trace_err:.2e}, min eigenvalue {min_eig:.2e}, semigroup {semigroup:.2e}, \
             sensor marginal |p - 1/2| {fixed:.2e} over 1000 states"
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_05_direct_vs_ancilla_detection() {
    let start = Instant::now();
    let r = preset("fig2");
    let dx = step(&r.result.grid);
    let ds = peak_of(&r, "S_X D_S ideal").expect("D_S peak").position;
    let df = peak_of(&r, "F_X D_F ideal").expect("D_F peak").position;
    let (cs, cf) = (contrast_or_zero(&r, "S_X D_S relaxed"), contrast_or_zero(&r, "F_X D_F relaxed"));
    let elapsed = start.elapsed();
    let pass = (ds - df).abs() <= dx && cf > cs && elapsed.as_secs_f64() < 300.0;
    report(
        5,
        pass,
        &format!(
            "ideal positions D_S {ds:.6e} / D_F {df:.6e} (step {dx:.2e}); relaxed contrast D_F {cf:.4} vs D_S {cs:.4}"
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_06_combined_sequence() {
    let start = Instant::now();
    let r = preset("fig3");
    let sx = r.result.column("S_X ideal").unwrap();
    let fx = r.result.column("F_X ideal").unwrap();
    let overlap = sx.iter().zip(fx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (cs, cf) = (contrast_or_zero(&r, "S_X relaxed"), contrast_or_zero(&r, "F_X relaxed"));
    let elapsed = start.elapsed();
    let pass = overlap < 1e-6 && cf > cs && elapsed.as_secs_f64() < 300.0;
    report(
        6,
        pass,
        &format!(
            "ideal max |<S_x> - <F_x>| = {overlap:.2e}; relaxed (exp(-gamma tau0) = 1e-3) contrast ancilla {cf:.3e} vs sensor {cs:.3e}"
        ),
        elapsed,
    );
    assert!(overlap < 1e-6, "ideal curves differ by {overlap}");
    assert!(cf > cs, "ancilla contrast {cf} does not exceed sensor contrast {cs}");
}

fn family(name: &str) -> spinsense::experiments::T1Family {
    match preset(name).summary {
        Summary::ContrastVsT1(f) => f,
        other => panic!("{other:?}"),
    }
}

#[test]
fn criterion_07_reinit_schedules() {
    let start = Instant::now();
    let a = family("fig4a");
    let every = &a.curves[0];
    assert_eq!(every.label, "every unit");
    let spread = every.contrast.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - every.contrast.iter().cloned().fold(f64::INFINITY, f64::min);
    let none = a.curves.iter().find(|c| c.label == "none").unwrap();
    let monotone = none.contrast.windows(2).all(|w| w[1] >= w[0]);

    let b = family("fig4b");
    let argmax = b.argmax();
    let not_most_frequent = argmax.iter().any(|&k| k != 0);
    let elapsed = start.elapsed();
    let pass = spread < 1e-3 && monotone && not_most_frequent && elapsed.as_secs_f64() < 600.0;
    report(
        7,
        pass,
        &format!(
            "(a) every-unit spread {spread:.2e}, no-reinit {:?} monotone {monotone}; (b) argmax schedules {:?}",
            none.contrast,
            argmax.iter().map(|&k| b.curves[k].label.as_str()).collect::<Vec<_>>()
        ),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_08_sensitivity_estimates() {
    let start = Instant::now();
    let e = match preset("estimates").summary {
        Summary::Estimates(e) => e,
        other => panic!("{other:?}"),
    };
    let values: Vec<String> = e
        .scenarios
        .iter()
        .map(|s| format!("{:.1}% (target {:.0}%)", 100.0 * s.relative_contrast, 100.0 * s.target))
        .collect();
    let within = e.all_within_tolerance();
    let diagnostic_ok = e
        .diagnostic
        .as_ref()
        .is_some_and(|d| d.contains(&e.variant.to_string()));
    let elapsed = start.elapsed();
    let line = if within {
        format!("{} within ±5 points", values.join(", "))
    } else {
        format!("soft miss, diagnostic emitted: {} ; {}", values.join(", "), e.diagnostic.clone().unwrap_or_default())
    };
    if within {
        report(8, true, &line, elapsed);
    } else {
        // soft criterion: a miss is acceptable only with the diagnostic attached
        println!(
            "criterion 8: {} {line} [{:.2} s]",
            if diagnostic_ok { "SOFT-MISS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    assert!(within || diagnostic_ok);
}

#[test]
fn criterion_09_thread_count_independence() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_spinsense"))
            .args(["preset", "fig2", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        csv.push(std::fs::read(out.join("fig2.csv")).unwrap());
    }
    let elapsed = start.elapsed();
    let pass = !csv[0].is_empty() && csv[0] == csv[1] && elapsed.as_secs_f64() < 600.0;
    report(9, pass, &format!("fig2 CSV ({} bytes) identical for 1 and 8 threads: {}", csv[0].len(), csv[0] == csv[1]), elapsed);
    assert!(pass);
}

#[test]
fn criterion_10_lorentzian_recovery() {
    let start = Instant::now();
    let x = linspace(0.0, 2.0, 401);
    let hw = 0.05;
    let y: Vec<f64> = x.iter().map(|&t| 1.0 / (1.0 + ((t - 1.0) / hw).powi(2))).collect();
    let p = find_peak(&x, &y, DEFAULT_WINDOW, None).unwrap();
    let (dpos, dwidth) = ((p.position - 1.0).abs(), (p.width - 0.1).abs() / 0.1);
    let elapsed = start.elapsed();
    let pass = dpos < 1e-3 && dwidth < 0.05 && elapsed.as_secs_f64() < 1.0;
    report(10, pass, &format!("position error {dpos:.2e}, width error {:.2}%", 100.0 * dwidth), elapsed);
    assert!(pass);
}
