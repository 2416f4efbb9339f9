//! Properties of scanned curves beyond the acceptance criteria.

use std::f64::consts::PI;

use spinsense::dynamics::NoiseModel;
use spinsense::experiments::{auto_grid, find_peak, scan, ScanSpec, SequenceTemplate, Span, SweptParameter, DEFAULT_WINDOW};
use spinsense::spin::{Observable, SpinSystemConfig};

fn system() -> SpinSystemConfig {
    SpinSystemConfig::single(0.0, 1.0, 1.0 / 80.0, PI / 4.0)
}

fn df(n: usize) -> SequenceTemplate {
    SequenceTemplate::DetectionDf {
        tau: Span::Tau0 { tau0: 4.0 },
        repetitions: n,
    }
}

fn spec(t: SequenceTemplate, obs: Observable, rf_swap: bool, gamma: f64) -> ScanSpec {
    let grid = auto_grid(SweptParameter::OmegaL, &system(), &t, false, 401, 10.0).unwrap();
    let mut s = ScanSpec::new(SweptParameter::OmegaL, grid, system(), t, vec![obs]).with_noise(NoiseModel::relaxing(gamma));
    s.rf_swap = rf_swap;
    s
}

#[test]
fn relaxation_broadens_and_lowers_the_ancilla_peak() {
    let ideal = scan(&spec(df(8), Observable::FX, false, 0.0)).unwrap();
    let p0 = find_peak(&ideal.grid, &ideal.columns[0].values, DEFAULT_WINDOW, None).unwrap();
    let dx = ideal.grid[1] - ideal.grid[0];
    let mut last = (p0.width, p0.absolute_contrast);
    for gamma in [1e-4, 1e-3, 1e-2] {
        let r = scan(&spec(df(8), Observable::FX, false, gamma)).unwrap();
        let p = find_peak(&r.grid, &r.columns[0].values, DEFAULT_WINDOW, None).unwrap();
        assert!(p.width >= last.0 && p.absolute_contrast < last.1, "gamma {gamma}: {p:?}");
        if gamma == 1e-3 {
            assert!((p.position - p0.position).abs() <= dx);
        }
        last = (p.width, p.absolute_contrast);
    }
}

#[test]
fn rf_swap_at_quarter_angle_keeps_the_resonance() {
    let t = SequenceTemplate::DirectDetection {
        tau: Span::Tau0 { tau0: 4.0 },
        repetitions: 24,
    };
    let a = scan(&spec(t.clone(), Observable::SX, false, 0.0)).unwrap();
    let b = scan(&spec(t, Observable::SX, true, 0.0)).unwrap();
    let pa = find_peak(&a.grid, &a.columns[0].values, DEFAULT_WINDOW, None).unwrap();
    let pb = find_peak(&b.grid, &b.columns[0].values, DEFAULT_WINDOW, None).unwrap();
    assert!((pa.position - pb.position).abs() <= a.grid[1] - a.grid[0]);
}

#[test]
fn combined_sequence_favours_the_ancilla_under_weak_relaxation() {
    // reading gamma_s * tau0 = 1e-3 instead of exp(-gamma_s * tau0) = 1e-3
    let t = SequenceTemplate::CombinedDsf {
        tau: Span::Tau0 { tau0: 15.0 },
        repetitions: 20,
    };
    let grid = spinsense::experiments::linspace(0.02, 0.2, 401);
    let base = ScanSpec::new(SweptParameter::OmegaL, grid, system(), t, vec![Observable::SX, Observable::FX]);
    let ideal = scan(&base).unwrap();
    let relaxed = scan(&base.clone().with_noise(NoiseModel::relaxing(1e-3 / PI))).unwrap();
    let rel = |k: usize| {
        let n = find_peak(&ideal.grid, &ideal.columns[k].values, DEFAULT_WINDOW, None).unwrap().absolute_contrast;
        find_peak(&relaxed.grid, &relaxed.columns[k].values, DEFAULT_WINDOW, Some(n)).unwrap().contrast
    };
    let (sensor, ancilla) = (rel(0), rel(1));
    assert!(ancilla > sensor, "ancilla {ancilla} sensor {sensor}");
}
