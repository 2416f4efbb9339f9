use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use spinsense::dynamics::{apply_depolarizing, apply_pulse, build_hamiltonian, evolve, reset_sensor, Axis, Target};
use spinsense::spin::{build_operator, expectation, DensityState, Observable, Site, SpinSystemConfig};

fn state_from(entries: &[(f64, f64)], n: usize) -> DensityState {
    let d = 1 << (n + 2);
    let a = DMatrix::from_fn(d, d, |i, j| {
        let (re, im) = entries[(i * d + j) % entries.len()];
        Complex64::new(re + if i == j { 0.1 } else { 0.0 }, im)
    });
    let mut m = &a * a.adjoint();
    let tr = m.trace();
    m /= tr;
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    DensityState::from_matrix(m, n).unwrap()
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relaxation_keeps_a_density_matrix(e in entries(), n in 1usize..3, gamma in 0.0..5.0f64, t in 0.0..10.0f64) {
        let s = apply_depolarizing(&state_from(&e, n), gamma, t).unwrap();
        prop_assert!(s.check_invariants().is_ok());
        prop_assert!((s.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reset_keeps_a_density_matrix(e in entries(), factor in 0.0..1.0f64) {
        let s = reset_sensor(&state_from(&e, 1), factor);
        prop_assert!(s.check_invariants().is_ok());
        // sensor ends in the first level
        let up: f64 = (0..4).map(|i| s.matrix()[(i, i)].re).sum();
        prop_assert!((up - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pulses_and_evolution_preserve_purity(e in entries(), angle in -7.0..7.0f64, t in 0.0..50.0f64, ax in 0.0..(2.0 * PI)) {
        let cfg = SpinSystemConfig::single(0.1, 1.0, 0.05, 0.6);
        let s = state_from(&e, 1);
        let axis = Axis { x: ax.cos(), y: ax.sin() };
        let p = apply_pulse(&s, Target::Sensor, axis, angle).unwrap();
        let p = apply_pulse(&p, Target::Ancilla, axis, angle).unwrap();
        let h = build_hamiltonian(&cfg, false).unwrap();
        let out = evolve(&p, &h, t).unwrap();
        prop_assert!((out.purity() - s.purity()).abs() < 1e-10);
        prop_assert!(out.check_invariants().is_ok());
    }

    #[test]
    fn sensor_is_the_most_significant_bit(n in 1usize..=10) {
        prop_assert_eq!(Site::Sensor.bit(n), n + 1);
        prop_assert_eq!(Site::Ancilla.bit(n), n);
        for i in 1..=n {
            prop_assert_eq!(Site::Sample(i).bit(n), n - i);
        }
    }

    #[test]
    fn sample_operators_act_on_their_own_bit(i in 1usize..=3) {
        let cfg = SpinSystemConfig {
            couplings: vec![spinsense::spin::Coupling::new(0.01, 0.3); 3],
            ..SpinSystemConfig::single(0.1, 1.0, 0.01, 0.3)
        };
        let z = build_operator(&cfg, Observable::IZ(i)).unwrap();
        let bit = Site::Sample(i).bit(3);
        for k in 0..cfg.dim() {
            let want = if (k >> bit) & 1 == 0 { 1.0 } else { -1.0 };
            prop_assert_eq!(z[(k, k)].re, want);
        }
    }
}

#[test]
fn out_of_range_sample_index_is_rejected() {
    let cfg = SpinSystemConfig::single(0.1, 1.0, 0.01, 0.3);
    let s = state_from(&[(0.3, 0.1), (0.2, -0.4)], 1);
    assert!(expectation(&s, Observable::IX(0)).is_err());
    assert!(expectation(&s, Observable::IX(2)).is_err());
    assert!(build_operator(&cfg, Observable::IZ(1)).is_ok());
}
