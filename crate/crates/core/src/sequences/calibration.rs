//! Exhaustive search over the discrete sequence conventions.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{direct_detection, mapping, run_cached, CalibrationVariant, DsSpacing};
use crate::dynamics::PropagatorCache;
use crate::error::{Error, Result};
use crate::experiments::{centered_grid, ds_resonance_tau, find_peak, DEFAULT_WINDOW};
use crate::spin::{expectation, prepare, Coupling, Observable, SensorConvention, SpinSystemConfig};

/// Coupling ratios `J/g` used for the mapping check, smallest first.
pub const MAPPING_RATIOS: [f64; 3] = [1.0 / 160.0, 1.0 / 80.0, 1.0 / 40.0];
pub const EXACT_TOL: f64 = 1e-8;
/// Repetitions of the direct-detection check.
pub const DS_CHECK_REPETITIONS: usize = 23;

/// Closed-form ancilla and sensor coherences after the mapping sequence at
/// `τ₀ = π/g`, `ω_L = 0`.
pub fn mapping_targets(j: f64, theta: f64, g: f64) -> (Complex64, Complex64) {
    let t0 = PI / g;
    let (jt, c) = (j * t0, theta.cos());
    let cf = Complex64::new(jt.cos(), -c * (jt / 2.0).cos() * jt.sin());
    let cs = Complex64::new(
        0.5 * (1.0 + jt.cos().powi(2)),
        -c * (jt / 2.0).cos().powi(2) * jt.sin(),
    );
    (cf, cs)
}

/// Simulated `(C_F, C_S)` after the two-unit mapping sequence.
pub fn mapping_coherences(
    g: f64,
    j: f64,
    theta: f64,
    v: &CalibrationVariant,
    cache: &PropagatorCache,
) -> Result<(Complex64, Complex64)> {
    let cfg = SpinSystemConfig {
        omega_l: 0.0,
        g,
        couplings: vec![Coupling::new(j, theta)],
        sensor_convention: v.convention,
        time_unit: 1.0,
    };
    let program = mapping(PI / g, 2, v)?;
    let init = prepare(&cfg, program.preparation)?;
    let out = run_cached(&program, &cfg, &init, cache)?;
    Ok((
        expectation(&out.state, Observable::CoherenceF)?,
        expectation(&out.state, Observable::CoherenceS)?,
    ))
}

/// Outcome of the mapping check: exact, second-order scaling, or neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingAgreement {
    Exact,
    SecondOrder,
    Failed,
}

/// Applies the exactness probe to errors at [`MAPPING_RATIOS`].
pub fn classify_mapping_errors(errors: &[f64; 3]) -> MappingAgreement {
    if errors[2] < EXACT_TOL {
        return if errors.iter().all(|&e| e < EXACT_TOL) {
            MappingAgreement::Exact
        } else {
            MappingAgreement::Failed
        };
    }
    let ok = |a: f64, b: f64| a > 0.0 && (3.0..=5.0).contains(&(b / a));
    if ok(errors[0], errors[1]) && ok(errors[1], errors[2]) {
        MappingAgreement::SecondOrder
    } else {
        MappingAgreement::Failed
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateReport {
    pub variant: CalibrationVariant,
    /// max(|ΔC_F|, |ΔC_S|) at each ratio in [`MAPPING_RATIOS`].
    pub mapping_errors: [f64; 3],
    pub mapping: MappingAgreement,
    pub ds_predicted: f64,
    /// Extremum position, `None` when no peak was found.
    pub ds_extremum: Option<f64>,
    pub ds_step: f64,
    pub ds_pass: bool,
}

impl CandidateReport {
    pub fn passes(&self) -> bool {
        self.mapping != MappingAgreement::Failed && self.ds_pass
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub candidates: Vec<CandidateReport>,
    pub selected: Option<CalibrationVariant>,
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.candidates {
            writeln!(
                f,
                "{:<4} {}  mapping={:?} (err@1/40 {:.2e})  ds_extremum={} (predicted {:.6}, step {:.2e})",
                if c.passes() { "ok" } else { "--" },
                c.variant,
                c.mapping,
                c.mapping_errors[2],
                c.ds_extremum
                    .map(|x| format!("{x:.6}"))
                    .unwrap_or_else(|| "none".into()),
                c.ds_predicted,
                c.ds_step
            )?;
        }
        match self.selected {
            Some(v) => write!(f, "selected: {v}"),
            None => write!(f, "selected: none"),
        }
    }
}

fn ds_check(
    config: &SpinSystemConfig,
    convention: SensorConvention,
    spacing: DsSpacing,
    cache: &PropagatorCache,
) -> Result<(f64, Option<f64>, f64, bool)> {
    let theta = config.couplings[0].theta;
    let j = config.g / 80.0;
    let cfg = SpinSystemConfig {
        omega_l: 10.0 * j,
        g: config.g,
        couplings: vec![Coupling::new(j, theta)],
        sensor_convention: convention,
        time_unit: config.time_unit,
    };
    let n = DS_CHECK_REPETITIONS;
    let predicted = ds_resonance_tau(cfg.omega_l, j, theta, false);
    let grid = centered_grid(predicted, predicted / (2 * n) as f64, 10.0, 401);
    let step = grid[1] - grid[0];
    let v = CalibrationVariant {
        convention,
        ds_spacing: spacing,
        ..CalibrationVariant::PINNED
    };
    let curve = grid
        .iter()
        .map(|&tau| {
            let p = direct_detection(tau, n, &v)?;
            let init = prepare(&cfg, p.preparation)?;
            let out = run_cached(&p, &cfg, &init, cache)?;
            Ok(expectation(&out.state, Observable::SX)?.re)
        })
        .collect::<Result<Vec<f64>>>()?;
    let extremum = find_peak(&grid, &curve, DEFAULT_WINDOW, None).ok().map(|p| p.position);
    let pass = extremum.is_some_and(|x| (x - predicted).abs() <= step);
    Ok((predicted, extremum, step, pass))
}

/// Evaluates every variant against the mapping formulas and the
/// direct-detection resonance, then selects the first that passes both.
///
/// Uses `g` and the first coupling angle of `config`.
pub fn calibration_report(config: &SpinSystemConfig) -> Result<CalibrationReport> {
    config.validate()?;
    let theta = config.couplings[0].theta;
    let g = config.g;
    let variants = CalibrationVariant::all();

    let ds_keys: Vec<(SensorConvention, DsSpacing)> = SensorConvention::ALL
        .iter()
        .flat_map(|&c| [(c, DsSpacing::Full), (c, DsSpacing::Half)])
        .collect();
    let ds: HashMap<(SensorConvention, DsSpacing), (f64, Option<f64>, f64, bool)> = ds_keys
        .par_iter()
        .map(|&(c, s)| {
            let cache = PropagatorCache::new();
            ds_check(config, c, s, &cache).map(|r| ((c, s), r))
        })
        .collect::<Result<_>>()?;

    let candidates = variants
        .par_iter()
        .map(|v| {
            let cache = PropagatorCache::new();
            let mut errors = [0.0; 3];
            for (e, r) in errors.iter_mut().zip(MAPPING_RATIOS) {
                let j = r * g;
                let (cf, cs) = mapping_coherences(g, j, theta, v, &cache)?;
                let (tf, ts) = mapping_targets(j, theta, g);
                *e = (cf - tf).norm().max((cs - ts).norm());
            }
            let (ds_predicted, ds_extremum, ds_step, ds_pass) = ds[&(v.convention, v.ds_spacing)];
            Ok(CandidateReport {
                variant: *v,
                mapping_errors: errors,
                mapping: classify_mapping_errors(&errors),
                ds_predicted,
                ds_extremum,
                ds_step,
                ds_pass,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = candidates.iter().find(|c| c.passes()).map(|c| c.variant);
    Ok(CalibrationReport {
        candidates,
        selected,
    })
}

/// Like [`calibration_report`] but fails with `NoCalibration` when no
/// variant passes.
pub fn calibrate_conventions(config: &SpinSystemConfig) -> Result<CalibrationReport> {
    let report = calibration_report(config)?;
    if report.selected.is_none() {
        return Err(Error::NoCalibration(report.to_string()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_targets_limits() {
        let (cf, _) = mapping_targets(0.0, 0.7, 1.0);
        assert!((cf - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let (cf, _) = mapping_targets(0.05, PI / 2.0, 1.0);
        assert!(cf.im.abs() < 1e-15);
        assert!((cf.re - (0.05 * PI).cos()).abs() < 1e-15);
    }

    #[test]
    fn probe_classification() {
        assert_eq!(classify_mapping_errors(&[1e-16, 1e-16, 2e-16]), MappingAgreement::Exact);
        assert_eq!(
            classify_mapping_errors(&[1e-4, 4e-4, 1.6e-3]),
            MappingAgreement::SecondOrder
        );
        assert_eq!(classify_mapping_errors(&[1e-4, 2e-4, 4e-4]), MappingAgreement::Failed);
    }

    #[test]
    fn pinned_variant_reproduces_mapping_formulas() {
        let cache = PropagatorCache::new();
        let v = CalibrationVariant::PINNED;
        for r in MAPPING_RATIOS {
            let (cf, cs) = mapping_coherences(1.0, r, PI / 4.0, &v, &cache).unwrap();
            let (tf, ts) = mapping_targets(r, PI / 4.0, 1.0);
            assert!((cf - tf).norm() < 1e-12, "C_F at J/g = {r}");
            assert!((cs - ts).norm() < 1e-12, "C_S at J/g = {r}");
        }
    }

    #[test]
    fn zero_coupling_leaves_ancilla_coherence_at_one() {
        let cache = PropagatorCache::new();
        let (cf, _) = mapping_coherences(1.0, 0.0, 0.3, &CalibrationVariant::PINNED, &cache).unwrap();
        assert!((cf - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }
}
