//! Parameter scans, peak extraction and the derived studies.

mod peak;
mod presets;
mod studies;

pub use peak::*;
pub use presets::*;
pub use studies::*;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{coupling_components, NoiseModel, PropagatorCache, ReinitSchedule};
use crate::error::{Error, Result};
use crate::sequences::{
    combined_dsf, detection_df, df_blocks, direct_detection, mapping, regime_warning, run_cached,
    CalibrationVariant, SequenceProgram,
};
use crate::spin::{expectation, prepare, Observable, Preparation, SpinSystemConfig};

pub const DEFAULT_POINTS: usize = 401;
pub const DEFAULT_HALF_WIDTHS: f64 = 10.0;

/// A duration given directly or as a multiple of `τ₀ = π/g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Span {
    Absolute(f64),
    Tau0 { tau0: f64 },
}

impl Span {
    pub fn resolve(self, g: f64) -> f64 {
        match self {
            Span::Absolute(t) => t,
            Span::Tau0 { tau0 } => tau0 * PI / g,
        }
    }
}

/// A built-in sequence with its free parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceTemplate {
    DirectDetection { tau: Span, repetitions: usize },
    Mapping { repeats: usize },
    DetectionDf { tau: Span, repetitions: usize },
    CombinedDsf { tau: Span, repetitions: usize },
}

impl SequenceTemplate {
    pub fn build(&self, config: &SpinSystemConfig, v: &CalibrationVariant) -> Result<SequenceProgram> {
        let g = config.g;
        let tau0 = PI / g;
        match *self {
            SequenceTemplate::DirectDetection { tau, repetitions } => {
                direct_detection(tau.resolve(g), repetitions, v)
            }
            SequenceTemplate::Mapping { repeats } => mapping(tau0, repeats, v),
            SequenceTemplate::DetectionDf { tau, repetitions } => {
                detection_df(tau.resolve(g), repetitions, tau0, v)
            }
            SequenceTemplate::CombinedDsf { tau, repetitions } => {
                combined_dsf(tau.resolve(g), repetitions, tau0, v)
            }
        }
    }

    pub fn with_tau(&self, t: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            SequenceTemplate::DirectDetection { tau, .. }
            | SequenceTemplate::DetectionDf { tau, .. }
            | SequenceTemplate::CombinedDsf { tau, .. } => *tau = Span::Absolute(t),
            SequenceTemplate::Mapping { .. } => {}
        }
        out
    }

    pub fn repetitions(&self) -> usize {
        match *self {
            SequenceTemplate::DirectDetection { repetitions, .. }
            | SequenceTemplate::DetectionDf { repetitions, .. }
            | SequenceTemplate::CombinedDsf { repetitions, .. } => repetitions,
            SequenceTemplate::Mapping { repeats } => repeats,
        }
    }

    pub fn with_repetitions(&self, n: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            SequenceTemplate::DirectDetection { repetitions, .. }
            | SequenceTemplate::DetectionDf { repetitions, .. }
            | SequenceTemplate::CombinedDsf { repetitions, .. } => *repetitions = n,
            SequenceTemplate::Mapping { repeats } => *repeats = n,
        }
        out
    }

    fn uses_mapping(&self) -> bool {
        !matches!(self, SequenceTemplate::DirectDetection { .. })
    }

    /// Spacing between π pulses that sets the resonance, and the number of
    /// such pulses; `None` where no closed form exists.
    pub fn resonance_spacing(&self, g: f64) -> Option<(f64, usize)> {
        let tau0 = PI / g;
        match *self {
            SequenceTemplate::DirectDetection { tau, repetitions } => {
                Some((tau.resolve(g), 2 * repetitions))
            }
            SequenceTemplate::DetectionDf { tau, repetitions } => {
                let k = df_blocks(tau.resolve(g), tau0);
                Some((4.0 * k as f64 * tau0, 2 * repetitions))
            }
            _ => None,
        }
    }
}

/// `τ` at which direct detection resonates with a sample spin.
pub fn ds_resonance_tau(omega_l: f64, j: f64, theta: f64, rf_swap: bool) -> f64 {
    let (par, _) = coupling_components(theta, rf_swap);
    PI / (2.0 * omega_l + j * par)
}

/// `ω_L` at which a π-pulse spacing `tau` resonates with a sample spin.
pub fn resonance_omega_l(tau: f64, j: f64, theta: f64, rf_swap: bool) -> f64 {
    let (par, _) = coupling_components(theta, rf_swap);
    (PI / tau - j * par) / 2.0
}

/// `points` values spanning `center ± half_widths·width`, with the span
/// capped at half the center so the grid stays positive.
pub fn centered_grid(center: f64, width: f64, half_widths: f64, points: usize) -> Vec<f64> {
    let span = (half_widths * width).min(0.5 * center.abs());
    linspace(center - span, center + span, points)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + (b - a) * (i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParameter {
    Tau,
    OmegaL,
    T1,
    ReinitPeriod,
}

impl SweptParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweptParameter::Tau => "tau",
            SweptParameter::OmegaL => "omega_l",
            SweptParameter::T1 => "t1",
            SweptParameter::ReinitPeriod => "reinit_period",
        }
    }
}

/// Default grid around the analytic resonance of `template`.
pub fn auto_grid(
    parameter: SweptParameter,
    system: &SpinSystemConfig,
    template: &SequenceTemplate,
    rf_swap: bool,
    points: usize,
    half_widths: f64,
) -> Result<Vec<f64>> {
    let c = system
        .couplings
        .first()
        .ok_or_else(|| Error::invalid("couplings", "at least one sample spin is required"))?;
    match (parameter, template) {
        (SweptParameter::Tau, SequenceTemplate::DirectDetection { repetitions, .. }) => {
            let center = ds_resonance_tau(system.omega_l, c.j, c.theta, rf_swap);
            Ok(centered_grid(center, center / (2 * repetitions) as f64, half_widths, points))
        }
        (SweptParameter::OmegaL, t) => {
            let (tau, pulses) = t.resonance_spacing(system.g).ok_or_else(|| {
                Error::invalid("scan.grid", "no resonance estimate for this sequence; give the grid explicitly")
            })?;
            let center = resonance_omega_l(tau, c.j, c.theta, rf_swap);
            if !(center > 0.0) {
                return Err(Error::invalid(
                    "scan.grid",
                    format!("predicted resonance omega_L = {center} is not positive"),
                ));
            }
            Ok(centered_grid(center, PI / (2.0 * tau * pulses as f64), half_widths, points))
        }
        _ => Err(Error::invalid(
            "scan.grid",
            format!("no automatic grid for parameter `{}` with this sequence", parameter.name()),
        )),
    }
}

/// One sweep of a built-in sequence over one parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanSpec {
    pub parameter: SweptParameter,
    pub grid: Vec<f64>,
    pub system: SpinSystemConfig,
    pub noise: NoiseModel,
    pub template: SequenceTemplate,
    /// Overrides the sequence's own initial state.
    pub preparation: Option<Preparation>,
    pub rf_swap: bool,
    pub observables: Vec<Observable>,
    pub variant: CalibrationVariant,
    /// Appended to column names.
    pub label: Option<String>,
}

impl ScanSpec {
    pub fn new(
        parameter: SweptParameter,
        grid: Vec<f64>,
        system: SpinSystemConfig,
        template: SequenceTemplate,
        observables: Vec<Observable>,
    ) -> Self {
        ScanSpec {
            parameter,
            grid,
            system,
            noise: NoiseModel::ideal(),
            template,
            preparation: None,
            rf_swap: false,
            observables,
            variant: CalibrationVariant::PINNED,
            label: None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 8 {
            return Err(Error::invalid(
                "scan.grid",
                format!("needs at least 8 points, got {}", self.grid.len()),
            ));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scan.grid", "values must be finite"));
        }
        let inc = self.grid.windows(2).all(|w| w[1] > w[0]);
        let dec = self.grid.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::invalid("scan.grid", "must be strictly monotone"));
        }
        if self.observables.is_empty() {
            return Err(Error::invalid("observables", "at least one observable is required"));
        }
        let bad = |what: &str| Err(Error::invalid("scan.grid", what.to_string()));
        match self.parameter {
            SweptParameter::Tau | SweptParameter::T1 if self.grid.iter().any(|&v| v <= 0.0) => {
                return bad("values must be > 0");
            }
            SweptParameter::OmegaL if self.grid.iter().any(|&v| v < 0.0) => {
                return bad("values must be >= 0");
            }
            SweptParameter::ReinitPeriod
                if self.grid.iter().any(|&v| v < 0.0 || v.fract() != 0.0) =>
            {
                return bad("reinit periods must be non-negative integers");
            }
            _ => {}
        }
        self.system.validate()?;
        self.noise.validate()
    }

    /// Column names in output order.
    pub fn column_names(&self) -> Vec<String> {
        let suffix = self.label.as_deref().map(|l| format!(" {l}")).unwrap_or_default();
        let mut names = Vec::new();
        for o in &self.observables {
            if o.is_complex() {
                names.push(format!("Re {o}{suffix}"));
                names.push(format!("Im {o}{suffix}"));
            } else {
                names.push(format!("{o}{suffix}"));
            }
        }
        names
    }

    /// Configuration, noise and program at one grid value.
    pub fn point(&self, value: f64) -> Result<(SpinSystemConfig, SequenceProgram)> {
        let mut system = self.system.clone();
        let mut noise = self.noise.clone();
        let mut template = self.template.clone();
        match self.parameter {
            SweptParameter::Tau => template = template.with_tau(value),
            SweptParameter::OmegaL => system.omega_l = value,
            SweptParameter::T1 => noise.gamma_s = 1.0 / value,
            SweptParameter::ReinitPeriod => {
                noise.reinit_schedule = if value == 0.0 {
                    ReinitSchedule::Never
                } else {
                    ReinitSchedule::Every(value as usize)
                }
            }
        }
        let mut program = template.build(&system, &self.variant)?;
        program.noise = noise;
        program.rf_swap = self.rf_swap;
        if let Some(p) = self.preparation {
            program.preparation = p;
        }
        Ok((system, program))
    }
}

/// Sampled curves on a shared grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResult {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub columns: Vec<Column>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl ScanResult {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty() || self.columns.is_empty()
    }

    /// Joins results sampled on the same grid.
    pub fn merge(parts: Vec<ScanResult>) -> Result<ScanResult> {
        let mut it = parts.into_iter();
        let mut out = it.next().ok_or(Error::EmptyResult)?;
        for p in it {
            if p.grid != out.grid || p.parameter != out.parameter {
                return Err(Error::invalid("series", "merged scans must share one grid"));
            }
            out.columns.extend(p.columns);
        }
        Ok(out)
    }
}

/// Runs every grid point (in parallel on the current rayon pool) and
/// collects the requested observables of the final states in grid order.
pub fn scan(spec: &ScanSpec) -> Result<ScanResult> {
    scan_with_cache(spec, &PropagatorCache::new())
}

pub fn scan_with_cache(spec: &ScanSpec, cache: &PropagatorCache) -> Result<ScanResult> {
    spec.validate()?;
    if spec.template.uses_mapping() {
        let (mid, _) = spec.point(spec.grid[spec.grid.len() / 2])?;
        if let Some(w) = regime_warning(&mid) {
            log::warn!("{w}");
        }
    }
    let rows: Vec<Vec<f64>> = spec
        .grid
        .par_iter()
        .map(|&v| {
            let (system, program) = spec.point(v)?;
            let init = prepare(&system, program.preparation)?;
            let out = run_cached(&program, &system, &init, cache)?;
            let mut row = Vec::with_capacity(spec.observables.len() + 1);
            for &o in &spec.observables {
                let e = expectation(&out.state, o)?;
                row.push(e.re);
                if o.is_complex() {
                    row.push(e.im);
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let names = spec.column_names();
    let columns = names
        .into_iter()
        .enumerate()
        .map(|(k, name)| Column {
            name,
            values: rows.iter().map(|r| r[k]).collect(),
        })
        .collect();
    Ok(ScanResult {
        parameter: spec.parameter.name().to_string(),
        grid: spec.grid.clone(),
        columns,
    })
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::Coupling;

    fn fig1c_system() -> SpinSystemConfig {
        let j = 1.0 / 80.0;
        SpinSystemConfig::single(10.0 * j, 1.0, j, PI / 4.0)
    }

    #[test]
    fn decoupled_sample_gives_flat_curve() {
        let mut sys = fig1c_system();
        sys.couplings = vec![Coupling::new(0.0, PI / 4.0)];
        let t = SequenceTemplate::DirectDetection {
            tau: Span::Absolute(1.0),
            repetitions: 10,
        };
        let spec = ScanSpec::new(SweptParameter::Tau, linspace(1.0, 20.0, 16), sys, t, vec![Observable::SX]);
        let r = scan(&spec).unwrap();
        for v in &r.columns[0].values {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn reversed_grid_gives_reversed_values() {
        let sys = fig1c_system();
        let t = SequenceTemplate::DirectDetection {
            tau: Span::Absolute(1.0),
            repetitions: 5,
        };
        let grid = linspace(10.0, 14.0, 9);
        let mut rev = grid.clone();
        rev.reverse();
        let a = scan(&ScanSpec::new(SweptParameter::Tau, grid, sys.clone(), t.clone(), vec![Observable::SX])).unwrap();
        let b = scan(&ScanSpec::new(SweptParameter::Tau, rev, sys, t, vec![Observable::SX])).unwrap();
        let mut bv = b.columns[0].values.clone();
        bv.reverse();
        assert_eq!(a.columns[0].values, bv);
    }

    #[test]
    fn grid_validation() {
        let sys = fig1c_system();
        let t = SequenceTemplate::DirectDetection {
            tau: Span::Absolute(1.0),
            repetitions: 5,
        };
        let short = ScanSpec::new(SweptParameter::Tau, linspace(1.0, 2.0, 5), sys.clone(), t.clone(), vec![Observable::SX]);
        assert!(scan(&short).is_err());
        let mut g = linspace(1.0, 2.0, 10);
        g.swap(3, 4);
        let bad = ScanSpec::new(SweptParameter::Tau, g, sys, t, vec![Observable::SX]);
        assert!(scan(&bad).is_err());
    }

    #[test]
    fn auto_grid_is_centered_on_resonance() {
        let sys = fig1c_system();
        let t = SequenceTemplate::DirectDetection {
            tau: Span::Absolute(1.0),
            repetitions: 23,
        };
        let g = auto_grid(SweptParameter::Tau, &sys, &t, false, 401, 10.0).unwrap();
        let want = PI / (2.0 * sys.omega_l + sys.couplings[0].j * (PI / 4.0).cos());
        assert!((g[200] - want).abs() < 1e-12);
        assert_eq!(g.len(), 401);
    }

    #[test]
    fn span_resolution() {
        assert_eq!(Span::Tau0 { tau0: 4.0 }.resolve(2.0), 2.0 * PI);
        assert_eq!(Span::Absolute(1.5).resolve(2.0), 1.5);
    }
}
