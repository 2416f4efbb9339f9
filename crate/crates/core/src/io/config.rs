use serde::{Deserialize, Serialize};

use crate::dynamics::{NoiseModel, ReinitSchedule};
use crate::error::{Error, Result};
use crate::experiments::{
    preset_text, EstimateParams, SequenceTemplate, Span, SweptParameter, DEFAULT_HALF_WIDTHS,
    DEFAULT_POINTS, DEFAULT_WINDOW,
};
use crate::sequences::parse_error;
use crate::spin::{Observable, Preparation, SpinSystemConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    #[default]
    Scan,
    ContrastVsT1,
    Estimates,
    OptimizeRepetitions,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Scan => "scan",
            Experiment::ContrastVsT1 => "contrast_vs_t1",
            Experiment::Estimates => "estimates",
            Experiment::OptimizeRepetitions => "optimize_repetitions",
        }
    }
}

/// Grid given as explicit values, an evenly spaced range, or centered on
/// the predicted resonance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridSpec {
    Values {
        values: Vec<f64>,
    },
    Range {
        start: f64,
        stop: f64,
        points: usize,
    },
    Auto {
        auto: bool,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default = "default_half_widths")]
        half_widths: f64,
    },
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

fn default_half_widths() -> f64 {
    DEFAULT_HALF_WIDTHS
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub parameter: SweptParameter,
    pub grid: GridSpec,
    #[serde(default = "default_window")]
    pub baseline_window: f64,
}

/// One curve family: a sequence with its observables and optional
/// overrides of the shared noise and preparation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub label: String,
    pub sequence: SequenceTemplate,
    pub observables: Vec<Observable>,
    pub noise: Option<NoiseModel>,
    pub preparation: Option<Preparation>,
    #[serde(default)]
    pub rf_swap: bool,
    /// Label of the series whose deviations normalize this one's contrast.
    pub normalize_to: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T1Section {
    pub sequence: SequenceTemplate,
    pub t1: Vec<f64>,
    pub schedules: Vec<ReinitSchedule>,
    /// Sensor reset time per reinit.
    pub reinit_duration: Option<Span>,
    /// Ancilla coherence kept per reinit, `e^{-Γ_N τ_r}`.
    #[serde(default = "one")]
    pub reinit_survival: f64,
    #[serde(default = "default_window")]
    pub baseline_window: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepetitionSection {
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: None,
            formats: default_formats(),
        }
    }
}

/// A complete run description.
///
/// With `preset` set, every section missing here is taken from the named
/// preset; sections present here replace the preset's wholesale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Unit of all times; frequencies are angular in its inverse.
    pub units: String,
    pub preset: Option<String>,
    pub experiment: Option<Experiment>,
    pub system: Option<SpinSystemConfig>,
    pub noise: Option<NoiseModel>,
    pub scan: Option<ScanSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<Series>,
    pub t1_study: Option<T1Section>,
    pub repetitions: Option<RepetitionSection>,
    pub estimates: Option<EstimateParams>,
    pub output: Option<OutputSection>,
}

impl RunConfig {
    pub fn experiment(&self) -> Experiment {
        self.experiment.unwrap_or_default()
    }

    pub fn output(&self) -> OutputSection {
        self.output.clone().unwrap_or_default()
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise.clone().unwrap_or_default()
    }

    pub fn system(&self) -> Result<&SpinSystemConfig> {
        self.system
            .as_ref()
            .ok_or_else(|| Error::invalid("system", "section is required for this experiment"))
    }

    fn fill_from(&mut self, base: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => {$(
                if self.$f.is_none() {
                    self.$f = base.$f;
                }
            )*};
        }
        take!(experiment, system, noise, scan, t1_study, repetitions, estimates, output);
        if self.series.is_empty() {
            self.series = base.series;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.trim().is_empty() {
            return Err(Error::invalid("units", "must not be empty"));
        }
        if let Some(s) = &self.system {
            s.validate()?;
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        for (i, s) in self.series.iter().enumerate() {
            if let Some(n) = &s.noise {
                n.validate().map_err(|e| prefix(e, &format!("series[{i}]")))?;
            }
            if s.observables.is_empty() {
                return Err(Error::invalid(format!("series[{i}].observables"), "must not be empty"));
            }
            if let Some(r) = &s.normalize_to {
                if !self.series.iter().any(|o| &o.label == r) {
                    return Err(Error::invalid(
                        format!("series[{i}].normalize_to"),
                        format!("no series labelled `{r}`"),
                    ));
                }
            }
            if self.series[..i].iter().any(|o| o.label == s.label) {
                return Err(Error::invalid(format!("series[{i}].label"), "labels must be unique"));
            }
        }
        if let Some(sc) = &self.scan {
            if !(sc.baseline_window > 0.0 && sc.baseline_window <= 1.0) {
                return Err(Error::invalid("scan.baseline_window", "must lie in (0, 1]"));
            }
            match &sc.grid {
                GridSpec::Range { points, .. } | GridSpec::Auto { points, .. } if *points < 8 => {
                    return Err(Error::invalid("scan.grid.points", "must be >= 8"));
                }
                GridSpec::Auto { auto: false, .. } => {
                    return Err(Error::invalid("scan.grid.auto", "must be true when given"));
                }
                _ => {}
            }
        }
        if let Some(t) = &self.t1_study {
            if !(t.reinit_survival > 0.0 && t.reinit_survival <= 1.0) {
                return Err(Error::invalid("t1_study.reinit_survival", "must lie in (0, 1]"));
            }
            if t.reinit_survival < 1.0 && t.reinit_duration.is_none() {
                return Err(Error::invalid(
                    "t1_study.reinit_duration",
                    "required when reinit_survival < 1",
                ));
            }
        }
        if let Some(r) = &self.repetitions {
            if r.min == 0 || r.min > r.max {
                return Err(Error::invalid("repetitions", "need 1 <= min <= max"));
            }
        }
        match self.experiment() {
            Experiment::Scan | Experiment::OptimizeRepetitions => {
                self.system()?;
                if self.scan.is_none() {
                    return Err(Error::invalid("scan", "section is required for this experiment"));
                }
                if self.series.is_empty() {
                    return Err(Error::invalid("series", "at least one series is required"));
                }
                if self.experiment() == Experiment::OptimizeRepetitions && self.repetitions.is_none() {
                    return Err(Error::invalid("repetitions", "section is required for this experiment"));
                }
            }
            Experiment::ContrastVsT1 => {
                self.system()?;
                if self.t1_study.is_none() {
                    return Err(Error::invalid("t1_study", "section is required for this experiment"));
                }
            }
            Experiment::Estimates => {}
        }
        Ok(())
    }
}

fn prefix(e: Error, p: &str) -> Error {
    match e {
        Error::Invalid { field, reason } => Error::Invalid {
            field: format!("{p}.{field}"),
            reason,
        },
        other => other,
    }
}

/// Parses, resolves the preset reference and validates.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    if let Some(name) = cfg.preset.clone() {
        let base_text = preset_text(&name)?;
        let base: RunConfig = toml::from_str(base_text).map_err(|e| parse_error(base_text, &e))?;
        cfg.fill_from(base);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The named preset as a resolved configuration.
pub fn load_preset(name: &str) -> Result<RunConfig> {
    parse_config(&format!("units = \"1/g\"\npreset = \"{name}\"\n"))
}

pub fn read_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
