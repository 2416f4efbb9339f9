use serde::Serialize;

use super::config::{Experiment, GridSpec, RunConfig, ScanSection, Series};
use crate::dynamics::PropagatorCache;
use crate::error::{Error, Result};
use crate::experiments::{
    auto_grid, contrast_vs_t1, find_peak, linspace, optimize_repetitions, scan_with_cache,
    sensitivity_estimates, Column, EstimateReport, PeakReport, RepetitionSweep, ScanResult,
    ScanSpec, SequenceTemplate, T1Family, T1Study,
};
use crate::sequences::CalibrationVariant;
use crate::spin::SpinSystemConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnPeak {
    pub column: String,
    pub peak: Option<PeakReport>,
    /// Why no peak was reported.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Summary {
    Scan,
    ContrastVsT1(T1Family),
    Estimates(EstimateReport),
    OptimizeRepetitions(RepetitionSweep),
}

/// Everything a run produces, ready to be written.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub variant: CalibrationVariant,
    pub result: ScanResult,
    pub peaks: Vec<ColumnPeak>,
    pub summary: Summary,
}

impl RunReport {
    /// True for a scan in which no column shows a peak.
    pub fn no_peaks(&self) -> bool {
        !self.peaks.is_empty() && self.peaks.iter().all(|p| p.peak.is_none())
    }
}

fn resolve_grid(sc: &ScanSection, system: &SpinSystemConfig, s: &Series) -> Result<Vec<f64>> {
    match &sc.grid {
        GridSpec::Values { values } => Ok(values.clone()),
        GridSpec::Range { start, stop, points } => Ok(linspace(*start, *stop, *points)),
        GridSpec::Auto {
            points, half_widths, ..
        } => auto_grid(sc.parameter, system, &s.sequence, s.rf_swap, *points, *half_widths),
    }
}

fn series_spec(cfg: &RunConfig, s: &Series, template: SequenceTemplate, grid: Vec<f64>) -> Result<ScanSpec> {
    let sc = cfg.scan.as_ref().ok_or_else(|| Error::invalid("scan", "section is required"))?;
    Ok(ScanSpec {
        parameter: sc.parameter,
        grid,
        system: cfg.system()?.clone(),
        noise: s.noise.clone().unwrap_or_else(|| cfg.noise()),
        template,
        preparation: s.preparation,
        rf_swap: s.rf_swap,
        observables: s.observables.clone(),
        variant: CalibrationVariant::PINNED,
        label: Some(s.label.clone()),
    })
}

/// Executes a validated configuration on the current rayon pool.
pub fn execute(cfg: &RunConfig) -> Result<RunReport> {
    let (result, peaks, summary) = match cfg.experiment() {
        Experiment::Scan => run_scan(cfg)?,
        Experiment::ContrastVsT1 => run_t1(cfg)?,
        Experiment::Estimates => run_estimates(cfg)?,
        Experiment::OptimizeRepetitions => run_repetitions(cfg)?,
    };
    if result.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(RunReport {
        config: cfg.clone(),
        variant: CalibrationVariant::PINNED,
        result,
        peaks,
        summary,
    })
}

fn run_scan(cfg: &RunConfig) -> Result<(ScanResult, Vec<ColumnPeak>, Summary)> {
    let sc = cfg.scan.as_ref().ok_or_else(|| Error::invalid("scan", "section is required"))?;
    let system = cfg.system()?;
    let first = cfg
        .series
        .first()
        .ok_or_else(|| Error::invalid("series", "at least one series is required"))?;
    let grid = resolve_grid(sc, system, first)?;
    let cache = PropagatorCache::new();
    let mut parts = Vec::new();
    let mut widths = Vec::new();
    for s in &cfg.series {
        let spec = series_spec(cfg, s, s.sequence.clone(), grid.clone())?;
        let r = scan_with_cache(&spec, &cache)?;
        widths.push(r.columns.len());
        parts.push(r);
    }
    let result = ScanResult::merge(parts)?;

    let raw: Vec<Result<PeakReport>> = result
        .columns
        .iter()
        .map(|c| find_peak(&result.grid, &c.values, sc.baseline_window, None))
        .collect();
    // first column index of each series
    let offsets: Vec<usize> = widths
        .iter()
        .scan(0, |acc, w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();
    let mut peaks = Vec::new();
    for (si, s) in cfg.series.iter().enumerate() {
        let reference = s
            .normalize_to
            .as_ref()
            .and_then(|r| cfg.series.iter().position(|o| &o.label == r));
        for k in 0..widths[si] {
            let col = offsets[si] + k;
            let column = result.columns[col].name.clone();
            let normalizer = match reference {
                Some(ri) if k < widths[ri] => match &raw[offsets[ri] + k] {
                    Ok(p) => Some(p.absolute_contrast),
                    Err(_) => None,
                },
                _ => None,
            };
            let entry = match find_peak(&result.grid, &result.columns[col].values, sc.baseline_window, normalizer) {
                Ok(p) => ColumnPeak {
                    column,
                    peak: Some(p),
                    note: None,
                },
                Err(e @ Error::NoPeak { .. }) => ColumnPeak {
                    column,
                    peak: None,
                    note: Some(e.to_string()),
                },
                Err(e) => return Err(e),
            };
            peaks.push(entry);
        }
    }
    Ok((result, peaks, Summary::Scan))
}

fn run_t1(cfg: &RunConfig) -> Result<(ScanResult, Vec<ColumnPeak>, Summary)> {
    let t = cfg
        .t1_study
        .as_ref()
        .ok_or_else(|| Error::invalid("t1_study", "section is required"))?;
    let system = cfg.system()?.clone();
    let (reinit_duration, gamma_n) = match t.reinit_duration {
        Some(d) => {
            let tr = d.resolve(system.g);
            let rate = if t.reinit_survival < 1.0 {
                -t.reinit_survival.ln() / tr
            } else {
                0.0
            };
            (tr, rate)
        }
        None => (0.0, 0.0),
    };
    let study = T1Study {
        system,
        template: t.sequence.clone(),
        grid: vec![],
        t1: t.t1.clone(),
        schedules: t.schedules.clone(),
        gamma_n,
        reinit_duration,
        baseline_window: t.baseline_window,
    };
    let family = contrast_vs_t1(&study)?;
    let result = ScanResult {
        parameter: "t1".into(),
        grid: family.t1.clone(),
        columns: family
            .curves
            .iter()
            .map(|c| Column {
                name: format!("contrast {}", c.label),
                values: c.contrast.clone(),
            })
            .collect(),
    };
    Ok((result, vec![], Summary::ContrastVsT1(family)))
}

fn run_estimates(cfg: &RunConfig) -> Result<(ScanResult, Vec<ColumnPeak>, Summary)> {
    let params = cfg.estimates.clone().unwrap_or_default();
    let report = sensitivity_estimates(&params)?;
    let col = |name: &str, f: &dyn Fn(usize) -> f64| Column {
        name: name.into(),
        values: (0..report.scenarios.len()).map(f).collect(),
    };
    let result = ScanResult {
        parameter: "scenario".into(),
        grid: (1..=report.scenarios.len()).map(|i| i as f64).collect(),
        columns: vec![
            col("relative_contrast", &|i| report.scenarios[i].relative_contrast),
            col("target", &|i| report.scenarios[i].target),
            col("repetitions", &|i| report.scenarios[i].repetitions as f64),
        ],
    };
    Ok((result, vec![], Summary::Estimates(report)))
}

fn run_repetitions(cfg: &RunConfig) -> Result<(ScanResult, Vec<ColumnPeak>, Summary)> {
    let sc = cfg.scan.as_ref().ok_or_else(|| Error::invalid("scan", "section is required"))?;
    let range = cfg
        .repetitions
        .ok_or_else(|| Error::invalid("repetitions", "section is required"))?;
    let system = cfg.system()?;
    let s = &cfg.series[0];
    let sweep = optimize_repetitions(
        |n| {
            let mut sized = s.clone();
            sized.sequence = s.sequence.with_repetitions(n);
            let grid = resolve_grid(sc, system, &sized)?;
            series_spec(cfg, &sized, sized.sequence.clone(), grid)
        },
        range.min..=range.max,
        sc.baseline_window,
    )?;
    let result = ScanResult {
        parameter: "repetitions".into(),
        grid: sweep.contrasts.iter().map(|c| c.0 as f64).collect(),
        columns: vec![Column {
            name: format!("deviation {}", s.label),
            values: sweep.contrasts.iter().map(|c| c.1).collect(),
        }],
    };
    Ok((result, vec![], Summary::OptimizeRepetitions(sweep)))
}
