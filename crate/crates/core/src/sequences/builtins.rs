//! Built-in detection and mapping sequences.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{SequenceEvent, SequenceProgram};
use crate::dynamics::{Axis, NoiseModel, Target};
use crate::error::{Error, Result};
use crate::spin::{
    Observable, Preparation, QubitPrep, SamplePrep, SensorConvention, SpinSystemConfig,
};

/// Spacing of the two sensor π pulses inside one direct-detection unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DsSpacing {
    /// `τ – π – 2τ – π – τ`
    Full,
    /// `τ/2 – π – τ – π – τ/2`
    Half,
}

/// Rotation axis of the mapping π/2 pulses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UmAxis {
    MinusX,
    PlusX,
}

impl UmAxis {
    pub fn axis(self) -> Axis {
        match self {
            UmAxis::MinusX => Axis::MINUS_X,
            UmAxis::PlusX => Axis::X,
        }
    }
}

/// The discrete convention choices the built-ins depend on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationVariant {
    pub convention: SensorConvention,
    pub ds_spacing: DsSpacing,
    pub um_axis: UmAxis,
    /// Closing sensor π_x after each pair of mapping pulses.
    pub um_closing_pi: bool,
}

impl CalibrationVariant {
    /// The variant selected by [`calibrate_conventions`](super::calibrate_conventions).
    pub const PINNED: CalibrationVariant = CalibrationVariant {
        convention: SensorConvention::ProjectionZeroPlusOne,
        ds_spacing: DsSpacing::Full,
        um_axis: UmAxis::MinusX,
        um_closing_pi: false,
    };

    /// Every variant, in search order.
    pub fn all() -> Vec<CalibrationVariant> {
        let mut out = Vec::new();
        for convention in SensorConvention::ALL {
            for ds_spacing in [DsSpacing::Full, DsSpacing::Half] {
                for um_axis in [UmAxis::MinusX, UmAxis::PlusX] {
                    for um_closing_pi in [false, true] {
                        out.push(CalibrationVariant {
                            convention,
                            ds_spacing,
                            um_axis,
                            um_closing_pi,
                        });
                    }
                }
            }
        }
        out
    }
}

impl Default for CalibrationVariant {
    fn default() -> Self {
        Self::PINNED
    }
}

impl fmt::Display for CalibrationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "convention={}, ds_spacing={}, um_axis={}, um_closing_pi={}",
            self.convention,
            match self.ds_spacing {
                DsSpacing::Full => "full",
                DsSpacing::Half => "half",
            },
            match self.um_axis {
                UmAxis::MinusX => "-x",
                UmAxis::PlusX => "+x",
            },
            self.um_closing_pi
        )
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn count(field: &str, n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Error::invalid(field, "must be >= 1"))
    }
}

fn sensor(axis: Axis, angle: f64) -> SequenceEvent {
    SequenceEvent::pulse(Target::Sensor, axis, angle)
}

fn default_prep() -> Preparation {
    Preparation::new(QubitPrep::Z0, QubitPrep::XPlus, SamplePrep::MaxMixed)
}

/// Sensor-only dynamical decoupling with readout of `⟨S_x⟩`.
pub fn direct_detection(tau: f64, n: usize, v: &CalibrationVariant) -> Result<SequenceProgram> {
    positive("tau", tau)?;
    count("repetitions", n)?;
    let (edge, mid) = match v.ds_spacing {
        DsSpacing::Full => (tau, 2.0 * tau),
        DsSpacing::Half => (tau / 2.0, tau),
    };
    Ok(SequenceProgram {
        name: "direct_detection".into(),
        prologue: vec![sensor(Axis::Y, FRAC_PI_2)],
        body: vec![
            SequenceEvent::delay(edge),
            sensor(Axis::X, PI),
            SequenceEvent::delay(mid),
            sensor(Axis::X, PI),
            SequenceEvent::delay(edge),
        ],
        repetitions: n,
        epilogue: vec![SequenceEvent::measure(Observable::SX)],
        reprepare: vec![sensor(Axis::Y, FRAC_PI_2)],
        preparation: default_prep(),
        rf_swap: false,
        noise: NoiseModel::ideal(),
    })
}

/// One mapping unit: `τ₀ – π/2 – τ₀`.
fn mapping_unit(tau0: f64, v: &CalibrationVariant) -> Vec<SequenceEvent> {
    vec![
        SequenceEvent::delay(tau0),
        sensor(v.um_axis.axis(), FRAC_PI_2),
        SequenceEvent::delay(tau0),
    ]
}

/// A full mapping block: two units plus the optional closing pulse.
fn mapping_block(tau0: f64, v: &CalibrationVariant) -> Vec<SequenceEvent> {
    let mut b = mapping_unit(tau0, v);
    b.extend(mapping_unit(tau0, v));
    if v.um_closing_pi {
        b.push(sensor(Axis::X, PI));
    }
    b
}

/// Stroboscopic sensor π/2 pulses that imprint the sample coupling on the
/// ancilla. Reads both coherences.
pub fn mapping(tau0: f64, repeats: usize, v: &CalibrationVariant) -> Result<SequenceProgram> {
    positive("tau0", tau0)?;
    count("repeats", repeats)?;
    let mut epilogue = Vec::new();
    if v.um_closing_pi {
        epilogue.push(sensor(Axis::X, PI));
    }
    epilogue.push(SequenceEvent::measure(Observable::CoherenceF));
    epilogue.push(SequenceEvent::measure(Observable::CoherenceS));
    Ok(SequenceProgram {
        name: "mapping".into(),
        prologue: vec![sensor(Axis::Y, FRAC_PI_2)],
        body: mapping_unit(tau0, v),
        repetitions: repeats,
        epilogue,
        reprepare: vec![sensor(Axis::Y, FRAC_PI_2)],
        preparation: Preparation::new(QubitPrep::Z0, QubitPrep::XPlus, SamplePrep::Z0),
        rf_swap: false,
        noise: NoiseModel::ideal(),
    })
}

/// Number of mapping blocks (each `4τ₀`) closest to `tau`, at least one.
pub fn df_blocks(tau: f64, tau0: f64) -> usize {
    ((tau / (4.0 * tau0)).round() as usize).max(1)
}

/// Ancilla detection: mapping blocks interleaved with ancilla π pulses
/// spaced `τ` apart (τ rounded to a multiple of `4τ₀`). Reads `⟨F_x⟩`.
pub fn detection_df(tau: f64, n: usize, tau0: f64, v: &CalibrationVariant) -> Result<SequenceProgram> {
    positive("tau", tau)?;
    positive("tau0", tau0)?;
    count("repetitions", n)?;
    let k = df_blocks(tau, tau0);
    let block = mapping_block(tau0, v);
    let mut body = Vec::new();
    let blocks = |m: usize, body: &mut Vec<SequenceEvent>| {
        for _ in 0..m {
            body.extend(block.iter().cloned());
        }
    };
    blocks(k, &mut body);
    body.push(SequenceEvent::pulse(Target::Ancilla, Axis::X, PI));
    blocks(2 * k, &mut body);
    body.push(SequenceEvent::pulse(Target::Ancilla, Axis::X, PI));
    blocks(k, &mut body);
    Ok(SequenceProgram {
        name: "detection_df".into(),
        prologue: vec![sensor(Axis::Y, FRAC_PI_2)],
        body,
        repetitions: n,
        epilogue: vec![SequenceEvent::measure(Observable::FX)],
        reprepare: vec![sensor(Axis::Y, FRAC_PI_2)],
        preparation: default_prep(),
        rf_swap: false,
        noise: NoiseModel::ideal(),
    })
}

/// Odd multiple of `τ₀` closest to `tau`.
pub fn dsf_multiple(tau: f64, tau0: f64) -> usize {
    let r = tau / tau0;
    (((r - 1.0) / 2.0).round().max(0.0) as usize) * 2 + 1
}

/// Asymmetric sensor-only sequence: `τ₀ – π/2 – τ₀ – τ – π – τ` with `τ`
/// rounded to an odd multiple of `τ₀`. Reads `⟨S_x⟩` and `⟨F_x⟩`.
pub fn combined_dsf(tau: f64, n: usize, tau0: f64, _v: &CalibrationVariant) -> Result<SequenceProgram> {
    positive("tau", tau)?;
    positive("tau0", tau0)?;
    count("repetitions", n)?;
    let b = dsf_multiple(tau, tau0) as f64 * tau0;
    Ok(SequenceProgram {
        name: "combined_dsf".into(),
        prologue: vec![],
        body: vec![
            SequenceEvent::delay(tau0),
            sensor(Axis::X, FRAC_PI_2),
            SequenceEvent::delay(tau0),
            SequenceEvent::delay(b),
            sensor(Axis::X, PI),
            SequenceEvent::delay(b),
        ],
        repetitions: n,
        epilogue: vec![
            sensor(Axis::Y, FRAC_PI_2),
            SequenceEvent::measure(Observable::SX),
            SequenceEvent::measure(Observable::FX),
        ],
        reprepare: vec![],
        preparation: default_prep(),
        rf_swap: false,
        noise: NoiseModel::ideal(),
    })
}

/// Warning text unless `g > ω_L > J` for every coupling.
pub fn regime_warning(config: &SpinSystemConfig) -> Option<String> {
    let j = config.max_j();
    if config.g > config.omega_l && config.omega_l > j {
        None
    } else {
        Some(format!(
            "parameters outside the mapping regime g > omega_L > J (g = {}, omega_L = {}, J = {})",
            config.g, config.omega_l, j
        ))
    }
}
