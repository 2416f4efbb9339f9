//! Pulse-sequence programs and their interpreter.

mod builtins;
mod calibration;

pub use builtins::*;
pub use calibration::*;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    apply_unitary, depolarize, left_local, reinitialize_sensor, right_local_adjoint, rotation,
    survival, Axis, Hamiltonian, NoiseModel, PropagatorCache, RelaxationGranularity, Target,
};
use crate::error::{Error, Result};
use crate::spin::{expectation, CMatrix, DensityState, Observable, Preparation, SpinSystemConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceEvent {
    Delay { duration: f64 },
    Pulse { target: Target, axis: Axis, angle: f64 },
    Reinit,
    Measure { observable: Observable },
}

impl SequenceEvent {
    pub fn delay(duration: f64) -> Self {
        SequenceEvent::Delay { duration }
    }

    pub fn pulse(target: Target, axis: Axis, angle: f64) -> Self {
        SequenceEvent::Pulse {
            target,
            axis,
            angle,
        }
    }

    pub fn measure(observable: Observable) -> Self {
        SequenceEvent::Measure { observable }
    }

    fn is_measure(&self) -> bool {
        matches!(self, SequenceEvent::Measure { .. })
    }
}

/// `prologue, body × repetitions, epilogue`, with optional sensor
/// reinitialization between body units per the noise schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceProgram {
    pub name: String,
    #[serde(default)]
    pub prologue: Vec<SequenceEvent>,
    #[serde(default)]
    pub body: Vec<SequenceEvent>,
    pub repetitions: usize,
    #[serde(default)]
    pub epilogue: Vec<SequenceEvent>,
    /// Events replayed right after each scheduled reinitialization.
    #[serde(default)]
    pub reprepare: Vec<SequenceEvent>,
    pub preparation: Preparation,
    #[serde(default)]
    pub rf_swap: bool,
    #[serde(default)]
    pub noise: NoiseModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramText {
    units: String,
    program: SequenceProgram,
}

impl SequenceProgram {
    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_rf_swap(mut self, rf_swap: bool) -> Self {
        self.rf_swap = rf_swap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::MalformedProgram("repetitions must be >= 1".into()));
        }
        for (section, events) in [
            ("prologue", &self.prologue),
            ("body", &self.body),
            ("epilogue", &self.epilogue),
            ("reprepare", &self.reprepare),
        ] {
            let first_measure = events.iter().position(|e| e.is_measure()).unwrap_or(events.len());
            for (i, e) in events.iter().enumerate() {
                match e {
                    SequenceEvent::Delay { duration } => {
                        if !(duration.is_finite() && *duration >= 0.0) {
                            return Err(Error::MalformedProgram(format!(
                                "{section}[{i}]: delay must be finite and >= 0, got {duration}"
                            )));
                        }
                    }
                    SequenceEvent::Pulse { axis, angle, .. } => {
                        if !(axis.norm() > 0.0 && axis.norm().is_finite() && angle.is_finite()) {
                            return Err(Error::MalformedProgram(format!(
                                "{section}[{i}]: pulse needs a nonzero axis and finite angle"
                            )));
                        }
                    }
                    SequenceEvent::Reinit if section == "reprepare" => {
                        return Err(Error::MalformedProgram(
                            "reprepare may not contain reinit".into(),
                        ));
                    }
                    SequenceEvent::Reinit => {}
                    SequenceEvent::Measure { .. } => {
                        if section == "reprepare" {
                            return Err(Error::MalformedProgram(
                                "reprepare may not contain measurements".into(),
                            ));
                        }
                    }
                }
                if i > first_measure && !e.is_measure() {
                    return Err(Error::MalformedProgram(format!(
                        "{section}[{i}]: measurements must close a section"
                    )));
                }
            }
        }
        self.noise.validate()
    }

    /// Total duration including ancilla pulse and reinit times.
    pub fn duration(&self, g: f64) -> f64 {
        let tp = self.noise.ancilla_pulse_time(g);
        let sum = |events: &[SequenceEvent]| -> f64 {
            events
                .iter()
                .map(|e| match e {
                    SequenceEvent::Delay { duration } => *duration,
                    SequenceEvent::Pulse {
                        target: Target::Ancilla,
                        ..
                    } => tp,
                    SequenceEvent::Reinit => self.noise.reinit_duration,
                    _ => 0.0,
                })
                .sum()
        };
        let reinits = (1..=self.repetitions)
            .filter(|&n| self.noise.reinit_schedule.fires_after(n, self.repetitions))
            .count() as f64;
        sum(&self.prologue)
            + self.repetitions as f64 * sum(&self.body)
            + reinits * (self.noise.reinit_duration + sum(&self.reprepare))
            + sum(&self.epilogue)
    }

    /// Text form with a unit label, for golden files.
    pub fn to_text(&self, units: &str) -> String {
        let doc = ProgramText {
            units: units.to_string(),
            program: self.clone(),
        };
        toml::to_string(&doc).expect("sequence programs always serialize")
    }

    /// Parses [`to_text`](Self::to_text) output; returns the unit label too.
    pub fn from_text(text: &str) -> Result<(String, SequenceProgram)> {
        let doc: ProgramText = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        doc.program.validate()?;
        Ok((doc.units, doc.program))
    }

    fn unitary_body(&self) -> bool {
        self.body
            .iter()
            .all(|e| matches!(e, SequenceEvent::Delay { .. } | SequenceEvent::Pulse { .. } | SequenceEvent::Measure { .. }))
    }
}

pub(crate) fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => line_col(text, span.start),
        None => (0, 0),
    };
    Error::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

/// 1-based line and column of a byte offset.
pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|&c| c != '\n').count() + 1;
    (line, column)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Readout {
    pub time: f64,
    pub observable: Observable,
    pub value: Complex64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub state: DensityState,
    pub readouts: Vec<Readout>,
}

/// Runs a program with a private propagator cache.
pub fn run(program: &SequenceProgram, config: &SpinSystemConfig, initial: &DensityState) -> Result<RunOutput> {
    run_cached(program, config, initial, &PropagatorCache::new())
}

pub fn run_cached(
    program: &SequenceProgram,
    config: &SpinSystemConfig,
    initial: &DensityState,
    cache: &PropagatorCache,
) -> Result<RunOutput> {
    program.validate()?;
    config.validate()?;
    if initial.dim() != config.dim() {
        return Err(Error::DimensionMismatch {
            expected: config.dim(),
            found: initial.dim(),
        });
    }
    let h = cache.hamiltonian(config, program.rf_swap)?;
    let mut ex = Exec {
        state: initial.clone(),
        time: 0.0,
        pending: 0.0,
        readouts: Vec::new(),
        h: h.clone(),
        cache,
        noise: &program.noise,
        tp: program.noise.ancilla_pulse_time(config.g),
    };

    ex.events(&program.prologue)?;
    ex.flush();

    let split = program
        .body
        .iter()
        .position(|e| e.is_measure())
        .unwrap_or(program.body.len());
    let (ops, measures) = program.body.split_at(split);
    let composed = program.unitary_body()
        && (program.noise.granularity == RelaxationGranularity::PerRepetition
            || program.noise.gamma_s == 0.0);
    let unit = if composed && !ops.is_empty() {
        Some(ex.unit_unitary(ops))
    } else {
        None
    };

    let n = program.repetitions;
    for k in 1..=n {
        match &unit {
            Some((u, dt)) => {
                ex.state = apply_unitary(&ex.state, u);
                ex.time += dt;
                ex.pending += dt;
            }
            None => ex.events(ops)?,
        }
        ex.flush();
        ex.events(measures)?;
        if program.noise.reinit_schedule.fires_after(k, n) {
            ex.reinit();
            ex.events(&program.reprepare)?;
            ex.flush();
        }
    }

    ex.events(&program.epilogue)?;
    ex.flush();
    Ok(RunOutput {
        state: ex.state,
        readouts: ex.readouts,
    })
}

struct Exec<'a> {
    state: DensityState,
    time: f64,
    /// Relaxation time not yet applied.
    pending: f64,
    readouts: Vec<Readout>,
    h: Arc<Hamiltonian>,
    cache: &'a PropagatorCache,
    noise: &'a NoiseModel,
    tp: f64,
}

impl Exec<'_> {
    fn per_delay(&self) -> bool {
        self.noise.granularity == RelaxationGranularity::PerDelay
    }

    fn relax(&mut self, t: f64) {
        if self.per_delay() {
            self.state = depolarize(&self.state, survival(self.noise.gamma_s, t));
        } else {
            self.pending += t;
        }
    }

    fn flush(&mut self) {
        if self.pending > 0.0 {
            self.state = depolarize(&self.state, survival(self.noise.gamma_s, self.pending));
            self.pending = 0.0;
        }
    }

    fn reinit(&mut self) {
        self.flush();
        self.state = reinitialize_sensor(&self.state, self.noise);
        self.time += self.noise.reinit_duration;
    }

    fn events(&mut self, events: &[SequenceEvent]) -> Result<()> {
        for e in events {
            match e {
                SequenceEvent::Delay { duration } => {
                    if *duration > 0.0 {
                        let p = self.cache.propagator(&self.h, *duration);
                        self.state = apply_unitary(&self.state, &p.matrix);
                        self.time += duration;
                        self.relax(*duration);
                    }
                }
                SequenceEvent::Pulse {
                    target,
                    axis,
                    angle,
                } => {
                    let r = rotation(*axis, *angle);
                    let bit = target.site().bit(self.state.n_samples());
                    let mut m = self.state.matrix().clone();
                    left_local(&mut m, bit, &r);
                    right_local_adjoint(&mut m, bit, &r);
                    self.state = self.state.evolved(m);
                    if *target == Target::Ancilla {
                        self.time += self.tp;
                        self.relax(self.tp);
                    }
                }
                SequenceEvent::Reinit => self.reinit(),
                SequenceEvent::Measure { observable } => {
                    self.flush();
                    let value = expectation(&self.state, *observable)?;
                    self.readouts.push(Readout {
                        time: self.time,
                        observable: *observable,
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    /// Unitary of a delay/pulse list and the relaxation time it spans.
    fn unit_unitary(&self, ops: &[SequenceEvent]) -> (Arc<CMatrix>, f64) {
        let mut dt = 0.0;
        for e in ops {
            match e {
                SequenceEvent::Delay { duration } => dt += duration,
                SequenceEvent::Pulse {
                    target: Target::Ancilla,
                    ..
                } => dt += self.tp,
                _ => {}
            }
        }
        let key = (self.h.id(), fingerprint(ops));
        let u = self.cache.get_or_insert_with(key, || {
            let d = self.h.dim();
            let n = self.h.n_samples();
            let mut u = CMatrix::identity(d, d);
            for e in ops {
                match e {
                    SequenceEvent::Delay { duration } if *duration > 0.0 => {
                        let p = self.cache.propagator(&self.h, *duration);
                        u = p.matrix.as_ref() * u;
                    }
                    SequenceEvent::Pulse {
                        target,
                        axis,
                        angle,
                    } => left_local(&mut u, target.site().bit(n), &rotation(*axis, *angle)),
                    _ => {}
                }
            }
            u
        });
        (u, dt)
    }
}

fn fingerprint(events: &[SequenceEvent]) -> u64 {
    let mut h = DefaultHasher::new();
    "unit".hash(&mut h);
    for e in events {
        match e {
            SequenceEvent::Delay { duration } => (0u8, duration.to_bits()).hash(&mut h),
            SequenceEvent::Pulse {
                target,
                axis,
                angle,
            } => (1u8, *target, axis.x.to_bits(), axis.y.to_bits(), angle.to_bits()).hash(&mut h),
            SequenceEvent::Reinit => 2u8.hash(&mut h),
            SequenceEvent::Measure { observable } => (3u8, *observable).hash(&mut h),
        }
    }
    h.finish()
}
