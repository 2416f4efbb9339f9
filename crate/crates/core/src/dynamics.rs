//! Hamiltonian assembly, exact propagation, ideal pulses and the sensor
//! relaxation / reset channels.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{CMatrix, DensityState, Site, SpinSystemConfig, ZERO};

/// `H = ω_L Σ I_z + g S_z F_z + S_z Σ J_i (cosθ_i I_z + sinθ_i I_x)` with
/// spin-½ ancilla and sample operators (`σ/2`) and `S_z` per convention.
#[derive(Debug)]
pub struct Hamiltonian {
    matrix: CMatrix,
    id: u64,
    n_samples: usize,
    spectrum: OnceLock<Vec<BlockEigen>>,
}

#[derive(Debug)]
struct BlockEigen {
    values: Vec<f64>,
    vectors: CMatrix,
}

/// Components of a coupling along and across the sensor quantization axis.
/// The RF swap exchanges them.
pub fn coupling_components(theta: f64, rf_swap: bool) -> (f64, f64) {
    let (c, s) = (theta.cos(), theta.sin());
    if rf_swap {
        (s, c)
    } else {
        (c, s)
    }
}

fn config_id(config: &SpinSystemConfig, rf_swap: bool) -> u64 {
    let mut h = DefaultHasher::new();
    config.omega_l.to_bits().hash(&mut h);
    config.g.to_bits().hash(&mut h);
    for c in &config.couplings {
        c.j.to_bits().hash(&mut h);
        c.theta.to_bits().hash(&mut h);
    }
    config.sensor_convention.hash(&mut h);
    rf_swap.hash(&mut h);
    h.finish()
}

pub fn build_hamiltonian(config: &SpinSystemConfig, rf_swap: bool) -> Result<Hamiltonian> {
    config.validate()?;
    let n = config.n_samples();
    let dim = config.dim();
    let (s0, s1) = config.sensor_convention.levels();
    let sensor_mask = 1usize << Site::Sensor.bit(n);
    let ancilla_mask = 1usize << Site::Ancilla.bit(n);
    let comps: Vec<(f64, f64)> = config
        .couplings
        .iter()
        .map(|c| coupling_components(c.theta, rf_swap))
        .collect();

    let mut m = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let sz = if col & sensor_mask == 0 { s0 } else { s1 };
        let fz = if col & ancilla_mask == 0 { 0.5 } else { -0.5 };
        let mut diag = config.g * sz * fz;
        for (k, c) in config.couplings.iter().enumerate() {
            let mask = 1usize << Site::Sample(k + 1).bit(n);
            let iz = if col & mask == 0 { 0.5 } else { -0.5 };
            diag += config.omega_l * iz + sz * c.j * comps[k].0 * iz;
            let off = sz * c.j * comps[k].1 * 0.5;
            if off != 0.0 {
                m[(col ^ mask, col)] += Complex64::new(off, 0.0);
            }
        }
        m[(col, col)] += Complex64::new(diag, 0.0);
    }
    Ok(Hamiltonian {
        matrix: m,
        id: config_id(config, rf_swap),
        n_samples: n,
        spectrum: OnceLock::new(),
    })
}

impl Hamiltonian {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Identity of the generating configuration and RF-swap flag.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Largest |[H, S_z]| element, with `S_z` taken as the sensor bit projector.
    pub fn sensor_commutator_norm(&self) -> f64 {
        let d = self.dim();
        let mask = 1usize << Site::Sensor.bit(self.n_samples);
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                if (i & mask) != (j & mask) {
                    worst = worst.max(self.matrix[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .spectrum()
            .iter()
            .flat_map(|b| b.values.iter().copied())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    // H is block diagonal in the (sensor, ancilla) z sectors, which are
    // contiguous index ranges because they are the two leading bits.
    fn spectrum(&self) -> &[BlockEigen] {
        self.spectrum.get_or_init(|| {
            let b = self.dim() / 4;
            (0..4)
                .map(|k| {
                    let sub = self.matrix.view((k * b, k * b), (b, b)).clone_owned();
                    let eig = sub.symmetric_eigen();
                    BlockEigen {
                        values: eig.eigenvalues.iter().copied().collect(),
                        vectors: eig.eigenvectors,
                    }
                })
                .collect()
        })
    }

    /// `exp(−iHt)` from the eigendecomposition.
    pub fn propagator(&self, t: f64) -> CMatrix {
        let d = self.dim();
        if t == 0.0 {
            return CMatrix::identity(d, d);
        }
        let b = d / 4;
        let mut u = CMatrix::zeros(d, d);
        for (k, blk) in self.spectrum().iter().enumerate() {
            let mut scaled = blk.vectors.clone();
            for (c, &w) in blk.values.iter().enumerate() {
                let ph = Complex64::from_polar(1.0, -w * t);
                for z in scaled.column_mut(c).iter_mut() {
                    *z *= ph;
                }
            }
            let ub = scaled * blk.vectors.adjoint();
            u.view_mut((k * b, k * b), (b, b)).copy_from(&ub);
        }
        u
    }
}

/// A unitary for a fixed duration.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub matrix: Arc<CMatrix>,
    pub duration: f64,
}

impl Propagator {
    pub fn new(h: &Hamiltonian, t: f64) -> Self {
        Propagator {
            matrix: Arc::new(h.propagator(t)),
            duration: t,
        }
    }

    /// max |U†U − 1|.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.matrix.nrows();
        let p = self.matrix.adjoint() * self.matrix.as_ref();
        (p - CMatrix::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Shared cache of Hamiltonians and unitaries.
///
/// Keys are `(Hamiltonian id, tag)`; for plain propagators the tag is the
/// duration's bit pattern. Values are pure functions of their key, so
/// concurrent fills race harmlessly.
pub struct PropagatorCache {
    unitaries: RwLock<HashMap<(u64, u64), Arc<CMatrix>>>,
    hamiltonians: RwLock<HashMap<u64, Arc<Hamiltonian>>>,
    budget: usize,
}

impl Default for PropagatorCache {
    fn default() -> Self {
        Self::with_budget(1 << 25)
    }
}

impl PropagatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// `budget` bounds the number of cached complex elements.
    pub fn with_budget(budget: usize) -> Self {
        PropagatorCache {
            unitaries: RwLock::new(HashMap::new()),
            hamiltonians: RwLock::new(HashMap::new()),
            budget,
        }
    }

    pub fn len(&self) -> usize {
        self.unitaries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hamiltonian(&self, config: &SpinSystemConfig, rf_swap: bool) -> Result<Arc<Hamiltonian>> {
        let id = config_id(config, rf_swap);
        if let Some(h) = self.hamiltonians.read().unwrap().get(&id) {
            return Ok(h.clone());
        }
        let h = Arc::new(build_hamiltonian(config, rf_swap)?);
        let mut map = self.hamiltonians.write().unwrap();
        if map.len() * h.dim() * h.dim() > self.budget {
            map.clear();
        }
        Ok(map.entry(id).or_insert(h).clone())
    }

    pub fn get_or_insert_with(
        &self,
        key: (u64, u64),
        make: impl FnOnce() -> CMatrix,
    ) -> Arc<CMatrix> {
        if let Some(u) = self.unitaries.read().unwrap().get(&key) {
            return u.clone();
        }
        let u = Arc::new(make());
        let size = u.len();
        let mut map = self.unitaries.write().unwrap();
        if (map.len() + 1) * size > self.budget {
            map.clear();
        }
        map.entry(key).or_insert(u).clone()
    }

    pub fn propagator(&self, h: &Hamiltonian, t: f64) -> Propagator {
        let m = self.get_or_insert_with((h.id(), t.to_bits()), || h.propagator(t));
        Propagator {
            matrix: m,
            duration: t,
        }
    }
}

/// `ρ → UρU†` with `U = exp(−iHt)`.
pub fn evolve(state: &DensityState, h: &Hamiltonian, t: f64) -> Result<DensityState> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    check_dim(state, h.dim())?;
    if t == 0.0 {
        return Ok(state.clone());
    }
    Ok(apply_unitary(state, &h.propagator(t)))
}

pub fn apply_unitary(state: &DensityState, u: &CMatrix) -> DensityState {
    let m = u * state.matrix() * u.adjoint();
    state.evolved(m)
}

fn check_dim(state: &DensityState, dim: usize) -> Result<()> {
    if state.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: state.dim(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Sensor,
    Ancilla,
}

impl Target {
    pub fn site(self) -> Site {
        match self {
            Target::Sensor => Site::Sensor,
            Target::Ancilla => Site::Ancilla,
        }
    }
}

/// Rotation axis in the xy plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub x: f64,
    pub y: f64,
}

impl Axis {
    pub const X: Axis = Axis { x: 1.0, y: 0.0 };
    pub const Y: Axis = Axis { x: 0.0, y: 1.0 };
    pub const MINUS_X: Axis = Axis { x: -1.0, y: 0.0 };
    pub const MINUS_Y: Axis = Axis { x: 0.0, y: -1.0 };

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

pub type Rot2 = [[Complex64; 2]; 2];

/// `exp(−i·angle·(n·σ)/2)`.
pub fn rotation(axis: Axis, angle: f64) -> Rot2 {
    let n = axis.norm();
    let (nx, ny) = (axis.x / n, axis.y / n);
    // a rotation by 2π is −1, which leaves density matrices alone
    let a = angle.rem_euclid(2.0 * std::f64::consts::PI);
    let (c, s) = ((a / 2.0).cos(), (a / 2.0).sin());
    let off = Complex64::new(0.0, -s);
    [
        [Complex64::new(c, 0.0), off * Complex64::new(nx, -ny)],
        [off * Complex64::new(nx, ny), Complex64::new(c, 0.0)],
    ]
}

/// `M → R_b M` for a 2×2 `r` acting on bit `bit`.
pub(crate) fn left_local(m: &mut CMatrix, bit: usize, r: &Rot2) {
    let mask = 1usize << bit;
    let (rows, cols) = m.shape();
    for c in 0..cols {
        for i0 in (0..rows).filter(|i| i & mask == 0) {
            let i1 = i0 | mask;
            let (a, b) = (m[(i0, c)], m[(i1, c)]);
            m[(i0, c)] = r[0][0] * a + r[0][1] * b;
            m[(i1, c)] = r[1][0] * a + r[1][1] * b;
        }
    }
}

/// `M → M R_b†`.
pub(crate) fn right_local_adjoint(m: &mut CMatrix, bit: usize, r: &Rot2) {
    let mask = 1usize << bit;
    let (rows, cols) = m.shape();
    for j0 in (0..cols).filter(|j| j & mask == 0) {
        let j1 = j0 | mask;
        for row in 0..rows {
            let (a, b) = (m[(row, j0)], m[(row, j1)]);
            m[(row, j0)] = a * r[0][0].conj() + b * r[0][1].conj();
            m[(row, j1)] = a * r[1][0].conj() + b * r[1][1].conj();
        }
    }
}

/// Ideal instantaneous rotation of the sensor or the ancilla.
pub fn apply_pulse(state: &DensityState, target: Target, axis: Axis, angle: f64) -> Result<DensityState> {
    if !(axis.norm() > 0.0) || !axis.norm().is_finite() {
        return Err(Error::invalid("axis", "must be a nonzero finite vector"));
    }
    if !angle.is_finite() {
        return Err(Error::invalid("angle", "must be finite"));
    }
    let r = rotation(axis, angle);
    let bit = target.site().bit(state.n_samples());
    let mut m = state.matrix().clone();
    left_local(&mut m, bit, &r);
    right_local_adjoint(&mut m, bit, &r);
    Ok(state.evolved(m))
}

/// `exp(−γt)`, treating `0·∞` as 0.
pub fn survival(rate: f64, t: f64) -> f64 {
    if rate == 0.0 || t == 0.0 {
        1.0
    } else {
        (-rate * t).exp()
    }
}

/// `ρ → p·ρ + (1 − p)·(𝟙/2)_S ⊗ Tr_S ρ`.
pub fn depolarize(state: &DensityState, p: f64) -> DensityState {
    if p == 1.0 {
        return state.clone();
    }
    let d = state.dim();
    let h = d / 2;
    let rho = state.matrix();
    let pc = Complex64::new(p, 0.0);
    let mut out = rho * pc;
    let q = Complex64::new(0.5 * (1.0 - p), 0.0);
    for i in 0..h {
        for j in 0..h {
            let mixed = (rho[(i, j)] + rho[(i + h, j + h)]) * q;
            out[(i, j)] += mixed;
            out[(i + h, j + h)] += mixed;
        }
    }
    state.evolved(out)
}

/// Sensor depolarization over time `t` at rate `gamma_s`.
pub fn apply_depolarizing(state: &DensityState, gamma_s: f64, t: f64) -> Result<DensityState> {
    if !(gamma_s >= 0.0) || !(t >= 0.0) {
        return Err(Error::invalid("gamma_s/t", "rate and time must be >= 0"));
    }
    Ok(depolarize(state, survival(gamma_s, t)))
}

/// Reset the sensor to its first level and dephase the ancilla by `factor`.
pub fn reset_sensor(state: &DensityState, factor: f64) -> DensityState {
    let d = state.dim();
    let h = d / 2;
    let n = state.n_samples();
    let amask = 1usize << Site::Ancilla.bit(n);
    let rho = state.matrix();
    let f = Complex64::new(factor, 0.0);
    let mut out = CMatrix::from_element(d, d, ZERO);
    for i in 0..h {
        for j in 0..h {
            let mut v = rho[(i, j)] + rho[(i + h, j + h)];
            if (i & amask) != (j & amask) {
                v *= f;
            }
            out[(i, j)] = v;
        }
    }
    state.evolved(out)
}

pub fn reinitialize_sensor(state: &DensityState, noise: &NoiseModel) -> DensityState {
    reset_sensor(state, survival(noise.gamma_n, noise.reinit_duration))
}

/// Body units after which the sensor is reinitialized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReinitSchedule {
    #[default]
    Never,
    /// After every `k`-th unit.
    Every(usize),
    /// After the listed (1-based) units.
    At(Vec<usize>),
}

impl ReinitSchedule {
    /// Whether a reinit follows unit `unit` (1-based) of `total`; never after the last.
    pub fn fires_after(&self, unit: usize, total: usize) -> bool {
        if unit >= total {
            return false;
        }
        match self {
            ReinitSchedule::Never => false,
            ReinitSchedule::Every(k) => *k > 0 && unit % k == 0,
            ReinitSchedule::At(list) => list.contains(&unit),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ReinitSchedule::Never => "none".into(),
            ReinitSchedule::Every(1) => "every unit".into(),
            ReinitSchedule::Every(k) => format!("every {k} units"),
            ReinitSchedule::At(list) => format!("at units {list:?}"),
        }
    }
}

/// When accumulated sensor relaxation is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationGranularity {
    /// After every delay and ancilla pulse.
    PerDelay,
    /// Once per body unit, before reinits and before readout.
    #[default]
    PerRepetition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub gamma_s: f64,
    pub gamma_n: f64,
    pub reinit_duration: f64,
    pub reinit_schedule: ReinitSchedule,
    /// Sensor idle time per ancilla pulse; `None` means `π/g`.
    pub ancilla_pulse_duration: Option<f64>,
    pub granularity: RelaxationGranularity,
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn relaxing(gamma_s: f64) -> Self {
        NoiseModel {
            gamma_s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |field: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")))
            }
        };
        nonneg("noise.gamma_s", self.gamma_s)?;
        nonneg("noise.gamma_n", self.gamma_n)?;
        nonneg("noise.reinit_duration", self.reinit_duration)?;
        if let Some(t) = self.ancilla_pulse_duration {
            nonneg("noise.ancilla_pulse_duration", t)?;
        }
        if self.reinit_schedule == ReinitSchedule::Every(0) {
            return Err(Error::invalid("noise.reinit_schedule", "period must be >= 1"));
        }
        Ok(())
    }

    pub fn ancilla_pulse_time(&self, g: f64) -> f64 {
        self.ancilla_pulse_duration
            .unwrap_or(std::f64::consts::PI / g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{initial_state, Coupling, QubitPrep, SamplePrep, SensorConvention};
    use std::f64::consts::PI;

    fn cfg() -> SpinSystemConfig {
        SpinSystemConfig::single(0.1, 1.0, 0.05, PI / 4.0)
    }

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn decoupled_sample_at_zero_coupling() {
        let mut c = cfg();
        c.couplings[0].j = 0.0;
        let h = build_hamiltonian(&c, false).unwrap();
        // no element connects different sample states
        let m = h.matrix();
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert_eq!(m[(i, j)], ZERO);
                }
            }
        }
        // sample-up minus sample-down splitting is ω_L in every sector
        for s in 0..4 {
            let up = m[(2 * s, 2 * s)].re;
            let dn = m[(2 * s + 1, 2 * s + 1)].re;
            assert!((up - dn - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn rf_swap_is_an_involution() {
        let (a, b) = coupling_components(0.3, true);
        let (c, d) = (b, a);
        assert_eq!((c, d), coupling_components(0.3, false));
        let h0 = build_hamiltonian(&cfg(), false).unwrap();
        let h1 = build_hamiltonian(&cfg(), true).unwrap();
        assert_ne!(h0.matrix(), h1.matrix());
        assert_ne!(h0.id(), h1.id());
    }

    #[test]
    fn hamiltonian_commutes_with_sensor_z() {
        let mut c = cfg();
        c.couplings = vec![Coupling::new(0.2, 1.0), Coupling::new(0.1, 2.5)];
        let h = build_hamiltonian(&c, false).unwrap();
        assert!(h.sensor_commutator_norm() < 1e-12);
        let herm = max_abs(&(h.matrix() - h.matrix().adjoint()));
        assert!(herm < 1e-12);
    }

    #[test]
    fn block_spectrum_matches_dense_diagonalization() {
        let c = SpinSystemConfig::single(0.0, 80.0, 1.0, PI / 4.0)
            .with_convention(SensorConvention::PauliHalf);
        let h = build_hamiltonian(&c, false).unwrap();
        let mut dense: Vec<f64> = h.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let blocks = h.eigenvalues();
        for (a, b) in dense.iter().zip(&blocks) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_time_is_exact_identity() {
        let s = initial_state(&cfg(), QubitPrep::XPlus, QubitPrep::XPlus, SamplePrep::XPlus).unwrap();
        let h = build_hamiltonian(&cfg(), false).unwrap();
        assert_eq!(evolve(&s, &h, 0.0).unwrap(), s);
    }

    #[test]
    fn propagators_compose_and_are_unitary() {
        let h = build_hamiltonian(&cfg(), false).unwrap();
        let p = Propagator::new(&h, 3.7);
        assert!(p.unitarity_error() < 1e-10);
        let u12 = h.propagator(1.3 + 2.4);
        let u = h.propagator(2.4) * h.propagator(1.3);
        assert!(max_abs(&(u12 - u)) < 1e-10);
    }

    #[test]
    fn two_pi_pulse_leaves_state_unchanged() {
        let s = initial_state(&cfg(), QubitPrep::XPlus, QubitPrep::XPlus, SamplePrep::MaxMixed).unwrap();
        let t = apply_pulse(&s, Target::Sensor, Axis::X, 2.0 * PI).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn pi_pulse_flips_sensor_population() {
        let s = initial_state(&cfg(), QubitPrep::Z0, QubitPrep::Z0, SamplePrep::MaxMixed).unwrap();
        let t = apply_pulse(&s, Target::Sensor, Axis::X, PI).unwrap();
        let upper: f64 = (0..4).map(|i| t.matrix()[(i, i)].re).sum();
        let lower: f64 = (4..8).map(|i| t.matrix()[(i, i)].re).sum();
        assert!(upper.abs() < 1e-15);
        assert!((lower - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_half_pulses_equal_one_pi_pulse() {
        let s = initial_state(&cfg(), QubitPrep::XPlus, QubitPrep::Z0, SamplePrep::XPlus).unwrap();
        let a = apply_pulse(&s, Target::Ancilla, Axis::X, PI / 2.0).unwrap();
        let a = apply_pulse(&a, Target::Ancilla, Axis::X, PI / 2.0).unwrap();
        let b = apply_pulse(&s, Target::Ancilla, Axis::X, PI).unwrap();
        assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-12);
    }

    #[test]
    fn depolarizing_limits() {
        let s = initial_state(&cfg(), QubitPrep::XPlus, QubitPrep::XPlus, SamplePrep::Z0).unwrap();
        assert_eq!(apply_depolarizing(&s, 0.0, 5.0).unwrap(), s);
        let inf = apply_depolarizing(&s, 1.0, f64::INFINITY).unwrap();
        let sx = crate::spin::expectation(&inf, crate::spin::Observable::SX).unwrap();
        assert_eq!(sx.re, 0.0);
        assert!(max_abs(&(inf.trace_out_sensor() - s.trace_out_sensor())) < 1e-15);
        let p = apply_depolarizing(&s, 1.0, (1000.0f64).ln()).unwrap();
        let sx = crate::spin::expectation(&p, crate::spin::Observable::SX).unwrap().re;
        assert!((sx - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn reset_with_dephasing_scales_ancilla_coherence() {
        let s = initial_state(&cfg(), QubitPrep::XPlus, QubitPrep::XPlus, SamplePrep::MaxMixed).unwrap();
        let noise = NoiseModel {
            gamma_n: (100.0f64).ln() / PI,
            reinit_duration: PI,
            ..NoiseModel::default()
        };
        let r = reinitialize_sensor(&s, &noise);
        let c = crate::spin::expectation(&r, crate::spin::Observable::CoherenceF).unwrap();
        assert!((c.norm() - 1e-2).abs() < 1e-14);
        let sz0: f64 = (0..4).map(|i| r.matrix()[(i, i)].re).sum();
        assert!((sz0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reset_of_entangled_pair_gives_product() {
        // (|00⟩ + |11⟩)/√2 on sensor ⊗ ancilla, sample up
        let c = cfg();
        let mut m = CMatrix::zeros(8, 8);
        let h = Complex64::new(0.5, 0.0);
        for &i in &[0usize, 6] {
            for &j in &[0usize, 6] {
                m[(i, j)] = h;
            }
        }
        let s = DensityState::from_matrix(m, 1).unwrap();
        let noise = NoiseModel {
            gamma_n: 1.0,
            reinit_duration: 0.5,
            ..NoiseModel::default()
        };
        let r = reinitialize_sensor(&s, &noise);
        let mut want = CMatrix::zeros(8, 8);
        want[(0, 0)] = h;
        want[(2, 2)] = h;
        assert!(max_abs(&(r.matrix() - want)) < 1e-15);
        let _ = c;
    }

    #[test]
    fn cache_returns_identical_unitaries() {
        let cache = PropagatorCache::new();
        let h = cache.hamiltonian(&cfg(), false).unwrap();
        let a = cache.propagator(&h, 1.5);
        let b = cache.propagator(&h, 1.5);
        assert!(Arc::ptr_eq(&a.matrix, &b.matrix));
        assert_eq!(*a.matrix, h.propagator(1.5));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn schedules() {
        let every = ReinitSchedule::Every(5);
        assert!(every.fires_after(5, 20));
        assert!(!every.fires_after(20, 20));
        assert!(!every.fires_after(4, 20));
        assert!(!ReinitSchedule::Never.fires_after(1, 3));
        assert!(ReinitSchedule::At(vec![2]).fires_after(2, 3));
    }
}
