//! Register layout, operators and density-matrix states.
//!
//! The register is `sensor ⊗ ancilla ⊗ sample_1 ⊗ … ⊗ sample_N` in the z basis.
//! Qubit `q` (0 = sensor, 1 = ancilla, 1 + i = sample i) lives at bit
//! `N + 1 - q` of a basis index, so the sensor is the most significant bit.
//! A cleared bit is the first level: spin up for ancilla and samples, the
//! `m_S = 0` level (or `+½`) for the sensor.
//!
//! Observables are Pauli-normalized: eigenvalues ±1 on every two-level
//! subsystem.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const MAX_SAMPLE_SPINS: usize = 10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Eigenvalues of the sensor's `S_z` on its two-level subspace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SensorConvention {
    /// `S_z ∈ {0, −1}`.
    #[serde(rename = "projection_0_m1")]
    ProjectionZeroMinusOne,
    /// `S_z ∈ {+½, −½}`.
    PauliHalf,
    /// `S_z ∈ {0, +1}`.
    #[default]
    #[serde(rename = "projection_0_p1")]
    ProjectionZeroPlusOne,
}

impl SensorConvention {
    pub const ALL: [SensorConvention; 3] = [
        SensorConvention::ProjectionZeroMinusOne,
        SensorConvention::PauliHalf,
        SensorConvention::ProjectionZeroPlusOne,
    ];

    /// `S_z` on the sensor level with bit 0 and bit 1 respectively.
    pub fn levels(self) -> (f64, f64) {
        match self {
            SensorConvention::ProjectionZeroMinusOne => (0.0, -1.0),
            SensorConvention::PauliHalf => (0.5, -0.5),
            SensorConvention::ProjectionZeroPlusOne => (0.0, 1.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SensorConvention::ProjectionZeroMinusOne => "projection_0_m1",
            SensorConvention::PauliHalf => "pauli_half",
            SensorConvention::ProjectionZeroPlusOne => "projection_0_p1",
        }
    }
}

impl fmt::Display for SensorConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Dipolar coupling of one sample spin to the sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub j: f64,
    pub theta: f64,
}

impl Coupling {
    pub fn new(j: f64, theta: f64) -> Self {
        Coupling { j, theta }
    }
}

fn default_time_unit() -> f64 {
    1.0
}

/// Physical parameters of the sensor–ancilla–sample register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSystemConfig {
    pub omega_l: f64,
    pub g: f64,
    pub couplings: Vec<Coupling>,
    #[serde(default)]
    pub sensor_convention: SensorConvention,
    #[serde(default = "default_time_unit")]
    pub time_unit: f64,
}

impl SpinSystemConfig {
    /// Single sample spin, default convention, unit time scale.
    pub fn single(omega_l: f64, g: f64, j: f64, theta: f64) -> Self {
        SpinSystemConfig {
            omega_l,
            g,
            couplings: vec![Coupling::new(j, theta)],
            sensor_convention: SensorConvention::default(),
            time_unit: 1.0,
        }
    }

    pub fn with_convention(mut self, convention: SensorConvention) -> Self {
        self.sensor_convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |field: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be finite"))
            }
        };
        finite("omega_l", self.omega_l)?;
        finite("g", self.g)?;
        finite("time_unit", self.time_unit)?;
        if self.g <= 0.0 {
            return Err(Error::invalid("g", format!("must be > 0, got {}", self.g)));
        }
        if self.omega_l < 0.0 {
            return Err(Error::invalid(
                "omega_l",
                format!("must be >= 0, got {}", self.omega_l),
            ));
        }
        if self.time_unit <= 0.0 {
            return Err(Error::invalid(
                "time_unit",
                format!("must be > 0, got {}", self.time_unit),
            ));
        }
        let n = self.couplings.len();
        if n == 0 {
            return Err(Error::invalid("couplings", "at least one sample spin is required"));
        }
        if n > MAX_SAMPLE_SPINS {
            return Err(Error::DimensionCap {
                n,
                max: MAX_SAMPLE_SPINS,
            });
        }
        for (i, c) in self.couplings.iter().enumerate() {
            let j_field = format!("couplings[{i}].j");
            let t_field = format!("couplings[{i}].theta");
            finite(&j_field, c.j)?;
            finite(&t_field, c.theta)?;
            if c.j < 0.0 {
                return Err(Error::invalid(j_field, format!("must be >= 0, got {}", c.j)));
            }
            if !(0.0..=std::f64::consts::PI).contains(&c.theta) {
                return Err(Error::invalid(
                    t_field,
                    format!("theta must lie in [0, pi], got {}", c.theta),
                ));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.couplings.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.couplings.len() + 2
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    pub fn max_j(&self) -> f64 {
        self.couplings.iter().map(|c| c.j).fold(0.0, f64::max)
    }
}

/// One of the register's two-level subsystems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Site {
    Sensor,
    Ancilla,
    /// 1-based sample index.
    Sample(usize),
}

impl Site {
    /// Bit position of the site in a basis index for a register of `n_samples`.
    pub fn bit(self, n_samples: usize) -> usize {
        let q = match self {
            Site::Sensor => 0,
            Site::Ancilla => 1,
            Site::Sample(i) => 1 + i,
        };
        n_samples + 1 - q
    }
}

/// Pauli-normalized observables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Observable {
    SX,
    SY,
    FX,
    FY,
    /// `σ_x` of sample spin `i` (1-based).
    IX(usize),
    /// `σ_z` of sample spin `i` (1-based).
    IZ(usize),
    /// `⟨σ_x⟩ + i⟨σ_y⟩` of the sensor.
    CoherenceS,
    /// `⟨σ_x⟩ + i⟨σ_y⟩` of the ancilla.
    CoherenceF,
}

impl Observable {
    pub fn is_complex(self) -> bool {
        matches!(self, Observable::CoherenceS | Observable::CoherenceF)
    }

    fn check_index(self, n_samples: usize) -> Result<()> {
        if let Observable::IX(i) | Observable::IZ(i) = self {
            if i == 0 || i > n_samples {
                return Err(Error::SampleIndex {
                    index: i,
                    n: n_samples,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::SX => f.write_str("S_X"),
            Observable::SY => f.write_str("S_Y"),
            Observable::FX => f.write_str("F_X"),
            Observable::FY => f.write_str("F_Y"),
            Observable::IX(i) => write!(f, "I_X({i})"),
            Observable::IZ(i) => write!(f, "I_Z({i})"),
            Observable::CoherenceS => f.write_str("COHERENCE_S"),
            Observable::CoherenceF => f.write_str("COHERENCE_F"),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let indexed = |prefix: &str| -> Option<usize> {
            t.strip_prefix(prefix)?
                .strip_suffix(')')?
                .trim()
                .parse()
                .ok()
        };
        match t {
            "S_X" => Ok(Observable::SX),
            "S_Y" => Ok(Observable::SY),
            "F_X" => Ok(Observable::FX),
            "F_Y" => Ok(Observable::FY),
            "COHERENCE_S" => Ok(Observable::CoherenceS),
            "COHERENCE_F" => Ok(Observable::CoherenceF),
            _ => {
                if let Some(i) = indexed("I_X(") {
                    Ok(Observable::IX(i))
                } else if let Some(i) = indexed("I_Z(") {
                    Ok(Observable::IZ(i))
                } else {
                    Err(Error::invalid("observable", format!("unknown observable `{s}`")))
                }
            }
        }
    }
}

impl From<Observable> for String {
    fn from(o: Observable) -> String {
        o.to_string()
    }
}

impl TryFrom<String> for Observable {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pauli {
    X,
    Y,
    Z,
}

/// Sparse form of a Pauli operator on one bit: `O[i ^ flip][i] = coeff(i)`.
fn pauli_entry(p: Pauli, mask: usize, col: usize) -> (usize, Complex64) {
    let set = col & mask != 0;
    match p {
        Pauli::X => (col ^ mask, ONE),
        // σ_y |0⟩ = i|1⟩, σ_y |1⟩ = −i|0⟩
        Pauli::Y => (col ^ mask, if set { -I } else { I }),
        Pauli::Z => (col, if set { -ONE } else { ONE }),
    }
}

fn pauli_parts(obs: Observable) -> (Site, Vec<(Pauli, Complex64)>) {
    match obs {
        Observable::SX => (Site::Sensor, vec![(Pauli::X, ONE)]),
        Observable::SY => (Site::Sensor, vec![(Pauli::Y, ONE)]),
        Observable::FX => (Site::Ancilla, vec![(Pauli::X, ONE)]),
        Observable::FY => (Site::Ancilla, vec![(Pauli::Y, ONE)]),
        Observable::IX(i) => (Site::Sample(i), vec![(Pauli::X, ONE)]),
        Observable::IZ(i) => (Site::Sample(i), vec![(Pauli::Z, ONE)]),
        Observable::CoherenceS => (Site::Sensor, vec![(Pauli::X, ONE), (Pauli::Y, I)]),
        Observable::CoherenceF => (Site::Ancilla, vec![(Pauli::X, ONE), (Pauli::Y, I)]),
    }
}

/// Matrix of `obs` in the register layout. Hermitian for the real kinds;
/// the coherence kinds give `σ_x + iσ_y` so that `Tr(ρ·O)` is the coherence.
pub fn build_operator(config: &SpinSystemConfig, obs: Observable) -> Result<CMatrix> {
    config.validate()?;
    let n = config.n_samples();
    obs.check_index(n)?;
    let dim = config.dim();
    let (site, parts) = pauli_parts(obs);
    let mask = 1usize << site.bit(n);
    let mut m = CMatrix::zeros(dim, dim);
    for (p, w) in parts {
        for col in 0..dim {
            let (row, c) = pauli_entry(p, mask, col);
            m[(row, col)] += w * c;
        }
    }
    Ok(m)
}

/// Preparation of the sensor or the ancilla.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitPrep {
    Z0,
    XPlus,
}

/// Preparation of each sample spin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplePrep {
    #[default]
    MaxMixed,
    Z0,
    XPlus,
}

/// Product-state preparation of the whole register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preparation {
    pub sensor: QubitPrep,
    pub ancilla: QubitPrep,
    #[serde(default)]
    pub sample: SamplePrep,
}

impl Preparation {
    pub fn new(sensor: QubitPrep, ancilla: QubitPrep, sample: SamplePrep) -> Self {
        Preparation {
            sensor,
            ancilla,
            sample,
        }
    }
}

fn qubit_rho(prep: QubitPrep) -> CMatrix {
    let h = Complex64::new(0.5, 0.0);
    match prep {
        QubitPrep::Z0 => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]),
        QubitPrep::XPlus => CMatrix::from_element(2, 2, h),
    }
}

fn sample_rho(prep: SamplePrep) -> CMatrix {
    match prep {
        SamplePrep::MaxMixed => CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0),
        SamplePrep::Z0 => qubit_rho(QubitPrep::Z0),
        SamplePrep::XPlus => qubit_rho(QubitPrep::XPlus),
    }
}

/// Density matrix of the register.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    matrix: CMatrix,
    n_samples: usize,
}

impl DensityState {
    /// Wraps a matrix after checking every state invariant.
    pub fn from_matrix(matrix: CMatrix, n_samples: usize) -> Result<Self> {
        let s = Self::from_matrix_unchecked(matrix, n_samples)?;
        s.check_invariants()?;
        Ok(s)
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix, n_samples: usize) -> Result<Self> {
        if n_samples == 0 || n_samples > MAX_SAMPLE_SPINS {
            return Err(Error::DimensionCap {
                n: n_samples,
                max: MAX_SAMPLE_SPINS,
            });
        }
        let dim = 1usize << (n_samples + 2);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(DensityState { matrix, n_samples })
    }

    /// Replaces the matrix of a state produced by a channel or unitary.
    /// Debug builds check hermiticity and trace on every call.
    pub(crate) fn evolved(&self, matrix: CMatrix) -> Self {
        let s = DensityState {
            matrix,
            n_samples: self.n_samples,
        };
        #[cfg(debug_assertions)]
        s.debug_check();
        s
    }

    #[cfg(debug_assertions)]
    fn debug_check(&self) {
        let h = self.hermiticity_error();
        let t = (self.trace() - ONE).norm();
        // loose bounds: long sequences accumulate rounding
        assert!(h < 1e-9, "state lost hermiticity: {h:e}");
        assert!(t < 1e-9, "state lost normalization: {t:e}");
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().min()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > HERMITIAN_TOL {
            return Err(Error::invalid("state", format!("not Hermitian (deviation {h:e})")));
        }
        let t = (self.trace() - ONE).norm();
        if t > TRACE_TOL {
            return Err(Error::invalid("state", format!("trace differs from 1 by {t:e}")));
        }
        let m = self.min_eigenvalue();
        if m < -PSD_TOL {
            return Err(Error::invalid("state", format!("negative eigenvalue {m:e}")));
        }
        Ok(())
    }

    /// `Tr_S ρ` on ancilla ⊗ samples.
    pub fn trace_out_sensor(&self) -> CMatrix {
        let h = self.dim() / 2;
        let a = self.matrix.view((0, 0), (h, h));
        let d = self.matrix.view((h, h), (h, h));
        a + d
    }
}

/// Product state with each factor as requested.
pub fn initial_state(
    config: &SpinSystemConfig,
    sensor: QubitPrep,
    ancilla: QubitPrep,
    sample: SamplePrep,
) -> Result<DensityState> {
    config.validate()?;
    let mut m = qubit_rho(sensor).kronecker(&qubit_rho(ancilla));
    let s = sample_rho(sample);
    for _ in 0..config.n_samples() {
        m = m.kronecker(&s);
    }
    DensityState::from_matrix_unchecked(m, config.n_samples())
}

pub fn prepare(config: &SpinSystemConfig, prep: Preparation) -> Result<DensityState> {
    initial_state(config, prep.sensor, prep.ancilla, prep.sample)
}

/// `Tr(ρ·O)`. Real kinds come back with a zero imaginary part.
pub fn expectation(state: &DensityState, obs: Observable) -> Result<Complex64> {
    let n = state.n_samples();
    obs.check_index(n)?;
    let dim = state.dim();
    let (site, parts) = pauli_parts(obs);
    let mask = 1usize << site.bit(n);
    let rho = state.matrix();
    let mut acc = ZERO;
    for (p, w) in parts {
        // Tr(ρO) = Σ_col Σ_row ρ[col][row]·O[row][col]
        let mut s = ZERO;
        for col in 0..dim {
            let (row, c) = pauli_entry(p, mask, col);
            s += rho[(col, row)] * c;
        }
        acc += w * s;
    }
    if obs.is_complex() {
        Ok(acc)
    } else {
        debug_assert!(acc.im.abs() < 1e-10, "imaginary part {} for {obs}", acc.im);
        Ok(Complex64::new(acc.re, 0.0))
    }
}

/// `Tr(ρ·A)` for an arbitrary operator of matching dimension.
pub fn expectation_of(state: &DensityState, op: &CMatrix) -> Result<Complex64> {
    if op.nrows() != state.dim() || op.ncols() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: op.nrows(),
        });
    }
    let rho = state.matrix();
    let mut s = ZERO;
    for i in 0..state.dim() {
        for j in 0..state.dim() {
            s += rho[(i, j)] * op[(j, i)];
        }
    }
    Ok(s)
}
