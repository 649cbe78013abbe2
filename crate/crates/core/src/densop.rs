//! Dense mixed-state engine for small qubit registers.
//!
//! Registers hold at most [`MAX_QUBITS`] qubits. Qubit `0` of a register is the
//! most significant bit of the computational-basis index. Every operation
//! returns a new [`DensityMatrix`]; values are never mutated in place.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const MAX_QUBITS: usize = 8;

/// Tolerance for unitarity and channel completeness checks.
pub const OP_TOL: f64 = 1e-10;
/// Probabilities below this are treated as impossible heralds.
pub const NULL_PROB: f64 = 1e-14;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensopError {
    #[error("label {0} appears twice in the register")]
    LabelCollision(QubitLabel),
    #[error("label {0} is not part of the register")]
    UnknownLabel(QubitLabel),
    #[error("target {0} listed more than once")]
    DuplicateTarget(QubitLabel),
    #[error("register of {0} qubits exceeds the {MAX_QUBITS}-qubit cap")]
    RegisterTooLarge(usize),
    #[error("operator is {rows}x{cols}, expected {expected}x{expected}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("operator is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("Kraus set is not complete (deviation {0:.3e}); mark it heralded if trace loss is intended")]
    IncompleteChannel(f64),
    #[error("operator is not a contraction: M^dag M exceeds identity by {0:.3e}")]
    NotContraction(f64),
    #[error("Pauli string has {got} letters, register has {expected} qubits")]
    PauliLength { got: usize, expected: usize },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("cannot parse Pauli string {0:?}")]
    PauliParse(String),
}

/// What a register slot physically is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QubitLabel {
    /// The emitter spin during clock cycle `t`.
    Spin(u32),
    /// Occupation (0 or 1 photon) of one time-bin mode emitted in cycle `cycle`.
    /// Only used while a resource state is being generated.
    Mode { cycle: u32, bin: TimeBin },
    /// The time-bin photonic qubit of cycle `t`: `|0> = early`, `|1> = late`.
    Photon(u32),
}

impl fmt::Display for QubitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QubitLabel::Spin(t) => write!(f, "spin@{t}"),
            QubitLabel::Mode { cycle, bin } => write!(f, "mode@{cycle}.{bin}"),
            QubitLabel::Photon(t) => write!(f, "photon@{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeBin {
    Early,
    Late,
}

impl TimeBin {
    pub fn index(self) -> usize {
        match self {
            TimeBin::Early => 0,
            TimeBin::Late => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            TimeBin::Early => 'e',
            TimeBin::Late => 'l',
        }
    }
}

impl fmt::Display for TimeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => CMatrix::from_row_slice(2, 2, &[l, o, o, l]),
            Pauli::X => CMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        }
    }

    fn has_x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    fn has_z(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Signed tensor product of single-qubit Paulis, e.g. `-ZZ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    pub letters: Vec<Pauli>,
    pub negative: bool,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>, negative: bool) -> Self {
        Self { letters, negative }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn sign(&self) -> f64 {
        if self.negative {
            -1.0
        } else {
            1.0
        }
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|p| **p != Pauli::I).count()
    }

    pub fn matrix(&self) -> CMatrix {
        let mut m = CMatrix::from_element(1, 1, C64::new(self.sign(), 0.0));
        for p in &self.letters {
            m = m.kronecker(&p.matrix());
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", if self.negative { '-' } else { '+' })?;
        for p in &self.letters {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = DensopError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (negative, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        if body.is_empty() {
            return Err(DensopError::PauliParse(s.to_string()));
        }
        let letters = body
            .chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                _ => Err(DensopError::PauliParse(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { letters, negative })
    }
}

/// Kraus operators acting on a sub-register.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    ops: Vec<CMatrix>,
    heralded: bool,
}

impl KrausChannel {
    /// A trace-preserving channel. Fails unless `sum K^dag K = I`.
    pub fn new(ops: Vec<CMatrix>) -> Result<Self, DensopError> {
        let dev = completeness_deviation(&ops)?;
        if dev > OP_TOL {
            return Err(DensopError::IncompleteChannel(dev));
        }
        Ok(Self {
            ops,
            heralded: false,
        })
    }

    /// A trace-decreasing channel, `sum K^dag K <= I`.
    pub fn heralded(ops: Vec<CMatrix>) -> Result<Self, DensopError> {
        let dim = check_square_set(&ops)?;
        let mut gap = CMatrix::identity(dim, dim);
        for k in &ops {
            gap -= k.adjoint() * k;
        }
        let min = min_hermitian_eigenvalue(&gap);
        if min < -OP_TOL {
            return Err(DensopError::NotContraction(-min));
        }
        Ok(Self {
            ops,
            heralded: true,
        })
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn is_heralded(&self) -> bool {
        self.heralded
    }

    pub fn phase_flip(p: f64) -> Self {
        Self::pauli_mixture(Pauli::Z, p)
    }

    pub fn bit_flip(p: f64) -> Self {
        Self::pauli_mixture(Pauli::X, p)
    }

    fn pauli_mixture(pauli: Pauli, p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self {
            ops: vec![
                Pauli::I.matrix() * C64::new((1.0 - p).sqrt(), 0.0),
                pauli.matrix() * C64::new(p.sqrt(), 0.0),
            ],
            heralded: false,
        }
    }

    pub fn amplitude_damping(gamma: f64) -> Self {
        let g = gamma.clamp(0.0, 1.0);
        let o = C64::new(0.0, 0.0);
        let k0 = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), o, o, C64::new((1.0 - g).sqrt(), 0.0)],
        );
        let k1 = CMatrix::from_row_slice(2, 2, &[o, C64::new(g.sqrt(), 0.0), o, o]);
        Self {
            ops: vec![k0, k1],
            heralded: false,
        }
    }
}

fn check_square_set(ops: &[CMatrix]) -> Result<usize, DensopError> {
    let Some(first) = ops.first() else {
        return Err(DensopError::IncompleteChannel(1.0));
    };
    let dim = first.nrows();
    for k in ops {
        if k.nrows() != dim || k.ncols() != dim {
            return Err(DensopError::DimensionMismatch {
                rows: k.nrows(),
                cols: k.ncols(),
                expected: dim,
            });
        }
    }
    Ok(dim)
}

fn completeness_deviation(ops: &[CMatrix]) -> Result<f64, DensopError> {
    let dim = check_square_set(ops)?;
    let mut acc = CMatrix::zeros(dim, dim);
    for k in ops {
        acc += k.adjoint() * k;
    }
    Ok(max_abs(&(acc - CMatrix::identity(dim, dim))))
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Result of a heralded measurement branch.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Normalized post-measurement state, `None` for a null outcome.
    pub state: Option<DensityMatrix>,
    pub probability: f64,
}

impl Projection {
    pub fn is_null(&self) -> bool {
        self.state.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    labels: Vec<QubitLabel>,
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(labels: Vec<QubitLabel>, mat: CMatrix) -> Result<Self, DensopError> {
        check_labels(&labels)?;
        let dim = 1usize << labels.len();
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(DensopError::DimensionMismatch {
                rows: mat.nrows(),
                cols: mat.ncols(),
                expected: dim,
            });
        }
        let herm = max_abs(&(&mat - mat.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(DensopError::InvalidState(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(DensopError::InvalidState(format!("trace is {tr}")));
        }
        let min = min_hermitian_eigenvalue(&mat);
        if min < -PSD_TOL {
            return Err(DensopError::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { labels, mat })
    }

    /// Builds `|psi><psi|` after normalizing `amplitudes`.
    pub fn from_pure(labels: Vec<QubitLabel>, amplitudes: &[C64]) -> Result<Self, DensopError> {
        check_labels(&labels)?;
        let dim = 1usize << labels.len();
        if amplitudes.len() != dim {
            return Err(DensopError::DimensionMismatch {
                rows: amplitudes.len(),
                cols: 1,
                expected: dim,
            });
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < NULL_PROB {
            return Err(DensopError::InvalidState("zero state vector".into()));
        }
        let v = nalgebra::DVector::from_iterator(dim, amplitudes.iter().map(|a| a / norm));
        let mat = &v * v.adjoint();
        Ok(Self { labels, mat })
    }

    pub fn basis(labels: Vec<QubitLabel>, index: usize) -> Result<Self, DensopError> {
        check_labels(&labels)?;
        let dim = 1usize << labels.len();
        if index >= dim {
            return Err(DensopError::InvalidState(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut mat = CMatrix::zeros(dim, dim);
        mat[(index, index)] = C64::new(1.0, 0.0);
        Ok(Self { labels, mat })
    }

    pub fn maximally_mixed(labels: Vec<QubitLabel>) -> Result<Self, DensopError> {
        check_labels(&labels)?;
        let dim = 1usize << labels.len();
        let mat = CMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
        Ok(Self { labels, mat })
    }

    /// Normalizes a positive semidefinite operator. Returns `None` when its
    /// trace is below [`NULL_PROB`].
    pub(crate) fn from_unnormalized(labels: Vec<QubitLabel>, mat: CMatrix) -> (Option<Self>, f64) {
        let p = mat.trace().re;
        if p < NULL_PROB {
            return (None, p.max(0.0));
        }
        let mat = hermitize(&(mat / C64::new(p, 0.0)));
        (Some(Self { labels, mat }), p)
    }

    pub fn labels(&self) -> &[QubitLabel] {
        &self.labels
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn n_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn position(&self, label: QubitLabel) -> Result<usize, DensopError> {
        self.labels
            .iter()
            .position(|l| *l == label)
            .ok_or(DensopError::UnknownLabel(label))
    }

    fn positions(&self, targets: &[QubitLabel]) -> Result<Vec<usize>, DensopError> {
        let mut out = Vec::with_capacity(targets.len());
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].contains(t) {
                return Err(DensopError::DuplicateTarget(*t));
            }
            out.push(self.position(*t)?);
        }
        Ok(out)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_hermitian_eigenvalue(&self.mat)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix, DensopError> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        check_labels(&labels)?;
        Ok(Self {
            labels,
            mat: self.mat.kronecker(&other.mat),
        })
    }

    pub fn apply_unitary(
        &self,
        u: &CMatrix,
        targets: &[QubitLabel],
    ) -> Result<DensityMatrix, DensopError> {
        let pos = self.positions(targets)?;
        let local = 1usize << pos.len();
        if u.nrows() != local || u.ncols() != local {
            return Err(DensopError::DimensionMismatch {
                rows: u.nrows(),
                cols: u.ncols(),
                expected: local,
            });
        }
        let dev = max_abs(&(u.adjoint() * u - CMatrix::identity(local, local)));
        if dev > OP_TOL {
            return Err(DensopError::NotUnitary(dev));
        }
        let full = embed(u, &pos, self.n_qubits());
        Ok(Self {
            labels: self.labels.clone(),
            mat: &full * &self.mat * full.adjoint(),
        })
    }

    pub fn apply_channel(
        &self,
        ch: &KrausChannel,
        targets: &[QubitLabel],
    ) -> Result<DensityMatrix, DensopError> {
        if !ch.heralded {
            let dev = completeness_deviation(&ch.ops)?;
            if dev > OP_TOL {
                return Err(DensopError::IncompleteChannel(dev));
            }
        }
        let pos = self.positions(targets)?;
        let local = 1usize << pos.len();
        let dim = self.dim();
        let mut acc = CMatrix::zeros(dim, dim);
        for k in &ch.ops {
            if k.nrows() != local || k.ncols() != local {
                return Err(DensopError::DimensionMismatch {
                    rows: k.nrows(),
                    cols: k.ncols(),
                    expected: local,
                });
            }
            let full = embed(k, &pos, self.n_qubits());
            acc += &full * &self.mat * full.adjoint();
        }
        Ok(Self {
            labels: self.labels.clone(),
            mat: hermitize(&acc),
        })
    }

    pub fn expect(&self, p: &PauliString) -> Result<f64, DensopError> {
        if p.len() != self.n_qubits() {
            return Err(DensopError::PauliLength {
                got: p.len(),
                expected: self.n_qubits(),
            });
        }
        let n = self.n_qubits();
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        let mut n_y = 0u32;
        for (q, letter) in p.letters.iter().enumerate() {
            let bit = 1usize << (n - 1 - q);
            if letter.has_x() {
                xmask |= bit;
            }
            if letter.has_z() {
                zmask |= bit;
            }
            if *letter == Pauli::Y {
                n_y += 1;
            }
        }
        // P|k> = i^{#Y} (-1)^{|k & zmask|} |k ^ xmask>
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..self.dim() {
            let j = k ^ xmask;
            let s = if (k & zmask).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            acc += self.mat[(k, j)] * s;
        }
        let acc = acc * C64::i().powu(n_y) * p.sign();
        Ok(acc.re)
    }

    /// Reduced state on `keep`, in the order given.
    pub fn partial_trace(&self, keep: &[QubitLabel]) -> Result<DensityMatrix, DensopError> {
        let keep_pos = self.positions(keep)?;
        let n = self.n_qubits();
        let traced: Vec<usize> = (0..n).filter(|q| !keep_pos.contains(q)).collect();
        let kd = 1usize << keep_pos.len();
        let td = 1usize << traced.len();
        let mut out = CMatrix::zeros(kd, kd);
        for i in 0..kd {
            for j in 0..kd {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..td {
                    let a = compose(i, &keep_pos, t, &traced, n);
                    let b = compose(j, &keep_pos, t, &traced, n);
                    acc += self.mat[(a, b)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Self {
            labels: keep.to_vec(),
            mat: out,
        })
    }

    /// Applies `M` on `targets` and renormalizes: `(M rho M^dag / p, p)`.
    pub fn project(&self, m: &CMatrix, targets: &[QubitLabel]) -> Result<Projection, DensopError> {
        let pos = self.positions(targets)?;
        let local = 1usize << pos.len();
        if m.nrows() != local || m.ncols() != local {
            return Err(DensopError::DimensionMismatch {
                rows: m.nrows(),
                cols: m.ncols(),
                expected: local,
            });
        }
        let excess = -min_hermitian_eigenvalue(&(CMatrix::identity(local, local) - m.adjoint() * m));
        if excess > OP_TOL {
            return Err(DensopError::NotContraction(excess));
        }
        let full = embed(m, &pos, self.n_qubits());
        let un = &full * &self.mat * full.adjoint();
        let (state, probability) = Self::from_unnormalized(self.labels.clone(), un);
        Ok(Projection { state, probability })
    }

    /// Measures `targets` with POVM element `effect` and discards them:
    /// returns `Tr_targets[(E (x) I) rho] / p` on the remaining qubits.
    pub fn herald(&self, effect: &CMatrix, targets: &[QubitLabel]) -> Result<Projection, DensopError> {
        let (mat, rest) = self.herald_unnormalized(effect, targets)?;
        let (state, probability) = Self::from_unnormalized(rest, mat);
        Ok(Projection { state, probability })
    }

    pub(crate) fn herald_unnormalized(
        &self,
        effect: &CMatrix,
        targets: &[QubitLabel],
    ) -> Result<(CMatrix, Vec<QubitLabel>), DensopError> {
        let tpos = self.positions(targets)?;
        let td = 1usize << tpos.len();
        if effect.nrows() != td || effect.ncols() != td {
            return Err(DensopError::DimensionMismatch {
                rows: effect.nrows(),
                cols: effect.ncols(),
                expected: td,
            });
        }
        let n = self.n_qubits();
        let rest_pos: Vec<usize> = (0..n).filter(|q| !tpos.contains(q)).collect();
        let rest: Vec<QubitLabel> = rest_pos.iter().map(|&q| self.labels[q]).collect();
        let rd = 1usize << rest_pos.len();
        let mut out = CMatrix::zeros(rd, rd);
        for i in 0..rd {
            for j in 0..rd {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..td {
                    let a = compose(i, &rest_pos, t, &tpos, n);
                    for tp in 0..td {
                        let e = effect[(tp, t)];
                        if e == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let b = compose(j, &rest_pos, tp, &tpos, n);
                        acc += e * self.mat[(a, b)];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok((out, rest))
    }

    /// `<psi| rho |psi>` for a (normalized internally) pure state.
    pub fn fidelity_pure(&self, amplitudes: &[C64]) -> Result<f64, DensopError> {
        if amplitudes.len() != self.dim() {
            return Err(DensopError::DimensionMismatch {
                rows: amplitudes.len(),
                cols: 1,
                expected: self.dim(),
            });
        }
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        let f = (v.adjoint() * &self.mat * &v)[(0, 0)].re / norm2;
        Ok(f)
    }

    /// Half the trace norm of the difference. Registers must share labels.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64, DensopError> {
        if self.labels != other.labels {
            return Err(DensopError::InvalidState(
                "trace distance between different registers".into(),
            ));
        }
        Ok(0.5
            * hermitian_eigenvalues(&(&self.mat - &other.mat))
                .iter()
                .map(|e| e.abs())
                .sum::<f64>())
    }

    /// Reorders the register. `order[k]` is the label placed at position `k`.
    pub fn reorder(&self, order: &[QubitLabel]) -> Result<DensityMatrix, DensopError> {
        if order.len() != self.n_qubits() {
            return Err(DensopError::InvalidState(format!(
                "reorder needs {} labels, got {}",
                self.n_qubits(),
                order.len()
            )));
        }
        self.partial_trace(order)
    }

    pub fn relabel(&self, labels: Vec<QubitLabel>) -> Result<DensityMatrix, DensopError> {
        if labels.len() != self.n_qubits() {
            return Err(DensopError::InvalidState("relabel size mismatch".into()));
        }
        check_labels(&labels)?;
        Ok(Self {
            labels,
            mat: self.mat.clone(),
        })
    }
}

fn check_labels(labels: &[QubitLabel]) -> Result<(), DensopError> {
    if labels.len() > MAX_QUBITS {
        return Err(DensopError::RegisterTooLarge(labels.len()));
    }
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(DensopError::LabelCollision(*l));
        }
    }
    Ok(())
}

fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Full-register index from a sub-index over `a_pos` and one over `b_pos`.
fn compose(a: usize, a_pos: &[usize], b: usize, b_pos: &[usize], n: usize) -> usize {
    let mut idx = 0usize;
    for (k, &q) in a_pos.iter().enumerate() {
        if (a >> (a_pos.len() - 1 - k)) & 1 == 1 {
            idx |= 1 << (n - 1 - q);
        }
    }
    for (k, &q) in b_pos.iter().enumerate() {
        if (b >> (b_pos.len() - 1 - k)) & 1 == 1 {
            idx |= 1 << (n - 1 - q);
        }
    }
    idx
}

fn extract(idx: usize, pos: &[usize], n: usize) -> usize {
    pos.iter()
        .fold(0usize, |acc, &q| (acc << 1) | ((idx >> (n - 1 - q)) & 1))
}

/// Lifts a local operator on `pos` to the full `n`-qubit register.
fn embed(op: &CMatrix, pos: &[usize], n: usize) -> CMatrix {
    let dim = 1usize << n;
    let mut rest_mask = dim - 1;
    for &q in pos {
        rest_mask &= !(1 << (n - 1 - q));
    }
    CMatrix::from_fn(dim, dim, |i, j| {
        if i & rest_mask != j & rest_mask {
            C64::new(0.0, 0.0)
        } else {
            op[(extract(i, pos, n), extract(j, pos, n))]
        }
    })
}

/// Computational-basis ket helper: `ket(&[0, 1])` is `|01>`.
pub fn ket(bits: &[u8]) -> Vec<C64> {
    let n = bits.len();
    let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b as usize & 1));
    let mut v = vec![C64::new(0.0, 0.0); 1 << n];
    v[idx] = C64::new(1.0, 0.0);
    v
}

pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(h, 0.0),
            C64::new(h, 0.0),
            C64::new(h, 0.0),
            C64::new(-h, 0.0),
        ],
    )
}

/// Two-qubit Bell states over `|q0 q1>`.
pub fn bell(kind: Bell) -> Vec<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = 0.0;
    let v = match kind {
        Bell::PhiPlus => [h, z, z, h],
        Bell::PhiMinus => [h, z, z, -h],
        Bell::PsiPlus => [z, h, h, z],
        Bell::PsiMinus => [z, h, -h, z],
    };
    v.iter().map(|x| C64::new(*x, 0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bell {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

/// `|v><v|` for a state vector.
pub fn projector(v: &[C64]) -> CMatrix {
    let v = nalgebra::DVector::from_column_slice(v);
    &v * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t: u32) -> QubitLabel {
        QubitLabel::Spin(t)
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    fn pauli(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn tensor_of_basis_states() {
        let a = DensityMatrix::basis(vec![s(0)], 0).unwrap();
        let b = DensityMatrix::basis(vec![s(1)], 1).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab, DensityMatrix::basis(vec![s(0), s(1)], 0b01).unwrap());
        assert_eq!(ab.labels(), &[s(0), s(1)]);
    }

    #[test]
    fn tensor_of_bell_pairs_and_mixed() {
        let p = DensityMatrix::from_pure(vec![s(0), s(1)], &bell(Bell::PsiMinus)).unwrap();
        let q = DensityMatrix::from_pure(vec![s(2), s(3)], &bell(Bell::PsiMinus)).unwrap();
        let pq = p.tensor(&q).unwrap();
        assert_eq!(pq.dim(), 16);
        close(pq.trace(), 1.0, 1e-12);

        let m0 = DensityMatrix::maximally_mixed(vec![s(0)]).unwrap();
        let m1 = DensityMatrix::maximally_mixed(vec![s(1)]).unwrap();
        let mm = m0.tensor(&m1).unwrap();
        assert_eq!(mm, DensityMatrix::maximally_mixed(vec![s(0), s(1)]).unwrap());
    }

    #[test]
    fn tensor_rejects_label_collision() {
        let a = DensityMatrix::basis(vec![s(0)], 0).unwrap();
        assert_eq!(a.tensor(&a), Err(DensopError::LabelCollision(s(0))));
    }

    #[test]
    fn hadamard_on_zero() {
        let z = DensityMatrix::basis(vec![s(0)], 0).unwrap();
        let plus = z.apply_unitary(&hadamard(), &[s(0)]).unwrap();
        close(plus.expect(&pauli("X")).unwrap(), 1.0, 1e-12);
        close(plus.fidelity_pure(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap(), 1.0, 1e-12);
    }

    #[test]
    fn x_on_second_qubit_maps_psi_minus_to_phi_minus() {
        let psi = DensityMatrix::from_pure(vec![s(0), s(1)], &bell(Bell::PsiMinus)).unwrap();
        let out = psi.apply_unitary(&Pauli::X.matrix(), &[s(1)]).unwrap();
        let phi = DensityMatrix::from_pure(vec![s(0), s(1)], &bell(Bell::PhiMinus)).unwrap();
        assert!(out.trace_distance(&phi).unwrap() < 1e-12);
    }

    #[test]
    fn identity_is_bit_exact() {
        let psi = DensityMatrix::from_pure(
            vec![s(0), s(1)],
            &[
                C64::new(0.3, 0.1),
                C64::new(0.2, -0.4),
                C64::new(0.5, 0.0),
                C64::new(-0.1, 0.6),
            ],
        )
        .unwrap();
        let out = psi.apply_unitary(&CMatrix::identity(2, 2), &[s(1)]).unwrap();
        assert_eq!(out.matrix(), psi.matrix());
    }

    #[test]
    fn non_unitary_and_unknown_label_rejected() {
        let z = DensityMatrix::basis(vec![s(0)], 0).unwrap();
        let bad = CMatrix::identity(2, 2) * C64::new(2.0, 0.0);
        assert!(matches!(
            z.apply_unitary(&bad, &[s(0)]),
            Err(DensopError::NotUnitary(_))
        ));
        assert_eq!(
            z.apply_unitary(&hadamard(), &[s(7)]),
            Err(DensopError::UnknownLabel(s(7)))
        );
    }

    #[test]
    fn channels() {
        let plus = DensityMatrix::basis(vec![s(0)], 0)
            .unwrap()
            .apply_unitary(&hadamard(), &[s(0)])
            .unwrap();
        let mixed = plus.apply_channel(&KrausChannel::phase_flip(0.5), &[s(0)]).unwrap();
        assert!(mixed.trace_distance(&DensityMatrix::maximally_mixed(vec![s(0)]).unwrap()).unwrap() < 1e-12);

        let same = plus.apply_channel(&KrausChannel::phase_flip(0.0), &[s(0)]).unwrap();
        assert!(same.trace_distance(&plus).unwrap() < 1e-15);

        let one = DensityMatrix::basis(vec![s(0)], 1).unwrap();
        let decayed = one
            .apply_channel(&KrausChannel::amplitude_damping(1.0), &[s(0)])
            .unwrap();
        assert!(decayed.trace_distance(&DensityMatrix::basis(vec![s(0)], 0).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn incomplete_channel_needs_herald_flag() {
        let half = vec![CMatrix::identity(2, 2) * C64::new(0.5, 0.0)];
        assert!(matches!(
            KrausChannel::new(half.clone()),
            Err(DensopError::IncompleteChannel(_))
        ));
        let ch = KrausChannel::heralded(half).unwrap();
        let z = DensityMatrix::basis(vec![s(0)], 0).unwrap();
        let out = z.apply_channel(&ch, &[s(0)]).unwrap();
        close(out.trace(), 0.25, 1e-15);
    }

    #[test]
    fn bell_expectations() {
        let psi_m = DensityMatrix::from_pure(vec![s(0), s(1)], &bell(Bell::PsiMinus)).unwrap();
        close(psi_m.expect(&pauli("ZZ")).unwrap(), -1.0, 1e-12);
        let psi_p = DensityMatrix::from_pure(vec![s(0), s(1)], &bell(Bell::PsiPlus)).unwrap();
        close(psi_p.expect(&pauli("XX")).unwrap(), 1.0, 1e-12);
        close(psi_p.expect(&pauli("YY")).unwrap(), 1.0, 1e-12);
        close(psi_p.expect(&pauli("-ZZ")).unwrap(), 1.0, 1e-12);

        let mix = (projector(&ket(&[0, 1])) + projector(&ket(&[1, 0]))) * C64::new(0.5, 0.0);
        let mix = DensityMatrix::from_matrix(vec![s(0), s(1)], mix).unwrap();
        close(mix.expect(&pauli("XX")).unwrap(), 0.0, 1e-12);
        assert!(matches!(
            mix.expect(&pauli("Z")),
            Err(DensopError::PauliLength { .. })
        ));
    }

    #[test]
    fn expect_matches_matrix_trace() {
        let rho = DensityMatrix::from_pure(
            vec![s(0), s(1)],
            &[
                C64::new(0.3, 0.1),
                C64::new(0.2, -0.4),
                C64::new(0.5, 0.0),
                C64::new(-0.1, 0.6),
            ],
        )
        .unwrap();
        for p in ["XY", "YZ", "-YY", "IX", "ZI", "XX"] {
            let p = pauli(p);
            let direct = (p.matrix() * rho.matrix()).trace().re;
            close(rho.expect(&p).unwrap(), direct, 1e-12);
        }
    }

    #[test]
    fn partial_traces() {
        let psi = DensityMatrix::from_pure(vec![s(0), s(1)], &bell(Bell::PsiMinus)).unwrap();
        let red = psi.partial_trace(&[s(0)]).unwrap();
        assert!(red.trace_distance(&DensityMatrix::maximally_mixed(vec![s(0)]).unwrap()).unwrap() < 1e-12);
        let all = psi.partial_trace(&[s(0), s(1)]).unwrap();
        assert_eq!(all.matrix(), psi.matrix());
        assert_eq!(
            psi.partial_trace(&[s(5)]).unwrap_err(),
            DensopError::UnknownLabel(s(5))
        );
    }

    #[test]
    fn partial_trace_of_product_keeps_factor() {
        let a = DensityMatrix::from_pure(vec![s(0)], &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let b = DensityMatrix::maximally_mixed(vec![s(1)]).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert!(ab.partial_trace(&[s(0)]).unwrap().trace_distance(&a).unwrap() < 1e-12);
        assert!(ab.partial_trace(&[s(1)]).unwrap().trace_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn projections() {
        let plus = DensityMatrix::basis(vec![s(0)], 0)
            .unwrap()
            .apply_unitary(&hadamard(), &[s(0)])
            .unwrap();
        let pr = plus.project(&projector(&ket(&[0])), &[s(0)]).unwrap();
        close(pr.probability, 0.5, 1e-12);
        assert!(pr.state.unwrap().trace_distance(&DensityMatrix::basis(vec![s(0)], 0).unwrap()).unwrap() < 1e-12);

        let psi = DensityMatrix::from_pure(vec![s(0), s(1)], &bell(Bell::PsiMinus)).unwrap();
        let pr = psi.project(&projector(&bell(Bell::PsiMinus)), &[s(0), s(1)]).unwrap();
        close(pr.probability, 1.0, 1e-12);

        let zz = DensityMatrix::basis(vec![s(0), s(1)], 0).unwrap();
        let pr = zz.project(&projector(&ket(&[1, 1])), &[s(0), s(1)]).unwrap();
        assert!(pr.is_null());
        assert_eq!(pr.probability, 0.0);
    }

    #[test]
    fn project_rejects_expansive_operator() {
        let z = DensityMatrix::basis(vec![s(0)], 0).unwrap();
        let big = CMatrix::identity(2, 2) * C64::new(1.5, 0.0);
        assert!(matches!(
            z.project(&big, &[s(0)]),
            Err(DensopError::NotContraction(_))
        ));
    }

    #[test]
    fn herald_on_bell_pair() {
        // measuring qubit 1 of psi- in Z and finding 0 leaves qubit 0 in |1>
        let psi = DensityMatrix::from_pure(vec![s(0), s(1)], &bell(Bell::PsiMinus)).unwrap();
        let pr = psi.herald(&projector(&ket(&[0])), &[s(1)]).unwrap();
        close(pr.probability, 0.5, 1e-12);
        let st = pr.state.unwrap();
        assert_eq!(st.labels(), &[s(0)]);
        close(st.expect(&pauli("Z")).unwrap(), -1.0, 1e-12);
    }

    #[test]
    fn register_cap() {
        let labels: Vec<_> = (0..9).map(s).collect();
        assert_eq!(
            DensityMatrix::maximally_mixed(labels),
            Err(DensopError::RegisterTooLarge(9))
        );
    }

    #[test]
    fn pauli_parse_roundtrip() {
        let p: PauliString = "-XIYZ".parse().unwrap();
        assert_eq!(p.to_string(), "-XIYZ");
        assert_eq!(p.weight(), 3);
        assert!("".parse::<PauliString>().is_err());
        assert!("XQ".parse::<PauliString>().is_err());
    }
}
