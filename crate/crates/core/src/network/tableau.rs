//! Stabilizer generators with signs, possibly fewer than the qubit count
//! (mixed states are allowed: qubits outside the group's support are
//! maximally mixed).

use rand::Rng;

use crate::densop::{Pauli, PauliString};

use super::NetworkError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Row {
    x: Vec<u64>,
    z: Vec<u64>,
    negative: bool,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

fn bit(v: &[u64], q: usize) -> bool {
    v[q / 64] >> (q % 64) & 1 == 1
}

fn set_bit(v: &mut [u64], q: usize, on: bool) {
    if on {
        v[q / 64] |= 1 << (q % 64);
    } else {
        v[q / 64] &= !(1 << (q % 64));
    }
}

impl Row {
    fn identity(n: usize) -> Self {
        Row {
            x: vec![0; words(n)],
            z: vec![0; words(n)],
            negative: false,
        }
    }

    fn from_pauli(p: &PauliString) -> Self {
        let mut r = Row::identity(p.len());
        for (q, l) in p.letters.iter().enumerate() {
            let (x, z) = match l {
                Pauli::I => (false, false),
                Pauli::X => (true, false),
                Pauli::Y => (true, true),
                Pauli::Z => (false, true),
            };
            set_bit(&mut r.x, q, x);
            set_bit(&mut r.z, q, z);
        }
        r.negative = p.negative;
        r
    }

    fn to_pauli(&self, n: usize) -> PauliString {
        let letters = (0..n)
            .map(|q| match (bit(&self.x, q), bit(&self.z, q)) {
                (false, false) => Pauli::I,
                (true, false) => Pauli::X,
                (true, true) => Pauli::Y,
                (false, true) => Pauli::Z,
            })
            .collect();
        PauliString::new(letters, self.negative)
    }

    fn is_identity(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    fn touches(&self, q: usize) -> bool {
        bit(&self.x, q) || bit(&self.z, q)
    }

    fn commutes(&self, other: &Row) -> bool {
        let mut parity = 0u32;
        for k in 0..self.x.len() {
            parity ^= (self.x[k] & other.z[k]).count_ones() ^ (self.z[k] & other.x[k]).count_ones();
        }
        parity & 1 == 0
    }

    /// `self <- self * other`; both must commute so the phase stays real.
    fn mul_assign(&mut self, other: &Row) {
        let mut phase = 2 * (self.negative as i64) + 2 * (other.negative as i64);
        for k in 0..self.x.len() {
            let (x1, z1, x2, z2) = (self.x[k], self.z[k], other.x[k], other.z[k]);
            let (px, py, pz) = (x1 & !z1, x1 & z1, !x1 & z1);
            let (qx, qy, qz) = (x2 & !z2, x2 & z2, !x2 & z2);
            let plus = (px & qy) | (py & qz) | (pz & qx);
            let minus = (px & qz) | (py & qx) | (pz & qy);
            phase += plus.count_ones() as i64 - minus.count_ones() as i64;
            self.x[k] ^= x2;
            self.z[k] ^= z2;
        }
        let phase = phase.rem_euclid(4);
        debug_assert!(phase % 2 == 0, "product of anticommuting rows");
        self.negative = phase == 2;
    }

    /// Column `c < n` is the X bit of qubit `c`, `c >= n` the Z bit of qubit `c - n`.
    fn column(&self, c: usize, n: usize) -> bool {
        if c < n {
            bit(&self.x, c)
        } else {
            bit(&self.z, c - n)
        }
    }
}

/// Signed Pauli stabilizer generators over `n` qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizerTableau {
    n: usize,
    rows: Vec<Row>,
    removed: Vec<bool>,
}

impl StabilizerTableau {
    /// No generators: the maximally mixed state.
    pub fn new(n: usize) -> Self {
        StabilizerTableau {
            n,
            rows: Vec::new(),
            removed: vec![false; n],
        }
    }

    /// `|0...0>`.
    pub fn zero_state(n: usize) -> Self {
        let mut t = Self::new(n);
        for q in 0..n {
            let mut r = Row::identity(n);
            set_bit(&mut r.z, q, true);
            t.rows.push(r);
        }
        t
    }

    pub fn from_generators(n: usize, gens: &[PauliString]) -> Result<Self, NetworkError> {
        let mut t = Self::new(n);
        for p in gens {
            t.check_support(p)?;
            t.rows.push(Row::from_pauli(p));
        }
        t.validate()?;
        Ok(t)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn generators(&self) -> Vec<PauliString> {
        self.rows.iter().map(|r| r.to_pauli(self.n)).collect()
    }

    pub fn is_removed(&self, q: usize) -> bool {
        self.removed.get(q).copied().unwrap_or(true)
    }

    /// Pure on the qubits not yet discarded.
    pub fn is_pure(&self) -> bool {
        self.rows.len() == self.removed.iter().filter(|r| !**r).count()
    }

    /// Rows commute pairwise, are independent, and avoid discarded qubits.
    pub fn validate(&self) -> Result<(), NetworkError> {
        for (i, a) in self.rows.iter().enumerate() {
            if a.is_identity() {
                return Err(NetworkError::InvalidTableau("identity generator".into()));
            }
            if (0..self.n).any(|q| self.removed[q] && a.touches(q)) {
                return Err(NetworkError::InvalidTableau(format!("generator {i} acts on a discarded qubit")));
            }
            for b in &self.rows[i + 1..] {
                if !a.commutes(b) {
                    return Err(NetworkError::InvalidTableau(format!("generator {i} anticommutes")));
                }
            }
        }
        if self.canonical().rows.len() != self.rows.len() {
            return Err(NetworkError::InvalidTableau("dependent generators".into()));
        }
        Ok(())
    }

    fn check_support(&self, p: &PauliString) -> Result<(), NetworkError> {
        if p.len() != self.n {
            return Err(NetworkError::PauliLength {
                got: p.len(),
                expected: self.n,
            });
        }
        for (q, l) in p.letters.iter().enumerate() {
            if *l != Pauli::I && self.removed[q] {
                return Err(NetworkError::UnsupportedQubit(q));
            }
        }
        Ok(())
    }

    /// Row-reduced copy; products are phase tracked so rows remain valid
    /// group elements. Null rows are dropped.
    fn canonical(&self) -> Canonical {
        self.reduce(0..2 * self.n)
    }

    /// Eliminates columns in the given order (see [`Row::column`]).
    fn reduce(&self, order: impl IntoIterator<Item = usize>) -> Canonical {
        let n = self.n;
        let mut rows = self.rows.clone();
        let mut pivots = Vec::new();
        let mut next = 0;
        for c in order {
            let Some(k) = (next..rows.len()).find(|&k| rows[k].column(c, n)) else {
                continue;
            };
            rows.swap(next, k);
            let pivot = rows[next].clone();
            for (j, r) in rows.iter_mut().enumerate() {
                if j != next && r.column(c, n) {
                    r.mul_assign(&pivot);
                }
            }
            pivots.push(c);
            next += 1;
        }
        rows.truncate(next);
        Canonical { n, rows, pivots }
    }

    /// The subgroup acting trivially outside `qubits`, as a tableau on
    /// `qubits` (in the order given).
    pub fn subgroup_on(&self, qubits: &[usize]) -> Result<StabilizerTableau, NetworkError> {
        let n = self.n;
        let mut inside = vec![false; n];
        for &q in qubits {
            if self.is_removed(q) || inside[q] {
                return Err(NetworkError::UnsupportedQubit(q));
            }
            inside[q] = true;
        }
        let outside = (0..n).filter(|&q| !inside[q]);
        let order: Vec<usize> = outside
            .clone()
            .chain(outside.map(|q| q + n))
            .chain(qubits.iter().copied())
            .chain(qubits.iter().map(|q| q + n))
            .collect();
        let canon = self.reduce(order);
        let m = qubits.len();
        let mut sub = StabilizerTableau::new(m);
        for (r, &c) in canon.rows.iter().zip(&canon.pivots) {
            if !inside[c % n] {
                continue;
            }
            let mut row = Row::identity(m);
            for (i, &q) in qubits.iter().enumerate() {
                set_bit(&mut row.x, i, bit(&r.x, q));
                set_bit(&mut row.z, i, bit(&r.z, q));
            }
            row.negative = r.negative;
            sub.rows.push(row);
        }
        Ok(sub)
    }

    /// Every non-identity group element; only for small ranks.
    pub fn group_elements(&self) -> Result<Vec<PauliString>, NetworkError> {
        let r = self.rows.len();
        if r > 16 {
            return Err(NetworkError::InvalidTableau(format!("rank {r} too large to enumerate")));
        }
        let mut out = Vec::with_capacity((1 << r) - 1);
        for mask in 1u32..(1 << r) {
            let mut acc = Row::identity(self.n);
            for (k, row) in self.rows.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    acc.mul_assign(row);
                }
            }
            out.push(acc.to_pauli(self.n));
        }
        Ok(out)
    }

    /// `+1`/`-1` if `±P` is in the group, `0` otherwise.
    pub fn expectation(&self, p: &PauliString) -> Result<i8, NetworkError> {
        self.check_support(p)?;
        Ok(self.canonical().lookup(&Row::from_pauli(p)).unwrap_or(0))
    }

    /// [`Self::expectation`] for many strings, reducing the tableau once.
    pub fn expectations(&self, ps: &[PauliString]) -> Result<Vec<i8>, NetworkError> {
        let canon = self.canonical();
        ps.iter()
            .map(|p| {
                self.check_support(p)?;
                Ok(canon.lookup(&Row::from_pauli(p)).unwrap_or(0))
            })
            .collect()
    }

    /// Measures `P`; random outcomes are drawn from `rng`.
    pub fn measure_joint_pauli<R: Rng + ?Sized>(&mut self, p: &PauliString, rng: &mut R) -> Result<i8, NetworkError> {
        self.measure_with(p, |_| if rng.gen::<bool>() { 1 } else { -1 })
    }

    /// Measures `P` with a prescribed outcome; an outcome of zero
    /// probability is an error and leaves the tableau unchanged.
    pub fn measure_forced(&mut self, p: &PauliString, sign: i8) -> Result<i8, NetworkError> {
        let got = self.measure_with(p, |determined| determined.unwrap_or(sign))?;
        if got != sign {
            return Err(NetworkError::ImpossibleOutcome(format!("{p} cannot read {sign:+}")));
        }
        Ok(got)
    }

    fn measure_with(&mut self, p: &PauliString, choose: impl FnOnce(Option<i8>) -> i8) -> Result<i8, NetworkError> {
        self.check_support(p)?;
        let mut target = Row::from_pauli(p);
        let anti: Vec<usize> = (0..self.rows.len()).filter(|&k| !self.rows[k].commutes(&target)).collect();
        if let Some((&first, rest)) = anti.split_first() {
            let sign = choose(None);
            let pivot = self.rows[first].clone();
            for &k in rest {
                self.rows[k].mul_assign(&pivot);
            }
            target.negative ^= sign < 0;
            self.rows[first] = target;
            return Ok(sign);
        }
        if let Some(sign) = self.canonical().lookup(&target) {
            // deterministic; `measure_forced` compares afterwards
            let _ = choose(Some(sign));
            return Ok(sign);
        }
        let sign = choose(None);
        target.negative ^= sign < 0;
        self.rows.push(target);
        Ok(sign)
    }

    /// Traces out qubit `q`: only group elements acting trivially on it survive.
    pub fn discard(&mut self, q: usize) -> Result<(), NetworkError> {
        if self.is_removed(q) {
            return Err(NetworkError::UnsupportedQubit(q));
        }
        let n = self.n;
        for c in [q, n + q] {
            let Some(k) = self.rows.iter().position(|r| r.column(c, n)) else {
                continue;
            };
            let pivot = self.rows.remove(k);
            for r in self.rows.iter_mut() {
                if r.column(c, n) {
                    r.mul_assign(&pivot);
                }
            }
        }
        self.removed[q] = true;
        Ok(())
    }
}

struct Canonical {
    n: usize,
    rows: Vec<Row>,
    pivots: Vec<usize>,
}

impl Canonical {
    fn lookup(&self, target: &Row) -> Option<i8> {
        let mut residual = target.clone();
        residual.negative = false;
        let mut acc = Row::identity(self.n);
        for (r, &c) in self.rows.iter().zip(&self.pivots) {
            if residual.column(c, self.n) {
                for k in 0..residual.x.len() {
                    residual.x[k] ^= r.x[k];
                    residual.z[k] ^= r.z[k];
                }
                acc.mul_assign(r);
            }
        }
        if !residual.is_identity() {
            return None;
        }
        let s = if acc.negative == target.negative { 1 } else { -1 };
        Some(s)
    }
}
