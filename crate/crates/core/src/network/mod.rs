//! Fusion networks on the stabilizer level.
//!
//! Every (generator, cycle) pair starts as an ideal spin-photon Bell pair
//! stabilized by `+ZZ, -XX`. Fusions consume photons; what survives is read
//! off as a correlation graph between spins.

mod crosscheck;
mod tableau;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densop::{DensopError, Pauli, PauliString, TimeBin};
use crate::fusion::{FusionError, FusionOutcome};

pub use crosscheck::{crosscheck_dense, crosscheck_suite, CrosscheckCase, CrosscheckReport, CrosscheckSummary};
pub use tableau::StabilizerTableau;

/// Upper bound on generator-cycle pairs in one network.
pub const MAX_PAIRS: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("malformed network: {0}")]
    MalformedSpec(String),
    #[error("invalid tableau: {0}")]
    InvalidTableau(String),
    #[error("qubit {0} is not in the tableau")]
    UnsupportedQubit(usize),
    #[error("photon {0} was already fused")]
    AlreadyFused(QubitRef),
    #[error("Pauli string has {got} letters, tableau has {expected} qubits")]
    PauliLength { got: usize, expected: usize },
    #[error("outcome has zero probability: {0}")]
    ImpossibleOutcome(String),
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("dense cross-check too large: {0} qubits")]
    SizeOverflow(usize),
    #[error(transparent)]
    Densop(#[from] DensopError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Spin,
    Photon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitRef {
    pub rsg: u32,
    pub cycle: u32,
    pub role: Role,
}

impl QubitRef {
    pub fn spin(rsg: u32, cycle: u32) -> Self {
        QubitRef {
            rsg,
            cycle,
            role: Role::Spin,
        }
    }

    pub fn photon(rsg: u32, cycle: u32) -> Self {
        QubitRef {
            rsg,
            cycle,
            role: Role::Photon,
        }
    }

}

impl fmt::Display for QubitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            Role::Spin => "spin",
            Role::Photon => "photon",
        };
        write!(f, "r{}c{}.{role}", self.rsg, self.cycle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    SpaceLike,
    TimeLike,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    pub a: QubitRef,
    pub b: QubitRef,
    pub kind: FusionKind,
    /// Fixes the outcome instead of sampling it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<FusionOutcome>,
}

/// Joint ZZ and XX measurement of two spins, applied after all fusions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinMeasurement {
    pub a: QubitRef,
    pub b: QubitRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub rsg_count: u32,
    pub cycles: u32,
    #[serde(default)]
    pub fusions: Vec<FusionSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spin_measurements: Vec<SpinMeasurement>,
}

impl NetworkSpec {
    /// One generator, two cycles, one time-like fusion.
    pub fn two_cycle() -> Self {
        Self::chain(2)
    }

    /// One generator over `cycles` cycles; photons of cycles `2k, 2k+1`
    /// are fused and the spins of `2k+1, 2k+2` are Bell measured, leaving
    /// the first and last spin.
    pub fn chain(cycles: u32) -> Self {
        let mut spec = NetworkSpec {
            rsg_count: 1,
            cycles,
            fusions: Vec::new(),
            spin_measurements: Vec::new(),
        };
        let mut c = 0;
        while c + 1 < cycles {
            spec.fusions.push(FusionSpec {
                a: QubitRef::photon(0, c),
                b: QubitRef::photon(0, c + 1),
                kind: FusionKind::TimeLike,
                outcome: None,
            });
            if c + 2 < cycles {
                spec.spin_measurements.push(SpinMeasurement {
                    a: QubitRef::spin(0, c + 1),
                    b: QubitRef::spin(0, c + 2),
                });
            }
            c += 2;
        }
        spec
    }

    /// `rsg_count` generators over `cycles` cycles: space-like fusions
    /// between neighbouring generators on even cycles, time-like fusions
    /// between neighbouring odd/even cycles on the remaining photons.
    pub fn grid(rsg_count: u32, cycles: u32) -> Self {
        let mut spec = NetworkSpec {
            rsg_count,
            cycles,
            fusions: Vec::new(),
            spin_measurements: Vec::new(),
        };
        let mut used = BTreeSet::new();
        for c in 0..cycles {
            let mut r = c % 2;
            while r + 1 < rsg_count {
                spec.fusions.push(FusionSpec {
                    a: QubitRef::photon(r, c),
                    b: QubitRef::photon(r + 1, c),
                    kind: FusionKind::SpaceLike,
                    outcome: None,
                });
                used.insert((r, c));
                used.insert((r + 1, c));
                r += 2;
            }
        }
        for r in 0..rsg_count {
            let free: Vec<u32> = (0..cycles).filter(|c| !used.contains(&(r, *c))).collect();
            for w in free.chunks_exact(2) {
                spec.fusions.push(FusionSpec {
                    a: QubitRef::photon(r, w[0]),
                    b: QubitRef::photon(r, w[1]),
                    kind: FusionKind::TimeLike,
                    outcome: None,
                });
            }
        }
        spec
    }

    pub fn n_pairs(&self) -> usize {
        self.rsg_count as usize * self.cycles as usize
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.n_pairs()
    }

    /// Tableau column of `q`.
    pub fn index(&self, q: QubitRef) -> Result<usize, NetworkError> {
        if q.rsg >= self.rsg_count || q.cycle >= self.cycles {
            return Err(NetworkError::MalformedSpec(format!("{q} is outside the network")));
        }
        let pair = q.rsg as usize * self.cycles as usize + q.cycle as usize;
        Ok(2 * pair + usize::from(q.role == Role::Photon))
    }

    pub fn qubit(&self, index: usize) -> QubitRef {
        let pair = index / 2;
        let rsg = (pair / self.cycles as usize) as u32;
        let cycle = (pair % self.cycles as usize) as u32;
        if index % 2 == 0 {
            QubitRef::spin(rsg, cycle)
        } else {
            QubitRef::photon(rsg, cycle)
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.rsg_count == 0 || self.cycles == 0 {
            return Err(NetworkError::MalformedSpec("need at least one generator and one cycle".into()));
        }
        if self.n_pairs() > MAX_PAIRS {
            return Err(NetworkError::MalformedSpec(format!(
                "{} resource states exceed the limit of {MAX_PAIRS}",
                self.n_pairs()
            )));
        }
        let mut fused = BTreeSet::new();
        for f in &self.fusions {
            self.index(f.a)?;
            self.index(f.b)?;
            if f.a.role != Role::Photon || f.b.role != Role::Photon {
                return Err(NetworkError::MalformedSpec(format!("fusion {}-{} must join photons", f.a, f.b)));
            }
            match f.kind {
                FusionKind::TimeLike if f.a.rsg != f.b.rsg || f.a.cycle == f.b.cycle => {
                    return Err(NetworkError::MalformedSpec(format!(
                        "time-like fusion {}-{} must join one generator at two cycles",
                        f.a, f.b
                    )));
                }
                FusionKind::SpaceLike if f.a.rsg == f.b.rsg || f.a.cycle != f.b.cycle => {
                    return Err(NetworkError::MalformedSpec(format!(
                        "space-like fusion {}-{} must join two generators in one cycle",
                        f.a, f.b
                    )));
                }
                _ => {}
            }
            for q in [f.a, f.b] {
                if !fused.insert(q) {
                    return Err(NetworkError::AlreadyFused(q));
                }
            }
        }
        let mut measured = BTreeSet::new();
        for m in &self.spin_measurements {
            self.index(m.a)?;
            self.index(m.b)?;
            if m.a.role != Role::Spin || m.b.role != Role::Spin || m.a == m.b {
                return Err(NetworkError::MalformedSpec(format!(
                    "spin measurement {}-{} must join two spins",
                    m.a, m.b
                )));
            }
            for q in [m.a, m.b] {
                if !measured.insert(q) {
                    return Err(NetworkError::MalformedSpec(format!("{q} measured twice")));
                }
            }
        }
        Ok(())
    }

    /// Tableau with every resource pair in its ideal state.
    pub fn initial_tableau(&self) -> Result<StabilizerTableau, NetworkError> {
        self.validate()?;
        let n = self.n_qubits();
        let mut gens = Vec::with_capacity(n);
        for pair in 0..self.n_pairs() {
            gens.push(pauli_on(n, &[(2 * pair, Pauli::Z), (2 * pair + 1, Pauli::Z)], false));
            gens.push(pauli_on(n, &[(2 * pair, Pauli::X), (2 * pair + 1, Pauli::X)], true));
        }
        StabilizerTableau::from_generators(n, &gens)
    }
}

/// Pauli string on `n` qubits with the given non-identity letters.
pub fn pauli_on(n: usize, letters: &[(usize, Pauli)], negative: bool) -> PauliString {
    let mut v = vec![Pauli::I; n];
    for &(q, p) in letters {
        v[q] = p;
    }
    PauliString::new(v, negative)
}

/// What a fusion does to the two photons, with all signs resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionEffect {
    /// Joint ZZ and XX parities.
    Parity { zz: i8, xx: i8 },
    /// Both photons found in `bin`.
    Which(TimeBin),
    Erased,
}

impl FusionEffect {
    pub const ALL: [FusionEffect; 7] = [
        FusionEffect::Parity { zz: 1, xx: 1 },
        FusionEffect::Parity { zz: 1, xx: -1 },
        FusionEffect::Parity { zz: -1, xx: 1 },
        FusionEffect::Parity { zz: -1, xx: -1 },
        FusionEffect::Which(TimeBin::Early),
        FusionEffect::Which(TimeBin::Late),
        FusionEffect::Erased,
    ];
}

impl From<FusionOutcome> for FusionEffect {
    fn from(o: FusionOutcome) -> Self {
        match o {
            FusionOutcome::SuccessPsiPlus => FusionEffect::Parity { zz: -1, xx: 1 },
            FusionOutcome::SuccessPsiMinus => FusionEffect::Parity { zz: -1, xx: -1 },
            FusionOutcome::FailurePhiSubspace(bin) => FusionEffect::Which(bin),
            FusionOutcome::Erasure => FusionEffect::Erased,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub id: usize,
    pub a: QubitRef,
    pub b: QubitRef,
    pub outcome: FusionOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zz: Option<i8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xx: Option<i8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinMeasurementRecord {
    pub a: QubitRef,
    pub b: QubitRef,
    pub zz: i8,
    pub xx: i8,
}

fn bin_sign(bin: TimeBin) -> i8 {
    match bin {
        TimeBin::Early => 1,
        TimeBin::Late => -1,
    }
}

/// Applies `effect` to tableau columns `q1`, `q2` and discards them.
/// Returns the (ZZ, XX) parities that were read.
pub fn apply_fusion_effect(
    t: &mut StabilizerTableau,
    q1: usize,
    q2: usize,
    effect: FusionEffect,
) -> Result<(Option<i8>, Option<i8>), NetworkError> {
    if q1 == q2 {
        return Err(NetworkError::MalformedSpec("fusion of a qubit with itself".into()));
    }
    for q in [q1, q2] {
        if t.is_removed(q) {
            return Err(NetworkError::UnsupportedQubit(q));
        }
    }
    let n = t.n_qubits();
    let read = match effect {
        FusionEffect::Parity { zz, xx } => {
            let mut trial = t.clone();
            trial.measure_forced(&pauli_on(n, &[(q1, Pauli::Z), (q2, Pauli::Z)], false), zz)?;
            trial.measure_forced(&pauli_on(n, &[(q1, Pauli::X), (q2, Pauli::X)], false), xx)?;
            *t = trial;
            (Some(zz), Some(xx))
        }
        FusionEffect::Which(bin) => {
            let s = bin_sign(bin);
            let mut trial = t.clone();
            trial.measure_forced(&pauli_on(n, &[(q1, Pauli::Z), (q2, Pauli::Z)], false), 1)?;
            trial.measure_forced(&pauli_on(n, &[(q1, Pauli::Z)], false), s)?;
            trial.measure_forced(&pauli_on(n, &[(q2, Pauli::Z)], false), s)?;
            *t = trial;
            (Some(1), None)
        }
        FusionEffect::Erased => (None, None),
    };
    t.discard(q1)?;
    t.discard(q2)?;
    Ok(read)
}

/// Fuses photons `q1`, `q2` with a given outcome. Success reads ZZ and XX,
/// failure reads ZZ and the time bin, erasure reads nothing; both photons
/// are consumed.
pub fn fuse(
    spec: &NetworkSpec,
    t: &mut StabilizerTableau,
    id: usize,
    q1: QubitRef,
    q2: QubitRef,
    outcome: FusionOutcome,
) -> Result<FusionRecord, NetworkError> {
    let (i1, i2) = (spec.index(q1)?, spec.index(q2)?);
    for (q, i) in [(q1, i1), (q2, i2)] {
        if q.role != Role::Photon {
            return Err(NetworkError::MalformedSpec(format!("{q} is not a photon")));
        }
        if t.is_removed(i) {
            return Err(NetworkError::AlreadyFused(q));
        }
    }
    let (zz, xx) = apply_fusion_effect(t, i1, i2, outcome.into())?;
    Ok(FusionRecord {
        id,
        a: q1,
        b: q2,
        outcome,
        zz,
        xx,
    })
}

/// Samples one fusion outcome: erasure with `p_erasure`, otherwise success
/// with `p_success` (either sign equally), otherwise failure in either bin.
pub fn sample_outcome<R: Rng + ?Sized>(p_success: f64, p_erasure: f64, rng: &mut R) -> FusionOutcome {
    if rng.gen::<f64>() < p_erasure {
        return FusionOutcome::Erasure;
    }
    let success = rng.gen::<f64>() < p_success;
    let flip = rng.gen::<bool>();
    match (success, flip) {
        (true, false) => FusionOutcome::SuccessPsiPlus,
        (true, true) => FusionOutcome::SuccessPsiMinus,
        (false, false) => FusionOutcome::FailurePhiSubspace(TimeBin::Early),
        (false, true) => FusionOutcome::FailurePhiSubspace(TimeBin::Late),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Same generator, different cycles.
    TimeLike,
    /// Same cycle, different generators.
    SpaceLike,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationEdge {
    pub a: QubitRef,
    pub b: QubitRef,
    pub kind: EdgeKind,
    /// Weight-2 group elements on exactly `a` and `b`, e.g. `-ZZ`.
    pub stabilizers: Vec<String>,
    /// Only ZZ survives.
    pub classical: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationGraph {
    pub spins: Vec<QubitRef>,
    pub edges: Vec<CorrelationEdge>,
}

impl CorrelationGraph {
    pub fn edge(&self, a: QubitRef, b: QubitRef) -> Option<&CorrelationEdge> {
        self.edges.iter().find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
    }

    /// Neighbour lists keyed by qubit name.
    pub fn adjacency(&self) -> BTreeMap<String, Vec<String>> {
        let mut out: BTreeMap<String, Vec<String>> = self.spins.iter().map(|s| (s.to_string(), Vec::new())).collect();
        for e in &self.edges {
            out.entry(e.a.to_string()).or_default().push(e.b.to_string());
            out.entry(e.b.to_string()).or_default().push(e.a.to_string());
        }
        out
    }
}

/// Correlation graph between the spins still in `t`.
pub fn correlation_graph(spec: &NetworkSpec, t: &StabilizerTableau) -> Result<CorrelationGraph, NetworkError> {
    let n = t.n_qubits();
    let spins: Vec<usize> = (0..n).step_by(2).filter(|&q| !t.is_removed(q)).collect();
    let sub = t.subgroup_on(&spins)?;
    let mut found: BTreeMap<(usize, usize), Vec<(Pauli, Pauli, i8)>> = BTreeMap::new();
    for i in 0..spins.len() {
        for j in i + 1..spins.len() {
            let pair = sub.subgroup_on(&[i, j])?;
            for p in pair.group_elements()? {
                let (pa, pb) = (p.letters[0], p.letters[1]);
                if pa != Pauli::I && pb != Pauli::I {
                    let v = if p.negative { -1 } else { 1 };
                    found.entry((spins[i], spins[j])).or_default().push((pa, pb, v));
                }
            }
        }
    }
    for list in found.values_mut() {
        list.sort_by_key(|&(pa, pb, _)| (pa.symbol(), pb.symbol()));
    }
    let mut graph = CorrelationGraph {
        spins: spins.iter().map(|&q| spec.qubit(q)).collect(),
        edges: Vec::new(),
    };
    for ((a, b), list) in found {
        let (qa, qb) = (spec.qubit(a), spec.qubit(b));
        let kind = if qa.rsg == qb.rsg {
            EdgeKind::TimeLike
        } else if qa.cycle == qb.cycle {
            EdgeKind::SpaceLike
        } else {
            EdgeKind::Mixed
        };
        let classical = list.iter().all(|&(pa, pb, _)| pa == Pauli::Z && pb == Pauli::Z);
        let stabilizers = list
            .iter()
            .map(|&(pa, pb, v)| format!("{}{}{}", if v < 0 { '-' } else { '+' }, pa.symbol(), pb.symbol()))
            .collect();
        graph.edges.push(CorrelationEdge {
            a: qa,
            b: qb,
            kind,
            stabilizers,
            classical,
        });
    }
    Ok(graph)
}

#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub records: Vec<FusionRecord>,
    pub spin_records: Vec<SpinMeasurementRecord>,
    pub tableau: StabilizerTableau,
    pub graph: CorrelationGraph,
}

fn check_probability(p: f64) -> Result<(), NetworkError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(NetworkError::InvalidProbability(p));
    }
    Ok(())
}

/// Builds every resource pair, runs the fusions in order (sampling those
/// without a fixed outcome), then the spin measurements, and reads off the
/// correlation graph.
pub fn run_network<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    p_success: f64,
    p_erasure: f64,
    rng: &mut R,
) -> Result<NetworkRun, NetworkError> {
    check_probability(p_success)?;
    check_probability(p_erasure)?;
    let mut t = spec.initial_tableau()?;
    let n = t.n_qubits();
    let mut records = Vec::with_capacity(spec.fusions.len());
    for (id, f) in spec.fusions.iter().enumerate() {
        let outcome = f.outcome.unwrap_or_else(|| sample_outcome(p_success, p_erasure, rng));
        records.push(fuse(spec, &mut t, id, f.a, f.b, outcome)?);
    }
    let mut spin_records = Vec::with_capacity(spec.spin_measurements.len());
    for m in &spec.spin_measurements {
        let (a, b) = (spec.index(m.a)?, spec.index(m.b)?);
        let zz = t.measure_joint_pauli(&pauli_on(n, &[(a, Pauli::Z), (b, Pauli::Z)], false), rng)?;
        let xx = t.measure_joint_pauli(&pauli_on(n, &[(a, Pauli::X), (b, Pauli::X)], false), rng)?;
        t.discard(a)?;
        t.discard(b)?;
        spin_records.push(SpinMeasurementRecord {
            a: m.a,
            b: m.b,
            zz,
            xx,
        });
    }
    let graph = correlation_graph(spec, &t)?;
    Ok(NetworkRun {
        records,
        spin_records,
        tableau: t,
        graph,
    })
}

#[cfg(test)]
mod tests;
