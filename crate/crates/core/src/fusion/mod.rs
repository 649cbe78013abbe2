//! Time-bin fusion at a balanced beam splitter.
//!
//! Two routes produce the same measurement: [`fock_fusion_oracle`] pushes
//! photons through the beam splitter mode by mode (with internal labels for
//! distinguishability, loss modes and background clicks), while
//! [`effective_channel`] writes the measurement down directly in terms of
//! Bell-state projectors. Both yield a [`PovmSet`]: for every detection
//! pattern, one POVM element per photon-presence configuration.

mod channel;
mod oracle;
mod pattern;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densop::{hermitian_eigenvalues, CMatrix, DensityMatrix, DensopError, QubitLabel, C64, NULL_PROB};
use crate::emitter::ResourceState;

pub use channel::{effective_channel, FusionChannel};
pub use oracle::{fock_fusion_oracle, fock_povms};
pub use pattern::{classify_pattern, DetectionPattern, Detector, FusionOutcome, OutcomeClass, Port};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("malformed fusion register: {0}")]
    MalformedRegister(String),
    #[error("invalid fusion noise: {0}")]
    InvalidNoise(String),
    #[error("cannot parse detection pattern: {0}")]
    PatternParse(String),
    #[error(transparent)]
    Densop(#[from] DensopError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionNoise {
    /// Pairwise indistinguishability V = |<alpha|beta>|^2.
    pub indistinguishability: f64,
    /// Per-photon transmission from source to detector.
    pub eta: f64,
    /// Background click probability per detector (port, bin); includes dark counts.
    pub p_bg: f64,
    pub number_resolving: bool,
}

impl Default for FusionNoise {
    fn default() -> Self {
        Self::ideal()
    }
}

impl FusionNoise {
    pub fn ideal() -> Self {
        Self {
            indistinguishability: 1.0,
            eta: 1.0,
            p_bg: 0.0,
            number_resolving: true,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        for (name, p) in [
            ("indistinguishability", self.indistinguishability),
            ("eta", self.eta),
            ("p_bg", self.p_bg),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(FusionError::InvalidNoise(format!("{name} = {p} not in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Probability of a given set of background clicks (bit `k` = detector `k`).
    pub(crate) fn background_weight(&self, mask: u8) -> f64 {
        (0..4).fold(1.0, |acc, k| {
            if mask & (1 << k) != 0 {
                acc * self.p_bg
            } else {
                acc * (1.0 - self.p_bg)
            }
        })
    }
}

/// Which of the two photons reached the fusion as a valid time-bin qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Presence {
    Both,
    OnlyA,
    OnlyB,
    Neither,
}

impl Presence {
    pub const ALL: [Presence; 4] = [Presence::Both, Presence::OnlyA, Presence::OnlyB, Presence::Neither];

    pub fn photons(self) -> usize {
        match self {
            Presence::Both => 2,
            Presence::OnlyA | Presence::OnlyB => 1,
            Presence::Neither => 0,
        }
    }
}

/// POVM elements of one pattern, one per presence configuration. The
/// two-photon element acts on `[photon_a, photon_b]` with `|0> = early`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternPovm {
    pub both: CMatrix,
    pub only_a: CMatrix,
    pub only_b: CMatrix,
    pub neither: f64,
}

impl PatternPovm {
    pub fn zero() -> Self {
        Self {
            both: CMatrix::zeros(4, 4),
            only_a: CMatrix::zeros(2, 2),
            only_b: CMatrix::zeros(2, 2),
            neither: 0.0,
        }
    }

    pub fn get(&self, presence: Presence) -> CMatrix {
        match presence {
            Presence::Both => self.both.clone(),
            Presence::OnlyA => self.only_a.clone(),
            Presence::OnlyB => self.only_b.clone(),
            Presence::Neither => CMatrix::from_element(1, 1, C64::new(self.neither, 0.0)),
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &PatternPovm, w: f64) {
        let w = C64::new(w, 0.0);
        self.both += &other.both * w;
        self.only_a += &other.only_a * w;
        self.only_b += &other.only_b * w;
        self.neither += other.neither * w.re;
    }

    fn max_deviation(&self, other: &PatternPovm) -> f64 {
        let d = |a: &CMatrix, b: &CMatrix| crate::densop::max_abs(&(a - b));
        d(&self.both, &other.both)
            .max(d(&self.only_a, &other.only_a))
            .max(d(&self.only_b, &other.only_b))
            .max((self.neither - other.neither).abs())
    }
}

/// Detection patterns with their POVM elements.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PovmSet {
    pub elements: BTreeMap<DetectionPattern, PatternPovm>,
}

impl PovmSet {
    pub(crate) fn accumulate(&mut self, pattern: DetectionPattern, povm: &PatternPovm, w: f64) {
        if w == 0.0 {
            return;
        }
        self.elements
            .entry(pattern)
            .or_insert_with(PatternPovm::zero)
            .add_scaled(povm, w);
    }

    /// Largest entry-wise difference over the union of patterns.
    pub fn max_deviation(&self, other: &PovmSet) -> f64 {
        let zero = PatternPovm::zero();
        let keys: std::collections::BTreeSet<_> =
            self.elements.keys().chain(other.elements.keys()).collect();
        keys.into_iter()
            .map(|k| {
                let a = self.elements.get(k).unwrap_or(&zero);
                let b = other.elements.get(k).unwrap_or(&zero);
                a.max_deviation(b)
            })
            .fold(0.0, f64::max)
    }

    /// Distance of `sum_P E_P` from identity, per presence configuration.
    pub fn completeness_deviation(&self) -> f64 {
        let mut total = PatternPovm::zero();
        for e in self.elements.values() {
            total.add_scaled(e, 1.0);
        }
        let id = PatternPovm {
            both: CMatrix::identity(4, 4),
            only_a: CMatrix::identity(2, 2),
            only_b: CMatrix::identity(2, 2),
            neither: 1.0,
        };
        total.max_deviation(&id)
    }

    /// Heralds every pattern on `input`.
    pub fn apply(&self, input: &FusionInput) -> Result<Vec<HeraldedPattern>, FusionError> {
        let mut out = Vec::with_capacity(self.elements.len());
        for (pattern, povm) in &self.elements {
            let mut acc = CMatrix::zeros(4, 4);
            for br in &input.branches {
                let effect = povm.get(br.presence);
                let photons = input.photon_labels(br.presence);
                let un = if photons.is_empty() {
                    br.state.matrix() * effect[(0, 0)]
                } else {
                    br.state.herald_unnormalized(&effect, &photons)?.0
                };
                acc += un * C64::new(br.weight, 0.0);
            }
            let (state, probability) = DensityMatrix::from_unnormalized(input.spins.to_vec(), acc);
            out.push(HeraldedPattern {
                pattern: *pattern,
                outcome: pattern.classify(),
                probability,
                state,
            });
        }
        Ok(out)
    }
}

/// A pattern, its probability and the heralded two-spin state.
#[derive(Debug, Clone)]
pub struct HeraldedPattern {
    pub pattern: DetectionPattern,
    pub outcome: FusionOutcome,
    pub probability: f64,
    /// Over `[spin_a, spin_b]`; `None` when the pattern is impossible.
    pub state: Option<DensityMatrix>,
}

#[derive(Debug, Clone)]
pub struct InputBranch {
    pub presence: Presence,
    pub weight: f64,
    /// Spins plus whichever photons are present, ordered
    /// `spin_a, [photon_a], spin_b, [photon_b]`.
    pub state: DensityMatrix,
}

/// Two spins and their photons entering the fusion, split by which photons
/// are present as valid time-bin qubits.
#[derive(Debug, Clone)]
pub struct FusionInput {
    pub spins: [QubitLabel; 2],
    pub photons: [QubitLabel; 2],
    pub branches: Vec<InputBranch>,
}

impl FusionInput {
    pub fn from_resources(a: &ResourceState, b: &ResourceState) -> Result<Self, FusionError> {
        if a.cycle == b.cycle {
            return Err(FusionError::MalformedRegister(
                "both resource states come from the same cycle".into(),
            ));
        }
        let mut branches = Vec::new();
        let parts_a = [(true, a.p_emitted, &a.emitted), (false, a.p_lost(), &a.lost)];
        let parts_b = [(true, b.p_emitted, &b.emitted), (false, b.p_lost(), &b.lost)];
        for (has_a, wa, sa) in &parts_a {
            for (has_b, wb, sb) in &parts_b {
                let (Some(sa), Some(sb)) = (sa, sb) else { continue };
                let weight = wa * wb;
                if weight < NULL_PROB {
                    continue;
                }
                let presence = match (has_a, has_b) {
                    (true, true) => Presence::Both,
                    (true, false) => Presence::OnlyA,
                    (false, true) => Presence::OnlyB,
                    (false, false) => Presence::Neither,
                };
                branches.push(InputBranch {
                    presence,
                    weight,
                    state: sa.tensor(sb)?,
                });
            }
        }
        Ok(Self {
            spins: [QubitLabel::Spin(a.cycle), QubitLabel::Spin(b.cycle)],
            photons: [QubitLabel::Photon(a.cycle), QubitLabel::Photon(b.cycle)],
            branches,
        })
    }

    /// A four-qubit state ordered `spin_a, photon_a, spin_b, photon_b` with
    /// both photons present.
    pub fn from_joint(joint: &DensityMatrix) -> Result<Self, FusionError> {
        let labels = joint.labels();
        let malformed = || {
            FusionError::MalformedRegister(format!(
                "expected [Spin(a), Photon(a), Spin(b), Photon(b)], got {labels:?}"
            ))
        };
        if labels.len() != 4 {
            return Err(malformed());
        }
        let (sa, pa, sb, pb) = match (labels[0], labels[1], labels[2], labels[3]) {
            (QubitLabel::Spin(sa), QubitLabel::Photon(pa), QubitLabel::Spin(sb), QubitLabel::Photon(pb))
                if sa == pa && sb == pb && sa != sb =>
            {
                (sa, pa, sb, pb)
            }
            _ => return Err(malformed()),
        };
        Ok(Self {
            spins: [QubitLabel::Spin(sa), QubitLabel::Spin(sb)],
            photons: [QubitLabel::Photon(pa), QubitLabel::Photon(pb)],
            branches: vec![InputBranch {
                presence: Presence::Both,
                weight: 1.0,
                state: joint.clone(),
            }],
        })
    }

    fn photon_labels(&self, presence: Presence) -> Vec<QubitLabel> {
        match presence {
            Presence::Both => self.photons.to_vec(),
            Presence::OnlyA => vec![self.photons[0]],
            Presence::OnlyB => vec![self.photons[1]],
            Presence::Neither => vec![],
        }
    }
}

/// Precomputed pattern distribution for repeated sampling.
#[derive(Debug, Clone)]
pub struct FusionSampler {
    patterns: Vec<HeraldedPattern>,
    cumulative: Vec<f64>,
}

impl FusionSampler {
    pub fn new(patterns: Vec<HeraldedPattern>) -> Self {
        let mut acc = 0.0;
        let cumulative = patterns
            .iter()
            .map(|p| {
                acc += p.probability;
                acc
            })
            .collect();
        Self { patterns, cumulative }
    }

    pub fn from_oracle(input: &FusionInput, noise: &FusionNoise) -> Result<Self, FusionError> {
        Ok(Self::new(fock_fusion_oracle(input, noise)?))
    }

    pub fn patterns(&self) -> &[HeraldedPattern] {
        &self.patterns
    }

    /// Index into [`Self::patterns`].
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.cumulative.last().copied().unwrap_or(0.0);
        let u = rng.gen::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.patterns.len().saturating_sub(1))
    }

    /// Classified outcome and heralded state; erasures carry no state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (FusionOutcome, DetectionPattern, Option<&DensityMatrix>) {
        let p = &self.patterns[self.sample_index(rng)];
        let state = match p.outcome {
            FusionOutcome::Erasure => None,
            _ => p.state.as_ref(),
        };
        (p.outcome, p.pattern, state)
    }
}

/// One Monte Carlo fusion attempt.
pub fn sample_fusion<R: Rng + ?Sized>(
    input: &FusionInput,
    noise: &FusionNoise,
    rng: &mut R,
) -> Result<(FusionOutcome, Option<DensityMatrix>), FusionError> {
    let sampler = FusionSampler::from_oracle(input, noise)?;
    let (outcome, _, state) = sampler.sample(rng);
    Ok((outcome, state.cloned()))
}

/// Probability and normalized two-spin state for each conditioning class.
pub fn herald_by_class(patterns: &[HeraldedPattern]) -> BTreeMap<OutcomeClass, (f64, Option<DensityMatrix>)> {
    let mut acc: BTreeMap<OutcomeClass, (f64, Option<CMatrix>, Vec<QubitLabel>)> = BTreeMap::new();
    for p in patterns {
        let (Some(class), Some(state)) = (p.outcome.class(), p.state.as_ref()) else {
            continue;
        };
        let entry = acc
            .entry(class)
            .or_insert_with(|| (0.0, None, state.labels().to_vec()));
        entry.0 += p.probability;
        let weighted = state.matrix() * C64::new(p.probability, 0.0);
        entry.1 = Some(match entry.1.take() {
            Some(m) => m + weighted,
            None => weighted,
        });
    }
    acc.into_iter()
        .map(|(class, (prob, mat, labels))| {
            let state = mat.and_then(|m| DensityMatrix::from_unnormalized(labels, m).0);
            (class, (prob, state))
        })
        .collect()
}

/// Largest negative eigenvalue across all POVM elements (should be ~0).
pub fn min_povm_eigenvalue(set: &PovmSet) -> f64 {
    set.elements
        .values()
        .flat_map(|e| {
            let mut v = hermitian_eigenvalues(&e.both);
            v.extend(hermitian_eigenvalues(&e.only_a));
            v.extend(hermitian_eigenvalues(&e.only_b));
            v.push(e.neither);
            v
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests;
