//! Detection patterns at the two beam-splitter outputs and their meaning.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::densop::TimeBin;

use super::FusionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    C,
    D,
}

impl Port {
    pub fn index(self) -> usize {
        match self {
            Port::C => 0,
            Port::D => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Port::C => 'c',
            Port::D => 'd',
        }
    }
}

/// One detector: an output port resolved in one time bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Detector {
    pub port: Port,
    pub bin: TimeBin,
}

impl Detector {
    pub const ALL: [Detector; 4] = [
        Detector::new(Port::C, TimeBin::Early),
        Detector::new(Port::D, TimeBin::Early),
        Detector::new(Port::C, TimeBin::Late),
        Detector::new(Port::D, TimeBin::Late),
    ];

    pub const fn new(port: Port, bin: TimeBin) -> Self {
        Self { port, bin }
    }

    pub fn index(self) -> usize {
        self.bin.index() * 2 + self.port.index()
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.bin.symbol(), self.port.symbol())
    }
}

/// Click counts per detector, indexed by [`Detector::index`].
///
/// Text form lists one token per click, e.g. `e_c,l_d` or `e_c,e_c` for two
/// photons in the same detector; `-` is the empty pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DetectionPattern {
    counts: [u8; 4],
}

impl DetectionPattern {
    pub const MAX_CLICKS: u32 = 64;

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [u8; 4]) -> Self {
        Self { counts }
    }

    pub fn from_clicks(clicks: &[Detector]) -> Self {
        let mut counts = [0u8; 4];
        for d in clicks {
            counts[d.index()] = counts[d.index()].saturating_add(1);
        }
        Self { counts }
    }

    pub fn counts(&self) -> [u8; 4] {
        self.counts
    }

    pub fn count(&self, d: Detector) -> u8 {
        self.counts[d.index()]
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().map(|&c| u32::from(c)).sum()
    }

    /// Adds one click on every detector in `mask` (bit `k` is detector `k`).
    /// Threshold detectors cannot tell one photon from several.
    pub fn with_background(&self, mask: u8, number_resolving: bool) -> Self {
        let mut counts = self.counts;
        for (k, c) in counts.iter_mut().enumerate() {
            if mask & (1 << k) != 0 {
                *c = c.saturating_add(1);
            }
            if !number_resolving {
                *c = (*c).min(1);
            }
        }
        Self { counts }
    }

    pub fn classify(&self) -> FusionOutcome {
        classify_pattern(self)
    }
}

impl fmt::Display for DetectionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.total() == 0 {
            return write!(f, "-");
        }
        let mut first = true;
        for d in Detector::ALL {
            for _ in 0..self.count(d) {
                if !first {
                    write!(f, ",")?;
                }
                write!(f, "{d}")?;
                first = false;
            }
        }
        Ok(())
    }
}

impl FromStr for DetectionPattern {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "-" {
            return Ok(Self::empty());
        }
        let mut counts = [0u8; 4];
        let mut total = 0u32;
        for token in s.split(',') {
            let token = token.trim();
            let bad = || FusionError::PatternParse(token.to_string());
            let mut chars = token.chars();
            let bin = match chars.next() {
                Some('e') => TimeBin::Early,
                Some('l') => TimeBin::Late,
                _ => return Err(bad()),
            };
            if chars.next() != Some('_') {
                return Err(bad());
            }
            let port = match chars.next() {
                Some('c') => Port::C,
                Some('d') => Port::D,
                _ => return Err(bad()),
            };
            if chars.next().is_some() {
                return Err(bad());
            }
            total += 1;
            if total > Self::MAX_CLICKS {
                return Err(FusionError::PatternParse(format!(
                    "more than {} clicks",
                    Self::MAX_CLICKS
                )));
            }
            counts[Detector::new(port, bin).index()] += 1;
        }
        Ok(Self { counts })
    }
}

impl Serialize for DetectionPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DetectionPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FusionOutcome {
    SuccessPsiPlus,
    SuccessPsiMinus,
    FailurePhiSubspace(TimeBin),
    Erasure,
}

impl FusionOutcome {
    pub const ALL: [FusionOutcome; 5] = [
        FusionOutcome::SuccessPsiPlus,
        FusionOutcome::SuccessPsiMinus,
        FusionOutcome::FailurePhiSubspace(TimeBin::Early),
        FusionOutcome::FailurePhiSubspace(TimeBin::Late),
        FusionOutcome::Erasure,
    ];

    pub fn is_success(self) -> bool {
        matches!(self, FusionOutcome::SuccessPsiPlus | FusionOutcome::SuccessPsiMinus)
    }

    pub fn class(self) -> Option<OutcomeClass> {
        match self {
            FusionOutcome::SuccessPsiPlus => Some(OutcomeClass::PsiPlus),
            FusionOutcome::SuccessPsiMinus => Some(OutcomeClass::PsiMinus),
            FusionOutcome::FailurePhiSubspace(_) => Some(OutcomeClass::Failure),
            FusionOutcome::Erasure => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FusionOutcome::SuccessPsiPlus => "psi_plus",
            FusionOutcome::SuccessPsiMinus => "psi_minus",
            FusionOutcome::FailurePhiSubspace(TimeBin::Early) => "phi_early",
            FusionOutcome::FailurePhiSubspace(TimeBin::Late) => "phi_late",
            FusionOutcome::Erasure => "erasure",
        }
    }
}

impl fmt::Display for FusionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionOutcome {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FusionOutcome::ALL
            .into_iter()
            .find(|o| o.name() == s.trim())
            .ok_or_else(|| FusionError::PatternParse(format!("unknown fusion outcome {s:?}")))
    }
}

impl Serialize for FusionOutcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FusionOutcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Conditioning classes used in the analysis: the two success projections
/// and the phi-subspace failure with both bins pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    PsiPlus,
    PsiMinus,
    Failure,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 3] = [OutcomeClass::PsiPlus, OutcomeClass::PsiMinus, OutcomeClass::Failure];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeClass::PsiPlus => "psi_plus",
            OutcomeClass::PsiMinus => "psi_minus",
            OutcomeClass::Failure => "failure",
        }
    }

    pub fn contains(self, outcome: FusionOutcome) -> bool {
        outcome.class() == Some(self)
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exactly two clicks decide the fusion: early and late at the same port is
/// psi+, at different ports psi-, both in one bin is a phi-subspace failure.
/// Any other click count is an erasure.
pub fn classify_pattern(p: &DetectionPattern) -> FusionOutcome {
    if p.total() != 2 {
        return FusionOutcome::Erasure;
    }
    let early: u8 = p.counts[0] + p.counts[1];
    let late: u8 = p.counts[2] + p.counts[3];
    match (early, late) {
        (2, 0) => FusionOutcome::FailurePhiSubspace(TimeBin::Early),
        (0, 2) => FusionOutcome::FailurePhiSubspace(TimeBin::Late),
        _ => {
            let same_port = (p.counts[0] == 1 && p.counts[2] == 1) || (p.counts[1] == 1 && p.counts[3] == 1);
            if same_port {
                FusionOutcome::SuccessPsiPlus
            } else {
                FusionOutcome::SuccessPsiMinus
            }
        }
    }
}
