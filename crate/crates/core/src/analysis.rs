//! Correlations, error rates and witness fidelities from trial records.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::emitter::Basis;
use crate::fusion::{DetectionPattern, FusionOutcome, OutcomeClass};

/// Default number of standard deviations in [`entanglement_verdict`].
pub const DEFAULT_K: f64 = 1.0;

const RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no records for {condition} in basis {basis}")]
    EmptySelection { condition: String, basis: BasisPair },
    #[error("value {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("stabilizer sign must be +1 or -1, got {0}")]
    BadSign(i8),
    #[error("malformed record {trial}: {reason}")]
    MalformedRecord { trial: u64, reason: String },
    #[error("cannot parse basis pair {0:?}")]
    BasisParse(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Readout bases of spin a and spin b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisPair {
    pub a: Basis,
    pub b: Basis,
}

impl BasisPair {
    pub const fn new(a: Basis, b: Basis) -> Self {
        BasisPair { a, b }
    }

    pub const fn diagonal(b: Basis) -> Self {
        BasisPair { a: b, b }
    }

    /// The nine pairs, Z first.
    pub fn all() -> Vec<BasisPair> {
        Basis::ALL
            .iter()
            .flat_map(|&a| Basis::ALL.iter().map(move |&b| BasisPair::new(a, b)))
            .collect()
    }

    pub fn diagonals() -> Vec<BasisPair> {
        Basis::ALL.iter().map(|&b| BasisPair::diagonal(b)).collect()
    }
}

impl fmt::Display for BasisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.a, self.b)
    }
}

impl FromStr for BasisPair {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        let (Some(a), Some(b), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(AnalysisError::BasisParse(s.to_string()));
        };
        let parse = |c: char| c.to_string().parse::<Basis>().map_err(|_| AnalysisError::BasisParse(s.to_string()));
        Ok(BasisPair::new(parse(a)?, parse(b)?))
    }
}

impl Serialize for BasisPair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BasisPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One simulated (or measured) shot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub trial: u64,
    /// Master seed of the run.
    pub seed: u64,
    /// Random stream of this trial within the master seed.
    pub stream: u64,
    pub outcome: FusionOutcome,
    pub pattern: DetectionPattern,
    pub basis: BasisPair,
    /// Spin readouts `(a, b)`, each `+1` or `-1`; absent for erasures.
    pub outcomes: Option<(i8, i8)>,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |reason: &str| AnalysisError::MalformedRecord {
            trial: self.trial,
            reason: reason.to_string(),
        };
        match (self.outcome, self.outcomes) {
            (FusionOutcome::Erasure, Some(_)) => return Err(bad("erasure carries readouts")),
            (FusionOutcome::Erasure, None) => {}
            (_, None) => return Err(bad("readouts missing")),
            (_, Some((a, b))) => {
                if a.abs() != 1 || b.abs() != 1 {
                    return Err(bad("readouts must be +1 or -1"));
                }
            }
        }
        if self.pattern.classify() != self.outcome {
            return Err(bad("pattern does not match outcome"));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsvRow {
    trial: u64,
    seed: u64,
    stream: u64,
    outcome: FusionOutcome,
    pattern: DetectionPattern,
    basis: BasisPair,
    spin_a: Option<i8>,
    spin_b: Option<i8>,
}

impl From<&TrialRecord> for CsvRow {
    fn from(r: &TrialRecord) -> Self {
        CsvRow {
            trial: r.trial,
            seed: r.seed,
            stream: r.stream,
            outcome: r.outcome,
            pattern: r.pattern,
            basis: r.basis,
            spin_a: r.outcomes.map(|o| o.0),
            spin_b: r.outcomes.map(|o| o.1),
        }
    }
}

impl TryFrom<CsvRow> for TrialRecord {
    type Error = AnalysisError;

    fn try_from(r: CsvRow) -> Result<Self, Self::Error> {
        let outcomes = match (r.spin_a, r.spin_b) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => {
                return Err(AnalysisError::MalformedRecord {
                    trial: r.trial,
                    reason: "only one readout present".into(),
                })
            }
        };
        let rec = TrialRecord {
            trial: r.trial,
            seed: r.seed,
            stream: r.stream,
            outcome: r.outcome,
            pattern: r.pattern,
            basis: r.basis,
            outcomes,
        };
        rec.validate()?;
        Ok(rec)
    }
}

pub fn write_records_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(CsvRow::from(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<TrialRecord>, AnalysisError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<CsvRow>()
        .map(|row| TrialRecord::try_from(row?))
        .collect()
}

pub fn write_records_json<W: Write>(records: &[TrialRecord], w: W) -> Result<(), AnalysisError> {
    serde_json::to_writer(w, records)?;
    Ok(())
}

pub fn read_records_json<R: Read>(r: R) -> Result<Vec<TrialRecord>, AnalysisError> {
    let records: Vec<TrialRecord> = serde_json::from_reader(r)?;
    for rec in &records {
        rec.validate()?;
    }
    Ok(records)
}

/// Joint outcome counts in the order `++, +-, -+, --`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCounts(pub [u64; 4]);

impl JointCounts {
    pub fn add(&mut self, a: i8, b: i8) {
        let k = usize::from(a < 0) * 2 + usize::from(b < 0);
        self.0[k] += 1;
    }

    pub fn merge(&mut self, other: &JointCounts) {
        for k in 0..4 {
            self.0[k] += other.0[k];
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Mean product with Poisson error, `None` when empty.
    pub fn estimate(&self) -> Option<Estimate> {
        let n = self.total();
        if n == 0 {
            return None;
        }
        let [pp, pm, mp, mm] = self.0.map(|c| c as f64);
        let nf = n as f64;
        let value = (pp + mm - pm - mp) / nf;
        Some(Estimate {
            value,
            sigma: poisson_sigma(value, n),
            n,
        })
    }
}

/// First-order propagation of four independent Poisson counts to the
/// normalized correlator: `sqrt((1 - E^2) / N)`.
pub fn poisson_sigma(value: f64, n: u64) -> f64 {
    ((1.0 - value * value).max(0.0) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub condition: OutcomeClass,
    pub basis: BasisPair,
    pub counts: JointCounts,
    pub value: f64,
    pub sigma: f64,
}

/// Joint counts per (outcome class, basis pair).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrelationTable {
    counts: BTreeMap<(OutcomeClass, BasisPair), JointCounts>,
}

impl CorrelationTable {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let mut t = CorrelationTable::default();
        for r in records {
            t.add(r);
        }
        t
    }

    pub fn add(&mut self, r: &TrialRecord) {
        if let (Some(class), Some((a, b))) = (r.outcome.class(), r.outcomes) {
            self.counts.entry((class, r.basis)).or_default().add(a, b);
        }
    }

    pub fn merge(&mut self, other: &CorrelationTable) {
        for (k, c) in &other.counts {
            self.counts.entry(*k).or_default().merge(c);
        }
    }

    pub fn counts(&self, condition: OutcomeClass, basis: BasisPair) -> JointCounts {
        self.counts.get(&(condition, basis)).copied().unwrap_or_default()
    }

    pub fn estimate(&self, condition: OutcomeClass, basis: BasisPair) -> Result<Estimate, AnalysisError> {
        self.counts(condition, basis)
            .estimate()
            .ok_or_else(|| AnalysisError::EmptySelection {
                condition: condition.name().to_string(),
                basis,
            })
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn entries(&self) -> Vec<CorrelationEntry> {
        self.counts
            .iter()
            .filter_map(|(&(condition, basis), counts)| {
                counts.estimate().map(|e| CorrelationEntry {
                    condition,
                    basis,
                    counts: *counts,
                    value: e.value,
                    sigma: e.sigma,
                })
            })
            .collect()
    }
}

/// Expectation of the product of spin readouts over records of class
/// `condition` measured in `basis`.
pub fn conditional_expectation(
    records: &[TrialRecord],
    condition: OutcomeClass,
    basis: BasisPair,
) -> Result<Estimate, AnalysisError> {
    let mut c = JointCounts::default();
    for r in records {
        if r.basis == basis && condition.contains(r.outcome) {
            if let Some((a, b)) = r.outcomes {
                c.add(a, b);
            }
        }
    }
    c.estimate().ok_or_else(|| AnalysisError::EmptySelection {
        condition: condition.name().to_string(),
        basis,
    })
}

fn check_range(v: f64) -> Result<f64, AnalysisError> {
    if !v.is_finite() || v.abs() > 1.0 + RANGE_TOL {
        return Err(AnalysisError::OutOfRange(v));
    }
    Ok(v.clamp(-1.0, 1.0))
}

fn check_sign(s: i8) -> Result<f64, AnalysisError> {
    match s {
        1 => Ok(1.0),
        -1 => Ok(-1.0),
        other => Err(AnalysisError::BadSign(other)),
    }
}

/// Fraction of parity checks contradicting stabilizer `s * P`.
pub fn error_rate(expectation: f64, s: i8) -> Result<f64, AnalysisError> {
    let e = check_range(expectation)?;
    Ok((1.0 - check_sign(s)? * e) / 2.0)
}

/// Inverse of [`error_rate`].
pub fn expectation_from_rate(rate: f64, s: i8) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(AnalysisError::OutOfRange(rate));
    }
    Ok(check_sign(s)? * (1.0 - 2.0 * rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessTarget {
    PsiPlus,
    PsiMinus,
}

impl WitnessTarget {
    /// Stabilizer signs of ZZ, XX, YY.
    pub fn signs(self) -> [i8; 3] {
        match self {
            WitnessTarget::PsiPlus => [-1, 1, 1],
            WitnessTarget::PsiMinus => [-1, -1, -1],
        }
    }

    pub fn of_class(class: OutcomeClass) -> Option<Self> {
        match class {
            OutcomeClass::PsiPlus => Some(WitnessTarget::PsiPlus),
            OutcomeClass::PsiMinus => Some(WitnessTarget::PsiMinus),
            OutcomeClass::Failure => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Unclamped `(1 + sum_i s_i <P_i>)/4`.
    pub raw: f64,
    pub clamped: f64,
    pub was_clamped: bool,
}

/// Stabilizer witness for the Bell state `target` from ZZ, XX, YY.
pub fn witness_fidelity(zz: f64, xx: f64, yy: f64, target: WitnessTarget) -> Result<Witness, AnalysisError> {
    let v = [check_range(zz)?, check_range(xx)?, check_range(yy)?];
    let s = target.signs();
    let raw = (1.0 + (0..3).map(|i| f64::from(s[i]) * v[i]).sum::<f64>()) / 4.0;
    let clamped = raw.clamp(0.0, 1.0);
    Ok(Witness {
        raw,
        clamped,
        was_clamped: clamped != raw,
    })
}

/// Uncertainty of [`witness_fidelity`] from independent estimates.
pub fn witness_sigma(sigmas: [f64; 3]) -> f64 {
    sigmas.iter().map(|s| s * s).sum::<f64>().sqrt() / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Entangled,
    Inconclusive,
}

/// Entangled iff `fidelity - k sigma > 1/2`.
pub fn entanglement_verdict(fidelity: f64, sigma: f64, k: f64) -> Verdict {
    if fidelity - k * sigma > 0.5 {
        Verdict::Entangled
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerCheck {
    pub basis: BasisPair,
    /// Sign of the stabilizer for this condition.
    pub sign: i8,
    pub expectation: f64,
    pub sigma: f64,
    pub error_rate: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSummary {
    pub target: WitnessTarget,
    pub fidelity: f64,
    pub sigma: f64,
    pub verdict: Verdict,
    pub clamped: bool,
}

/// Stabilizer checks (and witness, for success classes) of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: OutcomeClass,
    pub checks: Vec<StabilizerCheck>,
    pub witness: Option<WitnessSummary>,
}

/// Bases checked for `class`: all three diagonals for success, ZZ only for
/// failure (XX and YY carry no information there).
pub fn reported_bases(class: OutcomeClass) -> Vec<(BasisPair, i8)> {
    match WitnessTarget::of_class(class) {
        Some(t) => BasisPair::diagonals().into_iter().zip(t.signs()).collect(),
        None => vec![(BasisPair::diagonal(Basis::Z), 1)],
    }
}

/// Per-condition checks; conditions lacking any required basis are skipped.
pub fn summarize(table: &CorrelationTable, k: f64) -> Vec<ConditionSummary> {
    let mut out = Vec::new();
    for class in OutcomeClass::ALL {
        let mut checks = Vec::new();
        for (basis, sign) in reported_bases(class) {
            let Ok(e) = table.estimate(class, basis) else {
                continue;
            };
            checks.push(StabilizerCheck {
                basis,
                sign,
                expectation: e.value,
                sigma: e.sigma,
                error_rate: (1.0 - f64::from(sign) * e.value) / 2.0,
                n: e.n,
            });
        }
        if checks.is_empty() {
            continue;
        }
        let witness = WitnessTarget::of_class(class).and_then(|target| {
            if checks.len() != 3 {
                return None;
            }
            let w = witness_fidelity(checks[0].expectation, checks[1].expectation, checks[2].expectation, target).ok()?;
            let sigma = witness_sigma([checks[0].sigma, checks[1].sigma, checks[2].sigma]);
            Some(WitnessSummary {
                target,
                fidelity: w.raw,
                sigma,
                verdict: entanglement_verdict(w.clamped, sigma, k),
                clamped: w.was_clamped,
            })
        });
        out.push(ConditionSummary {
            condition: class,
            checks,
            witness,
        });
    }
    out
}
