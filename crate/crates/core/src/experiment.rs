//! End-to-end runs: the two-resource-state fusion experiment, the oracle
//! sweep and the network mode.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    summarize, witness_fidelity, AnalysisError, BasisPair, ConditionSummary, CorrelationEntry, CorrelationTable,
    TrialRecord, WitnessTarget,
};
use crate::config::{trial_bases, ConfigError, Mode, RunConfig};
use crate::densop::{bell, Bell, DensityMatrix, DensopError};
use crate::emitter::{
    generate_resource_state, readout_observable, readout_spin, standard_sequence, EmitterError, EmitterNoise,
};
use crate::fusion::{
    effective_channel, fock_povms, herald_by_class, DetectionPattern, FusionError, FusionInput, FusionNoise,
    FusionOutcome, FusionSampler, OutcomeClass, PovmSet,
};
use crate::network::{run_network, CorrelationGraph, FusionRecord, NetworkError, SpinMeasurementRecord};

/// How per-trial random streams derive from the master seed.
pub const RNG_SCHEME: &str = "ChaCha8Rng::seed_from_u64(seed) with set_stream(trial index)";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid run: {0}")]
    Validation(String),
    #[error(transparent)]
    Emitter(#[from] EmitterError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Densop(#[from] DensopError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn require_mode(cfg: &RunConfig, mode: Mode) -> Result<(), RunError> {
    if cfg.mode != mode {
        return Err(RunError::Validation(format!("config mode is {:?}, expected {mode:?}", cfg.mode)));
    }
    cfg.validate()?;
    Ok(())
}

/// Resource states of cycles 0 and 1, ready to fuse.
pub fn fusion_input(emitter: &EmitterNoise) -> Result<FusionInput, RunError> {
    let seq = standard_sequence();
    let a = generate_resource_state(&seq, emitter, 0)?;
    let b = generate_resource_state(&seq, emitter, 1)?;
    Ok(FusionInput::from_resources(&a, &b)?)
}

/// Pattern distribution of the closed-form channel for these devices.
pub fn fusion_sampler(emitter: &EmitterNoise, fusion: &FusionNoise) -> Result<(FusionInput, FusionSampler), RunError> {
    let input = fusion_input(emitter)?;
    let patterns = effective_channel(fusion)?.povms.apply(&input)?;
    Ok((input, FusionSampler::new(patterns)))
}

/// Mean product of the two reported spin values.
pub fn readout_correlation(
    state: &DensityMatrix,
    input: &FusionInput,
    basis: BasisPair,
    noise: &EmitterNoise,
) -> Result<f64, RunError> {
    let rho = state.reorder(&input.spins)?;
    let obs = readout_observable(basis.a, noise).kronecker(&readout_observable(basis.b, noise));
    Ok((rho.matrix() * obs).trace().re)
}

/// Infinite-shot statistics of one conditioning class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPrediction {
    pub condition: OutcomeClass,
    pub probability: f64,
    /// Readout correlation and error rate per reported basis pair.
    pub checks: Vec<PredictedCheck>,
    /// Witness from the readout correlations (success classes only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<f64>,
    /// Overlap of the heralded spin state with the target Bell state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedCheck {
    pub basis: BasisPair,
    pub expectation: f64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub outcome_probabilities: BTreeMap<String, f64>,
    pub conditions: Vec<ClassPrediction>,
}

impl Prediction {
    pub fn class(&self, c: OutcomeClass) -> Option<&ClassPrediction> {
        self.conditions.iter().find(|p| p.condition == c)
    }

    /// Error rates in the order psi+ (ZZ, XX, YY), psi- (ZZ, XX, YY), failure ZZ;
    /// missing classes read as 0.5.
    pub fn rate_vector(&self) -> [f64; 7] {
        let mut out = [0.5; 7];
        for (k, class) in OutcomeClass::ALL.iter().enumerate() {
            if let Some(p) = self.class(*class) {
                for (j, c) in p.checks.iter().enumerate() {
                    out[3 * k + j] = c.error_rate;
                }
            }
        }
        out
    }
}

/// Exact (analytic channel path) conditional statistics.
pub fn predict(emitter: &EmitterNoise, fusion: &FusionNoise) -> Result<Prediction, RunError> {
    let (input, sampler) = fusion_sampler(emitter, fusion)?;
    let mut outcome_probabilities: BTreeMap<String, f64> =
        FusionOutcome::ALL.iter().map(|o| (o.name().to_string(), 0.0)).collect();
    for p in sampler.patterns() {
        *outcome_probabilities.get_mut(p.outcome.name()).expect("known outcome") += p.probability;
    }
    let classes = herald_by_class(sampler.patterns());
    let mut conditions = Vec::new();
    for (class, (probability, state)) in classes {
        let Some(state) = state else { continue };
        let mut checks = Vec::new();
        for (basis, sign) in crate::analysis::reported_bases(class) {
            let e = readout_correlation(&state, &input, basis, emitter)?;
            checks.push(PredictedCheck {
                basis,
                expectation: e,
                error_rate: (1.0 - f64::from(sign) * e) / 2.0,
            });
        }
        let target = WitnessTarget::of_class(class);
        let witness = match target {
            Some(t) => Some(witness_fidelity(checks[0].expectation, checks[1].expectation, checks[2].expectation, t)?.raw),
            None => None,
        };
        let state_fidelity = match target {
            Some(WitnessTarget::PsiPlus) => Some(state.reorder(&input.spins)?.fidelity_pure(&bell(Bell::PsiPlus))?),
            Some(WitnessTarget::PsiMinus) => Some(state.reorder(&input.spins)?.fidelity_pure(&bell(Bell::PsiMinus))?),
            None => None,
        };
        conditions.push(ClassPrediction {
            condition: class,
            probability,
            checks,
            witness,
            state_fidelity,
        });
    }
    Ok(Prediction {
        outcome_probabilities,
        conditions,
    })
}

/// Report of the `experiment` mode.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub rng: &'static str,
    pub shots: u64,
    pub config: RunConfig,
    pub basis_allocation: Vec<(BasisPair, u64)>,
    pub outcome_counts: BTreeMap<String, u64>,
    pub success_frequency: f64,
    pub correlations: Vec<CorrelationEntry>,
    pub conditions: Vec<ConditionSummary>,
    pub predicted: Prediction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

impl ExperimentReport {
    pub fn condition(&self, c: OutcomeClass) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|s| s.condition == c)
    }
}

pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub records: Vec<TrialRecord>,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn simulate_trial(
    trial: u64,
    seed: u64,
    basis: BasisPair,
    input: &FusionInput,
    sampler: &FusionSampler,
    noise: &EmitterNoise,
) -> Result<TrialRecord, RunError> {
    let mut rng = trial_rng(seed, trial);
    let (outcome, pattern, state) = sampler.sample(&mut rng);
    let outcomes = match state {
        Some(st) => {
            let ra = readout_spin(st, input.spins[0], basis.a, noise, &mut rng)?;
            let rb = readout_spin(&ra.state, input.spins[1], basis.b, noise, &mut rng)?;
            Some((ra.outcome, rb.outcome))
        }
        None => None,
    };
    Ok(TrialRecord {
        trial,
        seed,
        stream: trial,
        outcome,
        pattern,
        basis,
        outcomes,
    })
}

/// Monte Carlo of the two-cycle fusion experiment: per shot, sample a
/// detection pattern and read both spins in the scheduled bases.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentRun, RunError> {
    require_mode(cfg, Mode::Experiment)?;
    let start = std::time::Instant::now();
    let shots = cfg.experiment.shots;
    let seed = cfg.experiment.seed;
    let allocation = cfg.schedule.allocate(shots)?;
    let bases = trial_bases(&allocation);
    let (input, sampler) = fusion_sampler(&cfg.emitter, &cfg.fusion)?;
    let records = bases
        .par_iter()
        .enumerate()
        .map(|(i, &b)| simulate_trial(i as u64, seed, b, &input, &sampler, &cfg.emitter))
        .collect::<Result<Vec<_>, _>>()?;
    let report = build_report(cfg, allocation, &records)?;
    let runtime_s = cfg.output.include_runtime.then(|| start.elapsed().as_secs_f64());
    Ok(ExperimentRun {
        report: ExperimentReport { runtime_s, ..report },
        records,
    })
}

/// Aggregates `records` into a report for `cfg`.
pub fn build_report(
    cfg: &RunConfig,
    basis_allocation: Vec<(BasisPair, u64)>,
    records: &[TrialRecord],
) -> Result<ExperimentReport, RunError> {
    let mut outcome_counts: BTreeMap<String, u64> =
        FusionOutcome::ALL.iter().map(|o| (o.name().to_string(), 0)).collect();
    for r in records {
        *outcome_counts.get_mut(r.outcome.name()).expect("known outcome") += 1;
    }
    let successes = records.iter().filter(|r| r.outcome.is_success()).count();
    let table = CorrelationTable::from_records(records);
    Ok(ExperimentReport {
        schema_version: crate::config::SCHEMA_VERSION,
        mode: Mode::Experiment,
        seed: cfg.experiment.seed,
        rng: RNG_SCHEME,
        shots: records.len() as u64,
        config: cfg.clone(),
        basis_allocation,
        outcome_counts,
        success_frequency: if records.is_empty() {
            0.0
        } else {
            successes as f64 / records.len() as f64
        },
        correlations: table.entries(),
        conditions: summarize(&table, cfg.analysis.k),
        predicted: predict(&cfg.emitter, &cfg.fusion)?,
        runtime_s: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OraclePoint {
    pub indistinguishability: f64,
    pub eta: f64,
    pub p_bg: f64,
    pub number_resolving: bool,
    pub povm_deviation: f64,
    pub probability_deviation: f64,
    pub trace_distance: f64,
}

impl OraclePoint {
    pub fn max_deviation(&self) -> f64 {
        self.povm_deviation.max(self.probability_deviation).max(self.trace_distance)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub tolerance: f64,
    pub max_povm_deviation: f64,
    pub max_probability_deviation: f64,
    pub max_trace_distance: f64,
    pub passed: bool,
    pub points: Vec<OraclePoint>,
}

fn compare_on(input: &FusionInput, oracle: &PovmSet, channel: &PovmSet) -> Result<(f64, f64), RunError> {
    let a = oracle.apply(input)?;
    let b = channel.apply(input)?;
    let patterns: std::collections::BTreeSet<DetectionPattern> = a.iter().chain(&b).map(|h| h.pattern).collect();
    let (mut dp, mut dt) = (0.0f64, 0.0f64);
    for p in patterns {
        let x = a.iter().find(|h| h.pattern == p);
        let y = b.iter().find(|h| h.pattern == p);
        let px = x.map_or(0.0, |h| h.probability);
        let py = y.map_or(0.0, |h| h.probability);
        dp = dp.max((px - py).abs());
        match (x.and_then(|h| h.state.as_ref()), y.and_then(|h| h.state.as_ref())) {
            (Some(sx), Some(sy)) => dt = dt.max(sx.trace_distance(sy)?),
            (None, None) => {}
            _ => {
                if px.max(py) > crate::densop::NULL_PROB * 1e3 {
                    dt = dt.max(1.0);
                }
            }
        }
    }
    Ok((dp, dt))
}

/// Sweeps the configured grid and compares the closed-form channel with
/// the Fock oracle on ideal and configured resource states.
pub fn run_oracle_check(cfg: &RunConfig) -> Result<OracleReport, RunError> {
    require_mode(cfg, Mode::OracleCheck)?;
    let oc = &cfg.oracle_check;
    let inputs = [fusion_input(&EmitterNoise::ideal())?, fusion_input(&cfg.emitter)?];
    let mut grid = Vec::new();
    for &v in &oc.indistinguishability {
        for &eta in &oc.eta {
            for &p_bg in &oc.p_bg {
                for &number_resolving in &oc.number_resolving {
                    grid.push(FusionNoise {
                        indistinguishability: v,
                        eta,
                        p_bg,
                        number_resolving,
                    });
                }
            }
        }
    }
    let points = grid
        .par_iter()
        .map(|n| -> Result<OraclePoint, RunError> {
            let oracle = fock_povms(n)?;
            let mut channel = effective_channel(n)?.povms;
            if oc.corruption != 0.0 {
                corrupt(&mut channel, oc.corruption);
            }
            let mut point = OraclePoint {
                indistinguishability: n.indistinguishability,
                eta: n.eta,
                p_bg: n.p_bg,
                number_resolving: n.number_resolving,
                povm_deviation: oracle.max_deviation(&channel),
                probability_deviation: 0.0,
                trace_distance: 0.0,
            };
            for input in &inputs {
                let (dp, dt) = compare_on(input, &oracle, &channel)?;
                point.probability_deviation = point.probability_deviation.max(dp);
                point.trace_distance = point.trace_distance.max(dt);
            }
            Ok(point)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let max = |f: fn(&OraclePoint) -> f64| points.iter().map(f).fold(0.0, f64::max);
    let max_povm_deviation = max(|p| p.povm_deviation);
    let max_probability_deviation = max(|p| p.probability_deviation);
    let max_trace_distance = max(|p| p.trace_distance);
    Ok(OracleReport {
        schema_version: crate::config::SCHEMA_VERSION,
        mode: Mode::OracleCheck,
        tolerance: oc.tolerance,
        passed: max_povm_deviation.max(max_probability_deviation).max(max_trace_distance) <= oc.tolerance,
        max_povm_deviation,
        max_probability_deviation,
        max_trace_distance,
        points,
    })
}

/// Moves weight `delta` of the psi+ herald into the psi- herald on one
/// success pattern. The result is still a valid measurement, just the wrong one.
fn corrupt(set: &mut PovmSet, delta: f64) {
    let key: DetectionPattern = "e_c,l_c".parse().expect("valid pattern");
    if let Some(e) = set.elements.get_mut(&key) {
        let plus = crate::densop::projector(&bell(Bell::PsiPlus));
        let minus = crate::densop::projector(&bell(Bell::PsiMinus));
        e.both += (minus - plus) * crate::densop::C64::new(delta.clamp(-0.25, 0.25), 0.0);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NetworkRunReport {
    pub run: u64,
    pub records: Vec<FusionRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub spin_measurements: Vec<SpinMeasurementRecord>,
    pub graph: CorrelationGraph,
    pub adjacency: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NetworkReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub rng: &'static str,
    pub p_success: f64,
    pub p_erasure: f64,
    pub outcome_counts: BTreeMap<String, u64>,
    pub success_frequency: f64,
    pub runs: Vec<NetworkRunReport>,
}

/// Samples the configured fusion network `runs` times.
pub fn run_network_mode(cfg: &RunConfig) -> Result<NetworkReport, RunError> {
    require_mode(cfg, Mode::Network)?;
    let net = cfg
        .network
        .as_ref()
        .ok_or_else(|| RunError::Validation("network mode needs a [network] section".into()))?;
    let p_erasure = net.p_erasure.unwrap_or(1.0 - cfg.fusion.eta * cfg.fusion.eta);
    let seed = cfg.experiment.seed;
    let runs = (0..net.runs)
        .into_par_iter()
        .map(|i| -> Result<NetworkRunReport, RunError> {
            let mut rng = trial_rng(seed, i);
            let run = run_network(&net.spec, net.p_success, p_erasure, &mut rng)?;
            Ok(NetworkRunReport {
                run: i,
                records: run.records,
                spin_measurements: run.spin_records,
                adjacency: run.graph.adjacency(),
                graph: run.graph,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut outcome_counts: BTreeMap<String, u64> =
        FusionOutcome::ALL.iter().map(|o| (o.name().to_string(), 0)).collect();
    let mut total = 0u64;
    let mut successes = 0u64;
    for r in runs.iter().flat_map(|r| &r.records) {
        *outcome_counts.get_mut(r.outcome.name()).expect("known outcome") += 1;
        total += 1;
        successes += u64::from(r.outcome.is_success());
    }
    Ok(NetworkReport {
        schema_version: crate::config::SCHEMA_VERSION,
        mode: Mode::Network,
        seed,
        rng: RNG_SCHEME,
        p_success: net.p_success,
        p_erasure,
        outcome_counts,
        success_frequency: if total == 0 { 0.0 } else { successes as f64 / total as f64 },
        runs,
    })
}
