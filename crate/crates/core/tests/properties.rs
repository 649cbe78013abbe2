use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tbfusion::analysis::{
    error_rate, expectation_from_rate, poisson_sigma, witness_fidelity, BasisPair, CorrelationTable, WitnessTarget,
};
use tbfusion::config::{trial_bases, BasisSchedule, Mode, RunConfig, SchedulePreset, WeightedBasis};
use tbfusion::densop::{bell, Bell, CMatrix, DensityMatrix, KrausChannel, PauliString, QubitLabel, C64};
use tbfusion::emitter::{
    generate_resource_state, readout_spin, spin, standard_sequence, Basis, EmitterNoise,
};
use tbfusion::experiment::{fusion_input, run_experiment};
use tbfusion::fusion::{effective_channel, fock_fusion_oracle, DetectionPattern, FusionNoise};
use tbfusion::network::{run_network, NetworkSpec};

fn labels(n: usize) -> Vec<QubitLabel> {
    (0..n as u32).map(QubitLabel::Spin).collect()
}

fn random_state(n: usize, entries: &[(f64, f64)]) -> DensityMatrix {
    let d = 1 << n;
    let a = CMatrix::from_fn(d, d, |i, j| {
        let (re, im) = entries[(i * d + j) % entries.len()];
        C64::new(re + if i == j { 0.1 } else { 0.0 }, im)
    });
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::from_matrix(labels(n), m / tr).unwrap()
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16..=64)
}

fn pauli_string(n: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['I', 'X', 'Y', 'Z']), n).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn channels_keep_trace_and_positivity(e in entries(), p in 0.0..1.0f64, g in 0.0..1.0f64) {
        let rho = random_state(3, &e);
        let out = rho
            .apply_channel(&KrausChannel::phase_flip(p), &[QubitLabel::Spin(0)])
            .unwrap()
            .apply_channel(&KrausChannel::amplitude_damping(g), &[QubitLabel::Spin(2)])
            .unwrap()
            .apply_channel(&KrausChannel::bit_flip(p * g), &[QubitLabel::Spin(1)])
            .unwrap();
        prop_assert!((out.trace() - 1.0).abs() < 1e-12);
        prop_assert!(out.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn reorder_preserves_expectations(e in entries(), p in pauli_string(3)) {
        let rho = random_state(3, &e);
        let order = [QubitLabel::Spin(2), QubitLabel::Spin(0), QubitLabel::Spin(1)];
        let re = rho.reorder(&order).unwrap();
        let ps: PauliString = p.parse().unwrap();
        let letters: Vec<char> = p.chars().collect();
        let permuted: String = [letters[2], letters[0], letters[1]].iter().collect();
        let a = rho.expect(&ps).unwrap();
        let b = re.expect(&permuted.parse().unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_keeps_marginals(e in entries(), p in pauli_string(2)) {
        let rho = random_state(3, &e);
        let red = rho.partial_trace(&[QubitLabel::Spin(0), QubitLabel::Spin(2)]).unwrap();
        let letters: Vec<char> = p.chars().collect();
        let full: String = [letters[0], 'I', letters[1]].iter().collect();
        let a = rho.expect(&full.parse().unwrap()).unwrap();
        let b = red.expect(&p.parse().unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((red.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn witness_equals_bell_fidelity_for_exact_expectations(e in entries()) {
        let rho = random_state(2, &e);
        let ex = |s: &str| rho.expect(&s.parse().unwrap()).unwrap();
        for (target, b) in [(WitnessTarget::PsiPlus, Bell::PsiPlus), (WitnessTarget::PsiMinus, Bell::PsiMinus)] {
            let w = witness_fidelity(ex("ZZ"), ex("XX"), ex("YY"), target).unwrap();
            let f = rho.fidelity_pure(&bell(b)).unwrap();
            prop_assert!((w.raw - f).abs() < 1e-12);
            prop_assert!(!w.was_clamped);
        }
    }

    #[test]
    fn witness_is_affine(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, d in -1.0..1.0f64, t in 0.0..1.0f64) {
        let mix = |x: f64, y: f64| t * x + (1.0 - t) * y;
        for target in [WitnessTarget::PsiPlus, WitnessTarget::PsiMinus] {
            let w1 = witness_fidelity(a, b, c, target).unwrap().raw;
            let w2 = witness_fidelity(d, c, b, target).unwrap().raw;
            let wm = witness_fidelity(mix(a, d), mix(b, c), mix(c, b), target).unwrap().raw;
            prop_assert!((wm - mix(w1, w2)).abs() < 1e-12);
        }
    }

    #[test]
    fn error_rate_inverts(e in -1.0..1.0f64, neg in any::<bool>()) {
        let s = if neg { -1 } else { 1 };
        let r = error_rate(e, s).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((expectation_from_rate(r, s).unwrap() - e).abs() < 1e-12);
        prop_assert!((error_rate(e, -s).unwrap() - (1.0 - r)).abs() < 1e-12);
    }

    #[test]
    fn sigma_scales_as_inverse_root_n(v in -0.99..0.99f64, n in 1u64..100_000, k in 1u64..50) {
        let ratio = poisson_sigma(v, n) / poisson_sigma(v, n * k * k);
        prop_assert!((ratio - k as f64).abs() < 1e-9 * k as f64);
    }

    #[test]
    fn dephasing_never_helps(p in 0.0..0.5f64, dp in 0.0..0.2f64) {
        let fid = |p: f64| {
            let noise = EmitterNoise { p_deph_cycle: p, ..EmitterNoise::ideal() };
            generate_resource_state(&standard_sequence(), &noise, 0).unwrap().fidelity_to_target()
        };
        prop_assert!(fid((p + dp).min(0.5)) <= fid(p) + 1e-12);
    }

    #[test]
    fn fusion_probabilities_sum_to_one(v in 0.0..=1.0f64, eta in 0.0..=1.0f64, p_bg in 0.0..0.3f64, nr in any::<bool>(), deph in 0.0..0.3f64) {
        let input = fusion_input(&EmitterNoise { p_deph_cycle: deph, ..EmitterNoise::ideal() }).unwrap();
        let noise = FusionNoise { indistinguishability: v, eta, p_bg, number_resolving: nr };
        let fock: f64 = fock_fusion_oracle(&input, &noise).unwrap().iter().map(|h| h.probability).sum();
        let chan: f64 = effective_channel(&noise).unwrap().povms.apply(&input).unwrap().iter().map(|h| h.probability).sum();
        prop_assert!((fock - 1.0).abs() < 1e-10);
        prop_assert!((chan - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pattern_text_round_trips(counts in prop::array::uniform4(0u8..3)) {
        let p = DetectionPattern::from_counts(counts);
        let back: DetectionPattern = p.to_string().parse().unwrap();
        prop_assert_eq!(back, p);
        prop_assert_eq!(back.classify(), p.classify());
    }

    #[test]
    fn network_tableau_stays_valid(n in 2u32..6, seed in any::<u64>(), ps in 0.0..=1.0f64, pe in 0.0..0.5f64) {
        let spec = NetworkSpec::chain(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = run_network(&spec, ps, pe, &mut rng).unwrap();
        prop_assert!(run.tableau.validate().is_ok());
        prop_assert_eq!(run.records.len(), spec.fusions.len());
        for e in &run.graph.edges {
            prop_assert!(e.a != e.b);
        }
    }
}

fn schedule_strategy() -> impl Strategy<Value = BasisSchedule> {
    let preset = prop::sample::select(vec![SchedulePreset::Full, SchedulePreset::Diagonal]).prop_map(BasisSchedule::preset);
    let custom = prop::collection::vec((0usize..9, 1u32..5), 1..6).prop_map(|v| {
        let all = BasisPair::all();
        let mut pairs: Vec<WeightedBasis> = Vec::new();
        for (i, w) in v {
            if pairs.iter().all(|p| p.basis != all[i]) {
                pairs.push(WeightedBasis { basis: all[i], weight: w });
            }
        }
        BasisSchedule { preset: None, pairs }
    });
    prop_oneof![preset, custom]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trips(shots in 1u64..1_000_000, seed in any::<u64>(), deph in 0.0..0.5f64, v in 0.0..=1.0f64,
                          nr in any::<bool>(), sched in schedule_strategy(), k in 0.0..5.0f64) {
        let mut cfg = RunConfig::ideal(shots, seed);
        cfg.emitter.p_deph_cycle = deph;
        cfg.fusion.indistinguishability = v;
        cfg.fusion.number_resolving = nr;
        cfg.schedule = sched;
        cfg.analysis.k = k;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn shots_are_accounted(shots in 1u64..1500, seed in any::<u64>(), sched in schedule_strategy(), eta in 0.0..=1.0f64) {
        let mut cfg = RunConfig::ideal(shots, seed);
        cfg.mode = Mode::Experiment;
        cfg.schedule = sched;
        cfg.fusion.eta = eta;
        let alloc = cfg.schedule.allocate(shots).unwrap();
        prop_assert_eq!(alloc.iter().map(|a| a.1).sum::<u64>(), shots);
        prop_assert_eq!(trial_bases(&alloc).len() as u64, shots);
        let run = run_experiment(&cfg).unwrap();
        prop_assert_eq!(run.report.outcome_counts.values().sum::<u64>(), shots);
        prop_assert_eq!(run.records.len() as u64, shots);
        // aggregation is an associative merge
        let cut = (seed % shots) as usize;
        let mut merged = CorrelationTable::from_records(&run.records[..cut]);
        merged.merge(&CorrelationTable::from_records(&run.records[cut..]));
        prop_assert_eq!(merged, CorrelationTable::from_records(&run.records));
    }
}

#[test]
fn readout_confusion_within_three_sigma() {
    const N: u32 = 20_000;
    let zero = DensityMatrix::from_pure(vec![spin(0)], &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
    let one = DensityMatrix::from_pure(vec![spin(0)], &[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
    for (seed, f0, f1) in [(1u64, 0.02, 0.95), (2, 0.1, 0.8), (3, 0.3, 0.6)] {
        let noise = EmitterNoise {
            f_read_0: f0,
            f_read_1: f1,
            ..EmitterNoise::ideal()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (state, p_click) in [(&zero, f0), (&one, f1)] {
            let clicks = (0..N)
                .filter(|_| readout_spin(state, spin(0), Basis::Z, &noise, &mut rng).unwrap().outcome == -1)
                .count() as f64;
            let sigma = (p_click * (1.0 - p_click) / N as f64).sqrt();
            let freq = clicks / N as f64;
            assert!((freq - p_click).abs() <= 3.0 * sigma, "seed {seed}: {freq} vs {p_click}");
        }
    }
}
