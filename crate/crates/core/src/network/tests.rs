use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::crosscheck::standard_cases;
use super::*;

fn ps(s: &str) -> PauliString {
    s.parse().unwrap()
}

fn tab(n: usize, gens: &[&str]) -> StabilizerTableau {
    let gens: Vec<PauliString> = gens.iter().map(|g| ps(g)).collect();
    StabilizerTableau::from_generators(n, &gens).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn zz_on_psi_minus_is_minus_one() {
    let mut t = tab(2, &["-ZZ", "-XX"]);
    let before = t.clone();
    assert_eq!(t.measure_joint_pauli(&ps("ZZ"), &mut rng(0)).unwrap(), -1);
    assert_eq!(t, before);
    assert_eq!(t.expectation(&ps("YY")).unwrap(), -1);
}

#[test]
fn xx_on_zero_state_is_random() {
    let mut seen = BTreeSet::new();
    for seed in 0..32 {
        let mut t = StabilizerTableau::zero_state(2);
        let s = t.measure_joint_pauli(&ps("XX"), &mut rng(seed)).unwrap();
        seen.insert(s);
        let want = if s > 0 { ps("XX") } else { ps("-XX") };
        assert_eq!(t.expectation(&want).unwrap(), 1);
        assert_eq!(t.expectation(&ps("ZZ")).unwrap(), 1);
        assert_eq!(t.expectation(&ps("ZI")).unwrap(), 0);
        t.validate().unwrap();
    }
    assert_eq!(seen.len(), 2);
}

#[test]
fn repeated_measurement_agrees() {
    for seed in 0..16 {
        let mut t = tab(1, &["X"]);
        let mut r = rng(seed);
        let a = t.measure_joint_pauli(&ps("Z"), &mut r).unwrap();
        let b = t.measure_joint_pauli(&ps("Z"), &mut r).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn mixed_state_measurement_adds_generator() {
    let mut t = StabilizerTableau::new(2);
    assert_eq!(t.expectation(&ps("ZI")).unwrap(), 0);
    let s = t.measure_joint_pauli(&ps("ZI"), &mut rng(3)).unwrap();
    assert_eq!(t.rank(), 1);
    assert_eq!(t.expectation(&ps("ZI")).unwrap(), s);
}

#[test]
fn forced_outcome_rejects_impossible_sign() {
    let mut t = tab(2, &["ZZ", "-XX"]);
    let before = t.clone();
    assert!(matches!(t.measure_forced(&ps("ZZ"), -1), Err(NetworkError::ImpossibleOutcome(_))));
    assert_eq!(t, before);
    assert_eq!(t.measure_forced(&ps("ZI"), -1).unwrap(), -1);
    assert_eq!(t.expectation(&ps("IZ")).unwrap(), -1);
}

#[test]
fn tableau_rejects_bad_generators() {
    assert!(StabilizerTableau::from_generators(2, &[ps("XI"), ps("ZI")]).is_err());
    assert!(StabilizerTableau::from_generators(2, &[ps("ZZ"), ps("ZZ")]).is_err());
    assert!(StabilizerTableau::from_generators(2, &[ps("ZZZ")]).is_err());
    let t = tab(2, &["ZZ"]);
    assert!(matches!(t.expectation(&ps("Z")), Err(NetworkError::PauliLength { .. })));
}

#[test]
fn discard_keeps_trivially_acting_elements() {
    let mut t = tab(3, &["ZZI", "XXX", "IZZ"]);
    t.discard(2).unwrap();
    assert_eq!(t.expectation(&ps("ZZI")).unwrap(), 1);
    assert_eq!(t.expectation(&ps("XXI")).unwrap(), 0);
    assert_eq!(t.rank(), 1);
    assert!(matches!(t.expectation(&ps("IIZ")), Err(NetworkError::UnsupportedQubit(2))));
    assert!(t.discard(2).is_err());
    t.validate().unwrap();
}

fn two_pairs() -> (NetworkSpec, StabilizerTableau) {
    let spec = NetworkSpec::two_cycle();
    let t = spec.initial_tableau().unwrap();
    (spec, t)
}

#[test]
fn success_leaves_bell_pair_on_spins() {
    let (spec, mut t) = two_pairs();
    let rec = fuse(&spec, &mut t, 0, QubitRef::photon(0, 0), QubitRef::photon(0, 1), FusionOutcome::SuccessPsiPlus).unwrap();
    assert_eq!((rec.zz, rec.xx), (Some(-1), Some(1)));
    assert_eq!(t.expectation(&ps("-ZIZI")).unwrap(), 1);
    assert_eq!(t.expectation(&ps("XIXI")).unwrap(), 1);
    assert_eq!(t.expectation(&ps("YIYI")).unwrap(), 1);
    assert!(t.is_pure());
    t.validate().unwrap();
}

#[test]
fn failure_leaves_zz_only() {
    let (spec, mut t) = two_pairs();
    let bin = TimeBin::Early;
    let rec = fuse(&spec, &mut t, 0, QubitRef::photon(0, 0), QubitRef::photon(0, 1), FusionOutcome::FailurePhiSubspace(bin)).unwrap();
    assert_eq!((rec.zz, rec.xx), (Some(1), None));
    assert_eq!(t.expectation(&ps("ZIZI")).unwrap(), 1);
    assert_eq!(t.expectation(&ps("XIXI")).unwrap(), 0);
    assert_eq!(t.expectation(&ps("YIYI")).unwrap(), 0);
    assert_eq!(t.expectation(&ps("ZIII")).unwrap(), 1);
}

#[test]
fn erasure_leaves_spins_mixed() {
    let (spec, mut t) = two_pairs();
    let rec = fuse(&spec, &mut t, 0, QubitRef::photon(0, 0), QubitRef::photon(0, 1), FusionOutcome::Erasure).unwrap();
    assert_eq!((rec.zz, rec.xx), (None, None));
    assert_eq!(t.rank(), 0);
}

#[test]
fn fused_photon_cannot_be_fused_again() {
    let (spec, mut t) = two_pairs();
    let (a, b) = (QubitRef::photon(0, 0), QubitRef::photon(0, 1));
    fuse(&spec, &mut t, 0, a, b, FusionOutcome::SuccessPsiMinus).unwrap();
    assert!(matches!(fuse(&spec, &mut t, 1, a, b, FusionOutcome::Erasure), Err(NetworkError::AlreadyFused(_))));
    assert!(fuse(&spec, &mut t, 1, QubitRef::spin(0, 0), b, FusionOutcome::Erasure).is_err());
}

#[test]
fn spec_validation() {
    let mut spec = NetworkSpec::two_cycle();
    spec.fusions[0].kind = FusionKind::SpaceLike;
    assert!(spec.validate().is_err());
    let mut spec = NetworkSpec::two_cycle();
    spec.fusions.push(spec.fusions[0].clone());
    assert!(matches!(spec.validate(), Err(NetworkError::AlreadyFused(_))));
    let mut spec = NetworkSpec::two_cycle();
    spec.fusions[0].b = QubitRef::photon(0, 5);
    assert!(spec.validate().is_err());
    let spec = NetworkSpec {
        rsg_count: 0,
        cycles: 1,
        fusions: vec![],
        spin_measurements: vec![],
    };
    assert!(spec.validate().is_err());
    NetworkSpec::grid(4, 4).validate().unwrap();
    NetworkSpec::chain(8).validate().unwrap();
}

#[test]
fn spec_toml_round_trip() {
    let spec = NetworkSpec::chain(4);
    let text = toml::to_string(&spec).unwrap();
    let back: NetworkSpec = toml::from_str(&text).unwrap();
    assert_eq!(back, spec);
    assert!(toml::from_str::<NetworkSpec>("rsg_count = 1\ncycles = 2\nbogus = 3\n").is_err());
}

#[test]
fn two_cycle_success_gives_time_like_edge() {
    let mut spec = NetworkSpec::two_cycle();
    spec.fusions[0].outcome = Some(FusionOutcome::SuccessPsiPlus);
    let run = run_network(&spec, 0.5, 0.0, &mut rng(1)).unwrap();
    let e = run.graph.edge(QubitRef::spin(0, 0), QubitRef::spin(0, 1)).unwrap();
    assert_eq!(e.kind, EdgeKind::TimeLike);
    assert!(!e.classical);
    assert_eq!(e.stabilizers, vec!["+XX", "+YY", "-ZZ"]);
}

#[test]
fn chain_connects_end_spins() {
    let mut spec = NetworkSpec::chain(4);
    for f in &mut spec.fusions {
        f.outcome = Some(FusionOutcome::SuccessPsiMinus);
    }
    for seed in 0..8 {
        let run = run_network(&spec, 1.0, 0.0, &mut rng(seed)).unwrap();
        assert_eq!(run.graph.spins, vec![QubitRef::spin(0, 0), QubitRef::spin(0, 3)]);
        let e = run.graph.edge(QubitRef::spin(0, 0), QubitRef::spin(0, 3)).unwrap();
        assert!(!e.classical);
        assert_eq!(e.stabilizers.len(), 3);
    }
}

#[test]
fn all_failures_give_classical_edges() {
    let spec = NetworkSpec::grid(3, 4);
    let run = run_network(&spec, 0.0, 0.0, &mut rng(4)).unwrap();
    assert!(!run.graph.edges.is_empty());
    assert!(run.graph.edges.iter().all(|e| e.classical));
    assert!(run.records.iter().all(|r| matches!(r.outcome, FusionOutcome::FailurePhiSubspace(_))));
}

#[test]
fn success_frequency_is_binomial() {
    let spec = NetworkSpec::grid(4, 4);
    let mut r = rng(11);
    let (mut n, mut k) = (0usize, 0usize);
    while n < 10_000 {
        let run = run_network(&spec, 0.5, 0.0, &mut r).unwrap();
        n += run.records.len();
        k += run.records.iter().filter(|r| r.outcome.is_success()).count();
    }
    let p = k as f64 / n as f64;
    let sigma = (0.25 / n as f64).sqrt();
    assert!((p - 0.5).abs() < 3.0 * sigma, "{p}");
}

#[test]
fn erasure_rate_is_honoured() {
    let spec = NetworkSpec::grid(4, 4);
    let mut r = rng(12);
    let (mut n, mut k) = (0usize, 0usize);
    while n < 10_000 {
        let run = run_network(&spec, 0.5, 0.91, &mut r).unwrap();
        n += run.records.len();
        k += run.records.iter().filter(|r| r.outcome == FusionOutcome::Erasure).count();
    }
    let p = k as f64 / n as f64;
    assert!((p - 0.91).abs() < 3.0 * (0.91 * 0.09 / n as f64).sqrt(), "{p}");
}

#[test]
fn tableau_stays_valid_through_random_networks() {
    for seed in 0..20 {
        let spec = NetworkSpec::grid(3, 3);
        let run = run_network(&spec, 0.6, 0.2, &mut rng(seed)).unwrap();
        run.tableau.validate().unwrap();
        for f in &spec.fusions {
            assert!(run.tableau.is_removed(spec.index(f.a).unwrap()));
            assert!(run.tableau.is_removed(spec.index(f.b).unwrap()));
        }
    }
}

#[test]
fn run_rejects_bad_probabilities() {
    assert!(run_network(&NetworkSpec::two_cycle(), 1.5, 0.0, &mut rng(0)).is_err());
    assert!(run_network(&NetworkSpec::two_cycle(), 0.5, -0.1, &mut rng(0)).is_err());
}

#[test]
fn crosscheck_single_cases() {
    let cases = standard_cases();
    let find = |name: &str| cases.iter().find(|c| c.name == name).unwrap();
    for name in ["time/zz-1xx+1", "space/which_e", "time/erased", "square_time/zz+1xx-1/zz-1xx-1"] {
        let r = crosscheck_dense(find(name)).unwrap();
        assert!(r.agree, "{r:?}");
        assert!(r.paulis_compared > 0);
    }
}

#[test]
fn crosscheck_suite_agrees() {
    let s = crosscheck_suite().unwrap();
    assert!(s.cases >= 48);
    assert!(s.all_agree, "{:?}", s.reports.iter().find(|r| !r.agree));
    assert!(s.max_deviation < 1e-10);
    assert!(s.impossible_cases > 0);
}
