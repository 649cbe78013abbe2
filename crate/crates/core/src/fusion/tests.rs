use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::densop::{bell, ket, Bell, PauliString, TimeBin};
use crate::emitter::{generate_resource_state, standard_sequence, EmitterNoise};

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() < tol, "{a} vs {b}");
}

fn ideal_input() -> FusionInput {
    let a = generate_resource_state(&standard_sequence(), &EmitterNoise::ideal(), 0).unwrap();
    let b = generate_resource_state(&standard_sequence(), &EmitterNoise::ideal(), 1).unwrap();
    FusionInput::from_resources(&a, &b).unwrap()
}

fn noisy_input() -> FusionInput {
    let noise = EmitterNoise {
        p_deph_cycle: 0.07,
        theta_err_pi: 0.2,
        p_emit_fail: 0.1,
        p_init_err: 0.03,
        ..EmitterNoise::ideal()
    };
    let a = generate_resource_state(&standard_sequence(), &noise, 0).unwrap();
    let b = generate_resource_state(&standard_sequence(), &noise, 1).unwrap();
    FusionInput::from_resources(&a, &b).unwrap()
}

fn noise(v: f64, eta: f64, p_bg: f64, resolving: bool) -> FusionNoise {
    FusionNoise {
        indistinguishability: v,
        eta,
        p_bg,
        number_resolving: resolving,
    }
}

fn find<'a>(list: &'a [HeraldedPattern], p: &str) -> &'a HeraldedPattern {
    let p: DetectionPattern = p.parse().unwrap();
    list.iter().find(|h| h.pattern == p).expect("pattern present")
}

fn pauli(s: &str) -> PauliString {
    s.parse().unwrap()
}

fn grid() -> Vec<FusionNoise> {
    let mut out = Vec::new();
    for v in [0.0, 0.5, 0.9, 1.0] {
        for eta in [0.5, 1.0] {
            for p_bg in [0.0, 0.05] {
                for resolving in [true, false] {
                    out.push(noise(v, eta, p_bg, resolving));
                }
            }
        }
    }
    out
}

#[test]
fn ideal_success_probability_is_half() {
    let res = fock_fusion_oracle(&ideal_input(), &FusionNoise::ideal()).unwrap();
    let success: f64 = res.iter().filter(|h| h.outcome.is_success()).map(|h| h.probability).sum();
    close(success, 0.5, 1e-12);
    for p in ["e_c,l_c", "e_d,l_d", "e_c,l_d", "e_d,l_c"] {
        close(find(&res, p).probability, 0.125, 1e-12);
    }
}

#[test]
fn psi_plus_pattern_heralds_psi_plus_spins() {
    let res = fock_fusion_oracle(&ideal_input(), &FusionNoise::ideal()).unwrap();
    let st = find(&res, "e_c,l_c").state.as_ref().unwrap();
    close(st.fidelity_pure(&bell(Bell::PsiPlus)).unwrap(), 1.0, 1e-12);
    let st = find(&res, "e_d,l_c").state.as_ref().unwrap();
    close(st.fidelity_pure(&bell(Bell::PsiMinus)).unwrap(), 1.0, 1e-12);
}

#[test]
fn distinguishable_photons_herald_classical_mixture() {
    let res = fock_fusion_oracle(&ideal_input(), &noise(0.0, 1.0, 0.0, true)).unwrap();
    let st = find(&res, "e_c,l_d").state.as_ref().unwrap();
    let expected = (crate::densop::projector(&ket(&[0, 1])) + crate::densop::projector(&ket(&[1, 0])))
        * C64::new(0.5, 0.0);
    let expected = DensityMatrix::from_matrix(st.labels().to_vec(), expected).unwrap();
    assert!(st.trace_distance(&expected).unwrap() < 1e-12);
    close(st.expect(&pauli("ZZ")).unwrap(), -1.0, 1e-12);
    close(st.expect(&pauli("XX")).unwrap(), 0.0, 1e-12);
    close(st.expect(&pauli("YY")).unwrap(), 0.0, 1e-12);
}

#[test]
fn probabilities_sum_to_one_on_grid() {
    for input in [ideal_input(), noisy_input()] {
        for n in grid() {
            let res = fock_fusion_oracle(&input, &n).unwrap();
            let total: f64 = res.iter().map(|h| h.probability).sum();
            close(total, 1.0, 1e-10);
            for h in &res {
                if let Some(st) = &h.state {
                    assert!(st.min_eigenvalue() > -1e-10);
                    close(st.trace(), 1.0, 1e-12);
                }
            }
        }
    }
}

#[test]
fn povms_are_complete_and_positive() {
    for n in grid() {
        let oracle = fock_povms(&n).unwrap();
        assert!(oracle.completeness_deviation() < 1e-12, "{n:?}");
        assert!(min_povm_eigenvalue(&oracle) > -1e-12);
        let ch = effective_channel(&n).unwrap();
        assert!(ch.trace_deviation() < 1e-12);
        assert!(min_povm_eigenvalue(&ch.povms) > -1e-12);
    }
}

#[test]
fn oracle_matches_effective_channel() {
    for input in [ideal_input(), noisy_input()] {
        for n in grid() {
            let oracle = fock_povms(&n).unwrap();
            let ch = effective_channel(&n).unwrap();
            assert!(oracle.max_deviation(&ch.povms) < 1e-12, "{n:?}");
            let a = oracle.apply(&input).unwrap();
            let b = ch.povms.apply(&input).unwrap();
            let prob = |list: &[HeraldedPattern], p: &DetectionPattern| {
                list.iter().find(|h| &h.pattern == p).map_or(0.0, |h| h.probability)
            };
            for x in a.iter().chain(&b) {
                close(prob(&a, &x.pattern), prob(&b, &x.pattern), 1e-9);
            }
            for x in &a {
                let Some(y) = b.iter().find(|h| h.pattern == x.pattern) else { continue };
                if let (Some(sx), Some(sy)) = (&x.state, &y.state) {
                    assert!(sx.trace_distance(sy).unwrap() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn hong_ou_mandel_suppression() {
    let res = fock_fusion_oracle(&ideal_input(), &FusionNoise::ideal()).unwrap();
    for p in ["e_c,e_d", "l_c,l_d"] {
        let prob = res
            .iter()
            .find(|h| h.pattern == p.parse().unwrap())
            .map_or(0.0, |h| h.probability);
        close(prob, 0.0, 1e-10);
    }
    close(find(&res, "e_c,e_c").probability, 0.125, 1e-12);
}

#[test]
fn success_fidelity_follows_indistinguishability() {
    for v in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let res = fock_fusion_oracle(&ideal_input(), &noise(v, 1.0, 0.0, true)).unwrap();
        let classes = herald_by_class(&res);
        let plus = classes[&OutcomeClass::PsiPlus].1.as_ref().unwrap();
        let minus = classes[&OutcomeClass::PsiMinus].1.as_ref().unwrap();
        close(plus.fidelity_pure(&bell(Bell::PsiPlus)).unwrap(), (1.0 + v) / 2.0, 1e-9);
        close(minus.fidelity_pure(&bell(Bell::PsiMinus)).unwrap(), (1.0 + v) / 2.0, 1e-9);
    }
}

#[test]
fn failure_keeps_zz_only() {
    for resolving in [true, false] {
        let n = noise(0.6, 1.0, 0.0, resolving);
        let res = fock_fusion_oracle(&ideal_input(), &n).unwrap();
        for h in res.iter().filter(|h| matches!(h.outcome, FusionOutcome::FailurePhiSubspace(_))) {
            let Some(st) = &h.state else { continue };
            close(st.expect(&pauli("ZZ")).unwrap(), 1.0, 1e-10);
            close(st.expect(&pauli("XX")).unwrap(), 0.0, 1e-10);
            close(st.expect(&pauli("YY")).unwrap(), 0.0, 1e-10);
            let bin = match h.outcome {
                FusionOutcome::FailurePhiSubspace(b) => b,
                _ => unreachable!(),
            };
            let expect_z = if bin == TimeBin::Early { 1.0 } else { -1.0 };
            close(st.expect(&pauli("ZI")).unwrap(), expect_z, 1e-10);
        }
    }
}

#[test]
fn channel_failure_herald_is_up_up() {
    let ch = effective_channel(&FusionNoise::ideal()).unwrap();
    let res = ch.povms.apply(&ideal_input()).unwrap();
    let st = find(&res, "e_c,e_c").state.as_ref().unwrap();
    close(st.fidelity_pure(&ket(&[0, 0])).unwrap(), 1.0, 1e-12);
}

#[test]
fn channel_success_heralds() {
    let ideal = effective_channel(&FusionNoise::ideal()).unwrap();
    let e = &ideal.povms.elements[&"e_c,l_d".parse().unwrap()].both;
    let target = crate::densop::projector(&bell(Bell::PsiMinus)) * C64::new(0.5, 0.0);
    assert!(crate::densop::max_abs(&(e - target)) < 1e-14);

    let dist = effective_channel(&noise(0.0, 1.0, 0.0, true)).unwrap();
    let e = &dist.povms.elements[&"e_c,l_d".parse().unwrap()].both;
    let mix = (crate::densop::projector(&bell(Bell::PsiMinus)) + crate::densop::projector(&bell(Bell::PsiPlus)))
        * C64::new(0.25, 0.0);
    assert!(crate::densop::max_abs(&(e - mix)) < 1e-14);
}

#[test]
fn kraus_rows_rebuild_elements() {
    let ch = effective_channel(&noise(0.7, 0.8, 0.02, true)).unwrap();
    for (pattern, e) in &ch.povms.elements {
        for presence in [Presence::Both, Presence::OnlyA] {
            let rows = ch.kraus(pattern, presence);
            let dim = e.get(presence).nrows();
            let mut sum = CMatrix::zeros(dim, dim);
            for k in &rows {
                sum += k.adjoint() * k;
            }
            assert!(crate::densop::max_abs(&(sum - e.get(presence))) < 1e-12);
        }
    }
}

#[test]
fn joint_register_must_be_well_formed() {
    let pair = DensityMatrix::from_pure(vec![QubitLabel::Spin(0), QubitLabel::Photon(0)], &bell(Bell::PhiMinus)).unwrap();
    let other = pair.relabel(vec![QubitLabel::Spin(1), QubitLabel::Photon(1)]).unwrap();
    let joint = pair.tensor(&other).unwrap();
    let input = FusionInput::from_joint(&joint).unwrap();
    let res = fock_fusion_oracle(&input, &FusionNoise::ideal()).unwrap();
    close(find(&res, "e_c,l_c").probability, 0.125, 1e-12);

    let swapped = joint
        .reorder(&[QubitLabel::Photon(0), QubitLabel::Spin(0), QubitLabel::Spin(1), QubitLabel::Photon(1)])
        .unwrap();
    assert!(matches!(
        FusionInput::from_joint(&swapped),
        Err(FusionError::MalformedRegister(_))
    ));
    let a = generate_resource_state(&standard_sequence(), &EmitterNoise::ideal(), 0).unwrap();
    assert!(FusionInput::from_resources(&a, &a).is_err());
}

#[test]
fn invalid_noise_rejected() {
    assert!(matches!(
        fock_povms(&noise(1.2, 1.0, 0.0, true)),
        Err(FusionError::InvalidNoise(_))
    ));
    assert!(effective_channel(&noise(1.0, -0.1, 0.0, true)).is_err());
}

#[test]
fn sampling_is_seeded() {
    let sampler = FusionSampler::from_oracle(&ideal_input(), &FusionNoise::ideal()).unwrap();
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..200).map(|_| sampler.sample(&mut rng).0).collect::<Vec<_>>()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn no_transmission_means_erasure() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (o, st) = sample_fusion(&ideal_input(), &noise(1.0, 0.0, 0.0, true), &mut rng).unwrap();
        assert_eq!(o, FusionOutcome::Erasure);
        assert!(st.is_none());
    }
}

#[test]
fn saturated_background_is_discarded() {
    let sampler = FusionSampler::from_oracle(&ideal_input(), &noise(1.0, 1.0, 1.0, true)).unwrap();
    let erasure: f64 = sampler
        .patterns()
        .iter()
        .filter(|h| h.outcome == FusionOutcome::Erasure)
        .map(|h| h.probability)
        .sum();
    close(erasure, 1.0, 1e-12);
}

