//! Fock-level oracle for the time-bin fusion.
//!
//! Output modes are the four detectors, each split into two internal modes
//! (alpha, beta), plus one loss mode per (input photon, bin). Photon `a`
//! carries internal state alpha, photon `b` carries `sqrt(V) alpha +
//! sqrt(1-V) beta`. Per time bin the beam splitter maps
//! `a -> (c + d)/sqrt2` and `b -> (c - d)/sqrt2`; transmission `eta` leaks
//! the rest into the loss modes. Detectors see total counts per (port, bin)
//! and are blind to internal and loss modes.

use crate::densop::{CMatrix, C64};

use super::pattern::{DetectionPattern, Detector, Port};
use super::{FusionError, FusionInput, FusionNoise, HeraldedPattern, PatternPovm, PovmSet, Presence};
use crate::densop::TimeBin;

const N_DET_MODES: usize = 8;
const N_MODES: usize = N_DET_MODES + 4;

fn det_mode(port: Port, bin: TimeBin, internal: usize) -> usize {
    Detector::new(port, bin).index() * 2 + internal
}

fn loss_mode(photon: usize, bin: TimeBin) -> usize {
    N_DET_MODES + photon * 2 + bin.index()
}

fn bin_of(bit: usize) -> TimeBin {
    if bit == 0 {
        TimeBin::Early
    } else {
        TimeBin::Late
    }
}

/// Output-mode amplitudes of one input photon (`photon` 0 = a, 1 = b) in `bin`.
fn creation_image(photon: usize, bin: TimeBin, noise: &FusionNoise) -> [C64; N_MODES] {
    let mut u = [C64::new(0.0, 0.0); N_MODES];
    let t = (noise.eta / 2.0).sqrt();
    let v = noise.indistinguishability;
    if photon == 0 {
        u[det_mode(Port::C, bin, 0)] = C64::new(t, 0.0);
        u[det_mode(Port::D, bin, 0)] = C64::new(t, 0.0);
    } else {
        let (ia, ib) = (v.sqrt(), (1.0 - v).sqrt());
        u[det_mode(Port::C, bin, 0)] = C64::new(t * ia, 0.0);
        u[det_mode(Port::C, bin, 1)] = C64::new(t * ib, 0.0);
        u[det_mode(Port::D, bin, 0)] = C64::new(-t * ia, 0.0);
        u[det_mode(Port::D, bin, 1)] = C64::new(-t * ib, 0.0);
    }
    u[loss_mode(photon, bin)] = C64::new((1.0 - noise.eta).sqrt(), 0.0);
    u
}

fn detector_of(mode: usize) -> Option<usize> {
    (mode < N_DET_MODES).then_some(mode / 2)
}

fn signal_pattern(modes: &[usize]) -> DetectionPattern {
    let mut counts = [0u8; 4];
    for &m in modes {
        if let Some(d) = detector_of(m) {
            counts[d] += 1;
        }
    }
    DetectionPattern::from_counts(counts)
}

/// Signal-only POVMs keyed by raw photon counts (no background, no saturation).
fn signal_povms(noise: &FusionNoise) -> PovmSet {
    let mut set = PovmSet::default();

    // two photons: basis index 2*x_a + x_b
    let mut amps: Vec<Vec<(usize, usize, C64)>> = Vec::with_capacity(4);
    for k in 0..4 {
        let u = creation_image(0, bin_of(k >> 1), noise);
        let v = creation_image(1, bin_of(k & 1), noise);
        let mut out = Vec::new();
        for i in 0..N_MODES {
            for j in i..N_MODES {
                // a_i^dag a_j^dag |0> has norm sqrt2 when i == j
                let a = if i == j {
                    u[i] * v[i] * std::f64::consts::SQRT_2
                } else {
                    u[i] * v[j] + u[j] * v[i]
                };
                if a.norm_sqr() > 0.0 {
                    out.push((i, j, a));
                }
            }
        }
        amps.push(out);
    }
    let mut both: std::collections::BTreeMap<(usize, usize), [C64; 4]> = Default::default();
    for (k, list) in amps.iter().enumerate() {
        for &(i, j, a) in list {
            both.entry((i, j)).or_insert([C64::new(0.0, 0.0); 4])[k] = a;
        }
    }
    for ((i, j), a) in both {
        let mut e = PatternPovm::zero();
        e.both = outer(&a);
        set.accumulate(signal_pattern(&[i, j]), &e, 1.0);
    }

    // one photon
    for (photon, presence) in [(0usize, Presence::OnlyA), (1, Presence::OnlyB)] {
        let images = [
            creation_image(photon, TimeBin::Early, noise),
            creation_image(photon, TimeBin::Late, noise),
        ];
        for m in 0..N_MODES {
            let a = [images[0][m], images[1][m]];
            if a.iter().all(|z| z.norm_sqr() == 0.0) {
                continue;
            }
            let mut e = PatternPovm::zero();
            match presence {
                Presence::OnlyA => e.only_a = outer(&a),
                _ => e.only_b = outer(&a),
            }
            set.accumulate(signal_pattern(&[m]), &e, 1.0);
        }
    }

    let mut e = PatternPovm::zero();
    e.neither = 1.0;
    set.accumulate(DetectionPattern::empty(), &e, 1.0);
    set
}

/// `M[k', k] = conj(a_k') a_k`, i.e. `|a^*><a^*|` in the input basis.
fn outer(a: &[C64]) -> CMatrix {
    CMatrix::from_fn(a.len(), a.len(), |r, c| a[r].conj() * a[c])
}

/// POVM elements of the full detection model, from the Fock enumeration.
pub fn fock_povms(noise: &FusionNoise) -> Result<PovmSet, FusionError> {
    noise.validate()?;
    let signal = signal_povms(noise);
    let mut set = PovmSet::default();
    for mask in 0u8..16 {
        let w = noise.background_weight(mask);
        if w == 0.0 {
            continue;
        }
        for (pattern, povm) in &signal.elements {
            set.accumulate(pattern.with_background(mask, noise.number_resolving), povm, w);
        }
    }
    Ok(set)
}

/// Enumerates every detection pattern with its probability and heralded
/// two-spin state.
pub fn fock_fusion_oracle(input: &FusionInput, noise: &FusionNoise) -> Result<Vec<HeraldedPattern>, FusionError> {
    fock_povms(noise)?.apply(input)
}
