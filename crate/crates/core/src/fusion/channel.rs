//! Closed-form fusion measurement in terms of Bell projectors.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;

use crate::densop::{bell, projector, Bell, CMatrix, TimeBin, C64};

use super::pattern::{DetectionPattern, Detector, Port};
use super::{FusionError, FusionNoise, PatternPovm, PovmSet, Presence};

/// Heralded measurement on the two time-bin qubits, one POVM element per
/// detection pattern and photon-presence configuration.
#[derive(Debug, Clone)]
pub struct FusionChannel {
    pub noise: FusionNoise,
    pub povms: PovmSet,
}

impl FusionChannel {
    /// Kraus rows `sqrt(lambda) <v|` of the element for `pattern`; the
    /// photons are absorbed, so each row maps the photon space to a scalar.
    pub fn kraus(&self, pattern: &DetectionPattern, presence: Presence) -> Vec<CMatrix> {
        let Some(e) = self.povms.elements.get(pattern) else {
            return Vec::new();
        };
        let m = e.get(presence);
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let mut out = Vec::new();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= 1e-15 {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let n = v.len();
            out.push(CMatrix::from_fn(1, n, |_, c| v[c].conj() * lambda.sqrt()));
        }
        out
    }

    /// `max |sum_P E_P - I|` over presence configurations.
    pub fn trace_deviation(&self) -> f64 {
        self.povms.completeness_deviation()
    }
}

fn two_photon_basis(a: TimeBin, b: TimeBin) -> CMatrix {
    let mut v = vec![C64::new(0.0, 0.0); 4];
    v[a.index() * 2 + b.index()] = C64::new(1.0, 0.0);
    projector(&v)
}

fn one_photon_basis(bin: TimeBin) -> CMatrix {
    let mut v = vec![C64::new(0.0, 0.0); 2];
    v[bin.index()] = C64::new(1.0, 0.0);
    projector(&v)
}

fn scaled(m: &CMatrix, w: f64) -> CMatrix {
    m * C64::new(w, 0.0)
}

/// Signal POVMs (no background) keyed by raw click counts.
fn signal_elements(noise: &FusionNoise) -> BTreeMap<DetectionPattern, PatternPovm> {
    let v = noise.indistinguishability;
    let eta = noise.eta;
    let psi_plus = projector(&bell(Bell::PsiPlus));
    let psi_minus = projector(&bell(Bell::PsiMinus));
    let id2 = CMatrix::identity(2, 2);
    let id4 = CMatrix::identity(4, 4);
    let mut out: BTreeMap<DetectionPattern, PatternPovm> = BTreeMap::new();
    let mut put = |pattern: DetectionPattern, f: &dyn Fn(&mut PatternPovm)| {
        let e = out.entry(pattern).or_insert_with(PatternPovm::zero);
        f(e);
    };

    let success = |same: &CMatrix, other: &CMatrix| {
        scaled(same, eta * eta * (1.0 + v) / 4.0) + scaled(other, eta * eta * (1.0 - v) / 4.0)
    };
    for (early, late, herald_plus) in [
        (Port::C, Port::C, true),
        (Port::D, Port::D, true),
        (Port::C, Port::D, false),
        (Port::D, Port::C, false),
    ] {
        let p = DetectionPattern::from_clicks(&[
            Detector::new(early, TimeBin::Early),
            Detector::new(late, TimeBin::Late),
        ]);
        let m = if herald_plus {
            success(&psi_plus, &psi_minus)
        } else {
            success(&psi_minus, &psi_plus)
        };
        put(p, &|e| e.both += &m);
    }

    for bin in [TimeBin::Early, TimeBin::Late] {
        let bb = two_photon_basis(bin, bin);
        let c = Detector::new(Port::C, bin);
        let d = Detector::new(Port::D, bin);
        let bunched = scaled(&bb, eta * eta * (1.0 + v) / 4.0);
        let split = scaled(&bb, eta * eta * (1.0 - v) / 2.0);
        put(DetectionPattern::from_clicks(&[c, c]), &|e| e.both += &bunched);
        put(DetectionPattern::from_clicks(&[d, d]), &|e| e.both += &bunched);
        put(DetectionPattern::from_clicks(&[c, d]), &|e| e.both += &split);
    }

    for det in Detector::ALL {
        let proj = one_photon_basis(det.bin);
        let pattern = DetectionPattern::from_clicks(&[det]);
        let one_lost = scaled(&(proj.kronecker(&id2) + id2.kronecker(&proj)), eta * (1.0 - eta) / 2.0);
        let alone = scaled(&proj, eta / 2.0);
        put(pattern, &|e| {
            e.both += &one_lost;
            e.only_a += &alone;
            e.only_b += &alone;
        });
    }

    put(DetectionPattern::empty(), &|e| {
        e.both += scaled(&id4, (1.0 - eta) * (1.0 - eta));
        e.only_a += scaled(&id2, 1.0 - eta);
        e.only_b += scaled(&id2, 1.0 - eta);
        e.neither += 1.0;
    });
    out
}

/// The fusion measurement written with Bell projectors: success heralds mix
/// the matching psi projector with weight `(1+V)/2` and the other with
/// `(1-V)/2`; same-bin patterns project onto `|ee>` or `|ll>`; loss and
/// background are folded in per detector.
pub fn effective_channel(noise: &FusionNoise) -> Result<FusionChannel, FusionError> {
    noise.validate()?;
    let signal = signal_elements(noise);
    let mut povms = PovmSet::default();
    for mask in 0u8..16 {
        let w = noise.background_weight(mask);
        if w == 0.0 {
            continue;
        }
        for (pattern, e) in &signal {
            povms.accumulate(pattern.with_background(mask, noise.number_resolving), e, w);
        }
    }
    Ok(FusionChannel {
        noise: noise.clone(),
        povms,
    })
}
