//! Fits device noise knobs to measured conditional error rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emitter::EmitterNoise;
use crate::experiment::{predict, RunError};
use crate::fusion::FusionNoise;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("no knobs selected")]
    NoKnobs,
    #[error("knob {0:?} selected twice")]
    DuplicateKnob(Knob),
    #[error("bad target {name} = {value}")]
    BadTarget { name: String, value: f64 },
    #[error("bad bounds for {knob:?}: [{lo}, {hi}]")]
    BadBounds { knob: Knob, lo: f64, hi: f64 },
    #[error("max_evals must be at least 10")]
    Budget,
}

/// A scalar device parameter the fit may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    /// Symmetric readout error: `f_read_0 = e`, `f_read_1 = 1 - e`.
    ReadoutError,
    PDephCycle,
    PFlipCycle,
    PInitErr,
    ThetaErrPi,
    ThetaErrPi2,
    PEmitFail,
    StaticPhase,
    Indistinguishability,
    Eta,
    PBg,
}

impl Knob {
    pub const ALL: [Knob; 11] = [
        Knob::ReadoutError,
        Knob::PDephCycle,
        Knob::PFlipCycle,
        Knob::PInitErr,
        Knob::ThetaErrPi,
        Knob::ThetaErrPi2,
        Knob::PEmitFail,
        Knob::StaticPhase,
        Knob::Indistinguishability,
        Knob::Eta,
        Knob::PBg,
    ];

    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Knob::ReadoutError | Knob::PDephCycle | Knob::PFlipCycle | Knob::PInitErr | Knob::PEmitFail => (0.0, 0.5),
            Knob::ThetaErrPi | Knob::ThetaErrPi2 => (-0.5, 0.5),
            Knob::StaticPhase => (-std::f64::consts::PI, std::f64::consts::PI),
            Knob::Indistinguishability => (0.0, 1.0),
            Knob::Eta => (0.01, 1.0),
            Knob::PBg => (0.0, 0.5),
        }
    }

    pub fn get(self, e: &EmitterNoise, f: &FusionNoise) -> f64 {
        match self {
            Knob::ReadoutError => e.f_read_0,
            Knob::PDephCycle => e.p_deph_cycle,
            Knob::PFlipCycle => e.p_flip_cycle,
            Knob::PInitErr => e.p_init_err,
            Knob::ThetaErrPi => e.theta_err_pi,
            Knob::ThetaErrPi2 => e.theta_err_pi2,
            Knob::PEmitFail => e.p_emit_fail,
            Knob::StaticPhase => e.static_phase,
            Knob::Indistinguishability => f.indistinguishability,
            Knob::Eta => f.eta,
            Knob::PBg => f.p_bg,
        }
    }

    pub fn set(self, e: &mut EmitterNoise, f: &mut FusionNoise, v: f64) {
        match self {
            Knob::ReadoutError => {
                e.f_read_0 = v;
                e.f_read_1 = 1.0 - v;
            }
            Knob::PDephCycle => e.p_deph_cycle = v,
            Knob::PFlipCycle => e.p_flip_cycle = v,
            Knob::PInitErr => e.p_init_err = v,
            Knob::ThetaErrPi => e.theta_err_pi = v,
            Knob::ThetaErrPi2 => e.theta_err_pi2 = v,
            Knob::PEmitFail => e.p_emit_fail = v,
            Knob::StaticPhase => e.static_phase = v,
            Knob::Indistinguishability => f.indistinguishability = v,
            Knob::Eta => f.eta = v,
            Knob::PBg => f.p_bg = v,
        }
    }
}

/// Conditional error rates, in percent-free fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    /// ZZ, XX, YY.
    pub psi_plus: [f64; 3],
    pub psi_minus: [f64; 3],
    pub failure_zz: f64,
}

impl Rates {
    pub fn measured() -> Self {
        Rates {
            psi_plus: [0.18, 0.31, 0.33],
            psi_minus: [0.19, 0.33, 0.33],
            failure_zz: 0.32,
        }
    }

    /// One standard deviation of [`Rates::measured`].
    pub fn measured_sigma() -> Self {
        Rates {
            psi_plus: [0.03, 0.02, 0.02],
            psi_minus: [0.02, 0.02, 0.02],
            failure_zz: 0.04,
        }
    }

    pub fn to_vec(&self) -> [f64; 7] {
        let [a, b, c] = self.psi_plus;
        let [d, e, f] = self.psi_minus;
        [a, b, c, d, e, f, self.failure_zz]
    }

    pub fn from_vec(v: [f64; 7]) -> Self {
        Rates {
            psi_plus: [v[0], v[1], v[2]],
            psi_minus: [v[3], v[4], v[5]],
            failure_zz: v[6],
        }
    }

    pub const NAMES: [&'static str; 7] = [
        "psi_plus.zz",
        "psi_plus.xx",
        "psi_plus.yy",
        "psi_minus.zz",
        "psi_minus.xx",
        "psi_minus.yy",
        "failure.zz",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnobBounds {
    pub knob: Knob,
    pub lo: f64,
    pub hi: f64,
}

fn default_knobs() -> Vec<Knob> {
    vec![
        Knob::ReadoutError,
        Knob::PDephCycle,
        Knob::PFlipCycle,
        Knob::Indistinguishability,
        Knob::PBg,
        Knob::Eta,
    ]
}

fn default_restarts() -> u32 {
    6
}

fn default_max_evals() -> u32 {
    600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default = "default_knobs")]
    pub knobs: Vec<Knob>,
    #[serde(default = "Rates::measured")]
    pub targets: Rates,
    #[serde(default = "Rates::measured_sigma")]
    pub sigmas: Rates,
    /// Overrides of [`Knob::default_bounds`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<KnobBounds>,
    #[serde(default = "default_restarts")]
    pub restarts: u32,
    /// Objective evaluations per restart.
    #[serde(default = "default_max_evals")]
    pub max_evals: u32,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            knobs: default_knobs(),
            targets: Rates::measured(),
            sigmas: Rates::measured_sigma(),
            bounds: Vec::new(),
            restarts: default_restarts(),
            max_evals: default_max_evals(),
        }
    }
}

impl CalibrateConfig {
    pub fn validate(&self) -> Result<(), CalibrateError> {
        if self.knobs.is_empty() {
            return Err(CalibrateError::NoKnobs);
        }
        for (i, k) in self.knobs.iter().enumerate() {
            if self.knobs[..i].contains(k) {
                return Err(CalibrateError::DuplicateKnob(*k));
            }
        }
        for (name, (t, s)) in Rates::NAMES
            .iter()
            .zip(self.targets.to_vec().into_iter().zip(self.sigmas.to_vec()))
        {
            if !(0.0..=1.0).contains(&t) {
                return Err(CalibrateError::BadTarget { name: name.to_string(), value: t });
            }
            if !(s > 0.0 && s.is_finite()) {
                return Err(CalibrateError::BadTarget { name: format!("sigma {name}"), value: s });
            }
        }
        for b in &self.bounds {
            let (lo, hi) = b.knob.default_bounds();
            if !(b.lo <= b.hi && b.lo >= lo && b.hi <= hi) {
                return Err(CalibrateError::BadBounds { knob: b.knob, lo: b.lo, hi: b.hi });
            }
        }
        if self.max_evals < 10 {
            return Err(CalibrateError::Budget);
        }
        Ok(())
    }

    pub fn bounds_of(&self, k: Knob) -> (f64, f64) {
        self.bounds
            .iter()
            .find(|b| b.knob == k)
            .map_or(k.default_bounds(), |b| (b.lo, b.hi))
    }
}

/// Conditional error rates predicted for these devices.
pub fn predicted_rates(emitter: &EmitterNoise, fusion: &FusionNoise) -> Result<Rates, RunError> {
    Ok(Rates::from_vec(predict(emitter, fusion)?.rate_vector()))
}

/// Sum of squared normalised residuals.
pub fn chi2(pred: &Rates, targets: &Rates, sigmas: &Rates) -> f64 {
    pred.to_vec()
        .iter()
        .zip(targets.to_vec())
        .zip(sigmas.to_vec())
        .map(|((p, t), s)| ((p - t) / s).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedKnob {
    pub knob: Knob,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub emitter: EmitterNoise,
    pub fusion: FusionNoise,
    pub knobs: Vec<FittedKnob>,
    pub predicted: Rates,
    pub targets: Rates,
    pub sigmas: Rates,
    pub chi2: f64,
    pub evaluations: u64,
    /// Largest |predicted - target| / sigma.
    pub max_pull: f64,
}

struct Objective<'a> {
    cfg: &'a CalibrateConfig,
    emitter: EmitterNoise,
    fusion: FusionNoise,
    evals: u64,
}

impl Objective<'_> {
    fn devices(&self, x: &[f64]) -> (EmitterNoise, FusionNoise) {
        let (mut e, mut f) = (self.emitter.clone(), self.fusion.clone());
        for (k, &v) in self.cfg.knobs.iter().zip(x) {
            k.set(&mut e, &mut f, v);
        }
        (e, f)
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let (e, f) = self.devices(x);
        match predicted_rates(&e, &f) {
            Ok(r) => chi2(&r, &self.cfg.targets, &self.cfg.sigmas),
            Err(_) => f64::INFINITY,
        }
    }
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Nelder-Mead with points projected onto the box.
fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, start: Vec<f64>, bounds: &[(f64, f64)], max_evals: u32) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let fs = f(&start);
    simplex.push((start.clone(), fs));
    for i in 0..n {
        let mut p = start.clone();
        let (lo, hi) = bounds[i];
        let step = 0.1 * (hi - lo);
        p[i] = if p[i] + step <= hi { p[i] + step } else { p[i] - step };
        let fp = f(&p);
        simplex.push((p, fp));
    }
    let mut evals = n as u32 + 1;
    let proj = |mut p: Vec<f64>| {
        clamp_into(&mut p, bounds);
        p
    };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() < 1e-10 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|s| s.0[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            proj(centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (w - c)).collect())
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = if fr < simplex[n].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            evals += 1;
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = proj(best.iter().zip(&s.0).map(|(b, x)| b + 0.5 * (x - b)).collect());
                    s.1 = f(&s.0);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// Fits `cfg.knobs`, starting from the given devices and from
/// `cfg.restarts` seeded random points in the box.
pub fn calibrate(
    cfg: &CalibrateConfig,
    emitter: &EmitterNoise,
    fusion: &FusionNoise,
    seed: u64,
) -> Result<Calibration, RunError> {
    cfg.validate().map_err(|e| RunError::Validation(e.to_string()))?;
    let bounds: Vec<(f64, f64)> = cfg.knobs.iter().map(|k| cfg.bounds_of(*k)).collect();
    let mut obj = Objective {
        cfg,
        emitter: emitter.clone(),
        fusion: fusion.clone(),
        evals: 0,
    };
    let mut start: Vec<f64> = cfg.knobs.iter().map(|k| k.get(emitter, fusion)).collect();
    clamp_into(&mut start, &bounds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (start.clone(), f64::INFINITY);
    for r in 0..=cfg.restarts {
        let x0 = if r == 0 {
            start.clone()
        } else {
            bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
        };
        let cand = nelder_mead(&mut |x| obj.eval(x), x0, &bounds, cfg.max_evals);
        // polish from the candidate with a fresh simplex
        let cand = nelder_mead(&mut |x| obj.eval(x), cand.0, &bounds, cfg.max_evals);
        if cand.1 < best.1 {
            best = cand;
        }
    }
    let (e, f) = obj.devices(&best.0);
    let predicted = predicted_rates(&e, &f)?;
    let max_pull = predicted
        .to_vec()
        .iter()
        .zip(cfg.targets.to_vec())
        .zip(cfg.sigmas.to_vec())
        .map(|((p, t), s)| ((p - t) / s).abs())
        .fold(0.0, f64::max);
    Ok(Calibration {
        knobs: cfg.knobs.iter().zip(&best.0).map(|(k, v)| FittedKnob { knob: *k, value: *v }).collect(),
        emitter: e,
        fusion: f,
        predicted,
        targets: cfg.targets,
        sigmas: cfg.sigmas,
        chi2: best.1,
        evaluations: obj.evals,
        max_pull,
    })
}
