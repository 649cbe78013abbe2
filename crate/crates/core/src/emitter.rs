//! Spin-photon resource-state generation and spin readout.
//!
//! One clock cycle drives the spin through `Initialize, R(pi/2), emit early,
//! R(pi), emit late`, which maps an ideal spin onto
//! `(|0,e> - |1,l>)/sqrt2` up to a global phase. Emission is spin-selective:
//! only `|1>` (spin down) scatters a photon into the active time bin.
//!
//! While a cycle is running, each time bin is an occupation qubit
//! ([`QubitLabel::Mode`]); the photon is "void" when both modes are empty.
//! [`ResourceState`] collapses the two modes into one time-bin qubit
//! ([`QubitLabel::Photon`], `|0>` early, `|1>` late) and keeps whatever is not
//! exactly one photon as a separately weighted loss branch.
//!
//! Readout convention: a click means `|1>`, reported as eigenvalue `-1`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densop::{
    projector, CMatrix, DensityMatrix, DensopError, KrausChannel, Pauli, QubitLabel, TimeBin, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmitterError {
    #[error("malformed pulse sequence: {0}")]
    MalformedSequence(String),
    #[error("time bin {0} already holds a photon in this cycle")]
    AlreadyEmitted(TimeBin),
    #[error("invalid emitter noise: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Densop(#[from] DensopError),
}

/// Pauli measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Z, Basis::X, Basis::Y];

    pub fn pauli(self) -> Pauli {
        match self {
            Basis::X => Pauli::X,
            Basis::Y => Pauli::Y,
            Basis::Z => Pauli::Z,
        }
    }

    /// Rotation taking the `+1` eigenstate of this basis to `|0>`.
    pub fn basis_change(self) -> Option<Rotation> {
        match self {
            Basis::Z => None,
            Basis::X => Some(Rotation::new(-FRAC_PI_2, FRAC_PI_2)),
            Basis::Y => Some(Rotation::new(0.0, FRAC_PI_2)),
        }
    }

    pub fn symbol(self) -> char {
        self.pauli().symbol()
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "X" | "x" => Ok(Basis::X),
            "Y" | "y" => Ok(Basis::Y),
            "Z" | "z" => Ok(Basis::Z),
            other => Err(format!("unknown basis {other:?}")),
        }
    }
}

/// Spin rotation by `theta` about the in-plane axis at azimuth `phi`
/// (measured from X toward Y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub phi: f64,
    pub theta: f64,
}

impl Rotation {
    pub fn new(phi: f64, theta: f64) -> Self {
        Self { phi, theta }
    }

    /// `cos(theta/2) I - i sin(theta/2) (cos(phi) X + sin(phi) Y)`
    pub fn matrix(&self) -> CMatrix {
        let c = (self.theta / 2.0).cos();
        let s = (self.theta / 2.0).sin();
        let (sp, cp) = self.phi.sin_cos();
        // -i s (cp X + sp Y): off-diagonals -i s (cp - i sp) and -i s (cp + i sp)
        let upper = C64::new(0.0, -s) * C64::new(cp, -sp);
        let lower = C64::new(0.0, -s) * C64::new(cp, sp);
        CMatrix::from_row_slice(2, 2, &[C64::new(c, 0.0), upper, lower, C64::new(c, 0.0)])
    }

    /// The same rotation with a systematic angle error added in the
    /// direction of rotation.
    pub fn with_error(&self, err: f64) -> Self {
        let sign = if self.theta < 0.0 { -1.0 } else { 1.0 };
        Self {
            phi: self.phi,
            theta: self.theta + sign * err,
        }
    }
}

/// Z rotation `diag(e^{-i a/2}, e^{i a/2})`, used for free precession.
fn phase_rotation(angle: f64) -> CMatrix {
    let o = C64::new(0.0, 0.0);
    CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::from_polar(1.0, -angle / 2.0),
            o,
            o,
            C64::from_polar(1.0, angle / 2.0),
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Step {
    Initialize,
    Rotate(Rotation),
    EmitTimeBin(TimeBin),
    Readout(Basis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub steps: Vec<Step>,
}

impl PulseSequence {
    pub fn validate(&self) -> Result<(), EmitterError> {
        let bad = |m: &str| Err(EmitterError::MalformedSequence(m.to_string()));
        let steps = &self.steps;
        if steps.first() != Some(&Step::Initialize) {
            return bad("first step must be Initialize");
        }
        if steps.iter().filter(|s| **s == Step::Initialize).count() != 1 {
            return bad("exactly one Initialize is allowed");
        }
        let emissions: Vec<TimeBin> = steps
            .iter()
            .filter_map(|s| match s {
                Step::EmitTimeBin(b) => Some(*b),
                _ => None,
            })
            .collect();
        if emissions != [TimeBin::Early, TimeBin::Late] {
            return bad("expected exactly one early emission followed by one late emission");
        }
        match steps.last() {
            Some(Step::Readout(_)) => {}
            _ => return bad("last step must be Readout"),
        }
        if steps[..steps.len() - 1]
            .iter()
            .any(|s| matches!(s, Step::Readout(_)))
        {
            return bad("Readout may only appear as the final step");
        }
        for s in steps {
            if let Step::Rotate(r) = s {
                if !(r.phi.is_finite() && r.theta.is_finite()) {
                    return bad("rotation angles must be finite");
                }
            }
        }
        Ok(())
    }

    pub fn readout_basis(&self) -> Option<Basis> {
        match self.steps.last() {
            Some(Step::Readout(b)) => Some(*b),
            _ => None,
        }
    }
}

/// The cycle of the experiment: pi/2, early emission, pi, late emission, Z readout.
pub fn standard_sequence() -> PulseSequence {
    standard_sequence_for(Basis::Z)
}

/// [`standard_sequence`] with the basis-change rotation for `basis` placed
/// before a Z readout.
pub fn standard_sequence_for(basis: Basis) -> PulseSequence {
    let mut steps = vec![
        Step::Initialize,
        Step::Rotate(Rotation::new(FRAC_PI_2, FRAC_PI_2)),
        Step::EmitTimeBin(TimeBin::Early),
        Step::Rotate(Rotation::new(FRAC_PI_2, PI)),
        Step::EmitTimeBin(TimeBin::Late),
    ];
    if let Some(r) = basis.basis_change() {
        steps.push(Step::Rotate(r));
    }
    steps.push(Step::Readout(Basis::Z));
    PulseSequence { steps }
}

fn default_f_read_1() -> f64 {
    1.0
}

/// Effective spin and emission imperfections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterNoise {
    /// Probability the spin starts in `|1>` instead of `|0>`.
    #[serde(default)]
    pub p_init_err: f64,
    /// Over-rotation of pi pulses (rad).
    #[serde(default)]
    pub theta_err_pi: f64,
    /// Over-rotation of pi/2 pulses, including readout basis changes (rad).
    #[serde(default)]
    pub theta_err_pi2: f64,
    /// Phase-flip probability in the window between the two emissions.
    #[serde(default)]
    pub p_deph_cycle: f64,
    /// Bit-flip probability per cycle.
    #[serde(default)]
    pub p_flip_cycle: f64,
    /// Probability of reporting 1 given `|1>`.
    #[serde(default = "default_f_read_1")]
    pub f_read_1: f64,
    /// Probability of reporting 1 given `|0>`.
    #[serde(default)]
    pub f_read_0: f64,
    /// Probability an excitation scatters no photon into the collected mode.
    #[serde(default)]
    pub p_emit_fail: f64,
    /// Quasi-static precession angle in each half of the inter-emission window (rad).
    #[serde(default)]
    pub static_phase: f64,
}

impl Default for EmitterNoise {
    fn default() -> Self {
        Self::ideal()
    }
}

impl EmitterNoise {
    pub fn ideal() -> Self {
        Self {
            p_init_err: 0.0,
            theta_err_pi: 0.0,
            theta_err_pi2: 0.0,
            p_deph_cycle: 0.0,
            p_flip_cycle: 0.0,
            f_read_1: 1.0,
            f_read_0: 0.0,
            p_emit_fail: 0.0,
            static_phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), EmitterError> {
        let probs = [
            ("p_init_err", self.p_init_err),
            ("p_deph_cycle", self.p_deph_cycle),
            ("p_flip_cycle", self.p_flip_cycle),
            ("f_read_1", self.f_read_1),
            ("f_read_0", self.f_read_0),
            ("p_emit_fail", self.p_emit_fail),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(EmitterError::InvalidNoise(format!("{name} = {p} not in [0, 1]")));
            }
        }
        let angles = [
            ("theta_err_pi", self.theta_err_pi),
            ("theta_err_pi2", self.theta_err_pi2),
            ("static_phase", self.static_phase),
        ];
        for (name, a) in angles {
            if !(a > -PI && a <= PI) {
                return Err(EmitterError::InvalidNoise(format!("{name} = {a} not in (-pi, pi]")));
            }
        }
        Ok(())
    }
}

/// Phase-flip probability equivalent to Gaussian dephasing over a window
/// `tau` for a spin with inhomogeneous coherence time `t2_star`.
pub fn dephasing_from_t2star(tau: f64, t2_star: f64) -> f64 {
    (1.0 - (-(tau / t2_star).powi(2)).exp()) / 2.0
}

/// Device parameters carried for documentation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceMetadata {
    pub wavelength_nm: f64,
    pub field_tesla: f64,
    pub raman_detuning_ghz: f64,
}

impl Default for DeviceMetadata {
    fn default() -> Self {
        Self {
            wavelength_nm: 947.86,
            field_tesla: 4.0,
            raman_detuning_ghz: 650.0,
        }
    }
}

fn default_cycle_separation() -> f64 {
    300.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Time between the two resource-state cycles (ns).
    #[serde(default = "default_cycle_separation")]
    pub cycle_separation_ns: f64,
    pub shots: u64,
    pub seed: u64,
    #[serde(default)]
    pub metadata: DeviceMetadata,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EmitterError> {
        if self.shots == 0 {
            return Err(EmitterError::InvalidNoise("shots must be at least 1".into()));
        }
        if !(self.cycle_separation_ns.is_finite() && self.cycle_separation_ns > 0.0) {
            return Err(EmitterError::InvalidNoise(
                "cycle separation must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn spin(cycle: u32) -> QubitLabel {
    QubitLabel::Spin(cycle)
}

pub fn photon(cycle: u32) -> QubitLabel {
    QubitLabel::Photon(cycle)
}

pub fn mode(cycle: u32, bin: TimeBin) -> QubitLabel {
    QubitLabel::Mode { cycle, bin }
}

/// Spin plus both time-bin modes in vacuum.
pub fn vacuum_register(cycle: u32, spin_state: &DensityMatrix) -> Result<DensityMatrix, EmitterError> {
    let spin_state = spin_state.relabel(vec![spin(cycle)])?;
    let modes = DensityMatrix::basis(vec![mode(cycle, TimeBin::Early), mode(cycle, TimeBin::Late)], 0)?;
    Ok(spin_state.tensor(&modes)?)
}

fn initial_spin(cycle: u32, noise: &EmitterNoise) -> Result<DensityMatrix, EmitterError> {
    let p = noise.p_init_err;
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 0)] = C64::new(1.0 - p, 0.0);
    m[(1, 1)] = C64::new(p, 0.0);
    Ok(DensityMatrix::from_matrix(vec![spin(cycle)], m)?)
}

/// Spin-selective scattering into `slot`: `|1>|void> -> |1>|slot>`,
/// `|0>|void> -> |0>|void>`. With probability `p_emit_fail` the photon is
/// scattered into an uncollected mode, which still decoheres the spin.
pub fn emit_step(
    rho: &DensityMatrix,
    cycle: u32,
    slot: TimeBin,
    noise: &EmitterNoise,
) -> Result<DensityMatrix, EmitterError> {
    let target = mode(cycle, slot);
    let occupied = rho.herald(&projector(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]), &[target])?;
    if occupied.probability > 1e-12 {
        return Err(EmitterError::AlreadyEmitted(slot));
    }
    let p = noise.p_emit_fail;
    let down = projector(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    let up = projector(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let k_ok = up.kronecker(&CMatrix::identity(2, 2))
        + down.kronecker(&Pauli::X.matrix()) * C64::new((1.0 - p).sqrt(), 0.0);
    let k_lost = down.kronecker(&CMatrix::identity(2, 2)) * C64::new(p.sqrt(), 0.0);
    let ch = KrausChannel::new(vec![k_ok, k_lost])?;
    Ok(rho.apply_channel(&ch, &[spin(cycle), target])?)
}

/// Output of one generation cycle.
#[derive(Debug, Clone)]
pub struct ResourceState {
    pub cycle: u32,
    /// Spin and both occupation modes after the cycle, trace one.
    pub raw: DensityMatrix,
    /// Spin (x) time-bin qubit, conditioned on exactly one photon.
    pub emitted: Option<DensityMatrix>,
    /// Probability of exactly one photon across the two bins.
    pub p_emitted: f64,
    /// Spin state conditioned on the photon being void or doubled.
    pub lost: Option<DensityMatrix>,
}

impl ResourceState {
    pub fn p_lost(&self) -> f64 {
        1.0 - self.p_emitted
    }

    /// Overlap of the full (unconditioned) output with `(|0,e> - |1,l>)/sqrt2`.
    pub fn fidelity_to_target(&self) -> f64 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // |spin, n_early, n_late>: |0,1,0> and |1,0,1>
        let mut v = vec![C64::new(0.0, 0.0); 8];
        v[0b010] = C64::new(h, 0.0);
        v[0b101] = C64::new(-h, 0.0);
        self.raw
            .fidelity_pure(&v)
            .expect("raw register is always three qubits")
    }

    /// Target spin-photon state over `[Spin, Photon]`.
    pub fn target() -> Vec<C64> {
        crate::densop::bell(crate::densop::Bell::PhiMinus)
    }
}

/// Runs `seq` for clock cycle `cycle` under `noise`. The terminal readout is
/// not applied; use [`readout_spin`] on the returned state.
pub fn generate_resource_state(
    seq: &PulseSequence,
    noise: &EmitterNoise,
    cycle: u32,
) -> Result<ResourceState, EmitterError> {
    seq.validate()?;
    noise.validate()?;
    let s = spin(cycle);
    let mut rho: Option<DensityMatrix> = None;
    for step in &seq.steps {
        match step {
            Step::Initialize => {
                rho = Some(vacuum_register(cycle, &initial_spin(cycle, noise)?)?);
            }
            Step::Rotate(r) => {
                let cur = rho.as_ref().expect("validated: Initialize comes first");
                let r = apply_angle_error(r, noise);
                rho = Some(cur.apply_unitary(&r.matrix(), &[s])?);
            }
            Step::EmitTimeBin(bin) => {
                let mut cur = rho.take().expect("validated: Initialize comes first");
                if *bin == TimeBin::Late {
                    cur = cur.apply_unitary(&phase_rotation(noise.static_phase), &[s])?;
                }
                cur = emit_step(&cur, cycle, *bin, noise)?;
                if *bin == TimeBin::Early {
                    cur = cur.apply_unitary(&phase_rotation(noise.static_phase), &[s])?;
                    cur = cur.apply_channel(&KrausChannel::phase_flip(noise.p_deph_cycle), &[s])?;
                    cur = cur.apply_channel(&KrausChannel::bit_flip(noise.p_flip_cycle), &[s])?;
                }
                rho = Some(cur);
            }
            Step::Readout(_) => {}
        }
    }
    let raw = rho.expect("validated: Initialize comes first");
    collapse(cycle, raw)
}

fn apply_angle_error(r: &Rotation, noise: &EmitterNoise) -> Rotation {
    let t = r.theta.abs();
    if (t - PI).abs() < 1e-9 {
        r.with_error(noise.theta_err_pi)
    } else if (t - FRAC_PI_2).abs() < 1e-9 {
        r.with_error(noise.theta_err_pi2)
    } else {
        *r
    }
}

/// Splits the two occupation modes into a time-bin qubit and a loss branch.
fn collapse(cycle: u32, raw: DensityMatrix) -> Result<ResourceState, EmitterError> {
    let order = [spin(cycle), mode(cycle, TimeBin::Early), mode(cycle, TimeBin::Late)];
    let ordered = raw.reorder(&order)?;
    // isometry from the one-photon subspace: |1,0> -> |e>=|0>, |0,1> -> |l>=|1>
    let mut iso = DMatrix::<C64>::zeros(2, 4);
    iso[(0, 0b10)] = C64::new(1.0, 0.0);
    iso[(1, 0b01)] = C64::new(1.0, 0.0);
    let full = CMatrix::identity(2, 2).kronecker(&iso);
    let valid = &full * ordered.matrix() * full.adjoint();
    let (emitted, p_emitted) =
        DensityMatrix::from_unnormalized(vec![spin(cycle), photon(cycle)], valid);

    let mut invalid = CMatrix::zeros(4, 4);
    invalid[(0b00, 0b00)] = C64::new(1.0, 0.0);
    invalid[(0b11, 0b11)] = C64::new(1.0, 0.0);
    let lost = ordered.herald(&invalid, &order[1..])?;
    Ok(ResourceState {
        cycle,
        raw,
        emitted,
        p_emitted,
        lost: lost.state,
    })
}

/// Outcome of a spin readout, `+1` for no click (`|0>`), `-1` for a click.
#[derive(Debug, Clone)]
pub struct Readout {
    pub outcome: i8,
    pub state: DensityMatrix,
}

/// Probability that the readout of `spin_label` in `basis` reports a click.
pub fn click_probability(
    rho: &DensityMatrix,
    spin_label: QubitLabel,
    basis: Basis,
    noise: &EmitterNoise,
) -> Result<f64, EmitterError> {
    let rotated = rotate_to_basis(rho, spin_label, basis, noise)?;
    let p1 = rotated
        .herald(&projector(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]), &[spin_label])?
        .probability;
    Ok(noise.f_read_1 * p1 + noise.f_read_0 * (1.0 - p1))
}

fn rotate_to_basis(
    rho: &DensityMatrix,
    spin_label: QubitLabel,
    basis: Basis,
    noise: &EmitterNoise,
) -> Result<DensityMatrix, EmitterError> {
    match basis.basis_change() {
        None => Ok(rho.clone()),
        Some(r) => Ok(rho.apply_unitary(&r.with_error(noise.theta_err_pi2).matrix(), &[spin_label])?),
    }
}

/// Operator whose expectation is the mean reported value (`+1` no click,
/// `-1` click) of a readout in `basis`.
pub fn readout_observable(basis: Basis, noise: &EmitterNoise) -> CMatrix {
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::new(1.0 - 2.0 * noise.f_read_0, 0.0),
        C64::new(1.0 - 2.0 * noise.f_read_1, 0.0),
    ]));
    match basis.basis_change() {
        None => d,
        Some(r) => {
            let u = r.with_error(noise.theta_err_pi2).matrix();
            u.adjoint() * d * u
        }
    }
}

/// Reads `spin_label` in `basis`: basis-change rotation, spin-selective
/// pumping with click confusion `(f_read_1, f_read_0)`. The returned state is
/// conditioned on the reported outcome and rotated back to the lab frame.
pub fn readout_spin<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    spin_label: QubitLabel,
    basis: Basis,
    noise: &EmitterNoise,
    rng: &mut R,
) -> Result<Readout, EmitterError> {
    let rotated = rotate_to_basis(rho, spin_label, basis, noise)?;
    let p1 = rotated
        .herald(&projector(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]), &[spin_label])?
        .probability;
    let p_click = noise.f_read_1 * p1 + noise.f_read_0 * (1.0 - p1);
    let click = rng.gen::<f64>() < p_click;

    let (w1, w0) = if click {
        (noise.f_read_1, noise.f_read_0)
    } else {
        (1.0 - noise.f_read_1, 1.0 - noise.f_read_0)
    };
    let down = projector(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    let up = projector(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let ch = KrausChannel::heralded(vec![
        down * C64::new(w1.sqrt(), 0.0),
        up * C64::new(w0.sqrt(), 0.0),
    ])?;
    let un = rotated.apply_channel(&ch, &[spin_label])?;
    let p = un.trace();
    let post = if p > crate::densop::NULL_PROB {
        DensityMatrix::from_unnormalized(un.labels().to_vec(), un.matrix().clone())
            .0
            .expect("positive trace")
    } else {
        rotated
    };
    let state = match basis.basis_change() {
        None => post,
        Some(r) => {
            let back = r.with_error(noise.theta_err_pi2).matrix().adjoint();
            post.apply_unitary(&back, &[spin_label])?
        }
    };
    Ok(Readout {
        outcome: if click { -1 } else { 1 },
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densop::ket;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    fn ideal() -> ResourceState {
        generate_resource_state(&standard_sequence(), &EmitterNoise::ideal(), 0).unwrap()
    }

    #[test]
    fn standard_sequence_shape() {
        let seq = standard_sequence();
        assert_eq!(seq.steps.len(), 6);
        assert_eq!(seq.steps[0], Step::Initialize);
        assert_eq!(seq.steps[2], Step::EmitTimeBin(TimeBin::Early));
        assert_eq!(seq.steps[4], Step::EmitTimeBin(TimeBin::Late));
        assert_eq!(seq.steps[5], Step::Readout(Basis::Z));
        match (seq.steps[1], seq.steps[3]) {
            (Step::Rotate(a), Step::Rotate(b)) => {
                close(a.theta, FRAC_PI_2, 1e-15);
                close(b.theta, PI, 1e-15);
            }
            _ => panic!("expected rotations"),
        }
        seq.validate().unwrap();
    }

    #[test]
    fn readout_basis_variants() {
        let x = standard_sequence_for(Basis::X);
        assert_eq!(x.steps.len(), 7);
        assert_eq!(x.steps[5], Step::Rotate(Basis::X.basis_change().unwrap()));
        assert_eq!(x.steps[6], Step::Readout(Basis::Z));
        assert_eq!(standard_sequence_for(Basis::Z), standard_sequence());
    }

    #[test]
    fn malformed_sequences() {
        let mut seq = standard_sequence();
        seq.steps.swap(2, 4);
        assert!(seq.validate().is_err());
        let mut seq = standard_sequence();
        seq.steps.pop();
        assert!(seq.validate().is_err());
        let mut seq = standard_sequence();
        seq.steps.insert(1, Step::Initialize);
        assert!(seq.validate().is_err());
        let mut seq = standard_sequence();
        seq.steps.remove(0);
        assert!(matches!(
            generate_resource_state(&seq, &EmitterNoise::ideal(), 0),
            Err(EmitterError::MalformedSequence(_))
        ));
    }

    #[test]
    fn basis_changes_map_eigenstates_to_zero() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cases = [
            (Basis::X, [C64::new(h, 0.0), C64::new(h, 0.0)]),
            (Basis::Y, [C64::new(h, 0.0), C64::new(0.0, h)]),
        ];
        for (b, v) in cases {
            let rho = DensityMatrix::from_pure(vec![spin(0)], &v).unwrap();
            let out = rho
                .apply_unitary(&b.basis_change().unwrap().matrix(), &[spin(0)])
                .unwrap();
            close(out.fidelity_pure(&ket(&[0])).unwrap(), 1.0, 1e-12);
        }
    }

    #[test]
    fn emit_from_superposition() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let sp = DensityMatrix::from_pure(vec![spin(0)], &[C64::new(h, 0.0), C64::new(h, 0.0)]).unwrap();
        let reg = vacuum_register(0, &sp).unwrap();
        let out = emit_step(&reg, 0, TimeBin::Early, &EmitterNoise::ideal()).unwrap();
        // (|0,void> + |1,e>)/sqrt2 over |spin, n_e, n_l>
        let mut v = vec![C64::new(0.0, 0.0); 8];
        v[0b000] = C64::new(h, 0.0);
        v[0b110] = C64::new(h, 0.0);
        close(out.fidelity_pure(&v).unwrap(), 1.0, 1e-12);
    }

    #[test]
    fn no_emission_from_spin_up() {
        let up = DensityMatrix::basis(vec![spin(0)], 0).unwrap();
        let reg = vacuum_register(0, &up).unwrap();
        let out = emit_step(&reg, 0, TimeBin::Early, &EmitterNoise::ideal()).unwrap();
        assert_eq!(out.matrix(), reg.matrix());
    }

    #[test]
    fn double_emission_in_same_slot_rejected() {
        let down = DensityMatrix::basis(vec![spin(0)], 1).unwrap();
        let reg = vacuum_register(0, &down).unwrap();
        let once = emit_step(&reg, 0, TimeBin::Early, &EmitterNoise::ideal()).unwrap();
        assert_eq!(
            emit_step(&once, 0, TimeBin::Early, &EmitterNoise::ideal()).unwrap_err(),
            EmitterError::AlreadyEmitted(TimeBin::Early)
        );
    }

    #[test]
    fn ideal_cycle_hits_target() {
        let rs = ideal();
        close(rs.fidelity_to_target(), 1.0, 1e-10);
        close(rs.p_emitted, 1.0, 1e-12);
        assert!(rs.lost.is_none());
        let em = rs.emitted.as_ref().unwrap();
        close(em.fidelity_pure(&ResourceState::target()).unwrap(), 1.0, 1e-10);
    }

    #[test]
    fn ideal_photon_is_maximally_entangled() {
        let em = ideal().emitted.unwrap();
        let red = em.partial_trace(&[spin(0)]).unwrap();
        let mixed = DensityMatrix::maximally_mixed(vec![spin(0)]).unwrap();
        assert!(red.trace_distance(&mixed).unwrap() < 1e-12);
    }

    #[test]
    fn full_dephasing_kills_coherence() {
        let noise = EmitterNoise {
            p_deph_cycle: 0.5,
            ..EmitterNoise::ideal()
        };
        let rs = generate_resource_state(&standard_sequence(), &noise, 0).unwrap();
        close(rs.fidelity_to_target(), 0.5, 1e-12);
        let em = rs.emitted.unwrap();
        // time-bin photon is |0>=early, so the spin-photon Z correlation is +1
        close(em.expect(&"ZZ".parse().unwrap()).unwrap(), 1.0, 1e-12);
        close(em.expect(&"XX".parse().unwrap()).unwrap(), 0.0, 1e-12);
        close(em.expect(&"YY".parse().unwrap()).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn pi_over_rotation_fidelity() {
        for delta in [0.05, 0.2, -0.3, 0.7] {
            let noise = EmitterNoise {
                theta_err_pi: delta,
                ..EmitterNoise::ideal()
            };
            let rs = generate_resource_state(&standard_sequence(), &noise, 0).unwrap();
            close(rs.fidelity_to_target(), (delta / 2.0_f64).cos().powi(2), 1e-10);
        }
    }

    #[test]
    fn static_phase_is_refocused() {
        for phase in [0.1, 0.9, -2.0, 3.0] {
            let noise = EmitterNoise {
                static_phase: phase,
                ..EmitterNoise::ideal()
            };
            let rs = generate_resource_state(&standard_sequence(), &noise, 0).unwrap();
            close(rs.fidelity_to_target(), 1.0, 1e-10);
        }
    }

    #[test]
    fn emission_failure_moves_weight_to_loss() {
        let noise = EmitterNoise {
            p_emit_fail: 0.2,
            ..EmitterNoise::ideal()
        };
        let rs = generate_resource_state(&standard_sequence(), &noise, 0).unwrap();
        close(rs.p_emitted, 0.8, 1e-12);
        close(rs.fidelity_to_target(), 0.8, 1e-12);
        assert!(rs.lost.is_some());
    }

    #[test]
    fn invalid_noise_rejected() {
        let noise = EmitterNoise {
            f_read_0: 1.2,
            ..EmitterNoise::ideal()
        };
        assert!(matches!(noise.validate(), Err(EmitterError::InvalidNoise(_))));
        let noise = EmitterNoise {
            theta_err_pi: -PI,
            ..EmitterNoise::ideal()
        };
        assert!(noise.validate().is_err());
    }

    #[test]
    fn ideal_readouts_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = DensityMatrix::basis(vec![spin(0)], 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityMatrix::from_pure(vec![spin(0)], &[C64::new(h, 0.0), C64::new(h, 0.0)]).unwrap();
        for _ in 0..50 {
            let r = readout_spin(&one, spin(0), Basis::Z, &EmitterNoise::ideal(), &mut rng).unwrap();
            assert_eq!(r.outcome, -1);
            let r = readout_spin(&plus, spin(0), Basis::X, &EmitterNoise::ideal(), &mut rng).unwrap();
            assert_eq!(r.outcome, 1);
            assert!(r.state.trace_distance(&plus).unwrap() < 1e-12);
        }
    }

    #[test]
    fn readout_confusion_probability() {
        let noise = EmitterNoise {
            f_read_1: 0.9,
            f_read_0: 0.05,
            ..EmitterNoise::ideal()
        };
        let one = DensityMatrix::basis(vec![spin(0)], 1).unwrap();
        close(click_probability(&one, spin(0), Basis::Z, &noise).unwrap(), 0.9, 1e-12);
        let zero = DensityMatrix::basis(vec![spin(0)], 0).unwrap();
        close(click_probability(&zero, spin(0), Basis::Z, &noise).unwrap(), 0.05, 1e-12);
    }

    #[test]
    fn readout_collapses_partner() {
        // reading spin a of (|01>+|10>)/sqrt2 in Z leaves spin b anti-aligned
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = DensityMatrix::from_pure(
            vec![spin(0), spin(1)],
            &crate::densop::bell(crate::densop::Bell::PsiPlus),
        )
        .unwrap();
        for _ in 0..20 {
            let r = readout_spin(&psi, spin(0), Basis::Z, &EmitterNoise::ideal(), &mut rng).unwrap();
            let b = r.state.partial_trace(&[spin(1)]).unwrap();
            close(b.expect(&"Z".parse().unwrap()).unwrap(), -f64::from(r.outcome), 1e-12);
        }
    }

    #[test]
    fn t2_star_mapping() {
        close(dephasing_from_t2star(0.0, 1.0), 0.0, 1e-15);
        assert!(dephasing_from_t2star(100.0, 1.0) > 0.4999);
    }
}
