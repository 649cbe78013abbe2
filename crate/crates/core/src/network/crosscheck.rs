//! Replays small networks in the dense engine and compares every weight-1
//! and weight-2 Pauli expectation with the tableau.

use serde::Serialize;

use crate::densop::{bell, projector, Bell, CMatrix, DensityMatrix, Pauli, PauliString, QubitLabel, TimeBin, MAX_QUBITS};
use crate::fusion::{effective_channel, DetectionPattern, FusionNoise};

use super::{apply_fusion_effect, pauli_on, FusionEffect, FusionKind, FusionSpec, NetworkError, NetworkSpec, QubitRef, SpinMeasurement, StabilizerTableau};

/// Largest number of surviving qubits compared.
pub const MAX_SURVIVING: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CrosscheckCase {
    pub name: String,
    pub spec: NetworkSpec,
    /// One per fusion, in order.
    pub effects: Vec<FusionEffect>,
    /// (ZZ, XX) per spin measurement, in order.
    pub spin_parities: Vec<(i8, i8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub name: String,
    pub paulis_compared: usize,
    pub max_deviation: f64,
    /// Both engines found the prescribed outcomes to have zero probability.
    pub impossible: bool,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckSummary {
    pub cases: usize,
    pub impossible_cases: usize,
    pub max_deviation: f64,
    pub all_agree: bool,
    pub reports: Vec<CrosscheckReport>,
}

fn pair_of(spec: &NetworkSpec, q: QubitRef) -> Result<u32, NetworkError> {
    Ok((spec.index(q)? / 2) as u32)
}

fn label(index: usize) -> QubitLabel {
    let pair = (index / 2) as u32;
    if index % 2 == 0 {
        QubitLabel::Spin(pair)
    } else {
        QubitLabel::Photon(pair)
    }
}

struct Dense {
    state: Option<DensityMatrix>,
    introduced: Vec<bool>,
}

impl Dense {
    fn ensure(&mut self, pair: u32) -> Result<(), NetworkError> {
        if self.introduced[pair as usize] {
            return Ok(());
        }
        let size = self.state.as_ref().map_or(0, |s| s.n_qubits()) + 2;
        if size > MAX_QUBITS {
            return Err(NetworkError::SizeOverflow(size));
        }
        let fresh = DensityMatrix::from_pure(vec![QubitLabel::Spin(pair), QubitLabel::Photon(pair)], &bell(Bell::PhiMinus))?;
        self.state = Some(match &self.state {
            Some(s) => s.tensor(&fresh)?,
            None => fresh,
        });
        self.introduced[pair as usize] = true;
        Ok(())
    }

    /// Returns false when the outcome has zero probability.
    fn herald(&mut self, effect: &CMatrix, targets: &[QubitLabel]) -> Result<bool, NetworkError> {
        let state = self.state.as_ref().expect("register introduced");
        if state.n_qubits() == targets.len() {
            let p = (state.matrix() * effect).trace().re;
            self.state = None;
            return Ok(p > crate::densop::NULL_PROB);
        }
        let proj = state.herald(effect, targets)?;
        match proj.state {
            Some(s) => {
                self.state = Some(s);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn trace_out(&mut self, targets: &[QubitLabel]) -> Result<(), NetworkError> {
        let state = self.state.as_ref().expect("register introduced");
        let keep: Vec<QubitLabel> = state.labels().iter().copied().filter(|l| !targets.contains(l)).collect();
        self.state = if keep.is_empty() {
            None
        } else {
            Some(state.partial_trace(&keep)?)
        };
        Ok(())
    }
}

fn photon_effect(effect: FusionEffect) -> Result<Option<CMatrix>, NetworkError> {
    let channel = || effective_channel(&FusionNoise::ideal());
    let element = |pattern: &str| -> Result<CMatrix, NetworkError> {
        let p: DetectionPattern = pattern.parse()?;
        Ok(channel()?.povms.elements[&p].both.clone())
    };
    Ok(match effect {
        FusionEffect::Parity { zz: -1, xx: 1 } => Some(element("e_c,l_c")?),
        FusionEffect::Parity { zz: -1, .. } => Some(element("e_c,l_d")?),
        FusionEffect::Parity { xx: 1, .. } => Some(projector(&bell(Bell::PhiPlus))),
        FusionEffect::Parity { .. } => Some(projector(&bell(Bell::PhiMinus))),
        FusionEffect::Which(TimeBin::Early) => Some(element("e_c,e_c")?),
        FusionEffect::Which(TimeBin::Late) => Some(element("l_c,l_c")?),
        FusionEffect::Erased => None,
    })
}

fn bell_projector(zz: i8, xx: i8) -> CMatrix {
    let kind = match (zz > 0, xx > 0) {
        (true, true) => Bell::PhiPlus,
        (true, false) => Bell::PhiMinus,
        (false, true) => Bell::PsiPlus,
        (false, false) => Bell::PsiMinus,
    };
    projector(&bell(kind))
}

enum TableauRun {
    Done(StabilizerTableau),
    Impossible,
}

fn run_tableau(case: &CrosscheckCase) -> Result<TableauRun, NetworkError> {
    let spec = &case.spec;
    let mut t = spec.initial_tableau()?;
    let n = t.n_qubits();
    for (f, &effect) in spec.fusions.iter().zip(&case.effects) {
        match apply_fusion_effect(&mut t, spec.index(f.a)?, spec.index(f.b)?, effect) {
            Err(NetworkError::ImpossibleOutcome(_)) => return Ok(TableauRun::Impossible),
            r => {
                r?;
            }
        }
    }
    for (m, &(zz, xx)) in spec.spin_measurements.iter().zip(&case.spin_parities) {
        let (a, b) = (spec.index(m.a)?, spec.index(m.b)?);
        for (p, s) in [(Pauli::Z, zz), (Pauli::X, xx)] {
            match t.measure_forced(&pauli_on(n, &[(a, p), (b, p)], false), s) {
                Err(NetworkError::ImpossibleOutcome(_)) => return Ok(TableauRun::Impossible),
                r => {
                    r?;
                }
            }
        }
        t.discard(a)?;
        t.discard(b)?;
    }
    Ok(TableauRun::Done(t))
}

/// `None` when some prescribed outcome has zero probability.
fn run_dense(case: &CrosscheckCase) -> Result<Option<DensityMatrix>, NetworkError> {
    let spec = &case.spec;
    let mut d = Dense {
        state: None,
        introduced: vec![false; spec.n_pairs()],
    };
    for (f, &effect) in spec.fusions.iter().zip(&case.effects) {
        let (pa, pb) = (pair_of(spec, f.a)?, pair_of(spec, f.b)?);
        d.ensure(pa)?;
        d.ensure(pb)?;
        let targets = [QubitLabel::Photon(pa), QubitLabel::Photon(pb)];
        match photon_effect(effect)? {
            Some(e) => {
                if !d.herald(&e, &targets)? {
                    return Ok(None);
                }
            }
            None => d.trace_out(&targets)?,
        }
    }
    for (m, &(zz, xx)) in spec.spin_measurements.iter().zip(&case.spin_parities) {
        let (pa, pb) = (pair_of(spec, m.a)?, pair_of(spec, m.b)?);
        d.ensure(pa)?;
        d.ensure(pb)?;
        if !d.herald(&bell_projector(zz, xx), &[QubitLabel::Spin(pa), QubitLabel::Spin(pb)])? {
            return Ok(None);
        }
    }
    for pair in 0..spec.n_pairs() as u32 {
        d.ensure(pair)?;
    }
    Ok(d.state)
}

/// Runs `case` through both engines and compares all weight-1 and weight-2
/// Pauli expectations on the surviving qubits.
pub fn crosscheck_dense(case: &CrosscheckCase) -> Result<CrosscheckReport, NetworkError> {
    let spec = &case.spec;
    spec.validate()?;
    if case.effects.len() != spec.fusions.len() || case.spin_parities.len() != spec.spin_measurements.len() {
        return Err(NetworkError::MalformedSpec(format!("{}: outcome count does not match the network", case.name)));
    }
    let tableau = run_tableau(case)?;
    let dense = run_dense(case)?;
    let (t, rho) = match (tableau, dense) {
        (TableauRun::Impossible, None) => {
            return Ok(CrosscheckReport {
                name: case.name.clone(),
                paulis_compared: 0,
                max_deviation: 0.0,
                impossible: true,
                agree: true,
            });
        }
        (TableauRun::Done(t), Some(rho)) => (t, rho),
        _ => {
            return Ok(CrosscheckReport {
                name: case.name.clone(),
                paulis_compared: 0,
                max_deviation: 1.0,
                impossible: false,
                agree: false,
            });
        }
    };
    let n = t.n_qubits();
    let surviving: Vec<usize> = (0..n).filter(|&q| !t.is_removed(q)).collect();
    if surviving.len() > MAX_SURVIVING {
        return Err(NetworkError::SizeOverflow(surviving.len()));
    }
    let order: Vec<QubitLabel> = surviving.iter().map(|&q| label(q)).collect();
    let rho = rho.reorder(&order)?;
    let m = surviving.len();
    let mut strings = Vec::new();
    for i in 0..m {
        for pi in [Pauli::X, Pauli::Y, Pauli::Z] {
            strings.push(vec![(i, pi)]);
            for j in i + 1..m {
                for pj in [Pauli::X, Pauli::Y, Pauli::Z] {
                    strings.push(vec![(i, pi), (j, pj)]);
                }
            }
        }
    }
    let tab_strings: Vec<PauliString> = strings
        .iter()
        .map(|s| {
            let letters: Vec<(usize, Pauli)> = s.iter().map(|&(i, p)| (surviving[i], p)).collect();
            pauli_on(n, &letters, false)
        })
        .collect();
    let predicted = t.expectations(&tab_strings)?;
    let mut max_deviation = 0.0f64;
    for (s, &v) in strings.iter().zip(&predicted) {
        let dense = rho.expect(&pauli_on(m, s, false))?;
        max_deviation = max_deviation.max((dense - f64::from(v)).abs());
    }
    Ok(CrosscheckReport {
        name: case.name.clone(),
        paulis_compared: strings.len(),
        max_deviation,
        impossible: false,
        agree: max_deviation < 1e-10,
    })
}

fn effect_name(e: FusionEffect) -> String {
    match e {
        FusionEffect::Parity { zz, xx } => format!("zz{zz:+}xx{xx:+}"),
        FusionEffect::Which(bin) => format!("which_{}", bin.symbol()),
        FusionEffect::Erased => "erased".into(),
    }
}

fn fusion(a: QubitRef, b: QubitRef, kind: FusionKind) -> FusionSpec {
    FusionSpec {
        a,
        b,
        kind,
        outcome: None,
    }
}

/// Small networks: one space-like and one time-like fusion, two fusions on
/// two generators over two cycles (both orientations), and a four-cycle
/// chain closed by a spin Bell measurement.
pub fn standard_networks() -> Vec<(String, NetworkSpec)> {
    let single_space = NetworkSpec {
        rsg_count: 2,
        cycles: 1,
        fusions: vec![fusion(QubitRef::photon(0, 0), QubitRef::photon(1, 0), FusionKind::SpaceLike)],
        spin_measurements: vec![],
    };
    let single_time = NetworkSpec {
        rsg_count: 1,
        cycles: 2,
        fusions: vec![fusion(QubitRef::photon(0, 0), QubitRef::photon(0, 1), FusionKind::TimeLike)],
        spin_measurements: vec![],
    };
    let square_space = NetworkSpec {
        rsg_count: 2,
        cycles: 2,
        fusions: vec![
            fusion(QubitRef::photon(0, 0), QubitRef::photon(1, 0), FusionKind::SpaceLike),
            fusion(QubitRef::photon(0, 1), QubitRef::photon(1, 1), FusionKind::SpaceLike),
        ],
        spin_measurements: vec![],
    };
    let square_time = NetworkSpec {
        rsg_count: 2,
        cycles: 2,
        fusions: vec![
            fusion(QubitRef::photon(0, 0), QubitRef::photon(0, 1), FusionKind::TimeLike),
            fusion(QubitRef::photon(1, 0), QubitRef::photon(1, 1), FusionKind::TimeLike),
        ],
        spin_measurements: vec![],
    };
    let mut chain = NetworkSpec::chain(4);
    chain.spin_measurements = vec![SpinMeasurement {
        a: QubitRef::spin(0, 1),
        b: QubitRef::spin(0, 2),
    }];
    vec![
        ("space".into(), single_space),
        ("time".into(), single_time),
        ("square_space".into(), square_space),
        ("square_time".into(), square_time),
        ("chain4".into(), chain),
    ]
}

/// Every fusion effect (four parity pairs, two bins, erasure) on every
/// fusion, and every parity pair on every spin measurement, for each
/// network of [`standard_networks`].
pub fn standard_cases() -> Vec<CrosscheckCase> {
    let parities = [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)];
    let mut out = Vec::new();
    for (name, spec) in standard_networks() {
        let mut combos: Vec<(Vec<FusionEffect>, Vec<(i8, i8)>)> = vec![(vec![], vec![])];
        for _ in &spec.fusions {
            combos = combos
                .into_iter()
                .flat_map(|(e, s)| {
                    FusionEffect::ALL.iter().map(move |&x| {
                        let mut e = e.clone();
                        e.push(x);
                        (e, s.clone())
                    })
                })
                .collect();
        }
        for _ in &spec.spin_measurements {
            combos = combos
                .into_iter()
                .flat_map(|(e, s)| {
                    parities.iter().map(move |&p| {
                        let mut s = s.clone();
                        s.push(p);
                        (e.clone(), s)
                    })
                })
                .collect();
        }
        for (effects, spin_parities) in combos {
            let mut label = name.clone();
            for e in &effects {
                label.push('/');
                label.push_str(&effect_name(*e));
            }
            for (zz, xx) in &spin_parities {
                label.push_str(&format!("/spin_zz{zz:+}xx{xx:+}"));
            }
            out.push(CrosscheckCase {
                name: label,
                spec: spec.clone(),
                effects,
                spin_parities,
            });
        }
    }
    out
}

/// Runs [`standard_cases`].
pub fn crosscheck_suite() -> Result<CrosscheckSummary, NetworkError> {
    let reports = standard_cases()
        .iter()
        .map(crosscheck_dense)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CrosscheckSummary {
        cases: reports.len(),
        impossible_cases: reports.iter().filter(|r| r.impossible).count(),
        max_deviation: reports.iter().map(|r| r.max_deviation).fold(0.0, f64::max),
        all_agree: reports.iter().all(|r| r.agree),
        reports,
    })
}
