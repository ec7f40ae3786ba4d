//! Two-outcome charger measurement recorded in a memory spin.
//!
//! The memory is never instantiated. It starts in `|m_0⟩` and after the
//! controlled rotation the joint state is `Σ_j M_j ρ M_j† ⊗ |m_j⟩⟨m_j|`, so it
//! is tracked as an outcome label with a probability.

use std::f64::consts::TAU;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qla::{
    compress_site, eigenvalues_hermitian, embed_operators, expand_site, pauli, Operator, Role, SystemLayout,
};
use crate::thermo::{entropy_of_spectrum, shannon_entropy, von_neumann_entropy};

/// Outcomes with probability below this are dropped from conditional averages.
pub const P_FLOOR: f64 = 1e-12;

/// Which coupling the memory gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    /// `CNOT(φ)` between charger site and memory.
    Cnot,
    /// No coupling: a single outcome with `M_0 = I`. Used to check that a
    /// measured cycle without information reduces to the unmeasured one.
    Identity,
}

/// Measurement of charger spin `site` in the basis rotated by `phi` about y.
/// Outcome `j` is written to memory level `m_j`; `j = 0` is the lower level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementScheme {
    pub site: usize,
    phi: f64,
    pub kind: SchemeKind,
}

impl MeasurementScheme {
    pub fn new(site: usize, phi: f64) -> Result<Self> {
        if site == 0 {
            return Err(Error::InvalidParameter("charger sites are numbered from 1".into()));
        }
        if !phi.is_finite() {
            return Err(Error::InvalidParameter(format!("phi must be finite, got {phi}")));
        }
        Ok(Self {
            site,
            phi: phi.rem_euclid(TAU),
            kind: SchemeKind::Cnot,
        })
    }

    pub fn identity(site: usize) -> Result<Self> {
        Ok(Self {
            kind: SchemeKind::Identity,
            ..Self::new(site, 0.0)?
        })
    }

    /// Angle in `[0, 2π)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn role(&self) -> Role {
        Role::Charger(self.site)
    }

    /// Same site with `φ + π`: the outcome labels are swapped.
    pub fn conjugate(&self) -> Self {
        Self {
            phi: (self.phi + std::f64::consts::PI).rem_euclid(TAU),
            ..*self
        }
    }
}

pub fn conjugate_scheme(scheme: &MeasurementScheme) -> MeasurementScheme {
    scheme.conjugate()
}

/// Rotated basis vector `R(φ)|j⟩`.
fn rotated_basis_vector(phi: f64, j: usize) -> [C64; 2] {
    let r = pauli::y_rotation(phi);
    [r[(0, j)], r[(1, j)]]
}

fn projector(v: [C64; 2]) -> Mat<C64> {
    Mat::from_fn(2, 2, |i, j| v[i] * v[j].conj())
}

/// `(M_0, M_1)` on the measured charger spin, `M_j = R(φ)|j⟩⟨j|R(φ)†`.
/// The identity scheme gives `(I, 0)`.
pub fn measurement_operators(scheme: &MeasurementScheme) -> (Operator, Operator) {
    let layout = SystemLayout::single(scheme.role(), 2);
    let (m0, m1) = match scheme.kind {
        SchemeKind::Cnot => (
            projector(rotated_basis_vector(scheme.phi, 0)),
            projector(rotated_basis_vector(scheme.phi, 1)),
        ),
        SchemeKind::Identity => (pauli::identity(), Mat::zeros(2, 2)),
    };
    (
        Operator::new(layout.clone(), m0).expect("2x2 on a qubit layout"),
        Operator::new(layout, m1).expect("2x2 on a qubit layout"),
    )
}

/// `M_0 ⊗ I_m + M_1 ⊗ σ^x_m` embedded in `layout`.
pub fn cnot_gate(scheme: &MeasurementScheme, layout: &SystemLayout) -> Result<Operator> {
    if !layout.contains(Role::Memory) {
        return Err(Error::UnknownSubsystem(Role::Memory));
    }
    let (m0, m1) = measurement_operators(scheme);
    let x = pauli::x();
    let mut gate = embed_operators(layout, &[(scheme.role(), m0.matrix().as_ref())])?;
    let flip = embed_operators(
        layout,
        &[(scheme.role(), m1.matrix().as_ref()), (Role::Memory, x.as_ref())],
    )?;
    gate.add_scaled(1.0, &flip)?;
    Ok(gate)
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub probability: f64,
    /// `M_j ρ M_j† / p_j`.
    pub post_state: Operator,
    pub memory_level: usize,
    pub entropy: f64,
}

#[derive(Clone, Debug)]
pub struct MeasurementEnsemble {
    /// Outcomes at or above [`P_FLOOR`], in label order.
    pub outcomes: Vec<Outcome>,
    /// Probability of every label, including dropped ones.
    pub probabilities: Vec<f64>,
    pub shannon: f64,
    pub info_gain: f64,
}

impl MeasurementEnsemble {
    /// `Σ_j M_j ρ M_j†`.
    pub fn unconditional_state(&self) -> Result<Operator> {
        let first = &self.outcomes[0].post_state;
        let mut acc = Operator::zeros(first.layout().clone());
        for o in &self.outcomes {
            acc.add_scaled(o.probability, &o.post_state)?;
        }
        Ok(acc)
    }

    /// Memory populations `(p_0, p_1)` after the measurement.
    pub fn memory_populations(&self) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (j, &q) in self.probabilities.iter().enumerate().take(2) {
            p[j] = q;
        }
        p
    }
}

/// Measures `rho_bc` and evaluates every entropy by diagonalization.
pub fn apply_measurement(rho_bc: &Operator, scheme: &MeasurementScheme) -> Result<MeasurementEnsemble> {
    let s_rho = von_neumann_entropy(rho_bc)?;
    apply_measurement_with_entropy(rho_bc, scheme, s_rho)
}

/// Like [`apply_measurement`] with `S(ρ)` supplied by the caller, e.g. from
/// the Boltzmann weights of a thermal state.
///
/// The post-measurement entropies come from the compressed block
/// `⟨r_j|ρ|r_j⟩/p_j`, which has the same nonzero spectrum as the rank-1
/// projected state.
pub fn apply_measurement_with_entropy(
    rho_bc: &Operator,
    scheme: &MeasurementScheme,
    rho_entropy: f64,
) -> Result<MeasurementEnsemble> {
    let role = scheme.role();
    if !rho_bc.layout().contains(role) {
        return Err(Error::UnknownSubsystem(role));
    }
    if rho_bc.layout().contains(Role::Memory) {
        return Err(Error::InvalidLayout("state must live on battery and charger only".into()));
    }
    match scheme.kind {
        SchemeKind::Identity => {
            let outcome = Outcome {
                probability: 1.0,
                post_state: rho_bc.clone(),
                memory_level: 0,
                entropy: rho_entropy,
            };
            Ok(MeasurementEnsemble {
                outcomes: vec![outcome],
                probabilities: vec![1.0, 0.0],
                shannon: 0.0,
                info_gain: 0.0,
            })
        }
        SchemeKind::Cnot => {
            let mut outcomes = Vec::with_capacity(2);
            let mut probabilities = Vec::with_capacity(2);
            for j in 0..2 {
                let v = rotated_basis_vector(scheme.phi, j);
                let mut block = compress_site(rho_bc, role, &v)?;
                let p = block.trace().re;
                probabilities.push(p);
                if p < P_FLOOR {
                    continue;
                }
                block.scale_in_place(C64::new(1.0 / p, 0.0));
                let entropy = entropy_of_spectrum(&eigenvalues_hermitian(&block)?)?;
                let post_state = expand_site(&block, rho_bc.layout(), role, &v)?;
                outcomes.push(Outcome {
                    probability: p,
                    post_state,
                    memory_level: j,
                    entropy,
                });
            }
            if outcomes.is_empty() {
                return Err(Error::DegenerateMeasurement);
            }
            let shannon = shannon_entropy(&probabilities)?;
            let info_gain =
                rho_entropy - outcomes.iter().map(|o| o.probability * o.entropy).sum::<f64>();
            Ok(MeasurementEnsemble {
                outcomes,
                probabilities,
                shannon,
                info_gain,
            })
        }
    }
}

/// Groenewold information gain `S(ρ) − Σ_j p_j S(ρ^(j))`, recomputed from
/// the full post-measurement states.
pub fn information_gain(rho_bc: &Operator, ensemble: &MeasurementEnsemble) -> Result<f64> {
    let mut gain = von_neumann_entropy(rho_bc)?;
    for o in &ensemble.outcomes {
        gain -= o.probability * von_neumann_entropy(&o.post_state)?;
    }
    Ok(gain)
}
