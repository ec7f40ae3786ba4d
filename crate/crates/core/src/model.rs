//! Transverse-field Ising battery, charger chain and memory spin.
//!
//! Conventions: `|0⟩` is the `+1` eigenvector of `σ^z`, so `-h σ^z` has
//! ground state `|0⟩`. Units are `ħ = k_B = 1`.

use crate::error::{Error, Result};
use crate::qla::{pauli, LocalHamiltonian, Operator, Role, SystemLayout};

/// Physical constants of the battery–charger–memory model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub h_b: f64,
    pub h_c: f64,
    /// Memory field; zero selects the degenerate memory.
    pub h_m: f64,
    pub kappa_b: f64,
    pub kappa_c: f64,
    pub n_charger: usize,
}

impl ModelParams {
    /// `h_b = 4, h_c = 2, h_m = 0.2, κ_b = 4, κ_c = 0.2, N = 10`.
    pub const PAPER_DEFAULT: ModelParams = ModelParams {
        h_b: 4.0,
        h_c: 2.0,
        h_m: 0.2,
        kappa_b: 4.0,
        kappa_c: 0.2,
        n_charger: 10,
    };

    pub fn paper_default() -> Self {
        Self::PAPER_DEFAULT
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-default" => Some(Self::PAPER_DEFAULT),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_charger == 0 {
            return Err(Error::InvalidParameter("n_charger must be at least 1".into()));
        }
        for (name, v) in [
            ("h_b", self.h_b),
            ("h_c", self.h_c),
            ("h_m", self.h_m),
            ("kappa_b", self.kappa_b),
            ("kappa_c", self.kappa_c),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.h_m < 0.0 {
            return Err(Error::InvalidParameter("h_m must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_degenerate_memory(&self) -> bool {
        self.h_m == 0.0
    }

    /// True when both parameter sets give the same battery–charger Hamiltonian.
    pub fn same_battery_charger(&self, other: &ModelParams) -> bool {
        self.h_b == other.h_b
            && self.h_c == other.h_c
            && self.kappa_b == other.kappa_b
            && self.kappa_c == other.kappa_c
            && self.n_charger == other.n_charger
    }

    pub fn charger_roles(&self) -> Vec<Role> {
        (1..=self.n_charger).map(Role::Charger).collect()
    }

    /// `[battery, charger 1..N]`.
    pub fn battery_charger_layout(&self) -> Result<SystemLayout> {
        let mut roles = vec![Role::Battery];
        roles.extend(self.charger_roles());
        SystemLayout::qubits(&roles)
    }

    /// `[battery, charger 1..N, memory]`.
    pub fn full_layout(&self) -> Result<SystemLayout> {
        let mut roles = vec![Role::Battery];
        roles.extend(self.charger_roles());
        roles.push(Role::Memory);
        SystemLayout::qubits(&roles)
    }

    /// Memory level energies `(m_0, m_1) = (-h_m, h_m)`.
    pub fn memory_levels(&self) -> [f64; 2] {
        [-self.h_m, self.h_m]
    }
}

/// `-h_b σ^z` on the battery spin.
pub fn battery_terms(p: &ModelParams) -> LocalHamiltonian {
    let mut h = LocalHamiltonian::new();
    h.push(-p.h_b, vec![(Role::Battery, pauli::z())]);
    h
}

/// Open chain `-(Σ_{n<N} h_c(σ^z_n + σ^x_n) + κ_c σ^x_n σ^x_{n+1}) - h_c(σ^z_N + σ^x_N)`.
pub fn charger_terms(p: &ModelParams) -> LocalHamiltonian {
    let field = &pauli::z() + &pauli::x();
    let mut h = LocalHamiltonian::new();
    for n in 1..=p.n_charger {
        h.push(-p.h_c, vec![(Role::Charger(n), field.clone())]);
        if n < p.n_charger {
            h.push(
                -p.kappa_c,
                vec![(Role::Charger(n), pauli::x()), (Role::Charger(n + 1), pauli::x())],
            );
        }
    }
    h
}

/// `-κ_b σ^x_b σ^x_1`.
pub fn interaction_terms(p: &ModelParams) -> LocalHamiltonian {
    let mut h = LocalHamiltonian::new();
    h.push(-p.kappa_b, vec![(Role::Battery, pauli::x()), (Role::Charger(1), pauli::x())]);
    h
}

/// `-h_m σ^z` on the memory spin.
pub fn memory_terms(p: &ModelParams) -> LocalHamiltonian {
    let mut h = LocalHamiltonian::new();
    h.push(-p.h_m, vec![(Role::Memory, pauli::z())]);
    h
}

pub fn build_battery_h(p: &ModelParams, layout: &SystemLayout) -> Result<Operator> {
    battery_terms(p).to_operator(layout)
}

pub fn build_charger_h(p: &ModelParams, layout: &SystemLayout) -> Result<Operator> {
    charger_terms(p).to_operator(layout)
}

pub fn build_interaction(p: &ModelParams, layout: &SystemLayout) -> Result<Operator> {
    interaction_terms(p).to_operator(layout)
}

pub fn build_memory_h(p: &ModelParams, layout: &SystemLayout) -> Result<Operator> {
    memory_terms(p).to_operator(layout)
}

/// Terms of `H_b + H_c (+ V) (+ H_m when `with_memory`)`.
pub fn total_terms(p: &ModelParams, include_interaction: bool, with_memory: bool) -> LocalHamiltonian {
    let mut h = battery_terms(p);
    h.extend(&charger_terms(p));
    if include_interaction {
        h.extend(&interaction_terms(p));
    }
    if with_memory {
        h.extend(&memory_terms(p));
    }
    h
}

/// `H_b + H_c (+ V) (+ H_m when the layout holds the memory)`.
pub fn build_total_h(p: &ModelParams, layout: &SystemLayout, include_interaction: bool) -> Result<Operator> {
    total_terms(p, include_interaction, layout.contains(Role::Memory)).to_operator(layout)
}
