//! Gibbs states, entropies, free energies and ergotropy.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qla::{eig_hermitian, eigenvalues_hermitian, Operator, Spectrum};

/// Eigenvalues of a density operator below this are treated as invalid input.
pub const NEGATIVE_EIGENVALUE_TOL: f64 = -1e-8;

const PASSIVITY_TOL: f64 = 1e-10;

/// Thermal state built from a cached Hamiltonian spectrum.
#[derive(Clone, Debug)]
pub struct ThermalState {
    pub beta: f64,
    pub rho: Operator,
    /// Boltzmann weights in the ascending eigenbasis of the Hamiltonian.
    pub populations: Vec<f64>,
    /// Von Neumann entropy, evaluated from the Boltzmann weights.
    pub entropy: f64,
    pub mean_energy: f64,
}

impl ThermalState {
    /// `e^{-βH}/Z`, computed as `e^{-β(H - E_min)}` with the shift absorbed
    /// into the partition function.
    pub fn from_spectrum(spectrum: &Spectrum, beta: f64) -> Result<Self> {
        let populations = boltzmann_weights(spectrum.eigenvalues(), beta)?;
        let rho = spectrum.reconstruct(&populations)?;
        let entropy = entropy_of_spectrum(&populations)?;
        let mean_energy = populations
            .iter()
            .zip(spectrum.eigenvalues())
            .map(|(p, e)| p * e)
            .sum();
        Ok(Self {
            beta,
            rho,
            populations,
            entropy,
            mean_energy,
        })
    }
}

/// Normalized Boltzmann weights of an energy list.
pub fn boltzmann_weights(energies: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "inverse temperature must be finite and non-negative, got {beta}"
        )));
    }
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|&e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = w.iter().sum();
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::NonFinite(format!("partition function {z}")));
    }
    Ok(w.into_iter().map(|x| x / z).collect())
}

pub fn gibbs_state(h: &Operator, beta: f64) -> Result<Operator> {
    let spectrum = eig_hermitian(h)?;
    Ok(ThermalState::from_spectrum(&spectrum, beta)?.rho)
}

/// Clamps tiny negative eigenvalues of a density operator to zero.
pub fn clamp_probabilities(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    eigenvalues
        .iter()
        .map(|&l| {
            if l < NEGATIVE_EIGENVALUE_TOL {
                Err(Error::InvalidState(format!("negative eigenvalue {l:.3e}")))
            } else {
                Ok(l.clamp(0.0, 1.0))
            }
        })
        .collect()
}

/// `-Σ λ ln λ` with `0 ln 0 = 0`.
pub fn entropy_of_spectrum(eigenvalues: &[f64]) -> Result<f64> {
    Ok(clamp_probabilities(eigenvalues)?
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum())
}

pub fn von_neumann_entropy(rho: &Operator) -> Result<f64> {
    entropy_of_spectrum(&eigenvalues_hermitian(rho)?)
}

/// Shannon entropy in nats.
pub fn shannon_entropy(probs: &[f64]) -> Result<f64> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!("probabilities sum to {total}")));
    }
    let mut h = 0.0;
    for &p in probs {
        if p < -1e-12 {
            return Err(Error::InvalidState(format!("negative probability {p:.3e}")));
        }
        let p = p.clamp(0.0, 1.0);
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h.max(0.0))
}

/// Non-equilibrium free energy `Tr[Hρ] - T S(ρ)`.
pub fn free_energy(rho: &Operator, h: &Operator, temperature: f64) -> Result<f64> {
    if rho.layout() != h.layout() {
        return Err(Error::InvalidLayout("state and Hamiltonian layouts differ".into()));
    }
    let energy = h.expectation(rho)?;
    if temperature == 0.0 {
        return Ok(energy);
    }
    Ok(energy - temperature * von_neumann_entropy(rho)?)
}

#[derive(Clone, Debug)]
pub struct ErgotropyResult {
    pub value: f64,
    /// `Σ_k e^{iθ_k} |E_k⟩⟨p_k|`.
    pub extraction_unitary: Operator,
    /// `Σ_k p_k |E_k⟩⟨E_k|`.
    pub passive_state: Operator,
    /// State eigenvalues in descending order.
    pub populations: Vec<f64>,
    /// Hamiltonian eigenvalues in ascending order.
    pub energies: Vec<f64>,
}

/// Phase list for a two-level battery: a single relative phase on the upper level.
pub fn battery_phases(theta: f64) -> Vec<f64> {
    vec![0.0, theta]
}

/// Maximal unitary work extraction from `rho` under `h`.
///
/// State eigenvectors are sorted by descending eigenvalue and paired with
/// energy eigenvectors sorted ascending; ties keep the solver order. An empty
/// `phases` slice means all phases are zero.
///
/// Phase convention: on top of the solver's canonical eigenvector phases,
/// the last state eigenvector is rotated so that the zero-phase unitary has
/// unit determinant. The value does not depend on this choice; the unitary,
/// and through it any correlation energy with other subsystems, does.
pub fn ergotropy(rho: &Operator, h: &Operator, phases: &[f64]) -> Result<ErgotropyResult> {
    let d = rho.dim();
    if h.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: h.dim(),
        });
    }
    if !phases.is_empty() && phases.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: phases.len(),
        });
    }
    let h_spec = eig_hermitian(h)?;
    let rho_spec = eig_hermitian(rho)?;

    let raw = clamp_probabilities(rho_spec.eigenvalues())?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    let populations: Vec<f64> = order.iter().map(|&k| raw[k]).collect();

    let evecs_e = h_spec.eigenvectors();
    let mut evecs_p = Mat::from_fn(d, d, |i, j| rho_spec.eigenvectors()[(i, order[j])]);
    let det_e = evecs_e.determinant();
    let det_p = evecs_p.determinant();
    let fix = det_e * det_p.conj();
    if fix.norm() > 0.0 {
        let alpha = fix / fix.norm();
        for x in evecs_p.col_as_slice_mut(d - 1) {
            *x *= alpha;
        }
    }

    let phase = |k: usize| {
        let t = phases.get(k).copied().unwrap_or(0.0);
        C64::new(t.cos(), t.sin())
    };
    let unitary = Mat::from_fn(d, d, |i, j| {
        (0..d)
            .map(|k| phase(k) * evecs_e[(i, k)] * evecs_p[(j, k)].conj())
            .sum::<C64>()
    });
    let passive = Mat::from_fn(d, d, |i, j| {
        (0..d)
            .map(|k| evecs_e[(i, k)] * evecs_e[(j, k)].conj() * populations[k])
            .sum::<C64>()
    });
    let energies = h_spec.eigenvalues().to_vec();
    let passive_energy: f64 = populations.iter().zip(&energies).map(|(p, e)| p * e).sum();
    let value = h.expectation(rho)? - passive_energy;
    Ok(ErgotropyResult {
        value,
        extraction_unitary: Operator::new(rho.layout().clone(), unitary)?,
        passive_state: Operator::new(rho.layout().clone(), passive)?,
        populations,
        energies,
    })
}

/// True iff `rho` commutes with `h` and its populations do not increase with
/// energy. Degenerate energy levels are compared as blocks.
pub fn is_passive(rho: &Operator, h: &Operator) -> bool {
    let Ok(comm) = rho.commutator_norm(h) else {
        return false;
    };
    let scale = h.max_abs().max(1.0);
    if comm > PASSIVITY_TOL * scale {
        return false;
    }
    let Ok(spec) = eig_hermitian(h) else {
        return false;
    };
    let energies = spec.eigenvalues();
    let u = spec.eigenvectors();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for k in 0..energies.len() {
        match blocks.last_mut() {
            Some(b) if (energies[k] - energies[b[0]]).abs() <= PASSIVITY_TOL * scale => b.push(k),
            _ => blocks.push(vec![k]),
        }
    }
    let mut prev_min = f64::INFINITY;
    for block in blocks {
        // ρ compressed onto the degenerate eigenspace
        let m = block.len();
        let comp = Mat::from_fn(m, m, |a, b| {
            let (ka, kb) = (block[a], block[b]);
            (0..rho.dim())
                .flat_map(|i| (0..rho.dim()).map(move |j| (i, j)))
                .map(|(i, j)| u[(i, ka)].conj() * rho.get(i, j) * u[(j, kb)])
                .sum::<C64>()
        });
        let Ok(vals) = Operator::from_matrix(comp).and_then(|c| eigenvalues_hermitian(&c)) else {
            return false;
        };
        let (lo, hi) = (vals[0], vals[m - 1]);
        if hi > prev_min + PASSIVITY_TOL {
            return false;
        }
        prev_min = lo;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qla::{pauli, Role, SystemLayout};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qubit(m: Mat<C64>) -> Operator {
        Operator::from_matrix(m).unwrap()
    }

    fn diag(v: &[f64]) -> Operator {
        Operator::diagonal(SystemLayout::anonymous(&[v.len()]).unwrap(), v).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng, d: usize) -> Operator {
        let a = Mat::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut rho = Operator::from_matrix(&a * a.adjoint()).unwrap();
        let tr = rho.trace().re;
        rho.scale_in_place(C64::new(1.0 / tr, 0.0));
        rho
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> Operator {
        let a = Mat::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        Operator::from_matrix(&a + a.adjoint()).unwrap()
    }

    #[test]
    fn gibbs_infinite_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian(&mut rng, 4);
        let rho = gibbs_state(&h, 0.0).unwrap();
        assert!(rho.max_abs_diff(&Operator::identity(h.layout().clone()).scaled(0.25)) < 1e-14);
    }

    #[test]
    fn gibbs_zero_temperature_limit() {
        let h = diag(&[0.3, -1.0, 2.0]);
        let rho = gibbs_state(&h, 1e3).unwrap();
        assert_abs_diff_eq!(rho.get(1, 1).re, 1.0, epsilon = 1e-10);
        assert!(rho.get(0, 0).re < 1e-10);
    }

    #[test]
    fn gibbs_rejects_bad_beta() {
        let h = diag(&[0.0, 1.0]);
        assert!(gibbs_state(&h, -1.0).is_err());
        assert!(gibbs_state(&h, f64::NAN).is_err());
    }

    #[test]
    fn gibbs_commutes_and_has_unit_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_hermitian(&mut rng, 6);
        let rho = gibbs_state(&h, 0.7).unwrap();
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        assert!(rho.commutator_norm(&h).unwrap() < 1e-10);
        assert!(rho.is_density(1e-10));
    }

    #[test]
    fn entropy_basics() {
        let pure = diag(&[1.0, 0.0]);
        assert_eq!(von_neumann_entropy(&pure).unwrap(), 0.0);
        assert_abs_diff_eq!(von_neumann_entropy(&diag(&[0.5, 0.5])).unwrap(), 2f64.ln(), epsilon = 1e-15);
        let oracle = -0.7f64 * 0.7f64.ln() - 0.3 * 0.3f64.ln();
        assert_abs_diff_eq!(von_neumann_entropy(&diag(&[0.7, 0.3])).unwrap(), oracle, epsilon = 1e-15);
        assert!(von_neumann_entropy(&diag(&[1.1, -0.1])).is_err());
    }

    #[test]
    fn shannon_basics() {
        assert_eq!(shannon_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(shannon_entropy(&[0.5, 0.5]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(shannon_entropy(&[0.9, 0.1]).unwrap(), 0.325083, epsilon = 1e-6);
        assert!(shannon_entropy(&[0.5, 0.4]).is_err());
        assert!(shannon_entropy(&[1.1, -0.1]).is_err());
        assert_eq!(shannon_entropy(&[1.0 + 1e-13, -1e-13]).unwrap(), 0.0);
    }

    #[test]
    fn free_energy_cases() {
        let h = diag(&[-1.0, 1.0]);
        let mixed = diag(&[0.5, 0.5]);
        assert_abs_diff_eq!(free_energy(&mixed, &h, 1.0).unwrap(), -(2f64.ln()), epsilon = 1e-15);
        let rho = diag(&[0.8, 0.2]);
        assert_abs_diff_eq!(free_energy(&rho, &h, 0.0).unwrap(), -0.6, epsilon = 1e-15);
        let other = Operator::diagonal(SystemLayout::single(Role::Battery, 2), &[-1.0, 1.0]).unwrap();
        assert!(free_energy(&rho, &other, 1.0).is_err());
    }

    #[test]
    fn gibbs_minimizes_free_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_hermitian(&mut rng, 3);
        let t = 0.8;
        let f_eq = free_energy(&gibbs_state(&h, 1.0 / t).unwrap(), &h, t).unwrap();
        for _ in 0..100 {
            let rho = random_density(&mut rng, 3);
            assert!(free_energy(&rho, &h, t).unwrap() >= f_eq - 1e-12);
        }
    }

    #[test]
    fn ergotropy_of_thermal_state_vanishes() {
        let h = diag(&[-4.0, 4.0]);
        let rho = gibbs_state(&h, 0.3).unwrap();
        let r = ergotropy(&rho, &h, &[]).unwrap();
        assert!(r.value.abs() < 1e-12);
        let u = r.extraction_unitary;
        assert!(u.get(0, 1).norm() < 1e-12 && u.get(1, 0).norm() < 1e-12);
        assert!(u.is_unitary(1e-12));
    }

    #[test]
    fn ergotropy_of_inverted_qubit() {
        let h = qubit(pauli::z()).scaled(-3.0);
        let rho = diag(&[0.0, 1.0]);
        let r = ergotropy(&rho, &h, &battery_phases(0.4)).unwrap();
        assert_abs_diff_eq!(r.value, 6.0, epsilon = 1e-14);
        assert!(!is_passive(&rho, &h));
        assert!(is_passive(&r.passive_state, &h));
    }

    #[test]
    fn ergotropy_unitary_produces_passive_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 2..=4 {
            let rho = random_density(&mut rng, d);
            let h = random_hermitian(&mut rng, d);
            let phases: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
            let r = ergotropy(&rho, &h, &phases).unwrap();
            let u = &r.extraction_unitary;
            assert!(u.is_unitary(1e-10));
            let rotated = u.matmul(&rho).unwrap().matmul(&u.adjoint()).unwrap();
            assert!(rotated.max_abs_diff(&r.passive_state) < 1e-10);
            assert!(r.populations.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn zero_phase_unitary_has_unit_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_density(&mut rng, 2);
        let h = random_hermitian(&mut rng, 2);
        let r = ergotropy(&rho, &h, &[]).unwrap();
        let det = r.extraction_unitary.matrix().determinant();
        assert!((det - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ergotropy_dimension_errors() {
        let rho = diag(&[1.0, 0.0]);
        assert!(ergotropy(&rho, &diag(&[0.0, 1.0, 2.0]), &[]).is_err());
        assert!(ergotropy(&rho, &diag(&[0.0, 1.0]), &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn gibbs_is_passive() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = random_hermitian(&mut rng, 4);
        assert!(is_passive(&gibbs_state(&h, 2.0).unwrap(), &h));
    }

    #[test]
    fn passivity_with_degenerate_levels() {
        let h = diag(&[0.0, 1.0, 1.0]);
        assert!(is_passive(&diag(&[0.5, 0.2, 0.3]), &h));
        assert!(!is_passive(&diag(&[0.3, 0.2, 0.5]), &h));
    }
}
