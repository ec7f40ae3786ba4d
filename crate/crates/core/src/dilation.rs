//! Brute-force evaluation of a measured cycle on the full
//! battery ⊗ charger ⊗ memory space.
//!
//! Nothing here uses the Kraus shortcuts of [`crate::measure`]: the memory
//! is an explicit qubit, the gate is the dense controlled rotation, and every
//! outcome is obtained by projecting the memory. Only practical for short
//! chains; it exists to cross-check [`crate::cycle`].

use num_complex::Complex64 as C64;

use crate::cycle::{CycleConfig, CycleReport, EventOrder, ResetPolicy, ETA_EPS};
use crate::error::{Error, Result};
use crate::measure::{cnot_gate, SchemeKind};
use crate::model::{build_battery_h, build_charger_h, build_interaction, build_memory_h};
use crate::qla::{embed_site_operator, partial_trace, pauli, tensor_product, Operator, Role, SystemLayout};
use crate::thermo::{battery_phases, ergotropy, free_energy, gibbs_state, shannon_entropy, von_neumann_entropy};

/// Largest charger length accepted by [`dilated_cycle`].
pub const MAX_DILATION_SITES: usize = 5;

fn conj(u: &Operator, rho: &Operator) -> Result<Operator> {
    u.matmul(rho)?.matmul(&u.adjoint())
}

/// Full ledger of a measured cycle computed on the dilated space.
pub fn dilated_cycle(cfg: &CycleConfig) -> Result<CycleReport> {
    cfg.validate()?;
    let p = &cfg.params;
    if p.n_charger > MAX_DILATION_SITES {
        return Err(Error::InvalidParameter(format!(
            "dilation limited to {MAX_DILATION_SITES} charger sites"
        )));
    }
    let scheme = cfg
        .scheme
        .ok_or_else(|| Error::InvalidParameter("dilation needs a measurement scheme".into()))?;
    if scheme.kind != SchemeKind::Cnot {
        return Err(Error::InvalidParameter("dilation needs a CNOT scheme".into()));
    }
    let t = cfg.temperature;
    let bc = p.battery_charger_layout()?;
    let full = p.full_layout()?;
    let mem = SystemLayout::single(Role::Memory, 2);

    let h_b_bc = build_battery_h(p, &bc)?;
    let h_c_bc = build_charger_h(p, &bc)?;
    let v_bc = build_interaction(p, &bc)?;
    let h0_bc = h_b_bc.plus(&h_c_bc)?;
    let h_tot_bc = h0_bc.plus(&v_bc)?;

    let h_b_full = build_battery_h(p, &full)?;
    let h_c_full = build_charger_h(p, &full)?;
    let v_full = build_interaction(p, &full)?;
    let h_m_full = build_memory_h(p, &full)?;
    let h_all = h_b_full.plus(&h_c_full)?.plus(&v_full)?.plus(&h_m_full)?;
    let h_m_local = build_memory_h(p, &mem)?;

    let rho_bc = gibbs_state(&h_tot_bc, 1.0 / t)?;
    let standard = Operator::new(mem.clone(), pauli::basis_projector(0))?;
    let rho0 = tensor_product(&rho_bc, &standard)?;
    let gate = cnot_gate(&scheme, &full)?;
    let rho1 = conj(&gate, &rho0)?;

    let (w_meas, w_d) = match cfg.order {
        EventOrder::MeasureFirst => (
            h_all.expectation(&rho1)? - h_all.expectation(&rho0)?,
            -v_full.expectation(&rho1)?,
        ),
        EventOrder::DisconnectFirst => {
            let h_off = h_all.minus(&v_full)?;
            (
                h_off.expectation(&rho1)? - h_off.expectation(&rho0)?,
                -v_full.expectation(&rho0)?,
            )
        }
    };

    let h_b_local = build_battery_h(p, &SystemLayout::single(Role::Battery, 2))?;
    let rho_b = partial_trace(&rho_bc, &[Role::Battery])?;
    let e_plain = ergotropy(&rho_b, &h_b_local, &battery_phases(cfg.theta))?.value;

    let mut probs = Vec::new();
    let mut e_b = 0.0;
    let mut w_r = 0.0;
    let mut s_post = 0.0;
    let mut h_c_post = 0.0;
    let mut rotated_energy = 0.0;
    let bc_roles: Vec<Role> = bc.subsystems().iter().map(|s| s.role).collect();
    for j in 0..2 {
        let pj_mem = Operator::new(mem.clone(), pauli::basis_projector(j))?;
        let proj = embed_site_operator(&pj_mem, &full, Role::Memory)?;
        let branch = conj(&proj, &rho1)?;
        let pj = branch.trace().re;
        probs.push(pj);
        if pj < 1e-12 {
            continue;
        }
        let mut sigma = partial_trace(&branch, &bc_roles)?;
        sigma.scale_in_place(C64::new(1.0 / pj, 0.0));
        let sigma_b = partial_trace(&sigma, &[Role::Battery])?;
        let r = ergotropy(&sigma_b, &h_b_local, &battery_phases(cfg.theta))?;
        let u = embed_site_operator(&r.extraction_unitary, &bc, Role::Battery)?;
        let rotated = conj(&u, &sigma)?;
        e_b += pj * r.value;
        w_r += pj * v_bc.expectation(&rotated)?;
        s_post += pj * von_neumann_entropy(&sigma)?;
        h_c_post += pj * h_c_bc.expectation(&sigma)?;
        rotated_energy += pj * h_tot_bc.expectation(&rotated)?;
    }

    let rho_m = partial_trace(&rho1, &[Role::Memory])?;
    let mem_r = ergotropy(&rho_m, &h_m_local, &[])?;
    let e_m = mem_r.value;
    let standard_energy = h_m_local.expectation(&standard)?;
    let de_m = h_m_local.expectation(&mem_r.passive_state)? - standard_energy;
    let bound = free_energy(&standard, &h_m_local, t)? - free_energy(&mem_r.passive_state, &h_m_local, t)?;
    let w_reset = match cfg.reset_policy {
        ResetPolicy::FreeEnergyBound => bound,
        ResetPolicy::OffsetFromBound(x) => bound + x,
    };

    let shannon = shannon_entropy(&probs)?;
    let info_gain = von_neumann_entropy(&rho_bc)? - s_post;
    let de_c = h_c_post - h_c_bc.expectation(&rho_bc)?;

    let w_tot = w_d + w_r + w_meas + w_reset;
    let e_tot = e_b + e_m;
    let (eta, eta_undefined) = if w_tot <= ETA_EPS || e_tot <= ETA_EPS {
        (0.0, true)
    } else {
        (e_tot / w_tot, false)
    };
    let w_diss = w_tot - e_tot;
    let memory_shift = h_m_local.expectation(&rho_m)? - standard_energy;
    let identity_a = rotated_energy - h_tot_bc.expectation(&rho_bc)? + w_reset + de_m;
    let identity_b = (w_meas + w_d) - (-v_bc.expectation(&rho_bc)? + de_c + memory_shift);
    let outcome_probs = (0..2).map(|j| rho_m.get(j, j).re).collect();

    Ok(CycleReport {
        w_d,
        w_r,
        w_meas,
        w_reset,
        w_tot,
        e_plain,
        e_b,
        de_b: e_b - e_plain,
        e_m,
        e_tot,
        eta,
        eta_undefined,
        w_diss,
        shannon,
        info_gain,
        de_m,
        de_c,
        outcome_probs,
        slack_second_law: w_diss,
        slack_info_bound: w_diss - t * (shannon - info_gain),
        identity_a_residual: identity_a - w_diss,
        identity_b_residual: identity_b,
    })
}

/// Named numeric fields of a report, in a fixed order.
pub fn report_fields(r: &CycleReport) -> Vec<(&'static str, f64)> {
    let mut v = vec![
        ("W_d", r.w_d),
        ("W_r", r.w_r),
        ("W_meas", r.w_meas),
        ("W_reset", r.w_reset),
        ("W_tot", r.w_tot),
        ("E_plain", r.e_plain),
        ("E_b", r.e_b),
        ("dE_b", r.de_b),
        ("E_m", r.e_m),
        ("E_tot", r.e_tot),
        ("eta", r.eta),
        ("W_diss", r.w_diss),
        ("H", r.shannon),
        ("I", r.info_gain),
        ("dE_m", r.de_m),
        ("dE_c", r.de_c),
        ("slack_second_law", r.slack_second_law),
        ("slack_info_bound", r.slack_info_bound),
    ];
    for (j, p) in r.outcome_probs.iter().enumerate() {
        v.push(if j == 0 { ("p_0", *p) } else { ("p_1", *p) });
    }
    v
}

/// Largest field-wise difference between two reports, with its field name.
pub fn max_report_discrepancy(a: &CycleReport, b: &CycleReport) -> (&'static str, f64) {
    report_fields(a)
        .into_iter()
        .zip(report_fields(b))
        .map(|((name, x), (_, y))| (name, (x - y).abs()))
        .fold(("none", 0.0), |acc, it| if it.1 > acc.1 { it } else { acc })
}
