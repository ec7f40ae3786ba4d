//! Charging cycles with and without a charger measurement, and their work ledger.
//!
//! Sign convention: works are done on the system, ergotropies are extracted
//! from it. Every cycle starts from the Gibbs state of the connected
//! battery–charger system.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::measure::{apply_measurement_with_entropy, MeasurementEnsemble, MeasurementScheme, SchemeKind};
use crate::model::{battery_terms, build_battery_h, build_total_h, charger_terms, interaction_terms, ModelParams};
use crate::qla::{eig_hermitian, embed_operators, partial_trace, LocalHamiltonian, Operator, Role, Spectrum, SystemLayout};
use crate::thermo::{battery_phases, ergotropy, shannon_entropy, ThermalState};

/// Tolerance of the second-law style bounds.
pub const BOUND_TOL: f64 = 1e-8;
/// Tolerance on the efficiency upper limit.
pub const ETA_TOL: f64 = 1e-10;
/// Energies at or below this make the efficiency undefined.
pub const ETA_EPS: f64 = 1e-12;
/// Tolerance for the two independent recomputations of the ledger.
pub const IDENTITY_TOL: f64 = 1e-8;

/// Whether the memory couples to the charger before or after the battery is
/// disconnected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EventOrder {
    #[default]
    MeasureFirst,
    DisconnectFirst,
}

impl EventOrder {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventOrder::MeasureFirst => "measure-first",
            EventOrder::DisconnectFirst => "disconnect-first",
        }
    }
}

impl fmt::Display for EventOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measure-first" => Ok(EventOrder::MeasureFirst),
            "disconnect-first" => Ok(EventOrder::DisconnectFirst),
            _ => Err(Error::InvalidParameter(format!("unknown event order `{s}`"))),
        }
    }
}

/// How the memory is returned to its standard state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum ResetPolicy {
    /// Quasi-static reset at the free-energy difference.
    #[default]
    FreeEnergyBound,
    /// The bound plus a fixed offset. A negative offset breaks the second
    /// law on purpose and exists to exercise the theorem checks.
    OffsetFromBound(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleConfig {
    pub params: ModelParams,
    pub temperature: f64,
    /// Relative phase of the battery extraction unitary.
    pub theta: f64,
    /// `None` runs the cycle without a memory.
    pub scheme: Option<MeasurementScheme>,
    pub order: EventOrder,
    pub reset_policy: ResetPolicy,
}

impl CycleConfig {
    pub fn unmeasured(params: ModelParams, temperature: f64, theta: f64) -> Self {
        Self {
            params,
            temperature,
            theta,
            scheme: None,
            order: EventOrder::MeasureFirst,
            reset_policy: ResetPolicy::FreeEnergyBound,
        }
    }

    pub fn measured(params: ModelParams, temperature: f64, theta: f64, scheme: MeasurementScheme) -> Self {
        Self {
            scheme: Some(scheme),
            ..Self::unmeasured(params, temperature, theta)
        }
    }

    pub fn with_order(mut self, order: EventOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_scheme(mut self, scheme: MeasurementScheme) -> Self {
        self.scheme = Some(scheme);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter("theta must be finite".into()));
        }
        if let Some(s) = &self.scheme {
            if s.site > self.params.n_charger {
                return Err(Error::InvalidParameter(format!(
                    "measured site {} outside the charger chain 1..={}",
                    s.site, self.params.n_charger
                )));
            }
        }
        if let ResetPolicy::OffsetFromBound(x) = self.reset_policy {
            if !x.is_finite() {
                return Err(Error::InvalidParameter("reset offset must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Work and ergotropy ledger of one cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleReport {
    pub w_d: f64,
    pub w_r: f64,
    pub w_meas: f64,
    pub w_reset: f64,
    pub w_tot: f64,
    /// Ergotropy of the battery marginal without outcome knowledge.
    pub e_plain: f64,
    /// Daemonic ergotropy, the outcome-averaged battery ergotropy.
    pub e_b: f64,
    pub de_b: f64,
    pub e_m: f64,
    pub e_tot: f64,
    pub eta: f64,
    /// Set when `W_tot` or `E_tot` is at or below [`ETA_EPS`] and `eta` was forced to 0.
    pub eta_undefined: bool,
    pub w_diss: f64,
    pub shannon: f64,
    pub info_gain: f64,
    /// Energy of the passive memory state minus that of the standard state.
    pub de_m: f64,
    /// Average change of charger energy caused by the measurement.
    pub de_c: f64,
    /// Memory populations `(p_0, p_1)` after the measurement.
    pub outcome_probs: Vec<f64>,
    pub slack_second_law: f64,
    pub slack_info_bound: f64,
    /// `W_diss` recomputed from the rotated states minus the ledger value.
    pub identity_a_residual: f64,
    /// Residual of the split of `W_meas + W_d` into interaction, charger and memory terms.
    pub identity_b_residual: f64,
}

/// Outcome-resolved extraction from one measured branch.
#[derive(Clone, Debug)]
pub struct OutcomeExtraction {
    pub probability: f64,
    pub ergotropy: f64,
    /// Battery extraction unitary for this outcome.
    pub unitary: Operator,
}

impl OutcomeExtraction {
    /// `(U ⊗ I) ρ^(j) (U ⊗ I)†` on the battery–charger space.
    pub fn rotated_state(&self, post_state: &Operator) -> Result<Operator> {
        post_state.conjugate_local(Role::Battery, self.unitary.matrix().as_ref())
    }
}

#[derive(Clone, Debug)]
pub struct DaemonicExtraction {
    pub e_b: f64,
    /// In the order of the ensemble's retained outcomes.
    pub per_outcome: Vec<OutcomeExtraction>,
}

/// Per-outcome battery ergotropy with phase `theta` and its average.
pub fn daemonic_extraction(ensemble: &MeasurementEnsemble, h_b: &Operator, theta: f64) -> Result<DaemonicExtraction> {
    if ensemble.outcomes.is_empty() {
        return Err(Error::DegenerateMeasurement);
    }
    let phases = battery_phases(theta);
    let mut per_outcome = Vec::with_capacity(ensemble.outcomes.len());
    let mut e_b = 0.0;
    for o in &ensemble.outcomes {
        let rho_b = partial_trace(&o.post_state, &[Role::Battery])?;
        let r = ergotropy(&rho_b, h_b, &phases)?;
        e_b += o.probability * r.value;
        per_outcome.push(OutcomeExtraction {
            probability: o.probability,
            ergotropy: r.value,
            unitary: r.extraction_unitary,
        });
    }
    Ok(DaemonicExtraction { e_b, per_outcome })
}

/// `Tr[H (U ⊗ I) ρ (U ⊗ I)†]` for a battery unitary `U`, evaluated term by
/// term on reduced states that include the battery.
pub fn rotated_expectation(h: &LocalHamiltonian, rho: &Operator, u_b: &Operator) -> Result<f64> {
    let mut total = 0.0;
    for t in h.terms() {
        let mut support: Vec<Role> = t.factors.iter().map(|(r, _)| *r).collect();
        if !support.contains(&Role::Battery) {
            support.push(Role::Battery);
        }
        let reduced = partial_trace(rho, &support)?.conjugate_local(Role::Battery, u_b.matrix().as_ref())?;
        let factors: Vec<_> = t.factors.iter().map(|(r, m)| (*r, m.as_ref())).collect();
        let local = embed_operators(reduced.layout(), &factors)?;
        total += t.coeff * local.expectation(&reduced)?;
    }
    Ok(total)
}

/// Ergotropy of the two-level memory `Σ_j p_j |m_j⟩⟨m_j|` and its passive
/// populations, highest first on the ascending levels `(-h_m, h_m)`.
pub fn memory_ergotropy(probs: &[f64], h_m: f64) -> (f64, Vec<f64>) {
    let p0 = probs.first().copied().unwrap_or(0.0);
    let p1 = probs.get(1).copied().unwrap_or(0.0);
    let e_m = (p1 - p0).max(0.0) * 2.0 * h_m;
    (e_m, vec![p0.max(p1), p0.min(p1)])
}

/// Minimal work resetting the memory from its passive state to `|m_0⟩`:
/// `T·H + Tr[H_m(|m_0⟩⟨m_0| − passive)]`.
pub fn reset_work(passive_probs: &[f64], h_m: f64, temperature: f64) -> Result<f64> {
    let h = shannon_entropy(passive_probs)?;
    let levels = [-h_m, h_m];
    let passive_energy: f64 = passive_probs.iter().zip(levels).map(|(p, m)| p * m).sum();
    Ok(temperature * h + levels[0] - passive_energy)
}

/// Recomputes `W_diss` as `Σ_j p_j Tr[(H_0+V)(ρ_rot^(j) − ρ)] + W_reset + ΔE_m`
/// and returns its difference from the ledger value.
pub fn dissipated_work_identity(
    report: &CycleReport,
    ensemble: &MeasurementEnsemble,
    extraction: &DaemonicExtraction,
    rho_bc: &Operator,
    v_int: &LocalHamiltonian,
    h0: &LocalHamiltonian,
) -> Result<f64> {
    let mut h_tot = h0.clone();
    h_tot.extend(v_int);
    let before = h_tot.expectation(rho_bc)?;
    let mut recomputed = report.w_reset + report.de_m;
    for (o, x) in ensemble.outcomes.iter().zip(&extraction.per_outcome) {
        recomputed += o.probability * (rotated_expectation(&h_tot, &o.post_state, &x.unitary)? - before);
    }
    let residual = recomputed - report.w_diss;
    if residual.abs() > IDENTITY_TOL {
        return Err(Error::TheoremViolation {
            check: "dissipated_work_identity",
            value: residual,
            tolerance: IDENTITY_TOL,
        });
    }
    Ok(residual)
}

/// `Σ_j p_j Tr[H_c ρ^(j)] − Tr[H_c ρ]`.
pub fn charger_energy_shift(ensemble: &MeasurementEnsemble, rho_bc: &Operator, h_c: &LocalHamiltonian) -> Result<f64> {
    let mut shift = -h_c.expectation(rho_bc)?;
    for o in &ensemble.outcomes {
        shift += o.probability * h_c.expectation(&o.post_state)?;
    }
    Ok(shift)
}

/// One failed theorem check.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub check: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        Error::TheoremViolation {
            check: v.check,
            value: v.value,
            tolerance: v.tolerance,
        }
    }
}

/// Tolerances applied by [`check_report_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub bound: f64,
    pub eta: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            bound: BOUND_TOL,
            eta: ETA_TOL,
            identity: IDENTITY_TOL,
        }
    }
}

/// Every bound a report must satisfy, in a fixed order. The second law comes
/// first so that it is the one named when several fail together.
pub fn check_report(r: &CycleReport) -> Vec<Violation> {
    check_report_with(r, &Tolerances::default())
}

pub fn check_report_with(r: &CycleReport, tol: &Tolerances) -> Vec<Violation> {
    let (bt, it) = (tol.bound, tol.identity);
    let mut out = Vec::new();
    let mut require = |check: &'static str, ok: bool, value: f64, tolerance: f64| {
        if !ok || !value.is_finite() {
            out.push(Violation { check, value, tolerance });
        }
    };
    require("slack_second_law", r.slack_second_law >= -bt, r.slack_second_law, bt);
    require("slack_info_bound", r.slack_info_bound >= -bt, r.slack_info_bound, bt);
    require("eta_range", r.eta >= 0.0 && r.eta <= 1.0 + tol.eta, r.eta, tol.eta);
    require("daemonic_gain", r.de_b >= -bt, r.de_b, bt);
    let info_excess = r.shannon - r.info_gain;
    require("info_gain_below_shannon", info_excess >= -bt, info_excess, bt);
    require("info_gain_nonnegative", r.info_gain >= -bt, r.info_gain, bt);
    require(
        "dissipated_work_identity",
        r.identity_a_residual.abs() <= it,
        r.identity_a_residual,
        it,
    );
    require(
        "measurement_work_decomposition",
        r.identity_b_residual.abs() <= it,
        r.identity_b_residual,
        it,
    );
    // Tr[H_m(|m_0⟩⟨m_0| − passive)] = −ΔE_m is never positive
    require("reset_energy_term", -r.de_m <= 1e-12, -r.de_m, 1e-12);
    out
}

fn efficiency(e_tot: f64, w_tot: f64) -> (f64, bool) {
    if w_tot <= ETA_EPS || e_tot <= ETA_EPS {
        (0.0, true)
    } else {
        (e_tot / w_tot, false)
    }
}

/// Intermediate states of a measured cycle, kept for independent checks.
#[derive(Clone, Debug)]
pub struct MeasuredArtifacts {
    pub ensemble: MeasurementEnsemble,
    pub extraction: DaemonicExtraction,
}

#[derive(Clone, Debug)]
pub struct CycleRun {
    pub report: CycleReport,
    pub artifacts: Option<MeasuredArtifacts>,
}

/// Hamiltonian terms and spectrum of one battery–charger model, shared by
/// every temperature, phase and measurement scheme.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    params: ModelParams,
    layout: SystemLayout,
    h_b: Operator,
    h_c: LocalHamiltonian,
    h0: LocalHamiltonian,
    v: LocalHamiltonian,
    spectrum: Spectrum,
}

impl PreparedModel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let layout = params.battery_charger_layout()?;
        let h_b = build_battery_h(params, &SystemLayout::single(Role::Battery, 2))?;
        let h_c = charger_terms(params);
        let mut h0 = battery_terms(params);
        h0.extend(&h_c);
        let v = interaction_terms(params);
        let spectrum = eig_hermitian(&build_total_h(params, &layout, true)?)?;
        Ok(Self {
            params: *params,
            layout,
            h_b,
            h_c,
            h0,
            v,
            spectrum,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    /// `-h_b σ^z` on the battery alone.
    pub fn battery_h(&self) -> &Operator {
        &self.h_b
    }

    pub fn charger_h(&self) -> &LocalHamiltonian {
        &self.h_c
    }

    /// `H_b + H_c`.
    pub fn bare_h(&self) -> &LocalHamiltonian {
        &self.h0
    }

    pub fn interaction(&self) -> &LocalHamiltonian {
        &self.v
    }

    /// Spectrum of `H_b + H_c + V`.
    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn thermal(&self, temperature: f64) -> Result<ThermalState> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        ThermalState::from_spectrum(&self.spectrum, 1.0 / temperature)
    }

    fn check_compatible(&self, cfg: &CycleConfig, thermal: &ThermalState) -> Result<()> {
        cfg.validate()?;
        if !self.params.same_battery_charger(&cfg.params) {
            return Err(Error::InvalidParameter(
                "configuration does not match the prepared battery–charger model".into(),
            ));
        }
        if thermal.beta != 1.0 / cfg.temperature || thermal.rho.layout() != &self.layout {
            return Err(Error::InvalidParameter("thermal state does not match the configuration".into()));
        }
        Ok(())
    }

    /// Runs the cycle without enforcing the theorem checks.
    pub fn evaluate(&self, thermal: &ThermalState, cfg: &CycleConfig) -> Result<CycleRun> {
        self.check_compatible(cfg, thermal)?;
        match &cfg.scheme {
            None => Ok(CycleRun {
                report: self.unmeasured_report(thermal, cfg.theta)?,
                artifacts: None,
            }),
            Some(scheme) => {
                let ensemble = self.measure(thermal, scheme)?;
                let (report, extraction) = self.report_from_ensemble(thermal, cfg, &ensemble)?;
                Ok(CycleRun {
                    report,
                    artifacts: Some(MeasuredArtifacts { ensemble, extraction }),
                })
            }
        }
    }

    /// Measurement ensemble of the thermal state. This holds the expensive
    /// part of a measured cycle; the rest is cheap and can be redone for other
    /// phases, event orders, memory fields and reset policies.
    pub fn measure(&self, thermal: &ThermalState, scheme: &MeasurementScheme) -> Result<MeasurementEnsemble> {
        apply_measurement_with_entropy(&thermal.rho, scheme, thermal.entropy)
    }

    /// Ledger of a measured cycle from a precomputed ensemble, unchecked.
    /// `ensemble` must come from [`PreparedModel::measure`] on `thermal` with
    /// the scheme of `cfg`.
    pub fn report_from_ensemble(
        &self,
        thermal: &ThermalState,
        cfg: &CycleConfig,
        ensemble: &MeasurementEnsemble,
    ) -> Result<(CycleReport, DaemonicExtraction)> {
        self.check_compatible(cfg, thermal)?;
        if cfg.scheme.is_none() {
            return Err(Error::InvalidParameter("measured ledger needs a measurement scheme".into()));
        }
        let extraction = daemonic_extraction(ensemble, &self.h_b, cfg.theta)?;
        let report = self.measured_report(thermal, cfg, ensemble, &extraction)?;
        Ok((report, extraction))
    }

    /// Runs the cycle and fails on the first violated bound.
    pub fn run(&self, thermal: &ThermalState, cfg: &CycleConfig) -> Result<CycleReport> {
        let run = self.evaluate(thermal, cfg)?;
        if let Some(v) = check_report(&run.report).into_iter().next() {
            return Err(v.into());
        }
        Ok(run.report)
    }

    fn plain_ergotropy(&self, thermal: &ThermalState, theta: f64) -> Result<(f64, Operator)> {
        let rho_b = partial_trace(&thermal.rho, &[Role::Battery])?;
        let r = ergotropy(&rho_b, &self.h_b, &battery_phases(theta))?;
        Ok((r.value, r.extraction_unitary))
    }

    fn unmeasured_report(&self, thermal: &ThermalState, theta: f64) -> Result<CycleReport> {
        let rho = &thermal.rho;
        let (e, u) = self.plain_ergotropy(thermal, theta)?;
        let w_d = -self.v.expectation(rho)?;
        let w_r = rotated_expectation(&self.v, rho, &u)?;
        let w_tot = w_d + w_r;
        if w_tot <= 0.0 && e > ETA_EPS {
            return Err(Error::TheoremViolation {
                check: "unmeasured_positive_work",
                value: w_tot,
                tolerance: 0.0,
            });
        }
        let (eta, eta_undefined) = efficiency(e, w_tot);
        let w_diss = w_tot - e;
        // the extraction moves only the battery, so H_0 + V changes by W_r + W_d − E
        let mut h_tot = self.h0.clone();
        h_tot.extend(&self.v);
        let identity_a = rotated_expectation(&h_tot, rho, &u)? - h_tot.expectation(rho)?;
        Ok(CycleReport {
            w_d,
            w_r,
            w_meas: 0.0,
            w_reset: 0.0,
            w_tot,
            e_plain: e,
            e_b: e,
            de_b: 0.0,
            e_m: 0.0,
            e_tot: e,
            eta,
            eta_undefined,
            w_diss,
            shannon: 0.0,
            info_gain: 0.0,
            de_m: 0.0,
            de_c: 0.0,
            outcome_probs: vec![1.0, 0.0],
            slack_second_law: w_diss,
            slack_info_bound: w_diss,
            identity_a_residual: identity_a - w_diss,
            identity_b_residual: 0.0,
        })
    }

    fn measured_report(
        &self,
        thermal: &ThermalState,
        cfg: &CycleConfig,
        ensemble: &MeasurementEnsemble,
        extraction: &DaemonicExtraction,
    ) -> Result<CycleReport> {
        let t = cfg.temperature;
        let h_m = cfg.params.h_m;
        let levels = cfg.params.memory_levels();
        let rho = &thermal.rho;
        let probs = ensemble.memory_populations();
        let memory_energy: f64 = probs.iter().zip(levels).map(|(p, m)| p * m).sum();
        let memory_shift = memory_energy - levels[0];

        // Tr[X Σ_j M_j ρ M_j†] accumulated over the branches
        let mut h0_after = 0.0;
        let mut v_after = 0.0;
        for o in &ensemble.outcomes {
            h0_after += o.probability * self.h0.expectation(&o.post_state)?;
            v_after += o.probability * self.v.expectation(&o.post_state)?;
        }
        let dh0 = h0_after - self.h0.expectation(rho)?;
        let v_before = self.v.expectation(rho)?;
        let (w_meas, w_d) = match cfg.order {
            EventOrder::MeasureFirst => (dh0 + (v_after - v_before) + memory_shift, -v_after),
            EventOrder::DisconnectFirst => (dh0 + memory_shift, -v_before),
        };

        let mut w_r = 0.0;
        for (o, x) in ensemble.outcomes.iter().zip(&extraction.per_outcome) {
            w_r += o.probability * rotated_expectation(&self.v, &o.post_state, &x.unitary)?;
        }

        let (e_plain, _) = self.plain_ergotropy(thermal, cfg.theta)?;
        let e_b = extraction.e_b;
        let (e_m, passive) = memory_ergotropy(&probs, h_m);
        let passive_energy: f64 = passive.iter().zip(levels).map(|(p, m)| p * m).sum();
        let de_m = passive_energy - levels[0];
        let bound = reset_work(&passive, h_m, t)?;
        let w_reset = match cfg.reset_policy {
            ResetPolicy::FreeEnergyBound => bound,
            ResetPolicy::OffsetFromBound(x) => bound + x,
        };

        let w_tot = w_d + w_r + w_meas + w_reset;
        let e_tot = e_b + e_m;
        let (eta, eta_undefined) = efficiency(e_tot, w_tot);
        let w_diss = w_tot - e_tot;
        let shannon = ensemble.shannon;
        let info_gain = ensemble.info_gain;

        let de_c = charger_energy_shift(ensemble, rho, &self.h_c)?;
        let identity_b = (w_meas + w_d) - (-v_before + de_c + memory_shift);

        let mut report = CycleReport {
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
            outcome_probs: probs.to_vec(),
            slack_second_law: w_diss,
            slack_info_bound: w_diss - t * (shannon - info_gain),
            identity_a_residual: 0.0,
            identity_b_residual: identity_b,
        };
        report.identity_a_residual = match dissipated_work_identity(&report, ensemble, extraction, rho, &self.v, &self.h0) {
            Ok(r) => r,
            Err(Error::TheoremViolation { value, .. }) => value,
            Err(e) => return Err(e),
        };
        Ok(report)
    }

    /// Runs `scheme`, its conjugate and the degenerate-memory variant.
    /// The first report has the active memory (`p_1 > p_0`); on a tie the
    /// configured scheme comes first.
    pub fn compare_conjugate_pair(
        &self,
        thermal: &ThermalState,
        cfg: &CycleConfig,
    ) -> Result<(CycleReport, CycleReport, CycleReport)> {
        let scheme = cfg
            .scheme
            .ok_or_else(|| Error::InvalidParameter("conjugate pair needs a measurement scheme".into()))?;
        if scheme.kind != SchemeKind::Cnot {
            return Err(Error::InvalidParameter("conjugate pair needs a CNOT scheme".into()));
        }
        if cfg.params.h_m <= 0.0 {
            return Err(Error::InvalidParameter("conjugate pair needs h_m > 0".into()));
        }
        let a = self.run(thermal, cfg)?;
        let conj_cfg = cfg.clone().with_scheme(scheme.conjugate());
        let conj = self.evaluate(thermal, &conj_cfg)?;
        if let Some(v) = check_report(&conj.report).into_iter().next() {
            return Err(v.into());
        }
        let b_is_plus = conj.report.outcome_probs[1] > conj.report.outcome_probs[0]
            && a.outcome_probs[1] <= a.outcome_probs[0];
        let (plus, minus, minus_cfg, minus_artifacts) = if b_is_plus {
            (conj.report, a, cfg.clone(), None)
        } else {
            (a, conj.report, conj_cfg, conj.artifacts)
        };

        let mut dg_cfg = minus_cfg;
        dg_cfg.params.h_m = 0.0;
        let dg = match minus_artifacts {
            Some(art) => self.report_from_ensemble(thermal, &dg_cfg, &art.ensemble)?.0,
            None => self.evaluate(thermal, &dg_cfg)?.report,
        };
        if let Some(v) = check_report(&dg).into_iter().next() {
            return Err(v.into());
        }
        Ok((plus, minus, dg))
    }
}

/// Unmeasured cycle from scratch. Sweeps should reuse a [`PreparedModel`].
pub fn run_unmeasured_cycle(cfg: &CycleConfig) -> Result<CycleReport> {
    if cfg.scheme.is_some() {
        return Err(Error::InvalidParameter("unmeasured cycle given a measurement scheme".into()));
    }
    let model = PreparedModel::new(&cfg.params)?;
    model.run(&model.thermal(cfg.temperature)?, cfg)
}

/// Measured cycle from scratch. Sweeps should reuse a [`PreparedModel`].
pub fn run_measured_cycle(cfg: &CycleConfig) -> Result<CycleReport> {
    if cfg.scheme.is_none() {
        return Err(Error::InvalidParameter("measured cycle needs a measurement scheme".into()));
    }
    let model = PreparedModel::new(&cfg.params)?;
    model.run(&model.thermal(cfg.temperature)?, cfg)
}

pub fn compare_conjugate_pair(cfg: &CycleConfig) -> Result<(CycleReport, CycleReport, CycleReport)> {
    let model = PreparedModel::new(&cfg.params)?;
    model.compare_conjugate_pair(&model.thermal(cfg.temperature)?, cfg)
}

/// Phases closer than this in efficiency count as ties.
pub const THETA_TIE_TOL: f64 = 1e-10;

/// Best phase on `thetas` by efficiency. Ties within [`THETA_TIE_TOL`] go to
/// the smaller phase.
pub fn optimize_theta(
    model: &PreparedModel,
    thermal: &ThermalState,
    cfg: &CycleConfig,
    thetas: &[f64],
) -> Result<(f64, f64)> {
    if thetas.is_empty() {
        return Err(Error::InvalidParameter("empty phase grid".into()));
    }
    let mut sorted = thetas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ensemble = match &cfg.scheme {
        Some(s) => Some(model.measure(thermal, s)?),
        None => None,
    };
    let mut best: Option<(f64, f64)> = None;
    for theta in sorted {
        let mut c = cfg.clone();
        c.theta = theta;
        let report = match &ensemble {
            Some(e) => model.report_from_ensemble(thermal, &c, e)?.0,
            None => model.evaluate(thermal, &c)?.report,
        };
        if let Some(v) = check_report(&report).into_iter().next() {
            return Err(v.into());
        }
        match best {
            Some((_, b)) if report.eta <= b + THETA_TIE_TOL => {}
            _ => best = Some((theta, report.eta)),
        }
    }
    Ok(best.expect("nonempty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn small(n: usize, kappa_b: f64) -> ModelParams {
        ModelParams {
            n_charger: n,
            kappa_b,
            ..ModelParams::PAPER_DEFAULT
        }
    }

    fn scheme(site: usize, phi: f64) -> MeasurementScheme {
        MeasurementScheme::new(site, phi).unwrap()
    }

    #[test]
    fn memory_ergotropy_cases() {
        assert_eq!(memory_ergotropy(&[0.2, 0.8], 0.0).0, 0.0);
        let (e, passive) = memory_ergotropy(&[0.3, 0.7], 0.2);
        assert_abs_diff_eq!(e, 0.4 * 0.4, epsilon = 1e-15);
        assert_eq!(passive, vec![0.7, 0.3]);
        assert_eq!(memory_ergotropy(&[0.7, 0.3], 0.2).0, 0.0);
    }

    #[test]
    fn reset_work_cases() {
        assert_eq!(reset_work(&[1.0, 0.0], 0.2, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(reset_work(&[0.5, 0.5], 0.0, 2.0).unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-15);
        let h = -0.7f64 * 0.7f64.ln() - 0.3 * 0.3f64.ln();
        let oracle = h + (-0.2 - (0.7 * -0.2 + 0.3 * 0.2));
        assert_abs_diff_eq!(reset_work(&[0.7, 0.3], 0.2, 1.0).unwrap(), oracle, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_battery_has_no_ergotropy() {
        let cfg = CycleConfig::unmeasured(small(2, 0.0), 1.0, 0.0);
        let r = run_unmeasured_cycle(&cfg).unwrap();
        assert!(r.e_plain.abs() < 1e-12);
        assert!(r.w_d.abs() < 1e-12 && r.w_r.abs() < 1e-12);
        assert_eq!(r.eta, 0.0);
        assert!(r.eta_undefined);
    }

    #[test]
    fn infinite_temperature_limit() {
        let cfg = CycleConfig::unmeasured(small(2, 4.0), 1e12, 0.0);
        let r = run_unmeasured_cycle(&cfg).unwrap();
        assert!(r.w_d.abs() < 1e-9);
        assert!(r.e_plain.abs() < 1e-9);
    }

    #[test]
    fn identity_measurement_reproduces_unmeasured_cycle() {
        let p = small(3, 4.0);
        let model = PreparedModel::new(&p).unwrap();
        for t in [0.1, 1.0, 7.0] {
            let th = model.thermal(t).unwrap();
            for theta in [0.0, 0.7] {
                let plain = model.run(&th, &CycleConfig::unmeasured(p, t, theta)).unwrap();
                let cfg = CycleConfig::measured(p, t, theta, MeasurementScheme::identity(1).unwrap());
                let id = model.run(&th, &cfg).unwrap();
                for (a, b) in [
                    (plain.w_d, id.w_d),
                    (plain.w_r, id.w_r),
                    (plain.w_tot, id.w_tot),
                    (plain.e_b, id.e_b),
                    (plain.eta, id.eta),
                    (plain.w_diss, id.w_diss),
                ] {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-10);
                }
                assert!(id.w_meas.abs() < 1e-10 && id.w_reset.abs() < 1e-10 && id.e_m.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_memory_reset_is_landauer() {
        let mut p = small(3, 4.0);
        p.h_m = 0.0;
        let model = PreparedModel::new(&p).unwrap();
        for t in [0.05, 0.5, 5.0, 50.0] {
            let th = model.thermal(t).unwrap();
            let r = model.run(&th, &CycleConfig::measured(p, t, 0.0, scheme(1, PI))).unwrap();
            assert_abs_diff_eq!(r.w_reset, t * r.shannon, epsilon = 1e-10);
            assert_eq!(r.e_m, 0.0);
        }
    }

    #[test]
    fn conjugate_pair_relations() {
        let p = small(3, 4.0);
        let model = PreparedModel::new(&p).unwrap();
        for t in [0.3, 2.0, 20.0] {
            let th = model.thermal(t).unwrap();
            for phi in [0.0, PI / 4.0, 5.0 * PI / 4.0] {
                for site in [1, 3] {
                    let cfg = CycleConfig::measured(p, t, 0.0, scheme(site, phi));
                    let (plus, minus, dg) = model.compare_conjugate_pair(&th, &cfg).unwrap();
                    assert_abs_diff_eq!(plus.w_diss, minus.w_diss, epsilon = 1e-10);
                    assert_abs_diff_eq!(plus.e_b, minus.e_b, epsilon = 1e-10);
                    assert_abs_diff_eq!(plus.e_b, dg.e_b, epsilon = 1e-10);
                    assert_abs_diff_eq!(plus.outcome_probs[0], minus.outcome_probs[1], epsilon = 1e-12);
                    assert!(plus.eta >= minus.eta - 1e-8);
                    assert_abs_diff_eq!(minus.eta, dg.eta, epsilon = 1e-8);
                    assert_eq!(minus.e_m, 0.0);
                }
            }
        }
    }

    #[test]
    fn both_orders_satisfy_all_checks() {
        let p = small(3, 4.0);
        let model = PreparedModel::new(&p).unwrap();
        let th = model.thermal(1.3).unwrap();
        let mut sums = Vec::new();
        for order in [EventOrder::MeasureFirst, EventOrder::DisconnectFirst] {
            let cfg = CycleConfig::measured(p, 1.3, 0.0, scheme(1, 5.0 * PI / 4.0)).with_order(order);
            let r = model.run(&th, &cfg).unwrap();
            sums.push(r.w_meas + r.w_d);
            assert!(r.identity_b_residual.abs() < 1e-10);
        }
        assert_abs_diff_eq!(sums[0], sums[1], epsilon = 1e-12);
    }

    #[test]
    fn fault_injection_trips_second_law() {
        let p = small(2, 4.0);
        let model = PreparedModel::new(&p).unwrap();
        let th = model.thermal(1.0).unwrap();
        let mut cfg = CycleConfig::measured(p, 1.0, 0.0, scheme(1, PI));
        cfg.reset_policy = ResetPolicy::OffsetFromBound(-100.0);
        match model.run(&th, &cfg) {
            Err(Error::TheoremViolation { check, .. }) => assert_eq!(check, "slack_second_law"),
            other => panic!("expected a second-law violation, got {other:?}"),
        }
    }

    #[test]
    fn single_site_measurement_is_phase_flat() {
        let p = small(3, 4.0);
        let model = PreparedModel::new(&p).unwrap();
        let th = model.thermal(2.0).unwrap();
        let base = model.run(&th, &CycleConfig::measured(p, 2.0, 0.0, scheme(1, PI))).unwrap();
        for theta in [PI / 8.0, PI / 2.0, 2.0] {
            let r = model.run(&th, &CycleConfig::measured(p, 2.0, theta, scheme(1, PI))).unwrap();
            assert_abs_diff_eq!(r.eta, base.eta, epsilon = 1e-10);
            assert_abs_diff_eq!(r.w_r, base.w_r, epsilon = 1e-10);
        }
    }

    #[test]
    fn optimize_theta_edge_cases() {
        let p = small(2, 4.0);
        let model = PreparedModel::new(&p).unwrap();
        let th = model.thermal(1.0).unwrap();
        let cfg = CycleConfig::unmeasured(p, 1.0, 0.0);
        assert!(optimize_theta(&model, &th, &cfg, &[]).is_err());
        assert_eq!(optimize_theta(&model, &th, &cfg, &[0.3]).unwrap().0, 0.3);
    }

    #[test]
    fn config_validation() {
        let p = small(2, 4.0);
        assert!(CycleConfig::unmeasured(p, 0.0, 0.0).validate().is_err());
        assert!(CycleConfig::unmeasured(p, -1.0, 0.0).validate().is_err());
        assert!(CycleConfig::measured(p, 1.0, 0.0, scheme(3, 0.0)).validate().is_err());
        assert!(run_measured_cycle(&CycleConfig::unmeasured(p, 1.0, 0.0)).is_err());
        assert!(run_unmeasured_cycle(&CycleConfig::measured(p, 1.0, 0.0, scheme(1, 0.0))).is_err());
        assert_eq!("disconnect-first".parse::<EventOrder>().unwrap(), EventOrder::DisconnectFirst);
        assert!("sideways".parse::<EventOrder>().is_err());
    }
}
