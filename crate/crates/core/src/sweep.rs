//! Sweep configuration, batch execution, CSV ledgers and verification.
//!
//! Config files are flat `key = value` text. Repeating a key, or giving a
//! comma-separated value, builds a list. `#` starts a comment.
//!
//! Row order is fixed: coupling `kappa_b` outermost, then temperature, then
//! the unmeasured rows by `theta`, then the measured rows by measured
//! `theta`, scheme (site, then phi) and event order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error as ThisError;

use crate::cycle::{
    check_report_with, CycleConfig, CycleReport, EventOrder, PreparedModel, ResetPolicy, Tolerances,
};
use crate::dilation::{dilated_cycle, max_report_discrepancy};
use crate::error::Error;
use crate::measure::MeasurementScheme;
use crate::model::ModelParams;
use crate::thermo::ThermalState;

#[derive(Debug, ThisError)]
pub enum SweepError {
    #[error("config error: {0}")]
    Config(String),
    #[error("theorem check failed at {tuple}: {source}")]
    Theorem { tuple: String, source: Error },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("computation failed at {tuple}: {source}")]
    Compute { tuple: String, source: Error },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("plot error: {0}")]
    Plot(String),
}

impl SweepError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SweepError::Config(_) => 2,
            SweepError::Theorem { .. } | SweepError::Verification(_) => 3,
            SweepError::Io(_) => 4,
            SweepError::Compute { .. } | SweepError::Plot(_) => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> SweepError {
    SweepError::Config(msg.into())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SweepError {
    SweepError::Io(format!("{}: {e}", path.display()))
}

/// Log-spaced temperature grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperatureGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for TemperatureGrid {
    fn default() -> Self {
        Self {
            min: 1e-2,
            max: 1e3,
            count: 60,
        }
    }
}

impl TemperatureGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        (0..self.count)
            .map(|k| {
                if k == 0 {
                    self.min
                } else if k == self.count - 1 {
                    self.max
                } else {
                    (a + (b - a) * k as f64 / (self.count - 1) as f64).exp()
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Base parameters; `kappa_b` is taken from `kappa_b_values`.
    pub params: ModelParams,
    pub kappa_b_values: Vec<f64>,
    pub grid: TemperatureGrid,
    /// Explicit temperatures; replace the grid when nonempty.
    pub temperatures: Vec<f64>,
    /// Phases of the unmeasured rows.
    pub thetas: Vec<f64>,
    /// Phases of the measured rows.
    pub measured_thetas: Vec<f64>,
    pub sites: Vec<usize>,
    pub phis: Vec<f64>,
    pub orders: Vec<EventOrder>,
    pub include_unmeasured: bool,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub tolerances: Tolerances,
    /// Added to every reset work; for exercising the theorem checks.
    pub fault_reset_offset: Option<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        use std::f64::consts::PI;
        let params = ModelParams::PAPER_DEFAULT;
        Self {
            params,
            kappa_b_values: vec![params.kappa_b],
            grid: TemperatureGrid::default(),
            temperatures: Vec::new(),
            thetas: vec![0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0, PI / 2.0],
            measured_thetas: vec![0.0],
            sites: vec![1, 10],
            phis: vec![PI],
            orders: vec![EventOrder::MeasureFirst],
            include_unmeasured: true,
            out_dir: PathBuf::from("out"),
            jobs: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            tolerances: Tolerances::default(),
            fault_reset_offset: None,
        }
    }
}

impl SweepSpec {
    pub fn temperature_values(&self) -> Vec<f64> {
        if self.temperatures.is_empty() {
            self.grid.values()
        } else {
            self.temperatures.clone()
        }
    }

    pub fn param_sets(&self) -> Vec<ModelParams> {
        self.kappa_b_values
            .iter()
            .map(|&k| ModelParams {
                kappa_b: k,
                ..self.params
            })
            .collect()
    }

    pub fn schemes(&self) -> Result<Vec<MeasurementScheme>, SweepError> {
        let mut out = Vec::new();
        for &site in &self.sites {
            for &phi in &self.phis {
                out.push(MeasurementScheme::new(site, phi).map_err(|e| config_err(e.to_string()))?);
            }
        }
        Ok(out)
    }

    fn reset_policy(&self) -> ResetPolicy {
        match self.fault_reset_offset {
            Some(x) => ResetPolicy::OffsetFromBound(x),
            None => ResetPolicy::FreeEnergyBound,
        }
    }

    /// Number of rows [`run_sweep`] produces.
    pub fn row_count(&self) -> usize {
        let per_t = if self.include_unmeasured { self.thetas.len() } else { 0 }
            + self.measured_thetas.len() * self.sites.len() * self.phis.len() * self.orders.len();
        self.kappa_b_values.len() * self.temperature_values().len() * per_t
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        for p in self.param_sets() {
            p.validate().map_err(|e| config_err(e.to_string()))?;
        }
        if self.kappa_b_values.is_empty() {
            return Err(config_err("at least one kappa_b value is required"));
        }
        let g = &self.grid;
        if !(g.min.is_finite() && g.min > 0.0) {
            return Err(config_err(format!("t_min must be positive, got {}", g.min)));
        }
        if !(g.max.is_finite() && g.max >= g.min) {
            return Err(config_err(format!("t_max must be at least t_min, got {}", g.max)));
        }
        if g.count == 0 {
            return Err(config_err("t_points must be at least 1"));
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(config_err(format!("temperatures must be positive, got {t}")));
        }
        for &site in &self.sites {
            if site == 0 || site > self.params.n_charger {
                return Err(config_err(format!(
                    "site {site} outside the charger chain 1..={}",
                    self.params.n_charger
                )));
            }
        }
        let all_angles = self.thetas.iter().chain(&self.measured_thetas).chain(&self.phis);
        if all_angles.clone().any(|a| !a.is_finite()) {
            return Err(config_err("angles must be finite"));
        }
        if !self.sites.is_empty() && (self.phis.is_empty() || self.orders.is_empty() || self.measured_thetas.is_empty()) {
            return Err(config_err("measured rows need at least one phi, order and measured_theta"));
        }
        if self.jobs == 0 {
            return Err(config_err("jobs must be at least 1"));
        }
        if self.row_count() == 0 {
            return Err(config_err("the spec produces no rows"));
        }
        Ok(())
    }
}

fn end_sites(n: usize) -> Vec<usize> {
    if n <= 1 {
        vec![1]
    } else {
        vec![1, n]
    }
}

/// Parses `pi`, `5pi/4`, `5*pi/4`, `-pi/2` or a plain number.
pub fn parse_angle(s: &str) -> Result<f64, SweepError> {
    let t = s.trim().to_ascii_lowercase().replace(' ', "");
    let bad = || config_err(format!("cannot parse angle `{s}`"));
    if let Ok(x) = t.parse::<f64>() {
        return Ok(x);
    }
    let Some(idx) = t.find("pi") else {
        return Err(bad());
    };
    let (head, tail) = (&t[..idx], &t[idx + 2..]);
    let head = head.strip_suffix('*').unwrap_or(head);
    let coeff = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let denom = match tail {
        "" => 1.0,
        d => d.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(coeff * std::f64::consts::PI / denom)
}

fn parse_f64(key: &str, v: &str) -> Result<f64, SweepError> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| config_err(format!("`{key}`: cannot parse number `{v}`")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, SweepError> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| config_err(format!("`{key}`: cannot parse integer `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, SweepError> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

const LIST_KEYS: &[&str] = &["kappa_b", "temperature", "theta", "measured_theta", "site", "phi", "order"];
const SCALAR_KEYS: &[&str] = &[
    "preset",
    "h_b",
    "h_c",
    "h_m",
    "kappa_c",
    "n_charger",
    "t_min",
    "t_max",
    "t_points",
    "unmeasured",
    "out",
    "jobs",
    "tol_bound",
    "tol_eta",
    "tol_identity",
    "fault_reset_offset",
];

/// Parses config text. Keys missing from the text keep their defaults: the
/// paper-default preset with z-basis schemes on the first and last charger spins.
pub fn parse_config(text: &str) -> Result<SweepSpec, SweepError> {
    let mut lists: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut scalars: BTreeMap<&str, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if let Some(key) = LIST_KEYS.iter().find(|&&x| x == k) {
            let items = v.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty());
            lists.entry(key).or_default().extend(items);
        } else if let Some(key) = SCALAR_KEYS.iter().find(|&&x| x == k) {
            if scalars.insert(key, v.to_string()).is_some() {
                return Err(config_err(format!("line {}: `{k}` given twice", lineno + 1)));
            }
        } else {
            return Err(config_err(format!("line {}: unknown key `{k}`", lineno + 1)));
        }
    }

    let mut spec = SweepSpec::default();
    if let Some(name) = scalars.get("preset") {
        spec.params = ModelParams::preset(name).ok_or_else(|| config_err(format!("unknown preset `{name}`")))?;
        spec.kappa_b_values = vec![spec.params.kappa_b];
    }
    for (key, value) in &scalars {
        match *key {
            "preset" => {}
            "h_b" => spec.params.h_b = parse_f64(key, value)?,
            "h_c" => spec.params.h_c = parse_f64(key, value)?,
            "h_m" => spec.params.h_m = parse_f64(key, value)?,
            "kappa_c" => spec.params.kappa_c = parse_f64(key, value)?,
            "n_charger" => spec.params.n_charger = parse_usize(key, value)?,
            "t_min" => spec.grid.min = parse_f64(key, value)?,
            "t_max" => spec.grid.max = parse_f64(key, value)?,
            "t_points" => spec.grid.count = parse_usize(key, value)?,
            "unmeasured" => spec.include_unmeasured = parse_bool(key, value)?,
            "out" => spec.out_dir = PathBuf::from(value),
            "jobs" => spec.jobs = parse_usize(key, value)?,
            "tol_bound" => spec.tolerances.bound = parse_f64(key, value)?,
            "tol_eta" => spec.tolerances.eta = parse_f64(key, value)?,
            "tol_identity" => spec.tolerances.identity = parse_f64(key, value)?,
            "fault_reset_offset" => spec.fault_reset_offset = Some(parse_f64(key, value)?),
            _ => unreachable!("key list and match arms agree"),
        }
    }
    for (key, values) in &lists {
        match *key {
            "kappa_b" => spec.kappa_b_values = values.iter().map(|v| parse_f64(key, v)).collect::<Result<_, _>>()?,
            "temperature" => spec.temperatures = values.iter().map(|v| parse_f64(key, v)).collect::<Result<_, _>>()?,
            "theta" => spec.thetas = values.iter().map(|v| parse_angle(v)).collect::<Result<_, _>>()?,
            "measured_theta" => {
                spec.measured_thetas = values.iter().map(|v| parse_angle(v)).collect::<Result<_, _>>()?
            }
            "site" => spec.sites = values.iter().map(|v| parse_usize(key, v)).collect::<Result<_, _>>()?,
            "phi" => spec.phis = values.iter().map(|v| parse_angle(v)).collect::<Result<_, _>>()?,
            "order" => {
                spec.orders = values
                    .iter()
                    .map(|v| v.parse::<EventOrder>().map_err(|e| config_err(e.to_string())))
                    .collect::<Result<_, _>>()?
            }
            _ => unreachable!("key list and match arms agree"),
        }
    }
    // the first and last charger spins unless given; an empty list disables measured rows
    if !lists.contains_key("site") {
        spec.sites = end_sites(spec.params.n_charger);
    }
    spec.validate()?;
    Ok(spec)
}

pub fn parse_config_file(path: &Path) -> Result<SweepSpec, SweepError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowMode {
    Unmeasured,
    Measured,
}

impl RowMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowMode::Unmeasured => "unmeasured",
            RowMode::Measured => "measured",
        }
    }
}

/// One CSV line: the configuration echo and the flattened report.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub mode: RowMode,
    pub temperature: f64,
    pub theta: f64,
    pub site: Option<usize>,
    pub phi: Option<f64>,
    pub kappa_b: f64,
    pub h_m: f64,
    pub order: Option<EventOrder>,
    pub report: CycleReport,
}

impl ResultRow {
    pub fn tuple_label(&self) -> String {
        match self.mode {
            RowMode::Unmeasured => format!(
                "(unmeasured, kappa_b={}, T={:e}, theta={})",
                self.kappa_b, self.temperature, self.theta
            ),
            RowMode::Measured => format!(
                "(measured, kappa_b={}, T={:e}, theta={}, site={}, phi={}, order={})",
                self.kappa_b,
                self.temperature,
                self.theta,
                self.site.unwrap_or(0),
                self.phi.unwrap_or(f64::NAN),
                self.order.map(|o| o.as_str()).unwrap_or("")
            ),
        }
    }
}

pub const CSV_COLUMNS: &[&str] = &[
    "mode",
    "T",
    "theta",
    "site",
    "phi",
    "kappa_b",
    "h_m",
    "order",
    "W_d",
    "W_r",
    "W_meas",
    "W_reset",
    "W_tot",
    "E_plain",
    "E_b",
    "dE_b",
    "E_m",
    "E_tot",
    "eta",
    "eta_undefined",
    "W_diss",
    "H",
    "I",
    "dE_m",
    "dE_c",
    "p_0",
    "p_1",
    "slack_second_law",
    "slack_info_bound",
    "identity_a_residual",
    "identity_b_residual",
];

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn row_record(r: &ResultRow) -> Vec<String> {
    let rep = &r.report;
    let mut rec = vec![
        r.mode.as_str().to_string(),
        fmt_f(r.temperature),
        fmt_f(r.theta),
        r.site.map(|s| s.to_string()).unwrap_or_default(),
        r.phi.map(fmt_f).unwrap_or_default(),
        fmt_f(r.kappa_b),
        fmt_f(r.h_m),
        r.order.map(|o| o.as_str().to_string()).unwrap_or_default(),
    ];
    for x in [
        rep.w_d, rep.w_r, rep.w_meas, rep.w_reset, rep.w_tot, rep.e_plain, rep.e_b, rep.de_b, rep.e_m, rep.e_tot,
        rep.eta,
    ] {
        rec.push(fmt_f(x));
    }
    rec.push(rep.eta_undefined.to_string());
    for x in [rep.w_diss, rep.shannon, rep.info_gain, rep.de_m, rep.de_c] {
        rec.push(fmt_f(x));
    }
    rec.push(fmt_f(rep.outcome_probs.first().copied().unwrap_or(0.0)));
    rec.push(fmt_f(rep.outcome_probs.get(1).copied().unwrap_or(0.0)));
    for x in [
        rep.slack_second_law,
        rep.slack_info_bound,
        rep.identity_a_residual,
        rep.identity_b_residual,
    ] {
        rec.push(fmt_f(x));
    }
    rec
}

/// Writes rows with a header, one record per row, `\n`-terminated.
/// Refuses empty input without touching the file system.
pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<(), SweepError> {
    if rows.is_empty() {
        return Err(SweepError::Io("refusing to write an empty result set".into()));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    w.write_record(CSV_COLUMNS).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(row_record(r)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Parses a file written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, SweepError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(SweepError::Io(format!("{}: unexpected header", path.display())));
    }
    let bad = |line: usize, what: &str| SweepError::Io(format!("{}: record {line}: bad {what}", path.display()));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let f = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(i + 1, CSV_COLUMNS[k]));
        let mode = match &rec[0] {
            "unmeasured" => RowMode::Unmeasured,
            "measured" => RowMode::Measured,
            _ => return Err(bad(i + 1, "mode")),
        };
        let site = match &rec[3] {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|_| bad(i + 1, "site"))?),
        };
        let phi = if rec[4].is_empty() { None } else { Some(f(4)?) };
        let order = match &rec[7] {
            "" => None,
            s => Some(s.parse::<EventOrder>().map_err(|_| bad(i + 1, "order"))?),
        };
        let report = CycleReport {
            w_d: f(8)?,
            w_r: f(9)?,
            w_meas: f(10)?,
            w_reset: f(11)?,
            w_tot: f(12)?,
            e_plain: f(13)?,
            e_b: f(14)?,
            de_b: f(15)?,
            e_m: f(16)?,
            e_tot: f(17)?,
            eta: f(18)?,
            eta_undefined: rec[19].parse::<bool>().map_err(|_| bad(i + 1, "eta_undefined"))?,
            w_diss: f(20)?,
            shannon: f(21)?,
            info_gain: f(22)?,
            de_m: f(23)?,
            de_c: f(24)?,
            outcome_probs: vec![f(25)?, f(26)?],
            slack_second_law: f(27)?,
            slack_info_bound: f(28)?,
            identity_a_residual: f(29)?,
            identity_b_residual: f(30)?,
        };
        rows.push(ResultRow {
            mode,
            temperature: f(1)?,
            theta: f(2)?,
            site,
            phi,
            kappa_b: f(5)?,
            h_m: f(6)?,
            order,
            report,
        });
    }
    Ok(rows)
}

/// Extra per-row results gathered by [`run_verification`].
#[derive(Clone, Debug, Default)]
struct RowExtras {
    /// `|W_reset − T·H|` for the same ensemble with a degenerate memory.
    landauer: Option<f64>,
    /// Differences against the conjugate scheme: W_diss, E_b, memory populations.
    conjugate: Option<[f64; 3]>,
}

fn compute_temperature(
    model: &PreparedModel,
    spec: &SweepSpec,
    schemes: &[MeasurementScheme],
    t: f64,
    extras: bool,
) -> Result<Vec<(ResultRow, RowExtras)>, SweepError> {
    let params = *model.params();
    let fail = |tuple: String, source: Error| SweepError::Compute { tuple, source };
    let t_label = || format!("(kappa_b={}, T={t:e})", params.kappa_b);
    let thermal: ThermalState = model.thermal(t).map_err(|e| fail(t_label(), e))?;
    let mut rows = Vec::new();
    if spec.include_unmeasured {
        for &theta in &spec.thetas {
            let cfg = CycleConfig::unmeasured(params, t, theta);
            let mut row = ResultRow {
                mode: RowMode::Unmeasured,
                temperature: t,
                theta,
                site: None,
                phi: None,
                kappa_b: params.kappa_b,
                h_m: params.h_m,
                order: None,
                report: empty_report(),
            };
            row.report = model
                .evaluate(&thermal, &cfg)
                .map_err(|e| fail(row.tuple_label(), e))?
                .report;
            rows.push((row, RowExtras::default()));
        }
    }
    let mut ensembles = Vec::with_capacity(schemes.len());
    for s in schemes {
        ensembles.push(model.measure(&thermal, s).map_err(|e| fail(t_label(), e))?);
    }
    let conjugates = if extras {
        let mut v = Vec::with_capacity(schemes.len());
        for s in schemes {
            v.push(model.measure(&thermal, &s.conjugate()).map_err(|e| fail(t_label(), e))?);
        }
        Some(v)
    } else {
        None
    };
    for &theta in &spec.measured_thetas {
        for (k, scheme) in schemes.iter().enumerate() {
            for &order in &spec.orders {
                let mut cfg = CycleConfig::measured(params, t, theta, *scheme).with_order(order);
                cfg.reset_policy = spec.reset_policy();
                let mut row = ResultRow {
                    mode: RowMode::Measured,
                    temperature: t,
                    theta,
                    site: Some(scheme.site),
                    phi: Some(scheme.phi()),
                    kappa_b: params.kappa_b,
                    h_m: params.h_m,
                    order: Some(order),
                    report: empty_report(),
                };
                let label = row.tuple_label();
                row.report = model
                    .report_from_ensemble(&thermal, &cfg, &ensembles[k])
                    .map_err(|e| fail(label.clone(), e))?
                    .0;
                let mut extra = RowExtras::default();
                if let Some(conj) = &conjugates {
                    let mut dg = cfg.clone();
                    dg.params.h_m = 0.0;
                    let r = model
                        .report_from_ensemble(&thermal, &dg, &ensembles[k])
                        .map_err(|e| fail(label.clone(), e))?
                        .0;
                    extra.landauer = Some((r.w_reset - t * r.shannon).abs());
                    let cc = cfg.clone().with_scheme(scheme.conjugate());
                    let c = model
                        .report_from_ensemble(&thermal, &cc, &conj[k])
                        .map_err(|e| fail(label.clone(), e))?
                        .0;
                    let swap = (row.report.outcome_probs[0] - c.outcome_probs[1])
                        .abs()
                        .max((row.report.outcome_probs[1] - c.outcome_probs[0]).abs());
                    extra.conjugate = Some([
                        (row.report.w_diss - c.w_diss).abs(),
                        (row.report.e_b - c.e_b).abs(),
                        swap,
                    ]);
                }
                rows.push((row, extra));
            }
        }
    }
    Ok(rows)
}

fn empty_report() -> CycleReport {
    CycleReport {
        w_d: 0.0,
        w_r: 0.0,
        w_meas: 0.0,
        w_reset: 0.0,
        w_tot: 0.0,
        e_plain: 0.0,
        e_b: 0.0,
        de_b: 0.0,
        e_m: 0.0,
        e_tot: 0.0,
        eta: 0.0,
        eta_undefined: false,
        w_diss: 0.0,
        shannon: 0.0,
        info_gain: 0.0,
        de_m: 0.0,
        de_c: 0.0,
        outcome_probs: Vec::new(),
        slack_second_law: 0.0,
        slack_info_bound: 0.0,
        identity_a_residual: 0.0,
        identity_b_residual: 0.0,
    }
}

fn sweep_inner(spec: &SweepSpec, extras: bool) -> Result<Vec<(ResultRow, RowExtras)>, SweepError> {
    spec.validate()?;
    let schemes = spec.schemes()?;
    let temps = spec.temperature_values();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| config_err(format!("cannot build thread pool: {e}")))?;
    let mut out = Vec::with_capacity(spec.row_count());
    for params in spec.param_sets() {
        let model = PreparedModel::new(&params).map_err(|e| SweepError::Compute {
            tuple: format!("(kappa_b={})", params.kappa_b),
            source: e,
        })?;
        let per_t: Vec<Result<Vec<(ResultRow, RowExtras)>, SweepError>> = pool.install(|| {
            temps
                .par_iter()
                .map(|&t| compute_temperature(&model, spec, &schemes, t, extras))
                .collect()
        });
        for chunk in per_t {
            out.extend(chunk?);
        }
    }
    Ok(out)
}

/// Runs every tuple of the spec and aborts on the first bound violation.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>, SweepError> {
    let rows = sweep_inner(spec, false)?;
    for (row, _) in &rows {
        if let Some(v) = check_report_with(&row.report, &spec.tolerances).into_iter().next() {
            return Err(SweepError::Theorem {
                tuple: row.tuple_label(),
                source: v.into(),
            });
        }
    }
    Ok(rows.into_iter().map(|(r, _)| r).collect())
}

/// Worst value seen for one check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckSummary {
    pub name: &'static str,
    /// Smallest slack for bounds, largest residual for identities.
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub violations: usize,
    /// Tuple of the worst sample.
    pub worst_tuple: String,
}

// NaN must register as a violation, hence the negated comparisons
#[allow(clippy::neg_cmp_op_on_partial_ord)]
impl CheckSummary {
    fn new(name: &'static str, tolerance: f64, lower_bound: bool) -> Self {
        Self {
            name,
            worst: if lower_bound { f64::INFINITY } else { 0.0 },
            tolerance,
            samples: 0,
            violations: 0,
            worst_tuple: String::new(),
        }
    }

    fn slack(&mut self, value: f64, tuple: &str) {
        self.samples += 1;
        if !(value >= -self.tolerance) {
            self.violations += 1;
        }
        if !(value >= self.worst) {
            self.worst = value;
            self.worst_tuple = tuple.to_string();
        }
    }

    fn residual(&mut self, value: f64, tuple: &str) {
        self.samples += 1;
        let a = value.abs();
        if !(a <= self.tolerance) {
            self.violations += 1;
        }
        if !(a <= self.worst) {
            self.worst = a;
            self.worst_tuple = tuple.to_string();
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub checks: Vec<CheckSummary>,
    pub rows: usize,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckSummary::passed)
    }

    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rows checked: {}", self.rows);
        let _ = writeln!(
            s,
            "{:<32} {:>14} {:>10} {:>8} {:>10}  status",
            "check", "worst", "tolerance", "samples", "violations"
        );
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<32} {:>14.6e} {:>10.1e} {:>8} {:>10}  {}",
                c.name,
                c.worst,
                c.tolerance,
                c.samples,
                c.violations,
                if c.passed() { "ok" } else { "FAIL" }
            );
        }
        for c in self.checks.iter().filter(|c| !c.passed()) {
            let _ = writeln!(s, "worst {} at {}", c.name, c.worst_tuple);
        }
        let _ = writeln!(s, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

/// Temperatures used for the small-chain oracle comparison.
pub const ORACLE_TEMPERATURES: [f64; 5] = [0.05, 0.3, 1.0, 4.0, 20.0];

/// Compares the Kraus pipeline with the dilated brute force on a two-site
/// chain with the spec's fields and couplings.
pub fn oracle_comparison(spec: &SweepSpec) -> Result<CheckSummary, SweepError> {
    let tol = spec.tolerances.identity;
    let mut summary = CheckSummary::new("oracle_discrepancy", tol, false);
    let phis = if spec.phis.is_empty() {
        vec![std::f64::consts::PI, 5.0 * std::f64::consts::PI / 4.0]
    } else {
        spec.phis.clone()
    };
    for mut params in spec.param_sets() {
        params.n_charger = 2;
        let model = PreparedModel::new(&params).map_err(|e| SweepError::Compute {
            tuple: "(oracle)".into(),
            source: e,
        })?;
        for t in ORACLE_TEMPERATURES {
            let thermal = model.thermal(t).map_err(|e| SweepError::Compute {
                tuple: "(oracle)".into(),
                source: e,
            })?;
            for &phi in &phis {
                for site in [1, 2] {
                    for order in [EventOrder::MeasureFirst, EventOrder::DisconnectFirst] {
                        let scheme = MeasurementScheme::new(site, phi).map_err(|e| config_err(e.to_string()))?;
                        let cfg = CycleConfig::measured(params, t, 0.0, scheme).with_order(order);
                        let tuple = format!(
                            "(oracle, kappa_b={}, T={t}, site={site}, phi={phi}, order={order})",
                            params.kappa_b
                        );
                        let compute = |e| SweepError::Compute {
                            tuple: tuple.clone(),
                            source: e,
                        };
                        let a = model.evaluate(&thermal, &cfg).map_err(compute)?.report;
                        let b = dilated_cycle(&cfg).map_err(compute)?;
                        let (field, diff) = max_report_discrepancy(&a, &b);
                        summary.residual(diff, &format!("{tuple} field {field}"));
                    }
                }
            }
        }
    }
    Ok(summary)
}

/// Runs the sweep with every bound and identity collected rather than
/// enforced, plus the Landauer, conjugate-pair and small-chain oracle suites.
pub fn run_verification(spec: &SweepSpec) -> Result<VerificationReport, SweepError> {
    let tol = spec.tolerances;
    let rows = sweep_inner(spec, true)?;
    let mut second = CheckSummary::new("slack_second_law", tol.bound, true);
    let mut info = CheckSummary::new("slack_info_bound", tol.bound, true);
    let mut eta_lo = CheckSummary::new("eta_nonnegative", 0.0, true);
    let mut eta_hi = CheckSummary::new("eta_below_one", tol.eta, true);
    let mut gain = CheckSummary::new("daemonic_gain", tol.bound, true);
    let mut shannon = CheckSummary::new("info_gain_below_shannon", tol.bound, true);
    let mut ident_a = CheckSummary::new("dissipated_work_identity", tol.identity, false);
    let mut ident_b = CheckSummary::new("measurement_work_decomposition", tol.identity, false);
    let mut landauer = CheckSummary::new("landauer_reset", 1e-10, false);
    let mut conj_diss = CheckSummary::new("conjugate_w_diss", tol.identity, false);
    let mut conj_eb = CheckSummary::new("conjugate_e_b", tol.identity, false);
    let mut conj_pop = CheckSummary::new("conjugate_populations_swapped", tol.identity, false);
    for (row, extra) in &rows {
        let r = &row.report;
        let tuple = row.tuple_label();
        second.slack(r.slack_second_law, &tuple);
        info.slack(r.slack_info_bound, &tuple);
        eta_lo.slack(r.eta, &tuple);
        eta_hi.slack(1.0 - r.eta, &tuple);
        gain.slack(r.de_b, &tuple);
        shannon.slack(r.shannon - r.info_gain, &tuple);
        ident_a.residual(r.identity_a_residual, &tuple);
        ident_b.residual(r.identity_b_residual, &tuple);
        if let Some(x) = extra.landauer {
            landauer.residual(x, &tuple);
        }
        if let Some([d, e, p]) = extra.conjugate {
            conj_diss.residual(d, &tuple);
            conj_eb.residual(e, &tuple);
            conj_pop.residual(p, &tuple);
        }
    }
    let mut checks = vec![
        second, info, eta_lo, eta_hi, gain, shannon, ident_a, ident_b, landauer, conj_diss, conj_eb, conj_pop,
    ];
    checks.push(oracle_comparison(spec)?);
    Ok(VerificationReport {
        checks,
        rows: rows.len(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), SweepError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<(), SweepError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}
