//! SVG views of a result set. Everything drawn is read off the rows, so a
//! CSV reloaded with [`crate::sweep::read_csv`] reproduces the same files.
//!
//! Styling: unmeasured series are solid lines in a blue-green ramp by θ,
//! measured series use warm colours by scheme. In the gains and work plots
//! the quantities of one series share a colour and differ by dash pattern.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::sweep::{ResultRow, RowMode, SweepError};

pub const FIG_EFFICIENCY: &str = "fig_a_efficiency.svg";
pub const FIG_TOTAL_ERGOTROPY: &str = "fig_b_total_ergotropy.svg";
pub const FIG_GAINS: &str = "fig_c_gains.svg";
pub const FIG_WORK: &str = "fig_work.svg";

const SIZE: (u32, u32) = (900, 600);

struct Series<'a> {
    label: String,
    measured: bool,
    rows: Vec<&'a ResultRow>,
}

fn same_series(a: &ResultRow, b: &ResultRow) -> bool {
    a.mode == b.mode
        && a.theta == b.theta
        && a.site == b.site
        && a.phi == b.phi
        && a.order == b.order
        && a.kappa_b == b.kappa_b
        && a.h_m == b.h_m
}

fn label(r: &ResultRow, multi_kappa: bool, multi_order: bool) -> String {
    let mut s = match r.mode {
        RowMode::Unmeasured => format!("no meas., θ={:.3}", r.theta),
        RowMode::Measured => format!(
            "n={}, φ={:.3}π, θ={:.3}",
            r.site.unwrap_or(0),
            r.phi.unwrap_or(0.0) / std::f64::consts::PI,
            r.theta
        ),
    };
    if multi_order {
        if let Some(o) = r.order {
            s.push_str(&format!(", {o}"));
        }
    }
    if multi_kappa {
        s.push_str(&format!(", κ_b={}", r.kappa_b));
    }
    s
}

fn group(rows: &[ResultRow]) -> Result<Vec<Series<'_>>, SweepError> {
    let multi_kappa = rows.iter().any(|r| r.kappa_b != rows[0].kappa_b);
    let multi_order = rows
        .iter()
        .filter_map(|r| r.order)
        .any(|o| Some(o) != rows.iter().find_map(|r| r.order));
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|s| same_series(s.rows[0], r)) {
            Some(s) => s.rows.push(r),
            None => out.push(Series {
                label: label(r, multi_kappa, multi_order),
                measured: r.mode == RowMode::Measured,
                rows: vec![r],
            }),
        }
    }
    for s in &mut out {
        s.rows.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
        if s.rows.len() < 2 {
            return Err(SweepError::Plot(format!(
                "series `{}` has {} temperature point(s); at least 2 are needed",
                s.label,
                s.rows.len()
            )));
        }
    }
    Ok(out)
}

fn colour(k: usize, measured: bool) -> RGBColor {
    const COOL: [RGBColor; 6] = [
        RGBColor(31, 119, 180),
        RGBColor(23, 190, 207),
        RGBColor(44, 160, 44),
        RGBColor(148, 103, 189),
        RGBColor(127, 127, 127),
        RGBColor(0, 0, 128),
    ];
    const WARM: [RGBColor; 6] = [
        RGBColor(214, 39, 40),
        RGBColor(255, 127, 14),
        RGBColor(140, 86, 75),
        RGBColor(227, 119, 194),
        RGBColor(188, 189, 34),
        RGBColor(0, 0, 0),
    ];
    if measured {
        WARM[k % WARM.len()]
    } else {
        COOL[k % COOL.len()]
    }
}

#[derive(Clone, Copy)]
enum Dash {
    Solid,
    Dashed,
    Dotted,
}

struct Curve {
    label: String,
    colour: RGBColor,
    dash: Dash,
    points: Vec<(f64, f64)>,
}

fn plot_err(path: &Path, e: impl std::fmt::Display) -> SweepError {
    SweepError::Plot(format!("{}: {e}", path.display()))
}

fn draw(path: &Path, title: &str, y_label: &str, t_range: (f64, f64), curves: &[Curve]) -> Result<(), SweepError> {
    let ys = curves.iter().flat_map(|c| c.points.iter().map(|p| p.1)).filter(|y| y.is_finite());
    let (mut lo, mut hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    let (lo, hi) = (lo - pad, hi + pad);

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(44)
        .y_label_area_size(70)
        .build_cartesian_2d((t_range.0..t_range.1).log_scale(), lo..hi)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("T")
        .y_desc(y_label)
        .x_label_formatter(&|x| format!("{x:.0e}"))
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for c in curves {
        let style = ShapeStyle::from(&c.colour).stroke_width(2);
        let pts = c.points.iter().copied().filter(|p| p.1.is_finite());
        let anno = match c.dash {
            Dash::Solid => chart.draw_series(LineSeries::new(pts, style)),
            Dash::Dashed => chart.draw_series(DashedLineSeries::new(pts, 8, 5, style)),
            Dash::Dotted => chart.draw_series(DashedLineSeries::new(pts, 2, 4, style)),
        }
        .map_err(|e| plot_err(path, e))?;
        let colour = c.colour;
        anno.label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], colour.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperRight)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

fn curve(s: &Series, colour: RGBColor, dash: Dash, suffix: &str, f: impl Fn(&ResultRow) -> f64) -> Curve {
    Curve {
        label: if suffix.is_empty() {
            s.label.clone()
        } else {
            format!("{suffix}: {}", s.label)
        },
        colour,
        dash,
        points: s.rows.iter().map(|r| (r.temperature, f(r))).collect(),
    }
}

/// Smallest and largest temperature of the rows.
pub fn temperature_span(rows: &[ResultRow]) -> Option<(f64, f64)> {
    let lo = rows.iter().map(|r| r.temperature).reduce(f64::min)?;
    let hi = rows.iter().map(|r| r.temperature).reduce(f64::max)?;
    Some((lo, hi))
}

/// Writes the efficiency, total ergotropy, gains and work plots into `dir`
/// and returns their paths. The log-T axis spans the input temperatures.
pub fn emit_plots(rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>, SweepError> {
    if rows.is_empty() {
        return Err(SweepError::Plot("no rows to plot".into()));
    }
    let series = group(rows)?;
    let (t_min, t_max) = temperature_span(rows).expect("nonempty rows");
    if !(t_min > 0.0 && t_max > t_min) {
        return Err(SweepError::Plot("need at least two distinct positive temperatures".into()));
    }
    let range = (t_min, t_max);

    let mut styled = Vec::new();
    let (mut nu, mut nm) = (0, 0);
    for s in &series {
        let c = if s.measured {
            nm += 1;
            colour(nm - 1, true)
        } else {
            nu += 1;
            colour(nu - 1, false)
        };
        styled.push((s, c));
    }

    let mut written = Vec::new();
    let mut emit = |name: &str, title: &str, y: &str, curves: Vec<Curve>| -> Result<(), SweepError> {
        let path = dir.join(name);
        draw(&path, title, y, range, &curves)?;
        written.push(path);
        Ok(())
    };

    emit(
        FIG_EFFICIENCY,
        "Efficiency",
        "η",
        styled.iter().map(|(s, c)| curve(s, *c, Dash::Solid, "", |r| r.report.eta)).collect(),
    )?;
    emit(
        FIG_TOTAL_ERGOTROPY,
        "Total ergotropy",
        "E_tot",
        styled.iter().map(|(s, c)| curve(s, *c, Dash::Solid, "", |r| r.report.e_tot)).collect(),
    )?;
    let measured: Vec<_> = styled.iter().filter(|(s, _)| s.measured).collect();
    let mut gains = Vec::new();
    for (s, c) in &measured {
        gains.push(curve(s, *c, Dash::Solid, "ΔE_b", |r| r.report.de_b));
        gains.push(curve(s, *c, Dash::Dashed, "E_m", |r| r.report.e_m));
    }
    emit(FIG_GAINS, "Daemonic gain and memory ergotropy", "energy", gains)?;
    let mut work = Vec::new();
    for (s, c) in &styled {
        work.push(curve(s, *c, Dash::Solid, "W_tot", |r| r.report.w_tot));
        if s.measured {
            work.push(curve(s, *c, Dash::Dashed, "W_meas", |r| r.report.w_meas));
            work.push(curve(s, *c, Dash::Dotted, "W_reset", |r| r.report.w_reset));
        }
    }
    emit(FIG_WORK, "Work", "work", work)?;
    Ok(written)
}
