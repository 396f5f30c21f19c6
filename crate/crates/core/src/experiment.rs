//! Figure presets, power sweeps over both engines, and their CSV, SVG and
//! metadata outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{assemble_hop, Hop};
use crate::config::{parse_config, SystemConfig};
use crate::correlation::{theta_sets_for, ThetaCache, ThetaSet};
use crate::deterministic::{deterministic_point, BoundKind, DeCache};
use crate::error::{Error, Result};
use crate::precoder::{cross_gains, GramFactor};
use crate::sinr::{budgets_for, monte_carlo_sweep_with, RateReport, SweepOptions};
use crate::stats::{mean, CompensatedSum};
use crate::verification::{gap_reports_csv, run_suite, CheckOutcome, VerifyOptions};

const PRESETS: [(&str, &str); 12] = [
    ("fig2a", include_str!("../presets/fig2a.json")),
    ("fig2b", include_str!("../presets/fig2b.json")),
    ("fig3a", include_str!("../presets/fig3a.json")),
    ("fig3b", include_str!("../presets/fig3b.json")),
    ("fig4a", include_str!("../presets/fig4a.json")),
    ("fig4b", include_str!("../presets/fig4b.json")),
    ("fig5a", include_str!("../presets/fig5a.json")),
    ("fig5b", include_str!("../presets/fig5b.json")),
    ("fig6a", include_str!("../presets/fig6a.json")),
    ("fig6b", include_str!("../presets/fig6b.json")),
    ("fig7a", include_str!("../presets/fig7a.json")),
    ("fig7b", include_str!("../presets/fig7b.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Raw JSON of a preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<SystemConfig> {
    let text = preset_text(name).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "unknown preset {name}; expected one of {}",
            preset_names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    parse_config(text)
}

/// Presets whose sweep reproduces a quadratic-form figure.
pub fn is_quadform_preset(name: &str) -> bool {
    matches!(name, "fig6a" | "fig6b" | "fig7a" | "fig7b")
}

/// Nats to bits.
pub fn to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// One power point of a sweep; sum rates in bit/s/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_dbm: f64,
    pub sumrate_mc_af: f64,
    pub stderr_af: f64,
    pub sumrate_de_af: f64,
    pub sumrate_mc_df: f64,
    pub stderr_df: f64,
    pub sumrate_de_df: f64,
}

pub const SWEEP_CSV_HEADER: &str = "p_dbm,sumrate_mc_af,stderr_af,sumrate_de_af,sumrate_mc_df,stderr_df,sumrate_de_df";

/// Per-point quantities that do not go into the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointDiagnostics {
    pub p_dbm: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub mc_xi1_sq: f64,
    pub de_xi1_sq: f64,
    pub mc_xi_af_sq: f64,
    pub de_xi_af_sq: f64,
    pub mc_xi_df_sq: f64,
    pub de_xi_df_sq: f64,
    /// Largest relative power-constraint error over trials and hops.
    pub max_power_residual: f64,
    pub fixed_point_residual: f64,
    pub fixed_point_iterations: usize,
    /// Largest spectral radius of J over both hops.
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// Sorted by `p_dbm` ascending.
    pub rows: Vec<SweepRow>,
    pub fingerprint: String,
    pub seed: u64,
    pub trials: usize,
    pub diagnostics: Vec<PointDiagnostics>,
    /// Label of the DF equivalent column.
    pub de_df_kind: &'static str,
}

fn bound_label(kind: BoundKind) -> &'static str {
    match kind {
        BoundKind::Equivalent => "deterministic equivalent",
        BoundKind::UpperApproximation => "upper-bounding approximation",
    }
}

fn sorted_grid(grid_dbm: &[f64]) -> Result<Vec<f64>> {
    if grid_dbm.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidConfig("power grid values must be finite".into()));
    }
    let mut g = grid_dbm.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Runs both engines over `grid_dbm` with Θ built from the config.
pub fn run_sweep(cfg: &SystemConfig, grid_dbm: &[f64], cache: Option<&ThetaCache>) -> Result<SweepResult> {
    cfg.validate()?;
    let (sr, rd) = theta_sets_for::<f64>(cfg, cache)?;
    run_sweep_with(cfg, grid_dbm, (&sr, &rd))
}

/// Runs both engines over `grid_dbm` with given Θ sets. Monte-Carlo
/// trials run in parallel; the equivalents are solved point by point,
/// each solve parallel over the distinct correlation matrices.
pub fn run_sweep_with(
    cfg: &SystemConfig,
    grid_dbm: &[f64],
    thetas: (&ThetaSet<f64>, &ThetaSet<f64>),
) -> Result<SweepResult> {
    cfg.validate()?;
    let grid = sorted_grid(grid_dbm)?;
    let mc = monte_carlo_sweep_with(cfg, &grid, thetas, SweepOptions::default())?;
    let budgets = budgets_for(cfg, &grid)?;
    let tau_sr = cfg.tau_sr_vec();
    let tau_rd = cfg.tau_rd_vec();
    let mut cache = DeCache::new();
    let mut rows = Vec::with_capacity(grid.len());
    let mut diagnostics = Vec::with_capacity(grid.len());
    let mut kind = BoundKind::UpperApproximation;
    for ((b, report), &p_dbm) in budgets.iter().zip(&mc).zip(&grid) {
        let de = deterministic_point(thetas.0, thetas.1, &tau_sr, &tau_rd, b, &mut cache).map_err(|e| {
            Error::PowerPoint {
                p_dbm,
                source: Box::new(e),
            }
        })?;
        kind = de.sinr_df.kind;
        rows.push(SweepRow {
            p_dbm,
            sumrate_mc_af: to_bits(report.sum_rate_af),
            stderr_af: to_bits(report.stderr_af),
            sumrate_de_af: to_bits(de.sum_rate_af()),
            sumrate_mc_df: to_bits(report.sum_rate_df),
            stderr_df: to_bits(report.stderr_df),
            sumrate_de_df: to_bits(de.sum_rate_df()),
        });
        let cores = [&de.sr.core, &de.rd.core];
        diagnostics.push(PointDiagnostics {
            p_dbm,
            alpha1: b.alpha1,
            alpha2: b.alpha2,
            mc_xi1_sq: report.mean_xi1_sq,
            de_xi1_sq: de.sr.xi_sq,
            mc_xi_af_sq: report.mean_xi_af_sq,
            de_xi_af_sq: de.xi_af_sq,
            mc_xi_df_sq: report.mean_xi_df_sq,
            de_xi_df_sq: de.rd.xi_sq,
            max_power_residual: report.max_power_residual,
            fixed_point_residual: cores.iter().map(|c| c.fixed.residual).fold(0.0, f64::max),
            fixed_point_iterations: cores.iter().map(|c| c.fixed.iterations).max().unwrap_or(0),
            spectral_radius: cores.iter().map(|c| c.second.spectral_radius).fold(0.0, f64::max),
        });
        // Cores are per α; keep memory flat across the grid.
        cache = DeCache::new();
    }
    Ok(SweepResult {
        rows,
        fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        trials: cfg.trials,
        diagnostics,
        de_df_kind: bound_label(kind),
    })
}

/// Monte-Carlo rate reports, exposed for callers that need per-user values.
pub fn monte_carlo_reports(cfg: &SystemConfig, grid_dbm: &[f64], cache: Option<&ThetaCache>) -> Result<Vec<RateReport>> {
    let (sr, rd) = theta_sets_for::<f64>(cfg, cache)?;
    monte_carlo_sweep_with(cfg, &sorted_grid(grid_dbm)?, (&sr, &rd), SweepOptions::default())
}

/// One power point of the quadratic-form sweep, averaged over users: the
/// realized `h_kᴴŴĥ_k` on the BS hop, its iterative equivalent and the
/// closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadFormRow {
    pub p_dbm: f64,
    pub quadform_mc: f64,
    pub stderr_mc: f64,
    pub quadform_de_iterative: f64,
    pub quadform_closed_form: f64,
}

pub const QUADFORM_CSV_HEADER: &str = "p_dbm,quadform_mc,stderr_mc,quadform_de_iterative,quadform_closed_form";

/// Realized BS-hop quadratic forms against both equivalents.
pub fn run_quadratic_form_sweep(
    cfg: &SystemConfig,
    grid_dbm: &[f64],
    cache: Option<&ThetaCache>,
) -> Result<Vec<QuadFormRow>> {
    cfg.validate()?;
    if cfg.trials < 2 {
        return Err(Error::InvalidConfig(format!("trials ≥ 2 violated: {}", cfg.trials)));
    }
    let (sr, _) = theta_sets_for::<f64>(cfg, cache)?;
    let grid = sorted_grid(grid_dbm)?;
    let budgets = budgets_for(cfg, &grid)?;
    let tau = cfg.tau_sr_vec();
    let k = cfg.k;
    // Per trial: user-averaged h_kᴴŴĥ_k at each grid point.
    let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let ch = assemble_hop(&sr, &tau, cfg.seed, Hop::Sr, t)?;
            let g = GramFactor::new(&ch.hhat);
            budgets
                .iter()
                .map(|b| {
                    let c = cross_gains(&ch.h, &g.directions(&ch.hhat, b.alpha1)?);
                    Ok((0..k).map(|u| c[(u, u)].re).collect::<CompensatedSum>().value() / k as f64)
                })
                .collect::<Result<Vec<f64>>>()
                .map_err(|e| Error::Trial {
                    trial: t,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let mut de_cache = DeCache::new();
    grid.iter()
        .zip(&budgets)
        .enumerate()
        .map(|(i, (&p_dbm, b))| {
            let samples: Vec<f64> = per_trial.iter().map(|t| t[i]).collect();
            let point = deterministic_point(&sr, &sr, &tau, &tau, b, &mut de_cache).map_err(|e| Error::PowerPoint {
                p_dbm,
                source: Box::new(e),
            })?;
            de_cache = DeCache::new();
            Ok(QuadFormRow {
                p_dbm,
                quadform_mc: mean(&samples),
                stderr_mc: crate::stats::standard_error(&samples),
                quadform_de_iterative: mean(&point.sr.quad_form),
                quadform_closed_form: mean(&point.sr.gamma_cf),
            })
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn rows_to_csv<R: Serialize>(header: &str, rows: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    let mut out = String::with_capacity(header.len() + 1 + body.len());
    out.push_str(header);
    out.push('\n');
    out.push_str(std::str::from_utf8(&body).map_err(|e| Error::Csv(e.to_string()))?);
    Ok(out)
}

fn csv_to_rows<R: for<'de> Deserialize<'de>>(header: &str, text: &str) -> Result<Vec<R>> {
    let first = text.lines().next().unwrap_or_default();
    if first != header {
        return Err(Error::Csv(format!("expected header {header:?}, found {first:?}")));
    }
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| Error::Csv(e.to_string())))
        .collect()
}

pub fn sweep_csv(result: &SweepResult) -> Result<String> {
    rows_to_csv(SWEEP_CSV_HEADER, &result.rows)
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    csv_to_rows(SWEEP_CSV_HEADER, text)
}

pub fn quadform_csv(rows: &[QuadFormRow]) -> Result<String> {
    rows_to_csv(QUADFORM_CSV_HEADER, rows)
}

pub fn parse_quadform_csv(text: &str) -> Result<Vec<QuadFormRow>> {
    csv_to_rows(QUADFORM_CSV_HEADER, text)
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    write_file(path, &sweep_csv(result)?)
}

/// A plotted series: points, optional symmetric error bars, and style.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    pub errors: Option<Vec<f64>>,
    pub color: &'a str,
    pub dashed: bool,
}

const SVG_W: f64 = 720.0;
const SVG_H: f64 = 480.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 56.0;

/// Round tick step covering `span` in about five intervals.
fn tick_step(span: f64) -> f64 {
    if !(span > 0.0) {
        return 1.0;
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Static line plot with axes, ticks, error bars and a legend.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| {
        s.points.iter().enumerate().flat_map(move |(i, p)| {
            let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
            [p.1 - e, p.1 + e]
        })
    });
    let finite = |it: &mut dyn Iterator<Item = f64>| {
        it.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (mut x0, mut x1) = finite(&mut xs.into_iter());
    let (mut y0, mut y1) = finite(&mut ys.into_iter());
    if !(x0 <= x1) {
        (x0, x1) = (0.0, 1.0);
    }
    if !(y0 <= y1) {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    y0 = y0.min(0.0);
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let y_step = tick_step(y1 - y0);
    y1 = (y1 / y_step).ceil() * y_step;
    let pw = SVG_W - MARGIN_L - MARGIN_R;
    let ph = SVG_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let x_step = tick_step(x1 - x0);
    let mut t = (x0 / x_step).ceil() * x_step;
    while t <= x1 + 1e-9 {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{MARGIN_T}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            MARGIN_T + ph,
            MARGIN_T + ph + 16.0,
            fmt_tick(t)
        );
        t += x_step;
    }
    let mut t = (y0 / y_step).ceil() * y_step;
    while t <= y1 + 1e-9 * y_step {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_L + pw,
            MARGIN_L - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
        t += y_step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        SVG_H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_T + ph / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.6"{dash} points="{}"/>"#,
            ser.color,
            pts.join(" ")
        );
        for (j, p) in ser.points.iter().enumerate().filter(|(_, p)| p.1.is_finite()) {
            if let Some(e) = ser.errors.as_ref().map(|e| e[j]).filter(|e| *e > 0.0) {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{}"/>"#,
                    py(p.1 - e),
                    py(p.1 + e),
                    ser.color,
                    x = px(p.0)
                );
            }
            if !ser.dashed {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, px(p.0), py(p.1), ser.color);
            }
        }
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        let lx = MARGIN_L + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="1.6"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 28.0,
            ser.color,
            lx + 34.0,
            ly + 4.0,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const X_LABEL: &str = "transmit power (dBm)";
pub const Y_LABEL: &str = "sum rate (bit/s/Hz)";

/// Sum-rate plot: Monte-Carlo curves with standard-error bars, equivalents
/// dashed.
pub fn sweep_svg(title: &str, result: &SweepResult) -> String {
    let col = |f: fn(&SweepRow) -> f64| result.rows.iter().map(|r| (r.p_dbm, f(r))).collect::<Vec<_>>();
    let df_label = format!("DF equivalent ({})", result.de_df_kind);
    let series = [
        Series {
            label: "AF Monte-Carlo",
            points: col(|r| r.sumrate_mc_af),
            errors: Some(result.rows.iter().map(|r| r.stderr_af).collect()),
            color: "#1f77b4",
            dashed: false,
        },
        Series {
            label: "AF deterministic equivalent",
            points: col(|r| r.sumrate_de_af),
            errors: None,
            color: "#1f77b4",
            dashed: true,
        },
        Series {
            label: "DF Monte-Carlo",
            points: col(|r| r.sumrate_mc_df),
            errors: Some(result.rows.iter().map(|r| r.stderr_df).collect()),
            color: "#d62728",
            dashed: false,
        },
        Series {
            label: &df_label,
            points: col(|r| r.sumrate_de_df),
            errors: None,
            color: "#d62728",
            dashed: true,
        },
    ];
    render_svg(title, X_LABEL, Y_LABEL, &series)
}

pub fn quadform_svg(title: &str, rows: &[QuadFormRow]) -> String {
    let col = |f: fn(&QuadFormRow) -> f64| rows.iter().map(|r| (r.p_dbm, f(r))).collect::<Vec<_>>();
    let series = [
        Series {
            label: "Monte-Carlo",
            points: col(|r| r.quadform_mc),
            errors: Some(rows.iter().map(|r| r.stderr_mc).collect()),
            color: "#1f77b4",
            dashed: false,
        },
        Series {
            label: "iterative equivalent",
            points: col(|r| r.quadform_de_iterative),
            errors: None,
            color: "#2ca02c",
            dashed: true,
        },
        Series {
            label: "closed form",
            points: col(|r| r.quadform_closed_form),
            errors: None,
            color: "#d62728",
            dashed: true,
        },
    ];
    render_svg(title, X_LABEL, "h_k^H W h_k (user average)", &series)
}

pub fn emit_plot(title: &str, result: &SweepResult, path: &Path) -> Result<()> {
    write_file(path, &sweep_svg(title, result))
}

/// Output formats of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Svg,
}

pub fn parse_formats(spec: &str) -> Result<Vec<OutputFormat>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "csv" => Ok(OutputFormat::Csv),
            "svg" => Ok(OutputFormat::Svg),
            other => Err(Error::InvalidConfig(format!("unknown output format {other}; expected csv or svg"))),
        })
        .collect()
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    name: &'a str,
    fingerprint: &'a str,
    seed: u64,
    trials: usize,
    de_df_kind: &'a str,
    rate_unit: &'static str,
    config: &'a SystemConfig,
    diagnostics: &'a [PointDiagnostics],
}

/// Writes `<name>.csv`, `<name>.svg` and `<name>.meta.json` under `dir`;
/// returns the paths written.
pub fn write_sweep_outputs(
    name: &str,
    cfg: &SystemConfig,
    result: &SweepResult,
    dir: &Path,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        let p = dir.join(format!("{name}.csv"));
        emit_csv(result, &p)?;
        written.push(p);
    }
    if formats.contains(&OutputFormat::Svg) {
        let p = dir.join(format!("{name}.svg"));
        emit_plot(name, result, &p)?;
        written.push(p);
    }
    let meta = SweepMeta {
        name,
        fingerprint: &result.fingerprint,
        seed: result.seed,
        trials: result.trials,
        de_df_kind: result.de_df_kind,
        rate_unit: "bit/s/Hz",
        config: cfg,
        diagnostics: &result.diagnostics,
    };
    let p = dir.join(format!("{name}.meta.json"));
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(&p, &(text + "\n"))?;
    written.push(p);
    Ok(written)
}

pub fn write_quadform_outputs(name: &str, rows: &[QuadFormRow], dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Csv) {
        let p = dir.join(format!("{name}_quadform.csv"));
        write_file(&p, &quadform_csv(rows)?)?;
        written.push(p);
    }
    if formats.contains(&OutputFormat::Svg) {
        let p = dir.join(format!("{name}_quadform.svg"));
        write_file(&p, &quadform_svg(name, rows))?;
        written.push(p);
    }
    Ok(written)
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERIC
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub outcomes: Vec<CheckOutcome>,
    pub written: Vec<PathBuf>,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.outcomes.iter().all(|o| o.passed) {
            EXIT_OK
        } else {
            EXIT_VERIFY
        }
    }

    pub fn failures(&self) -> Vec<&str> {
        self.outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect()
    }
}

/// Runs the verification suite and writes one gap CSV per check that
/// produced gap reports.
pub fn run_verify(opts: &VerifyOptions, out_dir: Option<&Path>) -> Result<VerifyReport> {
    let outcomes = run_suite(opts)?;
    let mut written = Vec::new();
    if let Some(dir) = out_dir {
        for o in outcomes.iter().filter(|o| !o.reports.is_empty()) {
            let p = dir.join(format!("verify_{}.csv", o.name));
            write_file(&p, &gap_reports_csv(&o.reports))?;
            written.push(p);
        }
    }
    Ok(VerifyReport { outcomes, written })
}
