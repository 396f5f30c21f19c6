//! Numerical checks of the identities and limits behind the analysis.
//!
//! Lemma 1 and 2 are exact identities and are checked by residuals. The
//! other statements are almost-sure limits; they are checked as gap
//! statistics along an antenna ladder at fixed K/M, using medians because
//! finite-M quadratic forms are heavy tailed.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{assemble_hop, Hop};
use crate::config::{default_sectors, regularization_from_table};
use crate::correlation::{one_ring_set, AngularSector, ThetaSet, UlaGeometry};
use crate::deterministic::{DeCore, DeterministicState};
use crate::error::{Error, Result};
use crate::linalg::{cmatmul_adj, cmatmul_by_adj, hpd_inverse, trace_of_product, CMatrix, CVector};
use crate::precoder::{cross_gains, GramFactor};
use crate::rng::{Purpose, StreamKey};
use crate::stats::{max, median};

/// Gap statistic of one check at one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub name: String,
    pub m: usize,
    pub samples: usize,
    pub median: f64,
    pub max: f64,
    /// Expected decay exponent of the gap in M; documentation only.
    pub exponent: f64,
}

impl GapReport {
    pub fn from_samples(name: &str, m: usize, samples: &[f64], exponent: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig(format!("{name}: no samples")));
        }
        Ok(Self {
            name: name.to_string(),
            m,
            samples: samples.len(),
            median: median(samples),
            max: max(samples),
            exponent,
        })
    }
}

pub const GAP_CSV_HEADER: &str = "name,m,samples,median,max,exponent";

/// Gap reports as CSV, floats in shortest round-trip form.
pub fn gap_reports_csv(reports: &[GapReport]) -> String {
    let mut out = String::from(GAP_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{},{},{},{:?},{:?},{:?}", r.name, r.m, r.samples, r.median, r.max, r.exponent);
    }
    out
}

/// True when the medians strictly decrease along the ladder.
pub fn strictly_decreasing(reports: &[GapReport]) -> bool {
    reports.windows(2).all(|w| w[1].median < w[0].median)
}

pub fn strictly_increasing(reports: &[GapReport]) -> bool {
    reports.windows(2).all(|w| w[1].median > w[0].median)
}

fn general_inverse(a: &CMatrix<f64>) -> Result<CMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("matrix is singular".into()))
}

fn frobenius(a: &CMatrix<f64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative residual of the matrix inversion lemma,
/// `‖xᴴ(U + cxxᴴ)⁻¹ − xᴴU⁻¹/(1 + cxᴴU⁻¹x)‖ / ‖xᴴU⁻¹/(1 + cxᴴU⁻¹x)‖`.
/// Returns the absolute residual when the right side vanishes.
pub fn lemma1_residual(u: &CMatrix<f64>, x: &CVector<f64>, c: Complex<f64>) -> Result<f64> {
    let n = u.nrows();
    if u.ncols() != n || x.len() != n {
        return Err(Error::DimensionMismatch(format!("U is {:?}, x has {}", u.shape(), x.len())));
    }
    let perturbed = u + x * x.adjoint() * c;
    let lhs = x.adjoint() * general_inverse(&perturbed)?;
    let xu = x.adjoint() * general_inverse(u)?;
    let denom = Complex::new(1.0, 0.0) + c * (&xu * x)[(0, 0)];
    if denom.norm() == 0.0 {
        return Err(Error::Factorization("1 + c xᴴU⁻¹x vanishes".into()));
    }
    let rhs = xu / denom;
    let diff = (&lhs - &rhs).norm();
    let scale = rhs.norm();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Relative residual of the resolvent identity,
/// `‖U⁻¹ − V⁻¹ + U⁻¹(U − V)V⁻¹‖ / (‖U⁻¹‖ + ‖V⁻¹‖)` in Frobenius norm.
pub fn lemma2_residual(u: &CMatrix<f64>, v: &CMatrix<f64>) -> Result<f64> {
    if u.shape() != v.shape() || u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch(format!("U is {:?}, V is {:?}", u.shape(), v.shape())));
    }
    let ui = general_inverse(u)?;
    let vi = general_inverse(v)?;
    let r = &ui - &vi + &ui * (u - v) * &vi;
    let scale = frobenius(&ui) + frobenius(&vi);
    Ok(frobenius(&r) / scale)
}

/// `rows × cols` matrix of i.i.d. CN(0, var) entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, var: f64, rng: &mut R) -> CMatrix<f64> {
    let sd = (0.5 * var).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * sd, im * sd)
    })
}

/// Random matrices `A_N` of uniformly bounded norm, drawn independently of
/// the test vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixSeries {
    Zero,
    Identity,
    /// `(YYᴴ/N + I)⁻¹` with Y of size N × N/2; spectral norm at most 1.
    Resolvent,
}

impl MatrixSeries {
    fn draw<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Result<CMatrix<f64>> {
        Ok(match self {
            MatrixSeries::Zero => CMatrix::zeros(n, n),
            MatrixSeries::Identity => CMatrix::identity(n, n),
            MatrixSeries::Resolvent => {
                let y = gaussian_matrix(n, (n / 2).max(1), 1.0, rng);
                let mut b = cmatmul_by_adj(&y, &y) / Complex::from(n as f64);
                for i in 0..n {
                    b[(i, i)].re += 1.0;
                }
                hpd_inverse(&b)?
            }
        })
    }
}

/// Stream tags per check so that checks never share draws.
const TAG_LEMMA3: u64 = 0x4c33;
const TAG_LEMMA4: u64 = 0x4c34;
const TAG_LEMMA5: u64 = 0x4c35;
const TAG_EXACT: u64 = 0x4c12;

fn stream(seed: u64, tag: u64, n: usize, draw: usize) -> rand_chacha::ChaCha8Rng {
    StreamKey::new(seed, tag, n, draw, Purpose::Verification).rng()
}

fn validate_ladder(ladder: &[usize], draws: usize) -> Result<()> {
    if ladder.is_empty() || draws == 0 {
        return Err(Error::InvalidConfig("ladder and draw count must be nonempty".into()));
    }
    if ladder.iter().any(|&m| m < 8) || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!("ladder {ladder:?} must be strictly increasing with M ≥ 8")));
    }
    Ok(())
}

fn ladder_reports<F>(name: &str, ladder: &[usize], draws: usize, exponent: f64, gap: F) -> Result<Vec<GapReport>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    validate_ladder(ladder, draws)?;
    ladder
        .iter()
        .map(|&n| {
            let samples: Vec<f64> = (0..draws).into_par_iter().map(|d| gap(n, d)).collect::<Result<_>>()?;
            GapReport::from_samples(name, n, &samples, exponent)
        })
        .collect()
}

/// `|xᴴA_N x − tr(A_N)/N|` along the ladder, x with CN(0, 1/N) entries.
pub fn lemma3_trace_gap(series: MatrixSeries, ladder: &[usize], draws: usize, seed: u64) -> Result<Vec<GapReport>> {
    ladder_reports("lemma3", ladder, draws, 0.5, |n, d| {
        let mut rng = stream(seed, TAG_LEMMA3, n, d);
        let a = series.draw(n, &mut rng)?;
        let x = gaussian_matrix(n, 1, 1.0 / n as f64, &mut rng);
        let quad = (x.adjoint() * &a * &x)[(0, 0)];
        Ok((quad - a.trace() / n as f64).norm())
    })
}

/// `|yᴴA_N x|` along the ladder, x and y independent.
pub fn lemma4_orthogonality_gap(
    series: MatrixSeries,
    ladder: &[usize],
    draws: usize,
    seed: u64,
) -> Result<Vec<GapReport>> {
    ladder_reports("lemma4", ladder, draws, 0.5, |n, d| {
        let mut rng = stream(seed, TAG_LEMMA4, n, d);
        let a = series.draw(n, &mut rng)?;
        let x = gaussian_matrix(n, 1, 1.0 / n as f64, &mut rng);
        let y = gaussian_matrix(n, 1, 1.0 / n as f64, &mut rng);
        Ok((y.adjoint() * &a * &x)[(0, 0)].norm())
    })
}

/// Perturbation vector of the rank-one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankOneVector {
    Zero,
    /// Standard CN(0, 1) entries, so ‖v‖² grows like N.
    Gaussian,
}

/// Deterministic bounded matrix of the rank-one check: `diag(1 + ½cos i)`.
fn rank_one_weight(n: usize) -> CMatrix<f64> {
    CMatrix::from_diagonal(&CVector::from_fn(n, |i, _| Complex::new(1.0 + 0.5 * (i as f64).cos(), 0.0)))
}

/// `|(1/N)tr(A B⁻¹) − (1/N)tr(A (B + vvᴴ)⁻¹)|` along the ladder, with
/// `B = YYᴴ/N + I` (smallest eigenvalue at least 1).
pub fn lemma5_rank_one_gap(v_kind: RankOneVector, ladder: &[usize], draws: usize, seed: u64) -> Result<Vec<GapReport>> {
    ladder_reports("lemma5", ladder, draws, 1.0, |n, d| {
        let mut rng = stream(seed, TAG_LEMMA5, n, d);
        let a = rank_one_weight(n);
        let y = gaussian_matrix(n, n, 1.0, &mut rng);
        let mut b = cmatmul_by_adj(&y, &y) / Complex::from(n as f64);
        for i in 0..n {
            b[(i, i)].re += 1.0;
        }
        let v = match v_kind {
            RankOneVector::Zero => CMatrix::zeros(n, 1),
            RankOneVector::Gaussian => gaussian_matrix(n, 1, 1.0, &mut rng),
        };
        let bv = &b + cmatmul_by_adj(&v, &v);
        let t0 = trace_of_product(&a, &hpd_inverse(&b)?);
        let t1 = trace_of_product(&a, &hpd_inverse(&bv)?);
        Ok((t0 - t1).norm() / n as f64)
    })
}

/// Channel setup of the dominance and convergence checks at one M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderScenario {
    pub correlated: bool,
    pub tau: f64,
    /// K = M / users_divisor.
    pub users_divisor: usize,
    /// Linear SNR entering the regularization table.
    pub rho: f64,
    pub draws: usize,
    pub seed: u64,
}

impl LadderScenario {
    pub fn new(correlated: bool, tau: f64, draws: usize, seed: u64) -> Self {
        Self {
            correlated,
            tau,
            users_divisor: 8,
            rho: 10.0,
            draws,
            seed,
        }
    }

    pub fn users(&self, m: usize) -> usize {
        (m / self.users_divisor).max(1)
    }

    pub fn alpha(&self, m: usize) -> f64 {
        regularization_from_table(self.users(m), m, self.rho)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!("tau = {} outside [0, 1]", self.tau)));
        }
        if self.users_divisor == 0 || !(self.rho > 0.0) || self.draws == 0 {
            return Err(Error::InvalidConfig("scenario needs K ≥ 1, ρ > 0 and at least one draw".into()));
        }
        Ok(())
    }

    pub fn thetas(&self, m: usize) -> Result<ThetaSet<f64>> {
        let k = self.users(m);
        if !self.correlated {
            return Ok(ThetaSet::identity(m, k));
        }
        let sectors = default_sectors(k, std::f64::consts::PI / 6.0)
            .iter()
            .map(|s| AngularSector::new(s.theta_min, s.theta_max))
            .collect::<Result<Vec<_>>>()?;
        one_ring_set(UlaGeometry::new(m, 0.5)?, &sectors, None)
    }
}

/// Realized quadratic forms of one draw: `C = HᴴŴĤ` and `ĤᴴŴ²Ĥ`.
struct DrawForms {
    cross: CMatrix<f64>,
    energy: CMatrix<f64>,
}

fn draw_forms(s: &LadderScenario, thetas: &ThetaSet<f64>, alpha: f64, draw: usize) -> Result<DrawForms> {
    let k = thetas.k();
    let ch = assemble_hop(thetas, &vec![s.tau; k], s.seed, Hop::Sr, draw)?;
    let d = GramFactor::new(&ch.hhat).directions(&ch.hhat, alpha)?;
    Ok(DrawForms {
        cross: cross_gains(&ch.h, &d),
        energy: cmatmul_adj(&d, &d),
    })
}

/// `|A_kk| / max_{j≠k}|A_kj|` for every row.
fn dominance_ratios(a: &CMatrix<f64>) -> Vec<f64> {
    (0..a.nrows())
        .filter_map(|k| {
            let off = (0..a.ncols()).filter(|&j| j != k).map(|j| a[(k, j)].norm()).fold(0.0, f64::max);
            (a.ncols() > 1).then(|| a[(k, k)].norm() / off)
        })
        .collect()
}

fn per_draw<F>(s: &LadderScenario, m: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&DrawForms) -> Vec<f64> + Sync,
{
    s.validate()?;
    let thetas = s.thetas(m)?;
    let alpha = s.alpha(m);
    let per: Vec<Vec<f64>> = (0..s.draws)
        .into_par_iter()
        .map(|d| draw_forms(s, &thetas, alpha, d).map(|forms| f(&forms)))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Median over users and draws of `|h_kᴴŴĥ_k| / max_{k′≠k}|h_kᴴŴĥ_{k′}|`.
pub fn theorem1_dominance(s: &LadderScenario, ladder: &[usize]) -> Result<Vec<GapReport>> {
    validate_ladder(ladder, s.draws)?;
    ladder
        .iter()
        .map(|&m| {
            let r = per_draw(s, m, |f| dominance_ratios(&f.cross))?;
            GapReport::from_samples("theorem1", m, &r, -0.5)
        })
        .collect()
}

/// Same ratio with `ĥ_kᴴŴ²ĥ_{k′}`.
pub fn theorem2_dominance(s: &LadderScenario, ladder: &[usize]) -> Result<Vec<GapReport>> {
    validate_ladder(ladder, s.draws)?;
    ladder
        .iter()
        .map(|&m| {
            let r = per_draw(s, m, |f| dominance_ratios(&f.energy))?;
            GapReport::from_samples("theorem2", m, &r, -0.5)
        })
        .collect()
}

/// Closed-form Γ per user for the scenario at M.
pub fn scenario_gamma(s: &LadderScenario, m: usize) -> Result<Vec<f64>> {
    let thetas = s.thetas(m)?;
    let alpha = s.alpha(m);
    Ok((0..thetas.k())
        .map(|k| crate::deterministic::gamma_closed_form(thetas.user(k).trace, m, alpha, s.tau))
        .collect())
}

/// Median of `|h_kᴴŴĥ_k − Γ_k|` over users and draws at each M.
pub fn prop1_convergence(s: &LadderScenario, ladder: &[usize]) -> Result<Vec<GapReport>> {
    validate_ladder(ladder, s.draws)?;
    ladder
        .iter()
        .map(|&m| {
            let gamma = scenario_gamma(s, m)?;
            let r = per_draw(s, m, |f| (0..gamma.len()).map(|k| (f.cross[(k, k)] - gamma[k]).norm()).collect())?;
            GapReport::from_samples("prop1", m, &r, 0.5)
        })
        .collect()
}

/// Relative gaps of the three quadratic forms against their equivalents:
/// `h_kᴴŴĥ_k`, `ĥ_kᴴŴ²ĥ_k` and `Σ_{j≠k}|h_kᴴŴĥ_j|²`, in that order.
///
/// The first two are sampled per user and draw. The interference sum of
/// one user fluctuates like 1/√K around an unbiased equivalent, so it is
/// sampled as the user average of each draw against the user-averaged
/// equivalent. It is absolute when the equivalent is zero (K = 1).
pub fn eq19_21_gaps(s: &LadderScenario, ladder: &[usize]) -> Result<[Vec<GapReport>; 3]> {
    validate_ladder(ladder, s.draws)?;
    let mut out: [Vec<GapReport>; 3] = Default::default();
    for &m in ladder {
        s.validate()?;
        let thetas = s.thetas(m)?;
        let alpha = s.alpha(m);
        let k = thetas.k();
        let core = std::sync::Arc::new(DeCore::solve(&thetas, alpha)?);
        let state = DeterministicState::new(&thetas, core, &vec![s.tau; k], &vec![1.0; k], 1.0)?;
        let interference_de = (0..k).map(|u| state.upsilon[u] * state.phi[u]).sum::<f64>() / k as f64;
        let per: Vec<[Vec<f64>; 3]> = (0..s.draws)
            .into_par_iter()
            .map(|d| {
                let f = draw_forms(s, &thetas, alpha, d)?;
                let rel = |x: f64, y: f64| if y != 0.0 { (x - y).abs() / y.abs() } else { x.abs() };
                let mut g: [Vec<f64>; 3] = Default::default();
                let mut realized = 0.0;
                for u in 0..k {
                    g[0].push(rel(f.cross[(u, u)].re, state.quad_form[u]));
                    g[1].push(rel(f.energy[(u, u)].re, state.energy[u]));
                    realized += (0..k).filter(|&j| j != u).map(|j| f.cross[(u, j)].norm_sqr()).sum::<f64>();
                }
                g[2].push(rel(realized / k as f64, interference_de));
                Ok(g)
            })
            .collect::<Result<_>>()?;
        for (idx, name) in ["eq19", "eq20", "eq21"].iter().enumerate() {
            let samples: Vec<f64> = per.iter().flat_map(|g| g[idx].iter().copied()).collect();
            out[idx].push(GapReport::from_samples(name, m, &samples, 0.5)?);
        }
    }
    Ok(out)
}

/// Names accepted by [`VerifyOptions::only`].
pub const CHECK_NAMES: [&str; 9] = [
    "lemma1", "lemma2", "lemma3", "lemma4", "lemma5", "theorem1", "theorem2", "prop1", "eq19_21",
];

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub ladder: Vec<usize>,
    pub only: Option<String>,
    /// CSIT error levels τ² for the channel checks.
    pub tau_sq: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            ladder: vec![64, 128, 256],
            only: None,
            tau_sq: vec![0.0, 0.1],
            draws: 200,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub reports: Vec<GapReport>,
}

/// Exact-identity checks on random well-conditioned 32×32 inputs:
/// `U = Y/√N + 3I`, x and c standard complex Gaussian.
fn exact_identity_max_residual(lemma: u8, draws: usize, seed: u64) -> Result<f64> {
    let n = 32;
    let residuals: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream(seed, TAG_EXACT + lemma as u64, n, d);
            let well = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut u = gaussian_matrix(n, n, 1.0 / n as f64, rng);
                for i in 0..n {
                    u[(i, i)].re += 3.0;
                }
                u
            };
            let u = well(&mut rng);
            if lemma == 1 {
                let x = gaussian_matrix(n, 1, 1.0, &mut rng).column(0).into_owned();
                let c: Complex<f64> = gaussian_matrix(1, 1, 1.0, &mut rng)[(0, 0)];
                lemma1_residual(&u, &x, c)
            } else {
                let v = well(&mut rng);
                lemma2_residual(&u, &v)
            }
        })
        .collect::<Result<_>>()?;
    Ok(max(&residuals))
}

fn ladder_summary(reports: &[GapReport]) -> String {
    reports
        .iter()
        .map(|r| format!("M={} median={:.4e}", r.m, r.median))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Runs the named checks and reports pass/fail for each.
pub fn run_suite(opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    validate_ladder(&opts.ladder, opts.draws)?;
    if let Some(name) = &opts.only {
        if !CHECK_NAMES.contains(&name.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "unknown check {name}; expected one of {}",
                CHECK_NAMES.join(", ")
            )));
        }
    }
    if opts.tau_sq.is_empty() || opts.tau_sq.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidConfig(format!("tau_sq values {:?} must lie in [0, 1]", opts.tau_sq)));
    }
    let selected = |n: &str| opts.only.as_deref().is_none_or(|o| o == n);
    let ladder = &opts.ladder;
    let mut out = Vec::new();

    for (lemma, name) in [(1u8, "lemma1"), (2, "lemma2")] {
        if selected(name) {
            let r = exact_identity_max_residual(lemma, 50, opts.seed)?;
            out.push(CheckOutcome {
                name: name.into(),
                passed: r < 1e-10,
                detail: format!("max relative residual {r:.3e} over 50 draws (bound 1e-10)"),
                reports: Vec::new(),
            });
        }
    }
    let statistical: [(&str, fn(&VerifyOptions) -> Result<Vec<GapReport>>); 3] = [
        ("lemma3", |o| lemma3_trace_gap(MatrixSeries::Resolvent, &o.ladder, o.draws, o.seed)),
        ("lemma4", |o| lemma4_orthogonality_gap(MatrixSeries::Resolvent, &o.ladder, o.draws, o.seed)),
        ("lemma5", |o| lemma5_rank_one_gap(RankOneVector::Gaussian, &o.ladder, o.draws, o.seed)),
    ];
    for (name, f) in statistical {
        if selected(name) {
            let reports = f(opts)?;
            out.push(CheckOutcome {
                name: name.into(),
                passed: strictly_decreasing(&reports),
                detail: format!("medians must strictly decrease: {}", ladder_summary(&reports)),
                reports,
            });
        }
    }
    for name in ["theorem1", "theorem2"] {
        if selected(name) {
            let mut passed = true;
            let mut reports = Vec::new();
            let mut detail = Vec::new();
            for &t2 in &opts.tau_sq {
                let s = LadderScenario::new(false, t2.sqrt(), opts.draws.min(100), opts.seed);
                let r = if name == "theorem1" { theorem1_dominance(&s, ladder)? } else { theorem2_dominance(&s, ladder)? };
                passed &= strictly_increasing(&r);
                detail.push(format!("tau^2={t2}: {}", ladder_summary(&r)));
                reports.extend(r);
            }
            out.push(CheckOutcome {
                name: name.into(),
                passed,
                detail: format!("ratio medians must strictly increase; {}", detail.join("; ")),
                reports,
            });
        }
    }
    let tau = opts.tau_sq.iter().copied().fold(0.0, f64::max).sqrt();
    if selected("prop1") {
        let s = LadderScenario::new(false, tau, opts.draws.min(100), opts.seed);
        let reports = prop1_convergence(&s, ladder)?;
        let top = *ladder.last().expect("validated ladder");
        let gamma = median(&scenario_gamma(&s, top)?);
        let last = reports.last().expect("nonempty ladder").median;
        let passed = strictly_decreasing(&reports) && last < 0.05 * gamma;
        out.push(CheckOutcome {
            name: "prop1".into(),
            passed,
            detail: format!(
                "medians must strictly decrease and end below 0.05·Γ = {:.4e}: {}",
                0.05 * gamma,
                ladder_summary(&reports)
            ),
            reports,
        });
    }
    if selected("eq19_21") {
        let s = LadderScenario::new(false, tau, opts.draws.min(100), opts.seed);
        let [a, b, c] = eq19_21_gaps(&s, ladder)?;
        let passed = strictly_decreasing(&a) && strictly_decreasing(&b) && strictly_decreasing(&c);
        let detail = format!(
            "relative gap medians must strictly decrease; signal: {}; energy: {}; interference: {}",
            ladder_summary(&a),
            ladder_summary(&b),
            ladder_summary(&c)
        );
        out.push(CheckOutcome {
            name: "eq19_21".into(),
            passed,
            detail,
            reports: a.into_iter().chain(b).chain(c).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn lemma1_zero_coefficient_is_exact() {
        let u = CMatrix::<f64>::identity(8, 8);
        let x = gaussian_matrix(8, 1, 1.0, &mut rng(1)).column(0).into_owned();
        assert_eq!(lemma1_residual(&u, &x, Complex::new(0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn lemma1_unit_vector_by_hand() {
        // (I + e₁e₁ᵀ)⁻¹ = diag(½, 1, …), so e₁ᵀ(·) = e₁ᵀ/2 on both sides.
        let u = CMatrix::<f64>::identity(5, 5);
        let mut x = CVector::zeros(5);
        x[0] = Complex::new(1.0, 0.0);
        let lhs = x.adjoint() * general_inverse(&(&u + &x * x.adjoint())).unwrap();
        assert!((lhs[(0, 0)] - Complex::new(0.5, 0.0)).norm() < 1e-15);
        assert!(lemma1_residual(&u, &x, Complex::new(1.0, 0.0)).unwrap() < 1e-14);
    }

    #[test]
    fn lemma1_random_well_conditioned() {
        assert!(exact_identity_max_residual(1, 20, 5).unwrap() < 1e-10);
    }

    #[test]
    fn lemma2_cases() {
        let mut r = rng(2);
        let u = gaussian_matrix(32, 32, 1.0 / 32.0, &mut r) + CMatrix::identity(32, 32) * Complex::from(3.0);
        assert_eq!(lemma2_residual(&u, &u).unwrap(), 0.0);
        // Diagonal pair: U = diag(2), V = diag(4): ½ − ¼ + ½·(−2)·¼ = 0.
        let d2 = CMatrix::<f64>::identity(3, 3) * Complex::from(2.0);
        let d4 = CMatrix::<f64>::identity(3, 3) * Complex::from(4.0);
        assert!(lemma2_residual(&d2, &d4).unwrap() < 1e-16);
        assert!(exact_identity_max_residual(2, 20, 6).unwrap() < 1e-10);
    }

    #[test]
    fn singular_input_is_a_numeric_error() {
        let z = CMatrix::<f64>::zeros(4, 4);
        assert!(matches!(lemma2_residual(&z, &z), Err(Error::Factorization(_))));
    }

    #[test]
    fn lemma3_identity_concentration() {
        // xᴴx is Gamma(N, 1/N): median |xᴴx − 1| ≈ 0.674/√N.
        let r = lemma3_trace_gap(MatrixSeries::Identity, &[64, 1024], 400, 1).unwrap();
        assert!(r[0].median < 0.2);
        assert!(r[1].median < r[0].median);
        let oracle = 0.6745 / 1024f64.sqrt();
        assert!(r[1].median > 0.7 * oracle && r[1].median < 1.3 * oracle, "{}", r[1].median);
    }

    #[test]
    fn zero_series_has_zero_gaps() {
        let r = lemma3_trace_gap(MatrixSeries::Zero, &[16, 32], 10, 1).unwrap();
        assert!(r.iter().all(|g| g.max == 0.0));
        let r = lemma4_orthogonality_gap(MatrixSeries::Zero, &[16], 10, 1).unwrap();
        assert_eq!(r[0].max, 0.0);
        let r = lemma5_rank_one_gap(RankOneVector::Zero, &[16], 5, 1).unwrap();
        assert!(r[0].max < 1e-15);
    }

    #[test]
    fn lemma4_identity_matches_rayleigh_median() {
        // yᴴx is CN(0, 1/N), so |yᴴx| has median √(ln2/N).
        let r = lemma4_orthogonality_gap(MatrixSeries::Identity, &[256], 800, 3).unwrap();
        let oracle = (std::f64::consts::LN_2 / 256.0).sqrt();
        assert!((r[0].median / oracle - 1.0).abs() < 0.15, "{}", r[0].median);
    }

    #[test]
    fn lemma5_gap_is_bounded_by_weight_over_n() {
        // |tr A(B⁻¹ − (B + vvᴴ)⁻¹)| ≤ ‖A‖·λ_min(B)⁻¹ with ‖A‖ ≤ 1.5, λ_min ≥ 1.
        let r = lemma5_rank_one_gap(RankOneVector::Gaussian, &[32, 64, 128], 40, 4).unwrap();
        for g in &r {
            assert!(g.max <= 1.5 / g.m as f64);
        }
        assert!(strictly_decreasing(&r));
    }

    #[test]
    fn resolvent_series_gaps_decay() {
        let r = lemma3_trace_gap(MatrixSeries::Resolvent, &[32, 128], 100, 9).unwrap();
        assert!(strictly_decreasing(&r));
        let r = lemma4_orthogonality_gap(MatrixSeries::Resolvent, &[32, 128], 100, 9).unwrap();
        assert!(strictly_decreasing(&r));
    }

    #[test]
    fn dominance_direction_and_growth() {
        let s = LadderScenario::new(false, 0.1f64.sqrt(), 40, 7);
        let r = theorem1_dominance(&s, &[64, 256]).unwrap();
        assert!(r[0].median > 1.0);
        assert!(r[1].median > r[0].median);
        let r2 = theorem2_dominance(&s, &[64, 256]).unwrap();
        assert!(r2[0].median > 1.0 && r2[1].median > r2[0].median);
    }

    #[test]
    fn decorrelated_estimate_loses_dominance() {
        let s = LadderScenario::new(false, 1.0, 40, 7);
        let r = theorem1_dominance(&s, &[128]).unwrap();
        assert!(r[0].median < 1.5, "{}", r[0].median);
    }

    #[test]
    fn prop1_ladder() {
        let s = LadderScenario::new(false, 0.1f64.sqrt(), 60, 11);
        let r = prop1_convergence(&s, &[64, 128, 256]).unwrap();
        assert!(strictly_decreasing(&r));
        let gamma = scenario_gamma(&s, 256).unwrap()[0];
        assert!(r[2].median < 0.05 * gamma);
        // Γ = 0 when τ = 1; the gap is the raw quadratic form.
        let s1 = LadderScenario::new(false, 1.0, 20, 11);
        assert_eq!(scenario_gamma(&s1, 64).unwrap()[0], 0.0);
        assert!(prop1_convergence(&s1, &[256]).unwrap()[0].median < 0.2);
    }

    #[test]
    fn quadratic_forms_near_equivalents_with_perfect_csit() {
        let s = LadderScenario::new(false, 0.0, 40, 13);
        let [a, b, c] = eq19_21_gaps(&s, &[256]).unwrap();
        assert!(a[0].median < 0.1, "{}", a[0].median);
        assert!(b[0].median < 0.1, "{}", b[0].median);
        assert!(c[0].median < 0.1, "{}", c[0].median);
    }

    #[test]
    fn single_user_has_no_interference() {
        let mut s = LadderScenario::new(false, 0.3, 10, 13);
        s.users_divisor = 64;
        let [_, _, c] = eq19_21_gaps(&s, &[64]).unwrap();
        assert_eq!(c[0].max, 0.0);
    }

    #[test]
    fn bad_ladders_and_names_are_config_errors() {
        assert!(validate_ladder(&[128, 64], 10).is_err());
        assert!(validate_ladder(&[], 10).is_err());
        let opts = VerifyOptions {
            only: Some("lemma9".into()),
            ..Default::default()
        };
        assert!(matches!(run_suite(&opts), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn only_filter_runs_one_check() {
        let opts = VerifyOptions {
            only: Some("lemma1".into()),
            ..Default::default()
        };
        let out = run_suite(&opts).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].passed);
    }

    #[test]
    fn decorrelated_csit_fails_prop1_by_name() {
        let opts = VerifyOptions {
            only: Some("prop1".into()),
            tau_sq: vec![1.0],
            draws: 20,
            ..Default::default()
        };
        let out = run_suite(&opts).unwrap();
        assert_eq!(out[0].name, "prop1");
        assert!(!out[0].passed);
    }

    #[test]
    fn gap_csv_layout() {
        let r = GapReport::from_samples("x", 4, &[1.0, 3.0, 2.0], 0.5).unwrap();
        let csv = gap_reports_csv(&[r]);
        assert_eq!(csv, "name,m,samples,median,max,exponent\nx,4,3,2.0,3.0,0.5\n");
        assert!(GapReport::from_samples("x", 4, &[], 0.5).is_err());
    }
}
