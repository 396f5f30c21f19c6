//! Realized per-user SINRs, half-duplex rates and the Monte-Carlo loop.
//!
//! Every SINR is evaluated from the unscaled cross gains
//! `C[k, j] = h_kᴴ Ŵ ĥ_j` of a hop together with the hop's ξ², path gain
//! and per-stream powers. Rates stay in nats here.

use num_complex::Complex;
use rayon::prelude::*;

use crate::channel::{assemble_hop, Hop, HopChannels};
use crate::config::{AfTerms, Averaging, LinkBudget, PrecoderRoute, SystemConfig};
use crate::correlation::{theta_sets_for, ThetaSet};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::precoder::{
    cross_gains, power_residual, relay_signal_power, rzf_matrix, xi_af_empirical, xi_bs_empirical,
    xi_df_empirical, GramFactor,
};
use crate::real::{lit, to_f64, Real};
use crate::stats::{self, CompensatedSum};

/// One hop as seen by the SINR formulas.
#[derive(Debug, Clone, Copy)]
pub struct HopGains<'a, T: Real> {
    /// `C[k, j] = h_kᴴ Ŵ ĥ_j`.
    pub cross: &'a CMatrix<T>,
    pub xi_sq: T,
    /// Large-scale gain `G/r^α` of the hop.
    pub gain: T,
    /// Per-stream transmit powers.
    pub powers: &'a [T],
}

impl<T: Real> HopGains<'_, T> {
    /// `(G p_j/r^α) ξ² |h_kᴴ Ŵ ĥ_j|²`.
    fn received(&self, k: usize, j: usize) -> T {
        self.gain * self.powers[j] * self.xi_sq * self.cross[(k, j)].norm_sqr()
    }

    /// Complex amplitude `√(G p_j/r^α) ξ h_kᴴ Ŵ ĥ_j`.
    fn amplitude(&self, k: usize, j: usize) -> Complex<T> {
        self.cross[(k, j)] * (self.gain * self.powers[j] * self.xi_sq).sqrt()
    }

    fn users(&self) -> usize {
        self.cross.nrows()
    }
}

/// Single-hop SINR at receive node k: the relay antenna k for the BS hop,
/// user k for the DF relay hop.
pub fn relay_sinr<T: Real>(k: usize, hop: HopGains<'_, T>, n0: T) -> T {
    let interference = (0..hop.users())
        .filter(|&j| j != k)
        .fold(T::zero(), |acc, j| acc + hop.received(k, j));
    hop.received(k, k) / (interference + n0)
}

/// End-to-end AF SINR of user k on the realized channels.
///
/// The composite gain is `E = A·B` with `A[k, m] = √(G p_{r,m}/r_rd^α) ξ_AF
/// h_{rd,k}ᴴ Ŵ₂ ĥ_{rd,m}` and `B[m, n] = √(G p_{s,n}/r_sr^α) ξ₁ h_{sr,m}ᴴ Ŵ₁
/// ĥ_{sr,n}`. With [`AfTerms::Independent`] the interfering symbols and the
/// relay noises add in power; [`AfTerms::Literal`] adds their amplitudes
/// before squaring.
pub fn af_sinr<T: Real>(
    k: usize,
    sr: HopGains<'_, T>,
    rd: HopGains<'_, T>,
    n0: T,
    terms: AfTerms,
) -> T {
    let n = sr.users();
    let a: Vec<Complex<T>> = (0..n).map(|m| rd.amplitude(k, m)).collect();
    let e: Vec<Complex<T>> = (0..n)
        .map(|col| {
            a.iter()
                .enumerate()
                .fold(Complex::new(T::zero(), T::zero()), |acc, (m, am)| {
                    acc + *am * sr.amplitude(m, col)
                })
        })
        .collect();
    let signal = e[k].norm_sqr();
    let (interference, noise_gain) = match terms {
        AfTerms::Independent => (
            e.iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .fold(T::zero(), |acc, (_, x)| acc + x.norm_sqr()),
            a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()),
        ),
        AfTerms::Literal => (
            e.iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (_, x)| acc + *x)
                .norm_sqr(),
            a.iter()
                .fold(Complex::new(T::zero(), T::zero()), |acc, x| acc + *x)
                .norm_sqr(),
        ),
    };
    signal / (interference + noise_gain * n0 + n0)
}

/// Large-M form of the AF SINR, keeping only the `m = k` relay path for the
/// desired symbol and the relay noise.
pub fn af_sinr_asymptotic<T: Real>(
    k: usize,
    sr: HopGains<'_, T>,
    rd: HopGains<'_, T>,
    n0: T,
    terms: AfTerms,
) -> T {
    let n = sr.users();
    let rd_kk = rd.received(k, k);
    let first_hop_interference = (0..n)
        .filter(|&j| j != k)
        .fold(T::zero(), |acc, j| acc + sr.received(k, j));
    let paths = (0..n)
        .filter(|&j| j != k)
        .map(|j| rd.amplitude(k, j) * sr.amplitude(j, j));
    let second_hop_interference = match terms {
        AfTerms::Independent => paths.fold(T::zero(), |acc, x| acc + x.norm_sqr()),
        AfTerms::Literal => paths
            .fold(Complex::new(T::zero(), T::zero()), |acc, x| acc + x)
            .norm_sqr(),
    };
    rd_kk * sr.received(k, k)
        / (rd_kk * first_hop_interference + second_hop_interference + rd_kk * n0 + n0)
}

/// DF SINR: the weaker of the two hops.
pub fn df_sinr<T: Real>(k: usize, sr: HopGains<'_, T>, rd: HopGains<'_, T>, n0: T) -> T {
    relay_sinr(k, sr, n0).min(relay_sinr(k, rd, n0))
}

/// `½ ln(1 + γ)` in nats per channel use.
pub fn half_duplex_rate<T: Real>(gamma: T) -> T {
    lit::<T>(0.5) * gamma.ln_1p()
}

/// All three SINRs of every user for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrSample {
    pub gamma_sr: Vec<f64>,
    pub gamma_af: Vec<f64>,
    pub gamma_df: Vec<f64>,
}

/// Precoder scalings and constraint violations of one realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRecord {
    pub xi1_sq: f64,
    pub xi_af_sq: f64,
    pub xi_df_sq: f64,
    /// Relative violations of the BS, AF relay and DF relay power budgets.
    pub residual_bs: f64,
    pub residual_af: f64,
    pub residual_df: f64,
}

/// Everything the sweep keeps from one realization at one power point.
#[derive(Debug, Clone)]
pub struct PointSample {
    pub sinr: SinrSample,
    pub scaling: ScalingRecord,
    /// `Re h_{sr,k}ᴴ Ŵ₁ ĥ_{sr,k}` per user.
    pub quad_form_sr: Vec<f64>,
}

/// Monte-Carlo averages at one power point.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub p_dbm: f64,
    pub trials: usize,
    /// Mean per-user rates, nats.
    pub user_rate_af: Vec<f64>,
    pub user_rate_df: Vec<f64>,
    pub sum_rate_af: f64,
    pub sum_rate_df: f64,
    /// Standard errors of the per-trial sum rates.
    pub stderr_af: f64,
    pub stderr_df: f64,
    pub mean_xi1_sq: f64,
    pub mean_xi_af_sq: f64,
    pub mean_xi_df_sq: f64,
    /// Worst power-constraint violation over all trials.
    pub max_power_residual: f64,
    /// Mean of `Re h_{sr,k}ᴴ Ŵ₁ ĥ_{sr,k}` over users and trials.
    pub mean_quad_form_sr: f64,
}

/// How trial indices map onto random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrialSeeding {
    /// Trial t draws from stream t.
    #[default]
    PerTrial,
    /// Every trial reuses the given stream.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub seeding: TrialSeeding,
}

/// Per-power-point quantities in working precision.
struct PointBudget<T: Real> {
    p: T,
    n0: T,
    gain_sr: T,
    gain_rd: T,
    alpha1: T,
    alpha2: T,
    p_s: Vec<T>,
    p_r: Vec<T>,
}

impl<T: Real> PointBudget<T> {
    fn new(b: &LinkBudget) -> Self {
        Self {
            p: lit(b.p_watts),
            n0: lit(b.noise_watts),
            gain_sr: lit(b.gain_sr),
            gain_rd: lit(b.gain_rd),
            alpha1: lit(b.alpha1),
            alpha2: lit(b.alpha2),
            p_s: b.p_source.iter().map(|&x| lit(x)).collect(),
            p_r: b.p_relay.iter().map(|&x| lit(x)).collect(),
        }
    }
}

fn directions<T: Real>(
    hop: &HopChannels<T>,
    gram: &GramFactor<T>,
    alpha: T,
    route: PrecoderRoute,
) -> Result<CMatrix<T>> {
    match route {
        PrecoderRoute::Woodbury => gram.directions(&hop.hhat, alpha),
        PrecoderRoute::Direct => Ok(crate::linalg::cmatmul(&rzf_matrix(&hop.hhat, alpha)?, &hop.hhat)),
    }
}

/// Evaluates one realization at one power point.
fn evaluate_point<T: Real>(
    sr: &HopChannels<T>,
    rd: &HopChannels<T>,
    grams: (&GramFactor<T>, &GramFactor<T>),
    b: &PointBudget<T>,
    cfg: &SystemConfig,
) -> Result<PointSample> {
    let d_sr = directions(sr, grams.0, b.alpha1, cfg.precoder_route)?;
    let d_rd = directions(rd, grams.1, b.alpha2, cfg.precoder_route)?;
    let c_sr = cross_gains(&sr.h, &d_sr);
    let c_rd = cross_gains(&rd.h, &d_rd);

    let xi1 = xi_bs_empirical(&d_sr, &b.p_s, b.p)?;
    let xi_df = xi_df_empirical(&d_rd, &b.p_r, b.p)?;
    let s = relay_signal_power(&c_sr, xi1, b.gain_sr, &b.p_s);
    let xi_af = xi_af_empirical(&d_rd, &b.p_r, &s, b.n0, b.p)?;
    let af_loads: Vec<T> = b.p_r.iter().zip(&s).map(|(&p, &sm)| p * (sm + b.n0)).collect();

    let hop_sr = HopGains {
        cross: &c_sr,
        xi_sq: xi1,
        gain: b.gain_sr,
        powers: &b.p_s,
    };
    let hop_af = HopGains {
        cross: &c_rd,
        xi_sq: xi_af,
        gain: b.gain_rd,
        powers: &b.p_r,
    };
    let hop_df = HopGains { xi_sq: xi_df, ..hop_af };
    let k = sr.k();
    let mut sinr = SinrSample {
        gamma_sr: Vec::with_capacity(k),
        gamma_af: Vec::with_capacity(k),
        gamma_df: Vec::with_capacity(k),
    };
    for user in 0..k {
        let g_sr = relay_sinr(user, hop_sr, b.n0);
        let g_rd = relay_sinr(user, hop_df, b.n0);
        sinr.gamma_sr.push(to_f64(g_sr));
        sinr.gamma_af.push(to_f64(af_sinr(user, hop_sr, hop_af, b.n0, cfg.af_terms)));
        sinr.gamma_df.push(to_f64(g_sr.min(g_rd)));
    }
    let scaling = ScalingRecord {
        xi1_sq: to_f64(xi1),
        xi_af_sq: to_f64(xi_af),
        xi_df_sq: to_f64(xi_df),
        residual_bs: to_f64(power_residual(&d_sr, &b.p_s, xi1, b.p)),
        residual_af: to_f64(power_residual(&d_rd, &af_loads, xi_af, b.p)),
        residual_df: to_f64(power_residual(&d_rd, &b.p_r, xi_df, b.p)),
    };
    let quad_form_sr = (0..k).map(|user| to_f64(c_sr[(user, user)].re)).collect();
    Ok(PointSample {
        sinr,
        scaling,
        quad_form_sr,
    })
}

/// Draws both hops of one trial and evaluates every power point on them.
pub fn run_trial<T: Real>(
    cfg: &SystemConfig,
    thetas: (&ThetaSet<T>, &ThetaSet<T>),
    budgets: &[LinkBudget],
    stream: usize,
) -> Result<Vec<PointSample>> {
    let tau_sr: Vec<T> = cfg.tau_sr_vec().into_iter().map(lit).collect();
    let tau_rd: Vec<T> = cfg.tau_rd_vec().into_iter().map(lit).collect();
    let sr = assemble_hop(thetas.0, &tau_sr, cfg.seed, Hop::Sr, stream)?;
    let rd = assemble_hop(thetas.1, &tau_rd, cfg.seed, Hop::Rd, stream)?;
    let g_sr = GramFactor::new(&sr.hhat);
    let g_rd = GramFactor::new(&rd.hhat);
    budgets
        .iter()
        .map(|b| evaluate_point(&sr, &rd, (&g_sr, &g_rd), &PointBudget::new(b), cfg))
        .collect()
}

/// Link budgets of every grid point, in grid order.
pub fn budgets_for(cfg: &SystemConfig, grid_dbm: &[f64]) -> Result<Vec<LinkBudget>> {
    grid_dbm
        .iter()
        .map(|&p| {
            cfg.with_power_dbm(p).link_budget().map_err(|e| Error::PowerPoint {
                p_dbm: p,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Monte-Carlo sweep with correlation matrices built from the config.
pub fn monte_carlo_sweep(cfg: &SystemConfig, grid_dbm: &[f64]) -> Result<Vec<RateReport>> {
    let (sr, rd) = theta_sets_for::<f64>(cfg, None)?;
    monte_carlo_sweep_with(cfg, grid_dbm, (&sr, &rd), SweepOptions::default())
}

/// Monte-Carlo sweep over `grid_dbm`. Trials run in parallel; the reduction
/// walks them in trial order so results do not depend on the thread count.
pub fn monte_carlo_sweep_with<T: Real>(
    cfg: &SystemConfig,
    grid_dbm: &[f64],
    thetas: (&ThetaSet<T>, &ThetaSet<T>),
    opts: SweepOptions,
) -> Result<Vec<RateReport>> {
    cfg.validate()?;
    if cfg.trials < 2 {
        return Err(Error::InvalidConfig(format!(
            "trials ≥ 2 violated: {}",
            cfg.trials
        )));
    }
    let budgets = budgets_for(cfg, grid_dbm)?;
    let trials: Vec<Vec<PointSample>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let stream = match opts.seeding {
                TrialSeeding::PerTrial => t,
                TrialSeeding::Fixed(s) => s,
            };
            run_trial(cfg, thetas, &budgets, stream).map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(grid_dbm
        .iter()
        .enumerate()
        .map(|(i, &p_dbm)| {
            let samples: Vec<&PointSample> = trials.iter().map(|t| &t[i]).collect();
            reduce_point(p_dbm, &samples, cfg.k, cfg.averaging)
        })
        .collect())
}

fn reduce_point(p_dbm: f64, samples: &[&PointSample], k: usize, averaging: Averaging) -> RateReport {
    let n = samples.len();
    let rate = |g: f64| 0.5 * g.ln_1p();
    let sum_samples = |pick: fn(&SinrSample) -> &Vec<f64>| -> Vec<f64> {
        samples
            .iter()
            .map(|s| pick(&s.sinr).iter().map(|&g| rate(g)).collect::<CompensatedSum>().value())
            .collect()
    };
    let per_user = |pick: fn(&SinrSample) -> &Vec<f64>| -> Vec<f64> {
        (0..k)
            .map(|u| {
                let column = samples.iter().map(|s| pick(&s.sinr)[u]);
                match averaging {
                    Averaging::Rate => column.map(rate).collect::<CompensatedSum>().value() / n as f64,
                    Averaging::Sinr => rate(column.collect::<CompensatedSum>().value() / n as f64),
                }
            })
            .collect()
    };
    let af_sums = sum_samples(|s| &s.gamma_af);
    let df_sums = sum_samples(|s| &s.gamma_df);
    let user_rate_af = per_user(|s| &s.gamma_af);
    let user_rate_df = per_user(|s| &s.gamma_df);
    let mean_of = |f: fn(&ScalingRecord) -> f64| {
        stats::mean(&samples.iter().map(|s| f(&s.scaling)).collect::<Vec<_>>())
    };
    let max_power_residual = samples
        .iter()
        .map(|s| s.scaling.residual_bs.max(s.scaling.residual_af).max(s.scaling.residual_df))
        .fold(0.0, f64::max);
    let quad: Vec<f64> = samples.iter().flat_map(|s| s.quad_form_sr.iter().copied()).collect();
    RateReport {
        p_dbm,
        trials: n,
        sum_rate_af: user_rate_af.iter().copied().collect::<CompensatedSum>().value(),
        sum_rate_df: user_rate_df.iter().copied().collect::<CompensatedSum>().value(),
        user_rate_af,
        user_rate_df,
        stderr_af: stats::standard_error(&af_sums),
        stderr_df: stats::standard_error(&df_sums),
        mean_xi1_sq: mean_of(|r| r.xi1_sq),
        mean_xi_af_sq: mean_of(|r| r.xi_af_sq),
        mean_xi_df_sq: mean_of(|r| r.xi_df_sq),
        max_power_residual,
        mean_quad_form_sr: stats::mean(&quad),
    }
}
