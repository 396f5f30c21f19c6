//! Deterministic equivalents of the per-user SINRs.
//!
//! Everything here depends on the correlation matrices only. Users sharing
//! a correlation matrix share `m°`, so the fixed point and the second-order
//! traces are computed once per distinct matrix and expanded to users
//! afterwards.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::LinkBudget;
use crate::correlation::ThetaSet;
use crate::error::{Error, Result};
use crate::linalg::{cmatmul, hpd_inverse, trace_of_product, CMatrix};
use crate::real::{from_usize, lit, to_f64, Real};

/// Relative fixed-point tolerance.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const FIXED_POINT_MAX_ITER: usize = 500;
const DAMPED_ITERATIONS: usize = 10;
const DAMPING: f64 = 0.5;

/// The matrix `T` of the fixed point.
#[derive(Debug, Clone)]
pub enum Resolvent<T: Real> {
    /// `T = t·I`, reached when every correlation matrix is the identity.
    Scalar(T),
    Dense(CMatrix<T>),
}

/// Converged first-order solution `m°`, `T`.
#[derive(Debug, Clone)]
pub struct FixedPoint<T: Real> {
    /// `m°` per distinct correlation matrix.
    pub m_unique: Vec<T>,
    /// `m°_k` per user.
    pub m_o: Vec<T>,
    pub t: Resolvent<T>,
    pub iterations: usize,
    /// `max_u |m_u − (1/M)tr(Θ_u T)| / m_u` at the returned point.
    pub residual: T,
}

/// `(1/M)tr(Θ_u T)` for every distinct Θ, with T built from `m`.
fn picard_map<T: Real>(thetas: &ThetaSet<T>, counts: &[usize], m: &[T], alpha: T) -> Result<(Vec<T>, Resolvent<T>)> {
    let mm = from_usize::<T>(thetas.m());
    let weights: Vec<T> = counts
        .iter()
        .zip(m)
        .map(|(&n, &mu)| from_usize::<T>(n) / (mm * (T::one() + mu)))
        .collect();
    if thetas.all_identity() {
        let s = weights.iter().fold(alpha, |acc, &w| acc + w);
        let t = T::one() / s;
        return Ok((vec![t; m.len()], Resolvent::Scalar(t)));
    }
    let dim = thetas.m();
    let mut s = CMatrix::<T>::zeros(dim, dim);
    for (theta, &w) in thetas.unique.iter().zip(&weights) {
        if theta.identity {
            for i in 0..dim {
                s[(i, i)].re += w;
            }
        } else {
            s.zip_apply(&theta.theta, |a, b| *a += b * w);
        }
    }
    for i in 0..dim {
        s[(i, i)].re += alpha;
    }
    let t = hpd_inverse(&s)?;
    let f = thetas
        .unique
        .par_iter()
        .map(|theta| {
            let tr = if theta.identity {
                (0..dim).fold(T::zero(), |acc, i| acc + t[(i, i)].re)
            } else {
                trace_of_product(&theta.theta, &t).re
            };
            tr / mm
        })
        .collect();
    Ok((f, Resolvent::Dense(t)))
}

/// Damped Picard iteration for `m°_k = (1/M)tr(Θ_k T)`,
/// `T = ((1/M)Σ_j Θ_j/(1 + m°_j) + αI)⁻¹`, started from `1/α`.
pub fn solve_m_o<T: Real>(thetas: &ThetaSet<T>, alpha: T, tol: T, max_iter: usize) -> Result<FixedPoint<T>> {
    if !(alpha > T::zero()) || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!("alpha > 0 violated: {alpha:e}")));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidConfig("tol > 0 violated".into()));
    }
    let counts: Vec<usize> = thetas.groups().iter().map(Vec::len).collect();
    let mut m = vec![T::one() / alpha; thetas.unique.len()];
    let mut residual = lit::<T>(f64::INFINITY);
    for iteration in 0..max_iter {
        let (f, t) = picard_map(thetas, &counts, &m, alpha)?;
        residual = m
            .iter()
            .zip(&f)
            .fold(T::zero(), |acc, (&a, &b)| acc.max(((a - b) / a).abs()));
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            let m_o = thetas.user_index.iter().map(|&u| m[u]).collect();
            return Ok(FixedPoint {
                m_unique: m,
                m_o,
                t,
                iterations: iteration,
                residual,
            });
        }
        let w = if iteration < DAMPED_ITERATIONS { lit::<T>(DAMPING) } else { T::one() };
        for (mu, fu) in m.iter_mut().zip(&f) {
            *mu += w * (*fu - *mu);
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: to_f64(residual),
    })
}

/// Solutions of `(I − J)m′ = v` and `(I − J)m′_k = v_k`.
#[derive(Debug, Clone)]
pub struct SecondOrder<T: Real> {
    pub m_prime: Vec<T>,
    /// Column k is `m′_k`; entry `(j, k)` is `m′_{j,k}`.
    pub m_prime_k: DMatrix<T>,
    pub j: DMatrix<T>,
    pub v: Vec<T>,
    /// Spectral radius of J.
    pub spectral_radius: T,
}

/// Builds J, v and v_k from the converged `T` and solves both systems.
pub fn solve_m_prime<T: Real>(thetas: &ThetaSet<T>, fp: &FixedPoint<T>) -> Result<SecondOrder<T>> {
    let mm = from_usize::<T>(thetas.m());
    let u = thetas.unique.len();
    // g[(a, b)] = (1/M)tr(Θ_a T Θ_b T), vu[a] = (1/M)tr(Θ_a T²).
    let (g, vu) = match &fp.t {
        Resolvent::Scalar(t) => {
            let t2 = *t * *t;
            (DMatrix::from_element(u, u, t2), vec![t2; u])
        }
        Resolvent::Dense(t) => {
            // With Y_a = TΘ_aT: tr(Θ_aTΘ_bT) = tr(Y_aΘ_b) and tr(Θ_aT²) = tr(Y_a).
            // One Y is alive per worker, so memory stays O(M²).
            let rows: Vec<(Vec<T>, T)> = thetas
                .unique
                .par_iter()
                .map(|theta_a| {
                    let y = if theta_a.identity {
                        cmatmul(t, t)
                    } else {
                        cmatmul(&cmatmul(t, &theta_a.theta), t)
                    };
                    let tr_y = (0..y.nrows()).fold(T::zero(), |acc, i| acc + y[(i, i)].re);
                    let row = thetas
                        .unique
                        .iter()
                        .map(|theta_b| {
                            let tr = if theta_b.identity { tr_y } else { trace_of_product(&y, &theta_b.theta).re };
                            tr / mm
                        })
                        .collect();
                    (row, tr_y / mm)
                })
                .collect();
            let g = DMatrix::from_fn(u, u, |a, b| (rows[a].0[b] + rows[b].0[a]) * lit::<T>(0.5));
            let vu = rows.iter().map(|r| r.1).collect();
            (g, vu)
        }
    };
    let users = &thetas.user_index;
    let k = users.len();
    let denom = |j: usize| mm * (T::one() + fp.m_o[j]) * (T::one() + fp.m_o[j]);
    let j_mat = DMatrix::from_fn(k, k, |i, j| g[(users[i], users[j])] / denom(j));
    let v = DVector::from_fn(k, |i, _| vu[users[i]]);
    let v_k = DMatrix::from_fn(k, k, |i, col| g[(users[i], users[col])]);

    let a = DMatrix::<T>::identity(k, k) - &j_mat;
    let lu = a.lu();
    let breakdown = || Error::AnalyticBreakdown("I − J is singular to working precision".into());
    let u_diag = lu.u().diagonal();
    let (lo, hi) = u_diag
        .iter()
        .fold((lit::<T>(f64::INFINITY), T::zero()), |(lo, hi), x| (lo.min(x.abs()), hi.max(x.abs())));
    if k > 0 && !(lo > hi * from_usize::<T>(k) * <T as Real>::epsilon()) {
        return Err(breakdown());
    }
    let m_prime = lu.solve(&v).ok_or_else(breakdown)?;
    let m_prime_k = lu.solve(&v_k).ok_or_else(breakdown)?;
    if m_prime.iter().chain(m_prime_k.iter()).any(|x| !x.is_finite()) {
        return Err(breakdown());
    }

    // J = G̃D with G̃ symmetric and D diagonal positive: same spectrum as
    // D^{1/2} G̃ D^{1/2}.
    let sym = DMatrix::from_fn(k, k, |i, j| {
        g[(users[i], users[j])] / (denom(i).sqrt() * denom(j).sqrt())
    });
    let spectral_radius = sym
        .symmetric_eigenvalues()
        .iter()
        .fold(T::zero(), |acc, x| acc.max(x.abs()));

    Ok(SecondOrder {
        m_prime: m_prime.iter().copied().collect(),
        m_prime_k,
        j: j_mat,
        v: v.iter().copied().collect(),
        spectral_radius,
    })
}

/// `Υ°_k = (1/M)Σ_{j≠k} m′_{j,k}/(1 + m°_j)²`.
pub fn upsilon_k<T: Real>(m_prime_k: &DMatrix<T>, m_o: &[T], k: usize, m: usize) -> T {
    let sum = (0..m_o.len()).filter(|&j| j != k).fold(T::zero(), |acc, j| {
        let d = T::one() + m_o[j];
        acc + m_prime_k[(j, k)] / (d * d)
    });
    sum / from_usize::<T>(m)
}

/// `Φ_k = (1 − τ²(1 − (1 + m°)²))/(1 + m°)²`, evaluated as
/// `τ² + (1 − τ²)/(1 + m°)²` to avoid cancellation at large `m°`.
pub fn phi_k<T: Real>(tau: T, m_o_k: T) -> T {
    let t2 = tau * tau;
    let d = T::one() + m_o_k;
    t2 + (T::one() - t2) / (d * d)
}

/// Closed form `Γ = √(1 − τ²) tr Θ / (Mα + tr Θ)`.
pub fn gamma_closed_form<T: Real>(trace: T, m: usize, alpha: T, tau: T) -> T {
    (T::one() - tau * tau).max(T::zero()).sqrt() * trace / (from_usize::<T>(m) * alpha + trace)
}

/// Iterative equivalent of `h_kᴴŴĥ_k`: `√(1 − τ²) m°/(1 + m°)`.
pub fn quad_form_det<T: Real>(tau: T, m_o_k: T) -> T {
    (T::one() - tau * tau).max(T::zero()).sqrt() * m_o_k / (T::one() + m_o_k)
}

/// Equivalent of `ĥ_kᴴŴ²ĥ_k`: `m′_k/(M(1 + m°_k)²)`.
pub fn energy_det<T: Real>(m_prime_k: T, m_o_k: T, m: usize) -> T {
    let d = T::one() + m_o_k;
    m_prime_k / (from_usize::<T>(m) * d * d)
}

/// `P / Σ_k p_k m′_k/(M(1 + m°_k)²)`, the BS and DF relay scalings.
pub fn xi_det<T: Real>(m_prime: &[T], m_o: &[T], powers: &[T], p_total: T, m: usize) -> Result<T> {
    let denom = powers
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, &p)| acc + p * energy_det(m_prime[k], m_o[k], m));
    positive_ratio(p_total, denom)
}

/// AF relay scaling; the bracket carries the BS-hop signal power seen at
/// relay antenna m, with the CSIT error of that BS-hop link.
#[allow(clippy::too_many_arguments)]
pub fn xi_det_af<T: Real>(
    sr: &DeterministicState<T>,
    rd: &DeterministicState<T>,
    gain_sr: T,
    p_s: &[T],
    p_r: &[T],
    n0: T,
    p_total: T,
) -> Result<T> {
    let m = sr.m;
    let denom = (0..p_r.len()).fold(T::zero(), |acc, k| {
        let ms = sr.m_o()[k];
        let ratio = ms / (T::one() + ms);
        let t2 = sr.tau[k] * sr.tau[k];
        let signal = gain_sr * p_s[k] * sr.xi_sq * (T::one() - t2) * ratio * ratio;
        acc + p_r[k] * energy_det(rd.second().m_prime[k], rd.m_o()[k], m) * (signal + n0)
    });
    positive_ratio(p_total, denom)
}

fn positive_ratio<T: Real>(p: T, denom: T) -> Result<T> {
    if !(denom > T::zero()) || !denom.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "deterministic power normalization has denominator {denom:e}"
        )));
    }
    Ok(p / denom)
}

/// First- and second-order solution for one (Θ set, α) pair.
#[derive(Debug, Clone)]
pub struct DeCore<T: Real> {
    pub alpha: T,
    pub fixed: FixedPoint<T>,
    pub second: SecondOrder<T>,
}

impl<T: Real> DeCore<T> {
    pub fn solve(thetas: &ThetaSet<T>, alpha: T) -> Result<Self> {
        let fixed = solve_m_o(thetas, alpha, lit(FIXED_POINT_TOL), FIXED_POINT_MAX_ITER)?;
        let second = solve_m_prime(thetas, &fixed)?;
        Ok(Self { alpha, fixed, second })
    }
}

/// Per-hop deterministic quantities.
#[derive(Debug, Clone)]
pub struct DeterministicState<T: Real> {
    pub m: usize,
    pub core: Arc<DeCore<T>>,
    pub tau: Vec<T>,
    pub upsilon: Vec<T>,
    pub phi: Vec<T>,
    /// Closed-form Γ per user.
    pub gamma_cf: Vec<T>,
    /// `√(1 − τ²) m°/(1 + m°)` per user.
    pub quad_form: Vec<T>,
    /// `m′_k/(M(1 + m°_k)²)` per user.
    pub energy: Vec<T>,
    /// ξ₁°² on the BS hop, ξ_DF°² on the relay hop.
    pub xi_sq: T,
}

impl<T: Real> DeterministicState<T> {
    pub fn new(thetas: &ThetaSet<T>, core: Arc<DeCore<T>>, tau: &[T], powers: &[T], p_total: T) -> Result<Self> {
        let m = thetas.m();
        let k = thetas.k();
        if tau.len() != k || powers.len() != k {
            return Err(Error::DimensionMismatch(format!("{} taus / {} powers for {k} users", tau.len(), powers.len())));
        }
        let m_o = &core.fixed.m_o;
        let mp = &core.second;
        let upsilon = (0..k).map(|u| upsilon_k(&mp.m_prime_k, m_o, u, m)).collect();
        let phi = (0..k).map(|u| phi_k(tau[u], m_o[u])).collect();
        let gamma_cf = (0..k)
            .map(|u| gamma_closed_form(thetas.user(u).trace, m, core.alpha, tau[u]))
            .collect();
        let quad_form = (0..k).map(|u| quad_form_det(tau[u], m_o[u])).collect();
        let energy = (0..k).map(|u| energy_det(mp.m_prime[u], m_o[u], m)).collect();
        let xi_sq = xi_det(&mp.m_prime, m_o, powers, p_total, m)?;
        Ok(Self {
            m,
            core,
            tau: tau.to_vec(),
            upsilon,
            phi,
            gamma_cf,
            quad_form,
            energy,
            xi_sq,
        })
    }

    pub fn m_o(&self) -> &[T] {
        &self.core.fixed.m_o
    }

    pub fn second(&self) -> &SecondOrder<T> {
        &self.core.second
    }
}

/// Large-scale quantities shared by both deterministic SINRs.
#[derive(Debug, Clone, Copy)]
pub struct DetLink<T: Real> {
    pub gain_sr: T,
    pub gain_rd: T,
    /// Per-user power P/K.
    pub p_user: T,
    pub n0: T,
}

/// Deterministic AF SINR per user.
pub fn det_sinr_af<T: Real>(
    sr: &DeterministicState<T>,
    rd: &DeterministicState<T>,
    xi_af_sq: T,
    link: DetLink<T>,
) -> Vec<T> {
    let a_s = link.gain_sr * link.p_user;
    let a_r = link.gain_rd * link.p_user;
    let both = a_s * a_r * sr.xi_sq * xi_af_sq;
    (0..sr.tau.len())
        .map(|k| {
            let g_sr = sr.gamma_cf[k] * sr.gamma_cf[k];
            let g_rd = rd.gamma_cf[k] * rd.gamma_cf[k];
            let num = both * g_sr * g_rd;
            let den = both * (g_rd * sr.upsilon[k] * sr.phi[k] + g_sr * rd.upsilon[k] * rd.phi[k])
                + a_r * xi_af_sq * g_rd * link.n0
                + link.n0;
            num / den
        })
        .collect()
}

/// How a reported deterministic value relates to the ergodic quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Equivalent,
    /// Jensen upper-bounding approximation of the ergodic value.
    UpperApproximation,
}

/// Deterministic DF SINRs with both min arguments kept.
#[derive(Debug, Clone)]
pub struct DfApproximation<T: Real> {
    pub values: Vec<T>,
    pub sr_term: Vec<T>,
    pub rd_term: Vec<T>,
    pub kind: BoundKind,
}

/// One hop term of the DF min.
fn df_term<T: Real>(state: &DeterministicState<T>, gain: T, link: DetLink<T>, k: usize) -> T {
    let a = gain * link.p_user * state.xi_sq;
    a * state.gamma_cf[k] * state.gamma_cf[k] / (a * state.upsilon[k] * state.phi[k] + link.n0)
}

/// Deterministic DF SINR per user: the smaller of the two hop terms.
pub fn det_sinr_df<T: Real>(
    sr: &DeterministicState<T>,
    rd: &DeterministicState<T>,
    link: DetLink<T>,
) -> DfApproximation<T> {
    let k = sr.tau.len();
    let sr_term: Vec<T> = (0..k).map(|u| df_term(sr, link.gain_sr, link, u)).collect();
    let rd_term: Vec<T> = (0..k).map(|u| df_term(rd, link.gain_rd, link, u)).collect();
    DfApproximation {
        values: sr_term.iter().zip(&rd_term).map(|(&a, &b)| a.min(b)).collect(),
        sr_term,
        rd_term,
        kind: BoundKind::UpperApproximation,
    }
}

/// Both hops, the AF scaling and both SINR families at one power point.
#[derive(Debug, Clone)]
pub struct DeterministicPoint<T: Real> {
    pub sr: DeterministicState<T>,
    pub rd: DeterministicState<T>,
    pub xi_af_sq: T,
    pub sinr_af: Vec<T>,
    pub sinr_df: DfApproximation<T>,
}

impl<T: Real> DeterministicPoint<T> {
    /// `Σ_k ½ ln(1 + γ_k)` of the AF equivalents, nats.
    pub fn sum_rate_af(&self) -> f64 {
        sum_rate(&self.sinr_af)
    }

    pub fn sum_rate_df(&self) -> f64 {
        sum_rate(&self.sinr_df.values)
    }
}

fn sum_rate<T: Real>(g: &[T]) -> f64 {
    g.iter().map(|&x| 0.5 * to_f64(x).ln_1p()).sum()
}

/// Memo of solved cores keyed by α and Θ set identity.
#[derive(Debug, Default)]
pub struct DeCache<T: Real> {
    cores: HashMap<(Vec<usize>, u64), Arc<DeCore<T>>>,
}

impl<T: Real> DeCache<T> {
    pub fn new() -> Self {
        Self { cores: HashMap::new() }
    }

    pub fn get(&mut self, thetas: &ThetaSet<T>, alpha: T) -> Result<Arc<DeCore<T>>> {
        let key = (set_id(thetas), to_f64(alpha).to_bits());
        if let Some(c) = self.cores.get(&key) {
            return Ok(c.clone());
        }
        let core = Arc::new(DeCore::solve(thetas, alpha)?);
        self.cores.insert(key, core.clone());
        Ok(core)
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }
}

/// Identity of a Θ set: the shared matrices by address plus the user map.
fn set_id<T: Real>(thetas: &ThetaSet<T>) -> Vec<usize> {
    thetas
        .unique
        .iter()
        .map(|a| Arc::as_ptr(a) as usize)
        .chain(std::iter::once(usize::MAX))
        .chain(thetas.user_index.iter().copied())
        .collect()
}

/// Solves both hops at one link budget. The equivalents assume the equal
/// split P/K on both hops, whatever allocation the budget carries.
pub fn deterministic_point<T: Real>(
    sr_set: &ThetaSet<T>,
    rd_set: &ThetaSet<T>,
    tau_sr: &[T],
    tau_rd: &[T],
    budget: &LinkBudget,
    cache: &mut DeCache<T>,
) -> Result<DeterministicPoint<T>> {
    let k = sr_set.k();
    let p: T = lit(budget.p_watts);
    let p_user = p / from_usize::<T>(k);
    let equal = vec![p_user; k];
    let alpha1: T = lit(budget.alpha1);
    let alpha2: T = lit(budget.alpha2);
    let core_sr = cache.get(sr_set, alpha1)?;
    let core_rd = if rd_set.same_as(sr_set) && budget.alpha1 == budget.alpha2 {
        core_sr.clone()
    } else {
        cache.get(rd_set, alpha2)?
    };
    let sr = DeterministicState::new(sr_set, core_sr, tau_sr, &equal, p)?;
    let rd = DeterministicState::new(rd_set, core_rd, tau_rd, &equal, p)?;
    let link = DetLink {
        gain_sr: lit(budget.gain_sr),
        gain_rd: lit(budget.gain_rd),
        p_user,
        n0: lit(budget.noise_watts),
    };
    let xi_af_sq = xi_det_af(&sr, &rd, link.gain_sr, &equal, &equal, link.n0, p)?;
    let sinr_af = det_sinr_af(&sr, &rd, xi_af_sq, link);
    let sinr_df = det_sinr_df(&sr, &rd, link);
    Ok(DeterministicPoint {
        sr,
        rd,
        xi_af_sq,
        sinr_af,
        sinr_df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{build_theta_one_ring, identity_theta, AngularSector, CorrelationMatrix, UlaGeometry};
    use num_complex::Complex;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Positive root of `α m² + (α + K/M − 1) m − 1 = 0`.
    fn scalar_root(c: f64, alpha: f64) -> f64 {
        let b = alpha + c - 1.0;
        (-b + (b * b + 4.0 * alpha).sqrt()) / (2.0 * alpha)
    }

    fn one_ring(m: usize, lo: f64, hi: f64) -> CorrelationMatrix<f64> {
        build_theta_one_ring(UlaGeometry::new(m, 0.5).unwrap(), AngularSector::new(lo, hi).unwrap()).unwrap()
    }

    #[test]
    fn identity_fixed_point_matches_quadratic_root() {
        let set = ThetaSet::<f64>::identity(1200, 100);
        let fp = solve_m_o(&set, 1.0 / 1200.0, 1e-12, 500).unwrap();
        let expect = scalar_root(1.0 / 12.0, 1.0 / 1200.0);
        assert!((expect - 1100.09).abs() < 0.01, "{expect}");
        assert!((fp.m_o[0] - expect).abs() / expect < 1e-10);
        assert!(fp.iterations < 500);
    }

    #[test]
    fn dense_path_agrees_with_scalar_path_on_identity() {
        // An explicit identity stored as a dense matrix takes the dense path.
        let m = 48;
        let dense = CorrelationMatrix {
            identity: false,
            ..identity_theta::<f64>(m)
        };
        let set = ThetaSet::from_per_user(vec![dense; 6]).unwrap();
        let alpha = 0.05;
        let fp = solve_m_o(&set, alpha, 1e-12, 500).unwrap();
        assert!(matches!(fp.t, Resolvent::Dense(_)));
        let expect = scalar_root(6.0 / 48.0, alpha);
        assert!((fp.m_o[3] - expect).abs() / expect < 1e-10);
        let so = solve_m_prime(&set, &fp).unwrap();
        let so_scalar = solve_m_prime(&ThetaSet::identity(m, 6), &solve_m_o(&ThetaSet::identity(m, 6), alpha, 1e-12, 500).unwrap()).unwrap();
        for k in 0..6 {
            assert!((so.m_prime[k] - so_scalar.m_prime[k]).abs() / so.m_prime[k] < 1e-9);
        }
    }

    #[test]
    fn huge_regularization_gives_small_m() {
        let set = ThetaSet::<f64>::identity(64, 8);
        let fp = solve_m_o(&set, 1e6, 1e-10, 500).unwrap();
        assert!(fp.m_o[0] < 2.0 * 64.0 / (64.0 * 1e6));
    }

    #[test]
    fn correlated_residual_and_positivity() {
        let m = 64;
        let thetas = vec![one_ring(m, 0.1, 0.6), one_ring(m, 0.9, 1.4), one_ring(m, -0.3, 0.2)];
        let set = ThetaSet::from_per_user(thetas).unwrap();
        let fp = solve_m_o(&set, 1e-3, 1e-10, 500).unwrap();
        let Resolvent::Dense(t) = &fp.t else { panic!("dense expected") };
        for (u, theta) in set.unique.iter().enumerate() {
            let direct = trace_of_product(&theta.theta, t).re / m as f64;
            assert!(((fp.m_unique[u] - direct) / direct).abs() < 1e-10);
            assert!(fp.m_unique[u] > 0.0);
        }
        let so = solve_m_prime(&set, &fp).unwrap();
        assert!(so.m_prime.iter().all(|&x| x > 0.0));
        assert!(so.spectral_radius < 1.0);
    }

    #[test]
    fn m_decreases_with_alpha() {
        let set = ThetaSet::from_per_user(vec![one_ring(32, 0.2, 0.7); 4]).unwrap();
        let ms: Vec<f64> = [1e-3, 1e-2, 1e-1]
            .iter()
            .map(|&a| solve_m_o(&set, a, 1e-10, 500).unwrap().m_o[0])
            .collect();
        assert!(ms[0] > ms[1] && ms[1] > ms[2]);
    }

    #[test]
    fn iteration_cap_is_a_convergence_error() {
        let set = ThetaSet::<f64>::identity(64, 8);
        let e = solve_m_o(&set, 1e-3, 1e-10, 2).unwrap_err();
        assert!(matches!(e, Error::Convergence { iterations: 2, .. }));
    }

    #[test]
    fn identity_second_order_matches_scalar_reduction() {
        // T = tI, every J entry is j₀ = t²/(M(1 + m)²), v = t·t, so
        // m′ = t²/(1 − K j₀).
        let (m, k, alpha) = (128, 16, 0.01);
        let set = ThetaSet::<f64>::identity(m, k);
        let fp = solve_m_o(&set, alpha, 1e-13, 500).unwrap();
        let Resolvent::Scalar(t) = fp.t else { panic!("scalar expected") };
        let so = solve_m_prime(&set, &fp).unwrap();
        let j0 = t * t / (m as f64 * (1.0 + fp.m_o[0]).powi(2));
        assert!((so.j[(3, 5)] - j0).abs() / j0 < 1e-14);
        let expect = t * t / (1.0 - k as f64 * j0);
        assert!((so.m_prime[0] - expect).abs() / expect < 1e-12);
        assert!((so.spectral_radius - k as f64 * j0).abs() < 1e-12);
        let ups: Vec<f64> = (0..k).map(|u| upsilon_k(&so.m_prime_k, &fp.m_o, u, m)).collect();
        assert!(ups.iter().all(|&x| (x - ups[0]).abs() < 1e-12 * ups[0]));
    }

    #[test]
    fn single_user_second_order_is_scalar() {
        let set = ThetaSet::from_per_user(vec![one_ring(24, 0.3, 0.9)]).unwrap();
        let fp = solve_m_o(&set, 0.01, 1e-12, 500).unwrap();
        let so = solve_m_prime(&set, &fp).unwrap();
        assert!((so.m_prime[0] - so.v[0] / (1.0 - so.j[(0, 0)])).abs() < 1e-12 * so.m_prime[0]);
        assert_eq!(upsilon_k(&so.m_prime_k, &fp.m_o, 0, 24), 0.0);
    }

    #[test]
    fn upsilon_matches_transcription() {
        let set = ThetaSet::from_per_user(vec![one_ring(32, 0.1, 0.5), one_ring(32, 0.5, 0.9), one_ring(32, 1.0, 1.5)]).unwrap();
        let fp = solve_m_o(&set, 0.02, 1e-12, 500).unwrap();
        let so = solve_m_prime(&set, &fp).unwrap();
        for k in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                if j != k {
                    s += so.m_prime_k[(j, k)] / ((1.0 + fp.m_o[j]) * (1.0 + fp.m_o[j]));
                }
            }
            assert!((upsilon_k(&so.m_prime_k, &fp.m_o, k, 32) - s / 32.0).abs() <= 1e-14 * s.abs().max(1e-300));
        }
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_k(1.0, 37.0), 1.0);
        assert!((phi_k(0.0f64, 3.0) - 1.0 / 16.0).abs() < 1e-16);
        let v = phi_k(0.1f64.sqrt(), 1100.09);
        assert!((v - 0.10000074).abs() < 1e-8, "{v}");
        // Same as the displayed algebraic form.
        let (t, m) = (0.4f64, 2.5f64);
        let literal = (1.0 - t * t * (1.0 - (1.0 + m).powi(2))) / (1.0 + m).powi(2);
        assert!((phi_k(t, m) - literal).abs() < 1e-15);
    }

    #[test]
    fn gamma_values() {
        let a = 1.0f64 / 1200.0;
        assert!((gamma_closed_form(64.0, 64, a, 0.0) - 1.0 / (1.0 + a)).abs() < 1e-15);
        assert_eq!(gamma_closed_form(64.0, 64, a, 1.0), 0.0);
        let g = gamma_closed_form(1200.0, 1200, a, 0.1f64.sqrt());
        assert!((g - 0.94789).abs() < 1e-4, "{g}");
    }

    fn budget(k: usize, p: f64, alpha: f64, n0: f64) -> LinkBudget {
        LinkBudget {
            p_watts: p,
            noise_watts: n0,
            gain_sr: 0.3,
            gain_rd: 0.5,
            rho: 1.0,
            alpha1: alpha,
            alpha2: alpha,
            p_source: vec![p / k as f64; k],
            p_relay: vec![p / k as f64; k],
        }
    }

    #[test]
    fn uniform_bs_scaling_closed_form() {
        let (m, k, p) = (64, 8, 2.0);
        let set = ThetaSet::<f64>::identity(m, k);
        let mut cache = DeCache::new();
        let taus = vec![0.0; k];
        let pt = deterministic_point(&set, &set, &taus, &taus, &budget(k, p, 0.01, 0.1), &mut cache).unwrap();
        let mo = pt.sr.m_o()[0];
        let mp = pt.sr.second().m_prime[0];
        let expect = p * m as f64 * (1.0 + mo).powi(2) / (p * mp);
        assert!((pt.sr.xi_sq - expect).abs() / expect < 1e-12);
        assert_eq!(cache.len(), 1);
        // Symmetric hops: both DF arguments coincide up to the path gains.
        assert!((pt.sr.xi_sq - pt.rd.xi_sq).abs() < 1e-12 * expect);
    }

    #[test]
    fn af_scaling_with_huge_noise_is_noise_times_df() {
        let (m, k) = (64, 8);
        let set = ThetaSet::<f64>::identity(m, k);
        let taus = vec![0.3; k];
        let mut cache = DeCache::new();
        let n0 = 1e12;
        let pt = deterministic_point(&set, &set, &taus, &taus, &budget(k, 1.0, 0.01, n0), &mut cache).unwrap();
        let ratio = (1.0 / pt.xi_af_sq) / (n0 / pt.rd.xi_sq);
        assert!((ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_user_af_reduces_to_noise_limited_form() {
        let m = 32;
        let set = ThetaSet::<f64>::identity(m, 1);
        let taus = [0.2];
        let mut cache = DeCache::new();
        let b = budget(1, 1.0, 0.05, 0.2);
        let pt = deterministic_point(&set, &set, &taus, &taus, &b, &mut cache).unwrap();
        assert_eq!(pt.sr.upsilon[0], 0.0);
        let (a_s, a_r) = (b.gain_sr, b.gain_rd);
        let (x1, xa) = (pt.sr.xi_sq, pt.xi_af_sq);
        let g2 = pt.sr.gamma_cf[0].powi(2);
        let expect = a_s * a_r * x1 * xa * g2 * g2 / (a_r * xa * g2 * 0.2 + 0.2);
        assert!((pt.sinr_af[0] - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn fully_erroneous_csit_gives_zero_sinr() {
        let set = ThetaSet::<f64>::identity(32, 4);
        let taus = vec![1.0; 4];
        let mut cache = DeCache::new();
        let pt = deterministic_point(&set, &set, &taus, &taus, &budget(4, 1.0, 0.01, 0.1), &mut cache).unwrap();
        assert!(pt.sinr_af.iter().all(|&g| g == 0.0));
        assert!(pt.sinr_df.values.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn df_perfect_csit_identity_matches_transcription() {
        let (m, k) = (64, 8);
        let set = ThetaSet::<f64>::identity(m, k);
        let taus = vec![0.0; k];
        let mut cache = DeCache::new();
        let b = budget(k, 1.0, 0.01, 0.05);
        let pt = deterministic_point(&set, &set, &taus, &taus, &b, &mut cache).unwrap();
        let mo = pt.sr.m_o()[0];
        let phi = (1.0 + mo).powi(-2);
        let gamma = 1.0 / (1.0 + 0.01);
        let ups = pt.sr.upsilon[0];
        let a = b.gain_sr * (1.0 / k as f64) * pt.sr.xi_sq;
        let expect = a * gamma * gamma / (a * ups * phi + 0.05);
        assert!((pt.sinr_df.sr_term[0] - expect).abs() / expect < 1e-12);
        assert_eq!(pt.sinr_df.kind, BoundKind::UpperApproximation);
        for u in 0..k {
            assert_eq!(pt.sinr_df.values[u], pt.sinr_df.sr_term[u].min(pt.sinr_df.rd_term[u]));
        }
    }

    #[test]
    fn hops_share_a_core_only_when_alphas_match() {
        let set = ThetaSet::<f64>::identity(32, 4);
        let taus = vec![0.1; 4];
        let mut cache = DeCache::new();
        let mut b = budget(4, 1.0, 0.01, 0.1);
        deterministic_point(&set, &set, &taus, &taus, &b, &mut cache).unwrap();
        assert_eq!(cache.len(), 1);
        b.alpha2 = 0.02;
        deterministic_point(&set, &set, &taus, &taus, &b, &mut cache).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn broadside_sector_has_unit_diagonal_matrix_in_state() {
        let th = one_ring(16, -PI / 12.0, PI / 12.0);
        assert!((th.theta[(3, 3)] - Complex::new(1.0, 0.0)).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scalar_fixed_point_solves_quadratic(c in 0.01f64..0.9, la in -6.0f64..2.0) {
            let m = 200usize;
            let k = ((c * m as f64).round() as usize).max(1);
            let alpha = 10f64.powf(la);
            let set = ThetaSet::<f64>::identity(m, k);
            let fp = solve_m_o(&set, alpha, 1e-12, 500).unwrap();
            let expect = scalar_root(k as f64 / m as f64, alpha);
            prop_assert!((fp.m_o[0] - expect).abs() / expect < 1e-9);
        }

        #[test]
        fn phi_lies_in_unit_interval(tau in 0.0f64..=1.0, m in 0.0f64..1e20) {
            let p = phi_k(tau, m);
            prop_assert!(p > 0.0 || (tau == 0.0 && m > 1e150));
            prop_assert!(p <= 1.0 + 1e-15);
        }

        #[test]
        fn deterministic_sinrs_are_nonnegative(tau in 0.0f64..=1.0, lp in -3.0f64..3.0) {
            let set = ThetaSet::<f64>::identity(32, 4);
            let taus = vec![tau; 4];
            let mut cache = DeCache::new();
            let pt = deterministic_point(&set, &set, &taus, &taus, &budget(4, 10f64.powf(lp), 0.01, 0.1), &mut cache).unwrap();
            prop_assert!(pt.sinr_af.iter().all(|&g| g >= 0.0 && g.is_finite()));
            prop_assert!(pt.sinr_df.values.iter().all(|&g| g >= 0.0 && g.is_finite()));
        }
    }
}
