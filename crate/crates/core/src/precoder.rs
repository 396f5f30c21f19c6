//! Regularized zero-forcing precoders and their empirical power scalings.
//!
//! `Ŵ = (ĤᴴĤ + MαI)⁻¹` is never needed on its own by the simulator: only
//! the directions `Ŵĥ_k` enter the SINRs and the power constraints. With the
//! estimates stacked as the columns of X (M×K), the push-through identity
//! `(XXᴴ + cI)⁻¹X = X(XᴴX + cI)⁻¹` gives them from a K×K factorization.

use crate::config::PrecoderRoute;
use crate::error::{Error, Result};
use crate::linalg::{cmatmul, cmatmul_adj, cmatmul_by_adj, hpd_inverse, CMatrix};
use crate::real::{from_usize, Real};

/// Which node the precoder belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecoderHop {
    /// BS, `l = 1`.
    Bs,
    /// Relay, `l = 2`.
    Relay,
}

/// Precoder of one node.
#[derive(Debug, Clone)]
pub struct PrecoderSet<T: Real> {
    pub hop: PrecoderHop,
    /// `Ŵ_l`, kept only when built through the direct route.
    pub w: Option<CMatrix<T>>,
    /// Column k is `Ŵ_l ĥ_k`.
    pub directions: CMatrix<T>,
    /// ξ² meeting the node's power constraint with equality.
    pub xi_sq: T,
}

impl<T: Real> PrecoderSet<T> {
    /// Column k is the scaled precoder `g_k = ξ Ŵ ĥ_k`.
    pub fn precoders(&self) -> CMatrix<T> {
        &self.directions * num_complex::Complex::from(self.xi_sq.sqrt())
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if !(alpha > T::zero()) || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "regularization must be positive, got {alpha:e}"
        )));
    }
    Ok(())
}

/// `(ĤᴴĤ + MαI)⁻¹` with the estimates as the columns of `hhat` (M×K).
pub fn rzf_matrix<T: Real>(hhat: &CMatrix<T>, alpha: T) -> Result<CMatrix<T>> {
    check_alpha(alpha)?;
    let m = hhat.nrows();
    let shift = from_usize::<T>(m) * alpha;
    let mut a = if hhat.ncols() == 0 {
        CMatrix::zeros(m, m)
    } else {
        cmatmul_by_adj(hhat, hhat)
    };
    for i in 0..m {
        a[(i, i)].re += shift;
    }
    hpd_inverse(&a)
}

/// Gram matrix `XᴴX` of the estimates, shared by every α of a trial.
#[derive(Debug, Clone)]
pub struct GramFactor<T: Real> {
    pub gram: CMatrix<T>,
}

impl<T: Real> GramFactor<T> {
    pub fn new(hhat: &CMatrix<T>) -> Self {
        Self {
            gram: cmatmul_adj(hhat, hhat),
        }
    }

    /// Directions `X(XᴴX + MαI)⁻¹`.
    pub fn directions(&self, hhat: &CMatrix<T>, alpha: T) -> Result<CMatrix<T>> {
        check_alpha(alpha)?;
        let shift = from_usize::<T>(hhat.nrows()) * alpha;
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)].re += shift;
        }
        let inv = hpd_inverse(&a)?;
        Ok(cmatmul(hhat, &inv))
    }
}

/// Directions `Ŵĥ_k` through the chosen route; also returns Ŵ for the
/// direct route.
pub fn rzf_directions<T: Real>(
    hhat: &CMatrix<T>,
    alpha: T,
    route: PrecoderRoute,
) -> Result<(CMatrix<T>, Option<CMatrix<T>>)> {
    match route {
        PrecoderRoute::Woodbury => Ok((GramFactor::new(hhat).directions(hhat, alpha)?, None)),
        PrecoderRoute::Direct => {
            let w = rzf_matrix(hhat, alpha)?;
            Ok((cmatmul(&w, hhat), Some(w)))
        }
    }
}

/// `Σ_k p_k ‖d_k‖²`.
fn weighted_energy<T: Real>(directions: &CMatrix<T>, p: &[T]) -> Result<T> {
    if p.len() != directions.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} powers for {} precoders",
            p.len(),
            directions.ncols()
        )));
    }
    Ok(directions
        .column_iter()
        .zip(p)
        .fold(T::zero(), |acc, (d, &pk)| acc + pk * d.norm_squared()))
}

fn positive_ratio<T: Real>(p: T, denom: T, what: &str) -> Result<T> {
    if !(denom > T::zero()) || !denom.is_finite() {
        return Err(Error::DegenerateChannel(format!(
            "{what} power normalization has denominator {denom:e}"
        )));
    }
    Ok(p / denom)
}

/// ξ₁² = P / Σ_k p_{s,k} ĥᴴŴ²ĥ.
pub fn xi_bs_empirical<T: Real>(directions: &CMatrix<T>, p_s: &[T], p_total: T) -> Result<T> {
    positive_ratio(p_total, weighted_energy(directions, p_s)?, "BS")
}

/// ξ_DF² = P / Σ_k p_{r,k} ĥᴴŴ₂²ĥ.
pub fn xi_df_empirical<T: Real>(directions: &CMatrix<T>, p_r: &[T], p_total: T) -> Result<T> {
    positive_ratio(p_total, weighted_energy(directions, p_r)?, "DF relay")
}

/// ξ_AF² = P / Σ_m p_{r,m} ĥ_mᴴŴ₂²ĥ_m (S_m + N₀), with `S_m` the realized
/// signal power at relay antenna m.
pub fn xi_af_empirical<T: Real>(
    directions: &CMatrix<T>,
    p_r: &[T],
    relay_signal_power: &[T],
    n0: T,
    p_total: T,
) -> Result<T> {
    if relay_signal_power.len() != p_r.len() {
        return Err(Error::DimensionMismatch("relay power vector length".into()));
    }
    let loaded: Vec<T> = p_r
        .iter()
        .zip(relay_signal_power)
        .map(|(&p, &s)| p * (s + n0))
        .collect();
    positive_ratio(p_total, weighted_energy(directions, &loaded)?, "AF relay")
}

/// `C[k, j] = h_kᴴ d_j` for channels and directions stored as columns.
pub fn cross_gains<T: Real>(h: &CMatrix<T>, directions: &CMatrix<T>) -> CMatrix<T> {
    cmatmul_adj(h, directions)
}

/// `S_m = Σ_n (G p_{s,n}) ξ₁² |h_{sr,m}ᴴ Ŵ₁ĥ_{sr,n}|²` from the cross gains.
pub fn relay_signal_power<T: Real>(cross_sr: &CMatrix<T>, xi1_sq: T, gain_sr: T, p_s: &[T]) -> Vec<T> {
    (0..cross_sr.nrows())
        .map(|m| {
            (0..cross_sr.ncols()).fold(T::zero(), |acc, n| {
                acc + gain_sr * p_s[n] * xi1_sq * cross_sr[(m, n)].norm_sqr()
            })
        })
        .collect()
}

/// Relative violation `|Σ_k w_k ξ²‖d_k‖² − P| / P` of a power constraint
/// whose per-stream loads are `w`.
pub fn power_residual<T: Real>(directions: &CMatrix<T>, loads: &[T], xi_sq: T, p_total: T) -> T {
    let used = xi_sq * weighted_energy(directions, loads).unwrap_or(T::zero());
    ((used - p_total) / p_total).abs()
}
