//! Fast-fading draws and channel assembly for both hops.
//!
//! Channels are stored column-wise: column `k` of `h` is `h_k`, so `h` is
//! the M×K matrix `Hᴴ` of the signal model.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::correlation::ThetaSet;
use crate::error::{Error, Result};
use crate::linalg::{cmatmul, CMatrix, CVector};
use crate::real::{from_usize, lit, Real};
use crate::rng::{Purpose, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hop {
    /// BS → relay.
    Sr,
    /// Relay → users.
    Rd,
}

impl Hop {
    pub fn index(self) -> u64 {
        match self {
            Hop::Sr => 0,
            Hop::Rd => 1,
        }
    }
}

/// Draws of one hop for all K users.
#[derive(Debug, Clone)]
pub struct HopChannels<T: Real> {
    pub hop: Hop,
    /// Per-user CSIT error τ_k.
    pub tau: Vec<T>,
    pub z: CMatrix<T>,
    pub q: CMatrix<T>,
    /// True channels.
    pub h: CMatrix<T>,
    /// Transmitter-side estimates.
    pub hhat: CMatrix<T>,
}

impl<T: Real> HopChannels<T> {
    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }
}

/// Length-`m` vector of i.i.d. CN(0, 1/m) entries.
pub fn sample_iid_vector<T: Real, R: Rng + ?Sized>(m: usize, rng: &mut R) -> CVector<T> {
    let sd = (0.5 / m as f64).sqrt();
    CVector::from_fn(m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(lit(re * sd), lit(im * sd))
    })
}

/// Draws `z` and `q` for every user of one hop from their own streams.
pub fn sample_hop_draws<T: Real>(
    m: usize,
    k: usize,
    seed: u64,
    hop: Hop,
    trial: usize,
) -> (CMatrix<T>, CMatrix<T>) {
    let mut z = CMatrix::zeros(m, k);
    let mut q = CMatrix::zeros(m, k);
    for user in 0..k {
        let mut rz = StreamKey::new(seed, hop.index(), user, trial, Purpose::Fading).rng();
        let mut rq = StreamKey::new(seed, hop.index(), user, trial, Purpose::EstimationError).rng();
        z.set_column(user, &sample_iid_vector(m, &mut rz));
        q.set_column(user, &sample_iid_vector(m, &mut rq));
    }
    (z, q)
}

/// Samples one hop: `h_k = √M Θ_k^{1/2} z_k` and
/// `ĥ_k = √M Θ_k^{1/2}(√(1−τ_k²) z_k + τ_k q_k)`.
pub fn assemble_hop<T: Real>(
    thetas: &ThetaSet<T>,
    tau: &[T],
    seed: u64,
    hop: Hop,
    trial: usize,
) -> Result<HopChannels<T>> {
    let (z, q) = sample_hop_draws(thetas.m(), thetas.k(), seed, hop, trial);
    assemble_from_draws(thetas, tau, z, q, hop)
}

/// Builds a hop from given `z`, `q` draws.
pub fn assemble_from_draws<T: Real>(
    thetas: &ThetaSet<T>,
    tau: &[T],
    z: CMatrix<T>,
    q: CMatrix<T>,
    hop: Hop,
) -> Result<HopChannels<T>> {
    let m = thetas.m();
    let k = thetas.k();
    if z.shape() != (m, k) || q.shape() != (m, k) {
        return Err(Error::DimensionMismatch(format!(
            "draws are {:?}/{:?}, correlation set is {m}x{k}",
            z.shape(),
            q.shape()
        )));
    }
    if tau.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} CSIT errors for {k} users",
            tau.len()
        )));
    }
    if let Some(t) = tau.iter().find(|t| !(**t >= T::zero() && **t <= T::one())) {
        return Err(Error::InvalidConfig(format!("tau = {t:e} outside [0, 1]")));
    }
    let scale = from_usize::<T>(m).sqrt();
    let mut h = CMatrix::zeros(m, k);
    let mut hhat = CMatrix::zeros(m, k);
    for (u, users) in thetas.groups().into_iter().enumerate() {
        if users.is_empty() {
            continue;
        }
        let theta = &thetas.unique[u];
        let zu = gather(&z, &users);
        let qu = gather(&q, &users);
        let (a, b) = if theta.identity {
            (zu, qu)
        } else {
            (cmatmul(&theta.sqrt_theta, &zu), cmatmul(&theta.sqrt_theta, &qu))
        };
        for (col, &user) in users.iter().enumerate() {
            let t = tau[user];
            let keep = (T::one() - t * t).max(T::zero()).sqrt();
            let hc = a.column(col) * Complex::from(scale);
            let hhc = (a.column(col) * Complex::from(keep) + b.column(col) * Complex::from(t))
                * Complex::from(scale);
            h.set_column(user, &hc);
            hhat.set_column(user, &hhc);
        }
    }
    Ok(HopChannels {
        hop,
        tau: tau.to_vec(),
        z,
        q,
        h,
        hhat,
    })
}

fn gather<T: Real>(a: &CMatrix<T>, cols: &[usize]) -> CMatrix<T> {
    DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}
