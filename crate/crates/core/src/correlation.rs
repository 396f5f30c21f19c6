//! Per-user transmit correlation matrices for a uniform linear array.
//!
//! The one-ring model gives `[Θ]_{ij} = c_{i−j}` with
//! `c_n = (1/Δθ) ∫ exp(i·2π·s·n·cos θ) dθ` over the user's angular sector,
//! where `s` is the element spacing in wavelengths. The matrix is Hermitian
//! Toeplitz, so only `M` lags are integrated.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex;
use rayon::prelude::*;

use crate::config::{default_sectors, CorrelationMode, SectorSpec, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{cmatmul_by_adj, hermitian_defect, hermitian_eigen, hermitize, CMatrix};
use crate::real::{from_usize, lit, Real};

/// Absolute tolerance per correlation entry.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Cap on integrand evaluations per entry.
pub const QUADRATURE_MAX_EVALS: usize = 1 << 18;
/// Eigenvalues in `[−PSD_CLAMP·λmax, 0)` are rounded up to zero.
pub const PSD_CLAMP: f64 = 1e-10;

const GL_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlaGeometry {
    pub m: usize,
    pub spacing_wavelengths: f64,
}

impl UlaGeometry {
    pub fn new(m: usize, spacing_wavelengths: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("array needs at least one antenna".into()));
        }
        if !(spacing_wavelengths > 0.0) || !spacing_wavelengths.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "antenna spacing must be positive, got {spacing_wavelengths}"
            )));
        }
        Ok(Self {
            m,
            spacing_wavelengths,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularSector {
    pub theta_min: f64,
    pub theta_max: f64,
}

impl AngularSector {
    pub fn new(theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(theta_max > theta_min) || theta_max - theta_min > 2.0 * PI + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "sector [{theta_min}, {theta_max}] must satisfy θmin < θmax ≤ θmin + 2π"
            )));
        }
        Ok(Self {
            theta_min,
            theta_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.theta_max - self.theta_min
    }

    /// The integrand depends on θ through cos θ only, so a sector lying in
    /// θ ≤ 0 yields the same matrix as its mirror image.
    fn canonical(self) -> Self {
        if self.theta_min + self.theta_max < -1e-12 {
            Self {
                theta_min: -self.theta_max,
                theta_max: -self.theta_min,
            }
        } else {
            self
        }
    }

    fn key(&self) -> (i64, i64) {
        let q = |x: f64| (x * 1e9).round() as i64;
        (q(self.theta_min), q(self.theta_max))
    }
}

impl From<SectorSpec> for AngularSector {
    fn from(s: SectorSpec) -> Self {
        Self {
            theta_min: s.theta_min,
            theta_max: s.theta_max,
        }
    }
}

/// Hermitian PSD correlation matrix with its principal square root.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix<T: Real> {
    pub theta: CMatrix<T>,
    pub sqrt_theta: CMatrix<T>,
    /// `tr(Θ)`.
    pub trace: T,
    /// Set when Θ is exactly the identity; lets callers skip products.
    pub identity: bool,
}

impl<T: Real> CorrelationMatrix<T> {
    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> CorrelationMatrix<U> {
        let conv = |z: &Complex<T>| {
            Complex::new(
                lit::<U>(crate::real::to_f64(z.re)),
                lit::<U>(crate::real::to_f64(z.im)),
            )
        };
        CorrelationMatrix {
            theta: self.theta.map(|z| conv(&z)),
            sqrt_theta: self.sqrt_theta.map(|z| conv(&z)),
            trace: lit(crate::real::to_f64(self.trace)),
            identity: self.identity,
        }
    }
}

/// Θ = I_M.
pub fn identity_theta<T: Real>(m: usize) -> CorrelationMatrix<T> {
    CorrelationMatrix {
        theta: CMatrix::identity(m, m),
        sqrt_theta: CMatrix::identity(m, m),
        trace: from_usize(m),
        identity: true,
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// Composite Gauss–Legendre mean of `exp(i·ω·cos θ)` over the sector using
/// `panels` equal panels.
fn composite_mean(omega: f64, sector: AngularSector, panels: usize) -> Complex<f64> {
    let (nodes, weights) = gl_rule();
    let h = sector.width() / panels as f64;
    let mut acc = Complex::new(0.0, 0.0);
    for p in 0..panels {
        let mid = sector.theta_min + (p as f64 + 0.5) * h;
        let mut panel = Complex::new(0.0, 0.0);
        for (x, w) in nodes.iter().zip(weights) {
            let phase = omega * (mid + 0.5 * h * x).cos();
            panel += Complex::new(phase.cos(), phase.sin()) * *w;
        }
        acc += panel;
    }
    // Σ w = 2 per panel: the mean is acc·(h/2)/width = acc/(2·panels).
    acc / (2.0 * panels as f64)
}

/// Correlation at antenna lag `lag`, by panel doubling until successive
/// estimates agree to [`QUADRATURE_TOL`].
pub fn one_ring_lag(spacing: f64, sector: AngularSector, lag: usize) -> Result<Complex<f64>> {
    if lag == 0 {
        return Ok(Complex::new(1.0, 0.0));
    }
    let omega = 2.0 * PI * spacing * lag as f64;
    // About one oscillation of the integrand per panel to start with.
    let mut panels = ((omega * sector.width()) / (2.0 * PI)).ceil().max(1.0) as usize;
    let mut evals = GL_ORDER * panels;
    let mut coarse = composite_mean(omega, sector, panels);
    let mut last_error = f64::INFINITY;
    while evals + 2 * GL_ORDER * panels <= QUADRATURE_MAX_EVALS {
        panels *= 2;
        evals += GL_ORDER * panels;
        let fine = composite_mean(omega, sector, panels);
        last_error = (fine - coarse).norm();
        if last_error < QUADRATURE_TOL {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::Quadrature {
        lag,
        error: last_error,
    })
}

/// Hermitian Toeplitz matrix with first column `c`.
fn toeplitz_hermitian(c: &[Complex<f64>]) -> CMatrix<f64> {
    let m = c.len();
    CMatrix::from_fn(m, m, |i, j| if i >= j { c[i - j] } else { c[j - i].conj() })
}

/// Principal square root of a Hermitian PSD matrix.
pub fn matrix_sqrt_psd<T: Real>(theta: &CMatrix<T>) -> Result<CMatrix<T>> {
    if !theta.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "square root of a {}x{} matrix",
            theta.nrows(),
            theta.ncols()
        )));
    }
    let defect = crate::real::to_f64(hermitian_defect(theta));
    if defect > 1e-12 {
        return Err(Error::NotHermitian(defect));
    }
    let mut sym = theta.clone();
    hermitize(&mut sym);
    let (values, vectors) = hermitian_eigen(&sym);
    let lmax = values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let lmin = values.iter().copied().fold(lmax, |a, b| a.min(b));
    if lmin < -lit::<T>(PSD_CLAMP) * lmax {
        return Err(Error::NotPsd {
            min_eigenvalue: crate::real::to_f64(lmin),
            max_eigenvalue: crate::real::to_f64(lmax),
        });
    }
    let mut scaled = vectors.clone();
    for (j, lambda) in values.iter().enumerate() {
        let s = lambda.max(T::zero()).sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    // (U·√Λ)·Uᴴ
    let mut root = cmatmul_by_adj(&scaled, &vectors);
    hermitize(&mut root);
    Ok(root)
}

/// One-ring correlation matrix for one angular sector.
pub fn build_theta_one_ring<T: Real>(
    geometry: UlaGeometry,
    sector: AngularSector,
) -> Result<CorrelationMatrix<T>> {
    let f64_version = build_one_ring_f64(geometry, sector)?;
    Ok(f64_version.cast())
}

fn build_one_ring_f64(geometry: UlaGeometry, sector: AngularSector) -> Result<CorrelationMatrix<f64>> {
    let lags = (0..geometry.m)
        .map(|n| one_ring_lag(geometry.spacing_wavelengths, sector, n))
        .collect::<Result<Vec<_>>>()?;
    let theta = toeplitz_hermitian(&lags);
    let sqrt_theta = matrix_sqrt_psd(&theta)?;
    Ok(CorrelationMatrix {
        trace: geometry.m as f64,
        theta,
        sqrt_theta,
        identity: false,
    })
}

/// Correlation matrices of all users of one hop, deduplicated.
#[derive(Debug, Clone)]
pub struct ThetaSet<T: Real> {
    pub unique: Vec<Arc<CorrelationMatrix<T>>>,
    /// `user_index[k]` indexes `unique`.
    pub user_index: Vec<usize>,
}

impl<T: Real> ThetaSet<T> {
    pub fn identity(m: usize, k: usize) -> Self {
        Self {
            unique: vec![Arc::new(identity_theta(m))],
            user_index: vec![0; k],
        }
    }

    pub fn from_per_user(thetas: Vec<CorrelationMatrix<T>>) -> Result<Self> {
        let m = thetas.first().map(|t| t.dim()).unwrap_or(0);
        if thetas.iter().any(|t| t.dim() != m) {
            return Err(Error::DimensionMismatch("correlation matrices differ in size".into()));
        }
        let k = thetas.len();
        Ok(Self {
            unique: thetas.into_iter().map(Arc::new).collect(),
            user_index: (0..k).collect(),
        })
    }

    pub fn m(&self) -> usize {
        self.unique[0].dim()
    }

    pub fn k(&self) -> usize {
        self.user_index.len()
    }

    pub fn user(&self, k: usize) -> &CorrelationMatrix<T> {
        &self.unique[self.user_index[k]]
    }

    /// Users mapped to each unique matrix.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.unique.len()];
        for (k, &u) in self.user_index.iter().enumerate() {
            g[u].push(k);
        }
        g
    }

    pub fn all_identity(&self) -> bool {
        self.unique.iter().all(|t| t.identity)
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.user_index == other.user_index
            && self.unique.len() == other.unique.len()
            && self.unique.iter().zip(&other.unique).all(|(a, b)| Arc::ptr_eq(a, b))
    }
}

/// Builds the one-ring set for `sectors`, computing each distinct matrix
/// once. The integrand is even in θ, so a sector and its mirror image about
/// broadside share a matrix.
pub fn one_ring_set<T: Real>(
    geometry: UlaGeometry,
    sectors: &[AngularSector],
    cache: Option<&ThetaCache>,
) -> Result<ThetaSet<T>> {
    let mut keys: HashMap<(i64, i64), usize> = HashMap::new();
    let mut distinct: Vec<AngularSector> = Vec::new();
    let mut user_index = Vec::with_capacity(sectors.len());
    for s in sectors {
        let c = s.canonical();
        let idx = *keys.entry(c.key()).or_insert_with(|| {
            distinct.push(c);
            distinct.len() - 1
        });
        user_index.push(idx);
    }
    let built: Vec<CorrelationMatrix<f64>> = distinct
        .par_iter()
        .map(|s| match cache {
            Some(c) => c.load_or_build(geometry, *s),
            None => build_one_ring_f64(geometry, *s),
        })
        .collect::<Result<_>>()?;
    Ok(ThetaSet {
        unique: built.into_iter().map(|t| Arc::new(t.cast())).collect(),
        user_index,
    })
}

/// Θ sets of the BS→relay and relay→user hops for a config. The hops share
/// one set unless distinct relay-hop sectors are configured.
pub fn theta_sets_for<T: Real>(
    cfg: &SystemConfig,
    cache: Option<&ThetaCache>,
) -> Result<(ThetaSet<T>, ThetaSet<T>)> {
    match &cfg.correlation_mode {
        CorrelationMode::Identity => {
            let s = ThetaSet::identity(cfg.m, cfg.k);
            Ok((s.clone(), s))
        }
        CorrelationMode::OneRing {
            spacing_wavelengths,
            spread_rad,
            sectors,
            sectors_rd,
        } => {
            let geometry = UlaGeometry::new(cfg.m, *spacing_wavelengths)?;
            let to_sectors = |list: &[SectorSpec]| -> Result<Vec<AngularSector>> {
                list.iter()
                    .map(|s| AngularSector::new(s.theta_min, s.theta_max))
                    .collect()
            };
            let sr_spec = sectors
                .clone()
                .unwrap_or_else(|| default_sectors(cfg.k, *spread_rad));
            let sr = one_ring_set(geometry, &to_sectors(&sr_spec)?, cache)?;
            let rd = match sectors_rd {
                Some(list) => one_ring_set(geometry, &to_sectors(list)?, cache)?,
                None => sr.clone(),
            };
            Ok((sr, rd))
        }
    }
}

const CACHE_MAGIC: &[u8; 8] = b"MMRTHETA";
const CACHE_VERSION: u32 = 1;

/// On-disk cache of one-ring matrices and their roots.
///
/// File layout, all little-endian: the 8-byte magic `MMRTHETA`, a `u32`
/// format version, `u64` M, `f64` spacing, `f64` θmin, `f64` θmax, then Θ and
/// Θ^{1/2} as column-major `(re, im)` `f64` pairs.
#[derive(Debug, Clone)]
pub struct ThetaCache {
    dir: PathBuf,
}

impl ThetaCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, geometry: UlaGeometry, sector: AngularSector) -> PathBuf {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for word in [
            geometry.spacing_wavelengths.to_bits(),
            sector.theta_min.to_bits(),
            sector.theta_max.to_bits(),
        ] {
            for b in word.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        self.dir.join(format!("theta_M{}_{h:016x}.bin", geometry.m))
    }

    pub fn load_or_build(
        &self,
        geometry: UlaGeometry,
        sector: AngularSector,
    ) -> Result<CorrelationMatrix<f64>> {
        let path = self.path_for(geometry, sector);
        if path.exists() {
            return read_cache_file(&path, geometry, sector);
        }
        let built = build_one_ring_f64(geometry, sector)?;
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        write_cache_file(&path, geometry, sector, &built)?;
        Ok(built)
    }
}

pub fn write_cache_file(
    path: &Path,
    geometry: UlaGeometry,
    sector: AngularSector,
    theta: &CorrelationMatrix<f64>,
) -> Result<()> {
    let m = geometry.m;
    let mut buf = Vec::with_capacity(44 + 32 * m * m);
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m as u64).to_le_bytes());
    for x in [geometry.spacing_wavelengths, sector.theta_min, sector.theta_max] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for mat in [&theta.theta, &theta.sqrt_theta] {
        for z in mat.iter() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_cache_file(
    path: &Path,
    geometry: UlaGeometry,
    sector: AngularSector,
) -> Result<CorrelationMatrix<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let m = geometry.m;
    let expected = 44 + 32 * m * m;
    if bytes.len() != expected {
        return Err(Error::Cache(format!(
            "{}: {} bytes, expected {expected}",
            path.display(),
            bytes.len()
        )));
    }
    if &bytes[..8] != CACHE_MAGIC {
        return Err(Error::Cache(format!("{}: bad magic", path.display())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(8) != CACHE_VERSION {
        return Err(Error::Cache(format!("{}: unsupported version", path.display())));
    }
    if u64_at(12) != m as u64
        || f64_at(20) != geometry.spacing_wavelengths
        || f64_at(28) != sector.theta_min
        || f64_at(36) != sector.theta_max
    {
        return Err(Error::Cache(format!("{}: header parameters differ", path.display())));
    }
    let read_matrix = |offset: usize| {
        let data: Vec<Complex<f64>> = (0..m * m)
            .map(|i| Complex::new(f64_at(offset + 16 * i), f64_at(offset + 16 * i + 8)))
            .collect();
        DMatrix::from_vec(m, m, data)
    };
    Ok(CorrelationMatrix {
        theta: read_matrix(44),
        sqrt_theta: read_matrix(44 + 16 * m * m),
        trace: m as f64,
        identity: false,
    })
}
