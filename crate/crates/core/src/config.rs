//! Scenario parameters, unit conversions and the link budget.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable that overrides the configured RNG seed.
pub const SEED_ENV: &str = "MMRELAY_SEED";

/// Transmit power used when a config gives neither `P_dbm` nor `P_watts`.
pub const DEFAULT_POWER_DBM: f64 = 30.0;

/// Default sweep grid: −10 dBm to 70 dBm in 5 dB steps.
pub fn default_power_grid_dbm() -> Vec<f64> {
    (0..17).map(|i| -10.0 + 5.0 * i as f64).collect()
}

/// `10^((dBm − 30)/10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Thermal noise power over the band, in watts.
pub fn noise_power_watts(density_dbm_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "bandwidth_hz must be positive, got {bandwidth_hz}"
        )));
    }
    if !density_dbm_hz.is_finite() {
        return Err(Error::InvalidConfig("noise_density_dbm_hz must be finite".into()));
    }
    Ok(dbm_to_watts(density_dbm_hz) * bandwidth_hz)
}

/// Linear large-scale power gain `G / dⁿ`.
pub fn path_loss_linear_gain(distance_m: f64, g: f64, n: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    if !(g > 0.0) || !(n > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "path-loss constants must be positive, got G = {g}, n = {n}"
        )));
    }
    Ok(g / distance_m.powf(n))
}

/// Path loss `10·log10(dⁿ/G)` in dB.
pub fn path_loss_db(distance_m: f64, g: f64, n: f64) -> Result<f64> {
    Ok(-10.0 * path_loss_linear_gain(distance_m, g, n)?.log10())
}

/// Regularization rule `α = K / (10·M·ρ)`.
pub fn regularization_from_table(k: usize, m: usize, rho_linear: f64) -> f64 {
    k as f64 / (10.0 * m as f64 * rho_linear)
}

/// How ρ in the regularization rule is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSetting {
    Linear(f64),
    Rule(RhoRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoRule {
    /// ρ = P/N₀ at each power point.
    TransmitSnr,
}

/// Regularization of one hop: a fixed value or the tabulated rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Fixed(f64),
    Rule(AlphaRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// α = K/(10·M·ρ).
    Table,
}

/// Angular sector `[theta_min, theta_max]` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    pub theta_min: f64,
    pub theta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationMode {
    Identity,
    OneRing {
        #[serde(default = "default_spacing")]
        spacing_wavelengths: f64,
        /// Angular spread used for the default sectors.
        #[serde(default = "default_spread")]
        spread_rad: f64,
        /// Per-user sectors; defaults to evenly spaced centers.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sectors: Option<Vec<SectorSpec>>,
        /// Separate sectors for the relay-to-user hop.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sectors_rd: Option<Vec<SectorSpec>>,
    },
}

fn default_spacing() -> f64 {
    0.5
}

fn default_spread() -> f64 {
    PI / 6.0
}

/// Default per-user sectors: centers `−π/2 + π(k − ½)/K`, width `spread`.
pub fn default_sectors(k: usize, spread: f64) -> Vec<SectorSpec> {
    (1..=k)
        .map(|user| {
            let center = -PI / 2.0 + PI * (user as f64 - 0.5) / k as f64;
            SectorSpec {
                theta_min: center - spread / 2.0,
                theta_max: center + spread / 2.0,
            }
        })
        .collect()
}

/// How the AF end-to-end SINR treats sums over independent symbols and
/// relay noises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfTerms {
    /// Powers of independent terms add.
    #[default]
    Independent,
    /// Amplitudes are summed before squaring, as displayed in the closed form.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderRoute {
    /// K×K push-through inverse.
    #[default]
    Woodbury,
    /// Full M×M regularized inverse.
    Direct,
}

/// Ergodic averaging convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Average rates over trials.
    #[default]
    Rate,
    /// Average SINRs over trials, then take the rate.
    Sinr,
}

/// Per-user power split at BS and relay, as fractions of P.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerAllocation {
    pub source: Vec<f64>,
    pub relay: Vec<f64>,
}

/// All scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P_dbm", default, skip_serializing_if = "Option::is_none")]
    pub p_dbm: Option<f64>,
    #[serde(rename = "P_watts", default, skip_serializing_if = "Option::is_none")]
    pub p_watts: Option<f64>,
    #[serde(default = "default_noise_density")]
    pub noise_density_dbm_hz: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default)]
    pub tau_sr: f64,
    #[serde(default)]
    pub tau_rd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_sr_per_user: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_rd_per_user: Option<Vec<f64>>,
    #[serde(default = "default_d_sr")]
    pub d_sr_m: f64,
    #[serde(default = "default_d_rd")]
    pub d_rd_m: f64,
    #[serde(rename = "pathloss_G", default = "default_pathloss_g")]
    pub pathloss_g: f64,
    #[serde(default = "default_pathloss_n")]
    pub pathloss_n: f64,
    #[serde(default = "default_alpha")]
    pub alpha1: AlphaSetting,
    #[serde(default = "default_alpha")]
    pub alpha2: AlphaSetting,
    #[serde(default = "default_rho")]
    pub rho_linear: RhoSetting,
    #[serde(default = "default_correlation")]
    pub correlation_mode: CorrelationMode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_power_grid_dbm")]
    pub power_grid_dbm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_allocation: Option<PowerAllocation>,
    #[serde(default)]
    pub af_terms: AfTerms,
    #[serde(default)]
    pub precoder_route: PrecoderRoute,
    #[serde(default)]
    pub averaging: Averaging,
}

fn default_noise_density() -> f64 {
    -174.0
}
fn default_bandwidth() -> f64 {
    10e6
}
fn default_d_sr() -> f64 {
    2500.0
}
fn default_d_rd() -> f64 {
    1500.0
}
fn default_pathloss_g() -> f64 {
    0.029512
}
fn default_pathloss_n() -> f64 {
    3.76
}
fn default_alpha() -> AlphaSetting {
    AlphaSetting::Rule(AlphaRule::Table)
}
fn default_rho() -> RhoSetting {
    RhoSetting::Rule(RhoRule::TransmitSnr)
}
fn default_correlation() -> CorrelationMode {
    CorrelationMode::Identity
}
fn default_trials() -> usize {
    100
}
fn default_seed() -> u64 {
    1
}

impl SystemConfig {
    /// A config with every optional key at its default.
    pub fn new(m: usize, k: usize) -> Self {
        Self {
            m,
            k,
            p_dbm: Some(DEFAULT_POWER_DBM),
            p_watts: None,
            noise_density_dbm_hz: default_noise_density(),
            bandwidth_hz: default_bandwidth(),
            tau_sr: 0.0,
            tau_rd: 0.0,
            tau_sr_per_user: None,
            tau_rd_per_user: None,
            d_sr_m: default_d_sr(),
            d_rd_m: default_d_rd(),
            pathloss_g: default_pathloss_g(),
            pathloss_n: default_pathloss_n(),
            alpha1: default_alpha(),
            alpha2: default_alpha(),
            rho_linear: default_rho(),
            correlation_mode: default_correlation(),
            trials: default_trials(),
            seed: default_seed(),
            power_grid_dbm: default_power_grid_dbm(),
            power_allocation: None,
            af_terms: AfTerms::default(),
            precoder_route: PrecoderRoute::default(),
            averaging: Averaging::default(),
        }
    }

    /// Fills defaults that depend on other keys.
    fn normalize(&mut self) {
        if self.p_dbm.is_none() && self.p_watts.is_none() {
            self.p_dbm = Some(DEFAULT_POWER_DBM);
        }
    }

    /// Checks every invariant, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k < 1 {
            return fail("K ≥ 1 violated".into());
        }
        if self.m < self.k {
            return fail(format!("M ≥ K violated (M = {}, K = {})", self.m, self.k));
        }
        match (self.p_dbm, self.p_watts) {
            (None, None) => return fail("one of P_dbm or P_watts is required".into()),
            (Some(dbm), Some(w)) => {
                if !dbm.is_finite() || !(w > 0.0) {
                    return fail("transmit power must be positive and finite".into());
                }
                if (dbm_to_watts(dbm) - w).abs() > 1e-9 * w {
                    return fail(format!("P_dbm = {dbm} and P_watts = {w} disagree"));
                }
            }
            (Some(dbm), None) => {
                if !dbm.is_finite() {
                    return fail("P_dbm must be finite".into());
                }
            }
            (None, Some(w)) => {
                if !(w > 0.0) || !w.is_finite() {
                    return fail(format!("P_watts must be positive, got {w}"));
                }
            }
        }
        noise_power_watts(self.noise_density_dbm_hz, self.bandwidth_hz)?;
        path_loss_linear_gain(self.d_sr_m, self.pathloss_g, self.pathloss_n)?;
        path_loss_linear_gain(self.d_rd_m, self.pathloss_g, self.pathloss_n)?;
        for (name, tau) in [("tau_sr", self.tau_sr), ("tau_rd", self.tau_rd)] {
            if !(0.0..=1.0).contains(&tau) {
                return fail(format!("{name} ∈ [0, 1] violated ({tau})"));
            }
        }
        for (name, taus) in [
            ("tau_sr_per_user", &self.tau_sr_per_user),
            ("tau_rd_per_user", &self.tau_rd_per_user),
        ] {
            if let Some(v) = taus {
                if v.len() != self.k {
                    return fail(format!("{name} must have K = {} entries", self.k));
                }
                if let Some(t) = v.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                    return fail(format!("{name} ∈ [0, 1] violated ({t})"));
                }
            }
        }
        for (name, alpha) in [("alpha1", self.alpha1), ("alpha2", self.alpha2)] {
            if let AlphaSetting::Fixed(a) = alpha {
                if !(a > 0.0) || !a.is_finite() {
                    return fail(format!("{name} > 0 violated ({a})"));
                }
            }
        }
        if let RhoSetting::Linear(r) = self.rho_linear {
            if !(r > 0.0) || !r.is_finite() {
                return fail(format!("rho_linear > 0 violated ({r})"));
            }
        }
        if let CorrelationMode::OneRing {
            spacing_wavelengths,
            spread_rad,
            sectors,
            sectors_rd,
        } = &self.correlation_mode
        {
            if !(*spacing_wavelengths > 0.0) || !spacing_wavelengths.is_finite() {
                return fail("spacing_wavelengths > 0 violated".into());
            }
            if !(*spread_rad > 0.0) || *spread_rad > 2.0 * PI {
                return fail("spread_rad ∈ (0, 2π] violated".into());
            }
            for list in [sectors, sectors_rd].into_iter().flatten() {
                if list.len() != self.k {
                    return fail(format!("sector list must have K = {} entries", self.k));
                }
                for s in list {
                    if !(s.theta_max > s.theta_min) || s.theta_max - s.theta_min > 2.0 * PI {
                        return fail(format!(
                            "sector [{}, {}] must satisfy θmin < θmax ≤ θmin + 2π",
                            s.theta_min, s.theta_max
                        ));
                    }
                }
            }
        }
        if self.trials < 1 {
            return fail("trials ≥ 1 violated".into());
        }
        if self.power_grid_dbm.iter().any(|p| !p.is_finite()) {
            return fail("power_grid_dbm entries must be finite".into());
        }
        if let Some(alloc) = &self.power_allocation {
            for (name, v) in [("source", &alloc.source), ("relay", &alloc.relay)] {
                if v.len() != self.k {
                    return fail(format!("power_allocation.{name} must have K entries"));
                }
                if v.iter().any(|x| !(*x >= 0.0)) {
                    return fail(format!("power_allocation.{name} must be nonnegative"));
                }
                let total: f64 = v.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return fail(format!("power_allocation.{name} must sum to 1 (got {total})"));
                }
            }
        }
        Ok(())
    }

    /// Transmit power P in watts.
    pub fn power_watts(&self) -> f64 {
        match (self.p_watts, self.p_dbm) {
            (Some(w), _) => w,
            (None, Some(dbm)) => dbm_to_watts(dbm),
            (None, None) => dbm_to_watts(DEFAULT_POWER_DBM),
        }
    }

    /// Copy of the config operating at power `dbm`.
    pub fn with_power_dbm(&self, dbm: f64) -> Self {
        let mut c = self.clone();
        c.p_dbm = Some(dbm);
        c.p_watts = None;
        c
    }

    pub fn noise_watts(&self) -> Result<f64> {
        noise_power_watts(self.noise_density_dbm_hz, self.bandwidth_hz)
    }

    pub fn tau_sr_vec(&self) -> Vec<f64> {
        self.tau_sr_per_user
            .clone()
            .unwrap_or_else(|| vec![self.tau_sr; self.k])
    }

    pub fn tau_rd_vec(&self) -> Vec<f64> {
        self.tau_rd_per_user
            .clone()
            .unwrap_or_else(|| vec![self.tau_rd; self.k])
    }

    /// Evaluates all power-dependent quantities at the configured P.
    pub fn link_budget(&self) -> Result<LinkBudget> {
        self.validate()?;
        let p = self.power_watts();
        let n0 = self.noise_watts()?;
        let rho = match self.rho_linear {
            RhoSetting::Linear(r) => r,
            RhoSetting::Rule(RhoRule::TransmitSnr) => p / n0,
        };
        let alpha = |s: AlphaSetting| match s {
            AlphaSetting::Fixed(a) => a,
            AlphaSetting::Rule(AlphaRule::Table) => regularization_from_table(self.k, self.m, rho),
        };
        let (src, rel) = match &self.power_allocation {
            Some(a) => (a.source.clone(), a.relay.clone()),
            None => (vec![1.0 / self.k as f64; self.k], vec![1.0 / self.k as f64; self.k]),
        };
        Ok(LinkBudget {
            p_watts: p,
            noise_watts: n0,
            gain_sr: path_loss_linear_gain(self.d_sr_m, self.pathloss_g, self.pathloss_n)?,
            gain_rd: path_loss_linear_gain(self.d_rd_m, self.pathloss_g, self.pathloss_n)?,
            rho,
            alpha1: alpha(self.alpha1),
            alpha2: alpha(self.alpha2),
            p_source: src.iter().map(|f| f * p).collect(),
            p_relay: rel.iter().map(|f| f * p).collect(),
        })
    }

    /// Stable 64-bit FNV-1a hash of the canonical JSON form, as hex.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Power-point quantities derived from a [`SystemConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub p_watts: f64,
    pub noise_watts: f64,
    pub gain_sr: f64,
    pub gain_rd: f64,
    pub rho: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Per-user BS powers `p_{s,k}` in watts.
    pub p_source: Vec<f64>,
    /// Per-user relay powers `p_{r,k}` in watts.
    pub p_relay: Vec<f64>,
}

/// Parses and validates a JSON config document.
pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let mut cfg: SystemConfig =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.normalize();
    cfg.validate()?;
    Ok(cfg)
}

/// Replaces the seed when `value` holds a decimal or `0x` hex integer.
pub fn apply_seed_override(cfg: &mut SystemConfig, value: Option<&str>) -> Result<()> {
    if let Some(v) = value {
        let v = v.trim();
        let parsed = match v.strip_prefix("0x") {
            Some(hex) => u64::from_str_radix(hex, 16),
            None => v.parse::<u64>(),
        };
        cfg.seed = parsed
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV} is not a u64: {v:?}")))?;
    }
    Ok(())
}

/// Reads, validates and applies the `MMRELAY_SEED` override.
pub fn load_config(path: impl AsRef<Path>) -> Result<SystemConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    apply_seed_override(&mut cfg, std::env::var(SEED_ENV).ok().as_deref())?;
    Ok(cfg)
}

pub fn save_config(cfg: &SystemConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(cfg).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
