//! Urban-macro propagation at mmWave: LOS probability, path loss, shadowing,
//! small-scale fading, SINR and capped Shannon spectral efficiency.
//!
//! Path-loss and LOS-probability closed forms follow 3GPP TR 38.901 UMa
//! (Tables 7.4.1-1 and 7.4.2-1) for UE heights up to 13 m, where the
//! effective environment height is 1 m.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 3.0e8;
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
/// Upper end of the UMa path-loss validity range.
pub const MAX_D2D_M: f64 = 5000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("2-D distance {0} m is outside the UMa validity range")]
    OutOfValidity(f64),
    #[error("allocation bandwidth must be positive")]
    EmptyAllocation,
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub fc_ghz: f64,
    pub ue_height_m: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
    pub rician_k_db: f64,
    /// d2d is clamped up to this before evaluating path loss.
    pub min_d2d_m: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            fc_ghz: 28.0,
            ue_height_m: 1.5,
            shadow_sigma_los_db: 4.0,
            shadow_sigma_nlos_db: 6.0,
            rician_k_db: 9.0,
            min_d2d_m: 10.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.5..=100.0).contains(&self.fc_ghz) {
            return Err(ChannelError::InvalidConfig("fc_ghz must lie in [0.5, 100]".into()));
        }
        if !(self.ue_height_m > 1.0 && self.ue_height_m <= 13.0) {
            return Err(ChannelError::InvalidConfig("ue_height_m must lie in (1, 13]".into()));
        }
        if !(self.shadow_sigma_los_db >= 0.0 && self.shadow_sigma_nlos_db >= 0.0) {
            return Err(ChannelError::InvalidConfig("shadow sigmas must be non-negative".into()));
        }
        if !self.rician_k_db.is_finite() || !(self.min_d2d_m >= 0.0) {
            return Err(ChannelError::InvalidConfig("rician_k_db / min_d2d_m out of range".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkGeometry {
    pub d2d_m: f64,
    pub h_bs_m: f64,
    pub h_ut_m: f64,
    pub fc_ghz: f64,
}

impl LinkGeometry {
    pub fn new(d2d_m: f64, h_bs_m: f64, h_ut_m: f64, fc_ghz: f64) -> Self {
        Self { d2d_m, h_bs_m, h_ut_m, fc_ghz }
    }

    pub fn d3d_m(&self) -> f64 {
        self.d2d_m.hypot(self.h_bs_m - self.h_ut_m)
    }

    /// Effective breakpoint distance d'BP with h_E = 1 m.
    pub fn breakpoint_m(&self) -> f64 {
        4.0 * (self.h_bs_m - 1.0) * (self.h_ut_m - 1.0) * self.fc_ghz * 1e9 / SPEED_OF_LIGHT
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelRealization {
    pub los: bool,
    pub path_loss_db: f64,
    pub shadow_db: f64,
    pub fast_fade_db: f64,
}

impl ChannelRealization {
    /// Net large-scale plus small-scale gain, in dB (negative).
    pub fn gain_db(&self) -> f64 {
        -self.path_loss_db - self.shadow_db + self.fast_fade_db
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub antenna_gain_db: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub prb_count: u32,
    pub subcarrier_spacing_hz: f64,
    pub se_cap: f64,
    /// Attenuation of interfering RUs' beams relative to the serving beam.
    pub sidelobe_rejection_db: f64,
    /// Below this SINR no modulation and coding scheme is usable.
    pub min_sinr_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 35.0,
            antenna_gain_db: 8.0,
            noise_figure_db: 9.0,
            bandwidth_hz: 4.0e8,
            prb_count: 264,
            subcarrier_spacing_hz: 120e3,
            se_cap: 7.8,
            sidelobe_rejection_db: 20.0,
            min_sinr_db: -10.0,
        }
    }
}

impl RadioConfig {
    pub fn prb_bandwidth_hz(&self) -> f64 {
        12.0 * self.subcarrier_spacing_hz
    }

    /// Transmit power per PRB with the RU power spread evenly over the grid.
    pub fn tx_power_per_prb_dbm(&self) -> f64 {
        self.tx_power_dbm - 10.0 * (self.prb_count as f64).log10()
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.prb_count == 0 {
            return Err(ChannelError::InvalidConfig("prb_count must be at least 1".into()));
        }
        if !(self.bandwidth_hz > 0.0 && self.subcarrier_spacing_hz > 0.0) {
            return Err(ChannelError::InvalidConfig("bandwidths must be positive".into()));
        }
        if self.prb_count as f64 * self.prb_bandwidth_hz() > self.bandwidth_hz + 1e-6 {
            return Err(ChannelError::InvalidConfig(format!(
                "{} PRBs of {} Hz exceed {} Hz",
                self.prb_count,
                self.prb_bandwidth_hz(),
                self.bandwidth_hz
            )));
        }
        if !(self.se_cap > 0.0) {
            return Err(ChannelError::InvalidConfig("se_cap must be positive".into()));
        }
        if self.min_sinr_db.is_nan() {
            return Err(ChannelError::InvalidConfig("min_sinr_db must be a number".into()));
        }
        if !(self.sidelobe_rejection_db >= 0.0 && self.sidelobe_rejection_db.is_finite()) {
            return Err(ChannelError::InvalidConfig("sidelobe_rejection_db must be non-negative".into()));
        }
        if !(self.tx_power_dbm.is_finite() && self.antenna_gain_db.is_finite() && self.noise_figure_db.is_finite()) {
            return Err(ChannelError::InvalidConfig("power terms must be finite".into()));
        }
        Ok(())
    }
}

/// UMa LOS probability for UE heights up to 13 m.
pub fn los_probability(d2d_m: f64, _h_ut_m: f64) -> f64 {
    if d2d_m <= 18.0 {
        1.0
    } else {
        18.0 / d2d_m + (-d2d_m / 63.0).exp() * (1.0 - 18.0 / d2d_m)
    }
}

fn pl_los_db(d3d: f64, geom: &LinkGeometry) -> f64 {
    let bp = geom.breakpoint_m();
    let f = 20.0 * geom.fc_ghz.log10();
    if geom.d2d_m <= bp {
        28.0 + 22.0 * d3d.log10() + f
    } else {
        let dh = geom.h_bs_m - geom.h_ut_m;
        28.0 + 40.0 * d3d.log10() + f - 9.0 * (bp * bp + dh * dh).log10()
    }
}

/// UMa path loss in dB. `geom.d2d_m` is used as given; see [`clamped`] for
/// the simulator's 10 m floor.
pub fn path_loss_db(geom: &LinkGeometry, los: bool) -> Result<f64, ChannelError> {
    if !(geom.d2d_m >= 0.0) || geom.d2d_m > MAX_D2D_M {
        return Err(ChannelError::OutOfValidity(geom.d2d_m));
    }
    let d3d = geom.d3d_m();
    let los_pl = pl_los_db(d3d, geom);
    if los {
        return Ok(los_pl);
    }
    let nlos = 13.54 + 39.08 * d3d.log10() + 20.0 * geom.fc_ghz.log10() - 0.6 * (geom.h_ut_m - 1.5);
    Ok(los_pl.max(nlos))
}

/// Copy of `geom` with d2d raised to at least `min_d2d_m`.
pub fn clamped(geom: &LinkGeometry, min_d2d_m: f64) -> LinkGeometry {
    LinkGeometry { d2d_m: geom.d2d_m.max(min_d2d_m), ..*geom }
}

/// Small-scale power gain in dB: Rician with factor `k_db` for LOS,
/// Rayleigh otherwise. Unit mean power in linear terms.
pub fn fast_fade_db<R: Rng + ?Sized>(los: bool, k_db: f64, rng: &mut R) -> f64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    let diffuse = (re * re + im * im) / 2.0;
    let gain = if los {
        let k = 10f64.powf(k_db / 10.0);
        let spec = (k / (k + 1.0)).sqrt();
        let scale = (1.0 / (2.0 * (k + 1.0))).sqrt();
        let (x, y) = (spec + scale * re, scale * im);
        x * x + y * y
    } else {
        diffuse
    };
    10.0 * gain.max(1e-300).log10()
}

/// Draw LOS state, shadowing and fast fading for one link.
pub fn draw_realization<R: Rng + ?Sized>(
    geom: &LinkGeometry,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    let geom = clamped(geom, cfg.min_d2d_m);
    let los = rng.random::<f64>() < los_probability(geom.d2d_m, geom.h_ut_m);
    let path_loss_db = path_loss_db(&geom, los)?;
    let sigma = if los { cfg.shadow_sigma_los_db } else { cfg.shadow_sigma_nlos_db };
    let shadow_db = Normal::new(0.0, sigma)
        .map_err(|e| ChannelError::InvalidConfig(e.to_string()))?
        .sample(rng);
    let fast_fade_db = fast_fade_db(los, cfg.rician_k_db, rng);
    Ok(ChannelRealization { los, path_loss_db, shadow_db, fast_fade_db })
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Thermal noise over `bandwidth_hz` plus the receiver noise figure.
pub fn noise_power_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Power an RU delivers to a UE across `alloc_bandwidth_hz`, its transmit
/// power being spread evenly over the whole PRB grid.
pub fn received_power_dbm(link: &ChannelRealization, radio: &RadioConfig, alloc_bandwidth_hz: f64) -> f64 {
    let grid_hz = radio.prb_count as f64 * radio.prb_bandwidth_hz();
    radio.tx_power_dbm + 10.0 * (alloc_bandwidth_hz / grid_hz).log10() + radio.antenna_gain_db + link.gain_db()
}

/// An interfering RU as seen by the victim UE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interferer {
    pub link: ChannelRealization,
    /// Fraction of the interferer's power falling on the victim's PRBs,
    /// relative to a full-buffer transmission on them.
    pub power_share: f64,
}

pub fn sinr_db(
    serving: &ChannelRealization,
    radio: &RadioConfig,
    interferers: &[Interferer],
    alloc_bandwidth_hz: f64,
) -> Result<f64, ChannelError> {
    if !(alloc_bandwidth_hz > 0.0) {
        return Err(ChannelError::EmptyAllocation);
    }
    let s = db_to_linear(received_power_dbm(serving, radio, alloc_bandwidth_hz));
    let n = db_to_linear(noise_power_dbm(alloc_bandwidth_hz, radio.noise_figure_db));
    let i: f64 = interferers
        .iter()
        .map(|x| x.power_share * db_to_linear(received_power_dbm(&x.link, radio, alloc_bandwidth_hz)))
        .sum();
    Ok(linear_to_db(s / (n + i)))
}

/// Shannon spectral efficiency, capped.
pub fn spectral_efficiency(sinr_db: f64, cap: f64) -> f64 {
    (1.0 + db_to_linear(sinr_db)).log2().min(cap).max(0.0)
}

/// Usable spectral efficiency of a link: capped Shannon, zero in outage.
pub fn link_spectral_efficiency(sinr_db: f64, radio: &RadioConfig) -> f64 {
    if sinr_db < radio.min_sinr_db {
        0.0
    } else {
        spectral_efficiency(sinr_db, radio.se_cap)
    }
}
