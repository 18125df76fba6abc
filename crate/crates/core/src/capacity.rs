//! Spectral efficiency of a MIMO matrix with equal power over the best `k`
//! streams and a capped, scaled Shannon rate per stream.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::MimoMatrix;
use crate::error::{Error, Result};

/// Thermal noise density at room temperature, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl LinkBudget {
    pub fn new(tx_power_dbm: f64, bandwidth_hz: f64, noise_figure_db: f64) -> Result<Self> {
        if !(bandwidth_hz > 0.0) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth_hz}")));
        }
        Ok(Self {
            tx_power_dbm,
            bandwidth_hz,
            noise_figure_db,
        })
    }

    pub fn tx_power_w(&self) -> f64 {
        10f64.powf(self.tx_power_dbm / 10.0) * 1e-3
    }

    /// `N₀`, W/Hz.
    pub fn noise_psd(&self) -> f64 {
        10f64.powf((THERMAL_NOISE_DBM_HZ + self.noise_figure_db) / 10.0) * 1e-3
    }

    /// `P / (N₀ B)`: the SNR of a unit-gain single stream.
    pub fn snr_scale(&self) -> f64 {
        self.tx_power_w() / (self.noise_psd() * self.bandwidth_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub alpha: f64,
    pub se_max: f64,
}

impl Default for RateModel {
    fn default() -> Self {
        Self { alpha: 0.6, se_max: 4.8 }
    }
}

impl RateModel {
    pub fn new(alpha: f64, se_max: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(se_max > 0.0) {
            return Err(Error::InvalidArgument(format!("bad rate model alpha={alpha} se_max={se_max}")));
        }
        Ok(Self { alpha, se_max })
    }

    pub fn rho(&self, snr: f64) -> Result<f64> {
        if snr < 0.0 || snr.is_nan() {
            return Err(Error::NegativeSnr(snr));
        }
        Ok((self.alpha * snr.ln_1p() / std::f64::consts::LN_2).min(self.se_max))
    }
}

/// `ρ` with the default constants.
pub fn rho(snr: f64) -> Result<f64> {
    RateModel::default().rho(snr)
}

/// Singular values, largest first.
pub fn singular_values(h: &DMatrix<Complex64>) -> Vec<f64> {
    if h.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = h.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Best equal-power split: `max_k Σ_{i≤k} ρ(s_i² P / (N₀ B k))`. Returns the
/// spectral efficiency and the number of streams that achieves it.
pub fn spectral_efficiency(singulars: &[f64], budget: &LinkBudget, model: &RateModel) -> (f64, usize) {
    let mut s = singulars.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let scale = budget.snr_scale();
    let mut best = (0.0, 1);
    for k in 1..=s.len() {
        let se: f64 = s[..k]
            .iter()
            .map(|si| model.rho(si * si * scale / k as f64).expect("SNR is non-negative"))
            .sum();
        if se > best.0 {
            best = (se, k);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRate {
    /// bit/s.
    pub rate: f64,
    /// bit/s/Hz.
    pub se_avg: f64,
    /// `(f, SE(f), streams)` at each sample frequency.
    pub samples: Vec<(f64, f64, usize)>,
}

/// Midpoints of `n` equal sub-bands of `[f0 − B/2, f0 + B/2]`.
pub fn band_frequencies(f0: f64, bandwidth: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| f0 - bandwidth / 2.0 + (i as f64 + 0.5) * bandwidth / n as f64)
        .collect()
}

/// Rate `R = ∫ SE(f) df` over the band by the midpoint rule, and `R / B`.
pub fn band_rate<F>(h_at: F, f0: f64, n_freq: usize, budget: &LinkBudget, model: &RateModel) -> Result<BandRate>
where
    F: Fn(f64) -> MimoMatrix + Sync,
{
    if n_freq == 0 {
        return Err(Error::InvalidArgument("n_freq must be at least 1".into()));
    }
    let b = budget.bandwidth_hz;
    let samples: Vec<(f64, f64, usize)> = band_frequencies(f0, b, n_freq)
        .into_par_iter()
        .map(|f| {
            let (se, k) = spectral_efficiency(&singular_values(&h_at(f).entries), budget, model);
            (f, se, k)
        })
        .collect();
    let rate = b / n_freq as f64 * samples.iter().map(|s| s.1).sum::<f64>();
    Ok(BandRate {
        rate,
        se_avg: rate / b,
        samples,
    })
}

/// `2D² / λ`.
pub fn rayleigh_distance(aperture: f64, wavelength: f64) -> Result<f64> {
    if !(aperture >= 0.0) || !(wavelength > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need aperture >= 0 and wavelength > 0, got {aperture}, {wavelength}"
        )));
    }
    Ok(2.0 * aperture * aperture / wavelength)
}
