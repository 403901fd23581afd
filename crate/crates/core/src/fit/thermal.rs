//! Lever-arm and electron-temperature calibration from thermal broadening.
//!
//! An isolated pair's polarization transition has tanh width
//! `w_V = 2 k_B T_eff / alpha` in gate voltage, where `alpha` converts the
//! swept gate to detuning and the effective temperature collects the
//! cryostat temperature and a saturation electron temperature in
//! quadrature, `T_eff = sqrt(T^2 + T_e^2)`. Widths measured against
//! cryostat temperature on both pairs therefore pin down both lever arms
//! and `T_e` at once, with the two pairs tied together by the measured
//! ratio of the line shifts (both shifts equal the same coupling energy,
//! so the voltage ratio is the inverse lever-arm ratio).

use nalgebra::DMatrix;

use crate::error::FitError;
use crate::fit::lm::{least_squares, Bounds, LmConfig};
use crate::units::{kelvin_to_uev, uev_to_ghz, BOLTZMANN_UEV_PER_K};

/// Transition widths of one pair against cryostat temperature.
#[derive(Debug, Clone)]
pub struct ThermalSeries {
    pub temps_kelvin: Vec<f64>,
    /// Tanh width of the transition in gate voltage, mV.
    pub widths_mv: Vec<f64>,
}

/// Joint calibration input: one width series per pair plus the ratio of
/// the right-line shift to the left-line shift in their own gate voltages,
/// `dV_R / dV_L = alpha_L / alpha_R`.
#[derive(Debug, Clone)]
pub struct ThermalBroadeningData {
    pub left: ThermalSeries,
    pub right: ThermalSeries,
    pub shift_ratio: f64,
}

/// Calibration result: lever arms in ueV/mV, temperature in kelvin.
#[derive(Debug, Clone)]
pub struct ThermalCalibration {
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub t_e: f64,
    pub alpha_l_sigma: f64,
    pub alpha_r_sigma: f64,
    pub t_e_sigma: f64,
    /// Saturation thermal energy restated in GHz.
    pub thermal_energy_ghz: f64,
    /// Covariance over the fitted `[alpha_l, t_e]`.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
}

fn check_series(s: &ThermalSeries, name: &str) -> Result<(), FitError> {
    if s.temps_kelvin.len() != s.widths_mv.len() {
        return Err(FitError::InvalidInput(format!(
            "{name} series length mismatch"
        )));
    }
    if s.temps_kelvin.len() < 4 {
        return Err(FitError::InvalidInput(format!(
            "{name} series has {} points, need at least 4",
            s.temps_kelvin.len()
        )));
    }
    if s.temps_kelvin.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(FitError::InvalidInput(format!(
            "{name} series temperatures must be positive"
        )));
    }
    if s.temps_kelvin.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::InvalidInput(format!(
            "{name} series temperatures must be strictly increasing"
        )));
    }
    if s.widths_mv.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(FitError::InvalidInput(format!(
            "{name} series widths must be positive"
        )));
    }
    Ok(())
}

fn width_model(t: f64, alpha: f64, t_e: f64) -> f64 {
    2.0 * BOLTZMANN_UEV_PER_K / alpha * (t * t + t_e * t_e).sqrt()
}

/// Fit `[alpha_l, t_e]` to both width series; `alpha_r` follows from the
/// shift ratio.
pub fn fit_thermal_broadening(
    data: &ThermalBroadeningData,
) -> Result<ThermalCalibration, FitError> {
    check_series(&data.left, "left")?;
    check_series(&data.right, "right")?;
    if !(data.shift_ratio > 0.0) || !data.shift_ratio.is_finite() {
        return Err(FitError::InvalidInput(format!(
            "shift ratio must be positive, got {}",
            data.shift_ratio
        )));
    }

    // Start from the hottest left point (width ~ linear in T there) and
    // read T_e back off the coldest one.
    let n = data.left.temps_kelvin.len();
    let (t_hi, w_hi) = (data.left.temps_kelvin[n - 1], data.left.widths_mv[n - 1]);
    let (t_lo, w_lo) = (data.left.temps_kelvin[0], data.left.widths_mv[0]);
    let alpha0 = 2.0 * BOLTZMANN_UEV_PER_K * t_hi / w_hi;
    let t_eff_lo = w_lo * alpha0 / (2.0 * BOLTZMANN_UEV_PER_K);
    let te0 = (t_eff_lo * t_eff_lo - t_lo * t_lo).max(0.0625 * t_lo * t_lo).sqrt();

    let ratio = data.shift_ratio;
    let residuals = |p: &[f64]| -> Vec<f64> {
        let (alpha_l, t_e) = (p[0], p[1]);
        let alpha_r = alpha_l / ratio;
        let mut r = Vec::with_capacity(
            data.left.temps_kelvin.len() + data.right.temps_kelvin.len(),
        );
        for (&t, &w) in data.left.temps_kelvin.iter().zip(&data.left.widths_mv) {
            r.push(width_model(t, alpha_l, t_e) - w);
        }
        for (&t, &w) in data.right.temps_kelvin.iter().zip(&data.right.widths_mv) {
            r.push(width_model(t, alpha_r, t_e) - w);
        }
        r
    };

    let bounds = Bounds {
        lower: vec![1e-9, 0.0],
        upper: vec![f64::INFINITY, f64::INFINITY],
    };
    let fit = least_squares(residuals, &[alpha0, te0], Some(bounds), &LmConfig::default())?;

    let (alpha_l, t_e) = (fit.params[0], fit.params[1]);
    Ok(ThermalCalibration {
        alpha_l,
        alpha_r: alpha_l / ratio,
        t_e,
        alpha_l_sigma: fit.sigma[0],
        alpha_r_sigma: fit.sigma[0] / ratio,
        t_e_sigma: fit.sigma[1],
        thermal_energy_ghz: uev_to_ghz(kelvin_to_uev(t_e)),
        covariance: fit.covariance,
        residual_norm: fit.residual_norm,
    })
}
