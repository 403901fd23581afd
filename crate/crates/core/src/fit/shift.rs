//! Coupling extraction from the shift of one polarization line.
//!
//! As the opposing pair repolarizes, a pair's line shifts by exactly the
//! mutual coupling. Tracking the left line across the right pair's detuning
//! gives an S-shaped center sequence whose plateau-to-plateau height is the
//! coupling `g`.

use nalgebra::DMatrix;

use crate::diagram::DiagramGrid;
use crate::error::FitError;
use crate::fit::lines::{left_trace_in_detunings, locate_left_line};
use crate::fit::lm::{fit_curve, Bounds, LmConfig};
use crate::units::uev_to_ghz;

/// Tanh fit of a line-center sequence.
#[derive(Debug, Clone)]
pub struct ShiftCurveFit {
    /// Step height = mutual coupling, in the center units (ueV when fed
    /// through [`extract_g`]).
    pub g: f64,
    /// One-sigma uncertainty of `g`.
    pub g_sigma: f64,
    /// Coupling restated in GHz; only meaningful when `g` is in ueV.
    pub g_ghz: f64,
    /// Scan coordinate of the step midpoint.
    pub center: f64,
    /// Step width along the scan coordinate.
    pub width: f64,
    /// Mean of the two plateaus.
    pub baseline: f64,
    /// Covariance over `[baseline, height, center, width]`.
    pub covariance: DMatrix<f64>,
    /// Set when the height is consistent with zero within two sigmas.
    pub low_confidence: bool,
    /// Diagnostics inherited from the line tracking stage.
    pub warnings: Vec<String>,
}

/// Fit `c + (a/2) tanh((s - s0)/w)` to a center sequence and read the
/// coupling off the step height `|a|`.
pub fn fit_shift_curve(
    positions: &[f64],
    centers: &[f64],
    sigmas: Option<&[f64]>,
) -> Result<ShiftCurveFit, FitError> {
    if positions.len() != centers.len() {
        return Err(FitError::InvalidInput(
            "positions and centers lengths differ".into(),
        ));
    }
    if let Some(s) = sigmas {
        if s.len() != positions.len() {
            return Err(FitError::InvalidInput("sigma length differs".into()));
        }
    }
    if positions.len() < 8 {
        return Err(FitError::InvalidInput(format!(
            "need at least 8 tracked centers, got {}",
            positions.len()
        )));
    }
    if positions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::InvalidInput(
            "positions must be strictly increasing".into(),
        ));
    }

    let n = positions.len();
    let span = positions[n - 1] - positions[0];
    let edge = (n / 5).max(2);
    let lo_plateau: f64 = centers[..edge].iter().sum::<f64>() / edge as f64;
    let hi_plateau: f64 = centers[n - edge..].iter().sum::<f64>() / edge as f64;
    let a0 = hi_plateau - lo_plateau;
    let c0 = 0.5 * (hi_plateau + lo_plateau);
    let s0 = positions[centers
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (*a - c0).abs().total_cmp(&(*b - c0).abs()))
        .map(|(i, _)| i)
        .unwrap_or(n / 2)];
    let p0 = [c0, a0, s0, span / 8.0];

    // Fitted center positions carry almost no scatter on clean synthetic
    // data; a small absolute floor keeps the weights finite without
    // distorting noisy fits.
    let floor = 1e-6 * span.abs().max(1.0);
    let sig_eff: Option<Vec<f64>> = sigmas.map(|s| s.iter().map(|v| v + floor).collect());

    let model = |s: f64, p: &[f64]| p[0] + 0.5 * p[1] * ((s - p[2]) / p[3]).tanh();
    let bounds = Bounds {
        lower: vec![
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
            positions[0] - span,
            1e-9 * span,
        ],
        upper: vec![
            f64::INFINITY,
            f64::INFINITY,
            positions[n - 1] + span,
            10.0 * span,
        ],
    };
    let fit = fit_curve(
        positions,
        centers,
        sig_eff.as_deref(),
        model,
        &p0,
        Some(bounds),
        &LmConfig::default(),
    )?;

    let height = fit.params[1];
    let g = height.abs();
    let g_sigma = fit.sigma[1];
    Ok(ShiftCurveFit {
        g,
        g_sigma,
        g_ghz: uev_to_ghz(g),
        center: fit.params[2],
        width: fit.params[3].abs(),
        baseline: fit.params[0],
        covariance: fit.covariance,
        low_confidence: g < 2.0 * g_sigma,
        warnings: Vec::new(),
    })
}

/// Full pipeline from a polarization diagram to the coupling: track the
/// left line row by row, express the track in detuning units, and fit the
/// step. All energies in ueV.
pub fn extract_g(grid: &DiagramGrid) -> Result<ShiftCurveFit, FitError> {
    let trace = locate_left_line(grid)?;
    let seq = left_trace_in_detunings(grid, &trace)?;
    let mut fit = fit_shift_curve(&seq.positions, &seq.centers, Some(&seq.sigmas))?;
    fit.warnings = trace.warnings;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{synthesize_polarization_diagram, Axis, SensorModel, UNIT_UEV};
    use crate::hamiltonian::TwoQubitParams;
    use crate::units::ghz_to_uev;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_clean_tanh_step() {
        let positions: Vec<f64> = (0..60).map(|i| -150.0 + i as f64 * 5.0).collect();
        let centers: Vec<f64> = positions
            .iter()
            .map(|&s| 3.0 + 0.5 * 86.4 * ((s - 10.0) / 25.0).tanh())
            .collect();
        let fit = fit_shift_curve(&positions, &centers, None).unwrap();
        assert_relative_eq!(fit.g, 86.4, max_relative = 1e-6);
        assert_relative_eq!(fit.center, 10.0, max_relative = 1e-4);
        assert_relative_eq!(fit.width, 25.0, max_relative = 1e-4);
        assert!(!fit.low_confidence);
    }

    #[test]
    fn flags_zero_coupling_as_low_confidence() {
        // Centers that never move: the fitted height must be consistent
        // with zero and flagged.
        let positions: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let wiggle = [0.013, -0.008, 0.021, -0.017, 0.005, -0.011, 0.009, -0.002];
        let centers: Vec<f64> = positions
            .iter()
            .enumerate()
            .map(|(i, _)| 5.0 + wiggle[i % wiggle.len()])
            .collect();
        let fit = fit_shift_curve(&positions, &centers, None).unwrap();
        assert!(
            fit.low_confidence,
            "g = {} +- {} should be low confidence",
            fit.g, fit.g_sigma
        );
    }

    #[test]
    fn end_to_end_coupling_from_clean_diagram() {
        let p = TwoQubitParams {
            eps_l: 0.0,
            eps_r: 0.0,
            t_l: ghz_to_uev(3.0),
            t_r: ghz_to_uev(3.5),
            g: ghz_to_uev(28.4),
            t_e: 0.155,
        };
        let grid = synthesize_polarization_diagram(
            &p,
            &SensorModel::default(),
            Axis::new("eps_l", UNIT_UEV, -350.0, 450.0, 161).unwrap(),
            Axis::new("eps_r", UNIT_UEV, -350.0, 450.0, 161).unwrap(),
            None,
            0,
        )
        .unwrap();
        let fit = extract_g(&grid).unwrap();
        assert!(
            (fit.g_ghz - 28.4).abs() < 0.5,
            "recovered {} GHz, expected 28.4",
            fit.g_ghz
        );
        assert!(!fit.low_confidence);
    }

    #[test]
    fn rejects_short_sequences() {
        let positions = vec![0.0, 1.0, 2.0, 3.0];
        let centers = vec![0.0, 0.1, 0.2, 0.3];
        assert!(matches!(
            fit_shift_curve(&positions, &centers, None),
            Err(FitError::InvalidInput(_))
        ));
    }
}
