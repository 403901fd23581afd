//! Peak fits on single sensor traces.
//!
//! A polarization line crossed perpendicularly produces a peak with the
//! shape of the derivative of a tanh step, i.e. `amp * sech^2((x - x0)/w)`
//! on a flat offset. The fit recovers the center, width, signed amplitude,
//! and offset, with uncertainties from the residual scatter.

use nalgebra::DMatrix;

use crate::error::FitError;
use crate::fit::lm::{fit_curve, Bounds, LmConfig};

/// Result of a single-trace peak fit.
#[derive(Debug, Clone)]
pub struct TanhFit {
    /// Peak position, in the units of `x`.
    pub center: f64,
    /// Width of the underlying tanh step (strictly positive).
    pub width: f64,
    /// Signed peak height relative to the offset.
    pub amplitude: f64,
    /// Flat background level.
    pub offset: f64,
    /// One-sigma uncertainty of `center`.
    pub center_sigma: f64,
    /// Covariance over `[center, width, amplitude, offset]`.
    pub covariance: DMatrix<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust noise scale: 1.4826 * median absolute deviation.
pub(crate) fn mad_sigma(y: &[f64]) -> (f64, f64) {
    let mut work = y.to_vec();
    let med = median(&mut work);
    let mut dev: Vec<f64> = y.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    (med, 1.4826 * mad)
}

/// Fit `amp * sech^2((x - x0)/w) + off` to one trace.
///
/// The trace must have at least 8 strictly increasing x samples. The peak
/// must rise at least three noise sigmas (from the MAD) above the median,
/// otherwise the trace is considered featureless.
pub fn fit_linecut(x: &[f64], y: &[f64]) -> Result<TanhFit, FitError> {
    fit_peak(x, y, None, None, false)
}

/// Peak fit for a cut where a line is already known to run nearby.
///
/// The MAD floor of [`fit_linecut`] misjudges windows the peak mostly
/// fills, because the median then sits on the peak itself. Here the
/// pre-fit gate is dropped and the feature test moves after the fit: the
/// amplitude must clear three of its own sigmas. Only the sign of
/// `amplitude_hint` is used; it resolves the peak-versus-dip ambiguity
/// that window-filling features create.
///
/// The model also carries a linear background term. Tracking windows are
/// cut out of maps where another line's flank may run underneath; fitting
/// the ramp jointly removes it without touching the peak. Subtracting a
/// baseline drawn through the window edges instead would clip the peak's
/// own shoulders and drag the center whenever the window sits off the
/// peak. The reported `offset` is the background level at the center.
pub fn fit_linecut_tracking(
    x: &[f64],
    y: &[f64],
    amplitude_hint: f64,
) -> Result<TanhFit, FitError> {
    if amplitude_hint == 0.0 || !amplitude_hint.is_finite() {
        return Err(FitError::InvalidInput(
            "amplitude hint must be finite and nonzero".into(),
        ));
    }
    fit_peak(x, y, Some(amplitude_hint.signum()), None, true)
}

/// Like [`fit_linecut_tracking`] but with the width frozen at the value
/// established on the neighboring cuts. The tracking windows are barely
/// wider than the peak, so the tails that pin down width and offset are
/// missing from the cut; left free, the width-amplitude-offset degeneracy
/// turns noise into runaway or non-converging fits. A symmetric peak's
/// center is insensitive to a modestly wrong width, and a line's width
/// varies slowly along the trace, so freezing it costs nothing where it
/// matters.
pub(crate) fn fit_linecut_seeded(
    x: &[f64],
    y: &[f64],
    amplitude_hint: f64,
    width_hint: f64,
) -> Result<TanhFit, FitError> {
    if amplitude_hint == 0.0 || !amplitude_hint.is_finite() {
        return Err(FitError::InvalidInput(
            "amplitude hint must be finite and nonzero".into(),
        ));
    }
    if !(width_hint > 0.0) || !width_hint.is_finite() {
        return Err(FitError::InvalidInput(
            "width hint must be finite and positive".into(),
        ));
    }
    fit_peak(x, y, Some(amplitude_hint.signum()), Some(width_hint), true)
}

fn fit_peak(
    x: &[f64],
    y: &[f64],
    tracking_sign: Option<f64>,
    width_hint: Option<f64>,
    with_ramp: bool,
) -> Result<TanhFit, FitError> {
    if x.len() != y.len() {
        return Err(FitError::InvalidInput(
            "x and y lengths do not match".into(),
        ));
    }
    if x.len() < 8 {
        return Err(FitError::InvalidInput(format!(
            "need at least 8 samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("non-finite samples".into()));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::InvalidInput(
            "x must be strictly increasing".into(),
        ));
    }

    let (med, sigma) = mad_sigma(y);
    // Largest deviation from the median, restricted to the expected
    // direction when tracking an established line.
    let score = |v: f64| match tracking_sign {
        Some(s) => s * (v - med),
        None => (v - med).abs(),
    };
    let mut peak_idx = 0;
    for (i, &v) in y.iter().enumerate() {
        if score(v) > score(y[peak_idx]) {
            peak_idx = i;
        }
    }
    let amp0 = y[peak_idx] - med;
    let gate_failed = match tracking_sign {
        Some(s) => s * amp0 <= 0.0,
        None => amp0 == 0.0 || amp0.abs() <= 3.0 * sigma,
    };
    if gate_failed {
        return Err(FitError::NoFeature(format!(
            "no peak above 3 sigma of the noise floor (peak {:.3e}, floor {:.3e})",
            amp0.abs(),
            3.0 * sigma
        )));
    }

    let span = x[x.len() - 1] - x[0];
    let step_min = x
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);

    // Width guess from the half-maximum crossings; sech^2 reaches half
    // height at 0.8814 widths from the center.
    let half = amp0 / 2.0;
    let crossed = |i: usize| (y[i] - med).abs() < half.abs();
    let mut left = None;
    for i in (0..peak_idx).rev() {
        if crossed(i) {
            left = Some(x[peak_idx] - x[i]);
            break;
        }
    }
    let mut right = None;
    for i in peak_idx + 1..x.len() {
        if crossed(i) {
            right = Some(x[i] - x[peak_idx]);
            break;
        }
    }
    let (amp_lo, amp_hi) = if amp0 > 0.0 {
        (0.0, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, 0.0)
    };

    // The ramp is anchored at the window midpoint so its coefficient stays
    // decoupled from the center.
    let x_mid = 0.5 * (x[0] + x[x.len() - 1]);

    if let Some(w) = width_hint {
        // Frozen width: fit center, amplitude, offset, and optional slope.
        let w = w.clamp(step_min, span);
        let mut p0 = vec![x[peak_idx], amp0, med];
        let mut lower = vec![x[0], amp_lo, f64::NEG_INFINITY];
        let mut upper = vec![x[x.len() - 1], amp_hi, f64::INFINITY];
        if with_ramp {
            p0.push(0.0);
            lower.push(f64::NEG_INFINITY);
            upper.push(f64::INFINITY);
        }
        let bounds = Bounds { lower, upper };
        let model = |xi: f64, p: &[f64]| {
            let u = (xi - p[0]) / w;
            let sech = 1.0 / u.cosh();
            let ramp = if p.len() > 3 { p[3] * (xi - x_mid) } else { 0.0 };
            p[1] * sech * sech + p[2] + ramp
        };
        let fit = fit_curve(x, y, None, model, &p0, Some(bounds), &LmConfig::default())?;

        if fit.params[1].abs() <= 3.0 * fit.sigma[1] {
            return Err(FitError::NoFeature(format!(
                "fitted amplitude {:.3e} not significant against sigma {:.3e}",
                fit.params[1], fit.sigma[1]
            )));
        }

        // Embed the covariance into the [center, width, amplitude, offset]
        // layout; the frozen width contributes zeros, the slope is dropped.
        let mut covariance = DMatrix::zeros(4, 4);
        let map = [0usize, 2, 3];
        for (i, &ci) in map.iter().enumerate() {
            for (j, &cj) in map.iter().enumerate() {
                covariance[(ci, cj)] = fit.covariance[(i, j)];
            }
        }
        return Ok(TanhFit {
            center: fit.params[0],
            width: w,
            amplitude: fit.params[1],
            offset: fit.params[2],
            center_sigma: fit.sigma[0],
            covariance,
        });
    }

    let w0 = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (l + r) / 0.8814,
        (Some(l), None) => l / 0.8814,
        (None, Some(r)) => r / 0.8814,
        (None, None) => span / 10.0,
    }
    .clamp(step_min, span);

    let mut p0 = vec![x[peak_idx], w0, amp0, med];
    let mut lower = vec![x[0], step_min / 4.0, amp_lo, f64::NEG_INFINITY];
    let mut upper = vec![x[x.len() - 1], 2.0 * span, amp_hi, f64::INFINITY];
    if with_ramp {
        p0.push(0.0);
        lower.push(f64::NEG_INFINITY);
        upper.push(f64::INFINITY);
    }
    let bounds = Bounds { lower, upper };

    let model = |xi: f64, p: &[f64]| {
        let u = (xi - p[0]) / p[1];
        let sech = 1.0 / u.cosh();
        let ramp = if p.len() > 4 { p[4] * (xi - x_mid) } else { 0.0 };
        p[2] * sech * sech + p[3] + ramp
    };
    let fit = fit_curve(x, y, None, model, &p0, Some(bounds), &LmConfig::default())?;

    if tracking_sign.is_some() && fit.params[2].abs() <= 3.0 * fit.sigma[2] {
        return Err(FitError::NoFeature(format!(
            "fitted amplitude {:.3e} not significant against sigma {:.3e}",
            fit.params[2], fit.sigma[2]
        )));
    }

    // The slope, when fitted, is dropped from the reported covariance.
    let mut covariance = DMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            covariance[(i, j)] = fit.covariance[(i, j)];
        }
    }
    Ok(TanhFit {
        center: fit.params[0],
        width: fit.params[1],
        amplitude: fit.params[2],
        offset: fit.params[3],
        center_sigma: fit.sigma[0],
        covariance,
    })
}
