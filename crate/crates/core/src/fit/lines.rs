//! Tracking polarization lines across a diagram.
//!
//! The left pair's line runs roughly vertically (its position in x moves
//! slowly with y), the right pair's line roughly horizontally. Each is
//! followed with windowed linecut fits: the first cut is fitted over the
//! full axis, subsequent cuts only inside a window around the previous
//! center. A jump larger than half the window truncates the trace instead
//! of silently following some other feature.
//!
//! Windowed fits carry a linear background term: where the two lines
//! cross, the other line runs underneath the cut as a slowly varying slope
//! that would otherwise drag the fitted center by several ueV. Near the
//! crossing that background is curved, not straight, and a few ueV of pull
//! survive; callers that know the underlying model can subtract the other
//! channel and retrace (see the curvature extraction).

use crate::diagram::DiagramGrid;
use crate::error::FitError;
use crate::fit::linecut::{fit_linecut, fit_linecut_seeded, fit_linecut_tracking, TanhFit};

/// A polarization line followed across the diagram.
#[derive(Debug, Clone, Default)]
pub struct LineTrace {
    /// Scan coordinate (the axis perpendicular to the fitted cuts).
    pub positions: Vec<f64>,
    /// Fitted line centers along the cut axis.
    pub centers: Vec<f64>,
    /// One-sigma uncertainties of the centers.
    pub center_sigmas: Vec<f64>,
    /// Fitted peak widths.
    pub widths: Vec<f64>,
    /// Fitted peak amplitudes (signed; dips are negative).
    pub amplitudes: Vec<f64>,
    /// Diagnostics, e.g. early truncation.
    pub warnings: Vec<String>,
}

impl LineTrace {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

fn track(
    cuts: impl Iterator<Item = (f64, Vec<f64>)>,
    cut_coords: &[f64],
    what: &str,
) -> Result<LineTrace, FitError> {
    let mut trace = LineTrace::default();
    let step = cut_coords[1] - cut_coords[0];
    let mut window: Option<(f64, f64)> = None; // (center, half width)
    let mut sign = 0.0;
    // Rolling median of recent widths, anchored to the width of the first
    // full-axis fit. A single noisy fit must not be able to shrink the next
    // window (narrow window -> worse fit -> narrower window is a feedback
    // loop that loses the line), and a run of them must not be able to
    // ratchet the reference far from the anchor.
    let mut recent_widths: Vec<f64> = Vec::new();
    let mut width_anchor = f64::NAN;
    let width_ref = |recent: &[f64], anchor: f64| -> f64 {
        let mut w = recent.to_vec();
        w.sort_by(f64::total_cmp);
        w[w.len() / 2].clamp(0.65 * anchor, 1.5 * anchor)
    };

    // Each window is fitted twice: with the width free and with it frozen
    // at the rolling reference. The free fit follows genuine width drift
    // along the line, but on a noisy cut the narrow window cannot pin the
    // width and the free fit falls apart; it is only trusted when its width
    // stays near the reference and its center is at least as well
    // determined as the frozen fit's.
    let fit_window = |center: f64, half: f64, sign: f64, width: f64, values: &[f64]| {
        let lo = cut_coords.partition_point(|&c| c < center - half);
        let hi = cut_coords.partition_point(|&c| c <= center + half);
        let (lo, hi) = widen_to_min_points(lo, hi, 8, cut_coords.len());
        let (xs, ys) = (&cut_coords[lo..hi], &values[lo..hi]);
        let free = fit_linecut_tracking(xs, ys, sign);
        let frozen = fit_linecut_seeded(xs, ys, sign, width);
        let plausible =
            |f: &TanhFit| f.width >= 0.75 * width && f.width <= 4.0 / 3.0 * width;
        match (free, frozen) {
            (Ok(f), Ok(z)) => {
                if plausible(&f) && f.center_sigma <= z.center_sigma {
                    Ok(f)
                } else {
                    Ok(z)
                }
            }
            (Ok(f), Err(_)) => Ok(f),
            (Err(_), Ok(z)) => Ok(z),
            (Err(e), Err(_)) => Err(e),
        }
    };

    for (position, values) in cuts {
        let fit: Result<TanhFit, FitError> = match window {
            None => fit_linecut(cut_coords, &values),
            // Refit with the window recentered on each answer until the
            // two agree. An off-center window puts the baseline edges at
            // different heights, which pulls the fitted center; left
            // uncorrected the pull compounds row over row into a lag.
            Some((center, half)) => {
                let w_ref = width_ref(&recent_widths, width_anchor);
                let mut at = center;
                let mut fit = fit_window(at, half, sign, w_ref, &values);
                for _ in 0..4 {
                    match &fit {
                        Ok(f) if (f.center - at).abs() > 0.25 * step.abs() => {
                            at = f.center;
                            match fit_window(at, half, sign, w_ref, &values) {
                                Ok(better) => fit = Ok(better),
                                Err(_) => break,
                            }
                        }
                        _ => break,
                    }
                }
                fit
            }
        };
        let fit = match fit {
            Ok(f) => f,
            Err(err) => {
                if trace.is_empty() {
                    return Err(FitError::NoFeature(format!(
                        "no {what} line found on the first cut: {err}"
                    )));
                }
                trace.warnings.push(format!(
                    "{what} line lost at coordinate {position}: {err}; trace truncated"
                ));
                break;
            }
        };

        if let Some((center, half)) = window {
            if (fit.center - center).abs() > 0.5 * half {
                trace.warnings.push(format!(
                    "{what} line jumped {:.3} at coordinate {position}, more than half \
                     the tracking window {:.3}; trace truncated",
                    (fit.center - center).abs(),
                    half
                ));
                break;
            }
        }

        // Keep the window tight: wide enough to hold the peak, narrow
        // enough that the other polarization line stays outside it. Center
        // it where the line is heading, not where it was: constant-velocity
        // prediction, with the velocity clamped so one noisy fit cannot
        // fling the window off the line.
        if width_anchor.is_nan() {
            width_anchor = fit.width;
        }
        recent_widths.push(fit.width);
        if recent_widths.len() > 7 {
            recent_widths.remove(0);
        }
        let half = (1.25 * width_ref(&recent_widths, width_anchor)).max(7.0 * step.abs());
        let velocity = match trace.centers.last() {
            Some(prev) => (fit.center - prev).clamp(-0.8 * step.abs(), 0.8 * step.abs()),
            None => 0.0,
        };
        window = Some((fit.center + velocity, half));
        sign = fit.amplitude;
        trace.positions.push(position);
        trace.centers.push(fit.center);
        trace.center_sigmas.push(fit.center_sigma);
        trace.widths.push(fit.width);
        trace.amplitudes.push(fit.amplitude);
    }

    if trace.is_empty() {
        return Err(FitError::NoFeature(format!("no {what} line found")));
    }
    Ok(trace)
}

fn widen_to_min_points(lo: usize, hi: usize, min: usize, len: usize) -> (usize, usize) {
    let mut lo = lo.min(len);
    let mut hi = hi.min(len);
    while hi - lo < min && (lo > 0 || hi < len) {
        if lo > 0 {
            lo -= 1;
        }
        if hi < len && hi - lo < min {
            hi += 1;
        }
    }
    (lo, hi)
}

/// Follow the left pair's line: one fit along x per grid row, scanned in y.
pub fn locate_left_line(grid: &DiagramGrid) -> Result<LineTrace, FitError> {
    let xs = grid.axis_x.values();
    let ys = grid.axis_y.values();
    let cuts = ys
        .iter()
        .enumerate()
        .map(|(iy, &y)| (y, grid.row(iy).to_vec()));
    track(cuts, &xs, "left")
}

/// Follow the right pair's line: one fit along y per grid column, scanned
/// in x.
pub fn locate_right_line(grid: &DiagramGrid) -> Result<LineTrace, FitError> {
    let xs = grid.axis_x.values();
    let ys = grid.axis_y.values();
    let cuts = xs
        .iter()
        .enumerate()
        .map(|(ix, &x)| (x, grid.column(ix)));
    track(cuts, &ys, "right")
}

/// Locate both polarization lines.
pub fn locate_polarization_lines(
    grid: &DiagramGrid,
) -> Result<(LineTrace, LineTrace), FitError> {
    Ok((locate_left_line(grid)?, locate_right_line(grid)?))
}

/// A line trace expressed in detuning units: scan positions, line centers,
/// and center uncertainties, all in ueV, sorted by ascending position.
#[derive(Debug, Clone)]
pub struct CenterSequence {
    pub positions: Vec<f64>,
    pub centers: Vec<f64>,
    pub sigmas: Vec<f64>,
}

fn affine_map(coords: &[f64], detunings: &[f64]) -> impl Fn(f64) -> f64 {
    let slope = (detunings[detunings.len() - 1] - detunings[0])
        / (coords[coords.len() - 1] - coords[0]);
    let (c0, d0) = (coords[0], detunings[0]);
    move |v: f64| d0 + slope * (v - c0)
}

fn convert_trace(
    trace: &LineTrace,
    map_pos: impl Fn(f64) -> f64,
    map_center: impl Fn(f64) -> f64,
    center_scale: f64,
) -> CenterSequence {
    let mut triples: Vec<(f64, f64, f64)> = trace
        .positions
        .iter()
        .zip(&trace.centers)
        .zip(&trace.center_sigmas)
        .map(|((&p, &c), &s)| (map_pos(p), map_center(c), s * center_scale.abs()))
        .collect();
    // Negative calibration slopes reverse the scan direction.
    triples.sort_by(|a, b| a.0.total_cmp(&b.0));
    CenterSequence {
        positions: triples.iter().map(|t| t.0).collect(),
        centers: triples.iter().map(|t| t.1).collect(),
        sigmas: triples.iter().map(|t| t.2).collect(),
    }
}

/// Express a left-line trace (scanned in y, fitted in x) in detunings.
pub fn left_trace_in_detunings(
    grid: &DiagramGrid,
    trace: &LineTrace,
) -> Result<CenterSequence, FitError> {
    let to_fit = |e| FitError::InvalidInput(format!("{e}"));
    let x_eps = grid.x_detunings().map_err(to_fit)?;
    let y_eps = grid.y_detunings().map_err(to_fit)?;
    let xs = grid.axis_x.values();
    let ys = grid.axis_y.values();
    let map_x = affine_map(&xs, &x_eps);
    let map_y = affine_map(&ys, &y_eps);
    let scale = (x_eps[x_eps.len() - 1] - x_eps[0]) / (xs[xs.len() - 1] - xs[0]);
    Ok(convert_trace(trace, map_y, map_x, scale))
}

/// Express a right-line trace (scanned in x, fitted in y) in detunings.
pub fn right_trace_in_detunings(
    grid: &DiagramGrid,
    trace: &LineTrace,
) -> Result<CenterSequence, FitError> {
    let to_fit = |e| FitError::InvalidInput(format!("{e}"));
    let x_eps = grid.x_detunings().map_err(to_fit)?;
    let y_eps = grid.y_detunings().map_err(to_fit)?;
    let xs = grid.axis_x.values();
    let ys = grid.axis_y.values();
    let map_x = affine_map(&xs, &x_eps);
    let map_y = affine_map(&ys, &y_eps);
    let scale = (y_eps[y_eps.len() - 1] - y_eps[0]) / (ys[ys.len() - 1] - ys[0]);
    Ok(convert_trace(trace, map_x, map_y, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{synthesize_polarization_diagram, Axis, SensorModel, UNIT_UEV};
    use crate::hamiltonian::TwoQubitParams;
    use crate::units::ghz_to_uev;

    fn params() -> TwoQubitParams {
        TwoQubitParams {
            eps_l: 0.0,
            eps_r: 0.0,
            t_l: ghz_to_uev(5.8),
            t_r: ghz_to_uev(7.0),
            g: ghz_to_uev(20.9),
            t_e: 0.155,
        }
    }

    fn diagram(noise: f64, seed: u64) -> DiagramGrid {
        let sensor = SensorModel {
            noise_sigma: noise,
            ..SensorModel::default()
        };
        synthesize_polarization_diagram(
            &params(),
            &sensor,
            Axis::new("eps_l", UNIT_UEV, -350.0, 430.0, 157).unwrap(),
            Axis::new("eps_r", UNIT_UEV, -350.0, 430.0, 157).unwrap(),
            None,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn left_line_steps_by_the_coupling() {
        let grid = diagram(0.0, 0);
        let trace = locate_left_line(&grid).unwrap();
        assert_eq!(trace.len(), grid.ny(), "clean line must span all rows");
        assert!(trace.warnings.is_empty());
        let first = trace.centers.first().unwrap();
        let last = trace.centers.last().unwrap();
        let g = params().g;
        assert!(first.abs() < 3.0, "low plateau should sit near 0: {first}");
        assert!((last - g).abs() < 3.0, "high plateau should sit near g: {last}");
    }

    #[test]
    fn right_line_mirrors_the_left() {
        let grid = diagram(0.0, 0);
        let (left, right) = locate_polarization_lines(&grid).unwrap();
        let g = params().g;
        assert!(right.len() >= grid.nx() - 1);
        let rise_left = left.centers.last().unwrap() - left.centers.first().unwrap();
        let rise_right = right.centers.last().unwrap() - right.centers.first().unwrap();
        assert!((rise_left - g).abs() < 3.0);
        assert!((rise_right - g).abs() < 3.0);
    }

    #[test]
    fn noisy_diagram_still_tracks() {
        let grid = diagram(0.002, 42);
        let trace = locate_left_line(&grid).unwrap();
        assert!(trace.len() > grid.ny() / 2, "kept {} rows", trace.len());
        let g = params().g;
        let rise = trace.centers.last().unwrap() - trace.centers.first().unwrap();
        assert!((rise - g).abs() < 6.0, "rise {rise} vs g {g}");
    }

    #[test]
    fn flat_rows_truncate_with_warning() {
        let mut grid = diagram(0.0, 0);
        let nx = grid.nx();
        let ny = grid.ny();
        for iy in ny / 2..ny {
            for ix in 0..nx {
                grid.values[iy * nx + ix] = 0.0;
            }
        }
        let trace = locate_left_line(&grid).unwrap();
        assert!(trace.len() <= ny / 2 + 1);
        assert!(
            trace.warnings.iter().any(|w| w.contains("truncated")),
            "expected truncation warning, got {:?}",
            trace.warnings
        );
    }

    #[test]
    fn featureless_grid_is_an_error() {
        let mut grid = diagram(0.0, 0);
        for v in &mut grid.values {
            *v = 0.125;
        }
        let err = locate_left_line(&grid).unwrap_err();
        assert!(matches!(err, FitError::NoFeature(_)));
    }
}
