//! Charging-energy extraction from honeycomb stability maps.
//!
//! A honeycomb map stores the gradient magnitude of the sensed charge, so
//! every charge transition is a bright ridge. Within a user-chosen window
//! a single ridge is located row by row (or column by column), a straight
//! line is fitted through the ridge points, and energies follow from ridge
//! separations scaled by lever arms:
//!
//! * the spacing of two consecutive transitions of a dot along its own
//!   gate is that dot's charging energy,
//! * the sideways jump of a transition as the neighbouring dot changes
//!   occupancy is the mutual charging energy of the pair.

use nalgebra::DMatrix;

use crate::diagram::DiagramGrid;
use crate::electrostatics::LeverArmSet;
use crate::error::FitError;
use crate::fit::linecut::mad_sigma;
use crate::fit::lm::{fit_curve, LmConfig};

/// Axis-aligned region of a map, in the grid's axis units (mV).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    fn validate(&self) -> Result<(), FitError> {
        let vals = [self.x_min, self.x_max, self.y_min, self.y_max];
        if vals.iter().any(|v| !v.is_finite()) || self.x_min >= self.x_max || self.y_min >= self.y_max
        {
            return Err(FitError::InvalidInput(format!(
                "degenerate window [{}, {}] x [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        Ok(())
    }

    fn contains_x(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    fn contains_y(&self, y: f64) -> bool {
        y >= self.y_min && y <= self.y_max
    }
}

/// Which coordinate the ridge position is read off at each sweep step:
/// `X` walks rows and finds the ridge's x, `Y` walks columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadAxis {
    X,
    Y,
}

/// Straight-line fit through ridge points: `position = a + b * sweep`.
#[derive(Debug, Clone)]
pub struct TransitionLine {
    pub intercept: f64,
    pub slope: f64,
    /// Covariance over `[intercept, slope]`.
    pub covariance: DMatrix<f64>,
    pub read_axis: ReadAxis,
    /// Number of ridge points behind the fit.
    pub n_peaks: usize,
    /// Sweep-coordinate range the ridge was sampled over.
    pub sweep_range: (f64, f64),
}

impl TransitionLine {
    /// Ridge position at sweep coordinate `t`.
    pub fn position_at(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }

    /// One-sigma prediction uncertainty of the fitted line at `t`.
    pub fn position_sigma_at(&self, t: f64) -> f64 {
        let c = &self.covariance;
        (c[(0, 0)] + t * t * c[(1, 1)] + 2.0 * t * c[(0, 1)]).max(0.0).sqrt()
    }
}

/// Ridge point in one cut: centroid-refined position of the in-window
/// maximum, or None when no sample clears the noise floor.
fn ridge_point(coords: &[f64], values: &[f64], floor: f64) -> Option<(f64, f64)> {
    let (i_max, &v_max) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if v_max <= floor {
        return None;
    }
    // Centroid over +-2 pixels sharpens the estimate below one pixel.
    let lo = i_max.saturating_sub(2);
    let hi = (i_max + 2).min(values.len() - 1);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in lo..=hi {
        let w = (values[i] - floor).max(0.0);
        num += w * coords[i];
        den += w;
    }
    if den <= 0.0 {
        return None;
    }
    let step = if coords.len() > 1 {
        (coords[coords.len() - 1] - coords[0]).abs() / (coords.len() - 1) as f64
    } else {
        1.0
    };
    Some((num / den, 0.5 * step))
}

/// Locate one transition ridge inside `window` and fit a line through it.
pub fn fit_transition_line(
    grid: &DiagramGrid,
    window: &Window,
    read_axis: ReadAxis,
) -> Result<TransitionLine, FitError> {
    window.validate()?;
    let xs = grid.axis_x.values();
    let ys = grid.axis_y.values();
    let x_idx: Vec<usize> = (0..xs.len()).filter(|&i| window.contains_x(xs[i])).collect();
    let y_idx: Vec<usize> = (0..ys.len()).filter(|&i| window.contains_y(ys[i])).collect();
    if x_idx.len() < 3 || y_idx.len() < 3 {
        return Err(FitError::InvalidInput(format!(
            "window covers only {} x {} grid points",
            x_idx.len(),
            y_idx.len()
        )));
    }

    // Noise floor from the whole windowed patch, plus a small fraction of
    // the map's dynamic range so that near-flat residue between distant
    // ridges never counts as a feature.
    let mut patch = Vec::with_capacity(x_idx.len() * y_idx.len());
    for &iy in &y_idx {
        for &ix in &x_idx {
            patch.push(grid.value(ix, iy));
        }
    }
    let (med, sig) = mad_sigma(&patch);
    let (lo, hi) = grid
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let floor = med + 3.0 * sig + 1e-3 * (hi - lo);

    let mut sweeps = Vec::new();
    let mut centers = Vec::new();
    let mut sigmas = Vec::new();
    match read_axis {
        ReadAxis::X => {
            let coords: Vec<f64> = x_idx.iter().map(|&i| xs[i]).collect();
            for &iy in &y_idx {
                let vals: Vec<f64> = x_idx.iter().map(|&ix| grid.value(ix, iy)).collect();
                if let Some((c, s)) = ridge_point(&coords, &vals, floor) {
                    sweeps.push(ys[iy]);
                    centers.push(c);
                    sigmas.push(s);
                }
            }
        }
        ReadAxis::Y => {
            let coords: Vec<f64> = y_idx.iter().map(|&i| ys[i]).collect();
            for &ix in &x_idx {
                let vals: Vec<f64> = y_idx.iter().map(|&iy| grid.value(ix, iy)).collect();
                if let Some((c, s)) = ridge_point(&coords, &vals, floor) {
                    sweeps.push(xs[ix]);
                    centers.push(c);
                    sigmas.push(s);
                }
            }
        }
    }
    if sweeps.len() < 5 {
        return Err(FitError::NoFeature(format!(
            "only {} ridge points above the noise floor in the window",
            sweeps.len()
        )));
    }

    let fit = fit_curve(
        &sweeps,
        &centers,
        Some(&sigmas),
        |t, p| p[0] + p[1] * t,
        &[centers[0], 0.0],
        None,
        &LmConfig::default(),
    )?;
    Ok(TransitionLine {
        intercept: fit.params[0],
        slope: fit.params[1],
        covariance: fit.covariance,
        read_axis,
        n_peaks: sweeps.len(),
        sweep_range: (
            sweeps.iter().cloned().fold(f64::INFINITY, f64::min),
            sweeps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ),
    })
}

/// Signed separation of two parallel ridges, evaluated midway between the
/// two sampled sweep ranges so that slanted lines are compared at a common
/// coordinate. Returns `(b - a, sigma)`.
pub fn line_separation(a: &TransitionLine, b: &TransitionLine) -> Result<(f64, f64), FitError> {
    if a.read_axis != b.read_axis {
        return Err(FitError::InvalidInput(
            "cannot compare ridges read along different axes".into(),
        ));
    }
    let mid_a = 0.5 * (a.sweep_range.0 + a.sweep_range.1);
    let mid_b = 0.5 * (b.sweep_range.0 + b.sweep_range.1);
    let t = 0.5 * (mid_a + mid_b);
    let delta = b.position_at(t) - a.position_at(t);
    let sigma = (a.position_sigma_at(t).powi(2) + b.position_sigma_at(t).powi(2)).sqrt();
    Ok((delta, sigma))
}

/// Measurement plan for one adjacent pair of dots on one honeycomb map.
///
/// `dot_x` is swept by the map's x gate, `dot_y` by the y gate. Each
/// window pair must isolate a single ridge per window:
///
/// * `spacing_x`: two consecutive `dot_x` transitions, same y band,
/// * `spacing_y`: two consecutive `dot_y` transitions, same x band,
/// * `offset_x`: one `dot_x` transition below and above a `dot_y`
///   transition,
/// * `offset_y`: one `dot_y` transition left and right of a `dot_x`
///   transition.
#[derive(Debug, Clone)]
pub struct PairPlan {
    pub dot_x: usize,
    pub dot_y: usize,
    pub gate_x: usize,
    pub gate_y: usize,
    pub spacing_x: (Window, Window),
    pub spacing_y: (Window, Window),
    pub offset_x: (Window, Window),
    pub offset_y: (Window, Window),
}

/// Energies recovered from one honeycomb map, all in ueV.
#[derive(Debug, Clone)]
pub struct PairEnergies {
    /// Charging energy of the x-swept dot.
    pub e_c_x: f64,
    pub e_c_x_sigma: f64,
    /// Charging energy of the y-swept dot.
    pub e_c_y: f64,
    pub e_c_y_sigma: f64,
    /// Mutual charging energy, averaged from the x and y readings.
    pub e_cc: f64,
    pub e_cc_sigma: f64,
    pub warnings: Vec<String>,
}

/// Extract one pair's energies from its honeycomb map.
///
/// `lever_rel_sigma` is the relative uncertainty of the lever arms, folded
/// into every energy error bar.
pub fn extract_pair_energies(
    grid: &DiagramGrid,
    plan: &PairPlan,
    lever: &LeverArmSet,
    lever_rel_sigma: f64,
) -> Result<PairEnergies, FitError> {
    for d in [plan.dot_x, plan.dot_y, plan.gate_x, plan.gate_y] {
        if d > 3 {
            return Err(FitError::InvalidInput(format!(
                "dot/gate indices must be 0..=3, got {d}"
            )));
        }
    }
    if !(0.0..1.0).contains(&lever_rel_sigma) {
        return Err(FitError::InvalidInput(format!(
            "lever-arm relative sigma must be in [0, 1), got {lever_rel_sigma}"
        )));
    }
    let alpha_x = lever.alpha[plan.dot_x][plan.gate_x];
    let alpha_y = lever.alpha[plan.dot_y][plan.gate_y];
    if alpha_x <= 0.0 || alpha_y <= 0.0 {
        return Err(FitError::InvalidInput(
            "own-gate lever arms must be positive".into(),
        ));
    }

    let energy = |delta_mv: f64, sigma_mv: f64, alpha: f64| -> (f64, f64) {
        let e = alpha * delta_mv.abs();
        let s = ((alpha * sigma_mv).powi(2) + (e * lever_rel_sigma).powi(2)).sqrt();
        (e, s)
    };

    let pair_sep = |w: &(Window, Window), axis: ReadAxis| -> Result<(f64, f64), FitError> {
        let a = fit_transition_line(grid, &w.0, axis)?;
        let b = fit_transition_line(grid, &w.1, axis)?;
        line_separation(&a, &b)
    };

    let (dx, dx_sig) = pair_sep(&plan.spacing_x, ReadAxis::X)?;
    let (dy, dy_sig) = pair_sep(&plan.spacing_y, ReadAxis::Y)?;
    let (ox, ox_sig) = pair_sep(&plan.offset_x, ReadAxis::X)?;
    let (oy, oy_sig) = pair_sep(&plan.offset_y, ReadAxis::Y)?;

    let (e_c_x, e_c_x_sigma) = energy(dx, dx_sig, alpha_x);
    let (e_c_y, e_c_y_sigma) = energy(dy, dy_sig, alpha_y);
    let (em_x, em_x_sig) = energy(ox, ox_sig, alpha_x);
    let (em_y, em_y_sig) = energy(oy, oy_sig, alpha_y);

    let e_cc = 0.5 * (em_x + em_y);
    let e_cc_sigma = 0.5 * (em_x_sig.powi(2) + em_y_sig.powi(2)).sqrt();
    let mut warnings = Vec::new();
    let disagreement = (em_x - em_y).abs();
    let gate = 3.0 * (em_x_sig.powi(2) + em_y_sig.powi(2)).sqrt();
    if disagreement > gate {
        warnings.push(format!(
            "mutual-energy readings disagree: {em_x:.1} vs {em_y:.1} ueV"
        ));
    }
    Ok(PairEnergies {
        e_c_x,
        e_c_x_sigma,
        e_c_y,
        e_c_y_sigma,
        e_cc,
        e_cc_sigma,
        warnings,
    })
}

/// All charging and mutual energies of the array, in ueV.
#[derive(Debug, Clone)]
pub struct EnergyTable {
    pub e_c: [f64; 4],
    pub e_c_sigma: [f64; 4],
    pub e_cc: [f64; 3],
    pub e_cc_sigma: [f64; 3],
    pub warnings: Vec<String>,
}

/// Combine the three adjacent-pair maps into the full energy table. Plans
/// must cover pairs (0,1), (1,2), (2,3) in order; the inner dots are
/// measured twice and averaged.
pub fn extract_energies(
    grids: &[DiagramGrid; 3],
    plans: &[PairPlan; 3],
    lever: &LeverArmSet,
    lever_rel_sigma: f64,
) -> Result<EnergyTable, FitError> {
    for (k, plan) in plans.iter().enumerate() {
        if plan.dot_x != k || plan.dot_y != k + 1 {
            return Err(FitError::InvalidInput(format!(
                "plan {k} must measure dots ({k}, {}), got ({}, {})",
                k + 1,
                plan.dot_x,
                plan.dot_y
            )));
        }
    }
    let p01 = extract_pair_energies(&grids[0], &plans[0], lever, lever_rel_sigma)?;
    let p12 = extract_pair_energies(&grids[1], &plans[1], lever, lever_rel_sigma)?;
    let p23 = extract_pair_energies(&grids[2], &plans[2], lever, lever_rel_sigma)?;

    let avg = |a: (f64, f64), b: (f64, f64)| -> (f64, f64) {
        (0.5 * (a.0 + b.0), 0.5 * (a.1.powi(2) + b.1.powi(2)).sqrt())
    };
    let (e_c2, s2) = avg((p01.e_c_y, p01.e_c_y_sigma), (p12.e_c_x, p12.e_c_x_sigma));
    let (e_c3, s3) = avg((p12.e_c_y, p12.e_c_y_sigma), (p23.e_c_x, p23.e_c_x_sigma));

    let mut warnings = p01.warnings;
    warnings.extend(p12.warnings);
    warnings.extend(p23.warnings);
    Ok(EnergyTable {
        e_c: [p01.e_c_x, e_c2, e_c3, p23.e_c_y],
        e_c_sigma: [p01.e_c_x_sigma, s2, s3, p23.e_c_y_sigma],
        e_cc: [p01.e_cc, p12.e_cc, p23.e_cc],
        e_cc_sigma: [p01.e_cc_sigma, p12.e_cc_sigma, p23.e_cc_sigma],
        warnings,
    })
}
