//! Joint fit of both polarization lines against the full two-qubit model.
//!
//! The shift-curve fit in [`crate::fit::shift`] only reads the step height,
//! so it works when thermal broadening dominates. When the tunnel couplings
//! are comparable to or larger than `k_B T_e` they round the S-curve, and
//! the rounding of each line encodes the *other* pair's tunnel coupling.
//! Fitting both tracked lines at once against the exact thermal line
//! locations therefore recovers `t_l`, `t_r`, and `g` together.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;

use crate::diagram::{synthesize_polarization_diagram, DiagramGrid, SensorModel};
use crate::error::FitError;
use crate::fit::lines::{
    left_trace_in_detunings, locate_left_line, locate_polarization_lines, locate_right_line,
    right_trace_in_detunings, CenterSequence, LineTrace,
};
use crate::fit::lm::{least_squares, Bounds, LmConfig};
use crate::fit::shift::fit_shift_curve;
use crate::hamiltonian::{polarization_line_location, Side, TwoQubitParams};
use crate::units::{uev_to_ghz, BOLTZMANN_UEV_PER_K};

/// Result of the joint two-line fit. Energies in ueV with GHz restatements.
#[derive(Debug, Clone)]
pub struct HamiltonianFit {
    pub t_l: f64,
    pub t_r: f64,
    pub g: f64,
    pub t_l_sigma: f64,
    pub t_r_sigma: f64,
    pub g_sigma: f64,
    pub t_l_ghz: f64,
    pub t_r_ghz: f64,
    pub g_ghz: f64,
    /// Covariance over `[t_l, t_r, g]`.
    pub covariance: DMatrix<f64>,
    /// Euclidean norm of the weighted residuals at the solution.
    pub residual_norm: f64,
    /// Set when the fitted coupling sits below the grid's energy step, in
    /// which case the value is an upper bound rather than a measurement.
    pub t_l_resolution_limited: bool,
    pub t_r_resolution_limited: bool,
    /// Diagnostics inherited from the tracking stage.
    pub warnings: Vec<String>,
}

fn check_sequence(seq: &CenterSequence, name: &str) -> Result<(), FitError> {
    if seq.positions.len() != seq.centers.len() || seq.positions.len() != seq.sigmas.len() {
        return Err(FitError::InvalidInput(format!(
            "{name} sequence arrays have mismatched lengths"
        )));
    }
    if seq.positions.len() < 8 {
        return Err(FitError::InvalidInput(format!(
            "{name} sequence has {} points, need at least 8",
            seq.positions.len()
        )));
    }
    let all = seq
        .positions
        .iter()
        .chain(&seq.centers)
        .chain(&seq.sigmas);
    if all.into_iter().any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput(format!(
            "{name} sequence contains non-finite values"
        )));
    }
    Ok(())
}

fn span(seq: &CenterSequence) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &p in &seq.positions {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    hi - lo
}

/// Starting tunnel coupling from a tanh pre-fit: the step width collects
/// thermal and quantum broadening roughly in quadrature.
fn initial_t(width: f64, kt: f64, floor: f64) -> f64 {
    let quantum_sq = width * width - (2.0 * kt) * (2.0 * kt);
    (0.5 * quantum_sq.max(0.0).sqrt()).max(floor)
}

/// Fit `[t_l, t_r, g]` to two tracked line-center sequences.
///
/// `left` holds the left line's centers against the right-pair detuning,
/// `right` the mirror image. `t_e` is the electron temperature in kelvin
/// and `resolution` the grid energy step in ueV, used both as a floor for
/// the starting guesses and to flag couplings too small to resolve.
/// `init` overrides the automatic starting point.
pub fn fit_hamiltonian_curvature(
    left: &CenterSequence,
    right: &CenterSequence,
    t_e: f64,
    init: Option<[f64; 3]>,
    resolution: f64,
) -> Result<HamiltonianFit, FitError> {
    check_sequence(left, "left")?;
    check_sequence(right, "right")?;
    if !(t_e > 0.0) || !t_e.is_finite() {
        return Err(FitError::InvalidInput(format!(
            "electron temperature must be positive, got {t_e}"
        )));
    }
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(FitError::InvalidInput(format!(
            "resolution must be positive, got {resolution}"
        )));
    }

    let w = span(left).max(span(right));
    let kt = BOLTZMANN_UEV_PER_K * t_e;
    let p0 = match init {
        Some(p) => p.to_vec(),
        None => {
            // The pre-fits only seed the search; on pathological traces
            // they can stray past the coupling bounds, so clamp them in.
            let pre_l = fit_shift_curve(&left.positions, &left.centers, None)?;
            let pre_r = fit_shift_curve(&right.positions, &right.centers, None)?;
            let g0 = 0.5 * (pre_l.g + pre_r.g);
            vec![
                initial_t(pre_r.width, kt, resolution).min(w),
                initial_t(pre_l.width, kt, resolution).min(w),
                g0.max(resolution).min(w),
            ]
        }
    };
    let bounds = Bounds {
        lower: vec![0.0; 3],
        upper: vec![2.0 * w; 3],
    };

    // Tracked centers on clean synthetic data carry vanishing formal
    // errors; an absolute floor keeps the weights finite.
    let floor = 1e-3;
    let sig_l: Vec<f64> = left.sigmas.iter().map(|s| s + floor).collect();
    let sig_r: Vec<f64> = right.sigmas.iter().map(|s| s + floor).collect();

    let residuals = |p: &[f64]| -> Vec<f64> {
        let params = TwoQubitParams {
            eps_l: 0.0,
            eps_r: 0.0,
            t_l: p[0],
            t_r: p[1],
            g: p[2],
            t_e,
        };
        let side_res = |side: Side, seq: &CenterSequence, sig: &[f64]| -> Vec<f64> {
            seq.positions
                .par_iter()
                .zip(&seq.centers)
                .zip(sig)
                .map(|((&pos, &center), &s)| {
                    match polarization_line_location(&params, side, pos) {
                        Ok(x) => (x - center) / s,
                        Err(_) => f64::NAN,
                    }
                })
                .collect()
        };
        let mut r = side_res(Side::Left, left, &sig_l);
        r.extend(side_res(Side::Right, right, &sig_r));
        r
    };

    let fit = least_squares(residuals, &p0, Some(bounds), &LmConfig::default())?;
    Ok(HamiltonianFit {
        t_l: fit.params[0],
        t_r: fit.params[1],
        g: fit.params[2],
        t_l_sigma: fit.sigma[0],
        t_r_sigma: fit.sigma[1],
        g_sigma: fit.sigma[2],
        t_l_ghz: uev_to_ghz(fit.params[0]),
        t_r_ghz: uev_to_ghz(fit.params[1]),
        g_ghz: uev_to_ghz(fit.params[2]),
        covariance: fit.covariance,
        residual_norm: fit.residual_norm,
        t_l_resolution_limited: fit.params[0] < resolution,
        t_r_resolution_limited: fit.params[1] < resolution,
        warnings: Vec::new(),
    })
}

/// Best-fit gains and offset for `v ~ a*l + b*r + c` over all pixels.
fn decompose_channels(v: &[f64], l: &[f64], r: &[f64]) -> Result<(f64, f64, f64), FitError> {
    let n = v.len() as f64;
    let (mut ll, mut lr, mut rr) = (0.0, 0.0, 0.0);
    let (mut sl, mut sr, mut sv) = (0.0, 0.0, 0.0);
    let (mut vl, mut vr) = (0.0, 0.0);
    for i in 0..v.len() {
        ll += l[i] * l[i];
        lr += l[i] * r[i];
        rr += r[i] * r[i];
        sl += l[i];
        sr += r[i];
        sv += v[i];
        vl += v[i] * l[i];
        vr += v[i] * r[i];
    }
    let m = Matrix3::new(ll, lr, sl, lr, rr, sr, sl, sr, n);
    let rhs = Vector3::new(vl, vr, sv);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| FitError::InvalidInput("channel decomposition is singular".into()))?;
    Ok((sol[0], sol[1], sol[2]))
}

/// Retrace both lines on copies of the diagram with the *other* channel's
/// model contribution removed. Near the crossing each line rides on the
/// other's curved background, which pulls windowed fits by a few ueV; with
/// approximate couplings in hand the background can be synthesized and
/// subtracted instead of merely flattened.
fn retrace_without_cross_channel(
    grid: &DiagramGrid,
    params: &TwoQubitParams,
) -> Result<(LineTrace, LineTrace), FitError> {
    let to_fit = |e| FitError::InvalidInput(format!("{e}"));
    let channel = |beta_l: f64, beta_r: f64| -> Result<DiagramGrid, FitError> {
        synthesize_polarization_diagram(
            params,
            &SensorModel {
                beta_l,
                beta_r,
                sens_l: 1.0,
                sens_r: 1.0,
                background: 0.0,
                noise_sigma: 0.0,
            },
            grid.axis_x.clone(),
            grid.axis_y.clone(),
            grid.meta.calibration.clone(),
            0,
        )
        .map_err(to_fit)
    };
    let field_l = channel(1.0, 0.0)?;
    let field_r = channel(0.0, 1.0)?;
    let (a, b, c) = decompose_channels(&grid.values, &field_l.values, &field_r.values)?;

    let mut left_view = grid.clone();
    for (v, r) in left_view.values.iter_mut().zip(&field_r.values) {
        *v -= b * r + c;
    }
    let mut right_view = grid.clone();
    for (v, l) in right_view.values.iter_mut().zip(&field_l.values) {
        *v -= a * l + c;
    }
    Ok((locate_left_line(&left_view)?, locate_right_line(&right_view)?))
}

/// Full pipeline from a polarization diagram to `[t_l, t_r, g]`: track both
/// lines, express the tracks in detunings, and run the joint fit. The fit
/// is then refined by subtracting each line's cross-channel model from the
/// other's cuts and retracing; every round starts from the previous
/// couplings, and the loop stops once they settle or after six rounds.
/// The subtraction error shrinks with the coupling error, so the rounds
/// contract toward the self-consistent answer. A refinement round that
/// fails leaves the last good fit standing.
pub fn extract_hamiltonian(
    grid: &DiagramGrid,
    t_e: f64,
    init: Option<[f64; 3]>,
) -> Result<HamiltonianFit, FitError> {
    let (trace_l, trace_r) = locate_polarization_lines(grid)?;
    let left = left_trace_in_detunings(grid, &trace_l)?;
    let right = right_trace_in_detunings(grid, &trace_r)?;

    let to_fit = |e| FitError::InvalidInput(format!("{e}"));
    let x_eps = grid.x_detunings().map_err(to_fit)?;
    let y_eps = grid.y_detunings().map_err(to_fit)?;
    let step = |eps: &[f64]| (eps[1] - eps[0]).abs();
    let resolution = step(&x_eps).max(step(&y_eps));

    let mut fit = fit_hamiltonian_curvature(&left, &right, t_e, init, resolution)?;
    let mut warnings = trace_l.warnings;
    warnings.extend(trace_r.warnings);

    let settled = 0.02; // ueV, about 5 MHz
    for round in 0..6 {
        let params = TwoQubitParams {
            eps_l: 0.0,
            eps_r: 0.0,
            t_l: fit.t_l,
            t_r: fit.t_r,
            g: fit.g,
            t_e,
        };
        let refined = retrace_without_cross_channel(grid, &params).and_then(|(tl, tr)| {
            let left = left_trace_in_detunings(grid, &tl)?;
            let right = right_trace_in_detunings(grid, &tr)?;
            let next = fit_hamiltonian_curvature(
                &left,
                &right,
                t_e,
                Some([fit.t_l, fit.t_r, fit.g]),
                resolution,
            )?;
            Ok((next, tl.warnings, tr.warnings))
        });
        match refined {
            Ok((next, mut warn_l, warn_r)) => {
                let moved = (next.t_l - fit.t_l)
                    .abs()
                    .max((next.t_r - fit.t_r).abs())
                    .max((next.g - fit.g).abs());
                fit = next;
                warn_l.extend(warn_r);
                warnings = warn_l;
                if moved < settled {
                    break;
                }
            }
            Err(err) => {
                warnings.push(format!(
                    "cross-channel refinement stopped at round {}: {err}",
                    round + 1
                ));
                break;
            }
        }
    }
    fit.warnings = warnings;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{synthesize_polarization_diagram, Axis, SensorModel, UNIT_UEV};
    use crate::units::ghz_to_uev;

    fn clean_grid(t_l_ghz: f64, t_r_ghz: f64, g_ghz: f64, n: usize) -> DiagramGrid {
        let p = TwoQubitParams {
            eps_l: 0.0,
            eps_r: 0.0,
            t_l: ghz_to_uev(t_l_ghz),
            t_r: ghz_to_uev(t_r_ghz),
            g: ghz_to_uev(g_ghz),
            t_e: 0.155,
        };
        synthesize_polarization_diagram(
            &p,
            &SensorModel::default(),
            Axis::new("eps_l", UNIT_UEV, -300.0, 400.0, n).unwrap(),
            Axis::new("eps_r", UNIT_UEV, -300.0, 400.0, n).unwrap(),
            None,
            0,
        )
        .unwrap()
    }

    #[test]
    fn recovers_all_three_couplings_from_clean_diagram() {
        let grid = clean_grid(5.8, 7.0, 20.9, 141);
        let fit = extract_hamiltonian(&grid, 0.155, None).unwrap();
        assert!(
            (fit.t_l_ghz - 5.8).abs() < 0.5,
            "t_l = {} GHz, expected 5.8",
            fit.t_l_ghz
        );
        assert!(
            (fit.t_r_ghz - 7.0).abs() < 0.5,
            "t_r = {} GHz, expected 7.0",
            fit.t_r_ghz
        );
        assert!(
            (fit.g_ghz - 20.9).abs() < 0.4,
            "g = {} GHz, expected 20.9",
            fit.g_ghz
        );
        assert!(!fit.t_l_resolution_limited);
        assert!(!fit.t_r_resolution_limited);
    }

    #[test]
    fn override_init_converges_to_same_answer() {
        let grid = clean_grid(5.8, 7.0, 20.9, 101);
        let auto = extract_hamiltonian(&grid, 0.155, None).unwrap();
        let manual = extract_hamiltonian(
            &grid,
            0.155,
            Some([ghz_to_uev(4.0), ghz_to_uev(9.0), ghz_to_uev(25.0)]),
        )
        .unwrap();
        assert!((auto.g - manual.g).abs() < 0.05 * auto.g.max(1e-12));
        assert!((auto.t_l - manual.t_l).abs() < 0.10 * auto.t_l.max(1e-12));
    }

    #[test]
    fn flags_unresolvable_tunneling() {
        // 0.5 GHz of tunneling on a 5 ueV grid step cannot be resolved.
        let grid = clean_grid(0.5, 0.5, 24.0, 141);
        let fit = extract_hamiltonian(&grid, 0.155, None).unwrap();
        assert!(fit.t_l_resolution_limited);
        assert!(fit.t_r_resolution_limited);
        // The coupling plateau is still a clean measurement.
        assert!((fit.g_ghz - 24.0).abs() < 0.5, "g = {} GHz", fit.g_ghz);
    }

    #[test]
    fn rejects_bad_inputs() {
        let seq = CenterSequence {
            positions: vec![0.0; 10],
            centers: vec![0.0; 10],
            sigmas: vec![0.0; 10],
        };
        assert!(matches!(
            fit_hamiltonian_curvature(&seq, &seq, -0.1, None, 1.0),
            Err(FitError::InvalidInput(_))
        ));
        assert!(matches!(
            fit_hamiltonian_curvature(&seq, &seq, 0.155, None, 0.0),
            Err(FitError::InvalidInput(_))
        ));
        let short = CenterSequence {
            positions: vec![0.0, 1.0],
            centers: vec![0.0, 0.0],
            sigmas: vec![1.0, 1.0],
        };
        assert!(matches!(
            fit_hamiltonian_curvature(&short, &seq, 0.155, None, 1.0),
            Err(FitError::InvalidInput(_))
        ));
    }
}
