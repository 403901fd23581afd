//! Boundary-element capacitance of two coplanar conducting discs.
//!
//! The model behind the gate-geometry estimates: two zero-thickness discs of
//! diameter D lie in a plane inside a uniform dielectric, optionally a
//! grounded conducting plane runs parallel to them at height h. Each disc is
//! cut into flat panels on a polar grid (radial rings times angular sectors)
//! carrying constant charge density. Potential coefficients use the
//! free-space kernel 1/(4*pi*eps*r) between panel centroids; a panel's own
//! coefficient uses the equal-area-disc value 1/(2*eps*sqrt(pi*A)). The
//! grounded plane enters by the method of images: every panel gets a mirror
//! panel of opposite charge at gap 2h, folded into the same coefficients.
//!
//! Solving the collocation system for unit-potential boundary conditions
//! gives the Maxwell capacitance matrix of the disc pair; its row sums are
//! the total dot capacitances C_i and the negated off-diagonal is the
//! inter-dot coupling C_ij. Lengths are in nm and capacitances in aF
//! throughout.
//!
//! Ring radii are clustered toward the rim (where the charge density of a
//! charged disc diverges) with r_k proportional to sin(pi*k/2n); this is
//! what lets a few hundred panels per disc reach percent-level convergence.
//! Matrix assembly is parallelized over rows; the dense solve is serial.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BemError, FitError};
use crate::units::EPSILON_0_AF_PER_NM;

/// Smallest accepted panel budget per disc.
pub const MIN_PANELS_PER_DISC: usize = 64;

/// Panel budget used when callers have no reason to pick one. Doubling it
/// moves the coupling by well under 2%.
pub const DEFAULT_PANELS_PER_DISC: usize = 256;

/// Largest accepted panel budget per disc; beyond this the dense collocation
/// matrix stops fitting in reasonable memory.
pub const MAX_PANELS_PER_DISC: usize = 4096;

/// Relative permittivity of the Si0.7Ge0.3 barrier, interpolated linearly
/// between Si (11.7) and Ge (16.2).
pub const EPSILON_R_SIGE: f64 = 13.05;

/// Two equal discs a fixed center distance apart, buried below an optional
/// grounded plane.
///
/// All lengths in nm. The discs may touch (`center_distance == diameter`)
/// but not overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscPairGeometry {
    /// Disc diameter D, matching the plunger-gate width.
    pub diameter: f64,
    /// Center-to-center distance d between the discs.
    pub center_distance: f64,
    /// Depth h of the disc plane below the grounded plane.
    pub depth: f64,
    /// Relative permittivity of the surrounding dielectric.
    pub epsilon_r: f64,
    /// Include the grounded plane (via image charges) or not.
    pub screened: bool,
}

impl Default for DiscPairGeometry {
    /// 80 nm discs at the 130 nm lithographic pitch, 35 nm below the gate
    /// plane, in SiGe, screened.
    fn default() -> Self {
        Self {
            diameter: 80.0,
            center_distance: 130.0,
            depth: 35.0,
            epsilon_r: EPSILON_R_SIGE,
            screened: true,
        }
    }
}

impl DiscPairGeometry {
    fn validate(&self) -> Result<(), BemError> {
        let fields = [
            ("diameter", self.diameter),
            ("center_distance", self.center_distance),
            ("depth", self.depth),
            ("epsilon_r", self.epsilon_r),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value <= 0.0 {
                return Err(BemError::BadGeometry(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if self.center_distance < self.diameter {
            return Err(BemError::BadGeometry(format!(
                "discs overlap: center distance {} nm is below the {} nm diameter",
                self.center_distance, self.diameter
            )));
        }
        Ok(())
    }
}

/// Capacitances of a disc pair, with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacitancePair {
    /// Total capacitance C_i of each disc (aF): Maxwell row sums, i.e. the
    /// charge a disc carries with both discs held at the same potential.
    pub c_self: [f64; 2],
    /// Inter-disc capacitance C_ij (aF): negated Maxwell off-diagonal.
    pub c_mutual: f64,
    /// Panels actually used per disc after rounding the requested budget up
    /// to a whole rings-by-sectors grid.
    pub panel_count: usize,
    /// Largest collocation residual of the unit-potential solves; a
    /// conditioning diagnostic, near machine epsilon for healthy systems.
    pub residual: f64,
}

/// One row of a center-distance sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Center distance d (nm).
    pub distance: f64,
    /// Solved capacitances at this distance.
    pub capacitances: CapacitancePair,
}

/// Power law C = A * d^p fitted to a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// Fitted exponent p.
    pub exponent: f64,
    /// One-sigma uncertainty of the exponent from the log-log residuals.
    pub exponent_sigma: f64,
    /// Fitted prefactor A, in the units of the input values at d = 1.
    pub prefactor: f64,
}

/// A flat panel: centroid position in the disc plane and its area.
#[derive(Debug, Clone, Copy)]
struct Panel {
    x: f64,
    y: f64,
    area: f64,
}

/// Split a panel budget into a rings-by-sectors grid with roughly four
/// sectors per ring, rounding the total up to cover the request.
fn grid_shape(panels: usize) -> (usize, usize) {
    let n_r = ((panels as f64 / 4.0).sqrt().round() as usize).max(2);
    let n_s = panels.div_ceil(n_r).max(8);
    (n_r, n_s)
}

/// Panelize one disc centered at (cx, 0). Ring boundaries follow
/// r_k = a*sin(pi*k/2n) so rings thin out toward the rim; collocation points
/// sit at each panel's radial centroid on the sector bisector.
fn disc_panels(radius: f64, cx: f64, n_r: usize, n_s: usize) -> Vec<Panel> {
    let bounds: Vec<f64> = (0..=n_r)
        .map(|k| radius * (PI * k as f64 / (2.0 * n_r as f64)).sin())
        .collect();
    let d_theta = 2.0 * PI / n_s as f64;
    let mut panels = Vec::with_capacity(n_r * n_s);
    for ring in 1..=n_r {
        let (r0, r1) = (bounds[ring - 1], bounds[ring]);
        let r_c = 2.0 / 3.0 * (r1.powi(3) - r0.powi(3)) / (r1 * r1 - r0 * r0);
        let area = PI * (r1 * r1 - r0 * r0) / n_s as f64;
        for sector in 0..n_s {
            let theta = (sector as f64 + 0.5) * d_theta;
            panels.push(Panel {
                x: cx + r_c * theta.cos(),
                y: r_c * theta.sin(),
                area,
            });
        }
    }
    panels
}

/// Assemble and solve the collocation system for a set of conductors, each
/// given as a panel list, and return the Maxwell capacitance matrix (aF)
/// plus the worst collocation residual.
///
/// `image_gap` is the panel-to-image distance 2h when a grounded plane is
/// present.
fn solve_conductors(
    groups: &[Vec<Panel>],
    eps: f64,
    image_gap: Option<f64>,
) -> Result<(DMatrix<f64>, f64), BemError> {
    let panels: Vec<Panel> = groups.concat();
    let n = panels.len();
    let coeff = 1.0 / (4.0 * PI * eps);

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi_ = panels[i];
            let mut row = Vec::with_capacity(n);
            for (j, pj) in panels.iter().enumerate() {
                let dx = pi_.x - pj.x;
                let dy = pi_.y - pj.y;
                let rho2 = dx * dx + dy * dy;
                let direct = if i == j {
                    1.0 / (2.0 * eps * (PI * pj.area).sqrt())
                } else {
                    coeff / rho2.sqrt()
                };
                let entry = match image_gap {
                    Some(gap) => direct - coeff / (rho2 + gap * gap).sqrt(),
                    None => direct,
                };
                row.push(entry);
            }
            row
        })
        .collect();
    let potential = DMatrix::from_row_iterator(n, n, rows.into_iter().flatten());

    let k = groups.len();
    let mut rhs = DMatrix::zeros(n, k);
    let mut start = 0;
    let mut ranges = Vec::with_capacity(k);
    for (g, group) in groups.iter().enumerate() {
        let range = start..start + group.len();
        rhs.view_range_mut(range.clone(), g..g + 1).fill(1.0);
        ranges.push(range);
        start += group.len();
    }

    let charges = potential.clone().lu().solve(&rhs).ok_or_else(|| BemError::IllConditioned {
        diagnostic: "LU factorization of the collocation matrix failed".into(),
    })?;
    let residual = (potential * &charges - &rhs).amax();
    if !residual.is_finite() || residual > 1e-8 {
        return Err(BemError::IllConditioned {
            diagnostic: format!("unit-potential solve residual {residual:.3e} exceeds 1e-8"),
        });
    }

    let mut maxwell = DMatrix::zeros(k, k);
    for (a, range) in ranges.iter().enumerate() {
        for b in 0..k {
            maxwell[(a, b)] = charges.view_range(range.clone(), b..b + 1).sum();
        }
    }
    Ok((maxwell, residual))
}

fn check_budget(panels: usize) -> Result<(), BemError> {
    if panels < MIN_PANELS_PER_DISC {
        return Err(BemError::TooFewPanels {
            requested: panels,
            minimum: MIN_PANELS_PER_DISC,
        });
    }
    if panels > MAX_PANELS_PER_DISC {
        return Err(BemError::PanelBudgetExceeded {
            requested: panels,
            maximum: MAX_PANELS_PER_DISC,
        });
    }
    Ok(())
}

/// Solve the disc pair with roughly `panels_per_disc` panels on each disc.
///
/// Returns the pair capacitances in aF. The Maxwell matrix is symmetrized
/// across its off-diagonal before extraction; the sign structure
/// (both C_i positive, 0 < C_ij < min C_i) is verified and a violation is
/// reported as an ill-conditioned solve.
pub fn bem_capacitance(
    geom: &DiscPairGeometry,
    panels_per_disc: usize,
) -> Result<CapacitancePair, BemError> {
    geom.validate()?;
    check_budget(panels_per_disc)?;

    let (n_r, n_s) = grid_shape(panels_per_disc);
    let radius = 0.5 * geom.diameter;
    let half = 0.5 * geom.center_distance;
    let groups = [
        disc_panels(radius, -half, n_r, n_s),
        disc_panels(radius, half, n_r, n_s),
    ];
    let eps = EPSILON_0_AF_PER_NM * geom.epsilon_r;
    let image_gap = geom.screened.then_some(2.0 * geom.depth);

    let (maxwell, residual) = solve_conductors(&groups, eps, image_gap)?;
    let off = 0.5 * (maxwell[(0, 1)] + maxwell[(1, 0)]);
    let c_mutual = -off;
    let c_self = [maxwell[(0, 0)] + off, maxwell[(1, 1)] + off];

    let healthy = c_mutual > 0.0
        && c_self.iter().all(|c| c.is_finite() && *c > 0.0)
        && c_mutual < c_self[0].min(c_self[1]);
    if !healthy {
        return Err(BemError::IllConditioned {
            diagnostic: format!(
                "solution violates the capacitance sign structure \
                 (C_1 {:.3e}, C_2 {:.3e}, C_12 {:.3e} aF)",
                c_self[0], c_self[1], c_mutual
            ),
        });
    }

    Ok(CapacitancePair {
        c_self,
        c_mutual,
        panel_count: n_r * n_s,
        residual,
    })
}

/// Self-capacitance of one disc in an unbounded dielectric, for checking the
/// solver against the analytic value 4*eps*D.
pub fn isolated_disc_capacitance(
    diameter: f64,
    epsilon_r: f64,
    panels: usize,
) -> Result<f64, BemError> {
    for (name, value) in [("diameter", diameter), ("epsilon_r", epsilon_r)] {
        if !value.is_finite() || value <= 0.0 {
            return Err(BemError::BadGeometry(format!(
                "{name} must be finite and positive, got {value}"
            )));
        }
    }
    check_budget(panels)?;
    let (n_r, n_s) = grid_shape(panels);
    let groups = [disc_panels(0.5 * diameter, 0.0, n_r, n_s)];
    let eps = EPSILON_0_AF_PER_NM * epsilon_r;
    let (maxwell, _) = solve_conductors(&groups, eps, None)?;
    Ok(maxwell[(0, 0)])
}

/// Solve the pair at each center distance in `distances`.
///
/// The distances must be strictly ascending and lie in [D, 3D], the window
/// the panel model is meant for; closer means overlap, farther the coupling
/// drops below what the panel resolution supports. Points run in parallel.
/// C_ij decreases monotonically along the returned table.
pub fn sweep_distance(
    template: &DiscPairGeometry,
    distances: &[f64],
    panels_per_disc: usize,
) -> Result<Vec<SweepPoint>, BemError> {
    template.validate()?;
    check_budget(panels_per_disc)?;
    if distances.is_empty() {
        return Err(BemError::BadGeometry("distance sweep is empty".into()));
    }
    let farthest = 3.0 * template.diameter;
    let mut prev = f64::NEG_INFINITY;
    for &d in distances {
        if !d.is_finite() || d < template.diameter || d > farthest {
            return Err(BemError::BadGeometry(format!(
                "sweep distance {d} nm outside [{}, {}] nm",
                template.diameter, farthest
            )));
        }
        if d <= prev {
            return Err(BemError::BadGeometry(
                "sweep distances must be strictly ascending".into(),
            ));
        }
        prev = d;
    }

    distances
        .par_iter()
        .map(|&distance| {
            let geom = DiscPairGeometry {
                center_distance: distance,
                ..*template
            };
            Ok(SweepPoint {
                distance,
                capacitances: bem_capacitance(&geom, panels_per_disc)?,
            })
        })
        .collect()
}

/// Fit C = A * d^p by linear least squares in log-log space.
///
/// Needs at least five strictly positive points. The exponent uncertainty is
/// the standard slope error from the fit residuals.
pub fn power_law_fit(distances: &[f64], values: &[f64]) -> Result<PowerLawFit, FitError> {
    if distances.len() != values.len() {
        return Err(FitError::InvalidInput(format!(
            "{} distances but {} values",
            distances.len(),
            values.len()
        )));
    }
    if distances.len() < 5 {
        return Err(FitError::InvalidInput(format!(
            "power-law fit needs at least 5 points, got {}",
            distances.len()
        )));
    }
    for (&d, &v) in distances.iter().zip(values) {
        if !(d.is_finite() && v.is_finite() && d > 0.0 && v > 0.0) {
            return Err(FitError::InvalidInput(format!(
                "power-law data must be finite and positive, got ({d}, {v})"
            )));
        }
    }

    let n = distances.len() as f64;
    let xs: Vec<f64> = distances.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::InvalidInput(
            "power-law fit needs at least two distinct distances".into(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_bar) * (y - y_bar))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let variance = ss_res / (n - 2.0);

    Ok(PowerLawFit {
        exponent: slope,
        exponent_sigma: (variance / sxx).sqrt(),
        prefactor: intercept.exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn isolated_disc_matches_the_analytic_value() {
        let eps = EPSILON_0_AF_PER_NM * EPSILON_R_SIGE;
        let analytic = 4.0 * eps * 80.0;
        let solved = isolated_disc_capacitance(80.0, EPSILON_R_SIGE, 256).unwrap();
        assert!(
            (solved - analytic).abs() / analytic < 0.05,
            "solved {solved:.3} aF vs analytic {analytic:.3} aF"
        );
    }

    #[test]
    fn panel_refinement_converges() {
        let geom = DiscPairGeometry::default();
        let coarse = bem_capacitance(&geom, 128).unwrap();
        let fine = bem_capacitance(&geom, 256).unwrap();
        let change = (fine.c_mutual - coarse.c_mutual).abs() / coarse.c_mutual;
        assert!(change < 0.02, "doubling panels moved C_ij by {change:.4}");
        assert!(coarse.residual < 1e-10 && fine.residual < 1e-10);
    }

    #[test]
    fn screened_sweep_matches_the_reference_power_law() {
        let distances: Vec<f64> = (0..7).map(|k| 85.0 + 15.0 * k as f64).collect();
        let screened = sweep_distance(&DiscPairGeometry::default(), &distances, 256).unwrap();

        let couplings: Vec<f64> = screened
            .iter()
            .map(|p| p.capacitances.c_mutual)
            .collect();
        for pair in couplings.windows(2) {
            assert!(pair[1] < pair[0], "C_ij not monotone: {couplings:?}");
        }
        for &c in &couplings {
            assert!((0.7..=13.0).contains(&c), "C_ij {c:.2} aF out of range");
        }
        // The value at the lithographic pitch sits inside the quoted span.
        let at_pitch = screened.iter().find(|p| p.distance == 130.0).unwrap();
        assert!(
            (1.0..=10.0).contains(&at_pitch.capacitances.c_mutual),
            "C_ij at 130 nm is {:.2} aF",
            at_pitch.capacitances.c_mutual
        );

        let fit = power_law_fit(&distances, &couplings).unwrap();
        assert!(
            (fit.exponent + 3.07).abs() < 0.3,
            "screened exponent {:.3}",
            fit.exponent
        );

        // Without the plane the decay is much shallower.
        let open = DiscPairGeometry {
            screened: false,
            ..DiscPairGeometry::default()
        };
        let unscreened = sweep_distance(&open, &distances, 128).unwrap();
        let open_couplings: Vec<f64> = unscreened
            .iter()
            .map(|p| p.capacitances.c_mutual)
            .collect();
        let open_fit = power_law_fit(&distances, &open_couplings).unwrap();
        assert!(
            fit.exponent < open_fit.exponent,
            "screened {:.3} vs unscreened {:.3}",
            fit.exponent,
            open_fit.exponent
        );
    }

    #[test]
    fn screening_raises_the_self_capacitance() {
        for distance in [95.0, 130.0, 170.0] {
            let geom = DiscPairGeometry {
                center_distance: distance,
                ..DiscPairGeometry::default()
            };
            let open = DiscPairGeometry {
                screened: false,
                ..geom
            };
            let with_plane = bem_capacitance(&geom, 96).unwrap();
            let without = bem_capacitance(&open, 96).unwrap();
            for side in 0..2 {
                assert!(
                    with_plane.c_self[side] > without.c_self[side],
                    "at d = {distance} nm: screened C_{side} {:.2} aF vs open {:.2} aF",
                    with_plane.c_self[side],
                    without.c_self[side]
                );
            }
        }
    }

    #[test]
    fn symmetric_pair_has_equal_self_capacitances() {
        let pair = bem_capacitance(&DiscPairGeometry::default(), 128).unwrap();
        assert_relative_eq!(pair.c_self[0], pair.c_self[1], max_relative = 1e-9);
        assert!(pair.c_mutual > 0.0);
        assert!(pair.c_mutual < pair.c_self[0].min(pair.c_self[1]));
        // Sign structure makes the 2x2 Maxwell matrix positive definite.
        let m11 = pair.c_self[0] + pair.c_mutual;
        let m22 = pair.c_self[1] + pair.c_mutual;
        assert!(m11 > 0.0 && m11 * m22 - pair.c_mutual * pair.c_mutual > 0.0);
    }

    #[test]
    fn scaling_lengths_scales_capacitances() {
        let base = DiscPairGeometry::default();
        let scaled = DiscPairGeometry {
            diameter: 2.0 * base.diameter,
            center_distance: 2.0 * base.center_distance,
            depth: 2.0 * base.depth,
            ..base
        };
        let small = bem_capacitance(&base, 128).unwrap();
        let big = bem_capacitance(&scaled, 128).unwrap();
        assert_relative_eq!(big.c_mutual, 2.0 * small.c_mutual, max_relative = 0.01);
        assert_relative_eq!(big.c_self[0], 2.0 * small.c_self[0], max_relative = 0.01);
        assert_relative_eq!(big.c_self[1], 2.0 * small.c_self[1], max_relative = 0.01);
    }

    #[test]
    fn exact_cube_law_is_recovered() {
        let distances: Vec<f64> = (0..6).map(|k| 90.0 + 12.0 * k as f64).collect();
        let values: Vec<f64> = distances.iter().map(|d| 2.5e6 * d.powi(-3)).collect();
        let fit = power_law_fit(&distances, &values).unwrap();
        assert!((fit.exponent + 3.0).abs() < 1e-10, "exponent {}", fit.exponent);
        assert!(fit.exponent_sigma < 1e-10);
        assert_relative_eq!(fit.prefactor, 2.5e6, max_relative = 1e-8);
    }

    #[test]
    fn rejects_bad_geometry_and_budgets() {
        let overlap = DiscPairGeometry {
            center_distance: 70.0,
            ..DiscPairGeometry::default()
        };
        assert!(matches!(
            bem_capacitance(&overlap, 128),
            Err(BemError::BadGeometry(_))
        ));
        assert!(matches!(
            bem_capacitance(&DiscPairGeometry::default(), 32),
            Err(BemError::TooFewPanels {
                requested: 32,
                minimum: 64
            })
        ));
        assert!(matches!(
            bem_capacitance(&DiscPairGeometry::default(), 1 << 20),
            Err(BemError::PanelBudgetExceeded { .. })
        ));
        let negative_depth = DiscPairGeometry {
            depth: -1.0,
            ..DiscPairGeometry::default()
        };
        assert!(bem_capacitance(&negative_depth, 128).is_err());
    }

    #[test]
    fn sweep_rejects_unordered_or_out_of_window_distances() {
        let geom = DiscPairGeometry::default();
        assert!(matches!(
            sweep_distance(&geom, &[130.0, 110.0], 64),
            Err(BemError::BadGeometry(_))
        ));
        assert!(matches!(
            sweep_distance(&geom, &[100.0, 300.0], 64),
            Err(BemError::BadGeometry(_))
        ));
        assert!(matches!(
            sweep_distance(&geom, &[], 64),
            Err(BemError::BadGeometry(_))
        ));
    }

    #[test]
    fn power_law_rejects_bad_input() {
        let d = [90.0, 100.0, 110.0, 120.0];
        let v = [1.0, 0.8, 0.6, 0.5];
        assert!(matches!(
            power_law_fit(&d, &v),
            Err(FitError::InvalidInput(_))
        ));
        let d5 = [90.0, 100.0, 110.0, 120.0, 130.0];
        let with_zero = [1.0, 0.8, 0.0, 0.5, 0.4];
        assert!(matches!(
            power_law_fit(&d5, &with_zero),
            Err(FitError::InvalidInput(_))
        ));
        assert!(matches!(
            power_law_fit(&d5, &v),
            Err(FitError::InvalidInput(_))
        ));
    }
}
