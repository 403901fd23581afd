//! Synthesis of two-dimensional sensor maps.
//!
//! Two map families are produced: polarization diagrams of the coupled
//! qubit pairs (the charge-sensor derivative signal near the two
//! polarization lines) and honeycomb stability diagrams of the full
//! four-island array (spikes where the ground-state occupation changes).
//!
//! Grids are stored row-major: `values[iy * nx + ix]`, with `ix` running
//! along the x axis. Axis coordinates may be detunings in ueV or gate
//! voltages in mV; voltage axes need a [`DetuningCalibration`] to map onto
//! the qubit model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::electrostatics::{CapacitanceNetwork, SourceVoltages};
use crate::error::DiagramError;
use crate::hamiltonian::{thermal_polarization, TwoQubitParams};

/// Allowed axis units.
pub const UNIT_UEV: &str = "ueV";
pub const UNIT_MV: &str = "mV";

/// One uniformly sampled grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// Human-readable quantity, e.g. `eps_l` or `V_P1`.
    pub label: String,
    /// `ueV` or `mV`.
    pub unit: String,
    pub start: f64,
    pub stop: f64,
    pub npoints: usize,
}

impl Axis {
    pub fn new(
        label: impl Into<String>,
        unit: impl Into<String>,
        start: f64,
        stop: f64,
        npoints: usize,
    ) -> Result<Self, DiagramError> {
        let axis = Self {
            label: label.into(),
            unit: unit.into(),
            start,
            stop,
            npoints,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<(), DiagramError> {
        if self.unit != UNIT_UEV && self.unit != UNIT_MV {
            return Err(DiagramError::BadGrid(format!(
                "axis '{}': unit must be '{UNIT_UEV}' or '{UNIT_MV}', got '{}'",
                self.label, self.unit
            )));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(DiagramError::BadGrid(format!(
                "axis '{}': endpoints must be finite",
                self.label
            )));
        }
        if self.npoints < 2 {
            return Err(DiagramError::BadGrid(format!(
                "axis '{}': need at least 2 points, got {}",
                self.label, self.npoints
            )));
        }
        if self.start >= self.stop {
            return Err(DiagramError::BadGrid(format!(
                "axis '{}': start must be below stop",
                self.label
            )));
        }
        Ok(())
    }

    /// Grid spacing.
    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.npoints - 1) as f64
    }

    /// All sample coordinates.
    pub fn values(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.npoints).map(|i| self.start + step * i as f64).collect()
    }
}

/// Signed mapping from swept gate voltages to pair detunings:
/// `eps = slope * (V - v_ref)` per pair, slopes in ueV/mV.
///
/// Sweeping a pair's own plunger upward pulls its detuning down, so the
/// physical slope derived from lever arms is negative; any sign is accepted
/// here and carried through consistently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningCalibration {
    /// d(eps_L)/d(V_x) in ueV/mV.
    pub slope_l: f64,
    /// d(eps_R)/d(V_y) in ueV/mV.
    pub slope_r: f64,
    /// Voltage on the x gate where eps_L = 0, in mV.
    pub v_ref_l: f64,
    /// Voltage on the y gate where eps_R = 0, in mV.
    pub v_ref_r: f64,
}

impl DetuningCalibration {
    pub fn eps_l(&self, v: f64) -> f64 {
        self.slope_l * (v - self.v_ref_l)
    }

    pub fn eps_r(&self, v: f64) -> f64 {
        self.slope_r * (v - self.v_ref_r)
    }

    fn validate(&self) -> Result<(), DiagramError> {
        let vals = [self.slope_l, self.slope_r, self.v_ref_l, self.v_ref_r];
        if vals.iter().any(|v| !v.is_finite()) || self.slope_l == 0.0 || self.slope_r == 0.0 {
            return Err(DiagramError::BadGrid(
                "calibration slopes must be finite and nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Charge-sensor response model: per-pair gains applied to the polarization
/// derivatives, plus a flat background and Gaussian read noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// Weight of the left-pair channel.
    pub beta_l: f64,
    /// Weight of the right-pair channel.
    pub beta_r: f64,
    /// Detector sensitivity multipliers for the two channels.
    pub sens_l: f64,
    pub sens_r: f64,
    /// Additive offset.
    pub background: f64,
    /// Standard deviation of the added Gaussian noise (same arbitrary units
    /// as the signal).
    pub noise_sigma: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            beta_l: 1.0,
            beta_r: 1.0,
            sens_l: 1.0,
            sens_r: 1.0,
            background: 0.0,
            noise_sigma: 0.0,
        }
    }
}

impl SensorModel {
    fn validate(&self) -> Result<(), DiagramError> {
        let vals = [
            self.beta_l,
            self.beta_r,
            self.sens_l,
            self.sens_r,
            self.background,
            self.noise_sigma,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(DiagramError::BadGrid("sensor model must be finite".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(DiagramError::BadGrid("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Provenance attached to a synthesized or loaded grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridMeta {
    /// Map family, `polarization` or `honeycomb`.
    pub kind: String,
    /// Model parameters the grid was generated from.
    pub params: serde_json::Value,
    /// Voltage-to-detuning mapping when the axes are voltages.
    pub calibration: Option<DetuningCalibration>,
    /// Noise seed, if noise was added.
    pub seed: Option<u64>,
    /// Non-fatal synthesis diagnostics.
    pub warnings: Vec<String>,
}

/// A rectangular sensor map with its axes and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramGrid {
    pub axis_x: Axis,
    pub axis_y: Axis,
    /// Row-major samples, `values[iy * nx + ix]`.
    pub values: Vec<f64>,
    pub meta: GridMeta,
}

impl DiagramGrid {
    pub fn nx(&self) -> usize {
        self.axis_x.npoints
    }

    pub fn ny(&self) -> usize {
        self.axis_y.npoints
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx() + ix]
    }

    /// One horizontal linecut.
    pub fn row(&self, iy: usize) -> &[f64] {
        let nx = self.nx();
        &self.values[iy * nx..(iy + 1) * nx]
    }

    /// One vertical linecut, copied out of the row-major storage.
    pub fn column(&self, ix: usize) -> Vec<f64> {
        (0..self.ny()).map(|iy| self.value(ix, iy)).collect()
    }

    /// Map x-axis coordinates to left-pair detunings in ueV.
    pub fn x_detunings(&self) -> Result<Vec<f64>, DiagramError> {
        axis_detunings(&self.axis_x, self.meta.calibration.as_ref(), true)
    }

    /// Map y-axis coordinates to right-pair detunings in ueV.
    pub fn y_detunings(&self) -> Result<Vec<f64>, DiagramError> {
        axis_detunings(&self.axis_y, self.meta.calibration.as_ref(), false)
    }
}

fn axis_detunings(
    axis: &Axis,
    calibration: Option<&DetuningCalibration>,
    is_x: bool,
) -> Result<Vec<f64>, DiagramError> {
    match axis.unit.as_str() {
        UNIT_UEV => Ok(axis.values()),
        UNIT_MV => {
            let cal = calibration.ok_or_else(|| {
                DiagramError::BadGrid(format!(
                    "axis '{}' is in mV but the grid carries no detuning calibration",
                    axis.label
                ))
            })?;
            let map = |v: f64| if is_x { cal.eps_l(v) } else { cal.eps_r(v) };
            Ok(axis.values().into_iter().map(map).collect())
        }
        other => Err(DiagramError::BadGrid(format!("unknown axis unit '{other}'"))),
    }
}

/// Synthesize the charge-sensor map of the two polarization lines.
///
/// The sensor reads the sum of the two polarization derivatives, each taken
/// along its own pair's sweep direction (left along x, right along y),
/// scaled by the sensor gains, plus background and optional seeded noise.
/// Detunings in `base` are ignored; they are set per pixel from the axes.
pub fn synthesize_polarization_diagram(
    base: &TwoQubitParams,
    sensor: &SensorModel,
    axis_x: Axis,
    axis_y: Axis,
    calibration: Option<DetuningCalibration>,
    seed: u64,
) -> Result<DiagramGrid, DiagramError> {
    axis_x.validate()?;
    axis_y.validate()?;
    sensor.validate()?;
    if let Some(cal) = &calibration {
        cal.validate()?;
    }
    let params = base.validated()?;

    let eps_x = axis_detunings(&axis_x, calibration.as_ref(), true)?;
    let eps_y = axis_detunings(&axis_y, calibration.as_ref(), false)?;
    let nx = eps_x.len();
    let ny = eps_y.len();

    let mut warnings = Vec::new();
    let min_t = params.t_l.min(params.t_r);
    if min_t > 0.0 {
        let step_x = (eps_x[1] - eps_x[0]).abs();
        let step_y = (eps_y[1] - eps_y[0]).abs();
        if step_x.max(step_y) > min_t / 4.0 {
            warnings.push(format!(
                "grid step {:.3} ueV exceeds a quarter of the smallest tunnel \
                 coupling {:.3} ueV; tunneling-induced curvature is under-resolved",
                step_x.max(step_y),
                min_t
            ));
        }
    }

    // Polarization fields, rows in parallel, deterministic by construction.
    let fields: Vec<(Vec<f64>, Vec<f64>)> = eps_y
        .par_iter()
        .map(|&er| {
            let mut p_l_row = Vec::with_capacity(nx);
            let mut p_r_row = Vec::with_capacity(nx);
            for &el in &eps_x {
                let (p_l, p_r) = thermal_polarization(&params.with_detunings(el, er));
                p_l_row.push(p_l);
                p_r_row.push(p_r);
            }
            (p_l_row, p_r_row)
        })
        .collect();

    let step_x = axis_x.step();
    let step_y = axis_y.step();
    let gain_l = sensor.beta_l * sensor.sens_l;
    let gain_r = sensor.beta_r * sensor.sens_r;

    let mut values = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            // d P_L / d x within the row.
            let row = &fields[iy].0;
            let dpl = if ix == 0 {
                (row[1] - row[0]) / step_x
            } else if ix == nx - 1 {
                (row[nx - 1] - row[nx - 2]) / step_x
            } else {
                (row[ix + 1] - row[ix - 1]) / (2.0 * step_x)
            };
            // d P_R / d y across rows.
            let dpr = if iy == 0 {
                (fields[1].1[ix] - fields[0].1[ix]) / step_y
            } else if iy == ny - 1 {
                (fields[ny - 1].1[ix] - fields[ny - 2].1[ix]) / step_y
            } else {
                (fields[iy + 1].1[ix] - fields[iy - 1].1[ix]) / (2.0 * step_y)
            };
            values[iy * nx + ix] = gain_l * dpl + gain_r * dpr + sensor.background;
        }
    }

    let meta = GridMeta {
        kind: "polarization".into(),
        params: serde_json::json!({
            "t_l_uev": params.t_l,
            "t_r_uev": params.t_r,
            "g_uev": params.g,
            "t_e_kelvin": params.t_e,
            "sensor": sensor,
        }),
        calibration,
        seed: (sensor.noise_sigma > 0.0).then_some(seed),
        warnings,
    };

    let mut grid = DiagramGrid {
        axis_x,
        axis_y,
        values,
        meta,
    };
    if sensor.noise_sigma > 0.0 {
        grid = add_noise(grid, sensor.noise_sigma, seed)?;
    }
    Ok(grid)
}

/// Add seeded Gaussian noise to every sample, drawn in row-major order from
/// a counter-based generator so reruns are bit-identical.
pub fn add_noise(mut grid: DiagramGrid, sigma: f64, seed: u64) -> Result<DiagramGrid, DiagramError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(DiagramError::BadGrid(format!(
            "noise sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(grid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| DiagramError::BadGrid(format!("bad noise width: {e}")))?;
    for v in &mut grid.values {
        *v += normal.sample(&mut rng);
    }
    grid.meta.seed = Some(seed);
    Ok(grid)
}

/// Per-island weights of the charge sensor used for honeycomb maps. The
/// sensor sits next to island 1, so sensitivity falls along the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoneycombSensor {
    pub weights: [f64; 4],
    pub noise_sigma: f64,
}

impl Default for HoneycombSensor {
    fn default() -> Self {
        Self {
            weights: [1.0, 0.8, 0.6, 0.4],
            noise_sigma: 0.0,
        }
    }
}

/// Synthesize a honeycomb stability diagram by sweeping two plunger gates.
///
/// For every pixel the ground-state occupation is found, the occupations
/// are folded with the sensor weights into one scalar charge signal, and
/// the map stores the gradient magnitude of that signal so that every
/// charge-transition boundary shows up as a ridge.
pub fn synthesize_honeycomb(
    net: &CapacitanceNetwork,
    gate_x: usize,
    gate_y: usize,
    axis_x: Axis,
    axis_y: Axis,
    fixed: &SourceVoltages,
    n_max: u32,
    sensor: &HoneycombSensor,
    seed: u64,
) -> Result<DiagramGrid, DiagramError> {
    axis_x.validate()?;
    axis_y.validate()?;
    if gate_x > 3 || gate_y > 3 || gate_x == gate_y {
        return Err(DiagramError::BadGrid(format!(
            "swept gates must be two distinct plungers 0..=3, got {gate_x} and {gate_y}"
        )));
    }
    if axis_x.unit != UNIT_MV || axis_y.unit != UNIT_MV {
        return Err(DiagramError::BadGrid(
            "honeycomb axes must be gate voltages in mV".into(),
        ));
    }
    if n_max == 0 {
        return Err(DiagramError::BadGrid("n_max must be at least 1".into()));
    }
    if sensor.weights.iter().any(|w| !w.is_finite()) {
        return Err(DiagramError::BadGrid("sensor weights must be finite".into()));
    }

    let solver = net.solver()?;
    let xs = axis_x.values();
    let ys = axis_y.values();
    let nx = xs.len();
    let ny = ys.len();

    // Weighted-charge field; rows in parallel.
    let charge: Vec<Vec<f64>> = ys
        .par_iter()
        .map(|&vy| {
            let mut row = Vec::with_capacity(nx);
            for &vx in &xs {
                let mut v = *fixed;
                v.v_gate[gate_x] = vx;
                v.v_gate[gate_y] = vy;
                let n = solver.ground_state(&v, n_max).n();
                let q: f64 = n
                    .iter()
                    .zip(&sensor.weights)
                    .map(|(&ni, &w)| ni as f64 * w)
                    .sum();
                row.push(q);
            }
            row
        })
        .collect();

    let step_x = axis_x.step();
    let step_y = axis_y.step();
    let mut values = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let dx = if ix == 0 {
                (charge[iy][1] - charge[iy][0]) / step_x
            } else if ix == nx - 1 {
                (charge[iy][nx - 1] - charge[iy][nx - 2]) / step_x
            } else {
                (charge[iy][ix + 1] - charge[iy][ix - 1]) / (2.0 * step_x)
            };
            let dy = if iy == 0 {
                (charge[1][ix] - charge[0][ix]) / step_y
            } else if iy == ny - 1 {
                (charge[ny - 1][ix] - charge[ny - 2][ix]) / step_y
            } else {
                (charge[iy + 1][ix] - charge[iy - 1][ix]) / (2.0 * step_y)
            };
            values[iy * nx + ix] = dx.hypot(dy);
        }
    }

    let meta = GridMeta {
        kind: "honeycomb".into(),
        params: serde_json::json!({
            "network": net,
            "gate_x": gate_x,
            "gate_y": gate_y,
            "fixed_voltages": fixed,
            "n_max": n_max,
            "sensor": sensor,
        }),
        calibration: None,
        seed: (sensor.noise_sigma > 0.0).then_some(seed),
        warnings: Vec::new(),
    };

    let mut grid = DiagramGrid {
        axis_x,
        axis_y,
        values,
        meta,
    };
    if sensor.noise_sigma > 0.0 {
        grid = add_noise(grid, sensor.noise_sigma, seed)?;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ghz_to_uev;
    use approx::assert_relative_eq;

    fn qubit_params() -> TwoQubitParams {
        TwoQubitParams {
            eps_l: 0.0,
            eps_r: 0.0,
            t_l: ghz_to_uev(5.8),
            t_r: ghz_to_uev(7.0),
            g: ghz_to_uev(20.9),
            t_e: 0.155,
        }
    }

    fn small_axes() -> (Axis, Axis) {
        (
            Axis::new("eps_l", UNIT_UEV, -300.0, 300.0, 41).unwrap(),
            Axis::new("eps_r", UNIT_UEV, -300.0, 300.0, 41).unwrap(),
        )
    }

    #[test]
    fn axis_values_hit_endpoints() {
        let axis = Axis::new("eps_l", UNIT_UEV, -500.0, 500.0, 201).unwrap();
        let v = axis.values();
        assert_eq!(v.len(), 201);
        assert_relative_eq!(v[0], -500.0);
        assert_relative_eq!(v[200], 500.0);
        assert_relative_eq!(axis.step(), 5.0);
    }

    #[test]
    fn axis_rejects_degenerate_grids() {
        assert!(Axis::new("x", UNIT_UEV, 0.0, 1.0, 1).is_err());
        assert!(Axis::new("x", UNIT_UEV, 1.0, 1.0, 10).is_err());
        assert!(Axis::new("x", "volts", 0.0, 1.0, 10).is_err());
        assert!(Axis::new("x", UNIT_UEV, 2.0, 1.0, 10).is_err());
    }

    #[test]
    fn noiseless_synthesis_is_reproducible() {
        let (ax, ay) = small_axes();
        let a = synthesize_polarization_diagram(
            &qubit_params(),
            &SensorModel::default(),
            ax.clone(),
            ay.clone(),
            None,
            1,
        )
        .unwrap();
        let b = synthesize_polarization_diagram(
            &qubit_params(),
            &SensorModel::default(),
            ax,
            ay,
            None,
            2,
        )
        .unwrap();
        assert_eq!(a.values, b.values, "noiseless grids must ignore the seed");
    }

    #[test]
    fn seeded_noise_is_bit_identical() {
        let (ax, ay) = small_axes();
        let sensor = SensorModel {
            noise_sigma: 0.05,
            ..SensorModel::default()
        };
        let make = |seed| {
            synthesize_polarization_diagram(
                &qubit_params(),
                &sensor,
                ax.clone(),
                ay.clone(),
                None,
                seed,
            )
            .unwrap()
        };
        let a = make(42);
        let b = make(42);
        let c = make(43);
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
        assert_eq!(a.meta.seed, Some(42));
    }

    #[test]
    fn polarization_ridges_sit_near_zero_and_g() {
        // With the right pair parked far negative (outer island), the left
        // line sits at eps_l ~ 0: the signal magnitude along that row must
        // peak near the x origin.
        let p = qubit_params();
        let ax = Axis::new("eps_l", UNIT_UEV, -200.0, 300.0, 251).unwrap();
        let ay = Axis::new("eps_r", UNIT_UEV, -4000.0, 4000.0, 41).unwrap();
        let grid = synthesize_polarization_diagram(
            &p,
            &SensorModel {
                beta_r: 0.0,
                ..SensorModel::default()
            },
            ax,
            ay,
            None,
            0,
        )
        .unwrap();
        let xs = grid.axis_x.values();

        let row_peak = |iy: usize| {
            let row = grid.row(iy);
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if v.abs() > row[best].abs() {
                    best = i;
                }
            }
            xs[best]
        };
        let low = row_peak(0);
        let high = row_peak(grid.ny() - 1);
        assert!(low.abs() < 10.0, "expected ridge near 0, got {low}");
        assert!((high - p.g).abs() < 10.0, "expected ridge near g, got {high}");
    }

    #[test]
    fn coarse_grid_warns_about_unresolved_tunneling() {
        let p = qubit_params();
        let ax = Axis::new("eps_l", UNIT_UEV, -500.0, 500.0, 21).unwrap();
        let ay = Axis::new("eps_r", UNIT_UEV, -500.0, 500.0, 21).unwrap();
        let grid =
            synthesize_polarization_diagram(&p, &SensorModel::default(), ax, ay, None, 0).unwrap();
        assert!(!grid.meta.warnings.is_empty());

        let (ax, ay) = (
            Axis::new("eps_l", UNIT_UEV, -50.0, 50.0, 41).unwrap(),
            Axis::new("eps_r", UNIT_UEV, -50.0, 50.0, 41).unwrap(),
        );
        let fine =
            synthesize_polarization_diagram(&p, &SensorModel::default(), ax, ay, None, 0).unwrap();
        assert!(fine.meta.warnings.is_empty());
    }

    #[test]
    fn voltage_axes_require_calibration() {
        let p = qubit_params();
        let ax = Axis::new("V_P1", UNIT_MV, -10.0, 10.0, 21).unwrap();
        let ay = Axis::new("V_P4", UNIT_MV, -10.0, 10.0, 21).unwrap();
        let err = synthesize_polarization_diagram(&p, &SensorModel::default(), ax, ay, None, 0)
            .unwrap_err();
        assert!(matches!(err, DiagramError::BadGrid(_)));
    }

    #[test]
    fn calibrated_voltage_grid_matches_detuning_grid() {
        // Sweep voltages whose calibration maps exactly onto the [-300, 300]
        // ueV windows, with negative slopes reversing both axes. With only
        // the left channel active, every sample must equal the detuning-grid
        // sample at the mirrored pixel scaled by the chain rule factor.
        let p = qubit_params();
        let cal = DetuningCalibration {
            slope_l: -50.0,
            slope_r: -40.0,
            v_ref_l: 1.0,
            v_ref_r: -2.0,
        };
        let left_only = SensorModel {
            beta_r: 0.0,
            ..SensorModel::default()
        };
        let ax_v = Axis::new("V_P1", UNIT_MV, 1.0 - 6.0, 1.0 + 6.0, 41).unwrap();
        let ay_v = Axis::new("V_P4", UNIT_MV, -2.0 - 7.5, -2.0 + 7.5, 41).unwrap();
        let grid_v =
            synthesize_polarization_diagram(&p, &left_only, ax_v, ay_v, Some(cal), 0).unwrap();

        let (ax_e, ay_e) = small_axes();
        let grid_e =
            synthesize_polarization_diagram(&p, &left_only, ax_e, ay_e, None, 0).unwrap();

        let x_eps = grid_v.x_detunings().unwrap();
        assert_relative_eq!(x_eps[0], 300.0, max_relative = 1e-9);
        assert_relative_eq!(x_eps[40], -300.0, max_relative = 1e-9);
        let y_eps = grid_v.y_detunings().unwrap();
        assert_relative_eq!(y_eps[0], 300.0, max_relative = 1e-9);

        let nx = grid_e.nx();
        let ny = grid_e.ny();
        for iy in 0..ny {
            for ix in 0..nx {
                let v = grid_v.value(ix, iy);
                let e = grid_e.value(nx - 1 - ix, ny - 1 - iy);
                assert_relative_eq!(v, cal.slope_l * e, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn honeycomb_spacing_matches_addition_voltage() {
        // Dots-only array with gates: sweeping P1 and P2, the distance
        // between consecutive island-1 lines along x must be close to
        // E_C1 / alpha_11.
        let net = CapacitanceNetwork::new(
            [45.0, 45.0, 45.0, 45.0],
            [9.0, 2.25, 9.0],
            [3.0, 3.0, 3.0, 3.0],
            [0.0, 0.0],
        )
        .unwrap();
        let ax = Axis::new("V_P1", UNIT_MV, 0.0, 160.0, 321).unwrap();
        let ay = Axis::new("V_P2", UNIT_MV, 0.0, 10.0, 3).unwrap();
        let grid = synthesize_honeycomb(
            &net,
            0,
            1,
            ax,
            ay,
            &SourceVoltages::zero(),
            6,
            &HoneycombSensor::default(),
            0,
        )
        .unwrap();

        // Collect ridge positions along the middle row.
        let row = grid.row(1);
        let xs = grid.axis_x.values();
        let mut peaks = Vec::new();
        let mut i = 1;
        while i < row.len() - 1 {
            if row[i] > 0.5 && row[i] >= row[i - 1] && row[i] >= row[i + 1] {
                peaks.push(xs[i]);
                i += 3;
            } else {
                i += 1;
            }
        }
        assert!(peaks.len() >= 2, "expected at least two charge transitions");
        let lever = net.lever_arms().unwrap();
        let expected = net.energies().e_c[0] / lever.alpha[0][0];
        let spacing = peaks[1] - peaks[0];
        assert_relative_eq!(spacing, expected, max_relative = 0.08);
    }

    #[test]
    fn honeycomb_rejects_bad_gate_choice() {
        let net = CapacitanceNetwork::dots_only([45.0; 4], [9.0, 2.25, 9.0]).unwrap();
        let ax = Axis::new("V_P1", UNIT_MV, 0.0, 10.0, 5).unwrap();
        let ay = Axis::new("V_P1", UNIT_MV, 0.0, 10.0, 5).unwrap();
        let err = synthesize_honeycomb(
            &net,
            1,
            1,
            ax,
            ay,
            &SourceVoltages::zero(),
            4,
            &HoneycombSensor::default(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, DiagramError::BadGrid(_)));
    }
}
