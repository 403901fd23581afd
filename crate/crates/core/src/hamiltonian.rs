//! Two coupled charge qubits formed by the outer/inner island pairs.
//!
//! Each pair hosts one electron that can sit on the outer or the inner
//! island; `sigma_z = +1` denotes the outer island (island 1 on the left,
//! island 4 on the right). The four-dimensional product basis is ordered
//! `(+,+), (+,-), (-,+), (-,-)` in `(sigma_z_left, sigma_z_right)`. The
//! electrostatic repulsion of the two adjacent inner islands adds an energy
//! `g` to the `(-,-)` configuration only, which is what couples the two
//! qubits.

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::SpectrumError;
use crate::units::kelvin_to_uev;

/// Model parameters of the coupled-qubit Hamiltonian. Energies in ueV,
/// electron temperature in kelvin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitParams {
    /// Left-pair detuning: energy of the outer configuration minus the
    /// inner one.
    pub eps_l: f64,
    /// Right-pair detuning, same sign convention.
    pub eps_r: f64,
    /// Left-pair tunnel coupling.
    pub t_l: f64,
    /// Right-pair tunnel coupling.
    pub t_r: f64,
    /// Mutual capacitive coupling (cost of occupying both inner islands).
    pub g: f64,
    /// Electron temperature in kelvin.
    pub t_e: f64,
}

impl TwoQubitParams {
    /// Validate ranges: all entries finite, tunnel couplings and temperature
    /// non-negative.
    pub fn validated(self) -> Result<Self, SpectrumError> {
        let checks = [
            ("eps_l", self.eps_l),
            ("eps_r", self.eps_r),
            ("t_l", self.t_l),
            ("t_r", self.t_r),
            ("g", self.g),
            ("t_e", self.t_e),
        ];
        for (name, value) in checks {
            if !value.is_finite() {
                return Err(SpectrumError::BadParameter {
                    name,
                    constraint: "be finite",
                    value,
                });
            }
        }
        for (name, value) in [("t_l", self.t_l), ("t_r", self.t_r), ("t_e", self.t_e)] {
            if value < 0.0 {
                return Err(SpectrumError::BadParameter {
                    name,
                    constraint: ">= 0",
                    value,
                });
            }
        }
        Ok(self)
    }

    /// Copy of the parameters with both detunings replaced.
    pub fn with_detunings(&self, eps_l: f64, eps_r: f64) -> Self {
        Self {
            eps_l,
            eps_r,
            ..*self
        }
    }

    /// Thermal energy k_B T_e in ueV.
    pub fn thermal_energy(&self) -> f64 {
        kelvin_to_uev(self.t_e)
    }
}

/// Which qubit pair an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Hamiltonian matrix in the product basis described in the module docs.
pub fn hamiltonian_matrix(p: &TwoQubitParams) -> Matrix4<f64> {
    let hl = 0.5 * p.eps_l;
    let hr = 0.5 * p.eps_r;
    Matrix4::new(
        hl + hr, p.t_r, p.t_l, 0.0, //
        p.t_r, hl - hr, 0.0, p.t_l, //
        p.t_l, 0.0, -hl + hr, p.t_r, //
        0.0, p.t_l, p.t_r, -hl - hr + p.g,
    )
}

/// Sorted spectrum of the coupled-qubit Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// Eigenvalues in ascending order, ueV.
    pub energies: [f64; 4],
    /// Orthonormal eigenvectors as columns, matching `energies`. Each
    /// column is normalized so its largest-magnitude component is positive.
    pub states: Matrix4<f64>,
}

/// Diagonalize the Hamiltonian for the given parameters.
pub fn eigensystem(p: &TwoQubitParams) -> EigenSystem {
    let eig = SymmetricEigen::new(hamiltonian_matrix(p));
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut energies = [0.0; 4];
    let mut states = Matrix4::zeros();
    for (slot, &idx) in order.iter().enumerate() {
        energies[slot] = eig.eigenvalues[idx];
        let mut col = eig.eigenvectors.column(idx).clone_owned();
        let lead = col.iter().cloned().fold(0.0f64, |acc, x| {
            if x.abs() > acc.abs() {
                x
            } else {
                acc
            }
        });
        if lead < 0.0 {
            col = -col;
        }
        states.set_column(slot, &col);
    }
    EigenSystem { energies, states }
}

/// Thermal expectation of the two pair polarizations `(P_L, P_R)`.
///
/// `P = <sigma_z>` over the Boltzmann-weighted eigenstates; +1 means the
/// electron sits fully on the outer island. At zero temperature the ground
/// state (or the average over a degenerate ground multiplet) is used.
pub fn thermal_polarization(p: &TwoQubitParams) -> (f64, f64) {
    let eig = eigensystem(p);
    let kt = p.thermal_energy();

    let mut weights = [0.0; 4];
    if kt > 0.0 {
        // Subtract the ground energy before exponentiating so large spectra
        // cannot overflow.
        for i in 0..4 {
            weights[i] = (-(eig.energies[i] - eig.energies[0]) / kt).exp();
        }
    } else {
        let tol = 1e-9 * (1.0 + eig.energies[0].abs());
        for i in 0..4 {
            weights[i] = if eig.energies[i] - eig.energies[0] <= tol {
                1.0
            } else {
                0.0
            };
        }
    }

    let z: f64 = weights.iter().sum();
    let mut p_l = 0.0;
    let mut p_r = 0.0;
    for i in 0..4 {
        let v = eig.states.column(i);
        let (a, b, c, d) = (v[0] * v[0], v[1] * v[1], v[2] * v[2], v[3] * v[3]);
        p_l += weights[i] * (a + b - c - d);
        p_r += weights[i] * (a - b + c - d);
    }
    (p_l / z, p_r / z)
}

/// Detuning at which one pair's thermal polarization crosses zero, for a
/// fixed detuning of the other pair.
///
/// The polarization falls monotonically with the pair's own detuning, from
/// near +1 far below the crossing to near -1 far above it, so the zero is
/// found by bisection. The crossing sits near 0 when the other pair occupies
/// its outer island and near `g` when it occupies its inner island.
pub fn polarization_line_location(
    p: &TwoQubitParams,
    side: Side,
    eps_other: f64,
) -> Result<f64, SpectrumError> {
    let eval = |eps: f64| -> f64 {
        let params = match side {
            Side::Left => p.with_detunings(eps, eps_other),
            Side::Right => p.with_detunings(eps_other, eps),
        };
        let (p_l, p_r) = thermal_polarization(&params);
        match side {
            Side::Left => p_l,
            Side::Right => p_r,
        }
    };

    let span = p.g.abs() + 4.0 * (p.t_l + p.t_r) + 40.0 * p.thermal_energy() + 1.0;
    let mut lo = -span;
    let mut hi = p.g.abs() + span;
    let mut f_lo = eval(lo);
    let mut f_hi = eval(hi);
    let mut tries = 0;
    while f_lo <= 0.0 || f_hi >= 0.0 {
        lo = lo * 2.0 - 1.0;
        hi = hi * 2.0 + 1.0;
        f_lo = eval(lo);
        f_hi = eval(hi);
        tries += 1;
        if tries > 60 {
            return Err(SpectrumError::NoPolarizationZero {
                side: side.label(),
            });
        }
    }

    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
