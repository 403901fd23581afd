//! Constant-interaction electrostatics of a linear four-dot array.
//!
//! The array is modeled as four metallic islands in a row. Each island i has
//! a total self-capacitance `C_i` (everything attached to it: neighbor
//! couplings, its plunger gate, an ohmic contact on the end islands, and the
//! remainder to ground) and nearest-neighbor mutual capacitances `C_12`,
//! `C_23`, `C_34`. Plunger gates P1..P4 couple to their islands with
//! `c_gate`, and the two ohmic leads couple to islands 1 and 4 with
//! `c_ohmic`.
//!
//! Charge states are counted in electrons added relative to a reference
//! filling; gate-induced charge enters through the voltage sources. The
//! electrostatic energy of a configuration is the usual quadratic form
//! `U = (1/2) q^T C^{-1} q` of the net island charge, expressed here in ueV
//! with capacitances in aF and voltages in mV.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;
use crate::units::{AF_MV_TO_E, E2_OVER_AF_UEV};

/// Validated capacitance model of the four-dot array.
///
/// Invariants enforced at construction: every capacitance is finite and
/// non-negative, totals are strictly positive, and each island's total
/// strictly exceeds the sum of the named couplings attached to it (the
/// remainder being its capacitance to ground). The last condition makes the
/// Maxwell matrix strictly diagonally dominant, hence positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacitanceNetwork {
    c_total: [f64; 4],
    c_inter: [f64; 3],
    c_gate: [f64; 4],
    c_ohmic: [f64; 2],
}

impl CapacitanceNetwork {
    /// Build a network from totals `C_1..C_4` (aF), nearest-neighbor
    /// couplings `C_12, C_23, C_34` (aF), plunger-gate capacitances (aF) and
    /// ohmic-lead capacitances on islands 1 and 4 (aF).
    pub fn new(
        c_total: [f64; 4],
        c_inter: [f64; 3],
        c_gate: [f64; 4],
        c_ohmic: [f64; 2],
    ) -> Result<Self, NetworkError> {
        const TOTAL_NAMES: [&str; 4] = ["C_1", "C_2", "C_3", "C_4"];
        const INTER_NAMES: [&str; 3] = ["C_12", "C_23", "C_34"];
        const GATE_NAMES: [&str; 4] = ["C_g1", "C_g2", "C_g3", "C_g4"];
        const OHMIC_NAMES: [&str; 2] = ["C_o1", "C_o4"];

        for (name, &value) in TOTAL_NAMES.iter().zip(&c_total) {
            check_finite(name, value)?;
            if value <= 0.0 {
                return Err(NetworkError::NonPositive { name, value });
            }
        }
        for (name, &value) in INTER_NAMES
            .iter()
            .zip(&c_inter)
            .chain(GATE_NAMES.iter().zip(&c_gate))
            .chain(OHMIC_NAMES.iter().zip(&c_ohmic))
        {
            check_finite(name, value)?;
            if value < 0.0 {
                return Err(NetworkError::NonPositive { name, value });
            }
        }

        let net = Self {
            c_total,
            c_inter,
            c_gate,
            c_ohmic,
        };
        for node in 0..4 {
            let attached = net.attached_sum(node);
            if c_total[node] <= attached {
                return Err(NetworkError::DominanceViolated {
                    node: node + 1,
                    c_total: c_total[node],
                    c_attached: attached,
                });
            }
        }
        Ok(net)
    }

    /// Build a dots-only network (no gate or ohmic couplings), as produced
    /// when converting charging energies back to capacitances.
    pub fn dots_only(c_total: [f64; 4], c_inter: [f64; 3]) -> Result<Self, NetworkError> {
        Self::new(c_total, c_inter, [0.0; 4], [0.0; 2])
    }

    /// Total self-capacitances `C_1..C_4` in aF.
    pub fn c_total(&self) -> [f64; 4] {
        self.c_total
    }

    /// Nearest-neighbor couplings `C_12, C_23, C_34` in aF.
    pub fn c_inter(&self) -> [f64; 3] {
        self.c_inter
    }

    /// Plunger-gate capacitances in aF.
    pub fn c_gate(&self) -> [f64; 4] {
        self.c_gate
    }

    /// Ohmic-lead capacitances on islands 1 and 4 in aF.
    pub fn c_ohmic(&self) -> [f64; 2] {
        self.c_ohmic
    }

    /// Sum of the named couplings attached to `node` (neighbors, gate, and
    /// lead where present).
    fn attached_sum(&self, node: usize) -> f64 {
        let neighbors = match node {
            0 => self.c_inter[0],
            1 => self.c_inter[0] + self.c_inter[1],
            2 => self.c_inter[1] + self.c_inter[2],
            3 => self.c_inter[2],
            _ => unreachable!(),
        };
        let lead = match node {
            0 => self.c_ohmic[0],
            3 => self.c_ohmic[1],
            _ => 0.0,
        };
        neighbors + self.c_gate[node] + lead
    }

    /// Maxwell capacitance matrix in aF: totals on the diagonal, negated
    /// nearest-neighbor couplings off it.
    pub fn maxwell_matrix(&self) -> Matrix4<f64> {
        let [c1, c2, c3, c4] = self.c_total;
        let [c12, c23, c34] = self.c_inter;
        Matrix4::new(
            c1, -c12, 0.0, 0.0, //
            -c12, c2, -c23, 0.0, //
            0.0, -c23, c3, -c34, //
            0.0, 0.0, -c34, c4,
        )
    }

    /// Determinant of the Maxwell matrix in aF^4, via the closed form for
    /// the tridiagonal structure.
    pub fn determinant(&self) -> f64 {
        let [c1, c2, c3, c4] = self.c_total;
        let [c12, c23, c34] = self.c_inter;
        c1 * c2 * c3 * c4
            - c3 * c4 * c12 * c12
            - c1 * c2 * c34 * c34
            - c1 * c4 * c23 * c23
            + c12 * c12 * c34 * c34
    }

    /// Precompute the inverse Maxwell matrix for repeated energy
    /// evaluations.
    pub fn solver(&self) -> Result<ChargeEnergySolver, NetworkError> {
        let chol = self
            .maxwell_matrix()
            .cholesky()
            .ok_or(NetworkError::SingularMatrix)?;
        Ok(ChargeEnergySolver {
            net: *self,
            inv: chol.inverse(),
        })
    }

    /// Electrostatic energy in ueV of a charge configuration under the given
    /// source voltages.
    pub fn electrostatic_energy(
        &self,
        state: &ChargeState,
        v: &SourceVoltages,
    ) -> Result<f64, NetworkError> {
        Ok(self.solver()?.energy(state, v))
    }

    /// Charging energies and inter-dot coupling energies of this network.
    pub fn energies(&self) -> ElectrostaticEnergies {
        let [c1, c2, c3, c4] = self.c_total;
        let [c12, c23, c34] = self.c_inter;
        let det = self.determinant();
        let k = E2_OVER_AF_UEV;

        let e_c1 = k * (c2 * c3 * c4 - c4 * c23 * c23 - c2 * c34 * c34) / det;
        let e_c2 = k * (c1 * c3 * c4 - c1 * c34 * c34) / det;
        let e_c3 = k * (c1 * c2 * c4 - c4 * c12 * c12) / det;
        let e_c4 = k * (c1 * c2 * c3 - c3 * c12 * c12 - c1 * c23 * c23) / det;
        let e_c12 = k * c12 * (c3 * c4 - c34 * c34) / det;
        let e_c23 = k * c1 * c4 * c23 / det;
        let e_c34 = k * c34 * (c1 * c2 - c12 * c12) / det;

        ElectrostaticEnergies {
            e_c: [e_c1, e_c2, e_c3, e_c4],
            e_cc: [e_c12, e_c23, e_c34],
            sigma_e_c: None,
            sigma_e_cc: None,
        }
    }

    /// Capacitive coupling between the two double-dot charge qubits, in ueV:
    /// the change in left-pair detuning when the right pair moves one
    /// electron from its inner to its outer island.
    ///
    /// Closed form `g = e^2 C_23 (C_1 - C_12)(C_4 - C_34) / det(C)`.
    pub fn coupling_exact(&self) -> f64 {
        let [c1, _, _, c4] = self.c_total;
        let [c12, c23, c34] = self.c_inter;
        E2_OVER_AF_UEV * c23 * (c1 - c12) * (c4 - c34) / self.determinant()
    }

    /// Leading-order series for the coupling in the small-coupling ratios
    /// `c_ij = C_ij / <C>`: `g = E_C (c_23 - c_23 c_12 - c_23 c_34)` with
    /// `E_C = e^2 / <C>` and `<C>` the mean total capacitance.
    pub fn coupling_series(&self) -> f64 {
        let c_mean = self.c_total.iter().sum::<f64>() / 4.0;
        let e_c = E2_OVER_AF_UEV / c_mean;
        let c12 = self.c_inter[0] / c_mean;
        let c23 = self.c_inter[1] / c_mean;
        let c34 = self.c_inter[2] / c_mean;
        e_c * (c23 - c23 * c12 - c23 * c34)
    }

    /// The coupling evaluated literally as the shift of the left-pair
    /// detuning caused by repolarizing the right pair, from four
    /// electrostatic-energy evaluations at zero applied voltage.
    pub fn coupling_by_shift(&self) -> Result<f64, NetworkError> {
        self.coupling_by_shift_from(&ChargeState::new([0, 0, 0, 0]))
    }

    /// Same as [`coupling_by_shift`](Self::coupling_by_shift) but on top of
    /// a fixed background filling, which must leave the result unchanged.
    pub fn coupling_by_shift_from(&self, base: &ChargeState) -> Result<f64, NetworkError> {
        let solver = self.solver()?;
        let v = SourceVoltages::zero();
        let add = |extra: [u32; 4]| {
            let mut n = base.n();
            for (ni, e) in n.iter_mut().zip(extra) {
                *ni += e;
            }
            solver.energy(&ChargeState::new(n), &v)
        };
        let u_outer_outer = add([1, 0, 0, 1]);
        let u_outer_inner = add([1, 0, 1, 0]);
        let u_inner_outer = add([0, 1, 0, 1]);
        let u_inner_inner = add([0, 1, 1, 0]);
        // Left-pair detuning is U(outer) - U(inner) of islands (1,2); the
        // coupling is how much that detuning moves when the right pair flips
        // between islands 3 and 4.
        Ok((u_inner_inner - u_outer_inner) - (u_inner_outer - u_outer_outer))
    }

    /// Lever arms of the four plunger gates onto the four islands, in
    /// ueV/mV.
    pub fn lever_arms(&self) -> Result<LeverArmSet, NetworkError> {
        let solver = self.solver()?;
        let inv = &solver.inv;
        let mut alpha = [[0.0; 4]; 4];
        for dot in 0..4 {
            for gate in 0..4 {
                alpha[dot][gate] =
                    E2_OVER_AF_UEV * inv[(dot, gate)] * self.c_gate[gate] * AF_MV_TO_E;
            }
        }
        Ok(LeverArmSet { alpha })
    }

    /// Lowest-energy charge configuration under the given voltages, with
    /// every island occupancy searched over `0..=n_max`.
    ///
    /// Ties are broken toward the lexicographically smallest configuration.
    /// The innermost occupancy is not enumerated: the energy is a convex
    /// quadratic in each occupancy, so for fixed `(n_1, n_2, n_3)` only the
    /// floor and ceiling of the continuous minimizer of `n_4` (clamped to
    /// the search box) can be optimal.
    pub fn ground_state_config(
        &self,
        v: &SourceVoltages,
        n_max: u32,
    ) -> Result<ChargeState, NetworkError> {
        Ok(self.solver()?.ground_state(v, n_max))
    }
}

fn check_finite(name: &'static str, value: f64) -> Result<(), NetworkError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(NetworkError::NotFinite { name })
    }
}

impl<'de> Deserialize<'de> for CapacitanceNetwork {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            c_total: [f64; 4],
            c_inter: [f64; 3],
            #[serde(default)]
            c_gate: [f64; 4],
            #[serde(default)]
            c_ohmic: [f64; 2],
        }
        let raw = Raw::deserialize(deserializer)?;
        CapacitanceNetwork::new(raw.c_total, raw.c_inter, raw.c_gate, raw.c_ohmic)
            .map_err(serde::de::Error::custom)
    }
}

/// Number of excess electrons on each island.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChargeState {
    n: [u32; 4],
}

impl ChargeState {
    pub fn new(n: [u32; 4]) -> Self {
        Self { n }
    }

    pub fn n(&self) -> [u32; 4] {
        self.n
    }

    /// Total electron count.
    pub fn total(&self) -> u32 {
        self.n.iter().sum()
    }
}

impl std::fmt::Display for ChargeState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c, d] = self.n;
        write!(f, "({a},{b},{c},{d})")
    }
}

/// Voltages applied to the plunger gates and the two ohmic leads, in mV.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceVoltages {
    pub v_gate: [f64; 4],
    pub v_ohmic: [f64; 2],
}

impl SourceVoltages {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn gates(v_gate: [f64; 4]) -> Self {
        Self {
            v_gate,
            v_ohmic: [0.0; 2],
        }
    }
}

/// Charging energies `E_C1..E_C4` and nearest-neighbor coupling energies
/// `E_C12, E_C23, E_C34`, in ueV, with optional one-sigma uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrostaticEnergies {
    /// Charging energies of islands 1..4.
    pub e_c: [f64; 4],
    /// Coupling energies of pairs (1,2), (2,3), (3,4).
    pub e_cc: [f64; 3],
    /// One-sigma uncertainties on `e_c`, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_e_c: Option<[f64; 4]>,
    /// One-sigma uncertainties on `e_cc`, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_e_cc: Option<[f64; 3]>,
}

impl ElectrostaticEnergies {
    pub fn new(e_c: [f64; 4], e_cc: [f64; 3]) -> Self {
        Self {
            e_c,
            e_cc,
            sigma_e_c: None,
            sigma_e_cc: None,
        }
    }
}

/// Dots-only network recovered from charging energies, together with
/// propagated uncertainties when the energies carried any.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveredCapacitances {
    pub network: CapacitanceNetwork,
    pub sigma_c_total: Option<[f64; 4]>,
    pub sigma_c_inter: Option<[f64; 3]>,
}

/// Invert the energy formulas: reconstruct the dots-only network whose
/// charging and coupling energies match the given set.
///
/// Uncertainties, when present on the input, are propagated to the
/// capacitances to first order assuming independent errors.
pub fn capacitances_from_energies(
    energies: &ElectrostaticEnergies,
) -> Result<RecoveredCapacitances, NetworkError> {
    let (c_total, c_inter) = raw_capacitances(&energies.e_c, &energies.e_cc)?;
    let network = CapacitanceNetwork::dots_only(c_total, c_inter).map_err(|e| {
        NetworkError::UnphysicalEnergies {
            reason: format!("reconstructed capacitances are invalid: {e}"),
        }
    })?;

    let (sigma_c_total, sigma_c_inter) = match (&energies.sigma_e_c, &energies.sigma_e_cc) {
        (Some(se), Some(sc)) => {
            let (st, si) = propagate_sigma(&energies.e_c, &energies.e_cc, se, sc)?;
            (Some(st), Some(si))
        }
        (None, None) => (None, None),
        _ => {
            return Err(NetworkError::UnphysicalEnergies {
                reason: "uncertainties must be given for all energies or none".into(),
            })
        }
    };

    Ok(RecoveredCapacitances {
        network,
        sigma_c_total,
        sigma_c_inter,
    })
}

/// Closed-form inversion without validation of the resulting network.
fn raw_capacitances(e_c: &[f64; 4], e_cc: &[f64; 3]) -> Result<([f64; 4], [f64; 3]), NetworkError> {
    for (&e, name) in e_c.iter().zip(["E_C1", "E_C2", "E_C3", "E_C4"]) {
        check_finite(name, e)?;
        if e <= 0.0 {
            return Err(NetworkError::NonPositive { name, value: e });
        }
    }
    for (&e, name) in e_cc.iter().zip(["E_C12", "E_C23", "E_C34"]) {
        check_finite(name, e)?;
        if e < 0.0 {
            return Err(NetworkError::NonPositive { name, value: e });
        }
    }

    let [e1, e2, e3, e4] = *e_c;
    let [e12, e23, e34] = *e_cc;
    let d12 = e1 * e2 - e12 * e12;
    let d23 = e2 * e3 - e23 * e23;
    let d34 = e3 * e4 - e34 * e34;
    for (d, pair) in [(d12, "E_C1 E_C2"), (d23, "E_C2 E_C3"), (d34, "E_C3 E_C4")] {
        if d <= 0.0 {
            return Err(NetworkError::UnphysicalEnergies {
                reason: format!("coupling energy exceeds the geometric mean of {pair}"),
            });
        }
    }

    let k = E2_OVER_AF_UEV;
    let c1 = k * e2 / d12;
    let c4 = k * e3 / d34;
    let c2 = k * (e1 * e2 * e2 * e3 - e12 * e12 * e23 * e23) / (e2 * d12 * d23);
    let c3 = k * (e2 * e3 * e3 * e4 - e23 * e23 * e34 * e34) / (e3 * d23 * d34);
    let c12 = k * e12 / d12;
    let c23 = k * e23 / d23;
    let c34 = k * e34 / d34;

    Ok(([c1, c2, c3, c4], [c12, c23, c34]))
}

/// First-order propagation of independent energy uncertainties through the
/// inversion, with partial derivatives taken by central differences.
fn propagate_sigma(
    e_c: &[f64; 4],
    e_cc: &[f64; 3],
    sigma_e_c: &[f64; 4],
    sigma_e_cc: &[f64; 3],
) -> Result<([f64; 4], [f64; 3]), NetworkError> {
    let mut var_total = [0.0; 4];
    let mut var_inter = [0.0; 3];
    let mut accumulate = |idx: usize, is_coupling: bool, sigma: f64| -> Result<(), NetworkError> {
        if sigma == 0.0 {
            return Ok(());
        }
        let base = if is_coupling { e_cc[idx] } else { e_c[idx] };
        let h = 1e-6 * base.abs().max(1e-3);
        let at = |delta: f64| {
            let mut ec = *e_c;
            let mut ecc = *e_cc;
            if is_coupling {
                ecc[idx] = base + delta;
            } else {
                ec[idx] = base + delta;
            }
            raw_capacitances(&ec, &ecc)
        };
        let (tp, ip) = at(h)?;
        let (tm, im) = at(-h)?;
        for j in 0..4 {
            let deriv = (tp[j] - tm[j]) / (2.0 * h);
            var_total[j] += (deriv * sigma).powi(2);
        }
        for j in 0..3 {
            let deriv = (ip[j] - im[j]) / (2.0 * h);
            var_inter[j] += (deriv * sigma).powi(2);
        }
        Ok(())
    };

    for (i, &s) in sigma_e_c.iter().enumerate() {
        accumulate(i, false, s)?;
    }
    for (i, &s) in sigma_e_cc.iter().enumerate() {
        accumulate(i, true, s)?;
    }

    Ok((var_total.map(f64::sqrt), var_inter.map(f64::sqrt)))
}

/// Lever arms of the plunger gates onto the islands, in ueV/mV.
///
/// `alpha[dot][gate]` is how much the addition energy of `dot` drops per mV
/// of positive voltage on `gate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverArmSet {
    pub alpha: [[f64; 4]; 4],
}

impl LeverArmSet {
    /// Signed sensitivities of the two pair detunings to each gate, in
    /// ueV/mV: `d eps_L / d V_k` and `d eps_R / d V_k`.
    ///
    /// The detuning of a pair is the energy of its outer-island
    /// configuration minus its inner-island configuration (islands 1 vs 2 on
    /// the left, 4 vs 3 on the right), so raising a pair's own plunger gives
    /// a negative coefficient of magnitude `alpha(outer) - alpha(inner)`.
    pub fn detuning_coefficients(&self) -> ([f64; 4], [f64; 4]) {
        let mut d_left = [0.0; 4];
        let mut d_right = [0.0; 4];
        for gate in 0..4 {
            d_left[gate] = self.alpha[1][gate] - self.alpha[0][gate];
            d_right[gate] = self.alpha[2][gate] - self.alpha[3][gate];
        }
        (d_left, d_right)
    }
}

/// Cached inverse Maxwell matrix for repeated electrostatic-energy
/// evaluations over one network.
#[derive(Debug, Clone)]
pub struct ChargeEnergySolver {
    net: CapacitanceNetwork,
    inv: Matrix4<f64>,
}

impl ChargeEnergySolver {
    /// Gate- and lead-induced island charge in units of the elementary
    /// charge (positive for positive applied voltage).
    pub fn induced_charge(&self, v: &SourceVoltages) -> Vector4<f64> {
        let g = &self.net.c_gate;
        let o = &self.net.c_ohmic;
        Vector4::new(
            (g[0] * v.v_gate[0] + o[0] * v.v_ohmic[0]) * AF_MV_TO_E,
            g[1] * v.v_gate[1] * AF_MV_TO_E,
            g[2] * v.v_gate[2] * AF_MV_TO_E,
            (g[3] * v.v_gate[3] + o[1] * v.v_ohmic[1]) * AF_MV_TO_E,
        )
    }

    /// Electrostatic energy in ueV of `state` under voltages `v`.
    ///
    /// Electrons carry negative charge, so the net island charge in electron
    /// units is the induced charge minus the occupancy.
    pub fn energy(&self, state: &ChargeState, v: &SourceVoltages) -> f64 {
        let induced = self.induced_charge(v);
        let q = induced - Vector4::new(
            state.n[0] as f64,
            state.n[1] as f64,
            state.n[2] as f64,
            state.n[3] as f64,
        );
        self.energy_of_charge(&q)
    }

    fn energy_of_charge(&self, q: &Vector4<f64>) -> f64 {
        0.5 * E2_OVER_AF_UEV * (self.inv * q).dot(q)
    }

    /// See [`CapacitanceNetwork::ground_state_config`].
    pub fn ground_state(&self, v: &SourceVoltages, n_max: u32) -> ChargeState {
        let induced = self.induced_charge(v);
        let mut best = ChargeState::new([0, 0, 0, 0]);
        let mut best_u = f64::INFINITY;
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                for n3 in 0..=n_max {
                    // Continuous minimizer over n4 at fixed (n1, n2, n3):
                    // solve d U / d n4 = 0 for the quadratic form.
                    let q1 = induced[0] - n1 as f64;
                    let q2 = induced[1] - n2 as f64;
                    let q3 = induced[2] - n3 as f64;
                    let partial =
                        self.inv[(3, 0)] * q1 + self.inv[(3, 1)] * q2 + self.inv[(3, 2)] * q3;
                    let n4_star = induced[3] + partial / self.inv[(3, 3)];
                    let lo = (n4_star.floor().max(0.0) as u32).min(n_max);
                    let hi = (n4_star.ceil().max(0.0) as u32).min(n_max);
                    for n4 in lo..=hi.max(lo) {
                        let q = Vector4::new(q1, q2, q3, induced[3] - n4 as f64);
                        let u = self.energy_of_charge(&q);
                        if u < best_u {
                            best_u = u;
                            best = ChargeState::new([n1, n2, n3, n4]);
                        }
                        if n4 == hi {
                            break;
                        }
                    }
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_net() -> CapacitanceNetwork {
        CapacitanceNetwork::new(
            [45.0, 45.0, 45.0, 45.0],
            [9.0, 2.25, 9.0],
            [3.0, 3.0, 3.0, 3.0],
            [2.0, 2.0],
        )
        .unwrap()
    }

    /// Random dominance-respecting network with device-scale values.
    fn random_net(rng: &mut impl Rng) -> CapacitanceNetwork {
        let c_inter = [
            rng.gen_range(2.0..13.0),
            rng.gen_range(1.0..6.0),
            rng.gen_range(2.0..13.0),
        ];
        let c_gate = [(); 4].map(|_| rng.gen_range(1.0..5.0));
        let c_ohmic = [(); 2].map(|_| rng.gen_range(0.5..3.0));
        let mut c_total = [0.0; 4];
        for node in 0..4 {
            let neighbors = match node {
                0 => c_inter[0],
                1 => c_inter[0] + c_inter[1],
                2 => c_inter[1] + c_inter[2],
                3 => c_inter[2],
                _ => unreachable!(),
            };
            let lead = match node {
                0 => c_ohmic[0],
                3 => c_ohmic[1],
                _ => 0.0,
            };
            let ground = rng.gen_range(5.0..40.0);
            c_total[node] = neighbors + c_gate[node] + lead + ground;
        }
        CapacitanceNetwork::new(c_total, c_inter, c_gate, c_ohmic).unwrap()
    }

    #[test]
    fn rejects_dominance_violation() {
        let err = CapacitanceNetwork::new(
            [9.0, 45.0, 45.0, 45.0],
            [9.0, 2.25, 9.0],
            [0.0; 4],
            [0.0; 2],
        )
        .unwrap_err();
        assert!(matches!(err, NetworkError::DominanceViolated { node: 1, .. }));
    }

    #[test]
    fn rejects_non_positive_total() {
        let err =
            CapacitanceNetwork::new([45.0, 0.0, 45.0, 45.0], [9.0, 2.25, 9.0], [0.0; 4], [0.0; 2])
                .unwrap_err();
        assert!(matches!(err, NetworkError::NonPositive { name: "C_2", .. }));
    }

    #[test]
    fn determinant_matches_generic_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let net = random_net(&mut rng);
            assert_relative_eq!(
                net.determinant(),
                net.maxwell_matrix().determinant(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn determinant_reference_value() {
        let net = CapacitanceNetwork::dots_only([45.0; 4], [9.0, 2.25, 9.0]).unwrap();
        assert_relative_eq!(net.determinant(), 3_768_884.4375, max_relative = 1e-15);
    }

    #[test]
    fn charging_energy_is_second_difference_of_energy() {
        // E_Ci is the addition-energy step: U(n+2e_i) - 2 U(n+e_i) + U(n),
        // independent of applied voltages for a quadratic form.
        let net = reference_net();
        let solver = net.solver().unwrap();
        let energies = net.energies();
        let v = SourceVoltages {
            v_gate: [12.0, -3.0, 7.5, 0.25],
            v_ohmic: [1.0, -2.0],
        };
        for dot in 0..4 {
            let n0 = [1, 1, 1, 1];
            let mut n1 = n0;
            n1[dot] += 1;
            let mut n2 = n0;
            n2[dot] += 2;
            let u0 = solver.energy(&ChargeState::new(n0), &v);
            let u1 = solver.energy(&ChargeState::new(n1), &v);
            let u2 = solver.energy(&ChargeState::new(n2), &v);
            assert_relative_eq!(u2 - 2.0 * u1 + u0, energies.e_c[dot], max_relative = 1e-9);
        }
    }

    #[test]
    fn coupling_energy_is_mixed_second_difference() {
        let net = reference_net();
        let solver = net.solver().unwrap();
        let energies = net.energies();
        let v = SourceVoltages {
            v_gate: [-4.0, 2.0, 0.0, 9.0],
            v_ohmic: [0.5, 0.0],
        };
        for (pair, (i, j)) in [(0, (0usize, 1usize)), (1, (1, 2)), (2, (2, 3))] {
            let base = [2, 1, 0, 3];
            let mut ni = base;
            ni[i] += 1;
            let mut nj = base;
            nj[j] += 1;
            let mut nij = base;
            nij[i] += 1;
            nij[j] += 1;
            let u00 = solver.energy(&ChargeState::new(base), &v);
            let u10 = solver.energy(&ChargeState::new(ni), &v);
            let u01 = solver.energy(&ChargeState::new(nj), &v);
            let u11 = solver.energy(&ChargeState::new(nij), &v);
            assert_relative_eq!(
                u11 - u10 - u01 + u00,
                energies.e_cc[pair],
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn single_electron_energy_is_half_charging_energy() {
        // U = (1/2) q C^{-1} q, so one electron at zero volts costs half the
        // addition-energy step.
        let net = reference_net();
        let u = net
            .electrostatic_energy(&ChargeState::new([1, 0, 0, 0]), &SourceVoltages::zero())
            .unwrap();
        assert_relative_eq!(2.0 * u, net.energies().e_c[0], max_relative = 1e-12);
    }

    #[test]
    fn energies_to_capacitances_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let net = random_net(&mut rng);
            let dots = CapacitanceNetwork::dots_only(net.c_total(), net.c_inter()).unwrap();
            let rec = capacitances_from_energies(&dots.energies()).unwrap();
            for i in 0..4 {
                assert_relative_eq!(
                    rec.network.c_total()[i],
                    dots.c_total()[i],
                    max_relative = 1e-11
                );
            }
            for i in 0..3 {
                assert_relative_eq!(
                    rec.network.c_inter()[i],
                    dots.c_inter()[i],
                    max_relative = 1e-11
                );
            }
        }
    }

    #[test]
    fn uncertainty_propagation_scales_linearly() {
        let net = CapacitanceNetwork::dots_only([45.0; 4], [9.0, 2.25, 9.0]).unwrap();
        let mut energies = net.energies();
        energies.sigma_e_c = Some([20.0, 20.0, 20.0, 20.0]);
        energies.sigma_e_cc = Some([5.0, 2.0, 5.0]);
        let rec1 = capacitances_from_energies(&energies).unwrap();
        energies.sigma_e_c = Some([40.0, 40.0, 40.0, 40.0]);
        energies.sigma_e_cc = Some([10.0, 4.0, 10.0]);
        let rec2 = capacitances_from_energies(&energies).unwrap();
        let s1 = rec1.sigma_c_total.unwrap();
        let s2 = rec2.sigma_c_total.unwrap();
        for i in 0..4 {
            assert!(s1[i] > 0.0);
            assert_relative_eq!(s2[i], 2.0 * s1[i], max_relative = 1e-6);
        }
    }

    #[test]
    fn rejects_unphysical_energy_sets() {
        // Coupling energy above the geometric mean of its charging energies
        // corresponds to no positive-definite network.
        let energies = ElectrostaticEnergies::new([3000.0; 4], [3200.0, 150.0, 400.0]);
        let err = capacitances_from_energies(&energies).unwrap_err();
        assert!(matches!(err, NetworkError::UnphysicalEnergies { .. }));
    }

    #[test]
    fn coupling_reference_value() {
        let net = CapacitanceNetwork::dots_only([45.0; 4], [9.0, 2.25, 9.0]).unwrap();
        let g = net.coupling_exact();
        assert_relative_eq!(g, 123.961, max_relative = 1e-4);
        assert_relative_eq!(crate::units::uev_to_ghz(g), 29.97, max_relative = 1e-3);
    }

    #[test]
    fn coupling_shift_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let net = random_net(&mut rng);
            let exact = net.coupling_exact();
            let shift = net.coupling_by_shift().unwrap();
            assert_relative_eq!(shift, exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn coupling_shift_independent_of_background_filling() {
        let net = reference_net();
        let base = net.coupling_by_shift().unwrap();
        for filling in [[2, 3, 3, 2], [5, 0, 1, 4], [7, 7, 7, 7]] {
            let shifted = net
                .coupling_by_shift_from(&ChargeState::new(filling))
                .unwrap();
            assert_relative_eq!(shifted, base, max_relative = 1e-8);
        }
    }

    #[test]
    fn series_tracks_exact_for_weak_coupling() {
        let c = 45.0;
        for &c23 in &[0.03, 0.05, 0.08] {
            for &c1x in &[0.1, 0.15, 0.2] {
                let net = CapacitanceNetwork::dots_only(
                    [c; 4],
                    [c1x * c, c23 * c, c1x * c],
                )
                .unwrap();
                let e_c = E2_OVER_AF_UEV / c;
                let gap = (net.coupling_exact() - net.coupling_series()).abs() / e_c;
                assert!(gap < 0.01, "series error {gap} too large at c23={c23} c1x={c1x}");
            }
        }
    }

    #[test]
    fn coupling_trends_with_capacitances() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let net = random_net(&mut rng);
            let g0 = net.coupling_exact();
            let bump = |idx: usize| {
                let mut inter = net.c_inter();
                inter[idx] += 0.05;
                CapacitanceNetwork::new(net.c_total(), inter, net.c_gate(), net.c_ohmic())
                    .unwrap()
                    .coupling_exact()
            };
            assert!(bump(1) > g0, "coupling must grow with the middle coupler");
            assert!(bump(0) < g0, "coupling must fall with the left intra-pair coupler");
            assert!(bump(2) < g0, "coupling must fall with the right intra-pair coupler");
        }
    }

    #[test]
    fn device_scale_capacitances_give_measured_energy_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let mut c_total = [0.0; 4];
            for c in &mut c_total {
                *c = rng.gen_range(38.5..65.0);
            }
            let c_inter = [
                rng.gen_range(2.0..8.0),
                rng.gen_range(1.0..4.0),
                rng.gen_range(2.0..8.0),
            ];
            let net = CapacitanceNetwork::dots_only(c_total, c_inter).unwrap();
            for e in net.energies().e_c {
                assert!((2400.0..4400.0).contains(&e), "E_C {e} ueV out of window");
            }
        }
    }

    #[test]
    fn lever_arms_probe_own_island_strongest() {
        let lever = reference_net().lever_arms().unwrap();
        for dot in 0..4 {
            for gate in 0..4 {
                assert!(lever.alpha[dot][gate] > 0.0);
                if gate != dot {
                    assert!(lever.alpha[dot][dot] > lever.alpha[dot][gate]);
                }
            }
        }
        // Plunger of island 1 at C_g = 3 aF over C ~ 45 aF: roughly
        // 1000 mV->ueV * 3/45, softened by the network.
        assert!((40.0..80.0).contains(&lever.alpha[0][0]));
    }

    #[test]
    fn detuning_coefficients_combine_pair_lever_arms() {
        let lever = reference_net().lever_arms().unwrap();
        let (d_left, d_right) = lever.detuning_coefficients();
        assert_relative_eq!(
            d_left[0],
            lever.alpha[1][0] - lever.alpha[0][0],
            max_relative = 1e-12
        );
        assert!(d_left[0] < 0.0, "own plunger must pull the detuning down");
        assert!(d_right[3] < 0.0);
        assert_relative_eq!(
            -d_left[0],
            lever.alpha[0][0] - lever.alpha[1][0],
            max_relative = 1e-12
        );
    }

    #[test]
    fn ground_state_empties_at_deep_negative_voltages() {
        let net = reference_net();
        let v = SourceVoltages {
            v_gate: [-400.0; 4],
            v_ohmic: [0.0; 2],
        };
        let gs = net.ground_state_config(&v, 6).unwrap();
        assert_eq!(gs.n(), [0, 0, 0, 0]);
    }

    #[test]
    fn ground_state_fills_monotonically_with_own_plunger() {
        let net = reference_net();
        let mut last = 0;
        for step in 0..60 {
            let v1 = -50.0 + step as f64 * 25.0;
            let v = SourceVoltages::gates([v1, -50.0, -50.0, -50.0]);
            let n1 = net.ground_state_config(&v, 8).unwrap().n()[0];
            assert!(n1 >= last, "occupancy must not drop as the plunger rises");
            last = n1;
        }
        assert!(last >= 2, "sweep must add electrons");
    }

    #[test]
    fn ground_state_matches_exhaustive_search() {
        let net = reference_net();
        let solver = net.solver().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let v = SourceVoltages {
                v_gate: [(); 4].map(|_| rng.gen_range(-100.0..800.0)),
                v_ohmic: [0.0; 2],
            };
            let fast = solver.ground_state(&v, 5);
            let mut best = ChargeState::new([0, 0, 0, 0]);
            let mut best_u = f64::INFINITY;
            for n1 in 0..=5 {
                for n2 in 0..=5 {
                    for n3 in 0..=5 {
                        for n4 in 0..=5 {
                            let s = ChargeState::new([n1, n2, n3, n4]);
                            let u = solver.energy(&s, &v);
                            if u < best_u {
                                best_u = u;
                                best = s;
                            }
                        }
                    }
                }
            }
            assert_eq!(fast, best, "pruned search diverged at v={v:?}");
        }
    }

    proptest! {
        #[test]
        fn energies_round_trip_property(
            seed in 0u64..10_000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_net(&mut rng);
            let dots = CapacitanceNetwork::dots_only(net.c_total(), net.c_inter()).unwrap();
            let rec = capacitances_from_energies(&dots.energies()).unwrap();
            for i in 0..4 {
                prop_assert!(
                    (rec.network.c_total()[i] - dots.c_total()[i]).abs()
                        / dots.c_total()[i] < 1e-9
                );
            }
            for i in 0..3 {
                prop_assert!(
                    (rec.network.c_inter()[i] - dots.c_inter()[i]).abs()
                        / dots.c_inter()[i] < 1e-9
                );
            }
        }

        #[test]
        fn coupling_is_positive_and_below_charging_scale(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_net(&mut rng);
            let g = net.coupling_exact();
            let e_c = net.energies().e_c;
            prop_assert!(g > 0.0);
            prop_assert!(g < e_c.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    }
}
