//! Simulation and parameter extraction for a linear quadruple quantum-dot
//! array operated as two capacitively coupled charge qubits.
//!
//! The crate covers the full loop between device parameters and observable
//! data:
//!
//! - [`electrostatics`]: constant-interaction capacitance network of the
//!   four islands, charging energies, and the inter-qubit coupling.
//! - [`hamiltonian`]: the coupled two-qubit Hamiltonian, its spectrum, and
//!   thermally averaged charge polarizations.
//! - [`diagram`]: synthesis of charge-sensor maps (polarization diagrams and
//!   honeycomb stability diagrams) on voltage or detuning grids.
//! - [`io`]: CSV grids with JSON sidecars for diagrams and reports.
//! - [`fit`]: the inverse problem, from linecut peak fits up to full
//!   Hamiltonian parameter extraction and thermal lever-arm calibration.
//! - [`bem`]: a small boundary-element solver for gate-geometry capacitance
//!   estimates.

pub mod bem;
pub mod diagram;
pub mod electrostatics;
pub mod error;
pub mod fit;
pub mod hamiltonian;
pub mod io;
pub mod units;

pub use bem::{
    bem_capacitance, isolated_disc_capacitance, power_law_fit, sweep_distance, CapacitancePair,
    DiscPairGeometry, PowerLawFit, SweepPoint,
};
pub use diagram::{
    add_noise, synthesize_honeycomb, synthesize_polarization_diagram, Axis, DetuningCalibration,
    DiagramGrid, GridMeta, HoneycombSensor, SensorModel,
};
pub use electrostatics::{
    capacitances_from_energies, CapacitanceNetwork, ChargeEnergySolver, ChargeState,
    ElectrostaticEnergies, LeverArmSet, RecoveredCapacitances, SourceVoltages,
};
pub use error::{BemError, DiagramError, FitError, NetworkError, SpectrumError};
pub use fit::curvature::{extract_hamiltonian, HamiltonianFit};
pub use fit::honeycomb::{extract_energies, EnergyTable, PairPlan, Window};
pub use fit::shift::{extract_g, ShiftCurveFit};
pub use fit::thermal::{
    fit_thermal_broadening, ThermalBroadeningData, ThermalCalibration, ThermalSeries,
};
pub use hamiltonian::{
    eigensystem, hamiltonian_matrix, polarization_line_location, thermal_polarization,
    EigenSystem, Side, TwoQubitParams,
};
