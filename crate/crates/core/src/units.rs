//! Unit system and physical constants.
//!
//! All internal quantities use a fixed unit set chosen so that device-scale
//! numbers stay near unity: capacitance in attofarad (aF), energy in
//! micro-electronvolt (ueV), voltage in millivolt (mV), temperature in kelvin
//! (K). Frequencies quoted in GHz are converted through Planck's constant.

/// Elementary charge in coulomb.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Planck constant expressed as ueV per GHz.
pub const PLANCK_UEV_PER_GHZ: f64 = 4.135_667_696;

/// Boltzmann constant expressed as ueV per kelvin.
pub const BOLTZMANN_UEV_PER_K: f64 = 86.173_303;

/// Charging-energy scale e^2 / (1 aF) expressed in ueV.
///
/// With C in aF, e^2/C in ueV equals this constant divided by the numeric
/// value of C.
pub const E2_OVER_AF_UEV: f64 = 160_217.6634;

/// Charge induced on a node by 1 aF * 1 mV, in units of the elementary
/// charge: 1e-21 C / e.
pub const AF_MV_TO_E: f64 = 1e-21 / ELEMENTARY_CHARGE;

/// Vacuum permittivity in aF/nm (8.8541878128e-12 F/m).
///
/// With lengths in nm this puts boundary-element capacitances directly in
/// aF: a disc of diameter 80 nm has 4*eps*D = 2.83 aF in vacuum.
pub const EPSILON_0_AF_PER_NM: f64 = 8.854_187_812_8e-3;

/// Convert a frequency in GHz to an energy in ueV.
#[inline]
pub fn ghz_to_uev(f_ghz: f64) -> f64 {
    f_ghz * PLANCK_UEV_PER_GHZ
}

/// Convert an energy in ueV to a frequency in GHz.
#[inline]
pub fn uev_to_ghz(e_uev: f64) -> f64 {
    e_uev / PLANCK_UEV_PER_GHZ
}

/// Thermal energy k_B * T in ueV for a temperature in kelvin.
#[inline]
pub fn kelvin_to_uev(t_kelvin: f64) -> f64 {
    t_kelvin * BOLTZMANN_UEV_PER_K
}

/// Convert millikelvin to kelvin.
#[inline]
pub fn mk_to_kelvin(t_mk: f64) -> f64 {
    t_mk * 1e-3
}
