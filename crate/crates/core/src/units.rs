//! Unit system and physical constants.
//!
//! Time is in ns, angular frequency in rad/ns, energy in µeV, temperature in
//! mK, resistance in kΩ and bias voltage in units of Δ/e. With these choices
//! µV / kΩ = nA and µeV / ns = 1e-6 eV / 1e-9 s = 1e3 eV/s.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Planck constant, µeV·ns.
pub const H_PLANCK: f64 = 4.135_667_696;
/// Reduced Planck constant, µeV·ns.
pub const HBAR: f64 = H_PLANCK / (2.0 * PI);
/// Boltzmann constant, µeV/mK.
pub const K_B: f64 = 0.086_173_332_62;
/// Elementary charge, C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;

/// Conversion from µeV/ns to eV/s.
pub const UEV_PER_NS_TO_EV_PER_S: f64 = 1.0e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub k_b: f64,
    pub e_charge: f64,
    pub h: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            k_b: K_B,
            e_charge: E_CHARGE,
            h: H_PLANCK,
        }
    }
}

/// Angular frequency in rad/ns for a frequency given in GHz.
pub fn ghz(f: f64) -> f64 {
    2.0 * PI * f
}

/// Angular frequency in rad/ns for a frequency given in MHz.
pub fn mhz(f: f64) -> f64 {
    2.0 * PI * f * 1e-3
}

/// Energy (µeV) of a quantum at angular frequency `omega` (rad/ns).
pub fn energy_of(omega: f64) -> f64 {
    HBAR * omega
}

/// Thermal energy k_B·T in µeV for T in mK.
pub fn thermal_energy(t_mk: f64) -> f64 {
    K_B * t_mk
}

/// Bose–Einstein occupation of a mode with energy `e` (µeV) at `t_mk`.
pub fn bose_einstein(e: f64, t_mk: f64) -> f64 {
    if t_mk <= 0.0 {
        return 0.0;
    }
    1.0 / (e / thermal_energy(t_mk)).exp_m1()
}

/// Fermi–Dirac occupation at energy `e` (µeV) relative to the chemical potential.
pub fn fermi(e: f64, t_mk: f64) -> f64 {
    let kt = thermal_energy(t_mk);
    if kt <= 0.0 {
        return if e < 0.0 {
            1.0
        } else if e > 0.0 {
            0.0
        } else {
            0.5
        };
    }
    let x = e / kt;
    if x > 0.0 {
        let q = (-x).exp();
        q / (1.0 + q)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_consistent() {
        let c = PhysicalConstants::default();
        assert!(((c.h / (2.0 * PI)) - c.hbar).abs() <= f64::EPSILON * c.hbar);
        assert!(c.hbar > 0.0 && c.k_b > 0.0 && c.e_charge > 0.0 && c.h > 0.0);
    }

    #[test]
    fn qubit_quantum_is_16_74_uev() {
        assert!((energy_of(ghz(4.047)) - 16.737).abs() < 1e-3);
        assert!((thermal_energy(100.0) - 8.6173).abs() < 1e-4);
    }

    #[test]
    fn fermi_limits() {
        assert_eq!(fermi(0.0, 100.0), 0.5);
        assert!(fermi(-1e4, 100.0) > 1.0 - 1e-12);
        assert!(fermi(1e4, 100.0) < 1e-12);
        assert_eq!(fermi(-1.0, 0.0), 1.0);
    }
}
