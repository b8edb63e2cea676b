//! CODATA 2018 physical constants (SI).

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Impedance of free space (ohm).
pub const ETA0: f64 = 376.730_313_668;
/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Electron rest mass (kg).
pub const M_ELECTRON: f64 = 9.109_383_701_5e-31;
/// Planck constant (J s).
pub const H_PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Photon energy in eV for a frequency in Hz.
pub fn hz_to_ev(f: f64) -> f64 {
    H_PLANCK * f / E_CHARGE
}

/// Frequency in Hz for a photon energy in eV.
pub fn ev_to_hz(e: f64) -> f64 {
    e * E_CHARGE / H_PLANCK
}

/// Angular frequency (rad/s) for a photon energy in eV.
pub fn ev_to_omega(e: f64) -> f64 {
    e * E_CHARGE / HBAR
}

/// Vacuum wavelength in nm for a photon energy in eV.
pub fn ev_to_nm(e: f64) -> f64 {
    H_PLANCK * C0 / (e * E_CHARGE) * 1e9
}

/// Bundle of the constants entering the coupling-strength expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub electron_mass: f64,
    pub elementary_charge: f64,
    pub vacuum_permittivity: f64,
    pub hbar: f64,
    pub speed_of_light: f64,
}

pub const CODATA: PhysicalConstants =
    PhysicalConstants { electron_mass: M_ELECTRON, elementary_charge: E_CHARGE, vacuum_permittivity: EPS0, hbar: HBAR, speed_of_light: C0 };

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants_are_consistent() {
        assert!((HBAR * 2.0 * std::f64::consts::PI / H_PLANCK - 1.0).abs() < 1e-9);
        assert!((1.0 / (MU0 * EPS0).sqrt() / C0 - 1.0).abs() < 1e-9);
        assert!(((MU0 / EPS0).sqrt() / ETA0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn energy_wavelength_round_trip() {
        let nm = ev_to_nm(1.28);
        assert!((nm - 968.6).abs() < 0.1, "{nm}");
        assert!((hz_to_ev(ev_to_hz(1.28)) - 1.28).abs() < 1e-15);
    }
}
