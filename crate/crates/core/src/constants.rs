//! Physical constants, species data and the two helper quantities every
//! other module leans on.
//!
//! All values are SI. Constants carry six significant figures (CODATA 2018,
//! rounded).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.05457e-34;
/// Planck constant (J·s).
pub const PLANCK: f64 = 6.62607e-34;
/// Bohr magneton (J/T).
pub const BOHR_MAGNETON: f64 = 9.27401e-24;
/// Bohr radius (m).
pub const BOHR_RADIUS: f64 = 5.29177e-11;
/// Atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.66054e-27;

/// Tesla per gauss.
pub const GAUSS: f64 = 1.0e-4;

/// Bundle of the fundamental constants, for callers that want to carry them
/// around (or serialize them) as one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub hbar: f64,
    pub mu_b: f64,
    pub a0: f64,
    pub h: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            mu_b: BOHR_MAGNETON,
            a0: BOHR_RADIUS,
            h: PLANCK,
        }
    }
}

/// Landé factor of one hyperfine manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperfineLevel {
    pub f: u8,
    pub g_f: f64,
}

/// A Zeeman sublevel |F, m_F>.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeemanState {
    pub f: u8,
    pub m_f: i8,
}

/// Atomic species: mass and signed g_F per hyperfine level.
///
/// Sign convention: g_F = g_J [F(F+1) - I(I+1) + J(J+1)] / [2F(F+1)] with
/// g_J = 2 and nuclear contributions neglected, so the lower ground-state
/// manifold carries the negative factor (⁸⁵Rb F=2: -1/3, ⁸⁷Rb F=1: -1/2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub label: String,
    pub mass: f64,
    pub levels: Vec<HyperfineLevel>,
}

impl Species {
    pub fn rb85() -> Self {
        Self {
            label: "85Rb".to_string(),
            mass: 1.40999e-25,
            levels: vec![
                HyperfineLevel { f: 2, g_f: -1.0 / 3.0 },
                HyperfineLevel { f: 3, g_f: 1.0 / 3.0 },
            ],
        }
    }

    pub fn rb87() -> Self {
        Self {
            label: "87Rb".to_string(),
            mass: 1.44316e-25,
            levels: vec![HyperfineLevel { f: 1, g_f: -0.5 }, HyperfineLevel { f: 2, g_f: 0.5 }],
        }
    }

    /// Look up a species by its label (`85Rb` / `87Rb`).
    pub fn by_label(label: &str) -> Result<Self> {
        match label {
            "85Rb" | "rb85" => Ok(Self::rb85()),
            "87Rb" | "rb87" => Ok(Self::rb87()),
            other => Err(Error::Domain(format!("unknown species '{other}'"))),
        }
    }

    pub fn g_f(&self, f: u8) -> Result<f64> {
        self.levels
            .iter()
            .find(|l| l.f == f)
            .map(|l| l.g_f)
            .ok_or_else(|| Error::Domain(format!("{} has no F={f} level", self.label)))
    }
}

/// Radial and axial confinement of the waveguide.
///
/// The axial frequency is stored squared and signed: a negative value is an
/// expulsive (inverted) harmonic potential with |ω_z| = √|ω_z²|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapGeometry {
    pub omega_r: f64,
    pub omega_z_sq: f64,
}

impl TrapGeometry {
    pub fn new(omega_r: f64, omega_z_sq: f64) -> Result<Self> {
        if !(omega_r > 0.0 && omega_r.is_finite()) {
            return Err(Error::Domain(format!("omega_r must be positive, got {omega_r}")));
        }
        if !omega_z_sq.is_finite() {
            return Err(Error::Domain("omega_z_sq must be finite".into()));
        }
        Ok(Self { omega_r, omega_z_sq })
    }

    pub fn is_expulsive(&self) -> bool {
        self.omega_z_sq < 0.0
    }
}

/// Angular frequency from a frequency in Hz.
pub fn angular(hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * hz
}

/// Harmonic oscillator length √(ħ/mω).
pub fn harmonic_length(mass: f64, omega: f64) -> Result<f64> {
    if !(mass > 0.0) || !(omega > 0.0) {
        return Err(Error::Domain(format!(
            "harmonic length needs positive mass and frequency, got m={mass}, ω={omega}"
        )));
    }
    Ok((HBAR / (mass * omega)).sqrt())
}

/// Signed interaction parameter α = N·a·√(mω_r/ħ), i.e. N·a/σ_r.
pub fn interaction_parameter(atom_number: f64, a: f64, mass: f64, omega_r: f64) -> Result<f64> {
    if !(atom_number > 0.0) {
        return Err(Error::Domain(format!(
            "atom number must be positive, got {atom_number}"
        )));
    }
    Ok(atom_number * a / harmonic_length(mass, omega_r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn harmonic_length_rb85_70hz() {
        let l = harmonic_length(Species::rb85().mass, angular(70.0)).unwrap();
        assert!((l - 1.30e-6).abs() < 0.01e-6, "{l}");
    }

    #[test]
    fn harmonic_length_rb87_is_smaller() {
        let l85 = harmonic_length(Species::rb85().mass, angular(70.0)).unwrap();
        let l87 = harmonic_length(Species::rb87().mass, angular(70.0)).unwrap();
        assert!((l87 - 1.29e-6).abs() < 0.01e-6, "{l87}");
        assert!(l87 < l85);
    }

    #[test]
    fn harmonic_length_quadruple_frequency_halves() {
        let m = Species::rb85().mass;
        let l1 = harmonic_length(m, 100.0).unwrap();
        let l4 = harmonic_length(m, 400.0).unwrap();
        assert!((l1 / l4 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_length_rejects_non_positive() {
        assert!(harmonic_length(0.0, 1.0).is_err());
        assert!(harmonic_length(1.0, -1.0).is_err());
    }

    #[test]
    fn interaction_parameter_experiment_scale() {
        let m = Species::rb85().mass;
        let alpha = interaction_parameter(1e4, -30.0 * BOHR_RADIUS, m, angular(70.0)).unwrap();
        assert!(alpha < 0.0);
        assert!((alpha.abs() - 12.0).abs() <= 2.0, "{alpha}");
        let alpha15 = interaction_parameter(1.5e4, -30.0 * BOHR_RADIUS, m, angular(70.0)).unwrap();
        assert!((alpha15 + 18.3).abs() < 0.1, "{alpha15}");
        assert_eq!(interaction_parameter(1e4, 0.0, m, angular(70.0)).unwrap(), 0.0);
    }

    #[test]
    fn species_levels() {
        assert_eq!(Species::rb85().g_f(2).unwrap(), -1.0 / 3.0);
        assert_eq!(Species::rb87().g_f(1).unwrap(), -0.5);
        assert!(Species::rb87().g_f(3).is_err());
    }

    #[test]
    fn trap_geometry_validation() {
        assert!(TrapGeometry::new(angular(70.0), -(angular(3.0).powi(2)))
            .unwrap()
            .is_expulsive());
        assert!(TrapGeometry::new(0.0, 1.0).is_err());
    }

    #[test]
    fn bohr_radius_to_stated_precision() {
        assert!((BOHR_RADIUS - 5.29e-11).abs() < 0.005e-11);
        let c = Constants::default();
        assert!(c.hbar > 0.0 && c.mu_b > 0.0 && c.a0 > 0.0 && c.h > 0.0);
    }

    #[test]
    fn constants_round_trip_bit_exact() {
        let c = Constants::default();
        let text = toml::to_string(&c).unwrap();
        let back: Constants = toml::from_str(&text).unwrap();
        assert_eq!(c.hbar.to_bits(), back.hbar.to_bits());
        assert_eq!(c.mu_b.to_bits(), back.mu_b.to_bits());
        assert_eq!(c.a0.to_bits(), back.a0.to_bits());
        assert_eq!(c.h.to_bits(), back.h.to_bits());
        let sp = Species::rb85();
        let back: Species = toml::from_str(&toml::to_string(&sp).unwrap()).unwrap();
        assert_eq!(sp.mass.to_bits(), back.mass.to_bits());
    }

    proptest! {
        #[test]
        fn halving_frequency_scales_length_by_sqrt2(m in 1e-27f64..1e-24, w in 1.0f64..1e5) {
            let a = harmonic_length(m, w).unwrap();
            let b = harmonic_length(m, w / 2.0).unwrap();
            prop_assert!((b / a - 2f64.sqrt()).abs() < 1e-12);
        }

        #[test]
        fn interaction_parameter_is_bilinear(n in 1.0f64..1e6, a in -1e-8f64..1e-8, s in 0.1f64..10.0) {
            let m = Species::rb85().mass;
            let w = angular(70.0);
            let base = interaction_parameter(n, a, m, w).unwrap();
            let scaled_n = interaction_parameter(n * s, a, m, w).unwrap();
            let scaled_a = interaction_parameter(n, a * s, m, w).unwrap();
            prop_assert!((scaled_n - s * base).abs() <= 1e-12 * base.abs().max(1e-300));
            prop_assert!((scaled_a - s * base).abs() <= 1e-12 * base.abs().max(1e-300));
        }
    }
}
