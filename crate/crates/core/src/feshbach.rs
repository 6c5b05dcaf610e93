//! Magnetic Feshbach resonance model, waveguide field profile and the r.f.
//! spectroscopy used to map it.
//!
//! Fields are in gauss at the public boundary (that is how resonances are
//! quoted) and converted to tesla wherever they enter an SI formula.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::constants::{Species, ZeemanState, BOHR_MAGNETON, BOHR_RADIUS, GAUSS, PLANCK};
use crate::error::{Error, Result};
use crate::fit::fit_parabola;

/// Single-channel resonance `a(B) = a_bg (1 - Δ / (B - B₀))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeshbachResonance {
    /// Background scattering length (m).
    pub a_bg: f64,
    /// Resonance width (G).
    pub width_gauss: f64,
    /// Resonance position (G).
    pub center_gauss: f64,
}

impl Default for FeshbachResonance {
    /// The ⁸⁵Rb |F=2, m_F=-2> resonance near 155 G.
    fn default() -> Self {
        Self {
            a_bg: -443.0 * BOHR_RADIUS,
            width_gauss: 10.71,
            center_gauss: 155.041,
        }
    }
}

impl FeshbachResonance {
    pub fn new(a_bg: f64, width_gauss: f64, center_gauss: f64) -> Result<Self> {
        if width_gauss == 0.0 || !width_gauss.is_finite() {
            return Err(Error::Domain("resonance width must be finite and nonzero".into()));
        }
        if !(center_gauss > 0.0) {
            return Err(Error::Domain("resonance center must be positive".into()));
        }
        if !a_bg.is_finite() {
            return Err(Error::Domain("background scattering length must be finite".into()));
        }
        Ok(Self {
            a_bg,
            width_gauss,
            center_gauss,
        })
    }

    /// Scattering length (m) at bias field `b_gauss`.
    pub fn scattering_length(&self, b_gauss: f64) -> Result<f64> {
        let detuning = b_gauss - self.center_gauss;
        if detuning == 0.0 {
            return Err(Error::Pole { field_gauss: b_gauss });
        }
        Ok(self.a_bg * (1.0 - self.width_gauss / detuning))
    }

    /// Field (G) giving scattering length `a`, on the branch above B₀ for a
    /// positive width.
    pub fn field_for_scattering_length(&self, a: f64) -> Result<f64> {
        let ratio = 1.0 - a / self.a_bg;
        if ratio == 0.0 || !ratio.is_finite() {
            return Err(Error::NoSolution { a });
        }
        Ok(self.center_gauss + self.width_gauss / ratio)
    }

    /// Distance (G) from the pole.
    pub fn pole_distance(&self, b_gauss: f64) -> f64 {
        (b_gauss - self.center_gauss).abs()
    }
}

/// Parabolic bias field along the guide,
/// `B(z) = B_c + ½ B'' (z - z₀)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldProfile {
    /// Field at the vertex (G).
    pub center_gauss: f64,
    /// Curvature ∂²B/∂z² (T/m², signed).
    pub curvature: f64,
    /// Vertex position (m).
    pub z_offset: f64,
    /// One-sigma uncertainty on the curvature (T/m²); zero when not fitted.
    pub curvature_stderr: f64,
}

impl FieldProfile {
    /// Field (G) at position `z` (m).
    pub fn field_gauss(&self, z: f64) -> f64 {
        let dz = z - self.z_offset;
        self.center_gauss + 0.5 * self.curvature * dz * dz / GAUSS
    }

    /// Largest |B(z) - B(z_run)| (G) over `z_run ± half_window`.
    pub fn max_deviation_gauss(&self, z_run: f64, half_window: f64) -> f64 {
        let b_run = self.field_gauss(z_run);
        let mut worst: f64 = 0.0;
        let mut probe = |z: f64| worst = worst.max((self.field_gauss(z) - b_run).abs());
        probe(z_run - half_window);
        probe(z_run + half_window);
        if (self.z_offset - z_run).abs() <= half_window {
            probe(self.z_offset);
        }
        worst
    }
}

/// Signed ω_z² (rad²/s²) from the field curvature acting on the state
/// `state`: `ω_z² = μ_B g_F m_F B'' / m`. Negative means expulsive.
pub fn axial_frequency_squared(profile: &FieldProfile, species: &Species, state: ZeemanState) -> Result<f64> {
    if !(species.mass > 0.0) {
        return Err(Error::Domain("species mass must be positive".into()));
    }
    let g_f = species.g_f(state.f)?;
    Ok(BOHR_MAGNETON * g_f * f64::from(state.m_f) / species.mass * profile.curvature)
}

/// r.f. resonance (Hz) between neighbouring Zeeman levels at field `b_gauss`:
/// `h f = μ_B |Δm_F g_F| B`.
pub fn rf_transition_frequency(b_gauss: f64, g_f: f64, delta_m_f: i32) -> Result<f64> {
    if !(b_gauss >= 0.0) {
        return Err(Error::Domain(format!("field must be non-negative, got {b_gauss}")));
    }
    Ok(BOHR_MAGNETON * (f64::from(delta_m_f) * g_f).abs() * b_gauss * GAUSS / PLANCK)
}

/// Inverse of [`rf_transition_frequency`]: field (G) from a frequency (Hz).
pub fn field_from_rf(freq_hz: f64, g_f: f64, delta_m_f: i32) -> Result<f64> {
    let factor = (f64::from(delta_m_f) * g_f).abs();
    if factor == 0.0 {
        return Err(Error::Domain("g_F Δm_F must be nonzero".into()));
    }
    Ok(freq_hz * PLANCK / (BOHR_MAGNETON * factor) / GAUSS)
}

/// One r.f. spectroscopy point: position (m) and resonant frequency (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfSample {
    pub position: f64,
    pub frequency: f64,
}

/// Fits a parabolic field profile to r.f. resonance positions.
pub fn field_map_from_rf(samples: &[RfSample], g_f: f64, delta_m_f: i32) -> Result<FieldProfile> {
    let zs: Vec<f64> = samples.iter().map(|s| s.position).collect();
    let bs: Vec<f64> = samples
        .iter()
        .map(|s| field_from_rf(s.frequency, g_f, delta_m_f).map(|b| b * GAUSS))
        .collect::<Result<_>>()?;
    let fit = fit_parabola(&zs, &bs)?;
    let (c0, c1, c2) = (fit.get("c0"), fit.get("c1"), fit.get("c2"));
    if c2 == 0.0 {
        return Err(Error::Fit("field map has zero curvature; vertex undefined".into()));
    }
    let z_offset = -c1 / (2.0 * c2);
    Ok(FieldProfile {
        center_gauss: (c0 - c1 * c1 / (4.0 * c2)) / GAUSS,
        curvature: 2.0 * c2,
        z_offset,
        curvature_stderr: fit.stderr("second_derivative"),
    })
}

/// Reads `position_mm,frequency_mhz` rows (header mandatory, `#` comments
/// allowed).
pub fn read_rf_csv<R: BufRead>(reader: R) -> Result<Vec<RfSample>> {
    let rows = crate::io::read_two_column_csv(reader)?;
    Ok(rows
        .into_iter()
        .map(|(z_mm, f_mhz)| RfSample {
            position: z_mm * 1e-3,
            frequency: f_mhz * 1e6,
        })
        .collect())
}

pub fn write_rf_csv<W: Write>(mut w: W, samples: &[RfSample]) -> Result<()> {
    crate::io::write_schema_header(&mut w, "rf-samples")?;
    writeln!(w, "position_mm,frequency_mhz")?;
    for s in samples {
        writeln!(w, "{:.9},{:.9}", s.position * 1e3, s.frequency * 1e-6)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const A0: f64 = BOHR_RADIUS;

    fn guide_profile() -> FieldProfile {
        FieldProfile {
            center_gauss: 165.776,
            curvature: -10.3,
            z_offset: 0.0,
            curvature_stderr: 0.0,
        }
    }

    #[test]
    fn zero_crossing_near_165_75() {
        let a = FeshbachResonance::default().scattering_length(165.75).unwrap();
        assert!(a.abs() < 0.1 * A0, "{}", a / A0);
        assert!(a > 0.0);
    }

    #[test]
    fn far_field_tends_to_background() {
        let res = FeshbachResonance::default();
        let a = res.scattering_length(1e6).unwrap();
        assert!((a / res.a_bg - 1.0).abs() < 1e-3);
    }

    #[test]
    fn minus_thirty_bohr_field() {
        let res = FeshbachResonance::default();
        let b = res.field_for_scattering_length(-30.0 * A0).unwrap();
        assert!((b - 166.53).abs() < 0.01, "{b}");
        let a = res.scattering_length(166.53).unwrap();
        assert!((a / A0 + 30.0).abs() < 0.1, "{}", a / A0);
    }

    #[test]
    fn zero_scattering_length_field_is_exact() {
        let res = FeshbachResonance::default();
        assert_eq!(res.field_for_scattering_length(0.0).unwrap(), 155.041 + 10.71);
    }

    #[test]
    fn pole_and_background_errors() {
        let res = FeshbachResonance::default();
        assert!(matches!(res.scattering_length(155.041), Err(Error::Pole { .. })));
        assert!(matches!(
            res.field_for_scattering_length(res.a_bg),
            Err(Error::NoSolution { .. })
        ));
        assert!(FeshbachResonance::new(-443.0 * A0, 0.0, 155.0).is_err());
    }

    #[test]
    fn round_trip_random_points() {
        let res = FeshbachResonance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = rng.gen_range(-400.0..400.0) * A0;
            let b = res.field_for_scattering_length(a).unwrap();
            let back = res.scattering_length(b).unwrap();
            assert!((back - a).abs() <= 1e-10 * a.abs().max(A0), "{a} -> {b} -> {back}");
        }
    }

    #[test]
    fn monotone_on_each_branch() {
        let res = FeshbachResonance::default();
        for (lo, hi) in [(120.0, 155.0), (155.1, 200.0)] {
            let samples: Vec<f64> = (0..500)
                .map(|i| res.scattering_length(lo + (hi - lo) * i as f64 / 499.0).unwrap())
                .collect();
            // a_bg < 0 and Δ > 0: da/dB = a_bg Δ/(B − B0)² < 0 on both branches
            assert!(samples.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn curvature_gives_three_hertz_antitrap() {
        let w2 = axial_frequency_squared(&guide_profile(), &Species::rb85(), ZeemanState { f: 2, m_f: -2 }).unwrap();
        assert!((w2 + 452.0).abs() < 2.0, "{w2}");
        let f = w2.abs().sqrt() / (2.0 * std::f64::consts::PI);
        assert!((f - 3.4).abs() < 0.1, "{f}");

        let flipped = FieldProfile {
            curvature: 10.3,
            ..guide_profile()
        };
        let w2p = axial_frequency_squared(&flipped, &Species::rb85(), ZeemanState { f: 2, m_f: -2 }).unwrap();
        assert_eq!(w2p, -w2);

        let flat = FieldProfile {
            curvature: 0.0,
            ..guide_profile()
        };
        assert_eq!(
            axial_frequency_squared(&flat, &Species::rb85(), ZeemanState { f: 2, m_f: -2 }).unwrap(),
            0.0
        );
    }

    #[test]
    fn rf_frequency_at_trap_center() {
        let f = rf_transition_frequency(165.776, -0.5, 1).unwrap();
        assert!((f / 1e6 - 116.0).abs() < 0.1, "{f}");
        assert_eq!(rf_transition_frequency(0.0, -0.5, 1).unwrap(), 0.0);
        let f2 = rf_transition_frequency(2.0 * 165.776, -0.5, 1).unwrap();
        assert!((f2 - 2.0 * f).abs() < 1e-6);
        assert!(rf_transition_frequency(-1.0, -0.5, 1).is_err());
        let back = field_from_rf(f, -0.5, 1).unwrap();
        assert!((back - 165.776).abs() < 1e-10);
    }

    fn synth(profile: &FieldProfile, n: usize, noise_gauss: f64, seed: u64) -> Vec<RfSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_gauss.max(f64::MIN_POSITIVE)).unwrap();
        (0..n)
            .map(|i| {
                let z = -2e-3 + 4e-3 * i as f64 / (n - 1) as f64;
                let mut b = profile.field_gauss(z);
                if noise_gauss > 0.0 {
                    b += normal.sample(&mut rng);
                }
                RfSample {
                    position: z,
                    frequency: rf_transition_frequency(b, -0.5, 1).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn field_map_noiseless_round_trip() {
        let truth = FieldProfile {
            z_offset: 0.3e-3,
            ..guide_profile()
        };
        let fitted = field_map_from_rf(&synth(&truth, 25, 0.0, 0), -0.5, 1).unwrap();
        assert!((fitted.curvature / truth.curvature - 1.0).abs() < 1e-9);
        assert!((fitted.center_gauss / truth.center_gauss - 1.0).abs() < 1e-9);
        assert!((fitted.z_offset - truth.z_offset).abs() < 1e-9);
    }

    #[test]
    fn field_map_noisy_within_three_sigma() {
        let truth = guide_profile();
        let fitted = field_map_from_rf(&synth(&truth, 40, 0.5e-3, 42), -0.5, 1).unwrap();
        assert!(fitted.curvature_stderr > 0.0);
        assert!(
            (fitted.curvature - truth.curvature).abs() < 3.0 * fitted.curvature_stderr,
            "{} ± {}",
            fitted.curvature,
            fitted.curvature_stderr
        );
    }

    #[test]
    fn field_map_rank_deficient() {
        let s = RfSample {
            position: 1e-3,
            frequency: 116e6,
        };
        let t = RfSample {
            position: 2e-3,
            frequency: 116.1e6,
        };
        assert!(field_map_from_rf(&[s, s, t], -0.5, 1).is_err());
    }

    #[test]
    fn field_deviation_over_experiment_region() {
        // -103 mG/mm² gives ½|B''| w² below 4 mG for |w| ≤ 0.27 mm around the vertex
        let p = guide_profile();
        let dev = p.max_deviation_gauss(0.0, 0.27e-3);
        assert!(dev < 4e-3, "{dev}");
        assert!((dev - 0.5 * 10.3 * (0.27e-3f64).powi(2) / GAUSS).abs() < 1e-12);
    }

    #[test]
    fn rf_csv_round_trip() {
        let samples = synth(&guide_profile(), 5, 0.0, 0);
        let mut buf = Vec::new();
        write_rf_csv(&mut buf, &samples).unwrap();
        let back = read_rf_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in samples.iter().zip(&back) {
            assert!((a.position - b.position).abs() < 1e-12);
            assert!((a.frequency - b.frequency).abs() < 1e-3);
        }
    }

    proptest! {
        #[test]
        fn axial_frequency_linear_and_odd(c in -100.0f64..100.0, s in 0.1f64..10.0) {
            let sp = Species::rb85();
            let st = ZeemanState { f: 2, m_f: -2 };
            let p = FieldProfile { curvature: c, ..guide_profile() };
            let w = axial_frequency_squared(&p, &sp, st).unwrap();
            let neg = axial_frequency_squared(&FieldProfile { curvature: -c, ..p }, &sp, st).unwrap();
            let scaled = axial_frequency_squared(&FieldProfile { curvature: s * c, ..p }, &sp, st).unwrap();
            prop_assert_eq!(neg, -w);
            prop_assert!((scaled - s * w).abs() <= 1e-12 * (s * w).abs().max(1e-300));
        }
    }
}
