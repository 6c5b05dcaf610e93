//! Variational energy surface for a Gaussian (radial) × sech (axial) trial
//! wavefunction, in units of the radial oscillator:
//!
//! ```text
//! ε(γρ, γz) = 1/(2γρ²) + γρ²/2 + 1/(6γz²) + (π²/24) λ² γz² + α/(3 γρ² γz)
//! ```
//!
//! Stationary points of ε are soliton solutions. With an expulsive axial
//! potential (λ² < 0) and strong attraction the relevant one is a saddle.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{harmonic_length, interaction_parameter};
use crate::error::{Error, Result};

const PI2: f64 = PI * PI;

/// Dimensionless surface parameters. `lambda_sq` is the signed square of
/// the aspect ratio ω_z/ω_ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationalParams {
    pub alpha: f64,
    pub lambda_sq: f64,
}

impl VariationalParams {
    pub fn new(alpha: f64, lambda_sq: f64) -> Result<Self> {
        if !alpha.is_finite() || !lambda_sq.is_finite() {
            return Err(Error::Domain("variational parameters must be finite".into()));
        }
        Ok(Self { alpha, lambda_sq })
    }

    /// Builds (α, λ²) from physical inputs; `omega_z_sq` is signed.
    pub fn from_physical(atom_number: f64, a: f64, mass: f64, omega_rho: f64, omega_z_sq: f64) -> Result<Self> {
        let alpha = interaction_parameter(atom_number, a, mass, omega_rho)?;
        Self::new(alpha, omega_z_sq / (omega_rho * omega_rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Minimum,
    Saddle,
    Maximum,
    Degenerate,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::Minimum => "minimum",
            Classification::Saddle => "saddle",
            Classification::Maximum => "maximum",
            Classification::Degenerate => "degenerate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub gamma_rho: f64,
    pub gamma_z: f64,
    pub energy: f64,
    pub classification: Classification,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Eigenvalues below this magnitude classify a point as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

fn check_widths(gamma_rho: f64, gamma_z: f64) -> Result<()> {
    if !(gamma_rho > 0.0) || !(gamma_z > 0.0) {
        return Err(Error::Domain(format!(
            "widths must be positive, got γρ={gamma_rho}, γz={gamma_z}"
        )));
    }
    Ok(())
}

pub fn energy(p: &VariationalParams, gamma_rho: f64, gamma_z: f64) -> Result<f64> {
    check_widths(gamma_rho, gamma_z)?;
    Ok(energy_unchecked(p, gamma_rho, gamma_z))
}

fn energy_unchecked(p: &VariationalParams, r: f64, z: f64) -> f64 {
    let r2 = r * r;
    let z2 = z * z;
    1.0 / (2.0 * r2) + r2 / 2.0 + 1.0 / (6.0 * z2) + PI2 / 24.0 * p.lambda_sq * z2 + p.alpha / (3.0 * r2 * z)
}

/// (∂ε/∂γρ, ∂ε/∂γz).
pub fn gradient(p: &VariationalParams, gamma_rho: f64, gamma_z: f64) -> Result<(f64, f64)> {
    check_widths(gamma_rho, gamma_z)?;
    Ok(gradient_unchecked(p, gamma_rho, gamma_z))
}

fn gradient_unchecked(p: &VariationalParams, r: f64, z: f64) -> (f64, f64) {
    let r3 = r * r * r;
    let d_rho = -1.0 / r3 + r - 2.0 * p.alpha / (3.0 * r3 * z);
    let d_z = -1.0 / (3.0 * z * z * z) + PI2 / 12.0 * p.lambda_sq * z - p.alpha / (3.0 * r * r * z * z);
    (d_rho, d_z)
}

/// Symmetric Hessian as `[[ε_ρρ, ε_ρz], [ε_ρz, ε_zz]]`.
pub fn hessian(p: &VariationalParams, gamma_rho: f64, gamma_z: f64) -> Result<[[f64; 2]; 2]> {
    check_widths(gamma_rho, gamma_z)?;
    Ok(hessian_unchecked(p, gamma_rho, gamma_z))
}

fn hessian_unchecked(p: &VariationalParams, r: f64, z: f64) -> [[f64; 2]; 2] {
    let r2 = r * r;
    let r4 = r2 * r2;
    let z2 = z * z;
    let rr = 3.0 / r4 + 1.0 + 2.0 * p.alpha / (r4 * z);
    let rz = 2.0 * p.alpha / (3.0 * r2 * r * z2);
    let zz = 1.0 / (z2 * z2) + PI2 / 12.0 * p.lambda_sq + 2.0 * p.alpha / (3.0 * r2 * z2 * z);
    [[rr, rz], [rz, zz]]
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn symmetric_eigenvalues(h: [[f64; 2]; 2]) -> (f64, f64) {
    let mean = 0.5 * (h[0][0] + h[1][1]);
    let half_diff = 0.5 * (h[0][0] - h[1][1]);
    let radius = half_diff.hypot(h[0][1]);
    (mean - radius, mean + radius)
}

pub fn classify(h: [[f64; 2]; 2]) -> Classification {
    let (lo, hi) = symmetric_eigenvalues(h);
    if lo.abs() < DEGENERACY_TOLERANCE || hi.abs() < DEGENERACY_TOLERANCE {
        Classification::Degenerate
    } else if lo > 0.0 {
        Classification::Minimum
    } else if hi < 0.0 {
        Classification::Maximum
    } else {
        Classification::Saddle
    }
}

/// Convergence threshold on ‖∇ε‖.
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
pub const MAX_NEWTON_ITERATIONS: usize = 200;
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;

/// Damped Newton iteration on ∇ε = 0 from `initial = (γρ, γz)`.
///
/// Each full Newton step is halved until the gradient norm decreases and the
/// iterate stays in the positive quadrant.
pub fn find_stationary_point(p: &VariationalParams, initial: (f64, f64)) -> Result<SurfacePoint> {
    let (mut r, mut z) = initial;
    check_widths(r, z)?;
    let norm = |g: (f64, f64)| g.0.hypot(g.1);
    let mut g = gradient_unchecked(p, r, z);
    for it in 0..MAX_NEWTON_ITERATIONS {
        let gn = norm(g);
        if !gn.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                last: vec![r, z],
                residual: gn,
            });
        }
        if gn < GRADIENT_TOLERANCE {
            let h = hessian_unchecked(p, r, z);
            return Ok(SurfacePoint {
                gamma_rho: r,
                gamma_z: z,
                energy: energy_unchecked(p, r, z),
                classification: classify(h),
                gradient_norm: gn,
                iterations: it,
            });
        }
        let h = hessian_unchecked(p, r, z);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                last: vec![r, z],
                residual: gn,
            });
        }
        let dr = -(h[1][1] * g.0 - h[0][1] * g.1) / det;
        let dz = -(-h[1][0] * g.0 + h[0][0] * g.1) / det;

        let mut t = 1.0;
        let mut left_domain;
        loop {
            let (nr, nz) = (r + t * dr, z + t * dz);
            if nr > 0.0 && nz > 0.0 {
                let ng = gradient_unchecked(p, nr, nz);
                if norm(ng) < gn {
                    r = nr;
                    z = nz;
                    g = ng;
                    break;
                }
                left_domain = false;
            } else {
                left_domain = true;
            }
            t *= 0.5;
            if t < MIN_STEP {
                return Err(if left_domain {
                    Error::DomainExit { last: vec![r, z] }
                } else {
                    Error::NoConvergence {
                        iterations: it,
                        last: vec![r, z],
                        residual: gn,
                    }
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON_ITERATIONS,
        last: vec![r, z],
        residual: norm(g),
    })
}

/// Axial soliton length l_z = γz σρ (m).
pub fn soliton_axial_width(point: &SurfacePoint, sigma_rho: f64) -> f64 {
    point.gamma_z * sigma_rho
}

/// σρ for the given species mass and radial frequency, re-exported for
/// callers converting widths.
pub fn radial_length(mass: f64, omega_rho: f64) -> Result<f64> {
    harmonic_length(mass, omega_rho)
}

/// ε sampled on a rectangular (γρ, γz) grid. `energy` is row-major with one
/// row per γρ value.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub gamma_rho: Vec<f64>,
    pub gamma_z: Vec<f64>,
    pub energy: Vec<f64>,
}

impl SurfaceGrid {
    pub fn at(&self, i_rho: usize, i_z: usize) -> f64 {
        self.energy[i_rho * self.gamma_z.len() + i_z]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        crate::io::write_schema_header(&mut w, "variational-surface")?;
        writeln!(w, "gamma_rho,gamma_z,epsilon")?;
        for (i, r) in self.gamma_rho.iter().enumerate() {
            for (j, z) in self.gamma_z.iter().enumerate() {
                writeln!(w, "{r:.12e},{z:.12e},{:.12e}", self.at(i, j))?;
            }
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Evaluates ε on an inclusive `resolution.0 × resolution.1` grid.
pub fn surface_grid(
    p: &VariationalParams,
    rho_range: (f64, f64),
    z_range: (f64, f64),
    resolution: (usize, usize),
) -> Result<SurfaceGrid> {
    let (nr, nz) = resolution;
    if nr == 0 || nz == 0 {
        return Err(Error::Domain("grid resolution must be positive".into()));
    }
    if !(rho_range.0 > 0.0 && rho_range.1 >= rho_range.0 && z_range.0 > 0.0 && z_range.1 >= z_range.0) {
        return Err(Error::Domain("grid ranges must be positive and ordered".into()));
    }
    let gamma_rho = linspace(rho_range.0, rho_range.1, nr);
    let gamma_z = linspace(z_range.0, z_range.1, nz);
    let energy: Vec<f64> = gamma_rho
        .par_iter()
        .flat_map_iter(|&r| gamma_z.iter().map(move |&z| energy_unchecked(p, r, z)))
        .collect();
    Ok(SurfaceGrid {
        gamma_rho,
        gamma_z,
        energy,
    })
}
