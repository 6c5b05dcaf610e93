//! Least-squares estimators used throughout the analysis chain.
//!
//! Linear models (parabola, single-coefficient phase law) are solved by SVD;
//! the fringe and Gaussian-decay models use a small Levenberg-Marquardt loop
//! with analytic Jacobians. Standard errors are the usual
//! `s² (JᵀJ)⁻¹` estimate with `s² = RSS / (n - p)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Parameters and uncertainties from one fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub parameters: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Euclidean norm of the (weighted) residual vector.
    pub residual_norm: f64,
    pub converged: bool,
    /// Model residuals `y - f(x)` in input order.
    pub residuals: Vec<f64>,
}

impl FitResult {
    fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("fit has no parameter '{name}'"))
    }

    /// Value of a named parameter. Panics on unknown names.
    pub fn get(&self, name: &str) -> f64 {
        self.parameters[self.index(name)]
    }

    pub fn stderr(&self, name: &str) -> f64 {
        self.standard_errors[self.index(name)]
    }

    /// Key-value report, one `name = value +/- stderr` per line.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for ((n, v), e) in self.names.iter().zip(&self.parameters).zip(&self.standard_errors) {
            out.push_str(&format!("{n} = {v:.10e} +/- {e:.3e}\n"));
        }
        out.push_str(&format!("residual_norm = {:.6e}\n", self.residual_norm));
        out.push_str(&format!("converged = {}\n", self.converged));
        out
    }
}

fn check_lengths(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Fit(format!("{} abscissae but {} ordinates", xs.len(), ys.len())));
    }
    if let Some(w) = weights {
        if w.len() != xs.len() {
            return Err(Error::Fit("weight vector length mismatch".into()));
        }
        if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
            return Err(Error::Fit("weights must be positive and finite".into()));
        }
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    Ok(())
}

/// Covariance `s² (JᵀJ)⁻¹` from a (weighted) Jacobian. Parameters lying in
/// the numerical null space get an infinite standard error.
fn standard_errors(jac: &DMatrix<f64>, rss: f64) -> Vec<f64> {
    let (n, p) = jac.shape();
    let dof = n.saturating_sub(p).max(1) as f64;
    let s2 = rss / dof;
    let jtj = jac.transpose() * jac;
    let eig = SymmetricEigen::new(jtj);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = 1e-12 * max_ev.max(f64::MIN_POSITIVE);
    let mut var = vec![0.0; p];
    let mut unidentified = vec![false; p];
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        if ev <= cutoff {
            for i in 0..p {
                if v[i].abs() > 1e-6 {
                    unidentified[i] = true;
                }
            }
        } else {
            for i in 0..p {
                var[i] += v[i] * v[i] / ev;
            }
        }
    }
    var.iter()
        .zip(&unidentified)
        .map(|(&vi, &bad)| if bad { f64::INFINITY } else { (s2 * vi).sqrt() })
        .collect()
}

/// Ordinary (optionally weighted) linear least squares on a design matrix.
/// Returns coefficients, their covariance (unscaled by s²) and residuals.
fn linear_lsq(
    design: DMatrix<f64>,
    ys: &[f64],
    weights: Option<&[f64]>,
) -> Result<(DVector<f64>, DMatrix<f64>, Vec<f64>)> {
    let (n, p) = design.shape();
    let sw: Vec<f64> = match weights {
        Some(w) => w.iter().map(|x| x.sqrt()).collect(),
        None => vec![1.0; n],
    };
    let mut a = design.clone();
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] *= sw[i];
        }
    }
    let b = DVector::from_iterator(n, ys.iter().zip(&sw).map(|(y, s)| y * s));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::Fit(format!(
            "rank-deficient design (singular values {smin:e} / {smax:e})"
        )));
    }
    let coef = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Fit(format!("svd solve failed: {e}")))?;
    let resid: Vec<f64> = (0..n).map(|i| ys[i] - (design.row(i) * &coef)[(0, 0)]).collect();
    Ok((coef, a, resid))
}

fn weighted_norm(resid: &[f64], weights: Option<&[f64]>) -> f64 {
    match weights {
        Some(w) => resid.iter().zip(w).map(|(r, w)| w * r * r).sum::<f64>().sqrt(),
        None => resid.iter().map(|r| r * r).sum::<f64>().sqrt(),
    }
}

/// Fits `y = c0 + c1 x + c2 x²`; also reports `second_derivative = 2 c2`.
///
/// The abscissae are centred and scaled internally so that field maps in
/// metres and widths in seconds are equally well conditioned.
pub fn fit_parabola(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    fit_parabola_weighted(xs, ys, None)
}

pub fn fit_parabola_weighted(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    check_lengths(xs, ys, weights)?;
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit("parabola needs at least 3 distinct abscissae".into()));
    }
    let n = xs.len();
    let mu = xs.iter().sum::<f64>() / n as f64;
    let scale = xs.iter().map(|x| (x - mu).abs()).fold(0.0, f64::max);
    let design = DMatrix::from_fn(n, 3, |i, j| ((xs[i] - mu) / scale).powi(j as i32));
    let (d, wdesign, resid) = linear_lsq(design, ys, weights)?;
    let rss = weighted_norm(&resid, weights).powi(2);
    let se_d = standard_errors(&wdesign, rss);

    // back to raw coefficients: c = A d
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0,
            -mu / scale,
            mu * mu / (scale * scale),
            0.0,
            1.0 / scale,
            -2.0 * mu / (scale * scale),
            0.0,
            0.0,
            1.0 / (scale * scale),
        ],
    );
    let c = &a * &d;
    let dof = (n.saturating_sub(3)).max(1) as f64;
    let jtj = wdesign.transpose() * &wdesign;
    let cov_d = jtj
        .try_inverse()
        .map(|m| m * (rss / dof))
        .unwrap_or_else(|| DMatrix::from_diagonal(&DVector::from_iterator(3, se_d.iter().map(|s| s * s))));
    let cov_c = &a * cov_d * a.transpose();
    let se: Vec<f64> = (0..3).map(|i| cov_c[(i, i)].max(0.0).sqrt()).collect();

    Ok(FitResult {
        names: vec!["c0".into(), "c1".into(), "c2".into(), "second_derivative".into()],
        parameters: vec![c[0], c[1], c[2], 2.0 * c[2]],
        standard_errors: vec![se[0], se[1], se[2], 2.0 * se[2]],
        residual_norm: rss.sqrt(),
        converged: true,
        residuals: resid,
    })
}

/// Outcome of the Levenberg-Marquardt loop.
struct LmOutcome {
    params: Vec<f64>,
    jac: DMatrix<f64>,
    resid: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Minimise `Σ w_i (y_i - f(x_i; p))²`. `model` returns (f, ∂f/∂p) at one x.
fn levenberg_marquardt<F>(
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
    p0: Vec<f64>,
    max_iter: usize,
    model: F,
) -> LmOutcome
where
    F: Fn(f64, &[f64]) -> (f64, Vec<f64>),
{
    let n = xs.len();
    let np = p0.len();
    let sw: Vec<f64> = match weights {
        Some(w) => w.iter().map(|x| x.sqrt()).collect(),
        None => vec![1.0; n],
    };
    let eval = |p: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, np);
        for i in 0..n {
            let (f, g) = model(xs[i], p);
            r[i] = sw[i] * (ys[i] - f);
            for k in 0..np {
                j[(i, k)] = sw[i] * g[k];
            }
        }
        (r, j)
    };

    let mut p = p0;
    let (mut r, mut j) = eval(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        if jtr.amax() <= 1e-15 * (1.0 + cost.sqrt()) * (1.0 + jtj.amax().sqrt()) {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&jtr),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (rt, jt) = eval(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let rel_step = step.norm() / (1e-30 + p.iter().map(|v| v * v).sum::<f64>().sqrt());
                let rel_cost = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                j = jt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_step < 1e-13 || rel_cost < 1e-15 || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no decrease possible at any damping: we are at a stationary point
            converged = true;
        }
        if converged {
            break;
        }
    }
    let resid = (0..n).map(|i| r[i] / sw[i]).collect();
    LmOutcome {
        params: p,
        jac: j,
        resid,
        converged,
        iterations,
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Fits `N = (V/2) cos(φ + Φ) + c` with unit frequency in φ.
pub fn fit_fringe(phases: &[f64], n_rel: &[f64]) -> Result<FitResult> {
    fit_fringe_weighted(phases, n_rel, None)
}

pub fn fit_fringe_weighted(phases: &[f64], n_rel: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    check_lengths(phases, n_rel, weights)?;
    let n = phases.len();
    if n < 4 {
        return Err(Error::Fit("fringe fit needs at least 4 samples".into()));
    }
    let first = phases[0];
    let all_congruent = phases.iter().all(|p| wrap_phase(2.0 * (p - first)).abs() < 1e-9);
    if all_congruent {
        return Err(Error::Fit("phases are all congruent mod π".into()));
    }

    // quadrature seed: A cos φ + B sin φ + c with A = (V/2)cos Φ, B = -(V/2) sin Φ
    let nf = n as f64;
    let c0 = n_rel.iter().sum::<f64>() / nf;
    let qa = 2.0 / nf * phases.iter().zip(n_rel).map(|(p, y)| (y - c0) * p.cos()).sum::<f64>();
    let qb = 2.0 / nf * phases.iter().zip(n_rel).map(|(p, y)| (y - c0) * p.sin()).sum::<f64>();
    let v0 = 2.0 * qa.hypot(qb);
    let phi0 = if v0 > 0.0 { (-qb).atan2(qa) } else { 0.0 };

    let out = levenberg_marquardt(phases, n_rel, weights, vec![v0, phi0, c0], 200, |x, p| {
        let (s, c) = (x + p[1]).sin_cos();
        (0.5 * p[0] * c + p[2], vec![0.5 * c, -0.5 * p[0] * s, 1.0])
    });
    if !out.converged {
        return Err(Error::NoConvergence {
            iterations: out.iterations,
            last: out.params,
            residual: weighted_norm(&out.resid, weights),
        });
    }
    let mut p = out.params;
    let mut jac = out.jac;
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[1] += PI;
        // d/dV and d/dΦ flip together; standard errors are unaffected
        for i in 0..jac.nrows() {
            jac[(i, 0)] = -jac[(i, 0)];
        }
    }
    p[1] = wrap_phase(p[1]);
    let rss = weighted_norm(&out.resid, weights).powi(2);
    let se = standard_errors(&jac, rss);
    Ok(FitResult {
        names: vec!["V".into(), "Phi".into(), "c".into()],
        parameters: p,
        standard_errors: se,
        residual_norm: rss.sqrt(),
        converged: true,
        residuals: out.resid,
    })
}

/// Fits `V(T) = V0 exp(-ln2 (T/τ½)²)`, i.e. a Gaussian with half-maximum
/// time τ½. The Gaussian time constant `tau_g = τ½ / √ln2` is also reported.
pub fn fit_gaussian_decay(ts: &[f64], vs: &[f64]) -> Result<FitResult> {
    check_lengths(ts, vs, None)?;
    if ts.len() < 3 {
        return Err(Error::Fit("decay fit needs at least 3 points".into()));
    }
    if vs.iter().any(|&v| v < 0.0) {
        return Err(Error::Fit("visibilities must be non-negative".into()));
    }
    let ln2 = std::f64::consts::LN_2;
    // seed from the log-linear problem ln V = ln V0 - (ln2/τ½²) T²
    let pos: Vec<(f64, f64)> = ts
        .iter()
        .zip(vs)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t * t, v.ln()))
        .collect();
    let (v0_seed, th_seed) = if pos.len() >= 2 {
        let m = pos.len() as f64;
        let sx = pos.iter().map(|p| p.0).sum::<f64>();
        let sy = pos.iter().map(|p| p.1).sum::<f64>();
        let sxx = pos.iter().map(|p| p.0 * p.0).sum::<f64>();
        let sxy = pos.iter().map(|p| p.0 * p.1).sum::<f64>();
        let den = m * sxx - sx * sx;
        let slope = if den.abs() > 0.0 {
            (m * sxy - sx * sy) / den
        } else {
            0.0
        };
        let icpt = (sy - slope * sx) / m;
        let th = if slope < 0.0 {
            (ln2 / -slope).sqrt()
        } else {
            ts.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE)
        };
        (icpt.exp(), th)
    } else {
        (
            vs.iter().cloned().fold(0.0, f64::max),
            ts.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE),
        )
    };
    // work in units of the seed time so both parameters are O(1)
    let scale = th_seed;
    let xs: Vec<f64> = ts.iter().map(|t| t / scale).collect();
    let out = levenberg_marquardt(&xs, vs, None, vec![v0_seed, 1.0], 200, |x, p| {
        let u = x / p[1];
        let e = (-ln2 * u * u).exp();
        (p[0] * e, vec![e, p[0] * e * 2.0 * ln2 * u * u / p[1]])
    });
    if !out.converged || !(out.params[1] > 0.0) {
        return Err(Error::NoConvergence {
            iterations: out.iterations,
            last: out.params,
            residual: weighted_norm(&out.resid, None),
        });
    }
    let rss = weighted_norm(&out.resid, None).powi(2);
    let se = standard_errors(&out.jac, rss);
    let tau_half = out.params[1].abs() * scale;
    let se_half = se[1] * scale;
    let root_ln2 = ln2.sqrt();
    Ok(FitResult {
        names: vec!["V0".into(), "tau_half".into(), "tau_g".into()],
        parameters: vec![out.params[0], tau_half, tau_half / root_ln2],
        standard_errors: vec![se[0], se_half, se_half / root_ln2],
        residual_norm: rss.sqrt(),
        converged: true,
        residuals: out.resid,
    })
}

/// Unwraps interferometer phases along increasing T using the running
/// estimate of the quadratic law `Φ = 2 k a T²`.
///
/// Returns `(T, Φ_unwrapped)` sorted by T.
pub fn unwrap_quadratic_phases(ts: &[f64], phis: &[f64], k: f64) -> Result<Vec<(f64, f64)>> {
    let mut pts: Vec<(f64, f64)> = ts.iter().cloned().zip(phis.iter().cloned()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    let mut s_tp = 0.0; // Σ T² Φ
    let mut s_t4 = 0.0; // Σ T⁴
    for (t, raw) in pts {
        let t2 = t * t;
        let phi = if s_t4 > 0.0 {
            let accel = s_tp / (2.0 * k * s_t4);
            let predicted = 2.0 * k * accel * t2;
            raw + 2.0 * PI * ((predicted - raw) / (2.0 * PI)).round()
        } else {
            raw
        };
        if let Some(&(_, prev)) = out.last() {
            let step = phi - prev;
            if step.abs() > PI {
                return Err(Error::UnwrapAmbiguity { t, step });
            }
        }
        s_tp += t2 * phi;
        s_t4 += t2 * t2;
        out.push((t, phi));
    }
    Ok(out)
}

/// Single-parameter fit of `Φ = 2 k a T²`, after model-guided unwrapping.
pub fn fit_quadratic_phase(ts: &[f64], phis: &[f64], k: f64) -> Result<FitResult> {
    check_lengths(ts, phis, None)?;
    if !(k > 0.0) {
        return Err(Error::Fit("lattice wavenumber must be positive".into()));
    }
    let mut distinct: Vec<f64> = ts.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Fit("phase fit needs at least 2 distinct times".into()));
    }
    let pts = unwrap_quadratic_phases(ts, phis, k)?;
    let s_tp: f64 = pts.iter().map(|(t, p)| t * t * p).sum();
    let s_t4: f64 = pts.iter().map(|(t, _)| t.powi(4)).sum();
    let accel = s_tp / (2.0 * k * s_t4);
    let resid: Vec<f64> = pts.iter().map(|(t, p)| p - 2.0 * k * accel * t * t).collect();
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let dof = (pts.len() - 1) as f64;
    let se = (rss / dof / (4.0 * k * k * s_t4)).sqrt();
    Ok(FitResult {
        names: vec!["acceleration".into()],
        parameters: vec![accel],
        standard_errors: vec![se],
        residual_norm: rss.sqrt(),
        converged: true,
        residuals: resid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn fringe(v: f64, phi: f64, c: f64, phases: &[f64]) -> Vec<f64> {
        phases.iter().map(|p| 0.5 * v * (p + phi).cos() + c).collect()
    }

    fn equally_spaced(n: usize) -> Vec<f64> {
        (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect()
    }

    #[test]
    fn parabola_exact() {
        let xs: Vec<f64> = (0..9).map(|i| -2.0 + 0.5 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x + 3.0 * x * x).collect();
        let f = fit_parabola(&xs, &ys).unwrap();
        assert!((f.get("c0") - 1.0).abs() < 1e-10);
        assert!((f.get("c1") - 2.0).abs() < 1e-10);
        assert!((f.get("c2") - 3.0).abs() < 1e-10);
        assert!((f.get("second_derivative") - 6.0).abs() < 1e-10);
        assert!(f.residual_norm < 1e-8);
    }

    #[test]
    fn parabola_rank_deficient() {
        assert!(fit_parabola(&[1.0, 1.0, 2.0, 2.0], &[0.0, 1.0, 2.0, 3.0]).is_err());
        assert!(fit_parabola(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn parabola_order_invariant() {
        let xs = [0.3, -1.2, 2.5, 0.9, -0.4, 1.7];
        let ys = [1.0, 0.2, 3.3, -0.7, 0.5, 2.2];
        let a = fit_parabola(&xs, &ys).unwrap();
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.reverse();
        idx.swap(0, 3);
        let xp: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
        let b = fit_parabola(&xp, &yp).unwrap();
        for (p, q) in a.parameters.iter().zip(&b.parameters) {
            assert!((p - q).abs() < 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn parabola_width_acceleration_from_dispersion() {
        // σ(t) = σ0 √(1 + (t/τ)²); d²σ/dt² at t = τ is σ0 / (τ² 2^{3/2})
        let (s0, tau) = (1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let ts: Vec<f64> = (0..41).map(|i| 2.0 * tau * i as f64 / 40.0).collect();
        let ys: Vec<f64> = ts
            .iter()
            .map(|t| {
                let s = s0 * (1.0 + (t / tau).powi(2)).sqrt();
                s * (1.0 + 0.01 * noise.sample(&mut rng))
            })
            .collect();
        let f = fit_parabola(&ts, &ys).unwrap();
        let acc = f.get("second_derivative");
        let expected = s0 / (tau * tau * 2f64.powf(1.5));
        assert!(acc > 0.0);
        assert!(
            (acc - expected).abs() < 3.0 * f.stderr("second_derivative"),
            "{acc} vs {expected} ± {}",
            f.stderr("second_derivative")
        );
    }

    #[test]
    fn fringe_exact_recovery() {
        let ph = equally_spaced(8);
        let f = fit_fringe(&ph, &fringe(1.0, 0.0, 0.5, &ph)).unwrap();
        assert!((f.get("V") - 1.0).abs() < 1e-8);
        assert!(f.get("Phi").abs() < 1e-8);
        assert!((f.get("c") - 0.5).abs() < 1e-8);
        assert!(f.residual_norm < 1e-8);
    }

    #[test]
    fn fringe_negative_amplitude_convention() {
        let ph = equally_spaced(12);
        let f = fit_fringe(&ph, &fringe(0.6, 2.5, 0.4, &ph)).unwrap();
        assert!((f.get("V") - 0.6).abs() < 1e-8);
        assert!((f.get("Phi") - 2.5).abs() < 1e-8);
        let g = fit_fringe(&ph, &fringe(0.6, -3.0, 0.4, &ph)).unwrap();
        assert!((g.get("Phi") + 3.0).abs() < 1e-8);
        assert!(g.get("Phi") > -PI && g.get("Phi") <= PI);
    }

    #[test]
    fn fringe_constant_data_flags_phase() {
        let ph = equally_spaced(10);
        let f = fit_fringe(&ph, &[0.5; 10]).unwrap();
        assert!(f.get("V") < 1e-6);
        assert!(f.stderr("Phi") > 1e3 || f.stderr("Phi").is_infinite());
    }

    #[test]
    fn fringe_rejects_degenerate_phases() {
        assert!(fit_fringe(&[0.0, PI, 2.0 * PI, 3.0 * PI], &[1.0, 0.0, 1.0, 0.0]).is_err());
        assert!(fit_fringe(&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn fringe_noisy_within_three_sigma() {
        let ph = equally_spaced(20);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let ys: Vec<f64> = fringe(0.4, 1.2, 0.5, &ph)
            .iter()
            .map(|y| y + noise.sample(&mut rng))
            .collect();
        let f = fit_fringe(&ph, &ys).unwrap();
        for (name, truth) in [("V", 0.4), ("Phi", 1.2), ("c", 0.5)] {
            assert!((f.get(name) - truth).abs() < 3.0 * f.stderr(name), "{name}");
        }
    }

    #[test]
    fn fringe_weights_uniform_match_unweighted() {
        let ph = equally_spaced(9);
        let ys = [0.9, 0.7, 0.3, 0.1, 0.2, 0.45, 0.8, 0.95, 0.85];
        let a = fit_fringe(&ph, &ys).unwrap();
        let b = fit_fringe_weighted(&ph, &ys, Some(&[4.0; 9])).unwrap();
        for (p, q) in a.parameters.iter().zip(&b.parameters) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_decay_exact() {
        let ts: Vec<f64> = (0..8).map(|i| 0.5e-3 * i as f64).collect();
        let tau_g = 2e-3;
        let vs: Vec<f64> = ts.iter().map(|t| 0.8 * (-(t / tau_g).powi(2)).exp()).collect();
        let f = fit_gaussian_decay(&ts, &vs).unwrap();
        assert!((f.get("V0") - 0.8).abs() < 1e-8);
        let expected = tau_g * std::f64::consts::LN_2.sqrt();
        assert!((f.get("tau_half") - expected).abs() < 1e-8 * expected);
        assert!((f.get("tau_g") - tau_g).abs() < 1e-8 * tau_g);
        assert!(f.residual_norm < 1e-8);

        let doubled: Vec<f64> = vs.iter().map(|v| 2.0 * v).collect();
        let g = fit_gaussian_decay(&ts, &doubled).unwrap();
        assert!((g.get("V0") - 1.6).abs() < 1e-8);
        assert!((g.get("tau_half") - f.get("tau_half")).abs() < 1e-10 * expected);
    }

    #[test]
    fn gaussian_decay_reported_ratio() {
        // two curves with half-max times 0.9 ms and 2.3 ms
        let ts: Vec<f64> = (1..12).map(|i| 0.4e-3 * i as f64).collect();
        let curve = |th: f64| -> Vec<f64> {
            ts.iter()
                .map(|t| 0.7 * (-std::f64::consts::LN_2 * (t / th).powi(2)).exp())
                .collect()
        };
        let a = fit_gaussian_decay(&ts, &curve(0.9e-3)).unwrap();
        let b = fit_gaussian_decay(&ts, &curve(2.3e-3)).unwrap();
        let ratio = b.get("tau_half") / a.get("tau_half");
        assert!((ratio - 2.3 / 0.9).abs() < 1e-6);
        assert!((ratio - 2.5).abs() < 0.1);
    }

    #[test]
    fn gaussian_decay_rejects_bad_input() {
        assert!(fit_gaussian_decay(&[0.0, 1.0], &[1.0, 0.5]).is_err());
        assert!(fit_gaussian_decay(&[0.0, 1.0, 2.0], &[1.0, -0.5, 0.1]).is_err());
    }

    #[test]
    fn quadratic_phase_recovers_acceleration() {
        let k = 8.055e6;
        let a = 5.2e-2;
        let ts = [0.5e-3, 1.0e-3, 1.5e-3, 2.0e-3];
        let wrapped: Vec<f64> = ts.iter().map(|t| wrap_phase(2.0 * k * a * t * t)).collect();
        let f = fit_quadratic_phase(&ts, &wrapped, k).unwrap();
        assert!((f.get("acceleration") - a).abs() < 1e-8 * a);
        assert!(f.residual_norm < 1e-8);

        let neg: Vec<f64> = ts.iter().map(|t| wrap_phase(-2.0 * k * a * t * t)).collect();
        let g = fit_quadratic_phase(&ts, &neg, k).unwrap();
        assert!((g.get("acceleration") + a).abs() < 1e-8 * a);

        let zero = fit_quadratic_phase(&ts, &[0.0; 4], k).unwrap();
        assert_eq!(zero.get("acceleration"), 0.0);
        assert_eq!(zero.residual_norm, 0.0);
    }

    #[test]
    fn quadratic_phase_unsorted_input() {
        let k = 8.055e6;
        let a = 3.0e-2;
        let ts = [2.0e-3, 0.5e-3, 1.5e-3, 1.0e-3];
        let phis: Vec<f64> = ts.iter().map(|t| wrap_phase(2.0 * k * a * t * t)).collect();
        let f = fit_quadratic_phase(&ts, &phis, k).unwrap();
        assert!((f.get("acceleration") - a).abs() < 1e-8 * a);
    }

    #[test]
    fn quadratic_phase_ambiguity() {
        let k = 8.055e6;
        // sparse sampling of a fast phase: successive steps exceed π
        let a = 0.6;
        let ts = [1.0e-3, 2.0e-3, 3.0e-3];
        let phis: Vec<f64> = ts.iter().map(|t| wrap_phase(2.0 * k * a * t * t)).collect();
        assert!(matches!(
            fit_quadratic_phase(&ts, &phis, k),
            Err(Error::UnwrapAmbiguity { .. })
        ));
        assert!(fit_quadratic_phase(&[1e-3, 1e-3], &[0.1, 0.1], k).is_err());
    }

    #[test]
    fn standard_errors_shrink_with_sample_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut se = Vec::new();
        for n in [10usize, 40, 160] {
            // average over repeats to tame the scatter of s²
            let mut acc = 0.0;
            for _ in 0..50 {
                let ph = equally_spaced(n);
                let ys: Vec<f64> = fringe(0.5, 0.3, 0.5, &ph)
                    .iter()
                    .map(|y| y + noise.sample(&mut rng))
                    .collect();
                acc += fit_fringe(&ph, &ys).unwrap().stderr("V");
            }
            se.push(acc / 50.0);
        }
        for w in se.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.6, "ratio {ratio}");
        }
    }

    proptest! {
        #[test]
        fn fringe_shift_equivariance(v in 0.1f64..1.0, phi in -3.0f64..3.0, c in 0.2f64..0.8, d in -2.0f64..2.0) {
            let ph = equally_spaced(11);
            let ys = fringe(v, phi, c, &ph);
            let a = fit_fringe(&ph, &ys).unwrap();
            let shifted: Vec<f64> = ph.iter().map(|p| p + d).collect();
            let b = fit_fringe(&shifted, &ys).unwrap();
            prop_assert!((a.get("V") - b.get("V")).abs() < 1e-8);
            prop_assert!((a.get("c") - b.get("c")).abs() < 1e-8);
            prop_assert!(wrap_phase(b.get("Phi") - (a.get("Phi") - d)).abs() < 1e-8);
        }

        #[test]
        fn parabola_exact_on_own_family(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0) {
            let xs: Vec<f64> = (0..7).map(|i| i as f64 * 0.3 - 1.0).collect();
            let ys: Vec<f64> = xs.iter().map(|x| c0 + c1 * x + c2 * x * x).collect();
            let f = fit_parabola(&xs, &ys).unwrap();
            prop_assert!(f.residual_norm < 1e-8);
            prop_assert!((f.get("c2") - c2).abs() < 1e-9);
        }
    }
}
