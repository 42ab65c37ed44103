//! Marčenko-Pastur law of white-noise sample covariance eigenvalues, its
//! reciprocal (for precision matrices), and the KS fit of the scale.

use serde::{Deserialize, Serialize};

use crate::error::{NirvarError, Result};
use crate::stats::{ks_from_sorted, median, sorted_finite};

const CDF_TOL: f64 = 1e-8;
const SEGMENT_TOL: f64 = 1e-10;
const SIMPSON_MAX_DEPTH: u32 = 40;
const SIMPSON_PANELS: usize = 8;
const FIT_GRID: usize = 120;
const FIT_REL_TOL: f64 = 1e-6;
pub const MIN_FIT_EIGENVALUES: usize = 10;

/// Support of the Marčenko-Pastur law with aspect ratio `eta` and scale
/// `sigma2`, and of its reciprocal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpParams {
    pub eta: f64,
    pub sigma2: f64,
    pub x_minus: f64,
    pub x_plus: f64,
    pub y_minus: f64,
    pub y_plus: f64,
}

impl MpParams {
    pub fn new(eta: f64, sigma2: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(NirvarError::Config(format!("Marčenko-Pastur aspect ratio must lie in (0, 1), got {eta}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(NirvarError::Config(format!("Marčenko-Pastur scale must be positive, got {sigma2}")));
        }
        let r = eta.sqrt();
        Ok(Self {
            eta,
            sigma2,
            x_minus: sigma2 * (1.0 - r).powi(2),
            x_plus: sigma2 * (1.0 + r).powi(2),
            y_minus: ((1.0 - r) / (1.0 - eta)).powi(2) / sigma2,
            y_plus: ((1.0 + r) / (1.0 - eta)).powi(2) / sigma2,
        })
    }

    fn width(&self) -> f64 {
        self.x_plus - self.x_minus
    }

    /// Angle `θ ∈ [0, π]` with `x = x_- + w (1 - cos θ) / 2`.
    fn theta(&self, x: f64) -> f64 {
        (1.0 - 2.0 * (x - self.x_minus) / self.width()).clamp(-1.0, 1.0).acos()
    }

    /// MP density in the angle variable, `f(x(θ)) dx/dθ`, smooth on `[0, π]`.
    fn mp_integrand(&self, theta: f64) -> f64 {
        let w = self.width();
        let x = self.x_minus + 0.5 * w * (1.0 - theta.cos());
        if x <= 0.0 {
            return 0.0;
        }
        let h = 0.5 * w * theta.sin();
        h * h / (2.0 * std::f64::consts::PI * self.sigma2 * self.eta * x)
    }
}

/// Upper support edge `σ²(1 + √η)²`, meaningful for any `η > 0`.
pub fn mp_upper_edge(eta: f64, sigma2: f64) -> f64 {
    sigma2 * (1.0 + eta.sqrt()).powi(2)
}

/// Marčenko-Pastur density `√((x - x_-)(x_+ - x)) / (2π σ² η x)` on its support.
pub fn mp_density(x: f64, eta: f64, sigma2: f64) -> Result<f64> {
    let p = MpParams::new(eta, sigma2)?;
    if x <= p.x_minus || x >= p.x_plus {
        return Ok(0.0);
    }
    Ok(((x - p.x_minus) * (p.x_plus - x)).sqrt() / (2.0 * std::f64::consts::PI * sigma2 * eta * x))
}

/// Density of `1/X` for `X` Marčenko-Pastur distributed.
pub fn imp_density(y: f64, eta: f64, sigma2: f64) -> Result<f64> {
    let p = MpParams::new(eta, sigma2)?;
    if y <= p.y_minus || y >= p.y_plus {
        return Ok(0.0);
    }
    Ok((1.0 - eta) * ((p.y_plus - y) * (y - p.y_minus)).sqrt() / (2.0 * std::f64::consts::PI * eta * y * y))
}

/// Marčenko-Pastur CDF by adaptive Simpson integration.
pub fn mp_cdf(x: f64, eta: f64, sigma2: f64) -> Result<f64> {
    let p = MpParams::new(eta, sigma2)?;
    if x <= p.x_minus {
        return Ok(0.0);
    }
    if x >= p.x_plus {
        return Ok(1.0);
    }
    Ok(integrate(&|t| p.mp_integrand(t), 0.0, p.theta(x), CDF_TOL).clamp(0.0, 1.0))
}

/// CDF of the inverse Marčenko-Pastur law, `1 - F_MP(1/y)`.
pub fn imp_cdf(y: f64, eta: f64, sigma2: f64) -> Result<f64> {
    if y <= 0.0 {
        MpParams::new(eta, sigma2)?;
        return Ok(0.0);
    }
    Ok(1.0 - mp_cdf(1.0 / y, eta, sigma2)?)
}

/// MP CDF at every point of an ascending sample, accumulated segment by
/// segment so each piece of the support is integrated once.
pub fn mp_cdf_sorted(sorted: &[f64], params: &MpParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(sorted.len());
    let mut acc = 0.0;
    let mut theta_prev = 0.0;
    for &x in sorted {
        let theta = params.theta(x);
        if theta > theta_prev {
            acc += integrate(&|t| params.mp_integrand(t), theta_prev, theta, SEGMENT_TOL);
            theta_prev = theta;
        }
        out.push(if x >= params.x_plus { 1.0 } else { acc.clamp(0.0, 1.0) });
    }
    out
}

/// KS distance between an ascending sample and MP(`eta`, `sigma2`).
pub fn mp_ks(sorted: &[f64], eta: f64, sigma2: f64) -> Result<f64> {
    let p = MpParams::new(eta, sigma2)?;
    Ok(ks_from_sorted(&mp_cdf_sorted(sorted, &p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpFit {
    pub sigma2: f64,
    pub ks: f64,
}

/// Scale `σ²` minimising the KS distance between the eigenvalues and
/// MP(`eta`, `σ²`), searched over `[1e-4, 10] × median(λ)`: a log-spaced
/// grid followed by golden-section refinement around the best grid point.
pub fn fit_mp_scale(eigenvalues: &[f64], eta: f64) -> Result<MpFit> {
    if eigenvalues.len() < MIN_FIT_EIGENVALUES {
        return Err(NirvarError::Config(format!(
            "scale fit needs at least {MIN_FIT_EIGENVALUES} eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    MpParams::new(eta, 1.0)?;
    let sorted = sorted_finite(eigenvalues)?;
    let med = median(&sorted)?;
    if med <= 0.0 {
        return Err(NirvarError::Numerical(format!(
            "median eigenvalue {med} is not positive; cannot fit a Marčenko-Pastur scale"
        )));
    }
    let objective = |log_s: f64| -> f64 {
        let p = MpParams::new(eta, log_s.exp()).expect("validated eta and positive scale");
        ks_from_sorted(&mp_cdf_sorted(&sorted, &p))
    };
    let (lo, hi) = ((1e-4 * med).ln(), (10.0 * med).ln());
    let step = (hi - lo) / (FIT_GRID - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..FIT_GRID)
        .map(|i| {
            let g = lo + step * i as f64;
            (g, objective(g))
        })
        .collect();
    let best =
        grid.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).map(|(i, _)| i).expect("non-empty grid");
    let a = grid[best.saturating_sub(1)].0;
    let b = grid[(best + 1).min(FIT_GRID - 1)].0;
    let (g, ks) = golden_section(&objective, a, b, FIT_REL_TOL);
    let (log_s, ks) = if ks <= grid[best].1 { (g, ks) } else { grid[best] };
    Ok(MpFit { sigma2: log_s.exp(), ks })
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    // in log space, an interval of width tol is a relative tolerance on σ²
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / SIMPSON_PANELS as f64;
    let panel_tol = tol / SIMPSON_PANELS as f64;
    (0..SIMPSON_PANELS)
        .map(|k| {
            let (l, r) = (a + h * k as f64, a + h * (k + 1) as f64);
            let (fl, fr) = (f(l), f(r));
            let m = 0.5 * (l + r);
            let fm = f(m);
            let whole = (r - l) / 6.0 * (fl + 4.0 * fm + fr);
            simpson_step(f, l, r, fl, fm, fr, whole, panel_tol, SIMPSON_MAX_DEPTH)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use nalgebra::DMatrix;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    /// Composite trapezoid in the angle variable with a fixed fine step,
    /// written independently of the adaptive rule.
    fn trapezoid_cdf(x: f64, eta: f64, sigma2: f64) -> f64 {
        let (xm, xp) = (sigma2 * (1.0 - eta.sqrt()).powi(2), sigma2 * (1.0 + eta.sqrt()).powi(2));
        let top = (1.0 - 2.0 * (x - xm) / (xp - xm)).acos();
        let n = 200_000;
        let h = top / n as f64;
        let g = |t: f64| {
            let xx = xm + 0.5 * (xp - xm) * (1.0 - t.cos());
            let s = 0.5 * (xp - xm) * t.sin();
            s * s / (2.0 * std::f64::consts::PI * sigma2 * eta * xx)
        };
        let inner: f64 = (1..n).map(|k| g(h * k as f64)).sum();
        h * (0.5 * g(0.0) + inner + 0.5 * g(top))
    }

    #[test]
    fn support_edges() {
        let p = MpParams::new(0.25, 1.0).unwrap();
        assert!((p.x_plus - 2.25).abs() < 1e-15 && (p.x_minus - 0.25).abs() < 1e-15);
        assert!((p.y_minus - 4.0 / 9.0).abs() < 1e-15 && (p.y_plus - 4.0).abs() < 1e-14);
        assert!(MpParams::new(1.0, 1.0).is_err());
        assert!(MpParams::new(0.5, 0.0).is_err());
    }

    #[test]
    fn cdf_endpoints_and_oracle() {
        assert_eq!(mp_cdf(0.25, 0.25, 1.0).unwrap(), 0.0);
        assert_eq!(mp_cdf(2.25, 0.25, 1.0).unwrap(), 1.0);
        let f = mp_cdf(1.0, 0.25, 1.0).unwrap();
        let oracle = trapezoid_cdf(1.0, 0.25, 1.0);
        assert!((f - oracle).abs() < 1e-8, "{f} vs {oracle}");
        // regression lock of the oracle value
        assert!((f - 0.553_390_081).abs() < 1e-8, "{f}");
    }

    #[test]
    fn densities_integrate_to_one() {
        for &(eta, s2) in &[(0.25, 1.0), (0.1, 2.0), (0.7, 0.3)] {
            let p = MpParams::new(eta, s2).unwrap();
            let mp = integrate(&|t| p.mp_integrand(t), 0.0, std::f64::consts::PI, 1e-12);
            assert!((mp - 1.0).abs() < 1e-6, "{mp}");
            // inverse law: y = y_- + w (1 - cos θ)/2
            let w = p.y_plus - p.y_minus;
            let imp = integrate(
                &|t: f64| {
                    let y = p.y_minus + 0.5 * w * (1.0 - t.cos());
                    imp_density(y, eta, s2).unwrap() * 0.5 * w * t.sin()
                },
                0.0,
                std::f64::consts::PI,
                1e-12,
            );
            assert!((imp - 1.0).abs() < 1e-6, "{imp}");
        }
    }

    #[test]
    fn change_of_variables() {
        let p = MpParams::new(0.3, 1.7).unwrap();
        for k in 1..50 {
            let y = p.y_minus + (p.y_plus - p.y_minus) * k as f64 / 50.0;
            let lhs = imp_density(y, 0.3, 1.7).unwrap();
            let rhs = mp_density(1.0 / y, 0.3, 1.7).unwrap() / (y * y);
            assert!((lhs - rhs).abs() < 1e-10);
        }
        let c = imp_cdf(1.0, 0.3, 1.7).unwrap();
        assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn cdf_is_monotone() {
        let p = MpParams::new(0.4, 1.0).unwrap();
        let xs: Vec<f64> = (0..300).map(|k| p.x_minus - 0.1 + k as f64 * 0.02).collect();
        let f = mp_cdf_sorted(&xs, &p);
        assert!(f.windows(2).all(|w| w[1] >= w[0]));
        for (x, v) in xs.iter().zip(&f).step_by(37) {
            assert!((v - mp_cdf(*x, 0.4, 1.0).unwrap()).abs() < 1e-8);
        }
    }

    fn wishart_eigenvalues(n: usize, t: usize, sigma2: f64, seed: u64) -> Vec<f64> {
        let mut rng = SeedStream::new(seed).stream("wishart", 0);
        let sd = sigma2.sqrt();
        let x = DMatrix::from_fn(n, t, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
        let s = &x * x.transpose() / t as f64;
        crate::linalg::sym_eigenvalues_desc(&s)
    }

    #[test]
    fn scale_fit_recovers_sigma2() {
        let eigs = wishart_eigenvalues(500, 2000, 2.0, 5);
        let fit = fit_mp_scale(&eigs, 0.25).unwrap();
        assert!((fit.sigma2 - 2.0).abs() < 0.15, "{fit:?}");
        assert!(fit.ks < 0.05);
    }

    #[test]
    fn scale_fit_edge_cases() {
        assert!(fit_mp_scale(&[1.0; 5], 0.25).is_err());
        let fit = fit_mp_scale(&[3.0; 20], 0.25).unwrap();
        assert!(fit.sigma2.is_finite() && fit.ks.is_finite());
    }
}
