//! Generalized extreme value distribution.
//!
//! Parameterized by location μ, scale σ > 0 and shape ξ, with
//! `F(x) = exp(-t(x))` where `t(x) = (1 + ξ (x - μ)/σ)^(-1/ξ)` and the
//! Gumbel limit `t(x) = exp(-(x - μ)/σ)` at ξ = 0. Every code path treats
//! `|ξ| < 1e-8` as the Gumbel case.
//!
//! The shape enters through `ln(1 + ξz)/ξ` and `expm1(-ξ ln(-ln p))/ξ`,
//! which stay accurate for small nonzero ξ.

mod lmoments;
mod mcmc;
mod mle;

pub use lmoments::{lmoments_estimate, sample_lmoments, SampleLMoments};
pub use mcmc::{
    bayes_fit, posterior_quantile_draws, split_rhat, ConvergenceWarning, Diagnostics, McmcConfig,
    PosteriorSamples, PosteriorSummary, Priors, Summary3,
};
pub use mle::{mle_fit, MleOptions};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Shapes closer to zero than this use the Gumbel formulas.
pub const GUMBEL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

impl GevParams {
    pub fn new(location: f64, scale: f64, shape: f64) -> Result<Self> {
        if !location.is_finite() {
            return Err(Error::argument(format!("location {location} is not finite")));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::argument(format!("scale {scale} must be finite and > 0")));
        }
        if !shape.is_finite() {
            return Err(Error::argument(format!("shape {shape} is not finite")));
        }
        Ok(GevParams {
            location,
            scale,
            shape,
        })
    }

    pub fn is_gumbel(&self) -> bool {
        self.shape.abs() < GUMBEL_TOLERANCE
    }

    /// Finite lower (ξ > 0) or upper (ξ < 0) endpoint of the support.
    pub fn support_bound(&self) -> Option<f64> {
        if self.is_gumbel() {
            None
        } else {
            Some(self.location - self.scale / self.shape)
        }
    }

    fn check(&self) -> Result<()> {
        GevParams::new(self.location, self.scale, self.shape).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {min} observations, got {n}")]
    TooFewObservations { n: usize, min: usize },

    #[error("data contain non-finite values")]
    NonFinite,

    #[error("degenerate sample: zero L-scale")]
    Degenerate,

    #[error("optimizer did not converge after {evaluations} evaluations")]
    NotConverged {
        best: GevParams,
        log_likelihood: f64,
        evaluations: usize,
    },
}

/// `ln(1 + ξz)/ξ`, the log of the reduced variable; `None` outside the support.
#[inline]
fn reduced_log(z: f64, shape: f64) -> Option<f64> {
    if shape.abs() < GUMBEL_TOLERANCE {
        Some(z)
    } else {
        let s = shape * z;
        if s <= -1.0 {
            None
        } else {
            Some(s.ln_1p() / shape)
        }
    }
}

pub fn gev_cdf(x: f64, params: &GevParams) -> Result<f64> {
    params.check()?;
    if !x.is_finite() {
        return Err(Error::argument(format!("x = {x} is not finite")));
    }
    let z = (x - params.location) / params.scale;
    Ok(match reduced_log(z, params.shape) {
        Some(y) => (-(-y).exp()).exp(),
        // outside the support: below a lower bound or above an upper bound
        None if params.shape > 0.0 => 0.0,
        None => 1.0,
    })
}

/// Log density at `x`; `-inf` outside the support.
pub fn gev_log_density(x: f64, params: &GevParams) -> f64 {
    let z = (x - params.location) / params.scale;
    match reduced_log(z, params.shape) {
        Some(y) if params.is_gumbel() => -params.scale.ln() - y - (-y).exp(),
        Some(y) => -params.scale.ln() - (1.0 + params.shape) * y - (-y).exp(),
        None => f64::NEG_INFINITY,
    }
}

/// Return level `z_p` with `F(z_p) = p`.
pub fn gev_quantile(p: f64, params: &GevParams) -> Result<f64> {
    params.check()?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::argument(format!("probability {p} outside (0, 1)")));
    }
    Ok(quantile_unchecked(p, params))
}

#[inline]
pub(crate) fn quantile_unchecked(p: f64, params: &GevParams) -> f64 {
    let log_t = (-p.ln()).ln();
    let reduced = if params.is_gumbel() {
        -log_t
    } else {
        (-params.shape * log_t).exp_m1() / params.shape
    };
    params.location + params.scale * reduced
}

/// Sum of log densities; `-inf` as soon as any point leaves the support.
pub fn gev_log_likelihood(data: &[f64], params: &GevParams) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::argument("log-likelihood of empty data"));
    }
    params.check()?;
    Ok(log_likelihood_unchecked(data, params))
}

#[inline]
pub(crate) fn log_likelihood_unchecked(data: &[f64], params: &GevParams) -> f64 {
    let inv_scale = params.scale.recip();
    let shape = params.shape;
    let mut acc = 0.0;
    if shape.abs() < GUMBEL_TOLERANCE {
        for &x in data {
            let z = (x - params.location) * inv_scale;
            acc += z + (-z).exp();
        }
    } else {
        let inv_shape = shape.recip();
        for &x in data {
            let s = shape * (x - params.location) * inv_scale;
            if s <= -1.0 || s.is_nan() {
                return f64::NEG_INFINITY;
            }
            let y = s.ln_1p() * inv_shape;
            acc += (1.0 + shape) * y + (-y).exp();
        }
    }
    -(data.len() as f64) * params.scale.ln() - acc
}

/// Mean of the distribution, finite only for ξ < 1.
pub fn gev_mean(params: &GevParams) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    if params.is_gumbel() {
        params.location + params.scale * EULER_GAMMA
    } else if params.shape < 1.0 {
        params.location + params.scale * (libm::tgamma(1.0 - params.shape) - 1.0) / params.shape
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(location: f64, scale: f64, shape: f64) -> GevParams {
        GevParams::new(location, scale, shape).unwrap()
    }

    /// Analytic gradient of the log-likelihood in (μ, σ, ξ), ξ ≠ 0.
    fn loglik_gradient(data: &[f64], th: &GevParams) -> [f64; 3] {
        let (mu, sigma, xi) = (th.location, th.scale, th.shape);
        let mut g = [0.0; 3];
        for &x in data {
            let z = (x - mu) / sigma;
            let w = 1.0 + xi * z;
            let t = w.powf(-1.0 / xi);
            // d/dz of [-(1+1/ξ) ln w - t]
            let dz = -(1.0 + xi) / w + t / w;
            g[0] += -dz / sigma;
            g[1] += -1.0 / sigma - dz * z / sigma;
            // d/dξ: (1/ξ²) ln w - (1+1/ξ) z/w - t * (ln w/ξ² - z/(ξ w))
            let lw = w.ln();
            g[2] += lw / (xi * xi) - (1.0 + 1.0 / xi) * z / w - t * (lw / (xi * xi) - z / (xi * w));
        }
        g
    }

    #[test]
    fn cdf_examples() {
        let gumbel = p(0.0, 1.0, 0.0);
        assert!((gev_cdf(0.0, &gumbel).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let bounded = p(0.0, 1.0, -0.5);
        assert_eq!(gev_cdf(2.5, &bounded).unwrap(), 1.0);
        let heavy = p(0.0, 1.0, 0.2);
        assert_eq!(gev_cdf(-5.1, &heavy).unwrap(), 0.0);
        assert!((gev_cdf(14.904, &heavy).unwrap() - 0.999).abs() < 1e-6);
        assert!(gev_cdf(f64::NAN, &heavy).is_err());
        assert!(gev_cdf(f64::INFINITY, &heavy).is_err());
    }

    #[test]
    fn quantile_examples() {
        let th = p(30.0, 2.0, 0.0);
        assert!((gev_quantile((-1.0f64).exp(), &th).unwrap() - 30.0).abs() < 1e-12);
        // ((-ln 0.999)^-0.2 - 1)/0.2 = 14.903367...
        let q = gev_quantile(0.999, &p(0.0, 1.0, 0.2)).unwrap();
        assert!((q - 14.903_367_261_540_65).abs() < 1e-9, "{q}");
        let q = gev_quantile(0.999, &p(0.0, 1.0, 0.0)).unwrap();
        assert!((q - 6.907_255_070_523_716).abs() < 1e-12, "{q}");
        assert!(gev_quantile(0.0, &th).is_err());
        assert!(gev_quantile(1.0, &th).is_err());
        assert!(gev_quantile(f64::NAN, &th).is_err());
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(GevParams::new(0.0, 0.0, 0.1).is_err());
        assert!(GevParams::new(0.0, -1.0, 0.1).is_err());
        let bad = GevParams {
            location: 0.0,
            scale: -1.0,
            shape: 0.0,
        };
        assert!(gev_cdf(0.0, &bad).is_err());
        assert!(gev_quantile(0.5, &bad).is_err());
    }

    #[test]
    fn log_likelihood_examples() {
        let ll = gev_log_likelihood(&[3.0], &p(3.0, 1.0, 0.0)).unwrap();
        assert!((ll + 1.0).abs() < 1e-15);
        // lower endpoint of ξ = 0.5 at μ - σ/ξ = -2
        let ll = gev_log_likelihood(&[0.0, -2.5], &p(0.0, 1.0, 0.5)).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
        assert!(gev_log_likelihood(&[], &p(0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn log_likelihood_matches_pointwise_density() {
        let data = [28.0, 29.5, 31.2, 33.9, 30.0];
        for shape in [-0.3, -1e-9, 0.0, 0.25] {
            let th = p(30.0, 2.0, shape);
            let total: f64 = data.iter().map(|&x| gev_log_density(x, &th)).sum();
            let ll = gev_log_likelihood(&data, &th).unwrap();
            assert!((ll - total).abs() < 1e-10, "{ll} vs {total}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = [27.1, 29.4, 30.2, 31.7, 33.3, 35.9, 28.8, 30.6];
        for th in [p(30.0, 2.0, 0.1), p(29.5, 1.7, -0.2), p(30.3, 2.4, 0.35)] {
            let g = loglik_gradient(&data, &th);
            let f = |d: [f64; 3]| {
                let q = GevParams {
                    location: th.location + d[0],
                    scale: th.scale + d[1],
                    shape: th.shape + d[2],
                };
                gev_log_likelihood(&data, &q).unwrap()
            };
            for k in 0..3 {
                let h = 1e-5;
                let mut up = [0.0; 3];
                let mut dn = [0.0; 3];
                up[k] = h;
                dn[k] = -h;
                let fd = (f(up) - f(dn)) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
                assert!(rel < 1e-6, "param {k}: fd {fd} analytic {}", g[k]);
            }
        }
    }

    #[test]
    fn mean_matches_gumbel_constant() {
        let m = gev_mean(&p(0.0, 1.0, 0.0));
        assert!((m - 0.5772156649015329).abs() < 1e-15);
        // continuity through ξ = 0
        assert!((gev_mean(&p(0.0, 1.0, 1e-6)) - m).abs() < 1e-5);
    }

    const SHAPES: [f64; 7] = [-0.4, -0.1, -1e-12, 0.0, 1e-12, 0.1, 0.4];

    #[test]
    fn gumbel_limit_is_continuous() {
        for &prob in &[0.001, 0.1, 0.5, 0.9, 0.999, 0.9999] {
            let th0 = p(30.0, 2.0, 0.0);
            let q0 = gev_quantile(prob, &th0).unwrap();
            for s in [1e-9, -1e-9, 2e-8, -2e-8] {
                let q = gev_quantile(prob, &p(30.0, 2.0, s)).unwrap();
                assert!((q - q0).abs() < 1e-6 * 2.0, "shape {s}: {q} vs {q0}");
            }
        }
    }

    proptest! {
        #[test]
        fn cdf_inverts_quantile(
            prob in 0.001f64..0.9999,
            loc in -20.0f64..50.0,
            scale in 0.1f64..10.0,
            k in 0usize..7,
        ) {
            let th = p(loc, scale, SHAPES[k]);
            let x = gev_quantile(prob, &th).unwrap();
            prop_assert!((gev_cdf(x, &th).unwrap() - prob).abs() < 1e-10);
        }

        #[test]
        fn log_likelihood_translation_invariant(
            shift in -50.0f64..50.0,
            shape in -0.4f64..0.4,
        ) {
            let data = [28.0, 29.5, 31.2, 33.9, 30.0, 27.2];
            let shifted: Vec<f64> = data.iter().map(|x| x + shift).collect();
            let a = gev_log_likelihood(&data, &p(30.0, 2.0, shape)).unwrap();
            let b = gev_log_likelihood(&shifted, &p(30.0 + shift, 2.0, shape)).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn log_likelihood_scale_equivariant(
            factor in 0.1f64..10.0,
            shape in -0.4f64..0.4,
        ) {
            // ℓ(a·x; a·μ, a·σ, ξ) = ℓ(x; μ, σ, ξ) - n ln a
            let data = [28.0, 29.5, 31.2, 33.9, 30.0, 27.2];
            let scaled: Vec<f64> = data.iter().map(|x| x * factor).collect();
            let a = gev_log_likelihood(&data, &p(30.0, 2.0, shape)).unwrap();
            let b = gev_log_likelihood(&scaled, &p(30.0 * factor, 2.0 * factor, shape)).unwrap();
            prop_assert!((a - data.len() as f64 * factor.ln() - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
}
