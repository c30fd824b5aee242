use super::{FitError, GevParams};

const MIN_OBSERVATIONS: usize = 4;
/// Hosking's approximation degrades quickly outside |k| < 0.5; beyond this
/// bound Γ(1 + k) is no longer usable.
const SHAPE_LIMIT: f64 = 0.95;

/// First two sample L-moments and the L-skewness ratio `t3 = l3 / l2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLMoments {
    pub l1: f64,
    pub l2: f64,
    pub t3: f64,
}

/// Unbiased sample L-moments from probability-weighted moments.
pub fn sample_lmoments(data: &[f64]) -> Result<SampleLMoments, FitError> {
    let n = data.len();
    if n < 3 {
        return Err(FitError::TooFewObservations { n, min: 3 });
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);

    let nf = n as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &x) in sorted.iter().enumerate() {
        let j = i as f64; // zero-based rank
        b0 += x;
        b1 += x * j / (nf - 1.0);
        b2 += x * j * (j - 1.0) / ((nf - 1.0) * (nf - 2.0));
    }
    b0 /= nf;
    b1 /= nf;
    b2 /= nf;

    let l1 = b0;
    let l2 = 2.0 * b1 - b0;
    let l3 = 6.0 * b2 - 6.0 * b1 + b0;
    let spread = sorted[n - 1] - sorted[0];
    // rounding can leave a tiny nonzero l2 on constant data
    if spread == 0.0 || l2 <= 0.0 {
        return Err(FitError::Degenerate);
    }
    Ok(SampleLMoments { l1, l2, t3: l3 / l2 })
}

/// GEV estimate from sample L-moments via Hosking's rational approximation
/// for the shape. Used to initialize the likelihood-based fits.
///
/// The shape is clamped to `[-0.95, 0.95]` so the result is always valid.
pub fn lmoments_estimate(data: &[f64]) -> Result<GevParams, FitError> {
    if data.len() < MIN_OBSERVATIONS {
        return Err(FitError::TooFewObservations {
            n: data.len(),
            min: MIN_OBSERVATIONS,
        });
    }
    let lm = sample_lmoments(data)?;
    let c = 2.0 / (3.0 + lm.t3) - std::f64::consts::LN_2 / 3f64.ln();
    // Hosking's k is the negated shape
    let k = (7.8590 * c + 2.9554 * c * c).clamp(-SHAPE_LIMIT, SHAPE_LIMIT);

    let (scale, location) = if k.abs() < super::GUMBEL_TOLERANCE {
        let scale = lm.l2 / std::f64::consts::LN_2;
        (scale, lm.l1 - 0.577_215_664_901_532_9 * scale)
    } else {
        let g = libm::tgamma(1.0 + k);
        let scale = lm.l2 * k / ((1.0 - 2f64.powf(-k)) * g);
        (scale, lm.l1 - scale * (1.0 - g) / k)
    };
    if !(scale.is_finite() && scale > 0.0 && location.is_finite()) {
        return Err(FitError::Degenerate);
    }
    Ok(GevParams {
        location,
        scale,
        shape: -k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gev::quantile_unchecked;
    use crate::rng::{uniform_open, CellRng, FromSeedU64};

    fn draws(th: &GevParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = CellRng::from_seed_u64(seed);
        (0..n)
            .map(|_| quantile_unchecked(uniform_open(&mut rng), th))
            .collect()
    }

    #[test]
    fn lmoments_of_known_sample() {
        // hand-computed: sorted {1,2,3,4}: b0 = 2.5, b1 = 20/12, b2 = 1
        let lm = sample_lmoments(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert!((lm.l1 - 2.5).abs() < 1e-15);
        assert!((lm.l2 - (40.0 / 12.0 - 2.5)).abs() < 1e-15);
        assert!(lm.t3.abs() < 1e-14);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        assert_eq!(lmoments_estimate(&[2.0; 10]).unwrap_err(), FitError::Degenerate);
        assert!(matches!(
            lmoments_estimate(&[1.0, 2.0, 3.0]),
            Err(FitError::TooFewObservations { .. })
        ));
        assert_eq!(
            lmoments_estimate(&[1.0, 2.0, f64::NAN, 4.0]).unwrap_err(),
            FitError::NonFinite
        );
    }

    #[test]
    fn gumbel_sample_has_near_zero_shape() {
        let th = GevParams::new(10.0, 3.0, 0.0).unwrap();
        let data = draws(&th, 10_000, 11);
        let fit = lmoments_estimate(&data).unwrap();
        assert!(fit.shape.abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn recovers_parameters_at_large_n() {
        let th = GevParams::new(30.0, 2.0, 0.1).unwrap();
        let fit = lmoments_estimate(&draws(&th, 10_000, 3)).unwrap();
        assert!((fit.location - 30.0).abs() < 0.1, "{fit:?}");
        assert!((fit.scale - 2.0).abs() < 0.1, "{fit:?}");
        assert!((fit.shape - 0.1).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn affine_equivariance() {
        let th = GevParams::new(30.0, 2.0, -0.15).unwrap();
        let data = draws(&th, 500, 9);
        let base = lmoments_estimate(&data).unwrap();
        for (a, b) in [(1.8, 32.0), (0.5, -10.0), (3.0, 0.0)] {
            let moved: Vec<f64> = data.iter().map(|x| a * x + b).collect();
            let fit = lmoments_estimate(&moved).unwrap();
            assert!((fit.location - (a * base.location + b)).abs() < 1e-9);
            assert!((fit.scale - a * base.scale).abs() < 1e-9);
            assert!((fit.shape - base.shape).abs() < 1e-9);
        }
    }
}
