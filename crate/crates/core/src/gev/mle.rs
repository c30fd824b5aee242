//! Maximum-likelihood point estimates by Nelder–Mead simplex search.
//!
//! The search runs in scaled coordinates `((μ - μ₀)/σ₀, ln(σ/σ₀), ξ)`
//! around the initial guess, so the fit is translation and scale
//! equivariant and the convergence tolerance is unit-free.

use super::{log_likelihood_unchecked, FitError, GevParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_evaluations: usize,
    /// Simplex diameter (max-norm, scaled coordinates) that counts as converged.
    pub tolerance: f64,
    pub initial_step: [f64; 3],
    /// Open bound on |ξ|.
    pub shape_bound: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_evaluations: 20_000,
            tolerance: 1e-8,
            initial_step: [0.2, 0.1, 0.05],
            shape_bound: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleFit {
    pub params: GevParams,
    pub log_likelihood: f64,
    pub evaluations: usize,
}

/// Local likelihood maximizer starting from `init`.
pub fn mle_fit(data: &[f64], init: &GevParams) -> Result<GevParams, FitError> {
    mle_fit_with(data, init, &MleOptions::default()).map(|f| f.params)
}

pub fn mle_fit_with(data: &[f64], init: &GevParams, opts: &MleOptions) -> Result<MleFit, FitError> {
    if data.is_empty() {
        return Err(FitError::TooFewObservations { n: 0, min: 1 });
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let (mu0, sigma0) = (init.location, init.scale);
    let to_params = |u: &[f64; 3]| GevParams {
        location: mu0 + sigma0 * u[0],
        scale: sigma0 * u[1].exp(),
        shape: u[2],
    };
    let objective = |u: &[f64; 3]| -> f64 {
        if u[2].is_nan() || u[2].abs() >= opts.shape_bound || !u.iter().all(|v| v.is_finite()) {
            return f64::INFINITY;
        }
        let ll = log_likelihood_unchecked(data, &to_params(u));
        if ll.is_nan() {
            f64::INFINITY
        } else {
            -ll
        }
    };

    let start = [0.0, 0.0, init.shape];
    let mut evaluations = 0;
    let mut best = (start, objective(&start));
    evaluations += 1;
    // A second pass from the first optimum guards against premature collapse.
    for _ in 0..2 {
        let run = nelder_mead(&objective, best.0, opts, &mut evaluations);
        let improved = run.1 < best.1;
        if improved || run.1 == best.1 {
            best = run;
        }
        if evaluations >= opts.max_evaluations || !improved {
            break;
        }
    }

    let params = to_params(&best.0);
    let log_likelihood = -best.1;
    if evaluations >= opts.max_evaluations || !log_likelihood.is_finite() {
        return Err(FitError::NotConverged {
            best: params,
            log_likelihood,
            evaluations,
        });
    }
    Ok(MleFit {
        params,
        log_likelihood,
        evaluations,
    })
}

fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(
    f: &F,
    start: [f64; 3],
    opts: &MleOptions,
    evaluations: &mut usize,
) -> ([f64; 3], f64) {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, f(&start)));
    for k in 0..3 {
        let mut v = start;
        v[k] += opts.initial_step[k];
        simplex.push((v, f(&v)));
    }
    *evaluations += 4;

    let combine = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    };

    while *evaluations < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let anchor = simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(v, _)| (0..3).map(move |k| (v[k] - anchor[k]).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.tolerance {
            break;
        }

        let mut centroid = [0.0; 3];
        for (v, _) in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += v[k] / 3.0;
            }
        }
        let (worst, f_worst) = simplex[3];
        let reflected = combine(&centroid, &worst, -REFLECT);
        let f_reflected = f(&reflected);
        *evaluations += 1;

        if f_reflected < simplex[0].1 {
            let expanded = combine(&centroid, &worst, -EXPAND);
            let f_expanded = f(&expanded);
            *evaluations += 1;
            simplex[3] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[2].1 {
            simplex[3] = (reflected, f_reflected);
        } else {
            let (contracted, outside) = if f_reflected < f_worst {
                (combine(&centroid, &reflected, CONTRACT), true)
            } else {
                (combine(&centroid, &worst, CONTRACT), false)
            };
            let f_contracted = f(&contracted);
            *evaluations += 1;
            let accept = if outside {
                f_contracted <= f_reflected
            } else {
                f_contracted < f_worst
            };
            if accept {
                simplex[3] = (contracted, f_contracted);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let v = combine(&best, &entry.0, SHRINK);
                    *entry = (v, f(&v));
                }
                *evaluations += 3;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}
