//! Bayesian GEV fitting with an adaptive component-wise random-walk
//! Metropolis sampler.
//!
//! The chain state is `(μ, ln σ, ξ)`. Each iteration proposes a Gaussian
//! move in one coordinate at a time. During burn-in, every
//! `adaptation_window` iterations each coordinate's step size is nudged on
//! the log scale toward the target acceptance rate; afterwards the step
//! sizes are frozen so the retained draws come from a fixed Markov kernel.
//!
//! Priors (weakly informative, scaled by the sample):
//!
//! * μ ~ Normal(sample median, (10 · L-scale)²)
//! * ln σ ~ Normal(ln L-scale + ln 2, 1)
//! * ξ ~ Normal(0, 0.25²) truncated to (-1, 1)

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    lmoments::sample_lmoments, lmoments_estimate, log_likelihood_unchecked, mle_fit, quantile_unchecked,
    FitError, GevParams,
};
use crate::error::{Error, Result};
use crate::extremes::empirical_quantile;
use crate::rng::{mix_seed, uniform_open, CellRng, FromSeedU64};

/// Minimum sample size accepted by [`bayes_fit`].
pub const MIN_BAYES_OBSERVATIONS: usize = 10;
/// Split R-hat above this value attaches a convergence warning.
pub const RHAT_WARNING: f64 = 1.1;
/// Stage id mixed into per-chain seeds.
const CHAIN_STREAM: u64 = 0x6d63_6d63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    /// Iterations per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Iterations per step-size update during burn-in.
    pub adaptation_window: usize,
    pub target_acceptance: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            iterations: 10_000,
            burn_in: 5_000,
            thinning: 5,
            adaptation_window: 50,
            target_acceptance: 0.3,
            seed: 0,
        }
    }
}

impl McmcConfig {
    /// Violated invariants as `(field, message)` pairs.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.chains == 0 {
            out.push(("chains", "must be at least 1".to_string()));
        }
        if self.iterations == 0 {
            out.push(("iterations", "must be at least 1".to_string()));
        }
        if self.burn_in >= self.iterations {
            out.push((
                "burn_in",
                format!(
                    "burn-in {} must be smaller than iterations {}",
                    self.burn_in, self.iterations
                ),
            ));
        }
        if self.thinning == 0 {
            out.push(("thinning", "must be at least 1".to_string()));
        }
        if self.adaptation_window == 0 {
            out.push(("adaptation_window", "must be at least 1".to_string()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            out.push((
                "target_acceptance",
                format!("{} outside (0, 1)", self.target_acceptance),
            ));
        }
        out
    }

    /// Retained draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }

    pub fn with_seed(self, seed: u64) -> Self {
        McmcConfig { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub location_mean: f64,
    pub location_sd: f64,
    pub log_scale_mean: f64,
    pub log_scale_sd: f64,
    pub shape_sd: f64,
    /// Open bound on |ξ|.
    pub shape_bound: f64,
}

impl Priors {
    pub fn from_data(data: &[f64]) -> Result<Priors, FitError> {
        let lm = sample_lmoments(data)?;
        let median = empirical_quantile(data, 0.5).map_err(|_| FitError::NonFinite)?;
        Ok(Priors {
            location_mean: median,
            location_sd: 10.0 * lm.l2,
            log_scale_mean: lm.l2.ln() + std::f64::consts::LN_2,
            log_scale_sd: 1.0,
            shape_sd: 0.25,
            shape_bound: 1.0,
        })
    }

    /// Unnormalized log prior density in sampling coordinates.
    pub fn log_density(&self, state: &[f64; 3]) -> f64 {
        if state[2].is_nan() || state[2].abs() >= self.shape_bound {
            return f64::NEG_INFINITY;
        }
        let a = (state[0] - self.location_mean) / self.location_sd;
        let b = (state[1] - self.log_scale_mean) / self.log_scale_sd;
        let c = state[2] / self.shape_sd;
        -0.5 * (a * a + b * b + c * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Location,
    Scale,
    Shape,
}

impl Parameter {
    pub const ALL: [Parameter; 3] = [Parameter::Location, Parameter::Scale, Parameter::Shape];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::Location => "location",
            Parameter::Scale => "scale",
            Parameter::Shape => "shape",
        }
    }

    fn of(self, p: &GevParams) -> f64 {
        match self {
            Parameter::Location => p.location,
            Parameter::Scale => p.scale,
            Parameter::Shape => p.shape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceWarning {
    pub parameter: Parameter,
    pub rhat: f64,
}

impl std::fmt::Display for ConvergenceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "split R-hat {:.4} for {} exceeds {RHAT_WARNING}",
            self.rhat,
            self.parameter.name()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Post-burn-in acceptance rate per chain and coordinate (μ, ln σ, ξ).
    /// Empty for posteriors reloaded from disk.
    pub acceptance: Vec<[f64; 3]>,
    /// Frozen proposal step sizes per chain.
    pub step_sizes: Vec<[f64; 3]>,
    /// Split-chain R-hat for (μ, σ, ξ).
    pub rhat: [f64; 3],
}

impl Diagnostics {
    pub fn chain_acceptance(&self, chain: usize) -> f64 {
        self.acceptance[chain].iter().sum::<f64>() / 3.0
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NAN, f64::max)
    }
}

/// Pooled posterior draws, chain-major (all of chain 0, then chain 1, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    draws: Vec<GevParams>,
    n_chains: usize,
    diagnostics: Diagnostics,
    warnings: Vec<ConvergenceWarning>,
}

impl PosteriorSamples {
    /// Rebuilds a posterior from stored draws; R-hat is recomputed.
    pub fn from_draws(draws: Vec<GevParams>, n_chains: usize) -> Result<Self> {
        if n_chains == 0 || !draws.len().is_multiple_of(n_chains) {
            return Err(Error::argument(format!(
                "{} draws cannot be split into {n_chains} equal chains",
                draws.len()
            )));
        }
        if let Some(d) = draws
            .iter()
            .find(|d| GevParams::new(d.location, d.scale, d.shape).is_err())
        {
            return Err(Error::Data(format!("invalid posterior draw {d:?}")));
        }
        let diagnostics = Diagnostics {
            rhat: rhat_of(&draws, n_chains),
            ..Diagnostics::default()
        };
        let warnings = warnings_for(&diagnostics.rhat);
        Ok(PosteriorSamples {
            draws,
            n_chains,
            diagnostics,
            warnings,
        })
    }

    pub fn draws(&self) -> &[GevParams] {
        &self.draws
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn chain(&self, index: usize) -> &[GevParams] {
        let per = self.draws.len() / self.n_chains;
        &self.draws[index * per..(index + 1) * per]
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn warnings(&self) -> &[ConvergenceWarning] {
        &self.warnings
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    /// Posterior median, 5% and 95% points of each parameter and of the
    /// `p`-quantile.
    pub fn summary(&self, p: f64) -> Result<PosteriorSummary> {
        if self.draws.is_empty() {
            return Err(Error::argument("summary of an empty posterior"));
        }
        let band = |values: Vec<f64>| -> Result<Summary3> {
            Ok(Summary3 {
                q05: empirical_quantile(&values, 0.05)?,
                median: empirical_quantile(&values, 0.5)?,
                q95: empirical_quantile(&values, 0.95)?,
            })
        };
        let column = |par: Parameter| self.draws.iter().map(|d| par.of(d)).collect::<Vec<_>>();
        Ok(PosteriorSummary {
            location: band(column(Parameter::Location))?,
            scale: band(column(Parameter::Scale))?,
            shape: band(column(Parameter::Shape))?,
            threshold: band(posterior_quantile_draws(self, p)?)?,
            rhat: self.diagnostics.rhat,
            mean_acceptance: if self.diagnostics.acceptance.is_empty() {
                f64::NAN
            } else {
                (0..self.diagnostics.acceptance.len())
                    .map(|c| self.diagnostics.chain_acceptance(c))
                    .sum::<f64>()
                    / self.diagnostics.acceptance.len() as f64
            },
            draws: self.draws.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary3 {
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub location: Summary3,
    pub scale: Summary3,
    pub shape: Summary3,
    /// The extreme threshold at the requested probability.
    pub threshold: Summary3,
    pub rhat: [f64; 3],
    pub mean_acceptance: f64,
    pub draws: usize,
}

/// `gev_quantile(p, θ)` for every posterior draw θ, in draw order.
pub fn posterior_quantile_draws(post: &PosteriorSamples, p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::argument(format!("probability {p} outside (0, 1)")));
    }
    Ok(post.draws.iter().map(|th| quantile_unchecked(p, th)).collect())
}

/// Posterior sample of GEV parameters for `data`.
///
/// Deterministic for a given `(data, config)`. Convergence problems
/// (R-hat above 1.1) are attached as warnings rather than returned as
/// errors.
pub fn bayes_fit(data: &[f64], config: &McmcConfig) -> Result<PosteriorSamples> {
    if let Some((field, msg)) = config.problems().into_iter().next() {
        return Err(Error::argument(format!("mcmc.{field}: {msg}")));
    }
    if data.len() < MIN_BAYES_OBSERVATIONS {
        return Err(FitError::TooFewObservations {
            n: data.len(),
            min: MIN_BAYES_OBSERVATIONS,
        }
        .into());
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(FitError::NonFinite.into());
    }
    let priors = Priors::from_data(data)?;
    let init = lmoments_estimate(data)?;
    let mode = match mle_fit(data, &init) {
        Ok(m) if m.shape.abs() < 0.9 => m,
        _ => init,
    };
    let target = Target { data, priors };
    let center = [mode.location, mode.scale.ln(), mode.shape.clamp(-0.9, 0.9)];
    let root_n = (data.len() as f64).sqrt();
    let initial_steps = [mode.scale / root_n, 0.8 / root_n, 0.8 / root_n];

    let chains: Vec<ChainOutput<3>> = (0..config.chains)
        .map(|c| {
            let mut rng = CellRng::from_seed_u64(mix_seed(config.seed, c as u64, CHAIN_STREAM));
            let start = dispersed_start(&target, center, initial_steps, &mut rng);
            run_chain(
                |s| target.log_posterior(s),
                start,
                initial_steps,
                config,
                &mut rng,
            )
        })
        .collect();

    let mut draws = Vec::with_capacity(config.chains * config.draws_per_chain());
    let mut acceptance = Vec::with_capacity(config.chains);
    let mut step_sizes = Vec::with_capacity(config.chains);
    for ch in chains {
        draws.extend(ch.states.iter().map(|s| GevParams {
            location: s[0],
            scale: s[1].exp(),
            shape: s[2],
        }));
        acceptance.push(ch.acceptance);
        step_sizes.push(ch.steps);
    }
    let diagnostics = Diagnostics {
        acceptance,
        step_sizes,
        rhat: rhat_of(&draws, config.chains),
    };
    let warnings = warnings_for(&diagnostics.rhat);
    Ok(PosteriorSamples {
        draws,
        n_chains: config.chains,
        diagnostics,
        warnings,
    })
}

struct Target<'a> {
    data: &'a [f64],
    priors: Priors,
}

impl Target<'_> {
    fn log_posterior(&self, s: &[f64; 3]) -> f64 {
        let prior = self.priors.log_density(s);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        let th = GevParams {
            location: s[0],
            scale: s[1].exp(),
            shape: s[2],
        };
        let ll = log_likelihood_unchecked(self.data, &th);
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll + prior
        }
    }
}

struct ChainOutput<const D: usize> {
    states: Vec<[f64; D]>,
    acceptance: [f64; D],
    steps: [f64; D],
}

fn dispersed_start(target: &Target<'_>, center: [f64; 3], steps: [f64; 3], rng: &mut CellRng) -> [f64; 3] {
    for _ in 0..100 {
        let mut s = center;
        for k in 0..3 {
            let z: f64 = StandardNormal.sample(rng);
            s[k] += 2.0 * steps[k] * z;
        }
        if target.log_posterior(&s).is_finite() {
            return s;
        }
    }
    center
}

/// One component-wise adaptive random-walk chain over `D` coordinates.
fn run_chain<const D: usize>(
    log_post_fn: impl Fn(&[f64; D]) -> f64,
    start: [f64; D],
    initial_steps: [f64; D],
    config: &McmcConfig,
    rng: &mut CellRng,
) -> ChainOutput<D> {
    let mut state = start;
    let mut log_post = log_post_fn(&state);
    let mut steps = initial_steps;
    let mut batch_accepts = [0usize; D];
    let mut batch = 0usize;
    let mut kept_accepts = [0usize; D];
    let mut states = Vec::with_capacity(config.draws_per_chain());

    for it in 0..config.iterations {
        for k in 0..D {
            let z: f64 = StandardNormal.sample(rng);
            let mut proposal = state;
            proposal[k] += steps[k] * z;
            let lp = log_post_fn(&proposal);
            let u = uniform_open(rng);
            if lp > f64::NEG_INFINITY && u.ln() < lp - log_post {
                state = proposal;
                log_post = lp;
                if it < config.burn_in {
                    batch_accepts[k] += 1;
                } else {
                    kept_accepts[k] += 1;
                }
            }
        }

        if it < config.burn_in {
            if (it + 1) % config.adaptation_window == 0 {
                batch += 1;
                let gain = (3.0 / (batch as f64).sqrt()).min(1.0);
                for k in 0..D {
                    let rate = batch_accepts[k] as f64 / config.adaptation_window as f64;
                    steps[k] *= (gain * (rate - config.target_acceptance)).exp();
                    batch_accepts[k] = 0;
                }
            }
        } else if (it - config.burn_in + 1).is_multiple_of(config.thinning) {
            states.push(state);
        }
    }

    let kept = (config.iterations - config.burn_in) as f64;
    ChainOutput {
        states,
        acceptance: kept_accepts.map(|a| a as f64 / kept),
        steps,
    }
}

fn rhat_of(draws: &[GevParams], n_chains: usize) -> [f64; 3] {
    let per = draws.len() / n_chains.max(1);
    Parameter::ALL.map(|par| {
        let chains: Vec<Vec<f64>> = (0..n_chains)
            .map(|c| draws[c * per..(c + 1) * per].iter().map(|d| par.of(d)).collect())
            .collect();
        split_rhat(&chains)
    })
}

fn warnings_for(rhat: &[f64; 3]) -> Vec<ConvergenceWarning> {
    Parameter::ALL
        .iter()
        .zip(rhat)
        .filter(|(_, r)| r.is_nan() || **r > RHAT_WARNING)
        .map(|(p, r)| ConvergenceWarning {
            parameter: *p,
            rhat: *r,
        })
        .collect()
}

/// Split-chain potential scale reduction factor.
///
/// Each chain is cut into two halves (dropping the middle draw of odd
/// lengths); R-hat compares the between-half variance of the means with
/// the mean within-half variance. Returns NaN with fewer than two draws per
/// half, and 1 when every draw is identical.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return f64::NAN;
    }
    let mut pieces: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        pieces.push(&c[..half]);
        pieces.push(&c[c.len() - half..]);
    }
    let n = half as f64;
    let m = pieces.len() as f64;
    let means: Vec<f64> = pieces.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let within = pieces
        .iter()
        .zip(&means)
        .map(|(p, mean)| p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let grand = means.iter().sum::<f64>() / m;
    let between_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    if within == 0.0 {
        return if between_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between_over_n;
    (var_plus / within).sqrt()
}
