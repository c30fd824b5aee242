//! C ABI over `ensemble-extremes`.
//!
//! Every fallible function returns an [`EnsxStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be read with [`ensx_last_error`]. Posterior samples live behind the opaque
//! [`EnsxPosterior`] handle, released with [`ensx_posterior_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ensemble_extremes::compare::{confidence_category, containment_probability};
use ensemble_extremes::extremes::empirical_quantile;
use ensemble_extremes::gev::{
    bayes_fit, gev_cdf, gev_log_likelihood, gev_quantile, lmoments_estimate, mle_fit, GevParams, McmcConfig,
    PosteriorSamples,
};
use ensemble_extremes::heatindex::{dewpoint_to_rh, heat_index, risk_category};
use ensemble_extremes::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    FitFailed = 3,
    InvalidData = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsxGevParams {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsxMcmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub adaptation_window: usize,
    pub target_acceptance: f64,
    pub seed: u64,
}

/// 5 %, 50 % and 95 % posterior quantiles.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsxInterval {
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsxPosteriorSummary {
    pub location: EnsxInterval,
    pub scale: EnsxInterval,
    pub shape: EnsxInterval,
    pub threshold: EnsxInterval,
    pub rhat: [f64; 3],
    pub mean_acceptance: f64,
}

/// Opaque posterior sample set.
pub struct EnsxPosterior(PosteriorSamples);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> EnsxStatus {
    match err {
        Error::Argument(_) | Error::Config(_) | Error::Shape(_) => EnsxStatus::InvalidArgument,
        Error::Fit(_) => EnsxStatus::FitFailed,
        _ => EnsxStatus::InvalidData,
    }
}

fn guard(f: impl FnOnce() -> Result<(), EnsxStatus>) -> EnsxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EnsxStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic".into());
            EnsxStatus::Panic
        }
    }
}

fn check<T>(r: Result<T, Error>) -> Result<T, EnsxStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null(what: &str) -> EnsxStatus {
    set_error(format!("{what} is null"));
    EnsxStatus::NullPointer
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, EnsxStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(data: *const f64, n: usize) -> Result<&'a [f64], EnsxStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(std::slice::from_raw_parts(data, n))
}

unsafe fn params(p: *const EnsxGevParams) -> Result<GevParams, EnsxStatus> {
    let p = p.as_ref().ok_or_else(|| null("params"))?;
    check(GevParams::new(p.location, p.scale, p.shape))
}

fn to_c(p: &GevParams) -> EnsxGevParams {
    EnsxGevParams {
        location: p.location,
        scale: p.scale,
        shape: p.shape,
    }
}

/// Message of the last failure on this thread, or NULL after a success.
/// The pointer stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ensx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn ensx_gev_cdf(x: f64, p: *const EnsxGevParams, out_cdf: *mut f64) -> EnsxStatus {
    guard(|| {
        let th = params(p)?;
        *out(out_cdf, "out_cdf")? = check(gev_cdf(x, &th))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensx_gev_quantile(
    prob: f64,
    p: *const EnsxGevParams,
    out_x: *mut f64,
) -> EnsxStatus {
    guard(|| {
        let th = params(p)?;
        *out(out_x, "out_x")? = check(gev_quantile(prob, &th))?;
        Ok(())
    })
}

/// Log-likelihood of `n` values; `-inf` when any value lies outside the support.
#[no_mangle]
pub unsafe extern "C" fn ensx_gev_log_likelihood(
    data: *const f64,
    n: usize,
    p: *const EnsxGevParams,
    out_ll: *mut f64,
) -> EnsxStatus {
    guard(|| {
        let th = params(p)?;
        let xs = slice(data, n)?;
        *out(out_ll, "out_ll")? = check(gev_log_likelihood(xs, &th))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensx_lmoments_estimate(
    data: *const f64,
    n: usize,
    out_params: *mut EnsxGevParams,
) -> EnsxStatus {
    guard(|| {
        let xs = slice(data, n)?;
        let th = check(lmoments_estimate(xs).map_err(Error::from))?;
        *out(out_params, "out_params")? = to_c(&th);
        Ok(())
    })
}

/// Maximum-likelihood fit; a NULL `init` starts from the L-moment estimate.
#[no_mangle]
pub unsafe extern "C" fn ensx_mle_fit(
    data: *const f64,
    n: usize,
    init: *const EnsxGevParams,
    out_params: *mut EnsxGevParams,
) -> EnsxStatus {
    guard(|| {
        let xs = slice(data, n)?;
        let start = if init.is_null() {
            check(lmoments_estimate(xs).map_err(Error::from))?
        } else {
            params(init)?
        };
        let th = check(mle_fit(xs, &start).map_err(Error::from))?;
        *out(out_params, "out_params")? = to_c(&th);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensx_mcmc_config_default(out_config: *mut EnsxMcmcConfig) -> EnsxStatus {
    guard(|| {
        let d = McmcConfig::default();
        *out(out_config, "out_config")? = EnsxMcmcConfig {
            chains: d.chains,
            iterations: d.iterations,
            burn_in: d.burn_in,
            thinning: d.thinning,
            adaptation_window: d.adaptation_window,
            target_acceptance: d.target_acceptance,
            seed: d.seed,
        };
        Ok(())
    })
}

/// Bayesian GEV fit. On success `*out_posterior` owns a new handle.
#[no_mangle]
pub unsafe extern "C" fn ensx_bayes_fit(
    data: *const f64,
    n: usize,
    config: *const EnsxMcmcConfig,
    out_posterior: *mut *mut EnsxPosterior,
) -> EnsxStatus {
    guard(|| {
        let slot = out(out_posterior, "out_posterior")?;
        *slot = ptr::null_mut();
        let xs = slice(data, n)?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let cfg = McmcConfig {
            chains: c.chains,
            iterations: c.iterations,
            burn_in: c.burn_in,
            thinning: c.thinning,
            adaptation_window: c.adaptation_window,
            target_acceptance: c.target_acceptance,
            seed: c.seed,
        };
        let post = check(bayes_fit(xs, &cfg))?;
        *slot = Box::into_raw(Box::new(EnsxPosterior(post)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensx_posterior_free(posterior: *mut EnsxPosterior) {
    if !posterior.is_null() {
        drop(Box::from_raw(posterior));
    }
}

/// Number of retained draws over all chains; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ensx_posterior_len(posterior: *const EnsxPosterior) -> usize {
    posterior.as_ref().map_or(0, |p| p.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn ensx_posterior_n_chains(posterior: *const EnsxPosterior) -> usize {
    posterior.as_ref().map_or(0, |p| p.0.n_chains())
}

/// Copies up to `capacity` draws, chain-major; `*out_written` gets the count.
#[no_mangle]
pub unsafe extern "C" fn ensx_posterior_draws(
    posterior: *const EnsxPosterior,
    out_draws: *mut EnsxGevParams,
    capacity: usize,
    out_written: *mut usize,
) -> EnsxStatus {
    guard(|| {
        let post = posterior.as_ref().ok_or_else(|| null("posterior"))?;
        let written = out(out_written, "out_written")?;
        let k = capacity.min(post.0.len());
        if k > 0 && out_draws.is_null() {
            return Err(null("out_draws"));
        }
        for (i, th) in post.0.draws()[..k].iter().enumerate() {
            *out_draws.add(i) = to_c(th);
        }
        *written = k;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensx_posterior_summary(
    posterior: *const EnsxPosterior,
    prob: f64,
    out_summary: *mut EnsxPosteriorSummary,
) -> EnsxStatus {
    guard(|| {
        let post = posterior.as_ref().ok_or_else(|| null("posterior"))?;
        let s = check(post.0.summary(prob))?;
        let iv = |q: ensemble_extremes::gev::Summary3| EnsxInterval {
            q05: q.q05,
            median: q.median,
            q95: q.q95,
        };
        *out(out_summary, "out_summary")? = EnsxPosteriorSummary {
            location: iv(s.location),
            scale: iv(s.scale),
            shape: iv(s.shape),
            threshold: iv(s.threshold),
            rhat: s.rhat,
            mean_acceptance: s.mean_acceptance,
        };
        Ok(())
    })
}

/// Fraction of draws whose `prob`-quantile reaches `target`.
#[no_mangle]
pub unsafe extern "C" fn ensx_containment_probability(
    posterior: *const EnsxPosterior,
    prob: f64,
    target: f64,
    out_probability: *mut f64,
) -> EnsxStatus {
    guard(|| {
        let post = posterior.as_ref().ok_or_else(|| null("posterior"))?;
        *out(out_probability, "out_probability")? = check(containment_probability(&post.0, prob, target))?;
        Ok(())
    })
}

/// Likelihood category index: 0 = virtually certain … 7 = exceptionally unlikely.
#[no_mangle]
pub unsafe extern "C" fn ensx_confidence_category(probability: f64, out_category: *mut u32) -> EnsxStatus {
    guard(|| {
        let c = check(confidence_category(probability))?;
        *out(out_category, "out_category")? = c.index() as u32;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensx_dewpoint_to_rh(t2m: f64, dewpoint: f64, out_rh: *mut f64) -> EnsxStatus {
    guard(|| {
        *out(out_rh, "out_rh")? = check(dewpoint_to_rh(t2m, dewpoint))?;
        Ok(())
    })
}

/// Heat index (°C) from temperature (°C) and relative humidity (%).
#[no_mangle]
pub unsafe extern "C" fn ensx_heat_index(t2m: f64, rh: f64, out_hi: *mut f64) -> EnsxStatus {
    guard(|| {
        *out(out_hi, "out_hi")? = check(heat_index(t2m, rh))?;
        Ok(())
    })
}

/// Risk category index: 0 = below caution … 4 = extreme danger.
#[no_mangle]
pub unsafe extern "C" fn ensx_risk_category(heat_index: f64, out_category: *mut u32) -> EnsxStatus {
    guard(|| {
        let slot = out(out_category, "out_category")?;
        let c = risk_category(heat_index).ok_or_else(|| {
            set_error(format!("heat index {heat_index} has no category"));
            EnsxStatus::InvalidArgument
        })?;
        *slot = c.index() as u32;
        Ok(())
    })
}

/// Type-7 sample quantile of `n` values.
#[no_mangle]
pub unsafe extern "C" fn ensx_empirical_quantile(
    data: *const f64,
    n: usize,
    prob: f64,
    out_q: *mut f64,
) -> EnsxStatus {
    guard(|| {
        let xs = slice(data, n)?;
        *out(out_q, "out_q")? = check(empirical_quantile(xs, prob))?;
        Ok(())
    })
}
