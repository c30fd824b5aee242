//! Synthetic ensembles with known per-cell GEV distributions.
//!
//! Member maxima are drawn directly by inverse-CDF sampling. Full blocks
//! spread the same target over `k` six-hourly layers using max-stability:
//! if every layer is GEV(μₗ, σₗ, ξ) with σₗ = σ·k^(-ξ) and
//! μₗ = μ + σ·(k^(-ξ) - 1)/ξ, the maximum of the `k` layers is GEV(μ, σ, ξ).

use chrono::NaiveDate;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EnsembleBlock, Variable, CELSIUS};
use crate::error::{Error, Result};
use crate::extremes::MemberMaxima;
use crate::gev::{quantile_unchecked, GevParams};
use crate::grid::{Grid, LandMask};
use crate::rng::{cell_rng, uniform_open};

const STAGE_MAXIMA: u64 = 0x6d61_7861;
const STAGE_BLOCK: u64 = 0x626c_6b00_0000_0000;
const STAGE_LAND: u64 = 0x6c61_6e64;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    grid: Grid,
    params: Vec<GevParams>,
    n_members: usize,
    seed: u64,
}

impl SyntheticSpec {
    pub fn new(grid: Grid, params: Vec<GevParams>, n_members: usize, seed: u64) -> Result<Self> {
        if params.len() != grid.len() {
            return Err(Error::shape(format!(
                "{} parameter sets for {} cells",
                params.len(),
                grid.len()
            )));
        }
        if n_members == 0 {
            return Err(Error::argument("n_members must be positive"));
        }
        for (cell, p) in params.iter().enumerate() {
            GevParams::new(p.location, p.scale, p.shape)
                .map_err(|e| Error::argument(format!("cell {cell}: {e}")))?;
        }
        Ok(SyntheticSpec {
            grid,
            params,
            n_members,
            seed,
        })
    }

    /// Same parameters at every cell.
    pub fn uniform(grid: Grid, params: GevParams, n_members: usize, seed: u64) -> Result<Self> {
        let params = vec![params; grid.len()];
        SyntheticSpec::new(grid, params, n_members, seed)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &[GevParams] {
        &self.params
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Per-cell member maxima drawn from the cell's true GEV.
pub fn synth_member_maxima(spec: &SyntheticSpec) -> Result<MemberMaxima> {
    let m = spec.n_members;
    let mut values = Vec::with_capacity(spec.grid.len() * m);
    for (cell, params) in spec.params.iter().enumerate() {
        let mut rng = cell_rng(spec.seed, cell as u64, STAGE_MAXIMA);
        values.extend((0..m).map(|_| quantile_unchecked(uniform_open(&mut rng), params)));
    }
    MemberMaxima::new(spec.grid.clone(), m, values, "t2m", CELSIUS)
}

/// Parameters of one of `layers` iid layers whose maximum follows `target`.
pub fn layer_params(target: &GevParams, layers: usize) -> GevParams {
    let log_k = (layers.max(1) as f64).ln();
    if target.is_gumbel() {
        GevParams {
            location: target.location - target.scale * log_k,
            ..*target
        }
    } else {
        let xi = target.shape;
        GevParams {
            location: target.location + target.scale * (-xi * log_k).exp_m1() / xi,
            scale: target.scale * (-xi * log_k).exp(),
            shape: xi,
        }
    }
}

/// Dewpoint depression `|N(mean, sd)|` in °C below the temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DewpointDepression {
    pub mean: f64,
    pub sd: f64,
}

impl Default for DewpointDepression {
    fn default() -> Self {
        DewpointDepression { mean: 12.0, sd: 5.0 }
    }
}

/// Temperature block (and optional dewpoint block) for one init date.
///
/// `date_index` and `n_dates` place the block in a season of `n_dates`
/// initializations; the per-member maximum over the whole season then
/// follows each cell's target GEV.
pub fn synth_block(
    spec: &SyntheticSpec,
    init_date: NaiveDate,
    date_index: usize,
    n_dates: usize,
    lead_hours: &[u32],
    dewpoint: Option<DewpointDepression>,
) -> Result<(EnsembleBlock, Option<EnsembleBlock>)> {
    if date_index >= n_dates {
        return Err(Error::argument(format!(
            "date index {date_index} outside season of {n_dates}"
        )));
    }
    if lead_hours.is_empty() {
        return Err(Error::argument("no lead hours"));
    }
    if let Some(d) = dewpoint {
        if !(d.mean.is_finite() && d.sd.is_finite() && d.sd >= 0.0) {
            return Err(Error::argument(
                "dewpoint depression needs finite mean and sd >= 0",
            ));
        }
    }
    let n = spec.grid.len();
    let (m, layers) = (spec.n_members, lead_hours.len());
    let total_layers = n_dates * layers;
    let mut t2m = vec![0f32; layers * m * n];
    let mut td = dewpoint.map(|_| vec![0f32; layers * m * n]);

    for (cell, target) in spec.params.iter().enumerate() {
        let lp = layer_params(target, total_layers);
        let stage = STAGE_BLOCK | date_index as u64;
        let mut rng = cell_rng(spec.seed, cell as u64, stage);
        for member in 0..m {
            for layer in 0..layers {
                let idx = (layer * m + member) * n + cell;
                let t = quantile_unchecked(uniform_open(&mut rng), &lp);
                t2m[idx] = t as f32;
                if let (Some(d), Some(td)) = (dewpoint, td.as_mut()) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    td[idx] = (t - (d.mean + d.sd * z).abs()) as f32;
                }
            }
        }
    }

    let make = |variable, data| {
        EnsembleBlock::new(
            spec.grid.clone(),
            variable,
            CELSIUS,
            init_date,
            lead_hours.to_vec(),
            m,
            data,
        )
    };
    let t_block = make(Variable::T2m, t2m)?;
    let td_block = td.map(|d| make(Variable::Dewpoint, d)).transpose()?;
    Ok((t_block, td_block))
}

/// Land fractions in [0, 1], roughly `land_share` of them at or above 0.75.
pub fn synth_land_mask(grid: &Grid, land_share: f64, seed: u64) -> Result<LandMask> {
    if !(0.0..=1.0).contains(&land_share) {
        return Err(Error::argument(format!("land share {land_share} outside [0, 1]")));
    }
    let fractions = (0..grid.len())
        .map(|cell| {
            let mut rng = cell_rng(seed, cell as u64, STAGE_LAND);
            let u = uniform_open(&mut rng);
            let v = uniform_open(&mut rng);
            if u < land_share {
                0.75 + 0.25 * v
            } else {
                0.75 * v
            }
        })
        .collect();
    LandMask::new(grid.clone(), fractions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gev::{gev_cdf, gev_mean};

    fn grid(n: usize) -> Grid {
        Grid::regional(10.0, 10.0, 1, 0.0, 1.0, n).unwrap()
    }

    #[test]
    fn gumbel_quantile_at_inverse_e_is_location() {
        let p = GevParams::new(30.0, 2.0, 0.0).unwrap();
        assert!((quantile_unchecked((-1f64).exp(), &p) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_draws() {
        let p = GevParams::new(30.0, 2.0, 0.1).unwrap();
        let spec = SyntheticSpec::uniform(grid(3), p, 20, 9).unwrap();
        let a = synth_member_maxima(&spec).unwrap();
        let b = synth_member_maxima(&spec).unwrap();
        assert_eq!(a, b);
        let other = SyntheticSpec::uniform(grid(3), p, 20, 10).unwrap();
        assert_ne!(a, synth_member_maxima(&other).unwrap());
    }

    #[test]
    fn rejects_nonpositive_scale() {
        let bad = GevParams {
            location: 0.0,
            scale: 0.0,
            shape: 0.1,
        };
        assert!(matches!(
            SyntheticSpec::uniform(grid(2), bad, 5, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn sample_mean_matches_closed_form() {
        let p = GevParams::new(30.0, 2.0, 0.1).unwrap();
        let spec = SyntheticSpec::uniform(grid(1), p, 7424, 3).unwrap();
        let mx = synth_member_maxima(&spec).unwrap();
        let x = mx.cell(0);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean - gev_mean(&p)).abs() < 3.0 * se,
            "{mean} vs {}",
            gev_mean(&p)
        );
    }

    fn ks_statistic(mut x: Vec<f64>, p: &GevParams) -> f64 {
        x.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = gev_cdf(v, p).unwrap();
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn draws_pass_ks_test() {
        // asymptotic critical value of the one-sample KS test at level 0.01
        let critical = 1.628 / 10_000f64.sqrt();
        for (shape, seed) in [(0.1, 1), (0.0, 2), (-0.25, 3)] {
            let p = GevParams::new(30.0, 2.0, shape).unwrap();
            let spec = SyntheticSpec::uniform(grid(1), p, 10_000, seed).unwrap();
            let d = ks_statistic(synth_member_maxima(&spec).unwrap().cell(0).to_vec(), &p);
            assert!(d < critical, "shape {shape}: D = {d}");
        }
    }

    #[test]
    fn layer_maximum_follows_target() {
        // max of k layers under max-stable parameters; compare in distribution
        let target = GevParams::new(30.0, 2.0, 0.1).unwrap();
        let leads = [240, 246, 252, 258];
        let n_dates = 5;
        let spec = SyntheticSpec::uniform(grid(1), target, 2_000, 4).unwrap();
        let date = NaiveDate::from_ymd_opt(2023, 6, 1).unwrap();
        let mut best = vec![f64::NEG_INFINITY; 2_000];
        for d in 0..n_dates {
            let (b, _) = synth_block(&spec, date, d, n_dates, &leads, None).unwrap();
            for layer in 0..leads.len() {
                for (m, slot) in best.iter_mut().enumerate() {
                    *slot = slot.max(b.layer(layer, m)[0] as f64);
                }
            }
        }
        let d = ks_statistic(best, &target);
        assert!(d < 1.628 / 2_000f64.sqrt(), "D = {d}");
    }

    #[test]
    fn layer_params_gumbel_limit_is_continuous() {
        let k = 368;
        let a = layer_params(&GevParams::new(30.0, 2.0, 0.0).unwrap(), k);
        let b = layer_params(&GevParams::new(30.0, 2.0, 1e-7).unwrap(), k);
        assert!((a.location - b.location).abs() < 1e-4);
        assert!((a.scale - b.scale).abs() < 1e-4);
    }

    #[test]
    fn dewpoint_never_exceeds_temperature() {
        let p = GevParams::new(30.0, 2.0, -0.1).unwrap();
        let spec = SyntheticSpec::uniform(grid(4), p, 8, 5).unwrap();
        let date = NaiveDate::from_ymd_opt(2023, 6, 1).unwrap();
        let dep = DewpointDepression::default();
        let (t, td) = synth_block(&spec, date, 0, 92, &[240, 246], Some(dep)).unwrap();
        let td = td.unwrap();
        assert_eq!(td.variable(), Variable::Dewpoint);
        assert!(t.data().iter().zip(td.data()).all(|(a, b)| b <= a));
    }

    #[test]
    fn land_mask_share() {
        let g = Grid::global(30, 60).unwrap();
        let lm = synth_land_mask(&g, 0.3, 1).unwrap();
        let land = lm.fractions().iter().filter(|&&f| f >= 0.75).count() as f64;
        assert!((land / g.len() as f64 - 0.3).abs() < 0.05);
    }
}
