//! Seasonal block maxima per ensemble member and empirical thresholds.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, DEFAULT_LAND_THRESHOLD};
use crate::ingest::EnsembleBlock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub extreme_probability: f64,
    pub lead_hours: BTreeSet<u32>,
    /// First and last init date of the season, both inclusive.
    pub season_start: NaiveDate,
    pub season_end: NaiveDate,
    pub land_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            extreme_probability: 0.999,
            lead_hours: [240, 246, 252, 258].into_iter().collect(),
            season_start: NaiveDate::from_ymd_opt(2023, 6, 1).expect("valid date"),
            season_end: NaiveDate::from_ymd_opt(2023, 8, 31).expect("valid date"),
            land_threshold: DEFAULT_LAND_THRESHOLD,
        }
    }
}

impl AnalysisConfig {
    /// Field-path diagnostics for every violated invariant.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let p = self.extreme_probability;
        if !(p > 0.0 && p < 1.0) {
            out.push(("extreme_probability", format!("{p} is not in (0, 1)")));
        }
        if self.lead_hours.is_empty() {
            out.push(("lead_hours", "must not be empty".into()));
        }
        if self.season_end < self.season_start {
            out.push((
                "season_end",
                format!("{} precedes season_start {}", self.season_end, self.season_start),
            ));
        }
        if !(0.0..=1.0).contains(&self.land_threshold) {
            out.push((
                "land_threshold",
                format!("{} is not in [0, 1]", self.land_threshold),
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().first() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::Config(format!("{field}: {msg}"))),
        }
    }

    pub fn in_season(&self, date: NaiveDate) -> bool {
        (self.season_start..=self.season_end).contains(&date)
    }

    pub fn season_dates(&self) -> Vec<NaiveDate> {
        self.season_start
            .iter_days()
            .take_while(|d| *d <= self.season_end)
            .collect()
    }
}

/// Per-cell sequences of member maxima, stored cell-major.
///
/// A cell is missing when all of its members are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberMaxima {
    grid: Grid,
    n_members: usize,
    values: Vec<f64>,
    variable: String,
    units: String,
}

impl MemberMaxima {
    pub fn new(
        grid: Grid,
        n_members: usize,
        values: Vec<f64>,
        variable: impl Into<String>,
        units: impl Into<String>,
    ) -> Result<Self> {
        if n_members == 0 {
            return Err(Error::argument("member maxima need at least one member"));
        }
        if values.len() != grid.len() * n_members {
            return Err(Error::shape(format!(
                "{} values for {} cells x {n_members} members",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::Data("infinite member maximum".into()));
        }
        Ok(MemberMaxima {
            grid,
            n_members,
            values,
            variable: variable.into(),
            units: units.into(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn variable(&self) -> &str {
        &self.variable
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn cell(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n_members..(cell + 1) * self.n_members]
    }

    /// True when any member of the cell lacks a value.
    pub fn is_missing(&self, cell: usize) -> bool {
        self.cell(cell).iter().any(|v| v.is_nan())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractionStats {
    pub blocks_used: usize,
    pub blocks_outside_season: usize,
    pub missing_cells: usize,
}

/// Running maximum over a stream of blocks.
///
/// Memory stays at one accumulator per (cell, member).
#[derive(Debug)]
pub struct MaximaAccumulator {
    config: AnalysisConfig,
    layout: Option<(Grid, usize, String, String)>,
    running: Vec<f64>,
    missing: Vec<bool>,
    stats: ExtractionStats,
}

impl MaximaAccumulator {
    pub fn new(config: &AnalysisConfig) -> Result<Self> {
        config.validate()?;
        Ok(MaximaAccumulator {
            config: config.clone(),
            layout: None,
            running: Vec::new(),
            missing: Vec::new(),
            stats: ExtractionStats::default(),
        })
    }

    pub fn push(&mut self, block: &EnsembleBlock) -> Result<()> {
        if !self.config.in_season(block.init_date()) {
            self.stats.blocks_outside_season += 1;
            return Ok(());
        }
        let layers: Vec<usize> = self
            .config
            .lead_hours
            .iter()
            .map(|lead| {
                block.lead_hours().iter().position(|h| h == lead).ok_or_else(|| {
                    Error::Config(format!(
                        "lead time {lead} h missing from block initialized {}",
                        block.init_date()
                    ))
                })
            })
            .collect::<Result<_>>()?;

        let (n, m) = (block.grid().len(), block.n_members());
        match &self.layout {
            None => {
                self.layout = Some((
                    block.grid().clone(),
                    m,
                    block.variable().as_str().to_string(),
                    block.units().to_string(),
                ));
                self.running = vec![f64::NEG_INFINITY; n * m];
                self.missing = vec![false; n];
            }
            Some((grid, members, variable, units)) => {
                grid.ensure_same(block.grid(), "ensemble block")?;
                if *members != m {
                    return Err(Error::shape(format!(
                        "block initialized {} has {m} members, expected {members}",
                        block.init_date()
                    )));
                }
                if variable != block.variable().as_str() || units != block.units() {
                    return Err(Error::shape(format!(
                        "block initialized {} holds {} [{}], expected {variable} [{units}]",
                        block.init_date(),
                        block.variable(),
                        block.units()
                    )));
                }
            }
        }

        for &layer in &layers {
            for member in 0..m {
                for (cell, &v) in block.layer(layer, member).iter().enumerate() {
                    if v.is_nan() {
                        self.missing[cell] = true;
                    } else {
                        let slot = &mut self.running[cell * m + member];
                        *slot = slot.max(v as f64);
                    }
                }
            }
        }
        self.stats.blocks_used += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<(MemberMaxima, ExtractionStats)> {
        let (grid, m, variable, units) = self
            .layout
            .ok_or_else(|| Error::Config("no ensemble block falls inside the season".into()))?;
        let mut values = self.running;
        let mut stats = self.stats;
        for (cell, &missing) in self.missing.iter().enumerate() {
            if missing {
                values[cell * m..(cell + 1) * m].fill(f64::NAN);
                stats.missing_cells += 1;
            }
        }
        if stats.missing_cells > 0 {
            warn!("{} cells marked missing during extraction", stats.missing_cells);
        }
        Ok((MemberMaxima::new(grid, m, values, variable, units)?, stats))
    }
}

/// Per-member maximum over the configured lead times of every in-season block.
pub fn extract_member_maxima<I>(blocks: I, config: &AnalysisConfig) -> Result<MemberMaxima>
where
    I: IntoIterator<Item = Result<EnsembleBlock>>,
{
    let mut acc = MaximaAccumulator::new(config)?;
    for block in blocks {
        acc.push(&block?)?;
    }
    acc.finish().map(|(m, _)| m)
}

/// Linear interpolation between order statistics at one-based rank
/// `h = (n - 1)p + 1`.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::argument("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::argument(format!("probability {p} outside [0, 1]")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("NaN in quantile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, p))
}

/// Same estimator on data already sorted ascending and free of NaN.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = (n - 1) as f64 * p;
    let lo = pos.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Per-cell empirical quantile of the member maxima; missing cells stay NaN.
pub fn storyline_field(maxima: &MemberMaxima, p: f64) -> Result<Field> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::argument(format!("probability {p} outside [0, 1]")));
    }
    let mut failures = 0usize;
    let values = (0..maxima.grid.len())
        .map(|cell| match empirical_quantile(maxima.cell(cell), p) {
            Ok(v) => v,
            Err(_) => {
                failures += 1;
                f64::NAN
            }
        })
        .collect();
    if failures > 0 {
        warn!("storyline: {failures} cells missing");
    }
    Field::new(maxima.grid.clone(), values, maxima.units.clone())
}

pub fn ensemble_max_field(maxima: &MemberMaxima) -> Result<Field> {
    let values = (0..maxima.grid.len())
        .map(|cell| {
            let xs = maxima.cell(cell);
            if xs.iter().any(|v| v.is_nan()) {
                f64::NAN
            } else {
                xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();
    Field::new(maxima.grid.clone(), values, maxima.units.clone())
}
