//! Containment of huge-ensemble thresholds by small-ensemble GEV
//! posteriors, mapped onto a likelihood scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremes::quantile_sorted;
use crate::gev::{posterior_quantile_draws, PosteriorSamples};
use crate::grid::{weighted_fraction, Field, Grid, Mask};

/// Likelihood-scale categories, most likely first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfidenceCategory {
    VirtuallyCertain,
    ExtremelyLikely,
    VeryLikely,
    Likely,
    AboutAsLikelyAsNot,
    Unlikely,
    VeryUnlikely,
    ExceptionallyUnlikely,
}

impl ConfidenceCategory {
    pub const ALL: [ConfidenceCategory; 8] = [
        ConfidenceCategory::VirtuallyCertain,
        ConfidenceCategory::ExtremelyLikely,
        ConfidenceCategory::VeryLikely,
        ConfidenceCategory::Likely,
        ConfidenceCategory::AboutAsLikelyAsNot,
        ConfidenceCategory::Unlikely,
        ConfidenceCategory::VeryUnlikely,
        ConfidenceCategory::ExceptionallyUnlikely,
    ];

    /// Position in [`ConfidenceCategory::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ConfidenceCategory::VirtuallyCertain => "virtually_certain",
            ConfidenceCategory::ExtremelyLikely => "extremely_likely",
            ConfidenceCategory::VeryLikely => "very_likely",
            ConfidenceCategory::Likely => "likely",
            ConfidenceCategory::AboutAsLikelyAsNot => "about_as_likely_as_not",
            ConfidenceCategory::Unlikely => "unlikely",
            ConfidenceCategory::VeryUnlikely => "very_unlikely",
            ConfidenceCategory::ExceptionallyUnlikely => "exceptionally_unlikely",
        }
    }
}

impl std::fmt::Display for ConfidenceCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Lower edges of the seven upper categories, strictly decreasing.
///
/// A probability belongs to the first category whose edge it reaches;
/// below the last edge it is exceptionally unlikely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceScale {
    edges: [f64; 7],
}

impl Default for ConfidenceScale {
    fn default() -> Self {
        ConfidenceScale {
            edges: [0.99, 0.95, 0.90, 0.66, 0.33, 0.10, 0.01],
        }
    }
}

impl ConfidenceScale {
    pub fn new(edges: [f64; 7]) -> Result<Self> {
        let scale = ConfidenceScale { edges };
        scale.check()?;
        Ok(scale)
    }

    pub fn check(&self) -> Result<()> {
        let e = &self.edges;
        if !e.iter().all(|x| *x > 0.0 && *x <= 1.0) || e.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::argument(format!(
                "confidence edges {e:?} must be strictly decreasing within (0, 1]"
            )));
        }
        Ok(())
    }

    pub fn edges(&self) -> &[f64; 7] {
        &self.edges
    }

    pub fn category(&self, prob: f64) -> Result<ConfidenceCategory> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::argument(format!("probability {prob} outside [0, 1]")));
        }
        let i = self.edges.iter().position(|&e| prob >= e).unwrap_or(7);
        Ok(ConfidenceCategory::ALL[i])
    }
}

pub fn confidence_category(prob: f64) -> Result<ConfidenceCategory> {
    ConfidenceScale::default().category(prob)
}

/// Share of thresholds at or above `target`.
pub fn containment_from_thresholds(thresholds: &[f64], target: f64) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::argument("containment over an empty posterior"));
    }
    if target.is_nan() {
        return Err(Error::argument("containment target is NaN"));
    }
    let hits = thresholds.iter().filter(|&&z| z >= target).count();
    Ok(hits as f64 / thresholds.len() as f64)
}

/// Posterior probability that the `p` return level reaches `target`.
pub fn containment_probability(post: &PosteriorSamples, p: f64, target: f64) -> Result<f64> {
    if post.is_empty() {
        return Err(Error::argument("containment over an empty posterior"));
    }
    containment_from_thresholds(&posterior_quantile_draws(post, p)?, target)
}

/// Pointwise `a - b`.
pub fn difference_field(a: &Field, b: &Field) -> Result<Field> {
    a.ensure_compatible(b, "difference")?;
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    Field::new(a.grid().clone(), values, a.units())
}

/// Per-cell outcome of comparing a posterior against a target threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellComparison {
    pub probability: f64,
    pub category: ConfidenceCategory,
    /// Posterior-median return level minus the target.
    pub difference: f64,
}

impl CellComparison {
    pub fn evaluate(post: &PosteriorSamples, p: f64, target: f64, scale: &ConfidenceScale) -> Result<Self> {
        let mut z = posterior_quantile_draws(post, p)?;
        let probability = containment_from_thresholds(&z, target)?;
        z.sort_by(f64::total_cmp);
        Ok(CellComparison {
            probability,
            category: scale.category(probability)?,
            difference: quantile_sorted(&z, 0.5) - target,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    grid: Grid,
    cells: Vec<Option<CellComparison>>,
    units: String,
}

impl ComparisonResult {
    pub fn new(grid: Grid, cells: Vec<Option<CellComparison>>, units: impl Into<String>) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(Error::shape(format!(
                "{} comparisons for {} cells",
                cells.len(),
                grid.len()
            )));
        }
        for c in cells.iter().flatten() {
            if !(0.0..=1.0).contains(&c.probability) {
                return Err(Error::Data(format!(
                    "probability {} outside [0, 1]",
                    c.probability
                )));
            }
        }
        Ok(ComparisonResult {
            grid,
            cells,
            units: units.into(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[Option<CellComparison>] {
        &self.cells
    }

    pub fn cell(&self, cell: usize) -> Option<&CellComparison> {
        self.cells[cell].as_ref()
    }

    pub fn probability_field(&self) -> Field {
        self.project(|c| c.probability, "1")
    }

    /// Threshold difference in the units of the compared variable.
    pub fn difference_field(&self) -> Field {
        self.project(|c| c.difference, self.units.clone())
    }

    /// Category index (0 = most likely) per cell, NaN where missing.
    pub fn category_field(&self) -> Field {
        self.project(|c| c.category.index() as f64, "category")
    }

    fn project(&self, f: impl Fn(&CellComparison) -> f64, units: impl Into<String>) -> Field {
        let values = self
            .cells
            .iter()
            .map(|c| c.as_ref().map_or(f64::NAN, &f))
            .collect();
        Field::new(self.grid.clone(), values, units).expect("one value per cell")
    }

    /// Rebuilds a result from its probability and difference fields.
    pub fn from_fields(probability: &Field, difference: &Field, scale: &ConfidenceScale) -> Result<Self> {
        probability
            .grid()
            .ensure_same(difference.grid(), "comparison fields")?;
        let cells = probability
            .values()
            .iter()
            .zip(difference.values())
            .map(|(&p, &d)| {
                if p.is_nan() || d.is_nan() {
                    Ok(None)
                } else {
                    Ok(Some(CellComparison {
                        probability: p,
                        category: scale.category(p)?,
                        difference: d,
                    }))
                }
            })
            .collect::<Result<_>>()?;
        ComparisonResult::new(probability.grid().clone(), cells, difference.units())
    }
}

/// Compares every cell that has a posterior and a finite target.
pub fn compare_posteriors(
    posteriors: &[Option<PosteriorSamples>],
    targets: &Field,
    p: f64,
    scale: &ConfidenceScale,
) -> Result<ComparisonResult> {
    if posteriors.len() != targets.grid().len() {
        return Err(Error::shape(format!(
            "{} posteriors for {} cells",
            posteriors.len(),
            targets.grid().len()
        )));
    }
    let cells = posteriors
        .iter()
        .zip(targets.values())
        .map(|(post, &target)| match post {
            Some(post) if !target.is_nan() && !post.is_empty() => {
                CellComparison::evaluate(post, p, target, scale).map(Some)
            }
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    ComparisonResult::new(targets.grid().clone(), cells, targets.units())
}

/// Area fraction of the selected cells in each category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryFractions {
    /// Indexed like [`ConfidenceCategory::ALL`].
    pub by_category: [f64; 8],
    /// Selected cells without a comparison.
    pub missing: f64,
}

impl CategoryFractions {
    pub fn get(&self, c: ConfidenceCategory) -> f64 {
        self.by_category[c.index()]
    }

    /// Category with the largest share; ties go to the more likely one.
    pub fn plurality(&self) -> ConfidenceCategory {
        let mut best = 0;
        for i in 1..8 {
            if self.by_category[i] > self.by_category[best] {
                best = i;
            }
        }
        ConfidenceCategory::ALL[best]
    }
}

pub fn category_fractions(result: &ComparisonResult, selector: &Mask) -> Result<CategoryFractions> {
    result.grid.ensure_same(selector.grid(), "category fractions")?;
    let mut by_category = [0.0; 8];
    for (i, c) in ConfidenceCategory::ALL.iter().enumerate() {
        let indicator = Mask::from_fn(result.grid.clone(), |cell| {
            result.cells[cell].is_some_and(|r| r.category == *c)
        });
        by_category[i] = weighted_fraction(&indicator, selector)?;
    }
    let missing_ind = Mask::from_fn(result.grid.clone(), |cell| result.cells[cell].is_none());
    let missing = weighted_fraction(&missing_ind, selector)?;
    Ok(CategoryFractions { by_category, missing })
}
