//! Regular latitude-longitude lattices, per-cell layers, land masking and
//! cosine-latitude area weighting.
//!
//! Cells are addressed row-major: latitude index outer, longitude index
//! inner. Missing values are NaN and never contribute to weighted tallies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Land fraction at or above which a cell counts as land.
pub const DEFAULT_LAND_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    latitudes: Vec<f64>,
    longitudes: Vec<f64>,
}

impl Grid {
    /// Builds a grid from explicit cell-center coordinates.
    ///
    /// Latitudes must lie in [-90, 90] and be strictly monotone (either
    /// direction); longitudes must lie in [0, 360) and be strictly monotone.
    pub fn new(latitudes: Vec<f64>, longitudes: Vec<f64>) -> Result<Self> {
        if latitudes.is_empty() || longitudes.is_empty() {
            return Err(Error::argument(
                "grid needs at least one latitude and one longitude",
            ));
        }
        if let Some(bad) = latitudes
            .iter()
            .find(|v| !v.is_finite() || !(-90.0..=90.0).contains(*v))
        {
            return Err(Error::argument(format!("latitude {bad} outside [-90, 90]")));
        }
        if let Some(bad) = longitudes
            .iter()
            .find(|v| !v.is_finite() || !(0.0..360.0).contains(*v))
        {
            return Err(Error::argument(format!("longitude {bad} outside [0, 360)")));
        }
        if !strictly_monotone(&latitudes) {
            return Err(Error::argument("latitudes are not strictly monotone"));
        }
        if !strictly_monotone(&longitudes) {
            return Err(Error::argument("longitudes are not strictly monotone"));
        }
        Ok(Grid {
            latitudes,
            longitudes,
        })
    }

    /// Global lattice with both poles included, north to south, and
    /// longitudes starting at 0. `global(721, 1440)` is the 0.25° grid.
    pub fn global(nlat: usize, nlon: usize) -> Result<Self> {
        if nlat < 2 || nlon == 0 {
            return Err(Error::argument("global grid needs nlat >= 2 and nlon >= 1"));
        }
        let dlat = 180.0 / (nlat - 1) as f64;
        let dlon = 360.0 / nlon as f64;
        let lats = (0..nlat).map(|i| 90.0 - i as f64 * dlat).collect();
        let lons = (0..nlon).map(|j| j as f64 * dlon).collect();
        Grid::new(lats, lons)
    }

    /// Evenly spaced lattice between two inclusive latitude bounds and
    /// starting at `lon_start` with spacing `dlon`.
    pub fn regional(
        lat_first: f64,
        lat_last: f64,
        nlat: usize,
        lon_start: f64,
        dlon: f64,
        nlon: usize,
    ) -> Result<Self> {
        if nlat == 0 || nlon == 0 {
            return Err(Error::argument("regional grid needs nlat, nlon >= 1"));
        }
        let lats = if nlat == 1 {
            vec![lat_first]
        } else {
            let step = (lat_last - lat_first) / (nlat - 1) as f64;
            (0..nlat).map(|i| lat_first + i as f64 * step).collect()
        };
        let lons = (0..nlon).map(|j| lon_start + j as f64 * dlon).collect();
        Grid::new(lats, lons)
    }

    pub fn nlat(&self) -> usize {
        self.latitudes.len()
    }

    pub fn nlon(&self) -> usize {
        self.longitudes.len()
    }

    /// Number of cells, `nlat * nlon`.
    pub fn len(&self) -> usize {
        self.nlat() * self.nlon()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn latitudes(&self) -> &[f64] {
        &self.latitudes
    }

    pub fn longitudes(&self) -> &[f64] {
        &self.longitudes
    }

    pub fn index(&self, lat_idx: usize, lon_idx: usize) -> usize {
        lat_idx * self.nlon() + lon_idx
    }

    /// Latitude of the cell with flat index `cell`.
    pub fn cell_latitude(&self, cell: usize) -> f64 {
        self.latitudes[cell / self.nlon()]
    }

    pub fn cell_longitude(&self, cell: usize) -> f64 {
        self.longitudes[cell % self.nlon()]
    }

    /// Per-cell area weights in flat cell order.
    pub fn weights(&self) -> Vec<f64> {
        let row: Vec<f64> = self.latitudes.iter().map(|&lat| cos_weight(lat)).collect();
        row.iter()
            .flat_map(|&w| std::iter::repeat_n(w, self.nlon()))
            .collect()
    }

    pub(crate) fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: grids differ ({}x{} vs {}x{} or coordinates)",
                self.nlat(),
                self.nlon(),
                other.nlat(),
                other.nlon()
            )))
        }
    }
}

fn strictly_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

fn cos_weight(lat: f64) -> f64 {
    if lat.abs() == 90.0 {
        0.0
    } else {
        lat.to_radians().cos()
    }
}

/// Area weight of a cell centered at `latitude` degrees: cos(latitude),
/// exactly zero at the poles.
pub fn area_weight(latitude: f64) -> Result<f64> {
    if !latitude.is_finite() || !(-90.0..=90.0).contains(&latitude) {
        return Err(Error::argument(format!("latitude {latitude} outside [-90, 90]")));
    }
    Ok(cos_weight(latitude))
}

/// One real value per cell with a units label. NaN marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    units: String,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, units: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::shape(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.is_infinite()) {
            return Err(Error::Data(format!("non-finite field value {v}")));
        }
        Ok(Field {
            grid,
            values,
            units: units.into(),
        })
    }

    pub fn filled(grid: Grid, value: f64, units: impl Into<String>) -> Result<Self> {
        let n = grid.len();
        Field::new(grid, vec![value; n], units)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Mask of cells that are not missing.
    pub fn present(&self) -> Mask {
        Mask {
            grid: self.grid.clone(),
            cells: self.values.iter().map(|v| !v.is_nan()).collect(),
        }
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub(crate) fn ensure_compatible(&self, other: &Field, what: &str) -> Result<()> {
        self.grid.ensure_same(&other.grid, what)?;
        if self.units != other.units {
            return Err(Error::shape(format!(
                "{what}: units differ ({} vs {})",
                self.units, other.units
            )));
        }
        Ok(())
    }
}

/// Per-cell boolean layer, used both as a selector and as an indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: Grid,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(Error::shape(format!(
                "mask has {} cells for a grid of {}",
                cells.len(),
                grid.len()
            )));
        }
        Ok(Mask { grid, cells })
    }

    pub fn all(grid: Grid) -> Self {
        let n = grid.len();
        Mask {
            grid,
            cells: vec![true; n],
        }
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(usize) -> bool) -> Self {
        let cells = (0..grid.len()).map(f).collect();
        Mask { grid, cells }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, cell: usize) -> bool {
        self.cells[cell]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.grid.ensure_same(&other.grid, "mask and")?;
        Ok(Mask {
            grid: self.grid.clone(),
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }

    pub fn not(&self) -> Mask {
        Mask {
            grid: self.grid.clone(),
            cells: self.cells.iter().map(|c| !c).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandMask {
    grid: Grid,
    land_fraction: Vec<f64>,
}

impl LandMask {
    pub fn new(grid: Grid, land_fraction: Vec<f64>) -> Result<Self> {
        if land_fraction.len() != grid.len() {
            return Err(Error::shape(format!(
                "land mask has {} values for {} cells",
                land_fraction.len(),
                grid.len()
            )));
        }
        if let Some(f) = land_fraction.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Data(format!("land fraction {f} outside [0, 1]")));
        }
        Ok(LandMask { grid, land_fraction })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fractions(&self) -> &[f64] {
        &self.land_fraction
    }

    /// Selects cells whose land fraction is at least `threshold`.
    pub fn selector(&self, threshold: f64) -> Result<Mask> {
        land_selector(self, threshold)
    }
}

/// Cells with `land_fraction >= threshold` (inclusive).
pub fn land_selector(mask: &LandMask, threshold: f64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::argument(format!(
            "land threshold {threshold} outside [0, 1]"
        )));
    }
    Ok(Mask {
        grid: mask.grid.clone(),
        cells: mask.land_fraction.iter().map(|&f| f >= threshold).collect(),
    })
}

/// Area-weighted share of the selected cells where `indicator` holds.
pub fn weighted_fraction(indicator: &Mask, selector: &Mask) -> Result<f64> {
    indicator.grid.ensure_same(&selector.grid, "weighted fraction")?;
    let weights = selector.grid.weights();
    let mut hit = CompensatedSum::default();
    let mut total = CompensatedSum::default();
    for ((w, &sel), &ind) in weights.iter().zip(&selector.cells).zip(&indicator.cells) {
        if sel {
            total.add(*w);
            if ind {
                hit.add(*w);
            }
        }
    }
    let total = total.value();
    if total <= 0.0 {
        return Err(Error::UndefinedFraction);
    }
    Ok(hit.value() / total)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_band_grid() -> Grid {
        Grid::new(vec![60.0, 0.0], vec![0.0]).unwrap()
    }

    #[test]
    fn area_weight_examples() {
        assert_eq!(area_weight(0.0).unwrap(), 1.0);
        assert!((area_weight(60.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(area_weight(90.0).unwrap(), 0.0);
        assert_eq!(area_weight(-90.0).unwrap(), 0.0);
        assert!(area_weight(90.5).is_err());
        assert!(area_weight(f64::NAN).is_err());
    }

    #[test]
    fn land_threshold_is_inclusive() {
        let g = Grid::new(vec![0.0], vec![0.0, 1.0, 2.0]).unwrap();
        let lm = LandMask::new(g, vec![0.75, 0.74, 1.0]).unwrap();
        let sel = land_selector(&lm, DEFAULT_LAND_THRESHOLD).unwrap();
        assert_eq!(sel.cells(), &[true, false, true]);
        assert!(land_selector(&lm, 1.5).is_err());
    }

    #[test]
    fn land_fraction_out_of_range_rejected() {
        let g = Grid::new(vec![0.0], vec![0.0]).unwrap();
        assert!(LandMask::new(g, vec![1.2]).is_err());
    }

    #[test]
    fn weighted_fraction_examples() {
        let g = two_band_grid();
        let sel = Mask::all(g.clone());
        let everywhere = Mask::all(g.clone());
        assert_eq!(weighted_fraction(&everywhere, &sel).unwrap(), 1.0);
        assert_eq!(weighted_fraction(&everywhere.not(), &sel).unwrap(), 0.0);
        // 60° band true, equator band false: 0.5 / (0.5 + 1.0)
        let ind = Mask::new(g, vec![true, false]).unwrap();
        let f = weighted_fraction(&ind, &sel).unwrap();
        assert!((f - 1.0 / 3.0).abs() < 1e-12, "{f}");
    }

    #[test]
    fn empty_selector_is_undefined() {
        let g = two_band_grid();
        let sel = Mask::new(g.clone(), vec![false, false]).unwrap();
        assert!(matches!(
            weighted_fraction(&Mask::all(g), &sel),
            Err(Error::UndefinedFraction)
        ));
        // only a polar cell selected: zero total weight
        let polar = Grid::new(vec![90.0, 0.0], vec![0.0]).unwrap();
        let sel = Mask::new(polar.clone(), vec![true, false]).unwrap();
        assert!(weighted_fraction(&Mask::all(polar), &sel).is_err());
    }

    #[test]
    fn grid_mismatch_is_shape_error() {
        let a = Mask::all(two_band_grid());
        let b = Mask::all(Grid::new(vec![10.0], vec![0.0]).unwrap());
        assert!(matches!(weighted_fraction(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![0.0, 0.0], vec![0.0]).is_err());
        assert!(Grid::new(vec![0.0], vec![360.0]).is_err());
        assert!(Grid::new(vec![-91.0], vec![0.0]).is_err());
        let g = Grid::global(721, 1440).unwrap();
        assert_eq!(g.len(), 721 * 1440);
        assert_eq!(g.latitudes()[0], 90.0);
        assert_eq!(g.latitudes()[720], -90.0);
        assert_eq!(g.longitudes()[1], 0.25);
    }

    #[test]
    fn weights_follow_row_major_layout() {
        let g = Grid::new(vec![60.0, 0.0], vec![0.0, 10.0, 20.0]).unwrap();
        let w = g.weights();
        assert_eq!(w.len(), 6);
        assert_eq!(w[3..], [1.0, 1.0, 1.0]);
        assert_eq!(g.cell_latitude(4), 0.0);
        assert_eq!(g.cell_longitude(4), 10.0);
    }

    proptest! {
        #[test]
        fn area_weight_symmetric(lat in -90.0f64..=90.0) {
            prop_assert_eq!(area_weight(lat).unwrap(), area_weight(-lat).unwrap());
        }

        #[test]
        fn complementary_fractions_sum_to_one(
            bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 12)
        ) {
            let g = Grid::new(vec![75.0, 40.0, -10.0, -55.0], vec![0.0, 120.0, 240.0]).unwrap();
            let ind = Mask::new(g.clone(), bits.iter().map(|b| b.0).collect()).unwrap();
            let mut sel_cells: Vec<bool> = bits.iter().map(|b| b.1).collect();
            sel_cells[0] = true;
            let sel = Mask::new(g, sel_cells).unwrap();
            let a = weighted_fraction(&ind, &sel).unwrap();
            let b = weighted_fraction(&ind.not(), &sel).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn fraction_invariant_under_weight_rescaling(
            bits in proptest::collection::vec(any::<bool>(), 4),
            scale in 0.001f64..1000.0,
        ) {
            // rescaling every weight by the same factor leaves the ratio unchanged
            let g = Grid::new(vec![70.0, 30.0, 0.0, -45.0], vec![0.0]).unwrap();
            let w = g.weights();
            let ind = Mask::new(g.clone(), bits.clone()).unwrap();
            let f = weighted_fraction(&ind, &Mask::all(g)).unwrap();
            let num: f64 = w.iter().zip(&bits).filter(|(_, b)| **b).map(|(w, _)| w * scale).sum();
            let den: f64 = w.iter().map(|w| w * scale).sum();
            prop_assert!((f - num / den).abs() < 1e-12);
        }
    }
}
