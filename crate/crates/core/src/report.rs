//! Area-weighted summary statistics, tables and map rasters.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{CompensatedSum, Field, Mask};

/// Comparison of two fields over the selected cells where both are present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exceedance {
    /// Area fraction where `a > b`.
    pub a_exceeds: f64,
    /// Area fraction where `b >= a`; complements `a_exceeds`.
    pub b_reaches: f64,
    /// Weighted mean and maximum of `a - b` over cells with `a > b`.
    pub mean_a_excess: f64,
    pub max_a_excess: f64,
    /// Weighted mean and maximum of `b - a` over cells with `b >= a`.
    pub mean_b_excess: f64,
    pub max_b_excess: f64,
    pub cells: usize,
}

pub fn exceedance_report(a: &Field, b: &Field, selector: &Mask) -> Result<Exceedance> {
    a.ensure_compatible(b, "exceedance")?;
    a.grid().ensure_same(selector.grid(), "exceedance selector")?;
    let weights = a.grid().weights();
    let mut total = CompensatedSum::default();
    let (mut w_a, mut w_b) = (CompensatedSum::default(), CompensatedSum::default());
    let (mut sum_a, mut sum_b) = (CompensatedSum::default(), CompensatedSum::default());
    let (mut max_a, mut max_b) = (f64::NAN, f64::NAN);
    let mut cells = 0;
    for (cell, (&x, &y)) in a.values().iter().zip(b.values()).enumerate() {
        if !selector.get(cell) || x.is_nan() || y.is_nan() {
            continue;
        }
        let w = weights[cell];
        total.add(w);
        cells += 1;
        if x > y {
            w_a.add(w);
            sum_a.add(w * (x - y));
            max_a = max_a.max(x - y);
        } else {
            w_b.add(w);
            sum_b.add(w * (y - x));
            max_b = max_b.max(y - x);
        }
    }
    let (total, w_a, w_b) = (total.value(), w_a.value(), w_b.value());
    if total <= 0.0 {
        return Err(Error::UndefinedFraction);
    }
    let ratio = |s: &CompensatedSum, w: f64| if w > 0.0 { s.value() / w } else { f64::NAN };
    Ok(Exceedance {
        a_exceeds: w_a / total,
        b_reaches: w_b / total,
        mean_a_excess: ratio(&sum_a, w_a),
        max_a_excess: max_a,
        mean_b_excess: ratio(&sum_b, w_b),
        max_b_excess: max_b,
        cells,
    })
}

/// Default histogram edges: 1 °C bins over [0, 60] °C.
pub fn default_edges() -> Vec<f64> {
    (0..=60).map(f64::from).collect()
}

fn check_edges(edges: &[f64], name: &str) -> Result<()> {
    if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::argument(format!(
            "{name} edges must be at least two finite, strictly increasing values"
        )));
    }
    Ok(())
}

/// Bin of `v` among `edges.len() - 1` left-closed bins; values beyond the
/// ends fall into the first or last bin.
fn bin_of(edges: &[f64], v: f64) -> usize {
    let nbins = edges.len() - 1;
    edges[1..nbins].partition_point(|&e| e <= v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointHistogram {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Row-major over x bins, then y bins.
    pub weights: Vec<f64>,
    pub total_weight: f64,
}

impl JointHistogram {
    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.weights[ix * self.ny() + iy]
    }
}

/// Area-weighted 2-D histogram of `(x, y)` over selected cells present in both.
pub fn joint_histogram(
    x: &Field,
    y: &Field,
    selector: &Mask,
    x_edges: &[f64],
    y_edges: &[f64],
) -> Result<JointHistogram> {
    check_edges(x_edges, "x")?;
    check_edges(y_edges, "y")?;
    x.grid().ensure_same(y.grid(), "joint histogram")?;
    x.grid()
        .ensure_same(selector.grid(), "joint histogram selector")?;
    let weights = x.grid().weights();
    let (nx, ny) = (x_edges.len() - 1, y_edges.len() - 1);
    let mut bins = vec![CompensatedSum::default(); nx * ny];
    let mut total = CompensatedSum::default();
    for (cell, (&xv, &yv)) in x.values().iter().zip(y.values()).enumerate() {
        if !selector.get(cell) || xv.is_nan() || yv.is_nan() {
            continue;
        }
        let w = weights[cell];
        bins[bin_of(x_edges, xv) * ny + bin_of(y_edges, yv)].add(w);
        total.add(w);
    }
    Ok(JointHistogram {
        x_edges: x_edges.to_vec(),
        y_edges: y_edges.to_vec(),
        weights: bins.iter().map(CompensatedSum::value).collect(),
        total_weight: total.value(),
    })
}

/// Area fractions of `(from, to)` category pairs.
///
/// Both fields hold category indices in `0..k` (NaN missing). Fractions are
/// over selected cells present in both fields; `excluded` is the share of
/// selected weight dropped because a value was missing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionTable {
    pub k: usize,
    /// Row-major `from` by `to`.
    pub fractions: Vec<f64>,
    pub excluded: f64,
}

impl TransitionTable {
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.fractions[from * self.k + to]
    }

    pub fn from_marginal(&self) -> Vec<f64> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.get(i, j)).sum())
            .collect()
    }

    pub fn to_marginal(&self) -> Vec<f64> {
        (0..self.k)
            .map(|j| (0..self.k).map(|i| self.get(i, j)).sum())
            .collect()
    }
}

fn category_at(v: f64, k: usize) -> Result<Option<usize>> {
    if v.is_nan() {
        return Ok(None);
    }
    if v < 0.0 || v.fract() != 0.0 || v as usize >= k {
        return Err(Error::Data(format!("{v} is not a category index below {k}")));
    }
    Ok(Some(v as usize))
}

pub fn category_transition_table(
    from: &Field,
    to: &Field,
    k: usize,
    selector: &Mask,
) -> Result<TransitionTable> {
    from.grid().ensure_same(to.grid(), "transition table")?;
    from.grid().ensure_same(selector.grid(), "transition selector")?;
    let weights = from.grid().weights();
    let mut pairs = vec![CompensatedSum::default(); k * k];
    let (mut kept, mut dropped) = (CompensatedSum::default(), CompensatedSum::default());
    for (cell, &w) in weights.iter().enumerate() {
        if !selector.get(cell) {
            continue;
        }
        match (
            category_at(from.values()[cell], k)?,
            category_at(to.values()[cell], k)?,
        ) {
            (Some(i), Some(j)) => {
                pairs[i * k + j].add(w);
                kept.add(w);
            }
            _ => dropped.add(w),
        }
    }
    let (kept, dropped) = (kept.value(), dropped.value());
    if kept <= 0.0 {
        return Err(Error::UndefinedFraction);
    }
    Ok(TransitionTable {
        k,
        fractions: pairs.iter().map(|s| s.value() / kept).collect(),
        excluded: dropped / (kept + dropped),
    })
}

/// Area fraction of each category index over selected present cells.
pub fn index_fractions(field: &Field, k: usize, selector: &Mask) -> Result<Vec<f64>> {
    Ok(category_transition_table(field, field, k, selector)?.from_marginal())
}

/// Number formatting used by every text table: 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Simple CSV table with a fixed header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn exceedance_table(rows: &[(&str, Exceedance)]) -> Table {
    let mut t = Table::new([
        "comparison",
        "cells",
        "fraction_a_gt_b",
        "fraction_b_ge_a",
        "mean_a_minus_b",
        "max_a_minus_b",
        "mean_b_minus_a",
        "max_b_minus_a",
    ]);
    for (name, e) in rows {
        t.push([
            name.to_string(),
            e.cells.to_string(),
            sig6(e.a_exceeds),
            sig6(e.b_reaches),
            sig6(e.mean_a_excess),
            sig6(e.max_a_excess),
            sig6(e.mean_b_excess),
            sig6(e.max_b_excess),
        ]);
    }
    t
}

pub fn histogram_table(h: &JointHistogram) -> Table {
    let mut t = Table::new(["x_lower", "x_upper", "y_lower", "y_upper", "weight", "fraction"]);
    for ix in 0..h.nx() {
        for iy in 0..h.ny() {
            let w = h.get(ix, iy);
            let frac = if h.total_weight > 0.0 {
                w / h.total_weight
            } else {
                f64::NAN
            };
            t.push([
                sig6(h.x_edges[ix]),
                sig6(h.x_edges[ix + 1]),
                sig6(h.y_edges[iy]),
                sig6(h.y_edges[iy + 1]),
                sig6(w),
                sig6(frac),
            ]);
        }
    }
    t
}

pub fn transition_table(table: &TransitionTable, names: &[&str]) -> Table {
    let mut t = Table::new(["from", "to", "fraction"]);
    for i in 0..table.k {
        for j in 0..table.k {
            t.push([names[i].to_string(), names[j].to_string(), sig6(table.get(i, j))]);
        }
    }
    t
}

/// Color for missing cells in every map.
pub const MISSING_COLOR: [u8; 3] = [0, 0, 0];

/// Diverging blue-yellow-red ramp used for continuous fields.
const RAMP: [[u8; 3]; 5] = [
    [49, 54, 149],
    [116, 173, 209],
    [255, 255, 191],
    [244, 109, 67],
    [165, 0, 38],
];

/// Likelihood categories, most likely (dark blue) to least likely (dark red).
pub const CONFIDENCE_COLORS: [[u8; 3]; 8] = [
    [8, 48, 107],
    [33, 113, 181],
    [107, 174, 214],
    [198, 219, 239],
    [240, 240, 240],
    [252, 187, 161],
    [239, 59, 44],
    [103, 0, 13],
];

/// Heat risk levels, below to extreme danger.
pub const RISK_COLORS: [[u8; 3]; 5] = [
    [220, 220, 220],
    [255, 255, 128],
    [255, 204, 0],
    [255, 102, 0],
    [204, 0, 0],
];

#[derive(Debug, Clone, PartialEq)]
pub enum Palette {
    /// Linear ramp between `min` and `max`; `None` uses the field's range.
    Continuous { min: Option<f64>, max: Option<f64> },
    /// One color per category index.
    Discrete(Vec<[u8; 3]>),
}

impl Palette {
    fn colorize(&self, field: &Field) -> Result<Vec<[u8; 3]>> {
        match self {
            Palette::Continuous { min, max } => {
                let present = field.values().iter().copied().filter(|v| !v.is_nan());
                let lo = min.unwrap_or_else(|| present.clone().fold(f64::INFINITY, f64::min));
                let hi = max.unwrap_or_else(|| present.fold(f64::NEG_INFINITY, f64::max));
                Ok(field
                    .values()
                    .iter()
                    .map(|&v| {
                        if v.is_nan() {
                            MISSING_COLOR
                        } else {
                            let t = if hi > lo {
                                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                            } else {
                                0.5
                            };
                            ramp(t)
                        }
                    })
                    .collect())
            }
            Palette::Discrete(colors) => field
                .values()
                .iter()
                .map(|&v| match category_at(v, colors.len())? {
                    Some(i) => Ok(colors[i]),
                    None => Ok(MISSING_COLOR),
                })
                .collect(),
        }
    }
}

fn ramp(t: f64) -> [u8; 3] {
    let pos = t * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let (a, b) = (RAMP[i][c] as f64, RAMP[i + 1][c] as f64);
        out[c] = (a + f * (b - a)).round() as u8;
    }
    out
}

/// PNG raster, one pixel per cell, north up.
pub fn render_map(field: &Field, palette: &Palette, path: &Path) -> Result<()> {
    let bytes = encode_map(field, palette)?;
    write_file(path, &bytes)
}

pub fn encode_map(field: &Field, palette: &Palette) -> Result<Vec<u8>> {
    let grid = field.grid();
    let colors = palette.colorize(field)?;
    let mut rows: Vec<usize> = (0..grid.nlat()).collect();
    rows.sort_by(|&a, &b| grid.latitudes()[b].total_cmp(&grid.latitudes()[a]));
    let mut pixels = Vec::with_capacity(grid.len() * 3);
    for &r in &rows {
        for c in 0..grid.nlon() {
            pixels.extend_from_slice(&colors[grid.index(r, c)]);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, grid.nlon() as u32, grid.nlat() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Data(format!("png encoding: {e}")))?;
        writer
            .write_image_data(&pixels)
            .map_err(|e| Error::Data(format!("png encoding: {e}")))?;
        writer
            .finish()
            .map_err(|e| Error::Data(format!("png encoding: {e}")))?;
    }
    out.flush().expect("in-memory buffer");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    fn two_lat() -> Grid {
        Grid::new(vec![0.0, 60.0], vec![0.0]).unwrap()
    }

    fn field(grid: &Grid, v: Vec<f64>) -> Field {
        Field::new(grid.clone(), v, "degC").unwrap()
    }

    #[test]
    fn exceedance_examples() {
        let g = Grid::new(vec![10.0, 20.0], vec![0.0, 1.0]).unwrap();
        let b = field(&g, vec![30.0, 31.0, 32.0, 33.0]);
        let a = field(&g, b.values().iter().map(|v| v + 1.0).collect());
        let all = Mask::all(g.clone());
        let e = exceedance_report(&a, &b, &all).unwrap();
        assert_eq!(e.a_exceeds, 1.0);
        assert!((e.mean_a_excess - 1.0).abs() < 1e-12);
        assert!(e.mean_b_excess.is_nan());

        let e = exceedance_report(&b, &b, &all).unwrap();
        assert_eq!(e.a_exceeds, 0.0);
        assert_eq!(e.b_reaches, 1.0);
        assert_eq!(e.max_b_excess, 0.0);
    }

    #[test]
    fn exceedance_weights_by_latitude() {
        // cos 0 = 1 and cos 60 = 1/2
        let g = two_lat();
        let a = field(&g, vec![2.0, 0.0]);
        let b = field(&g, vec![1.0, 1.0]);
        let e = exceedance_report(&a, &b, &Mask::all(g.clone())).unwrap();
        assert!((e.a_exceeds - 2.0 / 3.0).abs() < 1e-12);
        let e = exceedance_report(&b, &a, &Mask::all(g.clone())).unwrap();
        assert!((e.a_exceeds - 1.0 / 3.0).abs() < 1e-12);
        let none = Mask::new(g, vec![false, false]).unwrap();
        assert!(matches!(
            exceedance_report(&a, &b, &none),
            Err(Error::UndefinedFraction)
        ));
    }

    #[test]
    fn histogram_examples() {
        let g = Grid::new(vec![0.0, 60.0], vec![0.0, 1.0]).unwrap();
        let x = field(&g, vec![10.5, 20.0, -3.0, 75.0]);
        let y = field(&g, vec![10.5, 21.9, 5.0, 59.0]);
        let one = Mask::new(g.clone(), vec![true, false, false, false]).unwrap();
        let e = default_edges();
        let h = joint_histogram(&x, &y, &one, &e, &e).unwrap();
        assert_eq!(h.get(10, 10), 1.0);
        assert_eq!(h.weights.iter().sum::<f64>(), 1.0);

        let h = joint_histogram(&x, &y, &Mask::all(g.clone()), &e, &e).unwrap();
        let half = 60f64.to_radians().cos();
        assert_eq!(h.get(10, 10), 1.0);
        assert_eq!(h.get(20, 21), 1.0);
        assert_eq!(h.get(0, 5), half); // below the first edge
        assert_eq!(h.get(59, 59), half); // beyond the last edge
        assert!((h.total_weight - (2.0 + 2.0 * half)).abs() < 1e-12);

        assert!(joint_histogram(&x, &y, &one, &[0.0, 2.0, 1.0], &e).is_err());
    }

    #[test]
    fn histogram_diagonal() {
        let g = Grid::new(vec![30.0, 0.0, -30.0], vec![0.0, 90.0]).unwrap();
        let x = field(&g, vec![1.5, 7.2, 13.0, 29.9, 40.0, 55.5]);
        let e = default_edges();
        let h = joint_histogram(&x, &x, &Mask::all(g), &e, &e).unwrap();
        let diag: f64 = (0..60).map(|i| h.get(i, i)).sum();
        assert!((diag - h.total_weight).abs() < 1e-12);
    }

    #[test]
    fn transitions() {
        let g = Grid::new(vec![0.0, 60.0], vec![0.0, 1.0]).unwrap();
        let all = Mask::all(g.clone());
        let from = field(&g, vec![0.0, 1.0, 2.0, 3.0]);
        let t = category_transition_table(&from, &from, 5, &all).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert_eq!(t.get(i, j), 0.0);
                }
            }
        }
        let up = field(&g, vec![1.0, 1.0, 1.0, 1.0]);
        let zero = field(&g, vec![0.0; 4]);
        let t = category_transition_table(&zero, &up, 5, &all).unwrap();
        assert_eq!(t.get(0, 1), 1.0);

        // weights 1, 1, 1/2, 1/2: total 3
        let to = field(&g, vec![2.0, 1.0, 3.0, f64::NAN]);
        let t = category_transition_table(&from, &to, 5, &all).unwrap();
        assert!((t.get(0, 2) - 0.4).abs() < 1e-12);
        assert!((t.get(1, 1) - 0.4).abs() < 1e-12);
        assert!((t.get(2, 3) - 0.2).abs() < 1e-12);
        assert!((t.excluded - 1.0 / 6.0).abs() < 1e-12);

        let bad = field(&g, vec![0.5, 1.0, 1.0, 1.0]);
        assert!(matches!(
            category_transition_table(&bad, &up, 5, &all),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn significant_digits() {
        assert_eq!(sig6(26.433333333), "26.4333");
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(999999.6), "1e6");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(f64::NAN), "NaN");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(["a", "b"]);
        t.push(["1", "2"]);
        assert_eq!(t.to_csv(), "a,b\n1,2\n");
    }

    fn decode(bytes: &[u8]) -> (u32, u32, Vec<[u8; 3]>) {
        let dec = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        let px = buf[..info.buffer_size()]
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        (info.width, info.height, px)
    }

    #[test]
    fn constant_map_is_single_color() {
        let g = Grid::new(vec![10.0, 0.0], vec![0.0, 1.0, 2.0]).unwrap();
        let f = field(&g, vec![5.0, 5.0, 5.0, 5.0, f64::NAN, 5.0]);
        let bytes = encode_map(&f, &Palette::Continuous { min: None, max: None }).unwrap();
        let (w, h, px) = decode(&bytes);
        assert_eq!((w, h), (3, 2));
        let colors: std::collections::BTreeSet<_> = px.iter().collect();
        assert_eq!(colors.len(), 2);
        assert!(colors.contains(&MISSING_COLOR));
        assert_eq!(
            bytes,
            encode_map(&f, &Palette::Continuous { min: None, max: None }).unwrap()
        );
    }

    #[test]
    fn category_map_uses_palette_colors() {
        let g = Grid::new(vec![0.0], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let f = field(&g, vec![0.0, 1.0, 2.0, 3.0, 4.0, 2.0]);
        let (_, _, px) = decode(&encode_map(&f, &Palette::Discrete(RISK_COLORS.to_vec())).unwrap());
        let colors: std::collections::BTreeSet<_> = px.iter().copied().collect();
        assert_eq!(colors.len(), 5);
        assert!(colors.iter().all(|c| RISK_COLORS.contains(c)));
    }

    #[test]
    fn map_is_north_up() {
        let g = Grid::new(vec![-10.0, 10.0], vec![0.0]).unwrap();
        let f = field(&g, vec![0.0, 1.0]);
        let (_, _, px) = decode(&encode_map(&f, &Palette::Discrete(RISK_COLORS.to_vec())).unwrap());
        assert_eq!(px, vec![RISK_COLORS[1], RISK_COLORS[0]]);
    }

    proptest! {
        #[test]
        fn histogram_conserves_weight(
            xs in prop::collection::vec(-10.0f64..70.0, 12),
            ys in prop::collection::vec(-10.0f64..70.0, 12),
            sel in prop::collection::vec(any::<bool>(), 12),
        ) {
            let g = Grid::new(vec![-60.0, -20.0, 20.0, 60.0], vec![0.0, 120.0, 240.0]).unwrap();
            let x = field(&g, xs);
            let y = field(&g, ys);
            let mask = Mask::new(g.clone(), sel.clone()).unwrap();
            let e = default_edges();
            let h = joint_histogram(&x, &y, &mask, &e, &e).unwrap();
            let expect: f64 = g.weights().iter().zip(&sel).filter(|(_, s)| **s).map(|(w, _)| w).sum();
            prop_assert!((h.total_weight - expect).abs() <= 1e-12 * expect.max(1.0));
            let binned: f64 = h.weights.iter().sum();
            prop_assert!((binned - expect).abs() <= 1e-12 * expect.max(1.0));
        }

        #[test]
        fn exceedance_fractions_complement(
            xs in prop::collection::vec(0.0f64..50.0, 12),
            ys in prop::collection::vec(0.0f64..50.0, 12),
        ) {
            let g = Grid::new(vec![-60.0, -20.0, 20.0, 60.0], vec![0.0, 120.0, 240.0]).unwrap();
            let e = exceedance_report(&field(&g, xs), &field(&g, ys), &Mask::all(g.clone())).unwrap();
            prop_assert!((e.a_exceeds + e.b_reaches - 1.0).abs() < 1e-12);
        }

        #[test]
        fn transition_marginals(
            a in prop::collection::vec(0usize..5, 12),
            b in prop::collection::vec(0usize..5, 12),
        ) {
            let g = Grid::new(vec![-60.0, -20.0, 20.0, 60.0], vec![0.0, 120.0, 240.0]).unwrap();
            let fa = field(&g, a.iter().map(|&v| v as f64).collect());
            let fb = field(&g, b.iter().map(|&v| v as f64).collect());
            let all = Mask::all(g.clone());
            let t = category_transition_table(&fa, &fb, 5, &all).unwrap();
            let ma = index_fractions(&fa, 5, &all).unwrap();
            let mb = index_fractions(&fb, 5, &all).unwrap();
            for i in 0..5 {
                prop_assert!((t.from_marginal()[i] - ma[i]).abs() < 1e-12);
                prop_assert!((t.to_marginal()[i] - mb[i]).abs() < 1e-12);
            }
        }
    }
}
