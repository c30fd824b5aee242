//! Gridded ensemble I/O and the synthetic-ensemble generator used as a
//! test oracle.

mod format;
mod synth;

pub use format::{
    decode_container, encode_container, read_container, write_container, ContainerKind, FormatError, Header,
    FORMAT_VERSION, MAGIC,
};
pub use synth::{
    layer_params, synth_block, synth_land_mask, synth_member_maxima, DewpointDepression, SyntheticSpec,
};

use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremes::MemberMaxima;
use crate::grid::{Field, Grid, LandMask};

pub const CELSIUS: &str = "degC";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    T2m,
    Dewpoint,
    HeatIndex,
}

impl Variable {
    pub fn as_str(self) -> &'static str {
        match self {
            Variable::T2m => "t2m",
            Variable::Dewpoint => "dewpoint",
            Variable::HeatIndex => "heat_index",
        }
    }
}

impl std::fmt::Display for Variable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2m" => Ok(Variable::T2m),
            "dewpoint" => Ok(Variable::Dewpoint),
            "heat_index" => Ok(Variable::HeatIndex),
            other => Err(Error::argument(format!("unknown variable {other:?}"))),
        }
    }
}

/// All members of one initialization at a set of lead times.
///
/// Values are stored as f32, layer-major: `data[(layer * members + member) * cells + cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleBlock {
    grid: Grid,
    variable: Variable,
    units: String,
    init_date: NaiveDate,
    lead_hours: Vec<u32>,
    n_members: usize,
    data: Vec<f32>,
}

impl EnsembleBlock {
    pub fn new(
        grid: Grid,
        variable: Variable,
        units: impl Into<String>,
        init_date: NaiveDate,
        lead_hours: Vec<u32>,
        n_members: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if n_members == 0 {
            return Err(Error::argument("ensemble block needs at least one member"));
        }
        if lead_hours.is_empty() {
            return Err(Error::argument("ensemble block needs at least one layer"));
        }
        let expected = lead_hours.len() * n_members * grid.len();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "block holds {} values, dimensions need {expected}",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_infinite()) {
            return Err(Error::Data("infinite value in ensemble block".into()));
        }
        Ok(EnsembleBlock {
            grid,
            variable,
            units: units.into(),
            init_date,
            lead_hours,
            n_members,
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn variable(&self) -> Variable {
        self.variable
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn init_date(&self) -> NaiveDate {
        self.init_date
    }

    pub fn lead_hours(&self) -> &[u32] {
        &self.lead_hours
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn n_layers(&self) -> usize {
        self.lead_hours.len()
    }

    /// Cells of one member at one layer.
    pub fn layer(&self, layer: usize, member: usize) -> &[f32] {
        let n = self.grid.len();
        let start = (layer * self.n_members + member) * n;
        &self.data[start..start + n]
    }

    /// Layer as a double-precision field.
    pub fn layer_field(&self, layer: usize, member: usize) -> Field {
        let values = self.layer(layer, member).iter().map(|&v| v as f64).collect();
        Field::new(self.grid.clone(), values, self.units.clone()).expect("block layers match the grid")
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Same layout with the values replaced.
    pub fn with_data(&self, variable: Variable, units: impl Into<String>, data: Vec<f32>) -> Result<Self> {
        EnsembleBlock::new(
            self.grid.clone(),
            variable,
            units,
            self.init_date,
            self.lead_hours.clone(),
            self.n_members,
            data,
        )
    }
}

pub fn write_block(block: &EnsembleBlock, path: &Path) -> Result<()> {
    let mut header = Header::new(
        ContainerKind::Ensemble,
        &block.grid,
        block.variable.as_str(),
        &block.units,
        block.n_members,
        block.n_layers(),
    );
    header.init_date = Some(block.init_date);
    header.lead_hours = block.lead_hours.clone();
    write_container(path, &header, &block.data)
}

pub fn read_block(path: &Path) -> Result<EnsembleBlock> {
    let (header, data) = read_container(path)?;
    header.expect_kind(ContainerKind::Ensemble)?;
    let grid = header.grid()?;
    let variable = header
        .variable
        .parse()
        .map_err(|_| FormatError::Header(format!("unknown variable {:?}", header.variable)))?;
    let init_date = header
        .init_date
        .ok_or_else(|| FormatError::Header("ensemble container without init_date".into()))?;
    EnsembleBlock::new(
        grid,
        variable,
        header.units,
        init_date,
        header.lead_hours,
        header.members,
        data,
    )
}

/// Block files (`*.ensx`) of a directory in lexical path order.
pub fn list_blocks(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "ensx") && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn write_maxima(maxima: &MemberMaxima, path: &Path) -> Result<()> {
    let header = Header::new(
        ContainerKind::Maxima,
        maxima.grid(),
        maxima.variable(),
        maxima.units(),
        maxima.n_members(),
        1,
    );
    // container order is member-major, in-memory order is cell-major
    let (n, m) = (maxima.grid().len(), maxima.n_members());
    let mut data = vec![0f32; n * m];
    for cell in 0..n {
        for (member, &v) in maxima.cell(cell).iter().enumerate() {
            data[member * n + cell] = v as f32;
        }
    }
    write_container(path, &header, &data)
}

pub fn read_maxima(path: &Path) -> Result<MemberMaxima> {
    let (header, data) = read_container(path)?;
    header.expect_kind(ContainerKind::Maxima)?;
    let grid = header.grid()?;
    let (n, m) = (grid.len(), header.members);
    let mut values = vec![0f64; n * m];
    for member in 0..m {
        for cell in 0..n {
            values[cell * m + member] = data[member * n + cell] as f64;
        }
    }
    MemberMaxima::new(grid, m, values, header.variable, header.units)
}

pub fn write_field(field: &Field, variable: &str, path: &Path) -> Result<()> {
    let header = Header::new(ContainerKind::Field, field.grid(), variable, field.units(), 1, 1);
    let data: Vec<f32> = field.values().iter().map(|&v| v as f32).collect();
    write_container(path, &header, &data)
}

/// Reads a single-layer container, returning the field and its variable label.
pub fn read_field(path: &Path) -> Result<(Field, String)> {
    let (header, data) = read_container(path)?;
    header.expect_kind(ContainerKind::Field)?;
    let grid = header.grid()?;
    let values = data.iter().map(|&v| v as f64).collect();
    Ok((Field::new(grid, values, header.units)?, header.variable))
}

pub fn write_land_mask(mask: &LandMask, path: &Path) -> Result<()> {
    let field = Field::new(mask.grid().clone(), mask.fractions().to_vec(), "1")?;
    write_field(&field, "land_fraction", path)
}

pub fn read_land_mask(path: &Path) -> Result<LandMask> {
    let (field, variable) = read_field(path)?;
    if variable != "land_fraction" {
        return Err(FormatError::Header(format!("expected land_fraction, found {variable:?}")).into());
    }
    let grid = field.grid().clone();
    LandMask::new(grid, field.into_values())
}
