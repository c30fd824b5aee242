//! Self-describing gridded container.
//!
//! Byte layout:
//!
//! ```text
//! offset 0   8 bytes   magic "ENSXGRD1"
//! offset 8   u32 LE    header length H
//! offset 12  H bytes   UTF-8 JSON header (see `Header`)
//! offset 12+H          layers × members × nlat × nlon f32 LE values,
//!                      layer-major, then member, then row-major cells
//! ```
//!
//! The payload length must match the header dimensions exactly. NaN values
//! are stored as-is and mark missing cells.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const MAGIC: &[u8; 8] = b"ENSXGRD1";
pub const FORMAT_VERSION: u32 = 1;
/// Upper bound on the JSON header length.
pub const MAX_HEADER_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("not a gridded container (bad magic bytes)")]
    BadMagic,

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{extra} unexpected bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("declared dimensions overflow: {0}")]
    DimensionOverflow(String),

    #[error("expected a {expected} container, found {found}")]
    KindMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    /// Time layers of an ensemble for one initialization date.
    Ensemble,
    /// One value per member and cell (member axis replaces time).
    Maxima,
    /// A single layer.
    Field,
    /// Posterior draws: layers are (location, scale, shape), members are draws.
    Posterior,
}

impl ContainerKind {
    pub fn name(self) -> &'static str {
        match self {
            ContainerKind::Ensemble => "ensemble",
            ContainerKind::Maxima => "maxima",
            ContainerKind::Field => "field",
            ContainerKind::Posterior => "posterior",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub kind: ContainerKind,
    pub variable: String,
    pub units: String,
    pub nlat: usize,
    pub nlon: usize,
    pub latitudes: Vec<f64>,
    pub longitudes: Vec<f64>,
    pub members: usize,
    pub layers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_date: Option<NaiveDate>,
    /// Lead time of each layer, for ensemble containers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lead_hours: Vec<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl Header {
    pub fn new(
        kind: ContainerKind,
        grid: &Grid,
        variable: impl Into<String>,
        units: impl Into<String>,
        members: usize,
        layers: usize,
    ) -> Self {
        Header {
            version: FORMAT_VERSION,
            kind,
            variable: variable.into(),
            units: units.into(),
            nlat: grid.nlat(),
            nlon: grid.nlon(),
            latitudes: grid.latitudes().to_vec(),
            longitudes: grid.longitudes().to_vec(),
            members,
            layers,
            init_date: None,
            lead_hours: Vec::new(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        if self.latitudes.len() != self.nlat || self.longitudes.len() != self.nlon {
            return Err(FormatError::Header(format!(
                "coordinate lengths {}x{} disagree with dims {}x{}",
                self.latitudes.len(),
                self.longitudes.len(),
                self.nlat,
                self.nlon
            ))
            .into());
        }
        Grid::new(self.latitudes.clone(), self.longitudes.clone())
            .map_err(|e| FormatError::Header(e.to_string()).into())
    }

    /// Number of f32 values the payload must hold.
    pub fn value_count(&self) -> Result<usize, FormatError> {
        [self.nlon, self.members, self.layers]
            .iter()
            .try_fold(self.nlat, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| {
                FormatError::DimensionOverflow(format!(
                    "{} x {} x {} x {}",
                    self.layers, self.members, self.nlat, self.nlon
                ))
            })
    }

    pub fn expect_kind(&self, kind: ContainerKind) -> Result<(), FormatError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(FormatError::KindMismatch {
                expected: kind.name().into(),
                found: self.kind.name().into(),
            })
        }
    }
}

pub fn encode_container(header: &Header, values: &[f32]) -> Result<Vec<u8>> {
    let expected = header.value_count()?;
    if values.len() != expected {
        return Err(Error::shape(format!(
            "payload has {} values, header declares {expected}",
            values.len()
        )));
    }
    let json = serde_json::to_vec(header).map_err(|e| FormatError::Header(e.to_string()))?;
    let header_len = u32::try_from(json.len())
        .ok()
        .filter(|&n| (n as usize) <= MAX_HEADER_BYTES)
        .ok_or_else(|| FormatError::Header("header too large".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_container(bytes: &[u8]) -> Result<(Header, Vec<f32>)> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    if bytes.len() < 12 {
        return Err(FormatError::Truncated {
            expected: 12,
            found: bytes.len(),
        }
        .into());
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if header_len > MAX_HEADER_BYTES {
        return Err(FormatError::Header(format!("header length {header_len} too large")).into());
    }
    let body = &bytes[12..];
    if body.len() < header_len {
        return Err(FormatError::Truncated {
            expected: 12 + header_len,
            found: bytes.len(),
        }
        .into());
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| FormatError::Header(e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(header.version).into());
    }
    header.grid()?;
    if header.kind == ContainerKind::Ensemble && header.lead_hours.len() != header.layers {
        return Err(FormatError::Header(format!(
            "{} lead hours for {} layers",
            header.lead_hours.len(),
            header.layers
        ))
        .into());
    }

    let count = header.value_count()?;
    let payload = &body[header_len..];
    let expected = count * 4;
    if payload.len() < expected {
        return Err(FormatError::Truncated {
            expected: 12 + header_len + expected,
            found: bytes.len(),
        }
        .into());
    }
    if payload.len() > expected {
        return Err(FormatError::TrailingBytes {
            extra: payload.len() - expected,
        }
        .into());
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((header, values))
}

pub fn write_container(path: &Path, header: &Header, values: &[f32]) -> Result<()> {
    let bytes = encode_container(header, values)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<(Header, Vec<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes)
}
