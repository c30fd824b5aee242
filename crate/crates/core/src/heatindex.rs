//! Heat index from temperature and dewpoint, and public-safety risk levels.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::ingest::{EnsembleBlock, Variable, CELSIUS};

const MAGNUS_A: f64 = 17.625;
const MAGNUS_B: f64 = 243.04;
/// Plausible range for air and dewpoint temperatures, °C.
const MIN_TEMPERATURE: f64 = -100.0;
const MAX_TEMPERATURE: f64 = 70.0;

fn check_temperature(name: &str, v: f64) -> Result<()> {
    if !(MIN_TEMPERATURE..=MAX_TEMPERATURE).contains(&v) {
        return Err(Error::argument(format!(
            "{name} {v} degC outside [{MIN_TEMPERATURE}, {MAX_TEMPERATURE}]"
        )));
    }
    Ok(())
}

/// Relative humidity (%) from the Magnus saturation vapor pressure ratio.
///
/// Supersaturated input (`dewpoint > t2m`) is clamped to saturation.
pub fn dewpoint_to_rh(t2m: f64, dewpoint: f64) -> Result<f64> {
    check_temperature("temperature", t2m)?;
    check_temperature("dewpoint", dewpoint)?;
    let td = dewpoint.min(t2m);
    let ratio = MAGNUS_A * td / (MAGNUS_B + td) - MAGNUS_A * t2m / (MAGNUS_B + t2m);
    Ok(100.0 * ratio.exp())
}

/// A heat-index formula in °C and percent relative humidity.
pub trait HeatIndexKernel: Sync {
    fn name(&self) -> &str;
    fn heat_index(&self, t2m: f64, rh: f64) -> Result<f64>;
}

/// The NWS procedure: Steadman's simple formula below 80 °F, otherwise the
/// Rothfusz regression with its low- and high-humidity adjustments.
#[derive(Debug, Clone, Copy, Default)]
pub struct NwsRothfusz;

impl NwsRothfusz {
    fn fahrenheit(t: f64, rh: f64) -> f64 {
        let simple = 0.5 * (t + 61.0 + (t - 68.0) * 1.2 + rh * 0.094);
        if (simple + t) / 2.0 < 80.0 {
            return simple;
        }
        let mut hi = -42.379 + 2.049_015_23 * t + 10.143_331_27 * rh
            - 0.224_755_41 * t * rh
            - 6.837_83e-3 * t * t
            - 5.481_717e-2 * rh * rh
            + 1.228_74e-3 * t * t * rh
            + 8.5282e-4 * t * rh * rh
            - 1.99e-6 * t * t * rh * rh;
        if rh < 13.0 && (80.0..=112.0).contains(&t) {
            hi -= (13.0 - rh) / 4.0 * ((17.0 - (t - 95.0).abs()) / 17.0).sqrt();
        } else if rh > 85.0 && (80.0..=87.0).contains(&t) {
            hi += (rh - 85.0) / 10.0 * ((87.0 - t) / 5.0);
        }
        hi
    }
}

impl HeatIndexKernel for NwsRothfusz {
    fn name(&self) -> &str {
        "nws_rothfusz"
    }

    fn heat_index(&self, t2m: f64, rh: f64) -> Result<f64> {
        check_temperature("temperature", t2m)?;
        if !(0.0..=100.0).contains(&rh) {
            return Err(Error::argument(format!(
                "relative humidity {rh} outside [0, 100]"
            )));
        }
        let t_f = t2m * 1.8 + 32.0;
        Ok((Self::fahrenheit(t_f, rh) - 32.0) / 1.8)
    }
}

pub fn heat_index(t2m: f64, rh: f64) -> Result<f64> {
    NwsRothfusz.heat_index(t2m, rh)
}

/// Heat index with the dewpoint clamped to the temperature; the flag
/// reports whether clamping happened.
fn from_dewpoint(kernel: &dyn HeatIndexKernel, t2m: f64, dewpoint: f64) -> Result<(f64, bool)> {
    let rh = dewpoint_to_rh(t2m, dewpoint)?;
    Ok((kernel.heat_index(t2m, rh)?, dewpoint > t2m))
}

/// Heat-index field plus the number of cells whose dewpoint was clamped.
pub fn heat_index_field_with(
    kernel: &dyn HeatIndexKernel,
    t2m: &Field,
    dewpoint: &Field,
) -> Result<(Field, usize)> {
    t2m.grid().ensure_same(dewpoint.grid(), "heat index inputs")?;
    let mut clamped = 0;
    let values = t2m
        .values()
        .iter()
        .zip(dewpoint.values())
        .map(|(&t, &td)| {
            if t.is_nan() || td.is_nan() {
                return Ok(f64::NAN);
            }
            let (hi, c) = from_dewpoint(kernel, t, td)?;
            clamped += c as usize;
            Ok(hi)
        })
        .collect::<Result<_>>()?;
    Ok((Field::new(t2m.grid().clone(), values, CELSIUS)?, clamped))
}

pub fn heat_index_field(t2m: &Field, dewpoint: &Field) -> Result<Field> {
    let (field, clamped) = heat_index_field_with(&NwsRothfusz, t2m, dewpoint)?;
    if clamped > 0 {
        warn!("dewpoint above temperature at {clamped} cells; clamped to saturation");
    }
    Ok(field)
}

/// Per-layer heat index of paired temperature and dewpoint blocks.
pub fn heat_index_block(
    kernel: &dyn HeatIndexKernel,
    t2m: &EnsembleBlock,
    dewpoint: &EnsembleBlock,
) -> Result<(EnsembleBlock, usize)> {
    if t2m.variable() != Variable::T2m || dewpoint.variable() != Variable::Dewpoint {
        return Err(Error::argument(format!(
            "expected t2m and dewpoint blocks, got {} and {}",
            t2m.variable(),
            dewpoint.variable()
        )));
    }
    for b in [t2m, dewpoint] {
        if b.units() != CELSIUS {
            return Err(Error::shape(format!(
                "{} block in {}, expected {CELSIUS}",
                b.variable(),
                b.units()
            )));
        }
    }
    t2m.grid().ensure_same(dewpoint.grid(), "heat index blocks")?;
    if t2m.init_date() != dewpoint.init_date()
        || t2m.lead_hours() != dewpoint.lead_hours()
        || t2m.n_members() != dewpoint.n_members()
    {
        return Err(Error::shape(format!(
            "t2m and dewpoint blocks for {} disagree on time axis or members",
            t2m.init_date()
        )));
    }
    let mut clamped = 0;
    let data = t2m
        .data()
        .iter()
        .zip(dewpoint.data())
        .map(|(&t, &td)| {
            if t.is_nan() || td.is_nan() {
                return Ok(f32::NAN);
            }
            let (hi, c) = from_dewpoint(kernel, t as f64, td as f64)?;
            clamped += c as usize;
            Ok(hi as f32)
        })
        .collect::<Result<_>>()?;
    Ok((t2m.with_data(Variable::HeatIndex, CELSIUS, data)?, clamped))
}

/// NWS public-safety levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskCategory {
    Below,
    Caution,
    ExtremeCaution,
    Danger,
    ExtremeDanger,
}

/// Lower bounds (°C, inclusive) of caution, extreme caution, danger and
/// extreme danger.
pub const RISK_THRESHOLDS: [f64; 4] = [26.0, 32.0, 39.0, 51.0];

impl RiskCategory {
    pub const ALL: [RiskCategory; 5] = [
        RiskCategory::Below,
        RiskCategory::Caution,
        RiskCategory::ExtremeCaution,
        RiskCategory::Danger,
        RiskCategory::ExtremeDanger,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RiskCategory::Below => "below",
            RiskCategory::Caution => "caution",
            RiskCategory::ExtremeCaution => "extreme_caution",
            RiskCategory::Danger => "danger",
            RiskCategory::ExtremeDanger => "extreme_danger",
        }
    }
}

impl std::fmt::Display for RiskCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `None` for a missing (NaN) heat index.
pub fn risk_category(hi: f64) -> Option<RiskCategory> {
    if hi.is_nan() {
        return None;
    }
    let level = RISK_THRESHOLDS.iter().take_while(|&&t| hi >= t).count();
    Some(RiskCategory::ALL[level])
}

/// Category index per cell, NaN where missing.
pub fn risk_category_field(hi: &Field) -> Field {
    let values = hi
        .values()
        .iter()
        .map(|&v| risk_category(v).map_or(f64::NAN, |c| c.index() as f64))
        .collect();
    Field::new(hi.grid().clone(), values, "category").expect("one value per cell")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use chrono::NaiveDate;

    fn f_to_c(f: f64) -> f64 {
        (f - 32.0) / 1.8
    }

    #[test]
    fn saturation_and_reference_humidity() {
        assert_eq!(dewpoint_to_rh(25.0, 25.0).unwrap(), 100.0);
        // 100 * exp(17.625*20/263.04 - 17.625*30/273.04)
        let rh = dewpoint_to_rh(30.0, 20.0).unwrap();
        assert!((rh - 55.077_490_108_744).abs() < 1e-9, "{rh}");
        assert!((rh - 54.6).abs() <= 0.5);
    }

    #[test]
    fn humidity_increases_with_dewpoint() {
        let mut prev = 0.0;
        for i in 0..=300 {
            let td = -10.0 + i as f64 * 0.1;
            let rh = dewpoint_to_rh(20.0, td).unwrap();
            assert!(rh > prev);
            prev = rh;
        }
    }

    #[test]
    fn nonphysical_temperatures_rejected() {
        assert!(dewpoint_to_rh(75.0, 10.0).is_err());
        assert!(dewpoint_to_rh(20.0, -120.0).is_err());
        assert!(heat_index(30.0, 101.0).is_err());
        assert!(heat_index(30.0, -1.0).is_err());
    }

    #[test]
    fn reference_heat_index_values() {
        // Oracle values evaluated independently in °F then converted.
        let at_80f = heat_index(f_to_c(80.0), 40.0).unwrap();
        assert!((at_80f - 26.433_333_333_333).abs() < 1e-9, "{at_80f}");
        assert!((at_80f - 26.7).abs() < 0.3);
        let at_90f = heat_index(f_to_c(90.0), 50.0).unwrap();
        assert!((at_90f - 34.776_078_444_444).abs() < 1e-9, "{at_90f}");
        assert!((at_90f - 35.0).abs() < 0.3);
    }

    #[test]
    fn mild_temperatures_stay_close() {
        for rh in [40.0, 60.0, 80.0, 100.0] {
            let hi = heat_index(20.0, rh).unwrap();
            assert!((hi - 20.0).abs() < 1.0, "rh {rh}: {hi}");
        }
    }

    #[test]
    fn regime_properties_on_lattice() {
        for i in 0..=80 {
            let t = 27.0 + i as f64 * 0.25;
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=120 {
                let rh = 40.0 + j as f64 * 0.5;
                let hi = heat_index(t, rh).unwrap();
                assert!(hi >= prev, "t {t} rh {rh}");
                assert!(hi >= t - 2.0, "t {t} rh {rh}");
                prev = hi;
            }
        }
    }

    #[test]
    fn risk_thresholds() {
        assert_eq!(risk_category(25.9), Some(RiskCategory::Below));
        assert_eq!(risk_category(26.0), Some(RiskCategory::Caution));
        assert_eq!(risk_category(32.0), Some(RiskCategory::ExtremeCaution));
        assert_eq!(risk_category(39.0), Some(RiskCategory::Danger));
        assert_eq!(risk_category(50.99), Some(RiskCategory::Danger));
        assert_eq!(risk_category(55.0), Some(RiskCategory::ExtremeDanger));
        assert_eq!(risk_category(f64::NAN), None);
        let mut prev = RiskCategory::Below;
        for i in 0..700 {
            let c = risk_category(i as f64 * 0.1).unwrap();
            assert!(c >= prev);
            prev = c;
        }
    }

    fn grid() -> Grid {
        Grid::new(vec![10.0, 0.0], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn field_matches_scalar_path_bitwise() {
        let t = Field::new(grid(), vec![30.0, 35.0, f64::NAN, 22.0], CELSIUS).unwrap();
        let td = Field::new(grid(), vec![20.0, 36.0, 10.0, 22.0], CELSIUS).unwrap();
        let (hi, clamped) = heat_index_field_with(&NwsRothfusz, &t, &td).unwrap();
        assert_eq!(clamped, 1);
        let v = hi.values();
        assert_eq!(
            v[0].to_bits(),
            heat_index(30.0, dewpoint_to_rh(30.0, 20.0).unwrap())
                .unwrap()
                .to_bits()
        );
        assert_eq!(v[1].to_bits(), heat_index(35.0, 100.0).unwrap().to_bits());
        assert!(v[2].is_nan());
        assert_eq!(v[3].to_bits(), heat_index(22.0, 100.0).unwrap().to_bits());

        let other = Field::new(Grid::new(vec![0.0], vec![0.0]).unwrap(), vec![1.0], CELSIUS).unwrap();
        assert!(matches!(heat_index_field(&other, &td), Err(Error::Shape(_))));
    }

    #[test]
    fn block_path() {
        let date = NaiveDate::from_ymd_opt(2023, 7, 1).unwrap();
        let t = EnsembleBlock::new(
            grid(),
            Variable::T2m,
            CELSIUS,
            date,
            vec![240],
            1,
            vec![30.0, 31.0, 32.0, 33.0],
        )
        .unwrap();
        let td = t
            .with_data(Variable::Dewpoint, CELSIUS, vec![20.0, 20.0, 40.0, f32::NAN])
            .unwrap();
        let (hi, clamped) = heat_index_block(&NwsRothfusz, &t, &td).unwrap();
        assert_eq!(hi.variable(), Variable::HeatIndex);
        assert_eq!(clamped, 1);
        assert!(hi.data()[3].is_nan());
        let expect = heat_index(31.0, dewpoint_to_rh(31.0, 20.0).unwrap()).unwrap() as f32;
        assert_eq!(hi.data()[1], expect);
        assert!(heat_index_block(&NwsRothfusz, &td, &t).is_err());
    }

    #[test]
    fn category_field_indices() {
        let hi = Field::new(grid(), vec![20.0, 30.0, f64::NAN, 60.0], CELSIUS).unwrap();
        let c = risk_category_field(&hi);
        assert_eq!(c.values()[0], 0.0);
        assert_eq!(c.values()[1], 1.0);
        assert!(c.values()[2].is_nan());
        assert_eq!(c.values()[3], 4.0);
    }
}
