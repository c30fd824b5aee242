//! Declarative run configuration (JSON) and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compare::ConfidenceScale;
use crate::error::{Error, Result};
use crate::extremes::AnalysisConfig;
use crate::gev::{GevParams, McmcConfig};
use crate::grid::Grid;
use crate::ingest::{DewpointDepression, Variable};

pub const WORKSPACE_ENV: &str = "ENSX_WORKSPACE";
pub const JOBS_ENV: &str = "ENSX_JOBS";

/// The three ensembles of an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleRole {
    /// Traditional ensemble whose GEV fit extrapolates the tail.
    Small,
    /// Huge ensemble providing empirical thresholds.
    Huge,
    /// Realized outcome (a one-member "ensemble").
    Reference,
}

impl EnsembleRole {
    pub const ALL: [EnsembleRole; 3] = [EnsembleRole::Small, EnsembleRole::Huge, EnsembleRole::Reference];

    pub fn name(self) -> &'static str {
        match self {
            EnsembleRole::Small => "small",
            EnsembleRole::Huge => "huge",
            EnsembleRole::Reference => "reference",
        }
    }
}

/// Where an ensemble's data lives.
///
/// `blocks` directories hold `<YYYYMMDD>_<variable>.ensx` ensemble
/// containers; `maxima` directories hold `<variable>.ensx` member maxima.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum Source {
    Blocks(PathBuf),
    Maxima(PathBuf),
}

impl Source {
    pub fn path(&self) -> &Path {
        match self {
            Source::Blocks(p) | Source::Maxima(p) => p,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub small: Option<Source>,
    pub huge: Option<Source>,
    pub reference: Option<Source>,
    /// Single-layer container of land fractions; every cell counts as land
    /// when absent.
    pub land_mask: Option<PathBuf>,
}

impl Inputs {
    pub fn get(&self, role: EnsembleRole) -> Option<&Source> {
        match role {
            EnsembleRole::Small => self.small.as_ref(),
            EnsembleRole::Huge => self.huge.as_ref(),
            EnsembleRole::Reference => self.reference.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lat_first: f64,
    pub lat_last: f64,
    pub nlat: usize,
    pub lon_start: f64,
    pub dlon: f64,
    pub nlon: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::regional(
            self.lat_first,
            self.lat_last,
            self.nlat,
            self.lon_start,
            self.dlon,
            self.nlon,
        )
    }
}

/// Seasonal-maximum t2m distribution, varying linearly with latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSpec {
    pub location: f64,
    /// Change of location per degree of latitude away from the equator.
    pub location_per_degree: f64,
    pub scale: f64,
    pub shape: f64,
}

impl Default for ParamSpec {
    fn default() -> Self {
        ParamSpec {
            location: 38.0,
            location_per_degree: -0.3,
            scale: 2.0,
            shape: -0.1,
        }
    }
}

impl ParamSpec {
    pub fn at(&self, latitude: f64) -> Result<GevParams> {
        GevParams::new(
            self.location + self.location_per_degree * latitude.abs(),
            self.scale,
            self.shape,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    /// Six-hourly layers for every init date of the season.
    Blocks,
    /// Member maxima drawn directly.
    Maxima,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthEnsemble {
    pub members: usize,
    pub mode: SynthMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthEnsembles {
    pub small: Option<SynthEnsemble>,
    pub huge: Option<SynthEnsemble>,
    pub reference: Option<SynthEnsemble>,
}

impl SynthEnsembles {
    pub fn get(&self, role: EnsembleRole) -> Option<&SynthEnsemble> {
        match role {
            EnsembleRole::Small => self.small.as_ref(),
            EnsembleRole::Huge => self.huge.as_ref(),
            EnsembleRole::Reference => self.reference.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub grid: GridSpec,
    #[serde(default = "default_land_share")]
    pub land_share: f64,
    #[serde(default)]
    pub t2m: ParamSpec,
    #[serde(default)]
    pub dewpoint: DewpointDepression,
    /// Location shift of the huge ensemble, in units of the scale.
    #[serde(default)]
    pub huge_location_shift: f64,
    pub ensembles: SynthEnsembles,
}

fn default_land_share() -> f64 {
    0.6
}

/// Which cells keep their full posterior draws.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RetainDraws {
    /// `"all"` or `"none"`.
    Keyword(String),
    Cells(Vec<usize>),
}

impl Default for RetainDraws {
    fn default() -> Self {
        RetainDraws::Keyword("all".into())
    }
}

impl RetainDraws {
    pub fn keeps(&self, cell: usize) -> bool {
        match self {
            RetainDraws::Keyword(k) => k == "all",
            RetainDraws::Cells(cells) => cells.contains(&cell),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub retain_draws: RetainDraws,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Histogram edges (°C) for both axes; 1 °C bins over [0, 60] by default.
    pub histogram_edges: Option<Vec<f64>>,
    /// Cells below this containment probability form the low-containment set.
    pub low_containment: f64,
    pub maps: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            histogram_edges: None,
            low_containment: 0.33,
            maps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workspace: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub confidence_edges: ConfidenceScale,
    #[serde(default = "default_variables")]
    pub variables: Vec<Variable>,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub report: ReportConfig,
    /// Exit status when the only problems are convergence warnings.
    #[serde(default = "default_convergence_exit")]
    pub convergence_exit_code: i32,
}

fn default_variables() -> Vec<Variable> {
    vec![Variable::T2m, Variable::HeatIndex]
}

fn default_convergence_exit() -> i32 {
    3
}

/// One violated invariant, located by its JSON field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn diag(path: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        path: path.into(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parses a config file; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.workspace);
        for src in [
            &mut self.inputs.small,
            &mut self.inputs.huge,
            &mut self.inputs.reference,
        ]
        .into_iter()
        .flatten()
        {
            match src {
                Source::Blocks(p) | Source::Maxima(p) => fix(p),
            }
        }
        if let Some(p) = self.inputs.land_mask.as_mut() {
            fix(p);
        }
    }

    /// Applies `ENSX_WORKSPACE` and `ENSX_JOBS` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Some(ws) = std::env::var_os(WORKSPACE_ENV).filter(|v| !v.is_empty()) {
            self.workspace = PathBuf::from(ws);
        }
        if let Ok(jobs) = std::env::var(JOBS_ENV) {
            if !jobs.is_empty() {
                self.jobs = jobs
                    .parse()
                    .map_err(|_| Error::Config(format!("{JOBS_ENV}={jobs:?} is not a count")))?;
            }
        }
        Ok(())
    }

    /// Source of each ensemble after synthetic defaults are applied.
    pub fn source(&self, role: EnsembleRole) -> Option<Source> {
        if let Some(src) = self.inputs.get(role) {
            return Some(src.clone());
        }
        let synth = self.synthetic.as_ref()?.ensembles.get(role)?;
        let dir = self.workspace.join("synth").join(role.name());
        Some(match synth.mode {
            SynthMode::Blocks => Source::Blocks(dir.join("blocks")),
            SynthMode::Maxima => Source::Maxima(dir.join("maxima")),
        })
    }

    pub fn land_mask_path(&self) -> Option<PathBuf> {
        self.inputs.land_mask.clone().or_else(|| {
            self.synthetic
                .as_ref()
                .map(|_| self.workspace.join("synth").join("land_mask.ensx"))
        })
    }

    /// Every violated invariant; empty when the config is usable.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for (field, msg) in self.analysis.problems() {
            out.push(diag(format!("analysis.{field}"), msg));
        }
        for (field, msg) in self.mcmc.problems() {
            out.push(diag(format!("mcmc.{field}"), msg));
        }
        if let Err(e) = self.confidence_edges.check() {
            out.push(diag("confidence_edges", e.to_string()));
        }
        if self.variables.is_empty() {
            out.push(diag("variables", "must name at least one of t2m, heat_index"));
        }
        if self.variables.contains(&Variable::Dewpoint) {
            out.push(diag(
                "variables",
                "dewpoint is an input, not an analysis variable",
            ));
        }
        let mut seen = self.variables.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variables.len() {
            out.push(diag("variables", "duplicate entries"));
        }
        if !(0.0..=1.0).contains(&self.report.low_containment) {
            out.push(diag("report.low_containment", "must be in [0, 1]"));
        }
        if let Some(edges) = &self.report.histogram_edges {
            if edges.len() < 2
                || edges
                    .windows(2)
                    .any(|w| w[1].is_nan() || w[0].is_nan() || w[1] <= w[0])
            {
                out.push(diag(
                    "report.histogram_edges",
                    "need two or more strictly increasing values",
                ));
            }
        }
        if let RetainDraws::Keyword(k) = &self.fit.retain_draws {
            if k != "all" && k != "none" {
                out.push(diag(
                    "fit.retain_draws",
                    format!("{k:?} is not \"all\", \"none\" or a cell list"),
                ));
            }
        }
        if !(0..=255).contains(&self.convergence_exit_code) {
            out.push(diag("convergence_exit_code", "must be in 0..=255"));
        }
        self.check_synthetic(&mut out);
        self.check_sources(&mut out);
        out
    }

    fn check_synthetic(&self, out: &mut Vec<Diagnostic>) {
        let Some(s) = &self.synthetic else { return };
        if let Err(e) = s.grid.build() {
            out.push(diag("synthetic.grid", e.to_string()));
        }
        if !(0.0..=1.0).contains(&s.land_share) {
            out.push(diag("synthetic.land_share", "must be in [0, 1]"));
        }
        if !(s.t2m.scale.is_finite() && s.t2m.scale > 0.0) {
            out.push(diag("synthetic.t2m.scale", "must be finite and > 0"));
        }
        if !(s.t2m.shape.is_finite() && s.t2m.shape.abs() < 1.0) {
            out.push(diag("synthetic.t2m.shape", "must be in (-1, 1)"));
        }
        if !(s.t2m.location.is_finite() && s.t2m.location_per_degree.is_finite()) {
            out.push(diag("synthetic.t2m.location", "must be finite"));
        }
        if !(s.dewpoint.mean.is_finite() && s.dewpoint.sd.is_finite() && s.dewpoint.sd >= 0.0) {
            out.push(diag("synthetic.dewpoint", "needs finite mean and sd >= 0"));
        }
        if !s.huge_location_shift.is_finite() {
            out.push(diag("synthetic.huge_location_shift", "must be finite"));
        }
        for role in EnsembleRole::ALL {
            if let Some(e) = s.ensembles.get(role) {
                let path = format!("synthetic.ensembles.{}", role.name());
                if e.members == 0 {
                    out.push(diag(format!("{path}.members"), "must be positive"));
                }
                if self.inputs.get(role).is_some() {
                    out.push(diag(path, format!("inputs.{} is also set", role.name())));
                }
            }
        }
        if self.inputs.land_mask.is_some() {
            out.push(diag(
                "inputs.land_mask",
                "synthetic runs generate their own land mask",
            ));
        }
    }

    fn check_sources(&self, out: &mut Vec<Diagnostic>) {
        for role in [EnsembleRole::Small, EnsembleRole::Huge] {
            if self.source(role).is_none() {
                out.push(diag(
                    format!("inputs.{}", role.name()),
                    "required (or define synthetic.ensembles.".to_string() + role.name() + ")",
                ));
            }
        }
        let mut paths: Vec<(String, PathBuf)> = Vec::new();
        for role in EnsembleRole::ALL {
            if let Some(src) = self.inputs.get(role) {
                let field = format!("inputs.{}", role.name());
                if !src.path().is_dir() {
                    out.push(diag(
                        field.clone(),
                        format!("{} is not a directory", src.path().display()),
                    ));
                }
                paths.push((field, src.path().to_path_buf()));
            }
        }
        if let Some(p) = &self.inputs.land_mask {
            if !p.is_file() {
                out.push(diag(
                    "inputs.land_mask",
                    format!("{} does not exist", p.display()),
                ));
            }
            paths.push(("inputs.land_mask".into(), p.clone()));
        }
        paths.push(("workspace".into(), self.workspace.clone()));
        for i in 0..paths.len() {
            for j in 0..i {
                if paths[i].1 == paths[j].1 {
                    out.push(diag(paths[i].0.clone(), format!("same path as {}", paths[j].0)));
                }
            }
        }
        for (field, p) in &paths[..paths.len() - 1] {
            if p.starts_with(&self.workspace) {
                out.push(diag(field.clone(), "input lies inside the workspace"));
            }
        }
        if self.workspace.is_file() {
            out.push(diag("workspace", "is an existing file"));
        }
    }
}

/// Reads and checks a config file without touching anything else.
pub fn validate_config(path: &Path) -> Result<Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg: RunConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return Ok(vec![diag("", format!("{e}"))]),
    };
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg.diagnostics())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, json: &str) -> PathBuf {
        let p = dir.join("run.json");
        std::fs::write(&p, json).unwrap();
        p
    }

    const MINIMAL: &str = r#"{
        "workspace": "work",
        "synthetic": {
            "grid": {"lat_first": 40, "lat_last": 31, "nlat": 10, "lon_start": 0, "dlon": 1, "nlon": 20},
            "ensembles": {
                "small": {"members": 50, "mode": "blocks"},
                "huge": {"members": 7424, "mode": "maxima"}
            }
        }
    }"#;

    #[test]
    fn minimal_synthetic_config_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), MINIMAL);
        assert_eq!(validate_config(&p).unwrap(), vec![]);
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.workspace, dir.path().join("work"));
        assert_eq!(
            cfg.source(EnsembleRole::Small),
            Some(Source::Blocks(dir.path().join("work/synth/small/blocks")))
        );
        assert_eq!(cfg.source(EnsembleRole::Reference), None);
    }

    #[test]
    fn invariant_violations_name_fields() {
        let dir = tempfile::tempdir().unwrap();
        let json = MINIMAL.replacen(
            "\"workspace\": \"work\",",
            r#""workspace": "work",
               "analysis": {"extreme_probability": 1.5},
               "mcmc": {"iterations": 100, "burn_in": 100},"#,
            1,
        );
        let p = write(dir.path(), &json);
        let paths: Vec<String> = validate_config(&p).unwrap().into_iter().map(|d| d.path).collect();
        assert!(
            paths.contains(&"analysis.extreme_probability".to_string()),
            "{paths:?}"
        );
        assert!(paths.contains(&"mcmc.burn_in".to_string()), "{paths:?}");
    }

    #[test]
    fn missing_inputs_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"{"workspace": "work",
                "inputs": {"small": {"kind": "blocks", "path": "nowhere"},
                           "land_mask": "mask.ensx"}}"#,
        );
        let paths: Vec<String> = validate_config(&p).unwrap().into_iter().map(|d| d.path).collect();
        assert!(paths.contains(&"inputs.small".to_string()));
        assert!(paths.contains(&"inputs.huge".to_string()));
        assert!(paths.contains(&"inputs.land_mask".to_string()));
    }

    #[test]
    fn unknown_fields_and_bad_json_are_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"workspace": "w", "colour": 3}"#);
        let d = validate_config(&p).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("colour"));
        assert!(matches!(
            validate_config(&dir.path().join("absent.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn retain_draws_forms() {
        let all: RetainDraws = serde_json::from_str(r#""all""#).unwrap();
        let none: RetainDraws = serde_json::from_str(r#""none""#).unwrap();
        let some: RetainDraws = serde_json::from_str("[1, 5]").unwrap();
        assert!(all.keeps(7) && !none.keeps(7));
        assert!(some.keeps(5) && !some.keeps(2));
    }
}
