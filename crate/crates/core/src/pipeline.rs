//! Stage orchestration: synth → heat-index → extract → fit → compare → report.
//!
//! Every stage reads only files persisted by earlier stages, writes into its
//! own workspace directory, and is deterministic for a given config. Per-cell
//! random streams come from `mix_seed(seed, cell, stage)`, so the number of
//! worker threads never changes any output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::compare::{
    category_fractions, compare_posteriors, CategoryFractions, ComparisonResult, ConfidenceCategory,
};
use crate::config::{EnsembleRole, RunConfig, Source, SynthMode};
use crate::error::{Error, Result};
use crate::extremes::{ensemble_max_field, storyline_field, MaximaAccumulator, MemberMaxima};
use crate::gev::{bayes_fit, gev_quantile, GevParams, PosteriorSamples, PosteriorSummary};
use crate::grid::{Field, Grid, LandMask, Mask};
use crate::heatindex::{
    dewpoint_to_rh, heat_index, heat_index_block, risk_category_field, NwsRothfusz, RiskCategory,
};
use crate::ingest::{
    read_block, read_container, read_field, read_land_mask, read_maxima, synth_block, synth_land_mask,
    synth_member_maxima, write_block, write_container, write_field, write_land_mask, write_maxima,
    ContainerKind, Header, SyntheticSpec, Variable, CELSIUS,
};
use crate::report::{
    self, default_edges, exceedance_report, index_fractions, joint_histogram, sig6, Exceedance, Palette,
    Table, TransitionTable,
};
use crate::rng::{cell_rng, mix_seed};

const STAGE_SYNTH: u64 = 1;
const STAGE_SYNTH_HEAT: u64 = 2;
const STAGE_FIT: u64 = 4;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Synth,
    HeatIndex,
    Extract,
    Fit,
    Compare,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Synth,
        Stage::HeatIndex,
        Stage::Extract,
        Stage::Fit,
        Stage::Compare,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::HeatIndex => "heat-index",
            Stage::Extract => "extract",
            Stage::Fit => "fit",
            Stage::Compare => "compare",
            Stage::Report => "report",
        }
    }

    /// Workspace directory owned by the stage.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::HeatIndex => "heat_index",
            Stage::Extract => "maxima",
            Stage::Fit => "fit",
            Stage::Compare => "compare",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown stage {s:?}")))
    }
}

/// A stage that aborted the run.
#[derive(Debug)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: Error,
}

impl std::fmt::Display for StageFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    /// Hashes every file under `root` except the manifest itself.
    pub fn scan(root: &Path) -> Result<Self> {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(&dir, e))?.path();
                if path.is_dir() {
                    stack.push(path);
                    continue;
                }
                let rel = path.strip_prefix(root).expect("walked from root");
                let rel = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                if rel == MANIFEST {
                    continue;
                }
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                files.push(ManifestEntry {
                    path: rel,
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                });
            }
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Manifest { files })
    }

    pub fn get(&self, path: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.path == path)
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("serializable manifest");
        json.push('\n');
        report::write_file(&root.join(MANIFEST), json.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub convergence_warnings: usize,
    pub failed_fits: usize,
}

impl RunOutcome {
    pub fn exit_code(&self, config: &RunConfig) -> i32 {
        if self.convergence_warnings > 0 {
            config.convergence_exit_code
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
struct FitCounts {
    fitted: usize,
    failed: usize,
    convergence_warnings: usize,
    skipped: usize,
}

pub struct Pipeline {
    cfg: RunConfig,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let diags = cfg.diagnostics();
        if !diags.is_empty() {
            let msg = diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ");
            return Err(Error::Config(msg));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Pipeline { cfg, pool })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn ws(&self) -> &Path {
        &self.cfg.workspace
    }

    /// Runs `stages` in pipeline order and refreshes the manifest.
    pub fn run(&self, stages: &[Stage]) -> std::result::Result<RunOutcome, StageFailure> {
        let mut ordered: Vec<Stage> = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        let mut outcome = RunOutcome {
            manifest: Manifest { files: Vec::new() },
            convergence_warnings: 0,
            failed_fits: 0,
        };
        for stage in ordered {
            let fail = |error| StageFailure { stage, error };
            info!("stage {stage}");
            let dir = self.ws().join(stage.dir());
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| fail(Error::io(&dir, e)))?;
            }
            match stage {
                Stage::Synth => self.synth(),
                Stage::HeatIndex => self.heat_index(),
                Stage::Extract => self.extract(),
                Stage::Fit => self.fit().map(|counts| {
                    outcome.convergence_warnings += counts.convergence_warnings;
                    outcome.failed_fits += counts.failed;
                }),
                Stage::Compare => self.compare(),
                Stage::Report => self.report(),
            }
            .map_err(fail)?;
        }
        let finish = |error| StageFailure {
            stage: *stages.last().unwrap_or(&Stage::Report),
            error,
        };
        std::fs::create_dir_all(self.ws()).map_err(|e| finish(Error::io(self.ws(), e)))?;
        outcome.manifest = Manifest::scan(self.ws()).map_err(finish)?;
        outcome.manifest.write(self.ws()).map_err(finish)?;
        Ok(outcome)
    }

    fn land_mask(&self, grid: &Grid) -> Result<LandMask> {
        match self.cfg.land_mask_path() {
            Some(p) => {
                let mask = read_land_mask(&p)?;
                mask.grid().ensure_same(grid, "land mask")?;
                Ok(mask)
            }
            None => LandMask::new(grid.clone(), vec![1.0; grid.len()]),
        }
    }

    fn selector(&self, grid: &Grid) -> Result<Mask> {
        self.land_mask(grid)?.selector(self.cfg.analysis.land_threshold)
    }

    fn wants_heat(&self) -> bool {
        self.cfg.variables.contains(&Variable::HeatIndex)
    }

    fn truth(&self, role: EnsembleRole, grid: &Grid) -> Result<Vec<GevParams>> {
        let s = self.cfg.synthetic.as_ref().expect("synthetic config present");
        (0..grid.len())
            .map(|cell| {
                let mut p = s.t2m.at(grid.cell_latitude(cell))?;
                if role == EnsembleRole::Huge {
                    p.location += s.huge_location_shift * p.scale;
                }
                Ok(p)
            })
            .collect()
    }

    fn synth(&self) -> Result<()> {
        let Some(s) = &self.cfg.synthetic else {
            info!("no synthetic section; nothing to generate");
            return Ok(());
        };
        let grid = s.grid.build()?;
        let root = self.ws().join("synth");
        let mask = synth_land_mask(&grid, s.land_share, self.cfg.seed)?;
        write_land_mask(&mask, &root.join("land_mask.ensx"))?;

        let p = self.cfg.analysis.extreme_probability;
        let mut truth = Table::new([
            "ensemble",
            "cell",
            "latitude",
            "longitude",
            "land_fraction",
            "location",
            "scale",
            "shape",
            "threshold",
        ]);

        for (index, role) in EnsembleRole::ALL.into_iter().enumerate() {
            let Some(ens) = s.ensembles.get(role) else {
                continue;
            };
            let params = self.truth(role, &grid)?;
            for (cell, th) in params.iter().enumerate() {
                truth.push([
                    role.name().to_string(),
                    cell.to_string(),
                    sig6(grid.cell_latitude(cell)),
                    sig6(grid.cell_longitude(cell)),
                    sig6(mask.fractions()[cell]),
                    sig6(th.location),
                    sig6(th.scale),
                    sig6(th.shape),
                    sig6(gev_quantile(p, th)?),
                ]);
            }
            let seed = mix_seed(self.cfg.seed, index as u64, STAGE_SYNTH);
            let spec = SyntheticSpec::new(grid.clone(), params, ens.members, seed)?;
            let dir = root.join(role.name());
            match ens.mode {
                SynthMode::Blocks => self.synth_blocks(&spec, &dir.join("blocks"))?,
                SynthMode::Maxima => self.synth_maxima(&spec, &dir.join("maxima"))?,
            }
        }
        truth.write(&root.join("truth.csv"))
    }

    fn synth_blocks(&self, spec: &SyntheticSpec, dir: &Path) -> Result<()> {
        let dates = self.cfg.analysis.season_dates();
        let leads: Vec<u32> = self.cfg.analysis.lead_hours.iter().copied().collect();
        let dewpoint = self
            .wants_heat()
            .then(|| self.cfg.synthetic.as_ref().expect("synthetic").dewpoint);
        let n = dates.len();
        self.pool.install(|| {
            dates.par_iter().enumerate().try_for_each(|(i, date)| {
                let (t, td) = synth_block(spec, *date, i, n, &leads, dewpoint)?;
                let stem = date.format("%Y%m%d").to_string();
                write_block(&t, &dir.join(format!("{stem}_t2m.ensx")))?;
                if let Some(td) = td {
                    write_block(&td, &dir.join(format!("{stem}_dewpoint.ensx")))?;
                }
                Ok(())
            })
        })
    }

    fn synth_maxima(&self, spec: &SyntheticSpec, dir: &Path) -> Result<()> {
        let t2m = synth_member_maxima(spec)?;
        write_maxima(&t2m, &dir.join("t2m.ensx"))?;
        if self.wants_heat() {
            let dep = self.cfg.synthetic.as_ref().expect("synthetic").dewpoint;
            let m = t2m.n_members();
            let values = (0..spec.grid().len())
                .flat_map(|cell| {
                    let mut rng = cell_rng(spec.seed(), cell as u64, STAGE_SYNTH_HEAT);
                    t2m.cell(cell)
                        .iter()
                        .map(|&t| {
                            // f32 storage first, as with block data
                            let t = t as f32 as f64;
                            let z: f64 = StandardNormal.sample(&mut rng);
                            let td = t - (dep.mean + dep.sd * z).abs();
                            heat_index(t, dewpoint_to_rh(t, td)?)
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Result<Vec<f64>>>()?;
            let hi = MemberMaxima::new(
                spec.grid().clone(),
                m,
                values,
                Variable::HeatIndex.as_str(),
                CELSIUS,
            )?;
            write_maxima(&hi, &dir.join("heat_index.ensx"))?;
        }
        Ok(())
    }

    fn heat_index(&self) -> Result<()> {
        if !self.wants_heat() {
            return Ok(());
        }
        for role in EnsembleRole::ALL {
            let Some(Source::Blocks(src)) = self.cfg.source(role) else {
                continue;
            };
            let out = self.ws().join(Stage::HeatIndex.dir()).join(role.name());
            let stems = block_stems(&src, Variable::T2m)?;
            let clamped: usize = self.pool.install(|| {
                stems
                    .par_iter()
                    .map(|stem| {
                        let t = read_block(&src.join(format!("{stem}_t2m.ensx")))?;
                        let td = read_block(&src.join(format!("{stem}_dewpoint.ensx")))?;
                        let (hi, clamped) = heat_index_block(&NwsRothfusz, &t, &td)?;
                        write_block(&hi, &out.join(format!("{stem}_heat_index.ensx")))?;
                        Ok(clamped)
                    })
                    .collect::<Result<Vec<usize>>>()
                    .map(|v| v.iter().sum())
            })?;
            if clamped > 0 {
                warn!(
                    "{}: dewpoint clamped to temperature at {clamped} values",
                    role.name()
                );
            }
        }
        Ok(())
    }

    fn extract(&self) -> Result<()> {
        for role in EnsembleRole::ALL {
            let Some(source) = self.cfg.source(role) else {
                continue;
            };
            for &var in &self.cfg.variables {
                let out = self.maxima_path(role, var);
                let maxima = match &source {
                    Source::Maxima(dir) => {
                        let mx = read_maxima(&dir.join(format!("{var}.ensx")))?;
                        if mx.variable() != var.as_str() {
                            return Err(Error::Data(format!(
                                "{}: holds {}, expected {var}",
                                dir.display(),
                                mx.variable()
                            )));
                        }
                        mx
                    }
                    Source::Blocks(dir) => {
                        let dir = if var == Variable::HeatIndex {
                            self.ws().join(Stage::HeatIndex.dir()).join(role.name())
                        } else {
                            dir.clone()
                        };
                        let mut acc = MaximaAccumulator::new(&self.cfg.analysis)?;
                        for stem in block_stems(&dir, var)? {
                            acc.push(&read_block(&dir.join(format!("{stem}_{var}.ensx")))?)?;
                        }
                        let (mx, stats) = acc.finish()?;
                        info!(
                            "{} {var}: {} blocks, {} outside season, {} missing cells",
                            role.name(),
                            stats.blocks_used,
                            stats.blocks_outside_season,
                            stats.missing_cells
                        );
                        mx
                    }
                };
                write_maxima(&maxima, &out)?;
            }
        }
        Ok(())
    }

    fn maxima_path(&self, role: EnsembleRole, var: Variable) -> PathBuf {
        self.ws()
            .join(Stage::Extract.dir())
            .join(role.name())
            .join(format!("{var}.ensx"))
    }

    fn fit(&self) -> Result<FitCounts> {
        let mut total = FitCounts::default();
        let mut summary = BTreeMap::new();
        for (vi, &var) in self.cfg.variables.iter().enumerate() {
            let counts = self.fit_variable(var, vi as u64)?;
            total.fitted += counts.fitted;
            total.failed += counts.failed;
            total.convergence_warnings += counts.convergence_warnings;
            total.skipped += counts.skipped;
            summary.insert(var.as_str(), counts);
        }
        let json = serde_json::to_string_pretty(&summary).expect("serializable counts") + "\n";
        report::write_file(&self.ws().join("fit").join("fit.json"), json.as_bytes())?;
        Ok(total)
    }

    fn fit_variable(&self, var: Variable, var_id: u64) -> Result<FitCounts> {
        let maxima = read_maxima(&self.maxima_path(EnsembleRole::Small, var))?;
        let grid = maxima.grid().clone();
        let selector = self.selector(&grid)?;
        let p = self.cfg.analysis.extreme_probability;
        let mcmc = self.cfg.mcmc;
        let seed = self.cfg.seed;

        let results: Vec<Option<Result<PosteriorSamples>>> = self.pool.install(|| {
            (0..grid.len())
                .into_par_iter()
                .map(|cell| {
                    if !selector.get(cell) || maxima.is_missing(cell) {
                        return None;
                    }
                    let cell_seed = mix_seed(seed, cell as u64, STAGE_FIT + (var_id << 8));
                    Some(bayes_fit(maxima.cell(cell), &mcmc.with_seed(cell_seed)))
                })
                .collect()
        });

        let mut counts = FitCounts::default();
        let mut table = Table::new([
            "cell",
            "latitude",
            "longitude",
            "status",
            "location_q05",
            "location_median",
            "location_q95",
            "scale_q05",
            "scale_median",
            "scale_q95",
            "shape_q05",
            "shape_median",
            "shape_q95",
            "threshold_q05",
            "threshold_median",
            "threshold_q95",
            "rhat_location",
            "rhat_scale",
            "rhat_shape",
            "acceptance",
        ]);
        let draws = mcmc.chains * mcmc.draws_per_chain();
        let n = grid.len();
        let mut payload = vec![f32::NAN; 3 * draws * n];
        for (cell, result) in results.into_iter().enumerate() {
            let mut row = vec![
                cell.to_string(),
                sig6(grid.cell_latitude(cell)),
                sig6(grid.cell_longitude(cell)),
            ];
            match result {
                None => {
                    counts.skipped += 1;
                    let status = if selector.get(cell) {
                        "missing"
                    } else {
                        "not_selected"
                    };
                    row.push(status.into());
                    row.extend(std::iter::repeat_n("NaN".to_string(), 16));
                }
                Some(Err(e)) => {
                    counts.failed += 1;
                    warn!("{var} cell {cell}: fit failed: {e}");
                    row.push("failed".into());
                    row.extend(std::iter::repeat_n("NaN".to_string(), 16));
                }
                Some(Ok(post)) => {
                    counts.fitted += 1;
                    let warned = !post.warnings().is_empty();
                    if warned {
                        counts.convergence_warnings += 1;
                        warn!("{var} cell {cell}: R-hat {:.3}", post.diagnostics().max_rhat());
                    }
                    let s = post.summary(p)?;
                    row.push(if warned { "rhat_warning" } else { "ok" }.into());
                    row.extend(summary_columns(&s));
                    if self.cfg.fit.retain_draws.keeps(cell) {
                        for (d, th) in post.draws().iter().enumerate() {
                            for (layer, v) in [th.location, th.scale, th.shape].into_iter().enumerate() {
                                payload[(layer * draws + d) * n + cell] = v as f32;
                            }
                        }
                    }
                }
            }
            table.push(row);
        }
        let dir = self.ws().join("fit");
        table.write(&dir.join(format!("{var}_summary.csv")))?;
        let mut header = Header::new(
            ContainerKind::Posterior,
            &grid,
            var.as_str(),
            maxima.units(),
            draws,
            3,
        );
        header.attributes.insert("chains".into(), mcmc.chains.to_string());
        header
            .attributes
            .insert("layers".into(), "location,scale,shape".into());
        write_container(&dir.join(format!("{var}_posterior.ensx")), &header, &payload)?;
        info!(
            "{var}: {} fitted, {} failed, {} with R-hat warnings",
            counts.fitted, counts.failed, counts.convergence_warnings
        );
        Ok(counts)
    }

    fn compare(&self) -> Result<()> {
        let p = self.cfg.analysis.extreme_probability;
        let mut fractions = Table::new(["variable", "category", "fraction"]);
        for &var in &self.cfg.variables {
            let huge = read_maxima(&self.maxima_path(EnsembleRole::Huge, var))?;
            let grid = huge.grid().clone();
            let threshold = storyline_field(&huge, p)?;
            let posteriors = read_posteriors(&self.ws().join("fit").join(format!("{var}_posterior.ensx")))?;
            grid.ensure_same(&posteriors.0, "posterior draws")?;
            let result = compare_posteriors(&posteriors.1, &threshold, p, &self.cfg.confidence_edges)?;

            let dir = self.ws().join("compare");
            write_field(
                &threshold,
                var.as_str(),
                &dir.join(format!("{var}_threshold.ensx")),
            )?;
            write_field(
                &result.probability_field(),
                "containment_probability",
                &dir.join(format!("{var}_probability.ensx")),
            )?;
            write_field(
                &result.difference_field(),
                "threshold_difference",
                &dir.join(format!("{var}_difference.ensx")),
            )?;

            let mut cells = Table::new([
                "cell",
                "latitude",
                "longitude",
                "huge_threshold",
                "probability",
                "category",
                "difference",
            ]);
            for (cell, c) in result.cells().iter().enumerate() {
                let (prob, cat, diff) = match c {
                    Some(c) => (
                        sig6(c.probability),
                        c.category.name().to_string(),
                        sig6(c.difference),
                    ),
                    None => ("NaN".into(), "missing".into(), "NaN".into()),
                };
                cells.push([
                    cell.to_string(),
                    sig6(grid.cell_latitude(cell)),
                    sig6(grid.cell_longitude(cell)),
                    sig6(threshold.values()[cell]),
                    prob,
                    cat,
                    diff,
                ]);
            }
            cells.write(&dir.join(format!("{var}_cells.csv")))?;

            match category_fractions(&result, &self.selector(&grid)?) {
                Ok(f) => push_fractions(&mut fractions, var, &f),
                Err(Error::UndefinedFraction) => warn!("{var}: no selected cells for category fractions"),
                Err(e) => return Err(e),
            }
        }
        fractions.write(&self.ws().join("compare").join("category_fractions.csv"))
    }

    fn report(&self) -> Result<()> {
        let p = self.cfg.analysis.extreme_probability;
        let dir = self.ws().join("report");
        let mut exceedances: Vec<(String, Exceedance)> = Vec::new();
        let mut summary = ReportSummary::default();
        let edges = self
            .cfg
            .report
            .histogram_edges
            .clone()
            .unwrap_or_else(default_edges);

        for &var in &self.cfg.variables {
            let small = read_maxima(&self.maxima_path(EnsembleRole::Small, var))?;
            let huge = read_maxima(&self.maxima_path(EnsembleRole::Huge, var))?;
            let grid = small.grid().clone();
            let selector = self.selector(&grid)?;
            let small_max = ensemble_max_field(&small)?;
            let huge_max = ensemble_max_field(&huge)?;
            let reference = match self.cfg.source(EnsembleRole::Reference) {
                Some(_) => Some(ensemble_max_field(&read_maxima(
                    &self.maxima_path(EnsembleRole::Reference, var),
                )?)?),
                None => None,
            };
            let cmp_dir = self.ws().join("compare");
            let (threshold, _) = read_field(&cmp_dir.join(format!("{var}_threshold.ensx")))?;
            let (probability, _) = read_field(&cmp_dir.join(format!("{var}_probability.ensx")))?;
            let (difference, _) = read_field(&cmp_dir.join(format!("{var}_difference.ensx")))?;
            let result =
                ComparisonResult::from_fields(&probability, &difference, &self.cfg.confidence_edges)?;
            let gev_threshold = Field::new(
                grid.clone(),
                threshold
                    .values()
                    .iter()
                    .zip(difference.values())
                    .map(|(t, d)| t + d)
                    .collect(),
                threshold.units(),
            )?;

            let mut pairs: Vec<(&str, &Field, &Field)> = vec![
                ("huge_max_vs_small_max", &huge_max, &small_max),
                (
                    "small_gev_threshold_vs_huge_threshold",
                    &gev_threshold,
                    &threshold,
                ),
            ];
            if let Some(r) = &reference {
                pairs.insert(0, ("small_max_vs_reference", &small_max, r));
                pairs.insert(1, ("huge_max_vs_reference", &huge_max, r));
            }
            for (name, a, b) in pairs {
                match exceedance_report(a, b, &selector) {
                    Ok(e) => exceedances.push((format!("{var}:{name}"), e)),
                    Err(Error::UndefinedFraction) => warn!("{var}:{name}: no selected cells"),
                    Err(e) => return Err(e),
                }
            }
            match category_fractions(&result, &selector) {
                Ok(f) => {
                    summary.category_fractions.insert(var.as_str().into(), f);
                }
                Err(Error::UndefinedFraction) => {}
                Err(e) => return Err(e),
            }

            if self.cfg.report.maps {
                let maps = dir.join("maps");
                let cont = Palette::Continuous { min: None, max: None };
                report::render_map(&small_max, &cont, &maps.join(format!("{var}_small_max.png")))?;
                report::render_map(&huge_max, &cont, &maps.join(format!("{var}_huge_max.png")))?;
                report::render_map(
                    &difference,
                    &cont,
                    &maps.join(format!("{var}_threshold_difference.png")),
                )?;
                let conf = Palette::Discrete(report::CONFIDENCE_COLORS.to_vec());
                report::render_map(
                    &result.category_field(),
                    &conf,
                    &maps.join(format!("{var}_confidence.png")),
                )?;
                if let Some(r) = &reference {
                    report::render_map(r, &cont, &maps.join(format!("{var}_reference.png")))?;
                }
            }

            if var == Variable::HeatIndex {
                if let Some(r) = &reference {
                    self.storyline(r, &threshold, &probability, &selector, &edges, &dir, &mut summary)?;
                }
            }
        }

        let rows: Vec<(&str, Exceedance)> = exceedances.iter().map(|(n, e)| (n.as_str(), *e)).collect();
        report::exceedance_table(&rows).write(&dir.join("exceedance.csv"))?;
        let mut fractions = Table::new(["variable", "category", "fraction"]);
        for (var, f) in &summary.category_fractions {
            push_fractions(&mut fractions, Variable::from_str(var)?, f);
        }
        fractions.write(&dir.join("category_fractions.csv"))?;
        summary.exceedance = exceedances.into_iter().collect();
        summary.extreme_probability = p;
        let json = serde_json::to_string_pretty(&summary).expect("serializable summary") + "\n";
        report::write_file(&dir.join("summary.json"), json.as_bytes())
    }

    /// Realized heat-index maxima against the huge-ensemble storyline, over
    /// cells where the small-ensemble fit gave the storyline low probability.
    #[allow(clippy::too_many_arguments)]
    fn storyline(
        &self,
        reference: &Field,
        storyline: &Field,
        probability: &Field,
        selector: &Mask,
        edges: &[f64],
        dir: &Path,
        summary: &mut ReportSummary,
    ) -> Result<()> {
        let low = self.cfg.report.low_containment;
        let low_sel = selector.and(&Mask::from_fn(probability.grid().clone(), |c| {
            probability.values()[c] < low
        }))?;
        let from = risk_category_field(reference);
        let to = risk_category_field(storyline);
        let names: Vec<&str> = RiskCategory::ALL.iter().map(|c| c.name()).collect();

        let mut risk = Table::new(["field", "category", "fraction"]);
        for (label, f) in [("reference", &from), ("storyline", &to)] {
            if let Ok(fr) = index_fractions(f, 5, selector) {
                for (i, v) in fr.iter().enumerate() {
                    risk.push([label.to_string(), names[i].to_string(), sig6(*v)]);
                }
            }
        }
        risk.write(&dir.join("risk_fractions.csv"))?;

        summary.low_containment_cells = low_sel.count();
        match report::category_transition_table(&from, &to, 5, &low_sel) {
            Ok(t) => {
                report::transition_table(&t, &names).write(&dir.join("risk_transitions.csv"))?;
                summary.risk_transitions = Some(t);
            }
            Err(Error::UndefinedFraction) => {
                warn!("no low-containment cells; transition table omitted");
                Table::new(["from", "to", "fraction"]).write(&dir.join("risk_transitions.csv"))?;
            }
            Err(e) => return Err(e),
        }
        let h = joint_histogram(reference, storyline, &low_sel, edges, edges)?;
        report::histogram_table(&h).write(&dir.join("joint_histogram.csv"))?;
        summary.histogram_total_weight = Some(h.total_weight);

        if self.cfg.report.maps {
            let pal = Palette::Discrete(report::RISK_COLORS.to_vec());
            report::render_map(
                &from,
                &pal,
                &dir.join("maps").join("heat_index_reference_risk.png"),
            )?;
            report::render_map(&to, &pal, &dir.join("maps").join("heat_index_storyline_risk.png"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Default, Serialize)]
struct ReportSummary {
    extreme_probability: f64,
    exceedance: BTreeMap<String, Exceedance>,
    category_fractions: BTreeMap<String, CategoryFractions>,
    low_containment_cells: usize,
    risk_transitions: Option<TransitionTable>,
    histogram_total_weight: Option<f64>,
}

fn summary_columns(s: &PosteriorSummary) -> Vec<String> {
    let mut out = Vec::with_capacity(16);
    for q in [s.location, s.scale, s.shape, s.threshold] {
        out.extend([sig6(q.q05), sig6(q.median), sig6(q.q95)]);
    }
    out.extend(s.rhat.iter().map(|r| sig6(*r)));
    out.push(sig6(s.mean_acceptance));
    out
}

fn push_fractions(table: &mut Table, var: Variable, f: &CategoryFractions) {
    for c in ConfidenceCategory::ALL {
        table.push([var.as_str().to_string(), c.name().to_string(), sig6(f.get(c))]);
    }
    table.push([var.as_str().to_string(), "missing".to_string(), sig6(f.missing)]);
}

/// Date stems of `<stem>_<variable>.ensx` files, sorted.
fn block_stems(dir: &Path, var: Variable) -> Result<Vec<String>> {
    let suffix = format!("_{var}.ensx");
    let mut stems: Vec<String> = crate::ingest::list_blocks(dir)?
        .iter()
        .filter_map(|p| p.file_name()?.to_str()?.strip_suffix(&suffix).map(str::to_string))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Data(format!("no {var} blocks in {}", dir.display())));
    }
    Ok(stems)
}

/// Posterior draws per cell; cells stored as NaN have none.
pub fn read_posteriors(path: &Path) -> Result<(Grid, Vec<Option<PosteriorSamples>>)> {
    let (header, data) = read_container(path)?;
    header.expect_kind(ContainerKind::Posterior)?;
    let grid = header.grid()?;
    let chains: usize = header
        .attributes
        .get("chains")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Data(format!("{}: missing chains attribute", path.display())))?;
    if header.layers != 3 {
        return Err(Error::Data(format!(
            "{}: expected 3 parameter layers",
            path.display()
        )));
    }
    let (n, draws) = (grid.len(), header.members);
    let cells = (0..n)
        .map(|cell| {
            if draws == 0 || data[cell].is_nan() {
                return Ok(None);
            }
            let at = |layer: usize, d: usize| data[(layer * draws + d) * n + cell] as f64;
            let params = (0..draws)
                .map(|d| GevParams {
                    location: at(0, d),
                    scale: at(1, d),
                    shape: at(2, d),
                })
                .collect();
            PosteriorSamples::from_draws(params, chains).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok((grid, cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("fitting".parse::<Stage>().is_err());
    }

    #[test]
    fn manifest_is_sorted_and_skips_itself() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("b")).unwrap();
        std::fs::write(dir.path().join("b/x.txt"), b"hello").unwrap();
        std::fs::write(dir.path().join("a.txt"), b"").unwrap();
        std::fs::write(dir.path().join(MANIFEST), b"{}").unwrap();
        let m = Manifest::scan(dir.path()).unwrap();
        let paths: Vec<_> = m.files.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, ["a.txt", "b/x.txt"]);
        assert_eq!(
            m.get("b/x.txt").unwrap().sha256,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }
}
