//! End-to-end analyses: load a manifest, plan splits, fit every feature-space
//! subset, then assemble corrected scores, Ω/Φ and significance tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_oasm, sweep_oasm_sigma, OasmSweep};
use crate::matrixio::{load_manifest, save_matrix, Dataset};
use crate::metrics::{clip_and_average, omega, phi, submodel_max, ParticipantSummary, Subset};
use crate::ridge::{banded_search, bands_from_features, Band, BandedSearchConfig, FitResult, RidgeConfig};
use crate::splits::{shuffle_plan, SplitMode, SplitPlan, SplitSpec};
use crate::stats::{chance_level_test, compare_models, TestResult};
use crate::synthgen::{SynthDataset, MANIFEST_FILE};
use crate::NeuralRecording;

/// Name of the derived autocorrelation space.
pub const OASM_SPACE: &str = "OASM";
/// Largest number of declared spaces (63 subset fits).
pub const MAX_SPACES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OasmSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Pick sigma per split mode from the 50-value grid instead.
    #[serde(default)]
    pub sweep: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub better: Vec<String>,
    pub baseline: Vec<String>,
}

fn default_modes() -> Vec<SplitMode> {
    vec![SplitMode::Contiguous]
}

fn default_fdr_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Manifest path, relative to the directory holding the config.
    pub manifest: String,
    pub split: SplitSpec,
    /// Seed for the random choices some split schemes make.
    #[serde(default)]
    pub selection_seed: Option<u64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<SplitMode>,
    /// Drives sample shuffling and the random hyperparameter search.
    #[serde(default)]
    pub seed: u64,
    /// Band groups from the manifest, least complex first. `OASM` may be
    /// listed to place it in the order; otherwise it goes first.
    pub spaces: Vec<String>,
    #[serde(default)]
    pub oasm: Option<OasmSpec>,
    #[serde(default)]
    pub llm_space: Option<String>,
    /// Space lists whose non-empty subsets are all fitted. Defaults to one
    /// family holding every declared space.
    #[serde(default)]
    pub families: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
    #[serde(default)]
    pub ridge: RidgeConfig,
    /// `seed` is taken from the top-level field.
    #[serde(default)]
    pub search: BandedSearchConfig,
    #[serde(default = "default_fdr_level")]
    pub fdr_level: f64,
}

impl AnalysisConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A config matching a generated dataset written next to it.
    pub fn for_dataset(dataset: &SynthDataset) -> Self {
        let spaces = dataset.band_groups();
        let mut comparisons = Vec::new();
        if let Some(llm) = &dataset.llm_space {
            let without: Vec<String> = spaces.iter().filter(|s| *s != llm).cloned().collect();
            if !without.is_empty() {
                comparisons.push(Comparison {
                    better: spaces.clone(),
                    baseline: without,
                });
            }
        }
        Self {
            manifest: MANIFEST_FILE.into(),
            split: dataset.split.clone(),
            selection_seed: None,
            modes: vec![SplitMode::Contiguous, SplitMode::Shuffled],
            seed: 0,
            spaces,
            oasm: Some(OasmSpec {
                sigma: Some(dataset.oasm_sigma),
                sweep: false,
            }),
            llm_space: dataset.llm_space.clone(),
            families: None,
            comparisons,
            ridge: RidgeConfig::default(),
            search: BandedSearchConfig::default(),
            fdr_level: 0.05,
        }
    }

    /// Declared spaces in complexity order, OASM included when configured.
    pub fn declared_spaces(&self) -> Result<Vec<String>> {
        let mut spaces = self.spaces.clone();
        let listed = spaces.iter().any(|s| s == OASM_SPACE);
        match (&self.oasm, listed) {
            (None, true) => {
                return Err(Error::Config("OASM is listed in spaces but no oasm settings are given".into()))
            }
            (Some(_), false) => spaces.insert(0, OASM_SPACE.to_string()),
            _ => {}
        }
        let unique: BTreeSet<&String> = spaces.iter().collect();
        if unique.len() != spaces.len() {
            return Err(Error::Config("spaces contain duplicates".into()));
        }
        if spaces.is_empty() {
            return Err(Error::Config("no feature spaces declared".into()));
        }
        if spaces.len() > MAX_SPACES {
            return Err(Error::Config(format!(
                "{} spaces declared; at most {MAX_SPACES} are supported ({} subset fits)",
                spaces.len(),
                (1u64 << spaces.len()) - 1
            )));
        }
        Ok(spaces)
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        let spaces = self.declared_spaces()?;
        let lookup = |name: &String| -> Result<()> {
            if spaces.contains(name) {
                Ok(())
            } else {
                Err(Error::Config(format!("unknown feature space {name:?}")))
            }
        };
        if let Some(llm) = &self.llm_space {
            lookup(llm)?;
        }
        for family in self.families.iter().flatten() {
            if family.is_empty() {
                return Err(Error::Config("empty family".into()));
            }
            family.iter().try_for_each(lookup)?;
        }
        for c in &self.comparisons {
            if c.better.is_empty() || c.baseline.is_empty() {
                return Err(Error::Config("comparison models need at least one space".into()));
            }
            c.better.iter().chain(&c.baseline).try_for_each(lookup)?;
        }
        if let Some(o) = &self.oasm {
            match (o.sigma, o.sweep) {
                (Some(s), false) if s > 0.0 && s.is_finite() => {}
                (None, true) => {}
                _ => return Err(Error::Config("oasm needs either a positive sigma or sweep: true".into())),
            }
        }
        if self.modes.is_empty() {
            return Err(Error::Config("no split modes".into()));
        }
        if !(self.fdr_level > 0.0 && self.fdr_level < 1.0) {
            return Err(Error::Config("fdr_level must lie in (0, 1)".into()));
        }
        self.ridge.validate()?;
        self.search.validate()
    }

    /// Search settings with the top-level seed applied.
    pub fn search_config(&self) -> BandedSearchConfig {
        BandedSearchConfig {
            seed: self.seed,
            ..self.search.clone()
        }
    }

    fn mask(&self, spaces: &[String], names: &[String]) -> Subset {
        names.iter().fold(Subset(0), |acc, n| {
            acc.with(spaces.iter().position(|s| s == n).expect("validated space"))
        })
    }

    fn family_masks(&self, spaces: &[String]) -> Vec<Subset> {
        match &self.families {
            None => vec![Subset::full(spaces.len())],
            Some(families) => families.iter().map(|f| self.mask(spaces, f)).collect(),
        }
    }
}

/// Best subset per complexity tier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tier {
    pub space: usize,
    pub best: Option<Subset>,
    pub score: Option<f64>,
}

/// For tier `k` (the `k`-th space of `order`), the highest-scoring subset that
/// contains `order[k]` and none of `order[k+1..]`. Ties go to the smaller
/// subset, then to the lower bit pattern.
pub fn layered_best(scores: &BTreeMap<Subset, f64>, order: &[usize]) -> Result<Vec<Tier>> {
    let used = scores.keys().fold(0u32, |acc, s| acc | s.0);
    let mut seen = 0u32;
    for &space in order {
        if space >= 32 || seen & (1 << space) != 0 {
            return Err(Error::InvalidArgument(format!("complexity order repeats or overflows at {space}")));
        }
        seen |= 1 << space;
    }
    if used & !seen != 0 {
        return Err(Error::InvalidArgument("complexity order does not cover every space".into()));
    }
    Ok(order
        .iter()
        .enumerate()
        .map(|(k, &space)| {
            let above: u32 = order[k + 1..].iter().fold(0, |acc, &s| acc | 1 << s);
            let mut best: Option<(Subset, f64)> = None;
            for (&subset, &score) in scores {
                if !subset.contains(space) || subset.0 & above != 0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((b, s)) => score > s || (score == s && subset.len() < b.len()),
                };
                if better {
                    best = Some((subset, score));
                }
            }
            Tier {
                space,
                best: best.map(|b| b.0),
                score: best.map(|b| b.1),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub subset: Subset,
    pub label: String,
    pub mean_r2: f64,
    pub clipped: ParticipantSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectedSummary {
    pub family: String,
    pub r2_star: ParticipantSummary,
    /// Maximum restricted to sub-models containing the LLM space.
    pub r2_star_with_llm: Option<ParticipantSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierSummary {
    pub space: String,
    pub best_model: Option<String>,
    pub clipped_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEntry {
    pub model: String,
    pub summary: Option<ParticipantSummary>,
    pub excluded_units: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestSummary {
    pub name: String,
    pub better: String,
    pub baseline: String,
    pub n_units: usize,
    pub n_rejected: usize,
    pub n_p_below_level: usize,
    pub error: Option<String>,
}

/// Deterministic per-mode results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: SplitMode,
    pub n_outer_folds: usize,
    pub inner_folds: Vec<usize>,
    pub oasm_sigma: Option<f64>,
    pub oasm_sweep: Option<OasmSweep>,
    pub models: Vec<ModelSummary>,
    pub corrected: Vec<CorrectedSummary>,
    pub layered: Vec<TierSummary>,
    pub omega: Vec<RatioEntry>,
    pub phi: Option<RatioEntry>,
    pub tests: Vec<TestSummary>,
}

/// A fitted model: one feature-space subset under one split mode.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub subset: Subset,
    pub label: String,
    pub fit: FitResult,
}

#[derive(Debug, Clone)]
pub struct ModeResult {
    pub summary: ModeSummary,
    pub fits: Vec<ModelFit>,
    pub tests: Vec<(String, Option<TestResult>)>,
    pub seconds: f64,
}

/// Top-level deterministic payload (`summary.json`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub dataset: String,
    pub n_samples: usize,
    pub n_units: usize,
    pub spaces: Vec<String>,
    pub config: AnalysisConfig,
    pub modes: Vec<ModeSummary>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub unit_participants: Vec<i64>,
    pub responses: Array2<f64>,
    pub modes: Vec<ModeResult>,
    pub total_seconds: f64,
}

impl RunReport {
    pub fn mode(&self, mode: SplitMode) -> Option<&ModeResult> {
        self.modes.iter().find(|m| m.summary.mode == mode)
    }
}

impl ModeResult {
    pub fn model(&self, label: &str) -> Option<&ModelFit> {
        self.fits.iter().find(|f| f.label == label)
    }

    pub fn model_summary(&self, label: &str) -> Option<&ModelSummary> {
        self.summary.models.iter().find(|m| m.label == label)
    }

    pub fn omega_for(&self, label: &str) -> Option<&RatioEntry> {
        self.summary.omega.iter().find(|o| o.model == label)
    }
}

/// Loads the config's manifest (relative to `base_dir`) and runs it.
pub fn run_analysis(config: &AnalysisConfig, base_dir: &Path) -> Result<RunReport> {
    config.validate()?;
    let manifest = base_dir.join(&config.manifest);
    let dataset = load_manifest(&manifest)?;
    run_analysis_on(config, &dataset)
}

fn space_band(dataset: &Dataset, space: &str) -> Result<Band> {
    let members = dataset.band(space);
    if members.is_empty() {
        return Err(Error::Config(format!("manifest has no features in band group {space:?}")));
    }
    let mut bands = bands_from_features(&members)?;
    Ok(bands.remove(0))
}

fn for_mode(base: &SplitPlan, mode: SplitMode, seed: u64) -> SplitPlan {
    match mode {
        SplitMode::Contiguous => base.clone(),
        SplitMode::Shuffled => shuffle_plan(base, seed),
    }
}

/// The split plan a run uses for `mode`.
pub fn mode_plan(config: &AnalysisConfig, recording: &NeuralRecording, mode: SplitMode) -> Result<SplitPlan> {
    let base = config.split.plan(recording, config.selection_seed)?;
    Ok(for_mode(&base, mode, config.seed))
}

type OasmChoice = (Option<f64>, Option<OasmSweep>, Option<Band>);

fn oasm_for_plan(config: &AnalysisConfig, recording: &NeuralRecording, plan: &SplitPlan) -> Result<OasmChoice> {
    let (sigma, sweep) = match &config.oasm {
        None => return Ok((None, None, None)),
        Some(OasmSpec { sigma: Some(s), .. }) => (*s, None),
        Some(_) => {
            let sweep = sweep_oasm_sigma(recording, plan, &config.ridge, &config.search_config())?;
            (sweep.best_sigma, Some(sweep))
        }
    };
    let f = build_oasm(recording.n_samples(), &recording.sample_blocks, sigma)?;
    Ok((Some(sigma), sweep, Some(Band::unscaled(OASM_SPACE, f.data))))
}

/// Fits a single model made of the named spaces. Returns the fit and the
/// OASM width used, if any.
pub fn fit_model(
    config: &AnalysisConfig,
    dataset: &Dataset,
    model: &[String],
    mode: SplitMode,
) -> Result<(FitResult, Option<f64>)> {
    config.validate()?;
    let spaces = config.declared_spaces()?;
    if model.is_empty() {
        return Err(Error::Config("model needs at least one space".into()));
    }
    if let Some(unknown) = model.iter().find(|m| !spaces.contains(m)) {
        return Err(Error::Config(format!("unknown feature space {unknown:?}")));
    }
    let recording = &dataset.recording;
    let plan = mode_plan(config, recording, mode)?;
    let uses_oasm = model.iter().any(|m| m == OASM_SPACE);
    let (sigma, _, oasm_band) = if uses_oasm {
        oasm_for_plan(config, recording, &plan)?
    } else {
        (None, None, None)
    };
    let mut bands = Vec::with_capacity(model.len());
    // Bands follow the declared complexity order.
    for s in spaces.iter().filter(|s| model.contains(s)) {
        bands.push(if s == OASM_SPACE {
            oasm_band.clone().expect("OASM band exists when declared")
        } else {
            space_band(dataset, s)?
        });
    }
    let fit = banded_search(&bands, &recording.responses, &plan, &config.ridge, &config.search_config())?;
    Ok((fit, sigma))
}

pub fn run_analysis_on(config: &AnalysisConfig, dataset: &Dataset) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let spaces = config.declared_spaces()?;
    let recording = &dataset.recording;

    // Fixed bands are assembled once; OASM depends on the mode when swept.
    let mut fixed: Vec<Option<Band>> = Vec::with_capacity(spaces.len());
    for s in &spaces {
        fixed.push(if s == OASM_SPACE { None } else { Some(space_band(dataset, s)?) });
    }

    let families = config.family_masks(&spaces);
    let mut subsets: BTreeSet<Subset> = BTreeSet::new();
    for f in &families {
        subsets.extend(f.nonempty_subsets());
    }
    let subsets: Vec<Subset> = subsets.into_iter().collect();
    let base_plan = config.split.plan(recording, config.selection_seed)?;
    let search = config.search_config();

    let mut modes = Vec::with_capacity(config.modes.len());
    for &mode in &config.modes {
        let mode_start = Instant::now();
        let plan = for_mode(&base_plan, mode, config.seed);
        let (oasm_sigma, oasm_sweep, oasm_band) = oasm_for_plan(config, recording, &plan)?;
        let band_of = |i: usize| -> Band {
            fixed[i]
                .clone()
                .or_else(|| oasm_band.clone())
                .expect("OASM band exists when declared")
        };
        let fits: Vec<ModelFit> = subsets
            .par_iter()
            .map(|&subset| {
                let bands: Vec<Band> = subset.spaces().into_iter().map(band_of).collect();
                let fit = banded_search(&bands, &recording.responses, &plan, &config.ridge, &search)?;
                Ok(ModelFit {
                    subset,
                    label: subset.label(&spaces),
                    fit,
                })
            })
            .collect::<Result<_>>()?;
        let mut result = summarize_mode(config, &spaces, &families, recording.unit_participants.as_slice(), &recording.responses, mode, &plan, fits)?;
        result.summary.oasm_sigma = oasm_sigma;
        result.summary.oasm_sweep = oasm_sweep;
        result.seconds = mode_start.elapsed().as_secs_f64();
        modes.push(result);
    }

    Ok(RunReport {
        summary: RunSummary {
            dataset: dataset.manifest.dataset_name.clone(),
            n_samples: recording.n_samples(),
            n_units: recording.n_units(),
            spaces,
            config: config.clone(),
            modes: modes.iter().map(|m| m.summary.clone()).collect(),
        },
        unit_participants: recording.unit_participants.clone(),
        responses: recording.responses.clone(),
        modes,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

fn ratio_entry(model: String, result: Result<crate::metrics::RatioSummary>) -> RatioEntry {
    match result {
        Ok(r) => RatioEntry {
            model,
            excluded_units: r.per_unit.iter().filter(|v| v.is_none()).count(),
            summary: Some(r.summary),
            error: None,
        },
        Err(e) => RatioEntry {
            model,
            summary: None,
            excluded_units: 0,
            error: Some(e.to_string()),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn summarize_mode(
    config: &AnalysisConfig,
    spaces: &[String],
    families: &[Subset],
    participants: &[i64],
    responses: &Array2<f64>,
    mode: SplitMode,
    plan: &SplitPlan,
    fits: Vec<ModelFit>,
) -> Result<ModeResult> {
    let table: BTreeMap<Subset, Vec<f64>> = fits.iter().map(|f| (f.subset, f.fit.test_r2.to_vec())).collect();
    let llm = config
        .llm_space
        .as_ref()
        .map(|name| spaces.iter().position(|s| s == name).expect("validated"));

    let mut models = Vec::with_capacity(fits.len());
    let mut clipped_means = BTreeMap::new();
    for f in &fits {
        let r2 = f.fit.test_r2.as_slice().expect("contiguous");
        let clipped = clip_and_average(r2, participants)?;
        clipped_means.insert(f.subset, clipped.mean);
        models.push(ModelSummary {
            subset: f.subset,
            label: f.label.clone(),
            mean_r2: r2.iter().sum::<f64>() / r2.len() as f64,
            clipped,
        });
    }

    let mut corrected = Vec::new();
    for &family in families {
        let star = submodel_max(&table, family, None)?;
        let with_llm = match llm {
            Some(l) if family.contains(l) => Some(clip_and_average(&submodel_max(&table, family, Some(l))?, participants)?),
            _ => None,
        };
        corrected.push(CorrectedSummary {
            family: family.label(spaces),
            r2_star: clip_and_average(&star, participants)?,
            r2_star_with_llm: with_llm,
        });
    }

    let order: Vec<usize> = (0..spaces.len()).collect();
    let layered = layered_best(&clipped_means, &order)?
        .into_iter()
        .map(|t| TierSummary {
            space: spaces[t.space].clone(),
            best_model: t.best.map(|b| b.label(spaces)),
            clipped_mean: t.score,
        })
        .collect();

    let covered = |s: Subset| s.nonempty_subsets().iter().all(|x| table.contains_key(x));
    let mut omegas = Vec::new();
    let mut phi_entry = None;
    if let Some(l) = llm {
        let llm_mask = Subset::single(l);
        let union = families.iter().fold(Subset(0), |acc, f| Subset(acc.0 | f.0));
        let r2_llm = &table[&llm_mask];
        for m in Subset(union.0 & !llm_mask.0).nonempty_subsets() {
            let joint = Subset(m.0 | llm_mask.0);
            if !covered(joint) {
                continue;
            }
            let m_star = submodel_max(&table, m, None)?;
            let joint_star = submodel_max(&table, joint, None)?;
            omegas.push(ratio_entry(m.label(spaces), omega(&m_star, &joint_star, r2_llm, participants)));
        }
        if let Some(o) = spaces.iter().position(|s| s == OASM_SPACE) {
            let joint = Subset::single(o).with(l);
            if covered(joint) {
                let joint_star = submodel_max(&table, joint, None)?;
                phi_entry = Some(ratio_entry(
                    joint.label(spaces),
                    phi(&joint_star, &table[&Subset::single(o)], participants),
                ));
            }
        }
    }

    let mut tests = Vec::new();
    let mut summaries = Vec::new();
    let mut record = |name: String, better: String, baseline: String, outcome: Result<TestResult>| {
        let (summary, result) = match outcome {
            Ok(r) => (
                TestSummary {
                    name: name.clone(),
                    better,
                    baseline,
                    n_units: r.p.len(),
                    n_rejected: r.n_rejected(),
                    n_p_below_level: r.p.iter().filter(|&&p| p < r.level).count(),
                    error: None,
                },
                Some(r),
            ),
            Err(e) => (
                TestSummary {
                    name: name.clone(),
                    better,
                    baseline,
                    n_units: participants.len(),
                    n_rejected: 0,
                    n_p_below_level: 0,
                    error: Some(e.to_string()),
                },
                None,
            ),
        };
        summaries.push(summary);
        tests.push((name, result));
    };
    for f in &fits {
        record(
            format!("chance_{}", file_label(&f.label)),
            f.label.clone(),
            "intercept".into(),
            chance_level_test(
                responses,
                &f.fit.test_predictions,
                &f.fit.intercept_predictions,
                participants,
                config.fdr_level,
            ),
        );
    }
    for c in &config.comparisons {
        let better = config.mask(spaces, &c.better);
        let baseline = config.mask(spaces, &c.baseline);
        let find = |s: Subset| {
            fits.iter()
                .find(|f| f.subset == s)
                .ok_or_else(|| Error::Config(format!("comparison model {} is not in any family", s.label(spaces))))
        };
        let (b, a) = (find(better)?, find(baseline)?);
        record(
            format!("{}_vs_{}", file_label(&b.label), file_label(&a.label)),
            b.label.clone(),
            a.label.clone(),
            compare_models(
                responses,
                &b.fit.test_predictions,
                &a.fit.test_predictions,
                participants,
                config.fdr_level,
            ),
        );
    }

    Ok(ModeResult {
        summary: ModeSummary {
            mode,
            n_outer_folds: plan.n_outer(),
            inner_folds: plan.inner_counts(),
            oasm_sigma: None,
            oasm_sweep: None,
            models,
            corrected,
            layered,
            omega: omegas,
            phi: phi_entry,
            tests: summaries,
        },
        fits,
        tests,
        seconds: 0.0,
    })
}

/// Model label made safe for file names (`SP+SL` becomes `SP-SL`).
pub fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
        .collect()
}

#[derive(Debug, Serialize)]
struct Timings {
    total_seconds: f64,
    modes: BTreeMap<String, f64>,
}

/// Writes the report directory:
///
/// - `summary.json`: deterministic results
/// - `timings.json`: wall-clock times
/// - `r2_<mode>.csv`: `unit,participant,subset,r2`
/// - `tests_<mode>_<name>.csv`: per-unit test tables
/// - `predictions/<mode>/<model>.bbsm`, `intercept.bbsm`: pooled test predictions
/// - `fits/<mode>/<model>.json`: chosen hyperparameters
pub fn write_report(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: String| -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put(dir.join("summary.json"), serde_json::to_string_pretty(&report.summary)? + "\n")?;
    let timings = Timings {
        total_seconds: report.total_seconds,
        modes: report.modes.iter().map(|m| (m.summary.mode.as_str().to_string(), m.seconds)).collect(),
    };
    put(dir.join("timings.json"), serde_json::to_string_pretty(&timings)? + "\n")?;

    for m in &report.modes {
        let mode = m.summary.mode.as_str();
        let mut csv = String::from("unit,participant,subset,r2\n");
        for f in &m.fits {
            for (u, r) in f.fit.test_r2.iter().enumerate() {
                csv.push_str(&format!("{u},{},{},{r}\n", report.unit_participants[u], f.label));
            }
        }
        put(dir.join(format!("r2_{mode}.csv")), csv)?;
        for (name, result) in &m.tests {
            if let Some(r) = result {
                put(dir.join(format!("tests_{mode}_{name}.csv")), r.to_csv())?;
            }
        }
        for f in &m.fits {
            let stem = file_label(&f.label);
            put(
                dir.join("fits").join(mode).join(format!("{stem}.json")),
                serde_json::to_string_pretty(&f.fit.record())? + "\n",
            )?;
        }
    }
    // Matrix dumps go through the binary writer.
    for m in &report.modes {
        let mode = m.summary.mode.as_str();
        let pred_dir = dir.join("predictions").join(mode);
        fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
        for f in &m.fits {
            let path = pred_dir.join(format!("{}.bbsm", file_label(&f.label)));
            save_matrix(&path, &f.fit.test_predictions)?;
            written.push(path);
        }
        if let Some(first) = m.fits.first() {
            let path = pred_dir.join("intercept.bbsm");
            save_matrix(&path, &first.fit.intercept_predictions)?;
            written.push(path);
        }
    }
    Ok(written)
}
