use std::collections::BTreeMap;
use std::sync::OnceLock;

use faer::Mat;
use ndarray::{concatenate, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{center, column_means, gram, SpectralRidge};
use super::{Band, BandedSearchConfig, RidgeConfig};
use crate::error::{Error, Result};
use crate::features::{argmax_first, zscore_fit_apply};
use crate::metrics::r2_oos;
use crate::splits::SplitPlan;

/// All scaling vectors that keep a non-empty subset of bands: uniform weight
/// over the subset, zero elsewhere. Subsets are enumerated by bitmask, so the
/// single-band vectors come first and the full set last.
pub fn enumerate_masks(n_bands: usize) -> Result<Vec<Vec<f64>>> {
    if !(1..=16).contains(&n_bands) {
        return Err(Error::InvalidArgument(format!(
            "mask enumeration supports 1 to 16 bands, got {n_bands}"
        )));
    }
    Ok((1u32..1 << n_bands)
        .map(|mask| {
            let size = mask.count_ones() as f64;
            (0..n_bands)
                .map(|b| if mask & (1 << b) != 0 { 1.0 / size } else { 0.0 })
                .collect()
        })
        .collect())
}

/// Dirichlet draw for random-search iteration `iteration`. Each iteration has
/// its own ChaCha stream, so the sequence does not depend on scheduling.
fn dirichlet_candidate(cfg: &BandedSearchConfig, n_bands: usize, iteration: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(iteration as u64);
    let gamma = Gamma::new(cfg.dirichlet_concentration, 1.0).expect("validated concentration");
    let draws: Vec<f64> = (0..n_bands).map(|_| gamma.sample(&mut rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.into_iter().map(|d| d / total).collect()
    } else {
        vec![1.0 / n_bands as f64; n_bands]
    }
}

/// Per-band standardized design for one train/evaluation split. Band Gram
/// matrices are computed on first use and shared by every candidate.
struct FoldDesign {
    z_train: Vec<Array2<f64>>,
    z_eval: Vec<Array2<f64>>,
    y_train: Array2<f64>,
    grams: Vec<OnceLock<(Mat<f64>, Mat<f64>)>>,
}

impl FoldDesign {
    fn new(bands: &[Band], responses: &Array2<f64>, train: &[usize], eval: &[usize]) -> Result<Self> {
        let mut z_train = Vec::with_capacity(bands.len());
        let mut z_eval = Vec::with_capacity(bands.len());
        for band in bands {
            let x_train = band.data.select(Axis(0), train);
            let x_eval = band.data.select(Axis(0), eval);
            if band.standardize {
                let (zt, mut ze, _) = zscore_fit_apply(&x_train, &[&x_eval])?;
                z_train.push(zt);
                z_eval.push(ze.pop().expect("one evaluation matrix"));
            } else {
                z_train.push(x_train);
                z_eval.push(x_eval);
            }
        }
        Ok(Self {
            z_train,
            z_eval,
            y_train: responses.select(Axis(0), train),
            grams: (0..bands.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    fn n_train(&self) -> usize {
        self.y_train.nrows()
    }

    fn band_gram(&self, b: usize) -> &(Mat<f64>, Mat<f64>) {
        self.grams[b].get_or_init(|| {
            let means = column_means(&self.z_train[b]);
            let xc = center(&self.z_train[b], &means);
            let xe = center(&self.z_eval[b], &means);
            (gram(&xc, &xc), gram(&xe, &xc))
        })
    }

    fn solver(&self, gamma: &[f64]) -> Result<SpectralRidge> {
        let active: Vec<usize> = (0..gamma.len()).filter(|&b| gamma[b] > 0.0).collect();
        let dims: usize = active.iter().map(|&b| self.z_train[b].ncols()).sum();
        if dims <= self.n_train() {
            let scale = |mats: &[Array2<f64>]| -> Array2<f64> {
                let scaled: Vec<Array2<f64>> = active.iter().map(|&b| &mats[b] * gamma[b]).collect();
                let views: Vec<_> = scaled.iter().map(|m| m.view()).collect();
                concatenate(Axis(1), &views).expect("bands share row counts")
            };
            SpectralRidge::from_design(&scale(&self.z_train), &self.y_train, &scale(&self.z_eval))
        } else {
            let n = self.n_train();
            let n_eval = self.z_eval[0].nrows();
            let parts: Vec<(f64, &(Mat<f64>, Mat<f64>))> = active
                .iter()
                .map(|&b| (gamma[b] * gamma[b], self.band_gram(b)))
                .collect();
            let k_train = Mat::from_fn(n, n, |i, j| {
                parts.iter().fold(0.0, |acc, (w, (k, _))| acc + w * k[(i, j)])
            });
            let k_eval = Mat::from_fn(n_eval, n, |i, j| {
                parts.iter().fold(0.0, |acc, (w, (_, k))| acc + w * k[(i, j)])
            });
            SpectralRidge::from_kernels(&k_train, &k_eval, &self.y_train)
        }
    }
}

struct InnerSplit {
    design: FoldDesign,
    y_val: Array2<f64>,
    /// Offset of this fold's rows in the pooled validation block.
    offset: usize,
}

/// Pooled validation scores of one candidate: for each unit, the best penalty
/// and its R².
struct CandidateScore {
    alpha_index: Vec<usize>,
    r2: Vec<f64>,
    /// predictions[fold][alpha]
    predictions: Vec<Vec<Array2<f64>>>,
}

fn pooled_r2(sse_model: f64, sse_intercept: f64) -> f64 {
    if sse_intercept > 0.0 {
        1.0 - sse_model / sse_intercept
    } else {
        f64::NEG_INFINITY
    }
}

fn score_candidate(
    inner: &[InnerSplit],
    sse_intercept: &Array1<f64>,
    gamma: &[f64],
    alphas: &[f64],
) -> Result<CandidateScore> {
    let units = sse_intercept.len();
    let mut sse = Array2::<f64>::zeros((alphas.len(), units));
    let mut predictions = Vec::with_capacity(inner.len());
    for split in inner {
        let solver = split.design.solver(gamma)?;
        let mut per_alpha = Vec::with_capacity(alphas.len());
        for (a, &alpha) in alphas.iter().enumerate() {
            let pred = solver.predict(alpha);
            for (u, (pc, yc)) in pred.columns().into_iter().zip(split.y_val.columns()).enumerate() {
                sse[[a, u]] += pc.iter().zip(yc.iter()).map(|(p, y)| (y - p) * (y - p)).sum::<f64>();
            }
            per_alpha.push(pred);
        }
        predictions.push(per_alpha);
    }
    let mut alpha_index = vec![0; units];
    let mut r2 = vec![f64::NEG_INFINITY; units];
    for u in 0..units {
        let scores: Vec<f64> = (0..alphas.len()).map(|a| pooled_r2(sse[[a, u]], sse_intercept[u])).collect();
        // Lower penalty wins ties.
        let best = argmax_first(&scores);
        alpha_index[u] = best;
        r2[u] = scores[best];
    }
    Ok(CandidateScore {
        alpha_index,
        r2,
        predictions,
    })
}

/// Random-search bookkeeping for one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub mask_candidates: usize,
    pub random_iterations: usize,
    pub early_stopped: bool,
    /// Mean over units of the best-so-far validation R², after each candidate.
    pub mean_best_history: Vec<f64>,
}

/// Search outcome for one outer fold.
#[derive(Debug, Clone)]
pub struct OuterFit {
    pub test: Vec<usize>,
    /// Chosen scaling vector per unit.
    pub gamma: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    /// Pooled inner-validation R² of the chosen hyperparameters, per unit.
    pub validation_r2: Vec<f64>,
    /// Sample indices of the pooled validation rows, in row order.
    pub validation_indices: Vec<usize>,
    pub validation_predictions: Array2<f64>,
    pub trace: SearchTrace,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub band_names: Vec<String>,
    pub alphas: Vec<f64>,
    pub outer: Vec<OuterFit>,
    /// Outer-test predictions pooled over folds, in sample order.
    pub test_predictions: Array2<f64>,
    /// Training-mean predictions of the intercept-only model, same layout.
    pub intercept_predictions: Array2<f64>,
    /// Pooled out-of-sample R² per unit.
    pub test_r2: Array1<f64>,
}

impl FitResult {
    /// Mean over outer folds and units of the chosen validation R².
    pub fn mean_validation_r2(&self) -> f64 {
        let per_fold: Vec<f64> = self
            .outer
            .iter()
            .map(|o| o.validation_r2.iter().sum::<f64>() / o.validation_r2.len() as f64)
            .collect();
        per_fold.iter().sum::<f64>() / per_fold.len() as f64
    }

    pub fn record(&self) -> FitRecord {
        FitRecord {
            band_names: self.band_names.clone(),
            alphas: self.alphas.clone(),
            test_r2: self.test_r2.to_vec(),
            outer_folds: self
                .outer
                .iter()
                .map(|o| OuterFitRecord {
                    test: o.test.clone(),
                    gamma: o.gamma.clone(),
                    alpha: o.alpha.clone(),
                    validation_r2: o.validation_r2.clone(),
                    trace: o.trace.clone(),
                })
                .collect(),
        }
    }
}

/// Serializable summary of a [`FitResult`]; predictions travel separately as
/// matrix files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub band_names: Vec<String>,
    pub alphas: Vec<f64>,
    pub test_r2: Vec<f64>,
    pub outer_folds: Vec<OuterFitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFitRecord {
    pub test: Vec<usize>,
    pub gamma: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub validation_r2: Vec<f64>,
    pub trace: SearchTrace,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn search_outer_fold(
    bands: &[Band],
    responses: &Array2<f64>,
    plan: &SplitPlan,
    outer_index: usize,
    ridge: &RidgeConfig,
    cfg: &BandedSearchConfig,
) -> Result<(OuterFit, Array2<f64>)> {
    let outer = &plan.outer_folds[outer_index];
    if outer.inner_folds.is_empty() {
        return Err(Error::Data(format!("outer fold {outer_index} has no inner folds")));
    }
    let units = responses.ncols();
    let alphas = &ridge.alphas;

    let mut inner = Vec::with_capacity(outer.inner_folds.len());
    let mut validation_indices = Vec::new();
    let mut sse_intercept = Array1::<f64>::zeros(units);
    for fold in &outer.inner_folds {
        let design = FoldDesign::new(bands, responses, &fold.train, &fold.validation)?;
        let y_val = responses.select(Axis(0), &fold.validation);
        let train_mean = column_means(&design.y_train);
        for (u, column) in y_val.columns().into_iter().enumerate() {
            sse_intercept[u] += column.iter().map(|y| (y - train_mean[u]).powi(2)).sum::<f64>();
        }
        inner.push(InnerSplit {
            design,
            y_val,
            offset: validation_indices.len(),
        });
        validation_indices.extend_from_slice(&fold.validation);
    }

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let mut best_candidate = vec![0usize; units];
    let mut best_alpha = vec![0usize; units];
    let mut best_r2 = vec![f64::NEG_INFINITY; units];
    let mut validation_predictions = Array2::<f64>::zeros((validation_indices.len(), units));
    let mut history = Vec::new();

    let mut consider = |gamma: Vec<f64>,
                        candidates: &mut Vec<Vec<f64>>,
                        history: &mut Vec<f64>|
     -> Result<f64> {
        let score = score_candidate(&inner, &sse_intercept, &gamma, alphas)?;
        let index = candidates.len();
        candidates.push(gamma);
        for u in 0..units {
            // Strict improvement: earlier candidates win ties.
            if score.r2[u] > best_r2[u] {
                best_r2[u] = score.r2[u];
                best_candidate[u] = index;
                best_alpha[u] = score.alpha_index[u];
                for (split, preds) in inner.iter().zip(&score.predictions) {
                    let column = preds[score.alpha_index[u]].column(u);
                    for (r, &v) in column.iter().enumerate() {
                        validation_predictions[[split.offset + r, u]] = v;
                    }
                }
            }
        }
        let current = mean(&best_r2);
        history.push(current);
        Ok(current)
    };

    let masks = enumerate_masks(bands.len())?;
    let mask_candidates = masks.len();
    for gamma in masks {
        consider(gamma, &mut candidates, &mut history)?;
    }

    let mut random_iterations = 0;
    let mut early_stopped = false;
    if bands.len() > 1 {
        let mut anchor = *history.last().expect("at least one mask");
        let mut stale = 0;
        for iteration in 0..cfg.max_iters {
            let gamma = dirichlet_candidate(cfg, bands.len(), iteration);
            let current = consider(gamma, &mut candidates, &mut history)?;
            random_iterations = iteration + 1;
            if current > anchor + cfg.min_improvement {
                anchor = current;
                stale = 0;
            } else {
                stale += 1;
            }
            if stale >= cfg.patience {
                early_stopped = true;
                break;
            }
        }
    }

    // Refit every unit's winner on all non-test samples and predict the test set.
    let non_test = outer.non_test(plan.n_samples);
    let design = FoldDesign::new(bands, responses, &non_test, &outer.test)?;
    let mut test_predictions = Array2::<f64>::zeros((outer.test.len(), units));
    let mut by_candidate: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for u in 0..units {
        by_candidate.entry(best_candidate[u]).or_default().push(u);
    }
    for (candidate, members) in by_candidate {
        let solver = design.solver(&candidates[candidate])?;
        let mut by_alpha: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &u in &members {
            by_alpha.entry(best_alpha[u]).or_default().push(u);
        }
        for (a, units_at_alpha) in by_alpha {
            let pred = solver.predict(alphas[a]);
            for u in units_at_alpha {
                test_predictions.column_mut(u).assign(&pred.column(u));
            }
        }
    }

    let fit = OuterFit {
        test: outer.test.clone(),
        gamma: best_candidate.iter().map(|&c| candidates[c].clone()).collect(),
        alpha: best_alpha.iter().map(|&a| alphas[a]).collect(),
        validation_r2: best_r2,
        validation_indices,
        validation_predictions,
        trace: SearchTrace {
            mask_candidates,
            random_iterations,
            early_stopped,
            mean_best_history: history,
        },
    };
    Ok((fit, test_predictions))
}

/// Nested-CV banded ridge fit.
///
/// For each outer fold every candidate scaling vector (all subset masks, then
/// Dirichlet draws until the mean best validation R² stalls) is fitted over
/// the whole penalty grid on each inner split. Each unit keeps the candidate
/// and penalty with the best pooled validation R², which is then refitted on
/// all non-test samples to predict the outer test fold.
pub fn banded_search(
    bands: &[Band],
    responses: &Array2<f64>,
    plan: &SplitPlan,
    ridge: &RidgeConfig,
    cfg: &BandedSearchConfig,
) -> Result<FitResult> {
    if bands.is_empty() {
        return Err(Error::InvalidArgument("banded search needs at least one band".into()));
    }
    ridge.validate()?;
    cfg.validate()?;
    let n = responses.nrows();
    if plan.n_samples != n {
        return Err(Error::RowMismatch {
            what: "split plan".into(),
            expected: n,
            found: plan.n_samples,
        });
    }
    for band in bands {
        if band.data.nrows() != n {
            return Err(Error::RowMismatch {
                what: format!("band {:?}", band.name),
                expected: n,
                found: band.data.nrows(),
            });
        }
    }
    if responses.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("responses contain non-finite values".into()));
    }
    plan.validate(None)?;

    let fits: Vec<(OuterFit, Array2<f64>)> = (0..plan.n_outer())
        .into_par_iter()
        .map(|o| search_outer_fold(bands, responses, plan, o, ridge, cfg))
        .collect::<Result<_>>()?;

    let units = responses.ncols();
    let mut test_predictions = Array2::<f64>::zeros((n, units));
    let mut intercept_predictions = Array2::<f64>::zeros((n, units));
    for (outer_fold, (fit, preds)) in plan.outer_folds.iter().zip(&fits) {
        let non_test = outer_fold.non_test(n);
        let train_mean = column_means(&responses.select(Axis(0), &non_test));
        for (r, &sample) in fit.test.iter().enumerate() {
            test_predictions.row_mut(sample).assign(&preds.row(r));
            intercept_predictions.row_mut(sample).assign(&train_mean);
        }
    }
    let test_r2 = r2_oos(responses, &test_predictions, &intercept_predictions)?;
    Ok(FitResult {
        band_names: bands.iter().map(|b| b.name.clone()).collect(),
        alphas: ridge.alphas.clone(),
        outer: fits.into_iter().map(|(fit, _)| fit).collect(),
        test_predictions,
        intercept_predictions,
        test_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSelection {
    pub best_index: usize,
    /// Mean clipped test R² of each candidate.
    pub scores: Vec<f64>,
}

/// Fits every candidate feature set and returns the one with the highest mean
/// (non-negative clipped) test R² across units. Ties go to the lower index.
pub fn select_best_layer(
    candidates: &[Vec<Band>],
    responses: &Array2<f64>,
    plan: &SplitPlan,
    ridge: &RidgeConfig,
    cfg: &BandedSearchConfig,
) -> Result<LayerSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate layers".into()));
    }
    let scores = candidates
        .iter()
        .map(|bands| {
            let fit = banded_search(bands, responses, plan, ridge, cfg)?;
            Ok(mean(&fit.test_r2.mapv(|r| r.max(0.0)).to_vec()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(LayerSelection {
        best_index: argmax_first(&scores),
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedAveragedSelection {
    pub per_seed: Vec<LayerSelection>,
    /// Mean over seeds of each seed's best-layer score.
    pub mean_best_score: f64,
}

/// Best-layer selection repeated for several randomly initialized models (one
/// candidate list per seed).
pub fn select_best_layer_seeds(
    per_seed: &[Vec<Vec<Band>>],
    responses: &Array2<f64>,
    plan: &SplitPlan,
    ridge: &RidgeConfig,
    cfg: &BandedSearchConfig,
) -> Result<SeedAveragedSelection> {
    if per_seed.is_empty() {
        return Err(Error::InvalidArgument("no seeds".into()));
    }
    let per_seed = per_seed
        .iter()
        .map(|candidates| select_best_layer(candidates, responses, plan, ridge, cfg))
        .collect::<Result<Vec<_>>>()?;
    let best: Vec<f64> = per_seed.iter().map(|s| s.scores[s.best_index]).collect();
    Ok(SeedAveragedSelection {
        mean_best_score: mean(&best),
        per_seed,
    })
}
