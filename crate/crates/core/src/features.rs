//! Hand-built feature spaces and the pooling / standardization steps applied
//! to externally computed embeddings.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::recording::{block_runs, check_contiguous, NeuralRecording};
use crate::ridge::{banded_search, Band, BandedSearchConfig, RidgeConfig};
use crate::splits::SplitPlan;

/// Named sample × dimension design matrix tagged with the band it is
/// penalized with.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub name: String,
    pub data: Array2<f64>,
    pub band_group: String,
}

impl FeatureSpace {
    pub fn new(name: &str, data: Array2<f64>, band_group: &str) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "feature space {name:?} is empty ({}x{})",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "feature space {name:?} has non-finite values"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            data,
            band_group: band_group.to_string(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }
}

/// Sum-normalized Gaussian taps for offsets `-radius..=radius`, with
/// `radius = ceil(4 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gaussian width must be positive, got {sigma}"
        )));
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / total).collect())
}

/// Convolves `signal` with `kernel` (odd length, centred), treating everything
/// outside the slice as zero.
fn convolve_zero_padded(signal: &[f64], kernel: &[f64], out: &mut [f64]) {
    let radius = (kernel.len() / 2) as isize;
    let n = signal.len() as isize;
    for (i, slot) in out.iter_mut().enumerate() {
        let i = i as isize;
        let lo = (i - radius).max(0);
        let hi = (i + radius).min(n - 1);
        let mut acc = 0.0;
        for j in lo..=hi {
            acc += kernel[(i - j + radius) as usize] * signal[j as usize];
        }
        *slot = acc;
    }
}

/// Filters every column of `matrix` along the sample axis, independently
/// within each block and with zero padding at block edges. Values never leak
/// across a block boundary.
pub fn smooth_within_blocks(
    matrix: &Array2<f64>,
    block_ids: &[i64],
    sigma: f64,
) -> Result<Array2<f64>> {
    if block_ids.len() != matrix.nrows() {
        return Err(Error::RowMismatch {
            what: "block ids".into(),
            expected: matrix.nrows(),
            found: block_ids.len(),
        });
    }
    check_contiguous(block_ids)?;
    let kernel = gaussian_kernel(sigma)?;
    let mut out = Array2::zeros(matrix.dim());
    let mut column = Vec::new();
    let mut filtered = Vec::new();
    for (_, range) in block_runs(block_ids) {
        for c in 0..matrix.ncols() {
            column.clear();
            column.extend(range.clone().map(|r| matrix[[r, c]]));
            filtered.resize(column.len(), 0.0);
            convolve_zero_padded(&column, &kernel, &mut filtered);
            for (offset, &v) in filtered.iter().enumerate() {
                out[[range.start + offset, c]] = v;
            }
        }
    }
    Ok(out)
}

/// The orthogonal autocorrelated sequences model: an `n x n` identity whose
/// columns are Gaussian-smoothed within their own block.
///
/// Rows of samples in different blocks have disjoint support, so their dot
/// product is exactly zero.
pub fn build_oasm(n_samples: usize, block_ids: &[i64], sigma: f64) -> Result<FeatureSpace> {
    if block_ids.len() != n_samples {
        return Err(Error::RowMismatch {
            what: "block ids".into(),
            expected: n_samples,
            found: block_ids.len(),
        });
    }
    check_contiguous(block_ids)?;
    let kernel = gaussian_kernel(sigma)?;
    let radius = kernel.len() / 2;
    let mut data = Array2::zeros((n_samples, n_samples));
    // The filtered unit impulse at j is just the kernel centred on j, cut at
    // the block edges.
    for (_, range) in block_runs(block_ids) {
        for j in range.clone() {
            let lo = j.saturating_sub(radius).max(range.start);
            let hi = (j + radius).min(range.end - 1);
            for i in lo..=hi {
                data[[i, j]] = kernel[i + radius - j];
            }
        }
    }
    FeatureSpace::new("OASM", data, "OASM")
}

/// The sigma grid searched for OASM: 50 evenly spaced values, 0.1 to 5.0.
pub fn oasm_sigma_grid() -> Vec<f64> {
    (1..=50).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OasmSweep {
    pub sigmas: Vec<f64>,
    /// Mean validation R² (over outer folds and units) for each sigma.
    pub scores: Vec<f64>,
    pub best_index: usize,
    pub best_sigma: f64,
}

/// Fits OASM at every grid sigma and keeps the one with the highest mean
/// validation R². Ties go to the smaller sigma.
pub fn sweep_oasm_sigma(
    recording: &NeuralRecording,
    plan: &SplitPlan,
    ridge: &RidgeConfig,
    search: &BandedSearchConfig,
) -> Result<OasmSweep> {
    sweep_oasm_sigma_over(recording, plan, ridge, search, &oasm_sigma_grid())
}

pub fn sweep_oasm_sigma_over(
    recording: &NeuralRecording,
    plan: &SplitPlan,
    ridge: &RidgeConfig,
    search: &BandedSearchConfig,
    sigmas: &[f64],
) -> Result<OasmSweep> {
    if sigmas.is_empty() {
        return Err(Error::InvalidArgument("empty sigma grid".into()));
    }
    let mut scores = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let oasm = build_oasm(recording.n_samples(), &recording.sample_blocks, sigma)?;
        let band = Band::unscaled("OASM", oasm.data);
        let fit = banded_search(&[band], &recording.responses, plan, ridge, search)?;
        scores.push(fit.mean_validation_r2());
    }
    let best_index = argmax_first(&scores);
    Ok(OasmSweep {
        sigmas: sigmas.to_vec(),
        best_sigma: sigmas[best_index],
        best_index,
        scores,
    })
}

/// Index of the largest value; the earliest one wins ties.
pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One-hot sentence position (4 columns) for consecutive passages of the given
/// sentence counts.
pub fn build_sentence_position(passage_lengths: &[usize]) -> Result<FeatureSpace> {
    const WIDTH: usize = 4;
    if let Some(&bad) = passage_lengths.iter().find(|&&l| l == 0 || l > WIDTH) {
        return Err(Error::InvalidArgument(format!(
            "passages must have 1 to {WIDTH} sentences, got {bad}"
        )));
    }
    let n: usize = passage_lengths.iter().sum();
    let mut data = Array2::zeros((n, WIDTH));
    let mut row = 0;
    for &len in passage_lengths {
        for position in 0..len {
            data[[row, position]] = 1.0;
            row += 1;
        }
    }
    FeatureSpace::new("SP", data, "SP+SL")
}

pub fn build_sentence_length(word_counts: &[i64]) -> Result<FeatureSpace> {
    if let Some(&bad) = word_counts.iter().find(|&&c| c < 1) {
        return Err(Error::InvalidArgument(format!(
            "sentence lengths must be at least 1, got {bad}"
        )));
    }
    let data = Array2::from_shape_fn((word_counts.len(), 1), |(i, _)| word_counts[i] as f64);
    FeatureSpace::new("SL", data, "SP+SL")
}

pub const WORDS_PER_SENTENCE: usize = 8;

/// Word position features for sentences of exactly eight words: a linear ramp
/// from 0 to 1 followed by a one-hot position code smoothed along the position
/// axis (sigma = 1, zero padding).
pub fn build_word_position(sentence_lengths: &[usize]) -> Result<FeatureSpace> {
    if let Some(&bad) = sentence_lengths
        .iter()
        .find(|&&l| l != WORDS_PER_SENTENCE)
    {
        return Err(Error::InvalidArgument(format!(
            "word position needs {WORDS_PER_SENTENCE}-word sentences, got {bad}"
        )));
    }
    let kernel = gaussian_kernel(1.0)?;
    let mut block = Array2::zeros((WORDS_PER_SENTENCE, WORDS_PER_SENTENCE + 1));
    let mut impulse = vec![0.0; WORDS_PER_SENTENCE];
    let mut smoothed = vec![0.0; WORDS_PER_SENTENCE];
    for position in 0..WORDS_PER_SENTENCE {
        block[[position, 0]] = position as f64 / (WORDS_PER_SENTENCE - 1) as f64;
        impulse.iter_mut().for_each(|v| *v = 0.0);
        impulse[position] = 1.0;
        convolve_zero_padded(&impulse, &kernel, &mut smoothed);
        for (q, &v) in smoothed.iter().enumerate() {
            block[[position, q + 1]] = v;
        }
    }
    let n = sentence_lengths.len() * WORDS_PER_SENTENCE;
    let data = Array2::from_shape_fn((n, WORDS_PER_SENTENCE + 1), |(i, c)| {
        block[[i % WORDS_PER_SENTENCE, c]]
    });
    FeatureSpace::new("WP", data, "WP")
}

/// Sums token rows into sample rows. `token_map[t]` is the sample that token
/// `t` belongs to; it must be non-decreasing and hit every sample from 0 to
/// its maximum.
pub fn sum_pool(tokens: &Array2<f64>, token_map: &[usize]) -> Result<Array2<f64>> {
    if token_map.len() != tokens.nrows() {
        return Err(Error::RowMismatch {
            what: "token map".into(),
            expected: tokens.nrows(),
            found: token_map.len(),
        });
    }
    if token_map.is_empty() {
        return Err(Error::InvalidArgument("no tokens to pool".into()));
    }
    let mut expected = 0usize;
    for (t, &sample) in token_map.iter().enumerate() {
        if sample == expected {
            expected += 1;
        } else if sample + 1 != expected {
            return Err(Error::Data(format!(
                "token {t} maps to sample {sample}; sample {} has no tokens or the map decreases",
                expected.min(sample)
            )));
        }
    }
    let mut pooled = Array2::zeros((expected, tokens.ncols()));
    for (row, &sample) in tokens.rows().into_iter().zip(token_map) {
        let mut target = pooled.row_mut(sample);
        target += &row;
    }
    Ok(pooled)
}

/// Element-wise mean of equally shaped matrices.
pub fn mean_pool_variants(variants: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = variants
        .first()
        .ok_or_else(|| Error::InvalidArgument("no variant matrices".into()))?;
    let mut acc = Array2::zeros(first.dim());
    for (i, v) in variants.iter().enumerate() {
        if v.dim() != first.dim() {
            return Err(Error::ShapeMismatch(format!(
                "variant {i} is {:?}, expected {:?}",
                v.dim(),
                first.dim()
            )));
        }
        acc += v;
    }
    Ok(acc / variants.len() as f64)
}

/// Per-column statistics of a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    /// Population standard deviation; zero marks a degenerate column.
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(train: &Array2<f64>) -> Result<Self> {
        let n = train.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "standardization needs at least 2 training rows, got {n}"
            )));
        }
        // Summed in row order so the result does not depend on memory layout.
        let mean: Array1<f64> = train
            .columns()
            .into_iter()
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let mut std = Array1::zeros(train.ncols());
        for (c, column) in train.columns().into_iter().enumerate() {
            let m = mean[c];
            let var = column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            // Constant columns can pick up rounding noise in the mean.
            std[c] = if s <= 1e-12 * (1.0 + m.abs()) { 0.0 } else { s };
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, matrix: &Array2<f64>) -> Result<Array2<f64>> {
        if matrix.ncols() != self.mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} columns, standardizer fitted on {}",
                matrix.ncols(),
                self.mean.len()
            )));
        }
        let mut out = matrix.clone();
        for (c, mut column) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            if s == 0.0 {
                column.fill(0.0);
            } else {
                column.mapv_inplace(|v| (v - m) / s);
            }
        }
        Ok(out)
    }
}

/// Z-scores `train` with its own column statistics and applies the same
/// statistics to every matrix in `others`.
pub fn zscore_fit_apply(
    train: &Array2<f64>,
    others: &[&Array2<f64>],
) -> Result<(Array2<f64>, Vec<Array2<f64>>, Standardizer)> {
    let standardizer = Standardizer::fit(train)?;
    let train_z = standardizer.apply(train)?;
    let others_z = others
        .iter()
        .map(|m| standardizer.apply(m))
        .collect::<Result<Vec<_>>>()?;
    Ok((train_z, others_z, standardizer))
}
