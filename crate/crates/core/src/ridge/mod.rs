//! Ridge regression with per-band feature scaling and the random search that
//! picks a scaling vector and penalty for every unit.

mod search;
mod solver;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSpace;

pub use search::{
    banded_search, enumerate_masks, select_best_layer, select_best_layer_seeds, FitRecord,
    FitResult, LayerSelection, OuterFit, OuterFitRecord, SearchTrace, SeedAveragedSelection,
};
pub use solver::{ridge_solve, ridge_weights, RidgeWeights, SpectralRidge};

/// Penalty grid shared by every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub alphas: Vec<f64>,
}

impl Default for RidgeConfig {
    /// `0` followed by `2^k` for `k = -5..=34`: 41 penalties.
    fn default() -> Self {
        let mut alphas = vec![0.0];
        alphas.extend((-5..=34).map(|k| 2f64.powi(k)));
        Self { alphas }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("empty alpha grid".into()));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::Config("alphas must be finite and non-negative".into()));
        }
        if self.alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("alphas must be strictly ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandedSearchConfig {
    /// Cap on random (Dirichlet) candidates, after the mask phase.
    pub max_iters: usize,
    pub patience: usize,
    pub min_improvement: f64,
    pub dirichlet_concentration: f64,
    pub seed: u64,
}

impl Default for BandedSearchConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            patience: 50,
            min_improvement: 1e-4,
            dirichlet_concentration: 1.0,
            seed: 0,
        }
    }
}

impl BandedSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 || self.max_iters < self.patience {
            return Err(Error::Config(format!(
                "need max_iters >= patience >= 1, got {} and {}",
                self.max_iters, self.patience
            )));
        }
        if !(self.min_improvement > 0.0) {
            return Err(Error::Config("min_improvement must be positive".into()));
        }
        if !(self.dirichlet_concentration > 0.0 && self.dirichlet_concentration.is_finite()) {
            return Err(Error::Config("dirichlet_concentration must be positive".into()));
        }
        Ok(())
    }
}

/// Columns that share one scaling factor (equivalently one L2 penalty).
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: String,
    pub data: Array2<f64>,
    /// Z-score columns with training-row statistics before fitting. When off,
    /// columns are only centred (by the solver).
    pub standardize: bool,
}

impl Band {
    pub fn new(name: &str, data: Array2<f64>) -> Self {
        Self {
            name: name.to_string(),
            data,
            standardize: true,
        }
    }

    /// A band used at its own scale. Meant for designs such as OASM whose
    /// columns already share one scale: the column of a held-out sample has
    /// only vanishing tail values on training rows, and dividing by that tiny
    /// spread would blow them up.
    pub fn unscaled(name: &str, data: Array2<f64>) -> Self {
        Self {
            standardize: false,
            ..Self::new(name, data)
        }
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }
}

/// Concatenates feature spaces by band group, bands ordered by first
/// appearance.
pub fn bands_from_features(features: &[&FeatureSpace]) -> Result<Vec<Band>> {
    let mut names: Vec<&str> = Vec::new();
    for f in features {
        if !names.contains(&f.band_group.as_str()) {
            names.push(&f.band_group);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let members: Vec<_> = features
                .iter()
                .filter(|f| f.band_group == name)
                .map(|f| f.data.view())
                .collect();
            let data = concatenate(Axis(1), &members)
                .map_err(|e| Error::ShapeMismatch(format!("band {name:?}: {e}")))?;
            Ok(Band::new(name, data))
        })
        .collect()
}

/// Multiplies each band by its `gamma` entry and concatenates the bands
/// column-wise.
pub fn apply_band_scaling(bands: &[Band], gamma: &[f64]) -> Result<Array2<f64>> {
    if bands.len() != gamma.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scaling factors for {} bands",
            gamma.len(),
            bands.len()
        )));
    }
    if bands.is_empty() {
        return Err(Error::InvalidArgument("no bands".into()));
    }
    if gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::InvalidArgument("scaling factors must be non-negative".into()));
    }
    let scaled: Vec<Array2<f64>> = bands.iter().zip(gamma).map(|(b, &g)| &b.data * g).collect();
    let views: Vec<_> = scaled.iter().map(|m| m.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))
}
