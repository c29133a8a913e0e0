//! Synthetic recordings with known generative structure: feature-driven signal
//! plus noise that is autocorrelated within blocks and independent across
//! them.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{
    build_sentence_length, build_sentence_position, build_word_position, smooth_within_blocks, FeatureSpace,
    Standardizer, WORDS_PER_SENTENCE,
};
use crate::matrixio::{save_matrix, write_manifest, FeatureEntry, Manifest};
use crate::recording::NeuralRecording;
use crate::splits::SplitSpec;

#[derive(Debug, Clone)]
pub struct SignalFeature {
    pub space: FeatureSpace,
    /// Standard deviation of this space's true weights.
    pub weight_scale: f64,
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_units: usize,
    pub block_ids: Vec<i64>,
    pub sample_categories: Option<Vec<i64>>,
    pub signal_features: Vec<SignalFeature>,
    /// Width of the within-block Gaussian filter applied to the noise; zero
    /// leaves it white.
    pub autocorr_sigma: f64,
    pub noise_scale: f64,
    pub signal_scale: f64,
    /// Participant id of every unit.
    pub participants: Vec<i64>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn n_samples(&self) -> usize {
        self.block_ids.len()
    }

    fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("autocorr_sigma", self.autocorr_sigma),
            ("noise_scale", self.noise_scale),
            ("signal_scale", self.signal_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{what} must be finite and non-negative")));
            }
        }
        if self.participants.len() != self.n_units {
            return Err(Error::RowMismatch {
                what: "unit participants".into(),
                expected: self.n_units,
                found: self.participants.len(),
            });
        }
        for f in &self.signal_features {
            if f.space.n_samples() != self.n_samples() {
                return Err(Error::RowMismatch {
                    what: format!("signal feature {:?}", f.space.name),
                    expected: self.n_samples(),
                    found: f.space.n_samples(),
                });
            }
            if !(f.weight_scale >= 0.0 && f.weight_scale.is_finite()) {
                return Err(Error::InvalidArgument("weight scales must be non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub recording: NeuralRecording,
    /// Weights of each signal feature (dims x units), in spec order. They act
    /// on the z-scored feature columns.
    pub true_weights: Vec<Array2<f64>>,
}

fn standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn zscore(matrix: &Array2<f64>) -> Result<Array2<f64>> {
    Standardizer::fit(matrix)?.apply(matrix)
}

/// `signal_scale * sum_k z(F_k) W_k + noise_scale * smooth(eps)`, with
/// `W_k ~ N(0, weight_scale_k^2)` and `eps` white Gaussian filtered within
/// blocks. Deterministic in `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let n = spec.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut responses = Array2::<f64>::zeros((n, spec.n_units));
    let mut true_weights = Vec::with_capacity(spec.signal_features.len());
    for f in &spec.signal_features {
        let w = standard_normal(&mut rng, f.space.dims(), spec.n_units) * f.weight_scale;
        let z = zscore(&f.space.data)?;
        responses.scaled_add(spec.signal_scale, &z.dot(&w));
        true_weights.push(w);
    }
    let white = standard_normal(&mut rng, n, spec.n_units);
    let noise = if spec.autocorr_sigma > 0.0 {
        smooth_within_blocks(&white, &spec.block_ids, spec.autocorr_sigma)?
    } else {
        white
    };
    responses.scaled_add(spec.noise_scale, &noise);
    let recording = NeuralRecording::new(
        responses,
        spec.participants.clone(),
        spec.block_ids.clone(),
        spec.sample_categories.clone(),
    )?;
    Ok(SynthData {
        recording,
        true_weights,
    })
}

/// Units split into `participants` contiguous, near-equal groups with ids
/// starting at 1.
pub fn even_participants(n_units: usize, participants: usize) -> Vec<i64> {
    (0..n_units).map(|u| (u * participants / n_units) as i64 + 1).collect()
}

/// Built-in dataset shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Pure block-autocorrelated noise, 96 passages of 4 sentences.
    ShuffleDemo,
    /// Signal from sentence position and length only, plus a 512-dim random
    /// projection of those features declared as the "LLM" space.
    SubsumptionDemo,
    /// 24 categories x 4 passages x 4 sentences.
    PereiraExp1,
    /// 24 categories x 3 passages x 4 sentences.
    PereiraExp2,
    /// 52 sentences of 8 words.
    Fedorenko,
    /// 8 stories of 40 samples.
    Blank,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::ShuffleDemo,
        Preset::SubsumptionDemo,
        Preset::PereiraExp1,
        Preset::PereiraExp2,
        Preset::Fedorenko,
        Preset::Blank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ShuffleDemo => "shuffle-demo",
            Preset::SubsumptionDemo => "subsumption-demo",
            Preset::PereiraExp1 => "pereira-exp1",
            Preset::PereiraExp2 => "pereira-exp2",
            Preset::Fedorenko => "fedorenko",
            Preset::Blank => "blank",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
            Error::InvalidArgument(format!("unknown preset {name:?}; expected one of {}", known.join(", ")))
        })
    }
}

/// A generated dataset together with the analysis choices that fit its shape.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub name: String,
    pub recording: NeuralRecording,
    /// Declared feature spaces, written to the manifest.
    pub features: Vec<FeatureSpace>,
    pub true_weights: Vec<Array2<f64>>,
    pub split: SplitSpec,
    /// OASM width for this dataset shape.
    pub oasm_sigma: f64,
    /// Band group playing the "LLM" role, if any.
    pub llm_space: Option<String>,
}

impl SynthDataset {
    /// Band groups of the declared features, in first-appearance order.
    pub fn band_groups(&self) -> Vec<String> {
        let mut groups: Vec<String> = Vec::new();
        for f in &self.features {
            if !groups.contains(&f.band_group) {
                groups.push(f.band_group.clone());
            }
        }
        groups
    }
}

struct PassageLayout {
    block_ids: Vec<i64>,
    categories: Vec<i64>,
    passage_lengths: Vec<usize>,
}

fn passage_layout(categories: usize, passages_per_category: usize, sentences: usize) -> PassageLayout {
    let mut layout = PassageLayout {
        block_ids: Vec::new(),
        categories: Vec::new(),
        passage_lengths: Vec::new(),
    };
    for c in 0..categories {
        for p in 0..passages_per_category {
            let block = (c * passages_per_category + p) as i64;
            layout.block_ids.extend(std::iter::repeat_n(block, sentences));
            layout.categories.extend(std::iter::repeat_n(c as i64, sentences));
            layout.passage_lengths.push(sentences);
        }
    }
    layout
}

fn sentence_position_and_length(layout: &PassageLayout, rng: &mut ChaCha8Rng) -> Result<Vec<FeatureSpace>> {
    let n = layout.block_ids.len();
    let word_counts: Vec<i64> = (0..n).map(|_| rng.random_range(5..=15)).collect();
    Ok(vec![
        build_sentence_position(&layout.passage_lengths)?,
        build_sentence_length(&word_counts)?,
    ])
}

fn random_space(rng: &mut ChaCha8Rng, name: &str, n: usize, dims: usize) -> Result<FeatureSpace> {
    FeatureSpace::new(name, standard_normal(rng, n, dims), name)
}

/// Builds a preset. Layout randomness (sentence lengths, random feature
/// spaces) and the generative draw both derive from `seed`.
pub fn build_preset(preset: Preset, seed: u64) -> Result<SynthDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (layout, split, oasm_sigma) = match preset {
        Preset::ShuffleDemo => (passage_layout(24, 4, 4), SplitSpec::Pereira { passages_per_category: 4 }, 2.0),
        Preset::SubsumptionDemo => {
            (passage_layout(12, 4, 4), SplitSpec::Pereira { passages_per_category: 4 }, 2.0)
        }
        Preset::PereiraExp1 => (passage_layout(24, 4, 4), SplitSpec::Pereira { passages_per_category: 4 }, 2.2),
        Preset::PereiraExp2 => (passage_layout(24, 3, 4), SplitSpec::Pereira { passages_per_category: 3 }, 2.2),
        Preset::Fedorenko => (passage_layout(52, 1, WORDS_PER_SENTENCE), SplitSpec::Fedorenko, 1.8),
        Preset::Blank => (passage_layout(8, 1, 40), SplitSpec::Blank, 1.5),
    };
    let n = layout.block_ids.len();

    // (declared features, signal features with weight scales, llm space)
    let (features, signal, llm_space): (Vec<FeatureSpace>, Vec<SignalFeature>, Option<&str>) = match preset {
        Preset::ShuffleDemo => (Vec::new(), Vec::new(), None),
        Preset::SubsumptionDemo => {
            let spsl = sentence_position_and_length(&layout, &mut rng)?;
            let z: Vec<Array2<f64>> = spsl.iter().map(|f| zscore(&f.data)).collect::<Result<_>>()?;
            let views: Vec<_> = z.iter().map(|m| m.view()).collect();
            let basis = concatenate(Axis(1), &views).expect("equal rows");
            let projection = standard_normal(&mut rng, basis.ncols(), 512) / (basis.ncols() as f64).sqrt();
            let llm = FeatureSpace::new("LLM", basis.dot(&projection), "LLM")?;
            let signal = spsl
                .iter()
                .map(|f| SignalFeature {
                    space: f.clone(),
                    weight_scale: 1.0,
                })
                .collect();
            let mut declared = spsl;
            declared.push(llm);
            (declared, signal, Some("LLM"))
        }
        Preset::PereiraExp1 | Preset::PereiraExp2 => {
            let spsl = sentence_position_and_length(&layout, &mut rng)?;
            let llm = random_space(&mut rng, "LLM", n, 64)?;
            let mut signal: Vec<SignalFeature> = spsl
                .iter()
                .map(|f| SignalFeature {
                    space: f.clone(),
                    weight_scale: 0.5,
                })
                .collect();
            signal.push(SignalFeature {
                space: llm.clone(),
                weight_scale: 0.1,
            });
            let mut declared = spsl;
            declared.push(llm);
            (declared, signal, Some("LLM"))
        }
        Preset::Fedorenko => {
            let sentences = vec![WORDS_PER_SENTENCE; 52];
            let wp = build_word_position(&sentences)?;
            let llm = random_space(&mut rng, "LLM", n, 64)?;
            let signal = vec![
                SignalFeature {
                    space: wp.clone(),
                    weight_scale: 0.5,
                },
                SignalFeature {
                    space: llm.clone(),
                    weight_scale: 0.1,
                },
            ];
            (vec![wp, llm], signal, Some("LLM"))
        }
        Preset::Blank => {
            let llm = random_space(&mut rng, "LLM", n, 64)?;
            let signal = vec![SignalFeature {
                space: llm.clone(),
                weight_scale: 0.1,
            }];
            (vec![llm], signal, Some("LLM"))
        }
    };

    let (n_units, participants, signal_scale, noise_scale, autocorr_sigma) = match preset {
        Preset::ShuffleDemo => (200, 5, 0.0, 1.0, 2.0),
        Preset::SubsumptionDemo => (100, 5, 1.0, 2.0, 0.0),
        _ => (60, 3, 1.0, 1.0, oasm_sigma),
    };
    let spec = SynthSpec {
        n_units,
        block_ids: layout.block_ids,
        sample_categories: Some(layout.categories),
        signal_features: signal,
        autocorr_sigma,
        noise_scale,
        signal_scale,
        participants: even_participants(n_units, participants),
        seed,
    };
    let data = generate(&spec)?;
    Ok(SynthDataset {
        name: preset.name().to_string(),
        recording: data.recording,
        features,
        true_weights: data.true_weights,
        split,
        oasm_sigma,
        llm_space: llm_space.map(str::to_string),
    })
}

/// File name of the manifest written by [`write_dataset`].
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes responses, feature matrices and a manifest into `dir` (created if
/// needed). Returns the manifest path.
pub fn write_dataset(dir: &Path, dataset: &SynthDataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_matrix(dir.join("responses.bbsm"), &dataset.recording.responses)?;
    let mut entries = Vec::with_capacity(dataset.features.len());
    for f in &dataset.features {
        let file = format!("feature_{}.bbsm", f.name);
        save_matrix(dir.join(&file), &f.data)?;
        entries.push(FeatureEntry {
            name: f.name.clone(),
            path: file,
            band_group: f.band_group.clone(),
        });
    }
    let manifest = Manifest {
        dataset_name: dataset.name.clone(),
        feature_spaces: entries,
        responses_path: "responses.bbsm".into(),
        sample_blocks: dataset.recording.sample_blocks.clone(),
        sample_categories: dataset.recording.sample_categories.clone(),
        unit_participants: dataset.recording.unit_participants.clone(),
        token_map: None,
    };
    let path = dir.join(MANIFEST_FILE);
    write_manifest(&path, &manifest)?;
    Ok(path)
}
