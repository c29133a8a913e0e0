use ndarray::Array2;

use crate::error::{Error, Result};

/// Sample × unit response matrix together with the labels needed to split and
/// aggregate it.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralRecording {
    pub responses: Array2<f64>,
    /// Participant id of every response column.
    pub unit_participants: Vec<i64>,
    /// Block (passage / sentence / story) id of every sample.
    pub sample_blocks: Vec<i64>,
    pub sample_categories: Option<Vec<i64>>,
}

impl NeuralRecording {
    pub fn new(
        responses: Array2<f64>,
        unit_participants: Vec<i64>,
        sample_blocks: Vec<i64>,
        sample_categories: Option<Vec<i64>>,
    ) -> Result<Self> {
        let (rows, cols) = responses.dim();
        if unit_participants.len() != cols {
            return Err(Error::ShapeMismatch(format!(
                "{} participant labels for {} units",
                unit_participants.len(),
                cols
            )));
        }
        if sample_blocks.len() != rows {
            return Err(Error::RowMismatch {
                what: "sample_blocks".into(),
                expected: rows,
                found: sample_blocks.len(),
            });
        }
        if let Some(categories) = &sample_categories {
            if categories.len() != rows {
                return Err(Error::RowMismatch {
                    what: "sample_categories".into(),
                    expected: rows,
                    found: categories.len(),
                });
            }
        }
        check_contiguous(&sample_blocks)?;
        Ok(Self {
            responses,
            unit_participants,
            sample_blocks,
            sample_categories,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.responses.nrows()
    }

    pub fn n_units(&self) -> usize {
        self.responses.ncols()
    }
}

/// Fails unless every block id labels exactly one contiguous run of samples.
pub fn check_contiguous(block_ids: &[i64]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for (i, &block) in block_ids.iter().enumerate() {
        if i > 0 && block_ids[i - 1] == block {
            continue;
        }
        if !seen.insert(block) {
            return Err(Error::NonContiguousBlocks { block, sample: i });
        }
    }
    Ok(())
}

/// Half-open sample ranges of each block, in order of appearance.
pub(crate) fn block_runs(block_ids: &[i64]) -> Vec<(i64, std::ops::Range<usize>)> {
    let mut runs: Vec<(i64, std::ops::Range<usize>)> = Vec::new();
    for (i, &block) in block_ids.iter().enumerate() {
        match runs.last_mut() {
            Some((id, range)) if *id == block => range.end = i + 1,
            _ => runs.push((block, i..i + 1)),
        }
    }
    runs
}
