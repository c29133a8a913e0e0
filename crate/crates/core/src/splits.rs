//! Nested outer/inner fold plans.
//!
//! Every scheme assigns whole blocks (passages, sentences, stories) to a side
//! of each split. [`shuffle_plan`] deliberately breaks that by relabelling
//! samples with a random permutation while keeping all fold sizes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recording::{block_runs, check_contiguous, NeuralRecording};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    Contiguous,
    Shuffled,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::Contiguous => "contiguous",
            SplitMode::Shuffled => "shuffled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Pereira,
    Fedorenko,
    Blank,
    GenericGrouped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerFold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterFold {
    pub test: Vec<usize>,
    pub inner_folds: Vec<InnerFold>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: Scheme,
    pub mode: SplitMode,
    pub n_samples: usize,
    pub outer_folds: Vec<OuterFold>,
}

impl OuterFold {
    /// Every sample not held out for testing, ascending.
    pub fn non_test(&self, n_samples: usize) -> Vec<usize> {
        let test: HashSet<usize> = self.test.iter().copied().collect();
        (0..n_samples).filter(|i| !test.contains(i)).collect()
    }
}

impl SplitPlan {
    pub fn n_outer(&self) -> usize {
        self.outer_folds.len()
    }

    /// Inner fold count of each outer fold.
    pub fn inner_counts(&self) -> Vec<usize> {
        self.outer_folds.iter().map(|o| o.inner_folds.len()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks disjointness and coverage, plus block integrity for contiguous
    /// plans when `block_ids` is given.
    pub fn validate(&self, block_ids: Option<&[i64]>) -> Result<()> {
        let n = self.n_samples;
        let mut covered = vec![0usize; n];
        for (o, outer) in self.outer_folds.iter().enumerate() {
            for &i in &outer.test {
                if i >= n {
                    return Err(Error::Data(format!("outer fold {o}: sample {i} out of range")));
                }
                covered[i] += 1;
            }
            let test: HashSet<usize> = outer.test.iter().copied().collect();
            for (k, inner) in outer.inner_folds.iter().enumerate() {
                let train: HashSet<usize> = inner.train.iter().copied().collect();
                let validation: HashSet<usize> = inner.validation.iter().copied().collect();
                if inner.train.iter().chain(&inner.validation).any(|&i| i >= n) {
                    return Err(Error::Data(format!("fold {o}/{k}: sample out of range")));
                }
                if !test.is_disjoint(&train) || !test.is_disjoint(&validation) {
                    return Err(Error::Data(format!("fold {o}/{k}: test overlaps train/validation")));
                }
                if !train.is_disjoint(&validation) {
                    return Err(Error::Data(format!("fold {o}/{k}: train overlaps validation")));
                }
                if self.mode == SplitMode::Contiguous {
                    if let Some(blocks) = block_ids {
                        let ids = |set: &HashSet<usize>| -> HashSet<i64> {
                            set.iter().map(|&i| blocks[i]).collect()
                        };
                        let (tb, trb, vb) = (ids(&test), ids(&train), ids(&validation));
                        if !tb.is_disjoint(&trb) || !tb.is_disjoint(&vb) || !trb.is_disjoint(&vb) {
                            return Err(Error::Data(format!(
                                "fold {o}/{k}: a block spans a split boundary"
                            )));
                        }
                    }
                }
            }
        }
        if let Some(i) = covered.iter().position(|&c| c != 1) {
            return Err(Error::Data(format!(
                "sample {i} appears in {} outer test sets",
                covered[i]
            )));
        }
        Ok(())
    }
}

/// How to build a plan from a recording's labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SplitSpec {
    Pereira { passages_per_category: usize },
    Fedorenko,
    Blank,
    GenericGrouped { folds: usize },
}

impl SplitSpec {
    pub fn plan(&self, recording: &NeuralRecording, selection_seed: Option<u64>) -> Result<SplitPlan> {
        let blocks = &recording.sample_blocks;
        match *self {
            SplitSpec::Pereira { passages_per_category } => {
                let categories = recording.sample_categories.as_ref().ok_or_else(|| {
                    Error::Config("the pereira scheme needs sample_categories".into())
                })?;
                let per_passage = passage_categories(blocks, categories)?;
                plan_pereira(&per_passage, passages_per_category, blocks, selection_seed)
            }
            SplitSpec::Fedorenko => plan_fedorenko(blocks, selection_seed),
            SplitSpec::Blank => plan_blank(blocks, selection_seed),
            SplitSpec::GenericGrouped { folds } => plan_grouped(blocks, folds, selection_seed),
        }
    }
}

/// Collapses per-sample categories to one category per block.
pub fn passage_categories(block_ids: &[i64], sample_categories: &[i64]) -> Result<Vec<i64>> {
    if block_ids.len() != sample_categories.len() {
        return Err(Error::RowMismatch {
            what: "sample_categories".into(),
            expected: block_ids.len(),
            found: sample_categories.len(),
        });
    }
    check_contiguous(block_ids)?;
    block_runs(block_ids)
        .into_iter()
        .map(|(block, range)| {
            let c = sample_categories[range.start];
            if sample_categories[range.clone()].iter().any(|&x| x != c) {
                Err(Error::Data(format!("block {block} mixes categories")))
            } else {
                Ok(c)
            }
        })
        .collect()
}

fn shuffled_if<T>(items: &mut [T], seed: Option<u64>) {
    if let Some(seed) = seed {
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
}

fn expand(runs: &[Range<usize>], pick: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut out: Vec<usize> = pick.into_iter().flat_map(|b| runs[b].clone()).collect();
    out.sort_unstable();
    out
}

/// Builds a nested plan from an ordered list of "cells" (each a set of block
/// indices): every cell is an outer test set once, and each remaining cell in
/// turn is the validation set of one inner fold.
fn nested_from_cells(
    scheme: Scheme,
    runs: &[Range<usize>],
    n_samples: usize,
    cells: &[Vec<usize>],
) -> SplitPlan {
    let outer_folds = (0..cells.len())
        .map(|t| {
            let inner_folds = (0..cells.len())
                .filter(|&v| v != t)
                .map(|v| InnerFold {
                    train: expand(
                        runs,
                        (0..cells.len())
                            .filter(|&c| c != t && c != v)
                            .flat_map(|c| cells[c].iter().copied()),
                    ),
                    validation: expand(runs, cells[v].iter().copied()),
                })
                .collect();
            OuterFold {
                test: expand(runs, cells[t].iter().copied()),
                inner_folds,
            }
        })
        .collect();
    SplitPlan {
        scheme,
        mode: SplitMode::Contiguous,
        n_samples,
        outer_folds,
    }
}

/// Passage-per-category scheme: each fold takes one passage from every
/// category and holds out half of them (the first `ceil(C/2)` categories or
/// the rest). With `k` passages per category this gives `2k` outer folds and
/// `2k - 1` inner folds.
pub fn plan_pereira(
    passage_categories: &[i64],
    passages_per_category: usize,
    block_ids: &[i64],
    selection_seed: Option<u64>,
) -> Result<SplitPlan> {
    check_contiguous(block_ids)?;
    let runs: Vec<Range<usize>> = block_runs(block_ids).into_iter().map(|(_, r)| r).collect();
    if runs.len() != passage_categories.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} passage categories for {} blocks",
            passage_categories.len(),
            runs.len()
        )));
    }
    if passages_per_category < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 passages per category".into(),
        ));
    }
    let mut order: Vec<i64> = Vec::new();
    let mut members: HashMap<i64, Vec<usize>> = HashMap::new();
    for (passage, &c) in passage_categories.iter().enumerate() {
        members
            .entry(c)
            .or_insert_with(|| {
                order.push(c);
                Vec::new()
            })
            .push(passage);
    }
    if order.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 categories".into()));
    }
    for c in &order {
        let count = members[c].len();
        if count != passages_per_category {
            return Err(Error::Data(format!(
                "category {c} has {count} passages, expected {passages_per_category}"
            )));
        }
    }
    if let Some(seed) = selection_seed {
        for (i, c) in order.iter().enumerate() {
            shuffled_if(members.get_mut(c).unwrap(), Some(seed.wrapping_add(i as u64)));
        }
    }
    let first_half = order.len().div_ceil(2);
    let halves = [&order[..first_half], &order[first_half..]];
    let mut cells = Vec::with_capacity(2 * passages_per_category);
    for slot in 0..passages_per_category {
        for half in halves {
            cells.push(half.iter().map(|c| members[c][slot]).collect());
        }
    }
    Ok(nested_from_cells(Scheme::Pereira, &runs, block_ids.len(), &cells))
}

fn chunk_cells(n_blocks: usize, chunk: usize, order: &[usize]) -> Vec<Vec<usize>> {
    debug_assert_eq!(order.len(), n_blocks);
    order.chunks(chunk).map(|c| c.to_vec()).collect()
}

/// Four whole sentences per outer test fold; inner folds again hold out four
/// sentences at a time. The last chunk is smaller when the sentence count is
/// not a multiple of four.
pub fn plan_fedorenko(sentence_blocks: &[i64], selection_seed: Option<u64>) -> Result<SplitPlan> {
    const PER_FOLD: usize = 4;
    check_contiguous(sentence_blocks)?;
    let runs: Vec<Range<usize>> = block_runs(sentence_blocks).into_iter().map(|(_, r)| r).collect();
    if runs.len() < 2 * PER_FOLD {
        return Err(Error::InvalidArgument(format!(
            "need at least {} sentences, got {}",
            2 * PER_FOLD,
            runs.len()
        )));
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    shuffled_if(&mut order, selection_seed);
    let outer_cells = chunk_cells(runs.len(), PER_FOLD, &order);
    let outer_folds = outer_cells
        .iter()
        .map(|test_cell| {
            let rest: Vec<usize> = order.iter().copied().filter(|b| !test_cell.contains(b)).collect();
            let inner_folds = rest
                .chunks(PER_FOLD)
                .map(|val_cell| InnerFold {
                    train: expand(&runs, rest.iter().copied().filter(|b| !val_cell.contains(b))),
                    validation: expand(&runs, val_cell.iter().copied()),
                })
                .collect();
            OuterFold {
                test: expand(&runs, test_cell.iter().copied()),
                inner_folds,
            }
        })
        .collect();
    Ok(SplitPlan {
        scheme: Scheme::Fedorenko,
        mode: SplitMode::Contiguous,
        n_samples: sentence_blocks.len(),
        outer_folds,
    })
}

/// Leave one story out, with leave-one-remaining-story-out inner folds.
pub fn plan_blank(story_ids: &[i64], selection_seed: Option<u64>) -> Result<SplitPlan> {
    check_contiguous(story_ids)?;
    let runs: Vec<Range<usize>> = block_runs(story_ids).into_iter().map(|(_, r)| r).collect();
    if runs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 stories, got {}",
            runs.len()
        )));
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    shuffled_if(&mut order, selection_seed);
    let cells: Vec<Vec<usize>> = order.into_iter().map(|b| vec![b]).collect();
    Ok(nested_from_cells(Scheme::Blank, &runs, story_ids.len(), &cells))
}

/// Group k-fold over consecutive runs of blocks, for datasets that follow none
/// of the named schemes. Inner folds split the remaining blocks `folds - 1`
/// ways.
pub fn plan_grouped(block_ids: &[i64], folds: usize, selection_seed: Option<u64>) -> Result<SplitPlan> {
    check_contiguous(block_ids)?;
    let runs: Vec<Range<usize>> = block_runs(block_ids).into_iter().map(|(_, r)| r).collect();
    if folds < 3 || runs.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "grouped plan needs 3 <= folds <= blocks, got {folds} folds over {} blocks",
            runs.len()
        )));
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    shuffled_if(&mut order, selection_seed);
    let split = |items: &[usize], k: usize| -> Vec<Vec<usize>> {
        (0..k)
            .map(|g| items[g * items.len() / k..(g + 1) * items.len() / k].to_vec())
            .collect()
    };
    let outer_folds = split(&order, folds)
        .into_iter()
        .map(|test_cell| {
            let rest: Vec<usize> = order.iter().copied().filter(|b| !test_cell.contains(b)).collect();
            let inner_folds = split(&rest, folds - 1)
                .into_iter()
                .map(|val_cell| InnerFold {
                    train: expand(&runs, rest.iter().copied().filter(|b| !val_cell.contains(b))),
                    validation: expand(&runs, val_cell),
                })
                .collect();
            OuterFold {
                test: expand(&runs, test_cell),
                inner_folds,
            }
        })
        .collect();
    Ok(SplitPlan {
        scheme: Scheme::GenericGrouped,
        mode: SplitMode::Contiguous,
        n_samples: block_ids.len(),
        outer_folds,
    })
}

/// Reassigns samples to folds through a seeded uniform random permutation.
/// Every fold keeps its size; blocks are no longer kept together.
pub fn shuffle_plan(plan: &SplitPlan, seed: u64) -> SplitPlan {
    let mut permutation: Vec<usize> = (0..plan.n_samples).collect();
    permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let relabel = |indices: &[usize]| -> Vec<usize> {
        let mut out: Vec<usize> = indices.iter().map(|&i| permutation[i]).collect();
        out.sort_unstable();
        out
    };
    SplitPlan {
        scheme: plan.scheme,
        mode: SplitMode::Shuffled,
        n_samples: plan.n_samples,
        outer_folds: plan
            .outer_folds
            .iter()
            .map(|outer| OuterFold {
                test: relabel(&outer.test),
                inner_folds: outer
                    .inner_folds
                    .iter()
                    .map(|inner| InnerFold {
                        train: relabel(&inner.train),
                        validation: relabel(&inner.validation),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Multiset of (test, train, validation) sizes, for comparing plans.
pub fn fold_sizes(plan: &SplitPlan) -> BTreeMap<(usize, usize, usize), usize> {
    let mut sizes = BTreeMap::new();
    for outer in &plan.outer_folds {
        for inner in &outer.inner_folds {
            *sizes
                .entry((outer.test.len(), inner.train.len(), inner.validation.len()))
                .or_insert(0) += 1;
        }
    }
    sizes
}
