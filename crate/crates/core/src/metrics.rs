//! Pooled out-of-sample R², sub-model correction, Ω and Φ, and participant
//! aggregation.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 - MSE_model / MSE_intercept` per unit (column). Rows are pooled
/// predictions; the intercept rows hold each fold's training mean.
pub fn r2_oos(y_true: &Array2<f64>, y_pred: &Array2<f64>, y_intercept: &Array2<f64>) -> Result<Array1<f64>> {
    if y_true.dim() != y_pred.dim() || y_true.dim() != y_intercept.dim() {
        return Err(Error::ShapeMismatch(format!(
            "r2_oos: targets {:?}, predictions {:?}, intercept {:?}",
            y_true.dim(),
            y_pred.dim(),
            y_intercept.dim()
        )));
    }
    let mut out = Array1::zeros(y_true.ncols());
    for u in 0..y_true.ncols() {
        let (mut sse_m, mut sse_i) = (0.0, 0.0);
        for r in 0..y_true.nrows() {
            let y = y_true[[r, u]];
            sse_m += (y - y_pred[[r, u]]).powi(2);
            sse_i += (y - y_intercept[[r, u]]).powi(2);
        }
        if !(sse_i > 0.0) {
            return Err(Error::UndefinedScore { unit: u });
        }
        out[u] = 1.0 - sse_m / sse_i;
    }
    Ok(out)
}

/// Per-participant means and their across-participant mean ± SEM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub participants: Vec<i64>,
    pub per_participant: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over participants divided by `sqrt(count)`;
    /// zero for a single participant.
    pub sem: f64,
}

impl ParticipantSummary {
    fn from_groups(groups: BTreeMap<i64, f64>) -> Self {
        let participants: Vec<i64> = groups.keys().copied().collect();
        let per_participant: Vec<f64> = groups.values().copied().collect();
        let (mean, sem) = mean_sem(&per_participant);
        Self {
            participants,
            per_participant,
            mean,
            sem,
        }
    }
}

pub(crate) fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_participants(values: usize, participants: &[i64]) -> Result<()> {
    if values != participants.len() {
        return Err(Error::ShapeMismatch(format!(
            "{values} unit scores but {} participant ids",
            participants.len()
        )));
    }
    if values == 0 {
        return Err(Error::InvalidArgument("no units".into()));
    }
    Ok(())
}

/// Averages unit values within participant, skipping `None`.
fn participant_means(values: &[Option<f64>], participants: &[i64]) -> BTreeMap<i64, Option<f64>> {
    let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (v, &p) in values.iter().zip(participants) {
        let entry = acc.entry(p).or_insert((0.0, 0));
        if let Some(v) = v {
            entry.0 += v;
            entry.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(p, (sum, count))| (p, (count > 0).then(|| sum / count as f64)))
        .collect()
}

/// Floors unit scores at zero, averages within participant, then summarizes
/// across participants.
pub fn clip_and_average(r2: &[f64], participants: &[i64]) -> Result<ParticipantSummary> {
    check_participants(r2.len(), participants)?;
    let clipped: Vec<Option<f64>> = r2.iter().map(|&r| Some(r.max(0.0))).collect();
    let means = participant_means(&clipped, participants);
    Ok(ParticipantSummary::from_groups(
        means.into_iter().map(|(p, m)| (p, m.expect("every participant has units"))).collect(),
    ))
}

/// A set of feature spaces, bit `i` standing for the `i`-th declared space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subset(pub u32);

impl Subset {
    pub fn single(space: usize) -> Self {
        Subset(1 << space)
    }

    pub fn full(n_spaces: usize) -> Self {
        Subset(((1u64 << n_spaces) - 1) as u32)
    }

    pub fn contains(self, space: usize) -> bool {
        self.0 & (1 << space) != 0
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn with(self, space: usize) -> Self {
        Subset(self.0 | (1 << space))
    }

    /// Indices of the member spaces, ascending.
    pub fn spaces(self) -> Vec<usize> {
        (0..32).filter(|&i| self.contains(i)).collect()
    }

    /// All non-empty subsets of `self`, ascending by bit pattern.
    pub fn nonempty_subsets(self) -> Vec<Subset> {
        (1..=self.0).map(Subset).filter(|s| s.is_subset_of(self)).collect()
    }

    /// Member names joined with `+`.
    pub fn label(self, names: &[String]) -> String {
        self.spaces().iter().map(|&i| names[i].as_str()).collect::<Vec<_>>().join("+")
    }
}

/// Per-unit maximum over all non-empty subsets of `within`, restricted to
/// those containing `required` when given. Every subset of the family must be
/// present in `table`.
pub fn submodel_max(
    table: &BTreeMap<Subset, Vec<f64>>,
    within: Subset,
    required: Option<usize>,
) -> Result<Vec<f64>> {
    if within.is_empty() {
        return Err(Error::InvalidArgument("empty sub-model family".into()));
    }
    if let Some(r) = required {
        if !within.contains(r) {
            return Err(Error::InvalidArgument(format!(
                "required space {r} is not part of the family"
            )));
        }
    }
    let mut best: Option<Vec<f64>> = None;
    for subset in within.nonempty_subsets() {
        if required.is_some_and(|r| !subset.contains(r)) {
            continue;
        }
        let scores = table
            .get(&subset)
            .ok_or_else(|| Error::Data(format!("sub-model table is missing subset {:#b}", subset.0)))?;
        match &mut best {
            None => best = Some(scores.clone()),
            Some(b) => {
                if b.len() != scores.len() {
                    return Err(Error::ShapeMismatch("sub-model tables differ in unit count".into()));
                }
                for (acc, &s) in b.iter_mut().zip(scores) {
                    *acc = acc.max(s);
                }
            }
        }
    }
    Ok(best.expect("non-empty family"))
}

/// Per-unit values plus the participant summary. Units excluded for an
/// undefined ratio carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub per_unit: Vec<Option<f64>>,
    pub summary: ParticipantSummary,
}

fn ratio_summary(per_unit: Vec<Option<f64>>, participants: &[i64], clip_at: Option<f64>) -> Result<RatioSummary> {
    let means = participant_means(&per_unit, participants);
    let mut groups = BTreeMap::new();
    for (p, m) in means {
        let m = m.ok_or_else(|| {
            Error::Data(format!("participant {p}: every unit has a non-positive denominator"))
        })?;
        groups.insert(p, clip_at.map_or(m, |c| m.min(c)));
    }
    Ok(RatioSummary {
        per_unit,
        summary: ParticipantSummary::from_groups(groups),
    })
}

/// Percentage of the designated space's explained variance already captured
/// by model `M`: `(1 - (R²*_{M+LLM} - R²*_M) / R²_LLM) * 100`. Units with
/// `R²_LLM <= 0` are left out; participant means are capped at 100.
pub fn omega(r2_m_star: &[f64], r2_m_llm_star: &[f64], r2_llm: &[f64], participants: &[i64]) -> Result<RatioSummary> {
    check_participants(r2_llm.len(), participants)?;
    if r2_m_star.len() != r2_llm.len() || r2_m_llm_star.len() != r2_llm.len() {
        return Err(Error::ShapeMismatch("omega inputs differ in unit count".into()));
    }
    let per_unit = (0..r2_llm.len())
        .map(|u| {
            (r2_llm[u] > 0.0).then(|| (1.0 - (r2_m_llm_star[u] - r2_m_star[u]) / r2_llm[u]) * 100.0)
        })
        .collect();
    ratio_summary(per_unit, participants, Some(100.0))
}

/// Unique variance over OASM: `(R²*_{OASM+LLM} / R²_OASM - 1) * 100`. Units
/// with `R²_OASM <= 0` are left out; no clipping.
pub fn phi(r2_oasm_llm_star: &[f64], r2_oasm: &[f64], participants: &[i64]) -> Result<RatioSummary> {
    check_participants(r2_oasm.len(), participants)?;
    if r2_oasm_llm_star.len() != r2_oasm.len() {
        return Err(Error::ShapeMismatch("phi inputs differ in unit count".into()));
    }
    let per_unit = (0..r2_oasm.len())
        .map(|u| (r2_oasm[u] > 0.0).then(|| (r2_oasm_llm_star[u] / r2_oasm[u] - 1.0) * 100.0))
        .collect();
    ratio_summary(per_unit, participants, None)
}
