//! Sample-based CRPS and MAE, and their level-wise averages.
//!
//! Scores are computed per node and origin, averaged over origins, then over
//! the nodes of each level, then over levels. The same averaging defines the
//! cross-validation objective.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hierarchy::{HierarchySpec, SummingMatrix};
use crate::reconcile::{reconcile, reconcile_levels, WeightMatrix};
use crate::sampling::JointSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Crps,
    Mae,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Crps => "CRPS",
            Metric::Mae => "MAE",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scale on which node samples and actuals are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// Per bottom period, as stored in joint samples.
    Common,
    /// The level's own aggregate scale (common value times `f_l`).
    Native,
}

impl Units {
    pub fn name(self) -> &'static str {
        match self {
            Units::Common => "common",
            Units::Native => "native",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "common" => Some(Units::Common),
            "native" => Some(Units::Native),
            _ => None,
        }
    }
}

/// CRPS of an ensemble against an observation, energy form:
/// `mean|x_i - z| - mean_{i,j}|x_i - x_j| / 2`.
pub fn crps_sample(sample: &[f64], z: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(crps_sorted(&sorted, z))
}

/// [`crps_sample`] for an ensemble already sorted ascending.
pub fn crps_sorted(sorted: &[f64], z: f64) -> f64 {
    let n = sorted.len() as f64;
    let mut abs_err = 0.0;
    let mut spread = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        abs_err += (x - z).abs();
        // sum_{i,j}|x_i - x_j| = 2 sum_i (2i - n + 1) x_(i)
        spread += (2.0 * i as f64 - n + 1.0) * x;
    }
    (abs_err / n - spread / (n * n)).max(0.0)
}

/// Empirical median; mean of the two central order statistics for even sizes.
pub fn median_point(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(median_sorted(&sorted))
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Node-level CRPS and absolute median error for one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScores {
    pub crps: Vec<f64>,
    pub mae: Vec<f64>,
}

impl NodeScores {
    pub fn metric(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Crps => &self.crps,
            Metric::Mae => &self.mae,
        }
    }
}

/// Scores every node of a sample matrix against the common-unit actuals.
pub fn node_scores(
    sample: &DMatrix<f64>,
    actual: &DVector<f64>,
    h: &HierarchySpec,
    units: Units,
) -> Result<NodeScores> {
    if sample.nrows() != h.nodes() || actual.len() != h.nodes() {
        return Err(Error::AlignmentError(format!(
            "sample has {} rows and actuals {} entries, hierarchy has {} nodes",
            sample.nrows(),
            actual.len(),
            h.nodes()
        )));
    }
    if sample.ncols() == 0 {
        return Err(Error::EmptySample);
    }
    let mut crps = Vec::with_capacity(h.nodes());
    let mut mae = Vec::with_capacity(h.nodes());
    let mut row = Vec::with_capacity(sample.ncols());
    for (i, level) in h.node_levels().into_iter().enumerate() {
        let scale = match units {
            Units::Common => 1.0,
            Units::Native => h.freq(level) as f64,
        };
        row.clear();
        row.extend(sample.row(i).iter().map(|v| v * scale));
        row.sort_unstable_by(f64::total_cmp);
        let z = actual[i] * scale;
        crps.push(crps_sorted(&row, z));
        mae.push((median_sorted(&row) - z).abs());
    }
    Ok(NodeScores { crps, mae })
}

/// Level means of a score, plus the mean of those level means.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub metric: Metric,
    pub levels: Vec<f64>,
    pub overall: f64,
}

impl ScoreTable {
    /// Averages per-origin node scores over origins, nodes within a level, and
    /// levels, in that order.
    pub fn from_node_scores(
        per_origin: &[NodeScores],
        h: &HierarchySpec,
        metric: Metric,
    ) -> Result<Self> {
        if per_origin.is_empty() {
            return Err(Error::AlignmentError("no forecast origins to score".into()));
        }
        let mut node_mean = vec![0.0; h.nodes()];
        for scores in per_origin {
            let values = scores.metric(metric);
            if values.len() != h.nodes() {
                return Err(Error::AlignmentError(format!(
                    "{} node scores for {} nodes",
                    values.len(),
                    h.nodes()
                )));
            }
            for (acc, v) in node_mean.iter_mut().zip(values) {
                *acc += v;
            }
        }
        let origins = per_origin.len() as f64;
        let levels: Vec<f64> = (0..h.levels())
            .map(|l| {
                let range = h.level_range(l);
                let count = range.len() as f64;
                node_mean[range].iter().sum::<f64>() / origins / count
            })
            .collect();
        let overall = levels.iter().sum::<f64>() / levels.len() as f64;
        Ok(Self {
            metric,
            levels,
            overall,
        })
    }
}

/// Scores a set of per-origin sample matrices.
pub fn score_samples(
    samples: &[&DMatrix<f64>],
    actuals: &[DVector<f64>],
    h: &HierarchySpec,
    units: Units,
) -> Result<Vec<NodeScores>> {
    if samples.len() != actuals.len() {
        return Err(Error::AlignmentError(format!(
            "{} samples for {} actuals",
            samples.len(),
            actuals.len()
        )));
    }
    samples
        .par_iter()
        .zip(actuals.par_iter())
        .map(|(s, a)| node_scores(s, a, h, units))
        .collect()
}

/// Native-unit score table for reconciled (or base) samples over test origins.
pub fn score_hierarchy(
    samples: &[&DMatrix<f64>],
    actuals: &[DVector<f64>],
    h: &HierarchySpec,
    metric: Metric,
) -> Result<ScoreTable> {
    let per_origin = score_samples(samples, actuals, h, Units::Native)?;
    ScoreTable::from_node_scores(&per_origin, h, metric)
}

/// Joint samples and common-unit actuals for a run of forecast origins.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub samples: Vec<JointSample>,
    pub actuals: Vec<DVector<f64>>,
}

impl ValidationSet {
    pub fn new(samples: Vec<JointSample>, actuals: Vec<DVector<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::AlignmentError("validation set is empty".into()));
        }
        if samples.len() != actuals.len() {
            return Err(Error::AlignmentError(format!(
                "{} samples for {} actuals",
                samples.len(),
                actuals.len()
            )));
        }
        Ok(Self { samples, actuals })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Cross-validation objective of an arbitrary combination matrix: common-unit
/// CRPS averaged over origins, nodes within each level, then levels.
pub fn cv_objective_for(p: &WeightMatrix, set: &ValidationSet, h: &HierarchySpec) -> Result<f64> {
    let s = SummingMatrix::new(h);
    let per_origin = set
        .samples
        .par_iter()
        .zip(set.actuals.par_iter())
        .map(|(y, actual)| {
            let rec = reconcile(&s, p, y)?;
            node_scores(rec.matrix(), actual, h, Units::Common)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::from_node_scores(&per_origin, h, Metric::Crps)?.overall)
}

/// Cross-validation objective of the level-weight matrix built from `v`.
///
/// `set` must already be assembled under the sampling scheme being tuned.
pub fn cv_objective(v: &[f64], set: &ValidationSet, h: &HierarchySpec) -> Result<f64> {
    let per_origin = set
        .samples
        .par_iter()
        .zip(set.actuals.par_iter())
        .map(|(y, actual)| {
            let rec = reconcile_levels(v, y.matrix(), h)?;
            node_scores(&rec, actual, h, Units::Common)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::from_node_scores(&per_origin, h, Metric::Crps)?.overall)
}
