//! Cross-validated selection of level weights.
//!
//! The level-weight matrix has one free weight per level. Constraint regimes
//! are turned into unconstrained searches by reparameterization:
//!
//! * simplex: `v = softmax(x)` over `L` free coordinates,
//! * affine: `L - 1` free coordinates with the last weight `1 - sum`,
//! * free: `v = x`.
//!
//! Several Nelder-Mead runs are started (bottom-up, lineal average, top-only
//! and seeded random points) and the best point seen is kept. The exact start
//! vectors are also evaluated, so the result never scores worse than any of
//! them.

pub mod nelder_mead;

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hierarchy::HierarchySpec;
use crate::reconcile::weights_from_flat;
use crate::sampling::{row_rng, Scheme};
use crate::scoring::{cv_objective, cv_objective_for, ValidationSet};

pub use nelder_mead::{minimize, NelderMeadOptions, NelderMeadOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintRegime {
    /// Weights sum to one and are nonnegative.
    Simplex,
    /// Weights sum to one.
    Affine,
    /// Unconstrained.
    Free,
}

impl ConstraintRegime {
    pub const ALL: [ConstraintRegime; 3] = [
        ConstraintRegime::Simplex,
        ConstraintRegime::Affine,
        ConstraintRegime::Free,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintRegime::Simplex => "simplex",
            ConstraintRegime::Affine => "affine",
            ConstraintRegime::Free => "free",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simplex" => Some(ConstraintRegime::Simplex),
            "affine" => Some(ConstraintRegime::Affine),
            "free" => Some(ConstraintRegime::Free),
            _ => None,
        }
    }

    /// Whether `v` satisfies the regime within `tol`.
    pub fn admits(self, v: &[f64], tol: f64) -> bool {
        let sum: f64 = v.iter().sum();
        match self {
            ConstraintRegime::Simplex => (sum - 1.0).abs() <= tol && v.iter().all(|&w| w >= -tol),
            ConstraintRegime::Affine => (sum - 1.0).abs() <= tol,
            ConstraintRegime::Free => v.iter().all(|w| w.is_finite()),
        }
    }

    #[cfg(test)]
    fn dimension(self, levels: usize) -> usize {
        match self {
            ConstraintRegime::Affine => levels - 1,
            _ => levels,
        }
    }

    fn to_weights(self, x: &[f64], levels: usize) -> Vec<f64> {
        match self {
            ConstraintRegime::Simplex => {
                let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
                let total: f64 = exp.iter().sum();
                exp.iter().map(|e| e / total).collect()
            }
            ConstraintRegime::Affine => {
                let mut v = x.to_vec();
                v.push(1.0 - x.iter().sum::<f64>());
                debug_assert_eq!(v.len(), levels);
                v
            }
            ConstraintRegime::Free => x.to_vec(),
        }
    }

    fn to_params(self, v: &[f64]) -> Vec<f64> {
        match self {
            ConstraintRegime::Simplex => v.iter().map(|w| w.max(SIMPLEX_FLOOR).ln()).collect(),
            ConstraintRegime::Affine => v[..v.len() - 1].to_vec(),
            ConstraintRegime::Free => v.to_vec(),
        }
    }
}

impl fmt::Display for ConstraintRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// smallest weight a softmax start point represents; exact vertices are
// evaluated separately
const SIMPLEX_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CvOptions {
    /// Seeded random starts on top of the fixed ones.
    pub random_starts: usize,
    pub nelder_mead: NelderMeadOptions,
    /// Nelder-Mead restarts from each run's end point.
    pub restarts: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            random_starts: 2,
            nelder_mead: NelderMeadOptions::default(),
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub regime: ConstraintRegime,
    pub scheme: Scheme,
    pub converged: bool,
}

impl CvResult {
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Start vectors in weight space: bottom-up, lineal average, top-only.
pub fn fixed_starts(levels: usize) -> Vec<Vec<f64>> {
    let mut bu = vec![0.0; levels];
    bu[levels - 1] = 1.0;
    let la = vec![1.0 / levels as f64; levels];
    let mut top = vec![0.0; levels];
    top[0] = 1.0;
    let mut starts = vec![bu, la, top];
    starts.dedup();
    starts
}

fn random_start<R: Rng>(regime: ConstraintRegime, levels: usize, rng: &mut R) -> Vec<f64> {
    match regime {
        ConstraintRegime::Simplex => {
            // uniform on the simplex
            let e: Vec<f64> = (0..levels).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = e.iter().sum();
            e.iter().map(|x| x / total).collect()
        }
        ConstraintRegime::Affine | ConstraintRegime::Free => {
            let mut v: Vec<f64> = (0..levels)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    1.0 / levels as f64 + z / levels as f64
                })
                .collect();
            if regime == ConstraintRegime::Affine {
                let shift = (1.0 - v.iter().sum::<f64>()) / levels as f64;
                v.iter_mut().for_each(|w| *w += shift);
            }
            v
        }
    }
}

fn seed_mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed used to permute the sample of validation origin `origin`.
pub fn permutation_seed(seed: u64, origin: usize) -> u64 {
    seed_mix(seed, 0x5045_524D_0000_0000 | origin as u64)
}

/// Assembles every stacked sample of `set` under `scheme`.
pub fn assemble_set(set: &ValidationSet, scheme: Scheme, seed: u64) -> Result<ValidationSet> {
    let samples = set
        .samples
        .iter()
        .enumerate()
        .map(|(i, y)| y.assemble(scheme, permutation_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    ValidationSet::new(samples, set.actuals.clone())
}

struct Run {
    x: Vec<f64>,
    fx: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

fn run_from(start: Vec<f64>, objective: &(dyn Fn(&[f64]) -> f64 + Sync), opts: &CvOptions) -> Run {
    let mut out = minimize(objective, &start, &opts.nelder_mead);
    let mut iterations = out.iterations;
    let mut evaluations = out.evaluations;
    for _ in 0..opts.restarts {
        let again = minimize(objective, &out.x, &opts.nelder_mead);
        iterations += again.iterations;
        evaluations += again.evaluations;
        let improved = again.fx < out.fx;
        let converged = again.converged;
        if improved {
            out = again;
        } else {
            out.converged = converged || out.converged;
            break;
        }
    }
    Run {
        x: out.x,
        fx: out.fx,
        iterations,
        evaluations,
        converged: out.converged,
    }
}

/// Chooses level weights minimizing the cross-validation objective.
///
/// `stacked` holds stacked validation samples; they are assembled under
/// `scheme` once, so every objective evaluation sees the same joint samples.
pub fn optimize_weights(
    stacked: &ValidationSet,
    scheme: Scheme,
    regime: ConstraintRegime,
    h: &HierarchySpec,
    seed: u64,
    opts: &CvOptions,
) -> Result<CvResult> {
    let set = assemble_set(stacked, scheme, seed)?;
    let levels = h.levels();
    let objective = |v: &[f64]| cv_objective(v, &set, h).unwrap_or(f64::INFINITY);

    let mut starts = fixed_starts(levels);
    let mut rng = row_rng(seed_mix(seed, 0x5354_4152_5453), regime as u64);
    for _ in 0..opts.random_starts {
        starts.push(random_start(regime, levels, &mut rng));
    }

    let mut best: Option<CvResult> = None;
    let mut consider = |weights: Vec<f64>, fx: f64, iterations, evaluations, converged| {
        if !fx.is_finite() {
            return;
        }
        let better = best.as_ref().is_none_or(|b| fx < b.objective);
        if better {
            best = Some(CvResult {
                weights,
                objective: fx,
                iterations,
                evaluations,
                regime,
                scheme,
                converged,
            });
        }
    };

    for start in fixed_starts(levels) {
        let fx = objective(&start);
        consider(start, fx, 0, 1, true);
    }

    let param = |x: &[f64]| regime.to_weights(x, levels);
    let searched = |x: &[f64]| objective(&param(x));
    let runs: Vec<Run> = starts
        .par_iter()
        .map(|start| run_from(regime.to_params(start), &searched, opts))
        .collect();

    let any_converged = runs.iter().any(|r| r.converged);
    let total_iterations = runs.iter().map(|r| r.iterations).sum();
    let total_evaluations: usize =
        runs.iter().map(|r| r.evaluations).sum::<usize>() + fixed_starts(levels).len();
    for run in runs {
        let weights = param(&run.x);
        // re-evaluate at the reported weights so objective matches them exactly
        let fx = objective(&weights);
        consider(weights, fx, run.iterations, run.evaluations, run.converged);
    }

    let mut best = best.ok_or(Error::NonFinite)?;
    best.iterations = total_iterations;
    best.evaluations = total_evaluations;
    best.converged = any_converged;
    if !any_converged {
        return Err(Error::DidNotConverge {
            best: Box::new(best),
        });
    }
    Ok(best)
}

/// Node-level weights, one per node, searched without constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCvResult {
    /// Weights in flat node order.
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub scheme: Scheme,
    pub converged: bool,
}

/// Optimizes one weight per node (the full sparse pattern), starting from
/// bottom-up and lineal-average weights. Only the unconstrained regime is
/// supported since row sums then involve different nodes per row.
pub fn optimize_node_weights(
    stacked: &ValidationSet,
    scheme: Scheme,
    h: &HierarchySpec,
    seed: u64,
    opts: &CvOptions,
) -> Result<NodeCvResult> {
    let set = assemble_set(stacked, scheme, seed)?;
    let objective = |v: &[f64]| {
        weights_from_flat(v, h)
            .and_then(|p| cv_objective_for(&p, &set, h))
            .unwrap_or(f64::INFINITY)
    };
    let levels = h.node_levels();
    let expand = |v: &[f64]| -> Vec<f64> { levels.iter().map(|&l| v[l]).collect() };

    let mut best: Option<NodeCvResult> = None;
    let mut any_converged = false;
    let mut iterations = 0;
    for start in fixed_starts(h.levels()).into_iter().take(2) {
        let x0 = expand(&start);
        let f0 = objective(&x0);
        let run = run_from(x0.clone(), &objective, opts);
        iterations += run.iterations;
        any_converged |= run.converged;
        for (x, fx) in [(x0, f0), (run.x, run.fx)] {
            if fx.is_finite() && best.as_ref().is_none_or(|b| fx < b.objective) {
                best = Some(NodeCvResult {
                    weights: x,
                    objective: fx,
                    iterations: 0,
                    scheme,
                    converged: false,
                });
            }
        }
    }
    let mut best = best.ok_or(Error::NonFinite)?;
    best.iterations = iterations;
    best.converged = any_converged;
    Ok(best)
}
