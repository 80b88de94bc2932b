//! End-to-end evaluation over rolling forecast origins.
//!
//! The series is cut into whole cycles and split into training, validation
//! and test periods. One AR(1) model per level is fitted on the training
//! period only. Every origin issues one cycle of per-level sample paths from
//! the last observation before it. Cross-validated weights are chosen from
//! validation origins alone; test origins are built only afterwards.

use std::fs;
use std::path::PathBuf;

use chrono::{DateTime, Duration, Utc};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::cvopt::{
    optimize_node_weights, optimize_weights, permutation_seed, CvOptions, NelderMeadOptions,
};
use crate::error::{Error, Result};
use crate::hierarchy::{aggregate_to_level, cycle_vector, HierarchySpec, SummingMatrix};
use crate::reconcile::{
    check_coherence, fixed_weights, reconcile, weights_from_flat, weights_from_levels, wls_weights,
    WeightMatrix,
};
use crate::sampling::{stack, JointSample, Scheme};
use crate::scoring::{score_samples, Metric, NodeScores, ScoreTable, ValidationSet};
use crate::simkit::{fit_level, sample_paths, simulate_truth, LevelForecaster};

use super::config::{DataSource, MethodSpec, RunConfig, Split};
use super::ingest::ingest_csv;
use super::report::*;

const PATH_SALT: u64 = 0x7061_7468;
const CV_SALT: u64 = 0x6376;
const TEST_SALT: u64 = 0x7465_7374;

fn salted(seed: u64, salt: u64) -> u64 {
    seed.rotate_left(17) ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Bottom-level observations in whole cycles with the split in cycle counts.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub bottom: Vec<f64>,
    pub start: DateTime<Utc>,
    pub period: Duration,
    pub train_cycles: usize,
    pub val_cycles: usize,
    pub test_cycles: usize,
}

impl Dataset {
    pub fn total_cycles(&self) -> usize {
        self.train_cycles + self.val_cycles + self.test_cycles
    }

    pub fn origin_time(&self, cycle: usize, h: &HierarchySpec) -> DateTime<Utc> {
        self.start + self.period * (cycle * h.cycle_len()) as i32
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let h = &cfg.hierarchy;
    let cycle = h.cycle_len();
    match &cfg.source {
        DataSource::Synthetic { .. } => {
            let scn = cfg.scenario().ok_or_else(|| {
                Error::Config("synthetic runs need a split by cycle counts".into())
            })?;
            Ok(Dataset {
                bottom: simulate_truth(&scn)?,
                start: cfg.start,
                period: cfg.period,
                train_cycles: scn.train_cycles,
                val_cycles: scn.val_cycles,
                test_cycles: scn.test_cycles,
            })
        }
        DataSource::Csv(path) => {
            let series = ingest_csv(path, cfg.period)?;
            if series.values.len() % cycle != 0 {
                return Err(Error::PartialCycle {
                    len: series.values.len(),
                    cycle,
                });
            }
            let available = series.values.len() / cycle;
            let cycle_span = cfg.period * cycle as i32;
            let to_cycles = |end: DateTime<Utc>, name: &str| -> Result<usize> {
                let span = end - series.start;
                if span.num_seconds() <= 0 || span.num_seconds() % cycle_span.num_seconds() != 0 {
                    return Err(Error::Config(format!(
                        "{name} must fall on a cycle boundary after the first timestamp"
                    )));
                }
                Ok((span.num_seconds() / cycle_span.num_seconds()) as usize)
            };
            let (train, val, test) = match cfg.split {
                Split::Cycles { train, val, test } => (train, val, test),
                Split::Timestamps { train_end, val_end } => {
                    let train = to_cycles(train_end, "train_end")?;
                    let val = to_cycles(val_end, "val_end")? - train;
                    (train, val, available.saturating_sub(train + val))
                }
            };
            if train == 0 || val == 0 || test == 0 || train + val + test > available {
                return Err(Error::AlignmentError(format!(
                    "split {train}/{val}/{test} cycles does not fit {available} available cycles"
                )));
            }
            let mut bottom = series.values;
            bottom.truncate((train + val + test) * cycle);
            Ok(Dataset {
                bottom,
                start: series.start,
                period: cfg.period,
                train_cycles: train,
                val_cycles: val,
                test_cycles: test,
            })
        }
    }
}

/// Per-level forecasters fitted on the training cycles of `history`.
pub fn fit_levels(
    history: &[f64],
    train_cycles: usize,
    h: &HierarchySpec,
) -> Result<Vec<LevelForecaster>> {
    (0..h.levels())
        .map(|level| {
            let series = aggregate_to_level(history, h, level)?;
            let train = &series[..train_cycles * h.nodes_in_level(level)];
            fit_level(train, level, h.freq(level))
        })
        .collect()
}

/// Stacked sample and common-unit actuals for forecast origins `cycles`,
/// using only `history` (which must cover every requested cycle).
pub fn origin_samples(
    history: &[f64],
    models: &[LevelForecaster],
    cycles: std::ops::Range<usize>,
    h: &HierarchySpec,
    samples: usize,
    seed: u64,
) -> Result<(Vec<JointSample>, Vec<DVector<f64>>)> {
    let cycle = h.cycle_len();
    if cycles.start == 0 || cycles.end * cycle > history.len() {
        return Err(Error::AlignmentError(format!(
            "origins {cycles:?} are not covered by {} observations",
            history.len()
        )));
    }
    let level_series: Vec<Vec<f64>> = (0..h.levels())
        .map(|l| aggregate_to_level(history, h, l))
        .collect::<Result<_>>()?;
    let path_seed = salted(seed, PATH_SALT);
    let per_origin: Vec<(JointSample, DVector<f64>)> = cycles
        .into_par_iter()
        .map(|c| {
            let levels = models
                .iter()
                .map(|fc| {
                    let nodes = h.nodes_in_level(fc.level);
                    let last = level_series[fc.level][c * nodes - 1];
                    let stream = (c * h.levels() + fc.level) as u64;
                    sample_paths(fc, last, nodes, samples, path_seed, stream)
                })
                .collect::<Result<Vec<_>>>()?;
            let joint = stack(&levels, h)?;
            let actual = cycle_vector(&history[c * cycle..(c + 1) * cycle], h)?;
            Ok((joint, actual))
        })
        .collect::<Result<_>>()?;
    Ok(per_origin.into_iter().unzip())
}

/// Weight selection outputs for one scheme.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub weights: Vec<(MethodSpec, WeightMatrix)>,
    pub cv: Vec<CvRecord>,
    pub node_weights: Vec<NodeWeightRecord>,
}

/// Chooses every method's weight matrix for `scheme`. Only the training and
/// validation cycles are visible here.
pub fn select_weights(
    cfg: &RunConfig,
    history: &[f64],
    train_cycles: usize,
    val_cycles: usize,
    scheme: Scheme,
) -> Result<Selection> {
    let h = &cfg.hierarchy;
    if history.len() != (train_cycles + val_cycles) * h.cycle_len() {
        return Err(Error::AlignmentError(
            "weight selection must see exactly the training and validation cycles".into(),
        ));
    }
    let mut selection = Selection::default();
    let needs_cv = cfg
        .methods
        .iter()
        .any(|m| matches!(m, MethodSpec::CvLevel(_) | MethodSpec::CvFull));
    let validation = if needs_cv {
        let models = fit_levels(history, train_cycles, h)?;
        let (samples, actuals) = origin_samples(
            history,
            &models,
            train_cycles..train_cycles + val_cycles,
            h,
            cfg.samples,
            cfg.seed,
        )?;
        Some(ValidationSet::new(samples, actuals)?)
    } else {
        None
    };
    let opts = CvOptions {
        random_starts: cfg.cv_random_starts,
        nelder_mead: NelderMeadOptions {
            max_iterations: cfg.cv_max_iterations,
            ..Default::default()
        },
        ..Default::default()
    };
    let cv_seed = salted(cfg.seed, CV_SALT);

    for &method in &cfg.methods {
        let p = match method {
            MethodSpec::Fixed(m) => fixed_weights(m, h)?,
            MethodSpec::Wls => wls_weights(h)?,
            MethodSpec::CvLevel(regime) => {
                let set = validation.as_ref().expect("validation set built for cv");
                let result = match optimize_weights(set, scheme, regime, h, cv_seed, &opts) {
                    Ok(r) => r,
                    Err(Error::DidNotConverge { best }) => *best,
                    Err(e) => return Err(e),
                };
                selection.cv.push(CvRecord {
                    scheme: scheme.name().to_string(),
                    method: method.label(),
                    weights: result.weights.clone(),
                    objective: result.objective,
                    iterations: result.iterations,
                    converged: result.converged,
                });
                weights_from_levels(&result.weights, h)?
            }
            MethodSpec::CvFull => {
                let set = validation.as_ref().expect("validation set built for cv");
                let result = optimize_node_weights(set, scheme, h, cv_seed, &opts)?;
                selection.node_weights.push(NodeWeightRecord {
                    scheme: scheme.name().to_string(),
                    weights: result.weights.clone(),
                    objective: result.objective,
                });
                weights_from_flat(&result.weights, h)?
            }
        };
        selection.weights.push((method, p));
    }
    Ok(selection)
}

/// Everything a run produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub crps: Vec<ReportRow>,
    pub mae: Vec<ReportRow>,
    pub cv: Vec<CvRecord>,
    pub node_weights: Vec<NodeWeightRecord>,
    pub per_origin: Vec<OriginRecord>,
    pub coherence: Vec<CoherenceRecord>,
}

impl Report {
    #[allow(clippy::too_many_arguments)]
    fn push_scores(
        &mut self,
        scheme: &str,
        method: &str,
        scores: &[NodeScores],
        stamps: &[String],
        first_origin: usize,
        h: &HierarchySpec,
        per_origin: bool,
    ) -> Result<()> {
        self.crps.push(ReportRow::new(
            scheme,
            method,
            &ScoreTable::from_node_scores(scores, h, Metric::Crps)?,
        ));
        self.mae.push(ReportRow::new(
            scheme,
            method,
            &ScoreTable::from_node_scores(scores, h, Metric::Mae)?,
        ));
        if per_origin {
            for (i, s) in scores.iter().enumerate() {
                self.per_origin.push(OriginRecord {
                    scheme: scheme.to_string(),
                    method: method.to_string(),
                    origin: first_origin + i,
                    timestamp: stamps[i].clone(),
                    crps: s.crps.clone(),
                    mae: s.mae.clone(),
                });
            }
        }
        Ok(())
    }

    /// Writes every report file into `dir`.
    pub fn write(&self, dir: &std::path::Path, h: &HierarchySpec) -> Result<Vec<&'static str>> {
        let mut written = Vec::new();
        write_atomic(dir, CRPS_FILE, &render_table(&self.crps, h))?;
        written.push(CRPS_FILE);
        write_atomic(dir, MAE_FILE, &render_table(&self.mae, h))?;
        written.push(MAE_FILE);
        if !self.cv.is_empty() {
            write_atomic(dir, CV_WEIGHTS_FILE, &render_cv(&self.cv, h))?;
            written.push(CV_WEIGHTS_FILE);
        }
        if !self.node_weights.is_empty() {
            write_atomic(
                dir,
                CV_NODE_WEIGHTS_FILE,
                &render_node_weights(&self.node_weights, h),
            )?;
            written.push(CV_NODE_WEIGHTS_FILE);
        }
        if !self.per_origin.is_empty() {
            write_atomic(
                dir,
                PER_ORIGIN_FILE,
                &render_per_origin(&self.per_origin, h),
            )?;
            written.push(PER_ORIGIN_FILE);
        }
        write_atomic(dir, COHERENCE_FILE, &render_coherence(&self.coherence))?;
        written.push(COHERENCE_FILE);
        Ok(written)
    }
}

fn manifest(cfg: &RunConfig, data: Option<&Dataset>) -> String {
    let mut out = String::new();
    for (k, v) in cfg.settings.entries() {
        out.push_str(&format!("{k} = {v}\n"));
    }
    let h = &cfg.hierarchy;
    out.push_str(&format!(
        "# derived\nlevels = {}\nnodes = {}\nbottom_nodes = {}\n",
        h.levels(),
        h.nodes(),
        h.bottom_nodes()
    ));
    if let Some(d) = data {
        out.push_str(&format!(
            "train_cycles_used = {}\nval_cycles_used = {}\ntest_cycles_used = {}\nfirst_timestamp = {}\n",
            d.train_cycles,
            d.val_cycles,
            d.test_cycles,
            d.start.to_rfc3339()
        ));
    }
    let methods: Vec<String> = cfg.methods.iter().map(MethodSpec::label).collect();
    out.push_str(&format!("method_labels = {}\n", methods.join(",")));
    out
}

/// Runs the full protocol and writes reports into `cfg.out`. On failure the
/// rows finished so far are still written, along with a failure manifest.
pub fn run_experiment(cfg: &RunConfig) -> Result<Report> {
    let out: PathBuf = cfg.out.clone();
    fs::create_dir_all(&out)?;
    let stale = out.join(FAILURE_FILE);
    if stale.exists() {
        fs::remove_file(&stale)?;
    }

    let mut report = Report::default();
    let mut data = None;
    let result = run_into(cfg, &mut report, &mut data);
    write_atomic(&out, MANIFEST_FILE, &manifest(cfg, data.as_ref()))?;
    match result {
        Ok(()) => {
            report.write(&out, &cfg.hierarchy)?;
            Ok(report)
        }
        Err(e) => {
            let written = report.write(&out, &cfg.hierarchy).unwrap_or_default();
            let mut text = format!("error = {e}\n");
            text.push_str(&format!("completed_rows = {}\n", report.crps.len()));
            text.push_str(&format!("files = {}\n", written.join(",")));
            write_atomic(&out, FAILURE_FILE, &text)?;
            Err(e)
        }
    }
}

fn run_into(cfg: &RunConfig, report: &mut Report, data_slot: &mut Option<Dataset>) -> Result<()> {
    let h = &cfg.hierarchy;
    let data = load_dataset(cfg)?;
    let cycle = h.cycle_len();
    let (train, val, test) = (data.train_cycles, data.val_cycles, data.test_cycles);
    *data_slot = Some(data.clone());

    // weight selection sees training and validation cycles only
    let history = &data.bottom[..(train + val) * cycle];
    let selections = cfg
        .schemes
        .iter()
        .map(|&scheme| select_weights(cfg, history, train, val, scheme).map(|s| (scheme, s)))
        .collect::<Result<Vec<_>>>()?;

    let models = fit_levels(&data.bottom, train, h)?;
    let test_range = train + val..train + val + test;
    let (stacked, actuals) = origin_samples(
        &data.bottom,
        &models,
        test_range.clone(),
        h,
        cfg.samples,
        cfg.seed,
    )?;
    let stamps: Vec<String> = test_range
        .clone()
        .map(|c| data.origin_time(c, h).to_rfc3339())
        .collect();

    let base: Vec<_> = stacked.iter().map(JointSample::matrix).collect();
    let scores = score_samples(&base, &actuals, h, cfg.report_units)?;
    report.push_scores(
        "none",
        "base",
        &scores,
        &stamps,
        test_range.start,
        h,
        cfg.per_origin,
    )?;

    let s = SummingMatrix::new(h);
    let test_seed = salted(cfg.seed, TEST_SALT);
    for (scheme, selection) in selections {
        let assembled = stacked
            .iter()
            .enumerate()
            .map(|(i, y)| y.assemble(scheme, permutation_seed(test_seed, i)))
            .collect::<Result<Vec<_>>>()?;
        report.cv.extend(selection.cv);
        report.node_weights.extend(selection.node_weights);
        for (method, p) in &selection.weights {
            let label = method.label();
            let reconciled = assembled
                .par_iter()
                .map(|y| reconcile(&s, p, y))
                .collect::<Result<Vec<_>>>()?;
            for (i, rec) in reconciled.iter().enumerate() {
                let c = check_coherence(rec.matrix(), &s, cfg.coherence_tol)?;
                report.coherence.push(CoherenceRecord {
                    scheme: scheme.name().to_string(),
                    method: label.clone(),
                    origin: test_range.start + i,
                    max_violation: c.max_violation,
                    coherent: c.coherent,
                });
                if !c.coherent {
                    return Err(Error::Incoherent {
                        violation: c.max_violation,
                        tol: cfg.coherence_tol,
                    });
                }
            }
            let matrices: Vec<_> = reconciled.iter().map(|r| r.matrix()).collect();
            let scores = score_samples(&matrices, &actuals, h, cfg.report_units)?;
            report.push_scores(
                scheme.name(),
                &label,
                &scores,
                &stamps,
                test_range.start,
                h,
                cfg.per_origin,
            )?;
        }
    }
    Ok(())
}
