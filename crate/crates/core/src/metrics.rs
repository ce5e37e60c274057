//! Classification metrics and repeated-experiment summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{split_train_test, DataShard, DatasetError};
use crate::forest::{Forest, ForestError};
use crate::protocol::{simulate_with, ProtocolError, SessionConfig, SimOptions};
use crate::rng::{derive_seed, TAG_REPEAT};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    Length { pred: usize, truth: usize },
    #[error("cannot score an empty prediction set")]
    Empty,
    #[error("binary F1 needs exactly 2 classes, label space has {0}")]
    Mode(usize),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("repeats must be at least 1")]
    Repeats,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Mode {
    /// F1 of class index 1.
    BinaryPositive,
    /// Pooled over all classes; equals accuracy for single-label predictions.
    Micro,
}

impl F1Mode {
    /// Binary-positive for two classes, micro otherwise.
    pub fn auto(classes: usize) -> Self {
        if classes == 2 {
            F1Mode::BinaryPositive
        } else {
            F1Mode::Micro
        }
    }
}

impl std::str::FromStr for F1Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" | "binary_positive" | "binary-positive" => Ok(F1Mode::BinaryPositive),
            "micro" => Ok(F1Mode::Micro),
            other => Err(format!("unknown F1 mode `{other}` (expected binary or micro)")),
        }
    }
}

fn check(pred: &[usize], truth: &[usize]) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::Length {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `(true positives, predicted positives, actual positives)` per class.
fn confusion(pred: &[usize], truth: &[usize], classes: usize) -> Result<Vec<(u64, u64, u64)>, MetricsError> {
    let mut cells = vec![(0u64, 0u64, 0u64); classes];
    for (&p, &t) in pred.iter().zip(truth) {
        for label in [p, t] {
            if label >= classes {
                return Err(MetricsError::Label { label, classes });
            }
        }
        cells[p].1 += 1;
        cells[t].2 += 1;
        if p == t {
            cells[p].0 += 1;
        }
    }
    Ok(cells)
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else if p == r {
        p
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn f1(pred: &[usize], truth: &[usize], classes: usize, mode: F1Mode) -> Result<f64, MetricsError> {
    check(pred, truth)?;
    let cells = confusion(pred, truth, classes)?;
    match mode {
        F1Mode::BinaryPositive => {
            if classes != 2 {
                return Err(MetricsError::Mode(classes));
            }
            let (tp, pp, ap) = cells[1];
            Ok(harmonic(ratio(tp, pp), ratio(tp, ap)))
        }
        F1Mode::Micro => {
            let tp: u64 = cells.iter().map(|c| c.0).sum();
            let pp: u64 = cells.iter().map(|c| c.1).sum();
            let ap: u64 = cells.iter().map(|c| c.2).sum();
            Ok(harmonic(ratio(tp, pp), ratio(tp, ap)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub support: u64,
}

/// Precision and recall of every class; zero where undefined.
pub fn per_class_scores(pred: &[usize], truth: &[usize], class_names: &[String]) -> Result<Vec<ClassScore>, MetricsError> {
    check(pred, truth)?;
    let cells = confusion(pred, truth, class_names.len())?;
    Ok(cells
        .iter()
        .zip(class_names)
        .map(|(&(tp, pp, ap), name)| ClassScore {
            class: name.clone(),
            precision: ratio(tp, pp),
            recall: ratio(tp, ap),
            support: ap,
        })
        .collect())
}

/// Scores of one trained forest on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub f1: f64,
    pub f1_mode: F1Mode,
    pub per_class: Vec<ClassScore>,
    pub n_test: usize,
}

pub fn evaluate(forest: &Forest, test: &DataShard, mode: Option<F1Mode>) -> Result<Evaluation, MetricsError> {
    let pred = forest.predict_all(test.rows())?;
    let truth = test.labels();
    let classes = forest.schema.labels.classes();
    let mode = mode.unwrap_or_else(|| F1Mode::auto(classes.len()));
    Ok(Evaluation {
        accuracy: accuracy(&pred, truth)?,
        f1: f1(&pred, truth, classes.len(), mode)?,
        f1_mode: mode,
        per_class: per_class_scores(&pred, truth, classes)?,
        n_test: test.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub stddev: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stddev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Summary { mean, stddev }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub seed: u64,
    pub accuracy: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Summary,
    pub f1: Summary,
    pub f1_mode: F1Mode,
    /// Per-class precision and recall averaged over repeats.
    pub per_class: Vec<ClassScore>,
    pub n_test: usize,
    pub repeats: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Summary>,
    pub runs: Vec<RepeatResult>,
}

impl EvalReport {
    pub fn from_runs(runs: Vec<(u64, Evaluation, Option<f64>)>) -> EvalReport {
        assert!(!runs.is_empty(), "a report needs at least one run");
        let acc: Vec<f64> = runs.iter().map(|r| r.1.accuracy).collect();
        let f1s: Vec<f64> = runs.iter().map(|r| r.1.f1).collect();
        let eps: Option<Vec<f64>> = runs.iter().map(|r| r.2).collect();
        let k = runs.len() as f64;
        let mut per_class = runs[0].1.per_class.clone();
        for (i, c) in per_class.iter_mut().enumerate() {
            c.precision = runs.iter().map(|r| r.1.per_class[i].precision).sum::<f64>() / k;
            c.recall = runs.iter().map(|r| r.1.per_class[i].recall).sum::<f64>() / k;
        }
        EvalReport {
            accuracy: Summary::of(&acc),
            f1: Summary::of(&f1s),
            f1_mode: runs[0].1.f1_mode,
            per_class,
            n_test: runs[0].1.n_test,
            repeats: runs.len(),
            epsilon: eps.map(|e| Summary::of(&e)),
            runs: runs
                .into_iter()
                .map(|(seed, e, epsilon)| RepeatResult {
                    seed,
                    accuracy: e.accuracy,
                    f1: e.f1,
                    epsilon,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Aligned plain-text rendering.
    pub fn table(&self) -> String {
        let mode = match self.f1_mode {
            F1Mode::BinaryPositive => "binary",
            F1Mode::Micro => "micro",
        };
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>8} {:>8}\n", "metric", "mean", "stddev"));
        out.push_str(&format!(
            "{:<12} {:>8.4} {:>8.4}\n",
            "accuracy", self.accuracy.mean, self.accuracy.stddev
        ));
        out.push_str(&format!(
            "{:<12} {:>8.4} {:>8.4}\n",
            format!("f1 ({mode})"),
            self.f1.mean,
            self.f1.stddev
        ));
        if let Some(e) = self.epsilon {
            out.push_str(&format!("{:<12} {:>8.4} {:>8.4}\n", "epsilon", e.mean, e.stddev));
        }
        out.push_str(&format!("repeats {}, test rows {}\n\n", self.repeats, self.n_test));
        let width = self.per_class.iter().map(|c| c.class.len()).max().unwrap_or(5).max(5);
        out.push_str(&format!("{:<width$} {:>9} {:>9} {:>8}\n", "class", "precision", "recall", "support"));
        for c in &self.per_class {
            out.push_str(&format!(
                "{:<width$} {:>9.4} {:>9.4} {:>8}\n",
                c.class, c.precision, c.recall, c.support
            ));
        }
        out
    }
}

/// Settings of a repeated train/evaluate experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub repeats: usize,
    pub train_fraction: f64,
    pub f1_mode: Option<F1Mode>,
    /// Run repeats concurrently; results do not depend on this.
    pub parallel: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            repeats: 1,
            train_fraction: 0.8,
            f1_mode: None,
            parallel: true,
        }
    }
}

/// Seed of repeat `r` for a session seeded by `seed`. Repeat 0 uses the
/// session seed itself, so a single-repeat experiment trains exactly the
/// model a distributed session with the same config would.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        derive_seed(seed, &[TAG_REPEAT, r as u64])
    }
}

/// One train/test split, simulated training, and evaluation.
pub fn run_once(
    config: &SessionConfig,
    data: &DataShard,
    train_fraction: f64,
    f1_mode: Option<F1Mode>,
) -> Result<(Forest, Evaluation), MetricsError> {
    let (train, test) = split_train_test(data, train_fraction, config.seed)?;
    let sim = simulate_with(
        config,
        &train,
        SimOptions {
            record: false,
            ..SimOptions::default()
        },
    )?;
    let eval = evaluate(&sim.forest, &test, f1_mode)?;
    Ok((sim.forest, eval))
}

/// Repeats split + training + evaluation with seeds derived from
/// `config.seed`, and summarizes the scores.
pub fn repeat_experiment(
    config: &SessionConfig,
    data: &DataShard,
    opts: &ExperimentOptions,
) -> Result<EvalReport, MetricsError> {
    repeat_experiment_with_model(config, data, opts).map(|(report, _)| report)
}

/// Like [`repeat_experiment`], also returning the forest of repeat 0.
pub fn repeat_experiment_with_model(
    config: &SessionConfig,
    data: &DataShard,
    opts: &ExperimentOptions,
) -> Result<(EvalReport, Forest), MetricsError> {
    if opts.repeats == 0 {
        return Err(MetricsError::Repeats);
    }
    type Run = ((u64, Evaluation, Option<f64>), Option<Forest>);
    let one = |r: usize| -> Result<Run, MetricsError> {
        let seed = repeat_seed(config.seed, r);
        let cfg = SessionConfig { seed, ..config.clone() };
        let (forest, eval) = run_once(&cfg, data, opts.train_fraction, opts.f1_mode)?;
        let eps = forest.training.as_ref().and_then(|t| t.epsilon_total);
        log::info!("repeat {r}: accuracy {:.4}, f1 {:.4}", eval.accuracy, eval.f1);
        Ok(((seed, eval, eps), (r == 0).then_some(forest)))
    };
    let runs: Vec<Run> = if opts.parallel {
        (0..opts.repeats).into_par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        (0..opts.repeats).map(one).collect::<Result<_, _>>()?
    };
    let (runs, mut forests): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let first = forests.swap_remove(0).expect("repeat 0 keeps its forest");
    Ok((EvalReport::from_runs(runs), first))
}
