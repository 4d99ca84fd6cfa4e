//! Datasets, CSV ingestion, stratified folds and cross-validation.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Architecture;
use crate::encoding::Preprocessor;
use crate::error::{Error, Result};
use crate::model::{predict_multiclass, Classifier, EstimatorMode};
use crate::seed;
use crate::training::{train, EpochMetrics, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
    class_names: Vec<String>,
}

impl Dataset {
    /// Class names default to the indices.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::with_classes(features, labels, names)
    }

    pub fn with_classes(features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                found: labels.len(),
            });
        }
        let n_features = features[0].len();
        if let Some(row) = features.iter().find(|r| r.len() != n_features) {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                found: row.len(),
            });
        }
        let n_classes = class_names.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidLabel {
                label: bad,
                reason: format!("only {n_classes} classes declared"),
            });
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
            class_names,
        })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, keeping the class declaration.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Most frequent class (lowest index on ties).
    pub fn majority_class(&self) -> usize {
        let counts = self.class_counts();
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        best
    }
}

/// Binary relabelling: 1 for `positive_class`, 0 for everything else.
pub fn one_vs_all(d: &Dataset, positive_class: usize) -> Result<Dataset> {
    if positive_class >= d.n_classes {
        return Err(Error::InvalidLabel {
            label: positive_class,
            reason: format!("dataset has {} classes", d.n_classes),
        });
    }
    let labels = d.labels.iter().map(|&l| usize::from(l == positive_class)).collect();
    let names = vec![
        format!("not {}", d.class_names[positive_class]),
        d.class_names[positive_class].clone(),
    ];
    Dataset::with_classes(d.features.clone(), labels, names)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    First,
    Last,
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: LabelColumn,
    pub delimiter: u8,
    pub header: bool,
    /// Feature columns to keep; `None` takes every non-label column.
    pub feature_columns: Option<Vec<usize>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: LabelColumn::Last,
            delimiter: b',',
            header: false,
            feature_columns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub dataset: Dataset,
    /// Rows dropped because of missing values.
    pub rejected_rows: usize,
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "?" | "NA" | "NaN" | "nan")
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Loaded> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, schema)
}

/// Parse CSV text. Labels are arbitrary strings; classes are numbered in
/// ascending numeric order when every label is numeric, else lexically.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<(Vec<f64>, String)> = Vec::new();
    let mut rejected = 0;
    let mut width = None;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let label_idx = match schema.label_column {
            LabelColumn::First => 0,
            LabelColumn::Last => record.len() - 1,
            LabelColumn::Index(i) => i,
        };
        if label_idx >= record.len() {
            return Err(Error::Parse {
                line,
                message: format!("label column {label_idx} out of range"),
            });
        }
        let columns: Vec<usize> = match &schema.feature_columns {
            Some(cols) => cols.clone(),
            None => (0..record.len()).filter(|&c| c != label_idx).collect(),
        };
        if let Some(&c) = columns.iter().find(|&&c| c >= record.len() || c == label_idx) {
            return Err(Error::Parse {
                line,
                message: format!("invalid feature column {c}"),
            });
        }
        if is_missing(&record[label_idx]) || columns.iter().any(|&c| is_missing(&record[c])) {
            rejected += 1;
            continue;
        }
        let features = columns
            .iter()
            .map(|&c| {
                record[c].parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("column {c}: cannot parse {:?} as a number", &record[c]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((features, record[label_idx].to_string()));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut names: Vec<String> = rows.iter().map(|(_, l)| l.clone()).collect();
    names.sort();
    names.dedup();
    let numeric: Option<Vec<f64>> = names.iter().map(|n| n.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(names).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = paired.into_iter().map(|(_, n)| n).collect();
    }
    let (features, labels) = rows
        .into_iter()
        .map(|(f, l)| (f, names.iter().position(|n| *n == l).expect("label collected above")))
        .unzip();
    Ok(Loaded {
        dataset: Dataset::with_classes(features, labels, names)?,
        rejected_rows: rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// `assignments[rep][sample]` is the test fold of the sample.
    pub assignments: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Train and test indices of one cell.
    pub fn split(&self, rep: usize, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.assignments[rep].len()).partition(|&i| self.assignments[rep][i] == fold);
        (train, test)
    }
}

/// Stratified folds: each class is shuffled, classes are laid end to end and
/// sample `i` of that sequence goes to fold `i mod k`.
pub fn make_folds(d: &Dataset, k: usize, repetitions: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    if repetitions == 0 {
        return Err(Error::Config("need at least 1 repetition".into()));
    }
    for (class, &count) in d.class_counts().iter().enumerate() {
        if count > 0 && count < k {
            return Err(Error::ClassTooSmall { class, count, folds: k });
        }
    }
    let assignments = (0..repetitions)
        .map(|rep| {
            let mut rng = seed::rng(seed, &[rep as u64]);
            let mut order = Vec::with_capacity(d.len());
            for class in 0..d.n_classes {
                let mut members: Vec<usize> = (0..d.len()).filter(|&i| d.labels[i] == class).collect();
                members.shuffle(&mut rng);
                order.extend(members);
            }
            let mut fold = vec![0; d.len()];
            for (pos, &i) in order.iter().enumerate() {
                fold[i] = pos % k;
            }
            fold
        })
        .collect();
    Ok(FoldPlan {
        k,
        repetitions,
        seed,
        assignments,
    })
}

pub fn misclassification_rate(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let wrong = predictions.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        if values.is_empty() {
            return Summary { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

/// Everything a cross-validation run needs besides the data and fold plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub architecture: Architecture,
    pub pad_value: f64,
    pub copies: usize,
    pub train: TrainConfig,
    /// Estimator used for reported errors.
    pub evaluation: EstimatorMode,
}

impl ExperimentSetup {
    pub fn preprocessor(&self, input_dim: usize) -> Result<Preprocessor> {
        let p = Preprocessor::new(input_dim, self.pad_value, self.copies)?;
        if p.n_qubits() != self.architecture.n_qubits {
            return Err(Error::Config(format!(
                "{input_dim} features encode into {} qubits but the architecture has {}",
                p.n_qubits(),
                self.architecture.n_qubits
            )));
        }
        Ok(p)
    }

    /// Train one binary classifier per task: a single one for two-class data
    /// (positive class 1), otherwise one per class against the rest.
    pub fn train_ensemble(&self, data: &Dataset, seed_path: &[u64]) -> Result<Vec<TaskModel>> {
        let spec = self.architecture.build()?;
        let pre = self.preprocessor(data.n_features())?;
        let tasks: Vec<usize> = if data.n_classes() <= 2 { vec![1] } else { (0..data.n_classes()).collect() };
        tasks
            .into_par_iter()
            .map(|positive| {
                let binary = if data.n_classes() <= 2 { data.clone() } else { one_vs_all(data, positive)? };
                let mut path = seed_path.to_vec();
                path.push(positive as u64);
                let cfg = TrainConfig {
                    seed: seed::derive(self.train.seed, &path),
                    ..self.train
                };
                let out = train(&spec, pre, &binary, &cfg)?;
                Ok(TaskModel {
                    positive_class: positive,
                    classifier: out.classifier,
                    metrics: out.metrics,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    pub positive_class: usize,
    pub classifier: Classifier,
    pub metrics: Vec<EpochMetrics>,
}

/// Class predicted for `x` by a trained ensemble: the binary label itself for
/// two-class data, otherwise the one-vs-all argmax.
pub fn ensemble_predict(models: &[TaskModel], x: &[f64], m: EstimatorMode) -> Result<usize> {
    match models {
        [single] if single.positive_class == 1 => Ok(single.classifier.predict(x, m)?.label as usize),
        _ => {
            let classifiers: Vec<Classifier> = models.iter().map(|t| t.classifier.clone()).collect();
            predict_multiclass(&classifiers, x, m)
        }
    }
}

fn binary_error(c: &Classifier, data: &Dataset, positive: usize, m: EstimatorMode) -> Result<f64> {
    let mut preds = Vec::with_capacity(data.len());
    let mut truth = Vec::with_capacity(data.len());
    for (i, (x, &l)) in data.features().iter().zip(data.labels()).enumerate() {
        preds.push(c.predict(x, m.fork(&[i as u64]))?.label as usize);
        truth.push(usize::from(l == positive));
    }
    misclassification_rate(&preds, &truth)
}

fn ensemble_error(models: &[TaskModel], data: &Dataset, m: EstimatorMode) -> Result<f64> {
    let preds = data
        .features()
        .iter()
        .enumerate()
        .map(|(i, x)| ensemble_predict(models, x, m.fork(&[i as u64])))
        .collect::<Result<Vec<usize>>>()?;
    misclassification_rate(&preds, data.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub repetition: usize,
    pub fold: usize,
    pub positive_class: usize,
    pub train_error: f64,
    pub test_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub repetition: usize,
    pub fold: usize,
    /// Mean over the cell's binary tasks.
    pub task_train_error: f64,
    pub task_test_error: f64,
    /// Error of the combined class prediction.
    pub ensemble_train_error: f64,
    pub ensemble_test_error: f64,
    /// Test error of always predicting the training fold's majority class.
    pub baseline_test_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub tasks: Vec<TaskRecord>,
    pub cells: Vec<CellRecord>,
    pub train: Summary,
    pub test: Summary,
    pub ensemble_train: Summary,
    pub ensemble_test: Summary,
    pub baseline_test: Summary,
    /// Per positive class: (class, train, test) summaries over cells.
    pub per_class: Vec<(usize, Summary, Summary)>,
}

pub fn crossval_run(data: &Dataset, setup: &ExperimentSetup, plan: &FoldPlan) -> Result<CrossvalReport> {
    if plan.assignments.iter().any(|a| a.len() != data.len()) {
        return Err(Error::Config("fold plan does not match the dataset".into()));
    }
    let cells: Vec<(usize, usize)> = (0..plan.repetitions)
        .flat_map(|r| (0..plan.k).map(move |f| (r, f)))
        .collect();
    let results: Vec<(CellRecord, Vec<TaskRecord>)> = cells
        .into_par_iter()
        .map(|(rep, fold)| {
            let (train_idx, test_idx) = plan.split(rep, fold);
            let train_set = data.subset(&train_idx);
            let test_set = data.subset(&test_idx);
            let models = setup.train_ensemble(&train_set, &[rep as u64, fold as u64])?;
            let eval = setup.evaluation.fork(&[rep as u64, fold as u64]);
            let mut tasks = Vec::new();
            for m in &models {
                tasks.push(TaskRecord {
                    repetition: rep,
                    fold,
                    positive_class: m.positive_class,
                    train_error: binary_error(&m.classifier, &train_set, m.positive_class, eval.fork(&[0]))?,
                    test_error: binary_error(&m.classifier, &test_set, m.positive_class, eval.fork(&[1]))?,
                });
            }
            let majority = train_set.majority_class();
            let baseline = test_set.labels().iter().filter(|&&l| l != majority).count() as f64 / test_set.len() as f64;
            let n = tasks.len() as f64;
            let cell = CellRecord {
                repetition: rep,
                fold,
                task_train_error: tasks.iter().map(|t| t.train_error).sum::<f64>() / n,
                task_test_error: tasks.iter().map(|t| t.test_error).sum::<f64>() / n,
                ensemble_train_error: ensemble_error(&models, &train_set, eval.fork(&[2]))?,
                ensemble_test_error: ensemble_error(&models, &test_set, eval.fork(&[3]))?,
                baseline_test_error: baseline,
            };
            Ok((cell, tasks))
        })
        .collect::<Result<_>>()?;

    let (cells, tasks): (Vec<CellRecord>, Vec<Vec<TaskRecord>>) = results.into_iter().unzip();
    let tasks: Vec<TaskRecord> = tasks.into_iter().flatten().collect();
    let col = |f: fn(&CellRecord) -> f64| Summary::of(&cells.iter().map(f).collect::<Vec<_>>());
    let mut classes: Vec<usize> = tasks.iter().map(|t| t.positive_class).collect();
    classes.sort_unstable();
    classes.dedup();
    let per_class = classes
        .into_iter()
        .map(|c| {
            let of = |f: fn(&TaskRecord) -> f64| {
                Summary::of(&tasks.iter().filter(|t| t.positive_class == c).map(f).collect::<Vec<_>>())
            };
            (c, of(|t| t.train_error), of(|t| t.test_error))
        })
        .collect();
    Ok(CrossvalReport {
        train: col(|c| c.task_train_error),
        test: col(|c| c.task_test_error),
        ensemble_train: col(|c| c.ensemble_train_error),
        ensemble_test: col(|c| c.ensemble_test_error),
        baseline_test: col(|c| c.baseline_test_error),
        per_class,
        tasks,
        cells,
    })
}
