//! Splits, confusion matrices, per-class metrics and k-fold
//! cross-validation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::model::{build_model, train, EpochRecord, ModelConfig, ModelState, Sample, TrainConfig};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::ShapeMismatch("confusion matrix must be square and non-empty".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        if truth >= k || predicted >= k {
            return Err(Error::LabelOutOfRange(truth.max(predicted), k));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

/// Overall accuracy in percent: `100 * trace / total`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::EmptyMatrix),
        total => Ok(100.0 * cm.trace() as f64 / total as f64),
    }
}

/// Percent metrics for one class. A zero denominator yields 0 and sets the
/// matching flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// Accuracy over the class's true samples (equal to recall).
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub no_predictions: bool,
    pub no_samples: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverages {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let (col, row) = (cm.col_sum(c), cm.row_sum(c));
            let precision = if col == 0 { 0.0 } else { 100.0 * tp / col as f64 };
            let recall = if row == 0 { 0.0 } else { 100.0 * tp / row as f64 };
            let f1_undefined = precision + recall == 0.0;
            let f1 = if f1_undefined {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                accuracy: recall,
                precision,
                recall,
                f1,
                no_predictions: col == 0,
                no_samples: row == 0,
                f1_undefined,
            }
        })
        .collect()
}

pub fn macro_averages(per_class: &[ClassMetrics]) -> MacroAverages {
    let n = per_class.len().max(1) as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    MacroAverages {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: MacroAverages,
    /// Percent.
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let accuracy = accuracy(&confusion)?;
        let per_class = per_class_metrics(&confusion);
        let macro_avg = macro_averages(&per_class);
        Ok(EvalReport {
            confusion,
            per_class,
            macro_avg,
            accuracy,
        })
    }
}

/// Anything that maps feature maps to class indices.
pub trait Classifier {
    fn classify(&self, maps: &[&FeatureMap]) -> Result<Vec<usize>>;
}

impl Classifier for ModelState {
    fn classify(&self, maps: &[&FeatureMap]) -> Result<Vec<usize>> {
        Ok(self.predict_batch(maps)?.into_iter().map(|p| p.digit).collect())
    }
}

impl<F: Fn(&FeatureMap) -> usize> Classifier for F {
    fn classify(&self, maps: &[&FeatureMap]) -> Result<Vec<usize>> {
        Ok(maps.iter().map(|m| self(m)).collect())
    }
}

pub fn evaluate(model: &impl Classifier, test: &[Sample], classes: usize) -> Result<EvalReport> {
    let maps: Vec<&FeatureMap> = test.iter().map(|s| &s.map).collect();
    let predicted = model.classify(&maps)?;
    let mut cm = ConfusionMatrix::new(classes);
    for (s, p) in test.iter().zip(predicted) {
        cm.record(s.label, p)?;
    }
    EvalReport::from_confusion(cm)
}

/// Sorted index lists of a three-way partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.64, 0.16, 0.20);

fn check_ratios(r: (f64, f64, f64)) -> Result<()> {
    let ok = [r.0, r.1, r.2].iter().all(|v| *v >= 0.0 && v.is_finite()) && (r.0 + r.1 + r.2 - 1.0).abs() <= 1e-9;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("split ratios {r:?} must be non-negative and sum to 1")))
    }
}

/// Per-group `(val, test)` sizes: rounded shares, train takes the rest.
fn cut_sizes(n: usize, r: (f64, f64, f64)) -> (usize, usize) {
    let test = ((n as f64 * r.2).round() as usize).min(n);
    let val = ((n as f64 * r.1).round() as usize).min(n - test);
    (val, test)
}

/// Partitions `labels.len()` indices. Stratified mode splits every class
/// separately (each class shuffled by its own seeded stream) and requires
/// each split with a positive ratio to receive at least one sample per class.
pub fn split_indices(labels: &[usize], ratios: (f64, f64, f64), seed: u64, stratified: bool) -> Result<Split> {
    check_ratios(ratios)?;
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let groups: Vec<(usize, Vec<usize>)> = if stratified {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        (0..classes)
            .map(|c| (c, (0..labels.len()).filter(|&i| labels[i] == c).collect::<Vec<_>>()))
            .filter(|(_, v)| !v.is_empty())
            .collect()
    } else {
        vec![(0, (0..labels.len()).collect())]
    };
    let short = |n: usize| {
        let (n_val, n_test) = cut_sizes(n, ratios);
        [(ratios.0, n - n_val - n_test), (ratios.1, n_val), (ratios.2, n_test)]
            .iter()
            .any(|&(r, k)| r > 0.0 && k == 0)
    };
    for (class, mut idx) in groups {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        idx.shuffle(&mut rng);
        if stratified && short(idx.len()) {
            return Err(Error::InsufficientClassSamples {
                class,
                available: idx.len(),
                required: (idx.len() + 1..=1 << 20).find(|&n| !short(n)).unwrap_or(usize::MAX),
            });
        }
        let (n_val, n_test) = cut_sizes(idx.len(), ratios);
        split.test.extend_from_slice(&idx[..n_test]);
        split.val.extend_from_slice(&idx[n_test..n_test + n_val]);
        split.train.extend_from_slice(&idx[n_test + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Splits a manifest into `(train, val, test)` manifests.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
    stratified: bool,
) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest)> {
    let s = split_indices(&manifest.labels(), ratios, seed, stratified)?;
    Ok((manifest.subset(&s.train), manifest.subset(&s.val), manifest.subset(&s.test)))
}

/// `k` stratified folds: each class is shuffled and dealt round-robin,
/// continuing from where the previous class stopped so fold sizes differ by
/// at most one.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig("k must be at least 2".into()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(Error::InsufficientClassSamples {
                class,
                available: idx.len(),
                required: k,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub seed: u64,
    pub test_indices: Vec<usize>,
    pub report: EvalReport,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub k: usize,
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: f64,
    /// Population standard deviation of the fold accuracies.
    pub std_accuracy: f64,
}

/// What a fold trainer hands back: a classifier and its training curve.
pub struct Trained<C> {
    pub classifier: C,
    pub history: Vec<EpochRecord>,
}

/// Runs `k`-fold cross-validation with a caller-supplied trainer, invoked as
/// `trainer(fold, training_samples, fold_seed)` with `fold_seed = seed + fold`.
/// Folds run in parallel; reports are ordered by fold.
pub fn cross_validate_with<C, F>(samples: &[Sample], k: usize, seed: u64, classes: usize, trainer: F) -> Result<CrossValReport>
where
    C: Classifier,
    F: Fn(usize, &[Sample], u64) -> Result<Trained<C>> + Sync,
{
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let folds = stratified_folds(&labels, k, seed)?;
    let reports = (0..k)
        .into_par_iter()
        .map(|fold| {
            let test_idx = &folds[fold];
            let mut in_test = vec![false; samples.len()];
            test_idx.iter().for_each(|&i| in_test[i] = true);
            let train_set: Vec<Sample> =
                samples.iter().zip(&in_test).filter(|(_, &t)| !t).map(|(s, _)| s.clone()).collect();
            let test_set: Vec<Sample> = test_idx.iter().map(|&i| samples[i].clone()).collect();
            let fold_seed = seed.wrapping_add(fold as u64);
            let trained = trainer(fold, &train_set, fold_seed)?;
            Ok(FoldReport {
                fold,
                seed: fold_seed,
                test_indices: test_idx.clone(),
                report: evaluate(&trained.classifier, &test_set, classes)?,
                history: trained.history,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = reports.iter().map(|r| r.report.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / k as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(CrossValReport {
        k,
        folds: reports,
        mean_accuracy: mean,
        std_accuracy: var.sqrt(),
    })
}

/// Cross-validation with a fresh model per fold. Each fold holds out a
/// stratified `val_fraction` of its training part for best-epoch selection;
/// folds too small to give every class a validation sample train without one.
pub fn cross_validate(
    samples: &[Sample],
    k: usize,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    val_fraction: f64,
) -> Result<CrossValReport> {
    let classes = model_config.classes;
    cross_validate_with(samples, k, train_config.seed, classes, |_, part, fold_seed| {
        let labels: Vec<usize> = part.iter().map(|s| s.label).collect();
        let ratios = (1.0 - val_fraction, val_fraction, 0.0);
        let inner = match split_indices(&labels, ratios, fold_seed, val_fraction > 0.0) {
            Err(Error::InsufficientClassSamples { .. }) => split_indices(&labels, (1.0, 0.0, 0.0), fold_seed, false)?,
            other => other?,
        };
        let pick = |idx: &[usize]| idx.iter().map(|&i| part[i].clone()).collect::<Vec<_>>();
        let (tr, va) = (pick(&inner.train), pick(&inner.val));
        let mut model = build_model(model_config, fold_seed)?;
        let tc = TrainConfig {
            seed: fold_seed,
            batch_size: train_config.batch_size.min(tr.len()),
            ..train_config.clone()
        };
        let report = train(&mut model, &tr, &va, &tc)?;
        Ok(Trained {
            classifier: model,
            history: report.history,
        })
    })
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// `(k + 1) x (k + 1)` CSV: a header row of predicted labels and a leading
/// column of true labels.
pub fn confusion_csv(cm: &ConfusionMatrix, label_names: &[String]) -> String {
    let name = |c: usize| label_names.get(c).cloned().unwrap_or_else(|| c.to_string());
    let mut out = String::from("true\\predicted");
    for c in 0..cm.classes() {
        let _ = write!(out, ",{}", name(c));
    }
    out.push('\n');
    for (r, row) in cm.counts().iter().enumerate() {
        out.push_str(&name(r));
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Per-class, macro and overall percentages rounded to two decimals.
pub fn metrics_json(report: &EvalReport, label_names: &[String]) -> serde_json::Value {
    let per_class: Vec<serde_json::Value> = report
        .per_class
        .iter()
        .enumerate()
        .map(|(c, m)| {
            serde_json::json!({
                "class": c,
                "label": label_names.get(c).cloned().unwrap_or_else(|| c.to_string()),
                "accuracy": round2(m.accuracy),
                "precision": round2(m.precision),
                "recall": round2(m.recall),
                "f1": round2(m.f1),
                "support": report.confusion.row_sum(c),
                "no_predictions": m.no_predictions,
                "no_samples": m.no_samples,
                "f1_undefined": m.f1_undefined,
            })
        })
        .collect();
    serde_json::json!({
        "per_class": per_class,
        "macro": {
            "accuracy": round2(report.macro_avg.accuracy),
            "precision": round2(report.macro_avg.precision),
            "recall": round2(report.macro_avg.recall),
            "f1": round2(report.macro_avg.f1),
        },
        "overall_accuracy": round2(report.accuracy),
        "total": report.confusion.total(),
    })
}

pub fn fold_json(fold: &FoldReport, label_names: &[String]) -> serde_json::Value {
    serde_json::json!({
        "fold": fold.fold,
        "seed": fold.seed,
        "test_indices": fold.test_indices,
        "confusion": fold.report.confusion.counts(),
        "metrics": metrics_json(&fold.report, label_names),
        "epochs": fold.history.len(),
    })
}

pub fn cross_val_summary_json(cv: &CrossValReport) -> serde_json::Value {
    serde_json::json!({
        "k": cv.k,
        "fold_accuracies": cv.folds.iter().map(|f| round2(f.report.accuracy)).collect::<Vec<_>>(),
        "mean_accuracy": round2(cv.mean_accuracy),
        "std_accuracy": round2(cv.std_accuracy),
    })
}

/// `epoch,train_loss,train_acc,val_loss,val_acc`; missing validation values
/// are left empty.
pub fn curve_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for h in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            h.epoch,
            h.train_loss,
            h.train_acc,
            opt(h.val_loss),
            opt(h.val_acc)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn balanced_labels(per_class: usize) -> Vec<usize> {
        (0..10 * per_class).map(|i| i % 10).collect()
    }

    #[test]
    fn split_counts() {
        let s = split_indices(&balanced_labels(400), DEFAULT_RATIOS, 1, true).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (2560, 640, 800));
        let s = split_indices(&balanced_labels(400), DEFAULT_RATIOS, 1, false).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (2560, 640, 800));
        let s = split_indices(&balanced_labels(20), DEFAULT_RATIOS, 1, true).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (130, 30, 40));
    }

    #[test]
    fn split_is_a_partition() {
        let labels = balanced_labels(20);
        let s = split_indices(&labels, DEFAULT_RATIOS, 7, true).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        for c in 0..10 {
            assert_eq!(s.test.iter().filter(|&&i| labels[i] == c).count(), 4);
        }
        assert_eq!(s, split_indices(&labels, DEFAULT_RATIOS, 7, true).unwrap());
        assert_ne!(s, split_indices(&labels, DEFAULT_RATIOS, 8, true).unwrap());
    }

    #[test]
    fn split_needs_samples_per_class() {
        assert!(matches!(
            split_indices(&balanced_labels(1), DEFAULT_RATIOS, 0, true),
            Err(Error::InsufficientClassSamples {
                available: 1,
                required: 4,
                ..
            })
        ));
        assert!(matches!(
            split_indices(&balanced_labels(5), (0.5, 0.5, 0.1), 0, true),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn accuracy_cases() {
        let mut cm = ConfusionMatrix::new(3);
        assert!(matches!(accuracy(&cm), Err(Error::EmptyMatrix)));
        cm.record(0, 0).unwrap();
        cm.record(1, 1).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 100.0);
        let off = ConfusionMatrix::from_counts(vec![vec![0, 2], vec![3, 0]]).unwrap();
        assert_eq!(accuracy(&off).unwrap(), 0.0);
        assert!(cm.record(3, 0).is_err());
    }

    #[test]
    fn empty_column_is_flagged() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 0], vec![3, 0]]).unwrap();
        let m = per_class_metrics(&cm);
        assert_eq!(m[1].precision, 0.0);
        assert!(m[1].no_predictions && m[1].f1_undefined);
        assert!((m[0].precision - 40.0).abs() < 1e-12);
    }

    fn dummy_samples(per_class: usize) -> Vec<Sample> {
        balanced_labels(per_class)
            .into_iter()
            .map(|l| Sample::new(FeatureMap::new(Array2::from_elem((39, 39), l as f64)).unwrap(), l))
            .collect()
    }

    #[test]
    fn constant_predictor() {
        let samples = dummy_samples(3);
        let r = evaluate(&|_: &FeatureMap| 0usize, &samples, 10).unwrap();
        assert!((r.accuracy - 10.0).abs() < 1e-12);
        assert!((r.per_class[0].precision - 10.0).abs() < 1e-12);
        let perfect = evaluate(&|m: &FeatureMap| m.values()[[0, 0]] as usize, &samples, 10).unwrap();
        assert_eq!(perfect.accuracy, 100.0);
        assert!(perfect.per_class.iter().all(|m| m.f1 == 100.0));
    }

    #[test]
    fn folds_partition() {
        let labels = balanced_labels(10);
        let folds = stratified_folds(&labels, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 10));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(matches!(
            stratified_folds(&balanced_labels(9), 10, 0),
            Err(Error::InsufficientClassSamples { .. })
        ));
    }

    #[test]
    fn oracle_cross_validation() {
        let samples = dummy_samples(10);
        let cv = cross_validate_with(&samples, 10, 5, 10, |_, _, _| {
            Ok(Trained {
                classifier: |m: &FeatureMap| m.values()[[0, 0]] as usize,
                history: Vec::new(),
            })
        })
        .unwrap();
        assert_eq!(cv.folds.len(), 10);
        assert_eq!(cv.mean_accuracy, 100.0);
        assert_eq!(cv.std_accuracy, 0.0);
        assert_eq!(cv.folds[3].seed, 8);
    }

    #[test]
    fn emitters() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 1], vec![0, 2]]).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let csv = confusion_csv(&cm, &names);
        assert_eq!(csv, "true\\predicted,a,b\na,1,1\nb,0,2\n");
        let r = EvalReport::from_confusion(cm).unwrap();
        let j = metrics_json(&r, &names);
        assert_eq!(j["overall_accuracy"], 75.0);
        assert_eq!(j["per_class"][1]["precision"], 66.67);
        let rec = EpochRecord {
            epoch: 0,
            train_loss: 1.5,
            train_ce: 1.0,
            l2: 0.5,
            train_acc: 0.25,
            val_loss: None,
            val_acc: None,
        };
        assert_eq!(curve_csv(&[rec]), "epoch,train_loss,train_acc,val_loss,val_acc\n0,1.5,0.25,,\n");
    }
}
