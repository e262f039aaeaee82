//! Evaluation grid: per-task detection, one-to-one and multi-task transfer,
//! false positives on clean corpora, and content-word-only ablation.
//!
//! Cells are independent jobs and may run in parallel; results are always
//! returned in request order.

mod ledger;
mod report;

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{subsample_for_joint_training, DatasetError, Label, ProbingDataset, Split};
use crate::embed::EmbeddingTable;
use crate::perturb::PerturbationKind;
use crate::probe::{evaluate, train_probe, LabeledSet, ProbeConfig, ProbeError, ProbeKind, TrainedProbe};

pub use ledger::{CellKey, LedgerEntry, LedgerError, ResultsLedger, Setting, LEDGER_HEADER};
pub use report::{
    figures_csv, markdown_summary, read_false_positive_tsv, read_overlap_tsv, write_false_positive_tsv,
    write_overlap_tsv, FIGURES_HEADER, FP_HEADER, OVERLAP_HEADER,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("example {id:?} of task {task} has no {encoder} embedding")]
    MissingEmbedding { encoder: String, task: String, id: String },
    #[error("no {encoder} embeddings registered for task {task}")]
    MissingTable { encoder: String, task: String },
    #[error("probe expects {expected}-dimensional input, embeddings have {found}")]
    EncoderMismatch { expected: usize, found: usize },
    #[error("no one-to-one transfer cell {0:?}")]
    MissingBaseline(CellKey),
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Embedding tables keyed by `(encoder, task)`. Example ids are only unique
/// within one task, so tables are never shared across tasks.
#[derive(Debug, Clone, Default)]
pub struct EncoderRegistry {
    tables: BTreeMap<(String, String), EmbeddingTable>,
}

impl EncoderRegistry {
    pub fn new() -> Self {
        EncoderRegistry::default()
    }

    pub fn insert(&mut self, encoder: &str, task: &str, table: EmbeddingTable) {
        self.tables.insert((encoder.to_string(), task.to_string()), table);
    }

    pub fn get(&self, encoder: &str, task: &str) -> Result<&EmbeddingTable, ExperimentError> {
        self.tables
            .get(&(encoder.to_string(), task.to_string()))
            .ok_or_else(|| ExperimentError::MissingTable { encoder: encoder.into(), task: task.into() })
    }

    /// Registered encoder names, sorted.
    pub fn encoders(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.tables.keys().map(|(e, _)| e.as_str()).collect();
        names.dedup();
        names
    }
}

/// The examples of one split paired with their vectors, in dataset order.
pub fn labeled_set(
    ds: &ProbingDataset,
    split: Split,
    encoder: &str,
    table: &EmbeddingTable,
) -> Result<LabeledSet, ExperimentError> {
    let mut set = LabeledSet::new(table.dim());
    for e in ds.split(split) {
        let v = table.get(&e.example_id).ok_or_else(|| ExperimentError::MissingEmbedding {
            encoder: encoder.to_string(),
            task: ds.task.clone(),
            id: e.example_id.clone(),
        })?;
        set.push(e.example_id.clone(), v, e.label)?;
    }
    Ok(set)
}

/// Runs `f` over `items` on `jobs` threads (0 = all cores), keeping order.
pub fn parallel_map<T, R, F>(items: Vec<T>, jobs: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    if jobs == 1 {
        return items.into_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(&f).collect()),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCell {
    pub encoder: String,
    pub task: String,
    pub probe: TrainedProbe,
    pub accuracy: f64,
    pub n: usize,
}

impl DetectionCell {
    pub fn ledger_entry(&self, setting: Setting) -> LedgerEntry {
        LedgerEntry {
            encoder: self.encoder.clone(),
            train_tasks: vec![self.task.clone()],
            test_task: self.task.clone(),
            setting,
            probe_kind: self.probe.config.kind,
            seed: self.probe.config.seed,
            accuracy: self.accuracy,
            n: self.n,
            selected_lr: self.probe.selected_lr,
        }
    }
}

struct CellData<'a> {
    encoder: &'a str,
    task: &'a str,
    train: LabeledSet,
    dev: LabeledSet,
    test: LabeledSet,
}

/// Trains and tests one probe per `(encoder, task)`, encoder-major. Every
/// cell's inputs are resolved before training starts, so a missing table or
/// vector fails the whole request instead of leaving a hole.
pub fn run_detection_grid(
    datasets: &[&ProbingDataset],
    registry: &EncoderRegistry,
    encoders: &[&str],
    config: &ProbeConfig,
    jobs: usize,
) -> Result<Vec<DetectionCell>, ExperimentError> {
    config.validate()?;
    let mut cells = Vec::with_capacity(encoders.len() * datasets.len());
    for &encoder in encoders {
        for ds in datasets {
            let table = registry.get(encoder, &ds.task)?;
            cells.push(CellData {
                encoder,
                task: &ds.task,
                train: labeled_set(ds, Split::Train, encoder, table)?,
                dev: labeled_set(ds, Split::Dev, encoder, table)?,
                test: labeled_set(ds, Split::Test, encoder, table)?,
            });
        }
    }
    parallel_map(cells, jobs, |c| -> Result<DetectionCell, ExperimentError> {
        let probe = train_probe(&c.train, &c.dev, config, c.task)?;
        let eval = evaluate(&probe, &c.test)?;
        Ok(DetectionCell { encoder: c.encoder.to_string(), task: c.task.to_string(), probe, accuracy: eval.accuracy, n: eval.n })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferCell {
    pub train_task: String,
    pub test_task: String,
    pub encoder: String,
    pub accuracy: f64,
    pub n: usize,
    pub is_transfer: bool,
}

impl TransferCell {
    pub fn ledger_entry(&self, probe: &TrainedProbe) -> LedgerEntry {
        LedgerEntry {
            encoder: self.encoder.clone(),
            train_tasks: vec![self.train_task.clone()],
            test_task: self.test_task.clone(),
            setting: Setting::Transfer,
            probe_kind: probe.config.kind,
            seed: probe.config.seed,
            accuracy: self.accuracy,
            n: self.n,
            selected_lr: probe.selected_lr,
        }
    }
}

/// Evaluates a stored probe, unchanged, on another task's test split.
pub fn transfer_eval(
    probe: &TrainedProbe,
    encoder: &str,
    test: &ProbingDataset,
    table: &EmbeddingTable,
) -> Result<TransferCell, ExperimentError> {
    if table.dim() != probe.input_dim() {
        return Err(ExperimentError::EncoderMismatch { expected: probe.input_dim(), found: table.dim() });
    }
    let set = labeled_set(test, Split::Test, encoder, table)?;
    let eval = evaluate(probe, &set)?;
    Ok(TransferCell {
        train_task: probe.train_task.clone(),
        test_task: test.task.clone(),
        encoder: encoder.to_string(),
        accuracy: eval.accuracy,
        n: eval.n,
        is_transfer: probe.train_task != test.task,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskResult {
    pub encoder: String,
    /// Sorted.
    pub train_tasks: Vec<String>,
    pub test_task: String,
    pub accuracy: f64,
    pub n: usize,
    pub best_single: f64,
    pub delta_vs_best_single: f64,
}

/// Best one-to-one transfer accuracy onto `target` among `sources`, read from
/// the ledger, and `accuracy` minus it.
pub fn delta_vs_best_single(
    ledger: &ResultsLedger,
    encoder: &str,
    sources: &[&str],
    target: &str,
    probe_kind: ProbeKind,
    seed: u64,
    accuracy: f64,
) -> Result<(f64, f64), ExperimentError> {
    let mut best = f64::NEG_INFINITY;
    for s in sources {
        let key = CellKey::new(encoder, &[s], target, Setting::Transfer, probe_kind, seed);
        let cell = ledger.lookup(&key).ok_or(ExperimentError::MissingBaseline(key))?;
        best = best.max(cell.accuracy);
    }
    if sources.is_empty() {
        return Err(ExperimentError::InvalidRequest("no source tasks".into()));
    }
    Ok((best, accuracy - best))
}

/// Trains one probe on an equal-share subsample of the sources' train splits
/// (dev is the union of their dev splits) and tests it on `target`.
#[allow(clippy::too_many_arguments)]
pub fn multi_task_transfer(
    sources: &[&ProbingDataset],
    target: &ProbingDataset,
    encoder: &str,
    registry: &EncoderRegistry,
    total_train: usize,
    config: &ProbeConfig,
    ledger: &ResultsLedger,
) -> Result<(MultiTaskResult, TrainedProbe), ExperimentError> {
    let names: Vec<&str> = sources.iter().map(|d| d.task.as_str()).collect();
    if names.contains(&target.task.as_str()) {
        return Err(ExperimentError::InvalidRequest(format!("target {} is also a source", target.task)));
    }
    if names.iter().collect::<HashSet<_>>().len() != names.len() {
        return Err(ExperimentError::InvalidRequest("duplicate source task".into()));
    }
    // fail on missing baselines before paying for training
    delta_vs_best_single(ledger, encoder, &names, &target.task, config.kind, config.seed, 0.0)?;

    let mut train_parts = Vec::with_capacity(sources.len());
    let mut dev = None::<LabeledSet>;
    for ds in sources {
        let table = registry.get(encoder, &ds.task)?;
        train_parts.push(labeled_set(ds, Split::Train, encoder, table)?.to_vectors());
        let d = labeled_set(ds, Split::Dev, encoder, table)?;
        dev = Some(match dev {
            None => d,
            Some(mut acc) => {
                for i in 0..d.len() {
                    acc.push(format!("{}:{}", ds.task, d.id(i)), d.row(i), d.label(i))?;
                }
                acc
            }
        });
    }
    let slices: Vec<&[_]> = train_parts.iter().map(Vec::as_slice).collect();
    let merged = subsample_for_joint_training(&slices, total_train, config.seed)?;
    let table = registry.get(encoder, &target.task)?;
    let train = LabeledSet::from_vectors(table.dim(), merged)?;
    let dev = dev.ok_or_else(|| ExperimentError::InvalidRequest("no source tasks".into()))?;
    let mut sorted: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    sorted.sort_unstable();
    let probe = train_probe(&train, &dev, config, &sorted.join("+"))?;
    let test = labeled_set(target, Split::Test, encoder, table)?;
    let eval = evaluate(&probe, &test)?;
    let (best_single, delta) =
        delta_vs_best_single(ledger, encoder, &names, &target.task, config.kind, config.seed, eval.accuracy)?;
    let result = MultiTaskResult {
        encoder: encoder.to_string(),
        train_tasks: sorted,
        test_task: target.task.clone(),
        accuracy: eval.accuracy,
        n: eval.n,
        best_single,
        delta_vs_best_single: delta,
    };
    Ok((result, probe))
}

impl MultiTaskResult {
    pub fn ledger_entry(&self, probe: &TrainedProbe) -> LedgerEntry {
        LedgerEntry {
            encoder: self.encoder.clone(),
            train_tasks: self.train_tasks.clone(),
            test_task: self.test_task.clone(),
            setting: Setting::MultiTask,
            probe_kind: probe.config.kind,
            seed: probe.config.seed,
            accuracy: self.accuracy,
            n: self.n,
            selected_lr: probe.selected_lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsePositiveReport {
    pub encoder: String,
    pub classifier_task: String,
    pub corpus: String,
    pub n: usize,
    pub fp_rate: f64,
    /// Ids predicted perturbed, in corpus order.
    pub flagged_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    pub encoder: String,
    pub corpus: String,
    /// Classifiers the overlap was computed over.
    pub classifiers: Vec<String>,
    pub union_size: usize,
    pub at_least_two_fraction: f64,
    pub all_fraction: f64,
}

/// Union size, share flagged by at least two sets and share flagged by
/// every set. Fractions are zero when the union is empty.
pub fn overlap_fractions<S: AsRef<str>>(sets: &[&[S]]) -> (usize, f64, f64) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for set in sets {
        let unique: HashSet<&str> = set.iter().map(AsRef::as_ref).collect();
        for id in unique {
            *counts.entry(id).or_default() += 1;
        }
    }
    let union = counts.len();
    if union == 0 {
        return (0, 0.0, 0.0);
    }
    let two = counts.values().filter(|&&c| c >= 2).count();
    let all = counts.values().filter(|&&c| c == sets.len()).count();
    (union, two as f64 / union as f64, all as f64 / union as f64)
}

/// Scans a corpus of unperturbed sentences: anything a probe labels
/// perturbed is a false positive. Overlap is computed over the reordering
/// probes only; the Agree-Shift probe joins when `include_agree_shift` is
/// set, and probes trained on external datasets never do.
pub fn false_positive_scan(
    probes: &[&TrainedProbe],
    encoder: &str,
    corpus: &str,
    clean: &EmbeddingTable,
    include_agree_shift: bool,
) -> Result<(Vec<FalsePositiveReport>, OverlapReport), ExperimentError> {
    if clean.is_empty() {
        return Err(ExperimentError::InvalidRequest(format!("clean corpus {corpus} is empty")));
    }
    let mut reports = Vec::with_capacity(probes.len());
    for probe in probes {
        if clean.dim() != probe.input_dim() {
            return Err(ExperimentError::EncoderMismatch { expected: probe.input_dim(), found: clean.dim() });
        }
        let flagged_ids: Vec<String> = clean
            .iter()
            .filter(|(_, v)| probe.predict(v) == Label::Perturbed)
            .map(|(id, _)| id.to_string())
            .collect();
        reports.push(FalsePositiveReport {
            encoder: encoder.to_string(),
            classifier_task: probe.train_task.clone(),
            corpus: corpus.to_string(),
            n: clean.len(),
            fp_rate: flagged_ids.len() as f64 / clean.len() as f64,
            flagged_ids,
        });
    }
    let included: Vec<&FalsePositiveReport> = reports
        .iter()
        .filter(|r| match r.classifier_task.parse::<PerturbationKind>() {
            Ok(k) => k.is_reordering() || include_agree_shift,
            Err(_) => false,
        })
        .collect();
    let sets: Vec<&[String]> = included.iter().map(|r| r.flagged_ids.as_slice()).collect();
    let (union_size, at_least_two_fraction, all_fraction) = overlap_fractions(&sets);
    let overlap = OverlapReport {
        encoder: encoder.to_string(),
        corpus: corpus.to_string(),
        classifiers: included.iter().map(|r| r.classifier_task.clone()).collect(),
        union_size,
        at_least_two_fraction,
        all_fraction,
    };
    Ok((reports, overlap))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub encoder: String,
    pub task: String,
    pub probe_kind: ProbeKind,
    pub seed: u64,
    pub original: f64,
    pub n_original: usize,
    pub ablated: f64,
    pub n_ablated: usize,
    pub delta: f64,
}

/// Pairs content-only accuracies with the original detection accuracies
/// recorded in the ledger under the same encoder, task, probe kind and seed.
pub fn ablation_rows(ledger: &ResultsLedger) -> Vec<AblationRow> {
    ledger
        .current()
        .into_iter()
        .filter(|e| e.setting == Setting::ContentOnly)
        .filter_map(|e| {
            let tasks: Vec<&str> = e.train_tasks.iter().map(String::as_str).collect();
            let key = CellKey::new(&e.encoder, &tasks, &e.test_task, Setting::Detection, e.probe_kind, e.seed);
            let orig = ledger.lookup(&key)?;
            Some(AblationRow {
                encoder: e.encoder.clone(),
                task: e.test_task.clone(),
                probe_kind: e.probe_kind,
                seed: e.seed,
                original: orig.accuracy,
                n_original: orig.n,
                ablated: e.accuracy,
                n_ablated: e.n,
                delta: e.accuracy - orig.accuracy,
            })
        })
        .collect()
}

/// Trains the detection grid on content-word-only datasets and reports the
/// change against the original detection cells in `ledger`. A task whose
/// original cell is missing is a [`ExperimentError::MissingBaseline`].
pub fn content_word_ablation(
    content_datasets: &[&ProbingDataset],
    content_registry: &EncoderRegistry,
    encoders: &[&str],
    config: &ProbeConfig,
    jobs: usize,
    ledger: &ResultsLedger,
) -> Result<(Vec<DetectionCell>, Vec<AblationRow>), ExperimentError> {
    for &encoder in encoders {
        for ds in content_datasets {
            let key = CellKey::new(encoder, &[&ds.task], &ds.task, Setting::Detection, config.kind, config.seed);
            if ledger.lookup(&key).is_none() {
                return Err(ExperimentError::MissingBaseline(key));
            }
        }
    }
    let cells = run_detection_grid(content_datasets, content_registry, encoders, config, jobs)?;
    let rows = cells
        .iter()
        .map(|c| {
            let key = CellKey::new(&c.encoder, &[&c.task], &c.task, Setting::Detection, config.kind, config.seed);
            let orig = ledger.lookup(&key).ok_or(ExperimentError::MissingBaseline(key))?;
            Ok(AblationRow {
                encoder: c.encoder.clone(),
                task: c.task.clone(),
                probe_kind: config.kind,
                seed: config.seed,
                original: orig.accuracy,
                n_original: orig.n,
                ablated: c.accuracy,
                n_ablated: c.n,
                delta: c.accuracy - orig.accuracy,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok((cells, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledExample;

    fn entry(train: &str, test: &str, setting: Setting, acc: f64) -> LedgerEntry {
        LedgerEntry {
            encoder: "enc".into(),
            train_tasks: train.split('+').map(str::to_string).collect(),
            test_task: test.into(),
            setting,
            probe_kind: ProbeKind::Mlp,
            seed: 0,
            accuracy: acc,
            n: 100,
            selected_lr: 0.001,
        }
    }

    #[test]
    fn delta_from_recorded_cells() {
        let mut l = ResultsLedger::new();
        l.push(entry("B", "A", Setting::Transfer, 0.72));
        l.push(entry("C", "A", Setting::Transfer, 0.65));
        let (best, d) = delta_vs_best_single(&l, "enc", &["B", "C"], "A", ProbeKind::Mlp, 0, 0.70).unwrap();
        assert_eq!(best, 0.72);
        assert!((d - -0.02).abs() < 1e-12);
        assert!(matches!(
            delta_vs_best_single(&l, "enc", &["B", "D"], "A", ProbeKind::Mlp, 0, 0.7),
            Err(ExperimentError::MissingBaseline(_))
        ));
    }

    #[test]
    fn overlap_edge_cases() {
        let same = ["a", "b", "c"];
        assert_eq!(overlap_fractions(&[&same[..], &same[..], &same[..]]), (3, 1.0, 1.0));
        let (u, two, all) = overlap_fractions(&[&["a"][..], &["b"][..], &["c"][..]]);
        assert_eq!((u, two, all), (3, 0.0, 0.0));
        let empty: [&str; 0] = [];
        assert_eq!(overlap_fractions(&[&empty[..], &empty[..]]), (0, 0.0, 0.0));
        let (u, two, all) = overlap_fractions(&[&["a", "b"][..], &["b", "c"][..], &["b"][..]]);
        assert_eq!(u, 3);
        assert!((two - 1.0 / 3.0).abs() < 1e-15 && (all - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ablation_rows_pair_with_detection() {
        let mut l = ResultsLedger::new();
        l.push(entry("A", "A", Setting::Detection, 0.93));
        l.push(entry("A", "A", Setting::ContentOnly, 0.81));
        l.push(entry("B", "B", Setting::ContentOnly, 0.5));
        let rows = ablation_rows(&l);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].delta - -0.12).abs() < 1e-12);
    }

    fn tiny_dataset(task: &str) -> (ProbingDataset, EmbeddingTable) {
        let mut examples = Vec::new();
        let mut table = EmbeddingTable::new(2);
        for i in 0..40 {
            let split = match i % 10 {
                0 => Split::Dev,
                1 => Split::Test,
                _ => Split::Train,
            };
            for (label, sign) in [(Label::Normal, -1.0f32), (Label::Perturbed, 1.0)] {
                let id = format!("{i}#{}", if label == Label::Normal { "n" } else { "p" });
                table.insert(id.clone(), vec![sign * (1.0 + i as f32 / 40.0), 0.5]).unwrap();
                examples.push(LabeledExample {
                    example_id: id,
                    pair_id: i.to_string(),
                    task: task.into(),
                    split,
                    label,
                    text: format!("text {i}"),
                    n_modifications: 1,
                });
            }
        }
        (ProbingDataset { task: task.into(), examples }, table)
    }

    #[test]
    fn grid_shape_and_transfer_identity() {
        let (a, ta) = tiny_dataset("A");
        let (b, tb) = tiny_dataset("B");
        let mut reg = EncoderRegistry::new();
        for enc in ["e1", "e2"] {
            reg.insert(enc, "A", ta.clone());
            reg.insert(enc, "B", tb.clone());
        }
        let cfg = ProbeConfig { max_epochs: 5, ..ProbeConfig::lr(3) };
        let cells = run_detection_grid(&[&a, &b], &reg, &["e1", "e2"], &cfg, 2).unwrap();
        assert_eq!(cells.len(), 4);
        let order: Vec<(&str, &str)> = cells.iter().map(|c| (c.encoder.as_str(), c.task.as_str())).collect();
        assert_eq!(order, [("e1", "A"), ("e1", "B"), ("e2", "A"), ("e2", "B")]);
        for c in &cells {
            let t = transfer_eval(&c.probe, &c.encoder, if c.task == "A" { &a } else { &b }, &ta).unwrap();
            assert!(!t.is_transfer);
            assert_eq!(t.accuracy, c.accuracy);
        }
        let serial = run_detection_grid(&[&a, &b], &reg, &["e1", "e2"], &cfg, 1).unwrap();
        assert_eq!(serial, cells);
    }

    #[test]
    fn missing_vector_is_reported() {
        let (a, _) = tiny_dataset("A");
        let mut reg = EncoderRegistry::new();
        reg.insert("e", "A", EmbeddingTable::new(2));
        let err = run_detection_grid(&[&a], &reg, &["e"], &ProbeConfig::lr(0), 1).unwrap_err();
        assert!(matches!(err, ExperimentError::MissingEmbedding { .. }));
    }

    #[test]
    fn transfer_rejects_other_encoder_dims() {
        let (a, _) = tiny_dataset("A");
        let probe = TrainedProbe::zeros(ProbeConfig::lr(0), 3, "A");
        let err = transfer_eval(&probe, "e", &a, &EmbeddingTable::new(2)).unwrap_err();
        assert!(matches!(err, ExperimentError::EncoderMismatch { expected: 3, found: 2 }));
    }
}
