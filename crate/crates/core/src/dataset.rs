//! Balanced, pair-colocated probing datasets and external labeled datasets.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::perturb::PerturbationRecord;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no input records")]
    EmptyInput,
    #[error("{0}: file is empty")]
    EmptyFile(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("bad header: expected {expected:?}")]
    BadHeader { expected: String },
    #[error("invalid split ratios {0:?}: must be non-negative and sum to 1")]
    BadRatios([f64; 3]),
    #[error("source {source_index} has {available} usable examples, {requested} requested")]
    InsufficientData { source_index: usize, available: usize, requested: usize },
    #[error("text contains a tab or newline: {0:?}")]
    UnencodableText(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Perturbed,
}

impl Label {
    pub fn as_index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Perturbed => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Normal
        } else {
            Label::Perturbed
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Perturbed => "perturbed",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" | "normal" => Ok(Label::Normal),
            "1" | "perturbed" => Ok(Label::Perturbed),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Anything carrying a binary label; lets joint subsampling work over
/// examples and over embedded examples alike.
pub trait Labeled {
    fn label(&self) -> Label;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub example_id: String,
    pub pair_id: String,
    pub task: String,
    pub split: Split,
    pub label: Label,
    pub text: String,
    pub n_modifications: usize,
}

impl Labeled for LabeledExample {
    fn label(&self) -> Label {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbingDataset {
    pub task: String,
    pub examples: Vec<LabeledExample>,
}

impl ProbingDataset {
    /// Example counts per split as `(train, dev, test)`.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let count = |s| self.examples.iter().filter(|e| e.split == s).count();
        (count(Split::Train), count(Split::Dev), count(Split::Test))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter().filter(move |e| e.split == split)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    /// 0.8 / 0.1 / 0.1, the proportions of a 71k / 8.9k / 8.9k split.
    fn default() -> Self {
        SplitRatios { train: 0.8, dev: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self, DatasetError> {
        let r = SplitRatios { train, dev, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let v = [self.train, self.dev, self.test];
        let ok = v.iter().all(|x| x.is_finite() && *x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DatasetError::BadRatios(v))
        }
    }

    /// Item counts for `n` items: train and dev are rounded, test takes the rest.
    pub fn cut(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64) * self.train).round() as usize;
        let train = train.min(n);
        let dev = (((n as f64) * self.dev).round() as usize).min(n - train);
        (train, dev, n - train - dev)
    }

    fn assign(&self, n: usize, position: usize) -> Split {
        let (train, dev, _) = self.cut(n);
        if position < train {
            Split::Train
        } else if position < train + dev {
            Split::Dev
        } else {
            Split::Test
        }
    }
}

/// Default deduplication key: the sentence with whitespace runs collapsed.
pub fn normalize_sentence(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keeps the first item for every key, preserving order.
pub fn dedup_corpus<T, F>(lines: Vec<T>, key: F) -> Vec<T>
where
    F: Fn(&T) -> String,
{
    let mut seen = HashSet::new();
    lines.into_iter().filter(|l| seen.insert(key(l))).collect()
}

/// Turns perturbation records into a balanced dataset. Each record gives one
/// normal and one perturbed example sharing `pair_id = source_id`; whole
/// pairs are assigned to splits by a seeded shuffle followed by a ratio cut.
///
/// A record is skipped when either of its sentences already occurs in an
/// earlier kept record, which keeps every text in exactly one split.
pub fn build_probing_dataset(
    task: &str,
    records: &[PerturbationRecord],
    ratios: SplitRatios,
    seed: u64,
) -> Result<ProbingDataset, DatasetError> {
    ratios.validate()?;
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let mut seen: HashSet<&str> = HashSet::new();
    let mut kept: Vec<&PerturbationRecord> = Vec::new();
    for r in records {
        for text in [&r.original, &r.perturbed] {
            if text.contains(['\t', '\n']) {
                return Err(DatasetError::UnencodableText(text.clone()));
            }
        }
        if seen.contains(r.original.as_str()) || seen.contains(r.perturbed.as_str()) {
            continue;
        }
        seen.insert(&r.original);
        seen.insert(&r.perturbed);
        kept.push(r);
    }
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split_of = vec![Split::Train; kept.len()];
    for (position, &idx) in order.iter().enumerate() {
        split_of[idx] = ratios.assign(kept.len(), position);
    }
    let mut examples = Vec::with_capacity(kept.len() * 2);
    for (r, split) in kept.iter().zip(split_of) {
        for (label, text, suffix) in [(Label::Normal, &r.original, "n"), (Label::Perturbed, &r.perturbed, "p")] {
            examples.push(LabeledExample {
                example_id: format!("{}#{}", r.source_id, suffix),
                pair_id: r.source_id.clone(),
                task: task.to_string(),
                split,
                label,
                text: text.clone(),
                n_modifications: r.n_modifications,
            });
        }
    }
    Ok(ProbingDataset { task: task.to_string(), examples })
}

pub const DATASET_HEADER: &str = "example_id\tpair_id\ttask\tsplit\tlabel\ttext\tn_modifications";

pub fn write_dataset_tsv(ds: &ProbingDataset) -> String {
    let mut out = String::with_capacity(ds.examples.len() * 64);
    out.push_str(DATASET_HEADER);
    out.push('\n');
    for e in &ds.examples {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            e.example_id, e.pair_id, e.task, e.split, e.label, e.text, e.n_modifications
        ));
    }
    out
}

pub fn read_dataset_tsv(text: &str) -> Result<ProbingDataset, DatasetError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == DATASET_HEADER => {}
        _ => return Err(DatasetError::BadHeader { expected: DATASET_HEADER.into() }),
    }
    let mut examples = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| DatasetError::MalformedRow { line: n, reason };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(bad(format!("expected 7 columns, found {}", cols.len())));
        }
        examples.push(LabeledExample {
            example_id: cols[0].to_string(),
            pair_id: cols[1].to_string(),
            task: cols[2].to_string(),
            split: cols[3].parse().map_err(bad)?,
            label: cols[4].parse().map_err(bad)?,
            text: cols[5].to_string(),
            n_modifications: cols[6].parse().map_err(|e| bad(format!("n_modifications: {e}")))?,
        });
    }
    let task = examples.first().map(|e| e.task.clone()).unwrap_or_default();
    Ok(ProbingDataset { task, examples })
}

pub fn load_dataset(path: &Path) -> Result<ProbingDataset, DatasetError> {
    read_dataset_tsv(&std::fs::read_to_string(path)?)
}

/// An externally produced binary-labeled dataset (SOMO, BShift, CoLA, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalDataset {
    pub name: String,
    pub examples: Vec<(String, Label)>,
    pub balanced: bool,
}

impl ExternalDataset {
    /// Class counts `(normal, perturbed)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let p = self.examples.iter().filter(|(_, l)| *l == Label::Perturbed).count();
        (self.examples.len() - p, p)
    }

    /// Splits into a dataset with stratified seeded ratio cuts. Each row is
    /// its own pair.
    pub fn to_probing(&self, ratios: SplitRatios, seed: u64) -> Result<ProbingDataset, DatasetError> {
        ratios.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split_of = vec![Split::Train; self.examples.len()];
        for label in [Label::Normal, Label::Perturbed] {
            let mut idx: Vec<usize> =
                (0..self.examples.len()).filter(|&i| self.examples[i].1 == label).collect();
            idx.shuffle(&mut rng);
            for (position, &i) in idx.iter().enumerate() {
                split_of[i] = ratios.assign(idx.len(), position);
            }
        }
        let examples = self
            .examples
            .iter()
            .zip(split_of)
            .enumerate()
            .map(|(i, ((text, label), split))| {
                let id = format!("{}:{}", self.name, i + 1);
                LabeledExample {
                    example_id: id.clone(),
                    pair_id: id,
                    task: self.name.clone(),
                    split,
                    label: *label,
                    text: text.clone(),
                    n_modifications: 0,
                }
            })
            .collect();
        Ok(ProbingDataset { task: self.name.clone(), examples })
    }
}

/// Parses `text<TAB>label` rows; labels are `0`/`1` or `normal`/`perturbed`.
/// A leading `text<TAB>label` header row is allowed.
pub fn parse_external_dataset(name: &str, text: &str) -> Result<ExternalDataset, DatasetError> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line == "text\tlabel") {
            continue;
        }
        let bad = |reason: String| DatasetError::MalformedRow { line: i + 1, reason };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(bad(format!("expected 2 columns, found {}", cols.len())));
        }
        let label: Label = cols[1].trim().parse().map_err(bad)?;
        let sentence = normalize_sentence(cols[0]);
        if sentence.is_empty() {
            return Err(bad("empty text".into()));
        }
        examples.push((sentence, label));
    }
    if examples.is_empty() {
        return Err(DatasetError::EmptyFile(name.to_string()));
    }
    let p = examples.iter().filter(|(_, l)| *l == Label::Perturbed).count();
    Ok(ExternalDataset { name: name.to_string(), balanced: 2 * p == examples.len(), examples })
}

pub fn load_external_dataset(path: &Path) -> Result<ExternalDataset, DatasetError> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_external_dataset(&name, &std::fs::read_to_string(path)?)
}

/// Draws `total / k` items from each of `k` sources (the remainder goes to
/// the first sources in order), keeping the two classes equal within every
/// balanced source, then shuffles the merged set.
pub fn subsample_for_joint_training<T: Labeled + Clone>(
    sources: &[&[T]],
    total: usize,
    seed: u64,
) -> Result<Vec<T>, DatasetError> {
    if sources.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let k = sources.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut merged = Vec::with_capacity(total);
    for (si, source) in sources.iter().enumerate() {
        let quota = total / k + usize::from(si < total % k);
        let by_label = |l: Label| -> Vec<usize> { (0..source.len()).filter(|&i| source[i].label() == l).collect() };
        let mut normal = by_label(Label::Normal);
        let mut perturbed = by_label(Label::Perturbed);
        if source.len() < quota {
            return Err(DatasetError::InsufficientData {
                source_index: si,
                available: source.len(),
                requested: quota,
            });
        }
        let mut picked: Vec<usize> = if normal.len() == perturbed.len() {
            let want_n = quota.div_ceil(2);
            let want_p = quota / 2;
            normal.shuffle(&mut rng);
            perturbed.shuffle(&mut rng);
            normal.truncate(want_n);
            perturbed.truncate(want_p);
            normal.into_iter().chain(perturbed).collect()
        } else {
            let mut all: Vec<usize> = (0..source.len()).collect();
            all.shuffle(&mut rng);
            all.truncate(quota);
            all
        };
        picked.sort_unstable();
        merged.extend(picked.into_iter().map(|i| source[i].clone()));
    }
    merged.shuffle(&mut rng);
    Ok(merged)
}
