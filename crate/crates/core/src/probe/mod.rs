//! Probing classifiers: logistic regression and a one-hidden-layer MLP,
//! trained with Adam, minibatches, inverted dropout and early stopping on
//! dev accuracy over a learning-rate grid.

mod io;
mod network;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{Label, Labeled};

pub use io::{load_probe, read_probe, store_probe, write_probe};
pub use network::{max_gradient_error, Dense, Gradients, Network};

use network::Adam;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("dimension mismatch: probe expects {expected}, data has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error("probe file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeKind {
    Lr,
    Mlp,
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Lr => "LR",
            ProbeKind::Mlp => "MLP",
        })
    }
}

impl FromStr for ProbeKind {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LR" => Ok(ProbeKind::Lr),
            "MLP" => Ok(ProbeKind::Mlp),
            _ => Err(ProbeError::InvalidConfig(format!("unknown probe kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub hidden_units: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub lr_grid: Vec<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            kind: ProbeKind::Mlp,
            hidden_units: 512,
            dropout: 0.25,
            batch_size: 64,
            lr_grid: vec![1e-2, 1e-3, 1e-4, 1e-5],
            max_epochs: 50,
            patience: 5,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn lr(seed: u64) -> Self {
        ProbeConfig { kind: ProbeKind::Lr, seed, ..Default::default() }
    }

    pub fn mlp(seed: u64) -> Self {
        ProbeConfig { kind: ProbeKind::Mlp, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: &str| Err(ProbeError::InvalidConfig(m.to_string()));
        if self.hidden_units == 0 {
            return bad("hidden_units must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|lr| !(lr.is_finite() && *lr > 0.0)) {
            return bad("lr_grid must be a non-empty list of positive rates");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        Ok(())
    }
}

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    dim: usize,
    ids: Vec<String>,
    features: Vec<f32>,
    labels: Vec<Label>,
}

/// One row of a [`LabeledSet`], usable with joint subsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVector {
    pub id: String,
    pub features: Vec<f32>,
    pub label: Label,
}

impl Labeled for LabeledVector {
    fn label(&self) -> Label {
        self.label
    }
}

impl LabeledSet {
    pub fn new(dim: usize) -> Self {
        LabeledSet { dim, ids: Vec::new(), features: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, id: impl Into<String>, x: &[f32], label: Label) -> Result<(), ProbeError> {
        if x.len() != self.dim {
            return Err(ProbeError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        self.ids.push(id.into());
        self.features.extend_from_slice(x);
        self.labels.push(label);
        Ok(())
    }

    pub fn from_vectors(dim: usize, rows: impl IntoIterator<Item = LabeledVector>) -> Result<Self, ProbeError> {
        let mut set = LabeledSet::new(dim);
        for r in rows {
            set.push(r.id, &r.features, r.label)?;
        }
        Ok(set)
    }

    pub fn to_vectors(&self) -> Vec<LabeledVector> {
        (0..self.len())
            .map(|i| LabeledVector { id: self.ids[i].clone(), features: self.row(i).to_vec(), label: self.labels[i] })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Copy of a contiguous range of rows.
    pub fn slice(&self, range: std::ops::Range<usize>) -> LabeledSet {
        LabeledSet {
            dim: self.dim,
            ids: self.ids[range.clone()].to_vec(),
            features: self.features[range.start * self.dim..range.end * self.dim].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }

    fn rows(&self) -> Vec<&[f32]> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }

    fn class_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.as_index()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe {
    pub config: ProbeConfig,
    pub network: Network<f32>,
    pub selected_lr: f64,
    pub dev_accuracy: f64,
    pub train_task: String,
}

impl TrainedProbe {
    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    /// An untrained probe with every parameter zero; every prediction is a
    /// tie and resolves to class 0.
    pub fn zeros(config: ProbeConfig, input_dim: usize, train_task: &str) -> Self {
        let network = Network::zeros(config.kind, input_dim, config.hidden_units);
        TrainedProbe { config, network, selected_lr: 0.0, dev_accuracy: 0.0, train_task: train_task.to_string() }
    }

    pub fn predict(&self, x: &[f32]) -> Label {
        Label::from_index(self.network.predict(x))
    }
}

/// Accuracy and per-example predictions of a probe on one set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub n: usize,
    pub predictions: Vec<Label>,
}

pub fn evaluate(probe: &TrainedProbe, test: &LabeledSet) -> Result<Evaluation, ProbeError> {
    evaluate_network(&probe.network, test)
}

fn evaluate_network(net: &Network<f32>, test: &LabeledSet) -> Result<Evaluation, ProbeError> {
    if test.dim() != net.input_dim() {
        return Err(ProbeError::DimensionMismatch { expected: net.input_dim(), found: test.dim() });
    }
    if test.is_empty() {
        return Err(ProbeError::EmptySet("test"));
    }
    let predictions: Vec<Label> = (0..test.len()).map(|i| Label::from_index(net.predict(test.row(i)))).collect();
    let correct = predictions.iter().zip(test.labels()).filter(|(p, l)| p == l).count();
    Ok(Evaluation { accuracy: correct as f64 / test.len() as f64, n: test.len(), predictions })
}

/// Generator for one grid point, derived from the run seed and the rate so
/// that each learning rate's run does not depend on the rest of the grid.
fn run_rng(seed: u64, lr: f64) -> ChaCha8Rng {
    let mut mixed = seed ^ lr.to_bits().rotate_left(17) ^ 0x9E37_79B9_7F4A_7C15;
    mixed = (mixed ^ (mixed >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    mixed = (mixed ^ (mixed >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(mixed ^ (mixed >> 31))
}

struct RunResult {
    network: Network<f32>,
    dev_accuracy: f64,
}

fn train_one(train: &LabeledSet, dev: &LabeledSet, config: &ProbeConfig, lr: f64) -> Result<RunResult, ProbeError> {
    let mut rng = run_rng(config.seed, lr);
    let mut net: Network<f32> = Network::init(config.kind, train.dim(), config.hidden_units, &mut rng);
    let mut adam = Adam::new(&net, lr);
    let labels = train.class_indices();
    let use_dropout = config.kind == ProbeKind::Mlp && config.dropout > 0.0;
    let keep_scale = 1.0 / (1.0 - config.dropout);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<RunResult> = None;
    let mut since_best = 0;
    let mut mask = vec![0.0; config.hidden_units];
    for _epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grads = net.zero_gradients();
            for &i in batch {
                let m = if use_dropout {
                    for v in mask.iter_mut() {
                        *v = if rng.random::<f64>() < config.dropout { 0.0 } else { keep_scale };
                    }
                    Some(mask.as_slice())
                } else {
                    None
                };
                let act = net.forward(train.row(i), m);
                net.accumulate(train.row(i), labels[i], &act, m, &mut grads);
            }
            grads.divide(batch.len() as f64);
            adam.step(&mut net, &grads);
        }
        let acc = evaluate_network(&net, dev)?.accuracy;
        if best.as_ref().is_none_or(|b| acc > b.dev_accuracy) {
            best = Some(RunResult { network: net.clone(), dev_accuracy: acc });
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok(best.expect("at least one epoch"))
}

/// Trains one probe per learning rate and keeps the one with the best dev
/// accuracy (ties go to the smaller rate). Each run restores its best epoch.
pub fn train_probe(
    train: &LabeledSet,
    dev: &LabeledSet,
    config: &ProbeConfig,
    train_task: &str,
) -> Result<TrainedProbe, ProbeError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ProbeError::EmptySet("train"));
    }
    if dev.is_empty() {
        return Err(ProbeError::EmptySet("dev"));
    }
    if dev.dim() != train.dim() {
        return Err(ProbeError::DimensionMismatch { expected: train.dim(), found: dev.dim() });
    }
    let first = train.label(0);
    if train.labels().iter().all(|&l| l == first) {
        return Err(ProbeError::DegenerateLabels);
    }
    let mut chosen: Option<(f64, RunResult)> = None;
    for &lr in &config.lr_grid {
        let run = train_one(train, dev, config, lr)?;
        let better = match &chosen {
            None => true,
            Some((best_lr, best)) => {
                run.dev_accuracy > best.dev_accuracy || (run.dev_accuracy == best.dev_accuracy && lr < *best_lr)
            }
        };
        if better {
            chosen = Some((lr, run));
        }
    }
    let (selected_lr, run) = chosen.expect("non-empty grid");
    Ok(TrainedProbe {
        config: config.clone(),
        network: run.network,
        selected_lr,
        dev_accuracy: run.dev_accuracy,
        train_task: train_task.to_string(),
    })
}

/// Compares analytic and finite-difference gradients for a freshly
/// initialized probe of `config`'s architecture (in `f64`) on `sample`.
pub fn gradient_check(config: &ProbeConfig, sample: &LabeledSet) -> Result<f64, ProbeError> {
    config.validate()?;
    if sample.is_empty() {
        return Err(ProbeError::EmptySet("sample"));
    }
    let mut rng = run_rng(config.seed, 0.0);
    let net: Network<f64> = Network::init(config.kind, sample.dim(), config.hidden_units, &mut rng);
    Ok(max_gradient_error(&net, &sample.rows(), &sample.class_indices()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Four clusters at the corners of the unit square; opposite corners
    /// share a label.
    fn xor(n: usize, seed: u64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = LabeledSet::new(2);
        for i in 0..n {
            let (cx, cy) = [(1.0f32, 1.0f32), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)][i % 4];
            let x = cx + rng.random_range(-0.4..0.4);
            let y = cy + rng.random_range(-0.4..0.4);
            set.push(format!("e{i}"), &[x, y], Label::from_index(usize::from(cx * cy < 0.0))).unwrap();
        }
        set
    }

    /// Points whose label is the sign of the first coordinate, with a band of
    /// width 0.2 around zero left empty.
    pub(crate) fn separable(n: usize, seed: u64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = LabeledSet::new(2);
        for i in 0..n {
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let x: f32 = side * rng.random_range(0.1..1.0);
            let y: f32 = rng.random_range(-1.0..1.0);
            set.push(format!("e{i}"), &[x, y], Label::from_index(usize::from(x > 0.0))).unwrap();
        }
        set
    }

    /// 70/15/15 split of one generated set.
    pub(crate) fn separable_split(n: usize, seed: u64) -> (LabeledSet, LabeledSet, LabeledSet) {
        let all = separable(n, seed);
        let a = n * 7 / 10;
        let b = a + n * 15 / 100;
        (all.slice(0..a), all.slice(a..b), all.slice(b..n))
    }

    fn small_sample(n: usize, dim: usize, seed: u64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = LabeledSet::new(dim);
        for i in 0..n {
            let x: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            set.push(format!("g{i}"), &x, Label::from_index(i % 2)).unwrap();
        }
        set
    }

    #[test]
    fn gradient_check_lr_and_mlp() {
        let sample = small_sample(8, 5, 3);
        let lr = gradient_check(&ProbeConfig::lr(1), &sample).unwrap();
        assert!(lr <= 1e-4, "LR {lr}");
        let mlp = ProbeConfig { hidden_units: 4, ..ProbeConfig::mlp(1) };
        let e = gradient_check(&mlp, &sample).unwrap();
        assert!(e <= 1e-4, "MLP {e}");
    }

    #[test]
    fn bias_gradient_at_origin_is_softmax_residual() {
        let mut set = LabeledSet::new(3);
        let labels = [0, 1, 1, 1, 0];
        for (i, &l) in labels.iter().enumerate() {
            set.push(format!("z{i}"), &[0.0; 3], Label::from_index(l)).unwrap();
        }
        let net: Network<f64> = Network::zeros(ProbeKind::Lr, 3, 1);
        let g = net.gradients(&set.rows(), &set.class_indices());
        // logits are 0 so p = (0.5, 0.5); residual is mean(p - onehot)
        let mut residual = [0.0f64; 2];
        for &l in &labels {
            for (k, r) in residual.iter_mut().enumerate() {
                *r += 0.5 - if k == l { 1.0 } else { 0.0 };
            }
        }
        let n = labels.len() as f64;
        assert_eq!(g.output_bias, vec![residual[0] / n, residual[1] / n]);
        assert!(g.output_weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn zero_probe_on_balanced_set_is_chance() {
        let set = small_sample(10, 4, 9);
        let probe = TrainedProbe::zeros(ProbeConfig::lr(0), 4, "t");
        let ev = evaluate(&probe, &set).unwrap();
        assert_eq!(ev.accuracy, 0.5);
        assert!(ev.predictions.iter().all(|&p| p == Label::Normal));
    }

    #[test]
    fn hand_set_mlp_forward() {
        // x = (1, -2); hidden 3 units ReLU; output 2 logits
        let hidden = Dense::new(3, 2, vec![0.5f32, -1.0, 1.0, 1.0, -0.25, 0.75], vec![0.1, 0.0, -0.2]);
        let output = Dense::new(2, 3, vec![1.0f32, -1.0, 0.5, -0.5, 2.0, 0.0], vec![0.0, 0.3]);
        let net = Network::from_layers(Some(hidden), output);
        // pre = (0.5+2+0.1, 1-2, -0.25-1.5-0.2) = (2.6, -1, -1.95) -> relu (2.6, 0, 0)
        // logits = (2.6, -1.3 + 0.3) = (2.6, -1.0)
        let p = net.predict_proba(&[1.0, -2.0]);
        let e = (-3.6f64).exp();
        let expect1 = e / (1.0 + e);
        assert!((p[1] - expect1).abs() <= 1e-6);
        assert!((p[0] - (1.0 - expect1)).abs() <= 1e-6);
        assert_eq!(net.predict(&[1.0, -2.0]), 0);
    }

    #[test]
    fn single_class_training_rejected() {
        let mut set = LabeledSet::new(1);
        set.push("a", &[1.0], Label::Normal).unwrap();
        set.push("b", &[2.0], Label::Normal).unwrap();
        assert!(matches!(
            train_probe(&set, &set, &ProbeConfig::lr(0), "t"),
            Err(ProbeError::DegenerateLabels)
        ));
    }

    #[test]
    fn dimension_mismatch_on_eval() {
        let probe = TrainedProbe::zeros(ProbeConfig::lr(0), 4, "t");
        let set = small_sample(4, 3, 1);
        assert!(matches!(evaluate(&probe, &set), Err(ProbeError::DimensionMismatch { expected: 4, found: 3 })));
    }

    #[test]
    fn linear_task_lr() {
        let (train, dev, test) = separable_split(2000, 7);
        let cfg = ProbeConfig::lr(5);
        let probe = train_probe(&train, &dev, &cfg, "linear").unwrap();
        let acc = evaluate(&probe, &test).unwrap().accuracy;
        assert!(acc >= 0.99, "accuracy {acc} lr {} dev {}", probe.selected_lr, probe.dev_accuracy);
    }

    #[test]
    fn xor_needs_hidden_layer() {
        let all = xor(2000, 9);
        let (train, dev, test) = (all.slice(0..1400), all.slice(1400..1700), all.slice(1700..2000));
        let mlp = ProbeConfig { hidden_units: 32, ..ProbeConfig::mlp(1) };
        let mlp = train_probe(&train, &dev, &mlp, "xor").unwrap();
        let lr = train_probe(&train, &dev, &ProbeConfig::lr(1), "xor").unwrap();
        let mlp_acc = evaluate(&mlp, &test).unwrap().accuracy;
        let lr_acc = evaluate(&lr, &test).unwrap().accuracy;
        assert!(mlp_acc >= 0.95, "mlp {mlp_acc}");
        assert!(lr_acc <= 0.60, "lr {lr_acc}");
    }

    #[test]
    fn config_validation() {
        assert!(ProbeConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        assert!(ProbeConfig { lr_grid: vec![], ..Default::default() }.validate().is_err());
        assert!(ProbeConfig { hidden_units: 0, ..Default::default() }.validate().is_err());
        assert!(ProbeConfig::default().validate().is_ok());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net: Network<f32> = Network::init(ProbeKind::Mlp, 6, 8, &mut rng);
        for _ in 0..50 {
            let x: Vec<f32> = (0..6).map(|_| rng.random_range(-50.0..50.0)).collect();
            let p = net.predict_proba(&x);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((p[0] + p[1] - 1.0).abs() <= 1e-9);
        }
    }
}
