//! Python bindings: trees, perturbations, BoW embeddings, embedding tables
//! and probes. Library errors surface as `ValueError`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use synprobe::dataset::{self, Label, SplitRatios};
use synprobe::embed::{self, ContentWordPolicy};
use synprobe::perturb::{self, PerturbationKind, PerturbationRecord};
use synprobe::probe::{self, LabeledSet, ProbeConfig, ProbeKind, TrainedProbe};
use synprobe::treebank::{self, ConstituencyTree, Token};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kind(name: &str) -> PyResult<PerturbationKind> {
    name.parse().map_err(value_err)
}

fn tokens_of(pairs: &[(String, String)]) -> Vec<Token> {
    pairs.iter().enumerate().map(|(i, (w, p))| Token::new(w.as_str(), p.as_str(), i)).collect()
}

fn pairs_of(tokens: &[Token]) -> Vec<(String, String)> {
    tokens.iter().map(|t| (t.surface().to_string(), t.pos().to_string())).collect()
}

/// A parsed constituency tree.
#[pyclass(name = "Tree", frozen, from_py_object)]
#[derive(Clone)]
struct PyTree(ConstituencyTree);

#[pymethods]
impl PyTree {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        treebank::parse_bracketed(text).map(PyTree).map_err(value_err)
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label().to_string()
    }

    fn sentence(&self) -> String {
        self.0.sentence()
    }

    /// `(surface, pos)` pairs in sentence order.
    fn tokens(&self) -> Vec<(String, String)> {
        self.0.tokens().iter().map(|t| (t.surface().to_string(), t.pos().to_string())).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __str__(&self) -> String {
        treebank::serialize_bracketed(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("Tree({:?})", treebank::serialize_bracketed(&self.0))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

#[pyfunction]
fn parse(text: &str) -> PyResult<PyTree> {
    PyTree::new(text)
}

#[pyfunction]
fn serialize(tree: &PyTree) -> String {
    treebank::serialize_bracketed(&tree.0)
}

/// An original/perturbed sentence pair.
#[pyclass(name = "Record", frozen, from_py_object)]
#[derive(Clone)]
struct PyRecord(PerturbationRecord);

#[pymethods]
impl PyRecord {
    #[new]
    #[pyo3(signature = (source_id, kind, n_modifications, original, perturbed, original_pos, perturbed_pos))]
    fn new(
        source_id: String,
        kind: &str,
        n_modifications: usize,
        original: String,
        perturbed: String,
        original_pos: Vec<String>,
        perturbed_pos: Vec<String>,
    ) -> PyResult<Self> {
        Ok(PyRecord(PerturbationRecord {
            source_id,
            kind: self::kind(kind)?,
            n_modifications,
            original,
            perturbed,
            original_pos,
            perturbed_pos,
        }))
    }

    #[getter]
    fn source_id(&self) -> &str {
        &self.0.source_id
    }
    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.as_str()
    }
    #[getter]
    fn n_modifications(&self) -> usize {
        self.0.n_modifications
    }
    #[getter]
    fn original(&self) -> &str {
        &self.0.original
    }
    #[getter]
    fn perturbed(&self) -> &str {
        &self.0.perturbed
    }
    #[getter]
    fn original_pos(&self) -> Vec<String> {
        self.0.original_pos.clone()
    }
    #[getter]
    fn perturbed_pos(&self) -> Vec<String> {
        self.0.perturbed_pos.clone()
    }

    fn __repr__(&self) -> String {
        format!("Record({}, {}, {:?} -> {:?})", self.0.source_id, self.0.kind, self.0.original, self.0.perturbed)
    }
}

/// Applies one perturbation; `None` when it does not apply to the sentence.
#[pyfunction(name = "perturb")]
#[pyo3(signature = (kind, tree, source_id = "s0"))]
fn perturb_tree(kind: &str, tree: &PyTree, source_id: &str) -> PyResult<Option<PyRecord>> {
    Ok(perturb::perturb(self::kind(kind)?, &tree.0, source_id).ok().map(PyRecord))
}

#[pyfunction]
fn verify_content_invariant(record: &PyRecord) -> bool {
    perturb::verify_content_invariant(&record.0)
}

/// `("rides", "VBZ")` -> `("ride", "VBP")`.
#[pyfunction]
fn flip_number(surface: &str, pos: &str) -> PyResult<(String, String)> {
    let t = perturb::flip_number(&Token::new(surface, pos, 0)).map_err(value_err)?;
    Ok((t.surface().to_string(), t.pos().to_string()))
}

/// Records as TSV text, and back.
#[pyfunction]
fn write_records(records: Vec<PyRecord>) -> PyResult<String> {
    let recs: Vec<PerturbationRecord> = records.into_iter().map(|r| r.0).collect();
    perturb::write_records_tsv(&recs).map_err(value_err)
}

#[pyfunction]
fn read_records(text: &str) -> PyResult<Vec<PyRecord>> {
    Ok(perturb::read_records_tsv(text).map_err(value_err)?.into_iter().map(PyRecord).collect())
}

/// Balanced, pair-colocated dataset TSV built from records.
#[pyfunction]
#[pyo3(signature = (task, records, seed, train = 0.8, dev = 0.1, test = 0.1))]
fn build_dataset(task: &str, records: Vec<PyRecord>, seed: u64, train: f64, dev: f64, test: f64) -> PyResult<String> {
    let recs: Vec<PerturbationRecord> = records.into_iter().map(|r| r.0).collect();
    let ratios = SplitRatios::new(train, dev, test).map_err(value_err)?;
    let ds = dataset::build_probing_dataset(task, &recs, ratios, seed).map_err(value_err)?;
    Ok(dataset::write_dataset_tsv(&ds))
}

#[pyclass(name = "WordVectors", frozen)]
struct PyWordVectors(embed::WordVectorTable);

#[pymethods]
impl PyWordVectors {
    /// Parses `word f1 ... fd` lines.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        embed::parse_word_vectors(text).map(PyWordVectors).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        embed::load_word_vectors(&path).map(PyWordVectors).map_err(value_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Mean word vector and the number of in-vocabulary tokens.
#[pyfunction]
fn bow_embed(tokens: Vec<String>, vectors: &PyWordVectors) -> (Vec<f32>, usize) {
    let e = embed::bow_embed(&tokens, &vectors.0);
    (e.vector, e.in_vocab)
}

#[pyfunction]
#[pyo3(signature = (tokens, keep_pos_prefixes = None, drop_auxiliaries = true))]
fn filter_content_words(
    tokens: Vec<(String, String)>,
    keep_pos_prefixes: Option<Vec<String>>,
    drop_auxiliaries: bool,
) -> PyResult<Vec<(String, String)>> {
    let mut policy = ContentWordPolicy { drop_auxiliaries, ..Default::default() };
    if let Some(p) = keep_pos_prefixes {
        policy.keep_pos_prefixes = p;
    }
    let kept = embed::filter_content_words(&tokens_of(&tokens), &policy).map_err(value_err)?;
    Ok(pairs_of(&kept))
}

#[pyclass(name = "EmbeddingTable")]
struct PyEmbeddingTable(embed::EmbeddingTable);

#[pymethods]
impl PyEmbeddingTable {
    #[new]
    fn new(dim: usize) -> Self {
        PyEmbeddingTable(embed::EmbeddingTable::new(dim))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn insert(&mut self, id: String, vector: Vec<f32>) -> PyResult<()> {
        self.0.insert(id, vector).map_err(value_err)
    }

    fn get(&self, id: &str) -> Option<Vec<f32>> {
        self.0.get(id).map(<[f32]>::to_vec)
    }

    fn ids(&self) -> Vec<String> {
        self.0.iter().map(|(id, _)| id.to_string()).collect()
    }

    fn to_text(&self) -> String {
        embed::write_embeddings(&self.0)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        embed::read_embeddings(text).map(PyEmbeddingTable).map_err(value_err)
    }

    fn store(&self, path: PathBuf) -> PyResult<()> {
        embed::store_embeddings(&self.0, &path).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        embed::load_embeddings(&path).map(PyEmbeddingTable).map_err(value_err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

fn labeled(xs: &[Vec<f32>], ys: &[usize]) -> PyResult<LabeledSet> {
    if xs.len() != ys.len() {
        return Err(value_err(format!("{} rows but {} labels", xs.len(), ys.len())));
    }
    let dim = xs.first().map_or(0, Vec::len);
    let mut set = LabeledSet::new(dim);
    for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
        if y > 1 {
            return Err(value_err(format!("label {y} at row {i} is not 0 or 1")));
        }
        set.push(format!("r{i}"), x, Label::from_index(y)).map_err(value_err)?;
    }
    Ok(set)
}

#[allow(clippy::too_many_arguments)]
fn config(
    kind: &str,
    hidden_units: usize,
    dropout: f64,
    batch_size: usize,
    lr_grid: Option<Vec<f64>>,
    max_epochs: usize,
    patience: usize,
    seed: u64,
) -> PyResult<ProbeConfig> {
    let defaults = ProbeConfig::default();
    Ok(ProbeConfig {
        kind: kind.parse::<ProbeKind>().map_err(value_err)?,
        hidden_units,
        dropout,
        batch_size,
        lr_grid: lr_grid.unwrap_or(defaults.lr_grid),
        max_epochs,
        patience,
        seed,
    })
}

#[pyclass(name = "Probe", frozen)]
struct PyProbe(TrainedProbe);

#[pymethods]
impl PyProbe {
    #[getter]
    fn kind(&self) -> String {
        self.0.config.kind.to_string()
    }
    #[getter]
    fn selected_lr(&self) -> f64 {
        self.0.selected_lr
    }
    #[getter]
    fn dev_accuracy(&self) -> f64 {
        self.0.dev_accuracy
    }
    #[getter]
    fn train_task(&self) -> &str {
        &self.0.train_task
    }
    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    /// Predicted class (0 normal, 1 perturbed).
    fn predict(&self, x: Vec<f32>) -> PyResult<usize> {
        if x.len() != self.0.input_dim() {
            return Err(value_err(format!("expected {} features, got {}", self.0.input_dim(), x.len())));
        }
        Ok(self.0.predict(&x).as_index())
    }

    /// `(accuracy, n)` on a labeled set.
    fn evaluate(&self, xs: Vec<Vec<f32>>, ys: Vec<usize>) -> PyResult<(f64, usize)> {
        let e = probe::evaluate(&self.0, &labeled(&xs, &ys)?).map_err(value_err)?;
        Ok((e.accuracy, e.n))
    }

    fn to_text(&self) -> String {
        probe::write_probe(&self.0)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        probe::read_probe(text).map(PyProbe).map_err(value_err)
    }

    fn store(&self, path: PathBuf) -> PyResult<()> {
        probe::store_probe(&self.0, &path).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        probe::load_probe(&path).map(PyProbe).map_err(value_err)
    }
}

/// Trains a probe over the learning-rate grid, keeping the best dev run.
#[pyfunction]
#[pyo3(signature = (
    train_x, train_y, dev_x, dev_y, kind = "MLP", hidden_units = 512, dropout = 0.25,
    batch_size = 64, lr_grid = None, max_epochs = 50, patience = 5, seed = 0, task = "task"
))]
#[allow(clippy::too_many_arguments)]
fn train_probe(
    py: Python<'_>,
    train_x: Vec<Vec<f32>>,
    train_y: Vec<usize>,
    dev_x: Vec<Vec<f32>>,
    dev_y: Vec<usize>,
    kind: &str,
    hidden_units: usize,
    dropout: f64,
    batch_size: usize,
    lr_grid: Option<Vec<f64>>,
    max_epochs: usize,
    patience: usize,
    seed: u64,
    task: &str,
) -> PyResult<PyProbe> {
    let cfg = config(kind, hidden_units, dropout, batch_size, lr_grid, max_epochs, patience, seed)?;
    let (train, dev) = (labeled(&train_x, &train_y)?, labeled(&dev_x, &dev_y)?);
    py.detach(|| probe::train_probe(&train, &dev, &cfg, task)).map(PyProbe).map_err(value_err)
}

/// Largest relative error between analytic and numerical gradients.
#[pyfunction]
#[pyo3(signature = (xs, ys, kind = "MLP", hidden_units = 4, seed = 0))]
fn gradient_check(xs: Vec<Vec<f32>>, ys: Vec<usize>, kind: &str, hidden_units: usize, seed: u64) -> PyResult<f64> {
    let cfg = config(kind, hidden_units, 0.0, 64, None, 1, 1, seed)?;
    probe::gradient_check(&cfg, &labeled(&xs, &ys)?).map_err(value_err)
}

#[pymodule]
fn synprobe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTree>()?;
    m.add_class::<PyRecord>()?;
    m.add_class::<PyWordVectors>()?;
    m.add_class::<PyEmbeddingTable>()?;
    m.add_class::<PyProbe>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(serialize, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_tree, m)?)?;
    m.add_function(wrap_pyfunction!(verify_content_invariant, m)?)?;
    m.add_function(wrap_pyfunction!(flip_number, m)?)?;
    m.add_function(wrap_pyfunction!(write_records, m)?)?;
    m.add_function(wrap_pyfunction!(read_records, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(bow_embed, m)?)?;
    m.add_function(wrap_pyfunction!(filter_content_words, m)?)?;
    m.add_function(wrap_pyfunction!(train_probe, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add("PERTURBATION_KINDS", PerturbationKind::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
