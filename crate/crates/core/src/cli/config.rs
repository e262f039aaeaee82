//! Flat JSON run configuration with `key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::SplitRatios;
use crate::embed::ContentWordPolicy;
use crate::perturb::PerturbationKind;
use crate::probe::{ProbeConfig, ProbeKind};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiTaskSpec {
    pub sources: Vec<String>,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Bracketed parse file, one tree per line.
    pub corpus: Option<PathBuf>,
    pub tasks: Vec<String>,
    /// Two-column `text<TAB>label` files, by dataset name.
    pub external_datasets: BTreeMap<String, PathBuf>,
    /// Word-vector file; enables the `bow` encoder.
    pub word_vectors: Option<PathBuf>,
    /// Directories of precomputed embedding tables, by encoder name.
    pub encoder_dirs: BTreeMap<String, PathBuf>,
    /// Unperturbed sentences for the false-positive scan.
    pub clean_corpus: Option<PathBuf>,
    pub train_ratio: f64,
    pub dev_ratio: f64,
    pub test_ratio: f64,
    pub split_seed: u64,
    pub probe_kind: String,
    pub hidden_units: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub lr_grid: Vec<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub keep_pos_prefixes: Vec<String>,
    pub drop_auxiliaries: bool,
    pub include_agree_shift: bool,
    pub multitask: Vec<MultiTaskSpec>,
    pub total_train: Option<usize>,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let probe = ProbeConfig::default();
        let policy = ContentWordPolicy::default();
        let ratios = SplitRatios::default();
        RunConfig {
            out_dir: PathBuf::from("synprobe_out"),
            corpus: None,
            tasks: PerturbationKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
            external_datasets: BTreeMap::new(),
            word_vectors: None,
            encoder_dirs: BTreeMap::new(),
            clean_corpus: None,
            train_ratio: ratios.train,
            dev_ratio: ratios.dev,
            test_ratio: ratios.test,
            split_seed: 0,
            probe_kind: probe.kind.to_string(),
            hidden_units: probe.hidden_units,
            dropout: probe.dropout,
            batch_size: probe.batch_size,
            lr_grid: probe.lr_grid,
            max_epochs: probe.max_epochs,
            patience: probe.patience,
            keep_pos_prefixes: policy.keep_pos_prefixes,
            drop_auxiliaries: policy.drop_auxiliaries,
            include_agree_shift: false,
            multitask: Vec::new(),
            total_train: None,
            jobs: 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Sets `key` (dotted for map entries, e.g. `encoder_dirs.bert`) in a JSON
/// object. The value is read as JSON when it parses, else as a string.
fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut parts = key.split('.').peekable();
    let mut node = root;
    while let Some(part) = parts.next() {
        let obj = node.as_object_mut().ok_or_else(|| config_err(format!("override {key:?}: not an object")))?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(config_err("empty override key"))
}

impl RunConfig {
    /// Reads the optional config file, applies overrides, resolves relative
    /// paths against the config file's directory and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let (mut root, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| config_err(format!("config {}: {e}", p.display())))?;
                if !v.is_object() {
                    return Err(config_err("config must be a JSON object"));
                }
                (v, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (Value::Object(Default::default()), PathBuf::new()),
        };
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(root).map_err(|e| config_err(format!("config: {e}")))?;
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !base.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in [&mut self.corpus, &mut self.word_vectors, &mut self.clean_corpus].into_iter().flatten() {
            fix(p);
        }
        self.external_datasets.values_mut().for_each(fix);
        self.encoder_dirs.values_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for t in &self.tasks {
            let kind: PerturbationKind = t.parse().map_err(|_| config_err(format!("unknown task {t:?}")))?;
            if kind.as_str() != t {
                return Err(config_err(format!("task {t:?} should be written {}", kind.as_str())));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in self.all_tasks() {
            if !valid_name(&name) {
                return Err(config_err(format!("dataset name {name:?} must be alphanumeric, '_' or '-'")));
            }
            if !seen.insert(name.clone()) {
                return Err(config_err(format!("dataset name {name:?} used twice")));
            }
        }
        for name in self.encoder_dirs.keys() {
            if !valid_name(name) {
                return Err(config_err(format!("encoder name {name:?} must be alphanumeric, '_' or '-'")));
            }
            if name == "bow" {
                return Err(config_err("encoder name \"bow\" is reserved for word_vectors"));
            }
        }
        self.ratios()?;
        self.probe_config(0)?;
        for m in &self.multitask {
            if m.sources.contains(&m.target) {
                return Err(config_err(format!("multitask target {} is also a source", m.target)));
            }
            for t in m.sources.iter().chain([&m.target]) {
                if !seen.contains(t) {
                    return Err(config_err(format!("multitask task {t:?} is not a configured dataset")));
                }
            }
        }
        Ok(())
    }

    pub fn ratios(&self) -> Result<SplitRatios, CliError> {
        SplitRatios::new(self.train_ratio, self.dev_ratio, self.test_ratio).map_err(|e| config_err(e.to_string()))
    }

    pub fn probe_config(&self, seed: u64) -> Result<ProbeConfig, CliError> {
        let kind: ProbeKind = self.probe_kind.parse().map_err(|e: crate::probe::ProbeError| config_err(e.to_string()))?;
        let c = ProbeConfig {
            kind,
            hidden_units: self.hidden_units,
            dropout: self.dropout,
            batch_size: self.batch_size,
            lr_grid: self.lr_grid.clone(),
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        };
        c.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(c)
    }

    pub fn policy(&self) -> ContentWordPolicy {
        ContentWordPolicy { keep_pos_prefixes: self.keep_pos_prefixes.clone(), drop_auxiliaries: self.drop_auxiliaries }
    }

    pub fn kinds(&self) -> Vec<PerturbationKind> {
        self.tasks.iter().filter_map(|t| t.parse().ok()).collect()
    }

    /// Generated task names followed by external dataset names.
    pub fn all_tasks(&self) -> Vec<String> {
        self.tasks.iter().cloned().chain(self.external_datasets.keys().cloned()).collect()
    }

    /// `bow` (when word vectors are configured) followed by the external
    /// encoders in name order.
    pub fn encoders(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.word_vectors.is_some() {
            out.push("bow".to_string());
        }
        out.extend(self.encoder_dirs.keys().cloned());
        out
    }

    /// Configured multi-task groups, or leave-one-out over the generated
    /// tasks when none are configured.
    pub fn multitask_groups(&self) -> Vec<MultiTaskSpec> {
        if !self.multitask.is_empty() {
            return self.multitask.clone();
        }
        if self.tasks.len() < 3 {
            return Vec::new();
        }
        self.tasks
            .iter()
            .map(|target| MultiTaskSpec {
                sources: self.tasks.iter().filter(|t| *t != target).cloned().collect(),
                target: target.clone(),
            })
            .collect()
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}
