//! Subcommand bodies. Each gathers and hashes its inputs first, skips when
//! its stamp is fresh, and otherwise writes its outputs through a
//! [`Workspace`].

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::dataset::{
    build_probing_dataset, dedup_corpus, normalize_sentence, parse_external_dataset, read_dataset_tsv,
    write_dataset_tsv, ProbingDataset, Split,
};
use crate::embed::{bow_embed, bow_embed_dataset, filter_dataset_content, parse_word_vectors, read_embeddings, write_embeddings, EmbeddingTable};
use crate::experiments::{
    content_word_ablation, false_positive_scan, figures_csv, labeled_set, markdown_summary, multi_task_transfer,
    read_false_positive_tsv, read_overlap_tsv, run_detection_grid, transfer_eval, write_false_positive_tsv,
    write_overlap_tsv, CellKey, EncoderRegistry, LedgerEntry, ResultsLedger, Setting,
};
use crate::perturb::{perturb as perturb_tree, read_records_tsv, verify_content_invariant, write_records_tsv};
use crate::probe::{evaluate, read_probe, write_probe, TrainedProbe};
use crate::treebank::{parse_bracketed, read_corpus};

use super::{CliError, InputHash, RunConfig, Workspace};

const LEDGER: &str = "reports/ledger.tsv";
const FALSE_POSITIVES: &str = "reports/false_positives.tsv";
const OVERLAP: &str = "reports/overlap.tsv";

fn stage(
    cfg: &RunConfig,
    name: &str,
    mut inputs: InputHash,
    body: impl FnOnce(&mut Workspace) -> Result<Value, CliError>,
) -> Result<Value, CliError> {
    // parallelism never changes results, so it is not an input
    let hashed = RunConfig { jobs: 0, ..cfg.clone() };
    inputs.fact("config", &serde_json::to_string(&hashed).map_err(|e| CliError::Invariant(e.to_string()))?);
    let mut ws = Workspace::open(&cfg.out_dir)?;
    if let Some(mut summary) = ws.fresh(name, &inputs) {
        summary["cached"] = json!(true);
        return Ok(summary);
    }
    let summary = body(&mut ws)?;
    ws.commit(name, inputs, &summary)?;
    Ok(summary)
}

fn out(cfg: &RunConfig, rel: &str) -> PathBuf {
    cfg.out_dir.join(rel)
}

fn dataset_rel(task: &str) -> String {
    format!("datasets/{task}.tsv")
}

fn content_rel(task: &str) -> String {
    format!("datasets_content/{task}.tsv")
}

fn probe_rel(dir: &str, encoder: &str, seed: u64, task: &str) -> String {
    format!("{dir}/{encoder}/seed{seed}/{task}.probe")
}

/// Where an encoder's table for a task lives: computed BoW tables sit in the
/// output tree, external encoders are read from their configured directory.
fn table_path(cfg: &RunConfig, encoder: &str, file: &str) -> PathBuf {
    match cfg.encoder_dirs.get(encoder) {
        Some(dir) => dir.join(file),
        None => out(cfg, &format!("embeddings/{encoder}/{file}")),
    }
}

fn table_file(task: &str, content: bool) -> String {
    if content {
        format!("{task}.content.tsv")
    } else {
        format!("{task}.tsv")
    }
}

fn corpus_label(cfg: &RunConfig) -> String {
    cfg.clean_corpus
        .as_ref()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clean".into())
}

fn load_datasets(h: &mut InputHash, cfg: &RunConfig, tasks: &[String], content: bool) -> Result<Vec<ProbingDataset>, CliError> {
    tasks
        .iter()
        .map(|t| {
            let rel = if content { content_rel(t) } else { dataset_rel(t) };
            let text = h.file(&out(cfg, &rel))?;
            Ok(read_dataset_tsv(&text)?)
        })
        .collect()
}

fn load_registry(
    h: &mut InputHash,
    cfg: &RunConfig,
    encoders: &[String],
    tasks: &[String],
    content: bool,
) -> Result<EncoderRegistry, CliError> {
    let mut reg = EncoderRegistry::new();
    for enc in encoders {
        for t in tasks {
            let text = h.file(&table_path(cfg, enc, &table_file(t, content)))?;
            reg.insert(enc, t, read_embeddings(&text)?);
        }
    }
    Ok(reg)
}

fn load_probe(h: &mut InputHash, path: &Path) -> Result<TrainedProbe, CliError> {
    Ok(read_probe(&h.file(path)?)?)
}

fn read_ledger(path: &Path) -> Result<ResultsLedger, CliError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(ResultsLedger::parse(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ResultsLedger::new()),
        Err(e) => Err(e.into()),
    }
}

fn append_ledger(ws: &mut Workspace, entries: Vec<LedgerEntry>) -> Result<(), CliError> {
    let mut ledger = read_ledger(&ws.path(LEDGER))?;
    for e in entries {
        ledger.push(e);
    }
    ws.write_shared(LEDGER, ledger.to_tsv())
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn require_encoders(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let e = cfg.encoders();
    if e.is_empty() {
        return Err(CliError::Config("no encoders: set word_vectors or encoder_dirs".into()));
    }
    Ok(e)
}

/// Fails early when any configured input path is missing.
pub fn check_paths(cfg: &RunConfig) -> Result<(), CliError> {
    let mut paths: Vec<(&str, &PathBuf)> = Vec::new();
    for (k, p) in [("corpus", &cfg.corpus), ("word_vectors", &cfg.word_vectors), ("clean_corpus", &cfg.clean_corpus)] {
        if let Some(p) = p {
            paths.push((k, p));
        }
    }
    paths.extend(cfg.external_datasets.values().map(|p| ("external_datasets", p)));
    paths.extend(cfg.encoder_dirs.values().map(|p| ("encoder_dirs", p)));
    for (key, p) in paths {
        if !p.exists() {
            return Err(CliError::Input(format!("{key}: {} does not exist", p.display())));
        }
    }
    Ok(())
}

pub fn perturb(cfg: &RunConfig) -> Result<Value, CliError> {
    let path = cfg.corpus.as_ref().ok_or_else(|| CliError::Config("no corpus configured".into()))?;
    let mut h = InputHash::new("perturb");
    let text = h.file(path)?;
    stage(cfg, "perturb", h, |ws| {
        let lines = read_corpus(&text)?;
        if lines.is_empty() {
            return Err(CliError::Input(format!("EmptyInput: {} contains no parses", path.display())));
        }
        let read = lines.len();
        let lines = dedup_corpus(lines, |l| normalize_sentence(&l.tree.sentence()));
        let mut ids = HashSet::new();
        if let Some(dup) = lines.iter().find(|l| !ids.insert(l.id.as_str())) {
            return Err(CliError::Input(format!("duplicate sentence id {:?}", dup.id)));
        }
        let mut tasks = Vec::new();
        for kind in cfg.kinds() {
            let records: Vec<_> = lines.iter().filter_map(|l| perturb_tree(kind, &l.tree, &l.id).ok()).collect();
            if let Some(bad) = records.iter().find(|r| !verify_content_invariant(r)) {
                return Err(CliError::Invariant(format!("{kind} record {} changes word content", bad.source_id)));
            }
            let total: usize = records.iter().map(|r| r.n_modifications).sum();
            let avg = if records.is_empty() { 0.0 } else { total as f64 / records.len() as f64 };
            ws.write(&format!("records/{kind}.tsv"), write_records_tsv(&records).map_err(CliError::from)?)?;
            tasks.push(json!({"task": kind.as_str(), "applicable": records.len(), "avg_n_modifications": avg}));
        }
        Ok(json!({"command": "perturb", "sentences": read, "unique": lines.len(), "tasks": tasks}))
    })
}

fn split_summary(ds: &ProbingDataset) -> Value {
    let (train, dev, test) = ds.split_sizes();
    json!({"task": ds.task, "train": train, "dev": dev, "test": test})
}

pub fn build(cfg: &RunConfig) -> Result<Value, CliError> {
    let ratios = cfg.ratios()?;
    let mut h = InputHash::new("build");
    let mut inputs = Vec::new();
    for kind in cfg.kinds() {
        inputs.push((kind, h.file(&out(cfg, &format!("records/{kind}.tsv")))?));
    }
    stage(cfg, "build", h, |ws| {
        let mut tasks = Vec::new();
        for (kind, text) in &inputs {
            let records = read_records_tsv(text)?;
            let ds = build_probing_dataset(kind.as_str(), &records, ratios, cfg.split_seed)?;
            ws.write(&dataset_rel(kind.as_str()), write_dataset_tsv(&ds))?;
            let mut s = split_summary(&ds);
            s["dropped_records"] = json!(records.len() - ds.examples.len() / 2);
            tasks.push(s);
        }
        Ok(json!({"command": "build", "tasks": tasks}))
    })
}

pub fn ingest(cfg: &RunConfig) -> Result<Value, CliError> {
    let ratios = cfg.ratios()?;
    let mut h = InputHash::new("ingest");
    let mut inputs = Vec::new();
    for (name, path) in &cfg.external_datasets {
        inputs.push((name, h.file(path)?));
    }
    stage(cfg, "ingest", h, |ws| {
        let mut sets = Vec::new();
        for (name, text) in &inputs {
            let ext = parse_external_dataset(name, text)?;
            let ds = ext.to_probing(ratios, cfg.split_seed)?;
            ws.write(&dataset_rel(name), write_dataset_tsv(&ds))?;
            let mut s = split_summary(&ds);
            s["balanced"] = json!(ext.balanced);
            sets.push(s);
        }
        Ok(json!({"command": "ingest", "datasets": sets}))
    })
}

pub fn filter_content(cfg: &RunConfig) -> Result<Value, CliError> {
    let policy = cfg.policy();
    let mut h = InputHash::new("filter-content");
    let datasets = load_datasets(&mut h, cfg, &cfg.tasks, false)?;
    let mut records = Vec::new();
    for t in &cfg.tasks {
        records.push(read_records_tsv(&h.file(&out(cfg, &format!("records/{t}.tsv")))?)?);
    }
    stage(cfg, "filter-content", h, |ws| {
        let mut tasks = Vec::new();
        for (ds, recs) in datasets.iter().zip(&records) {
            let (filtered, dropped) = filter_dataset_content(ds, recs, &policy)?;
            ws.write(&content_rel(&ds.task), write_dataset_tsv(&filtered))?;
            let mut s = split_summary(&filtered);
            s["dropped_pairs"] = json!(dropped);
            tasks.push(s);
        }
        Ok(json!({"command": "filter-content", "tasks": tasks}))
    })
}

/// `id<TAB>sentence`, a bare sentence, or a bracketed parse per line.
fn read_clean_sentences(text: &str) -> Result<Vec<(String, Vec<String>)>, CliError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, body) = match line.split_once('\t') {
            Some((id, body)) => (id.trim().to_string(), body.trim()),
            None => (format!("L{}", n + 1), line),
        };
        let words: Vec<String> = if body.starts_with('(') {
            let tree = parse_bracketed(body).map_err(|e| CliError::Input(format!("clean corpus line {}: {e}", n + 1)))?;
            tree.tokens().iter().map(|t| t.surface().to_string()).collect()
        } else {
            body.split_whitespace().map(str::to_string).collect()
        };
        if !ids.insert(id.clone()) {
            return Err(CliError::Input(format!("clean corpus: duplicate id {id:?}")));
        }
        out.push((id, words));
    }
    if out.is_empty() {
        return Err(CliError::Input("clean corpus has no sentences".into()));
    }
    Ok(out)
}

pub fn embed_bow(cfg: &RunConfig) -> Result<Value, CliError> {
    let wv_path = cfg.word_vectors.as_ref().ok_or_else(|| CliError::Config("word_vectors not configured".into()))?;
    let mut h = InputHash::new("embed-bow");
    let wv_text = h.file(wv_path)?;
    let datasets = load_datasets(&mut h, cfg, &cfg.all_tasks(), false)?;
    let content = load_datasets(&mut h, cfg, &cfg.tasks, true)?;
    let clean = match &cfg.clean_corpus {
        Some(p) => Some(h.file(p)?),
        None => None,
    };
    stage(cfg, "embed-bow", h, |ws| {
        let wv = parse_word_vectors(&wv_text)?;
        let mut tables = Vec::new();
        for (ds, is_content) in datasets.iter().map(|d| (d, false)).chain(content.iter().map(|d| (d, true))) {
            let (table, flagged) = bow_embed_dataset(ds, &wv)?;
            let file = table_file(&ds.task, is_content);
            ws.write(&format!("embeddings/bow/{file}"), write_embeddings(&table))?;
            tables.push(json!({"table": file, "rows": table.len(), "no_vocabulary": flagged.len()}));
        }
        if let Some(text) = &clean {
            let mut table = EmbeddingTable::new(wv.dim());
            let mut flagged = 0;
            for (id, words) in read_clean_sentences(text)? {
                let emb = bow_embed(&words, &wv);
                flagged += usize::from(emb.is_flagged());
                table.insert(id, emb.vector)?;
            }
            ws.write("embeddings/bow/clean.tsv", write_embeddings(&table))?;
            tables.push(json!({"table": "clean.tsv", "rows": table.len(), "no_vocabulary": flagged}));
        }
        Ok(json!({"command": "embed-bow", "dim": wv.dim(), "tables": tables}))
    })
}

pub fn train(cfg: &RunConfig, seed: u64) -> Result<Value, CliError> {
    let probe_cfg = cfg.probe_config(seed)?;
    let encoders = require_encoders(cfg)?;
    let tasks = cfg.all_tasks();
    let name = format!("train-seed{seed}");
    let mut h = InputHash::new(&name);
    let datasets = load_datasets(&mut h, cfg, &tasks, false)?;
    let registry = load_registry(&mut h, cfg, &encoders, &tasks, false)?;
    stage(cfg, &name, h, |ws| {
        let ds: Vec<&ProbingDataset> = datasets.iter().collect();
        let cells = run_detection_grid(&ds, &registry, &strs(&encoders), &probe_cfg, cfg.jobs)?;
        let mut summary = Vec::new();
        for c in &cells {
            ws.write(&probe_rel("probes", &c.encoder, seed, &c.task), write_probe(&c.probe))?;
            summary.push(json!({"encoder": c.encoder, "task": c.task, "accuracy": c.accuracy, "n": c.n, "selected_lr": c.probe.selected_lr}));
        }
        append_ledger(ws, cells.iter().map(|c| c.ledger_entry(Setting::Detection)).collect())?;
        Ok(json!({"command": "train", "seed": seed, "cells": summary}))
    })
}

pub fn eval(probe: &Path, dataset: &Path, embeddings: &Path, split: &str) -> Result<Value, CliError> {
    let split: Split = split.parse().map_err(|e: String| CliError::Config(e))?;
    let mut h = InputHash::new("eval");
    let probe = load_probe(&mut h, probe)?;
    let ds = read_dataset_tsv(&h.file(dataset)?)?;
    let table = read_embeddings(&h.file(embeddings)?)?;
    if table.dim() != probe.input_dim() {
        return Err(CliError::Input(format!(
            "EncoderMismatch: probe expects {}-dimensional input, embeddings have {}",
            probe.input_dim(),
            table.dim()
        )));
    }
    let set = labeled_set(&ds, split, "embeddings", &table)?;
    let e = evaluate(&probe, &set)?;
    Ok(json!({"command": "eval", "train_task": probe.train_task, "test_task": ds.task, "split": split.as_str(), "accuracy": e.accuracy, "n": e.n}))
}

pub fn transfer(cfg: &RunConfig, seed: u64) -> Result<Value, CliError> {
    let encoders = require_encoders(cfg)?;
    let tasks = cfg.all_tasks();
    let name = format!("transfer-seed{seed}");
    let mut h = InputHash::new(&name);
    let datasets = load_datasets(&mut h, cfg, &tasks, false)?;
    let registry = load_registry(&mut h, cfg, &encoders, &tasks, false)?;
    let mut probes = Vec::new();
    for enc in &encoders {
        for t in &tasks {
            probes.push((enc, load_probe(&mut h, &out(cfg, &probe_rel("probes", enc, seed, t)))?));
        }
    }
    stage(cfg, &name, h, |ws| {
        let mut entries = Vec::new();
        let mut cells = Vec::new();
        for (enc, probe) in &probes {
            for ds in &datasets {
                let cell = transfer_eval(probe, enc, ds, registry.get(enc, &ds.task)?)?;
                cells.push(json!({"encoder": enc, "train_task": cell.train_task, "test_task": cell.test_task, "accuracy": cell.accuracy, "n": cell.n}));
                entries.push(cell.ledger_entry(probe));
            }
        }
        append_ledger(ws, entries)?;
        Ok(json!({"command": "transfer", "seed": seed, "cells": cells}))
    })
}

pub fn multitask(cfg: &RunConfig, seed: u64) -> Result<Value, CliError> {
    let probe_cfg = cfg.probe_config(seed)?;
    let encoders = require_encoders(cfg)?;
    let groups = cfg.multitask_groups();
    let tasks = cfg.all_tasks();
    let name = format!("multitask-seed{seed}");
    let mut h = InputHash::new(&name);
    let datasets = load_datasets(&mut h, cfg, &tasks, false)?;
    let registry = load_registry(&mut h, cfg, &encoders, &tasks, false)?;
    let ledger = read_ledger(&out(cfg, LEDGER))?;
    // the baselines this command reads are inputs; the rest of the ledger is not
    for enc in &encoders {
        for g in &groups {
            for s in &g.sources {
                let key = CellKey::new(enc, &[s], &g.target, Setting::Transfer, probe_cfg.kind, seed);
                let fact = ledger.lookup(&key).map(|e| format!("{} {}", e.accuracy, e.n)).unwrap_or_default();
                h.fact(&format!("{key:?}"), &fact);
            }
        }
    }
    let by_name = |t: &str| datasets.iter().find(|d| d.task == t).expect("configured task");
    stage(cfg, &name, h, |ws| {
        let mut entries = Vec::new();
        let mut results = Vec::new();
        for enc in &encoders {
            for g in &groups {
                let sources: Vec<&ProbingDataset> = g.sources.iter().map(|s| by_name(s)).collect();
                let total = match cfg.total_train {
                    Some(t) => t,
                    None => sources.iter().map(|d| d.split_sizes().0).min().unwrap_or(0),
                };
                let (r, probe) = multi_task_transfer(&sources, by_name(&g.target), enc, &registry, total, &probe_cfg, &ledger)?;
                let file = format!("{}__{}", r.train_tasks.join("+"), r.test_task);
                ws.write(&probe_rel("probes", enc, seed, &format!("multi/{file}")), write_probe(&probe))?;
                results.push(json!({
                    "encoder": enc, "sources": r.train_tasks, "target": r.test_task, "total_train": total,
                    "accuracy": r.accuracy, "n": r.n, "best_single": r.best_single, "delta_vs_best_single": r.delta_vs_best_single,
                }));
                entries.push(r.ledger_entry(&probe));
            }
        }
        append_ledger(ws, entries)?;
        Ok(json!({"command": "multitask", "seed": seed, "results": results}))
    })
}

pub fn fpscan(cfg: &RunConfig, seed: u64) -> Result<Value, CliError> {
    let encoders = require_encoders(cfg)?;
    let tasks = cfg.all_tasks();
    let corpus = corpus_label(cfg);
    let name = format!("fpscan-seed{seed}");
    let mut h = InputHash::new(&name);
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for enc in &encoders {
        let path = table_path(cfg, enc, "clean.tsv");
        if !path.exists() {
            skipped.push(enc.clone());
            continue;
        }
        let table = read_embeddings(&h.file(&path)?)?;
        let mut probes = Vec::new();
        for t in &tasks {
            probes.push(load_probe(&mut h, &out(cfg, &probe_rel("probes", enc, seed, t)))?);
        }
        jobs.push((enc, table, probes));
    }
    stage(cfg, &name, h, |ws| {
        let mut reports = Vec::new();
        let mut overlaps = Vec::new();
        for (enc, table, probes) in &jobs {
            let refs: Vec<&TrainedProbe> = probes.iter().collect();
            let (r, o) = false_positive_scan(&refs, enc, &corpus, table, cfg.include_agree_shift)?;
            reports.extend(r);
            overlaps.push(o);
        }
        ws.write(FALSE_POSITIVES, write_false_positive_tsv(&reports))?;
        ws.write(OVERLAP, write_overlap_tsv(&overlaps))?;
        let rates: Vec<Value> = reports
            .iter()
            .map(|r| json!({"encoder": r.encoder, "task": r.classifier_task, "n": r.n, "fp_rate": r.fp_rate}))
            .collect();
        let ov: Vec<Value> = overlaps
            .iter()
            .map(|o| json!({"encoder": o.encoder, "union": o.union_size, "at_least_two": o.at_least_two_fraction, "all": o.all_fraction}))
            .collect();
        Ok(json!({"command": "fpscan", "seed": seed, "corpus": corpus, "reports": rates, "overlap": ov, "skipped_encoders": skipped}))
    })
}

pub fn ablate(cfg: &RunConfig, seed: u64) -> Result<Value, CliError> {
    let probe_cfg = cfg.probe_config(seed)?;
    let all_encoders = require_encoders(cfg)?;
    let encoders: Vec<String> = all_encoders
        .iter()
        .filter(|e| cfg.tasks.iter().all(|t| table_path(cfg, e, &table_file(t, true)).exists()))
        .cloned()
        .collect();
    let skipped: Vec<&String> = all_encoders.iter().filter(|e| !encoders.contains(e)).collect();
    let name = format!("ablate-seed{seed}");
    let mut h = InputHash::new(&name);
    let datasets = load_datasets(&mut h, cfg, &cfg.tasks, true)?;
    let registry = load_registry(&mut h, cfg, &encoders, &cfg.tasks, true)?;
    let ledger = read_ledger(&out(cfg, LEDGER))?;
    for enc in &encoders {
        for t in &cfg.tasks {
            let key = CellKey::new(enc, &[t], t, Setting::Detection, probe_cfg.kind, seed);
            let fact = ledger.lookup(&key).map(|e| format!("{} {}", e.accuracy, e.n)).unwrap_or_default();
            h.fact(&format!("{key:?}"), &fact);
        }
    }
    stage(cfg, &name, h, |ws| {
        let ds: Vec<&ProbingDataset> = datasets.iter().collect();
        let (cells, rows) = content_word_ablation(&ds, &registry, &strs(&encoders), &probe_cfg, cfg.jobs, &ledger)?;
        for c in &cells {
            ws.write(&probe_rel("probes_content", &c.encoder, seed, &c.task), write_probe(&c.probe))?;
        }
        append_ledger(ws, cells.iter().map(|c| c.ledger_entry(Setting::ContentOnly)).collect())?;
        let rows: Vec<Value> = rows
            .iter()
            .map(|r| json!({"encoder": r.encoder, "task": r.task, "original": r.original, "content_only": r.ablated, "delta": r.delta}))
            .collect();
        Ok(json!({"command": "ablate", "seed": seed, "rows": rows, "skipped_encoders": skipped}))
    })
}

fn optional_file(h: &mut InputHash, path: &Path) -> Result<Option<String>, CliError> {
    if path.exists() {
        Ok(Some(h.file(path)?))
    } else {
        h.fact(&path.display().to_string(), "<absent>");
        Ok(None)
    }
}

pub fn report(cfg: &RunConfig) -> Result<Value, CliError> {
    let mut h = InputHash::new("report");
    let ledger = ResultsLedger::parse(&h.file(&out(cfg, LEDGER))?)?;
    let fps = match optional_file(&mut h, &out(cfg, FALSE_POSITIVES))? {
        Some(t) => read_false_positive_tsv(&t)?,
        None => Vec::new(),
    };
    let overlaps = match optional_file(&mut h, &out(cfg, OVERLAP))? {
        Some(t) => read_overlap_tsv(&t)?,
        None => Vec::new(),
    };
    stage(cfg, "report", h, |ws| {
        ws.write("reports/summary.md", markdown_summary(&ledger, &fps, &overlaps))?;
        ws.write("reports/figures.csv", figures_csv(&ledger, &fps, &overlaps))?;
        Ok(json!({"command": "report", "ledger_entries": ledger.len(), "cells": ledger.current().len()}))
    })
}

pub fn run_all(cfg: &RunConfig, seed: u64) -> Result<Value, CliError> {
    check_paths(cfg)?;
    if cfg.corpus.is_none() {
        return Err(CliError::Config("no corpus configured".into()));
    }
    require_encoders(cfg)?;
    let mut stages = vec![perturb(cfg)?, build(cfg)?];
    if !cfg.external_datasets.is_empty() {
        stages.push(ingest(cfg)?);
    }
    stages.push(filter_content(cfg)?);
    if cfg.word_vectors.is_some() {
        stages.push(embed_bow(cfg)?);
    }
    stages.push(train(cfg, seed)?);
    stages.push(transfer(cfg, seed)?);
    stages.push(multitask(cfg, seed)?);
    stages.push(fpscan(cfg, seed)?);
    stages.push(ablate(cfg, seed)?);
    stages.push(report(cfg)?);
    Ok(json!({"command": "run", "seed": seed, "stages": stages}))
}
