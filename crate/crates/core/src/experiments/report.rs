//! Report files: false-positive and overlap tables, markdown summary and
//! plot-ready CSV. All output is ordered deterministically.

use std::fmt::Write as _;

use super::ledger::{LedgerError, ResultsLedger, Setting};
use super::{ablation_rows, delta_vs_best_single, FalsePositiveReport, OverlapReport};

pub const FP_HEADER: &str = "encoder\tclassifier_task\tcorpus\tn\tn_flagged\tfp_rate\tflagged_ids";
pub const OVERLAP_HEADER: &str = "encoder\tcorpus\tclassifiers\tunion_size\tat_least_two_fraction\tall_fraction";
pub const FIGURES_HEADER: &str = "figure,encoder,probe_kind,seed,train_tasks,test_task,value,n";

pub fn write_false_positive_tsv(reports: &[FalsePositiveReport]) -> String {
    let mut out = format!("{FP_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.encoder,
            r.classifier_task,
            r.corpus,
            r.n,
            r.flagged_ids.len(),
            r.fp_rate,
            r.flagged_ids.join(" ")
        );
    }
    out
}

fn rows<'a>(text: &'a str, header: &str, width: usize) -> Result<Vec<(usize, Vec<&'a str>)>, LedgerError> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(LedgerError::BadHeader);
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != width {
            return Err(LedgerError::Malformed { line: i + 2, reason: format!("expected {width} columns") });
        }
        out.push((i + 2, cols));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(line: usize, v: &str) -> Result<T, LedgerError> {
    v.parse().map_err(|_| LedgerError::Malformed { line, reason: format!("bad number {v:?}") })
}

pub fn read_false_positive_tsv(text: &str) -> Result<Vec<FalsePositiveReport>, LedgerError> {
    rows(text, FP_HEADER, 7)?
        .into_iter()
        .map(|(line, c)| {
            let flagged_ids: Vec<String> = c[6].split(' ').filter(|s| !s.is_empty()).map(str::to_string).collect();
            let n_flagged: usize = num(line, c[4])?;
            if n_flagged != flagged_ids.len() {
                return Err(LedgerError::Malformed { line, reason: "flag count does not match id list".into() });
            }
            Ok(FalsePositiveReport {
                encoder: c[0].to_string(),
                classifier_task: c[1].to_string(),
                corpus: c[2].to_string(),
                n: num(line, c[3])?,
                fp_rate: num(line, c[5])?,
                flagged_ids,
            })
        })
        .collect()
}

pub fn write_overlap_tsv(reports: &[OverlapReport]) -> String {
    let mut out = format!("{OVERLAP_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.encoder,
            r.corpus,
            r.classifiers.join("+"),
            r.union_size,
            r.at_least_two_fraction,
            r.all_fraction
        );
    }
    out
}

pub fn read_overlap_tsv(text: &str) -> Result<Vec<OverlapReport>, LedgerError> {
    rows(text, OVERLAP_HEADER, 6)?
        .into_iter()
        .map(|(line, c)| {
            Ok(OverlapReport {
                encoder: c[0].to_string(),
                corpus: c[1].to_string(),
                classifiers: c[2].split('+').filter(|s| !s.is_empty()).map(str::to_string).collect(),
                union_size: num(line, c[3])?,
                at_least_two_fraction: num(line, c[4])?,
                all_fraction: num(line, c[5])?,
            })
        })
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.3}", 100.0 * x)
}

/// Half-width of the normal-approximation 95% interval, in points.
fn ci95(p: f64, n: usize) -> String {
    if n == 0 {
        return "n/a".into();
    }
    format!("{:.2}", 196.0 * (p * (1.0 - p) / n as f64).sqrt())
}

fn signed_pct(x: f64) -> String {
    format!("{:+.3}", 100.0 * x)
}

pub fn markdown_summary(ledger: &ResultsLedger, fps: &[FalsePositiveReport], overlaps: &[OverlapReport]) -> String {
    let current = ledger.current();
    let mut out = String::from("# Results\n\nAccuracies in percent; `±` is the 95% normal-approximation interval.\n");

    let mut section = |title: &str, header: &[&str], body: Vec<Vec<String>>| {
        let _ = write!(out, "\n## {title}\n\n");
        if body.is_empty() {
            out.push_str("_no entries_\n");
            return;
        }
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for row in body {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
    };

    let cell_rows = |setting: Setting| -> Vec<Vec<String>> {
        current
            .iter()
            .filter(|e| e.setting == setting)
            .map(|e| {
                vec![
                    e.encoder.clone(),
                    e.probe_kind.to_string(),
                    e.seed.to_string(),
                    e.train_tasks.join("+"),
                    e.test_task.clone(),
                    pct(e.accuracy),
                    ci95(e.accuracy, e.n),
                    e.n.to_string(),
                ]
            })
            .collect()
    };
    let cell_header = ["encoder", "probe", "seed", "train", "test", "accuracy", "±", "n"];
    section("Detection", &cell_header, cell_rows(Setting::Detection));
    section("Transfer", &cell_header, cell_rows(Setting::Transfer));

    let multi: Vec<Vec<String>> = current
        .iter()
        .filter(|e| e.setting == Setting::MultiTask)
        .map(|e| {
            let sources: Vec<&str> = e.train_tasks.iter().map(String::as_str).collect();
            let d = delta_vs_best_single(ledger, &e.encoder, &sources, &e.test_task, e.probe_kind, e.seed, e.accuracy);
            let (best, delta) = match d {
                Ok((b, d)) => (pct(b), signed_pct(d)),
                Err(_) => ("n/a".into(), "n/a".into()),
            };
            vec![
                e.encoder.clone(),
                e.probe_kind.to_string(),
                e.seed.to_string(),
                e.train_tasks.join("+"),
                e.test_task.clone(),
                pct(e.accuracy),
                best,
                delta,
                e.n.to_string(),
            ]
        })
        .collect();
    section(
        "Multi-task transfer",
        &["encoder", "probe", "seed", "sources", "target", "accuracy", "best single", "Δ", "n"],
        multi,
    );

    let ablation: Vec<Vec<String>> = ablation_rows(ledger)
        .into_iter()
        .map(|r| {
            vec![
                r.encoder,
                r.task,
                pct(r.original),
                pct(r.ablated),
                signed_pct(r.delta),
                r.n_ablated.to_string(),
            ]
        })
        .collect();
    section("Content words only", &["encoder", "task", "original", "content only", "Δ", "n"], ablation);

    let fp: Vec<Vec<String>> = fps
        .iter()
        .map(|r| {
            vec![
                r.encoder.clone(),
                r.classifier_task.clone(),
                r.corpus.clone(),
                r.n.to_string(),
                r.flagged_ids.len().to_string(),
                pct(r.fp_rate),
            ]
        })
        .collect();
    section("False positives on clean text", &["encoder", "classifier", "corpus", "n", "flagged", "rate"], fp);

    let ov: Vec<Vec<String>> = overlaps
        .iter()
        .map(|r| {
            vec![
                r.encoder.clone(),
                r.corpus.clone(),
                r.classifiers.join(", "),
                r.union_size.to_string(),
                pct(r.at_least_two_fraction),
                pct(r.all_fraction),
            ]
        })
        .collect();
    section("Flag overlap", &["encoder", "corpus", "classifiers", "union", "≥2", "all"], ov);
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per bar: detection and transfer accuracies, multi-task and
/// content-only deltas, false-positive rates and overlap fractions.
pub fn figures_csv(ledger: &ResultsLedger, fps: &[FalsePositiveReport], overlaps: &[OverlapReport]) -> String {
    let mut out = format!("{FIGURES_HEADER}\n");
    let mut row = |fig: &str, enc: &str, kind: &str, seed: &str, train: &str, test: &str, value: f64, n: usize| {
        let fields = [fig, enc, kind, seed, train, test].map(csv_field);
        let _ = writeln!(out, "{},{value},{n}", fields.join(","));
    };
    let current = ledger.current();
    for (setting, fig) in [(Setting::Detection, "detection"), (Setting::Transfer, "transfer")] {
        for e in current.iter().filter(|e| e.setting == setting) {
            let (k, s) = (e.probe_kind.to_string(), e.seed.to_string());
            row(fig, &e.encoder, &k, &s, &e.train_tasks.join("+"), &e.test_task, e.accuracy, e.n);
        }
    }
    for e in current.iter().filter(|e| e.setting == Setting::MultiTask) {
        let sources: Vec<&str> = e.train_tasks.iter().map(String::as_str).collect();
        if let Ok((_, d)) = delta_vs_best_single(ledger, &e.encoder, &sources, &e.test_task, e.probe_kind, e.seed, e.accuracy) {
            let (k, s) = (e.probe_kind.to_string(), e.seed.to_string());
            row("multitask_delta", &e.encoder, &k, &s, &e.train_tasks.join("+"), &e.test_task, d, e.n);
        }
    }
    for r in ablation_rows(ledger) {
        let (k, s) = (r.probe_kind.to_string(), r.seed.to_string());
        row("content_delta", &r.encoder, &k, &s, &r.task, &r.task, r.delta, r.n_ablated);
    }
    for r in fps {
        row("false_positive", &r.encoder, "", "", &r.classifier_task, &r.corpus, r.fp_rate, r.n);
    }
    for r in overlaps {
        let who = r.classifiers.join("+");
        row("overlap_at_least_two", &r.encoder, "", "", &who, &r.corpus, r.at_least_two_fraction, r.union_size);
        row("overlap_all", &r.encoder, "", "", &who, &r.corpus, r.all_fraction, r.union_size);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::LedgerEntry;
    use crate::probe::ProbeKind;

    fn fp(task: &str, ids: &[&str]) -> FalsePositiveReport {
        FalsePositiveReport {
            encoder: "bow".into(),
            classifier_task: task.into(),
            corpus: "clean".into(),
            n: 10,
            fp_rate: ids.len() as f64 / 10.0,
            flagged_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn fp_and_overlap_round_trip() {
        let reports = vec![fp("MOD_NOUN", &["a", "b"]), fp("VERB_OB", &[])];
        assert_eq!(read_false_positive_tsv(&write_false_positive_tsv(&reports)).unwrap(), reports);
        let ov = vec![OverlapReport {
            encoder: "bow".into(),
            corpus: "clean".into(),
            classifiers: vec!["MOD_NOUN".into(), "VERB_OB".into()],
            union_size: 2,
            at_least_two_fraction: 0.0,
            all_fraction: 0.0,
        }];
        assert_eq!(read_overlap_tsv(&write_overlap_tsv(&ov)).unwrap(), ov);
    }

    #[test]
    fn summary_lists_every_section() {
        let mut l = ResultsLedger::new();
        let e = LedgerEntry {
            encoder: "bow".into(),
            train_tasks: vec!["A".into()],
            test_task: "A".into(),
            setting: Setting::Detection,
            probe_kind: ProbeKind::Lr,
            seed: 0,
            accuracy: 0.5,
            n: 100,
            selected_lr: 0.01,
        };
        l.push(e.clone());
        l.push(LedgerEntry { setting: Setting::ContentOnly, accuracy: 0.4, ..e });
        let md = markdown_summary(&l, &[fp("A", &["x"])], &[]);
        for title in ["Detection", "Transfer", "Multi-task", "Content words only", "False positives", "Flag overlap"] {
            assert!(md.contains(title), "{title}");
        }
        assert!(md.contains("| bow | A | 50.000 | 40.000 | -10.000 | 100 |"));
        let csv = figures_csv(&l, &[], &[]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("content_delta,bow,LR,0,A,A,"));
    }
}
