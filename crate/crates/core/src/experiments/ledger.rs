//! Append-only results ledger. Every accuracy that feeds a derived number
//! (transfer deltas, ablation deltas) is read back from here.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::probe::ProbeKind;

pub const LEDGER_HEADER: &str = "encoder\ttrain_tasks\ttest_task\tsetting\tprobe_kind\tseed\taccuracy\tn\tselected_lr";

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("bad ledger header")]
    BadHeader,
    #[error("ledger line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    Detection,
    Transfer,
    MultiTask,
    ContentOnly,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Detection => "detection",
            Setting::Transfer => "transfer",
            Setting::MultiTask => "multitask",
            Setting::ContentOnly => "content_only",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "detection" => Ok(Setting::Detection),
            "transfer" => Ok(Setting::Transfer),
            "multitask" => Ok(Setting::MultiTask),
            "content_only" => Ok(Setting::ContentOnly),
            _ => Err(format!("unknown setting {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub encoder: String,
    /// Sorted source task names; one element except in the multi-task setting.
    pub train_tasks: Vec<String>,
    pub test_task: String,
    pub setting: Setting,
    pub probe_kind: ProbeKind,
    pub seed: u64,
    pub accuracy: f64,
    pub n: usize,
    pub selected_lr: f64,
}

/// Identity of a ledger cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub encoder: String,
    pub train_tasks: String,
    pub test_task: String,
    pub setting: Setting,
    pub probe_kind: ProbeKind,
    pub seed: u64,
}

impl CellKey {
    pub fn new(
        encoder: &str,
        train_tasks: &[&str],
        test_task: &str,
        setting: Setting,
        probe_kind: ProbeKind,
        seed: u64,
    ) -> Self {
        let mut t: Vec<&str> = train_tasks.to_vec();
        t.sort_unstable();
        CellKey {
            encoder: encoder.to_string(),
            train_tasks: t.join("+"),
            test_task: test_task.to_string(),
            setting,
            probe_kind,
            seed,
        }
    }
}

impl LedgerEntry {
    pub fn key(&self) -> CellKey {
        let t: Vec<&str> = self.train_tasks.iter().map(String::as_str).collect();
        CellKey::new(&self.encoder, &t, &self.test_task, self.setting, self.probe_kind, self.seed)
    }

    pub fn is_transfer(&self) -> bool {
        self.train_tasks.len() != 1 || self.train_tasks[0] != self.test_task
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsLedger {
    entries: Vec<LedgerEntry>,
}

impl ResultsLedger {
    pub fn new() -> Self {
        ResultsLedger::default()
    }

    pub fn push(&mut self, mut entry: LedgerEntry) {
        entry.train_tasks.sort_unstable();
        self.entries.push(entry);
    }

    /// Every entry ever appended, oldest first.
    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The most recent entry for `key`.
    pub fn lookup(&self, key: &CellKey) -> Option<&LedgerEntry> {
        self.entries.iter().rev().find(|e| &e.key() == key)
    }

    /// One entry per key (the most recent), ordered by key.
    pub fn current(&self) -> Vec<&LedgerEntry> {
        let mut latest: HashMap<CellKey, &LedgerEntry> = HashMap::new();
        for e in &self.entries {
            latest.insert(e.key(), e);
        }
        let mut out: Vec<(CellKey, &LedgerEntry)> = latest.into_iter().collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out.into_iter().map(|(_, e)| e).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(LEDGER_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format_entry(e));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, LedgerError> {
        let mut lines = text.lines();
        if lines.next() != Some(LEDGER_HEADER) {
            return Err(LedgerError::BadHeader);
        }
        let mut ledger = ResultsLedger::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            ledger.push(parse_entry(line).map_err(|reason| LedgerError::Malformed { line: i + 2, reason })?);
        }
        Ok(ledger)
    }
}

fn format_entry(e: &LedgerEntry) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        e.encoder,
        e.train_tasks.join("+"),
        e.test_task,
        e.setting,
        e.probe_kind,
        e.seed,
        e.accuracy,
        e.n,
        e.selected_lr
    )
}

fn parse_entry(line: &str) -> Result<LedgerEntry, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    let [encoder, train, test, setting, kind, seed, acc, n, lr] = cols.as_slice() else {
        return Err(format!("expected 9 columns, found {}", cols.len()));
    };
    let num = |what: &str, v: &str| format!("bad {what} {v:?}");
    let accuracy: f64 = acc.parse().map_err(|_| num("accuracy", acc))?;
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(format!("accuracy {accuracy} outside [0, 1]"));
    }
    Ok(LedgerEntry {
        encoder: encoder.to_string(),
        train_tasks: train.split('+').map(str::to_string).collect(),
        test_task: test.to_string(),
        setting: setting.parse()?,
        probe_kind: kind.parse().map_err(|_| num("probe kind", kind))?,
        seed: seed.parse().map_err(|_| num("seed", seed))?,
        accuracy,
        n: n.parse().map_err(|_| num("n", n))?,
        selected_lr: lr.parse().map_err(|_| num("selected_lr", lr))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(test: &str, acc: f64) -> LedgerEntry {
        LedgerEntry {
            encoder: "bow".into(),
            train_tasks: vec!["VERB_OB".into()],
            test_task: test.into(),
            setting: Setting::Transfer,
            probe_kind: ProbeKind::Mlp,
            seed: 1,
            accuracy: acc,
            n: 10,
            selected_lr: 0.001,
        }
    }

    #[test]
    fn last_entry_wins() {
        let mut l = ResultsLedger::new();
        l.push(entry("MOD_NOUN", 0.6));
        l.push(entry("SUBN_OBN", 0.7));
        l.push(entry("MOD_NOUN", 0.8));
        let key = CellKey::new("bow", &["VERB_OB"], "MOD_NOUN", Setting::Transfer, ProbeKind::Mlp, 1);
        assert_eq!(l.lookup(&key).unwrap().accuracy, 0.8);
        assert_eq!(l.current().len(), 2);
        assert_eq!(l.len(), 3);
    }

    #[test]
    fn tsv_round_trip_keeps_history() {
        let mut l = ResultsLedger::new();
        l.push(entry("MOD_NOUN", 0.1 + 0.2));
        l.push(LedgerEntry { train_tasks: vec!["B".into(), "A".into()], setting: Setting::MultiTask, ..entry("C", 0.5) });
        let back = ResultsLedger::parse(&l.to_tsv()).unwrap();
        assert_eq!(back, l);
        assert_eq!(back.entries()[1].train_tasks, vec!["A", "B"]);
    }

    #[test]
    fn rejects_out_of_range_accuracy() {
        let text = format!("{LEDGER_HEADER}\nbow\tA\tA\tdetection\tLR\t0\t1.5\t3\t0.01\n");
        assert!(matches!(ResultsLedger::parse(&text), Err(LedgerError::Malformed { line: 2, .. })));
    }
}
