//! Tab-separated storage for perturbation records.

use thiserror::Error;

use super::{PerturbationKind, PerturbationRecord};

pub const RECORDS_HEADER: &str = "source_id\tkind\tn_modifications\toriginal\tperturbed\toriginal_pos\tperturbed_pos";

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("bad header: expected {RECORDS_HEADER:?}")]
    BadHeader,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("record {0:?} contains a tab or newline")]
    Unencodable(String),
}

pub fn write_records_tsv(records: &[PerturbationRecord]) -> Result<String, RecordsError> {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let fields = [&r.source_id, &r.original, &r.perturbed];
        if fields.iter().any(|f| f.contains(['\t', '\n'])) {
            return Err(RecordsError::Unencodable(r.source_id.clone()));
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.source_id,
            r.kind,
            r.n_modifications,
            r.original,
            r.perturbed,
            r.original_pos.join(" "),
            r.perturbed_pos.join(" ")
        ));
    }
    Ok(out)
}

pub fn read_records_tsv(text: &str) -> Result<Vec<PerturbationRecord>, RecordsError> {
    let mut lines = text.lines();
    if lines.next() != Some(RECORDS_HEADER) {
        return Err(RecordsError::BadHeader);
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| RecordsError::Malformed { line: line_no, reason: reason.to_string() };
        let cols: Vec<&str> = line.split('\t').collect();
        let [source_id, kind, n, original, perturbed, opos, ppos] = cols.as_slice() else {
            return Err(bad("expected 7 columns"));
        };
        let kind: PerturbationKind = kind.parse().map_err(|_| bad("unknown kind"))?;
        let n_modifications: usize = n.parse().map_err(|_| bad("bad n_modifications"))?;
        let tags = |s: &str| -> Vec<String> { s.split(' ').map(str::to_string).collect() };
        let record = PerturbationRecord {
            source_id: source_id.to_string(),
            kind,
            n_modifications,
            original: original.to_string(),
            perturbed: perturbed.to_string(),
            original_pos: tags(opos),
            perturbed_pos: tags(ppos),
        };
        if record.original_pos.len() != record.original.split(' ').count()
            || record.perturbed_pos.len() != record.perturbed.split(' ').count()
        {
            return Err(bad("tag count does not match token count"));
        }
        out.push(record);
    }
    Ok(out)
}
