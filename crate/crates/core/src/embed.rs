//! Sentence-embedding tables, bag-of-words baseline embeddings, and the
//! content-word filter.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::dataset::{LabeledExample, ProbingDataset};
use crate::perturb::PerturbationRecord;
use crate::treebank::Token;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: bad number {value:?}")]
    BadNumber { line: usize, value: String },
    #[error("non-finite value for {0:?}")]
    NonFinite(String),
    #[error("id {0:?} is not encodable (empty or contains whitespace)")]
    BadId(String),
    #[error("no tokens left after content-word filtering")]
    EmptyResult,
    #[error("pair {0:?} has no matching perturbation record")]
    MissingRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-dimension vectors keyed by example id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable { dim, ids: Vec::new(), vectors: Vec::new(), index: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<(), EmbedError> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(EmbedError::BadId(id));
        }
        if vector.len() != self.dim {
            return Err(EmbedError::DimensionMismatch { line: self.len() + 2, expected: self.dim, found: vector.len() });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(id));
        }
        if self.index.contains_key(&id) {
            return Err(EmbedError::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.vectors.iter().map(Vec::as_slice))
    }
}

/// `#dim=<d>` header, then `id<TAB>f1<TAB>...<TAB>fd` rows. Floats use the
/// shortest decimal that round-trips through `f32`.
pub fn write_embeddings(table: &EmbeddingTable) -> String {
    let mut out = String::with_capacity(table.len() * table.dim * 10 + 16);
    let _ = writeln!(out, "#dim={}", table.dim);
    for (id, v) in table.iter() {
        out.push_str(id);
        for x in v {
            let _ = write!(out, "\t{x}");
        }
        out.push('\n');
    }
    out
}

pub fn read_embeddings(text: &str) -> Result<EmbeddingTable, EmbedError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| EmbedError::MalformedHeader("empty file".into()))?;
    let dim: usize = header
        .strip_prefix("#dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| EmbedError::MalformedHeader(header.to_string()))?;
    let mut table = EmbeddingTable::new(dim);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let id = cols.next().unwrap_or_default();
        let values: Vec<&str> = cols.collect();
        if values.len() != dim {
            return Err(EmbedError::DimensionMismatch { line: line_no, expected: dim, found: values.len() });
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f32>().map_err(|_| EmbedError::BadNumber { line: line_no, value: v.to_string() }))
            .collect::<Result<Vec<f32>, _>>()?;
        table.insert(id, vector)?;
    }
    Ok(table)
}

pub fn store_embeddings(table: &EmbeddingTable, path: &Path) -> Result<(), EmbedError> {
    std::fs::write(path, write_embeddings(table))?;
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbedError> {
    read_embeddings(&std::fs::read_to_string(path)?)
}

/// Pretrained word vectors. When every word in the file is lowercase,
/// lookups lowercase their query.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dim: usize,
    entries: HashMap<String, Vec<f32>>,
    lowercase: bool,
}

impl WordVectorTable {
    pub fn from_entries(dim: usize, entries: HashMap<String, Vec<f32>>) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::MalformedHeader("dimension 0".into()));
        }
        if let Some((w, v)) = entries.iter().find(|(_, v)| v.len() != dim) {
            let _ = w;
            return Err(EmbedError::DimensionMismatch { line: 0, expected: dim, found: v.len() });
        }
        let lowercase = entries.keys().all(|w| w.to_lowercase() == *w);
        Ok(WordVectorTable { dim, entries, lowercase })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_lowercase(&self) -> bool {
        self.lowercase
    }

    /// Returns the matched key alongside its vector.
    pub fn lookup(&self, word: &str) -> Option<(&str, &[f32])> {
        let hit = if self.lowercase {
            self.entries.get_key_value(word.to_lowercase().as_str())
        } else {
            self.entries.get_key_value(word)
        };
        hit.map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Parses `word f1 ... fd` lines. A leading `<count> <dim>` line is skipped.
/// The first occurrence of a repeated word wins.
pub fn parse_word_vectors(text: &str) -> Result<WordVectorTable, EmbedError> {
    let mut dim = None;
    let mut entries = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if i == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        let d = *dim.get_or_insert(rest.len());
        if rest.len() != d || d == 0 {
            return Err(EmbedError::DimensionMismatch { line: line_no, expected: d, found: rest.len() });
        }
        let v = rest
            .iter()
            .map(|x| x.parse::<f32>().map_err(|_| EmbedError::BadNumber { line: line_no, value: x.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite(word.to_string()));
        }
        entries.entry(word.to_string()).or_insert(v);
    }
    let dim = dim.ok_or_else(|| EmbedError::MalformedHeader("no word vectors".into()))?;
    WordVectorTable::from_entries(dim, entries)
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectorTable, EmbedError> {
    parse_word_vectors(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowEmbedding {
    pub vector: Vec<f32>,
    pub in_vocab: usize,
}

impl BowEmbedding {
    /// No token was in the vocabulary; the vector is all zeros.
    pub fn is_flagged(&self) -> bool {
        self.in_vocab == 0
    }
}

/// Mean of the in-vocabulary word vectors. Vectors are summed in a canonical
/// (sorted-key) order, so any permutation of `tokens` gives a bit-identical
/// result.
pub fn bow_embed<S: AsRef<str>>(tokens: &[S], wv: &WordVectorTable) -> BowEmbedding {
    let mut hits: Vec<(&str, &[f32])> = tokens.iter().filter_map(|t| wv.lookup(t.as_ref())).collect();
    hits.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let mut sum = vec![0f64; wv.dim()];
    for (_, v) in &hits {
        for (s, x) in sum.iter_mut().zip(v.iter()) {
            *s += f64::from(*x);
        }
    }
    let n = hits.len();
    let vector = if n == 0 {
        vec![0.0; wv.dim()]
    } else {
        sum.iter().map(|s| (s / n as f64) as f32).collect()
    };
    BowEmbedding { vector, in_vocab: n }
}

/// BoW embeddings for every example of a dataset (tokens are the
/// whitespace-separated words of each text). Returns the table and the ids
/// of examples that had no in-vocabulary token.
pub fn bow_embed_dataset(ds: &ProbingDataset, wv: &WordVectorTable) -> Result<(EmbeddingTable, Vec<String>), EmbedError> {
    let mut table = EmbeddingTable::new(wv.dim());
    let mut flagged = Vec::new();
    for e in &ds.examples {
        let tokens: Vec<&str> = e.text.split_whitespace().collect();
        let emb = bow_embed(&tokens, wv);
        if emb.is_flagged() {
            flagged.push(e.example_id.clone());
        }
        table.insert(e.example_id.clone(), emb.vector)?;
    }
    Ok((table, flagged))
}

const AUXILIARY_FORMS: &[&str] = &[
    "be", "is", "are", "am", "was", "were", "been", "being", "'s", "'re", "'m", "have", "has", "had", "having",
    "'ve", "'d", "do", "does", "did", "doing", "done", "isn't", "aren't", "wasn't", "weren't", "hasn't",
    "haven't", "hadn't", "doesn't", "don't", "didn't",
];

/// Which tokens count as content words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentWordPolicy {
    pub keep_pos_prefixes: Vec<String>,
    /// Drop forms of be/have/do even when tagged VB*.
    pub drop_auxiliaries: bool,
}

impl Default for ContentWordPolicy {
    fn default() -> Self {
        ContentWordPolicy {
            keep_pos_prefixes: ["NN", "VB", "JJ", "RB", "CD"].iter().map(|s| s.to_string()).collect(),
            drop_auxiliaries: true,
        }
    }
}

impl ContentWordPolicy {
    pub fn keeps(&self, token: &Token) -> bool {
        let pos_ok = self.keep_pos_prefixes.iter().any(|p| token.pos().starts_with(p.as_str()));
        pos_ok && !(self.drop_auxiliaries && AUXILIARY_FORMS.contains(&token.surface().to_lowercase().as_str()))
    }
}

/// The content-word subsequence of `tokens`, order preserved.
pub fn filter_content_words(tokens: &[Token], policy: &ContentWordPolicy) -> Result<Vec<Token>, EmbedError> {
    let kept: Vec<Token> = tokens.iter().filter(|t| policy.keeps(t)).cloned().collect();
    if kept.is_empty() {
        Err(EmbedError::EmptyResult)
    } else {
        Ok(kept)
    }
}

fn joined(tokens: &[Token]) -> String {
    tokens.iter().map(Token::surface).collect::<Vec<_>>().join(" ")
}

/// Content-word-only version of a generated dataset. Tags come from the
/// records the dataset was built from (matched on `pair_id`). Pairs where
/// either side filters to nothing are dropped whole, keeping the balance.
/// Returns the filtered dataset and the number of dropped pairs.
pub fn filter_dataset_content(
    ds: &ProbingDataset,
    records: &[PerturbationRecord],
    policy: &ContentWordPolicy,
) -> Result<(ProbingDataset, usize), EmbedError> {
    let by_pair: HashMap<&str, &PerturbationRecord> = records.iter().map(|r| (r.source_id.as_str(), r)).collect();
    let mut filtered: HashMap<&str, Option<(String, String)>> = HashMap::new();
    for e in &ds.examples {
        if filtered.contains_key(e.pair_id.as_str()) {
            continue;
        }
        let r = by_pair.get(e.pair_id.as_str()).ok_or_else(|| EmbedError::MissingRecord(e.pair_id.clone()))?;
        let f = |toks: Vec<Token>| filter_content_words(&toks, policy).ok().map(|t| joined(&t));
        let both = match (f(r.original_tokens()), f(r.perturbed_tokens())) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };
        filtered.insert(e.pair_id.as_str(), both);
    }
    let dropped: HashSet<&str> = filtered.iter().filter(|(_, v)| v.is_none()).map(|(k, _)| *k).collect();
    let examples: Vec<LabeledExample> = ds
        .examples
        .iter()
        .filter_map(|e| {
            let (normal, perturbed) = filtered[e.pair_id.as_str()].as_ref()?;
            let text = match e.label {
                crate::dataset::Label::Normal => normal.clone(),
                crate::dataset::Label::Perturbed => perturbed.clone(),
            };
            Some(LabeledExample { text, ..e.clone() })
        })
        .collect();
    Ok((ProbingDataset { task: ds.task.clone(), examples }, dropped.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wv(entries: &[(&str, &[f32])]) -> WordVectorTable {
        let dim = entries[0].1.len();
        WordVectorTable::from_entries(dim, entries.iter().map(|(w, v)| (w.to_string(), v.to_vec())).collect()).unwrap()
    }

    #[test]
    fn bow_single_word_and_mean() {
        let t = wv(&[("a", &[1.0, 3.0]), ("b", &[3.0, 5.0])]);
        assert_eq!(bow_embed(&["a"], &t).vector, vec![1.0, 3.0]);
        assert_eq!(bow_embed(&["a", "b"], &t).vector, vec![2.0, 4.0]);
        let oov = bow_embed(&["zzz"], &t);
        assert!(oov.is_flagged());
        assert_eq!(oov.vector, vec![0.0, 0.0]);
        assert_eq!(bow_embed(&["a", "zzz"], &t).vector, vec![1.0, 3.0]);
    }

    #[test]
    fn bow_lowercases_for_lowercase_tables() {
        let t = wv(&[("man", &[1.0]), ("a", &[0.5])]);
        assert!(t.is_lowercase());
        assert_eq!(bow_embed(&["A", "Man"], &t).vector, vec![0.75]);
        let t = wv(&[("Man", &[1.0])]);
        assert!(bow_embed(&["man"], &t).is_flagged());
    }

    fn tagged(s: &str) -> Vec<Token> {
        s.split(' ')
            .enumerate()
            .map(|(i, wp)| {
                let (w, p) = wp.rsplit_once('/').unwrap();
                Token::new(w, p, i)
            })
            .collect()
    }

    #[test]
    fn content_filter_on_running_sentence() {
        let toks = tagged("A/DT man/NN wearing/VBG a/DT yellow/JJ scarf/NN rides/VBZ a/DT bike/NN ./.");
        let kept = filter_content_words(&toks, &ContentWordPolicy::default()).unwrap();
        assert_eq!(joined(&kept), "man wearing yellow scarf rides bike");
        let all_dt = tagged("the/DT a/DT an/DT");
        assert!(matches!(filter_content_words(&all_dt, &ContentWordPolicy::default()), Err(EmbedError::EmptyResult)));
        let content = tagged("dogs/NNS bark/VBP loudly/RB");
        assert_eq!(filter_content_words(&content, &ContentWordPolicy::default()).unwrap(), content);
    }

    #[test]
    fn auxiliaries_dropped_unless_disabled() {
        let toks = tagged("he/PRP has/VBZ eaten/VBN");
        let p = ContentWordPolicy::default();
        assert_eq!(joined(&filter_content_words(&toks, &p).unwrap()), "eaten");
        let p = ContentWordPolicy { drop_auxiliaries: false, ..p };
        assert_eq!(joined(&filter_content_words(&toks, &p).unwrap()), "has eaten");
    }

    #[test]
    fn embedding_file_errors() {
        assert!(matches!(read_embeddings("dim=4\n"), Err(EmbedError::MalformedHeader(_))));
        assert!(matches!(read_embeddings("#dim=0\n"), Err(EmbedError::MalformedHeader(_))));
        assert!(matches!(
            read_embeddings("#dim=4\na\t1\t2\t3\n"),
            Err(EmbedError::DimensionMismatch { line: 2, expected: 4, found: 3 })
        ));
        assert!(matches!(read_embeddings("#dim=1\na\t1\na\t2\n"), Err(EmbedError::DuplicateId(_))));
        assert!(matches!(read_embeddings("#dim=1\na\tx\n"), Err(EmbedError::BadNumber { .. })));
        assert!(matches!(read_embeddings("#dim=1\na\tNaN\n"), Err(EmbedError::NonFinite(_))));
    }

    #[test]
    fn embedding_text_layout() {
        let mut t = EmbeddingTable::new(2);
        t.insert("s1#n", vec![0.1, -2.5]).unwrap();
        t.insert("s1#p", vec![1e-8, 3.0]).unwrap();
        assert_eq!(write_embeddings(&t), "#dim=2\ns1#n\t0.1\t-2.5\ns1#p\t0.00000001\t3\n");
        assert_eq!(read_embeddings(&write_embeddings(&t)).unwrap(), t);
    }

    #[test]
    fn word_vector_file_formats() {
        let t = parse_word_vectors("2 3\nthe 0.1 0.2 0.3\ncat 1 2 3\n").unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        let t = parse_word_vectors("the 0.1 0.2\nthe 9 9\ncat 1 2\n").unwrap();
        assert_eq!(t.lookup("the").unwrap().1, &[0.1, 0.2]);
        assert!(matches!(parse_word_vectors("a 1 2\nb 1\n"), Err(EmbedError::DimensionMismatch { line: 2, .. })));
    }
}
