//! Corpora, vocabulary, encoding and the synthetic polysemy task.

mod synth;

pub use synth::{synth_polysemy, BayesReport, SynthTask, SynthTaskSpec};

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::TokenBatch;
use crate::error::{AdeError, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub records: Vec<Record>,
    /// original label strings, indexed by the 0-based label id
    pub label_names: Vec<String>,
    pub split: Split,
}

impl Corpus {
    pub fn new(records: Vec<Record>, label_names: Vec<String>, split: Split) -> Result<Self> {
        let c = label_names.len();
        for (i, r) in records.iter().enumerate() {
            if r.label >= c {
                return Err(AdeError::data(format!("record {i}: label {} outside [0, {c})", r.label)));
            }
            if r.text.trim().is_empty() {
                return Err(AdeError::data(format!("record {i}: empty text")));
            }
        }
        Ok(Self { records, label_names, split })
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        self.records.iter().for_each(|r| counts[r.label] += 1);
        counts
    }
}

/// Column layout of a labelled CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: usize,
    /// joined with a single space
    pub text_columns: Vec<usize>,
    pub has_header: bool,
}

impl CsvSchema {
    /// `label, title, description`, no header.
    pub fn ag_news() -> Self {
        Self { label_column: 0, text_columns: vec![1, 2], has_header: false }
    }

    /// `label, title, content`, no header.
    pub fn dbpedia() -> Self {
        Self { label_column: 0, text_columns: vec![1, 2], has_header: false }
    }

    /// `label, text` with a header row.
    pub fn labelled_text() -> Self {
        Self { label_column: 0, text_columns: vec![1], has_header: true }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "labelled_text" | "synth" => Ok(Self::labelled_text()),
            "ag_news" | "agnews" => Ok(Self::ag_news()),
            "dbpedia" | "dbpedia14" => Ok(Self::dbpedia()),
            other => Err(AdeError::config(format!("unknown CSV preset {other:?}"))),
        }
    }
}

/// Sorted label set; numeric labels sort numerically.
fn label_order(raw: impl Iterator<Item = String>) -> Vec<String> {
    let mut set: Vec<String> = raw.collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if set.iter().all(|s| s.parse::<i64>().is_ok()) {
        set.sort_by_key(|s| s.parse::<i64>().expect("checked"));
    }
    set
}

/// Reads a CSV corpus. With `labels = None` the label set is taken from the
/// file; otherwise labels must belong to the given set (e.g. a test split
/// reusing the training labels).
pub fn read_csv(reader: impl Read, schema: &CsvSchema, split: Split, labels: Option<&[String]>) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .from_reader(reader);
    let needed = schema.text_columns.iter().copied().chain([schema.label_column]).max().unwrap_or(0) + 1;
    let mut rows = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            AdeError::data(format!("line {line}: malformed CSV row: {e}"))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() < needed {
            return Err(AdeError::data(format!("line {line}: expected at least {needed} fields, found {}", rec.len())));
        }
        let text = schema
            .text_columns
            .iter()
            .map(|&c| rec[c].trim())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if text.is_empty() {
            return Err(AdeError::data(format!("line {line}: empty text")));
        }
        rows.push((line, rec[schema.label_column].trim().to_string(), text));
    }
    let names = match labels {
        Some(l) => l.to_vec(),
        None => label_order(rows.iter().map(|r| r.1.clone())),
    };
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut records = Vec::with_capacity(rows.len());
    for (line, label, text) in rows.iter() {
        let id = *index
            .get(label.as_str())
            .ok_or_else(|| AdeError::data(format!("line {line}: unknown label {label:?}")))?;
        records.push(Record { text: text.clone(), label: id });
    }
    Corpus::new(records, names, split)
}

pub fn load_csv(path: &Path, schema: &CsvSchema, split: Split, labels: Option<&[String]>) -> Result<Corpus> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, split, labels)
}

/// Lower-cased alphanumeric runs; whitespace and punctuation separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = AdeError;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD_ID] != PAD_TOKEN || tokens[UNK_ID] != UNK_TOKEN {
            return Err(AdeError::data("vocabulary must start with the pad and unk tokens"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(AdeError::data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Keeps the `max_size − 2` most frequent tokens, ties broken
/// lexicographically, after the reserved pad and unk ids.
pub fn build_vocab(corpus: &Corpus, max_size: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(AdeError::data("cannot build a vocabulary from an empty corpus"));
    }
    if max_size < 2 {
        return Err(AdeError::config("vocabulary size must leave room for pad and unk"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &corpus.records {
        for t in tokenize(&r.text) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(ranked.into_iter().take(max_size - 2).map(|(t, _)| t));
    Vocab::from_tokens(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl Encoded {
    /// True when no position is a real token; such rows must be rejected.
    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }
}

pub fn encode(text: &str, vocab: &Vocab, max_len: usize) -> Encoded {
    let mut ids: Vec<usize> = tokenize(text).iter().take(max_len).map(|t| vocab.id(t)).collect();
    let real = ids.len();
    ids.resize(max_len, PAD_ID);
    let mask = (0..max_len).map(|i| i < real).collect();
    Encoded { ids, mask }
}

/// Tokens at unmasked positions.
pub fn decode(encoded: &Encoded, vocab: &Vocab) -> Vec<String> {
    encoded
        .ids
        .iter()
        .zip(&encoded.mask)
        .filter(|(_, &m)| m)
        .map(|(&id, _)| vocab.token(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

/// An encoded, labelled dataset ready for batching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub rows: Vec<Encoded>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub max_len: usize,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Stacks the selected rows into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(TokenBatch, Vec<usize>)> {
        let mut ids = Vec::with_capacity(indices.len() * self.max_len);
        let mut mask = Vec::with_capacity(indices.len() * self.max_len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let row = self
                .rows
                .get(i)
                .ok_or_else(|| AdeError::Index(format!("sample {i} of {}", self.rows.len())))?;
            ids.extend_from_slice(&row.ids);
            mask.extend_from_slice(&row.mask);
            labels.push(self.labels[i]);
        }
        Ok((TokenBatch::new(ids, mask, indices.len(), self.max_len)?, labels))
    }

    pub fn content_hash(&self) -> String {
        crate::binio::sha256_hex(&serde_json::to_vec(self).expect("dataset serialises"))
    }
}

/// Encodes every record; a record with no tokens is a data error.
pub fn encode_corpus(corpus: &Corpus, vocab: &Vocab, max_len: usize) -> Result<EncodedDataset> {
    if max_len == 0 {
        return Err(AdeError::config("maximum sequence length must be at least 1"));
    }
    let mut rows = Vec::with_capacity(corpus.len());
    for (i, r) in corpus.records.iter().enumerate() {
        let e = encode(&r.text, vocab, max_len);
        if e.is_empty() {
            return Err(AdeError::data(format!("record {i} has no tokens")));
        }
        rows.push(e);
    }
    Ok(EncodedDataset { rows, labels: corpus.labels(), num_classes: corpus.num_classes(), max_len })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema { label_column: 0, text_columns: vec![1], has_header: false }
    }

    #[test]
    fn labels_are_remapped() {
        let c = read_csv("1,hello world\n2,bye\n".as_bytes(), &schema(), Split::Train, None).unwrap();
        assert_eq!(c.labels(), vec![0, 1]);
        assert_eq!(c.num_classes(), 2);
        assert_eq!(c.label_names, vec!["1", "2"]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let c = read_csv("10,a\n9,b\n".as_bytes(), &schema(), Split::Train, None).unwrap();
        assert_eq!(c.label_names, vec!["9", "10"]);
    }

    #[test]
    fn quoted_comma_is_one_field() {
        let c = read_csv("1,\"a, b\"\n".as_bytes(), &schema(), Split::Train, None).unwrap();
        assert_eq!(c.records[0].text, "a, b");
    }

    #[test]
    fn empty_text_rejected_with_line() {
        let err = read_csv("1,ok\n2,  \n".as_bytes(), &schema(), Split::Train, None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_label_rejected() {
        let labels = vec!["1".to_string()];
        let err = read_csv("1,a\n3,b\n".as_bytes(), &schema(), Split::Test, Some(&labels)).unwrap_err();
        assert!(err.to_string().contains("unknown label"), "{err}");
    }

    #[test]
    fn ag_news_preset_joins_title_and_description() {
        let c = read_csv("3,Title here,\"Body, text\"\n".as_bytes(), &CsvSchema::ag_news(), Split::Train, None).unwrap();
        assert_eq!(c.records[0].text, "Title here Body, text");
        assert!(CsvSchema::preset("nope").is_err());
    }

    #[test]
    fn header_flag_skips_first_row() {
        let s = CsvSchema { has_header: true, ..schema() };
        let c = read_csv("label,text\n1,x\n".as_bytes(), &s, Split::Train, None).unwrap();
        assert_eq!(c.len(), 1);
    }

    fn corpus(texts: &[&str]) -> Corpus {
        let records = texts.iter().map(|t| Record { text: t.to_string(), label: 0 }).collect();
        Corpus::new(records, vec!["x".into()], Split::Train).unwrap()
    }

    #[test]
    fn vocab_frequency_then_lexicographic() {
        let v = build_vocab(&corpus(&["a b a"]), 4).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
        let v = build_vocab(&corpus(&["c b"]), 10).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "b", "c"]);
    }

    #[test]
    fn reserved_only_vocab_maps_to_unk() {
        let v = build_vocab(&corpus(&["a b a"]), 2).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(encode("a b", &v, 3).ids, vec![UNK_ID, UNK_ID, PAD_ID]);
    }

    #[test]
    fn encode_pads_truncates_and_flags_empty() {
        let v = build_vocab(&corpus(&["Hello, world!"]), 10).unwrap();
        let e = encode("hello there", &v, 4);
        assert_eq!(e.ids, vec![v.id("hello"), UNK_ID, PAD_ID, PAD_ID]);
        assert_eq!(e.mask, vec![true, true, false, false]);
        assert_eq!(encode("world hello world", &v, 2).ids.len(), 2);
        let empty = encode("", &v, 3);
        assert!(empty.is_empty());
        assert_eq!(empty.ids, vec![PAD_ID; 3]);
    }

    #[test]
    fn decode_inverts_encode() {
        let v = build_vocab(&corpus(&["the cat sat"]), 10).unwrap();
        assert_eq!(decode(&encode("The cat", &v, 5), &v), vec!["the", "cat"]);
    }
}
