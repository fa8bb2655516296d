//! Corpus, label space, embedding and feature-file ingestion.
//!
//! File formats (UTF-8):
//!
//! * corpus: `doc_id<TAB>label,label,...<TAB>tok tok tok` per line
//! * embeddings: `word v1 ... vdim` per line
//! * features: header `dim count`, then `doc_id f1 ... fdim` per line

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_MAX_WORDS: usize = 500;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    /// Sorted, deduplicated indices into [`LabelSpace::labels`].
    pub labels: Vec<usize>,
}

impl Document {
    pub fn has_label(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }
}

/// Keeps the last `max_words` tokens.
pub fn truncate_tokens(tokens: &mut Vec<String>, max_words: usize) {
    if tokens.len() > max_words {
        tokens.drain(..tokens.len() - max_words);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub docs: Vec<Document>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    /// Document indices per label, in corpus order.
    pub fn label_docs(&self, n_labels: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_labels];
        for (i, d) in self.docs.iter().enumerate() {
            for &l in &d.labels {
                out[l].push(i);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "LabelSpaceRepr", try_from = "LabelSpaceRepr")]
pub struct LabelSpace {
    labels: Vec<String>,
    freq: Vec<usize>,
    head: Vec<usize>,
    tail: Vec<usize>,
    lookup: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct LabelSpaceRepr {
    labels: Vec<String>,
    freq: Vec<usize>,
    head: Vec<usize>,
    tail: Vec<usize>,
}

impl From<LabelSpace> for LabelSpaceRepr {
    fn from(s: LabelSpace) -> Self {
        LabelSpaceRepr {
            labels: s.labels,
            freq: s.freq,
            head: s.head,
            tail: s.tail,
        }
    }
}

impl TryFrom<LabelSpaceRepr> for LabelSpace {
    type Error = Error;

    fn try_from(r: LabelSpaceRepr) -> Result<Self> {
        let mut s = LabelSpace::new(r.labels, r.freq)?;
        let mut all: Vec<usize> = r.head.iter().chain(&r.tail).copied().collect();
        all.sort_unstable();
        if all != (0..s.len()).collect::<Vec<_>>() {
            return Err(Error::Validation("head/tail lists do not partition the labels".into()));
        }
        s.head = r.head;
        s.tail = r.tail;
        Ok(s)
    }
}

impl LabelSpace {
    /// Label space with every label in the head, ranked by frequency.
    pub fn new(labels: Vec<String>, freq: Vec<usize>) -> Result<Self> {
        if labels.len() != freq.len() {
            return Err(Error::Shape(format!(
                "{} labels but {} frequencies",
                labels.len(),
                freq.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if lookup.insert(l.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate label `{l}`")));
            }
        }
        let mut space = LabelSpace {
            labels,
            freq,
            head: Vec::new(),
            tail: Vec::new(),
            lookup,
        };
        space.head = space.ranked();
        Ok(space)
    }

    /// All labels by descending frequency; equal frequencies keep first-appearance order.
    fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.labels.len()).collect();
        idx.sort_by(|&a, &b| self.freq[b].cmp(&self.freq[a]).then(a.cmp(&b)));
        idx
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, label: usize) -> &str {
        &self.labels[label]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn freq(&self) -> &[usize] {
        &self.freq
    }

    pub fn head(&self) -> &[usize] {
        &self.head
    }

    pub fn tail(&self) -> &[usize] {
        &self.tail
    }

    /// Classifier row order: head labels followed by tail labels.
    pub fn order(&self) -> Vec<usize> {
        self.head.iter().chain(&self.tail).copied().collect()
    }

    /// Maps label index to classifier row.
    pub fn row_of(&self) -> Vec<usize> {
        let mut rows = vec![0; self.len()];
        for (r, l) in self.order().into_iter().enumerate() {
            rows[l] = r;
        }
        rows
    }

    pub fn is_tail(&self, label: usize) -> bool {
        self.tail.contains(&label)
    }

    /// Moves the `tail_count` least frequent labels into the tail.
    pub fn split_head_tail(&self, tail_count: usize) -> Result<LabelSpace> {
        let l = self.len();
        if tail_count > l {
            return Err(Error::Argument(format!(
                "tail_count {tail_count} exceeds label count {l}"
            )));
        }
        let ranked = self.ranked();
        let mut out = self.clone();
        out.head = ranked[..l - tail_count].to_vec();
        out.tail = ranked[l - tail_count..].to_vec();
        Ok(out)
    }

    /// Binary target vector in classifier row order.
    pub fn targets(&self, doc: &Document) -> Vec<f64> {
        let rows = self.row_of();
        let mut y = vec![0.0; self.len()];
        for &l in &doc.labels {
            y[rows[l]] = 1.0;
        }
        y
    }
}

fn parse_labels(
    field: &str,
    path: &Path,
    line: usize,
    mut resolve: impl FnMut(&str) -> Option<usize>,
) -> Result<Vec<usize>> {
    let names: Vec<&str> = field.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::Validation(format!(
            "{}:{line}: document has no labels",
            path.display()
        )));
    }
    let mut labels: Vec<usize> = names.into_iter().filter_map(&mut resolve).collect();
    labels.sort_unstable();
    labels.dedup();
    Ok(labels)
}

struct RawLine<'a> {
    id: &'a str,
    labels: &'a str,
    tokens: &'a str,
}

fn split_line<'a>(line: &'a str, path: &Path, lineno: usize) -> Result<RawLine<'a>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(Error::parse(
            path,
            lineno,
            format!("expected 3 tab-separated fields, found {}", fields.len()),
        ));
    }
    if fields[0].is_empty() {
        return Err(Error::parse(path, lineno, "empty document id"));
    }
    Ok(RawLine {
        id: fields[0],
        labels: fields[1],
        tokens: fields[2],
    })
}

/// Reads a training corpus. Label order is first-appearance order.
pub fn read_corpus(
    reader: impl BufRead,
    path: &Path,
    max_words: usize,
) -> Result<(Corpus, LabelSpace)> {
    if max_words == 0 {
        return Err(Error::Argument("max_words must be at least 1".into()));
    }
    let mut names: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    let mut freq: Vec<usize> = Vec::new();
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let raw = split_line(&line, path, lineno)?;
        if !seen.insert(raw.id.to_string()) {
            return Err(Error::Validation(format!(
                "{}:{lineno}: duplicate doc_id `{}`",
                path.display(),
                raw.id
            )));
        }
        let labels = parse_labels(raw.labels, path, lineno, |name| {
            Some(*lookup.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                freq.push(0);
                names.len() - 1
            }))
        })?;
        for &l in &labels {
            freq[l] += 1;
        }
        let mut tokens: Vec<String> = raw.tokens.split_whitespace().map(str::to_string).collect();
        truncate_tokens(&mut tokens, max_words);
        docs.push(Document {
            id: raw.id.to_string(),
            tokens,
            labels,
        });
    }
    let space = LabelSpace::new(names, freq)?;
    Ok((Corpus { docs }, space))
}

pub fn load_corpus(path: impl AsRef<Path>, max_words: usize) -> Result<(Corpus, LabelSpace)> {
    let path = path.as_ref();
    read_corpus(BufReader::new(File::open(path)?), path, max_words)
}

/// Reads an evaluation corpus against an existing label space. Labels unknown to
/// `space` are dropped (and counted in the log); a document may end up with no
/// labels, in which case ranking metrics skip it.
pub fn read_eval_corpus(
    reader: impl BufRead,
    path: &Path,
    max_words: usize,
    space: &LabelSpace,
) -> Result<Corpus> {
    if max_words == 0 {
        return Err(Error::Argument("max_words must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    let mut unknown = 0usize;
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let raw = split_line(&line, path, lineno)?;
        if !seen.insert(raw.id.to_string()) {
            return Err(Error::Validation(format!(
                "{}:{lineno}: duplicate doc_id `{}`",
                path.display(),
                raw.id
            )));
        }
        let labels = parse_labels(raw.labels, path, lineno, |name| {
            let idx = space.index_of(name);
            if idx.is_none() {
                unknown += 1;
            }
            idx
        })?;
        let mut tokens: Vec<String> = raw.tokens.split_whitespace().map(str::to_string).collect();
        truncate_tokens(&mut tokens, max_words);
        docs.push(Document {
            id: raw.id.to_string(),
            tokens,
            labels,
        });
    }
    if unknown > 0 {
        log::warn!("{}: dropped {unknown} label occurrences unknown to the training label space", path.display());
    }
    Ok(Corpus { docs })
}

pub fn load_eval_corpus(path: impl AsRef<Path>, max_words: usize, space: &LabelSpace) -> Result<Corpus> {
    let path = path.as_ref();
    read_eval_corpus(BufReader::new(File::open(path)?), path, max_words, space)
}

/// Writes a corpus in the tab-separated format.
pub fn write_corpus(mut w: impl Write, corpus: &Corpus, space: &LabelSpace) -> Result<()> {
    for d in &corpus.docs {
        let labels: Vec<&str> = d.labels.iter().map(|&l| space.name(l)).collect();
        writeln!(w, "{}\t{}\t{}", d.id, labels.join(","), d.tokens.join(" "))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OovPolicy {
    #[default]
    Zero,
}

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
    pub oov_policy: OovPolicy,
    /// Lines skipped because their word had already been seen.
    pub duplicates: usize,
}

impl EmbeddingTable {
    pub fn from_parts(words: Vec<String>, vectors: Matrix) -> Result<Self> {
        if words.len() != vectors.rows() {
            return Err(Error::Shape(format!(
                "{} words for {} vectors",
                words.len(),
                vectors.rows()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate word `{w}`")));
            }
        }
        Ok(EmbeddingTable {
            dim: vectors.cols(),
            words,
            index,
            vectors,
            oov_policy: OovPolicy::Zero,
            duplicates: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn id_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.id_of(word).map(|i| self.vectors.row(i))
    }

    /// Vector for `word`, or the OOV vector.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        match (self.get(word), self.oov_policy) {
            (Some(v), _) => v.to_vec(),
            (None, OovPolicy::Zero) => vec![0.0; self.dim],
        }
    }
}

pub fn read_embeddings(reader: impl BufRead, path: &Path) -> Result<EmbeddingTable> {
    let mut dim = None;
    let mut words = Vec::new();
    let mut index = HashMap::new();
    let mut data = Vec::new();
    let mut duplicates = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("non-numeric value `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::parse(path, lineno, format!("word `{word}` has no vector")));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("vector has {} values, expected {d}", values.len()),
                ))
            }
            _ => {}
        }
        if index.contains_key(word) {
            duplicates += 1;
            continue;
        }
        index.insert(word.to_string(), words.len());
        words.push(word.to_string());
        data.extend(values);
    }
    if duplicates > 0 {
        log::warn!("{}: {duplicates} duplicate words ignored (first occurrence kept)", path.display());
    }
    let dim = dim.ok_or_else(|| Error::parse(path, 0, "embedding file is empty"))?;
    let vectors = Matrix::from_vec(words.len(), dim, data)?;
    Ok(EmbeddingTable {
        dim,
        words,
        index,
        vectors,
        oov_policy: OovPolicy::Zero,
        duplicates,
    })
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    read_embeddings(BufReader::new(File::open(path)?), path)
}

/// Precomputed document representations keyed by doc id.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    rows: Matrix,
}

impl FeatureFile {
    pub fn new(ids: Vec<String>, rows: Matrix) -> Result<Self> {
        if ids.len() != rows.rows() {
            return Err(Error::Shape(format!("{} ids for {} rows", ids.len(), rows.rows())));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate doc_id `{id}` in feature rows")));
            }
        }
        Ok(FeatureFile { ids, index, rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.rows.row(i))
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.dim(), self.len())?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(w, "{id}")?;
            for v in self.rows.row(i) {
                write!(w, " {v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

pub fn read_features(reader: impl BufRead, path: &Path) -> Result<FeatureFile> {
    let mut lines = reader.lines().enumerate();
    let (dim, count) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::parse(path, 0, "missing `dim count` header"));
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let parsed = match f.as_slice() {
            [d, c] => d.parse::<usize>().ok().zip(c.parse::<usize>().ok()),
            _ => None,
        };
        break parsed.ok_or_else(|| Error::parse(path, i + 1, "header must be `dim count`"))?;
    };
    let mut ids = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("non-numeric value `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("row has {} values, header says {dim}", values.len()),
            ));
        }
        ids.push(id.to_string());
        data.extend(values);
    }
    if ids.len() != count {
        return Err(Error::parse(
            path,
            0,
            format!("header declares {count} rows, file has {}", ids.len()),
        ));
    }
    FeatureFile::new(ids, Matrix::from_vec(count, dim, data)?)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureFile> {
    let path = path.as_ref();
    read_features(BufReader::new(File::open(path)?), path)
}
