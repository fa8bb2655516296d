//! Text checkpoint container.
//!
//! ```text
//! PIRAN-CKPT 1
//! matrix <name> <rows> <cols>
//! <cols values>            (one line per row)
//! meta <name>
//! <value>                  (a single line)
//! ...
//! end <entry count>
//! ```
//!
//! Values are written in shortest round-trip form, so reading a checkpoint and
//! writing it again reproduces the bytes. The trailing `end` line lets a reader
//! tell a complete file from one cut off at an entry boundary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &str = "PIRAN-CKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Matrix(Matrix),
    Meta(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Entry)>,
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::Checkpoint(format!("invalid entry name `{name}`")));
    }
    Ok(())
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn entries(&self) -> &[(String, Entry)] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    fn put(&mut self, name: &str, entry: Entry) -> Result<()> {
        check_name(name)?;
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some((_, e)) => *e = entry,
            None => self.entries.push((name.to_string(), entry)),
        }
        Ok(())
    }

    pub fn set_matrix(&mut self, name: &str, m: Matrix) -> Result<()> {
        self.put(name, Entry::Matrix(m))
    }

    pub fn set_meta(&mut self, name: &str, value: impl Into<String>) -> Result<()> {
        let value = value.into();
        if value.contains('\n') || value.contains('\r') {
            return Err(Error::Checkpoint(format!("meta `{name}` spans several lines")));
        }
        self.put(name, Entry::Meta(value))
    }

    pub fn set_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let s = serde_json::to_string(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
        self.set_meta(name, s)
    }

    /// Drops every entry whose name starts with `prefix`.
    pub fn remove_prefix(&mut self, prefix: &str) {
        self.entries.retain(|(n, _)| !n.starts_with(prefix));
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        match self.entries.iter().find(|(n, _)| n == name) {
            Some((_, Entry::Matrix(m))) => Ok(m),
            Some(_) => Err(Error::Checkpoint(format!("entry `{name}` is not a matrix"))),
            None => Err(Error::Checkpoint(format!("missing matrix `{name}`"))),
        }
    }

    pub fn meta(&self, name: &str) -> Result<&str> {
        match self.entries.iter().find(|(n, _)| n == name) {
            Some((_, Entry::Meta(v))) => Ok(v),
            Some(_) => Err(Error::Checkpoint(format!("entry `{name}` is not metadata"))),
            None => Err(Error::Checkpoint(format!("missing metadata `{name}`"))),
        }
    }

    pub fn json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        serde_json::from_str(self.meta(name)?)
            .map_err(|e| Error::Checkpoint(format!("metadata `{name}`: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
        for (name, entry) in &self.entries {
            match entry {
                Entry::Matrix(m) => {
                    let _ = writeln!(s, "matrix {name} {} {}", m.rows(), m.cols());
                    for i in 0..m.rows() {
                        let mut first = true;
                        for v in m.row(i) {
                            if !first {
                                s.push(' ');
                            }
                            first = false;
                            let _ = write!(s, "{v:?}");
                        }
                        s.push('\n');
                    }
                }
                Entry::Meta(v) => {
                    let _ = writeln!(s, "meta {name}");
                    let _ = writeln!(s, "{v}");
                }
            }
        }
        let _ = writeln!(s, "end {}", self.entries.len());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or_default();
        let mut parts = header.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(Error::Checkpoint(format!("bad magic header `{header}`")));
        }
        match parts.next().map(str::parse::<u32>) {
            Some(Ok(FORMAT_VERSION)) if parts.next().is_none() => {}
            Some(Ok(v)) => {
                return Err(Error::Checkpoint(format!(
                    "incompatible checkpoint version {v} (this build reads version {FORMAT_VERSION})"
                )))
            }
            _ => return Err(Error::Checkpoint(format!("bad magic header `{header}`"))),
        }
        let truncated = |what: &str| Error::Checkpoint(format!("truncated checkpoint: {what}"));
        if !text.ends_with('\n') {
            return Err(truncated("file does not end with a newline"));
        }
        let mut ck = Checkpoint::new();
        loop {
            let line = lines.next().ok_or_else(|| truncated("missing `end` line"))?;
            if line.is_empty() {
                return Err(truncated("missing `end` line"));
            }
            let fields: Vec<&str> = line.split(' ').collect();
            match fields.as_slice() {
                ["end", n] => {
                    let n: usize = n.parse().map_err(|_| Error::Checkpoint(format!("bad end line `{line}`")))?;
                    if n != ck.entries.len() {
                        return Err(truncated(&format!("end line announces {n} entries, read {}", ck.entries.len())));
                    }
                    break;
                }
                ["matrix", name, rows, cols] => {
                    let parse = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| Error::Checkpoint(format!("bad matrix header `{line}`")))
                    };
                    let (rows, cols) = (parse(rows)?, parse(cols)?);
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        let row = lines
                            .next()
                            .ok_or_else(|| truncated(&format!("matrix `{name}` stops at row {r}")))?;
                        let before = data.len();
                        for tok in row.split(' ').filter(|t| !t.is_empty()) {
                            data.push(tok.parse::<f64>().map_err(|_| {
                                Error::Checkpoint(format!("matrix `{name}` row {r}: bad value `{tok}`"))
                            })?);
                        }
                        if data.len() - before != cols {
                            return Err(truncated(&format!(
                                "matrix `{name}` row {r} has {} values, expected {cols}",
                                data.len() - before
                            )));
                        }
                    }
                    ck.set_matrix(name, Matrix::from_vec(rows, cols, data)?)?;
                }
                ["meta", name] => {
                    let v = lines.next().ok_or_else(|| truncated(&format!("meta `{name}` has no value")))?;
                    ck.set_meta(name, v)?;
                }
                _ => return Err(Error::Checkpoint(format!("unexpected line `{line}`"))),
            }
        }
        if lines.any(|l| !l.is_empty()) {
            return Err(Error::Checkpoint("trailing data after `end` line".into()));
        }
        Ok(ck)
    }

    /// Writes atomically (temporary file, then rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp-ckpt");
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_text(&fs::read_to_string(path)?)
    }
}
