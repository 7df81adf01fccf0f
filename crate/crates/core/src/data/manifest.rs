//! CSV dataset manifests in the ESC-50 metadata layout.
//!
//! Required columns are `filename` and `fold`, plus either `category`
//! (single label) or `categories` (labels separated by `|`). Other columns
//! are ignored. Class indices follow the sorted class names, so row order
//! never affects them.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Environment variable naming the audio root when none is given.
pub const DATA_ROOT_ENV: &str = "EAT_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: String,
    pub fold: u32,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    pub classes: Vec<String>,
    pub multi_label: bool,
    pub root: PathBuf,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Manifest(msg.into())
}

impl Manifest {
    pub fn from_reader<R: Read>(reader: R, root: PathBuf) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| err(format!("header: {e}")))?.clone();
        if headers.is_empty() || headers.iter().all(str::is_empty) {
            return Err(err("empty file"));
        }
        let col = |name: &str| headers.iter().position(|h| h == name);
        let file_col = col("filename").ok_or_else(|| err("missing `filename` column"))?;
        let fold_col = col("fold").ok_or_else(|| err("missing `fold` column"))?;
        let (label_col, multi_label) = match (col("category"), col("categories")) {
            (_, Some(c)) => (c, true),
            (Some(c), None) => (c, false),
            (None, None) => return Err(err("missing `category` or `categories` column")),
        };
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| err(format!("line {line}: {e}")))?;
            let field = |c: usize| row.get(c).ok_or_else(|| err(format!("line {line}: missing field")));
            let path = field(file_col)?.to_string();
            if path.is_empty() {
                return Err(err(format!("line {line}: empty filename")));
            }
            if !seen.insert(path.clone()) {
                return Err(err(format!("line {line}: duplicate path `{path}`")));
            }
            let fold: u32 = field(fold_col)?
                .parse()
                .map_err(|_| err(format!("line {line}: fold `{}` is not a non-negative integer", field(fold_col).unwrap_or(""))))?;
            let raw = field(label_col)?;
            let labels: Vec<String> = if multi_label {
                raw.split('|').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            } else {
                vec![raw.to_string()]
            };
            if labels.is_empty() || labels.iter().any(String::is_empty) {
                return Err(err(format!("line {line}: no label")));
            }
            records.push(ManifestRecord { path, fold, labels });
        }
        if records.is_empty() {
            return Err(err("empty file"));
        }
        let folds: BTreeSet<u32> = records.iter().map(|r| r.fold).collect();
        let (lo, hi) = (*folds.first().expect("non-empty"), *folds.last().expect("non-empty"));
        if let Some(missing) = (lo..=hi).find(|f| !folds.contains(f)) {
            return Err(err(format!("folds are not contiguous: fold {missing} is missing from {lo}..={hi}")));
        }
        let classes: Vec<String> = records.iter().flat_map(|r| r.labels.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
        Ok(Self { records, classes, multi_label, root })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(name)).ok()
    }

    /// Multi-hot (or one-hot) label vector of a record.
    pub fn label_vector(&self, r: &ManifestRecord) -> Vec<f64> {
        let mut v = vec![0.0; self.classes.len()];
        for l in &r.labels {
            v[self.class_index(l).expect("label in vocabulary")] = 1.0;
        }
        v
    }

    /// Sorted fold identifiers.
    pub fn folds(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.fold).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn audio_path(&self, r: &ManifestRecord) -> PathBuf {
        self.root.join(&r.path)
    }
}

/// Audio root: the explicit argument, else `$EAT_DATA_ROOT`, else the
/// directory holding the manifest.
pub fn resolve_root(csv_path: &Path, audio_root: Option<&Path>) -> PathBuf {
    if let Some(r) = audio_root {
        return r.to_path_buf();
    }
    if let Some(r) = std::env::var_os(DATA_ROOT_ENV) {
        return PathBuf::from(r);
    }
    csv_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_manifest(csv_path: &Path, audio_root: Option<&Path>) -> Result<Manifest> {
    let file = std::fs::File::open(csv_path)?;
    Manifest::from_reader(file, resolve_root(csv_path, audio_root))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Manifest> {
        Manifest::from_reader(s.as_bytes(), PathBuf::from("/data"))
    }

    #[test]
    fn esc50_style_layout() {
        let mut csv = String::from("filename,fold,target,category,esc10,src_file,take\n");
        for i in 0..2000 {
            csv.push_str(&format!("{i}.wav,{},{},class{:02},False,x,A\n", i % 5 + 1, i % 50, i % 50));
        }
        let m = parse(&csv).unwrap();
        assert_eq!(m.num_classes(), 50);
        assert_eq!(m.folds(), vec![1, 2, 3, 4, 5]);
        for f in 1..=5 {
            assert_eq!(m.records.iter().filter(|r| r.fold == f).count(), 400);
        }
        assert!(!m.multi_label);
        assert_eq!(m.audio_path(&m.records[3]), PathBuf::from("/data/3.wav"));
    }

    #[test]
    fn class_order_ignores_row_order() {
        let a = parse("filename,fold,category\na.wav,1,dog\nb.wav,2,cat\nc.wav,1,bird\n").unwrap();
        let b = parse("filename,fold,category\nc.wav,1,bird\na.wav,1,dog\nb.wav,2,cat\n").unwrap();
        assert_eq!(a.classes, vec!["bird", "cat", "dog"]);
        assert_eq!(a.classes, b.classes);
        assert_eq!(a.label_vector(&a.records[0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn multi_label_rows() {
        let m = parse("filename,fold,categories\na.wav,0,speech|music\nb.wav,1,music\n").unwrap();
        assert!(m.multi_label);
        assert_eq!(m.classes, vec!["music", "speech"]);
        assert_eq!(m.label_vector(&m.records[0]), vec![1.0, 1.0]);
        assert_eq!(m.label_vector(&m.records[1]), vec![1.0, 0.0]);
    }

    #[test]
    fn invalid_manifests() {
        assert!(matches!(parse(""), Err(Error::Manifest(_))));
        assert!(parse("filename,fold,category\n").is_err());
        assert!(parse("filename,fold,category\na.wav,1,x\na.wav,2,y\n").is_err());
        assert!(parse("filename,fold,category\na.wav,1,x\nb.wav,3,y\n").is_err());
        assert!(parse("filename,fold,category\na.wav,-1,x\n").is_err());
        assert!(parse("filename,category\na.wav,x\n").is_err());
    }
}
