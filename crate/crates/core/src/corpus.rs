//! Dataset ingestion and persistence.
//!
//! Datasets are line-delimited JSON records, one sample per line:
//!
//! ```text
//! {"id":"s-00001","code":"int add(int a, int b) { return a + b; }"}
//! ```
//!
//! `code` is required; `id` is required unless loading in lenient mode;
//! `label` (opaque task payload) and `poisoned` (ground truth, present only
//! in simulator output or benchmark data) are optional. Any other fields are
//! preserved opaquely across a load/save round trip so task-specific payloads
//! survive purification.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dataset record: source text plus optional task payload and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSample {
    pub id: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisoned: Option<bool>,
    /// Unknown fields carried through verbatim.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl CodeSample {
    pub fn new(id: impl Into<String>, code: impl Into<String>) -> Self {
        CodeSample {
            id: id.into(),
            code: code.into(),
            label: None,
            poisoned: None,
            extra: serde_json::Map::new(),
        }
    }

    /// Ground truth helper: absent `poisoned` means clean.
    pub fn is_poisoned(&self) -> bool {
        self.poisoned == Some(true)
    }
}

/// An ordered collection of samples with unique ids.
///
/// `provenance` is in-memory lineage (source path, attack config for
/// synthetic data); it is not persisted in the record file, and equality is
/// defined over samples only.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<CodeSample>,
    pub provenance: String,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl Dataset {
    pub fn new(samples: Vec<CodeSample>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId { id: s.id.clone() });
            }
        }
        Ok(Dataset {
            samples,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.samples.iter().any(|s| s.id == id)
    }

    /// Ids of samples carrying `poisoned: true` ground truth.
    pub fn poisoned_ids(&self) -> HashSet<String> {
        self.samples
            .iter()
            .filter(|s| s.is_poisoned())
            .map(|s| s.id.clone())
            .collect()
    }

    /// First `n` samples as a new dataset (for corpus-size sweeps).
    pub fn head(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples.iter().take(n).cloned().collect(),
            provenance: format!("{} (first {n})", self.provenance),
        }
    }
}

/// Loader behavior knobs.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// When true (the default), a record without an `id` is an error. When
    /// false, missing ids are synthesized as `line-N` and reported through
    /// the returned warnings; they are never invented silently.
    pub strict_ids: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { strict_ids: true }
    }
}

/// Raw record as it appears on disk; `id` may be absent.
#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    code: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    poisoned: Option<bool>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

/// Load a dataset, requiring every record to carry an id.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let (dataset, warnings) = load_dataset_with(path, LoadOptions::default())?;
    debug_assert!(warnings.is_empty());
    Ok(dataset)
}

/// Load a dataset with explicit options, returning any loader warnings.
pub fn load_dataset_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<(Dataset, Vec<String>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    let mut warnings = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        let id = match raw.id {
            Some(id) if !id.is_empty() => id,
            _ if opts.strict_ids => return Err(Error::MissingId { line: line_no }),
            _ => {
                let id = format!("line-{line_no}");
                warnings.push(format!("record at line {line_no} had no id, assigned {id:?}"));
                id
            }
        };
        if raw.code.trim().is_empty() {
            return Err(Error::EmptyCode { id });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id });
        }
        samples.push(CodeSample {
            id,
            code: raw.code,
            label: raw.label,
            poisoned: raw.poisoned,
            extra: raw.extra,
        });
    }

    for w in &warnings {
        log::warn!("{w}");
    }
    let dataset = Dataset {
        samples,
        provenance: path.display().to_string(),
    };
    Ok((dataset, warnings))
}

/// Write a dataset as line-delimited JSON. Load of the written file
/// reproduces the dataset sample-for-sample.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for sample in &dataset.samples {
        serde_json::to_writer(&mut writer, sample)?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    #[test]
    fn loads_valid_records_in_order() {
        let f = write_temp(&[
            r#"{"id":"a","code":"x = 1;"}"#,
            r#"{"id":"b","code":"y = 2;","label":"neg"}"#,
            r#"{"id":"c","code":"z = 3;","poisoned":false}"#,
        ]);
        let d = load_dataset(f.path()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(
            d.ids().collect::<Vec<_>>(),
            vec!["a", "b", "c"],
            "order preserved"
        );
        assert_eq!(d.samples[1].label.as_deref(), Some("neg"));
        assert_eq!(d.samples[2].poisoned, Some(false));
    }

    #[test]
    fn empty_code_is_rejected_by_id() {
        let f = write_temp(&[r#"{"id":"bad-one","code":"   "}"#]);
        let err = load_dataset(f.path()).unwrap_err();
        match err {
            Error::EmptyCode { id } => assert_eq!(id, "bad-one"),
            other => panic!("expected EmptyCode, got {other}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_temp(&[r#"{"id":"a","code":"ok();"}"#, "not json at all"]);
        let err = load_dataset(f.path()).unwrap_err();
        match err {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("expected MalformedRecord, got {other}"),
        }
    }

    #[test]
    fn duplicate_id_reports_the_id() {
        let f = write_temp(&[
            r#"{"id":"dup","code":"a();"}"#,
            r#"{"id":"dup","code":"b();"}"#,
        ]);
        let err = load_dataset(f.path()).unwrap_err();
        match err {
            Error::DuplicateId { id } => assert_eq!(id, "dup"),
            other => panic!("expected DuplicateId, got {other}"),
        }
    }

    #[test]
    fn missing_id_fails_in_strict_mode_and_is_loud_otherwise() {
        let f = write_temp(&[r#"{"code":"a();"}"#]);
        assert!(matches!(
            load_dataset(f.path()),
            Err(Error::MissingId { line: 1 })
        ));

        let (d, warnings) =
            load_dataset_with(f.path(), LoadOptions { strict_ids: false }).unwrap();
        assert_eq!(d.samples[0].id, "line-1");
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn unknown_fields_round_trip() {
        let f = write_temp(&[r#"{"id":"a","code":"x();","task":"clone","weight":3}"#]);
        let d = load_dataset(f.path()).unwrap();
        assert_eq!(d.samples[0].extra["task"], "clone");

        let out = tempfile::NamedTempFile::new().unwrap();
        save_dataset(&d, out.path()).unwrap();
        let d2 = load_dataset(out.path()).unwrap();
        assert_eq!(d, d2);
        assert_eq!(d2.samples[0].extra["weight"], 3);
    }

    #[test]
    fn empty_dataset_saves_to_empty_file() {
        let d = Dataset::new(vec![], "test").unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_dataset(&d, out.path()).unwrap();
        assert_eq!(std::fs::metadata(out.path()).unwrap().len(), 0);
        let d2 = load_dataset(out.path()).unwrap();
        assert!(d2.is_empty());
    }

    #[test]
    fn save_writes_one_line_per_sample() {
        let samples = (0..7)
            .map(|i| CodeSample::new(format!("s{i}"), format!("call_{i}();")))
            .collect();
        let d = Dataset::new(samples, "test").unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        save_dataset(&d, out.path()).unwrap();
        let text = std::fs::read_to_string(out.path()).unwrap();
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn blank_lines_are_skipped() {
        let f = write_temp(&[r#"{"id":"a","code":"x();"}"#, "", r#"{"id":"b","code":"y();"}"#]);
        let d = load_dataset(f.path()).unwrap();
        assert_eq!(d.len(), 2);
    }
}
