//! Line-delimited JSON manifests.
//!
//! One record per line:
//! `{"id": .., "image": .., "mask": .., "labels": {task: {category: [class, ..]}}, "split": "train"}`.
//! Relative paths resolve against the manifest's directory. Blank lines are
//! skipped.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use maskpar_core::data::Sample;
use maskpar_core::TaskPolicy;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::png;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// `task -> category -> classes present`.
pub type LabelSet = BTreeMap<String, BTreeMap<String, Vec<String>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    #[serde(default)]
    pub labels: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub splits: Vec<Option<Split>>,
}

impl Dataset {
    /// Samples tagged `split`. Untagged samples count as training data.
    pub fn split(&self, split: Split) -> Vec<Sample> {
        self.samples
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| s.unwrap_or(Split::Train) == split)
            .map(|(x, _)| x.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Multi-hot vector in policy order.
pub fn encode_labels(labels: &LabelSet, policy: &TaskPolicy) -> Result<Vec<u8>> {
    let mut out = vec![0u8; policy.attribute_count()];
    for (task, cats) in labels {
        for (cat, classes) in cats {
            for class in classes {
                let i = policy
                    .index_of(task, cat, class)
                    .ok_or_else(|| Error::config(format!("unknown attribute {task}/{cat}/{class}")))?;
                out[i] = 1;
            }
        }
    }
    Ok(out)
}

pub fn decode_labels(labels: &[u8], policy: &TaskPolicy) -> LabelSet {
    let mut out = LabelSet::new();
    for a in policy.attributes().filter(|a| labels[a.index] == 1) {
        out.entry(a.task_name.to_string())
            .or_default()
            .entry(a.category_name.to_string())
            .or_default()
            .push(a.class_name.to_string());
    }
    out
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::config(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn load_record(rec: &Record, base: &Path, policy: &TaskPolicy) -> Result<Sample> {
    let labels = encode_labels(&rec.labels, policy)?;
    let image = png::read_image(&base.join(&rec.image))?;
    let mask = png::read_mask(&base.join(&rec.mask))?;
    let sample = Sample::new(&rec.id, image, mask, labels)?;
    sample.validate(policy.attribute_count())?;
    Ok(sample)
}

/// Loads every record, failing on the first bad one with its id attached.
pub fn load_manifest(path: &Path, policy: &TaskPolicy) -> Result<Dataset> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut data = Dataset::default();
    for rec in read_records(path)? {
        let sample =
            load_record(&rec, base, policy).map_err(|e| Error::Record { id: rec.id.clone(), source: Box::new(e) })?;
        data.samples.push(sample);
        data.splits.push(rec.split);
    }
    Ok(data)
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|e| Error::json(path, e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use maskpar_core::data::synthetic_policy;

    #[test]
    fn labels_round_trip() {
        let policy = synthetic_policy();
        let v = vec![0, 1, 0, 1, 0, 0, 1, 1, 0, 0];
        let set = decode_labels(&v, &policy);
        assert_eq!(set["Head"]["Headwear"], vec!["Hat"]);
        assert_eq!(encode_labels(&set, &policy).unwrap(), v);
    }

    #[test]
    fn unknown_label_is_a_config_error() {
        let mut set = LabelSet::new();
        set.entry("Head".into()).or_default().insert("Headwear".into(), vec!["Crown".into()]);
        assert!(encode_labels(&set, &synthetic_policy()).unwrap_err().is_config());
    }

    #[test]
    fn empty_manifest_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, "\n").unwrap();
        assert!(load_manifest(&p, &synthetic_policy()).unwrap().is_empty());
    }

    #[test]
    fn splits_filter() {
        let s = Sample::new(
            "a",
            maskpar_core::data::Image::filled(1, 1, [0.0; 3]),
            maskpar_core::data::Mask::filled(1, 1, 1),
            vec![],
        )
        .unwrap();
        let d = Dataset {
            samples: vec![s.clone(), s.clone(), s],
            splits: vec![Some(Split::Train), Some(Split::Test), None],
        };
        assert_eq!(d.split(Split::Train).len(), 2);
        assert_eq!(d.split(Split::Test).len(), 1);
        assert!(d.split(Split::Val).is_empty());
    }
}
