//! JSON manifest describing a dataset of feature files.
//!
//! ```json
//! {
//!   "dataset_name": "synthetic",
//!   "text_bank": "text_bank.cmtx",
//!   "classes": [
//!     {
//!       "class_id": "class_00",
//!       "train_normals":   [{"sample_id": "...", "feature_path": "...", "label": "normal"}],
//!       "train_anomalies": [{"sample_id": "...", "feature_path": "...", "mask_path": "...", "label": "anomalous"}],
//!       "test_samples":    [ ... ]
//!     }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory. `text_bank` and `mask_path`
//! are optional; unknown fields are ignored.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::feature::{read_feature_file, FeatureSample, Label};
use super::mask::read_mask_file;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub sample_id: String,
    pub feature_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class_id: String,
    pub train_normals: Vec<SampleEntry>,
    pub train_anomalies: Vec<SampleEntry>,
    pub test_samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_bank: Option<String>,
    pub classes: Vec<ClassEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn class(&self, class_id: &str) -> Option<&ClassEntry> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn text_bank_path(&self) -> Option<PathBuf> {
        self.text_bank.as_deref().map(|p| self.resolve(p))
    }

    /// Reads the feature file (and mask, when listed) behind one entry.
    pub fn load_sample(&self, class_id: &str, entry: &SampleEntry) -> Result<FeatureSample> {
        let record = read_feature_file(self.resolve(&entry.feature_path))?;
        if record.label != entry.label {
            return Err(Error::data(format!(
                "sample {}: manifest label {:?} disagrees with feature file label {:?}",
                entry.sample_id, entry.label, record.label
            )));
        }
        let mask = entry
            .mask_path
            .as_deref()
            .map(|p| read_mask_file(self.resolve(p)))
            .transpose()?;
        FeatureSample::new(&entry.sample_id, class_id, record, mask)
    }

    /// Structural checks: unique ids, label placement, masks on anomalies, and
    /// that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut class_ids = HashSet::new();
        for class in &self.classes {
            if !class_ids.insert(class.class_id.as_str()) {
                return Err(Error::data(format!(
                    "duplicate class_id {:?}",
                    class.class_id
                )));
            }
            let groups = [
                ("train_normals", &class.train_normals, Some(Label::Normal)),
                (
                    "train_anomalies",
                    &class.train_anomalies,
                    Some(Label::Anomalous),
                ),
                ("test_samples", &class.test_samples, None),
            ];
            for (group, entries, expected) in groups {
                for e in entries {
                    if !seen.insert(e.sample_id.as_str()) {
                        return Err(Error::data(format!(
                            "duplicate sample_id {:?}",
                            e.sample_id
                        )));
                    }
                    if let Some(label) = expected {
                        if e.label != label {
                            return Err(Error::data(format!(
                                "sample {:?} in {group} of class {:?} is labeled {:?}",
                                e.sample_id, class.class_id, e.label
                            )));
                        }
                    }
                    if e.label.is_anomalous() && e.mask_path.is_none() {
                        return Err(Error::data(format!(
                            "anomalous sample {:?} has no mask",
                            e.sample_id
                        )));
                    }
                    for rel in std::iter::once(&e.feature_path).chain(e.mask_path.as_ref()) {
                        let p = self.resolve(rel);
                        if !p.is_file() {
                            return Err(Error::data(format!(
                                "sample {:?}: missing file {}",
                                e.sample_id,
                                p.display()
                            )));
                        }
                    }
                }
            }
        }
        if let Some(tb) = self.text_bank_path() {
            if !tb.is_file() {
                return Err(Error::data(format!("missing text bank {}", tb.display())));
            }
        }
        Ok(())
    }
}

fn missing_fields(value: &Value) -> Vec<String> {
    fn require(obj: &Value, at: &str, fields: &[&str], out: &mut Vec<String>) {
        match obj.as_object() {
            Some(map) => {
                for f in fields {
                    if !map.contains_key(*f) {
                        out.push(format!("{at}{f}"));
                    }
                }
            }
            None => out.push(format!("{at}<object>")),
        }
    }
    let mut out = Vec::new();
    require(value, "", &["dataset_name", "classes"], &mut out);
    if let Some(classes) = value.get("classes").and_then(Value::as_array) {
        for (i, class) in classes.iter().enumerate() {
            let at = format!("classes[{i}].");
            require(
                class,
                &at,
                &[
                    "class_id",
                    "train_normals",
                    "train_anomalies",
                    "test_samples",
                ],
                &mut out,
            );
            for group in ["train_normals", "train_anomalies", "test_samples"] {
                if let Some(entries) = class.get(group).and_then(Value::as_array) {
                    for (j, e) in entries.iter().enumerate() {
                        require(
                            e,
                            &format!("{at}{group}[{j}]."),
                            &["sample_id", "feature_path", "label"],
                            &mut out,
                        );
                    }
                }
            }
        }
    }
    out
}

/// Parses manifest JSON without touching the filesystem.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let json_err = |source| Error::Json {
        path: path.to_path_buf(),
        source,
    };
    let value: Value = serde_json::from_str(text).map_err(json_err)?;
    let missing = missing_fields(&value);
    if !missing.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            fields: missing,
        });
    }
    let mut manifest: Manifest = serde_json::from_value(value).map_err(json_err)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = parse_manifest(&text, path)?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    super::binio::write_file(path, text.as_bytes())
}
