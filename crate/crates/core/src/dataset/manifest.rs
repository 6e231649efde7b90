//! Line-oriented dataset manifests: `index<TAB>label<TAB>has_audio`, with
//! `# key=value` header lines for the split metadata.

use super::{Label, MaskedDataset, Split};
use crate::error::{Error, Result};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub index: usize,
    pub label: Label,
    pub has_audio: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub split: Split,
    pub eta: f64,
    pub seed: u64,
    pub multi_label: bool,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn of(data: &MaskedDataset) -> Self {
        Self {
            split: data.split,
            eta: data.eta,
            seed: data.seed,
            multi_label: data.schema.multi_label,
            records: data
                .samples
                .iter()
                .map(|s| ManifestRecord { index: s.id, label: s.label.clone(), has_audio: s.is_complete() })
                .collect(),
        }
    }

    pub fn encode(&self) -> String {
        let mut out =
            format!("# split={}\n# eta={}\n# seed={}\n# multi_label={}\n", self.split.name(), self.eta, self.seed, self.multi_label);
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\n", r.index, r.label.encode(), u8::from(r.has_audio)));
        }
        out
    }

    pub fn decode(text: &str) -> Result<Self> {
        const F: &str = "manifest";
        let mut split = Split::Train;
        let mut eta = 1.0;
        let mut seed = 0;
        let mut multi_label = false;
        let mut records = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let at = line_no as u64 + 1;
            if let Some(meta) = line.strip_prefix('#') {
                let Some((k, v)) = meta.trim().split_once('=') else { continue };
                let bad = || Error::format(F, at, format!("bad header value {v:?}"));
                match k {
                    "split" => {
                        split = match v {
                            "train" => Split::Train,
                            "validation" => Split::Validation,
                            _ => return Err(bad()),
                        }
                    }
                    "eta" => eta = v.parse().map_err(|_| bad())?,
                    "seed" => seed = v.parse().map_err(|_| bad())?,
                    "multi_label" => multi_label = v.parse().map_err(|_| bad())?,
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::format(F, at, format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let index = fields[0].parse().map_err(|_| Error::format(F, at, "bad index"))?;
            let label = Label::decode(fields[1], multi_label).ok_or_else(|| Error::format(F, at, "bad label"))?;
            let has_audio = match fields[2] {
                "0" => false,
                "1" => true,
                _ => return Err(Error::format(F, at, "has_audio must be 0 or 1")),
            };
            records.push(ManifestRecord { index, label, has_audio });
        }
        Ok(Self { split, eta, seed, multi_label, records })
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::write(path, manifest.encode())?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Manifest::decode(&std::fs::read_to_string(path)?)
}
