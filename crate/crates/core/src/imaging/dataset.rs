//! Line-delimited JSON manifests and the labelled datasets loaded from them.
//!
//! One object per line:
//!
//! ```text
//! {"id":"img00003","image":"images/img00003.png","label":"rdr","masks":{"hemorrhage":["masks/img00003_H_0.png"]}}
//! ```
//!
//! Paths are relative to the manifest's directory. `masks` maps a lesion
//! type to one binary PNG per annotator and may be omitted. An optional
//! `source` field (`kaggle-style`, `diaretdb1-style`, `synthetic`) tags
//! provenance.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fusion::fuse_expert_masks;
use super::preprocess::{preprocess, PreprocessConfig, PreprocessedImage};
use super::raw::{load_mask, save_mask, transform_mask, RawImage};
use super::synth::SyntheticImage;
use crate::error::{Error, Result};
use crate::eval::{GroundTruthRegion, LesionType};
use crate::net::TrainSample;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    /// Non-referable.
    Nrdr,
    /// Referable.
    Rdr,
}

impl Label {
    pub fn from_diseased(diseased: bool) -> Self {
        if diseased {
            Label::Rdr
        } else {
            Label::Nrdr
        }
    }

    pub fn is_diseased(self) -> bool {
        self == Label::Rdr
    }

    /// Class index used by the network.
    pub fn index(self) -> usize {
        usize::from(self.is_diseased())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    KaggleStyle,
    #[serde(rename = "diaretdb1-style")]
    DiaretDb1Style,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub masks: BTreeMap<LesionType, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if !seen.insert(entry.id.clone()) {
                return Err(Error::Manifest(format!(
                    "{}:{}: duplicate id {:?}",
                    path.display(),
                    n + 1,
                    entry.id
                )));
            }
            entries.push(entry);
        }
        Ok(Manifest {
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// Dataset provenance: the common `source` tag if every entry has the
    /// same one, otherwise inferred from whether masks are present.
    pub fn provenance(&self) -> Provenance {
        let first = self.entries.first().and_then(|e| e.source);
        if first.is_some() && self.entries.iter().all(|e| e.source == first) {
            return first.expect("checked above");
        }
        if self.entries.iter().any(|e| !e.masks.is_empty()) {
            Provenance::DiaretDb1Style
        } else {
            Provenance::KaggleStyle
        }
    }

    pub fn load_image(&self, entry: &ManifestEntry) -> Result<RawImage> {
        let mut img = RawImage::load(self.resolve(&entry.image))?;
        img.id = entry.id.clone();
        Ok(img)
    }

    /// Preprocesses the image and brings its annotations to the same grid.
    pub fn load_item(
        &self,
        entry: &ManifestEntry,
        config: PreprocessConfig,
    ) -> Result<LabeledItem> {
        let raw = self.load_image(entry)?;
        let image = preprocess(&raw, config)?;
        let mut ground_truth = Vec::new();
        for (&t, paths) in &entry.masks {
            let masks = paths
                .iter()
                .map(|p| {
                    let m = load_mask(self.resolve(p))?;
                    if (m.width(), m.height()) != (raw.width, raw.height) {
                        return Err(Error::Manifest(format!(
                            "{}: mask {p} is {}x{}, image is {}x{}",
                            entry.id,
                            m.width(),
                            m.height(),
                            raw.width,
                            raw.height
                        )));
                    }
                    transform_mask(&m, image.crop_box, config.size, config.size)
                })
                .collect::<Result<Vec<_>>>()?;
            if !masks.is_empty() {
                ground_truth.extend(fuse_expert_masks(&masks, t)?);
            }
        }
        Ok(LabeledItem {
            label: entry.label,
            image,
            ground_truth,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub image: PreprocessedImage,
    pub label: Label,
    pub ground_truth: Vec<GroundTruthRegion>,
}

impl LabeledItem {
    pub fn id(&self) -> &str {
        &self.image.id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<LabeledItem>,
    pub provenance: Provenance,
}

impl LabeledDataset {
    /// Reads and preprocesses every entry of a manifest, in manifest order.
    pub fn load(manifest_path: impl AsRef<Path>, config: PreprocessConfig) -> Result<Self> {
        let manifest = Manifest::read(manifest_path)?;
        let items = manifest
            .entries
            .par_iter()
            .map(|e| manifest.load_item(e, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset {
            items,
            provenance: manifest.provenance(),
        })
    }

    /// Preprocesses generated images in memory, the same way
    /// [`LabeledDataset::load`] would after [`write_synthetic`].
    pub fn from_synthetic(images: &[SyntheticImage], config: PreprocessConfig) -> Result<Self> {
        let items = images
            .par_iter()
            .map(|s| {
                let image = preprocess(&s.image, config)?;
                let mut ground_truth = Vec::new();
                for (t, masks) in &s.expert_masks {
                    let masks = masks
                        .iter()
                        .map(|m| transform_mask(m, image.crop_box, config.size, config.size))
                        .collect::<Result<Vec<_>>>()?;
                    ground_truth.extend(fuse_expert_masks(&masks, *t)?);
                }
                Ok(LabeledItem {
                    image,
                    label: Label::from_diseased(s.diseased),
                    ground_truth,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset {
            items,
            provenance: Provenance::Synthetic,
        })
    }

    pub fn train_samples(&self) -> Vec<TrainSample> {
        self.items
            .iter()
            .map(|it| TrainSample {
                image: it.image.tensor.clone(),
                label: it.label.index(),
            })
            .collect()
    }
}

/// Writes images, per-annotator masks and the manifest under `dir`.
/// Returns the manifest path.
pub fn write_synthetic(dir: impl AsRef<Path>, images: &[SyntheticImage]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let entries = images
        .par_iter()
        .map(|s| {
            let id = &s.image.id;
            let image = format!("images/{id}.png");
            s.image.save(dir.join(&image))?;
            let mut masks = BTreeMap::new();
            for (t, expert) in &s.expert_masks {
                let mut paths = Vec::new();
                for (k, m) in expert.iter().enumerate() {
                    let rel = format!("masks/{id}_{}_{k}.png", t.code());
                    save_mask(m, dir.join(&rel))?;
                    paths.push(rel);
                }
                masks.insert(*t, paths);
            }
            Ok(ManifestEntry {
                id: id.clone(),
                image,
                label: Label::from_diseased(s.diseased),
                masks,
                source: Some(Provenance::Synthetic),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = dir.join(MANIFEST_FILE);
    Manifest {
        base_dir: dir.to_path_buf(),
        entries,
    }
    .write(&path)?;
    Ok(path)
}
