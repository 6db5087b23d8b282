use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_wav, AudioClip, ClassLabel};
use crate::error::{Error, Result};

/// Which sub-directory of a corpus root holds which class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDirMap {
    #[serde(rename = "SM")]
    pub spiritual: String,
    #[serde(rename = "M")]
    pub music: String,
    #[serde(rename = "NS")]
    pub normal: String,
}

impl Default for ClassDirMap {
    fn default() -> Self {
        ClassDirMap {
            spiritual: "Spiritual".into(),
            music: "Music".into(),
            normal: "Normal".into(),
        }
    }
}

impl ClassDirMap {
    pub fn dir(&self, label: ClassLabel) -> &str {
        match label {
            ClassLabel::SpiritualMeditation => &self.spiritual,
            ClassLabel::Music => &self.music,
            ClassLabel::NormalSilence => &self.normal,
        }
    }

    pub fn label_of(&self, dir: &str) -> Option<ClassLabel> {
        ClassLabel::ALL.into_iter().find(|l| self.dir(*l) == dir)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's base directory, `/`-separated.
    pub path: String,
    pub label: ClassLabel,
    pub duration_s: f64,
    pub rate: u32,
}

impl ManifestEntry {
    /// Clip id: the relative path without its `.wav` extension.
    pub fn id(&self) -> &str {
        self.path
            .strip_suffix(".wav")
            .or_else(|| self.path.strip_suffix(".WAV"))
            .unwrap_or(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub counts: BTreeMap<ClassLabel, usize>,
    /// Directory that entry paths are relative to.
    #[serde(skip)]
    pub base: PathBuf,
}

impl CorpusManifest {
    pub fn new(base: impl Into<PathBuf>, mut entries: Vec<ManifestEntry>) -> Self {
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let mut counts = BTreeMap::new();
        for e in &entries {
            *counts.entry(e.label).or_insert(0) += 1;
        }
        CorpusManifest {
            entries,
            counts,
            base: base.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base.join(entry.path.replace('/', std::path::MAIN_SEPARATOR_STR))
    }

    /// Load one entry, tagging it with its label and id.
    pub fn load_clip(&self, entry: &ManifestEntry) -> Result<AudioClip> {
        load_wav(&self.resolve(entry))
            .map(|c| c.with_label(entry.label).with_id(entry.id()))
            .map_err(|e| e.for_clip(entry.id()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Load a manifest; entry paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: CorpusManifest = serde_json::from_str(&text)
            .map_err(|e| Error::malformed(path.display().to_string(), e))?;
        let total: usize = m.counts.values().sum();
        if total != m.entries.len() {
            return Err(Error::malformed(
                path.display().to_string(),
                format!("counts sum to {total} but {} entries", m.entries.len()),
            ));
        }
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }
}

fn is_wav(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Enumerate `root/<class dir>/*.wav` into a sorted manifest.
///
/// Sub-directories of `root` that are not mapped to a class are skipped with
/// a warning.
pub fn build_manifest(root: &Path, dirs: &ClassDirMap) -> Result<CorpusManifest> {
    if !root.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "corpus root {} is not a directory",
            root.display()
        )));
    }
    let listing = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut subdirs: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in &subdirs {
        let name = d.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if dirs.label_of(name).is_none() {
            log::warn!("skipping unmapped directory {}", d.display());
        }
    }

    let mut entries = Vec::new();
    for label in ClassLabel::ALL {
        let dir_name = dirs.dir(label);
        let dir = root.join(dir_name);
        if !dir.is_dir() {
            return Err(Error::InvalidArgument(format!(
                "class directory {} does not exist",
                dir.display()
            )));
        }
        let files = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for f in files {
            let f = f.map_err(|e| Error::io(&dir, e))?;
            let path = f.path();
            if !path.is_file() || !is_wav(&path) {
                continue;
            }
            let reader = hound::WavReader::open(&path).map_err(|e| Error::Wav {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let spec = reader.spec();
            let frames = reader.duration();
            let file_name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
                Error::InvalidArgument(format!("non-UTF-8 file name {}", path.display()))
            })?;
            entries.push(ManifestEntry {
                path: format!("{dir_name}/{file_name}"),
                label,
                duration_s: f64::from(frames) / f64::from(spec.sample_rate),
                rate: spec.sample_rate,
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    Ok(CorpusManifest::new(root, entries))
}
