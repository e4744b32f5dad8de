use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::{DatasetManifest, Image, Label, ManifestEntry, Split, MANIFEST_FILE};
use crate::error::{Error, Result};

pub const INGEST_REPORT_FILE: &str = "ingest_report.json";

#[derive(Clone, Debug, Default, Serialize)]
pub struct IngestReport {
    /// Files that could not be decoded, with the decoder's message.
    pub skipped: Vec<SkippedFile>,
    /// Files dropped because their bytes duplicate an earlier file.
    pub duplicates: usize,
    pub per_class: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Parses `"Normal=NORMAL,Lung Opacity=OPACITY"` into a class map.
pub fn parse_class_map(spec: &str) -> Result<BTreeMap<String, Label>> {
    let mut map = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (dir, label) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("class map entry `{part}` is not `dir=LABEL`")))?;
        map.insert(dir.trim().to_string(), label.parse()?);
    }
    if map.is_empty() {
        return Err(Error::invalid("class map is empty"));
    }
    Ok(map)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Imports `source_dir/<subdir>/*` for every subdirectory named in
/// `class_map`, converting each image to `resolution`-square grayscale PNG
/// under `out_dir/images/`. All entries start in TRAIN; call
/// [`split`](super::split) afterwards.
pub fn ingest(
    source_dir: &Path,
    class_map: &BTreeMap<String, Label>,
    resolution: usize,
    out_dir: &Path,
) -> Result<(DatasetManifest, IngestReport)> {
    if resolution == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    if !source_dir.is_dir() {
        return Err(Error::MissingPath(source_dir.to_path_buf()));
    }
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;

    let mut report = IngestReport::default();
    let mut seen_hashes = HashMap::new();
    let mut used_ids: HashMap<String, usize> = HashMap::new();
    let mut entries = Vec::new();

    for (subdir, &label) in class_map {
        let class_dir = source_dir.join(subdir);
        let mut files: Vec<PathBuf> = if class_dir.is_dir() {
            WalkDir::new(&class_dir)
                .min_depth(1)
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file())
                .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
                .map(|e| e.into_path())
                .collect()
        } else {
            Vec::new()
        };
        files.sort();
        let mut kept = 0;
        for file in files {
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let hash = hex::encode(Sha256::digest(&bytes));
            if seen_hashes.insert(hash, file.clone()).is_some() {
                report.duplicates += 1;
                continue;
            }
            let img = match Image::from_encoded(&bytes, resolution) {
                Ok(img) => img,
                Err(e) => {
                    report.skipped.push(SkippedFile {
                        path: file.clone(),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let mut id = format!("{}_{}", label.as_str().to_ascii_lowercase(), sanitize(&stem));
            let n = used_ids.entry(id.clone()).or_insert(0);
            *n += 1;
            if *n > 1 {
                id = format!("{id}_{n}");
            }
            let rel = format!("images/{id}.png");
            img.save_png(&out_dir.join(&rel))?;
            entries.push(ManifestEntry {
                id,
                path: rel,
                label,
                split: Split::Train,
            });
            kept += 1;
        }
        if kept == 0 {
            return Err(Error::EmptyClass(subdir.clone()));
        }
        *report.per_class.entry(label.as_str().to_string()).or_insert(0) += kept;
    }
    if report.duplicates > 0 {
        log::warn!("dropped {} duplicate files during ingest", report.duplicates);
    }
    let manifest = DatasetManifest::new(resolution, 0, entries)?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    let report_path = out_dir.join(INGEST_REPORT_FILE);
    fs::write(&report_path, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(&report_path, e))?;
    Ok((manifest, report))
}
