use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Image, Label, Split};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Image path relative to the directory holding the manifest.
    pub path: String,
    pub label: Label,
    pub split: Split,
}

/// One loaded image with its label and split assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub image: Image,
    pub label: Label,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub resolution: usize,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(resolution: usize, seed: u64, entries: Vec<ManifestEntry>) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::invalid("resolution must be positive"));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::invalid(format!("duplicate id `{}` in manifest", e.id)));
            }
        }
        Ok(DatasetManifest { resolution, seed, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.entries
            .iter()
            .filter(|e| e.split == split && e.label == label)
            .count()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn count_split(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// Per-split, per-class counts; they always sum to [`len`](Self::len).
    pub fn counts(&self) -> BTreeMap<(Split, Label), usize> {
        let mut out = BTreeMap::new();
        for s in Split::ALL {
            for l in Label::ALL {
                out.insert((s, l), 0);
            }
        }
        for e in &self.entries {
            *out.get_mut(&(e.split, e.label)).unwrap() += 1;
        }
        out
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn find(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn load_image(&self, root: &Path, entry: &ManifestEntry) -> Result<Image> {
        let img = Image::load_png(&root.join(&entry.path), self.resolution)?;
        debug_assert!(img.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
        Ok(img)
    }

    /// Loads every image of `split`, in manifest order.
    pub fn load_split(&self, root: &Path, split: Split) -> Result<Vec<ImageSample>> {
        self.entries_in(split)
            .map(|e| {
                Ok(ImageSample {
                    id: e.id.clone(),
                    image: self.load_image(root, e)?,
                    label: e.label,
                    split: e.split,
                })
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
        w.write_record(["id", "path", "label", "split"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.id.as_str(), e.path.as_str(), e.label.as_str(), e.split.as_str()])
                .expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
        format!("#resolution={} seed={}\n{}", self.resolution, self.seed, body)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |d: String| Error::format("manifest", d);
        let (meta, body) = text
            .split_once('\n')
            .ok_or_else(|| bad("missing metadata line".into()))?;
        let meta = meta
            .trim_end_matches('\r')
            .strip_prefix('#')
            .ok_or_else(|| bad("first line must start with `#`".into()))?;
        let (mut resolution, mut seed) = (None, None);
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("resolution", v)) => resolution = v.parse().ok(),
                Some(("seed", v)) => seed = v.parse().ok(),
                _ => return Err(bad(format!("unexpected metadata `{kv}`"))),
            }
        }
        let resolution = resolution.ok_or_else(|| bad("missing resolution".into()))?;
        let seed = seed.ok_or_else(|| bad("missing seed".into()))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?;
        if headers != vec!["id", "path", "label", "split"] {
            return Err(bad(format!("unexpected header {headers:?}")));
        }
        let mut entries = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            entries.push(ManifestEntry {
                id: rec[0].to_string(),
                path: rec[1].to_string(),
                label: rec[2].parse()?,
                split: rec[3].parse()?,
            });
        }
        DatasetManifest::new(resolution, seed, entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DatasetManifest::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(id: &str, label: Label, split: Split) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            path: format!("images/{id}.png"),
            label,
            split,
        }
    }

    #[test]
    fn text_format_layout() {
        let m = DatasetManifest::new(64, 7, vec![entry("a", Label::Normal, Split::Train)]).unwrap();
        let text = m.to_text();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("#resolution=64 seed=7"));
        assert_eq!(lines.next(), Some("id,path,label,split"));
        assert_eq!(lines.next(), Some("a,images/a.png,NORMAL,TRAIN"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = entry("a", Label::Normal, Split::Train);
        assert!(DatasetManifest::new(8, 0, vec![e.clone(), e]).is_err());
    }

    #[test]
    fn counts_sum_to_total() {
        let m = DatasetManifest::new(
            8,
            0,
            vec![
                entry("a", Label::Normal, Split::Train),
                entry("b", Label::Opacity, Split::Test),
                entry("c", Label::Opacity, Split::Test),
            ],
        )
        .unwrap();
        assert_eq!(m.counts().values().sum::<usize>(), 3);
        assert_eq!(m.count(Split::Test, Label::Opacity), 2);
    }

    proptest! {
        #[test]
        fn manifest_text_round_trip(
            res in 1usize..1024,
            seed in any::<u64>(),
            rows in proptest::collection::vec((any::<bool>(), 0usize..3, "[a-z ,\"]{0,8}"), 0..20),
        ) {
            let entries = rows.iter().enumerate().map(|(i, (opacity, s, path))| ManifestEntry {
                id: format!("id{i}"),
                path: path.clone(),
                label: if *opacity { Label::Opacity } else { Label::Normal },
                split: Split::ALL[*s],
            }).collect();
            let m = DatasetManifest::new(res, seed, entries).unwrap();
            prop_assert_eq!(DatasetManifest::from_text(&m.to_text()).unwrap(), m);
        }
    }
}
