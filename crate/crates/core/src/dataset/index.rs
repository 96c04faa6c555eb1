use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::Catalog;
use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(DatasetError::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub path: PathBuf,
    pub item_id: usize,
    pub split: Option<Split>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    path: String,
    item_id: usize,
    split: Split,
}

/// Images of the corpus with their item ids and, once split, their split tags.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetIndex {
    pub records: Vec<Record>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for r in &self.records {
            if r.item_id < classes {
                counts[r.item_id] += 1;
            }
        }
        counts
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    pub fn write_manifest<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            let split = r
                .split
                .ok_or_else(|| DatasetError::Config("manifest export needs a split index".into()))?;
            out.serialize(ManifestRow {
                path: r.path.to_string_lossy().into_owned(),
                item_id: r.item_id,
                split,
            })?;
        }
        out.flush().map_err(|e| DatasetError::io("manifest", e))?;
        Ok(())
    }

    pub fn read_manifest<R: Read>(r: R) -> Result<Self, DatasetError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut records = Vec::new();
        for row in rd.deserialize() {
            let row: ManifestRow = row?;
            records.push(Record {
                path: PathBuf::from(row.path),
                item_id: row.item_id,
                split: Some(row.split),
            });
        }
        Ok(Self { records })
    }

    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
        self.write_manifest(std::io::BufWriter::new(f))
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
        Self::read_manifest(std::io::BufReader::new(f))
    }
}

fn is_hidden(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.'))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let rd = std::fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))?;
    let mut out = Vec::new();
    for e in rd {
        let p = e.map_err(|e| DatasetError::io(dir, e))?.path();
        if !is_hidden(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

// Format sniffing plus header parse; truncated pixel data surfaces later as
// a quarantined record.
fn decodable(path: &Path) -> bool {
    image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .ok()
        .and_then(|r| r.into_dimensions().ok())
        .is_some_and(|(w, h)| w > 0 && h > 0)
}

/// Indexes `root/<dir>/<image>` for every catalog item, in sorted path order.
pub fn scan(root: impl AsRef<Path>, catalog: &Catalog) -> Result<DatasetIndex, DatasetError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(DatasetError::Config(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let entries = sorted_entries(root)?;
    if entries.is_empty() {
        return Err(DatasetError::Config(format!(
            "dataset root {} is empty",
            root.display()
        )));
    }
    for p in entries.iter().filter(|p| p.is_dir()) {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if catalog.by_dir(name).is_none() {
            log::warn!("ignoring directory {} (not in catalog)", p.display());
        }
    }
    let mut records = Vec::new();
    for item in &catalog.items {
        let dir = root.join(&item.dir);
        if !dir.is_dir() {
            return Err(DatasetError::Config(format!(
                "missing directory {} for item {} ({})",
                dir.display(),
                item.id,
                item.name
            )));
        }
        let mut n = 0;
        for p in sorted_entries(&dir)? {
            if !p.is_file() {
                continue;
            }
            if decodable(&p) {
                records.push(Record {
                    path: p,
                    item_id: item.id,
                    split: None,
                });
                n += 1;
            } else {
                log::warn!("skipping undecodable file {}", p.display());
            }
        }
        log::info!("item {} ({}): {n} images", item.id, item.dir);
    }
    Ok(DatasetIndex { records })
}

/// Per-split sizes for a class of `n` images: floor, floor, remainder.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> (usize, usize, usize) {
    // tolerance keeps products such as 0.29 * 100 from flooring one short
    let train = (fractions.0 * n as f64 + 1e-9).floor() as usize;
    let val = ((fractions.1 * n as f64 + 1e-9).floor() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Per class, shuffles by `seed` and tags floor(f0 n) train, floor(f1 n) val
/// and the remainder test.
pub fn stratified_split(
    index: &DatasetIndex,
    classes: usize,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetIndex, DatasetError> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Config(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    let mut out = index.clone();
    for class in 0..classes {
        let mut members: Vec<usize> = (0..out.records.len())
            .filter(|&i| out.records[i].item_id == class)
            .collect();
        if members.len() < 3 {
            return Err(DatasetError::Config(format!(
                "item {class} has {} images; at least 3 are needed",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        members.shuffle(&mut rng);
        let (nt, nv, _) = split_sizes(members.len(), fractions);
        for (k, &i) in members.iter().enumerate() {
            out.records[i].split = Some(if k < nt {
                Split::Train
            } else if k < nt + nv {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    if let Some(r) = out.records.iter().find(|r| r.item_id >= classes) {
        return Err(DatasetError::Config(format!(
            "record {} has unknown item {}",
            r.path.display(),
            r.item_id
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_rule() {
        let f = (0.65, 0.25, 0.10);
        assert_eq!(split_sizes(310, f), (201, 77, 32));
        assert_eq!(split_sizes(10, f), (6, 2, 2));
        assert_eq!(split_sizes(3, f), (1, 0, 2));
        assert_eq!(split_sizes(100, (0.29, 0.71, 0.0)), (29, 71, 0));
    }

    fn synthetic_index(per_class: &[usize]) -> DatasetIndex {
        let records = per_class
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| {
                (0..n).map(move |i| Record {
                    path: PathBuf::from(format!("c{c}/{i:04}.png")),
                    item_id: c,
                    split: None,
                })
            })
            .collect();
        DatasetIndex { records }
    }

    #[test]
    fn split_is_deterministic_partition() {
        let idx = synthetic_index(&[310, 10, 17]);
        let a = stratified_split(&idx, 3, (0.65, 0.25, 0.10), 9).unwrap();
        let b = stratified_split(&idx, 3, (0.65, 0.25, 0.10), 9).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&idx, 3, (0.65, 0.25, 0.10), 10).unwrap();
        assert_ne!(a, c);
        assert!(a.records.iter().all(|r| r.split.is_some()));
        let count = |s, k| a.split(s).filter(|r| r.item_id == k).count();
        assert_eq!(
            (count(Split::Train, 0), count(Split::Val, 0), count(Split::Test, 0)),
            (201, 77, 32)
        );
        assert_eq!(
            (count(Split::Train, 1), count(Split::Val, 1), count(Split::Test, 1)),
            (6, 2, 2)
        );
    }

    #[test]
    fn split_errors() {
        let idx = synthetic_index(&[5, 2]);
        assert!(matches!(
            stratified_split(&idx, 2, (0.65, 0.25, 0.10), 0),
            Err(DatasetError::Config(_))
        ));
        let idx = synthetic_index(&[5]);
        assert!(stratified_split(&idx, 1, (0.5, 0.25, 0.10), 0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let idx = stratified_split(&synthetic_index(&[4, 6]), 2, (0.65, 0.25, 0.10), 1).unwrap();
        let mut buf = Vec::new();
        idx.write_manifest(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("path,item_id,split\n"));
        assert_eq!(DatasetIndex::read_manifest(&buf[..]).unwrap(), idx);
        assert!(synthetic_index(&[3]).write_manifest(Vec::new()).is_err());
    }
}
