use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::nn::{Real, Tensor};
use crate::preprocess::{preprocess, PipelineConfig};
use crate::raster::Raster;

use super::index::{DatasetIndex, Record, Split};
use super::DatasetError;

/// A preprocessed network input and its item id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Raster,
    pub label: usize,
}

impl LabeledImage {
    pub fn one_hot<T: Real>(&self, classes: usize) -> Vec<T> {
        let mut v = vec![T::zero(); classes];
        v[self.label] = T::one();
        v
    }
}

/// Stacks RGB rasters into an `[N, 3, H, W]` tensor scaled to `[0, 1]`.
pub fn images_to_tensor<T: Real>(images: &[&Raster]) -> Tensor<T> {
    let (h, w) = images.first().map_or((0, 0), |i| (i.height(), i.width()));
    let plane = h * w;
    let scale = T::of(1.0 / 255.0);
    let mut data = vec![T::zero(); images.len() * 3 * plane];
    for (n, img) in images.iter().enumerate() {
        assert_eq!(
            (img.height(), img.width(), img.channels()),
            (h, w, 3),
            "mixed image sizes"
        );
        let base = n * 3 * plane;
        for (i, px) in img.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[base + c * plane + i] = T::of(px[c] as f64) * scale;
            }
        }
    }
    Tensor::new(vec![images.len(), 3, h, w], data).expect("sizes computed above")
}

/// On-disk store of pipeline outputs keyed by source bytes and pipeline
/// configuration.
#[derive(Debug, Clone)]
pub struct PreprocessCache {
    dir: PathBuf,
}

impl PreprocessCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn entry(&self, source: &[u8], cfg: &PipelineConfig) -> PathBuf {
        let key = hex::encode(Sha256::digest(source));
        self.dir.join(cfg.fingerprint()).join(format!("{key}.png"))
    }

    fn get(&self, path: &Path) -> Option<Raster> {
        Raster::open(path).ok()
    }

    fn put(&self, path: &Path, img: &Raster) {
        let tmp = path.with_extension("tmp");
        let res = path
            .parent()
            .map_or(Ok(()), std::fs::create_dir_all)
            .map_err(|e| e.to_string())
            .and_then(|_| img.save_png(&tmp).map_err(|e| e.to_string()))
            .and_then(|_| std::fs::rename(&tmp, path).map_err(|e| e.to_string()));
        if let Err(e) = res {
            log::warn!("cache write {} failed: {e}", path.display());
        }
    }
}

/// Decodes and preprocesses one record, going through `cache` when given.
pub fn load_example(
    record: &Record,
    cfg: &PipelineConfig,
    cache: Option<&PreprocessCache>,
) -> Result<LabeledImage, DatasetError> {
    let bytes = std::fs::read(&record.path).map_err(|e| DatasetError::io(&record.path, e))?;
    let entry = cache.map(|c| (c, c.entry(&bytes, cfg)));
    if let Some((c, path)) = &entry {
        if let Some(image) = c.get(path) {
            return Ok(LabeledImage {
                image,
                label: record.item_id,
            });
        }
    }
    let frame = Raster::decode(&bytes).map_err(|e| DatasetError::Example {
        path: record.path.clone(),
        reason: e.to_string(),
    })?;
    let image = preprocess(&frame, cfg).map_err(|e| DatasetError::Example {
        path: record.path.clone(),
        reason: e.to_string(),
    })?;
    if let Some((c, path)) = &entry {
        c.put(path, &image);
    }
    Ok(LabeledImage {
        image,
        label: record.item_id,
    })
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub examples: Vec<LabeledImage>,
    /// Records that failed to decode or preprocess, with the reason.
    pub quarantined: Vec<(PathBuf, String)>,
}

/// Loads every record of one split; failing records are quarantined.
pub fn load_split(
    index: &DatasetIndex,
    split: Split,
    cfg: &PipelineConfig,
    cache: Option<&PreprocessCache>,
) -> Result<LoadReport, DatasetError> {
    let mut report = LoadReport::default();
    for r in index.split(split) {
        match load_example(r, cfg, cache) {
            Ok(ex) => report.examples.push(ex),
            Err(DatasetError::Example { path, reason }) => {
                log::warn!("quarantined {}: {reason}", path.display());
                report.quarantined.push((path, reason));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}
