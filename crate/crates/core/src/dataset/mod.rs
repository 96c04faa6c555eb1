//! Item catalog, corpus index, stratified splits and example loading.

pub mod catalog;
pub mod index;
pub mod load;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use catalog::{Catalog, CatalogItem};
pub use index::{scan, split_sizes, stratified_split, DatasetIndex, Record, Split};
pub use load::{images_to_tensor, load_example, load_split, LabeledImage, LoadReport, PreprocessCache};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot use {path}: {reason}")]
    Example { path: PathBuf, reason: String },
}

impl DatasetError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}
