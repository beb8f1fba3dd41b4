//! Persistent formats and the synthetic data generator.

pub mod checkpoint;
pub mod logits;
pub mod dataset;
pub mod synth;

pub use checkpoint::Checkpoint;
pub use dataset::{DataDir, Dataset, Manifest};
pub use synth::{generate, write_dataset_dir, Generated, SyntheticDatasetSpec};

use std::path::Path;

use crate::error::{Error, Result};

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::File { path: path.to_path_buf(), source }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(file_error(path))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(file_error(path))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(file_error(path))
}
