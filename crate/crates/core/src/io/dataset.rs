//! In-memory datasets and the `FGFD` binary format.
//!
//! Layout (all little-endian): magic `FGFD`, version `u32`, `N C H W` as
//! `u32`, `N·C·H·W` `f64` pixels, then `N` `u32` labels. A directory of
//! splits carries a `manifest.txt` sidecar naming each split file.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FGFD";
const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `N×C×H×W`
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        if images.ndim() != 4 {
            return Err(Error::ShapeMismatch(format!("dataset images must be N×C×H×W, got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::LengthMismatch { left: images.shape()[0], right: labels.len() });
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(C, H, W)`
    pub fn image_dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    /// One image as a `C×H×W` tensor.
    pub fn image(&self, i: usize) -> Tensor {
        let (c, h, w) = self.image_dims();
        Tensor::from_parts(vec![c, h, w], self.images.row(i).to_vec())
    }

    /// Smallest class count consistent with the labels.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (c, h, w) = self.image_dims();
        let mut out = Vec::with_capacity(24 + self.images.len() * 8 + self.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in [self.len(), c, h, w] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.images.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: &str| Error::CorruptFile { path: path.to_path_buf(), reason: reason.to_string() };
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing FGFD header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let version = word(0);
        if version != VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let (n, c, h, w) = (word(1) as usize, word(2) as usize, word(3) as usize, word(4) as usize);
        let pixels = n * c * h * w;
        if bytes.len() != 24 + pixels * 8 + n * 4 {
            return Err(corrupt("length does not match header dimensions"));
        }
        let data: Vec<f64> = bytes[24..24 + pixels * 8]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let labels = bytes[24 + pixels * 8..]
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .collect();
        let images = Tensor::new(vec![n, c, h, w], data).map_err(|e| corrupt(&e.to_string()))?;
        Dataset::new(images, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_file(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&super::read_bytes(path)?, path)
    }
}

/// Split names and class structure of a generated dataset directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub classes: usize,
    pub superclasses: usize,
    pub fine_per_superclass: usize,
    pub seed: u64,
    /// `(name, file, count)`
    pub splits: Vec<(String, String, usize)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = format!("format FGFD {VERSION}\n");
        s += &format!("classes {}\n", self.classes);
        s += &format!("superclasses {}\n", self.superclasses);
        s += &format!("fine_per_superclass {}\n", self.fine_per_superclass);
        s += &format!("seed {}\n", self.seed);
        for (name, file, count) in &self.splits {
            s += &format!("split {name} {file} {count}\n");
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, reason: &str| Error::ParseError { path: path.to_path_buf(), line, reason: reason.into() };
        let mut m = Manifest { classes: 0, superclasses: 0, fine_per_superclass: 0, seed: 0, splits: vec![] };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let fields: Vec<&str> = raw.split_whitespace().collect();
            let num = |k: usize| -> Result<u64> {
                fields.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| err(line, "expected an integer"))
            };
            match fields.first().copied() {
                None => {}
                Some("format") => {
                    if fields.get(1) != Some(&"FGFD") {
                        return Err(err(line, "unknown format"));
                    }
                }
                Some("classes") => m.classes = num(1)? as usize,
                Some("superclasses") => m.superclasses = num(1)? as usize,
                Some("fine_per_superclass") => m.fine_per_superclass = num(1)? as usize,
                Some("seed") => m.seed = num(1)?,
                Some("split") if fields.len() == 4 => {
                    m.splits.push((fields[1].to_string(), fields[2].to_string(), num(3)? as usize))
                }
                Some(other) => return Err(err(line, &format!("unexpected entry {other:?}"))),
            }
        }
        Ok(m)
    }
}

/// A generated dataset directory: manifest plus one file per split.
#[derive(Clone, Debug)]
pub struct DataDir {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl DataDir {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let manifest = Manifest::parse(&super::read_text(&path)?, &path)?;
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn split_path(&self, name: &str) -> Result<PathBuf> {
        self.manifest
            .splits
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, f, _)| self.root.join(f))
            .ok_or_else(|| Error::ConfigInvalid(format!("no split named {name:?} in {}", self.root.display())))
    }

    pub fn load_split(&self, name: &str) -> Result<Dataset> {
        Dataset::load(&self.split_path(name)?)
    }
}
