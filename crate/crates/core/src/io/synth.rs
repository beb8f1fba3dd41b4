//! Synthetic fine-grained dataset: superclass anchors with small per-class offsets.
//!
//! A class is a coefficient vector over per-channel radial cosine profiles
//! `cos(kπr)` (r = distance from the image center over the half-diagonal).
//! Radial profiles survive flips and small rotations, so the train-time
//! augmentations perturb but do not destroy class identity. Each fine class
//! sits `fine_offset` away from its superclass anchor along mutually
//! orthogonal directions, so sibling classes are equidistant.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Manifest, MANIFEST};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Radial basis functions per channel, `cos(kπr)` for `k = 1..=RADIAL_TERMS`.
/// The constant term is left out so overall brightness carries no class signal.
pub const RADIAL_TERMS: usize = 4;
const ANCHOR_RANGE: f64 = 0.1;
const ANCHOR_TRIES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub superclasses: usize,
    pub fine_per_superclass: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Distance of each fine class from its superclass anchor, in coefficient space.
    pub fine_offset: f64,
    /// Per-pixel Gaussian noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            superclasses: 4,
            fine_per_superclass: 5,
            train_per_class: 100,
            val_per_class: 50,
            test_per_class: 50,
            channels: 3,
            height: 32,
            width: 32,
            fine_offset: 0.1,
            noise: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn classes(&self) -> usize {
        self.superclasses * self.fine_per_superclass
    }

    fn feature_dim(&self) -> usize {
        self.channels * RADIAL_TERMS
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::SpecInvalid(m.to_string()));
        if self.superclasses < 1 {
            return bad("need at least one superclass");
        }
        if self.fine_per_superclass < 2 {
            return bad("need at least two fine classes per superclass");
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return bad("image dimensions must be positive");
        }
        if !(self.fine_offset > 0.0) || !(self.noise >= 0.0) {
            return bad("fine offset must be positive and noise non-negative");
        }
        if self.fine_per_superclass > self.feature_dim() {
            return bad("more fine classes per superclass than prototype dimensions");
        }
        Ok(())
    }
}

/// The generated splits plus the class prototypes that produced them.
pub struct Generated {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// One rendered noise-free image per class, `K×C×H×W`.
    pub prototypes: Tensor,
}

fn radial_basis(spec: &SyntheticDatasetSpec) -> Vec<f64> {
    let (h, w) = (spec.height, spec.width);
    let cy = (h - 1) as f64 / 2.0;
    let cx = (w - 1) as f64 / 2.0;
    let half_diag = (cy * cy + cx * cx).sqrt().max(1.0);
    let mut basis = vec![0.0; RADIAL_TERMS * h * w];
    for y in 0..h {
        for x in 0..w {
            let r = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt() / half_diag;
            for k in 0..RADIAL_TERMS {
                basis[k * h * w + y * w + x] = ((k + 1) as f64 * std::f64::consts::PI * r).cos();
            }
        }
    }
    basis
}

fn render(coeffs: &[f64], basis: &[f64], spec: &SyntheticDatasetSpec) -> Vec<f64> {
    let plane = spec.height * spec.width;
    let mut img = vec![0.5; spec.channels * plane];
    for c in 0..spec.channels {
        for k in 0..RADIAL_TERMS {
            let a = coeffs[c * RADIAL_TERMS + k];
            for (p, b) in img[c * plane..(c + 1) * plane].iter_mut().zip(&basis[k * plane..(k + 1) * plane]) {
                *p += a * b;
            }
        }
    }
    img
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Orthonormal directions by Gram-Schmidt on Gaussian draws.
fn orthonormal<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for u in &out {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n2 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n2 > 1e-6 {
            out.push(v.into_iter().map(|a| a / n2).collect());
        }
    }
    out
}

/// Class coefficient vectors, superclass-major.
fn class_prototypes<R: Rng>(spec: &SyntheticDatasetSpec, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let dim = spec.feature_dim();
    // Sibling classes are fine_offset·√2 apart; keep anchors further apart than that.
    let min_sep = 2.0 * spec.fine_offset;
    let mut anchors = None;
    for _ in 0..ANCHOR_TRIES {
        let cand: Vec<Vec<f64>> = (0..spec.superclasses)
            .map(|_| (0..dim).map(|_| rng.random_range(-ANCHOR_RANGE..ANCHOR_RANGE)).collect())
            .collect();
        let ok = (0..cand.len()).all(|i| ((i + 1)..cand.len()).all(|j| distance(&cand[i], &cand[j]) > min_sep));
        if ok {
            anchors = Some(cand);
            break;
        }
    }
    let anchors = anchors.ok_or_else(|| {
        Error::SpecInvalid(format!("could not place {} superclasses {min_sep} apart", spec.superclasses))
    })?;
    let mut classes = Vec::with_capacity(spec.classes());
    for anchor in &anchors {
        for dir in orthonormal(spec.fine_per_superclass, dim, rng) {
            classes.push(anchor.iter().zip(&dir).map(|(a, d)| a + spec.fine_offset * d).collect());
        }
    }
    Ok(classes)
}

pub fn generate(spec: &SyntheticDatasetSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let protos = class_prototypes(spec, &mut rng)?;
    let basis = radial_basis(spec);
    let rendered: Vec<Vec<f64>> = protos.iter().map(|p| render(p, &basis, spec)).collect();
    let noise = Normal::new(0.0, spec.noise.max(0.0)).unwrap();
    let (c, h, w) = (spec.channels, spec.height, spec.width);

    let mut split = |per_class: usize| -> Dataset {
        let n = per_class * rendered.len();
        let mut data = Vec::with_capacity(n * c * h * w);
        let mut labels = Vec::with_capacity(n);
        for (label, proto) in rendered.iter().enumerate() {
            for _ in 0..per_class {
                if spec.noise == 0.0 {
                    data.extend_from_slice(proto);
                } else {
                    data.extend(proto.iter().map(|&p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0)));
                }
                labels.push(label);
            }
        }
        Dataset {
            images: Tensor::from_parts(vec![n, c, h, w], data),
            labels,
        }
    };
    let train = split(spec.train_per_class);
    let val = split(spec.val_per_class);
    let test = split(spec.test_per_class);
    let prototypes = Tensor::from_parts(vec![rendered.len(), c, h, w], rendered.concat());
    Ok(Generated { train, val, test, prototypes })
}

/// Writes `train.fgfd`, `val.fgfd`, `test.fgfd` and the manifest into `dir`.
pub fn write_dataset_dir(spec: &SyntheticDatasetSpec, generated: &Generated, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::File { path: dir.to_path_buf(), source })?;
    let mut splits = Vec::new();
    for (name, data) in [("train", &generated.train), ("val", &generated.val), ("test", &generated.test)] {
        let file = format!("{name}.fgfd");
        data.save(&dir.join(&file))?;
        splits.push((name.to_string(), file, data.len()));
    }
    let manifest = Manifest {
        classes: spec.classes(),
        superclasses: spec.superclasses,
        fine_per_superclass: spec.fine_per_superclass,
        seed: spec.seed,
        splits,
    };
    super::write_file(&dir.join(MANIFEST), manifest.render())?;
    Ok(())
}

/// Predicts the class whose noise-free rendering is nearest in pixel space.
pub fn nearest_prototype(prototypes: &Tensor, images: &Tensor) -> Vec<usize> {
    images
        .rows()
        .map(|img| {
            let mut best = (0, f64::INFINITY);
            for (k, p) in prototypes.rows().enumerate() {
                let d = distance(img, p);
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticDatasetSpec {
        SyntheticDatasetSpec { train_per_class: 6, val_per_class: 2, test_per_class: 3, height: 12, width: 12, ..Default::default() }
    }

    #[test]
    fn counts_and_labels() {
        let spec = SyntheticDatasetSpec { train_per_class: 100, val_per_class: 1, test_per_class: 1, height: 4, width: 4, ..Default::default() };
        let g = generate(&spec).unwrap();
        assert_eq!(g.train.len(), 2000);
        let mut counts = [0usize; 20];
        g.train.labels.iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c == 100));
    }

    #[test]
    fn noiseless_images_are_identical_within_class() {
        let g = generate(&SyntheticDatasetSpec { noise: 0.0, ..small() }).unwrap();
        for i in 0..g.train.len() {
            assert_eq!(g.train.images.row(i), g.prototypes.row(g.train.labels[i]));
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.train.to_bytes(), b.train.to_bytes());
        assert_eq!(a.test.to_bytes(), b.test.to_bytes());
        let c = generate(&SyntheticDatasetSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.train.to_bytes(), c.train.to_bytes());
    }

    #[test]
    fn values_in_unit_range() {
        let g = generate(&SyntheticDatasetSpec { noise: 0.5, ..small() }).unwrap();
        assert!(g.train.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn low_noise_is_perfectly_separable() {
        let spec = SyntheticDatasetSpec { noise: 0.25 * 0.04, ..small() };
        let g = generate(&spec).unwrap();
        for d in [&g.train, &g.test] {
            assert_eq!(nearest_prototype(&g.prototypes, &d.images), d.labels);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(matches!(generate(&SyntheticDatasetSpec { fine_per_superclass: 1, ..small() }), Err(Error::SpecInvalid(_))));
        assert!(matches!(generate(&SyntheticDatasetSpec { superclasses: 0, ..small() }), Err(Error::SpecInvalid(_))));
        // Anchors cannot be 2·offset apart inside the anchor box.
        assert!(matches!(generate(&SyntheticDatasetSpec { fine_offset: 10.0, ..small() }), Err(Error::SpecInvalid(_))));
    }
}
