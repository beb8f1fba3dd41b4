//! Additive angular margin head.

use serde::{Deserialize, Serialize};

use super::{check_labels, hard_ce, LossOutput, MixedTargets};
use crate::error::{Error, Result};
use crate::numerics::{clamp_cos, normalize_slice};
use crate::tensor::{dot, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcFaceConfig {
    /// Additive angle on the target class, radians.
    pub margin: f64,
    pub scale: f64,
}

impl Default for ArcFaceConfig {
    fn default() -> Self {
        Self { margin: 0.2, scale: 32.0 }
    }
}

impl ArcFaceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.margin) {
            return Err(Error::ConfigInvalid(format!("arcface margin {} not in [0, pi/2)", self.margin)));
        }
        if !(self.scale > 0.0) {
            return Err(Error::ConfigInvalid(format!("arcface scale {} must be positive", self.scale)));
        }
        Ok(())
    }

    /// `(s·φ(c), d(s·φ)/dc)` for a target-class cosine.
    ///
    /// φ(c) = cos(θ + m) while θ + m stays below π; past that point the
    /// linear fallback `c - m·sin m` keeps the logit monotone in c.
    pub(crate) fn target_logit(&self, c: f64) -> (f64, f64) {
        let (cos_m, sin_m) = (self.margin.cos(), self.margin.sin());
        let threshold = (std::f64::consts::PI - self.margin).cos();
        let cc = clamp_cos(c);
        let (phi, dphi) = if cc > threshold {
            let sin_t = (1.0 - cc * cc).sqrt();
            (cc * cos_m - sin_t * sin_m, cos_m + cc * sin_m / sin_t)
        } else {
            (cc - self.margin * sin_m, 1.0)
        };
        let dphi = if cc != c { 0.0 } else { dphi };
        (self.scale * phi, self.scale * dphi)
    }
}

/// Row-normalized embeddings and class weights with their cosine matrix.
pub(crate) struct CosineTable {
    pub b: usize,
    pub k: usize,
    pub d: usize,
    pub xhat: Vec<f64>,
    pub xnorm: Vec<f64>,
    pub what: Vec<f64>,
    pub wnorm: Vec<f64>,
    pub cos: Vec<f64>,
}

impl CosineTable {
    pub fn new(emb: &Tensor, class_weights: &Tensor) -> Result<Self> {
        let (b, d) = emb.dims2()?;
        let (k, dw) = class_weights.dims2()?;
        if d != dw {
            return Err(Error::ShapeMismatch(format!(
                "embedding dim {d} vs class weight dim {dw}"
            )));
        }
        let (xhat, xnorm) = normalize_rows(emb)?;
        let (what, wnorm) = normalize_rows(class_weights)?;
        let mut cos = vec![0.0; b * k];
        for i in 0..b {
            for j in 0..k {
                cos[i * k + j] = dot(&xhat[i * d..(i + 1) * d], &what[j * d..(j + 1) * d]);
            }
        }
        Ok(Self { b, k, d, xhat, xnorm, what, wnorm, cos })
    }

    /// Backpropagates `dL/dcos` into the raw embeddings and class weights.
    pub fn backward(&self, dcos: &[f64]) -> (Tensor, Tensor) {
        let (b, k, d) = (self.b, self.k, self.d);
        let mut gx = vec![0.0; b * d];
        let mut gw = vec![0.0; k * d];
        for i in 0..b {
            let xi = &self.xhat[i * d..(i + 1) * d];
            let gxi = &mut gx[i * d..(i + 1) * d];
            let mut radial = 0.0;
            for j in 0..k {
                let g = dcos[i * k + j];
                if g == 0.0 {
                    continue;
                }
                let c = self.cos[i * k + j];
                radial += g * c;
                let wj = &self.what[j * d..(j + 1) * d];
                for t in 0..d {
                    gxi[t] += g * wj[t];
                }
                let gwj = &mut gw[j * d..(j + 1) * d];
                for t in 0..d {
                    gwj[t] += g * (xi[t] - c * wj[t]) / self.wnorm[j];
                }
            }
            for t in 0..d {
                gxi[t] = (gxi[t] - radial * xi[t]) / self.xnorm[i];
            }
        }
        (Tensor::from_parts(vec![b, d], gx), Tensor::from_parts(vec![k, d], gw))
    }
}

pub(crate) fn normalize_rows(t: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut unit = Vec::with_capacity(t.len());
    let mut norms = Vec::new();
    for row in t.rows() {
        let (u, n) = normalize_slice(row)?;
        unit.extend(u);
        norms.push(n);
    }
    Ok((unit, norms))
}

fn margin_logits(table: &CosineTable, labels: &[usize], cfg: &ArcFaceConfig) -> (Vec<f64>, Vec<f64>) {
    let k = table.k;
    let mut logits: Vec<f64> = table.cos.iter().map(|c| cfg.scale * c).collect();
    let mut target_slope = vec![0.0; labels.len()];
    for (i, &y) in labels.iter().enumerate() {
        let (z, dz) = cfg.target_logit(table.cos[i * k + y]);
        logits[i * k + y] = z;
        target_slope[i] = dz;
    }
    (logits, target_slope)
}

/// Scaled cosine logits with the angular margin applied to each row's target column.
pub fn arcface_logits(
    embeddings: &Tensor,
    class_weights: &Tensor,
    labels: &[usize],
    cfg: &ArcFaceConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    let table = CosineTable::new(embeddings, class_weights)?;
    check_labels(labels, table.b, Some(table.k))?;
    let (logits, _) = margin_logits(&table, labels, cfg);
    Ok(Tensor::from_parts(vec![table.b, table.k], logits))
}

fn weighted_terms(
    table: &CosineTable,
    labels: &[usize],
    row_weights: Option<&[f64]>,
    cfg: &ArcFaceConfig,
    dcos: &mut [f64],
) -> f64 {
    let k = table.k;
    let (logits, slope) = margin_logits(table, labels, cfg);
    let (value, dz) = hard_ce(&logits, k, labels, row_weights);
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..k {
            let s = if j == y { slope[i] } else { cfg.scale };
            dcos[i * k + j] += dz[i * k + j] * s;
        }
    }
    value
}

/// Mean cross-entropy over ArcFace logits with hard labels.
pub fn arcface_loss(
    embeddings: &Tensor,
    class_weights: &Tensor,
    labels: &[usize],
    cfg: &ArcFaceConfig,
) -> Result<LossOutput> {
    arcface_loss_mixed(embeddings, class_weights, &MixedTargets::unmixed(labels), cfg)
}

/// `λ·L(y) + (1 - λ)·L(y_partner)` per row, the cutmix form of the ArcFace loss.
pub fn arcface_loss_mixed(
    embeddings: &Tensor,
    class_weights: &Tensor,
    targets: &MixedTargets,
    cfg: &ArcFaceConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    let table = CosineTable::new(embeddings, class_weights)?;
    if table.b == 0 {
        return Err(Error::DataEmpty);
    }
    check_labels(&targets.labels, table.b, Some(table.k))?;
    check_labels(&targets.partners, table.b, Some(table.k))?;
    if targets.lambdas.len() != table.b {
        return Err(Error::LengthMismatch { left: targets.lambdas.len(), right: table.b });
    }
    let mut dcos = vec![0.0; table.b * table.k];
    let mut value = weighted_terms(&table, &targets.labels, Some(&targets.lambdas), cfg, &mut dcos);
    if targets.lambdas.iter().any(|&l| l != 1.0) {
        let rest: Vec<f64> = targets.lambdas.iter().map(|l| 1.0 - l).collect();
        value += weighted_terms(&table, &targets.partners, Some(&rest), cfg, &mut dcos);
    }
    let (gx, gw) = table.backward(&dcos);
    Ok(LossOutput {
        value,
        grad_embeddings: Some(gx),
        grad_class_weights: Some(gw),
        grad_logits: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::cross_entropy;
    use crate::numerics::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn one_hot(labels: &[usize], k: usize) -> Tensor {
        let mut t = Tensor::zeros(&[labels.len(), k]);
        for (i, &y) in labels.iter().enumerate() {
            t.row_mut(i)[y] = 1.0;
        }
        t
    }

    #[test]
    fn margin_disabled_gives_cosines() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 4, 5);
        let w = random(&mut rng, 3, 5);
        let cfg = ArcFaceConfig { margin: 0.0, scale: 1.0 };
        let z = arcface_logits(&x, &w, &[0, 2, 1, 1], &cfg).unwrap();
        let table = CosineTable::new(&x, &w).unwrap();
        for (a, b) in z.data().iter().zip(&table.cos) {
            assert!((a - b).abs() < 1e-15);
        }
        let cos = Tensor::new(vec![4, 3], table.cos.clone()).unwrap();
        let arc = arcface_loss(&x, &w, &[0, 2, 1, 1], &cfg).unwrap();
        let ce = cross_entropy(&cos, &one_hot(&[0, 2, 1, 1], 3)).unwrap();
        assert!((arc.value - ce.value).abs() <= 1e-10);
    }

    #[test]
    fn aligned_target_logit() {
        let x = Tensor::from_rows(&[vec![2.0, 0.0, 0.0]]).unwrap();
        let w = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let z = arcface_logits(&x, &w, &[0], &ArcFaceConfig::default()).unwrap();
        // The cosine clamp leaves sinθ ≈ 4.5e-4, shifting the logit by ~2.8e-3.
        assert!((z.data()[0] - 32.0 * 0.2f64.cos()).abs() < 5e-3);
        assert_eq!(z.data()[1], 0.0);
    }

    #[test]
    fn fallback_branch_is_monotone() {
        let cfg = ArcFaceConfig { margin: 0.4, scale: 1.0 };
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=2000 {
            let c = -1.0 + i as f64 / 1000.0;
            let (z, _) = cfg.target_logit(c);
            assert!(z >= prev - 1e-12, "not monotone at c={c}");
            prev = z;
        }
    }

    #[test]
    fn gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ArcFaceConfig::default();
        for _ in 0..10 {
            let x = random(&mut rng, 4, 5);
            let w = random(&mut rng, 3, 5);
            let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let out = arcface_loss(&x, &w, &labels, &cfg).unwrap();
            let rx = grad_check(
                |t| arcface_loss(t, &w, &labels, &cfg).unwrap().value,
                &x,
                out.grad_embeddings.as_ref().unwrap(),
                1e-5,
            )
            .unwrap();
            let rw = grad_check(
                |t| arcface_loss(&x, t, &labels, &cfg).unwrap().value,
                &w,
                out.grad_class_weights.as_ref().unwrap(),
                1e-5,
            )
            .unwrap();
            assert!(rx.max_rel_error <= 1e-4 && rw.max_rel_error <= 1e-4);
        }
    }

    #[test]
    fn margin_raises_loss_on_correct_instance() {
        // Embeddings near their class weight so every row is classified correctly.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random(&mut rng, 3, 5);
        let labels = [0usize, 1, 2, 1];
        let mut x = Tensor::zeros(&[4, 5]);
        for (i, &y) in labels.iter().enumerate() {
            for t in 0..5 {
                x.row_mut(i)[t] = w.row(y)[t] + 0.1 * rng.random_range(-1.0..1.0);
            }
        }
        let plain = ArcFaceConfig { margin: 0.0, scale: 32.0 };
        let z = arcface_logits(&x, &w, &labels, &plain).unwrap();
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(crate::tensor::argmax(z.row(i)), y);
        }
        let with = arcface_loss(&x, &w, &labels, &ArcFaceConfig::default()).unwrap().value;
        let without = arcface_loss(&x, &w, &labels, &plain).unwrap().value;
        assert!(with > without);
    }

    #[test]
    fn mixed_with_unit_lambda_equals_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 3, 4);
        let w = random(&mut rng, 3, 4);
        let cfg = ArcFaceConfig::default();
        let plain = arcface_loss(&x, &w, &[0, 1, 2], &cfg).unwrap();
        let targets = MixedTargets { labels: vec![0, 1, 2], partners: vec![2, 0, 1], lambdas: vec![1.0; 3] };
        let mixed = arcface_loss_mixed(&x, &w, &targets, &cfg).unwrap();
        assert_eq!(plain.value, mixed.value);
        let half = MixedTargets { lambdas: vec![0.25; 3], ..targets };
        let a = arcface_loss(&x, &w, &[0, 1, 2], &cfg).unwrap().value;
        let b = arcface_loss(&x, &w, &[2, 0, 1], &cfg).unwrap().value;
        let m = arcface_loss_mixed(&x, &w, &half, &cfg).unwrap().value;
        assert!((m - (0.25 * a + 0.75 * b)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            arcface_loss(&x, &w, &[0], &ArcFaceConfig::default()),
            Err(Error::ZeroVector { .. })
        ));
        let x = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            arcface_loss(&x, &w, &[2], &ArcFaceConfig::default()),
            Err(Error::LabelOutOfRange { .. })
        ));
        assert!(ArcFaceConfig { margin: 2.0, scale: 1.0 }.validate().is_err());
    }
}
