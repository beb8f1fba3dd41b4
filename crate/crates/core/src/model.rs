//! Small MLP backbone with a normalized classification head.
//!
//! Hidden layers are affine + ReLU; the last layer is a linear projection
//! whose output is the (unnormalized) embedding. The head scores classes by
//! scaled cosine similarity between the embedding and each class weight.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::arcface::CosineTable;
use crate::tensor::{axpy, dot, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }
    fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Layer widths, input first, embedding last, plus the class count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub classes: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::BadArchitecture(format!(
                "need an input width and at least one layer, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::BadArchitecture("layer widths must be at least 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::BadArchitecture(format!("need at least 2 classes, got {}", self.classes)));
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

/// Fixed pixel standardization applied before the first layer.
pub const PIXEL_MEAN: f64 = 0.5;
pub const PIXEL_STD: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Dense>,
    /// `K × d`
    pub class_weights: Tensor,
}

/// Activations saved by [`ModelParams::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    batch: usize,
    input: Vec<f64>,
    /// Pre-activation output of every layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

/// Deterministic Glorot-uniform initialization; biases start at zero.
pub fn init_params(widths: &[usize], classes: usize, seed: u64) -> Result<ModelParams> {
    let arch = Architecture { widths: widths.to_vec(), classes };
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |out: usize, inp: usize| {
        let a = (6.0 / (inp + out) as f64).sqrt();
        let data = (0..out * inp).map(|_| rng.random_range(-a..a)).collect();
        Tensor::from_parts(vec![out, inp], data)
    };
    let layers = widths
        .windows(2)
        .map(|w| Dense { weight: glorot(w[1], w[0]), bias: Tensor::zeros(&[w[1]]) })
        .collect();
    let class_weights = glorot(classes, arch.embedding_dim());
    Ok(ModelParams { layers, class_weights })
}

impl ModelParams {
    pub fn architecture(&self) -> Architecture {
        let mut widths = vec![self.layers[0].fan_in()];
        widths.extend(self.layers.iter().map(Dense::fan_out));
        Architecture { widths, classes: self.classes() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn embedding_dim(&self) -> usize {
        self.class_weights.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.class_weights.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// All-zero parameters of the same shapes.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| Dense { weight: Tensor::zeros(l.weight.shape()), bias: Tensor::zeros(l.bias.shape()) })
                .collect(),
            class_weights: Tensor::zeros(self.class_weights.shape()),
        }
    }

    /// Named views in a fixed order: `layer{i}.weight`, `layer{i}.bias`, then `head.class_weights`.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 1);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.weight"), &l.weight));
            out.push((format!("layer{i}.bias"), &l.bias));
        }
        out.push(("head.class_weights".to_string(), &self.class_weights));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in self.layers.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.class_weights);
        out
    }

    pub fn same_shapes(&self, other: &ModelParams) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.1.shape() == y.1.shape())
    }

    /// Standardizes and flattens `images` (`B × ...`), then runs the layer stack.
    pub fn forward(&self, images: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let batch = images.shape().first().copied().unwrap_or(0);
        let dim = images.row_len();
        if images.ndim() < 2 || dim != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input {:?} flattens to {} features, model expects {}",
                images.shape(),
                dim,
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x: Vec<f64> = images.data().iter().map(|v| (v - PIXEL_MEAN) / PIXEL_STD).collect();
        let input = x.clone();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (out, inp) = (layer.fan_out(), layer.fan_in());
            let w = layer.weight.data();
            let bias = layer.bias.data();
            let mut z = vec![0.0; batch * out];
            for b in 0..batch {
                let xb = &x[b * inp..(b + 1) * inp];
                for o in 0..out {
                    z[b * out + o] = bias[o] + dot(xb, &w[o * inp..(o + 1) * inp]);
                }
            }
            x = if li == last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
            pre.push(z);
        }
        let d = self.embedding_dim();
        let cache = ForwardCache { batch, input, pre };
        Ok((Tensor::from_parts(vec![batch, d], x), cache))
    }

    /// Reverse-mode gradients of a scalar loss given `dL/d embeddings`.
    /// The returned head gradient is zero; losses supply it separately.
    pub fn backward(&self, cache: &ForwardCache, grad_embeddings: &Tensor) -> Result<ModelParams> {
        let batch = cache.batch;
        if cache.pre.len() != self.layers.len()
            || cache.input.len() != batch * self.input_dim()
            || cache.pre.iter().zip(&self.layers).any(|(p, l)| p.len() != batch * l.fan_out())
        {
            return Err(Error::StaleCache("cache was produced by a different architecture".into()));
        }
        if grad_embeddings.shape() != [batch, self.embedding_dim()] {
            return Err(Error::StaleCache(format!(
                "embedding gradient {:?} vs cached batch {batch}",
                grad_embeddings.shape()
            )));
        }
        let mut grads = self.zeros_like();
        let mut g = grad_embeddings.data().to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (out, inp) = (layer.fan_out(), layer.fan_in());
            let x_in: Vec<f64> = if li == 0 {
                cache.input.clone()
            } else {
                cache.pre[li - 1].iter().map(|v| v.max(0.0)).collect()
            };
            let gl = &mut grads.layers[li];
            let gw = gl.weight.data_mut();
            for b in 0..batch {
                let xb = &x_in[b * inp..(b + 1) * inp];
                for o in 0..out {
                    let go = g[b * out + o];
                    if go != 0.0 {
                        axpy(go, xb, &mut gw[o * inp..(o + 1) * inp]);
                    }
                }
            }
            let gb = gl.bias.data_mut();
            for b in 0..batch {
                for o in 0..out {
                    gb[o] += g[b * out + o];
                }
            }
            if li > 0 {
                let w = layer.weight.data();
                let prev_pre = &cache.pre[li - 1];
                let mut gx = vec![0.0; batch * inp];
                for b in 0..batch {
                    let gxb = &mut gx[b * inp..(b + 1) * inp];
                    for o in 0..out {
                        let go = g[b * out + o];
                        if go != 0.0 {
                            axpy(go, &w[o * inp..(o + 1) * inp], gxb);
                        }
                    }
                    // ReLU'(0) is taken as 0.
                    for (v, &z) in gxb.iter_mut().zip(&prev_pre[b * inp..(b + 1) * inp]) {
                        if z <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                g = gx;
            }
        }
        Ok(grads)
    }

    /// Margin-free inference logits `s · cos(embedding, class weight)`.
    pub fn predict_logits(&self, images: &Tensor, scale: f64) -> Result<Tensor> {
        let (emb, _) = self.forward(images)?;
        head_logits(&emb, &self.class_weights, scale)
    }
}

pub(crate) fn head_logits(emb: &Tensor, class_weights: &Tensor, scale: f64) -> Result<Tensor> {
    let table = CosineTable::new(emb, class_weights)?;
    Ok(Tensor::from_parts(vec![table.b, table.k], table.cos.iter().map(|c| scale * c).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{arcface_logits, arcface_loss, ArcFaceConfig};
    use crate::numerics::grad_check;
    use proptest::prelude::*;
    use rand::Rng;

    fn images(seed: u64, b: usize, c: usize, h: usize, w: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![b, c, h, w], (0..b * c * h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(&[12, 8, 4], 3, 7).unwrap();
        let b = init_params(&[12, 8, 4], 3, 7).unwrap();
        let c = init_params(&[12, 8, 4], 3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.layers.iter().all(|l| l.bias.max_abs() == 0.0));
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(a.layers[0].weight.data().iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn parameter_count() {
        // Σ(in·out + out) over layers plus K·d: 1536 + 32 + 512 + 16 + 320.
        let p = init_params(&[48, 32, 16], 20, 0).unwrap();
        assert_eq!(p.param_count(), 2416);
    }

    #[test]
    fn rejects_bad_architectures() {
        assert!(matches!(init_params(&[], 3, 0), Err(Error::BadArchitecture(_))));
        assert!(matches!(init_params(&[4], 3, 0), Err(Error::BadArchitecture(_))));
        assert!(matches!(init_params(&[4, 2], 1, 0), Err(Error::BadArchitecture(_))));
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let p = init_params(&[12, 6, 3], 2, 1).unwrap().zeros_like();
        let (emb, _) = p.forward(&images(1, 2, 3, 2, 2)).unwrap();
        assert_eq!(emb.max_abs(), 0.0);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut p = init_params(&[4, 4], 2, 1).unwrap();
        let mut eye = Tensor::zeros(&[4, 4]);
        for i in 0..4 {
            eye.data_mut()[i * 4 + i] = 1.0;
        }
        p.layers[0].weight = eye;
        let x = images(2, 3, 1, 2, 2);
        let (emb, _) = p.forward(&x).unwrap();
        let want: Vec<f64> = x.data().iter().map(|v| (v - PIXEL_MEAN) / PIXEL_STD).collect();
        assert_eq!(emb.data(), &want[..]);
    }

    #[test]
    fn forward_matches_scalar_recomputation() {
        let p = init_params(&[12, 5, 3], 4, 3).unwrap();
        let x = images(3, 2, 3, 2, 2);
        let (emb, _) = p.forward(&x).unwrap();
        for b in 0..2 {
            let xb: Vec<f64> = x.row(b).iter().map(|v| (v - 0.5) / 0.25).collect();
            let mut h = [0.0; 5];
            for (o, ho) in h.iter_mut().enumerate() {
                let mut s = p.layers[0].bias.data()[o];
                for i in 0..12 {
                    s += p.layers[0].weight.data()[o * 12 + i] * xb[i];
                }
                *ho = s.max(0.0);
            }
            for o in 0..3 {
                let mut s = p.layers[1].bias.data()[o];
                for i in 0..5 {
                    s += p.layers[1].weight.data()[o * 5 + i] * h[i];
                }
                assert!((emb.row(b)[o] - s).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = init_params(&[12, 3], 2, 0).unwrap();
        assert!(matches!(p.forward(&images(0, 1, 1, 2, 2)), Err(Error::ShapeMismatch(_))));
        let (_, cache) = p.forward(&images(0, 2, 3, 2, 2)).unwrap();
        let other = init_params(&[12, 4], 2, 0).unwrap();
        assert!(matches!(other.backward(&cache, &Tensor::zeros(&[2, 4])), Err(Error::StaleCache(_))));
        assert!(matches!(p.backward(&cache, &Tensor::zeros(&[3, 3])), Err(Error::StaleCache(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = init_params(&[12, 6, 3], 2, 1).unwrap();
        let (_, cache) = p.forward(&images(1, 4, 3, 2, 2)).unwrap();
        let g = p.backward(&cache, &Tensor::zeros(&[4, 3])).unwrap();
        assert!(g.tensors().iter().all(|(_, t)| t.max_abs() == 0.0));
    }

    #[test]
    fn dead_relu_unit_gets_no_incoming_gradient() {
        let mut p = init_params(&[4, 3, 2], 2, 5).unwrap();
        p.layers[0].bias.data_mut()[1] = -100.0;
        let x = images(5, 3, 1, 2, 2);
        let (_, cache) = p.forward(&x).unwrap();
        let g = p.backward(&cache, &Tensor::new(vec![3, 2], vec![1.0, -0.5, 0.3, 2.0, -1.0, 0.7]).unwrap()).unwrap();
        assert!(g.layers[0].weight.row(1).iter().all(|&v| v == 0.0));
        assert_eq!(g.layers[0].bias.data()[1], 0.0);
    }

    #[test]
    fn full_pipeline_gradient_matches_fd() {
        let labels = [0usize, 2, 1, 2];
        let cfg = ArcFaceConfig::default();
        let x = images(11, 4, 1, 2, 3);
        let base = init_params(&[6, 5, 4], 3, 11).unwrap();
        let loss = |p: &ModelParams| {
            let (emb, _) = p.forward(&x).unwrap();
            arcface_loss(&emb, &p.class_weights, &labels, &cfg).unwrap().value
        };
        let (emb, cache) = base.forward(&x).unwrap();
        let out = arcface_loss(&emb, &base.class_weights, &labels, &cfg).unwrap();
        let mut grads = base.backward(&cache, out.grad_embeddings.as_ref().unwrap()).unwrap();
        grads.class_weights = out.grad_class_weights.unwrap();
        let names: Vec<String> = base.tensors().into_iter().map(|(n, _)| n).collect();
        for (ti, name) in names.iter().enumerate() {
            let point = base.tensors()[ti].1.clone();
            let analytic = grads.tensors()[ti].1.clone();
            let rep = grad_check(
                |t| {
                    let mut p = base.clone();
                    *p.tensors_mut()[ti] = t.clone();
                    loss(&p)
                },
                &point,
                &analytic,
                1e-5,
            )
            .unwrap();
            assert!(rep.max_rel_error <= 1e-4, "{name}: {}", rep.max_rel_error);
        }
    }

    #[test]
    fn predict_logits_examples() {
        let mut p = init_params(&[3, 3], 2, 0).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        p.layers[0].weight = eye;
        p.class_weights = Tensor::from_rows(&[vec![0.2, 0.4, 0.1], vec![1.0, 0.0, 0.0]]).unwrap();
        // Standardizes to the first class weight row.
        let x = Tensor::new(vec![1, 3], vec![0.55, 0.6, 0.525]).unwrap();
        let z = p.predict_logits(&x, 32.0).unwrap();
        assert!((z.data()[0] - 32.0).abs() < 1e-12);
        let z2 = p.predict_logits(&x, 64.0).unwrap();
        assert_eq!(z2, z.scale(2.0));
    }

    #[test]
    fn predict_agrees_with_marginless_arcface() {
        let p = init_params(&[12, 6, 4], 3, 2).unwrap();
        let x = images(2, 3, 3, 2, 2);
        let (emb, _) = p.forward(&x).unwrap();
        let a = arcface_logits(&emb, &p.class_weights, &[0, 1, 2], &ArcFaceConfig { margin: 0.0, scale: 32.0 }).unwrap();
        let b = p.predict_logits(&x, 32.0).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn argmax_invariant_to_embedding_rescale(seed in any::<u64>(), k in 0.01f64..100.0) {
            let p = init_params(&[6, 4], 3, seed).unwrap();
            let x = images(seed, 3, 1, 2, 3);
            let (emb, _) = p.forward(&x).unwrap();
            prop_assume!(emb.rows().all(|r| crate::numerics::norm(r) > 1e-6));
            let a = head_logits(&emb, &p.class_weights, 32.0).unwrap();
            let b = head_logits(&emb.scale(k), &p.class_weights, 32.0).unwrap();
            for i in 0..3 {
                prop_assert_eq!(crate::tensor::argmax(a.row(i)), crate::tensor::argmax(b.row(i)));
            }
        }
    }
}
