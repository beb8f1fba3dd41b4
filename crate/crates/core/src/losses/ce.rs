use super::LossOutput;
use crate::error::{Error, Result};
use crate::numerics::log_softmax_slice;
use crate::tensor::Tensor;

const SIMPLEX_TOL: f64 = 1e-9;

/// Batch-mean `-Σ_k y_k log softmax(z)_k` against soft labels.
pub fn cross_entropy(logits: &Tensor, soft_labels: &Tensor) -> Result<LossOutput> {
    let (b, k) = logits.dims2()?;
    if soft_labels.shape() != logits.shape() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs labels {:?}",
            logits.shape(),
            soft_labels.shape()
        )));
    }
    if b == 0 {
        return Err(Error::DataEmpty);
    }
    for (row, y) in soft_labels.rows().enumerate() {
        let sum: f64 = y.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || y.iter().any(|&v| v < -SIMPLEX_TOL) {
            return Err(Error::InvalidLabel { row });
        }
    }
    let inv_b = 1.0 / b as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; b * k];
    for i in 0..b {
        let lp = log_softmax_slice(logits.row(i));
        let y = soft_labels.row(i);
        let mut row_loss = 0.0;
        for j in 0..k {
            if y[j] != 0.0 {
                row_loss -= y[j] * lp[j];
            }
            grad[i * k + j] = (lp[j].exp() - y[j]) * inv_b;
        }
        value += row_loss;
    }
    Ok(LossOutput {
        value: value * inv_b,
        grad_embeddings: None,
        grad_class_weights: None,
        grad_logits: Some(Tensor::from_parts(vec![b, k], grad)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, softmax};

    #[test]
    fn uniform_logits_one_hot() {
        let z = Tensor::zeros(&[1, 4]);
        let y = Tensor::new(vec![1, 4], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let out = cross_entropy(&z, &y).unwrap();
        assert!((out.value - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn matching_distribution_has_zero_gradient() {
        let z = Tensor::from_rows(&[vec![0.3, -1.2, 2.0], vec![1.0, 1.0, -4.0]]).unwrap();
        let y = softmax_rows(&z);
        let out = cross_entropy(&z, &y).unwrap();
        assert!(out.grad_logits.unwrap().max_abs() < 1e-16);
    }

    fn softmax_rows(z: &Tensor) -> Tensor {
        let rows: Vec<Vec<f64>> = z
            .rows()
            .map(|r| softmax(&Tensor::vector(r.to_vec()).unwrap()).into_data())
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn scalar_example() {
        let z = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let y = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let out = cross_entropy(&z, &y).unwrap();
        assert!((out.value - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((out.value - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn rejects_off_simplex() {
        let z = Tensor::zeros(&[2, 2]);
        let y = Tensor::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.6]]).unwrap();
        assert!(matches!(cross_entropy(&z, &y), Err(Error::InvalidLabel { row: 1 })));
    }

    #[test]
    fn soft_label_gradient() {
        let z = Tensor::from_rows(&[vec![0.2, -0.7, 1.1], vec![2.0, 0.1, -0.3]]).unwrap();
        let y = Tensor::from_rows(&[vec![0.25, 0.75, 0.0], vec![0.1, 0.2, 0.7]]).unwrap();
        let out = cross_entropy(&z, &y).unwrap();
        let rep = grad_check(
            |t| cross_entropy(t, &y).unwrap().value,
            &z,
            out.grad_logits.as_ref().unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-8);
    }
}
