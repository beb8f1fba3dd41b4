//! Weighted logit-sum and majority-vote combiners.

use std::str::FromStr;

use super::LogitMatrix;
use crate::error::{Error, Result};
use crate::numerics::softmax_slice;
use crate::tensor::argmax;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleMethod {
    LogitSum,
    Vote,
    Stacking,
}

impl FromStr for EnsembleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit_sum" => Ok(Self::LogitSum),
            "vote" => Ok(Self::Vote),
            "stacking" => Ok(Self::Stacking),
            other => Err(Error::ConfigInvalid(format!("unknown ensemble method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleMember {
    pub matrix: LogitMatrix,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub members: Vec<EnsembleMember>,
}

impl EnsembleSpec {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        let spec = Self { members };
        spec.validate()?;
        Ok(spec)
    }

    /// Every member with weight 1.
    pub fn uniform(matrices: Vec<LogitMatrix>) -> Result<Self> {
        Self::new(matrices.into_iter().map(|matrix| EnsembleMember { matrix, weight: 1.0 }).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.members.first().ok_or_else(|| Error::MemberMismatch("ensemble has no members".into()))?;
        for m in &self.members {
            if !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(Error::ConfigInvalid(format!("member {} has weight {}", m.matrix.model_tag, m.weight)));
            }
            if m.matrix.classes() != first.matrix.classes() {
                return Err(Error::MemberMismatch(format!(
                    "{} has {} classes, {} has {}",
                    m.matrix.model_tag,
                    m.matrix.classes(),
                    first.matrix.model_tag,
                    first.matrix.classes()
                )));
            }
            if m.matrix.image_ids() != first.matrix.image_ids() {
                return Err(Error::MemberMismatch(format!(
                    "{} and {} cover different image ids",
                    m.matrix.model_tag, first.matrix.model_tag
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn rows(&self) -> usize {
        self.members[0].matrix.len()
    }

    fn classes(&self) -> usize {
        self.members[0].matrix.classes()
    }
}

/// Member weight from its validation score: 1.0 below 0.90, 1.5 at or above.
pub fn weight_for_score(score: f64) -> f64 {
    if score < 0.90 {
        1.0
    } else {
        1.5
    }
}

/// `argmax Σ_m w_m · logits_m` per image, ties to the lowest class.
pub fn ensemble_logit_sum(spec: &EnsembleSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let k = spec.classes();
    let mut combined = vec![0.0; k];
    let mut out = Vec::with_capacity(spec.rows());
    for i in 0..spec.rows() {
        combined.fill(0.0);
        for m in &spec.members {
            for (c, z) in combined.iter_mut().zip(m.matrix.logits().row(i)) {
                *c += m.weight * z;
            }
        }
        out.push(argmax(&combined));
    }
    Ok(out)
}

/// Majority over member argmaxes. Tied counts go to the class with the
/// highest weighted mean softmax probability, then the lowest index.
pub fn ensemble_vote(spec: &EnsembleSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let k = spec.classes();
    let total_weight: f64 = spec.members.iter().map(|m| m.weight).sum();
    let mut out = Vec::with_capacity(spec.rows());
    for i in 0..spec.rows() {
        let mut counts = vec![0usize; k];
        let mut mean_prob = vec![0.0; k];
        for m in &spec.members {
            let row = m.matrix.logits().row(i);
            counts[argmax(row)] += 1;
            for (p, q) in mean_prob.iter_mut().zip(softmax_slice(row)) {
                *p += m.weight * q / total_weight;
            }
        }
        let top = *counts.iter().max().expect("at least one class");
        let mut best: Option<usize> = None;
        for c in (0..k).filter(|&c| counts[c] == top) {
            if best.is_none_or(|b| mean_prob[c] > mean_prob[b]) {
                best = Some(c);
            }
        }
        out.push(best.expect("some class has the top count"));
    }
    Ok(out)
}
