//! The seeded training loop and the teacher-student distillation loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, LossKind};
use super::optim::{sgd_momentum_step, OptimizerState};
use super::schedule::cosine_lr;
use crate::augment::{augment_image, cutmix, resize, Batch};
use crate::error::{Error, Result};
use crate::io::{Checkpoint, Dataset};
use crate::losses::arcface::CosineTable;
use crate::losses::{
    arcface_loss_mixed, combined_loss_mixed, cross_entropy, distill_objective, KDConfig, LossOutput, MixedTargets,
};
use crate::model::{head_logits, init_params, ModelParams};
use crate::tensor::{argmax, Tensor};

const AUGMENT_STREAM: u64 = 1;
const CUTMIX_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_acc: f64,
    /// `NaN` when no validation split was given.
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const HEADER: &'static str = "epoch\tlr\tloss\ttrain_acc\tval_acc";

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.epoch, r.lr, r.loss, r.train_acc, r.val_acc));
        }
        out
    }

    pub fn from_tsv(text: &str, path: &std::path::Path) -> Result<Self> {
        let parse_err = |line: usize, reason: String| Error::ParseError { path: path.to_path_buf(), line, reason };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == Self::HEADER => {}
            other => {
                return Err(Error::HeaderMismatch { path: path.to_path_buf(), found: other.unwrap_or("").to_string() })
            }
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(parse_err(lineno, format!("expected 5 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(lineno, format!("{s:?}: {e}")));
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|e| parse_err(lineno, format!("epoch {:?}: {e}", f[0])))?,
                lr: num(f[1])?,
                loss: num(f[2])?,
                train_acc: num(f[3])?,
                val_acc: num(f[4])?,
            });
        }
        Ok(Self { records })
    }
}

struct Teacher<'a> {
    ckpt: &'a Checkpoint,
    kd: KDConfig,
}

/// Trains a fresh model from `cfg.seed`.
pub fn train(cfg: &ExperimentConfig, train_set: &Dataset, val_set: &Dataset) -> Result<(Checkpoint, TrainHistory)> {
    cfg.validate()?;
    let params = init_params(&cfg.widths(), cfg.classes, cfg.seed)?;
    run(cfg, train_set, val_set, params, None)
}

/// Trains a student on `kd_weight·KD + ce_weight·CE` against the teacher's
/// margin-free logits. The teacher is only read.
pub fn distill(
    teacher: &Checkpoint,
    student_cfg: &ExperimentConfig,
    kd: &KDConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<(Checkpoint, TrainHistory)> {
    student_cfg.validate()?;
    let params = init_params(&student_cfg.widths(), student_cfg.classes, student_cfg.seed)?;
    distill_from(teacher, student_cfg, kd, train_set, val_set, params)
}

/// [`distill`] with explicit starting parameters for the student.
pub fn distill_from(
    teacher: &Checkpoint,
    student_cfg: &ExperimentConfig,
    kd: &KDConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    init: ModelParams,
) -> Result<(Checkpoint, TrainHistory)> {
    student_cfg.validate()?;
    kd.validate()?;
    if teacher.classes() != student_cfg.classes {
        return Err(Error::ClassCountMismatch { expected: student_cfg.classes, found: teacher.classes() });
    }
    if init.architecture().widths != student_cfg.widths() || init.classes() != student_cfg.classes {
        return Err(Error::ShapeMismatch("initial parameters do not match the student config".into()));
    }
    run(student_cfg, train_set, val_set, init, Some(Teacher { ckpt: teacher, kd: *kd }))
}

fn check_data(cfg: &ExperimentConfig, set: &Dataset) -> Result<()> {
    if set.is_empty() {
        return Ok(());
    }
    let (c, _, _) = set.image_dims();
    if c != cfg.channels {
        return Err(Error::ShapeMismatch(format!("dataset has {c} channels, config expects {}", cfg.channels)));
    }
    if set.num_classes() > cfg.classes {
        return Err(Error::ClassCountMismatch { expected: cfg.classes, found: set.num_classes() });
    }
    Ok(())
}

fn run(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    mut params: ModelParams,
    teacher: Option<Teacher>,
) -> Result<(Checkpoint, TrainHistory)> {
    if train_set.is_empty() {
        return Err(Error::DataEmpty);
    }
    check_data(cfg, train_set)?;
    check_data(cfg, val_set)?;
    let sched = cfg.scheduler();
    let mut state = OptimizerState::new(&params, cfg.momentum)?;
    let mut history = TrainHistory::default();
    let val_images = fit_images(&val_set.images, cfg.train_size)?;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, &sched)?;
        let epoch_seed = cfg.seed ^ epoch as u64;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut aug_rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        aug_rng.set_stream(AUGMENT_STREAM);
        let mut mix_rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        mix_rng.set_stream(CUTMIX_STREAM);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = make_batch(cfg, train_set, chunk, &mut aug_rng)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let mut targets = MixedTargets::unmixed(&labels);
            if cfg.augment.cutmix_enabled && chunk.len() >= 2 {
                let (mixed, records) = cutmix(&batch, cfg.augment.cutmix_alpha, &mut mix_rng)?;
                batch = mixed;
                targets = MixedTargets {
                    partners: records.iter().map(|r| labels[r.partner_index]).collect(),
                    lambdas: records.iter().map(|r| r.lambda_adjusted).collect(),
                    labels,
                };
            }
            let (emb, cache) = params.forward(&batch.images)?;
            let table = CosineTable::new(&emb, &params.class_weights)?;
            let k = table.k;
            let dominant = targets.dominant();
            correct += dominant
                .iter()
                .enumerate()
                .filter(|&(i, &y)| argmax(&table.cos[i * k..(i + 1) * k]) == y)
                .count();

            let out = match &teacher {
                Some(t) => logit_objective(cfg, &params, &table, &batch, Some(t))?,
                None => match cfg.loss {
                    LossKind::Ce => logit_objective(cfg, &params, &table, &batch, None)?,
                    LossKind::Arcface => arcface_loss_mixed(&emb, &params.class_weights, &targets, &cfg.arcface)?,
                    LossKind::Combined => combined_loss_mixed(&emb, &params.class_weights, &targets, &cfg.combined())?,
                },
            };
            loss_sum += out.value * chunk.len() as f64;
            let mut grads = params.backward(&cache, out.grad_embeddings.as_ref().expect("embedding grads"))?;
            grads.class_weights = out.grad_class_weights.expect("class weight grads");
            sgd_momentum_step(&mut params, &grads, &mut state, lr)?;
        }
        let n = train_set.len() as f64;
        history.records.push(EpochRecord {
            epoch,
            lr,
            loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_acc: accuracy(&params, cfg.arcface.scale, &val_images, &val_set.labels)?,
        });
    }
    let ckpt = Checkpoint { params, velocity: Some(state.velocity), config: cfg.clone(), seed: cfg.seed };
    Ok((ckpt, history))
}

/// Cross-entropy (optionally with a KD term) on the margin-free head, mapped
/// back to embedding and class-weight gradients.
fn logit_objective(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    table: &CosineTable,
    batch: &Batch,
    teacher: Option<&Teacher>,
) -> Result<LossOutput> {
    let s = cfg.arcface.scale;
    let logits = Tensor::from_parts(vec![table.b, table.k], table.cos.iter().map(|c| s * c).collect());
    let out = match teacher {
        None => cross_entropy(&logits, &batch.soft_labels)?,
        Some(t) => {
            let (_, side) = t.ckpt.input_geometry();
            let images = fit_images(&batch.images, side)?;
            let teacher_logits = t.ckpt.params.predict_logits(&images, t.ckpt.config.arcface.scale)?;
            distill_objective(&logits, &teacher_logits, &batch.soft_labels, &t.kd)?
        }
    };
    let dcos: Vec<f64> = out.grad_logits.as_ref().expect("logit grads").data().iter().map(|g| s * g).collect();
    let (gx, gw) = table.backward(&dcos);
    debug_assert_eq!(gw.shape(), params.class_weights.shape());
    Ok(LossOutput { value: out.value, grad_embeddings: Some(gx), grad_class_weights: Some(gw), grad_logits: None })
}

fn make_batch(cfg: &ExperimentConfig, set: &Dataset, idx: &[usize], rng: &mut ChaCha8Rng) -> Result<Batch> {
    let side = cfg.train_size;
    let per = cfg.channels * side * side;
    let mut images = Vec::with_capacity(idx.len() * per);
    let mut soft = Tensor::zeros(&[idx.len(), cfg.classes]);
    for (row, &i) in idx.iter().enumerate() {
        let img = augment_image(&set.image(i), side, &cfg.augment, rng)?;
        images.extend_from_slice(img.data());
        soft.row_mut(row)[set.labels[i]] = 1.0;
    }
    Ok(Batch { images: Tensor::from_parts(vec![idx.len(), cfg.channels, side, side], images), soft_labels: soft })
}

/// Resizes every `N×C×H×W` image to `side×side`; a no-op when already that size.
pub(crate) fn fit_images(images: &Tensor, side: usize) -> Result<Tensor> {
    let [n, c, h, w] = *images.shape() else {
        return Err(Error::ShapeMismatch(format!("expected N×C×H×W, got {:?}", images.shape())));
    };
    if h == side && w == side {
        return Ok(images.clone());
    }
    let mut out = Vec::with_capacity(n * c * side * side);
    for i in 0..n {
        let img = Tensor::from_parts(vec![c, h, w], images.row(i).to_vec());
        out.extend_from_slice(resize(&img, side, side)?.data());
    }
    Ok(Tensor::from_parts(vec![n, c, side, side], out))
}

/// Top-1 of the margin-free head on already fitted images; `NaN` when empty.
fn accuracy(params: &ModelParams, scale: f64, images: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(f64::NAN);
    }
    let (emb, _) = params.forward(images)?;
    let logits = head_logits(&emb, &params.class_weights, scale)?;
    let hits = logits.rows().zip(labels).filter(|(row, &y)| argmax(row) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}
