//! Seeded comparison studies on the synthetic task: loss choice, test-time
//! augmentation, ensembles, ensemble combiners and distillation. Shared by
//! the `report` command and the acceptance suite.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::Result;
use crate::inference::{
    ensemble_logit_sum, ensemble_stacking, ensemble_vote, fit_stacking, predict_dataset, top1_accuracy,
    weight_for_score, EnsembleMember, EnsembleSpec, LogitMatrix, StackingConfig, TTAConfig,
};
use crate::io::{generate, Checkpoint, Generated, SyntheticDatasetSpec};
use crate::training::{distill, train, ExperimentConfig, LossKind};

/// Width list of the distillation student's hidden layers.
pub const STUDENT_HIDDEN: [usize; 2] = [32, 16];

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub data: SyntheticDatasetSpec,
    pub base: ExperimentConfig,
    pub seeds: Vec<u64>,
    /// Members per ensemble trial; trial `t` uses seeds `t, t+1, ...` cyclically.
    pub ensemble_size: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            data: SyntheticDatasetSpec::default(),
            base: ExperimentConfig::config_b(),
            seeds: (0..5).collect(),
            ensemble_size: 4,
        }
    }
}

/// Per-seed top-1 on the test split for each loss.
#[derive(Clone, Debug, Default)]
pub struct LossStudy {
    pub ce: Vec<f64>,
    pub arcface: Vec<f64>,
    pub combined: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TtaStudy {
    pub plain: Vec<f64>,
    pub tta: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct EnsembleStudy {
    pub best_member: Vec<f64>,
    pub logit_sum: Vec<f64>,
}

/// Two-member ensembles (ArcFace and combined model of one seed).
#[derive(Clone, Debug, Default)]
pub struct CombinerStudy {
    pub vote: Vec<f64>,
    pub stacking: Vec<f64>,
    pub logit_sum: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct DistillStudy {
    pub teacher: Vec<f64>,
    pub ce_student: Vec<f64>,
    pub kd_student: Vec<f64>,
}

pub struct Lab {
    pub cfg: StudyConfig,
    pub data: Generated,
    models: BTreeMap<(u8, u64), Checkpoint>,
}

fn loss_key(loss: LossKind) -> u8 {
    match loss {
        LossKind::Ce => 0,
        LossKind::Arcface => 1,
        LossKind::Combined => 2,
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl Lab {
    pub fn new(cfg: StudyConfig) -> Result<Self> {
        let data = generate(&cfg.data)?;
        Ok(Self { cfg, data, models: BTreeMap::new() })
    }

    pub fn experiment(&self, loss: LossKind, seed: u64) -> ExperimentConfig {
        ExperimentConfig { loss, seed, ..self.cfg.base.clone() }
    }

    /// Trains (or reuses) the model for `(loss, seed)`.
    pub fn model(&mut self, loss: LossKind, seed: u64) -> Result<Checkpoint> {
        let key = (loss_key(loss), seed);
        if !self.models.contains_key(&key) {
            let (ckpt, _) = train(&self.experiment(loss, seed), &self.data.train, &self.data.val)?;
            self.models.insert(key, ckpt);
        }
        Ok(self.models[&key].clone())
    }

    fn test_logits(&mut self, loss: LossKind, seed: u64) -> Result<LogitMatrix> {
        let ckpt = self.model(loss, seed)?;
        predict_dataset(&ckpt, &self.data.test, None)
    }

    fn test_accuracy(&self, m: &LogitMatrix) -> Result<f64> {
        top1_accuracy(&m.predictions(), &self.data.test.labels)
    }

    pub fn loss_study(&mut self) -> Result<LossStudy> {
        let mut out = LossStudy::default();
        for seed in self.cfg.seeds.clone() {
            for (loss, slot) in [(LossKind::Ce, 0), (LossKind::Arcface, 1), (LossKind::Combined, 2)] {
                let m = self.test_logits(loss, seed)?;
                let acc = self.test_accuracy(&m)?;
                [&mut out.ce, &mut out.arcface, &mut out.combined][slot].push(acc);
            }
        }
        Ok(out)
    }

    pub fn tta_study(&mut self) -> Result<TtaStudy> {
        let mut out = TtaStudy::default();
        for seed in self.cfg.seeds.clone() {
            let tta = TTAConfig::for_config(&self.cfg.base);
            let ckpt = self.model(LossKind::Combined, seed)?;
            let plain = predict_dataset(&ckpt, &self.data.test, None)?;
            let with = predict_dataset(&ckpt, &self.data.test, Some(&tta))?;
            out.plain.push(self.test_accuracy(&plain)?);
            out.tta.push(self.test_accuracy(&with)?);
        }
        Ok(out)
    }

    /// Member weights follow the validation-score policy.
    pub fn ensemble_study(&mut self) -> Result<EnsembleStudy> {
        let mut out = EnsembleStudy::default();
        let seeds = self.cfg.seeds.clone();
        for t in 0..seeds.len() {
            let mut members = Vec::new();
            let mut best: f64 = 0.0;
            for j in 0..self.cfg.ensemble_size.min(seeds.len()) {
                let seed = seeds[(t + j) % seeds.len()];
                let ckpt = self.model(LossKind::Combined, seed)?;
                let val = predict_dataset(&ckpt, &self.data.val, None)?;
                let weight = weight_for_score(top1_accuracy(&val.predictions(), &self.data.val.labels)?);
                let test = predict_dataset(&ckpt, &self.data.test, None)?;
                best = best.max(self.test_accuracy(&test)?);
                members.push(EnsembleMember { matrix: test, weight });
            }
            let preds = ensemble_logit_sum(&EnsembleSpec::new(members)?)?;
            out.best_member.push(best);
            out.logit_sum.push(top1_accuracy(&preds, &self.data.test.labels)?);
        }
        Ok(out)
    }

    pub fn combiner_study(&mut self) -> Result<CombinerStudy> {
        let mut out = CombinerStudy::default();
        for seed in self.cfg.seeds.clone() {
            let mut val = Vec::new();
            let mut test = Vec::new();
            for loss in [LossKind::Arcface, LossKind::Combined] {
                let ckpt = self.model(loss, seed)?;
                val.push(predict_dataset(&ckpt, &self.data.val, None)?);
                test.push(predict_dataset(&ckpt, &self.data.test, None)?);
            }
            let spec = EnsembleSpec::uniform(test)?;
            let labels = &self.data.test.labels;
            let meta = fit_stacking(&val, &self.data.val.labels, &StackingConfig::default())?;
            out.vote.push(top1_accuracy(&ensemble_vote(&spec)?, labels)?);
            out.stacking.push(top1_accuracy(&ensemble_stacking(&meta, &spec)?, labels)?);
            out.logit_sum.push(top1_accuracy(&ensemble_logit_sum(&spec)?, labels)?);
        }
        Ok(out)
    }

    /// Teacher: the combined-loss model. Students: a narrower CE model trained
    /// alone and with the default KD objective, same seed and epochs.
    pub fn distill_study(&mut self) -> Result<DistillStudy> {
        let mut out = DistillStudy::default();
        for seed in self.cfg.seeds.clone() {
            let teacher = self.model(LossKind::Combined, seed)?;
            let teacher_logits = predict_dataset(&teacher, &self.data.test, None)?;
            out.teacher.push(self.test_accuracy(&teacher_logits)?);
            let student = ExperimentConfig { hidden: STUDENT_HIDDEN.to_vec(), ..self.experiment(LossKind::Ce, seed) };
            let (alone, _) = train(&student, &self.data.train, &self.data.val)?;
            let (kd, _) = distill(&teacher, &student, &student.kd, &self.data.train, &self.data.val)?;
            let alone = predict_dataset(&alone, &self.data.test, None)?;
            let kd = predict_dataset(&kd, &self.data.test, None)?;
            out.ce_student.push(self.test_accuracy(&alone)?);
            out.kd_student.push(self.test_accuracy(&kd)?);
        }
        Ok(out)
    }
}

fn row(out: &mut String, name: &str, values: &[f64]) {
    write!(out, "{name:<26}").unwrap();
    for v in values {
        write!(out, " {v:>7.4}").unwrap();
    }
    writeln!(out, " | {:>7.4}", median(values)).unwrap();
}

fn header(out: &mut String, title: &str, seeds: usize, label: &str) {
    writeln!(out, "{title}").unwrap();
    write!(out, "{:<26}", "").unwrap();
    for s in 0..seeds {
        write!(out, " {:>7}", format!("{label}{s}")).unwrap();
    }
    writeln!(out, " | {:>7}", "median").unwrap();
}

pub struct Report {
    pub losses: LossStudy,
    pub tta: TtaStudy,
    pub ensembles: EnsembleStudy,
    pub combiners: CombinerStudy,
    pub distillation: DistillStudy,
}

impl Report {
    pub fn run(lab: &mut Lab) -> Result<Self> {
        Ok(Self {
            losses: lab.loss_study()?,
            tta: lab.tta_study()?,
            ensembles: lab.ensemble_study()?,
            combiners: lab.combiner_study()?,
            distillation: lab.distill_study()?,
        })
    }

    /// Plain-text tables of top-1 accuracy on the test split.
    pub fn render(&self) -> String {
        let n = self.losses.ce.len();
        let mut out = String::new();
        header(&mut out, "Loss configurations (top-1, test split)", n, "seed");
        row(&mut out, "CE", &self.losses.ce);
        row(&mut out, "ArcFace", &self.losses.arcface);
        row(&mut out, "ArcFace + Circle", &self.losses.combined);
        out.push('\n');
        header(&mut out, "Pipeline", n, "seed");
        row(&mut out, "single model", &self.tta.plain);
        row(&mut out, "single model + TTA", &self.tta.tta);
        row(&mut out, "best ensemble member", &self.ensembles.best_member);
        row(&mut out, "logit-sum ensemble", &self.ensembles.logit_sum);
        out.push('\n');
        header(&mut out, "Ensemble combiners (ArcFace + combined pair)", n, "seed");
        row(&mut out, "vote", &self.combiners.vote);
        row(&mut out, "stacking", &self.combiners.stacking);
        row(&mut out, "logits sum", &self.combiners.logit_sum);
        out.push('\n');
        header(&mut out, "Distillation", n, "seed");
        row(&mut out, "teacher", &self.distillation.teacher);
        row(&mut out, "student, CE only", &self.distillation.ce_student);
        row(&mut out, "student, KD + CE", &self.distillation.kd_student);
        out
    }
}
