//! Desk-scale training of [`TinySegmenter`] with `bce + lambda * topo`.

mod adam;
mod data;
mod model;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use data::{
    load_dataset, sample_patch, save_dataset, split_dataset, synth_dataset, synth_sample, synth_samples, train_count,
    PatchDraw, Sample, SynthKind, SynthSample,
};
pub use model::{ForwardPass, TinySegmenter, KERNEL, N_FILTERS, N_PARAMS};

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::binarize;
use crate::loss::{total_loss, DEFAULT_LAMBDA};
use crate::metrics::{betti_error, confusion, report_from, BettiErrorParams, ConfusionCounts, MetricReport};
use crate::numfmt::sig9;
use crate::persistence::{Dims, FiltrationKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub patch: usize,
    pub batch: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub lambda: f64,
    pub seed: u64,
    pub dims: Dims,
    pub filtration: FiltrationKind,
    /// Epochs trained with `lambda = 0` before the topological term starts.
    pub warmup_epochs: usize,
    pub init_scale: f64,
    /// Betti-error settings for the validation report.
    pub validation: BettiErrorParams,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            patch: 64,
            batch: 1,
            epochs: 100,
            adam: AdamConfig::default(),
            lambda: DEFAULT_LAMBDA,
            seed,
            dims: Dims::BOTH,
            filtration: FiltrationKind::Superlevel,
            warmup_epochs: 0,
            init_scale: 0.1,
            validation: BettiErrorParams::with_seed(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch < 8 {
            return Err(Error::invalid(format!("patch must be at least 8, got {}", self.patch)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be a nonnegative number, got {}", self.lambda)));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::invalid("init scale must be a nonnegative number"));
        }
        if self.validation.n_patches == 0 {
            return Err(Error::invalid("validation needs at least one Betti patch"));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Means over the epoch's training steps.
    pub bce: f64,
    pub topo: f64,
    pub total: f64,
    pub validation: MetricReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,bce,topo,total,accuracy,dice,completeness,correctness,quality,betti_error";

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{HISTORY_HEADER}")?;
        for r in &self.records {
            let v = &r.validation;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                sig9(r.bce),
                sig9(r.topo),
                sig9(r.total),
                sig9(v.accuracy),
                sig9(v.dice),
                sig9(v.completeness),
                sig9(v.correctness),
                sig9(v.quality),
                sig9(v.betti_error)
            )?;
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub model: TinySegmenter,
}

/// Validation metrics over `samples`: confusion counts are pooled, the
/// Betti error is the mean of the per-image errors.
pub fn validate_model(model: &TinySegmenter, samples: &[Sample], params: &BettiErrorParams) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::Dataset("empty validation set".into()));
    }
    let mut counts = ConfusionCounts::default();
    let mut betti = 0.0;
    for s in samples {
        let pred = model.forward(&s.image);
        counts += confusion(&binarize(&pred, params.bin_threshold), &binarize(&s.mask, params.bin_threshold))?;
        betti += betti_error(&pred, &s.mask, params)?;
    }
    Ok(report_from(&counts, betti / samples.len() as f64, params))
}

/// Trains on the image/mask pairs in `dir`.
pub fn train(dir: impl AsRef<Path>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let samples = load_dataset(dir)?;
    train_samples(&samples, cfg, |_| {})
}

/// Trains on `samples` (already in sorted order), calling `on_epoch` after
/// every epoch.
pub fn train_samples(samples: &[Sample], cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    for s in samples {
        s.image.same_dims(&s.mask)?;
        if cfg.patch > s.image.width().min(s.image.height()) {
            return Err(Error::invalid(format!(
                "patch {} does not fit {} ({}x{})",
                cfg.patch,
                s.name,
                s.image.width(),
                s.image.height()
            )));
        }
        if cfg.validation.patch > s.image.width().min(s.image.height()) {
            return Err(Error::invalid(format!(
                "validation Betti patch {} does not fit {}",
                cfg.validation.patch, s.name
            )));
        }
    }
    let (train_set, val_set) = split_dataset(samples);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = TinySegmenter::random(&mut rng, cfg.init_scale);
    let mut state = AdamState::new(N_PARAMS);
    let mut step = 0u64;
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        let lambda = if epoch <= cfg.warmup_epochs { 0.0 } else { cfg.lambda };
        let (mut bce, mut topo, mut total) = (0.0, 0.0, 0.0);
        for chunk in train_set.chunks(cfg.batch) {
            let mut grads = vec![0.0; N_PARAMS];
            for s in chunk {
                let (img, mask) = sample_patch(&s.image, &s.mask, cfg.patch, &mut rng)?;
                let pass = model.forward_pass(&img);
                let report = total_loss(&pass.output, &mask, lambda, cfg.dims, cfg.filtration)?;
                let g = model.backward_pass(&pass, &report.grad_f)?;
                for (a, b) in grads.iter_mut().zip(&g) {
                    *a += b / chunk.len() as f64;
                }
                bce += report.bce;
                topo += report.topo;
                total += report.total;
            }
            step += 1;
            adam_step(model.params_mut(), &grads, &mut state, step, &cfg.adam)?;
        }
        let n = train_set.len() as f64;
        let record = EpochRecord {
            epoch,
            bce: bce / n,
            topo: topo / n,
            total: total / n,
            validation: validate_model(&model, val_set, &cfg.validation)?,
        };
        on_epoch(&record);
        history.records.push(record);
    }
    Ok(TrainOutcome { history, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            patch: 32,
            epochs: 3,
            validation: BettiErrorParams {
                patch: 16,
                n_patches: 5,
                seed: 1,
                bin_threshold: 0.5,
            },
            ..TrainConfig::new(seed)
        }
    }

    fn rings(n: usize) -> Vec<Sample> {
        synth_samples(SynthKind::Rings, n, 32, 11)
            .unwrap()
            .into_iter()
            .map(|s| s.sample)
            .collect()
    }

    #[test]
    fn deterministic_history() {
        let data = rings(5);
        let a = train_samples(&data, &small_config(4), |_| {}).unwrap();
        let b = train_samples(&data, &small_config(4), |_| {}).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        assert_eq!(a.history.records.len(), 3);
        let c = train_samples(&data, &small_config(5), |_| {}).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn zero_lambda_total_is_bce() {
        let data = rings(4);
        let cfg = TrainConfig { lambda: 0.0, ..small_config(0) };
        let out = train_samples(&data, &cfg, |_| {}).unwrap();
        for r in &out.history.records {
            assert_eq!(r.total, r.bce);
        }
        let warm = TrainConfig { warmup_epochs: 3, ..small_config(0) };
        assert_eq!(train_samples(&data, &warm, |_| {}).unwrap().history, out.history);
    }

    #[test]
    fn history_csv_layout() {
        let data = rings(3);
        let out = train_samples(&data, &TrainConfig { epochs: 2, ..small_config(1) }, |_| {}).unwrap();
        let mut buf = Vec::new();
        out.history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HISTORY_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,"));
        assert_eq!(lines[2].split(',').count(), 10);
    }

    #[test]
    fn rejects_bad_configs() {
        let data = rings(2);
        for cfg in [
            TrainConfig { patch: 7, ..small_config(0) },
            TrainConfig { patch: 33, ..small_config(0) },
            TrainConfig { lambda: -1.0, ..small_config(0) },
            TrainConfig { batch: 0, ..small_config(0) },
        ] {
            assert!(train_samples(&data, &cfg, |_| {}).is_err());
        }
        assert!(train_samples(&[], &small_config(0), |_| {}).is_err());
    }

    #[test]
    fn single_image_trains_and_validates_on_itself() {
        let data = rings(1);
        let out = train_samples(&data, &small_config(2), |_| {}).unwrap();
        assert_eq!(out.history.records.len(), 3);
    }
}
