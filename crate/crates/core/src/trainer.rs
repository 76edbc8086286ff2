//! Optimization loop.
//!
//! Each step draws `K` segments with `M` views each, runs the batched
//! forward pass, forms `λ·NLL + contrastive`, back-propagates, clips the
//! global gradient norm and applies one Adam update. Steps run sequentially
//! on one tape; everything is seeded, so a fixed seed reproduces the final
//! parameters bitwise.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::config::TrainConfig;
use crate::data::{make_batch, Segment};
use crate::error::{Error, Result};
use crate::model::{ConvCnpModel, ViewInput};
use crate::objectives::{combined_loss, LossBreakdown};
use crate::optim::{clip_global_norm, Adam};
use crate::tensor::Tensor;

/// RNG stream used for parameter initialization.
pub const INIT_STREAM: u64 = 0;
/// RNG stream used for batch assembly and view sampling.
pub const DATA_STREAM: u64 = 1;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub nll: f64,
    pub contrastive: f64,
    pub total: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn push(&mut self, r: StepRecord) {
        debug_assert!(self.records.last().is_none_or(|p| p.step < r.step));
        self.records.push(r);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "step,nll,contrastive,total,wall_ms")?;
        for r in &self.records {
            writeln!(
                f,
                "{},{},{},{},{:.3}",
                r.step, r.nll, r.contrastive, r.total, r.wall_ms
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Initial model for a dataset with `channels` input channels.
pub fn init_model(cfg: &TrainConfig, channels: usize) -> Result<ConvCnpModel> {
    ConvCnpModel::new(cfg.model_config(channels), &mut rng_for(cfg.seed, INIT_STREAM))
}

/// Forward pass and loss of one batch; returns the loss and per-parameter
/// gradients without touching the model.
pub fn loss_and_gradients(
    model: &ConvCnpModel,
    batch: &crate::data::SegmentBatch,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let tape = Tape::new();
    let bound = model.bind(&tape);
    let views: Vec<ViewInput<'_>> = batch
        .flat_views()
        .map(|v| ViewInput {
            context_x: &v.context_x,
            context_y: &v.context_y,
            target_x: &v.target_x,
        })
        .collect();
    let targets: Vec<&Tensor> = batch.flat_views().map(|v| &v.target_y).collect();
    let out = bound.forward(&views)?;
    let (total, breakdown) = combined_loss(
        &out.predictions,
        &targets,
        out.reps,
        batch.k(),
        batch.m(),
        cfg.lambda,
        &cfg.contrastive(),
    )?;
    if !breakdown.total.is_finite() {
        return Ok((breakdown, Vec::new()));
    }
    let grads = tape.backward(total)?;
    Ok((breakdown, bound.gradients(&grads)))
}

pub fn train(dataset: &[Segment], cfg: &TrainConfig) -> Result<(ConvCnpModel, TrainLog)> {
    train_with(dataset, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `hook` after every optimizer step.
pub fn train_with<F>(dataset: &[Segment], cfg: &TrainConfig, mut hook: F) -> Result<(ConvCnpModel, TrainLog)>
where
    F: FnMut(&StepRecord, &ConvCnpModel) -> Result<()>,
{
    cfg.validate()?;
    let channels = dataset
        .first()
        .map(Segment::channels)
        .ok_or_else(|| Error::Data("empty training set".into()))?;
    if dataset.len() < cfg.k_per_batch {
        return Err(Error::Data(format!(
            "{} segments available, batch needs K = {}",
            dataset.len(),
            cfg.k_per_batch
        )));
    }
    let mut model = init_model(cfg, channels)?;
    let mut adam = Adam::new(cfg.adam(), model.params().iter().map(|p| p.value.len()));
    let mut rng = rng_for(cfg.seed, DATA_STREAM);
    let sampler = cfg.sampler();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks_exact(cfg.k_per_batch) {
            let started = Instant::now();
            step += 1;
            let segs: Vec<&Segment> = chunk.iter().map(|&i| &dataset[i]).collect();
            let batch = make_batch(&segs, cfg.m_views, &sampler, &mut rng)?;
            let (loss, mut grads) = loss_and_gradients(&model, &batch, cfg)?;
            if !loss.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    step,
                    nll: loss.nll,
                    contrastive: loss.contrastive,
                });
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            let mut params: Vec<&mut Tensor> =
                model.params_mut().iter_mut().map(|p| &mut p.value).collect();
            adam.step(&mut params, &grads)?;
            let record = StepRecord {
                step,
                nll: loss.nll,
                contrastive: loss.contrastive,
                total: loss.total,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            };
            log::debug!(
                "step {step}: total={:.5} nll={:.5} contrastive={:.5}",
                loss.total,
                loss.nll,
                loss.contrastive
            );
            log.push(record);
            hook(&record, &model)?;
        }
    }
    Ok((model, log))
}
