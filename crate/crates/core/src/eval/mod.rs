//! Downstream evaluation of a trained encoder.
//!
//! Representations of each segment are averaged over `M` sampled views and
//! then scored with a linear probe (accuracy, macro AUPRC) and with
//! clustering indices computed directly on the representation vectors.
//! The encoder is only ever borrowed immutably here.

pub mod metrics;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{sample_views, ContextSampler, Segment};
use crate::error::{Error, Result};
use crate::model::ConvCnpModel;
use crate::optim::{Adam, AdamConfig};
use crate::parallel;
use crate::tensor::Tensor;
use crate::trainer::rng_for;

/// First RNG stream used for per-segment view sampling during extraction.
const EXTRACT_STREAM: u64 = 1 << 32;
const SPLIT_STREAM: u64 = 2;
const PROBE_STREAM: u64 = 3;
const FORECAST_STREAM: u64 = 4;

/// One aggregated representation per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    /// `[N, d_R]`.
    pub reps: Tensor,
    pub labels: Vec<usize>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let d = self.reps.shape()[1];
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(self.reps.row(i));
        }
        Self {
            reps: Tensor::new(&[idx.len(), d], data).expect("subset shape"),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Mean representation over `m` views of one segment.
pub fn aggregate_views<R: Rng + ?Sized>(
    model: &ConvCnpModel,
    segment: &Segment,
    m: usize,
    sampler: &ContextSampler,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Config("need at least one view".into()));
    }
    let views = sample_views(segment, m, sampler, rng)?;
    let tape = Tape::new();
    let bound = model.bind_frozen(&tape);
    let embeddings = views
        .iter()
        .map(|v| bound.embed(&v.context_x, &v.context_y))
        .collect::<Result<Vec<_>>>()?;
    let (_, reps) = bound.encode(&embeddings)?;
    Ok(reps.mean_axis(0, false)?.value().into_data())
}

/// Encode every labelled segment. Segment `i` samples its views from its own
/// RNG stream, so results do not depend on scheduling.
pub fn extract(
    model: &ConvCnpModel,
    segments: &[Segment],
    m: usize,
    sampler: &ContextSampler,
    seed: u64,
) -> Result<EncodedDataset> {
    let labels = segments
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| Error::Data(format!("segment {} has no label", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = parallel::map_range(segments.len(), |i| {
        let mut rng = rng_for(seed, EXTRACT_STREAM + i as u64);
        aggregate_views(model, &segments[i], m, sampler, &mut rng)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EncodedDataset {
        reps: Tensor::from_rows(&rows)?,
        labels,
    })
}

/// Per-class shuffled index lists, keyed by class id.
fn shuffled_by_class<R: Rng + ?Sized>(labels: &[usize], idx: &[usize], rng: &mut R) -> Vec<(usize, Vec<usize>)> {
    let mut by: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &i in idx {
        by.entry(labels[i]).or_default().push(i);
    }
    by.into_iter()
        .map(|(c, mut v)| {
            v.shuffle(rng);
            (c, v)
        })
        .collect()
}

/// Stratified `(train, test)` split holding out `test_fraction` of each class
/// (at least one sample for classes with two or more members).
pub fn stratified_split<R: Rng + ?Sized>(
    labels: &[usize],
    test_fraction: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..labels.len()).collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, v) in shuffled_by_class(labels, &all, rng) {
        let mut n_test = (v.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 && v.len() >= 2 && test_fraction > 0.0 {
            n_test = 1;
        }
        n_test = n_test.min(v.len().saturating_sub(1));
        test.extend_from_slice(&v[..n_test]);
        train.extend_from_slice(&v[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Share of the labelled subset used for fitting; the rest selects the
    /// best step.
    pub fit_fraction: f64,
    pub eval_every: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 1e-2,
            fit_fraction: 0.8,
            eval_every: 25,
        }
    }
}

/// Single linear layer on standardized representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// `[d_R, n_classes]`.
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl ProbeModel {
    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let k = self.n_classes();
        let mut out = self.bias.clone();
        for (j, &v) in x.iter().enumerate() {
            let z = (v - self.feature_mean[j]) / self.feature_scale[j];
            let w = &self.weights.data()[j * k..(j + 1) * k];
            out.iter_mut().zip(w).for_each(|(o, wv)| *o += z * wv);
        }
        out
    }

    /// Softmax class probabilities per row.
    pub fn predict_proba(&self, reps: &Tensor) -> Vec<Vec<f64>> {
        (0..reps.shape()[0])
            .map(|i| softmax(&self.logits(reps.row(i))))
            .collect()
    }

    pub fn predict(&self, reps: &Tensor) -> Vec<usize> {
        self.predict_proba(reps).iter().map(|p| argmax(p)).collect()
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
        .0
}

/// Stratified labelled subset: the first `ceil(fraction · n_c)` of each
/// class in a seeded order, so smaller fractions are nested in larger ones.
pub fn labelled_subset<R: Rng + ?Sized>(labels: &[usize], fraction: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("label fraction must be in (0, 1], got {fraction}")));
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    let mut out = Vec::new();
    for (_, v) in shuffled_by_class(labels, &all, rng) {
        let n = ((v.len() as f64 * fraction).ceil() as usize).clamp(1, v.len());
        out.extend_from_slice(&v[..n]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Fit a probe on a stratified `label_fraction` of `encoded`.
pub fn train_probe<R: Rng + ?Sized>(
    encoded: &EncodedDataset,
    label_fraction: f64,
    cfg: &ProbeConfig,
    rng: &mut R,
) -> Result<ProbeModel> {
    let n_classes = encoded.n_classes();
    let labelled = labelled_subset(&encoded.labels, label_fraction, rng)?;
    let present: std::collections::BTreeSet<usize> = labelled.iter().map(|&i| encoded.labels[i]).collect();
    let missing: Vec<usize> = (0..n_classes).filter(|c| !present.contains(c)).collect();
    if !missing.is_empty() || n_classes < 2 {
        return Err(Error::Data(format!(
            "labelled split lacks classes {missing:?} (n_classes = {n_classes})"
        )));
    }
    // fit / validation sub-split, stratified
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for (_, v) in shuffled_by_class(&encoded.labels, &labelled, rng) {
        let n_fit = ((v.len() as f64 * cfg.fit_fraction).ceil() as usize).clamp(1, v.len());
        fit.extend_from_slice(&v[..n_fit]);
        val.extend_from_slice(&v[n_fit..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    fit_probe(&encoded.subset(&fit), &encoded.subset(&val), n_classes, cfg)
}

/// Gradient-descent softmax regression on `fit`, keeping the parameters
/// with the best accuracy on `val` when it is non-empty.
pub fn fit_probe(
    fit: &EncodedDataset,
    val: &EncodedDataset,
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeModel> {
    let (n, d) = (fit.len(), fit.reps.shape()[1]);
    if n == 0 {
        return Err(Error::Data("empty probe training set".into()));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        mean.iter_mut().zip(fit.reps.row(i)).for_each(|(m, v)| *m += v / n as f64);
    }
    let mut scale = vec![0.0; d];
    for i in 0..n {
        for (j, v) in fit.reps.row(i).iter().enumerate() {
            scale[j] += (v - mean[j]).powi(2) / n as f64;
        }
    }
    scale.iter_mut().for_each(|s| *s = if s.sqrt() > 1e-8 { s.sqrt() } else { 1.0 });

    let mut probe = ProbeModel {
        weights: Tensor::zeros(&[d, n_classes]),
        bias: vec![0.0; n_classes],
        feature_mean: mean,
        feature_scale: scale,
    };
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            fit.reps
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, v)| (v - probe.feature_mean[j]) / probe.feature_scale[j])
                .collect()
        })
        .collect();
    let adam_cfg = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, [d * n_classes, n_classes]);
    let mut best: Option<(f64, ProbeModel)> = None;
    for step in 0..=cfg.steps {
        if !val.is_empty() && (step % cfg.eval_every.max(1) == 0 || step == cfg.steps) {
            let probs = probe.predict_proba(&val.reps);
            let acc = metrics::accuracy(&probs.iter().map(|p| argmax(p)).collect::<Vec<_>>(), &val.labels);
            // ties go to the later, longer-trained probe
            if best.as_ref().is_none_or(|(a, _)| acc >= *a) {
                best = Some((acc, probe.clone()));
            }
        }
        if step == cfg.steps {
            break;
        }
        let mut gw = vec![0.0; d * n_classes];
        let mut gb = vec![0.0; n_classes];
        for (zi, &li) in z.iter().zip(&fit.labels) {
            let mut p = softmax(&probe.logits_std(zi));
            p[li] -= 1.0;
            for (j, &zv) in zi.iter().enumerate() {
                for c in 0..n_classes {
                    gw[j * n_classes + c] += zv * p[c] / n as f64;
                }
            }
            gb.iter_mut().zip(&p).for_each(|(g, v)| *g += v / n as f64);
        }
        let mut bias = Tensor::from_vec(std::mem::take(&mut probe.bias));
        adam.step(
            &mut [&mut probe.weights, &mut bias],
            &[Tensor::new(&[d, n_classes], gw)?, Tensor::from_vec(gb)],
        )?;
        probe.bias = bias.into_data();
    }
    Ok(best.map_or(probe, |(_, p)| p))
}

impl ProbeModel {
    fn logits_std(&self, z: &[f64]) -> Vec<f64> {
        let k = self.n_classes();
        let mut out = self.bias.clone();
        for (j, &v) in z.iter().enumerate() {
            let w = &self.weights.data()[j * k..(j + 1) * k];
            out.iter_mut().zip(w).for_each(|(o, wv)| *o += v * wv);
        }
        out
    }
}

pub fn probe_accuracy(probe: &ProbeModel, test: &EncodedDataset) -> f64 {
    metrics::accuracy(&probe.predict(&test.reps), &test.labels)
}

pub fn probe_auprc(probe: &ProbeModel, test: &EncodedDataset) -> Result<f64> {
    metrics::macro_auprc(&probe.predict_proba(&test.reps), &test.labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Views averaged into each segment representation.
    pub m_views: usize,
    pub test_fraction: f64,
    pub label_fraction: f64,
    pub seed: u64,
    pub probe: ProbeConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            m_views: 4,
            test_fraction: 0.2,
            label_fraction: 0.8,
            seed: 0,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub auprc: f64,
    pub silhouette: f64,
    pub davies_bouldin: f64,
}

impl EvalReport {
    pub fn write_csv(&self, seed: u64, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "metric,value,seed")?;
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("auprc", self.auprc),
            ("silhouette", self.silhouette),
            ("davies_bouldin", self.davies_bouldin),
        ] {
            writeln!(f, "{name},{v},{seed}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Fixed train/test partition of an encoded dataset.
pub fn split_encoded(encoded: &EncodedDataset, cfg: &EvalConfig) -> (EncodedDataset, EncodedDataset) {
    let (train, test) = stratified_split(&encoded.labels, cfg.test_fraction, &mut rng_for(cfg.seed, SPLIT_STREAM));
    (encoded.subset(&train), encoded.subset(&test))
}

/// Probe metrics on the held-out split plus clustering indices on all
/// representations.
pub fn evaluate_encoded(encoded: &EncodedDataset, cfg: &EvalConfig) -> Result<EvalReport> {
    let (train, test) = split_encoded(encoded, cfg);
    let probe = train_probe(&train, cfg.label_fraction, &cfg.probe, &mut rng_for(cfg.seed, PROBE_STREAM))?;
    Ok(EvalReport {
        accuracy: probe_accuracy(&probe, &test),
        auprc: probe_auprc(&probe, &test)?,
        silhouette: metrics::silhouette(&encoded.reps, &encoded.labels)?,
        davies_bouldin: metrics::davies_bouldin(&encoded.reps, &encoded.labels)?,
    })
}

pub fn evaluate(
    model: &ConvCnpModel,
    segments: &[Segment],
    sampler: &ContextSampler,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let encoded = extract(model, segments, cfg.m_views, sampler, cfg.seed)?;
    evaluate_encoded(&encoded, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub fraction: f64,
    pub accuracy: f64,
    pub auprc: f64,
}

/// Probe accuracy and AUPRC for each label fraction on one fixed split.
/// Labelled subsets are nested across fractions.
pub fn label_sweep_encoded(encoded: &EncodedDataset, fractions: &[f64], cfg: &EvalConfig) -> Result<Vec<SweepPoint>> {
    let (train, test) = split_encoded(encoded, cfg);
    let points = parallel::map_slice(fractions, |&fraction| -> Result<SweepPoint> {
        let probe = train_probe(&train, fraction, &cfg.probe, &mut rng_for(cfg.seed, PROBE_STREAM))?;
        Ok(SweepPoint {
            fraction,
            accuracy: probe_accuracy(&probe, &test),
            auprc: probe_auprc(&probe, &test)?,
        })
    });
    points.into_iter().collect()
}

pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "fraction,accuracy,auprc")?;
    for p in points {
        writeln!(f, "{},{},{}", p.fraction, p.accuracy, p.auprc)?;
    }
    f.flush()?;
    Ok(())
}

/// Full-window prediction of one segment from a sampled context set.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub x: Vec<f64>,
    /// `[n, C]`.
    pub y_true: Tensor,
    pub mu: Tensor,
    pub sigma: Tensor,
    pub context_idx: Vec<usize>,
}

impl Forecast {
    /// Root mean squared error of the mean over all targets and channels.
    pub fn rmse(&self) -> f64 {
        let se: f64 = self
            .mu
            .data()
            .iter()
            .zip(self.y_true.data())
            .map(|(m, y)| (m - y) * (m - y))
            .sum();
        (se / self.mu.len() as f64).sqrt()
    }

    pub fn write_csv(&self, channel: usize, path: &Path) -> Result<()> {
        let c = self.y_true.shape()[1];
        if channel >= c {
            return Err(Error::Config(format!("channel {channel} out of range (C = {c})")));
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,y_true,mu,sigma")?;
        for (i, x) in self.x.iter().enumerate() {
            let k = i * c + channel;
            writeln!(
                f,
                "{x},{},{},{}",
                self.y_true.data()[k],
                self.mu.data()[k],
                self.sigma.data()[k]
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

pub fn forecast<R: Rng + ?Sized>(
    model: &ConvCnpModel,
    segment: &Segment,
    sampler: &ContextSampler,
    rng: &mut R,
) -> Result<Forecast> {
    let view = sample_views(segment, 1, sampler, rng)?.remove(0);
    let pred = model.predict(&view.context_x, &view.context_y, &view.target_x)?;
    Ok(Forecast {
        x: view.target_x,
        y_true: view.target_y,
        mu: pred.mu,
        sigma: pred.sigma,
        context_idx: view.context_idx,
    })
}

/// Mean forecast RMSE over `segments`, each with its own seeded context draw.
pub fn mean_forecast_rmse(
    model: &ConvCnpModel,
    segments: &[Segment],
    sampler: &ContextSampler,
    seed: u64,
) -> Result<f64> {
    let r = parallel::map_range(segments.len(), |i| {
        let mut rng = rng_for(seed, FORECAST_STREAM + ((i as u64) << 8));
        forecast(model, &segments[i], sampler, &mut rng).map(|f| f.rmse())
    });
    let r = r.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(r.iter().sum::<f64>() / r.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blobs(n_per: usize, sep: f64, seed: u64) -> EncodedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..n_per {
                let base = if c == 0 { -sep } else { sep };
                rows.push(vec![base + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
                labels.push(c);
            }
        }
        EncodedDataset {
            reps: Tensor::from_rows(&rows).unwrap(),
            labels,
        }
    }

    #[test]
    fn separable_probe_fits_perfectly() {
        let data = blobs(20, 3.0, 1);
        let probe = train_probe(&data, 1.0, &ProbeConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(probe_accuracy(&probe, &data), 1.0);
        assert_eq!(probe_auprc(&probe, &data).unwrap(), 1.0);
    }

    #[test]
    fn label_fraction_one_uses_everything() {
        let labels = vec![0, 1, 0, 1, 2, 2];
        let s = labelled_subset(&labels, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn subsets_are_nested() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let small = labelled_subset(&labels, 0.1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let big = labelled_subset(&labels, 0.8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(small.len(), 4);
        assert!(small.iter().all(|i| big.contains(i)));
    }

    #[test]
    fn missing_class_is_reported() {
        let data = EncodedDataset {
            reps: Tensor::zeros(&[3, 2]),
            labels: vec![0, 0, 2],
        };
        let err = train_probe(&data, 1.0, &ProbeConfig::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err()
            .to_string();
        assert!(err.contains("[1]"), "{err}");
    }

    #[test]
    fn split_is_disjoint_and_stratified() {
        let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let (tr, te) = stratified_split(&labels, 0.2, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(te.len(), 10);
        assert_eq!(tr.len(), 40);
        assert!(te.iter().all(|i| !tr.contains(i)));
        for c in 0..5 {
            assert_eq!(te.iter().filter(|&&i| labels[i] == c).count(), 2);
        }
    }

    fn tiny_model() -> ConvCnpModel {
        let cfg = ModelConfig {
            grid_size: 16,
            cnn_layers: 2,
            cnn_channels: 4,
            kernel_width: 3,
            encoding_size: 5,
            decoder_hidden: 4,
            ..ModelConfig::default()
        };
        ConvCnpModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn single_view_aggregate_equals_representation() {
        let model = tiny_model();
        let seg = crate::data::synth_segment(crate::data::Waveform::Sine, 2.0, 1.0, 0.0, 40, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let sampler = ContextSampler::fixed(0.25, 0.75, 8);
        let agg = aggregate_views(&model, &seg, 1, &sampler, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let view = sample_views(&seg, 1, &sampler, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().remove(0);
        assert_eq!(agg, model.represent(&view.context_x, &view.context_y).unwrap());
    }

    #[test]
    fn identical_views_aggregate_to_the_same_vector() {
        let model = tiny_model();
        let seg = crate::data::synth_segment(crate::data::Waveform::Sine, 2.0, 1.0, 0.0, 40, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // every eligible point is taken, so all views coincide
        let sampler = ContextSampler::fixed(0.25, 0.75, 20);
        assert_eq!(sampler.eligible(&seg).len(), 20);
        let agg = aggregate_views(&model, &seg, 3, &sampler, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let r = model.represent(&seg.select(&sampler.eligible(&seg)).0, &seg.select(&sampler.eligible(&seg)).1).unwrap();
        for (a, b) in agg.iter().zip(&r) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
