//! Time series ingestion, segmentation and view sampling.
//!
//! A raw [`TimeSeries`] is cut into fixed-length [`Segment`]s whose timestamps
//! are rescaled to `[0, 1]`. Each segment yields `M` random [`ViewPair`]s:
//! the context set is drawn only from the open band `(a, b)` of the window,
//! while the target set is always the full window.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Guard for the channel standard deviation during z-scoring.
pub const NORMALIZE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// Strictly increasing timestamps.
    pub x: Vec<f64>,
    /// Values, shape `[T, C]`.
    pub y: Tensor,
    /// Optional per-timestamp class id.
    pub labels: Option<Vec<usize>>,
}

impl TimeSeries {
    pub fn new(x: Vec<f64>, y: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if y.rank() != 2 || y.shape()[0] != x.len() {
            return Err(Error::shape("TimeSeries::new", &[x.len()], y.shape()));
        }
        if let Some(l) = &labels {
            if l.len() != x.len() {
                return Err(Error::shape("TimeSeries::new", &[x.len()], &[l.len()]));
            }
        }
        if let Some(i) = x.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at row {}",
                i + 1
            )));
        }
        Ok(Self { x, y, labels })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.y.shape()[1]
    }

    /// Channel-wise z-score; constant channels become zeros.
    pub fn normalize(&mut self) {
        zscore_columns(&mut self.y);
    }
}

/// Z-score every column of a `[T, C]` tensor in place. Columns whose standard
/// deviation is below [`NORMALIZE_EPS`] become zeros.
fn zscore_columns(y: &mut Tensor) {
    let (t, c) = (y.shape()[0], y.shape()[1]);
    if t == 0 {
        return;
    }
    for ch in 0..c {
        let col = (0..t).map(|i| y.data()[i * c + ch]);
        let mean = col.clone().sum::<f64>() / t as f64;
        let sd = (col.map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64).sqrt();
        let d = y.data_mut();
        for i in 0..t {
            let v = &mut d[i * c + ch];
            *v = if sd < NORMALIZE_EPS { 0.0 } else { (*v - mean) / sd };
        }
    }
}

/// One contiguous window of a series with timestamps rescaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: usize,
    pub x: Vec<f64>,
    /// Shape `[window, C]`.
    pub y: Tensor,
    pub label: Option<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.y.shape()[1]
    }

    /// Channel-wise z-score over this window only.
    pub fn normalize(&mut self) {
        zscore_columns(&mut self.y);
    }

    /// Rows `idx` of the window as `(x, y[n, C])`.
    pub fn select(&self, idx: &[usize]) -> (Vec<f64>, Tensor) {
        let c = self.channels();
        let x = idx.iter().map(|&i| self.x[i]).collect();
        let mut y = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            y.extend_from_slice(self.y.row(i));
        }
        (x, Tensor::new(&[idx.len(), c], y).expect("selected rows"))
    }
}

/// One random sampling of a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub view_id: usize,
    /// Window row indices of the context points, ascending.
    pub context_idx: Vec<usize>,
    pub context_x: Vec<f64>,
    pub context_y: Tensor,
    pub target_x: Vec<f64>,
    pub target_y: Tensor,
}

/// `K` segments with `M` views each, in segment-major order.
#[derive(Debug, Clone)]
pub struct SegmentBatch {
    pub segment_ids: Vec<usize>,
    pub views: Vec<Vec<ViewPair>>,
}

impl SegmentBatch {
    pub fn k(&self) -> usize {
        self.views.len()
    }

    pub fn m(&self) -> usize {
        self.views.first().map_or(0, Vec::len)
    }

    pub fn flat_views(&self) -> impl Iterator<Item = &ViewPair> {
        self.views.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.views.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Thresholds and context-size range for out-of-context sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextSampler {
    pub a: f64,
    pub b: f64,
    pub n_context_min: usize,
    pub n_context_max: usize,
}

impl Default for ContextSampler {
    fn default() -> Self {
        Self {
            a: 0.25,
            b: 0.75,
            n_context_min: 20,
            n_context_max: 100,
        }
    }
}

impl ContextSampler {
    pub fn fixed(a: f64, b: f64, n: usize) -> Self {
        Self {
            a,
            b,
            n_context_min: n,
            n_context_max: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.a && self.a < self.b && self.b <= 1.0) {
            return Err(Error::Config(format!(
                "context thresholds need 0 <= a < b <= 1, got a={} b={}",
                self.a, self.b
            )));
        }
        if self.n_context_min == 0 || self.n_context_min > self.n_context_max {
            return Err(Error::Config(format!(
                "invalid context size range [{}, {}]",
                self.n_context_min, self.n_context_max
            )));
        }
        Ok(())
    }

    /// Indices of window points strictly inside `(a, b)`.
    pub fn eligible(&self, segment: &Segment) -> Vec<usize> {
        (0..segment.len())
            .filter(|&i| self.a < segment.x[i] && segment.x[i] < self.b)
            .collect()
    }
}

/// Cut `series` into windows of `window_size` rows every `stride` rows.
/// A trailing partial window is dropped.
pub fn segmentize(series: &TimeSeries, window_size: usize, stride: usize) -> Result<Vec<Segment>> {
    if series.is_empty() {
        return Err(Error::Data("empty series".into()));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    if window_size < 2 {
        return Err(Error::Config("window size must be >= 2".into()));
    }
    if window_size > series.len() {
        return Err(Error::Data(format!(
            "window {window_size} larger than series of length {}",
            series.len()
        )));
    }
    let c = series.channels();
    let mut out = Vec::new();
    let mut start = 0;
    while start + window_size <= series.len() {
        let xs = &series.x[start..start + window_size];
        let (x0, x1) = (xs[0], xs[window_size - 1]);
        let x = xs.iter().map(|v| (v - x0) / (x1 - x0)).collect();
        let y = Tensor::new(
            &[window_size, c],
            series.y.data()[start * c..(start + window_size) * c].to_vec(),
        )?;
        let label = series
            .labels
            .as_ref()
            .map(|l| majority(&l[start..start + window_size]));
        out.push(Segment {
            id: out.len(),
            x,
            y,
            label,
        });
        start += stride;
    }
    Ok(out)
}

/// Most frequent label; ties go to the smallest id.
fn majority(labels: &[usize]) -> usize {
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let mut best = (0, 0);
    for (l, n) in counts {
        if n > best.1 {
            best = (l, n);
        }
    }
    best.0
}

/// Draw `m` independent views of `segment`.
pub fn sample_views<R: Rng + ?Sized>(
    segment: &Segment,
    m: usize,
    sampler: &ContextSampler,
    rng: &mut R,
) -> Result<Vec<ViewPair>> {
    sampler.validate()?;
    let eligible = sampler.eligible(segment);
    let all: Vec<usize> = (0..segment.len()).collect();
    let (target_x, target_y) = segment.select(&all);
    let mut views = Vec::with_capacity(m);
    for view_id in 0..m {
        let n = rng.random_range(sampler.n_context_min..=sampler.n_context_max);
        if eligible.len() < n {
            return Err(Error::Data(format!(
                "segment {} has {} points in ({}, {}), need {n} context points",
                segment.id,
                eligible.len(),
                sampler.a,
                sampler.b
            )));
        }
        let mut context_idx: Vec<usize> = index::sample(rng, eligible.len(), n)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        context_idx.sort_unstable();
        let (context_x, context_y) = segment.select(&context_idx);
        views.push(ViewPair {
            view_id,
            context_idx,
            context_x,
            context_y,
            target_x: target_x.clone(),
            target_y: target_y.clone(),
        });
    }
    Ok(views)
}

/// Shuffle `segments` and draw `m` views of each.
pub fn make_batch<R: Rng + ?Sized>(
    segments: &[&Segment],
    m: usize,
    sampler: &ContextSampler,
    rng: &mut R,
) -> Result<SegmentBatch> {
    if segments.len() < 2 {
        return Err(Error::Data("contrastive batch needs K ≥ 2 segments".into()));
    }
    if m < 2 {
        return Err(Error::Config("contrastive batch needs M ≥ 2 views".into()));
    }
    let mut order: Vec<&Segment> = segments.to_vec();
    order.shuffle(rng);
    let mut views = Vec::with_capacity(order.len());
    for s in &order {
        views.push(sample_views(s, m, sampler, rng)?);
    }
    Ok(SegmentBatch {
        segment_ids: order.iter().map(|s| s.id).collect(),
        views,
    })
}

/// Waveform families used by the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Waveform {
    Sine,
    Sawtooth,
    Square,
    AmSine,
}

impl Waveform {
    pub const ALL: [Waveform; 4] = [
        Waveform::Sine,
        Waveform::Sawtooth,
        Waveform::Square,
        Waveform::AmSine,
    ];

    /// Noise-free value at `x` for frequency `freq` (cycles per window).
    pub fn eval(self, x: f64, freq: f64, amp: f64, phase: f64) -> f64 {
        let arg = 2.0 * PI * freq * x + phase;
        match self {
            Waveform::Sine => amp * arg.sin(),
            Waveform::Sawtooth => {
                let t = arg / (2.0 * PI);
                amp * (2.0 * (t - t.floor()) - 1.0)
            }
            Waveform::Square => amp * if arg.sin() >= 0.0 { 1.0 } else { -1.0 },
            Waveform::AmSine => {
                let envelope = 0.5 + 0.5 * (2.0 * PI * freq * x).sin();
                amp * envelope * (3.0 * arg).sin()
            }
        }
    }
}

/// Parameters of the labelled synthetic waveform dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub segments_per_class: usize,
    pub window_len: usize,
    pub noise_sd: f64,
    /// Frequency band (cycles per window) shared by all classes.
    pub freq_min: f64,
    pub freq_max: f64,
    pub amp_min: f64,
    pub amp_max: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 4,
            segments_per_class: 50,
            window_len: 200,
            noise_sd: 0.1,
            freq_min: 3.0,
            freq_max: 5.0,
            amp_min: 0.7,
            amp_max: 1.3,
        }
    }
}

impl SynthConfig {
    /// Waveform and frequency offset for class `c`. Classes beyond the four
    /// base families reuse them at a higher frequency band.
    pub fn class_family(&self, c: usize) -> (Waveform, f64) {
        (Waveform::ALL[c % 4], (c / 4) as f64 * (self.freq_max - self.freq_min + 1.0))
    }
}

/// Evenly spaced window coordinates on `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// One synthetic segment of `waveform` plus Gaussian noise.
pub fn synth_segment<R: Rng + ?Sized>(
    waveform: Waveform,
    freq: f64,
    amp: f64,
    phase: f64,
    window_len: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<Segment> {
    let x = unit_grid(window_len);
    let noise = Normal::new(0.0, noise_sd.max(0.0))
        .map_err(|e| Error::Config(format!("noise_sd: {e}")))?;
    let y = x
        .iter()
        .map(|&xi| {
            let v = waveform.eval(xi, freq, amp, phase);
            if noise_sd > 0.0 {
                v + noise.sample(rng)
            } else {
                v
            }
        })
        .collect();
    Ok(Segment {
        id: 0,
        x,
        y: Tensor::new(&[window_len, 1], y)?,
        label: None,
    })
}

/// Labelled waveform dataset, class-major order, ids `0..n`.
pub fn synth_generate<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Vec<Segment>> {
    if cfg.n_classes < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    if cfg.window_len < 2 || cfg.segments_per_class == 0 {
        return Err(Error::Config("window_len >= 2 and segments_per_class >= 1 required".into()));
    }
    if !(cfg.freq_min > 0.0 && cfg.freq_min <= cfg.freq_max && cfg.amp_min <= cfg.amp_max) {
        return Err(Error::Config("invalid frequency or amplitude range".into()));
    }
    let mut out = Vec::with_capacity(cfg.n_classes * cfg.segments_per_class);
    for c in 0..cfg.n_classes {
        let (wave, offset) = cfg.class_family(c);
        for _ in 0..cfg.segments_per_class {
            let freq = offset + rng.random_range(cfg.freq_min..=cfg.freq_max);
            let amp = rng.random_range(cfg.amp_min..=cfg.amp_max);
            let phase = rng.random_range(0.0..2.0 * PI);
            let mut s = synth_segment(wave, freq, amp, phase, cfg.window_len, cfg.noise_sd, rng)?;
            s.id = out.len();
            s.label = Some(c);
            out.push(s);
        }
    }
    Ok(out)
}

/// Noise-free unit-amplitude sinusoids with random phase and frequency in
/// `[freq_min, freq_max]`.
pub fn sine_segments<R: Rng + ?Sized>(
    n: usize,
    window_len: usize,
    freq_min: f64,
    freq_max: f64,
    rng: &mut R,
) -> Result<Vec<Segment>> {
    (0..n)
        .map(|id| {
            let freq = rng.random_range(freq_min..=freq_max);
            let phase = rng.random_range(0.0..2.0 * PI);
            let mut s = synth_segment(Waveform::Sine, freq, 1.0, phase, window_len, 0.0, rng)?;
            s.id = id;
            s.label = Some(0);
            Ok(s)
        })
        .collect()
}

/// Concatenate segments into one series with unit time steps.
pub fn segments_to_series(segments: &[Segment]) -> Result<TimeSeries> {
    let c = segments
        .first()
        .map(Segment::channels)
        .ok_or_else(|| Error::Data("no segments".into()))?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut labels = Vec::new();
    let with_labels = segments.iter().all(|s| s.label.is_some());
    for s in segments {
        if s.channels() != c {
            return Err(Error::shape("segments_to_series", &[c], &[s.channels()]));
        }
        for i in 0..s.len() {
            x.push(x.len() as f64);
            y.extend_from_slice(s.y.row(i));
            if with_labels {
                labels.push(s.label.unwrap_or_default());
            }
        }
    }
    let t = x.len();
    TimeSeries::new(x, Tensor::new(&[t, c], y)?, with_labels.then_some(labels))
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvSchema {
    /// Required number of value columns, if known.
    pub channels: Option<usize>,
    /// Apply channel-wise z-score normalization.
    pub normalize: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            channels: None,
            normalize: true,
        }
    }
}

/// Read a `time,ch0,...,chN[,label]` file.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeries> {
    let parse_err = |line: u64, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"time") {
        return Err(parse_err(1, "first column must be `time`".into()));
    }
    let has_label = cols.last() == Some(&"label");
    let channels = cols.len() - 1 - usize::from(has_label);
    for (i, name) in cols[1..1 + channels].iter().enumerate() {
        if *name != format!("ch{i}") {
            return Err(parse_err(1, format!("expected column `ch{i}`, found `{name}`")));
        }
    }
    if channels == 0 {
        return Err(parse_err(1, "no value columns".into()));
    }
    if let Some(want) = schema.channels {
        if want != channels {
            return Err(parse_err(1, format!("expected {want} channels, found {channels}")));
        }
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or_default();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("column {i}: invalid number `{s}`")))
        };
        let t = num(0)?;
        if let Some(&prev) = x.last() {
            if !(t > prev) {
                return Err(parse_err(
                    line,
                    format!("time not strictly increasing ({t} after {prev})"),
                ));
            }
        }
        x.push(t);
        for ch in 0..channels {
            y.push(num(1 + ch)?);
        }
        if has_label {
            let s = rec.get(1 + channels).unwrap_or_default();
            let l = s
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("invalid label `{s}`")))?;
            labels.push(l);
        }
    }
    if x.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let t = x.len();
    let mut series = TimeSeries::new(x, Tensor::new(&[t, channels], y)?, has_label.then_some(labels))?;
    if schema.normalize {
        series.normalize();
    }
    Ok(series)
}

/// Write a series in the format read by [`load_csv`].
pub fn write_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    let c = series.channels();
    let mut header = vec!["time".to_string()];
    header.extend((0..c).map(|i| format!("ch{i}")));
    if series.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..series.len() {
        let mut row = vec![series.x[i].to_string()];
        row.extend(series.y.row(i).iter().map(f64::to_string));
        if let Some(l) = &series.labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("csv: {other:?}")),
    }
}
