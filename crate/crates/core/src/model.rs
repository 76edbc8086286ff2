//! Convolutional conditional neural process over 1-D inputs.
//!
//! The encoder places the context set on a uniform grid with an RBF set
//! convolution (a density channel plus density-normalized signal channels),
//! runs a residual CNN over the grid and mean-pools it into a representation
//! vector. The decoder smooths the grid features back to arbitrary target
//! locations and maps them to a Gaussian mean and standard deviation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound added to every predicted standard deviation.
pub const SIGMA_MIN: f64 = 1e-4;
/// Added to the density channel before normalizing the signal channels.
pub const DENSITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of input channels `C`.
    pub channels: usize,
    pub grid_size: usize,
    pub grid_margin: f64,
    pub cnn_layers: usize,
    pub cnn_channels: usize,
    pub kernel_width: usize,
    pub encoding_size: usize,
    pub decoder_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            grid_size: 64,
            grid_margin: 0.1,
            cnn_layers: 6,
            cnn_channels: 64,
            kernel_width: 5,
            encoding_size: 128,
            decoder_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.channels == 0 {
            return bad("channels must be >= 1");
        }
        if self.grid_size < 2 {
            return bad("grid_size must be >= 2");
        }
        if !(self.grid_margin >= 0.0) {
            return bad("grid_margin must be >= 0");
        }
        if self.cnn_layers == 0 || self.cnn_channels == 0 {
            return bad("cnn_layers and cnn_channels must be >= 1");
        }
        if self.kernel_width % 2 == 0 || self.kernel_width > self.grid_size {
            return bad("kernel_width must be odd and no larger than grid_size");
        }
        if self.encoding_size == 0 || self.decoder_hidden == 0 {
            return bad("encoding_size and decoder_hidden must be >= 1");
        }
        Ok(())
    }

    pub fn grid_spacing(&self) -> f64 {
        (1.0 + 2.0 * self.grid_margin) / (self.grid_size - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let step = self.grid_spacing();
        (0..self.grid_size)
            .map(|g| -self.grid_margin + g as f64 * step)
            .collect()
    }

    /// Grid points on each side that influence one CNN output.
    pub fn receptive_radius(&self) -> usize {
        self.cnn_layers * (self.kernel_width / 2)
    }

    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (c, h, w) = (self.channels, self.cnn_channels, self.kernel_width);
        let mut v = vec![("embed.lengthscale_raw".to_string(), vec![1, 1])];
        for i in 0..self.cnn_layers {
            let cin = if i == 0 { 1 + c } else { h };
            v.push((format!("cnn.{i}.weight"), vec![h, cin, w]));
            v.push((format!("cnn.{i}.bias"), vec![1, h, 1]));
        }
        v.push(("repr.weight".into(), vec![h, self.encoding_size]));
        v.push(("repr.bias".into(), vec![1, self.encoding_size]));
        v.push(("decoder.lengthscale_raw".into(), vec![1, 1]));
        v.push(("decoder.0.weight".into(), vec![h, self.decoder_hidden]));
        v.push(("decoder.0.bias".into(), vec![1, self.decoder_hidden]));
        v.push(("decoder.1.weight".into(), vec![self.decoder_hidden, 2 * c]));
        v.push(("decoder.1.bias".into(), vec![1, 2 * c]));
        v
    }
}

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvCnpModel {
    config: ModelConfig,
    grid_x: Vec<f64>,
    params: Vec<Param>,
}

/// Context set placed on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEmbedding {
    pub grid_x: Vec<f64>,
    /// `[G, 1 + C]`: density followed by the normalized signal channels.
    pub channels: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub r: Vec<f64>,
    pub segment_id: usize,
    pub view_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrediction {
    /// `[n_target, C]`.
    pub mu: Tensor,
    /// `[n_target, C]`, every entry `>= SIGMA_MIN`.
    pub sigma: Tensor,
}

/// Inverse of softplus for `v > 0`.
fn softplus_inv(v: f64) -> f64 {
    v + (-(-v).exp_m1()).ln()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("param shape")
}

/// Pairwise squared distances `[a.len(), b.len()]`.
fn sq_dist(a: &[f64], b: &[f64]) -> Tensor {
    let mut d = Vec::with_capacity(a.len() * b.len());
    for &u in a {
        for &x in b {
            d.push((u - x) * (u - x));
        }
    }
    Tensor::new(&[a.len(), b.len()], d).expect("distance shape")
}

impl ConvCnpModel {
    /// Fresh parameters drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let step = config.grid_spacing();
        let mut params = Vec::new();
        for (name, shape) in config.param_shapes() {
            let value = match name.as_str() {
                "embed.lengthscale_raw" => Tensor::full(&shape, softplus_inv(2.0 * step)),
                "decoder.lengthscale_raw" => Tensor::full(&shape, softplus_inv(step)),
                n if n.starts_with("cnn.") => {
                    let fan_in = (if n.starts_with("cnn.0.") {
                        1 + config.channels
                    } else {
                        config.cnn_channels
                    }) * config.kernel_width;
                    uniform(&shape, 1.0 / (fan_in as f64).sqrt(), rng)
                }
                "repr.weight" | "repr.bias" => {
                    uniform(&shape, 1.0 / (config.cnn_channels as f64).sqrt(), rng)
                }
                "decoder.0.weight" | "decoder.0.bias" => {
                    uniform(&shape, 1.0 / (config.cnn_channels as f64).sqrt(), rng)
                }
                _ => uniform(&shape, 1.0 / (config.decoder_hidden as f64).sqrt(), rng),
            };
            params.push(Param { name, value });
        }
        Ok(Self {
            grid_x: config.grid(),
            config,
            params,
        })
    }

    /// Rebuild a model from named tensors, checking every shape against `config`.
    pub fn from_params(config: ModelConfig, grid_x: Vec<f64>, mut named: Vec<Param>) -> Result<Self> {
        config.validate()?;
        if grid_x.len() != config.grid_size {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for `grid.x`: expected [{}], found [{}]",
                config.grid_size,
                grid_x.len()
            )));
        }
        let mut params = Vec::new();
        for (name, shape) in config.param_shapes() {
            let pos = named
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            let p = named.swap_remove(pos);
            if p.value.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for `{name}`: expected {shape:?}, found {:?}",
                    p.value.shape()
                )));
            }
            params.push(p);
        }
        if let Some(extra) = named.first() {
            return Err(Error::Checkpoint(format!("unexpected parameter `{}`", extra.name)));
        }
        Ok(Self {
            config,
            grid_x,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid_x(&self) -> &[f64] {
        &self.grid_x
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn lengthscale_in(&self) -> f64 {
        softplus(self.params[0].value.data()[0])
    }

    pub fn lengthscale_out(&self) -> f64 {
        softplus(self.param("decoder.lengthscale_raw").expect("param").data()[0])
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Register parameters as differentiable leaves.
    pub fn bind<'t>(&'t self, tape: &'t Tape) -> BoundModel<'t> {
        self.bind_with(tape, true)
    }

    /// Register parameters as constants, for inference.
    pub fn bind_frozen<'t>(&'t self, tape: &'t Tape) -> BoundModel<'t> {
        self.bind_with(tape, false)
    }

    fn bind_with<'t>(&'t self, tape: &'t Tape, trainable: bool) -> BoundModel<'t> {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        BoundModel {
            model: self,
            tape,
            vars,
        }
    }

    pub fn embed_context(&self, context_x: &[f64], context_y: &Tensor) -> Result<GridEmbedding> {
        let tape = Tape::new();
        let m = self.bind_frozen(&tape);
        let e = m.embed(context_x, context_y)?;
        Ok(GridEmbedding {
            grid_x: self.grid_x.clone(),
            channels: e.value(),
        })
    }

    /// Grid features `[G, H]` and the pooled representation.
    pub fn encode(&self, embedding: &GridEmbedding) -> Result<(Tensor, Representation)> {
        let tape = Tape::new();
        let m = self.bind_frozen(&tape);
        let emb = tape.constant(embedding.channels.clone());
        let (features, reps) = m.encode(&[emb])?;
        let f = features.reshape(&[self.config.cnn_channels, self.config.grid_size])?.t()?;
        Ok((
            f.value(),
            Representation {
                r: reps.value().into_data(),
                segment_id: 0,
                view_id: 0,
            },
        ))
    }

    /// Decode grid features `[G, H]` at `target_x`.
    pub fn decode(&self, grid_features: &Tensor, target_x: &[f64]) -> Result<GaussianPrediction> {
        let (g, h) = (self.config.grid_size, self.config.cnn_channels);
        if grid_features.shape() != [g, h] {
            return Err(Error::shape("decode", grid_features.shape(), &[g, h]));
        }
        let tape = Tape::new();
        let m = self.bind_frozen(&tape);
        let f = tape.constant(grid_features.clone());
        let smoothed = m.smooth(f, target_x)?;
        let (mu, sigma) = m.decode_rows(smoothed)?;
        Ok(GaussianPrediction {
            mu: mu.value(),
            sigma: sigma.value(),
        })
    }

    /// Representation vector of one context set.
    pub fn represent(&self, context_x: &[f64], context_y: &Tensor) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let m = self.bind_frozen(&tape);
        let e = m.embed(context_x, context_y)?;
        let (_, reps) = m.encode(&[e])?;
        Ok(reps.value().into_data())
    }

    /// Predictive distribution at `target_x` given a context set.
    pub fn predict(
        &self,
        context_x: &[f64],
        context_y: &Tensor,
        target_x: &[f64],
    ) -> Result<GaussianPrediction> {
        let tape = Tape::new();
        let m = self.bind_frozen(&tape);
        let out = m.forward(&[ViewInput {
            context_x,
            context_y,
            target_x,
        }])?;
        let (mu, sigma) = out.predictions[0];
        Ok(GaussianPrediction {
            mu: mu.value(),
            sigma: sigma.value(),
        })
    }

    /// Predictions from the original inputs and from all inputs shifted by
    /// `steps` grid spacings.
    pub fn translate_check(
        &self,
        context_x: &[f64],
        context_y: &Tensor,
        target_x: &[f64],
        steps: i64,
    ) -> Result<(GaussianPrediction, GaussianPrediction)> {
        let delta = steps as f64 * self.config.grid_spacing();
        let shift = |xs: &[f64]| -> Result<Vec<f64>> {
            xs.iter()
                .map(|&x| {
                    let s = x + delta;
                    if self.in_grid(s) {
                        Ok(s)
                    } else {
                        Err(Error::domain(
                            "translate_check",
                            format!("shifted point {s} leaves the grid"),
                        ))
                    }
                })
                .collect()
        };
        let (cx, tx) = (shift(context_x)?, shift(target_x)?);
        Ok((
            self.predict(context_x, context_y, target_x)?,
            self.predict(&cx, context_y, &tx)?,
        ))
    }

    fn in_grid(&self, x: f64) -> bool {
        let tol = 1e-12;
        x >= self.grid_x[0] - tol && x <= self.grid_x[self.grid_x.len() - 1] + tol
    }
}

/// Inputs for one view in a batched forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ViewInput<'a> {
    pub context_x: &'a [f64],
    pub context_y: &'a Tensor,
    pub target_x: &'a [f64],
}

/// Output of [`BoundModel::forward`].
pub struct ForwardOutput<'t> {
    /// `[B, d_R]`.
    pub reps: Var<'t>,
    /// Per view `(mu, sigma)`, each `[n_target, C]`.
    pub predictions: Vec<(Var<'t>, Var<'t>)>,
}

/// A model whose parameters are recorded on a tape.
pub struct BoundModel<'t> {
    model: &'t ConvCnpModel,
    tape: &'t Tape,
    vars: Vec<Var<'t>>,
}

impl<'t> BoundModel<'t> {
    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    /// Gradients of every parameter, in model order.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|v| grads.get(*v)).collect()
    }

    fn p(&self, name: &str) -> Var<'t> {
        let i = self
            .model
            .params
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    fn cfg(&self) -> &ModelConfig {
        &self.model.config
    }

    /// `-1 / (2 l^2)` with `l = softplus(raw)`, shape `[1, 1]`.
    fn rbf_coef(&self, raw: &str) -> Result<Var<'t>> {
        let l = self.p(raw).softplus();
        self.tape.scalar(-0.5).div(l.square())
    }

    /// Set convolution onto the grid, `[G, 1 + C]`.
    pub fn embed(&self, context_x: &[f64], context_y: &Tensor) -> Result<Var<'t>> {
        let c = self.cfg().channels;
        if context_x.is_empty() {
            return Err(Error::Data("empty context set".into()));
        }
        if context_y.shape() != [context_x.len(), c] {
            return Err(Error::shape("embed", &[context_x.len(), c], context_y.shape()));
        }
        if let Some(&x) = context_x.iter().find(|&&x| !self.model.in_grid(x)) {
            return Err(Error::domain("embed", format!("context x={x} outside the grid")));
        }
        // Canonical order makes the embedding independent of input order.
        let mut order: Vec<usize> = (0..context_x.len()).collect();
        order.sort_by(|&i, &j| {
            context_x[i].total_cmp(&context_x[j]).then_with(|| {
                let (a, b) = (context_y.row(i), context_y.row(j));
                a.iter()
                    .zip(b)
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let xs: Vec<f64> = order.iter().map(|&i| context_x[i]).collect();
        let mut ys = Vec::with_capacity(xs.len() * c);
        for &i in &order {
            ys.extend_from_slice(context_y.row(i));
        }
        let y = self.tape.constant(Tensor::new(&[xs.len(), c], ys)?);
        let d2 = self.tape.constant(sq_dist(&self.model.grid_x, &xs));
        let k = d2.mul(self.rbf_coef("embed.lengthscale_raw")?)?.exp();
        let density = k.sum_axis(1, true)?;
        let signal = k.matmul(y)?.div(density.add_scalar(DENSITY_EPS))?;
        self.tape.concat(&[density, signal], 1)
    }

    /// Run the CNN over a batch of embeddings `[G, 1 + C]`.
    /// Returns grid features `[B, H, G]` and representations `[B, d_R]`.
    pub fn encode(&self, embeddings: &[Var<'t>]) -> Result<(Var<'t>, Var<'t>)> {
        let cfg = *self.cfg();
        let stacked: Vec<Var<'t>> = embeddings
            .iter()
            .map(|e| e.t()?.reshape(&[1, 1 + cfg.channels, cfg.grid_size]))
            .collect::<Result<_>>()?;
        let mut h = self.tape.concat(&stacked, 0)?;
        let pad = cfg.kernel_width / 2;
        for i in 0..cfg.cnn_layers {
            let z = h
                .conv1d(self.p(&format!("cnn.{i}.weight")), pad)?
                .add(self.p(&format!("cnn.{i}.bias")))?
                .relu();
            h = if i == 0 { z } else { h.add(z)? };
        }
        let pooled = h.mean_axis(2, false)?;
        let reps = pooled.matmul(self.p("repr.weight"))?.add(self.p("repr.bias"))?;
        Ok((h, reps))
    }

    /// Interpolate grid features `[G, H]` to `target_x` with a normalized RBF,
    /// giving `[n, H]`.
    pub fn smooth(&self, features: Var<'t>, target_x: &[f64]) -> Result<Var<'t>> {
        if let Some(&x) = target_x.iter().find(|&&x| !self.model.in_grid(x)) {
            return Err(Error::domain("decode", format!("target x={x} outside the grid")));
        }
        let d2 = self.tape.constant(sq_dist(target_x, &self.model.grid_x));
        let logits = d2.mul(self.rbf_coef("decoder.lengthscale_raw")?)?;
        let w = logits.sub(logits.logsumexp(1)?)?.exp();
        w.matmul(features)
    }

    /// Decoder MLP on smoothed features `[n, H]` to `(mu, sigma)`.
    pub fn decode_rows(&self, smoothed: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let c = self.cfg().channels;
        let hidden = smoothed
            .matmul(self.p("decoder.0.weight"))?
            .add(self.p("decoder.0.bias"))?
            .relu();
        let out = hidden
            .matmul(self.p("decoder.1.weight"))?
            .add(self.p("decoder.1.bias"))?;
        let mu = out.slice(1, 0, c)?;
        let sigma = out.slice(1, c, 2 * c)?.softplus().add_scalar(SIGMA_MIN);
        Ok((mu, sigma))
    }

    /// Batched embed, encode and decode for a list of views.
    pub fn forward(&self, views: &[ViewInput<'_>]) -> Result<ForwardOutput<'t>> {
        let cfg = *self.cfg();
        let embeddings: Vec<Var<'t>> = views
            .iter()
            .map(|v| self.embed(v.context_x, v.context_y))
            .collect::<Result<_>>()?;
        let (features, reps) = self.encode(&embeddings)?;
        let mut smoothed = Vec::with_capacity(views.len());
        for (b, v) in views.iter().enumerate() {
            let f = features
                .slice(0, b, b + 1)?
                .reshape(&[cfg.cnn_channels, cfg.grid_size])?
                .t()?;
            smoothed.push(self.smooth(f, v.target_x)?);
        }
        let rows = self.tape.concat(&smoothed, 0)?;
        let (mu, sigma) = self.decode_rows(rows)?;
        let mut predictions = Vec::with_capacity(views.len());
        let mut start = 0;
        for v in views {
            let end = start + v.target_x.len();
            predictions.push((mu.slice(0, start, end)?, sigma.slice(0, start, end)?));
            start = end;
        }
        Ok(ForwardOutput { reps, predictions })
    }
}
