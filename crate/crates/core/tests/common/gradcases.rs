//! Randomized finite-difference cases for every differentiable op and for
//! the full training loss.

use super::{gradcheck, project, random_away_from_zero, random_tensor, rel_error, FD_STEP};
use contrnp::autodiff::{Tape, Var};
use contrnp::config::TrainConfig;
use contrnp::data::{make_batch, sine_segments, ContextSampler, Segment, SegmentBatch};
use contrnp::trainer::{init_model, loss_and_gradients, rng_for};
use contrnp::{Result, Tensor};
use rand::rngs::StdRng;
use rand::Rng;

/// One randomized case: draws shapes and values from the RNG and returns
/// the worst relative gradient error.
pub type Case = Box<dyn Fn(&mut StdRng) -> Result<f64>>;

fn shape<R: Rng>(rng: &mut R, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(1..=4)).collect()
}

fn unary(
    rng: &mut StdRng,
    input: Tensor,
    f: impl for<'t> Fn(Var<'t>) -> Result<Var<'t>>,
) -> Result<f64> {
    let w = random_tensor(rng, &[input.len()], -1.0, 1.0);
    gradcheck(&[input], |_, v| project(f(v[0])?, &w))
}

/// Broadcasting binary op; each operand axis is randomly collapsed to 1.
fn binary(
    rng: &mut StdRng,
    f: impl for<'t> Fn(Var<'t>, Var<'t>) -> Result<Var<'t>>,
    positive_rhs: bool,
) -> Result<f64> {
    let rank = rng.random_range(1..=3);
    let a_shape = shape(rng, rank);
    let b_shape: Vec<usize> = a_shape.iter().map(|&d| if rng.random::<bool>() { d } else { 1 }).collect();
    let a = random_tensor(rng, &a_shape, -2.0, 2.0);
    let b = if positive_rhs {
        random_tensor(rng, &b_shape, 0.5, 2.0)
    } else {
        random_tensor(rng, &b_shape, -2.0, 2.0)
    };
    let w = random_tensor(rng, &[a.len()], -1.0, 1.0);
    if positive_rhs || rng.random::<bool>() {
        gradcheck(&[a, b], |_, v| project(f(v[0], v[1])?, &w))
    } else {
        // broadcast on the left operand instead
        gradcheck(&[b, a], |_, v| project(f(v[0], v[1])?, &w))
    }
}

fn axis_reduction(
    rng: &mut StdRng,
    rank: usize,
    away_from_zero: bool,
    f: impl for<'t> Fn(Var<'t>, usize) -> Result<Var<'t>>,
) -> Result<f64> {
    let s = shape(rng, rank);
    let axis = rng.random_range(0..rank);
    let x = if away_from_zero {
        random_away_from_zero(rng, &s)
    } else {
        random_tensor(rng, &s, -3.0, 3.0)
    };
    let w = random_tensor(rng, &[x.len() / s[axis]], -1.0, 1.0);
    gradcheck(&[x], |_, v| project(f(v[0], axis)?, &w))
}

pub fn all() -> Vec<(&'static str, Case)> {
    let mut v: Vec<(&'static str, Case)> = Vec::new();
    v.push(("add", Box::new(|r| binary(r, |a, b| a.add(b), false))));
    v.push(("sub", Box::new(|r| binary(r, |a, b| a.sub(b), false))));
    v.push(("mul", Box::new(|r| binary(r, |a, b| a.mul(b), false))));
    v.push(("div", Box::new(|r| binary(r, |a, b| a.div(b), true))));
    v.push(("scale", Box::new(|r| {
        let s = r.random_range(-3.0..3.0);
        let dims = shape(r, 2);
        let x = random_tensor(r, &dims, -2.0, 2.0);
        unary(r, x, move |v| Ok(v.scale(s)))
    })));
    v.push(("neg", Box::new(|r| {
        let dims = shape(r, 2);
        let x = random_tensor(r, &dims, -2.0, 2.0);
        unary(r, x, |v| Ok(v.neg()))
    })));
    v.push(("add_scalar", Box::new(|r| {
        let dims = shape(r, 2);
        let x = random_tensor(r, &dims, -2.0, 2.0);
        unary(r, x, |v| Ok(v.add_scalar(0.7)))
    })));
    v.push(("relu", Box::new(|r| {
        let dims = shape(r, 2);
        let x = random_away_from_zero(r, &dims);
        unary(r, x, |v| Ok(v.relu()))
    })));
    v.push(("softplus", Box::new(|r| {
        let dims = shape(r, 2);
        let x = random_tensor(r, &dims, -30.0, 30.0);
        unary(r, x, |v| Ok(v.softplus()))
    })));
    v.push(("exp", Box::new(|r| {
        let dims = shape(r, 2);
        let x = random_tensor(r, &dims, -3.0, 3.0);
        unary(r, x, |v| Ok(v.exp()))
    })));
    v.push(("log", Box::new(|r| {
        let dims = shape(r, 2);
        let x = random_tensor(r, &dims, 0.1, 5.0);
        unary(r, x, |v| v.log())
    })));
    v.push(("square", Box::new(|r| {
        let dims = shape(r, 2);
        let x = random_tensor(r, &dims, -2.0, 2.0);
        unary(r, x, |v| Ok(v.square()))
    })));
    v.push(("matmul", Box::new(|r| {
        let (m, k, n) = (r.random_range(1..=5), r.random_range(1..=5), r.random_range(1..=5));
        let a = random_tensor(r, &[m, k], -1.0, 1.0);
        let b = random_tensor(r, &[k, n], -1.0, 1.0);
        let w = random_tensor(r, &[m * n], -1.0, 1.0);
        gradcheck(&[a, b], |_, v| project(v[0].matmul(v[1])?, &w))
    })));
    v.push(("transpose", Box::new(|r| {
        let dims = shape(r, 2);
        let x = random_tensor(r, &dims, -1.0, 1.0);
        unary(r, x, |v| v.t())
    })));
    v.push(("conv1d", Box::new(|r| {
        let (b, cin, cout) = (r.random_range(1..=3), r.random_range(1..=3), r.random_range(1..=3));
        let width = [1, 3, 5][r.random_range(0..3)];
        let len = r.random_range(width..=width + 6);
        let padding = r.random_range(0..=width / 2);
        let x = random_tensor(r, &[b, cin, len], -1.0, 1.0);
        let k = random_tensor(r, &[cout, cin, width], -1.0, 1.0);
        let out_len = len + 2 * padding - width + 1;
        let w = random_tensor(r, &[b * cout * out_len], -1.0, 1.0);
        gradcheck(&[x, k], |_, v| project(v[0].conv1d(v[1], padding)?, &w))
    })));
    v.push(("reshape", Box::new(|r| {
        let s = shape(r, 3);
        let x = random_tensor(r, &s, -1.0, 1.0);
        let flat = [s[0] * s[1], s[2]];
        unary(r, x, move |v| v.reshape(&flat))
    })));
    v.push(("slice", Box::new(|r| {
        let s = shape(r, 3);
        let axis = r.random_range(0..3);
        let start = r.random_range(0..s[axis]);
        let end = r.random_range(start + 1..=s[axis]);
        let x = random_tensor(r, &s, -1.0, 1.0);
        let w = random_tensor(r, &[x.len() / s[axis] * (end - start)], -1.0, 1.0);
        gradcheck(&[x], |_, v| project(v[0].slice(axis, start, end)?, &w))
    })));
    v.push(("broadcast_to", Box::new(|r| {
        let target = shape(r, 3);
        let src: Vec<usize> = target.iter().map(|&d| if r.random::<bool>() { d } else { 1 }).collect();
        let x = random_tensor(r, &src, -1.0, 1.0);
        let n: usize = target.iter().product();
        let w = random_tensor(r, &[n], -1.0, 1.0);
        gradcheck(&[x], |_, v| project(v[0].broadcast_to(&target)?, &w))
    })));
    v.push(("concat", Box::new(|r| {
        let s = shape(r, 3);
        let axis = r.random_range(0..3);
        let mut s2 = s.clone();
        s2[axis] = r.random_range(1..=3);
        let a = random_tensor(r, &s, -1.0, 1.0);
        let b = random_tensor(r, &s2, -1.0, 1.0);
        let w = random_tensor(r, &[a.len() + b.len()], -1.0, 1.0);
        gradcheck(&[a, b], |t: &Tape, v| project(t.concat(&[v[0], v[1]], axis)?, &w))
    })));
    v.push(("sum_axis", Box::new(|r| {
        let keep = r.random::<bool>();
        axis_reduction(r, 3, false, move |v, a| v.sum_axis(a, keep))
    })));
    v.push(("mean_axis", Box::new(|r| {
        let keep = r.random::<bool>();
        axis_reduction(r, 3, false, move |v, a| v.mean_axis(a, keep))
    })));
    v.push(("l2_norm", Box::new(|r| axis_reduction(r, 2, true, |v, a| v.l2_norm(a)))));
    v.push(("logsumexp", Box::new(|r| axis_reduction(r, 2, false, |v, a| v.logsumexp(a)))));
    v.push(("sum", Box::new(|r| {
        let dims = shape(r, 3);
        let x = random_tensor(r, &dims, -1.0, 1.0);
        gradcheck(&[x], |_, v| Ok(v[0].sum()))
    })));
    v.push(("mean", Box::new(|r| {
        let dims = shape(r, 3);
        let x = random_tensor(r, &dims, -1.0, 1.0);
        gradcheck(&[x], |_, v| Ok(v[0].mean().square()))
    })));
    v
}

/// Small configuration for the end-to-end check: G=8, K=2, M=2, five
/// context points per view.
pub fn tiny_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        k_per_batch: 2,
        m_views: 2,
        window_size: 24,
        n_context_min: 5,
        n_context_max: 5,
        grid_size: 8,
        cnn_layers: 2,
        cnn_channels: 3,
        kernel_width: 3,
        encoding_size: 4,
        decoder_hidden: 4,
        lambda: 0.5,
        seed,
        ..TrainConfig::default()
    }
}

fn tiny_batch(cfg: &TrainConfig, seed: u64) -> Result<SegmentBatch> {
    let mut rng = rng_for(seed, 7);
    let segs = sine_segments(2, cfg.window_size, 1.0, 2.0, &mut rng)?;
    let refs: Vec<&Segment> = segs.iter().collect();
    make_batch(&refs, cfg.m_views, &ContextSampler::fixed(0.25, 0.75, 5), &mut rng)
}

/// Worst relative error, over parameters, of the combined-loss gradient.
pub fn end_to_end(seed: u64) -> Result<f64> {
    let cfg = tiny_train_config(seed);
    let batch = tiny_batch(&cfg, seed)?;
    let model = init_model(&cfg, 1)?;
    let (_, analytic) = loss_and_gradients(&model, &batch, &cfg)?;
    let mut worst: f64 = 0.0;
    for (pi, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut m = model.clone();
            m.params_mut()[pi].value.data_mut()[j] += FD_STEP;
            let up = loss_and_gradients(&m, &batch, &cfg)?.0.total;
            m.params_mut()[pi].value.data_mut()[j] -= 2.0 * FD_STEP;
            let down = loss_and_gradients(&m, &batch, &cfg)?.0.total;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_error(grad.data(), &numeric));
    }
    Ok(worst)
}
