//! Reference implementations shared by the integration tests and the
//! acceptance suite. Everything here is deliberately naive.
#![allow(dead_code)]

pub mod gradcases;

use contrnp::autodiff::{Tape, Var};
use contrnp::objectives::{ContrastiveConfig, ContrastiveMode};
use contrnp::{Result, Tensor};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute
/// error when both are tiny.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Compare reverse-mode gradients of a scalar function of `inputs` with
/// central differences. Returns the worst relative error over inputs.
pub fn gradcheck<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).into_data();
        let mut numeric = vec![0.0; inputs[i].len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[j] += FD_STEP;
            let up = eval(&xs)?;
            xs[i].data_mut()[j] -= 2.0 * FD_STEP;
            let down = eval(&xs)?;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Reduce a tensor-valued output to a scalar through a fixed random
/// projection so every output element contributes to the check.
pub fn project<'t>(out: Var<'t>, weights: &Tensor) -> Result<Var<'t>> {
    let w = out.tape().constant(weights.clone().reshaped(&out.shape())?);
    Ok(out.mul(w)?.sum())
}

pub fn random_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Entries bounded away from zero, for ops with a kink or pole at 0.
pub fn random_away_from_zero<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..2.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Nested-loop contrastive loss, one explicit softmax term per ordered
/// anchor/positive pair. `reps[k][m]` is view `m` of segment `k`.
pub fn contrastive_brute_force(reps: &[Vec<Vec<f64>>], cfg: &ContrastiveConfig) -> f64 {
    let (k_n, m_n) = (reps.len(), reps[0].len());
    let sim = |a: &[f64], b: &[f64]| cosine(a, b) / cfg.tau;
    let mut total = 0.0;
    let mut count = 0;
    for k in 0..k_n {
        for m in 0..m_n {
            let anchor = &reps[k][m];
            for mp in 0..m_n {
                if mp == m {
                    continue;
                }
                let s_pos = sim(anchor, &reps[k][mp]);
                let term = match cfg.mode {
                    ContrastiveMode::ExpSim => {
                        let mut den = 0.0;
                        for kp in 0..k_n {
                            if kp == k {
                                continue;
                            }
                            for mpp in 0..m_n {
                                den += sim(anchor, &reps[kp][mpp]).exp();
                            }
                        }
                        -(s_pos.exp() / den).ln()
                    }
                    ContrastiveMode::Literal => {
                        let mut den = 0.0;
                        for kp in 0..k_n {
                            if kp == k {
                                continue;
                            }
                            for mpp in 0..m_n {
                                den += sim(anchor, &reps[kp][mpp]);
                            }
                        }
                        (s_pos / den).ln()
                    }
                };
                total += term;
                count += 1;
            }
        }
    }
    total / count as f64
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Textbook silhouette: explicit double loop, singleton classes score 0.
pub fn silhouette_brute_force(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let classes: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels.iter().filter(|&&l| l == labels[i]).count();
        if own == 1 {
            continue;
        }
        let mut a = 0.0;
        for j in 0..n {
            if j != i && labels[j] == labels[i] {
                a += dist(&points[i], &points[j]);
            }
        }
        a /= (own - 1) as f64;
        let mut b = f64::INFINITY;
        for &c in &classes {
            if c == labels[i] {
                continue;
            }
            let (mut s, mut cnt) = (0.0, 0);
            for j in 0..n {
                if labels[j] == c {
                    s += dist(&points[i], &points[j]);
                    cnt += 1;
                }
            }
            b = b.min(s / cnt as f64);
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Textbook Davies–Bouldin index.
pub fn davies_bouldin_brute_force(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let d = points[0].len();
    let classes: Vec<usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut centroids = Vec::new();
    let mut scatter = Vec::new();
    for &c in &classes {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        let mut cen = vec![0.0; d];
        for p in &members {
            for j in 0..d {
                cen[j] += p[j];
            }
        }
        for v in &mut cen {
            *v /= members.len() as f64;
        }
        let s = members.iter().map(|p| dist(p, &cen)).sum::<f64>() / members.len() as f64;
        centroids.push(cen);
        scatter.push(s);
    }
    let q = classes.len();
    let mut total = 0.0;
    for i in 0..q {
        let mut worst: f64 = 0.0;
        for j in 0..q {
            if i != j {
                worst = worst.max((scatter[i] + scatter[j]) / dist(&centroids[i], &centroids[j]));
            }
        }
        total += worst;
    }
    total / q as f64
}

/// Isotropic Gaussian blobs with `per_class` points per class.
pub fn gaussian_blobs<R: Rng + ?Sized>(
    rng: &mut R,
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    use rand_distr::{Distribution, Normal};
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        let centre: Vec<f64> = (0..dim).map(|_| rng.random_range(-spread..spread)).collect();
        for _ in 0..per_class {
            pts.push(centre.iter().map(|v| v + noise.sample(rng)).collect());
            labels.push(c);
        }
    }
    (pts, labels)
}
