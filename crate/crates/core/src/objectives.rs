//! Training objectives: the multi-view contrastive term, the Gaussian
//! negative log-likelihood of the decoder, and their weighted sum.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveMode {
    /// `-log[exp(s_pos / τ) / Σ_neg exp(s_neg / τ)]`.
    ExpSim,
    /// `log[(s_pos / τ) / Σ_neg (s_neg / τ)]`, no exponentiation and no sign
    /// flip. Kept for ablations; fails when the ratio is not positive.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub mode: ContrastiveMode,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            mode: ContrastiveMode::ExpSim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub nll: f64,
    pub contrastive: f64,
    pub lambda: f64,
}

/// `(pos, neg)` masks over the `[K·M, K·M]` similarity matrix; row `k·M + m`
/// is view `m` of segment `k`.
fn masks(k: usize, m: usize) -> (Tensor, Tensor) {
    let n = k * m;
    let mut pos = vec![0.0; n * n];
    let mut neg = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i / m == j / m {
                if i != j {
                    pos[i * n + j] = 1.0;
                }
            } else {
                neg[i * n + j] = 1.0;
            }
        }
    }
    (
        Tensor::new(&[n, n], pos).expect("mask"),
        Tensor::new(&[n, n], neg).expect("mask"),
    )
}

/// Contrastive loss over `reps` of shape `[K·M, d]` in segment-major order.
/// Mean over all `K·M·(M−1)` anchor/positive pairs. The denominator sums
/// only over views of other segments.
pub fn contrastive_loss<'t>(
    reps: Var<'t>,
    k: usize,
    m: usize,
    cfg: &ContrastiveConfig,
) -> Result<Var<'t>> {
    if k < 2 || m < 2 {
        return Err(Error::Data(format!(
            "contrastive loss needs K ≥ 2 and M ≥ 2, got K={k} M={m}"
        )));
    }
    if !(cfg.tau > 0.0) {
        return Err(Error::Config(format!("tau must be > 0, got {}", cfg.tau)));
    }
    let shape = reps.shape();
    if shape.len() != 2 || shape[0] != k * m {
        return Err(Error::shape("contrastive_loss", &shape, &[k * m, 0]));
    }
    let tape = reps.tape();
    let norms = reps.l2_norm(1)?;
    if let Some(i) = norms.value().data().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::domain(
            "contrastive_loss",
            format!("representation {i} (segment {}, view {}) has zero norm", i / m, i % m),
        ));
    }
    let unit = reps.div(norms)?;
    let sim = unit.matmul(unit.t()?)?.scale(1.0 / cfg.tau);
    let (pos, neg) = masks(k, m);
    let (pos, neg) = (tape.constant(pos), tape.constant(neg));
    let pairs = (k * m * (m - 1)) as f64;
    match cfg.mode {
        ContrastiveMode::ExpSim => {
            // cosine ≤ 1, so shifting by 1/τ keeps every exponent ≤ 0
            let shift = 1.0 / cfg.tau;
            let den = sim.add_scalar(-shift).exp().mul(neg)?.sum_axis(1, false)?;
            let lse = den.log()?.add_scalar(shift);
            let pos_sum = sim.mul(pos)?.sum();
            let lse_sum = lse.sum().scale((m - 1) as f64);
            Ok(lse_sum.sub(pos_sum)?.scale(1.0 / pairs))
        }
        ContrastiveMode::Literal => {
            let den = sim.mul(neg)?.sum_axis(1, true)?;
            let ratio = sim.div(den)?;
            // log only where the positive mask is set
            let n = k * m;
            let mut terms = Vec::with_capacity(n * (m - 1));
            for i in 0..n {
                let row = ratio.slice(0, i, i + 1)?;
                let seg = i / m;
                for j in seg * m..(seg + 1) * m {
                    if j != i {
                        terms.push(row.slice(1, j, j + 1)?);
                    }
                }
            }
            let all = tape.concat(&terms, 1)?;
            Ok(all.log()?.mean())
        }
    }
}

/// Convenience wrapper returning the loss value for a `[K·M, d]` tensor.
pub fn contrastive_loss_value(
    reps: &Tensor,
    k: usize,
    m: usize,
    cfg: &ContrastiveConfig,
) -> Result<f64> {
    let tape = Tape::new();
    let r = tape.constant(reps.clone());
    Ok(contrastive_loss(r, k, m, cfg)?.item())
}

/// Mean over points and channels of `0.5·log(2πσ²) + (y−μ)²/(2σ²)`.
pub fn gaussian_nll<'t>(mu: Var<'t>, sigma: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    let (ms, ss, ts) = (mu.shape(), sigma.shape(), target.shape());
    if ms != ss || ms != ts {
        return Err(Error::shape("gaussian_nll", &ms, &ts));
    }
    let resid = target.sub(mu)?;
    let quad = resid.square().div(sigma.square().scale(2.0))?;
    Ok(sigma.log()?.add(quad)?.mean().add_scalar(HALF_LN_2PI))
}

/// `λ · mean_v NLL_v + contrastive`, with `predictions` and `targets` in the
/// same segment-major order as the rows of `reps`.
pub fn combined_loss<'t>(
    predictions: &[(Var<'t>, Var<'t>)],
    targets: &[&Tensor],
    reps: Var<'t>,
    k: usize,
    m: usize,
    lambda: f64,
    cfg: &ContrastiveConfig,
) -> Result<(Var<'t>, LossBreakdown)> {
    if predictions.len() != targets.len() || predictions.len() != k * m {
        return Err(Error::shape(
            "combined_loss",
            &[predictions.len(), targets.len()],
            &[k * m],
        ));
    }
    let tape = reps.tape();
    let mut nll_sum: Option<Var<'t>> = None;
    for (&(mu, sigma), y) in predictions.iter().zip(targets) {
        let term = gaussian_nll(mu, sigma, tape.constant((*y).clone()))?;
        nll_sum = Some(match nll_sum {
            Some(acc) => acc.add(term)?,
            None => term,
        });
    }
    let nll = nll_sum.expect("non-empty").scale(1.0 / predictions.len() as f64);
    let contrastive = contrastive_loss(reps, k, m, cfg)?;
    let total = nll.scale(lambda).add(contrastive)?;
    let breakdown = LossBreakdown {
        total: total.item(),
        nll: nll.item(),
        contrastive: contrastive.item(),
        lambda,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nll_value(mu: f64, sigma: f64, y: f64) -> f64 {
        let tape = Tape::new();
        let s = |v| tape.constant(Tensor::new(&[1, 1], vec![v]).unwrap());
        gaussian_nll(s(mu), s(sigma), s(y)).unwrap().item()
    }

    #[test]
    fn nll_analytic_values() {
        assert!((nll_value(0.0, 1.0, 0.0) - 0.9189385332).abs() < 1e-9);
        assert!((nll_value(0.0, 1.0, 1.0) - 1.4189385332).abs() < 1e-9);
    }

    #[test]
    fn nll_decreases_towards_residual() {
        let r = 0.8;
        let mut prev = f64::INFINITY;
        for i in 1..=40 {
            let s = r * i as f64 / 40.0;
            let v = nll_value(0.0, s, r);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn nll_gradient_sign_flips_at_target() {
        for (mu, sign) in [(0.4, 1.0), (0.6, -1.0)] {
            let tape = Tape::new();
            let m = tape.leaf(Tensor::new(&[1, 1], vec![mu]).unwrap());
            let s = tape.constant(Tensor::new(&[1, 1], vec![0.3]).unwrap());
            let y = tape.constant(Tensor::new(&[1, 1], vec![0.5]).unwrap());
            let loss = gaussian_nll(m, s, y).unwrap();
            let g = tape.backward(loss).unwrap().get(m).data()[0];
            assert!(g * sign < 0.0, "mu={mu} grad={g}");
        }
    }

    #[test]
    fn nll_shape_mismatch() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 1]));
        let b = tape.constant(Tensor::full(&[2, 1], 1.0));
        let c = tape.constant(Tensor::zeros(&[3, 1]));
        assert!(gaussian_nll(a, b, c).is_err());
    }

    #[test]
    fn identical_reps_give_log_count() {
        let reps = Tensor::full(&[4, 3], 0.7);
        let v = contrastive_loss_value(&reps, 2, 2, &ContrastiveConfig::default()).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bound_case() {
        // anchors agree within a segment and are opposite across segments
        let reps = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![-1.0, 0.0],
            vec![-3.0, 0.0],
        ])
        .unwrap();
        let cfg = ContrastiveConfig {
            tau: 0.5,
            ..Default::default()
        };
        let v = contrastive_loss_value(&reps, 2, 2, &cfg).unwrap();
        assert!((v - (2f64.ln() - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_and_small_batches_rejected() {
        let cfg = ContrastiveConfig::default();
        let mut reps = Tensor::full(&[4, 2], 1.0);
        reps.data_mut()[2] = 0.0;
        reps.data_mut()[3] = 0.0;
        assert!(contrastive_loss_value(&reps, 2, 2, &cfg).is_err());
        assert!(contrastive_loss_value(&Tensor::full(&[2, 2], 1.0), 1, 2, &cfg).is_err());
    }

    #[test]
    fn literal_mode_matches_formula() {
        let reps = Tensor::from_rows(&[
            vec![1.0, 0.1],
            vec![0.9, 0.2],
            vec![0.5, 1.0],
            vec![0.4, 0.9],
        ])
        .unwrap();
        let cfg = ContrastiveConfig {
            tau: 0.5,
            mode: ContrastiveMode::Literal,
        };
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (n(a) * n(b))
        };
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i / 2 == j / 2 && i != j {
                    let den: f64 = (0..4)
                        .filter(|n| n / 2 != i / 2)
                        .map(|n| cos(reps.row(i), reps.row(n)) / 0.5)
                        .sum();
                    acc += ((cos(reps.row(i), reps.row(j)) / 0.5) / den).ln();
                }
            }
        }
        let v = contrastive_loss_value(&reps, 2, 2, &cfg).unwrap();
        assert!((v - acc / 4.0).abs() < 1e-12);

        let opposite = Tensor::from_rows(&[vec![1.0], vec![1.0], vec![-1.0], vec![-1.0]]).unwrap();
        assert!(contrastive_loss_value(&opposite, 2, 2, &cfg).is_err());
    }

    #[test]
    fn lambda_zero_is_pure_contrastive() {
        let tape = Tape::new();
        let reps = tape.leaf(
            Tensor::from_rows(&[
                vec![1.0, 0.3],
                vec![0.8, 0.1],
                vec![-0.2, 1.0],
                vec![0.1, 0.7],
            ])
            .unwrap(),
        );
        let mu = tape.leaf(Tensor::new(&[2, 1], vec![0.1, 0.2]).unwrap());
        let sigma = tape.leaf(Tensor::new(&[2, 1], vec![0.5, 0.6]).unwrap());
        let y = Tensor::new(&[2, 1], vec![0.0, 1.0]).unwrap();
        let preds = vec![(mu, sigma); 4];
        let ys = vec![&y; 4];
        let cfg = ContrastiveConfig::default();
        let (_, b) = combined_loss(&preds, &ys, reps, 2, 2, 0.0, &cfg).unwrap();
        assert_eq!(b.total, b.contrastive);
        let (_, b) = combined_loss(&preds, &ys, reps, 2, 2, 0.01, &cfg).unwrap();
        assert_eq!(b.total, 0.01 * b.nll + b.contrastive);
    }
}
