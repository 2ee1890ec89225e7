//! t-distributed stochastic neighbor embedding, from scratch: per-point
//! Gaussian bandwidths found by binary search on row entropy, symmetrized
//! joint affinities, Student-t low-dimensional kernel, and momentum gradient
//! descent on the KL divergence with early exaggeration.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations during which the exaggerated affinities drive the
    /// gradient; also the iteration at which momentum switches.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 15.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    /// 2-D embedding, one row per input point.
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) at every iteration, computed from the unexaggerated P.
    pub kl_trace: Vec<f64>,
    /// Worst `|row entropy - ln(perplexity)|` achieved by the bandwidth
    /// search.
    pub max_entropy_error: f64,
}

/// Squared Euclidean distances, row-major `n × n`.
pub fn pairwise_sq_dists(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for (a, b) in x[i].iter().zip(&x[j]) {
                let diff = a - b;
                acc += diff * diff;
            }
            d[i * n + j] = acc;
            d[j * n + i] = acc;
        }
    }
    d
}

/// Conditional Gaussian affinities `P(j|i)` with per-row precision found by
/// binary search (≤50 halvings) so the row entropy matches
/// `ln(perplexity)` within 1e-4. Returns the flattened matrix and each
/// row's final entropy error.
pub fn gaussian_affinities(
    dists: &[f64],
    n: usize,
    perplexity: f64,
) -> (Vec<f64>, Vec<f64>) {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut errors = vec![0.0; n];
    for i in 0..n {
        let row = &dists[i * n..(i + 1) * n];
        let mut beta = 1.0f64;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let mut best = (f64::INFINITY, beta);
        for _ in 0..50 {
            let (entropy, _) = row_entropy(row, i, beta, None);
            let diff = entropy - target;
            if diff.abs() < best.0 {
                best = (diff.abs(), beta);
            }
            if diff.abs() < 1e-4 {
                break;
            }
            if diff > 0.0 {
                // Too flat: increase precision.
                beta_min = beta;
                beta = if beta_max.is_infinite() {
                    beta * 2.0
                } else {
                    (beta + beta_max) / 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() {
                    beta / 2.0
                } else {
                    (beta + beta_min) / 2.0
                };
            }
        }
        let (entropy, _) = row_entropy(row, i, best.1, Some(&mut p[i * n..(i + 1) * n]));
        errors[i] = (entropy - target).abs();
    }
    (p, errors)
}

/// Entropy of the normalized row affinities at precision `beta`; optionally
/// writes the normalized probabilities into `out`.
fn row_entropy(row: &[f64], i: usize, beta: f64, out: Option<&mut [f64]>) -> (f64, f64) {
    // Shift exponents by the row max so the sum never underflows to zero.
    let mut max_e = f64::NEG_INFINITY;
    for (j, &d) in row.iter().enumerate() {
        if j != i {
            max_e = max_e.max(-beta * d);
        }
    }
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, &d) in row.iter().enumerate() {
        if j == i {
            continue;
        }
        let e = (-beta * d - max_e).exp();
        sum += e;
        weighted += e * (beta * d);
    }
    // H = ln(sum·e^{max}) + Σ p·βd  with p = e/sum (shift cancels).
    let entropy = sum.ln() + max_e + weighted / sum;
    if let Some(out) = out {
        for (j, &d) in row.iter().enumerate() {
            out[j] = if j == i {
                0.0
            } else {
                (-beta * d - max_e).exp() / sum
            };
        }
    }
    (entropy, sum)
}

/// Symmetrized joint distribution `P = (P(j|i) + P(i|j)) / 2n`; sums to 1.
pub fn symmetrize(p_conditional: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    let norm = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (p_conditional[i * n + j] + p_conditional[j * n + i]) / norm;
        }
    }
    p
}

/// Student-t (1 d.o.f.) affinities of the embedding; returns the normalized
/// `Q` (sums to 1 over off-diagonal pairs) and the unnormalized kernel.
pub fn student_t_affinities(y: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut kernel = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            kernel[i * n + j] = w;
            kernel[j * n + i] = w;
            sum += 2.0 * w;
        }
    }
    let q = kernel.iter().map(|&k| k / sum).collect();
    (q, kernel)
}

/// KL(P‖Q) over off-diagonal pairs with a small floor on Q.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pv, _)| pv > 0.0)
        .map(|(&pv, &qv)| pv * (pv / qv.max(1e-12)).ln())
        .sum()
}

/// Runs t-SNE down to 2 dimensions. `x` is one row per point.
pub fn tsne(x: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.len();
    if n < 5 {
        return Err(Error::InvalidArgument {
            name: "tsne",
            msg: format!("need at least 5 points, got {n}"),
        });
    }
    if cfg.perplexity >= n as f64 {
        return Err(Error::PerplexityTooLarge {
            perplexity: cfg.perplexity,
            n,
        });
    }
    if cfg.iterations < cfg.exaggeration_iters {
        return Err(Error::InvalidArgument {
            name: "tsne iterations",
            msg: format!(
                "{} iterations is fewer than the {}-iteration exaggeration phase",
                cfg.iterations, cfg.exaggeration_iters
            ),
        });
    }
    let dists = pairwise_sq_dists(x);
    let (p_cond, errors) = gaussian_affinities(&dists, n, cfg.perplexity);
    let p = symmetrize(&p_cond, n);
    let max_entropy_error = errors.iter().cloned().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dist = rand_distr::Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.sample(dist), rng.sample(dist)])
        .collect();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let (q, kernel) = student_t_affinities(&y);
        kl_trace.push(kl_divergence(&p, &q));
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < cfg.exaggeration_iters {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        for i in 0..n {
            let mut grad = [0.0f64; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let factor = 4.0 * (exaggeration * p[i * n + j] - q[i * n + j]) * kernel[i * n + j];
                grad[0] += factor * (y[i][0] - y[j][0]);
                grad[1] += factor * (y[i][1] - y[j][1]);
            }
            velocity[i][0] = momentum * velocity[i][0] - cfg.learning_rate * grad[0];
            velocity[i][1] = momentum * velocity[i][1] - cfg.learning_rate * grad[1];
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
    }
    Ok(TsneResult {
        coords: y,
        kl_trace,
        max_entropy_error,
    })
}
