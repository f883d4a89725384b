//! Parameter-free multi-head cosine target attention.
//!
//! Head `j` scores each history vector by the cosine between its `j`-th
//! contiguous slice and the same slice of the target. Weights are a softmax
//! over those scores; the head output is the weighted sum of the full history
//! vectors, and heads are averaged.

use super::tensor::{axpy, dot, softmax};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetAttention {
    dim: usize,
    heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    /// `weights[j][i]`: weight of history item `i` in head `j`.
    weights: Vec<Vec<f64>>,
    cosines: Vec<Vec<f64>>,
}

impl AttentionCache {
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

impl TargetAttention {
    pub fn new(dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim == 0 || heads > dim {
            return Err(Error::Config(format!(
                "attention needs 1 <= heads <= dim (heads={heads}, dim={dim})"
            )));
        }
        Ok(Self { dim, heads })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    fn span(&self, head: usize) -> std::ops::Range<usize> {
        let start = head * self.dim / self.heads;
        let end = (head + 1) * self.dim / self.heads;
        start..end
    }

    pub fn forward(&self, history: &[&[f64]], target: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(history, target)?.0)
    }

    pub fn forward_cached(
        &self,
        history: &[&[f64]],
        target: &[f64],
    ) -> Result<(Vec<f64>, AttentionCache)> {
        if history.is_empty() {
            return Err(Error::Empty("attention history"));
        }
        check_len(self.dim, target.len(), "attention target")?;
        for h in history {
            check_len(self.dim, h.len(), "attention history item")?;
        }
        let mut out = vec![0.0; self.dim];
        let mut weights = Vec::with_capacity(self.heads);
        let mut cosines = Vec::with_capacity(self.heads);
        let scale = 1.0 / self.heads as f64;
        for j in 0..self.heads {
            let span = self.span(j);
            let t = &target[span.clone()];
            let tn = dot(t, t).sqrt();
            let cos: Vec<f64> = history
                .iter()
                .map(|h| {
                    let hs = &h[span.clone()];
                    let hn = dot(hs, hs).sqrt();
                    if hn == 0.0 || tn == 0.0 {
                        0.0
                    } else {
                        dot(hs, t) / (hn * tn)
                    }
                })
                .collect();
            let w = softmax(&cos);
            for (wi, h) in w.iter().zip(history) {
                axpy(wi * scale, h, &mut out);
            }
            weights.push(w);
            cosines.push(cos);
        }
        Ok((out, AttentionCache { weights, cosines }))
    }

    /// Returns `(d_history, d_target)`.
    pub fn backward(
        &self,
        history: &[&[f64]],
        target: &[f64],
        cache: &AttentionCache,
        d_out: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let scale = 1.0 / self.heads as f64;
        let mut d_hist: Vec<Vec<f64>> = vec![vec![0.0; self.dim]; history.len()];
        let mut d_target = vec![0.0; self.dim];
        // d(out)/d(h_i) direct term is shared by all heads
        let h_dot: Vec<f64> = history.iter().map(|h| dot(h, d_out) * scale).collect();
        for j in 0..self.heads {
            let span = self.span(j);
            let w = &cache.weights[j];
            let cos = &cache.cosines[j];
            for (dh, wi) in d_hist.iter_mut().zip(w) {
                axpy(wi * scale, d_out, dh);
            }
            let mean: f64 = w.iter().zip(&h_dot).map(|(a, b)| a * b).sum();
            let t = &target[span.clone()];
            let tn = dot(t, t).sqrt();
            for (i, h) in history.iter().enumerate() {
                let dcos = w[i] * (h_dot[i] - mean);
                let hs = &h[span.clone()];
                let hn = dot(hs, hs).sqrt();
                if hn == 0.0 || tn == 0.0 || dcos == 0.0 {
                    continue;
                }
                let c = cos[i];
                let inv = 1.0 / (hn * tn);
                for (k, idx) in span.clone().enumerate() {
                    d_hist[i][idx] += dcos * (t[k] * inv - c * hs[k] / (hn * hn));
                    d_target[idx] += dcos * (hs[k] * inv - c * t[k] / (tn * tn));
                }
            }
        }
        (d_hist, d_target)
    }
}
