use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numcore::{GruCache, GruCell, ParamStore};

/// Session embedding `l` together with the number of items folded into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEmbedding {
    pub vector: Vec<f64>,
    pub k: usize,
}

impl SessionEmbedding {
    pub fn zero(dim: usize) -> Self {
        Self {
            vector: vec![0.0; dim],
            k: 0,
        }
    }
}

/// Session recurrent encoder: a GRU folded over item embeddings from the
/// zero state. Sessions hold at most `max_len` items.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sre {
    cell: GruCell,
    max_len: usize,
}

impl Sre {
    /// With `aligned`, the candidate weights see the item input through an
    /// identity block, so a one-item session starts close to
    /// `0.5 * tanh(e)` and session embeddings share the item space.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        dim: usize,
        max_len: usize,
        aligned: bool,
    ) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::Config("session length must be positive".into()));
        }
        let cell = GruCell::new(store, rng, name, dim, dim)?;
        if aligned {
            let wh = store.value_mut(cell.weights()[2]);
            let fan = 2 * dim;
            for i in 0..dim {
                for j in 0..dim {
                    wh[i * fan + dim + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        Ok(Self { cell, max_len })
    }

    pub fn dim(&self) -> usize {
        self.cell.hidden()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn cell(&self) -> &GruCell {
        &self.cell
    }

    pub fn step(
        &self,
        store: &ParamStore,
        l: &SessionEmbedding,
        e: &[f64],
    ) -> Result<SessionEmbedding> {
        if l.k >= self.max_len {
            return Err(Error::InvalidState(format!(
                "session already holds {} of {} items",
                l.k, self.max_len
            )));
        }
        check_len(self.dim(), e.len(), "sre item")?;
        Ok(SessionEmbedding {
            vector: self.cell.forward(store, &l.vector, e)?,
            k: l.k + 1,
        })
    }

    pub fn encode(&self, store: &ParamStore, items: &[&[f64]]) -> Result<SessionEmbedding> {
        items
            .iter()
            .try_fold(SessionEmbedding::zero(self.dim()), |l, e| {
                self.step(store, &l, e)
            })
    }

    /// Encoding with per-step caches for backpropagation.
    pub fn encode_cached(
        &self,
        store: &ParamStore,
        items: &[&[f64]],
    ) -> Result<(SessionEmbedding, Vec<GruCache>)> {
        if items.len() > self.max_len {
            return Err(Error::InvalidState(format!(
                "session of {} items exceeds {}",
                items.len(),
                self.max_len
            )));
        }
        let (vector, caches) = self.cell.fold(store, &vec![0.0; self.dim()], items)?;
        Ok((
            SessionEmbedding {
                vector,
                k: items.len(),
            },
            caches,
        ))
    }

    /// Accumulates SRE parameter gradients; returns per-item input gradients.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        caches: &[GruCache],
        d_l: &[f64],
    ) -> Vec<Vec<f64>> {
        self.cell.backward_fold(store, caches, d_l).1
    }
}

/// Concatenation `[sre_latent, device_latent]`.
pub fn intra_context(sre_latent: &[f64], device_latent: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sre_latent.len() + device_latent.len());
    out.extend_from_slice(sre_latent);
    out.extend_from_slice(device_latent);
    out
}
