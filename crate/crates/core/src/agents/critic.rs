use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::HighState;
use crate::error::{check_len, Result};
use crate::numcore::{
    Activation, AttentionCache, FmLayer, LayerSpec, Mlp, MlpCache, ParamStore, TargetAttention,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    /// MLP widths after the FM layer; the last entry must be 1.
    pub hidden: Vec<usize>,
    /// Width of the FM linear projection.
    pub projection: usize,
    pub heads: usize,
}

/// `Q_w(s, a)`: target attention over the history with `a` as query, an FM
/// layer over the fields `[attention, a, u, c^o]`, then an MLP ending in
/// tanh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Critic {
    heads: usize,
    dim: usize,
    fm: FmLayer,
    mlp: Mlp,
}

pub struct CriticCache {
    attention: Option<AttentionCache>,
    fields: [Vec<f64>; 4],
    mlp: MlpCache,
}

/// Gradients of `Q` with respect to its vector inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticInputGrads {
    pub action: Vec<f64>,
    pub u: Vec<f64>,
    pub c_o: Vec<f64>,
}

pub const CRITIC_FIELDS: usize = 4;

impl Critic {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        dim: usize,
        cfg: &CriticConfig,
    ) -> Result<Self> {
        TargetAttention::new(dim, cfg.heads)?;
        let fm = FmLayer::new(store, rng, "critic/fm", CRITIC_FIELDS, dim, cfg.projection)?;
        let spec = LayerSpec::mlp(fm.output(), &cfg.hidden, Activation::Relu, Activation::Tanh);
        let mlp = Mlp::new(store, rng, "critic/mlp", &spec)?;
        Ok(Self {
            heads: cfg.heads,
            dim,
            fm,
            mlp,
        })
    }

    fn attention(&self) -> TargetAttention {
        TargetAttention::new(self.dim, self.heads).expect("validated at construction")
    }

    pub fn q(&self, store: &ParamStore, s: &HighState, a: &[f64]) -> Result<f64> {
        Ok(self.forward_cached(store, s, a)?.0)
    }

    pub fn forward_cached(
        &self,
        store: &ParamStore,
        s: &HighState,
        a: &[f64],
    ) -> Result<(f64, CriticCache)> {
        check_len(self.dim, a.len(), "critic action")?;
        check_len(self.dim, s.u.len(), "critic user")?;
        check_len(self.dim, s.c_o.len(), "critic context")?;
        let (att, attention) = if s.history.is_empty() {
            (vec![0.0; self.dim], None)
        } else {
            let hist: Vec<&[f64]> = s.history.iter().map(Vec::as_slice).collect();
            let (o, c) = self.attention().forward_cached(&hist, a)?;
            (o, Some(c))
        };
        let fields = [att, a.to_vec(), s.u.clone(), s.c_o.clone()];
        let refs: Vec<&[f64]> = fields.iter().map(Vec::as_slice).collect();
        let x = self.fm.forward(store, &refs)?;
        let (out, mlp) = self.mlp.forward_cached(store, &x)?;
        Ok((
            out[0],
            CriticCache {
                attention,
                fields,
                mlp,
            },
        ))
    }

    /// Accumulates critic parameter gradients of `dq * Q` and returns the
    /// input gradients. History sessions are treated as constants.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        s: &HighState,
        cache: &CriticCache,
        dq: f64,
    ) -> CriticInputGrads {
        let refs: Vec<&[f64]> = cache.fields.iter().map(Vec::as_slice).collect();
        let dx = self.mlp.backward(store, &cache.mlp, &[dq]);
        let grads = self.fm.backward(store, &refs, &dx);
        self.finish(s, cache, grads)
    }

    /// Input gradients of `dq * Q` without touching parameter gradients.
    pub fn backward_input(
        &self,
        store: &ParamStore,
        s: &HighState,
        cache: &CriticCache,
        dq: f64,
    ) -> CriticInputGrads {
        let refs: Vec<&[f64]> = cache.fields.iter().map(Vec::as_slice).collect();
        let dx = self.mlp.backward_input(store, &cache.mlp, &[dq]);
        let grads = self.fm.backward_input(store, &refs, &dx);
        self.finish(s, cache, grads)
    }

    /// `(Q, dQ/da)`.
    pub fn action_gradient(
        &self,
        store: &ParamStore,
        s: &HighState,
        a: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let (q, cache) = self.forward_cached(store, s, a)?;
        Ok((q, self.backward_input(store, s, &cache, 1.0).action))
    }

    fn finish(
        &self,
        s: &HighState,
        cache: &CriticCache,
        mut grads: Vec<Vec<f64>>,
    ) -> CriticInputGrads {
        let c_o = grads.pop().expect("four fields");
        let u = grads.pop().expect("four fields");
        let mut action = grads.pop().expect("four fields");
        let d_att = grads.pop().expect("four fields");
        if let Some(att_cache) = &cache.attention {
            let hist: Vec<&[f64]> = s.history.iter().map(Vec::as_slice).collect();
            let (_, d_target) =
                self.attention()
                    .backward(&hist, &cache.fields[1], att_cache, &d_att);
            for (g, d) in action.iter_mut().zip(d_target) {
                *g += d;
            }
        }
        CriticInputGrads { action, u, c_o }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn fm(&self) -> &FmLayer {
        &self.fm
    }
}
