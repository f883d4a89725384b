use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Init, ParamId, ParamStore};
use super::tensor::{matvec, matvec_t_acc, outer_acc, sigmoid};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    None,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::None => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Linear,
    Gru,
    Mlp,
    Attention,
    Fm,
}

/// Shape and activation description of a layer.
///
/// For an MLP `hidden` lists the width of every layer including the output
/// layer, and `activations` holds one tag per entry of `hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input: usize,
    pub output: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activations: Vec<Activation>,
}

impl LayerSpec {
    /// MLP with `hidden` widths (last one is the output) using `act` on every
    /// layer except the last, which uses `last`.
    pub fn mlp(input: usize, hidden: &[usize], act: Activation, last: Activation) -> Self {
        let mut activations = vec![act; hidden.len()];
        if let Some(a) = activations.last_mut() {
            *a = last;
        }
        Self {
            kind: LayerKind::Mlp,
            input,
            output: hidden.last().copied().unwrap_or(input),
            hidden: hidden.to_vec(),
            activations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "layer dims must be positive: {self:?}"
            )));
        }
        if self.kind == LayerKind::Mlp {
            if self.hidden.is_empty() {
                return Err(Error::Config("mlp needs at least one layer".into()));
            }
            if self.activations.len() != self.hidden.len() {
                return Err(Error::Config(format!(
                    "mlp has {} layers but {} activation tags",
                    self.hidden.len(),
                    self.activations.len()
                )));
            }
            if self.hidden.last() != Some(&self.output) {
                return Err(Error::Config("mlp output must equal its last width".into()));
            }
        }
        Ok(())
    }
}

/// Affine map `y = W x + b` with `W` stored as `output x input`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
    input: usize,
    output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        input: usize,
        output: usize,
    ) -> Result<Self> {
        let w = store.add(
            format!("{name}/w"),
            &[output, input],
            Init::FanIn(input),
            rng,
        )?;
        let b = store.add(format!("{name}/b"), &[output], Init::FanIn(input), rng)?;
        Ok(Self {
            w,
            b,
            input,
            output,
        })
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input, x.len(), "linear input")?;
        let mut y = vec![0.0; self.output];
        matvec(store.value(self.w), self.output, self.input, x, &mut y);
        for (yi, bi) in y.iter_mut().zip(store.value(self.b)) {
            *yi += bi;
        }
        Ok(y)
    }

    /// Accumulates parameter gradients for the input `x` that produced the
    /// output and returns `dL/dx`.
    pub fn backward(&self, store: &mut ParamStore, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        {
            let (w, gw) = store.value_and_grad(self.w);
            matvec_t_acc(w, self.output, self.input, dy, &mut dx);
            outer_acc(gw, self.output, self.input, dy, x);
        }
        for (g, d) in store.grad_mut(self.b).iter_mut().zip(dy) {
            *g += d;
        }
        dx
    }

    /// Input gradient only; parameters receive nothing.
    pub fn backward_input(&self, store: &ParamStore, dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        matvec_t_acc(store.value(self.w), self.output, self.input, dy, &mut dx);
        dx
    }
}

/// Stack of linear layers with per-layer activations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Linear>,
    activations: Vec<Activation>,
}

#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        spec: &LayerSpec,
    ) -> Result<Self> {
        if spec.kind != LayerKind::Mlp {
            return Err(Error::Config(format!(
                "expected an mlp spec, got {:?}",
                spec.kind
            )));
        }
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.hidden.len());
        let mut input = spec.input;
        for (i, &width) in spec.hidden.iter().enumerate() {
            layers.push(Linear::new(
                store,
                rng,
                &format!("{name}/{i}"),
                input,
                width,
            )?);
            input = width;
        }
        Ok(Self {
            layers,
            activations: spec.activations.clone(),
        })
    }

    pub fn input(&self) -> usize {
        self.layers[0].input()
    }

    pub fn output(&self) -> usize {
        self.layers.last().map(Linear::output).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            h = layer.forward(store, &h)?;
            h.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        Ok(h)
    }

    pub fn forward_cached(&self, store: &ParamStore, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let mut cache = MlpCache::default();
        let mut h = x.to_vec();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let pre = layer.forward(store, &h)?;
            let post: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
            cache.inputs.push(std::mem::replace(&mut h, post.clone()));
            cache.pre.push(pre);
            cache.post.push(post);
        }
        Ok((h, cache))
    }

    fn scale_by_derivative(&self, i: usize, cache: &MlpCache, grad: &mut [f64]) {
        let act = self.activations[i];
        for ((g, &x), &y) in grad.iter_mut().zip(&cache.pre[i]).zip(&cache.post[i]) {
            *g *= act.derivative(x, y);
        }
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &MlpCache, dy: &[f64]) -> Vec<f64> {
        let mut grad = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            self.scale_by_derivative(i, cache, &mut grad);
            grad = self.layers[i].backward(store, &cache.inputs[i], &grad);
        }
        grad
    }

    /// Gradient with respect to the input only.
    pub fn backward_input(&self, store: &ParamStore, cache: &MlpCache, dy: &[f64]) -> Vec<f64> {
        let mut grad = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            self.scale_by_derivative(i, cache, &mut grad);
            grad = self.layers[i].backward_input(store, &grad);
        }
        grad
    }
}
