use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "mcchrl.params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Index of a parameter inside the [`ParamStore`] that created it.
///
/// Stores cloned from one another share the layout, so an id stays valid
/// for target copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct Param {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    trainable: bool,
}

impl Param {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn value(&self) -> &Tensor {
        &self.value
    }
    pub fn grad(&self) -> &[f64] {
        &self.grad
    }
    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanIn(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named learnable tensors with gradients and Adam moments.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<ParamId> {
        let name = name.into();
        let n: usize = shape.iter().product();
        let values = match init {
            Init::Zeros => vec![0.0; n],
            Init::Uniform(b) => (0..n).map(|_| rng.random_range(-b..=b)).collect(),
            Init::FanIn(fan) => {
                let b = 1.0 / (fan.max(1) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-b..=b)).collect()
            }
        };
        self.insert(name, Tensor::new(shape.to_vec(), values)?)
    }

    pub fn insert(&mut self, name: String, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        let n = value.len();
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            trainable: true,
        });
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn params(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &[f64] {
        self.params[id.0].value.values()
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.params[id.0].value.values_mut()
    }

    #[inline]
    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].grad
    }

    /// Value and gradient of one parameter, borrowed together.
    #[inline]
    pub fn value_and_grad(&mut self, id: ParamId) -> (&[f64], &mut [f64]) {
        let p = &mut self.params[id.0];
        (p.value.values(), &mut p.grad)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_is_zero(&self) -> bool {
        self.params.iter().all(|p| p.grad.iter().all(|&g| g == 0.0))
    }

    /// Adds the gradients of `lambda1 * |w|_1 + lambda2 * |w|_2^2` over
    /// trainable parameters.
    pub fn add_regularization(&mut self, lambda1: f64, lambda2: f64) {
        if lambda1 == 0.0 && lambda2 == 0.0 {
            return;
        }
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            for (g, &w) in p.grad.iter_mut().zip(p.value.values()) {
                let sign = if w > 0.0 {
                    1.0
                } else if w < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *g += lambda1 * sign + 2.0 * lambda2 * w;
            }
        }
    }

    /// One Adam step over trainable parameters, then clears gradients.
    ///
    /// Elements whose gradient is exactly zero are skipped, so their value and
    /// moments stay untouched.
    pub fn adam_step(&mut self, lr: f64, cfg: &AdamConfig) {
        if self.params.is_empty() {
            return;
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            if p.trainable {
                let values = p.value.values_mut();
                for i in 0..values.len() {
                    let g = p.grad[i];
                    if g == 0.0 {
                        continue;
                    }
                    p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
                    p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
                    let m_hat = p.m[i] / bc1;
                    let v_hat = p.v[i] / bc2;
                    values[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
                }
            }
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// `target <- tau * self + (1 - tau) * target`, element-wise.
    pub fn soft_update_into(&self, target: &mut ParamStore, tau: f64) -> Result<()> {
        self.check_layout(target)?;
        for (src, dst) in self.params.iter().zip(target.params.iter_mut()) {
            for (d, &s) in dst.value.values_mut().iter_mut().zip(src.value.values()) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
        Ok(())
    }

    /// Overwrites values (not moments) from a store with the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        other.check_layout(self)?;
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.values_mut().copy_from_slice(src.value.values());
        }
        Ok(())
    }

    fn check_layout(&self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                actual: other.params.len(),
                context: "param store layout",
            });
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::InvalidState(format!(
                    "param layout differs at `{}`",
                    a.name
                )));
            }
        }
        Ok(())
    }

    /// Trainable values flattened in store order.
    pub fn flatten_trainable(&self) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.value.values().iter().copied())
            .collect()
    }

    pub fn flatten_trainable_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    pub fn assign_trainable(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self
            .params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum();
        crate::error::check_len(total, flat.len(), "flattened parameters")?;
        let mut off = 0;
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            let n = p.value.len();
            p.value.values_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            step: self.step,
            params: self
                .params
                .iter()
                .map(|p| CheckpointEntry {
                    name: p.name.clone(),
                    trainable: p.trainable,
                    value: p.value.clone(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!(
                "unknown checkpoint format `{}`",
                ckpt.format
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Schema {
                expected: CHECKPOINT_VERSION,
                found: ckpt.version,
            });
        }
        let mut store = ParamStore::new();
        for e in ckpt.params {
            let id = store.insert(e.name, e.value)?;
            store.set_trainable(id, e.trainable);
        }
        store.step = ckpt.step;
        Ok(store)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub params: Vec<CheckpointEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub trainable: bool,
    #[serde(flatten)]
    pub value: Tensor,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_store(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s
            .insert("x".into(), Tensor::new(vec![1], vec![v]).unwrap())
            .unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        s.add("a", &[3, 4], Init::FanIn(4), &mut rng).unwrap();
        // advance moments first so a lazy skip is really exercised
        s.grad_mut(ParamId(0)).iter_mut().for_each(|g| *g = 0.3);
        s.adam_step(1e-3, &AdamConfig::default());
        let before = s.flatten_trainable();
        s.adam_step(1e-3, &AdamConfig::default());
        assert_eq!(before, s.flatten_trainable());
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        for g in [2.5, -0.01] {
            let (mut s, id) = scalar_store(1.0);
            s.grad_mut(id)[0] = g;
            s.adam_step(0.01, &AdamConfig::default());
            let delta = s.value(id)[0] - 1.0;
            assert!((delta + 0.01 * g.signum()).abs() < 1e-6, "delta {delta}");
        }
    }

    #[test]
    fn two_steps_match_scalar_recursion() {
        let cfg = AdamConfig::default();
        let (lr, g) = (0.05, 0.7);
        let (mut s, id) = scalar_store(0.2);
        // hand-rolled recursion
        let (mut x, mut m, mut v) = (0.2f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            x -= lr * mh / (vh.sqrt() + cfg.eps);
            s.grad_mut(id)[0] = g;
            s.adam_step(lr, &cfg);
        }
        assert!((s.value(id)[0] - x).abs() < 1e-15);
    }

    #[test]
    fn adam_on_empty_store_is_noop() {
        let mut s = ParamStore::new();
        s.adam_step(0.1, &AdamConfig::default());
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn frozen_params_do_not_move() {
        let (mut s, id) = scalar_store(1.0);
        s.set_trainable(id, false);
        s.grad_mut(id)[0] = 1.0;
        s.adam_step(0.1, &AdamConfig::default());
        assert_eq!(s.value(id)[0], 1.0);
        assert!(s.grad_is_zero());
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = scalar_store(1.0);
        assert!(matches!(
            s.insert("x".into(), Tensor::zeros(&[1])),
            Err(Error::DuplicateParam(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = ParamStore::new();
        s.add("enc/w", &[5, 3], Init::Uniform(1.0), &mut rng)
            .unwrap();
        let b = s.add("enc/b", &[5], Init::Uniform(1e-7), &mut rng).unwrap();
        s.set_trainable(b, false);
        let text = serde_json::to_string(&s.to_checkpoint()).unwrap();
        let back = ParamStore::from_checkpoint(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(s.to_checkpoint(), back.to_checkpoint());
    }

    #[test]
    fn checkpoint_version_checked() {
        let (s, _) = scalar_store(1.0);
        let mut c = s.to_checkpoint();
        c.version = 99;
        assert!(matches!(
            ParamStore::from_checkpoint(c),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn soft_update_mixes() {
        let (net, _) = scalar_store(1.0);
        let (mut tgt, id) = scalar_store(0.0);
        net.soft_update_into(&mut tgt, 0.001).unwrap();
        assert!((tgt.value(id)[0] - 0.001).abs() < 1e-15);
    }
}
