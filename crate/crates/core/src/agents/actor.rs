use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{DeviceCache, DeviceEncoder, DeviceFeatures, Vocab};
use crate::error::{check_len, Error, Result};
use crate::numcore::{Activation, LayerSpec, Mlp, MlpCache, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorConfig {
    /// Hidden widths before the output layer of width `L`.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_activation: Activation,
    /// Width of an embedded device record.
    pub device_input: usize,
    /// Latent size of the device GRU.
    pub device_latent: usize,
    /// Start the output layer at zero, so the initial policy scores every
    /// candidate equally.
    #[serde(default)]
    pub zero_output: bool,
    /// Let the device GRU see its input through an identity block, so the
    /// latent starts as a blend of recent record embeddings. Needs
    /// `device_latent == device_input`.
    #[serde(default)]
    pub aligned_device: bool,
}

/// `pi_theta(s^l) = MLP([u, c^o, sre_latent, device_latent])`.
///
/// The SRE latent and `u`, `c^o` come from the shared encoders and enter as
/// constants; the actor's own parameters are the device encoder and the MLP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Actor {
    dim: usize,
    device: DeviceEncoder,
    mlp: Mlp,
}

pub struct ActorCache {
    device: DeviceCache,
    mlp: MlpCache,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        vocab: &Vocab,
        dim: usize,
        cfg: &ActorConfig,
        app_rows: Option<&[Vec<f64>]>,
    ) -> Result<Self> {
        let device = DeviceEncoder::new(
            store,
            rng,
            "actor/device",
            vocab,
            cfg.device_input,
            cfg.device_latent,
            app_rows,
        )?;
        let mut widths = cfg.hidden.clone();
        widths.push(dim);
        let spec = LayerSpec::mlp(
            3 * dim + cfg.device_latent,
            &widths,
            cfg.activation,
            cfg.output_activation,
        );
        let mlp = Mlp::new(store, rng, "actor/mlp", &spec)?;
        if cfg.zero_output {
            let last = mlp.layers().last().expect("mlp has an output layer");
            store.value_mut(last.weight()).fill(0.0);
            store.value_mut(last.bias()).fill(0.0);
        }
        if cfg.aligned_device {
            if cfg.device_latent != cfg.device_input {
                return Err(Error::Config(
                    "aligned device GRU needs latent == input width".into(),
                ));
            }
            let n = cfg.device_latent;
            let wh = store.value_mut(device.gru().weights()[2]);
            for i in 0..n {
                for j in 0..n {
                    wh[i * 2 * n + n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        Ok(Self { dim, device, mlp })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn device(&self) -> &DeviceEncoder {
        &self.device
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn input_dim(&self) -> usize {
        3 * self.dim + self.device.latent()
    }

    pub fn device_latent(&self, store: &ParamStore, seq: &[DeviceFeatures]) -> Result<Vec<f64>> {
        self.device.encode(store, seq)
    }

    /// Policy output from precomputed latents.
    pub fn head(
        &self,
        store: &ParamStore,
        u: &[f64],
        c_o: &[f64],
        sre: &[f64],
        device: &[f64],
    ) -> Result<Vec<f64>> {
        self.mlp.forward(store, &self.input(u, c_o, sre, device)?)
    }

    fn input(&self, u: &[f64], c_o: &[f64], sre: &[f64], device: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, u.len(), "actor user")?;
        check_len(self.dim, c_o.len(), "actor context")?;
        check_len(self.dim, sre.len(), "actor session latent")?;
        check_len(self.device.latent(), device.len(), "actor device latent")?;
        let mut x = Vec::with_capacity(self.input_dim());
        for part in [u, c_o, sre, device] {
            x.extend_from_slice(part);
        }
        Ok(x)
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        u: &[f64],
        c_o: &[f64],
        sre: &[f64],
        seq: &[DeviceFeatures],
    ) -> Result<Vec<f64>> {
        let device = self.device.encode(store, seq)?;
        self.head(store, u, c_o, sre, &device)
    }

    pub fn forward_cached(
        &self,
        store: &ParamStore,
        u: &[f64],
        c_o: &[f64],
        sre: &[f64],
        seq: &[DeviceFeatures],
    ) -> Result<(Vec<f64>, ActorCache)> {
        let (device_latent, device) = self.device.encode_cached(store, seq)?;
        let (out, mlp) = self
            .mlp
            .forward_cached(store, &self.input(u, c_o, sre, &device_latent)?)?;
        Ok((out, ActorCache { device, mlp }))
    }

    /// Accumulates actor parameter gradients for `d_out`; returns the
    /// gradient with respect to `[u, c^o, sre_latent]`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        seq: &[DeviceFeatures],
        cache: &ActorCache,
        d_out: &[f64],
    ) -> Result<[Vec<f64>; 3]> {
        let dx = self.mlp.backward(store, &cache.mlp, d_out);
        let d = self.dim;
        self.device
            .backward(store, seq, &cache.device, &dx[3 * d..])?;
        Ok([
            dx[..d].to_vec(),
            dx[d..2 * d].to_vec(),
            dx[2 * d..3 * d].to_vec(),
        ])
    }
}
