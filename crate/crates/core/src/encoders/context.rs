use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingTable, OovPolicy};
use crate::error::{Error, Result};
use crate::numcore::{GruCache, GruCell, Init, ParamId, ParamStore};

/// Cloud-visible spatiotemporal features of a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutraFeatures {
    pub hour: u32,
    pub day: u32,
    pub workday: bool,
    pub location: u32,
}

/// One on-device record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceFeatures {
    pub app_id: i64,
    pub stay_time: f64,
    pub district_id: i64,
    pub segment_id: i64,
}

/// Raw context of one low-level step: the outra-session features plus the
/// device sequence observed so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatures {
    pub outra: OutraFeatures,
    pub device: Vec<DeviceFeatures>,
}

/// Vocabulary sizes per feature family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub users: usize,
    pub items: usize,
    pub hours: usize,
    pub days: usize,
    pub locations: usize,
    pub apps: usize,
    pub districts: usize,
    pub segments: usize,
}

impl Vocab {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.users,
            self.items,
            self.hours,
            self.days,
            self.locations,
            self.apps,
            self.districts,
            self.segments,
        ];
        if all.contains(&0) {
            return Err(Error::Config(format!(
                "vocabulary sizes must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `c^o` as the sum of hour, day, workday and location rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutraEncoder {
    hour: EmbeddingTable,
    day: EmbeddingTable,
    workday: EmbeddingTable,
    location: EmbeddingTable,
}

impl OutraEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        vocab: &Vocab,
        dim: usize,
    ) -> Result<Self> {
        let strict = OovPolicy::Strict;
        Ok(Self {
            hour: EmbeddingTable::new(
                store,
                rng,
                &format!("{name}/hour"),
                vocab.hours,
                dim,
                strict,
            )?,
            day: EmbeddingTable::new(store, rng, &format!("{name}/day"), vocab.days, dim, strict)?,
            workday: EmbeddingTable::new(store, rng, &format!("{name}/workday"), 2, dim, strict)?,
            location: EmbeddingTable::new(
                store,
                rng,
                &format!("{name}/location"),
                vocab.locations,
                dim,
                strict,
            )?,
        })
    }

    pub fn tables(&self) -> [&EmbeddingTable; 4] {
        [&self.hour, &self.day, &self.workday, &self.location]
    }

    fn ids(f: &OutraFeatures) -> [i64; 4] {
        [
            f.hour as i64,
            f.day as i64,
            f.workday as i64,
            f.location as i64,
        ]
    }

    pub fn encode(&self, store: &ParamStore, f: &OutraFeatures) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.hour.dim()];
        for (t, id) in self.tables().into_iter().zip(Self::ids(f)) {
            for (o, v) in out.iter_mut().zip(t.lookup(store, id)?) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn backward(&self, store: &mut ParamStore, f: &OutraFeatures, grad: &[f64]) -> Result<()> {
        for (t, id) in self.tables().into_iter().zip(Self::ids(f)) {
            t.accumulate(store, id, grad)?;
        }
        Ok(())
    }
}

/// GRU over embedded device records. A record embeds as
/// `app + district + segment + stay_time * w_stay`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceEncoder {
    app: EmbeddingTable,
    district: EmbeddingTable,
    segment: EmbeddingTable,
    stay: ParamId,
    gru: GruCell,
}

pub struct DeviceCache {
    steps: Vec<GruCache>,
}

impl DeviceEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        vocab: &Vocab,
        input_dim: usize,
        latent: usize,
        app_rows: Option<&[Vec<f64>]>,
    ) -> Result<Self> {
        let reserved = OovPolicy::Reserved;
        let app = match app_rows {
            Some(rows) => {
                let t = EmbeddingTable::from_rows(store, &format!("{name}/app"), rows, reserved)?;
                if t.dim() != input_dim {
                    return Err(Error::Config("app rows must match device input dim".into()));
                }
                store.set_trainable(t.param(), false);
                t
            }
            None => EmbeddingTable::new(
                store,
                rng,
                &format!("{name}/app"),
                vocab.apps,
                input_dim,
                reserved,
            )?,
        };
        let district = EmbeddingTable::new(
            store,
            rng,
            &format!("{name}/district"),
            vocab.districts,
            input_dim,
            reserved,
        )?;
        let segment = EmbeddingTable::new(
            store,
            rng,
            &format!("{name}/segment"),
            vocab.segments,
            input_dim,
            reserved,
        )?;
        let stay = store.add(
            format!("{name}/stay"),
            &[input_dim],
            Init::FanIn(input_dim),
            rng,
        )?;
        let gru = GruCell::new(store, rng, &format!("{name}/gru"), latent, input_dim)?;
        Ok(Self {
            app,
            district,
            segment,
            stay,
            gru,
        })
    }

    pub fn latent(&self) -> usize {
        self.gru.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.gru.input()
    }

    pub fn gru(&self) -> &GruCell {
        &self.gru
    }

    pub fn embed(&self, store: &ParamStore, f: &DeviceFeatures) -> Result<Vec<f64>> {
        if !(f.stay_time.is_finite() && f.stay_time >= 0.0) {
            return Err(Error::InvalidState(format!(
                "stay time {} must be finite and >= 0",
                f.stay_time
            )));
        }
        let mut x = self.app.lookup(store, f.app_id)?.to_vec();
        for (t, id) in [
            (&self.district, f.district_id),
            (&self.segment, f.segment_id),
        ] {
            for (o, v) in x.iter_mut().zip(t.lookup(store, id)?) {
                *o += v;
            }
        }
        for (o, w) in x.iter_mut().zip(store.value(self.stay)) {
            *o += f.stay_time * w;
        }
        Ok(x)
    }

    pub fn encode(&self, store: &ParamStore, seq: &[DeviceFeatures]) -> Result<Vec<f64>> {
        Ok(self.encode_cached(store, seq)?.0)
    }

    pub fn encode_cached(
        &self,
        store: &ParamStore,
        seq: &[DeviceFeatures],
    ) -> Result<(Vec<f64>, DeviceCache)> {
        let inputs = seq
            .iter()
            .map(|f| self.embed(store, f))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let (h, steps) = self.gru.fold(store, &vec![0.0; self.latent()], &refs)?;
        Ok((h, DeviceCache { steps }))
    }

    /// Accumulates gradients into the tables, stay weights and GRU.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        seq: &[DeviceFeatures],
        cache: &DeviceCache,
        d_latent: &[f64],
    ) -> Result<()> {
        let (_, dxs) = self.gru.backward_fold(store, &cache.steps, d_latent);
        for (f, dx) in seq.iter().zip(&dxs) {
            self.app.accumulate(store, f.app_id, dx)?;
            self.district.accumulate(store, f.district_id, dx)?;
            self.segment.accumulate(store, f.segment_id, dx)?;
            for (g, d) in store.grad_mut(self.stay).iter_mut().zip(dx) {
                *g += f.stay_time * d;
            }
        }
        Ok(())
    }
}
