//! Embedding tables and sequence encoders.

mod context;
mod embedding;
mod sre;

pub use context::{
    ContextFeatures, DeviceCache, DeviceEncoder, DeviceFeatures, OutraEncoder, OutraFeatures, Vocab,
};
pub use embedding::{EmbeddingTable, OovPolicy};
pub use sre::{intra_context, SessionEmbedding, Sre};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numcore::ParamStore;

/// Encoders shared by the critic and the actor: item and user tables, the
/// outra-session context encoder and the SRE. Their parameters live in one
/// store owned by the caller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoders {
    pub items: EmbeddingTable,
    pub users: EmbeddingTable,
    pub outra: OutraEncoder,
    pub sre: Sre,
}

impl Encoders {
    /// `item_rows` replaces the random item table (row 0 stays the reserved
    /// row) and is frozen when given.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        vocab: &Vocab,
        dim: usize,
        session_len: usize,
        item_rows: Option<&[Vec<f64>]>,
        aligned_sre: bool,
    ) -> Result<Self> {
        let items = match item_rows {
            Some(rows) => {
                let t = EmbeddingTable::from_rows(store, "items", rows, OovPolicy::Reserved)?;
                store.set_trainable(t.param(), false);
                t
            }
            None => {
                EmbeddingTable::new(store, rng, "items", vocab.items, dim, OovPolicy::Reserved)?
            }
        };
        let users =
            EmbeddingTable::new(store, rng, "users", vocab.users, dim, OovPolicy::Reserved)?;
        let outra = OutraEncoder::new(store, rng, "outra", vocab, dim)?;
        let sre = Sre::new(store, rng, "sre", dim, session_len, aligned_sre)?;
        Ok(Self {
            items,
            users,
            outra,
            sre,
        })
    }

    pub fn dim(&self) -> usize {
        self.sre.dim()
    }

    pub fn embed_item<'a>(&self, store: &'a ParamStore, id: i64) -> Result<&'a [f64]> {
        self.items.lookup(store, id)
    }

    pub fn embed_user<'a>(&self, store: &'a ParamStore, id: i64) -> Result<&'a [f64]> {
        self.users.lookup(store, id)
    }

    pub fn encode_outra_context(&self, store: &ParamStore, f: &OutraFeatures) -> Result<Vec<f64>> {
        self.outra.encode(store, f)
    }

    /// SRE embedding of a list of item ids.
    pub fn encode_items(&self, store: &ParamStore, ids: &[i64]) -> Result<SessionEmbedding> {
        let rows = ids
            .iter()
            .map(|&i| self.items.lookup(store, i))
            .collect::<Result<Vec<_>>>()?;
        self.sre.encode(store, &rows)
    }
}
