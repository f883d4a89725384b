use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numcore::{Init, ParamId, ParamStore, Tensor};

/// What happens to an id at or beyond the vocabulary size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Map to the reserved row 0.
    Reserved,
    /// Reject with an error.
    Strict,
}

/// Lookup table of `vocab` rows of length `dim`, stored as one parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    id: ParamId,
    name: String,
    vocab: usize,
    dim: usize,
    oov: OovPolicy,
}

impl EmbeddingTable {
    /// Rows are drawn uniformly from `[-1/sqrt(dim), 1/sqrt(dim)]`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        vocab: usize,
        dim: usize,
        oov: OovPolicy,
    ) -> Result<Self> {
        if vocab == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "table `{name}` needs vocab and dim > 0"
            )));
        }
        let id = store.add(
            name,
            &[vocab, dim],
            Init::Uniform(1.0 / (dim as f64).sqrt()),
            rng,
        )?;
        Ok(Self {
            id,
            name: name.to_string(),
            vocab,
            dim,
            oov,
        })
    }

    /// Builds a table whose rows are copied from `rows`.
    pub fn from_rows(
        store: &mut ParamStore,
        name: &str,
        rows: &[Vec<f64>],
        oov: OovPolicy,
    ) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or(Error::Empty("embedding rows"))?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_len(dim, r.len(), "embedding row")?;
            values.extend_from_slice(r);
        }
        let id = store.insert(
            name.to_string(),
            Tensor::new(vec![rows.len(), dim], values)?,
        )?;
        Ok(Self {
            id,
            name: name.to_string(),
            vocab: rows.len(),
            dim,
            oov,
        })
    }

    pub fn param(&self) -> ParamId {
        self.id
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov(&self) -> OovPolicy {
        self.oov
    }

    pub fn row_index(&self, id: i64) -> Result<usize> {
        if id < 0 {
            return Err(Error::InvalidId {
                id,
                table: self.name.clone(),
            });
        }
        let idx = id as usize;
        if idx < self.vocab {
            return Ok(idx);
        }
        match self.oov {
            OovPolicy::Reserved => Ok(0),
            OovPolicy::Strict => Err(Error::InvalidId {
                id,
                table: self.name.clone(),
            }),
        }
    }

    pub fn lookup<'a>(&self, store: &'a ParamStore, id: i64) -> Result<&'a [f64]> {
        let r = self.row_index(id)?;
        Ok(&store.value(self.id)[r * self.dim..(r + 1) * self.dim])
    }

    pub fn set_row(&self, store: &mut ParamStore, id: i64, row: &[f64]) -> Result<()> {
        check_len(self.dim, row.len(), "embedding row")?;
        let r = self.row_index(id)?;
        store.value_mut(self.id)[r * self.dim..(r + 1) * self.dim].copy_from_slice(row);
        Ok(())
    }

    /// Adds `grad` to the gradient of the row that `id` resolves to.
    pub fn accumulate(&self, store: &mut ParamStore, id: i64, grad: &[f64]) -> Result<()> {
        check_len(self.dim, grad.len(), "embedding gradient")?;
        let r = self.row_index(id)?;
        for (g, d) in store.grad_mut(self.id)[r * self.dim..(r + 1) * self.dim]
            .iter_mut()
            .zip(grad)
        {
            *g += d;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::AdamConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(oov: OovPolicy) -> (ParamStore, EmbeddingTable) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let t = EmbeddingTable::new(&mut s, &mut rng, "t", 5, 3, oov).unwrap();
        (s, t)
    }

    #[test]
    fn id_zero_is_row_zero() {
        let (s, t) = table(OovPolicy::Reserved);
        assert_eq!(t.lookup(&s, 0).unwrap(), &s.value(t.param())[..3]);
    }

    #[test]
    fn oov_maps_to_reserved_row() {
        let (s, t) = table(OovPolicy::Reserved);
        assert_eq!(t.lookup(&s, 99).unwrap(), t.lookup(&s, 0).unwrap());
        let (s, t) = table(OovPolicy::Strict);
        assert!(t.lookup(&s, 5).is_err());
        assert!(t.lookup(&s, 4).is_ok());
    }

    #[test]
    fn negative_id_is_an_error() {
        let (s, t) = table(OovPolicy::Reserved);
        assert!(matches!(
            t.lookup(&s, -1),
            Err(Error::InvalidId { id: -1, .. })
        ));
    }

    #[test]
    fn lookup_has_table_dim() {
        let (s, t) = table(OovPolicy::Reserved);
        for id in 0..10 {
            assert_eq!(t.lookup(&s, id).unwrap().len(), 3);
        }
    }

    #[test]
    fn gradient_only_moves_touched_rows() {
        let (mut s, t) = table(OovPolicy::Reserved);
        let before: Vec<Vec<f64>> = (0..5).map(|i| t.lookup(&s, i).unwrap().to_vec()).collect();
        // identical starting rows so the update alone must separate them
        t.set_row(&mut s, 2, &before[1]).unwrap();
        t.accumulate(&mut s, 1, &[1.0, -1.0, 0.5]).unwrap();
        t.accumulate(&mut s, 2, &[-1.0, 1.0, 0.5]).unwrap();
        s.adam_step(0.1, &AdamConfig::default());
        assert_ne!(t.lookup(&s, 1).unwrap(), t.lookup(&s, 2).unwrap());
        for i in [0, 3, 4] {
            assert_eq!(t.lookup(&s, i).unwrap(), before[i as usize].as_slice());
        }
    }

    #[test]
    fn from_rows_copies_values() {
        let mut s = ParamStore::new();
        let t = EmbeddingTable::from_rows(
            &mut s,
            "r",
            &[vec![1.0, 2.0], vec![3.0, 4.0]],
            OovPolicy::Strict,
        )
        .unwrap();
        assert_eq!(t.lookup(&s, 1).unwrap(), &[3.0, 4.0]);
        assert_eq!(t.vocab(), 2);
    }
}
