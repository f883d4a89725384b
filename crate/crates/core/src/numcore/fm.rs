use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Linear;
use super::params::ParamStore;
use super::tensor::{axpy, concat, dot};
use crate::error::{check_len, Error, Result};

/// Factorization-machine style interaction layer over `fields` vectors of
/// equal length: a learned linear projection of the concatenated fields
/// followed by every pairwise inner product `<v_i, v_j>`, `i < j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FmLayer {
    linear: Linear,
    fields: usize,
    field_dim: usize,
}

impl FmLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        fields: usize,
        field_dim: usize,
        projection: usize,
    ) -> Result<Self> {
        if fields == 0 {
            return Err(Error::Config("fm layer needs at least one field".into()));
        }
        let linear = Linear::new(
            store,
            rng,
            &format!("{name}/linear"),
            fields * field_dim,
            projection,
        )?;
        Ok(Self {
            linear,
            fields,
            field_dim,
        })
    }

    pub fn linear(&self) -> &Linear {
        &self.linear
    }

    pub fn num_pairs(&self) -> usize {
        self.fields * (self.fields - 1) / 2
    }

    pub fn output(&self) -> usize {
        self.linear.output() + self.num_pairs()
    }

    fn check(&self, fields: &[&[f64]]) -> Result<()> {
        check_len(self.fields, fields.len(), "fm field count")?;
        for f in fields {
            check_len(self.field_dim, f.len(), "fm field length")?;
        }
        Ok(())
    }

    pub fn forward(&self, store: &ParamStore, fields: &[&[f64]]) -> Result<Vec<f64>> {
        self.check(fields)?;
        let mut out = self.linear.forward(store, &concat(fields))?;
        out.extend(second_order(fields)?);
        Ok(out)
    }

    /// Returns one gradient per field.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        fields: &[&[f64]],
        d_out: &[f64],
    ) -> Vec<Vec<f64>> {
        let p = self.linear.output();
        let d_cat = self.linear.backward(store, &concat(fields), &d_out[..p]);
        let mut grads: Vec<Vec<f64>> = d_cat.chunks(self.field_dim).map(<[f64]>::to_vec).collect();
        pairwise_backward(fields, &d_out[p..], &mut grads);
        grads
    }

    pub fn backward_input(
        &self,
        store: &ParamStore,
        fields: &[&[f64]],
        d_out: &[f64],
    ) -> Vec<Vec<f64>> {
        let p = self.linear.output();
        let d_cat = self.linear.backward_input(store, &d_out[..p]);
        let mut grads: Vec<Vec<f64>> = d_cat.chunks(self.field_dim).map(<[f64]>::to_vec).collect();
        pairwise_backward(fields, &d_out[p..], &mut grads);
        grads
    }
}

/// All pairwise inner products `<v_i, v_j>` for `i < j`, in lexicographic
/// pair order.
pub fn second_order(fields: &[&[f64]]) -> Result<Vec<f64>> {
    if fields.is_empty() {
        return Err(Error::Empty("fm fields"));
    }
    let len = fields[0].len();
    for f in fields {
        check_len(len, f.len(), "fm field length")?;
    }
    let mut out = Vec::with_capacity(fields.len() * (fields.len().saturating_sub(1)) / 2);
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            out.push(dot(fields[i], fields[j]));
        }
    }
    Ok(out)
}

fn pairwise_backward(fields: &[&[f64]], d_pairs: &[f64], grads: &mut [Vec<f64>]) {
    let mut k = 0;
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            let d = d_pairs[k];
            axpy(d, fields[j], &mut grads[i]);
            axpy(d, fields[i], &mut grads[j]);
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{grad_check_store, random_direction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_fields_have_zero_interaction() {
        assert_eq!(
            second_order(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn equal_fields() {
        assert_eq!(
            second_order(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap(),
            vec![2.0]
        );
    }

    #[test]
    fn three_fields_brute_force() {
        let a = [1.0, 2.0, -1.0];
        let b = [0.5, 0.0, 3.0];
        let c = [-2.0, 1.0, 1.0];
        // <a,b> = 0.5 - 3 = -2.5; <a,c> = -2 + 2 - 1 = -1; <b,c> = -1 + 3 = 2
        assert_eq!(second_order(&[&a, &b, &c]).unwrap(), vec![-2.5, -1.0, 2.0]);
    }

    #[test]
    fn inconsistent_lengths_rejected() {
        assert!(second_order(&[&[1.0, 2.0], &[1.0]]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let fm = FmLayer::new(&mut s, &mut rng, "fm", 2, 2, 3).unwrap();
        assert!(fm.forward(&s, &[&[1.0, 2.0], &[1.0]]).is_err());
        assert_eq!(fm.output(), 4);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut s = ParamStore::new();
            let fm = FmLayer::new(&mut s, &mut rng, "fm", 3, 4, 5).unwrap();
            let x = random_direction(&mut rng, 12);
            let c = random_direction(&mut rng, fm.output());
            let err = grad_check_store(
                &mut s,
                &x,
                1e-6,
                |s, v| {
                    let f: Vec<&[f64]> = v.chunks(4).collect();
                    Ok(dot(&fm.forward(s, &f)?, &c))
                },
                |s, v| {
                    let f: Vec<&[f64]> = v.chunks(4).collect();
                    Ok(fm.backward(s, &f, &c).concat())
                },
            )
            .unwrap();
            assert!(err < 1e-4, "fm grad err {err}");
        }
    }
}
