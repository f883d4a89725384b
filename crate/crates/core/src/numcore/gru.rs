use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Init, ParamId, ParamStore};
use super::tensor::{matvec, matvec_t_acc, outer_acc, sigmoid};
use crate::error::{check_len, Result};

/// Gated recurrent unit without bias terms:
///
/// ```text
/// z  = sigmoid(W_z [h, x])
/// r  = sigmoid(W_r [h, x])
/// h~ = tanh(W_h [r * h, x])
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruCell {
    wz: ParamId,
    wr: ParamId,
    wh: ParamId,
    hidden: usize,
    input: usize,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    h_prev: Vec<f64>,
    hx: Vec<f64>,
    rhx: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    h_tilde: Vec<f64>,
}

impl GruCache {
    pub fn update_gate(&self) -> &[f64] {
        &self.z
    }

    pub fn reset_gate(&self) -> &[f64] {
        &self.r
    }
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        hidden: usize,
        input: usize,
    ) -> Result<Self> {
        let fan = hidden + input;
        let shape = [hidden, fan];
        let wz = store.add(format!("{name}/w_z"), &shape, Init::FanIn(fan), rng)?;
        let wr = store.add(format!("{name}/w_r"), &shape, Init::FanIn(fan), rng)?;
        let wh = store.add(format!("{name}/w_h"), &shape, Init::FanIn(fan), rng)?;
        Ok(Self {
            wz,
            wr,
            wh,
            hidden,
            input,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn weights(&self) -> [ParamId; 3] {
        [self.wz, self.wr, self.wh]
    }

    pub fn forward(&self, store: &ParamStore, h: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(store, h, x)?.0)
    }

    pub fn forward_cached(
        &self,
        store: &ParamStore,
        h: &[f64],
        x: &[f64],
    ) -> Result<(Vec<f64>, GruCache)> {
        check_len(self.hidden, h.len(), "gru hidden state")?;
        check_len(self.input, x.len(), "gru input")?;
        let (nh, fan) = (self.hidden, self.hidden + self.input);
        let mut hx = Vec::with_capacity(fan);
        hx.extend_from_slice(h);
        hx.extend_from_slice(x);

        let mut z = vec![0.0; nh];
        let mut r = vec![0.0; nh];
        matvec(store.value(self.wz), nh, fan, &hx, &mut z);
        matvec(store.value(self.wr), nh, fan, &hx, &mut r);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut rhx = hx.clone();
        for i in 0..nh {
            rhx[i] *= r[i];
        }
        let mut h_tilde = vec![0.0; nh];
        matvec(store.value(self.wh), nh, fan, &rhx, &mut h_tilde);
        h_tilde.iter_mut().for_each(|v| *v = v.tanh());

        let out: Vec<f64> = (0..nh)
            .map(|i| (1.0 - z[i]) * h[i] + z[i] * h_tilde[i])
            .collect();
        Ok((
            out,
            GruCache {
                h_prev: h.to_vec(),
                hx,
                rhx,
                z,
                r,
                h_tilde,
            },
        ))
    }

    /// Backpropagates `dh_next` through one step. Returns `(dh_prev, dx)`;
    /// parameter gradients accumulate into `store` unless `store_grads` is
    /// false.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &GruCache,
        dh_next: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        self.backward_impl(store, cache, dh_next, true)
    }

    /// Same as [`GruCell::backward`] but leaves parameter gradients untouched.
    pub fn backward_input(
        &self,
        store: &mut ParamStore,
        cache: &GruCache,
        dh_next: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        self.backward_impl(store, cache, dh_next, false)
    }

    fn backward_impl(
        &self,
        store: &mut ParamStore,
        cache: &GruCache,
        dh_next: &[f64],
        store_grads: bool,
    ) -> (Vec<f64>, Vec<f64>) {
        let (nh, fan) = (self.hidden, self.hidden + self.input);
        let GruCache {
            h_prev,
            hx,
            rhx,
            z,
            r,
            h_tilde,
        } = cache;

        let mut dh_prev: Vec<f64> = (0..nh).map(|i| dh_next[i] * (1.0 - z[i])).collect();
        let mut dz_pre = vec![0.0; nh];
        let mut dht_pre = vec![0.0; nh];
        for i in 0..nh {
            let dz = dh_next[i] * (h_tilde[i] - h_prev[i]);
            dz_pre[i] = dz * z[i] * (1.0 - z[i]);
            dht_pre[i] = dh_next[i] * z[i] * (1.0 - h_tilde[i] * h_tilde[i]);
        }

        // candidate path
        let mut d_rhx = vec![0.0; fan];
        {
            let (wh, gwh) = store.value_and_grad(self.wh);
            matvec_t_acc(wh, nh, fan, &dht_pre, &mut d_rhx);
            if store_grads {
                outer_acc(gwh, nh, fan, &dht_pre, rhx);
            }
        }
        let mut dr_pre = vec![0.0; nh];
        for i in 0..nh {
            dh_prev[i] += d_rhx[i] * r[i];
            let dr = d_rhx[i] * h_prev[i];
            dr_pre[i] = dr * r[i] * (1.0 - r[i]);
        }

        // gate paths
        let mut d_hx = vec![0.0; fan];
        for (id, pre) in [(self.wz, &dz_pre), (self.wr, &dr_pre)] {
            let (w, gw) = store.value_and_grad(id);
            matvec_t_acc(w, nh, fan, pre, &mut d_hx);
            if store_grads {
                outer_acc(gw, nh, fan, pre, hx);
            }
        }
        for i in 0..nh {
            dh_prev[i] += d_hx[i];
        }
        let dx: Vec<f64> = (nh..fan).map(|j| d_hx[j] + d_rhx[j]).collect();
        (dh_prev, dx)
    }

    /// Runs the cell over a sequence from `h0`; returns the final state and
    /// one cache per step.
    pub fn fold(
        &self,
        store: &ParamStore,
        h0: &[f64],
        xs: &[&[f64]],
    ) -> Result<(Vec<f64>, Vec<GruCache>)> {
        let mut h = h0.to_vec();
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (next, cache) = self.forward_cached(store, &h, x)?;
            caches.push(cache);
            h = next;
        }
        Ok((h, caches))
    }

    /// Backpropagation through time over caches produced by [`GruCell::fold`].
    /// Returns `(dh0, dxs)`.
    pub fn backward_fold(
        &self,
        store: &mut ParamStore,
        caches: &[GruCache],
        dh_last: &[f64],
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut dh = dh_last.to_vec();
        let mut dxs = vec![Vec::new(); caches.len()];
        for (t, cache) in caches.iter().enumerate().rev() {
            let (dprev, dx) = self.backward(store, cache, &dh);
            dxs[t] = dx;
            dh = dprev;
        }
        (dh, dxs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{grad_check_store, random_direction};
    use crate::numcore::tensor::dot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(h: usize, x: usize) -> (ParamStore, GruCell) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let cell = GruCell::new(&mut s, &mut rng, "g", h, x).unwrap();
        let n = s.flatten_trainable().len();
        s.assign_trainable(&vec![0.0; n]).unwrap();
        (s, cell)
    }

    #[test]
    fn zero_weights_halve_state() {
        let (s, cell) = zero_cell(1, 1);
        let (h, cache) = cell.forward_cached(&s, &[0.8], &[0.3]).unwrap();
        assert_eq!(cache.update_gate(), &[0.5]);
        assert_eq!(cache.h_tilde, vec![0.0]);
        assert!((h[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_state_is_fixed_point_of_zero_cell() {
        let (s, cell) = zero_cell(1, 1);
        assert_eq!(cell.forward(&s, &[0.0], &[5.0]).unwrap(), vec![0.0]);
    }

    /// Scalar evaluation of the four gate equations, written independently of
    /// the matrix code.
    fn hand_gru(wz: [f64; 2], wr: [f64; 2], wh: [f64; 2], h: f64, x: f64) -> f64 {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z = sig(wz[0] * h + wz[1] * x);
        let r = sig(wr[0] * h + wr[1] * x);
        let ht = (wh[0] * (r * h) + wh[1] * x).tanh();
        (1.0 - z) * h + z * ht
    }

    #[test]
    fn seeded_weights_match_hand_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let cell = GruCell::new(&mut s, &mut rng, "g", 1, 1).unwrap();
        let [z, r, h] = cell.weights();
        let w = |id| [s.value(id)[0], s.value(id)[1]];
        let expected = hand_gru(w(z), w(r), w(h), 0.1, 0.2);
        let got = cell.forward(&s, &[0.1], &[0.2]).unwrap()[0];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (s, cell) = zero_cell(2, 3);
        assert!(cell.forward(&s, &[0.0; 2], &[0.0; 2]).is_err());
        assert!(cell.forward(&s, &[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn gates_in_open_interval_and_state_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = ParamStore::new();
        let cell = GruCell::new(&mut s, &mut rng, "g", 4, 3).unwrap();
        for _ in 0..200 {
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (out, cache) = cell.forward_cached(&s, &h, &x).unwrap();
            for i in 0..4 {
                assert!(cache.z[i] > 0.0 && cache.z[i] < 1.0);
                assert!(cache.r[i] > 0.0 && cache.r[i] < 1.0);
                assert!(out[i].abs() <= h[i].abs().max(1.0) + 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let mut s = ParamStore::new();
            let cell = GruCell::new(&mut s, &mut rng, "g", 3, 2).unwrap();
            let h: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = random_direction(&mut rng, 3);
            let hx: Vec<f64> = h.iter().chain(&x).copied().collect();
            let err = grad_check_store(
                &mut s,
                &hx,
                1e-6,
                |s, v| Ok(dot(&cell.forward(s, &v[..3], &v[3..])?, &c)),
                |s, v| {
                    let (_, cache) = cell.forward_cached(s, &v[..3], &v[3..])?;
                    let (dh, dx) = cell.backward(s, &cache, &c);
                    Ok(dh.into_iter().chain(dx).collect())
                },
            )
            .unwrap();
            assert!(err < 1e-4, "gru grad err {err}");
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut s = ParamStore::new();
        let cell = GruCell::new(&mut s, &mut rng, "g", 3, 2).unwrap();
        let xs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = random_direction(&mut rng, 3);
        let err = grad_check_store(
            &mut s,
            &xs,
            1e-6,
            |s, v| {
                let steps: Vec<&[f64]> = v.chunks(2).collect();
                Ok(dot(&cell.fold(s, &[0.0; 3], &steps)?.0, &c))
            },
            |s, v| {
                let steps: Vec<&[f64]> = v.chunks(2).collect();
                let (_, caches) = cell.fold(s, &[0.0; 3], &steps)?;
                let (_, dxs) = cell.backward_fold(s, &caches, &c);
                Ok(dxs.concat())
            },
        )
        .unwrap();
        assert!(err < 1e-4, "bptt grad err {err}");
    }
}
