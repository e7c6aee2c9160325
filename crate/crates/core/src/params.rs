//! Central parameter storage with paired gradients, plus the optimizer.
//!
//! Every learnable tensor lives here under a stable path-like name, in
//! declaration order. Layers hold `ParamId` handles, which is what makes
//! weight sharing literal: the Siamese downsampling stacks reference the
//! same ids, so one update moves both paths.

use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    grads: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>) -> ParamId {
        debug_assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        let shape = (value.nrows(), value.ncols());
        self.values.push(value);
        self.grads.push(Array2::zeros(shape));
        id
    }

    /// Fan-in scaled uniform init for a `rows x cols` weight.
    pub fn add_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = gain / (rows as f64).sqrt();
        let w = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound));
        self.add(name, w)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, Array2::zeros((rows, cols)))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.grads[id.0]
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total scalar count across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Name -> shape listing in declaration order, for audits and checkpoints.
    pub fn manifest(&self) -> Vec<(String, (usize, usize))> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| (n.clone(), (v.nrows(), v.ncols())))
            .collect()
    }

    pub fn snapshot(&self) -> Vec<Array2<f64>> {
        self.values.clone()
    }

    pub fn restore(&mut self, snap: &[Array2<f64>]) -> Result<()> {
        if snap.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "snapshot has {} tensors, store has {}",
                snap.len(),
                self.values.len()
            )));
        }
        for (v, s) in self.values.iter_mut().zip(snap) {
            if v.dim() != s.dim() {
                return Err(Error::ShapeMismatch("snapshot tensor shape differs".into()));
            }
            v.assign(s);
        }
        Ok(())
    }

    pub fn check_grads_finite(&self) -> Result<()> {
        for (n, g) in self.names.iter().zip(&self.grads) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in {n}")));
            }
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let m = store.ids().map(|id| Array2::zeros(store.value(id).dim())).collect();
        let v = store.ids().map(|id| Array2::zeros(store.value(id).dim())).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m, v, t: 0 }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let g = store.grad(id).clone();
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            m.zip_mut_with(&g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(&g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let w = store.value_mut(id);
            ndarray::Zip::from(w).and(&*m).and(&*v).for_each(|w, &m, &v| {
                let mh = m / bc1;
                let vh = v / bc2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            });
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let id = store.add_uniform("w", 4, 3, 1.0, &mut rng);
        let before = store.value(id).clone();
        let mut opt = Adam::new(&store, 0.0);
        store.grad_mut(id).fill(1.0);
        for _ in 0..5 {
            opt.step(&mut store);
        }
        assert_eq!(store.value(id), &before);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("x", Array2::from_elem((1, 1), 5.0));
        let mut opt = Adam::new(&store, 0.1);
        for _ in 0..500 {
            let x = store.value(id)[(0, 0)];
            store.grad_mut(id)[(0, 0)] = 2.0 * x;
            opt.step(&mut store);
            store.zero_grads();
        }
        assert!(store.value(id)[(0, 0)].abs() < 1e-2);
    }
}
