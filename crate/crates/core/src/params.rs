//! Named parameter collections and their binding into a graph.

use autodiff::{Graph, Real, Tensor, Var};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VocoderError};

/// Ordered map of named trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        ModelParams {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(VocoderError::Config(format!("duplicate parameter name {name}")));
        }
        self.tensors.insert(name, tensor.with_requires_grad(true));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast::<U>()))
                .collect(),
        }
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.zero_grad();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Adds every parameter to `g` as a leaf. Frozen bindings take part in
    /// the forward pass but receive no gradient.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable == t.requires_grad() {
                    g.leaf(t)
                } else {
                    g.leaf(&t.clone().with_requires_grad(trainable))
                };
                (name.clone(), v)
            })
            .collect();
        Bound { vars, trainable }
    }

    /// Moves gradients from a backward pass into the parameter buffers
    /// (accumulating). Trainable parameters backward never reached get an
    /// explicit zero gradient.
    pub fn absorb_grads(&mut self, g: &Graph<T>, bound: &Bound) -> Result<()> {
        if !bound.trainable {
            return Ok(());
        }
        for (name, t) in self.tensors.iter_mut() {
            let v = bound.get(name)?;
            match g.grad(v) {
                Some(grad) => t.accumulate_grad(grad)?,
                None => t.accumulate_grad(&vec![T::zero(); t.numel()])?,
            }
        }
        Ok(())
    }
}

/// Graph handles of a bound [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: IndexMap<String, Var>,
    trainable: bool,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| VocoderError::layer(name, "parameter missing from model"))
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Routes parameter `name` through `var` instead of its bound leaf.
    pub fn substitute(&mut self, name: &str, var: Var) -> Result<()> {
        let slot = self
            .vars
            .get_mut(name)
            .ok_or_else(|| VocoderError::layer(name, "parameter missing from model"))?;
        *slot = var;
        Ok(())
    }
}

/// Seeded uniform initializer with bounds `±sqrt(1 / fan_in)`.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn uniform<T: Real>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        Tensor::<f64>::uniform(shape.to_vec(), bound, &mut self.rng).cast::<T>()
    }

    /// Weight `[cout, cin / groups, k]` plus bias `[cout]`.
    pub fn conv1d<T: Real>(
        &mut self,
        params: &mut ModelParams<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        groups: usize,
    ) -> Result<()> {
        if groups == 0 || cin % groups != 0 || cout % groups != 0 {
            return Err(VocoderError::layer(
                name,
                format!("channels {cin}->{cout} not divisible by {groups} groups"),
            ));
        }
        let fan_in = cin / groups * k;
        params.insert(format!("{name}.weight"), self.uniform(&[cout, cin / groups, k], fan_in))?;
        params.insert(format!("{name}.bias"), self.uniform(&[cout], fan_in))
    }

    /// Weight `[cin, cout, k]` plus bias `[cout]`.
    pub fn conv_transpose1d<T: Real>(
        &mut self,
        params: &mut ModelParams<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
    ) -> Result<()> {
        let fan_in = cout * k;
        params.insert(format!("{name}.weight"), self.uniform(&[cin, cout, k], fan_in))?;
        params.insert(format!("{name}.bias"), self.uniform(&[cout], fan_in))
    }

    /// Weight `[cout, cin, k, k]` plus bias `[cout]`.
    pub fn conv2d<T: Real>(
        &mut self,
        params: &mut ModelParams<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
    ) -> Result<()> {
        let fan_in = cin * k * k;
        params.insert(format!("{name}.weight"), self.uniform(&[cout, cin, k, k], fan_in))?;
        params.insert(format!("{name}.bias"), self.uniform(&[cout], fan_in))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_and_duplicates() {
        let mut p = ModelParams::<f64>::new();
        p.insert("b", Tensor::zeros([2])).unwrap();
        p.insert("a", Tensor::zeros([3])).unwrap();
        assert_eq!(p.names().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(p.num_elements(), 5);
        assert!(p.insert("a", Tensor::zeros([1])).is_err());
        assert!(p.iter().all(|(_, t)| t.requires_grad()));
    }

    #[test]
    fn bind_and_absorb() {
        let mut p = ModelParams::<f64>::new();
        p.insert("w", Tensor::new([2], vec![1.0, 2.0]).unwrap()).unwrap();
        p.insert("unused", Tensor::zeros([1])).unwrap();
        let mut g = Graph::new();
        let b = p.bind(&mut g, true);
        let w = b.get("w").unwrap();
        let sq = g.square(w).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss).unwrap();
        p.absorb_grads(&g, &b).unwrap();
        assert_eq!(p.get("w").unwrap().grad().unwrap(), &[2.0, 4.0]);
        assert_eq!(p.get("unused").unwrap().grad().unwrap(), &[0.0]);

        let mut g = Graph::new();
        let frozen = p.bind(&mut g, false);
        let w = frozen.get("w").unwrap();
        assert!(!g.requires_grad(w));
        assert!(frozen.get("nope").is_err());
    }

    #[test]
    fn initializer_is_seeded_and_bounded() {
        let make = || {
            let mut p = ModelParams::<f32>::new();
            Initializer::new(3).conv1d(&mut p, "c", 4, 8, 3, 2).unwrap();
            p
        };
        let (a, b) = (make(), make());
        assert_eq!(a, b);
        let bound = (1.0f32 / 6.0).sqrt();
        assert!(a.get("c.weight").unwrap().data().iter().all(|v| v.abs() <= bound));
        assert_eq!(a.get("c.weight").unwrap().shape(), &[8, 2, 3]);
    }
}
