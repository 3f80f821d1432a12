//! Named parameter storage and binding onto a tape.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Ordered, uniquely named `f32` tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name:?}")));
        }
        self.by_name.insert(name.to_owned(), self.params.len());
        self.params.push(Param { name: name.to_owned(), tensor, trainable });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Records every parameter as a tape leaf. `f32` tapes borrow the stored
    /// values; other scalar types convert them.
    pub fn bind<'a, T: Scalar>(&'a self, tape: &mut Tape<'a, T>) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                tape.leaf_borrowed(p.tensor.shape(), T::from_f32_slice(p.tensor.data()), p.trainable)
                    .expect("stored tensors are shape-consistent")
            })
            .collect();
        Bound { vars }
    }

    /// Replaces values by name, checking shapes. Every stored parameter must
    /// be present in `values`.
    pub fn load_values(&mut self, values: &[(String, Tensor)]) -> Result<()> {
        let incoming: HashMap<&str, &Tensor> = values.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for p in &mut self.params {
            let t = incoming
                .get(p.name.as_str())
                .ok_or_else(|| Error::format("checkpoint", format!("missing parameter {:?}", p.name)))?;
            if t.shape() != p.tensor.shape() {
                return Err(Error::format(
                    "checkpoint",
                    format!("parameter {:?} has shape {:?}, expected {:?}", p.name, t.shape(), p.tensor.shape()),
                ));
            }
            p.tensor = (*t).clone();
        }
        Ok(())
    }
}

/// Tape variables for every parameter of a store, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a: stable across platforms and releases.
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Registers freshly initialized parameters under a name prefix.
///
/// Each tensor draws from its own stream seeded by `(seed, full name)`, so a
/// parameter's initial value does not depend on which other parameters a
/// model creates.
pub struct ParamBuilder<'s> {
    store: &'s mut ParamStore,
    seed: u64,
    prefix: String,
}

impl<'s> ParamBuilder<'s> {
    pub fn new(store: &'s mut ParamStore, seed: u64) -> Self {
        Self { store, seed, prefix: String::new() }
    }

    pub fn scoped<'b>(&'b mut self, scope: &str) -> ParamBuilder<'b> {
        let prefix = if self.prefix.is_empty() { scope.to_owned() } else { format!("{}.{scope}", self.prefix) };
        ParamBuilder { store: self.store, seed: self.seed, prefix }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_owned()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    /// uniform(−1/√fan_in, 1/√fan_in)
    pub fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let full = self.full_name(name);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ name_hash(&full));
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.store.insert(&full, Tensor::new(shape.to_vec(), data)?, true)
    }

    pub fn tensor(&mut self, name: &str, tensor: Tensor, trainable: bool) -> Result<ParamId> {
        let full = self.full_name(name);
        self.store.insert(&full, tensor, trainable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_order_independent_and_bounded() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        let wa = ParamBuilder::new(&mut a, 7).scoped("x").uniform("w", &[4, 3], 4).unwrap();
        let mut bb = ParamBuilder::new(&mut b, 7);
        bb.uniform("other", &[2], 2).unwrap();
        let wb = bb.scoped("x").uniform("w", &[4, 3], 4).unwrap();
        assert_eq!(a.get(wa).tensor, b.get(wb).tensor);
        assert_eq!(a.get(wa).name, "x.w");
        assert!(a.get(wa).tensor.data().iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(&[1]), true).unwrap();
        assert!(s.insert("w", Tensor::zeros(&[1]), true).is_err());
    }

    #[test]
    fn bind_borrows_for_f32_and_converts_for_f64() {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::vector(vec![1.5, 2.0]), true).unwrap();
        let frozen = s.insert("e", Tensor::vector(vec![1.0]), false).unwrap();
        let mut tape = Tape::<f32>::new();
        let bound = s.bind(&mut tape);
        assert_eq!(tape.data(bound.var(id)), &[1.5, 2.0]);
        assert!(!tape.requires_grad(bound.var(frozen)));
        let mut tape64 = Tape::<f64>::new();
        let bound = s.bind(&mut tape64);
        assert_eq!(tape64.data(bound.var(id)), &[1.5f64, 2.0]);
    }
}
