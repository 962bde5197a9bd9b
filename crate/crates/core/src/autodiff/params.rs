use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::io::AnyTensor;
use crate::tensor::RealTensor;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param {
    /// Hierarchical dotted path, e.g. `gen.enc1.conv.w`.
    pub name: String,
    pub value: RealTensor,
    pub grad: RealTensor,
    /// Buffers such as batch-norm running statistics are not trainable.
    pub trainable: bool,
}

/// Owns one model's parameters and buffers.
///
/// Graph leaves created from a store remember its id; backpropagation only
/// writes gradients into the store it is handed, so two stores never see
/// each other's updates.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
            index: self.index.clone(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub fn add(&mut self, name: &str, value: RealTensor, trainable: bool) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Spec(format!("duplicate parameter name {name}")));
        }
        let grad = RealTensor::zeros(value.shape());
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
            trainable,
        });
        let id = self.params.len() - 1;
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &RealTensor {
        &self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: RealTensor) -> Result<()> {
        let p = &mut self.params[id.0];
        p.value.same_shape(&value)?;
        p.value = value;
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = RealTensor::zeros(p.value.shape());
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &RealTensor) {
        let p = &mut self.params[id.0];
        for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
    }

    /// Every parameter and buffer as `(prefix + name, tensor)` pairs.
    pub fn export(&self, prefix: &str) -> Vec<(String, AnyTensor)> {
        self.params
            .iter()
            .map(|p| (format!("{prefix}{}", p.name), AnyTensor::Real(p.value.clone())))
            .collect()
    }

    /// Restores values from `export` output; every parameter must be present.
    pub fn import(&mut self, prefix: &str, entries: &BTreeMap<String, AnyTensor>) -> Result<()> {
        for p in &mut self.params {
            let key = format!("{prefix}{}", p.name);
            match entries.get(&key) {
                Some(AnyTensor::Real(t)) => {
                    p.value.same_shape(t)?;
                    p.value = t.clone();
                }
                Some(AnyTensor::Complex(_)) => {
                    return Err(Error::Format(format!("{key} stored as complex")))
                }
                None => return Err(Error::Format(format!("checkpoint lacks {key}"))),
            }
        }
        Ok(())
    }
}

/// He-style fan-in scaled normal initialization.
pub fn he_normal(shape: &[usize], fan_in: f64, rng: &mut Rng) -> RealTensor {
    let std = (2.0 / fan_in).sqrt();
    RealTensor::from_fn(shape, |_| rng.normal() * std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.add("a.w", RealTensor::zeros(&[2]), true).unwrap();
        assert!(s.add("a.w", RealTensor::zeros(&[2]), true).is_err());
        assert_eq!(s.lookup("a.w"), Some(ParamId(0)));
    }

    #[test]
    fn export_import_roundtrip() {
        let mut s = ParamStore::new();
        let id = s.add("w", RealTensor::from_fn(&[3], |i| i as f64), true).unwrap();
        let exported: BTreeMap<_, _> = s.export("gen.").into_iter().collect();
        s.set_value(id, RealTensor::zeros(&[3])).unwrap();
        s.import("gen.", &exported).unwrap();
        assert_eq!(s.value(id).data(), &[0.0, 1.0, 2.0]);
        assert!(s.import("disc.", &exported).is_err());
    }

    #[test]
    fn he_init_is_seeded() {
        let a = he_normal(&[4, 4], 16.0, &mut Rng::derive(3, "x"));
        let b = he_normal(&[4, 4], 16.0, &mut Rng::derive(3, "x"));
        assert_eq!(a, b);
    }
}
