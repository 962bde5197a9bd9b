use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::io::AnyTensor;
use crate::tensor::RealTensor;

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based), in place.
pub fn adam_step(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, hp: &AdamParams) -> Result<()> {
    let n = param.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(Error::shape(format!(
            "adam: param {n}, grad {}, moments {}/{}",
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    if t == 0 {
        return Err(Error::param("adam steps are counted from 1"));
    }
    let t = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..n {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    Ok(())
}

/// Adam state for every trainable parameter of one store.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub hp: AdamParams,
    /// Updates applied so far.
    pub t: u64,
    slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    id: ParamId,
    name: String,
    m: RealTensor,
    v: RealTensor,
}

impl Adam {
    pub fn new(store: &ParamStore, hp: AdamParams) -> Self {
        let slots = store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(id, p)| Slot {
                id,
                name: p.name.clone(),
                m: RealTensor::zeros(p.value.shape()),
                v: RealTensor::zeros(p.value.shape()),
            })
            .collect();
        Self { hp, t: 0, slots }
    }

    /// Applies the gradients currently held by `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.t += 1;
        for s in &mut self.slots {
            let p = store.get_mut(s.id);
            if p.name != s.name {
                return Err(Error::Contract(format!("optimizer slot {} bound to {}", s.name, p.name)));
            }
            let grad = p.grad.clone();
            adam_step(p.value.data_mut(), grad.data(), s.m.data_mut(), s.v.data_mut(), self.t, &self.hp)?;
        }
        Ok(())
    }

    /// `(parameter name, first moment, second moment)` per slot.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &RealTensor, &RealTensor)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.m, &s.v))
    }

    pub fn export(&self, prefix: &str) -> Vec<(String, AnyTensor)> {
        let mut out = vec![(format!("{prefix}t"), AnyTensor::Real(RealTensor::scalar(self.t as f64)))];
        for s in &self.slots {
            out.push((format!("{prefix}m/{}", s.name), AnyTensor::Real(s.m.clone())));
            out.push((format!("{prefix}v/{}", s.name), AnyTensor::Real(s.v.clone())));
        }
        out
    }

    pub fn import(&mut self, prefix: &str, entries: &BTreeMap<String, AnyTensor>) -> Result<()> {
        let get = |key: String| match entries.get(&key) {
            Some(AnyTensor::Real(t)) => Ok(t.clone()),
            _ => Err(Error::Format(format!("checkpoint lacks {key}"))),
        };
        self.t = scalar_count(&get(format!("{prefix}t"))?)?;
        for s in &mut self.slots {
            let m = get(format!("{prefix}m/{}", s.name))?;
            let v = get(format!("{prefix}v/{}", s.name))?;
            s.m.same_shape(&m)?;
            s.v.same_shape(&v)?;
            s.m = m;
            s.v = v;
        }
        Ok(())
    }
}

/// Reads a non-negative integer stored as a one-element tensor.
pub(crate) fn scalar_count(t: &RealTensor) -> Result<u64> {
    match t.data() {
        [v] if *v >= 0.0 && v.fract() == 0.0 && *v < 2f64.powi(53) => Ok(*v as u64),
        _ => Err(Error::Format(format!("expected a count, got {:?}", t.data()))),
    }
}
