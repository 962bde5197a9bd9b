//! Parameterized layers. Each owns ids into a [`ParamStore`] and records its
//! forward pass on a [`Graph`].

use super::conv::ConvGeom;
use super::graph::{Graph, Mode, Var};
use super::params::{he_normal, ParamId, ParamStore};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::RealTensor;

pub const LRELU_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

fn init(store: &mut ParamStore, seed: u64, name: &str, shape: &[usize], fan_in: f64) -> Result<ParamId> {
    let value = he_normal(shape, fan_in, &mut Rng::derive(seed, name));
    store.add(name, value, true)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    /// Absent when a batch norm follows and would cancel it.
    pub bias: Option<ParamId>,
    pub geom: ConvGeom,
}

/// Kernel extent, stride and padding of a (transposed) convolution.
pub type KernelGeom = (usize, usize, usize);

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        Self::build(store, seed, name, (cin, cout), (kernel, stride, pad), true)
    }

    /// As [`Conv2d::new`] without a bias term.
    pub fn unbiased(
        store: &mut ParamStore,
        seed: u64,
        name: &str,
        (cin, cout): (usize, usize),
        geom: KernelGeom,
    ) -> Result<Self> {
        Self::build(store, seed, name, (cin, cout), geom, false)
    }

    fn build(
        store: &mut ParamStore,
        seed: u64,
        name: &str,
        (cin, cout): (usize, usize),
        (kernel, stride, pad): KernelGeom,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = (cin * kernel * kernel) as f64;
        let weight = init(store, seed, &format!("{name}.w"), &[cout, cin, kernel, kernel], fan_in)?;
        let bias = if bias {
            Some(store.add(&format!("{name}.b"), RealTensor::zeros(&[cout]), true)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            geom: ConvGeom::new(stride, pad),
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, w, b, self.geom)
    }

    pub fn zero(&self, store: &mut ParamStore) {
        zero_param(store, self.weight);
        if let Some(b) = self.bias {
            zero_param(store, b);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Deconv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: ConvGeom,
}

impl Deconv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        Self::build(store, seed, name, (cin, cout), (kernel, stride, pad), true)
    }

    pub fn unbiased(
        store: &mut ParamStore,
        seed: u64,
        name: &str,
        (cin, cout): (usize, usize),
        geom: KernelGeom,
    ) -> Result<Self> {
        Self::build(store, seed, name, (cin, cout), geom, false)
    }

    fn build(
        store: &mut ParamStore,
        seed: u64,
        name: &str,
        (cin, cout): (usize, usize),
        (kernel, stride, pad): KernelGeom,
        bias: bool,
    ) -> Result<Self> {
        // Each output pixel sees about cin·k²/s² taps.
        let fan_in = (cin * kernel * kernel) as f64 / (stride * stride) as f64;
        let weight = init(store, seed, &format!("{name}.w"), &[cin, cout, kernel, kernel], fan_in)?;
        let bias = if bias {
            Some(store.add(&format!("{name}.b"), RealTensor::zeros(&[cout]), true)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            geom: ConvGeom::new(stride, pad),
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.deconv2d(x, w, b, self.geom)
    }

    pub fn zero(&self, store: &mut ParamStore) {
        zero_param(store, self.weight);
        if let Some(b) = self.bias {
            zero_param(store, b);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub scale: ParamId,
    pub shift: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            scale: store.add(&format!("{name}.scale"), RealTensor::full(&[channels], 1.0), true)?,
            shift: store.add(&format!("{name}.shift"), RealTensor::zeros(&[channels]), true)?,
            running_mean: store.add(
                &format!("{name}.running_mean"),
                RealTensor::zeros(&[channels]),
                false,
            )?,
            running_var: store.add(
                &format!("{name}.running_var"),
                RealTensor::full(&[channels], 1.0),
                false,
            )?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let gamma = g.param(store, self.scale);
        let beta = g.param(store, self.shift);
        let mut rm = store.value(self.running_mean).clone();
        let mut rv = store.value(self.running_var).clone();
        let y = g.batchnorm2d(x, gamma, beta, &mut rm, &mut rv, mode, BN_MOMENTUM, BN_EPS)?;
        if mode == Mode::Train {
            store.set_value(self.running_mean, rm)?;
            store.set_value(self.running_var, rv)?;
        }
        Ok(y)
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, seed: u64, name: &str, fin: usize, fout: usize) -> Result<Self> {
        let weight = init(store, seed, &format!("{name}.w"), &[fin, fout], fin as f64)?;
        let bias = store.add(&format!("{name}.b"), RealTensor::zeros(&[fout]), true)?;
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.dense(x, w, b)
    }
}

pub(crate) fn zero_param(store: &mut ParamStore, id: ParamId) {
    let shape = store.value(id).shape().to_vec();
    store
        .set_value(id, RealTensor::zeros(&shape))
        .expect("same shape");
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Relu,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::LeakyRelu => g.leaky_relu(x, LRELU_SLOPE),
            Activation::Relu => g.relu(x),
        }
    }
}

/// Convolution (or transposed convolution), batch norm, activation.
#[derive(Debug, Clone)]
pub struct ConvBnAct {
    conv: ConvKind,
    bn: BatchNorm2d,
    act: Option<Activation>,
}

#[derive(Debug, Clone)]
enum ConvKind {
    Forward(Conv2d),
    Transposed(Deconv2d),
}

impl ConvBnAct {
    pub fn conv(conv: Conv2d, bn: BatchNorm2d, act: Option<Activation>) -> Self {
        Self {
            conv: ConvKind::Forward(conv),
            bn,
            act,
        }
    }

    pub fn deconv(conv: Deconv2d, bn: BatchNorm2d, act: Option<Activation>) -> Self {
        Self {
            conv: ConvKind::Transposed(conv),
            bn,
            act,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let y = match &self.conv {
            ConvKind::Forward(c) => c.forward(g, store, x)?,
            ConvKind::Transposed(c) => c.forward(g, store, x)?,
        };
        let y = self.bn.forward(g, store, y, mode)?;
        Ok(match self.act {
            Some(a) => a.apply(g, y),
            None => y,
        })
    }

    /// Zeroes the convolution so the block emits the batch-norm shift.
    pub fn zero_conv(&self, store: &mut ParamStore) {
        match &self.conv {
            ConvKind::Forward(c) => c.zero(store),
            ConvKind::Transposed(c) => c.zero(store),
        }
    }
}
