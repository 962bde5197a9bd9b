//! Building blocks shared by the generators and discriminators.

use crate::autodiff::layers::{Activation, BatchNorm2d, Conv2d, ConvBnAct, Deconv2d, Dense};
use crate::autodiff::{Graph, Mode, ParamStore, Var};
use crate::error::{Error, Result};

use super::spec::ModelSpec;

/// How a U-Net stage is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStyle {
    /// One 4×4 stride-2 (de)convolution with batch norm and activation.
    Plain,
    /// Two (de)convolutions around a [`ResidualBlock`]; the first conv of an
    /// encoder block and the second deconv of a decoder block carry the stride.
    Residual,
}

fn conv_bn(
    store: &mut ParamStore,
    seed: u64,
    name: &str,
    (cin, cout): (usize, usize),
    (k, s, p): (usize, usize, usize),
    act: Option<Activation>,
) -> Result<ConvBnAct> {
    let conv = Conv2d::unbiased(store, seed, &format!("{name}.conv"), (cin, cout), (k, s, p))?;
    let bn = BatchNorm2d::new(store, &format!("{name}.bn"), cout)?;
    Ok(ConvBnAct::conv(conv, bn, act))
}

fn deconv_bn(
    store: &mut ParamStore,
    seed: u64,
    name: &str,
    (cin, cout): (usize, usize),
    (k, s, p): (usize, usize, usize),
    act: Option<Activation>,
) -> Result<ConvBnAct> {
    let conv = Deconv2d::unbiased(store, seed, &format!("{name}.deconv"), (cin, cout), (k, s, p))?;
    let bn = BatchNorm2d::new(store, &format!("{name}.bn"), cout)?;
    Ok(ConvBnAct::deconv(conv, bn, act))
}

/// Three 3×3 convolutions, the middle one at half width, plus the input.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    layers: [ConvBnAct; 3],
}

impl ResidualBlock {
    pub fn new(store: &mut ParamStore, seed: u64, name: &str, width: usize) -> Result<Self> {
        let half = (width / 2).max(1);
        let lrelu = Some(Activation::LeakyRelu);
        Ok(Self {
            layers: [
                conv_bn(store, seed, &format!("{name}.0"), (width, width), (3, 1, 1), lrelu)?,
                conv_bn(store, seed, &format!("{name}.1"), (width, half), (3, 1, 1), lrelu)?,
                conv_bn(store, seed, &format!("{name}.2"), (half, width), (3, 1, 1), None)?,
            ],
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let mut y = x;
        for l in &self.layers {
            y = l.forward(g, store, y, mode)?;
        }
        g.add(x, y)
    }

    pub fn zero(&self, store: &mut ParamStore) {
        for l in &self.layers {
            l.zero_conv(store);
        }
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Stage {
    Plain(ConvBnAct),
    Residual {
        first: ConvBnAct,
        res: ResidualBlock,
        second: ConvBnAct,
    },
}

impl Stage {
    pub fn down(store: &mut ParamStore, seed: u64, name: &str, style: BlockStyle, cin: usize, cout: usize) -> Result<Self> {
        let lrelu = Some(Activation::LeakyRelu);
        Ok(match style {
            BlockStyle::Plain => Stage::Plain(conv_bn(store, seed, name, (cin, cout), (4, 2, 1), lrelu)?),
            BlockStyle::Residual => Stage::Residual {
                first: conv_bn(store, seed, &format!("{name}.a"), (cin, cout), (4, 2, 1), lrelu)?,
                res: ResidualBlock::new(store, seed, &format!("{name}.res"), cout)?,
                second: conv_bn(store, seed, &format!("{name}.b"), (cout, cout), (3, 1, 1), lrelu)?,
            },
        })
    }

    pub fn up(store: &mut ParamStore, seed: u64, name: &str, style: BlockStyle, cin: usize, cout: usize) -> Result<Self> {
        Ok(match style {
            BlockStyle::Plain => Stage::Plain(deconv_bn(store, seed, name, (cin, cout), (4, 2, 1), Some(Activation::Relu))?),
            BlockStyle::Residual => {
                let lrelu = Some(Activation::LeakyRelu);
                Stage::Residual {
                    first: deconv_bn(store, seed, &format!("{name}.a"), (cin, cout), (3, 1, 1), lrelu)?,
                    res: ResidualBlock::new(store, seed, &format!("{name}.res"), cout)?,
                    second: deconv_bn(store, seed, &format!("{name}.b"), (cout, cout), (4, 2, 1), lrelu)?,
                }
            }
        })
    }

    /// A 3×3 stride-1 convolution stage (discriminator tail).
    pub fn flat(store: &mut ParamStore, seed: u64, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(Stage::Plain(conv_bn(
            store,
            seed,
            name,
            (cin, cout),
            (3, 1, 1),
            Some(Activation::LeakyRelu),
        )?))
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        match self {
            Stage::Plain(l) => l.forward(g, store, x, mode),
            Stage::Residual { first, res, second } => {
                let y = first.forward(g, store, x, mode)?;
                let y = res.forward(g, store, y, mode)?;
                second.forward(g, store, y, mode)
            }
        }
    }
}

/// U-shaped network: `depth` downsampling stages, `depth` upsampling stages
/// with skip concatenation at equal scales, and a 3×3 convolution head.
#[derive(Debug, Clone)]
pub struct UNet {
    down: Vec<Stage>,
    up: Vec<Stage>,
    head: Conv2d,
    tanh: bool,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl UNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        name: &str,
        spec: &ModelSpec,
        style: BlockStyle,
        in_channels: usize,
        out_channels: usize,
        tanh: bool,
    ) -> Result<Self> {
        spec.validate()?;
        let d = spec.depth;
        let mut down = Vec::with_capacity(d);
        let mut cin = in_channels;
        for i in 0..d {
            down.push(Stage::down(store, seed, &format!("{name}.down{i}"), style, cin, spec.width(i))?);
            cin = spec.width(i);
        }
        let mut up = Vec::with_capacity(d);
        for t in 0..d {
            // Stage t lands on scale d−1−t; below full resolution it is
            // followed by the skip from encoder stage d−2−t.
            let cout = if t + 1 < d { spec.width(d - 2 - t) } else { spec.base_channels };
            up.push(Stage::up(store, seed, &format!("{name}.up{t}"), style, cin, cout)?);
            cin = if t + 1 < d { 2 * cout } else { cout };
        }
        let head = Conv2d::new(store, seed, &format!("{name}.head"), cin, out_channels, 3, 1, 1)?;
        Ok(Self {
            down,
            up,
            head,
            tanh,
            in_channels,
            out_channels,
        })
    }

    /// Raw network output, without any input shortcut.
    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let c = g.value(x).dims4()?.1;
        if c != self.in_channels {
            return Err(Error::Input(format!(
                "network expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let mut skips = Vec::with_capacity(self.down.len());
        let mut y = x;
        for s in &self.down {
            y = s.forward(g, store, y, mode)?;
            skips.push(y);
        }
        skips.pop();
        for s in &self.up {
            y = s.forward(g, store, y, mode)?;
            if let Some(skip) = skips.pop() {
                y = g.concat_channels(&[y, skip])?;
            }
        }
        let y = self.head.forward(g, store, y)?;
        Ok(if self.tanh { g.tanh(y) } else { y })
    }

    /// Zeroes the head so the network outputs exactly zero.
    pub fn zero_head(&self, store: &mut ParamStore) {
        self.head.zero(store);
    }
}

/// Convolutional classifier ending in dense + sigmoid, one probability per image.
#[derive(Debug, Clone)]
pub struct Discriminator {
    stages: Vec<Stage>,
    dense: Dense,
    pub in_channels: usize,
}

impl Discriminator {
    /// `depth` stride-2 stages followed by `extra` 3×3 stride-1 stages.
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        spec: &ModelSpec,
        style: BlockStyle,
        in_channels: usize,
        extra: usize,
    ) -> Result<Self> {
        spec.validate()?;
        let mut stages = Vec::new();
        let mut cin = in_channels;
        for i in 0..spec.depth {
            stages.push(Stage::down(store, seed, &format!("disc.down{i}"), style, cin, spec.width(i))?);
            cin = spec.width(i);
        }
        for i in 0..extra {
            stages.push(Stage::flat(store, seed, &format!("disc.flat{i}"), cin, cin)?);
        }
        let side = spec.image_size >> spec.depth;
        let dense = Dense::new(store, seed, "disc.fc", cin * side * side, 1)?;
        Ok(Self {
            stages,
            dense,
            in_channels,
        })
    }

    /// Convolutional layer count (the dense layer excluded).
    pub fn conv_layers(&self) -> usize {
        self.stages
            .iter()
            .map(|s| match s {
                Stage::Plain(_) => 1,
                Stage::Residual { .. } => 5,
            })
            .sum()
    }

    /// N×C×H×W → N×1 probabilities.
    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let c = g.value(x).dims4()?.1;
        if c != self.in_channels {
            return Err(Error::Input(format!(
                "discriminator expects {} channels, got {c}",
                self.in_channels
            )));
        }
        let mut y = x;
        for s in &self.stages {
            y = s.forward(g, store, y, mode)?;
        }
        let y = g.flatten(y)?;
        let y = self.dense.forward(g, store, y)?;
        Ok(g.sigmoid(y))
    }
}
