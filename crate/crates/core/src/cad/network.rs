//! Flow generator and patch discriminator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Activation, Initializer, ParamSet, Tape, Tensor, Var};

const KERNEL: usize = 5;
const PAD: usize = 2;
const LEAK: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Number of stride-2 reduction blocks.
    pub depth: usize,
    /// Feature width of the first block; doubles per level.
    pub base_width: usize,
    /// Output flow is `max_flow · tanh(·)`, in pixels.
    pub max_flow: f64,
    /// Add encoder features to the decoder at matching resolution.
    pub skip: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            depth: 3,
            base_width: 32,
            max_flow: 8.0,
            skip: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub blocks: usize,
    pub base_width: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            blocks: 4,
            base_width: 16,
        }
    }
}

#[derive(Clone, Debug)]
struct Conv {
    kernel: usize,
    bias: usize,
}

fn add_conv(set: &mut ParamSet, init: &mut Initializer, name: &str, out: usize, inp: usize) -> Conv {
    let kernel = set.len();
    set.push(format!("{name}.weight"), init.conv_kernel(out, inp, KERNEL));
    set.push(format!("{name}.bias"), Tensor::zeros([out]));
    Conv { kernel, bias: kernel + 1 }
}

fn conv(tape: &mut Tape, set: &ParamSet, c: &Conv, x: Var, stride: usize) -> Result<Var> {
    let k = set.var(tape, c.kernel);
    let b = set.var(tape, c.bias);
    let y = tape.conv2d(x, k, stride, PAD)?;
    tape.add_bias(y, b)
}

fn leaky(tape: &mut Tape, x: Var) -> Var {
    tape.activation(x, Activation::LeakyRelu(LEAK))
}

/// Encoder–decoder that maps one frame to a 2-channel flow field.
#[derive(Clone, Debug)]
pub struct FlowGenerator {
    cfg: GeneratorConfig,
    encoder: Vec<Conv>,
    bottleneck: Conv,
    decoder: Vec<Conv>,
    head: Conv,
}

impl FlowGenerator {
    /// Builds the layers into `set`. The flow head starts at zero so an
    /// untrained generator predicts zero flow.
    pub fn build(
        cfg: &GeneratorConfig,
        channels: usize,
        set: &mut ParamSet,
        init: &mut Initializer,
    ) -> Result<Self> {
        if cfg.depth == 0 || cfg.base_width == 0 {
            return Err(Error::Config("generator depth and width must be positive".into()));
        }
        if !(cfg.max_flow > 0.0 && cfg.max_flow.is_finite()) {
            return Err(Error::Config(format!("max_flow must be positive, got {}", cfg.max_flow)));
        }
        let width = |level: usize| cfg.base_width << level;
        let mut encoder = Vec::with_capacity(cfg.depth);
        let mut inp = channels;
        for level in 0..cfg.depth {
            encoder.push(add_conv(set, init, &format!("enc{level}"), width(level), inp));
            inp = width(level);
        }
        let bottleneck = add_conv(set, init, "mid", inp, inp);
        let mut decoder = Vec::with_capacity(cfg.depth);
        for level in (0..cfg.depth).rev() {
            let out = if level == 0 { cfg.base_width } else { width(level - 1) };
            decoder.push(add_conv(set, init, &format!("dec{level}"), out, inp));
            inp = out;
        }
        let head = add_conv(set, init, "head", 2, inp);
        set.tensors_mut()[head.kernel].data_mut().fill(0.0);
        Ok(FlowGenerator {
            cfg: cfg.clone(),
            encoder,
            bottleneck,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn check_extent(&self, h: usize, w: usize) -> Result<()> {
        let m = 1usize << self.cfg.depth;
        if h % m != 0 || w % m != 0 {
            return Err(Error::Config(format!(
                "frame {h}x{w} is not divisible by {m} (generator depth {})",
                self.cfg.depth
            )));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, set: &ParamSet, frame: Var) -> Result<Var> {
        let shape = tape.shape(frame).to_vec();
        if shape.len() != 4 {
            return Err(Error::dim(format!("generator expects [N, C, H, W], got {shape:?}")));
        }
        self.check_extent(shape[2], shape[3])?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut x = frame;
        for layer in &self.encoder {
            let y = conv(tape, set, layer, x, 2)?;
            x = leaky(tape, y);
            skips.push(x);
        }
        let y = conv(tape, set, &self.bottleneck, x, 1)?;
        x = leaky(tape, y);
        // skips[i] sits at the resolution the decoder reaches after level i+1.
        skips.pop();
        for layer in &self.decoder {
            let up = tape.upsample2x(x)?;
            let y = conv(tape, set, layer, up, 1)?;
            x = leaky(tape, y);
            if self.cfg.skip {
                if let Some(s) = skips.pop() {
                    x = tape.add(x, s)?;
                }
            }
        }
        let y = conv(tape, set, &self.head, x, 1)?;
        let t = tape.activation(y, Activation::Tanh);
        Ok(tape.scale(t, self.cfg.max_flow))
    }
}

/// Stack of stride-2 convolutions ending in a per-patch probability map.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    blocks: Vec<Conv>,
    head: Conv,
}

impl PatchDiscriminator {
    pub fn build(
        cfg: &DiscriminatorConfig,
        channels: usize,
        set: &mut ParamSet,
        init: &mut Initializer,
    ) -> Result<Self> {
        if cfg.blocks == 0 || cfg.base_width == 0 {
            return Err(Error::Config("discriminator blocks and width must be positive".into()));
        }
        let mut inp = channels;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for i in 0..cfg.blocks {
            let out = cfg.base_width << i;
            blocks.push(add_conv(set, init, &format!("block{i}"), out, inp));
            inp = out;
        }
        let head = add_conv(set, init, "head", 1, inp);
        Ok(PatchDiscriminator { blocks, head })
    }

    pub fn forward(&self, tape: &mut Tape, set: &ParamSet, frame: Var) -> Result<Var> {
        let mut x = frame;
        for layer in &self.blocks {
            let y = conv(tape, set, layer, x, 2)?;
            x = leaky(tape, y);
        }
        let y = conv(tape, set, &self.head, x, 1)?;
        Ok(tape.activation(y, Activation::Sigmoid))
    }
}
