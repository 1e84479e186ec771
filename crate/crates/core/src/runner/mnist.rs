//! Fully connected autoencoder used as the scorer in the MNIST experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::idx;
use crate::tensor::{
    Activation, Initializer, OptimizerKind, OptimizerState, ParamSet, Tape, Tensor, Var,
};

use super::scorer::{Forward, Scorer};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    /// Hidden layer widths between the 784-wide input and output.
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            hidden: vec![256, 64, 256],
            lr: 1e-4,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MnistAutoencoder {
    params: ParamSet,
    opt: OptimizerState,
}

/// Recorded forward pass of the autoencoder.
pub struct AePass {
    tape: Tape,
    loss: Var,
    output: Var,
}

impl AePass {
    pub fn reconstruction(&self) -> Tensor {
        self.tape.to_tensor(self.output)
    }
}

impl MnistAutoencoder {
    pub fn new(cfg: &AutoencoderConfig) -> Result<Self> {
        if cfg.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        let mut init = Initializer::new(cfg.seed);
        let mut params = ParamSet::new(0);
        let mut widths = vec![IMAGE_PIXELS];
        widths.extend(&cfg.hidden);
        widths.push(IMAGE_PIXELS);
        for (i, w) in widths.windows(2).enumerate() {
            params.push(format!("fc{i}.weight"), init.dense_weight(w[0], w[1]));
            params.push(format!("fc{i}.bias"), Tensor::zeros([w[1]]));
        }
        let opt = OptimizerState::for_set(cfg.optimizer, cfg.lr, &params)?;
        Ok(MnistAutoencoder { params, opt })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Forward pass on one flattened image `[1, 784]` in `[-1, 1]`.
    pub fn pass(&self, image: &Tensor) -> Result<AePass> {
        if image.shape() != [1, IMAGE_PIXELS] {
            return Err(Error::dim(format!(
                "autoencoder expects [1, {IMAGE_PIXELS}], got {:?}",
                image.shape()
            )));
        }
        let mut tape = Tape::new();
        let input = tape.constant(image);
        let layers = self.params.len() / 2;
        let mut x = input;
        for l in 0..layers {
            let w = self.params.var(&mut tape, 2 * l);
            let b = self.params.var(&mut tape, 2 * l + 1);
            let y = tape.dense(x, w, b)?;
            let act = if l + 1 == layers {
                Activation::Tanh
            } else {
                Activation::Relu
            };
            x = tape.activation(y, act);
        }
        let diff = tape.sub(x, input)?;
        let loss = tape.mean_square(diff);
        Ok(AePass {
            tape,
            loss,
            output: x,
        })
    }
}

impl Scorer for MnistAutoencoder {
    type Sample = Tensor;
    type State = AePass;

    fn forward(&self, sample: &Tensor) -> Result<Forward<AePass>> {
        let pass = self.pass(sample)?;
        Ok(Forward {
            loss: pass.tape.scalar(pass.loss),
            state: pass,
        })
    }

    fn train_from(&mut self, pass: Forward<AePass>) -> Result<()> {
        if !pass.loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {}", pass.loss)));
        }
        let grads = pass.state.tape.backward(pass.state.loss)?;
        if !grads.all_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        grads.store_into(&mut self.params);
        self.opt.step_set(&mut self.params)
    }
}

/// Training images and labels of the MNIST set.
pub struct MnistData {
    images: Tensor,
    labels: Vec<u8>,
}

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

impl MnistData {
    pub fn new(images: Tensor, labels: Vec<u8>) -> Result<Self> {
        let s = images.shape();
        if s.len() != 3 || s[1] != IMAGE_SIDE || s[2] != IMAGE_SIDE {
            return Err(Error::Input(format!("expected 28x28 images, got {s:?}")));
        }
        if s[0] != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                s[0],
                labels.len()
            )));
        }
        Ok(MnistData { images, labels })
    }

    /// Loads the training split from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let find = |name: &str| -> Result<PathBuf> {
            let p = dir.join(name);
            if p.is_file() {
                return Ok(p);
            }
            let alt = dir.join(name.replacen("-idx", ".idx", 1));
            if alt.is_file() {
                return Ok(alt);
            }
            Err(Error::Input(format!(
                "MNIST file {name} not found in {}",
                dir.display()
            )))
        };
        let images = idx::load_images(&find(TRAIN_IMAGES)?)?;
        let labels = idx::load_labels(&find(TRAIN_LABELS)?)?;
        Self::new(images, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Indices of all images showing `digit`, in file order.
    pub fn indices_of(&self, digit: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == digit).collect()
    }

    /// Image `i` flattened to `[1, 784]`.
    pub fn image(&self, i: usize) -> Tensor {
        let data = self.images.data()[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS].to_vec();
        Tensor::new([1, IMAGE_PIXELS], data).expect("fixed shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    fn small() -> AutoencoderConfig {
        AutoencoderConfig {
            hidden: vec![8, 4, 8],
            seed: 5,
            ..Default::default()
        }
    }

    fn digit(seed: u32) -> Tensor {
        Tensor::from_fn([1, IMAGE_PIXELS], |i| (((i as u32 * 31 + seed) % 17) as f32 / 8.0) - 1.0)
    }

    #[test]
    fn training_reduces_loss_and_score_is_pure() {
        let mut ae = MnistAutoencoder::new(&small()).unwrap();
        let x = digit(1);
        let before = ae.params().clone();
        let s0 = ae.score(&x).unwrap();
        assert_eq!(ae.params(), &before);
        let mut last = s0;
        for _ in 0..200 {
            last = ae.train_step(&x).unwrap();
        }
        assert!(last < s0, "{s0} -> {last}");
        assert_eq!(ae.pass(&x).unwrap().reconstruction().shape(), &[1, IMAGE_PIXELS]);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let ae = MnistAutoencoder::new(&small()).unwrap();
        assert!(ae.score(&Tensor::zeros([1, 10])).is_err());
    }

    #[test]
    fn loss_gradient_matches_differences() {
        let ae = MnistAutoencoder::new(&small()).unwrap();
        let x = digit(3);
        let w = ae.params().tensors()[2].clone();
        let err = grad_check(
            |tape, wv| {
                let input = tape.constant(&x);
                let mut h = input;
                for l in 0..4 {
                    let w = if l == 1 { wv } else { tape.constant(&ae.params().tensors()[2 * l]) };
                    let b = tape.constant(&ae.params().tensors()[2 * l + 1]);
                    let y = tape.dense(h, w, b)?;
                    h = tape.activation(y, if l == 3 { Activation::Tanh } else { Activation::Relu });
                }
                let d = tape.sub(h, input)?;
                Ok(tape.mean_square(d))
            },
            &w,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }
}
