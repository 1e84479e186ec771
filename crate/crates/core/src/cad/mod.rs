//! Core anomaly detector: a flow generator predicts motion from the previous
//! frame, the previous frame is warped along that flow, and the
//! reconstruction loss against the actual frame is the anomaly score.
//!
//! Training alternates one discriminator step and one generator step per
//! sample. Both gradients are taken at the same pre-update parameters.

mod loss;
mod network;
mod warp;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use loss::{
    discriminator_loss, generator_adv_loss, gradient_loss, intensity_loss, reconstruction_terms,
    ReconstructionTerms,
};
pub use network::{DiscriminatorConfig, FlowGenerator, GeneratorConfig, PatchDiscriminator};
pub use warp::{warp, warp_tensor};

use crate::error::{Error, Result};
use crate::io::checkpoint;
use crate::runner::scorer::{Forward, Scorer};
use crate::tensor::{Initializer, OptimizerKind, OptimizerState, ParamSet, Tape, Tensor, Var};

const GEN_GROUP: u16 = 0;
const DISC_GROUP: u16 = 1;

/// Two consecutive frames, each `[1, C, H, W]` with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePair {
    prev: Tensor,
    curr: Tensor,
}

impl FramePair {
    pub fn new(prev: Tensor, curr: Tensor) -> Result<Self> {
        if prev.shape() != curr.shape() {
            return Err(Error::dim(format!(
                "frame pair shapes differ: {:?} vs {:?}",
                prev.shape(),
                curr.shape()
            )));
        }
        if prev.shape().len() != 4 || prev.shape()[0] != 1 {
            return Err(Error::dim(format!(
                "frames must be [1, C, H, W], got {:?}",
                prev.shape()
            )));
        }
        let in_range = |t: &Tensor| t.data().iter().all(|v| (-1.0..=1.0).contains(v));
        if !in_range(&prev) || !in_range(&curr) {
            return Err(Error::Input("frame intensities must lie in [-1, 1]".into()));
        }
        Ok(FramePair { prev, curr })
    }

    pub fn prev(&self) -> &Tensor {
        &self.prev
    }

    pub fn curr(&self) -> &Tensor {
        &self.curr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CadConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Weight of the adversarial term in the generator objective.
    pub lambda: f64,
    /// When false the discriminator is never built or trained.
    pub adversarial: bool,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub optimizer: OptimizerKind,
    /// Add the vertical term to the gradient loss.
    pub vertical_gradient: bool,
    pub seed: u64,
}

impl Default for CadConfig {
    fn default() -> Self {
        CadConfig {
            channels: 1,
            height: 128,
            width: 192,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            lambda: 0.05,
            adversarial: true,
            lr_generator: 1e-4,
            lr_discriminator: 1e-5,
            optimizer: OptimizerKind::Adam,
            vertical_gradient: false,
            seed: 0,
        }
    }
}

impl CadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height < 3 || self.width < 3 {
            return Err(Error::Config(format!(
                "invalid frame geometry {}x{}x{}",
                self.channels, self.height, self.width
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        for (what, lr) in [
            ("generator", self.lr_generator),
            ("discriminator", self.lr_discriminator),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!(
                    "{what} learning rate must be positive, got {lr}"
                )));
            }
        }
        Ok(())
    }
}

/// Loss values of one training step, all taken before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub reconstruction: f64,
    /// `None` when the discriminator is disabled.
    pub discriminator: Option<f64>,
    pub objective: f64,
}

/// A recorded forward pass of the generator and warp.
pub struct CadPass {
    tape: Tape,
    curr: Var,
    flow: Var,
    pred: Var,
    terms: ReconstructionTerms,
}

impl CadPass {
    pub fn reconstruction(&self) -> f64 {
        self.tape.scalar(self.terms.total)
    }

    pub fn intensity(&self) -> f64 {
        self.tape.scalar(self.terms.intensity)
    }

    pub fn gradient(&self) -> f64 {
        self.tape.scalar(self.terms.gradient)
    }

    pub fn flow(&self) -> Tensor {
        self.tape.to_tensor(self.flow)
    }

    pub fn predicted(&self) -> Tensor {
        self.tape.to_tensor(self.pred)
    }
}

#[derive(Clone)]
pub struct CadModel {
    cfg: CadConfig,
    generator: FlowGenerator,
    gen_params: ParamSet,
    gen_opt: OptimizerState,
    discriminator: Option<(PatchDiscriminator, ParamSet, OptimizerState)>,
}

impl CadModel {
    pub fn new(cfg: &CadConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = Initializer::new(cfg.seed);
        let mut gen_params = ParamSet::new(GEN_GROUP);
        let generator = FlowGenerator::build(&cfg.generator, cfg.channels, &mut gen_params, &mut init)?;
        generator.check_extent(cfg.height, cfg.width)?;
        let gen_opt = OptimizerState::for_set(cfg.optimizer, cfg.lr_generator, &gen_params)?;
        let discriminator = if cfg.adversarial {
            let mut set = ParamSet::new(DISC_GROUP);
            let d = PatchDiscriminator::build(&cfg.discriminator, cfg.channels, &mut set, &mut init)?;
            let opt = OptimizerState::for_set(cfg.optimizer, cfg.lr_discriminator, &set)?;
            Some((d, set, opt))
        } else {
            None
        };
        Ok(CadModel {
            cfg: cfg.clone(),
            generator,
            gen_params,
            gen_opt,
            discriminator,
        })
    }

    pub fn config(&self) -> &CadConfig {
        &self.cfg
    }

    pub fn generator_params(&self) -> &ParamSet {
        &self.gen_params
    }

    pub fn discriminator_params(&self) -> Option<&ParamSet> {
        self.discriminator.as_ref().map(|(_, set, _)| set)
    }

    fn check_frame(&self, t: &Tensor) -> Result<()> {
        let want = [1, self.cfg.channels, self.cfg.height, self.cfg.width];
        if t.shape() != want {
            return Err(Error::dim(format!(
                "model expects frames of shape {want:?}, got {:?}",
                t.shape()
            )));
        }
        Ok(())
    }

    /// Predicted flow `[1, 2, H, W]` for one frame.
    pub fn predict_flow(&self, prev: &Tensor) -> Result<Tensor> {
        self.check_frame(prev)?;
        let mut tape = Tape::new();
        let x = tape.constant(prev);
        let flow = self.generator.forward(&mut tape, &self.gen_params, x)?;
        Ok(tape.to_tensor(flow))
    }

    /// Patch probability map for one frame.
    pub fn discriminate(&self, frame: &Tensor) -> Result<Tensor> {
        self.check_frame(frame)?;
        let (d, set, _) = self
            .discriminator
            .as_ref()
            .ok_or_else(|| Error::Config("discriminator is disabled".into()))?;
        let mut tape = Tape::new();
        let x = tape.constant(frame);
        let p = d.forward(&mut tape, set, x)?;
        Ok(tape.to_tensor(p))
    }

    pub fn pass(&self, pair: &FramePair) -> Result<CadPass> {
        self.check_frame(pair.prev())?;
        let mut tape = Tape::new();
        let prev = tape.constant(pair.prev());
        let curr = tape.constant(pair.curr());
        let flow = self.generator.forward(&mut tape, &self.gen_params, prev)?;
        let pred = warp(&mut tape, prev, flow)?;
        let terms = reconstruction_terms(&mut tape, pred, curr, self.cfg.vertical_gradient)?;
        Ok(CadPass {
            tape,
            curr,
            flow,
            pred,
            terms,
        })
    }

    pub fn reconstruction_loss(&self, pair: &FramePair) -> Result<f64> {
        Ok(self.pass(pair)?.reconstruction())
    }

    /// One discriminator step on `L_D` followed by one generator step on
    /// `L_R + lambda * L_G`. Nothing is updated if any loss or gradient is
    /// non-finite.
    pub fn train_pass(&mut self, pass: CadPass) -> Result<StepLosses> {
        let CadPass {
            mut tape,
            curr,
            flow: _,
            pred,
            terms,
        } = pass;
        let reconstruction = tape.scalar(terms.total);
        let (objective_var, disc) = match &self.discriminator {
            Some((d, set, _)) => {
                let real = d.forward(&mut tape, set, curr)?;
                let fixed = tape.detach(pred);
                let fake_fixed = d.forward(&mut tape, set, fixed)?;
                let l_d = discriminator_loss(&mut tape, real, fake_fixed)?;
                let fake = d.forward(&mut tape, set, pred)?;
                let l_g = generator_adv_loss(&mut tape, fake);
                let weighted = tape.scale(l_g, self.cfg.lambda);
                let l_o = tape.add(terms.total, weighted)?;
                (l_o, Some(l_d))
            }
            None => (terms.total, None),
        };
        let objective = tape.scalar(objective_var);
        let disc_loss = disc.map(|v| tape.scalar(v));
        if !objective.is_finite() || disc_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite training loss (objective {objective}, discriminator {disc_loss:?})"
            )));
        }
        let gen_grads = tape.backward(objective_var)?;
        let disc_grads = disc.map(|v| tape.backward(v)).transpose()?;
        if !gen_grads.all_finite() || disc_grads.as_ref().is_some_and(|g| !g.all_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        if let (Some((_, set, opt)), Some(grads)) = (self.discriminator.as_mut(), disc_grads) {
            grads.store_into(set);
            opt.step_set(set)?;
        }
        gen_grads.store_into(&mut self.gen_params);
        self.gen_opt.step_set(&mut self.gen_params)?;
        Ok(StepLosses {
            reconstruction,
            discriminator: disc_loss,
            objective,
        })
    }

    pub fn train_step(&mut self, pair: &FramePair) -> Result<StepLosses> {
        let pass = self.pass(pair)?;
        self.train_pass(pass)
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .gen_params
            .iter()
            .map(|(n, t)| (format!("generator.{n}"), t))
            .collect();
        if let Some((_, set, _)) = &self.discriminator {
            out.extend(set.iter().map(|(n, t)| (format!("discriminator.{n}"), t)));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.named_params())
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        checkpoint::write(&mut buf, &self.named_params())?;
        Ok(buf)
    }

    /// Replaces all parameters from a checkpoint written by a model with the
    /// same configuration. Optimizer state is reset.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let entries = checkpoint::load(path)?;
        self.restore(entries)
    }

    pub fn restore(&mut self, entries: Vec<(String, Tensor)>) -> Result<()> {
        let expected = self.named_params();
        if entries.len() != expected.len() {
            return Err(Error::Input(format!(
                "checkpoint holds {} tensors, model has {}",
                entries.len(),
                expected.len()
            )));
        }
        for ((name, t), (want, cur)) in entries.iter().zip(&expected) {
            if name != want || t.shape() != cur.shape() {
                return Err(Error::Input(format!(
                    "checkpoint entry {name} {:?} does not match model entry {want} {:?}",
                    t.shape(),
                    cur.shape()
                )));
            }
        }
        let n_gen = self.gen_params.len();
        let mut it = entries.into_iter().map(|(_, t)| t);
        for slot in self.gen_params.tensors_mut().iter_mut().take(n_gen) {
            *slot = it.next().expect("length checked");
        }
        if let Some((_, set, _)) = self.discriminator.as_mut() {
            for slot in set.tensors_mut() {
                *slot = it.next().expect("length checked");
            }
        }
        self.gen_opt = OptimizerState::for_set(self.cfg.optimizer, self.cfg.lr_generator, &self.gen_params)?;
        if let Some((_, set, opt)) = self.discriminator.as_mut() {
            *opt = OptimizerState::for_set(self.cfg.optimizer, self.cfg.lr_discriminator, set)?;
        }
        Ok(())
    }
}

impl Scorer for CadModel {
    type Sample = FramePair;
    type State = CadPass;

    fn forward(&self, sample: &FramePair) -> Result<Forward<CadPass>> {
        let pass = self.pass(sample)?;
        Ok(Forward {
            loss: pass.reconstruction(),
            state: pass,
        })
    }

    fn train_from(&mut self, pass: Forward<CadPass>) -> Result<()> {
        self.train_pass(pass.state).map(|_| ())
    }
}
