use crate::error::Result;

/// Result of one forward pass: the loss plus whatever the scorer needs to
/// finish a training step without re-running the forward pass.
pub struct Forward<S> {
    pub loss: f64,
    pub state: S,
}

/// Anything that maps a sample to an anomaly score and can learn from it.
///
/// `score` never mutates parameters; `train_from` performs exactly one
/// optimizer step using the recorded forward pass. Scorers never see labels.
pub trait Scorer {
    type Sample;
    type State;

    fn forward(&self, sample: &Self::Sample) -> Result<Forward<Self::State>>;

    /// Backward pass plus one optimizer step. On error parameters are left
    /// unchanged.
    fn train_from(&mut self, pass: Forward<Self::State>) -> Result<()>;

    fn score(&self, sample: &Self::Sample) -> Result<f64> {
        Ok(self.forward(sample)?.loss)
    }

    /// Forward, backward and one update; returns the pre-update loss.
    fn train_step(&mut self, sample: &Self::Sample) -> Result<f64> {
        let pass = self.forward(sample)?;
        let loss = pass.loss;
        self.train_from(pass)?;
        Ok(loss)
    }
}
