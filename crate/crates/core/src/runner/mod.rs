//! Orchestration: scorers, the streaming loop and the experiment drivers.

pub mod config;
pub mod experiments;
pub mod mnist;
pub mod scorer;
pub mod sprites;
pub mod stream;

pub use config::{ExperimentConfig, Mode, Profile};
pub use experiments::{
    run, run_conventional, run_mix, run_mnist_experiment, run_plug_and_play, run_sprite_benchmark, MnistOutcome,
    SpriteOutcome,
};
pub use mnist::{AutoencoderConfig, MnistAutoencoder, MnistData};
pub use scorer::{Forward, Scorer};
pub use stream::{evaluate, run_stream, RunMetrics};
