use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Seeded source of initial weights.
#[derive(Clone, Debug)]
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn fan_in_uniform(&mut self, shape: impl Into<Vec<usize>>, fan_in: usize) -> Tensor {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let rng = &mut self.rng;
        Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
    }

    /// Conv kernel `[out, in, kh, kw]` with fan-in `in·kh·kw`.
    pub fn conv_kernel(&mut self, out_ch: usize, in_ch: usize, k: usize) -> Tensor {
        self.fan_in_uniform([out_ch, in_ch, k, k], in_ch * k * k)
    }

    /// Dense weight `[in, out]` with fan-in `in`.
    pub fn dense_weight(&mut self, inputs: usize, outputs: usize) -> Tensor {
        self.fan_in_uniform([inputs, outputs], inputs)
    }
}

pub fn fan_in_uniform(shape: impl Into<Vec<usize>>, fan_in: usize, seed: u64) -> Tensor {
    Initializer::new(seed).fan_in_uniform(shape, fan_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_bounded() {
        let a = fan_in_uniform([16, 4], 16, 3);
        let b = fan_in_uniform([16, 4], 16, 3);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 0.25));
        assert_ne!(a, fan_in_uniform([16, 4], 16, 4));
    }
}
