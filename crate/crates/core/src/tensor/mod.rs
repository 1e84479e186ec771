//! Dense tensors and the reverse-mode differentiation engine.
//!
//! Model state lives in [`Tensor`] values (32-bit). Every forward pass is
//! recorded on a [`Tape`] that evaluates in 64-bit, so losses and
//! finite-difference checks are not dominated by rounding.

mod gradcheck;
mod init;
pub(crate) mod kernels;
mod optim;
mod tape;

pub use gradcheck::grad_check;
pub use init::{fan_in_uniform, Initializer};
pub use optim::{adam_step, OptimizerKind, OptimizerState};
pub use tape::{Activation, CustomOp, Gradients, Tape, Var};

use crate::error::{Error, Result};

/// Dense row-major array with an optional gradient slot of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            grad: None,
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> f32) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: (0..numel).map(&mut f).collect(),
            grad: None,
        }
    }

    /// Builds a 32-bit tensor from 64-bit values, rounding each entry.
    pub fn from_f64(shape: impl Into<Vec<usize>>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f32>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::dim(format!(
                "gradient of length {} for tensor of shape {:?}",
                grad.len(),
                self.shape
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        check_shape(&shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::dim(format!(
            "shape extents must be positive, got {shape:?}"
        )));
    }
    Ok(())
}

/// Identifies one parameter tensor: the group it belongs to and its slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub group: u16,
    pub index: u32,
}

/// A named, ordered collection of trainable tensors sharing one group id.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    group: u16,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(group: u16) -> Self {
        ParamSet {
            group,
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn group(&self) -> u16 {
        self.group
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamKey {
        let key = ParamKey {
            group: self.group,
            index: self.tensors.len() as u32,
        };
        self.names.push(name.into());
        self.tensors.push(tensor);
        key
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn key(&self, index: usize) -> ParamKey {
        ParamKey {
            group: self.group,
            index: index as u32,
        }
    }

    pub fn get(&self, key: ParamKey) -> &Tensor {
        debug_assert_eq!(key.group, self.group);
        &self.tensors[key.index as usize]
    }

    pub fn get_mut(&mut self, key: ParamKey) -> &mut Tensor {
        debug_assert_eq!(key.group, self.group);
        &mut self.tensors[key.index as usize]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    /// Registers tensor `index` on `tape`, reusing the leaf if it already exists.
    pub fn var(&self, tape: &mut Tape, index: usize) -> Var {
        tape.param(self.key(index), &self.tensors[index])
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new([2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new([2, 3], vec![0.0; 5]),
            Err(Error::Dimension(_))
        ));
        assert!(Tensor::new([0, 3], vec![]).is_err());
    }

    #[test]
    fn grad_slot_shape_is_checked() {
        let mut t = Tensor::zeros([2, 2]);
        assert!(t.set_grad(vec![0.0; 3]).is_err());
        t.set_grad(vec![1.0; 4]).unwrap();
        assert_eq!(t.grad().unwrap(), &[1.0; 4]);
    }

    #[test]
    fn param_set_keys_are_stable() {
        let mut set = ParamSet::new(7);
        let a = set.push("a", Tensor::zeros([1]));
        let b = set.push("b", Tensor::ones([2]));
        assert_eq!(a, ParamKey { group: 7, index: 0 });
        assert_eq!(set.get(b).data(), &[1.0, 1.0]);
        assert_eq!(set.num_values(), 3);
    }
}
