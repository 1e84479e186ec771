use std::collections::HashMap;
use std::fmt;

use super::kernels::{self, ConvGeom};
use super::{ParamKey, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and the output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// A differentiable operation defined outside the tape's built-in set.
///
/// `backward` receives the input values, the recorded output and the
/// upstream gradient, and returns one gradient per input (`None` when the
/// input does not need one).
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        inputs: &[&[f64]],
        output: &[f64],
        grad_out: &[f64],
    ) -> Vec<Option<Vec<f64>>>;
}

enum Op {
    Leaf,
    Constant,
    Param,
    Conv2d { x: Var, k: Var, geom: ConvGeom },
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    AddBias { x: Var, b: Var, outer: usize, ch: usize, inner: usize },
    Act { x: Var, kind: Activation },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Upsample2x { x: Var, planes: usize, h: usize, w: usize },
    Sum { x: Var },
    Mean { x: Var },
    MeanSquare { x: Var },
    BceMean { p: Var, target: f64 },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Param => "param",
            Op::Conv2d { .. } => "conv2d",
            Op::MatMul { .. } => "matmul",
            Op::AddBias { .. } => "add_bias",
            Op::Act { .. } => "activation",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Upsample2x { .. } => "upsample2x",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::MeanSquare { .. } => "mean_square",
            Op::BceMean { .. } => "bce_mean",
            Op::Custom { op, .. } => op.name(),
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    /// Whether any leaf or parameter feeds this node.
    tracked: bool,
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Constant | Op::Param => Vec::new(),
            Op::Conv2d { x, k, .. } => vec![*x, *k],
            Op::MatMul { a, b, .. } | Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                vec![*a, *b]
            }
            Op::AddBias { x, b, .. } => vec![*x, *b],
            Op::Act { x, .. }
            | Op::Scale { x, .. }
            | Op::Upsample2x { x, .. }
            | Op::Sum { x }
            | Op::Mean { x }
            | Op::MeanSquare { x } => vec![*x],
            Op::BceMean { p, .. } => vec![*p],
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }
}

/// Probability clamp applied before every logarithm in [`Tape::bce_mean`].
pub const PROB_CLAMP: f64 = 1e-7;

/// Records executed operations in evaluation order.
///
/// Inputs always precede their consumers, so walking the node list backwards
/// is a valid reverse topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamKey, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        Tensor::from_f64(node.shape.clone(), &node.value).expect("tape shapes are valid")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let tracked = match op {
            Op::Leaf | Op::Param => true,
            Op::Constant => false,
            _ => op.inputs().iter().any(|v| self.nodes[v.0].tracked),
        };
        self.nodes.push(Node {
            shape,
            value,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.to_f64(), Op::Leaf)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.to_f64(), Op::Constant)
    }

    /// Records a constant input given in 64-bit precision.
    pub fn leaf_f64(&mut self, shape: impl Into<Vec<usize>>, value: Vec<f64>) -> Result<Var> {
        let shape = shape.into();
        if shape.is_empty() || shape.iter().product::<usize>() != value.len() {
            return Err(Error::dim(format!(
                "shape {:?} does not hold {} values",
                shape,
                value.len()
            )));
        }
        Ok(self.push(shape, value, Op::Leaf))
    }

    /// Records a trainable parameter. Registering the same key twice returns
    /// the first leaf so gradients from every use accumulate in one place.
    pub fn param(&mut self, key: ParamKey, t: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.push(t.shape().to_vec(), t.to_f64(), Op::Param);
        self.params.insert(key, v);
        v
    }

    /// Registers every tensor of `set`, in order.
    pub fn params_of(&mut self, set: &ParamSet) -> Vec<Var> {
        (0..set.len()).map(|i| set.var(self, i)).collect()
    }

    /// Copies `v` into a fresh constant leaf: no gradient flows back through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let node = &self.nodes[v.0];
        let (shape, value) = (node.shape.clone(), node.value.clone());
        self.push(shape, value, Op::Constant)
    }

    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(k).to_vec();
        if xs.len() != 4 || ks.len() != 4 {
            return Err(Error::dim(format!(
                "conv2d expects 4-d input and kernel, got {xs:?} and {ks:?}"
            )));
        }
        if xs[1] != ks[1] {
            return Err(Error::dim(format!(
                "conv2d input has {} channels but kernel expects {}",
                xs[1], ks[1]
            )));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be positive".into()));
        }
        let (ph, pw) = (xs[2] + 2 * padding, xs[3] + 2 * padding);
        if ks[2] > ph || ks[3] > pw {
            return Err(Error::dim(format!(
                "kernel {}x{} larger than padded input {ph}x{pw}",
                ks[2], ks[3]
            )));
        }
        let geom = ConvGeom {
            batch: xs[0],
            in_ch: xs[1],
            in_h: xs[2],
            in_w: xs[3],
            out_ch: ks[0],
            k_h: ks[2],
            k_w: ks[3],
            stride,
            pad: padding,
            out_h: (ph - ks[2]) / stride + 1,
            out_w: (pw - ks[3]) / stride + 1,
        };
        let value = kernels::conv2d_forward(self.value(x), self.value(k), &geom);
        let shape = vec![geom.batch, geom.out_ch, geom.out_h, geom.out_w];
        Ok(self.push(shape, value, Op::Conv2d { x, k, geom }))
    }

    /// `[N, D] · [D, M]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!(
                "matmul of {sa:?} and {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut value = vec![0.0; m * n];
        kernels::gemm(self.value(a), self.value(b), &mut value, m, k, n);
        Ok(self.push(vec![m, n], value, Op::MatMul { a, b, m, k, n }))
    }

    /// Adds a per-channel bias along axis 1 (`[N, M]` or `[N, C, H, W]`).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let bs = self.shape(b);
        if xs.len() < 2 || bs.len() != 1 || bs[0] != xs[1] {
            return Err(Error::dim(format!(
                "bias of shape {bs:?} does not match axis 1 of {xs:?}"
            )));
        }
        let (outer, ch) = (xs[0], xs[1]);
        let inner: usize = xs[2..].iter().product();
        let bias = self.value(b);
        let mut value = self.value(x).to_vec();
        for o in 0..outer {
            for c in 0..ch {
                let base = (o * ch + c) * inner;
                for v in &mut value[base..base + inner] {
                    *v += bias[c];
                }
            }
        }
        Ok(self.push(xs, value, Op::AddBias { x, b, outer, ch, inner }))
    }

    /// Affine map `input · weight + bias`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = self.matmul(input, weight)?;
        self.add_bias(y, bias)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let value = self.value(x).iter().map(|&v| kind.apply(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, value, Op::Act { x, kind })
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<Vec<usize>> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(self.shape(a).to_vec())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape(a, b, "add")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(shape, value, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape(a, b, "sub")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(shape, value, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape(a, b, "mul")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(shape, value, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, value, Op::Scale { x, c })
    }

    /// Nearest-neighbour 2× upsampling of the two trailing axes.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(Error::dim(format!("upsample2x expects 4-d input, got {xs:?}")));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let value = kernels::upsample2x(self.value(x), planes, h, w);
        let shape = vec![xs[0], xs[1], 2 * h, 2 * w];
        Ok(self.push(shape, value, Op::Upsample2x { x, planes, h, w }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().sum();
        self.push(vec![1], vec![value], Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = v.iter().sum::<f64>() / v.len() as f64;
        self.push(vec![1], vec![value], Op::Mean { x })
    }

    /// Mean of squared entries.
    pub fn mean_square(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64;
        self.push(vec![1], vec![value], Op::MeanSquare { x })
    }

    /// Mean binary cross-entropy of probabilities `p` against a constant
    /// target in `{0, 1}`, with `p` clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce_mean(&mut self, p: Var, target: f64) -> Var {
        let v = self.value(p);
        let total: f64 = v.iter().map(|&q| bce(q, target)).sum();
        let value = total / v.len() as f64;
        self.push(vec![1], vec![value], Op::BceMean { p, target })
    }

    /// Appends a node computed outside the tape together with its backward rule.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Box<dyn CustomOp>,
    ) -> Result<Var> {
        if shape.iter().product::<usize>() != value.len() {
            return Err(Error::dim(format!(
                "custom op {} produced {} values for shape {:?}",
                op.name(),
                value.len(),
                shape
            )));
        }
        Ok(self.push(
            shape,
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// The tape is left untouched, so several losses recorded on one tape can
    /// each be differentiated.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut leaves = HashMap::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Leaf | Op::Param => {
                    leaves.insert(idx, g);
                }
                Op::Conv2d { x, k, geom } => {
                    let (dx, dk) = kernels::conv2d_backward(
                        self.value(*x),
                        self.value(*k),
                        &g,
                        geom,
                        self.nodes[x.0].tracked,
                        self.nodes[k.0].tracked,
                    );
                    if let Some(dx) = dx {
                        self.accumulate(&mut grads, *x, dx);
                    }
                    if let Some(dk) = dk {
                        self.accumulate(&mut grads, *k, dk);
                    }
                }
                Op::MatMul { a, b, m, k, n } => {
                    let mut da = vec![0.0; m * k];
                    kernels::gemm_a_bt(&g, self.value(*b), &mut da, *m, *n, *k);
                    let mut db = vec![0.0; k * n];
                    kernels::gemm_at_b(self.value(*a), &g, &mut db, *k, *m, *n);
                    self.accumulate(&mut grads, *a, da);
                    self.accumulate(&mut grads, *b, db);
                }
                Op::AddBias {
                    x,
                    b,
                    outer,
                    ch,
                    inner,
                } => {
                    let mut db = vec![0.0; *ch];
                    for o in 0..*outer {
                        for (c, acc) in db.iter_mut().enumerate() {
                            let base = (o * ch + c) * inner;
                            *acc += g[base..base + inner].iter().sum::<f64>();
                        }
                    }
                    self.accumulate(&mut grads, *b, db);
                    self.accumulate(&mut grads, *x, g);
                }
                Op::Act { x, kind } => {
                    let xv = self.value(*x);
                    let dx = g
                        .iter()
                        .zip(xv.iter().zip(&node.value))
                        .map(|(&gi, (&xi, &yi))| gi * kind.derivative(xi, yi))
                        .collect();
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut grads, *a, g.clone());
                    self.accumulate(&mut grads, *b, g);
                }
                Op::Sub { a, b } => {
                    let neg = g.iter().map(|v| -v).collect();
                    self.accumulate(&mut grads, *a, g);
                    self.accumulate(&mut grads, *b, neg);
                }
                Op::Mul { a, b } => {
                    let da = zip_map(&g, self.value(*b), |gi, bi| gi * bi);
                    let db = zip_map(&g, self.value(*a), |gi, ai| gi * ai);
                    self.accumulate(&mut grads, *a, da);
                    self.accumulate(&mut grads, *b, db);
                }
                Op::Scale { x, c } => {
                    let dx = g.iter().map(|v| v * c).collect();
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Upsample2x { x, planes, h, w } => {
                    let dx = kernels::upsample2x_backward(&g, *planes, *h, *w);
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Sum { x } => {
                    let n = self.value(*x).len();
                    self.accumulate(&mut grads, *x, vec![g[0]; n]);
                }
                Op::Mean { x } => {
                    let n = self.value(*x).len();
                    self.accumulate(&mut grads, *x, vec![g[0] / n as f64; n]);
                }
                Op::MeanSquare { x } => {
                    let xv = self.value(*x);
                    let c = 2.0 * g[0] / xv.len() as f64;
                    self.accumulate(&mut grads, *x, xv.iter().map(|v| c * v).collect());
                }
                Op::BceMean { p, target } => {
                    let pv = self.value(*p);
                    let c = g[0] / pv.len() as f64;
                    let dp = pv.iter().map(|&q| c * bce_derivative(q, *target)).collect();
                    self.accumulate(&mut grads, *p, dp);
                }
                Op::Custom { inputs, op } => {
                    let values: Vec<&[f64]> = inputs.iter().map(|v| self.value(*v)).collect();
                    let dins = op.backward(&values, &node.value, &g);
                    debug_assert_eq!(dins.len(), inputs.len());
                    for (v, d) in inputs.iter().zip(dins) {
                        if let Some(d) = d {
                            self.accumulate(&mut grads, *v, d);
                        }
                    }
                }
            }
        }

        let params = self
            .params
            .iter()
            .map(|(&key, &var)| (key, var.0))
            .collect();
        Ok(Gradients { leaves, params })
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

impl Tape {
    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if self.nodes[v.0].tracked {
            accumulate(grads, v, g);
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(&g) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn bce(p: f64, target: f64) -> f64 {
    let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(target * q.ln() + (1.0 - target) * (1.0 - q).ln())
}

fn bce_derivative(p: f64, target: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    -(target / p) + (1.0 - target) / (1.0 - p)
}

/// Gradients produced by one [`Tape::backward`] call.
#[derive(Debug)]
pub struct Gradients {
    leaves: HashMap<usize, Vec<f64>>,
    params: HashMap<ParamKey, usize>,
}

impl Gradients {
    /// Gradient with respect to a leaf or parameter; `None` if unreachable.
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.leaves.get(&v.0).map(Vec::as_slice)
    }

    pub fn of_param(&self, key: ParamKey) -> Option<&[f64]> {
        self.params
            .get(&key)
            .and_then(|idx| self.leaves.get(idx))
            .map(Vec::as_slice)
    }

    /// Writes gradients into the grad slots of every tensor in `set`.
    /// Parameters the loss does not reach receive zeros.
    pub fn store_into(&self, set: &mut ParamSet) {
        for i in 0..set.len() {
            let key = set.key(i);
            let t = set.get_mut(key);
            let grad = match self.of_param(key) {
                Some(g) => g.iter().map(|&v| v as f32).collect(),
                None => vec![0.0; t.numel()],
            };
            t.set_grad(grad).expect("gradient shape matches parameter");
        }
    }

    /// True if every gradient entry is finite.
    pub fn all_finite(&self) -> bool {
        self.leaves.values().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv2d_sums_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::ones([1, 1, 3, 3]));
        let k = tape.leaf(&Tensor::ones([1, 1, 3, 3]));
        let y = tape.conv2d(x, k, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y), &[9.0]);
    }

    #[test]
    fn conv2d_zero_kernel_gives_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::from_fn([1, 2, 5, 4], |i| i as f32 * 0.3 - 2.0));
        let k = tape.leaf(&Tensor::zeros([3, 2, 3, 3]));
        let y = tape.conv2d(x, k, 1, 1).unwrap();
        assert_eq!(tape.shape(y), &[1, 3, 5, 4]);
        assert!(tape.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_strided_corner_kernel() {
        // Corner kernel picks the top-left element of each 2×2 block.
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::from_fn([1, 1, 4, 4], |i| i as f32));
        let k = tape.leaf(&t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 0.0]));
        let y = tape.conv2d(x, k, 2, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 2, 2]);
        assert_eq!(tape.value(y), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn conv2d_output_extent_formula() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros([2, 1, 9, 7]));
        let k = tape.leaf(&Tensor::zeros([4, 1, 5, 5]));
        let y = tape.conv2d(x, k, 2, 2).unwrap();
        // floor((9 + 4 - 5) / 2) + 1 = 5, floor((7 + 4 - 5) / 2) + 1 = 4
        assert_eq!(tape.shape(y), &[2, 4, 5, 4]);
    }

    #[test]
    fn conv2d_rejects_channel_mismatch() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros([1, 2, 4, 4]));
        let k = tape.leaf(&Tensor::zeros([1, 3, 3, 3]));
        assert!(matches!(tape.conv2d(x, k, 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn dense_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1, 2], &[1.0, 2.0]));
        let w = tape.leaf(&t(&[2, 2], &[1.0, 0.0, 0.0, 3.0]));
        let b = tape.leaf(&t(&[2], &[0.5, 0.5]));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y), &[1.5, 6.5]);

        let eye = tape.leaf(&t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let zero_b = tape.leaf(&Tensor::zeros([2]));
        let y = tape.dense(x, eye, zero_b).unwrap();
        assert_eq!(tape.value(y), &[1.0, 2.0]);

        let x3 = tape.leaf(&Tensor::from_fn([3, 2], |i| i as f32));
        let zero_w = tape.leaf(&Tensor::zeros([2, 2]));
        let y = tape.dense(x3, zero_w, b).unwrap();
        assert_eq!(tape.value(y), &[0.5; 6]);
    }

    #[test]
    fn dense_rejects_inner_mismatch() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros([1, 3]));
        let w = tape.leaf(&Tensor::zeros([2, 2]));
        let b = tape.leaf(&Tensor::zeros([2]));
        assert!(matches!(tape.dense(x, w, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert!((Activation::Tanh.apply(1.0) - 0.761594).abs() < 5e-7);
        assert_eq!(Activation::LeakyRelu(0.2).apply(-2.0), -0.4);
    }

    #[test]
    fn backward_of_square() {
        let mut tape = Tape::new();
        let mut set = ParamSet::new(0);
        set.push("w", t(&[1], &[3.0]));
        set.push("unused", t(&[2], &[1.0, 1.0]));
        let w = set.var(&mut tape, 0);
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.of(w).unwrap(), &[6.0]);
        grads.store_into(&mut set);
        assert_eq!(set.tensors()[0].grad().unwrap(), &[6.0]);
        assert_eq!(set.tensors()[1].grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros([2]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_param_registration_shares_gradient() {
        let mut tape = Tape::new();
        let mut set = ParamSet::new(1);
        set.push("w", t(&[1], &[2.0]));
        let a = set.var(&mut tape, 0);
        let b = set.var(&mut tape, 0);
        assert_eq!(a, b);
        let y = tape.mul(a, b).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.of_param(set.key(0)).unwrap(), &[4.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1], &[2.0]));
        let d = tape.detach(x);
        let y = tape.mul(x, d).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.of(x).unwrap(), &[2.0]);
    }

    #[test]
    fn bce_matches_closed_form() {
        let mut tape = Tape::new();
        let p = tape.leaf(&Tensor::full([4], 0.5));
        let l = tape.bce_mean(p, 1.0);
        assert!((tape.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
