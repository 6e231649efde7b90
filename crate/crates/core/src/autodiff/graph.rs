use super::kernels::{self, ConvDims};
use super::{Tensor, TensorError};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifier of the operation that produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    AddBias,
    Add,
    Sub,
    Mul,
    Scale,
    AddConst,
    Relu,
    Softplus,
    Sigmoid,
    Log,
    Square,
    Conv2d,
    MaxPool2,
    Pad2d,
    Reshape,
    Concat,
    SliceCols,
    SoftmaxCrossEntropy,
    BceWithLogits,
    MeanSquaredError,
    Sum,
    Mean,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::AddBias => "add_bias",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddConst => "add_const",
            OpKind::Relu => "relu",
            OpKind::Softplus => "softplus",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Log => "log",
            OpKind::Square => "square",
            OpKind::Conv2d => "conv2d",
            OpKind::MaxPool2 => "maxpool2",
            OpKind::Pad2d => "pad2d",
            OpKind::Reshape => "reshape",
            OpKind::Concat => "concat",
            OpKind::SliceCols => "slice_cols",
            OpKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
            OpKind::BceWithLogits => "bce_with_logits",
            OpKind::MeanSquaredError => "mse",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
        }
    }
}

/// Which operand of a binary elementwise op is a broadcast scalar.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    None,
    Left,
    Right,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    AddBias { x: Var, bias: Var },
    Add { a: Var, b: Var, bc: Broadcast },
    Sub { a: Var, b: Var, bc: Broadcast },
    Mul { a: Var, b: Var, bc: Broadcast },
    Scale { x: Var, c: f64 },
    AddConst { x: Var },
    Relu { x: Var },
    Softplus { x: Var },
    Sigmoid { x: Var },
    Log { x: Var },
    Square { x: Var },
    Conv2d { x: Var, k: Var, b: Var, dims: ConvDims },
    MaxPool2 { x: Var, arg: Vec<usize> },
    Pad2d { x: Var, planes: usize, h: usize, w: usize, pad: usize },
    Reshape { x: Var },
    Concat { parts: Vec<(Var, usize)>, rows: usize },
    SliceCols { x: Var, start: usize, cols: usize },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    BceWithLogits { logits: Var, targets: Vec<f64>, pos_weight: f64 },
    MeanSquaredError { pred: Var, target: Vec<f64> },
    Sum { x: Var },
    Mean { x: Var },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::Add { .. } => OpKind::Add,
            Op::Sub { .. } => OpKind::Sub,
            Op::Mul { .. } => OpKind::Mul,
            Op::Scale { .. } => OpKind::Scale,
            Op::AddConst { .. } => OpKind::AddConst,
            Op::Relu { .. } => OpKind::Relu,
            Op::Softplus { .. } => OpKind::Softplus,
            Op::Sigmoid { .. } => OpKind::Sigmoid,
            Op::Log { .. } => OpKind::Log,
            Op::Square { .. } => OpKind::Square,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::MaxPool2 { .. } => OpKind::MaxPool2,
            Op::Pad2d { .. } => OpKind::Pad2d,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Concat { .. } => OpKind::Concat,
            Op::SliceCols { .. } => OpKind::SliceCols,
            Op::SoftmaxCrossEntropy { .. } => OpKind::SoftmaxCrossEntropy,
            Op::BceWithLogits { .. } => OpKind::BceWithLogits,
            Op::MeanSquaredError { .. } => OpKind::MeanSquaredError,
            Op::Sum { .. } => OpKind::Sum,
            Op::Mean { .. } => OpKind::Mean,
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Per-forward-pass computation graph. Build it, call [`Graph::backward`]
/// once on a scalar node, then drop it.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
    /// Values handed out by successive [`Graph::detach`] calls.
    detach_replay: std::collections::VecDeque<Tensor>,
    detached: Vec<Tensor>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `like`'s shape when `v` did not
    /// influence the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(kind: OpKind, detail: String) -> TensorError {
    TensorError::Shape { op: kind.name(), detail }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Graph whose `detach` calls return `values` in order instead of
    /// their inputs, so finite differences can hold stopped paths fixed.
    pub fn with_detached(values: Vec<Tensor>) -> Self {
        Self { detach_replay: values.into(), ..Self::default() }
    }

    /// Values produced by `detach` so far.
    pub fn detached(&self) -> &[Tensor] {
        &self.detached
    }

    /// Copy of `x` cut from the graph.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = match self.detach_replay.pop_front() {
            Some(v) if v.shape() == self.nodes[x.0].value.shape() => v,
            _ => self.nodes[x.0].value.clone(),
        };
        self.detached.push(value.clone());
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err(OpKind::MatMul, format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new([m, n], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// Adds a bias vector `[n]` to every row of `x` (`[.., n]`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let n = self.value(x).cols();
        if self.value(bias).len() != n {
            return Err(shape_err(OpKind::AddBias, format!("{:?} + bias {:?}", self.shape(x), self.shape(bias))));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for row in value.data_mut().chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(&b) {
                *v += bv;
            }
        }
        let rg = self.rg(&[x, bias]);
        Ok(self.push(value, Op::AddBias { x, bias }, rg))
    }

    fn broadcast(&self, kind: OpKind, a: Var, b: Var) -> Result<(Broadcast, Vec<usize>), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok((Broadcast::None, sa.to_vec()))
        } else if self.value(a).len() == 1 {
            Ok((Broadcast::Left, sb.to_vec()))
        } else if self.value(b).len() == 1 {
            Ok((Broadcast::Right, sa.to_vec()))
        } else {
            Err(shape_err(kind, format!("{sa:?} vs {sb:?}")))
        }
    }

    fn binary(&mut self, kind: OpKind, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Broadcast), TensorError> {
        let (bc, shape) = self.broadcast(kind, a, b)?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f64> = match bc {
            Broadcast::None => va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect(),
            Broadcast::Left => vb.iter().map(|y| f(va[0], *y)).collect(),
            Broadcast::Right => va.iter().map(|x| f(*x, vb[0])).collect(),
        };
        Ok((Tensor::new(shape, data)?, bc))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (value, bc) = self.binary(OpKind::Add, a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add { a, b, bc }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (value, bc) = self.binary(OpKind::Sub, a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Sub { a, b, bc }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (value, bc) = self.binary(OpKind::Mul, a, b, |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul { a, b, bc }, rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale { x, c }, rg)
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        let rg = self.rg(&[x]);
        self.push(value, Op::AddConst { x }, rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu { x })
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, kernels::softplus, Op::Softplus { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, Op::Sigmoid { x })
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log { x })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square { x })
    }

    /// Valid 2-D convolution. `x`: `[B, C, H, W]`, `k`: `[O, C, KH, KW]`,
    /// `b`: `[O]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var, TensorError> {
        let (sx, sk, sb) = (self.shape(x), self.shape(k), self.shape(b));
        if sx.len() != 4 || sk.len() != 4 || sx[1] != sk[1] || sb != [sk[0]] || sk[2] > sx[2] || sk[3] > sx[3] {
            return Err(shape_err(OpKind::Conv2d, format!("input {sx:?}, kernel {sk:?}, bias {sb:?}")));
        }
        let dims = ConvDims { batch: sx[0], in_ch: sx[1], height: sx[2], width: sx[3], out_ch: sk[0], kh: sk[2], kw: sk[3] };
        let data = kernels::conv2d(self.value(x).data(), self.value(k).data(), self.value(b).data(), dims);
        let value = Tensor::new([dims.batch, dims.out_ch, dims.out_h(), dims.out_w()], data)?;
        let rg = self.rg(&[x, k, b]);
        Ok(self.push(value, Op::Conv2d { x, k, b, dims }, rg))
    }

    /// 2×2 stride-2 max-pool over the trailing two axes of a 4-D tensor.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(shape_err(OpKind::MaxPool2, format!("input {s:?}")));
        }
        let (data, arg) = kernels::maxpool2(self.value(x).data(), s[0] * s[1], s[2], s[3]);
        let value = Tensor::new([s[0], s[1], s[2] / 2, s[3] / 2], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::MaxPool2 { x, arg }, rg))
    }

    /// Zero-pads the trailing two axes of a 4-D tensor.
    pub fn pad2d(&mut self, x: Var, pad: usize) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(shape_err(OpKind::Pad2d, format!("input {s:?}")));
        }
        let planes = s[0] * s[1];
        let data = kernels::pad2d(self.value(x).data(), planes, s[2], s[3], pad);
        let value = Tensor::new([s[0], s[1], s[2] + 2 * pad, s[3] + 2 * pad], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Pad2d { x, planes, h: s[2], w: s[3], pad }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// `[B, ...]` to `[B, rest]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.shape(x);
        let b = s[0];
        let rest = s[1..].iter().product();
        self.reshape(x, &[b, rest])
    }

    /// Concatenates 2-D tensors along the feature (column) axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = match parts.first() {
            Some(&p) => self.shape(p)[0],
            None => return Err(shape_err(OpKind::Concat, "no operands".into())),
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(shape_err(OpKind::Concat, format!("operand {s:?} with {rows} rows expected")));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new([rows, total], data)?;
        let rg = self.rg(parts);
        let parts = parts.iter().copied().zip(widths).collect();
        Ok(self.push(value, Op::Concat { parts, rows }, rg))
    }

    /// Columns `start..start+len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || len == 0 || start + len > s[1] {
            return Err(shape_err(OpKind::SliceCols, format!("{s:?} columns {start}..{}", start + len)));
        }
        let cols = s[1];
        let mut data = Vec::with_capacity(s[0] * len);
        for r in 0..s[0] {
            data.extend_from_slice(&self.value(x).data()[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new([s[0], len], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::SliceCols { x, start, cols }, rg))
    }

    /// Mean over rows of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() || labels.iter().any(|&l| l >= s[1]) {
            return Err(shape_err(OpKind::SoftmaxCrossEntropy, format!("logits {s:?} with {} labels", labels.len())));
        }
        let (rows, cols) = (s[0], s[1]);
        let logp = kernels::log_softmax_rows(self.value(logits).data(), rows, cols);
        let loss = -labels.iter().enumerate().map(|(r, &l)| logp[r * cols + l]).sum::<f64>() / rows as f64;
        let probs = logp.iter().map(|v| v.exp()).collect();
        let rg = self.rg(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs }, rg))
    }

    /// Mean over all cells of the sigmoid binary cross-entropy, with
    /// positive targets weighted by `pos_weight`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], pos_weight: f64) -> Result<Var, TensorError> {
        if self.value(logits).len() != targets.len() {
            return Err(shape_err(OpKind::BceWithLogits, format!("logits {:?} with {} targets", self.shape(logits), targets.len())));
        }
        let n = targets.len() as f64;
        let loss = self
            .value(logits)
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| pos_weight * y * kernels::softplus(-x) + (1.0 - y) * kernels::softplus(x))
            .sum::<f64>()
            / n;
        let rg = self.rg(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits { logits, targets: targets.to_vec(), pos_weight }, rg))
    }

    /// Mean over all cells of `(pred - target)^2`.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var, TensorError> {
        if self.value(pred).len() != target.len() {
            return Err(shape_err(OpKind::MeanSquaredError, format!("prediction {:?} with {} targets", self.shape(pred), target.len())));
        }
        let n = target.len() as f64;
        let loss = self.value(pred).data().iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
        let rg = self.rg(&[pred]);
        Ok(self.push(Tensor::scalar(loss), Op::MeanSquaredError { pred, target: target.to_vec() }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(value, Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(&[x]);
        self.push(value, Op::Mean { x }, rg)
    }

    /// Reverse sweep from a scalar `loss`. A graph can be differentiated
    /// exactly once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, TensorError> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        if !self.value(loss).is_scalar() {
            return Err(TensorError::NonScalarLoss { shape: self.shape(loss).to_vec() });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|data| Tensor::new(node.value.shape().to_vec(), data).expect("gradient matches node shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let mut acc = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                if self.nodes[a.0].requires_grad {
                    acc(*a, kernels::matmul_bt(g, val(*b), *m, *k, *n));
                }
                if self.nodes[b.0].requires_grad {
                    acc(*b, kernels::matmul_at(val(*a), g, *m, *k, *n));
                }
            }
            Op::AddBias { x, bias } => {
                acc(*x, g.to_vec());
                let n = self.nodes[bias.0].value.len();
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                }
                acc(*bias, gb);
            }
            Op::Add { a, b, bc } | Op::Sub { a, b, bc } => {
                let sign = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
                let total: f64 = g.iter().sum();
                match bc {
                    Broadcast::None => {
                        acc(*a, g.to_vec());
                        acc(*b, g.iter().map(|v| sign * v).collect());
                    }
                    Broadcast::Left => {
                        acc(*a, vec![total]);
                        acc(*b, g.iter().map(|v| sign * v).collect());
                    }
                    Broadcast::Right => {
                        acc(*a, g.to_vec());
                        acc(*b, vec![sign * total]);
                    }
                }
            }
            Op::Mul { a, b, bc } => {
                let (va, vb) = (val(*a), val(*b));
                match bc {
                    Broadcast::None => {
                        acc(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect());
                        acc(*b, g.iter().zip(va).map(|(g, x)| g * x).collect());
                    }
                    Broadcast::Left => {
                        acc(*a, vec![g.iter().zip(vb).map(|(g, y)| g * y).sum()]);
                        acc(*b, g.iter().map(|g| g * va[0]).collect());
                    }
                    Broadcast::Right => {
                        acc(*a, g.iter().map(|g| g * vb[0]).collect());
                        acc(*b, vec![g.iter().zip(va).map(|(g, x)| g * x).sum()]);
                    }
                }
            }
            Op::Scale { x, c } => acc(*x, g.iter().map(|v| v * c).collect()),
            Op::AddConst { x } | Op::Reshape { x } => acc(*x, g.to_vec()),
            Op::Relu { x } => acc(*x, g.iter().zip(val(*x)).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect()),
            Op::Softplus { x } => acc(*x, g.iter().zip(val(*x)).map(|(g, v)| g * kernels::sigmoid(*v)).collect()),
            Op::Sigmoid { x } => {
                let out = node.value.data();
                acc(*x, g.iter().zip(out).map(|(g, s)| g * s * (1.0 - s)).collect());
            }
            Op::Log { x } => acc(*x, g.iter().zip(val(*x)).map(|(g, v)| g / v).collect()),
            Op::Square { x } => acc(*x, g.iter().zip(val(*x)).map(|(g, v)| 2.0 * g * v).collect()),
            Op::Conv2d { x, k, b, dims } => {
                let need_input = self.nodes[x.0].requires_grad;
                let (gi, gk, gb) = kernels::conv2d_backward(val(*x), val(*k), g, *dims, need_input);
                if need_input {
                    acc(*x, gi);
                }
                acc(*k, gk);
                acc(*b, gb);
            }
            Op::MaxPool2 { x, arg } => {
                let mut gi = vec![0.0; self.nodes[x.0].value.len()];
                for (gv, &src) in g.iter().zip(arg) {
                    gi[src] += gv;
                }
                acc(*x, gi);
            }
            Op::Pad2d { x, planes, h, w, pad } => acc(*x, kernels::unpad2d(g, *planes, *h, *w, *pad)),
            Op::Concat { parts, rows } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let mut offset = 0;
                for &(p, w) in parts {
                    let mut gp = Vec::with_capacity(rows * w);
                    for r in 0..*rows {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    acc(p, gp);
                    offset += w;
                }
            }
            Op::SliceCols { x, start, cols } => {
                let len = node.value.cols();
                let rows = node.value.rows();
                let mut gx = vec![0.0; rows * cols];
                for r in 0..rows {
                    gx[r * cols + start..r * cols + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                acc(*x, gx);
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let rows = labels.len();
                let cols = probs.len() / rows;
                let scale = g[0] / rows as f64;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &l) in labels.iter().enumerate() {
                    gl[r * cols + l] -= scale;
                }
                acc(*logits, gl);
            }
            Op::BceWithLogits { logits, targets, pos_weight } => {
                let scale = g[0] / targets.len() as f64;
                let gl = val(*logits)
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| {
                        let s = kernels::sigmoid(x);
                        scale * (-pos_weight * y * (1.0 - s) + (1.0 - y) * s)
                    })
                    .collect();
                acc(*logits, gl);
            }
            Op::MeanSquaredError { pred, target } => {
                let scale = 2.0 * g[0] / target.len() as f64;
                acc(*pred, val(*pred).iter().zip(target).map(|(p, t)| scale * (p - t)).collect());
            }
            Op::Sum { x } => acc(*x, vec![g[0]; self.nodes[x.0].value.len()]),
            Op::Mean { x } => {
                let n = self.nodes[x.0].value.len();
                acc(*x, vec![g[0] / n as f64; n]);
            }
        }
    }
}
