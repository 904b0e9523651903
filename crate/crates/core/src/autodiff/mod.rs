//! Minimal reverse-mode differentiation substrate.
//!
//! A [`Graph`] records every primitive application; [`Graph::backward`] runs
//! reverse accumulation over the recorded nodes and deposits gradients into
//! the [`Params`] store. The primitive set is fixed: matmul, batched matmul,
//! broadcast add/mul, scalar scale, relu, softmax over the last axis,
//! concat/slice along an axis, mean/sum over axes, reshape/permute, 1-D
//! convolution with stride/dilation/zero padding, layer normalization over
//! the last axis, cross-entropy, and two index-table primitives
//! (`rule_apply`, `group_max`) that carry sparse convolution and pooling.
//!
//! Every primitive validates shapes up front, names itself in errors, and
//! rejects non-finite outputs instead of propagating them.

mod kernels;

pub mod checkpoint;
pub mod gradcheck;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};

// ── Parameters ───────────────────────────────────────────────────────────

/// Handle into a [`Params`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// A named learnable tensor with a persistent gradient buffer.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: DenseTensor,
    pub grad: DenseTensor,
}

/// Arena of parameters. Models hold `ParamId`s; the store owns the values so
/// forward passes borrow it immutably while the optimizer mutates it between
/// steps.
#[derive(Debug, Clone, Default)]
pub struct Params {
    entries: Vec<Parameter>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter; names must be unique within the store and
    /// values finite.
    pub fn add(&mut self, name: impl Into<String>, value: DenseTensor) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.entries.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        assert!(value.all_finite(), "parameter {name} initialized with non-finite values");
        let grad = DenseTensor::zeros(value.shape());
        self.entries.push(Parameter { name, value, grad });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseTensor {
        &self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &DenseTensor {
        &self.entries[id.0].grad
    }

    pub fn set_value(&mut self, id: ParamId, value: DenseTensor) {
        assert_eq!(value.shape(), self.entries[id.0].value.shape(), "parameter shape is fixed");
        self.entries[id.0].value = value;
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Reset every gradient to exactly zero.
    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad = DenseTensor::zeros(p.value.shape());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Parameter)> {
        self.entries.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    fn accumulate_grad(&mut self, id: ParamId, g: &DenseTensor) {
        let dst = &mut self.entries[id.0].grad;
        for (d, &s) in dst.data_mut().iter_mut().zip(g.data()) {
            *d += s;
        }
    }
}

// ── Index-table plans for sparse primitives ──────────────────────────────

/// One contribution: output row `out` accumulates `W[weight] · F_in[inp]`.
#[derive(Debug, Clone, Copy)]
pub struct Rule {
    pub out: u32,
    pub weight: u32,
    pub inp: u32,
}

/// Gather/scatter table for a sparse convolution, grouped by weight index so
/// the apply kernel walks each kernel offset once.
#[derive(Debug, Clone)]
pub struct RulePlan {
    pub n_out: usize,
    pub rules: Vec<Rule>,
}

/// Membership table for sparse max-pooling: output row `i` takes the
/// elementwise max over input rows `members[starts[i]..starts[i+1]]`.
/// Member order is the kernel-offset enumeration order, which fixes
/// argmax tie-breaking.
#[derive(Debug, Clone)]
pub struct PoolPlan {
    pub starts: Vec<u32>,
    pub members: Vec<u32>,
}

impl PoolPlan {
    pub fn n_out(&self) -> usize {
        self.starts.len() - 1
    }
}

// ── Graph ────────────────────────────────────────────────────────────────

/// Handle to a recorded node's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul,
    Bmm,
    Add,
    Mul,
    Scale(f64),
    Relu,
    SoftmaxLast,
    Concat { axis: usize },
    Slice { axis: usize, start: usize },
    MeanAxes { axes: Vec<usize> },
    SumAxes { axes: Vec<usize> },
    Reshape,
    Permute { perm: Vec<usize> },
    Conv1d { stride: usize, dilation: usize },
    LayerNormLast { eps: f64 },
    CrossEntropy { label: usize },
    RuleApply { plan: Arc<RulePlan> },
    GroupMax { argmax: Vec<u32> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::Bmm => "bmm",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Relu => "relu",
            Op::SoftmaxLast => "softmax",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::MeanAxes { .. } => "mean",
            Op::SumAxes { .. } => "sum",
            Op::Reshape => "reshape",
            Op::Permute { .. } => "permute",
            Op::Conv1d { .. } => "conv1d",
            Op::LayerNormLast { .. } => "layer_norm",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::RuleApply { .. } => "sparse_conv",
            Op::GroupMax { .. } => "sparse_max_pool",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: DenseTensor,
}

/// Ordered record of executed primitives, sufficient to run one reverse
/// accumulation. Recording any new primitive re-arms backward.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bindings: Vec<(usize, ParamId)>,
    backward_spent: bool,
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

    /// Forward value of a recorded node.
    pub fn value(&self, v: Value) -> &DenseTensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: DenseTensor) -> Result<Value> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        Ok(self.push_unchecked(op, inputs, value))
    }

    fn push_unchecked(&mut self, op: Op, inputs: Vec<usize>, value: DenseTensor) -> Value {
        self.backward_spent = false;
        self.nodes.push(Node { op, inputs, value });
        Value(self.nodes.len() - 1)
    }

    fn check(&self, v: Value, op: &'static str) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(Error::Graph(format!("{op}: value is not recorded on this graph (detached)")));
        }
        Ok(())
    }

    // ── Leaves ───────────────────────────────────────────────────────

    /// Record a constant input tensor (no gradient flows out of it).
    pub fn input(&mut self, t: DenseTensor) -> Result<Value> {
        self.push(Op::Leaf, vec![], t)
    }

    /// Record a parameter leaf; backward will accumulate into its gradient.
    /// Parameter values are kept finite at their mutation sites ([`Params::add`],
    /// the optimizer), so the leaf itself is recorded without a rescan.
    pub fn param(&mut self, ps: &Params, id: ParamId) -> Result<Value> {
        let v = self.push_unchecked(Op::Leaf, vec![], ps.value(id).clone());
        self.bindings.push((v.0, id));
        Ok(v)
    }

    // ── Primitives ───────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        self.check(a, "matmul")?;
        self.check(b, "matmul")?;
        let out = kernels::matmul(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        self.push(Op::MatMul, vec![a.0, b.0], out)
    }

    /// Batched matmul; a batch dimension of 1 broadcasts over the other.
    pub fn bmm(&mut self, a: Value, b: Value) -> Result<Value> {
        self.check(a, "bmm")?;
        self.check(b, "bmm")?;
        let out = kernels::bmm(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        self.push(Op::Bmm, vec![a.0, b.0], out)
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        self.check(a, "add")?;
        self.check(b, "add")?;
        let out = kernels::broadcast_zip("add", &self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y)?;
        self.push(Op::Add, vec![a.0, b.0], out)
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        self.check(a, "mul")?;
        self.check(b, "mul")?;
        let out = kernels::broadcast_zip("mul", &self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y)?;
        self.push(Op::Mul, vec![a.0, b.0], out)
    }

    pub fn scale(&mut self, a: Value, c: f64) -> Result<Value> {
        self.check(a, "scale")?;
        let out = self.nodes[a.0].value.map(|v| v * c);
        self.push(Op::Scale(c), vec![a.0], out)
    }

    pub fn relu(&mut self, a: Value) -> Result<Value> {
        self.check(a, "relu")?;
        let out = self.nodes[a.0].value.map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu, vec![a.0], out)
    }

    pub fn softmax_last(&mut self, a: Value) -> Result<Value> {
        self.check(a, "softmax")?;
        let out = kernels::softmax_last(&self.nodes[a.0].value)?;
        self.push(Op::SoftmaxLast, vec![a.0], out)
    }

    pub fn concat(&mut self, axis: usize, parts: &[Value]) -> Result<Value> {
        for &p in parts {
            self.check(p, "concat")?;
        }
        let tensors: Vec<&DenseTensor> = parts.iter().map(|&p| &self.nodes[p.0].value).collect();
        let out = kernels::concat(axis, &tensors)?;
        self.push(Op::Concat { axis }, parts.iter().map(|p| p.0).collect(), out)
    }

    pub fn slice(&mut self, a: Value, axis: usize, start: usize, len: usize) -> Result<Value> {
        self.check(a, "slice")?;
        let out = kernels::slice_axis(&self.nodes[a.0].value, axis, start, len)?;
        self.push(Op::Slice { axis, start }, vec![a.0], out)
    }

    /// Split along an axis into equal parts (inverse of [`Graph::concat`]).
    pub fn split(&mut self, a: Value, axis: usize, parts: usize) -> Result<Vec<Value>> {
        self.check(a, "split")?;
        let dim = self.nodes[a.0].value.shape().get(axis).copied().ok_or_else(|| {
            Error::invalid("split", format!("axis {axis} out of range"))
        })?;
        if parts == 0 || dim % parts != 0 {
            return Err(Error::invalid("split", format!("axis size {dim} not divisible into {parts} parts")));
        }
        let step = dim / parts;
        (0..parts).map(|i| self.slice(a, axis, i * step, step)).collect()
    }

    pub fn mean_axes(&mut self, a: Value, axes: &[usize]) -> Result<Value> {
        self.check(a, "mean")?;
        let axes = normalize_axes(axes)?;
        let out = kernels::reduce_axes(&self.nodes[a.0].value, &axes, true)?;
        self.push(Op::MeanAxes { axes }, vec![a.0], out)
    }

    pub fn sum_axes(&mut self, a: Value, axes: &[usize]) -> Result<Value> {
        self.check(a, "sum")?;
        let axes = normalize_axes(axes)?;
        let out = kernels::reduce_axes(&self.nodes[a.0].value, &axes, false)?;
        self.push(Op::SumAxes { axes }, vec![a.0], out)
    }

    pub fn reshape(&mut self, a: Value, shape: &[usize]) -> Result<Value> {
        self.check(a, "reshape")?;
        let out = self.nodes[a.0].value.reshape(shape)?;
        self.push(Op::Reshape, vec![a.0], out)
    }

    pub fn permute(&mut self, a: Value, perm: &[usize]) -> Result<Value> {
        self.check(a, "permute")?;
        let out = kernels::permute(&self.nodes[a.0].value, perm)?;
        self.push(Op::Permute { perm: perm.to_vec() }, vec![a.0], out)
    }

    /// Same-padded 1-D convolution along the middle axis:
    /// x `[B,T,Cin]`, w `[k,Cin,Cout]` -> `[B,ceil(T/stride),Cout]`.
    pub fn conv1d(&mut self, x: Value, w: Value, stride: usize, dilation: usize) -> Result<Value> {
        self.check(x, "conv1d")?;
        self.check(w, "conv1d")?;
        let out = kernels::conv1d(&self.nodes[x.0].value, &self.nodes[w.0].value, stride, dilation)?;
        self.push(Op::Conv1d { stride, dilation }, vec![x.0, w.0], out)
    }

    pub fn layer_norm_last(&mut self, a: Value, eps: f64) -> Result<Value> {
        self.check(a, "layer_norm")?;
        let out = kernels::layer_norm_last(&self.nodes[a.0].value, eps)?;
        self.push(Op::LayerNormLast { eps }, vec![a.0], out)
    }

    /// `-log softmax(logits)[label]` as a scalar node.
    pub fn cross_entropy(&mut self, logits: Value, label: usize) -> Result<Value> {
        self.check(logits, "cross_entropy")?;
        let loss = kernels::cross_entropy(&self.nodes[logits.0].value, label)?;
        self.push(Op::CrossEntropy { label }, vec![logits.0], DenseTensor::scalar(loss))
    }

    /// Affine map helper: `x·w + b` (b broadcasts over rows).
    pub fn affine(&mut self, x: Value, w: Value, b: Value) -> Result<Value> {
        let h = self.matmul(x, w)?;
        self.add(h, b)
    }

    /// Sparse-convolution apply: features `[P_in,Cin]`, weights `[O,Cin,Cout]`,
    /// contributions given by `plan`. Output is `[plan.n_out, Cout]`.
    pub fn rule_apply(&mut self, feats: Value, weights: Value, plan: Arc<RulePlan>) -> Result<Value> {
        self.check(feats, "sparse_conv")?;
        self.check(weights, "sparse_conv")?;
        let f = &self.nodes[feats.0].value;
        let w = &self.nodes[weights.0].value;
        if f.rank() != 2 || w.rank() != 3 || f.shape()[1] != w.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "sparse_conv",
                lhs: f.shape().to_vec(),
                rhs: w.shape().to_vec(),
            });
        }
        let (cin, cout) = (w.shape()[1], w.shape()[2]);
        let mut out = vec![0.0; plan.n_out * cout];
        for r in &plan.rules {
            let frow = &f.data()[r.inp as usize * cin..][..cin];
            let wmat = &w.data()[r.weight as usize * cin * cout..][..cin * cout];
            let orow = &mut out[r.out as usize * cout..][..cout];
            for ci in 0..cin {
                let fv = frow[ci];
                if fv == 0.0 {
                    continue;
                }
                let wrow = &wmat[ci * cout..][..cout];
                for co in 0..cout {
                    orow[co] += fv * wrow[co];
                }
            }
        }
        let out = DenseTensor::new(vec![plan.n_out, cout], out)?;
        self.push(Op::RuleApply { plan }, vec![feats.0, weights.0], out)
    }

    /// Sparse max-pool apply: per output row, elementwise max over the plan's
    /// member input rows. Ties resolve to the earliest member.
    pub fn group_max(&mut self, feats: Value, plan: Arc<PoolPlan>) -> Result<Value> {
        self.check(feats, "sparse_max_pool")?;
        let f = &self.nodes[feats.0].value;
        if f.rank() != 2 {
            return Err(Error::invalid("sparse_max_pool", format!("features must be 2-D, got {:?}", f.shape())));
        }
        let c = f.shape()[1];
        let n_out = plan.n_out();
        let mut out = vec![f64::NEG_INFINITY; n_out * c];
        let mut argmax = vec![0u32; n_out * c];
        for i in 0..n_out {
            let members = &plan.members[plan.starts[i] as usize..plan.starts[i + 1] as usize];
            if members.is_empty() {
                return Err(Error::invalid("sparse_max_pool", format!("output row {i} has no members")));
            }
            for &m in members {
                let frow = &f.data()[m as usize * c..][..c];
                for ch in 0..c {
                    if frow[ch] > out[i * c + ch] {
                        out[i * c + ch] = frow[ch];
                        argmax[i * c + ch] = m;
                    }
                }
            }
        }
        let out = DenseTensor::new(vec![n_out, c], out)?;
        self.push(Op::GroupMax { argmax }, vec![feats.0], out)
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse accumulation from a scalar loss into all bound parameters.
    pub fn backward(&mut self, loss: Value, ps: &mut Params) -> Result<()> {
        self.check(loss, "backward")?;
        if self.backward_spent {
            return Err(Error::Graph("second backward without a new forward".into()));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Graph(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<DenseTensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(DenseTensor::new(
            self.nodes[loss.0].value.shape().to_vec(),
            vec![1.0],
        )?);

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let (inputs, input_grads) = {
                let node = &self.nodes[i];
                let input_vals: Vec<&DenseTensor> =
                    node.inputs.iter().map(|&j| &self.nodes[j].value).collect();
                let gs = self.node_backward(&node.op, &input_vals, &node.value, &dy);
                (node.inputs.clone(), gs)
            };
            for (j, g) in inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                match &mut grads[*j] {
                    Some(acc) => {
                        for (d, &s) in acc.data_mut().iter_mut().zip(g.data()) {
                            *d += s;
                        }
                    }
                    slot => *slot = Some(g),
                }
            }
            // leaves keep their gradient for parameter binding below
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(dy);
            }
        }

        for &(node, pid) in &self.bindings {
            if let Some(g) = &grads[node] {
                ps.accumulate_grad(pid, g);
            }
        }
        self.backward_spent = true;
        Ok(())
    }

    /// Per-op input gradients; `None` entries mean no gradient flows there.
    fn node_backward(
        &self,
        op: &Op,
        inputs: &[&DenseTensor],
        out: &DenseTensor,
        dy: &DenseTensor,
    ) -> Vec<Option<DenseTensor>> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let bt = kernels::permute(b, &[1, 0]).expect("transpose");
                let at = kernels::permute(a, &[1, 0]).expect("transpose");
                let da = kernels::matmul(dy, &bt).expect("matmul backward A");
                let db = kernels::matmul(&at, dy).expect("matmul backward B");
                vec![Some(da), Some(db)]
            }
            Op::Bmm => {
                let (a, b) = (inputs[0], inputs[1]);
                let bt = kernels::permute(b, &[0, 2, 1]).expect("transpose");
                let at = kernels::permute(a, &[0, 2, 1]).expect("transpose");
                let da_full = kernels::bmm(dy, &bt).expect("bmm backward A");
                let db_full = kernels::bmm(&at, dy).expect("bmm backward B");
                let da = kernels::reduce_to_shape(&da_full, a.shape());
                let db = kernels::reduce_to_shape(&db_full, b.shape());
                vec![Some(da), Some(db)]
            }
            Op::Add => {
                let da = kernels::reduce_to_shape(dy, inputs[0].shape());
                let db = kernels::reduce_to_shape(dy, inputs[1].shape());
                vec![Some(da), Some(db)]
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let da_full = kernels::broadcast_zip("mul", dy, b, |g, y| g * y).expect("mul backward");
                let db_full = kernels::broadcast_zip("mul", dy, a, |g, x| g * x).expect("mul backward");
                vec![
                    Some(kernels::reduce_to_shape(&da_full, a.shape())),
                    Some(kernels::reduce_to_shape(&db_full, b.shape())),
                ]
            }
            Op::Scale(c) => vec![Some(dy.map(|v| v * c))],
            Op::Relu => {
                let x = inputs[0];
                let d = x
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
                    .collect();
                vec![Some(DenseTensor::new(x.shape().to_vec(), d).expect("relu backward"))]
            }
            Op::SoftmaxLast => vec![Some(kernels::softmax_last_backward(out, dy))],
            Op::Concat { axis } => {
                let mut start = 0;
                inputs
                    .iter()
                    .map(|inp| {
                        let len = inp.shape()[*axis];
                        let g = kernels::slice_axis(dy, *axis, start, len).expect("concat backward");
                        start += len;
                        Some(g)
                    })
                    .collect()
            }
            Op::Slice { axis, start } => {
                vec![Some(kernels::slice_axis_backward(dy, inputs[0].shape(), *axis, *start))]
            }
            Op::MeanAxes { axes } => {
                vec![Some(kernels::reduce_axes_backward(dy, inputs[0].shape(), axes, true))]
            }
            Op::SumAxes { axes } => {
                vec![Some(kernels::reduce_axes_backward(dy, inputs[0].shape(), axes, false))]
            }
            Op::Reshape => {
                vec![Some(dy.reshape(inputs[0].shape()).expect("reshape backward"))]
            }
            Op::Permute { perm } => {
                let inv = kernels::invert_perm(perm);
                vec![Some(kernels::permute(dy, &inv).expect("permute backward"))]
            }
            Op::Conv1d { stride, dilation } => {
                let (dx, dw) = kernels::conv1d_backward(inputs[0], inputs[1], dy, *stride, *dilation);
                vec![Some(dx), Some(dw)]
            }
            Op::LayerNormLast { eps } => {
                vec![Some(kernels::layer_norm_last_backward(inputs[0], dy, *eps))]
            }
            Op::CrossEntropy { label } => {
                let up = dy.data()[0];
                vec![Some(kernels::cross_entropy_backward(inputs[0], *label, up))]
            }
            Op::RuleApply { plan } => {
                let (f, w) = (inputs[0], inputs[1]);
                let (cin, cout) = (w.shape()[1], w.shape()[2]);
                let mut df = vec![0.0; f.len()];
                let mut dw = vec![0.0; w.len()];
                for r in &plan.rules {
                    let dyrow = &dy.data()[r.out as usize * cout..][..cout];
                    let frow = &f.data()[r.inp as usize * cin..][..cin];
                    let wmat = &w.data()[r.weight as usize * cin * cout..][..cin * cout];
                    let dfrow = &mut df[r.inp as usize * cin..][..cin];
                    let dwmat = &mut dw[r.weight as usize * cin * cout..][..cin * cout];
                    for ci in 0..cin {
                        let mut acc = 0.0;
                        for co in 0..cout {
                            let g = dyrow[co];
                            acc += wmat[ci * cout + co] * g;
                            dwmat[ci * cout + co] += frow[ci] * g;
                        }
                        dfrow[ci] += acc;
                    }
                }
                vec![
                    Some(DenseTensor::new(f.shape().to_vec(), df).expect("sparse conv df")),
                    Some(DenseTensor::new(w.shape().to_vec(), dw).expect("sparse conv dw")),
                ]
            }
            Op::GroupMax { argmax, .. } => {
                let f = inputs[0];
                let c = f.shape()[1];
                let mut df = vec![0.0; f.len()];
                for (flat, &src) in argmax.iter().enumerate() {
                    let ch = flat % c;
                    df[src as usize * c + ch] += dy.data()[flat];
                }
                vec![Some(DenseTensor::new(f.shape().to_vec(), df).expect("pool backward"))]
            }
        }
    }
}

fn normalize_axes(axes: &[usize]) -> Result<Vec<usize>> {
    let mut axes = axes.to_vec();
    axes.sort_unstable();
    axes.dedup();
    if axes.is_empty() {
        return Err(Error::invalid("reduce", "no axes given"));
    }
    Ok(axes)
}
