//! Dense numeric kernels behind the graph primitives.
//!
//! Forward kernels return fresh tensors; backward kernels accumulate into
//! caller-provided gradient buffers. All loops are sequential and in fixed
//! order so repeated evaluation is bit-identical.

use crate::error::{Error, Result};
use crate::tensor::{broadcast_shape, next_index, strides_of, DenseTensor};

pub(crate) fn matmul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    DenseTensor::new(vec![m, n], out)
}

/// Batched matmul `[Ba,M,K] x [Bb,K,N]`; a batch of size 1 broadcasts.
pub(crate) fn bmm(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.rank() != 3 || b.rank() != 3 || a.shape()[2] != b.shape()[1] {
        return Err(Error::ShapeMismatch {
            op: "bmm",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (ba, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let (bb, n) = (b.shape()[0], b.shape()[2]);
    if ba != bb && ba != 1 && bb != 1 {
        return Err(Error::ShapeMismatch {
            op: "bmm",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let batch = ba.max(bb);
    let mut out = vec![0.0; batch * m * n];
    for t in 0..batch {
        let ao = if ba == 1 { 0 } else { t * m * k };
        let bo = if bb == 1 { 0 } else { t * k * n };
        let oo = t * m * n;
        for i in 0..m {
            for p in 0..k {
                let av = a.data()[ao + i * k + p];
                if av == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[oo + i * n + j] += av * b.data()[bo + p * n + j];
                }
            }
        }
    }
    DenseTensor::new(vec![batch, m, n], out)
}

/// Elementwise binary op with numpy-style broadcasting.
pub(crate) fn broadcast_zip(
    op: &'static str,
    a: &DenseTensor,
    b: &DenseTensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<DenseTensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return DenseTensor::new(a.shape().to_vec(), data);
    }
    let out_shape = broadcast_shape(a.shape(), b.shape()).map_err(|_| Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    })?;
    let n: usize = out_shape.iter().product();
    let mut out = vec![0.0; n];
    let sa = bcast_strides(a.shape(), &out_shape);
    let sb = bcast_strides(b.shape(), &out_shape);
    let mut idx = vec![0usize; out_shape.len()];
    for o in out.iter_mut() {
        let (mut oa, mut ob) = (0usize, 0usize);
        for (d, &i) in idx.iter().enumerate() {
            oa += i * sa[d];
            ob += i * sb[d];
        }
        *o = f(a.data()[oa], b.data()[ob]);
        next_index(&mut idx, &out_shape);
    }
    DenseTensor::new(out_shape, out)
}

/// Strides of `shape` viewed inside `out_shape` (0 on broadcast axes).
fn bcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let st = strides_of(shape);
    let offset = out_shape.len() - shape.len();
    let mut r = vec![0usize; out_shape.len()];
    for d in 0..shape.len() {
        r[offset + d] = if shape[d] == 1 && out_shape[offset + d] != 1 { 0 } else { st[d] };
    }
    r
}

/// Sum `grad` (shaped like the broadcast result) back down to `target` shape.
pub(crate) fn reduce_to_shape(grad: &DenseTensor, target: &[usize]) -> DenseTensor {
    if grad.shape() == target {
        return grad.clone();
    }
    let n: usize = target.iter().product();
    let mut out = vec![0.0; n];
    let st = bcast_strides(target, grad.shape());
    let mut idx = vec![0usize; grad.rank()];
    for &g in grad.data() {
        let mut off = 0;
        for (d, &i) in idx.iter().enumerate() {
            off += i * st[d];
        }
        out[off] += g;
        next_index(&mut idx, grad.shape());
    }
    DenseTensor::new(target.to_vec(), out).expect("reduce_to_shape is shape-consistent")
}

/// Softmax over the last axis; rows are independent and numerically stabilized.
pub(crate) fn softmax_last(x: &DenseTensor) -> Result<DenseTensor> {
    if x.rank() == 0 {
        return Err(Error::invalid("softmax", "rank-0 input has no last axis"));
    }
    let cols = *x.shape().last().unwrap();
    if cols == 0 {
        return Err(Error::invalid("softmax", "empty last axis"));
    }
    let rows = x.len() / cols;
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        let row = &x.data()[r * cols..(r + 1) * cols];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            let e = (v - m).exp();
            *o = e;
            sum += e;
        }
        for o in &mut out[r * cols..(r + 1) * cols] {
            *o /= sum;
        }
    }
    DenseTensor::new(x.shape().to_vec(), out)
}

/// dX for softmax given the forward output `y` and upstream `dy`.
pub(crate) fn softmax_last_backward(y: &DenseTensor, dy: &DenseTensor) -> DenseTensor {
    let cols = *y.shape().last().unwrap();
    let rows = y.len() / cols;
    let mut dx = vec![0.0; y.len()];
    for r in 0..rows {
        let ys = &y.data()[r * cols..(r + 1) * cols];
        let dys = &dy.data()[r * cols..(r + 1) * cols];
        let dot: f64 = ys.iter().zip(dys).map(|(&a, &b)| a * b).sum();
        for c in 0..cols {
            dx[r * cols + c] = ys[c] * (dys[c] - dot);
        }
    }
    DenseTensor::new(y.shape().to_vec(), dx).expect("softmax backward shape")
}

/// Geometry of a same-padded 1-D convolution along the middle axis of
/// `[B, T, C]`: output length `ceil(T/stride)` and the left pad that centers
/// the kernel footprint.
pub(crate) fn conv1d_geometry(t: usize, k: usize, stride: usize, dilation: usize) -> (usize, usize) {
    let t_out = t.div_ceil(stride);
    let span = (k - 1) * dilation + 1;
    let needed = (t_out - 1) * stride + span;
    let pad_total = needed.saturating_sub(t);
    (t_out, pad_total / 2)
}

/// 1-D convolution: x `[B,T,Cin]`, w `[k,Cin,Cout]` -> `[B,T_out,Cout]`,
/// zero-padded ("same") with the given stride and dilation.
pub(crate) fn conv1d(
    x: &DenseTensor,
    w: &DenseTensor,
    stride: usize,
    dilation: usize,
) -> Result<DenseTensor> {
    if x.rank() != 3 || w.rank() != 3 || x.shape()[2] != w.shape()[1] {
        return Err(Error::ShapeMismatch {
            op: "conv1d",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    if stride == 0 || dilation == 0 {
        return Err(Error::invalid("conv1d", "stride and dilation must be >= 1"));
    }
    let (b, t, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, cout) = (w.shape()[0], w.shape()[2]);
    let (t_out, pad_left) = conv1d_geometry(t, k, stride, dilation);
    let mut out = vec![0.0; b * t_out * cout];
    for bi in 0..b {
        for to in 0..t_out {
            for i in 0..k {
                let ti = (to * stride + i * dilation) as i64 - pad_left as i64;
                if ti < 0 || ti >= t as i64 {
                    continue;
                }
                let xrow = &x.data()[(bi * t + ti as usize) * cin..][..cin];
                let orow = &mut out[(bi * t_out + to) * cout..][..cout];
                for ci in 0..cin {
                    let xv = xrow[ci];
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &w.data()[(i * cin + ci) * cout..][..cout];
                    for co in 0..cout {
                        orow[co] += xv * wrow[co];
                    }
                }
            }
        }
    }
    DenseTensor::new(vec![b, t_out, cout], out)
}

/// Gradients of [`conv1d`] w.r.t. input and weights.
pub(crate) fn conv1d_backward(
    x: &DenseTensor,
    w: &DenseTensor,
    dy: &DenseTensor,
    stride: usize,
    dilation: usize,
) -> (DenseTensor, DenseTensor) {
    let (b, t, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, cout) = (w.shape()[0], w.shape()[2]);
    let (t_out, pad_left) = conv1d_geometry(t, k, stride, dilation);
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    for bi in 0..b {
        for to in 0..t_out {
            let dyrow = &dy.data()[(bi * t_out + to) * cout..][..cout];
            for i in 0..k {
                let ti = (to * stride + i * dilation) as i64 - pad_left as i64;
                if ti < 0 || ti >= t as i64 {
                    continue;
                }
                let xoff = (bi * t + ti as usize) * cin;
                for ci in 0..cin {
                    let woff = (i * cin + ci) * cout;
                    let mut acc = 0.0;
                    for co in 0..cout {
                        let g = dyrow[co];
                        acc += w.data()[woff + co] * g;
                        dw[woff + co] += x.data()[xoff + ci] * g;
                    }
                    dx[xoff + ci] += acc;
                }
            }
        }
    }
    (
        DenseTensor::new(x.shape().to_vec(), dx).expect("conv1d dx shape"),
        DenseTensor::new(w.shape().to_vec(), dw).expect("conv1d dw shape"),
    )
}

/// Reduce over `axes` (sorted, unique); result drops those axes.
pub(crate) fn reduce_axes(x: &DenseTensor, axes: &[usize], mean: bool) -> Result<DenseTensor> {
    for &ax in axes {
        if ax >= x.rank() {
            return Err(Error::invalid("reduce", format!("axis {} out of range for rank {}", ax, x.rank())));
        }
    }
    let out_shape: Vec<usize> = x
        .shape()
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect();
    let count: usize = axes.iter().map(|&a| x.shape()[a]).product();
    let n_out: usize = out_shape.iter().product();
    let mut out = vec![0.0; n_out];
    let ost = strides_of(&out_shape);
    // stride of each input axis inside the output (0 if reduced)
    let mut axis_stride = vec![0usize; x.rank()];
    let mut oi = 0;
    for d in 0..x.rank() {
        if !axes.contains(&d) {
            axis_stride[d] = ost[oi];
            oi += 1;
        }
    }
    let mut idx = vec![0usize; x.rank()];
    for &v in x.data() {
        let mut off = 0;
        for (d, &i) in idx.iter().enumerate() {
            off += i * axis_stride[d];
        }
        out[off] += v;
        next_index(&mut idx, x.shape());
    }
    if mean {
        let c = count as f64;
        for o in &mut out {
            *o /= c;
        }
    }
    DenseTensor::new(out_shape, out)
}

/// Broadcast a reduced gradient back over the reduced axes.
pub(crate) fn reduce_axes_backward(
    dy: &DenseTensor,
    in_shape: &[usize],
    axes: &[usize],
    mean: bool,
) -> DenseTensor {
    let count: usize = axes.iter().map(|&a| in_shape[a]).product();
    let scale = if mean { 1.0 / count as f64 } else { 1.0 };
    let n: usize = in_shape.iter().product();
    let mut dx = vec![0.0; n];
    let ost = strides_of(dy.shape());
    let mut axis_stride = vec![0usize; in_shape.len()];
    let mut oi = 0;
    for d in 0..in_shape.len() {
        if !axes.contains(&d) {
            axis_stride[d] = ost[oi];
            oi += 1;
        }
    }
    let mut idx = vec![0usize; in_shape.len()];
    for d in dx.iter_mut() {
        let mut off = 0;
        for (dim, &i) in idx.iter().enumerate() {
            off += i * axis_stride[dim];
        }
        *d = dy.data()[off] * scale;
        next_index(&mut idx, in_shape);
    }
    DenseTensor::new(in_shape.to_vec(), dx).expect("reduce backward shape")
}

pub(crate) fn permute(x: &DenseTensor, perm: &[usize]) -> Result<DenseTensor> {
    if perm.len() != x.rank() {
        return Err(Error::invalid("permute", format!("perm {:?} vs rank {}", perm, x.rank())));
    }
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(Error::invalid("permute", format!("invalid permutation {:?}", perm)));
        }
        seen[p] = true;
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let ist = x.strides();
    let mut out = vec![0.0; x.len()];
    let mut idx = vec![0usize; out_shape.len()];
    for o in out.iter_mut() {
        let mut off = 0;
        for (d, &i) in idx.iter().enumerate() {
            off += i * ist[perm[d]];
        }
        *o = x.data()[off];
        next_index(&mut idx, &out_shape);
    }
    DenseTensor::new(out_shape, out)
}

pub(crate) fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub(crate) fn concat(axis: usize, parts: &[&DenseTensor]) -> Result<DenseTensor> {
    let first = parts.first().ok_or_else(|| Error::invalid("concat", "no inputs"))?;
    if axis >= first.rank() {
        return Err(Error::invalid("concat", format!("axis {} out of range", axis)));
    }
    let mut out_shape = first.shape().to_vec();
    for p in &parts[1..] {
        if p.rank() != first.rank() {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        for d in 0..first.rank() {
            if d != axis && p.shape()[d] != first.shape()[d] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        out_shape[axis] += p.shape()[axis];
    }
    // blocks: outer = product of dims before axis, inner = product after
    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let mut out = vec![0.0; out_shape.iter().product()];
    let total_axis = out_shape[axis];
    let mut axis_off = 0;
    for p in parts {
        let pa = p.shape()[axis];
        for o in 0..outer {
            let src = &p.data()[o * pa * inner..(o + 1) * pa * inner];
            let dst_start = (o * total_axis + axis_off) * inner;
            out[dst_start..dst_start + pa * inner].copy_from_slice(src);
        }
        axis_off += pa;
    }
    DenseTensor::new(out_shape, out)
}

pub(crate) fn slice_axis(x: &DenseTensor, axis: usize, start: usize, len: usize) -> Result<DenseTensor> {
    if axis >= x.rank() || start + len > x.shape()[axis] {
        return Err(Error::invalid(
            "slice",
            format!("range {}..{} on axis {} of shape {:?}", start, start + len, axis, x.shape()),
        ));
    }
    let mut out_shape = x.shape().to_vec();
    out_shape[axis] = len;
    let outer: usize = x.shape()[..axis].iter().product();
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let total_axis = x.shape()[axis];
    let mut out = vec![0.0; out_shape.iter().product()];
    for o in 0..outer {
        let src_start = (o * total_axis + start) * inner;
        out[o * len * inner..(o + 1) * len * inner]
            .copy_from_slice(&x.data()[src_start..src_start + len * inner]);
    }
    DenseTensor::new(out_shape, out)
}

/// Scatter a slice gradient back into a zero tensor of the input shape.
pub(crate) fn slice_axis_backward(
    dy: &DenseTensor,
    in_shape: &[usize],
    axis: usize,
    start: usize,
) -> DenseTensor {
    let len = dy.shape()[axis];
    let outer: usize = in_shape[..axis].iter().product();
    let inner: usize = in_shape[axis + 1..].iter().product();
    let total_axis = in_shape[axis];
    let mut dx = vec![0.0; in_shape.iter().product()];
    for o in 0..outer {
        let dst_start = (o * total_axis + start) * inner;
        dx[dst_start..dst_start + len * inner]
            .copy_from_slice(&dy.data()[o * len * inner..(o + 1) * len * inner]);
    }
    DenseTensor::new(in_shape.to_vec(), dx).expect("slice backward shape")
}

/// Layer normalization over the last axis (no learned affine inside).
pub(crate) fn layer_norm_last(x: &DenseTensor, eps: f64) -> Result<DenseTensor> {
    if x.rank() == 0 {
        return Err(Error::invalid("layer_norm", "rank-0 input"));
    }
    let cols = *x.shape().last().unwrap();
    let rows = x.len() / cols;
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        let row = &x.data()[r * cols..(r + 1) * cols];
        let mu = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for c in 0..cols {
            out[r * cols + c] = (row[c] - mu) * inv;
        }
    }
    DenseTensor::new(x.shape().to_vec(), out)
}

pub(crate) fn layer_norm_last_backward(x: &DenseTensor, dy: &DenseTensor, eps: f64) -> DenseTensor {
    let cols = *x.shape().last().unwrap();
    let rows = x.len() / cols;
    let mut dx = vec![0.0; x.len()];
    for r in 0..rows {
        let row = &x.data()[r * cols..(r + 1) * cols];
        let dys = &dy.data()[r * cols..(r + 1) * cols];
        let mu = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
        let inv = 1.0 / (var + eps).sqrt();
        let xhat: Vec<f64> = row.iter().map(|&v| (v - mu) * inv).collect();
        let mean_dy = dys.iter().sum::<f64>() / cols as f64;
        let mean_dy_xhat = dys.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<f64>() / cols as f64;
        for c in 0..cols {
            dx[r * cols + c] = inv * (dys[c] - mean_dy - xhat[c] * mean_dy_xhat);
        }
    }
    DenseTensor::new(x.shape().to_vec(), dx).expect("layer_norm backward shape")
}

/// `-log softmax(logits)[label]` for a 1-D logit vector.
pub(crate) fn cross_entropy(logits: &DenseTensor, label: usize) -> Result<f64> {
    if logits.rank() != 1 {
        return Err(Error::invalid("cross_entropy", format!("logits must be 1-D, got {:?}", logits.shape())));
    }
    let k = logits.len();
    if label >= k {
        return Err(Error::invalid("cross_entropy", format!("label {} out of range [0,{})", label, k)));
    }
    let m = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.data().iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    Ok(lse - logits.data()[label])
}

pub(crate) fn cross_entropy_backward(logits: &DenseTensor, label: usize, upstream: f64) -> DenseTensor {
    let probs = softmax_last(logits).expect("softmax of finite logits");
    let mut d = probs.into_data();
    d[label] -= 1.0;
    for v in &mut d {
        *v *= upstream;
    }
    DenseTensor::from_vec(d)
}
