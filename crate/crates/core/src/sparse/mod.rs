//! Generalized sparse convolution over 4-D integer coordinates.
//!
//! A [`SparseTensor4D`] pairs a coordinate matrix (columns x, y, z, t) with a
//! feature matrix, one row per occupied cell. Convolution and max-pooling
//! walk an exact-match coordinate index: for every output point and kernel
//! offset, the (at most one) input point at that relative position
//! contributes through the offset's weight slice. Missing neighbors
//! contribute nothing.
//!
//! All operators emit rows in lexicographic coordinate order so repeated runs
//! and permuted inputs compare bitwise.

pub mod oracle;

use std::collections::HashMap;
use std::sync::Arc;

use crate::autodiff::{Graph, PoolPlan, Rule, RulePlan, Value};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub type Coord = [i32; 4];

/// Coordinate matrix R and feature matrix F; rows correspond index-wise.
/// After construction rows are coalesced: coordinates are distinct and
/// lexicographically sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor4D {
    coords: Vec<Coord>,
    feats: DenseTensor,
}

impl SparseTensor4D {
    /// Coalesce raw rows (duplicates merge by feature summation) and sort.
    pub fn new(coords: Vec<Coord>, feats: DenseTensor) -> Result<Self> {
        coalesce(coords, feats)
    }

    /// Wrap rows already known to be sorted and distinct (internal fast path).
    fn from_coalesced(coords: Vec<Coord>, feats: DenseTensor) -> Self {
        debug_assert!(coords.windows(2).all(|w| w[0] < w[1]), "rows must be sorted and distinct");
        debug_assert_eq!(feats.shape()[0], coords.len());
        Self { coords, feats }
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn feats(&self) -> &DenseTensor {
        &self.feats
    }

    pub fn num_points(&self) -> usize {
        self.coords.len()
    }

    pub fn feature_width(&self) -> usize {
        if self.feats.rank() == 2 {
            self.feats.shape()[1]
        } else {
            0
        }
    }

    /// Replace features, keeping coordinates (row counts must agree).
    pub fn with_feats(&self, feats: DenseTensor) -> Result<Self> {
        if feats.rank() != 2 || feats.shape()[0] != self.coords.len() {
            return Err(Error::ShapeMismatch {
                op: "sparse_tensor",
                lhs: vec![self.coords.len()],
                rhs: feats.shape().to_vec(),
            });
        }
        Ok(Self { coords: self.coords.clone(), feats })
    }

    /// Debug dump: one `x,y,z,t,f_0..f_{C-1}` line per point.
    pub fn to_csv(&self) -> String {
        let c = self.feature_width();
        let mut out = String::from("x,y,z,t");
        for i in 0..c {
            out.push_str(&format!(",f{i}"));
        }
        out.push('\n');
        for (i, coord) in self.coords.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}", coord[0], coord[1], coord[2], coord[3]));
            for j in 0..c {
                out.push_str(&format!(",{}", self.feats.data()[i * c + j]));
            }
            out.push('\n');
        }
        out
    }
}

/// Merge duplicate coordinates by feature summation; output rows sorted
/// lexicographically. Members of a duplicate group are summed in
/// feature-lexicographic order so any input row permutation produces a
/// bitwise-identical result.
pub fn coalesce(coords: Vec<Coord>, feats: DenseTensor) -> Result<SparseTensor4D> {
    if feats.rank() != 2 || feats.shape()[0] != coords.len() {
        return Err(Error::ShapeMismatch {
            op: "coalesce",
            lhs: vec![coords.len()],
            rhs: feats.shape().to_vec(),
        });
    }
    if !feats.all_finite() {
        return Err(Error::NonFinite { op: "coalesce" });
    }
    let c = feats.shape()[1];
    let mut order: Vec<usize> = (0..coords.len()).collect();
    let frow = |i: usize| &feats.data()[i * c..(i + 1) * c];
    order.sort_by(|&a, &b| {
        coords[a].cmp(&coords[b]).then_with(|| {
            frow(a)
                .iter()
                .zip(frow(b))
                .map(|(x, y)| x.partial_cmp(y).expect("finite features"))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut out_coords: Vec<Coord> = Vec::new();
    let mut out_feats: Vec<f64> = Vec::new();
    for &i in &order {
        if out_coords.last() == Some(&coords[i]) {
            let base = out_feats.len() - c;
            for (d, &s) in out_feats[base..].iter_mut().zip(frow(i)) {
                *d += s;
            }
        } else {
            out_coords.push(coords[i]);
            out_feats.extend_from_slice(frow(i));
        }
    }
    let n = out_coords.len();
    Ok(SparseTensor4D::from_coalesced(out_coords, DenseTensor::new(vec![n, c], out_feats)?))
}

// ── Kernel offsets ───────────────────────────────────────────────────────

/// Enumerated kernel offsets with their flat weight indices.
///
/// The offset vector stored at weight index `w` is the relative position
/// `R(center) - R(neighbor)`: the neighbor probed for weight `w` sits at
/// `center - offset[w]`. Odd kernel sizes center at 0
/// (`{-(k/2)..k/2} * dilation`); even sizes use `{-k/2..k/2-1} * dilation`.
#[derive(Debug, Clone)]
pub struct KernelOffsets {
    sizes: [usize; 4],
    dilations: [usize; 4],
    offsets: Vec<Coord>,
}

impl KernelOffsets {
    pub fn new(sizes: [usize; 4], dilations: [usize; 4]) -> Result<Self> {
        if sizes.iter().any(|&k| k == 0) || dilations.iter().any(|&d| d == 0) {
            return Err(Error::invalid("kernel_offsets", "kernel sizes and dilations must be >= 1"));
        }
        let axis_range = |k: usize, d: usize| -> Vec<i32> {
            let half = (k / 2) as i32;
            let lo = -half;
            let hi = if k % 2 == 1 { half } else { half - 1 };
            (lo..=hi).map(|v| v * d as i32).collect()
        };
        let rx = axis_range(sizes[0], dilations[0]);
        let ry = axis_range(sizes[1], dilations[1]);
        let rz = axis_range(sizes[2], dilations[2]);
        let rt = axis_range(sizes[3], dilations[3]);
        let mut offsets = Vec::with_capacity(sizes.iter().product());
        for &ox in &rx {
            for &oy in &ry {
                for &oz in &rz {
                    for &ot in &rt {
                        offsets.push([ox, oy, oz, ot]);
                    }
                }
            }
        }
        Ok(Self { sizes, dilations, offsets })
    }

    /// Spatial cube `k^3` with a temporal extent `k_t` at temporal dilation `d_t`.
    pub fn spatial_temporal(k: usize, k_t: usize, d_t: usize) -> Result<Self> {
        Self::new([k, k, k, k_t], [1, 1, 1, d_t])
    }

    pub fn sizes(&self) -> [usize; 4] {
        self.sizes
    }

    pub fn dilations(&self) -> [usize; 4] {
        self.dilations
    }

    pub fn offsets(&self) -> &[Coord] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

// ── Parameters ───────────────────────────────────────────────────────────

/// Weights `[num_offsets, C_in, C_out]` (index 0 pairs with `offsets()[0]`),
/// optional bias, and a per-dimension stride.
#[derive(Debug, Clone)]
pub struct SparseConvParams {
    pub weights: DenseTensor,
    pub bias: Option<DenseTensor>,
    pub stride: [usize; 4],
}

impl SparseConvParams {
    pub fn validate(&self, offsets: &KernelOffsets, c_in: usize) -> Result<()> {
        if self.weights.rank() != 3
            || self.weights.shape()[0] != offsets.len()
            || self.weights.shape()[1] != c_in
        {
            return Err(Error::ShapeMismatch {
                op: "sparse_conv",
                lhs: vec![offsets.len(), c_in],
                rhs: self.weights.shape().to_vec(),
            });
        }
        if let Some(b) = &self.bias {
            if b.shape() != [self.weights.shape()[2]] {
                return Err(Error::ShapeMismatch {
                    op: "sparse_conv",
                    lhs: vec![self.weights.shape()[2]],
                    rhs: b.shape().to_vec(),
                });
            }
        }
        if self.stride.iter().any(|&s| s == 0) {
            return Err(Error::invalid("sparse_conv", "stride must be >= 1"));
        }
        Ok(())
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[2]
    }
}

// ── Plans ────────────────────────────────────────────────────────────────

/// Output coordinates plus the gather/scatter table that computes them.
#[derive(Debug, Clone)]
pub struct ConvPlan {
    pub out_coords: Vec<Coord>,
    pub rules: Arc<RulePlan>,
}

/// Output coordinates plus neighbor membership for max-pooling.
#[derive(Debug, Clone)]
pub struct MaxPoolPlan {
    pub out_coords: Vec<Coord>,
    pub groups: Arc<PoolPlan>,
}

fn strided_out_coords(coords: &[Coord], stride: [usize; 4]) -> Vec<Coord> {
    if stride == [1, 1, 1, 1] {
        return coords.to_vec();
    }
    let mut out: Vec<Coord> = coords
        .iter()
        .map(|c| {
            [
                c[0].div_euclid(stride[0] as i32),
                c[1].div_euclid(stride[1] as i32),
                c[2].div_euclid(stride[2] as i32),
                c[3].div_euclid(stride[3] as i32),
            ]
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn coordinate_index(coords: &[Coord]) -> HashMap<Coord, u32> {
    coords.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect()
}

/// Build the rule table for a sparse convolution over the given coordinates.
/// Stride 1 preserves the coordinate set; larger strides emit the distinct
/// floor-divided coordinates. Every output point probes one input per offset.
pub fn plan_conv(coords: &[Coord], offsets: &KernelOffsets, stride: [usize; 4]) -> ConvPlan {
    let out_coords = strided_out_coords(coords, stride);
    let index = coordinate_index(coords);
    let mut rules = Vec::new();
    for (i, oc) in out_coords.iter().enumerate() {
        let center = [
            oc[0] * stride[0] as i32,
            oc[1] * stride[1] as i32,
            oc[2] * stride[2] as i32,
            oc[3] * stride[3] as i32,
        ];
        for (w, off) in offsets.offsets().iter().enumerate() {
            let probe = [center[0] - off[0], center[1] - off[1], center[2] - off[2], center[3] - off[3]];
            if let Some(&j) = index.get(&probe) {
                rules.push(Rule { out: i as u32, weight: w as u32, inp: j });
            }
        }
    }
    ConvPlan {
        rules: Arc::new(RulePlan { n_out: out_coords.len(), rules }),
        out_coords,
    }
}

/// Build the membership table for sparse max-pooling. Output positions with
/// no occupied neighbor in-window are dropped.
pub fn plan_pool(coords: &[Coord], offsets: &KernelOffsets, stride: [usize; 4]) -> MaxPoolPlan {
    let candidates = strided_out_coords(coords, stride);
    let index = coordinate_index(coords);
    let mut out_coords = Vec::new();
    let mut starts: Vec<u32> = vec![0];
    let mut members: Vec<u32> = Vec::new();
    for oc in &candidates {
        let center = [
            oc[0] * stride[0] as i32,
            oc[1] * stride[1] as i32,
            oc[2] * stride[2] as i32,
            oc[3] * stride[3] as i32,
        ];
        let before = members.len();
        for off in offsets.offsets() {
            let probe = [center[0] - off[0], center[1] - off[1], center[2] - off[2], center[3] - off[3]];
            if let Some(&j) = index.get(&probe) {
                members.push(j);
            }
        }
        if members.len() > before {
            out_coords.push(*oc);
            starts.push(members.len() as u32);
        }
    }
    MaxPoolPlan { groups: Arc::new(PoolPlan { starts, members }), out_coords }
}

// ── Pure (non-graph) operators ───────────────────────────────────────────

fn apply_rules(plan: &RulePlan, feats: &DenseTensor, weights: &DenseTensor) -> DenseTensor {
    let (cin, cout) = (weights.shape()[1], weights.shape()[2]);
    let mut out = vec![0.0; plan.n_out * cout];
    for r in &plan.rules {
        let frow = &feats.data()[r.inp as usize * cin..][..cin];
        let wmat = &weights.data()[r.weight as usize * cin * cout..][..cin * cout];
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
    DenseTensor::new(vec![plan.n_out, cout], out).expect("rule apply shape")
}

/// Sparse convolution. Stride-1 output coordinates equal the input's; strided
/// output coordinates are the distinct floor-divisions.
pub fn sparse_conv(
    x: &SparseTensor4D,
    params: &SparseConvParams,
    offsets: &KernelOffsets,
) -> Result<SparseTensor4D> {
    params.validate(offsets, x.feature_width())?;
    let plan = plan_conv(x.coords(), offsets, params.stride);
    let mut feats = apply_rules(&plan.rules, x.feats(), &params.weights);
    if let Some(b) = &params.bias {
        let cout = params.c_out();
        for row in 0..plan.out_coords.len() {
            for (co, &bv) in b.data().iter().enumerate() {
                feats.data_mut()[row * cout + co] += bv;
            }
        }
    }
    if !feats.all_finite() {
        return Err(Error::NonFinite { op: "sparse_conv" });
    }
    Ok(SparseTensor4D::from_coalesced(plan.out_coords, feats))
}

/// Sparse max-pooling: elementwise max over present neighbors.
pub fn sparse_max_pool(
    x: &SparseTensor4D,
    offsets: &KernelOffsets,
    stride: [usize; 4],
) -> Result<SparseTensor4D> {
    if stride.iter().any(|&s| s == 0) {
        return Err(Error::invalid("sparse_max_pool", "stride must be >= 1"));
    }
    let plan = plan_pool(x.coords(), offsets, stride);
    let c = x.feature_width();
    let n_out = plan.out_coords.len();
    let mut out = vec![f64::NEG_INFINITY; n_out * c];
    for i in 0..n_out {
        let members =
            &plan.groups.members[plan.groups.starts[i] as usize..plan.groups.starts[i + 1] as usize];
        for &m in members {
            let frow = &x.feats().data()[m as usize * c..][..c];
            for ch in 0..c {
                if frow[ch] > out[i * c + ch] {
                    out[i * c + ch] = frow[ch];
                }
            }
        }
    }
    Ok(SparseTensor4D::from_coalesced(plan.out_coords, DenseTensor::new(vec![n_out, c], out)?))
}

// ── Graph integration ────────────────────────────────────────────────────

/// A sparse tensor whose features live on the autodiff graph.
#[derive(Clone)]
pub struct SparseValue {
    pub coords: Arc<Vec<Coord>>,
    pub feats: Value,
}

impl SparseValue {
    pub fn from_tensor(g: &mut Graph, x: &SparseTensor4D) -> Result<Self> {
        Ok(Self { coords: Arc::new(x.coords().to_vec()), feats: g.input(x.feats().clone())? })
    }

    pub fn num_points(&self) -> usize {
        self.coords.len()
    }
}

/// Differentiable sparse convolution on the graph; `weights`/`bias` are graph
/// values (usually parameter leaves).
pub fn sparse_conv_g(
    g: &mut Graph,
    x: &SparseValue,
    weights: Value,
    bias: Option<Value>,
    plan: &ConvPlan,
) -> Result<SparseValue> {
    let mut feats = g.rule_apply(x.feats, weights, plan.rules.clone())?;
    if let Some(b) = bias {
        feats = g.add(feats, b)?;
    }
    Ok(SparseValue { coords: Arc::new(plan.out_coords.clone()), feats })
}

/// Differentiable sparse max-pooling on the graph.
pub fn sparse_max_pool_g(g: &mut Graph, x: &SparseValue, plan: &MaxPoolPlan) -> Result<SparseValue> {
    let feats = g.group_max(x.feats, plan.groups.clone())?;
    Ok(SparseValue { coords: Arc::new(plan.out_coords.clone()), feats })
}
