//! Spatial-perspective network over voxelized skeletons.
//!
//! Two block families share one sparse-convolution engine:
//! - SPA-3+1D: a spatial-only conv (k,k,k,1) followed by per-branch
//!   pointwise maps and temporal convs (1,1,1,k_t) at the branch dilations —
//!   frames never mix in the spatial stage;
//! - SPA-4D: per-branch full (k,k,k,k_t) convs with the branch's temporal
//!   dilation, mixing space and time in one step.
//!
//! Blocks end with concat -> relu -> residual (pointwise-projected when
//! channels or stride change). Coordinate sets shrink only via the spatial
//! stride; stride-1 stages preserve them exactly, so per-sample convolution
//! plans are built once and reused across epochs.

use std::collections::HashMap;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, Params, Value};
use crate::data::voxel::VoxelConfig;
use crate::error::{Error, Result};
use crate::sem::glorot;
use crate::sparse::{plan_conv, sparse_conv_g, ConvPlan, KernelOffsets, SparseTensor4D, SparseValue};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaVariant {
    #[serde(rename = "3+1d", alias = "3p1d")]
    Spa3p1d,
    #[serde(rename = "4d")]
    Spa4d,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SpaBlockConfig {
    pub variant: SpaVariant,
    pub c_out: usize,
    /// Spatial kernel side k.
    pub k: usize,
    /// Temporal kernel size k_t.
    pub kernel_t: usize,
    /// Spatial stride (applied to x, y, z; t keeps its resolution).
    pub stride: usize,
    pub branches: usize,
    pub dilations: Vec<usize>,
}

impl SpaBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.kernel_t == 0 || self.stride == 0 {
            return Err(Error::invalid("spa_block", "kernel sizes and stride must be >= 1"));
        }
        if self.branches == 0 || self.c_out % self.branches != 0 {
            return Err(Error::invalid(
                "spa_block",
                format!("c_out {} not divisible into {} branches", self.c_out, self.branches),
            ));
        }
        if self.dilations.len() != self.branches || self.dilations.iter().any(|&d| d == 0) {
            return Err(Error::invalid("spa_block", "need one dilation >= 1 per branch"));
        }
        Ok(())
    }
}

/// Per-sample cache of convolution plans, keyed by (block, stage). Voxel
/// coordinates are fixed per sample, so plans survive across epochs.
#[derive(Debug, Clone, Default)]
pub struct PlanCache {
    plans: HashMap<(usize, usize), ConvPlan>,
}

impl PlanCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get_or_build(&mut self, key: (usize, usize), build: impl FnOnce() -> ConvPlan) -> &ConvPlan {
        self.plans.entry(key).or_insert_with(build)
    }
}

/// One SPA block. Weight layout is the sparse engine's offset enumeration,
/// so a 4-D conv configured with a factorized kernel shape reproduces the
/// 3+1D stages exactly.
#[derive(Debug, Clone)]
pub struct SpaBlock {
    pub cfg: SpaBlockConfig,
    pub c_in: usize,
    // 3+1D stages
    spatial: Option<(ParamId, ParamId)>,
    point: Vec<(ParamId, ParamId)>,
    temporal: Vec<(ParamId, ParamId)>,
    // 4D branch convs
    branch4d: Vec<(ParamId, ParamId)>,
    res_proj: Option<(ParamId, ParamId)>,
    spatial_offsets: KernelOffsets,
    temporal_offsets: Vec<KernelOffsets>,
    branch_offsets: Vec<KernelOffsets>,
    res_offsets: KernelOffsets,
}

fn conv_weights(rng: &mut ChaCha8Rng, offsets: &KernelOffsets, c_in: usize, c_out: usize) -> DenseTensor {
    glorot(rng, offsets.len() * c_in, c_out)
        .reshape(&[offsets.len(), c_in, c_out])
        .expect("conv weight shape")
}

impl SpaBlock {
    pub fn new(
        ps: &mut Params,
        prefix: &str,
        c_in: usize,
        cfg: SpaBlockConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let cb = cfg.c_out / cfg.branches;
        let spatial_offsets = KernelOffsets::new([cfg.k, cfg.k, cfg.k, 1], [1; 4])?;
        let temporal_offsets: Vec<KernelOffsets> = cfg
            .dilations
            .iter()
            .map(|&d| KernelOffsets::new([1, 1, 1, cfg.kernel_t], [1, 1, 1, d]))
            .collect::<Result<_>>()?;
        let branch_offsets: Vec<KernelOffsets> = cfg
            .dilations
            .iter()
            .map(|&d| KernelOffsets::new([cfg.k, cfg.k, cfg.k, cfg.kernel_t], [1, 1, 1, d]))
            .collect::<Result<_>>()?;
        // residual projection kernel covers the full stride window so every
        // output voxel sees its preimage
        let rk = if cfg.stride == 1 { 1 } else { cfg.stride };
        let res_offsets = KernelOffsets::new([rk, rk, rk, 1], [1; 4])?;

        let mut spatial = None;
        let mut point = Vec::new();
        let mut temporal = Vec::new();
        let mut branch4d = Vec::new();
        match cfg.variant {
            SpaVariant::Spa3p1d => {
                spatial = Some((
                    ps.add(format!("{prefix}.spatial.w"), conv_weights(rng, &spatial_offsets, c_in, cfg.c_out)),
                    ps.add(format!("{prefix}.spatial.b"), DenseTensor::zeros(&[cfg.c_out])),
                ));
                for b in 0..cfg.branches {
                    point.push((
                        ps.add(format!("{prefix}.branch{b}.point.w"), glorot(rng, cfg.c_out, cb)),
                        ps.add(format!("{prefix}.branch{b}.point.b"), DenseTensor::zeros(&[cb])),
                    ));
                    temporal.push((
                        ps.add(
                            format!("{prefix}.branch{b}.temporal.w"),
                            conv_weights(rng, &temporal_offsets[b], cb, cb),
                        ),
                        ps.add(format!("{prefix}.branch{b}.temporal.b"), DenseTensor::zeros(&[cb])),
                    ));
                }
            }
            SpaVariant::Spa4d => {
                for b in 0..cfg.branches {
                    branch4d.push((
                        ps.add(
                            format!("{prefix}.branch{b}.conv.w"),
                            conv_weights(rng, &branch_offsets[b], c_in, cb),
                        ),
                        ps.add(format!("{prefix}.branch{b}.conv.b"), DenseTensor::zeros(&[cb])),
                    ));
                }
            }
        }
        let res_proj = if cfg.stride != 1 || cfg.c_out != c_in {
            Some((
                ps.add(format!("{prefix}.res.w"), conv_weights(rng, &res_offsets, c_in, cfg.c_out)),
                ps.add(format!("{prefix}.res.b"), DenseTensor::zeros(&[cfg.c_out])),
            ))
        } else {
            None
        };
        Ok(Self {
            cfg,
            c_in,
            spatial,
            point,
            temporal,
            branch4d,
            res_proj,
            spatial_offsets,
            temporal_offsets,
            branch_offsets,
            res_offsets,
        })
    }

    /// Number of weight values in the main conv stages (bias excluded).
    pub fn conv_param_count(&self) -> usize {
        let cb = self.cfg.c_out / self.cfg.branches;
        match self.cfg.variant {
            SpaVariant::Spa3p1d => {
                self.spatial_offsets.len() * self.c_in * self.cfg.c_out
                    + self
                        .temporal_offsets
                        .iter()
                        .map(|o| o.len() * cb * cb)
                        .sum::<usize>()
                    + self.cfg.branches * self.cfg.c_out * cb
            }
            SpaVariant::Spa4d => {
                self.branch_offsets.iter().map(|o| o.len() * self.c_in * cb).sum::<usize>()
            }
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        ps: &Params,
        x: &SparseValue,
        cache: &mut PlanCache,
        block_idx: usize,
    ) -> Result<SparseValue> {
        if g.value(x.feats).shape()[1] != self.c_in {
            return Err(Error::ShapeMismatch {
                op: "spa_block",
                lhs: vec![self.c_in],
                rhs: g.value(x.feats).shape().to_vec(),
            });
        }
        let stride4 = [self.cfg.stride, self.cfg.stride, self.cfg.stride, 1];
        let body = match self.cfg.variant {
            SpaVariant::Spa3p1d => {
                let (sw, sb) = self.spatial.as_ref().expect("3+1d block has spatial conv");
                let plan = cache
                    .get_or_build((block_idx, 0), || plan_conv(&x.coords, &self.spatial_offsets, stride4))
                    .clone();
                let wv = g.param(ps, *sw)?;
                let bv = g.param(ps, *sb)?;
                let h = sparse_conv_g(g, x, wv, Some(bv), &plan)?;
                let mut branch_feats = Vec::with_capacity(self.cfg.branches);
                for b in 0..self.cfg.branches {
                    let (pw, pb) = self.point[b];
                    let pwv = g.param(ps, pw)?;
                    let pbv = g.param(ps, pb)?;
                    let p = g.affine(h.feats, pwv, pbv)?;
                    let pv = SparseValue { coords: h.coords.clone(), feats: p };
                    let tplan = cache
                        .get_or_build((block_idx, 1 + b), || {
                            plan_conv(&h.coords, &self.temporal_offsets[b], [1; 4])
                        })
                        .clone();
                    let (tw, tb) = self.temporal[b];
                    let twv = g.param(ps, tw)?;
                    let tbv = g.param(ps, tb)?;
                    let t = sparse_conv_g(g, &pv, twv, Some(tbv), &tplan)?;
                    branch_feats.push(t.feats);
                }
                let cat = g.concat(1, &branch_feats)?;
                SparseValue { coords: h.coords, feats: cat }
            }
            SpaVariant::Spa4d => {
                let mut branch_feats = Vec::with_capacity(self.cfg.branches);
                let mut out_coords = None;
                for b in 0..self.cfg.branches {
                    let plan = cache
                        .get_or_build((block_idx, 1 + b), || {
                            plan_conv(&x.coords, &self.branch_offsets[b], stride4)
                        })
                        .clone();
                    let (bw, bb) = self.branch4d[b];
                    let wv = g.param(ps, bw)?;
                    let bv = g.param(ps, bb)?;
                    let t = sparse_conv_g(g, x, wv, Some(bv), &plan)?;
                    out_coords.get_or_insert(t.coords.clone());
                    branch_feats.push(t.feats);
                }
                let cat = g.concat(1, &branch_feats)?;
                SparseValue { coords: out_coords.expect("at least one branch"), feats: cat }
            }
        };
        let activated = g.relu(body.feats)?;

        let residual = match &self.res_proj {
            None => x.feats,
            Some((rw, rb)) => {
                let plan = cache
                    .get_or_build((block_idx, usize::MAX / 2), || {
                        plan_conv(&x.coords, &self.res_offsets, stride4)
                    })
                    .clone();
                if plan.out_coords != *body.coords {
                    return Err(Error::Graph(
                        "spa_block: residual and body coordinate sets diverged".into(),
                    ));
                }
                let wv = g.param(ps, *rw)?;
                let bv = g.param(ps, *rb)?;
                sparse_conv_g(g, x, wv, Some(bv), &plan)?.feats
            }
        };
        let sum = g.add(activated, residual)?;
        Ok(SparseValue { coords: body.coords, feats: sum })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SpaNetConfig {
    /// Feature width of voxel input (= joint count of the topology).
    pub c_in: usize,
    pub classes: usize,
    pub voxel: VoxelConfig,
    pub blocks: Vec<SpaBlockConfig>,
}

/// Stack of SPA blocks with global average pooling over active points and a
/// fully-connected head.
#[derive(Debug, Clone)]
pub struct SpaNet {
    pub cfg: SpaNetConfig,
    blocks: Vec<SpaBlock>,
    fc_w: ParamId,
    fc_b: ParamId,
}

/// Per-block wall-clock and active-point count from a timed forward pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockTiming {
    pub block: usize,
    pub millis: f64,
    pub active_points: usize,
}

impl SpaNet {
    pub fn new(ps: &mut Params, cfg: SpaNetConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.classes == 0 || cfg.blocks.is_empty() {
            return Err(Error::invalid("spa_net", "need classes >= 1 and at least one block"));
        }
        let mut blocks = Vec::with_capacity(cfg.blocks.len());
        let mut c_in = cfg.c_in;
        for (i, bc) in cfg.blocks.iter().enumerate() {
            let block = SpaBlock::new(ps, &format!("spa.block{i}"), c_in, bc.clone(), rng)?;
            c_in = bc.c_out;
            blocks.push(block);
        }
        let fc_w = ps.add("spa.fc.w", glorot(rng, c_in, cfg.classes));
        let fc_b = ps.add("spa.fc.b", DenseTensor::zeros(&[cfg.classes]));
        Ok(Self { cfg, blocks, fc_w, fc_b })
    }

    pub fn blocks(&self) -> &[SpaBlock] {
        &self.blocks
    }

    /// Forward to `[K]` logits. `cache` must be the sample's own plan cache.
    pub fn forward(
        &self,
        g: &mut Graph,
        ps: &Params,
        x: &SparseTensor4D,
        cache: &mut PlanCache,
    ) -> Result<Value> {
        self.forward_traced(g, ps, x, cache, &mut |_, _, _| {})
    }

    /// Forward with a per-block observer (used for activation dumps/timing).
    pub fn forward_traced(
        &self,
        g: &mut Graph,
        ps: &Params,
        x: &SparseTensor4D,
        cache: &mut PlanCache,
        observe: &mut dyn FnMut(usize, &Graph, &SparseValue),
    ) -> Result<Value> {
        if x.num_points() == 0 {
            return Err(Error::data("spa_net: empty voxelization"));
        }
        let mut h = SparseValue::from_tensor(g, x)?;
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(g, ps, &h, cache, i)?;
            observe(i, g, &h);
        }
        let pooled = g.mean_axes(h.feats, &[0])?;
        let c = g.value(pooled).shape()[0];
        let row = g.reshape(pooled, &[1, c])?;
        let w = g.param(ps, self.fc_w)?;
        let b = g.param(ps, self.fc_b)?;
        let logits = g.affine(row, w, b)?;
        g.reshape(logits, &[self.cfg.classes])
    }

    /// Forward keeping each block's sparse output as plain data.
    pub fn forward_collect(
        &self,
        g: &mut Graph,
        ps: &Params,
        x: &SparseTensor4D,
        cache: &mut PlanCache,
    ) -> Result<(Value, Vec<SparseTensor4D>)> {
        let mut snaps = Vec::with_capacity(self.blocks.len());
        let logits = self.forward_traced(g, ps, x, cache, &mut |_, g, h| {
            let feats = g.value(h.feats).clone();
            snaps.push(SparseTensor4D::new(h.coords.as_ref().clone(), feats).expect("snapshot"));
        })?;
        Ok((logits, snaps))
    }

    /// Forward with per-block wall-clock timing.
    pub fn forward_timed(
        &self,
        g: &mut Graph,
        ps: &Params,
        x: &SparseTensor4D,
        cache: &mut PlanCache,
    ) -> Result<(Value, Vec<BlockTiming>)> {
        let mut timings = Vec::with_capacity(self.blocks.len());
        let mut last = Instant::now();
        let logits = self.forward_traced(g, ps, x, cache, &mut |i, _, h| {
            let now = Instant::now();
            timings.push(BlockTiming {
                block: i,
                millis: now.duration_since(last).as_secs_f64() * 1e3,
                active_points: h.num_points(),
            });
            last = now;
        })?;
        Ok((logits, timings))
    }
}

/// CSV of per-point activation magnitudes: `block,x,y,z,t,magnitude` with
/// the L2 norm of each feature row.
pub fn activation_csv(per_block: &[SparseTensor4D]) -> String {
    let mut out = String::from("block,x,y,z,t,magnitude\n");
    for (b, sp) in per_block.iter().enumerate() {
        let c = sp.feature_width();
        for (i, coord) in sp.coords().iter().enumerate() {
            let norm: f64 = sp.feats().data()[i * c..(i + 1) * c].iter().map(|v| v * v).sum::<f64>().sqrt();
            out.push_str(&format!("{b},{},{},{},{},{norm}\n", coord[0], coord[1], coord[2], coord[3]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::coalesce;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_cloud(r: &mut ChaCha8Rng, n: usize, c: usize, grid: i32, t: i32) -> SparseTensor4D {
        let coords: Vec<[i32; 4]> = (0..n)
            .map(|_| {
                [
                    r.gen_range(0..grid),
                    r.gen_range(0..grid),
                    r.gen_range(0..grid),
                    r.gen_range(0..t),
                ]
            })
            .collect();
        let feats: Vec<f64> = (0..coords.len() * c).map(|_| r.gen_range(-1.0..1.0)).collect();
        coalesce(coords, DenseTensor::new(vec![n, c], feats).unwrap()).unwrap()
    }

    fn block_cfg(variant: SpaVariant, c_out: usize, stride: usize) -> SpaBlockConfig {
        SpaBlockConfig {
            variant,
            c_out,
            k: 3,
            kernel_t: 3,
            stride,
            branches: 2,
            dilations: vec![1, 2],
        }
    }

    #[test]
    fn stride_one_block_preserves_coordinates() {
        for variant in [SpaVariant::Spa3p1d, SpaVariant::Spa4d] {
            let mut ps = Params::new();
            let mut r = rng(1);
            let block = SpaBlock::new(&mut ps, "b", 3, block_cfg(variant, 4, 1), &mut r).unwrap();
            let x = random_cloud(&mut r, 10, 3, 6, 4);
            let mut g = Graph::new();
            let xv = SparseValue::from_tensor(&mut g, &x).unwrap();
            let mut cache = PlanCache::new();
            let y = block.forward(&mut g, &ps, &xv, &mut cache, 0).unwrap();
            assert_eq!(y.coords.as_ref(), &x.coords().to_vec());
        }
    }

    #[test]
    fn spatial_stage_never_mixes_frames() {
        // zeroing all frames but one leaves that frame's spatial output rows
        // unchanged
        let mut ps = Params::new();
        let mut r = rng(2);
        let cfg = block_cfg(SpaVariant::Spa3p1d, 4, 1);
        let block = SpaBlock::new(&mut ps, "b", 2, cfg, &mut r).unwrap();
        let x = random_cloud(&mut r, 12, 2, 5, 3);
        let keep_t = 1;

        let spatial_out = |input: &SparseTensor4D| -> DenseTensor {
            let mut g = Graph::new();
            let xv = SparseValue::from_tensor(&mut g, input).unwrap();
            let plan = plan_conv(&xv.coords, &block.spatial_offsets, [1; 4]);
            let (sw, sb) = block.spatial.as_ref().unwrap();
            let wv = g.param(&ps, *sw).unwrap();
            let bv = g.param(&ps, *sb).unwrap();
            let h = sparse_conv_g(&mut g, &xv, wv, Some(bv), &plan).unwrap();
            g.value(h.feats).clone()
        };

        let full = spatial_out(&x);
        // zero every other frame's features
        let c = x.feature_width();
        let mut masked = x.feats().clone();
        for (i, coord) in x.coords().iter().enumerate() {
            if coord[3] != keep_t {
                for ch in 0..c {
                    masked.data_mut()[i * c + ch] = 0.0;
                }
            }
        }
        let xm = x.with_feats(masked).unwrap();
        let part = spatial_out(&xm);
        for (i, coord) in x.coords().iter().enumerate() {
            if coord[3] == keep_t {
                for ch in 0..4 {
                    assert_eq!(
                        full.data()[i * 4 + ch].to_bits(),
                        part.data()[i * 4 + ch].to_bits(),
                        "row {i} changed"
                    );
                }
            }
        }
    }

    #[test]
    fn temporal_identity_weights_make_temporal_stage_identity() {
        let mut ps = Params::new();
        let mut r = rng(3);
        let cfg = SpaBlockConfig {
            variant: SpaVariant::Spa3p1d,
            c_out: 4,
            k: 3,
            kernel_t: 3,
            stride: 1,
            branches: 2,
            dilations: vec![1, 3],
        };
        let block = SpaBlock::new(&mut ps, "b", 3, cfg, &mut r).unwrap();
        let cb = 2;
        // pointwise maps select channel groups, temporal kernels center-identity
        for b in 0..2 {
            let mut pw = DenseTensor::zeros(&[4, cb]);
            for i in 0..cb {
                pw.set(&[b * cb + i, i], 1.0);
            }
            ps.set_value(block.point[b].0, pw);
            let offs = &block.temporal_offsets[b];
            let center = offs.offsets().iter().position(|o| o == &[0, 0, 0, 0]).unwrap();
            let mut tw = DenseTensor::zeros(&[offs.len(), cb, cb]);
            for i in 0..cb {
                tw.set(&[center, i, i], 1.0);
            }
            ps.set_value(block.temporal[b].0, tw);
        }
        let x = random_cloud(&mut r, 8, 3, 5, 4);
        // run just the branch stages on the spatial output
        let mut g = Graph::new();
        let xv = SparseValue::from_tensor(&mut g, &x).unwrap();
        let mut cache = PlanCache::new();
        let plan = plan_conv(&xv.coords, &block.spatial_offsets, [1; 4]);
        let (sw, sb) = block.spatial.as_ref().unwrap();
        let wv = g.param(&ps, *sw).unwrap();
        let bv = g.param(&ps, *sb).unwrap();
        let h = sparse_conv_g(&mut g, &xv, wv, Some(bv), &plan).unwrap();
        // full block with these weights: branches reproduce h's channels
        let y = block.forward(&mut g, &ps, &xv, &mut cache, 0).unwrap();
        // block output = relu(h) + residual-free input? residual is c_in 3 != 4 ->
        // projected; just check the concat stage reproduced h before relu by
        // checking y - proj(x) == relu(h)
        let hv = g.value(h.feats).clone();
        let relu_h = hv.map(|v| if v > 0.0 { v } else { 0.0 });
        let rplan = plan_conv(&xv.coords, &block.res_offsets, [1; 4]);
        let (rw, rb) = block.res_proj.as_ref().unwrap();
        let rwv = g.param(&ps, *rw).unwrap();
        let rbv = g.param(&ps, *rb).unwrap();
        let proj = sparse_conv_g(&mut g, &xv, rwv, Some(rbv), &rplan).unwrap();
        for i in 0..g.value(y.feats).len() {
            let want = relu_h.data()[i] + g.value(proj.feats).data()[i];
            assert!((g.value(y.feats).data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn spa_4d_pointwise_kernel_is_linear_map() {
        let mut ps = Params::new();
        let mut r = rng(4);
        let cfg = SpaBlockConfig {
            variant: SpaVariant::Spa4d,
            c_out: 4,
            k: 1,
            kernel_t: 1,
            stride: 1,
            branches: 1,
            dilations: vec![1],
        };
        let block = SpaBlock::new(&mut ps, "b", 2, cfg, &mut r).unwrap();
        let x = random_cloud(&mut r, 6, 2, 4, 3);
        let mut g = Graph::new();
        let xv = SparseValue::from_tensor(&mut g, &x).unwrap();
        let mut cache = PlanCache::new();
        let y = block.forward(&mut g, &ps, &xv, &mut cache, 0).unwrap();
        // manual: relu(x W0 + b) + proj(x)
        let w = ps.value(block.branch4d[0].0).reshape(&[2, 4]).unwrap();
        let xw = g.input(w).unwrap();
        let lin = g.matmul(xv.feats, xw).unwrap();
        let bias = g.param(&ps, block.branch4d[0].1).unwrap();
        let lin = g.add(lin, bias).unwrap();
        let act = g.relu(lin).unwrap();
        let rplan = plan_conv(&xv.coords, &block.res_offsets, [1; 4]);
        let (rw, rb) = block.res_proj.as_ref().unwrap();
        let rwv = g.param(&ps, *rw).unwrap();
        let rbv = g.param(&ps, *rb).unwrap();
        let proj = sparse_conv_g(&mut g, &xv, rwv, Some(rbv), &rplan).unwrap();
        let want = g.add(act, proj.feats).unwrap();
        for (a, b) in g.value(y.feats).data().iter().zip(g.value(want).data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn four_d_block_has_more_conv_params_than_3p1d() {
        let mut ps = Params::new();
        let mut r = rng(5);
        let mk = |variant, ps: &mut Params, r: &mut ChaCha8Rng| {
            SpaBlock::new(
                ps,
                match variant {
                    SpaVariant::Spa3p1d => "a",
                    SpaVariant::Spa4d => "b",
                },
                8,
                SpaBlockConfig {
                    variant,
                    c_out: 8,
                    k: 3,
                    kernel_t: 3,
                    stride: 1,
                    branches: 1,
                    dilations: vec![1],
                },
                r,
            )
            .unwrap()
        };
        let b3 = mk(SpaVariant::Spa3p1d, &mut ps, &mut r);
        let b4 = mk(SpaVariant::Spa4d, &mut ps, &mut r);
        // k^3·k_t·C_in·C_out vs (k^3 + ...)·C_in·C_out
        assert_eq!(b4.conv_param_count(), 27 * 3 * 8 * 8);
        assert!(b4.conv_param_count() > b3.conv_param_count());
    }

    #[test]
    fn spa_net_rejects_empty_input() {
        let mut ps = Params::new();
        let mut r = rng(6);
        let cfg = SpaNetConfig {
            c_in: 2,
            classes: 3,
            voxel: VoxelConfig { space_size: 8, temporal_len: 4 },
            blocks: vec![block_cfg(SpaVariant::Spa4d, 4, 1)],
        };
        let net = SpaNet::new(&mut ps, cfg, &mut r).unwrap();
        let empty = SparseTensor4D::new(vec![], DenseTensor::zeros(&[0, 2])).unwrap();
        let mut g = Graph::new();
        let mut cache = PlanCache::new();
        let err = net.forward(&mut g, &ps, &empty, &mut cache).unwrap_err();
        assert!(err.to_string().contains("empty voxelization"), "{err}");
    }

    #[test]
    fn spa_net_probability_vector_and_point_order_invariance() {
        let mut ps = Params::new();
        let mut r = rng(7);
        let cfg = SpaNetConfig {
            c_in: 3,
            classes: 3,
            voxel: VoxelConfig { space_size: 8, temporal_len: 4 },
            blocks: vec![block_cfg(SpaVariant::Spa4d, 4, 2), block_cfg(SpaVariant::Spa3p1d, 6, 1)],
        };
        let net = SpaNet::new(&mut ps, cfg, &mut r).unwrap();
        let x = random_cloud(&mut r, 12, 3, 6, 4);
        let mut g = Graph::new();
        let mut cache = PlanCache::new();
        let logits = net.forward(&mut g, &ps, &x, &mut cache).unwrap();
        let probs = g.softmax_last(logits).unwrap();
        let s: f64 = g.value(probs).data().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);

        // feeding rows in another storage order coalesces to the same tensor
        let mut rev_coords: Vec<[i32; 4]> = x.coords().to_vec();
        rev_coords.reverse();
        let c = x.feature_width();
        let mut rev_feats = Vec::with_capacity(x.feats().len());
        for i in (0..x.num_points()).rev() {
            rev_feats.extend_from_slice(&x.feats().data()[i * c..(i + 1) * c]);
        }
        let x2 = coalesce(rev_coords, DenseTensor::new(vec![x.num_points(), c], rev_feats).unwrap())
            .unwrap();
        let mut g2 = Graph::new();
        let mut cache2 = PlanCache::new();
        let logits2 = net.forward(&mut g2, &ps, &x2, &mut cache2).unwrap();
        for (a, b) in g.value(logits).data().iter().zip(g2.value(logits2).data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn activation_csv_and_timing_shapes() {
        let mut ps = Params::new();
        let mut r = rng(8);
        let cfg = SpaNetConfig {
            c_in: 2,
            classes: 2,
            voxel: VoxelConfig { space_size: 8, temporal_len: 4 },
            blocks: vec![block_cfg(SpaVariant::Spa3p1d, 4, 1)],
        };
        let net = SpaNet::new(&mut ps, cfg, &mut r).unwrap();
        let x = random_cloud(&mut r, 7, 2, 5, 3);
        let mut g = Graph::new();
        let mut cache = PlanCache::new();
        let (_, snaps) = net.forward_collect(&mut g, &ps, &x, &mut cache).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].num_points(), x.num_points());
        let csv = activation_csv(&snaps);
        assert_eq!(csv.trim().lines().count(), 1 + x.num_points());
        // magnitudes match independent recomputation
        let c = snaps[0].feature_width();
        for (i, line) in csv.trim().lines().skip(1).enumerate() {
            let norm: f64 = snaps[0].feats().data()[i * c..(i + 1) * c]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let got: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!((got - norm).abs() < 1e-12);
        }

        let mut g2 = Graph::new();
        let mut cache2 = PlanCache::new();
        let (_, timings) = net.forward_timed(&mut g2, &ps, &x, &mut cache2).unwrap();
        assert_eq!(timings.len(), 1);
        assert_eq!(timings[0].active_points, x.num_points());
    }
}
