//! Semantic-perspective network.
//!
//! Input is an `[N, T, C]` tensor of joint features. Attention weights can be
//! computed three ways:
//! - unified: one softmax over all T·N positions (cost grows with T²N²C_e);
//! - single-frame: weights and aggregation restricted to each frame;
//! - cross-frame: embeddings are summed over frames before the outer
//!   product, so every frame pair influences the shared N×N weights at
//!   single-frame cost.
//!
//! Global regularization adds a learned joint-pair matrix α̂ and balance
//! scalar β on top of the cross-frame weights. Aggregation always stays
//! within a frame and the full weight sum is scaled by 1/sqrt(C_e) before
//! the softmax.

pub mod flops;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, Params, Value};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Glorot-normal init for a `[rows, cols]` matrix.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseTensor {
    let std = (2.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            // Box-Muller keeps us independent of distribution-crate internals
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    DenseTensor::new(vec![rows, cols], data).expect("init shape")
}

// ── One attention head ───────────────────────────────────────────────────

/// Parameters of one GR-CFSA head: embedding maps f1/f2, the global
/// regularization matrix α̂ and the balance scalar β.
#[derive(Debug, Clone)]
pub struct GrCfsaHead {
    pub f1_w: ParamId,
    pub f1_b: ParamId,
    pub f2_w: ParamId,
    pub f2_b: ParamId,
    pub alpha_hat: ParamId,
    pub beta: ParamId,
    pub n_total: usize,
    pub c_in: usize,
    pub c_e: usize,
}

/// Embedding maps start small: their frame sums enter an outer product, so
/// plain Glorot scale would saturate the softmax before training starts.
const EMBED_INIT_SCALE: f64 = 0.05;

impl GrCfsaHead {
    /// β starts at 1 and α̂ at zero, so training starts exactly at the
    /// unregularized cross-frame model.
    pub fn new(ps: &mut Params, prefix: &str, n_total: usize, c_in: usize, c_e: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut small = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            glorot(rng, rows, cols).map(|v| v * EMBED_INIT_SCALE)
        };
        Self {
            f1_w: ps.add(format!("{prefix}.f1.w"), small(c_in, c_e, rng)),
            f1_b: ps.add(format!("{prefix}.f1.b"), DenseTensor::zeros(&[c_e])),
            f2_w: ps.add(format!("{prefix}.f2.w"), small(c_in, c_e, rng)),
            f2_b: ps.add(format!("{prefix}.f2.b"), DenseTensor::zeros(&[c_e])),
            alpha_hat: ps.add(format!("{prefix}.alpha_hat"), DenseTensor::zeros(&[n_total, n_total])),
            beta: ps.add(format!("{prefix}.beta"), DenseTensor::from_vec(vec![1.0])),
            n_total,
            c_in,
            c_e,
        }
    }

    fn check_input(&self, x: &DenseTensor) -> Result<(usize, usize, usize)> {
        if x.rank() != 3 {
            return Err(Error::invalid("attention", format!("input must be [N,T,C], got {:?}", x.shape())));
        }
        let (n, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if c != self.c_in {
            return Err(Error::ShapeMismatch { op: "attention", lhs: vec![n, t, self.c_in], rhs: x.shape().to_vec() });
        }
        if n != self.n_total {
            return Err(Error::ShapeMismatch {
                op: "attention",
                lhs: vec![self.n_total, t, c],
                rhs: x.shape().to_vec(),
            });
        }
        Ok((n, t, c))
    }
}

/// Apply an embedding map position-wise: `[N,T,C] -> [N,T,C_e]`.
fn embed(g: &mut Graph, ps: &Params, x: Value, w: ParamId, b: ParamId, c_e: usize) -> Result<Value> {
    let shape = g.value(x).shape().to_vec();
    let (n, t, c) = (shape[0], shape[1], shape[2]);
    let flat = g.reshape(x, &[n * t, c])?;
    let wv = g.param(ps, w)?;
    let bv = g.param(ps, b)?;
    let e = g.affine(flat, wv, bv)?;
    g.reshape(e, &[n, t, c_e])
}

/// Unified attention: all T·N positions attend to each other.
pub fn attention_unified(g: &mut Graph, ps: &Params, head: &GrCfsaHead, x: Value) -> Result<Value> {
    let (n, t, c) = head.check_input(g.value(x))?;
    let flat = g.reshape(x, &[n * t, c])?;
    let e1 = {
        let w = g.param(ps, head.f1_w)?;
        let b = g.param(ps, head.f1_b)?;
        g.affine(flat, w, b)?
    };
    let e2 = {
        let w = g.param(ps, head.f2_w)?;
        let b = g.param(ps, head.f2_b)?;
        g.affine(flat, w, b)?
    };
    let e2t = g.permute(e2, &[1, 0])?;
    let alpha = g.matmul(e1, e2t)?;
    let scaled = g.scale(alpha, 1.0 / (head.c_e as f64).sqrt())?;
    let a = g.softmax_last(scaled)?;
    let y = g.matmul(a, flat)?;
    g.reshape(y, &[n, t, c])
}

/// Single-frame attention: weights and aggregation per frame.
pub fn attention_single_frame(g: &mut Graph, ps: &Params, head: &GrCfsaHead, x: Value) -> Result<Value> {
    let (n, t, c) = head.check_input(g.value(x))?;
    let xp = g.permute(x, &[1, 0, 2])?; // [T,N,C]
    let e1 = embed(g, ps, x, head.f1_w, head.f1_b, head.c_e)?;
    let e2 = embed(g, ps, x, head.f2_w, head.f2_b, head.c_e)?;
    let e1p = g.permute(e1, &[1, 0, 2])?; // [T,N,Ce]
    let e2p = g.permute(e2, &[1, 2, 0])?; // [T,Ce,N]
    let alpha = g.bmm(e1p, e2p)?; // [T,N,N]
    let scaled = g.scale(alpha, 1.0 / (head.c_e as f64).sqrt())?;
    let a = g.softmax_last(scaled)?;
    let yp = g.bmm(a, xp)?; // [T,N,C]
    let y = g.permute(yp, &[1, 0, 2])?;
    let _ = (n, t, c);
    Ok(y)
}

/// Cross-frame weights: embeddings summed over frames, then the outer
/// product. Frame-independent `[N, N]`, equal to the explicit double sum
/// over every frame pair.
pub fn attention_cross_frame_weights(
    g: &mut Graph,
    ps: &Params,
    head: &GrCfsaHead,
    x: Value,
) -> Result<Value> {
    head.check_input(g.value(x))?;
    let e1 = embed(g, ps, x, head.f1_w, head.f1_b, head.c_e)?;
    let e2 = embed(g, ps, x, head.f2_w, head.f2_b, head.c_e)?;
    let g1 = g.sum_axes(e1, &[1])?; // [N,Ce]
    let g2 = g.sum_axes(e2, &[1])?;
    let g2t = g.permute(g2, &[1, 0])?;
    g.matmul(g1, g2t)
}

/// Aggregate per frame with one shared `[N, N]` weight matrix:
/// softmax rows over n2, then `y[:, t, :] = A · x[:, t, :]`.
fn aggregate_shared(g: &mut Graph, alpha: Value, x: Value, c_e: usize) -> Result<Value> {
    let n = g.value(alpha).shape()[0];
    let scaled = g.scale(alpha, 1.0 / (c_e as f64).sqrt())?;
    let a = g.softmax_last(scaled)?;
    let a3 = g.reshape(a, &[1, n, n])?;
    let xp = g.permute(x, &[1, 0, 2])?; // [T,N,C]
    let yp = g.bmm(a3, xp)?;
    g.permute(yp, &[1, 0, 2])
}

/// Plain cross-frame attention (no global regularization).
pub fn attention_cross_frame(g: &mut Graph, ps: &Params, head: &GrCfsaHead, x: Value) -> Result<Value> {
    let alpha = attention_cross_frame_weights(g, ps, head, x)?;
    aggregate_shared(g, alpha, x, head.c_e)
}

/// Globally regularized cross-frame attention:
/// weights `β · (Σf1)(Σf2)ᵀ + α̂`, aggregated per frame.
pub fn gr_cfsa_forward(g: &mut Graph, ps: &Params, head: &GrCfsaHead, x: Value) -> Result<Value> {
    let alpha = gr_cfsa_weights(g, ps, head, x)?;
    aggregate_shared(g, alpha, x, head.c_e)
}

/// The pre-softmax GR-CFSA weight matrix `β·ff + α̂`.
pub fn gr_cfsa_weights(g: &mut Graph, ps: &Params, head: &GrCfsaHead, x: Value) -> Result<Value> {
    let ff = attention_cross_frame_weights(g, ps, head, x)?;
    if ps.value(head.alpha_hat).shape() != [head.n_total, head.n_total] {
        return Err(Error::ShapeMismatch {
            op: "gr_cfsa",
            lhs: vec![head.n_total, head.n_total],
            rhs: ps.value(head.alpha_hat).shape().to_vec(),
        });
    }
    let beta = g.param(ps, head.beta)?;
    let scaled_ff = g.mul(ff, beta)?;
    let ah = g.param(ps, head.alpha_hat)?;
    g.add(scaled_ff, ah)
}

/// The softmaxed GR-CFSA attention matrix for one input, as plain data
/// (used by the attention-weight export).
pub fn gr_cfsa_attention_matrix(ps: &Params, head: &GrCfsaHead, x: &DenseTensor) -> Result<DenseTensor> {
    let mut g = Graph::new();
    let xv = g.input(x.clone())?;
    let alpha = gr_cfsa_weights(&mut g, ps, head, xv)?;
    let scaled = g.scale(alpha, 1.0 / (head.c_e as f64).sqrt())?;
    let a = g.softmax_last(scaled)?;
    Ok(g.value(a).clone())
}

// ── Multi-scale temporal feed-forward ────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct MsTffConfig {
    pub c_out: usize,
    pub branches: usize,
    pub kernel_t: usize,
    pub dilations: Vec<usize>,
    pub stride: usize,
}

impl MsTffConfig {
    pub fn validate(&self) -> Result<()> {
        if self.branches == 0 || self.c_out % self.branches != 0 {
            return Err(Error::invalid(
                "ms_tff",
                format!("c_out {} not divisible into {} branches", self.c_out, self.branches),
            ));
        }
        if self.dilations.len() != self.branches {
            return Err(Error::invalid(
                "ms_tff",
                format!("{} dilations for {} branches", self.dilations.len(), self.branches),
            ));
        }
        if self.kernel_t == 0 || self.kernel_t % 2 == 0 {
            return Err(Error::invalid("ms_tff", "kernel_t must be odd and positive"));
        }
        if self.dilations.iter().any(|&d| d == 0) {
            return Err(Error::invalid("ms_tff", "dilations must be >= 1"));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::invalid("ms_tff", "stride must be 1 or 2"));
        }
        Ok(())
    }
}

/// One MS-TFF layer: per branch a pointwise map to `c_out/B` channels then a
/// same-padded temporal convolution at that branch's dilation; branch outputs
/// concatenate back to `c_out` channels.
#[derive(Debug, Clone)]
pub struct MsTff {
    pub cfg: MsTffConfig,
    pub c_in: usize,
    point_w: Vec<ParamId>,
    point_b: Vec<ParamId>,
    temp_w: Vec<ParamId>,
    temp_b: Vec<ParamId>,
}

impl MsTff {
    pub fn new(ps: &mut Params, prefix: &str, c_in: usize, cfg: MsTffConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let cb = cfg.c_out / cfg.branches;
        let mut point_w = Vec::new();
        let mut point_b = Vec::new();
        let mut temp_w = Vec::new();
        let mut temp_b = Vec::new();
        for b in 0..cfg.branches {
            point_w.push(ps.add(format!("{prefix}.branch{b}.point.w"), glorot(rng, c_in, cb)));
            point_b.push(ps.add(format!("{prefix}.branch{b}.point.b"), DenseTensor::zeros(&[cb])));
            let k = glorot(rng, cfg.kernel_t * cb, cb).reshape(&[cfg.kernel_t, cb, cb])?;
            temp_w.push(ps.add(format!("{prefix}.branch{b}.temporal.w"), k));
            temp_b.push(ps.add(format!("{prefix}.branch{b}.temporal.b"), DenseTensor::zeros(&[cb])));
        }
        Ok(Self { cfg, c_in, point_w, point_b, temp_w, temp_b })
    }

    /// `[N,T,C_in] -> [N,ceil(T/stride),C_out]`.
    pub fn forward(&self, g: &mut Graph, ps: &Params, x: Value) -> Result<Value> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 3 || shape[2] != self.c_in {
            return Err(Error::ShapeMismatch {
                op: "ms_tff",
                lhs: vec![self.c_in],
                rhs: shape,
            });
        }
        let (n, t, c) = (shape[0], shape[1], shape[2]);
        let flat = g.reshape(x, &[n * t, c])?;
        let cb = self.cfg.c_out / self.cfg.branches;
        let mut outs = Vec::with_capacity(self.cfg.branches);
        for b in 0..self.cfg.branches {
            let w = g.param(ps, self.point_w[b])?;
            let bias = g.param(ps, self.point_b[b])?;
            let p = g.affine(flat, w, bias)?;
            let p3 = g.reshape(p, &[n, t, cb])?;
            let tw = g.param(ps, self.temp_w[b])?;
            let conv = g.conv1d(p3, tw, self.cfg.stride, self.cfg.dilations[b])?;
            let tb = g.param(ps, self.temp_b[b])?;
            outs.push(g.add(conv, tb)?);
        }
        g.concat(2, &outs)
    }
}

// ── SEM block and net ────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SemBlockConfig {
    pub heads: usize,
    pub c_e: usize,
    pub c_out: usize,
    pub kernel_t: usize,
    pub branches: usize,
    pub dilations: Vec<usize>,
    pub stride: usize,
    /// Insert layer normalization after each residual sum.
    pub normalize: bool,
}

impl SemBlockConfig {
    fn tff(&self) -> MsTffConfig {
        MsTffConfig {
            c_out: self.c_out,
            branches: self.branches,
            kernel_t: self.kernel_t,
            dilations: self.dilations.clone(),
            stride: self.stride,
        }
    }
}

/// S parallel GR-CFSA heads, concatenated and mixed by a linear layer with a
/// residual, then MS-TFF with a (projected) residual.
#[derive(Debug, Clone)]
pub struct SemBlock {
    pub cfg: SemBlockConfig,
    pub c_in: usize,
    heads: Vec<GrCfsaHead>,
    mix_w: ParamId,
    mix_b: ParamId,
    tff: MsTff,
    res_proj: Option<(ParamId, ParamId)>,
}

impl SemBlock {
    pub fn new(
        ps: &mut Params,
        prefix: &str,
        n_total: usize,
        c_in: usize,
        cfg: SemBlockConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if cfg.heads == 0 {
            return Err(Error::invalid("sem_block", "need at least one head"));
        }
        let heads = (0..cfg.heads)
            .map(|h| GrCfsaHead::new(ps, &format!("{prefix}.head{h}"), n_total, c_in, cfg.c_e, rng))
            .collect();
        let mix_w = ps.add(format!("{prefix}.mix.w"), glorot(rng, cfg.heads * c_in, c_in));
        let mix_b = ps.add(format!("{prefix}.mix.b"), DenseTensor::zeros(&[c_in]));
        let tff = MsTff::new(ps, &format!("{prefix}.tff"), c_in, cfg.tff(), rng)?;
        let res_proj = if cfg.stride != 1 || cfg.c_out != c_in {
            let w = glorot(rng, c_in, cfg.c_out).reshape(&[1, c_in, cfg.c_out])?;
            Some((
                ps.add(format!("{prefix}.res.w"), w),
                ps.add(format!("{prefix}.res.b"), DenseTensor::zeros(&[cfg.c_out])),
            ))
        } else {
            None
        };
        Ok(Self { cfg, c_in, heads, mix_w, mix_b, tff, res_proj })
    }

    pub fn forward(&self, g: &mut Graph, ps: &Params, x: Value) -> Result<Value> {
        let shape = g.value(x).shape().to_vec();
        let (n, t) = (shape[0], shape[1]);

        // attention sublayer: concat(S heads) -> linear -> +x
        let mut head_outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            head_outs.push(gr_cfsa_forward(g, ps, head, x)?);
        }
        let cat = g.concat(2, &head_outs)?;
        let flat = g.reshape(cat, &[n * t, self.heads.len() * self.c_in])?;
        let mw = g.param(ps, self.mix_w)?;
        let mb = g.param(ps, self.mix_b)?;
        let mixed = g.affine(flat, mw, mb)?;
        let mixed3 = g.reshape(mixed, &[n, t, self.c_in])?;
        let mut y1 = g.add(x, mixed3)?;
        if self.cfg.normalize {
            y1 = g.layer_norm_last(y1, 1e-5)?;
        }

        // temporal sublayer: MS-TFF -> +residual (projected when shapes change)
        let tff_out = self.tff.forward(g, ps, y1)?;
        let residual = match &self.res_proj {
            None => y1,
            Some((w, b)) => {
                let wv = g.param(ps, *w)?;
                let conv = g.conv1d(y1, wv, self.cfg.stride, 1)?;
                let bv = g.param(ps, *b)?;
                g.add(conv, bv)?
            }
        };
        let mut y2 = g.add(residual, tff_out)?;
        if self.cfg.normalize {
            y2 = g.layer_norm_last(y2, 1e-5)?;
        }
        Ok(y2)
    }

    pub fn heads(&self) -> &[GrCfsaHead] {
        &self.heads
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SemNetConfig {
    pub n_total: usize,
    pub c_in: usize,
    pub classes: usize,
    pub blocks: Vec<SemBlockConfig>,
}

/// Stack of SEM blocks with a global-average-pool + fully-connected head.
#[derive(Debug, Clone)]
pub struct SemNet {
    pub cfg: SemNetConfig,
    blocks: Vec<SemBlock>,
    fc_w: ParamId,
    fc_b: ParamId,
}

impl SemNet {
    pub fn new(ps: &mut Params, cfg: SemNetConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.classes == 0 || cfg.blocks.is_empty() {
            return Err(Error::invalid("sem_net", "need classes >= 1 and at least one block"));
        }
        let mut blocks = Vec::with_capacity(cfg.blocks.len());
        let mut c_in = cfg.c_in;
        for (i, bc) in cfg.blocks.iter().enumerate() {
            let block = SemBlock::new(ps, &format!("sem.block{i}"), cfg.n_total, c_in, bc.clone(), rng)?;
            c_in = bc.c_out;
            blocks.push(block);
        }
        let fc_w = ps.add("sem.fc.w", glorot(rng, c_in, cfg.classes));
        let fc_b = ps.add("sem.fc.b", DenseTensor::zeros(&[cfg.classes]));
        Ok(Self { cfg, blocks, fc_w, fc_b })
    }

    /// `[N,T,C] -> [K]` logits.
    pub fn forward(&self, g: &mut Graph, ps: &Params, x: Value) -> Result<Value> {
        let mut h = x;
        for block in &self.blocks {
            h = block.forward(g, ps, h)?;
        }
        let pooled = g.mean_axes(h, &[0, 1])?; // GAP over joints and frames
        let c = g.value(pooled).shape()[0];
        let row = g.reshape(pooled, &[1, c])?;
        let w = g.param(ps, self.fc_w)?;
        let b = g.param(ps, self.fc_b)?;
        let logits = g.affine(row, w, b)?;
        g.reshape(logits, &[self.cfg.classes])
    }

    pub fn blocks(&self) -> &[SemBlock] {
        &self.blocks
    }
}

/// Build the SEM input tensor `[M_max·N, T, 3]` from a sequence: persons
/// concatenate along the joint axis; absent person-frames stay zero.
pub fn sem_input(seq: &crate::data::SkeletonSequence, m_max: usize) -> Result<DenseTensor> {
    let (m, t, n) = (seq.persons(), seq.frames(), seq.num_joints());
    if m > m_max {
        return Err(Error::data(format!("sample {:?}: {m} persons exceed m_max {m_max}", seq.id)));
    }
    let n_total = m_max * n;
    let mut data = vec![0.0; n_total * t * 3];
    for p in 0..m {
        for f in 0..t {
            if !seq.is_valid(p, f) {
                continue;
            }
            for j in 0..n {
                let c = seq.get(p, f, j);
                let joint = p * n + j;
                let o = (joint * t + f) * 3;
                data[o..o + 3].copy_from_slice(&c);
            }
        }
    }
    DenseTensor::new(vec![n_total, t, 3], data)
}

/// Top-k entries of an attention matrix as (n1, n2, weight), descending.
pub fn top_k_pairs(a: &DenseTensor, k: usize) -> Vec<(usize, usize, f64)> {
    let n = a.shape()[0];
    let mut entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..a.shape()[1]).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, a.get(&[i, j])))
        .collect();
    entries.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap().then_with(|| (x.0, x.1).cmp(&(y.0, y.1))));
    entries.truncate(k);
    entries
}
