//! Finite-difference gradient checking.
//!
//! Central differences with a caller-chosen step, compared coordinate-wise
//! against the tape's reverse-mode gradient. Non-scalar outputs are reduced
//! to a scalar by a fixed pseudo-random projection so the same scalar is
//! differentiated on every evaluation.

use crate::error::Result;
use crate::tensor::DenseTensor;

use super::{Graph, ParamId, Params, Value};

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_err: f64,
    pub pass: bool,
    /// (parameter name, flat coordinate) of the worst error
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self { max_rel_err: 0.0, pass: true, worst: None, coords_checked: 0 }
    }

    fn observe(&mut self, name: &str, coord: usize, analytic: f64, numeric: f64) {
        let rel = if numeric.is_finite() {
            (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs())
        } else {
            f64::INFINITY
        };
        if rel > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = rel.max(self.max_rel_err);
            if rel >= self.max_rel_err {
                self.worst = Some((name.to_string(), coord));
            }
        }
        self.coords_checked += 1;
    }

    fn finish(mut self, tol: f64) -> Self {
        self.pass = self.max_rel_err.is_finite() && self.max_rel_err < tol;
        self
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

const PROJECTION_SEED: u64 = 0x5ca1_ab1e_c0ff_ee00;

/// Fixed projection weights with magnitude in [0.5, 1.5] and mixed signs.
fn projection(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let u = splitmix64(PROJECTION_SEED ^ i as u64) as f64 / u64::MAX as f64; // in [0,1]
            let signed = 2.0 * u - 1.0;
            if signed >= 0.0 {
                0.5 + signed
            } else {
                -0.5 + signed
            }
        })
        .collect()
}

/// Build the scalarized loss node: the builder output itself when scalar,
/// otherwise its fixed-projection contraction.
fn build_loss<F>(build: &F, g: &mut Graph, ps: &Params) -> Result<Value>
where
    F: Fn(&mut Graph, &Params) -> Result<Value>,
{
    let y = build(g, ps)?;
    let shape = g.value(y).shape().to_vec();
    let n = g.value(y).len();
    if n == 1 && shape.is_empty() {
        return Ok(y);
    }
    let r = DenseTensor::new(shape, projection(n))?;
    let rv = g.input(r)?;
    let prod = g.mul(y, rv)?;
    let flat = g.reshape(prod, &[n])?;
    g.sum_axes(flat, &[0])
}

/// Evaluate the builder and reduce its output to one scalar.
fn eval_scalar<F>(build: &F, ps: &Params) -> Result<f64>
where
    F: Fn(&mut Graph, &Params) -> Result<Value>,
{
    let mut g = Graph::new();
    let loss = build_loss(build, &mut g, ps)?;
    g.value(loss).item()
}

/// Check the reverse-mode gradient of every parameter in `ps` against central
/// finite differences of the scalarized builder output.
pub fn grad_check_params<F>(build: F, ps: &mut Params, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &Params) -> Result<Value>,
{
    ps.zero_grad();
    let mut g = Graph::new();
    let loss = build_loss(&build, &mut g, ps)?;
    g.backward(loss, ps)?;
    let analytic: Vec<(ParamId, String, Vec<f64>)> = ps
        .iter()
        .map(|(id, p)| (id, p.name.clone(), p.grad.data().to_vec()))
        .collect();

    let mut report = GradCheckReport::empty();
    for (id, name, grads) in &analytic {
        for coord in 0..grads.len() {
            let orig = ps.value(*id).data()[coord];
            let bump = |v: f64, ps: &mut Params| -> Result<f64> {
                let mut t = ps.value(*id).clone();
                t.data_mut()[coord] = v;
                ps.set_value(*id, t);
                eval_scalar(&build, ps)
            };
            let plus = bump(orig + step, ps)?;
            let minus = bump(orig - step, ps)?;
            bump(orig, ps)?; // restore
            let numeric = (plus - minus) / (2.0 * step);
            report.observe(name, coord, grads[coord], numeric);
        }
    }
    Ok(report.finish(tol))
}

/// Check df/dx of a tensor function at `point`. The function may return any
/// tensor; it is scalarized by the fixed projection.
pub fn grad_check<F>(f: F, point: &DenseTensor, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Value) -> Result<Value>,
{
    let mut ps = Params::new();
    let x = ps.add("x", point.clone());
    grad_check_params(
        |g, ps| {
            let xv = g.param(ps, x)?;
            f(g, xv)
        },
        &mut ps,
        step,
        tol,
    )
}
