//! Dense reference oracle for the sparse operators.
//!
//! Scatters a sparse tensor onto a small dense grid, runs a textbook dense
//! 4-D convolution / max-pool with the same offset enumeration and weight
//! layout as the sparse path, and gathers back at output coordinates. Kept
//! deliberately naive; it exists to check the sparse engine, not to be fast.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

use super::{Coord, KernelOffsets, SparseConvParams, SparseTensor4D};

const MAX_SIDE: usize = 16;

fn check_grid(grid: [usize; 4]) -> Result<()> {
    if grid.iter().any(|&g| g == 0 || g > MAX_SIDE) {
        return Err(Error::invalid(
            "dense_oracle",
            format!("grid {:?} too large to materialize (each side must be 1..={MAX_SIDE})", grid),
        ));
    }
    Ok(())
}

/// Dense array `[X, Y, Z, T, C]` with `fill` in unoccupied cells.
pub fn scatter(x: &SparseTensor4D, grid: [usize; 4], fill: f64) -> Result<DenseTensor> {
    check_grid(grid)?;
    let c = x.feature_width();
    let shape = vec![grid[0], grid[1], grid[2], grid[3], c];
    let mut out = DenseTensor::filled(&shape, fill);
    for (i, coord) in x.coords().iter().enumerate() {
        for (d, &g) in coord.iter().zip(&grid) {
            if *d < 0 || *d as usize >= g {
                return Err(Error::invalid(
                    "dense_oracle",
                    format!("coordinate {:?} outside grid {:?}", coord, grid),
                ));
            }
        }
        for ch in 0..c {
            let idx = [coord[0] as usize, coord[1] as usize, coord[2] as usize, coord[3] as usize, ch];
            out.set(&idx, x.feats().data()[i * c + ch]);
        }
    }
    Ok(out)
}

/// Textbook dense 4-D convolution with zero padding:
/// `out[p] = sum_off W[off] · in[p*stride - off]` plus bias. The output grid
/// is the ceil-division of the input grid by the stride.
pub fn dense_conv(
    dense: &DenseTensor,
    params: &SparseConvParams,
    offsets: &KernelOffsets,
) -> Result<DenseTensor> {
    if dense.rank() != 5 {
        return Err(Error::invalid("dense_oracle", format!("expected [X,Y,Z,T,C], got {:?}", dense.shape())));
    }
    let grid = [dense.shape()[0], dense.shape()[1], dense.shape()[2], dense.shape()[3]];
    check_grid(grid)?;
    let c_in = dense.shape()[4];
    params.validate(offsets, c_in)?;
    let c_out = params.c_out();
    let s = params.stride;
    let out_grid = [
        grid[0].div_ceil(s[0]),
        grid[1].div_ceil(s[1]),
        grid[2].div_ceil(s[2]),
        grid[3].div_ceil(s[3]),
    ];
    let mut out = DenseTensor::zeros(&[out_grid[0], out_grid[1], out_grid[2], out_grid[3], c_out]);
    for ox in 0..out_grid[0] {
        for oy in 0..out_grid[1] {
            for oz in 0..out_grid[2] {
                for ot in 0..out_grid[3] {
                    for (w, off) in offsets.offsets().iter().enumerate() {
                        let px = ox as i32 * s[0] as i32 - off[0];
                        let py = oy as i32 * s[1] as i32 - off[1];
                        let pz = oz as i32 * s[2] as i32 - off[2];
                        let pt = ot as i32 * s[3] as i32 - off[3];
                        if px < 0
                            || py < 0
                            || pz < 0
                            || pt < 0
                            || px as usize >= grid[0]
                            || py as usize >= grid[1]
                            || pz as usize >= grid[2]
                            || pt as usize >= grid[3]
                        {
                            continue;
                        }
                        for ci in 0..c_in {
                            let xv = dense.get(&[px as usize, py as usize, pz as usize, pt as usize, ci]);
                            if xv == 0.0 {
                                continue;
                            }
                            for co in 0..c_out {
                                let wv = params.weights.data()[(w * c_in + ci) * c_out + co];
                                let idx = [ox, oy, oz, ot, co];
                                let cur = out.get(&idx);
                                out.set(&idx, cur + xv * wv);
                            }
                        }
                    }
                    if let Some(b) = &params.bias {
                        for co in 0..c_out {
                            let idx = [ox, oy, oz, ot, co];
                            let cur = out.get(&idx);
                            out.set(&idx, cur + b.data()[co]);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Dense max-pool over the same windows; unoccupied cells are `-inf` in the
/// input, so outputs stay `-inf` where no neighbor is occupied.
pub fn dense_max_pool(
    dense: &DenseTensor,
    offsets: &KernelOffsets,
    stride: [usize; 4],
) -> Result<DenseTensor> {
    if dense.rank() != 5 {
        return Err(Error::invalid("dense_oracle", format!("expected [X,Y,Z,T,C], got {:?}", dense.shape())));
    }
    let grid = [dense.shape()[0], dense.shape()[1], dense.shape()[2], dense.shape()[3]];
    check_grid(grid)?;
    let c = dense.shape()[4];
    let out_grid = [
        grid[0].div_ceil(stride[0]),
        grid[1].div_ceil(stride[1]),
        grid[2].div_ceil(stride[2]),
        grid[3].div_ceil(stride[3]),
    ];
    let mut out =
        DenseTensor::filled(&[out_grid[0], out_grid[1], out_grid[2], out_grid[3], c], f64::NEG_INFINITY);
    for ox in 0..out_grid[0] {
        for oy in 0..out_grid[1] {
            for oz in 0..out_grid[2] {
                for ot in 0..out_grid[3] {
                    for off in offsets.offsets() {
                        let px = ox as i32 * stride[0] as i32 - off[0];
                        let py = oy as i32 * stride[1] as i32 - off[1];
                        let pz = oz as i32 * stride[2] as i32 - off[2];
                        let pt = ot as i32 * stride[3] as i32 - off[3];
                        if px < 0
                            || py < 0
                            || pz < 0
                            || pt < 0
                            || px as usize >= grid[0]
                            || py as usize >= grid[1]
                            || pz as usize >= grid[2]
                            || pt as usize >= grid[3]
                        {
                            continue;
                        }
                        for ch in 0..c {
                            let v = dense.get(&[px as usize, py as usize, pz as usize, pt as usize, ch]);
                            let idx = [ox, oy, oz, ot, ch];
                            if v > out.get(&idx) {
                                out.set(&idx, v);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Read the oracle output rows at the given coordinates.
pub fn gather(dense: &DenseTensor, coords: &[Coord]) -> Result<DenseTensor> {
    let c = *dense.shape().last().unwrap();
    let mut out = vec![0.0; coords.len() * c];
    for (i, coord) in coords.iter().enumerate() {
        for ch in 0..c {
            out[i * c + ch] = dense.get(&[
                coord[0] as usize,
                coord[1] as usize,
                coord[2] as usize,
                coord[3] as usize,
                ch,
            ]);
        }
    }
    DenseTensor::new(vec![coords.len(), c], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{sparse_conv, KernelOffsets, SparseConvParams, SparseTensor4D};

    fn t(shape: &[usize], data: &[f64]) -> DenseTensor {
        DenseTensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn rejects_oversized_grid() {
        let x = SparseTensor4D::new(vec![[0, 0, 0, 0]], t(&[1, 1], &[1.0])).unwrap();
        assert!(scatter(&x, [17, 4, 4, 4], 0.0).is_err());
    }

    #[test]
    fn impulse_reproduces_kernel_footprint() {
        // one point at the center, 3x1x1x1 kernel, C_in=C_out=1
        let offs = KernelOffsets::new([3, 1, 1, 1], [1, 1, 1, 1]).unwrap();
        let x = SparseTensor4D::new(vec![[2, 0, 0, 0]], t(&[1, 1], &[1.0])).unwrap();
        let dense = scatter(&x, [5, 1, 1, 1], 0.0).unwrap();
        let params = SparseConvParams {
            weights: t(&[3, 1, 1], &[10.0, 20.0, 30.0]),
            bias: None,
            stride: [1, 1, 1, 1],
        };
        let y = dense_conv(&dense, &params, &offs).unwrap();
        // out[p] = sum W[off]·in[p - off]: offsets are -1,0,+1
        // in[2]=1 -> out[1]=W[-1]=10, out[2]=W[0]=20, out[3]=W[+1]=30
        assert_eq!(y.data(), &[0.0, 10.0, 20.0, 30.0, 0.0]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let offs = KernelOffsets::new([3, 3, 1, 1], [1, 1, 1, 1]).unwrap();
        let dense = DenseTensor::zeros(&[4, 4, 1, 1, 2]);
        let params = SparseConvParams {
            weights: DenseTensor::filled(&[9, 2, 3], 1.5),
            bias: None,
            stride: [1, 1, 1, 1],
        };
        let y = dense_conv(&dense, &params, &offs).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn convolution_is_linear_without_bias() {
        let offs = KernelOffsets::new([3, 3, 3, 1], [1, 1, 1, 1]).unwrap();
        let params = SparseConvParams {
            weights: t(
                &[27, 1, 1],
                &(0..27).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>(),
            ),
            bias: None,
            stride: [1, 1, 1, 1],
        };
        let mk = |seed: f64| {
            let data: Vec<f64> = (0..64).map(|i| ((i as f64 + seed) * 0.71).cos()).collect();
            DenseTensor::new(vec![4, 4, 4, 1, 1], data).unwrap()
        };
        let x = mk(0.0);
        let y = mk(5.0);
        let (a, b) = (2.5, -1.25);
        let combo = DenseTensor::new(
            vec![4, 4, 4, 1, 1],
            x.data().iter().zip(y.data()).map(|(&u, &v)| a * u + b * v).collect(),
        )
        .unwrap();
        let cx = dense_conv(&x, &params, &offs).unwrap();
        let cy = dense_conv(&y, &params, &offs).unwrap();
        let ccombo = dense_conv(&combo, &params, &offs).unwrap();
        for ((&u, &v), &w) in cx.data().iter().zip(cy.data()).zip(ccombo.data()) {
            assert!((a * u + b * v - w).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_matches_dense_on_a_small_cloud() {
        let offs = KernelOffsets::new([3, 3, 3, 3], [1, 1, 1, 1]).unwrap();
        let coords = vec![[0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 1], [3, 3, 3, 3]];
        let feats = t(&[4, 2], &[1.0, -2.0, 0.5, 0.25, 3.0, 1.0, -1.0, 2.0]);
        let x = SparseTensor4D::new(coords, feats).unwrap();
        let params = SparseConvParams {
            weights: t(
                &[81, 2, 2],
                &(0..81 * 4).map(|i| ((i * 7 % 13) as f64 - 6.0) * 0.1).collect::<Vec<_>>(),
            ),
            bias: Some(t(&[2], &[0.1, -0.2])),
            stride: [1, 1, 1, 1],
        };
        let sparse_out = sparse_conv(&x, &params, &offs).unwrap();
        let dense = scatter(&x, [4, 4, 4, 4], 0.0).unwrap();
        let dense_out = dense_conv(&dense, &params, &offs).unwrap();
        let gathered = gather(&dense_out, sparse_out.coords()).unwrap();
        for (a, b) in sparse_out.feats().data().iter().zip(gathered.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
