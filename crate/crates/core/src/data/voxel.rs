//! Voxelization of skeleton sequences into the sparse coordinate format.
//!
//! Spatial normalization uses one shared scale across x, y, z per sequence:
//! with `c` the per-axis minimum over all valid joints/frames and `r` the
//! maximum per-axis range, a coordinate maps to
//! `floor((u - c_axis) * (s - 1) / r)` clamped to `[0, s-1]`. The t column is
//! the frame index. Features are the one-hot of the joint index within the
//! topology; colliding points coalesce by feature summation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{Coord, SparseTensor4D};
use crate::tensor::DenseTensor;

use super::{SkeletonSequence, SkeletonTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelConfig {
    /// Side length s of the cubic voxel space.
    #[serde(default = "default_space")]
    pub space_size: usize,
    /// Temporal length T_max the sequence must be resampled to.
    #[serde(default = "default_temporal")]
    pub temporal_len: usize,
}

fn default_space() -> usize {
    64
}

fn default_temporal() -> usize {
    32
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self { space_size: default_space(), temporal_len: default_temporal() }
    }
}

impl VoxelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.space_size < 2 {
            return Err(Error::invalid("voxelize", "space_size must be >= 2"));
        }
        if self.temporal_len < 1 {
            return Err(Error::invalid("voxelize", "temporal_len must be >= 1"));
        }
        Ok(())
    }
}

/// Voxelize a sequence already resampled to `cfg.temporal_len` frames.
/// Returns the sparse tensor and whether the sequence was spatially
/// degenerate (zero range: everything lands in one voxel column).
pub fn voxelize_with_info(
    seq: &SkeletonSequence,
    cfg: &VoxelConfig,
    topo: &SkeletonTopology,
) -> Result<(SparseTensor4D, bool)> {
    cfg.validate()?;
    if seq.num_joints() != topo.num_joints {
        return Err(Error::data(format!(
            "voxelize: sample {:?} has {} joints, topology {}",
            seq.id,
            seq.num_joints(),
            topo.num_joints
        )));
    }
    if seq.frames() != cfg.temporal_len {
        return Err(Error::invalid(
            "voxelize",
            format!("sequence has {} frames; resample to temporal_len {} first", seq.frames(), cfg.temporal_len),
        ));
    }

    let n = topo.num_joints;
    let s = cfg.space_size;

    // shared-scale normalization over valid person-frames
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut any_valid = false;
    for p in 0..seq.persons() {
        for f in 0..seq.frames() {
            if !seq.is_valid(p, f) {
                continue;
            }
            any_valid = true;
            for j in 0..n {
                let c = seq.get(p, f, j);
                for d in 0..3 {
                    if !c[d].is_finite() {
                        return Err(Error::data(format!("voxelize: sample {:?} has NaN coords", seq.id)));
                    }
                    min[d] = min[d].min(c[d]);
                    max[d] = max[d].max(c[d]);
                }
            }
        }
    }
    if !any_valid {
        return Err(Error::data(format!("voxelize: sample {:?} has no valid frames", seq.id)));
    }
    let range = (0..3).map(|d| max[d] - min[d]).fold(0.0f64, f64::max);
    let degenerate = range == 0.0;
    let scale = if degenerate { 0.0 } else { (s - 1) as f64 / range };

    let mut coords: Vec<Coord> = Vec::new();
    let mut feats: Vec<f64> = Vec::new();
    for p in 0..seq.persons() {
        for f in 0..seq.frames() {
            if !seq.is_valid(p, f) {
                continue;
            }
            for j in 0..n {
                let c = seq.get(p, f, j);
                let mut voxel = [0i32; 4];
                for d in 0..3 {
                    let v = ((c[d] - min[d]) * scale).floor() as i64;
                    voxel[d] = v.clamp(0, (s - 1) as i64) as i32;
                }
                voxel[3] = f as i32;
                coords.push(voxel);
                let mut one_hot = vec![0.0; n];
                one_hot[j] = 1.0;
                feats.extend(one_hot);
            }
        }
    }
    let rows = coords.len();
    let sparse = SparseTensor4D::new(coords, DenseTensor::new(vec![rows, n], feats)?)?;
    Ok((sparse, degenerate))
}

/// Voxelize, discarding the degeneracy flag.
pub fn voxelize(
    seq: &SkeletonSequence,
    cfg: &VoxelConfig,
    topo: &SkeletonTopology,
) -> Result<SparseTensor4D> {
    voxelize_with_info(seq, cfg, topo).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::stick_figure_topology;

    fn seq_from_frames(frames: Vec<Vec<[f64; 3]>>) -> SkeletonSequence {
        let t = frames.len();
        let n = frames[0].len();
        let coords: Vec<f64> = frames.into_iter().flatten().flatten().collect();
        SkeletonSequence::new("v", 0, 1, t, n, coords, None).unwrap()
    }

    fn two_joint_topo() -> SkeletonTopology {
        SkeletonTopology {
            num_joints: 2,
            joint_names: vec!["a".into(), "b".into()],
            edges: vec![(0, 1)],
        }
    }

    #[test]
    fn shared_scale_hand_example() {
        // ranges x:[0,1], y:[0,2], z:[0,1] with s=64 -> shared scale 63/2
        let topo = two_joint_topo();
        let cfg = VoxelConfig { space_size: 64, temporal_len: 1 };
        let seq = seq_from_frames(vec![vec![[0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]]);
        let (sp, degenerate) = voxelize_with_info(&seq, &cfg, &topo).unwrap();
        assert!(!degenerate);
        assert_eq!(sp.coords(), &[[0, 0, 0, 0], [31, 63, 31, 0]]);
    }

    #[test]
    fn coincident_joints_coalesce_to_multi_hot_per_frame() {
        let topo = two_joint_topo();
        let t_max = 5;
        let cfg = VoxelConfig { space_size: 16, temporal_len: t_max };
        let frames = vec![vec![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]; t_max];
        let (sp, degenerate) = voxelize_with_info(&seq_from_frames(frames), &cfg, &topo).unwrap();
        assert!(degenerate);
        assert_eq!(sp.num_points(), t_max);
        for i in 0..t_max {
            assert_eq!(sp.coords()[i], [0, 0, 0, i as i32]);
            assert_eq!(&sp.feats().data()[i * 2..i * 2 + 2], &[1.0, 1.0]);
        }
    }

    #[test]
    fn output_coordinates_stay_in_bounds() {
        let topo = stick_figure_topology();
        let ds = crate::data::synth::generate(&crate::data::synth::SynthSpec {
            classes: 2,
            samples_per_class: 2,
            noise_sigma: 0.3,
            frames: 12,
            seed: 5,
        })
        .unwrap();
        let cfg = VoxelConfig { space_size: 32, temporal_len: 12 };
        for s in &ds.samples {
            let sp = voxelize(s, &cfg, &topo).unwrap();
            for c in sp.coords() {
                for d in 0..3 {
                    assert!((0..32).contains(&c[d]), "{c:?}");
                }
                assert!((0..12).contains(&c[3]), "{c:?}");
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let topo = stick_figure_topology();
        let ds = crate::data::synth::generate(&crate::data::synth::SynthSpec {
            classes: 2,
            samples_per_class: 3,
            noise_sigma: 0.05,
            frames: 8,
            seed: 21,
        })
        .unwrap();
        let cfg = VoxelConfig { space_size: 64, temporal_len: 8 };
        for s in &ds.samples {
            let base = voxelize(s, &cfg, &topo).unwrap();
            let mut shifted = s.clone();
            for p in 0..s.persons() {
                for f in 0..s.frames() {
                    for j in 0..s.num_joints() {
                        let c = s.get(p, f, j);
                        shifted.set(p, f, j, [c[0] + 10.25, c[1] - 3.5, c[2] + 0.75]);
                    }
                }
            }
            let moved = voxelize(&shifted, &cfg, &topo).unwrap();
            assert_eq!(base, moved, "translation changed voxelization of {}", s.id);
        }
    }

    #[test]
    fn global_rescale_invariance() {
        let topo = stick_figure_topology();
        let ds = crate::data::synth::generate(&crate::data::synth::SynthSpec {
            classes: 2,
            samples_per_class: 2,
            noise_sigma: 0.05,
            frames: 6,
            seed: 33,
        })
        .unwrap();
        let cfg = VoxelConfig { space_size: 32, temporal_len: 6 };
        for s in &ds.samples {
            let base = voxelize(s, &cfg, &topo).unwrap();
            let mut scaled = s.clone();
            for p in 0..s.persons() {
                for f in 0..s.frames() {
                    for j in 0..s.num_joints() {
                        let c = s.get(p, f, j);
                        scaled.set(p, f, j, [c[0] * 4.0, c[1] * 4.0, c[2] * 4.0]);
                    }
                }
            }
            let rescaled = voxelize(&scaled, &cfg, &topo).unwrap();
            assert_eq!(base, rescaled, "rescale changed voxelization of {}", s.id);
        }
    }

    #[test]
    fn frame_count_mismatch_is_an_error() {
        let topo = two_joint_topo();
        let cfg = VoxelConfig { space_size: 16, temporal_len: 4 };
        let seq = seq_from_frames(vec![vec![[0.0; 3], [1.0, 0.0, 0.0]]]);
        assert!(voxelize(&seq, &cfg, &topo).is_err());
    }
}
