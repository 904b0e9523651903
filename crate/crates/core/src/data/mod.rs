//! Skeleton sequence data model and transforms.
//!
//! Coordinates are stored person-major: `(M, T, N, 3)` row-major, with a
//! per-(person, frame) validity mask. Absent persons/frames are explicit
//! zero fill with the mask cleared.

pub mod canonical;
pub mod ntu;
pub mod shrec;
pub mod synth;
pub mod voxel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint count, names, and the parent->child bone edges of a skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonTopology {
    pub num_joints: usize,
    pub joint_names: Vec<String>,
    /// (parent index, child index) pairs.
    pub edges: Vec<(usize, usize)>,
}

impl SkeletonTopology {
    pub fn validate(&self) -> Result<()> {
        if self.num_joints == 0 {
            return Err(Error::data("topology: num_joints must be positive"));
        }
        if self.joint_names.len() != self.num_joints {
            return Err(Error::data(format!(
                "topology: {} joint names for {} joints",
                self.joint_names.len(),
                self.num_joints
            )));
        }
        for &(p, c) in &self.edges {
            if p >= self.num_joints || c >= self.num_joints {
                return Err(Error::data(format!(
                    "topology: edge ({p},{c}) out of range for {} joints",
                    self.num_joints
                )));
            }
            if p == c {
                return Err(Error::data(format!("topology: self-loop edge ({p},{c})")));
            }
        }
        Ok(())
    }
}

/// A labelled multi-person skeleton sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub id: String,
    pub label: usize,
    persons: usize,
    frames: usize,
    joints: usize,
    /// (M, T, N, 3) row-major.
    coords: Vec<f64>,
    /// (M, T) row-major; false marks zero-filled absent person-frames.
    valid: Vec<bool>,
}

impl SkeletonSequence {
    pub fn new(
        id: impl Into<String>,
        label: usize,
        persons: usize,
        frames: usize,
        joints: usize,
        coords: Vec<f64>,
        valid: Option<Vec<bool>>,
    ) -> Result<Self> {
        let id = id.into();
        if persons == 0 || frames == 0 || joints == 0 {
            return Err(Error::data(format!("sample {id:?}: empty sequence")));
        }
        let expect = persons * frames * joints * 3;
        if coords.len() != expect {
            return Err(Error::data(format!(
                "sample {id:?}: coordinate array has {} values, expected {expect}",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("sample {id:?}: non-finite coordinate")));
        }
        let valid = match valid {
            Some(v) => {
                if v.len() != persons * frames {
                    return Err(Error::data(format!(
                        "sample {id:?}: validity mask has {} entries, expected {}",
                        v.len(),
                        persons * frames
                    )));
                }
                v
            }
            None => vec![true; persons * frames],
        };
        Ok(Self { id, label, persons, frames, joints, coords, valid })
    }

    pub fn persons(&self) -> usize {
        self.persons
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn num_joints(&self) -> usize {
        self.joints
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn is_valid(&self, person: usize, frame: usize) -> bool {
        self.valid[person * self.frames + frame]
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, person: usize, frame: usize, joint: usize) -> [f64; 3] {
        let o = ((person * self.frames + frame) * self.joints + joint) * 3;
        [self.coords[o], self.coords[o + 1], self.coords[o + 2]]
    }

    pub fn set(&mut self, person: usize, frame: usize, joint: usize, v: [f64; 3]) {
        let o = ((person * self.frames + frame) * self.joints + joint) * 3;
        self.coords[o..o + 3].copy_from_slice(&v);
    }
}

/// A topology, class names, and samples loaded from one source.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub topology: SkeletonTopology,
    pub classes: Vec<String>,
    pub max_persons: usize,
    pub samples: Vec<SkeletonSequence>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn sample_by_id(&self, id: &str) -> Option<&SkeletonSequence> {
        self.samples.iter().find(|s| s.id == id)
    }
}

/// Derive the bone stream: one "joint" per topology edge, each frame holding
/// `child - parent`. Label, id, and mask carry over.
pub fn compute_bones(seq: &SkeletonSequence, topo: &SkeletonTopology) -> Result<SkeletonSequence> {
    topo.validate()?;
    if topo.edges.is_empty() {
        return Err(Error::data("compute_bones: topology has no edges"));
    }
    if topo.num_joints != seq.num_joints() {
        return Err(Error::data(format!(
            "compute_bones: sample {:?} has {} joints, topology {}",
            seq.id,
            seq.num_joints(),
            topo.num_joints
        )));
    }
    let (m, t) = (seq.persons(), seq.frames());
    let nb = topo.edges.len();
    let mut coords = vec![0.0; m * t * nb * 3];
    for p in 0..m {
        for f in 0..t {
            for (e, &(parent, child)) in topo.edges.iter().enumerate() {
                let pc = seq.get(p, f, parent);
                let cc = seq.get(p, f, child);
                let o = ((p * t + f) * nb + e) * 3;
                coords[o] = cc[0] - pc[0];
                coords[o + 1] = cc[1] - pc[1];
                coords[o + 2] = cc[2] - pc[2];
            }
        }
    }
    SkeletonSequence::new(seq.id.clone(), seq.label, m, t, nb, coords, Some(seq.mask().to_vec()))
}

/// Uniform nearest-frame resampling to exactly `t_max` frames:
/// output frame `i` copies input frame `floor(i * T / t_max)`.
pub fn resample_temporal(seq: &SkeletonSequence, t_max: usize) -> Result<SkeletonSequence> {
    if t_max == 0 {
        return Err(Error::data("resample_temporal: t_max must be >= 1"));
    }
    let (m, t, n) = (seq.persons(), seq.frames(), seq.num_joints());
    if t == t_max {
        return Ok(seq.clone());
    }
    let mut coords = vec![0.0; m * t_max * n * 3];
    let mut valid = vec![false; m * t_max];
    for p in 0..m {
        for i in 0..t_max {
            let src = i * t / t_max;
            valid[p * t_max + i] = seq.is_valid(p, src);
            for j in 0..n {
                let v = seq.get(p, src, j);
                let o = ((p * t_max + i) * n + j) * 3;
                coords[o..o + 3].copy_from_slice(&v);
            }
        }
    }
    SkeletonSequence::new(seq.id.clone(), seq.label, m, t_max, n, coords, Some(valid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_topology(n: usize) -> SkeletonTopology {
        SkeletonTopology {
            num_joints: n,
            joint_names: (0..n).map(|i| format!("j{i}")).collect(),
            edges: (0..n - 1).map(|i| (i, i + 1)).collect(),
        }
    }

    fn single_frame_seq(coords: Vec<[f64; 3]>) -> SkeletonSequence {
        let n = coords.len();
        let flat: Vec<f64> = coords.into_iter().flatten().collect();
        SkeletonSequence::new("s0", 0, 1, 1, n, flat, None).unwrap()
    }

    #[test]
    fn bones_are_child_minus_parent() {
        let topo = line_topology(2);
        let seq = single_frame_seq(vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let bones = compute_bones(&seq, &topo).unwrap();
        assert_eq!(bones.num_joints(), 1);
        assert_eq!(bones.get(0, 0, 0), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn coincident_joints_give_zero_bone() {
        let topo = line_topology(2);
        let seq = single_frame_seq(vec![[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]]);
        let bones = compute_bones(&seq, &topo).unwrap();
        assert_eq!(bones.get(0, 0, 0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn nine_joint_skeleton_yields_eight_bones() {
        let topo = synth::stick_figure_topology();
        assert_eq!(topo.num_joints, 9);
        assert_eq!(topo.edges.len(), 8);
        let coords = vec![[0.1, 0.2, 0.3]; 9];
        let seq = single_frame_seq(coords);
        let bones = compute_bones(&seq, &topo).unwrap();
        assert_eq!(bones.num_joints(), 8);
    }

    #[test]
    fn bone_path_sums_reproduce_leaf_minus_root() {
        let topo = line_topology(4);
        let joints = vec![[0.0, 0.0, 0.0], [1.0, 0.5, 0.0], [1.5, 2.0, -1.0], [3.0, 3.0, 3.0]];
        let seq = single_frame_seq(joints.clone());
        let bones = compute_bones(&seq, &topo).unwrap();
        let mut acc = [0.0; 3];
        for e in 0..3 {
            let b = bones.get(0, 0, e);
            for d in 0..3 {
                acc[d] += b[d];
            }
        }
        for d in 0..3 {
            assert_eq!(acc[d], joints[3][d] - joints[0][d]);
        }
    }

    #[test]
    fn empty_edge_list_is_an_error() {
        let mut topo = line_topology(2);
        topo.edges.clear();
        let seq = single_frame_seq(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(compute_bones(&seq, &topo).is_err());
    }

    #[test]
    fn resample_identity_and_repeat() {
        let topo = line_topology(2);
        let _ = topo;
        let mut coords = Vec::new();
        for f in 0..4 {
            coords.extend_from_slice(&[f as f64, 0.0, 0.0, f as f64, 1.0, 0.0]);
        }
        let seq = SkeletonSequence::new("s", 0, 1, 4, 2, coords, None).unwrap();
        // identity at target length
        let same = resample_temporal(&seq, 4).unwrap();
        assert_eq!(same, seq);
        // idempotent
        let twice = resample_temporal(&same, 4).unwrap();
        assert_eq!(twice, seq);
        // downsample picks floor(i*T/T_max) = frames {0, 2}
        let down = resample_temporal(&seq, 2).unwrap();
        assert_eq!(down.get(0, 0, 0)[0], 0.0);
        assert_eq!(down.get(0, 1, 0)[0], 2.0);
        // single frame repeats
        let one = resample_temporal(&down, 1).unwrap();
        let up = resample_temporal(&one, 3).unwrap();
        for f in 0..3 {
            assert_eq!(up.get(0, f, 0)[0], 0.0);
        }
    }

    #[test]
    fn sequence_rejects_nan() {
        let res = SkeletonSequence::new("bad", 0, 1, 1, 1, vec![f64::NAN, 0.0, 0.0], None);
        assert!(res.is_err());
    }
}
