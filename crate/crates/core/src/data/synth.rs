//! Synthetic action generator: parametric joint trajectories on a 9-joint
//! stick figure plus Gaussian coordinate noise. Deterministic for a fixed
//! seed, so generated datasets can be frozen into tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, SkeletonSequence, SkeletonTopology};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    pub seed: u64,
}

fn default_frames() -> usize {
    20
}

const JOINT_HEAD: usize = 0;
const JOINT_NECK: usize = 1;
const JOINT_LHAND: usize = 2;
const JOINT_RHAND: usize = 3;
const JOINT_HIP: usize = 4;
const JOINT_LKNEE: usize = 5;
const JOINT_RKNEE: usize = 6;
const JOINT_LFOOT: usize = 7;
const JOINT_RFOOT: usize = 8;

/// The 9-joint, 8-edge stick figure all synthetic actions animate.
pub fn stick_figure_topology() -> SkeletonTopology {
    SkeletonTopology {
        num_joints: 9,
        joint_names: vec![
            "head".into(),
            "neck".into(),
            "l_hand".into(),
            "r_hand".into(),
            "hip".into(),
            "l_knee".into(),
            "r_knee".into(),
            "l_foot".into(),
            "r_foot".into(),
        ],
        edges: vec![
            (JOINT_NECK, JOINT_HEAD),
            (JOINT_NECK, JOINT_LHAND),
            (JOINT_NECK, JOINT_RHAND),
            (JOINT_NECK, JOINT_HIP),
            (JOINT_HIP, JOINT_LKNEE),
            (JOINT_HIP, JOINT_RKNEE),
            (JOINT_LKNEE, JOINT_LFOOT),
            (JOINT_RKNEE, JOINT_RFOOT),
        ],
    }
}

fn rest_pose() -> [[f64; 3]; 9] {
    [
        [0.0, 1.7, 0.0],   // head
        [0.0, 1.5, 0.0],   // neck
        [-0.6, 1.0, 0.0],  // l_hand
        [0.6, 1.0, 0.0],   // r_hand
        [0.0, 0.9, 0.0],   // hip
        [-0.2, 0.5, 0.0],  // l_knee
        [0.2, 0.5, 0.0],   // r_knee
        [-0.2, 0.05, 0.0], // l_foot
        [0.2, 0.05, 0.0],  // r_foot
    ]
}

const PROTOTYPES: [&str; 5] = ["raise_hand", "sit", "wave", "kick", "jump"];

/// Class name for label `c`: prototypes cycle, repeats get a variant suffix.
pub fn class_name(c: usize) -> String {
    let proto = PROTOTYPES[c % PROTOTYPES.len()];
    let round = c / PROTOTYPES.len();
    if round == 0 {
        proto.to_string()
    } else {
        format!("{proto}_v{}", round + 1)
    }
}

/// Pose of class `c` at phase `p` in [0, 1], before noise.
fn class_pose(c: usize, p: f64) -> [[f64; 3]; 9] {
    let mut pose = rest_pose();
    let proto = c % PROTOTYPES.len();
    // repeated prototypes get stronger motion so classes stay separable
    let a = 1.0 + 0.35 * (c / PROTOTYPES.len()) as f64;
    match proto {
        0 => {
            // raise hand: right hand translates upward
            pose[JOINT_RHAND][1] += 0.8 * a * p;
            pose[JOINT_RHAND][0] -= 0.2 * a * p;
        }
        1 => {
            // sit: hip and everything above it lowers, knees bend forward
            let drop = 0.45 * a * p;
            for j in [JOINT_HEAD, JOINT_NECK, JOINT_LHAND, JOINT_RHAND, JOINT_HIP] {
                pose[j][1] -= drop;
            }
            pose[JOINT_LKNEE][2] += 0.25 * a * p;
            pose[JOINT_RKNEE][2] += 0.25 * a * p;
        }
        2 => {
            // wave: raised right hand oscillates laterally
            pose[JOINT_RHAND][1] += 0.5 * a;
            pose[JOINT_RHAND][0] += 0.35 * a * (std::f64::consts::TAU * 2.0 * p).sin();
        }
        3 => {
            // kick: right foot swings up and forward
            let swing = (std::f64::consts::PI * p).sin();
            pose[JOINT_RFOOT][1] += 0.5 * a * swing;
            pose[JOINT_RFOOT][2] += 0.4 * a * swing;
            pose[JOINT_RKNEE][2] += 0.2 * a * swing;
        }
        _ => {
            // jump: the whole body rises and falls
            let lift = 0.4 * a * (std::f64::consts::PI * p).sin();
            for j in pose.iter_mut() {
                j[1] += lift;
            }
        }
    }
    pose
}

/// Generate a labelled synthetic dataset. Samples are emitted class-major in
/// a fixed order; all randomness comes from `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(Error::data("synth: need at least 2 classes"));
    }
    if spec.samples_per_class == 0 || spec.frames == 0 {
        return Err(Error::data("synth: samples_per_class and frames must be >= 1"));
    }
    if !spec.noise_sigma.is_finite() || spec.noise_sigma < 0.0 {
        return Err(Error::data("synth: noise_sigma must be finite and >= 0"));
    }
    let topo = stick_figure_topology();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let t = spec.frames;
    let mut samples = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for c in 0..spec.classes {
        for s in 0..spec.samples_per_class {
            let mut coords = Vec::with_capacity(t * 9 * 3);
            for f in 0..t {
                let p = if t == 1 { 0.0 } else { f as f64 / (t - 1) as f64 };
                let pose = class_pose(c, p);
                for joint in pose {
                    for d in 0..3 {
                        let noise = spec.noise_sigma * normal.sample(&mut rng);
                        coords.push(joint[d] + noise);
                    }
                }
            }
            samples.push(SkeletonSequence::new(
                format!("synth_c{c}_s{s}"),
                c,
                1,
                t,
                9,
                coords,
                None,
            )?);
        }
    }
    Ok(Dataset {
        topology: topo,
        classes: (0..spec.classes).map(class_name).collect(),
        max_persons: 1,
        samples,
    })
}
