use semspa_core::autodiff::Graph;
use semspa_core::data::synth::SynthSpec;
use semspa_core::data::voxel::VoxelConfig;
use semspa_core::spa::{PlanCache, SpaVariant};
use semspa_core::train::*;
use std::time::Instant;

#[test]
#[ignore]
fn profile_spa4d_sample() {
    let data = DataConfig::Synth {
        synth: SynthSpec { classes: 3, samples_per_class: 20, noise_sigma: 0.02, frames: 20, seed: 11 },
    };
    let model = ModelConfig::Spa(SpaModelCfg {
        variant: SpaVariant::Spa4d,
        channels: vec![16, 32, 64],
        strides: vec![2, 2, 2],
        k: 5,
        kernel_t: 3,
        branches: 4,
        dilations: vec![1, 3, 5, 7],
        voxel: VoxelConfig { space_size: 32, temporal_len: 16 },
    });
    let ds = load_dataset(&data).unwrap();
    let built = build_model(&ds, &model, 1).unwrap();
    let inputs = prepare_inputs(&ds, &model).unwrap();
    let PreparedInput::Sparse(x) = &inputs[0] else { panic!() };
    eprintln!("points {}", x.num_points());

    let mut cache = PlanCache::new();
    // first pass builds plans
    let t0 = Instant::now();
    let ModelKind::Spa(net) = &built.kind else { panic!() };
    let mut g = Graph::new();
    let logits = net.forward(&mut g, &built.params, x, &mut cache).unwrap();
    let _ = logits;
    eprintln!("first forward (plan build): {:?}", t0.elapsed());

    // steady state: forward only
    let t1 = Instant::now();
    let reps = 20;
    for _ in 0..reps {
        let mut g = Graph::new();
        let _ = net.forward(&mut g, &built.params, x, &mut cache).unwrap();
    }
    eprintln!("forward: {:?}", t1.elapsed() / reps);

    // forward + backward
    let mut ps = built.params.clone();
    let t2 = Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let logits = net.forward(&mut g, &ps, x, &mut cache).unwrap();
        let loss = g.cross_entropy(logits, 0).unwrap();
        ps.zero_grad();
        g.backward(loss, &mut ps).unwrap();
    }
    eprintln!("forward+backward+zero: {:?}", t2.elapsed() / reps);
}
