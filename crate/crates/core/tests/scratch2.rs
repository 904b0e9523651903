use semspa_core::data::synth::SynthSpec;
use semspa_core::data::voxel::VoxelConfig;
use semspa_core::spa::SpaVariant;
use semspa_core::train::*;

fn opt() -> OptimizerConfig {
    OptimizerConfig {
        lr: 0.005,
        momentum: 0.9,
        weight_decay: 0.0001,
        epochs: 300,
        batch_size: 8,
        early_stop_acc: Some(1.0),
    }
}

fn synth_train() -> DataConfig {
    DataConfig::Synth {
        synth: SynthSpec { classes: 3, samples_per_class: 20, noise_sigma: 0.02, frames: 20, seed: 11 },
    }
}

fn synth_heldout_ds() -> semspa_core::data::Dataset {
    semspa_core::data::synth::generate(&SynthSpec {
        classes: 3,
        samples_per_class: 10,
        noise_sigma: 0.05,
        frames: 20,
        seed: 1213,
    })
    .unwrap()
}

fn sem_tiny(stream: Stream) -> ModelConfig {
    ModelConfig::Sem(SemModelCfg {
        stream,
        heads: 2,
        c_e: 8,
        channels: vec![16, 32],
        strides: vec![1, 2],
        kernel_t: 3,
        branches: 4,
        dilations: vec![1, 3, 5, 7],
        normalize: false,
        t_max: Some(16),
    })
}

fn spa_tiny(variant: SpaVariant) -> ModelConfig {
    ModelConfig::Spa(SpaModelCfg {
        variant,
        channels: vec![16, 32, 64],
        strides: vec![2, 2, 2],
        k: 5,
        kernel_t: 3,
        branches: 4,
        dilations: vec![1, 3, 5, 7],
        voxel: VoxelConfig { space_size: 16, temporal_len: 16 },
    })
}

#[test]
#[ignore]
fn seed_robustness() {
    for seed in [1u64, 2, 3] {
        let cfg = ExperimentConfig {
            seed,
            data: synth_train(),
            model: sem_tiny(Stream::Joint),
            optimizer: opt(),
            out_dir: None,
        };
        let r = train(&cfg).unwrap();
        eprintln!("SEM seed {seed}: epochs {} acc {}", r.epochs_run, r.final_metrics.accuracy);
    }
    for seed in [1u64, 2] {
        let cfg = ExperimentConfig {
            seed,
            data: synth_train(),
            model: spa_tiny(SpaVariant::Spa4d),
            optimizer: opt(),
            out_dir: None,
        };
        let r = train(&cfg).unwrap();
        eprintln!("SPA4D seed {seed}: epochs {} acc {}", r.epochs_run, r.final_metrics.accuracy);
    }
}

#[test]
#[ignore]
fn fusion_heldout() {
    let heldout = synth_heldout_ds();
    let mut score_maps = Vec::new();
    let mut accs = Vec::new();
    for (name, model) in [
        ("sem-joint", sem_tiny(Stream::Joint)),
        ("sem-bone", sem_tiny(Stream::Bone)),
        ("spa-4d", spa_tiny(SpaVariant::Spa4d)),
    ] {
        let cfg = ExperimentConfig {
            seed: 7,
            data: synth_train(),
            model: model.clone(),
            optimizer: opt(),
            out_dir: None,
        };
        let r = train(&cfg).unwrap();
        let inputs = prepare_inputs(&heldout, &model).unwrap();
        let (m, scores) = evaluate(&r.model, &heldout, &inputs).unwrap();
        eprintln!("{name}: train epochs {} heldout acc {}", r.epochs_run, m.accuracy);
        accs.push(m.accuracy);
        score_maps.push(scores);
    }
    let labels = dataset_labels(&heldout);
    let sem_fused = fuse_score_maps(&score_maps[0..2]).unwrap();
    let m = metrics_from_scores(&sem_fused, &labels, 3).unwrap();
    eprintln!("SEM joint+bone fused: {}", m.accuracy);
    let two_stream = fuse_score_maps(&[sem_fused.clone(), score_maps[2].clone()]).unwrap();
    let m2 = metrics_from_scores(&two_stream, &labels, 3).unwrap();
    eprintln!("SEM+SPA fused: {}", m2.accuracy);
}

#[test]
#[ignore]
fn fusion_seed_sweep() {
    let heldout = synth_heldout_ds();
    let labels = dataset_labels(&heldout);
    for seed in [1u64, 2, 3, 7] {
        let mut score_maps = Vec::new();
        let mut accs = Vec::new();
        for model in [
            sem_tiny(Stream::Joint),
            sem_tiny(Stream::Bone),
            spa_tiny(SpaVariant::Spa4d),
        ] {
            let cfg = ExperimentConfig {
                seed,
                data: synth_train(),
                model: model.clone(),
                optimizer: opt(),
                out_dir: None,
            };
            let r = train(&cfg).unwrap();
            let inputs = prepare_inputs(&heldout, &model).unwrap();
            let (m, scores) = evaluate(&r.model, &heldout, &inputs).unwrap();
            accs.push(m.accuracy);
            score_maps.push(scores);
        }
        let sem_fused = fuse_score_maps(&score_maps[0..2]).unwrap();
        let mj = metrics_from_scores(&sem_fused, &labels, 3).unwrap();
        let two = fuse_score_maps(&[sem_fused.clone(), score_maps[2].clone()]).unwrap();
        let m2 = metrics_from_scores(&two, &labels, 3).unwrap();
        eprintln!(
            "seed {seed}: indiv {:?} semfuse {} semspa {}",
            accs, mj.accuracy, m2.accuracy
        );
    }
}
