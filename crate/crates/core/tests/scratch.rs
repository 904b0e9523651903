use semspa_core::data::synth::SynthSpec;
use semspa_core::data::voxel::VoxelConfig;
use semspa_core::spa::SpaVariant;
use semspa_core::train::*;

fn synth_data(seed: u64, per_class: usize, sigma: f64) -> DataConfig {
    DataConfig::Synth {
        synth: SynthSpec { classes: 3, samples_per_class: per_class, noise_sigma: sigma, frames: 20, seed },
    }
}

fn sem_tiny() -> ModelConfig {
    ModelConfig::Sem(SemModelCfg {
        stream: Stream::Joint,
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
        voxel: VoxelConfig { space_size: 32, temporal_len: 16 },
    })
}

#[test]
#[ignore]
fn sem_overfit_scratch() {
    let cfg = ExperimentConfig {
        seed: 7,
        data: synth_data(11, 20, 0.02),
        model: sem_tiny(),
        optimizer: OptimizerConfig {
            lr: 0.005,
            momentum: 0.9,
            weight_decay: 0.0001,
            epochs: 300,
            batch_size: 8,
            early_stop_acc: Some(1.0),
        },
        out_dir: None,
    };
    let t0 = std::time::Instant::now();
    let report = train(&cfg).unwrap();
    eprintln!(
        "SEM: epochs {} acc {} wall {:?}",
        report.epochs_run,
        report.final_metrics.accuracy,
        t0.elapsed()
    );
    for r in report.history.iter().step_by(5) {
        eprintln!("  epoch {} loss {:.4} acc {:.3}", r.epoch, r.loss, r.accuracy);
    }
    assert_eq!(report.final_metrics.accuracy, 1.0);
}

#[test]
#[ignore]
fn spa_overfit_scratch() {
    for variant in [SpaVariant::Spa4d, SpaVariant::Spa3p1d] {
        let cfg = ExperimentConfig {
            seed: 7,
            data: synth_data(11, 20, 0.02),
            model: spa_tiny(variant),
            optimizer: OptimizerConfig {
                lr: 0.005,
                momentum: 0.9,
                weight_decay: 0.0001,
                epochs: 300,
                batch_size: 8,
                early_stop_acc: Some(1.0),
            },
            out_dir: None,
        };
        let t0 = std::time::Instant::now();
        let report = train(&cfg).unwrap();
        eprintln!(
            "SPA {:?}: epochs {} acc {} wall {:?}",
            variant,
            report.epochs_run,
            report.final_metrics.accuracy,
            t0.elapsed()
        );
        for r in report.history.iter().step_by(5) {
            eprintln!("  epoch {} loss {:.4} acc {:.3}", r.epoch, r.loss, r.accuracy);
        }
    }
}
