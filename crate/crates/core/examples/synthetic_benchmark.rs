//! End-to-end benchmark on synthetic fundus images: 2000 training and 500
//! test images at 64x64, toy network, 30 epochs, then classification AUC,
//! image-level sensitivities and lesion-level FROC on the test set.
//!
//! cargo run --release --example synthetic_benchmark
//!
//! Environment overrides: TRAIN, TEST, EPOCHS, NET_SEED, AUGMENT (0/1),
//! MODEL (reuse or store a trained model at this path).

use std::time::Instant;

use lesioncam::eval::{report, ReportConfig};
use lesioncam::imaging::{
    generate_synthetic, AugmentParams, LabeledDataset, PreprocessConfig, SynthConfig,
};
use lesioncam::net::{model_file, train, Network, NetworkSpec, TrainConfig};
use lesioncam::pipeline::image_results;
use lesioncam::proposal::ProposalConfig;

fn env<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn main() -> lesioncam::Result<()> {
    let t0 = Instant::now();
    let generate = |images, seed, prefix: &str| {
        generate_synthetic(&SynthConfig {
            images,
            channels: 1,
            seed,
            id_prefix: prefix.into(),
            ..SynthConfig::default()
        })
    };
    let pre = PreprocessConfig::with_size(64);
    let train_set =
        LabeledDataset::from_synthetic(&generate(env("TRAIN", 2000), 1, "train")?, pre)?;
    let test_set = LabeledDataset::from_synthetic(&generate(env("TEST", 500), 2, "test")?, pre)?;
    println!(
        "{} training and {} test images",
        train_set.items.len(),
        test_set.items.len()
    );

    let model = std::env::var("MODEL").unwrap_or_default();
    let net = if !model.is_empty() && std::path::Path::new(&model).exists() {
        println!("loading {model}");
        model_file::load(&model)?
    } else {
        let mut net = Network::build(NetworkSpec::toy(), env("NET_SEED", 7))?;
        let config = TrainConfig {
            epochs: env("EPOCHS", 30),
            batch_size: 32,
            seed: 3,
            augmentation: (env("AUGMENT", 0) == 1).then(AugmentParams::default),
            ..TrainConfig::default()
        };
        for e in train(&mut net, &train_set.train_samples(), &config)? {
            println!(
                "epoch {:>2}  lr {:.5}  loss {:.4}  accuracy {:.3}  [{:.0?}]",
                e.epoch,
                e.lr,
                e.loss,
                e.accuracy,
                t0.elapsed()
            );
        }
        if !model.is_empty() {
            model_file::save(&net, &model)?;
        }
        net
    };

    let results = image_results(&net, &test_set.items, ProposalConfig::default())?;
    let rep = report(&results, &ReportConfig::default())?;
    print!("\n{}", rep.summary());
    println!("\nFROC sensitivity at <= 1 and <= 2 false positives per image");
    for c in &rep.froc {
        println!(
            "{:>4}: {:.3}  {:.3}",
            c.lesion_type.code(),
            c.sensitivity_at(1.0),
            c.sensitivity_at(2.0)
        );
    }
    println!("total {:.0?}", t0.elapsed());
    Ok(())
}
