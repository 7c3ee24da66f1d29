//! Trains the toy CAM network on a small synthetic dataset and saves it.
//!
//! cargo run --release --example train_toy -- [model.lcam]

use lesioncam::imaging::{generate_synthetic, LabeledDataset, PreprocessConfig, SynthConfig};
use lesioncam::net::{model_file, train, Network, NetworkSpec, TrainConfig};
use lesioncam::pipeline::analyze;
use lesioncam::proposal::ProposalConfig;

fn main() -> lesioncam::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "toy.lcam".into());
    let images = generate_synthetic(&SynthConfig {
        images: 800,
        channels: 1,
        seed: 1,
        ..SynthConfig::default()
    })?;
    let data = LabeledDataset::from_synthetic(&images, PreprocessConfig::with_size(64))?;
    let (train_items, held_out) = data.items.split_at(640);

    let mut net = Network::build(NetworkSpec::toy(), 7)?;
    let samples: Vec<_> = LabeledDataset {
        items: train_items.to_vec(),
        provenance: data.provenance,
    }
    .train_samples();
    let config = TrainConfig {
        epochs: 12,
        batch_size: 32,
        ..TrainConfig::default()
    };
    for e in train(&mut net, &samples, &config)? {
        println!(
            "epoch {:>2}  lr {:.5}  loss {:.4}  accuracy {:.3}",
            e.epoch, e.lr, e.loss, e.accuracy
        );
    }

    let mut correct = 0;
    for item in held_out {
        let a = analyze(&net, &item.image.tensor, ProposalConfig::default())?;
        correct += usize::from((a.score >= 0.5) == item.label.is_diseased());
    }
    println!("held-out accuracy {}/{}", correct, held_out.len());
    model_file::save(&net, &out)?;
    println!("saved {out} (checksum {:016x})", net.checksum());
    Ok(())
}
