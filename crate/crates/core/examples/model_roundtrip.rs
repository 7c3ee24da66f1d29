//! Saves a network, loads it back and checks that parameters and outputs
//! are bit-identical.
//!
//! cargo run --example model_roundtrip

use lesioncam::net::{model_file, Network, NetworkSpec};
use lesioncam::nn::Mode;
use lesioncam::tensor::Tensor;

fn main() -> lesioncam::Result<()> {
    let net = Network::<f32>::build(NetworkSpec::toy(), 42)?;
    let bytes = model_file::to_bytes(&net);
    println!("{} bytes, checksum {:016x}", bytes.len(), net.checksum());

    let back = model_file::from_bytes(&bytes)?;
    println!("parameters equal: {}", back == net);
    println!(
        "re-encoded bytes equal: {}",
        model_file::to_bytes(&back) == bytes
    );

    let x = Tensor::from_vec(
        &[1, 1, 64, 64],
        (0..4096).map(|i| (i as f32 * 0.37).sin()).collect(),
    )?;
    let a = net.forward(&x, Mode::Infer)?.logits;
    let b = back.forward(&x, Mode::Infer)?.logits;
    let same = a
        .data()
        .iter()
        .zip(b.data())
        .all(|(p, q)| p.to_bits() == q.to_bits());
    println!("logits {:?} bit-identical: {same}", a.data());

    let mut broken = bytes.clone();
    broken[0] = b'X';
    match model_file::from_bytes(&broken) {
        Err(e) => println!("corrupted header rejected: {e}"),
        Ok(_) => println!("corrupted header accepted"),
    }
    Ok(())
}
