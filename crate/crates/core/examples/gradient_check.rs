//! Central finite differences against backpropagation for a small network
//! in double precision.
//!
//! cargo run --example gradient_check

use lesioncam::net::{ConvSpec, LayerSpec, Network, NetworkSpec};
use lesioncam::nn::{softmax_cross_entropy, Mode};
use lesioncam::tensor::Tensor;

fn main() -> lesioncam::Result<()> {
    let spec = NetworkSpec {
        input_height: 12,
        input_width: 12,
        input_channels: 2,
        layers: vec![
            LayerSpec::Conv(ConvSpec::new(4, 3, 1).with_pool(2)),
            LayerSpec::Conv(ConvSpec::new(6, 3, 1)),
        ],
        classes: 2,
        min_resolution: 4,
    };
    let mut net = Network::<f64>::build(spec, 21)?;
    let x = Tensor::from_vec(
        &[4, 2, 12, 12],
        (0..4 * 2 * 144)
            .map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0)
            .collect(),
    )?;
    let labels = [0, 1, 1, 0];

    let (out, trace) = net.clone().forward_train(&x)?;
    let (loss, grad_logits) = softmax_cross_entropy(&out.logits, &labels)?;
    let grads = net.backward(&trace, &grad_logits)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data().to_vec()).collect();
    println!("loss {loss:.6}");

    let loss_of = |n: &Network<f64>| -> lesioncam::Result<f64> {
        Ok(softmax_cross_entropy(&n.forward(&x, Mode::Train)?.logits, &labels)?.0)
    };
    let h = 1e-6;
    for (pi, a) in analytic.iter().enumerate() {
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for (i, &ai) in a.iter().enumerate() {
            let v = net.params_mut()[pi].value[i];
            net.params_mut()[pi].value[i] = v + h;
            let up = loss_of(&net)?;
            net.params_mut()[pi].value[i] = v - h;
            let down = loss_of(&net)?;
            net.params_mut()[pi].value[i] = v;
            let ni = (up - down) / (2.0 * h);
            num += (ai - ni).powi(2);
            den = den.max(ai.abs()).max(ni.abs());
        }
        println!(
            "param {pi:>2} ({:>4} values): relative error {:.2e}",
            a.len(),
            num.sqrt() / den.max(1e-12)
        );
    }
    Ok(())
}
