//! Class activation map for one synthetic image, written as a grayscale
//! heatmap and a colour overlay. Pass a trained model to see a useful map;
//! without one a freshly initialized network is used.
//!
//! cargo run --release --example cam_heatmap -- [model.lcam] [out_dir]

use lesioncam::cam::{
    class_activation_map, class_score_from_cam, heatmap_image, overlay, Colormap, DEFAULT_CAM_CLASS,
};
use lesioncam::imaging::{generate_synthetic, preprocess, PreprocessConfig, SynthConfig};
use lesioncam::net::{model_file, Network, NetworkSpec};
use lesioncam::proposal::normalize;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let net = match args.first() {
        Some(path) => model_file::load(path)?,
        None => Network::build(NetworkSpec::toy(), 7)?,
    };
    let out = std::path::PathBuf::from(args.get(1).map_or("cam_example", String::as_str));
    std::fs::create_dir_all(&out)?;

    let images = generate_synthetic(&SynthConfig {
        images: 8,
        channels: net.spec.input_channels,
        diseased_fraction: 1.0,
        seed: 4,
        ..SynthConfig::default()
    })?;
    let sample = &images[0];
    let pre = preprocess(
        &sample.image,
        PreprocessConfig::with_size(net.spec.input_height),
    )?;
    let cam = class_activation_map(&net, &pre.tensor, DEFAULT_CAM_CLASS)?;

    let bias = f64::from(net.classifier_bias[DEFAULT_CAM_CLASS]);
    println!(
        "{} lesions of type {}",
        sample.lesions.len(),
        sample.lesions[0].lesion_type
    );
    println!(
        "logit {:.5}, mean of raw CAM plus bias {:.5}",
        cam.logits[DEFAULT_CAM_CLASS],
        class_score_from_cam(&cam.raw, bias)
    );

    let norm = normalize(&cam.heatmap);
    heatmap_image(&norm).save(out.join("heatmap.png"))?;
    overlay(&sample.image, &norm, Colormap::Jet, 0.4)?.save(out.join("overlay.png"))?;
    sample.image.save(out.join("image.png"))?;
    println!(
        "wrote image.png, heatmap.png and overlay.png to {}",
        out.display()
    );
    Ok(())
}
