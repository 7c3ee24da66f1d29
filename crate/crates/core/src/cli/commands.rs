use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use super::config::{CamSection, EvalSection, ProposeSection, SynthSection, TrainSection};
use super::{CamArgs, EvalArgs, Failure, ProposeArgs, SynthArgs, TrainArgs};
use crate::cam::{
    class_activation_map, heatmap_image, overlay, read_sidecar, write_sidecar, Colormap,
    DEFAULT_CAM_CLASS,
};
use crate::error::Error;
use crate::eval::{froc_csv, report, Criterion, ImageResult, LesionType, ReportConfig};
use crate::imaging::{
    crop_and_resize, generate_synthetic, preprocess, write_synthetic, AugmentParams,
    LabeledDataset, Manifest, PreprocessConfig, RawImage, SynthConfig,
};
use crate::net::{model_file, train as fit, Network, NetworkSpec, TrainConfig};
use crate::nn::{softmax, SgdConfig};
use crate::proposal::{
    propose as propose_regions, read_proposals, write_proposals, ProposalConfig, RegionProposal,
};

type CmdResult = Result<(), Failure>;

pub(super) struct Context {
    pub seed: u64,
    pub out: PathBuf,
}

pub const MODEL_FILE: &str = "model.lcam";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const PROPOSALS_FILE: &str = "proposals.jsonl";
const SIDECAR_SUFFIX: &str = ".cam.bin";

fn ensure_out_dir(dir: &Path) -> CmdResult {
    let unwritable = |e: std::io::Error| {
        Failure::usage(format!(
            "output directory {} is not writable: {e}",
            dir.display()
        ))
    };
    fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(".lesioncam-write-test");
    fs::write(&probe, b"").map_err(unwritable)?;
    fs::remove_file(&probe).map_err(unwritable)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::usage(format!("--{flag} is required (flag or config file)")))
}

fn existing(path: PathBuf) -> Result<PathBuf, Failure> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::input(format!(
            "{}: no such file or directory",
            path.display()
        )))
    }
}

pub(super) fn synth(ctx: &Context, a: SynthArgs, c: &SynthSection) -> CmdResult {
    let d = SynthConfig::default();
    let lesion_types = match a.lesion_types {
        Some(names) => names
            .iter()
            .filter(|n| !n.is_empty())
            .map(|n| n.parse::<LesionType>())
            .collect::<Result<Vec<_>, _>>()?,
        None => c.lesion_types.clone().unwrap_or(d.lesion_types),
    };
    let config = SynthConfig {
        images: a.images.or(c.images).unwrap_or(d.images),
        diseased_fraction: a
            .diseased_fraction
            .or(c.diseased_fraction)
            .unwrap_or(d.diseased_fraction),
        size: a.size.or(c.size).unwrap_or(d.size),
        channels: a.channels.or(c.channels).unwrap_or(d.channels),
        lesion_types,
        max_lesions: a.max_lesions.or(c.max_lesions).unwrap_or(d.max_lesions),
        expert_noise: a.expert_noise.or(c.expert_noise).unwrap_or(d.expert_noise),
        seed: ctx.seed,
        id_prefix: a
            .id_prefix
            .or_else(|| c.id_prefix.clone())
            .unwrap_or(d.id_prefix),
    };
    config.validate()?;
    ensure_out_dir(&ctx.out)?;
    let images = generate_synthetic(&config)?;
    let manifest = write_synthetic(&ctx.out, &images)?;
    let diseased = images.iter().filter(|i| i.diseased).count();
    println!(
        "wrote {} images ({diseased} diseased) to {}",
        images.len(),
        manifest.display()
    );
    Ok(())
}

pub(super) fn train(ctx: &Context, a: TrainArgs, c: &TrainSection) -> CmdResult {
    let manifest = required(a.manifest.or_else(|| c.manifest.clone()), "manifest")?;
    let o = SgdConfig::default();
    let epochs = a.epochs.or(c.epochs).unwrap_or(30);
    let batch_size = a.batch_size.or(c.batch_size).unwrap_or(32);
    let optimizer = SgdConfig {
        momentum: a.momentum.or(c.momentum).unwrap_or(o.momentum),
        weight_decay: a.weight_decay.or(c.weight_decay).unwrap_or(o.weight_decay),
        base_lr: a.lr.or(c.lr).unwrap_or(o.base_lr),
        decay_per_epoch: a.lr_decay.or(c.lr_decay).unwrap_or(o.decay_per_epoch),
    };
    let augment = a.augment.or(c.augment).unwrap_or(true);
    let config = TrainConfig {
        epochs,
        batch_size,
        optimizer,
        seed: ctx.seed,
        augmentation: augment.then(AugmentParams::default),
    };
    config.validate()?;

    let resume = a.resume.or_else(|| c.resume.clone());
    let arch = a.arch.or_else(|| c.arch.clone());
    if resume.is_some() && arch.is_some() {
        return Err(Failure::usage("--arch and --resume are mutually exclusive"));
    }
    let resumed = match &resume {
        Some(p) => Some(model_file::load(existing(p.clone())?)?),
        None => None,
    };
    let mut spec = match (&resumed, &arch) {
        (Some(net), _) => net.spec.clone(),
        (None, Some(p)) => {
            let p = existing(p.clone())?;
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            NetworkSpec::parse(&text)?
        }
        (None, None) => NetworkSpec::toy(),
    };
    let fixed_input = resumed.is_some() || arch.is_some();
    let size = a.size.or(c.size).unwrap_or(spec.input_height);
    if fixed_input && (size != spec.input_height || size != spec.input_width) {
        return Err(Failure::usage(format!(
            "--size {size} does not match the {}x{} network input",
            spec.input_height, spec.input_width
        )));
    }
    ensure_out_dir(&ctx.out)?;

    let dataset = LabeledDataset::load(existing(manifest)?, PreprocessConfig::with_size(size))?;
    if dataset.items.len() < 2 {
        return Err(Failure::input("need at least two training images"));
    }
    let channels = dataset.items[0].image.tensor.shape()[0];
    if !fixed_input {
        spec.input_height = size;
        spec.input_width = size;
        spec.input_channels = channels;
    } else if channels != spec.input_channels {
        return Err(Failure::input(format!(
            "images have {channels} channels, network expects {}",
            spec.input_channels
        )));
    }
    let mut net = match resumed {
        Some(n) => n,
        None => Network::build(spec, ctx.seed)?,
    };
    info!(
        "training on {} images for {epochs} epochs ({} parameters)",
        dataset.items.len(),
        net.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum::<usize>()
    );
    let log = fit(&mut net, &dataset.train_samples(), &config)?;

    model_file::save(&net, ctx.out.join(MODEL_FILE))?;
    let mut csv = String::from("epoch,lr,loss,accuracy\n");
    for e in &log {
        csv.push_str(&format!("{},{},{},{}\n", e.epoch, e.lr, e.loss, e.accuracy));
    }
    write_text(&ctx.out.join(TRAIN_LOG), &csv)?;
    if let Some(last) = log.last() {
        println!(
            "trained {} epochs: loss {:.4}, accuracy {:.3}; model written to {}",
            log.len(),
            last.loss,
            last.accuracy,
            ctx.out.join(MODEL_FILE).display()
        );
    }
    Ok(())
}

fn image_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        let p = existing(p.clone())?;
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(&p)
                .map_err(|e| Error::io(&p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let ext = f
                        .extension()
                        .and_then(|e| e.to_str())
                        .unwrap_or("")
                        .to_ascii_lowercase();
                    matches!(ext.as_str(), "png" | "ppm" | "pgm" | "pnm")
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}

fn load_model(path: PathBuf, class: usize) -> Result<Network<f32>, Failure> {
    let net = model_file::load(existing(path)?)?;
    if class >= net.classes() {
        return Err(Failure::usage(format!(
            "--class {class} out of range, the model has {} classes",
            net.classes()
        )));
    }
    if net.spec.input_height != net.spec.input_width {
        return Err(Failure::input("the model must have a square input"));
    }
    Ok(net)
}

/// Images named by a manifest or by paths, with unique ids.
fn load_inputs(
    manifest: Option<PathBuf>,
    images: Option<Vec<PathBuf>>,
) -> Result<Vec<RawImage>, Failure> {
    let inputs: Vec<RawImage> = match (manifest, images) {
        (Some(m), None) => {
            let m = Manifest::read(existing(m)?)?;
            m.entries
                .iter()
                .map(|e| m.load_image(e))
                .collect::<crate::Result<_>>()?
        }
        (None, Some(paths)) => image_files(&paths)?
            .iter()
            .map(RawImage::load)
            .collect::<crate::Result<_>>()?,
        (None, None) => return Err(Failure::usage("give --manifest or --images")),
        (Some(_), Some(_)) => {
            return Err(Failure::usage(
                "--manifest and --images are mutually exclusive",
            ))
        }
    };
    let mut seen = HashSet::new();
    if let Some(img) = inputs.iter().find(|i| !seen.insert(i.id.clone())) {
        return Err(Failure::input(format!("duplicate image id {:?}", img.id)));
    }
    Ok(inputs)
}

pub(super) fn cam(ctx: &Context, a: CamArgs, c: &CamSection) -> CmdResult {
    let model_path = required(a.model.or_else(|| c.model.clone()), "model")?;
    let class = a.class.or(c.class).unwrap_or(DEFAULT_CAM_CLASS);
    let colormap: Colormap = a
        .colormap
        .or_else(|| c.colormap.clone())
        .map_or(Ok(Colormap::default()), |s| s.parse())
        .map_err(Failure::usage)?;
    let alpha = a.alpha.or(c.alpha).unwrap_or(0.4);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Failure::usage(format!("--alpha {alpha} outside [0, 1]")));
    }
    let scores_path = a.scores.or_else(|| c.scores.clone());
    let net = load_model(model_path, class)?;
    let inputs = load_inputs(
        a.manifest.or_else(|| c.manifest.clone()),
        a.images.or_else(|| c.images.clone()),
    )?;
    ensure_out_dir(&ctx.out)?;

    let pre = PreprocessConfig::with_size(net.spec.input_height);
    let channels = net.spec.input_channels;
    let out = &ctx.out;
    let scores = inputs
        .par_iter()
        .map(|raw| -> crate::Result<(String, f64)> {
            let raw = raw.to_channels(channels)?;
            let image = preprocess(&raw, pre)?;
            let cam = class_activation_map(&net, &image.tensor, class)?;
            let id = &raw.id;
            write_sidecar(&cam.heatmap, out.join(format!("{id}{SIDECAR_SUFFIX}")))?;
            let png = out.join(format!("{id}.cam.png"));
            heatmap_image(&cam.heatmap)
                .save(&png)
                .map_err(|e| Error::image(&png, e))?;
            let (display, _) = crop_and_resize(&raw, pre)?;
            let ov = out.join(format!("{id}.overlay.png"));
            overlay(&display, &cam.heatmap, colormap, alpha)?
                .save(&ov)
                .map_err(|e| Error::image(&ov, e))?;
            let logits: Vec<f64> = cam.logits.iter().map(|&v| f64::from(v)).collect();
            let probs = softmax(&crate::tensor::Tensor::from_vec(
                &[1, logits.len()],
                logits,
            )?)?;
            let disease = probs[0]
                .get(DEFAULT_CAM_CLASS)
                .copied()
                .unwrap_or(probs[0][0]);
            Ok((id.clone(), disease))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    if let Some(p) = scores_path {
        let mut csv = String::from("id,score\n");
        for (id, s) in &scores {
            csv.push_str(&format!("{id},{s}\n"));
        }
        write_text(&p, &csv)?;
    }
    println!(
        "wrote heatmaps for {} images to {}",
        scores.len(),
        out.display()
    );
    Ok(())
}

pub(super) fn propose(ctx: &Context, a: ProposeArgs, c: &ProposeSection) -> CmdResult {
    let tau = a
        .tau
        .or(c.tau)
        .unwrap_or(crate::proposal::DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&tau) {
        return Err(Failure::usage(format!("--tau {tau} outside [0, 1]")));
    }
    let config = ProposalConfig {
        threshold: tau,
        min_area: a
            .min_area
            .or(c.min_area)
            .unwrap_or(crate::proposal::DEFAULT_MIN_AREA),
    };
    let mut results: Vec<(String, Vec<RegionProposal>)> = match a.model.or_else(|| c.model.clone())
    {
        Some(model_path) => {
            let class = a.class.or(c.class).unwrap_or(DEFAULT_CAM_CLASS);
            let net = load_model(model_path, class)?;
            let inputs = load_inputs(
                a.manifest.or_else(|| c.manifest.clone()),
                a.images.or_else(|| c.images.clone()),
            )?;
            ensure_out_dir(&ctx.out)?;
            let pre = PreprocessConfig::with_size(net.spec.input_height);
            inputs
                .par_iter()
                .map(|raw| {
                    let image = preprocess(&raw.to_channels(net.spec.input_channels)?, pre)?;
                    let cam = class_activation_map(&net, &image.tensor, class)?;
                    Ok((raw.id.clone(), propose_regions(&cam.heatmap, config)?))
                })
                .collect::<crate::Result<_>>()?
        }
        None => {
            let dir = a
                .heatmaps
                .or_else(|| c.heatmaps.clone())
                .unwrap_or_else(|| ctx.out.clone());
            let dir = existing(dir)?;
            let maps: Vec<(String, PathBuf)> = fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter_map(|p| {
                    let name = p.file_name()?.to_str()?;
                    let id = name.strip_suffix(SIDECAR_SUFFIX)?.to_string();
                    Some((id, p))
                })
                .collect();
            ensure_out_dir(&ctx.out)?;
            maps.par_iter()
                .map(|(id, p)| Ok((id.clone(), propose_regions(&read_sidecar(p)?, config)?)))
                .collect::<crate::Result<_>>()?
        }
    };
    results.sort_by(|x, y| x.0.cmp(&y.0));
    let path = ctx.out.join(PROPOSALS_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for (id, props) in &results {
        write_proposals(&mut w, id, props)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let total: usize = results.iter().map(|(_, p)| p.len()).sum();
    println!(
        "wrote {total} proposals for {} images to {}",
        results.len(),
        path.display()
    );
    Ok(())
}

fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.trim() == "id,score") {
            continue;
        }
        let bad = || Failure::input(format!("{}:{}: expected id,score", path.display(), i + 1));
        let (id, s) = line.rsplit_once(',').ok_or_else(bad)?;
        let v: f64 = s.trim().parse().map_err(|_| bad())?;
        if out.insert(id.trim().to_string(), v).is_some() {
            return Err(Failure::input(format!(
                "{}: duplicate id {id}",
                path.display()
            )));
        }
    }
    Ok(out)
}

pub(super) fn eval(ctx: &Context, a: EvalArgs, c: &EvalSection) -> CmdResult {
    let manifest_path = required(a.manifest.or_else(|| c.manifest.clone()), "manifest")?;
    let scores_path = required(a.scores.or_else(|| c.scores.clone()), "scores")?;
    let proposals_path = a
        .proposals
        .or_else(|| c.proposals.clone())
        .unwrap_or_else(|| ctx.out.join(PROPOSALS_FILE));
    let size = a.size.or(c.size).unwrap_or(64);
    let criteria = match a
        .criterion
        .or_else(|| c.criterion.clone())
        .as_deref()
        .unwrap_or("both")
    {
        "overlap50" => vec![Criterion::Overlap50],
        "onepixel" => vec![Criterion::OnePixel],
        "both" => vec![Criterion::Overlap50, Criterion::OnePixel],
        other => {
            return Err(Failure::usage(format!(
                "--criterion {other:?}: expected overlap50, onepixel or both"
            )))
        }
    };
    let config = ReportConfig {
        classification_threshold: a
            .classification_threshold
            .or(c.classification_threshold)
            .unwrap_or(0.5),
        lesion_threshold: a
            .lesion_threshold
            .or(c.lesion_threshold)
            .unwrap_or(crate::proposal::DEFAULT_THRESHOLD),
        criteria,
    };
    if !config.lesion_threshold.is_finite() || !config.classification_threshold.is_finite() {
        return Err(Failure::usage("thresholds must be finite"));
    }

    let manifest = Manifest::read(existing(manifest_path)?)?;
    let scores = read_scores(&existing(scores_path)?)?;
    let proposals: BTreeMap<String, Vec<RegionProposal>> =
        read_proposals(existing(proposals_path)?)?
            .into_iter()
            .collect();

    let ids: HashSet<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
    let mut orphans: Vec<String> = proposals
        .keys()
        .filter(|id| !ids.contains(id.as_str()))
        .map(|id| format!("{id} (proposals)"))
        .collect();
    orphans.extend(
        scores
            .keys()
            .filter(|id| !ids.contains(id.as_str()))
            .map(|id| format!("{id} (scores)")),
    );
    orphans.extend(
        manifest
            .entries
            .iter()
            .filter(|e| !scores.contains_key(&e.id))
            .map(|e| format!("{} (manifest, no score)", e.id)),
    );
    if !orphans.is_empty() {
        return Err(Failure::input(format!(
            "image ids do not match: {}",
            orphans.join(", ")
        )));
    }
    ensure_out_dir(&ctx.out)?;

    let pre = PreprocessConfig::with_size(size);
    let results = manifest
        .entries
        .par_iter()
        .map(|e| {
            let item = manifest.load_item(e, pre)?;
            let props = proposals.get(&e.id).cloned().unwrap_or_default();
            if let Some(p) = props
                .iter()
                .flat_map(|p| p.pixels.iter())
                .find(|p| p.x as usize >= size || p.y as usize >= size)
            {
                return Err(Error::Manifest(format!(
                    "{}: proposal pixel ({}, {}) outside the {size}x{size} grid; check --size",
                    e.id, p.x, p.y
                )));
            }
            Ok(ImageResult {
                id: e.id.clone(),
                diseased: item.label.is_diseased(),
                score: scores[&e.id],
                proposals: props,
                ground_truth: item.ground_truth,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;

    let rep = report(&results, &config)?;
    let out = &ctx.out;
    write_text(&out.join("report.json"), &(rep.to_json()? + "\n"))?;
    write_text(&out.join("report.txt"), &rep.summary())?;
    write_text(&out.join("image_level.csv"), &rep.image_level_csv())?;
    write_text(&out.join("lesion_level.csv"), &rep.lesion_level_csv())?;
    for curve in &rep.froc {
        write_text(
            &out.join(format!("froc_{}.csv", curve.lesion_type.code())),
            &froc_csv(curve),
        )?;
    }
    if let Some(roc) = rep.roc_csv() {
        write_text(&out.join("roc.csv"), &roc)?;
    }
    print!("{}", rep.summary());
    Ok(())
}
