use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lesioncam"));
    c.env_remove("LESIONCAM_OUT");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn lesioncam")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = run(dir, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    o
}

/// A small dataset with a trained model, built once.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn data(&self, name: &str) -> String {
        self.path().join("data").join(name).display().to_string()
    }
}

const EPOCHS: usize = 3;

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        ok(
            p,
            &[
                "--out",
                "data",
                "--seed",
                "4",
                "synth",
                "--images",
                "16",
                "--channels",
                "1",
            ],
        );
        ok(
            p,
            &[
                "--out",
                "data",
                "--seed",
                "5",
                "train",
                "--manifest",
                "data/manifest.jsonl",
                "--epochs",
                "3",
                "--batch-size",
                "8",
            ],
        );
        Fixture { dir }
    })
}

fn fresh() -> TempDir {
    tempfile::tempdir().unwrap()
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_str().unwrap().ends_with(suffix))
        .collect();
    v.sort();
    v
}

fn proposal_keys(path: &Path) -> HashSet<(String, Vec<Vec<u64>>)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            let runs = v["runs"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| {
                    r.as_array()
                        .unwrap()
                        .iter()
                        .map(|x| x.as_u64().unwrap())
                        .collect()
                })
                .collect();
            (v["image_id"].as_str().unwrap().to_string(), runs)
        })
        .collect()
}

#[test]
fn help_lists_defaults() {
    let o = ok(Path::new("."), &["train", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "[default: 0.01]",
        "[default: 0.8]",
        "[default: 0.0005]",
        "[default: 30]",
    ] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
    let o = ok(Path::new("."), &["propose", "--help"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[default: 0.65]"));
}

#[test]
fn usage_errors_exit_2() {
    let t = fresh();
    let p = t.path();
    assert_eq!(code(&run(p, &["--out", "x", "synth", "--images", "0"])), 2);
    assert_eq!(code(&run(p, &["frobnicate"])), 2);
    assert_eq!(code(&run(p, &["--out", "x", "propose", "--tau", "1.5"])), 2);
    assert_eq!(
        code(&run(p, &["--out", "x", "propose", "--tau", "-0.1"])),
        2
    );
    assert_eq!(
        code(&run(p, &["--out", "x", "synth", "--lesion-types", "XX"])),
        2
    );
    assert!(!p.join("x").exists() || fs::read_dir(p.join("x")).unwrap().next().is_none());
}

#[test]
fn zero_epochs_is_a_usage_error() {
    let f = fixture();
    let t = fresh();
    let o = run(
        t.path(),
        &[
            "train",
            "--manifest",
            &f.data("manifest.jsonl"),
            "--epochs",
            "0",
        ],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn missing_model_exits_3_and_names_the_path() {
    let f = fixture();
    let t = fresh();
    let o = run(
        t.path(),
        &[
            "cam",
            "--model",
            "nowhere/model.lcam",
            "--manifest",
            &f.data("manifest.jsonl"),
        ],
    );
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nowhere/model.lcam"), "{}", stderr(&o));
}

#[test]
fn class_out_of_range_is_a_usage_error() {
    let f = fixture();
    let t = fresh();
    let o = run(
        t.path(),
        &[
            "cam",
            "--model",
            &f.data("model.lcam"),
            "--manifest",
            &f.data("manifest.jsonl"),
            "--class",
            "2",
        ],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn unreadable_manifest_exits_3() {
    let t = fresh();
    fs::write(t.path().join("bad.jsonl"), "{not json\n").unwrap();
    let o = run(
        t.path(),
        &[
            "--out",
            "x",
            "train",
            "--manifest",
            "bad.jsonl",
            "--epochs",
            "1",
        ],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn train_log_has_one_row_per_epoch_with_decayed_rate() {
    let f = fixture();
    let log = fs::read_to_string(f.path().join("data/train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("epoch,lr,loss,accuracy"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), EPOCHS);
    for (e, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0].parse::<usize>().unwrap(), e);
        let lr: f64 = cols[1].parse().unwrap();
        assert!(
            (lr - 0.01 * 0.99f64.powi(e as i32)).abs() < 1e-12,
            "epoch {e}: {lr}"
        );
    }
}

#[test]
fn cam_writes_three_files_per_image() {
    let f = fixture();
    let t = fresh();
    let imgs = f.path().join("data/images");
    let picks: Vec<String> = files_with_suffix(&imgs, ".png")
        .into_iter()
        .take(3)
        .map(|p| p.display().to_string())
        .collect();
    let mut args = vec!["--out", "o", "cam", "--model"];
    let model = f.data("model.lcam");
    args.push(&model);
    args.push("--images");
    args.extend(picks.iter().map(String::as_str));
    ok(t.path(), &args);
    let out: Vec<_> = fs::read_dir(t.path().join("o")).unwrap().collect();
    assert_eq!(out.len(), 9);
    assert_eq!(files_with_suffix(&t.path().join("o"), ".cam.bin").len(), 3);
    assert_eq!(
        files_with_suffix(&t.path().join("o"), ".overlay.png").len(),
        3
    );
}

#[test]
fn higher_threshold_gives_a_subset_of_regions() {
    let f = fixture();
    let t = fresh();
    let p = t.path();
    let (model, manifest) = (f.data("model.lcam"), f.data("manifest.jsonl"));
    ok(
        p,
        &[
            "--out",
            "maps",
            "cam",
            "--model",
            &model,
            "--manifest",
            &manifest,
        ],
    );
    ok(
        p,
        &[
            "--out",
            "lo",
            "propose",
            "--heatmaps",
            "maps",
            "--tau",
            "0.65",
        ],
    );
    ok(
        p,
        &[
            "--out",
            "hi",
            "propose",
            "--heatmaps",
            "maps",
            "--tau",
            "0.9",
        ],
    );
    let lo = proposal_keys(&p.join("lo/proposals.jsonl"));
    let hi = proposal_keys(&p.join("hi/proposals.jsonl"));
    let pixels = |set: &HashSet<(String, Vec<Vec<u64>>)>| -> HashSet<(String, u64, u64)> {
        set.iter()
            .flat_map(|(id, runs)| {
                runs.iter()
                    .flat_map(move |r| (r[1]..r[1] + r[2]).map(move |x| (id.clone(), r[0], x)))
            })
            .collect()
    };
    let (lo_px, hi_px) = (pixels(&lo), pixels(&hi));
    assert!(!hi_px.is_empty());
    assert!(hi_px.is_subset(&lo_px));
}

#[test]
fn propose_from_model_matches_sidecars() {
    let f = fixture();
    let t = fresh();
    let p = t.path();
    let (model, manifest) = (f.data("model.lcam"), f.data("manifest.jsonl"));
    ok(
        p,
        &[
            "--out",
            "maps",
            "cam",
            "--model",
            &model,
            "--manifest",
            &manifest,
        ],
    );
    ok(p, &["--out", "a", "propose", "--heatmaps", "maps"]);
    ok(
        p,
        &[
            "--out",
            "b",
            "propose",
            "--model",
            &model,
            "--manifest",
            &manifest,
        ],
    );
    assert_eq!(
        fs::read(p.join("a/proposals.jsonl")).unwrap(),
        fs::read(p.join("b/proposals.jsonl")).unwrap()
    );
}

#[test]
fn empty_heatmap_directory_gives_empty_output() {
    let t = fresh();
    fs::create_dir(t.path().join("maps")).unwrap();
    ok(t.path(), &["--out", "o", "propose", "--heatmaps", "maps"]);
    assert_eq!(
        fs::read_to_string(t.path().join("o/proposals.jsonl")).unwrap(),
        ""
    );
}

#[test]
fn orphan_ids_exit_3() {
    let f = fixture();
    let t = fresh();
    let p = t.path();
    let mut scores = String::from("id,score\n");
    scores.push_str("stranger,0.5\n");
    fs::write(p.join("scores.csv"), scores).unwrap();
    fs::write(p.join("proposals.jsonl"), "").unwrap();
    let o = run(
        p,
        &[
            "--out",
            "o",
            "eval",
            "--manifest",
            &f.data("manifest.jsonl"),
            "--scores",
            "scores.csv",
            "--proposals",
            "proposals.jsonl",
        ],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("stranger"));
}

#[test]
fn one_pixel_sensitivity_is_at_least_overlap() {
    let f = fixture();
    let t = fresh();
    let p = t.path();
    let (model, manifest) = (f.data("model.lcam"), f.data("manifest.jsonl"));
    ok(
        p,
        &[
            "--out",
            "w",
            "cam",
            "--model",
            &model,
            "--manifest",
            &manifest,
            "--scores",
            "w/scores.csv",
        ],
    );
    ok(p, &["--out", "w", "propose"]);
    let report = |criterion: &str, field: &str| -> Vec<Option<f64>> {
        let out = format!("r_{criterion}");
        ok(
            p,
            &[
                "--out",
                &out,
                "eval",
                "--manifest",
                &manifest,
                "--scores",
                "w/scores.csv",
                "--proposals",
                "w/proposals.jsonl",
                "--criterion",
                criterion,
            ],
        );
        let r: Value =
            serde_json::from_str(&fs::read_to_string(p.join(&out).join("report.json")).unwrap())
                .unwrap();
        r["image_level"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t[field].as_f64())
            .collect()
    };
    let overlap = report("overlap50", "overlap50");
    let one = report("onepixel", "one_pixel");
    assert_eq!(overlap.len(), one.len());
    for (a, b) in overlap.iter().zip(&one) {
        if let (Some(a), Some(b)) = (a, b) {
            assert!(b >= a, "one-pixel {b} < overlap {a}");
        }
    }
}
