use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use delaysinc::features::{write_features, write_labels};
use delaysinc::{apply_delay, gen_bandlimited, FeatureSequence, SampledSignal};

const CONFIG: &str = r#"{
  "task": "synthetic",
  "synth": {"n_recordings": 4, "n_speakers": 2, "duration_s": 20.0, "fs": 25.0, "feature_dim": 4,
            "label_bandwidth_hz": 0.5, "delays": [1.0, 1.0], "noise_std": 0.05, "seed": 0},
  "model": {"base": {"clusters": 1, "trunk_layers": 1, "trunk_filters": 4, "trunk_kernel_len": 1, "fc": 12.5,
            "fs": 25.0, "sinc_half_len": 40, "tau_init_lo": 0.0, "tau_init_hi": 1.5, "l2": 0.0, "input_dim": 4}},
  "train": {"lr": 0.01, "tau_lr": 0.05, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "epochs": 10, "restarts": 1,
            "seed": 0},
  "scheme": "holdout",
  "sweep": {"parameter": "max_delay", "values": [0.5, 1.5]}
}"#;

fn delaysinc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delaysinc"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = delaysinc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = delaysinc(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(!err.trim().is_empty());
    err
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    dir
}

fn metrics(path: &Path) -> serde_json::Value {
    serde_json::from_str::<serde_json::Value>(&fs::read_to_string(path).unwrap()).unwrap()["metrics"].clone()
}

#[test]
fn help_lists_every_subcommand() {
    let dir = setup();
    let help = ok(dir.path(), &["--help"]);
    for cmd in [
        "synth",
        "train",
        "eval",
        "align",
        "sweep-delay",
        "sweep-bandwidth",
        "sweep-clusters",
        "sweep-maxdelay",
        "fuse",
        "report",
    ] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
    for flag in ["--config", "--seed", "--out", "--jobs"] {
        assert!(help.contains(flag));
    }
}

#[test]
fn synth_train_eval_pipeline() {
    let dir = setup();
    let p = dir.path();
    ok(p, &["--config", "cfg.json", "--out", "o", "synth"]);
    assert!(p.join("o/dataset/dataset.json").exists());
    let out = ok(p, &["--config", "cfg.json", "--out", "o", "train"]);
    assert!(out.contains("best dev CCC"));
    assert!(p.join("o/model.json").exists());
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("o/run.json")).unwrap()).unwrap();
    assert_eq!(run["val_ccc"].as_array().unwrap().len(), 10);

    ok(p, &["--config", "cfg.json", "--out", "e", "eval", "--model", "o/model.json", "--regions"]);
    let m = metrics(&p.join("e/metrics.json"));
    for key in ["ccc_train", "ccc_dev", "ccc_full", "ccc_region0_delay1", "ccc_region1_delay1"] {
        assert!(m[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert_eq!(m["ccc_dev"].as_f64().unwrap(), run["best_val_ccc"].as_f64().unwrap());

    ok(p, &["--config", "cfg.json", "--out", "h", "eval"]);
    assert_eq!(metrics(&p.join("h/metrics.json"))["ccc"], run["best_val_ccc"]);
}

#[test]
fn seed_flag_changes_synthetic_data() {
    let dir = setup();
    let p = dir.path();
    ok(p, &["--config", "cfg.json", "--out", "a", "synth"]);
    ok(p, &["--config", "cfg.json", "--out", "b", "synth"]);
    ok(p, &["--config", "cfg.json", "--out", "c", "--seed", "9", "synth"]);
    let read = |d: &str| fs::read(p.join(d).join("dataset/rec000.labels.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn sweep_resumes_and_report_rebuilds() {
    let dir = setup();
    let p = dir.path();
    ok(p, &["--config", "cfg.json", "--out", "s", "sweep-maxdelay"]);
    let csv = fs::read_to_string(p.join("s/max_delay.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("parameter,ccc_mean,ccc_std\n"));
    let first = fs::read(p.join("s/metrics.json")).unwrap();

    ok(p, &["--config", "cfg.json", "--out", "s", "--jobs", "1", "sweep-maxdelay"]);
    assert_eq!(fs::read(p.join("s/metrics.json")).unwrap(), first);

    fs::remove_file(p.join("s/metrics.json")).unwrap();
    fs::remove_file(p.join("s/max_delay.csv")).unwrap();
    ok(p, &["--out", "s", "report"]);
    assert_eq!(fs::read(p.join("s/metrics.json")).unwrap(), first);
    assert_eq!(fs::read_to_string(p.join("s/max_delay.csv")).unwrap(), csv);
}

#[test]
fn other_sweeps_write_one_row_per_value() {
    let dir = setup();
    let p = dir.path();
    ok(p, &["--config", "cfg.json", "--out", "b", "sweep-bandwidth", "--values", "0.25,0.5,12.5"]);
    let csv = fs::read_to_string(p.join("b/bandwidth.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().last().unwrap().starts_with("12.5,1,0"));
    ok(p, &["--config", "cfg.json", "--out", "c", "sweep-clusters", "--values", "1,2"]);
    assert_eq!(fs::read_to_string(p.join("c/clusters.csv")).unwrap().lines().count(), 3);
    ok(p, &["--config", "cfg.json", "--out", "d", "sweep-delay", "--values", "0,1", "--probe-window", "0.2"]);
    assert_eq!(fs::read_to_string(p.join("d/delay.csv")).unwrap().lines().count(), 3);
    fails(p, &["--config", "cfg.json", "--out", "c", "sweep-clusters", "--values", "1.5"]);
}

#[test]
fn align_finds_injected_shift() {
    let dir = setup();
    let p = dir.path();
    let x = gen_bandlimited(3, 1500, 25.0, 0.5).unwrap();
    let noise = gen_bandlimited(4, 1500, 25.0, 0.5).unwrap();
    let y = apply_delay(&x, 2.0, 12.5, 51).unwrap();
    let f = FeatureSequence::from_channels(&[noise.values().to_vec(), x.values().to_vec()], 25.0, "s").unwrap();
    write_features(&p.join("f.csv"), &f).unwrap();
    write_labels(&p.join("y.csv"), &y).unwrap();
    let out = ok(p, &["align", "--features", "f.csv", "--labels", "y.csv", "--channel", "1", "--out", "al"]);
    assert!(out.contains("best delay 2 s"), "{out}");
    assert_eq!(metrics(&p.join("al/metrics.json"))["delay"], 2.0);
    assert_eq!(fs::read_to_string(p.join("al/align.csv")).unwrap().lines().count(), 17);
    fails(p, &["align", "--features", "f.csv", "--labels", "y.csv", "--channel", "2"]);
    fails(p, &["align", "--features", "f.csv", "--labels", "y.csv"]);
}

#[test]
fn fuse_averages_predictions() {
    let dir = setup();
    let p = dir.path();
    write_labels(&p.join("a.csv"), &SampledSignal::new(vec![0.0, 2.0], 25.0).unwrap()).unwrap();
    write_labels(&p.join("b.csv"), &SampledSignal::new(vec![2.0, 0.0], 25.0).unwrap()).unwrap();
    ok(p, &["fuse", "a.csv", "b.csv", "--output", "f.csv"]);
    assert_eq!(fs::read_to_string(p.join("f.csv")).unwrap(), "# fs=25\n1\n1\n");
    write_labels(&p.join("c.csv"), &SampledSignal::new(vec![1.0], 25.0).unwrap()).unwrap();
    let err = fails(p, &["fuse", "a.csv", "c.csv"]);
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn errors_exit_nonzero_with_diagnostic() {
    let dir = setup();
    let p = dir.path();
    assert!(fails(p, &["train"]).contains("--config"));
    fs::write(p.join("bad.json"), "{\"task\": \"synthetic\"}").unwrap();
    assert!(fails(p, &["--config", "bad.json", "train"]).contains("bad.json"));
    assert!(fails(p, &["--config", "missing.json", "train"]).contains("missing.json"));
    assert!(fails(p, &["--config", "cfg.json", "sweep-delay"]).contains("max_delay"));
    fails(p, &["--config", "cfg.json", "--jobs", "0", "train"]);
    fails(p, &["--out", "nowhere", "report"]);
    fails(p, &["no-such-command"]);
}
