use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn geotr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geotr")).args(args).env("GEOTR_THREADS", "1").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = geotr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_exits_zero_and_lists_flags() {
    for (sub, flags) in [
        ("generate", &["--kind", "--count", "--out", "--seed", "--random-spacing", "--shadows", "--mnist-images"][..]),
        ("train", &["--data", "--val", "--config", "--epochs", "--batch", "--sam", "--seed", "--out"]),
        ("eval", &["--model", "--data", "--json"]),
        ("infer", &["--model", "--image"]),
        ("attack", &["--model", "--data", "--epsilons"]),
        ("inspect", &["--model", "--image", "--out"]),
    ] {
        let out = ok(&[sub, "--help"]);
        let text = String::from_utf8_lossy(&out.stdout);
        for f in flags {
            assert!(text.contains(f), "{sub} help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = geotr(&["generate", "--kind", "mnist", "--count", "3", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--mnist-images") && err.contains("Usage"), "{err}");

    assert_eq!(geotr(&["generate", "--count", "x", "--out", "d"]).status.code(), Some(2));
    assert_eq!(geotr(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(geotr(&["eval", "--model", "m.gtr"]).status.code(), Some(2));
}

#[test]
fn missing_model_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = geotr(&["eval", "--model", p(&dir.path().join("missing.gtr")), "--data", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.gtr"));
}

#[test]
fn generate_is_reproducible_and_logs_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = ok(&["generate", "--kind", "digitgen", "--count", "10", "--out", p(d.path()), "--seed", "7", "--noise"]);
        let err = String::from_utf8_lossy(&out.stderr);
        let line = err.lines().find(|l| l.starts_with("config: ")).unwrap();
        let cfg: serde_json::Value = serde_json::from_str(&line["config: ".len()..]).unwrap();
        assert_eq!(cfg["command"]["seed"], 7);
        assert_eq!(cfg["command"]["subcommand"], "generate");
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 11);
    for n in names {
        assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap());
    }
}

#[test]
fn mnist_generation_from_idx_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 28, 0, 0, 0, 28];
    images.extend((0..4 * 784).map(|i| (i % 251) as u8));
    fs::write(dir.path().join("img.idx"), images).unwrap();
    fs::write(dir.path().join("lab.idx"), [0, 0, 8, 1, 0, 0, 0, 4, 3, 1, 4, 1]).unwrap();
    let out = dir.path().join("set");
    ok(&[
        "generate",
        "--kind",
        "mnist",
        "--count",
        "3",
        "--out",
        p(&out),
        "--mnist-images",
        p(&dir.path().join("img.idx")),
        "--mnist-labels",
        p(&dir.path().join("lab.idx")),
    ]);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["images"].as_array().unwrap().len(), 3);
    assert_eq!(m["images"][0]["width"], 244);
    assert_eq!(m["images"][0]["height"], 48);
    assert_eq!(m["annotations"].as_array().unwrap().len(), 24);
}

#[test]
fn train_eval_infer_attack_inspect_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["generate", "--count", "48", "--out", p(&d.join("train")), "--seed", "1"]);
    ok(&["generate", "--count", "16", "--out", p(&d.join("val")), "--seed", "2"]);
    let cfg = r#"{"width":224,"height":28,"slots":8,"classes":10,"class_kernel":3,"slot_kernel":1,
        "labels":["0","1","2","3","4","5","6","7","8","9"],
        "encoder":{"kind":"bilstm","hidden_per_direction":4,"second_hidden":6,
                   "tcn_channels":[32,48,48],"tcn_dilations":[1,2,4],"tcn_kernel":3}}"#;
    fs::write(d.join("cfg.json"), cfg).unwrap();
    let model = d.join("m.gtr");
    let history = d.join("h.jsonl");
    let out = ok(&[
        "train",
        "--data",
        p(&d.join("train")),
        "--val",
        p(&d.join("val")),
        "--config",
        p(&d.join("cfg.json")),
        "--epochs",
        "2",
        "--batch",
        "16",
        "--sam",
        "--out",
        p(&model),
        "--history",
        p(&history),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 2);
    assert_eq!(fs::read_to_string(&history).unwrap(), stdout);
    assert_eq!(&fs::read(&model).unwrap()[..4], b"GTRN");

    let report = d.join("eval.json");
    ok(&["eval", "--model", p(&model), "--data", p(&d.join("val")), "--json", p(&report), "--latency-runs", "3"]);
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    for k in ["exact_match_accuracy", "per_char_accuracy", "map", "mdp", "mean_latency_ms", "confusion"] {
        assert!(r.get(k).is_some(), "{k}");
    }
    assert_eq!(r["samples"], 16);

    let image = d.join("val/00000000.pgm");
    let out = ok(&["infer", "--model", p(&model), "--image", p(&image)]);
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    let decoded = lines.next().unwrap();
    assert_eq!(decoded.chars().count(), 8);
    assert!(decoded.chars().all(|c| c.is_ascii_digit()));
    assert_eq!(lines.next().unwrap().split(' ').count(), 8);

    let attack = d.join("attack.json");
    ok(&["attack", "--model", p(&model), "--data", p(&d.join("val")), "--epsilons", "0,0.1", "--json", p(&attack)]);
    let a: serde_json::Value = serde_json::from_slice(&fs::read(&attack).unwrap()).unwrap();
    assert_eq!(a["per_epsilon"].as_array().unwrap().len(), 2);
    assert_eq!(a["per_epsilon"][0]["adversarial_accuracy"], a["clean_accuracy"]);

    let insp = d.join("inspect");
    ok(&["inspect", "--model", p(&model), "--image", p(&image), "--out", p(&insp)]);
    let dims = |name: &str| {
        let text = fs::read_to_string(insp.join(format!("{name}.csv"))).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        (rows.len(), rows[0].split(',').count())
    };
    assert_eq!(dims("latent"), (6, 224));
    assert_eq!(dims("class_map"), (10, 224));
    assert_eq!(dims("slot_weights"), (8, 224));
    assert_eq!(dims("logits"), (8, 10));
    for name in ["latent", "class_map", "slot_weights", "logits"] {
        assert!(insp.join(format!("{name}.pgm")).exists());
    }
    // nothing written beyond the requested targets
    let mut top: Vec<_> = fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    top.sort();
    assert_eq!(top, ["attack.json", "cfg.json", "eval.json", "h.jsonl", "inspect", "m.gtr", "train", "val"]);

    let wrong = d.join("wrong.pgm");
    fs::write(&wrong, b"P5\n3 2\n255\n\0\0\0\0\0\0").unwrap();
    assert_eq!(geotr(&["infer", "--model", p(&model), "--image", p(&wrong)]).status.code(), Some(1));
}
