use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hsgppt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsgppt"))
        .args(args)
        .env_remove("HSGPPT_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hsgppt(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    hsgppt(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

fn small_graph(dir: &Path) -> PathBuf {
    let g = dir.join("g");
    ok(&["gen-csbm", "--out", s(&g), "--n", "120", "--f", "16", "--d", "8", "--h", "0.3", "--seed", "4"]);
    g
}

/// Every file listed in the manifest, byte for byte.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let manifest = read_json(dir.join("manifest.json"));
    let mut files: Vec<(String, Vec<u8>)> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            let name = f.as_str().unwrap().to_string();
            let bytes = fs::read(dir.join(&name)).unwrap();
            (name, bytes)
        })
        .collect();
    files.push(("manifest.json".into(), fs::read(dir.join("manifest.json")).unwrap()));
    files
}

#[test]
fn every_subcommand_writes_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let g = small_graph(tmp.path());
    let analyze = tmp.path().join("analyze");
    let model = tmp.path().join("pretrain");
    let tuned = tmp.path().join("tune");
    let eval = tmp.path().join("eval");
    let ablate = tmp.path().join("ablate");
    let sweep = tmp.path().join("sweep");
    let grad = tmp.path().join("grad");
    ok(&["analyze", "--data", s(&g), "--out", s(&analyze)]);
    ok(&["pretrain", "--data", s(&g), "--out", s(&model), "--epochs", "5", "--hidden", "8"]);
    ok(&[
        "tune", "--data", s(&g), "--model", s(&model.join("model.ckpt")), "--out", s(&tuned), "--epochs", "5",
    ]);
    ok(&[
        "eval", "--data", s(&g), "--out", s(&eval), "--seeds", "0,1", "--pretrain-epochs", "3", "--hidden", "8",
        "--epochs", "5",
    ]);
    ok(&[
        "ablate", "--data", s(&g), "--out", s(&ablate), "--seeds", "0", "--pretrain-epochs", "3", "--hidden", "8",
        "--epochs", "5",
    ]);
    ok(&["sweep", "--out", s(&sweep), "--h-values", "0,1", "--seeds", "0", "--n", "100", "--epochs", "5"]);
    ok(&["gradcheck", "--out", s(&grad)]);

    let expect: [(&Path, &str, &[&str]); 8] = [
        (&g, "gen-csbm", &["edges.tsv", "features.bin", "labels.tsv", "meta.json", "config.json"]),
        (&analyze, "analyze", &["analysis.json", "s_high.tsv", "filter_curves.tsv", "config.json"]),
        (&model, "pretrain", &["model.ckpt", "history.tsv", "pretrain.json", "config.json"]),
        (&tuned, "tune", &["prompt_state.bin", "history.tsv", "tune.json", "split.json", "config.json"]),
        (&eval, "eval", &["report.json", "report.txt", "config.json"]),
        (&ablate, "ablate", &["ablation.json", "ablation.txt", "config.json"]),
        (&sweep, "sweep", &["sweep.tsv", "sweep.json", "config.json"]),
        (&grad, "gradcheck", &["gradcheck.json", "config.json"]),
    ];
    for (dir, command, files) in expect {
        let manifest = read_json(dir.join("manifest.json"));
        assert_eq!(manifest["command"], command);
        let listed: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        for f in files {
            assert!(listed.contains(f), "{command}: {f} missing from {listed:?}");
            assert!(dir.join(f).exists(), "{command}: {f} not written");
        }
    }

    let report = read_json(eval.join("report.json"));
    assert_eq!(report["per_seed"].as_array().unwrap().len(), 2);
    let ablation = read_json(ablate.join("ablation.json"));
    assert_eq!(ablation["rows"].as_array().unwrap().len(), 5);
    assert_eq!(read_json(grad.join("gradcheck.json"))["passed"], true);
    let analysis = read_json(analyze.join("analysis.json"));
    assert!(analysis["decomposition"]["value"]["max_abs_error"].as_f64().unwrap() < 1e-9);
    let tune = read_json(tuned.join("tune.json"));
    assert_eq!(tune["backbone_hash"], read_json(model.join("pretrain.json"))["backbone_hash"]);
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["gen-csbm", "--out", s(&out), "--bogus-flag", "1"]), 1);
    assert_eq!(code(&["gen-csbm", "--out", s(&out), "--h", "1.5"]), 1);
    assert_eq!(code(&["analyze", "--out", s(&out)]), 1);
    assert_eq!(code(&["analyze", "--data", s(&tmp.path().join("missing")), "--out", s(&out)]), 2);

    let broken = tmp.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    fs::write(broken.join("meta.json"), "{ not json").unwrap();
    assert_eq!(code(&["analyze", "--data", s(&broken), "--out", s(&out)]), 2);

    // a zero tolerance cannot be met
    assert_eq!(code(&["gradcheck", "--out", s(&out), "--tolerance", "0"]), 3);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.json");
    fs::write(&cfg, r#"{ "csbm": { "n": 80, "f": 8, "d_avg": 6.0, "h": 0.7 } }"#).unwrap();
    let out = tmp.path().join("g");
    ok(&["gen-csbm", "--config", s(&cfg), "--out", s(&out), "--n", "60"]);
    let resolved = read_json(out.join("config.json"));
    assert_eq!(resolved["csbm"]["n"], 60);
    assert_eq!(resolved["csbm"]["h"], 0.7);
    assert_eq!(resolved["csbm"]["f"], 8);
    assert_eq!(resolved["csbm"]["mu"], 10.0);
    assert_eq!(read_json(out.join("meta.json"))["n_nodes"], 60);

    // the resolved config reproduces the run
    let again = tmp.path().join("g2");
    ok(&["gen-csbm", "--config", s(&out.join("config.json")), "--out", s(&again)]);
    assert_eq!(fs::read(out.join("edges.tsv")).unwrap(), fs::read(again.join("edges.tsv")).unwrap());

    fs::write(&cfg, r#"{ "csbm": { "n": 80 }, "colour": "blue" }"#).unwrap();
    assert_eq!(code(&["gen-csbm", "--config", s(&cfg), "--out", s(&out)]), 1);
    fs::write(&cfg, r#"{ "csbm": { "nodes": 80 } }"#).unwrap();
    assert_eq!(code(&["gen-csbm", "--config", s(&cfg), "--out", s(&out)]), 1);
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let g = small_graph(tmp.path());
    let model = tmp.path().join("model");
    ok(&["pretrain", "--data", s(&g), "--out", s(&model), "--epochs", "8", "--hidden", "8"]);
    let runs: Vec<Vec<String>> = vec![
        vec!["analyze".into(), "--data".into(), s(&g).into()],
        vec!["pretrain".into(), "--data".into(), s(&g).into(), "--epochs".into(), "8".into(), "--hidden".into(), "8".into()],
        vec![
            "tune".into(), "--data".into(), s(&g).into(), "--model".into(), s(&model.join("model.ckpt")).into(),
            "--epochs".into(), "12".into(),
        ],
        vec![
            "eval".into(), "--data".into(), s(&g).into(), "--seeds".into(), "0,1".into(), "--pretrain-epochs".into(),
            "4".into(), "--hidden".into(), "8".into(), "--epochs".into(), "6".into(),
        ],
    ];
    for (i, run) in runs.iter().enumerate() {
        let first = tmp.path().join(format!("a{i}"));
        let second = tmp.path().join(format!("b{i}"));
        let mut a: Vec<&str> = run.iter().map(String::as_str).collect();
        a.extend(["--out", s(&first)]);
        ok(&a);
        ok(&[run[0].as_str(), "--config", s(&first.join("config.json")), "--out", s(&second)]);
        let (x, y) = (snapshot(&first), snapshot(&second));
        assert_eq!(x.len(), y.len());
        for ((name, bytes), (_, other)) in x.iter().zip(&y) {
            if name == "config.json" {
                continue;
            }
            assert!(bytes == other, "{}: {name} differs between runs", run[0]);
        }
    }
}

#[test]
fn low_pass_variant_needs_matching_backbone() {
    let tmp = tempfile::tempdir().unwrap();
    let g = small_graph(tmp.path());
    let model = tmp.path().join("m");
    ok(&["pretrain", "--data", s(&g), "--out", s(&model), "--epochs", "3", "--hidden", "8"]);
    let ckpt = model.join("model.ckpt");
    let out = tmp.path().join("t");
    assert_eq!(
        code(&["tune", "--data", s(&g), "--model", s(&ckpt), "--out", s(&out), "--variant", "low_pass_only"]),
        1
    );
    let low = tmp.path().join("low");
    ok(&["pretrain", "--data", s(&g), "--out", s(&low), "--ks", "0", "--epochs", "3", "--hidden", "8"]);
    ok(&[
        "tune", "--data", s(&g), "--model", s(&low.join("model.ckpt")), "--out", s(&out), "--variant",
        "low_pass_only", "--epochs", "3",
    ]);
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let g = small_graph(tmp.path());
    let ckpt = tmp.path().join("bad.ckpt");
    fs::write(&ckpt, b"HSGPPTCK garbage").unwrap();
    let out = tmp.path().join("t");
    assert_eq!(code(&["tune", "--data", s(&g), "--model", s(&ckpt), "--out", s(&out)]), 2);
}
