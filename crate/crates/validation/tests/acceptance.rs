use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Duration;

use hsgppt::csbm::{generate, CsbmParams};
use hsgppt::eval::{filter_sweep_study, run_ablation, RunOptions, SweepConfig};
use hsgppt::graph::{corrupt_features, edge_homophily, kshot_split, Graph, LaplacianKind, Labels};
use hsgppt::linalg::Mat;
use hsgppt::nn::{finite_diff_check, softmax_over_filters};
use hsgppt::pretrain::{freeze, pretrain, PretrainConfig, PretrainObjective, PretrainedModel};
use hsgppt::prompt::{
    normalize_prompt, prompted_encode, tune, FeatureStats, PromptState, TuneConfig, TuneObjective, Variant,
};
use hsgppt::spectral::{
    beta_constant, beta_filter_apply, high_freq_profile, profile_mean, theorem1_check, BetaFilter, ReferenceFilter,
    SpectralFilter,
};
use hsgppt_validation::{
    dense_normalized_laplacian, jacobi_eigen, run_all, spectral_apply, Criterion, Verdict,
};
use rand::Rng;

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

/// Random simple graph on `n` nodes: a ring plus extra chords.
fn random_edges(rng: &mut hsgppt::rng::Rng, n: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for i in 0..n {
        let (a, b) = (i, (i + 1) % n);
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    for _ in 0..extra {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    set.into_iter().collect()
}

fn random_mat(rng: &mut hsgppt::rng::Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

fn perturb(rng: &mut hsgppt::rng::Rng, params: Vec<&mut hsgppt::nn::Param>, scale: f64) {
    for p in params {
        for v in p.value.as_mut_slice() {
            *v += rng.random_range(-scale..scale);
        }
    }
}

fn closed_forms() -> Verdict {
    let constants = [((0, 2), 1.5), ((1, 1), 3.0), ((2, 0), 1.5)];
    let exact = constants.iter().all(|&((k, r), want)| beta_constant(k, r) == want);
    let responses = [((0, 2), 0.0, 1.5), ((1, 1), 1.0, 0.75), ((2, 0), 2.0, 1.5)];
    let worst = responses
        .iter()
        .map(|&((k, r), lambda, want)| (BetaFilter::new(k, r).response(lambda).unwrap() - want).abs())
        .fold(0.0, f64::max);
    Verdict::new(exact && worst <= 1e-12, format!("constants exact: {exact}, max response error {worst:.1e}"))
}

fn spectral_oracle() -> Verdict {
    let mut rng = hsgppt::rng::seeded(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=100);
        let extra = rng.random_range(0..3 * n);
        let edges = random_edges(&mut rng, n, extra);
        let x = random_mat(&mut rng, n, 3, 1.0);
        let g = Graph::new("random", n, edges.clone(), x.clone(), None).unwrap();
        let l = g.laplacian(LaplacianKind::Normalized);
        let (values, vectors) = jacobi_eigen(&dense_normalized_laplacian(n, &edges));
        for order in 0..=3 {
            for k in 0..=order {
                let r = order - k;
                let c = beta_constant(k, r);
                let poly = beta_filter_apply(&l, k, r, &x).unwrap();
                let oracle = spectral_apply(
                    &values,
                    &vectors,
                    |lam| c * (lam / 2.0).powi(k as i32) * (1.0 - lam / 2.0).powi(r as i32),
                    &x,
                );
                worst = worst.max(poly.max_abs_diff(&oracle));
            }
        }
    }
    Verdict::new(worst <= 1e-8, format!("max |poly - U g U^T X| = {worst:.2e}"))
}

fn decomposition_identity() -> Verdict {
    let mut rng = hsgppt::rng::seeded(77);
    let (mut worst_report, mut worst_oracle) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(4..=80);
        let c = rng.random_range(2..=4);
        let extra = rng.random_range(0..4 * n);
        let edges = random_edges(&mut rng, n, extra);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = Graph::new(
            "random",
            n,
            edges.clone(),
            Mat::column_vector(&x),
            Some(Labels::new(labels.iter().map(|&y| Some(y)).collect(), c).unwrap()),
        )
        .unwrap();
        let report = theorem1_check(&g, &x).unwrap();
        worst_report = worst_report.max(report.abs_error);
        // both sides recomputed from the edge list
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let lhs: f64 = edges.iter().map(|&(u, v)| (x[u] - x[v]).powi(2)).sum::<f64>() / energy;
        let (mut intra, mut inter, mut n_intra) = (0.0, 0.0, 0usize);
        for &(u, v) in &edges {
            let d = (x[u] - x[v]).powi(2) / energy;
            if labels[u] == labels[v] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
            }
        }
        let m = edges.len() as f64;
        let h = n_intra as f64 / m;
        let mean = |s: f64, cnt: usize| if cnt == 0 { 0.0 } else { s / cnt as f64 };
        let rhs = m * (h * mean(intra, n_intra) + (1.0 - h) * mean(inter, edges.len() - n_intra));
        worst_oracle = worst_oracle.max((lhs - rhs).abs()).max((lhs - report.lhs).abs());
    }
    Verdict::new(
        worst_report < 1e-9 && worst_oracle < 1e-9,
        format!("max abs_error {worst_report:.2e}, independent recomputation {worst_oracle:.2e}"),
    )
}

fn s_high_monotonicity() -> Verdict {
    let hs = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let means: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let per_seed: Vec<f64> = (0..3u64)
                .map(|seed| {
                    let g = generate(&CsbmParams {
                        n: 3000,
                        f: 128,
                        d_avg: 50.0,
                        mu: 10.0,
                        h,
                        seed,
                    })
                    .unwrap();
                    profile_mean(&high_freq_profile(&g, LaplacianKind::Normalized)).unwrap()
                })
                .collect();
            per_seed.iter().sum::<f64>() / per_seed.len() as f64
        })
        .collect();
    let gaps: Vec<f64> = means.windows(2).map(|w| w[0] - w[1]).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    Verdict::new(
        min_gap >= 0.01,
        format!("mean S_high over h = [{}], smallest gap {min_gap:.4} (need >= 0.01)", shown.join(", ")),
    )
}

fn csbm_calibration() -> Verdict {
    let mut worst_h = 0.0f64;
    let mut worst_d = 0.0f64;
    for i in 1..=9 {
        let h = i as f64 / 10.0;
        let g = generate(&CsbmParams {
            h,
            seed: i,
            ..CsbmParams::default()
        })
        .unwrap();
        worst_h = worst_h.max((edge_homophily(&g).unwrap() - h).abs());
        let degree = 2.0 * g.n_edges() as f64 / g.n_nodes() as f64;
        worst_d = worst_d.max((degree - 50.0).abs());
    }
    Verdict::new(
        worst_h <= 0.02 && worst_d <= 2.0,
        format!("max |homophily - h| {worst_h:.4}, max |degree - 50| {worst_d:.3}"),
    )
}

fn filter_sweep_pattern() -> Verdict {
    let cfg = SweepConfig::default();
    let table = filter_sweep_study(&cfg).unwrap();
    let mut bad = Vec::new();
    for &seed in &cfg.seeds {
        let (hi, lo) = (table.winner(1.0, seed), table.winner(0.0, seed));
        if hi != Some(ReferenceFilter::Low) {
            bad.push(format!("seed {seed}: h=1 best {hi:?}"));
        }
        if lo != Some(ReferenceFilter::High) {
            bad.push(format!("seed {seed}: h=0 best {lo:?}"));
        }
    }
    let detail = if bad.is_empty() {
        format!("low wins at h=1 and high at h=0 for seeds {:?}", cfg.seeds)
    } else {
        bad.join("; ")
    };
    Verdict::new(bad.is_empty(), detail)
}

fn gradient_checks() -> Verdict {
    let mut rng = hsgppt::rng::seeded(7);
    let g = generate(&CsbmParams {
        n: 12,
        f: 4,
        d_avg: 4.0,
        mu: 1.0,
        h: 0.5,
        seed: 3,
    })
    .unwrap();
    let mut model = PretrainedModel::new(hsgppt::spectral::FilterBank::new(2), 4, 8, 1);
    perturb(&mut rng, model.params_mut(), 0.3);
    let negative = corrupt_features(&g, 5);
    let mut pre = PretrainObjective::new(model.clone(), &g, &negative).unwrap();
    let a = finite_diff_check(&mut pre, 1e-6, 1e-4, 11).unwrap();

    let frozen = freeze(model);
    let cfg = TuneConfig {
        n_prompt: 3,
        seed: 2,
        ..TuneConfig::default()
    };
    let mut state = PromptState::new(frozen.model(), &FeatureStats::of(g.features()), 2, &cfg);
    perturb(&mut rng, state.params_mut(), 0.2);
    let mut obj = TuneObjective::new(&g, &frozen, state, vec![0, 2, 5, 7, 9, 11]).unwrap();
    let b = finite_diff_check(&mut obj, 1e-6, 1e-4, 12).unwrap();
    Verdict::new(
        a.passed && b.passed,
        format!(
            "max rel error pretrain {:.2e}, prompt {:.2e}; max abs difference {:.1e}, {:.1e}",
            a.max_rel_error, b.max_rel_error, a.max_abs_error, b.max_abs_error
        ),
    )
}

fn ablation_graph() -> Graph {
    generate(&CsbmParams {
        n: 1000,
        h: 0.2,
        seed: 0,
        ..CsbmParams::default()
    })
    .unwrap()
}

fn frozen_contract() -> Verdict {
    let g = ablation_graph();
    let frozen = freeze(pretrain(&g, &PretrainConfig::default()).unwrap().model);
    let bytes = frozen.model().to_checkpoint().to_bytes();
    let hash = frozen.hash().to_string();
    let split = kshot_split(&g, 5, 3).unwrap();
    let masked = g.with_hidden_labels(&split.test_indices);
    let cfg = TuneConfig::default();
    let out = tune(&masked, &frozen, &split, &cfg).unwrap();
    let same_bytes = frozen.model().to_checkpoint().to_bytes() == bytes;
    let same_hash = frozen.model().content_hash() == hash && frozen.verify().is_ok();
    Verdict::new(
        same_bytes && same_hash && out.history.len() == cfg.epochs,
        format!("{} epochs, checkpoint bytes unchanged: {same_bytes}, hash unchanged: {same_hash}", out.history.len()),
    )
}

fn invariants() -> Verdict {
    let mut rng = hsgppt::rng::seeded(99);
    let mut softmax_err = 0.0f64;
    for _ in 0..200 {
        let rows = rng.random_range(1..6);
        let cols = rng.random_range(1..70);
        let w = random_mat(&mut rng, rows, cols, 30.0);
        let s = softmax_over_filters(&w);
        for total in s.col_sums() {
            softmax_err = softmax_err.max((total - 1.0).abs());
        }
    }
    let g = generate(&CsbmParams {
        n: 300,
        f: 32,
        d_avg: 10.0,
        h: 0.4,
        seed: 6,
        ..CsbmParams::default()
    })
    .unwrap();
    let mut idem_err = 0.0f64;
    for _ in 0..50 {
        let rows = rng.random_range(2..15);
        let p = random_mat(&mut rng, rows, 32, 5.0);
        let once = normalize_prompt(&p, &g);
        idem_err = idem_err.max(once.max_abs_diff(&normalize_prompt(&once, &g)));
    }
    let mut model = PretrainedModel::new(hsgppt::spectral::FilterBank::new(2), 32, 16, 4);
    perturb(&mut rng, model.params_mut(), 0.3);
    let weight_err = model
        .filter_weights()
        .col_sums()
        .iter()
        .map(|t| (t - 1.0).abs())
        .fold(softmax_err, f64::max);
    let frozen = freeze(model);
    let empty = TuneConfig {
        n_prompt: 0,
        ..TuneConfig::default()
    };
    let state = PromptState::new(frozen.model(), &FeatureStats::of(g.features()), 2, &empty);
    let encode_err = prompted_encode(&g, &frozen, &state)
        .unwrap()
        .max_abs_diff(&frozen.model().encode(&g).unwrap().integrated);
    Verdict::new(
        weight_err <= 1e-12 && idem_err <= 1e-10 && encode_err <= 1e-12,
        format!("softmax {weight_err:.1e}, idempotence {idem_err:.1e}, empty prompt {encode_err:.1e}"),
    )
}

fn directional_ablation() -> Verdict {
    let g = ablation_graph();
    let opts = RunOptions {
        k: 5,
        seeds: vec![0, 1, 2, 3, 4],
        threads: 1,
    };
    let report = run_ablation(&g, &PretrainConfig::default(), &TuneConfig::default(), &Variant::ALL, &opts).unwrap();
    let f1 = |v: Variant| report.row(v).unwrap().mean_macro_f1;
    let (full, single, none, low) =
        (f1(Variant::Full), f1(Variant::SinglePrompt), f1(Variant::NoPrompt), f1(Variant::LowPassOnly));
    let ok = full >= single - 0.01 && single >= none - 0.01 && full >= low - 0.01;
    Verdict::new(
        ok,
        format!(
            "macro-F1 full {full:.4}, single_prompt {single:.4}, no_prompt {none:.4}, low_pass_only {low:.4}, no_prompt_norm {:.4}",
            f1(Variant::NoPromptNorm)
        ),
    )
}

fn cli(args: &[&str]) {
    let mut full = vec!["hsgppt", "--quiet"];
    full.extend_from_slice(args);
    if let Err(e) = hsgppt_cli::run(&full) {
        panic!("{args:?}: {e}");
    }
}

fn manifest_files(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_string()).collect()
}

/// The resolved config with its output location removed.
fn config_without_out(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("out");
    v
}

fn determinism() -> Verdict {
    std::env::remove_var("HSGPPT_THREADS");
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let graph = p("graph");
    cli(&["gen-csbm", "--out", &graph, "--n", "200", "--f", "16", "--d", "10", "--h", "0.3"]);
    let model = p("model");
    cli(&["pretrain", "--data", &graph, "--out", &model, "--epochs", "20", "--hidden", "16"]);
    let ckpt = format!("{model}/model.ckpt");
    let runs: Vec<Vec<&str>> = vec![
        vec!["gen-csbm", "--n", "200", "--f", "16", "--d", "10", "--h", "0.3"],
        vec!["analyze", "--data", &graph],
        vec!["pretrain", "--data", &graph, "--epochs", "20", "--hidden", "16"],
        vec!["tune", "--data", &graph, "--model", &ckpt, "--epochs", "40"],
        vec!["eval", "--data", &graph, "--seeds", "0,1", "--pretrain-epochs", "10", "--hidden", "16", "--epochs", "20"],
        vec!["ablate", "--data", &graph, "--seeds", "0", "--pretrain-epochs", "10", "--hidden", "16", "--epochs", "20"],
        vec!["sweep", "--h-values", "0,1", "--seeds", "0", "--n", "200", "--epochs", "30"],
        vec!["gradcheck"],
    ];
    let mut mismatches = Vec::new();
    let mut compared = 0usize;
    for (i, run) in runs.iter().enumerate() {
        let first = p(&format!("first{i}"));
        let second = p(&format!("second{i}"));
        let mut args = run.clone();
        args.extend(["--out", first.as_str()]);
        cli(&args);
        let config = format!("{first}/config.json");
        cli(&[run[0], "--config", &config, "--out", &second]);
        let (a, b) = (Path::new(&first), Path::new(&second));
        if manifest_files(a) != manifest_files(b) || config_without_out(a) != config_without_out(b) {
            mismatches.push(format!("{}: manifest or config", run[0]));
            continue;
        }
        for f in manifest_files(a).into_iter().filter(|f| f != "config.json") {
            compared += 1;
            if fs::read(a.join(&f)).unwrap() != fs::read(b.join(&f)).unwrap() {
                mismatches.push(format!("{}: {f}", run[0]));
            }
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{} subcommands, {compared} output files identical on rerun", runs.len())
    } else {
        format!("differences: {}", mismatches.join(", "))
    };
    Verdict::new(mismatches.is_empty(), detail)
}

fn budget() -> Verdict {
    let stats = FeatureStats {
        mean: vec![0.0; 128],
        std: vec![1.0; 128],
    };
    let backbone = PretrainedModel::new(hsgppt::spectral::FilterBank::new(2), 128, 64, 0);
    let state = PromptState::new(&backbone, &stats, 2, &TuneConfig::default());
    let ratio = state.num_params() as f64 / backbone.num_params() as f64;

    let g = generate(&CsbmParams {
        n: 5000,
        d_avg: 40.0,
        h: 0.2,
        seed: 1,
        ..CsbmParams::default()
    })
    .unwrap();
    let frozen = freeze(PretrainedModel::new(hsgppt::spectral::FilterBank::new(2), 128, 64, 0));
    let split = kshot_split(&g, 5, 2).unwrap();
    let cfg = TuneConfig {
        epochs: 30,
        val_every: 1,
        ..TuneConfig::default()
    };
    let out = tune(&g.with_hidden_labels(&split.test_indices), &frozen, &split, &cfg).unwrap();
    let worst = out.history.iter().map(|e| e.elapsed).max().unwrap();
    Verdict::new(
        ratio < 0.05 && worst < Duration::from_millis(250),
        format!(
            "prompt+head {} / backbone {} params = {:.2}% (need < 5%); slowest epoch {:.0?} on {} nodes, {} edges (need < 250ms)",
            state.num_params(),
            backbone.num_params(),
            100.0 * ratio,
            worst,
            g.n_nodes(),
            g.n_edges()
        ),
    )
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "filter closed forms", budget: secs(1), run: closed_forms },
        Criterion { id: 2, name: "spectral oracle equivalence", budget: secs(10), run: spectral_oracle },
        Criterion { id: 3, name: "homophily decomposition identity", budget: secs(5), run: decomposition_identity },
        Criterion { id: 4, name: "S_high monotone in homophily", budget: secs(120), run: s_high_monotonicity },
        Criterion { id: 5, name: "CSBM calibration", budget: secs(60), run: csbm_calibration },
        Criterion { id: 6, name: "filter sweep pattern", budget: secs(300), run: filter_sweep_pattern },
        Criterion { id: 7, name: "gradient correctness", budget: secs(30), run: gradient_checks },
        Criterion { id: 8, name: "frozen backbone over a full tune", budget: None, run: frozen_contract },
        Criterion { id: 9, name: "normalization and integration", budget: None, run: invariants },
        Criterion { id: 10, name: "directional ablation", budget: secs(900), run: directional_ablation },
        Criterion { id: 11, name: "bit-exact reruns", budget: None, run: determinism },
        Criterion { id: 12, name: "prompt budget and epoch time", budget: None, run: budget },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if !run_all(&criteria, &only) {
        std::process::exit(1);
    }
}
