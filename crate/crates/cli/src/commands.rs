//! One function per subcommand.

use std::path::Path;

use hsgppt::csbm::{self, CsbmParams};
use hsgppt::eval::{
    accuracy, argmax_rows, filter_sweep_study, macro_f1, run_ablation, run_inductive_timed, run_transductive_timed,
    split_seed, PhaseTimings, RunOptions,
};
use hsgppt::graph::{
    corrupt_features, edge_homophily, kshot_split, load_graph_with_stats, save_graph, FeatureTransform, Graph,
    LaplacianKind,
};
use hsgppt::linalg::Mat;
use hsgppt::nn::finite_diff_check;
use hsgppt::pretrain::{freeze, PretrainConfig, PretrainObjective, PretrainedModel};
use hsgppt::prompt::{make_ablation, predict, FeatureStats, PromptState, TuneConfig, TuneObjective, Variant};
use hsgppt::spectral::{
    eigendecompose_with_limit, high_freq_profile, lambda_grid, profile_mean, spectral_energy, theorem1_check,
    write_filter_curves_tsv, write_profile_tsv, FilterBank, ReferenceFilter, SpectralFilter,
};
use serde::Serialize;

use crate::config::{
    load_or_default, required, thread_cap, AblateCmdConfig, AnalyzeConfig, EvalCmdConfig, GenCsbmConfig,
    GradcheckConfig, Mode, Outputs, PretrainCmdConfig, SweepCmdConfig, TuneCmdConfig,
};
use crate::{
    AblateArgs, AnalyzeArgs, CliError, EvalArgs, GenCsbmArgs, GradcheckArgs, PretrainArgs, PretrainFlags, SweepArgs,
    TuneArgs, TuneFlags,
};

type CliResult = Result<(), CliError>;

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<std::path::PathBuf>, value: &Option<std::path::PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn apply_pretrain_flags(cfg: &mut PretrainConfig, f: PretrainFlags) {
    set(&mut cfg.order, f.order);
    if f.ks.is_some() {
        cfg.ks = f.ks;
    }
    set(&mut cfg.hidden, f.hidden);
    set(&mut cfg.lr, f.pretrain_lr);
    set(&mut cfg.epochs, f.pretrain_epochs);
    set(&mut cfg.patience, f.patience);
}

fn apply_tune_flags(cfg: &mut TuneConfig, f: TuneFlags) {
    set(&mut cfg.n_prompt, f.n_prompt);
    set(&mut cfg.tau_inner, f.tau_inner);
    set(&mut cfg.tau_cross, f.tau_cross);
    set(&mut cfg.lr, f.lr);
    set(&mut cfg.epochs, f.epochs);
    set(&mut cfg.val_every, f.val_every);
    set(&mut cfg.metric, f.metric);
}

fn load(data: &Path, transform: FeatureTransform) -> Result<Graph, CliError> {
    let (g, stats) = load_graph_with_stats(data, transform)?;
    if stats.self_loops_dropped + stats.duplicates_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            data.display(),
            stats.self_loops_dropped,
            stats.duplicates_dropped
        );
    }
    Ok(g)
}

fn log_timings(timings: &[PhaseTimings]) {
    for t in timings {
        log::info!(
            "seed {}: pretrain {:.2?}, tune {:.2?}, score {:.2?}",
            t.seed,
            t.pretrain,
            t.tune,
            t.score
        );
    }
}

pub fn gen_csbm(a: GenCsbmArgs) -> CliResult {
    let mut cfg: GenCsbmConfig = load_or_default(a.common.config.as_deref())?;
    set_path(&mut cfg.out, &a.common.out);
    let p = &mut cfg.csbm;
    set(&mut p.n, a.n);
    set(&mut p.f, a.f);
    set(&mut p.d_avg, a.d);
    set(&mut p.h, a.h);
    set(&mut p.mu, a.mu);
    set(&mut p.seed, a.seed);
    cfg.csbm.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out_dir = required(&cfg.out, "out")?;
    let mut out = Outputs::create(&out_dir)?;
    let g = csbm::generate(&cfg.csbm)?;
    for path in save_graph(&g, &out_dir)? {
        out.record(&path);
    }
    out.json("config.json", &cfg)?;
    say!(
        "{}: {} nodes, {} edges, edge homophily {:.4}",
        g.name(),
        g.n_nodes(),
        g.n_edges(),
        edge_homophily(&g)?
    );
    out.finish("gen-csbm")
}

#[derive(Serialize)]
struct DecompositionSummary {
    dims_checked: usize,
    max_abs_error: f64,
    mean_lhs: f64,
    mean_rhs_unnorm: f64,
    mean_rhs_half: f64,
    homophily: f64,
}

#[derive(Serialize)]
struct EnergySummary {
    /// Mean share of energy with λ < 2/3.
    low: f64,
    /// 2/3 ≤ λ < 4/3.
    mid: f64,
    /// λ ≥ 4/3.
    high: f64,
}

#[derive(Serialize)]
struct Section<T> {
    available: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

impl<T> Section<T> {
    fn from(r: Result<T, String>) -> Self {
        match r {
            Ok(v) => Section {
                available: true,
                value: Some(v),
                reason: None,
            },
            Err(reason) => Section {
                available: false,
                value: None,
                reason: Some(reason),
            },
        }
    }
}

#[derive(Serialize)]
struct Analysis {
    dataset: String,
    n_nodes: usize,
    n_edges: usize,
    feature_dim: usize,
    homophily: Section<f64>,
    mean_s_high: Option<f64>,
    mean_s_high_unnormalized: Option<f64>,
    decomposition: Section<DecompositionSummary>,
    spectral_energy: Section<EnergySummary>,
}

fn decomposition_summary(g: &Graph) -> Result<DecompositionSummary, String> {
    if g.labels().is_none() {
        return Err("dataset has no labels".into());
    }
    let x = g.features();
    let (mut count, mut max_err, mut lhs, mut rhs, mut half, mut h) = (0usize, 0.0f64, 0.0, 0.0, 0.0, 0.0);
    for j in 0..x.cols() {
        match theorem1_check(g, &x.col(j)) {
            Ok(r) => {
                count += 1;
                max_err = max_err.max(r.abs_error);
                lhs += r.lhs;
                rhs += r.rhs_unnorm;
                half += r.rhs_half;
                h = r.homophily;
            }
            Err(hsgppt::Error::ZeroSignal(_)) => continue,
            Err(e) => return Err(e.to_string()),
        }
    }
    if count == 0 {
        return Err("every feature column is zero".into());
    }
    let c = count as f64;
    Ok(DecompositionSummary {
        dims_checked: count,
        max_abs_error: max_err,
        mean_lhs: lhs / c,
        mean_rhs_unnorm: rhs / c,
        mean_rhs_half: half / c,
        homophily: h,
    })
}

fn energy_summary(g: &Graph, limit: usize) -> Result<EnergySummary, String> {
    let decomp =
        eigendecompose_with_limit(&g.laplacian(LaplacianKind::Normalized), limit).map_err(|e| e.to_string())?;
    let x = g.features();
    let mut bands = [0.0f64; 3];
    let mut used = 0usize;
    for j in 0..x.cols() {
        let Ok(e) = spectral_energy(&decomp, &x.col(j)) else {
            continue;
        };
        used += 1;
        for (lambda, mass) in decomp.eigenvalues.iter().zip(e) {
            let band = if *lambda < 2.0 / 3.0 {
                0
            } else if *lambda < 4.0 / 3.0 {
                1
            } else {
                2
            };
            bands[band] += mass;
        }
    }
    if used == 0 {
        return Err("every feature column is zero".into());
    }
    let u = used as f64;
    Ok(EnergySummary {
        low: bands[0] / u,
        mid: bands[1] / u,
        high: bands[2] / u,
    })
}

pub fn analyze(a: AnalyzeArgs) -> CliResult {
    let mut cfg: AnalyzeConfig = load_or_default(a.common.config.as_deref())?;
    set_path(&mut cfg.out, &a.common.out);
    set_path(&mut cfg.data, &a.data.data);
    set(&mut cfg.transform, a.data.transform);
    set(&mut cfg.dense_limit, a.dense_limit);
    let data = required(&cfg.data, "data")?;
    let mut out = Outputs::create(&required(&cfg.out, "out")?)?;
    let g = load(&data, cfg.transform)?;

    let profile = high_freq_profile(&g, LaplacianKind::Normalized);
    write_profile_tsv(&out.path("s_high.tsv"), &profile)?;
    let unnorm = high_freq_profile(&g, LaplacianKind::Unnormalized);
    write_profile_tsv(&out.path("s_high_unnormalized.tsv"), &unnorm)?;

    let bank = FilterBank::new(2);
    let mut filters: Vec<&dyn SpectralFilter> = bank.filters().iter().map(|f| f as &dyn SpectralFilter).collect();
    filters.extend(ReferenceFilter::ALL.iter().map(|f| f as &dyn SpectralFilter));
    debug_assert_eq!(lambda_grid(2).len(), 2);
    write_filter_curves_tsv(&out.path("filter_curves.tsv"), &filters, cfg.curve_points)?;

    let analysis = Analysis {
        dataset: g.name().to_string(),
        n_nodes: g.n_nodes(),
        n_edges: g.n_edges(),
        feature_dim: g.feature_dim(),
        homophily: Section::from(edge_homophily(&g).map_err(|e| e.to_string())),
        mean_s_high: profile_mean(&profile),
        mean_s_high_unnormalized: profile_mean(&unnorm),
        decomposition: Section::from(decomposition_summary(&g)),
        spectral_energy: Section::from(energy_summary(&g, cfg.dense_limit)),
    };
    out.json("analysis.json", &analysis)?;
    out.json("config.json", &cfg)?;

    say!("dataset      {}", analysis.dataset);
    match analysis.homophily.value {
        Some(h) => say!("homophily    {h:.4}"),
        None => say!("homophily    unavailable"),
    }
    match analysis.mean_s_high {
        Some(s) => say!("mean S_high  {s:.6}"),
        None => say!("mean S_high  unavailable"),
    }
    match &analysis.decomposition.value {
        Some(t) => say!("decomposition max abs_error {:.3e} over {} dims", t.max_abs_error, t.dims_checked),
        None => say!("decomposition unavailable"),
    }
    out.finish("analyze")
}

#[derive(Serialize)]
struct PretrainSummary {
    best_epoch: usize,
    best_loss: f64,
    epochs_run: usize,
    filter_ks: Vec<usize>,
    num_params: usize,
    backbone_hash: String,
}

pub fn pretrain(a: PretrainArgs) -> CliResult {
    let mut cfg: PretrainCmdConfig = load_or_default(a.common.config.as_deref())?;
    set_path(&mut cfg.out, &a.common.out);
    set_path(&mut cfg.data, &a.data.data);
    set(&mut cfg.transform, a.data.transform);
    let p = &mut cfg.pretrain;
    set(&mut p.order, a.order);
    if a.ks.is_some() {
        p.ks = a.ks;
    }
    set(&mut p.hidden, a.hidden);
    set(&mut p.lr, a.lr);
    set(&mut p.epochs, a.epochs);
    set(&mut p.patience, a.patience);
    set(&mut p.seed, a.seed);
    cfg.pretrain.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = required(&cfg.data, "data")?;
    let mut out = Outputs::create(&required(&cfg.out, "out")?)?;
    let g = load(&data, cfg.transform)?;

    let outcome = hsgppt::pretrain::pretrain(&g, &cfg.pretrain)?;
    outcome.model.save(&out.path("model.ckpt"))?;
    let mut history = String::from("epoch\tloss\n");
    for (e, l) in outcome.history.iter().enumerate() {
        history += &format!("{e}\t{l:.17e}\n");
    }
    out.text("history.tsv", &history)?;
    let summary = PretrainSummary {
        best_epoch: outcome.best_epoch,
        best_loss: outcome.best_loss,
        epochs_run: outcome.history.len(),
        filter_ks: outcome.model.bank().ks(),
        num_params: outcome.model.num_params(),
        backbone_hash: outcome.model.content_hash(),
    };
    out.json("pretrain.json", &summary)?;
    out.json("config.json", &cfg)?;
    say!(
        "best loss {:.6} at epoch {} of {}; backbone {}",
        summary.best_loss, summary.best_epoch, summary.epochs_run, summary.backbone_hash
    );
    out.finish("pretrain")
}

#[derive(Serialize)]
struct TuneSummary {
    best_epoch: usize,
    best_val_f1: f64,
    test_macro_f1: f64,
    test_accuracy: f64,
    split_seed: u64,
    prompt_params: usize,
    backbone_params: usize,
    backbone_hash: String,
}

pub fn tune(a: TuneArgs) -> CliResult {
    let mut cfg: TuneCmdConfig = load_or_default(a.common.config.as_deref())?;
    set_path(&mut cfg.out, &a.common.out);
    set_path(&mut cfg.data, &a.data.data);
    set_path(&mut cfg.model, &a.model);
    set(&mut cfg.transform, a.data.transform);
    set(&mut cfg.k, a.k);
    set(&mut cfg.variant, a.variant);
    set(&mut cfg.tune.seed, a.seed);
    apply_tune_flags(&mut cfg.tune, a.tune);
    cfg.tune.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = required(&cfg.data, "data")?;
    let model_path = required(&cfg.model, "model")?;
    let mut out = Outputs::create(&required(&cfg.out, "out")?)?;

    let g = load(&data, cfg.transform)?;
    let model = PretrainedModel::load(&model_path)?;
    if cfg.variant == Variant::LowPassOnly && model.bank().ks() != [0] {
        return Err(CliError::Usage(
            "low_pass_only needs a backbone pre-trained with --ks 0".into(),
        ));
    }
    let tune_cfg = make_ablation(cfg.variant, &PretrainConfig::default(), &cfg.tune).tune;
    let frozen = freeze(model);
    let split = kshot_split(&g, cfg.k, split_seed(tune_cfg.seed))?;
    let masked = g.with_hidden_labels(&split.test_indices);
    let outcome = hsgppt::prompt::tune(&masked, &frozen, &split, &tune_cfg)?;

    let pred = argmax_rows(&predict(&masked, &frozen, &outcome.state)?);
    let labels = g.labels().ok_or(hsgppt::Error::LabelsAbsent)?;
    let truth: Vec<usize> = (0..g.n_nodes()).map(|i| labels.get(i).unwrap_or(0)).collect();
    let summary = TuneSummary {
        best_epoch: outcome.best_epoch,
        best_val_f1: outcome.best_val_f1,
        test_macro_f1: macro_f1(&pred, &truth, &split.test_indices, labels.n_classes())?,
        test_accuracy: accuracy(&pred, &truth, &split.test_indices)?,
        split_seed: split.seed,
        prompt_params: outcome.state.num_params(),
        backbone_params: frozen.model().num_params(),
        backbone_hash: frozen.hash().to_string(),
    };

    outcome.state.save(&out.path("prompt_state.bin"))?;
    let mut history = String::from("epoch\tloss\tval_f1\n");
    for e in &outcome.history {
        let val = e.val_f1.map_or("NA".to_string(), |v| format!("{v:.6}"));
        history += &format!("{}\t{:.17e}\t{val}\n", e.epoch, e.loss);
    }
    out.text("history.tsv", &history)?;
    out.json("split.json", &split)?;
    out.json("tune.json", &summary)?;
    out.json("config.json", &cfg)?;
    say!(
        "best val F1 {:.4} at epoch {}; test macro-F1 {:.4}, accuracy {:.4}",
        summary.best_val_f1, summary.best_epoch, summary.test_macro_f1, summary.test_accuracy
    );
    out.finish("tune")
}

pub fn eval(a: EvalArgs) -> CliResult {
    let mut cfg: EvalCmdConfig = load_or_default(a.common.config.as_deref())?;
    set_path(&mut cfg.out, &a.common.out);
    set_path(&mut cfg.data, &a.data.data);
    set_path(&mut cfg.source, &a.source);
    set(&mut cfg.transform, a.data.transform);
    set(&mut cfg.mode, a.mode);
    set(&mut cfg.svd_dim, a.svd_dim);
    set(&mut cfg.k, a.k);
    set(&mut cfg.seeds, a.seeds);
    set(&mut cfg.variant, a.variant);
    apply_pretrain_flags(&mut cfg.pretrain, a.pretrain);
    apply_tune_flags(&mut cfg.tune, a.tune);
    cfg.pretrain.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.tune.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let data = required(&cfg.data, "data")?;
    let mut out = Outputs::create(&required(&cfg.out, "out")?)?;
    let target = load(&data, cfg.transform)?;
    let pipeline = make_ablation(cfg.variant, &cfg.pretrain, &cfg.tune);
    let opts = RunOptions {
        k: cfg.k,
        seeds: cfg.seeds.clone(),
        threads: thread_cap()?,
    };
    let (report, timings) = match cfg.mode {
        Mode::Transductive => run_transductive_timed(&target, &pipeline, &opts)?,
        Mode::Inductive => {
            let source_dir = required(&cfg.source, "source")?;
            let source = load(&source_dir, cfg.transform)?;
            run_inductive_timed(&source, &target, cfg.svd_dim, &pipeline, &opts)?
        }
    };
    log_timings(&timings);
    out.json("report.json", &report)?;
    out.text("report.txt", &report.to_text())?;
    out.json("config.json", &cfg)?;
    say!("{}", report.to_text().trim_end());
    out.finish("eval")
}

pub fn sweep(a: SweepArgs) -> CliResult {
    let mut cfg: SweepCmdConfig = load_or_default(a.common.config.as_deref())?;
    set_path(&mut cfg.out, &a.common.out);
    let s = &mut cfg.sweep;
    set(&mut s.h_values, a.h_values);
    set(&mut s.seeds, a.seeds);
    set(&mut s.graph.n, a.n);
    set(&mut s.graph.f, a.f);
    set(&mut s.graph.d_avg, a.d);
    set(&mut s.graph.mu, a.mu);
    set(&mut s.lr, a.lr);
    set(&mut s.epochs, a.epochs);
    for &h in &cfg.sweep.h_values {
        CsbmParams { h, ..cfg.sweep.graph.clone() }
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut out = Outputs::create(&required(&cfg.out, "out")?)?;
    let table = filter_sweep_study(&cfg.sweep)?;
    table.write_tsv(&out.path("sweep.tsv"))?;
    out.json("sweep.json", &table)?;
    out.json("config.json", &cfg)?;
    for &h in &cfg.sweep.h_values {
        for &seed in &cfg.sweep.seeds {
            if let Some(w) = table.winner(h, seed) {
                say!("h={h:<4} seed={seed:<3} best filter {}", w.name());
            }
        }
    }
    out.finish("sweep")
}

pub fn ablate(a: AblateArgs) -> CliResult {
    let mut cfg: AblateCmdConfig = load_or_default(a.common.config.as_deref())?;
    set_path(&mut cfg.out, &a.common.out);
    set_path(&mut cfg.data, &a.data.data);
    set(&mut cfg.transform, a.data.transform);
    set(&mut cfg.k, a.k);
    set(&mut cfg.seeds, a.seeds);
    apply_pretrain_flags(&mut cfg.pretrain, a.pretrain);
    apply_tune_flags(&mut cfg.tune, a.tune);
    cfg.pretrain.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.tune.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if cfg.seeds.is_empty() || cfg.variants.is_empty() {
        return Err(CliError::Usage("seeds and variants must be non-empty".into()));
    }
    let data = required(&cfg.data, "data")?;
    let mut out = Outputs::create(&required(&cfg.out, "out")?)?;
    let g = load(&data, cfg.transform)?;
    let opts = RunOptions {
        k: cfg.k,
        seeds: cfg.seeds.clone(),
        threads: thread_cap()?,
    };
    let report = run_ablation(&g, &cfg.pretrain, &cfg.tune, &cfg.variants, &opts)?;
    out.json("ablation.json", &report)?;
    out.text("ablation.txt", &report.to_text())?;
    out.json("config.json", &cfg)?;
    say!("{}", report.to_text().trim_end());
    out.finish("ablate")
}

/// Deterministic offsets so no parameter sits at its symmetric start.
fn perturb(values: &mut Mat, salt: u64) {
    for (i, v) in values.as_mut_slice().iter_mut().enumerate() {
        *v += 0.3 * (1.7 * i as f64 + 0.61 * salt as f64).sin();
    }
}

#[derive(Serialize)]
struct GradcheckOutput {
    pretrain: hsgppt::nn::GradCheckReport,
    prompt: hsgppt::nn::GradCheckReport,
    passed: bool,
}

pub fn gradcheck(a: GradcheckArgs) -> CliResult {
    let mut cfg: GradcheckConfig = load_or_default(a.common.config.as_deref())?;
    set_path(&mut cfg.out, &a.common.out);
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.tolerance, a.tolerance);
    let mut out = Outputs::create(&required(&cfg.out, "out")?)?;

    let g = csbm::generate(&CsbmParams {
        n: 12,
        f: 4,
        d_avg: 4.0,
        mu: 1.0,
        h: 0.5,
        seed: cfg.seed,
    })?;
    let mut model = PretrainedModel::new(FilterBank::new(2), 4, 8, cfg.seed);
    for (i, p) in model.params_mut().into_iter().enumerate() {
        perturb(&mut p.value, i as u64);
    }
    let negative = corrupt_features(&g, cfg.seed);
    let mut pre_obj = PretrainObjective::new(model.clone(), &g, &negative)?;
    let pretrain_report = finite_diff_check(&mut pre_obj, cfg.step, cfg.tolerance, cfg.seed)?;

    let frozen = freeze(model);
    let tune_cfg = TuneConfig {
        n_prompt: 3,
        seed: cfg.seed,
        ..TuneConfig::default()
    };
    let mut state = PromptState::new(frozen.model(), &FeatureStats::of(g.features()), 2, &tune_cfg);
    for (i, p) in state.params_mut().into_iter().enumerate() {
        perturb(&mut p.value, 100 + i as u64);
    }
    let mut prompt_obj = TuneObjective::new(&g, &frozen, state, (0..6).collect())?;
    let prompt_report = finite_diff_check(&mut prompt_obj, cfg.step, cfg.tolerance, cfg.seed)?;

    let passed = pretrain_report.passed && prompt_report.passed;
    say!(
        "pretrain max rel error {:.3e} (abs {:.1e}), prompt max rel error {:.3e} (abs {:.1e}), tolerance {:.0e}",
        pretrain_report.max_rel_error,
        pretrain_report.max_abs_error,
        prompt_report.max_rel_error,
        prompt_report.max_abs_error,
        cfg.tolerance
    );
    let result = GradcheckOutput {
        pretrain: pretrain_report,
        prompt: prompt_report,
        passed,
    };
    out.json("gradcheck.json", &result)?;
    out.json("config.json", &cfg)?;
    out.finish("gradcheck")?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("relative error above {}", cfg.tolerance)))
    }
}
