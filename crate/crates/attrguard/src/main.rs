use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attrguard::io::{self, FormatError};
use attrguard::pipeline::{
    mean_accuracy, run_attriguard_sweep, run_attriinfer, sweep_csv, Engine, ExperimentConfig, InferConfig,
};
use attrguard::{Error, Result};
use attrguard_core::classifier::{self, ClassifierKind, ClassifierParams};
use attrguard_core::game_lp::{
    best_deterministic_mapping, build_lp, solve_lp, zero_one_privacy, zero_one_utility, JointDistribution,
};
use attrguard_core::graph::{gen_synthetic, BehaviorMatrix, LabelSet, SynthConfig};
use attrguard_core::lbp::{lbp_run, LbpOptions, Pmrf};
use attrguard_core::linear::{
    clamped_probability, convergence_report, linear_iterate, residual, LinearOptions, Verdict,
};
use attrguard_core::mechanism::{
    defend_user, DefenseConfig, SolveOptions, TargetDistribution, TargetKind, UNREACHABLE_NORM,
};
use attrguard_core::metrics::{auc, inference_accuracy};
use attrguard_core::panda::{find_noise, find_noise_restricted_baseline, NoisePolicy, PandaConfig};
use attrguard_core::prior::{prior_vector, train_prior, TrainOptions};
use attrguard_core::rng;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "attrguard", version, about = "Graph attribute inference and evasion-noise defense")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Directory that receives output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of results printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph, behaviors and labels.
    Synth(SynthArgs),
    /// Train the logistic-regression prior and write per-user priors.
    TrainPrior(TrainPriorArgs),
    /// Posteriors by loopy belief propagation.
    InferLbp(InferLbpArgs),
    /// Posteriors by the linearized propagation.
    InferLinear(InferLinearArgs),
    /// Spectral radius and convergence bounds of a graph, as JSON.
    Spectral(SpectralArgs),
    /// Train a multi-class classifier.
    TrainClf(TrainClfArgs),
    /// Minimum-noise search for one user and one target class.
    Panda(PandaArgs),
    /// Defend every user and write the noisy behaviors plus provenance.
    Defend(DefendArgs),
    /// Solve the micro-scale game-theoretic obfuscation LP.
    GameLp(GameLpArgs),
    /// Score a classifier or a posterior file against labels.
    Evaluate(EvaluateArgs),
    /// Run a pipeline over several seeds and write a CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Comma-separated class proportions; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    proportions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    p_intra: f64,
    #[arg(long, default_value_t = 0.005)]
    p_inter: f64,
    #[arg(long, default_value_t = 10)]
    objects_per_class: usize,
    #[arg(long, default_value_t = 0.3)]
    signal: f64,
    #[arg(long, default_value_t = 0.1)]
    background: f64,
    #[arg(long, default_value_t = 0.1)]
    silent_fraction: f64,
}

#[derive(Args)]
struct TrainPriorArgs {
    #[arg(long)]
    behaviors: PathBuf,
    /// +1/-1 labels of the training users.
    #[arg(long)]
    labels: PathBuf,
    /// Sizes the prior vector to the graph's node count.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

#[derive(Args)]
struct InferLbpArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    priors: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    w: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

#[derive(Args)]
struct InferLinearArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    priors: PathBuf,
    /// Homophily strength; the iteration uses w - 0.5.
    #[arg(long, default_value_t = 0.6)]
    w: f64,
    /// Refuse to iterate when w - 0.5 is at or above 1/(2 rho).
    #[arg(long)]
    check_convergence: bool,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    rel_tol: f64,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Homophily strength to classify against the bounds.
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Linear,
    Mlp,
}

impl From<KindArg> for ClassifierKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Linear => ClassifierKind::LinearOva,
            KindArg::Mlp => ClassifierKind::OneHiddenRelu,
        }
    }
}

#[derive(Args)]
struct TrainClfArgs {
    #[arg(long)]
    behaviors: PathBuf,
    /// Integer labels 1..m.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Linear)]
    kind: KindArg,
    /// Number of classes; defaults to the label file's.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    ModifyExist,
    AddNew,
    ModifyAdd,
}

impl From<PolicyArg> for NoisePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::ModifyExist => NoisePolicy::ModifyExist,
            PolicyArg::AddNew => NoisePolicy::AddNew,
            PolicyArg::ModifyAdd => NoisePolicy::ModifyAdd,
        }
    }
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value_t = PolicyArg::ModifyAdd)]
    policy: PolicyArg,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 200)]
    maxiter: usize,
    /// Comma-separated grid that noisy values snap to, e.g. 0,0.2,0.4,0.6,0.8,1.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

impl NoiseArgs {
    fn panda(&self) -> PandaConfig {
        PandaConfig { tau: self.tau, maxiter: self.maxiter, grid: self.grid.clone() }
    }
}

#[derive(Args)]
struct PandaArgs {
    #[arg(long)]
    clf: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    user: usize,
    /// Target class, 1..m.
    #[arg(long)]
    target: usize,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Run the direction-restricted baseline instead.
    #[arg(long)]
    baseline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Uniform,
    Train,
}

#[derive(Args)]
struct DefendArgs {
    #[arg(long)]
    defender: PathBuf,
    #[arg(long)]
    behaviors: PathBuf,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, value_enum, default_value_t = TargetArg::Uniform)]
    target: TargetArg,
    /// Training labels, needed for `--target train`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    budget: f64,
}

#[derive(Args)]
struct GameLpArgs {
    /// Rows are attribute values, columns public-data values.
    #[arg(long)]
    joint: PathBuf,
    #[arg(long)]
    beta: f64,
    /// Square privacy-loss matrix over attribute values; 0-1 when omitted.
    #[arg(long)]
    privacy_metric: Option<PathBuf>,
    /// Square utility-loss matrix over public values; 0-1 when omitted.
    #[arg(long)]
    utility_metric: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Classifier to score on `--behaviors`.
    #[arg(long, requires = "behaviors", conflicts_with = "posteriors")]
    clf: Option<PathBuf>,
    #[arg(long)]
    behaviors: Option<PathBuf>,
    /// Posterior file scored against +1/-1 labels.
    #[arg(long)]
    posteriors: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Attriguard,
    Attriinfer,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Linear,
    Lbp,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum, default_value_t = PipelineArg::Attriguard)]
    pipeline: PipelineArg,
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    /// attriinfer: propagation engine.
    #[arg(long, value_enum, default_value_t = EngineArg::Linear)]
    engine: EngineArg,
    /// attriinfer: homophily strength (default: 90% of the convergence bound).
    #[arg(long)]
    w: Option<f64>,
}

/// Writes to stdout; a closed pipe (`attrguard ... | head`) ends the process quietly.
fn emit(args: std::fmt::Arguments) {
    use std::io::Write as _;
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed writing to stdout: {e}");
    }
}

macro_rules! out {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!("{}\n", format_args!($($arg)*))) };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::TrainPrior(a) => cmd_train_prior(cli, a),
        Command::InferLbp(a) => infer_lbp(cli, a),
        Command::InferLinear(a) => infer_linear(cli, a),
        Command::Spectral(a) => spectral(a),
        Command::TrainClf(a) => train_clf(cli, a),
        Command::Panda(a) => panda(a),
        Command::Defend(a) => defend(cli, a),
        Command::GameLp(a) => game_lp(a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Sweep(a) => sweep(cli, a),
    }
}

fn out_path(cli: &Cli, name: &str) -> Option<PathBuf> {
    cli.out.as_ref().map(|d| d.join(name))
}

fn require_out<'a>(cli: &'a Cli, what: &str) -> Result<&'a Path> {
    cli.out.as_deref().ok_or_else(|| Error::Config(format!("{what} needs --out DIR")))
}

fn print_json<T: Serialize>(value: &T) {
    outln!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

/// Prints `key value` lines (tsv) or a JSON object.
fn print_summary(cli: &Cli, fields: &[(&str, serde_json::Value)]) {
    match cli.format {
        Format::Json => print_json(&fields.iter().cloned().map(|(k, v)| (k.to_string(), v)).collect::<serde_json::Map<_, _>>()),
        Format::Tsv => {
            for (k, v) in fields {
                match v {
                    serde_json::Value::String(s) => outln!("{k}\t{s}"),
                    other => outln!("{k}\t{other}"),
                }
            }
        }
    }
}

fn emit_values(cli: &Cli, name: &str, header: &str, values: &[f64]) -> Result<()> {
    let text = io::write_values(values);
    if let Some(p) = out_path(cli, name) {
        io::write_text(&p, &text)?;
    }
    match cli.format {
        Format::Tsv => out!("{text}"),
        Format::Json => print_json(&json!({ header: values })),
    }
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let dir = require_out(cli, "synth")?;
    let proportions = a.proportions.clone().unwrap_or_else(|| vec![1.0 / a.classes as f64; a.classes]);
    let cfg = SynthConfig {
        node_count: a.nodes,
        p_intra: a.p_intra,
        p_inter: a.p_inter,
        class_proportions: proportions,
        objects_per_class: a.objects_per_class,
        signal: a.signal,
        background: a.background,
        silent_fraction: a.silent_fraction,
        seed: cli.seed,
    };
    let world = gen_synthetic(&cfg)?;
    io::save_graph(&dir.join("graph.txt"), &world.graph)?;
    io::save_behaviors(&dir.join("behaviors.txt"), &world.behaviors)?;
    io::save_labels(&dir.join("labels.txt"), &LabelSet::Multiclass(world.labels.clone()))?;
    if world.labels.classes() == 2 {
        // class 1 is the positive attribute value
        io::save_labels(&dir.join("binary_labels.txt"), &LabelSet::Binary(world.labels.to_binary(0)))?;
    }
    print_summary(
        cli,
        &[
            ("nodes", json!(world.graph.node_count())),
            ("edges", json!(world.graph.edge_count())),
            ("objects", json!(world.behaviors.object_count())),
            ("ratings", json!(world.behaviors.nnz())),
            ("classes", json!(world.labels.classes())),
        ],
    );
    Ok(())
}

fn cmd_train_prior(cli: &Cli, a: &TrainPriorArgs) -> Result<()> {
    let behaviors = io::load_behaviors(&a.behaviors)?;
    let labels = io::load_binary_labels(&a.labels)?;
    let node_count = match &a.graph {
        Some(g) => io::load_graph(g)?.node_count(),
        None => behaviors.user_count(),
    };
    let opts = TrainOptions { l2: a.l2, max_epochs: a.max_epochs, tol: a.tol };
    let (model, report) = train_prior(&behaviors, &labels, &opts)?;
    if let Some(p) = out_path(cli, "prior_model.txt") {
        io::write_text(&p, &io::write_prior_model(&model))?;
    }
    let priors = prior_vector(&model, &behaviors, node_count)?;
    if let Some(p) = out_path(cli, "priors.txt") {
        io::write_text(&p, &io::write_values(&priors))?;
    }
    print_summary(
        cli,
        &[
            ("epochs", json!(report.epochs)),
            ("converged", json!(report.converged)),
            ("grad_norm", json!(report.grad_norm)),
            ("final_loss", json!(report.loss_history.last())),
            ("users", json!(priors.len())),
        ],
    );
    Ok(())
}

fn check_priors(priors: &[f64], nodes: usize) -> Result<()> {
    if priors.len() != nodes {
        return Err(Error::Config(format!("priors cover {} users but the graph has {nodes} nodes", priors.len())));
    }
    Ok(())
}

fn infer_lbp(cli: &Cli, a: &InferLbpArgs) -> Result<()> {
    let graph = io::load_graph(&a.graph)?;
    let priors = io::load_values(&a.priors)?;
    check_priors(&priors, graph.node_count())?;
    let pmrf = Pmrf::new(&graph, priors, a.w)?;
    let r = lbp_run(&pmrf, &LbpOptions { max_iters: a.max_iters, tol: a.tol })?;
    eprintln!("iterations {} converged {}", r.iterations, r.converged);
    emit_values(cli, "posteriors.txt", "posteriors", &r.posteriors)
}

fn infer_linear(cli: &Cli, a: &InferLinearArgs) -> Result<()> {
    let graph = io::load_graph(&a.graph)?;
    let priors = io::load_values(&a.priors)?;
    check_priors(&priors, graph.node_count())?;
    let w_hat = a.w - 0.5;
    if a.check_convergence {
        let rep = convergence_report(&graph, Some(w_hat));
        if rep.verdict == Some(Verdict::Divergent) {
            return Err(Error::WouldDiverge { w_hat, necessary_bound: rep.necessary_bound });
        }
        eprintln!("verdict {:?}", rep.verdict.expect("w given"));
    }
    let q_hat: Vec<f64> = priors.iter().map(|&q| residual(q)).collect();
    let r = linear_iterate(&graph, &q_hat, w_hat, &LinearOptions { max_iters: a.max_iters, rel_tol: a.rel_tol })?;
    eprintln!("iterations {} converged {}", r.iterations, r.converged);
    let posteriors: Vec<f64> = r.residuals.iter().map(|&v| clamped_probability(v)).collect();
    emit_values(cli, "posteriors.txt", "posteriors", &posteriors)
}

fn spectral(a: &SpectralArgs) -> Result<()> {
    let graph = io::load_graph(&a.graph)?;
    print_json(&convergence_report(&graph, a.w.map(|w| w - 0.5)));
    Ok(())
}

fn train_clf(cli: &Cli, a: &TrainClfArgs) -> Result<()> {
    let behaviors = io::load_behaviors(&a.behaviors)?;
    let mut labels = io::load_multiclass_labels(&a.labels)?;
    if let Some(m) = a.classes {
        if m < labels.classes() {
            return Err(Error::Config(format!("labels use {} classes but --classes is {m}", labels.classes())));
        }
        labels = attrguard_core::graph::MulticlassLabels::new(m, labels.iter())?;
    }
    let params = ClassifierParams {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        l2: a.l2,
        hidden: a.hidden,
        seed: cli.seed,
    };
    let (clf, _) = classifier::train(a.kind.into(), &behaviors, &labels, &params)?;
    if let Some(p) = out_path(cli, "classifier.txt") {
        io::write_text(&p, &io::write_classifier(&clf))?;
    } else {
        out!("{}", io::write_classifier(&clf));
    }
    let (xs, ys): (Vec<_>, Vec<_>) = labels.iter().map(|(u, c)| (behaviors.dense_row(u), c)).unzip();
    let acc = classifier::accuracy(&clf, &xs, &ys)?;
    eprintln!("training accuracy {acc}");
    Ok(())
}

fn user_row(behaviors: &BehaviorMatrix, user: usize) -> Result<Vec<f64>> {
    if user >= behaviors.user_count() {
        return Err(attrguard_core::Error::UnknownUser(user).into());
    }
    Ok(behaviors.dense_row(user))
}

fn one_based(class: usize) -> usize {
    class + 1
}

fn zero_based(class: usize, m: usize) -> Result<usize> {
    if class == 0 || class > m {
        return Err(Error::Config(format!("class {class} is outside 1..={m}")));
    }
    Ok(class - 1)
}

fn panda(a: &PandaArgs) -> Result<()> {
    let clf = io::load_classifier(&a.clf)?;
    let behaviors = io::load_behaviors(&a.input)?;
    let x = user_row(&behaviors, a.user)?;
    let target = zero_based(a.target, clf.classes())?;
    let cfg = a.noise.panda();
    let r = if a.baseline {
        find_noise_restricted_baseline(&clf, &x, target, &cfg)?
    } else {
        find_noise(&clf, &x, target, a.noise.policy.into(), &cfg)?
    };
    print_json(&json!({
        "user": a.user,
        "predicted": one_based(clf.predict(&x)?),
        "target": one_based(r.target),
        "success": r.success,
        "fell_back": r.fell_back,
        "iterations": r.iterations,
        "l0": r.l0,
        "noise": r.noise,
    }));
    Ok(())
}

fn defend(cli: &Cli, a: &DefendArgs) -> Result<()> {
    let dir = require_out(cli, "defend")?;
    let clf = io::load_classifier(&a.defender)?;
    let behaviors = io::load_behaviors(&a.behaviors)?;
    let m = clf.classes();
    let target = match a.target {
        TargetArg::Uniform => TargetDistribution::uniform(m)?,
        TargetArg::Train => {
            let path = a.labels.as_ref().ok_or_else(|| Error::Config("--target train needs --labels".into()))?;
            let labels = io::load_multiclass_labels(path)?;
            let mut counts = labels.class_counts();
            counts.resize(m, 0);
            TargetDistribution::from_counts(&counts)?
        }
    };
    let cfg = DefenseConfig { policy: a.noise.policy.into(), panda: a.noise.panda(), budget: a.budget, solve: SolveOptions::default() };
    let users: Vec<usize> = (0..behaviors.user_count()).collect();
    let outcomes = users
        .par_iter()
        .map(|&u| defend_user(&clf, &behaviors.dense_row(u), &target, &cfg, rng::stream(cli.seed, u as u64).next_u64()))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let noisy: Vec<Vec<f64>> = outcomes.iter().map(|o| o.noisy.clone()).collect();
    let noisy = BehaviorMatrix::from_dense_rows(behaviors.object_count(), &noisy)?;
    let mut text = io::write_behaviors(&noisy);
    if !text.starts_with('#') {
        text.insert_str(0, &format!("# users={} objects={}\n", noisy.user_count(), noisy.object_count()));
    }
    io::write_text(&dir.join("noisy.tsv"), &text)?;

    let mut sidecar = String::new();
    for (u, o) in users.iter().zip(&outcomes) {
        let norms: Vec<Option<usize>> = o.norms.iter().map(|&n| (n != UNREACHABLE_NORM).then_some(n)).collect();
        let line = json!({
            "user": u,
            "predicted": one_based(o.predicted),
            "chosen": one_based(o.chosen),
            "norms": norms,
            "distribution": o.distribution,
            "unreachable": o.unreachable.iter().map(|&c| one_based(c)).collect::<Vec<_>>(),
            "fell_back": o.fell_back.iter().map(|&c| one_based(c)).collect::<Vec<_>>(),
            "binding": o.binding,
            "degenerate": o.degenerate,
            "expected_l0": o.expected_l0,
            "realized_l0": o.realized_l0,
        });
        let _ = writeln!(sidecar, "{line}");
    }
    io::write_text(&dir.join("noisy.provenance.jsonl"), &sidecar)?;

    let n = outcomes.len().max(1) as f64;
    print_summary(
        cli,
        &[
            ("users", json!(outcomes.len())),
            ("mean_expected_l0", json!(outcomes.iter().map(|o| o.expected_l0).sum::<f64>() / n)),
            ("mean_realized_l0", json!(outcomes.iter().map(|o| o.realized_l0 as f64).sum::<f64>() / n)),
            ("unreachable_classes", json!(outcomes.iter().map(|o| o.unreachable.len()).sum::<usize>())),
        ],
    );
    Ok(())
}

fn game_lp(a: &GameLpArgs) -> Result<()> {
    let joint = JointDistribution::new(io::load_matrix(&a.joint)?)?;
    let privacy = match &a.privacy_metric {
        Some(p) => io::load_matrix(p)?,
        None => zero_one_privacy(joint.attribute_values()),
    };
    let utility = match &a.utility_metric {
        Some(p) => io::load_matrix(p)?,
        None => zero_one_utility(joint.public_values()),
    };
    let lp = build_lp(&joint, &privacy, &utility, a.beta)?;
    let d = solve_lp(&lp)?;
    let deterministic = if joint.public_values() <= 6 {
        best_deterministic_mapping(&joint, &privacy, &utility, a.beta)?.map(|(g, v)| json!({ "mapping": g, "objective": v }))
    } else {
        None
    };
    print_json(&json!({
        "objective": d.objective,
        "mapping": d.mapping,
        "y": d.y,
        "expected_utility_loss": d.expected_utility_loss,
        "budget": d.budget,
        "certificate": d.certificate,
        "best_deterministic": deterministic,
    }));
    Ok(())
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    if let Some(clf_path) = &a.clf {
        let clf = io::load_classifier(clf_path)?;
        let behaviors = io::load_behaviors(a.behaviors.as_ref().expect("clap enforces --behaviors"))?;
        let labels = io::load_multiclass_labels(&a.labels)?;
        labels.check_users(behaviors.user_count())?;
        let (preds, truth): (Vec<usize>, Vec<usize>) =
            labels.iter().map(|(u, c)| Ok((clf.predict(&behaviors.dense_row(u))?, c))).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        print_summary(cli, &[("users", json!(truth.len())), ("accuracy", json!(inference_accuracy(&preds, &truth)?))]);
        return Ok(());
    }
    let Some(post_path) = &a.posteriors else {
        return Err(Error::Config("evaluate needs --clf with --behaviors, or --posteriors".into()));
    };
    let posteriors = io::load_values(post_path)?;
    let labels = io::load_binary_labels(&a.labels)?;
    labels.check_users(posteriors.len())?;
    let mut users: Vec<usize> = labels.iter().map(|(u, _)| u).collect();
    users.sort_unstable();
    let truth: Vec<bool> = users.iter().map(|&u| labels.get(u) == Some(attrguard_core::graph::Sign::Positive)).collect();
    let preds: Vec<bool> = users.iter().map(|&u| posteriors[u] > 0.5).collect();
    let scores: Vec<f64> = users.iter().map(|&u| posteriors[u]).collect();
    print_summary(
        cli,
        &[
            ("users", json!(users.len())),
            ("accuracy", json!(inference_accuracy(&preds, &truth)?)),
            ("auc", json!(auc(&scores, &truth))),
        ],
    );
    Ok(())
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = match &a.config {
        Some(p) => serde_json::from_str(&io::read_text(p)?)
            .map_err(|e| Error::Format(FormatError::Invalid(format!("{}: {e}", p.display()))))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(b) = &a.budgets {
        cfg.budgets = b.clone();
    }
    if let Some(p) = a.policy {
        cfg.policy = p.into();
    }
    if let Some(t) = a.target {
        cfg.target = match t {
            TargetArg::Uniform => TargetKind::Uniform,
            TargetArg::Train => TargetKind::Training,
        };
    }
    if let Some(n) = a.nodes {
        cfg.synth.node_count = n;
    }
    if let Some(m) = a.classes {
        cfg.synth.class_proportions = vec![1.0 / m as f64; m];
    }
    match a.pipeline {
        PipelineArg::Attriguard => {
            let rows = run_attriguard_sweep(&cfg)?;
            let csv = sweep_csv(&rows);
            if let Some(p) = out_path(cli, "sweep.csv") {
                io::write_text(&p, &csv)?;
            }
            match cli.format {
                Format::Json => print_json(&rows),
                Format::Tsv => {
                    outln!("beta\tattacker\tmean_accuracy");
                    for &beta in &cfg.budgets {
                        for &kind in &cfg.attackers {
                            let acc = mean_accuracy(&rows, kind, beta).expect("row exists");
                            outln!("{beta}\t{}\t{acc}", serde_json::to_value(kind).expect("serializable").as_str().unwrap_or(""));
                        }
                    }
                }
            }
        }
        PipelineArg::Attriinfer => {
            let engine = match a.engine {
                EngineArg::Linear => Engine::Linear,
                EngineArg::Lbp => Engine::Lbp,
            };
            let mut csv = String::from("seed,engine,w,accuracy,auc,prior_accuracy,prior_auc,iterations,converged\n");
            for &seed in &cfg.seeds {
                let synth = SynthConfig { seed, class_proportions: vec![0.5, 0.5], ..cfg.synth.clone() };
                let world = gen_synthetic(&synth)?;
                let labels = world.labels.to_binary(0);
                let icfg = InferConfig { engine, w: a.w, seed, ..InferConfig::default() };
                let r = run_attriinfer(&world.graph, &world.behaviors, &labels, &icfg)?;
                let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
                let _ = writeln!(
                    csv,
                    "{seed},{},{},{},{},{},{},{},{}",
                    if engine == Engine::Linear { "linear" } else { "lbp" },
                    r.w,
                    r.accuracy,
                    fmt(r.auc),
                    r.prior_accuracy,
                    fmt(r.prior_auc),
                    r.iterations,
                    r.converged
                );
            }
            if let Some(p) = out_path(cli, "attriinfer.csv") {
                io::write_text(&p, &csv)?;
            }
            out!("{csv}");
        }
    }
    Ok(())
}
