//! End-to-end pipelines: graph attribute inference, and the defense sweep
//! that measures attacker accuracy against the utility-loss budget.

use std::fmt::Write as _;

use attrguard_core::classifier::{self, ClassifierKind, ClassifierParams, DifferentiableClassifier};
use attrguard_core::graph::{gen_synthetic, BehaviorMatrix, BinaryLabels, Sign, SocialGraph, SynthConfig};
use attrguard_core::lbp::{lbp_run, LbpOptions, Pmrf};
use attrguard_core::linear::{
    clamped_probability, convergence_report, linear_iterate, predict_from_residual, residual, ConvergenceReport,
    LinearOptions, Verdict,
};
use attrguard_core::mechanism::{defend_user, DefenseConfig, SolveOptions, TargetDistribution, TargetKind};
use attrguard_core::metrics::{auc, inference_accuracy};
use attrguard_core::panda::{NoisePolicy, PandaConfig};
use attrguard_core::prior::{prior_vector, train_prior, TrainOptions};
use attrguard_core::rng;
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shuffles `users` with `seed` and splits off the first `train_fraction` of them.
pub fn split_users(users: &[usize], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order = users.to_vec();
    order.sort_unstable();
    order.shuffle(&mut rng::seeded(seed));
    let k = ((order.len() as f64) * train_fraction).round() as usize;
    let test = order.split_off(k.min(order.len()));
    (order, test)
}

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1), got {f}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Linear,
    Lbp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub engine: Engine,
    /// Homophily strength. `None` picks `0.5 + 0.9 / (2 rho)`, just inside the
    /// region where linear propagation converges.
    pub w: Option<f64>,
    pub train_fraction: f64,
    pub seed: u64,
    pub prior: TrainOptions,
    pub lbp: LbpOptions,
    pub linear: LinearOptions,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            engine: Engine::Linear,
            w: None,
            train_fraction: 0.5,
            seed: 1,
            prior: TrainOptions::default(),
            lbp: LbpOptions::default(),
            linear: LinearOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferReport {
    pub engine: Engine,
    pub w: f64,
    pub train_users: usize,
    pub test_users: Vec<usize>,
    /// Posterior probability for every node.
    pub posteriors: Vec<f64>,
    pub priors: Vec<f64>,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub prior_accuracy: f64,
    pub prior_auc: Option<f64>,
    /// Test users whose posterior sits exactly at 0.5.
    pub ties: usize,
    pub iterations: usize,
    pub converged: bool,
    pub convergence: ConvergenceReport,
}

fn evaluate_binary(scores: &[f64], users: &[usize], labels: &BinaryLabels) -> Result<(f64, Option<f64>)> {
    let truth: Vec<Sign> = users.iter().map(|&u| labels.get(u).expect("test users are labeled")).collect();
    let pred: Vec<Sign> =
        users.iter().map(|&u| if scores[u] > 0.5 { Sign::Positive } else { Sign::Negative }).collect();
    let positive: Vec<bool> = truth.iter().map(|s| *s == Sign::Positive).collect();
    let s: Vec<f64> = users.iter().map(|&u| scores[u]).collect();
    Ok((inference_accuracy(&pred, &truth)?, auc(&s, &positive)))
}

/// Learns priors on a random training split, propagates them over the graph
/// and scores the held-out users, alongside a prior-only baseline on the
/// same split.
pub fn run_attriinfer(
    graph: &SocialGraph,
    behaviors: &BehaviorMatrix,
    labels: &BinaryLabels,
    cfg: &InferConfig,
) -> Result<InferReport> {
    check_fraction(cfg.train_fraction)?;
    labels.check_users(graph.node_count())?;
    let labeled: Vec<usize> = labels.iter().map(|(u, _)| u).collect();
    let (train, test) = split_users(&labeled, cfg.train_fraction, cfg.seed);
    if test.is_empty() {
        return Err(Error::Config("no test users left after the split".into()));
    }
    let (model, _) = train_prior(behaviors, &labels.restrict(&train), &cfg.prior)?;
    let priors = prior_vector(&model, behaviors, graph.node_count())?;

    let base = convergence_report(graph, None);
    let w = match cfg.w {
        Some(w) => w,
        None if base.necessary_bound.is_finite() => 0.5 + 0.9 * base.necessary_bound,
        None => 0.9,
    };
    let w_hat = w - 0.5;
    let convergence = convergence_report(graph, Some(w_hat));

    let (posteriors, iterations, converged, ties) = match cfg.engine {
        Engine::Linear => {
            if convergence.verdict == Some(Verdict::Divergent) {
                return Err(Error::WouldDiverge { w_hat, necessary_bound: convergence.necessary_bound });
            }
            let q_hat: Vec<f64> = priors.iter().map(|&q| residual(q)).collect();
            let r = linear_iterate(graph, &q_hat, w_hat, &cfg.linear)?;
            let preds = predict_from_residual(&r.residuals);
            let ties = test.iter().filter(|&&u| preds[u].tie).count();
            (r.residuals.iter().map(|&v| clamped_probability(v)).collect(), r.iterations, r.converged, ties)
        }
        Engine::Lbp => {
            let pmrf = Pmrf::new(graph, priors.clone(), w)?;
            let r = lbp_run(&pmrf, &cfg.lbp)?;
            let ties = test.iter().filter(|&&u| r.posteriors[u] == 0.5).count();
            (r.posteriors, r.iterations, r.converged, ties)
        }
    };

    let (accuracy, auc) = evaluate_binary(&posteriors, &test, labels)?;
    let (prior_accuracy, prior_auc) = evaluate_binary(&priors, &test, labels)?;
    Ok(InferReport {
        engine: cfg.engine,
        w,
        train_users: train.len(),
        test_users: test,
        posteriors,
        priors,
        accuracy,
        auc,
        prior_accuracy,
        prior_auc,
        ties,
        iterations,
        converged,
        convergence,
    })
}

/// Settings of a defense sweep over seeds and budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub seeds: Vec<u64>,
    pub budgets: Vec<f64>,
    pub policy: NoisePolicy,
    pub target: TargetKind,
    pub train_fraction: f64,
    /// `linear-ova` is the defender's own classifier; `one-hidden-relu` is
    /// trained separately with its own seed.
    pub attackers: Vec<ClassifierKind>,
    pub defender: ClassifierParams,
    pub network: ClassifierParams,
    pub panda: PandaConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig {
                node_count: 400,
                class_proportions: vec![0.25; 4],
                objects_per_class: 10,
                signal: 0.3,
                background: 0.05,
                silent_fraction: 0.0,
                ..SynthConfig::default()
            },
            seeds: vec![1, 2, 3, 4, 5],
            budgets: vec![0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
            policy: NoisePolicy::ModifyAdd,
            target: TargetKind::Training,
            train_fraction: 0.5,
            attackers: vec![ClassifierKind::LinearOva, ClassifierKind::OneHiddenRelu],
            defender: ClassifierParams::default(),
            network: ClassifierParams { hidden: 32, epochs: 300, ..ClassifierParams::default() },
            panda: PandaConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_fraction(self.train_fraction)?;
        if self.seeds.is_empty() || self.budgets.is_empty() || self.attackers.is_empty() {
            return Err(Error::Config("seeds, budgets and attackers must be non-empty".into()));
        }
        if self.budgets.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::Config("budgets must be finite and nonnegative".into()));
        }
        self.synth.validate()?;
        self.panda.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub beta: f64,
    pub attacker: ClassifierKind,
    pub accuracy: f64,
    pub mean_expected_l0: f64,
    pub mean_realized_l0: f64,
    pub users: usize,
}

fn kind_name(kind: ClassifierKind) -> &'static str {
    match kind {
        ClassifierKind::LinearOva => "linear-ova",
        ClassifierKind::OneHiddenRelu => "one-hidden-relu",
    }
}

/// Seed of the separately trained network attacker.
fn attacker_seed(seed: u64) -> u64 {
    seed ^ 0x5bd1_e995_5bd1_e995
}

/// One row per (seed, budget, attacker). Users within a cell are defended in
/// parallel; each user draws from its own stream of the cell seed, so output
/// does not depend on the thread count.
pub fn run_attriguard_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let world = gen_synthetic(&SynthConfig { seed, ..cfg.synth.clone() })?;
        let users: Vec<usize> = (0..world.graph.node_count()).collect();
        let (train, test) = split_users(&users, cfg.train_fraction, seed);
        let train_labels = world.labels.restrict(&train);
        let (defender, _) = classifier::train(
            ClassifierKind::LinearOva,
            &world.behaviors,
            &train_labels,
            &ClassifierParams { seed, ..cfg.defender },
        )?;
        let mut attackers: Vec<(ClassifierKind, DifferentiableClassifier)> = Vec::new();
        for &kind in &cfg.attackers {
            let clf = match kind {
                ClassifierKind::LinearOva => defender.clone(),
                ClassifierKind::OneHiddenRelu => {
                    let params = ClassifierParams { seed: attacker_seed(seed), ..cfg.network };
                    classifier::train(kind, &world.behaviors, &train_labels, &params)?.0
                }
            };
            attackers.push((kind, clf));
        }
        let target = match cfg.target {
            TargetKind::Uniform => TargetDistribution::uniform(world.labels.classes())?,
            TargetKind::Training => TargetDistribution::from_counts(&train_labels.class_counts())?,
        };
        let xs: Vec<Vec<f64>> = test.iter().map(|&u| world.behaviors.dense_row(u)).collect();
        let truth: Vec<usize> = test.iter().map(|&u| world.labels.get(u).expect("synthetic users are labeled")).collect();

        for &beta in &cfg.budgets {
            let dcfg = DefenseConfig { policy: cfg.policy, panda: cfg.panda.clone(), budget: beta, solve: SolveOptions::default() };
            let outcomes = test
                .par_iter()
                .zip(&xs)
                .map(|(&u, x)| {
                    let user_seed = rng::stream(seed, u as u64).next_u64();
                    defend_user(&defender, x, &target, &dcfg, user_seed)
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let n = outcomes.len() as f64;
            let mean_expected_l0 = outcomes.iter().map(|o| o.expected_l0).sum::<f64>() / n;
            let mean_realized_l0 = outcomes.iter().map(|o| o.realized_l0 as f64).sum::<f64>() / n;
            for (kind, clf) in &attackers {
                let preds = outcomes.iter().map(|o| clf.predict(&o.noisy)).collect::<std::result::Result<Vec<_>, _>>()?;
                rows.push(SweepRow {
                    seed,
                    beta,
                    attacker: *kind,
                    accuracy: inference_accuracy(&preds, &truth)?,
                    mean_expected_l0,
                    mean_realized_l0,
                    users: outcomes.len(),
                });
            }
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "seed,beta,attacker,accuracy,mean_expected_l0,mean_realized_l0,users";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.beta,
            kind_name(r.attacker),
            r.accuracy,
            r.mean_expected_l0,
            r.mean_realized_l0,
            r.users
        );
    }
    out
}

/// Mean accuracy over seeds for one attacker at one budget.
pub fn mean_accuracy(rows: &[SweepRow], attacker: ClassifierKind, beta: f64) -> Option<f64> {
    let sel: Vec<f64> = rows.iter().filter(|r| r.attacker == attacker && r.beta == beta).map(|r| r.accuracy).collect();
    (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
}
