//! Randomized selection among representative noises.
//!
//! Given a target distribution `p` over attribute values and the l0 norms of
//! the representative noises `r_1..r_m`, finds the distribution `M*` that
//! minimizes `KL(p || M)` subject to `sum_i M_i |r_i|_0 <= beta`.
//!
//! When the budget binds, stationarity gives `M_i = p_i / (mu0 n_i + lambda)`
//! with `mu0 = (1 - lambda) / beta`, leaving one scalar equation in `lambda`:
//!
//! ```text
//! g(lambda) = sum_i p_i n_i / (n_i (1 - lambda) / beta + lambda) - beta = 0
//! ```
//!
//! Any root `lambda != 0` with positive denominators is the unique optimum.
//! `lambda = 0` is always a spurious root when no norm is zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classifier::DifferentiableClassifier;
use crate::error::{Error, Result};
use crate::math;
use crate::panda::{find_noise, NoisePolicy, PandaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Uniform,
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    probs: Vec<f64>,
    kind: TargetKind,
}

impl TargetDistribution {
    pub fn uniform(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::invalid("target distribution needs at least one class"));
        }
        Ok(TargetDistribution { probs: vec![1.0 / classes as f64; classes], kind: TargetKind::Uniform })
    }

    /// Fraction of training users holding each attribute value.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("class {} has no training users", c + 1)));
        }
        let probs = counts.iter().map(|&n| n as f64 / total as f64).collect();
        Ok(TargetDistribution { probs, kind: TargetKind::Training })
    }

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("target probabilities must be strictly positive"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("target probabilities sum to {sum}")));
        }
        let kind = if probs.iter().all(|p| *p == probs[0]) { TargetKind::Uniform } else { TargetKind::Training };
        Ok(TargetDistribution { probs, kind })
    }

    /// Target over the listed classes only, renormalized.
    pub fn restricted(&self, keep: &[usize]) -> TargetDistribution {
        let mass: f64 = keep.iter().map(|&c| self.probs[c]).sum();
        TargetDistribution { probs: keep.iter().map(|&c| self.probs[c] / mass).collect(), kind: self.kind }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `sum p_i ln(p_i / q_i)`, with `0 ln 0 = 0`. Infinite if `q_i = 0 < p_i`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return f64::INFINITY;
        }
        total += pi * math::ln(pi / qi);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSolution {
    pub distribution: Vec<f64>,
    pub lambda: f64,
    pub mu0: f64,
    pub binding: bool,
    /// `beta = 0`: all mass sits on the zero-noise classes and `M_i > 0` cannot hold.
    pub degenerate: bool,
    pub expected_cost: f64,
    pub norms: Vec<usize>,
    pub budget: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max_i |M_i - p_i / (mu0 n_i + lambda)|`
    pub stationarity: f64,
    pub simplex: f64,
    /// `|sum M_i n_i - beta|` when binding, else `max(0, cost - beta)`.
    pub budget: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.simplex).max(self.budget)
    }
}

impl MechanismSolution {
    pub fn kkt_residuals(&self, p: &[f64]) -> KktResiduals {
        let stationarity = if self.binding {
            self.distribution
                .iter()
                .zip(p)
                .zip(&self.norms)
                .map(|((m, pi), &n)| (m - pi / (self.mu0 * n as f64 + self.lambda)).abs())
                .fold(0.0, f64::max)
        } else {
            // mu0 = 0, lambda = 1
            self.distribution.iter().zip(p).map(|(m, pi)| (m - pi).abs()).fold(0.0, f64::max)
        };
        let simplex = (self.distribution.iter().sum::<f64>() - 1.0).abs();
        let budget = if self.binding {
            (self.expected_cost - self.budget).abs()
        } else {
            (self.expected_cost - self.budget).max(0.0)
        };
        KktResiduals { stationarity, simplex, budget }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Target for `|sum M_i n_i - beta|`.
    pub newton_tol: f64,
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { newton_tol: 1e-10, max_iters: 500 }
    }
}

fn cost(dist: &[f64], norms: &[usize]) -> f64 {
    dist.iter().zip(norms).map(|(m, &n)| m * n as f64).sum()
}

/// Solves for the KL-optimal sampling distribution.
///
/// Non-binding budgets return `M* = p` exactly. Binding budgets run Newton's
/// method on `lambda`, falling back to bisection whenever a Newton step leaves
/// the current sign bracket.
pub fn solve_mechanism(
    target: &TargetDistribution,
    norms: &[usize],
    budget: f64,
    opts: &SolveOptions,
) -> Result<MechanismSolution> {
    let p = target.probs();
    if norms.len() != p.len() {
        return Err(Error::Dimension { expected: p.len(), got: norms.len() });
    }
    if !(budget >= 0.0) || budget.is_nan() {
        return Err(Error::invalid(format!("budget must be nonnegative, got {budget}")));
    }
    let unconstrained = cost(p, norms);
    if unconstrained <= budget {
        return Ok(MechanismSolution {
            distribution: p.to_vec(),
            lambda: 1.0,
            mu0: 0.0,
            binding: false,
            degenerate: false,
            expected_cost: unconstrained,
            norms: norms.to_vec(),
            budget,
        });
    }
    let min_norm = norms.iter().copied().min().unwrap_or(0);
    if budget == 0.0 {
        if min_norm > 0 {
            return Err(Error::Infeasible { budget, min_norm: min_norm as f64 });
        }
        let mass: f64 = p.iter().zip(norms).filter(|(_, &n)| n == 0).map(|(pi, _)| pi).sum();
        let distribution: Vec<f64> =
            p.iter().zip(norms).map(|(pi, &n)| if n == 0 { pi / mass } else { 0.0 }).collect();
        return Ok(MechanismSolution {
            distribution,
            lambda: f64::NAN,
            mu0: f64::NAN,
            binding: true,
            degenerate: true,
            expected_cost: 0.0,
            norms: norms.to_vec(),
            budget,
        });
    }
    if budget <= min_norm as f64 {
        return Err(Error::Infeasible { budget, min_norm: min_norm as f64 });
    }

    let n: Vec<f64> = norms.iter().map(|&k| k as f64).collect();
    let denom = |lambda: f64, ni: f64| ni * (1.0 - lambda) / budget + lambda;
    let g = |lambda: f64| -> (f64, f64) {
        let mut value = -budget;
        let mut slope = 0.0;
        for (&pi, &ni) in p.iter().zip(&n) {
            if ni == 0.0 {
                continue;
            }
            let d = denom(lambda, ni);
            value += pi * ni / d;
            slope -= pi * ni * (1.0 - ni / budget) / (d * d);
        }
        (value, slope)
    };

    // bracket [lo, hi] with g(lo) < 0 < g(hi)
    let (mut lo, mut hi) = if min_norm == 0 {
        (0.0, 1.0)
    } else {
        // g(0) = 0 is spurious; g'(0) = beta * sum p_i (1 - beta / n_i) picks the side
        let side: f64 = p.iter().zip(&n).map(|(pi, ni)| pi * (1.0 - budget / ni)).sum();
        if side == 0.0 {
            (0.0, 0.0)
        } else if side < 0.0 {
            (0.0, 1.0)
        } else {
            // root is negative; denominators vanish at the largest -n_i / (beta - n_i)
            let edge = n
                .iter()
                .filter(|&&ni| ni < budget)
                .map(|&ni| -ni / (budget - ni))
                .fold(f64::NEG_INFINITY, f64::max);
            (0.0, edge)
        }
    };
    // lo is the negative side, hi the positive side; they may be in either order
    let mut lambda = 0.5 * (lo + hi);
    let mut iterations = 0;
    let mut residual;
    if lo != hi {
        loop {
            iterations += 1;
            let (value, slope) = g(lambda);
            residual = value.abs();
            if residual <= 0.01 * opts.newton_tol || (hi - lo).abs() <= f64::EPSILON * 4.0 {
                break;
            }
            if iterations >= opts.max_iters {
                if residual <= opts.newton_tol {
                    break;
                }
                return Err(Error::NoConvergence { residual, iterations });
            }
            if value < 0.0 {
                lo = lambda;
            } else {
                hi = lambda;
            }
            let newton = lambda - value / slope;
            let inside = if lo < hi { newton > lo && newton < hi } else { newton > hi && newton < lo };
            lambda = if slope != 0.0 && newton.is_finite() && inside { newton } else { 0.5 * (lo + hi) };
        }
    } else {
        residual = g(lambda).0.abs();
    }
    if residual > opts.newton_tol {
        return Err(Error::NoConvergence { residual, iterations });
    }
    let mu0 = (1.0 - lambda) / budget;
    let distribution: Vec<f64> = p.iter().zip(&n).map(|(pi, ni)| pi / (mu0 * ni + lambda)).collect();
    if distribution.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(Error::NoConvergence { residual, iterations });
    }
    Ok(MechanismSolution {
        expected_cost: cost(&distribution, norms),
        distribution,
        lambda,
        mu0,
        binding: true,
        degenerate: false,
        norms: norms.to_vec(),
        budget,
    })
}

/// Draws an index with probability `distribution[i]` by inverting the CDF.
pub fn sample_index<R: rand::Rng + ?Sized>(distribution: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &m) in distribution.iter().enumerate() {
        acc += m;
        if u < acc {
            return i;
        }
    }
    distribution.iter().rposition(|&m| m > 0.0).unwrap_or(0)
}

/// Samples one of the representative noises according to the solved mechanism.
pub fn sample_noise<'a>(solution: &MechanismSolution, noises: &'a [Vec<f64>], seed: u64) -> (usize, &'a [f64]) {
    let mut rng = crate::rng::seeded(seed);
    let i = sample_index(&solution.distribution, &mut rng);
    (i, &noises[i])
}

/// Sentinel noise norm recorded for a class no search could reach.
pub const UNREACHABLE_NORM: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseOutcome {
    pub noisy: Vec<f64>,
    pub predicted: usize,
    pub chosen: usize,
    /// l0 norm per class; [`UNREACHABLE_NORM`] for unreachable classes.
    pub norms: Vec<usize>,
    /// Sampling distribution over all classes (zero for unreachable ones).
    pub distribution: Vec<f64>,
    pub unreachable: Vec<usize>,
    pub fell_back: Vec<usize>,
    pub binding: bool,
    pub degenerate: bool,
    pub expected_l0: f64,
    pub realized_l0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub policy: NoisePolicy,
    pub panda: PandaConfig,
    pub budget: f64,
    pub solve: SolveOptions,
}

/// Both phases for one user: a representative noise per class, then a
/// KL-optimal draw among them. `seed` should already be user-specific.
///
/// Classes that stay unreachable (even after the `ModifyAdd` fallback, or
/// after quantization) are removed from the support and the target is
/// renormalized over the rest.
pub fn defend_user(
    defender: &DifferentiableClassifier,
    x: &[f64],
    target: &TargetDistribution,
    cfg: &DefenseConfig,
    seed: u64,
) -> Result<DefenseOutcome> {
    let m = defender.classes();
    if target.len() != m {
        return Err(Error::Dimension { expected: m, got: target.len() });
    }
    let predicted = defender.predict(x)?;
    let mut noises = vec![vec![0.0; x.len()]; m];
    let mut norms = vec![0usize; m];
    let mut unreachable = Vec::new();
    let mut fell_back = Vec::new();
    for class in 0..m {
        if class == predicted {
            continue;
        }
        let r = find_noise(defender, x, class, cfg.policy, &cfg.panda)?;
        if r.fell_back {
            fell_back.push(class);
        }
        if r.success {
            norms[class] = r.l0;
            noises[class] = r.noise;
        } else {
            norms[class] = UNREACHABLE_NORM;
            unreachable.push(class);
        }
    }

    let reachable: Vec<usize> = (0..m).filter(|c| !unreachable.contains(c)).collect();
    let sub_target = target.restricted(&reachable);
    let sub_norms: Vec<usize> = reachable.iter().map(|&c| norms[c]).collect();
    let solution = solve_mechanism(&sub_target, &sub_norms, cfg.budget, &cfg.solve)?;

    let mut distribution = vec![0.0; m];
    for (&c, &pr) in reachable.iter().zip(&solution.distribution) {
        distribution[c] = pr;
    }
    let mut rng = crate::rng::seeded(seed);
    let chosen = reachable[sample_index(&solution.distribution, &mut rng)];
    let noisy: Vec<f64> = x.iter().zip(&noises[chosen]).map(|(a, r)| a + r).collect();
    Ok(DefenseOutcome {
        noisy,
        predicted,
        chosen,
        realized_l0: norms[chosen],
        norms,
        distribution,
        unreachable,
        fell_back,
        binding: solution.binding,
        degenerate: solution.degenerate,
        expected_l0: solution.expected_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::LinearOva;

    fn solve(p: &[f64], norms: &[usize], beta: f64) -> MechanismSolution {
        let t = TargetDistribution::new(p.to_vec()).unwrap();
        solve_mechanism(&t, norms, beta, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn kl_basics() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn slack_budget_returns_target() {
        let s = solve(&[0.5, 0.5], &[0, 0], 1.0);
        assert_eq!(s.distribution, vec![0.5, 0.5]);
        assert!(!s.binding);
    }

    #[test]
    fn two_classes_are_pinned_by_the_budget() {
        let s = solve(&[0.5, 0.5], &[0, 4], 1.0);
        assert!(s.binding);
        assert!((s.distribution[0] - 0.75).abs() < 1e-10);
        assert!((s.distribution[1] - 0.25).abs() < 1e-10);
        assert!(s.kkt_residuals(&[0.5, 0.5]).max() < 1e-10);
    }

    #[test]
    fn no_zero_norm_uses_the_right_root() {
        // beta between min and mean norm, no free class
        for (p, norms, beta) in [
            (vec![0.3, 0.3, 0.4], vec![1usize, 3, 6], 2.0),
            (vec![0.7, 0.2, 0.1], vec![1, 2, 9], 1.2),
            (vec![0.1, 0.1, 0.8], vec![2, 3, 4], 2.5),
        ] {
            let s = solve(&p, &norms, beta);
            assert!(s.binding);
            let r = s.kkt_residuals(&p);
            assert!(r.max() < 1e-8, "{r:?}");
            assert!(s.distribution.iter().all(|m| *m > 0.0));
        }
    }

    #[test]
    fn zero_budget_is_degenerate() {
        let s = solve(&[0.25, 0.25, 0.5], &[3, 0, 2], 0.0);
        assert!(s.degenerate);
        assert_eq!(s.distribution, vec![0.0, 1.0, 0.0]);
        let t = TargetDistribution::uniform(2).unwrap();
        assert!(matches!(
            solve_mechanism(&t, &[1, 2], 0.5, &SolveOptions::default()),
            Err(Error::Infeasible { .. })
        ));
        assert!(solve_mechanism(&t, &[0, 2], -1.0, &SolveOptions::default()).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let s = solve(&[0.5, 0.5], &[0, 4], 1.0);
        let noises = vec![vec![0.0], vec![1.0]];
        assert_eq!(sample_noise(&s, &noises, 9).0, sample_noise(&s, &noises, 9).0);
        let mut rng = crate::rng::seeded(1);
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_index(&s.distribution, &mut rng) == 0).count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn target_validation() {
        assert!(TargetDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(TargetDistribution::new(vec![1.0, 0.0]).is_err());
        assert!(TargetDistribution::from_counts(&[3, 0]).is_err());
        let t = TargetDistribution::from_counts(&[1, 3]).unwrap();
        assert_eq!(t.probs(), &[0.25, 0.75]);
        assert_eq!(t.kind(), TargetKind::Training);
    }

    #[test]
    fn defend_user_large_budget_samples_target() {
        let clf = DifferentiableClassifier::LinearOva(LinearOva {
            weights: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            bias: vec![0.0; 3],
        });
        let x = [0.8, 0.2, 0.0];
        let cfg = DefenseConfig {
            policy: NoisePolicy::ModifyAdd,
            panda: PandaConfig::default(),
            budget: 1e9,
            solve: SolveOptions::default(),
        };
        let t = TargetDistribution::uniform(3).unwrap();
        let out = defend_user(&clf, &x, &t, &cfg, 4).unwrap();
        assert_eq!(out.predicted, 0);
        assert_eq!(out.norms[0], 0);
        assert!(!out.binding);
        assert_eq!(out.distribution, t.probs());
        assert_eq!(clf.predict(&out.noisy).unwrap(), out.chosen);

        let zero = DefenseConfig { budget: 0.0, ..cfg };
        let out = defend_user(&clf, &x, &t, &zero, 4).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.noisy, x.to_vec());
        assert_eq!(out.chosen, 0);
    }
}
