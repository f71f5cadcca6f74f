//! Linearized propagation in residual coordinates.
//!
//! With residuals `y^ = y - 0.5`, message-free propagation becomes the affine
//! iteration `p^(t) = q^ + 2 w^ M p^(t-1)`, which converges for every start
//! point iff `2 w^ rho(M) < 1`. This module runs that iteration on the sparse
//! adjacency structure and reports the three convergence bounds.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::math;

/// Iterate l1 norm beyond which the iteration is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

pub fn residual(p: f64) -> f64 {
    p - 0.5
}

pub fn probability(r: f64) -> f64 {
    r + 0.5
}

/// Residual converted back to a reportable probability, clamped to `[0, 1]`.
pub fn clamped_probability(r: f64) -> f64 {
    (r + 0.5).clamp(0.0, 1.0)
}

/// Message `v -> u` once the receiver's own message is no longer excluded.
pub fn simplified_message(p_v: f64, w: f64) -> f64 {
    p_v * w + (1.0 - p_v) * (1.0 - w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearOptions {
    pub max_iters: usize,
    /// Relative l1 change `|p(t) - p(t-1)|_1 / |p(t-1)|_1` that ends the iteration.
    pub rel_tol: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions { max_iters: 1000, rel_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearResult {
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs `p^(t) = q^ + 2 w^ M p^(t-1)` from `p^(0) = q^`.
///
/// Residuals are not clamped during iteration. Fails with
/// [`Error::Divergence`] once the iterate's l1 norm exceeds
/// [`DIVERGENCE_NORM`] or stops being finite.
pub fn linear_iterate(
    graph: &SocialGraph,
    prior_residuals: &[f64],
    w_hat: f64,
    opts: &LinearOptions,
) -> Result<LinearResult> {
    let n = graph.node_count();
    if prior_residuals.len() != n {
        return Err(Error::Dimension { expected: n, got: prior_residuals.len() });
    }
    if !(w_hat > 0.0) || !w_hat.is_finite() {
        return Err(Error::invalid(alloc::format!("residual homophily must be positive, got {w_hat}")));
    }
    let scale = 2.0 * w_hat;
    let mut current = prior_residuals.to_vec();
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        graph.adjacency_mul(&current, &mut next);
        let mut change = 0.0;
        let mut norm = 0.0;
        for ((out, &q), &prev) in next.iter_mut().zip(prior_residuals).zip(&current) {
            *out = q + scale * *out;
            change += (*out - prev).abs();
            norm += out.abs();
        }
        if !(norm <= DIVERGENCE_NORM) {
            let rho = spectral_radius(graph, &PowerOptions::default());
            return Err(Error::Divergence {
                iteration: iterations,
                norm,
                w_hat,
                necessary_bound: bound(rho),
            });
        }
        let prev_norm = math::l1_norm(&current);
        core::mem::swap(&mut current, &mut next);
        if change == 0.0 || (prev_norm > 0.0 && change / prev_norm < opts.rel_tol) {
            converged = true;
            break;
        }
    }
    Ok(LinearResult { residuals: current, iterations, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualPrediction {
    /// `true` for `+1`.
    pub positive: bool,
    /// Residual was exactly zero; reported as `-1`.
    pub tie: bool,
}

pub fn predict_from_residual(residuals: &[f64]) -> Vec<ResidualPrediction> {
    residuals
        .iter()
        .map(|&r| ResidualPrediction { positive: r > 0.0, tie: r == 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { max_iters: 1000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub value: f64,
    /// `|M x - value x|_2` for the final unit vector `x`.
    pub residual: f64,
    pub iterations: usize,
}

/// Power iteration for the largest eigenvalue of the adjacency matrix.
///
/// Iterates on `M + cI` with `c` the average degree: for a nonnegative
/// symmetric `M` the spectrum lies in `[-rho, rho]` and `avg_degree <= rho`,
/// so the shift makes `rho + c` strictly dominant even on bipartite graphs,
/// where plain power iteration oscillates between `+rho` and `-rho`. The
/// estimate is the Rayleigh quotient of `M`, clamped to the maximum degree
/// so rounding cannot push it past `rho`.
pub fn power_iteration(graph: &SocialGraph, opts: &PowerOptions) -> PowerEstimate {
    let n = graph.node_count();
    if graph.edge_count() == 0 {
        return PowerEstimate { value: 0.0, residual: 0.0, iterations: 0 };
    }
    let shift = graph.avg_degree();
    let max_degree = graph.max_degree() as f64;
    let mut rng = crate::rng::seeded(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| 1.0 + 0.01 * rng.random::<f64>()).collect();
    normalize(&mut x);
    let mut mx = vec![0.0; n];
    let mut estimate = PowerEstimate { value: 0.0, residual: f64::INFINITY, iterations: 0 };
    for it in 1..=opts.max_iters {
        graph.adjacency_mul(&x, &mut mx);
        let value = math::dot(&x, &mx).min(max_degree);
        let residual = math::sqrt(mx.iter().zip(&x).map(|(a, b)| (a - value * b) * (a - value * b)).sum());
        estimate = PowerEstimate { value, residual, iterations: it };
        if residual <= opts.tol {
            break;
        }
        for (xi, mi) in x.iter_mut().zip(&mx) {
            *xi = mi + shift * *xi;
        }
        normalize(&mut x);
    }
    estimate
}

fn normalize(x: &mut [f64]) {
    let norm = math::sqrt(math::dot(x, x));
    for v in x {
        *v /= norm;
    }
}

/// Spectral radius estimate; 0 for a graph without edges.
pub fn spectral_radius(graph: &SocialGraph, opts: &PowerOptions) -> f64 {
    power_iteration(graph, opts).value
}

/// `1 / (2 x)`, infinite when `x` is zero.
fn bound(x: f64) -> f64 {
    if x > 0.0 {
        1.0 / (2.0 * x)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Below the max-degree bound: convergence is certain.
    Guaranteed,
    /// Below the spectral bound only.
    Expected,
    Divergent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub spectral_radius: f64,
    pub max_degree: usize,
    pub avg_degree: f64,
    /// `1 / (2 rho)`: convergence iff `w^` is below it.
    pub necessary_bound: f64,
    /// `1 / (2 max_degree)`: sufficient for convergence.
    pub sufficient_bound: f64,
    /// `1 / (2 avg_degree)`: advisory only.
    pub heuristic_bound: f64,
    pub w_hat: Option<f64>,
    pub verdict: Option<Verdict>,
}

pub fn convergence_report(graph: &SocialGraph, w_hat: Option<f64>) -> ConvergenceReport {
    let rho = spectral_radius(graph, &PowerOptions::default());
    let necessary_bound = bound(rho);
    let sufficient_bound = bound(graph.max_degree() as f64);
    let verdict = w_hat.map(|w| {
        if w < sufficient_bound {
            Verdict::Guaranteed
        } else if w < necessary_bound {
            Verdict::Expected
        } else {
            Verdict::Divergent
        }
    });
    ConvergenceReport {
        spectral_radius: rho,
        max_degree: graph.max_degree(),
        avg_degree: graph.avg_degree(),
        necessary_bound,
        sufficient_bound,
        heuristic_bound: bound(graph.avg_degree()),
        w_hat,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_formula() {
        for w in [0.55, 0.8, 0.99] {
            assert_eq!(simplified_message(0.5, w), 0.5);
        }
        assert_eq!(simplified_message(1.0, 0.8), 0.8);
        // equals the two-node enumeration value
        assert!((simplified_message(0.9, 0.8) - 0.74).abs() < 1e-15);
    }

    #[test]
    fn zero_prior_is_a_one_step_fixed_point() {
        let g = SocialGraph::cycle(6);
        let r = linear_iterate(&g, &[0.0; 6], 0.1, &LinearOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.residuals.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_node_fixed_point() {
        let g = SocialGraph::path(2);
        let opts = LinearOptions { max_iters: 1000, rel_tol: 1e-14 };
        let r = linear_iterate(&g, &[0.1, -0.1], 0.1, &opts).unwrap();
        assert!(r.converged);
        assert!((r.residuals[0] - 1.0 / 12.0).abs() < 1e-12);
        assert!((r.residuals[1] + 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn two_node_divergence() {
        let g = SocialGraph::path(2);
        match linear_iterate(&g, &[0.1, -0.1], 0.6, &LinearOptions::default()) {
            Err(Error::Divergence { necessary_bound, .. }) => assert!((necessary_bound - 0.5).abs() < 1e-9),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn residual_predictions() {
        let p = predict_from_residual(&[0.2, -0.3, 0.0]);
        assert_eq!(p[0], ResidualPrediction { positive: true, tie: false });
        assert_eq!(p[1], ResidualPrediction { positive: false, tie: false });
        assert_eq!(p[2], ResidualPrediction { positive: false, tie: true });
    }

    #[test]
    fn residual_round_trip() {
        for y in [0.0, 0.1, 0.5, 0.73, 1.0] {
            assert!((probability(residual(y)) - y).abs() < 1e-15);
        }
        assert_eq!(clamped_probability(0.9), 1.0);
        assert_eq!(clamped_probability(-0.9), 0.0);
    }

    #[test]
    fn spectral_radius_of_small_graphs() {
        let o = PowerOptions::default();
        assert!((spectral_radius(&SocialGraph::path(2), &o) - 1.0).abs() < 1e-6);
        assert!((spectral_radius(&SocialGraph::cycle(4), &o) - 2.0).abs() < 1e-6);
        assert!((spectral_radius(&SocialGraph::star(4), &o) - 2.0).abs() < 1e-6);
        assert_eq!(spectral_radius(&SocialGraph::empty(3), &o), 0.0);
    }

    #[test]
    fn report_bounds_and_verdicts() {
        let star = convergence_report(&SocialGraph::star(4), Some(0.2));
        assert_eq!(star.sufficient_bound, 0.125);
        assert!((star.necessary_bound - 0.25).abs() < 1e-9);
        assert_eq!(star.verdict, Some(Verdict::Expected));
        let c4 = convergence_report(&SocialGraph::cycle(4), Some(0.2));
        assert_eq!(c4.verdict, Some(Verdict::Guaranteed));
        assert!((c4.necessary_bound - c4.sufficient_bound).abs() < 1e-9);
        let k2 = convergence_report(&SocialGraph::path(2), Some(0.5));
        assert_eq!(k2.verdict, Some(Verdict::Divergent));
    }
}
