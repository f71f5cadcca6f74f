//! Pairwise MRF over binary attribute states and loopy belief propagation.
//!
//! Node potential `phi_u(+1) = q_u`, `phi_u(-1) = 1 - q_u`; every edge carries
//! `psi(x_u, x_v) = w` when the states agree and `1 - w` otherwise. Messages are
//! normalized so only `m_vu(x_u = +1)` is stored.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::math;

/// Largest graph accepted by [`exact_marginals`].
pub const EXACT_NODE_CAP: usize = 20;

#[derive(Debug, Clone)]
pub struct Pmrf<'g> {
    graph: &'g SocialGraph,
    priors: Vec<f64>,
    w: f64,
}

impl<'g> Pmrf<'g> {
    /// `w` is the probability that linked users share a state and must lie in `(0.5, 1)`.
    pub fn new(graph: &'g SocialGraph, priors: Vec<f64>, w: f64) -> Result<Self> {
        if priors.len() != graph.node_count() {
            return Err(Error::Dimension { expected: graph.node_count(), got: priors.len() });
        }
        if let Some((u, q)) = priors.iter().enumerate().find(|(_, q)| !(0.0..=1.0).contains(*q)) {
            return Err(Error::invalid(format!("prior of node {u} is {q}, not a probability")));
        }
        if !(w > 0.5 && w < 1.0) {
            return Err(Error::invalid(format!("homophily strength w = {w} must lie in (0.5, 1)")));
        }
        Ok(Pmrf { graph, priors, w })
    }

    pub fn graph(&self) -> &SocialGraph {
        self.graph
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    fn edge_potential(&self, same: bool) -> f64 {
        if same {
            self.w
        } else {
            1.0 - self.w
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbpOptions {
    pub max_iters: usize,
    /// Halt once the summed absolute message change of a sweep drops below this.
    pub tol: f64,
}

impl Default for LbpOptions {
    fn default() -> Self {
        LbpOptions { max_iters: 100, tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbpResult {
    pub posteriors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Synchronous loopy belief propagation.
///
/// All messages start at 0.5. Each sweep recomputes every directed message
/// from the previous sweep's messages, working in the log domain so long
/// products cannot underflow. Posteriors are returned even when the sweep cap
/// is hit; `converged` reports which case occurred.
pub fn lbp_run(pmrf: &Pmrf<'_>, opts: &LbpOptions) -> Result<LbpResult> {
    let g = pmrf.graph;
    let n = g.node_count();
    let w = pmrf.w;
    // incoming[s] for slot s in u's list holds the message from that neighbor to u
    let mut incoming = vec![0.5; g.slot_count()];
    let mut next = vec![0.5; g.slot_count()];
    let mut reverse = vec![0usize; g.slot_count()];
    for u in 0..n {
        for (s, &v) in g.slots(u).zip(g.neighbors(u)) {
            reverse[s] = g.slot_of(v, u).expect("adjacency is symmetric");
        }
    }

    let log_beliefs = |incoming: &[f64], u: usize| -> (f64, f64) {
        let q = pmrf.priors[u];
        let mut l1 = math::ln(q);
        let mut l0 = math::ln(1.0 - q);
        for s in g.slots(u) {
            l1 += math::ln(incoming[s]);
            l0 += math::ln(1.0 - incoming[s]);
        }
        (l1, l0)
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let mut change = 0.0;
        for v in 0..n {
            let (l1, l0) = log_beliefs(&incoming, v);
            for (s, &u) in g.slots(v).zip(g.neighbors(v)) {
                // leave out what u told v
                let a = l1 - math::ln(incoming[s]);
                let b = l0 - math::ln(1.0 - incoming[s]);
                let top = a.max(b);
                let (ea, eb) = (math::exp(a - top), math::exp(b - top));
                let m = (1.0 - w) + (2.0 * w - 1.0) * (ea / (ea + eb));
                if !m.is_finite() {
                    return Err(Error::NonFiniteMessage { from: v, to: u, iteration: iterations });
                }
                let target = reverse[s];
                change += (m - incoming[target]).abs();
                next[target] = m;
            }
        }
        core::mem::swap(&mut incoming, &mut next);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if g.slot_count() == 0 {
        converged = true;
    }

    let posteriors = (0..n)
        .map(|u| {
            let (l1, l0) = log_beliefs(&incoming, u);
            math::sigmoid(l1 - l0)
        })
        .collect();
    Ok(LbpResult { posteriors, iterations, converged })
}

/// Exact `Pr(x_u = +1)` for every node by enumerating all `2^|V|` joint states.
pub fn exact_marginals(pmrf: &Pmrf<'_>) -> Result<Vec<f64>> {
    let g = pmrf.graph;
    let n = g.node_count();
    if n > EXACT_NODE_CAP {
        return Err(Error::TooLarge { nodes: n, cap: EXACT_NODE_CAP });
    }
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let log_same = math::ln(pmrf.edge_potential(true));
    let log_diff = math::ln(pmrf.edge_potential(false));
    let log_q: Vec<(f64, f64)> = pmrf.priors.iter().map(|&q| (math::ln(q), math::ln(1.0 - q))).collect();

    let states = 1usize << n;
    let mut log_weight = Vec::with_capacity(states);
    for state in 0..states {
        let on = |u: usize| state >> u & 1 == 1;
        let mut lw = 0.0;
        for (u, &(l1, l0)) in log_q.iter().enumerate() {
            lw += if on(u) { l1 } else { l0 };
        }
        for &(u, v) in &edges {
            lw += if on(u) == on(v) { log_same } else { log_diff };
        }
        log_weight.push(lw);
    }
    let top = log_weight.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut mass = vec![0.0; n];
    for (state, lw) in log_weight.into_iter().enumerate() {
        let weight = math::exp(lw - top);
        z += weight;
        for (u, m) in mass.iter_mut().enumerate() {
            if state >> u & 1 == 1 {
                *m += weight;
            }
        }
    }
    Ok(mass.into_iter().map(|m| m / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_tree;
    use rand::Rng;

    fn tight() -> LbpOptions {
        LbpOptions { max_iters: 1000, tol: 1e-14 }
    }

    #[test]
    fn isolated_node_keeps_prior() {
        let g = SocialGraph::empty(1);
        let m = Pmrf::new(&g, vec![0.7], 0.8).unwrap();
        let r = lbp_run(&m, &LbpOptions::default()).unwrap();
        assert_eq!(r.posteriors, vec![0.7]);
        assert!(r.converged);
        assert!((exact_marginals(&Pmrf::new(&g, vec![0.3], 0.8).unwrap()).unwrap()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn two_node_edge_matches_enumeration() {
        let g = SocialGraph::path(2);
        let m = Pmrf::new(&g, vec![0.9, 0.5], 0.8).unwrap();
        let exact = exact_marginals(&m).unwrap();
        // hand enumeration: (0.9*0.8 + 0.1*0.2) / 1 = 0.74
        assert!((exact[1] - 0.74).abs() < 1e-12);
        let r = lbp_run(&m, &tight()).unwrap();
        assert!(r.converged);
        assert!((r.posteriors[1] - 0.74).abs() < 1e-12);
    }

    #[test]
    fn weak_homophily_leaves_priors() {
        let g = SocialGraph::cycle(5);
        let q = vec![0.9, 0.2, 0.6, 0.4, 0.7];
        let m = Pmrf::new(&g, q.clone(), 0.5 + 1e-9).unwrap();
        let r = lbp_run(&m, &LbpOptions::default()).unwrap();
        for (p, q) in r.posteriors.iter().zip(&q) {
            assert!((p - q).abs() < 1e-7);
        }
    }

    #[test]
    fn symmetric_triangle() {
        let g = SocialGraph::complete(3);
        let m = Pmrf::new(&g, vec![0.5; 3], 0.9).unwrap();
        for p in exact_marginals(&m).unwrap() {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn uninformative_priors_stay_exactly_half() {
        let g = crate::graph::random_graph(15, 40, 2).unwrap();
        let m = Pmrf::new(&g, vec![0.5; 15], 0.85).unwrap();
        for iters in [1, 2, 7, 30] {
            let r = lbp_run(&m, &LbpOptions { max_iters: iters, tol: 0.0 }).unwrap();
            assert!(r.posteriors.iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn trees_are_exact() {
        let mut rng = crate::rng::seeded(3);
        for t in 0..20 {
            let n = rng.random_range(1..=12);
            let g = random_tree(n, 100 + t);
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
            let w = rng.random_range(0.55..0.95);
            let m = Pmrf::new(&g, q, w).unwrap();
            let r = lbp_run(&m, &tight()).unwrap();
            assert!(r.converged);
            let exact = exact_marginals(&m).unwrap();
            for (a, b) in r.posteriors.iter().zip(&exact) {
                assert!((a - b).abs() <= 1e-9, "tree {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn automorphism_permutes_posteriors() {
        // reflection of a path maps node i to n-1-i
        let g = SocialGraph::path(6);
        let q = vec![0.8, 0.3, 0.55, 0.55, 0.3, 0.8];
        let m = Pmrf::new(&g, q, 0.7).unwrap();
        let r = lbp_run(&m, &tight()).unwrap();
        for i in 0..6 {
            assert!((r.posteriors[i] - r.posteriors[5 - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn evidence_is_monotone() {
        let g = SocialGraph::path(2);
        let mut last = 0.0;
        for k in 1..20 {
            let m = Pmrf::new(&g, vec![k as f64 / 20.0, 0.4], 0.75).unwrap();
            let p = lbp_run(&m, &tight()).unwrap().posteriors[1];
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn validation() {
        let g = SocialGraph::path(2);
        assert!(Pmrf::new(&g, vec![0.5, 0.5], 0.5).is_err());
        assert!(Pmrf::new(&g, vec![0.5, 0.5], 1.0).is_err());
        assert!(Pmrf::new(&g, vec![0.5], 0.7).is_err());
        assert!(Pmrf::new(&g, vec![0.5, 1.2], 0.7).is_err());
        let big = SocialGraph::empty(21);
        let m = Pmrf::new(&big, vec![0.5; 21], 0.7).unwrap();
        assert_eq!(exact_marginals(&m), Err(Error::TooLarge { nodes: 21, cap: 20 }));
    }

    #[test]
    fn extreme_priors_do_not_produce_nan() {
        let g = SocialGraph::cycle(4);
        let m = Pmrf::new(&g, vec![1.0, 0.0, 0.5, 1.0], 0.9).unwrap();
        let r = lbp_run(&m, &LbpOptions::default()).unwrap();
        assert!(r.posteriors.iter().all(|p| p.is_finite()));
        assert_eq!(r.posteriors[0], 1.0);
        assert_eq!(r.posteriors[1], 0.0);
    }
}
