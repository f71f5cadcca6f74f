use attrguard_core::classifier::{argmax, DifferentiableClassifier, LinearOva, Mlp};
use attrguard_core::graph::{random_graph, random_tree, BehaviorMatrix, BinaryLabels, SocialGraph, Sign};
use attrguard_core::lbp::{exact_marginals, lbp_run, LbpOptions, Pmrf};
use attrguard_core::linear::{convergence_report, linear_iterate, spectral_radius, LinearOptions, PowerOptions};
use attrguard_core::mechanism::{kl_divergence, solve_mechanism, SolveOptions, TargetDistribution};
use attrguard_core::panda::{find_noise, NoisePolicy, PandaConfig};
use attrguard_core::prior::loss_and_gradient;
use attrguard_core::Error;
use proptest::prelude::*;

fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn dense_fixed_point(g: &SocialGraph, q: &[f64], w_hat: f64) -> Vec<f64> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
        for &j in g.neighbors(i) {
            row[j] -= 2.0 * w_hat;
        }
    }
    dense_solve(a, q.to_vec())
}

fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = SocialGraph> {
    (2..=max_nodes, any::<u64>(), 0.0f64..1.0).prop_map(|(n, seed, density)| {
        let possible = n * (n - 1) / 2;
        let m = ((possible as f64) * density * 0.5).round() as usize;
        random_graph(n, m.max(1), seed).unwrap()
    })
}

fn mlp_strategy(features: usize, hidden: usize, classes: usize) -> impl Strategy<Value = Mlp> {
    (
        prop::collection::vec(prop::collection::vec(-2.0f64..2.0, features), hidden),
        prop::collection::vec(-1.0f64..1.0, hidden),
        prop::collection::vec(prop::collection::vec(-2.0f64..2.0, hidden), classes),
        prop::collection::vec(-1.0f64..1.0, classes),
    )
        .prop_map(|(w1, b1, w2, b2)| Mlp { w1, b1, w2, b2 })
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..x.len())
        .map(|j| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

fn simplex_point(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, m).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lbp_is_exact_on_trees(n in 1usize..=12, seed in any::<u64>(), priors in prop::collection::vec(0.01f64..0.99, 12), w in 0.51f64..0.95) {
        let g = random_tree(n, seed);
        let pmrf = Pmrf::new(&g, priors[..n].to_vec(), w).unwrap();
        let lbp = lbp_run(&pmrf, &LbpOptions { max_iters: 100, tol: 1e-14 }).unwrap();
        let exact = exact_marginals(&pmrf).unwrap();
        for (a, b) in lbp.posteriors.iter().zip(&exact) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn uninformative_priors_stay_at_half(g in graph_strategy(15), w in 0.51f64..0.99, iters in 1usize..20) {
        let pmrf = Pmrf::new(&g, vec![0.5; g.node_count()], w).unwrap();
        let r = lbp_run(&pmrf, &LbpOptions { max_iters: iters, tol: 0.0 }).unwrap();
        prop_assert!(r.posteriors.iter().all(|p| *p == 0.5));
    }

    #[test]
    fn linear_iteration_matches_dense_solve(g in graph_strategy(50), q in prop::collection::vec(-0.5f64..0.5, 50), frac in 0.05f64..0.9) {
        let n = g.node_count();
        let rho = spectral_radius(&g, &PowerOptions::default());
        let w_hat = frac / (2.0 * rho);
        let q = &q[..n];
        let r = linear_iterate(&g, q, w_hat, &LinearOptions { max_iters: 100_000, rel_tol: 1e-13 }).unwrap();
        prop_assert!(r.converged);
        let oracle = dense_fixed_point(&g, q, w_hat);
        for (a, b) in r.residuals.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn converged_iterate_is_near_fixed_point(g in graph_strategy(40), q in prop::collection::vec(-0.5f64..0.5, 40), frac in 0.05f64..0.95, rel_tol in 1e-6f64..1e-2) {
        let n = g.node_count();
        let rho = spectral_radius(&g, &PowerOptions::default());
        let w_hat = frac / (2.0 * rho);
        let q = &q[..n];
        let r = linear_iterate(&g, q, w_hat, &LinearOptions { max_iters: 100_000, rel_tol }).unwrap();
        prop_assume!(r.converged);
        let mut mp = vec![0.0; n];
        g.adjacency_mul(&r.residuals, &mut mp);
        let gap: f64 = (0..n).map(|i| (r.residuals[i] - q[i] - 2.0 * w_hat * mp[i]).abs()).sum();
        let norm: f64 = r.residuals.iter().map(|v| v.abs()).sum();
        prop_assert!(gap <= 10.0 * rel_tol * norm + 1e-15, "gap {gap} norm {norm}");
    }

    #[test]
    fn cycle_dichotomy(q in prop::collection::vec(-0.5f64..0.5, 8)) {
        prop_assume!(q.iter().any(|v| v.abs() > 1e-3));
        let c8 = SocialGraph::cycle(8);
        let opts = LinearOptions::default();
        let r = linear_iterate(&c8, &q, 0.225, &opts).unwrap();
        prop_assert!(r.converged);
        let d = linear_iterate(&c8, &q, 0.275, &opts);
        let is_divergence = matches!(d, Err(Error::Divergence { .. }));
        prop_assert!(is_divergence);
    }

    #[test]
    fn sufficient_bound_never_exceeds_necessary(g in graph_strategy(40)) {
        let rep = convergence_report(&g, None);
        prop_assert!(rep.sufficient_bound <= rep.necessary_bound + 1e-12);
        prop_assert!(rep.spectral_radius <= g.max_degree() as f64 + 1e-9);
    }

    #[test]
    fn regular_graphs_have_equal_bounds(n in 3usize..40, kind in 0usize..2) {
        let g = if kind == 0 { SocialGraph::cycle(n) } else { SocialGraph::complete(n.min(12)) };
        let rep = convergence_report(&g, None);
        prop_assert!((rep.sufficient_bound - rep.necessary_bound).abs() <= 1e-9);
    }

    #[test]
    fn argmax_ignores_constant_shift(values in prop::collection::vec(-10.0f64..10.0, 1..10), shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        prop_assert_eq!(argmax(&values), argmax(&shifted));
        let m = values.len();
        let w: Vec<Vec<f64>> = (0..m).map(|_| vec![0.0]).collect();
        let base = DifferentiableClassifier::LinearOva(LinearOva { weights: w.clone(), bias: values.clone() });
        let moved = DifferentiableClassifier::LinearOva(LinearOva { weights: w, bias: shifted });
        prop_assert_eq!(base.predict(&[0.3]).unwrap(), moved.predict(&[0.3]).unwrap());
    }

    #[test]
    fn kl_is_nonnegative(p in simplex_point(5), q in simplex_point(5)) {
        prop_assert!(kl_divergence(&p, &q) >= 0.0);
        prop_assert!(kl_divergence(&p, &p).abs() < 1e-15);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences(mlp in mlp_strategy(6, 5, 3), x in prop::collection::vec(0.0f64..1.0, 6), class in 0usize..3) {
        let clf = DifferentiableClassifier::Mlp(mlp);
        // finite differences are meaningless across a ReLU kink
        if let DifferentiableClassifier::Mlp(m) = &clf {
            for (w, b) in m.w1.iter().zip(&m.b1) {
                let z: f64 = w.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + b;
                prop_assume!(z.abs() > 1e-3);
            }
        }
        let analytic = clf.input_gradient(&x, class).unwrap();
        let numeric = central_difference(|v| clf.decision_values(v).unwrap()[class], &x);
        prop_assert!(relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn linear_gradient_matches_finite_differences(weights in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 3), bias in prop::collection::vec(-1.0f64..1.0, 3), x in prop::collection::vec(0.0f64..1.0, 4), class in 0usize..3) {
        let clf = DifferentiableClassifier::LinearOva(LinearOva { weights, bias });
        let analytic = clf.input_gradient(&x, class).unwrap();
        let numeric = central_difference(|v| clf.decision_values(v).unwrap()[class], &x);
        prop_assert!(relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn prior_loss_gradient_matches_finite_differences(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 5), 6),
        signs in prop::collection::vec(any::<bool>(), 6),
        w in prop::collection::vec(-2.0f64..2.0, 5),
        b in -1.0f64..1.0,
        l2 in 0.0f64..2.0,
    ) {
        let behaviors = BehaviorMatrix::from_dense_rows(5, &rows).unwrap();
        let labels = BinaryLabels::new(signs.iter().enumerate().map(|(u, s)| (u, if *s { Sign::Positive } else { Sign::Negative })));
        let (_, gw, gb) = loss_and_gradient(&behaviors, &labels, l2, &w, b).unwrap();
        let mut params = w.clone();
        params.push(b);
        let numeric = central_difference(
            |p| loss_and_gradient(&behaviors, &labels, l2, &p[..5], p[5]).unwrap().0,
            &params,
        );
        let mut analytic = gw;
        analytic.push(gb);
        prop_assert!(relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn mechanism_beats_every_grid_point(p in simplex_point(3), n1 in 1usize..6, n2 in 1usize..10, frac in 0.05f64..1.2) {
        let norms = [0, n1, n2];
        let target = TargetDistribution::new(p.clone()).unwrap();
        let full: f64 = p.iter().zip(&norms).map(|(a, &n)| a * n as f64).sum();
        let beta = frac * full;
        let sol = solve_mechanism(&target, &norms, beta, &SolveOptions::default()).unwrap();
        let best = kl_divergence(&p, &sol.distribution);
        prop_assert!(sol.expected_cost <= beta + 1e-9);
        let step = 0.02;
        let k = (1.0f64 / step).round() as usize;
        for a in 1..k {
            for b in 1..k - a {
                let m = [a as f64 * step, b as f64 * step, (k - a - b) as f64 * step];
                let cost: f64 = m.iter().zip(&norms).map(|(v, &n)| v * n as f64).sum();
                if cost <= beta {
                    prop_assert!(best <= kl_divergence(&p, &m) + 1e-6);
                }
            }
        }
    }

    #[test]
    fn mechanism_kl_non_increasing_in_budget(p in simplex_point(4), norms in prop::collection::vec(1usize..12, 3)) {
        let norms = [0, norms[0], norms[1], norms[2]];
        let target = TargetDistribution::new(p.clone()).unwrap();
        let mut last = f64::INFINITY;
        for step in 1..=40 {
            let beta = step as f64 * 0.25;
            let sol = solve_mechanism(&target, &norms, beta, &SolveOptions::default()).unwrap();
            let kl = kl_divergence(&p, &sol.distribution);
            prop_assert!(kl <= last + 1e-12);
            prop_assert!(sol.expected_cost <= beta + 1e-9);
            last = kl;
        }
    }

    #[test]
    fn panda_respects_box_policy_and_success(
        weights in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 8), 3),
        bias in prop::collection::vec(-0.5f64..0.5, 3),
        x in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 8),
        target in 0usize..3,
        policy in prop_oneof![Just(NoisePolicy::ModifyExist), Just(NoisePolicy::AddNew), Just(NoisePolicy::ModifyAdd)],
    ) {
        let clf = DifferentiableClassifier::LinearOva(LinearOva { weights, bias });
        let r = find_noise(&clf, &x, target, policy, &PandaConfig::default()).unwrap();
        let noisy = r.apply(&x);
        prop_assert!(noisy.iter().all(|v| (0.0..=1.0).contains(v)));
        if r.success {
            prop_assert_eq!(clf.predict(&noisy).unwrap(), target);
        }
        if !r.fell_back {
            for (j, d) in r.noise.iter().enumerate() {
                if *d != 0.0 {
                    match policy {
                        NoisePolicy::AddNew => prop_assert!(x[j] == 0.0 && *d > 0.0),
                        NoisePolicy::ModifyExist => prop_assert!(x[j] != 0.0),
                        NoisePolicy::ModifyAdd => {}
                    }
                }
            }
        }
        let again = find_noise(&clf, &x, target, policy, &PandaConfig::default()).unwrap();
        prop_assert_eq!(r, again);
    }
}

#[test]
fn lbp_tolerates_trees_from_every_seed_quickly() {
    for seed in 0..50 {
        let g = random_tree(12, seed);
        let priors: Vec<f64> = (0..12).map(|i| 0.05 + 0.9 * ((i * 7 + seed as usize) % 11) as f64 / 10.0).collect();
        let pmrf = Pmrf::new(&g, priors, 0.8).unwrap();
        let r = lbp_run(&pmrf, &LbpOptions { max_iters: 100, tol: 1e-14 }).unwrap();
        assert!(r.converged);
    }
}
