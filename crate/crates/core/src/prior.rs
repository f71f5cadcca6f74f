//! Binary logistic-regression prior.
//!
//! A user's prior probability of holding the attribute is
//! `q_u = 1 / (1 + exp(-(b_u . c + d)))`, learned by maximum likelihood with an
//! L2 penalty on `c`. Users without any behavior get exactly `0.5`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BehaviorMatrix, BinaryLabels, Sign};
use crate::math;
use crate::rows::Rows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

impl BinaryLrModel {
    pub fn object_count(&self) -> usize {
        self.weights.len()
    }

    /// Logistic probability for an arbitrary dense behavior vector.
    pub fn probability(&self, x: &[f64]) -> f64 {
        math::sigmoid(math::dot(&self.weights, x) + self.bias)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once the Euclidean norm of the full gradient drops to this.
    pub tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { l2: 1.0, max_epochs: 2000, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Objective after each accepted step, starting with the initial point.
    pub loss_history: Vec<f64>,
}

/// Regularized negative log-likelihood and its gradient.
pub(crate) fn objective<R: Rows>(
    rows: &R,
    idx: &[usize],
    y: &[f64],
    l2: f64,
    w: &[f64],
    b: f64,
) -> (f64, Vec<f64>, f64) {
    let mut loss = 0.5 * l2 * math::dot(w, w);
    let mut gw: Vec<f64> = w.iter().map(|wi| l2 * wi).collect();
    let mut gb = 0.0;
    for (&i, &yi) in idx.iter().zip(y) {
        let z = yi * (rows.row_dot(i, w) + b);
        loss += math::softplus(-z);
        // d/dz softplus(-z) = -sigmoid(-z)
        let coef = -yi * math::sigmoid(-z);
        rows.row_axpy(i, coef, &mut gw);
        gb += coef;
    }
    (loss, gw, gb)
}

/// Full-batch gradient descent with Armijo backtracking.
pub(crate) fn fit<R: Rows>(
    rows: &R,
    idx: &[usize],
    y: &[f64],
    opts: &TrainOptions,
) -> Result<(Vec<f64>, f64, TrainReport)> {
    if !(opts.l2 >= 0.0) || !opts.l2.is_finite() {
        return Err(Error::invalid(format!("l2 strength must be finite and >= 0, got {}", opts.l2)));
    }
    let n = rows.n_cols();
    let mut w = vec![0.0; n];
    let mut b = 0.0;
    let (mut loss, mut gw, mut gb) = objective(rows, idx, y, opts.l2, &w, b);
    let lipschitz =
        0.25 * idx.iter().map(|&i| rows.row_sq_norm(i) + 1.0).sum::<f64>() + opts.l2;
    let mut step = 1.0 / lipschitz.max(1e-12);
    let mut history = vec![loss];
    let mut epochs = 0;
    let mut grad_norm = math::sqrt(math::dot(&gw, &gw) + gb * gb);

    while grad_norm > opts.tol && epochs < opts.max_epochs {
        let g2 = grad_norm * grad_norm;
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_try: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
            let b_try = b - step * gb;
            let (l_try, gw_try, gb_try) = objective(rows, idx, y, opts.l2, &w_try, b_try);
            if !l_try.is_finite() {
                return Err(Error::NonFiniteLoss(format!("loss {l_try} at epoch {epochs}, step {step:e}")));
            }
            if l_try <= loss - 1e-4 * step * g2 {
                w = w_try;
                b = b_try;
                loss = l_try;
                gw = gw_try;
                gb = gb_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        epochs += 1;
        if !accepted {
            // no decrease representable at this precision
            break;
        }
        history.push(loss);
        grad_norm = math::sqrt(math::dot(&gw, &gw) + gb * gb);
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("final loss {loss}")));
    }
    let converged = grad_norm <= opts.tol;
    Ok((w, b, TrainReport { epochs, converged, grad_norm, loss_history: history }))
}

fn training_set(behaviors: &BehaviorMatrix, labels: &BinaryLabels) -> Result<(Vec<usize>, Vec<f64>)> {
    labels.check_users(behaviors.user_count())?;
    let (idx, y): (Vec<usize>, Vec<f64>) = labels.iter().map(|(u, s)| (u, s.value())).unzip();
    let has = |s: Sign| labels.iter().any(|(_, l)| l == s);
    if !has(Sign::Positive) {
        return Err(Error::MissingClass("+1".into()));
    }
    if !has(Sign::Negative) {
        return Err(Error::MissingClass("-1".into()));
    }
    Ok((idx, y))
}

pub fn train_prior(
    behaviors: &BehaviorMatrix,
    labels: &BinaryLabels,
    opts: &TrainOptions,
) -> Result<(BinaryLrModel, TrainReport)> {
    let (idx, y) = training_set(behaviors, labels)?;
    let (weights, bias, report) = fit(behaviors, &idx, &y, opts)?;
    Ok((BinaryLrModel { weights, bias, l2: opts.l2 }, report))
}

/// Objective value and gradient `(loss, d/dc, d/dd)` at an arbitrary parameter point.
pub fn loss_and_gradient(
    behaviors: &BehaviorMatrix,
    labels: &BinaryLabels,
    l2: f64,
    weights: &[f64],
    bias: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    if weights.len() != behaviors.object_count() {
        return Err(Error::Dimension { expected: behaviors.object_count(), got: weights.len() });
    }
    labels.check_users(behaviors.user_count())?;
    let (idx, y): (Vec<usize>, Vec<f64>) = labels.iter().map(|(u, s)| (u, s.value())).unzip();
    Ok(objective(behaviors, &idx, &y, l2, weights, bias))
}

pub fn predict_prior(model: &BinaryLrModel, user: usize, behaviors: &BehaviorMatrix) -> Result<f64> {
    if user >= behaviors.user_count() {
        return Err(Error::UnknownUser(user));
    }
    if model.weights.len() != behaviors.object_count() {
        return Err(Error::Dimension { expected: model.weights.len(), got: behaviors.object_count() });
    }
    if !behaviors.has_behaviors(user) {
        return Ok(0.5);
    }
    Ok(math::sigmoid(behaviors.row_dot(user, &model.weights) + model.bias))
}

/// Priors for nodes `0..node_count`; nodes beyond the behavior matrix are
/// treated as behavior-less.
pub fn prior_vector(model: &BinaryLrModel, behaviors: &BehaviorMatrix, node_count: usize) -> Result<Vec<f64>> {
    (0..node_count)
        .map(|u| if u < behaviors.user_count() { predict_prior(model, u, behaviors) } else { Ok(0.5) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn one_dim() -> (BehaviorMatrix, BinaryLabels) {
        let b = BehaviorMatrix::from_triplets(2, 1, [(0, 0, 1.0)]).unwrap();
        let l = BinaryLabels::new([(0, Sign::Positive), (1, Sign::Negative)]);
        (b, l)
    }

    #[test]
    fn separable_one_dim() {
        let (b, l) = one_dim();
        let opts = TrainOptions { l2: 0.1, ..Default::default() };
        let (m, report) = train_prior(&b, &l, &opts).unwrap();
        assert!(m.weights[0] > 0.0);
        assert!(m.probability(&[1.0]) > 0.5);
        assert!(m.probability(&[0.0]) < 0.5);
        assert!(report.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn empty_or_single_class_is_rejected() {
        let (b, _) = one_dim();
        assert!(train_prior(&b, &BinaryLabels::default(), &TrainOptions::default()).is_err());
        let one = BinaryLabels::new([(0, Sign::Positive)]);
        assert_eq!(
            train_prior(&b, &one, &TrainOptions::default()).unwrap_err(),
            Error::MissingClass("-1".into())
        );
    }

    #[test]
    fn prior_formula_and_silent_users() {
        let b = BehaviorMatrix::from_triplets(2, 1, [(0, 0, 1.0)]).unwrap();
        let m = BinaryLrModel { weights: vec![2.0], bias: -1.0, l2: 1.0 };
        let q = predict_prior(&m, 0, &b).unwrap();
        assert!((q - 1.0 / (1.0 + libm::exp(-1.0))).abs() < 1e-15);
        assert!((q - 0.7311).abs() < 1e-4);
        assert_eq!(predict_prior(&m, 1, &b).unwrap(), 0.5);
        let zero = BinaryLrModel { weights: vec![0.0], bias: 0.0, l2: 1.0 };
        assert_eq!(predict_prior(&zero, 0, &b).unwrap(), 0.5);
        assert_eq!(predict_prior(&m, 2, &b), Err(Error::UnknownUser(2)));
        assert_eq!(prior_vector(&m, &b, 4).unwrap()[1..], [0.5, 0.5, 0.5]);
    }

    fn random_problem(seed: u64) -> (BehaviorMatrix, BinaryLabels) {
        let mut rng = crate::rng::seeded(seed);
        let users = 12;
        let triplets: Vec<_> = (0..users)
            .flat_map(|u| (0..5).map(move |j| (u, j)))
            .filter_map(|(u, j)| {
                let v: f64 = rng.random();
                (v > 0.3).then_some((u, j, v))
            })
            .collect();
        let b = BehaviorMatrix::from_triplets(users, 5, triplets).unwrap();
        let l = BinaryLabels::new((0..users).map(|u| (u, if u % 3 == 0 { Sign::Positive } else { Sign::Negative })));
        (b, l)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (b, l) = random_problem(11);
        let mut rng = crate::rng::seeded(5);
        let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = 0.3;
        let (_, gw, gb) = loss_and_gradient(&b, &l, 0.7, &w, bias).unwrap();
        let h = 1e-5;
        let f = |w: &[f64], bias: f64| loss_and_gradient(&b, &l, 0.7, w, bias).unwrap().0;
        let mut worst: f64 = 0.0;
        for j in 0..5 {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[j] += h;
            wm[j] -= h;
            let fd = (f(&wp, bias) - f(&wm, bias)) / (2.0 * h);
            worst = worst.max((fd - gw[j]).abs() / gw[j].abs().max(1e-8));
        }
        let fd = (f(&w, bias + h) - f(&w, bias - h)) / (2.0 * h);
        worst = worst.max((fd - gb).abs() / gb.abs().max(1e-8));
        assert!(worst < 1e-6, "relative error {worst}");
    }

    #[test]
    fn monotone_in_positive_weight_coordinate() {
        let m = BinaryLrModel { weights: vec![0.5, -1.0], bias: 0.0, l2: 1.0 };
        let mut last = 0.0;
        for k in 1..=10 {
            let v = k as f64 / 10.0;
            let b = BehaviorMatrix::from_triplets(1, 2, [(0, 0, v), (0, 1, 0.5)]).unwrap();
            let q = predict_prior(&m, 0, &b).unwrap();
            assert!(q >= last);
            last = q;
        }
    }
}
