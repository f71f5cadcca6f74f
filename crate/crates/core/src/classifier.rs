//! Differentiable multi-class classifiers.
//!
//! Both kinds expose per-class decision values `C_i(x)`, the argmax prediction
//! and the analytic input gradient `dC_i/dx`, which is all the noise search
//! needs. Classes are 0-based.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BehaviorMatrix, MulticlassLabels};
use crate::math;
use crate::prior::{self, TrainOptions};
use crate::rows::Dense;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    /// One-vs-all logistic regression; decision values are raw affine scores.
    LinearOva,
    /// One ReLU hidden layer, linear class outputs, softmax only in the loss.
    OneHiddenRelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOva {
    /// `classes x features`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// `hidden x features`
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    /// `classes x hidden`
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

impl Mlp {
    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        self.w1.iter().zip(&self.b1).map(|(w, b)| math::dot(w, x) + b).collect()
    }

    fn outputs(&self, hidden: &[f64]) -> Vec<f64> {
        self.w2.iter().zip(&self.b2).map(|(w, b)| math::dot(w, hidden) + b).collect()
    }
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DifferentiableClassifier {
    LinearOva(LinearOva),
    Mlp(Mlp),
}

impl DifferentiableClassifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            DifferentiableClassifier::LinearOva(_) => ClassifierKind::LinearOva,
            DifferentiableClassifier::Mlp(_) => ClassifierKind::OneHiddenRelu,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DifferentiableClassifier::LinearOva(m) => m.weights.len(),
            DifferentiableClassifier::Mlp(m) => m.w2.len(),
        }
    }

    pub fn features(&self) -> usize {
        match self {
            DifferentiableClassifier::LinearOva(m) => m.weights.first().map_or(0, Vec::len),
            DifferentiableClassifier::Mlp(m) => m.w1.first().map_or(0, Vec::len),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.features() {
            return Err(Error::Dimension { expected: self.features(), got: x.len() });
        }
        Ok(())
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match self {
            DifferentiableClassifier::LinearOva(m) => {
                m.weights.iter().zip(&m.bias).map(|(w, b)| math::dot(w, x) + b).collect()
            }
            DifferentiableClassifier::Mlp(m) => {
                let hidden: Vec<f64> = m.hidden_pre(x).into_iter().map(relu).collect();
                m.outputs(&hidden)
            }
        })
    }

    /// Argmax of the decision values, lowest class index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.decision_values(x)?))
    }

    /// `dC_class / dx`. The ReLU derivative is taken as 0 at exactly 0.
    pub fn input_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if class >= self.classes() {
            return Err(Error::invalid(format!("class {class} out of range for {} classes", self.classes())));
        }
        Ok(match self {
            DifferentiableClassifier::LinearOva(m) => m.weights[class].clone(),
            DifferentiableClassifier::Mlp(m) => {
                let mut grad = vec![0.0; x.len()];
                for ((pre, w1), w2) in m.hidden_pre(x).iter().zip(&m.w1).zip(&m.w2[class]) {
                    if *pre > 0.0 {
                        for (g, w) in grad.iter_mut().zip(w1) {
                            *g += w2 * w;
                        }
                    }
                }
                grad
            }
        })
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams { epochs: 200, learning_rate: 0.5, batch_size: 32, l2: 1e-3, hidden: 16, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Linear: one objective trace per one-vs-all problem (a single trace
    /// for two classes). Network: full-data loss after every epoch.
    pub loss_traces: Vec<Vec<f64>>,
}

/// Trains on the labeled users of a behavior matrix.
pub fn train(
    kind: ClassifierKind,
    behaviors: &BehaviorMatrix,
    labels: &MulticlassLabels,
    params: &ClassifierParams,
) -> Result<(DifferentiableClassifier, TrainLog)> {
    labels.check_users(behaviors.user_count())?;
    let (xs, ys): (Vec<Vec<f64>>, Vec<usize>) = labels.iter().map(|(u, c)| (behaviors.dense_row(u), c)).unzip();
    train_dense(kind, &xs, &ys, labels.classes(), behaviors.object_count(), params)
}

pub fn train_dense(
    kind: ClassifierKind,
    xs: &[Vec<f64>],
    ys: &[usize],
    classes: usize,
    features: usize,
    params: &ClassifierParams,
) -> Result<(DifferentiableClassifier, TrainLog)> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { expected: xs.len(), got: ys.len() });
    }
    if let Some(x) = xs.iter().find(|x| x.len() != features) {
        return Err(Error::Dimension { expected: features, got: x.len() });
    }
    if classes < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    let mut counts = vec![0usize; classes];
    for &y in ys {
        if y >= classes {
            return Err(Error::invalid(format!("label {y} out of range for {classes} classes")));
        }
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(format!("{}", c + 1)));
    }
    match kind {
        ClassifierKind::LinearOva => train_linear(xs, ys, classes, features, params),
        ClassifierKind::OneHiddenRelu => train_mlp(xs, ys, classes, features, params),
    }
}

fn train_linear(
    xs: &[Vec<f64>],
    ys: &[usize],
    classes: usize,
    features: usize,
    params: &ClassifierParams,
) -> Result<(DifferentiableClassifier, TrainLog)> {
    let rows = Dense { rows: xs, cols: features };
    let idx: Vec<usize> = (0..xs.len()).collect();
    let opts = TrainOptions { l2: params.l2, max_epochs: params.epochs, tol: 1e-8 };
    let fit_class = |c: usize| {
        let y: Vec<f64> = ys.iter().map(|&y| if y == c { 1.0 } else { -1.0 }).collect();
        prior::fit(&rows, &idx, &y, &opts)
    };
    let mut weights = Vec::with_capacity(classes);
    let mut bias = Vec::with_capacity(classes);
    let mut traces = Vec::new();
    if classes == 2 {
        // one binary score pair: C_2 = -C_1
        let (w, b, report) = fit_class(0)?;
        weights.push(w.clone());
        bias.push(b);
        weights.push(w.iter().map(|v| -v).collect());
        bias.push(-b);
        traces.push(report.loss_history);
    } else {
        for c in 0..classes {
            let (w, b, report) = fit_class(c)?;
            weights.push(w);
            bias.push(b);
            traces.push(report.loss_history);
        }
    }
    Ok((
        DifferentiableClassifier::LinearOva(LinearOva { weights, bias }),
        TrainLog { loss_traces: traces },
    ))
}

struct MlpGrad {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

/// Mean softmax cross-entropy plus `l2/2 * |W|^2`, and optionally its gradient.
fn mlp_loss(m: &Mlp, xs: &[Vec<f64>], ys: &[usize], batch: &[usize], l2: f64, want_grad: bool) -> (f64, Option<MlpGrad>) {
    let h = m.b1.len();
    let k = m.b2.len();
    let mut grad = want_grad.then(|| MlpGrad {
        w1: vec![vec![0.0; m.w1[0].len()]; h],
        b1: vec![0.0; h],
        w2: vec![vec![0.0; h]; k],
        b2: vec![0.0; k],
    });
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &i in batch {
        let x = &xs[i];
        let pre = m.hidden_pre(x);
        let hidden: Vec<f64> = pre.iter().map(|&z| relu(z)).collect();
        let z = m.outputs(&hidden);
        let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| math::exp(v - top)).collect();
        let sum: f64 = exps.iter().sum();
        loss += scale * (math::ln(sum) + top - z[ys[i]]);
        if let Some(g) = grad.as_mut() {
            let dz: Vec<f64> = exps
                .iter()
                .enumerate()
                .map(|(c, e)| scale * (e / sum - if c == ys[i] { 1.0 } else { 0.0 }))
                .collect();
            let mut dh = vec![0.0; h];
            for c in 0..k {
                g.b2[c] += dz[c];
                for j in 0..h {
                    g.w2[c][j] += dz[c] * hidden[j];
                    dh[j] += dz[c] * m.w2[c][j];
                }
            }
            for j in 0..h {
                if pre[j] > 0.0 {
                    g.b1[j] += dh[j];
                    for (gw, xv) in g.w1[j].iter_mut().zip(x) {
                        *gw += dh[j] * xv;
                    }
                }
            }
        }
    }
    let sq = |w: &Vec<Vec<f64>>| w.iter().flatten().map(|v| v * v).sum::<f64>();
    loss += 0.5 * l2 * (sq(&m.w1) + sq(&m.w2));
    if let Some(g) = grad.as_mut() {
        for (gr, wr) in g.w1.iter_mut().zip(&m.w1).chain(g.w2.iter_mut().zip(&m.w2)) {
            for (gv, wv) in gr.iter_mut().zip(wr) {
                *gv += l2 * wv;
            }
        }
    }
    (loss, grad)
}

fn mlp_step(m: &Mlp, g: &MlpGrad, step: f64) -> Mlp {
    let upd = |w: &Vec<Vec<f64>>, gw: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        w.iter().zip(gw).map(|(r, gr)| r.iter().zip(gr).map(|(a, b)| a - step * b).collect()).collect()
    };
    let updv = |b: &Vec<f64>, gb: &Vec<f64>| -> Vec<f64> { b.iter().zip(gb).map(|(a, g)| a - step * g).collect() };
    Mlp { w1: upd(&m.w1, &g.w1), b1: updv(&m.b1, &g.b1), w2: upd(&m.w2, &g.w2), b2: updv(&m.b2, &g.b2) }
}

/// Mini-batch gradient descent. Each batch starts from `learning_rate` and
/// halves the step until the batch loss does not increase, so every accepted
/// step is a descent step on its batch.
fn train_mlp(
    xs: &[Vec<f64>],
    ys: &[usize],
    classes: usize,
    features: usize,
    params: &ClassifierParams,
) -> Result<(DifferentiableClassifier, TrainLog)> {
    if params.hidden == 0 {
        return Err(Error::invalid("hidden width must be at least 1"));
    }
    if params.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut rng = crate::rng::seeded(params.seed);
    let a1 = math::sqrt(6.0 / features.max(1) as f64);
    let a2 = math::sqrt(6.0 / (params.hidden + classes) as f64);
    let mut init = |rows: usize, cols: usize, a: f64| -> Vec<Vec<f64>> {
        (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-a..a)).collect()).collect()
    };
    let w1 = init(params.hidden, features, a1);
    let w2 = init(classes, params.hidden, a2);
    let mut model = Mlp { w1, b1: vec![0.01; params.hidden], w2, b2: vec![0.0; classes] };

    let all: Vec<usize> = (0..xs.len()).collect();
    let mut order = all.clone();
    let mut trace = vec![mlp_loss(&model, xs, ys, &all, params.l2, false).0];
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let (loss, grad) = mlp_loss(&model, xs, ys, batch, params.l2, true);
            let grad = grad.expect("gradient requested");
            let mut step = params.learning_rate;
            for _ in 0..30 {
                let candidate = mlp_step(&model, &grad, step);
                let (l_try, _) = mlp_loss(&candidate, xs, ys, batch, params.l2, false);
                if !l_try.is_finite() && step < 1e-12 {
                    return Err(Error::NonFiniteLoss(format!("network loss {l_try}")));
                }
                if l_try <= loss {
                    model = candidate;
                    break;
                }
                step *= 0.5;
            }
        }
        let full = mlp_loss(&model, xs, ys, &all, params.l2, false).0;
        if !full.is_finite() {
            return Err(Error::NonFiniteLoss(format!("network loss {full}")));
        }
        trace.push(full);
    }
    Ok((DifferentiableClassifier::Mlp(model), TrainLog { loss_traces: vec![trace] }))
}

/// Fraction of rows whose prediction equals the label.
pub fn accuracy(clf: &DifferentiableClassifier, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let mut hits = 0;
    for (x, &y) in xs.iter().zip(ys) {
        if clf.predict(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / xs.len() as f64)
}
