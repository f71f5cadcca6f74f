//! Game-theoretic obfuscation LP on micro domains.
//!
//! The defender picks a probabilistic mapping `f(x'|x)` over a tiny public-data
//! domain so as to minimize the privacy loss of an attacker who knows both
//! `Pr(s, x)` and `f`, under an expected utility-loss budget. The size of `f`
//! is quadratic in the domain size, which itself is exponential in the data
//! dimension, so this only runs on toy domains. It serves as a reference.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ATTRIBUTE_VALUES: usize = 4;
pub const MAX_PUBLIC_VALUES: usize = 8;

/// `Pr(s, x)` as a dense `attribute values x public values` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    probs: Vec<Vec<f64>>,
}

impl JointDistribution {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let s = probs.len();
        let x = probs.first().map_or(0, Vec::len);
        if s == 0 || x == 0 {
            return Err(Error::invalid("joint distribution is empty"));
        }
        if s > MAX_ATTRIBUTE_VALUES || x > MAX_PUBLIC_VALUES {
            return Err(Error::invalid(format!(
                "joint distribution is {s}x{x}; the LP is capped at {MAX_ATTRIBUTE_VALUES}x{MAX_PUBLIC_VALUES}"
            )));
        }
        if probs.iter().any(|row| row.len() != x) {
            return Err(Error::invalid("joint distribution rows differ in length"));
        }
        if probs.iter().flatten().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("joint probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("joint probabilities sum to {total}")));
        }
        Ok(JointDistribution { probs })
    }

    pub fn attribute_values(&self) -> usize {
        self.probs.len()
    }

    pub fn public_values(&self) -> usize {
        self.probs[0].len()
    }

    pub fn get(&self, s: usize, x: usize) -> f64 {
        self.probs[s][x]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        (0..self.public_values()).map(|x| self.probs.iter().map(|row| row[x]).sum()).collect()
    }

    pub fn marginal_s(&self) -> Vec<f64> {
        self.probs.iter().map(|row| row.iter().sum()).collect()
    }
}

/// `d(a, b) = 1` if `a == b`, else 0: privacy is lost when the guess is right.
pub fn zero_one_privacy(values: usize) -> Vec<Vec<f64>> {
    (0..values).map(|a| (0..values).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect()
}

/// `d(x, x') = 1` if `x != x'`, else 0.
pub fn zero_one_utility(values: usize) -> Vec<Vec<f64>> {
    (0..values).map(|a| (0..values).map(|b| if a == b { 0.0 } else { 1.0 }).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    LessEq,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintRole {
    UtilityBudget,
    /// `y_{x'} >= sum_s sum_x Pr(s, x) f(x'|x) d_p(s, s^)`
    Dominance { noisy: usize, guess: usize },
    /// `sum_{x'} f(x'|x) = 1`
    RowStochastic { public: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub kind: ConstraintKind,
    pub rhs: f64,
    pub role: ConstraintRole,
}

/// `min c.z` subject to the constraints and `z >= 0`.
///
/// Variables: `f(x'|x)` at index `x * |X| + x'`, then `y_{x'}` at `|X|^2 + x'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub public_values: usize,
    pub attribute_values: usize,
    pub budget: f64,
    pub privacy_metric: Vec<Vec<f64>>,
    pub utility_metric: Vec<Vec<f64>>,
}

impl LinearProgram {
    pub fn variable_count(&self) -> usize {
        self.objective.len()
    }

    pub fn mapping_index(&self, x: usize, noisy: usize) -> usize {
        x * self.public_values + noisy
    }

    pub fn y_index(&self, noisy: usize) -> usize {
        self.public_values * self.public_values + noisy
    }
}

fn check_metric(name: &str, m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::invalid(format!("{name} must be {n}x{n}")));
    }
    if m.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("{name} entries must be finite and nonnegative")));
    }
    Ok(())
}

pub fn build_lp(
    joint: &JointDistribution,
    privacy_metric: &[Vec<f64>],
    utility_metric: &[Vec<f64>],
    budget: f64,
) -> Result<LinearProgram> {
    let nx = joint.public_values();
    let ns = joint.attribute_values();
    check_metric("privacy metric", privacy_metric, ns)?;
    check_metric("utility metric", utility_metric, nx)?;
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::invalid(format!("budget must be finite and nonnegative, got {budget}")));
    }
    let vars = nx * nx + nx;
    let f = |x: usize, xp: usize| x * nx + xp;
    let mut objective = vec![0.0; vars];
    for xp in 0..nx {
        objective[nx * nx + xp] = 1.0;
    }
    let px = joint.marginal_x();
    let mut constraints = Vec::with_capacity(1 + nx * ns + nx);

    let mut coeffs = vec![0.0; vars];
    for x in 0..nx {
        for xp in 0..nx {
            coeffs[f(x, xp)] = px[x] * utility_metric[x][xp];
        }
    }
    constraints.push(Constraint { coeffs, kind: ConstraintKind::LessEq, rhs: budget, role: ConstraintRole::UtilityBudget });

    for xp in 0..nx {
        for guess in 0..ns {
            let mut coeffs = vec![0.0; vars];
            for x in 0..nx {
                coeffs[f(x, xp)] = (0..ns).map(|s| joint.get(s, x) * privacy_metric[s][guess]).sum();
            }
            coeffs[nx * nx + xp] = -1.0;
            constraints.push(Constraint {
                coeffs,
                kind: ConstraintKind::LessEq,
                rhs: 0.0,
                role: ConstraintRole::Dominance { noisy: xp, guess },
            });
        }
    }

    for x in 0..nx {
        let mut coeffs = vec![0.0; vars];
        for xp in 0..nx {
            coeffs[f(x, xp)] = 1.0;
        }
        constraints.push(Constraint { coeffs, kind: ConstraintKind::Equal, rhs: 1.0, role: ConstraintRole::RowStochastic { public: x } });
    }

    Ok(LinearProgram {
        objective,
        constraints,
        public_values: nx,
        attribute_values: ns,
        budget,
        privacy_metric: privacy_metric.to_vec(),
        utility_metric: utility_metric.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpCertificate {
    /// Largest constraint or sign violation of the primal point.
    pub primal_infeasibility: f64,
    /// Largest negative reduced cost or wrong-signed dual.
    pub dual_infeasibility: f64,
    /// Largest `|z_j d_j|` or `|y_i slack_i|`.
    pub complementary_slackness: f64,
    pub duality_gap: f64,
}

impl LpCertificate {
    pub fn max(&self) -> f64 {
        self.primal_infeasibility
            .max(self.dual_infeasibility)
            .max(self.complementary_slackness)
            .max(self.duality_gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpDefense {
    /// `mapping[x][x'] = f(x'|x)`
    pub mapping: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub expected_utility_loss: f64,
    pub budget: f64,
    pub privacy_metric: Vec<Vec<f64>>,
    pub utility_metric: Vec<Vec<f64>>,
    pub duals: Vec<f64>,
    pub certificate: LpCertificate,
}

/// Tolerance on the certificate of a returned solution.
pub const LP_TOLERANCE: f64 = 1e-9;

pub fn solve_lp(lp: &LinearProgram) -> Result<LpDefense> {
    let sol = simplex::solve(&lp.objective, &lp.constraints)?;
    let certificate = certify(lp, &sol.primal, &sol.duals);
    if certificate.max() > LP_TOLERANCE {
        let objective: f64 = lp.objective.iter().zip(&sol.primal).map(|(c, z)| c * z).sum();
        return Err(Error::Lp(format!(
            "certificate {certificate:?} exceeds {LP_TOLERANCE:e}; best point has objective {objective}"
        )));
    }
    let nx = lp.public_values;
    let mapping: Vec<Vec<f64>> = (0..nx).map(|x| sol.primal[x * nx..(x + 1) * nx].to_vec()).collect();
    let y = sol.primal[nx * nx..].to_vec();
    let budget_row = &lp.constraints[0];
    let expected_utility_loss = budget_row.coeffs.iter().zip(&sol.primal).map(|(a, z)| a * z).sum();
    Ok(LpDefense {
        objective: y.iter().sum(),
        mapping,
        y,
        expected_utility_loss,
        budget: lp.budget,
        privacy_metric: lp.privacy_metric.clone(),
        utility_metric: lp.utility_metric.clone(),
        duals: sol.duals,
        certificate,
    })
}

fn certify(lp: &LinearProgram, z: &[f64], duals: &[f64]) -> LpCertificate {
    let mut primal: f64 = z.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let mut dual_inf: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut reduced = lp.objective.clone();
    let mut dual_obj = 0.0;
    for (row, &y) in lp.constraints.iter().zip(duals) {
        let lhs: f64 = row.coeffs.iter().zip(z).map(|(a, v)| a * v).sum();
        let slack = row.rhs - lhs;
        match row.kind {
            ConstraintKind::LessEq => {
                primal = primal.max((-slack).max(0.0));
                dual_inf = dual_inf.max(y.max(0.0));
                comp = comp.max((y * slack).abs());
            }
            ConstraintKind::Equal => primal = primal.max(slack.abs()),
        }
        for (d, a) in reduced.iter_mut().zip(&row.coeffs) {
            *d -= y * a;
        }
        dual_obj += y * row.rhs;
    }
    for (d, v) in reduced.iter().zip(z) {
        dual_inf = dual_inf.max((-d).max(0.0));
        comp = comp.max((d * v).abs());
    }
    let primal_obj: f64 = lp.objective.iter().zip(z).map(|(c, v)| c * v).sum();
    LpCertificate {
        primal_infeasibility: primal,
        dual_infeasibility: dual_inf,
        complementary_slackness: comp,
        duality_gap: (primal_obj - dual_obj).abs(),
    }
}

/// Optimal attacker's expected privacy gain under mapping `f`.
pub fn privacy_loss(joint: &JointDistribution, privacy_metric: &[Vec<f64>], mapping: &[Vec<f64>]) -> f64 {
    let nx = joint.public_values();
    let ns = joint.attribute_values();
    (0..nx)
        .map(|xp| {
            (0..ns)
                .map(|guess| {
                    (0..ns)
                        .flat_map(|s| (0..nx).map(move |x| (s, x)))
                        .map(|(s, x)| joint.get(s, x) * mapping[x][xp] * privacy_metric[s][guess])
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

pub fn expected_utility_loss(joint: &JointDistribution, utility_metric: &[Vec<f64>], mapping: &[Vec<f64>]) -> f64 {
    let px = joint.marginal_x();
    let nx = px.len();
    (0..nx).flat_map(|x| (0..nx).map(move |xp| (x, xp))).map(|(x, xp)| px[x] * mapping[x][xp] * utility_metric[x][xp]).sum()
}

/// Exhaustive search over deterministic mappings `x -> g(x)` that respect the
/// budget. Returns the best assignment and its privacy loss. Capped at 6
/// public values.
pub fn best_deterministic_mapping(
    joint: &JointDistribution,
    privacy_metric: &[Vec<f64>],
    utility_metric: &[Vec<f64>],
    budget: f64,
) -> Result<Option<(Vec<usize>, f64)>> {
    let nx = joint.public_values();
    if nx > 6 {
        return Err(Error::invalid("deterministic enumeration is capped at 6 public values"));
    }
    let total = nx.pow(nx as u32);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for code in 0..total {
        let mut assign = vec![0usize; nx];
        let mut c = code;
        for a in assign.iter_mut() {
            *a = c % nx;
            c /= nx;
        }
        let mapping: Vec<Vec<f64>> =
            assign.iter().map(|&t| (0..nx).map(|xp| if xp == t { 1.0 } else { 0.0 }).collect()).collect();
        if expected_utility_loss(joint, utility_metric, &mapping) > budget + 1e-12 {
            continue;
        }
        let loss = privacy_loss(joint, privacy_metric, &mapping);
        if best.as_ref().is_none_or(|(_, b)| loss < *b) {
            best = Some((assign, loss));
        }
    }
    Ok(best)
}

mod simplex {
    //! Dense two-phase tableau simplex with Bland's rule.

    use alloc::format;
    use alloc::vec;
    use alloc::vec::Vec;

    use super::{Constraint, ConstraintKind};
    use crate::error::{Error, Result};

    const EPS: f64 = 1e-12;

    pub(super) struct Solution {
        pub primal: Vec<f64>,
        /// One multiplier per constraint, for the constraint as written.
        pub duals: Vec<f64>,
    }

    struct Tableau {
        rows: Vec<Vec<f64>>,
        basis: Vec<usize>,
        width: usize,
    }

    impl Tableau {
        fn pivot(&mut self, r: usize, c: usize) {
            let p = self.rows[r][c];
            for v in self.rows[r].iter_mut() {
                *v /= p;
            }
            let pivot_row = self.rows[r].clone();
            for (i, row) in self.rows.iter_mut().enumerate() {
                if i == r {
                    continue;
                }
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                    row[c] = 0.0;
                }
            }
            self.basis[r] = c;
        }

        fn rhs(&self, r: usize) -> f64 {
            self.rows[r][self.width]
        }

        /// Minimizes `cost . z` over the current tableau; columns with
        /// `allowed[j] == false` never enter.
        fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
            for _ in 0..50_000 {
                let duals_free = |j: usize| -> f64 {
                    cost[j] - self.basis.iter().enumerate().map(|(i, &b)| cost[b] * self.rows[i][j]).sum::<f64>()
                };
                let entering = (0..self.width).find(|&j| allowed[j] && !self.basis.contains(&j) && duals_free(j) < -EPS);
                let Some(c) = entering else { return Ok(()) };
                let mut leave: Option<(usize, f64)> = None;
                for r in 0..self.rows.len() {
                    let a = self.rows[r][c];
                    if a > EPS {
                        let ratio = self.rhs(r) / a;
                        leave = match leave {
                            Some((lr, best)) if ratio > best + EPS => Some((lr, best)),
                            Some((lr, best)) if ratio >= best - EPS && self.basis[lr] < self.basis[r] => Some((lr, best)),
                            _ => Some((r, ratio)),
                        };
                    }
                }
                let Some((r, _)) = leave else {
                    return Err(Error::Lp("objective is unbounded".into()));
                };
                self.pivot(r, c);
            }
            Err(Error::Lp("pivot limit reached".into()))
        }
    }

    pub(super) fn solve(objective: &[f64], constraints: &[Constraint]) -> Result<Solution> {
        let n = objective.len();
        let m = constraints.len();
        // every row gets one extra column: slack for <=, artificial for = (and for
        // <= rows with negative rhs, which become >= with a surplus + artificial)
        let mut flipped = vec![false; m];
        let mut extra_cols = 0;
        let mut layout = Vec::with_capacity(m);
        for (i, row) in constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::Lp(format!("constraint {i} has {} coefficients, expected {n}", row.coeffs.len())));
            }
            flipped[i] = row.rhs < 0.0;
            let (slack, art) = match (row.kind, flipped[i]) {
                (ConstraintKind::LessEq, false) => (true, false),
                (ConstraintKind::LessEq, true) => (true, true),
                (ConstraintKind::Equal, _) => (false, true),
            };
            let slack_col = slack.then(|| {
                extra_cols += 1;
                n + extra_cols - 1
            });
            layout.push((slack_col, art));
        }
        let art_start = n + extra_cols;
        let art_count = layout.iter().filter(|(_, a)| *a).count();
        let width = art_start + art_count;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        // column holding B^-1 e_i, and its sign relative to the original row
        let mut identity_col = Vec::with_capacity(m);
        let mut next_art = art_start;
        for (i, row) in constraints.iter().enumerate() {
            let sign = if flipped[i] { -1.0 } else { 1.0 };
            let mut t = vec![0.0; width + 1];
            for (j, a) in row.coeffs.iter().enumerate() {
                t[j] = sign * a;
            }
            t[width] = sign * row.rhs;
            let (slack_col, art) = layout[i];
            if let Some(s) = slack_col {
                t[s] = sign;
            }
            if art {
                t[next_art] = 1.0;
                basis.push(next_art);
                identity_col.push((next_art, sign));
                next_art += 1;
            } else {
                let s = slack_col.expect("slack row");
                basis.push(s);
                identity_col.push((s, sign));
            }
            rows.push(t);
        }
        let mut tab = Tableau { rows, basis, width };

        if art_count > 0 {
            let mut phase1 = vec![0.0; width];
            for c in phase1.iter_mut().skip(art_start) {
                *c = 1.0;
            }
            tab.optimize(&phase1, &vec![true; width])?;
            let infeasibility: f64 =
                tab.basis.iter().enumerate().filter(|(_, &b)| b >= art_start).map(|(r, _)| tab.rhs(r)).sum();
            if infeasibility > 1e-9 {
                return Err(Error::Lp(format!("infeasible (phase one residual {infeasibility:e})")));
            }
            // drive zero-level artificials out where possible
            for r in 0..m {
                if tab.basis[r] >= art_start {
                    if let Some(c) = (0..art_start).find(|&c| !tab.basis.contains(&c) && tab.rows[r][c].abs() > 1e-9) {
                        tab.pivot(r, c);
                    }
                }
            }
        }

        let mut cost = vec![0.0; width];
        cost[..n].copy_from_slice(objective);
        let allowed: Vec<bool> = (0..width).map(|j| j < art_start).collect();
        tab.optimize(&cost, &allowed)?;

        let mut primal = vec![0.0; n];
        for (r, &b) in tab.basis.iter().enumerate() {
            if b < n {
                primal[b] = tab.rhs(r);
            }
        }
        let duals = identity_col
            .iter()
            .map(|&(col, sign)| {
                sign * tab.basis.iter().enumerate().map(|(r, &b)| cost[b] * tab.rows[r][col]).sum::<f64>()
            })
            .collect();
        Ok(Solution { primal, duals })
    }
}
