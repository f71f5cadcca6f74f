//! Policy-aware minimum-noise search.
//!
//! Starting from public data `x`, greedily modifies one coordinate per
//! iteration, chosen by a saliency score on the target class's decision value,
//! until the classifier predicts the target. Increases and decreases compete
//! within the same run.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classifier::DifferentiableClassifier;
use crate::error::{Error, Result};

/// Which coordinates of the public data vector may be perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePolicy {
    /// Only coordinates that are nonzero in the original data.
    ModifyExist,
    /// Only coordinates that are zero in the original data, and only upward.
    AddNew,
    /// Any coordinate.
    ModifyAdd,
}

impl NoisePolicy {
    fn allows(self, original: f64) -> bool {
        match self {
            NoisePolicy::ModifyExist => original != 0.0,
            NoisePolicy::AddNew => original == 0.0,
            NoisePolicy::ModifyAdd => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PandaConfig {
    pub tau: f64,
    pub maxiter: usize,
    /// Optional ascending grid, containing 0 and 1, that noisy values snap to.
    pub grid: Option<Vec<f64>>,
}

impl Default for PandaConfig {
    fn default() -> Self {
        PandaConfig { tau: 1.0, maxiter: 200, grid: None }
    }
}

impl PandaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid(alloc::format!("step tau must be positive, got {}", self.tau)));
        }
        if let Some(grid) = &self.grid {
            validate_grid(grid)?;
        }
        Ok(())
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("grid must be strictly ascending"));
    }
    if grid.first() != Some(&0.0) || grid.last() != Some(&1.0) {
        return Err(Error::invalid("grid must start at 0 and end at 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseResult {
    pub noise: Vec<f64>,
    pub target: usize,
    pub iterations: usize,
    pub success: bool,
    /// The requested policy failed and the search was rerun under `ModifyAdd`.
    pub fell_back: bool,
    pub l0: usize,
}

impl NoiseResult {
    fn new(x: &[f64], noisy: &[f64], target: usize, iterations: usize, success: bool) -> Self {
        let noise: Vec<f64> = noisy.iter().zip(x).map(|(a, b)| a - b).collect();
        let l0 = noise.iter().filter(|r| **r != 0.0).count();
        NoiseResult { noise, target, iterations, success, fell_back: false, l0 }
    }

    /// `x + r`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.noise).map(|(a, r)| a + r).collect()
    }
}

fn clip(y: f64) -> f64 {
    y.clamp(0.0, 1.0)
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Both,
    IncreaseOnly,
    DecreaseOnly,
}

/// Highest score over candidate coordinates; lowest index wins ties.
fn best<I: Iterator<Item = (usize, f64)>>(candidates: I) -> Option<(usize, f64)> {
    candidates.fold(None, |acc, (j, s)| match acc {
        Some((_, b)) if s <= b => acc,
        _ => Some((j, s)),
    })
}

fn check_inputs(clf: &DifferentiableClassifier, x: &[f64], target: usize) -> Result<()> {
    if x.len() != clf.features() {
        return Err(Error::Dimension { expected: clf.features(), got: x.len() });
    }
    if target >= clf.classes() {
        return Err(Error::invalid(alloc::format!("target {target} out of range for {} classes", clf.classes())));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("public data entries must lie in [0, 1]"));
    }
    Ok(())
}

fn search(
    clf: &DifferentiableClassifier,
    x: &[f64],
    target: usize,
    policy: NoisePolicy,
    direction: Direction,
    cfg: &PandaConfig,
) -> Result<NoiseResult> {
    let mut noisy = x.to_vec();
    let mut t = 0;
    let mut hit = clf.predict(&noisy)? == target;
    while !hit && t <= cfg.maxiter {
        let grad = clf.input_gradient(&noisy, target)?;
        let allowed = |j: usize| policy.allows(x[j]);
        // coordinates already saturated in a direction cannot move that way
        let inc = if direction == Direction::DecreaseOnly {
            None
        } else {
            best((0..x.len()).filter(|&j| allowed(j) && noisy[j] < 1.0).map(|j| {
                let score = if policy == NoisePolicy::AddNew { grad[j] } else { (1.0 - noisy[j]) * grad[j] };
                (j, score)
            }))
        };
        let dec = if direction == Direction::IncreaseOnly || policy == NoisePolicy::AddNew {
            None
        } else {
            best((0..x.len()).filter(|&j| allowed(j) && noisy[j] > 0.0).map(|j| (j, -noisy[j] * grad[j])))
        };
        let v_inc = inc.map(|(j, _)| (1.0 - noisy[j]) * grad[j]);
        let v_dec = dec.map(|(j, _)| -noisy[j] * grad[j]);
        match (inc, dec) {
            (None, None) => break,
            (Some((e, _)), None) => noisy[e] = clip(noisy[e] + cfg.tau),
            (None, Some((e, _))) => noisy[e] = clip(noisy[e] - cfg.tau),
            (Some((ei, _)), Some((ed, _))) => {
                if policy == NoisePolicy::AddNew || v_inc >= v_dec {
                    noisy[ei] = clip(noisy[ei] + cfg.tau);
                } else {
                    noisy[ed] = clip(noisy[ed] - cfg.tau);
                }
            }
        }
        t += 1;
        hit = clf.predict(&noisy)? == target;
    }
    Ok(NoiseResult::new(x, &noisy, target, t, hit))
}

/// Finds noise steering `clf` to predict `target` under `policy`.
///
/// A restricted policy (`ModifyExist`, `AddNew`) that exhausts `maxiter`, or
/// runs out of movable coordinates, is rerun once under `ModifyAdd` with
/// `fell_back` set. A failing `ModifyAdd` run is returned with
/// `success = false`. If `cfg.grid` is set the result is quantized.
pub fn find_noise(
    clf: &DifferentiableClassifier,
    x: &[f64],
    target: usize,
    policy: NoisePolicy,
    cfg: &PandaConfig,
) -> Result<NoiseResult> {
    check_inputs(clf, x, target)?;
    cfg.validate()?;
    let mut result = search(clf, x, target, policy, Direction::Both, cfg)?;
    if !result.success && policy != NoisePolicy::ModifyAdd {
        result = search(clf, x, target, NoisePolicy::ModifyAdd, Direction::Both, cfg)?;
        result.fell_back = true;
    }
    match &cfg.grid {
        Some(grid) => quantize_noise(clf, x, &result, grid),
        None => Ok(result),
    }
}

/// Baseline that commits each run to a single direction (all modified
/// entries increased, or all decreased) and keeps the better run: a success
/// beats a failure, then smaller l0, then fewer iterations, then increase.
pub fn find_noise_restricted_baseline(
    clf: &DifferentiableClassifier,
    x: &[f64],
    target: usize,
    cfg: &PandaConfig,
) -> Result<NoiseResult> {
    check_inputs(clf, x, target)?;
    cfg.validate()?;
    let up = search(clf, x, target, NoisePolicy::ModifyAdd, Direction::IncreaseOnly, cfg)?;
    let down = search(clf, x, target, NoisePolicy::ModifyAdd, Direction::DecreaseOnly, cfg)?;
    let key = |r: &NoiseResult| (!r.success, r.l0, r.iterations);
    let result = if key(&down) < key(&up) { down } else { up };
    match &cfg.grid {
        Some(grid) => quantize_noise(clf, x, &result, grid),
        None => Ok(result),
    }
}

/// Index of the grid value nearest to `v`; exact midpoints go to the upper value.
fn snap(grid: &[f64], v: f64) -> f64 {
    let upper = grid.partition_point(|g| *g < v);
    if upper == 0 {
        return grid[0];
    }
    if upper == grid.len() {
        return grid[grid.len() - 1];
    }
    let (lo, hi) = (grid[upper - 1], grid[upper]);
    if v - lo < hi - v {
        lo
    } else {
        hi
    }
}

/// Snaps every perturbed entry of `x + r` to the nearest grid value and
/// re-evaluates success. Untouched coordinates keep the user's original value.
pub fn quantize_noise(
    clf: &DifferentiableClassifier,
    x: &[f64],
    result: &NoiseResult,
    grid: &[f64],
) -> Result<NoiseResult> {
    validate_grid(grid)?;
    if result.noise.len() != x.len() {
        return Err(Error::Dimension { expected: x.len(), got: result.noise.len() });
    }
    let noisy: Vec<f64> = x
        .iter()
        .zip(&result.noise)
        .map(|(&v, &r)| if r == 0.0 { v } else { snap(grid, v + r) })
        .collect();
    let success = clf.predict(&noisy)? == result.target;
    let mut out = NoiseResult::new(x, &noisy, result.target, result.iterations, success);
    out.fell_back = result.fell_back;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::LinearOva;
    use alloc::vec;

    fn two_feature() -> DifferentiableClassifier {
        DifferentiableClassifier::LinearOva(LinearOva {
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            bias: vec![0.0, 0.0],
        })
    }

    #[test]
    fn hand_traced_single_step() {
        let clf = two_feature();
        let r = find_noise(&clf, &[0.6, 0.0], 1, NoisePolicy::ModifyAdd, &PandaConfig::default()).unwrap();
        assert_eq!(r.noise, vec![0.0, 1.0]);
        assert_eq!(r.l0, 1);
        assert_eq!(r.iterations, 1);
        assert!(r.success);
        assert!(!r.fell_back);
    }

    #[test]
    fn already_on_target_is_zero_noise() {
        let clf = two_feature();
        let r = find_noise(&clf, &[0.6, 0.0], 0, NoisePolicy::ModifyExist, &PandaConfig::default()).unwrap();
        assert_eq!(r.l0, 0);
        assert_eq!(r.iterations, 0);
        assert!(r.success);
        let b = find_noise_restricted_baseline(&clf, &[0.6, 0.0], 0, &PandaConfig::default()).unwrap();
        assert_eq!(b.l0, 0);
    }

    #[test]
    fn baseline_matches_on_the_two_feature_case() {
        let b = find_noise_restricted_baseline(&two_feature(), &[0.6, 0.0], 1, &PandaConfig::default()).unwrap();
        assert_eq!(b.noise, vec![0.0, 1.0]);
    }

    #[test]
    fn restricted_policy_falls_back() {
        // only coordinate 1 can help, but it is zero, so ModifyExist can only lower coordinate 0
        let clf = DifferentiableClassifier::LinearOva(LinearOva {
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            bias: vec![0.0, -0.5],
        });
        let r = find_noise(&clf, &[0.6, 0.0], 1, NoisePolicy::ModifyExist, &PandaConfig::default()).unwrap();
        assert!(r.fell_back);
        assert!(r.success);
        assert_eq!(r.noise[1], 1.0);
    }

    #[test]
    fn modify_exist_lowers_existing_entries() {
        let clf = two_feature();
        let r = find_noise(&clf, &[0.6, 0.3], 1, NoisePolicy::ModifyExist, &PandaConfig::default()).unwrap();
        assert!(r.success && !r.fell_back);
        assert_eq!(r.apply(&[0.6, 0.3]), vec![0.6, 1.0]);
    }

    #[test]
    fn quantization_snaps_to_nearest() {
        let grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        assert_eq!(snap(&grid, 0.53), 0.6);
        assert_eq!(snap(&grid, 0.5), 0.6);
        assert_eq!(snap(&grid, 0.49), 0.4);
        assert_eq!(snap(&grid, 1.0), 1.0);
    }

    #[test]
    fn quantization_can_break_success() {
        let clf = two_feature();
        let x = [0.6, 0.0];
        let res = NoiseResult::new(&x, &[0.6, 0.61], 1, 1, true);
        let q = quantize_noise(&clf, &x, &res, &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        assert_eq!(q.apply(&x), vec![0.6, 0.6]);
        assert!(!q.success);
        let zero = NoiseResult::new(&x, &x, 0, 0, true);
        let q = quantize_noise(&clf, &x, &zero, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(q.noise, vec![0.0, 0.0]);
        assert!(q.success);
    }

    #[test]
    fn invalid_inputs() {
        let clf = two_feature();
        assert!(find_noise(&clf, &[0.6], 1, NoisePolicy::ModifyAdd, &PandaConfig::default()).is_err());
        assert!(find_noise(&clf, &[0.6, 0.0], 2, NoisePolicy::ModifyAdd, &PandaConfig::default()).is_err());
        assert!(find_noise(&clf, &[1.6, 0.0], 1, NoisePolicy::ModifyAdd, &PandaConfig::default()).is_err());
        let bad = PandaConfig { grid: Some(vec![0.2, 1.0]), ..Default::default() };
        assert!(find_noise(&clf, &[0.6, 0.0], 1, NoisePolicy::ModifyAdd, &bad).is_err());
    }
}
