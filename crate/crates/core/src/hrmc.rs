//! Desk-scale analogue of a hybrid reverse Monte Carlo payload.
//!
//! A chain moves N points in the unit square so that their pair-distance
//! histogram matches a target histogram, while a soft-core pair energy
//! penalises close contacts. The functional forms are analogues chosen for
//! this platform, not the physical method: the target histogram plays the
//! role of experimental structure data.

use serde::{Deserialize, Serialize};

use crate::model::PayloadParams;
use crate::rng::{derive_task_seed, SplitMix64, INITIAL_CONFIG_TAG};

/// Coordinates per point.
pub const DIMENSIONS: usize = 2;

pub type Point = [f64; DIMENSIONS];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HrmcError {
    #[error("histogram mismatch: target has {target} bins of width {target_width}, expected {expected} bins of width {expected_width}")]
    BinMismatch {
        target: usize,
        target_width: f64,
        expected: usize,
        expected_width: f64,
    },
}

/// A set of points in the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    points: Vec<Point>,
}

impl Configuration {
    /// Builds a configuration, clamping every coordinate into `[0, 1]`.
    pub fn new(points: Vec<Point>) -> Self {
        let points = points.into_iter().map(|p| p.map(|c| c.clamp(0.0, 1.0))).collect();
        Self { points }
    }

    /// `n` points drawn uniformly from the unit box.
    pub fn random(n: usize, rng: &mut SplitMix64) -> Self {
        let points = (0..n).map(|_| [rng.next_f64(), rng.next_f64()]).collect();
        Self { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn pairs(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().enumerate().flat_map(move |(i, a)| {
            self.points[i + 1..].iter().map(move |b| distance(a, b))
        })
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Counts of unordered pair distances in half-open bins `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHistogram {
    pub bins: Vec<u64>,
    pub r_max: f64,
}

impl PairHistogram {
    pub fn bin_width(&self) -> f64 {
        self.r_max / self.bins.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }
}

/// Histogram of pair distances; pairs at `r ≥ r_max` are dropped.
pub fn pair_histogram(config: &Configuration, bins: usize, r_max: f64) -> PairHistogram {
    assert!(bins >= 1 && r_max > 0.0, "histogram needs bins ≥ 1 and r_max > 0");
    let width = r_max / bins as f64;
    let mut counts = vec![0u64; bins];
    for r in config.pairs() {
        if r >= r_max {
            continue;
        }
        let idx = ((r / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    PairHistogram { bins: counts, r_max }
}

/// Soft-core energy: sum over pairs of `(r0 / max(r, r_floor))^12`.
pub fn energy(config: &Configuration, r0: f64, r_floor: f64) -> f64 {
    config.pairs().map(|r| (r0 / r.max(r_floor)).powi(12)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub bins: usize,
    pub r_max: f64,
    pub weight: f64,
    pub r0: f64,
    pub r_floor: f64,
}

impl From<&PayloadParams> for CostParams {
    fn from(p: &PayloadParams) -> Self {
        Self {
            bins: p.bins as usize,
            r_max: p.r_max,
            weight: p.weight,
            r0: p.r0,
            r_floor: p.r_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub chi2: f64,
    pub energy: f64,
    pub weight: f64,
    pub total: f64,
}

/// Histogram misfit plus weighted energy.
pub fn cost(config: &Configuration, target: &PairHistogram, params: &CostParams) -> Result<CostBreakdown, HrmcError> {
    if target.bins.len() != params.bins || target.r_max != params.r_max {
        return Err(HrmcError::BinMismatch {
            target: target.bins.len(),
            target_width: target.bin_width(),
            expected: params.bins,
            expected_width: params.r_max / params.bins as f64,
        });
    }
    let hist = pair_histogram(config, params.bins, params.r_max);
    let chi2 = hist
        .bins
        .iter()
        .zip(&target.bins)
        .map(|(&h, &t)| {
            let diff = h as f64 - t as f64;
            diff * diff / (t.max(1) as f64)
        })
        .sum();
    let energy = energy(config, params.r0, params.r_floor);
    Ok(CostBreakdown {
        chi2,
        energy,
        weight: params.weight,
        total: chi2 + params.weight * energy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub config: Configuration,
    pub cost: f64,
    pub accepted: bool,
}

/// One Metropolis move from `config`, whose cost is `current_cost`.
///
/// Draw order: point index, Gaussian pair, then the acceptance uniform
/// (only when the move is uphill). Displaced coordinates are clamped to
/// the unit box.
pub fn metropolis_step<F>(
    config: &Configuration,
    current_cost: f64,
    mut cost_fn: F,
    temperature: f64,
    sigma: f64,
    rng: &mut SplitMix64,
) -> StepResult
where
    F: FnMut(&Configuration) -> f64,
{
    let idx = rng.next_index(config.len());
    let (gx, gy) = rng.next_gaussian_pair();
    let mut proposal = config.clone();
    let p = &mut proposal.points[idx];
    p[0] = (p[0] + sigma * gx).clamp(0.0, 1.0);
    p[1] = (p[1] + sigma * gy).clamp(0.0, 1.0);

    let proposed_cost = cost_fn(&proposal);
    let delta = proposed_cost - current_cost;
    let accepted = delta <= 0.0 || rng.next_f64() < (-delta / temperature).exp();
    if accepted {
        StepResult {
            config: proposal,
            cost: proposed_cost,
            accepted,
        }
    } else {
        StepResult {
            config: config.clone(),
            cost: current_cost,
            accepted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub best: Configuration,
    pub best_cost: CostBreakdown,
    /// `(step, best cost so far)` at step 0 and at every improvement;
    /// non-increasing in cost.
    pub trace: Vec<(u32, f64)>,
    pub accepted: u32,
}

/// Runs `steps` Metropolis moves at a fixed temperature from a stream
/// seeded with `seed` and keeps the best configuration ever visited.
pub fn run_chain(
    initial: &Configuration,
    temperature: f64,
    sigma: f64,
    steps: u32,
    seed: u64,
    target: &PairHistogram,
    params: &CostParams,
) -> Result<ChainResult, HrmcError> {
    let mut rng = SplitMix64::new(seed);
    let mut best_cost = cost(initial, target, params)?;
    let mut best = initial.clone();
    let mut current = initial.clone();
    let mut current_cost = best_cost.total;
    let mut trace = vec![(0, best_cost.total)];
    let mut accepted = 0;

    for step in 1..=steps {
        let result = metropolis_step(
            &current,
            current_cost,
            |c| cost(c, target, params).map(|b| b.total).unwrap_or(f64::INFINITY),
            temperature,
            sigma,
            &mut rng,
        );
        if result.accepted {
            accepted += 1;
            if result.cost < best_cost.total {
                best_cost = cost(&result.config, target, params)?;
                best = result.config.clone();
                trace.push((step, best_cost.total));
            }
        }
        current = result.config;
        current_cost = result.cost;
    }
    Ok(ChainResult {
        best,
        best_cost,
        trace,
        accepted,
    })
}

/// A hidden-target fitting problem: the target histogram comes from a
/// reference configuration that is never shown to the chains, so a
/// zero-misfit solution is known to exist.
#[derive(Debug, Clone, PartialEq)]
pub struct HrmcInstance {
    pub reference: Configuration,
    pub target: PairHistogram,
    pub params: CostParams,
}

impl HrmcInstance {
    pub fn generate(payload: &PayloadParams) -> Self {
        let mut rng = SplitMix64::new(payload.instance_seed);
        let reference = Configuration::random(payload.n_points as usize, &mut rng);
        let params = CostParams::from(payload);
        let target = pair_histogram(&reference, params.bins, params.r_max);
        Self {
            reference,
            target,
            params,
        }
    }

    /// Starting configuration of a run, independent of the reference.
    pub fn initial_configuration(&self, master_seed: u64) -> Configuration {
        let mut rng = SplitMix64::new(derive_task_seed(master_seed, INITIAL_CONFIG_TAG, 0));
        Configuration::random(self.reference.len(), &mut rng)
    }
}

/// Per-task output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadOutput {
    pub task_index: u32,
    pub seed: u64,
    pub temperature: f64,
    pub best_cost: f64,
    pub chi2: f64,
    pub energy: f64,
    pub best_points: Vec<Point>,
    pub trace: Vec<(u32, f64)>,
}

impl PayloadOutput {
    pub fn configuration(&self) -> Configuration {
        Configuration::new(self.best_points.clone())
    }
}
