//! Iterative map/reduce connector.
//!
//! Each iteration maps a burst of annealing chains, all restarted from the
//! current incumbent at spread temperatures, then reduces the burst to its
//! best configuration. The incumbent is elitist: a burst that only found
//! worse configurations leaves it unchanged.

use serde::{Deserialize, Serialize};

use crate::hrmc::{run_chain, Configuration, HrmcError, HrmcInstance, PayloadOutput};
use crate::model::{PayloadParams, RunSpec};
use crate::rng::derive_task_seed;
use crate::scheduler::Connector;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapReduceError {
    #[error("reduce called with no burst outcomes")]
    EmptyBurst,
    #[error("next batch requested after convergence at iteration {0}")]
    AlreadyConverged(u32),
    #[error(transparent)]
    Payload(#[from] HrmcError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub t_initial: f64,
    pub t_final: f64,
    pub spread_factor: f64,
    pub max_iterations: u32,
}

impl AnnealingSchedule {
    pub fn from_params(p: &PayloadParams) -> Self {
        Self {
            t_initial: p.t_initial,
            t_final: p.t_final,
            spread_factor: p.spread_factor,
            max_iterations: p.max_iterations,
        }
    }

    /// Geometric cooling: `t_initial` at iteration 0, `t_final` at
    /// `max_iterations`.
    pub fn temperature(&self, iteration: u32) -> f64 {
        let frac = f64::from(iteration) / f64::from(self.max_iterations.max(1));
        self.t_initial * (self.t_final / self.t_initial).powf(frac)
    }

    /// Temperature of task `k` of `n`, spread symmetrically in log space
    /// around the iteration temperature.
    pub fn task_temperature(&self, iteration: u32, k: u32, n: u32) -> f64 {
        let centre = (f64::from(n) - 1.0) / 2.0;
        let span = f64::from(n.saturating_sub(1).max(1));
        self.temperature(iteration) * self.spread_factor.powf((f64::from(k) - centre) / span)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriterion {
    pub cost_threshold: f64,
    pub max_iterations: u32,
}

impl ConvergenceCriterion {
    pub fn from_params(p: &PayloadParams) -> Self {
        Self {
            cost_threshold: p.cost_threshold,
            max_iterations: p.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstTask {
    pub task_index: u32,
    pub seed: u64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstInput {
    pub iteration: u32,
    pub start: Configuration,
    pub tasks: Vec<BurstTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedResult {
    pub iteration: u32,
    pub best_task_index: u32,
    /// Iteration whose burst produced the incumbent.
    pub best_iteration: u32,
    pub best_cost: f64,
    pub chi2: f64,
    pub energy: f64,
    pub best_configuration: Configuration,
    pub cost_trace: Vec<(u32, f64)>,
}

/// Burst for `iteration`, every task starting from `incumbent`.
pub fn map_phase(iteration: u32, incumbent: &Configuration, spec: &RunSpec, schedule: &AnnealingSchedule) -> BurstInput {
    let n = spec.compute.tasks_per_burst;
    let tasks = (0..n)
        .map(|k| BurstTask {
            task_index: k,
            seed: derive_task_seed(spec.master_seed, iteration, k),
            temperature: schedule.task_temperature(iteration, k, n),
        })
        .collect();
    BurstInput {
        iteration,
        start: incumbent.clone(),
        tasks,
    }
}

/// Argmin over the burst (lowest task index on ties), with the previous
/// incumbent kept when it is strictly better.
pub fn reduce_phase(
    iteration: u32,
    outcomes: &[PayloadOutput],
    previous: Option<&ReducedResult>,
) -> Result<ReducedResult, MapReduceError> {
    let mut best: Option<&PayloadOutput> = None;
    for o in outcomes {
        let better = match best {
            None => true,
            Some(b) => o.best_cost < b.best_cost || (o.best_cost == b.best_cost && o.task_index < b.task_index),
        };
        if better {
            best = Some(o);
        }
    }
    let best = best.ok_or(MapReduceError::EmptyBurst)?;
    let mut cost_trace = previous.map(|p| p.cost_trace.clone()).unwrap_or_default();

    let mut result = match previous {
        Some(prev) if prev.best_cost < best.best_cost => ReducedResult {
            iteration,
            cost_trace: Vec::new(),
            ..prev.clone()
        },
        _ => ReducedResult {
            iteration,
            best_task_index: best.task_index,
            best_iteration: iteration,
            best_cost: best.best_cost,
            chi2: best.chi2,
            energy: best.energy,
            best_configuration: best.configuration(),
            cost_trace: Vec::new(),
        },
    };
    cost_trace.push((iteration, result.best_cost));
    result.cost_trace = cost_trace;
    Ok(result)
}

pub fn converged(result: &ReducedResult, criterion: &ConvergenceCriterion) -> bool {
    result.best_cost <= criterion.cost_threshold || result.iteration + 1 >= criterion.max_iterations
}

/// Burst of the following iteration, seeded from the incumbent.
pub fn next_batch(
    result: &ReducedResult,
    spec: &RunSpec,
    schedule: &AnnealingSchedule,
    criterion: &ConvergenceCriterion,
) -> Result<BurstInput, MapReduceError> {
    if converged(result, criterion) {
        return Err(MapReduceError::AlreadyConverged(result.iteration));
    }
    Ok(map_phase(result.iteration + 1, &result.best_configuration, spec, schedule))
}

/// Map/reduce connector running the structure-fitting payload on a
/// hidden-target instance.
#[derive(Debug, Clone)]
pub struct HrmcConnector {
    spec: RunSpec,
    instance: HrmcInstance,
    schedule: AnnealingSchedule,
    criterion: ConvergenceCriterion,
    initial: Configuration,
}

impl HrmcConnector {
    pub fn new(spec: &RunSpec) -> Self {
        let instance = HrmcInstance::generate(&spec.payload);
        let initial = instance.initial_configuration(spec.master_seed);
        Self {
            spec: spec.clone(),
            schedule: AnnealingSchedule::from_params(&spec.payload),
            criterion: ConvergenceCriterion::from_params(&spec.payload),
            instance,
            initial,
        }
    }

    pub fn instance(&self) -> &HrmcInstance {
        &self.instance
    }

    pub fn schedule(&self) -> &AnnealingSchedule {
        &self.schedule
    }

    pub fn criterion(&self) -> &ConvergenceCriterion {
        &self.criterion
    }

    pub fn initial_configuration(&self) -> &Configuration {
        &self.initial
    }
}

impl Connector for HrmcConnector {
    type Output = PayloadOutput;
    type Reduced = ReducedResult;
    type Error = MapReduceError;

    fn setup_document(&self) -> serde_json::Value {
        serde_json::json!({
            "payload": "hrmc",
            "params": self.spec.payload,
            "target": self.instance.target,
        })
    }

    fn map_phase(&self, previous: Option<&ReducedResult>) -> Result<BurstInput, MapReduceError> {
        match previous {
            None => Ok(map_phase(0, &self.initial, &self.spec, &self.schedule)),
            Some(r) => next_batch(r, &self.spec, &self.schedule, &self.criterion),
        }
    }

    fn execute(&self, burst: &BurstInput, task: &BurstTask) -> Result<PayloadOutput, MapReduceError> {
        let chain = run_chain(
            &burst.start,
            task.temperature,
            self.spec.payload.sigma,
            self.spec.payload.steps_per_task,
            task.seed,
            &self.instance.target,
            &self.instance.params,
        )?;
        Ok(PayloadOutput {
            task_index: task.task_index,
            seed: task.seed,
            temperature: task.temperature,
            best_cost: chain.best_cost.total,
            chi2: chain.best_cost.chi2,
            energy: chain.best_cost.energy,
            best_points: chain.best.points().to_vec(),
            trace: chain.trace,
        })
    }

    fn reduce_phase(
        &self,
        iteration: u32,
        outputs: &[PayloadOutput],
        previous: Option<&ReducedResult>,
    ) -> Result<ReducedResult, MapReduceError> {
        reduce_phase(iteration, outputs, previous)
    }

    fn converged(&self, reduced: &ReducedResult) -> bool {
        converged(reduced, &self.criterion)
    }

    fn best_metric(&self, reduced: &ReducedResult) -> f64 {
        reduced.best_cost
    }

    fn ticks(&self, _task: &BurstTask) -> u64 {
        u64::from(self.spec.payload.steps_per_task)
    }
}
