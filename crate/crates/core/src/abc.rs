//! Distance, weighted populations and the multiple-model ABC rejection
//! sampler.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{Model, ModelParams, SensorArray, MODEL_COUNT};
use crate::error::{Error, Result};
use crate::priors::{draw_model, PriorSet};
use crate::rng::{substream, Purpose};

/// Sum of squared differences between observed and predicted concentrations.
pub fn distance(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::Usage(format!(
            "distance between vectors of length {} and {}",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::Usage("distance between empty vectors".into()));
    }
    Ok(observed
        .iter()
        .zip(predicted)
        .map(|(z, c)| (z - c) * (z - c))
        .sum())
}

/// Distance between the observations and the prediction of `params`,
/// without materialising the prediction vector.
pub(crate) fn simulated_distance(
    params: &ModelParams,
    array: &SensorArray,
    observed: &[f64],
) -> f64 {
    array
        .sensors()
        .iter()
        .zip(observed)
        .map(|(s, z)| {
            let r = z - params.predict(s);
            r * r
        })
        .sum()
}

pub(crate) fn require_observed(array: &SensorArray) -> Result<&[f64]> {
    array
        .observed()
        .ok_or_else(|| Error::Validation("sensor array has no observed concentrations".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample {
    pub weight: f64,
    /// Parameter vector in the model's order.
    pub theta: Vec<f64>,
    /// Distance that admitted this sample.
    pub distance: f64,
}

/// Per-model weighted sample sets from one sampler pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub iteration: usize,
    /// Tolerance the samples were accepted under; infinite for a prior pass.
    pub tolerance: f64,
    pub models: [Vec<WeightedSample>; MODEL_COUNT],
}

impl Population {
    pub fn empty(iteration: usize, tolerance: f64) -> Self {
        Self {
            iteration,
            tolerance,
            models: Default::default(),
        }
    }

    pub fn samples(&self, model: Model) -> &[WeightedSample] {
        &self.models[model.index()]
    }

    pub fn counts(&self) -> [usize; MODEL_COUNT] {
        [0, 1, 2].map(|i| self.models[i].len())
    }

    pub fn total(&self) -> usize {
        self.models.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn params(&self, model: Model, i: usize) -> ModelParams {
        ModelParams::from_slice(model, &self.models[model.index()][i].theta)
            .expect("population vectors match their model")
    }

    /// Give every sample of a model the same weight `1 / L_m`.
    pub fn set_uniform_weights(&mut self) {
        for samples in &mut self.models {
            let w = 1.0 / samples.len() as f64;
            samples.iter_mut().for_each(|s| s.weight = w);
        }
    }
}

/// `p(m | z) ≈ L_m / N`. Within-model weights play no part.
///
/// The last non-empty model takes `1 - (sum of the others)`, so the
/// left-to-right sum of the result is exactly 1.
pub fn model_probabilities(pop: &Population) -> [f64; MODEL_COUNT] {
    let n = pop.total();
    assert!(n > 0, "model probabilities of an empty population");
    let counts = pop.counts();
    let last = counts
        .iter()
        .rposition(|&l| l > 0)
        .expect("non-empty population");
    let mut out = [0.0; MODEL_COUNT];
    let mut prefix = 0.0;
    for m in 0..last {
        out[m] = counts[m] as f64 / n as f64;
        prefix += out[m];
    }
    out[last] = 1.0 - prefix;
    out
}

/// Abort rule for tolerances that are effectively unreachable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceGuard {
    /// Number of most recent proposals the rate is measured over.
    pub window: u64,
    /// Minimum acceptance rate over a full window.
    pub floor: f64,
}

impl Default for AcceptanceGuard {
    fn default() -> Self {
        Self {
            window: 1_000_000,
            floor: 1e-6,
        }
    }
}

/// How proposals are evaluated. Both modes accept exactly the same samples
/// in the same order, because each proposal owns its substream and the
/// N-th acceptance is resolved by proposal index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProposalStats {
    pub proposals: u64,
    pub accepted: u64,
    /// Candidates outside the prior support, discarded before simulation.
    pub zero_prior: u64,
    /// Accepted candidates whose importance-weight denominator underflowed.
    pub weight_underflow: u64,
}

impl ProposalStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

pub(crate) struct Candidate {
    pub model: Model,
    pub theta: Vec<f64>,
    pub distance: f64,
    pub ln_weight: f64,
}

pub(crate) enum Outcome {
    Accepted(Candidate),
    Rejected,
    ZeroPrior,
    WeightUnderflow,
}

struct WindowTracker {
    guard: AcceptanceGuard,
    recent: VecDeque<u64>,
}

impl WindowTracker {
    fn new(guard: AcceptanceGuard) -> Self {
        Self {
            guard,
            recent: VecDeque::new(),
        }
    }

    fn record(&mut self, index: u64, accepted: bool, epsilon: f64) -> Result<()> {
        if accepted {
            self.recent.push_back(index);
        }
        let window = self.guard.window;
        if window == 0 || index + 1 < window {
            return Ok(());
        }
        let oldest = index + 1 - window;
        while self.recent.front().is_some_and(|&i| i < oldest) {
            self.recent.pop_front();
        }
        let rate = self.recent.len() as f64 / window as f64;
        if rate < self.guard.floor {
            return Err(Error::AcceptanceFloor {
                epsilon,
                rate,
                window,
                floor: self.guard.floor,
            });
        }
        Ok(())
    }
}

const PARALLEL_BATCH: u64 = 4096;

/// Evaluate proposals `0, 1, 2, ...` until `n` are accepted.
pub(crate) fn collect<F>(
    n: usize,
    epsilon: f64,
    execution: Execution,
    guard: AcceptanceGuard,
    evaluate: F,
) -> Result<(Vec<Candidate>, ProposalStats)>
where
    F: Fn(u64) -> Outcome + Sync,
{
    let mut accepted = Vec::with_capacity(n);
    let mut stats = ProposalStats::default();
    let mut tracker = WindowTracker::new(guard);
    let mut next = 0u64;

    let mut absorb = |index: u64, outcome: Outcome, accepted: &mut Vec<Candidate>| -> Result<()> {
        stats.proposals += 1;
        let hit = match outcome {
            Outcome::Accepted(c) => {
                accepted.push(c);
                stats.accepted += 1;
                true
            }
            Outcome::Rejected => false,
            Outcome::ZeroPrior => {
                stats.zero_prior += 1;
                false
            }
            Outcome::WeightUnderflow => {
                stats.weight_underflow += 1;
                false
            }
        };
        tracker.record(index, hit, epsilon)
    };

    while accepted.len() < n {
        match execution {
            Execution::Sequential => {
                let outcome = evaluate(next);
                absorb(next, outcome, &mut accepted)?;
                next += 1;
            }
            Execution::Parallel => {
                let batch: Vec<Outcome> = (next..next + PARALLEL_BATCH)
                    .into_par_iter()
                    .map(&evaluate)
                    .collect();
                for outcome in batch {
                    if accepted.len() == n {
                        break;
                    }
                    absorb(next, outcome, &mut accepted)?;
                    next += 1;
                }
            }
        }
    }
    Ok((accepted, stats))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectionConfig {
    pub guard: AcceptanceGuard,
    pub execution: Execution,
}

impl Default for RejectionConfig {
    fn default() -> Self {
        Self {
            guard: AcceptanceGuard::default(),
            execution: Execution::Sequential,
        }
    }
}

/// Rejection output: an unweighted population plus proposal counts.
#[derive(Clone, Debug)]
pub struct RejectionRun {
    pub population: Population,
    pub stats: ProposalStats,
}

/// Multiple-model ABC rejection sampling at a fixed tolerance.
///
/// Proposal `j` draws from substream `(seed, Rejection, 0, j)`: one uniform
/// for the model, then one draw per non-fixed parameter.
pub fn rejection_sample(
    array: &SensorArray,
    priors: &PriorSet,
    epsilon: f64,
    n: usize,
    seed: u64,
    config: &RejectionConfig,
) -> Result<RejectionRun> {
    let observed = require_observed(array)?;
    if n == 0 {
        return Err(Error::Usage("population size must be at least 1".into()));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Usage(format!(
            "tolerance must be non-negative, got {epsilon}"
        )));
    }
    let model_probs = priors.model_prior.probabilities();

    let evaluate = |j: u64| {
        let mut rng = substream(seed, Purpose::Rejection, 0, j);
        let model = draw_model(&model_probs, rng.random::<f64>());
        let theta = priors.spec(model).sample_vector(&mut rng);
        let params = ModelParams::from_slice(model, &theta).expect("prior length");
        let d = simulated_distance(&params, array, observed);
        if d <= epsilon {
            Outcome::Accepted(Candidate {
                model,
                theta,
                distance: d,
                ln_weight: 0.0,
            })
        } else {
            Outcome::Rejected
        }
    };

    let (accepted, stats) = collect(n, epsilon, config.execution, config.guard, evaluate)?;
    let mut population = Population::empty(0, epsilon);
    for c in accepted {
        population.models[c.model.index()].push(WeightedSample {
            weight: 0.0,
            theta: c.theta,
            distance: c.distance,
        });
    }
    population.set_uniform_weights();
    Ok(RejectionRun { population, stats })
}
