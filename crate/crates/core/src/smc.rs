//! Adaptive iterative multiple-model ABC sampler.
//!
//! A prior pass draws `N` samples and sets the first tolerance to an order
//! statistic of their distances. Each later pass resamples the previous
//! per-model populations, perturbs with a Gaussian kernel fitted to them,
//! keeps candidates within the current tolerance, importance-weights them
//! against the kernel mixture, and derives the next tolerance from the new
//! distances. Iteration stops once the tolerance decrease falls to `delta`.
//!
//! Randomness: proposal `j` of iteration `t` uses substream
//! `(seed, Adaptive, t, j)`. In the prior pass (`t = 0`) it draws one uniform
//! for the model, then one value per non-fixed parameter. In later passes it
//! draws one uniform for the model, one uniform for the parent index, then
//! one standard normal per non-fixed parameter.

use std::time::{Duration, Instant};

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::abc::{
    collect, require_observed, simulated_distance, AcceptanceGuard, Candidate, Execution, Outcome,
    Population, ProposalStats, WeightedSample,
};
use crate::dispersion::{Model, ModelParams, SensorArray, MODEL_COUNT};
use crate::error::{Error, Result};
use crate::priors::{draw_model, ModelPriorSpec, PriorSet};
use crate::rng::{substream, Purpose};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative size of the diagonal jitter added to non-positive-definite
/// covariances.
pub const COVARIANCE_JITTER: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmcConfig {
    /// Population size `N`.
    pub n: usize,
    /// The next tolerance is the `ceil(phi_fraction * N)`-th smallest distance.
    pub phi_fraction: f64,
    /// Proposal scale factor.
    pub lambda: f64,
    /// Stop once consecutive tolerances differ by no more than this.
    pub delta: f64,
    /// Cap on the number of repeated iterations.
    pub max_iterations: usize,
    pub guard: AcceptanceGuard,
    pub execution: Execution,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            phi_fraction: 0.128,
            lambda: 0.4,
            delta: 2e-10,
            max_iterations: 100,
            guard: AcceptanceGuard::default(),
            execution: Execution::Sequential,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.n == 0 {
            return bad("population size must be at least 1".into());
        }
        if !(self.phi_fraction > 0.0 && self.phi_fraction < 1.0) {
            return bad(format!("phi_fraction {} outside (0, 1)", self.phi_fraction));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda {} outside (0, 1)", self.lambda));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.guard.floor >= 0.0 && self.guard.floor <= 1.0) {
            return bad(format!(
                "acceptance floor {} outside [0, 1]",
                self.guard.floor
            ));
        }
        Ok(())
    }

    /// Rank (1-based) of the order statistic used as the next tolerance.
    pub fn order_rank(&self) -> usize {
        order_rank(self.phi_fraction, self.n)
    }
}

/// `ceil(fraction * n)` clamped to `[1, n]`, robust to products that land a
/// rounding error above an integer.
pub fn order_rank(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n.max(1))
}

/// The `ceil(fraction * len)`-th smallest distance, ties kept.
pub fn order_statistic(distances: &[f64], fraction: f64) -> f64 {
    assert!(!distances.is_empty(), "order statistic of no distances");
    let k = order_rank(fraction, distances.len());
    let mut sorted = distances.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Gaussian perturbation kernel fitted to one model's previous population.
///
/// Only the non-fixed coordinates (`free`) are perturbed. The perturbation
/// is `lambda * h * L * e` with `L` the Cholesky factor of the (possibly
/// jittered) weighted covariance and `e` standard normal.
#[derive(Clone, Debug)]
pub struct ProposalKernel {
    model: Model,
    free: Vec<usize>,
    centres: Vec<Vec<f64>>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    bandwidth: f64,
    lambda: f64,
    jitter: f64,
    scale_root: DMatrix<f64>,
    /// `lambda * h * scale_root`, row-major.
    step: Vec<f64>,
    ln_norm: f64,
}

impl ProposalKernel {
    pub fn model(&self) -> Model {
        self.model
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Diagonal jitter added before factorisation (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular square root of the regularised covariance.
    pub fn scale_root(&self) -> &DMatrix<f64> {
        &self.scale_root
    }

    /// The regularised covariance the kernel was built from.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.scale_root * self.scale_root.transpose()
    }

    /// Parent index for a uniform draw `u` in `[0, 1)`.
    fn select(&self, u: f64) -> usize {
        let total = *self.cumulative.last().expect("non-empty kernel");
        let target = u * total;
        let k = self.cumulative.partition_point(|&c| c <= target);
        k.min(self.cumulative.len() - 1)
    }

    /// Draw a candidate. Returns the candidate and the parent index.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let k = self.select(rng.random::<f64>());
        let d = self.dim();
        let noise: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut candidate = self.centres[k].clone();
        for (row, &slot) in self.free.iter().enumerate() {
            let step: f64 = (0..=row)
                .map(|col| self.step[row * d + col] * noise[col])
                .sum();
            candidate[slot] += step;
        }
        (candidate, k)
    }

    /// `ln sum_i w_i q(candidate | theta_i)`, or `-inf` on total underflow.
    pub fn ln_mixture_density(&self, candidate: &[f64]) -> f64 {
        let d = self.dim();
        let mut scratch = vec![0.0; d];
        let mut terms = Vec::with_capacity(self.centres.len());
        for (centre, &w) in self.centres.iter().zip(&self.weights) {
            if w <= 0.0 {
                continue;
            }
            // forward substitution: step * y = candidate - centre
            let mut mahalanobis = 0.0;
            for row in 0..d {
                let mut acc = candidate[self.free[row]] - centre[self.free[row]];
                for (l, y) in self.step[row * d..row * d + row].iter().zip(&scratch) {
                    acc -= l * y;
                }
                let y = acc / self.step[row * d + row];
                scratch[row] = y;
                mahalanobis += y * y;
            }
            terms.push(w.ln() + self.ln_norm - 0.5 * mahalanobis);
        }
        ln_sum_exp(&terms)
    }
}

fn ln_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Multivariate Gaussian optimal bandwidth for `count` samples in `dim`
/// dimensions: `(4 / (d + 2))^(1 / (d + 4)) * count^(-1 / (d + 4))`.
pub fn optimal_bandwidth(dim: usize, count: usize) -> f64 {
    let d = dim as f64;
    (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * (count as f64).powf(-1.0 / (d + 4.0))
}

/// Weighted mean and covariance of the `free` coordinates. Weights are
/// assumed normalised.
pub fn weighted_covariance(samples: &[WeightedSample], free: &[usize]) -> DMatrix<f64> {
    let d = free.len();
    let mut mean = DVector::<f64>::zeros(d);
    for s in samples {
        for (row, &slot) in free.iter().enumerate() {
            mean[row] += s.weight * s.theta[slot];
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centred = DVector::<f64>::zeros(d);
    for s in samples {
        for (row, &slot) in free.iter().enumerate() {
            centred[row] = s.theta[slot] - mean[row];
        }
        cov.ger(s.weight, &centred, &centred, 1.0);
    }
    cov
}

/// Fit the proposal kernel to one model's weighted population.
///
/// Rank-deficient covariances get `COVARIANCE_JITTER * trace / d` added to the
/// diagonal (growing tenfold until factorisable). A singleton population has a
/// zero covariance; its jitter scale falls back to 1, giving a tiny ball.
pub fn build_kernel(
    model: Model,
    prev: &[WeightedSample],
    free: &[usize],
    lambda: f64,
) -> Result<ProposalKernel> {
    if prev.is_empty() {
        return Err(Error::Config(format!(
            "cannot build a kernel for empty model {model} population"
        )));
    }
    let d = free.len();
    let cov = weighted_covariance(prev, free);
    let (scale_root, jitter) = factorise(cov)?;
    let bandwidth = optimal_bandwidth(d, prev.len());
    let factor = lambda * bandwidth;
    let mut step = vec![0.0; d * d];
    let mut ln_det = 0.0;
    for row in 0..d {
        for col in 0..=row {
            step[row * d + col] = factor * scale_root[(row, col)];
        }
        ln_det += step[row * d + row].ln();
    }
    let mut cumulative = Vec::with_capacity(prev.len());
    let mut acc = 0.0;
    for s in prev {
        acc += s.weight;
        cumulative.push(acc);
    }
    Ok(ProposalKernel {
        model,
        free: free.to_vec(),
        centres: prev.iter().map(|s| s.theta.clone()).collect(),
        weights: prev.iter().map(|s| s.weight).collect(),
        cumulative,
        bandwidth,
        lambda,
        jitter,
        scale_root,
        step,
        ln_norm: -0.5 * d as f64 * LN_2PI - ln_det,
    })
}

fn factorise(cov: DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let d = cov.nrows();
    if d == 0 {
        return Ok((cov, 0.0));
    }
    if cov.iter().all(|v| v.is_finite()) {
        if let Some(chol) = cov.clone().cholesky() {
            return Ok((chol.l(), 0.0));
        }
    } else {
        return Err(Error::Degenerate("non-finite population covariance".into()));
    }
    let scale = cov.trace() / d as f64;
    let mut jitter = COVARIANCE_JITTER * if scale > 0.0 { scale } else { 1.0 };
    for _ in 0..30 {
        let mut regularised = cov.clone();
        for i in 0..d {
            regularised[(i, i)] += jitter;
        }
        if let Some(chol) = regularised.cholesky() {
            return Ok((chol.l(), jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Degenerate(
        "population covariance could not be regularised".into(),
    ))
}

/// Draw a candidate from the kernel. Returns `(candidate, parent index)`.
pub fn propose<R: Rng + ?Sized>(kernel: &ProposalKernel, rng: &mut R) -> (Vec<f64>, usize) {
    kernel.propose(rng)
}

/// Log of the unnormalised importance weight
/// `prior(candidate) / sum_i w_i q(candidate | theta_i)`.
///
/// Returns `None` when the denominator underflows to zero.
pub fn log_weight_update(
    candidate: &[f64],
    spec: &ModelPriorSpec,
    kernel: &ProposalKernel,
) -> Option<f64> {
    let ln_prior = spec.ln_density(candidate);
    let ln_denominator = kernel.ln_mixture_density(candidate);
    let ln_w = ln_prior - ln_denominator;
    (ln_denominator > f64::NEG_INFINITY && ln_w.is_finite()).then_some(ln_w)
}

/// One row of the run trace.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Tolerance this population was accepted under (infinite at t = 0).
    pub tolerance: f64,
    /// Tolerance derived from this population's distances.
    pub next_tolerance: f64,
    pub counts: [usize; MODEL_COUNT],
    pub probabilities: [f64; MODEL_COUNT],
    pub stats: ProposalStats,
    pub duration: Duration,
}

impl IterationRecord {
    pub fn acceptance_rate(&self) -> f64 {
        self.stats.acceptance_rate()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    /// Stopped by `max_iterations` rather than by the tolerance test.
    pub cap_reached: bool,
}

impl RunTrace {
    /// Mean per-iteration acceptance rate over the repeated iterations.
    pub fn average_acceptance_rate(&self) -> f64 {
        let repeated: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.iteration > 0)
            .map(IterationRecord::acceptance_rate)
            .collect();
        if repeated.is_empty() {
            return 1.0;
        }
        repeated.iter().sum::<f64>() / repeated.len() as f64
    }
}

fn assemble(
    iteration: usize,
    tolerance: f64,
    accepted: Vec<Candidate>,
    weighted: bool,
) -> Population {
    let mut buckets: [Vec<(f64, WeightedSample)>; MODEL_COUNT] = Default::default();
    for c in accepted {
        buckets[c.model.index()].push((
            c.ln_weight,
            WeightedSample {
                weight: 0.0,
                theta: c.theta,
                distance: c.distance,
            },
        ));
    }
    let mut pop = Population::empty(iteration, tolerance);
    for (slot, bucket) in buckets.into_iter().enumerate() {
        if bucket.is_empty() {
            continue;
        }
        let max = bucket
            .iter()
            .map(|(lw, _)| *lw)
            .fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = if weighted {
            bucket.iter().map(|(lw, _)| (lw - max).exp()).collect()
        } else {
            vec![1.0; bucket.len()]
        };
        let total: f64 = raw.iter().sum();
        pop.models[slot] = bucket
            .into_iter()
            .zip(raw)
            .map(|((_, mut s), r)| {
                s.weight = r / total;
                s
            })
            .collect();
    }
    pop
}

fn record(
    pop: &Population,
    next_tolerance: f64,
    stats: ProposalStats,
    started: Instant,
) -> IterationRecord {
    IterationRecord {
        iteration: pop.iteration,
        tolerance: pop.tolerance,
        next_tolerance,
        counts: pop.counts(),
        probabilities: crate::abc::model_probabilities(pop),
        stats,
        duration: started.elapsed(),
    }
}

/// Prior pass: `N` prior draws, unit weights normalised per model, and the
/// first tolerance.
pub fn init_iter(
    array: &SensorArray,
    priors: &PriorSet,
    config: &SmcConfig,
    seed: u64,
) -> Result<(Population, f64, IterationRecord)> {
    config.validate()?;
    let observed = require_observed(array)?;
    let started = Instant::now();
    let model_probs = priors.model_prior.probabilities();
    let evaluate = |j: u64| {
        let mut rng = substream(seed, Purpose::Adaptive, 0, j);
        let model = draw_model(&model_probs, rng.random::<f64>());
        let theta = priors.spec(model).sample_vector(&mut rng);
        let params = ModelParams::from_slice(model, &theta).expect("prior length");
        Outcome::Accepted(Candidate {
            model,
            theta,
            distance: simulated_distance(&params, array, observed),
            ln_weight: 0.0,
        })
    };
    let (accepted, stats) = collect(
        config.n,
        f64::INFINITY,
        config.execution,
        config.guard,
        evaluate,
    )?;
    let distances: Vec<f64> = accepted.iter().map(|c| c.distance).collect();
    let next = order_statistic(&distances, config.phi_fraction);
    let pop = assemble(0, f64::INFINITY, accepted, false);
    let rec = record(&pop, next, stats, started);
    Ok((pop, next, rec))
}

/// One adaptive pass at tolerance `epsilon` from the previous population.
pub fn repeated_iter(
    prev: &Population,
    epsilon: f64,
    array: &SensorArray,
    priors: &PriorSet,
    config: &SmcConfig,
    seed: u64,
) -> Result<(Population, f64, IterationRecord)> {
    config.validate()?;
    let observed = require_observed(array)?;
    let started = Instant::now();
    let iteration = prev.iteration + 1;
    let model_probs = priors
        .model_prior
        .restricted(|m| !prev.samples(m).is_empty())
        .ok_or_else(|| {
            Error::Config("no model with both prior mass and surviving samples".into())
        })?;

    let mut kernels: [Option<ProposalKernel>; MODEL_COUNT] = Default::default();
    for m in Model::ALL {
        if model_probs[m.index()] > 0.0 {
            let free = priors.spec(m).free_indices();
            kernels[m.index()] = Some(build_kernel(m, prev.samples(m), &free, config.lambda)?);
        }
    }

    let evaluate = |j: u64| {
        let mut rng = substream(seed, Purpose::Adaptive, iteration as u64, j);
        let model = draw_model(&model_probs, rng.random::<f64>());
        let kernel = kernels[model.index()]
            .as_ref()
            .expect("kernel for drawn model");
        let spec = priors.spec(model);
        let (theta, _) = kernel.propose(&mut rng);
        if spec.ln_density(&theta) == f64::NEG_INFINITY {
            return Outcome::ZeroPrior;
        }
        let params = ModelParams::from_slice(model, &theta).expect("kernel keeps length");
        let d = simulated_distance(&params, array, observed);
        if !(d <= epsilon) {
            return Outcome::Rejected;
        }
        match log_weight_update(&theta, spec, kernel) {
            Some(ln_weight) => Outcome::Accepted(Candidate {
                model,
                theta,
                distance: d,
                ln_weight,
            }),
            None => Outcome::WeightUnderflow,
        }
    };
    let (accepted, stats) = collect(config.n, epsilon, config.execution, config.guard, evaluate)?;
    if stats.weight_underflow > 0 {
        debug!(
            "iteration {iteration}: {} candidates dropped on weight underflow",
            stats.weight_underflow
        );
    }
    let distances: Vec<f64> = accepted.iter().map(|c| c.distance).collect();
    let next = order_statistic(&distances, config.phi_fraction);
    let pop = assemble(iteration, epsilon, accepted, true);
    let rec = record(&pop, next, stats, started);
    Ok((pop, next, rec))
}

#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub population: Population,
    pub trace: RunTrace,
}

/// Run the adaptive sampler to termination.
pub fn run_adaptive(
    array: &SensorArray,
    priors: &PriorSet,
    config: &SmcConfig,
    seed: u64,
) -> Result<AdaptiveRun> {
    run_adaptive_with(array, priors, config, seed, |_, _| Ok(()))
}

/// As [`run_adaptive`], calling `on_iteration` after every completed pass.
/// Each population handed to the callback is a usable posterior on its own.
pub fn run_adaptive_with<F>(
    array: &SensorArray,
    priors: &PriorSet,
    config: &SmcConfig,
    seed: u64,
    mut on_iteration: F,
) -> Result<AdaptiveRun>
where
    F: FnMut(&Population, &IterationRecord) -> Result<()>,
{
    let (mut pop, mut next, rec) = init_iter(array, priors, config, seed)?;
    log_record(&rec);
    on_iteration(&pop, &rec)?;
    let mut trace = RunTrace {
        records: vec![rec],
        cap_reached: false,
    };
    // the previous tolerance starts at the infinite sentinel, so the first
    // test always passes
    let mut current = f64::INFINITY;
    loop {
        let keep_going = current == f64::INFINITY || current - next > config.delta;
        if !keep_going || next <= 0.0 {
            break;
        }
        if pop.iteration >= config.max_iterations {
            trace.cap_reached = true;
            break;
        }
        let (new_pop, new_next, rec) = repeated_iter(&pop, next, array, priors, config, seed)?;
        log_record(&rec);
        on_iteration(&new_pop, &rec)?;
        trace.records.push(rec);
        pop = new_pop;
        current = next;
        next = new_next;
    }
    Ok(AdaptiveRun {
        population: pop,
        trace,
    })
}

fn log_record(rec: &IterationRecord) {
    info!(
        "t={} eps={:.4e} next={:.4e} counts={:?} acceptance={:.4} ({:.2?})",
        rec.iteration,
        rec.tolerance,
        rec.next_tolerance,
        rec.counts,
        rec.acceptance_rate(),
        rec.duration
    );
}
