//! Model-averaged source-location posterior.

use std::f64::consts::PI;

use crate::abc::Population;
use crate::dispersion::{Model, MODEL_COUNT};
use crate::error::{Error, Result};

/// One weighted location sample. `weight` is within-model in a
/// [`LocationSampleSet`] and combined after [`location_posterior_weights`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocationSample {
    pub model: Model,
    pub weight: f64,
    pub x0: f64,
    pub y0: f64,
}

impl LocationSample {
    pub fn coordinate(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x0,
            Axis::Y => self.y0,
        }
    }
}

/// Per-model `(weight, x0, y0)` projections of a population.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocationSampleSet {
    pub per_model: [Vec<LocationSample>; MODEL_COUNT],
}

impl LocationSampleSet {
    pub fn counts(&self) -> [usize; MODEL_COUNT] {
        [0, 1, 2].map(|i| self.per_model[i].len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

/// Project every parameter vector onto the source location.
pub fn extract_locations(pop: &Population) -> LocationSampleSet {
    let mut set = LocationSampleSet::default();
    for m in Model::ALL {
        set.per_model[m.index()] = pop
            .samples(m)
            .iter()
            .map(|s| LocationSample {
                model: m,
                weight: s.weight,
                x0: s.theta[0],
                y0: s.theta[1],
            })
            .collect();
    }
    set
}

/// Flatten the per-model sets, giving sample `i` of model `m` the weight
/// `(L_m / N) * w_m(i)`.
pub fn location_posterior_weights(
    set: &LocationSampleSet,
    counts: [usize; MODEL_COUNT],
    n: usize,
) -> Result<Vec<LocationSample>> {
    let total: usize = counts.iter().sum();
    if total != n || n == 0 {
        return Err(Error::Validation(format!(
            "model counts {counts:?} do not sum to N = {n}"
        )));
    }
    let mut flat = Vec::with_capacity(n);
    for m in Model::ALL {
        let share = counts[m.index()] as f64 / n as f64;
        flat.extend(set.per_model[m.index()].iter().map(|s| LocationSample {
            weight: share * s.weight,
            ..*s
        }));
    }
    Ok(flat)
}

/// Convenience: extract and combine in one step.
pub fn flat_locations(pop: &Population) -> Result<Vec<LocationSample>> {
    location_posterior_weights(&extract_locations(pop), pop.counts(), pop.total())
}

/// Evaluation grid for a marginal density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 512;

    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi && points >= 2) {
            return Err(Error::Validation(format!(
                "bad grid [{lo}, {hi}] with {points} points"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub axis: Axis,
    pub points: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityGrid {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.points
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
            .sum()
    }

    /// Indices of strict interior local maxima.
    pub fn local_maxima(&self) -> Vec<usize> {
        (1..self.density.len().saturating_sub(1))
            .filter(|&i| {
                self.density[i] > self.density[i - 1] && self.density[i] >= self.density[i + 1]
            })
            .collect()
    }
}

/// Weighted mean and standard deviation; weights need not be normalised.
fn weighted_moments(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum::<f64>()
        / total;
    (mean, var.sqrt())
}

/// Kernel bandwidth `(4/3)^(1/5) * sd * n_eff^(-1/5)` with
/// `n_eff = 1 / sum w^2` over normalised weights.
pub fn kde_bandwidth(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let n_eff = 1.0
        / weights
            .iter()
            .map(|w| (w / total) * (w / total))
            .sum::<f64>();
    let (_, sd) = weighted_moments(values, weights);
    (4.0f64 / 3.0).powf(0.2) * sd * n_eff.powf(-0.2)
}

/// Weighted Gaussian KDE of one location coordinate on a grid.
pub fn kde_marginal(
    samples: &[LocationSample],
    axis: Axis,
    grid: &GridSpec,
) -> Result<DensityGrid> {
    let values: Vec<f64> = samples.iter().map(|s| s.coordinate(axis)).collect();
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let total: f64 = weights.iter().sum();
    if values.is_empty() || !(total > 0.0) {
        return Err(Error::Degenerate("no weighted samples".into()));
    }
    if values.iter().all(|v| *v == values[0]) {
        return Err(Error::Degenerate(format!(
            "all {} samples share the same {} coordinate",
            values.len(),
            axis.name()
        )));
    }
    let h = kde_bandwidth(&values, &weights);
    if !(h > 0.0) {
        return Err(Error::Degenerate(format!(
            "zero-width {} marginal (effective mass on one value)",
            axis.name()
        )));
    }
    let norm = 1.0 / (total * h * (2.0 * PI).sqrt());
    let points = grid.values();
    let density = points
        .iter()
        .map(|&x| {
            let sum: f64 = values
                .iter()
                .zip(&weights)
                .map(|(v, w)| {
                    let u = (x - v) / h;
                    w * (-0.5 * u * u).exp()
                })
                .sum();
            sum * norm
        })
        .collect();
    Ok(DensityGrid {
        axis,
        points,
        density,
    })
}

/// Point and interval summary of one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisSummary {
    pub mean: f64,
    pub median: f64,
    /// 2.5% weighted quantile.
    pub lower: f64,
    /// 97.5% weighted quantile.
    pub upper: f64,
}

impl AxisSummary {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocationSummary {
    pub x: AxisSummary,
    pub y: AxisSummary,
}

/// Lower weighted quantile: the first value, in ascending order, whose
/// cumulative normalised weight reaches `q`. A relative slack of 1e-12
/// absorbs rounding in the running sum.
pub fn weighted_quantile(sorted: &[(f64, f64)], q: f64) -> f64 {
    let total: f64 = sorted.iter().map(|(_, w)| w).sum();
    let target = q * total * (1.0 - 1e-12);
    let mut cumulative = 0.0;
    for &(v, w) in sorted {
        cumulative += w;
        if cumulative >= target {
            return v;
        }
    }
    sorted.last().expect("non-empty").0
}

fn summarise_axis(samples: &[LocationSample], axis: Axis) -> AxisSummary {
    let mut pairs: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (s.coordinate(axis), s.weight))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mean, _) = weighted_moments(&values, &weights);
    AxisSummary {
        mean,
        median: weighted_quantile(&pairs, 0.5),
        lower: weighted_quantile(&pairs, 0.025),
        upper: weighted_quantile(&pairs, 0.975),
    }
}

/// Weighted mean, median and central 95% interval for each coordinate.
pub fn summarise(samples: &[LocationSample]) -> Result<LocationSummary> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no samples to summarise".into()));
    }
    Ok(LocationSummary {
        x: summarise_axis(samples, Axis::X),
        y: summarise_axis(samples, Axis::Y),
    })
}
