//! Parameter and model priors.
//!
//! Gamma priors are parameterised by **shape `k` and scale `eta`** (mean
//! `k * eta`), never by rate. Getting this wrong silently shifts every
//! posterior, so the constructor names spell it out.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::dispersion::{Model, ModelParams, MODEL_COUNT};
use crate::error::{Error, Result};

/// Prior over one scalar parameter.
///
/// `Fixed` pins a parameter to a known value. Fixed entries are excluded from
/// proposal kernels and contribute nothing to the log density; they exist for
/// reduced problems where only a few parameters are unknown.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScalarPrior {
    Uniform { a: f64, b: f64 },
    Gamma { shape: f64, scale: f64 },
    Beta { p: f64, q: f64 },
    Fixed { value: f64 },
}

impl ScalarPrior {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let prior = ScalarPrior::Uniform { a, b };
        prior.validate()?;
        Ok(prior)
    }

    pub fn gamma_shape_scale(shape: f64, scale: f64) -> Result<Self> {
        let prior = ScalarPrior::Gamma { shape, scale };
        prior.validate()?;
        Ok(prior)
    }

    pub fn beta(p: f64, q: f64) -> Result<Self> {
        let prior = ScalarPrior::Beta { p, q };
        prior.validate()?;
        Ok(prior)
    }

    pub fn fixed(value: f64) -> Result<Self> {
        let prior = ScalarPrior::Fixed { value };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarPrior::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            ScalarPrior::Gamma { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0
            }
            ScalarPrior::Beta { p, q } => p.is_finite() && q.is_finite() && p > 0.0 && q > 0.0,
            ScalarPrior::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid prior {self:?}")))
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, ScalarPrior::Fixed { .. })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarPrior::Uniform { a, b } => 0.5 * (a + b),
            ScalarPrior::Gamma { shape, scale } => shape * scale,
            ScalarPrior::Beta { p, q } => p / (p + q),
            ScalarPrior::Fixed { value } => value,
        }
    }

    /// Closed support interval `[lo, hi]` used for plotting ranges.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ScalarPrior::Uniform { a, b } => (a, b),
            ScalarPrior::Gamma { .. } => (0.0, f64::INFINITY),
            ScalarPrior::Beta { .. } => (0.0, 1.0),
            ScalarPrior::Fixed { value } => (value, value),
        }
    }

    /// Draw one value. `Fixed` consumes no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarPrior::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            ScalarPrior::Gamma { shape, scale } => Gamma::new(shape, scale)
                .expect("validated gamma prior")
                .sample(rng),
            ScalarPrior::Beta { p, q } => {
                Beta::new(p, q).expect("validated beta prior").sample(rng)
            }
            ScalarPrior::Fixed { value } => value,
        }
    }

    /// Log density at `x`; `-inf` outside the support.
    ///
    /// Gamma and Beta supports are open, so the boundary points have zero
    /// density here even where the analytic density would be finite.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            ScalarPrior::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    -(b - a).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ScalarPrior::Gamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
            }
            ScalarPrior::Beta { p, q } => {
                if x <= 0.0 || x >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                (p - 1.0) * x.ln() + (q - 1.0) * (-x).ln_1p() - ln_beta(p, q)
            }
            ScalarPrior::Fixed { value } => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Priors for every parameter of one model, in parameter-vector order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPriorSpec {
    model: Model,
    entries: Vec<ScalarPrior>,
}

impl ModelPriorSpec {
    pub fn new(model: Model, entries: Vec<ScalarPrior>) -> Result<Self> {
        if entries.len() != model.dim() {
            return Err(Error::Validation(format!(
                "model {model} needs {} priors, got {}",
                model.dim(),
                entries.len()
            )));
        }
        for prior in &entries {
            prior.validate()?;
        }
        Ok(Self { model, entries })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn entries(&self) -> &[ScalarPrior] {
        &self.entries
    }

    /// `(name, prior)` pairs in vector order.
    pub fn named(&self) -> impl Iterator<Item = (&'static str, &ScalarPrior)> {
        self.model.param_names().iter().copied().zip(&self.entries)
    }

    pub fn get(&self, name: &str) -> Option<&ScalarPrior> {
        self.named().find(|(n, _)| *n == name).map(|(_, p)| p)
    }

    /// Replace the prior of a named parameter.
    pub fn set(&mut self, name: &str, prior: ScalarPrior) -> Result<()> {
        prior.validate()?;
        let slot = self
            .model
            .param_names()
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| {
                Error::Validation(format!("model {} has no parameter '{name}'", self.model))
            })?;
        self.entries[slot] = prior;
        Ok(())
    }

    /// Indices of the non-fixed parameters.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| !self.entries[i].is_fixed())
            .collect()
    }

    /// Draw a parameter vector, one independent draw per entry.
    pub fn sample_vector<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.entries.iter().map(|p| p.sample(rng)).collect()
    }

    pub fn ln_density(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.entries.len());
        let mut total = 0.0;
        for (prior, &x) in self.entries.iter().zip(theta) {
            total += prior.ln_pdf(x);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        total
    }

    pub fn means(&self) -> Vec<f64> {
        self.entries.iter().map(ScalarPrior::mean).collect()
    }
}

/// Draw a full parameter set for `spec`'s model.
pub fn sample_prior<R: Rng + ?Sized>(spec: &ModelPriorSpec, rng: &mut R) -> ModelParams {
    ModelParams::from_slice(spec.model(), &spec.sample_vector(rng))
        .expect("prior spec length matches model dimension")
}

/// Sum of component log densities, `-inf` when any component is outside its
/// support.
pub fn log_prior_density(spec: &ModelPriorSpec, params: &ModelParams) -> Result<f64> {
    if params.model() != spec.model() {
        return Err(Error::Config(format!(
            "model {} parameters evaluated under the model {} prior",
            params.model(),
            spec.model()
        )));
    }
    Ok(spec.ln_density(&params.to_vec()))
}

/// Discrete prior over the candidate models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelPrior {
    probabilities: [f64; MODEL_COUNT],
}

impl ModelPrior {
    pub fn new(probabilities: [f64; MODEL_COUNT]) -> Result<Self> {
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation(format!(
                "model probabilities must be non-negative, got {probabilities:?}"
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "model probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probabilities })
    }

    pub fn uniform() -> Self {
        Self {
            probabilities: [1.0 / MODEL_COUNT as f64; MODEL_COUNT],
        }
    }

    /// Uniform over `enabled`, zero elsewhere.
    pub fn uniform_over(enabled: &[Model]) -> Result<Self> {
        if enabled.is_empty() {
            return Err(Error::Validation("no models enabled".into()));
        }
        let mut probabilities = [0.0; MODEL_COUNT];
        let mut distinct = 0;
        for m in Model::ALL {
            if enabled.contains(&m) {
                distinct += 1;
            }
        }
        for m in Model::ALL {
            if enabled.contains(&m) {
                probabilities[m.index()] = 1.0 / distinct as f64;
            }
        }
        Ok(Self { probabilities })
    }

    pub fn probabilities(&self) -> [f64; MODEL_COUNT] {
        self.probabilities
    }

    pub fn probability(&self, model: Model) -> f64 {
        self.probabilities[model.index()]
    }

    /// The prior renormalised over models for which `allowed` is true.
    /// Returns `None` when no allowed model has positive mass.
    pub fn restricted(&self, allowed: impl Fn(Model) -> bool) -> Option<[f64; MODEL_COUNT]> {
        let mut out = [0.0; MODEL_COUNT];
        for m in Model::ALL {
            if allowed(m) {
                out[m.index()] = self.probabilities[m.index()];
            }
        }
        let total: f64 = out.iter().sum();
        if total <= 0.0 {
            return None;
        }
        out.iter_mut().for_each(|p| *p /= total);
        Some(out)
    }
}

/// Pick a model from categorical probabilities using one uniform draw.
pub fn draw_model(probabilities: &[f64; MODEL_COUNT], u: f64) -> Model {
    let mut cumulative = 0.0;
    let mut last = None;
    for m in Model::ALL {
        let p = probabilities[m.index()];
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        last = Some(m);
        if u < cumulative {
            return m;
        }
    }
    last.expect("at least one model with positive probability")
}

/// Model prior plus a parameter prior for each model.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSet {
    pub model_prior: ModelPrior,
    specs: [ModelPriorSpec; MODEL_COUNT],
}

impl PriorSet {
    pub fn new(model_prior: ModelPrior, specs: [ModelPriorSpec; MODEL_COUNT]) -> Result<Self> {
        for (m, spec) in Model::ALL.iter().zip(&specs) {
            if spec.model() != *m {
                return Err(Error::Config(format!(
                    "prior for model {} stored in slot {m}",
                    spec.model()
                )));
            }
        }
        Ok(Self { model_prior, specs })
    }

    pub fn spec(&self, model: Model) -> &ModelPriorSpec {
        &self.specs[model.index()]
    }

    pub fn spec_mut(&mut self, model: Model) -> &mut ModelPriorSpec {
        &mut self.specs[model.index()]
    }

    pub fn specs(&self) -> &[ModelPriorSpec; MODEL_COUNT] {
        &self.specs
    }

    /// Models with positive prior probability.
    pub fn enabled_models(&self) -> Vec<Model> {
        Model::ALL
            .into_iter()
            .filter(|m| self.model_prior.probability(*m) > 0.0)
            .collect()
    }
}

fn default_scalar(name: &str) -> ScalarPrior {
    match name {
        "x0" => ScalarPrior::Uniform { a: -1000.0, b: 0.0 },
        "y0" => ScalarPrior::Uniform {
            a: -500.0,
            b: 500.0,
        },
        "z0" => ScalarPrior::Gamma {
            shape: 1.333,
            scale: 3.0,
        },
        "sigma0" => ScalarPrior::Gamma {
            shape: 15.5,
            scale: 0.03,
        },
        "b" => ScalarPrior::Gamma {
            shape: 2.0,
            scale: 2.5,
        },
        "alpha" => ScalarPrior::Gamma {
            shape: 3.0,
            scale: 0.5,
        },
        "beta" => ScalarPrior::Gamma {
            shape: 1.667,
            scale: 0.15,
        },
        "phi" => ScalarPrior::Gamma {
            shape: 1.667,
            scale: 0.15,
        },
        "rho" => ScalarPrior::Gamma {
            shape: 6.0,
            scale: 1.0,
        },
        "mu" => ScalarPrior::Beta { p: 1.5, q: 3.0 },
        "gamma" => ScalarPrior::Beta { p: 3.0, q: 3.0 },
        "nu" => ScalarPrior::Beta { p: 6.0, q: 6.0 },
        other => unreachable!("no default prior for '{other}'"),
    }
}

/// Default parameter prior for one model (millimetre units).
pub fn default_model_spec(model: Model) -> ModelPriorSpec {
    let entries = model
        .param_names()
        .iter()
        .map(|n| default_scalar(n))
        .collect();
    ModelPriorSpec::new(model, entries).expect("default priors are valid")
}

/// Uniform model prior and the default parameter priors of all three models.
pub fn default_prior_set() -> PriorSet {
    PriorSet {
        model_prior: ModelPrior::uniform(),
        specs: Model::ALL.map(default_model_spec),
    }
}
