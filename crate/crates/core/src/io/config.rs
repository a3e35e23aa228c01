//! Run configuration (TOML).
//!
//! ```toml
//! mode = "run"
//! seed = 7
//! dataset = "data/dataset.csv"
//! out = "runs/seed7"
//! models = [1, 2, 3]
//!
//! [smc]
//! n = 1000
//! phi_fraction = 0.128
//! lambda = 0.4
//! delta = 2e-10
//!
//! [[priors]]
//! model = 2
//! parameter = "gamma"
//! kind = "beta"
//! p = 3.0
//! q = 3.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dispersion::Model;
use crate::error::{Error, Result};
use crate::posterior::GridSpec;
use crate::priors::{default_prior_set, ModelPrior, PriorSet, ScalarPrior};
use crate::smc::SmcConfig;

use super::scenario::ScenarioSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Run,
    Reject,
    Generate,
    Summarise,
}

/// Replacement prior for one parameter of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorOverride {
    pub model: u8,
    pub parameter: String,
    #[serde(flatten)]
    pub prior: ScalarPrior,
}

fn all_models() -> Vec<u8> {
    vec![1, 2, 3]
}

fn default_grid_points() -> usize {
    GridSpec::DEFAULT_POINTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "all_models")]
    pub models: Vec<u8>,
    /// Tolerance for `reject` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Points per marginal density grid.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub smc: SmcConfig,
    #[serde(default)]
    pub priors: Vec<PriorOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::default(),
            seed: None,
            dataset: None,
            out: None,
            models: all_models(),
            epsilon: None,
            grid_points: default_grid_points(),
            smc: SmcConfig::default(),
            priors: Vec::new(),
            scenario: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::Usage("a seed is required (--seed or `seed` in the config)".into())
        })
    }

    pub fn enabled_models(&self) -> Result<Vec<Model>> {
        if self.models.is_empty() {
            return Err(Error::Usage("at least one model must be enabled".into()));
        }
        let mut models = self
            .models
            .iter()
            .map(|&m| Model::from_number(m))
            .collect::<Result<Vec<_>>>()?;
        models.sort();
        models.dedup();
        Ok(models)
    }

    /// Default priors, uniform model prior over the enabled models, then the
    /// overrides in file order.
    pub fn resolve_priors(&self) -> Result<PriorSet> {
        let enabled = self.enabled_models()?;
        let mut set = default_prior_set();
        set.model_prior = ModelPrior::uniform_over(&enabled)?;
        for o in &self.priors {
            let model = Model::from_number(o.model)?;
            set.spec_mut(model).set(&o.parameter, o.prior)?;
        }
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        self.enabled_models()?;
        self.smc.validate()?;
        if self.grid_points < 2 {
            return Err(Error::Validation("grid_points must be at least 2".into()));
        }
        self.resolve_priors()?;
        Ok(())
    }

    /// Copy of this config with every prior written out explicitly, so the
    /// echo reproduces the run without relying on built-in defaults.
    pub fn resolved(&self, priors: &PriorSet) -> Self {
        let mut echo = self.clone();
        echo.priors = priors
            .specs()
            .iter()
            .flat_map(|spec| {
                spec.named().map(move |(name, prior)| PriorOverride {
                    model: spec.model().number(),
                    parameter: name.to_owned(),
                    prior: *prior,
                })
            })
            .collect();
        if let Ok(models) = self.enabled_models() {
            echo.models = models.iter().map(|m| m.number()).collect();
        }
        echo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_defaults() {
        let cfg = RunConfig::from_toml_str(
            r#"
            seed = 3
            models = [2, 1]
            [smc]
            n = 200
            delta = inf
            [[priors]]
            model = 1
            parameter = "z0"
            kind = "fixed"
            value = 4.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed().unwrap(), 3);
        assert_eq!(cfg.smc.n, 200);
        assert_eq!(cfg.smc.lambda, 0.4);
        assert!(cfg.smc.delta.is_infinite());
        let priors = cfg.resolve_priors().unwrap();
        assert_eq!(priors.model_prior.probabilities(), [0.5, 0.5, 0.0]);
        assert_eq!(
            priors.spec(Model::GaussianLinear).get("z0"),
            Some(&ScalarPrior::Fixed { value: 4.0 })
        );
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig {
            seed: Some(11),
            dataset: Some("d.csv".into()),
            ..Default::default()
        };
        cfg.smc.delta = f64::INFINITY;
        let echo = cfg.resolved(&cfg.resolve_priors().unwrap());
        assert_eq!(echo.priors.len(), 7 + 9 + 10);
        let text = echo.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, echo);
        assert_eq!(
            back.resolve_priors().unwrap(),
            cfg.resolve_priors().unwrap()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        let cfg = RunConfig {
            models: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().seed().is_err());
        let cfg = RunConfig::from_toml_str(
            "[[priors]]\nmodel = 1\nparameter = \"gamma\"\nkind = \"beta\"\np = 1.0\nq = 1.0\n",
        )
        .unwrap();
        assert!(cfg.resolve_priors().is_err());
    }
}
