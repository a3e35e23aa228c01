//! Mean-concentration forward models.
//!
//! Three candidate models are evaluated at point sensors:
//!
//! 1. Gaussian plume with spreads growing linearly downwind.
//! 2. Gaussian plume with a power-law crosswind spread set by an effective
//!    roughness `rho` and exponent `gamma`.
//! 3. Stretched-exponential plume (leading asymptotic term) with a
//!    non-Gaussian vertical profile of exponent `r = 1 + 2 mu`.
//!
//! The wind blows along +x. All lengths are millimetres and concentrations
//! are relative (dimensionless). Every model returns exactly zero at sensors
//! with `x <= x0`.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Number of candidate models.
pub const MODEL_COUNT: usize = 3;

/// Cap on the natural log of any predicted concentration.
///
/// Half of `ln(f64::MAX)` minus a margin, so squared distances summed over
/// thousands of sensors stay finite.
pub const LN_CONCENTRATION_CAP: f64 = 300.0;

/// Candidate dispersion model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    GaussianLinear,
    GaussianPower,
    StretchExp,
}

impl Model {
    pub const ALL: [Model; MODEL_COUNT] = [
        Model::GaussianLinear,
        Model::GaussianPower,
        Model::StretchExp,
    ];

    /// Zero-based slot used to index per-model arrays.
    pub fn index(self) -> usize {
        match self {
            Model::GaussianLinear => 0,
            Model::GaussianPower => 1,
            Model::StretchExp => 2,
        }
    }

    /// One-based model number used in files and on the command line.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(m: u8) -> Result<Model> {
        match m {
            1 => Ok(Model::GaussianLinear),
            2 => Ok(Model::GaussianPower),
            3 => Ok(Model::StretchExp),
            _ => Err(Error::Usage(format!(
                "unknown model {m}; expected 1, 2 or 3"
            ))),
        }
    }

    /// Parameter names in vector order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Model::GaussianLinear => &["x0", "y0", "z0", "sigma0", "b", "alpha", "beta"],
            Model::GaussianPower => &[
                "x0", "y0", "z0", "sigma0", "b", "alpha", "beta", "rho", "gamma",
            ],
            Model::StretchExp => &[
                "x0", "y0", "z0", "sigma0", "b", "alpha", "phi", "rho", "mu", "nu",
            ],
        }
    }

    pub fn dim(self) -> usize {
        self.param_names().len()
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorLocation {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SensorLocation {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::Validation(format!(
                "sensor coordinates must be finite, got ({x}, {y}, {z})"
            )));
        }
        if z < 0.0 {
            return Err(Error::Validation(format!(
                "sensor height must be non-negative, got {z}"
            )));
        }
        Ok(Self { x, y, z })
    }
}

/// Sensor positions with an optional observed concentration per sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorArray {
    sensors: Vec<SensorLocation>,
    observed: Option<Vec<f64>>,
}

impl SensorArray {
    pub fn new(sensors: Vec<SensorLocation>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::Validation("sensor array is empty".into()));
        }
        Ok(Self {
            sensors,
            observed: None,
        })
    }

    pub fn with_observed(sensors: Vec<SensorLocation>, observed: Vec<f64>) -> Result<Self> {
        let mut array = Self::new(sensors)?;
        array.set_observed(observed)?;
        Ok(array)
    }

    pub fn set_observed(&mut self, observed: Vec<f64>) -> Result<()> {
        if observed.len() != self.sensors.len() {
            return Err(Error::Validation(format!(
                "{} observations for {} sensors",
                observed.len(),
                self.sensors.len()
            )));
        }
        if let Some((s, c)) = observed
            .iter()
            .enumerate()
            .find(|(_, c)| !c.is_finite() || **c < 0.0)
        {
            return Err(Error::Validation(format!(
                "observation {s} is {c}; concentrations must be finite and non-negative"
            )));
        }
        self.observed = Some(observed);
        Ok(())
    }

    pub fn sensors(&self) -> &[SensorLocation] {
        &self.sensors
    }

    pub fn observed(&self) -> Option<&[f64]> {
        self.observed.as_deref()
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }
}

/// Model 1 parameters. `b = Q0/U`, `alpha = sigma_v/U`, `beta = sigma_w/U`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianLinearParams {
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub sigma0: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Model 2 parameters: model 1 plus effective roughness and spread exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPowerParams {
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub sigma0: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub gamma: f64,
}

/// Model 3 parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StretchExpParams {
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub sigma0: f64,
    pub b: f64,
    pub alpha: f64,
    pub phi: f64,
    pub rho: f64,
    pub mu: f64,
    pub nu: f64,
}

impl StretchExpParams {
    /// Vertical profile exponent, in `[1, 3]`.
    pub fn r(&self) -> f64 {
        1.0 + 2.0 * self.mu
    }

    /// Centreline decay exponent.
    pub fn tau(&self) -> f64 {
        self.nu + (1.0 + self.mu) / (1.0 + 2.0 * self.mu)
    }
}

fn require(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!("invalid parameters: {what}")))
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl GaussianLinearParams {
    pub fn validate(&self) -> Result<()> {
        require(
            all_finite(&[
                self.x0,
                self.y0,
                self.z0,
                self.sigma0,
                self.b,
                self.alpha,
                self.beta,
            ]),
            "non-finite entry",
        )?;
        require(self.z0 >= 0.0, "z0 < 0")?;
        require(self.sigma0 > 0.0, "sigma0 <= 0")?;
        require(self.b > 0.0, "b <= 0")?;
        require(self.alpha > 0.0, "alpha <= 0")?;
        require(self.beta > 0.0, "beta <= 0")
    }
}

impl GaussianPowerParams {
    pub fn validate(&self) -> Result<()> {
        self.shared().validate()?;
        require(self.rho.is_finite() && self.rho > 0.0, "rho <= 0")?;
        require(self.gamma > 0.0 && self.gamma < 1.0, "gamma outside (0, 1)")
    }

    /// The model-1 view of the shared fields.
    pub fn shared(&self) -> GaussianLinearParams {
        GaussianLinearParams {
            x0: self.x0,
            y0: self.y0,
            z0: self.z0,
            sigma0: self.sigma0,
            b: self.b,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

impl StretchExpParams {
    pub fn validate(&self) -> Result<()> {
        require(
            all_finite(&[
                self.x0,
                self.y0,
                self.z0,
                self.sigma0,
                self.b,
                self.alpha,
                self.phi,
                self.rho,
                self.mu,
                self.nu,
            ]),
            "non-finite entry",
        )?;
        require(self.z0 >= 0.0, "z0 < 0")?;
        require(self.sigma0 > 0.0, "sigma0 <= 0")?;
        require(self.b > 0.0, "b <= 0")?;
        require(self.alpha > 0.0, "alpha <= 0")?;
        require(self.phi > 0.0, "phi <= 0")?;
        require(self.rho > 0.0, "rho <= 0")?;
        require((0.0..=1.0).contains(&self.mu), "mu outside [0, 1]")?;
        require(self.nu > 0.0 && self.nu < 1.0, "nu outside (0, 1)")
    }
}

/// A parameter vector tagged with the model it belongs to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelParams {
    GaussianLinear(GaussianLinearParams),
    GaussianPower(GaussianPowerParams),
    StretchExp(StretchExpParams),
}

impl ModelParams {
    pub fn model(&self) -> Model {
        match self {
            ModelParams::GaussianLinear(_) => Model::GaussianLinear,
            ModelParams::GaussianPower(_) => Model::GaussianPower,
            ModelParams::StretchExp(_) => Model::StretchExp,
        }
    }

    /// Build from a vector in the model's parameter order. Only the length is
    /// checked; call [`ModelParams::validate`] for the type invariants.
    pub fn from_slice(model: Model, v: &[f64]) -> Result<Self> {
        if v.len() != model.dim() {
            return Err(Error::Config(format!(
                "model {model} takes {} parameters, got {}",
                model.dim(),
                v.len()
            )));
        }
        Ok(match model {
            Model::GaussianLinear => ModelParams::GaussianLinear(GaussianLinearParams {
                x0: v[0],
                y0: v[1],
                z0: v[2],
                sigma0: v[3],
                b: v[4],
                alpha: v[5],
                beta: v[6],
            }),
            Model::GaussianPower => ModelParams::GaussianPower(GaussianPowerParams {
                x0: v[0],
                y0: v[1],
                z0: v[2],
                sigma0: v[3],
                b: v[4],
                alpha: v[5],
                beta: v[6],
                rho: v[7],
                gamma: v[8],
            }),
            Model::StretchExp => ModelParams::StretchExp(StretchExpParams {
                x0: v[0],
                y0: v[1],
                z0: v[2],
                sigma0: v[3],
                b: v[4],
                alpha: v[5],
                phi: v[6],
                rho: v[7],
                mu: v[8],
                nu: v[9],
            }),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            ModelParams::GaussianLinear(p) => {
                vec![p.x0, p.y0, p.z0, p.sigma0, p.b, p.alpha, p.beta]
            }
            ModelParams::GaussianPower(p) => vec![
                p.x0, p.y0, p.z0, p.sigma0, p.b, p.alpha, p.beta, p.rho, p.gamma,
            ],
            ModelParams::StretchExp(p) => vec![
                p.x0, p.y0, p.z0, p.sigma0, p.b, p.alpha, p.phi, p.rho, p.mu, p.nu,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::GaussianLinear(p) => p.validate(),
            ModelParams::GaussianPower(p) => p.validate(),
            ModelParams::StretchExp(p) => p.validate(),
        }
    }

    /// Source location `(x0, y0)`.
    pub fn location(&self) -> (f64, f64) {
        match self {
            ModelParams::GaussianLinear(p) => (p.x0, p.y0),
            ModelParams::GaussianPower(p) => (p.x0, p.y0),
            ModelParams::StretchExp(p) => (p.x0, p.y0),
        }
    }

    /// Concentration at one sensor.
    pub fn predict(&self, sensor: &SensorLocation) -> f64 {
        match self {
            ModelParams::GaussianLinear(p) => predict_gaussian_linear(p, sensor),
            ModelParams::GaussianPower(p) => predict_gaussian_power(p, sensor),
            ModelParams::StretchExp(p) => predict_stretch_exp(p, sensor),
        }
    }
}

/// Shared Gaussian plume body once the spreads are known.
fn gaussian_plume(
    b: f64,
    y0: f64,
    z0: f64,
    sigma_y: f64,
    sigma_z: f64,
    sensor: &SensorLocation,
) -> f64 {
    debug_assert!(sigma_y > 0.0 && sigma_z > 0.0);
    let dy = sensor.y - y0;
    let two_sz2 = 2.0 * sigma_z * sigma_z;
    let crosswind = (-(dy * dy) / (2.0 * sigma_y * sigma_y)).exp();
    let below = sensor.z - z0;
    let above = sensor.z + z0;
    let vertical = (-(below * below) / two_sz2).exp() + (-(above * above) / two_sz2).exp();
    b / (2.0 * PI * sigma_y * sigma_z) * crosswind * vertical
}

/// Model 1 at one sensor.
pub fn predict_gaussian_linear(p: &GaussianLinearParams, sensor: &SensorLocation) -> f64 {
    if sensor.x <= p.x0 {
        return 0.0;
    }
    let downwind = sensor.x - p.x0;
    let sigma_y = p.sigma0 + p.alpha * downwind;
    let sigma_z = p.sigma0 + p.beta * downwind;
    gaussian_plume(p.b, p.y0, p.z0, sigma_y, sigma_z, sensor)
}

/// Model 2 at one sensor. With `gamma == 1` this is bit-identical to model 1.
pub fn predict_gaussian_power(p: &GaussianPowerParams, sensor: &SensorLocation) -> f64 {
    if sensor.x <= p.x0 {
        return 0.0;
    }
    let downwind = sensor.x - p.x0;
    let crosswind_growth = if p.gamma == 1.0 {
        downwind
    } else {
        p.rho * (downwind / p.rho).powf(p.gamma)
    };
    let sigma_y = p.sigma0 + p.alpha * crosswind_growth;
    let sigma_z = p.sigma0 + p.beta * downwind;
    gaussian_plume(p.b, p.y0, p.z0, sigma_y, sigma_z, sensor)
}

/// Model 3 at one sensor.
///
/// Evaluated in log space. Results whose log exceeds
/// [`LN_CONCENTRATION_CAP`] saturate to `exp(LN_CONCENTRATION_CAP)`.
pub fn predict_stretch_exp(p: &StretchExpParams, sensor: &SensorLocation) -> f64 {
    if sensor.x <= p.x0 {
        return 0.0;
    }
    let downwind = sensor.x - p.x0;
    let r = p.r();
    let tau = p.tau();
    let scaled = downwind / p.rho;
    let sigma_y = p.sigma0 + p.alpha * p.rho * scaled.sqrt();
    let sigma_z = p.sigma0 + p.phi * p.rho * r.powf(2.0 / r) * scaled.powf(1.0 / r);
    debug_assert!(sigma_y > 0.0 && sigma_z > 0.0);

    let ln_prefactor = p.b.ln() - std::f64::consts::LN_2 - 2.0 * p.rho.ln() - tau * scaled.ln();
    let sz_r = sigma_z.powf(r);
    let zs_r = sensor.z.powf(r);
    let z0_r = p.z0.powf(r);
    let ln_vertical = ln_add_exp(-(zs_r - z0_r) / sz_r, -(zs_r + z0_r) / sz_r);
    let dy = sensor.y - p.y0;
    let ln_crosswind = -(dy * dy) / (2.0 * sigma_y * sigma_y);

    let ln_c = ln_prefactor + ln_vertical + ln_crosswind;
    ln_c.min(LN_CONCENTRATION_CAP).exp()
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Predicted concentration at every sensor, in sensor order.
pub fn predict_all(model: Model, params: &ModelParams, array: &SensorArray) -> Result<Vec<f64>> {
    if params.model() != model {
        return Err(Error::Config(format!(
            "model {model} evaluated with model {} parameters",
            params.model()
        )));
    }
    Ok(array.sensors().iter().map(|s| params.predict(s)).collect())
}
