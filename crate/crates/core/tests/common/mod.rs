#![allow(dead_code)]

use std::path::{Path, PathBuf};

use plume_abc::dispersion::{predict_all, Model, ModelParams, SensorArray, SensorLocation};
use plume_abc::priors::{default_prior_set, ModelPrior, PriorSet, ScalarPrior};

pub fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn read_rows(name: &str) -> Vec<csv::StringRecord> {
    let mut reader = csv::Reader::from_path(data_path(name)).expect("oracle file");
    reader.records().map(|r| r.expect("oracle row")).collect()
}

pub fn parse(field: &str) -> f64 {
    field
        .parse()
        .unwrap_or_else(|_| panic!("bad number {field:?}"))
}

/// `|a - b| <= rel * |b|`, with exact equality required at zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if b == 0.0 {
        return a == 0.0;
    }
    (a - b).abs() <= rel * b.abs()
}

/// Model-1 parameters used for every toy problem.
pub fn toy_truth() -> [f64; 7] {
    [-373.5, 0.0, 4.0, 0.465, 5.0, 1.5, 0.25]
}

/// Noise-free model-1 data at `sensors`.
pub fn toy_array(sensors: &[(f64, f64, f64)]) -> SensorArray {
    let sensors: Vec<SensorLocation> = sensors
        .iter()
        .map(|&(x, y, z)| SensorLocation::new(x, y, z).unwrap())
        .collect();
    let mut array = SensorArray::new(sensors).unwrap();
    let truth = ModelParams::from_slice(Model::GaussianLinear, &toy_truth()).unwrap();
    let clean = predict_all(Model::GaussianLinear, &truth, &array).unwrap();
    array.set_observed(clean).unwrap();
    array
}

/// Model 1 only, every parameter fixed at the truth except those in `free`,
/// which keep their default priors.
pub fn toy_priors(free: &[&str]) -> PriorSet {
    let mut set = default_prior_set();
    set.model_prior = ModelPrior::uniform_over(&[Model::GaussianLinear]).unwrap();
    let truth = toy_truth();
    for (i, name) in Model::GaussianLinear.param_names().iter().enumerate() {
        if !free.contains(name) {
            set.spec_mut(Model::GaussianLinear)
                .set(name, ScalarPrior::fixed(truth[i]).unwrap())
                .unwrap();
        }
    }
    set
}

/// Five sensors in a crosswind row 100 mm downstream of the origin.
pub fn five_sensor_row() -> Vec<(f64, f64, f64)> {
    (0..5)
        .map(|i| (100.0, -60.0 + 30.0 * i as f64, 9.3))
        .collect()
}

/// Two-sample Kolmogorov-Smirnov statistic for weighted samples.
pub fn ks_weighted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let cdf = |v: &[(f64, f64)]| {
        let mut v = v.to_vec();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        let total: f64 = v.iter().map(|p| p.1).sum();
        let mut acc = 0.0;
        v.into_iter()
            .map(|(x, w)| {
                acc += w / total;
                (x, acc)
            })
            .collect::<Vec<_>>()
    };
    let (fa, fb) = (cdf(a), cdf(b));
    let eval = |f: &[(f64, f64)], x: f64| {
        let i = f.partition_point(|p| p.0 <= x);
        if i == 0 {
            0.0
        } else {
            f[i - 1].1
        }
    };
    fa.iter()
        .chain(fb.iter())
        .map(|&(x, _)| (eval(&fa, x) - eval(&fb, x)).abs())
        .fold(0.0, f64::max)
}

/// One-sample KS statistic of unweighted draws against a CDF.
pub fn ks_one_sample(draws: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// One row of the prior sampler check.
pub struct PriorCheck {
    pub label: String,
    pub ks: f64,
    /// Sample-mean error in standard errors.
    pub mean_z: f64,
    /// Sample-variance error in standard errors.
    pub var_z: f64,
}

/// Exact CDF and variance of a non-degenerate scalar prior.
pub fn prior_cdf_and_variance(prior: &ScalarPrior) -> (Box<dyn Fn(f64) -> f64>, f64) {
    use statrs::distribution::{Beta, ContinuousCDF, Gamma, Uniform};
    match *prior {
        ScalarPrior::Uniform { a, b } => {
            let d = Uniform::new(a, b).unwrap();
            (Box::new(move |x| d.cdf(x)), (b - a).powi(2) / 12.0)
        }
        ScalarPrior::Gamma { shape, scale } => {
            let d = Gamma::new(shape, 1.0 / scale).unwrap();
            (Box::new(move |x| d.cdf(x)), shape * scale * scale)
        }
        ScalarPrior::Beta { p, q } => {
            let d = Beta::new(p, q).unwrap();
            let v = p * q / ((p + q).powi(2) * (p + q + 1.0));
            (Box::new(move |x| d.cdf(x)), v)
        }
        ScalarPrior::Fixed { .. } => panic!("fixed prior has no CDF"),
    }
}

/// Draw `n` values from every distinct default prior and compare them with
/// the exact distribution.
pub fn check_default_priors(n: usize, seed: u64) -> Vec<PriorCheck> {
    use rand::SeedableRng;
    let set = default_prior_set();
    let mut seen: Vec<ScalarPrior> = Vec::new();
    let mut out = Vec::new();
    for model in Model::ALL {
        for (name, prior) in set.spec(model).named() {
            if seen.contains(prior) {
                continue;
            }
            seen.push(*prior);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + out.len() as u64);
            let mut draws: Vec<f64> = (0..n).map(|_| prior.sample(&mut rng)).collect();
            out.push(sampler_check(
                format!("{name} {prior:?}"),
                prior,
                &mut draws,
            ));
        }
    }
    out
}

pub fn sampler_check(label: String, prior: &ScalarPrior, draws: &mut [f64]) -> PriorCheck {
    let (cdf, var) = prior_cdf_and_variance(prior);
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let m2 = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = draws.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let mean_z = (mean - prior.mean()) / (var / n).sqrt();
    let var_z = (m2 - var) / ((m4 - m2 * m2) / n).sqrt();
    let ks = ks_one_sample(draws, cdf);
    PriorCheck {
        label,
        ks,
        mean_z,
        var_z,
    }
}
