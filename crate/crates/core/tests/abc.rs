mod common;

use common::{close, ks_weighted, toy_array, toy_priors, toy_truth};
use plume_abc::abc::{
    distance, model_probabilities, rejection_sample, AcceptanceGuard, Execution, RejectionConfig,
};
use plume_abc::dispersion::{predict_all, Model, ModelParams};
use plume_abc::io::{generate_scenario, NoiseModel, ScenarioSpec};
use plume_abc::priors::default_prior_set;
use plume_abc::Error;

#[test]
fn distance_at_prior_means_matches_oracle() {
    let g = generate_scenario(&ScenarioSpec::water_channel(NoiseModel::None), 0).unwrap();
    let set = default_prior_set();
    let means = set.spec(Model::GaussianLinear).means();
    let params = ModelParams::from_slice(Model::GaussianLinear, &means).unwrap();
    let predicted = predict_all(Model::GaussianLinear, &params, &g.array).unwrap();
    let d = distance(&g.clean, &predicted).unwrap();
    assert!(close(d, 2.424_945_500_463_018_8e-9, 1e-12), "{d:e}");
}

#[test]
fn distance_rejects_bad_lengths() {
    assert!(matches!(
        distance(&[1.0], &[1.0, 2.0]),
        Err(Error::Usage(_))
    ));
    assert!(matches!(distance(&[], &[]), Err(Error::Usage(_))));
    assert_eq!(distance(&[1.0, 2.0], &[0.0, 4.0]).unwrap(), 5.0);
}

fn concentration(x0: f64, sensor: (f64, f64, f64)) -> f64 {
    let mut theta = toy_truth();
    theta[0] = x0;
    let p = ModelParams::from_slice(Model::GaussianLinear, &theta).unwrap();
    p.predict(&plume_abc::dispersion::SensorLocation::new(sensor.0, sensor.1, sensor.2).unwrap())
}

#[test]
fn one_sensor_posterior_matches_grid_enumeration() {
    let sensor = (100.0, 0.0, 9.3);
    let array = toy_array(&[sensor]);
    let priors = toy_priors(&["x0"]);
    let observed = array.observed().unwrap()[0];
    let epsilon = (0.05 * observed).powi(2);

    // uniform prior on [-1000, 0]: the exact ABC posterior is uniform on the
    // set where the distance is within epsilon
    let cells = 200_000;
    let grid: Vec<(f64, f64)> = (0..cells)
        .map(|i| {
            let x = -1000.0 + (i as f64 + 0.5) * 1000.0 / cells as f64;
            let inside = (concentration(x, sensor) - observed).powi(2) <= epsilon;
            (x, if inside { 1.0 } else { 0.0 })
        })
        .collect();
    assert!(grid.iter().any(|c| c.1 > 0.0));

    let run = rejection_sample(
        &array,
        &priors,
        epsilon,
        5000,
        17,
        &RejectionConfig::default(),
    )
    .unwrap();
    let samples: Vec<(f64, f64)> = run
        .population
        .samples(Model::GaussianLinear)
        .iter()
        .map(|s| (s.theta[0], 1.0))
        .collect();
    assert_eq!(samples.len(), 5000);
    let ks = ks_weighted(&samples, &grid);
    assert!(ks < 0.05, "ks {ks}");
}

#[test]
fn acceptance_rate_grows_with_tolerance() {
    let array = toy_array(&common::five_sensor_row());
    let priors = toy_priors(&["x0", "y0"]);
    let observed: f64 = array.observed().unwrap().iter().map(|c| c * c).sum();
    let mut last: Option<(f64, f64)> = None;
    for scale in [0.01, 0.05, 0.2, 1.0] {
        let run = rejection_sample(
            &array,
            &priors,
            scale * observed,
            500,
            3,
            &RejectionConfig::default(),
        )
        .unwrap();
        let n = run.stats.proposals as f64;
        let rate = run.stats.acceptance_rate();
        let se = (rate * (1.0 - rate) / n).sqrt();
        if let Some((prev, prev_se)) = last {
            assert!(rate + 3.0 * (se + prev_se) >= prev, "{rate} after {prev}");
        }
        last = Some((rate, se));
    }
}

#[test]
fn infinite_tolerance_accepts_everything_with_uniform_weights() {
    let array = toy_array(&common::five_sensor_row());
    let set = default_prior_set();
    let run = rejection_sample(
        &array,
        &set,
        f64::INFINITY,
        900,
        5,
        &RejectionConfig::default(),
    )
    .unwrap();
    assert_eq!(run.stats.proposals, 900);
    assert_eq!(run.stats.acceptance_rate(), 1.0);
    let pop = &run.population;
    assert_eq!(pop.total(), 900);
    for m in Model::ALL {
        let s = pop.samples(m);
        assert!(!s.is_empty());
        for w in s {
            assert_eq!(w.weight, 1.0 / s.len() as f64);
        }
    }
    let p = model_probabilities(pop);
    assert_eq!(p.iter().sum::<f64>(), 1.0);
}

#[test]
fn rejection_is_reproducible_and_parallel_matches() {
    let array = toy_array(&common::five_sensor_row());
    let set = default_prior_set();
    let observed: f64 = array.observed().unwrap().iter().map(|c| c * c).sum();
    let seq = RejectionConfig::default();
    let par = RejectionConfig {
        execution: Execution::Parallel,
        ..seq
    };
    let a = rejection_sample(&array, &set, observed, 200, 8, &seq).unwrap();
    let b = rejection_sample(&array, &set, observed, 200, 8, &seq).unwrap();
    let c = rejection_sample(&array, &set, observed, 200, 8, &par).unwrap();
    assert_eq!(a.population, b.population);
    assert_eq!(a.population, c.population);
    assert_eq!(a.stats, c.stats);
}

#[test]
fn unreachable_tolerance_trips_the_guard() {
    let array = toy_array(&common::five_sensor_row());
    let config = RejectionConfig {
        guard: AcceptanceGuard {
            window: 2000,
            floor: 0.01,
        },
        execution: Execution::Sequential,
    };
    let err = rejection_sample(&array, &default_prior_set(), 0.0, 10, 1, &config).unwrap_err();
    assert!(matches!(err, Error::AcceptanceFloor { .. }));
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn missing_observations_are_rejected() {
    let mut array = toy_array(&common::five_sensor_row());
    array = plume_abc::dispersion::SensorArray::new(array.sensors().to_vec()).unwrap();
    let err = rejection_sample(
        &array,
        &default_prior_set(),
        1.0,
        10,
        1,
        &RejectionConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Validation(_)));
}
