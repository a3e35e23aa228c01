//! Run-directory files.
//!
//! | file | columns |
//! |------|---------|
//! | `trace.csv` | `iteration,tolerance,next_tolerance,count_1,count_2,count_3,p_1,p_2,p_3,proposals,accepted,zero_prior,weight_underflow,acceptance_rate` |
//! | `population_t<t>_m<m>.csv` | `weight,distance,<model parameters...>` |
//! | `rejection.csv` | `epsilon,n,proposals,accepted,acceptance_rate` |
//! | `locations.csv` | `model,weight,x0,y0` (model-averaged weights) |
//! | `marginal_x.csv`, `marginal_y.csv` | `x,density` / `y,density` |
//! | `summary.csv` | `axis,mean,median,lower_95,upper_95` |
//! | `config_echo.toml` | fully resolved configuration |
//!
//! Floats use the shortest representation that parses back exactly, and no
//! file carries timestamps or timings, so identical runs give identical
//! directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::abc::{Population, ProposalStats, WeightedSample};
use crate::dispersion::{Model, MODEL_COUNT};
use crate::error::{Error, Result};
use crate::posterior::{
    flat_locations, kde_bandwidth, kde_marginal, summarise, Axis, DensityGrid, GridSpec,
    LocationSample, LocationSummary,
};
use crate::priors::PriorSet;
use crate::smc::IterationRecord;

use super::config::RunConfig;
use super::fmt_f64;

pub const TRACE_FILE: &str = "trace.csv";
pub const CONFIG_ECHO_FILE: &str = "config_echo.toml";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn finish<W: std::io::Write>(mut writer: csv::Writer<W>, path: &Path) -> Result<()> {
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn population_file(dir: &Path, iteration: usize, model: Model) -> PathBuf {
    dir.join(format!("population_t{iteration}_m{}.csv", model.number()))
}

/// Write one file per enabled model; models without samples get a header-only
/// file.
pub fn write_population(dir: &Path, pop: &Population, models: &[Model]) -> Result<()> {
    for &m in models {
        let path = population_file(dir, pop.iteration, m);
        let mut writer = csv::Writer::from_path(&path)?;
        let mut header = vec!["weight", "distance"];
        header.extend(m.param_names());
        writer.write_record(&header)?;
        for s in pop.samples(m) {
            let mut row = vec![fmt_f64(s.weight), fmt_f64(s.distance)];
            row.extend(s.theta.iter().map(|v| fmt_f64(*v)));
            writer.write_record(&row)?;
        }
        finish(writer, &path)?;
    }
    Ok(())
}

fn parse_field(path: &Path, line: u64, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("'{raw}' is not a number"),
    })
}

pub fn read_population_file(path: &Path, model: Model) -> Result<Vec<WeightedSample>> {
    let mut reader = csv::Reader::from_path(path)?;
    let expected = 2 + model.dim();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let values = record
            .iter()
            .map(|raw| parse_field(path, line, raw))
            .collect::<Result<Vec<f64>>>()?;
        out.push(WeightedSample {
            weight: values[0],
            distance: values[1],
            theta: values[2..].to_vec(),
        });
    }
    Ok(out)
}

/// Load the population of the latest iteration found in `dir`.
pub fn read_latest_population(dir: &Path, tolerance: f64) -> Result<Population> {
    let mut by_iteration: BTreeMap<usize, Vec<(Model, PathBuf)>> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(rest) = name
            .strip_prefix("population_t")
            .and_then(|r| r.strip_suffix(".csv"))
        else {
            continue;
        };
        let Some((t, m)) = rest.split_once("_m") else {
            continue;
        };
        let (Ok(t), Ok(m)) = (t.parse::<usize>(), m.parse::<u8>()) else {
            continue;
        };
        by_iteration
            .entry(t)
            .or_default()
            .push((Model::from_number(m)?, entry.path()));
    }
    let (iteration, files) = by_iteration
        .into_iter()
        .next_back()
        .ok_or_else(|| Error::Validation(format!("no population files in {}", dir.display())))?;
    let mut pop = Population::empty(iteration, tolerance);
    for (model, path) in files {
        pop.models[model.index()] = read_population_file(&path, model)?;
    }
    if pop.is_empty() {
        return Err(Error::Validation(format!(
            "latest population in {} is empty",
            dir.display()
        )));
    }
    Ok(pop)
}

pub fn write_trace(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "iteration",
        "tolerance",
        "next_tolerance",
        "count_1",
        "count_2",
        "count_3",
        "p_1",
        "p_2",
        "p_3",
        "proposals",
        "accepted",
        "zero_prior",
        "weight_underflow",
        "acceptance_rate",
    ])?;
    for r in records {
        let mut row = vec![
            r.iteration.to_string(),
            fmt_f64(r.tolerance),
            fmt_f64(r.next_tolerance),
        ];
        row.extend(r.counts.iter().map(usize::to_string));
        row.extend(r.probabilities.iter().map(|p| fmt_f64(*p)));
        row.extend([
            r.stats.proposals.to_string(),
            r.stats.accepted.to_string(),
            r.stats.zero_prior.to_string(),
            r.stats.weight_underflow.to_string(),
            fmt_f64(r.acceptance_rate()),
        ]);
        writer.write_record(&row)?;
    }
    finish(writer, path)
}

/// A trace row as read back from `trace.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub tolerance: f64,
    pub next_tolerance: f64,
    pub counts: [usize; MODEL_COUNT],
    pub probabilities: [f64; MODEL_COUNT],
    pub proposals: u64,
    pub accepted: u64,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != 14 {
            return Err(bad(format!("expected 14 fields, found {}", record.len())));
        }
        let int = |i: usize| -> Result<u64> {
            record[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("'{}' is not an integer", &record[i])))
        };
        let float = |i: usize| parse_field(path, line, &record[i]);
        rows.push(TraceRow {
            iteration: int(0)? as usize,
            tolerance: float(1)?,
            next_tolerance: float(2)?,
            counts: [int(3)? as usize, int(4)? as usize, int(5)? as usize],
            probabilities: [float(6)?, float(7)?, float(8)?],
            proposals: int(9)?,
            accepted: int(10)?,
        });
    }
    Ok(rows)
}

pub fn write_rejection_stats(
    path: &Path,
    epsilon: f64,
    n: usize,
    stats: &ProposalStats,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["epsilon", "n", "proposals", "accepted", "acceptance_rate"])?;
    writer.write_record([
        fmt_f64(epsilon),
        n.to_string(),
        stats.proposals.to_string(),
        stats.accepted.to_string(),
        fmt_f64(stats.acceptance_rate()),
    ])?;
    finish(writer, path)
}

pub fn write_config_echo(dir: &Path, config: &RunConfig) -> Result<()> {
    let path = dir.join(CONFIG_ECHO_FILE);
    fs::write(&path, config.to_toml_string()?).map_err(|e| Error::io(&path, e))
}

/// Everything derived from a final population.
#[derive(Clone, Debug)]
pub struct PosteriorOutputs {
    pub locations: Vec<LocationSample>,
    pub marginal_x: Option<DensityGrid>,
    pub marginal_y: Option<DensityGrid>,
    pub summary: LocationSummary,
}

/// Grid over the union of the enabled models' prior supports for the axis,
/// or the sample range padded by eight bandwidths when a support is
/// unbounded or a single point.
pub fn marginal_grid(
    samples: &[LocationSample],
    axis: Axis,
    priors: &PriorSet,
    points: usize,
) -> Result<GridSpec> {
    let slot = match axis {
        Axis::X => 0,
        Axis::Y => 1,
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for m in priors.enabled_models() {
        let (a, b) = priors.spec(m).entries()[slot].support();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    if lo.is_finite() && hi.is_finite() && lo < hi {
        return GridSpec::new(lo, hi, points);
    }
    let values: Vec<f64> = samples.iter().map(|s| s.coordinate(axis)).collect();
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let h = kde_bandwidth(&values, &weights);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    GridSpec::new(min - 8.0 * h, max + 8.0 * h, points)
}

pub fn posterior_outputs(
    pop: &Population,
    priors: &PriorSet,
    grid_points: usize,
) -> Result<PosteriorOutputs> {
    let locations = flat_locations(pop)?;
    let summary = summarise(&locations)?;
    let marginal = |axis: Axis| -> Option<DensityGrid> {
        let result = marginal_grid(&locations, axis, priors, grid_points)
            .and_then(|grid| kde_marginal(&locations, axis, &grid));
        match result {
            Ok(g) => Some(g),
            Err(e) => {
                warn!("skipping {} marginal: {e}", axis.name());
                None
            }
        }
    };
    Ok(PosteriorOutputs {
        marginal_x: marginal(Axis::X),
        marginal_y: marginal(Axis::Y),
        locations,
        summary,
    })
}

pub fn write_posterior(dir: &Path, outputs: &PosteriorOutputs) -> Result<()> {
    let path = dir.join("locations.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["model", "weight", "x0", "y0"])?;
    for s in &outputs.locations {
        writer.write_record([
            s.model.number().to_string(),
            fmt_f64(s.weight),
            fmt_f64(s.x0),
            fmt_f64(s.y0),
        ])?;
    }
    finish(writer, &path)?;

    for grid in [&outputs.marginal_x, &outputs.marginal_y]
        .into_iter()
        .flatten()
    {
        let path = dir.join(format!("marginal_{}.csv", grid.axis.name()));
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record([grid.axis.name(), "density"])?;
        for (x, f) in grid.points.iter().zip(&grid.density) {
            writer.write_record([fmt_f64(*x), fmt_f64(*f)])?;
        }
        finish(writer, &path)?;
    }

    let path = dir.join("summary.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    writer.write_record(["axis", "mean", "median", "lower_95", "upper_95"])?;
    for (name, s) in [("x", outputs.summary.x), ("y", outputs.summary.y)] {
        writer.write_record([
            name.to_owned(),
            fmt_f64(s.mean),
            fmt_f64(s.median),
            fmt_f64(s.lower),
            fmt_f64(s.upper),
        ])?;
    }
    finish(writer, &path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut pop = Population::empty(4, 1e-9);
        pop.models[2] = vec![WeightedSample {
            weight: 0.1 + 0.2,
            theta: vec![
                -373.5,
                1.0 / 3.0,
                4.0,
                0.465,
                5.0,
                1.5,
                1e-300,
                6.0,
                0.25,
                0.5,
            ],
            distance: 3.3e-10,
        }];
        write_population(dir.path(), &pop, &Model::ALL).unwrap();
        let back = read_latest_population(dir.path(), 1e-9).unwrap();
        assert_eq!(back, pop);
    }
}
