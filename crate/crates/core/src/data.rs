//! Synthetic measurements and their CSV form.
//!
//! Noise is added per component with standard deviation `level·σ_c`, where
//! `σ_c` is the unbiased sample standard deviation of component `c` of the
//! clean data.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::solver::solve_forward;
use crate::types::{Delay, DynamicsModel, InitialConditionModel, StateVec};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    times: Vec<f64>,
    values: Vec<StateVec>,
}

impl Dataset {
    /// Times must start at 0 and increase strictly; all values share one
    /// dimension.
    pub fn new(times: Vec<f64>, values: Vec<StateVec>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::DegenerateInput("empty dataset".into()));
        }
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
        }
        if times[0] != 0.0 {
            return Err(Error::DegenerateInput(format!("first time must be 0, got {}", times[0])));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateInput(format!("times not ascending at row {}", k + 1)));
        }
        let d = values[0].len();
        if let Some(v) = values.iter().find(|v| v.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[StateVec] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Unbiased sample standard deviation of each component.
    pub fn component_std(&self) -> Vec<f64> {
        let n = self.len();
        if n < 2 {
            return vec![0.0; self.dim()];
        }
        (0..self.dim())
            .map(|c| {
                let mean = self.values.iter().map(|v| v[c]).sum::<f64>() / n as f64;
                let ss: f64 = self.values.iter().map(|v| (v[c] - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

/// `n_tau = τ / solve_dt`, which must be a positive integer.
pub fn steps_per_delay(tau: f64, solve_dt: f64) -> Result<usize> {
    let ratio = tau / solve_dt;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::InvalidValue(format!("solve step {solve_dt} does not divide the delay {tau}")));
    }
    Ok(n as usize)
}

/// Samples the solution of the true model at the first `round(T/solve_dt)`
/// nodes of a solve with step `solve_dt`, i.e. at `0, dt, …, T − dt`.
#[allow(clippy::too_many_arguments)]
pub fn generate_true(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    tau: Delay,
    phi: &[f64],
    t_final: f64,
    solve_dt: f64,
) -> Result<Dataset> {
    let n_tau = steps_per_delay(tau.value(), solve_dt)?;
    let traj = solve_forward(f, history, theta, tau, phi, t_final, n_tau)?;
    let n_data = ((t_final / solve_dt).round() as usize).clamp(2, traj.len());
    Dataset::new(traj.times()[..n_data].to_vec(), traj.states()[..n_data].to_vec())
}

/// Adds iid Gaussian noise, drawn sample by sample and component by
/// component from a ChaCha8 stream seeded with `spec.seed`.
pub fn add_noise(ds: &Dataset, spec: NoiseSpec) -> Result<Dataset> {
    if !(spec.level >= 0.0 && spec.level.is_finite()) {
        return Err(Error::InvalidValue(format!("noise level must be non-negative, got {}", spec.level)));
    }
    if spec.level == 0.0 {
        return Ok(ds.clone());
    }
    let sigma: Vec<f64> = ds.component_std().iter().map(|s| s * spec.level).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = ds
        .values
        .iter()
        .map(|v| {
            let noisy = v
                .iter()
                .zip(&sigma)
                .map(|(x, s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x + s * z
                })
                .collect();
            StateVec::new(noisy)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { times: ds.times.clone(), values })
}

/// Header `t,x0,…,x{d−1}`.
pub fn csv_header(dim: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain((0..dim).map(|c| format!("x{c}"))).collect()
}

pub fn write_csv_to<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(csv_header(ds.dim()))?;
    for (t, v) in ds.times.iter().zip(&ds.values) {
        // Display prints the shortest string that parses back to the same f64
        w.write_record(std::iter::once(t).chain(v.iter()).map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    write_csv_to(ds, File::create(path)?)
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    let dim =
        header.len().checked_sub(1).filter(|d| *d > 0).ok_or_else(|| Error::Parse("header must be t,x0,...".into()))?;
    if header.iter().collect::<Vec<_>>() != csv_header(dim) {
        return Err(Error::Parse(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: '{s}': {e}", i + 1))))
            .collect::<Result<_>>()?;
        if row.len() != dim + 1 {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", i + 1, row.len(), dim + 1)));
        }
        times.push(row[0]);
        values.push(StateVec::new(row[1..].to_vec()).map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?);
    }
    Dataset::new(times, values).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    read_csv_from(File::open(path)?)
}
