use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ddeid::data::{add_noise, generate_true, read_csv, write_csv, Dataset, NoiseSpec};
use ddeid::gradcheck::{check_problem, CorruptedThetaJacobian, GradcheckReport};
use ddeid::interpolation::CubicSpline;
use ddeid::trainer::{fit_with_models, FitResult, Problem, StopReason};
use ddeid::{Delay, DynamicsModel};
use rayon::prelude::*;

use crate::config::{param_labels, Config};
use crate::{CliError, FailureKind, Tag};

type CliResult<T> = Result<T, CliError>;

/// Noise-free samples at the true parameters.
pub fn clean_data(cfg: &Config) -> CliResult<Dataset> {
    let tp = cfg.true_params().tag(FailureKind::Config)?;
    let f = cfg.dynamics().tag(FailureKind::Config)?;
    let h = cfg.history(f.dim()).tag(FailureKind::Config)?;
    let tau = Delay::new(tp.tau)?;
    Ok(generate_true(f.as_ref(), h.as_ref(), &tp.theta, tau, &tp.phi, cfg.grid.t_final, cfg.grid.solve_dt)?)
}

fn level_tag(level: f64) -> String {
    format!("{level}")
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).tag(FailureKind::Data)
}

fn write_text(path: &Path, text: &[u8]) -> CliResult<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).tag(FailureKind::Data)
}

/// Writes `clean.csv` and one `noisy_<level>.csv` per configured level, all
/// drawn with the master seed. Returns the written paths.
pub fn simulate(cfg: &Config) -> CliResult<Vec<PathBuf>> {
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let clean = clean_data(cfg)?;
    let mut written = vec![dir.join("clean.csv")];
    write_csv(&clean, &written[0])?;
    for &level in &cfg.noise.levels {
        let noisy = add_noise(&clean, NoiseSpec { level, seed: cfg.noise.seed })?;
        let path = dir.join(format!("noisy_{}.csv", level_tag(level)));
        write_csv(&noisy, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs one fit with the config's initial guess.
pub fn run_fit(cfg: &Config, data: &Dataset) -> CliResult<FitResult> {
    let f = cfg.dynamics().tag(FailureKind::Config)?;
    let h = cfg.history(f.dim()).tag(FailureKind::Config)?;
    if data.dim() != f.dim() {
        return Err(CliError::new(
            FailureKind::Data,
            anyhow!("data has {} components, model '{}' has {}", data.dim(), cfg.model.name, f.dim()),
        ));
    }
    let last = *data.times().last().expect("datasets are non-empty");
    let fc = cfg.fit_config(last).tag(FailureKind::Config)?;
    Ok(fit_with_models(f.as_ref(), h.as_ref(), &fc, data.times(), data.values())?)
}

fn csv_bytes<I, R>(header: &[String], rows: I) -> CliResult<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).tag(FailureKind::Data)?;
    for row in rows {
        w.write_record(row).tag(FailureKind::Data)?;
    }
    w.into_inner().map_err(|e| CliError::new(FailureKind::Data, anyhow!("{e}")))
}

fn flat_params(r: &FitResult) -> Vec<f64> {
    r.theta.iter().copied().chain([r.tau]).chain(r.phi.iter().copied()).collect()
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

/// Paths written by [`fit`].
#[derive(Debug, Clone)]
pub struct FitOutputs {
    pub result: PathBuf,
    pub trajectory: PathBuf,
    pub loss: PathBuf,
}

/// Fits `data` and writes `fit_result.csv`, `fit_trajectory.csv` and
/// `fit_loss.csv`. A blow-up still writes the files, then reports a
/// numerical failure.
pub fn fit(cfg: &Config, data: &Dataset) -> CliResult<(FitResult, FitOutputs)> {
    let r = run_fit(cfg, data)?;
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let out = FitOutputs {
        result: dir.join("fit_result.csv"),
        trajectory: dir.join("fit_trajectory.csv"),
        loss: dir.join("fit_loss.csv"),
    };

    let d = data.dim();
    let mut header = param_labels(r.theta.len(), &cfg.ic.family, d);
    header.extend(["final_loss", "epochs", "stop_reason"].map(String::from));
    let mut row: Vec<String> = flat_params(&r).iter().map(f64::to_string).collect();
    row.extend([opt_num(r.final_loss), r.loss_history.len().to_string(), r.stop_reason.as_str().into()]);
    write_text(&out.result, &csv_bytes(&header, [row])?)?;

    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend((0..d).map(|i| format!("target_x{i}")));
    let target = CubicSpline::fit_natural(data.times(), data.values())?;
    let rows: Vec<Vec<String>> = match &r.trajectory {
        Some(traj) => (0..traj.len())
            .map(|k| {
                let t = traj.time(k);
                let pred = traj.state(k).expect("index in range");
                std::iter::once(t)
                    .chain(pred.iter().copied())
                    .chain(target.eval(t).iter().copied())
                    .map(|v| v.to_string())
                    .collect()
            })
            .collect(),
        None => Vec::new(),
    };
    write_text(&out.trajectory, &csv_bytes(&header, rows)?)?;

    let header = ["epoch".to_string(), "loss".to_string()];
    let rows = r.loss_history.iter().enumerate().map(|(e, l)| vec![e.to_string(), l.to_string()]);
    write_text(&out.loss, &csv_bytes(&header, rows)?)?;

    if r.stop_reason == StopReason::BlowUp {
        return Err(CliError::new(
            FailureKind::Numerical,
            anyhow!("fit blew up after {} epochs; results written to {}", r.loss_history.len(), dir.display()),
        ));
    }
    Ok((r, out))
}

/// Mean and unbiased standard deviation; the std is `None` below two samples.
pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (None, None);
    }
    // shifted by the first sample so that constant columns come out exact
    let shift = xs[0];
    let offset = xs.iter().map(|x| x - shift).sum::<f64>() / n as f64;
    let mean = shift + offset;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - shift - offset).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(var.sqrt()))
}

/// One experiment trial: its seed and either a fit or the error that stopped it.
pub struct Trial {
    pub index: usize,
    pub seed: u64,
    pub outcome: Result<FitResult, String>,
}

/// Runs `cfg.noise.trials` fits at `level`, trial `i` seeded with
/// `seed + i`. Results come back in trial order.
pub fn run_trials(cfg: &Config, clean: &Dataset, level: f64) -> Vec<Trial> {
    (0..cfg.noise.trials)
        .into_par_iter()
        .map(|index| {
            let seed = cfg.noise.seed.wrapping_add(index as u64);
            let outcome = add_noise(clean, NoiseSpec { level, seed })
                .map_err(CliError::from)
                .and_then(|noisy| run_fit(cfg, &noisy))
                .map_err(|e| e.to_string());
            Trial { index, seed, outcome }
        })
        .collect()
}

/// Renders the trial table, a blank line, and the summary table
/// (`parameter,true,mean,std,n`). Blown-up and failed trials are excluded
/// from the summary.
pub fn experiment_csv(cfg: &Config, trials: &[Trial]) -> CliResult<Vec<u8>> {
    let f = cfg.dynamics().tag(FailureKind::Config)?;
    let labels = param_labels(f.n_params(), &cfg.ic.family, f.dim());
    let mut header = vec!["trial".to_string(), "seed".to_string()];
    header.extend(labels.iter().cloned());
    header.extend(["final_loss", "epochs", "stop_reason", "error"].map(String::from));

    let na = |n: usize| std::iter::repeat_n("NA".to_string(), n);
    let rows = trials.iter().map(|t| {
        let mut row = vec![t.index.to_string(), t.seed.to_string()];
        match &t.outcome {
            Ok(r) => {
                row.extend(flat_params(r).iter().map(f64::to_string));
                row.extend([opt_num(r.final_loss), r.loss_history.len().to_string(), r.stop_reason.as_str().into()]);
                row.push(String::new());
            }
            Err(msg) => {
                row.extend(na(labels.len() + 2));
                row.extend(["error".to_string(), msg.clone()]);
            }
        }
        row
    });
    let mut bytes = csv_bytes(&header, rows)?;

    let tp = cfg.true_params().tag(FailureKind::Config)?;
    let truth: Vec<f64> = tp.theta.iter().copied().chain([tp.tau]).chain(tp.phi.iter().copied()).collect();
    let good: Vec<Vec<f64>> = trials
        .iter()
        .filter_map(|t| t.outcome.as_ref().ok())
        .filter(|r| r.stop_reason != StopReason::BlowUp)
        .map(flat_params)
        .collect();
    let header = ["parameter", "true", "mean", "std", "n"].map(String::from);
    let rows = labels.iter().enumerate().map(|(i, label)| {
        let column: Vec<f64> = good.iter().map(|p| p[i]).collect();
        let (mean, std) = mean_std(&column);
        vec![label.clone(), truth[i].to_string(), opt_num(mean), opt_num(std), column.len().to_string()]
    });
    bytes.push(b'\n');
    bytes.extend(csv_bytes(&header, rows)?);
    Ok(bytes)
}

/// Runs every configured noise level and writes `experiment_<level>.csv`
/// for each. `jobs` caps the worker threads (rayon's default otherwise).
pub fn experiment(cfg: &Config, jobs: Option<usize>) -> CliResult<Vec<PathBuf>> {
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let clean = clean_data(cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().tag(FailureKind::Config)?;
    let mut written = Vec::new();
    for &level in &cfg.noise.levels {
        let trials = pool.install(|| run_trials(cfg, &clean, level));
        let path = dir.join(format!("experiment_{}.csv", level_tag(level)));
        write_text(&path, &experiment_csv(cfg, &trials)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Checks the adjoint gradients at the initial guess against finite
/// differences, with the noise-free data as target.
pub fn gradcheck(cfg: &Config) -> CliResult<GradcheckReport> {
    let clean = clean_data(cfg)?;
    let f = cfg.dynamics().tag(FailureKind::Config)?;
    let h = cfg.history(f.dim()).tag(FailureKind::Config)?;
    let corrupted;
    let model: &dyn DynamicsModel = match cfg.gradcheck.corrupt_theta_jacobian {
        Some(factor) => {
            corrupted = CorruptedThetaJacobian { inner: f.as_ref(), factor };
            &corrupted
        }
        None => f.as_ref(),
    };
    let last = *clean.times().last().expect("datasets are non-empty");
    let fc = cfg.fit_config(last).tag(FailureKind::Config)?;
    let mut phi = fc.phi.clone();
    if fc.offset_from_data {
        let d = h.dim();
        let q = phi.len();
        phi[q - d..].copy_from_slice(&clean.values()[0]);
    }
    let target = CubicSpline::fit_natural(clean.times(), clean.values())?;
    let problem = Problem {
        f: model,
        history: h.as_ref(),
        target: &target,
        loss: &fc.loss,
        t_final: fc.t_final,
        n_tau: fc.n_tau,
    };
    let g = &cfg.gradcheck;
    Ok(check_problem(&problem, &fc.theta, fc.tau, &phi, g.h_rel, g.tol_theta_phi, g.tol_tau)?)
}

/// Largest relative error per block (`theta`, `tau`, `phi`) of a report.
pub fn block_maxima(report: &GradcheckReport) -> Vec<(&'static str, f64)> {
    let mut out: Vec<(&'static str, f64)> = Vec::new();
    for c in &report.components {
        let block = if c.label.starts_with("theta") {
            "theta"
        } else if c.label == "tau" {
            "tau"
        } else {
            "phi"
        };
        match out.iter_mut().find(|(b, _)| *b == block) {
            Some((_, m)) => *m = m.max(c.rel_err),
            None => out.push((block, c.rel_err)),
        }
    }
    out
}

/// Reads a dataset, tagging failures as data errors.
pub fn load_data(path: &Path) -> CliResult<Dataset> {
    read_csv(path).with_context(|| format!("reading {}", path.display())).tag(FailureKind::Data)
}
