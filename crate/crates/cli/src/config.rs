//! TOML run configuration.
//!
//! ```toml
//! [model]
//! name = "exponential"        # exponential | logistic | enso | cheyne | hiv
//! # m = 8                     # cheyne only
//! # [model.constants]         # hiv only, any subset of k, m, delta, c, t0, n_p, n
//!
//! [ic]
//! family = "affine"           # constant | affine | periodic
//!
//! [true_params]               # used by simulate, experiment, gradcheck
//! theta = [-2.0, -2.0]
//! tau = 1.0
//! phi = [1.5, 4.0]
//!
//! [init_params]
//! theta = [-1.5, -2.5]
//! tau = 2.0
//! phi = [2.25, 2.8]
//! offset_from_data = false    # overwrite the trailing d entries of phi with the first sample
//!
//! [grid]
//! t_final = 10.0              # horizon of the generated data
//! solve_dt = 0.1              # generator step, must divide tau
//! n_tau = 10                  # fit solver steps per delay
//! # fit_t_final = 9.9         # default: last data time
//!
//! [optimizer]
//! n_epochs = 500
//! lr = 0.03
//! l_min = 0.01
//! beta1 = 0.9
//! beta2 = 0.999
//! tau_floor = 0.001
//!
//! [loss]
//! running = "l2"              # l1 | l2 (squared) | linf | euclidean
//! # terminal = "l2"
//! # weights = [1.0]
//! # terminal_weights = [1.0]
//!
//! [noise]
//! levels = [0.1, 0.3, 0.9]
//! trials = 20
//! seed = 0
//!
//! [output]
//! dir = "out"
//!
//! [gradcheck]
//! h_rel = 1e-4
//! tol_theta_phi = 1e-2
//! tol_tau = 5e-2
//! # corrupt_theta_jacobian = 2.0   # fault injection
//! ```
//!
//! Every section except `model`, `ic` and `init_params` may be omitted.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ddeid::loss::{LossConfig, NormKind, NormType};
use ddeid::models::{dynamics_by_name, initial_condition_by_name, CheyneStokes, Hiv, HivConstants};
use ddeid::trainer::FitConfig;
use ddeid::{DynamicsModel, InitialConditionModel};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub ic: IcSection,
    pub true_params: Option<ParamSection>,
    pub init_params: InitSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    pub m: Option<i32>,
    pub constants: Option<HivConstants>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcSection {
    pub family: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSection {
    #[serde(default)]
    pub theta: Vec<f64>,
    pub tau: f64,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(default)]
    pub theta: Vec<f64>,
    pub tau: f64,
    pub phi: Vec<f64>,
    #[serde(default)]
    pub offset_from_data: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub t_final: f64,
    pub solve_dt: f64,
    pub n_tau: usize,
    pub fit_t_final: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { t_final: 10.0, solve_dt: 0.1, n_tau: 10, fit_t_final: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub n_epochs: usize,
    pub lr: f64,
    pub l_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau_floor: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { n_epochs: 500, lr: 0.03, l_min: 0.01, beta1: 0.9, beta2: 0.999, tau_floor: 1e-3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub running: NormType,
    pub terminal: Option<NormType>,
    pub weights: Option<Vec<f64>>,
    pub terminal_weights: Option<Vec<f64>>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self { running: NormType::L2, terminal: None, weights: None, terminal_weights: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub levels: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { levels: vec![0.1, 0.3, 0.9], trials: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub h_rel: f64,
    pub tol_theta_phi: f64,
    pub tol_tau: f64,
    /// Test hook: scale `∂F/∂θ` by this factor before checking.
    pub corrupt_theta_jacobian: Option<f64>,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self { h_rel: 1e-4, tol_theta_phi: 1e-2, tol_tau: 5e-2, corrupt_theta_jacobian: None }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn check(&self) -> anyhow::Result<()> {
        let f = self.dynamics()?;
        let h = self.history(f.dim())?;
        let expect = |what: &str, got: usize, want: usize| -> anyhow::Result<()> {
            if got != want {
                bail!("{what} has {got} entries, model '{}' needs {want}", self.model.name);
            }
            Ok(())
        };
        expect("init_params.theta", self.init_params.theta.len(), f.n_params())?;
        expect("init_params.phi", self.init_params.phi.len(), h.n_params())?;
        if let Some(tp) = &self.true_params {
            expect("true_params.theta", tp.theta.len(), f.n_params())?;
            expect("true_params.phi", tp.phi.len(), h.n_params())?;
        }
        if !(self.grid.solve_dt > 0.0 && self.grid.t_final > 0.0) {
            bail!("grid.solve_dt and grid.t_final must be positive");
        }
        if self.noise.levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            bail!("noise levels must be non-negative");
        }
        self.loss_config()?;
        Ok(())
    }

    pub fn true_params(&self) -> anyhow::Result<&ParamSection> {
        self.true_params.as_ref().context("config has no [true_params] section")
    }

    /// The dynamics model, with any constants overridden from the config.
    pub fn dynamics(&self) -> anyhow::Result<Box<dyn DynamicsModel>> {
        let m = &self.model;
        if m.m.is_some() && m.name != "cheyne" {
            bail!("model.m only applies to 'cheyne', not '{}'", m.name);
        }
        if m.constants.is_some() && m.name != "hiv" {
            bail!("model.constants only applies to 'hiv', not '{}'", m.name);
        }
        Ok(match m.name.as_str() {
            "cheyne" => Box::new(CheyneStokes { m: m.m.unwrap_or(CheyneStokes::default().m) }),
            "hiv" => Box::new(Hiv { constants: m.constants.unwrap_or_default() }),
            name => dynamics_by_name(name)?,
        })
    }

    pub fn history(&self, dim: usize) -> anyhow::Result<Box<dyn InitialConditionModel>> {
        Ok(initial_condition_by_name(&self.ic.family, dim)?)
    }

    pub fn loss_config(&self) -> anyhow::Result<LossConfig> {
        let norm = |kind: NormType, w: &Option<Vec<f64>>| -> anyhow::Result<NormKind> {
            Ok(match w {
                Some(w) => NormKind::weighted(kind, w.clone())?,
                None => NormKind::new(kind),
            })
        };
        let l = &self.loss;
        if l.terminal.is_none() && l.terminal_weights.is_some() {
            bail!("loss.terminal_weights given without loss.terminal");
        }
        Ok(LossConfig {
            running: norm(l.running, &l.weights)?,
            terminal: l.terminal.map(|k| norm(k, &l.terminal_weights)).transpose()?,
        })
    }

    /// Fit settings for data whose last sample is at `last_time`.
    pub fn fit_config(&self, last_time: f64) -> anyhow::Result<FitConfig> {
        let ip = &self.init_params;
        let t_final = self.grid.fit_t_final.unwrap_or(last_time);
        let mut cfg =
            FitConfig::new(&self.model.name, &self.ic.family, ip.theta.clone(), ip.tau, ip.phi.clone(), t_final);
        cfg.offset_from_data = ip.offset_from_data;
        cfg.n_tau = self.grid.n_tau;
        let o = &self.optimizer;
        cfg.n_epochs = o.n_epochs;
        cfg.lr0 = o.lr;
        cfg.l_min = o.l_min;
        cfg.beta1 = o.beta1;
        cfg.beta2 = o.beta2;
        cfg.tau_floor = o.tau_floor;
        cfg.loss = self.loss_config()?;
        Ok(cfg)
    }
}

/// Column names for the flat `θ ∥ τ ∥ φ` vector.
pub fn param_labels(n_theta: usize, family: &str, dim: usize) -> Vec<String> {
    let mut out: Vec<String> = (0..n_theta).map(|i| format!("theta{i}")).collect();
    out.push("tau".into());
    let blocks: &[&str] = match family {
        "affine" => &["a", "b"],
        "periodic" => &["A", "omega", "b"],
        _ => &["b"],
    };
    for block in blocks {
        out.extend((0..dim).map(|i| format!("{block}{i}")));
    }
    out
}
