//! Scenario files: the JSON front door of every subcommand.
//!
//! A scenario names a topology set, initial conditions, and optional
//! plan/metric/estimator/horizon sections. Mode indices in scenario
//! files and all CLI flags are one-based, matching the usual
//! `sigma(t) in {1, ..., s}` convention; the library API is zero-based
//! and the conversion happens here.

use nalgebra::DVector;
use serde::Deserialize;
use std::path::{Path, PathBuf};

use topoflock_core::dynamics::{DEFAULT_DT_SAMPLE, DEFAULT_RK4_STEP};
use topoflock_core::estimator::DEFAULT_ESTIMATOR_STEP;
use topoflock_core::metric::{choose_varpi, VARPI_MARGIN_DEFAULT};
use topoflock_core::orchestrator::DEFAULT_T_MAX;
use topoflock_core::spectral::validate_topology_set;
use topoflock_core::{
    EstimatorConfig, EstimatorMode, Exponents, MetricConfig, Topology, TopologySet,
};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub topologies: Vec<Topology>,
    pub initial: InitialSection,
    /// One-based index of the mode active at t = 0 (default: 1).
    #[serde(default)]
    pub initial_mode: Option<usize>,
    #[serde(default)]
    pub plan: Option<PlanDirective>,
    #[serde(default)]
    pub metric: Option<MetricSection>,
    #[serde(default)]
    pub estimator: Option<EstimatorSection>,
    #[serde(default)]
    pub horizon: Option<HorizonSection>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// Either explicit scalars (all three of alpha/beta/kappa) or a search
/// target for them.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDirective {
    pub tau_hat_max: f64,
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub kappa: Option<u32>,
}

fn default_m() -> u32 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    /// Position weighting; derived from the spectra when omitted.
    #[serde(default)]
    pub varpi: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub fdot_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_mode")]
    pub mode: EstimatorMode,
    #[serde(default = "default_gain")]
    pub alpha: f64,
    #[serde(default = "default_gain")]
    pub beta: f64,
    /// `[m, n, p, q]`, all odd, `m > n`, `p < q`.
    #[serde(default)]
    pub exponents: Option<[u32; 4]>,
    /// Unweighted communication graph; defaults to the support of the
    /// first topology.
    #[serde(default)]
    pub comm: Option<Topology>,
    #[serde(default)]
    pub h: Option<f64>,
}

fn default_mode() -> EstimatorMode {
    EstimatorMode::Ideal
}

fn default_gain() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub dt_sample: Option<f64>,
    #[serde(default)]
    pub h: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub trace_csv: Option<PathBuf>,
    #[serde(default)]
    pub summary_json: Option<PathBuf>,
}

/// Simulation horizons with defaults applied.
#[derive(Debug, Clone, Copy)]
pub struct Horizon {
    pub t_end: f64,
    pub t_max: f64,
    pub dt_sample: f64,
    pub h: f64,
}

pub const DEFAULT_T_END: f64 = 20.0;

/// A scenario with its topology set validated and defaults resolved.
pub struct Scenario {
    pub name: String,
    pub set: TopologySet,
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    /// Zero-based initial mode.
    pub initial_mode: usize,
    pub plan: Option<PlanDirective>,
    pub varpi: f64,
    /// Present only when the scenario carries a metric section with delta.
    pub delta: Option<f64>,
    pub fdot_tol: Option<f64>,
    pub estimator: EstimatorConfig,
    pub horizon: Horizon,
    pub seed: u64,
    pub trace_csv: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        let file: ScenarioFile = serde_json::from_str(&text)
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, CliError> {
        let set = validate_topology_set(file.topologies).map_err(CliError::validation)?;
        let n = set.n();

        if file.initial.x.len() != n || file.initial.v.len() != n {
            return Err(CliError::parse(format!(
                "initial condition length {} does not match n = {n}",
                file.initial.x.len()
            )));
        }
        let x0 = DVector::from_row_slice(&file.initial.x);
        let v0 = DVector::from_row_slice(&file.initial.v);

        let initial_mode = match file.initial_mode {
            None => 0,
            Some(0) => {
                return Err(CliError::parse(
                    "initial_mode is one-based; 0 is not a valid mode".into(),
                ))
            }
            Some(r) if r > set.modes() => {
                return Err(CliError::parse(format!(
                    "initial_mode {r} exceeds the {} available topologies",
                    set.modes()
                )))
            }
            Some(r) => r - 1,
        };

        let metric = file.metric.as_ref();
        let varpi = match metric.and_then(|m| m.varpi) {
            Some(v) => v,
            None => choose_varpi(&set, VARPI_MARGIN_DEFAULT).map_err(CliError::validation)?,
        };

        let est = file.estimator.as_ref();
        let exponents = match est.and_then(|e| e.exponents) {
            Some([m, nb, p, q]) => Exponents { m, n: nb, p, q },
            None => Exponents::default(),
        };
        let comm = est
            .and_then(|e| e.comm.clone())
            .unwrap_or_else(|| set.topology(0).support());
        let mut estimator = EstimatorConfig::new(
            est.map_or(1.0, |e| e.alpha),
            est.map_or(1.0, |e| e.beta),
            exponents,
            comm,
            est.map_or(EstimatorMode::Ideal, |e| e.mode),
        )
        .map_err(CliError::validation)?;
        if let Some(h) = est.and_then(|e| e.h) {
            estimator.h = h;
        } else {
            estimator.h = DEFAULT_ESTIMATOR_STEP;
        }

        let hz = file.horizon;
        let horizon = Horizon {
            t_end: hz.and_then(|h| h.t_end).unwrap_or(DEFAULT_T_END),
            t_max: hz.and_then(|h| h.t_max).unwrap_or(DEFAULT_T_MAX),
            dt_sample: hz.and_then(|h| h.dt_sample).unwrap_or(DEFAULT_DT_SAMPLE),
            h: hz.and_then(|h| h.h).unwrap_or(DEFAULT_RK4_STEP),
        };

        Ok(Scenario {
            name: file.name,
            set,
            x0,
            v0,
            initial_mode,
            plan: file.plan,
            varpi,
            delta: metric.and_then(|m| m.delta),
            fdot_tol: metric.and_then(|m| m.fdot_tol),
            estimator,
            horizon,
            seed: file.seed.unwrap_or(0),
            trace_csv: file.output.as_ref().and_then(|o| o.trace_csv.clone()),
            summary_json: file.output.as_ref().and_then(|o| o.summary_json.clone()),
        })
    }

    /// Metric configuration for switching runs; requires `delta`.
    pub fn metric_config(&self) -> Result<MetricConfig, CliError> {
        let delta = self.delta.ok_or_else(|| {
            CliError::parse("this command needs a metric section with `delta`".into())
        })?;
        let mut cfg = MetricConfig::new(self.varpi, delta);
        if let Some(tol) = self.fdot_tol {
            cfg.fdot_tol = tol;
        }
        Ok(cfg)
    }
}
