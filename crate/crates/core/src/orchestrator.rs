//! The decentralized time-dependent topology-switching loop.
//!
//! Each loop turn at a switch instant `t_k`:
//!
//! 1. every agent forms its local metric shares `F_i(t_k)` and
//!    `Fdot_i(t_k)` under the active topology;
//! 2. the finite-time estimator aggregates them; the global `(F, Fdot)`
//!    is available by `t_k + tau_min`, inside the dwell interval;
//! 3. if `F <= delta` the loop stops (delta-consensus);
//! 4. otherwise the next topology is chosen: when the `Fdot = 0` branch
//!    fires, the target must have all-distinct Laplacian eigenvalues (and
//!    differ from the current mode); otherwise any different mode works —
//!    both choices walk round-robin order;
//! 5. the physical state propagates to `t_k + tau_{sigma(t_k)}`, where
//!    the switch happens.
//!
//! The loop is Zeno-free by construction: consecutive switch instants
//! are separated by at least `tau_min > 0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::{
    to_fluctuations, FluctuationState, SystemState, Trace, TraceBuilder, DEFAULT_DT_SAMPLE,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_global_metrics, tune_gains, EstimatorConfig};
use crate::metric::{metric_f, metric_f_locals, metric_fdot_locals, MetricConfig};
use crate::spectral::TopologySet;
use crate::switching::SwitchPlan;

/// Default horizon cap.
pub const DEFAULT_T_MAX: f64 = 500.0;
/// A horizon-capped run counts as asymptotic progress when the final
/// metric fell below this fraction of its initial value.
pub const PROGRESS_RATIO: f64 = 1e-3;

/// Everything one switching run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub set: TopologySet,
    pub plan: SwitchPlan,
    pub metric: MetricConfig,
    pub estimator: EstimatorConfig,
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    /// Zero-based mode active at `t = 0`.
    pub initial_mode: usize,
    /// Horizon cap; a run that reaches it reports progress, not failure.
    pub t_max: f64,
    pub dt_sample: f64,
    /// Reserved for randomized variants; the loop itself is deterministic.
    pub seed: u64,
}

impl RunConfig {
    pub fn new(
        set: TopologySet,
        plan: SwitchPlan,
        metric: MetricConfig,
        estimator: EstimatorConfig,
        x0: DVector<f64>,
        v0: DVector<f64>,
    ) -> Self {
        Self {
            set,
            plan,
            metric,
            estimator,
            x0,
            v0,
            initial_mode: 0,
            t_max: DEFAULT_T_MAX,
            dt_sample: DEFAULT_DT_SAMPLE,
            seed: 0,
        }
    }
}

/// Outcome classification of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// The metric fell to `delta` at a finite switch instant.
    DeltaConsensus,
    /// Horizon reached with the metric below [`PROGRESS_RATIO`] of its
    /// initial value.
    AsymptoticProgress,
    /// Horizon reached without that much progress.
    HorizonReached,
}

/// When the loop stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppedAt {
    /// Switch instant at which the terminating metric was measured.
    Time(f64),
    /// The run was cut by the horizon cap.
    Horizon,
}

impl Serialize for StoppedAt {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StoppedAt::Time(t) => s.serialize_f64(*t),
            StoppedAt::Horizon => s.serialize_str("horizon"),
        }
    }
}

/// One estimator round: the global metric pair attributed to switch
/// instant `t`, measured under `mode`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricEstimate {
    pub t: f64,
    pub mode: usize,
    pub f: f64,
    pub fdot: f64,
    /// Whether the `Fdot = 0` branch fired at this round.
    pub fdot_branch: bool,
}

/// Result of a switching run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Trace,
    pub switch_count: usize,
    pub stopped_at: StoppedAt,
    /// Last estimator-returned global metric.
    pub final_f: f64,
    pub verdict: Verdict,
    /// Estimator outputs per loop turn, in order.
    pub estimates: Vec<MetricEstimate>,
}

/// Runs the decentralized switching loop.
pub fn run_algorithm1(cfg: &RunConfig) -> Result<RunResult> {
    let n = cfg.set.n();
    let s = cfg.set.modes();
    if cfg.x0.len() != n || cfg.v0.len() != n || cfg.estimator.comm.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: cfg.x0.len().min(cfg.estimator.comm.n()),
        });
    }
    if cfg.plan.modes() != s {
        return Err(Error::SizeMismatch {
            expected: s,
            found: cfg.plan.modes(),
        });
    }
    if cfg.initial_mode >= s {
        return Err(Error::UnknownMode {
            mode: cfg.initial_mode,
            modes: s,
        });
    }
    if cfg.t_max <= 0.0 {
        return Err(Error::NonpositiveStep { h: cfg.t_max });
    }
    cfg.metric.validate(&cfg.set)?;
    let estimator = tune_gains(&cfg.estimator, cfg.plan.tau_min)?;

    let varpi = cfg.metric.varpi;
    let metric_fn = move |f: &FluctuationState| metric_f(f, varpi);
    let metric_dyn: &dyn Fn(&FluctuationState) -> f64 = &metric_fn;
    let mut builder = TraceBuilder::new(cfg.dt_sample, metric_dyn)?;

    let initial = SystemState::new(0.0, cfg.x0.clone(), cfg.v0.clone(), cfg.initial_mode);
    let mut state = to_fluctuations(&initial, &initial)?;
    let mut mode = cfg.initial_mode;
    builder.push(&state, mode);

    let f_initial = metric_f(&state, varpi);
    let mut estimates: Vec<MetricEstimate> = Vec::new();
    let mut switch_count = 0usize;

    loop {
        // Decentralized measurement at the current switch instant.
        let f_locals = metric_f_locals(&state, varpi);
        let fdot_locals = metric_fdot_locals(&state, cfg.set.topology(mode), varpi);
        let (f_k, fdot_k) =
            estimate_global_metrics(&f_locals, &fdot_locals, &estimator, cfg.plan.tau_min)?;
        let fdot_branch = cfg.metric.fdot_is_zero(f_k, fdot_k);
        estimates.push(MetricEstimate {
            t: state.t,
            mode,
            f: f_k,
            fdot: fdot_k,
            fdot_branch,
        });

        if f_k <= cfg.metric.delta {
            return Ok(RunResult {
                stopped_at: StoppedAt::Time(state.t),
                final_f: f_k,
                verdict: Verdict::DeltaConsensus,
                switch_count,
                estimates,
                trace: builder.finish(),
            });
        }

        let t_next = state.t + cfg.plan.dwell[mode];
        if t_next > cfg.t_max {
            state = builder.segment_closed_form(&state, cfg.set.spectrum(mode), cfg.t_max, mode)?;
            builder.push(&state, mode);
            let f_end = metric_f(&state, varpi);
            let verdict = if f_end <= PROGRESS_RATIO * f_initial {
                Verdict::AsymptoticProgress
            } else {
                Verdict::HorizonReached
            };
            return Ok(RunResult {
                stopped_at: StoppedAt::Horizon,
                final_f: f_end,
                verdict,
                switch_count,
                estimates,
                trace: builder.finish(),
            });
        }

        // Choose the next topology; the zero-derivative branch must land
        // on a mode with all-distinct eigenvalues.
        let next = if fdot_branch {
            (1..s)
                .map(|step| (mode + step) % s)
                .find(|&r| r != mode && cfg.set.distinct_flags()[r])
                .ok_or(Error::NoDistinctEigTopology)?
        } else {
            (mode + 1) % s
        };

        state = builder.segment_closed_form(&state, cfg.set.spectrum(mode), t_next, mode)?;
        builder.mark_switch(t_next);
        builder.push(&state, next);
        mode = next;
        switch_count += 1;
    }
}

/// Pairwise position/velocity agreement over the trailing `window` of a
/// trace: true iff every pairwise difference stays within `tol`.
pub fn check_second_order_consensus(trace: &Trace, tol: f64, window: f64) -> bool {
    let t_end = trace.final_sample().t;
    trace
        .samples
        .iter()
        .filter(|s| s.t >= t_end - window)
        .all(|s| {
            let spread = |v: &DVector<f64>| v.max() - v.min();
            spread(&s.x) <= tol && spread(&s.v) <= tol
        })
}

/// Earliest sample at which the trace's metric column is at or below
/// `delta`.
pub fn check_delta_consensus(trace: &Trace, delta: f64) -> (bool, Option<f64>) {
    match trace.samples.iter().find(|s| s.metric <= delta) {
        Some(s) => (true, Some(s.t)),
        None => (false, None),
    }
}

/// The pairwise disagreement functional
/// `V = sum_{i<j} (x_i - x_j)^2 + sum_{i<j} (v_i - v_j)^2`.
pub fn lyapunov_v(x: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += (x[i] - x[j]).powi(2) + (v[i] - v[j]).powi(2);
        }
    }
    acc
}
