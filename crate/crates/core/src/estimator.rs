//! Finite-time distributed averaging.
//!
//! Each agent runs
//!
//! ```text
//! r_i' = alpha_t * sum_j b_ij (r_j - r_i)^(m/n) + beta_t * sum_j b_ij (r_j - r_i)^(p/q)
//! ```
//!
//! over an unweighted connected communication graph, with odd exponents
//! `m > n` and `p < q`. The mix of a superlinear and a sublinear power
//! drives every `r_i` to the exact initial average within the settling
//! bound of [`EstimatorConfig::settling_time_bound`]; fractional powers
//! of signed arguments are the sign-preserving real roots, which the odd
//! exponents make well defined.
//!
//! The switching loop feeds per-agent metric shares in and reads the
//! global metric out. Two fidelities exist: `Ideal` aggregates exactly
//! (the estimator treated as converged), `Simulated` integrates the flow
//! with RK4.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::spectral::eigendecompose;

/// Below this difference the sublinear term is cut to zero; its slope is
/// unbounded at the origin and would otherwise dominate roundoff noise.
pub const SUBLINEAR_CUTOFF: f64 = 1e-14;
/// Default RK4 step for the simulated estimator; the sublinear power is
/// stiff near consensus.
pub const DEFAULT_ESTIMATOR_STEP: f64 = 1e-4;
/// Relative margin applied by [`tune_gains`].
pub const TUNE_MARGIN: f64 = 0.1;

/// Odd exponent pairs `(m/n, p/q)` of the estimator flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exponents {
    pub m: u32,
    pub n: u32,
    pub p: u32,
    pub q: u32,
}

impl Default for Exponents {
    /// Smallest odd values meeting `m > n` and `p < q`.
    fn default() -> Self {
        Exponents {
            m: 3,
            n: 1,
            p: 1,
            q: 3,
        }
    }
}

impl Exponents {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("m", self.m), ("n", self.n), ("p", self.p), ("q", self.q)] {
            if value == 0 || value % 2 == 0 {
                return Err(Error::NonOddExponents { name, value });
            }
        }
        if self.m <= self.n {
            return Err(Error::BadExponentOrder { relation: "m > n" });
        }
        if self.p >= self.q {
            return Err(Error::BadExponentOrder { relation: "p < q" });
        }
        Ok(())
    }

    fn superlinear(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    fn sublinear(&self) -> f64 {
        self.p as f64 / self.q as f64
    }
}

/// Sign-preserving real power of an odd/odd rational exponent.
fn signed_pow(u: f64, exponent: f64) -> f64 {
    u.signum() * u.abs().powf(exponent)
}

/// Execution fidelity of the estimator inside the switching loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Exact aggregation; the flow is treated as settled.
    Ideal,
    /// RK4 integration of the flow.
    Simulated,
}

/// Gains, exponents, and communication graph of one estimator instance.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Superlinear coupling gain.
    pub alpha: f64,
    /// Sublinear coupling gain.
    pub beta: f64,
    pub exponents: Exponents,
    /// Unweighted connected communication graph (entries 0 or 1).
    pub comm: Topology,
    pub mode: EstimatorMode,
    /// RK4 step used in `Simulated` mode.
    pub h: f64,
}

impl EstimatorConfig {
    pub fn new(
        alpha: f64,
        beta: f64,
        exponents: Exponents,
        comm: Topology,
        mode: EstimatorMode,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonpositiveStep { h: alpha });
        }
        if !(beta > 0.0) {
            return Err(Error::NonpositiveStep { h: beta });
        }
        exponents.validate()?;
        for i in 0..comm.n() {
            for j in 0..comm.n() {
                let w = comm.weights()[(i, j)];
                if w != 0.0 && w != 1.0 {
                    return Err(Error::NonBinaryWeight {
                        row: i,
                        col: j,
                        value: w,
                    });
                }
            }
        }
        Ok(Self {
            alpha,
            beta,
            exponents,
            comm,
            mode,
            h: DEFAULT_ESTIMATOR_STEP,
        })
    }

    /// Upper bound on the settling time:
    ///
    /// ```text
    /// S = ( n^((m-n)/(2n)) / alpha * n/(m-n) + 1/beta * q/(q-p) ) / lambda_2(L_A)
    /// ```
    pub fn settling_time_bound(&self) -> Result<f64> {
        if !self.comm.is_connected() {
            return Err(Error::Disconnected);
        }
        let lambda2 = eigendecompose(&self.comm)?.lambda2();
        let n = self.comm.n() as f64;
        let e = &self.exponents;
        let (m, nb, p, q) = (e.m as f64, e.n as f64, e.p as f64, e.q as f64);
        let super_term = n.powf((m - nb) / (2.0 * nb)) / self.alpha * nb / (m - nb);
        let sub_term = 1.0 / self.beta * q / (q - p);
        Ok((super_term + sub_term) / lambda2)
    }
}

/// Scales both gains equally so the settling bound lands at
/// `tau_min / (1 + margin)`; the bound is inversely proportional to a
/// common gain factor.
pub fn tune_gains(cfg: &EstimatorConfig, tau_min: f64) -> Result<EstimatorConfig> {
    if !(tau_min > 0.0) {
        return Err(Error::NonpositiveStep { h: tau_min });
    }
    let bound = cfg.settling_time_bound()?;
    let factor = bound / tau_min * (1.0 + TUNE_MARGIN);
    Ok(EstimatorConfig {
        alpha: cfg.alpha * factor,
        beta: cfg.beta * factor,
        ..cfg.clone()
    })
}

/// Integrates the estimator flow from `r0` for `t_run` with RK4 steps of
/// at most `h`.
pub fn run_estimator(
    cfg: &EstimatorConfig,
    r0: &DVector<f64>,
    t_run: f64,
    h: f64,
) -> Result<DVector<f64>> {
    if h <= 0.0 {
        return Err(Error::NonpositiveStep { h });
    }
    if t_run < 0.0 {
        return Err(Error::NonpositiveStep { h: t_run });
    }
    let n = cfg.comm.n();
    if r0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: r0.len(),
        });
    }
    cfg.exponents.validate()?;
    if !cfg.comm.is_connected() {
        return Err(Error::Disconnected);
    }

    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && cfg.comm.weights()[(i, j)] > 0.0)
                .collect()
        })
        .collect();
    let sup = cfg.exponents.superlinear();
    let sub = cfg.exponents.sublinear();
    let cube = cfg.exponents == Exponents::default();

    let rhs = |r: &DVector<f64>, out: &mut DVector<f64>| {
        for i in 0..n {
            let mut acc = 0.0;
            for &j in &neighbours[i] {
                let u = r[j] - r[i];
                // Odd/odd powers reduce to a cube and a cube root for the
                // default exponents; powf otherwise.
                let hi = if cube { u * u * u } else { signed_pow(u, sup) };
                let lo = if u.abs() < SUBLINEAR_CUTOFF {
                    0.0
                } else if cube {
                    u.cbrt()
                } else {
                    signed_pow(u, sub)
                };
                acc += cfg.alpha * hi + cfg.beta * lo;
            }
            out[i] = acc;
        }
    };

    let mut r = r0.clone();
    if t_run == 0.0 {
        return Ok(r);
    }
    let steps = (t_run / h).ceil().max(1.0) as usize;
    let dt = t_run / steps as f64;
    let mut k1 = DVector::zeros(n);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    let mut tmp = DVector::zeros(n);
    for _ in 0..steps {
        rhs(&r, &mut k1);
        tmp.copy_from(&r);
        tmp.axpy(0.5 * dt, &k1, 1.0);
        rhs(&tmp, &mut k2);
        tmp.copy_from(&r);
        tmp.axpy(0.5 * dt, &k2, 1.0);
        rhs(&tmp, &mut k3);
        tmp.copy_from(&r);
        tmp.axpy(dt, &k3, 1.0);
        rhs(&tmp, &mut k4);
        for i in 0..n {
            r[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
    }
    Ok(r)
}

/// Turns per-agent metric shares into the global `(F, Fdot)` pair.
///
/// In `Ideal` mode this is the exact sum. In `Simulated` mode two
/// estimator instances run for `tau_min` of flow time; each agent then
/// holds `F/n`, and the first agent's output is scaled back by `n`.
pub fn estimate_global_metrics(
    f_locals: &DVector<f64>,
    fdot_locals: &DVector<f64>,
    cfg: &EstimatorConfig,
    tau_min: f64,
) -> Result<(f64, f64)> {
    let n = cfg.comm.n();
    if f_locals.len() != n || fdot_locals.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: f_locals.len(),
        });
    }
    match cfg.mode {
        EstimatorMode::Ideal => Ok((f_locals.sum(), fdot_locals.sum())),
        EstimatorMode::Simulated => {
            let rf = run_estimator(cfg, f_locals, tau_min, cfg.h)?;
            let rd = run_estimator(cfg, fdot_locals, tau_min, cfg.h)?;
            Ok((n as f64 * rf[0], n as f64 * rd[0]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn path(n: usize) -> Topology {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            w[(i, i + 1)] = 1.0;
            w[(i + 1, i)] = 1.0;
        }
        Topology::from_weights(w).unwrap()
    }

    fn config(comm: Topology) -> EstimatorConfig {
        EstimatorConfig::new(
            1.0,
            1.0,
            Exponents::default(),
            comm,
            EstimatorMode::Simulated,
        )
        .unwrap()
    }

    #[test]
    fn settling_bound_on_the_two_agent_path() {
        // lambda_2 = 2; superlinear term 2 * 1/2 = 1, sublinear 3/2.
        let cfg = config(path(2));
        let bound = cfg.settling_time_bound().unwrap();
        assert!((bound - 1.25).abs() < 1e-12);
    }

    #[test]
    fn settling_bound_scales_inversely_with_gains() {
        let base = config(path(2));
        let double = EstimatorConfig {
            alpha: 2.0,
            beta: 2.0,
            ..base.clone()
        };
        assert!(
            (double.settling_time_bound().unwrap() - base.settling_time_bound().unwrap() / 2.0)
                .abs()
                < 1e-12
        );
        // Doubling beta alone halves only the sublinear term.
        let beta_only = EstimatorConfig {
            beta: 2.0,
            ..base.clone()
        };
        let expected = (1.0 + 1.5 / 2.0) / 2.0;
        assert!((beta_only.settling_time_bound().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn tuning_meets_the_dwell_budget() {
        let cfg = config(path(2));

        // Bound already equal to the budget: gains get the 10% margin bump.
        let tuned = tune_gains(&cfg, 1.25).unwrap();
        assert!((tuned.alpha - 1.1).abs() < 1e-12);
        assert!((tuned.beta - 1.1).abs() < 1e-12);
        assert!(tuned.settling_time_bound().unwrap() <= 1.25);

        // A tight budget scales both gains linearly: 1.25/0.125 * 1.1.
        let tuned = tune_gains(&cfg, 0.125).unwrap();
        assert!((tuned.alpha - 11.0).abs() < 1e-12);
        assert!(tuned.settling_time_bound().unwrap() <= 0.125);

        // A loose budget leaves the bound under budget (gains may shrink).
        let tuned = tune_gains(&cfg, 10.0).unwrap();
        assert!(tuned.settling_time_bound().unwrap() <= 10.0);
    }

    #[test]
    fn equal_inputs_are_a_fixed_point() {
        let cfg = config(path(4));
        let r0 = DVector::from_element(4, 2.5);
        let out = run_estimator(&cfg, &r0, 1.0, 1e-3).unwrap();
        assert_eq!(out, r0);
    }

    #[test]
    fn two_agents_settle_to_the_average_within_the_bound() {
        let cfg = config(path(2));
        let bound = cfg.settling_time_bound().unwrap();
        let r0 = DVector::from_row_slice(&[1.0, 3.0]);
        let out = run_estimator(&cfg, &r0, bound, DEFAULT_ESTIMATOR_STEP).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-6 && (out[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_sum_inputs_settle_to_zero() {
        let cfg = config(path(3));
        let bound = cfg.settling_time_bound().unwrap();
        let r0 = DVector::from_row_slice(&[1.0, 0.5, -1.5]);
        let out = run_estimator(&cfg, &r0, bound, 1e-4).unwrap();
        assert!(out.amax() < 1e-6);
    }

    #[test]
    fn mean_is_conserved_along_the_flow() {
        let cfg = config(path(5));
        let r0 = DVector::from_row_slice(&[4.0, -1.0, 0.5, 2.0, 7.5]);
        let mean0 = r0.mean();
        for t in [0.1, 0.5, 2.0] {
            let out = run_estimator(&cfg, &r0, t, 1e-3).unwrap();
            assert!((out.mean() - mean0).abs() <= 1e-8);
        }
    }

    #[test]
    fn flow_is_odd_symmetric() {
        let cfg = config(path(4));
        let r0 = DVector::from_row_slice(&[1.0, -2.0, 0.25, 3.0]);
        let pos = run_estimator(&cfg, &r0, 0.7, 1e-3).unwrap();
        let neg = run_estimator(&cfg, &(-&r0), 0.7, 1e-3).unwrap();
        assert!((&pos + &neg).amax() < 1e-12);
    }

    #[test]
    fn exponent_validation() {
        let bad = Exponents {
            m: 2,
            n: 1,
            p: 1,
            q: 3,
        };
        assert!(matches!(
            bad.validate().unwrap_err(),
            Error::NonOddExponents {
                name: "m",
                value: 2
            }
        ));
        let bad = Exponents {
            m: 1,
            n: 3,
            p: 1,
            q: 3,
        };
        assert!(matches!(
            bad.validate().unwrap_err(),
            Error::BadExponentOrder { relation: "m > n" }
        ));
        let bad = Exponents {
            m: 3,
            n: 1,
            p: 3,
            q: 1,
        };
        assert!(matches!(
            bad.validate().unwrap_err(),
            Error::BadExponentOrder { relation: "p < q" }
        ));
    }

    #[test]
    fn non_binary_comm_weights_are_rejected() {
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = 0.5;
        w[(1, 0)] = 0.5;
        let t = Topology::from_weights(w).unwrap();
        assert!(matches!(
            EstimatorConfig::new(1.0, 1.0, Exponents::default(), t, EstimatorMode::Ideal)
                .unwrap_err(),
            Error::NonBinaryWeight { .. }
        ));
    }

    #[test]
    fn disconnected_comm_graph_is_rejected() {
        let t = Topology::from_weights(DMatrix::zeros(3, 3)).unwrap();
        let cfg = EstimatorConfig::new(1.0, 1.0, Exponents::default(), t, EstimatorMode::Simulated)
            .unwrap();
        assert!(matches!(
            cfg.settling_time_bound().unwrap_err(),
            Error::Disconnected
        ));
        assert!(matches!(
            run_estimator(&cfg, &DVector::zeros(3), 1.0, 1e-3).unwrap_err(),
            Error::Disconnected
        ));
    }

    #[test]
    fn ideal_aggregation_is_bit_exact() {
        let mut cfg = config(path(4));
        cfg.mode = EstimatorMode::Ideal;
        let f = DVector::from_row_slice(&[0.1, 0.2, 0.3, 0.4]);
        let fd = DVector::from_row_slice(&[-0.3, 0.7, 0.1, -0.2]);
        let (gf, gfd) = estimate_global_metrics(&f, &fd, &cfg, 1.0).unwrap();
        assert_eq!(gf, f.sum());
        assert_eq!(gfd, fd.sum());

        let zero = DVector::zeros(4);
        assert_eq!(
            estimate_global_metrics(&zero, &zero, &cfg, 1.0).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn simulated_aggregation_recovers_the_global_metric_of_the_example_state() {
        use crate::dynamics::{to_fluctuations, SystemState};
        use crate::graph::star_plus_edge;
        use crate::metric::{metric_f, metric_f_locals};
        use nalgebra::DVector;

        let x = DVector::from_row_slice(&[4.0, 2.0, 3.0, 4.0]);
        let s = SystemState::new(0.0, x.clone(), x, 0);
        let f = to_fluctuations(&s, &s).unwrap();
        let locals = metric_f_locals(&f, 0.5);
        let global = metric_f(&f, 0.5);

        let tau_min = std::f64::consts::PI + 0.5;
        let mut cfg = tune_gains(&config(star_plus_edge(1.0, 0.0).support()), tau_min).unwrap();
        cfg.h = 1e-5; // keep the fixed-step floor well under the tolerance
        let (est, _) = estimate_global_metrics(&locals, &locals, &cfg, tau_min).unwrap();
        assert!((est - global).abs() < 1e-6, "{est} vs {global}");
    }

    #[test]
    fn simulated_aggregation_approaches_the_exact_sum() {
        let mut cfg = tune_gains(&config(path(4)), 1.5).unwrap();
        // Tuning raised the gains; shrink the step to keep the fixed-step
        // chattering floor (which scales like (gain * h)^(3/2)) well under
        // the tolerance.
        cfg.h = 1e-5;
        let f = DVector::from_row_slice(&[0.1, 0.2, 0.3, 0.4]);
        let fd = DVector::from_row_slice(&[-0.3, 0.7, 0.1, -0.2]);
        let (gf, gfd) = estimate_global_metrics(&f, &fd, &cfg, 1.5).unwrap();
        assert!((gf - f.sum()).abs() < 1e-6);
        assert!((gfd - fd.sum()).abs() < 1e-6);
    }
}
