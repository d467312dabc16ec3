//! Dwell-time planning for the topology-switching signal.
//!
//! A plan fixes scalars `(alpha, beta, kappa, tau_hat_max, m)` and gives
//! every mode the dwell time `tau_r = tau_hat_max + m * T_r / 2`, where
//! `T_r` is the mode's oscillation period. Feasibility is three strict
//! scalar conditions:
//!
//! * `0 < tau_hat_max < -ln(beta) / alpha`,
//! * `tau_r > (beta^(-1/kappa) - 1) * kappa / (alpha - xi)` for every mode,
//! * `xi < alpha`, with `xi = max_{r,i} |1 - lambda_i(L_r)|`.
//!
//! The same scalars also satisfy, eigenvalue by eigenvalue, the
//! inequalities obtained from the block matrix conditions of the
//! underlying switched-systems stability lemma under the diagonal ansatz
//! `P_{r,q} = beta^(-q/kappa) h I`; [`certificate_report`] evaluates that
//! reduction directly. [`verify_prop1`] checks the companion infeasibility
//! fact: `g(beta) = exp(kappa (1 - beta^(-1/kappa))) - beta` is strictly
//! negative on (0,1), so the lemma alone (without exploiting periodicity)
//! can never certify these oscillator networks.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dynamics::SwitchSignal;
use crate::error::{CertViolation, Error, Result};
use crate::spectral::TopologySet;

/// Strict inequalities must hold with at least this much absolute slack.
pub const STRICT_SLACK: f64 = 1e-12;
/// Relative margin used by the feasibility search.
pub const SEARCH_MARGIN: f64 = 0.05;
const SEARCH_ALPHA_GROWTH: f64 = 1.5;
const SEARCH_ALPHA_STEPS: usize = 64;
const SEARCH_KAPPA_MAX: u32 = 64;

/// Scalars of a dwell-time strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchParams {
    /// Divergence-rate bound `alpha > 0`.
    pub alpha: f64,
    /// Contraction factor `beta` in (0, 1) applied across switches.
    pub beta: f64,
    /// Discretization depth of the piecewise Lyapunov certificate.
    pub kappa: u32,
    /// Base dwell `tau_hat_max > 0`.
    pub tau_hat_max: f64,
    /// Half-period multiplier `m >= 1` (global across modes).
    pub m: u32,
    /// Spectral bound `xi` of the topology set.
    pub xi: f64,
}

/// Spectral bound `xi = max_{r, i} max(1 - lambda_i, lambda_i - 1)` over
/// all modes and all eigenvalues.
pub fn compute_xi(ts: &TopologySet) -> f64 {
    ts.spectra()
        .iter()
        .flat_map(|sd| sd.eigenvalues().iter())
        .map(|&lam| (1.0 - lam).max(lam - 1.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Slack of each strict inequality in a verified plan (all positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSlacks {
    /// `-ln(beta)/alpha - tau_hat_max`.
    pub cond22: f64,
    /// Per mode: `tau_r - (beta^(-1/kappa) - 1) * kappa / (alpha - xi)`.
    pub cond23: Vec<f64>,
    /// `alpha - xi`.
    pub cond24: f64,
}

/// A verified dwell-time plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPlan {
    pub params: SwitchParams,
    /// Per-mode dwell times `tau_r = tau_hat_max + m * T_r / 2`.
    pub dwell: Vec<f64>,
    pub tau_min: f64,
    pub tau_max: f64,
    pub slacks: PlanSlacks,
}

impl SwitchPlan {
    pub fn modes(&self) -> usize {
        self.dwell.len()
    }
}

/// Computes per-mode dwell times and verifies the three strict
/// feasibility conditions, reporting the slack of each.
pub fn plan_dwell(ts: &TopologySet, params: &SwitchParams) -> Result<SwitchPlan> {
    let xi = compute_xi(ts);
    let params = SwitchParams { xi, ..*params };
    let SwitchParams {
        alpha,
        beta,
        kappa,
        tau_hat_max,
        m,
        ..
    } = params;

    // Condition on the base dwell: 0 < tau_hat_max < -ln(beta)/alpha.
    let bound22 = -beta.ln() / alpha;
    let slack22 = (bound22 - tau_hat_max).min(tau_hat_max);
    if !(slack22 >= STRICT_SLACK)
        || !(beta > 0.0 && beta < 1.0)
        || !(alpha > 0.0)
        || kappa < 1
        || m < 1
    {
        return Err(Error::Condition22Violated {
            tau_hat_max,
            bound: bound22,
            slack: slack22,
        });
    }

    // Spectral-bound condition: xi < alpha.
    let slack24 = alpha - xi;
    if !(slack24 >= STRICT_SLACK) {
        return Err(Error::Condition24Violated {
            alpha,
            xi,
            slack: slack24,
        });
    }

    // Dwell lower bound per mode.
    let bound23 = (beta.powf(-1.0 / kappa as f64) - 1.0) * kappa as f64 / (alpha - xi);
    let mut dwell = Vec::with_capacity(ts.modes());
    let mut slack23 = Vec::with_capacity(ts.modes());
    for r in 0..ts.modes() {
        let tau_r = tau_hat_max + m as f64 * ts.period(r).value / 2.0;
        let slack = tau_r - bound23;
        if !(slack >= STRICT_SLACK) {
            return Err(Error::Condition23Violated {
                mode: r,
                dwell: tau_r,
                bound: bound23,
                slack,
            });
        }
        dwell.push(tau_r);
        slack23.push(slack);
    }

    let tau_min = dwell.iter().copied().fold(f64::INFINITY, f64::min);
    let tau_max = dwell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SwitchPlan {
        params,
        dwell,
        tau_min,
        tau_max,
        slacks: PlanSlacks {
            cond22: slack22,
            cond23: slack23,
            cond24: slack24,
        },
    })
}

/// Searches for feasible `(alpha, beta, kappa)` at a requested base
/// dwell: `alpha` starts at `xi * (1 + margin)` and grows geometrically,
/// `beta = exp(-alpha * tau_hat_max * (1 + margin))` keeps the base-dwell
/// condition satisfied by construction, and `kappa` sweeps upward until
/// the dwell lower bound holds.
pub fn search_params(ts: &TopologySet, target_tau_hat: f64, m: u32) -> Result<SwitchParams> {
    if target_tau_hat <= 0.0 {
        return Err(Error::NonpositiveStep { h: target_tau_hat });
    }
    let xi = compute_xi(ts);
    let mut alpha = xi.max(STRICT_SLACK) * (1.0 + SEARCH_MARGIN);
    let mut tightest = f64::NEG_INFINITY;

    for _ in 0..SEARCH_ALPHA_STEPS {
        let beta = (-alpha * target_tau_hat * (1.0 + SEARCH_MARGIN)).exp();
        if beta > 0.0 && beta < 1.0 {
            for kappa in 1..=SEARCH_KAPPA_MAX {
                let cand = SwitchParams {
                    alpha,
                    beta,
                    kappa,
                    tau_hat_max: target_tau_hat,
                    m,
                    xi,
                };
                match plan_dwell(ts, &cand) {
                    Ok(_) => return Ok(cand),
                    Err(Error::Condition23Violated { slack, .. }) => {
                        tightest = tightest.max(slack);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        alpha *= SEARCH_ALPHA_GROWTH;
    }

    Err(Error::NoFeasibleParams {
        target_tau_hat,
        tightest_slack: tightest,
    })
}

/// One evaluated row of the certificate: worst-sign left-hand sides of
/// the three eigenvalue-wise inequalities at `(mode, lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertRow {
    pub mode: usize,
    pub eigenvalue: f64,
    /// `(kappa/tau_min)(beta^(-1/kappa) - 1) - alpha + |1 - lambda|`.
    pub ramp_up_lhs: f64,
    /// `(kappa/tau_min)(1 - beta^(1/kappa)) - alpha + |1 - lambda|`.
    pub ramp_down_lhs: f64,
    /// `-alpha + |1 - lambda|`.
    pub tail_lhs: f64,
}

/// Full certificate evaluation: all rows plus the switch-discount
/// inequality `ln(beta) + alpha * tau_hat_max < 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub tau_min: f64,
    pub rows: Vec<CertRow>,
    /// `ln(beta) + alpha * tau_hat_max`.
    pub discount_lhs: f64,
}

impl CertificateReport {
    /// All left-hand sides, flattened with their inequality names.
    fn entries(&self) -> Vec<(usize, f64, &'static str, f64)> {
        let mut out = Vec::with_capacity(3 * self.rows.len() + 1);
        for r in &self.rows {
            out.push((r.mode, r.eigenvalue, "ramp-up", r.ramp_up_lhs));
            out.push((r.mode, r.eigenvalue, "ramp-down", r.ramp_down_lhs));
            out.push((r.mode, r.eigenvalue, "tail", r.tail_lhs));
        }
        out.push((0, f64::NAN, "switch-discount", self.discount_lhs));
        out
    }

    pub fn violations(&self) -> Vec<CertViolation> {
        self.entries()
            .into_iter()
            .filter(|&(_, _, _, lhs)| !(lhs <= -STRICT_SLACK))
            .map(|(mode, eigenvalue, inequality, lhs)| CertViolation {
                mode,
                eigenvalue,
                inequality,
                lhs,
            })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }

    /// Most positive (worst) left-hand side.
    pub fn worst_lhs(&self) -> f64 {
        self.entries()
            .into_iter()
            .map(|(_, _, _, lhs)| lhs)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates the eigenvalue-wise scalar certificate for the given
/// parameters at minimum dwell `tau_min`. Never fails; inspect
/// [`CertificateReport::passed`].
pub fn certificate_report(
    ts: &TopologySet,
    params: &SwitchParams,
    tau_min: f64,
) -> CertificateReport {
    let k = params.kappa as f64;
    let ramp_rate_up = k / tau_min * (params.beta.powf(-1.0 / k) - 1.0);
    let ramp_rate_down = k / tau_min * (1.0 - params.beta.powf(1.0 / k));
    let mut rows = Vec::new();
    for (r, sd) in ts.spectra().iter().enumerate() {
        for &lam in sd.eigenvalues() {
            let dev = (1.0 - lam).abs();
            rows.push(CertRow {
                mode: r,
                eigenvalue: lam,
                ramp_up_lhs: ramp_rate_up - params.alpha + dev,
                ramp_down_lhs: ramp_rate_down - params.alpha + dev,
                tail_lhs: -params.alpha + dev,
            });
        }
    }
    CertificateReport {
        tau_min,
        rows,
        discount_lhs: params.beta.ln() + params.alpha * params.tau_hat_max,
    }
}

/// Like [`certificate_report`] but failing with the list of violated
/// inequalities when any left-hand side is not strictly negative.
pub fn check_certificate(
    ts: &TopologySet,
    params: &SwitchParams,
    tau_min: f64,
) -> Result<CertificateReport> {
    let report = certificate_report(ts, params, tau_min);
    let violations = report.violations();
    if violations.is_empty() {
        Ok(report)
    } else {
        Err(Error::CertificateFailed { violations })
    }
}

/// The contradiction function `g(beta) = exp(kappa (1 - beta^(-1/kappa))) - beta`.
pub fn gtilde(kappa: u32, beta: f64) -> f64 {
    let k = kappa as f64;
    (k * (1.0 - beta.powf(-1.0 / k))).exp() - beta
}

/// Evidence that `g` is strictly negative inside (0, 1).
#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub kappa: u32,
    pub grid: usize,
    /// Largest sampled value (strictly negative when the property holds).
    pub max_gtilde: f64,
    pub argmax_beta: f64,
    /// Interior stationary point found by bisection on dg/dbeta.
    pub extremum_beta: f64,
    pub extremum_value: f64,
    /// Residual of the stationarity identity
    /// `g(b*) = b* (b*^(1/kappa) - 1)`.
    pub identity_residual: f64,
    /// `g` at `beta = 1e-9` and `beta = 1 - 1e-9` (both tend to 0).
    pub endpoint_low: f64,
    pub endpoint_high: f64,
}

/// Samples `g` on a uniform grid over (0, 1) and at its analytic
/// extremum, requiring strict negativity everywhere inside the interval.
pub fn verify_prop1(kappa: u32, grid: usize) -> Result<Prop1Report> {
    if kappa < 1 || grid < 2 {
        return Err(Error::PropertyViolated {
            detail: format!("need kappa >= 1 and grid >= 2, got kappa = {kappa}, grid = {grid}"),
        });
    }
    let k = kappa as f64;

    let mut max_gtilde = f64::NEG_INFINITY;
    let mut argmax_beta = f64::NAN;
    for i in 1..=grid {
        let beta = i as f64 / (grid + 1) as f64;
        let g = gtilde(kappa, beta);
        if g > max_gtilde {
            max_gtilde = g;
            argmax_beta = beta;
        }
    }

    // dg/dbeta = exp(kappa (1 - b^(-1/kappa))) b^(-(1/kappa + 1)) - 1 goes
    // from -1 at 0+ to 0+ at 1-, crossing zero once.
    let dg = |b: f64| (k * (1.0 - b.powf(-1.0 / k))).exp() * b.powf(-(1.0 / k + 1.0)) - 1.0;
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dg(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let extremum_beta = 0.5 * (lo + hi);
    let extremum_value = gtilde(kappa, extremum_beta);
    let identity_residual =
        (extremum_value - extremum_beta * (extremum_beta.powf(1.0 / k) - 1.0)).abs();

    let report = Prop1Report {
        kappa,
        grid,
        max_gtilde,
        argmax_beta,
        extremum_beta,
        extremum_value,
        identity_residual,
        endpoint_low: gtilde(kappa, 1e-9),
        endpoint_high: gtilde(kappa, 1.0 - 1e-9),
    };

    if !(max_gtilde < 0.0) || !(extremum_value < 0.0) {
        return Err(Error::PropertyViolated {
            detail: format!(
                "g must be strictly negative inside (0,1): max {max_gtilde:e} at beta = {argmax_beta}"
            ),
        });
    }
    Ok(report)
}

/// Expands a plan into a concrete switching signal: dwell `tau_r` under
/// each visited mode, visiting `mode_order` cyclically, covering
/// `[0, t_end]`. Consecutive dwell intervals must use distinct modes.
pub fn make_signal(plan: &SwitchPlan, mode_order: &[usize], t_end: f64) -> Result<SwitchSignal> {
    if t_end <= 0.0 {
        return Err(Error::NonpositiveStep { h: t_end });
    }
    if mode_order.is_empty() {
        return Err(Error::UnknownMode {
            mode: 0,
            modes: plan.modes(),
        });
    }
    for &m in mode_order {
        if m >= plan.modes() {
            return Err(Error::UnknownMode {
                mode: m,
                modes: plan.modes(),
            });
        }
    }

    let mut events = vec![(0.0, mode_order[0])];
    let mut t = 0.0;
    let mut idx = 0usize;
    loop {
        let current = mode_order[idx % mode_order.len()];
        let t_next = t + plan.dwell[current];
        if t_next >= t_end {
            break;
        }
        idx += 1;
        let next = mode_order[idx % mode_order.len()];
        if next == current {
            return Err(Error::RepeatedConsecutiveMode { mode: next });
        }
        events.push((t_next, next));
        t = t_next;
    }
    Ok(SwitchSignal { events })
}

/// Round-robin order over all modes of a plan.
pub fn round_robin(modes: usize) -> Vec<usize> {
    (0..modes).collect()
}

// ---- plan (de)serialization ----------------------------------------------

#[derive(Serialize, Deserialize)]
struct SlacksWire {
    cond22: f64,
    cond23: BTreeMap<String, f64>,
    cond24: f64,
}

#[derive(Serialize, Deserialize)]
struct PlanWire {
    alpha: f64,
    beta: f64,
    kappa: u32,
    tau_hat_max: f64,
    m: u32,
    xi: f64,
    dwell: BTreeMap<String, f64>,
    tau_min: f64,
    tau_max: f64,
    inequality_slacks: SlacksWire,
}

impl Serialize for SwitchPlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let keyed = |v: &[f64]| {
            v.iter()
                .enumerate()
                .map(|(r, &x)| ((r + 1).to_string(), x))
                .collect::<BTreeMap<_, _>>()
        };
        PlanWire {
            alpha: self.params.alpha,
            beta: self.params.beta,
            kappa: self.params.kappa,
            tau_hat_max: self.params.tau_hat_max,
            m: self.params.m,
            xi: self.params.xi,
            dwell: keyed(&self.dwell),
            tau_min: self.tau_min,
            tau_max: self.tau_max,
            inequality_slacks: SlacksWire {
                cond22: self.slacks.cond22,
                cond23: keyed(&self.slacks.cond23),
                cond24: self.slacks.cond24,
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SwitchPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = PlanWire::deserialize(d)?;
        let unkey = |m: &BTreeMap<String, f64>| -> std::result::Result<Vec<f64>, D::Error> {
            let mut v = vec![f64::NAN; m.len()];
            for (k, &x) in m {
                let r: usize = k
                    .parse()
                    .map_err(|_| serde::de::Error::custom(format!("bad mode key {k:?}")))?;
                if r == 0 || r > m.len() {
                    return Err(serde::de::Error::custom(format!(
                        "mode key {r} out of range 1..={}",
                        m.len()
                    )));
                }
                v[r - 1] = x;
            }
            Ok(v)
        };
        Ok(SwitchPlan {
            params: SwitchParams {
                alpha: wire.alpha,
                beta: wire.beta,
                kappa: wire.kappa,
                tau_hat_max: wire.tau_hat_max,
                m: wire.m,
                xi: wire.xi,
            },
            dwell: unkey(&wire.dwell)?,
            tau_min: wire.tau_min,
            tau_max: wire.tau_max,
            slacks: PlanSlacks {
                cond22: wire.inequality_slacks.cond22,
                cond23: unkey(&wire.inequality_slacks.cond23)?,
                cond24: wire.inequality_slacks.cond24,
            },
        })
    }
}
