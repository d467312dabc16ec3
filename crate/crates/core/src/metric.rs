//! The global network metric and its per-agent decomposition.
//!
//! `F = varpi ||x~||^2 / 2 + ||v~||^2 / 2` is the loop-stopping metric of
//! the switching algorithm. It is admissible: along a fixed-mode flow
//! whose Laplacian has distinct eigenvalues, and with `varpi` positive
//! and separated from every positive eigenvalue, `F` cannot sit at a
//! nonzero constant. The Laplacian energy
//! `x~' L x~ / 2 + ||v~||^2 / 2` is kept around as the canonical
//! inadmissible counterexample — it is a conserved quantity of the
//! fixed-mode flow, so a loop watching it would never stop.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::FluctuationState;
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::spectral::TopologySet;

/// Default relative tolerance for the `Fdot = 0` branch test.
pub const FDOT_TOL_DEFAULT: f64 = 1e-9;
/// Minimum absolute separation between `varpi` and any eigenvalue.
pub const VARPI_SEPARATION: f64 = 1e-6;
/// Default margin for [`choose_varpi`]: half the smallest positive
/// eigenvalue across modes.
pub const VARPI_MARGIN_DEFAULT: f64 = 0.5;

/// Metric configuration of a switching run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Position weighting `varpi > 0`.
    pub varpi: f64,
    /// Loop-stopping bound `delta >= 0`.
    pub delta: f64,
    /// Relative tolerance of the `Fdot(t_k) = 0` branch test.
    #[serde(default = "default_fdot_tol")]
    pub fdot_tol: f64,
}

fn default_fdot_tol() -> f64 {
    FDOT_TOL_DEFAULT
}

impl MetricConfig {
    pub fn new(varpi: f64, delta: f64) -> Self {
        Self {
            varpi,
            delta,
            fdot_tol: FDOT_TOL_DEFAULT,
        }
    }

    /// Checks `varpi > 0`, `delta >= 0`, and the separation of `varpi`
    /// from every positive eigenvalue of every mode.
    pub fn validate(&self, ts: &TopologySet) -> Result<()> {
        if !(self.varpi > 0.0) || self.delta < 0.0 {
            return Err(Error::DegenerateSpectrum {
                lambda2: self.varpi,
            });
        }
        for sd in ts.spectra() {
            for &lam in &sd.eigenvalues()[1..] {
                if (self.varpi - lam).abs() < VARPI_SEPARATION {
                    return Err(Error::DegenerateSpectrum { lambda2: lam });
                }
            }
        }
        Ok(())
    }

    /// The `Fdot(t_k) = 0` branch test: exact zero is measure-zero in
    /// floats, so the branch fires on `|Fdot| <= fdot_tol * max(1, F)`.
    pub fn fdot_is_zero(&self, f: f64, fdot: f64) -> bool {
        fdot.abs() <= self.fdot_tol * f.max(1.0)
    }
}

/// Global metric `F = varpi ||x~||^2 / 2 + ||v~||^2 / 2`.
pub fn metric_f(f: &FluctuationState, varpi: f64) -> f64 {
    0.5 * (varpi * f.xt.norm_squared() + f.vt.norm_squared())
}

/// Agent `i`'s share: `F_i = varpi x~_i^2 / 2 + v~_i^2 / 2`.
pub fn metric_f_local(i: usize, f: &FluctuationState, varpi: f64) -> Result<f64> {
    if i >= f.n() {
        return Err(Error::IndexOutOfRange { index: i, n: f.n() });
    }
    Ok(0.5 * (varpi * f.xt[i] * f.xt[i] + f.vt[i] * f.vt[i]))
}

/// All per-agent shares; sums to [`metric_f`].
pub fn metric_f_locals(f: &FluctuationState, varpi: f64) -> DVector<f64> {
    DVector::from_fn(f.n(), |i, _| {
        0.5 * (varpi * f.xt[i] * f.xt[i] + f.vt[i] * f.vt[i])
    })
}

/// Flow derivative of the metric under the active mode:
/// `Fdot = v~' (varpi I - L) x~`.
pub fn metric_fdot(f: &FluctuationState, topo: &Topology, varpi: f64) -> f64 {
    debug_assert_eq!(f.n(), topo.n());
    let lx = topo.laplacian() * &f.xt;
    varpi * f.vt.dot(&f.xt) - f.vt.dot(&lx)
}

/// Agent `i`'s share of the flow derivative:
/// `Fdot_i = v~_i ((varpi I - L) x~)_i`; sums to [`metric_fdot`].
pub fn metric_fdot_local(
    i: usize,
    f: &FluctuationState,
    topo: &Topology,
    varpi: f64,
) -> Result<f64> {
    if i >= f.n() {
        return Err(Error::IndexOutOfRange { index: i, n: f.n() });
    }
    let lx_i = topo.laplacian().row(i).transpose().dot(&f.xt);
    Ok(f.vt[i] * (varpi * f.xt[i] - lx_i))
}

/// All per-agent flow-derivative shares.
pub fn metric_fdot_locals(f: &FluctuationState, topo: &Topology, varpi: f64) -> DVector<f64> {
    let lx = topo.laplacian() * &f.xt;
    DVector::from_fn(f.n(), |i, _| f.vt[i] * (varpi * f.xt[i] - lx[i]))
}

/// Picks `varpi = margin * min_r lambda_2(L_r)` and nudges it downward
/// in steps of ten separations if it lands within [`VARPI_SEPARATION`]
/// of any positive eigenvalue.
pub fn choose_varpi(ts: &TopologySet, margin: f64) -> Result<f64> {
    let min_lambda2 = ts
        .spectra()
        .iter()
        .map(|sd| sd.lambda2())
        .fold(f64::INFINITY, f64::min);
    if !(min_lambda2 > 0.0) || !(margin > 0.0) {
        return Err(Error::DegenerateSpectrum {
            lambda2: min_lambda2,
        });
    }
    let mut varpi = margin * min_lambda2;
    let eigenvalues: Vec<f64> = ts
        .spectra()
        .iter()
        .flat_map(|sd| sd.eigenvalues()[1..].iter().copied())
        .collect();
    while eigenvalues
        .iter()
        .any(|&lam| (varpi - lam).abs() < VARPI_SEPARATION)
    {
        varpi -= 10.0 * VARPI_SEPARATION;
        if varpi <= 0.0 {
            return Err(Error::DegenerateSpectrum {
                lambda2: min_lambda2,
            });
        }
    }
    Ok(varpi)
}

/// The inadmissible Laplacian-energy metric
/// `x~' L x~ / 2 + ||v~||^2 / 2`: constant along any fixed-mode flow.
pub fn energy_metric(f: &FluctuationState, topo: &Topology) -> f64 {
    let lx = topo.laplacian() * &f.xt;
    0.5 * (f.xt.dot(&lx) + f.vt.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{closed_form_propagate, to_fluctuations, SystemState};
    use crate::graph::star_plus_edge;
    use crate::spectral::{eigendecompose, validate_topology_set};
    use nalgebra::DMatrix;

    fn fluct(x: &[f64], v: &[f64]) -> FluctuationState {
        let s = SystemState::new(
            0.0,
            DVector::from_row_slice(x),
            DVector::from_row_slice(v),
            0,
        );
        to_fluctuations(&s, &s).unwrap()
    }

    fn two_node(w: f64) -> Topology {
        Topology::from_weights(DMatrix::from_row_slice(2, 2, &[0.0, w, w, 0.0])).unwrap()
    }

    #[test]
    fn metric_values() {
        let f = fluct(&[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(metric_f(&f, 0.5), 0.0);

        let f = fluct(&[1.0, -1.0], &[0.0, 0.0]);
        assert_eq!(metric_f(&f, 0.5), 0.5);
        assert_eq!(metric_f_local(0, &f, 0.5).unwrap(), 0.25);
        assert_eq!(metric_f_local(1, &f, 0.5).unwrap(), 0.25);
        assert!(matches!(
            metric_f_local(2, &f, 0.5).unwrap_err(),
            Error::IndexOutOfRange { index: 2, n: 2 }
        ));
    }

    #[test]
    fn locals_sum_to_the_global_metric() {
        let f = fluct(&[4.0, 2.0, 3.0, 4.0], &[1.0, -2.0, 0.5, 0.5]);
        let total = metric_f(&f, 0.5);
        let locals = metric_f_locals(&f, 0.5);
        assert!((locals.sum() - total).abs() <= 1e-12 * total.max(1.0));

        let topo = star_plus_edge(1.0, 4.0);
        let fdot = metric_fdot(&f, &topo, 0.5);
        let fdot_locals = metric_fdot_locals(&f, &topo, 0.5);
        assert!((fdot_locals.sum() - fdot).abs() <= 1e-12 * fdot.abs().max(1.0));
        let by_index: f64 = (0..4)
            .map(|i| metric_fdot_local(i, &f, &topo, 0.5).unwrap())
            .sum();
        assert!((by_index - fdot).abs() <= 1e-12 * fdot.abs().max(1.0));
    }

    #[test]
    fn metric_is_zero_only_at_consensus() {
        let f = fluct(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]);
        assert_eq!(metric_f(&f, 0.7), 0.0);
        let g = fluct(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.1]);
        assert!(metric_f(&g, 0.7) > 0.0);
    }

    #[test]
    fn fdot_vanishes_at_consensus_and_at_degenerate_varpi() {
        let topo = two_node(1.0);
        let f = fluct(&[3.0, 3.0], &[1.0, 1.0]);
        assert_eq!(metric_fdot(&f, &topo, 0.5), 0.0);

        // varpi equal to the active eigenvalue annihilates the coupling:
        // with x~ and v~ along the (1,-1) eigenvector, (varpi I - L) x~ = 0.
        let g = fluct(&[1.0, -1.0], &[0.5, -0.5]);
        assert!(metric_fdot(&g, &topo, 2.0).abs() < 1e-15);
        assert!(metric_fdot(&g, &topo, 0.5).abs() > 0.1);
    }

    #[test]
    fn fdot_matches_finite_differences_along_the_flow() {
        let topo = star_plus_edge(1.0, 4.0);
        let sd = eigendecompose(&topo).unwrap();
        let f0 = fluct(&[4.0, 2.0, 3.0, 4.0], &[4.0, 2.0, 3.0, 4.0]);
        let h = 1e-4;
        for &t in &[0.3, 1.1, 2.9] {
            let at = closed_form_propagate(&f0, &sd, t).unwrap();
            let fwd = closed_form_propagate(&f0, &sd, t + h).unwrap();
            let bwd = closed_form_propagate(&f0, &sd, t - h).unwrap();
            let numeric = (metric_f(&fwd, 0.5) - metric_f(&bwd, 0.5)) / (2.0 * h);
            let analytic = metric_fdot(&at, &topo, 0.5);
            assert!((numeric - analytic).abs() < 1e-5, "t = {t}");
        }
    }

    #[test]
    fn varpi_choice_follows_the_margin_rule() {
        let ts = validate_topology_set(vec![star_plus_edge(1.0, 0.0), star_plus_edge(1.0, 4.0)])
            .unwrap();
        // min lambda_2 = 1, margin 0.5.
        let varpi = choose_varpi(&ts, VARPI_MARGIN_DEFAULT).unwrap();
        assert!((varpi - 0.5).abs() < 1e-12);

        // Spectra {0,4} and {0,9}: min lambda_2 = 4, margin 0.5 gives 2,
        // which is separated from {4, 9}.
        let ts = validate_topology_set(vec![two_node(2.0), two_node(4.5)]).unwrap();
        assert!((choose_varpi(&ts, 0.5).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn varpi_collisions_are_nudged_down() {
        // Spectra {0,2} and {0,1}: margin 1.0 would put varpi exactly on
        // the eigenvalue 1 of the second mode.
        let ts = validate_topology_set(vec![two_node(1.0), two_node(0.5)]).unwrap();
        let varpi = choose_varpi(&ts, 1.0).unwrap();
        assert!(varpi < 1.0);
        assert!((varpi - 1.0).abs() >= VARPI_SEPARATION);
        assert!((varpi - (1.0 - 10.0 * VARPI_SEPARATION)).abs() < 1e-12);
    }

    #[test]
    fn config_validation_enforces_separation() {
        let ts = validate_topology_set(vec![star_plus_edge(1.0, 0.0), star_plus_edge(1.0, 4.0)])
            .unwrap();
        assert!(MetricConfig::new(0.5, 0.2).validate(&ts).is_ok());
        assert!(MetricConfig::new(4.0 + 1e-8, 0.2).validate(&ts).is_err());
        assert!(MetricConfig::new(-0.5, 0.2).validate(&ts).is_err());
    }

    #[test]
    fn energy_metric_values_and_constancy() {
        let topo = two_node(1.0);
        let f = fluct(&[2.0, 2.0], &[1.0, 1.0]);
        assert_eq!(energy_metric(&f, &topo), 0.0);

        // x~ = (1,-1): x~' L x~ = 4, metric = 2.
        let g = fluct(&[1.0, -1.0], &[0.0, 0.0]);
        assert_eq!(energy_metric(&g, &topo), 2.0);

        // Conserved along the fixed-mode flow, unlike F.
        let topo = star_plus_edge(1.0, 4.0);
        let sd = eigendecompose(&topo).unwrap();
        let f0 = fluct(&[4.0, 2.0, 3.0, 4.0], &[4.0, 2.0, 3.0, 4.0]);
        let e0 = energy_metric(&f0, &topo);
        let f_vals: Vec<f64> = (0..=64)
            .map(|k| {
                let at =
                    closed_form_propagate(&f0, &sd, k as f64 / 64.0 * 2.0 * std::f64::consts::PI)
                        .unwrap();
                assert!((energy_metric(&at, &topo) - e0).abs() <= 1e-8 * e0);
                metric_f(&at, 0.5)
            })
            .collect();
        let mean = f_vals.iter().sum::<f64>() / f_vals.len() as f64;
        let var = f_vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f_vals.len() as f64;
        assert!(var / (mean * mean) > 1e-10, "F should oscillate");
    }
}
