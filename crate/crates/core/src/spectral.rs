//! Symmetric eigendecomposition and topology-set validation.
//!
//! Agent counts are small, so eigenpairs come from cyclic Jacobi sweeps:
//! orthonormality to machine precision, no external solver. A topology
//! set is admissible for switching when
//!
//! * every pairwise ratio `sqrt(lambda_i / lambda_j)` of positive
//!   eigenvalues is rational (decided by bounded-denominator
//!   reconstruction, see [`crate::rational`]), and
//! * at least one member has all-distinct Laplacian eigenvalues.
//!
//! The first condition makes the fixed-topology flow periodic with the
//! period returned by [`period`]; the second is what the switching loop
//! relies on to rule out constant metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::rational::{best_rational, lcm_of_ratios, Ratio};

/// Default tolerance for the rational-ratio reconstruction.
pub const RATIO_TOL: f64 = 1e-9;
/// Default denominator cap for the rational-ratio reconstruction.
pub const RATIO_MAX_DEN: u64 = 1000;
/// Relative gap under which two eigenvalues count as equal.
pub const EIGENVALUE_GAP_TOL: f64 = 1e-9;

const JACOBI_SWEEP_CAP: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-13;

/// Eigenvalues and orthonormal eigenvectors of one Laplacian.
///
/// Eigenvalues ascend; column `l` of `eigenvectors` is the unit vector
/// for `eigenvalues[l]`. For a connected topology the first column is the
/// normalized all-ones vector.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralData {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Smallest eigenvalue above the zero mode; `0.0` for a disconnected
    /// graph.
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues[1]
    }

    /// Absolute gap below which two eigenvalues are treated as equal.
    pub fn gap_tol(&self) -> f64 {
        let lam_max = self.eigenvalues.last().copied().unwrap_or(0.0).abs();
        EIGENVALUE_GAP_TOL * lam_max.max(1.0)
    }

    /// Whether the zero eigenvalue is simple and positive ones exist,
    /// i.e. the underlying graph is connected in the spectral sense.
    pub fn spectrally_connected(&self) -> bool {
        self.lambda2() > self.gap_tol()
    }

    /// Number of distinct eigenvalues under the gap tolerance.
    pub fn count_distinct(&self) -> usize {
        let tol = self.gap_tol();
        1 + self
            .eigenvalues
            .windows(2)
            .filter(|w| w[1] - w[0] > tol)
            .count()
    }

    pub fn has_distinct_eigenvalues(&self) -> bool {
        self.count_distinct() == self.n()
    }
}

fn off_diag_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Descending lexicographic comparison of two eigenvector columns;
/// breaks exact eigenvalue ties deterministically (and keeps the zero
/// matrix's eigenbasis at the identity).
fn lex_desc(a: &DMatrix<f64>, ca: usize, cb: usize) -> std::cmp::Ordering {
    for k in 0..a.nrows() {
        match a[(k, cb)].partial_cmp(&a[(k, ca)]) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

/// Eigendecomposition of a topology's Laplacian by cyclic Jacobi
/// rotations. Converges when the off-diagonal Frobenius norm drops below
/// `1e-13 * ||L||_F`, capped at 100 sweeps.
pub fn eigendecompose(t: &Topology) -> Result<SpectralData> {
    let n = t.n();
    let mut a = t.laplacian().clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    let norm = a.norm();

    if norm > 0.0 {
        let target = JACOBI_OFF_TOL * norm;
        let mut converged = false;
        for _ in 0..JACOBI_SWEEP_CAP {
            if off_diag_norm(&a) <= target {
                converged = true;
                break;
            }
            for p in 0..n - 1 {
                for r in p + 1..n {
                    let apq = a[(p, r)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apq);
                    let t_rot = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t_rot * t_rot + 1.0).sqrt();
                    let s = t_rot * c;

                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, r)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, r)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let ark = a[(r, k)];
                        a[(p, k)] = c * apk - s * ark;
                        a[(r, k)] = s * apk + c * ark;
                    }
                    a[(p, r)] = 0.0;
                    a[(r, p)] = 0.0;
                    for k in 0..n {
                        let qkp = q[(k, p)];
                        let qkq = q[(k, r)];
                        q[(k, p)] = c * qkp - s * qkq;
                        q[(k, r)] = s * qkp + c * qkq;
                    }
                }
            }
        }
        if !converged && off_diag_norm(&a) > target {
            return Err(Error::ConvergenceFailure {
                sweeps: JACOBI_SWEEP_CAP,
            });
        }
    }

    // Fix signs: the largest-magnitude component of each column is made
    // positive. For a connected graph this aligns the zero mode with
    // +1/sqrt(n).
    for c in 0..n {
        let mut pivot = 0;
        for k in 1..n {
            if q[(k, c)].abs() > q[(pivot, c)].abs() {
                pivot = k;
            }
        }
        if q[(pivot, c)] < 0.0 {
            for k in 0..n {
                q[(k, c)] = -q[(k, c)];
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .partial_cmp(&a[(j, j)])
            .unwrap()
            .then_with(|| lex_desc(&q, i, j))
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| q[(r, order[c])]);

    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
    })
}

/// Rational certificate for one ordered pair of positive eigenvalues:
/// `sqrt(lambda_i / lambda_j) ~= ratio` with `|value - ratio| = error`.
/// Indices are zero-based positions in the ascending spectrum (so they
/// start at 1, the first positive eigenvalue of a connected graph).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioCertificate {
    pub i: usize,
    pub j: usize,
    pub ratio: Ratio,
    pub value: f64,
    pub error: f64,
}

/// Certificates for all ordered pairs of positive eigenvalues of one
/// spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioCertificates {
    pub pairs: Vec<RatioCertificate>,
    pub tol: f64,
    pub max_den: u64,
}

impl RatioCertificates {
    pub fn find(&self, i: usize, j: usize) -> Option<&RatioCertificate> {
        self.pairs.iter().find(|c| c.i == i && c.j == j)
    }
}

/// Checks that every pairwise ratio `sqrt(lambda_i / lambda_j)` of
/// positive eigenvalues admits a rational approximation `p/q` with
/// `q <= max_den` and error at most `tol`.
pub fn check_rational_ratios(
    sd: &SpectralData,
    tol: f64,
    max_den: u64,
) -> Result<RatioCertificates> {
    if !sd.spectrally_connected() {
        return Err(Error::Disconnected);
    }
    let n = sd.n();
    let mut pairs = Vec::new();
    for i in 1..n {
        for j in 1..n {
            if i == j {
                continue;
            }
            let value = (sd.eigenvalues[i] / sd.eigenvalues[j]).sqrt();
            let (ratio, error) = best_rational(value, max_den);
            if error > tol {
                return Err(Error::RatioNotRational {
                    i: i + 1,
                    j: j + 1,
                    value,
                    best_error: error,
                    tol,
                    max_den,
                });
            }
            pairs.push(RatioCertificate {
                i,
                j,
                ratio,
                value,
                error,
            });
        }
    }
    Ok(RatioCertificates {
        pairs,
        tol,
        max_den,
    })
}

/// Oscillation period of the fixed-topology flow, kept exact as a
/// rational multiple of the base period `2*pi / sqrt(lambda_2)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Period {
    /// `T = multiple * base`, with `multiple` exact over the certified
    /// rationals.
    pub multiple: Ratio,
    /// Base period `2*pi / sqrt(lambda_2)`.
    pub base: f64,
    /// Float value of `T`.
    pub value: f64,
}

/// Least common multiple of the modal periods `2*pi / sqrt(lambda_i)`,
/// combined exactly over the rational certificates.
pub fn period(sd: &SpectralData, certs: &RatioCertificates) -> Result<Period> {
    if !sd.spectrally_connected() {
        return Err(Error::Disconnected);
    }
    let n = sd.n();
    let base = 2.0 * std::f64::consts::PI / sd.eigenvalues[1].sqrt();
    // 2*pi/sqrt(lambda_i) = base * sqrt(lambda_2 / lambda_i).
    let mut ratios = vec![Ratio::new(1, 1)];
    for i in 2..n {
        let cert = certs
            .find(1, i)
            .ok_or(Error::MissingRatioCertificate { i: 2, j: i + 1 })?;
        ratios.push(cert.ratio);
    }
    let multiple = lcm_of_ratios(&ratios)?;
    Ok(Period {
        multiple,
        base,
        value: multiple.value() * base,
    })
}

/// A validated, switching-ready collection of topologies.
#[derive(Debug, Clone)]
pub struct TopologySet {
    topologies: Vec<Topology>,
    spectra: Vec<SpectralData>,
    certificates: Vec<RatioCertificates>,
    periods: Vec<Period>,
    distinct: Vec<bool>,
}

impl TopologySet {
    pub fn n(&self) -> usize {
        self.topologies[0].n()
    }

    /// Number of modes `s`.
    pub fn modes(&self) -> usize {
        self.topologies.len()
    }

    pub fn topologies(&self) -> &[Topology] {
        &self.topologies
    }

    pub fn topology(&self, r: usize) -> &Topology {
        &self.topologies[r]
    }

    pub fn spectra(&self) -> &[SpectralData] {
        &self.spectra
    }

    pub fn spectrum(&self, r: usize) -> &SpectralData {
        &self.spectra[r]
    }

    pub fn certificates(&self) -> &[RatioCertificates] {
        &self.certificates
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn period(&self, r: usize) -> &Period {
        &self.periods[r]
    }

    /// Per-mode flags: does mode `r` have all-distinct eigenvalues?
    pub fn distinct_flags(&self) -> &[bool] {
        &self.distinct
    }
}

/// Validates a topology set with the default reconstruction bounds.
pub fn validate_topology_set(topologies: Vec<Topology>) -> Result<TopologySet> {
    validate_topology_set_with(topologies, RATIO_TOL, RATIO_MAX_DEN)
}

/// Validates a topology set: at least two modes, equal agent counts,
/// all connected, rational frequency ratios per mode, and at least one
/// mode with all-distinct eigenvalues.
pub fn validate_topology_set_with(
    topologies: Vec<Topology>,
    tol: f64,
    max_den: u64,
) -> Result<TopologySet> {
    if topologies.len() < 2 {
        return Err(Error::TooFewTopologies {
            found: topologies.len(),
        });
    }
    let n = topologies[0].n();
    for t in &topologies {
        if t.n() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: t.n(),
            });
        }
        if !t.is_connected() {
            return Err(Error::Disconnected);
        }
    }

    let mut spectra = Vec::with_capacity(topologies.len());
    let mut certificates = Vec::with_capacity(topologies.len());
    let mut periods = Vec::with_capacity(topologies.len());
    let mut distinct = Vec::with_capacity(topologies.len());
    for (r, t) in topologies.iter().enumerate() {
        let sd = eigendecompose(t)?;
        let certs = match check_rational_ratios(&sd, tol, max_den) {
            Ok(c) => c,
            Err(Error::RatioNotRational { i, j, value, .. }) => {
                return Err(Error::ConditionAViolated {
                    mode: r + 1,
                    i,
                    j,
                    value,
                })
            }
            Err(e) => return Err(e),
        };
        periods.push(period(&sd, &certs)?);
        distinct.push(sd.has_distinct_eigenvalues());
        spectra.push(sd);
        certificates.push(certs);
    }
    if !distinct.iter().any(|&d| d) {
        return Err(Error::ConditionBViolated);
    }

    Ok(TopologySet {
        topologies,
        spectra,
        certificates,
        periods,
        distinct,
    })
}

/// Determinant of the Vandermonde matrix with nodes `a`:
/// `(-1)^((n^2-n)/2) * prod_{i<j} (a_i - a_j)`.
pub fn vandermonde_det(a: &[f64]) -> f64 {
    let n = a.len();
    let mut prod = 1.0;
    for i in 0..n {
        for j in i + 1..n {
            prod *= a[i] - a[j];
        }
    }
    let sign = if ((n * n - n) / 2) % 2 == 1 {
        -1.0
    } else {
        1.0
    };
    sign * prod
}
