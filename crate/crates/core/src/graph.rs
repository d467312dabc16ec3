//! Weighted undirected topologies and their Laplacians.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute tolerance for accepting an input weight matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// One interaction topology: a weighted undirected graph over `n` agents
/// together with its Laplacian.
///
/// Immutable after construction. An edge `(i, j)` exists iff `a_ij > 0`
/// strictly; the Laplacian is assembled from the symmetrized average
/// `(a_ij + a_ji) / 2` so that downstream eigendecomposition sees an
/// exactly symmetric matrix. Row sums of the Laplacian are exactly zero
/// by construction (the diagonal is accumulated in the same order as the
/// off-diagonal negations).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    weights: DMatrix<f64>,
    laplacian: DMatrix<f64>,
}

impl Topology {
    /// Builds a topology from a square, symmetric, nonnegative weight
    /// matrix with zero diagonal.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: weights.ncols(),
            });
        }
        if n < 2 {
            return Err(Error::TooFewAgents { n });
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::NonzeroDiagonal {
                    index: i,
                    value: weights[(i, i)],
                });
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if w < 0.0 {
                    return Err(Error::NegativeWeight {
                        row: i,
                        col: j,
                        value: w,
                    });
                }
                if j > i {
                    let delta = (w - weights[(j, i)]).abs();
                    if delta > SYMMETRY_TOL {
                        return Err(Error::AsymmetricWeights {
                            row: i,
                            col: j,
                            delta,
                        });
                    }
                }
            }
        }

        let mut sym = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sym[(i, j)] = 0.5 * (weights[(i, j)] + weights[(j, i)]);
                }
            }
        }
        let mut laplacian = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                if i != j {
                    laplacian[(i, j)] = -sym[(i, j)];
                    degree += sym[(i, j)];
                }
            }
            laplacian[(i, i)] = degree;
        }

        Ok(Self {
            n,
            weights: sym,
            laplacian,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Symmetrized coupling weights `a_ij`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Laplacian `L` with `l_ii = sum_j a_ij`, `l_ij = -a_ij` for `i != j`.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Neighbours of agent `i` over strictly positive weights.
    fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && self.weights[(i, j)] > 0.0)
    }

    /// True iff the positive-weight edge set forms one connected component.
    pub fn is_connected(&self) -> bool {
        self.bfs_depths(0).iter().all(|d| d.is_some())
    }

    /// Unweighted BFS depths from `start`; `None` marks unreachable vertices.
    fn bfs_depths(&self, start: usize) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.n];
        depth[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let d = depth[i].unwrap();
            for j in self.neighbours(i) {
                if depth[j].is_none() {
                    depth[j] = Some(d + 1);
                    queue.push_back(j);
                }
            }
        }
        depth
    }

    /// Longest shortest un-weighted path between any two vertices.
    pub fn diameter(&self) -> Result<usize> {
        let mut diameter = 0;
        for start in 0..self.n {
            for d in self.bfs_depths(start) {
                diameter = diameter.max(d.ok_or(Error::Disconnected)?);
            }
        }
        Ok(diameter)
    }

    /// Lower bound `d + 1` on the number of distinct Laplacian eigenvalues
    /// of a connected graph with diameter `d`.
    pub fn min_distinct_eigenvalue_bound(&self) -> Result<usize> {
        Ok(self.diameter()? + 1)
    }

    /// The unweighted support of this topology: weight 1 wherever
    /// `a_ij > 0`. Used for estimator communication graphs.
    pub fn support(&self) -> Topology {
        let mut w = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.neighbours(i) {
                w[(i, j)] = 1.0;
            }
        }
        Topology::from_weights(w).expect("support of a valid topology is valid")
    }
}

/// Wire format: `{"n": ..., "weights": [[...], ...]}`.
#[derive(Serialize, Deserialize)]
struct TopologyWire {
    n: usize,
    weights: Vec<Vec<f64>>,
}

impl Serialize for Topology {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let weights = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.weights[(i, j)]).collect())
            .collect();
        TopologyWire { n: self.n, weights }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = TopologyWire::deserialize(deserializer)?;
        if wire.weights.len() != wire.n || wire.weights.iter().any(|r| r.len() != wire.n) {
            return Err(serde::de::Error::custom(format!(
                "weight matrix is not {0}x{0}",
                wire.n
            )));
        }
        let m = DMatrix::from_fn(wire.n, wire.n, |i, j| wire.weights[i][j]);
        Topology::from_weights(m).map_err(serde::de::Error::custom)
    }
}

/// Builds the 4-agent star of the small-coupling example set
/// (`a_12 = a_13 = a_14 = w`), optionally with an extra `a_23` edge.
#[doc(hidden)]
pub fn star_plus_edge(w: f64, a23: f64) -> Topology {
    let mut m = DMatrix::zeros(4, 4);
    for j in 1..4 {
        m[(0, j)] = w;
        m[(j, 0)] = w;
    }
    m[(1, 2)] = a23;
    m[(2, 1)] = a23;
    Topology::from_weights(m).expect("star weights are valid")
}
