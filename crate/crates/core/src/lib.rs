//! Simulation library for second-order multi-agent consensus under
//! strategic topology switching.
//!
//! The plant is a network of double integrators coupled only through
//! relative positions: `ẋ = v`, `v̇ = -L_σ(t) x`, where `L_σ(t)` is the
//! Laplacian of whichever topology the switching signal `σ` has active.
//! Each fixed topology is a bank of undamped oscillators, so everything
//! interesting lives in how and when the topology switches.
//!
//! The crate is organised along the pipeline:
//!
//! * [`graph`] — weighted undirected topologies, Laplacians, connectivity,
//!   diameter.
//! * [`spectral`] — symmetric eigendecomposition (cyclic Jacobi),
//!   topology-set validation (rational frequency ratios, distinct
//!   eigenvalues), oscillation periods, Vandermonde determinant.
//! * [`dynamics`] — exact spectral propagation of the fluctuation state,
//!   an RK4 integrator as cross-check, switched-trajectory simulation and
//!   CSV traces.
//! * [`switching`] — dwell-time planning, feasibility search, scalar
//!   certificate checks, and the switching-signal generator.
//! * [`metric`] — the global network metric `F`, per-agent pieces, its
//!   flow derivative, and the inadmissible energy metric.
//! * [`estimator`] — finite-time distributed averaging used to assemble
//!   the global metric from per-agent values.
//! * [`orchestrator`] — the decentralized switching loop and consensus
//!   detectors.

// Negated float comparisons (`!(x > 0.0)`) are deliberate throughout:
// NaN inputs must take the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod metric;
pub mod orchestrator;
pub mod rational;
pub mod spectral;
pub mod switching;

pub use dynamics::{FluctuationState, Propagator, Sample, SwitchSignal, SystemState, Trace};
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, EstimatorMode, Exponents};
pub use graph::Topology;
pub use metric::MetricConfig;
pub use orchestrator::{RunConfig, RunResult, StoppedAt, Verdict};
pub use rational::Ratio;
pub use spectral::{Period, RatioCertificates, SpectralData, TopologySet};
pub use switching::{SwitchParams, SwitchPlan};
