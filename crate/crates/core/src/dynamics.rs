//! Propagation of the switched second-order system.
//!
//! Two propagators cover every use:
//!
//! * **Closed form** — within a fixed topology the fluctuation state is a
//!   finite sum of modal oscillations, so it can be evaluated exactly at
//!   any time offset. This is the authoritative path; long horizons
//!   accumulate no integration error.
//! * **RK4** — a classical fixed-step integrator over the raw `(x, v)`
//!   state, kept as an independent cross-check and for dynamics that have
//!   no closed form (the metric estimator).
//!
//! Mode changes are state-continuous: positions and velocities carry
//! over unchanged at a switch instant; only the Laplacian changes.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::spectral::{SpectralData, TopologySet};

/// Tolerance (scaled by `n`) for the zero-mean precondition on
/// fluctuation inputs.
pub const MEAN_TOL: f64 = 1e-10;

/// Default RK4 step for cross-checks.
pub const DEFAULT_RK4_STEP: f64 = 1e-3;
/// Default trace sampling interval.
pub const DEFAULT_DT_SAMPLE: f64 = 1e-2;

/// Raw state of the agent network at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    /// Active topology, zero-based index into the topology set.
    pub mode: usize,
}

impl SystemState {
    pub fn new(t: f64, x: DVector<f64>, v: DVector<f64>, mode: usize) -> Self {
        Self { t, x, v, mode }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// Zero-mean fluctuation state: deviations from the moving average
/// position and the constant average velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationState {
    pub t: f64,
    /// `x - xbar(t) * 1`.
    pub xt: DVector<f64>,
    /// `v - vbar * 1`.
    pub vt: DVector<f64>,
    /// Average position at time `t`.
    pub xbar: f64,
    /// Average velocity (constant along trajectories).
    pub vbar: f64,
}

impl FluctuationState {
    pub fn n(&self) -> usize {
        self.xt.len()
    }

    /// Sums `1' x~` and `1' v~`; both are conserved at zero by the flow.
    pub fn mean_residuals(&self) -> (f64, f64) {
        (self.xt.sum(), self.vt.sum())
    }

    /// Reassembles the absolute state.
    pub fn to_absolute(&self, mode: usize) -> SystemState {
        SystemState {
            t: self.t,
            x: self.xt.add_scalar(self.xbar),
            v: self.vt.add_scalar(self.vbar),
            mode,
        }
    }
}

/// Splits an absolute state into average motion and fluctuations. The
/// average position at time `t` is `mean(x(0)) + mean(v(0)) * t`, taken
/// from `initial`.
pub fn to_fluctuations(s: &SystemState, initial: &SystemState) -> Result<FluctuationState> {
    let n = initial.n();
    if s.n() != n || s.v.len() != n || initial.v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s.n(),
        });
    }
    let vbar = initial.v.mean();
    let xbar = initial.x.mean() + vbar * s.t;
    Ok(FluctuationState {
        t: s.t,
        xt: s.x.add_scalar(-xbar),
        vt: s.v.add_scalar(-vbar),
        xbar,
        vbar,
    })
}

fn check_zero_mean(f: &FluctuationState) -> Result<()> {
    let tol = MEAN_TOL * f.n() as f64;
    let (sx, sv) = f.mean_residuals();
    if sx.abs() > tol || sv.abs() > tol {
        return Err(Error::NonzeroMeanInput {
            sum: sx.abs().max(sv.abs()),
        });
    }
    Ok(())
}

/// Advances a fluctuation state by `dt` under one fixed connected
/// topology, exactly:
///
/// ```text
/// x~(t0+dt) = sum_{l>=2} q_l q_l' ( x~(t0) cos(w_l dt) + v~(t0) sin(w_l dt)/w_l )
/// v~(t0+dt) = sum_{l>=2} q_l q_l' ( -x~(t0) w_l sin(w_l dt) + v~(t0) cos(w_l dt) )
/// ```
///
/// with `w_l = sqrt(lambda_l)`. The zero mode carries no weight because
/// the input is zero-mean.
pub fn closed_form_propagate(
    f0: &FluctuationState,
    sd: &SpectralData,
    dt: f64,
) -> Result<FluctuationState> {
    let n = f0.n();
    if sd.n() != n {
        return Err(Error::DimensionMismatch {
            expected: sd.n(),
            found: n,
        });
    }
    check_zero_mean(f0)?;
    if !sd.spectrally_connected() {
        return Err(Error::Disconnected);
    }

    let q = sd.eigenvectors();
    let mut xt = DVector::zeros(n);
    let mut vt = DVector::zeros(n);
    for l in 1..n {
        let omega = sd.eigenvalues()[l].sqrt();
        let ql = q.column(l);
        let a = ql.dot(&f0.xt);
        let b = ql.dot(&f0.vt);
        let (s, c) = (omega * dt).sin_cos();
        let cx = a * c + b * s / omega;
        let cv = -a * omega * s + b * c;
        xt.axpy(cx, &ql, 1.0);
        vt.axpy(cv, &ql, 1.0);
    }

    Ok(FluctuationState {
        t: f0.t + dt,
        xt,
        vt,
        xbar: f0.xbar + f0.vbar * dt,
        vbar: f0.vbar,
    })
}

/// One classical RK4 step of `x' = v`, `v' = -L x`.
pub fn integrate_step(s: &SystemState, topo: &Topology, h: f64) -> Result<SystemState> {
    if h <= 0.0 {
        return Err(Error::NonpositiveStep { h });
    }
    if s.n() != topo.n() {
        return Err(Error::DimensionMismatch {
            expected: topo.n(),
            found: s.n(),
        });
    }
    let l = topo.laplacian();
    let accel = |x: &DVector<f64>| -(l * x);

    let k1x = s.v.clone();
    let k1v = accel(&s.x);
    let k2x = &s.v + &k1v * (h / 2.0);
    let k2v = accel(&(&s.x + &k1x * (h / 2.0)));
    let k3x = &s.v + &k2v * (h / 2.0);
    let k3v = accel(&(&s.x + &k2x * (h / 2.0)));
    let k4x = &s.v + &k3v * h;
    let k4v = accel(&(&s.x + &k3x * h));

    Ok(SystemState {
        t: s.t + h,
        x: &s.x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0),
        v: &s.v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0),
        mode: s.mode,
    })
}

/// Integrates `state` up to `target` with uniform RK4 substeps of size at
/// most `h`, pinning the final time bit-exactly.
fn rk4_until(state: &mut SystemState, topo: &Topology, h: f64, target: f64) -> Result<()> {
    let span = target - state.t;
    if span > 0.0 {
        let steps = (span / h).ceil().max(1.0) as usize;
        let sub = span / steps as f64;
        for _ in 0..steps {
            *state = integrate_step(state, topo, sub)?;
        }
    }
    state.t = target;
    Ok(())
}

/// Trajectory propagator selection for switched simulations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Propagator {
    /// Exact spectral propagation.
    #[default]
    ClosedForm,
    /// Fixed-step RK4 on the absolute state.
    Rk4 { h: f64 },
}

/// A switching signal: `(t_k, mode)` pairs with `t_0 = 0`, strictly
/// increasing times, and zero-based mode indices. The mode at `t_k`
/// stays active on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSignal {
    pub events: Vec<(f64, usize)>,
}

impl SwitchSignal {
    /// A signal that never switches.
    pub fn constant(mode: usize) -> Self {
        Self {
            events: vec![(0.0, mode)],
        }
    }

    fn validate(&self, modes: usize) -> Result<()> {
        if self.events.is_empty() || self.events[0].0 != 0.0 {
            return Err(Error::UnorderedSwitchTimes { index: 0 });
        }
        for (k, pair) in self.events.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::UnorderedSwitchTimes { index: k + 1 });
            }
        }
        for &(_, m) in &self.events {
            if m >= modes {
                return Err(Error::UnknownMode { mode: m, modes });
            }
        }
        Ok(())
    }
}

/// One trace row.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    /// Zero-based active mode on `[t, next sample)`.
    pub mode: usize,
    /// Value of the configured network metric at `t`.
    pub metric: f64,
}

/// Time-ordered record of a simulated run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub samples: Vec<Sample>,
    pub switch_times: Vec<f64>,
    pub dt_sample: f64,
}

impl Trace {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("traces are never empty")
    }

    /// Writes the trace as CSV: header `t,x1..xn,v1..vn,sigma,F`, one row
    /// per sample, floats with 17 significant digits, `sigma` one-based.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        let n = self.samples[0].x.len();
        write!(w, "t")?;
        for i in 1..=n {
            write!(w, ",x{i}")?;
        }
        for i in 1..=n {
            write!(w, ",v{i}")?;
        }
        writeln!(w, ",sigma,F")?;
        for s in &self.samples {
            write!(w, "{:.16e}", s.t)?;
            for val in s.x.iter().chain(s.v.iter()) {
                write!(w, ",{val:.16e}")?;
            }
            writeln!(w, ",{},{:.16e}", s.mode + 1, s.metric)?;
        }
        Ok(())
    }
}

/// Incremental trace construction shared by the switched simulator and
/// the decentralized switching loop. Samples land on the global grid
/// `k * dt_sample`, plus one row at every segment boundary.
pub(crate) struct TraceBuilder<'m> {
    dt_sample: f64,
    metric: &'m dyn Fn(&FluctuationState) -> f64,
    samples: Vec<Sample>,
    switch_times: Vec<f64>,
}

impl<'m> TraceBuilder<'m> {
    pub fn new(dt_sample: f64, metric: &'m dyn Fn(&FluctuationState) -> f64) -> Result<Self> {
        if dt_sample <= 0.0 {
            return Err(Error::NonpositiveStep { h: dt_sample });
        }
        Ok(Self {
            dt_sample,
            metric,
            samples: Vec::new(),
            switch_times: Vec::new(),
        })
    }

    pub fn push(&mut self, f: &FluctuationState, mode: usize) {
        let abs = f.to_absolute(mode);
        self.samples.push(Sample {
            t: f.t,
            x: abs.x,
            v: abs.v,
            mode,
            metric: (self.metric)(f),
        });
    }

    pub fn mark_switch(&mut self, t: f64) {
        self.switch_times.push(t);
    }

    /// Grid times strictly inside `(t_from, t_to)`.
    fn grid_times(&self, t_from: f64, t_to: f64) -> Vec<f64> {
        let dt = self.dt_sample;
        let mut k = (t_from / dt).floor() as i64;
        while k as f64 * dt <= t_from {
            k += 1;
        }
        let mut out = Vec::new();
        while k as f64 * dt < t_to {
            out.push(k as f64 * dt);
            k += 1;
        }
        out
    }

    /// Propagates one fixed-mode segment `[f.t, t_end)` in closed form,
    /// sampling grid times strictly inside it; returns the state at
    /// `t_end` with its time pinned bit-exactly. The boundary row itself
    /// is pushed by the caller, which knows the mode active from `t_end`
    /// on (the signal is right-continuous).
    pub fn segment_closed_form(
        &mut self,
        f: &FluctuationState,
        sd: &SpectralData,
        t_end: f64,
        mode: usize,
    ) -> Result<FluctuationState> {
        let t0 = f.t;
        for tg in self.grid_times(t0, t_end) {
            let mut at = closed_form_propagate(f, sd, tg - t0)?;
            at.t = tg;
            self.push(&at, mode);
        }
        let mut end = closed_form_propagate(f, sd, t_end - t0)?;
        end.t = t_end;
        Ok(end)
    }

    /// RK4 variant of [`Self::segment_closed_form`]; integrates the
    /// absolute state with step at most `h`, landing exactly on sample
    /// times and the segment end.
    pub fn segment_rk4(
        &mut self,
        f: &FluctuationState,
        topo: &Topology,
        initial: &SystemState,
        h: f64,
        t_end: f64,
        mode: usize,
    ) -> Result<FluctuationState> {
        if h <= 0.0 {
            return Err(Error::NonpositiveStep { h });
        }
        let mut state = f.to_absolute(mode);
        for target in self.grid_times(f.t, t_end) {
            rk4_until(&mut state, topo, h, target)?;
            let fl = to_fluctuations(&state, initial)?;
            self.push(&fl, mode);
        }
        rk4_until(&mut state, topo, h, t_end)?;
        to_fluctuations(&state, initial)
    }

    pub fn finish(self) -> Trace {
        Trace {
            samples: self.samples,
            switch_times: self.switch_times,
            dt_sample: self.dt_sample,
        }
    }
}

/// Simulates the switched system from `(x0, v0)` under a switching
/// signal, recording a trace sampled every `dt_sample` with extra rows
/// at switch instants. `metric` fills the trace's `F` column.
#[allow(clippy::too_many_arguments)]
pub fn simulate_switched<M>(
    ts: &TopologySet,
    signal: &SwitchSignal,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    t_end: f64,
    propagator: Propagator,
    dt_sample: f64,
    metric: M,
) -> Result<Trace>
where
    M: Fn(&FluctuationState) -> f64,
{
    let n = ts.n();
    if x0.len() != n || v0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    signal.validate(ts.modes())?;
    if t_end <= 0.0 {
        return Err(Error::NonpositiveStep { h: t_end });
    }

    let initial = SystemState::new(0.0, x0.clone(), v0.clone(), signal.events[0].1);
    let mut state = to_fluctuations(&initial, &initial)?;
    let metric_ref: &dyn Fn(&FluctuationState) -> f64 = &metric;
    let mut builder = TraceBuilder::new(dt_sample, metric_ref)?;
    builder.push(&state, signal.events[0].1);

    let mut k = 0;
    loop {
        let mode = signal.events[k].1;
        // A switch scheduled exactly at or past the horizon never takes
        // effect within the trace.
        let next = signal
            .events
            .get(k + 1)
            .filter(|&&(t, _)| t < t_end)
            .copied();
        let seg_end = next.map(|(t, _)| t).unwrap_or(t_end);
        state = match propagator {
            Propagator::ClosedForm => {
                builder.segment_closed_form(&state, ts.spectrum(mode), seg_end, mode)?
            }
            Propagator::Rk4 { h } => {
                builder.segment_rk4(&state, ts.topology(mode), &initial, h, seg_end, mode)?
            }
        };
        match next {
            Some((t_next, m_next)) => {
                builder.mark_switch(t_next);
                builder.push(&state, m_next);
                k += 1;
            }
            None => {
                builder.push(&state, mode);
                break;
            }
        }
    }

    Ok(builder.finish())
}
