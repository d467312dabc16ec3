//! Subcommand implementations. Each returns an exit code plus the text
//! block to print, so batch runs can execute scenarios in parallel and
//! still print in input order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use topoflock_core::dynamics::{simulate_switched, Propagator, SwitchSignal};
use topoflock_core::metric::metric_f;
use topoflock_core::orchestrator::{lyapunov_v, run_algorithm1, RunConfig, Verdict};
use topoflock_core::spectral::Period;
use topoflock_core::switching::{
    certificate_report, make_signal, plan_dwell, round_robin, search_params, verify_prop1,
    SwitchParams, SwitchPlan,
};
use topoflock_core::Trace;

use crate::scenario::Scenario;
use crate::CliError;

pub struct CmdOutput {
    pub code: i32,
    pub text: String,
}

fn ok(text: String) -> Result<CmdOutput, CliError> {
    Ok(CmdOutput { code: 0, text })
}

// ---- validate --------------------------------------------------------------

#[derive(Serialize)]
struct ModeReport {
    index: usize,
    eigenvalues: Vec<f64>,
    distinct: bool,
    diameter: usize,
    period: Period,
    ratio_certificates: Vec<RatioEntry>,
}

#[derive(Serialize)]
struct RatioEntry {
    i: usize,
    j: usize,
    num: u64,
    den: u64,
    value: f64,
    error: f64,
}

#[derive(Serialize)]
struct ValidateReport {
    name: String,
    n: usize,
    modes: Vec<ModeReport>,
    rational_ratios_ok: bool,
    distinct_member_ok: bool,
}

pub fn cmd_validate(path: &Path, json: bool) -> Result<CmdOutput, CliError> {
    // Scenario::load already runs the full topology-set validation;
    // reaching this point means both set conditions hold.
    let sc = Scenario::load(path)?;
    let mut modes = Vec::new();
    for r in 0..sc.set.modes() {
        let sd = sc.set.spectrum(r);
        modes.push(ModeReport {
            index: r + 1,
            eigenvalues: sd.eigenvalues().to_vec(),
            distinct: sc.set.distinct_flags()[r],
            diameter: sc
                .set
                .topology(r)
                .diameter()
                .map_err(CliError::validation)?,
            period: *sc.set.period(r),
            ratio_certificates: sc.set.certificates()[r]
                .pairs
                .iter()
                .map(|c| RatioEntry {
                    i: c.i + 1,
                    j: c.j + 1,
                    num: c.ratio.num,
                    den: c.ratio.den,
                    value: c.value,
                    error: c.error,
                })
                .collect(),
        });
    }
    let report = ValidateReport {
        name: sc.name.clone(),
        n: sc.set.n(),
        modes,
        rational_ratios_ok: true,
        distinct_member_ok: true,
    };

    let mut text = String::new();
    if json {
        writeln!(text, "{}", serde_json::to_string_pretty(&report).unwrap()).unwrap();
    } else {
        writeln!(
            text,
            "scenario {}: {} topologies over n = {} agents",
            report.name,
            report.modes.len(),
            report.n
        )
        .unwrap();
        for m in &report.modes {
            writeln!(
                text,
                "  mode {}: eigenvalues {:?}, diameter {}, distinct {}, period {}/{} x {:.6} = {:.15}",
                m.index,
                m.eigenvalues,
                m.diameter,
                m.distinct,
                m.period.multiple.num,
                m.period.multiple.den,
                m.period.base,
                m.period.value
            )
            .unwrap();
        }
        writeln!(text, "  rational frequency ratios: OK").unwrap();
        writeln!(
            text,
            "  distinct-spectrum member: OK (modes {:?})",
            report
                .modes
                .iter()
                .filter(|m| m.distinct)
                .map(|m| m.index)
                .collect::<Vec<_>>()
        )
        .unwrap();
    }
    ok(text)
}

// ---- plan ------------------------------------------------------------------

/// Builds the plan a scenario asks for: explicit scalars when the
/// directive pins all of alpha/beta/kappa, a feasibility search
/// otherwise.
pub fn resolve_plan(
    sc: &Scenario,
    tau_hat: Option<f64>,
    m: Option<u32>,
) -> Result<SwitchPlan, CliError> {
    let directive = sc.plan;
    let tau_hat = tau_hat
        .or(directive.map(|d| d.tau_hat_max))
        .ok_or_else(|| CliError::parse("no plan directive in scenario and no --tau-hat".into()))?;
    let m = m.or(directive.map(|d| d.m)).unwrap_or(1);

    let params = match directive {
        Some(d) if d.alpha.is_some() && d.beta.is_some() && d.kappa.is_some() => SwitchParams {
            alpha: d.alpha.unwrap(),
            beta: d.beta.unwrap(),
            kappa: d.kappa.unwrap(),
            tau_hat_max: tau_hat,
            m,
            xi: 0.0, // recomputed by plan_dwell
        },
        _ => search_params(&sc.set, tau_hat, m).map_err(CliError::validation)?,
    };
    plan_dwell(&sc.set, &params).map_err(CliError::validation)
}

pub fn cmd_plan(
    path: &Path,
    tau_hat: Option<f64>,
    m: Option<u32>,
    out: Option<&Path>,
) -> Result<CmdOutput, CliError> {
    let sc = Scenario::load(path)?;
    let plan = resolve_plan(&sc, tau_hat, m)?;
    let report = certificate_report(&sc.set, &plan.params, plan.tau_min);

    let json = serde_json::to_string_pretty(&plan).unwrap();
    let mut text = String::new();
    writeln!(
        text,
        "plan for {}: alpha = {}, beta = {:e}, kappa = {}, tau_hat_max = {}, m = {}, xi = {}",
        sc.name,
        plan.params.alpha,
        plan.params.beta,
        plan.params.kappa,
        plan.params.tau_hat_max,
        plan.params.m,
        plan.params.xi
    )
    .unwrap();
    for (r, &d) in plan.dwell.iter().enumerate() {
        writeln!(text, "  dwell mode {}: {:.15}", r + 1, d).unwrap();
    }
    writeln!(
        text,
        "  slacks: base-dwell {:.3e}, dwell-lower {:?}, spectral {:.3e}",
        plan.slacks.cond22, plan.slacks.cond23, plan.slacks.cond24
    )
    .unwrap();
    writeln!(
        text,
        "  certificate: {} (worst lhs {:.3e})",
        if report.passed() { "PASS" } else { "FAIL" },
        report.worst_lhs()
    )
    .unwrap();

    match out {
        Some(p) => {
            std::fs::write(p, json).map_err(|e| CliError::parse(e.to_string()))?;
            writeln!(text, "  wrote {}", p.display()).unwrap();
        }
        None => writeln!(text, "{json}").unwrap(),
    }
    if !report.passed() {
        return Ok(CmdOutput { code: 1, text });
    }
    ok(text)
}

// ---- simulate ----------------------------------------------------------

#[derive(Serialize)]
struct SimulateSummary {
    name: String,
    t_end: f64,
    switch_count: usize,
    initial_v: f64,
    final_v: f64,
    initial_f: f64,
    final_f: f64,
    trace_csv: PathBuf,
}

fn output_paths(sc: &Scenario, out_dir: Option<&Path>) -> (PathBuf, PathBuf) {
    let trace = sc
        .trace_csv
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}_trace.csv", sc.name)));
    let summary = sc
        .summary_json
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}_summary.json", sc.name)));
    match out_dir {
        Some(dir) => (dir.join(trace), dir.join(summary)),
        None => (trace, summary),
    }
}

fn write_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| CliError::parse(e.to_string()))?,
    );
    trace
        .write_csv(&mut file)
        .map_err(|e| CliError::parse(e.to_string()))
}

pub fn cmd_simulate(
    path: &Path,
    fixed_mode: Option<usize>,
    plan_path: Option<&Path>,
    rk4: bool,
    out_dir: Option<&Path>,
) -> Result<CmdOutput, CliError> {
    let sc = Scenario::load(path)?;
    let t_end = sc.horizon.t_end;

    let signal = match (fixed_mode, plan_path) {
        (Some(r), _) => {
            if r == 0 || r > sc.set.modes() {
                return Err(CliError::parse(format!(
                    "--fixed-mode {r} out of range 1..={}",
                    sc.set.modes()
                )));
            }
            SwitchSignal::constant(r - 1)
        }
        (None, Some(p)) => {
            let plan = load_plan(p)?;
            make_signal(&plan, &round_robin(plan.modes()), t_end).map_err(CliError::validation)?
        }
        (None, None) => {
            let plan = resolve_plan(&sc, None, None)?;
            make_signal(&plan, &round_robin(plan.modes()), t_end).map_err(CliError::validation)?
        }
    };

    let propagator = if rk4 {
        Propagator::Rk4 { h: sc.horizon.h }
    } else {
        Propagator::ClosedForm
    };
    let varpi = sc.varpi;
    let trace = simulate_switched(
        &sc.set,
        &signal,
        &sc.x0,
        &sc.v0,
        t_end,
        propagator,
        sc.horizon.dt_sample,
        |f| metric_f(f, varpi),
    )
    .map_err(CliError::validation)?;

    let (trace_path, summary_path) = output_paths(&sc, out_dir);
    write_trace(&trace, &trace_path)?;

    let first = &trace.samples[0];
    let last = trace.final_sample();
    let summary = SimulateSummary {
        name: sc.name.clone(),
        t_end,
        switch_count: trace.switch_times.len(),
        initial_v: lyapunov_v(&first.x, &first.v),
        final_v: lyapunov_v(&last.x, &last.v),
        initial_f: first.metric,
        final_f: last.metric,
        trace_csv: trace_path.clone(),
    };
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).unwrap(),
    )
    .map_err(|e| CliError::parse(e.to_string()))?;

    log::info!("simulated {} to t = {t_end}", sc.name);
    let mut text = String::new();
    writeln!(
        text,
        "simulate {}: {} switches, V {:.6e} -> {:.6e}, F {:.6e} -> {:.6e}",
        sc.name,
        summary.switch_count,
        summary.initial_v,
        summary.final_v,
        summary.initial_f,
        summary.final_f
    )
    .unwrap();
    writeln!(
        text,
        "  trace {} summary {}",
        trace_path.display(),
        summary_path.display()
    )
    .unwrap();
    ok(text)
}

// ---- run ---------------------------------------------------------------

#[derive(Serialize)]
struct EstimateRow {
    t: f64,
    mode: usize,
    f: f64,
    fdot: f64,
}

#[derive(Serialize)]
struct RunSummary {
    name: String,
    verdict: Verdict,
    stopped_at: topoflock_core::StoppedAt,
    switch_count: usize,
    initial_f: f64,
    final_f: f64,
    trace_csv: PathBuf,
    estimates: Vec<EstimateRow>,
}

pub fn cmd_run(path: &Path, out_dir: Option<&Path>) -> Result<CmdOutput, CliError> {
    let sc = Scenario::load(path)?;
    let metric = sc.metric_config()?;
    let plan = resolve_plan(&sc, None, None)?;

    let mut cfg = RunConfig::new(
        sc.set.clone(),
        plan,
        metric,
        sc.estimator.clone(),
        sc.x0.clone(),
        sc.v0.clone(),
    );
    cfg.initial_mode = sc.initial_mode;
    cfg.t_max = sc.horizon.t_max;
    cfg.dt_sample = sc.horizon.dt_sample;
    cfg.seed = sc.seed;

    let result = run_algorithm1(&cfg).map_err(CliError::validation)?;

    let (trace_path, summary_path) = output_paths(&sc, out_dir);
    write_trace(&result.trace, &trace_path)?;
    let summary = RunSummary {
        name: sc.name.clone(),
        verdict: result.verdict,
        stopped_at: result.stopped_at,
        switch_count: result.switch_count,
        initial_f: result.estimates[0].f,
        final_f: result.final_f,
        trace_csv: trace_path.clone(),
        estimates: result
            .estimates
            .iter()
            .map(|e| EstimateRow {
                t: e.t,
                mode: e.mode + 1,
                f: e.f,
                fdot: e.fdot,
            })
            .collect(),
    };
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).unwrap(),
    )
    .map_err(|e| CliError::parse(e.to_string()))?;

    let mut text = String::new();
    writeln!(
        text,
        "run {}: verdict {:?} after {} switches, F {:.6e} -> {:.6e} (delta = {})",
        sc.name,
        result.verdict,
        result.switch_count,
        summary.initial_f,
        summary.final_f,
        metric.delta
    )
    .unwrap();
    writeln!(
        text,
        "  trace {} summary {}",
        trace_path.display(),
        summary_path.display()
    )
    .unwrap();

    let code = match result.verdict {
        Verdict::DeltaConsensus | Verdict::AsymptoticProgress => 0,
        Verdict::HorizonReached => 2,
    };
    Ok(CmdOutput { code, text })
}

// ---- verify ------------------------------------------------------------

pub fn cmd_verify_prop1(kappa: u32, grid: usize) -> Result<CmdOutput, CliError> {
    let report = verify_prop1(kappa, grid).map_err(CliError::validation)?;
    let mut text = String::new();
    writeln!(
        text,
        "contradiction function, kappa = {kappa}, {grid} samples on (0,1):"
    )
    .unwrap();
    writeln!(
        text,
        "  max g = {:.6e} at beta = {:.6} (strictly negative)",
        report.max_gtilde, report.argmax_beta
    )
    .unwrap();
    writeln!(
        text,
        "  extremum: beta* = {:.9}, g(beta*) = {:.6e}, stationarity residual {:.3e}",
        report.extremum_beta, report.extremum_value, report.identity_residual
    )
    .unwrap();
    writeln!(
        text,
        "  endpoints: g(1e-9) = {:.3e}, g(1 - 1e-9) = {:.3e}",
        report.endpoint_low, report.endpoint_high
    )
    .unwrap();
    ok(text)
}

pub fn load_plan(path: &Path) -> Result<SwitchPlan, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

pub fn cmd_verify_certificate(
    plan_path: &Path,
    scenario_path: &Path,
) -> Result<CmdOutput, CliError> {
    let plan = load_plan(plan_path)?;
    let sc = Scenario::load(scenario_path)?;
    let report = certificate_report(&sc.set, &plan.params, plan.tau_min);

    let mut text = String::new();
    writeln!(
        text,
        "certificate for {} at tau_min = {:.6}:",
        sc.name, report.tau_min
    )
    .unwrap();
    writeln!(
        text,
        "  {:>4} {:>12} {:>14} {:>14} {:>14}",
        "mode", "lambda", "ramp-up", "ramp-down", "tail"
    )
    .unwrap();
    for row in &report.rows {
        writeln!(
            text,
            "  {:>4} {:>12.6} {:>14.6e} {:>14.6e} {:>14.6e}",
            row.mode + 1,
            row.eigenvalue,
            row.ramp_up_lhs,
            row.ramp_down_lhs,
            row.tail_lhs
        )
        .unwrap();
    }
    writeln!(text, "  switch-discount lhs: {:.6e}", report.discount_lhs).unwrap();
    let passed = report.passed();
    if passed {
        writeln!(text, "  all inequalities strictly negative: PASS").unwrap();
    } else {
        for v in report.violations() {
            writeln!(text, "  VIOLATED: {v}").unwrap();
        }
    }
    Ok(CmdOutput {
        code: if passed { 0 } else { 1 },
        text,
    })
}
