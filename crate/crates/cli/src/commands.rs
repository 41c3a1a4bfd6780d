use std::f64::consts::SQRT_2;
use std::time::Instant;

use instrument_lab_core::bilateral::find_window;
use instrument_lab_core::optimize::{pareto_sweep, table1_cell, table1_reference, target_grid, ParameterSpace, Reference};
use instrument_lab_core::unilateral::{construct_sequence, validate_sequence, Case, Theorem1Params};
use instrument_lab_core::verify::{run_suite, Suite, Tolerances, REFERENCE_WINDOWS};
use instrument_lab_core::{Error, ReductionMode, ScenarioKind, Strategy};

use crate::config::RunConfig;
use crate::table::{sig6, write_atomic, Cell, ResultTable};

const TABLE1_STARTS: usize = 200;
const PARETO_STARTS: usize = 100;
const PARETO_TARGETS: usize = 100;
/// Floor on the starts of the projective max-min run that seeds the sweep.
const ANCHOR_STARTS: usize = 200;
const PHI_START: f64 = 0.1;
const MODES: [ReductionMode; 2] = [ReductionMode::Elliptical, ReductionMode::Linear];

/// Exit status plus message for runs that cannot produce a verdict.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Contract(_)) { 2 } else { 1 };
        Self { code, message: e.to_string() }
    }
}

pub struct Outcome {
    pub command: &'static str,
    pub table: ResultTable,
    /// Every scientific check held.
    pub ok: bool,
    pub starts: Option<usize>,
}

type Run = Result<Outcome, Failure>;

/// Adds provenance, renders and writes; returns whether the run passed.
pub fn emit(rc: &RunConfig, mut outcome: Outcome, started: Instant) -> Result<bool, Failure> {
    let t = &mut outcome.table;
    t.meta("command", outcome.command);
    t.meta("seed", rc.seed());
    if let Some(starts) = outcome.starts {
        t.meta("starts", starts);
    }
    t.meta("version", env!("CARGO_PKG_VERSION"));
    t.meta("wall_time", (started.elapsed().as_secs_f64() * 1e3).round() / 1e3);
    let text = t.render(rc.format.unwrap_or_default());
    match &rc.out {
        Some(path) => {
            write_atomic(path, &text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?
        }
        None => print!("{text}"),
    }
    Ok(outcome.ok)
}

pub fn verify(rc: &RunConfig) -> Run {
    let tol = match rc.tolerance {
        Some(t) => Tolerances::uniform(t)?,
        None => Tolerances::default(),
    };
    let suites = rc.suites.clone().unwrap_or_else(|| Suite::ALL.to_vec());
    let mut table = ResultTable::new(["suite", "property", "observed", "tolerance", "passed"]);
    let mut failures = Vec::new();
    for suite in suites {
        let checks = run_suite(suite, &tol, rc.seed())?;
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).cloned().collect();
        let worst = checks.iter().map(|c| c.observed).fold(0.0, f64::max);
        table.push(vec![
            suite.to_string().into(),
            format!("{} checks, {} failed", checks.len(), failed.len()).into(),
            worst.into(),
            Cell::Empty,
            failed.is_empty().into(),
        ]);
        failures.extend(failed);
    }
    for c in &failures {
        eprintln!("FAIL {}: {} observed {} > {}", c.suite, c.property, sig6(c.observed), sig6(c.tolerance));
        table.push(vec![
            c.suite.to_string().into(),
            c.property.clone().into(),
            c.observed.into(),
            c.tolerance.into(),
            false.into(),
        ]);
    }
    Ok(Outcome { command: "verify", table, ok: failures.is_empty(), starts: None })
}

pub fn table1(rc: &RunConfig) -> Run {
    if rc.strategy == Some(Strategy::Free) {
        return Err(Failure::usage("table1 covers the weak and ppm strategies only"));
    }
    let strategies = rc.strategy.map_or(vec![Strategy::Weak, Strategy::Ppm], |s| vec![s]);
    let scenarios =
        rc.scenario.map_or(vec![ScenarioKind::UnilateralK2, ScenarioKind::Bilateral], |s| vec![s]);
    let modes = rc.mode.map_or(MODES.to_vec(), |m| vec![m]);
    let cfg = rc.optimizer_config(TABLE1_STARTS);
    let mut table = ResultTable::new([
        "strategy",
        "scenario",
        "mode",
        "t_star",
        "s1",
        "s2",
        "reference",
        "reference_tol",
        "no_violation",
        "accepted",
        "argmax",
        "starts",
        "seed",
    ]);
    let mut ok = true;
    for &strategy in &strategies {
        for &scenario in &scenarios {
            for &mode in &modes {
                let r = table1_cell(scenario, strategy, mode, &cfg)?;
                let reference = table1_reference(scenario, strategy, mode)
                    .ok_or_else(|| Failure::usage(format!("no reference for {strategy}/{scenario}/{mode}")))?;
                let accepted = reference.accepts(r.t_star);
                ok &= accepted;
                let (ref_value, ref_tol) = match reference {
                    Reference::Value { value, tol } => (Cell::Num(value), tol),
                    Reference::NoViolation { tol } => (Cell::Text("none".into()), tol),
                };
                let space = ParameterSpace::new(scenario, strategy, mode);
                table.push(vec![
                    strategy.to_string().into(),
                    scenario.to_string().into(),
                    mode.to_string().into(),
                    r.t_star.into(),
                    r.s1.into(),
                    r.s2.into(),
                    ref_value,
                    ref_tol.into(),
                    (r.t_star <= 2.0 + 1e-6).into(),
                    accepted.into(),
                    argmax_summary(&space.names, &r.x).into(),
                    cfg.starts.into(),
                    cfg.seed.into(),
                ]);
            }
        }
    }
    Ok(Outcome { command: "table1", table, ok, starts: Some(cfg.starts) })
}

fn argmax_summary(names: &[String], x: &[f64]) -> String {
    names.iter().zip(x).map(|(n, v)| format!("{n}={}", sig6(*v))).collect::<Vec<_>>().join(" ")
}

pub fn pareto(rc: &RunConfig) -> Run {
    let mode = rc.mode.unwrap_or(ReductionMode::Elliptical);
    let [lo, hi] = rc.range.unwrap_or([2.0, 2.0 * SQRT_2]);
    if !(lo <= hi) {
        return Err(Failure::usage(format!("empty range [{lo}, {hi}]")));
    }
    let count = rc.targets.unwrap_or(PARETO_TARGETS);
    if count == 0 {
        return Err(Failure::usage("at least one target is needed"));
    }
    let cfg = rc.optimizer_config(PARETO_STARTS);
    let mut table_meta = Vec::new();
    let anchors = if rc.anchor.unwrap_or(true) {
        let mut anchor_cfg = cfg;
        anchor_cfg.starts = anchor_cfg.starts.max(ANCHOR_STARTS);
        let mm = table1_cell(ScenarioKind::Bilateral, Strategy::Ppm, mode, &anchor_cfg)?;
        table_meta.push(("anchor_t_star", mm.t_star));
        vec![mm.point]
    } else {
        Vec::new()
    };
    let points = pareto_sweep(mode, &target_grid(lo, hi, count), &anchors, &cfg)?;
    let space = ParameterSpace::new(ScenarioKind::Bilateral, Strategy::Free, mode);
    let mut columns = vec!["s1_target", "s2_max", "s1_achieved", "feasible"];
    columns.extend(space.names.iter().map(String::as_str));
    let mut table = ResultTable::new(columns);
    let mut best: Option<f64> = None;
    for p in &points {
        let mut row: Vec<Cell> = vec![p.s1_target.into(), p.s2_max.into(), p.s1_achieved.into(), p.feasible.into()];
        match &p.argmax {
            Some(x) => row.extend(x.iter().map(|&v| Cell::Num(v))),
            None => row.extend(space.names.iter().map(|_| Cell::Empty)),
        }
        table.push(row);
        if let (Some(s1), Some(s2)) = (p.s1_achieved, p.s2_max) {
            best = Some(best.map_or(s1.min(s2), |b| b.max(s1.min(s2))));
        }
    }
    table.meta("mode", mode.to_string());
    for (k, v) in table_meta {
        table.meta(k, v);
    }
    table.meta("best_simultaneous", best);
    Ok(Outcome { command: "pareto", table, ok: true, starts: Some(cfg.starts) })
}

pub fn theorem1(rc: &RunConfig) -> Run {
    let mut params = Theorem1Params::new(rc.n.unwrap_or(2), rc.case.unwrap_or(Case::I));
    if let Some(c) = rc.c {
        params.c = c;
    }
    if let Some(e) = rc.e {
        params.e = e;
    }
    if let Some(eps_rel) = rc.eps_rel {
        params.eps_rel = eps_rel;
    }
    params.eps_abs = rc.eps;
    if let Some(rule) = rc.beta_rule {
        params.delta = rule;
    }
    let seq = construct_sequence(&params, rc.phi0.unwrap_or(PHI_START))?;
    let report = validate_sequence(&seq);
    let mut table = ResultTable::new([
        "k", "alpha", "beta", "mode", "lower_bound", "beta_lo", "beta_hi", "s_closed", "s_simulated", "margin", "valid",
    ]);
    for s in &report.steps {
        table.push(vec![
            s.k.into(),
            s.alpha.into(),
            s.beta.into(),
            s.mode.to_string().into(),
            s.lower_bound.into(),
            s.beta_lo.into(),
            s.beta_hi.into(),
            s.s_closed.into(),
            s.s_simulated.into(),
            s.margin_closed.into(),
            s.valid().into(),
        ]);
    }
    table.meta("n", params.n);
    table.meta("case", params.case.to_string());
    table.meta("phi", seq.phi);
    table.meta("theta", seq.theta);
    table.meta("min_margin", report.min_margin());
    table.meta("verdict", if report.valid { "valid" } else { "invalid" });
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
        table.meta("error", e);
    }
    Ok(Outcome { command: "theorem1", table, ok: report.valid, starts: None })
}

pub fn windows(rc: &RunConfig) -> Run {
    let mut table =
        ResultTable::new(["mode", "rule", "lo", "hi", "ref_lo", "ref_hi", "delta", "tol", "within"]);
    let mut ok = true;
    for (mode, rule, ref_lo, ref_hi, tol) in REFERENCE_WINDOWS {
        if rc.mode.is_some_and(|m| m != mode) || rc.rule.is_some_and(|r| r != rule) {
            continue;
        }
        let (lo, hi, delta) = match find_window(mode, rule) {
            Ok((lo, hi)) => (Some(lo), Some(hi), Some((lo - ref_lo).abs().max((hi - ref_hi).abs()))),
            Err(Error::EmptyWindow(msg)) => {
                eprintln!("{mode}/{rule}: {msg}");
                (None, None, None)
            }
            Err(e) => return Err(e.into()),
        };
        let within = delta.is_some_and(|d| d <= tol);
        ok &= within;
        table.push(vec![
            mode.to_string().into(),
            rule.to_string().into(),
            lo.into(),
            hi.into(),
            ref_lo.into(),
            ref_hi.into(),
            delta.into(),
            tol.into(),
            within.into(),
        ]);
    }
    Ok(Outcome { command: "windows", table, ok, starts: None })
}
