//! Seeded multistart optimization over scenario parameters.
//!
//! Starts are drawn up front from a `ChaCha8Rng` seeded with a `u64`, so the
//! first `n` starts of a run with `2n` starts coincide with a run of `n`.
//! The reduction over starts is done in start order after all local solves
//! have finished, so sequential and parallel execution report the same best
//! point.

mod local;
mod space;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bilateral::{ansatz_at, ThetaRule};
use crate::error::{contract, Error, Result};
use crate::instruments::ReductionMode;
use crate::scenario::TSIRELSON;

pub use local::{local_solve, Evaluation, LocalResult, Problem};
pub use space::{ParameterSpace, ScenarioKind, ScenarioPoint, Strategy, ALPHA_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub seed: u64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Projected-gradient tolerance of the inner loop.
    pub kkt_tol: f64,
    /// Inner iterations per start, summed over outer rounds.
    pub max_iters: usize,
    pub max_outer: usize,
    pub rho0: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    /// Inequality and equality violation accepted by the outer loop.
    pub feas_tol: f64,
    /// Equality residual below which a start counts as feasible.
    pub eq_tol: f64,
    pub parallel: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 200,
            seed: 0,
            fd_step: 1e-6,
            kkt_tol: 1e-8,
            max_iters: 500,
            max_outer: 12,
            rho0: 100.0,
            rho_growth: 10.0,
            rho_max: 1e8,
            feas_tol: 1e-9,
            eq_tol: 1e-6,
            parallel: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(contract("at least one start is required"));
        }
        self.validate_solver()
    }

    fn validate_solver(&self) -> Result<()> {
        let positive = [self.fd_step, self.kkt_tol, self.rho0, self.feas_tol, self.eq_tol, self.rho_max];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.rho_growth > 1.0) {
            return Err(contract("tolerances and penalty parameters must be positive"));
        }
        if self.max_iters == 0 {
            return Err(contract("max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub index: usize,
    /// Objective at the end of the local solve; `None` if the start was abandoned.
    pub value: Option<f64>,
    pub feasible: bool,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub value: f64,
    pub x: Vec<f64>,
    /// Inequality values followed by equality values at `x`.
    pub residuals: Vec<f64>,
    pub feasible: bool,
    pub converged: bool,
    pub best_start: usize,
    pub trace: Vec<StartTrace>,
    pub wall_time: f64,
}

/// Draws `cfg.starts` points from `problem`'s sampler, in order, from one
/// `ChaCha8Rng` stream seeded with `cfg.seed`.
pub fn draw_starts<P: Problem + ?Sized>(problem: &P, cfg: &OptimizerConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.starts).map(|_| problem.sample(&mut rng)).collect()
}

/// Objective of a local result whose constraints hold within `cfg.eq_tol`.
pub fn feasible_objective(r: &LocalResult, cfg: &OptimizerConfig) -> Option<f64> {
    let ev = &r.eval;
    (ev.max_eq_violation() <= cfg.eq_tol && ev.max_ineq_violation() <= cfg.eq_tol).then_some(ev.objective)
}

/// `a` beats `b`: larger value, then lexicographically smaller vector.
fn better(a: (f64, &[f64]), b: (f64, &[f64])) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    a.1.iter().zip(b.1).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

/// Runs [`local_solve`] from every start and keeps the best feasible result.
///
/// `prepare` may adjust each drawn start (e.g. to seed an epigraph variable);
/// `score` maps a finished local result to the reported value, or `None` if
/// it does not count as feasible.
pub fn multistart<P, F, S>(problem: &P, cfg: &OptimizerConfig, prepare: F, score: S) -> Result<OptimResult>
where
    P: Problem,
    F: Fn(&mut Vec<f64>) + Sync,
    S: Fn(&LocalResult) -> Option<f64> + Sync,
{
    multistart_seeded(problem, cfg, &[], prepare, score)
}

/// [`multistart`] with caller-supplied starts run after the random ones;
/// their trace indices continue from `cfg.starts`.
pub fn multistart_seeded<P, F, S>(
    problem: &P,
    cfg: &OptimizerConfig,
    seeds: &[Vec<f64>],
    prepare: F,
    score: S,
) -> Result<OptimResult>
where
    P: Problem,
    F: Fn(&mut Vec<f64>) + Sync,
    S: Fn(&LocalResult) -> Option<f64> + Sync,
{
    cfg.validate_solver()?;
    if cfg.starts + seeds.len() == 0 {
        return Err(contract("at least one start is required"));
    }
    if let Some(s) = seeds.iter().find(|s| s.len() != problem.dim()) {
        return Err(contract(format!("seed has {} coordinates, expected {}", s.len(), problem.dim())));
    }
    let clock = Instant::now();
    let mut starts = draw_starts(problem, cfg);
    for s in seeds {
        let mut x = s.clone();
        problem.project(&mut x);
        starts.push(x);
    }
    let solve = |x0: &Vec<f64>| {
        let mut x = x0.clone();
        prepare(&mut x);
        local_solve(problem, &x, cfg)
    };
    let results: Vec<Option<LocalResult>> =
        if cfg.parallel { starts.par_iter().map(solve).collect() } else { starts.iter().map(solve).collect() };

    let mut trace = Vec::with_capacity(results.len());
    let mut best: Option<(usize, f64)> = None;
    for (index, r) in results.iter().enumerate() {
        let entry = match r {
            None => StartTrace { index, value: None, feasible: false, converged: false, iterations: 0 },
            Some(r) => {
                let value = score(r).filter(|v| v.is_finite());
                let feasible = value.is_some();
                if let Some(value) = value {
                    let replace = match best {
                        None => true,
                        Some((b, bv)) => better((value, &r.x), (bv, &results[b].as_ref().unwrap().x)),
                    };
                    if replace {
                        best = Some((index, value));
                    }
                }
                StartTrace { index, value: value.or(Some(r.eval.objective)), feasible, converged: r.converged, iterations: r.iterations }
            }
        };
        trace.push(entry);
    }
    let wall_time = clock.elapsed().as_secs_f64();
    let (index, value) = best.ok_or_else(|| Error::Infeasible(format!("none of {} starts ended feasible", starts.len())))?;
    let r = results[index].as_ref().unwrap();
    Ok(OptimResult {
        value,
        x: r.x.clone(),
        residuals: r.eval.ineq.iter().chain(&r.eval.eq).copied().collect(),
        feasible: true,
        converged: r.converged,
        best_start: index,
        trace,
        wall_time,
    })
}

/// `max t` subject to `S_1 ≥ t`, `S_2 ≥ t`; the last coordinate is `t`.
pub struct MaxMinProblem {
    pub space: ParameterSpace,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl MaxMinProblem {
    pub fn new(space: ParameterSpace) -> Self {
        let mut lower = space.lower.clone();
        let mut upper = space.upper.clone();
        lower.push(-TSIRELSON);
        upper.push(TSIRELSON);
        Self { space, lower, upper }
    }

    pub fn chsh(&self, x: &[f64]) -> Option<[f64; 2]> {
        self.space.decode(&x[..self.space.dim()]).ok()?.chsh_fast().ok()
    }
}

impl Problem for MaxMinProblem {
    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = self.space.sample(rng);
        x.push(0.0);
        x
    }

    fn eval(&self, x: &[f64]) -> Option<Evaluation> {
        let [s1, s2] = self.chsh(x)?;
        let t = x[self.space.dim()];
        Some(Evaluation { objective: t, ineq: vec![s1 - t, s2 - t], eq: Vec::new() })
    }
}

/// Weight on the Pareto equality residual. Frontier values differ by
/// `O(10⁻²)` while dropping the constraint gains up to `2√2 − 2`, so the
/// residual is scaled up rather than raising `rho0` for every problem.
pub const PARETO_EQ_SCALE: f64 = 300.0;

/// `max S_2` subject to `S_1 = target`.
pub struct ParetoProblem {
    pub space: ParameterSpace,
    pub target: f64,
}

impl Problem for ParetoProblem {
    fn lower(&self) -> &[f64] {
        &self.space.lower
    }

    fn upper(&self) -> &[f64] {
        &self.space.upper
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.space.sample(rng)
    }

    fn eval(&self, x: &[f64]) -> Option<Evaluation> {
        let [s1, s2] = self.space.decode(x).ok()?.chsh_fast().ok()?;
        Some(Evaluation { objective: s2, ineq: Vec::new(), eq: vec![PARETO_EQ_SCALE * (s1 - self.target)] })
    }
}

/// Result of [`max_min_double`]: `t* = min(S_1, S_2)` at the best point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinResult {
    pub scenario: ScenarioKind,
    pub strategy: Strategy,
    pub mode: ReductionMode,
    pub t_star: f64,
    pub s1: f64,
    pub s2: f64,
    /// Scenario parameters without the epigraph variable.
    pub x: Vec<f64>,
    pub point: ScenarioPoint,
    pub result: OptimResult,
}

pub fn max_min_double(
    scenario: ScenarioKind,
    strategy: Strategy,
    mode: ReductionMode,
    cfg: &OptimizerConfig,
) -> Result<MaxMinResult> {
    max_min_double_seeded(scenario, strategy, mode, &[], cfg)
}

/// [`max_min_double`] with extra starts at `seeds`, run after the random ones.
pub fn max_min_double_seeded(
    scenario: ScenarioKind,
    strategy: Strategy,
    mode: ReductionMode,
    seeds: &[ScenarioPoint],
    cfg: &OptimizerConfig,
) -> Result<MaxMinResult> {
    let space = ParameterSpace::new(scenario, strategy, mode);
    let n = space.dim();
    let seeds = seeds
        .iter()
        .map(|p| {
            let mut x = space.encode(p)?;
            x.push(0.0);
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    let problem = MaxMinProblem::new(space.clone());
    let prepare = |x: &mut Vec<f64>| {
        if let Some([s1, s2]) = problem.chsh(x) {
            x[n] = s1.min(s2);
        }
    };
    let score = |r: &LocalResult| problem.chsh(&r.x).map(|[a, b]| a.min(b));
    let mut result = multistart_seeded(&problem, cfg, &seeds, prepare, score)?;
    let x = result.x[..n].to_vec();
    let point = space.decode(&x)?;
    let [s1, s2] = point.chsh_fast()?;
    result.x[n] = s1.min(s2);
    result.residuals = vec![s1 - result.x[n], s2 - result.x[n]];
    Ok(MaxMinResult { scenario, strategy, mode, t_star: s1.min(s2), s1, s2, x, point, result })
}

/// Points of the closed-form bilateral ansatz on a grid of sharpness,
/// angle and both θ rules. They lie in the projective space of `mode` and
/// serve as structured starts for the bilateral searches.
pub fn ansatz_seeds(mode: ReductionMode) -> Result<Vec<ScenarioPoint>> {
    const ALPHAS: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    const PHIS: [f64; 3] = [0.05, 0.1, 0.2];
    let mut out = Vec::with_capacity(2 * ALPHAS.len() * PHIS.len());
    for rule in [ThetaRule::Maximal, ThetaRule::Shifted] {
        for alpha in ALPHAS {
            for phi in PHIS {
                out.push(ScenarioPoint::Bilateral(ansatz_at(mode, alpha, phi, rule)?));
            }
        }
    }
    Ok(out)
}

/// Max-min run for one reference-table cell: projective bilateral cells add
/// [`ansatz_seeds`] to the random starts.
pub fn table1_cell(
    scenario: ScenarioKind,
    strategy: Strategy,
    mode: ReductionMode,
    cfg: &OptimizerConfig,
) -> Result<MaxMinResult> {
    let seeds = match (scenario, strategy) {
        (ScenarioKind::Bilateral, Strategy::Ppm) => ansatz_seeds(mode)?,
        _ => Vec::new(),
    };
    max_min_double_seeded(scenario, strategy, mode, &seeds, cfg)
}

/// Reference max-min value for one table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Reference {
    Value { value: f64, tol: f64 },
    /// No double violation: the best value found must stay at or below `2 + tol`.
    NoViolation { tol: f64 },
}

impl Reference {
    pub fn accepts(&self, t_star: f64) -> bool {
        match *self {
            Reference::Value { value, tol } => (t_star - value).abs() <= tol,
            Reference::NoViolation { tol } => t_star <= 2.0 + tol,
        }
    }
}

pub fn table1_reference(scenario: ScenarioKind, strategy: Strategy, mode: ReductionMode) -> Option<Reference> {
    use ReductionMode::{Elliptical as E, Linear as L};
    use ScenarioKind::{Bilateral as Bi, UnilateralK2 as Uni};
    let value = |value, tol| Some(Reference::Value { value, tol });
    match (strategy, scenario, mode) {
        (Strategy::Weak, Uni, E) => value(2.2627, 1e-3),
        (Strategy::Weak, Uni, L) => value(2.0354, 1e-3),
        (Strategy::Ppm, Uni, E) => value(2.1378, 1e-3),
        (Strategy::Ppm, Uni, L) => value(2.0569, 1e-3),
        (Strategy::Ppm, Bi, E) => value(2.0042, 5e-4),
        (Strategy::Ppm, Bi, L) => value(2.00123, 5e-4),
        (Strategy::Weak, Bi, _) => Some(Reference::NoViolation { tol: 1e-6 }),
        (Strategy::Free, ..) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub s1_target: f64,
    /// `None` when no start met the equality constraint.
    pub s2_max: Option<f64>,
    pub s1_achieved: Option<f64>,
    pub argmax: Option<Vec<f64>>,
    pub feasible: bool,
}

/// Uniform targets over `[lo, hi]`, endpoints included.
pub fn target_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Traces the frontier `max S_2` at fixed `S_1` over `targets` in the free
/// bilateral space.
///
/// Each target runs `cfg.starts` random starts plus the `anchors` and the
/// best argmax of the lower neighbour. Two continuation passes follow,
/// upward then downward, re-solving each target from its neighbour's argmax
/// and keeping whichever point has the larger `S_2`.
pub fn pareto_sweep(
    mode: ReductionMode,
    targets: &[f64],
    anchors: &[ScenarioPoint],
    cfg: &OptimizerConfig,
) -> Result<Vec<ParetoPoint>> {
    cfg.validate()?;
    if let Some(t) = targets.iter().find(|t| !(2.0..=TSIRELSON + 1e-12).contains(*t)) {
        return Err(contract(format!("target {t} outside [2, 2√2]")));
    }
    let mut sorted = targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let space = ParameterSpace::new(ScenarioKind::Bilateral, Strategy::Free, mode);
    let anchors = anchors.iter().map(|p| space.encode(p)).collect::<Result<Vec<_>>>()?;

    let solve = |target: f64, cfg: &OptimizerConfig, seeds: &[Vec<f64>]| -> Result<ParetoPoint> {
        let problem = ParetoProblem { space: space.clone(), target };
        // Feasibility is judged on |S1 - target|, not on the scaled residual.
        let score = |r: &LocalResult| {
            let ev = &r.eval;
            (ev.max_eq_violation() <= cfg.eq_tol * PARETO_EQ_SCALE && ev.max_ineq_violation() <= cfg.eq_tol)
                .then_some(ev.objective)
        };
        match multistart_seeded(&problem, cfg, seeds, |_| {}, score) {
            Ok(r) => {
                let [s1, s2] = space.decode(&r.x)?.chsh_fast()?;
                Ok(ParetoPoint {
                    s1_target: target,
                    s2_max: Some(s2),
                    s1_achieved: Some(s1),
                    argmax: Some(r.x),
                    feasible: true,
                })
            }
            Err(Error::Infeasible(_)) => {
                Ok(ParetoPoint { s1_target: target, s2_max: None, s1_achieved: None, argmax: None, feasible: false })
            }
            Err(e) => Err(e),
        }
    };

    let mut out: Vec<ParetoPoint> = Vec::with_capacity(sorted.len());
    for &target in &sorted {
        let mut seeds = anchors.clone();
        if let Some(x) = out.last().and_then(|p| p.argmax.clone()) {
            seeds.push(x);
        }
        out.push(solve(target, cfg, &seeds)?);
    }
    let seeds_only = OptimizerConfig { starts: 0, ..*cfg };
    // Walks from a solved neighbour to `to`, splitting the step when a
    // substep ends infeasible.
    let march = |from: f64, x: &[f64], to: f64| -> Result<Option<ParetoPoint>> {
        'split: for pieces in [1u32, 2, 4, 8] {
            let mut x = x.to_vec();
            let mut last = None;
            for k in 1..=pieces {
                let t = if k == pieces { to } else { from + (to - from) * f64::from(k) / f64::from(pieces) };
                let p = solve(t, &seeds_only, &[x])?;
                match &p.argmax {
                    Some(next) => x = next.clone(),
                    None => continue 'split,
                }
                last = Some(p);
            }
            return Ok(last);
        }
        Ok(None)
    };
    let keep_better = |slot: &mut ParetoPoint, p: Option<ParetoPoint>| {
        let Some(p) = p else { return };
        let improves = match (p.s2_max, slot.s2_max) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            _ => false,
        };
        if improves {
            *slot = p;
        }
    };
    for i in 1..out.len() {
        if let Some(x) = out[i - 1].argmax.clone() {
            let p = march(sorted[i - 1], &x, sorted[i])?;
            keep_better(&mut out[i], p);
        }
    }
    for i in (0..out.len().saturating_sub(1)).rev() {
        if let Some(x) = out[i + 1].argmax.clone() {
            let p = march(sorted[i + 1], &x, sorted[i])?;
            keep_better(&mut out[i], p);
        }
    }
    Ok(out)
}
