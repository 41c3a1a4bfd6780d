//! Augmented-Lagrangian outer loop around a projected BFGS inner loop.
//!
//! Everything is phrased as maximization of an objective subject to
//! inequalities `g(x) ≥ 0`, equalities `h(x) = 0` and box bounds. Box bounds
//! are enforced exactly by projection; the other constraints enter through
//! the Powell–Hestenes–Rockafellar penalty.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OptimizerConfig;

/// Objective and constraint values at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    /// Inequalities, feasible when `≥ 0`.
    pub ineq: Vec<f64>,
    /// Equalities, feasible when `= 0`.
    pub eq: Vec<f64>,
}

impl Evaluation {
    pub fn unconstrained(objective: f64) -> Self {
        Self { objective, ineq: Vec::new(), eq: Vec::new() }
    }

    fn is_finite(&self) -> bool {
        self.objective.is_finite() && self.ineq.iter().chain(&self.eq).all(|v| v.is_finite())
    }

    pub fn max_ineq_violation(&self) -> f64 {
        self.ineq.iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max)
    }

    pub fn max_eq_violation(&self) -> f64 {
        self.eq.iter().map(|h| h.abs()).fold(0.0, f64::max)
    }
}

/// A bounded maximization problem.
pub trait Problem: Sync {
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    /// `None` marks points where the model cannot be evaluated.
    fn eval(&self, x: &[f64]) -> Option<Evaluation>;

    fn dim(&self) -> usize {
        self.lower().len()
    }

    /// One random start; uniform in the box unless overridden.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower().iter().zip(self.upper()).map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect()
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(self.lower()).zip(self.upper()) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub eval: Evaluation,
    /// Infinity norm of the projected gradient of the final merit function.
    pub stationarity: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Merit<'a, P: Problem + ?Sized> {
    problem: &'a P,
    lam_ineq: Vec<f64>,
    lam_eq: Vec<f64>,
    rho: f64,
    evaluations: usize,
}

impl<P: Problem + ?Sized> Merit<'_, P> {
    fn value_of(&self, ev: &Evaluation) -> f64 {
        let mut m = -ev.objective;
        for (g, mu) in ev.ineq.iter().zip(&self.lam_ineq) {
            let v = (mu - self.rho * g).max(0.0);
            m += (v * v - mu * mu) / (2.0 * self.rho);
        }
        for (h, la) in ev.eq.iter().zip(&self.lam_eq) {
            m += -la * h + 0.5 * self.rho * h * h;
        }
        m
    }

    fn value(&mut self, x: &[f64]) -> Option<f64> {
        self.evaluations += 1;
        let ev = self.problem.eval(x)?;
        ev.is_finite().then(|| self.value_of(&ev))
    }

    /// Central differences, one-sided where a bound is within reach.
    fn gradient(&mut self, x: &[f64], fx: f64, rel_step: f64) -> Option<Vec<f64>> {
        let (lo, hi) = (self.problem.lower(), self.problem.upper());
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let h = rel_step * x[i].abs().max(1.0);
            let up = x[i] + h <= hi[i];
            let down = x[i] - h >= lo[i];
            g[i] = match (up, down) {
                (true, true) => {
                    probe[i] = x[i] + h;
                    let fp = self.value(&probe)?;
                    probe[i] = x[i] - h;
                    let fm = self.value(&probe)?;
                    (fp - fm) / (2.0 * h)
                }
                (true, false) => {
                    probe[i] = x[i] + h;
                    (self.value(&probe)? - fx) / h
                }
                (false, true) => {
                    probe[i] = x[i] - h;
                    (fx - self.value(&probe)?) / h
                }
                (false, false) => 0.0,
            };
            probe[i] = x[i];
        }
        Some(g)
    }
}

/// Least-squares multiplier of a single equality at `x`, from
/// `−∇f − λ∇h = 0` restricted to coordinates away from the bounds.
fn equality_multiplier<P: Problem + ?Sized>(problem: &P, x: &[f64], rel_step: f64) -> Option<f64> {
    let (lo, hi) = (problem.lower(), problem.upper());
    let mut probe = x.to_vec();
    let (mut fh, mut hh) = (0.0, 0.0);
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        if x[i] - h < lo[i] || x[i] + h > hi[i] {
            continue;
        }
        probe[i] = x[i] + h;
        let p = problem.eval(&probe)?;
        probe[i] = x[i] - h;
        let m = problem.eval(&probe)?;
        probe[i] = x[i];
        let df = (p.objective - m.objective) / (2.0 * h);
        let dh = (p.eq[0] - m.eq[0]) / (2.0 * h);
        fh += df * dh;
        hh += dh * dh;
    }
    let lam = -fh / hh;
    (hh > 0.0 && lam.is_finite()).then_some(lam)
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((xi, gi), (l, h))| ((xi - gi).clamp(*l, *h) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Inner {
    x: Vec<f64>,
    stationarity: f64,
    /// No Armijo step exists along steepest descent: the finite-difference noise floor.
    stalled: bool,
    iterations: usize,
}

/// Minimizes the merit function over the box with a projected BFGS method.
///
/// Coordinates within `min(1e-3, stationarity)` of a bound that the gradient
/// pushes outward are held fixed for the step.
fn minimize_box<P: Problem + ?Sized>(
    merit: &mut Merit<'_, P>,
    mut x: Vec<f64>,
    budget: usize,
    tol: f64,
    cfg: &OptimizerConfig,
) -> Option<Inner> {
    let lo = merit.problem.lower().to_vec();
    let hi = merit.problem.upper().to_vec();
    let n = x.len();
    let mut fx = merit.value(&x)?;
    let mut g = merit.gradient(&x, fx, cfg.fd_step)?;
    let mut hinv = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut stationarity = projected_gradient_norm(&x, &g, &lo, &hi);

    while iterations < budget && stationarity > tol {
        iterations += 1;
        let eps = stationarity.min(1e-3);
        let free: Vec<bool> =
            (0..n).map(|i| !((x[i] - lo[i] <= eps && g[i] > 0.0) || (hi[i] - x[i] <= eps && g[i] < 0.0))).collect();
        let mut d = direction(&hinv, &g, &free);
        if dot(&d, &g) >= 0.0 {
            hinv = identity(n);
            fresh = true;
            d = direction(&hinv, &g, &free);
        }
        if fresh {
            // Keep the first step inside a modest trust region.
            let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale > 0.5 {
                d.iter_mut().for_each(|v| *v *= 0.5 / scale);
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            merit.problem.project(&mut xn);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &s);
            if decrease < 0.0 {
                if let Some(fnew) = merit.value(&xn) {
                    if fnew <= fx + 1e-4 * decrease {
                        accepted = Some((xn, fnew, s));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, s)) = accepted else {
            if fresh {
                return Some(Inner { x, stationarity, stalled: true, iterations });
            }
            hinv = identity(n);
            fresh = true;
            continue;
        };
        let gn = merit.gradient(&xn, fnew, cfg.fd_step)?;
        if step < 1e-4 {
            // Curvature pairs from tiny steps are mostly noise.
            x = xn;
            fx = fnew;
            g = gn;
            stationarity = projected_gradient_norm(&x, &g, &lo, &hi);
            hinv = identity(n);
            fresh = true;
            continue;
        }
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let gamma = sy / dot(&y, &y);
                hinv.iter_mut().enumerate().for_each(|(i, row)| row[i] = gamma);
            }
            bfgs_update(&mut hinv, &s, &y, sy);
            fresh = false;
        }
        x = xn;
        fx = fnew;
        g = gn;
        stationarity = projected_gradient_norm(&x, &g, &lo, &hi);
    }
    Some(Inner { x, stationarity, stalled: false, iterations })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Quasi-Newton step on the free coordinates, plain gradient step on the held ones.
fn direction(hinv: &[Vec<f64>], g: &[f64], free: &[bool]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if !free[i] {
                return -g[i];
            }
            -(0..n).filter(|&j| free[j]).map(|j| hinv[i][j] * g[j]).sum::<f64>()
        })
        .collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1/(sᵀy)`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + r * yhy) * r * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Inner tolerance of the first outer round; tightened tenfold per round.
const INNER_ROUNDS: usize = 4;

const FIRST_INNER_TOL: f64 = 1e-3;

/// Solves from `start`; `None` when the model cannot be evaluated there.
///
/// `converged` means the final point is feasible within `feas_tol` and either
/// meets `kkt_tol` or sits on the finite-difference noise floor with a
/// projected gradient below `√kkt_tol`.
pub fn local_solve<P: Problem + ?Sized>(problem: &P, start: &[f64], cfg: &OptimizerConfig) -> Option<LocalResult> {
    let mut x = start.to_vec();
    problem.project(&mut x);
    let first = problem.eval(&x)?;
    let mut merit = Merit {
        problem,
        lam_ineq: vec![0.0; first.ineq.len()],
        lam_eq: vec![0.0; first.eq.len()],
        rho: cfg.rho0,
        evaluations: 1,
    };
    if first.eq.len() == 1 && first.ineq.is_empty() {
        if let Some(lam) = equality_multiplier(problem, &x, cfg.fd_step) {
            merit.lam_eq[0] = lam;
        }
    }
    let constrained = !(first.ineq.is_empty() && first.eq.is_empty());
    let mut tol = if constrained { FIRST_INNER_TOL.max(cfg.kkt_tol) } else { cfg.kkt_tol };
    let mut iterations = 0;
    let mut prev_violation = f64::INFINITY;
    let mut stationarity = f64::INFINITY;
    let mut at_floor = false;
    for _ in 0..cfg.max_outer.max(1) {
        // One round may not spend the whole budget, so multipliers get updated.
        let round_cap = if constrained { cfg.max_iters.div_ceil(INNER_ROUNDS) } else { cfg.max_iters };
        let budget = cfg.max_iters.saturating_sub(iterations).min(round_cap);
        if budget == 0 {
            break;
        }
        let inner = minimize_box(&mut merit, x, budget, tol, cfg)?;
        iterations += inner.iterations;
        x = inner.x;
        stationarity = inner.stationarity;
        at_floor = inner.stalled;
        if !constrained {
            break;
        }
        let ev = problem.eval(&x)?;
        let violation = ev.max_ineq_violation().max(ev.max_eq_violation());
        for (mu, g) in merit.lam_ineq.iter_mut().zip(&ev.ineq) {
            *mu = (*mu - merit.rho * g).max(0.0);
        }
        for (la, h) in merit.lam_eq.iter_mut().zip(&ev.eq) {
            *la -= merit.rho * h;
        }
        if violation <= cfg.feas_tol && tol <= cfg.kkt_tol && (stationarity <= tol || at_floor) {
            break;
        }
        if violation > cfg.feas_tol && violation > 0.25 * prev_violation {
            merit.rho = (merit.rho * cfg.rho_growth).min(cfg.rho_max);
        }
        prev_violation = violation;
        tol = (tol * 0.1).max(cfg.kkt_tol);
    }
    let eval = problem.eval(&x)?;
    let violation = eval.max_ineq_violation().max(eval.max_eq_violation());
    let stationary = stationarity <= cfg.kkt_tol || (at_floor && stationarity <= cfg.kkt_tol.sqrt());
    let converged = violation <= cfg.feas_tol && stationary;
    Some(LocalResult { x, eval, stationarity, converged, iterations, evaluations: merit.evaluations })
}
