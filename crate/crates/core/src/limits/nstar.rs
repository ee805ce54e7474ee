//! The threshold `N*` for mass action with immobile susceptibles:
//!
//! ```text
//! N* = sup { lambda . S0 + (1 - lambda) . r : 0 <= lambda <= 1,
//!            s(dI L + diag(beta o lambda o (S0 - r))) <= 0 }
//! ```
//!
//! The objective is affine in `lambda` and the spectral bound of a
//! quasi-positive matrix is convex in its diagonal, so the feasible set is
//! convex. We bisect on the objective level `c` and decide each level by
//! minimizing the spectral bound over the slice `{objective >= c}` with
//! projected gradient descent. A level is feasible once a point with
//! nonpositive spectral bound turns up, and certified infeasible once the
//! linearization lower bound (Frank-Wolfe gap) is positive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{local_risk, EpidemicScenario, Mechanism};
use crate::netmat::{perron_root, spectral_bound, PowerSettings, SquareMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NStarSettings {
    /// Bisection stops when `upper - lower <= rel_gap * max(1, lower)`.
    pub rel_gap: f64,
    /// A point is feasible when its spectral bound is at most this value.
    pub feasibility_tol: f64,
    pub max_bisections: usize,
    pub max_descent_steps: usize,
    /// Random starting points per level, on top of the deterministic ones.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for NStarSettings {
    fn default() -> Self {
        Self {
            rel_gap: 1e-9,
            feasibility_tol: 1e-11,
            max_bisections: 200,
            max_descent_steps: 400,
            random_starts: 2,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NStarResult {
    /// Best certified-feasible objective value (a lower bound on `N*`).
    pub value: f64,
    /// Smallest level certified infeasible (an upper bound on `N*`).
    pub upper: f64,
    /// `upper - value`.
    pub gap: f64,
    /// The `lambda` attaining `value`.
    pub witness: Vec<f64>,
    pub sum_r: f64,
    /// Spectral-bound evaluations spent.
    pub evaluations: usize,
}

/// The constraint data `dI L`, `beta o (S0 - r)`, and the objective
/// `sum r + (S0 - r) . lambda`.
#[derive(Debug, Clone)]
pub(crate) struct NStarProblem {
    pub base: SquareMatrix,
    pub diag_coeff: Vec<f64>,
    pub weights: Vec<f64>,
    pub sum_r: f64,
}

impl NStarProblem {
    pub fn new(scenario: &EpidemicScenario) -> Result<Self> {
        if scenario.mechanism != Mechanism::MassAction || scenario.d_s != 0.0 || scenario.d_i <= 0.0 {
            return Err(Error::RegimeMismatch(
                "N* is defined for mass action with dS = 0 and dI > 0".into(),
            ));
        }
        let r = local_risk(scenario);
        let weights: Vec<f64> = scenario.s0.iter().zip(&r).map(|(s, r)| s - r).collect();
        let diag_coeff = weights.iter().zip(&scenario.beta).map(|(w, b)| w * b).collect();
        Ok(Self {
            base: scenario.connectivity.matrix().scaled(scenario.d_i),
            diag_coeff,
            weights,
            sum_r: r.iter().sum(),
        })
    }

    pub fn objective(&self, lambda: &[f64]) -> f64 {
        self.sum_r + dot(&self.weights, lambda)
    }

    pub fn constraint_matrix(&self, lambda: &[f64]) -> SquareMatrix {
        let diag: Vec<f64> = self.diag_coeff.iter().zip(lambda).map(|(c, l)| c * l).collect();
        self.base.plus_diagonal(&diag)
    }

    /// Largest objective over the box.
    fn box_max(&self) -> f64 {
        self.sum_r + self.weights.iter().filter(|w| **w > 0.0).sum::<f64>()
    }

    /// Spectral bound and its gradient in `lambda`:
    /// `d s / d lambda_i = c_i u_i v_i / (u . v)` with `u`, `v` the left and
    /// right Perron vectors.
    fn bound_and_gradient(&self, lambda: &[f64], power: &PowerSettings) -> Result<(f64, Vec<f64>)> {
        let m = self.constraint_matrix(lambda);
        let right = perron_root(&m, power).map_err(numerics)?;
        let left = perron_root(&m.transpose(), power).map_err(numerics)?;
        let uv = dot(&left.right, &right.right);
        let grad = self
            .diag_coeff
            .iter()
            .zip(left.right.iter().zip(&right.right))
            .map(|(c, (u, v))| c * u * v / uv)
            .collect();
        Ok((0.5 * (right.value + left.value), grad))
    }

    fn bound(&self, lambda: &[f64], power: &PowerSettings) -> Result<f64> {
        perron_root(&self.constraint_matrix(lambda), power)
            .map(|root| root.value)
            .map_err(numerics)
    }

    /// Euclidean projection onto `{0 <= lambda <= 1, weights . lambda >= level}`:
    /// `clip(y + mu w)` with the smallest `mu >= 0` meeting the level.
    fn project(&self, y: &[f64], level: f64) -> Vec<f64> {
        let at = |mu: f64| -> Vec<f64> {
            y.iter()
                .zip(&self.weights)
                .map(|(yi, wi)| (yi + mu * wi).clamp(0.0, 1.0))
                .collect()
        };
        let base = at(0.0);
        if dot(&self.weights, &base) >= level {
            return base;
        }
        let w2: f64 = self.weights.iter().map(|w| w * w).sum();
        let mut hi = 1.0 / w2.max(f64::MIN_POSITIVE);
        while dot(&self.weights, &at(hi)) < level && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dot(&self.weights, &at(mid)) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        at(hi)
    }

    /// `min a . mu` over the slice `{0 <= mu <= 1, weights . mu >= level}`,
    /// through its Lagrange dual
    /// `max_{nu >= 0} nu level + sum_i min(0, a_i - nu w_i)`.
    fn linear_min_over_slice(&self, a: &[f64], level: f64) -> f64 {
        let dual = |nu: f64| {
            nu * level
                + a.iter()
                    .zip(&self.weights)
                    .map(|(ai, wi)| (ai - nu * wi).min(0.0))
                    .sum::<f64>()
        };
        let mut best = dual(0.0);
        for (ai, wi) in a.iter().zip(&self.weights) {
            if *wi != 0.0 {
                let nu = ai / wi;
                if nu > 0.0 && nu.is_finite() {
                    best = best.max(dual(nu));
                }
            }
        }
        best
    }
}

fn numerics(e: Error) -> Error {
    Error::InfeasibleNumerics(e.to_string())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Level {
    Feasible(Vec<f64>),
    Infeasible,
    Undecided,
}

struct Solver<'a> {
    problem: &'a NStarProblem,
    settings: &'a NStarSettings,
    power: PowerSettings,
    rng: ChaCha8Rng,
    evaluations: usize,
}

impl Solver<'_> {
    fn decide(&mut self, objective: f64, hint: &[f64]) -> Result<Level> {
        let level = objective - self.problem.sum_r;
        let n = hint.len();
        let mut starts = vec![
            hint.to_vec(),
            vec![1.0; n],
            vec![0.5; n],
        ];
        for _ in 0..self.settings.random_starts {
            starts.push((0..n).map(|_| self.rng.gen::<f64>()).collect());
        }
        let mut undecided = false;
        for start in starts {
            match self.descend(self.problem.project(&start, level), level)? {
                Level::Feasible(l) => return Ok(Level::Feasible(l)),
                Level::Infeasible => return Ok(Level::Infeasible),
                Level::Undecided => undecided = true,
            }
        }
        Ok(if undecided { Level::Undecided } else { Level::Infeasible })
    }

    fn descend(&mut self, mut lambda: Vec<f64>, level: f64) -> Result<Level> {
        let tol = self.settings.feasibility_tol;
        let mut step = 1.0;
        for _ in 0..self.settings.max_descent_steps {
            let (g, grad) = self.problem.bound_and_gradient(&lambda, &self.power)?;
            self.evaluations += 2;
            if g <= tol {
                return Ok(Level::Feasible(lambda));
            }
            // convexity: s(mu) >= g + grad . (mu - lambda) on the slice
            let lower = g + self.problem.linear_min_over_slice(&grad, level) - dot(&grad, &lambda);
            if lower > tol {
                return Ok(Level::Infeasible);
            }
            // Armijo backtracking along the projection arc
            let mut moved = false;
            step *= 4.0;
            while step > 1e-14 {
                let trial: Vec<f64> = lambda
                    .iter()
                    .zip(&grad)
                    .map(|(l, d)| l - step * d)
                    .collect();
                let trial = self.problem.project(&trial, level);
                let decrease: f64 = lambda
                    .iter()
                    .zip(&trial)
                    .zip(&grad)
                    .map(|((l, t), d)| d * (l - t))
                    .sum();
                if decrease <= 0.0 {
                    break;
                }
                let gt = self.problem.bound(&trial, &self.power)?;
                self.evaluations += 1;
                if gt <= g - 1e-4 * decrease {
                    lambda = trial;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                return Ok(Level::Undecided);
            }
        }
        Ok(Level::Undecided)
    }
}

/// Computes `N*` for a mass-action scenario with `dS = 0`, `dI > 0`.
pub fn compute_n_star(scenario: &EpidemicScenario, settings: &NStarSettings) -> Result<NStarResult> {
    let problem = NStarProblem::new(scenario)?;
    solve(&problem, settings)
}

pub(crate) fn solve(problem: &NStarProblem, settings: &NStarSettings) -> Result<NStarResult> {
    let n = problem.weights.len();
    let mut solver = Solver {
        problem,
        settings,
        power: PowerSettings {
            tol: 1e-13,
            ..PowerSettings::default()
        },
        rng: ChaCha8Rng::seed_from_u64(settings.seed),
        evaluations: 0,
    };

    let zero = vec![0.0; n];
    let result = |value: f64, upper: f64, witness: Vec<f64>, evaluations: usize| NStarResult {
        value,
        upper,
        gap: upper - value,
        witness,
        sum_r: problem.sum_r,
        evaluations,
    };

    // increasing lambda never pays off when no patch has S0 above its risk
    if problem.weights.iter().all(|w| *w <= 0.0) {
        return Ok(result(problem.sum_r, problem.sum_r, zero, 0));
    }
    let corner: Vec<f64> = problem.weights.iter().map(|w| if *w > 0.0 { 1.0 } else { 0.0 }).collect();
    let top = problem.box_max();
    solver.evaluations += 1;
    if problem.bound(&corner, &solver.power)? <= settings.feasibility_tol {
        return Ok(result(top, top, corner, solver.evaluations));
    }

    let (mut lo, mut hi) = (problem.sum_r, top);
    let mut certified_hi = top;
    let mut witness = zero;
    for _ in 0..settings.max_bisections {
        if hi - lo <= settings.rel_gap * lo.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match solver.decide(mid, &witness)? {
            Level::Feasible(l) => {
                lo = problem.objective(&l).max(mid);
                witness = l;
            }
            Level::Infeasible => {
                hi = mid;
                certified_hi = mid;
            }
            Level::Undecided => hi = mid,
        }
    }
    Ok(result(lo, certified_hi.max(lo), witness, solver.evaluations))
}

pub const MAX_RECENTERS: usize = 50;

/// Brute-force lower bound on `N*` from a regular grid on the box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCertificate {
    pub value: f64,
    pub lambda: Vec<f64>,
    pub points_per_axis: usize,
    pub refinements: usize,
    pub evaluations: usize,
}

/// Evaluates the spectral constraint with a Schur decomposition (not the
/// power iteration the optimizer uses) on `points_per_axis^n` grid points,
/// then refines `refinements` times on a 21-point-per-axis local grid around
/// the best feasible point, re-centering while it improves (at most
/// [`MAX_RECENTERS`] times per level) and then shrinking the spacing tenfold.
pub fn n_star_grid(
    scenario: &EpidemicScenario,
    points_per_axis: usize,
    refinements: usize,
    feasibility_tol: f64,
) -> Result<GridCertificate> {
    let problem = NStarProblem::new(scenario)?;
    let n = problem.weights.len();
    let k = points_per_axis.max(2);
    let mut evaluations = 0usize;
    let mut feasible = |lambda: &[f64]| -> Result<bool> {
        evaluations += 1;
        Ok(spectral_bound(&problem.constraint_matrix(lambda), false)? <= feasibility_tol)
    };

    let mut best = (problem.sum_r, vec![0.0; n]);
    let consider = |lambda: Vec<f64>, best: &mut (f64, Vec<f64>), ok: bool| {
        let value = problem.objective(&lambda);
        if ok && value > best.0 {
            *best = (value, lambda);
        }
    };

    let spacing = 1.0 / (k - 1) as f64;
    let total = k.pow(n as u32);
    for flat in 0..total {
        let lambda = grid_point(flat, n, k, |idx| idx as f64 * spacing);
        let ok = feasible(&lambda)?;
        consider(lambda, &mut best, ok);
    }

    let mut h = spacing;
    for _ in 0..refinements {
        // re-center at this scale while the best point keeps moving
        for _ in 0..MAX_RECENTERS {
            let center = best.1.clone();
            let fine = h / 10.0;
            for flat in 0..21usize.pow(n as u32) {
                let lambda = grid_point(flat, n, 21, |idx| idx as f64 * fine - h);
                let lambda: Vec<f64> = lambda
                    .iter()
                    .zip(&center)
                    .map(|(d, c)| (c + d).clamp(0.0, 1.0))
                    .collect();
                let ok = feasible(&lambda)?;
                consider(lambda, &mut best, ok);
            }
            if best.1 == center {
                break;
            }
        }
        h /= 10.0;
    }
    Ok(GridCertificate {
        value: best.0,
        lambda: best.1,
        points_per_axis: k,
        refinements,
        evaluations,
    })
}

fn grid_point(mut flat: usize, n: usize, k: usize, coord: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let idx = flat % k;
            flat /= k;
            coord(idx)
        })
        .collect()
}
