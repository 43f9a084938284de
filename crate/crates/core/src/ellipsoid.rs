//! Central-cut ellipsoid method for convex minimization with cut oracles.

use serde::Serialize;

use crate::dual::{dual_matrix, DualPoint, DualProblem};
use crate::error::{Error, Result};
use crate::hermitian;

/// `{x : (x - c)^T P^{-1} (x - c) <= 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    /// Row-major `n x n` shape matrix.
    pub shape: Vec<f64>,
}

/// Answer of a cut oracle at the current center.
#[derive(Debug, Clone, PartialEq)]
pub enum Cut {
    /// Center is feasible; `value` is the objective and `gradient` a
    /// subgradient there.
    Objective { value: f64, gradient: Vec<f64> },
    /// Center is infeasible; every feasible `x` has `gradient . (x - c) <= 0`.
    Feasibility { gradient: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EllipsoidStatus {
    Converged,
    IterationLimit,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidOutcome {
    /// Best feasible center seen, if any.
    pub best_point: Option<Vec<f64>>,
    pub best_value: f64,
    pub iterations: usize,
    pub status: EllipsoidStatus,
    /// Best value after each objective cut.
    pub history: Vec<f64>,
}

impl Ellipsoid {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let n = center.len();
        let mut shape = vec![0.0; n * n];
        for j in 0..n {
            shape[j * n + j] = radius * radius;
        }
        Self { center, shape }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn shape_times(&self, g: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|j| self.shape[j * n..(j + 1) * n].iter().zip(g).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// `sqrt(g^T P g)`: the spread of the linear function `g . x` over the
    /// ellipsoid, from the center to the boundary.
    pub fn width(&self, g: &[f64]) -> f64 {
        let pg = self.shape_times(g);
        pg.iter().zip(g).map(|(a, b)| a * b).sum::<f64>().sqrt()
    }

    /// Replaces the ellipsoid by the smallest one containing the half
    /// `{x : g . (x - c) <= 0}`. Returns `false` when `g^T P g` is not
    /// positive (the ellipsoid has collapsed numerically).
    pub fn cut(&mut self, g: &[f64]) -> bool {
        let n = self.dim();
        let pg = self.shape_times(g);
        let gpg: f64 = pg.iter().zip(g).map(|(a, b)| a * b).sum();
        if !(gpg > 0.0) || !gpg.is_finite() {
            return false;
        }
        let s = gpg.sqrt();
        if n == 1 {
            // Interval halving.
            self.center[0] -= 0.5 * pg[0] / s;
            self.shape[0] *= 0.25;
            return true;
        }
        let nf = n as f64;
        for j in 0..n {
            self.center[j] -= pg[j] / (s * (nf + 1.0));
        }
        let a = nf * nf / (nf * nf - 1.0);
        let b = 2.0 / ((nf + 1.0) * gpg);
        for j in 0..n {
            for k in j..n {
                let v = a * (self.shape[j * n + k] - b * pg[j] * pg[k]);
                self.shape[j * n + k] = v;
                self.shape[k * n + j] = v;
            }
        }
        true
    }

    /// `ln det P` through a Cholesky factorization; `None` if `P` is not
    /// positive definite.
    pub fn log_det(&self) -> Option<f64> {
        let n = self.dim();
        let mut l = self.shape.clone();
        let mut acc = 0.0;
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            acc += 2.0 * d.ln();
            for i in j + 1..n {
                let mut v = l[i * n + j];
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = v / d;
            }
        }
        Some(acc)
    }
}

/// Minimizes a convex function described by `oracle` starting from
/// `initial`, which must contain a minimizer. Stops when an objective cut
/// has `sqrt(g^T P g) <= tol (1 + |best|)`.
pub fn run<F>(mut oracle: F, initial: Ellipsoid, tol: f64, max_iter: usize) -> Result<EllipsoidOutcome>
where
    F: FnMut(&[f64]) -> Result<Cut>,
{
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be > 0")));
    }
    if initial.dim() == 0 || initial.shape.len() != initial.dim() * initial.dim() {
        return Err(Error::Dimension("ellipsoid shape does not match center".into()));
    }
    let mut e = initial;
    let mut best_point = None;
    let mut best_value = f64::INFINITY;
    let mut history = Vec::new();
    let mut status = EllipsoidStatus::IterationLimit;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let g = match oracle(&e.center)? {
            Cut::Objective { value, gradient } => {
                if value < best_value {
                    best_value = value;
                    best_point = Some(e.center.clone());
                }
                history.push(best_value);
                if e.width(&gradient) <= tol * (1.0 + best_value.abs()) {
                    status = EllipsoidStatus::Converged;
                    break;
                }
                gradient
            }
            Cut::Feasibility { gradient } => gradient,
        };
        if g.len() != e.dim() || g.iter().any(|v| !v.is_finite()) {
            status = EllipsoidStatus::Degenerate;
            break;
        }
        if !e.cut(&g) {
            status = EllipsoidStatus::Degenerate;
            break;
        }
    }
    Ok(EllipsoidOutcome {
        best_point,
        best_value,
        iterations,
        status,
        history,
    })
}

/// Starting ellipsoid for the dual problem, expressed in the coordinates
/// `z_j = x_j / scale_j` of the flattened dual point `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualStart {
    pub ellipsoid: Ellipsoid,
    pub scale: Vec<f64>,
}

impl DualStart {
    pub fn to_dual(&self, z: &[f64]) -> Result<DualPoint> {
        let x: Vec<f64> = z.iter().zip(&self.scale).map(|(a, b)| a * b).collect();
        DualPoint::from_slice(&x)
    }
}

/// Box `[0, scale]` known to contain a dual optimum, wrapped in the ball
/// through its corners.
///
/// With `U` an upper bound on the primal objective, every term of the dual
/// function is nonnegative, so an optimum has `mu <= U / T`,
/// `rho <= U / (T P_max)` and, because `G` must be negative semidefinite,
/// `lambda_i <= rho / (T eta ||h_i||^2)`. Past `theta = max_i w_i` no user
/// offloads and the dual only grows. `rho` is lifted further if needed so
/// that the center is strictly dual feasible.
pub fn initial_ellipsoid_for_d1(problem: &DualProblem, radius_scale: f64) -> Result<DualStart> {
    let inst = problem.instance;
    let cfg = &inst.config;
    let ceiling = problem.objective_ceiling();
    if !(ceiling > 0.0) {
        return Err(Error::Domain("objective ceiling is zero; nothing to optimize".into()));
    }
    let k = problem.users();
    let te = cfg.block * cfg.eta;
    let rho_bound = ceiling / cfg.trace_budget();
    let lambda: Vec<f64> = (0..k)
        .map(|i| {
            let gain = inst.channels.downlink_gain(i);
            if gain > 0.0 {
                rho_bound / (te * gain)
            } else {
                // No energy reaches this user; cap lambda where local bits
                // fall below 1e-3.
                cfg.weights[i] / (3.0 * inst.users[i].cubic_coefficient(cfg) * 1e-6)
            }
        })
        .collect();
    let w_max = cfg.weights.iter().copied().fold(0.0, f64::max);
    let probe = DualPoint {
        lambda: lambda.clone(),
        mu: 0.0,
        rho: 0.0,
        theta: 0.0,
    };
    let top = hermitian::max_eigpair(&dual_matrix(&probe, inst))?.0;
    let mut scale = lambda;
    scale.extend([ceiling / cfg.block, rho_bound.max(1.01 * top), w_max]);
    let n = scale.len();
    let ellipsoid = Ellipsoid::ball(vec![0.5; n], radius_scale * 0.5 * (n as f64).sqrt());
    Ok(DualStart { ellipsoid, scale })
}
