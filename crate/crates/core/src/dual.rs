//! Dual function of the weighted-rate problem and its subgradients.
//!
//! For multipliers `(lambda, mu, rho, theta)` the partial Lagrangian splits
//! into one covariance term and `2K` per-user terms, each maximized in
//! closed form. The covariance term is bounded only when
//! `G = sum_i T eta lambda_i H_i - rho I` is negative semidefinite, in which
//! case `Q = 0` attains it.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::{self, HermitianMatrix};
use crate::model::{beta_prime_unchecked, beta_unchecked, Instance, SystemConfig, UserProfile};

/// Multipliers for the EH constraints (`lambda`), the time budget (`mu`),
/// the power budget (`rho`) and the edge capacity (`theta`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPoint {
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub rho: f64,
    pub theta: f64,
}

impl DualPoint {
    pub fn zeros(users: usize) -> Self {
        Self {
            lambda: vec![0.0; users],
            mu: 0.0,
            rho: 0.0,
            theta: 0.0,
        }
    }

    pub fn users(&self) -> usize {
        self.lambda.len()
    }

    /// Flattened as `[lambda_1, .., lambda_K, mu, rho, theta]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.lambda.clone();
        v.extend([self.mu, self.rho, self.theta]);
        v
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() < 4 {
            return Err(Error::Dimension(format!("dual vector of length {} < 4", x.len())));
        }
        let k = x.len() - 3;
        Ok(Self {
            lambda: x[..k].to_vec(),
            mu: x[k],
            rho: x[k + 1],
            theta: x[k + 2],
        })
    }

    fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// An instance together with the local-computing caps used by the dual.
/// Forcing every cap to zero gives the offloading-only restriction.
#[derive(Debug, Clone)]
pub struct DualProblem<'a> {
    pub instance: &'a Instance,
    local_caps: Vec<f64>,
}

impl<'a> DualProblem<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        let local_caps = (0..instance.num_users()).map(|i| instance.local_cap(i)).collect();
        Self {
            instance,
            local_caps,
        }
    }

    pub fn without_local_computing(instance: &'a Instance) -> Self {
        Self {
            instance,
            local_caps: vec![0.0; instance.num_users()],
        }
    }

    pub fn local_cap(&self, i: usize) -> f64 {
        self.local_caps[i]
    }

    pub fn users(&self) -> usize {
        self.instance.num_users()
    }

    /// Upper bound on the primal objective under these caps.
    pub fn objective_ceiling(&self) -> f64 {
        let cfg = &self.instance.config;
        let local: f64 = cfg.weights.iter().zip(&self.local_caps).map(|(w, c)| w * c).sum();
        let w_max = cfg.weights.iter().copied().fold(0.0, f64::max);
        local + w_max * cfg.l_max
    }
}

/// Which case of the offloading subproblem produced the maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffloadBranch {
    /// `lambda = 0` and `w - theta > 0`: offload `L_max` bits at `t = 0`.
    Unpriced,
    /// `lambda = 0` and `w - theta <= 0`.
    Unprofitable,
    /// `lambda > 0` and `w - theta` at or below `lambda sigma2 ln2 / (B g)`.
    BelowThreshold,
    /// `lambda > 0` above threshold; the rate is stationary.
    Stationary,
    /// Stationary rate over the whole block would exceed `L_max`.
    CapacityLimited,
}

/// Maximizer of one user's offloading subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffloadChoice {
    pub time: f64,
    pub bits: f64,
    /// Rate of the maximizer; for `t = 0` the stationary rate that would be
    /// used if the slot were opened (infinite for [`OffloadBranch::Unpriced`]).
    pub rate: f64,
    pub branch: OffloadBranch,
    /// Set when every `t` in `[0, T]` is optimal and `t = 0` was picked.
    pub nonunique: bool,
}

impl OffloadChoice {
    fn idle(branch: OffloadBranch) -> Self {
        Self {
            time: 0.0,
            bits: 0.0,
            rate: 0.0,
            branch,
            nonunique: false,
        }
    }
}

/// Maximizers of all per-user subproblems at one dual point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubproblemSolution {
    pub local: Vec<f64>,
    pub time: Vec<f64>,
    pub bits: Vec<f64>,
    pub rate: Vec<f64>,
    pub branch: Vec<OffloadBranch>,
    pub nonunique: Vec<bool>,
}

/// Largest eigenvalue of `G(lambda, rho)` and its eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFeasibility {
    pub feasible: bool,
    pub max_eigenvalue: f64,
    pub vector: Vec<Complex64>,
}

/// `sum_i lambda_i ||h_i||^2 T eta + rho`, the magnitude used to judge
/// the sign of the top eigenvalue of `G`.
fn g_scale(dp: &DualPoint, inst: &Instance) -> f64 {
    let te = inst.config.block * inst.config.eta;
    let s: f64 = dp
        .lambda
        .iter()
        .enumerate()
        .map(|(i, l)| l.abs() * te * inst.channels.downlink_gain(i))
        .sum();
    s + dp.rho.abs()
}

/// `G(lambda, rho) = sum_i T eta lambda_i H_i - rho I`.
pub fn dual_matrix(dp: &DualPoint, inst: &Instance) -> HermitianMatrix {
    let te = inst.config.block * inst.config.eta;
    let mut g = HermitianMatrix::scaled_identity(inst.config.antennas, -dp.rho);
    for (i, &l) in dp.lambda.iter().enumerate() {
        g.add_scaled(te * l, inst.channels.gram(i));
    }
    g
}

pub fn dual_feasible(dp: &DualPoint, inst: &Instance) -> Result<DualFeasibility> {
    if dp.users() != inst.num_users() {
        return Err(Error::Dimension(format!(
            "dual point has {} users, instance {}",
            dp.users(),
            inst.num_users()
        )));
    }
    let (w, v) = hermitian::max_eigpair(&dual_matrix(dp, inst))?;
    let nonneg = dp.to_vec().iter().all(|&x| x >= 0.0);
    Ok(DualFeasibility {
        feasible: nonneg && w <= 1e-12 * g_scale(dp, inst),
        max_eigenvalue: w,
        vector: v,
    })
}

/// Lemma for local bits: `q = min(sqrt(w / (3 lambda a)), cap)` with
/// `a = zeta C^3 / T^2`, and `q = cap` when `lambda = 0`.
pub fn local_bits(lambda: f64, weight: f64, cubic: f64, cap: f64) -> f64 {
    if cap <= 0.0 {
        return 0.0;
    }
    if lambda <= 0.0 {
        return cap;
    }
    (weight / (3.0 * lambda * cubic)).sqrt().min(cap)
}

pub fn solve_q_subproblem(lambda: f64, profile: &UserProfile, cfg: &SystemConfig, weight: f64) -> f64 {
    local_bits(lambda, weight, profile.cubic_coefficient(cfg), profile.local_cap(cfg))
}

/// `(lambda / g)(beta(r) - r beta'(r)) + mu + lambda p_c`: the derivative of
/// the negated offloading Lagrangian in `t` at fixed rate `r`.
pub fn slot_price(r: f64, lambda: f64, mu: f64, g: f64, p_c: f64, cfg: &SystemConfig) -> f64 {
    let b = beta_unchecked(r, cfg.sigma2, cfg.bandwidth);
    let db = beta_prime_unchecked(r, cfg.sigma2, cfg.bandwidth);
    lambda / g * (b - r * db) + mu + lambda * p_c
}

/// Rate solving `beta'(r) = (w - theta) g / lambda`, or `None` at or below
/// the threshold.
pub fn stationary_rate(lambda: f64, margin: f64, g: f64, cfg: &SystemConfig) -> Option<f64> {
    if !(lambda > 0.0) || !(g > 0.0) {
        return None;
    }
    let threshold = lambda * cfg.sigma2 * std::f64::consts::LN_2 / (cfg.bandwidth * g);
    if margin <= threshold {
        return None;
    }
    Some(cfg.bandwidth * (margin / threshold).log2())
}

/// Maximizes `(w - theta) l - lambda (t beta(l/t) / g + p_c t) - mu t` over
/// `0 <= t <= T`, `0 <= l <= L_max`.
pub fn solve_t_ell_subproblem(
    lambda: f64,
    mu: f64,
    theta: f64,
    g_tilde: f64,
    profile: &UserProfile,
    cfg: &SystemConfig,
    weight: f64,
) -> OffloadChoice {
    let margin = weight - theta;
    if lambda <= 0.0 {
        if margin > 0.0 && cfg.l_max > 0.0 {
            return OffloadChoice {
                time: 0.0,
                bits: cfg.l_max,
                rate: f64::INFINITY,
                branch: OffloadBranch::Unpriced,
                nonunique: false,
            };
        }
        return OffloadChoice::idle(OffloadBranch::Unprofitable);
    }
    let Some(rate) = stationary_rate(lambda, margin, g_tilde, cfg) else {
        return OffloadChoice::idle(OffloadBranch::BelowThreshold);
    };
    let idle = OffloadChoice {
        rate,
        ..OffloadChoice::idle(OffloadBranch::Stationary)
    };
    if cfg.l_max <= 0.0 {
        return idle;
    }
    let price = slot_price(rate, lambda, mu, g_tilde, profile.p_c, cfg);
    if price.abs() <= 1e-12 * (mu + lambda * profile.p_c + 1.0) {
        return OffloadChoice {
            nonunique: true,
            ..idle
        };
    }
    if price > 0.0 {
        return idle;
    }
    let t = cfg.block;
    if rate * t <= cfg.l_max {
        return OffloadChoice {
            time: t,
            bits: rate * t,
            rate,
            branch: OffloadBranch::Stationary,
            nonunique: false,
        };
    }
    // Only L_max bits fit: open the slot until the price at rate L_max/t
    // reaches zero. The price increases as the rate drops.
    let (mut lo, mut hi) = (0.0, rate);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slot_price(mid, lambda, mu, g_tilde, profile.p_c, cfg) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let r0 = 0.5 * (lo + hi);
    let time = (cfg.l_max / r0).min(t);
    OffloadChoice {
        time,
        bits: cfg.l_max,
        rate: cfg.l_max / time,
        branch: OffloadBranch::CapacityLimited,
        nonunique: false,
    }
}

/// Energy drawn by the offloading part of a choice; infinite for
/// [`OffloadBranch::Unpriced`].
pub(crate) fn offload_consumption(c: &OffloadChoice, g: f64, p_c: f64, cfg: &SystemConfig) -> f64 {
    if c.bits > 0.0 && c.time <= 0.0 {
        return f64::INFINITY;
    }
    if c.time <= 0.0 {
        return 0.0;
    }
    let transmit = if c.bits > 0.0 {
        c.time * beta_unchecked(c.bits / c.time, cfg.sigma2, cfg.bandwidth) / g
    } else {
        0.0
    };
    transmit + p_c * c.time
}

/// Value and maximizers of the dual function.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEvaluation {
    pub value: f64,
    pub solution: SubproblemSolution,
}

pub fn evaluate_dual(problem: &DualProblem, dp: &DualPoint) -> Result<DualEvaluation> {
    let inst = problem.instance;
    let cfg = &inst.config;
    if !dp.is_finite() {
        return Err(Error::Domain("dual point has non-finite entries".into()));
    }
    let feas = dual_feasible(dp, inst)?;
    if !feas.feasible {
        return Err(Error::DualInfeasible {
            max_eigenvalue: feas.max_eigenvalue,
        });
    }
    let k = problem.users();
    let mut sol = SubproblemSolution {
        local: Vec::with_capacity(k),
        time: Vec::with_capacity(k),
        bits: Vec::with_capacity(k),
        rate: Vec::with_capacity(k),
        branch: Vec::with_capacity(k),
        nonunique: Vec::with_capacity(k),
    };
    let mut value = dp.mu * cfg.block + dp.rho * cfg.trace_budget() + dp.theta * cfg.l_max;
    for i in 0..k {
        let (w, lambda, profile) = (cfg.weights[i], dp.lambda[i], &inst.users[i]);
        let cubic = profile.cubic_coefficient(cfg);
        let q = local_bits(lambda, w, cubic, problem.local_cap(i));
        value += w * q - lambda * cubic * q.powi(3);

        let g = inst.effective_gain(i);
        let c = solve_t_ell_subproblem(lambda, dp.mu, dp.theta, g, profile, cfg, w);
        if c.branch == OffloadBranch::Unpriced {
            value += (w - dp.theta) * c.bits;
        } else if c.time > 0.0 {
            value += (w - dp.theta) * c.bits
                - lambda * offload_consumption(&c, g, profile.p_c, cfg)
                - dp.mu * c.time;
        }
        sol.local.push(q);
        sol.time.push(c.time);
        sol.bits.push(c.bits);
        sol.rate.push(c.rate);
        sol.branch.push(c.branch);
        sol.nonunique.push(c.nonunique);
    }
    Ok(DualEvaluation {
        value,
        solution: sol,
    })
}

/// Subgradient of the dual function at `dp`, laid out like
/// [`DualPoint::to_vec`].
pub fn dual_subgradient(problem: &DualProblem, sub: &SubproblemSolution) -> Vec<f64> {
    let inst = problem.instance;
    let cfg = &inst.config;
    let k = problem.users();
    let mut g = Vec::with_capacity(k + 3);
    for i in 0..k {
        let profile = &inst.users[i];
        let choice = OffloadChoice {
            time: sub.time[i],
            bits: sub.bits[i],
            rate: sub.rate[i],
            branch: sub.branch[i],
            nonunique: sub.nonunique[i],
        };
        let used = profile.cubic_coefficient(cfg) * sub.local[i].powi(3)
            + offload_consumption(&choice, inst.effective_gain(i), profile.p_c, cfg);
        g.push(-used);
    }
    g.push(cfg.block - sub.time.iter().sum::<f64>());
    g.push(cfg.trace_budget());
    g.push(cfg.l_max - sub.bits.iter().sum::<f64>());
    g
}

/// Cut separating an infeasible dual point from the feasible set, in the
/// sense `cut . (x - dp) <= 0` for all feasible `x`.
pub fn feasibility_cut(dp: &DualPoint, inst: &Instance) -> Result<Vec<f64>> {
    let x = dp.to_vec();
    if let Some(j) = x.iter().position(|&v| v < 0.0) {
        let mut cut = vec![0.0; x.len()];
        cut[j] = -1.0;
        return Ok(cut);
    }
    let feas = dual_feasible(dp, inst)?;
    if feas.feasible {
        return Err(Error::Logic("feasibility cut requested at a feasible dual point".into()));
    }
    let te = inst.config.block * inst.config.eta;
    let mut cut: Vec<f64> = (0..dp.users())
        .map(|i| te * inst.channels.gram(i).quad_form(&feas.vector))
        .collect();
    cut.extend([0.0, -1.0, 0.0]);
    Ok(cut)
}
