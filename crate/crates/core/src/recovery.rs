//! Primal recovery from an optimal dual point.
//!
//! Local bits and offloading rates come straight from the per-user
//! maximizers. The covariance and the slot lengths solve a small SDP that
//! is linear once the rates are fixed; it is handled by an ADMM splitting
//! over `{PSD x box} x {A x <= b}`.


use crate::dual::{self, DualPoint, DualProblem, OffloadBranch};
use crate::error::{Error, Result};
use crate::hermitian::{self, HermitianMatrix};
use crate::model::{
    self, beta_unchecked, Allocation, Instance, SolveReport, SolveStatus,
};

/// One user's data in the recovery SDP.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpUser {
    pub weight: f64,
    /// Offloading rate; zero pins the slot to zero.
    pub rate: f64,
    /// Energy already committed to local computing.
    pub fixed_energy: f64,
    /// Energy per second of slot, `beta(r) / g + p_c`.
    pub slot_cost: f64,
    pub gram: HermitianMatrix,
}

/// `max sum_i w_i r_i t_i` subject to
/// `fixed_i + slot_cost_i t_i <= T eta tr(Q H_i)`, `tr(Q) <= T P_max`,
/// `sum t <= T`, `sum r_i t_i <= L_max`, `0 <= t <= T`, `Q >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoverySdp {
    pub antennas: usize,
    pub block: f64,
    /// `T eta`.
    pub harvest_factor: f64,
    pub trace_budget: f64,
    pub l_max: f64,
    pub users: Vec<SdpUser>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub covariance: HermitianMatrix,
    pub time: Vec<f64>,
    /// `sum_i w_i r_i t_i` at the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Local bits at the dual point and the matching CPU frequencies.
pub fn recover_q_opt(problem: &DualProblem, dp: &DualPoint) -> (Vec<f64>, Vec<f64>) {
    let inst = problem.instance;
    let cfg = &inst.config;
    let q: Vec<f64> = (0..problem.users())
        .map(|i| {
            let u = &inst.users[i];
            dual::local_bits(dp.lambda[i], cfg.weights[i], u.cubic_coefficient(cfg), problem.local_cap(i))
        })
        .collect();
    let f = q
        .iter()
        .zip(&inst.users)
        .map(|(q, u)| u.cycles_per_bit * q / cfg.block)
        .collect();
    (q, f)
}

/// Rate that spends a user's whole harvestable energy over the block.
fn fallback_rate(inst: &Instance, i: usize) -> f64 {
    let cfg = &inst.config;
    let e = cfg.block * cfg.eta * cfg.trace_budget() * inst.channels.downlink_gain(i);
    cfg.bandwidth * (1.0 + inst.effective_gain(i) * e / (cfg.block * cfg.sigma2)).log2()
}

/// Offloading rates at the dual point: the stationary rate whenever the
/// user is above threshold, zero otherwise.
pub fn recover_rates(problem: &DualProblem, dp: &DualPoint) -> Vec<f64> {
    let inst = problem.instance;
    let cfg = &inst.config;
    (0..problem.users())
        .map(|i| {
            if cfg.l_max <= 0.0 {
                return 0.0;
            }
            let c = dual::solve_t_ell_subproblem(
                dp.lambda[i],
                dp.mu,
                dp.theta,
                inst.effective_gain(i),
                &inst.users[i],
                cfg,
                cfg.weights[i],
            );
            match c.branch {
                OffloadBranch::Unpriced => fallback_rate(inst, i),
                OffloadBranch::Unprofitable | OffloadBranch::BelowThreshold => 0.0,
                OffloadBranch::Stationary | OffloadBranch::CapacityLimited => {
                    dual::stationary_rate(dp.lambda[i], cfg.weights[i] - dp.theta, inst.effective_gain(i), cfg)
                        .unwrap_or(0.0)
                }
            }
        })
        .collect()
}

/// Energy per second of an offloading slot at rate `r`.
pub fn slot_cost(inst: &Instance, i: usize, r: f64) -> f64 {
    let cfg = &inst.config;
    let p_c = inst.users[i].p_c;
    if r <= 0.0 {
        return p_c;
    }
    beta_unchecked(r, cfg.sigma2, cfg.bandwidth) / inst.effective_gain(i) + p_c
}

impl RecoverySdp {
    pub fn new(inst: &Instance, local: &[f64], rates: &[f64]) -> Self {
        let cfg = &inst.config;
        let users = (0..inst.num_users())
            .map(|i| SdpUser {
                weight: cfg.weights[i],
                rate: rates[i],
                fixed_energy: model::local_energy(local[i], &inst.users[i], cfg),
                slot_cost: slot_cost(inst, i, rates[i]),
                gram: inst.channels.gram(i).clone(),
            })
            .collect();
        Self {
            antennas: cfg.antennas,
            block: cfg.block,
            harvest_factor: cfg.block * cfg.eta,
            trace_budget: cfg.trace_budget(),
            l_max: cfg.l_max,
            users,
        }
    }
}

/// Dense Cholesky factor (lower, row-major) of an SPD matrix.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Inconsistent("normal matrix is not positive definite".into()));
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / d;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the recovery SDP in the scaled variables `Q / (T P_max)` and
/// `t / T`, with each EH row divided by the user's largest harvestable
/// energy.
pub fn solve_recovery_sdp(sdp: &RecoverySdp, opts: &SdpOptions) -> Result<SdpSolution> {
    let n = sdp.antennas;
    let nq = n * n;
    let active: Vec<usize> = (0..sdp.users.len()).filter(|&i| sdp.users[i].rate > 0.0).collect();
    let k = active.len();
    let m = nq + k;

    // Inequality rows a . x <= b.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, u) in sdp.users.iter().enumerate() {
        let gain = u.gram.trace();
        if gain <= 0.0 {
            continue;
        }
        let e_max = sdp.harvest_factor * sdp.trace_budget * gain;
        let mut a = vec![0.0; m];
        for (j, h) in u.gram.to_svec().iter().enumerate() {
            a[j] = -h / gain;
        }
        if let Some(pos) = active.iter().position(|&x| x == i) {
            a[nq + pos] = u.slot_cost * sdp.block / e_max;
        }
        rows.push((a, -u.fixed_energy / e_max));
    }
    let mut trace_row = vec![0.0; m];
    trace_row[..n].iter_mut().for_each(|v| *v = 1.0);
    rows.push((trace_row, 1.0));
    if k > 0 {
        let mut time_row = vec![0.0; m];
        time_row[nq..].iter_mut().for_each(|v| *v = 1.0);
        rows.push((time_row, 1.0));
        if sdp.l_max > 0.0 {
            let mut cap_row = vec![0.0; m];
            for (pos, &i) in active.iter().enumerate() {
                cap_row[nq + pos] = sdp.users[i].rate * sdp.block / sdp.l_max;
            }
            rows.push((cap_row, 1.0));
        }
    }
    let p = rows.len();

    let mut c = vec![0.0; m];
    for (pos, &i) in active.iter().enumerate() {
        c[nq + pos] = sdp.users[i].weight * sdp.users[i].rate * sdp.block;
    }
    let c_scale = inf_norm(&c).max(1e-300);
    c.iter_mut().for_each(|v| *v /= c_scale);

    // I + A^T A, factored once; the penalty only scales the linear term.
    let mut normal = vec![0.0; m * m];
    for j in 0..m {
        normal[j * m + j] = 1.0;
    }
    for (a, _) in &rows {
        for j in 0..m {
            if a[j] == 0.0 {
                continue;
            }
            for l in 0..m {
                normal[j * m + l] += a[j] * a[l];
            }
        }
    }
    let chol = cholesky(&normal, m)?;

    let apply_a = |x: &[f64]| -> Vec<f64> {
        rows.iter().map(|(a, _)| a.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    };
    let project = |v: &mut [f64]| {
        let q = hermitian::psd_project(&HermitianMatrix::from_svec(n, &v[..nq]));
        v[..nq].copy_from_slice(&q.to_svec());
        for t in &mut v[nq..m] {
            *t = t.clamp(0.0, 1.0);
        }
        for (j, (_, b)) in rows.iter().enumerate() {
            v[m + j] = v[m + j].min(*b);
        }
    };

    let alpha = 1.6;
    let mut sigma = 1.0;
    let mut z = vec![0.0; m + p];
    let mut u = vec![0.0; m + p];
    let mut iterations = 0;
    let mut converged = false;
    let (mut r_prim, mut r_dual) = (f64::INFINITY, f64::INFINITY);
    while iterations < opts.max_iter {
        iterations += 1;
        let mut rhs: Vec<f64> = (0..m).map(|j| z[j] - u[j] + c[j] / sigma).collect();
        for (j, (a, _)) in rows.iter().enumerate() {
            let d = z[m + j] - u[m + j];
            for l in 0..m {
                rhs[l] += a[l] * d;
            }
        }
        cholesky_solve(&chol, m, &mut rhs);
        let x = rhs;
        let mx: Vec<f64> = x.iter().copied().chain(apply_a(&x)).collect();
        let z_prev = z.clone();
        let mut w: Vec<f64> = (0..m + p).map(|j| alpha * mx[j] + (1.0 - alpha) * z_prev[j] + u[j]).collect();
        project(&mut w);
        z = w;
        for j in 0..m + p {
            u[j] += alpha * mx[j] + (1.0 - alpha) * z_prev[j] - z[j];
        }

        if iterations % 10 == 0 || iterations == opts.max_iter {
            let diff: Vec<f64> = (0..m + p).map(|j| mx[j] - z[j]).collect();
            r_prim = inf_norm(&diff);
            let dz: Vec<f64> = (0..m + p).map(|j| z[j] - z_prev[j]).collect();
            let mut mt = dz[..m].to_vec();
            for (j, (a, _)) in rows.iter().enumerate() {
                for l in 0..m {
                    mt[l] += a[l] * dz[m + j];
                }
            }
            r_dual = sigma * inf_norm(&mt);
            let scale_p = 1.0 + inf_norm(&mx).max(inf_norm(&z));
            let scale_d = 1.0 + sigma * inf_norm(&u);
            if r_prim <= opts.tol * scale_p && r_dual <= opts.tol * scale_d {
                converged = true;
                break;
            }
            if iterations % 50 == 0 {
                if r_prim / scale_p > 10.0 * r_dual / scale_d {
                    sigma *= 2.0;
                    u.iter_mut().for_each(|v| *v *= 0.5);
                } else if r_dual / scale_d > 10.0 * r_prim / scale_p {
                    sigma *= 0.5;
                    u.iter_mut().for_each(|v| *v *= 2.0);
                }
            }
        }
    }

    let covariance = HermitianMatrix::from_svec(n, &z[..nq]).scale(sdp.trace_budget);
    let mut time = vec![0.0; sdp.users.len()];
    for (pos, &i) in active.iter().enumerate() {
        time[i] = z[nq + pos] * sdp.block;
    }
    let objective = sdp
        .users
        .iter()
        .zip(&time)
        .map(|(u, t)| u.weight * u.rate * t)
        .sum();
    Ok(SdpSolution {
        covariance,
        time,
        objective,
        iterations,
        converged,
        primal_residual: r_prim,
        dual_residual: r_dual,
    })
}

/// Moves `(Q, t, q)` onto the feasible set and then spends every user's
/// leftover energy, first on local bits and then on longer slots.
pub fn polish(
    problem: &DualProblem,
    covariance: &mut HermitianMatrix,
    rates: &[f64],
    local: &mut [f64],
    time: &mut [f64],
) -> Result<()> {
    let inst = problem.instance;
    let cfg = &inst.config;
    let k = problem.users();

    *covariance = hermitian::psd_project(covariance);
    let tr = covariance.trace();
    if tr > cfg.trace_budget() {
        *covariance = covariance.scale(cfg.trace_budget() / tr);
    }
    let harvested: Vec<f64> = (0..k)
        .map(|i| model::harvested_energy(covariance, inst.channels.gram(i), cfg).map(|e| e.max(0.0)))
        .collect::<Result<_>>()?;
    polish_fixed(problem, &harvested, rates, local, time);

    // Block ascent: covariance for fixed slots, then slots for fixed energy.
    let mut best = fixed_rate_value(problem, local, rates, time);
    for _ in 0..POLISH_ROUNDS {
        let reserved: Vec<f64> = (0..k).map(|i| slot_cost(inst, i, rates[i]) * time[i]).collect();
        let refined = refine_covariance(problem, covariance, &reserved, REFINE_ITERATIONS)?;
        let harvested: Vec<f64> = (0..k)
            .map(|i| model::harvested_energy(&refined.covariance, inst.channels.gram(i), cfg).map(|e| e.max(0.0)))
            .collect::<Result<_>>()?;
        let mut t = optimize_slots(problem, &harvested, rates);
        let mut q = local.to_vec();
        polish_fixed(problem, &harvested, rates, &mut q, &mut t);
        let value = fixed_rate_value(problem, &q, rates, &t);
        if !(value > best) {
            break;
        }
        let gain = value - best;
        best = value;
        *covariance = refined.covariance;
        local.copy_from_slice(&q);
        time.copy_from_slice(&t);
        if gain <= 1e-14 * best {
            break;
        }
    }
    Ok(())
}

/// Rounds of block ascent in [`polish`].
pub const POLISH_ROUNDS: usize = 20;

/// `sum_i w_i (q_i + r_i t_i)`.
pub fn fixed_rate_value(problem: &DualProblem, local: &[f64], rates: &[f64], time: &[f64]) -> f64 {
    let w = &problem.instance.config.weights;
    (0..problem.users())
        .map(|i| w[i] * (local[i] + if time[i] > 0.0 { rates[i] * time[i] } else { 0.0 }))
        .sum()
}

/// Slot lengths maximizing `sum_i w_i (q_i + r_i t_i)` when user `i` has
/// `harvested[i]` joules and spends what the slot leaves on local bits.
/// The time and capacity constraints are priced and the prices found by
/// bisection; the result is on the feasible side of both.
pub fn optimize_slots(problem: &DualProblem, harvested: &[f64], rates: &[f64]) -> Vec<f64> {
    let inst = problem.instance;
    let cfg = &inst.config;
    let k = problem.users();
    let costs: Vec<f64> = (0..k).map(|i| slot_cost(inst, i, rates[i])).collect();

    let slot = |i: usize, price: f64| -> f64 {
        let (w, r, c, e) = (cfg.weights[i], rates[i], costs[i], harvested[i]);
        if !(r > 0.0) || !(c > 0.0) || !(e > 0.0) {
            return 0.0;
        }
        let a = inst.users[i].cubic_coefficient(cfg);
        let cap = problem.local_cap(i);
        // Marginal value of one more second of slot.
        let slope = |t: f64| {
            let avail = e - c * t;
            if avail <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let local = if (avail / a).cbrt() < cap {
                w * c / (3.0 * a.cbrt() * avail.powf(2.0 / 3.0))
            } else {
                0.0
            };
            w * r - price - local
        };
        let hi = cfg.block.min(e / c);
        if slope(0.0) <= 0.0 {
            return 0.0;
        }
        if hi < cfg.block && slope(hi) >= 0.0 {
            return hi;
        }
        if hi >= cfg.block && slope(hi) >= 0.0 {
            return hi;
        }
        let (mut lo, mut up) = (0.0, hi);
        for _ in 0..SLOT_BISECTIONS {
            let mid = 0.5 * (lo + up);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                up = mid;
            }
        }
        lo
    };
    let slots = |mu: f64, theta: f64| -> Vec<f64> { (0..k).map(|i| slot(i, mu + theta * rates[i])).collect() };
    let total = |t: &[f64]| t.iter().sum::<f64>();
    let bits = |t: &[f64]| t.iter().zip(rates).map(|(t, r)| t * r).sum::<f64>();

    // Smallest time price that fits the block, for a given capacity price.
    let mu_hi = (0..k).map(|i| cfg.weights[i] * rates[i]).fold(0.0, f64::max);
    let fit_time = |theta: f64| -> Vec<f64> {
        let t = slots(0.0, theta);
        if total(&t) <= cfg.block {
            return t;
        }
        let (mut lo, mut up) = (0.0, mu_hi);
        for _ in 0..PRICE_BISECTIONS {
            let mid = 0.5 * (lo + up);
            if total(&slots(mid, theta)) > cfg.block {
                lo = mid;
            } else {
                up = mid;
            }
        }
        slots(up, theta)
    };
    let t = fit_time(0.0);
    if bits(&t) <= cfg.l_max {
        return t;
    }
    let theta_hi = cfg.weights.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut up) = (0.0, theta_hi);
    for _ in 0..PRICE_BISECTIONS {
        let mid = 0.5 * (lo + up);
        if bits(&fit_time(mid)) > cfg.l_max {
            lo = mid;
        } else {
            up = mid;
        }
    }
    fit_time(up)
}

const SLOT_BISECTIONS: usize = 80;
const PRICE_BISECTIONS: usize = 60;

/// Default iteration cap of [`refine_covariance`] inside [`polish`].
pub const REFINE_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedCovariance {
    pub covariance: HermitianMatrix,
    /// Weighted local bits at `covariance`.
    pub value: f64,
    pub iterations: usize,
}

/// Weighted local bits when user `i` has `harvested[i] - reserved[i]` joules
/// for computing; `-inf` if some user cannot cover its reservation.
pub fn local_value(problem: &DualProblem, harvested: &[f64], reserved: &[f64]) -> f64 {
    let inst = problem.instance;
    let cfg = &inst.config;
    let mut total = 0.0;
    for i in 0..problem.users() {
        let avail = harvested[i] - reserved[i];
        if avail < 0.0 {
            return f64::NEG_INFINITY;
        }
        let a = inst.users[i].cubic_coefficient(cfg);
        total += cfg.weights[i] * (avail / a).cbrt().min(problem.local_cap(i));
    }
    total
}

/// Maximizes [`local_value`] over `{Q >= 0, tr Q <= T P_max}` by projected
/// gradient ascent with backtracking, starting from `start`. The objective
/// is concave in `Q`; only improving steps are taken.
pub fn refine_covariance(
    problem: &DualProblem,
    start: &HermitianMatrix,
    reserved: &[f64],
    max_iter: usize,
) -> Result<RefinedCovariance> {
    let inst = problem.instance;
    let cfg = &inst.config;
    let k = problem.users();
    let budget = cfg.trace_budget();
    let energies = |q: &HermitianMatrix| -> Result<Vec<f64>> {
        (0..k)
            .map(|i| model::harvested_energy(q, inst.channels.gram(i), cfg))
            .collect()
    };

    let mut q = hermitian::psd_trace_project(start, budget)?;
    let mut harvested = energies(&q)?;
    let mut value = local_value(problem, &harvested, reserved);
    let mut step = 1.0;
    let mut iterations = 0;
    if !(budget > 0.0) || !value.is_finite() {
        return Ok(RefinedCovariance { covariance: q, value, iterations });
    }
    while iterations < max_iter {
        iterations += 1;
        let mut grad = HermitianMatrix::zeros(cfg.antennas);
        for i in 0..k {
            let a = inst.users[i].cubic_coefficient(cfg);
            let avail = (harvested[i] - reserved[i]).max(f64::MIN_POSITIVE);
            if (avail / a).cbrt() >= problem.local_cap(i) {
                continue;
            }
            let d = cfg.weights[i] / (3.0 * a.cbrt() * avail.powf(2.0 / 3.0));
            grad.add_scaled(d * cfg.block * cfg.eta, inst.channels.gram(i));
        }
        let norm = grad.frobenius_norm();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let dir = grad.scale(budget / norm);
        let mut improved = false;
        while step > 1e-14 {
            let mut cand = q.clone();
            cand.add_scaled(step, &dir);
            let cand = hermitian::psd_trace_project(&cand, budget)?;
            let e = energies(&cand)?;
            let v = local_value(problem, &e, reserved);
            if v > value {
                q = cand;
                harvested = e;
                value = v;
                improved = true;
                step = (2.0 * step).min(1.0);
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(RefinedCovariance { covariance: q, value, iterations })
}

/// Slot lengths below this fraction of the block are dropped by [`polish_fixed`].
pub const IDLE_SLOT: f64 = 1e-6;

/// [`polish`] with the harvested energies frozen.
pub fn polish_fixed(problem: &DualProblem, harvested: &[f64], rates: &[f64], local: &mut [f64], time: &mut [f64]) {
    let inst = problem.instance;
    let cfg = &inst.config;
    let k = problem.users();
    // Keep a hair of headroom so rounding cannot flip an active EH constraint.
    let shrink = 1.0 - 1e-12;

    for i in 0..k {
        time[i] = if rates[i] > 0.0 { time[i].clamp(0.0, cfg.block) } else { 0.0 };
        // Slots this short are solver residue, not allocations.
        if time[i] < IDLE_SLOT * cfg.block {
            time[i] = 0.0;
        }
        local[i] = local[i].clamp(0.0, problem.local_cap(i));
    }
    let total: f64 = time.iter().sum();
    if total > cfg.block {
        time.iter_mut().for_each(|t| *t *= cfg.block / total * shrink);
    }
    let bits: f64 = time.iter().zip(rates).map(|(t, r)| t * r).sum();
    if bits > cfg.l_max {
        time.iter_mut().for_each(|t| *t *= cfg.l_max / bits * shrink);
    }

    let costs: Vec<f64> = (0..k).map(|i| slot_cost(inst, i, rates[i])).collect();
    for i in 0..k {
        let a = inst.users[i].cubic_coefficient(cfg);
        let e = harvested[i] * shrink;
        let avail = e - a * local[i].powi(3);
        if avail < costs[i] * time[i] {
            if avail <= 0.0 {
                time[i] = 0.0;
                local[i] = (e / a).cbrt().min(problem.local_cap(i));
            } else {
                time[i] = avail / costs[i];
            }
        }
        let room = (e - costs[i] * time[i]).max(0.0);
        local[i] = local[i].max((room / a).cbrt().min(problem.local_cap(i)));
    }

    // Users whose local bits hit the cap may still have energy for longer
    // slots; serve the most valuable ones first.
    let mut order: Vec<usize> = (0..k).filter(|&i| rates[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let va = cfg.weights[a] * rates[a];
        let vb = cfg.weights[b] * rates[b];
        vb.total_cmp(&va).then(a.cmp(&b))
    });
    for i in order {
        let a = inst.users[i].cubic_coefficient(cfg);
        let left = harvested[i] * shrink - a * local[i].powi(3) - costs[i] * time[i];
        if left <= 0.0 {
            continue;
        }
        let time_room = cfg.block - time.iter().sum::<f64>();
        let bits_room = cfg.l_max - time.iter().zip(rates).map(|(t, r)| t * r).sum::<f64>();
        let extra = (left / costs[i]).min(time_room * shrink).min(bits_room * shrink / rates[i]);
        if extra >= IDLE_SLOT * cfg.block {
            time[i] += extra;
        }
    }
}

/// Builds the allocation `l = r t`, checks it, and fills in the report.
#[allow(clippy::too_many_arguments)]
pub fn assemble_solution(
    inst: &Instance,
    local: Vec<f64>,
    rates: &[f64],
    covariance: HermitianMatrix,
    time: Vec<f64>,
    dual_bound: Option<f64>,
    iterations: usize,
    sdp_iterations: usize,
    status: SolveStatus,
) -> Result<(Allocation, SolveReport)> {
    let offloaded = time.iter().zip(rates).map(|(t, r)| if *t > 0.0 { t * r } else { 0.0 }).collect();
    let alloc = Allocation {
        covariance,
        time,
        offloaded,
        local,
    };
    let report = SolveReport::for_allocation(&alloc, inst, dual_bound, iterations, sdp_iterations, status)?;
    Ok((alloc, report))
}


#[cfg(test)]
mod slot_tests {
    use super::*;
    use crate::dual::tests::scalar_instance;
    use crate::model::{ChannelSet, SystemConfig, UserProfile};
    use num_complex::Complex64;

    fn slot_value(problem: &DualProblem, harvested: &[f64], rates: &[f64], time: &[f64]) -> f64 {
        let inst = problem.instance;
        let reserved: Vec<f64> = (0..problem.users()).map(|i| time[i] * slot_cost(inst, i, rates[i])).collect();
        local_value(problem, harvested, &reserved)
            + (0..problem.users()).map(|i| inst.config.weights[i] * rates[i] * time[i]).sum::<f64>()
    }

    #[test]
    fn slots_match_grid_search() {
        let inst = scalar_instance(&[(5e-6, 5e-6), (3e-6, 9e-6)], 10.0);
        let cfg = &inst.config;
        let problem = DualProblem::new(&inst);
        let harvested = [2e-6, 1.2e-6];
        let rates = [1.5e6, 2.5e6];
        let t = optimize_slots(&problem, &harvested, &rates);
        assert!(t.iter().sum::<f64>() <= cfg.block * (1.0 + 1e-12));
        assert!(t.iter().zip(&rates).map(|(t, r)| t * r).sum::<f64>() <= cfg.l_max * (1.0 + 1e-12));
        let found = slot_value(&problem, &harvested, &rates, &t);
        assert!(found.is_finite());

        let steps = 400;
        let mut best = f64::NEG_INFINITY;
        for a in 0..=steps {
            for b in 0..=steps - a {
                let cand = [cfg.block * a as f64 / steps as f64, cfg.block * b as f64 / steps as f64];
                if cand[0] * rates[0] + cand[1] * rates[1] > cfg.l_max {
                    continue;
                }
                best = best.max(slot_value(&problem, &harvested, &rates, &cand));
            }
        }
        assert!(found >= best * (1.0 - 1e-9), "{found} < grid {best}");
        assert!(found <= best * 1.01);
    }

    #[test]
    fn refinement_finds_the_beam_for_one_user() {
        let c = |re: f64, im: f64| Complex64::new(re, im) * 1e-3;
        let h = vec![vec![c(1.0, 0.5), c(-0.3, 1.2)]];
        let cfg = SystemConfig::with_defaults(2, 1, 1.0);
        let inst = Instance::new(cfg, vec![UserProfile::default()], ChannelSet::new(h.clone(), h).unwrap()).unwrap();
        let problem = DualProblem::new(&inst);
        let cfg = &inst.config;
        let start = HermitianMatrix::scaled_identity(2, cfg.trace_budget() / 2.0);
        let out = refine_covariance(&problem, &start, &[0.0], REFINE_ITERATIONS).unwrap();
        let e = cfg.block * cfg.eta * cfg.trace_budget() * inst.channels.downlink_gain(0);
        let a = inst.users[0].cubic_coefficient(cfg);
        let expected = cfg.weights[0] * (e / a).cbrt().min(problem.local_cap(0));
        assert!((out.value - expected).abs() <= 1e-6 * expected, "{} vs {expected}", out.value);
        assert!(out.covariance.trace() <= cfg.trace_budget() * (1.0 + 1e-9));
    }

    #[test]
    fn refinement_never_decreases_the_value() {
        let inst = scalar_instance(&[(5e-6, 5e-6), (1e-6, 1e-6), (8e-6, 2e-6)], 0.5);
        let problem = DualProblem::new(&inst);
        let budget = inst.config.trace_budget();
        let start = HermitianMatrix::scaled_identity(1, 0.3 * budget);
        let reserved = [1e-9, 0.0, 2e-9];
        let before = {
            let harvested: Vec<f64> = (0..3)
                .map(|i| model::harvested_energy(&start, inst.channels.gram(i), &inst.config).unwrap())
                .collect();
            local_value(&problem, &harvested, &reserved)
        };
        let out = refine_covariance(&problem, &start, &reserved, 200).unwrap();
        assert!(out.value >= before);
        assert!((out.covariance.trace() - budget).abs() <= 1e-9 * budget);
    }
}
