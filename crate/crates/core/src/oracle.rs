//! Reference solutions for tiny instances and a KKT certificate checker.
//!
//! The grid search only applies to a single antenna, where the covariance is
//! a scalar and spending the whole budget is optimal. It is written against
//! the model formulas alone so that it shares no code path with the dual
//! solver.

use rayon::prelude::*;
use serde::Serialize;

use crate::dual::{self, DualPoint};
use crate::error::{Error, Result};
use crate::hermitian::{self, HermitianMatrix};
use crate::model::{
    self, beta_prime_unchecked, beta_unchecked, Allocation, FeasibilityTolerance, Instance,
};

/// Grid resolution for [`brute_force`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per slot-length axis.
    pub t_points: usize,
    /// Points per local-bits axis.
    pub q_points: usize,
    /// Zoom passes after the first grid; each recenters a finer grid on the
    /// incumbent, two cells either side.
    pub levels: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t_points: 33,
            q_points: 33,
            levels: 10,
        }
    }
}

/// Shortest nonzero slot on the first pass, as a fraction of the block.
const SLOT_SPAN: f64 = 1e-6;

/// Largest number of points evaluated in one pass.
pub const MAX_GRID_POINTS: usize = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub objective: f64,
    /// Grid points evaluated over all passes.
    pub evaluated: usize,
}

struct ScalarUser {
    weight: f64,
    energy: f64,
    cubic: f64,
    p_c: f64,
    gain: f64,
}

/// Objective at `(t, q)` and the offloaded bits, or `None` when the local
/// bits alone need more than the harvested energy.
fn evaluate(users: &[ScalarUser], order: &[usize], x: &[f64], cfg: &model::SystemConfig) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let k = users.len();
    if x[..k].iter().sum::<f64>() > cfg.block {
        return None;
    }
    let mut bits = vec![0.0; k];
    let mut time = vec![0.0; k];
    for (i, u) in users.iter().enumerate() {
        let (t, q) = (x[i], x[k + i]);
        let spare = u.energy - u.cubic * q * q * q;
        if spare < 0.0 {
            return None;
        }
        let off = spare - u.p_c * t;
        if t > 0.0 && off > 0.0 && u.gain > 0.0 {
            bits[i] = t * cfg.bandwidth * (1.0 + u.gain * off / (t * cfg.sigma2)).log2();
            time[i] = t;
        }
    }
    let mut room = cfg.l_max;
    for &i in order {
        bits[i] = bits[i].min(room);
        room -= bits[i];
    }
    let value = users
        .iter()
        .enumerate()
        .map(|(i, u)| u.weight * (x[k + i] + bits[i]))
        .sum();
    Some((value, time, bits))
}

/// Grid search over slot lengths and local bits with `Q = T P_max`.
///
/// For each point the offloaded bits are the most the leftover energy can
/// carry, `l = t B log2(1 + g E_off / (t sigma2))`; the edge capacity is
/// then shared greedily by weight, which is exact for a linear objective.
pub fn brute_force(inst: &Instance, grid: &GridSpec) -> Result<OracleResult> {
    let caps: Vec<f64> = (0..inst.num_users()).map(|i| inst.local_cap(i)).collect();
    brute_force_with_caps(inst, grid, &caps)
}

/// [`brute_force`] with every local-bits axis pinned to zero.
pub fn brute_force_offload_only(inst: &Instance, grid: &GridSpec) -> Result<OracleResult> {
    brute_force_with_caps(inst, grid, &vec![0.0; inst.num_users()])
}

fn brute_force_with_caps(inst: &Instance, grid: &GridSpec, caps: &[f64]) -> Result<OracleResult> {
    let cfg = &inst.config;
    let k = inst.num_users();
    if cfg.antennas != 1 || k > 2 {
        return Err(Error::UnsupportedSize(format!(
            "grid oracle needs N = 1 and K <= 2, got N = {}, K = {k}",
            cfg.antennas
        )));
    }
    if grid.t_points < 32 || grid.q_points < 32 {
        return Err(Error::Validation("grid resolutions must be >= 32".into()));
    }
    let budget = cfg.block * cfg.p_max.max(0.0);
    let users: Vec<ScalarUser> = (0..k)
        .map(|i| ScalarUser {
            weight: cfg.weights[i],
            energy: cfg.block * cfg.eta * budget * inst.channels.downlink_gain(i),
            cubic: inst.users[i].cubic_coefficient(cfg),
            p_c: inst.users[i].p_c,
            gain: inst.effective_gain(i),
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| users[b].weight.total_cmp(&users[a].weight).then(a.cmp(&b)));

    let dims = 2 * k;
    let points: Vec<usize> = (0..dims).map(|d| if d < k { grid.t_points } else { grid.q_points }).collect();
    let total: usize = points.iter().product();
    if total > MAX_GRID_POINTS {
        return Err(Error::UnsupportedSize(format!("{total} grid points per pass")));
    }
    let full: Vec<(f64, f64)> = (0..dims)
        .map(|d| if d < k { (0.0, cfg.block) } else { (0.0, caps[d - k]) })
        .collect();
    let mut bounds = full.clone();
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut evaluated = 0;

    for level in 0..=grid.levels {
        // The first pass spaces the slot axes geometrically: optimal slots
        // can be orders of magnitude shorter than the block.
        let coord = |d: usize, j: usize| -> f64 {
            let (lo, hi) = bounds[d];
            let n = points[d] - 1;
            if level == 0 && d < k {
                if j == 0 {
                    0.0
                } else {
                    hi * (SLOT_SPAN.ln() * (n - j) as f64 / (n - 1) as f64).exp()
                }
            } else {
                lo + (hi - lo) * j as f64 / n as f64
            }
        };
        let split = |idx: usize| -> Vec<usize> {
            let mut rem = idx;
            (0..dims)
                .map(|d| {
                    let j = rem % points[d];
                    rem /= points[d];
                    j
                })
                .collect()
        };
        let coords = |idx: usize| -> Vec<f64> { split(idx).iter().enumerate().map(|(d, &j)| coord(d, j)).collect() };
        // Ties go to less total slot time, then to the lower grid index.
        let pass = (0..total)
            .into_par_iter()
            .filter_map(|idx| {
                let x = coords(idx);
                evaluate(&users, &order, &x, cfg).map(|(v, t, _)| (v, -t.iter().sum::<f64>(), idx))
            })
            .reduce_with(|a, b| {
                match a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(b.2.cmp(&a.2)) {
                    std::cmp::Ordering::Less => b,
                    _ => a,
                }
            });
        evaluated += total;
        let mut center = None;
        if let Some((v, neg_t, idx)) = pass {
            let better = match &best {
                None => true,
                Some((bv, bt, _)) => v > *bv || (v == *bv && neg_t > *bt),
            };
            if better {
                best = Some((v, neg_t, coords(idx)));
                center = Some(split(idx));
            }
        }
        let Some((_, _, x)) = &best else { break };
        let next: Vec<(f64, f64)> = (0..dims)
            .map(|d| match &center {
                Some(j) => {
                    let below = coord(d, j[d].saturating_sub(2));
                    let above = coord(d, (j[d] + 2).min(points[d] - 1));
                    (below.max(full[d].0), above.min(full[d].1))
                }
                None => {
                    let step = (bounds[d].1 - bounds[d].0) / (points[d] - 1) as f64;
                    ((x[d] - 2.0 * step).max(full[d].0), (x[d] + 2.0 * step).min(full[d].1))
                }
            })
            .collect();
        bounds = next;
    }

    let (objective, x) = match best {
        Some((v, _, x)) => (v, x),
        None => (0.0, vec![0.0; dims]),
    };
    let (_, time, bits) = evaluate(&users, &order, &x, cfg).unwrap_or((0.0, vec![0.0; k], vec![0.0; k]));
    Ok(OracleResult {
        allocation: Allocation {
            covariance: HermitianMatrix::scaled_identity(1, budget),
            time,
            offloaded: bits,
            local: x[k..].to_vec(),
        },
        objective,
        evaluated,
    })
}

/// Dimensionless KKT residuals of an allocation against a dual point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// `(condition, violation)` pairs.
    pub entries: Vec<(String, f64)>,
    pub max_violation: f64,
    pub passed: bool,
}

/// Checks primal and dual feasibility, stationarity of every per-user
/// subproblem, and complementary slackness.
///
/// Stationarity residuals are relative to the gross terms that cancel;
/// complementary-slackness products are divided by the objective.
pub fn kkt_check(alloc: &Allocation, dp: &DualPoint, inst: &Instance, tol: f64) -> Result<KktReport> {
    let cfg = &inst.config;
    let k = inst.num_users();
    if dp.users() != k {
        return Err(Error::Dimension("dual point and instance differ in K".into()));
    }
    let feas = model::check_feasibility(alloc, inst, &FeasibilityTolerance::default())?;
    let objective = model::objective(alloc, cfg)?;
    let scale = objective.max(1e-9 * inst.objective_ceiling()).max(1e-300);
    let mut entries: Vec<(String, f64)> = Vec::new();
    let mut push = |name: String, v: f64| entries.push((name, if v.is_nan() { f64::INFINITY } else { v }));

    // Primal feasibility.
    for i in 0..k {
        push(format!("eh[{i}]"), (-feas.eh_slack[i]).max(0.0) / feas.harvested[i].max(1e-300));
        let cap = inst.local_cap(i);
        push(format!("local_cap[{i}]"), (alloc.local[i] - cap).max(0.0) / cap);
    }
    push("time".into(), (-feas.time_slack).max(0.0) / cfg.block);
    if cfg.l_max > 0.0 {
        push("capacity".into(), (-feas.capacity_slack).max(0.0) / cfg.l_max);
    }
    push("trace".into(), (-feas.trace_slack).max(0.0) / cfg.trace_budget());

    // Dual feasibility.
    let negative = dp.to_vec().iter().any(|&x| x < 0.0);
    push("multiplier_sign".into(), if negative { 1.0 } else { 0.0 });
    let g = dual::dual_matrix(dp, inst);
    let (top, _) = hermitian::max_eigpair(&g)?;
    let g_norm = g.frobenius_norm().max(1e-300);
    push("dual_psd".into(), top.max(0.0) / g_norm);

    for i in 0..k {
        let (w, lambda) = (cfg.weights[i], dp.lambda[i]);
        let u = &inst.users[i];

        // Local bits.
        let a = u.cubic_coefficient(cfg);
        let q = alloc.local[i];
        let cap = inst.local_cap(i);
        let d = w - 3.0 * lambda * a * q * q;
        let v = if q <= 1e-9 * cap {
            d.max(0.0)
        } else if q >= cap * (1.0 - 1e-9) {
            (-d).max(0.0)
        } else {
            d.abs()
        };
        push(format!("local_stationarity[{i}]"), v / w);

        // Offloaded bits and slot length.
        let gain = inst.effective_gain(i);
        let margin = w - dp.theta;
        let (t, l) = (alloc.time[i], alloc.offloaded[i]);
        if t > 0.0 {
            let r = l / t;
            let db = beta_prime_unchecked(r, cfg.sigma2, cfg.bandwidth);
            let d_bits = margin - lambda * db / gain;
            let v = if l <= 0.0 {
                d_bits.max(0.0)
            } else if l >= cfg.l_max * (1.0 - 1e-12) {
                (-d_bits).max(0.0)
            } else {
                d_bits.abs()
            };
            push(format!("rate_stationarity[{i}]"), v / w);

            let b = beta_unchecked(r, cfg.sigma2, cfg.bandwidth);
            let cost = dp.mu + lambda * u.p_c + lambda * b / gain;
            let benefit = lambda * r * db / gain;
            let price = cost - benefit;
            let v = if t >= cfg.block * (1.0 - 1e-12) { price.max(0.0) } else { price.abs() };
            // A slot second is worth w r bits of objective; prices far below
            // that are zero for all practical purposes.
            push(format!("slot_stationarity[{i}]"), v / (cost + benefit + w * r).max(1e-300));
        } else {
            let v = match dual::stationary_rate(lambda, margin, gain, cfg) {
                Some(r) => {
                    let price = dual::slot_price(r, lambda, dp.mu, gain, u.p_c, cfg);
                    let db = beta_prime_unchecked(r, cfg.sigma2, cfg.bandwidth);
                    let b = beta_unchecked(r, cfg.sigma2, cfg.bandwidth);
                    let gross = dp.mu + lambda * u.p_c + lambda * (b + r * db) / gain;
                    (-price).max(0.0) / (gross + w * r).max(1e-300)
                }
                None if lambda <= 0.0 && margin > 0.0 && cfg.l_max > 0.0 => 1.0,
                None => 0.0,
            };
            push(format!("idle_slot[{i}]"), v);
        }

        push(
            format!("eh_slackness[{i}]"),
            lambda * feas.eh_slack[i].abs() / scale,
        );
    }
    push("time_slackness".into(), dp.mu * feas.time_slack.abs() / scale);
    push("capacity_slackness".into(), dp.theta * feas.capacity_slack.abs() / scale);
    push("trace_slackness".into(), dp.rho * feas.trace_slack.abs() / scale);
    let gq = hermitian::trace_product(&g, &alloc.covariance)?;
    push("covariance_slackness".into(), gq.abs() / scale);

    let max_violation = entries.iter().map(|e| e.1).fold(0.0, f64::max);
    Ok(KktReport {
        passed: max_violation <= tol,
        max_violation,
        entries,
    })
}
