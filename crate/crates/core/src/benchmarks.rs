//! The comparison schemes: local computing only, offloading only, and
//! isotropic energy beamforming, plus the fixed-covariance solver they use.

use serde::{Deserialize, Serialize};

use crate::dual::{self, DualProblem, OffloadBranch};
use crate::error::{Error, Result};
use crate::hermitian::{self, HermitianMatrix};
use crate::joint::{self, SolverOptions};
use crate::model::{self, Allocation, Instance, SolveReport, SolveStatus};
use crate::recovery;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeId {
    Joint,
    LocalOnly,
    OffloadOnly,
    Isotropic,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::Joint,
        SchemeId::LocalOnly,
        SchemeId::OffloadOnly,
        SchemeId::Isotropic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Joint => "joint",
            SchemeId::LocalOnly => "local-only",
            SchemeId::OffloadOnly => "offload-only",
            SchemeId::Isotropic => "isotropic",
        }
    }
}

impl std::fmt::Display for SchemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct SchemeSolution {
    pub scheme: SchemeId,
    pub allocation: Allocation,
    pub report: SolveReport,
}

/// Runs one scheme on an instance.
pub fn solve_scheme(scheme: SchemeId, inst: &Instance, opts: &SolverOptions) -> Result<SchemeSolution> {
    let (allocation, report) = match scheme {
        SchemeId::Joint => {
            let s = joint::solve_joint(inst, opts)?;
            (s.allocation, s.report)
        }
        SchemeId::LocalOnly => solve_local_only(inst)?,
        SchemeId::OffloadOnly => {
            let s = solve_offload_only(inst, opts)?;
            (s.allocation, s.report)
        }
        SchemeId::Isotropic => {
            let s = solve_isotropic(inst)?;
            (s.allocation, s.report)
        }
    };
    Ok(SchemeSolution {
        scheme,
        allocation,
        report,
    })
}

/// One user's best response to the time price `mu` and capacity price
/// `theta` when it holds `energy` joules.
#[derive(Debug, Clone, Copy, PartialEq)]
struct UserResponse {
    local: f64,
    time: f64,
    bits: f64,
    /// Offloading rate to use if the slot is opened; zero if never.
    rate: f64,
    /// Upper bound on the user's priced value, tight at the exact multiplier.
    bound: f64,
}

fn user_response(problem: &DualProblem, i: usize, energy: f64, mu: f64, theta: f64) -> UserResponse {
    let inst = problem.instance;
    let cfg = &inst.config;
    let profile = &inst.users[i];
    let w = cfg.weights[i];
    let a = profile.cubic_coefficient(cfg);
    let cap = problem.local_cap(i);
    let g = inst.effective_gain(i);
    let margin = w - theta;
    let none = UserResponse {
        local: 0.0,
        time: 0.0,
        bits: 0.0,
        rate: 0.0,
        bound: 0.0,
    };
    if !(energy > 0.0) {
        return none;
    }

    let at = |lambda: f64| {
        let q = dual::local_bits(lambda, w, a, cap);
        let c = dual::solve_t_ell_subproblem(lambda, mu, theta, g, profile, cfg, w);
        let used = a * q * q * q + dual::offload_consumption(&c, g, profile.p_c, cfg);
        let value = w * q + margin * c.bits - mu * c.time;
        (q, c, used, value)
    };

    let offloads = margin > 0.0 && cfg.l_max > 0.0 && g > 0.0;
    if !offloads && a * cap.powi(3) <= energy {
        return UserResponse {
            local: cap,
            bound: w * cap,
            ..none
        };
    }

    // Above both of these prices the user uses at most its energy.
    let q_fit = (energy / a).cbrt().min(cap);
    let by_local = if cap > 0.0 && q_fit > 0.0 { w / (3.0 * a * q_fit * q_fit) } else { 0.0 };
    let by_offload = if offloads {
        margin * cfg.bandwidth * g / (cfg.sigma2 * std::f64::consts::LN_2)
    } else {
        0.0
    };
    let mut hi = by_local.max(by_offload) * (1.0 + 1e-12);
    if !(hi > 0.0) {
        return none;
    }
    // Energy use grows as the multiplier falls. Below `hi * LAMBDA_FLOOR`
    // the term `lambda * energy` of the bound is negligible, so a user that
    // still fits there is treated as unconstrained.
    let floor = hi * LAMBDA_FLOOR;
    let mut lo = hi;
    let mut found = false;
    while lo > floor {
        lo = (lo * LAMBDA_DESCENT).max(floor);
        if at(lo).2 > energy {
            found = true;
            break;
        }
        hi = lo;
    }
    if !found {
        let (q, c, _, value) = at(hi);
        return UserResponse {
            local: q,
            time: c.time,
            bits: c.bits,
            rate: if c.rate.is_finite() { c.rate } else { 0.0 },
            bound: value + hi * energy,
        };
    }
    for _ in 0..LAMBDA_BISECTIONS {
        let mid = (lo * hi).sqrt();
        if at(mid).2 > energy {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi <= lo * (1.0 + LAMBDA_RTOL) {
            break;
        }
    }

    let (q, c, used, value) = at(hi);
    let bound = value + hi * (energy - used);
    let rate = match c.branch {
        OffloadBranch::Stationary | OffloadBranch::CapacityLimited if c.rate.is_finite() => c.rate,
        _ => 0.0,
    };
    let mut time = c.time;
    let mut bits = c.bits;
    // The slot may jump open just below the multiplier; fill it with the
    // energy left at the feasible end.
    if time == 0.0 && rate > 0.0 {
        let t_lo = at(lo).1.time;
        let cost = recovery::slot_cost(inst, i, rate);
        time = ((energy - used).max(0.0) / cost).min(t_lo).min(cfg.l_max / rate);
        bits = rate * time;
    }
    UserResponse {
        local: q,
        time,
        bits,
        rate,
        bound,
    }
}

const LAMBDA_BISECTIONS: usize = 200;
const LAMBDA_DESCENT: f64 = 1e-4;
const LAMBDA_FLOOR: f64 = 1e-40;
const LAMBDA_RTOL: f64 = 1e-10;
const PRICE_BISECTIONS: usize = 100;
const PRICE_RTOL: f64 = 1e-8;

/// Result of [`solve_fixed_q`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedQSolution {
    pub allocation: Allocation,
    pub objective: f64,
    /// Upper bound on the fixed-covariance optimum.
    pub dual_bound: f64,
    pub relative_gap: f64,
}

/// Maximizes the weighted bits with the energy covariance frozen at `q`.
///
/// The time and capacity constraints are priced; each user answers the
/// prices with a per-user multiplier found by bisection on its energy use.
/// The slot lengths are then re-optimized for the resulting rates.
pub fn solve_fixed_q(q: &HermitianMatrix, inst: &Instance) -> Result<FixedQSolution> {
    solve_fixed_q_with(&DualProblem::new(inst), q)
}

pub(crate) fn solve_fixed_q_with(problem: &DualProblem, q: &HermitianMatrix) -> Result<FixedQSolution> {
    let inst = problem.instance;
    let cfg = &inst.config;
    let k = problem.users();
    if q.dim() != cfg.antennas {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, expected {}",
            q.dim(),
            q.dim(),
            cfg.antennas
        )));
    }
    if !q.is_finite() {
        return Err(Error::Validation("covariance has non-finite entries".into()));
    }
    let (lo_eig, tr) = (hermitian::eig(q)?.values[0], q.trace());
    let budget = cfg.trace_budget();
    if lo_eig < -1e-12 * tr.abs().max(1.0) || tr > budget * (1.0 + 1e-12) {
        return Err(Error::Validation(format!(
            "covariance must be PSD with trace <= {budget}, got min eigenvalue {lo_eig}, trace {tr}"
        )));
    }
    let harvested: Vec<f64> = (0..k)
        .map(|i| model::harvested_energy(q, inst.channels.gram(i), cfg).map(|e| e.max(0.0)))
        .collect::<Result<_>>()?;

    let respond = |mu: f64, theta: f64| -> Vec<UserResponse> {
        (0..k).map(|i| user_response(problem, i, harvested[i], mu, theta)).collect()
    };
    let total = |r: &[UserResponse]| r.iter().map(|u| u.time).sum::<f64>();
    let bits = |r: &[UserResponse]| r.iter().map(|u| u.bits).sum::<f64>();

    // Smallest time price that fits the block for a capacity price. The
    // fitted price falls as the capacity price rises, so prices fitted at
    // neighbouring capacity prices bracket it.
    let fit_time = |theta: f64, bracket: (f64, f64)| -> (f64, Vec<UserResponse>) {
        let r = respond(0.0, theta);
        if total(&r) <= cfg.block {
            return (0.0, r);
        }
        let (mut lo, mut up) = bracket;
        let mut r_up = respond(up, theta);
        while total(&r_up) > cfg.block && up < f64::MAX / 4.0 {
            lo = up;
            up *= 2.0;
            r_up = respond(up, theta);
        }
        for _ in 0..PRICE_BISECTIONS {
            if up - lo <= PRICE_RTOL * up {
                break;
            }
            let mid = 0.5 * (lo + up);
            let r = respond(mid, theta);
            if total(&r) > cfg.block {
                lo = mid;
            } else {
                up = mid;
                r_up = r;
            }
        }
        (up, r_up)
    };
    let w_max = cfg.weights.iter().cloned().fold(0.0, f64::max);
    let (mut mu, mut resp) = fit_time(0.0, (0.0, w_max.max(1e-300)));
    let mut theta = 0.0;
    // Responses just below the capacity price. When the bits jump at the
    // price (users indifferent to offloading), their rates are the useful ones.
    let mut over: Option<Vec<UserResponse>> = None;
    if bits(&resp) > cfg.l_max {
        let mu_lo = mu;
        let mut up = w_max;
        let (mut mu_up, mut r_up) = fit_time(up, (0.0, mu_lo.max(w_max)));
        let (mut lo, mut mu_at_lo) = (0.0, mu_lo);
        let mut r_lo = resp.clone();
        // Users indifferent at the top price: the bits never fit below it.
        let probe = up * (1.0 - PRICE_RTOL);
        let (m, r) = fit_time(probe, (mu_up, mu_at_lo.max(mu_up).max(1e-300)));
        if bits(&r) > cfg.l_max {
            lo = probe;
            mu_at_lo = m;
            r_lo = r;
        }
        for _ in 0..PRICE_BISECTIONS {
            if up - lo <= PRICE_RTOL * up {
                break;
            }
            let mid = 0.5 * (lo + up);
            let (m, r) = fit_time(mid, (mu_up, mu_at_lo.max(mu_up).max(1e-300)));
            if bits(&r) > cfg.l_max {
                lo = mid;
                mu_at_lo = m;
                r_lo = r;
            } else {
                up = mid;
                mu_up = m;
                r_up = r;
            }
        }
        theta = up;
        mu = mu_up;
        resp = r_up;
        over = Some(r_lo);
    }

    let dual_bound = mu * cfg.block + theta * cfg.l_max + resp.iter().map(|u| u.bound).sum::<f64>();
    // Slots re-optimized for the responses' rates, or the priced slots
    // themselves, whichever is better.
    let candidate = |r: &[UserResponse]| -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
        let rates: Vec<f64> = r.iter().map(|u| u.rate).collect();
        let mut local: Vec<f64> = r.iter().map(|u| u.local).collect();
        let mut time = recovery::optimize_slots(problem, &harvested, &rates);
        recovery::polish_fixed(problem, &harvested, &rates, &mut local, &mut time);
        let mut alt_local: Vec<f64> = r.iter().map(|u| u.local).collect();
        let mut alt_time: Vec<f64> = r.iter().map(|u| u.time).collect();
        recovery::polish_fixed(problem, &harvested, &rates, &mut alt_local, &mut alt_time);
        let value = recovery::fixed_rate_value(problem, &local, &rates, &time);
        let alt_value = recovery::fixed_rate_value(problem, &alt_local, &rates, &alt_time);
        if alt_value > value {
            (alt_value, rates, alt_local, alt_time)
        } else {
            (value, rates, local, time)
        }
    };
    let mut best = candidate(&resp);
    if let Some(r) = &over {
        let c = candidate(r);
        if c.0 > best.0 {
            best = c;
        }
    }
    let (_, rates, local, time) = best;

    let offloaded: Vec<f64> = time.iter().zip(&rates).map(|(t, r)| if *t > 0.0 { t * r } else { 0.0 }).collect();
    let allocation = Allocation {
        covariance: q.clone(),
        time,
        offloaded,
        local,
    };
    let objective = model::objective(&allocation, cfg)?;
    let dual_bound = dual_bound.max(objective);
    Ok(FixedQSolution {
        allocation,
        objective,
        dual_bound,
        relative_gap: model::relative_gap(dual_bound, objective),
    })
}

/// Multi-start cap for the covariance ascent in [`solve_local_only`].
pub const LOCAL_ONLY_ITERATIONS: usize = 2000;

/// Every user computes locally; the covariance maximizes the weighted
/// local bits. Projected gradient ascent is started from the isotropic
/// covariance and from a beam on each user, and the best end point kept.
pub fn solve_local_only(inst: &Instance) -> Result<(Allocation, SolveReport)> {
    let cfg = &inst.config;
    let k = inst.num_users();
    let problem = DualProblem::new(inst);
    let budget = cfg.trace_budget();
    let reserved = vec![0.0; k];

    let mut starts = vec![HermitianMatrix::scaled_identity(cfg.antennas, budget / cfg.antennas as f64)];
    for i in 0..k {
        let gain = inst.channels.downlink_gain(i);
        if gain > 0.0 {
            starts.push(HermitianMatrix::outer(inst.channels.downlink(i)).scale(budget / gain));
        }
    }
    let mut best: Option<recovery::RefinedCovariance> = None;
    let mut iterations = 0;
    for s in &starts {
        let r = recovery::refine_covariance(&problem, s, &reserved, LOCAL_ONLY_ITERATIONS)?;
        iterations += r.iterations;
        if best.as_ref().map_or(true, |b| r.value > b.value) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start");
    let local: Vec<f64> = (0..k)
        .map(|i| {
            let e = model::harvested_energy(&best.covariance, inst.channels.gram(i), cfg)?.max(0.0);
            let a = inst.users[i].cubic_coefficient(cfg);
            Ok((e * SHRINK / a).cbrt().min(inst.local_cap(i)))
        })
        .collect::<Result<_>>()?;
    let allocation = Allocation {
        local,
        ..Allocation::zeros(cfg.antennas, k)
    };
    let allocation = Allocation {
        covariance: best.covariance,
        ..allocation
    };
    let report = SolveReport::for_allocation(&allocation, inst, None, iterations, 0, SolveStatus::Converged)?;
    Ok((allocation, report))
}

// Headroom so that a tight EH constraint survives rounding.
const SHRINK: f64 = 1.0 - 1e-12;

/// Every user offloads; local computing is switched off and the joint
/// pipeline runs on the restriction.
pub fn solve_offload_only(inst: &Instance, opts: &SolverOptions) -> Result<joint::Solution> {
    joint::solve_problem(&DualProblem::without_local_computing(inst), opts)
}

/// Result of [`solve_isotropic`].
#[derive(Debug, Clone)]
pub struct IsotropicSolution {
    pub allocation: Allocation,
    pub report: SolveReport,
    /// Per-antenna energy `p`, in joules over the block (`Q = p I`).
    pub power: f64,
    pub evaluations: usize,
}

/// Relative tolerance in `p` of the golden-section search.
pub const ISOTROPIC_TOL: f64 = 1e-4;

/// Value of the fixed-covariance problem at `Q = p I`.
pub fn isotropic_value(inst: &Instance, p: f64) -> Result<FixedQSolution> {
    solve_fixed_q(&HermitianMatrix::scaled_identity(inst.config.antennas, p), inst)
}

/// `Q = p I` with `p` in `[0, T P_max / N]` chosen by golden-section search.
pub fn solve_isotropic(inst: &Instance) -> Result<IsotropicSolution> {
    let cfg = &inst.config;
    let top = cfg.trace_budget() / cfg.antennas as f64;
    let mut evaluations = 0;
    let mut eval = |p: f64| -> Result<FixedQSolution> {
        evaluations += 1;
        isotropic_value(inst, p)
    };

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, top);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    let mut best = if f1.objective > f2.objective { (x1, f1.clone()) } else { (x2, f2.clone()) };
    while b - a > ISOTROPIC_TOL * top.max(f64::MIN_POSITIVE) {
        if f1.objective < f2.objective {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = eval(x2)?;
            if f2.objective > best.1.objective {
                best = (x2, f2.clone());
            }
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = eval(x1)?;
            if f1.objective > best.1.objective {
                best = (x1, f1.clone());
            }
        }
    }
    // More energy never hurts, so the top of the range is always a candidate.
    let end = eval(top)?;
    if end.objective >= best.1.objective {
        best = (top, end);
    }
    let (power, sol) = best;
    let report = SolveReport::for_allocation(
        &sol.allocation,
        inst,
        None,
        evaluations,
        0,
        if sol.relative_gap <= 1e-4 {
            SolveStatus::Converged
        } else {
            SolveStatus::IterationLimit
        },
    )?;
    Ok(IsotropicSolution {
        allocation: sol.allocation,
        report,
        power,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::tests::scalar_instance;
    use crate::experiments::{dbm_to_watts, generate_channels};
    use crate::model::{FeasibilityTolerance, SystemConfig, UserProfile};
    use crate::oracle::{self, GridSpec};

    fn random_instance(seed: u64, n: usize, k: usize, dbm: f64) -> Instance {
        let ch = generate_channels(seed, 0, n, k).unwrap();
        Instance::new(
            SystemConfig::with_defaults(n, k, dbm_to_watts(dbm)),
            vec![UserProfile::default(); k],
            ch,
        )
        .unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SchemeId::ALL {
            assert_eq!(s.name().parse::<SchemeId>().unwrap(), s);
        }
        assert!("tdma".parse::<SchemeId>().is_err());
    }

    #[test]
    fn fixed_q_zero_covariance_gives_nothing() {
        let inst = random_instance(3, 2, 3, 30.0);
        let s = solve_fixed_q(&HermitianMatrix::zeros(2), &inst).unwrap();
        assert_eq!(s.objective, 0.0);
        assert!(s.allocation.local.iter().chain(&s.allocation.time).all(|&x| x == 0.0));
    }

    #[test]
    fn fixed_q_rejects_bad_covariance() {
        let inst = random_instance(3, 2, 2, 30.0);
        let budget = inst.config.trace_budget();
        assert!(solve_fixed_q(&HermitianMatrix::diagonal(&[1.0, -1.0]), &inst).is_err());
        assert!(solve_fixed_q(&HermitianMatrix::scaled_identity(2, budget), &inst).is_err());
        assert!(solve_fixed_q(&HermitianMatrix::zeros(3), &inst).is_err());
    }

    #[test]
    fn fixed_q_matches_grid_oracle() {
        for (h, g, p) in [(5e-6, 5e-6, 10.0), (2e-6, 8e-6, 100.0), (8e-6, 1e-6, 1.0)] {
            let inst = scalar_instance(&[(h, g)], p);
            let q = HermitianMatrix::scaled_identity(1, inst.config.trace_budget());
            let s = solve_fixed_q(&q, &inst).unwrap();
            let o = oracle::brute_force(&inst, &GridSpec::default()).unwrap();
            assert!((s.objective - o.objective).abs() <= 1e-2 * o.objective, "{} {}", s.objective, o.objective);
            assert!(s.relative_gap <= 1e-4);
        }
    }

    #[test]
    fn fixed_q_feasible_and_monotone_in_scale() {
        let inst = random_instance(11, 4, 4, 35.0);
        let budget = inst.config.trace_budget();
        let base = HermitianMatrix::outer(inst.channels.downlink(0))
            .add(&HermitianMatrix::identity(4).scale(1e-3));
        let base = base.scale(budget / base.trace());
        let mut last = 0.0;
        for s in [0.05, 0.1, 0.25, 0.5, 1.0] {
            let sol = solve_fixed_q(&base.scale(s), &inst).unwrap();
            let rep = model::check_feasibility(&sol.allocation, &inst, &FeasibilityTolerance::default()).unwrap();
            assert!(rep.feasible, "{:?}", rep.violations);
            assert!(sol.relative_gap <= 1e-4, "{}", sol.relative_gap);
            assert!(sol.objective >= last * (1.0 - 1e-9));
            last = sol.objective;
        }
    }

    #[test]
    fn local_only_single_user_closed_form() {
        let inst = random_instance(5, 4, 1, 25.0);
        let cfg = &inst.config;
        let (alloc, rep) = solve_local_only(&inst).unwrap();
        let u = &inst.users[0];
        let energy = cfg.block * cfg.eta * cfg.trace_budget() * inst.channels.downlink_gain(0);
        let closed = (energy / u.cubic_coefficient(cfg)).cbrt().min(inst.local_cap(0));
        assert!((alloc.local[0] - closed).abs() <= 1e-9 * closed);
        assert!(alloc.offloaded.iter().chain(&alloc.time).all(|&x| x == 0.0));
        assert!(rep.dual_bound.is_none());
    }

    #[test]
    fn local_only_saturates_at_high_power() {
        let inst = random_instance(5, 4, 3, 80.0);
        let (alloc, rep) = solve_local_only(&inst).unwrap();
        for (i, &q) in alloc.local.iter().enumerate() {
            assert!((q - inst.local_cap(i)).abs() <= 1e-9 * inst.local_cap(i));
        }
        assert!((rep.primal_objective - 1e4).abs() <= 1e-6);
    }

    #[test]
    fn local_only_matches_joint_without_capacity() {
        let inst = random_instance(8, 2, 3, 30.0);
        let no_edge = Instance::new(
            SystemConfig { l_max: 0.0, ..inst.config.clone() },
            inst.users.clone(),
            inst.channels.clone(),
        )
        .unwrap();
        let (_, rep) = solve_local_only(&inst).unwrap();
        let j = joint::solve_joint(&no_edge, &SolverOptions::default()).unwrap();
        assert!((rep.primal_objective - j.report.primal_objective).abs() <= 1e-6 * rep.primal_objective);
    }

    #[test]
    fn offload_only_examples() {
        let mut inst = scalar_instance(&[(5e-6, 5e-6)], 10.0);
        let opts = SolverOptions::default();
        let s = solve_offload_only(&inst, &opts).unwrap();
        assert!(s.allocation.local.iter().all(|&q| q == 0.0));
        let o = oracle::brute_force_offload_only(&inst, &GridSpec::default()).unwrap();
        let v = s.report.primal_objective;
        assert!((v - o.objective).abs() <= 1e-2 * o.objective, "{v} {}", o.objective);

        inst.config.l_max = 0.0;
        let s = solve_offload_only(&inst, &opts).unwrap();
        assert_eq!(s.report.primal_objective, 0.0);
    }

    #[test]
    fn isotropic_examples() {
        // One antenna: Q = p I is the whole design space.
        let inst = random_instance(2, 1, 3, 30.0);
        let iso = solve_isotropic(&inst).unwrap();
        let j = joint::solve_joint(&inst, &SolverOptions::default()).unwrap();
        let (a, b) = (iso.report.primal_objective, j.report.primal_objective);
        assert!((a - b).abs() <= 1e-6 * b, "{a} {b}");
        assert!(iso.power <= inst.config.trace_budget() + 1e-15);

        let inst = random_instance(2, 4, 3, 30.0);
        let iso = solve_isotropic(&inst).unwrap();
        assert!((iso.power * 4.0 - inst.config.trace_budget()).abs() <= 1e-4 * inst.config.trace_budget());
        assert!(iso.report.dual_bound.is_none());
    }

    #[test]
    fn isotropic_value_is_concave() {
        let inst = random_instance(4, 4, 4, 35.0);
        let top = inst.config.trace_budget() / 4.0;
        for (a, b) in [(0.1, 0.9), (0.0, 0.5), (0.3, 1.0), (0.05, 0.2)] {
            let fa = isotropic_value(&inst, a * top).unwrap().objective;
            let fb = isotropic_value(&inst, b * top).unwrap().objective;
            let fm = isotropic_value(&inst, 0.5 * (a + b) * top).unwrap().objective;
            assert!(fm >= 0.5 * (fa + fb) * (1.0 - 1e-6), "{fa} {fm} {fb}");
        }
    }

    #[test]
    fn joint_dominates_every_scheme() {
        let opts = SolverOptions::default();
        for (seed, n, k, dbm) in [(1, 2, 2, 25.0), (2, 4, 3, 40.0), (3, 1, 2, 50.0)] {
            let inst = random_instance(seed, n, k, dbm);
            let best = solve_scheme(SchemeId::Joint, &inst, &opts).unwrap().report.primal_objective;
            for s in [SchemeId::LocalOnly, SchemeId::OffloadOnly, SchemeId::Isotropic] {
                let v = solve_scheme(s, &inst, &opts).unwrap().report.primal_objective;
                assert!(v <= best * (1.0 + 1e-6), "{s}: {v} > {best}");
            }
        }
    }
}
