//! System model: configuration, channels, allocations and the physical
//! cost formulas for energy harvesting, offloading and local computing.
//!
//! Units follow the formulas literally: the covariance budget is
//! `tr(Q) <= T * P_max` and a user harvests `E_i = T * eta * tr(Q H_i)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::hermitian::{self, HermitianMatrix};

fn default_gamma() -> f64 {
    1.0
}

/// Global physical and resource parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Antenna count at the access point.
    #[serde(rename = "N")]
    pub antennas: usize,
    /// Number of users.
    #[serde(rename = "K")]
    pub users: usize,
    /// Block duration in seconds.
    #[serde(rename = "T")]
    pub block: f64,
    /// Transmit power budget in watts.
    #[serde(rename = "P_max")]
    pub p_max: f64,
    /// Offloading bandwidth in hertz.
    #[serde(rename = "B")]
    pub bandwidth: f64,
    /// Receiver noise power in watts.
    pub sigma2: f64,
    /// Energy conversion efficiency.
    pub eta: f64,
    /// Capacity gap; the uplink gain is divided by it.
    #[serde(rename = "Gamma", default = "default_gamma")]
    pub gamma: f64,
    /// Edge server capacity in bits per block.
    #[serde(rename = "L_max")]
    pub l_max: f64,
    pub weights: Vec<f64>,
}

impl SystemConfig {
    /// Simulation defaults: `T = 0.1 s`, `eta = 0.8`, `B = 2 MHz`,
    /// `sigma2 = 1e-9 W`, `L_max = 2e5` bits and equal weights `1/K`.
    pub fn with_defaults(antennas: usize, users: usize, p_max: f64) -> Self {
        Self {
            antennas,
            users,
            block: 0.1,
            p_max,
            bandwidth: 2e6,
            sigma2: 1e-9,
            eta: 0.8,
            gamma: 1.0,
            l_max: 2e5,
            weights: vec![1.0 / users as f64; users],
        }
    }

    /// `T * P_max`, the covariance trace budget.
    pub fn trace_budget(&self) -> f64 {
        self.block * self.p_max
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 10] = [
            (self.antennas >= 1 && self.antennas <= hermitian::MAX_DIM, "N must be in 1..=64"),
            (self.users >= 1, "K must be >= 1"),
            (self.block > 0.0 && self.block.is_finite(), "T must be > 0"),
            (self.p_max > 0.0 && self.p_max.is_finite(), "P_max must be > 0"),
            (self.bandwidth > 0.0 && self.bandwidth.is_finite(), "B must be > 0"),
            (self.sigma2 > 0.0 && self.sigma2.is_finite(), "sigma2 must be > 0"),
            (self.eta > 0.0 && self.eta <= 1.0, "eta must be in (0, 1]"),
            (self.gamma >= 1.0 && self.gamma.is_finite(), "Gamma must be >= 1"),
            (self.l_max >= 0.0 && self.l_max.is_finite(), "L_max must be >= 0"),
            (self.weights.len() == self.users, "weights must have length K"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Validation(msg.into()));
            }
        }
        if self.weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Validation("weights must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-user computing hardware.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    /// CPU cycles per bit.
    #[serde(rename = "C")]
    pub cycles_per_bit: f64,
    /// Effective capacitance coefficient.
    pub zeta: f64,
    /// Maximum CPU frequency in hertz.
    pub f_max: f64,
    /// Offloading circuit power in watts.
    pub p_c: f64,
}

impl Default for UserProfile {
    fn default() -> Self {
        Self {
            cycles_per_bit: 1e3,
            zeta: 1e-28,
            f_max: 1e8,
            p_c: 1e-4,
        }
    }
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.cycles_per_bit, self.zeta, self.f_max, self.p_c]
            .iter()
            .all(|&v| v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("user profile entries must be finite and > 0".into()))
        }
    }

    /// Most bits computable locally in one block, `T f_max / C`.
    pub fn local_cap(&self, cfg: &SystemConfig) -> f64 {
        cfg.block * self.f_max / self.cycles_per_bit
    }

    /// `zeta C^3 / T^2`, the coefficient of `q^3` in the local energy.
    pub fn cubic_coefficient(&self, cfg: &SystemConfig) -> f64 {
        self.zeta * self.cycles_per_bit.powi(3) / (cfg.block * cfg.block)
    }
}

/// Downlink and uplink channel vectors with the derived `H_i = h_i h_i^H`
/// and uplink gains `||g_i||^2`.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    downlink: Vec<Vec<Complex64>>,
    uplink: Vec<Vec<Complex64>>,
    grams: Vec<HermitianMatrix>,
    uplink_gains: Vec<f64>,
}

impl ChannelSet {
    pub fn new(downlink: Vec<Vec<Complex64>>, uplink: Vec<Vec<Complex64>>) -> Result<Self> {
        if downlink.is_empty() || downlink.len() != uplink.len() {
            return Err(Error::Dimension(format!(
                "{} downlink vs {} uplink channels",
                downlink.len(),
                uplink.len()
            )));
        }
        let n = downlink[0].len();
        if n == 0 || n > hermitian::MAX_DIM {
            return Err(Error::Dimension(format!("antenna count {n} out of range")));
        }
        for v in downlink.iter().chain(&uplink) {
            if v.len() != n {
                return Err(Error::Dimension("channel vectors differ in length".into()));
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Validation("channel has non-finite entries".into()));
            }
        }
        let grams = downlink.iter().map(|h| HermitianMatrix::outer(h)).collect();
        let uplink_gains = uplink
            .iter()
            .map(|g| g.iter().map(|z| z.norm_sqr()).sum())
            .collect();
        Ok(Self {
            downlink,
            uplink,
            grams,
            uplink_gains,
        })
    }

    pub fn users(&self) -> usize {
        self.downlink.len()
    }

    pub fn antennas(&self) -> usize {
        self.downlink[0].len()
    }

    pub fn downlink(&self, i: usize) -> &[Complex64] {
        &self.downlink[i]
    }

    pub fn uplink(&self, i: usize) -> &[Complex64] {
        &self.uplink[i]
    }

    /// `H_i = h_i h_i^H`.
    pub fn gram(&self, i: usize) -> &HermitianMatrix {
        &self.grams[i]
    }

    pub fn grams(&self) -> &[HermitianMatrix] {
        &self.grams
    }

    /// `||g_i||^2`.
    pub fn uplink_gain(&self, i: usize) -> f64 {
        self.uplink_gains[i]
    }

    /// `||h_i||^2 = tr(H_i)`.
    pub fn downlink_gain(&self, i: usize) -> f64 {
        self.grams[i].trace()
    }

    /// Keeps the first `k` users.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        Self::new(self.downlink[..k].to_vec(), self.uplink[..k].to_vec())
    }
}

/// One fully specified problem instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: SystemConfig,
    pub users: Vec<UserProfile>,
    pub channels: ChannelSet,
}

impl Instance {
    pub fn new(config: SystemConfig, users: Vec<UserProfile>, channels: ChannelSet) -> Result<Self> {
        config.validate()?;
        for u in &users {
            u.validate()?;
        }
        if users.len() != config.users || channels.users() != config.users {
            return Err(Error::Dimension(format!(
                "K = {} but {} profiles and {} channels",
                config.users,
                users.len(),
                channels.users()
            )));
        }
        if channels.antennas() != config.antennas {
            return Err(Error::Dimension(format!(
                "N = {} but channels have {} antennas",
                config.antennas,
                channels.antennas()
            )));
        }
        Ok(Self {
            config,
            users,
            channels,
        })
    }

    pub fn num_users(&self) -> usize {
        self.config.users
    }

    /// Uplink gain divided by the capacity gap.
    pub fn effective_gain(&self, i: usize) -> f64 {
        self.channels.uplink_gain(i) / self.config.gamma
    }

    pub fn local_cap(&self, i: usize) -> f64 {
        self.users[i].local_cap(&self.config)
    }

    /// `sum_i w_i (T f_max_i / C_i) + max_i w_i L_max`, an upper bound on
    /// the objective of every feasible allocation.
    pub fn objective_ceiling(&self) -> f64 {
        let cfg = &self.config;
        let local: f64 = (0..cfg.users).map(|i| cfg.weights[i] * self.local_cap(i)).sum();
        let w_max = cfg.weights.iter().copied().fold(0.0, f64::max);
        local + w_max * cfg.l_max
    }

    /// Same instance under a different power budget.
    pub fn with_p_max(&self, p_max: f64) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.p_max = p_max;
        Self::new(cfg, self.users.clone(), self.channels.clone())
    }
}

/// `beta(x) = sigma2 (2^(x/B) - 1)`, the power that sustains rate `x`.
pub fn beta(x: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("rate {x} must be >= 0")));
    }
    Ok(beta_unchecked(x, cfg.sigma2, cfg.bandwidth))
}

/// Derivative `sigma2 ln2 / B * 2^(x/B)`.
pub fn beta_prime(x: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("rate {x} must be >= 0")));
    }
    Ok(beta_prime_unchecked(x, cfg.sigma2, cfg.bandwidth))
}

#[inline]
pub(crate) fn beta_unchecked(x: f64, sigma2: f64, bandwidth: f64) -> f64 {
    sigma2 * (x / bandwidth * LN_2).exp_m1()
}

#[inline]
pub(crate) fn beta_prime_unchecked(x: f64, sigma2: f64, bandwidth: f64) -> f64 {
    sigma2 * LN_2 / bandwidth * (x / bandwidth * LN_2).exp()
}

/// `E_i = T eta tr(Q H_i)`.
pub fn harvested_energy(q: &HermitianMatrix, h: &HermitianMatrix, cfg: &SystemConfig) -> Result<f64> {
    Ok(cfg.block * cfg.eta * hermitian::trace_product(q, h)?)
}

/// `zeta C^3 q^3 / T^2`.
pub fn local_energy(q: f64, profile: &UserProfile, cfg: &SystemConfig) -> f64 {
    profile.cubic_coefficient(cfg) * q.powi(3)
}

/// `(t / g) Gamma beta(l / t) + p_c t`, with the rate term taken as zero when
/// `l = 0` or `t = 0`.
pub fn offload_energy(
    t: f64,
    ell: f64,
    g_tilde: f64,
    profile: &UserProfile,
    cfg: &SystemConfig,
) -> Result<f64> {
    if !(t >= 0.0) || !(ell >= 0.0) {
        return Err(Error::Domain(format!("time {t} and bits {ell} must be >= 0")));
    }
    if ell > 0.0 && t == 0.0 {
        return Err(Error::InfeasiblePair { bits: ell });
    }
    let transmit = if ell == 0.0 {
        0.0
    } else if g_tilde <= 0.0 {
        f64::INFINITY
    } else {
        t * cfg.gamma * beta_unchecked(ell / t, cfg.sigma2, cfg.bandwidth) / g_tilde
    };
    Ok(transmit + profile.p_c * t)
}

/// A primal point: energy covariance, offloading slots, offloaded and
/// locally computed bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Energy transmit covariance `Q`.
    pub covariance: HermitianMatrix,
    /// Offloading slot lengths `t_i` in seconds.
    pub time: Vec<f64>,
    /// Offloaded bits `l_i`.
    pub offloaded: Vec<f64>,
    /// Locally computed bits `q_i`.
    pub local: Vec<f64>,
}

impl Allocation {
    pub fn zeros(antennas: usize, users: usize) -> Self {
        Self {
            covariance: HermitianMatrix::zeros(antennas),
            time: vec![0.0; users],
            offloaded: vec![0.0; users],
            local: vec![0.0; users],
        }
    }

    pub fn users(&self) -> usize {
        self.time.len()
    }

    /// `l_i / t_i`, zero for idle users.
    pub fn rates(&self) -> Vec<f64> {
        self.time
            .iter()
            .zip(&self.offloaded)
            .map(|(&t, &l)| if t > 0.0 { l / t } else { 0.0 })
            .collect()
    }

    /// Uplink transmit powers `Gamma beta(r_i) / g_i`.
    pub fn powers(&self, inst: &Instance) -> Vec<f64> {
        self.rates()
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                if r == 0.0 {
                    0.0
                } else {
                    beta_unchecked(r, inst.config.sigma2, inst.config.bandwidth)
                        / inst.effective_gain(i)
                }
            })
            .collect()
    }

    /// Constant CPU frequencies `C_i q_i / T`.
    pub fn frequencies(&self, inst: &Instance) -> Vec<f64> {
        self.local
            .iter()
            .zip(&inst.users)
            .map(|(&q, u)| u.cycles_per_bit * q / inst.config.block)
            .collect()
    }

    fn check_dims(&self, antennas: usize, users: usize) -> Result<()> {
        if self.covariance.dim() != antennas
            || self.time.len() != users
            || self.offloaded.len() != users
            || self.local.len() != users
        {
            return Err(Error::Dimension(format!(
                "allocation does not match N = {antennas}, K = {users}"
            )));
        }
        Ok(())
    }
}

/// `sum_i w_i (q_i + l_i)`.
pub fn objective(alloc: &Allocation, cfg: &SystemConfig) -> Result<f64> {
    if alloc.users() != cfg.users
        || alloc.local.len() != cfg.users
        || alloc.offloaded.len() != cfg.users
    {
        return Err(Error::Dimension(format!(
            "allocation has {} users, config has {}",
            alloc.users(),
            cfg.users
        )));
    }
    Ok(cfg
        .weights
        .iter()
        .zip(alloc.local.iter().zip(&alloc.offloaded))
        .map(|(w, (q, l))| w * (q + l))
        .sum())
}

/// Absolute/relative slack tolerances used by [`check_feasibility`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityTolerance {
    pub energy_abs: f64,
    pub energy_rel: f64,
    pub time: f64,
    pub bits: f64,
}

impl Default for FeasibilityTolerance {
    fn default() -> Self {
        Self {
            energy_abs: 1e-12,
            energy_rel: 1e-8,
            time: 1e-9,
            bits: 1e-6,
        }
    }
}

/// Slacks of every constraint of the weighted-rate problem; negative means
/// violated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `E_i - E_loc,i - E_off,i` in joules.
    pub eh_slack: Vec<f64>,
    pub harvested: Vec<f64>,
    /// `T - sum t_i`.
    pub time_slack: f64,
    /// `L_max - sum l_i`.
    pub capacity_slack: f64,
    /// `T P_max - tr(Q)`.
    pub trace_slack: f64,
    /// `T f_max / C - q_i`.
    pub local_cap_slack: Vec<f64>,
    pub min_eigenvalue: f64,
    pub violations: Vec<String>,
    pub feasible: bool,
}

pub fn check_feasibility(
    alloc: &Allocation,
    inst: &Instance,
    tol: &FeasibilityTolerance,
) -> Result<FeasibilityReport> {
    let cfg = &inst.config;
    alloc.check_dims(cfg.antennas, cfg.users)?;
    let mut violations = Vec::new();
    let budget = cfg.trace_budget();
    let energy_tol = |scale: f64| tol.energy_abs + tol.energy_rel * scale.abs();

    let trace = alloc.covariance.trace();
    let trace_slack = budget - trace;
    if trace_slack < -energy_tol(budget) {
        violations.push(format!("trace budget exceeded by {:e}", -trace_slack));
    }
    let min_eigenvalue = hermitian::eig(&alloc.covariance)
        .map(|e| e.values[0])
        .unwrap_or(f64::NAN);
    if !(min_eigenvalue >= -energy_tol(trace)) {
        violations.push(format!("covariance not PSD (min eigenvalue {min_eigenvalue:e})"));
    }

    let total_time: f64 = alloc.time.iter().sum();
    let time_slack = cfg.block - total_time;
    if time_slack < -tol.time {
        violations.push(format!("time budget exceeded by {:e}", -time_slack));
    }
    let total_bits: f64 = alloc.offloaded.iter().sum();
    let capacity_slack = cfg.l_max - total_bits;
    if capacity_slack < -tol.bits {
        violations.push(format!("edge capacity exceeded by {:e}", -capacity_slack));
    }

    let mut eh_slack = Vec::with_capacity(cfg.users);
    let mut harvested = Vec::with_capacity(cfg.users);
    let mut local_cap_slack = Vec::with_capacity(cfg.users);
    for i in 0..cfg.users {
        let (t, l, q) = (alloc.time[i], alloc.offloaded[i], alloc.local[i]);
        if !(t >= -tol.time && t <= cfg.block + tol.time) {
            violations.push(format!("user {i}: slot {t} outside [0, T]"));
        }
        if !(l >= -tol.bits && l <= cfg.l_max + tol.bits) {
            violations.push(format!("user {i}: offloaded bits {l} outside [0, L_max]"));
        }
        let cap = inst.local_cap(i);
        local_cap_slack.push(cap - q);
        if !(q >= -tol.bits && q <= cap + tol.bits) {
            violations.push(format!("user {i}: local bits {q} outside [0, {cap}]"));
        }
        let e = harvested_energy(&alloc.covariance, inst.channels.gram(i), cfg)?;
        let used = local_energy(q.max(0.0), &inst.users[i], cfg)
            + offload_energy(t.max(0.0), l.max(0.0), inst.channels.uplink_gain(i), &inst.users[i], cfg)
                .unwrap_or(f64::INFINITY);
        let slack = e - used;
        if !(slack >= -energy_tol(e)) {
            violations.push(format!("user {i}: energy deficit {:e} J", -slack));
        }
        eh_slack.push(slack);
        harvested.push(e);
    }

    Ok(FeasibilityReport {
        eh_slack,
        harvested,
        time_slack,
        capacity_slack,
        trace_slack,
        local_cap_slack,
        min_eigenvalue,
        feasible: violations.is_empty(),
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    InfeasibleInput,
}

/// Certificate attached to a solved allocation.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub primal_objective: f64,
    /// Upper bound on the optimum, when the scheme produces one.
    pub dual_bound: Option<f64>,
    pub relative_gap: Option<f64>,
    pub eh_slack: Vec<f64>,
    pub harvested: Vec<f64>,
    pub time_slack: f64,
    pub capacity_slack: f64,
    pub trace_slack: f64,
    /// Outer iterations (ellipsoid steps for the dual-based schemes).
    pub iterations: usize,
    pub sdp_iterations: usize,
    /// Eigenvalues of the covariance, ascending.
    pub covariance_spectrum: Vec<f64>,
    pub status: SolveStatus,
}

impl SolveReport {
    /// Checks `alloc` and collects its slacks. Fails with
    /// [`Error::Inconsistent`] if the allocation is infeasible.
    pub fn for_allocation(
        alloc: &Allocation,
        inst: &Instance,
        dual_bound: Option<f64>,
        iterations: usize,
        sdp_iterations: usize,
        status: SolveStatus,
    ) -> Result<Self> {
        let feas = check_feasibility(alloc, inst, &FeasibilityTolerance::default())?;
        if !feas.feasible {
            return Err(Error::Inconsistent(format!(
                "allocation is infeasible: {}",
                feas.violations.join("; ")
            )));
        }
        let primal = objective(alloc, &inst.config)?;
        Ok(Self {
            primal_objective: primal,
            dual_bound,
            relative_gap: dual_bound.map(|d| relative_gap(d, primal)),
            eh_slack: feas.eh_slack,
            harvested: feas.harvested,
            time_slack: feas.time_slack,
            capacity_slack: feas.capacity_slack,
            trace_slack: feas.trace_slack,
            iterations,
            sdp_iterations,
            covariance_spectrum: hermitian::eig(&alloc.covariance)?.values,
            status,
        })
    }
}

/// Smallest denominator used for the relative duality gap.
pub const GAP_DENOMINATOR_FLOOR: f64 = 1e-12;

pub fn relative_gap(dual_bound: f64, primal: f64) -> f64 {
    (dual_bound - primal) / dual_bound.max(GAP_DENOMINATOR_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::with_defaults(4, 1, 10.0)
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn beta_examples() {
        let cfg = cfg();
        assert_eq!(beta(0.0, &cfg).unwrap(), 0.0);
        assert!((beta(2e6, &cfg).unwrap() - 1e-9).abs() < 1e-24);
        assert!((beta(4e6, &cfg).unwrap() - 3e-9).abs() < 1e-23);
        assert!(matches!(beta(-1.0, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn beta_prime_examples() {
        let cfg = cfg();
        let d0 = beta_prime(0.0, &cfg).unwrap();
        assert!((d0 - 1e-9 * LN_2 / 2e6).abs() < 1e-28);
        assert!((d0 - 3.466e-16).abs() < 1e-19);
        assert!((beta_prime(2e6, &cfg).unwrap() - 2.0 * d0).abs() < 1e-27);
        assert!(beta_prime(-3.0, &cfg).is_err());
        for x in [0.5e6, 2e6, 7.3e6, 1.5e7] {
            let delta = 1e-3 * cfg.bandwidth;
            let fd = (beta(x + delta, &cfg).unwrap() - beta(x - delta, &cfg).unwrap()) / (2.0 * delta);
            let d = beta_prime(x, &cfg).unwrap();
            assert!((fd - d).abs() <= 1e-6 * d, "x = {x}");
        }
    }

    #[test]
    fn harvested_energy_examples() {
        let cfg = cfg();
        let n = 4;
        let h = vec![c(5e-6_f64.sqrt()), c(0.0), c(0.0), c(0.0)];
        let hh = HermitianMatrix::outer(&h);
        assert_eq!(harvested_energy(&HermitianMatrix::zeros(n), &hh, &cfg).unwrap(), 0.0);

        let iso = HermitianMatrix::scaled_identity(n, cfg.trace_budget() / n as f64);
        let e = harvested_energy(&iso, &hh, &cfg).unwrap();
        assert!((e - 1.0e-7).abs() < 1e-20);

        let aligned = hh.scale(cfg.trace_budget() / 5e-6);
        let e = harvested_energy(&aligned, &hh, &cfg).unwrap();
        assert!((e - 4.0e-7).abs() < 1e-19);

        assert!(harvested_energy(&HermitianMatrix::zeros(2), &hh, &cfg).is_err());
    }

    #[test]
    fn local_energy_examples() {
        let cfg = cfg();
        let u = UserProfile::default();
        assert_eq!(local_energy(0.0, &u, &cfg), 0.0);
        assert!((local_energy(1e4, &u, &cfg) - 1e-5).abs() < 1e-18);
        let e1 = local_energy(1234.0, &u, &cfg);
        assert!((local_energy(2468.0, &u, &cfg) / e1 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn offload_energy_examples() {
        let cfg = cfg();
        let u = UserProfile::default();
        assert!((offload_energy(0.01, 0.0, 5e-6, &u, &cfg).unwrap() - 1e-6).abs() < 1e-20);
        assert!((offload_energy(0.01, 2e4, 5e-6, &u, &cfg).unwrap() - 3e-6).abs() < 1e-18);
        assert_eq!(offload_energy(0.0, 0.0, 5e-6, &u, &cfg).unwrap(), 0.0);
        assert!(matches!(
            offload_energy(0.0, 10.0, 5e-6, &u, &cfg),
            Err(Error::InfeasiblePair { .. })
        ));
    }

    #[test]
    fn objective_examples() {
        let mut cfg = SystemConfig::with_defaults(1, 2, 1.0);
        cfg.weights = vec![0.5, 0.5];
        let mut a = Allocation::zeros(1, 2);
        assert_eq!(objective(&a, &cfg).unwrap(), 0.0);
        a.local = vec![100.0, 200.0];
        a.offloaded = vec![300.0, 400.0];
        assert_eq!(objective(&a, &cfg).unwrap(), 500.0);
        let mut scaled = a.clone();
        scaled.local.iter_mut().chain(scaled.offloaded.iter_mut()).for_each(|x| *x *= 3.0);
        assert!((objective(&scaled, &cfg).unwrap() - 1500.0).abs() < 1e-9);
        assert!(objective(&Allocation::zeros(1, 3), &cfg).is_err());
    }

    fn single_user_instance() -> Instance {
        let cfg = SystemConfig::with_defaults(1, 1, 10.0);
        let ch = ChannelSet::new(vec![vec![c(5e-6_f64.sqrt())]], vec![vec![c(5e-6_f64.sqrt())]]).unwrap();
        Instance::new(cfg, vec![UserProfile::default()], ch).unwrap()
    }

    #[test]
    fn feasibility_examples() {
        let inst = single_user_instance();
        let tol = FeasibilityTolerance::default();
        let zero = Allocation::zeros(1, 1);
        let rep = check_feasibility(&zero, &inst, &tol).unwrap();
        assert!(rep.feasible, "{:?}", rep.violations);

        let mut over = zero.clone();
        over.covariance = HermitianMatrix::scaled_identity(1, inst.config.trace_budget());
        over.local[0] = inst.local_cap(0) + 1.0;
        let rep = check_feasibility(&over, &inst, &tol).unwrap();
        assert!(!rep.feasible);
        assert!(rep.violations.iter().any(|v| v.contains("local bits")));

        let mut no_time = zero.clone();
        no_time.offloaded[0] = 5.0;
        assert!(!check_feasibility(&no_time, &inst, &tol).unwrap().feasible);
    }

    #[test]
    fn config_validation() {
        let mut cfg = cfg();
        assert!(cfg.validate().is_ok());
        cfg.p_max = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg2 = SystemConfig::with_defaults(2, 2, 1.0);
        cfg2.weights = vec![1.0];
        assert!(cfg2.validate().is_err());
        cfg2.weights = vec![1.0, 0.0];
        assert!(cfg2.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn beta_is_convex(x in 0.0f64..2e7, y in 0.0f64..2e7, a in 0.0f64..1.0) {
            let cfg = cfg();
            let lhs = beta(a * x + (1.0 - a) * y, &cfg).unwrap();
            let rhs = a * beta(x, &cfg).unwrap() + (1.0 - a) * beta(y, &cfg).unwrap();
            proptest::prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn harvested_energy_is_linear(
            v1 in proptest::collection::vec(-1.0f64..1.0, 8),
            v2 in proptest::collection::vec(-1.0f64..1.0, 8),
            hv in proptest::collection::vec(-1.0f64..1.0, 8),
        ) {
            let cfg = cfg();
            let cv = |v: &[f64]| (0..4).map(|j| Complex64::new(v[2 * j], v[2 * j + 1])).collect::<Vec<_>>();
            let q1 = HermitianMatrix::outer(&cv(&v1));
            let q2 = HermitianMatrix::outer(&cv(&v2));
            let h = HermitianMatrix::outer(&cv(&hv));
            let sum = harvested_energy(&q1.add(&q2), &h, &cfg).unwrap();
            let parts = harvested_energy(&q1, &h, &cfg).unwrap() + harvested_energy(&q2, &h, &cfg).unwrap();
            proptest::prop_assert!((sum - parts).abs() <= 1e-12 * sum.abs().max(1e-30));
        }

        #[test]
        fn offload_energy_linear_in_time(rate in 0.0f64..1e7, t1 in 1e-4f64..0.1, t2 in 1e-4f64..0.1) {
            let cfg = cfg();
            let u = UserProfile::default();
            let e1 = offload_energy(t1, rate * t1, 5e-6, &u, &cfg).unwrap();
            let e2 = offload_energy(t2, rate * t2, 5e-6, &u, &cfg).unwrap();
            proptest::prop_assert!((e1 / t1 - e2 / t2).abs() <= 1e-9 * (e1 / t1));
        }
    }
}
