//! Seeded channel generation and Monte-Carlo sweeps.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{self, SchemeId};
use crate::error::{Error, Result};
use crate::joint::SolverOptions;
use crate::model::{ChannelSet, Instance, SolveStatus, SystemConfig, UserProfile};
use crate::recovery::SdpOptions;

/// Average channel power loss per antenna.
pub const PATH_LOSS: f64 = 5e-6;

/// Rayleigh channels for one trial: every entry of `h_i` and `g_i` is
/// circularly-symmetric complex Gaussian with variance [`PATH_LOSS`].
///
/// The stream is ChaCha20 seeded with `seed` on stream `trial`, and users
/// are drawn in order (`h_1, g_1, h_2, g_2, ...`), so the first `k` users of
/// a larger draw equal a draw of `k` users.
pub fn generate_channels(seed: u64, trial: u64, antennas: usize, users: usize) -> Result<ChannelSet> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let normal = Normal::new(0.0, (PATH_LOSS / 2.0).sqrt()).expect("positive deviation");
    let mut draw = || -> Vec<Complex64> {
        (0..antennas)
            .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect()
    };
    let mut h = Vec::with_capacity(users);
    let mut g = Vec::with_capacity(users);
    for _ in 0..users {
        h.push(draw());
        g.push(draw());
    }
    ChannelSet::new(h, g)
}

/// `10^((x - 30) / 10)` watts.
pub fn dbm_to_watts(x: f64) -> f64 {
    10f64.powf((x - 30.0) / 10.0)
}

/// The `[system]` section. `P_max` is in watts; `weights` default to `1/K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "N")]
    pub antennas: usize,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "T")]
    pub block: f64,
    #[serde(rename = "P_max")]
    pub p_max: f64,
    #[serde(rename = "B")]
    pub bandwidth: f64,
    pub sigma2: f64,
    pub eta: f64,
    #[serde(rename = "Gamma", default = "one")]
    pub gamma: f64,
    #[serde(rename = "L_max")]
    pub l_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    /// Power budget in dBm.
    #[serde(rename = "P_max_dBm")]
    PowerDbm,
    /// Number of users.
    #[serde(rename = "K")]
    Users,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PowerDbm => "P_max_dBm",
            SweepVariable::Users => "K",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<SchemeId>,
}

/// The `[solver]` section; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub ellipsoid_tol: f64,
    pub max_iterations: Option<usize>,
    pub radius_scale: f64,
    pub gap_tolerance: f64,
    pub sdp_tol: f64,
    pub sdp_max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            ellipsoid_tol: o.ellipsoid_tol,
            max_iterations: o.max_iterations,
            radius_scale: o.radius_scale,
            gap_tolerance: o.gap_tolerance,
            sdp_tol: o.sdp.tol,
            sdp_max_iter: o.sdp.max_iter,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            ellipsoid_tol: self.ellipsoid_tol,
            max_iterations: self.max_iterations,
            radius_scale: self.radius_scale,
            gap_tolerance: self.gap_tolerance,
            sdp: SdpOptions {
                tol: self.sdp_tol,
                max_iter: self.sdp_max_iter,
            },
        }
    }
}

/// A parsed configuration file. Every user shares the `[users]` profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub users: UserProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub solver: SolverSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let ec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        ec.validate()?;
        Ok(ec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.system_config(self.system.users, self.system.p_max)?.validate()?;
        self.users.validate()?;
        let s = self.solver.options();
        if !(s.ellipsoid_tol > 0.0 && s.ellipsoid_tol < 1.0) || !(s.sdp.tol > 0.0) || !(s.radius_scale > 0.0) {
            return Err(Error::Validation("solver tolerances and radius_scale must be > 0".into()));
        }
        let Some(sw) = &self.sweep else {
            return Ok(());
        };
        if sw.trials < 1 {
            return Err(Error::Validation("sweep.trials must be >= 1".into()));
        }
        if sw.values.is_empty() {
            return Err(Error::Validation("sweep.values must be non-empty".into()));
        }
        if sw.values.iter().any(|v| !v.is_finite()) || sw.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("sweep.values must be finite and strictly increasing".into()));
        }
        let mut schemes = sw.schemes.clone();
        schemes.sort();
        if schemes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("sweep.schemes must not repeat".into()));
        }
        if sw.variable == SweepVariable::Users {
            if sw.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                return Err(Error::Validation("K sweep values must be positive integers".into()));
            }
            if self.system.weights.is_some() {
                return Err(Error::Validation("explicit weights cannot be combined with a K sweep".into()));
            }
        }
        for v in &sw.values {
            let (k, p) = self.point(sw.variable, *v);
            self.system_config(k, p)?.validate()?;
        }
        Ok(())
    }

    /// `(K, P_max in watts)` at one sweep value.
    pub fn point(&self, variable: SweepVariable, value: f64) -> (usize, f64) {
        match variable {
            SweepVariable::PowerDbm => (self.system.users, dbm_to_watts(value)),
            SweepVariable::Users => (value as usize, self.system.p_max),
        }
    }

    /// The system configuration with `K` users and budget `p_max` watts.
    pub fn system_config(&self, users: usize, p_max: f64) -> Result<SystemConfig> {
        let s = &self.system;
        let weights = match &s.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / users.max(1) as f64; users],
        };
        Ok(SystemConfig {
            antennas: s.antennas,
            users,
            block: s.block,
            p_max,
            bandwidth: s.bandwidth,
            sigma2: s.sigma2,
            eta: s.eta,
            gamma: s.gamma,
            l_max: s.l_max,
            weights,
        })
    }

    /// The base instance for the given channels.
    pub fn instance(&self, channels: ChannelSet) -> Result<Instance> {
        let cfg = self.system_config(self.system.users, self.system.p_max)?;
        Instance::new(cfg, vec![self.users; self.system.users], channels)
    }
}

/// Outcome of one scheme on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: u64,
    pub scheme: SchemeId,
    /// Objective of a converged solve.
    pub objective: Option<f64>,
}

/// Aggregate over the converged trials of one point and scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub scheme: SchemeId,
    /// `None` when no trial converged.
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub variable: SweepVariable,
    /// Sorted by sweep value, then scheme name.
    pub rows: Vec<SweepRow>,
    /// In (point, trial, scheme) order.
    pub records: Vec<TrialRecord>,
}

impl SweepResult {
    /// Sweep values where some scheme converged on no trial.
    pub fn flagged_points(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().filter(|r| r.trials_ok == 0).map(|r| r.sweep_value).collect();
        v.dedup();
        v
    }
}

/// Worker threads requested through `WPMEC_THREADS`; 0 or unset is auto.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("WPMEC_THREADS") {
        Err(_) => Ok(0),
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("WPMEC_THREADS must be a non-negative integer, got '{s}'"))),
    }
}

/// [`run_sweep_with_threads`] with the thread count from `WPMEC_THREADS`.
pub fn run_sweep(ec: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep_with_threads(ec, threads_from_env()?)
}

/// Solves every requested scheme on every trial of every sweep point.
///
/// Trials run in parallel on `threads` workers (0 = one per core). Each
/// trial draws its channels from its own stream, so the result does not
/// depend on the thread count. A solve that fails or does not converge
/// counts against `trials_failed` and is left out of the mean.
pub fn run_sweep_with_threads(ec: &ExperimentConfig, threads: usize) -> Result<SweepResult> {
    ec.validate()?;
    let sw = ec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no [sweep] section".into()))?;
    let opts = ec.solver.options();
    let max_users = match sw.variable {
        SweepVariable::PowerDbm => ec.system.users,
        SweepVariable::Users => sw.values.iter().fold(0.0, |a: f64, &b| a.max(b)) as usize,
    };

    let jobs: Vec<(usize, u64)> = (0..sw.values.len())
        .flat_map(|p| (0..sw.trials as u64).map(move |t| (p, t)))
        .collect();
    let solve_job = |&(p, trial): &(usize, u64)| -> Result<Vec<TrialRecord>> {
        let (k, p_max) = ec.point(sw.variable, sw.values[p]);
        let channels = generate_channels(sw.seed, trial, ec.system.antennas, max_users)?.truncate(k)?;
        let inst = Instance::new(ec.system_config(k, p_max)?, vec![ec.users; k], channels)?;
        Ok(sw
            .schemes
            .iter()
            .map(|&scheme| {
                let objective = match benchmarks::solve_scheme(scheme, &inst, &opts) {
                    Ok(s) if s.report.status == SolveStatus::Converged => Some(s.report.primal_objective),
                    _ => None,
                };
                TrialRecord {
                    point: p,
                    trial,
                    scheme,
                    objective,
                }
            })
            .collect())
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let per_job: Vec<Result<Vec<TrialRecord>>> = pool.install(|| jobs.par_iter().map(solve_job).collect());
    let mut records = Vec::with_capacity(jobs.len() * sw.schemes.len());
    for r in per_job {
        records.extend(r?);
    }

    let mut rows = Vec::new();
    for (p, &value) in sw.values.iter().enumerate() {
        for &scheme in &sw.schemes {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.point == p && r.scheme == scheme)
                .filter_map(|r| r.objective)
                .collect();
            let n = values.len();
            let (mean, stderr) = mean_and_stderr(&values);
            rows.push(SweepRow {
                sweep_value: value,
                scheme,
                mean,
                stderr,
                trials_ok: n,
                trials_failed: sw.trials - n,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then_with(|| a.scheme.name().cmp(b.scheme.name()))
    });
    Ok(SweepResult {
        variable: sw.variable,
        rows,
        records,
    })
}

/// Sample mean and standard error (`s / sqrt(n)`, zero for one sample).
pub fn mean_and_stderr(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

pub const CSV_HEADER: &str = "sweep_var,sweep_value,scheme,mean_bits_per_user,stderr,trials_ok,trials_failed";

/// The CSV text of a sweep: header plus one row per point and scheme.
pub fn csv_string(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let num = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.14e}"));
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            result.variable.name(),
            r.sweep_value,
            r.scheme,
            num(r.mean),
            num(r.stderr),
            r.trials_ok,
            r.trials_failed
        ));
    }
    out
}

/// Writes [`csv_string`] to `path`.
pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(csv_string(result).as_bytes()).map_err(io)?;
    f.flush().map_err(io)
}
