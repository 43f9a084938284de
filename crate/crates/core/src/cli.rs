//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 nonconvergence.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use crate::benchmarks::{self, SchemeId};
use crate::error::{Error, Result};
use crate::experiments::{self, ExperimentConfig, SweepVariable};
use crate::joint;
use crate::model::{Allocation, ChannelSet, Instance, SolveReport, SolveStatus, SystemConfig, UserProfile};
use crate::oracle::{self, GridSpec, KktReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NONCONVERGED: i32 = 2;

/// Trial count of the full-scale sweeps.
pub const FULL_TRIALS: usize = 500;

#[derive(Debug, Parser)]
#[command(name = "wpmec", version, about = "Weighted computation-rate maximization for wireless-powered MEC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance with one scheme and write a JSON result.
    Solve(SolveArgs),
    /// Sweep the power budget (config [sweep] variable = "P_max_dBm").
    SweepPower(SweepArgs),
    /// Sweep the number of users (config [sweep] variable = "K").
    SweepUsers(SweepArgs),
    /// Compare the solver against the grid oracle on random tiny instances.
    Validate(ValidateArgs),
    /// Solve with the joint design and check the KKT conditions.
    Certify(CertifyArgs),
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    /// TOML configuration file.
    pub config: PathBuf,
    /// Channels file: one user per line, `re,im` pairs for h_i then g_i
    /// (only h_i: the uplink reuses it).
    #[arg(long, conflicts_with = "seed")]
    pub channels: Option<PathBuf>,
    /// Draw Rayleigh channels from this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trial index of the seeded draw.
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value = "joint")]
    pub scheme: SchemeId,
    /// Result document path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML configuration file with a [sweep] section.
    pub config: PathBuf,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the number of trials per point.
    #[arg(long, conflicts_with = "full")]
    pub trials: Option<usize>,
    /// Use the full-scale trial count.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Largest accepted KKT violation.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Optional JSON path for the certificate.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses and runs one invocation, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, out),
        Command::SweepPower(a) => cmd_sweep(&a, SweepVariable::PowerDbm, out),
        Command::SweepUsers(a) => cmd_sweep(&a, SweepVariable::Users, out),
        Command::Validate(a) => cmd_validate(&a, out),
        Command::Certify(a) => cmd_certify(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

/// Reads a channels file for `antennas` antennas.
pub fn parse_channels(text: &str, antennas: usize, origin: &str) -> Result<ChannelSet> {
    let mut h = Vec::new();
    let mut g = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let diag = |msg: String| Error::Config(format!("{origin}:{}: {msg}", n + 1));
        let nums: Vec<f64> = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| diag(format!("'{f}' is not a finite number")))
            })
            .collect::<Result<_>>()?;
        let pairs: Vec<Complex64> = nums.chunks(2).map(|c| Complex64::new(c[0], c.get(1).copied().unwrap_or(0.0))).collect();
        if nums.len() == 2 * antennas {
            h.push(pairs.clone());
            g.push(pairs);
        } else if nums.len() == 4 * antennas {
            g.push(pairs[antennas..].to_vec());
            h.push(pairs[..antennas].to_vec());
        } else {
            return Err(diag(format!(
                "expected {} or {} numbers for N = {antennas}, found {}",
                2 * antennas,
                4 * antennas,
                nums.len()
            )));
        }
    }
    if h.is_empty() {
        return Err(Error::Config(format!("{origin}: no users")));
    }
    ChannelSet::new(h, g)
}

fn load_instance(a: &InstanceArgs) -> Result<(ExperimentConfig, Instance)> {
    let ec = ExperimentConfig::load(&a.config)?;
    let n = ec.system.antennas;
    let channels = match (&a.channels, a.seed) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            parse_channels(&text, n, &path.display().to_string())?
        }
        (None, Some(seed)) => experiments::generate_channels(seed, a.trial, n, ec.system.users)?,
        (None, None) => return Err(Error::Config("one of --channels or --seed is required".into())),
    };
    if channels.users() != ec.system.users {
        return Err(Error::Config(format!(
            "config has K = {} but the channels file has {} users",
            ec.system.users,
            channels.users()
        )));
    }
    let inst = ec.instance(channels)?;
    Ok((ec, inst))
}

#[derive(Debug, Serialize)]
struct AllocationDoc {
    /// Row-major, interleaved real and imaginary parts.
    covariance: Vec<f64>,
    time: Vec<f64>,
    offloaded: Vec<f64>,
    local: Vec<f64>,
    rates: Vec<f64>,
    frequencies: Vec<f64>,
}

impl AllocationDoc {
    fn new(a: &Allocation, inst: &Instance) -> Self {
        let q = &a.covariance;
        let n = q.dim();
        let covariance = (0..n)
            .flat_map(|j| (0..n).map(move |k| (j, k)))
            .flat_map(|(j, k)| {
                let z = q.get(j, k);
                [z.re, z.im]
            })
            .collect();
        Self {
            covariance,
            time: a.time.clone(),
            offloaded: a.offloaded.clone(),
            local: a.local.clone(),
            rates: a.rates(),
            frequencies: a.frequencies(inst),
        }
    }
}

#[derive(Debug, Serialize)]
struct ConfigDoc<'a> {
    system: &'a SystemConfig,
    users: &'a [UserProfile],
}

#[derive(Debug, Serialize)]
struct ResultDoc<'a> {
    scheme: SchemeId,
    config: ConfigDoc<'a>,
    allocation: AllocationDoc,
    report: &'a SolveReport,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Logic(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let (ec, inst) = load_instance(&a.instance)?;
    let sol = benchmarks::solve_scheme(a.scheme, &inst, &ec.solver.options())?;
    let doc = ResultDoc {
        scheme: a.scheme,
        config: ConfigDoc {
            system: &inst.config,
            users: &inst.users,
        },
        allocation: AllocationDoc::new(&sol.allocation, &inst),
        report: &sol.report,
    };
    write_file(&a.out, &to_json(&doc)?)?;
    let r = &sol.report;
    let _ = writeln!(
        out,
        "{}: objective {:.10e}, gap {}, status {:?}",
        a.scheme,
        r.primal_objective,
        r.relative_gap.map_or("n/a".to_string(), |g| format!("{g:.3e}")),
        r.status
    );
    Ok(if r.status == SolveStatus::Converged {
        EXIT_OK
    } else {
        EXIT_NONCONVERGED
    })
}

fn cmd_sweep(a: &SweepArgs, variable: SweepVariable, out: &mut dyn Write) -> Result<i32> {
    let mut ec = ExperimentConfig::load(&a.config)?;
    let sweep = ec
        .sweep
        .as_mut()
        .ok_or_else(|| Error::Config(format!("{}: no [sweep] section", a.config.display())))?;
    if sweep.variable != variable {
        return Err(Error::Config(format!(
            "{}: sweep variable is {}, this command sweeps {}",
            a.config.display(),
            sweep.variable.name(),
            variable.name()
        )));
    }
    if a.full {
        sweep.trials = FULL_TRIALS;
    }
    if let Some(t) = a.trials {
        sweep.trials = t;
    }
    let result = experiments::run_sweep(&ec)?;
    experiments::emit_csv(&result, &a.out)?;
    let flagged = result.flagged_points();
    let _ = writeln!(out, "wrote {} rows to {}", result.rows.len(), a.out.display());
    if flagged.is_empty() {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(out, "no converged trial at {} = {flagged:?}", variable.name());
        Ok(EXIT_NONCONVERGED)
    }
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    if a.cases < 1 {
        return Err(Error::Validation("--cases must be >= 1".into()));
    }
    let _ = writeln!(out, "{:>5} {:>2} {:>8} {:>18} {:>18} {:>10}", "case", "K", "P_dBm", "pipeline", "oracle", "rel_dev");
    let mut worst: f64 = 0.0;
    for case in 0..a.cases {
        let k = 1 + case % 2;
        let dbm = 20.0 + 20.0 * ((case * 7) % 11) as f64 / 10.0;
        let channels = experiments::generate_channels(a.seed, case as u64, 1, k)?;
        let inst = Instance::new(
            SystemConfig::with_defaults(1, k, experiments::dbm_to_watts(dbm)),
            vec![UserProfile::default(); k],
            channels,
        )?;
        let sol = joint::solve_joint(&inst, &joint::SolverOptions::default())?;
        let o = oracle::brute_force(&inst, &GridSpec::default())?;
        let v = sol.report.primal_objective;
        let dev = (v - o.objective).abs() / o.objective.abs().max(1e-300);
        worst = worst.max(dev);
        let _ = writeln!(out, "{case:>5} {k:>2} {dbm:>8.2} {v:>18.10e} {:>18.10e} {dev:>10.3e}", o.objective);
    }
    let _ = writeln!(out, "max relative deviation {worst:.3e}");
    Ok(if worst <= 1e-2 { EXIT_OK } else { EXIT_NONCONVERGED })
}

#[derive(Debug, Serialize)]
struct CertificateDoc<'a> {
    report: &'a SolveReport,
    kkt: &'a KktReport,
}

fn cmd_certify(a: &CertifyArgs, out: &mut dyn Write) -> Result<i32> {
    if !(a.tol > 0.0) {
        return Err(Error::Validation("--tol must be > 0".into()));
    }
    let (ec, inst) = load_instance(&a.instance)?;
    let sol = joint::solve_joint(&inst, &ec.solver.options())?;
    let kkt = oracle::kkt_check(&sol.allocation, &sol.dual, &inst, a.tol)?;
    if let Some(path) = &a.out {
        write_file(
            path,
            &to_json(&CertificateDoc {
                report: &sol.report,
                kkt: &kkt,
            })?,
        )?;
    }
    let worst = kkt
        .entries
        .iter()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map_or("none", |e| e.0.as_str());
    let _ = writeln!(
        out,
        "gap {:.3e}, max KKT violation {:.3e} ({worst}), {}",
        sol.report.relative_gap.unwrap_or(f64::NAN),
        kkt.max_violation,
        if kkt.passed { "certified" } else { "not certified" }
    );
    Ok(if kkt.passed && sol.report.status == SolveStatus::Converged {
        EXIT_OK
    } else {
        EXIT_NONCONVERGED
    })
}
