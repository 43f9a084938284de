//! End-to-end solver: ellipsoid method on the dual, then primal recovery.

use crate::benchmarks;
use crate::dual::{self, DualPoint, DualProblem};
use crate::ellipsoid::{self, Cut, DualStart, EllipsoidStatus};
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::model::{Allocation, Instance, SolveReport, SolveStatus};
use crate::recovery::{self, RecoverySdp, SdpOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative stopping tolerance of the ellipsoid method.
    pub ellipsoid_tol: f64,
    /// Defaults to `ceil(10 n^2 ln(1 / tol))`.
    pub max_iterations: Option<usize>,
    /// Multiplies the radius of the starting ball.
    pub radius_scale: f64,
    pub sdp: SdpOptions,
    /// Largest relative duality gap reported as converged.
    pub gap_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            ellipsoid_tol: 1e-9,
            max_iterations: None,
            radius_scale: 1.0,
            sdp: SdpOptions::default(),
            gap_tolerance: 1e-3,
        }
    }
}

impl SolverOptions {
    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| {
            let n2 = (n * n) as f64;
            (10.0 * n2 * (1.0 / self.ellipsoid_tol).ln()).ceil() as usize
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub point: DualPoint,
    pub value: f64,
    pub iterations: usize,
    pub status: EllipsoidStatus,
}

/// An allocation with its certificate and the dual point behind it.
#[derive(Debug, Clone)]
pub struct Solution {
    pub allocation: Allocation,
    pub report: SolveReport,
    pub dual: DualPoint,
}

fn unit(n: usize, j: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[j] = sign;
    v
}

/// Cut oracle for the dual in the scaled coordinates of `start`. Points
/// with a zero EH multiplier are treated as outside: there the offloading
/// maximizer may not exist.
fn dual_cut(problem: &DualProblem, start: &DualStart, z: &[f64]) -> Result<Cut> {
    let n = z.len();
    let k = problem.users();
    for j in 0..n {
        if z[j] < 0.0 || (j < k && z[j] <= 0.0) {
            return Ok(Cut::Feasibility { gradient: unit(n, j, -1.0) });
        }
        if z[j] > 1.0 {
            return Ok(Cut::Feasibility { gradient: unit(n, j, 1.0) });
        }
    }
    let dp = start.to_dual(z)?;
    let inst = problem.instance;
    let feas = dual::dual_feasible(&dp, inst)?;
    if !feas.feasible {
        let g = dual::feasibility_cut(&dp, inst)?;
        return Ok(Cut::Feasibility {
            gradient: g.iter().zip(&start.scale).map(|(a, s)| a * s).collect(),
        });
    }
    let ev = dual::evaluate_dual(problem, &dp)?;
    let g = dual::dual_subgradient(problem, &ev.solution);
    Ok(Cut::Objective {
        value: ev.value,
        gradient: g.iter().zip(&start.scale).map(|(a, s)| a * s).collect(),
    })
}

/// Minimizes the dual function with the ellipsoid method.
pub fn solve_dual(problem: &DualProblem, opts: &SolverOptions) -> Result<DualSolution> {
    let start = ellipsoid::initial_ellipsoid_for_d1(problem, opts.radius_scale)?;
    let n = start.scale.len();
    let out = ellipsoid::run(
        |z| dual_cut(problem, &start, z),
        start.ellipsoid.clone(),
        opts.ellipsoid_tol,
        opts.iteration_cap(n),
    )?;
    let Some(z) = out.best_point else {
        return Err(Error::NoFeasibleCenter {
            iterations: out.iterations,
        });
    };
    Ok(DualSolution {
        point: start.to_dual(&z)?,
        value: out.best_value,
        iterations: out.iterations,
        status: out.status,
    })
}

/// Solves the weighted-rate problem.
pub fn solve_joint(inst: &Instance, opts: &SolverOptions) -> Result<Solution> {
    solve_problem(&DualProblem::new(inst), opts)
}

/// Solves the problem with the local-computing caps of `problem`.
pub fn solve_problem(problem: &DualProblem, opts: &SolverOptions) -> Result<Solution> {
    let inst = problem.instance;
    let cfg = &inst.config;
    let k = problem.users();
    if !(problem.objective_ceiling() > 0.0) {
        let allocation = Allocation::zeros(cfg.antennas, k);
        let (allocation, report) = recovery::assemble_solution(
            inst,
            allocation.local,
            &vec![0.0; k],
            allocation.covariance,
            allocation.time,
            Some(0.0),
            0,
            0,
            SolveStatus::Converged,
        )?;
        return Ok(Solution {
            allocation,
            report,
            dual: DualPoint::zeros(k),
        });
    }

    let dual = solve_dual(problem, opts)?;
    let (mut local, _) = recovery::recover_q_opt(problem, &dual.point);
    let mut rates = recovery::recover_rates(problem, &dual.point);
    let sdp = RecoverySdp::new(inst, &local, &rates);
    let sol = recovery::solve_recovery_sdp(&sdp, &opts.sdp)?;
    let mut covariance = sol.covariance;
    let mut time = sol.time;
    recovery::polish(problem, &mut covariance, &rates, &mut local, &mut time)?;

    let mut primal = recovery::fixed_rate_value(problem, &local, &rates, &time);
    let mut gap = crate::model::relative_gap(dual.value, primal);
    // Near a zero EH multiplier the recovered rates are unreliable; choose
    // them again for the recovered covariance.
    // The isotropic full-power covariance is the second candidate.
    let isotropic = HermitianMatrix::scaled_identity(cfg.antennas, cfg.trace_budget() / cfg.antennas as f64);
    for candidate in [covariance.clone(), isotropic] {
        if gap <= opts.gap_tolerance {
            break;
        }
        let fixed = benchmarks::solve_fixed_q_with(problem, &candidate)?;
        if fixed.objective > primal {
            let a = fixed.allocation;
            rates = a.offloaded.iter().zip(&a.time).map(|(l, t)| if *t > 0.0 { l / t } else { 0.0 }).collect();
            covariance = candidate;
            local = a.local;
            time = a.time;
            primal = recovery::fixed_rate_value(problem, &local, &rates, &time);
            gap = crate::model::relative_gap(dual.value, primal);
        }
    }
    let status = if dual.status != EllipsoidStatus::Degenerate && gap <= opts.gap_tolerance {
        SolveStatus::Converged
    } else {
        SolveStatus::IterationLimit
    };
    let (allocation, report) = recovery::assemble_solution(
        inst,
        local,
        &rates,
        covariance,
        time,
        Some(dual.value),
        dual.iterations,
        sol.iterations,
        status,
    )?;
    Ok(Solution {
        allocation,
        report,
        dual: dual.point,
    })
}
