//! Exact solvers for the lifted formulation at a fixed accuracy `nu`.
//!
//! The lifted problem minimizes `f_nu(x, y) + sigma * ||u|| - theta * alpha`
//! over `(x, y, u, alpha, lambda)` subject to `H_nu(x, y) + u` landing in
//! `D`, the value constraint `g_nu(x, y) + alpha <= g_nu(x, z) + lambda *
//! dist(H_nu(x, z), D) + tau_nu` for every cut `z`, `alpha <= 0`, and
//! `lambda in [0, lambda_bar]`.
//!
//! For fixed `(x, y)` the remaining variables minimize in closed form:
//! the objective is nondecreasing in `||u||` and in `-alpha`, and the value
//! constraint only loosens as `lambda` grows while the objective ignores
//! `lambda`. So `lambda = lambda_bar`, `u` is the minimal-norm correction
//! into `D`, and `alpha` is the largest nonpositive slack the value
//! constraint admits. The master problem is then an exact enumeration over
//! the `(x, y)` grid, and the outer approximation loop grows the cut set one
//! most-violated point at a time.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::EvalError;
use crate::lowerlevel::{ExtendedReal, LowerLevelView};
use crate::model::{ModelError, StabilizedInstance};

/// Tolerance for solver-level constraint checks; reported minimizers satisfy
/// every explicit constraint to within this bound.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("x is not a point of the upper-level grid")]
    XNotOnGrid,
    #[error("y is not a point of the master list")]
    YNotInMaster,
    #[error("domain constraints fail at the requested point")]
    DomainViolated,
    #[error("invalid argument: {0}")]
    BadArgument(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Diagnostic flag for values sliding to `-inf`; finite instances never
    /// produce it, truncation families of unbounded sets may.
    UnboundedDiagnostic,
}

/// Full decision vector of the lifted problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerW {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
}

/// Objective split: `value = f_term + u_penalty + alpha_penalty`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub f_term: f64,
    pub u_penalty: f64,
    pub alpha_penalty: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveRecord {
    pub status: SolveStatus,
    pub minimizer: Option<MinimizerW>,
    pub value: ExtendedReal,
    pub breakdown: Option<TermBreakdown>,
    pub enumeration_size: usize,
    pub timing: Timing,
}

impl SolveRecord {
    pub(crate) fn infeasible(enumeration_size: usize, wall_s: f64) -> Self {
        SolveRecord {
            status: SolveStatus::Infeasible,
            minimizer: None,
            value: ExtendedReal::PosInf,
            breakdown: None,
            enumeration_size,
            timing: Timing { wall_s },
        }
    }
}

/// Result of minimizing out `(u, alpha, lambda)` at a fixed `(x, y)`.
#[derive(Clone, Debug)]
pub struct ReducedPoint {
    pub value: ExtendedReal,
    pub u: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub breakdown: Option<TermBreakdown>,
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

/// Exact partial minimization over `(u, alpha, lambda)` at one `(x, y)` grid
/// point, against the given cut set. Domain-constraint violations yield a
/// `+inf` marker instead of an error.
pub fn reduced_master_objective(
    inst: &StabilizedInstance<'_>,
    x: &[f64],
    y: &[f64],
    cutset: &[usize],
) -> Result<ReducedPoint, SolveError> {
    let problem = inst.problem();
    if !problem.domain_ok(x, y)? {
        return Ok(ReducedPoint {
            value: ExtendedReal::PosInf,
            u: vec![0.0; problem.q()],
            alpha: 0.0,
            lambda: inst.lambda_bar,
            breakdown: None,
        });
    }
    let h = inst.eval_h_nu(x, y)?;
    let u = problem.d_set().min_norm_correction(&h, problem.norm())?;
    let u_norm = problem.norm().eval(&u);

    let mu_hat = LowerLevelView::approx(inst).mu(x, inst.lambda_bar, cutset)?;
    let g = inst.eval_g_nu(x, y)?;
    let alpha = match mu_hat {
        ExtendedReal::Finite(m) => (m + inst.tau_nu - g).min(0.0),
        // No cuts yet: the value constraint is vacuous and alpha rides at 0.
        ExtendedReal::PosInf => 0.0,
        ExtendedReal::NegInf => {
            return Ok(ReducedPoint {
                value: ExtendedReal::NegInf,
                u,
                alpha: 0.0,
                lambda: inst.lambda_bar,
                breakdown: None,
            })
        }
    };

    let f_term = inst.eval_f_nu(x, y)?;
    let u_penalty = inst.sigma * u_norm;
    let alpha_penalty = -(inst.theta * alpha);
    let value = f_term + u_penalty + alpha_penalty;
    if !alpha.is_finite() || !value.is_finite() {
        return Err(EvalError::Overflow {
            op: "objective assembly",
        }
        .into());
    }
    Ok(ReducedPoint {
        value: ExtendedReal::finite(value),
        u,
        alpha,
        lambda: inst.lambda_bar,
        breakdown: Some(TermBreakdown {
            f_term,
            u_penalty,
            alpha_penalty,
        }),
    })
}

/// Exact master solve over the full `(x, y)` grid with an explicit cut set.
/// Ties go to the lexicographically smallest `(x, y)`.
pub fn solve_with_cutset(
    inst: &StabilizedInstance<'_>,
    cutset: &[usize],
) -> Result<SolveRecord, SolveError> {
    let t0 = Instant::now();
    let problem = inst.problem();
    let mut best: Option<(ExtendedReal, &Vec<f64>, &Vec<f64>, ReducedPoint)> = None;
    let mut enumeration_size = 0usize;
    for x in problem.x_grid() {
        for y in problem.master_y() {
            enumeration_size += 1;
            let rp = reduced_master_objective(inst, x, y, cutset)?;
            if rp.value == ExtendedReal::PosInf {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bv, bx, by, _)) => match rp.value.cmp(bv) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => {
                        matches!(
                            lex_cmp(x, bx).then_with(|| lex_cmp(y, by)),
                            std::cmp::Ordering::Less
                        )
                    }
                },
            };
            if better {
                best = Some((rp.value, x, y, rp));
            }
        }
    }
    let wall_s = t0.elapsed().as_secs_f64();
    Ok(match best {
        None => SolveRecord::infeasible(enumeration_size, wall_s),
        Some((value, x, y, rp)) => SolveRecord {
            status: if value.is_finite() {
                SolveStatus::Optimal
            } else {
                SolveStatus::UnboundedDiagnostic
            },
            minimizer: Some(MinimizerW {
                x: x.clone(),
                y: y.clone(),
                u: rp.u,
                alpha: rp.alpha,
                lambda: rp.lambda,
            }),
            value,
            breakdown: rp.breakdown,
            enumeration_size,
            timing: Timing { wall_s },
        },
    })
}

/// Solve the lifted problem with its full cut set.
pub fn solve_stabilized_full(inst: &StabilizedInstance<'_>) -> Result<SolveRecord, SolveError> {
    solve_with_cutset(inst, inst.y_nu())
}

/// Objective of the lifted problem as an extended-real function of the full
/// decision vector `w`: `+inf` off the feasible set, the penalized objective
/// on it. Grid membership is exact; numeric constraints are checked to
/// within [`FEAS_TOL`]. The value constraint uses `mu_nu(x, lambda)` over
/// the instance's whole cut family, at the `lambda` carried by `w`.
pub fn phi_nu_eval(
    inst: &StabilizedInstance<'_>,
    w: &MinimizerW,
) -> Result<ExtendedReal, SolveError> {
    let problem = inst.problem();
    if w.x.len() != problem.n() || w.y.len() != problem.m() || w.u.len() != problem.q() {
        return Ok(ExtendedReal::PosInf);
    }
    if !problem.x_grid().iter().any(|p| p == &w.x) {
        return Ok(ExtendedReal::PosInf);
    }
    if !problem.master_y().iter().any(|p| p == &w.y) {
        return Ok(ExtendedReal::PosInf);
    }
    if w.alpha > FEAS_TOL {
        return Ok(ExtendedReal::PosInf);
    }
    if w.lambda < -FEAS_TOL || w.lambda > inst.lambda_bar + FEAS_TOL {
        return Ok(ExtendedReal::PosInf);
    }
    if !problem.domain_ok(&w.x, &w.y)? {
        return Ok(ExtendedReal::PosInf);
    }
    let mut shifted = inst.eval_h_nu(&w.x, &w.y)?;
    for (hj, uj) in shifted.iter_mut().zip(&w.u) {
        *hj += uj;
    }
    if problem.d_set().distance(&shifted, problem.norm())? > FEAS_TOL {
        return Ok(ExtendedReal::PosInf);
    }
    let g = inst.eval_g_nu(&w.x, &w.y)?;
    if let ExtendedReal::Finite(mu) =
        LowerLevelView::approx(inst).mu(&w.x, w.lambda, inst.y_nu())?
    {
        if g + w.alpha - mu > inst.tau_nu + FEAS_TOL {
            return Ok(ExtendedReal::PosInf);
        }
    }
    let f = inst.eval_f_nu(&w.x, &w.y)?;
    let norm_u = problem.norm().eval(&w.u);
    let value = f + inst.sigma * norm_u - inst.theta * w.alpha;
    if !value.is_finite() {
        return Err(EvalError::Overflow {
            op: "objective assembly",
        }
        .into());
    }
    Ok(ExtendedReal::finite(value))
}

/// Feasible point of the lifted problem anchored at a grid pair: minimal-norm
/// correction for `u`, the largest admissible nonpositive `alpha`, and
/// `lambda` at its upper bound.
pub fn construct_feasible_point(
    inst: &StabilizedInstance<'_>,
    x: &[f64],
    y: &[f64],
) -> Result<MinimizerW, SolveError> {
    let problem = inst.problem();
    if !problem.x_grid().iter().any(|p| p.as_slice() == x) {
        return Err(SolveError::XNotOnGrid);
    }
    if !problem.master_y().iter().any(|p| p.as_slice() == y) {
        return Err(SolveError::YNotInMaster);
    }
    if !problem.domain_ok(x, y)? {
        return Err(SolveError::DomainViolated);
    }
    let h = inst.eval_h_nu(x, y)?;
    let u = problem.d_set().min_norm_correction(&h, problem.norm())?;
    let mu_hat = LowerLevelView::approx(inst).mu(x, inst.lambda_bar, inst.y_nu())?;
    let g = inst.eval_g_nu(x, y)?;
    let alpha = match mu_hat {
        ExtendedReal::Finite(m) => (m + inst.tau_nu - g).min(0.0),
        _ => 0.0,
    };
    Ok(MinimizerW {
        x: x.to_vec(),
        y: y.to_vec(),
        u,
        alpha,
        lambda: inst.lambda_bar,
    })
}

/// Post-processing for a solved point: the smallest `lambda` on an evenly
/// spaced ladder in `[0, lambda_bar]` that keeps `w` feasible. The objective
/// does not depend on `lambda`, so the value is unchanged.
pub fn minimal_lambda(
    inst: &StabilizedInstance<'_>,
    w: &MinimizerW,
) -> Result<MinimizerW, SolveError> {
    const STEPS: usize = 16;
    let view = LowerLevelView::approx(inst);
    let g = inst.eval_g_nu(&w.x, &w.y)?;
    for i in 0..=STEPS {
        let lambda = inst.lambda_bar * (i as f64 / STEPS as f64);
        let feasible = match view.mu(&w.x, lambda, inst.y_nu())? {
            ExtendedReal::Finite(mu) => g + w.alpha - mu <= inst.tau_nu + FEAS_TOL,
            ExtendedReal::PosInf => true,
            ExtendedReal::NegInf => false,
        };
        if feasible {
            return Ok(MinimizerW {
                lambda,
                ..w.clone()
            });
        }
    }
    Ok(w.clone())
}

// ---------------------------------------------------------------------------
// Outer approximation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OaIteration {
    pub k: usize,
    /// Master index of the cut added (or re-proposed on the terminal
    /// iteration).
    pub cut_index: usize,
    pub master_value: ExtendedReal,
    pub epsilon: f64,
    pub delta: f64,
    /// `master_value - epsilon`; never exceeds the full-problem minimum.
    pub lower_bound: ExtendedReal,
    /// Violation of the new cut at the previous iterate; positive means the
    /// cut actually separates.
    pub cut_violation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OaTrace {
    pub iterations: Vec<OaIteration>,
    pub final_record: SolveRecord,
    /// True when the loop stopped because a proposed cut was already present.
    pub converged: bool,
}

pub(crate) fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

impl OaTrace {
    /// Per-iteration trace as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,z_k_index,master_value,lower_bound,violation\n");
        for it in &self.iterations {
            let fmt_ext = |v: &ExtendedReal| match v.as_f64() {
                Some(f) => sig12(f),
                None => v.to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                it.k,
                it.cut_index,
                fmt_ext(&it.master_value),
                fmt_ext(&it.lower_bound),
                sig12(it.cut_violation),
            ));
        }
        out
    }
}

fn sub_eps(v: ExtendedReal, eps: f64) -> ExtendedReal {
    match v {
        ExtendedReal::Finite(f) => ExtendedReal::from_f64(f - eps),
        other => other,
    }
}

/// Outer approximation: repeatedly add the most violated lower-level cut at
/// the previous iterate, then re-solve the master with the grown cut set.
///
/// `eps_schedule` and `delta_schedule` are per-iteration slacks (missing
/// entries are treated as zero): the master is still solved exactly and
/// `eps` only widens the recorded lower bound, while `delta` admits the
/// first master-order point within `delta` of the cut-selection minimum.
/// The loop stops when a proposed cut is already in the set or after
/// `max_iter` iterations.
pub fn outer_approximation(
    inst: &StabilizedInstance<'_>,
    eps_schedule: &[f64],
    delta_schedule: &[f64],
    max_iter: usize,
) -> Result<OaTrace, SolveError> {
    if max_iter == 0 {
        return Err(SolveError::BadArgument("max_iter must be at least 1"));
    }
    if eps_schedule.iter().chain(delta_schedule).any(|v| *v < 0.0) {
        return Err(SolveError::BadArgument(
            "slack schedules must be nonnegative",
        ));
    }
    let problem = inst.problem();
    let view = LowerLevelView::approx(inst);
    let master = problem.master_y();

    // Initial point: first grid pair inside the upper-level domain, padded
    // with a feasible correction and a zero slack.
    let mut start: Option<MinimizerW> = None;
    'outer: for x in problem.x_grid() {
        for y in master {
            if problem.domain_ok(x, y)? {
                let h = inst.eval_h_nu(x, y)?;
                let u = problem.d_set().min_norm_correction(&h, problem.norm())?;
                start = Some(MinimizerW {
                    x: x.clone(),
                    y: y.clone(),
                    u,
                    alpha: 0.0,
                    lambda: inst.lambda_bar,
                });
                break 'outer;
            }
        }
    }
    let Some(mut current) = start else {
        return Ok(OaTrace {
            iterations: vec![],
            final_record: SolveRecord::infeasible(problem.x_grid().len() * master.len(), 0.0),
            converged: false,
        });
    };

    let mut cutset: Vec<usize> = Vec::new();
    let mut iterations = Vec::new();
    let mut final_record: Option<SolveRecord> = None;
    let mut converged = false;

    for k in 1..=max_iter {
        let eps_k = eps_schedule.get(k - 1).copied().unwrap_or(0.0);
        let delta_k = delta_schedule.get(k - 1).copied().unwrap_or(0.0);

        // Step 1: near-minimizer of the penalized lower level at the previous
        // iterate; first master-order index within delta of the minimum.
        let mut vals = Vec::with_capacity(inst.y_nu().len());
        for &i in inst.y_nu() {
            vals.push((i, view.penalized(&current.x, &master[i], current.lambda)?));
        }
        let min_val = vals.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        let cut = vals
            .iter()
            .find(|(_, v)| *v <= min_val + delta_k)
            .map(|(i, _)| *i)
            .expect("cut family is nonempty");

        let g_prev = inst.eval_g_nu(&current.x, &current.y)?;
        let cut_violation = g_prev + current.alpha
            - view.penalized(&current.x, &master[cut], current.lambda)?
            - inst.tau_nu;

        if cutset.contains(&cut) {
            let master_value = final_record
                .as_ref()
                .map(|r| r.value)
                .unwrap_or(ExtendedReal::PosInf);
            iterations.push(OaIteration {
                k,
                cut_index: cut,
                master_value,
                epsilon: eps_k,
                delta: delta_k,
                lower_bound: sub_eps(master_value, eps_k),
                cut_violation,
            });
            converged = true;
            break;
        }

        // Step 2: exact master over the grown cut set.
        cutset.push(cut);
        let record = solve_with_cutset(inst, &cutset)?;
        iterations.push(OaIteration {
            k,
            cut_index: cut,
            master_value: record.value,
            epsilon: eps_k,
            delta: delta_k,
            lower_bound: sub_eps(record.value, eps_k),
            cut_violation,
        });
        if record.status != SolveStatus::Optimal {
            final_record = Some(record);
            break;
        }
        current = record
            .minimizer
            .clone()
            .expect("optimal master has a minimizer");
        final_record = Some(record);
    }

    Ok(OaTrace {
        iterations,
        final_record: final_record.expect("at least one master is solved"),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, ScheduleRule};
    use crate::testutil::{demo_family, demo_problem, demo_schedule};

    fn cbrt(nu: u32) -> f64 {
        (nu as f64).powf(1.0 / 3.0)
    }

    #[test]
    fn reduced_objective_known_points() {
        let p = demo_problem(101);
        let fam = demo_family();
        let sched = demo_schedule();

        let inst = build_instance(&p, &fam, &sched, 8).unwrap();
        let rp = reduced_master_objective(&inst, &[1.0], &[1.0], &[0, 1]).unwrap();
        assert_eq!(rp.u, vec![-0.125]);
        assert_eq!(rp.alpha, 0.0);
        let expect = 0.5 + (8f64).powf(-0.5);
        assert!((rp.value.as_f64().unwrap() - expect).abs() < 1e-12);

        let inst = build_instance(&p, &fam, &sched, 4).unwrap();
        let rp = reduced_master_objective(&inst, &[1.0], &[0.0], &[0, 1]).unwrap();
        assert_eq!(rp.u, vec![0.0]);
        let expect_alpha = -1.0 + (4f64).powf(-2.0 / 3.0);
        assert!((rp.alpha - expect_alpha).abs() < 1e-12);
        let expect = -0.5 + cbrt(4) - (4f64).powf(-1.0 / 3.0);
        assert!((rp.value.as_f64().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn reduced_objective_vanishing_penalties_on_exact_data() {
        let p = demo_problem(11);
        let fam = crate::model::ApproximationFamily::exact(&p);
        let inst = build_instance(&p, &fam, &demo_schedule(), 5).unwrap();
        // (1, 1) is feasible for the exact data with g at the minimum.
        let rp = reduced_master_objective(&inst, &[1.0], &[1.0], &[0, 1]).unwrap();
        assert_eq!(rp.u, vec![0.0]);
        assert_eq!(rp.alpha, 0.0);
        assert_eq!(rp.value.as_f64().unwrap(), 0.5);
    }

    #[test]
    fn full_solve_crossover() {
        let p = demo_problem(101);
        let fam = demo_family();
        let sched = demo_schedule();

        let inst = build_instance(&p, &fam, &sched, 7).unwrap();
        let rec = solve_stabilized_full(&inst).unwrap();
        let w = rec.minimizer.as_ref().unwrap();
        assert_eq!(rec.status, SolveStatus::Optimal);
        assert_eq!((w.x[0], w.y[0]), (1.0, 1.0));
        assert_eq!(w.u, vec![-1.0 / 7.0]);
        assert_eq!(w.alpha, 0.0);
        assert!((w.lambda - cbrt(7)).abs() < 1e-12);
        let expect = 0.5 + (7f64).powf(-0.5);
        assert!((rec.value.as_f64().unwrap() - expect).abs() < 1e-12);
        assert!((rec.value.as_f64().unwrap() - 0.87796).abs() < 1e-4);

        let inst = build_instance(&p, &fam, &sched, 6).unwrap();
        let rec = solve_stabilized_full(&inst).unwrap();
        let w = rec.minimizer.as_ref().unwrap();
        assert_eq!((w.x[0], w.y[0]), (1.0, 0.0));
        assert_eq!(w.u, vec![0.0]);
        assert!((w.alpha - (-1.0 + (6f64).powf(-2.0 / 3.0))).abs() < 1e-12);
        let expect = -0.5 + cbrt(6) - (6f64).powf(-1.0 / 3.0);
        assert!((rec.value.as_f64().unwrap() - expect).abs() < 1e-12);
        assert!((rec.value.as_f64().unwrap() - 0.766799384683).abs() < 1e-9);

        // Breakdown reassembles the value exactly.
        let b = rec.breakdown.unwrap();
        assert_eq!(
            rec.value.as_f64().unwrap(),
            b.f_term + b.u_penalty + b.alpha_penalty
        );
        assert_eq!(rec.enumeration_size, 202);
    }

    #[test]
    fn zero_penalties_reduce_to_min_f() {
        let p = demo_problem(21);
        let mut sched = demo_schedule();
        sched.sigma = ScheduleRule::constant(0.0);
        sched.theta = ScheduleRule::constant(0.0);
        let inst = build_instance(&p, &demo_family(), &sched, 3).unwrap();
        let rec = solve_stabilized_full(&inst).unwrap();
        // min over the grid of (y - 1/2) x is -1 at (2, 0).
        assert_eq!(rec.value.as_f64().unwrap(), -1.0);
        let w = rec.minimizer.unwrap();
        assert_eq!((w.x[0], w.y[0]), (2.0, 0.0));
    }

    #[test]
    fn phi_matches_solution_and_rejects_violations() {
        let p = demo_problem(101);
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 8).unwrap();
        let w = MinimizerW {
            x: vec![1.0],
            y: vec![1.0],
            u: vec![-0.125],
            alpha: 0.0,
            lambda: 2.0,
        };
        let v = phi_nu_eval(&inst, &w).unwrap().as_f64().unwrap();
        assert!((v - (0.5 + (8f64).powf(-0.5))).abs() < 1e-12);

        let bad = MinimizerW {
            alpha: 0.1,
            ..w.clone()
        };
        assert_eq!(phi_nu_eval(&inst, &bad).unwrap(), ExtendedReal::PosInf);

        let off_grid = MinimizerW {
            x: vec![1.003],
            ..w.clone()
        };
        assert_eq!(phi_nu_eval(&inst, &off_grid).unwrap(), ExtendedReal::PosInf);

        let bad_lambda = MinimizerW { lambda: 5.0, ..w };
        assert_eq!(
            phi_nu_eval(&inst, &bad_lambda).unwrap(),
            ExtendedReal::PosInf
        );
    }

    #[test]
    fn phi_dominates_full_solve() {
        let p = demo_problem(5);
        for nu in [2, 5, 9] {
            let inst = build_instance(&p, &demo_family(), &demo_schedule(), nu).unwrap();
            let m_nu = solve_stabilized_full(&inst).unwrap().value;
            for x in p.x_grid() {
                for y in p.master_y() {
                    for ui in [-0.5, -0.125, 0.0, 0.25] {
                        for alpha in [-1.0, -0.25, 0.0] {
                            let w = MinimizerW {
                                x: x.clone(),
                                y: y.clone(),
                                u: vec![ui],
                                alpha,
                                lambda: inst.lambda_bar,
                            };
                            let v = phi_nu_eval(&inst, &w).unwrap();
                            assert!(
                                v >= m_nu,
                                "phi below master at nu={nu}, w={w:?}: {v:?} < {m_nu:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constructs_feasible_points() {
        let p = demo_problem(101);
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 8).unwrap();
        let w = construct_feasible_point(&inst, &[2.0], &[0.0]).unwrap();
        assert_eq!(w.u, vec![0.0]);
        assert!((w.alpha - (-2.0 + (8f64).powf(-2.0 / 3.0))).abs() < 1e-12);
        assert_eq!(w.alpha, -1.75);
        assert_eq!(w.lambda, 2.0);
        assert!(phi_nu_eval(&inst, &w).unwrap().is_finite());

        // Exactly feasible pair under exact data: no correction, no slack.
        let fam = crate::model::ApproximationFamily::exact(&p);
        let inst = build_instance(&p, &fam, &demo_schedule(), 3).unwrap();
        let w = construct_feasible_point(&inst, &[1.0], &[1.0]).unwrap();
        assert_eq!(w.u, vec![0.0]);
        assert_eq!(w.alpha, 0.0);
        assert!(phi_nu_eval(&inst, &w).unwrap().is_finite());

        assert!(matches!(
            construct_feasible_point(&inst, &[1.0033], &[1.0]),
            Err(SolveError::XNotOnGrid)
        ));
    }

    #[test]
    fn minimal_lambda_ladder() {
        let p = demo_problem(101);
        // Past the crossover the solution tolerates lambda = 0.
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 8).unwrap();
        let rec = solve_stabilized_full(&inst).unwrap();
        let w = minimal_lambda(&inst, rec.minimizer.as_ref().unwrap()).unwrap();
        assert_eq!(w.lambda, 0.0);
        assert!(phi_nu_eval(&inst, &w).unwrap().is_finite());

        // Before the crossover the alpha slack leans on the full bound.
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 4).unwrap();
        let rec = solve_stabilized_full(&inst).unwrap();
        let w = minimal_lambda(&inst, rec.minimizer.as_ref().unwrap()).unwrap();
        assert!((w.lambda - inst.lambda_bar).abs() < 1e-12);
    }

    #[test]
    fn outer_approximation_terminates_and_matches_full_solve() {
        let p = demo_problem(101);
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 8).unwrap();
        let trace = outer_approximation(&inst, &[], &[], 10).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations.len() <= 3);
        let full = solve_stabilized_full(&inst).unwrap();
        assert!(
            (trace.final_record.value.as_f64().unwrap() - full.value.as_f64().unwrap()).abs()
                < 1e-12
        );
        // Master values never decrease as cuts accumulate, and bounds stay
        // below the full-problem minimum.
        let mut prev = ExtendedReal::NegInf;
        for it in &trace.iterations {
            assert!(it.master_value >= prev);
            assert!(it.lower_bound <= full.value);
            prev = it.master_value;
        }
    }

    #[test]
    fn outer_approximation_single_cut_repeats() {
        let p = demo_problem(11);
        let mut fam = demo_family();
        fam.y_rule = crate::model::YNuRule::Prefix { c: 1.0, p: 0.0 };
        let inst = build_instance(&p, &fam, &demo_schedule(), 5).unwrap();
        assert_eq!(inst.y_nu().len(), 1);
        let trace = outer_approximation(&inst, &[], &[], 10).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations.len(), 2);
        let full = solve_stabilized_full(&inst).unwrap();
        assert_eq!(
            trace.final_record.value.as_f64().unwrap(),
            full.value.as_f64().unwrap()
        );
    }

    #[test]
    fn oa_delta_slack_accepts_first_near_minimizer() {
        let p = demo_problem(11);
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 8).unwrap();
        // A huge delta makes every cut proposal collapse to the first master
        // index, so the loop stabilizes on the single cut {0}.
        let trace = outer_approximation(&inst, &[], &[10.0, 10.0, 10.0], 10).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations.len(), 2);
        assert_eq!(trace.iterations[0].cut_index, 0);
        assert_eq!(trace.iterations[1].cut_index, 0);

        assert!(matches!(
            outer_approximation(&inst, &[-0.5], &[], 5),
            Err(SolveError::BadArgument(_))
        ));
        assert!(matches!(
            outer_approximation(&inst, &[], &[], 0),
            Err(SolveError::BadArgument(_))
        ));
    }

    #[test]
    fn oa_trace_csv_layout() {
        let p = demo_problem(11);
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 8).unwrap();
        let trace = outer_approximation(&inst, &[], &[], 10).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,z_k_index,master_value,lower_bound,violation"
        );
        assert_eq!(csv.lines().count(), trace.iterations.len() + 1);
    }

    #[test]
    fn monotone_in_penalty_parameters() {
        let p = demo_problem(21);
        for nu in [2, 5, 8] {
            let base = build_instance(&p, &demo_family(), &demo_schedule(), nu).unwrap();
            let m0 = solve_stabilized_full(&base).unwrap().value;

            let mut sched = demo_schedule();
            sched.sigma = ScheduleRule::power(2.0, 0.5);
            let doubled_sigma = build_instance(&p, &demo_family(), &sched, nu).unwrap();
            let m1 = solve_stabilized_full(&doubled_sigma).unwrap().value;
            assert!(m1 >= m0);

            let mut sched = demo_schedule();
            sched.theta = ScheduleRule::power(2.0, 1.0 / 3.0);
            let doubled_theta = build_instance(&p, &demo_family(), &sched, nu).unwrap();
            let m2 = solve_stabilized_full(&doubled_theta).unwrap().value;
            assert!(m2 >= m0);
        }
    }

    #[test]
    fn domain_constraints_exclude_grid_points() {
        use crate::expr::parse_expr;
        use crate::geometry::Interval;
        use crate::model::{BilevelProblem, DomainConstraint};

        // Forbid x + y > 1.2: the post-crossover minimizer (1, 1) drops out.
        let mut data = demo_problem(101).data().clone();
        data.upper_domain = vec![DomainConstraint {
            expr: parse_expr("x1 + y1").unwrap(),
            interval: Interval::new(f64::NEG_INFINITY, 1.2).unwrap(),
        }];
        let p = BilevelProblem::new(data).unwrap();
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 9).unwrap();

        let marker = reduced_master_objective(&inst, &[1.0], &[1.0], &[0, 1]).unwrap();
        assert_eq!(marker.value, ExtendedReal::PosInf);
        assert!(marker.breakdown.is_none());

        let rec = solve_stabilized_full(&inst).unwrap();
        let w = rec.minimizer.unwrap();
        assert_eq!(w.y[0], 0.0, "only y = 0 pairs stay admissible");
        assert!(w.x[0] + w.y[0] <= 1.2);

        // phi agrees that the excluded pair is off-domain.
        let bad = MinimizerW {
            x: vec![1.0],
            y: vec![1.0],
            u: vec![-1.0 / 9.0],
            alpha: 0.0,
            lambda: inst.lambda_bar,
        };
        assert_eq!(phi_nu_eval(&inst, &bad).unwrap(), ExtendedReal::PosInf);

        assert!(matches!(
            construct_feasible_point(&inst, &[1.0], &[1.0]),
            Err(SolveError::DomainViolated)
        ));
    }

    #[test]
    fn lambda_loosens_value_constraint() {
        // The per-cut residual is nonincreasing in lambda.
        let p = demo_problem(11);
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 5).unwrap();
        let view = LowerLevelView::approx(&inst);
        let g = inst.eval_g_nu(&[1.0], &[0.0]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for lambda in [2.0, 1.0, 0.5, 0.0] {
            let z = &p.master_y()[1];
            let residual = g + 0.0 - view.penalized(&[1.0], z, lambda).unwrap() - inst.tau_nu;
            assert!(residual >= prev);
            prev = residual;
        }
    }
}
