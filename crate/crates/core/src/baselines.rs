//! Naive substitution baseline and the brute-force oracle.
//!
//! The naive route plugs the approximated data straight into the bilevel
//! problem and solves it by enumeration; it is the control arm that shows
//! how a vanishing data error can still park the solution at the wrong
//! corner. The oracle enumerates the exact problem and anchors every
//! reported gap.

use std::time::Instant;

use crate::lowerlevel::{check_bilevel_feasible, ExtendedReal, LowerLevelView};
use crate::model::{ApproximationFamily, BilevelProblem};
use crate::solver::{MinimizerW, SolveError, SolveRecord, SolveStatus, TermBreakdown, Timing};

fn plain_record(
    status: SolveStatus,
    minimizer: Option<(Vec<f64>, Vec<f64>)>,
    value: ExtendedReal,
    q: usize,
    enumeration_size: usize,
    wall_s: f64,
) -> SolveRecord {
    SolveRecord {
        status,
        minimizer: minimizer.map(|(x, y)| MinimizerW {
            x,
            y,
            u: vec![0.0; q],
            alpha: 0.0,
            lambda: 0.0,
        }),
        value,
        breakdown: value.as_f64().map(|f| TermBreakdown {
            f_term: f,
            u_penalty: 0.0,
            alpha_penalty: 0.0,
        }),
        enumeration_size,
        timing: Timing { wall_s },
    }
}

fn pair_cmp(a: (&[f64], &[f64]), b: (&[f64], &[f64])) -> std::cmp::Ordering {
    crate::solver::lex_cmp(a.0, b.0).then_with(|| crate::solver::lex_cmp(a.1, b.1))
}

/// Substitute the approximating data at accuracy `nu` into the bilevel
/// problem and solve it by enumeration: for each upper-level grid point the
/// near-minimizers of the substituted lower level (at the problem's `tau`)
/// are computed, then the substituted upper objective is minimized over
/// those pairs. Ties go to the lexicographically smallest `(x, y)`.
pub fn solve_naive(
    problem: &BilevelProblem,
    family: &ApproximationFamily,
    nu: u32,
) -> Result<SolveRecord, SolveError> {
    let t0 = Instant::now();
    let mat = family.materialize(nu);
    let view = LowerLevelView::with_data(problem, &mat.g, &mat.h);
    let master = problem.master_y();

    let mut best: Option<(f64, &Vec<f64>, &Vec<f64>)> = None;
    let mut enumeration_size = 0usize;
    for x in problem.x_grid() {
        let argmin = view.tau_argmin(x, problem.tau())?;
        for idx in argmin {
            let y = &master[idx];
            enumeration_size += 1;
            if !problem.domain_ok(x, y)? {
                continue;
            }
            let b = crate::model::PointBindings { x, yz: y };
            let value = crate::expr::eval_expr(&mat.f, &b)?;
            let better = match &best {
                None => true,
                Some((bv, bx, by)) => {
                    value < *bv
                        || (value == *bv && pair_cmp((x, y), (bx, by)) == std::cmp::Ordering::Less)
                }
            };
            if better {
                best = Some((value, x, y));
            }
        }
    }
    let wall_s = t0.elapsed().as_secs_f64();
    Ok(match best {
        None => plain_record(
            SolveStatus::Infeasible,
            None,
            ExtendedReal::PosInf,
            problem.q(),
            enumeration_size,
            wall_s,
        ),
        Some((value, x, y)) => plain_record(
            SolveStatus::Optimal,
            Some((x.clone(), y.clone())),
            ExtendedReal::finite(value),
            problem.q(),
            enumeration_size,
            wall_s,
        ),
    })
}

/// Brute-force ground truth for the exact problem.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub record: SolveRecord,
    /// Every feasible grid pair within `tie_tol` of the minimum value.
    pub optimal_set: Vec<(Vec<f64>, Vec<f64>)>,
    pub tie_tol: f64,
}

/// Enumerate every grid pair, keep those feasible in the original problem,
/// and report the exact minimum of `f` plus the near-optimal set.
pub fn solve_oracle(problem: &BilevelProblem, tie_tol: f64) -> Result<OracleSolution, SolveError> {
    let t0 = Instant::now();
    let mut feasible: Vec<(f64, &Vec<f64>, &Vec<f64>)> = Vec::new();
    let mut enumeration_size = 0usize;
    for x in problem.x_grid() {
        for y in problem.master_y() {
            enumeration_size += 1;
            if check_bilevel_feasible(problem, x, y)? {
                feasible.push((problem.eval_f(x, y)?, x, y));
            }
        }
    }
    let wall_s = t0.elapsed().as_secs_f64();
    let Some((m, bx, by)) = feasible
        .iter()
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| pair_cmp((a.1, a.2), (b.1, b.2)))
        })
        .map(|(v, x, y)| (*v, *x, *y))
    else {
        return Ok(OracleSolution {
            record: plain_record(
                SolveStatus::Infeasible,
                None,
                ExtendedReal::PosInf,
                problem.q(),
                enumeration_size,
                wall_s,
            ),
            optimal_set: vec![],
            tie_tol,
        });
    };
    let minimizer = (bx, by);
    let optimal_set: Vec<(Vec<f64>, Vec<f64>)> = feasible
        .iter()
        .filter(|(v, _, _)| *v <= m + tie_tol)
        .map(|(_, x, y)| ((*x).clone(), (*y).clone()))
        .collect();
    Ok(OracleSolution {
        record: plain_record(
            SolveStatus::Optimal,
            Some((minimizer.0.clone(), minimizer.1.clone())),
            ExtendedReal::finite(m),
            problem.q(),
            enumeration_size,
            wall_s,
        ),
        optimal_set,
        tie_tol,
    })
}
