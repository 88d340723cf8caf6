//! Penalty-threshold certification of the lower-level value function.
//!
//! The value function is calm at `x` when `V(x, u) >= V(x, 0) - lambda *
//! ||u||` for every perturbation `u`; the smallest such `lambda` is a penalty
//! threshold. Rather than sampling perturbations, certification uses the
//! finitely checkable equivalence: calmness at threshold `lambda` holds
//! exactly when the penalized infimum `mu(x, lambda)` meets `V(x, 0)`. On a
//! finite master list this equality is decided by enumeration, and a finite
//! threshold always exists whenever `V(x, 0)` is finite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{min_l2_distance, Norm};
use crate::lowerlevel::{ExtendedReal, LowerLevelView};
use crate::model::{BilevelProblem, ModelError};

/// Default tolerance for value-equality checks.
pub const DEFAULT_VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CalmnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] crate::expr::EvalError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("lambda ladder must be nonnegative and nondecreasing")]
    BadLadder,
    #[error("no lower-level point is feasible at this x")]
    EmptyFeasibleSet,
    #[error("no upper-level grid point lies within the requested radius")]
    NoGridPointInRadius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalmnessStatus {
    /// Calm with the given penalty threshold from the ladder.
    Calm { threshold: f64 },
    /// No ladder value closed the gap.
    NotCalmUpTo { lambda_max: f64 },
    /// Nothing was tested (empty ladder).
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalmnessCertificate {
    pub x: Vec<f64>,
    pub status: CalmnessStatus,
    /// `V(x, 0) - mu(x, lambda)` at the reported (or largest tested) lambda.
    pub witness_gap: ExtendedReal,
    pub ladder: Vec<f64>,
}

impl CalmnessCertificate {
    pub fn is_calm(&self) -> bool {
        matches!(self.status, CalmnessStatus::Calm { .. })
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.status {
            CalmnessStatus::Calm { threshold } => Some(threshold),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalCalmnessCertificate {
    pub x_bar: Vec<f64>,
    pub rho: f64,
    /// Common threshold: max over samples of the minimal ladder threshold;
    /// absent when some sample failed at the top of the ladder.
    pub lambda: Option<f64>,
    pub all_calm: bool,
    pub samples: Vec<CalmnessCertificate>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SufficientConstants {
    /// Lipschitz bound of `g(x, .)` on the master list (Euclidean norm).
    pub kappa1: f64,
    /// Regularity bound: distance to the feasible set against constraint
    /// violation.
    pub kappa2: f64,
    /// `kappa1 * kappa2`, a certified penalty threshold.
    pub implied_lambda: f64,
}

fn check_ladder(ladder: &[f64]) -> Result<(), CalmnessError> {
    let ok = ladder.iter().all(|l| *l >= 0.0 && l.is_finite())
        && ladder.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(CalmnessError::BadLadder)
    }
}

/// Search the ladder for the smallest `lambda` with `mu(x, lambda) = V(x, 0)`
/// within `tol`.
pub fn certify_calm_at(
    problem: &BilevelProblem,
    x: &[f64],
    ladder: &[f64],
    tol: f64,
) -> Result<CalmnessCertificate, CalmnessError> {
    check_ladder(ladder)?;
    if ladder.is_empty() {
        return Ok(CalmnessCertificate {
            x: x.to_vec(),
            status: CalmnessStatus::Inconclusive,
            witness_gap: ExtendedReal::PosInf,
            ladder: vec![],
        });
    }
    let view = LowerLevelView::exact(problem);
    let zero_u = vec![0.0; problem.q()];
    let v0 = view.value_v(x, &zero_u)?;
    let cutset: Vec<usize> = (0..problem.master_y().len()).collect();

    let ExtendedReal::Finite(v0) = v0 else {
        // No feasible point: the gap stays infinite for every lambda.
        return Ok(CalmnessCertificate {
            x: x.to_vec(),
            status: CalmnessStatus::NotCalmUpTo {
                lambda_max: *ladder.last().unwrap(),
            },
            witness_gap: ExtendedReal::PosInf,
            ladder: ladder.to_vec(),
        });
    };

    let mut last_gap = ExtendedReal::PosInf;
    for &lambda in ladder {
        let mu = view.mu(x, lambda, &cutset)?;
        let gap = match mu {
            ExtendedReal::Finite(m) => ExtendedReal::from_f64(v0 - m),
            ExtendedReal::PosInf => ExtendedReal::NegInf,
            ExtendedReal::NegInf => ExtendedReal::PosInf,
        };
        if gap <= ExtendedReal::finite(tol) {
            return Ok(CalmnessCertificate {
                x: x.to_vec(),
                status: CalmnessStatus::Calm { threshold: lambda },
                witness_gap: gap,
                ladder: ladder.to_vec(),
            });
        }
        last_gap = gap;
    }
    Ok(CalmnessCertificate {
        x: x.to_vec(),
        status: CalmnessStatus::NotCalmUpTo {
            lambda_max: *ladder.last().unwrap(),
        },
        witness_gap: last_gap,
        ladder: ladder.to_vec(),
    })
}

/// Closed-form threshold on a finite master list: the largest ratio of value
/// shortfall to constraint violation over infeasible points, clamped at zero.
/// `None` when no point is feasible (no finite threshold exists).
pub fn exact_penalty_threshold(
    problem: &BilevelProblem,
    x: &[f64],
) -> Result<Option<f64>, CalmnessError> {
    let view = LowerLevelView::exact(problem);
    let zero_u = vec![0.0; problem.q()];
    let ExtendedReal::Finite(v0) = view.value_v(x, &zero_u)? else {
        return Ok(None);
    };
    let mut threshold: f64 = 0.0;
    for y in problem.master_y() {
        let dist = view.dist_at(x, y)?;
        if dist > 0.0 {
            threshold = threshold.max((v0 - view.g_at(x, y)?) / dist);
        }
    }
    Ok(Some(threshold))
}

/// Constants of the sufficient condition: a Lipschitz bound on `g(x, .)`
/// paired with a regularity bound of the constraint map, both in the
/// Euclidean norm on `y` (the constraint violation still uses the problem
/// norm). Their product is a penalty threshold.
pub fn sufficient_constants(
    problem: &BilevelProblem,
    x: &[f64],
) -> Result<SufficientConstants, CalmnessError> {
    let view = LowerLevelView::exact(problem);
    let master = problem.master_y();

    let mut feasible: Vec<&[f64]> = Vec::new();
    let mut infeasible: Vec<usize> = Vec::new();
    for (i, y) in master.iter().enumerate() {
        let h = view.h_at(x, y)?;
        if problem.d_set().contains(&h).map_err(ModelError::from)? {
            feasible.push(y);
        } else {
            infeasible.push(i);
        }
    }
    if feasible.is_empty() {
        return Err(CalmnessError::EmptyFeasibleSet);
    }

    let mut kappa1: f64 = 0.0;
    for (i, yi) in master.iter().enumerate() {
        for yj in &master[i + 1..] {
            let diff: Vec<f64> = yi.iter().zip(yj).map(|(a, b)| a - b).collect();
            let dy = Norm::L2.eval(&diff);
            if dy > 0.0 {
                let dg = (view.g_at(x, yi)? - view.g_at(x, yj)?).abs();
                kappa1 = kappa1.max(dg / dy);
            }
        }
    }

    let mut kappa2: f64 = 0.0;
    for &i in &infeasible {
        let y = &master[i];
        let to_feasible = min_l2_distance(y, &feasible);
        let violation = view.dist_at(x, y)?;
        kappa2 = kappa2.max(to_feasible / violation);
    }

    Ok(SufficientConstants {
        kappa1,
        kappa2,
        implied_lambda: kappa1 * kappa2,
    })
}

/// Certify calmness at every upper-level grid point within Euclidean
/// distance `rho` of `x_bar`, and report the largest pointwise threshold as
/// the common one.
pub fn certify_local_calm(
    problem: &BilevelProblem,
    x_bar: &[f64],
    rho: f64,
    ladder: &[f64],
    tol: f64,
) -> Result<LocalCalmnessCertificate, CalmnessError> {
    check_ladder(ladder)?;
    let mut samples = Vec::new();
    for x in problem.x_grid() {
        let diff: Vec<f64> = x.iter().zip(x_bar).map(|(a, b)| a - b).collect();
        if Norm::L2.eval(&diff) <= rho {
            samples.push(certify_calm_at(problem, x, ladder, tol)?);
        }
    }
    if samples.is_empty() {
        return Err(CalmnessError::NoGridPointInRadius);
    }
    let all_calm = samples.iter().all(CalmnessCertificate::is_calm);
    let lambda = if all_calm {
        samples
            .iter()
            .filter_map(CalmnessCertificate::threshold)
            .fold(None, |acc: Option<f64>, t| {
                Some(acc.map_or(t, |a| a.max(t)))
            })
    } else {
        None
    };
    Ok(LocalCalmnessCertificate {
        x_bar: x_bar.to_vec(),
        rho,
        lambda,
        all_calm,
        samples,
    })
}
