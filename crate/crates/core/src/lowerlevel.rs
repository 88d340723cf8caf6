//! Lower-level value functions and feasibility of the original problem.
//!
//! Everything here is an exact enumeration over the finite master list for
//! `Y`: the perturbed value function `V(x, u)`, the penalty value function
//! `mu(x, lambda)` over a cut set, near-minimizer sets, and the feasibility
//! test that rewrites the argmin constraint through the value function.
//!
//! Values live in [`ExtendedReal`]: `V` is `+inf` when no lower-level point
//! is feasible, and `-inf` never arises for finite master lists. Unbounded
//! behavior on truncation families is surfaced by
//! [`probe_truncation_divergence`] as a diagnostic rather than a solve path.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::expr::{self, EvalError, ExprAst};
use crate::model::{BilevelProblem, ModelError, PointBindings, StabilizedInstance};

/// A real extended with both infinities. `Finite` never holds a NaN or an
/// IEEE infinity; overflow is reported instead of silently absorbed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl Eq for ExtendedReal {}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtendedRealError {
    #[error("sum of opposite infinities is indeterminate")]
    IndeterminateSum,
    #[error("finite addition overflowed")]
    Overflow,
}

impl ExtendedReal {
    /// Wrap a value that must be finite.
    ///
    /// Panics on non-finite input; use [`ExtendedReal::from_f64`] to classify
    /// IEEE infinities.
    pub fn finite(v: f64) -> Self {
        assert!(v.is_finite(), "ExtendedReal::finite got {v}");
        ExtendedReal::Finite(v)
    }

    /// Classify an IEEE double. NaN is rejected.
    pub fn from_f64(v: f64) -> Self {
        assert!(!v.is_nan(), "ExtendedReal cannot hold NaN");
        if v == f64::INFINITY {
            ExtendedReal::PosInf
        } else if v == f64::NEG_INFINITY {
            ExtendedReal::NegInf
        } else {
            ExtendedReal::Finite(v)
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// Extended addition. Opposite infinities and finite overflow are errors
    /// rather than silent saturation.
    pub fn try_add(self, rhs: ExtendedReal) -> Result<ExtendedReal, ExtendedRealError> {
        use ExtendedReal::*;
        match (self, rhs) {
            (PosInf, NegInf) | (NegInf, PosInf) => Err(ExtendedRealError::IndeterminateSum),
            (PosInf, _) | (_, PosInf) => Ok(PosInf),
            (NegInf, _) | (_, NegInf) => Ok(NegInf),
            (Finite(a), Finite(b)) => {
                let s = a + b;
                if s.is_finite() {
                    Ok(Finite(s))
                } else {
                    Err(ExtendedRealError::Overflow)
                }
            }
        }
    }
}

impl Ord for ExtendedReal {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use ExtendedReal::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => std::cmp::Ordering::Equal,
            (NegInf, _) | (_, PosInf) => std::cmp::Ordering::Less,
            (_, NegInf) | (PosInf, _) => std::cmp::Ordering::Greater,
            (Finite(a), Finite(b)) => a.total_cmp(b),
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::NegInf => write!(f, "-inf"),
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PosInf => write!(f, "inf"),
        }
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtendedReal::Finite(v) => s.serialize_f64(*v),
            ExtendedReal::PosInf => s.serialize_str("inf"),
            ExtendedReal::NegInf => s.serialize_str("-inf"),
        }
    }
}

struct ExtendedRealVisitor;

impl Visitor<'_> for ExtendedRealVisitor {
    type Value = ExtendedReal;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a finite number or the strings \"inf\"/\"-inf\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtendedReal, E> {
        if v.is_finite() {
            Ok(ExtendedReal::Finite(v))
        } else {
            Err(E::custom("non-finite number"))
        }
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtendedReal, E> {
        Ok(ExtendedReal::Finite(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtendedReal, E> {
        Ok(ExtendedReal::Finite(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtendedReal, E> {
        match v {
            "inf" | "+inf" => Ok(ExtendedReal::PosInf),
            "-inf" => Ok(ExtendedReal::NegInf),
            _ => Err(E::custom("expected \"inf\" or \"-inf\"")),
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(ExtendedRealVisitor)
    }
}

// ---------------------------------------------------------------------------
// Lower-level evaluation view
// ---------------------------------------------------------------------------

/// Chooses which data the lower-level quantities are computed from: the
/// exact `(g, H)`, an instance's materialized `(g_nu, H_nu)`, or any
/// substituted pair (used by the naive baseline).
#[derive(Clone, Copy)]
pub struct LowerLevelView<'a> {
    problem: &'a BilevelProblem,
    g: &'a ExprAst,
    h: &'a [ExprAst],
}

impl<'a> LowerLevelView<'a> {
    pub fn exact(problem: &'a BilevelProblem) -> Self {
        LowerLevelView {
            problem,
            g: problem.g(),
            h: problem.h(),
        }
    }

    pub fn approx(instance: &'a StabilizedInstance<'_>) -> Self {
        LowerLevelView {
            problem: instance.problem(),
            g: &instance.approx().g,
            h: &instance.approx().h,
        }
    }

    pub fn with_data(problem: &'a BilevelProblem, g: &'a ExprAst, h: &'a [ExprAst]) -> Self {
        LowerLevelView { problem, g, h }
    }

    pub fn problem(&self) -> &'a BilevelProblem {
        self.problem
    }

    pub fn g_at(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        expr::eval_expr(self.g, &PointBindings { x, yz: y })
    }

    pub fn h_at(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.h
            .iter()
            .map(|hj| expr::eval_expr(hj, &PointBindings { x, yz: y }))
            .collect()
    }

    /// Distance of the constraint image to `D` under the problem norm.
    pub fn dist_at(&self, x: &[f64], y: &[f64]) -> Result<f64, ModelError> {
        let h = self.h_at(x, y)?;
        Ok(self.problem.d_set().distance(&h, self.problem.norm())?)
    }

    /// Penalized lower-level objective `g(x, y) + lambda * dist(H(x, y), D)`.
    pub fn penalized(&self, x: &[f64], y: &[f64], lambda: f64) -> Result<f64, ModelError> {
        let v = self.g_at(x, y)? + lambda * self.dist_at(x, y)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::Overflow {
                op: "penalized objective",
            }
            .into())
        }
    }

    /// Value function under a constraint perturbation `u`: exact minimum of
    /// `g(x, y)` over master points with `H(x, y) + u` in `D`; `+inf` when no
    /// point qualifies.
    pub fn value_v(&self, x: &[f64], u: &[f64]) -> Result<ExtendedReal, ModelError> {
        let mut best: Option<f64> = None;
        for y in self.problem.master_y() {
            let mut h = self.h_at(x, y)?;
            for (hj, uj) in h.iter_mut().zip(u) {
                *hj += uj;
            }
            if self.problem.d_set().contains(&h)? {
                let g = self.g_at(x, y)?;
                if best.is_none_or(|b| g < b) {
                    best = Some(g);
                }
            }
        }
        Ok(best.map_or(ExtendedReal::PosInf, ExtendedReal::finite))
    }

    /// Penalty value function over the given cut set (master indices).
    /// Empty cut sets yield `+inf`; that only happens while the outer
    /// approximation loop bootstraps its first cut.
    pub fn mu(&self, x: &[f64], lambda: f64, cutset: &[usize]) -> Result<ExtendedReal, ModelError> {
        let master = self.problem.master_y();
        let mut best: Option<f64> = None;
        for &i in cutset {
            let v = self.penalized(x, &master[i], lambda)?;
            if best.is_none_or(|b| v < b) {
                best = Some(v);
            }
        }
        Ok(best.map_or(ExtendedReal::PosInf, ExtendedReal::finite))
    }

    /// Master indices of points within `tau` of the constrained minimum, in
    /// master order. Empty when no point is feasible.
    pub fn tau_argmin(&self, x: &[f64], tau: f64) -> Result<Vec<usize>, ModelError> {
        let zero_u = vec![0.0; self.problem.q()];
        let v0 = match self.value_v(x, &zero_u)? {
            ExtendedReal::Finite(v) => v,
            _ => return Ok(vec![]),
        };
        let mut out = Vec::new();
        for (i, y) in self.problem.master_y().iter().enumerate() {
            let h = self.h_at(x, y)?;
            if self.problem.d_set().contains(&h)? && self.g_at(x, y)? <= v0 + tau {
                out.push(i);
            }
        }
        Ok(out)
    }
}

/// Value function of the exact lower level; see [`LowerLevelView::value_v`].
pub fn value_function_v(
    problem: &BilevelProblem,
    x: &[f64],
    u: &[f64],
) -> Result<ExtendedReal, ModelError> {
    LowerLevelView::exact(problem).value_v(x, u)
}

/// Penalty value function over a cut set; the view selects exact or
/// approximated data.
pub fn penalty_value_mu(
    view: &LowerLevelView<'_>,
    x: &[f64],
    lambda: f64,
    cutset: &[usize],
) -> Result<ExtendedReal, ModelError> {
    view.mu(x, lambda, cutset)
}

/// Near-minimizers of the exact lower level at tolerance `tau`.
pub fn tau_argmin(problem: &BilevelProblem, x: &[f64], tau: f64) -> Result<Vec<usize>, ModelError> {
    LowerLevelView::exact(problem).tau_argmin(x, tau)
}

/// Feasibility in the original problem, through the value-function
/// rewrite of the argmin constraint: `y` is a master point, `H(x, y)` lands
/// in `D`, `g(x, y)` is within `tau` of `V(x, 0)`, `x` lies in `X`, and the
/// upper-level domain constraints hold.
pub fn check_bilevel_feasible(
    problem: &BilevelProblem,
    x: &[f64],
    y: &[f64],
) -> Result<bool, ModelError> {
    if !problem.master_y().iter().any(|p| p.as_slice() == y) {
        return Ok(false);
    }
    if !problem.x_set().contains(x)? {
        return Ok(false);
    }
    if !problem.domain_ok(x, y)? {
        return Ok(false);
    }
    let view = LowerLevelView::exact(problem);
    let h = view.h_at(x, y)?;
    if !problem.d_set().contains(&h)? {
        return Ok(false);
    }
    let zero_u = vec![0.0; problem.q()];
    match view.value_v(x, &zero_u)? {
        ExtendedReal::Finite(v0) => Ok(view.g_at(x, y)? <= v0 + problem.tau()),
        _ => Ok(false),
    }
}

/// Penalty values across a family of growing truncations of an unbounded
/// lower-level set.
///
/// The truncations stand in for a set that no finite grid can carry; a
/// strictly and substantially decreasing sequence flags that the penalized
/// problem has no finite infimum in the limit, even when the constrained
/// minimum stays put. Diagnostic only.
#[derive(Clone, Debug, Serialize)]
pub struct DivergenceProbe {
    pub mu_values: Vec<ExtendedReal>,
    pub diverging: bool,
}

pub fn probe_truncation_divergence(
    truncations: &[BilevelProblem],
    x: &[f64],
    lambda: f64,
) -> Result<DivergenceProbe, ModelError> {
    let mut mu_values = Vec::with_capacity(truncations.len());
    for p in truncations {
        let view = LowerLevelView::exact(p);
        let cutset: Vec<usize> = (0..p.master_y().len()).collect();
        mu_values.push(view.mu(x, lambda, &cutset)?);
    }
    let finite: Vec<f64> = mu_values.iter().filter_map(ExtendedReal::as_f64).collect();
    let diverging = finite.len() == mu_values.len()
        && finite.len() >= 2
        && finite.windows(2).all(|w| w[1] < w[0])
        && finite[0] - finite[finite.len() - 1] >= 1.0;
    Ok(DivergenceProbe {
        mu_values,
        diverging,
    })
}
