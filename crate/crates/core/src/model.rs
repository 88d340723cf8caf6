//! Problem data, approximation families, and parameter schedules.
//!
//! A [`BilevelProblem`] carries the exact data `(X, Y, D, f, g, H, tau)` over
//! declared dimensions `n, m, q`. Continuous `X` and `Y` are discretized once
//! at construction: every later infimum is an exact enumeration over the
//! resulting grids, and the finite list for `Y` acts as the master set that
//! cut families index into.
//!
//! An [`ApproximationFamily`] states the `nu`-indexed data `(f_nu, g_nu,
//! H_nu, Y_nu)`; a [`ParameterSchedule`] states the penalty growth rules. The
//! two are combined by [`build_instance`] into a fully numeric
//! [`StabilizedInstance`] for one value of `nu`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, EvalError, ExprAst};
use crate::geometry::{grid_points, GeometryError, GridSpec, Interval, Norm, SetSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dimension must be positive: {0}")]
    ZeroDimension(&'static str),
    #[error("{role} has dimension {got}, expected {want}")]
    SetDimension {
        role: &'static str,
        got: usize,
        want: usize,
    },
    #[error("{role} must be a finite point list or an interval box with a grid")]
    UnsupportedSetKind { role: &'static str },
    #[error("{role} is an interval box but no grid resolution was given")]
    MissingGrid { role: &'static str },
    #[error("constraint list has {got} components, expected q = {want}")]
    ConstraintCount { got: usize, want: usize },
    #[error("variable `{name}` in {role} is outside the declared dimensions")]
    UnknownVariable { name: String, role: String },
    #[error("tolerance tau must be nonnegative, got {0}")]
    NegativeTau(f64),
    #[error("accuracy index nu must be at least 1")]
    BadNu,
    #[error("schedule `{name}` produced a negative or non-finite value {value} at nu = {nu}")]
    BadParameterValue {
        name: &'static str,
        value: f64,
        nu: u32,
    },
    #[error("explicit schedule `{name}` has no entry for nu = {nu}")]
    ExplicitScheduleExhausted { name: &'static str, nu: u32 },
    #[error("cut family rule must have c > 0 and p >= 0 so the sets grow")]
    BadCutFamilyRule,
    #[error("cut family is empty at nu = {nu}")]
    EmptyCutFamily { nu: u32 },
}

/// Resolves `x<i>`, `y<i>`, `z<i>`, binding `y` and `z` names to the same
/// lower-level point.
pub(crate) struct PointBindings<'a> {
    pub x: &'a [f64],
    pub yz: &'a [f64],
}

impl expr::Bindings for PointBindings<'_> {
    fn resolve(&self, name: &str) -> Option<f64> {
        let mut chars = name.chars();
        let head = chars.next()?;
        let idx: usize = chars.as_str().parse().ok()?;
        let slot = idx.checked_sub(1)?;
        match head {
            'x' => self.x.get(slot).copied(),
            'y' | 'z' => self.yz.get(slot).copied(),
            _ => None,
        }
    }
}

/// Side constraint `expr(x, y) in interval`, encoding implicit constraints of
/// the upper objective.
#[derive(Clone, Debug)]
pub struct DomainConstraint {
    pub expr: ExprAst,
    pub interval: Interval,
}

/// Plain data from which a validated [`BilevelProblem`] is built.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub x_set: SetSpec,
    pub x_grid: Option<GridSpec>,
    pub y_set: SetSpec,
    pub y_grid: Option<GridSpec>,
    pub d_set: SetSpec,
    pub f: ExprAst,
    pub g: ExprAst,
    pub h: Vec<ExprAst>,
    pub tau: f64,
    pub norm: Norm,
    pub upper_domain: Vec<DomainConstraint>,
}

#[derive(Clone, Debug)]
pub struct BilevelProblem {
    data: ProblemData,
    x_points: Vec<Vec<f64>>,
    y_points: Vec<Vec<f64>>,
}

fn allowed_var(name: &str, n: usize, m: usize, allow_nu: bool) -> bool {
    if name == "nu" {
        return allow_nu;
    }
    let mut chars = name.chars();
    let head = match chars.next() {
        Some(c) => c,
        None => return false,
    };
    let idx: usize = match chars.as_str().parse() {
        Ok(i) => i,
        Err(_) => return false,
    };
    match head {
        'x' => idx >= 1 && idx <= n,
        'y' | 'z' => idx >= 1 && idx <= m,
        _ => false,
    }
}

fn check_vars(
    ast: &ExprAst,
    role: &str,
    n: usize,
    m: usize,
    allow_nu: bool,
) -> Result<(), ModelError> {
    for name in expr::free_vars(ast) {
        if !allowed_var(&name, n, m, allow_nu) {
            return Err(ModelError::UnknownVariable {
                name,
                role: role.to_string(),
            });
        }
    }
    Ok(())
}

/// Materialize the finite point list behind a set: either the points
/// themselves or a grid over a finite box.
fn discretize(
    role: &'static str,
    set: &SetSpec,
    grid: &Option<GridSpec>,
) -> Result<Vec<Vec<f64>>, ModelError> {
    set.validate()?;
    match set {
        SetSpec::FinitePoints(pts) => Ok(pts.clone()),
        SetSpec::IntervalBox(b) => {
            let grid = grid.as_ref().ok_or(ModelError::MissingGrid { role })?;
            Ok(grid_points(b, grid)?)
        }
        SetSpec::UnionOfBoxes(_) => Err(ModelError::UnsupportedSetKind { role }),
    }
}

impl BilevelProblem {
    pub fn new(data: ProblemData) -> Result<Self, ModelError> {
        if data.n == 0 {
            return Err(ModelError::ZeroDimension("n"));
        }
        if data.m == 0 {
            return Err(ModelError::ZeroDimension("m"));
        }
        if data.q == 0 {
            return Err(ModelError::ZeroDimension("q"));
        }
        if !data.tau.is_finite() || data.tau < 0.0 {
            return Err(ModelError::NegativeTau(data.tau));
        }
        for (role, set, want) in [
            ("X", &data.x_set, data.n),
            ("Y", &data.y_set, data.m),
            ("D", &data.d_set, data.q),
        ] {
            set.validate()?;
            if set.dim() != want {
                return Err(ModelError::SetDimension {
                    role,
                    got: set.dim(),
                    want,
                });
            }
        }
        if data.h.len() != data.q {
            return Err(ModelError::ConstraintCount {
                got: data.h.len(),
                want: data.q,
            });
        }
        check_vars(&data.f, "objective f", data.n, data.m, false)?;
        check_vars(&data.g, "objective g", data.n, data.m, false)?;
        for (j, hj) in data.h.iter().enumerate() {
            check_vars(hj, &format!("constraint H[{j}]"), data.n, data.m, false)?;
        }
        for (j, dc) in data.upper_domain.iter().enumerate() {
            check_vars(
                &dc.expr,
                &format!("upper domain constraint [{j}]"),
                data.n,
                data.m,
                false,
            )?;
        }
        let x_points = discretize("X", &data.x_set, &data.x_grid)?;
        let y_points = discretize("Y", &data.y_set, &data.y_grid)?;
        Ok(BilevelProblem {
            data,
            x_points,
            y_points,
        })
    }

    pub fn n(&self) -> usize {
        self.data.n
    }

    pub fn m(&self) -> usize {
        self.data.m
    }

    pub fn q(&self) -> usize {
        self.data.q
    }

    pub fn tau(&self) -> f64 {
        self.data.tau
    }

    pub fn norm(&self) -> Norm {
        self.data.norm
    }

    /// Finite list of upper-level candidates, in enumeration order.
    pub fn x_grid(&self) -> &[Vec<f64>] {
        &self.x_points
    }

    /// Finite master list for the lower-level set; cut families index into it.
    pub fn master_y(&self) -> &[Vec<f64>] {
        &self.y_points
    }

    pub fn x_set(&self) -> &SetSpec {
        &self.data.x_set
    }

    pub fn y_set(&self) -> &SetSpec {
        &self.data.y_set
    }

    pub fn d_set(&self) -> &SetSpec {
        &self.data.d_set
    }

    pub fn f(&self) -> &ExprAst {
        &self.data.f
    }

    pub fn g(&self) -> &ExprAst {
        &self.data.g
    }

    pub fn h(&self) -> &[ExprAst] {
        &self.data.h
    }

    pub fn upper_domain(&self) -> &[DomainConstraint] {
        &self.data.upper_domain
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn eval_f(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        expr::eval_expr(&self.data.f, &PointBindings { x, yz: y })
    }

    pub fn eval_g(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        expr::eval_expr(&self.data.g, &PointBindings { x, yz: y })
    }

    pub fn eval_h(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.data
            .h
            .iter()
            .map(|hj| expr::eval_expr(hj, &PointBindings { x, yz: y }))
            .collect()
    }

    /// Distance of the exact constraint image to `D` under the problem norm.
    pub fn exact_dist(&self, x: &[f64], y: &[f64]) -> Result<f64, ModelError> {
        let h = self.eval_h(x, y)?;
        Ok(self.data.d_set.distance(&h, self.data.norm)?)
    }

    /// True when every upper-level domain constraint holds at `(x, y)`.
    pub fn domain_ok(&self, x: &[f64], y: &[f64]) -> Result<bool, EvalError> {
        for dc in &self.data.upper_domain {
            let v = expr::eval_expr(&dc.expr, &PointBindings { x, yz: y })?;
            if !dc.interval.contains(v) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// Closed-form rule `c * nu^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRule {
    pub c: f64,
    pub p: f64,
}

impl PowerRule {
    pub const fn new(c: f64, p: f64) -> Self {
        PowerRule { c, p }
    }

    pub const fn constant(c: f64) -> Self {
        PowerRule { c, p: 0.0 }
    }

    pub fn value(&self, nu: u32) -> f64 {
        self.c * (nu as f64).powf(self.p)
    }
}

/// Per-parameter schedule: a power rule or an explicit array indexed from
/// `nu = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScheduleRule {
    Power { c: f64, p: f64 },
    Explicit { values: Vec<f64> },
}

impl ScheduleRule {
    pub fn power(c: f64, p: f64) -> Self {
        ScheduleRule::Power { c, p }
    }

    pub fn constant(c: f64) -> Self {
        ScheduleRule::Power { c, p: 0.0 }
    }

    fn value_named(&self, name: &'static str, nu: u32) -> Result<f64, ModelError> {
        let v = match self {
            ScheduleRule::Power { c, p } => PowerRule::new(*c, *p).value(nu),
            ScheduleRule::Explicit { values } => *values
                .get((nu - 1) as usize)
                .ok_or(ModelError::ExplicitScheduleExhausted { name, nu })?,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(ModelError::BadParameterValue { name, value: v, nu });
        }
        Ok(v)
    }
}

/// Growth rules for the penalty parameters plus the declared decay exponents
/// of the data errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchedule {
    pub sigma: ScheduleRule,
    pub theta: ScheduleRule,
    pub lambda_bar: ScheduleRule,
    pub tau_nu: ScheduleRule,
    /// Declared decay of the objective error `sup |g_nu - g|`.
    pub delta_rate: PowerRule,
    /// Declared decay of the constraint-distance error.
    pub eta_rate: PowerRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMethod {
    ExponentArithmetic,
    NumericOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseCheck {
    pub clause: String,
    pub pass: bool,
    pub method: CheckMethod,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub clauses: Vec<ClauseCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }
}

enum Factor<'a> {
    Power(PowerRule),
    Explicit(&'a [f64]),
}

fn factor_of(rule: &ScheduleRule) -> Factor<'_> {
    match rule {
        ScheduleRule::Power { c, p } => Factor::Power(PowerRule::new(*c, *p)),
        ScheduleRule::Explicit { values } => Factor::Explicit(values),
    }
}

/// Decide a product limit. All-power products use exponent arithmetic; a
/// product with any explicit factor is judged by a monotone-trend heuristic
/// over the available range and flagged as numeric only.
fn check_product(clause: &str, factors: &[Factor<'_>], to_zero: bool) -> ClauseCheck {
    let all_power: Option<Vec<PowerRule>> = factors
        .iter()
        .map(|f| match f {
            Factor::Power(r) => Some(*r),
            Factor::Explicit(_) => None,
        })
        .collect();
    if let Some(rules) = all_power {
        let c: f64 = rules.iter().map(|r| r.c).product();
        let p: f64 = rules.iter().map(|r| r.p).sum();
        let pass = if to_zero {
            c == 0.0 || p < 0.0
        } else {
            c > 0.0 && p > 0.0
        };
        return ClauseCheck {
            clause: clause.to_string(),
            pass,
            method: CheckMethod::ExponentArithmetic,
            detail: format!("product is {c} * nu^{p}"),
        };
    }
    let horizon = factors
        .iter()
        .filter_map(|f| match f {
            Factor::Explicit(v) => Some(v.len()),
            Factor::Power(_) => None,
        })
        .min()
        .unwrap_or(0)
        .min(1000);
    if horizon < 2 {
        return ClauseCheck {
            clause: clause.to_string(),
            pass: false,
            method: CheckMethod::NumericOnly,
            detail: "explicit schedule too short to judge a trend".to_string(),
        };
    }
    let vals: Vec<f64> = (1..=horizon as u32)
        .map(|nu| {
            factors
                .iter()
                .map(|f| match f {
                    Factor::Power(r) => r.value(nu),
                    Factor::Explicit(v) => v[(nu - 1) as usize],
                })
                .product()
        })
        .collect();
    let first = vals[0];
    let last = *vals.last().unwrap();
    let tail = &vals[vals.len() / 2..];
    let pass = if to_zero {
        vals.iter().all(|v| *v == 0.0)
            || (tail.windows(2).all(|w| w[1] <= w[0] + 1e-12) && last < first)
    } else {
        tail.windows(2).all(|w| w[1] >= w[0] - 1e-12) && last > first
    };
    ClauseCheck {
        clause: clause.to_string(),
        pass,
        method: CheckMethod::NumericOnly,
        detail: format!("trend over nu = 1..{horizon}: first {first}, last {last}"),
    }
}

/// Check the coordination conditions between penalty growth and declared
/// error decay: the lambda bound diverges while `sigma * eta`,
/// `theta * lambda_bar * eta`, and `theta * delta` all vanish.
pub fn validate_schedules(sched: &ParameterSchedule) -> ValidationReport {
    let delta = Factor::Power(sched.delta_rate);
    let eta = Factor::Power(sched.eta_rate);
    let clauses = vec![
        check_product(
            "lambda_bar diverges",
            &[factor_of(&sched.lambda_bar)],
            false,
        ),
        check_product(
            "sigma * eta vanishes",
            &[factor_of(&sched.sigma), Factor::Power(sched.eta_rate)],
            true,
        ),
        check_product(
            "theta * lambda_bar * eta vanishes",
            &[factor_of(&sched.theta), factor_of(&sched.lambda_bar), eta],
            true,
        ),
        check_product(
            "theta * delta vanishes",
            &[factor_of(&sched.theta), delta],
            true,
        ),
    ];
    ValidationReport { clauses }
}

// ---------------------------------------------------------------------------
// Approximation family
// ---------------------------------------------------------------------------

/// How the cut set at accuracy `nu` is drawn from the master list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum YNuRule {
    /// The full master list at every `nu`.
    Full,
    /// First `floor(c * nu^p)` master points, clamped to the list length.
    Prefix { c: f64, p: f64 },
    /// Dyadic subgrid of the master list: level `floor(c * nu^p)` keeps the
    /// indices `floor(i * (M - 1) / 2^level)`, which are nested across levels
    /// and always include both ends.
    NestedSubgrid { c: f64, p: f64 },
}

#[derive(Clone, Debug)]
pub struct ApproximationFamily {
    pub f_nu: ExprAst,
    pub g_nu: ExprAst,
    pub h_nu: Vec<ExprAst>,
    pub y_rule: YNuRule,
}

/// Family data with `nu` substituted out.
#[derive(Clone, Debug)]
pub struct MaterializedFamily {
    pub f: ExprAst,
    pub g: ExprAst,
    pub h: Vec<ExprAst>,
}

impl ApproximationFamily {
    /// Family that reproduces the exact data at every `nu`.
    pub fn exact(problem: &BilevelProblem) -> Self {
        ApproximationFamily {
            f_nu: problem.f().clone(),
            g_nu: problem.g().clone(),
            h_nu: problem.h().to_vec(),
            y_rule: YNuRule::Full,
        }
    }

    pub fn validate(&self, problem: &BilevelProblem) -> Result<(), ModelError> {
        let (n, m, q) = (problem.n(), problem.m(), problem.q());
        check_vars(&self.f_nu, "family objective f_nu", n, m, true)?;
        check_vars(&self.g_nu, "family objective g_nu", n, m, true)?;
        if self.h_nu.len() != q {
            return Err(ModelError::ConstraintCount {
                got: self.h_nu.len(),
                want: q,
            });
        }
        for (j, hj) in self.h_nu.iter().enumerate() {
            check_vars(hj, &format!("family constraint H_nu[{j}]"), n, m, true)?;
        }
        match self.y_rule {
            YNuRule::Full => {}
            YNuRule::Prefix { c, p } | YNuRule::NestedSubgrid { c, p } => {
                if c.is_nan() || p.is_nan() || c <= 0.0 || p < 0.0 {
                    return Err(ModelError::BadCutFamilyRule);
                }
            }
        }
        Ok(())
    }

    pub fn materialize(&self, nu: u32) -> MaterializedFamily {
        let v = nu as f64;
        MaterializedFamily {
            f: expr::substitute(&self.f_nu, "nu", v),
            g: expr::substitute(&self.g_nu, "nu", v),
            h: self
                .h_nu
                .iter()
                .map(|hj| expr::substitute(hj, "nu", v))
                .collect(),
        }
    }

    /// Indices of the cut set at `nu` into the master list, plus a flag set
    /// when a prefix count had to be clamped to the list length.
    pub fn cut_indices(
        &self,
        nu: u32,
        master_len: usize,
    ) -> Result<(Vec<usize>, bool), ModelError> {
        match self.y_rule {
            YNuRule::Full => Ok(((0..master_len).collect(), false)),
            YNuRule::Prefix { c, p } => {
                let want = PowerRule::new(c, p).value(nu).floor();
                if !want.is_finite() || want < 1.0 {
                    return Err(ModelError::EmptyCutFamily { nu });
                }
                let k = want as usize;
                let clamped = k > master_len;
                Ok(((0..k.min(master_len)).collect(), clamped))
            }
            YNuRule::NestedSubgrid { c, p } => {
                let level = PowerRule::new(c, p).value(nu).floor();
                if !level.is_finite() || level < 0.0 {
                    return Err(ModelError::EmptyCutFamily { nu });
                }
                let level = (level as u32).min(usize::BITS - 2);
                let pieces: u64 = 1u64 << level;
                let last = (master_len - 1) as u64;
                let mut idx: Vec<usize> = (0..=pieces)
                    .map(|i| ((i * last) / pieces) as usize)
                    .collect();
                idx.dedup();
                Ok((idx, false))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Stabilized instance
// ---------------------------------------------------------------------------

/// All data of the lifted problem at a fixed `nu`: materialized approximating
/// functions, the cut set, and numeric parameter values. Immutable once
/// built.
#[derive(Clone, Debug)]
pub struct StabilizedInstance<'p> {
    problem: &'p BilevelProblem,
    nu: u32,
    approx: MaterializedFamily,
    y_nu: Vec<usize>,
    y_rule_clamped: bool,
    pub sigma: f64,
    pub theta: f64,
    pub lambda_bar: f64,
    pub tau_nu: f64,
}

/// Materialize one instance of the lifted problem at accuracy `nu`.
pub fn build_instance<'p>(
    problem: &'p BilevelProblem,
    family: &ApproximationFamily,
    sched: &ParameterSchedule,
    nu: u32,
) -> Result<StabilizedInstance<'p>, ModelError> {
    if nu == 0 {
        return Err(ModelError::BadNu);
    }
    family.validate(problem)?;
    let sigma = sched.sigma.value_named("sigma", nu)?;
    let theta = sched.theta.value_named("theta", nu)?;
    let lambda_bar = sched.lambda_bar.value_named("lambda_bar", nu)?;
    let tau_nu = sched.tau_nu.value_named("tau_nu", nu)?;
    let (y_nu, y_rule_clamped) = family.cut_indices(nu, problem.master_y().len())?;
    if y_nu.is_empty() {
        return Err(ModelError::EmptyCutFamily { nu });
    }
    Ok(StabilizedInstance {
        problem,
        nu,
        approx: family.materialize(nu),
        y_nu,
        y_rule_clamped,
        sigma,
        theta,
        lambda_bar,
        tau_nu,
    })
}

impl<'p> StabilizedInstance<'p> {
    pub fn problem(&self) -> &'p BilevelProblem {
        self.problem
    }

    pub fn nu(&self) -> u32 {
        self.nu
    }

    /// Master indices of the cut set at this accuracy.
    pub fn y_nu(&self) -> &[usize] {
        &self.y_nu
    }

    pub fn y_rule_clamped(&self) -> bool {
        self.y_rule_clamped
    }

    pub fn approx(&self) -> &MaterializedFamily {
        &self.approx
    }

    pub fn eval_f_nu(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        expr::eval_expr(&self.approx.f, &PointBindings { x, yz: y })
    }

    pub fn eval_g_nu(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        expr::eval_expr(&self.approx.g, &PointBindings { x, yz: y })
    }

    pub fn eval_h_nu(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.approx
            .h
            .iter()
            .map(|hj| expr::eval_expr(hj, &PointBindings { x, yz: y }))
            .collect()
    }

    /// Distance of the approximated constraint image to `D`.
    pub fn approx_dist(&self, x: &[f64], y: &[f64]) -> Result<f64, ModelError> {
        let h = self.eval_h_nu(x, y)?;
        Ok(self.problem.d_set().distance(&h, self.problem.norm())?)
    }
}

/// Empirical sup of the data errors over a sample grid: returns
/// `(sup |g_nu - g|, sup |dist(H_nu, D) - dist(H, D)|)`. A lower bound on
/// the true sup over continuous sets; diagnostic only.
pub fn estimate_error_rates(
    problem: &BilevelProblem,
    family: &ApproximationFamily,
    nu: u32,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
) -> Result<(f64, f64), ModelError> {
    let mat = family.materialize(nu);
    let mut delta_hat: f64 = 0.0;
    let mut eta_hat: f64 = 0.0;
    for x in xs {
        for y in ys {
            let b = PointBindings { x, yz: y };
            let g = problem.eval_g(x, y)?;
            let g_nu = expr::eval_expr(&mat.g, &b)?;
            delta_hat = delta_hat.max((g_nu - g).abs());

            let h: Vec<f64> = problem.eval_h(x, y)?;
            let h_nu: Vec<f64> = mat
                .h
                .iter()
                .map(|hj| expr::eval_expr(hj, &b))
                .collect::<Result<_, _>>()?;
            let d = problem.d_set().distance(&h, problem.norm())?;
            let d_nu = problem.d_set().distance(&h_nu, problem.norm())?;
            eta_hat = eta_hat.max((d_nu - d).abs());
        }
    }
    Ok((delta_hat, eta_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::testutil::{demo_family, demo_problem, demo_schedule};

    #[test]
    fn build_materializes_parameters() {
        let p = demo_problem(101);
        let inst = build_instance(&p, &demo_family(), &demo_schedule(), 8).unwrap();
        assert!((inst.sigma - 8f64.sqrt()).abs() < 1e-12);
        assert!((inst.theta - 2.0).abs() < 1e-12);
        assert!((inst.lambda_bar - 2.0).abs() < 1e-12);
        assert_eq!(inst.tau_nu, 0.0);
        assert_eq!(inst.y_nu(), &[0, 1]);
        // h_nu at (x, y) = (1, 1) carries the 1/8 shift.
        assert_eq!(inst.eval_h_nu(&[1.0], &[1.0]).unwrap(), vec![0.125]);
    }

    #[test]
    fn nu_free_family_reproduces_exact_data() {
        let p = demo_problem(11);
        let fam = ApproximationFamily::exact(&p);
        for nu in [1, 5, 40] {
            let inst = build_instance(&p, &fam, &demo_schedule(), nu).unwrap();
            assert_eq!(inst.approx().f, *p.f());
            assert_eq!(inst.approx().g, *p.g());
            assert_eq!(inst.approx().h, p.h());
        }
    }

    #[test]
    fn prefix_rule_takes_leading_master_points() {
        let p = demo_problem(11);
        let mut fam = demo_family();
        fam.y_rule = YNuRule::Prefix { c: 1.0, p: 1.0 };
        let inst = build_instance(&p, &fam, &demo_schedule(), 1).unwrap();
        assert_eq!(inst.y_nu(), &[0]);
        assert!(!inst.y_rule_clamped());

        let inst = build_instance(&p, &fam, &demo_schedule(), 7).unwrap();
        assert_eq!(inst.y_nu(), &[0, 1]);
        assert!(inst.y_rule_clamped());
    }

    #[test]
    fn nested_subgrid_is_nested_and_keeps_ends() {
        let p = BilevelProblem::new(ProblemData {
            y_set: SetSpec::FinitePoints((0..9).map(|i| vec![i as f64]).collect()),
            ..demo_problem(3).data().clone()
        })
        .unwrap();
        let mut fam = demo_family();
        fam.y_rule = YNuRule::NestedSubgrid { c: 1.0, p: 1.0 };
        let mut prev: Vec<usize> = vec![];
        for nu in 1..=5 {
            let (idx, _) = fam.cut_indices(nu, p.master_y().len()).unwrap();
            assert_eq!(*idx.first().unwrap(), 0);
            assert_eq!(*idx.last().unwrap(), 8);
            for i in &prev {
                assert!(idx.contains(i), "level {nu} lost index {i}");
            }
            prev = idx;
        }
        assert_eq!(prev, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn schedule_validator_exponent_arithmetic() {
        for beta in [0.5, 1.0, 2.0] {
            let sched = ParameterSchedule {
                sigma: ScheduleRule::power(1.0, beta / 2.0),
                theta: ScheduleRule::power(1.0, beta / 3.0),
                lambda_bar: ScheduleRule::power(1.0, beta / 3.0),
                tau_nu: ScheduleRule::constant(0.0),
                delta_rate: PowerRule::new(1.0, -beta),
                eta_rate: PowerRule::new(1.0, -beta),
            };
            let report = validate_schedules(&sched);
            assert!(report.all_pass(), "beta = {beta}: {report:?}");
            assert!(report
                .clauses
                .iter()
                .all(|c| c.method == CheckMethod::ExponentArithmetic));
        }

        let sched = ParameterSchedule {
            sigma: ScheduleRule::power(1.0, 2.0),
            theta: ScheduleRule::constant(1.0),
            lambda_bar: ScheduleRule::power(1.0, 0.5),
            tau_nu: ScheduleRule::constant(0.0),
            delta_rate: PowerRule::new(1.0, -1.0),
            eta_rate: PowerRule::new(1.0, -1.0),
        };
        let report = validate_schedules(&sched);
        assert!(!report.clauses[1].pass, "sigma * eta must fail");
        assert!(report.clauses[3].pass, "theta * delta must pass");
    }

    #[test]
    fn schedule_validator_numeric_trend() {
        let sched = ParameterSchedule {
            sigma: ScheduleRule::Explicit {
                values: (1..=20).map(|nu| (nu as f64).sqrt()).collect(),
            },
            theta: ScheduleRule::constant(1.0),
            lambda_bar: ScheduleRule::Explicit {
                values: (1..=20).map(|nu| nu as f64).collect(),
            },
            tau_nu: ScheduleRule::constant(0.0),
            delta_rate: PowerRule::new(1.0, -2.0),
            eta_rate: PowerRule::new(1.0, -2.0),
        };
        let report = validate_schedules(&sched);
        assert!(report.all_pass(), "{report:?}");
        assert_eq!(report.clauses[0].method, CheckMethod::NumericOnly);
        assert_eq!(report.clauses[1].method, CheckMethod::NumericOnly);
    }

    #[test]
    fn error_rate_estimates() {
        let p = demo_problem(11);
        let fam = demo_family();
        let (d, e) = estimate_error_rates(&p, &fam, 10, p.x_grid(), p.master_y()).unwrap();
        assert_eq!(d, 0.0);
        assert!((e - 0.1).abs() < 1e-15);

        let exact = ApproximationFamily::exact(&p);
        assert_eq!(
            estimate_error_rates(&p, &exact, 3, p.x_grid(), p.master_y()).unwrap(),
            (0.0, 0.0)
        );

        let mut shifted = ApproximationFamily::exact(&p);
        shifted.g_nu = parse_expr("-x1 * y1 + 1/nu").unwrap();
        let (d, _) = estimate_error_rates(&p, &shifted, 4, p.x_grid(), p.master_y()).unwrap();
        assert_eq!(d, 0.25);
    }

    #[test]
    fn build_rejects_bad_input() {
        let p = demo_problem(5);
        let fam = demo_family();
        let mut sched = demo_schedule();
        sched.sigma = ScheduleRule::power(-1.0, 0.5);
        assert!(matches!(
            build_instance(&p, &fam, &sched, 2),
            Err(ModelError::BadParameterValue { name: "sigma", .. })
        ));

        let mut fam2 = fam.clone();
        fam2.y_rule = YNuRule::Prefix { c: 0.0, p: 1.0 };
        assert!(matches!(
            build_instance(&p, &fam2, &demo_schedule(), 2),
            Err(ModelError::BadCutFamilyRule)
        ));

        assert!(matches!(
            build_instance(&p, &fam, &demo_schedule(), 0),
            Err(ModelError::BadNu)
        ));
    }

    #[test]
    fn problem_validation_errors() {
        let mut data = demo_problem(5).data().clone();
        data.h = vec![];
        assert!(matches!(
            BilevelProblem::new(data),
            Err(ModelError::ConstraintCount { .. })
        ));

        let mut data = demo_problem(5).data().clone();
        data.g = parse_expr("x1 * y2").unwrap();
        assert!(matches!(
            BilevelProblem::new(data),
            Err(ModelError::UnknownVariable { .. })
        ));

        let mut data = demo_problem(5).data().clone();
        data.g = parse_expr("x1 - 1/nu").unwrap();
        assert!(
            BilevelProblem::new(data).is_err(),
            "exact data must not reference nu"
        );

        let mut data = demo_problem(5).data().clone();
        data.tau = -0.5;
        assert!(matches!(
            BilevelProblem::new(data),
            Err(ModelError::NegativeTau(_))
        ));

        let mut data = demo_problem(5).data().clone();
        data.x_grid = None;
        assert!(matches!(
            BilevelProblem::new(data),
            Err(ModelError::MissingGrid { role: "X" })
        ));
    }

    #[test]
    fn deterministic_build() {
        let p = demo_problem(31);
        let a = build_instance(&p, &demo_family(), &demo_schedule(), 9).unwrap();
        let b = build_instance(&p, &demo_family(), &demo_schedule(), 9).unwrap();
        assert_eq!(a.approx().g, b.approx().g);
        assert_eq!(a.y_nu(), b.y_nu());
        assert_eq!(a.sigma, b.sigma);
    }
}
