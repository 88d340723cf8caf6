//! JSON problem files.
//!
//! One self-contained document per experiment: dimensions, the three sets
//! (with optional grids), norm and tolerance, expression strings for the
//! objectives and constraints, the approximation family, and the parameter
//! schedule. Interval endpoints use `null` for the missing side, so
//! `[null, 0.0]` is the closed negative half-line and `[0.0, 0.0]` is `{0}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::expr::parse_expr;
use crate::geometry::{GridSpec, Interval, Norm, SetSpec};
use crate::model::{
    ApproximationFamily, BilevelProblem, DomainConstraint, ParameterSchedule, PowerRule,
    ProblemData, ScheduleRule, YNuRule,
};

use super::HarnessError;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawDims {
    n: usize,
    m: usize,
    q: usize,
}

type RawInterval = [Option<f64>; 2];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawSet {
    Box {
        intervals: Vec<RawInterval>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<usize>>,
    },
    Finite {
        points: Vec<Vec<f64>>,
    },
    Union {
        boxes: Vec<Vec<RawInterval>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSets {
    #[serde(rename = "X")]
    x: RawSet,
    #[serde(rename = "Y")]
    y: RawSet,
    #[serde(rename = "D")]
    d: RawSet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawObjectives {
    f: String,
    g: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawConstraints {
    #[serde(rename = "H")]
    h: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawDomainConstraint {
    expr: String,
    interval: RawInterval,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawFamily {
    f_nu: String,
    g_nu: String,
    #[serde(rename = "H_nu")]
    h_nu: Vec<String>,
    #[serde(rename = "Y_nu_rule")]
    y_nu_rule: YNuRule,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSchedule {
    sigma: ScheduleRule,
    theta: ScheduleRule,
    lambda_bar: ScheduleRule,
    tau_nu: ScheduleRule,
    delta_rate: PowerRule,
    eta_rate: PowerRule,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawProblemFile {
    dims: RawDims,
    sets: RawSets,
    norm: Norm,
    tau: f64,
    objectives: RawObjectives,
    constraints: RawConstraints,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    upper_domain: Vec<RawDomainConstraint>,
    family: RawFamily,
    schedule: RawSchedule,
}

/// Everything a problem file describes.
#[derive(Clone, Debug)]
pub struct LoadedProblem {
    pub problem: BilevelProblem,
    pub family: ApproximationFamily,
    pub schedule: ParameterSchedule,
}

fn schema_err(pointer: &str, message: impl ToString) -> HarnessError {
    HarnessError::Schema {
        pointer: pointer.to_string(),
        message: message.to_string(),
    }
}

fn interval_from_raw(raw: &RawInterval, pointer: &str) -> Result<Interval, HarnessError> {
    let lo = raw[0].unwrap_or(f64::NEG_INFINITY);
    let hi = raw[1].unwrap_or(f64::INFINITY);
    Interval::new(lo, hi).map_err(|e| schema_err(pointer, e))
}

fn set_from_raw(raw: &RawSet, pointer: &str) -> Result<(SetSpec, Option<GridSpec>), HarnessError> {
    match raw {
        RawSet::Box { intervals, grid } => {
            let ivs = intervals
                .iter()
                .enumerate()
                .map(|(i, iv)| interval_from_raw(iv, &format!("{pointer}/intervals/{i}")))
                .collect::<Result<Vec<_>, _>>()?;
            let grid = match grid {
                Some(res) => Some(
                    GridSpec::new(res.clone())
                        .map_err(|e| schema_err(&format!("{pointer}/grid"), e))?,
                ),
                None => None,
            };
            Ok((SetSpec::IntervalBox(ivs), grid))
        }
        RawSet::Finite { points } => Ok((SetSpec::FinitePoints(points.clone()), None)),
        RawSet::Union { boxes } => {
            let bs = boxes
                .iter()
                .enumerate()
                .map(|(bi, b)| {
                    b.iter()
                        .enumerate()
                        .map(|(i, iv)| interval_from_raw(iv, &format!("{pointer}/boxes/{bi}/{i}")))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((SetSpec::UnionOfBoxes(bs), None))
        }
    }
}

fn expr_from_raw(text: &str, pointer: &str) -> Result<crate::expr::ExprAst, HarnessError> {
    parse_expr(text).map_err(|e| schema_err(pointer, e))
}

fn from_raw(raw: RawProblemFile) -> Result<LoadedProblem, HarnessError> {
    let (x_set, x_grid) = set_from_raw(&raw.sets.x, "/sets/X")?;
    let (y_set, y_grid) = set_from_raw(&raw.sets.y, "/sets/Y")?;
    let (d_set, d_grid) = set_from_raw(&raw.sets.d, "/sets/D")?;
    if d_grid.is_some() {
        return Err(schema_err("/sets/D/grid", "D is never discretized"));
    }

    let f = expr_from_raw(&raw.objectives.f, "/objectives/f")?;
    let g = expr_from_raw(&raw.objectives.g, "/objectives/g")?;
    let h = raw
        .constraints
        .h
        .iter()
        .enumerate()
        .map(|(i, s)| expr_from_raw(s, &format!("/constraints/H/{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let upper_domain = raw
        .upper_domain
        .iter()
        .enumerate()
        .map(|(i, dc)| {
            Ok(DomainConstraint {
                expr: expr_from_raw(&dc.expr, &format!("/upper_domain/{i}/expr"))?,
                interval: interval_from_raw(&dc.interval, &format!("/upper_domain/{i}/interval"))?,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let problem = BilevelProblem::new(ProblemData {
        n: raw.dims.n,
        m: raw.dims.m,
        q: raw.dims.q,
        x_set,
        x_grid,
        y_set,
        y_grid,
        d_set,
        f,
        g,
        h,
        tau: raw.tau,
        norm: raw.norm,
        upper_domain,
    })?;

    let family = ApproximationFamily {
        f_nu: expr_from_raw(&raw.family.f_nu, "/family/f_nu")?,
        g_nu: expr_from_raw(&raw.family.g_nu, "/family/g_nu")?,
        h_nu: raw
            .family
            .h_nu
            .iter()
            .enumerate()
            .map(|(i, s)| expr_from_raw(s, &format!("/family/H_nu/{i}")))
            .collect::<Result<Vec<_>, _>>()?,
        y_rule: raw.family.y_nu_rule,
    };
    family.validate(&problem)?;

    let schedule = ParameterSchedule {
        sigma: raw.schedule.sigma,
        theta: raw.schedule.theta,
        lambda_bar: raw.schedule.lambda_bar,
        tau_nu: raw.schedule.tau_nu,
        delta_rate: raw.schedule.delta_rate,
        eta_rate: raw.schedule.eta_rate,
    };

    Ok(LoadedProblem {
        problem,
        family,
        schedule,
    })
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Map { key } => {
                out.push('/');
                out.push_str(key);
            }
            Segment::Seq { index } => {
                out.push('/');
                out.push_str(&index.to_string());
            }
            Segment::Enum { variant } => {
                out.push('/');
                out.push_str(variant);
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parse a problem document from JSON text.
pub fn parse_problem_json(text: &str) -> Result<LoadedProblem, HarnessError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawProblemFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let pointer = pointer_of(e.path());
        schema_err(&pointer, e.into_inner())
    })?;
    from_raw(raw)
}

/// Load and validate a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<LoadedProblem, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem_json(&text)
}

fn interval_to_raw(iv: &Interval) -> RawInterval {
    [
        iv.lo().is_finite().then_some(iv.lo()),
        iv.hi().is_finite().then_some(iv.hi()),
    ]
}

fn set_to_raw(set: &SetSpec, grid: &Option<GridSpec>) -> RawSet {
    match set {
        SetSpec::FinitePoints(points) => RawSet::Finite {
            points: points.clone(),
        },
        SetSpec::IntervalBox(ivs) => RawSet::Box {
            intervals: ivs.iter().map(interval_to_raw).collect(),
            grid: grid.as_ref().map(|g| g.resolution.clone()),
        },
        SetSpec::UnionOfBoxes(boxes) => RawSet::Union {
            boxes: boxes
                .iter()
                .map(|b| b.iter().map(interval_to_raw).collect())
                .collect(),
        },
    }
}

/// Serialize a problem document to pretty JSON.
pub fn problem_to_json(loaded: &LoadedProblem) -> String {
    let data = loaded.problem.data();
    let raw = RawProblemFile {
        dims: RawDims {
            n: data.n,
            m: data.m,
            q: data.q,
        },
        sets: RawSets {
            x: set_to_raw(&data.x_set, &data.x_grid),
            y: set_to_raw(&data.y_set, &data.y_grid),
            d: set_to_raw(&data.d_set, &None),
        },
        norm: data.norm,
        tau: data.tau,
        objectives: RawObjectives {
            f: data.f.to_string(),
            g: data.g.to_string(),
        },
        constraints: RawConstraints {
            h: data.h.iter().map(ToString::to_string).collect(),
        },
        upper_domain: data
            .upper_domain
            .iter()
            .map(|dc| RawDomainConstraint {
                expr: dc.expr.to_string(),
                interval: interval_to_raw(&dc.interval),
            })
            .collect(),
        family: RawFamily {
            f_nu: loaded.family.f_nu.to_string(),
            g_nu: loaded.family.g_nu.to_string(),
            h_nu: loaded.family.h_nu.iter().map(ToString::to_string).collect(),
            y_nu_rule: loaded.family.y_rule.clone(),
        },
        schedule: RawSchedule {
            sigma: loaded.schedule.sigma.clone(),
            theta: loaded.schedule.theta.clone(),
            lambda_bar: loaded.schedule.lambda_bar.clone(),
            tau_nu: loaded.schedule.tau_nu.clone(),
            delta_rate: loaded.schedule.delta_rate,
            eta_rate: loaded.schedule.eta_rate,
        },
    };
    let mut s = serde_json::to_string_pretty(&raw).expect("problem document serializes");
    s.push('\n');
    s
}
