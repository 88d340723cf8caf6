//! Shared fixtures for unit tests.

use crate::expr::parse_expr;
use crate::geometry::{GridSpec, Interval, Norm, SetSpec};
use crate::model::{
    ApproximationFamily, BilevelProblem, ParameterSchedule, PowerRule, ProblemData, ScheduleRule,
    YNuRule,
};

/// Two-point lower level with a drifting inequality constraint; the instance
/// whose naive substitution jumps to the wrong corner while the lifted
/// formulation recovers the true solution as `nu` grows.
pub(crate) fn demo_problem(x_resolution: usize) -> BilevelProblem {
    BilevelProblem::new(ProblemData {
        n: 1,
        m: 1,
        q: 1,
        x_set: SetSpec::IntervalBox(vec![Interval::new(1.0, 2.0).unwrap()]),
        x_grid: Some(GridSpec::new(vec![x_resolution]).unwrap()),
        y_set: SetSpec::FinitePoints(vec![vec![0.0], vec![1.0]]),
        y_grid: None,
        d_set: SetSpec::IntervalBox(vec![Interval::new(f64::NEG_INFINITY, 0.0).unwrap()]),
        f: parse_expr("(y1 - 1/2) * x1").unwrap(),
        g: parse_expr("-x1 * y1").unwrap(),
        h: vec![parse_expr("y1 - 1").unwrap()],
        tau: 0.0,
        norm: Norm::L1,
        upper_domain: vec![],
    })
    .unwrap()
}

pub(crate) fn demo_family() -> ApproximationFamily {
    ApproximationFamily {
        f_nu: parse_expr("(y1 - 1/2) * x1").unwrap(),
        g_nu: parse_expr("-x1 * y1").unwrap(),
        h_nu: vec![parse_expr("y1 - 1 + 1/nu").unwrap()],
        y_rule: YNuRule::Full,
    }
}

pub(crate) fn demo_schedule() -> ParameterSchedule {
    ParameterSchedule {
        sigma: ScheduleRule::power(1.0, 0.5),
        theta: ScheduleRule::power(1.0, 1.0 / 3.0),
        lambda_bar: ScheduleRule::power(1.0, 1.0 / 3.0),
        tau_nu: ScheduleRule::constant(0.0),
        delta_rate: PowerRule::constant(0.0),
        eta_rate: PowerRule::new(1.0, -1.0),
    }
}
