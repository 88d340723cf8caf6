//! Seeded random finite instances.
//!
//! Generation is fully deterministic in the seed and rejects degenerate
//! draws: master points are distinct, and every upper-level grid point keeps
//! at least one feasible lower-level point so value functions stay finite.
//! Coefficients live on a small half-integer lattice to keep hand checks
//! possible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::expr::parse_expr;
use crate::geometry::{Interval, Norm, SetSpec};
use crate::lowerlevel::LowerLevelView;
use crate::model::{
    ApproximationFamily, BilevelProblem, ParameterSchedule, PowerRule, ProblemData, ScheduleRule,
    YNuRule,
};

#[derive(Clone, Copy, Debug)]
pub struct RandomOptions {
    pub min_x_points: usize,
    pub max_x_points: usize,
    pub min_y_points: usize,
    pub max_y_points: usize,
    pub max_m: usize,
    pub min_q: usize,
    pub max_q: usize,
}

impl Default for RandomOptions {
    fn default() -> Self {
        RandomOptions {
            min_x_points: 2,
            max_x_points: 6,
            min_y_points: 2,
            max_y_points: 6,
            max_m: 2,
            min_q: 1,
            max_q: 2,
        }
    }
}

fn coef(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-4i32..=4) as f64 * 0.5
}

fn nonzero_coef(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let c = coef(rng);
        if c != 0.0 {
            return c;
        }
    }
}

fn lattice_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.random_range(-4i32..=4) as f64 * 0.5)
        .collect()
}

fn distinct_points(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut guard = 0;
    while out.len() < count && guard < 10_000 {
        guard += 1;
        let p = lattice_point(rng, dim);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Affine-plus-bilinear expression in `x1` and `y1..ym`.
fn random_objective(rng: &mut ChaCha8Rng, m: usize) -> String {
    let mut s = format!("{}", coef(rng));
    s.push_str(&format!(" + {} * x1", nonzero_coef(rng)));
    for j in 1..=m {
        s.push_str(&format!(" + {} * y{j}", nonzero_coef(rng)));
    }
    s.push_str(&format!(" + {} * x1 * y1", coef(rng)));
    s
}

fn random_constraint(rng: &mut ChaCha8Rng, m: usize) -> String {
    let mut s = format!("{}", coef(rng));
    s.push_str(&format!(" + {} * x1", coef(rng)));
    for j in 1..=m {
        s.push_str(&format!(" + {} * y{j}", nonzero_coef(rng)));
    }
    s
}

fn try_build(
    rng: &mut ChaCha8Rng,
    opts: &RandomOptions,
) -> Option<(BilevelProblem, ApproximationFamily, ParameterSchedule)> {
    let m = rng.random_range(1..=opts.max_m);
    let q = rng.random_range(opts.min_q..=opts.max_q);
    let kx = rng.random_range(opts.min_x_points..=opts.max_x_points);
    let ky = rng.random_range(opts.min_y_points..=opts.max_y_points);

    let x_points = distinct_points(rng, kx, 1);
    let y_points = distinct_points(rng, ky, m);
    if x_points.len() < kx || y_points.len() < ky {
        return None;
    }

    let d_intervals: Vec<Interval> = (0..q)
        .map(|_| {
            if rng.random_bool(0.75) {
                Interval::new(f64::NEG_INFINITY, 0.0).unwrap()
            } else {
                Interval::new(-0.75, 0.75).unwrap()
            }
        })
        .collect();

    let f = random_objective(rng, m);
    let g = random_objective(rng, m);
    let h: Vec<String> = (0..q).map(|_| random_constraint(rng, m)).collect();
    let tau = if rng.random_bool(0.8) { 0.0 } else { 0.25 };
    let norm = [Norm::L1, Norm::L2, Norm::Linf][rng.random_range(0..3)];

    let problem = BilevelProblem::new(ProblemData {
        n: 1,
        m,
        q,
        x_set: SetSpec::FinitePoints(x_points),
        x_grid: None,
        y_set: SetSpec::FinitePoints(y_points),
        y_grid: None,
        d_set: SetSpec::IntervalBox(d_intervals),
        f: parse_expr(&f).ok()?,
        g: parse_expr(&g).ok()?,
        h: h.iter().map(|s| parse_expr(s).unwrap()).collect(),
        tau,
        norm,
        upper_domain: vec![],
    })
    .ok()?;

    // Keep only draws where every x has a feasible lower-level point, so
    // value functions are finite across the grid.
    let view = LowerLevelView::exact(&problem);
    for x in problem.x_grid() {
        let mut any = false;
        for y in problem.master_y() {
            let hv = view.h_at(x, y).ok()?;
            if problem.d_set().contains(&hv).ok()? {
                any = true;
                break;
            }
        }
        if !any {
            return None;
        }
    }

    let data_shift = |rng: &mut ChaCha8Rng, base: &str| -> String {
        let c = rng.random_range(-2i32..=2) as f64 * 0.5;
        if c == 0.0 {
            base.to_string()
        } else {
            format!("{base} + {c} / nu")
        }
    };
    let family = ApproximationFamily {
        f_nu: parse_expr(&f).unwrap(),
        g_nu: parse_expr(&data_shift(rng, &g)).unwrap(),
        h_nu: h
            .iter()
            .map(|hj| parse_expr(&data_shift(rng, hj)).unwrap())
            .collect(),
        y_rule: YNuRule::Full,
    };

    let schedule = ParameterSchedule {
        sigma: ScheduleRule::power(1.0, 0.5),
        theta: ScheduleRule::power(1.0, 1.0 / 3.0),
        lambda_bar: ScheduleRule::power(1.0, 1.0 / 3.0),
        tau_nu: ScheduleRule::constant(tau),
        delta_rate: PowerRule::new(1.0, -1.0),
        eta_rate: PowerRule::new(1.0, -1.0),
    };

    Some((problem, family, schedule))
}

/// Deterministic random instance for the given seed.
pub fn random_finite_with(
    seed: u64,
    opts: &RandomOptions,
) -> (BilevelProblem, ApproximationFamily, ParameterSchedule) {
    for attempt in 0..1_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        if let Some(triple) = try_build(&mut rng, opts) {
            return triple;
        }
    }
    unreachable!("random instance generation failed for seed {seed}")
}

pub fn random_finite(seed: u64) -> (BilevelProblem, ApproximationFamily, ParameterSchedule) {
    random_finite_with(seed, &RandomOptions::default())
}
