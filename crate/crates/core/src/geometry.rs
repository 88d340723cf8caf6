//! Sets, norms, point-to-set distances, and minimal-norm corrections.
//!
//! Sets come in three closed, nonempty shapes: finite point lists, interval
//! boxes (endpoints may be infinite, `{0}` is the degenerate box `[0, 0]`),
//! and finite unions of boxes for disjunctive constraints. Distances to boxes
//! are exact by per-coordinate clamping; unions and finite sets take the
//! minimum over members, so no iterative projection is ever involved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|t| t.abs()).sum(),
            Norm::L2 => v.iter().map(|t| t * t).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0, |acc, t| acc.max(t.abs())),
        }
    }
}

/// Closed interval; either endpoint may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(GeometryError::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Nearest point of the interval.
    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.lo, self.hi)
    }
}

/// Nonempty closed subset of some `R^q`.
#[derive(Clone, Debug, PartialEq)]
pub enum SetSpec {
    FinitePoints(Vec<Vec<f64>>),
    IntervalBox(Vec<Interval>),
    UnionOfBoxes(Vec<Vec<Interval>>),
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: set has dimension {set}, point has dimension {point}")]
    DimensionMismatch { set: usize, point: usize },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("set must be nonempty")]
    EmptySet,
    #[error("grid discretization requires finite intervals")]
    InfiniteInterval,
    #[error("grid resolution must be at least 2 per axis")]
    BadResolution,
    #[error("grid resolution list has {got} entries, box has {want} axes")]
    ResolutionMismatch { got: usize, want: usize },
    #[error("finite point sets must have finite coordinates")]
    NonFinitePoint,
    #[error("grid would exceed {MAX_GRID_POINTS} points")]
    GridTooLarge,
}

/// Hard cap on discretization size; this is a desk-scale tool.
pub const MAX_GRID_POINTS: usize = 1 << 22;

fn box_correction(box_: &[Interval], point: &[f64]) -> Vec<f64> {
    box_.iter()
        .zip(point)
        .map(|(iv, p)| iv.clamp(*p) - p)
        .collect()
}

impl SetSpec {
    pub fn dim(&self) -> usize {
        match self {
            SetSpec::FinitePoints(pts) => pts.first().map_or(0, Vec::len),
            SetSpec::IntervalBox(b) => b.len(),
            SetSpec::UnionOfBoxes(boxes) => boxes.first().map_or(0, Vec::len),
        }
    }

    /// Structural checks: nonempty, consistent member dimensions.
    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            SetSpec::FinitePoints(pts) => {
                if pts.is_empty() {
                    return Err(GeometryError::EmptySet);
                }
                let d = pts[0].len();
                if d == 0 || pts.iter().any(|p| p.len() != d) {
                    return Err(GeometryError::DimensionMismatch {
                        set: d,
                        point: pts.iter().map(Vec::len).find(|l| *l != d).unwrap_or(0),
                    });
                }
                if pts.iter().flatten().any(|t| !t.is_finite()) {
                    return Err(GeometryError::NonFinitePoint);
                }
            }
            SetSpec::IntervalBox(b) => {
                if b.is_empty() {
                    return Err(GeometryError::EmptySet);
                }
            }
            SetSpec::UnionOfBoxes(boxes) => {
                if boxes.is_empty() || boxes.iter().any(Vec::is_empty) {
                    return Err(GeometryError::EmptySet);
                }
                let d = boxes[0].len();
                if boxes.iter().any(|b| b.len() != d) {
                    return Err(GeometryError::DimensionMismatch { set: d, point: 0 });
                }
            }
        }
        Ok(())
    }

    fn check_dim(&self, point: &[f64]) -> Result<(), GeometryError> {
        if self.dim() != point.len() {
            return Err(GeometryError::DimensionMismatch {
                set: self.dim(),
                point: point.len(),
            });
        }
        Ok(())
    }

    /// Exact membership test.
    pub fn contains(&self, point: &[f64]) -> Result<bool, GeometryError> {
        self.check_dim(point)?;
        Ok(match self {
            SetSpec::FinitePoints(pts) => pts.iter().any(|p| p == point),
            SetSpec::IntervalBox(b) => b.iter().zip(point).all(|(iv, t)| iv.contains(*t)),
            SetSpec::UnionOfBoxes(boxes) => boxes
                .iter()
                .any(|b| b.iter().zip(point).all(|(iv, t)| iv.contains(*t))),
        })
    }

    /// Point-to-set distance under the given norm.
    ///
    /// Exact for every shape: boxes by clamping, finite sets and unions by
    /// minimizing over members.
    pub fn distance(&self, point: &[f64], norm: Norm) -> Result<f64, GeometryError> {
        self.check_dim(point)?;
        match self {
            SetSpec::FinitePoints(pts) => pts
                .iter()
                .map(|p| {
                    let diff: Vec<f64> = p.iter().zip(point).map(|(a, b)| a - b).collect();
                    norm.eval(&diff)
                })
                .min_by(|a, b| a.total_cmp(b))
                .ok_or(GeometryError::EmptySet),
            SetSpec::IntervalBox(b) => Ok(norm.eval(&box_correction(b, point))),
            SetSpec::UnionOfBoxes(boxes) => boxes
                .iter()
                .map(|b| norm.eval(&box_correction(b, point)))
                .min_by(|a, b| a.total_cmp(b))
                .ok_or(GeometryError::EmptySet),
        }
    }

    /// Correction `u` with `point + u` in the set and `||u||` equal to the
    /// point-to-set distance. Ties go to per-coordinate clamping for boxes
    /// and to the lowest-index member for finite sets and unions.
    pub fn min_norm_correction(
        &self,
        point: &[f64],
        norm: Norm,
    ) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(point)?;
        match self {
            SetSpec::FinitePoints(pts) => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for p in pts {
                    let diff: Vec<f64> = p.iter().zip(point).map(|(a, b)| a - b).collect();
                    let d = norm.eval(&diff);
                    if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        best = Some((d, diff));
                    }
                }
                best.map(|(_, u)| u).ok_or(GeometryError::EmptySet)
            }
            SetSpec::IntervalBox(b) => Ok(box_correction(b, point)),
            SetSpec::UnionOfBoxes(boxes) => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for b in boxes {
                    let u = box_correction(b, point);
                    let d = norm.eval(&u);
                    if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        best = Some((d, u));
                    }
                }
                best.map(|(_, u)| u).ok_or(GeometryError::EmptySet)
            }
        }
    }
}

/// Points per axis for discretizing a finite interval box.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(resolution: Vec<usize>) -> Result<Self, GeometryError> {
        if resolution.is_empty() || resolution.iter().any(|r| *r < 2) {
            return Err(GeometryError::BadResolution);
        }
        Ok(GridSpec { resolution })
    }
}

/// Uniform grid over a finite box, lexicographically ordered, with both
/// endpoints of every axis present exactly.
pub fn grid_points(box_: &[Interval], grid: &GridSpec) -> Result<Vec<Vec<f64>>, GeometryError> {
    if grid.resolution.len() != box_.len() {
        return Err(GeometryError::ResolutionMismatch {
            got: grid.resolution.len(),
            want: box_.len(),
        });
    }
    if box_.iter().any(|iv| !iv.is_finite()) {
        return Err(GeometryError::InfiniteInterval);
    }
    if grid.resolution.iter().any(|r| *r < 2) {
        return Err(GeometryError::BadResolution);
    }
    let total = grid
        .resolution
        .iter()
        .try_fold(1usize, |acc, r| acc.checked_mul(*r))
        .filter(|t| *t <= MAX_GRID_POINTS)
        .ok_or(GeometryError::GridTooLarge)?;
    let axes: Vec<Vec<f64>> = box_
        .iter()
        .zip(&grid.resolution)
        .map(|(iv, r)| {
            (0..*r)
                .map(|i| {
                    if i == 0 {
                        iv.lo()
                    } else if i == r - 1 {
                        iv.hi()
                    } else {
                        iv.lo() + (iv.hi() - iv.lo()) * (i as f64 / (r - 1) as f64)
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    loop {
        out.push(idx.iter().zip(&axes).map(|(i, ax)| ax[*i]).collect());
        // Odometer with the last axis fastest, so output is lexicographic.
        let mut d = axes.len();
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Euclidean distance from `point` to the nearest of `others`.
pub fn min_l2_distance(point: &[f64], others: &[&[f64]]) -> f64 {
    others
        .iter()
        .map(|p| {
            let diff: Vec<f64> = p.iter().zip(point).map(|(a, b)| a - b).collect();
            Norm::L2.eval(&diff)
        })
        .fold(f64::INFINITY, f64::min)
}
