//! Region predicates over state vectors.
//!
//! Regions describe the geometric sets used by state constraints and
//! quantile/target constraints. Membership is exact (rational arithmetic);
//! the boundary is resolved by the caller's choice of `strict` (open
//! interior) versus non-strict (closure) membership. Distance to the
//! complement is available for half-spaces, boxes, balls, and the whole
//! space; other shapes report [`RegionError::NoDistanceOracle`].

use crate::ext::{rat_to_f64, Rat};
use num_traits::{Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegionError {
    #[error("region `{0}` has no distance-to-complement oracle")]
    NoDistanceOracle(String),
    #[error("state dimension {found} does not match region dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Which side of a half-space bound is inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfSpaceSide {
    /// `x[axis] > bound` (strict) / `x[axis] >= bound` (closure).
    Above,
    /// `x[axis] < bound` (strict) / `x[axis] <= bound` (closure).
    Below,
}

/// A region of `R^d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Region {
    /// The whole space.
    All,
    /// The empty set.
    Empty,
    /// Coordinate half-space.
    HalfSpace {
        axis: usize,
        bound: Rat,
        side: HalfSpaceSide,
    },
    /// Axis-aligned box `lower <= x <= upper` (closure semantics).
    Box { lower: Vec<Rat>, upper: Vec<Rat> },
    /// Euclidean ball of the given radius around a center.
    Ball { center: Vec<Rat>, radius: Rat },
    /// Finite union of regions.
    Union(Vec<Region>),
}

impl Region {
    pub fn half_space_above(axis: usize, bound: Rat) -> Self {
        Region::HalfSpace {
            axis,
            bound,
            side: HalfSpaceSide::Above,
        }
    }

    pub fn half_space_below(axis: usize, bound: Rat) -> Self {
        Region::HalfSpace {
            axis,
            bound,
            side: HalfSpaceSide::Below,
        }
    }

    /// Exact membership. With `strict` the region is read as its interior
    /// (open set); otherwise as its closure.
    pub fn contains(&self, x: &[Rat], strict: bool) -> bool {
        match self {
            Region::All => true,
            Region::Empty => false,
            Region::HalfSpace { axis, bound, side } => {
                let v = match x.get(*axis) {
                    Some(v) => v,
                    None => return false,
                };
                match (side, strict) {
                    (HalfSpaceSide::Above, true) => v > bound,
                    (HalfSpaceSide::Above, false) => v >= bound,
                    (HalfSpaceSide::Below, true) => v < bound,
                    (HalfSpaceSide::Below, false) => v <= bound,
                }
            }
            Region::Box { lower, upper } => {
                if x.len() != lower.len() || x.len() != upper.len() {
                    return false;
                }
                x.iter().zip(lower).zip(upper).all(|((xi, lo), hi)| {
                    if strict {
                        xi > lo && xi < hi
                    } else {
                        xi >= lo && xi <= hi
                    }
                })
            }
            Region::Ball { center, radius } => {
                if x.len() != center.len() {
                    return false;
                }
                let dist_sq: Rat = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| {
                        let d = xi - ci;
                        &d * &d
                    })
                    .sum();
                let r_sq = radius * radius;
                if strict {
                    dist_sq < r_sq
                } else {
                    dist_sq <= r_sq
                }
            }
            Region::Union(parts) => parts.iter().any(|p| p.contains(x, strict)),
        }
    }

    /// Euclidean distance from `x` to the complement of the region
    /// (zero when `x` is outside or on the boundary). `All` reports
    /// `f64::INFINITY`; unions and `Empty`-adjacent composites without a
    /// distance oracle report an error.
    pub fn distance_to_complement(&self, x: &[Rat]) -> Result<f64, RegionError> {
        match self {
            Region::All => Ok(f64::INFINITY),
            Region::Empty => Ok(0.0),
            Region::HalfSpace { axis, bound, side } => {
                let v = x.get(*axis).ok_or(RegionError::DimensionMismatch {
                    expected: *axis + 1,
                    found: x.len(),
                })?;
                let signed = match side {
                    HalfSpaceSide::Above => v - bound,
                    HalfSpaceSide::Below => bound - v,
                };
                Ok(rat_to_f64(&signed).max(0.0))
            }
            Region::Box { lower, upper } => {
                if x.len() != lower.len() || x.len() != upper.len() {
                    return Err(RegionError::DimensionMismatch {
                        expected: lower.len(),
                        found: x.len(),
                    });
                }
                let mut best: Option<Rat> = None;
                for ((xi, lo), hi) in x.iter().zip(lower).zip(upper) {
                    let d = (xi - lo).min(hi - xi);
                    best = Some(match best {
                        Some(b) => b.min(d),
                        None => d,
                    });
                }
                let signed = best.unwrap_or_else(Rat::zero);
                Ok(rat_to_f64(&signed).max(0.0))
            }
            Region::Ball { center, radius } => {
                if x.len() != center.len() {
                    return Err(RegionError::DimensionMismatch {
                        expected: center.len(),
                        found: x.len(),
                    });
                }
                if radius.is_negative() {
                    return Ok(0.0);
                }
                let dist_sq: Rat = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| {
                        let d = xi - ci;
                        &d * &d
                    })
                    .sum();
                let dist = rat_to_f64(&dist_sq).sqrt();
                Ok((rat_to_f64(radius) - dist).max(0.0))
            }
            Region::Union(_) => Err(RegionError::NoDistanceOracle("union".into())),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Region::All => "all",
            Region::Empty => "empty",
            Region::HalfSpace { .. } => "half-space",
            Region::Box { .. } => "box",
            Region::Ball { .. } => "ball",
            Region::Union(_) => "union",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::rat;

    #[test]
    fn half_space_membership_and_margin() {
        let r = Region::half_space_above(0, rat(-1, 1));
        assert!(r.contains(&[rat(0, 1)], true));
        assert!(!r.contains(&[rat(-2, 1)], true));
        // boundary: in the closure, not the interior
        assert!(r.contains(&[rat(-1, 1)], false));
        assert!(!r.contains(&[rat(-1, 1)], true));
        assert_eq!(r.distance_to_complement(&[rat(0, 1)]).unwrap(), 1.0);
        assert_eq!(r.distance_to_complement(&[rat(-1, 1)]).unwrap(), 0.0);
        assert_eq!(r.distance_to_complement(&[rat(-5, 1)]).unwrap(), 0.0);
    }

    #[test]
    fn ball_membership_is_exact() {
        let r = Region::Ball {
            center: vec![rat(0, 1), rat(0, 1)],
            radius: rat(2, 1),
        };
        assert!(r.contains(&[rat(1, 1), rat(1, 1)], true));
        // point at exact radius: closure only
        assert!(r.contains(&[rat(2, 1), rat(0, 1)], false));
        assert!(!r.contains(&[rat(2, 1), rat(0, 1)], true));
        // margin 2 - sqrt(2)
        let m = r.distance_to_complement(&[rat(1, 1), rat(1, 1)]).unwrap();
        assert!((m - (2.0 - 2.0_f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn union_has_membership_but_no_distance() {
        let r = Region::Union(vec![
            Region::half_space_below(0, rat(-1, 1)),
            Region::half_space_above(0, rat(1, 1)),
        ]);
        assert!(r.contains(&[rat(2, 1)], true));
        assert!(!r.contains(&[rat(0, 1)], true));
        assert!(matches!(
            r.distance_to_complement(&[rat(2, 1)]),
            Err(RegionError::NoDistanceOracle(_))
        ));
    }

    #[test]
    fn empty_and_all() {
        assert!(Region::All.contains(&[rat(5, 1)], true));
        assert!(!Region::Empty.contains(&[rat(5, 1)], false));
        assert_eq!(
            Region::All.distance_to_complement(&[rat(0, 1)]).unwrap(),
            f64::INFINITY
        );
    }
}
