//! Points and arcs on the circle R/Z.

use crate::{Error, Result};

/// A point of R/Z stored as its representative in [0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: "circle point",
            });
        }
        Ok(Self::wrap(x))
    }

    /// Reduce any finite real mod 1 into [0, 1).
    pub fn wrap(x: f64) -> Self {
        let mut r = x - x.floor();
        // x just below an integer can round the fractional part up to 1.
        if r >= 1.0 {
            r = 0.0;
        }
        CirclePoint(r)
    }

    pub const fn zero() -> Self {
        CirclePoint(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Geodesic distance on R/Z; never exceeds 1/2.
    pub fn dist(self, other: CirclePoint) -> f64 {
        let d = (self.0 - other.0).abs();
        d.min(1.0 - d)
    }

    pub fn dist_to_zero(self) -> f64 {
        self.0.min(1.0 - self.0)
    }
}

/// An arc [start, start + length) of the circle, length in [0, 1].
/// Length 1 is the whole circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    start: CirclePoint,
    length: f64,
}

impl Arc {
    pub fn new(start: CirclePoint, length: f64) -> Result<Self> {
        if !length.is_finite() || !(0.0..=1.0).contains(&length) {
            return Err(Error::Parameter {
                name: "arc length",
                value: length,
                require: "0 <= length <= 1",
            });
        }
        Ok(Arc { start, length })
    }

    /// Arc from endpoints, running counterclockwise from a to b.
    pub fn from_endpoints(a: CirclePoint, b: CirclePoint) -> Self {
        let mut len = b.value() - a.value();
        if len < 0.0 {
            len += 1.0;
        }
        Arc {
            start: a,
            length: len,
        }
    }

    pub(crate) fn raw(start: CirclePoint, length: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&length));
        Arc { start, length }
    }

    pub fn full() -> Self {
        Arc {
            start: CirclePoint::zero(),
            length: 1.0,
        }
    }

    pub fn start(&self) -> CirclePoint {
        self.start
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn end(&self) -> CirclePoint {
        CirclePoint::wrap(self.start.value() + self.length)
    }

    pub fn is_full(&self) -> bool {
        self.length >= 1.0
    }

    pub fn contains(&self, p: CirclePoint) -> bool {
        if self.is_full() {
            return true;
        }
        let mut off = p.value() - self.start.value();
        if off < 0.0 {
            off += 1.0;
        }
        off < self.length
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_reduces_into_unit_interval() {
        assert_eq!(CirclePoint::wrap(1.0).value(), 0.0);
        assert_eq!(CirclePoint::wrap(-0.25).value(), 0.75);
        assert_eq!(CirclePoint::wrap(2.75).value(), 0.75);
        // A hair below an integer must not surface as 1.0.
        let p = CirclePoint::wrap(-1e-20);
        assert!(p.value() >= 0.0 && p.value() < 1.0, "got {}", p.value());
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(CirclePoint::new(f64::NAN).is_err());
        assert!(CirclePoint::new(f64::INFINITY).is_err());
    }

    #[test]
    fn distance_is_geodesic() {
        let a = CirclePoint::wrap(0.1);
        let b = CirclePoint::wrap(0.9);
        assert!((a.dist(b) - 0.2).abs() < 1e-15);
        assert!(a.dist(b) <= 0.5);
        assert_eq!(a.dist(a), 0.0);
    }

    #[test]
    fn arc_membership_handles_wraparound() {
        let arc = Arc::new(CirclePoint::wrap(0.9), 0.2).unwrap();
        assert!(arc.contains(CirclePoint::wrap(0.95)));
        assert!(arc.contains(CirclePoint::wrap(0.05)));
        assert!(!arc.contains(CirclePoint::wrap(0.5)));
        assert!((arc.end().value() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn arc_rejects_bad_length() {
        assert!(Arc::new(CirclePoint::zero(), -0.1).is_err());
        assert!(Arc::new(CirclePoint::zero(), 1.5).is_err());
        assert!(Arc::new(CirclePoint::zero(), f64::NAN).is_err());
    }
}
