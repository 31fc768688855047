//! Degree-two circle maps with a neutral fixed point and their saddle-node
//! unfolding.
//!
//! The base map, for a shape exponent a > 0,
//!
//! ```text
//! T(x) = x + 2^a x^(1+a)              on [0, 1/2),
//! T(x) = x - 2^a (1-x)^(1+a)  (mod 1) on [1/2, 1),
//! ```
//!
//! fixes 0 with T'(0) = 1. The unfolded family, for t in (0, 1],
//!
//! ```text
//! f_t(x) = t x + 2^a (2-t) x^(1+a)                    on [0, 1/2),
//! f_t(x) = 1 - t(1-x) - 2^a (2-t) (1-x)^(1+a)         on [1/2, 1),
//! ```
//!
//! has f_t'(0) = t, satisfies f_t(x) = 1 - f_t(1-x), and recovers T at t = 1.
//! Both are monotone degree-two covering maps; each carries a continuous
//! lift L with L(0) = 0 and L(1) = 2, which is how all evaluation is done
//! here: compute in the lift, reduce mod 1 once at the end.

use crate::circle::{Arc, CirclePoint};
use crate::{Error, Result};

/// Monotone degree-two covering map of the circle, presented through a lift
/// normalized to L(0) = 0, L(1) = 2.
pub trait CircleMap {
    /// Lift value at x in [0, 1].
    fn lift(&self, x: f64) -> f64;

    /// Derivative of the lift at x in [0, 1]. The implemented families are
    /// C^1 across the branch point, so no side convention is needed.
    fn derivative(&self, x: f64) -> f64;

    /// Lift extended to [0, 2] through L(x + 1) = L(x) + 2.
    fn lift_unfolded(&self, x: f64) -> f64 {
        if x <= 1.0 {
            self.lift(x)
        } else {
            self.lift(x - 1.0) + 2.0
        }
    }

    /// Image of a circle point together with the derivative there.
    fn apply(&self, x: CirclePoint) -> (CirclePoint, f64) {
        let v = x.value();
        (CirclePoint::wrap(self.lift(v)), self.derivative(v))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Parameter {
            name: "alpha",
            value: alpha,
            require: "finite and > 0",
        });
    }
    Ok(())
}

/// The base map T. Neutral at 0; expanding everywhere else.
#[derive(Clone, Copy, Debug)]
pub struct IntermittentMap {
    alpha: f64,
    pow2a: f64,
}

impl IntermittentMap {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(IntermittentMap {
            alpha,
            pow2a: 2f64.powf(alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl CircleMap for IntermittentMap {
    fn lift(&self, x: f64) -> f64 {
        if x < 0.5 {
            x + self.pow2a * x.powf(1.0 + self.alpha)
        } else {
            1.0 + x - self.pow2a * (1.0 - x).powf(1.0 + self.alpha)
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let y = if x < 0.5 { x } else { 1.0 - x };
        1.0 + self.pow2a * (1.0 + self.alpha) * y.powf(self.alpha)
    }
}

/// One member f_t of the saddle-node family. t = 1 gives back T.
#[derive(Clone, Copy, Debug)]
pub struct SaddleNodeMap {
    alpha: f64,
    t: f64,
    // 2^a (2 - t), shared by both branches and the derivative.
    coeff: f64,
}

impl SaddleNodeMap {
    pub fn new(alpha: f64, t: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !t.is_finite() || t <= 0.0 || t > 1.0 {
            return Err(Error::Parameter {
                name: "t",
                value: t,
                require: "0 < t <= 1",
            });
        }
        Ok(Self::from_parts(alpha, 2f64.powf(alpha), t))
    }

    /// Skip revalidation and the 2^a recomputation on hot per-draw paths.
    pub(crate) fn from_parts(alpha: f64, pow2a: f64, t: f64) -> Self {
        SaddleNodeMap {
            alpha,
            t,
            coeff: pow2a * (2.0 - t),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

impl CircleMap for SaddleNodeMap {
    fn lift(&self, x: f64) -> f64 {
        if x < 0.5 {
            self.t * x + self.coeff * x.powf(1.0 + self.alpha)
        } else {
            let y = 1.0 - x;
            2.0 - self.t * y - self.coeff * y.powf(1.0 + self.alpha)
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let y = if x < 0.5 { x } else { 1.0 - x };
        self.t + self.coeff * (1.0 + self.alpha) * y.powf(self.alpha)
    }
}

/// x -> 2x, the affine reference case for oracles and calibration.
#[derive(Clone, Copy, Debug, Default)]
pub struct DoublingMap;

impl CircleMap for DoublingMap {
    fn lift(&self, x: f64) -> f64 {
        2.0 * x
    }

    fn derivative(&self, _x: f64) -> f64 {
        2.0
    }
}

/// The repelling fixed point p_s of f_s in (0, 1/2):
/// p_s = (1/2) ((1-s)/(2-s))^(1/a), with f_s'(p_s) = 1 + a(1-s).
pub fn fixed_source(alpha: f64, s: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !s.is_finite() || s <= 0.0 || s >= 1.0 {
        return Err(Error::Parameter {
            name: "s",
            value: s,
            require: "0 < s < 1",
        });
    }
    Ok(0.5 * ((1.0 - s) / (2.0 - s)).powf(1.0 / alpha))
}

/// The saddle-node maps along a fixed draw sequence, in application order.
pub fn saddle_sequence(alpha: f64, draws: &[f64]) -> Result<Vec<SaddleNodeMap>> {
    draws
        .iter()
        .map(|&t| SaddleNodeMap::new(alpha, t))
        .collect()
}

/// Safety margin by which the derivative must clear 1 for a band to count.
pub const BAND_MARGIN: f64 = 1e-6;
/// Certification grid resolution per axis.
const BAND_GRID: usize = 2048;
/// Smallest parameter width worth reporting as a band.
const BAND_MIN_WIDTH: f64 = 1e-9;

/// Parameter band [s, u] on which every f_t expands uniformly between the
/// fixed sources: f_t'(x) > 1 for all t in [s, u] and x in [p_u, p_s].
#[derive(Clone, Copy, Debug)]
pub struct ExpansionBand {
    pub alpha: f64,
    pub s: f64,
    pub u: f64,
    pub p_s: f64,
    pub p_u: f64,
    /// Smallest derivative value found by the certification grid.
    pub certified_min: f64,
}

impl ExpansionBand {
    /// Radius of the funnel arc around 0.
    pub fn funnel_radius(&self) -> f64 {
        self.p_u
    }

    /// The closed belt [p_u, 1 - p_u], complement of the open funnel.
    pub fn belt_contains(&self, x: CirclePoint) -> bool {
        x.dist_to_zero() >= self.p_u
    }

    pub fn funnel_contains(&self, x: CirclePoint) -> bool {
        x.dist_to_zero() < self.p_u
    }

    pub fn parameter_support(&self) -> (f64, f64) {
        (self.s, self.u)
    }
}

fn saddle_derivative(alpha: f64, pow2a: f64, t: f64, x: f64) -> f64 {
    let y = if x < 0.5 { x } else { 1.0 - x };
    t + pow2a * (2.0 - t) * (1.0 + alpha) * y.powf(alpha)
}

/// Box minimum of f_t'(x) over [s, u] x [p_u, p_s]. The derivative is
/// increasing in x and affine in t, so the minimum sits at x = p_u with
/// t at one of the band endpoints.
fn band_envelope_min(alpha: f64, pow2a: f64, s: f64, u: f64) -> Result<f64> {
    let p_u = fixed_source(alpha, u)?;
    let at_s = saddle_derivative(alpha, pow2a, s, p_u);
    let at_u = saddle_derivative(alpha, pow2a, u, p_u);
    Ok(at_s.min(at_u))
}

/// Find a band [s, u] with a certified uniform expansion margin, or report
/// that none exists above s.
///
/// The admissible set of upper endpoints is an interval (s, u_max): enlarging
/// u lowers p_u and with it the binding value f_s'(p_u). Bisection locates
/// u_max for the margin, the returned u sits halfway into the admissible
/// range so the certificate is not razor thin, and a grid sweep over both
/// axes rechecks the analytic minimum before the band is handed out.
pub fn choose_expansion_band(alpha: f64, s: f64) -> Result<ExpansionBand> {
    let p_s = fixed_source(alpha, s)?;
    let pow2a = 2f64.powf(alpha);
    let feasible = |u: f64| -> Result<bool> {
        Ok(band_envelope_min(alpha, pow2a, s, u)? >= 1.0 + BAND_MARGIN)
    };

    let mut lo = s + BAND_MIN_WIDTH;
    if lo >= 1.0 || !feasible(lo)? {
        return Err(Error::BandInfeasible {
            alpha,
            s,
            detail: format!(
                "derivative margin below {BAND_MARGIN:e} already at u = s + {BAND_MIN_WIDTH:e}"
            ),
        });
    }
    let mut hi = 1.0 - 1e-12;
    let u_max = if feasible(hi)? {
        hi
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        lo
    };

    // Interior pick: keep the certified margin comfortably above its floor.
    let u = s + 0.5 * (u_max - s);
    let p_u = fixed_source(alpha, u)?;

    let mut certified = f64::INFINITY;
    for i in 0..=BAND_GRID {
        let frac = i as f64 / BAND_GRID as f64;
        let t = s + frac * (u - s);
        certified = certified.min(saddle_derivative(alpha, pow2a, t, p_u));
        let x = p_u + frac * (p_s - p_u);
        certified = certified
            .min(saddle_derivative(alpha, pow2a, s, x))
            .min(saddle_derivative(alpha, pow2a, u, x));
    }
    certified = certified.min(band_envelope_min(alpha, pow2a, s, u)?);
    if certified < 1.0 + BAND_MARGIN {
        return Err(Error::BandInfeasible {
            alpha,
            s,
            detail: format!("certification grid found derivative {certified} at the chosen u = {u}"),
        });
    }

    Ok(ExpansionBand {
        alpha,
        s,
        u,
        p_s,
        p_u,
        certified_min: certified,
    })
}

/// Forward image of an arc, computed in the lift so no wrap is lost.
/// Arcs map onto arcs; once the lifted length reaches 1 the image is the
/// whole circle and stays that way.
pub fn interval_image<M: CircleMap>(map: &M, arc: &Arc) -> Arc {
    if arc.is_full() {
        return Arc::full();
    }
    let a = arc.start().value();
    let la = map.lift(a);
    let lb = map.lift_unfolded(a + arc.length());
    let len = lb - la;
    if len >= 1.0 {
        Arc::full()
    } else {
        Arc::raw(CirclePoint::wrap(la), len.max(0.0))
    }
}

/// Image-length trace of an arc under iteration, up to the covering time.
#[derive(Clone, Debug)]
pub struct CoveringTrace {
    /// Smallest n with T^n(arc) the full circle; None if n_max steps were
    /// exhausted first (a bounded-search outcome, not an error).
    pub cover_time: Option<u32>,
    /// lengths[k] is the image length after k steps; lengths[0] the input.
    pub lengths: Vec<f64>,
}

/// Iterate an arc until its image covers the circle, at most n_max steps.
pub fn covering_time<M: CircleMap>(map: &M, arc: &Arc, n_max: u32) -> CoveringTrace {
    let mut lengths = Vec::with_capacity((n_max as usize + 1).min(1 << 20));
    lengths.push(arc.length());
    let mut cur = *arc;
    if cur.is_full() {
        return CoveringTrace {
            cover_time: Some(0),
            lengths,
        };
    }
    for n in 1..=n_max {
        cur = interval_image(map, &cur);
        lengths.push(cur.length());
        if cur.is_full() {
            return CoveringTrace {
                cover_time: Some(n),
                lengths,
            };
        }
    }
    CoveringTrace {
        cover_time: None,
        lengths,
    }
}
