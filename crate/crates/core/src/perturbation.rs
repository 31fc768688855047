//! Noise kernels and the randomly perturbed step.
//!
//! Two perturbation modes over the same circle families:
//! additive, x -> T(x) + t mod 1 with t drawn from a kernel inside
//! [-1/2, 1/2], and parametric, x -> f_t(x) with the kernel inside (0, 1].
//! A seeded draw stream stands in for the driving sequence: one kernel draw
//! per step, nothing else consumes randomness.

use rand::Rng;

use crate::circle::CirclePoint;
use crate::dynamics::{CircleMap, DoublingMap, IntermittentMap, SaddleNodeMap};
use crate::{Error, Result};

/// Uniform noise law on [lo, hi], plus a width-zero degenerate variant that
/// realizes the zero-noise limit as draw == center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseKernel {
    lo: f64,
    hi: f64,
}

impl NoiseKernel {
    /// Uniform on [-eps, eps].
    pub fn uniform(eps: f64) -> Result<Self> {
        if !eps.is_finite() || eps <= 0.0 {
            return Err(Error::Parameter {
                name: "eps",
                value: eps,
                require: "finite and > 0",
            });
        }
        Ok(NoiseKernel { lo: -eps, hi: eps })
    }

    /// Uniform on [lo, hi].
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::Parameter {
                name: "kernel support",
                value: hi - lo,
                require: "finite lo < hi",
            });
        }
        Ok(NoiseKernel { lo, hi })
    }

    /// Point mass at center. Has an atom, so it is only admitted where the
    /// deterministic limit is meant: orbits, never annealed assembly.
    pub fn degenerate(center: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::NonFinite {
                context: "degenerate kernel center",
            });
        }
        Ok(NoiseKernel {
            lo: center,
            hi: center,
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn density(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return if x == self.lo { f64::INFINITY } else { 0.0 };
        }
        if x >= self.lo && x <= self.hi {
            1.0 / self.width()
        } else {
            0.0
        }
    }

    /// Distribution function; clamped to [0, 1] outside the support.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return if x < self.lo { 0.0 } else { 1.0 };
        }
        ((x - self.lo) / self.width()).clamp(0.0, 1.0)
    }

    /// Inverse distribution function on [0, 1).
    pub fn quantile(&self, q: f64) -> f64 {
        self.lo + q * self.width()
    }

    /// One draw. Consumes exactly one uniform variate, degenerate or not,
    /// so seeds stay aligned across noise widths.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }
}

/// Which family the draws feed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// x -> T(x) + t mod 1.
    Additive,
    /// x -> f_t(x).
    Parametric,
    /// x -> 2x + t mod 1, the affine reference system.
    AdditiveDoubling,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Additive => "additive",
            Mode::Parametric => "parametric",
            Mode::AdditiveDoubling => "doubling",
        }
    }
}

#[derive(Clone, Debug)]
enum Inner {
    Additive(IntermittentMap),
    Parametric { alpha: f64, pow2a: f64 },
    Doubling,
}

/// A family plus a noise kernel: the Markov chain x_{n+1} = step(x_n, t_n)
/// with t_n independent kernel draws.
#[derive(Clone, Debug)]
pub struct RandomSystem {
    inner: Inner,
    kernel: NoiseKernel,
}

impl RandomSystem {
    pub fn additive(alpha: f64, kernel: NoiseKernel) -> Result<Self> {
        let (lo, hi) = kernel.support();
        if lo < -0.5 || hi > 0.5 {
            return Err(Error::Parameter {
                name: "additive kernel support",
                value: lo.abs().max(hi.abs()),
                require: "within [-1/2, 1/2]",
            });
        }
        Ok(RandomSystem {
            inner: Inner::Additive(IntermittentMap::new(alpha)?),
            kernel,
        })
    }

    pub fn parametric(alpha: f64, kernel: NoiseKernel) -> Result<Self> {
        crate::dynamics::fixed_source(alpha, 0.5).map(drop)?; // validates alpha
        let (lo, hi) = kernel.support();
        if lo <= 0.0 || hi > 1.0 {
            return Err(Error::Parameter {
                name: "parametric kernel support",
                value: if lo <= 0.0 { lo } else { hi },
                require: "within (0, 1]",
            });
        }
        Ok(RandomSystem {
            inner: Inner::Parametric {
                alpha,
                pow2a: 2f64.powf(alpha),
            },
            kernel,
        })
    }

    pub fn doubling(kernel: NoiseKernel) -> Result<Self> {
        let (lo, hi) = kernel.support();
        if lo < -0.5 || hi > 0.5 {
            return Err(Error::Parameter {
                name: "additive kernel support",
                value: lo.abs().max(hi.abs()),
                require: "within [-1/2, 1/2]",
            });
        }
        Ok(RandomSystem {
            inner: Inner::Doubling,
            kernel,
        })
    }

    pub fn mode(&self) -> Mode {
        match self.inner {
            Inner::Additive(_) => Mode::Additive,
            Inner::Parametric { .. } => Mode::Parametric,
            Inner::Doubling => Mode::AdditiveDoubling,
        }
    }

    pub fn kernel(&self) -> &NoiseKernel {
        &self.kernel
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.inner {
            Inner::Additive(map) => Some(map.alpha()),
            Inner::Parametric { alpha, .. } => Some(alpha),
            Inner::Doubling => None,
        }
    }

    /// The map applied when the draw equals t.
    pub fn map_at(&self, t: f64) -> Result<Box<dyn CircleMap + Send + Sync>> {
        if !self.kernel.contains(t) {
            let (lo, hi) = self.kernel.support();
            return Err(Error::DrawOutsideSupport { draw: t, lo, hi });
        }
        Ok(match self.inner {
            Inner::Additive(map) => Box::new(Shifted { map, shift: t }),
            Inner::Parametric { alpha, pow2a } => {
                Box::new(SaddleNodeMap::from_parts(alpha, pow2a, t))
            }
            Inner::Doubling => Box::new(Shifted {
                map: DoublingMap,
                shift: t,
            }),
        })
    }

    /// One step of the chain.
    pub fn step(&self, x: CirclePoint, draw: f64) -> Result<CirclePoint> {
        self.step_with_derivative(x, draw).map(|(y, _)| y)
    }

    /// One step plus the spatial derivative at the starting point.
    pub fn step_with_derivative(&self, x: CirclePoint, draw: f64) -> Result<(CirclePoint, f64)> {
        if !self.kernel.contains(draw) {
            let (lo, hi) = self.kernel.support();
            return Err(Error::DrawOutsideSupport { draw, lo, hi });
        }
        let v = x.value();
        Ok(match &self.inner {
            Inner::Additive(map) => (
                CirclePoint::wrap(map.lift(v) + draw),
                map.derivative(v),
            ),
            Inner::Parametric { alpha, pow2a } => {
                let map = SaddleNodeMap::from_parts(*alpha, *pow2a, draw);
                (CirclePoint::wrap(map.lift(v)), map.derivative(v))
            }
            Inner::Doubling => (CirclePoint::wrap(2.0 * v + draw), 2.0),
        })
    }

    /// Lift of the unshifted map in additive modes; None for parametric.
    pub(crate) fn base_lift(&self, x: f64) -> Option<f64> {
        match &self.inner {
            Inner::Additive(map) => Some(map.lift(x)),
            Inner::Doubling => Some(2.0 * x),
            Inner::Parametric { .. } => None,
        }
    }

    /// Parametric image height f_t(x) in [0, 1], taken branchwise so values
    /// hugging 1 are never wrapped to 0; None for additive modes.
    pub(crate) fn parametric_height(&self, x: f64, t: f64) -> Option<f64> {
        match &self.inner {
            Inner::Parametric { alpha, pow2a } => {
                let map = SaddleNodeMap::from_parts(*alpha, *pow2a, t);
                let base = if x < 0.5 { 0.0 } else { 1.0 };
                Some(map.lift(x) - base)
            }
            _ => None,
        }
    }

    /// Signed sensitivity of the image to the draw at fixed x. The step is
    /// affine in the draw in every mode, so this is exact, and it vanishes
    /// identically at the parametric degeneracies.
    pub fn draw_sensitivity(&self, x: f64) -> f64 {
        match &self.inner {
            Inner::Additive(_) | Inner::Doubling => 1.0,
            Inner::Parametric { alpha, .. } => {
                // d f_t(x) / dt = x (1 - (2x)^a) below 1/2, mirrored above.
                if x < 0.5 {
                    x * (1.0 - (2.0 * x).powf(*alpha))
                } else {
                    let y = 1.0 - x;
                    -(y * (1.0 - (2.0 * y).powf(*alpha)))
                }
            }
        }
    }
}

/// Base map followed by rotation, the additive-noise step at a fixed draw.
struct Shifted<M: CircleMap> {
    map: M,
    shift: f64,
}

impl<M: CircleMap> CircleMap for Shifted<M> {
    fn lift(&self, x: f64) -> f64 {
        self.map.lift(x) + self.shift
    }

    fn derivative(&self, x: f64) -> f64 {
        self.map.derivative(x)
    }
}

/// Image-ball geometry of the one-step random map, sampled over x.
#[derive(Clone, Debug)]
pub struct NondegeneracyReport {
    /// Smallest image-interval radius seen away from degenerate points.
    pub image_ball_radius: f64,
    /// True when the radius is bounded below uniformly in x (additive modes).
    pub uniformly_nondegenerate: bool,
    /// Draw-to-image pushforwards have densities (false for a degenerate
    /// kernel, which is a single atom).
    pub absolutely_continuous: bool,
    /// Sampled x where the whole parameter interval lands on one image point.
    pub degenerate_points: Vec<f64>,
}

const NONDEGENERACY_GRID: usize = 4096;

/// Survey how the noise spreads images. In additive modes every x receives
/// a full interval of radius half the kernel width. In parametric mode the
/// sensitivity x(1 - (2x)^a) vanishes at x = 0 and x = 1/2 (the whole family
/// sends 1/2 to 0), so the spread degenerates there and the report says so;
/// downstream users proceed anyway, which is the honest state of affairs.
pub fn nondegeneracy_report(system: &RandomSystem) -> NondegeneracyReport {
    let kernel = system.kernel();
    if kernel.is_degenerate() {
        return NondegeneracyReport {
            image_ball_radius: 0.0,
            uniformly_nondegenerate: false,
            absolutely_continuous: false,
            degenerate_points: Vec::new(),
        };
    }
    let half_width = 0.5 * kernel.width();
    match system.mode() {
        Mode::Additive | Mode::AdditiveDoubling => NondegeneracyReport {
            image_ball_radius: half_width,
            uniformly_nondegenerate: true,
            absolutely_continuous: true,
            degenerate_points: Vec::new(),
        },
        Mode::Parametric => {
            let mut degenerate = Vec::new();
            let mut min_radius = f64::INFINITY;
            // Half-open grid: 0 and 1 are the same circle point.
            for i in 0..NONDEGENERACY_GRID {
                let x = i as f64 / NONDEGENERACY_GRID as f64;
                let radius = system.draw_sensitivity(x).abs() * half_width;
                if radius == 0.0 {
                    degenerate.push(x);
                } else {
                    min_radius = min_radius.min(radius);
                }
            }
            NondegeneracyReport {
                image_ball_radius: min_radius,
                uniformly_nondegenerate: false,
                absolutely_continuous: true,
                degenerate_points: degenerate,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_cdf_pins_the_support() {
        let k = NoiseKernel::uniform(0.05).unwrap();
        assert_eq!(k.cdf(-0.05), 0.0);
        assert_eq!(k.cdf(0.05), 1.0);
        assert!((k.cdf(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(k.cdf(-1.0), 0.0);
        assert_eq!(k.cdf(1.0), 1.0);
        // Density integrates to one over the support.
        let n = 100_000;
        let dx = k.width() / n as f64;
        let total: f64 = (0..n)
            .map(|i| k.density(-0.05 + (i as f64 + 0.5) * dx) * dx)
            .sum();
        assert!((total - 1.0).abs() < 1e-10, "integral = {total}");
    }

    #[test]
    fn kernel_constructors_reject_bad_input() {
        assert!(NoiseKernel::uniform(0.0).is_err());
        assert!(NoiseKernel::uniform(-0.1).is_err());
        assert!(NoiseKernel::interval(0.5, 0.5).is_err());
        assert!(NoiseKernel::interval(0.9, 0.2).is_err());
        assert!(NoiseKernel::degenerate(f64::NAN).is_err());
    }

    #[test]
    fn sampler_matches_cdf_in_kolmogorov_smirnov() {
        let k = NoiseKernel::interval(0.9, 0.95).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| k.sample(&mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let mut ks: f64 = 0.0;
        for (i, &d) in draws.iter().enumerate() {
            assert!(k.contains(d), "draw {d} escaped the support");
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            let c = k.cdf(d);
            ks = ks.max((emp_hi - c).abs()).max((emp_lo - c).abs());
        }
        assert!(ks <= 0.01, "KS statistic {ks}");
    }

    #[test]
    fn additive_step_matches_shift_of_noiseless_step() {
        let sys = RandomSystem::additive(1.0, NoiseKernel::uniform(0.2).unwrap()).unwrap();
        let x = CirclePoint::wrap(0.25);
        let y = sys.step(x, 0.1).unwrap();
        assert!((y.value() - 0.475).abs() < 1e-15);
        // Equivariance: step(x, t) = step(x, 0) + t mod 1.
        for i in 0..100 {
            let x = CirclePoint::wrap(i as f64 / 100.0);
            let t = -0.2 + 0.4 * (i as f64 / 100.0);
            let shifted = sys.step(x, t).unwrap();
            let base = sys.step(x, 0.0).unwrap();
            let expect = CirclePoint::wrap(base.value() + t);
            assert!(shifted.dist(expect) < 1e-14);
        }
    }

    #[test]
    fn step_rejects_draws_outside_support() {
        let sys = RandomSystem::additive(1.0, NoiseKernel::uniform(0.1).unwrap()).unwrap();
        let err = sys.step(CirclePoint::wrap(0.3), 0.2).unwrap_err();
        assert!(matches!(err, Error::DrawOutsideSupport { .. }), "{err}");
    }

    #[test]
    fn system_constructors_enforce_support_ranges() {
        let wide = NoiseKernel::uniform(0.6).unwrap();
        assert!(RandomSystem::additive(1.0, wide).is_err());
        let neg = NoiseKernel::interval(-0.1, 0.5).unwrap();
        assert!(RandomSystem::parametric(0.5, neg).is_err());
        let above_one = NoiseKernel::interval(0.9, 1.1).unwrap();
        assert!(RandomSystem::parametric(0.5, above_one).is_err());
        let ok = NoiseKernel::interval(0.9, 0.95).unwrap();
        assert!(RandomSystem::parametric(0.5, ok).is_ok());
    }

    #[test]
    fn parametric_step_is_the_saddle_map() {
        let sys = RandomSystem::parametric(0.5, NoiseKernel::interval(0.3, 0.9).unwrap()).unwrap();
        let map = SaddleNodeMap::new(0.5, 0.5).unwrap();
        for i in 0..50 {
            let x = CirclePoint::wrap(i as f64 / 50.0);
            let (y, d) = sys.step_with_derivative(x, 0.5).unwrap();
            let (wy, wd) = map.apply(x);
            assert!(y.dist(wy) < 1e-15);
            assert!((d - wd).abs() < 1e-15);
        }
    }

    #[test]
    fn additive_report_is_uniform_with_radius_eps() {
        let sys = RandomSystem::additive(1.5, NoiseKernel::uniform(0.01).unwrap()).unwrap();
        let rep = nondegeneracy_report(&sys);
        assert_eq!(rep.image_ball_radius, 0.01);
        assert!(rep.uniformly_nondegenerate);
        assert!(rep.absolutely_continuous);
        assert!(rep.degenerate_points.is_empty());
    }

    #[test]
    fn parametric_report_flags_zero_and_half() {
        let sys = RandomSystem::parametric(0.5, NoiseKernel::interval(0.9, 0.95).unwrap()).unwrap();
        let rep = nondegeneracy_report(&sys);
        assert!(!rep.uniformly_nondegenerate);
        assert!(rep.absolutely_continuous);
        assert!(rep.degenerate_points.contains(&0.0));
        assert!(rep.degenerate_points.contains(&0.5));
        assert_eq!(rep.degenerate_points.len(), 2);
        assert!(rep.image_ball_radius > 0.0);
        // Away from the degeneracies the spread is honest: check x = 0.3.
        let radius = sys.draw_sensitivity(0.3).abs() * 0.025;
        assert!(radius > 0.0);
    }

    #[test]
    fn degenerate_kernel_drives_the_deterministic_orbit() {
        let sys = RandomSystem::additive(1.0, NoiseKernel::degenerate(0.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = sys.kernel();
        let draw = k.sample(&mut rng);
        assert_eq!(draw, 0.0);
        let y = sys.step(CirclePoint::wrap(0.25), draw).unwrap();
        assert!((y.value() - 0.375).abs() < 1e-15);
    }
}
