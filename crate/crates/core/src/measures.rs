//! Distances between stationary measures on the circle.
//!
//! The workhorse is the circular Wasserstein-1 distance. With F and G the
//! distribution functions of two probability measures lifted to [0, 1),
//!
//! ```text
//! W1 = min over c of integral_0^1 |F(x) - G(x) - c| dx,
//! ```
//!
//! and the minimizing c is a Lebesgue-weighted median of F - G. All measures
//! are reduced to weighted atoms first (grid cells contribute their midpoint,
//! samples contribute themselves), which makes the integral a finite sum and
//! the whole computation exact up to rounding.

use crate::circle::CirclePoint;
use crate::transfer::GridMeasure;
use crate::{Error, Result};

pub const DEFAULT_MASS_DELTA: f64 = 0.05;
pub const DEFAULT_T_GRID: usize = 101;

/// Raw sample cloud on the circle.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(samples: Vec<CirclePoint>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        Ok(EmpiricalMeasure {
            samples: samples.into_iter().map(CirclePoint::value).collect(),
        })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut samples = Vec::with_capacity(values.len());
        for v in values {
            samples.push(CirclePoint::new(v)?.value());
        }
        Ok(EmpiricalMeasure { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// A measure as the distance routines see it.
#[derive(Clone, Copy)]
pub enum MeasureRef<'a> {
    Grid(&'a GridMeasure),
    Empirical(&'a EmpiricalMeasure),
    /// The true point mass at 0 (not its cell-0 grid projection).
    DiracZero,
}

/// Histogram of a sample cloud on the standard n-cell grid.
pub fn grid_from_samples(samples: &EmpiricalMeasure, n_cells: usize) -> Result<GridMeasure> {
    if n_cells < 1 {
        return Err(Error::Parameter {
            name: "n_cells",
            value: n_cells as f64,
            require: ">= 1",
        });
    }
    let mut counts = vec![0.0f64; n_cells];
    let nf = n_cells as f64;
    for &x in samples.samples() {
        let j = ((x * nf) as usize).min(n_cells - 1);
        counts[j] += 1.0;
    }
    GridMeasure::from_unnormalized(counts)
}

fn atoms(m: MeasureRef) -> Vec<(f64, f64)> {
    match m {
        MeasureRef::DiracZero => vec![(0.0, 1.0)],
        MeasureRef::Grid(g) => {
            let n = g.n_cells() as f64;
            g.weights()
                .iter()
                .enumerate()
                .filter(|&(_, &w)| w > 0.0)
                .map(|(j, &w)| ((j as f64 + 0.5) / n, w))
                .collect()
        }
        MeasureRef::Empirical(e) => {
            let w = 1.0 / e.len() as f64;
            e.samples().iter().map(|&x| (x, w)).collect()
        }
    }
}

/// Exact circular W1 between two weighted atom lists.
fn w1_atoms(a: Vec<(f64, f64)>, b: Vec<(f64, f64)>) -> f64 {
    // Event list: position, jump of F_a - F_b there.
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(a.len() + b.len());
    events.extend(a.iter().map(|&(x, w)| (x, w)));
    events.extend(b.iter().map(|&(x, w)| (x, -w)));
    events.sort_by(|l, r| l.0.total_cmp(&r.0));

    // Piecewise-constant G = F_a - F_b between consecutive event positions,
    // with the closing segment wrapping past 1.
    let mut segments: Vec<(f64, f64)> = Vec::with_capacity(events.len());
    let mut g = 0.0;
    let mut idx = 0;
    while idx < events.len() {
        let pos = events[idx].0;
        while idx < events.len() && events[idx].0 == pos {
            g += events[idx].1;
            idx += 1;
        }
        let next_pos = if idx < events.len() {
            events[idx].0
        } else {
            events[0].0 + 1.0
        };
        segments.push((g, next_pos - pos));
    }

    // Lebesgue-weighted median of G minimizes the shifted integral.
    let mut by_level = segments.clone();
    by_level.sort_by(|l, r| l.0.total_cmp(&r.0));
    let mut cum = 0.0;
    let mut median = by_level[0].0;
    for &(level, len) in &by_level {
        cum += len;
        if cum >= 0.5 {
            median = level;
            break;
        }
    }

    segments
        .iter()
        .map(|&(level, len)| len * (level - median).abs())
        .sum()
}

/// Bring two measures onto comparable footing: nested grids are refined to
/// the finer one, samples paired with a grid are binned onto that grid.
fn reconcile<'a>(
    a: MeasureRef<'a>,
    b: MeasureRef<'a>,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    use MeasureRef::*;
    match (a, b) {
        (Grid(x), Grid(y)) if x.n_cells() != y.n_cells() => {
            let (fine, coarse, coarse_first) = if x.n_cells() > y.n_cells() {
                (x, y, false)
            } else {
                (y, x, true)
            };
            if fine.n_cells() % coarse.n_cells() != 0 {
                return Err(Error::GridNotNested {
                    fine: fine.n_cells(),
                    coarse: coarse.n_cells(),
                });
            }
            let refined = coarse.refine(fine.n_cells() / coarse.n_cells());
            let (ra, rb) = if coarse_first {
                (atoms(Grid(&refined)), atoms(Grid(fine)))
            } else {
                (atoms(Grid(fine)), atoms(Grid(&refined)))
            };
            Ok((ra, rb))
        }
        (Grid(g), Empirical(e)) => {
            let binned = grid_from_samples(e, g.n_cells())?;
            Ok((atoms(Grid(g)), atoms(Grid(&binned))))
        }
        (Empirical(e), Grid(g)) => {
            let binned = grid_from_samples(e, g.n_cells())?;
            Ok((atoms(Grid(&binned)), atoms(Grid(g))))
        }
        _ => Ok((atoms(a), atoms(b))),
    }
}

/// Circular Wasserstein-1 distance; always in [0, 1/2].
pub fn w1_circle(a: MeasureRef, b: MeasureRef) -> Result<f64> {
    let (aa, bb) = reconcile(a, b)?;
    Ok(w1_atoms(aa, bb))
}

/// Total variation on a common grid: half the l1 distance of the weights.
pub fn tv_grid(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    if a.n_cells() != b.n_cells() {
        return Err(Error::GridMismatch {
            left: a.n_cells(),
            right: b.n_cells(),
        });
    }
    Ok(0.5
        * a.weights()
            .iter()
            .zip(b.weights())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>())
}

/// Mass of the arc [1 - delta, 1) union [0, delta); grid cells cut by an
/// endpoint contribute proportionally to their overlap.
pub fn mass_near_zero(m: MeasureRef, delta: f64) -> Result<f64> {
    if !delta.is_finite() || delta <= 0.0 || delta > 0.5 {
        return Err(Error::Parameter {
            name: "delta",
            value: delta,
            require: "0 < delta <= 1/2",
        });
    }
    Ok(match m {
        MeasureRef::DiracZero => 1.0,
        MeasureRef::Empirical(e) => {
            let hits = e
                .samples()
                .iter()
                .filter(|&&x| x.min(1.0 - x) < delta)
                .count();
            hits as f64 / e.len() as f64
        }
        MeasureRef::Grid(g) => {
            let n = g.n_cells() as f64;
            let mut total = 0.0;
            for (j, &w) in g.weights().iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let l = j as f64 / n;
                let r = (j as f64 + 1.0) / n;
                let low = (r.min(delta) - l).max(0.0);
                let high = (r - l.max(1.0 - delta)).max(0.0);
                total += w * (low + high).min(r - l) / (r - l);
            }
            total
        }
    })
}

/// Nearest point of the mixture segment {t * dirac(cell 0) + (1 - t) * ref}.
#[derive(Clone, Copy, Debug)]
pub struct MixtureEstimate {
    pub t_weight: f64,
    pub distance: f64,
}

/// Scan the mixture weight on a uniform grid, then sharpen the winning
/// bracket by golden-section. W1 is convex in the mixture weight, so the
/// refinement is safe.
pub fn nearest_mixture(
    mu: &GridMeasure,
    reference: &GridMeasure,
    t_grid: usize,
) -> Result<MixtureEstimate> {
    if mu.n_cells() != reference.n_cells() {
        return Err(Error::GridMismatch {
            left: mu.n_cells(),
            right: reference.n_cells(),
        });
    }
    if t_grid < 11 {
        return Err(Error::Parameter {
            name: "t_grid",
            value: t_grid as f64,
            require: ">= 11",
        });
    }
    let eval = |t: f64| -> f64 {
        let mix = reference.mix_with_dirac_cell(t);
        w1_atoms(
            atoms(MeasureRef::Grid(mu)),
            atoms(MeasureRef::Grid(&mix)),
        )
    };
    let steps = t_grid - 1;
    let mut best_k = 0;
    let mut best_d = f64::INFINITY;
    for k in 0..=steps {
        let d = eval(k as f64 / steps as f64);
        if d < best_d {
            best_d = d;
            best_k = k;
        }
    }
    let mut lo = (best_k.saturating_sub(1)) as f64 / steps as f64;
    let mut hi = ((best_k + 1).min(steps)) as f64 / steps as f64;

    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..60 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = eval(x2);
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let d = eval(t);
    // The coarse scan already saw the global picture; keep whichever is best.
    if d <= best_d {
        Ok(MixtureEstimate {
            t_weight: t,
            distance: d,
        })
    } else {
        Ok(MixtureEstimate {
            t_weight: best_k as f64 / steps as f64,
            distance: best_d,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_to_uniform_is_one_quarter() {
        // Analytic value: integral of min(x, 1-x) dx = 1/4.
        let uniform = GridMeasure::uniform(4096);
        let d = w1_circle(MeasureRef::DiracZero, MeasureRef::Grid(&uniform)).unwrap();
        assert!((d - 0.25).abs() < 1e-12, "W1 = {d}");
    }

    #[test]
    fn two_diracs_realize_the_geodesic_distance() {
        let cases = [(0.2, 0.5, 0.3), (0.9, 0.1, 0.2), (0.0, 0.5, 0.5)];
        for (a, b, want) in cases {
            let ea = EmpiricalMeasure::from_values(vec![a]).unwrap();
            let eb = EmpiricalMeasure::from_values(vec![b]).unwrap();
            let d = w1_circle(MeasureRef::Empirical(&ea), MeasureRef::Empirical(&eb)).unwrap();
            assert!((d - want).abs() < 1e-15, "({a}, {b}): {d}");
            let d_rev = w1_circle(MeasureRef::Empirical(&eb), MeasureRef::Empirical(&ea)).unwrap();
            assert!((d - d_rev).abs() < 1e-15);
        }
    }

    #[test]
    fn w1_of_a_measure_with_itself_vanishes() {
        let g = GridMeasure::from_unnormalized(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = w1_circle(MeasureRef::Grid(&g), MeasureRef::Grid(&g)).unwrap();
        assert!(d < 1e-15);
    }

    #[test]
    fn tv_between_uniform_and_one_cell() {
        let n = 64;
        let u = GridMeasure::uniform(n);
        let d0 = GridMeasure::dirac_cell(n, 0);
        let tv = tv_grid(&u, &d0).unwrap();
        assert!((tv - (1.0 - 1.0 / n as f64)).abs() < 1e-14, "tv = {tv}");
    }

    #[test]
    fn tv_requires_matching_grids() {
        let a = GridMeasure::uniform(8);
        let b = GridMeasure::uniform(16);
        assert!(matches!(
            tv_grid(&a, &b).unwrap_err(),
            Error::GridMismatch { .. }
        ));
    }

    #[test]
    fn nested_grids_are_refined_not_rejected() {
        let a = GridMeasure::uniform(8);
        let b = GridMeasure::uniform(16);
        let d = w1_circle(MeasureRef::Grid(&a), MeasureRef::Grid(&b)).unwrap();
        // Same underlying measure seen at two resolutions.
        assert!(d <= 1.0 / 16.0 + 1e-12, "W1 = {d}");

        let c = GridMeasure::uniform(12);
        assert!(matches!(
            w1_circle(MeasureRef::Grid(&a), MeasureRef::Grid(&c)).unwrap_err(),
            Error::GridNotNested { .. }
        ));
    }

    #[test]
    fn mass_near_zero_on_uniform_is_twice_delta() {
        let u = GridMeasure::uniform(64);
        let m = mass_near_zero(MeasureRef::Grid(&u), 0.05).unwrap();
        assert!((m - 0.1).abs() < 1e-13, "mass = {m}");
        // Full half-circle arc captures everything.
        let m = mass_near_zero(MeasureRef::Grid(&u), 0.5).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_near_zero_counts_samples_on_both_sides() {
        let e = EmpiricalMeasure::from_values(vec![0.01, 0.99, 0.5, 0.04, 0.96, 0.3]).unwrap();
        let m = mass_near_zero(MeasureRef::Empirical(&e), 0.05).unwrap();
        assert!((m - 4.0 / 6.0).abs() < 1e-15);
        assert!(mass_near_zero(MeasureRef::Empirical(&e), 0.0).is_err());
        assert!(mass_near_zero(MeasureRef::Empirical(&e), 0.7).is_err());
    }

    #[test]
    fn nearest_mixture_recovers_a_planted_weight() {
        let n = 1024;
        let reference = GridMeasure::from_unnormalized(
            (0..n).map(|j| 1.0 + (j as f64 + 0.5) / n as f64).collect(),
        )
        .unwrap();
        let planted = reference.mix_with_dirac_cell(0.37);
        let est = nearest_mixture(&planted, &reference, 101).unwrap();
        assert!((est.t_weight - 0.37).abs() < 5e-3, "t = {}", est.t_weight);
        assert!(est.distance < 1e-6, "distance = {}", est.distance);
    }

    #[test]
    fn nearest_mixture_validates_inputs() {
        let a = GridMeasure::uniform(8);
        let b = GridMeasure::uniform(16);
        assert!(nearest_mixture(&a, &b, 101).is_err());
        assert!(nearest_mixture(&a, &a, 5).is_err());
    }

    #[test]
    fn histogram_reflects_sample_counts() {
        let e = EmpiricalMeasure::from_values(vec![0.1, 0.12, 0.7, 0.9999]).unwrap();
        let g = grid_from_samples(&e, 10).unwrap();
        assert!((g.weights()[1] - 0.5).abs() < 1e-15);
        assert!((g.weights()[7] - 0.25).abs() < 1e-15);
        assert!((g.weights()[9] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empirical_measure_rejects_empty_and_non_finite() {
        assert!(EmpiricalMeasure::from_values(vec![]).is_err());
        assert!(EmpiricalMeasure::from_values(vec![f64::NAN]).is_err());
    }
}
