//! Entropy estimates and the constants that back the convergence arguments:
//! entropy-formula residuals, bounded-distortion constants, expansion-gap
//! margins, and the diameter decay of refined itinerary partitions.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::circle::{Arc, CirclePoint};
use crate::dynamics::CircleMap;
use crate::measures::MeasureRef;
use crate::perturbation::{Mode, RandomSystem};
use crate::quadrature::gauss_legendre;
use crate::sampling::SeedPolicy;
use crate::transfer::GridMeasure;
use crate::{Error, Result};

pub const DEFAULT_N_OMEGA: usize = 32;

/// Word-count guard: k^n_max must stay at or below 2^24.
const WORD_BUDGET: f64 = 24.0 * std::f64::consts::LN_2;
/// Dense count tables up to this many words; hash maps beyond.
const DENSE_COUNT_LIMIT: u64 = 1 << 20;
const DISTORTION_GRID: usize = 64;
const GAP_T_GRID: usize = 64;
const GAP_D_GRID: usize = 256;
const PROBE_POINTS: usize = 1 << 20;

/// Plug-in block entropies H_n/n of itinerary words, averaged over drawn
/// parameter sequences.
#[derive(Clone, Debug)]
pub struct EntropyEstimate {
    pub k_cells: usize,
    /// Doubling ladder 1, 2, 4, ... capped by (and always ending at) n_max.
    pub block_lengths: Vec<u32>,
    /// H_n / n per block length.
    pub h_values: Vec<f64>,
    /// Across-sequence standard errors; zero when only one sequence ran.
    pub h_std_errors: Vec<f64>,
    pub samples_per_block: u64,
    /// Blocks with fewer than 10 k^n samples. Their estimates are returned
    /// but must not be trusted on their own.
    pub undersampled: Vec<bool>,
}

impl EntropyEstimate {
    /// Best available rate: the smallest H_n/n among well-sampled blocks
    /// (block entropies overestimate the rate, so smaller is better). Falls
    /// back to the overall minimum, flagged, when every block is starved.
    pub fn rate(&self) -> (f64, bool) {
        let mut best = f64::INFINITY;
        for (i, &h) in self.h_values.iter().enumerate() {
            if !self.undersampled[i] && h < best {
                best = h;
            }
        }
        if best.is_finite() {
            return (best, false);
        }
        for &h in &self.h_values {
            best = best.min(h);
        }
        (best, true)
    }
}

fn doubling_blocks(n_max: u32) -> Vec<u32> {
    let mut ns = Vec::new();
    let mut n = 1;
    while n <= n_max {
        ns.push(n);
        n *= 2;
    }
    if *ns.last().unwrap() != n_max {
        ns.push(n_max);
    }
    ns
}

enum Counts {
    Dense(Vec<u32>),
    Sparse(HashMap<u64, u32>),
}

impl Counts {
    fn with_capacity_for(n_words: u64) -> Counts {
        if n_words <= DENSE_COUNT_LIMIT {
            Counts::Dense(vec![0; n_words as usize])
        } else {
            Counts::Sparse(HashMap::new())
        }
    }

    fn bump(&mut self, word: u64) {
        match self {
            Counts::Dense(v) => v[word as usize] += 1,
            Counts::Sparse(m) => *m.entry(word).or_insert(0) += 1,
        }
    }

    /// Plug-in entropy with the Miller-Madow correction (m - 1) / (2 S).
    fn entropy(&self, samples: u64) -> f64 {
        let s = samples as f64;
        let mut sum = 0.0;
        let mut occupied = 0u64;
        let mut tally = |c: u32| {
            if c > 0 {
                let cf = c as f64;
                sum += cf * cf.ln();
                occupied += 1;
            }
        };
        match self {
            Counts::Dense(v) => v.iter().for_each(|&c| tally(c)),
            Counts::Sparse(m) => m.values().for_each(|&c| tally(c)),
        }
        s.ln() - sum / s + occupied.saturating_sub(1) as f64 / (2.0 * s)
    }
}

enum SourceSampler<'a> {
    Zero,
    Bootstrap(&'a [f64]),
    Cells { cum: Vec<f64> },
}

impl<'a> SourceSampler<'a> {
    fn build(source: MeasureRef<'a>) -> SourceSampler<'a> {
        match source {
            MeasureRef::DiracZero => SourceSampler::Zero,
            MeasureRef::Empirical(e) => SourceSampler::Bootstrap(e.samples()),
            MeasureRef::Grid(g) => {
                let mut cum = Vec::with_capacity(g.n_cells());
                let mut acc = 0.0;
                for &w in g.weights() {
                    acc += w;
                    cum.push(acc);
                }
                SourceSampler::Cells { cum }
            }
        }
    }

    fn draw<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match self {
            SourceSampler::Zero => 0.0,
            SourceSampler::Bootstrap(xs) => {
                let i = (rng.gen::<f64>() * xs.len() as f64) as usize;
                xs[i.min(xs.len() - 1)]
            }
            SourceSampler::Cells { cum } => {
                let u = rng.gen::<f64>();
                let j = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                (j as f64 + rng.gen::<f64>()) / cum.len() as f64
            }
        }
    }
}

fn symbol(x: CirclePoint, k_cells: usize) -> u64 {
    (((x.value() * k_cells as f64) as usize).min(k_cells - 1)) as u64
}

/// Estimate H_n/n over itinerary words of the partition into k equal arcs.
///
/// Each of the n_omega parameter sequences is drawn once, then `samples`
/// start points drawn from `source` are itinerated under that fixed
/// sequence; the block entropies are averaged across sequences.
pub fn block_entropy(
    system: &RandomSystem,
    source: MeasureRef,
    k_cells: usize,
    n_max: u32,
    n_omega: usize,
    samples: u64,
    policy: SeedPolicy,
) -> Result<EntropyEstimate> {
    if k_cells < 2 {
        return Err(Error::Parameter {
            name: "k_cells",
            value: k_cells as f64,
            require: ">= 2",
        });
    }
    if n_max < 1 || n_max > 24 {
        return Err(Error::Parameter {
            name: "n_max",
            value: n_max as f64,
            require: "1 <= n_max <= 24",
        });
    }
    if n_max as f64 * (k_cells as f64).ln() > WORD_BUDGET + 1e-9 {
        return Err(Error::Parameter {
            name: "k_cells^n_max",
            value: (k_cells as f64).powi(n_max as i32),
            require: "<= 2^24 distinct words",
        });
    }
    if n_omega < 1 {
        return Err(Error::Parameter {
            name: "n_omega",
            value: 0.0,
            require: ">= 1",
        });
    }
    if samples < 1 {
        return Err(Error::EmptySamples);
    }

    let blocks = doubling_blocks(n_max);
    let per_omega: Vec<Result<Vec<f64>>> = (0..n_omega)
        .into_par_iter()
        .map(|w| {
            let mut rng = policy.stream(w as u64);
            let draws: Vec<f64> = (0..n_max)
                .map(|_| system.kernel().sample(&mut rng))
                .collect();
            let sampler = SourceSampler::build(source);
            let mut counts: Vec<Counts> = blocks
                .iter()
                .map(|&n| Counts::with_capacity_for((k_cells as u64).pow(n)))
                .collect();
            for _ in 0..samples {
                let mut x = CirclePoint::wrap(sampler.draw(&mut rng));
                let mut word = 0u64;
                let mut bi = 0;
                for j in 0..n_max {
                    word = word * k_cells as u64 + symbol(x, k_cells);
                    if bi < blocks.len() && blocks[bi] == j + 1 {
                        counts[bi].bump(word);
                        bi += 1;
                    }
                    if j + 1 < n_max {
                        x = system.step(x, draws[j as usize])?;
                    }
                }
            }
            Ok(blocks
                .iter()
                .zip(&counts)
                .map(|(&n, c)| c.entropy(samples) / n as f64)
                .collect())
        })
        .collect();

    let mut rows = Vec::with_capacity(n_omega);
    for r in per_omega {
        rows.push(r?);
    }
    let mut h_values = Vec::with_capacity(blocks.len());
    let mut h_std_errors = Vec::with_capacity(blocks.len());
    for b in 0..blocks.len() {
        let mean = rows.iter().map(|v| v[b]).sum::<f64>() / n_omega as f64;
        let se = if n_omega > 1 {
            let var = rows.iter().map(|v| (v[b] - mean).powi(2)).sum::<f64>()
                / (n_omega - 1) as f64;
            (var / n_omega as f64).sqrt()
        } else {
            0.0
        };
        h_values.push(mean);
        h_std_errors.push(se);
    }
    let undersampled = blocks
        .iter()
        .map(|&n| (samples as f64) < 10.0 * (k_cells as f64).powi(n as i32))
        .collect();

    Ok(EntropyEstimate {
        k_cells,
        block_lengths: blocks,
        h_values,
        h_std_errors,
        samples_per_block: samples,
        undersampled,
    })
}

/// The folded entropy-formula right-hand side: the double integral of
/// log f_t'(x) over mu(dx) and the noise kernel. Additive shifts and the
/// doubling family have draw-independent derivatives, so the t-quadrature
/// collapses exactly for them.
pub fn pesin_rhs(system: &RandomSystem, mu: &GridMeasure) -> Result<f64> {
    let kernel = system.kernel();
    let nodes: Vec<(f64, f64)> = if kernel.is_degenerate() {
        vec![(kernel.support().0, 1.0)]
    } else {
        let (lo, hi) = kernel.support();
        gauss_legendre(16, lo, hi)
            .into_iter()
            .map(|(t, w)| (t, w / (hi - lo)))
            .collect()
    };
    let n = mu.n_cells() as f64;
    let mut total = 0.0;
    for (t, wt) in nodes {
        let map = system.map_at(t)?;
        let mut inner = 0.0;
        for (j, &w) in mu.weights().iter().enumerate() {
            if w > 0.0 {
                inner += w * map.derivative((j as f64 + 0.5) / n).ln();
            }
        }
        total += wt * inner;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "entropy-formula integral",
        });
    }
    Ok(total)
}

/// Two sides of the random entropy formula next to each other.
#[derive(Clone, Copy, Debug)]
pub struct PesinReport {
    pub entropy_rate: f64,
    pub rhs: f64,
    pub residual: f64,
    /// True when the rate had to be read off an undersampled block.
    pub undersampled: bool,
}

pub fn pesin_residual(
    system: &RandomSystem,
    mu: &GridMeasure,
    entropy: &EntropyEstimate,
) -> Result<PesinReport> {
    let (rate, flagged) = entropy.rate();
    let rhs = pesin_rhs(system, mu)?;
    Ok(PesinReport {
        entropy_rate: rate,
        rhs,
        residual: (rate - rhs).abs(),
        undersampled: flagged,
    })
}

/// Distortion bound of a composition along one interval.
#[derive(Clone, Debug)]
pub struct DistortionReport {
    pub interval: Arc,
    pub depth: usize,
    /// exp of the largest spread of log-derivative sums over the interval;
    /// always >= 1, exactly 1 for affine maps or an empty composition.
    pub constant: f64,
}

/// Ratio bound for the derivative of maps[k-1] o ... o maps[0] between any
/// two points of `interval`, provided every intermediate interval stays in
/// [r, 1 - r]. A breach of that confinement is an error naming the step
/// (step 0 is the input interval itself).
pub fn distortion_constant<M: CircleMap>(
    maps: &[M],
    interval: &Arc,
    r: f64,
) -> Result<DistortionReport> {
    if !r.is_finite() || r <= 0.0 || r >= 0.5 {
        return Err(Error::Parameter {
            name: "r",
            value: r,
            require: "0 < r < 1/2",
        });
    }
    if interval.length() <= 0.0 || interval.is_full() {
        return Err(Error::Parameter {
            name: "interval length",
            value: interval.length(),
            require: "0 < length < 1",
        });
    }
    // Confinement to [r, 1 - r] rules out wrapping, so endpoints live on the
    // line and the strictly increasing lift tracks them exactly.
    let mut a = interval.start().value();
    let mut b = a + interval.length();
    if a < r || b > 1.0 - r {
        let x = if a < r { a } else { b };
        return Err(Error::DistortionHypothesis {
            step: 0,
            x,
            lo: r,
            hi: 1.0 - r,
        });
    }

    let mut xs: Vec<f64> = (0..=DISTORTION_GRID)
        .map(|i| a + (b - a) * i as f64 / DISTORTION_GRID as f64)
        .collect();
    let mut logs = vec![0.0; xs.len()];

    for (step, map) in maps.iter().enumerate() {
        let la = map.lift(a);
        let lb = map.lift(b);
        let base = la.floor();
        let (na, nb) = (la - base, lb - base);
        if na < r || nb > 1.0 - r {
            let x = if na < r { na } else { nb };
            return Err(Error::DistortionHypothesis {
                step: step + 1,
                x,
                lo: r,
                hi: 1.0 - r,
            });
        }
        for (x, l) in xs.iter_mut().zip(logs.iter_mut()) {
            *l += map.derivative(*x).ln();
            // The whole interval shares the lift branch of its endpoints.
            *x = map.lift(*x) - base;
        }
        a = na;
        b = nb;
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &l in &logs {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    Ok(DistortionReport {
        interval: *interval,
        depth: maps.len(),
        constant: (hi - lo).exp(),
    })
}

/// Worst-case one-step gain of separation for pairs at distance in
/// [delta0, rho0] whose second point stays delta0 away from 0.
#[derive(Clone, Copy, Debug)]
pub struct GapReport {
    pub delta0: f64,
    pub rho0: f64,
    /// min over scanned (t, x, y) of d(f_t x, f_t y) - d(x, y).
    pub beta: f64,
    /// (t, x, y) attaining the minimum.
    pub witness: (f64, f64, f64),
}

/// Grid minimization of the separation gain. Additive draws rotate both
/// image points together and cancel in the distance, so those modes are
/// scanned with a single representative draw; parametric systems get a
/// draw grid across the kernel support.
pub fn expansion_gap(
    system: &RandomSystem,
    delta0: f64,
    rho0: f64,
    x_grid: usize,
) -> Result<GapReport> {
    if !(delta0.is_finite() && rho0.is_finite()) || delta0 <= 0.0 || delta0 >= rho0 || rho0 > 0.25
    {
        return Err(Error::Parameter {
            name: "delta0, rho0",
            value: delta0,
            require: "0 < delta0 < rho0 <= 1/4",
        });
    }
    if x_grid < 16 {
        return Err(Error::Parameter {
            name: "x_grid",
            value: x_grid as f64,
            require: ">= 16",
        });
    }
    let (lo, hi) = system.kernel().support();
    let ts: Vec<f64> = match system.mode() {
        Mode::Parametric if !system.kernel().is_degenerate() => (0..GAP_T_GRID)
            .map(|i| lo + (hi - lo) * i as f64 / (GAP_T_GRID - 1) as f64)
            .collect(),
        _ => vec![0.5 * (lo + hi)],
    };
    let maps: Vec<_> = ts
        .iter()
        .map(|&t| system.map_at(t).map(|m| (t, m)))
        .collect::<Result<Vec<_>>>()?;

    // Per-x row minima in parallel, folded in x order so the witness of a
    // tie is scan-order deterministic.
    let rows: Vec<Option<(f64, (f64, f64, f64))>> = (0..x_grid)
        .into_par_iter()
        .map(|xi| {
            let x = CirclePoint::wrap(xi as f64 / x_grid as f64);
            let mut best: Option<(f64, (f64, f64, f64))> = None;
            for (t, map) in &maps {
                let fx = map.apply(x).0;
                for di in 0..=GAP_D_GRID {
                    let d = delta0 + (rho0 - delta0) * di as f64 / GAP_D_GRID as f64;
                    for sign in [1.0, -1.0] {
                        let y = CirclePoint::wrap(x.value() + sign * d);
                        if y.dist_to_zero() < delta0 {
                            continue;
                        }
                        let sep = x.dist(y);
                        let fy = map.apply(y).0;
                        let gain = fx.dist(fy) - sep;
                        if best.map_or(true, |(b, _)| gain < b) {
                            best = Some((gain, (*t, x.value(), y.value())));
                        }
                    }
                }
            }
            best
        })
        .collect();

    let mut best: Option<(f64, (f64, f64, f64))> = None;
    for row in rows.into_iter().flatten() {
        if best.map_or(true, |(b, _)| row.0 < b) {
            best = Some(row);
        }
    }
    match best {
        Some((beta, witness)) => Ok(GapReport {
            delta0,
            rho0,
            beta,
            witness,
        }),
        None => Err(Error::EmptyGapSearch {
            detail: format!(
                "no pair with separation in [{delta0}, {rho0}] clears the excluded ball"
            ),
        }),
    }
}

/// Largest atom diameter of the n-fold refined itinerary partition along
/// one drawn parameter sequence, probed on 2^20 circle points.
///
/// Every atom sits inside a single cell of the base partition (its first
/// symbol pins that cell), so diameters are plain coordinate spreads and
/// no wraparound bookkeeping is needed.
pub fn partition_diameter(
    system: &RandomSystem,
    k_cells: usize,
    n: u32,
    policy: SeedPolicy,
    stream: u64,
) -> Result<f64> {
    if k_cells < 2 {
        return Err(Error::Parameter {
            name: "k_cells",
            value: k_cells as f64,
            require: ">= 2",
        });
    }
    if n > 24 {
        return Err(Error::Parameter {
            name: "n",
            value: n as f64,
            require: "<= 24",
        });
    }
    if (n + 1) as f64 * (k_cells as f64).ln() > 63.0 * std::f64::consts::LN_2 {
        return Err(Error::Parameter {
            name: "k_cells^(n+1)",
            value: f64::INFINITY,
            require: "words must fit in 64 bits",
        });
    }
    if n == 0 {
        // Base partition: k equal arcs.
        return Ok(1.0 / k_cells as f64);
    }
    let mut rng = policy.stream(stream);
    let draws: Vec<f64> = (0..n).map(|_| system.kernel().sample(&mut rng)).collect();

    let words: Vec<u64> = (0..PROBE_POINTS)
        .into_par_iter()
        .map(|i| {
            let mut x = CirclePoint::wrap((i as f64 + 0.5) / PROBE_POINTS as f64);
            let mut word = 0u64;
            for j in 0..=n as usize {
                word = word * k_cells as u64 + symbol(x, k_cells);
                if j < n as usize {
                    x = system.step(x, draws[j])?;
                }
            }
            Ok(word)
        })
        .collect::<Result<Vec<u64>>>()?;

    // Consecutive equal words form probe runs; an atom's diameter is the
    // spread between its leftmost and rightmost run inside its base cell.
    let h = 1.0 / PROBE_POINTS as f64;
    let mut extent: HashMap<u64, (f64, f64)> = HashMap::new();
    let mut i = 0;
    while i < words.len() {
        let w = words[i];
        let start = i;
        while i < words.len() && words[i] == w {
            i += 1;
        }
        let left = start as f64 * h;
        let right = i as f64 * h;
        extent
            .entry(w)
            .and_modify(|e| {
                e.0 = e.0.min(left);
                e.1 = e.1.max(right);
            })
            .or_insert((left, right));
    }
    Ok(extent
        .values()
        .map(|&(l, r)| r - l)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{saddle_sequence, DoublingMap};
    use crate::perturbation::NoiseKernel;

    fn doubling_system(eps: f64) -> RandomSystem {
        RandomSystem::doubling(NoiseKernel::uniform(eps).unwrap()).unwrap()
    }

    #[test]
    fn doubling_block_entropy_sits_at_log_two() {
        let sys = doubling_system(1e-3);
        let uniform = GridMeasure::uniform(512);
        let est = block_entropy(
            &sys,
            MeasureRef::Grid(&uniform),
            2,
            4,
            2,
            4096,
            SeedPolicy::new(3),
        )
        .unwrap();
        assert_eq!(est.block_lengths, vec![1, 2, 4]);
        assert_eq!(est.undersampled, vec![false, false, false]);
        for (&n, &h) in est.block_lengths.iter().zip(&est.h_values) {
            assert!(
                (h - std::f64::consts::LN_2).abs() < 0.03,
                "H_{n}/{n} = {h}"
            );
        }
        let (rate, flagged) = est.rate();
        assert!(!flagged);
        assert!(rate <= est.h_values[0] + 1e-15);
    }

    #[test]
    fn frozen_orbit_has_zero_entropy() {
        // Degenerate draw 0 keeps the intermittent fixed point at 0 frozen;
        // every itinerary is the constant word.
        let sys =
            RandomSystem::additive(1.0, NoiseKernel::degenerate(0.0).unwrap()).unwrap();
        let est = block_entropy(
            &sys,
            MeasureRef::DiracZero,
            2,
            4,
            1,
            512,
            SeedPolicy::new(0),
        )
        .unwrap();
        for &h in &est.h_values {
            assert_eq!(h, 0.0);
        }
    }

    #[test]
    fn starved_blocks_are_flagged_not_hidden() {
        let sys = doubling_system(1e-3);
        let uniform = GridMeasure::uniform(64);
        let est = block_entropy(
            &sys,
            MeasureRef::Grid(&uniform),
            2,
            4,
            1,
            50,
            SeedPolicy::new(1),
        )
        .unwrap();
        assert_eq!(est.undersampled, vec![false, false, true]);
        let (_, flagged) = est.rate();
        assert!(!flagged, "well-sampled blocks exist, rate must use them");
    }

    #[test]
    fn entropy_guards_reject_word_explosions() {
        let sys = doubling_system(1e-3);
        let uniform = GridMeasure::uniform(64);
        assert!(block_entropy(
            &sys,
            MeasureRef::Grid(&uniform),
            64,
            8,
            1,
            100,
            SeedPolicy::new(0),
        )
        .is_err());
        assert!(block_entropy(
            &sys,
            MeasureRef::Grid(&uniform),
            2,
            25,
            1,
            100,
            SeedPolicy::new(0),
        )
        .is_err());
    }

    #[test]
    fn pesin_rhs_doubling_is_log_two() {
        let sys = doubling_system(0.01);
        let mu = GridMeasure::uniform(128);
        let rhs = pesin_rhs(&sys, &mu).unwrap();
        assert!((rhs - std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn pesin_rhs_of_the_near_zero_atom_is_small_and_positive() {
        let sys =
            RandomSystem::additive(0.5, NoiseKernel::uniform(0.01).unwrap()).unwrap();
        let mu = GridMeasure::dirac_cell(4096, 0);
        let rhs = pesin_rhs(&sys, &mu).unwrap();
        // Derivative at the cell midpoint 1/8192; draw-independent.
        let expected = (1.0 + 2f64.powf(0.5) * 1.5 * (1.0f64 / 8192.0).powf(0.5)).ln();
        assert!((rhs - expected).abs() < 1e-12, "rhs = {rhs}");
        assert!(rhs > 0.0 && rhs < 0.03);
    }

    #[test]
    fn doubling_residual_closes() {
        let sys = doubling_system(1e-3);
        let uniform = GridMeasure::uniform(512);
        let est = block_entropy(
            &sys,
            MeasureRef::Grid(&uniform),
            2,
            8,
            2,
            100_000,
            SeedPolicy::new(9),
        )
        .unwrap();
        let report = pesin_residual(&sys, &uniform, &est).unwrap();
        assert!(!report.undersampled);
        assert!(
            report.residual <= 0.05 * std::f64::consts::LN_2,
            "residual = {}",
            report.residual
        );
    }

    #[test]
    fn affine_distortion_is_exactly_one() {
        let maps = vec![DoublingMap, DoublingMap, DoublingMap];
        let arc = Arc::new(CirclePoint::wrap(0.3), 0.01).unwrap();
        let rep = distortion_constant(&maps, &arc, 0.05).unwrap();
        assert_eq!(rep.constant, 1.0);
        assert_eq!(rep.depth, 3);

        let rep0 = distortion_constant(&[] as &[DoublingMap], &arc, 0.05).unwrap();
        assert_eq!(rep0.constant, 1.0);
    }

    #[test]
    fn distortion_confinement_breach_names_the_step() {
        let maps = vec![DoublingMap, DoublingMap];
        let arc = Arc::new(CirclePoint::wrap(0.45), 0.1).unwrap();
        match distortion_constant(&maps, &arc, 0.05).unwrap_err() {
            Error::DistortionHypothesis { step, .. } => assert_eq!(step, 1),
            e => panic!("wrong error: {e}"),
        }
    }

    #[test]
    fn saddle_distortion_grows_with_depth() {
        let draws = [0.9, 0.905, 0.91, 0.9177, 0.9];
        let maps = saddle_sequence(0.5, &draws).unwrap();
        let arc = Arc::new(CirclePoint::wrap(0.3), 0.01).unwrap();
        let deep = distortion_constant(&maps, &arc, 0.05).unwrap();
        let shallow = distortion_constant(&maps[..3], &arc, 0.05).unwrap();
        assert!(deep.constant >= 1.0 && deep.constant.is_finite());
        assert!(shallow.constant <= deep.constant + 1e-12);
    }

    #[test]
    fn doubling_gap_is_delta0() {
        let sys = doubling_system(0.01);
        let rep = expansion_gap(&sys, 0.05, 0.2, 256).unwrap();
        // Distances at most 1/4 exactly double, so the worst gain is the
        // smallest admissible separation.
        assert!((rep.beta - 0.05).abs() < 1e-9, "beta = {}", rep.beta);
        assert_eq!(rep.delta0, 0.05);
    }

    #[test]
    fn intermittent_gap_is_positive_away_from_zero() {
        let sys =
            RandomSystem::additive(1.0, NoiseKernel::degenerate(0.0).unwrap()).unwrap();
        let rep = expansion_gap(&sys, 0.1, 0.25, 256).unwrap();
        assert!(rep.beta > 0.0, "beta = {}", rep.beta);
    }

    #[test]
    fn gap_preconditions() {
        let sys = doubling_system(0.01);
        assert!(expansion_gap(&sys, 0.2, 0.1, 64).is_err());
        assert!(expansion_gap(&sys, 0.1, 0.3, 64).is_err());
        assert!(expansion_gap(&sys, 0.05, 0.2, 4).is_err());
    }

    #[test]
    fn diameter_of_dyadic_refinements() {
        let sys =
            RandomSystem::doubling(NoiseKernel::degenerate(0.0).unwrap()).unwrap();
        let policy = SeedPolicy::new(0);
        assert_eq!(partition_diameter(&sys, 2, 0, policy, 0).unwrap(), 0.5);
        let d3 = partition_diameter(&sys, 2, 3, policy, 0).unwrap();
        assert!((d3 - 1.0 / 16.0).abs() < 2e-6, "d3 = {d3}");
        let d5 = partition_diameter(&sys, 2, 5, policy, 0).unwrap();
        assert!(d5 <= d3);
        let d3k4 = partition_diameter(&sys, 4, 3, policy, 0).unwrap();
        assert!(d3k4 <= d3 + 1e-12);
    }
}
