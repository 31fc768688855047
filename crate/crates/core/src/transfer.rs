//! Ulam discretization of the annealed and deterministic transfer operators.
//!
//! The circle is split into n equal cells I_j = [j/n, (j+1)/n); cell 0 is the
//! canonical near-zero cell. The annealed matrix averages the one-step kernel
//! over the noise law,
//!
//! ```text
//! P[i][j] = (1/|I_i|) * integral over I_i of theta({t : step(x, t) in I_j}) dx,
//! ```
//!
//! evaluated by Gauss-Legendre quadrature in x. The step is affine in the
//! draw in every mode, so the inner theta-mass is an exact kernel-CDF
//! difference, no sampling anywhere. The deterministic matrix is the
//! classical |I_i ∩ T^{-1} I_j| / |I_i|, with branch inverses obtained by
//! bisection on the monotone lift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::CircleMap;
use crate::perturbation::{Mode, NoiseKernel, RandomSystem};
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};

pub const DEFAULT_CELLS: usize = 4096;
pub const DEFAULT_QUAD_ORDER: usize = 5;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;
pub const DEFAULT_STARTS: usize = 3;

/// Row mass may drift this far from 1 before assembly is rejected outright.
const DEFECT_LIMIT: f64 = 1e-6;
/// Rows with defect above this are renormalized and flagged.
const RENORM_THRESHOLD: f64 = 1e-12;
/// Bisection tolerance (in x) for lift inversion.
const INVERT_TOL: f64 = 1e-13;

/// Probability vector over the n equal cells.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    weights: Vec<f64>,
}

impl GridMeasure {
    /// Weights must be nonnegative and sum to 1 within 1e-12.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Parameter {
                    name: "grid weight",
                    value: w,
                    require: "finite and >= 0",
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter {
                name: "grid weight sum",
                value: sum,
                require: "equal to 1 within 1e-12",
            });
        }
        Ok(GridMeasure { weights })
    }

    /// Normalize arbitrary nonnegative masses into a probability vector.
    pub fn from_unnormalized(masses: Vec<f64>) -> Result<Self> {
        let sum: f64 = masses.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Parameter {
                name: "mass total",
                value: sum,
                require: "finite and > 0",
            });
        }
        GridMeasure::new(masses.into_iter().map(|m| m / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        GridMeasure {
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass on one cell; cell 0 is the grid stand-in for the Dirac
    /// mass at zero.
    pub fn dirac_cell(n: usize, cell: usize) -> Self {
        let mut w = vec![0.0; n];
        w[cell] = 1.0;
        GridMeasure { weights: w }
    }

    pub fn n_cells(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_left(&self, j: usize) -> f64 {
        j as f64 / self.weights.len() as f64
    }

    /// Split every cell into `factor` equal children, keeping the density.
    pub fn refine(&self, factor: usize) -> GridMeasure {
        let mut out = Vec::with_capacity(self.weights.len() * factor);
        for &w in &self.weights {
            for _ in 0..factor {
                out.push(w / factor as f64);
            }
        }
        GridMeasure { weights: out }
    }

    /// t * (cell-0 point mass) + (1 - t) * self.
    pub fn mix_with_dirac_cell(&self, t: f64) -> GridMeasure {
        let mut w: Vec<f64> = self.weights.iter().map(|&x| (1.0 - t) * x).collect();
        w[0] += t;
        GridMeasure { weights: w }
    }
}

/// Sparse row-stochastic Ulam matrix.
#[derive(Clone, Debug)]
pub struct UlamMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
    renormalized_rows: Vec<u32>,
}

impl UlamMatrix {
    /// Validate row sums, renormalizing (and flagging) rows whose defect
    /// exceeds the renormalization threshold; reject rows beyond the limit.
    pub(crate) fn from_rows(n: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut renormalized = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            let sum: f64 = row.iter().map(|&(_, v)| v).sum();
            let defect = (sum - 1.0).abs();
            if defect > DEFECT_LIMIT || !sum.is_finite() {
                return Err(Error::RowDefect {
                    row: i,
                    defect,
                    limit: DEFECT_LIMIT,
                });
            }
            if defect > RENORM_THRESHOLD {
                for e in row.iter_mut() {
                    e.1 /= sum;
                }
                renormalized.push(i as u32);
            }
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!(v >= 0.0 && (c as usize) < n);
                col.push(c);
                val.push(v);
            }
            row_ptr.push(col.len());
        }
        Ok(UlamMatrix {
            n,
            row_ptr,
            col,
            val,
            renormalized_rows: renormalized,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col[lo..hi]
            .iter()
            .zip(&self.val[lo..hi])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// Rows whose quadrature defect forced a renormalization.
    pub fn renormalized_rows(&self) -> &[u32] {
        &self.renormalized_rows
    }

    pub fn max_row_defect(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).map(|(_, v)| v).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Column-oriented copy: entry lists of (source row, mass) per target
    /// cell, so left multiplication becomes a gather that parallelizes with
    /// a fixed per-cell summation order.
    fn transpose(&self) -> Transpose {
        let mut counts = vec![0usize; self.n + 1];
        for &c in &self.col {
            counts[c as usize + 1] += 1;
        }
        for j in 0..self.n {
            counts[j + 1] += counts[j];
        }
        let mut pos = counts.clone();
        let mut src = vec![0u32; self.col.len()];
        let mut mass = vec![0f64; self.col.len()];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[k] as usize;
                src[pos[j]] = i as u32;
                mass[pos[j]] = self.val[k];
                pos[j] += 1;
            }
        }
        Transpose {
            col_ptr: counts,
            src,
            mass,
        }
    }
}

struct Transpose {
    col_ptr: Vec<usize>,
    src: Vec<u32>,
    mass: Vec<f64>,
}

impl Transpose {
    /// next = mu * P. Deterministic regardless of thread count: each output
    /// cell is an independent ordered dot product.
    fn apply(&self, mu: &[f64], next: &mut [f64]) {
        next.par_iter_mut().enumerate().with_min_len(64).for_each(|(j, out)| {
            let lo = self.col_ptr[j];
            let hi = self.col_ptr[j + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += mu[self.src[k] as usize] * self.mass[k];
            }
            *out = acc;
        });
    }
}

/// Per-quadrature-node mass deposition for additive modes: the image window
/// [base + lo, base + hi] in lift coordinates, cut along the cell lattice,
/// each piece weighted by an exact kernel-CDF difference.
pub(crate) fn additive_window(base: f64, kernel: &NoiseKernel, n: usize) -> Vec<(usize, f64)> {
    let (klo, khi) = kernel.support();
    let nf = n as f64;
    let wlo = base + klo;
    let whi = base + khi;
    let k_first = (wlo * nf).floor() as i64;
    let k_last = (whi * nf).floor() as i64;
    let mut out = Vec::with_capacity((k_last - k_first + 1) as usize);
    for k in k_first..=k_last {
        let seg_lo = (k as f64 / nf).max(wlo);
        let seg_hi = ((k + 1) as f64 / nf).min(whi);
        if seg_hi <= seg_lo {
            continue;
        }
        let mass = kernel.cdf(seg_hi - base) - kernel.cdf(seg_lo - base);
        if mass > 0.0 {
            out.push((k.rem_euclid(n as i64) as usize, mass));
        }
    }
    out
}

/// Parametric counterpart: t -> f_t(x) is affine, so the image window is the
/// segment between the endpoint maps and cell boundaries pull back to exact
/// parameter values, again weighted by kernel-CDF differences.
fn parametric_window(
    system: &RandomSystem,
    x: f64,
    kernel: &NoiseKernel,
    n: usize,
) -> Vec<(usize, f64)> {
    let (tlo, thi) = kernel.support();
    let g_lo = system
        .parametric_height(x, tlo)
        .expect("parametric system");
    let g_hi = system
        .parametric_height(x, thi)
        .expect("parametric system");
    let nf = n as f64;
    if g_lo == g_hi {
        // Degenerate point: the whole parameter interval lands on one image.
        let cell = ((g_lo * nf) as usize).min(n - 1);
        return vec![(cell, 1.0)];
    }
    let (wlo, whi) = if g_lo < g_hi { (g_lo, g_hi) } else { (g_hi, g_lo) };
    // Parameter value sending x onto image height y; affine interpolation
    // between the endpoint images is exact here.
    let t_at = |y: f64| tlo + (thi - tlo) * (y - g_lo) / (g_hi - g_lo);
    let k_first = (wlo * nf).floor() as i64;
    let k_last = ((whi * nf).floor() as i64).min(n as i64 - 1);
    let mut out = Vec::with_capacity((k_last - k_first + 1).max(1) as usize);
    for k in k_first..=k_last {
        let seg_lo = (k as f64 / nf).max(wlo);
        let seg_hi = ((k + 1) as f64 / nf).min(whi);
        if seg_hi <= seg_lo {
            continue;
        }
        let mass = (kernel.cdf(t_at(seg_hi)) - kernel.cdf(t_at(seg_lo))).abs();
        if mass > 0.0 {
            out.push((k as usize, mass));
        }
    }
    out
}

/// Annealed Ulam matrix of a random system.
pub fn assemble_annealed(
    system: &RandomSystem,
    n_cells: usize,
    quad_order: usize,
) -> Result<UlamMatrix> {
    if n_cells < 2 {
        return Err(Error::Parameter {
            name: "n_cells",
            value: n_cells as f64,
            require: ">= 2",
        });
    }
    if quad_order < 1 {
        return Err(Error::Parameter {
            name: "quad_order",
            value: quad_order as f64,
            require: ">= 1",
        });
    }
    let kernel = *system.kernel();
    if kernel.is_degenerate() {
        return Err(Error::Parameter {
            name: "kernel width",
            value: 0.0,
            require: "> 0 for annealed assembly (use the deterministic assembly instead)",
        });
    }
    let nf = n_cells as f64;
    // Extremal draws trace the window edges; the deposit pattern is smooth
    // in x except where one of those edge images crosses the cell lattice
    // (and at the branch point 1/2, where parametric windows collapse).
    let (d_lo, d_hi) = kernel.support();
    let edge_maps = [system.map_at(d_lo)?, system.map_at(d_hi)?];
    let rows: Vec<Vec<(u32, f64)>> = (0..n_cells)
        .into_par_iter()
        .map(|i| {
            let a = i as f64 / nf;
            let b = (i + 1) as f64 / nf;
            let mut cuts = vec![a, b];
            if a < 0.5 && 0.5 < b {
                cuts.push(0.5);
            }
            for edge in &edge_maps {
                let m = edge.as_ref();
                let la = m.lift(a);
                let lb = m.lift(b);
                let mut k = (la * nf).floor() as i64 + 1;
                while (k as f64) < lb * nf {
                    let x = invert_lift(m, k as f64 / nf, a, b);
                    if x > a && x < b {
                        cuts.push(x);
                    }
                    k += 1;
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
            // Rows must tile [a, b] exactly or their sums drift off 1.
            cuts[0] = a;
            *cuts.last_mut().unwrap() = b;

            // Piecewise quadrature: within a piece every cell's share of the
            // window is analytic in x, so low-order nodes are plenty.
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for piece in cuts.windows(2) {
                for &(x, w) in &gauss_legendre(quad_order, piece[0], piece[1]) {
                    let node_weight = w * nf; // all weights together sum to |I_i|
                    let deposits = match system.mode() {
                        Mode::Additive | Mode::AdditiveDoubling => {
                            let base = system.base_lift(x).expect("additive system");
                            additive_window(base, &kernel, n_cells)
                        }
                        Mode::Parametric => parametric_window(system, x, &kernel, n_cells),
                    };
                    for (cell, mass) in deposits {
                        acc.push((cell, node_weight * mass));
                    }
                }
            }
            let mut row: Vec<(u32, f64)> = Vec::new();
            acc.sort_by_key(|&(c, _)| c);
            for (c, v) in acc {
                match row.last_mut() {
                    Some(last) if last.0 == c as u32 => last.1 += v,
                    _ => row.push((c as u32, v)),
                }
            }
            row
        })
        .collect();
    UlamMatrix::from_rows(n_cells, rows)
}

/// Deterministic Ulam matrix |I_i ∩ T^{-1} I_j| / |I_i| of a single map.
pub fn assemble_deterministic<M: CircleMap + Sync>(map: &M, n_cells: usize) -> Result<UlamMatrix> {
    if n_cells < 2 {
        return Err(Error::Parameter {
            name: "n_cells",
            value: n_cells as f64,
            require: ">= 2",
        });
    }
    let nf = n_cells as f64;
    let rows: Vec<Vec<(u32, f64)>> = (0..n_cells)
        .into_par_iter()
        .map(|i| {
            let a = i as f64 / nf;
            let b = (i + 1) as f64 / nf;
            let la = map.lift(a);
            let lb = map.lift(b);
            // Preimages of the cell lattice cut [a, b] into consecutive
            // pieces; masses telescope so the row sums to 1 exactly.
            let mut cuts = vec![a];
            let k_lo = (la * nf).floor() as i64;
            let mut k = k_lo + 1;
            while (k as f64) < lb * nf {
                cuts.push(invert_lift(map, k as f64 / nf, a, b));
                k += 1;
            }
            cuts.push(b);
            let mut row: Vec<(u32, f64)> = Vec::with_capacity(cuts.len() - 1);
            for (seg, pair) in cuts.windows(2).enumerate() {
                let mass = (pair[1] - pair[0]) / (b - a);
                if mass <= 0.0 {
                    continue;
                }
                let cell = (k_lo + seg as i64).rem_euclid(n_cells as i64) as u32;
                match row.iter_mut().find(|e| e.0 == cell) {
                    Some(e) => e.1 += mass,
                    None => row.push((cell, mass)),
                }
            }
            row
        })
        .collect();
    UlamMatrix::from_rows(n_cells, rows)
}

/// Solve map.lift(x) = y for x in [lo, hi] by bisection; the lift is
/// strictly increasing there.
fn invert_lift<M: CircleMap + ?Sized>(map: &M, y: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if map.lift(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < INVERT_TOL {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug)]
pub struct StationarySettings {
    pub tol: f64,
    pub max_iter: u64,
    pub n_starts: usize,
}

impl Default for StationarySettings {
    fn default() -> Self {
        StationarySettings {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            n_starts: DEFAULT_STARTS,
        }
    }
}

/// Distinct ergodic components keep starts order-1 apart in L1, while a slow
/// but unique chain leaves them within residual / spectral-gap of each other;
/// this threshold sits far above the second and far below the first.
const MULTIPLICITY_DISAGREEMENT: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct StationaryResult {
    /// Fixed vector reached from the first start.
    pub measure: GridMeasure,
    /// Iterations used by the slowest start.
    pub iterations: u64,
    /// Largest final invariance residual ||mu P - mu||_1 across starts.
    pub residual: f64,
    /// Starts settled on measurably different fixed vectors.
    pub multiple_fixed_vectors: bool,
    pub max_start_disagreement: f64,
}

/// Power iteration from several deterministic starts. Every start must reach
/// the residual tolerance; pairwise disagreement raises the multiplicity
/// flag rather than an error.
pub fn stationary(matrix: &UlamMatrix, settings: &StationarySettings) -> Result<StationaryResult> {
    let n = matrix.n_cells();
    if settings.n_starts < 1 {
        return Err(Error::Parameter {
            name: "n_starts",
            value: settings.n_starts as f64,
            require: ">= 1",
        });
    }
    let tp = matrix.transpose();
    let mut results: Vec<Vec<f64>> = Vec::with_capacity(settings.n_starts);
    let mut worst_iters = 0u64;
    let mut worst_residual = 0.0f64;
    for start_idx in 0..settings.n_starts {
        let mut cur = start_vector(n, start_idx);
        let mut next = vec![0.0; n];
        let mut converged = false;
        let mut iters = 0u64;
        let mut residual = f64::INFINITY;
        while iters < settings.max_iter {
            iters += 1;
            tp.apply(&cur, &mut next);
            // Sequential normalization and residual: identical bytes no
            // matter how many worker threads ran the gather above.
            let total: f64 = next.iter().sum();
            for v in next.iter_mut() {
                *v /= total;
            }
            residual = cur
                .iter()
                .zip(next.iter())
                .map(|(a, b)| (a - b).abs())
                .sum();
            std::mem::swap(&mut cur, &mut next);
            if residual <= settings.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                iters,
                tol: settings.tol,
                residual,
            });
        }
        worst_iters = worst_iters.max(iters);
        worst_residual = worst_residual.max(residual);
        results.push(cur);
    }

    let mut max_disagreement = 0.0f64;
    for a in 0..results.len() {
        for b in (a + 1)..results.len() {
            let d: f64 = results[a]
                .iter()
                .zip(results[b].iter())
                .map(|(x, y)| (x - y).abs())
                .sum();
            max_disagreement = max_disagreement.max(d);
        }
    }

    Ok(StationaryResult {
        measure: GridMeasure::new(results.swap_remove(0))?,
        iterations: worst_iters,
        residual: worst_residual,
        multiple_fixed_vectors: max_disagreement > MULTIPLICITY_DISAGREEMENT,
        max_start_disagreement: max_disagreement,
    })
}

/// Start 0 is uniform; later starts are seeded positive pseudo-random
/// vectors, fixed once and for all so reruns are identical.
fn start_vector(n: usize, index: usize) -> Vec<f64> {
    if index == 0 {
        return vec![1.0 / n as f64; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(index as u64);
    let mut v: Vec<f64> = (0..n).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
    v
}

/// One application of the matrix to a measure; total mass is preserved to
/// rounding.
pub fn push(matrix: &UlamMatrix, mu: &GridMeasure) -> Result<GridMeasure> {
    if matrix.n_cells() != mu.n_cells() {
        return Err(Error::GridMismatch {
            left: matrix.n_cells(),
            right: mu.n_cells(),
        });
    }
    let mut out = vec![0.0; matrix.n_cells()];
    for (i, &w) in mu.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (j, p) in matrix.row(i) {
            out[j] += w * p;
        }
    }
    GridMeasure::new(out)
}
