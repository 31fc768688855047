//! Monte Carlo side of the laboratory: random orbits, empirical stationary
//! measures, Lyapunov exponents, and the trap/escape experiments.
//!
//! Every stochastic routine takes a [`SeedPolicy`] plus a stream index and is
//! bit-reproducible: stream k always yields the same variates, and parallel
//! ensembles combine per-stream results in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circle::CirclePoint;
use crate::dynamics::{CircleMap, ExpansionBand, SaddleNodeMap};
use crate::measures::EmpiricalMeasure;
use crate::perturbation::RandomSystem;
use crate::{Error, Result};

pub const DEFAULT_BURN_IN: u64 = 10_000;
pub const DEFAULT_KEEP: u64 = 1_000;
pub const DEFAULT_ORBITS: u64 = 1_000;

/// Root seed for an experiment; individual work items get disjoint
/// counter-mode streams, so adding workers never perturbs existing ones.
#[derive(Clone, Copy, Debug)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        SeedPolicy { master_seed }
    }

    pub fn stream(&self, k: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(k);
        rng
    }
}

/// One simulated trajectory with everything needed to audit it.
#[derive(Clone, Debug)]
pub struct OrbitRecord {
    pub seed: u64,
    pub stream: u64,
    /// n_steps + 1 states, starting at the initial condition.
    pub states: Vec<CirclePoint>,
    pub draws: Vec<f64>,
    pub log_derivs: Vec<f64>,
    pub log_deriv_sum: f64,
}

impl OrbitRecord {
    pub fn n_steps(&self) -> usize {
        self.draws.len()
    }
}

pub fn random_orbit(
    system: &RandomSystem,
    x0: CirclePoint,
    n_steps: u64,
    policy: SeedPolicy,
    stream: u64,
) -> Result<OrbitRecord> {
    let mut rng = policy.stream(stream);
    let n = n_steps as usize;
    let mut states = Vec::with_capacity(n + 1);
    let mut draws = Vec::with_capacity(n);
    let mut log_derivs = Vec::with_capacity(n);
    states.push(x0);
    let mut x = x0;
    let mut sum = 0.0;
    for _ in 0..n {
        let draw = system.kernel().sample(&mut rng);
        let (next, deriv) = system.step_with_derivative(x, draw)?;
        let ld = deriv.ln();
        if !ld.is_finite() {
            return Err(Error::NonFinite {
                context: "log-derivative along random orbit",
            });
        }
        states.push(next);
        draws.push(draw);
        log_derivs.push(ld);
        sum += ld;
        x = next;
    }
    Ok(OrbitRecord {
        seed: policy.master_seed,
        stream,
        states,
        draws,
        log_derivs,
        log_deriv_sum: sum,
    })
}

/// Pooled late-orbit samples from an ensemble of independent trajectories,
/// each started uniformly at random and run past a burn-in.
pub fn empirical_stationary(
    system: &RandomSystem,
    n_orbits: u64,
    burn_in: u64,
    keep: u64,
    policy: SeedPolicy,
) -> Result<EmpiricalMeasure> {
    if n_orbits == 0 || keep == 0 {
        return Err(Error::EmptySamples);
    }
    let per_orbit: Vec<Result<Vec<f64>>> = (0..n_orbits)
        .into_par_iter()
        .map(|k| {
            let mut rng = policy.stream(k);
            let mut x = CirclePoint::wrap(rng.gen::<f64>());
            let mut kept = Vec::with_capacity(keep as usize);
            for step in 0..burn_in + keep {
                let draw = system.kernel().sample(&mut rng);
                x = system.step(x, draw)?;
                if step >= burn_in {
                    kept.push(x.value());
                }
            }
            Ok(kept)
        })
        .collect();
    // Index order, so thread scheduling cannot reshuffle the pool.
    let mut pooled = Vec::with_capacity((n_orbits * keep) as usize);
    for block in per_orbit {
        pooled.extend(block?);
    }
    EmpiricalMeasure::from_values(pooled)
}

/// Time-averaged log-derivative along one random orbit (streaming, so the
/// step count can be large).
pub fn lyapunov(
    system: &RandomSystem,
    x0: CirclePoint,
    n_steps: u64,
    policy: SeedPolicy,
    stream: u64,
) -> Result<f64> {
    if n_steps == 0 {
        return Err(Error::Parameter {
            name: "n_steps",
            value: 0.0,
            require: ">= 1",
        });
    }
    let mut rng = policy.stream(stream);
    let mut x = x0;
    let mut sum = 0.0;
    for _ in 0..n_steps {
        let draw = system.kernel().sample(&mut rng);
        let (next, deriv) = system.step_with_derivative(x, draw)?;
        let ld = deriv.ln();
        if !ld.is_finite() {
            return Err(Error::NonFinite {
                context: "log-derivative in Lyapunov average",
            });
        }
        sum += ld;
        x = next;
    }
    Ok(sum / n_steps as f64)
}

/// Outcome of waiting for a random orbit to leave the expansion belt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Escape {
    /// First step at which the orbit was outside the belt.
    Escaped { steps: u64 },
    /// Still inside after the step budget; not an error, a finding.
    Exhausted,
}

/// Run a random orbit started inside the repeller belt [p_u, 1 - p_u] until
/// it first leaves, i.e. until its distance to 0 drops below p_u and the
/// funnel takes over. Both endpoints count as inside.
pub fn escape_time(
    system: &RandomSystem,
    band: &ExpansionBand,
    x0: CirclePoint,
    n_max: u64,
    policy: SeedPolicy,
    stream: u64,
) -> Result<Escape> {
    if !band.belt_contains(x0) {
        return Err(Error::OutsideRegion {
            x0: x0.value(),
            region: "repeller belt [p_u, 1 - p_u]",
        });
    }
    let mut rng = policy.stream(stream);
    let mut x = x0;
    for step in 1..=n_max {
        let draw = system.kernel().sample(&mut rng);
        x = system.step(x, draw)?;
        if !band.belt_contains(x) {
            return Ok(Escape::Escaped { steps: step });
        }
    }
    Ok(Escape::Exhausted)
}

/// Follow an orbit inside the neutral funnel and verify at every step that
/// its distance to 0 moves between the slow and fast one-step envelopes
///
/// ```text
/// f_s(d) <= d' <= f_u(d)      (both maps fix 0 and are monotone near it)
/// ```
///
/// Returns the final distance to 0. An envelope breach is an error: it means
/// the monotone-trap picture is wrong, not that the sample was unlucky.
pub fn funnel_check(
    system: &RandomSystem,
    band: &ExpansionBand,
    x0: CirclePoint,
    n_steps: u64,
    policy: SeedPolicy,
    stream: u64,
) -> Result<f64> {
    if !band.funnel_contains(x0) {
        return Err(Error::OutsideRegion {
            x0: x0.value(),
            region: "neutral funnel around 0",
        });
    }
    let alpha = band.alpha;
    let slow = SaddleNodeMap::new(alpha, band.s)?;
    let fast = SaddleNodeMap::new(alpha, band.u)?;
    let mut rng = policy.stream(stream);
    let mut x = x0;
    let mut d = x.dist_to_zero();
    for step in 1..=n_steps {
        let draw = system.kernel().sample(&mut rng);
        let next = system.step(x, draw)?;
        let d_next = next.dist_to_zero();
        // By the symmetry f_t(1 - x) = 1 - f_t(x), distance to 0 evolves the
        // same way on both sides, so the envelopes apply to d directly.
        let lo = slow.lift(d) - 1e-12;
        let hi = fast.lift(d) + 1e-12;
        if d_next < lo || d_next > hi {
            return Err(Error::EnvelopeViolated {
                step: step as usize,
                x: d,
                image: d_next,
                lo,
                hi,
            });
        }
        x = next;
        d = d_next;
    }
    Ok(d)
}
