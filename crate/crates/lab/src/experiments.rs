//! Drivers behind the sweep subcommands. Each driver materializes its
//! defaults into the config (so the echo is complete), validates the
//! regime preconditions, computes rows in ladder order, and returns
//! verdicts from the closed set {pass, fail, flagged}.

use lab_core::circle::CirclePoint;
use lab_core::dynamics::{choose_expansion_band, covering_time, IntermittentMap};
use lab_core::measures::{mass_near_zero, nearest_mixture, w1_circle, MeasureRef};
use lab_core::perturbation::{NoiseKernel, RandomSystem};
use lab_core::sampling::{empirical_stationary, escape_time, funnel_check, Escape, SeedPolicy};
use lab_core::transfer::{
    assemble_annealed, assemble_deterministic, stationary, StationaryResult, StationarySettings,
};
use rand::Rng;
use rayon::prelude::*;

use crate::config::Config;
use crate::report::Verdict;
use crate::{LabError, Result};

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub eps: f64,
    pub w1_to_dirac: f64,
    pub w1_to_srb: Option<f64>,
    pub mass_near_zero: f64,
    pub mixture_t: Option<f64>,
    pub mixture_distance: Option<f64>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub verdicts: Vec<(&'static str, Verdict)>,
    /// Extra scalar summary fields for the JSON report.
    pub summary: Vec<(&'static str, f64)>,
}

/// Shared keys for anything that runs power iteration.
pub fn ensure_stationary_defaults(cfg: &mut Config) {
    cfg.ensure("cells", "4096");
    cfg.ensure("quad_order", "5");
    cfg.ensure("tol", "1e-10");
    cfg.ensure("max_iter", "1000000");
    cfg.ensure("starts", "3");
}

pub fn stationary_settings(cfg: &Config) -> Result<StationarySettings> {
    Ok(StationarySettings {
        tol: cfg.f64("tol")?,
        max_iter: cfg.u64("max_iter")?,
        n_starts: cfg.usize("starts")?,
    })
}

fn eps_ladder(cfg: &Config) -> Result<Vec<f64>> {
    let ladder = cfg.f64_list("eps_ladder")?;
    if ladder.is_empty() {
        return Err(LabError::Config("eps_ladder must not be empty".into()));
    }
    for pair in ladder.windows(2) {
        if pair[1] >= pair[0] {
            return Err(LabError::Config(format!(
                "eps_ladder must be strictly decreasing, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    if *ladder.last().unwrap() <= 0.0 {
        return Err(LabError::Config("eps_ladder entries must be positive".into()));
    }
    Ok(ladder)
}

/// Validate (or materialize) the `experiment` tag a config may carry.
pub fn check_experiment_tag(cfg: &mut Config, expected: &str) -> Result<()> {
    match cfg.get("experiment") {
        Some(tag) if tag != expected => Err(LabError::Config(format!(
            "config says experiment = {tag}, but this subcommand runs {expected}"
        ))),
        Some(_) => Ok(()),
        None => {
            cfg.ensure("experiment", expected);
            Ok(())
        }
    }
}

fn annealed_row_measure(
    alpha: f64,
    eps: f64,
    cells: usize,
    quad: usize,
    settings: &StationarySettings,
) -> Result<StationaryResult> {
    let sys = RandomSystem::additive(alpha, NoiseKernel::uniform(eps)?)?;
    let matrix = assemble_annealed(&sys, cells, quad)?;
    Ok(stationary(&matrix, settings)?)
}

/// Sweep toward the zero-noise limit in the regime with an absolutely
/// continuous invariant measure, measuring how close each stationary
/// density sits to the segment of mixtures between it and the point mass.
pub fn run_thm_a(cfg: &mut Config) -> Result<SweepOutcome> {
    check_experiment_tag(cfg, "thmA_sweep")?;
    ensure_stationary_defaults(cfg);
    cfg.ensure("t_grid", "101");
    cfg.ensure("delta", "0.05");
    cfg.ensure("tol_mixture", "0.02");
    cfg.ensure("seed", "0");

    let alpha = cfg.f64("alpha")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::Config(format!(
            "sweep-a needs alpha in (0,1), the smooth-measure regime; got {alpha}"
        )));
    }
    let ladder = eps_ladder(cfg)?;
    let cells = cfg.usize("cells")?;
    let quad = cfg.usize("quad_order")?;
    let t_grid = cfg.usize("t_grid")?;
    let delta = cfg.f64("delta")?;
    let tol_mixture = cfg.f64("tol_mixture")?;
    let settings = stationary_settings(cfg)?;

    let base = IntermittentMap::new(alpha)?;
    let det = stationary(&assemble_deterministic(&base, cells)?, &settings)?;
    let mut flagged = det.multiple_fixed_vectors;
    let srb = det.measure;

    let mut rows = Vec::with_capacity(ladder.len());
    for &eps in &ladder {
        let res = annealed_row_measure(alpha, eps, cells, quad, &settings)?;
        flagged |= res.multiple_fixed_vectors;
        let mu = res.measure;
        let est = nearest_mixture(&mu, &srb, t_grid)?;
        rows.push(SweepRow {
            eps,
            w1_to_dirac: w1_circle(MeasureRef::Grid(&mu), MeasureRef::DiracZero)?,
            w1_to_srb: Some(w1_circle(MeasureRef::Grid(&mu), MeasureRef::Grid(&srb))?),
            mass_near_zero: mass_near_zero(MeasureRef::Grid(&mu), delta)?,
            mixture_t: Some(est.t_weight),
            mixture_distance: Some(est.distance),
        });
    }

    let dists: Vec<f64> = rows.iter().map(|r| r.mixture_distance.unwrap()).collect();
    let trend = dists.windows(2).all(|p| p[1] <= p[0]);
    let last = *dists.last().unwrap();
    Ok(SweepOutcome {
        rows,
        verdicts: vec![
            ("mixture_distance_trend", Verdict::from_check(trend)),
            ("mixture_distance_final", Verdict::from_check(last <= tol_mixture)),
            ("uniqueness", if flagged { Verdict::Flagged } else { Verdict::Pass }),
        ],
        summary: vec![
            ("mixture_distance_first", dists[0]),
            ("mixture_distance_last", last),
        ],
    })
}

/// Sweep toward the zero-noise limit in the stiff regime, where the
/// stationary measures collapse onto the point mass at the neutral point.
pub fn run_thm_b(cfg: &mut Config) -> Result<SweepOutcome> {
    check_experiment_tag(cfg, "thmB_sweep")?;
    ensure_stationary_defaults(cfg);
    cfg.ensure("delta", "0.05");
    cfg.ensure("seed", "0");

    let alpha = cfg.f64("alpha")?;
    if alpha < 1.0 {
        return Err(LabError::Config(format!(
            "sweep-b needs alpha >= 1, the regime where the point mass is physical; got {alpha}"
        )));
    }
    let ladder = eps_ladder(cfg)?;
    let cells = cfg.usize("cells")?;
    let quad = cfg.usize("quad_order")?;
    let delta = cfg.f64("delta")?;
    let settings = stationary_settings(cfg)?;

    let mut flagged = false;
    let mut rows = Vec::with_capacity(ladder.len());
    for &eps in &ladder {
        let res = annealed_row_measure(alpha, eps, cells, quad, &settings)?;
        flagged |= res.multiple_fixed_vectors;
        let mu = res.measure;
        rows.push(SweepRow {
            eps,
            w1_to_dirac: w1_circle(MeasureRef::Grid(&mu), MeasureRef::DiracZero)?,
            w1_to_srb: None,
            mass_near_zero: mass_near_zero(MeasureRef::Grid(&mu), delta)?,
            mixture_t: None,
            mixture_distance: None,
        });
    }

    let w1s: Vec<f64> = rows.iter().map(|r| r.w1_to_dirac).collect();
    let masses: Vec<f64> = rows.iter().map(|r| r.mass_near_zero).collect();
    let ratio = w1s.last().unwrap() / w1s[0];
    Ok(SweepOutcome {
        rows,
        verdicts: vec![
            (
                "w1_trend",
                Verdict::from_check(w1s.windows(2).all(|p| p[1] < p[0])),
            ),
            ("w1_halving", Verdict::from_check(ratio <= 0.5)),
            (
                "mass_trend",
                Verdict::from_check(masses.windows(2).all(|p| p[1] > p[0])),
            ),
            ("uniqueness", if flagged { Verdict::Flagged } else { Verdict::Pass }),
        ],
        summary: vec![("w1_ratio_last_first", ratio)],
    })
}

#[derive(Clone, Debug)]
pub struct EscapeTrialRow {
    pub trial: u64,
    pub x0: f64,
    /// First step inside the funnel; 0 when the start is already there.
    pub escape_step: Option<u64>,
}

impl EscapeTrialRow {
    pub fn escaped(&self) -> bool {
        self.escape_step.is_some()
    }
}

/// Uniform starts over the whole circle. Starts already inside the funnel
/// escape at step 0; the rest run the belt escape search. Trial k draws its
/// start from stream k and its noise from stream trials + k, so the two
/// never overlap.
pub fn escape_ensemble(
    system: &RandomSystem,
    band: &lab_core::dynamics::ExpansionBand,
    trials: u64,
    n_max: u64,
    policy: SeedPolicy,
) -> Result<Vec<EscapeTrialRow>> {
    let rows = (0..trials)
        .into_par_iter()
        .map(|k| {
            let x0v: f64 = policy.stream(k).gen();
            let x0 = CirclePoint::wrap(x0v);
            let escape_step = if band.funnel_contains(x0) {
                Some(0)
            } else {
                match escape_time(system, band, x0, n_max, policy, trials + k)? {
                    Escape::Escaped { steps } => Some(steps),
                    Escape::Exhausted => None,
                }
            };
            Ok(EscapeTrialRow {
                trial: k,
                x0: x0v,
                escape_step,
            })
        })
        .collect::<lab_core::Result<Vec<_>>>()?;
    Ok(rows)
}

#[derive(Debug)]
pub struct InstabilityOutcome {
    pub trials: Vec<EscapeTrialRow>,
    pub escaped_fraction: f64,
    pub mean_escape_steps: f64,
    pub max_escape_steps: u64,
    pub funnel_checks: u64,
    pub funnel_max_final_distance: f64,
    pub band_s: f64,
    pub band_u: f64,
    pub funnel_radius: f64,
    pub empirical_mass_near_zero: f64,
    pub empirical_w1_to_dirac: f64,
    pub empirical_samples: usize,
    pub contrast_mass_near_zero: f64,
    pub verdicts: Vec<(&'static str, Verdict)>,
}

/// The engineered-instability experiment: parameter noise supported on an
/// expansion band empties the belt between the fixed sources, funnels all
/// mass to the neutral point, and lands far from the noiseless density.
pub fn run_instability(cfg: &mut Config) -> Result<InstabilityOutcome> {
    check_experiment_tag(cfg, "thmC_instability")?;
    ensure_stationary_defaults(cfg);
    cfg.ensure("trials", "1000");
    cfg.ensure("steps", "100000");
    cfg.ensure("keep", "1000");
    cfg.ensure("nmax", "1000000");
    cfg.ensure("delta", "0.05");
    cfg.ensure("seed", "0");
    cfg.ensure("tol_escape", "0.99");
    cfg.ensure("tol_mass", "0.99");
    cfg.ensure("tol_w1", "0.01");
    cfg.ensure("tol_contrast", "0.5");
    cfg.ensure("funnel_checks", "100");
    cfg.ensure("funnel_steps", "1000");

    let alpha = cfg.f64("alpha")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::Config(format!(
            "instability needs alpha in (0,1) so the noiseless density is spread out; got {alpha}"
        )));
    }
    let s = cfg.f64("s")?;
    if !(s > 0.0 && s < 1.0) {
        return Err(LabError::Config(format!("s must lie in (0,1), got {s}")));
    }
    let trials = cfg.u64("trials")?;
    let steps = cfg.u64("steps")?;
    let keep = cfg.u64("keep")?.min(steps);
    let n_max = cfg.u64("nmax")?;
    let delta = cfg.f64("delta")?;
    let seed = cfg.u64("seed")?;
    let cells = cfg.usize("cells")?;
    let funnel_checks = cfg.u64("funnel_checks")?;
    let funnel_steps = cfg.u64("funnel_steps")?;
    let settings = stationary_settings(cfg)?;

    let band = choose_expansion_band(alpha, s)?;
    let (lo, hi) = band.parameter_support();
    let sys = RandomSystem::parametric(alpha, NoiseKernel::interval(lo, hi)?)?;
    let policy = SeedPolicy::new(seed);

    let trial_rows = escape_ensemble(&sys, &band, trials, n_max, policy)?;
    let escaped: Vec<u64> = trial_rows.iter().filter_map(|r| r.escape_step).collect();
    let escaped_fraction = escaped.len() as f64 / trials as f64;
    let mean_escape_steps = if escaped.is_empty() {
        f64::NAN
    } else {
        escaped.iter().sum::<u64>() as f64 / escaped.len() as f64
    };
    let max_escape_steps = escaped.iter().copied().max().unwrap_or(0);

    // Envelope confinement spot checks on starts inside the funnel. Stream
    // ranges continue past the escape ensemble's.
    let p_u = band.funnel_radius();
    let mut funnel_max_final_distance = 0.0f64;
    for j in 0..funnel_checks {
        let u: f64 = policy.stream(2 * trials + j).gen();
        let x0 = CirclePoint::wrap((2.0 * u - 1.0) * p_u * 0.99);
        let d = funnel_check(
            &sys,
            &band,
            x0,
            funnel_steps,
            policy,
            2 * trials + funnel_checks + j,
        )?;
        funnel_max_final_distance = funnel_max_final_distance.max(d);
    }

    // Long-run histogram on a separate seed branch so it never reuses the
    // escape-trial streams.
    let emp = empirical_stationary(
        &sys,
        trials,
        steps - keep,
        keep,
        SeedPolicy::new(seed.wrapping_add(1)),
    )?;
    let empirical_mass_near_zero = mass_near_zero(MeasureRef::Empirical(&emp), delta)?;
    let empirical_w1_to_dirac =
        w1_circle(MeasureRef::Empirical(&emp), MeasureRef::DiracZero)?;

    // The noiseless contrast: the base map's grid density stays spread out.
    let base = IntermittentMap::new(alpha)?;
    let contrast = stationary(&assemble_deterministic(&base, cells)?, &settings)?;
    let contrast_mass_near_zero =
        mass_near_zero(MeasureRef::Grid(&contrast.measure), delta)?;

    let verdicts = vec![
        (
            "escape_fraction",
            Verdict::from_check(escaped_fraction >= cfg.f64("tol_escape")?),
        ),
        // An envelope breach aborts with a numeric error above, so reaching
        // this point means every spot check stayed confined.
        ("funnel_envelopes", Verdict::Pass),
        (
            "mass_concentration",
            Verdict::from_check(empirical_mass_near_zero >= cfg.f64("tol_mass")?),
        ),
        (
            "w1_to_dirac",
            Verdict::from_check(empirical_w1_to_dirac <= cfg.f64("tol_w1")?),
        ),
        (
            "contrast_spread",
            Verdict::from_check(contrast_mass_near_zero <= cfg.f64("tol_contrast")?),
        ),
        (
            "uniqueness",
            if contrast.multiple_fixed_vectors {
                Verdict::Flagged
            } else {
                Verdict::Pass
            },
        ),
    ];

    Ok(InstabilityOutcome {
        trials: trial_rows,
        escaped_fraction,
        mean_escape_steps,
        max_escape_steps,
        funnel_checks,
        funnel_max_final_distance,
        band_s: lo,
        band_u: hi,
        funnel_radius: p_u,
        empirical_mass_near_zero,
        empirical_w1_to_dirac,
        empirical_samples: emp.len(),
        contrast_mass_near_zero,
        verdicts,
    })
}

#[derive(Clone, Debug)]
pub struct MixingRow {
    pub start: f64,
    pub length: f64,
    pub cover_time: Option<u32>,
    pub final_length: f64,
    pub lengths: Vec<f64>,
}

/// Parse `start:end` into an arc; `end` may exceed 1 to wrap past 0.
pub fn parse_arc(item: &str) -> Result<(f64, f64)> {
    let (a, b) = item
        .split_once(':')
        .ok_or_else(|| LabError::Config(format!("arc `{item}` must be start:end")))?;
    let a: f64 = a
        .trim()
        .parse()
        .map_err(|_| LabError::Config(format!("arc `{item}`: bad start")))?;
    let b: f64 = b
        .trim()
        .parse()
        .map_err(|_| LabError::Config(format!("arc `{item}`: bad end")))?;
    let len = b - a;
    if !(len > 0.0 && len <= 1.0) || !a.is_finite() {
        return Err(LabError::Config(format!(
            "arc `{item}` must have length in (0, 1], got {len}"
        )));
    }
    Ok((a, len))
}

/// Iterate each test arc under the base map until its image covers the
/// circle. Exhaustion is a flagged row, not an error.
pub fn run_mixing(cfg: &mut Config) -> Result<(Vec<MixingRow>, Vec<(&'static str, Verdict)>)> {
    check_experiment_tag(cfg, "mixing")?;
    cfg.ensure("nmax", "100000");
    let alpha = cfg.f64("alpha")?;
    let n_max = cfg.u32("nmax")?;
    let map = IntermittentMap::new(alpha)?;

    let mut rows = Vec::new();
    for item in cfg.str_list("arcs")? {
        let (start, length) = parse_arc(&item)?;
        let arc = lab_core::circle::Arc::new(CirclePoint::wrap(start), length)
            .map_err(LabError::Numeric)?;
        let trace = covering_time(&map, &arc, n_max);
        rows.push(MixingRow {
            start,
            length,
            cover_time: trace.cover_time,
            final_length: *trace.lengths.last().unwrap(),
            lengths: trace.lengths,
        });
    }
    let all_covered = rows.iter().all(|r| r.cover_time.is_some());
    let verdicts = vec![(
        "coverage",
        if all_covered { Verdict::Pass } else { Verdict::Flagged },
    )];
    Ok((rows, verdicts))
}
