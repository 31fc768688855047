//! Subcommand surface. Grammar: `lab <subcommand> [--config file]
//! [--key value ...]`. Every flag is a config key and flags win over file
//! values. Exit codes: 0 pass, 1 a verdict failed, 2 config error,
//! 3 numeric error.

use std::path::PathBuf;
use std::time::Instant;

use lab_core::circle::{Arc, CirclePoint};
use lab_core::diagnostics::{
    block_entropy, distortion_constant, expansion_gap, partition_diameter, pesin_residual,
    EntropyEstimate,
};
use lab_core::dynamics::{choose_expansion_band, saddle_sequence, IntermittentMap};
use lab_core::measures::{tv_grid, w1_circle, MeasureRef};
use lab_core::perturbation::{NoiseKernel, RandomSystem};
use lab_core::sampling::{random_orbit, SeedPolicy};
use lab_core::transfer::{assemble_annealed, assemble_deterministic, stationary, GridMeasure};
use serde_json::{json, Map, Value};

use crate::config::Config;
use crate::experiments::{
    self, run_instability, run_mixing, run_thm_a, run_thm_b, SweepOutcome,
};
use crate::report::{
    config_json, csv_text, fmt_f64, json_to_string, resolve_out, version, write_file, Verdict,
};
use crate::{LabError, Result};

const SUBCOMMANDS: &[&str] = &[
    "ulam",
    "orbit",
    "escape",
    "measure",
    "diagnose",
    "sweep-a",
    "sweep-b",
    "instability",
    "mixing",
];

pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<i32> {
    let Some(sub) = args.first() else {
        return Err(LabError::Config(format!(
            "usage: lab <subcommand> [--config file] [--key value ...]; subcommands: {}",
            SUBCOMMANDS.join(", ")
        )));
    };
    let cfg = parse_flags(&args[1..])?;
    let t0 = Instant::now();
    let code = match sub.as_str() {
        "ulam" => cmd_ulam(cfg),
        "orbit" => cmd_orbit(cfg),
        "escape" => cmd_escape(cfg),
        "measure" => cmd_measure(cfg),
        "diagnose" => cmd_diagnose(cfg),
        "sweep-a" => cmd_sweep_a(cfg),
        "sweep-b" => cmd_sweep_b(cfg),
        "instability" => cmd_instability(cfg),
        "mixing" => cmd_mixing(cfg),
        other => Err(LabError::Config(format!(
            "unknown subcommand `{other}`; expected one of: {}",
            SUBCOMMANDS.join(", ")
        ))),
    }?;
    // Wall-clock stays out of the files so emission is byte-deterministic.
    eprintln!("{sub}: {:.3} s", t0.elapsed().as_secs_f64());
    Ok(code)
}

/// `--config` loads first so the remaining flags can override file values.
fn parse_flags(rest: &[String]) -> Result<Config> {
    let mut pairs = Vec::new();
    let mut config_path: Option<PathBuf> = None;
    let mut i = 0;
    while i < rest.len() {
        let key = rest[i].strip_prefix("--").ok_or_else(|| {
            LabError::Config(format!("expected `--key value`, got `{}`", rest[i]))
        })?;
        let value = rest
            .get(i + 1)
            .ok_or_else(|| LabError::Config(format!("flag `--{key}` needs a value")))?;
        if key == "config" {
            config_path = Some(PathBuf::from(value));
        } else {
            pairs.push((key.to_string(), value.clone()));
        }
        i += 2;
    }
    let mut cfg = match config_path {
        Some(p) => Config::load(&p)?,
        None => Config::new(),
    };
    for (k, v) in pairs {
        cfg.set(&k, &v);
    }
    Ok(cfg)
}

/// The random system named by `mode`, `alpha`, and `eps`. Deterministic
/// means a degenerate kernel at draw 0; parametric noise of size eps means
/// parameters uniform on [1 - eps, 1], the one-sided unfolding below the
/// base map.
fn build_system(cfg: &Config) -> Result<RandomSystem> {
    let alpha = cfg.f64("alpha")?;
    let sys = match cfg.require("mode")? {
        "additive" => RandomSystem::additive(alpha, NoiseKernel::uniform(cfg.f64("eps")?)?)?,
        "parametric" => {
            let eps = cfg.f64("eps")?;
            RandomSystem::parametric(alpha, NoiseKernel::interval(1.0 - eps, 1.0)?)?
        }
        "deterministic" => RandomSystem::additive(alpha, NoiseKernel::degenerate(0.0)?)?,
        other => {
            return Err(LabError::Config(format!(
                "mode must be additive, parametric, or deterministic; got `{other}`"
            )))
        }
    };
    Ok(sys)
}

fn exit_from(verdicts: &[(&'static str, Verdict)]) -> i32 {
    if verdicts.iter().any(|(_, v)| v.failed()) {
        1
    } else {
        0
    }
}

fn cmd_ulam(mut cfg: Config) -> Result<i32> {
    cfg.ensure("mode", "additive");
    experiments::ensure_stationary_defaults(&mut cfg);
    cfg.ensure("out", "density.csv");
    let cells = cfg.usize("cells")?;
    let quad = cfg.usize("quad_order")?;
    let settings = experiments::stationary_settings(&cfg)?;

    let matrix = match cfg.require("mode")? {
        "deterministic" => {
            let alpha = cfg.f64("alpha")?;
            assemble_deterministic(&IntermittentMap::new(alpha)?, cells)?
        }
        _ => assemble_annealed(&build_system(&cfg)?, cells, quad)?,
    };
    let res = stationary(&matrix, &settings)?;
    eprintln!(
        "stationary: {} iterations, residual {:.2e}{}",
        res.iterations,
        res.residual,
        if res.multiple_fixed_vectors {
            " (flagged: starts disagree)"
        } else {
            ""
        }
    );

    let n = res.measure.n_cells() as f64;
    let rows: Vec<Vec<String>> = res
        .measure
        .weights()
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            vec![
                j.to_string(),
                fmt_f64(res.measure.cell_left(j)),
                fmt_f64(w),
                fmt_f64(w * n),
            ]
        })
        .collect();
    let text = csv_text(&cfg.echo_lines(), "cell_index,cell_left,weight,density", &rows);
    write_file(&resolve_out(cfg.require("out")?), &text)?;
    Ok(0)
}

fn cmd_orbit(mut cfg: Config) -> Result<i32> {
    cfg.ensure("mode", "additive");
    cfg.ensure("seed", "0");
    cfg.ensure("stream", "0");
    cfg.ensure("out", "orbit.csv");
    let sys = build_system(&cfg)?;
    let x0 = CirclePoint::wrap(cfg.f64("x0")?);
    let steps = cfg.u64("steps")?;
    let policy = SeedPolicy::new(cfg.u64("seed")?);
    let orbit = random_orbit(&sys, x0, steps, policy, cfg.u64("stream")?)?;

    let mut rows = Vec::with_capacity(orbit.states.len());
    rows.push(vec![
        "0".to_string(),
        fmt_f64(orbit.states[0].value()),
        String::new(),
        String::new(),
    ]);
    for i in 1..orbit.states.len() {
        rows.push(vec![
            i.to_string(),
            fmt_f64(orbit.states[i].value()),
            fmt_f64(orbit.draws[i - 1]),
            fmt_f64(orbit.log_derivs[i - 1]),
        ]);
    }
    let text = csv_text(&cfg.echo_lines(), "step,state,draw,log_deriv", &rows);
    write_file(&resolve_out(cfg.require("out")?), &text)?;
    Ok(0)
}

fn escape_rows_to_csv(rows: &[experiments::EscapeTrialRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.trial.to_string(),
                fmt_f64(r.x0),
                r.escape_step.map(|s| s.to_string()).unwrap_or_default(),
                r.escaped().to_string(),
            ]
        })
        .collect()
}

fn cmd_escape(mut cfg: Config) -> Result<i32> {
    cfg.ensure("trials", "1000");
    cfg.ensure("nmax", "1000000");
    cfg.ensure("seed", "0");
    cfg.ensure("out", "escape.csv");
    let alpha = cfg.f64("alpha")?;
    let s = cfg.f64("s")?;
    let band = choose_expansion_band(alpha, s)?;
    let (lo, hi) = band.parameter_support();
    let sys = RandomSystem::parametric(alpha, NoiseKernel::interval(lo, hi)?)?;
    let rows = experiments::escape_ensemble(
        &sys,
        &band,
        cfg.u64("trials")?,
        cfg.u64("nmax")?,
        SeedPolicy::new(cfg.u64("seed")?),
    )?;
    let escaped = rows.iter().filter(|r| r.escaped()).count();
    eprintln!(
        "escape: {}/{} trials escaped (band [{lo:.6}, {hi:.6}], funnel radius {:.6})",
        escaped,
        rows.len(),
        band.funnel_radius()
    );
    let text = csv_text(
        &cfg.echo_lines(),
        "trial,x0,escape_step,escaped",
        &escape_rows_to_csv(&rows),
    );
    write_file(&resolve_out(cfg.require("out")?), &text)?;
    Ok(0)
}

/// Read a density CSV back into a grid measure; `#` lines and the header
/// are skipped, rows must be in cell order.
fn read_density(path: &std::path::Path) -> Result<GridMeasure> {
    let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut weights = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("cell_index") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(LabError::Config(format!(
                "{}: expected 4 columns, got {}",
                path.display(),
                fields.len()
            )));
        }
        let idx: usize = fields[0].parse().map_err(|_| {
            LabError::Config(format!("{}: bad cell_index `{}`", path.display(), fields[0]))
        })?;
        if idx != weights.len() {
            return Err(LabError::Config(format!(
                "{}: rows out of order at cell {idx}",
                path.display()
            )));
        }
        let w: f64 = fields[2].parse().map_err(|_| {
            LabError::Config(format!("{}: bad weight `{}`", path.display(), fields[2]))
        })?;
        weights.push(w);
    }
    Ok(GridMeasure::from_unnormalized(weights)?)
}

fn cmd_measure(mut cfg: Config) -> Result<i32> {
    cfg.ensure("metric", "w1");
    let a = read_density(&resolve_out(cfg.require("a")?))?;
    let b = read_density(&resolve_out(cfg.require("b")?))?;
    let d = match cfg.require("metric")? {
        "w1" => w1_circle(MeasureRef::Grid(&a), MeasureRef::Grid(&b))?,
        "tv" => tv_grid(&a, &b)?,
        other => {
            return Err(LabError::Config(format!(
                "metric must be w1 or tv, got `{other}`"
            )))
        }
    };
    println!("{}", fmt_f64(d));
    Ok(0)
}

fn entropy_blocks_json(est: &EntropyEstimate) -> Value {
    let blocks: Vec<Value> = est
        .block_lengths
        .iter()
        .zip(&est.h_values)
        .zip(&est.h_std_errors)
        .zip(&est.undersampled)
        .map(|(((n, h), se), us)| {
            json!({"n": n, "rate": h, "std_error": se, "undersampled": us})
        })
        .collect();
    let (rate, undersampled) = est.rate();
    json!({
        "k_cells": est.k_cells,
        "samples_per_block": est.samples_per_block,
        "blocks": blocks,
        "rate": rate,
        "rate_undersampled": undersampled,
    })
}

/// Stationary grid measure matching the configured system, used as the
/// start distribution for entropy sampling and as the integrand weight.
fn stationary_for_cfg(cfg: &Config, sys: &RandomSystem) -> Result<GridMeasure> {
    let cells = cfg.usize("cells")?;
    let settings = experiments::stationary_settings(cfg)?;
    let matrix = if sys.kernel().is_degenerate() {
        assemble_deterministic(&IntermittentMap::new(cfg.f64("alpha")?)?, cells)?
    } else {
        assemble_annealed(sys, cells, cfg.usize("quad_order")?)?
    };
    Ok(stationary(&matrix, &settings)?.measure)
}

fn cmd_diagnose(mut cfg: Config) -> Result<i32> {
    cfg.ensure("mode", "additive");
    cfg.ensure("seed", "0");
    cfg.ensure("out", "diagnose.json");
    let what = cfg.require("what")?.to_string();
    let policy = SeedPolicy::new(cfg.u64("seed")?);

    let result: Value = match what.as_str() {
        "entropy" => {
            experiments::ensure_stationary_defaults(&mut cfg);
            cfg.ensure("cells", "1024");
            cfg.ensure("k", "16");
            cfg.ensure("nmax", "8");
            cfg.ensure("nomega", "32");
            cfg.ensure("samples", "100000");
            let sys = build_system(&cfg)?;
            let mu = stationary_for_cfg(&cfg, &sys)?;
            let est = block_entropy(
                &sys,
                MeasureRef::Grid(&mu),
                cfg.usize("k")?,
                cfg.u32("nmax")?,
                cfg.usize("nomega")?,
                cfg.u64("samples")?,
                policy,
            )?;
            entropy_blocks_json(&est)
        }
        "pesin" => {
            experiments::ensure_stationary_defaults(&mut cfg);
            cfg.ensure("cells", "1024");
            cfg.ensure("k", "16");
            cfg.ensure("nmax", "8");
            cfg.ensure("nomega", "32");
            cfg.ensure("samples", "100000");
            let sys = build_system(&cfg)?;
            let mu = stationary_for_cfg(&cfg, &sys)?;
            let est = block_entropy(
                &sys,
                MeasureRef::Grid(&mu),
                cfg.usize("k")?,
                cfg.u32("nmax")?,
                cfg.usize("nomega")?,
                cfg.u64("samples")?,
                policy,
            )?;
            let rep = pesin_residual(&sys, &mu, &est)?;
            json!({
                "entropy": entropy_blocks_json(&est),
                "entropy_rate": rep.entropy_rate,
                "rhs": rep.rhs,
                "residual": rep.residual,
                "undersampled": rep.undersampled,
            })
        }
        "distortion" => {
            cfg.ensure("r", "0.05");
            let draws = cfg.f64_list("draws")?;
            let (start, length) = experiments::parse_arc(cfg.require("interval")?)?;
            let maps = saddle_sequence(cfg.f64("alpha")?, &draws)?;
            let arc = Arc::new(CirclePoint::wrap(start), length)?;
            let rep = distortion_constant(&maps, &arc, cfg.f64("r")?)?;
            json!({
                "interval": {"start": rep.interval.start().value(), "length": rep.interval.length()},
                "depth": rep.depth,
                "constant": rep.constant,
            })
        }
        "gap" => {
            cfg.ensure("xgrid", "1024");
            let sys = build_system(&cfg)?;
            let rep = expansion_gap(&sys, cfg.f64("delta0")?, cfg.f64("rho0")?, cfg.usize("xgrid")?)?;
            let (t, x, y) = rep.witness;
            json!({
                "delta0": rep.delta0,
                "rho0": rep.rho0,
                "beta": rep.beta,
                "witness": {"t": t, "x": x, "y": y},
            })
        }
        "partition" => {
            cfg.ensure("k", "16");
            cfg.ensure("n", "8");
            cfg.ensure("stream", "0");
            let sys = build_system(&cfg)?;
            let d = partition_diameter(
                &sys,
                cfg.usize("k")?,
                cfg.u32("n")?,
                policy,
                cfg.u64("stream")?,
            )?;
            json!({"k_cells": cfg.usize("k")?, "n": cfg.u32("n")?, "diameter": d})
        }
        other => {
            return Err(LabError::Config(format!(
                "what must be entropy, pesin, distortion, gap, or partition; got `{other}`"
            )))
        }
    };

    let record = json!({
        "version": version(),
        "config": config_json(&cfg),
        "what": what,
        "result": result,
    });
    write_file(&resolve_out(cfg.require("out")?), &json_to_string(&record))?;
    Ok(0)
}

fn verdicts_json(verdicts: &[(&'static str, Verdict)]) -> Value {
    Value::Object(
        verdicts
            .iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.as_str().to_string())))
            .collect(),
    )
}

fn sweep_row_json(row: &experiments::SweepRow) -> Value {
    let mut m = Map::new();
    m.insert("eps".into(), json!(row.eps));
    m.insert("w1_to_dirac".into(), json!(row.w1_to_dirac));
    if let Some(v) = row.w1_to_srb {
        m.insert("w1_to_srb".into(), json!(v));
    }
    m.insert("mass_near_zero".into(), json!(row.mass_near_zero));
    if let Some(v) = row.mixture_t {
        m.insert("mixture_t".into(), json!(v));
    }
    if let Some(v) = row.mixture_distance {
        m.insert("mixture_distance".into(), json!(v));
    }
    Value::Object(m)
}

fn emit_sweep(
    cfg: &Config,
    outcome: &SweepOutcome,
    header: &str,
    row_cells: impl Fn(&experiments::SweepRow) -> Vec<String>,
) -> Result<i32> {
    let rows: Vec<Vec<String>> = outcome.rows.iter().map(row_cells).collect();
    let text = csv_text(&cfg.echo_lines(), header, &rows);
    write_file(&resolve_out(cfg.require("out_csv")?), &text)?;

    let mut summary = Map::new();
    for (k, v) in &outcome.summary {
        summary.insert(k.to_string(), json!(v));
    }
    let record = json!({
        "version": version(),
        "config": config_json(cfg),
        "rows": outcome.rows.iter().map(sweep_row_json).collect::<Vec<_>>(),
        "summary": Value::Object(summary),
        "verdicts": verdicts_json(&outcome.verdicts),
    });
    write_file(&resolve_out(cfg.require("out_json")?), &json_to_string(&record))?;

    for (name, v) in &outcome.verdicts {
        eprintln!("verdict {name}: {}", v.as_str());
    }
    Ok(exit_from(&outcome.verdicts))
}

fn cmd_sweep_a(mut cfg: Config) -> Result<i32> {
    cfg.ensure("out_csv", "sweep_a.csv");
    cfg.ensure("out_json", "sweep_a.json");
    let outcome = run_thm_a(&mut cfg)?;
    emit_sweep(
        &cfg,
        &outcome,
        "eps,w1_to_dirac,w1_to_srb,mass_near_zero,mixture_t,mixture_distance",
        |r| {
            vec![
                fmt_f64(r.eps),
                fmt_f64(r.w1_to_dirac),
                fmt_f64(r.w1_to_srb.unwrap()),
                fmt_f64(r.mass_near_zero),
                fmt_f64(r.mixture_t.unwrap()),
                fmt_f64(r.mixture_distance.unwrap()),
            ]
        },
    )
}

fn cmd_sweep_b(mut cfg: Config) -> Result<i32> {
    cfg.ensure("out_csv", "sweep_b.csv");
    cfg.ensure("out_json", "sweep_b.json");
    let outcome = run_thm_b(&mut cfg)?;
    emit_sweep(&cfg, &outcome, "eps,w1_to_dirac,mass_near_zero", |r| {
        vec![
            fmt_f64(r.eps),
            fmt_f64(r.w1_to_dirac),
            fmt_f64(r.mass_near_zero),
        ]
    })
}

fn cmd_instability(mut cfg: Config) -> Result<i32> {
    cfg.ensure("out_csv", "escape.csv");
    cfg.ensure("out_json", "instability.json");
    let out = run_instability(&mut cfg)?;

    let text = csv_text(
        &cfg.echo_lines(),
        "trial,x0,escape_step,escaped",
        &escape_rows_to_csv(&out.trials),
    );
    write_file(&resolve_out(cfg.require("out_csv")?), &text)?;

    let record = json!({
        "version": version(),
        "config": config_json(&cfg),
        "band": {"s": out.band_s, "u": out.band_u, "funnel_radius": out.funnel_radius},
        "escape": {
            "trials": out.trials.len(),
            "escaped_fraction": out.escaped_fraction,
            "mean_escape_steps": out.mean_escape_steps,
            "max_escape_steps": out.max_escape_steps,
        },
        "funnel": {
            "checks": out.funnel_checks,
            "max_final_distance": out.funnel_max_final_distance,
        },
        "empirical": {
            "samples": out.empirical_samples,
            "mass_near_zero": out.empirical_mass_near_zero,
            "w1_to_dirac": out.empirical_w1_to_dirac,
        },
        "contrast": {"mass_near_zero": out.contrast_mass_near_zero},
        "verdicts": verdicts_json(&out.verdicts),
    });
    write_file(&resolve_out(cfg.require("out_json")?), &json_to_string(&record))?;

    for (name, v) in &out.verdicts {
        eprintln!("verdict {name}: {}", v.as_str());
    }
    Ok(exit_from(&out.verdicts))
}

fn cmd_mixing(mut cfg: Config) -> Result<i32> {
    cfg.ensure("out_csv", "mixing.csv");
    cfg.ensure("out_json", "mixing.json");
    let (rows, verdicts) = run_mixing(&mut cfg)?;

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.start),
                fmt_f64(r.length),
                r.cover_time.map(|t| t.to_string()).unwrap_or_default(),
                fmt_f64(r.final_length),
            ]
        })
        .collect();
    let text = csv_text(
        &cfg.echo_lines(),
        "arc_start,arc_length,cover_time,final_length",
        &csv_rows,
    );
    write_file(&resolve_out(cfg.require("out_csv")?), &text)?;

    let json_rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "start": r.start,
                "length": r.length,
                "cover_time": r.cover_time,
                "final_length": r.final_length,
                "lengths": r.lengths,
            })
        })
        .collect();
    let record = json!({
        "version": version(),
        "config": config_json(&cfg),
        "rows": json_rows,
        "verdicts": verdicts_json(&verdicts),
    });
    write_file(&resolve_out(cfg.require("out_json")?), &json_to_string(&record))?;

    for (name, v) in &verdicts {
        eprintln!("verdict {name}: {}", v.as_str());
    }
    Ok(exit_from(&verdicts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_grammar_errors() {
        let args = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(parse_flags(&args(&["alpha", "0.5"])).is_err());
        assert!(parse_flags(&args(&["--alpha"])).is_err());
        let cfg = parse_flags(&args(&["--alpha", "0.5", "--cells", "64"])).unwrap();
        assert_eq!(cfg.get("alpha"), Some("0.5"));
        assert_eq!(cfg.get("cells"), Some("64"));
    }

    #[test]
    fn unknown_subcommand_and_mode_are_config_errors() {
        let args: Vec<String> = vec!["frobnicate".into()];
        assert_eq!(run(&args), 2);

        let mut cfg = Config::new();
        cfg.set("alpha", "0.5");
        cfg.set("mode", "annealed");
        cfg.set("eps", "0.01");
        assert_eq!(build_system(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn deterministic_mode_builds_a_degenerate_system() {
        let mut cfg = Config::new();
        cfg.set("alpha", "0.5");
        cfg.set("mode", "deterministic");
        let sys = build_system(&cfg).unwrap();
        assert!(sys.kernel().is_degenerate());
    }
}
