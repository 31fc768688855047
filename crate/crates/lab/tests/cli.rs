//! End-to-end runs of the compiled binary: flag grammar, file layout,
//! and exit codes, all against temporary output roots.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lab(out_root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .env("LAB_OUT", out_root)
        .env_remove("LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn read(dir: &TempDir, name: &str) -> String {
    std::fs::read_to_string(dir.path().join(name)).expect("output file exists")
}

fn data_rows(csv: &str) -> Vec<String> {
    csv.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.to_string())
        .collect()
}

#[test]
fn ulam_writes_a_normalized_density_grid() {
    let dir = TempDir::new().unwrap();
    let out = lab(
        dir.path(),
        &["ulam", "--alpha", "0.5", "--eps", "0.05", "--cells", "64"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = read(&dir, "density.csv");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 64);
    let mut total = 0.0;
    for (j, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4);
        assert_eq!(fields[0], j.to_string());
        let w: f64 = fields[2].parse().unwrap();
        let dens: f64 = fields[3].parse().unwrap();
        assert!((dens - w * 64.0).abs() < 1e-18);
        total += w;
    }
    assert!((total - 1.0).abs() < 1e-9, "weights sum to {total}");
    assert!(csv.contains("# alpha = 0.5\n"), "config echo missing");
    assert!(!csv.contains('\r'));
}

#[test]
fn ulam_deterministic_mode_skips_the_kernel() {
    let dir = TempDir::new().unwrap();
    let out = lab(
        dir.path(),
        &["ulam", "--mode", "deterministic", "--alpha", "0.5", "--cells", "128"],
    );
    assert!(out.status.success());
    let rows = data_rows(&read(&dir, "density.csv"));
    assert_eq!(rows.len(), 128);
    let head: f64 = rows[0].split(',').nth(3).unwrap().parse().unwrap();
    let mid: f64 = rows[64].split(',').nth(3).unwrap().parse().unwrap();
    assert!(head > 2.0 * mid, "density should peak at the neutral point");
}

#[test]
fn orbit_rows_align_steps_with_their_generating_draws() {
    let dir = TempDir::new().unwrap();
    let out = lab(
        dir.path(),
        &[
            "orbit", "--alpha", "0.5", "--eps", "0.01", "--x0", "0.3", "--steps", "5",
        ],
    );
    assert!(out.status.success());
    let rows = data_rows(&read(&dir, "orbit.csv"));
    assert_eq!(rows.len(), 6);
    let first: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(first[0], "0");
    assert!(first[2].is_empty() && first[3].is_empty());
    for (i, row) in rows.iter().enumerate().skip(1) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], i.to_string());
        assert!(fields[2].parse::<f64>().is_ok());
        assert!(fields[3].parse::<f64>().is_ok());
    }
}

#[test]
fn measure_compares_two_density_files() {
    let dir = TempDir::new().unwrap();
    lab(dir.path(), &["ulam", "--alpha", "0.5", "--eps", "0.05", "--cells", "64", "--out", "a.csv"]);
    lab(dir.path(), &["ulam", "--alpha", "0.5", "--eps", "0.02", "--cells", "64", "--out", "b.csv"]);

    let same = lab(dir.path(), &["measure", "--a", "a.csv", "--b", "a.csv", "--metric", "tv"]);
    assert!(same.status.success());
    let d: f64 = String::from_utf8_lossy(&same.stdout).trim().parse().unwrap();
    assert_eq!(d, 0.0);

    let diff = lab(dir.path(), &["measure", "--a", "a.csv", "--b", "b.csv"]);
    assert!(diff.status.success());
    let w1: f64 = String::from_utf8_lossy(&diff.stdout).trim().parse().unwrap();
    assert!(w1 > 0.0 && w1 <= 0.5);
}

#[test]
fn escape_reports_every_trial() {
    let dir = TempDir::new().unwrap();
    let out = lab(
        dir.path(),
        &["escape", "--alpha", "0.5", "--s", "0.9", "--trials", "10"],
    );
    assert!(out.status.success());
    let rows = data_rows(&read(&dir, "escape.csv"));
    assert_eq!(rows.len(), 10);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[3], "true", "every ensemble member should escape");
        assert!(fields[2].parse::<u64>().is_ok());
    }
}

#[test]
fn mixing_covers_a_short_arc_quickly() {
    let dir = TempDir::new().unwrap();
    let out = lab(dir.path(), &["mixing", "--alpha", "1.0", "--arcs", "0.4:0.41"]);
    assert!(out.status.success());
    let rows = data_rows(&read(&dir, "mixing.csv"));
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split(',').collect();
    let t: u32 = fields[2].parse().expect("finite cover time");
    assert!(t > 0 && t < 100);

    let json: serde_json::Value =
        serde_json::from_str(&read(&dir, "mixing.json")).expect("valid json");
    assert_eq!(json["verdicts"]["coverage"], "pass");
    let lengths = json["rows"][0]["lengths"].as_array().unwrap();
    assert_eq!(lengths.len() as u64, fields[2].parse::<u64>().unwrap() + 1);
}

#[test]
fn diagnose_gap_emits_a_positive_certificate() {
    let dir = TempDir::new().unwrap();
    let out = lab(
        dir.path(),
        &[
            "diagnose", "--what", "gap", "--mode", "deterministic", "--alpha", "1.0",
            "--delta0", "0.1", "--rho0", "0.25",
        ],
    );
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&read(&dir, "diagnose.json")).expect("valid json");
    assert_eq!(json["what"], "gap");
    assert!(json["result"]["beta"].as_f64().unwrap() > 0.0);
    assert_eq!(json["config"]["alpha"], "1.0");
}

#[test]
fn sweep_b_reports_trends_and_surfaces_a_failed_verdict_in_the_exit_code() {
    let dir = TempDir::new().unwrap();
    let out = lab(
        dir.path(),
        &[
            "sweep-b", "--alpha", "1.5", "--eps_ladder", "0.05,0.005", "--cells", "256",
        ],
    );
    let json: serde_json::Value =
        serde_json::from_str(&read(&dir, "sweep_b.json")).expect("valid json");
    for name in ["w1_trend", "mass_trend", "uniqueness"] {
        assert_eq!(json["verdicts"][name], "pass", "verdict {name}");
    }
    // One decade of noise shrinks this distance by ~0.6x, not the hoped-for
    // half, so the halving verdict fails and the run must exit 1.
    assert_eq!(json["verdicts"]["w1_halving"], "fail");
    assert_eq!(out.status.code(), Some(1));
    let ratio = json["summary"]["w1_ratio_last_first"].as_f64().unwrap();
    assert!(ratio > 0.5 && ratio < 0.7, "ratio {ratio}");
    assert_eq!(data_rows(&read(&dir, "sweep_b.csv")).len(), 2);
}

#[test]
fn config_file_loads_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "# small run\nalpha = 0.5\neps = 0.05\ncells = 32\n",
    )
    .unwrap();
    let out = lab(
        dir.path(),
        &["ulam", "--config", cfg_path.to_str().unwrap(), "--cells", "16"],
    );
    assert!(out.status.success());
    let csv = read(&dir, "density.csv");
    assert_eq!(data_rows(&csv).len(), 16, "flag must beat the file value");
    assert!(csv.contains("# cells = 16\n"));
}

#[test]
fn absolute_out_paths_ignore_the_output_root() {
    let dir = TempDir::new().unwrap();
    let elsewhere = TempDir::new().unwrap();
    let abs = elsewhere.path().join("abs.csv");
    let out = lab(
        dir.path(),
        &[
            "ulam", "--alpha", "0.5", "--eps", "0.05", "--cells", "16",
            "--out", abs.to_str().unwrap(),
        ],
    );
    assert!(out.status.success());
    assert!(abs.exists());
    assert!(!dir.path().join("abs.csv").exists());
}

#[test]
fn config_mistakes_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let cases: &[&[&str]] = &[
        &["frobnicate"],
        &["ulam", "--eps", "0.05"],
        &["ulam", "--alpha", "0.5", "--eps", "0.05", "--mode", "annealed"],
        &["sweep-a", "--alpha", "1.2", "--eps_ladder", "0.05,0.02"],
        &["sweep-b", "--alpha", "1.5", "--eps_ladder", "0.005,0.05"],
        &["mixing", "--alpha", "1.0", "--arcs", "0.5"],
        &["ulam", "--alpha"],
        &["ulam", "alpha", "0.5"],
    ];
    for args in cases {
        let out = lab(dir.path(), args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "args {:?}: stderr {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn bad_thread_count_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(["ulam", "--alpha", "0.5", "--eps", "0.05", "--cells", "16"])
        .env("LAB_OUT", dir.path())
        .env("LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_tag_mismatch_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "experiment = thmA_sweep\nalpha = 1.5\neps_ladder = 0.05,0.02\ncells = 256\n",
    )
    .unwrap();
    let out = lab(dir.path(), &["sweep-b", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
