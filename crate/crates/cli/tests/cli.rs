use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_passive-qkd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parse "label: max secure distance X km" from a summary.
fn reach(summary: &str, label: &str) -> f64 {
    let prefix = format!("{label}: max secure distance ");
    let line = summary
        .lines()
        .find(|l| l.starts_with(&prefix))
        .unwrap_or_else(|| panic!("no reach for {label} in\n{summary}"));
    line[prefix.len()..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

fn data_rows(table: &str) -> Vec<Vec<String>> {
    table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

const TABLE_ONE: &str = r#"
name = "custom"
mode = "trusted-bb84"

[scheme]
t_b = 0.9
t_d = 0.76
mu = 1e6
eta = 1e-7

[channel]
eta_b = 0.045
alpha_prime = 0.21
y0 = 1.7e-6
e_det = 0.033
e0 = 0.5

[sweep]
l_start = 0
l_end = 20
l_step = 5
"#;

const PIPELINE: &str = r#"
name = "pipeline"
mode = "mc-pipeline"
alpha = 0.05
seed = 11

[scheme]
t_b = 0.9
t_d = 0.76
mu = 14619.883
lambda = 1e-3

[channel]
eta_b = 0.045
alpha_prime = 0.21
y0 = 1.7e-6
e_det = 0.033
e0 = 0.5

[noise]
kind = "gaussian"
sigma2 = 1e3

[window]
kind = "auto-minmax"

[monte_carlo]
trials = 200000
"#;

#[test]
fn lists_bundled_scenarios() {
    let out = run(&["list-scenarios"]);
    assert!(out.status.success());
    let names: Vec<String> = text(&out.stdout)
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    assert_eq!(names, ["sec2-apn", "fig4a", "fig4b", "fig6a", "fig6b"]);
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["sec2-apn", "fig4a", "fig4b", "fig6a", "fig6b"] {
        let out = run(&["validate", name]);
        assert!(out.status.success(), "{name}: {}", text(&out.stderr));
        assert!(text(&out.stdout).starts_with("valid\t"));
    }
}

#[test]
fn apn_and_trusted_thresholds() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("sec2.tsv");
    let out = run(&["run", "sec2-apn", "--output", arg(&table)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let summary = text(&out.stdout);
    assert!((reach(&summary, "apn") - 24.7).abs() <= 0.1, "{summary}");
    assert!(
        (reach(&summary, "trusted") - 63.0).abs() <= 0.5,
        "{summary}"
    );
}

#[test]
fn fixed_eta_apn_dies_within_a_kilometre() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("fig4b.tsv");
    let out = run(&["run", "fig4b", "-o", arg(&table)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let summary = text(&out.stdout);
    assert!(reach(&summary, "apn") < 1.0, "{summary}");
    // the PNA sits between the APN monitor and the trusted source
    let rows = data_rows(&fs::read_to_string(&table).unwrap());
    let rate = |label: &str, l: &str| -> f64 {
        rows.iter().find(|r| r[0] == label && r[2] == l).unwrap()[3]
            .parse()
            .unwrap()
    };
    for l in ["0", "10", "30"] {
        assert!(rate("apn", l) <= rate("pna", l) && rate("pna", l) <= rate("trusted", l));
    }
}

#[test]
fn table_header_records_version_and_config() {
    let out = run(&["run", "sec2-apn", "--alpha", "0.01", "--seed", "5"]);
    assert!(out.status.success());
    let table = text(&out.stdout);
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        format!("# passive-qkd {}", env!("CARGO_PKG_VERSION"))
    );
    assert!(table.lines().any(|l| l == "#   alpha = 0.01"));
    assert!(table.lines().any(|l| l == "#   seed = 5"));
    let header = table.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "curve\tmode\tL_km\trate\tQ\tE\tdelta_bar\tuntagged_lower\tflags"
    );
    // the summary goes to stderr when the table takes stdout
    assert!(text(&out.stderr).contains("apn: max secure distance"));
}

#[test]
fn rows_follow_the_sweep() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.toml", TABLE_ONE);
    let out = run(&["run", arg(&path)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rows = data_rows(&text(&out.stdout));
    let ls: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(ls, ["0", "5", "10", "15", "20"]);
}

#[test]
fn empty_sweep_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "s.toml",
        &TABLE_ONE.replace("l_start = 0", "l_start = 20"),
    );
    let out = run(&["run", arg(&path)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rows = data_rows(&text(&out.stdout));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], "20");
}

#[test]
fn schema_violations_are_all_listed() {
    let dir = TempDir::new().unwrap();
    let body = TABLE_ONE
        .replace("t_d = 0.76", "t_d = \"high\"")
        .replace("e0 = 0.5", "e0 = 0.5\nshade = 2")
        .replace("eta_b = 0.045\n", "");
    let path = write(&dir, "s.toml", &body);
    let out = run(&["validate", arg(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    for field in ["scheme.t_d", "channel.shade", "channel.eta_b"] {
        assert!(
            err.lines()
                .any(|l| l.starts_with(&format!("invalid\t{field}\t"))),
            "{field}: {err}"
        );
    }
}

#[test]
fn decoy_constraints_are_reported() {
    let dir = TempDir::new().unwrap();
    // Case II splitter: λ_s may not exceed t_B t_D / (1 - t_B) = 0.45
    let body = TABLE_ONE
        .replace("trusted-bb84", "trusted-decoy")
        .replace("t_d = 0.76", "t_d = 0.05")
        + "\n[decoy]\nnu_s = 0.1\nnu_d = 0.5\nlambda_s = 0.7\nlambda_d = 0.1\n";
    let path = write(&dir, "s.toml", &body);
    let out = run(&["validate", arg(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(
        err.contains("invalid\tdecoy.nu_d\tordering violated"),
        "{err}"
    );
    assert!(
        err.contains("invalid\tdecoy.lambda_s\tconstraint violated"),
        "{err}"
    );
    assert!(err.contains("t_B t_D / (1 - t_B)"), "{err}");
}

#[test]
fn mode_requirements_are_checked() {
    let dir = TempDir::new().unwrap();
    let body = TABLE_ONE.replace("trusted-bb84", "pna-decoy");
    let path = write(&dir, "s.toml", &body);
    let out = run(&["validate", arg(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("invalid\tdecoy\t"), "{err}");
    assert!(err.contains("invalid\twindow\t"), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let out = run(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(4));
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "s.toml", TABLE_ONE);
    let out = run(&["run", arg(&path), "-o", "/nonexistent/dir/out.tsv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn pipeline_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "p.toml", PIPELINE);
    let table = |threads: &str, seed: &str| {
        let out = run(&["run", arg(&path), "--threads", threads, "--seed", seed]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        text(&out.stdout)
    };
    let one = table("1", "11");
    assert_eq!(one, table("3", "11"));
    assert_ne!(one, table("1", "12"));
    let rows = data_rows(&one);
    assert_eq!(rows.len(), 1);
    let bound: f64 = rows[0][7].parse().unwrap();
    assert!(bound > 0.9 && bound <= 1.0, "{bound}");
}

#[test]
fn degenerate_bound_exits_with_three() {
    let dir = TempDir::new().unwrap();
    // dark counts far wider than the window: leak and keep coincide
    let body = PIPELINE.replace(
        "kind = \"gaussian\"\nsigma2 = 1e3",
        "kind = \"poisson\"\ngamma = 4e3",
    );
    let path = write(&dir, "p.toml", &body);
    let table = dir.path().join("out.tsv");
    let out = run(&["run", arg(&path), "-o", arg(&table)]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    let written = fs::read_to_string(&table).unwrap();
    assert!(written.contains("degenerate-untagged-bound"));
    assert!(text(&out.stdout).contains("R_SN_p = <m>/gamma = 2.5"));
}
