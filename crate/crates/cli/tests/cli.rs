use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use backvol_cli::report::read_report;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn backvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backvol"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_config(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    backvol(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn doubling_tail_is_a_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        "hitting-tail",
        &configs().join("doubling.toml"),
        dir.path(),
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("tail.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows[0][0], 1.0);
    assert_eq!(rows[0][1], 1.0);
    assert!(rows[1..].iter().all(|r| r[1] == 0.0));
}

#[test]
fn quadratic_verify_reports_every_base_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("verify", &configs().join("quadratic.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_report(&dir.path().join("report.json")).unwrap();
    assert_eq!(report.base_points.len(), 20);
    assert!(report.base_points.iter().all(|r| r.depths.len() == 18));
    assert!(dir.path().join("mindet.csv").is_file());
    assert!(dir.path().join("residuals.csv").is_file());
}

#[test]
fn missing_seed_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[system]\nkind = \"doubling\"\nd = 2\n[schedule_a]\nlambda = 0.5\n",
    );
    let o = run_config("verify", &config, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn out_of_range_parameter_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "seed = 1\n[system]\nkind = \"quadratic\"\na = 2.5\n[schedule_a]\nlambda = 0.35\n",
    );
    let o = run_config("hitting-tail", &config, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_schedule_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("quadratic.toml"))
        .unwrap()
        .replace("n0_max = 20", "n0_max = 1");
    let config = write_config(dir.path(), &text);
    let o = run_config("verify", &config, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn doubling_summary_reports_log_two_growth() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        "corollary",
        &configs().join("doubling.toml"),
        dir.path(),
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("σ regime: exponential, β = 0.693147"), "{s}");
    assert!(s.contains("certified: 20/20"), "{s}");
    assert!(!s.contains("WARNING"), "{s}");
}

#[test]
fn summary_flags_truncated_trees() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "seed = 3\n[system]\nkind = \"doubling\"\nd = 2\n[schedule_a]\nlambda = 0.5\n[tail]\nn_max = 20\n\
         [verify]\nbase_points = 3\ndepths = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]\nleaf_budget = 64\n",
    );
    let o = run_config("verify", &config, dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("certified: 0/3"), "{s}");
    assert!(s.contains("WARNING: 3/3 base points uncertified"), "{s}");
}

#[test]
fn report_command_reprints_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        "corollary",
        &configs().join("doubling.toml"),
        dir.path(),
        &[],
    );
    assert!(o.status.success());
    let again = backvol(&["run", "report", "--out", dir.path().to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(stdout(&again), stdout(&o));

    let empty = tempfile::tempdir().unwrap();
    let missing = backvol(&["run", "report", "--out", empty.path().to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        "hitting-tail",
        &configs().join("quadratic.toml"),
        dir.path(),
        &["--seed", "99"],
    );
    assert!(o.status.success());
    let report = read_report(&dir.path().join("report.json")).unwrap();
    assert_eq!(report.seed, 99);
}

#[test]
fn quadratic_summary_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        "corollary",
        &configs().join("quadratic.toml"),
        dir.path(),
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let golden = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/quadratic.txt"),
    )
    .unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn report_is_independent_of_thread_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = configs().join("quadratic.toml");
    assert!(
        run_config("corollary", &config, a.path(), &["--threads", "1"])
            .status
            .success()
    );
    assert!(
        run_config("corollary", &config, b.path(), &["--threads", "4"])
            .status
            .success()
    );
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert!(read(a.path()) == read(b.path()));
}

#[test]
fn shipped_configs_parse() {
    for name in [
        "doubling.toml",
        "quadratic.toml",
        "viana.toml",
        "reference.toml",
    ] {
        backvol_cli::ExperimentConfig::load(&configs().join(name))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
