use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shishkin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shishkin"));
    cmd.env_remove("SHISHKIN_OUT");
    cmd
}

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../problems")
        .join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    shishkin()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(o: &Output) -> String {
    stdout(o)
        .lines()
        .find(|l| l.starts_with("summary "))
        .unwrap_or_else(|| panic!("no summary line in {}", stdout(o)))
        .to_string()
}

fn field(summary: &str, key: &str) -> String {
    summary
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {summary}"))
        .to_string()
}

#[test]
fn solve_dumps_the_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "--mode",
            "solve",
            "--problem",
            "builtin:example1",
            "--N",
            "128",
            "--M",
            "32",
            "--epsilons",
            "2^-15,2^-14",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("solution.csv");
    let echoed: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| l.starts_with("wrote "))
        .map(String::from)
        .collect();
    assert_eq!(echoed, vec![format!("wrote {}", path.display())]);

    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["t_k", "x_j", "u_1", "u_2"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 33 * 129);
    assert!(rows.iter().all(|r| r.len() == 4));
    let s = summary(&o);
    assert!(s.starts_with("summary mode=solve "));
    assert!(field(&s, "wall_s").parse::<f64>().is_ok());
    // Nonnegative data, so the discrete solution is nonnegative.
    assert!(field(&s, "min").parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn time_sweep_reproduces_reference_footer() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--mode", "sweep-time", "--N", "128"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(&o);
    let p_star: f64 = field(&s, "p*").parse().unwrap();
    assert!((p_star - 0.98).abs() < 0.05, "{s}");

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(dir.path().join("sweep-time.csv"))
        .unwrap();
    let header = reader.headers().unwrap().clone();
    let table_cols: Vec<&str> = header.iter().skip(1).take(4).collect();
    assert_eq!(table_cols, ["M=32", "M=64", "M=128", "M=256"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let eta_rows = rows.iter().filter(|r| r[0].parse::<f64>().is_ok()).count();
    assert_eq!(eta_rows, 5);
    let p_row = rows.iter().find(|r| &r[0] == "p*").unwrap();
    assert_eq!(&p_row[1], "0.981E+00");
    let d_row = rows.iter().find(|r| &r[0] == "D").unwrap();
    assert_eq!(&d_row[1], "0.156E-01");
}

#[test]
fn sweeps_are_byte_identical_across_runs_and_policies() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--mode",
        "sweep-space",
        "--M",
        "8",
        "--eta",
        "2^-7,2^-9",
        "--resolutions",
        "32,64",
    ];
    let oa = run(&args, a.path());
    let mut seq = args.to_vec();
    seq.push("--sequential");
    let ob = run(&seq, b.path());
    assert!(oa.status.success() && ob.status.success());
    let read = |d: &Path| fs::read(d.join("sweep-space.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn validation_failure_names_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "--mode",
            "validate",
            "--problem",
            problem("positive_coupling.toml").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("off-diagonal sign"), "{}", stderr(&o));
}

#[test]
fn solve_refuses_invalid_problem_unless_told_otherwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = problem("positive_coupling.toml");
    let base = [
        "--mode",
        "solve",
        "--problem",
        path.to_str().unwrap(),
        "--N",
        "32",
        "--M",
        "4",
    ];
    assert_eq!(run(&base, dir.path()).status.code(), Some(3));
    assert!(!dir.path().join("solution.csv").exists());
    let mut forced = base.to_vec();
    forced.push("--skip-validation");
    assert!(run(&forced, dir.path()).status.success());
}

#[test]
fn config_file_matches_builtin() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--mode", "solve", "--N", "32", "--M", "4"];
    let mut from_file = args.to_vec();
    let path = problem("example1.toml");
    from_file.extend(["--problem", path.to_str().unwrap()]);
    let mut builtin = args.to_vec();
    builtin.extend(["--epsilons", "2^-15,2^-14"]);
    assert!(run(&from_file, a.path()).status.success());
    assert!(run(&builtin, b.path()).status.success());
    let read = |d: &Path| fs::read_to_string(d.join("solution.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n = 1\nalpha = 1\nT = 1\nA.1.1 = \"4+*t\"\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec![
            "--mode".into(),
            "solve".into(),
            "--problem".into(),
            "missing.toml".into(),
        ],
        vec![
            "--mode".into(),
            "solve".into(),
            "--problem".into(),
            bad.display().to_string(),
        ],
        vec![
            "--mode".into(),
            "solve".into(),
            "--epsilons".into(),
            "0.1".into(),
        ],
        vec![
            "--mode".into(),
            "solve".into(),
            "--epsilons".into(),
            "2^-15,2^-14".into(),
            "--N".into(),
            "20".into(),
        ],
        vec![
            "--mode".into(),
            "sweep-time".into(),
            "--resolutions".into(),
            "32,48".into(),
        ],
        vec!["--mode".into(), "bogus".into()],
        vec!["--mode".into(), "solve".into()],
    ];
    for args in cases {
        let out = dir.path().join("out");
        let o = shishkin()
            .args(&args)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!out.exists(), "{args:?} created output");
    }
}

#[test]
fn empty_eta_list_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["--mode", "sweep-time", "--eta="], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn solver_failure_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "--mode",
            "solve",
            "--epsilons",
            "2^-15,2^-14",
            "--tolerance",
            "1e-300",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("residual"));
}

#[test]
fn io_failure_exits_with_code_five() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(
        &["--mode", "mesh-dump", "--epsilons", "1e-4,1e-3"],
        &blocker.join("sub"),
    );
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn output_directory_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = shishkin()
        .args(["--mode", "mesh-dump", "--eta", "2^-7", "--N", "64"])
        .env("SHISHKIN_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("mesh.csv")).unwrap();
    assert_eq!(text.lines().count(), 66);
    assert!(text.starts_with("j,x_j,h_j,in_J\n"));
}

#[test]
fn diagnostics_write_layers_and_points() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "--mode",
            "diagnostics",
            "--epsilons",
            "1e-4,1e-2",
            "--N",
            "64",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let layers = fs::read_to_string(dir.path().join("layers.csv")).unwrap();
    assert_eq!(layers.lines().count(), 66);
    let mut reader = csv::Reader::from_path(dir.path().join("interesting_points.csv")).unwrap();
    for rec in reader.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[3].parse().unwrap();
        let bound: f64 = rec[4].parse().unwrap();
        assert!(x > 0.0 && x < bound);
    }
    assert_eq!(stdout(&o).matches("wrote ").count(), 2);
}
