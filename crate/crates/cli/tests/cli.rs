use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn marginlab(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_marginlab"));
    cmd.args(args).env_remove("MARGINLAB_SEED");
    if let Some(s) = seed_env {
        cmd.env("MARGINLAB_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const PASSING: &str = "id = ok\ngenerator = symmetric_pair\ntrain.max_steps = 1000\nchecks = norm_growth, direction\n";
// A regularized run converges to a finite norm, so a large norm requirement fails.
const FAILING: &str = "id = bad\ngenerator = planted_margin\ntrain.lambda = 1e-2\ntrain.max_steps = 2000\n\
                       checks = norm_growth\ncheck.norm_growth.min_norm = 1e3\n";

#[test]
fn train_exit_code_counts_failures() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.conf", PASSING);
    let bad = write(dir.path(), "bad.conf", FAILING);
    let out_ok = dir.path().join("o1").display().to_string();
    let out_bad = dir.path().join("o2").display().to_string();

    let o = marginlab(&["train", &ok, "--out", &out_ok], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("norm_growth") && stdout.contains("PASS"));

    let o = marginlab(&["train", &bad, "--out", &out_bad], None);
    assert_eq!(o.status.code(), Some(1));

    let o = marginlab(&["verify", &ok, "--out", &out_ok], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(Path::new(&out_ok).join("verify_report.txt").exists());
}

#[test]
fn seed_environment_variable_overrides_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "s.conf",
        "id = seeded\nseed = 1\ngenerator = planted_margin\ntrain.max_steps = 10\n",
    );
    let gen = |out: &str, env: Option<&str>| {
        let o = marginlab(&["train", &spec, "--out", out], env);
        assert_eq!(o.status.code(), Some(0));
        fs::read(Path::new(out).join("data.csv")).unwrap()
    };
    let base = gen(&dir.path().join("a").display().to_string(), None);
    let env1 = gen(&dir.path().join("b").display().to_string(), Some("1"));
    let env2 = gen(&dir.path().join("c").display().to_string(), Some("2"));
    assert_eq!(base, env1);
    assert_ne!(base, env2);
    let report = fs::read_to_string(dir.path().join("c").join("report.txt")).unwrap();
    assert!(report.contains("seed = 2"));
}

#[test]
fn gen_writes_data_weights_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "g.conf", "id = g\ngenerator = conflict_pair\ngenerator.w_plus = 4\n");
    let out = dir.path().join("gen");
    let o = marginlab(&["gen", &spec, "--seed", "5", "--out", &out.display().to_string()], None);
    assert_eq!(o.status.code(), Some(0));
    let oracle = fs::read_to_string(out.join("oracle.txt")).unwrap();
    let line = oracle.lines().find(|l| l.starts_with("conflict_theta")).unwrap();
    let value: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((value - 0.5 * 4f64.ln()).abs() < 1e-15);
    assert_eq!(fs::read_to_string(out.join("weights.csv")).unwrap().lines().count(), 3);
    assert!(out.join("data.csv").exists());
}

#[test]
fn sweep_and_report_sum_failures() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "ok.conf", PASSING);
    write(dir.path(), "bad.conf", FAILING);
    let list = write(dir.path(), "all.sweep", "# two scenarios\nok.conf\nbad.conf\n");
    let out = dir.path().join("sweep");
    let o = marginlab(&["sweep", &list, "-j2", "--out", &out.display().to_string()], None);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8_lossy(&o.stdout).to_string();
    let ids: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(ids, ["bad", "ok"]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();

    let o = marginlab(&["report", &out.display().to_string()], None);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&o.stdout), table);
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap(), summary);
}

#[test]
fn empty_sweep_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let list = write(dir.path(), "empty.sweep", "# nothing\n");
    let o = marginlab(&["sweep", &list], None);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bad_config_is_an_error_not_a_failure_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "x.conf", "id = x\ngenerator = planted_margin\ntrain.bogus = 1\n");
    let o = marginlab(&["train", &spec], None);
    assert_eq!(o.status.code(), Some(126));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
}
