use std::fs;
use std::path::Path;

use marginlab::harness::{
    collect_reports, run_files, run_scenario, verify_scenario, Check, ScenarioSpec, Verdict, MANIFEST_FILE, PLOT_DIR,
};

fn spec(text: &str, out: &Path) -> ScenarioSpec {
    let mut s = ScenarioSpec::parse(text, None).unwrap();
    s.out_dir = out.to_path_buf();
    s
}

fn verdict(run: &marginlab::harness::RunArtifacts, check: Check) -> Verdict {
    let matching: Vec<_> = run.results.iter().filter(|r| r.check == check).collect();
    assert_eq!(matching.len(), 1, "{check:?} must appear exactly once");
    matching[0].verdict
}

const SYMMETRIC: &str = "id = sym\ngenerator = symmetric_pair\ntrain.max_steps = 1e4\nchecks = direction, norm_growth\n";

#[test]
fn symmetric_pair_passes_direction_and_norm_checks() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_scenario(&spec(SYMMETRIC, dir.path())).unwrap();
    assert_eq!(verdict(&run, Check::Direction), Verdict::Pass);
    assert_eq!(verdict(&run, Check::NormGrowth), Verdict::Pass);
    assert_eq!(run.fail_count(), 0);
    assert_eq!(run.results.len(), 2);
}

#[test]
fn conflict_pair_reaches_the_closed_form_limit() {
    let dir = tempfile::tempdir().unwrap();
    let text = "id = conflict\ngenerator = conflict_pair\ngenerator.w_plus = 2\ngenerator.w_minus = 1\n\
                train.max_steps = 1e4\nchecks = nonsep_limit\n";
    let run = run_scenario(&spec(text, dir.path())).unwrap();
    assert_eq!(verdict(&run, Check::NonsepLimit), Verdict::Pass);
    let r = &run.results[0];
    let limit: f64 = r.get("closed_form_theta_tilde").unwrap().parse().unwrap();
    assert!((limit - 0.5 * 2f64.ln()).abs() < 1e-15);
    let gap: f64 = r.get("final_nonsep_gap").unwrap().parse().unwrap();
    assert!(gap <= 1e-2);
}

#[test]
fn generalization_check_without_ratios_is_inapplicable() {
    let dir = tempfile::tempdir().unwrap();
    let text = "id = noratio\ngenerator = symmetric_pair\ntrain.max_steps = 100\nchecks = target_bound\n";
    let run = run_scenario(&spec(text, dir.path())).unwrap();
    assert_eq!(verdict(&run, Check::TargetBound), Verdict::Inapplicable);
    assert_eq!(run.fail_count(), 0);
}

#[test]
fn envelope_on_wide_features_is_inapplicable() {
    let dir = tempfile::tempdir().unwrap();
    let text = "id = wide\ngenerator = planted_margin\ngenerator.radius = 5\ntrain.max_steps = 200\nchecks = envelope\n";
    let run = run_scenario(&spec(text, dir.path())).unwrap();
    assert_eq!(verdict(&run, Check::Envelope), Verdict::Inapplicable);
}

#[test]
fn diverging_run_reports_error_and_keeps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = "id = boom\ngenerator = planted_margin\ntrain.eta0 = 1e3\ntrain.lambda = 0.1\ntrain.max_steps = 1000\nchecks = norm_growth\n";
    let run = run_scenario(&spec(text, dir.path())).unwrap();
    assert_eq!(verdict(&run, Check::NormGrowth), Verdict::Error);
    assert_eq!(run.fail_count(), 1);
    assert!(dir.path().join("report.txt").exists());
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn identical_specs_give_identical_trajectories() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = "id = det\ngenerator = planted_margin\nweights = random_box\ntrain.max_steps = 2000\nchecks = norm_growth\n";
    let ra = run_scenario(&spec(text, a.path())).unwrap();
    let rb = run_scenario(&spec(text, b.path())).unwrap();
    assert_eq!(fs::read(&ra.trajectory_csv).unwrap(), fs::read(&rb.trajectory_csv).unwrap());
    assert_eq!(ra.summary, rb.summary);
}

#[test]
fn plot_files_are_finite_with_monotone_x() {
    let dir = tempfile::tempdir().unwrap();
    let text = "id = plots\ngenerator = planted_margin\ntrain.schedule = capped_by_risk\ntrain.eta0 = 1e3\n\
                train.max_steps = 2e4\npath.lambdas = 1e-2, 1e-3\nchecks = direction, path_margin\n";
    let run = run_scenario(&spec(text, dir.path())).unwrap();
    assert!(run.plot_data.len() >= 4);
    for file in &run.plot_data {
        let text = fs::read_to_string(file).unwrap();
        let rows: Vec<(f64, f64)> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let mut it = l.split_whitespace().map(|v| v.parse::<f64>().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect();
        assert!(!rows.is_empty(), "{}", file.display());
        assert!(rows.iter().all(|(x, y)| x.is_finite() && y.is_finite()));
        assert!(rows.windows(2).all(|p| p[1].0 > p[0].0), "{} x column not increasing", file.display());
    }
    assert!(dir.path().join(PLOT_DIR).join(MANIFEST_FILE).exists());
}

#[test]
fn verify_reproduces_the_train_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(SYMMETRIC, dir.path());
    let trained = run_scenario(&s).unwrap();
    let verified = verify_scenario(&s).unwrap();
    assert_eq!(
        trained.results.iter().map(|r| (r.check, r.verdict)).collect::<Vec<_>>(),
        verified.results.iter().map(|r| (r.check, r.verdict)).collect::<Vec<_>>()
    );
}

#[test]
fn sweep_rows_are_sorted_isolated_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("b.conf");
    let bad = dir.path().join("a.conf");
    fs::write(&good, SYMMETRIC.replace("id = sym", "id = b_sym")).unwrap();
    fs::write(&bad, "id = a_bad\ngenerator = no_such_generator\n").unwrap();
    let files = vec![good.clone(), bad, good];
    let out = dir.path().join("out");
    let rows = run_files(&files, 3, None, Some(&out)).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].error.is_some(), "unparsable spec must become an error row");
    assert_eq!(rows[1], rows[2]);
    assert_eq!(rows[1].fail_count(), 0);

    assert!(run_files(&[], 2, None, None).unwrap().is_empty());

    let reread = collect_reports(&out).unwrap();
    assert_eq!(reread.len(), 1);
    assert_eq!(reread[0].verdicts, rows[1].verdicts);
}
