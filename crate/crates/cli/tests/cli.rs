use std::path::Path;
use std::process::{Command, Output};

use oralytics_core::harness::output::{
    read_csv_file, read_decisions, ALARMS_SCHEMA, GRID_SCHEMA, PRIOR_PERIOD_SCHEMA, SUMMARY_SCHEMA, TRIALS_SCHEMA,
};
use oralytics_core::harness::{AlarmRow, Candidate, EnvVariant, GridRow, PriorPeriodRow, SummaryRow, TrialRow};
use oralytics_core::policy::PriorSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

fn oralytics(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oralytics")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn sha256_of(path: &Path) -> String {
    use sha2::Digest;
    sha2::Sha256::digest(std::fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn smoke_run_emits_every_declared_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = oralytics(&["run", "--trials", "2", "--threads", "2", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let summary: Vec<SummaryRow> = read_csv_file(SUMMARY_SCHEMA, &out.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 8 * 12 * 2);
    assert!(summary.iter().all(|r| r.trials == 2 && r.value.is_finite() && r.se.is_finite()));
    let trials: Vec<TrialRow> = read_csv_file(TRIALS_SCHEMA, &out.join("trials.csv")).unwrap();
    assert_eq!(trials.len(), 8 * 12 * 2);
    let _: Vec<AlarmRow> = read_csv_file(ALARMS_SCHEMA, &out.join("alarms.csv")).unwrap();

    let m = manifest(&out);
    let outputs = m["outputs"].as_array().unwrap();
    let names: Vec<&str> = outputs.iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(names, ["config.toml", "summary.csv", "trials.csv", "alarms.csv"]);
    for f in outputs {
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_of(&out.join(f["path"].as_str().unwrap())));
    }
    assert_eq!(m["config_sha256"].as_str().unwrap(), sha256_of(&out.join("config.toml")));
    assert_eq!(m["master_seed"], 2023);
}

#[test]
fn kept_logs_cover_every_decision() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("logs");
    let o = oralytics(&[
        "run", "--trials", "2", "--keep-logs", "--variant", "STAT_HIGH_R-z8", "--candidate", "b5.15-weekly-full", "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let decisions = read_decisions(std::fs::File::open(out.join("decisions.csv")).unwrap()).unwrap();
    assert_eq!(decisions.len(), 2 * 70 * 140);
    assert_eq!(decisions.iter().filter(|(k, _)| k.trial == 1).count(), 70 * 140);
    assert!(decisions.iter().all(|(k, l)| k.variant == "STAT_HIGH_R-z8" && (0.0..=1.0).contains(&l.pi)));
    let names: Vec<String> = manifest(&out)["outputs"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    assert!(names.contains(&"decisions.csv".to_string()));
}

#[test]
fn rerun_from_saved_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let common = ["--trials", "3", "--variant", "NON_STAT_MED_R-z4", "--candidate", "b0.515-daily-none", "--seed", "11"];
    let mut args = vec!["run", "--threads", "1", "--out-dir", a.to_str().unwrap()];
    args.extend(common);
    assert!(oralytics(&args).status.success());
    let saved = a.join("config.toml");
    let o = oralytics(&["run", "--config", saved.to_str().unwrap(), "--threads", "3", "--out-dir", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["summary.csv", "trials.csv", "alarms.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_variant_lists_the_choices() {
    let dir = tempfile::tempdir().unwrap();
    let o = oralytics(&["run", "--variant", "STAT_EXTREME_R-z8", "--trials", "1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("unknown variant 'STAT_EXTREME_R-z8'"), "{err}");
    for v in EnvVariant::all() {
        assert!(err.contains(&v.label()), "{err}");
    }
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn flags_override_the_config_file_and_say_so() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[experiment]\ntrials = 5\n[reward]\nxi1 = 10.0\n[environment]\nvariants = [\"STAT_LOW_R-z8\"]\n[candidate]\nnames = [\"b5.15-weekly-full\"]\n").unwrap();
    let out = dir.path().join("out");
    let o = oralytics(&["run", "--config", cfg.to_str().unwrap(), "--trials", "1", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("--trials 1 overrides configured 5"), "{}", stderr(&o));
    let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("trials = 1"), "{resolved}");
    assert!(resolved.contains("xi1 = 10.0"), "{resolved}");
    let summary: Vec<SummaryRow> = read_csv_file(SUMMARY_SCHEMA, &out.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 2);
    assert!(summary.iter().all(|r| r.trials == 1));
}

#[test]
fn bad_config_and_missing_data_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[reward]\nxi3 = 1.0\n").unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(oralytics(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", d]).status.code(), Some(2));
    assert_eq!(oralytics(&["run", "--xi", "200,0", "--out-dir", d]).status.code(), Some(2));
    let o = oralytics(&["fit-env", "--data", "/nonexistent/robas3.csv", "--out-dir", d]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/nonexistent/robas3.csv"), "{}", stderr(&o));
    assert_eq!(oralytics(&["run", "--data", "/nonexistent/robas3.csv", "--out-dir", d]).status.code(), Some(3));
}

#[test]
fn fitted_bundle_is_reproducible_and_drives_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sessions.csv");
    assert!(oralytics(&["synth-robas", "--out", data.to_str().unwrap(), "--participants", "8"]).status.success());
    let fit = |name: &str| {
        let out = dir.path().join(name);
        let o = oralytics(&["fit-env", "--data", data.to_str().unwrap(), "--seed", "3", "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (fit("fit_a"), fit("fit_b"));
    assert_eq!(sha256_of(&a.join("env_bundle.json")), sha256_of(&b.join("env_bundle.json")));
    let m = manifest(&a);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap(), sha256_of(&data));
    let report = std::fs::read_to_string(a.join("fit_report.csv")).unwrap();
    assert!(report.starts_with("#schema=fit_report.v1\n"));
    assert_eq!(report.lines().count(), 2 + 2 * 8);

    let grid = dir.path().join("grid");
    let bundle = a.join("env_bundle.json");
    let o = oralytics(&[
        "grid", "--env", bundle.to_str().unwrap(), "--variant", "STAT_LOW_R-z8", "--xi", "0,0", "--xi", "180,180", "--trials", "2",
        "--out-dir", grid.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<GridRow> = read_csv_file(GRID_SCHEMA, &grid.join("grid.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 2);
    assert_eq!(rows.iter().filter(|r| r.best).count(), 2);
    assert_eq!(manifest(&grid)["inputs"][0]["sha256"].as_str().unwrap(), sha256_of(&bundle));
}

#[test]
fn prior_period_comparison_writes_paired_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = oralytics(&[
        "compare-prior-period", "--variant", "STAT_HIGH_R-z4", "--prior-trigger", "15,5", "--trials", "2", "--deployment-fidelity",
        "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<PriorPeriodRow> = read_csv_file(PRIOR_PERIOD_SCHEMA, &out.join("prior_period.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| (r.longer_trigger, r.shorter_trigger) == (15, 5)));
    let trials: Vec<TrialRow> = read_csv_file(TRIALS_SCHEMA, &out.join("trials.csv")).unwrap();
    assert_eq!(trials.len(), 4);
    assert!(trials.iter().all(|t| t.candidate == Candidate::finalized().label()));
    assert!(std::fs::read_to_string(out.join("config.toml")).unwrap().contains("deployment_fidelity = true"));
    let single = oralytics(&["compare-prior-period", "--prior-trigger", "15", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(single.status.code(), Some(2));
}

#[test]
fn missing_pilot_falls_back_to_the_canonical_prior() {
    let dir = tempfile::tempdir().unwrap();
    let o = oralytics(&["build-prior", "--pilot", "/nonexistent/pilot.csv", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("not found; using the canonical prior"), "{}", stderr(&o));
    for f in ["prior.json", "prior_canonical.json"] {
        let p: PriorSpec<f64> = serde_json::from_str(&std::fs::read_to_string(dir.path().join(f)).unwrap()).unwrap();
        assert_eq!(p, PriorSpec::canonical());
    }
    assert!(!dir.path().join("effect_sizes.csv").exists());
}

#[test]
fn pilot_prior_reports_fifteen_effects_with_the_expected_zero_pattern() {
    // Rewards from the action-centered model with the deployed prior's
    // sparsity: baseline on time of day, engagement and the intercept,
    // advantage on app use, no π-interaction.
    let alpha0 = [18.0, 0.0, 30.0, 0.0, 73.0];
    let beta = [0.0, 0.0, 0.0, 53.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let noise = Normal::new(0.0, 4.0).unwrap();
    let mut csv = String::from("participant_id,time_of_day,bbar_norm,abar_norm,prior_day_app,action,pi,reward\n");
    for p in 0..9 {
        for t in 0..70 {
            let f = [(t % 2) as f64, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0..2) as f64, 1.0];
            let pi: f64 = rng.random_range(0.2..0.8);
            let a = rng.random_bool(pi) as u8;
            let dot = |w: &[f64; 5]| w.iter().zip(&f).map(|(x, y)| x * y).sum::<f64>();
            let r = dot(&alpha0) + (a as f64 - pi) * dot(&beta) + noise.sample(&mut rng);
            csv += &format!("P{p},{},{},{},{},{a},{pi},{r}\n", f[0], f[1], f[2], f[3]);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let pilot = dir.path().join("pilot.csv");
    std::fs::write(&pilot, csv).unwrap();
    let out = dir.path().join("prior");
    let o = oralytics(&["build-prior", "--pilot", pilot.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let effects = std::fs::read_to_string(out.join("effect_sizes.csv")).unwrap();
    assert_eq!(effects.lines().count(), 2 + 15);
    let p: PriorSpec<f64> = serde_json::from_str(&std::fs::read_to_string(out.join("prior.json")).unwrap()).unwrap();
    let nonzero = |v: &[f64; 5]| v.map(|x| x != 0.0);
    assert_eq!(nonzero(&p.mu_alpha0), [true, false, true, false, true], "{:?}", p.mu_alpha0);
    assert_eq!(nonzero(&p.mu_beta), [false, false, false, true, false], "{:?}", p.mu_beta);
    let canonical: PriorSpec<f64> = serde_json::from_str(&std::fs::read_to_string(out.join("prior_canonical.json")).unwrap()).unwrap();
    assert_eq!(canonical, PriorSpec::canonical());
    assert_eq!(manifest(&out)["inputs"][0]["sha256"].as_str().unwrap(), sha256_of(&pilot));
}
