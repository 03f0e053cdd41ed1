//! Subcommand implementations.

use std::fmt::Debug;
use std::path::{Path, PathBuf};

use log::{info, warn};
use oralytics_core::envmodel::{read_sessions_csv, surrogate, write_sessions, FitOptions, ModelClass, Stationarity};
use oralytics_core::harness::output::{
    decision_rows, write_csv_file, ALARMS_SCHEMA, DECISIONS_SCHEMA, GRID_SCHEMA, PRIOR_PERIOD_SCHEMA, SUMMARY_SCHEMA, TRIALS_SCHEMA,
};
use oralytics_core::harness::{
    alarm_rows, compare_prior_period as compare, grid_rows, grid_search_xi, run_experiment, summary_rows, trial_rows, Cell, Environment,
};
use oralytics_core::policy::{build_prior_from_pilot, PriorSpec, PARAM_DIM};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::CliError;
use crate::manifest::{digest_file, RunManifest};
use crate::pilot::read_pilot;
use crate::{BuildPriorArgs, ExperimentArgs, FitEnvArgs, SynthArgs};

pub const FIT_REPORT_SCHEMA: &str = "fit_report.v1";
pub const INGEST_REPORT_SCHEMA: &str = "ingest_report.v1";
pub const EFFECT_SIZES_SCHEMA: &str = "effect_sizes.v1";
pub const ENV_BUNDLE_FILE: &str = "env_bundle.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Seed of the synthetic study used when no data is configured.
const SYNTHETIC_DATA_SEED: u64 = 20_240_901;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Run,
    Grid,
    Compare,
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        Some(p) => {
            info!("configuration from {}", p.display());
            Config::load(p)
        }
        None => Ok(Config::default()),
    }
}

/// Applies a flag over the configured value, logging when they differ.
fn set<T: PartialEq + Debug>(flag: &str, slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        if *slot != v {
            info!("--{flag} {v:?} overrides configured {:?}", slot);
            *slot = v;
        }
    }
}

fn parse_xi(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Config(format!("--xi expects 'xi1,xi2' with values in [0, 180], got '{s}'"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if !(0.0..=180.0).contains(&a) || !(0.0..=180.0).contains(&b) {
        return Err(bad());
    }
    Ok((a, b))
}

fn single<'a, T>(flag: &str, values: &'a [T], kind: Kind) -> Result<Option<&'a T>, CliError> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(v)),
        _ => Err(CliError::Config(format!("--{flag} takes a single value for this command ({kind:?})"))),
    }
}

fn resolve(args: &ExperimentArgs, kind: Kind) -> Result<Config, CliError> {
    let mut c = load_config(args.config.as_deref())?;
    if !args.variant.is_empty() {
        set("variant", &mut c.environment.variants, Some(args.variant.clone()));
    }
    match kind {
        Kind::Run if !args.candidate.is_empty() => set("candidate", &mut c.candidate.names, Some(args.candidate.clone())),
        Kind::Run => {}
        _ => set("candidate", &mut c.candidate.focus, single("candidate", &args.candidate, kind)?.cloned()),
    }
    let xi = args.xi.iter().map(|s| parse_xi(s)).collect::<Result<Vec<_>, _>>()?;
    if kind == Kind::Grid {
        if !xi.is_empty() {
            set("xi", &mut c.grid.cells, Some(xi.iter().map(|&(a, b)| [a, b]).collect()));
        }
    } else if let Some(&(a, b)) = single("xi", &xi, kind)? {
        set("xi", &mut c.reward.xi1, Some(a));
        set("xi", &mut c.reward.xi2, Some(b));
    }
    set("trials", &mut c.experiment.trials, args.trials);
    set("seed", &mut c.seeds.master, args.seed);
    set("threads", &mut c.experiment.threads, args.threads.map(Some));
    match (kind, args.prior_trigger.as_slice()) {
        (_, []) => {}
        (Kind::Compare, [longer, shorter]) => {
            set("prior-trigger", &mut c.prior_period.longer, Some(*longer));
            set("prior-trigger", &mut c.prior_period.shorter, Some(*shorter));
        }
        (Kind::Compare, _) => return Err(CliError::Config("--prior-trigger takes two values here: longer,shorter".into())),
        (_, [t]) => set("prior-trigger", &mut c.trial.prior_trigger, Some(*t)),
        _ => return Err(CliError::Config("--prior-trigger takes a single value for this command".into())),
    }
    if args.deployment_fidelity {
        set("deployment-fidelity", &mut c.trial.deployment_fidelity, Some(true));
    }
    if args.keep_logs {
        set("keep-logs", &mut c.trial.keep_logs, Some(true));
    }
    set("env", &mut c.environment.bundle, args.env.clone().map(Some));
    set("data", &mut c.environment.data, args.data.clone().map(Some));
    set("prior", &mut c.prior.file, args.prior.clone().map(Some));
    // Validate everything before any expensive work.
    c.variants()?;
    c.candidates()?;
    c.focus()?;
    c.settings().validate()?;
    Ok(c)
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    let n = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    // A second initialization in the same process keeps the first pool.
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok() {
        info!("{n} worker threads");
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_environment(c: &Config, m: &mut RunManifest) -> Result<Environment, CliError> {
    if let Some(path) = &c.environment.bundle {
        m.inputs.push(digest_file(path)?);
        info!("environment bundle {}", path.display());
        return read_json(path);
    }
    let series = match &c.environment.data {
        Some(path) => {
            m.inputs.push(digest_file(path)?);
            info!("fitting environments to {}", path.display());
            read_sessions_csv(path)?.0
        }
        None => {
            warn!("no study data configured; fitting environments to the synthetic study");
            surrogate::generate(surrogate::SURROGATE_PARTICIPANTS, SYNTHETIC_DATA_SEED)
        }
    };
    Ok(Environment::fit(&series, &FitOptions::default(), c.seeds.fit)?)
}

fn load_prior(c: &Config, m: &mut RunManifest) -> Result<PriorSpec<f64>, CliError> {
    match &c.prior.file {
        Some(path) => {
            m.inputs.push(digest_file(path)?);
            let p: PriorSpec<f64> = read_json(path)?;
            p.validate()?;
            Ok(p)
        }
        None => Ok(PriorSpec::canonical()),
    }
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// Writes the resolved configuration and starts the manifest.
fn begin(c: &Config, dir: &Path) -> Result<RunManifest, CliError> {
    prepare_out_dir(dir)?;
    let text = c.to_toml();
    std::fs::write(dir.join(CONFIG_FILE), &text)?;
    Ok(RunManifest::new(&text, c.seeds.master))
}

/// Per-trial, alarm and optional decision files shared by the experiment commands.
fn write_trial_files(cells: &[Cell], c: &Config, dir: &Path, files: &mut Vec<String>) -> Result<(), CliError> {
    write_csv_file(TRIALS_SCHEMA, &trial_rows(cells), &dir.join("trials.csv"))?;
    write_csv_file(ALARMS_SCHEMA, &alarm_rows(cells), &dir.join("alarms.csv"))?;
    files.extend(["trials.csv".to_string(), "alarms.csv".to_string()]);
    if c.trial.keep_logs {
        write_csv_file(DECISIONS_SCHEMA, &decision_rows(cells), &dir.join("decisions.csv"))?;
        files.push("decisions.csv".into());
    }
    Ok(())
}

fn finish(m: RunManifest, dir: &Path, mut files: Vec<String>) -> Result<(), CliError> {
    files.insert(0, CONFIG_FILE.into());
    m.finish(dir, &files)?;
    info!("wrote {} and manifest.json to {}", files.join(", "), dir.display());
    Ok(())
}

pub fn run(args: ExperimentArgs) -> Result<(), CliError> {
    let c = resolve(&args, Kind::Run)?;
    init_threads(c.experiment.threads)?;
    let mut m = begin(&c, &args.out_dir)?;
    let env = load_environment(&c, &mut m)?;
    let prior = load_prior(&c, &mut m)?;
    let (variants, candidates) = (c.variants()?, c.candidates()?);
    info!("{} candidates x {} variants x {} trials", candidates.len(), variants.len(), c.experiment.trials);
    let cells = run_experiment(&env, &prior, &variants, &candidates, &c.settings(), c.experiment.trials, c.seeds.master)?;
    let dir = &args.out_dir;
    write_csv_file(SUMMARY_SCHEMA, &summary_rows(&cells), &dir.join("summary.csv"))?;
    let mut files = vec!["summary.csv".to_string()];
    write_trial_files(&cells, &c, dir, &mut files)?;
    finish(m, dir, files)
}

pub fn grid(args: ExperimentArgs) -> Result<(), CliError> {
    let c = resolve(&args, Kind::Grid)?;
    init_threads(c.experiment.threads)?;
    let mut m = begin(&c, &args.out_dir)?;
    let env = load_environment(&c, &mut m)?;
    let prior = load_prior(&c, &mut m)?;
    let grid = c.grid();
    info!("{} cells x {} variants x {} trials", grid.len(), c.variants()?.len(), c.experiment.trials);
    let cells = grid_search_xi(&env, &prior, &c.variants()?, c.focus()?, &grid, &c.settings(), c.experiment.trials, c.seeds.master)?;
    let dir = &args.out_dir;
    write_csv_file(GRID_SCHEMA, &grid_rows(&cells), &dir.join("grid.csv"))?;
    let mut files = vec!["grid.csv".to_string()];
    write_trial_files(&cells, &c, dir, &mut files)?;
    finish(m, dir, files)
}

pub fn compare_prior_period(args: ExperimentArgs) -> Result<(), CliError> {
    let c = resolve(&args, Kind::Compare)?;
    init_threads(c.experiment.threads)?;
    let mut m = begin(&c, &args.out_dir)?;
    let env = load_environment(&c, &mut m)?;
    let prior = load_prior(&c, &mut m)?;
    let triggers = (c.prior_period.longer, c.prior_period.shorter);
    let (cells, rows) =
        compare(&env, &prior, &c.variants()?, c.focus()?, triggers, &c.settings(), c.experiment.trials, c.seeds.master)?;
    let dir = &args.out_dir;
    write_csv_file(PRIOR_PERIOD_SCHEMA, &rows, &dir.join("prior_period.csv"))?;
    let mut files = vec!["prior_period.csv".to_string()];
    write_trial_files(&cells, &c, dir, &mut files)?;
    finish(m, dir, files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportRow {
    pub participant: String,
    pub stationarity: String,
    pub selected: ModelClass,
    pub loss_zip: f64,
    pub loss_hurdle: Option<f64>,
}

pub fn fit_env(args: FitEnvArgs) -> Result<(), CliError> {
    let mut c = load_config(args.config.as_deref())?;
    set("seed", &mut c.seeds.fit, args.seed);
    set("data", &mut c.environment.data, Some(Some(args.data.clone())));
    set("threads", &mut c.experiment.threads, args.threads.map(Some));
    init_threads(c.experiment.threads)?;
    let mut m = begin(&c, &args.out_dir)?;
    m.inputs.push(digest_file(&args.data)?);
    let (series, ingest) = read_sessions_csv(&args.data)?;
    for r in &ingest {
        if r.rows_after_day_70 > 0 {
            info!("participant {}: kept the first 140 decision points, dropped {} later sessions", r.id, r.rows_after_day_70);
        }
    }
    let env = Environment::fit(&series, &FitOptions::default(), c.seeds.fit)?;
    let dir = &args.out_dir;
    write_json(&dir.join(ENV_BUNDLE_FILE), &env)?;
    let report: Vec<FitReportRow> = [Stationarity::Stationary, Stationarity::NonStationary]
        .iter()
        .flat_map(|&s| {
            env.bundle(s).participants.iter().map(move |p| FitReportRow {
                participant: p.id.clone(),
                stationarity: s.to_string(),
                selected: p.selected,
                loss_zip: p.loss_zip,
                loss_hurdle: p.loss_hurdle,
            })
        })
        .collect();
    write_csv_file(FIT_REPORT_SCHEMA, &report, &dir.join("fit_report.csv"))?;
    write_csv_file(INGEST_REPORT_SCHEMA, &ingest, &dir.join("ingest_report.csv"))?;
    for s in [Stationarity::Stationary, Stationarity::NonStationary] {
        let (zip, hurdle) = env.bundle(s).class_counts();
        info!("{s}: {zip} zero-inflated Poisson, {hurdle} hurdle fits");
    }
    finish(m, dir, vec![ENV_BUNDLE_FILE.into(), "fit_report.csv".into(), "ingest_report.csv".into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeRow {
    pub index: usize,
    pub parameter: String,
    pub standardized_mean: f64,
    pub coef_mean: f64,
    pub coef_sd: f64,
    pub significant: bool,
}

fn parameter_name(i: usize) -> String {
    const BLOCKS: [&str; 3] = ["alpha0", "alpha1", "beta"];
    const FEATURES: [&str; 5] = ["time_of_day", "bbar", "abar", "prior_day_app", "intercept"];
    format!("{}_{}", BLOCKS[i / FEATURES.len()], FEATURES[i % FEATURES.len()])
}

pub fn build_prior(args: BuildPriorArgs) -> Result<(), CliError> {
    let c = load_config(args.config.as_deref())?;
    let mut m = begin(&c, &args.out_dir)?;
    let dir = &args.out_dir;
    let canonical = PriorSpec::<f64>::canonical();
    write_json(&dir.join("prior_canonical.json"), &canonical)?;
    let mut files = vec!["prior_canonical.json".to_string(), "prior.json".to_string()];
    let pilot: Option<PathBuf> = match args.pilot {
        Some(p) if p.is_file() => Some(p),
        Some(p) => {
            warn!("pilot file {} not found; using the canonical prior", p.display());
            None
        }
        None => {
            warn!("no pilot data given; using the canonical prior");
            None
        }
    };
    match pilot {
        None => {
            write_json(&dir.join("prior.json"), &canonical)?;
        }
        Some(path) => {
            m.inputs.push(digest_file(&path)?);
            let participants = read_pilot(&path)?;
            let (prior, report) = build_prior_from_pilot(&participants, c.prior.ridge_lambda, c.prior.significance)?;
            write_json(&dir.join("prior.json"), &prior)?;
            let rows: Vec<EffectSizeRow> = (0..PARAM_DIM)
                .map(|i| EffectSizeRow {
                    index: i,
                    parameter: parameter_name(i),
                    standardized_mean: report.standardized_mean[i],
                    coef_mean: report.coef_mean[i],
                    coef_sd: report.coef_sd[i],
                    significant: report.significant[i],
                })
                .collect();
            write_csv_file(EFFECT_SIZES_SCHEMA, &rows, &dir.join("effect_sizes.csv"))?;
            files.push("effect_sizes.csv".into());
            info!("prior from {} pilot participants, sigma2 = {:.1}", participants.len(), prior.sigma2);
        }
    }
    finish(m, dir, files)
}

pub fn synth_robas(args: SynthArgs) -> Result<(), CliError> {
    if args.participants == 0 {
        return Err(CliError::Config("--participants must be positive".into()));
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_out_dir(parent)?;
    }
    let f = std::fs::File::create(&args.out).map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    write_sessions(&surrogate::generate_sessions(args.participants, args.seed), std::io::BufWriter::new(f))?;
    info!("wrote {} synthetic participants to {}", args.participants, args.out.display());
    Ok(())
}
