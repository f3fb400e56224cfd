//! Command-line front end: `simulate`, `fit`, `test` and `data`.
//!
//! Every command prints a JSON [`RunReport`] and accepts `--seed`.
//! Settings are resolved as flags over `--config` file values over defaults.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::chp::{chp_test, ChpConfig};
use crate::data::{dataset, list_datasets, load_csv, write_csv, DatasetName, LoadOptions};
use crate::dgp::{simulate, DgpConfig};
use crate::error::{invalid, Error, Result};
use crate::estimation::{fit, EstimOptions, Method};
use crate::hansen::{hlr_test, HansenConfig};
use crate::lrt::{lmc_lrt, mmc_lrt, LrTestConfig, MmcConfig};
use crate::mc::{resolve_workers, with_workers, TestResult};
use crate::model::{ModelFamily, ModelSpec, Sample};
use crate::moments::{dlmc_test, dlmmc_test, DlConfig};
use crate::report::{FitReport, RunReport, TestReport, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;
pub const EXIT_TEST: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "msregime", version, about = "Markov-switching models: simulate, fit and test the number of regimes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Master seed; every command is reproducible under it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (else MSREGIME_WORKERS, else all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// JSON file with settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output path (report JSON, or the CSV for `simulate` and `data export`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a model described by `--config`.
    Simulate(SimulateArgs),
    /// Estimate a model.
    Fit(FitArgs),
    /// Run a test for the number of regimes.
    Test(TestArgs),
    /// List or export bundled datasets.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub family: ModelFamily,
    /// Overrides `n` from the config.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV file with a header row.
    #[arg(long, conflicts_with = "dataset")]
    pub input: Option<PathBuf>,
    /// Bundled dataset (its growth series is used).
    #[arg(long)]
    pub dataset: Option<DatasetName>,
    /// Comma-separated value columns.
    #[arg(long, default_value = "y", value_delimiter = ',')]
    pub column: Vec<String>,
    /// Comma-separated exogenous columns.
    #[arg(long, value_delimiter = ',')]
    pub exog: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model: ModelFamily,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub msmu: Option<bool>,
    #[arg(long)]
    pub msvar: Option<bool>,
    #[arg(long)]
    pub se: Option<bool>,
    /// Write smoothed regime probabilities here.
    #[arg(long)]
    pub probs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestName {
    LmcLrt,
    MmcLrt,
    DlMc,
    DlMmc,
    Chp,
    Hlr,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(value_enum)]
    pub name: TestName,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k0: Option<usize>,
    #[arg(long)]
    pub k1: Option<usize>,
    /// Monte Carlo or bootstrap replications.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Variance switching under the alternative.
    #[arg(long)]
    pub msvar: Option<bool>,
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    List,
    Export {
        #[arg(long)]
        name: DatasetName,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::TestProcedure(_) => EXIT_TEST,
        Error::Estimation(_) | Error::NotPositiveDefinite(_) | Error::NotErgodic | Error::Degenerate(_) | Error::Domain(_) => EXIT_ESTIMATION,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `args`, runs the command and prints the report; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let echo: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, echo) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            match emit(&cli, &report) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(cli: &Cli, report: &RunReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match (&cli.command, &cli.out) {
        (Command::Fit(_) | Command::Test(_), Some(path)) => std::fs::write(path, text + "\n")?,
        (Command::Simulate(_), Some(path)) => {
            std::fs::write(sidecar(path), text.clone() + "\n")?;
            println!("{text}");
        }
        _ => println!("{text}"),
    }
    Ok(())
}

/// `y.csv` gets its report in `y.csv.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Runs a parsed command without printing.
pub fn execute(cli: &Cli, command: Vec<String>) -> Result<RunReport> {
    let start = Instant::now();
    let file = cli.config.as_deref().map(read_json).transpose()?;
    let workers = cli.workers.or_else(|| file.as_ref().and_then(|f| f.get("workers")).and_then(Value::as_u64).filter(|&w| w > 0).map(|w| w as usize));
    let workers = resolve_workers(workers);
    let seed = cli.seed.or_else(|| file.as_ref().and_then(|f| f.get("seed")).and_then(Value::as_u64)).unwrap_or(0);
    let (config, result, warnings) = with_workers(workers, || match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, file, seed, cli.out.as_deref()),
        Command::Fit(a) => cmd_fit(a, file, seed),
        Command::Test(a) => cmd_test(a, file, seed, workers),
        Command::Data { command } => cmd_data(command, cli.out.as_deref()),
    })??;
    Ok(RunReport {
        schema_version: SCHEMA_VERSION.into(),
        command,
        config,
        seed,
        workers,
        elapsed_ms: start.elapsed().as_millis() as u64,
        result,
        warnings,
    })
}

type Outcome = (Value, Value, Vec<String>);

fn read_json(path: &Path) -> Result<Value> {
    let v: Value = serde_json::from_reader(File::open(path)?)?;
    if !v.is_object() {
        return invalid(format!("{} must hold a JSON object", path.display()));
    }
    Ok(v)
}

/// Recursive object merge; `over` wins.
pub fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Defaults, then the config file, then flags; errors name the offending field.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(file: Option<&Value>, flags: Value) -> Result<(T, Value)> {
    let mut v = serde_json::to_value(T::default())?;
    if let Some(f) = file {
        merge(&mut v, f);
    }
    merge(&mut v, &flags);
    let t: T = serde_json::from_value(v).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
    let resolved = serde_json::to_value(&t)?;
    Ok((t, resolved))
}

fn flags(pairs: &[(&str, Option<Value>)]) -> Value {
    Value::Object(pairs.iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))).collect::<Map<_, _>>())
}

pub fn load_sample(input: &InputArgs) -> Result<Sample> {
    match (&input.input, input.dataset) {
        (Some(_), Some(_)) => invalid("use either --input or --dataset"),
        (None, None) => invalid("an input is required: --input <csv> or --dataset <name>"),
        (None, Some(name)) => {
            if !input.exog.is_empty() {
                return invalid("--exog needs --input");
            }
            Ok(Sample::univariate(&dataset(name)?.growth()))
        }
        (Some(path), None) => {
            let read = |cols: &[String]| -> Result<Option<DMatrix<f64>>> {
                if cols.is_empty() {
                    return Ok(None);
                }
                let series = cols.iter().map(|c| load_csv(path, &LoadOptions::column(c)).map(|s| s.values)).collect::<Result<Vec<_>>>()?;
                let t = series[0].len();
                Ok(Some(DMatrix::from_fn(t, series.len(), |r, c| series[c][r])))
            };
            let y = read(&input.column)?.expect("at least one column");
            Sample::new(y, read(&input.exog)?)
        }
    }
}

fn cmd_simulate(a: &SimulateArgs, file: Option<Value>, seed: u64, out: Option<&Path>) -> Result<Outcome> {
    let out = out.ok_or_else(|| Error::InvalidInput("simulate needs --out <csv>".into()))?;
    let mut v = file.ok_or_else(|| Error::InvalidInput("simulate needs --config <json> describing the model".into()))?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("seed");
        obj.remove("workers");
        if let Some(n) = a.n {
            obj.insert("n".into(), json!(n));
        }
    }
    let cfg: DgpConfig = serde_json::from_value(v).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
    let resolved = serde_json::to_value(&cfg)?;
    let out_sim = simulate(&cfg.into_spec(a.family, seed)?)?;
    let q = out_sim.y.ncols();
    let mut names: Vec<String> = if q == 1 { vec!["y".into()] } else { (1..=q).map(|i| format!("y{i}")).collect() };
    let mut cols: Vec<Vec<f64>> = (0..q).map(|c| out_sim.y.column(c).iter().copied().collect()).collect();
    names.push("state".into());
    cols.push(out_sim.states.states.iter().map(|&s| (s + 1) as f64).collect());
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    write_csv(BufWriter::new(File::create(out)?), &refs, &cols)?;
    let k = out_sim.spec.theta.k();
    let counts: Vec<usize> = (0..k).map(|j| out_sim.states.states.iter().filter(|&&s| s == j).count()).collect();
    let result = json!({
        "family": a.family,
        "n": out_sim.y.nrows(),
        "q": q,
        "columns": names,
        "path": out.display().to_string(),
        "regime_counts": counts,
    });
    Ok((json!({ "family": a.family, "model": resolved }), result, out_sim.warnings))
}

/// Spec for `family` on `sample`; a switching family with `k = 1` becomes its linear counterpart.
pub fn fit_spec(family: ModelFamily, sample: &Sample, p: Option<usize>, k: Option<usize>, options: &EstimOptions, warnings: &mut Vec<String>) -> Result<ModelSpec> {
    let mut family = family;
    let k = k.unwrap_or(if family.is_switching() { 2 } else { 1 });
    if family.is_switching() && k == 1 {
        let lin = family.linear_counterpart();
        warnings.push(format!("{family} with k = 1 is the linear model {lin}"));
        family = lin;
    }
    if !family.is_switching() && k != 1 {
        return invalid(format!("{family} is linear; use a switching family for k = {k}"));
    }
    let p = if family.is_autoregressive() {
        p.unwrap_or(1)
    } else {
        match p {
            Some(p) if p > 0 => return invalid(format!("{family} has no autoregressive lags")),
            _ => 0,
        }
    };
    let q = sample.q();
    if family.is_vector() != (q > 1) && family.is_autoregressive() {
        return invalid(format!("{family} expects {} series, the input has {q}", if family.is_vector() { "several" } else { "one" }));
    }
    if family.requires_exog() != (sample.n_exog() > 0) && family != ModelFamily::Normal && family != ModelFamily::Hmm {
        return invalid(format!("{family} {} exogenous regressors", if family.requires_exog() { "needs" } else { "takes no" }));
    }
    let spec = if k == 1 {
        ModelSpec::linear(q, p, sample.n_exog())
    } else {
        ModelSpec::switching(q, p, k, sample.n_exog(), options.msmu, options.msvar)
    };
    spec.validate()?;
    Ok(spec)
}

fn cmd_fit(a: &FitArgs, file: Option<Value>, seed: u64) -> Result<Outcome> {
    let sample = load_sample(&a.input)?;
    let (options, resolved) = resolve::<EstimOptions>(
        file.as_ref(),
        flags(&[
            ("method", a.method.map(|m| json!(m))),
            ("use_diff_init", a.starts.map(|s| json!(s))),
            ("msmu", a.msmu.map(Value::Bool)),
            ("msvar", a.msvar.map(Value::Bool)),
            ("getSE", a.se.map(Value::Bool)),
            ("seed", Some(json!(seed))),
        ]),
    )?;
    let mut warnings = Vec::new();
    let spec = fit_spec(a.model, &sample, a.p, a.k, &options, &mut warnings)?;
    let fitted = fit(&sample, &spec, &options)?;
    if let Some(path) = &a.probs {
        let names: Vec<String> = (1..=fitted.smoothed.ncols()).map(|j| format!("regime_{j}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let cols: Vec<Vec<f64>> = (0..fitted.smoothed.ncols()).map(|c| fitted.smoothed.column(c).iter().copied().collect()).collect();
        write_csv(BufWriter::new(File::create(path)?), &refs, &cols)?;
    }
    warnings.extend(fitted.warnings.iter().cloned());
    let config = json!({ "model": spec.family(), "p": spec.p, "k": spec.k, "q": spec.q, "options": resolved });
    Ok((config, serde_json::to_value(FitReport::from(&fitted))?, warnings))
}

fn cmd_test(a: &TestArgs, file: Option<Value>, seed: u64, workers: usize) -> Result<Outcome> {
    let lrt = matches!(a.name, TestName::LmcLrt | TestName::MmcLrt);
    if !lrt && (a.k0.is_some() || a.k1.is_some()) {
        return invalid("--k0 and --k1 apply only to lmc-lrt and mmc-lrt");
    }
    if matches!(a.name, TestName::DlMc | TestName::DlMmc) && a.msvar.is_some() {
        return invalid("--msvar does not apply to the moment-based tests");
    }
    let sample = load_sample(&a.input)?;
    let common = |extra: Vec<(&str, Option<Value>)>| {
        let mut pairs = vec![
            ("p", a.p.map(|v| json!(v))),
            ("N", a.n.map(|v| json!(v))),
            ("seed", Some(json!(seed))),
            ("workers", Some(json!(workers))),
        ];
        pairs.extend(extra);
        flags(&pairs)
    };
    let lrt_flags = || {
        common(vec![
            ("k0", a.k0.map(|v| json!(v))),
            ("k1", a.k1.map(|v| json!(v))),
            ("mdl_h1_options", a.msvar.map(|m| json!({ "msvar": m }))),
        ])
    };
    let f = file.as_ref();
    let (result, config): (TestResult, Value) = match a.name {
        TestName::LmcLrt => {
            let (c, v) = resolve::<LrTestConfig>(f, lrt_flags())?;
            (lmc_lrt(&sample, &c)?, v)
        }
        TestName::MmcLrt => {
            let (c, v) = resolve::<MmcConfig>(f, lrt_flags())?;
            (mmc_lrt(&sample, &c)?, v)
        }
        TestName::DlMc => {
            let (c, v) = resolve::<DlConfig>(f, common(vec![]))?;
            (dlmc_test(&sample, &c)?, v)
        }
        TestName::DlMmc => {
            let (c, v) = resolve::<DlConfig>(f, common(vec![]))?;
            (dlmmc_test(&sample, &c)?, v)
        }
        TestName::Chp => {
            let (c, v) = resolve::<ChpConfig>(f, common(vec![("msvar", a.msvar.map(Value::Bool))]))?;
            (chp_test(&sample, &c)?, v)
        }
        TestName::Hlr => {
            if a.n.is_some() {
                return invalid("hlr takes --config n_sim rather than --N");
            }
            let (c, v) = resolve::<HansenConfig>(f, common(vec![("msvar", a.msvar.map(Value::Bool))]))?;
            (hlr_test(&sample, &c)?, v)
        }
    };
    let warnings = result.warnings.clone();
    Ok((config, serde_json::to_value(TestReport::from(&result))?, warnings))
}

fn cmd_data(c: &DataCommand, out: Option<&Path>) -> Result<Outcome> {
    match c {
        DataCommand::List => Ok((json!({}), json!({ "datasets": list_datasets() }), vec![])),
        DataCommand::Export { name } => {
            let out = out.ok_or_else(|| Error::InvalidInput("data export needs --out <csv>".into()))?;
            let d = dataset(*name)?;
            d.write(BufWriter::new(File::create(out)?))?;
            let result = json!({
                "name": name,
                "rows": d.rows.len(),
                "growth_observations": d.growth().len(),
                "path": out.display().to_string(),
            });
            Ok((json!({ "name": name }), result, vec![]))
        }
    }
}
