//! `linktrace` command-line driver.
//!
//! Every subcommand reads one JSON config (`--config`); `--seed` overrides
//! the config seed. Failures exit with 2 (configuration), 3 (data) or 4
//! (estimation) and print a JSON error record on stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use linktrace::design::{draw_sample, DesignParams, ObservedSample, SampleDocument};
use linktrace::diagnostics::write_search_csv;
use linktrace::estimators::{observed_in_total, size_point, EstimateRecord, EstimatorSuite, Quantity};
use linktrace::population::{generate_synthetic, write_edges_csv, write_nodes_csv, SyntheticSpec};
use linktrace::provenance::Provenance;
use linktrace::rao_blackwell::{rb_exact, suite_estimator};
use linktrace::reorder::{write_trace_csv, Gammas, ReorderModel, DEFAULT_ENUMERATION_CAP};
use linktrace::rng::{phase, stream};
use linktrace::simharness::{run_study, seeded_rb_mcmc, ChainSettings, PopulationSource, RbMode, StreamKey, StudyConfig};
use linktrace::{Error, ErrorClass, Result};

/// Environment variable overriding the worker thread count of `simulate`.
const THREADS_ENV: &str = "LINKTRACE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "linktrace", version, about = "Stratified link-tracing estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory (stdout for single-file outputs if omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check population files (and optionally a design) and print a summary.
    Validate,
    /// Generate a synthetic population into the --out directory.
    Synth,
    /// Draw one sample and write it as a JSON sample document.
    Sample,
    /// Preliminary estimates from a sample document.
    Estimate,
    /// Rao-Blackwellized estimates from a sample document.
    Rb,
    /// Run a replication study into the --out directory.
    Simulate,
}

#[derive(Debug, Serialize, Deserialize)]
struct ValidateConfig {
    population: PopulationSource,
    #[serde(default)]
    design: Option<DesignParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleConfig {
    population: PopulationSource,
    design: DesignParams,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EstimateConfig {
    /// Sample document, relative to the config file.
    sample: PathBuf,
    #[serde(default)]
    suite: EstimatorSuite,
    #[serde(default)]
    setup: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RbConfig {
    sample: PathBuf,
    #[serde(default)]
    suite: EstimatorSuite,
    #[serde(default = "default_rb_mode")]
    mode: RbMode,
    #[serde(default = "default_chain_length")]
    chain_length: usize,
    #[serde(default = "default_chains")]
    chains: usize,
    #[serde(default = "default_search_length")]
    search_length: usize,
    #[serde(default)]
    gammas: Option<Vec<f64>>,
    #[serde(default = "default_cap")]
    enumeration_cap: u64,
    /// Write chain and seed-search traces next to the results.
    #[serde(default)]
    traces: bool,
    #[serde(default)]
    seed: u64,
}

fn default_rb_mode() -> RbMode {
    RbMode::Mcmc
}

fn default_chain_length() -> usize {
    2000
}

fn default_chains() -> usize {
    2
}

fn default_search_length() -> usize {
    10_000
}

fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP as u64
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    class: &'a str,
    message: String,
}

#[derive(Serialize)]
struct Documented<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct RbRow {
    quantity: &'static str,
    preliminary: f64,
    preliminary_variance: f64,
    rb_point: f64,
    rb_variance: f64,
    conservative: bool,
    chain_length: usize,
    acceptance_rate: f64,
    gelman_rubin: Option<f64>,
    reorderings: Option<usize>,
    ci_lo: f64,
    ci_hi: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            let record = ErrorRecord {
                error: e.tag(),
                class: match class {
                    ErrorClass::Config => "config",
                    ErrorClass::Data => "data",
                    ErrorClass::Estimation => "estimation",
                },
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            ExitCode::from(exit_code(class))
        }
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Estimation => 4,
    }
}

fn run(cli: &Cli) -> Result<()> {
    match cli.command {
        Command::Validate => validate(cli),
        Command::Synth => synth(cli),
        Command::Sample => sample(cli),
        Command::Estimate => estimate(cli),
        Command::Rb => rb(cli),
        Command::Simulate => simulate(cli),
    }
}

/// Reads the config and returns it with the directory relative paths are
/// resolved against.
fn read_config<T: serde::de::DeserializeOwned>(cli: &Cli) -> Result<(T, PathBuf)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required for this subcommand".into()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, bytes)?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn validate(cli: &Cli) -> Result<()> {
    let (cfg, base): (ValidateConfig, _) = read_config(cli)?;
    let pop = cfg.population.relative_to(&base).load()?;
    if let Some(design) = &cfg.design {
        design.validate_for(&pop)?;
    }
    let provenance = Provenance::of(&cfg, cli.seed.unwrap_or(0));
    let summary = pop.summary();
    match cli.format {
        Format::Json => emit(
            cli.out.as_deref(),
            &json_bytes(&Documented {
                provenance: &provenance,
                body: summary,
            })?,
        ),
        Format::Csv => {
            let mut buf = provenance.csv_comment().into_bytes();
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["units", "strata", "links", "mean_degree", "reciprocated"])?;
            w.write_record([
                summary.units.to_string(),
                summary.strata_sizes.len().to_string(),
                summary.links.to_string(),
                summary.mean_degree.to_string(),
                summary.reciprocated.to_string(),
            ])?;
            drop(w);
            emit(cli.out.as_deref(), &buf)
        }
    }
}

fn synth(cli: &Cli) -> Result<()> {
    let (mut spec, _): (SyntheticSpec, _) = read_config(cli)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let dir = require_out(cli)?;
    let pop = generate_synthetic(&spec)?;
    let provenance = Provenance::of(&spec, spec.seed);
    fs::create_dir_all(dir)?;
    write_nodes_csv(&pop, fs::File::create(dir.join("nodes.csv"))?, Some(&provenance))?;
    write_edges_csv(&pop, fs::File::create(dir.join("edges.csv"))?, Some(&provenance))?;
    fs::write(
        dir.join("summary.json"),
        json_bytes(&Documented {
            provenance: &provenance,
            body: pop.summary(),
        })?,
    )?;
    Ok(())
}

fn sample(cli: &Cli) -> Result<()> {
    let (mut cfg, base): (SampleConfig, _) = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.format == Format::Csv {
        return Err(Error::Config("sample documents are JSON only".into()));
    }
    let pop = cfg.population.relative_to(&base).load()?;
    cfg.design.validate_for(&pop)?;
    let mut rng = stream(cfg.seed, 0, phase::SAMPLE, 0);
    let d0 = draw_sample(&pop, &cfg.design, &mut rng)?;
    let doc = d0.to_document(Some(Provenance::of(&cfg, cfg.seed)));
    emit(cli.out.as_deref(), &json_bytes(&doc)?)
}

fn load_sample(path: &Path) -> Result<ObservedSample> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let doc: SampleDocument =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    ObservedSample::from_document(&doc)
}

fn estimate(cli: &Cli) -> Result<()> {
    let (cfg, base): (EstimateConfig, _) = read_config(cli)?;
    let d0 = load_sample(&base.join(&cfg.sample))?;
    let roles = d0.roles();
    let outcomes = cfg.suite.evaluate_each(d0.data(), &roles);
    let mut records = Vec::with_capacity(outcomes.len());
    for (q, outcome) in cfg.suite.quantities().into_iter().zip(outcomes) {
        records.push(match outcome {
            Ok(e) => EstimateRecord::new(q, &cfg.setup, &e),
            // Too few initial units for a variance: report the point alone.
            Err(e @ Error::StratumTooSmall { .. }) => {
                let point = match q {
                    Quantity::Size => Some(size_point(d0.data(), &roles, cfg.suite.stabilize)?),
                    _ => None,
                };
                EstimateRecord::failed(q, &cfg.setup, point, &e)
            }
            Err(e) => return Err(e),
        });
    }
    let provenance = Provenance::of(&cfg, cli.seed.unwrap_or(0));
    match cli.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body {
                estimates: Vec<EstimateRecord>,
            }
            emit(
                cli.out.as_deref(),
                &json_bytes(&Documented {
                    provenance: &provenance,
                    body: Body { estimates: records },
                })?,
            )
        }
        Format::Csv => {
            let mut buf = provenance.csv_comment().into_bytes();
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in &records {
                w.serialize(r)?;
            }
            drop(w);
            emit(cli.out.as_deref(), &buf)
        }
    }
}

fn rb(cli: &Cli) -> Result<()> {
    let (mut cfg, base): (RbConfig, _) = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = require_out(cli)?;
    let d0 = load_sample(&base.join(&cfg.sample))?;
    let model = ReorderModel::new(&d0.reduce())?;
    let roles = d0.roles();
    let quantities = cfg.suite.quantities();
    let provenance = Provenance::of(&cfg, cfg.seed);
    fs::create_dir_all(dir)?;

    let results = match cfg.mode {
        RbMode::Off => return Err(Error::Config("rb mode must be `exact` or `mcmc`".into())),
        RbMode::Exact => rb_exact(
            &model,
            &roles,
            suite_estimator(&cfg.suite, model.data()),
            u128::from(cfg.enumeration_cap),
        )?,
        RbMode::Mcmc => {
            if cfg.chains == 0 || cfg.chains > 256 || cfg.chain_length == 0 {
                return Err(Error::Config("chain length must be positive and chains within 1..=256".into()));
            }
            let k = model.num_strata();
            let gammas = match (&cfg.gammas, k) {
                (Some(g), _) => Gammas::new(g.clone())?,
                (None, k) => Gammas::default_for(k),
            };
            let settings = ChainSettings {
                chain_length: cfg.chain_length,
                chains: cfg.chains,
                search_length: cfg.search_length,
                gammas,
            };
            let key = StreamKey {
                seed: cfg.seed,
                replication: 0,
                slot: 0,
            };
            let out = seeded_rb_mcmc(
                &model,
                &roles,
                suite_estimator(&cfg.suite, model.data()),
                &settings,
                key,
                cfg.traces,
            )?;
            if cfg.traces {
                for (c, run) in out.mcmc.runs.iter().enumerate() {
                    let rows = run.trace_rows(|v| v[0].0);
                    write_trace_csv(fs::File::create(dir.join(format!("chain_{c}.csv")))?, &rows, Some(&provenance))?;
                }
                for (search, name) in out.searches.iter().zip(["search_lower.csv", "search_upper.csv"]) {
                    write_search_csv(fs::File::create(dir.join(name))?, &search.trace, Some(&provenance))?;
                }
            }
            out.mcmc.results
        }
    };

    let observed = observed_in_total(model.data()) as f64;
    let rows: Vec<RbRow> = quantities
        .iter()
        .zip(&results)
        .map(|(&q, r)| {
            let est = r.estimate(q, observed);
            RbRow {
                quantity: q.name(),
                preliminary: r.preliminary,
                preliminary_variance: r.preliminary_variance,
                rb_point: r.rb_point,
                rb_variance: r.rb_variance,
                conservative: r.conservative,
                chain_length: r.chain_length,
                acceptance_rate: r.acceptance_rate,
                gelman_rubin: r.gelman_rubin,
                reorderings: r.reorderings,
                ci_lo: est.interval.lo,
                ci_hi: est.interval.hi,
            }
        })
        .collect();
    match cli.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                results: &'a [RbRow],
            }
            fs::write(
                dir.join("rb.json"),
                json_bytes(&Documented {
                    provenance: &provenance,
                    body: Body { results: &rows },
                })?,
            )?;
        }
        Format::Csv => {
            let mut buf = provenance.csv_comment().into_bytes();
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in &rows {
                w.serialize(r)?;
            }
            drop(w);
            fs::write(dir.join("rb.csv"), buf)?;
        }
    }
    Ok(())
}

fn simulate(cli: &Cli) -> Result<()> {
    let (mut cfg, base): (StudyConfig, _) = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n = raw
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
        cfg.threads = Some(n);
    }
    cfg.population = cfg.population.relative_to(&base);
    let dir = require_out(cli)?;
    let report = run_study(&cfg)?;
    report.write_all(dir)
}
