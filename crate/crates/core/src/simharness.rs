//! Replication studies: repeatedly draw samples from a population, estimate
//! under one or more analysis setups, Rao-Blackwellize, and score the
//! estimators against the known truth.
//!
//! Every replication owns its random streams (see [`crate::rng`]), and
//! results are gathered in replication order, so a study is reproducible
//! for any thread count.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{observe, select, DesignParams, ObservedSample, Roles};
use crate::diagnostics::{search_overdispersed_with, SearchDirection, SeedSearch};
use crate::estimators::{
    observed_in_total, EstimateWithVariance, EstimatorSuite, Interval, MeanMode, MeanSpec,
    ProportionSpec, Quantity,
};
use crate::population::{generate_synthetic, load_population, Population, StratumMeta, SyntheticSpec, UnitId};
use crate::provenance::Provenance;
use crate::rao_blackwell::{rb_exact, rb_mcmc, suite_estimator, PointVariance, RbMcmc};
use crate::reorder::{Gammas, ReorderModel, Reordering};
use crate::rng::{phase, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PopulationSource {
    /// Node and edge CSV files.
    Files {
        nodes: PathBuf,
        edges: PathBuf,
        #[serde(default)]
        symmetrize: bool,
    },
    Synthetic { spec: SyntheticSpec },
}

impl PopulationSource {
    pub fn load(&self) -> Result<Population> {
        match self {
            PopulationSource::Files {
                nodes,
                edges,
                symmetrize,
            } => load_population(nodes, edges, *symmetrize),
            PopulationSource::Synthetic { spec } => generate_synthetic(spec),
        }
    }

    /// Resolves relative file paths against `base`.
    pub fn relative_to(&self, base: &Path) -> Self {
        match self {
            PopulationSource::Files {
                nodes,
                edges,
                symmetrize,
            } => PopulationSource::Files {
                nodes: base.join(nodes),
                edges: base.join(edges),
                symmetrize: *symmetrize,
            },
            other => other.clone(),
        }
    }
}

/// Strata assumed by an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrataRule {
    /// All units in one stratum.
    Single,
    /// The population's own strata.
    Generative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisSetup {
    pub name: String,
    pub strata: StrataRule,
    /// The this-many highest-degree units (ties to the smaller id) form an
    /// extra stratum, numbered first, that every sample contains.
    #[serde(default)]
    pub certainty_top_degree: usize,
    #[serde(default = "yes")]
    pub stabilize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbMode {
    #[default]
    Mcmc,
    Exact,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub population: PopulationSource,
    /// Design that generates the samples.
    pub design: DesignParams,
    pub setups: Vec<AnalysisSetup>,
    pub replications: usize,
    /// States per chain.
    #[serde(default = "default_chain_length")]
    pub chain_length: usize,
    /// Interchange-size probabilities for setups with two or more strata;
    /// one-stratum setups always use `(1)`. Defaults to 0.9 on single swaps.
    #[serde(default)]
    pub gammas: Option<Vec<f64>>,
    /// Proposals per over-dispersed seed search.
    #[serde(default = "default_search_length")]
    pub search_length: usize,
    /// Chains per sample: the first two start from the lower and upper
    /// search results, any others from the original ordering.
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub rb: RbMode,
    #[serde(default = "default_enumeration_cap")]
    pub enumeration_cap: u64,
    /// 0/1 response whose population share is estimated.
    #[serde(default)]
    pub proportion_response: Option<String>,
    /// Response whose population mean is estimated.
    #[serde(default)]
    pub mean_response: Option<String>,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_chain_length() -> usize {
    2000
}

fn default_search_length() -> usize {
    10_000
}

fn default_chains() -> usize {
    2
}

fn default_enumeration_cap() -> u64 {
    1_000_000
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.setups.is_empty() {
            return Err(Error::Config("at least one analysis setup is required".into()));
        }
        if self.rb == RbMode::Mcmc && (self.chain_length == 0 || self.chains == 0 || self.chains > 256) {
            return Err(Error::Config("chain length must be positive and chains within 1..=256".into()));
        }
        if let Some(g) = &self.gammas {
            Gammas::new(g.clone())?;
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        let mut names: Vec<&str> = self.setups.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.setups.len() {
            return Err(Error::Config("setup names must be unique".into()));
        }
        Ok(())
    }
}

/// Covered flag and length of one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: bool,
    pub length: f64,
}

pub fn coverage_score(interval: &Interval, truth: f64) -> Coverage {
    Coverage {
        covered: interval.lo <= truth && truth <= interval.hi,
        length: interval.hi - interval.lo,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityResult {
    pub quantity: Quantity,
    pub truth: f64,
    pub preliminary: EstimateWithVariance,
    pub rb: Option<EstimateWithVariance>,
    pub gelman_rubin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub tag: String,
    pub message: String,
}

impl From<&Error> for Failure {
    fn from(e: &Error) -> Self {
        Self {
            tag: e.tag().to_string(),
            message: e.to_string(),
        }
    }
}

/// One setup evaluated on one replication's sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupRun {
    pub replication: usize,
    pub setup: String,
    pub initial_size: Option<usize>,
    pub final_size: Option<usize>,
    pub acceptance_rate: Option<f64>,
    pub quantities: Vec<QuantityResult>,
    pub failure: Option<Failure>,
}

/// Expectation and variance scores, coverage and interval lengths for one
/// quantity under one setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub setup: String,
    pub quantity: Quantity,
    pub truth: f64,
    pub replications: usize,
    pub failures: usize,
    pub prelim_expectation: f64,
    pub prelim_variance: f64,
    pub rb_expectation: Option<f64>,
    pub rb_variance: Option<f64>,
    pub prelim_coverage: f64,
    pub prelim_mean_length: f64,
    pub rb_coverage: Option<f64>,
    pub rb_mean_length: Option<f64>,
    /// Share of replications whose RB variance used the conservative
    /// fallback.
    pub rb_conservative_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupSummary {
    pub setup: String,
    pub strata: usize,
    pub replications: usize,
    pub failures: usize,
    pub mean_initial_size: f64,
    pub mean_final_size: f64,
    pub mean_acceptance_rate: Option<f64>,
    pub mean_gelman_rubin: Option<f64>,
    pub median_gelman_rubin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub provenance: Provenance,
    pub config: StudyConfig,
    pub setups: Vec<SetupSummary>,
    pub scores: Vec<ScoreRow>,
    pub replications: Vec<SetupRun>,
}

/// A setup resolved against the population.
struct PreparedSetup {
    name: String,
    analysis_pop: Population,
    analysis_design: DesignParams,
    selection_design: DesignParams,
    suite: EstimatorSuite,
    truths: Vec<f64>,
    gammas: Gammas,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Adds responses the study needs as explicit columns (a missing `degree`
/// column is derived from the graph).
fn materialize_responses(pop: Population, cfg: &StudyConfig) -> Result<Population> {
    let mut pop = pop;
    for name in cfg.proportion_response.iter().chain(&cfg.mean_response) {
        if pop.response_index(name).is_none() {
            let values = pop
                .response_values(name)
                .ok_or_else(|| Error::Config(format!("population has no response named {name}")))?;
            pop = pop.with_response(name, values)?;
        }
    }
    Ok(pop)
}

fn prepare_setup(pop: &Population, cfg: &StudyConfig, setup: &AnalysisSetup) -> Result<PreparedSetup> {
    let generative = pop.strata_assignment();
    let base: Vec<usize> = match setup.strata {
        StrataRule::Single => vec![0; pop.len()],
        StrataRule::Generative => generative.to_vec(),
    };
    let top = pop.top_degree_units(setup.certainty_top_degree);
    let mut mapping = base;
    let mut meta = vec![StratumMeta::default(); mapping.iter().max().map_or(0, |m| m + 1)];
    if !top.is_empty() {
        for s in mapping.iter_mut() {
            *s += 1;
        }
        for &u in &top {
            mapping[u] = 0;
        }
        meta.insert(
            0,
            StratumMeta {
                certainty: true,
                include_in_total: true,
            },
        );
    }
    let analysis_pop = pop.restratified(mapping.clone(), meta).map_err(|e| match e {
        Error::NonContiguousStrata(m) => Error::Config(format!("setup {}: an analysis stratum is empty ({m})", setup.name)),
        other => other,
    })?;
    let k = analysis_pop.num_strata();

    let mut alpha = vec![0.0; k];
    let mut members = vec![0usize; k];
    for (u, &a) in mapping.iter().enumerate() {
        alpha[a] += cfg.design.alpha[generative[u]];
        members[a] += 1;
    }
    for a in 0..k {
        alpha[a] /= members[a] as f64;
    }
    if !top.is_empty() {
        alpha[0] = 1.0;
    }
    let mut beta = vec![vec![f64::NAN; k]; k];
    let mut present = vec![vec![false; cfg.design.num_strata()]; k];
    for (u, &a) in mapping.iter().enumerate() {
        present[a][generative[u]] = true;
    }
    for a in 0..k {
        for b in 0..k {
            for g in (0..present[a].len()).filter(|&g| present[a][g]) {
                for h in (0..present[b].len()).filter(|&h| present[b][h]) {
                    let v = cfg.design.beta[g][h];
                    if beta[a][b].is_nan() {
                        beta[a][b] = v;
                    } else if (beta[a][b] - v).abs() > 1e-12 {
                        return Err(Error::Config(format!(
                            "setup {}: tracing probability varies within analysis strata {} -> {}",
                            setup.name,
                            a + 1,
                            b + 1
                        )));
                    }
                }
            }
        }
    }
    let analysis_design = DesignParams {
        alpha,
        beta,
        certainty_units: Vec::new(),
    };
    let certainty_ids: Vec<UnitId> = top.iter().map(|&u| pop.id(u)).collect();
    let selection_design = DesignParams {
        certainty_units: certainty_ids,
        ..cfg.design.clone()
    };

    let suite = EstimatorSuite {
        stabilize: setup.stabilize,
        proportion: cfg.proportion_response.as_ref().map(|r| {
            if k == 1 {
                ProportionSpec::IndicatorMean { response: r.clone() }
            } else {
                ProportionSpec::Indicator { response: r.clone() }
            }
        }),
        mean: cfg.mean_response.as_ref().map(|r| MeanSpec {
            response: r.clone(),
            mode: if k == 1 { MeanMode::OneStratum } else { MeanMode::Stratified },
        }),
    };
    let mut truths = vec![pop.len() as f64];
    for name in cfg.proportion_response.iter().chain(&cfg.mean_response) {
        let values = pop.response_values(name).expect("materialized");
        truths.push(mean(values).expect("population is not empty"));
    }
    let gammas = match (&cfg.gammas, k) {
        (_, 1) => Gammas::default_for(1),
        (Some(g), _) => Gammas::new(g.clone())?,
        (None, _) => Gammas::default_for(k),
    };
    Ok(PreparedSetup {
        name: setup.name.clone(),
        analysis_pop,
        analysis_design,
        selection_design,
        suite,
        truths,
        gammas,
    })
}

/// Chain settings for one Rao-Blackwellization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub chain_length: usize,
    /// The first two chains start from the lower and upper search results,
    /// any others from the original ordering. A single chain starts from
    /// the original ordering.
    pub chains: usize,
    pub search_length: usize,
    pub gammas: Gammas,
}

/// Identifies the random streams of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub replication: u64,
    /// Distinguishes analyses of the same sample. Each slot holds at most
    /// 256 chains.
    pub slot: u64,
}

#[derive(Debug, Clone)]
pub struct SeededRb {
    pub mcmc: RbMcmc,
    /// Seed searches in chain order (empty with fewer than two chains).
    pub searches: Vec<SeedSearch>,
}

/// Over-dispersed seed searches followed by [`rb_mcmc`].
pub fn seeded_rb_mcmc<F>(
    model: &ReorderModel,
    original: &Roles,
    estimator: F,
    settings: &ChainSettings,
    key: StreamKey,
    record_traces: bool,
) -> Result<SeededRb>
where
    F: Fn(&Roles) -> Result<Vec<PointVariance>>,
{
    let start = Reordering::new(model, original.clone())?;
    let mut searches = Vec::new();
    let mut seeds = Vec::with_capacity(settings.chains);
    for c in 0..settings.chains {
        let seed = match c {
            0 | 1 if settings.chains >= 2 => {
                let (direction, tag) = if c == 0 {
                    (SearchDirection::Lower, phase::SEARCH_LOWER)
                } else {
                    (SearchDirection::Upper, phase::SEARCH_UPPER)
                };
                let mut rng = stream(key.seed, key.replication, tag, key.slot);
                let search = search_overdispersed_with(
                    model,
                    start.clone(),
                    settings.search_length,
                    direction,
                    &settings.gammas,
                    &mut rng,
                    record_traces,
                )?;
                let seed = search.seed.clone();
                searches.push(search);
                seed
            }
            _ => start.clone(),
        };
        seeds.push(seed);
    }
    let mut rngs: Vec<_> = (0..settings.chains)
        .map(|c| stream(key.seed, key.replication, phase::CHAIN, key.slot * 256 + c as u64))
        .collect();
    let mcmc = rb_mcmc(model, original, estimator, seeds, settings.chain_length, &settings.gammas, &mut rngs)?;
    Ok(SeededRb { mcmc, searches })
}

struct Evaluated {
    quantities: Vec<QuantityResult>,
    acceptance_rate: Option<f64>,
}

fn evaluate_sample(cfg: &StudyConfig, setup: &PreparedSetup, slot: u64, rep: u64, d0: &ObservedSample) -> Result<Evaluated> {
    let data = d0.data();
    let roles = d0.roles();
    let preliminary = setup.suite.evaluate(data, &roles)?;
    let quantities = setup.suite.quantities();
    let observed = observed_in_total(data) as f64;

    let (rb, acceptance_rate) = match cfg.rb {
        RbMode::Off => (None, None),
        RbMode::Exact => {
            let model = ReorderModel::new(&d0.reduce())?;
            let est = suite_estimator(&setup.suite, model.data());
            (Some(rb_exact(&model, &roles, est, u128::from(cfg.enumeration_cap))?), None)
        }
        RbMode::Mcmc => {
            let model = ReorderModel::new(&d0.reduce())?;
            let settings = ChainSettings {
                chain_length: cfg.chain_length,
                chains: cfg.chains,
                search_length: cfg.search_length,
                gammas: setup.gammas.clone(),
            };
            let est = suite_estimator(&setup.suite, model.data());
            let out = seeded_rb_mcmc(&model, &roles, est, &settings, StreamKey { seed: cfg.seed, replication: rep, slot }, false)?;
            let rate = out.mcmc.results.first().map(|r| r.acceptance_rate);
            (Some(out.mcmc.results), rate)
        }
    };

    let results = quantities
        .iter()
        .enumerate()
        .map(|(q, &quantity)| QuantityResult {
            quantity,
            truth: setup.truths[q],
            preliminary: preliminary[q],
            rb: rb.as_ref().map(|r| r[q].estimate(quantity, observed)),
            gelman_rubin: rb.as_ref().and_then(|r| r[q].gelman_rubin),
        })
        .collect();
    Ok(Evaluated {
        quantities: results,
        acceptance_rate,
    })
}

fn run_replication(pop: &Population, cfg: &StudyConfig, setups: &[PreparedSetup], rep: usize) -> Vec<SetupRun> {
    setups
        .iter()
        .enumerate()
        .map(|(slot, setup)| {
            let mut run = SetupRun {
                replication: rep,
                setup: setup.name.clone(),
                initial_size: None,
                final_size: None,
                acceptance_rate: None,
                quantities: Vec::new(),
                failure: None,
            };
            // Every setup replays the same sampling stream.
            let mut rng = stream(cfg.seed, rep as u64, phase::SAMPLE, 0);
            let outcome = select(pop, &setup.selection_design, &mut rng)
                .and_then(|sel| observe(&setup.analysis_pop, &sel, &setup.analysis_design))
                .and_then(|d0| {
                    run.initial_size = Some(d0.initial_size());
                    run.final_size = Some(d0.final_size());
                    evaluate_sample(cfg, setup, slot as u64, rep as u64, &d0)
                });
            match outcome {
                Ok(ev) => {
                    run.quantities = ev.quantities;
                    run.acceptance_rate = ev.acceptance_rate;
                }
                Err(e) => run.failure = Some(Failure::from(&e)),
            }
            run
        })
        .collect()
}

/// Loads the population and runs the study.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let pop = cfg.population.load()?;
    run_study_on(&pop, cfg)
}

/// Runs the study on an already loaded population.
pub fn run_study_on(pop: &Population, cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    cfg.design.validate_for(pop)?;
    let pop = materialize_responses(pop.clone(), cfg)?;
    let setups = cfg
        .setups
        .iter()
        .map(|s| prepare_setup(&pop, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let work = || -> Vec<SetupRun> {
        (0..cfg.replications)
            .into_par_iter()
            .flat_map_iter(|rep| run_replication(&pop, cfg, &setups, rep))
            .collect()
    };
    let runs = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let (summaries, scores) = aggregate(&setups, &runs);
    // The hash ignores the thread count.
    let hashed = StudyConfig {
        threads: None,
        ..cfg.clone()
    };
    Ok(StudyReport {
        provenance: Provenance::of(&hashed, cfg.seed),
        config: cfg.clone(),
        setups: summaries,
        scores,
        replications: runs,
    })
}

fn aggregate(setups: &[PreparedSetup], runs: &[SetupRun]) -> (Vec<SetupSummary>, Vec<ScoreRow>) {
    let mut summaries = Vec::new();
    let mut scores = Vec::new();
    for setup in setups {
        let mine: Vec<&SetupRun> = runs.iter().filter(|r| r.setup == setup.name).collect();
        let ok: Vec<&SetupRun> = mine.iter().copied().filter(|r| r.failure.is_none()).collect();
        let failures = mine.len() - ok.len();
        let mut gr: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.quantities.first().and_then(|q| q.gelman_rubin))
            .collect();
        summaries.push(SetupSummary {
            setup: setup.name.clone(),
            strata: setup.analysis_pop.num_strata(),
            replications: ok.len(),
            failures,
            mean_initial_size: mean(mine.iter().filter_map(|r| r.initial_size).map(|v| v as f64)).unwrap_or(0.0),
            mean_final_size: mean(mine.iter().filter_map(|r| r.final_size).map(|v| v as f64)).unwrap_or(0.0),
            mean_acceptance_rate: mean(ok.iter().filter_map(|r| r.acceptance_rate)),
            mean_gelman_rubin: mean(gr.iter().copied()),
            median_gelman_rubin: median(&mut gr),
        });
        for (q, &quantity) in setup.suite.quantities().iter().enumerate() {
            let prelim: Vec<&EstimateWithVariance> = ok.iter().map(|r| &r.quantities[q].preliminary).collect();
            let rb: Vec<&EstimateWithVariance> = ok.iter().filter_map(|r| r.quantities[q].rb.as_ref()).collect();
            let truth = setup.truths[q];
            let points = |v: &[&EstimateWithVariance]| v.iter().map(|e| e.point).collect::<Vec<_>>();
            let cover = |v: &[&EstimateWithVariance]| -> (f64, f64) {
                let c: Vec<Coverage> = v.iter().map(|e| coverage_score(&e.interval, truth)).collect();
                (
                    mean(c.iter().map(|c| f64::from(u8::from(c.covered)))).unwrap_or(f64::NAN),
                    mean(c.iter().map(|c| c.length)).unwrap_or(f64::NAN),
                )
            };
            let (prelim_coverage, prelim_mean_length) = cover(&prelim);
            let has_rb = !rb.is_empty();
            let (rb_coverage, rb_mean_length) = cover(&rb);
            scores.push(ScoreRow {
                setup: setup.name.clone(),
                quantity,
                truth,
                replications: ok.len(),
                failures,
                prelim_expectation: mean(points(&prelim)).unwrap_or(f64::NAN),
                prelim_variance: sample_variance(&points(&prelim)),
                rb_expectation: has_rb.then(|| mean(points(&rb)).unwrap_or(f64::NAN)),
                rb_variance: has_rb.then(|| sample_variance(&points(&rb))),
                prelim_coverage,
                prelim_mean_length,
                rb_coverage: has_rb.then_some(rb_coverage),
                rb_mean_length: has_rb.then_some(rb_mean_length),
                rb_conservative_rate: has_rb.then(|| mean(rb.iter().map(|e| f64::from(u8::from(e.conservative)))).unwrap_or(f64::NAN)),
            });
        }
    }
    (summaries, scores)
}

#[derive(Serialize)]
struct ExpectationRow<'a> {
    setup: &'a str,
    quantity: &'static str,
    truth: f64,
    replications: usize,
    failures: usize,
    prelim_expectation: f64,
    rb_expectation: Option<f64>,
    prelim_variance: f64,
    rb_variance: Option<f64>,
}

#[derive(Serialize)]
struct CoverageRow<'a> {
    setup: &'a str,
    quantity: &'static str,
    prelim_coverage: f64,
    prelim_mean_length: f64,
    rb_coverage: Option<f64>,
    rb_mean_length: Option<f64>,
    rb_conservative_rate: Option<f64>,
}

#[derive(Serialize)]
struct ReplicationRow<'a> {
    replication: usize,
    setup: &'a str,
    status: &'static str,
    failure: Option<&'a str>,
    initial_size: Option<usize>,
    final_size: Option<usize>,
    quantity: Option<&'static str>,
    truth: Option<f64>,
    prelim_point: Option<f64>,
    prelim_variance: Option<f64>,
    prelim_lo: Option<f64>,
    prelim_hi: Option<f64>,
    rb_point: Option<f64>,
    rb_variance: Option<f64>,
    rb_lo: Option<f64>,
    rb_hi: Option<f64>,
    rb_conservative: Option<bool>,
    gelman_rubin: Option<f64>,
}

impl StudyReport {
    fn csv_writer<W: Write>(&self, out: W) -> Result<csv::Writer<W>> {
        let mut out = out;
        write!(out, "{}", self.provenance.csv_comment())?;
        Ok(csv::Writer::from_writer(out))
    }

    /// Expectation and variance scores per setup and quantity.
    pub fn write_scores_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = self.csv_writer(out)?;
        for s in &self.scores {
            w.serialize(ExpectationRow {
                setup: &s.setup,
                quantity: s.quantity.name(),
                truth: s.truth,
                replications: s.replications,
                failures: s.failures,
                prelim_expectation: s.prelim_expectation,
                rb_expectation: s.rb_expectation,
                prelim_variance: s.prelim_variance,
                rb_variance: s.rb_variance,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Coverage rates and mean interval lengths per setup and quantity.
    pub fn write_coverage_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = self.csv_writer(out)?;
        for s in &self.scores {
            w.serialize(CoverageRow {
                setup: &s.setup,
                quantity: s.quantity.name(),
                prelim_coverage: s.prelim_coverage,
                prelim_mean_length: s.prelim_mean_length,
                rb_coverage: s.rb_coverage,
                rb_mean_length: s.rb_mean_length,
                rb_conservative_rate: s.rb_conservative_rate,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sample sizes, acceptance rates and Gelman-Rubin summaries per setup.
    pub fn write_chains_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = self.csv_writer(out)?;
        for s in &self.setups {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per replication, setup and quantity.
    pub fn write_replications_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = self.csv_writer(out)?;
        for run in &self.replications {
            let base = ReplicationRow {
                replication: run.replication,
                setup: &run.setup,
                status: if run.failure.is_none() { "ok" } else { "failed" },
                failure: run.failure.as_ref().map(|f| f.tag.as_str()),
                initial_size: run.initial_size,
                final_size: run.final_size,
                quantity: None,
                truth: None,
                prelim_point: None,
                prelim_variance: None,
                prelim_lo: None,
                prelim_hi: None,
                rb_point: None,
                rb_variance: None,
                rb_lo: None,
                rb_hi: None,
                rb_conservative: None,
                gelman_rubin: None,
            };
            if run.quantities.is_empty() {
                w.serialize(&base)?;
            }
            for q in &run.quantities {
                w.serialize(ReplicationRow {
                    quantity: Some(q.quantity.name()),
                    truth: Some(q.truth),
                    prelim_point: Some(q.preliminary.point),
                    prelim_variance: Some(q.preliminary.variance),
                    prelim_lo: Some(q.preliminary.interval.lo),
                    prelim_hi: Some(q.preliminary.interval.hi),
                    rb_point: q.rb.map(|e| e.point),
                    rb_variance: q.rb.map(|e| e.variance),
                    rb_lo: q.rb.map(|e| e.interval.lo),
                    rb_hi: q.rb.map(|e| e.interval.hi),
                    rb_conservative: q.rb.map(|e| e.conservative),
                    gelman_rubin: q.gelman_rubin,
                    ..base
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json`, `scores.csv`, `coverage.csv`, `chains.csv` and
    /// `replications.csv` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        self.write_scores_csv(std::fs::File::create(dir.join("scores.csv"))?)?;
        self.write_coverage_csv(std::fs::File::create(dir.join("coverage.csv"))?)?;
        self.write_chains_csv(std::fs::File::create(dir.join("chains.csv"))?)?;
        self.write_replications_csv(std::fs::File::create(dir.join("replications.csv"))?)?;
        Ok(())
    }
}

/// Three setups over the same samples: one stratum, the population's
/// strata, and the population's strata plus a certainty stratum of the
/// ten highest-degree units.
pub fn standard_setups() -> Vec<AnalysisSetup> {
    vec![
        AnalysisSetup {
            name: "one-stratum".into(),
            strata: StrataRule::Single,
            certainty_top_degree: 0,
            stabilize: true,
        },
        AnalysisSetup {
            name: "two-strata".into(),
            strata: StrataRule::Generative,
            certainty_top_degree: 0,
            stabilize: true,
        },
        AnalysisSetup {
            name: "three-strata".into(),
            strata: StrataRule::Generative,
            certainty_top_degree: 10,
            stabilize: true,
        },
    ]
}

/// Study on the drug-user surrogate with the three standard setups.
pub fn surrogate_study(population_seed: u64, alpha: f64, beta: f64, replications: usize, seed: u64) -> StudyConfig {
    StudyConfig {
        population: PopulationSource::Synthetic {
            spec: SyntheticSpec::drug_user_surrogate(population_seed),
        },
        design: DesignParams::uniform(2, alpha, beta),
        setups: standard_setups(),
        replications,
        chain_length: default_chain_length(),
        gammas: None,
        search_length: default_search_length(),
        chains: default_chains(),
        rb: RbMode::Mcmc,
        enumeration_cap: default_enumeration_cap(),
        proportion_response: Some("idu".into()),
        mean_response: Some("degree".into()),
        seed,
        threads: None,
    }
}
