//! Over-dispersed chain seeds and the Gelman-Rubin convergence statistic.

use std::io::Write;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::provenance::Provenance;
use crate::reorder::{AcceptRule, Chain, Gammas, ReorderModel, Reordering};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Default convergence threshold for the Gelman-Rubin statistic.
pub const GELMAN_RUBIN_THRESHOLD: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchDirection {
    /// Toward less probable reorderings.
    Lower,
    /// Toward more probable reorderings.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSearchConfig {
    /// Number of proposals drawn.
    pub steps: usize,
    pub direction: SearchDirection,
    pub gammas: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub step: usize,
    pub accepted: bool,
    pub log_p: f64,
}

#[derive(Debug, Clone)]
pub struct SeedSearch {
    pub seed: Reordering,
    pub acceptances: usize,
    /// Incumbent after every step, starting with the original ordering.
    pub trace: Vec<SearchRow>,
}

/// Greedy search from `start` that moves only to consistent candidates
/// strictly less (or more) probable than the incumbent.
pub fn search_overdispersed_with<R: Rng + ?Sized>(
    model: &ReorderModel,
    start: Reordering,
    steps: usize,
    direction: SearchDirection,
    gammas: &Gammas,
    rng: &mut R,
    record_trace: bool,
) -> Result<SeedSearch> {
    let rule = match direction {
        SearchDirection::Lower => AcceptRule::Lower,
        SearchDirection::Upper => AcceptRule::Upper,
    };
    let mut chain = Chain::new(model, start)?;
    let mut trace = Vec::new();
    if record_trace {
        trace.reserve(steps + 1);
        trace.push(SearchRow {
            step: 0,
            accepted: false,
            log_p: chain.current().log_p(),
        });
    }
    for step in 1..=steps {
        let outcome = chain.step_with(gammas, rng, rule);
        if record_trace {
            trace.push(SearchRow {
                step,
                accepted: outcome.accepted,
                log_p: chain.current().log_p(),
            });
        }
    }
    Ok(SeedSearch {
        acceptances: chain.acceptances(),
        seed: chain.current().clone(),
        trace,
    })
}

pub fn search_overdispersed(model: &ReorderModel, start: Reordering, cfg: &SeedSearchConfig) -> Result<SeedSearch> {
    let gammas = Gammas::new(cfg.gammas.clone())?;
    let mut rng = StreamRng::seed_from_u64(cfg.seed);
    search_overdispersed_with(model, start, cfg.steps, cfg.direction, &gammas, &mut rng, true)
}

pub fn write_search_csv<W: Write>(out: W, rows: &[SearchRow], provenance: Option<&Provenance>) -> Result<()> {
    let mut out = out;
    if let Some(p) = provenance {
        write!(out, "{}", p.csv_comment())?;
    }
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Potential scale reduction factor of two or more equal-length traces,
/// without splitting or burn-in.
pub fn gelman_rubin(traces: &[Vec<f64>]) -> Result<f64> {
    if traces.len() < 2 {
        return Err(Error::Config("Gelman-Rubin needs at least two chains".into()));
    }
    let m = traces[0].len();
    if m < 2 || traces.iter().any(|t| t.len() != m) {
        return Err(Error::Config("Gelman-Rubin needs equal-length chains of length two or more".into()));
    }
    let c = traces.len() as f64;
    let len = m as f64;
    let means: Vec<f64> = traces.iter().map(|t| t.iter().sum::<f64>() / len).collect();
    let within = traces
        .iter()
        .zip(&means)
        .map(|(t, mean)| t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (len - 1.0))
        .sum::<f64>()
        / c;
    if within <= 0.0 {
        return Err(Error::ZeroWithinVariance);
    }
    let grand = means.iter().sum::<f64>() / c;
    let between = len * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (c - 1.0);
    Ok((((len - 1.0) / len * within + between / len) / within).sqrt())
}
