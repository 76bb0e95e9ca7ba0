//! Moment estimators for stratum sizes, population size, means and
//! proportions, with delete-one jackknife variances and confidence
//! intervals.
//!
//! All estimators take the sample together with a role assignment, so the
//! same code evaluates the original ordering and any reordering of it.

use serde::{Deserialize, Serialize};

use crate::design::{Roles, SampleData};
use crate::{Error, Result};

/// Normal quantile used for every 95% interval.
pub const Z_95: f64 = 1.96;

/// Initial-sample link counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountStatistics {
    /// `n_0k`: initial units per stratum.
    pub n0: Vec<u64>,
    /// `r[l][k]`: links from initial units in `l` to initial units in `k`.
    pub r: Vec<Vec<u64>>,
    /// `s[l][k]`: links from initial units in `l` to units of `k` outside
    /// the initial sample.
    pub s: Vec<Vec<u64>>,
    pub certainty: Vec<bool>,
    pub include_in_total: Vec<bool>,
}

impl CountStatistics {
    pub fn num_strata(&self) -> usize {
        self.n0.len()
    }

    fn as_f64(&self) -> RawStats {
        RawStats {
            n0: self.n0.iter().map(|&v| v as f64).collect(),
            r: self.r.iter().map(|row| row.iter().map(|&v| v as f64).collect()).collect(),
            s: self.s.iter().map(|row| row.iter().map(|&v| v as f64).collect()).collect(),
        }
    }
}

/// Per-initial-member nomination counts toward other initial members.
struct InitialLinks {
    /// `out_initial[i][k]`: initial units in stratum `k` that `i` nominates.
    out_initial: Vec<Vec<u32>>,
    /// `in_initial[i][l]`: initial units in stratum `l` that nominate `i`.
    in_initial: Vec<Vec<u32>>,
}

impl InitialLinks {
    fn new(data: &SampleData, roles: &Roles) -> Self {
        let (n, k) = (data.len(), data.num_strata());
        let mut out_initial = vec![vec![0u32; k]; n];
        let mut in_initial = vec![vec![0u32; k]; n];
        for i in roles.initial_members() {
            for &j in data.out_nbrs(i) {
                if roles.is_initial(j) {
                    out_initial[i][data.stratum(j)] += 1;
                    in_initial[j][data.stratum(i)] += 1;
                }
            }
        }
        Self {
            out_initial,
            in_initial,
        }
    }
}

#[derive(Debug, Clone)]
struct RawStats {
    n0: Vec<f64>,
    r: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
}

fn raw_statistics(data: &SampleData, roles: &Roles, links: &InitialLinks) -> RawStats {
    let k = data.num_strata();
    let mut stats = RawStats {
        n0: vec![0.0; k],
        r: vec![vec![0.0; k]; k],
        s: vec![vec![0.0; k]; k],
    };
    for i in roles.initial_members() {
        let l = data.stratum(i);
        stats.n0[l] += 1.0;
        let out_counts = &data.members()[i].out_counts;
        for m in 0..k {
            let inside = f64::from(links.out_initial[i][m]);
            stats.r[l][m] += inside;
            stats.s[l][m] += f64::from(out_counts[m]) - inside;
        }
    }
    stats
}

pub fn count_statistics(data: &SampleData, roles: &Roles) -> Result<CountStatistics> {
    roles.check_against(data)?;
    let raw = raw_statistics(data, roles, &InitialLinks::new(data, roles));
    let to_u64 = |v: &f64| *v as u64;
    Ok(CountStatistics {
        n0: raw.n0.iter().map(to_u64).collect(),
        r: raw.r.iter().map(|row| row.iter().map(to_u64).collect()).collect(),
        s: raw.s.iter().map(|row| row.iter().map(to_u64).collect()).collect(),
        certainty: (0..data.num_strata()).map(|k| data.is_certainty(k)).collect(),
        include_in_total: data.strata().iter().map(|m| m.include_in_total).collect(),
    })
}

fn stratum_size_raw(stats: &RawStats, k: usize, certainty: bool, stabilized: bool) -> Result<f64> {
    let n0k = stats.n0[k];
    if certainty {
        return Ok(n0k);
    }
    let inside: f64 = stats.r.iter().map(|row| row[k]).sum();
    let outside: f64 = stats.s.iter().map(|row| row[k]).sum();
    if stabilized {
        // One added to n_0k and to every r_lk and s_lk term, one subtracted
        // from the ratio.
        let strata = stats.n0.len() as f64;
        let inside = inside + strata;
        let outside = outside + strata;
        Ok((n0k + 1.0) * (inside + outside) / inside - 1.0)
    } else if inside == 0.0 {
        Err(Error::DivisionByZero { stratum: k + 1 })
    } else {
        Ok(n0k * (inside + outside) / inside)
    }
}

/// Estimate of `N_k` (0-based `k`). Certainty strata return `n_0k`.
pub fn stratum_size_estimate(stats: &CountStatistics, k: usize, stabilized: bool) -> Result<f64> {
    stratum_size_raw(&stats.as_f64(), k, stats.certainty[k], stabilized)
}

pub fn stratum_size_estimates(stats: &CountStatistics, stabilized: bool) -> Result<Vec<f64>> {
    let raw = stats.as_f64();
    (0..stats.num_strata())
        .map(|k| stratum_size_raw(&raw, k, stats.certainty[k], stabilized))
        .collect()
}

/// Sum of the stratum estimates over strata counted in the total.
pub fn population_size_estimate(stats: &CountStatistics, stabilized: bool) -> Result<f64> {
    Ok(stratum_size_estimates(stats, stabilized)?
        .iter()
        .zip(&stats.include_in_total)
        .filter(|(_, &inc)| inc)
        .map(|(v, _)| v)
        .sum())
}

/// Stratum size estimates for the full initial sample and with each
/// deletable initial unit removed in turn.
#[derive(Debug, Clone)]
pub struct DeleteOne {
    pub full: Vec<f64>,
    /// `(member, stratum estimates without it)` for every non-certainty
    /// initial member, in member order.
    pub deleted: Vec<(usize, Vec<f64>)>,
}

impl DeleteOne {
    pub fn compute(data: &SampleData, roles: &Roles, stabilized: bool) -> Result<Self> {
        roles.check_against(data)?;
        let k = data.num_strata();
        let certainty: Vec<bool> = (0..k).map(|s| data.is_certainty(s)).collect();
        let links = InitialLinks::new(data, roles);
        let base = raw_statistics(data, roles, &links);
        let estimate = |stats: &RawStats| -> Result<Vec<f64>> {
            (0..k).map(|s| stratum_size_raw(stats, s, certainty[s], stabilized)).collect()
        };
        let full = estimate(&base)?;
        let mut deleted = Vec::new();
        for i in roles.initial_members() {
            if data.is_certainty_member(i) {
                continue;
            }
            let a = data.stratum(i);
            let mut stats = base.clone();
            stats.n0[a] -= 1.0;
            let out_counts = &data.members()[i].out_counts;
            for m in 0..k {
                let out_in = f64::from(links.out_initial[i][m]);
                let in_from = f64::from(links.in_initial[i][m]);
                // i no longer nominates from the initial sample ...
                stats.r[a][m] -= out_in;
                stats.s[a][m] -= f64::from(out_counts[m]) - out_in;
                // ... and links into i now leave the initial sample.
                stats.r[m][a] -= in_from;
                stats.s[m][a] += in_from;
            }
            deleted.push((i, estimate(&stats)?));
        }
        Ok(Self { full, deleted })
    }
}

fn included_total(estimates: &[f64], data: &SampleData) -> f64 {
    estimates
        .iter()
        .zip(data.strata())
        .filter(|(_, m)| m.include_in_total)
        .map(|(v, _)| v)
        .sum()
}

fn check_jackknife_sizes(data: &SampleData, n0: &[usize], required: usize) -> Result<()> {
    for (k, &size) in n0.iter().enumerate() {
        if !data.is_certainty(k) && size < required {
            return Err(Error::StratumTooSmall {
                stratum: k + 1,
                size,
                required,
            });
        }
    }
    Ok(())
}

/// Delete-one jackknife variance of the population size estimate. With one
/// stratum the squared deviations are centred at the mean of the deleted
/// estimates; with several strata they are centred at the full-sample
/// estimate and weighted per stratum.
pub fn jackknife_variance_size(data: &SampleData, roles: &Roles, stabilized: bool) -> Result<f64> {
    roles.check_against(data)?;
    let n0 = roles.initial_counts(data);
    check_jackknife_sizes(data, &n0, 3)?;
    let jk = DeleteOne::compute(data, roles, stabilized)?;
    Ok(size_variance_from(data, &n0, &jk))
}

fn size_variance_from(data: &SampleData, n0: &[usize], jk: &DeleteOne) -> f64 {
    let totals: Vec<(usize, f64)> = jk
        .deleted
        .iter()
        .map(|(i, est)| (*i, included_total(est, data)))
        .collect();
    if totals.is_empty() {
        return 0.0;
    }
    if data.num_strata() == 1 {
        let n = n0[0] as f64;
        let mean = totals.iter().map(|(_, t)| t).sum::<f64>() / totals.len() as f64;
        let ss: f64 = totals.iter().map(|(_, t)| (t - mean).powi(2)).sum();
        (n - 2.0) / (2.0 * n) * ss
    } else {
        let full = included_total(&jk.full, data);
        let mut ss = vec![0.0; data.num_strata()];
        for (i, t) in &totals {
            ss[data.stratum(*i)] += (t - full).powi(2);
        }
        ss.iter()
            .enumerate()
            .filter(|(k, _)| !data.is_certainty(*k))
            .map(|(k, ss)| {
                let n = n0[k] as f64;
                (n - 2.0) / (2.0 * n) * ss
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    LogTransform,
    Clt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub method: IntervalMethod,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithVariance {
    pub point: f64,
    pub variance: f64,
    /// Set when a negative variance was replaced by a conservative value.
    pub conservative: bool,
    pub interval: Interval,
}

/// Log-transformed interval for an abundance estimate; `n` is the number
/// of distinct units actually observed and bounds the interval from below.
/// A non-positive excess `N - n` collapses to a point interval.
pub fn ci_log_transform(point: f64, variance: f64, n: f64) -> Interval {
    let excess = point - n;
    if excess <= 0.0 || variance <= 0.0 {
        return Interval {
            lo: point,
            hi: point,
            method: IntervalMethod::LogTransform,
        };
    }
    let c = (Z_95 * (1.0 + variance / (excess * excess)).ln().sqrt()).exp();
    Interval {
        lo: n + excess / c,
        hi: n + excess * c,
        method: IntervalMethod::LogTransform,
    }
}

pub fn ci_clt(point: f64, variance: f64) -> Interval {
    let half = Z_95 * variance.max(0.0).sqrt();
    Interval {
        lo: point - half,
        hi: point + half,
        method: IntervalMethod::Clt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    /// Plain initial-sample mean.
    OneStratum,
    /// Stratum means weighted by estimated stratum sizes.
    Stratified,
}

fn sample_mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Mean of a response with a finite-population-corrected variance in which
/// the estimated sizes stand in for the unknown ones.
pub fn mean_estimate(
    data: &SampleData,
    roles: &Roles,
    response: &str,
    mode: MeanMode,
    stabilized: bool,
) -> Result<EstimateWithVariance> {
    roles.check_against(data)?;
    let r = data.response_index(response)?;
    let stats = count_statistics(data, roles)?;
    let sizes = stratum_size_estimates(&stats, stabilized)?;
    let k = data.num_strata();
    let mut by_stratum: Vec<Vec<f64>> = vec![Vec::new(); k];
    for i in roles.initial_members() {
        if data.strata()[data.stratum(i)].include_in_total {
            by_stratum[data.stratum(i)].push(data.members()[i].responses[r]);
        }
    }
    let n_hat = included_total(&sizes, data);
    if n_hat <= 0.0 {
        return Err(Error::Degenerate("estimated population size is not positive".into()));
    }

    let (point, variance) = match mode {
        MeanMode::OneStratum => {
            let all: Vec<f64> = by_stratum.concat();
            if all.len() < 2 {
                return Err(Error::StratumTooSmall {
                    stratum: 1,
                    size: all.len(),
                    required: 2,
                });
            }
            let n0 = all.len() as f64;
            let (mean, s2) = sample_mean_var(&all);
            (mean, ((n_hat - n0) / n_hat) * s2 / n0)
        }
        MeanMode::Stratified => {
            let mut point = 0.0;
            let mut variance = 0.0;
            for s in 0..k {
                if !data.strata()[s].include_in_total {
                    continue;
                }
                let values = &by_stratum[s];
                if data.is_certainty(s) {
                    if !values.is_empty() {
                        point += sizes[s] * sample_mean_var(values).0;
                    }
                    continue;
                }
                if values.len() < 2 {
                    return Err(Error::StratumTooSmall {
                        stratum: s + 1,
                        size: values.len(),
                        required: 2,
                    });
                }
                let (mean, s2) = sample_mean_var(values);
                let nk = sizes[s];
                let n0k = values.len() as f64;
                point += nk * mean;
                variance += (nk * nk) / (n_hat * n_hat) * ((nk - n0k) / nk) * s2 / n0k;
            }
            (point / n_hat, variance)
        }
    };
    Ok(EstimateWithVariance {
        point,
        variance,
        conservative: false,
        interval: ci_clt(point, variance),
    })
}

/// Per-stratum share of the quantity whose proportion is estimated.
enum ShareRule<'a> {
    /// Units of one stratum (0-based).
    Stratum(usize),
    /// Mean of a 0/1 response among the stratum's initial units.
    Indicator { values: &'a [f64] },
}

fn share_ratio(data: &SampleData, roles: &Roles, sizes: &[f64], rule: &ShareRule<'_>, skip: Option<usize>) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (s, &nk) in sizes.iter().enumerate() {
        if !data.strata()[s].include_in_total {
            continue;
        }
        den += nk;
        let share = match rule {
            ShareRule::Stratum(target) => f64::from(u8::from(s == *target)),
            ShareRule::Indicator { values } => {
                let (mut sum, mut count) = (0.0, 0usize);
                for i in roles.initial_members() {
                    if data.stratum(i) == s && Some(i) != skip {
                        sum += values[i];
                        count += 1;
                    }
                }
                if count == 0 {
                    if nk > 0.0 {
                        return Err(Error::StratumTooSmall {
                            stratum: s + 1,
                            size: 0,
                            required: 1,
                        });
                    }
                    0.0
                } else {
                    sum / count as f64
                }
            }
        };
        num += nk * share;
    }
    if den <= 0.0 {
        return Err(Error::Degenerate("estimated population size is not positive; stabilize the estimator".into()));
    }
    Ok(num / den)
}

fn ratio_jackknife(data: &SampleData, roles: &Roles, rule: ShareRule<'_>, stabilized: bool) -> Result<EstimateWithVariance> {
    roles.check_against(data)?;
    let n0 = roles
        .initial_members()
        .filter(|&i| data.strata()[data.stratum(i)].include_in_total)
        .count();
    if n0 < 2 {
        return Err(Error::StratumTooSmall {
            stratum: 1,
            size: n0,
            required: 2,
        });
    }
    let jk = DeleteOne::compute(data, roles, stabilized)?;
    let point = share_ratio(data, roles, &jk.full, &rule, None)?;
    let n_hat = included_total(&jk.full, data);
    let replicates = jk
        .deleted
        .iter()
        .map(|(i, est)| share_ratio(data, roles, est, &rule, Some(*i)))
        .collect::<Result<Vec<_>>>()?;
    let variance = if replicates.is_empty() {
        0.0
    } else {
        let n0 = n0 as f64;
        let mean = replicates.iter().sum::<f64>() / replicates.len() as f64;
        let ss: f64 = replicates.iter().map(|p| (p - mean).powi(2)).sum();
        ((n_hat - n0) / n0) * ((n0 - 1.0) / n0) * ss
    };
    Ok(EstimateWithVariance {
        point,
        variance,
        conservative: false,
        interval: ci_clt(point, variance),
    })
}

/// Estimated share of the population in stratum `k` (0-based), with a
/// delete-one jackknife variance.
pub fn proportion_estimate(data: &SampleData, roles: &Roles, k: usize, stabilized: bool) -> Result<EstimateWithVariance> {
    if k >= data.num_strata() || !data.strata()[k].include_in_total {
        return Err(Error::Config(format!("stratum {} is not part of the population total", k + 1)));
    }
    ratio_jackknife(data, roles, ShareRule::Stratum(k), stabilized)
}

/// Estimated share of units whose 0/1 `response` is one: stratum sizes
/// weighted by the stratum's initial-sample indicator mean, with the same
/// jackknife as [`proportion_estimate`]. When strata coincide with the
/// indicator this equals [`proportion_estimate`].
pub fn indicator_proportion_estimate(
    data: &SampleData,
    roles: &Roles,
    response: &str,
    stabilized: bool,
) -> Result<EstimateWithVariance> {
    let r = data.response_index(response)?;
    let values: Vec<f64> = data.members().iter().map(|m| m.responses[r]).collect();
    ratio_jackknife(data, roles, ShareRule::Indicator { values: &values }, stabilized)
}

/// Population size estimate with its jackknife variance and log-transform
/// interval.
pub fn size_estimate(data: &SampleData, roles: &Roles, stabilized: bool) -> Result<EstimateWithVariance> {
    roles.check_against(data)?;
    let n0 = roles.initial_counts(data);
    check_jackknife_sizes(data, &n0, 3)?;
    let jk = DeleteOne::compute(data, roles, stabilized)?;
    let point = included_total(&jk.full, data);
    let variance = size_variance_from(data, &n0, &jk);
    let observed = observed_in_total(data) as f64;
    Ok(EstimateWithVariance {
        point,
        variance,
        conservative: false,
        interval: ci_log_transform(point, variance, observed),
    })
}

/// Population size point estimate alone, defined for any initial sample
/// size.
pub fn size_point(data: &SampleData, roles: &Roles, stabilized: bool) -> Result<f64> {
    population_size_estimate(&count_statistics(data, roles)?, stabilized)
}

/// Number of sampled units in strata counted toward the total.
pub fn observed_in_total(data: &SampleData) -> usize {
    data.members()
        .iter()
        .filter(|m| data.strata()[m.stratum].include_in_total)
        .count()
}

// ---------------------------------------------------------------------------
// Estimator suites

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Size,
    Proportion,
    Mean,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Size => "size",
            Quantity::Proportion => "proportion",
            Quantity::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProportionSpec {
    /// Share of a (1-based) stratum, jackknife variance.
    Stratum { stratum: usize },
    /// Share of units with a 0/1 response equal to one, jackknife variance.
    Indicator { response: String },
    /// Initial-sample mean of a 0/1 response with the mean-estimator
    /// variance (the natural choice with a single stratum).
    IndicatorMean { response: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeanSpec {
    pub response: String,
    pub mode: MeanMode,
}

/// The set of quantities estimated from one role assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorSuite {
    #[serde(default = "stabilize_default")]
    pub stabilize: bool,
    #[serde(default)]
    pub proportion: Option<ProportionSpec>,
    #[serde(default)]
    pub mean: Option<MeanSpec>,
}

fn stabilize_default() -> bool {
    true
}

impl Default for EstimatorSuite {
    fn default() -> Self {
        Self {
            stabilize: true,
            proportion: None,
            mean: None,
        }
    }
}

impl EstimatorSuite {
    pub fn quantities(&self) -> Vec<Quantity> {
        let mut q = vec![Quantity::Size];
        if self.proportion.is_some() {
            q.push(Quantity::Proportion);
        }
        if self.mean.is_some() {
            q.push(Quantity::Mean);
        }
        q
    }

    /// Evaluates every quantity, in [`Self::quantities`] order.
    pub fn evaluate(&self, data: &SampleData, roles: &Roles) -> Result<Vec<EstimateWithVariance>> {
        self.evaluate_each(data, roles).into_iter().collect()
    }

    /// Like [`Self::evaluate`], with a separate outcome per quantity.
    pub fn evaluate_each(&self, data: &SampleData, roles: &Roles) -> Vec<Result<EstimateWithVariance>> {
        let mut out = vec![size_estimate(data, roles, self.stabilize)];
        if let Some(spec) = &self.proportion {
            out.push(match spec {
                ProportionSpec::Stratum { stratum: 0 } => Err(Error::Config("strata are numbered from 1".into())),
                ProportionSpec::Stratum { stratum } => proportion_estimate(data, roles, stratum - 1, self.stabilize),
                ProportionSpec::Indicator { response } => {
                    indicator_proportion_estimate(data, roles, response, self.stabilize)
                }
                ProportionSpec::IndicatorMean { response } => {
                    mean_estimate(data, roles, response, MeanMode::OneStratum, self.stabilize)
                }
            });
        }
        if let Some(spec) = &self.mean {
            out.push(mean_estimate(data, roles, &spec.response, spec.mode, self.stabilize));
        }
        out
    }
}

/// Flat record for estimate outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub quantity: String,
    pub setup: String,
    pub point: Option<f64>,
    pub variance: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub method: Option<IntervalMethod>,
    pub conservative_flag: bool,
    /// Tag of the error that left fields empty.
    pub error: Option<String>,
}

impl EstimateRecord {
    pub fn new(quantity: Quantity, setup: &str, est: &EstimateWithVariance) -> Self {
        Self {
            quantity: quantity.name().to_string(),
            setup: setup.to_string(),
            point: Some(est.point),
            variance: Some(est.variance),
            ci_lo: Some(est.interval.lo),
            ci_hi: Some(est.interval.hi),
            method: Some(est.interval.method),
            conservative_flag: est.conservative,
            error: None,
        }
    }

    /// Record for a quantity whose estimate failed, keeping the point
    /// estimate when one is available.
    pub fn failed(quantity: Quantity, setup: &str, point: Option<f64>, error: &Error) -> Self {
        Self {
            quantity: quantity.name().to_string(),
            setup: setup.to_string(),
            point,
            variance: None,
            ci_lo: None,
            ci_hi: None,
            method: None,
            conservative_flag: false,
            error: Some(error.tag().to_string()),
        }
    }
}
