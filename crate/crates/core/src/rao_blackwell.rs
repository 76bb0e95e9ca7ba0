//! Rao-Blackwellized estimators: the conditional expectation of an
//! estimator over the reorderings of the sample given the reduced data,
//! computed exactly by enumeration or approximately from Markov chains.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{Roles, SampleData};
use crate::diagnostics::gelman_rubin;
use crate::estimators::{ci_clt, ci_log_transform, EstimateWithVariance, EstimatorSuite, Quantity};
use crate::reorder::{enumerate_reorderings, run_chain, ChainRun, Gammas, ReorderModel, Reordering};
use crate::{Error, Result};

/// A point estimate with its variance estimate.
pub type PointVariance = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbResult {
    pub preliminary: f64,
    pub preliminary_variance: f64,
    pub rb_point: f64,
    pub rb_variance: f64,
    /// The variance decomposition went negative and the mean per-reordering
    /// variance was used instead.
    pub conservative: bool,
    /// States per chain; zero for exact enumeration.
    pub chain_length: usize,
    pub acceptance_rate: f64,
    pub gelman_rubin: Option<f64>,
    /// Number of consistent reorderings, for exact enumeration.
    pub reorderings: Option<usize>,
}

impl RbResult {
    /// The RB estimate with its interval: log-transformed for the size
    /// (`observed` units counted toward the total), normal otherwise.
    pub fn estimate(&self, quantity: Quantity, observed: f64) -> EstimateWithVariance {
        let interval = match quantity {
            Quantity::Size => ci_log_transform(self.rb_point, self.rb_variance, observed),
            _ => ci_clt(self.rb_point, self.rb_variance),
        };
        EstimateWithVariance {
            point: self.rb_point,
            variance: self.rb_variance,
            conservative: self.conservative,
            interval,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbCombination {
    pub point: f64,
    pub variance: f64,
    pub conservative: bool,
}

/// Weighted conditional mean of the estimates and the variance
/// `E[var | d_R] - var(estimate | d_R)`, falling back to the first term when
/// the difference is negative.
pub fn rb_from_weights(values: &[PointVariance], weights: &[f64]) -> Result<RbCombination> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::Degenerate("need one positive weight per estimate".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Degenerate("weights must be non-negative with a positive sum".into()));
    }
    let (p0, v0) = values[0];
    let point = p0 + values.iter().zip(weights).map(|((p, _), w)| w * (p - p0)).sum::<f64>() / total;
    let mean_var = v0 + values.iter().zip(weights).map(|((_, v), w)| w * (v - v0)).sum::<f64>() / total;
    let between = values.iter().zip(weights).map(|((p, _), w)| w * (p - point).powi(2)).sum::<f64>() / total;
    let variance = mean_var - between;
    Ok(if variance < 0.0 {
        RbCombination {
            point,
            variance: mean_var,
            conservative: true,
        }
    } else {
        RbCombination {
            point,
            variance,
            conservative: false,
        }
    })
}

/// Wraps an estimator suite as a per-reordering estimator.
pub fn suite_estimator<'a>(suite: &'a EstimatorSuite, data: &'a SampleData) -> impl Fn(&Roles) -> Result<Vec<PointVariance>> + 'a {
    move |roles| {
        Ok(suite
            .evaluate(data, roles)?
            .into_iter()
            .map(|e| (e.point, e.variance))
            .collect())
    }
}

fn check_widths(values: &[Vec<PointVariance>], width: usize) -> Result<()> {
    if values.iter().any(|v| v.len() != width) {
        return Err(Error::Degenerate("estimator returned a varying number of quantities".into()));
    }
    Ok(())
}

/// Exact Rao-Blackwellization over all consistent reorderings, weighted by
/// their conditional selection probabilities.
pub fn rb_exact<F>(model: &ReorderModel, original: &Roles, estimator: F, cap: u128) -> Result<Vec<RbResult>>
where
    F: Fn(&Roles) -> Result<Vec<PointVariance>>,
{
    let preliminary = estimator(original)?;
    let states = enumerate_reorderings(model, cap)?;
    if states.is_empty() {
        return Err(Error::Inconsistent("no reordering is consistent with the reduced data".into()));
    }
    let max = states.iter().map(Reordering::log_p).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = states.iter().map(|v| (v.log_p() - max).exp()).collect();
    let values = states
        .iter()
        .map(|v| estimator(v.roles()))
        .collect::<Result<Vec<_>>>()?;
    check_widths(&values, preliminary.len())?;
    (0..preliminary.len())
        .map(|q| {
            let column: Vec<PointVariance> = values.iter().map(|v| v[q]).collect();
            let c = rb_from_weights(&column, &weights)?;
            Ok(RbResult {
                preliminary: preliminary[q].0,
                preliminary_variance: preliminary[q].1,
                rb_point: c.point,
                rb_variance: c.variance,
                conservative: c.conservative,
                chain_length: 0,
                acceptance_rate: 0.0,
                gelman_rubin: None,
                reorderings: Some(states.len()),
            })
        })
        .collect()
}

/// Chain-based Rao-Blackwellization and the runs behind it.
#[derive(Debug, Clone)]
pub struct RbMcmc {
    pub results: Vec<RbResult>,
    pub runs: Vec<ChainRun<Vec<PointVariance>>>,
}

/// Approximate Rao-Blackwellization: one chain of `states` states per seed,
/// all states pooled with equal weight. With two or more chains the
/// Gelman-Rubin statistic of each quantity's point-estimate trace is
/// reported.
pub fn rb_mcmc<F, R>(
    model: &ReorderModel,
    original: &Roles,
    estimator: F,
    seeds: Vec<Reordering>,
    states: usize,
    gammas: &Gammas,
    rngs: &mut [R],
) -> Result<RbMcmc>
where
    F: Fn(&Roles) -> Result<Vec<PointVariance>>,
    R: Rng,
{
    if seeds.is_empty() || seeds.len() != rngs.len() {
        return Err(Error::Config("need at least one chain and one generator per chain".into()));
    }
    let preliminary = estimator(original)?;
    let runs = seeds
        .into_iter()
        .zip(rngs.iter_mut())
        .map(|(seed, rng)| run_chain(model, seed, gammas, states, rng, &estimator))
        .collect::<Result<Vec<_>>>()?;
    for run in &runs {
        check_widths(&run.values, preliminary.len())?;
    }
    let steps: usize = runs.iter().map(|r| r.len() - 1).sum();
    let acceptances: usize = runs.iter().map(|r| r.acceptances).sum();
    let acceptance_rate = if steps == 0 { 0.0 } else { acceptances as f64 / steps as f64 };
    let results = (0..preliminary.len())
        .map(|q| {
            let pooled: Vec<PointVariance> = runs.iter().flat_map(|r| r.values.iter().map(|v| v[q])).collect();
            let c = rb_from_weights(&pooled, &vec![1.0; pooled.len()])?;
            let gelman_rubin = if runs.len() >= 2 {
                let traces: Vec<Vec<f64>> = runs.iter().map(|r| r.values.iter().map(|v| v[q].0).collect()).collect();
                gelman_rubin(&traces).ok()
            } else {
                None
            };
            Ok(RbResult {
                preliminary: preliminary[q].0,
                preliminary_variance: preliminary[q].1,
                rb_point: c.point,
                rb_variance: c.variance,
                conservative: c.conservative,
                chain_length: states,
                acceptance_rate,
                gelman_rubin,
                reorderings: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RbMcmc { results, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ObservedSample;
    use crate::reorder::tests::{four_node_model, is_irreducible, random_instance};
    use crate::reorder::DEFAULT_ENUMERATION_CAP;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn size_only(stabilized: bool) -> EstimatorSuite {
        EstimatorSuite {
            stabilize: stabilized,
            proportion: None,
            mean: None,
        }
    }

    /// Stabilized size estimate without a variance, for samples too small
    /// for the jackknife.
    fn four_node_size(model: &ReorderModel) -> impl Fn(&Roles) -> Result<Vec<PointVariance>> + '_ {
        move |roles| {
            let stats = crate::estimators::count_statistics(model.data(), roles)?;
            Ok(vec![(crate::estimators::population_size_estimate(&stats, true)?, 0.0)])
        }
    }

    #[test]
    fn four_node_by_hand() {
        // Reorderings {1,2}, {1,3}, {1,4}, {2,3}, {2,4} with probabilities
        // 1/4, 1/4, 3/8, 3/8, 1/4 and estimates 5, 6.5, 14, 14, 6.5.
        let (d0, model) = four_node_model(0.5);
        let out = rb_exact(&model, &d0.roles(), four_node_size(&model), DEFAULT_ENUMERATION_CAP).unwrap();
        let expected = (0.25 * 5.0 + 0.25 * 6.5 + 0.375 * 14.0 + 0.375 * 14.0 + 0.25 * 6.5) / 1.5;
        assert!((out[0].rb_point - expected).abs() < 1e-12);
        assert!((out[0].rb_point - 10.0).abs() < 1e-12);
        assert_eq!(out[0].preliminary, 5.0);
        assert_eq!(out[0].reorderings, Some(5));
    }

    #[test]
    fn complete_tracing_gives_plain_mean() {
        let (d0, model) = four_node_model(1.0);
        let states = enumerate_reorderings(&model, DEFAULT_ENUMERATION_CAP).unwrap();
        let f = four_node_size(&model);
        let plain = states.iter().map(|v| f(v.roles()).unwrap()[0].0).sum::<f64>() / states.len() as f64;
        let out = rb_exact(&model, &d0.roles(), four_node_size(&model), DEFAULT_ENUMERATION_CAP).unwrap();
        assert!((out[0].rb_point - plain).abs() < 1e-12);
    }

    #[test]
    fn single_reordering_returns_preliminary() {
        let (d0, model) = four_node_model(0.5);
        let all = Roles::from_initial(4, &[0, 1, 2, 3]);
        let d0 = ObservedSample::from_roles(d0.data().clone(), &all).unwrap();
        let model2 = ReorderModel::new(&d0.reduce()).unwrap();
        let est = |roles: &Roles| -> Result<Vec<PointVariance>> {
            let e = crate::estimators::size_estimate(model2.data(), roles, true)?;
            Ok(vec![(e.point, e.variance)])
        };
        let exact = rb_exact(&model2, &d0.roles(), est, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(exact[0].rb_point, exact[0].preliminary);
        assert_eq!(exact[0].rb_variance, exact[0].preliminary_variance);

        let start = Reordering::original(&model2, &d0).unwrap();
        let mut rngs = [ChaCha8Rng::seed_from_u64(1)];
        let mc = rb_mcmc(&model2, &d0.roles(), est, vec![start], 100, &Gammas::default_for(1), &mut rngs).unwrap();
        let r = &mc.results[0];
        assert_eq!((r.rb_point, r.rb_variance, r.acceptance_rate), (r.preliminary, r.preliminary_variance, 0.0));
        let _ = model;
    }

    #[test]
    fn weights_are_scale_free() {
        let values = [(3.0, 1.0), (5.0, 2.0), (11.0, 0.5)];
        let w = [0.2, 0.5, 0.3];
        let a = rb_from_weights(&values, &w).unwrap();
        for c in [1e-200, 1e-7, 3.7, 1e150] {
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let b = rb_from_weights(&values, &scaled).unwrap();
            assert!((a.point - b.point).abs() <= 1e-12 * a.point.abs());
            assert!((a.variance - b.variance).abs() <= 1e-12 * a.variance.abs());
        }
        assert!(a.conservative);
        assert!((a.variance - (0.2 + 1.0 + 0.15)).abs() < 1e-12);
    }

    #[test]
    fn variance_decomposition_by_hand() {
        // Estimates 1 and 3 with variances 4 and 6, equal weights: mean
        // variance 5, spread 1.
        let c = rb_from_weights(&[(1.0, 4.0), (3.0, 6.0)], &[1.0, 1.0]).unwrap();
        assert_eq!((c.point, c.variance, c.conservative), (2.0, 4.0, false));
        assert!(rb_from_weights(&[], &[]).is_err());
        assert!(rb_from_weights(&[(1.0, 1.0)], &[0.0]).is_err());
    }

    #[test]
    fn chains_approach_exact_values() {
        let mut checked = 0;
        for seed in 0..20 {
            let Some(inst) = random_instance(900 + seed, 12, false, true) else { continue };
            let suite = size_only(true);
            let est = suite_estimator(&suite, inst.model.data());
            let Ok(exact) = rb_exact(&inst.model, &inst.d0.roles(), &est, DEFAULT_ENUMERATION_CAP) else { continue };
            let states = enumerate_reorderings(&inst.model, DEFAULT_ENUMERATION_CAP).unwrap();
            if !is_irreducible(&inst.model, &states, &Gammas::default_for(1)) {
                continue;
            }
            let start = Reordering::original(&inst.model, &inst.d0).unwrap();
            let mut rngs = [ChaCha8Rng::seed_from_u64(seed), ChaCha8Rng::seed_from_u64(seed + 1000)];
            let mc = rb_mcmc(
                &inst.model,
                &inst.d0.roles(),
                &est,
                vec![start.clone(), start],
                20_000,
                &Gammas::default_for(1),
                &mut rngs,
            )
            .unwrap();
            let rel = (mc.results[0].rb_point - exact[0].rb_point).abs() / exact[0].rb_point;
            assert!(rel < 0.02, "seed {seed}: {rel}");
            assert!(mc.results[0].acceptance_rate <= 1.0);
            checked += 1;
        }
        assert!(checked >= 3, "{checked}");
    }
}
