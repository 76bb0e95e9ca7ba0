//! Reorderings of a sample: alternative assignments of the sampled units to
//! the initial sample and the first wave that agree with the reduced data.
//!
//! [`ReorderModel`] precomputes everything about the sample that does not
//! depend on the role assignment. [`Chain`] runs the Metropolis-Hastings
//! interchange sampler with incremental bookkeeping, and
//! [`enumerate_reorderings`] lists every consistent reordering of small
//! samples.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{ObservedSample, ReducedData, Roles, SampleData};
use crate::provenance::Provenance;
use crate::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Role-independent quantities of a reduced sample.
#[derive(Debug, Clone)]
pub struct ReorderModel {
    data: SampleData,
    n0: Vec<usize>,
    /// `ln(1 - beta[l][k])`.
    ln_keep: Vec<Vec<f64>>,
    /// Log-probability that an initial unit leaves its links to unsampled
    /// units untraced.
    untraced: Vec<f64>,
    /// Sampled nominators of each unit through links with positive tracing
    /// probability.
    traceable_in: Vec<Vec<usize>>,
    certainty: Vec<bool>,
}

impl ReorderModel {
    pub fn new(reduced: &ReducedData) -> Result<Self> {
        Self::from_parts(reduced.data().clone(), reduced.n0().to_vec())
    }

    pub fn from_parts(data: SampleData, n0: Vec<usize>) -> Result<Self> {
        let k = data.num_strata();
        if n0.len() != k {
            return Err(Error::Data(format!("{} initial counts for {k} strata", n0.len())));
        }
        let beta = &data.design().beta;
        let ln_keep: Vec<Vec<f64>> = beta
            .iter()
            .map(|row| row.iter().map(|b| (-b).ln_1p()).collect())
            .collect();
        let mut untraced = Vec::with_capacity(data.len());
        for (j, member) in data.members().iter().enumerate() {
            let mut inside = vec![0u32; k];
            for &i in data.out_nbrs(j) {
                inside[data.stratum(i)] += 1;
            }
            let mut c = 0.0;
            for l in 0..k {
                let out = member.out_counts[l];
                if out < inside[l] {
                    return Err(Error::Data(format!(
                        "unit {} nominates more sampled units in stratum {} than its reported total",
                        member.unit,
                        l + 1
                    )));
                }
                let u = out - inside[l];
                if u > 0 {
                    c += f64::from(u) * ln_keep[member.stratum][l];
                }
            }
            untraced.push(c);
        }
        let traceable_in = (0..data.len())
            .map(|i| {
                data.in_nbrs(i)
                    .iter()
                    .copied()
                    .filter(|&j| j != i && beta[data.stratum(j)][data.stratum(i)] > 0.0)
                    .collect()
            })
            .collect();
        let certainty = (0..data.len()).map(|i| data.is_certainty_member(i)).collect();
        Ok(Self {
            data,
            n0,
            ln_keep,
            untraced,
            traceable_in,
            certainty,
        })
    }

    pub fn data(&self) -> &SampleData {
        &self.data
    }

    pub fn n0(&self) -> &[usize] {
        &self.n0
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_strata(&self) -> usize {
        self.n0.len()
    }

    pub fn final_size(&self) -> usize {
        self.data.len()
    }

    pub fn initial_size(&self) -> usize {
        self.n0.iter().sum()
    }

    fn initial_term(&self, j: usize) -> f64 {
        self.untraced[j]
    }

    /// Log-probability that a non-initial unit is reached, given its counts
    /// of initial nominators per stratum.
    fn wave1_term(&self, i: usize, b: &[u32]) -> f64 {
        let k = self.data.stratum(i);
        let mut missed = 0.0;
        for (l, &count) in b.iter().enumerate() {
            if count > 0 {
                missed += f64::from(count) * self.ln_keep[l][k];
            }
        }
        if missed == 0.0 {
            f64::NEG_INFINITY
        } else {
            (-missed.exp_m1()).ln()
        }
    }

    fn nominator_counts(&self, roles: &Roles) -> Vec<u32> {
        let k = self.num_strata();
        let mut b = vec![0u32; self.len() * k];
        for j in roles.initial_members() {
            let l = self.data.stratum(j);
            for &i in self.data.out_nbrs(j) {
                b[i * k + l] += 1;
            }
        }
        b
    }

    fn log_p_from_scratch(&self, roles: &Roles) -> f64 {
        let k = self.num_strata();
        let b = self.nominator_counts(roles);
        (0..self.len())
            .map(|i| {
                if roles.is_initial(i) {
                    self.initial_term(i)
                } else {
                    self.wave1_term(i, &b[i * k..(i + 1) * k])
                }
            })
            .sum()
    }

    /// Initial units of `roles` that may be proposed as the nominator of `w`.
    fn eligible_nominators(&self, w: usize, is_initial: impl Fn(usize) -> bool) -> Vec<usize> {
        self.traceable_in[w]
            .iter()
            .copied()
            .filter(|&j| is_initial(j) && !self.certainty[j])
            .collect()
    }
}

/// A role assignment over the sampled units with its cached statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reordering {
    roles: Roles,
    counts: Vec<usize>,
    log_p: f64,
}

impl Reordering {
    pub fn new(model: &ReorderModel, roles: Roles) -> Result<Self> {
        roles.check_against(model.data())?;
        let counts = roles.initial_counts(model.data());
        let log_p = model.log_p_from_scratch(&roles);
        Ok(Self { roles, counts, log_p })
    }

    /// The ordering in which the sample was actually selected.
    pub fn original(model: &ReorderModel, d0: &ObservedSample) -> Result<Self> {
        Self::new(model, d0.roles())
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn initial_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Cached log conditional selection probability; `-inf` when the
    /// assignment could not have produced the sample.
    pub fn log_p(&self) -> f64 {
        self.log_p
    }

    /// The observed sample this reordering would have produced.
    pub fn implied_sample(&self, model: &ReorderModel) -> Result<ObservedSample> {
        ObservedSample::from_roles(model.data().clone(), &self.roles)
    }
}

/// True iff per-stratum initial counts match the reduced data, every
/// certainty unit is initial, and the conditional selection probability is
/// positive.
pub fn is_consistent(model: &ReorderModel, v: &Reordering) -> bool {
    v.roles.len() == model.len()
        && v.counts == model.n0
        && (0..model.len()).all(|i| !model.certainty[i] || v.roles.is_initial(i))
        && v.log_p.is_finite()
}

/// Log of the probability of the first wave given the initial sample.
pub fn log_conditional_prob(model: &ReorderModel, v: &Reordering) -> Result<f64> {
    if is_consistent(model, v) {
        Ok(v.log_p)
    } else {
        Err(Error::Inconsistent("reordering is not consistent with the reduced data".into()))
    }
}

/// Distribution of the number of units interchanged per proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct Gammas {
    probs: Vec<f64>,
    ln: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl Gammas {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Config("gamma entries must be positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("gamma entries sum to {total}, not 1")));
        }
        let dist = WeightedIndex::new(&probs).map_err(|e| Error::Config(format!("gamma: {e}")))?;
        let ln = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { probs, ln, dist })
    }

    /// `(1)` for one stratum; otherwise 0.9 on single swaps with the rest
    /// shared equally.
    pub fn default_for(strata: usize) -> Self {
        let probs = if strata <= 1 {
            vec![1.0]
        } else {
            let rest = 0.1 / (strata - 1) as f64;
            std::iter::once(0.9).chain(std::iter::repeat_n(rest, strata - 1)).collect()
        };
        Self::new(probs).expect("default gammas are valid")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_swaps(&self) -> usize {
        self.probs.len()
    }

    fn check_for(&self, model: &ReorderModel) -> Result<()> {
        if model.num_strata() == 1 && self.probs.len() != 1 {
            return Err(Error::Config("with one stratum gamma must be (1)".into()));
        }
        Ok(())
    }
}

/// Why a proposal produced no candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    /// More units requested than the first wave holds.
    TooManySwaps,
    /// A selected unit has no eligible initial nominator.
    NoNominator,
    /// Two selected units drew the same nominator.
    Collision,
    /// The candidate cannot return to the current state in one move.
    NoReverse,
    /// The candidate is not consistent with the reduced data.
    Inconsistent,
    /// Valid candidate turned down by the acceptance rule.
    Declined,
}

struct Move {
    /// First-wave units that become initial.
    added: Vec<usize>,
    /// Initial units that become first-wave, paired with `added`.
    removed: Vec<usize>,
    log_forward: f64,
    log_reverse: f64,
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Number of perfect matchings of a small bipartite graph.
fn count_matchings(allowed: &[Vec<bool>]) -> u64 {
    fn go(row: usize, used: u64, allowed: &[Vec<bool>]) -> u64 {
        if row == allowed.len() {
            return 1;
        }
        (0..allowed.len())
            .filter(|&c| used & (1 << c) == 0 && allowed[row][c])
            .map(|c| go(row + 1, used | (1 << c), allowed))
            .sum()
    }
    go(0, 0, allowed)
}

/// Density of moving from the current roles to the candidate obtained by
/// promoting `added` and demoting `removed`, summed over every nominator
/// assignment that yields it. `None` when unreachable.
fn move_log_density(
    model: &ReorderModel,
    gammas: &Gammas,
    n1: usize,
    added: &[usize],
    removed: &[usize],
    is_initial: &dyn Fn(usize) -> bool,
) -> Option<f64> {
    let k = added.len();
    if k == 0 || k > gammas.max_swaps() || k > n1 || removed.len() != k {
        return None;
    }
    let mut log_q = gammas.ln[k - 1] - ln_binomial(n1, k);
    let mut allowed = Vec::with_capacity(k);
    for &w in added {
        let noms = model.eligible_nominators(w, is_initial);
        if noms.is_empty() {
            return None;
        }
        log_q -= (noms.len() as f64).ln();
        allowed.push(removed.iter().map(|u| noms.contains(u)).collect::<Vec<_>>());
    }
    let matchings = count_matchings(&allowed);
    if matchings == 0 {
        return None;
    }
    Some(log_q + (matchings as f64).ln())
}

fn draw_move<R: Rng + ?Sized>(
    model: &ReorderModel,
    roles: &Roles,
    wave1: &[usize],
    gammas: &Gammas,
    rng: &mut R,
) -> std::result::Result<Move, Rejection> {
    let k = gammas.dist.sample(rng) + 1;
    let n1 = wave1.len();
    if k > n1 {
        return Err(Rejection::TooManySwaps);
    }
    let added: Vec<usize> = rand::seq::index::sample(rng, n1, k).iter().map(|p| wave1[p]).collect();
    let mut removed = Vec::with_capacity(k);
    for &w in &added {
        let noms = model.eligible_nominators(w, |j| roles.is_initial(j));
        if noms.is_empty() {
            return Err(Rejection::NoNominator);
        }
        removed.push(noms[rng.random_range(0..noms.len())]);
    }
    for (a, u) in removed.iter().enumerate() {
        if removed[..a].contains(u) {
            return Err(Rejection::Collision);
        }
    }
    let current = |j: usize| roles.is_initial(j);
    let log_forward =
        move_log_density(model, gammas, n1, &added, &removed, &current).expect("drawn move has positive density");
    let candidate = |j: usize| (roles.is_initial(j) && !removed.contains(&j)) || added.contains(&j);
    let log_reverse =
        move_log_density(model, gammas, n1, &removed, &added, &candidate).ok_or(Rejection::NoReverse)?;
    Ok(Move {
        added,
        removed,
        log_forward,
        log_reverse,
    })
}

fn preserves_counts(model: &ReorderModel, mv: &Move) -> bool {
    let mut net = vec![0i64; model.num_strata()];
    for (&w, &u) in mv.added.iter().zip(&mv.removed) {
        net[model.data.stratum(w)] += 1;
        net[model.data.stratum(u)] -= 1;
    }
    net.iter().all(|&v| v == 0)
}

#[derive(Debug, Clone)]
pub enum Proposal {
    Candidate {
        candidate: Reordering,
        log_forward: f64,
        log_reverse: f64,
    },
    Rejected(Rejection),
}

/// Draws one interchange proposal from `v`: a number of units `k` from
/// `gammas`, `k` distinct first-wave units, and for each a nominating
/// initial unit to swap roles with.
pub fn propose<R: Rng + ?Sized>(model: &ReorderModel, v: &Reordering, gammas: &Gammas, rng: &mut R) -> Result<Proposal> {
    gammas.check_for(model)?;
    v.roles.check_against(model.data())?;
    let wave1: Vec<usize> = (0..model.len()).filter(|&i| !v.roles.is_initial(i)).collect();
    let mv = match draw_move(model, &v.roles, &wave1, gammas, rng) {
        Ok(mv) => mv,
        Err(r) => return Ok(Proposal::Rejected(r)),
    };
    let mut roles = v.roles.clone();
    for (&w, &u) in mv.added.iter().zip(&mv.removed) {
        roles.set(w, true);
        roles.set(u, false);
    }
    let candidate = Reordering::new(model, roles)?;
    if !is_consistent(model, &candidate) {
        return Ok(Proposal::Rejected(Rejection::Inconsistent));
    }
    Ok(Proposal::Candidate {
        candidate,
        log_forward: mv.log_forward,
        log_reverse: mv.log_reverse,
    })
}

/// Exact log proposal density of moving from `from` to `to`, or `None` if a
/// single proposal cannot make that move.
pub fn transition_log_prob(model: &ReorderModel, from: &Reordering, to: &Reordering, gammas: &Gammas) -> Option<f64> {
    let added: Vec<usize> = (0..model.len())
        .filter(|&i| !from.roles.is_initial(i) && to.roles.is_initial(i))
        .collect();
    let removed: Vec<usize> = (0..model.len())
        .filter(|&i| from.roles.is_initial(i) && !to.roles.is_initial(i))
        .collect();
    let n1 = model.len() - from.roles.initial_count();
    move_log_density(model, gammas, n1, &added, &removed, &|j| from.roles.is_initial(j))
}

/// How a [`Chain`] decides whether to move to a valid candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptRule {
    /// Metropolis-Hastings acceptance targeting the conditional law of the
    /// reorderings given the reduced data.
    Metropolis,
    /// Move only to strictly less probable reorderings.
    Lower,
    /// Move only to strictly more probable reorderings.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub rejection: Option<Rejection>,
}

/// A running interchange chain with incremental bookkeeping.
#[derive(Debug, Clone)]
pub struct Chain<'m> {
    model: &'m ReorderModel,
    current: Reordering,
    /// Initial nominators per member and stratum, row-major.
    b: Vec<u32>,
    terms: Vec<f64>,
    wave1: Vec<usize>,
    wave1_pos: Vec<usize>,
    steps: usize,
    accepted: usize,
    stamp: Vec<u32>,
    epoch: u32,
}

impl<'m> Chain<'m> {
    /// Starts a chain at a consistent reordering.
    pub fn new(model: &'m ReorderModel, start: Reordering) -> Result<Self> {
        if !is_consistent(model, &start) {
            return Err(Error::Inconsistent("chain start is not consistent with the reduced data".into()));
        }
        let k = model.num_strata();
        let b = model.nominator_counts(&start.roles);
        let terms = (0..model.len())
            .map(|i| {
                if start.roles.is_initial(i) {
                    model.initial_term(i)
                } else {
                    model.wave1_term(i, &b[i * k..(i + 1) * k])
                }
            })
            .collect();
        let mut wave1 = Vec::new();
        let mut wave1_pos = vec![usize::MAX; model.len()];
        for i in 0..model.len() {
            if !start.roles.is_initial(i) {
                wave1_pos[i] = wave1.len();
                wave1.push(i);
            }
        }
        Ok(Self {
            model,
            current: start,
            b,
            terms,
            wave1,
            wave1_pos,
            steps: 0,
            accepted: 0,
            stamp: vec![0; model.len()],
            epoch: 0,
        })
    }

    pub fn current(&self) -> &Reordering {
        &self.current
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn acceptances(&self) -> usize {
        self.accepted
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, gammas: &Gammas, rng: &mut R) -> StepOutcome {
        self.step_with(gammas, rng, AcceptRule::Metropolis)
    }

    pub fn step_with<R: Rng + ?Sized>(&mut self, gammas: &Gammas, rng: &mut R, rule: AcceptRule) -> StepOutcome {
        self.steps += 1;
        let rejected = |r| StepOutcome {
            accepted: false,
            rejection: Some(r),
        };
        let mv = match draw_move(self.model, &self.current.roles, &self.wave1, gammas, rng) {
            Ok(mv) => mv,
            Err(r) => return rejected(r),
        };
        if !preserves_counts(self.model, &mv) {
            return rejected(Rejection::Inconsistent);
        }
        let old_log_p = self.current.log_p;
        let saved = self.apply(&mv.added, &mv.removed);
        let new_log_p = old_log_p + saved.iter().map(|&(i, old)| self.terms[i] - old).sum::<f64>();
        if !new_log_p.is_finite() {
            self.revert(&mv.added, &mv.removed, &saved);
            return rejected(Rejection::Inconsistent);
        }
        let accept = match rule {
            AcceptRule::Metropolis => {
                let ln_ratio = new_log_p - old_log_p + mv.log_reverse - mv.log_forward;
                ln_ratio >= 0.0 || rng.random::<f64>().ln() < ln_ratio
            }
            AcceptRule::Lower => new_log_p < old_log_p,
            AcceptRule::Upper => new_log_p > old_log_p,
        };
        if !accept {
            self.revert(&mv.added, &mv.removed, &saved);
            return rejected(Rejection::Declined);
        }
        for (&w, &u) in mv.added.iter().zip(&mv.removed) {
            let p = self.wave1_pos[w];
            self.wave1[p] = u;
            self.wave1_pos[u] = p;
            self.wave1_pos[w] = usize::MAX;
        }
        self.current.log_p = self.terms.iter().sum();
        self.accepted += 1;
        StepOutcome {
            accepted: true,
            rejection: None,
        }
    }

    fn shift_nominations(&mut self, from: usize, delta: i32) {
        let k = self.model.num_strata();
        let l = self.model.data.stratum(from);
        for &i in self.model.data.out_nbrs(from) {
            let cell = &mut self.b[i * k + l];
            *cell = cell.checked_add_signed(delta).expect("nominator count stays non-negative");
        }
    }

    fn set_roles(&mut self, added: &[usize], removed: &[usize]) {
        for &w in added {
            self.current.roles.set(w, true);
            self.shift_nominations(w, 1);
        }
        for &u in removed {
            self.current.roles.set(u, false);
            self.shift_nominations(u, -1);
        }
    }

    /// Swaps roles and refreshes the affected terms, returning their old
    /// values.
    fn apply(&mut self, added: &[usize], removed: &[usize]) -> Vec<(usize, f64)> {
        self.set_roles(added, removed);
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let k = self.model.num_strata();
        let mut saved = Vec::new();
        let data = &self.model.data;
        for &x in added.iter().chain(removed) {
            for &i in std::iter::once(&x).chain(data.out_nbrs(x)) {
                if self.stamp[i] == self.epoch {
                    continue;
                }
                self.stamp[i] = self.epoch;
                saved.push((i, self.terms[i]));
                self.terms[i] = if self.current.roles.is_initial(i) {
                    self.model.initial_term(i)
                } else {
                    self.model.wave1_term(i, &self.b[i * k..(i + 1) * k])
                };
            }
        }
        saved
    }

    fn revert(&mut self, added: &[usize], removed: &[usize], saved: &[(usize, f64)]) {
        self.set_roles(removed, added);
        for &(i, old) in saved {
            self.terms[i] = old;
        }
    }
}

/// States visited by a chain: the start followed by one state per step.
#[derive(Debug, Clone)]
pub struct ChainRun<T> {
    pub values: Vec<T>,
    pub accepted: Vec<bool>,
    pub log_p: Vec<f64>,
    pub acceptances: usize,
}

impl<T> ChainRun<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        let steps = self.values.len().saturating_sub(1);
        if steps == 0 {
            0.0
        } else {
            self.acceptances as f64 / steps as f64
        }
    }

    pub fn trace_rows(&self, value: impl Fn(&T) -> f64) -> Vec<TraceRow> {
        self.values
            .iter()
            .zip(&self.accepted)
            .zip(&self.log_p)
            .enumerate()
            .map(|(step, ((v, &accepted), &log_p))| TraceRow {
                step,
                accepted,
                log_p,
                value: value(v),
            })
            .collect()
    }
}

/// Runs a Metropolis-Hastings chain for `states` states (the start counts
/// as the first). `f` is evaluated at the start and after each accepted
/// move; rejected steps repeat the previous value.
pub fn run_chain<T, R, F>(
    model: &ReorderModel,
    start: Reordering,
    gammas: &Gammas,
    states: usize,
    rng: &mut R,
    mut f: F,
) -> Result<ChainRun<T>>
where
    T: Clone,
    R: Rng + ?Sized,
    F: FnMut(&Roles) -> Result<T>,
{
    if states == 0 {
        return Err(Error::Config("chain length must be positive".into()));
    }
    gammas.check_for(model)?;
    let mut chain = Chain::new(model, start)?;
    let mut value = f(chain.current().roles())?;
    let mut run = ChainRun {
        values: Vec::with_capacity(states),
        accepted: Vec::with_capacity(states),
        log_p: Vec::with_capacity(states),
        acceptances: 0,
    };
    run.values.push(value.clone());
    run.accepted.push(false);
    run.log_p.push(chain.current().log_p());
    for _ in 1..states {
        let outcome = chain.step(gammas, rng);
        if outcome.accepted {
            value = f(chain.current().roles())?;
            run.acceptances += 1;
        }
        run.values.push(value.clone());
        run.accepted.push(outcome.accepted);
        run.log_p.push(chain.current().log_p());
    }
    Ok(run)
}

/// Lists every consistent reordering. Fails when the number of candidate
/// role assignments exceeds `cap`.
pub fn enumerate_reorderings(model: &ReorderModel, cap: u128) -> Result<Vec<Reordering>> {
    let k = model.num_strata();
    let mut free: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut need = model.n0.clone();
    let mut base = vec![false; model.len()];
    for i in 0..model.len() {
        let s = model.data.stratum(i);
        if model.certainty[i] {
            base[i] = true;
            need[s] = need[s].checked_sub(1).ok_or_else(|| {
                Error::Data(format!("stratum {} has more certainty units than initial units", s + 1))
            })?;
        } else {
            free[s].push(i);
        }
    }
    let mut count: u128 = 1;
    for s in 0..k {
        if need[s] > free[s].len() {
            return Ok(Vec::new());
        }
        count = count.saturating_mul(binomial(free[s].len(), need[s]));
    }
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut out = Vec::new();
    let mut mask = base;
    enumerate_stratum(model, &free, &need, 0, 0, 0, &mut mask, &mut out)?;
    Ok(out)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn enumerate_stratum(
    model: &ReorderModel,
    free: &[Vec<usize>],
    need: &[usize],
    stratum: usize,
    start: usize,
    chosen: usize,
    mask: &mut Vec<bool>,
    out: &mut Vec<Reordering>,
) -> Result<()> {
    if stratum == free.len() {
        let v = Reordering::new(model, Roles::from_mask(mask.clone()))?;
        if is_consistent(model, &v) {
            out.push(v);
        }
        return Ok(());
    }
    if chosen == need[stratum] {
        return enumerate_stratum(model, free, need, stratum + 1, 0, 0, mask, out);
    }
    let units = &free[stratum];
    let remaining = need[stratum] - chosen;
    for p in start..=units.len() - remaining {
        mask[units[p]] = true;
        enumerate_stratum(model, free, need, stratum, p + 1, chosen + 1, mask, out)?;
        mask[units[p]] = false;
    }
    Ok(())
}

/// One row of an exported chain or search trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub accepted: bool,
    pub log_p: f64,
    pub value: f64,
}

pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRow], provenance: Option<&Provenance>) -> Result<()> {
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

#[cfg(test)]
pub(crate) mod tests {
    use std::collections::{BTreeMap, HashMap};

    use super::*;
    use crate::design::tests::four_node_sample;
    use crate::design::{observe, DesignParams, Selection};
    use crate::population::{Population, UnitId, UnitRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn four_node_model(beta: f64) -> (ObservedSample, ReorderModel) {
        let d0 = four_node_sample(beta);
        let model = ReorderModel::new(&d0.reduce()).unwrap();
        (d0, model)
    }

    /// The 4-cycle 1-2-4-3-1 with every link reciprocated, observed with
    /// `S0 = {1,2}` and `S1 = {3,4}`. Unlike the directed 4-node example,
    /// every interchange here can be undone.
    pub(crate) fn cycle_model(beta: f64) -> (ObservedSample, ReorderModel) {
        let units = (1..=4)
            .map(|i| UnitRecord {
                id: UnitId(i),
                stratum: 1,
                responses: vec![i as f64],
            })
            .collect();
        let links: Vec<(UnitId, UnitId)> = [(1, 2), (2, 4), (4, 3), (3, 1)]
            .iter()
            .map(|&(a, b)| (UnitId(a), UnitId(b)))
            .collect();
        let pop = Population::new(units, vec!["z".into()], &links, true).unwrap();
        let d0 = observe(
            &pop,
            &Selection {
                initial: vec![0, 1],
                wave1: vec![2, 3],
            },
            &DesignParams::uniform(1, 0.5, beta),
        )
        .unwrap();
        let model = ReorderModel::new(&d0.reduce()).unwrap();
        (d0, model)
    }

    /// True when every consistent state can reach every other through
    /// single proposals.
    pub(crate) fn is_irreducible(model: &ReorderModel, states: &[Reordering], gammas: &Gammas) -> bool {
        let mut seen = vec![false; states.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in 0..states.len() {
                if !seen[b] && transition_log_prob(model, &states[a], &states[b], gammas).is_some() {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    fn roles_of(ids: &[usize]) -> Roles {
        Roles::from_initial(4, &ids.iter().map(|i| i - 1).collect::<Vec<_>>())
    }

    fn key(v: &Reordering) -> Vec<bool> {
        v.roles().mask().to_vec()
    }

    #[test]
    fn four_node_consistency_by_hand() {
        let (_, model) = four_node_model(0.5);
        let v = Reordering::new(&model, roles_of(&[3, 4])).unwrap();
        assert!(!is_consistent(&model, &v));
        assert!(log_conditional_prob(&model, &v).is_err());
        let v = Reordering::new(&model, roles_of(&[1, 3])).unwrap();
        assert!(is_consistent(&model, &v));
        let v = Reordering::new(&model, roles_of(&[1])).unwrap();
        assert!(!is_consistent(&model, &v));
    }

    #[test]
    fn four_node_probabilities_by_hand() {
        let (d0, model) = four_node_model(0.5);
        let v = Reordering::original(&model, &d0).unwrap();
        assert!((log_conditional_prob(&model, &v).unwrap() - 0.25f64.ln()).abs() < 1e-12);
        let expected = [(vec![1, 3], 0.25), (vec![1, 4], 0.375), (vec![2, 3], 0.375), (vec![2, 4], 0.25)];
        for (ids, p) in expected {
            let v = Reordering::new(&model, roles_of(&ids)).unwrap();
            assert!((v.log_p().exp() - p).abs() < 1e-12, "{ids:?}");
        }
    }

    #[test]
    fn four_node_enumeration() {
        let (_, model) = four_node_model(0.5);
        let all = enumerate_reorderings(&model, DEFAULT_ENUMERATION_CAP).unwrap();
        let mut sets: Vec<Vec<bool>> = all.iter().map(key).collect();
        sets.sort();
        let mut expected: Vec<Vec<bool>> = [[1, 2], [1, 3], [1, 4], [2, 3], [2, 4]]
            .iter()
            .map(|ids| roles_of(ids).mask().to_vec())
            .collect();
        expected.sort();
        assert_eq!(sets, expected);
        assert!(matches!(
            enumerate_reorderings(&model, 5),
            Err(Error::EnumerationCap { count: 6, cap: 5 })
        ));
    }

    #[test]
    fn no_wave_one_has_single_reordering() {
        let d0 = four_node_sample(0.5);
        let all = Roles::from_initial(4, &[0, 1, 2, 3]);
        let d0 = ObservedSample::from_roles(d0.data().clone(), &all).unwrap();
        let model = ReorderModel::new(&d0.reduce()).unwrap();
        let list = enumerate_reorderings(&model, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(list.len(), 1);
        assert_eq!(list[0].roles(), &all);
    }

    #[test]
    fn complete_tracing_gives_equal_probabilities() {
        let (_, model) = four_node_model(1.0);
        let all = enumerate_reorderings(&model, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(all.len() > 1);
        for v in &all {
            assert_eq!(v.log_p(), 0.0);
        }
    }

    #[test]
    fn certainty_units_stay_initial() {
        let pop = crate::population::tests::four_node();
        let params = DesignParams {
            alpha: vec![0.5],
            beta: vec![vec![0.5]],
            certainty_units: vec![UnitId(1)],
        };
        let d0 = observe(
            &pop,
            &Selection {
                initial: vec![0, 1],
                wave1: vec![2, 3],
            },
            &params,
        )
        .unwrap();
        let model = ReorderModel::new(&d0.reduce()).unwrap();
        let all = enumerate_reorderings(&model, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(all.iter().all(|v| v.roles().is_initial(0)));
        assert_eq!(all.len(), 3);
        let gammas = Gammas::default_for(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut chain = Chain::new(&model, Reordering::original(&model, &d0).unwrap()).unwrap();
        for _ in 0..500 {
            chain.step(&gammas, &mut rng);
            assert!(chain.current().roles().is_initial(0));
        }
    }

    #[test]
    fn gammas_validation() {
        assert!(Gammas::new(vec![]).is_err());
        assert!(Gammas::new(vec![0.5, 0.4]).is_err());
        assert!(Gammas::new(vec![1.0, 0.0]).is_err());
        assert_eq!(Gammas::default_for(2).probs(), &[0.9, 0.1]);
        let g3 = Gammas::default_for(3);
        assert!((g3.probs()[1] - 0.05).abs() < 1e-15);
        let (d0, model) = four_node_model(0.5);
        let v = Reordering::original(&model, &d0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(propose(&model, &v, &Gammas::default_for(2), &mut rng).is_err());
    }

    #[test]
    fn inconsistent_start_is_rejected() {
        let (_, model) = four_node_model(0.5);
        let v = Reordering::new(&model, roles_of(&[3, 4])).unwrap();
        assert!(matches!(Chain::new(&model, v), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn reordering_implies_same_reduced_data() {
        let (d0, model) = four_node_model(0.5);
        let reduced = d0.reduce();
        for v in enumerate_reorderings(&model, DEFAULT_ENUMERATION_CAP).unwrap() {
            assert_eq!(v.implied_sample(&model).unwrap().reduce(), reduced);
        }
    }

    // ---------------------------------------------------------------------
    // Brute-force oracles on small random instances.

    /// A small random population and a sample drawn from it.
    pub(crate) struct Instance {
        pub pop: Population,
        pub d0: ObservedSample,
        pub model: ReorderModel,
    }

    pub(crate) fn random_instance(seed: u64, max_units: usize, two_strata: bool, reciprocated: bool) -> Option<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(5..=max_units);
        let k = if two_strata { 2 } else { 1 };
        let units: Vec<UnitRecord> = (0..n)
            .map(|i| UnitRecord {
                id: UnitId(i as u64 + 1),
                stratum: if k == 2 { 1 + usize::from(i >= n / 2) } else { 1 },
                responses: vec![rng.random_range(0.0..10.0)],
            })
            .collect();
        let mut links = Vec::new();
        for a in 1..=n as u64 {
            for b in 1..=n as u64 {
                if a != b && rng.random::<f64>() < 0.3 {
                    links.push((UnitId(a), UnitId(b)));
                }
            }
        }
        let pop = Population::new(units, vec!["z".into()], &links, reciprocated).ok()?;
        let beta: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(0.2..0.9)).collect()).collect();
        let params = DesignParams {
            alpha: vec![0.4; k],
            beta,
            certainty_units: vec![],
        };
        for _ in 0..50 {
            let d0 = crate::design::draw_sample(&pop, &params, &mut rng).ok()?;
            if d0.final_size() > d0.initial_size() && d0.final_size() <= 12 && d0.initial_size() <= 6 {
                let model = ReorderModel::new(&d0.reduce()).unwrap();
                return Some(Instance { pop, d0, model });
            }
        }
        None
    }

    /// Exact distribution of the first wave given the initial sample by
    /// enumerating which outgoing links were traced.
    fn tracing_law(pop: &Population, params: &DesignParams, initial: &[usize]) -> HashMap<Vec<usize>, f64> {
        let links: Vec<(usize, usize)> = pop
            .links()
            .filter(|(i, j)| initial.contains(i) && !initial.contains(j))
            .collect();
        let mut law = HashMap::new();
        for outcome in 0u64..(1 << links.len()) {
            let mut p = 1.0;
            let mut reached = std::collections::BTreeSet::new();
            for (b, &(i, j)) in links.iter().enumerate() {
                let beta = params.beta[pop.stratum_of(i)][pop.stratum_of(j)];
                if outcome & (1 << b) != 0 {
                    p *= beta;
                    reached.insert(j);
                } else {
                    p *= 1.0 - beta;
                }
            }
            *law.entry(reached.into_iter().collect()).or_insert(0.0) += p;
        }
        law
    }

    #[test]
    fn conditional_probability_matches_tracing_law() {
        let mut checked = 0;
        for seed in 0..40 {
            let Some(inst) = random_instance(seed, 8, seed % 2 == 0, seed % 3 == 0) else { continue };
            let data = inst.model.data();
            let pop_index = |m: usize| inst.pop.index_of(data.members()[m].unit).unwrap();
            for v in enumerate_reorderings(&inst.model, DEFAULT_ENUMERATION_CAP).unwrap() {
                let initial: Vec<usize> = v.roles().initial_members().map(pop_index).collect();
                let mut wave1: Vec<usize> = (0..data.len()).filter(|&m| !v.roles().is_initial(m)).map(pop_index).collect();
                wave1.sort();
                let law = tracing_law(&inst.pop, data.design(), &initial);
                let exact = law.get(&wave1).copied().unwrap_or(0.0);
                assert!(
                    (v.log_p().exp() - exact).abs() <= 1e-12 * exact.max(1e-300),
                    "seed {seed}: {} vs {exact}",
                    v.log_p().exp()
                );
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    /// Exact proposal law from `v` by walking every draw path.
    fn proposal_law(model: &ReorderModel, v: &Reordering, gammas: &Gammas) -> BTreeMap<Vec<bool>, f64> {
        let wave1: Vec<usize> = (0..model.len()).filter(|&i| !v.roles().is_initial(i)).collect();
        let n1 = wave1.len();
        let mut law = BTreeMap::new();
        for (idx, &g) in gammas.probs().iter().enumerate() {
            let k = idx + 1;
            if k > n1 {
                continue;
            }
            let subsets: Vec<Vec<usize>> = (0u32..(1 << n1))
                .filter(|m| m.count_ones() as usize == k)
                .map(|m| (0..n1).filter(|b| m & (1 << b) != 0).map(|b| wave1[b]).collect())
                .collect();
            let p_subset = g / subsets.len() as f64;
            for w in subsets {
                let noms: Vec<Vec<usize>> = w
                    .iter()
                    .map(|&x| {
                        model.data().in_nbrs(x)
                            .iter()
                            .copied()
                            .filter(|&j| {
                                v.roles().is_initial(j)
                                    && !model.data().is_certainty_member(j)
                                    && model.data().design().beta[model.data().stratum(j)][model.data().stratum(x)] > 0.0
                            })
                            .collect()
                    })
                    .collect();
                if noms.iter().any(|n| n.is_empty()) {
                    continue;
                }
                let mut choice = vec![0usize; k];
                loop {
                    let u: Vec<usize> = (0..k).map(|a| noms[a][choice[a]]).collect();
                    let distinct = (0..k).all(|a| !u[..a].contains(&u[a]));
                    if distinct {
                        let p: f64 = p_subset * noms.iter().map(|n| 1.0 / n.len() as f64).product::<f64>();
                        let mut mask = v.roles().mask().to_vec();
                        for a in 0..k {
                            mask[w[a]] = true;
                            mask[u[a]] = false;
                        }
                        *law.entry(mask).or_insert(0.0) += p;
                    }
                    let mut a = 0;
                    while a < k {
                        choice[a] += 1;
                        if choice[a] < noms[a].len() {
                            break;
                        }
                        choice[a] = 0;
                        a += 1;
                    }
                    if a == k {
                        break;
                    }
                }
            }
        }
        law
    }

    #[test]
    fn proposal_densities_match_draw_paths() {
        let mut checked = 0;
        for seed in 0..30 {
            let Some(inst) = random_instance(100 + seed, 10, true, seed % 2 == 0) else { continue };
            let gammas = Gammas::new(vec![0.6, 0.4]).unwrap();
            let model = &inst.model;
            let states = enumerate_reorderings(model, DEFAULT_ENUMERATION_CAP).unwrap();
            for v in &states {
                let law = proposal_law(model, v, &gammas);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..40 {
                    if let Proposal::Candidate {
                        candidate,
                        log_forward,
                        log_reverse,
                    } = propose(model, v, &gammas, &mut rng).unwrap()
                    {
                        let fwd = law[&key(&candidate)];
                        assert!((log_forward - fwd.ln()).abs() < 1e-10);
                        let back = proposal_law(model, &candidate, &gammas)[&key(v)];
                        assert!((log_reverse - back.ln()).abs() < 1e-10);
                        let exact = transition_log_prob(model, v, &candidate, &gammas).unwrap();
                        assert!((exact - fwd.ln()).abs() < 1e-10);
                        checked += 1;
                    }
                }
                for (mask, p) in &law {
                    let to = Reordering::new(model, Roles::from_mask(mask.clone())).unwrap();
                    let exact = transition_log_prob(model, v, &to, &gammas).unwrap();
                    assert!((exact - p.ln()).abs() < 1e-10);
                }
            }
        }
        assert!(checked > 50, "{checked}");
    }

    /// Exact transition kernel on the consistent states, including the
    /// probability of staying put.
    pub(crate) fn exact_kernel(model: &ReorderModel, states: &[Reordering], gammas: &Gammas) -> Vec<Vec<f64>> {
        let index: HashMap<Vec<bool>, usize> = states.iter().enumerate().map(|(i, v)| (key(v), i)).collect();
        let mut kernel = vec![vec![0.0; states.len()]; states.len()];
        for (a, v) in states.iter().enumerate() {
            let mut moved = 0.0;
            for (mask, q) in proposal_law(model, v, gammas) {
                let Some(&b) = index.get(&mask) else { continue };
                let to = &states[b];
                let Some(back) = transition_log_prob(model, to, v, gammas) else { continue };
                let ratio = (to.log_p() - v.log_p() + back - q.ln()).exp().min(1.0);
                kernel[a][b] += q * ratio;
                moved += q * ratio;
            }
            kernel[a][a] += 1.0 - moved;
        }
        kernel
    }

    #[test]
    fn kernel_satisfies_detailed_balance() {
        let mut checked = 0;
        for seed in 0..30 {
            let Some(inst) = random_instance(300 + seed, 10, seed % 3 != 0, seed % 2 == 0) else { continue };
            let gammas = if inst.model.num_strata() == 1 {
                Gammas::default_for(1)
            } else {
                Gammas::default_for(2)
            };
            let states = enumerate_reorderings(&inst.model, DEFAULT_ENUMERATION_CAP).unwrap();
            let kernel = exact_kernel(&inst.model, &states, &gammas);
            let max = states.iter().map(|v| v.log_p()).fold(f64::NEG_INFINITY, f64::max);
            let pi: Vec<f64> = states.iter().map(|v| (v.log_p() - max).exp()).collect();
            for a in 0..states.len() {
                for b in 0..states.len() {
                    let lhs = pi[a] * kernel[a][b];
                    let rhs = pi[b] * kernel[b][a];
                    assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs).max(1e-300), "seed {seed}");
                }
            }
            checked += 1;
        }
        assert!(checked >= 10);
    }

    #[test]
    fn chain_bookkeeping_matches_recount() {
        for seed in 0..10 {
            let Some(inst) = random_instance(500 + seed, 12, true, true) else { continue };
            let gammas = Gammas::default_for(2);
            let start = Reordering::original(&inst.model, &inst.d0).unwrap();
            let mut chain = Chain::new(&inst.model, start).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..300 {
                chain.step(&gammas, &mut rng);
                let fresh = Reordering::new(&inst.model, chain.current().roles().clone()).unwrap();
                assert!(is_consistent(&inst.model, &fresh));
                assert!((fresh.log_p() - chain.current().log_p()).abs() < 1e-9);
                let mut w: Vec<usize> = chain.wave1.clone();
                w.sort();
                let expect: Vec<usize> = (0..inst.model.len()).filter(|&i| !fresh.roles().is_initial(i)).collect();
                assert_eq!(w, expect);
            }
            assert!(chain.acceptances() <= chain.steps());
        }
    }

    /// Chains restarted from exact draws of the conditional law must still
    /// follow it after any number of steps.
    #[test]
    fn cycle_chain_preserves_conditional_law() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let (_, model) = cycle_model(0.5);
        let states = enumerate_reorderings(&model, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(states.len(), 6);
        assert!(is_irreducible(&model, &states, &Gammas::default_for(1)));
        let probs: Vec<f64> = {
            let w: Vec<f64> = states.iter().map(|v| v.log_p().exp()).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        };
        let start_law = WeightedIndex::new(&probs).unwrap();
        let index: HashMap<Vec<bool>, usize> = states.iter().enumerate().map(|(i, v)| (key(v), i)).collect();
        let gammas = Gammas::default_for(1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let restarts = 5000;
        let steps = 20;
        let mut counts = vec![0u64; states.len()];
        let mut moves = 0;
        for _ in 0..restarts {
            let start = states[start_law.sample(&mut rng)].clone();
            let mut chain = Chain::new(&model, start).unwrap();
            for _ in 0..steps {
                chain.step(&gammas, &mut rng);
            }
            moves += chain.acceptances();
            counts[index[&key(chain.current())]] += 1;
        }
        assert!(moves > restarts * steps / 10, "{moves}");
        let stat: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&o, &p)| {
                let e = p * restarts as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        let critical = ChiSquared::new((states.len() - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(stat < critical, "chi-square {stat} >= {critical}");
    }

    #[test]
    fn double_swap_across_strata() {
        // Units 1, 3 in stratum 1 and 2, 4 in stratum 2, with 1 -> 4 and
        // 2 -> 3. Either single swap breaks the stratum counts, so {3, 4}
        // is reached only by swapping 1 with 4 and 2 with 3 together.
        let units = vec![
            UnitRecord { id: UnitId(1), stratum: 1, responses: vec![] },
            UnitRecord { id: UnitId(2), stratum: 2, responses: vec![] },
            UnitRecord { id: UnitId(3), stratum: 1, responses: vec![] },
            UnitRecord { id: UnitId(4), stratum: 2, responses: vec![] },
        ];
        let links = vec![(UnitId(1), UnitId(4)), (UnitId(2), UnitId(3)), (UnitId(4), UnitId(2)), (UnitId(3), UnitId(1))];
        let pop = Population::new(units, vec![], &links, false).unwrap();
        let params = DesignParams::uniform(2, 0.5, 0.5);
        let d0 = observe(
            &pop,
            &Selection {
                initial: vec![0, 1],
                wave1: vec![2, 3],
            },
            &params,
        )
        .unwrap();
        let model = ReorderModel::new(&d0.reduce()).unwrap();
        let states = enumerate_reorderings(&model, DEFAULT_ENUMERATION_CAP).unwrap();
        let target = vec![false, false, true, true];
        assert!(states.iter().any(|v| key(v) == target));
        let gammas = Gammas::default_for(2);
        let v = Reordering::original(&model, &d0).unwrap();
        let q = transition_log_prob(&model, &v, &states.iter().find(|v| key(v) == target).unwrap().clone(), &gammas);
        assert!((q.unwrap() - 0.1f64.ln()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut seen = false;
        for _ in 0..200 {
            if let Proposal::Candidate { candidate, .. } = propose(&model, &v, &gammas, &mut rng).unwrap() {
                seen |= key(&candidate) == target;
            }
        }
        assert!(seen);
    }

    #[test]
    fn run_chain_records_every_state() {
        let (d0, model) = cycle_model(0.5);
        let start = Reordering::original(&model, &d0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut evals = 0;
        let run = run_chain(&model, start.clone(), &Gammas::default_for(1), 200, &mut rng, |r| {
            evals += 1;
            Ok(r.initial_members().collect::<Vec<_>>())
        })
        .unwrap();
        assert_eq!(run.len(), 200);
        assert_eq!(evals, run.acceptances + 1);
        assert!(run.acceptance_rate() > 0.0 && run.acceptance_rate() <= 1.0);

        let (d0, model) = four_node_model(0.5);
        let frozen = run_chain(&model, Reordering::original(&model, &d0).unwrap(), &Gammas::default_for(1), 50, &mut rng, |_| Ok(())).unwrap();
        assert_eq!(frozen.acceptances, 0, "no move of the directed example can be reversed");
        for t in 1..run.len() {
            if !run.accepted[t] {
                assert_eq!(run.values[t], run.values[t - 1]);
            }
        }
        assert!(run_chain(&model, start, &Gammas::default_for(1), 0, &mut rng, |_| Ok(())).is_err());

        let rows = run.trace_rows(|v| v.len() as f64);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,accepted,log_p,value\n0,false,"));
    }
}

