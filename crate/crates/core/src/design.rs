//! The two-phase design: a stratified Bernoulli initial sample `S0`
//! followed by one wave `S1` of independently traced links.
//!
//! [`ObservedSample`] is the full observation `d0` (with wave labels);
//! [`ReducedData`] drops the labels and keeps only per-stratum initial
//! counts. Both wrap a [`SampleData`], which indexes sampled units densely
//! (member `0..n`) and stores within-sample links as adjacency lists.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::population::{Population, StratumMeta, UnitId};
use crate::provenance::Provenance;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    /// Initial selection probability per stratum.
    pub alpha: Vec<f64>,
    /// `beta[l][k]`: probability that a link from an initial unit in stratum
    /// `l` to an unsampled unit in stratum `k` is traced.
    pub beta: Vec<Vec<f64>>,
    /// Units forced into every initial sample.
    #[serde(default)]
    pub certainty_units: Vec<UnitId>,
}

impl DesignParams {
    /// Constant selection and tracing probabilities over `k` strata.
    pub fn uniform(k: usize, alpha: f64, beta: f64) -> Self {
        Self {
            alpha: vec![alpha; k],
            beta: vec![vec![beta; k]; k],
            certainty_units: Vec::new(),
        }
    }

    pub fn num_strata(&self) -> usize {
        self.alpha.len()
    }

    /// A stratum sampled with probability one.
    pub fn is_certainty(&self, stratum: usize) -> bool {
        self.alpha[stratum] >= 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alpha.len();
        if k == 0 {
            return Err(Error::Config("design needs at least one stratum".into()));
        }
        if self.beta.len() != k || self.beta.iter().any(|row| row.len() != k) {
            return Err(Error::Config(format!("beta must be a {k}x{k} matrix")));
        }
        let in_unit = |p: &f64| (0.0..=1.0).contains(p);
        if !self.alpha.iter().all(in_unit) || !self.beta.iter().flatten().all(in_unit) {
            return Err(Error::Config("selection and tracing probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Checks dimensions against a population; strata flagged as certainty
    /// there must have `alpha == 1`.
    pub fn validate_for(&self, pop: &Population) -> Result<()> {
        self.validate()?;
        if self.num_strata() != pop.num_strata() {
            return Err(Error::Config(format!(
                "design has {} strata, population has {}",
                self.num_strata(),
                pop.num_strata()
            )));
        }
        for (k, meta) in pop.stratum_meta().iter().enumerate() {
            if meta.certainty && !self.is_certainty(k) {
                return Err(Error::Config(format!("certainty stratum {} needs alpha = 1", k + 1)));
            }
        }
        for id in &self.certainty_units {
            if pop.index_of(*id).is_none() {
                return Err(Error::UnknownUnit(id.0));
            }
        }
        Ok(())
    }
}

/// Which population units were selected, as dense population indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub initial: Vec<usize>,
    pub wave1: Vec<usize>,
}

/// Draws `S0` and `S1`. One uniform is consumed per unit and one per stored
/// link regardless of the outcome, so two designs that differ only in their
/// probabilities or certainty units are driven by common random numbers.
pub fn select<R: Rng + ?Sized>(pop: &Population, params: &DesignParams, rng: &mut R) -> Result<Selection> {
    params.validate_for(pop)?;
    let n = pop.len();
    let mut initial = vec![false; n];
    for id in &params.certainty_units {
        initial[pop.index_of(*id).expect("validated")] = true;
    }
    for (i, slot) in initial.iter_mut().enumerate() {
        let u: f64 = rng.random();
        if u < params.alpha[pop.stratum_of(i)] {
            *slot = true;
        }
    }
    let mut wave1 = vec![false; n];
    for (i, j) in pop.links() {
        let v: f64 = rng.random();
        if initial[i] && !initial[j] && v < params.beta[pop.stratum_of(i)][pop.stratum_of(j)] {
            wave1[j] = true;
        }
    }
    Ok(Selection {
        initial: (0..n).filter(|&i| initial[i]).collect(),
        wave1: (0..n).filter(|&i| wave1[i]).collect(),
    })
}

/// Records what the design observes about a selection: for every sampled
/// unit its full out-nomination counts per stratum, its responses, and all
/// links among sampled units.
pub fn observe(pop: &Population, selection: &Selection, params: &DesignParams) -> Result<ObservedSample> {
    params.validate_for(pop)?;
    let mut sampled: Vec<(usize, Wave)> = selection
        .initial
        .iter()
        .map(|&i| (i, Wave::Initial))
        .chain(selection.wave1.iter().map(|&i| (i, Wave::First)))
        .collect();
    sampled.sort_unstable_by_key(|&(i, _)| i);
    let position: HashMap<usize, usize> = sampled.iter().enumerate().map(|(m, &(i, _))| (i, m)).collect();
    if position.len() != sampled.len() {
        return Err(Error::Data("a unit appears in both the initial sample and wave 1".into()));
    }

    let members = sampled
        .iter()
        .map(|&(i, _)| Member {
            unit: pop.id(i),
            stratum: pop.stratum_of(i),
            out_counts: pop.out_counts_by_stratum(i),
            responses: pop.responses(i).to_vec(),
        })
        .collect();
    let mut links = Vec::new();
    for &(i, _) in &sampled {
        for &j in pop.out_neighbors(i) {
            if position.contains_key(&j) {
                links.push((pop.id(i), pop.id(j)));
            }
        }
    }
    let data = SampleData::new(
        members,
        &links,
        params.clone(),
        pop.stratum_meta().to_vec(),
        pop.response_names().to_vec(),
    )?;
    ObservedSample::new(data, sampled.into_iter().map(|(_, w)| w).collect())
}

/// `select` followed by `observe`.
pub fn draw_sample<R: Rng + ?Sized>(pop: &Population, params: &DesignParams, rng: &mut R) -> Result<ObservedSample> {
    let selection = select(pop, params, rng)?;
    observe(pop, &selection, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wave {
    Initial,
    First,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub unit: UnitId,
    /// 0-based stratum.
    pub stratum: usize,
    /// `y_i^{k+}`: out-nominations to each stratum over the whole
    /// population, self excluded.
    pub out_counts: Vec<u32>,
    pub responses: Vec<f64>,
}

/// Everything observed about the sampled units except their wave labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleData {
    members: Vec<Member>,
    out_nbrs: Vec<Vec<usize>>,
    in_nbrs: Vec<Vec<usize>>,
    design: DesignParams,
    strata: Vec<StratumMeta>,
    response_names: Vec<String>,
}

impl SampleData {
    pub fn new(
        members: Vec<Member>,
        within_links: &[(UnitId, UnitId)],
        design: DesignParams,
        strata: Vec<StratumMeta>,
        response_names: Vec<String>,
    ) -> Result<Self> {
        design.validate()?;
        let k = design.num_strata();
        if strata.len() != k {
            return Err(Error::Data(format!("{} stratum descriptors for {k} strata", strata.len())));
        }
        let mut position = HashMap::with_capacity(members.len());
        for (m, member) in members.iter().enumerate() {
            if position.insert(member.unit, m).is_some() {
                return Err(Error::DuplicateUnit(member.unit.0));
            }
            if member.stratum >= k {
                return Err(Error::Data(format!("unit {} lies in unknown stratum {}", member.unit, member.stratum + 1)));
            }
            if member.out_counts.len() != k {
                return Err(Error::Data(format!("unit {} needs {k} out-nomination counts", member.unit)));
            }
            if member.responses.len() != response_names.len() {
                return Err(Error::Data(format!(
                    "unit {} has {} responses, expected {}",
                    member.unit,
                    member.responses.len(),
                    response_names.len()
                )));
            }
        }
        let n = members.len();
        let mut out_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(src, dst) in within_links {
            let i = *position.get(&src).ok_or(Error::UnknownUnit(src.0))?;
            let j = *position.get(&dst).ok_or(Error::UnknownUnit(dst.0))?;
            if i == j {
                return Err(Error::SelfLoop(src.0));
            }
            out_sets[i].insert(j);
        }
        let out_nbrs: Vec<Vec<usize>> = out_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let mut in_nbrs = vec![Vec::new(); n];
        for (i, outs) in out_nbrs.iter().enumerate() {
            let mut within = vec![0u32; k];
            for &j in outs {
                in_nbrs[j].push(i);
                within[members[j].stratum] += 1;
            }
            if within.iter().zip(&members[i].out_counts).any(|(w, y)| w > y) {
                return Err(Error::Data(format!(
                    "unit {} nominates more sampled units than its out-nomination counts allow",
                    members[i].unit
                )));
            }
        }
        Ok(Self {
            members,
            out_nbrs,
            in_nbrs,
            design,
            strata,
            response_names,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_strata(&self) -> usize {
        self.design.num_strata()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn stratum(&self, member: usize) -> usize {
        self.members[member].stratum
    }

    /// Sampled units that `member` nominates.
    pub fn out_nbrs(&self, member: usize) -> &[usize] {
        &self.out_nbrs[member]
    }

    /// Sampled units that nominate `member`.
    pub fn in_nbrs(&self, member: usize) -> &[usize] {
        &self.in_nbrs[member]
    }

    pub fn has_link(&self, from: usize, to: usize) -> bool {
        self.out_nbrs[from].binary_search(&to).is_ok()
    }

    pub fn design(&self) -> &DesignParams {
        &self.design
    }

    pub fn strata(&self) -> &[StratumMeta] {
        &self.strata
    }

    /// Certainty strata: sampled with probability one either by design or
    /// by declaration.
    pub fn is_certainty(&self, stratum: usize) -> bool {
        self.design.is_certainty(stratum) || self.strata[stratum].certainty
    }

    pub fn is_certainty_member(&self, member: usize) -> bool {
        self.is_certainty(self.stratum(member))
            || self.design.certainty_units.contains(&self.members[member].unit)
    }

    pub fn response_names(&self) -> &[String] {
        &self.response_names
    }

    pub fn response_index(&self, name: &str) -> Result<usize> {
        self.response_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Data(format!("no response named `{name}`")))
    }

    pub fn position_of(&self, unit: UnitId) -> Option<usize> {
        self.members.iter().position(|m| m.unit == unit)
    }

    pub fn within_links(&self) -> Vec<(UnitId, UnitId)> {
        self.out_nbrs
            .iter()
            .enumerate()
            .flat_map(|(i, outs)| outs.iter().map(move |&j| (i, j)))
            .map(|(i, j)| (self.members[i].unit, self.members[j].unit))
            .collect()
    }

    /// Number of sampled units in each stratum.
    pub fn stratum_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_strata()];
        for m in &self.members {
            counts[m.stratum] += 1;
        }
        counts
    }
}

/// Initial/wave-1 role of every member of a sample, by member index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Roles {
    initial: Vec<bool>,
}

impl Roles {
    pub fn from_mask(initial: Vec<bool>) -> Self {
        Self { initial }
    }

    /// Roles for the given initial members of a sample of size `n`.
    pub fn from_initial(n: usize, initial: &[usize]) -> Self {
        let mut mask = vec![false; n];
        for &i in initial {
            mask[i] = true;
        }
        Self { initial: mask }
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    pub fn is_initial(&self, member: usize) -> bool {
        self.initial[member]
    }

    pub fn mask(&self) -> &[bool] {
        &self.initial
    }

    pub fn initial_members(&self) -> impl Iterator<Item = usize> + '_ {
        self.initial.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn initial_count(&self) -> usize {
        self.initial.iter().filter(|&&b| b).count()
    }

    pub(crate) fn set(&mut self, member: usize, initial: bool) {
        self.initial[member] = initial;
    }

    pub fn check_against(&self, data: &SampleData) -> Result<()> {
        if self.len() != data.len() {
            return Err(Error::RoleMismatch(format!(
                "{} roles for {} sampled units",
                self.len(),
                data.len()
            )));
        }
        Ok(())
    }

    /// Initial-sample size per stratum.
    pub fn initial_counts(&self, data: &SampleData) -> Vec<usize> {
        let mut counts = vec![0; data.num_strata()];
        for i in self.initial_members() {
            counts[data.stratum(i)] += 1;
        }
        counts
    }
}

/// Observed data `d0`: the sample with wave labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSample {
    data: SampleData,
    waves: Vec<Wave>,
}

impl ObservedSample {
    pub fn new(data: SampleData, waves: Vec<Wave>) -> Result<Self> {
        if waves.len() != data.len() {
            return Err(Error::Data(format!("{} wave labels for {} units", waves.len(), data.len())));
        }
        for (m, wave) in waves.iter().enumerate() {
            match wave {
                Wave::Initial => {}
                Wave::First if data.is_certainty_member(m) => {
                    return Err(Error::Data(format!(
                        "certainty unit {} is labelled wave 1",
                        data.members[m].unit
                    )));
                }
                Wave::First => {
                    let k = data.stratum(m);
                    let traced = data.in_nbrs(m).iter().any(|&j| {
                        waves[j] == Wave::Initial && data.design.beta[data.stratum(j)][k] > 0.0
                    });
                    if !traced {
                        return Err(Error::Data(format!(
                            "wave-1 unit {} has no initial nominator through a traceable link",
                            data.members[m].unit
                        )));
                    }
                }
            }
        }
        Ok(Self { data, waves })
    }

    /// The sample implied by assigning `roles` to the members of `data`.
    pub fn from_roles(data: SampleData, roles: &Roles) -> Result<Self> {
        roles.check_against(&data)?;
        let waves = roles
            .mask()
            .iter()
            .map(|&b| if b { Wave::Initial } else { Wave::First })
            .collect();
        Self::new(data, waves)
    }

    pub fn data(&self) -> &SampleData {
        &self.data
    }

    pub fn waves(&self) -> &[Wave] {
        &self.waves
    }

    pub fn roles(&self) -> Roles {
        Roles::from_mask(self.waves.iter().map(|w| *w == Wave::Initial).collect())
    }

    pub fn initial_size(&self) -> usize {
        self.waves.iter().filter(|w| **w == Wave::Initial).count()
    }

    pub fn final_size(&self) -> usize {
        self.waves.len()
    }

    pub fn reduce(&self) -> ReducedData {
        ReducedData {
            n0: self.roles().initial_counts(&self.data),
            data: self.data.clone(),
        }
    }

    pub fn to_document(&self, provenance: Option<Provenance>) -> SampleDocument {
        SampleDocument::build(&self.data, Some(&self.waves), None, provenance)
    }

    pub fn from_document(doc: &SampleDocument) -> Result<Self> {
        let data = doc.sample_data()?;
        let waves = doc
            .members
            .iter()
            .map(|m| match m.wave {
                Some(0) => Ok(Wave::Initial),
                Some(1) => Ok(Wave::First),
                Some(w) => Err(Error::Data(format!("unit {}: wave {w} is not 0 or 1", m.unit))),
                None => Err(Error::Data(format!("unit {}: missing wave label", m.unit))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(data, waves)
    }
}

/// Reduced data `d_R`: the sample without wave labels, plus the initial
/// sample size of every stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedData {
    data: SampleData,
    n0: Vec<usize>,
}

impl ReducedData {
    pub fn new(data: SampleData, n0: Vec<usize>) -> Result<Self> {
        if n0.len() != data.num_strata() {
            return Err(Error::Data(format!("{} initial counts for {} strata", n0.len(), data.num_strata())));
        }
        for (k, (&init, &size)) in n0.iter().zip(&data.stratum_counts()).enumerate() {
            if init > size {
                return Err(Error::Data(format!(
                    "stratum {}: {init} initial units but only {size} sampled",
                    k + 1
                )));
            }
        }
        Ok(Self { data, n0 })
    }

    pub fn data(&self) -> &SampleData {
        &self.data
    }

    pub fn n0(&self) -> &[usize] {
        &self.n0
    }

    pub fn initial_size(&self) -> usize {
        self.n0.iter().sum()
    }

    pub fn final_size(&self) -> usize {
        self.data.len()
    }

    pub fn to_document(&self, provenance: Option<Provenance>) -> SampleDocument {
        SampleDocument::build(&self.data, None, Some(&self.n0), provenance)
    }

    pub fn from_document(doc: &SampleDocument) -> Result<Self> {
        let n0 = doc
            .n0
            .clone()
            .ok_or_else(|| Error::Data("reduced data needs `n0`".into()))?;
        Self::new(doc.sample_data()?, n0)
    }
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub unit: UnitId,
    /// 1-based stratum.
    pub stratum: usize,
    /// 0 for the initial sample, 1 for wave 1; absent in reduced data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave: Option<u8>,
    pub out_counts: Vec<u32>,
    #[serde(default)]
    pub responses: Vec<f64>,
}

/// Serialized form shared by observed and reduced data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub design: DesignParams,
    #[serde(default)]
    pub strata: Vec<StratumMeta>,
    #[serde(default)]
    pub response_names: Vec<String>,
    pub members: Vec<MemberRecord>,
    pub within_links: Vec<(UnitId, UnitId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<Vec<usize>>,
}

impl SampleDocument {
    fn build(data: &SampleData, waves: Option<&[Wave]>, n0: Option<&[usize]>, provenance: Option<Provenance>) -> Self {
        let members = data
            .members
            .iter()
            .enumerate()
            .map(|(m, member)| MemberRecord {
                unit: member.unit,
                stratum: member.stratum + 1,
                wave: waves.map(|w| u8::from(w[m] == Wave::First)),
                out_counts: member.out_counts.clone(),
                responses: member.responses.clone(),
            })
            .collect();
        Self {
            provenance,
            design: data.design.clone(),
            strata: data.strata.clone(),
            response_names: data.response_names.clone(),
            members,
            within_links: data.within_links(),
            n0: n0.map(<[usize]>::to_vec),
        }
    }

    fn sample_data(&self) -> Result<SampleData> {
        let strata = if self.strata.is_empty() {
            vec![StratumMeta::default(); self.design.num_strata()]
        } else {
            self.strata.clone()
        };
        let members = self
            .members
            .iter()
            .map(|m| {
                if m.stratum == 0 {
                    return Err(Error::Data(format!("unit {}: strata are numbered from 1", m.unit)));
                }
                Ok(Member {
                    unit: m.unit,
                    stratum: m.stratum - 1,
                    out_counts: m.out_counts.clone(),
                    responses: m.responses.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SampleData::new(members, &self.within_links, self.design.clone(), strata, self.response_names.clone())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::population::tests::four_node;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The 4-node graph observed with `S0 = {1,2}` and `S1 = {3,4}`.
    pub(crate) fn four_node_sample(beta: f64) -> ObservedSample {
        let pop = four_node();
        let params = DesignParams::uniform(1, 0.5, beta);
        observe(&pop, &Selection { initial: vec![0, 1], wave1: vec![2, 3] }, &params).unwrap()
    }

    #[test]
    fn census_has_no_wave_one() {
        let pop = four_node();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d0 = draw_sample(&pop, &DesignParams::uniform(1, 1.0, 0.7), &mut rng).unwrap();
        assert_eq!(d0.initial_size(), 4);
        assert!(d0.waves().iter().all(|w| *w == Wave::Initial));
    }

    #[test]
    fn zero_beta_never_traces() {
        let pop = four_node();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d0 = draw_sample(&pop, &DesignParams::uniform(1, 0.5, 0.0), &mut rng).unwrap();
            assert_eq!(d0.final_size(), d0.initial_size());
        }
    }

    #[test]
    fn full_tracing_from_forced_initial_sample() {
        let pop = four_node();
        let params = DesignParams {
            alpha: vec![0.0],
            beta: vec![vec![1.0]],
            certainty_units: vec![UnitId(1), UnitId(2)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sel = select(&pop, &params, &mut rng).unwrap();
        assert_eq!(sel.initial, vec![0, 1]);
        assert_eq!(sel.wave1, vec![2, 3]);
    }

    #[test]
    fn observed_counts_use_full_graph() {
        let pop = four_node();
        let params = DesignParams::uniform(1, 0.5, 0.5);
        let d0 = observe(&pop, &Selection { initial: vec![0], wave1: vec![] }, &params).unwrap();
        assert_eq!(d0.data().members()[0].out_counts, vec![2]);
        assert!(d0.data().within_links().is_empty());
    }

    #[test]
    fn reduce_counts_initial_units() {
        let d0 = four_node_sample(0.5);
        let dr = d0.reduce();
        assert_eq!(dr.n0(), &[2]);
        assert_eq!(dr.final_size(), 4);
        let census = observe(
            &four_node(),
            &Selection { initial: vec![0, 1, 2, 3], wave1: vec![] },
            &DesignParams::uniform(1, 0.5, 0.5),
        )
        .unwrap();
        assert_eq!(census.reduce().initial_size(), census.reduce().final_size());
    }

    #[test]
    fn consistent_reorderings_share_reduced_data() {
        // Original S0 = {1,2}; reordering S0 = {1,3} is consistent
        // (2 is nominated by 1, 4 by 3).
        let d0 = four_node_sample(0.5);
        let swapped = ObservedSample::from_roles(d0.data().clone(), &Roles::from_initial(4, &[0, 2])).unwrap();
        assert_ne!(d0, swapped);
        assert_eq!(d0.reduce(), swapped.reduce());
    }

    #[test]
    fn rejects_untraceable_wave_one() {
        let d0 = four_node_sample(0.5);
        // S0 = {3,4}: unit 1 has no initial nominator.
        let err = ObservedSample::from_roles(d0.data().clone(), &Roles::from_initial(4, &[2, 3])).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn document_roundtrip() {
        let d0 = four_node_sample(0.5);
        let json = serde_json::to_string(&d0.to_document(None)).unwrap();
        let back: SampleDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(ObservedSample::from_document(&back).unwrap(), d0);
        let dr = d0.reduce();
        let json = serde_json::to_string(&dr.to_document(None)).unwrap();
        let back: SampleDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(ReducedData::from_document(&back).unwrap(), dr);
    }

    #[test]
    fn draws_are_reproducible() {
        let pop = crate::population::generate_synthetic(&crate::population::SyntheticSpec::drug_user_surrogate(5)).unwrap();
        let params = DesignParams::uniform(2, 0.15, 0.2);
        let a = draw_sample(&pop, &params, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = draw_sample(&pop, &params, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn certainty_units_always_initial() {
        let pop = crate::population::generate_synthetic(&crate::population::SyntheticSpec::drug_user_surrogate(5)).unwrap();
        let top = pop.top_degree_units(10);
        let mut params = DesignParams::uniform(2, 0.1, 0.3);
        params.certainty_units = top.iter().map(|&i| pop.id(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let d0 = draw_sample(&pop, &params, &mut rng).unwrap();
            for &i in &top {
                let m = d0.data().position_of(pop.id(i)).unwrap();
                assert_eq!(d0.waves()[m], Wave::Initial);
            }
        }
    }
}
