//! Stratified directed nomination graphs.
//!
//! A [`Population`] is immutable once built. Units carry an external id
//! ([`UnitId`]) and are addressed internally by their dense position
//! `0..N`. Strata are 0-based internally and 1-based in every file format.
//! The self-nomination convention `y_ii = 1` is never stored; formulas that
//! need it add it explicitly.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::provenance::Provenance;
use crate::{Error, Result};

/// External identifier of a population unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub u64);

impl std::fmt::Display for UnitId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumMeta {
    /// Every unit of the stratum is sampled with probability one.
    #[serde(default)]
    pub certainty: bool,
    /// Whether the stratum counts toward the population total. Strata of
    /// external nominators contribute links but not size.
    #[serde(default = "default_true")]
    pub include_in_total: bool,
}

fn default_true() -> bool {
    true
}

impl Default for StratumMeta {
    fn default() -> Self {
        Self {
            certainty: false,
            include_in_total: true,
        }
    }
}

/// One row of the nodes table.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: UnitId,
    /// 1-based stratum label.
    pub stratum: usize,
    pub responses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    ids: Vec<UnitId>,
    index: HashMap<UnitId, usize>,
    stratum: Vec<usize>,
    strata: Vec<StratumMeta>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    response_names: Vec<String>,
    responses: Vec<Vec<f64>>,
}

impl Population {
    /// Builds and validates a population. Duplicate links collapse to one;
    /// with `symmetrize` every link `(i, j)` also implies `(j, i)`.
    pub fn new(
        units: Vec<UnitRecord>,
        response_names: Vec<String>,
        links: &[(UnitId, UnitId)],
        symmetrize: bool,
    ) -> Result<Self> {
        let n = units.len();
        let mut index = HashMap::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        let mut stratum = Vec::with_capacity(n);
        let mut responses = Vec::with_capacity(n);
        for (pos, unit) in units.into_iter().enumerate() {
            if index.insert(unit.id, pos).is_some() {
                return Err(Error::DuplicateUnit(unit.id.0));
            }
            if unit.responses.len() != response_names.len() {
                return Err(Error::Data(format!(
                    "unit {} has {} responses, expected {}",
                    unit.id,
                    unit.responses.len(),
                    response_names.len()
                )));
            }
            if unit.stratum == 0 {
                return Err(Error::NonContiguousStrata(format!(
                    "unit {} has stratum 0; strata are numbered from 1",
                    unit.id
                )));
            }
            ids.push(unit.id);
            stratum.push(unit.stratum - 1);
            responses.push(unit.responses);
        }
        let k = check_contiguous(&stratum)?;

        let mut out_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(src, dst) in links {
            let i = *index.get(&src).ok_or(Error::UnknownUnit(src.0))?;
            let j = *index.get(&dst).ok_or(Error::UnknownUnit(dst.0))?;
            if i == j {
                return Err(Error::SelfLoop(src.0));
            }
            out_sets[i].insert(j);
            if symmetrize {
                out_sets[j].insert(i);
            }
        }
        let out_adj: Vec<Vec<usize>> = out_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let in_adj = transpose(&out_adj);

        Ok(Self {
            ids,
            index,
            stratum,
            strata: vec![StratumMeta::default(); k],
            out_adj,
            in_adj,
            response_names,
            responses,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn id(&self, unit: usize) -> UnitId {
        self.ids[unit]
    }

    pub fn ids(&self) -> &[UnitId] {
        &self.ids
    }

    pub fn index_of(&self, id: UnitId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// 0-based stratum of a unit.
    pub fn stratum_of(&self, unit: usize) -> usize {
        self.stratum[unit]
    }

    pub fn strata_assignment(&self) -> &[usize] {
        &self.stratum
    }

    pub fn stratum_meta(&self) -> &[StratumMeta] {
        &self.strata
    }

    pub fn stratum_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_strata()];
        for &s in &self.stratum {
            sizes[s] += 1;
        }
        sizes
    }

    pub fn out_neighbors(&self, unit: usize) -> &[usize] {
        &self.out_adj[unit]
    }

    pub fn in_neighbors(&self, unit: usize) -> &[usize] {
        &self.in_adj[unit]
    }

    pub fn has_link(&self, from: usize, to: usize) -> bool {
        self.out_adj[from].binary_search(&to).is_ok()
    }

    /// Number of stored (non-loop) links.
    pub fn link_total(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    /// Iterates stored links as dense `(from, to)` pairs in a fixed order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(i, outs)| outs.iter().map(move |&j| (i, j)))
    }

    /// Out-nominations of `unit` into each stratum, self excluded.
    pub fn out_counts_by_stratum(&self, unit: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.num_strata()];
        for &j in &self.out_adj[unit] {
            counts[self.stratum[j]] += 1;
        }
        counts
    }

    /// Number of distinct neighbours ignoring link direction.
    pub fn degree(&self, unit: usize) -> usize {
        let (a, b) = (&self.out_adj[unit], &self.in_adj[unit]);
        let (mut x, mut y, mut count) = (0, 0, 0);
        while x < a.len() || y < b.len() {
            match (a.get(x), b.get(y)) {
                (Some(p), Some(q)) if p == q => {
                    x += 1;
                    y += 1;
                }
                (Some(p), Some(q)) if p < q => x += 1,
                (Some(_), None) => x += 1,
                _ => y += 1,
            }
            count += 1;
        }
        count
    }

    pub fn is_reciprocated(&self) -> bool {
        self.links().all(|(i, j)| self.has_link(j, i))
    }

    /// The `count` units of largest degree; ties go to the smaller unit id.
    pub fn top_degree_units(&self, count: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.degree(b)
                .cmp(&self.degree(a))
                .then(self.ids[a].cmp(&self.ids[b]))
        });
        order.truncate(count);
        order.sort_unstable();
        order
    }

    pub fn response_names(&self) -> &[String] {
        &self.response_names
    }

    pub fn response_index(&self, name: &str) -> Option<usize> {
        self.response_names.iter().position(|n| n == name)
    }

    pub fn responses(&self, unit: usize) -> &[f64] {
        &self.responses[unit]
    }

    /// Values of a named response for every unit; `degree` is derived on
    /// demand when no column of that name exists.
    pub fn response_values(&self, name: &str) -> Option<Vec<f64>> {
        match self.response_index(name) {
            Some(r) => Some(self.responses.iter().map(|z| z[r]).collect()),
            None if name == "degree" => Some((0..self.len()).map(|i| self.degree(i) as f64).collect()),
            None => None,
        }
    }

    /// Appends (or replaces) a response column.
    pub fn with_response(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Data(format!(
                "response {name} has {} values for {} units",
                values.len(),
                self.len()
            )));
        }
        match self.response_index(name) {
            Some(r) => {
                for (z, v) in self.responses.iter_mut().zip(values) {
                    z[r] = v;
                }
            }
            None => {
                self.response_names.push(name.to_string());
                for (z, v) in self.responses.iter_mut().zip(values) {
                    z.push(v);
                }
            }
        }
        Ok(self)
    }

    pub fn with_stratum_meta(mut self, meta: Vec<StratumMeta>) -> Result<Self> {
        if meta.len() != self.num_strata() {
            return Err(Error::Config(format!(
                "{} stratum descriptors for {} strata",
                meta.len(),
                self.num_strata()
            )));
        }
        self.strata = meta;
        Ok(self)
    }

    /// Same graph and responses under a different partition (0-based labels).
    pub fn restratified(&self, stratum: Vec<usize>, meta: Vec<StratumMeta>) -> Result<Self> {
        if stratum.len() != self.len() {
            return Err(Error::Config(format!(
                "strata mapping covers {} units, population has {}",
                stratum.len(),
                self.len()
            )));
        }
        let k = check_contiguous(&stratum)?;
        if k != meta.len() {
            return Err(Error::Config(format!("{} stratum descriptors for {k} strata", meta.len())));
        }
        Ok(Self {
            stratum,
            strata: meta,
            ..self.clone()
        })
    }

    pub fn summary(&self) -> PopulationSummary {
        let n = self.len();
        let sizes = self.stratum_sizes();
        let degree_sum: usize = (0..n).map(|i| self.degree(i)).sum();
        PopulationSummary {
            units: n,
            strata_sizes: sizes.clone(),
            strata_proportions: sizes.iter().map(|&s| s as f64 / n.max(1) as f64).collect(),
            links: self.link_total(),
            mean_degree: if n == 0 { 0.0 } else { degree_sum as f64 / n as f64 },
            reciprocated: self.is_reciprocated(),
        }
    }
}

fn transpose(out_adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut in_adj = vec![Vec::new(); out_adj.len()];
    for (i, outs) in out_adj.iter().enumerate() {
        for &j in outs {
            in_adj[j].push(i);
        }
    }
    in_adj
}

fn check_contiguous(stratum: &[usize]) -> Result<usize> {
    let present: BTreeSet<usize> = stratum.iter().copied().collect();
    let k = present.len();
    if let Some(&max) = present.iter().next_back() {
        if max + 1 != k {
            let labels: Vec<String> = present.iter().map(|s| (s + 1).to_string()).collect();
            return Err(Error::NonContiguousStrata(format!("found strata {{{}}}", labels.join(","))));
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub units: usize,
    pub strata_sizes: Vec<usize>,
    pub strata_proportions: Vec<f64>,
    pub links: usize,
    pub mean_degree: f64,
    pub reciprocated: bool,
}

/// Link counts `w_lk` between strata, including the `N_k` implicit
/// self-loops on the diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkCountMatrix {
    pub w_lk: Vec<Vec<u64>>,
    pub w: u64,
}

pub fn link_counts(pop: &Population) -> LinkCountMatrix {
    let k = pop.num_strata();
    let mut w_lk = vec![vec![0u64; k]; k];
    for (i, j) in pop.links() {
        w_lk[pop.stratum_of(i)][pop.stratum_of(j)] += 1;
    }
    for (s, size) in pop.stratum_sizes().into_iter().enumerate() {
        w_lk[s][s] += size as u64;
    }
    let w = w_lk.iter().flatten().sum();
    LinkCountMatrix { w_lk, w }
}

// ---------------------------------------------------------------------------
// CSV ingestion

pub fn load_population(nodes: &Path, edges: &Path, symmetrize: bool) -> Result<Population> {
    let nodes = std::fs::File::open(nodes)?;
    let edges = std::fs::File::open(edges)?;
    read_population(nodes, edges, symmetrize)
}

/// Reads `unit,stratum,<responses...>` and `src,dst` tables.
pub fn read_population<N: Read, E: Read>(nodes: N, edges: E, symmetrize: bool) -> Result<Population> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(nodes);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "unit" || &headers[1] != "stratum" {
        return Err(Error::Data("nodes header must start with `unit,stratum`".into()));
    }
    let response_names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut units = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| -> Result<&str> {
            record
                .get(c)
                .ok_or_else(|| Error::Data(format!("nodes row {}: missing column {c}", line + 2)))
        };
        let id = parse_u64(field(0)?, line)?;
        let stratum = parse_u64(field(1)?, line)? as usize;
        let mut responses = Vec::with_capacity(response_names.len());
        for c in 2..headers.len() {
            let raw = field(c)?;
            responses.push(raw.parse::<f64>().map_err(|_| {
                Error::Data(format!("nodes row {}: `{raw}` is not a number", line + 2))
            })?);
        }
        units.push(UnitRecord {
            id: UnitId(id),
            stratum,
            responses,
        });
    }

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(edges);
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "src" || &headers[1] != "dst" {
        return Err(Error::Data("edges header must be `src,dst`".into()));
    }
    let mut links = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        links.push((
            UnitId(parse_u64(&record[0], line)?),
            UnitId(parse_u64(&record[1], line)?),
        ));
    }
    Population::new(units, response_names, &links, symmetrize)
}

fn parse_u64(raw: &str, line: usize) -> Result<u64> {
    raw.parse()
        .map_err(|_| Error::Data(format!("row {}: `{raw}` is not a non-negative integer", line + 2)))
}

pub fn write_nodes_csv<W: Write>(pop: &Population, out: W, provenance: Option<&Provenance>) -> Result<()> {
    let mut out = out;
    if let Some(p) = provenance {
        write!(out, "{}", p.csv_comment())?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["unit".to_string(), "stratum".to_string()];
    header.extend(pop.response_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..pop.len() {
        let mut row = vec![pop.ids[i].to_string(), (pop.stratum[i] + 1).to_string()];
        row.extend(pop.responses[i].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edges_csv<W: Write>(pop: &Population, out: W, provenance: Option<&Provenance>) -> Result<()> {
    let mut out = out;
    if let Some(p) = provenance {
        write!(out, "{}", p.csv_comment())?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["src", "dst"])?;
    for (i, j) in pop.links() {
        w.write_record([pop.ids[i].to_string(), pop.ids[j].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic populations

/// How links are generated between strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum LinkModel {
    /// Independent links with probability `densities[l][k]` from stratum
    /// `l` to stratum `k` (per unordered pair when reciprocated).
    Densities { densities: Vec<Vec<f64>> },
    /// Exactly `round(N * mean_degree / 2)` reciprocated edges (or
    /// `round(N * mean_degree)` directed links). Endpoints are drawn with
    /// log-normal activity weights of spread `dispersion` (0 gives a uniform
    /// random graph) and relative stratum mixing weights.
    MeanDegree {
        mean_degree: f64,
        #[serde(default)]
        mixing: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        dispersion: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseModel {
    /// Number of distinct neighbours.
    Degree { name: String },
    /// 1 for units of the given (1-based) stratum, 0 otherwise.
    StratumIndicator { name: String, stratum: usize },
    /// Gaussian with a per-stratum mean.
    Normal { name: String, means: Vec<f64>, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub strata_sizes: Vec<usize>,
    pub links: LinkModel,
    #[serde(default)]
    pub reciprocated: bool,
    #[serde(default)]
    pub responses: Vec<ResponseModel>,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// Surrogate matching the published summary of the empirical network:
    /// 595 units, 342 of them (stratum 2) injection drug users, reciprocated
    /// links and mean degree 2.45.
    pub fn drug_user_surrogate(seed: u64) -> Self {
        Self {
            strata_sizes: vec![253, 342],
            links: LinkModel::MeanDegree {
                mean_degree: 2.45,
                mixing: None,
                dispersion: 0.8,
            },
            reciprocated: true,
            responses: vec![
                ResponseModel::Degree {
                    name: "degree".into(),
                },
                ResponseModel::StratumIndicator {
                    name: "idu".into(),
                    stratum: 2,
                },
            ],
            seed,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Population> {
    let k = spec.strata_sizes.len();
    if k == 0 || spec.strata_sizes.contains(&0) {
        return Err(Error::Config("every stratum needs at least one unit".into()));
    }
    let stratum: Vec<usize> = spec
        .strata_sizes
        .iter()
        .enumerate()
        .flat_map(|(s, &size)| std::iter::repeat_n(s, size))
        .collect();
    let n = stratum.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let edges = match &spec.links {
        LinkModel::Densities { densities } => {
            check_square(densities, k, "densities")?;
            if densities.iter().flatten().any(|d| !(0.0..=1.0).contains(d)) {
                return Err(Error::Config("densities must lie in [0, 1]".into()));
            }
            if spec.reciprocated {
                check_symmetric(densities, "densities")?;
            }
            density_edges(&stratum, densities, spec.reciprocated, &mut rng)
        }
        LinkModel::MeanDegree {
            mean_degree,
            mixing,
            dispersion,
        } => {
            let mixing = mixing.clone().unwrap_or_else(|| vec![vec![1.0; k]; k]);
            check_square(&mixing, k, "mixing")?;
            if mixing.iter().flatten().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return Err(Error::Config("mixing weights must be finite and non-negative".into()));
            }
            if spec.reciprocated {
                check_symmetric(&mixing, "mixing")?;
            }
            if !(*mean_degree >= 0.0 && mean_degree.is_finite()) || *dispersion < 0.0 {
                return Err(Error::Config("mean degree and dispersion must be non-negative".into()));
            }
            degree_target_edges(&stratum, *mean_degree, &mixing, *dispersion, spec.reciprocated, &mut rng)?
        }
    };

    let units: Vec<UnitRecord> = stratum
        .iter()
        .enumerate()
        .map(|(i, &s)| UnitRecord {
            id: UnitId(i as u64 + 1),
            stratum: s + 1,
            responses: Vec::new(),
        })
        .collect();
    let links: Vec<(UnitId, UnitId)> = edges
        .into_iter()
        .map(|(i, j)| (UnitId(i as u64 + 1), UnitId(j as u64 + 1)))
        .collect();
    let mut pop = Population::new(units, Vec::new(), &links, spec.reciprocated)?;

    for model in &spec.responses {
        let (name, values) = match model {
            ResponseModel::Degree { name } => (name, (0..n).map(|i| pop.degree(i) as f64).collect()),
            ResponseModel::StratumIndicator { name, stratum: target } => {
                if *target == 0 || *target > k {
                    return Err(Error::Config(format!("indicator stratum {target} out of range")));
                }
                (name, stratum.iter().map(|&s| f64::from(u8::from(s + 1 == *target))).collect())
            }
            ResponseModel::Normal { name, means, sd } => {
                if means.len() != k || !(*sd >= 0.0) {
                    return Err(Error::Config(format!("normal response {name}: need {k} means and sd >= 0")));
                }
                let values = stratum
                    .iter()
                    .map(|&s| {
                        let z: f64 = rng.sample(StandardNormal);
                        means[s] + sd * z
                    })
                    .collect();
                (name, values)
            }
        };
        pop = pop.with_response(name, values)?;
    }
    Ok(pop)
}

fn check_square(m: &[Vec<f64>], k: usize, what: &str) -> Result<()> {
    if m.len() != k || m.iter().any(|row| row.len() != k) {
        return Err(Error::Config(format!("{what} must be a {k}x{k} matrix")));
    }
    Ok(())
}

fn check_symmetric(m: &[Vec<f64>], what: &str) -> Result<()> {
    for (l, row) in m.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            if *v != m[k][l] {
                return Err(Error::Config(format!("{what} must be symmetric for reciprocated graphs")));
            }
        }
    }
    Ok(())
}

fn density_edges<R: Rng>(
    stratum: &[usize],
    densities: &[Vec<f64>],
    reciprocated: bool,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let n = stratum.len();
    let mut edges = Vec::new();
    for i in 0..n {
        let start = if reciprocated { i + 1 } else { 0 };
        for j in start..n {
            if i == j {
                continue;
            }
            let p = densities[stratum[i]][stratum[j]];
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn degree_target_edges<R: Rng>(
    stratum: &[usize],
    mean_degree: f64,
    mixing: &[Vec<f64>],
    dispersion: f64,
    reciprocated: bool,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = stratum.len();
    let k = mixing.len();
    let target = if reciprocated {
        (n as f64 * mean_degree / 2.0).round() as usize
    } else {
        (n as f64 * mean_degree).round() as usize
    };
    if target == 0 {
        return Ok(Vec::new());
    }
    let capacity = if reciprocated { n * (n - 1) / 2 } else { n * (n - 1) };
    if target > capacity {
        return Err(Error::InfeasibleDegree(format!(
            "{target} links requested, at most {capacity} possible"
        )));
    }

    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (dispersion * z).exp()
        })
        .collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &s) in stratum.iter().enumerate() {
        members[s].push(i);
    }
    let stratum_mass: Vec<f64> = members.iter().map(|m| m.iter().map(|&i| weights[i]).sum()).collect();
    let mut blocks = Vec::new();
    let mut block_weights = Vec::new();
    for l in 0..k {
        for m in 0..k {
            let w = mixing[l][m] * stratum_mass[l] * stratum_mass[m];
            if w > 0.0 {
                blocks.push((l, m));
                block_weights.push(w);
            }
        }
    }
    if blocks.is_empty() {
        return Err(Error::InfeasibleDegree("mixing weights are all zero".into()));
    }
    let block_dist = WeightedIndex::new(&block_weights)
        .map_err(|e| Error::InfeasibleDegree(format!("mixing weights: {e}")))?;
    let within: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&i| weights[i])))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InfeasibleDegree(format!("activity weights: {e}")))?;

    let mut chosen = BTreeSet::new();
    let mut edges = Vec::with_capacity(target);
    let max_attempts = 200 * target + 10_000;
    let mut attempts = 0;
    while edges.len() < target {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InfeasibleDegree(format!(
                "placed {} of {target} links before giving up; lower the mean degree or the dispersion",
                edges.len()
            )));
        }
        let (l, m) = blocks[block_dist.sample(rng)];
        let i = members[l][within[l].sample(rng)];
        let j = members[m][within[m].sample(rng)];
        if i == j {
            continue;
        }
        let key = if reciprocated { (i.min(j), i.max(j)) } else { (i, j) };
        if chosen.insert(key) {
            edges.push(key);
        }
    }
    Ok(edges)
}
