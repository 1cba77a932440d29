//! Alignment metrics, permutation tests, and standardized effect sizes.
//!
//! Four metrics measure how a node covariate `Z` aligns with a threshold
//! network: the share of links joining matching nodes (R), the share of
//! same-community pairs that match (C), the label entropy across
//! communities (H), and the mean degree of `Z = 1` nodes (D). The null
//! distribution comes from shuffling labels across nodes while the network
//! and its communities stay fixed; `p` counts null draws at least as large
//! as the observation, and the effect size is the observation's distance
//! from the null mean in null standard deviations.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::netmetrics::CommunityAssignment;
use crate::rng::StreamKey;
use crate::simnet::ThresholdNetwork;

/// Per-agent categorical covariates.
#[derive(Debug, Clone)]
pub struct CovariateTable {
    covariates: Vec<String>,
    values: BTreeMap<String, BTreeMap<String, String>>,
}

impl CovariateTable {
    pub fn new(
        covariates: Vec<String>,
        values: BTreeMap<String, BTreeMap<String, String>>,
    ) -> Self {
        CovariateTable { covariates, values }
    }

    /// Reads the covariate CSV: header `agent_id,<name>,...`; empty cells
    /// are missing values. Lines starting with `#` are ignored.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<CovariateTable> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.first().map(String::as_str) != Some("agent_id") {
            return Err(Error::InvalidInput(
                "covariate CSV must start with an agent_id column".into(),
            ));
        }
        let covariates: Vec<String> = headers[1..].to_vec();
        if covariates.is_empty() {
            return Err(Error::InvalidInput("covariate CSV has no covariate columns".into()));
        }
        let mut values = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let agent = record[0].to_string();
            let mut row = BTreeMap::new();
            for (i, cov) in covariates.iter().enumerate() {
                let cell = record.get(i + 1).unwrap_or("");
                if !cell.is_empty() {
                    row.insert(cov.clone(), cell.to_string());
                }
            }
            if values.insert(agent.clone(), row).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate covariate row for agent {agent}"
                )));
            }
        }
        if values.is_empty() {
            return Err(Error::InvalidInput("covariate CSV contains no data rows".into()));
        }
        Ok(CovariateTable { covariates, values })
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<CovariateTable> {
        let file = std::fs::File::open(path)?;
        CovariateTable::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    pub fn value(&self, agent: &str, covariate: &str) -> Option<&str> {
        self.values.get(agent).and_then(|row| row.get(covariate)).map(String::as_str)
    }

    /// Distinct non-missing categories of a covariate, ascending.
    pub fn categories(&self, covariate: &str) -> Vec<String> {
        let mut set: Vec<String> = self
            .values
            .values()
            .filter_map(|row| row.get(covariate))
            .cloned()
            .collect();
        set.sort();
        set.dedup();
        set
    }

    /// Categorical labels aligned to `agents`, interned against the sorted
    /// category list; `None` for agents without a value.
    pub fn categorical_labels(&self, agents: &[String], covariate: &str) -> Vec<Option<u32>> {
        let categories = self.categories(covariate);
        agents
            .iter()
            .map(|a| {
                self.value(a, covariate)
                    .map(|v| categories.iter().position(|c| c == v).unwrap() as u32)
            })
            .collect()
    }

    /// Binary indicator labels for one category of a covariate.
    pub fn indicator_labels(
        &self,
        agents: &[String],
        covariate: &str,
        category: &str,
    ) -> Vec<Option<u32>> {
        agents
            .iter()
            .map(|a| self.value(a, covariate).map(|v| (v == category) as u32))
            .collect()
    }
}

/// How "matching" labels are counted by R and C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Both endpoints carry the value 1 (for category dummies).
    Indicator,
    /// Endpoints carry equal values.
    Categorical,
}

fn pair_matches(a: u32, b: u32, mode: MatchMode) -> bool {
    match mode {
        MatchMode::Indicator => a == 1 && b == 1,
        MatchMode::Categorical => a == b,
    }
}

/// Share of edges whose endpoints match; errors on edgeless networks,
/// `None` when no edge joins two labeled nodes.
pub fn metric_pairwise_r(
    h: &ThresholdNetwork,
    labels: &[Option<u32>],
    mode: MatchMode,
) -> Result<Option<f64>> {
    let edges = h.edges();
    if edges.is_empty() {
        return Err(Error::InvalidInput("pairwise metric needs at least one edge".into()));
    }
    let mut total = 0u64;
    let mut matching = 0u64;
    for (i, j) in edges {
        if let (Some(a), Some(b)) = (labels[i], labels[j]) {
            total += 1;
            if pair_matches(a, b, mode) {
                matching += 1;
            }
        }
    }
    Ok((total > 0).then(|| matching as f64 / total as f64))
}

/// Share of unordered same-community pairs whose labels match; `None`
/// when there are no same-community labeled pairs.
pub fn metric_community_c(
    communities: &CommunityAssignment,
    labels: &[Option<u32>],
    mode: MatchMode,
) -> Result<Option<f64>> {
    let n = labels.len();
    let mut total = 0u64;
    let mut matching = 0u64;
    for i in 0..n {
        let (Some(ci), Some(a)) = (communities.of_index(i), labels[i]) else {
            continue;
        };
        for j in i + 1..n {
            let (Some(cj), Some(b)) = (communities.of_index(j), labels[j]) else {
                continue;
            };
            if ci == cj {
                total += 1;
                if pair_matches(a, b, mode) {
                    matching += 1;
                }
            }
        }
    }
    Ok((total > 0).then(|| matching as f64 / total as f64))
}

/// Community-size-weighted label entropy (natural log, `0 ln 0 = 0`);
/// `None` when no community node carries a label.
pub fn metric_entropy_h(
    communities: &CommunityAssignment,
    labels: &[Option<u32>],
) -> Result<Option<f64>> {
    let n = labels.len();
    let n_comms = communities.community_count();
    if n_comms == 0 {
        return Err(Error::InvalidInput("entropy needs at least one community".into()));
    }
    // Per-community label counts over labeled members.
    let mut counts: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); n_comms];
    let mut sizes = vec![0u64; n_comms];
    for i in 0..n {
        if let (Some(c), Some(z)) = (communities.of_index(i), labels[i]) {
            *counts[c].entry(z).or_insert(0) += 1;
            sizes[c] += 1;
        }
    }
    let total: u64 = sizes.iter().sum();
    if total == 0 {
        return Ok(None);
    }
    let mut entropy = 0.0;
    for c in 0..n_comms {
        if sizes[c] == 0 {
            continue;
        }
        let within: f64 = counts[c]
            .values()
            .map(|&k| {
                let p = k as f64 / sizes[c] as f64;
                -p * p.ln()
            })
            .sum();
        entropy += sizes[c] as f64 / total as f64 * within;
    }
    Ok(Some(entropy))
}

/// Mean degree of nodes with `Z = 1`; `None` when that set is empty or
/// entirely isolated.
pub fn metric_degree_d(h: &ThresholdNetwork, labels: &[Option<u32>]) -> Result<Option<f64>> {
    let mut sum = 0u64;
    let mut count = 0u64;
    let mut any_connected = false;
    for (i, l) in labels.iter().enumerate() {
        if *l == Some(1) {
            let d = h.degree(i);
            sum += d as u64;
            count += 1;
            if d > 0 {
                any_connected = true;
            }
        }
    }
    if count == 0 || !any_connected {
        return Ok(None);
    }
    Ok(Some(sum as f64 / count as f64))
}

/// Tail of the permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `p` counts null draws at least as large as the observation.
    Upper,
    /// `p` counts null draws at least as far from the null mean.
    TwoSided,
}

/// Permutation-test parameters.
#[derive(Debug, Clone)]
pub struct PermutationSpec {
    pub tau: usize,
    pub seed: u64,
    pub gamma: f64,
    pub tail: Tail,
}

/// Metric-agnostic outcome of one permutation test.
#[derive(Debug, Clone, Serialize)]
pub struct PermutationOutcome {
    pub observed: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    /// `None` when the null distribution is degenerate (`sd = 0`).
    pub beta: Option<f64>,
    pub p_value: f64,
    pub tau: usize,
    pub seed: u64,
    /// Significance stars: `***` below 0.01, `**` below 0.05, `*` below
    /// 0.1.
    pub stars: String,
    /// Shuffles that were redrawn because the metric was undefined.
    pub resampled_shuffles: u64,
    pub rejected: bool,
}

pub fn star_level(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Runs the label-shuffling permutation test for one metric.
///
/// The metric is evaluated on `tau` uniform permutations of the observed
/// labels (shuffled across the labeled nodes only; the network and its
/// communities stay fixed). Shuffles on which the metric is undefined are
/// redrawn and counted. Errors when the metric is undefined on the
/// observed labels or when a shuffle cannot be resampled to a defined
/// value.
pub fn permutation_test<F>(
    labels: &[Option<u32>],
    metric: F,
    spec: &PermutationSpec,
) -> Result<PermutationOutcome>
where
    F: Fn(&[Option<u32>]) -> Result<Option<f64>> + Sync,
{
    if spec.tau < 1 {
        return Err(Error::InvalidInput("tau must be at least 1".into()));
    }
    if !(spec.gamma > 0.0 && spec.gamma < 1.0) {
        return Err(Error::InvalidInput("gamma must lie in (0, 1)".into()));
    }
    let observed = metric(labels)?.ok_or_else(|| {
        Error::InvalidInput("metric is undefined on the observed labels".into())
    })?;
    let positions: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let values: Vec<u32> = positions.iter().map(|&i| labels[i].unwrap()).collect();

    const MAX_RESAMPLES: u64 = 1000;
    let draws: Vec<(f64, u64)> = (1..=spec.tau)
        .into_par_iter()
        .map(|t| -> Result<(f64, u64)> {
            let mut shuffled = labels.to_vec();
            let mut resampled = 0u64;
            loop {
                let mut rng = StreamKey::root(spec.seed)
                    .with_label("permtest")
                    .with_index(t as u64)
                    .with_index(resampled)
                    .rng();
                let mut perm = values.clone();
                for i in (1..perm.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    perm.swap(i, j);
                }
                for (slot, &p) in positions.iter().enumerate() {
                    shuffled[p] = Some(perm[slot]);
                }
                match metric(&shuffled)? {
                    Some(v) => return Ok((v, resampled)),
                    None => {
                        resampled += 1;
                        if resampled > MAX_RESAMPLES {
                            return Err(Error::Runtime(format!(
                                "shuffle {t} stayed undefined after {MAX_RESAMPLES} resamples"
                            )));
                        }
                    }
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let tau = spec.tau as f64;
    let null: Vec<f64> = draws.iter().map(|&(v, _)| v).collect();
    let resampled_shuffles: u64 = draws.iter().map(|&(_, r)| r).sum();
    let null_mean = null.iter().sum::<f64>() / tau;
    let null_sd = if spec.tau > 1 {
        (null.iter().map(|v| (v - null_mean).powi(2)).sum::<f64>() / (tau - 1.0)).sqrt()
    } else {
        0.0
    };
    let exceed = match spec.tail {
        Tail::Upper => null.iter().filter(|&&v| v >= observed).count(),
        Tail::TwoSided => {
            let dev = (observed - null_mean).abs();
            null.iter().filter(|&&v| (v - null_mean).abs() >= dev).count()
        }
    };
    let p_value = exceed as f64 / tau;
    let beta = (null_sd > 0.0).then(|| (observed - null_mean) / null_sd);
    Ok(PermutationOutcome {
        observed,
        null_mean,
        null_sd,
        beta,
        p_value,
        tau: spec.tau,
        seed: spec.seed,
        stars: star_level(p_value).to_string(),
        resampled_shuffles,
        rejected: p_value <= spec.gamma,
    })
}

/// One row of the effect-size table.
#[derive(Debug, Clone, Serialize)]
pub struct MetricResult {
    pub covariate: String,
    /// Category of the dummy; `None` in categorical mode.
    pub category: Option<String>,
    pub metric: MetricKind,
    pub alpha: f64,
    /// `None` when the metric is undefined on the observed labels (printed
    /// as an empty cell).
    pub outcome: Option<PermutationOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MetricKind {
    #[serde(rename = "R")]
    PairwiseR,
    #[serde(rename = "C")]
    CommunityC,
    #[serde(rename = "H")]
    EntropyH,
    #[serde(rename = "D")]
    DegreeD,
}

impl MetricKind {
    pub fn all() -> [MetricKind; 4] {
        [
            MetricKind::PairwiseR,
            MetricKind::CommunityC,
            MetricKind::EntropyH,
            MetricKind::DegreeD,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::PairwiseR => "R",
            MetricKind::CommunityC => "C",
            MetricKind::EntropyH => "H",
            MetricKind::DegreeD => "D",
        }
    }
}

/// Evaluates one metric on given labels; `None` when undefined.
pub fn evaluate_metric(
    kind: MetricKind,
    h: &ThresholdNetwork,
    communities: &CommunityAssignment,
    labels: &[Option<u32>],
    mode: MatchMode,
) -> Result<Option<f64>> {
    match kind {
        MetricKind::PairwiseR => metric_pairwise_r(h, labels, mode),
        MetricKind::CommunityC => metric_community_c(communities, labels, mode),
        MetricKind::EntropyH => metric_entropy_h(communities, labels),
        MetricKind::DegreeD => metric_degree_d(h, labels),
    }
}

/// Runs the permutation test of `kind` on a network; returns a result row
/// whose `outcome` is `None` when the metric is undefined on the observed
/// labels.
#[allow(clippy::too_many_arguments)]
pub fn test_metric(
    kind: MetricKind,
    h: &ThresholdNetwork,
    communities: &CommunityAssignment,
    labels: &[Option<u32>],
    mode: MatchMode,
    spec: &PermutationSpec,
    covariate: &str,
    category: Option<&str>,
) -> Result<MetricResult> {
    let observed = evaluate_metric(kind, h, communities, labels, mode)?;
    let outcome = match observed {
        None => None,
        Some(_) => Some(permutation_test(
            labels,
            |l| evaluate_metric(kind, h, communities, l, mode),
            spec,
        )?),
    };
    Ok(MetricResult {
        covariate: covariate.to_string(),
        category: category.map(str::to_string),
        metric: kind,
        alpha: h.alpha,
        outcome,
    })
}
