//! Synthetic resampling, the similarity matrix `G`, and threshold networks.
//!
//! `T` synthetic datasets are drawn by sampling `s_i` decisions per agent;
//! each is partitioned into jointly rational types, and `G[i][j]` is the
//! fraction of kept datasets in which `i` and `j` share a block. Partition
//! solves run concurrently; tallies are merged in dataset order, so the
//! result is bit-identical regardless of worker count.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, PrecisionAssignment};
use crate::error::{Error, Result};
use crate::partition::{partition_greedy, partition_minimum, PartitionMethod, PartitionStatus};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Random,
    /// Every element of the lexicographic product of per-agent observation
    /// combinations, in order.
    Exhaustive,
}

/// How synthetic datasets are drawn.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    /// Default draw count per agent.
    pub s: usize,
    /// Per-agent overrides of `s`.
    pub s_overrides: BTreeMap<String, usize>,
    /// Number of synthetic datasets (random mode; derived in exhaustive
    /// mode).
    pub t_synthetic: usize,
    pub seed: u64,
    pub mode: SamplingMode,
    /// Upper bound on the exhaustive product.
    pub exhaustive_cap: usize,
}

impl SamplingPlan {
    pub fn random(s: usize, t_synthetic: usize, seed: u64) -> Self {
        SamplingPlan {
            s,
            s_overrides: BTreeMap::new(),
            t_synthetic,
            seed,
            mode: SamplingMode::Random,
            exhaustive_cap: 1_000_000,
        }
    }

    pub fn exhaustive(s: usize, seed: u64) -> Self {
        SamplingPlan {
            s,
            s_overrides: BTreeMap::new(),
            t_synthetic: 0,
            seed,
            mode: SamplingMode::Exhaustive,
            exhaustive_cap: 1_000_000,
        }
    }

    fn s_for(&self, agent: &str) -> usize {
        self.s_overrides.get(agent).copied().unwrap_or(self.s)
    }

    /// Checks `1 <= s_i <= N_i` for every agent, `T >= 1` in random mode,
    /// and the exhaustive cap.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        for (agent, obs) in dataset.agents() {
            let s = self.s_for(agent);
            if s < 1 {
                return Err(Error::InvalidInput(format!(
                    "sampling plan assigns s = 0 to agent {agent}"
                )));
            }
            if s > obs.len() {
                return Err(Error::InvalidInput(format!(
                    "agent {agent} has {} observations, cannot draw {s}",
                    obs.len()
                )));
            }
        }
        for agent in self.s_overrides.keys() {
            dataset.obs_indices_of(agent)?;
        }
        match self.mode {
            SamplingMode::Random => {
                if self.t_synthetic < 1 {
                    return Err(Error::InvalidInput("T must be at least 1".into()));
                }
            }
            SamplingMode::Exhaustive => {
                self.total_draws(dataset)?;
            }
        }
        Ok(())
    }

    /// Number of synthetic datasets this plan generates.
    pub fn total_draws(&self, dataset: &Dataset) -> Result<usize> {
        match self.mode {
            SamplingMode::Random => Ok(self.t_synthetic),
            SamplingMode::Exhaustive => {
                let mut product: u128 = 1;
                for (agent, obs) in dataset.agents() {
                    product = product.saturating_mul(binomial(obs.len(), self.s_for(agent)));
                    if product > self.exhaustive_cap as u128 {
                        return Err(Error::InvalidInput(format!(
                            "exhaustive product exceeds the cap of {}",
                            self.exhaustive_cap
                        )));
                    }
                }
                Ok(product as usize)
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Lexicographic unranking of a k-combination of `0..n`.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut combo = Vec::with_capacity(k);
    let mut next = 0usize;
    let mut remaining = k;
    while remaining > 0 {
        let count = binomial(n - next - 1, remaining - 1);
        if rank < count {
            combo.push(next);
            remaining -= 1;
        } else {
            rank -= count;
        }
        next += 1;
    }
    combo
}

/// Draws the `t`-th synthetic dataset, `1 <= t <= total_draws`. Random
/// draws are keyed by `(seed, t, agent_id)`, so each agent's sample is
/// reproducible independently of evaluation order; exhaustive mode decodes
/// `t` against the product of per-agent combinations (later agents vary
/// fastest).
pub fn draw_synthetic(dataset: &Dataset, plan: &SamplingPlan, t: usize) -> Result<Dataset> {
    plan.validate(dataset)?;
    let total = plan.total_draws(dataset)?;
    if t < 1 || t > total {
        return Err(Error::InvalidInput(format!(
            "synthetic dataset index {t} outside 1..={total}"
        )));
    }
    let mut picked = Vec::new();
    match plan.mode {
        SamplingMode::Random => {
            for (agent, obs) in dataset.agents() {
                let s = plan.s_for(agent);
                let mut rng = StreamKey::root(plan.seed)
                    .with_label("sampling")
                    .with_index(t as u64)
                    .with_label(agent)
                    .rng();
                let mut idx: Vec<usize> = (0..obs.len()).collect();
                for i in 0..s {
                    let j = rng.gen_range(i..idx.len());
                    idx.swap(i, j);
                }
                let mut chosen: Vec<usize> = idx[..s].iter().map(|&i| obs[i]).collect();
                chosen.sort_unstable();
                picked.extend(chosen);
            }
        }
        SamplingMode::Exhaustive => {
            // Mixed-radix decoding, most significant digit first.
            let agents: Vec<(&str, &[usize])> = dataset.agents().collect();
            let radices: Vec<u128> = agents
                .iter()
                .map(|(a, obs)| binomial(obs.len(), plan.s_for(a)))
                .collect();
            let mut rank = (t - 1) as u128;
            let mut digits = vec![0u128; agents.len()];
            for i in (0..agents.len()).rev() {
                digits[i] = rank % radices[i];
                rank /= radices[i];
            }
            for (i, (agent, obs)) in agents.iter().enumerate() {
                let combo = unrank_combination(obs.len(), plan.s_for(agent), digits[i]);
                picked.extend(combo.into_iter().map(|c| obs[c]));
            }
        }
    }
    dataset.subset_dataset(&picked)
}

/// Agent-by-agent co-typing frequencies across the kept synthetic
/// datasets.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    agent_ids: Vec<String>,
    values: Vec<f64>,
    /// Synthetic datasets actually used (after timeout drops).
    pub t_effective: u32,
    /// Synthetic datasets dropped by the timeout policy.
    pub dropped: u32,
}

impl SimilarityMatrix {
    pub(crate) fn from_counts(
        agent_ids: Vec<String>,
        counts: &[u32],
        t_effective: u32,
        dropped: u32,
    ) -> Self {
        let n = agent_ids.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = if i == j {
                    1.0
                } else {
                    counts[i * n + j] as f64 / t_effective as f64
                };
            }
        }
        SimilarityMatrix {
            agent_ids,
            values,
            t_effective,
            dropped,
        }
    }

    /// Builds a matrix from raw values (e.g. parsed from a CSV emitted by
    /// an earlier run). Validates symmetry, the unit diagonal, and `[0,1]`
    /// bounds; `t_effective` is reported as 0 (unknown).
    pub fn from_values(agent_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = agent_ids.len();
        if values.len() != n * n {
            return Err(Error::InvalidInput("similarity matrix shape mismatch".into()));
        }
        for i in 0..n {
            if (values[i * n + i] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput("similarity diagonal must be 1".into()));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "similarity value {v} outside [0, 1]"
                    )));
                }
                if (v - values[j * n + i]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(
                        "similarity matrix must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(SimilarityMatrix {
            agent_ids,
            values,
            t_effective: 0,
            dropped: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn index_of(&self, agent: &str) -> Option<usize> {
        self.agent_ids.iter().position(|a| a == agent)
    }

    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// Histogram of the off-diagonal coefficients over `n_bins` equal bins
    /// on `[0, 1]`; the final bin includes 1.
    pub fn density_histogram(&self, n_bins: usize) -> Vec<u64> {
        let mut counts = vec![0u64; n_bins];
        let n = self.n();
        for i in 0..n {
            for j in i + 1..n {
                let g = self.g(i, j);
                let bin = ((g * n_bins as f64) as usize).min(n_bins - 1);
                counts[bin] += 1;
            }
        }
        counts
    }
}

/// Options for the similarity pipeline.
#[derive(Debug, Clone)]
pub struct SimilarityOptions {
    pub method: PartitionMethod,
    /// Per-partition-solve time budget.
    pub time_limit: Option<std::time::Duration>,
    /// Drop synthetic datasets whose partition hit the time limit
    /// (reducing `T_effective`) instead of keeping the fallback partition.
    pub drop_on_timeout: bool,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        SimilarityOptions {
            method: PartitionMethod::Greedy,
            time_limit: Some(std::time::Duration::from_secs(1)),
            drop_on_timeout: true,
        }
    }
}

/// Runs the resample-partition-tally pipeline and returns `G`.
///
/// Errors when every synthetic dataset is dropped, and propagates partition
/// errors (e.g. an agent whose drawn observations are internally
/// inconsistent, which can occur when `s_i >= 2`).
pub fn compute_similarity(
    dataset: &Dataset,
    plan: &SamplingPlan,
    e: &PrecisionAssignment,
    options: &SimilarityOptions,
) -> Result<SimilarityMatrix> {
    plan.validate(dataset)?;
    let total = plan.total_draws(dataset)?;
    let agent_ids = dataset.agent_ids();
    let n = agent_ids.len();
    let pos: BTreeMap<&str, usize> = agent_ids
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();

    // One tally vector per synthetic dataset, merged in dataset order.
    let per_draw: Vec<Option<Vec<(u32, u32)>>> = (1..=total)
        .into_par_iter()
        .map(|t| -> Result<Option<Vec<(u32, u32)>>> {
            let synthetic = draw_synthetic(dataset, plan, t)?;
            let agents = synthetic.agent_ids();
            let partition = match options.method {
                PartitionMethod::Greedy => {
                    partition_greedy(&synthetic, e, &agents, options.time_limit)?
                }
                PartitionMethod::Minimum => {
                    partition_minimum(&synthetic, e, &agents, options.time_limit)?
                }
            };
            if options.drop_on_timeout && partition.status == PartitionStatus::TimeLimitFallback {
                return Ok(None);
            }
            let mut pairs = Vec::new();
            for block in &partition.blocks {
                for (bi, a) in block.iter().enumerate() {
                    for b in block.iter().skip(bi + 1) {
                        let (pa, pb) = (pos[a.as_str()], pos[b.as_str()]);
                        pairs.push((pa.min(pb) as u32, pa.max(pb) as u32));
                    }
                }
            }
            Ok(Some(pairs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut counts = vec![0u32; n * n];
    let mut t_effective = 0u32;
    let mut dropped = 0u32;
    for draw in per_draw {
        match draw {
            Some(pairs) => {
                t_effective += 1;
                for (a, b) in pairs {
                    counts[a as usize * n + b as usize] += 1;
                    counts[b as usize * n + a as usize] += 1;
                }
            }
            None => dropped += 1,
        }
    }
    if t_effective == 0 {
        return Err(Error::Runtime(
            "every synthetic dataset was dropped by the timeout policy".into(),
        ));
    }
    Ok(SimilarityMatrix::from_counts(
        agent_ids,
        &counts,
        t_effective,
        dropped,
    ))
}

/// Binary network linking pairs with `G >= 1 - alpha`; no self-links.
#[derive(Debug, Clone)]
pub struct ThresholdNetwork {
    pub alpha: f64,
    agent_ids: Vec<String>,
    adjacency: Vec<bool>,
}

impl ThresholdNetwork {
    pub fn n(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn linked(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n() + j]
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n()).filter(|&j| self.linked(i, j)).count()
    }

    /// Edges as `(i, j)` index pairs, `i < j`, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.linked(i, j) {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Builds a network directly from an edge list (used by tests and by
    /// stats on externally supplied graphs).
    pub fn from_edges(agent_ids: Vec<String>, alpha: f64, edges: &[(usize, usize)]) -> Self {
        let n = agent_ids.len();
        let mut adjacency = vec![false; n * n];
        for &(i, j) in edges {
            if i != j {
                adjacency[i * n + j] = true;
                adjacency[j * n + i] = true;
            }
        }
        ThresholdNetwork {
            alpha,
            agent_ids,
            adjacency,
        }
    }
}

/// Thresholds `G` at precision level `alpha` in `(0, 1)`: link iff
/// `G[i][j] >= 1 - alpha` (boundary inclusive, with a 1e-9 tolerance for
/// the float comparison).
pub fn threshold(g: &SimilarityMatrix, alpha: f64) -> Result<ThresholdNetwork> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    let n = g.n();
    let cutoff = 1.0 - alpha - 1e-9;
    let mut adjacency = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j && g.g(i, j) >= cutoff {
                adjacency[i * n + j] = true;
            }
        }
    }
    Ok(ThresholdNetwork {
        alpha,
        agent_ids: g.agent_ids.clone(),
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    fn uniform(e: f64) -> PrecisionAssignment {
        PrecisionAssignment::uniform(e).unwrap()
    }

    fn no_timeout_options() -> SimilarityOptions {
        SimilarityOptions {
            method: PartitionMethod::Greedy,
            time_limit: None,
            drop_on_timeout: true,
        }
    }

    #[test]
    fn table1_has_exactly_two_exhaustive_draws() {
        let ds = testkit::table1_dataset();
        let plan = SamplingPlan::exhaustive(1, 7);
        assert_eq!(plan.total_draws(&ds).unwrap(), 2);
        let d1 = draw_synthetic(&ds, &plan, 1).unwrap();
        let d2 = draw_synthetic(&ds, &plan, 2).unwrap();
        let ids = |d: &Dataset| -> Vec<String> {
            d.observations()
                .iter()
                .map(|o| format!("{}:{}", o.agent_id, o.obs_id))
                .collect()
        };
        assert_eq!(ids(&d1), vec!["A:x", "B:z", "C:w"]);
        assert_eq!(ids(&d2), vec!["A:y", "B:z", "C:w"]);
    }

    #[test]
    fn full_sample_returns_the_original_observations() {
        let ds = testkit::table1_dataset();
        let mut plan = SamplingPlan::random(1, 3, 5);
        plan.s_overrides.insert("A".into(), 2);
        let drawn = draw_synthetic(&ds, &plan, 2).unwrap();
        // Agent A has s_i = N_i, so both of its observations appear.
        assert_eq!(drawn.obs_indices_of("A").unwrap().len(), 2);
    }

    #[test]
    fn fixed_seed_and_index_reproduce_the_draw() {
        let ds = testkit::random_dataset(3, 5, 3, 3);
        let plan = SamplingPlan::random(1, 10, 99);
        let a = draw_synthetic(&ds, &plan, 4).unwrap();
        let b = draw_synthetic(&ds, &plan, 4).unwrap();
        assert_eq!(a.observations(), b.observations());
    }

    #[test]
    fn oversampling_is_rejected() {
        let ds = testkit::table1_dataset();
        let plan = SamplingPlan::random(3, 5, 1);
        assert!(plan.validate(&ds).is_err());
    }

    #[test]
    fn table1_similarity_matrix_is_exact() {
        let ds = testkit::table1_dataset();
        let plan = SamplingPlan::exhaustive(1, 7);
        let e = uniform(1.0);
        let g = compute_similarity(&ds, &plan, &e, &no_timeout_options()).unwrap();
        assert_eq!(g.t_effective, 2);
        assert_eq!(g.dropped, 0);
        let (a, b, c) = (
            g.index_of("A").unwrap(),
            g.index_of("B").unwrap(),
            g.index_of("C").unwrap(),
        );
        assert_eq!(g.g(a, b), 0.5);
        assert_eq!(g.g(a, c), 0.5);
        assert_eq!(g.g(b, c), 0.0);
        assert_eq!(g.g(a, a), 1.0);
    }

    #[test]
    fn table1_threshold_at_half_reproduces_transitivity_failure() {
        let ds = testkit::table1_dataset();
        let plan = SamplingPlan::exhaustive(1, 7);
        let e = uniform(1.0);
        let g = compute_similarity(&ds, &plan, &e, &no_timeout_options()).unwrap();
        let h = threshold(&g, 0.5).unwrap();
        let (a, b, c) = (0, 1, 2); // ascending ids A, B, C
        assert!(h.linked(a, b), "boundary G = 0.5 >= 1 - 0.5 must link");
        assert!(h.linked(a, c));
        assert!(!h.linked(b, c));
        assert!(!h.linked(a, a));
    }

    #[test]
    fn single_agent_similarity_is_trivial() {
        let ds = testkit::random_dataset(8, 1, 2, 3);
        assert_eq!(ds.agent_count(), 1);
        let plan = SamplingPlan::random(1, 4, 3);
        let e = uniform(1.0);
        let g = compute_similarity(&ds, &plan, &e, &no_timeout_options()).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.g(0, 0), 1.0);
    }

    #[test]
    fn full_history_exhaustive_matches_partition_blocks() {
        // s_i = N_i: one draw, and G is the 0/1 co-type matrix of the
        // partition itself.
        let ds = testkit::six_agent_dataset();
        let plan = SamplingPlan::exhaustive(1, 11); // one obs per agent
        let e = uniform(1.0);
        let g = compute_similarity(&ds, &plan, &e, &no_timeout_options()).unwrap();
        assert_eq!(g.t_effective, 1);
        let p = crate::partition::partition_greedy(&ds, &e, &ds.agent_ids(), None).unwrap();
        for (i, a) in g.agent_ids().iter().enumerate() {
            for (j, b) in g.agent_ids().iter().enumerate() {
                let expect = if p.co_type_indicator(a, b).unwrap() {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(g.g(i, j), expect, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn thresholds_are_nested() {
        let ds = testkit::random_dataset(21, 6, 2, 3);
        let plan = SamplingPlan::random(1, 12, 5);
        let e = uniform(0.95);
        let g = compute_similarity(&ds, &plan, &e, &no_timeout_options()).unwrap();
        let h05 = threshold(&g, 0.05).unwrap();
        let h10 = threshold(&g, 0.10).unwrap();
        let h20 = threshold(&g, 0.20).unwrap();
        for i in 0..g.n() {
            for j in 0..g.n() {
                if h05.linked(i, j) {
                    assert!(h10.linked(i, j));
                }
                if h10.linked(i, j) {
                    assert!(h20.linked(i, j));
                }
            }
        }
    }

    #[test]
    fn similarity_is_deterministic() {
        let ds = testkit::random_dataset(22, 6, 2, 3);
        let plan = SamplingPlan::random(1, 15, 77);
        let e = uniform(0.95);
        let opts = no_timeout_options();
        let g1 = compute_similarity(&ds, &plan, &e, &opts).unwrap();
        let g2 = compute_similarity(&ds, &plan, &e, &opts).unwrap();
        for i in 0..g1.n() {
            for j in 0..g1.n() {
                assert_eq!(g1.g(i, j).to_bits(), g2.g(i, j).to_bits());
            }
        }
    }

    #[test]
    fn boundary_threshold_is_inclusive() {
        // counts 19 of 20 -> exactly 0.95 at alpha = 0.05.
        let ids = vec!["a".to_string(), "b".to_string()];
        let mut counts = vec![0u32; 4];
        counts[1] = 19;
        counts[2] = 19;
        let g = SimilarityMatrix::from_counts(ids, &counts, 20, 0);
        let h = threshold(&g, 0.05).unwrap();
        assert!(h.linked(0, 1));
    }

    #[test]
    fn histogram_counts_off_diagonal_pairs() {
        let ds = testkit::table1_dataset();
        let plan = SamplingPlan::exhaustive(1, 7);
        let e = uniform(1.0);
        let g = compute_similarity(&ds, &plan, &e, &no_timeout_options()).unwrap();
        let h = g.density_histogram(10);
        assert_eq!(h.iter().sum::<u64>(), 3, "three unordered pairs");
        assert_eq!(h[5], 2, "two pairs at 0.5");
        assert_eq!(h[0], 1, "one pair at 0");
    }
}
