//! Partitions of agents into jointly rational types.
//!
//! The greedy partition repeatedly extracts the largest jointly rational
//! subset. The minimum partition solves the set-cover-style program exactly
//! by iterative deepening on the group count, with pairwise-conflict
//! propagation, symmetry breaking, and lazily generated cycle cuts: a
//! complete assignment is verified group by group, and every violation
//! contributes a "not all owners of this cycle in one group" cut that is
//! kept across deepening levels.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::data::{Dataset, PrecisionAssignment};
use crate::error::{Error, Result};
use crate::ls::{solve_ls_exact, AgentPool, LsProblem, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    Greedy,
    Minimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStatus {
    Optimal,
    /// The time budget ran out; the result is the greedy fallback (minimum
    /// method) or uses possibly sub-optimal extractions (greedy method).
    TimeLimitFallback,
}

/// Disjoint agent blocks, each jointly satisfying GARP_e.
#[derive(Debug, Clone, Serialize)]
pub struct Partition {
    pub method: PartitionMethod,
    pub status: PartitionStatus,
    /// Blocks in extraction order (greedy) or opening order (minimum);
    /// agent ids ascending within a block.
    pub blocks: Vec<Vec<String>>,
    /// Per-block GARP_e certificates (always true).
    pub certificates: Vec<bool>,
    #[serde(skip)]
    block_of: BTreeMap<String, usize>,
}

impl Partition {
    fn new(method: PartitionMethod, status: PartitionStatus, blocks: Vec<Vec<String>>) -> Self {
        let mut block_of = BTreeMap::new();
        for (b, block) in blocks.iter().enumerate() {
            for a in block {
                block_of.insert(a.clone(), b);
            }
        }
        Partition {
            method,
            status,
            certificates: vec![true; blocks.len()],
            blocks,
            block_of,
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, agent: &str) -> Option<usize> {
        self.block_of.get(agent).copied()
    }

    /// Co-type indicator: 1 when the agents share a block; the diagonal is
    /// 1 by convention.
    pub fn co_type_indicator(&self, i: &str, j: &str) -> Result<bool> {
        let bi = self
            .block_of(i)
            .ok_or_else(|| Error::UnknownAgent(i.to_string()))?;
        let bj = self
            .block_of(j)
            .ok_or_else(|| Error::UnknownAgent(j.to_string()))?;
        Ok(bi == bj)
    }
}

/// Agents whose own history violates GARP_e cannot be placed in any block.
fn reject_infeasible_singletons(pool: &AgentPool) -> Result<()> {
    let bad: Vec<&String> = (0..pool.agents.len())
        .filter(|&a| pool.check_agents(&[a]).is_some())
        .map(|a| &pool.agents[a])
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "no partition exists: agents with internally inconsistent data: {bad:?}"
        )))
    }
}

/// Greedy recursive partition: extract the largest jointly rational subset
/// until no agents remain. `time_limit` bounds each inner solve.
pub fn partition_greedy(
    dataset: &Dataset,
    e: &PrecisionAssignment,
    agents: &[String],
    time_limit: Option<Duration>,
) -> Result<Partition> {
    let pool = AgentPool::new(dataset, e, agents)?;
    reject_infeasible_singletons(&pool)?;
    let mut remaining: Vec<String> = pool.agents.clone();
    let mut blocks = Vec::new();
    let mut status = PartitionStatus::Optimal;
    while !remaining.is_empty() {
        let problem = LsProblem {
            dataset,
            e,
            agents: remaining.clone(),
            time_limit,
        };
        let solution = solve_ls_exact(&problem)?;
        if solution.status == SolveStatus::TimeLimit {
            status = PartitionStatus::TimeLimitFallback;
        }
        let block = if solution.selected.is_empty() {
            // Timed out before any leaf; fall back to a singleton so the
            // procedure always progresses.
            vec![remaining[0].clone()]
        } else {
            solution.selected
        };
        remaining.retain(|a| !block.contains(a));
        blocks.push(block);
    }
    Ok(Partition::new(PartitionMethod::Greedy, status, blocks))
}

/// Exact minimum partition into jointly rational blocks. Falls back to the
/// greedy partition when `time_limit` expires.
pub fn partition_minimum(
    dataset: &Dataset,
    e: &PrecisionAssignment,
    agents: &[String],
    time_limit: Option<Duration>,
) -> Result<Partition> {
    let started = Instant::now();
    let pool = AgentPool::new(dataset, e, agents)?;
    reject_infeasible_singletons(&pool)?;
    let n = pool.agents.len();

    let mut conflict = vec![vec![false; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let c = pool.pair_conflicts(a, b);
            conflict[a][b] = c;
            conflict[b][a] = c;
        }
    }
    // Any clique of the conflict graph needs one block per member.
    let lower_bound = greedy_conflict_clique(&conflict).max(1);

    let deadline = time_limit.map(|d| started + d);
    let mut search = MinPartitionSearch {
        pool: &pool,
        conflict: &conflict,
        cuts: Vec::new(),
        cuts_by_agent: vec![Vec::new(); n],
        deadline,
        timed_out: false,
    };
    for k in lower_bound..=n {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        if let Some(solution) = search.assign(0, k, &mut groups) {
            let blocks: Vec<Vec<String>> = solution
                .iter()
                .map(|g| g.iter().map(|&a| pool.agents[a].clone()).collect())
                .collect();
            return Ok(Partition::new(
                PartitionMethod::Minimum,
                PartitionStatus::Optimal,
                blocks,
            ));
        }
        if search.timed_out {
            let mut fallback = partition_greedy(dataset, e, agents, time_limit)?;
            fallback.method = PartitionMethod::Minimum;
            fallback.status = PartitionStatus::TimeLimitFallback;
            return Ok(fallback);
        }
    }
    unreachable!("the all-singletons assignment is always feasible");
}

/// Size of a greedily grown maximal clique in the conflict graph.
fn greedy_conflict_clique(conflict: &[Vec<bool>]) -> usize {
    let n = conflict.len();
    let mut best = 0;
    for start in 0..n {
        let mut clique = vec![start];
        for v in 0..n {
            if v != start && clique.iter().all(|&u| conflict[u][v]) {
                clique.push(v);
            }
        }
        best = best.max(clique.len());
    }
    best
}

struct MinPartitionSearch<'p, 'a> {
    pool: &'p AgentPool<'a>,
    conflict: &'p [Vec<bool>],
    /// MP3-style cuts: owner sets of verified violating cycles; no group
    /// may contain all of one.
    cuts: Vec<Vec<usize>>,
    cuts_by_agent: Vec<Vec<usize>>,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl<'p, 'a> MinPartitionSearch<'p, 'a> {
    fn placement_allowed(&self, agent: usize, group: &[usize]) -> bool {
        if group.iter().any(|&m| self.conflict[agent][m]) {
            return false;
        }
        !self.cuts_by_agent[agent].iter().any(|&c| {
            self.cuts[c]
                .iter()
                .all(|&m| m == agent || group.contains(&m))
        })
    }

    /// Backtracking assignment of agents (ascending) into at most `k`
    /// groups. A new group may only be opened at the next unused index, so
    /// the first member of each group is the lowest remaining agent.
    fn assign(&mut self, agent: usize, k: usize, groups: &mut Vec<Vec<usize>>) -> Option<Vec<Vec<usize>>> {
        if let Some(deadline) = self.deadline {
            if Instant::now() >= deadline {
                self.timed_out = true;
                return None;
            }
        }
        let n = self.pool.agents.len();
        if agent == n {
            return self.verify(groups);
        }
        let open = groups.len();
        for s in 0..=open.min(k - 1) {
            if s == open {
                groups.push(vec![agent]);
            } else {
                if !self.placement_allowed(agent, &groups[s]) {
                    continue;
                }
                groups[s].push(agent);
            }
            if let Some(solution) = self.assign(agent + 1, k, groups) {
                return Some(solution);
            }
            if s == open {
                groups.pop();
            } else {
                groups[s].pop();
            }
            if self.timed_out {
                return None;
            }
        }
        None
    }

    /// Verifies a complete assignment group by group; on a violation,
    /// learns the witness-cycle cut and fails the assignment.
    fn verify(&mut self, groups: &[Vec<usize>]) -> Option<Vec<Vec<usize>>> {
        for group in groups {
            if group.len() < 2 {
                continue;
            }
            if let Some(owners) = self.pool.check_agents(group) {
                let idx = self.cuts.len();
                for &m in &owners {
                    self.cuts_by_agent[m].push(idx);
                }
                self.cuts.push(owners);
                return None;
            }
        }
        Some(groups.to_vec())
    }
}
