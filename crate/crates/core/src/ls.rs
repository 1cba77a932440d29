//! Largest jointly rational agent subset.
//!
//! `solve_ls_exact` is a depth-first branch and bound over agent inclusion.
//! Joint rationality is hereditary (removing observations removes
//! relations), so an infeasible pool prunes its entire include branch, and
//! `|included| + |candidates|` bounds every completion. Agents are explored
//! in ascending id order with the include branch first, which makes the
//! first maximum found the lexicographically smallest one. Witness cycles
//! from failed inclusions are kept as no-good cuts, and a precomputed
//! pairwise-conflict matrix filters candidates cheaply.
//!
//! `solve_ls_bruteforce` enumerates subsets by decreasing cardinality and
//! serves as the independent oracle in tests.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::data::{Dataset, PrecisionAssignment};
use crate::error::{Error, Result};
use crate::relations::Relations;

/// Whether a solve ran to proven optimality or returned the incumbent at
/// the time limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
}

/// A maximum jointly-rational-subset instance.
#[derive(Debug, Clone)]
pub struct LsProblem<'a> {
    pub dataset: &'a Dataset,
    pub e: &'a PrecisionAssignment,
    /// Candidate agent set; must be non-empty and present in the dataset.
    pub agents: Vec<String>,
    pub time_limit: Option<Duration>,
}

impl<'a> LsProblem<'a> {
    /// Instance over every agent of the dataset.
    pub fn all_agents(
        dataset: &'a Dataset,
        e: &'a PrecisionAssignment,
        time_limit: Option<Duration>,
    ) -> Self {
        LsProblem {
            dataset,
            e,
            agents: dataset.agent_ids(),
            time_limit,
        }
    }
}

/// Search counters for the JSON diagnostics report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LsDiagnostics {
    pub nodes_explored: u64,
    pub garp_checks: u64,
    pub cuts_added: u64,
    pub elapsed_ms: u64,
}

/// Solution of an LS instance.
#[derive(Debug, Clone, Serialize)]
pub struct LsSolution {
    /// Selected agents, ascending. Pooled observations satisfy GARP_e.
    pub selected: Vec<String>,
    pub status: SolveStatus,
    /// Agents whose own history violates GARP_e; they can never be
    /// selected and are reported instead.
    pub excluded_infeasible: Vec<String>,
    /// GARP_e check on the pooled selected observations (always true;
    /// recorded as the feasibility certificate).
    pub certificate_satisfied: bool,
    pub diagnostics: LsDiagnostics,
}

impl LsSolution {
    pub fn cardinality(&self) -> usize {
        self.selected.len()
    }
}

/// Validated agent set with observation bookkeeping against one relation
/// matrix; shared by the solvers and the partitioner.
pub(crate) struct AgentPool<'a> {
    pub dataset: &'a Dataset,
    pub rel: Relations,
    /// Ascending agent ids.
    pub agents: Vec<String>,
    /// Matrix indices of each agent's observations.
    pub obs_of: Vec<Vec<usize>>,
}

impl<'a> AgentPool<'a> {
    pub fn new(
        dataset: &'a Dataset,
        e: &PrecisionAssignment,
        agents: &[String],
    ) -> Result<AgentPool<'a>> {
        if agents.is_empty() {
            return Err(Error::InvalidInput("agent set is empty".into()));
        }
        let unique: BTreeSet<&String> = agents.iter().collect();
        if unique.len() != agents.len() {
            return Err(Error::InvalidInput("agent set contains duplicates".into()));
        }
        let agents: Vec<String> = unique.into_iter().cloned().collect();
        let mut subset = Vec::new();
        for a in &agents {
            subset.extend_from_slice(dataset.obs_indices_of(a)?);
        }
        subset.sort_unstable();
        let rel = Relations::build(dataset, e, Some(&subset))?;
        // Matrix index of each global observation index.
        let pos_of = |g: usize| rel.obs_indices.binary_search(&g).expect("subset member");
        let obs_of = agents
            .iter()
            .map(|a| {
                dataset
                    .obs_indices_of(a)
                    .expect("validated above")
                    .iter()
                    .map(|&g| pos_of(g))
                    .collect()
            })
            .collect();
        Ok(AgentPool {
            dataset,
            rel,
            agents,
            obs_of,
        })
    }

    /// Pools the observations of `agent_positions` and looks for a GARP
    /// violation; returns the owning agent positions of a witness cycle.
    pub fn check_agents(&self, agent_positions: &[usize]) -> Option<Vec<usize>> {
        let mut members: Vec<usize> = agent_positions
            .iter()
            .flat_map(|&a| self.obs_of[a].iter().copied())
            .collect();
        members.sort_unstable();
        self.rel.find_violation_among(&members).map(|(cycle, _)| {
            let mut owners: Vec<usize> = cycle
                .iter()
                .map(|&m| self.owner_of(m, agent_positions))
                .collect();
            owners.sort_unstable();
            owners.dedup();
            owners
        })
    }

    fn owner_of(&self, matrix_index: usize, agent_positions: &[usize]) -> usize {
        *agent_positions
            .iter()
            .find(|&&a| self.obs_of[a].contains(&matrix_index))
            .expect("cycle observation has an owner in the pool")
    }

    /// True when the pair pools a violation.
    pub fn pair_conflicts(&self, a: usize, b: usize) -> bool {
        self.check_agents(&[a, b]).is_some()
    }
}

struct Search<'p, 'a> {
    pool: &'p AgentPool<'a>,
    conflict: Vec<Vec<bool>>,
    /// Learned no-good cuts: agent-position sets that cannot all coexist.
    cuts: Vec<Vec<usize>>,
    cuts_by_agent: Vec<Vec<usize>>,
    in_included: Vec<bool>,
    incumbent: Vec<usize>,
    deadline: Option<Instant>,
    timed_out: bool,
    diag: LsDiagnostics,
}

impl<'p, 'a> Search<'p, 'a> {
    fn cut_blocks(&self, agent: usize) -> bool {
        self.cuts_by_agent[agent].iter().any(|&c| {
            self.cuts[c]
                .iter()
                .all(|&m| m == agent || self.in_included[m])
        })
    }

    fn add_cut(&mut self, owners: Vec<usize>) {
        let idx = self.cuts.len();
        for &m in &owners {
            self.cuts_by_agent[m].push(idx);
        }
        self.cuts.push(owners);
        self.diag.cuts_added += 1;
    }

    fn dfs(&mut self, included: &mut Vec<usize>, candidates: &[usize]) {
        self.diag.nodes_explored += 1;
        if let Some(deadline) = self.deadline {
            if Instant::now() >= deadline {
                self.timed_out = true;
                return;
            }
        }
        if included.len() + candidates.len() <= self.incumbent.len() {
            return;
        }
        let Some((&agent, rest)) = candidates.split_first() else {
            // Strict improvement only: the first maximum found is the
            // lexicographically smallest and must not be replaced by ties.
            if included.len() > self.incumbent.len() {
                self.incumbent = included.clone();
            }
            return;
        };
        // Include branch first (ascending agent order gives the tie-break).
        if !self.cut_blocks(agent) {
            included.push(agent);
            self.diag.garp_checks += 1;
            match self.pool.check_agents(included) {
                None => {
                    self.in_included[agent] = true;
                    let new_candidates: Vec<usize> = rest
                        .iter()
                        .copied()
                        .filter(|&c| !self.conflict[agent][c])
                        .collect();
                    self.dfs(included, &new_candidates);
                    self.in_included[agent] = false;
                }
                Some(owners) => {
                    debug_assert!(owners.contains(&agent));
                    self.add_cut(owners);
                }
            }
            included.pop();
        }
        if self.timed_out {
            return;
        }
        self.dfs(included, rest);
    }
}

/// Exact maximum jointly-rational subset, with the lexicographic
/// tie-break. Returns the incumbent with `status = TimeLimit` when the
/// time budget runs out.
pub fn solve_ls_exact(problem: &LsProblem) -> Result<LsSolution> {
    let started = Instant::now();
    let pool = AgentPool::new(problem.dataset, problem.e, &problem.agents)?;
    let n = pool.agents.len();

    let mut feasible: Vec<usize> = Vec::new();
    let mut excluded_infeasible = Vec::new();
    for a in 0..n {
        if pool.check_agents(&[a]).is_none() {
            feasible.push(a);
        } else {
            excluded_infeasible.push(pool.agents[a].clone());
        }
    }

    let mut conflict = vec![vec![false; n]; n];
    for (i, &a) in feasible.iter().enumerate() {
        for &b in feasible.iter().skip(i + 1) {
            let c = pool.pair_conflicts(a, b);
            conflict[a][b] = c;
            conflict[b][a] = c;
        }
    }

    let mut search = Search {
        pool: &pool,
        conflict,
        cuts: Vec::new(),
        cuts_by_agent: vec![Vec::new(); n],
        in_included: vec![false; n],
        incumbent: Vec::new(),
        deadline: problem.time_limit.map(|d| started + d),
        timed_out: false,
        diag: LsDiagnostics::default(),
    };
    let mut included = Vec::new();
    search.dfs(&mut included, &feasible);

    let selected: Vec<String> = search
        .incumbent
        .iter()
        .map(|&a| pool.agents[a].clone())
        .collect();
    let certificate_satisfied = if search.incumbent.is_empty() {
        true
    } else {
        pool.check_agents(&search.incumbent).is_none()
    };
    let mut diag = search.diag;
    diag.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(LsSolution {
        selected,
        status: if search.timed_out {
            SolveStatus::TimeLimit
        } else {
            SolveStatus::Optimal
        },
        excluded_infeasible,
        certificate_satisfied,
        diagnostics: diag,
    })
}

/// Independent oracle: enumerates agent subsets in decreasing cardinality
/// (lexicographic within a cardinality) and returns the first feasible
/// one. Guarded to at most 20 agents.
pub fn solve_ls_bruteforce(problem: &LsProblem) -> Result<LsSolution> {
    let started = Instant::now();
    let pool = AgentPool::new(problem.dataset, problem.e, &problem.agents)?;
    let n = pool.agents.len();
    if n > 20 {
        return Err(Error::InvalidInput(format!(
            "brute-force guard: {n} agents exceed the 20-agent limit"
        )));
    }
    let mut diag = LsDiagnostics::default();
    let mut excluded_infeasible = Vec::new();
    for a in 0..n {
        if pool.check_agents(&[a]).is_some() {
            excluded_infeasible.push(pool.agents[a].clone());
        }
    }
    for size in (1..=n).rev() {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            diag.garp_checks += 1;
            if pool.check_agents(&combo).is_none() {
                diag.elapsed_ms = started.elapsed().as_millis() as u64;
                return Ok(LsSolution {
                    selected: combo.iter().map(|&a| pool.agents[a].clone()).collect(),
                    status: SolveStatus::Optimal,
                    excluded_infeasible,
                    certificate_satisfied: true,
                    diagnostics: diag,
                });
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
    }
    // Every singleton violates GARP_e on its own.
    diag.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(LsSolution {
        selected: Vec::new(),
        status: SolveStatus::Optimal,
        excluded_infeasible,
        certificate_satisfied: true,
        diagnostics: diag,
    })
}

/// Advances `combo` to the next k-combination of `0..n` in lexicographic
/// order; false when exhausted.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    fn uniform(e: f64) -> PrecisionAssignment {
        PrecisionAssignment::uniform(e).unwrap()
    }

    #[test]
    fn table1_full_histories_select_one_agent() {
        // Every agent pair pools a violation, so the maximum is a
        // singleton; the tie-break picks A.
        let ds = testkit::table1_dataset();
        let e = uniform(1.0);
        let problem = LsProblem::all_agents(&ds, &e, None);
        let sol = solve_ls_exact(&problem).unwrap();
        assert_eq!(sol.selected, vec!["A".to_string()]);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.certificate_satisfied);
        assert!(sol.excluded_infeasible.is_empty());
    }

    #[test]
    fn table1_draw_with_x_pools_two_agents() {
        let ds = testkit::table1_dataset();
        let e = uniform(1.0);
        // Synthetic draw {x, z, w}.
        let draw = ds.subset_dataset(&[0, 2, 3]).unwrap();
        let problem = LsProblem::all_agents(&draw, &e, None);
        let sol = solve_ls_exact(&problem).unwrap();
        assert_eq!(sol.cardinality(), 2);
        assert_eq!(sol.selected, vec!["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn singleton_feasible_and_infeasible() {
        let ds = testkit::mutual_strict_pair();
        let e = uniform(1.0);
        let problem = LsProblem {
            dataset: &ds,
            e: &e,
            agents: vec!["a".into()],
            time_limit: None,
        };
        let sol = solve_ls_bruteforce(&problem).unwrap();
        assert_eq!(sol.selected, vec!["a".to_string()]);

        // An agent owning both conflicting observations violates on its own.
        let both = Dataset::new(
            ds.good_ids().to_vec(),
            ds.observations()
                .iter()
                .cloned()
                .map(|mut o| {
                    o.obs_id = format!("{}-{}", o.agent_id, o.obs_id);
                    o.agent_id = "solo".into();
                    o
                })
                .collect(),
        )
        .unwrap();
        let problem = LsProblem::all_agents(&both, &e, None);
        let sol = solve_ls_bruteforce(&problem).unwrap();
        assert!(sol.selected.is_empty());
        assert_eq!(sol.excluded_infeasible, vec!["solo".to_string()]);
        let sol = solve_ls_exact(&problem).unwrap();
        assert!(sol.selected.is_empty());
        assert_eq!(sol.excluded_infeasible, vec!["solo".to_string()]);
    }

    #[test]
    fn two_incompatible_agents_pick_lexicographically_first() {
        let ds = testkit::mutual_strict_pair();
        let e = uniform(1.0);
        let problem = LsProblem::all_agents(&ds, &e, None);
        let exact = solve_ls_exact(&problem).unwrap();
        let brute = solve_ls_bruteforce(&problem).unwrap();
        assert_eq!(exact.selected, vec!["a".to_string()]);
        assert_eq!(brute.selected, exact.selected);
    }

    #[test]
    fn six_agent_max_subset() {
        let ds = testkit::six_agent_dataset();
        let e = uniform(1.0);
        let problem = LsProblem::all_agents(&ds, &e, None);
        let sol = solve_ls_exact(&problem).unwrap();
        assert_eq!(
            sol.selected,
            vec!["1".to_string(), "2".into(), "5".into(), "6".into()]
        );
    }

    #[test]
    fn oracle_equivalence_on_random_instances() {
        for seed in 0..40u64 {
            let ds = testkit::random_dataset(seed, 6, 3, 3);
            let e = uniform(if seed % 2 == 0 { 1.0 } else { 0.9 });
            let problem = LsProblem::all_agents(&ds, &e, None);
            let exact = solve_ls_exact(&problem).unwrap();
            let brute = solve_ls_bruteforce(&problem).unwrap();
            assert_eq!(exact.selected, brute.selected, "seed {seed}");
            assert_eq!(exact.status, SolveStatus::Optimal);
        }
    }

    #[test]
    fn e_monotonicity_of_the_optimum() {
        // Lower e relaxes the relations, so the optimum cannot shrink.
        for seed in 100..120u64 {
            let ds = testkit::random_dataset(seed, 6, 2, 3);
            let high = uniform(1.0);
            let low = uniform(0.85);
            let sol_high =
                solve_ls_exact(&LsProblem::all_agents(&ds, &high, None)).unwrap();
            let sol_low = solve_ls_exact(&LsProblem::all_agents(&ds, &low, None)).unwrap();
            assert!(
                sol_low.cardinality() >= sol_high.cardinality(),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn maximality_certificate_on_small_instances() {
        for seed in 200..215u64 {
            let ds = testkit::random_dataset(seed, 5, 2, 3);
            let e = uniform(1.0);
            let problem = LsProblem::all_agents(&ds, &e, None);
            let sol = solve_ls_exact(&problem).unwrap();
            let pool = AgentPool::new(&ds, &e, &problem.agents).unwrap();
            let selected_pos: Vec<usize> = sol
                .selected
                .iter()
                .map(|a| pool.agents.iter().position(|x| x == a).unwrap())
                .collect();
            for (pos, agent) in pool.agents.iter().enumerate() {
                if sol.selected.contains(agent) {
                    continue;
                }
                let mut extended = selected_pos.clone();
                extended.push(pos);
                extended.sort_unstable();
                assert!(
                    pool.check_agents(&extended).is_some(),
                    "seed {seed}: adding {agent} keeps the pool feasible, not maximal"
                );
            }
        }
    }

    #[test]
    fn empty_agent_set_is_an_error() {
        let ds = testkit::table1_dataset();
        let e = uniform(1.0);
        let problem = LsProblem {
            dataset: &ds,
            e: &e,
            agents: vec![],
            time_limit: None,
        };
        assert!(solve_ls_exact(&problem).is_err());
    }

    use crate::data::Dataset;
}
