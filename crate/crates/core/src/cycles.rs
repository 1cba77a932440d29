//! Enumeration of violating cycles: elementary circuits of the weak
//! digraph that carry at least one strict edge.
//!
//! Johnson-style rooted search with blocked sets, restricted to strongly
//! connected components that contain a strict edge (no other component can
//! hold a violating cycle). Enumeration can be truncated by a cycle budget
//! or a deadline; truncation is reported, not an error.

use std::time::{Duration, Instant};

use crate::data::{Dataset, PrecisionAssignment};
use crate::error::{Error, Result};
use crate::relations::{Relations, ViolationCycle};

/// Result of cycle enumeration. `complete` is false when the search was
/// truncated by `max_cycles` or the time limit.
#[derive(Debug, Clone)]
pub struct CycleEnumeration {
    pub cycles: Vec<ViolationCycle>,
    pub complete: bool,
}

/// Enumerates elementary violating cycles over `subset` (all observations
/// when `None`), stopping after `max_cycles` kept cycles or when
/// `time_limit` expires.
pub fn enumerate_violating_cycles(
    dataset: &Dataset,
    e: &PrecisionAssignment,
    subset: Option<&[usize]>,
    max_cycles: usize,
    time_limit: Option<Duration>,
) -> Result<CycleEnumeration> {
    if max_cycles == 0 {
        return Err(Error::InvalidInput("max_cycles must be at least 1".into()));
    }
    let rel = Relations::build(dataset, e, subset)?;
    let deadline = time_limit.map(|d| Instant::now() + d);
    let mut enumerator = Enumerator {
        rel: &rel,
        dataset,
        max_cycles,
        deadline,
        cycles: Vec::new(),
        truncated: false,
    };
    enumerator.run();
    Ok(CycleEnumeration {
        complete: !enumerator.truncated,
        cycles: enumerator.cycles,
    })
}

struct Enumerator<'a> {
    rel: &'a Relations,
    dataset: &'a Dataset,
    max_cycles: usize,
    deadline: Option<Instant>,
    cycles: Vec<ViolationCycle>,
    truncated: bool,
}

impl<'a> Enumerator<'a> {
    fn run(&mut self) {
        let m = self.rel.weak.size();
        let scc = self.rel.weak_sccs();
        // Components that contain a strict edge between distinct members.
        let n_comp = scc.iter().copied().max().map_or(0, |c| c + 1);
        let mut has_strict = vec![false; n_comp];
        for u in 0..m {
            for v in 0..m {
                if u != v && self.rel.strict.get(u, v) && scc[u] == scc[v] {
                    has_strict[scc[u]] = true;
                }
            }
        }
        for comp in 0..n_comp {
            if !has_strict[comp] || self.truncated {
                continue;
            }
            let members: Vec<usize> = (0..m).filter(|&v| scc[v] == comp).collect();
            self.enumerate_component(&members);
        }
    }

    /// Runs rooted Johnson search within one component. `members` are
    /// matrix indices in ascending order; each circuit is reported once,
    /// rooted at its smallest member.
    fn enumerate_component(&mut self, members: &[usize]) {
        let n = members.len();
        if n < 2 {
            return;
        }
        let local_of: std::collections::HashMap<usize, usize> =
            members.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        // Local adjacency without self-loops.
        let adj: Vec<Vec<usize>> = members
            .iter()
            .map(|&g| {
                members
                    .iter()
                    .filter(|&&h| h != g && self.rel.weak.get(g, h))
                    .map(|&h| local_of[&h])
                    .collect()
            })
            .collect();
        for root in 0..n {
            if self.truncated {
                return;
            }
            let mut blocked = vec![false; n];
            let mut b_sets: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut path = Vec::new();
            // Vertices below the root belong to circuits already rooted
            // elsewhere.
            for v in 0..root {
                blocked[v] = true;
            }
            self.circuit(root, root, &adj, members, &mut blocked, &mut b_sets, &mut path);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn circuit(
        &mut self,
        v: usize,
        root: usize,
        adj: &[Vec<usize>],
        members: &[usize],
        blocked: &mut Vec<bool>,
        b_sets: &mut Vec<Vec<usize>>,
        path: &mut Vec<usize>,
    ) -> bool {
        if self.truncated {
            return false;
        }
        if let Some(deadline) = self.deadline {
            if Instant::now() >= deadline {
                self.truncated = true;
                return false;
            }
        }
        let mut found = false;
        path.push(v);
        blocked[v] = true;
        for &w in &adj[v] {
            if self.truncated {
                break;
            }
            if w == root {
                self.report(path, members);
                found = true;
            } else if w > root && !blocked[w] {
                if self.circuit(w, root, adj, members, blocked, b_sets, path) {
                    found = true;
                }
            }
        }
        if found {
            unblock(v, blocked, b_sets);
        } else {
            for &w in &adj[v] {
                if w >= root && !b_sets[w].contains(&v) {
                    b_sets[w].push(v);
                }
            }
        }
        path.pop();
        found
    }

    /// Keeps the circuit if it carries a strict edge.
    fn report(&mut self, path: &[usize], members: &[usize]) {
        let m = path.len();
        if m < 2 {
            return; // self-loops are not violating cycles
        }
        let mut strict_edge = None;
        for i in 0..m {
            let a = members[path[i]];
            let b = members[path[(i + 1) % m]];
            if self.rel.strict.get(a, b) {
                strict_edge = Some(i);
                break;
            }
        }
        if let Some(strict_edge) = strict_edge {
            let obs: Vec<usize> = path.iter().map(|&l| self.rel.obs_indices[members[l]]).collect();
            self.cycles.push(ViolationCycle::new(self.dataset, obs, strict_edge));
            if self.cycles.len() >= self.max_cycles {
                self.truncated = true;
            }
        }
    }
}

fn unblock(v: usize, blocked: &mut Vec<bool>, b_sets: &mut Vec<Vec<usize>>) {
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        if blocked[u] {
            blocked[u] = false;
            for w in std::mem::take(&mut b_sets[u]) {
                stack.push(w);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::garp_check;
    use crate::testkit;

    #[test]
    fn mutual_strict_pair_yields_exactly_one_two_cycle() {
        let ds = testkit::mutual_strict_pair();
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let out = enumerate_violating_cycles(&ds, &e, None, 100, None).unwrap();
        assert!(out.complete);
        assert_eq!(out.cycles.len(), 1);
        assert_eq!(out.cycles[0].len(), 2);
    }

    #[test]
    fn satisfied_dataset_has_no_cycles() {
        let ds = testkit::table1_dataset();
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        // Agent A alone is consistent.
        let subset = ds.obs_indices_of("A").unwrap().to_vec();
        assert!(garp_check(&ds, &e, Some(&subset)).unwrap().is_satisfied());
        let out = enumerate_violating_cycles(&ds, &e, Some(&subset), 100, None).unwrap();
        assert!(out.complete);
        assert!(out.cycles.is_empty());
    }

    #[test]
    fn money_pump_chain_yields_one_three_cycle() {
        let ds = testkit::money_pump_three_cycle();
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        assert!(!garp_check(&ds, &e, None).unwrap().is_satisfied());
        let out = enumerate_violating_cycles(&ds, &e, None, 100, None).unwrap();
        assert!(out.complete);
        assert_eq!(out.cycles.len(), 1);
        assert_eq!(out.cycles[0].len(), 3);
    }

    #[test]
    fn truncation_by_budget_is_flagged() {
        // Table-1 pooled data have several violating cycles.
        let ds = testkit::table1_dataset();
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let all = enumerate_violating_cycles(&ds, &e, None, 1000, None).unwrap();
        assert!(all.complete);
        assert!(all.cycles.len() >= 2);
        let some = enumerate_violating_cycles(&ds, &e, None, 1, None).unwrap();
        assert!(!some.complete);
        assert_eq!(some.cycles.len(), 1);
    }

    #[test]
    fn garp_and_enumeration_agree() {
        // Violated iff at least one cycle is found (when complete).
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        for seed in 0..30u64 {
            let ds = testkit::random_dataset(seed, 4, 2, 3);
            let garp = garp_check(&ds, &e, None).unwrap().is_satisfied();
            let cycles = enumerate_violating_cycles(&ds, &e, None, 10_000, None).unwrap();
            assert!(cycles.complete);
            assert_eq!(garp, cycles.cycles.is_empty(), "seed {seed}");
        }
    }
}
