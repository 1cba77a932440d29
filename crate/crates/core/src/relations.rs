//! Revealed-preference relations and GARP checking.
//!
//! The weak relation holds between observations `n` and `k` when `n`'s
//! deflated expenditure still covers `k`'s bundle at `n`'s prices
//! (`e^n p^n.q^n >= p^n.q^k`) or the bundles coincide; the strict relation
//! requires the budget inequality to hold strictly. A dataset violates
//! GARP_e exactly when some weak chain is closed by a strict back-relation,
//! i.e. when a strongly connected component of the weak digraph contains a
//! strict edge.

use std::collections::BTreeSet;

use crate::data::{bundles_equal, dot, Dataset, PrecisionAssignment};
use crate::error::Result;

/// Dense square boolean matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BoolMatrix {
    n: usize,
    data: Vec<bool>,
}

impl BoolMatrix {
    pub fn new(n: usize) -> Self {
        BoolMatrix {
            n,
            data: vec![false; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i * self.n + j] = value;
    }

    /// Transitive closure by iterated boolean propagation (Floyd–Warshall).
    pub fn transitive_closure(&self) -> BoolMatrix {
        let n = self.n;
        let mut c = self.clone();
        for k in 0..n {
            for i in 0..n {
                if c.get(i, k) {
                    for j in 0..n {
                        if c.get(k, j) {
                            c.set(i, j, true);
                        }
                    }
                }
            }
        }
        c
    }
}

/// Weak/strict direct relations over a set of observations, plus the
/// transitive closure of the weak relation. Matrix indices refer to
/// positions in `obs_indices`.
#[derive(Debug, Clone)]
pub struct RelationGraph {
    /// Global observation indices this graph is built over, ascending.
    pub obs_indices: Vec<usize>,
    pub weak: BoolMatrix,
    pub strict: BoolMatrix,
    pub closure: BoolMatrix,
}

/// Weak/strict relations without the closure; the working representation
/// shared by the solvers.
#[derive(Debug, Clone)]
pub(crate) struct Relations {
    pub obs_indices: Vec<usize>,
    pub weak: BoolMatrix,
    pub strict: BoolMatrix,
}

impl Relations {
    /// Builds relations over `subset` (all observations when `None`).
    pub fn build(
        dataset: &Dataset,
        e: &PrecisionAssignment,
        subset: Option<&[usize]>,
    ) -> Result<Relations> {
        let obs_indices = match subset {
            Some(s) => dataset.check_subset(s)?,
            None => (0..dataset.len()).collect(),
        };
        let tol = dataset.tolerance();
        let m = obs_indices.len();
        let mut weak = BoolMatrix::new(m);
        let mut strict = BoolMatrix::new(m);
        // Deflated own expenditures e^n p^n.q^n.
        let mut deflated = Vec::with_capacity(m);
        for &gi in &obs_indices {
            let obs = dataset.obs(gi);
            deflated.push(e.level_for(obs)? * dataset.expenditure(gi));
        }
        for (a, &ga) in obs_indices.iter().enumerate() {
            let oa = dataset.obs(ga);
            for (b, &gb) in obs_indices.iter().enumerate() {
                let ob = dataset.obs(gb);
                let cost = if a == b {
                    dataset.expenditure(ga)
                } else {
                    dot(&oa.prices, &ob.quantities)
                };
                let equal = a == b || bundles_equal(&oa.quantities, &ob.quantities, tol);
                // The bundle-equality clause contributes a weak edge only;
                // a strict self-relation would make every dataset violate
                // GARP, so strictness comes from the budget inequality alone.
                weak.set(a, b, deflated[a] >= cost - tol || equal);
                strict.set(a, b, deflated[a] > cost + tol);
            }
        }
        Ok(Relations {
            obs_indices,
            weak,
            strict,
        })
    }

    /// Strongly connected components of the weak digraph (Tarjan, iterative).
    /// Returns a component id per matrix index.
    pub fn weak_sccs(&self) -> Vec<usize> {
        tarjan_scc(self.weak.size(), |v| {
            (0..self.weak.size()).filter(move |&w| w != v && self.weak.get(v, w))
        })
    }

    /// Finds a GARP violation: a strict edge inside a weak SCC, returned as
    /// an elementary cycle. Scan order is deterministic.
    pub fn find_violation(&self, dataset: &Dataset) -> Option<ViolationCycle> {
        let members: Vec<usize> = (0..self.weak.size()).collect();
        self.find_violation_among(&members)
            .map(|(path, strict_edge)| {
                let obs = path.iter().map(|&i| self.obs_indices[i]).collect();
                ViolationCycle::new(dataset, obs, strict_edge)
            })
    }

    /// Violation search restricted to the subgraph induced by `members`
    /// (matrix indices). Returns the cycle as matrix indices plus the
    /// strict-edge position; the cycle uses member observations only.
    pub(crate) fn find_violation_among(&self, members: &[usize]) -> Option<(Vec<usize>, usize)> {
        let n = members.len();
        let scc = tarjan_scc(n, |l| {
            let v = members[l];
            members
                .iter()
                .enumerate()
                .filter(move |&(_, &w)| w != v && self.weak.get(v, w))
                .map(|(lw, _)| lw)
                .collect::<Vec<_>>()
                .into_iter()
        });
        for lk in 0..n {
            for ln in 0..n {
                if ln != lk
                    && self.strict.get(members[lk], members[ln])
                    && scc[lk] == scc[ln]
                {
                    // Weak path n -> ... -> k inside the pool, closed by
                    // the strict edge k -> n.
                    let path = self
                        .weak_path_among(members, ln, lk)
                        .expect("same SCC implies a path");
                    let cycle: Vec<usize> = path.iter().map(|&l| members[l]).collect();
                    let strict_edge = cycle.len() - 1;
                    return Some((cycle, strict_edge));
                }
            }
        }
        None
    }

    /// Shortest weak path between local indices within `members`, by BFS,
    /// ignoring self-loops.
    fn weak_path_among(&self, members: &[usize], from: usize, to: usize) -> Option<Vec<usize>> {
        let n = members.len();
        if from == to {
            return Some(vec![from]);
        }
        let mut pred = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        pred[from] = from;
        queue.push_back(from);
        while let Some(v) = queue.pop_front() {
            for w in 0..n {
                if w != v && self.weak.get(members[v], members[w]) && pred[w] == usize::MAX {
                    pred[w] = v;
                    if w == to {
                        let mut path = vec![to];
                        let mut cur = to;
                        while cur != from {
                            cur = pred[cur];
                            path.push(cur);
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(w);
                }
            }
        }
        None
    }
}

/// Iterative Tarjan SCC over a neighbor function.
pub(crate) fn tarjan_scc<F, I>(n: usize, neighbors: F) -> Vec<usize>
where
    F: Fn(usize) -> I,
    I: Iterator<Item = usize>,
{
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp = vec![UNSET; n];
    let mut next_index = 0usize;
    let mut next_comp = 0usize;

    // Explicit DFS stack: (node, neighbor iterator state).
    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        let mut call_stack: Vec<(usize, I)> = Vec::new();
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        call_stack.push((root, neighbors(root)));
        while let Some((v, it)) = call_stack.last_mut() {
            let v = *v;
            if let Some(w) = it.next() {
                if index[w] == UNSET {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call_stack.push((w, neighbors(w)));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                call_stack.pop();
                if let Some((parent, _)) = call_stack.last() {
                    let parent = *parent;
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// An elementary weak cycle containing at least one strict edge; the
/// witness object for a GARP violation.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationCycle {
    /// Global observation indices `t_1, ..., t_M`, `M >= 2`. Consecutive
    /// pairs are weak edges, and the edge at `strict_edge` is strict.
    pub obs_indices: Vec<usize>,
    /// Position `i` such that the edge `obs[i] -> obs[(i+1) % M]` is strict.
    pub strict_edge: usize,
    /// Owning agents of the observations on the cycle.
    pub agents: BTreeSet<String>,
    /// `(agent_id, obs_id)` pairs along the cycle, for reporting.
    pub obs_ids: Vec<(String, String)>,
}

impl ViolationCycle {
    pub(crate) fn new(dataset: &Dataset, obs_indices: Vec<usize>, strict_edge: usize) -> Self {
        debug_assert!(obs_indices.len() >= 2);
        let agents = obs_indices
            .iter()
            .map(|&i| dataset.obs(i).agent_id.clone())
            .collect();
        let obs_ids = obs_indices
            .iter()
            .map(|&i| {
                let o = dataset.obs(i);
                (o.agent_id.clone(), o.obs_id.clone())
            })
            .collect();
        ViolationCycle {
            obs_indices,
            strict_edge,
            agents,
            obs_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.obs_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs_indices.is_empty()
    }
}

/// Outcome of a GARP_e check.
#[derive(Debug, Clone, PartialEq)]
pub enum GarpOutcome {
    Satisfied,
    Violated { witness: ViolationCycle },
}

impl GarpOutcome {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, GarpOutcome::Satisfied)
    }
}

/// Builds the weak/strict relations and the transitive closure of the weak
/// relation over `subset` (all observations when `None`).
pub fn build_relations(
    dataset: &Dataset,
    e: &PrecisionAssignment,
    subset: Option<&[usize]>,
) -> Result<RelationGraph> {
    let rel = Relations::build(dataset, e, subset)?;
    let closure = rel.weak.transitive_closure();
    Ok(RelationGraph {
        obs_indices: rel.obs_indices,
        weak: rel.weak,
        strict: rel.strict,
        closure,
    })
}

/// Checks GARP_e on `subset` (all observations when `None`); a violation
/// comes with an elementary witness cycle.
pub fn garp_check(
    dataset: &Dataset,
    e: &PrecisionAssignment,
    subset: Option<&[usize]>,
) -> Result<GarpOutcome> {
    let rel = Relations::build(dataset, e, subset)?;
    Ok(match rel.find_violation(dataset) {
        Some(witness) => GarpOutcome::Violated { witness },
        None => GarpOutcome::Satisfied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;

    fn dataset(obs: &[(&str, &str, &[f64], &[f64])]) -> Dataset {
        let k = obs[0].2.len();
        let goods = (0..k).map(|i| format!("g{i}")).collect();
        let observations = obs
            .iter()
            .map(|(a, o, p, q)| Observation {
                agent_id: a.to_string(),
                obs_id: o.to_string(),
                prices: p.to_vec(),
                quantities: q.to_vec(),
            })
            .collect();
        Dataset::new(goods, observations).unwrap()
    }

    #[test]
    fn single_observation_is_reflexive_only() {
        let ds = dataset(&[("a", "1", &[1.0, 2.0], &[1.0, 3.0])]);
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let rel = build_relations(&ds, &e, None).unwrap();
        assert!(rel.weak.get(0, 0));
        assert!(!rel.strict.get(0, 0));
        assert!(garp_check(&ds, &e, None).unwrap().is_satisfied());
    }

    #[test]
    fn mutual_strict_pair_from_budget_inequalities() {
        // p1.q1 = 7, p1.q2 = 5; p2.q2 = 7, p2.q1 = 5: strict both ways.
        let ds = dataset(&[
            ("a", "1", &[1.0, 2.0], &[1.0, 3.0]),
            ("b", "1", &[2.0, 1.0], &[3.0, 1.0]),
        ]);
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let rel = build_relations(&ds, &e, None).unwrap();
        assert!(rel.strict.get(0, 1) && rel.weak.get(0, 1));
        assert!(rel.strict.get(1, 0) && rel.weak.get(1, 0));
        let out = garp_check(&ds, &e, None).unwrap();
        match out {
            GarpOutcome::Violated { witness } => {
                assert_eq!(witness.len(), 2);
                assert_eq!(
                    witness.agents,
                    ["a", "b"].iter().map(|s| s.to_string()).collect()
                );
            }
            GarpOutcome::Satisfied => panic!("expected a violation"),
        }
    }

    #[test]
    fn deflating_to_half_removes_all_off_diagonal_edges() {
        let ds = dataset(&[
            ("a", "1", &[1.0, 2.0], &[1.0, 3.0]),
            ("b", "1", &[2.0, 1.0], &[3.0, 1.0]),
        ]);
        let e = PrecisionAssignment::uniform(0.5).unwrap();
        let rel = build_relations(&ds, &e, None).unwrap();
        assert!(!rel.weak.get(0, 1) && !rel.weak.get(1, 0));
        assert!(garp_check(&ds, &e, None).unwrap().is_satisfied());
    }

    #[test]
    fn identical_bundles_stay_weakly_related_at_low_e() {
        // Same bundle twice: the equality clause keeps the weak edges even
        // when deflation kills the budget inequality, and never adds strict
        // edges, so GARP holds.
        let ds = dataset(&[
            ("a", "1", &[1.0, 1.0], &[2.0, 2.0]),
            ("a", "2", &[2.0, 1.0], &[2.0, 2.0]),
        ]);
        let e = PrecisionAssignment::uniform(0.5).unwrap();
        let rel = build_relations(&ds, &e, None).unwrap();
        assert!(rel.weak.get(0, 1) && rel.weak.get(1, 0));
        assert!(!rel.strict.get(0, 1) && !rel.strict.get(1, 0));
        assert!(garp_check(&ds, &e, None).unwrap().is_satisfied());
    }

    #[test]
    fn closure_is_idempotent_and_contains_weak() {
        let ds = dataset(&[
            ("a", "1", &[1.0, 1.0], &[3.2, 0.0]),
            ("a", "2", &[1.4, 1.0], &[0.0, 4.0]),
            ("b", "1", &[2.0, 1.0], &[2.0, 1.0]),
        ]);
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let rel = build_relations(&ds, &e, None).unwrap();
        let again = rel.closure.transitive_closure();
        assert_eq!(again, rel.closure);
        for i in 0..3 {
            for j in 0..3 {
                if rel.weak.get(i, j) {
                    assert!(rel.closure.get(i, j));
                }
                if rel.strict.get(i, j) {
                    assert!(rel.weak.get(i, j), "strict must imply weak");
                }
            }
        }
    }

    #[test]
    fn subset_errors() {
        let ds = dataset(&[("a", "1", &[1.0, 2.0], &[1.0, 3.0])]);
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        assert!(build_relations(&ds, &e, Some(&[])).is_err());
        assert!(build_relations(&ds, &e, Some(&[5])).is_err());
        assert!(build_relations(&ds, &e, Some(&[0, 0])).is_err());
    }

    #[test]
    fn three_cycle_violation_is_detected_via_chain() {
        // Personal-good construction: obs i consumes only good i. Edges:
        // 0 -> 1 strict, 1 -> 2 tie (weak), 2 -> 0 tie (weak); no reverse
        // edges. The chain 1 -> 2 -> 0 plus strict 0 -> 1 violates GARP.
        let ds = dataset(&[
            ("a", "1", &[1.0, 0.5, 2.0], &[1.0, 0.0, 0.0]),
            ("b", "1", &[2.0, 1.0, 1.0], &[0.0, 1.0, 0.0]),
            ("c", "1", &[1.0, 2.0, 1.0], &[0.0, 0.0, 1.0]),
        ]);
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let rel = build_relations(&ds, &e, None).unwrap();
        assert!(rel.strict.get(0, 1));
        assert!(rel.weak.get(1, 2) && !rel.strict.get(1, 2));
        assert!(rel.weak.get(2, 0) && !rel.strict.get(2, 0));
        assert!(!rel.weak.get(1, 0) && !rel.weak.get(0, 2) && !rel.weak.get(2, 1));
        match garp_check(&ds, &e, None).unwrap() {
            GarpOutcome::Violated { witness } => {
                assert_eq!(witness.len(), 3);
                let m = witness.len();
                // The designated closing edge is strict.
                assert_eq!(witness.strict_edge, m - 1);
            }
            GarpOutcome::Satisfied => panic!("expected violation"),
        }
    }
}
