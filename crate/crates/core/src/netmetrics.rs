//! Structural statistics of threshold networks and community detection.
//!
//! Conventions: the local clustering coefficient of a node with degree
//! below 2 is 0 and is included in the average; the average path length is
//! computed within the largest connected component only. Communities come
//! from modularity-maximizing agglomeration (Louvain-style) on the
//! non-isolated subgraph, with ascending-id traversal and seed-driven tie
//! breaking, so the output is deterministic given `(H, seed)`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::simnet::ThresholdNetwork;

/// Summary statistics of one threshold network.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkStats {
    pub nodes: usize,
    pub edges: usize,
    pub average_degree: f64,
    pub isolated_nodes: usize,
    pub clustering_coefficient: f64,
    /// Mean shortest-path length over unordered pairs in the largest
    /// component; `None` when that component has fewer than 2 nodes.
    pub average_path_length: Option<f64>,
    pub components: usize,
    pub largest_component_share: f64,
}

fn adjacency_lists(h: &ThresholdNetwork) -> Vec<Vec<usize>> {
    let n = h.n();
    (0..n)
        .map(|i| (0..n).filter(|&j| h.linked(i, j)).collect())
        .collect()
}

/// Connected components by BFS; returns a component id per node.
fn components(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        comp[start] = next;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = next;
                    queue.push_back(w);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Computes the Table-style statistics of a network.
pub fn network_stats(h: &ThresholdNetwork) -> NetworkStats {
    let n = h.n();
    let adj = adjacency_lists(h);
    let degrees: Vec<usize> = adj.iter().map(Vec::len).collect();
    let edges = degrees.iter().sum::<usize>() / 2;
    let isolated = degrees.iter().filter(|&&d| d == 0).count();
    let average_degree = if n == 0 { 0.0 } else { 2.0 * edges as f64 / n as f64 };

    // Local clustering, degree < 2 contributing 0.
    let mut clustering_sum = 0.0;
    for v in 0..n {
        let d = degrees[v];
        if d < 2 {
            continue;
        }
        let mut closed = 0usize;
        for (ai, &a) in adj[v].iter().enumerate() {
            for &b in adj[v].iter().skip(ai + 1) {
                if h.linked(a, b) {
                    closed += 1;
                }
            }
        }
        clustering_sum += 2.0 * closed as f64 / (d * (d - 1)) as f64;
    }
    let clustering_coefficient = if n == 0 { 0.0 } else { clustering_sum / n as f64 };

    let comp = components(&adj);
    let n_components = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut sizes = vec![0usize; n_components];
    for &c in &comp {
        sizes[c] += 1;
    }
    // Largest component; ties resolved toward the lowest component id,
    // which is the one containing the smallest node.
    let largest = (0..n_components).max_by_key(|&c| (sizes[c], usize::MAX - c));
    let largest_size = largest.map_or(0, |c| sizes[c]);
    let largest_component_share = if n == 0 {
        0.0
    } else {
        largest_size as f64 / n as f64
    };

    // Mean shortest-path length inside the largest component (BFS from
    // every member).
    let average_path_length = largest.and_then(|c| {
        let members: Vec<usize> = (0..n).filter(|&v| comp[v] == c).collect();
        if members.len() < 2 {
            return None;
        }
        let mut total = 0u64;
        let mut pairs = 0u64;
        for &s in &members {
            let mut dist = vec![u32::MAX; n];
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if dist[w] == u32::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            for &t in &members {
                if t > s {
                    total += dist[t] as u64;
                    pairs += 1;
                }
            }
        }
        Some(total as f64 / pairs as f64)
    });

    NetworkStats {
        nodes: n,
        edges,
        average_degree,
        isolated_nodes: isolated,
        clustering_coefficient,
        average_path_length,
        components: n_components,
        largest_component_share,
    }
}

/// Community labels over the non-isolated nodes of a network.
#[derive(Debug, Clone, Serialize)]
pub struct CommunityAssignment {
    /// agent id -> community id (contiguous from 0). Isolated nodes are
    /// absent.
    pub communities: BTreeMap<String, usize>,
    pub modularity: f64,
    pub seed: u64,
    pub isolated_excluded: usize,
    /// Community id per node index; `None` for isolated nodes.
    #[serde(skip)]
    by_index: Vec<Option<usize>>,
}

impl CommunityAssignment {
    pub fn community_count(&self) -> usize {
        self.communities.values().copied().max().map_or(0, |c| c + 1)
    }

    pub fn of_index(&self, node: usize) -> Option<usize> {
        self.by_index[node]
    }
}

/// Louvain-style modularity maximization on the non-isolated subgraph.
///
/// Local moves scan nodes in ascending id order; when several candidate
/// communities tie on the best gain, the choice is drawn from the
/// seed-keyed stream. Errors on edgeless networks.
pub fn detect_communities(h: &ThresholdNetwork, seed: u64) -> Result<CommunityAssignment> {
    let n = h.n();
    let adj = adjacency_lists(h);
    let active: Vec<usize> = (0..n).filter(|&v| !adj[v].is_empty()).collect();
    if active.is_empty() {
        return Err(Error::InvalidInput(
            "community detection needs at least one edge".into(),
        ));
    }
    let isolated_excluded = n - active.len();
    let local_of: BTreeMap<usize, usize> = active
        .iter()
        .enumerate()
        .map(|(l, &g)| (g, l))
        .collect();

    // Weighted multigraph that survives aggregation rounds.
    let mut nodes: Vec<Vec<(usize, f64)>> = active
        .iter()
        .map(|&g| adj[g].iter().map(|&w| (local_of[&w], 1.0)).collect())
        .collect();
    let mut self_loops: Vec<f64> = vec![0.0; nodes.len()];
    // membership[level][node] tracks the merge history.
    let mut membership: Vec<Vec<usize>> = Vec::new();
    let two_m: f64 = 2.0 * active.iter().map(|&g| adj[g].len()).sum::<usize>() as f64 / 2.0;
    let mut rng = StreamKey::root(seed).with_label("communities").rng();

    loop {
        let k = nodes.len();
        let mut community: Vec<usize> = (0..k).collect();
        let degree: Vec<f64> = (0..k)
            .map(|v| nodes[v].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self_loops[v])
            .collect();
        let mut comm_degree = degree.clone();
        let mut improved = false;
        let mut moved = true;
        while moved {
            moved = false;
            for v in 0..k {
                let current = community[v];
                comm_degree[current] -= degree[v];
                // Weight to each neighboring community.
                let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
                for &(w, weight) in &nodes[v] {
                    if w != v {
                        *weights.entry(community[w]).or_insert(0.0) += weight;
                    }
                }
                let gain = |c: usize, w_in: f64| w_in - degree[v] * comm_degree[c] / two_m;
                let stay = weights.get(&current).copied().unwrap_or(0.0);
                let mut best = (current, gain(current, stay));
                let mut ties = Vec::new();
                for (&c, &w_in) in &weights {
                    let g = gain(c, w_in);
                    if g > best.1 + 1e-12 {
                        best = (c, g);
                        ties.clear();
                    } else if c != best.0 && (g - best.1).abs() <= 1e-12 {
                        ties.push(c);
                    }
                }
                let target = if !ties.is_empty() && best.1 > gain(current, stay) + 1e-12 {
                    // Seeded tie break among equally good targets.
                    let mut pool = ties;
                    pool.push(best.0);
                    pool.sort_unstable();
                    pool[rng.gen_range(0..pool.len())]
                } else {
                    best.0
                };
                if target != current {
                    community[v] = target;
                    moved = true;
                    improved = true;
                }
                comm_degree[community[v]] += degree[v];
            }
        }
        // Renumber communities contiguously by first appearance.
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in &community {
            let next = remap.len();
            remap.entry(c).or_insert(next);
        }
        let community: Vec<usize> = community.iter().map(|c| remap[c]).collect();
        let n_comms = remap.len();
        membership.push(community.clone());
        if !improved || n_comms == nodes.len() {
            break;
        }
        // Aggregate communities into super-nodes.
        let mut new_nodes: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_comms];
        let mut new_self = vec![0.0; n_comms];
        for v in 0..k {
            let cv = community[v];
            new_self[cv] += self_loops[v];
            for &(w, weight) in &nodes[v] {
                let cw = community[w];
                if cv == cw {
                    // Each internal edge appears from both endpoints.
                    new_self[cv] += weight / 2.0;
                } else {
                    *new_nodes[cv].entry(cw).or_insert(0.0) += weight;
                }
            }
        }
        nodes = new_nodes
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect();
        self_loops = new_self;
    }

    // Flatten the merge history to per-node labels.
    let mut labels: Vec<usize> = (0..active.len()).collect();
    for level in &membership {
        for l in labels.iter_mut() {
            *l = level[*l];
        }
    }
    // Contiguous ids ordered by first appearance over ascending nodes.
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in &labels {
        let next = remap.len();
        remap.entry(l).or_insert(next);
    }
    let labels: Vec<usize> = labels.iter().map(|l| remap[l]).collect();

    let mut by_index: Vec<Option<usize>> = vec![None; n];
    let mut communities = BTreeMap::new();
    for (l, &g) in active.iter().enumerate() {
        by_index[g] = Some(labels[l]);
        communities.insert(h.agent_ids()[g].clone(), labels[l]);
    }
    let modularity = modularity_of(h, &by_index);
    Ok(CommunityAssignment {
        communities,
        modularity,
        seed,
        isolated_excluded,
        by_index,
    })
}

/// Newman modularity of an assignment over the network's edges (isolated
/// nodes contribute nothing).
pub fn modularity_of(h: &ThresholdNetwork, by_index: &[Option<usize>]) -> f64 {
    let n = h.n();
    let m = (0..n)
        .map(|v| (0..n).filter(|&w| h.linked(v, w)).count())
        .sum::<usize>() as f64
        / 2.0;
    if m == 0.0 {
        return 0.0;
    }
    let n_comms = by_index.iter().flatten().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; n_comms];
    let mut degree = vec![0.0; n_comms];
    for v in 0..n {
        let Some(cv) = by_index[v] else { continue };
        for w in 0..n {
            if h.linked(v, w) {
                degree[cv] += 1.0;
                if by_index[w] == Some(cv) {
                    internal[cv] += 1.0;
                }
            }
        }
    }
    (0..n_comms)
        .map(|c| internal[c] / (2.0 * m) - (degree[c] / (2.0 * m)).powi(2))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(n: usize, edges: &[(usize, usize)]) -> ThresholdNetwork {
        let ids = (0..n).map(|i| format!("n{i:02}")).collect();
        ThresholdNetwork::from_edges(ids, 0.1, edges)
    }

    #[test]
    fn triangle_stats() {
        let h = net(3, &[(0, 1), (1, 2), (0, 2)]);
        let s = network_stats(&h);
        assert_eq!(s.nodes, 3);
        assert_eq!(s.edges, 3);
        assert!((s.average_degree - 2.0).abs() < 1e-12);
        assert!((s.clustering_coefficient - 1.0).abs() < 1e-12);
        assert_eq!(s.average_path_length, Some(1.0));
        assert_eq!(s.components, 1);
        assert_eq!(s.isolated_nodes, 0);
    }

    #[test]
    fn four_node_star_stats() {
        let h = net(4, &[(0, 1), (0, 2), (0, 3)]);
        let s = network_stats(&h);
        assert!((s.average_degree - 1.5).abs() < 1e-12);
        assert_eq!(s.clustering_coefficient, 0.0);
        assert_eq!(s.average_path_length, Some(1.5));
    }

    #[test]
    fn empty_and_edgeless_graphs() {
        let h = net(3, &[]);
        let s = network_stats(&h);
        assert_eq!(s.edges, 0);
        assert_eq!(s.isolated_nodes, 3);
        assert_eq!(s.average_path_length, None);
        assert_eq!(s.components, 3);
        assert!(detect_communities(&h, 1).is_err());
    }

    #[test]
    fn degree_sum_identity() {
        let h = net(6, &[(0, 1), (1, 2), (3, 4)]);
        let s = network_stats(&h);
        let degree_sum: usize = (0..6).map(|v| h.degree(v)).sum();
        assert_eq!(degree_sum, 2 * s.edges);
        assert!((s.average_degree - 2.0 * s.edges as f64 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn two_disjoint_triangles_form_two_communities() {
        let h = net(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let c = detect_communities(&h, 3).unwrap();
        assert_eq!(c.community_count(), 2);
        assert_eq!(c.of_index(0), c.of_index(1));
        assert_eq!(c.of_index(0), c.of_index(2));
        assert_eq!(c.of_index(3), c.of_index(4));
        assert_ne!(c.of_index(0), c.of_index(3));
        assert!((c.modularity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_clique_is_one_community() {
        let mut edges = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((i, j));
            }
        }
        let h = net(5, &edges);
        let c = detect_communities(&h, 5).unwrap();
        assert_eq!(c.community_count(), 1);
    }

    #[test]
    fn bridged_cliques_split_at_the_bridge() {
        let mut edges = Vec::new();
        for base in [0usize, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push((base + i, base + j));
                }
            }
        }
        edges.push((4, 5)); // bridge
        let h = net(10, &edges);
        let c = detect_communities(&h, 11).unwrap();
        assert_eq!(c.community_count(), 2);
        for v in 0..5 {
            assert_eq!(c.of_index(v), c.of_index(0));
        }
        for v in 5..10 {
            assert_eq!(c.of_index(v), c.of_index(5));
        }
        // Modularity comparison against the merged alternative.
        let merged: Vec<Option<usize>> = vec![Some(0); 10];
        assert!(c.modularity > modularity_of(&h, &merged));
    }

    #[test]
    fn returned_modularity_beats_single_community() {
        let h = net(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let c = detect_communities(&h, 9).unwrap();
        let single: Vec<Option<usize>> = vec![Some(0); 6];
        assert!(c.modularity >= modularity_of(&h, &single));
    }

    #[test]
    fn isolated_nodes_are_excluded_from_communities() {
        let h = net(5, &[(0, 1), (1, 2), (0, 2)]);
        let c = detect_communities(&h, 2).unwrap();
        assert_eq!(c.isolated_excluded, 2);
        assert_eq!(c.of_index(3), None);
        assert_eq!(c.of_index(4), None);
        assert_eq!(c.communities.len(), 3);
    }

    #[test]
    fn detection_is_deterministic_given_seed() {
        let mut edges = Vec::new();
        // Two loose clusters with cross links.
        for i in 0..6 {
            for j in i + 1..6 {
                if (i < 3) == (j < 3) {
                    edges.push((i, j));
                }
            }
        }
        edges.push((0, 3));
        edges.push((2, 5));
        let h = net(6, &edges);
        let a = detect_communities(&h, 42).unwrap();
        let b = detect_communities(&h, 42).unwrap();
        assert_eq!(a.communities, b.communities);
        assert_eq!(a.modularity.to_bits(), b.modularity.to_bits());
    }

    #[test]
    fn permutation_equivariance() {
        // Relabeling nodes permutes community membership but preserves the
        // partition structure and modularity.
        let edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
        let h1 = net(6, &edges);
        // Swap nodes 0 and 3 (same automorphism class).
        let swapped: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(a, b)| {
                let f = |v: usize| match v {
                    0 => 3,
                    3 => 0,
                    x => x,
                };
                (f(a), f(b))
            })
            .collect();
        let h2 = net(6, &swapped);
        let c1 = detect_communities(&h1, 7).unwrap();
        let c2 = detect_communities(&h2, 7).unwrap();
        assert_eq!(c1.community_count(), c2.community_count());
        assert!((c1.modularity - c2.modularity).abs() < 1e-12);
        // Node 1's community mates are {0, 2} in h1 and {2, 3} in h2.
        assert_eq!(c2.of_index(1), c2.of_index(3));
        assert_eq!(c2.of_index(1), c2.of_index(2));
    }
}
