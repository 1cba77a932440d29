//! Canonical fixtures and generators shared by unit, integration, and
//! acceptance tests. Not part of the stable API.

use rand::Rng;

use crate::data::{Dataset, Observation};
use crate::rng::StreamKey;

fn goods(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("g{i}")).collect()
}

pub fn obs(agent: &str, id: &str, p: &[f64], q: &[f64]) -> Observation {
    Observation {
        agent_id: agent.to_string(),
        obs_id: id.to_string(),
        prices: p.to_vec(),
        quantities: q.to_vec(),
    }
}

/// Three agents over two goods. Pairwise structure at `e = 1`:
///
/// - A's first decision `x` conflicts with C's `w` but pools with B's `z`;
/// - A's second decision `y` conflicts with `z` but pools with `w`;
/// - `z` and `w` always conflict;
/// - A's own history `{x, y}` is consistent.
///
/// With one decision drawn per agent the two possible synthetic datasets
/// are `{x, z, w}` and `{y, z, w}`, so A co-types with B in the first and
/// with C in the second while B and C never co-type.
pub fn table1_dataset() -> Dataset {
    Dataset::new(
        goods(2),
        vec![
            obs("A", "x", &[1.0, 1.0], &[3.2, 0.0]),
            obs("A", "y", &[1.4, 1.0], &[0.0, 4.0]),
            obs("B", "z", &[2.0, 1.0], &[2.0, 1.0]),
            obs("C", "w", &[1.0, 2.0], &[1.0, 2.0]),
        ],
    )
    .unwrap()
}

/// Two observations that strictly prefer each other's bundles: the minimal
/// GARP violation.
pub fn mutual_strict_pair() -> Dataset {
    Dataset::new(
        goods(2),
        vec![
            obs("a", "1", &[1.0, 2.0], &[1.0, 3.0]),
            obs("b", "1", &[2.0, 1.0], &[3.0, 1.0]),
        ],
    )
    .unwrap()
}

/// Three observations forming a single weak cycle `1 -> 2 -> 3 -> 1` with
/// exactly one strict edge (`1 -> 2`); no other off-diagonal relations.
pub fn money_pump_three_cycle() -> Dataset {
    Dataset::new(
        goods(3),
        vec![
            obs("a", "1", &[1.0, 0.5, 2.0], &[1.0, 0.0, 0.0]),
            obs("b", "1", &[2.0, 1.0, 1.0], &[0.0, 1.0, 0.0]),
            obs("c", "1", &[1.0, 2.0, 1.0], &[0.0, 0.0, 1.0]),
        ],
    )
    .unwrap()
}

/// Six agents, one observation each, built so the jointly rational subsets
/// are exactly the conflict-free sets with conflicts
/// `{1,4} {2,4} {3,4} {3,5} {3,6}`. Maximal rational subsets:
/// `{1,2,5,6}`, `{1,2,3}`, `{4,5,6}`. The greedy partition therefore has 3
/// blocks while the minimum partition has 2 (`{1,2,3}`, `{4,5,6}`).
///
/// Each agent consumes one unit of a personal good; cross-prices place the
/// other bundle strictly inside the budget for conflicting pairs (0.5) and
/// strictly outside otherwise (2.0), so all violating cycles are the five
/// mutual-strict 2-cycles.
pub fn six_agent_dataset() -> Dataset {
    let conflicts = [(0usize, 3usize), (1, 3), (2, 3), (2, 4), (2, 5)];
    let n = 6;
    let mut observations = Vec::new();
    for i in 0..n {
        let mut prices = vec![2.0; n];
        prices[i] = 1.0;
        for &(a, b) in &conflicts {
            if a == i {
                prices[b] = 0.5;
            }
            if b == i {
                prices[a] = 0.5;
            }
        }
        let mut quantities = vec![0.0; n];
        quantities[i] = 1.0;
        observations.push(obs(&format!("{}", i + 1), "1", &prices, &quantities));
    }
    Dataset::new(goods(n), observations).unwrap()
}

/// Random dataset for property tests: up to `max_agents` agents with up to
/// `max_obs` observations each over `k` goods. Prices in `[0.5, 2)`,
/// quantities in `[0, 4)` with one entry forced positive.
pub fn random_dataset(seed: u64, max_agents: usize, max_obs: usize, k: usize) -> Dataset {
    let mut rng = StreamKey::root(seed).with_label("testkit-dataset").rng();
    let n_agents = rng.gen_range(1..=max_agents);
    let mut observations = Vec::new();
    for a in 0..n_agents {
        let n_obs = rng.gen_range(1..=max_obs);
        for o in 0..n_obs {
            let prices: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
            let mut quantities: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..4.0)).collect();
            let force = rng.gen_range(0..k);
            quantities[force] = rng.gen_range(0.5..4.0);
            observations.push(obs(&format!("a{a:02}"), &format!("o{o}"), &prices, &quantities));
        }
    }
    Dataset::new(goods(k), observations).unwrap()
}

/// Random dataset whose agents are each internally consistent: every agent
/// maximizes its own Cobb-Douglas utility, so its own history satisfies
/// GARP_1 while cross-agent violations stay plentiful.
pub fn random_consistent_dataset(seed: u64, max_agents: usize, max_obs: usize, k: usize) -> Dataset {
    let mut rng = StreamKey::root(seed).with_label("testkit-consistent").rng();
    let n_agents = rng.gen_range(1..=max_agents);
    let mut observations = Vec::new();
    for a in 0..n_agents {
        let mut alpha: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = alpha.iter().sum();
        for v in &mut alpha {
            *v /= total;
        }
        let n_obs = rng.gen_range(1..=max_obs);
        for o in 0..n_obs {
            let prices: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
            let income: f64 = rng.gen_range(1.0..10.0);
            let quantities: Vec<f64> = (0..k).map(|g| alpha[g] * income / prices[g]).collect();
            observations.push(obs(&format!("a{a:02}"), &format!("o{o}"), &prices, &quantities));
        }
    }
    Dataset::new(goods(k), observations).unwrap()
}

/// Writes a dataset to a temp-style path as the long-format CSV.
pub fn write_csv_to(dataset: &Dataset, path: &std::path::Path) {
    let mut buf = Vec::new();
    dataset.write_csv(&mut buf, None).unwrap();
    std::fs::write(path, buf).unwrap();
}
