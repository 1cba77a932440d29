//! Consumer panel data model: observations, datasets, precision levels.
//!
//! A dataset is an immutable collection of priced choices over `K` goods.
//! Every operation in this crate works on shared `&Dataset` references, so
//! datasets are safe to use from concurrent workers.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Relative tolerance factor for expenditure comparisons. The absolute
/// tolerance of a dataset is `TOL_REL * max_expenditure`.
pub const TOL_REL: f64 = 1e-9;

/// One priced choice: the bundle an agent bought at the prices it faced.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub agent_id: String,
    pub obs_id: String,
    /// Strictly positive, length `K`.
    pub prices: Vec<f64>,
    /// Non-negative, length `K`.
    pub quantities: Vec<f64>,
}

impl Observation {
    /// Total spending `p . q` of this observation.
    pub fn expenditure(&self) -> f64 {
        dot(&self.prices, &self.quantities)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Entrywise equality of two bundles within `tol`.
pub(crate) fn bundles_equal(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// An immutable panel of observations over `K` goods, indexed by agent.
#[derive(Debug, Clone)]
pub struct Dataset {
    good_ids: Vec<String>,
    observations: Vec<Observation>,
    /// agent id -> indices into `observations`, in insertion order.
    agent_obs: BTreeMap<String, Vec<usize>>,
    expenditures: Vec<f64>,
    max_expenditure: f64,
}

impl Dataset {
    /// Builds a dataset, enforcing the ingestion invariants: `K` prices and
    /// quantities per observation, finite values, positive prices,
    /// non-negative quantities, positive expenditure, unique
    /// `(agent_id, obs_id)` pairs.
    pub fn new(good_ids: Vec<String>, observations: Vec<Observation>) -> Result<Self> {
        let k = good_ids.len();
        if k == 0 {
            return Err(Error::InvalidInput("dataset needs at least one good".into()));
        }
        if observations.is_empty() {
            return Err(Error::InvalidInput("dataset contains no observations".into()));
        }
        {
            let mut seen = std::collections::HashSet::new();
            for g in &good_ids {
                if !seen.insert(g.as_str()) {
                    return Err(Error::InvalidInput(format!("duplicate good id {g:?}")));
                }
            }
        }
        let mut agent_obs: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut keys = std::collections::HashSet::new();
        let mut expenditures = Vec::with_capacity(observations.len());
        for (idx, obs) in observations.iter().enumerate() {
            if obs.prices.len() != k || obs.quantities.len() != k {
                return Err(Error::InvalidInput(format!(
                    "observation ({}, {}) has {} prices / {} quantities, expected {}",
                    obs.agent_id,
                    obs.obs_id,
                    obs.prices.len(),
                    obs.quantities.len(),
                    k
                )));
            }
            for &p in &obs.prices {
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "observation ({}, {}) has non-positive price {p}",
                        obs.agent_id, obs.obs_id
                    )));
                }
            }
            for &q in &obs.quantities {
                if !q.is_finite() || q < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "observation ({}, {}) has negative quantity {q}",
                        obs.agent_id, obs.obs_id
                    )));
                }
            }
            let spend = obs.expenditure();
            if spend <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "observation ({}, {}) has zero expenditure",
                    obs.agent_id, obs.obs_id
                )));
            }
            if !keys.insert((obs.agent_id.clone(), obs.obs_id.clone())) {
                return Err(Error::InvalidInput(format!(
                    "duplicate observation id ({}, {})",
                    obs.agent_id, obs.obs_id
                )));
            }
            agent_obs.entry(obs.agent_id.clone()).or_default().push(idx);
            expenditures.push(spend);
        }
        let max_expenditure = expenditures.iter().cloned().fold(0.0, f64::max);
        Ok(Dataset {
            good_ids,
            observations,
            agent_obs,
            expenditures,
            max_expenditure,
        })
    }

    /// Number of goods `K`.
    pub fn k(&self) -> usize {
        self.good_ids.len()
    }

    pub fn good_ids(&self) -> &[String] {
        &self.good_ids
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn obs(&self, idx: usize) -> &Observation {
        &self.observations[idx]
    }

    pub fn expenditure(&self, idx: usize) -> f64 {
        self.expenditures[idx]
    }

    pub fn max_expenditure(&self) -> f64 {
        self.max_expenditure
    }

    /// Absolute comparison tolerance used by the revealed-preference
    /// relations built from this dataset.
    pub fn tolerance(&self) -> f64 {
        TOL_REL * self.max_expenditure
    }

    /// Agent ids in ascending order.
    pub fn agent_ids(&self) -> Vec<String> {
        self.agent_obs.keys().cloned().collect()
    }

    pub fn agent_count(&self) -> usize {
        self.agent_obs.len()
    }

    /// Iterates `(agent_id, observation indices)` in ascending agent order.
    pub fn agents(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.agent_obs.iter().map(|(a, v)| (a.as_str(), v.as_slice()))
    }

    /// Observation indices of one agent, in input order.
    pub fn obs_indices_of(&self, agent_id: &str) -> Result<&[usize]> {
        self.agent_obs
            .get(agent_id)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownAgent(agent_id.to_string()))
    }

    /// Resolves an `(agent_id, obs_id)` pair to its observation index.
    pub fn index_of(&self, agent_id: &str, obs_id: &str) -> Result<usize> {
        let indices = self.obs_indices_of(agent_id)?;
        indices
            .iter()
            .copied()
            .find(|&i| self.observations[i].obs_id == obs_id)
            .ok_or_else(|| Error::UnknownObservation {
                agent: agent_id.to_string(),
                obs: obs_id.to_string(),
            })
    }

    /// Validates a subset of observation indices: non-empty, in range, no
    /// duplicates. Returns the indices sorted ascending.
    pub fn check_subset(&self, subset: &[usize]) -> Result<Vec<usize>> {
        if subset.is_empty() {
            return Err(Error::InvalidInput("observation subset is empty".into()));
        }
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidInput(format!(
                    "duplicate observation index {} in subset",
                    w[0]
                )));
            }
        }
        if let Some(&last) = sorted.last() {
            if last >= self.len() {
                return Err(Error::InvalidInput(format!(
                    "observation index {last} out of range ({} observations)",
                    self.len()
                )));
            }
        }
        Ok(sorted)
    }

    /// Builds a new dataset containing only the given observations (used for
    /// synthetic resamples). Indices must be valid; ids are preserved.
    pub fn subset_dataset(&self, indices: &[usize]) -> Result<Dataset> {
        let sorted = self.check_subset(indices)?;
        let observations = sorted.iter().map(|&i| self.observations[i].clone()).collect();
        Dataset::new(self.good_ids.clone(), observations)
    }

    /// Builds a new dataset containing only the given agents' observations.
    pub fn restrict_to_agents(&self, agents: &[String]) -> Result<Dataset> {
        let mut indices = Vec::new();
        for a in agents {
            indices.extend_from_slice(self.obs_indices_of(a)?);
        }
        self.subset_dataset(&indices)
    }

    /// Reads a long-format observation CSV: header
    /// `agent_id,obs_id,good_id,price,quantity`, one row per
    /// `(observation, good)`. Lines starting with `#` are ignored. Every
    /// observation must cover the full good set.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        {
            let headers = rdr.headers()?;
            let expected = ["agent_id", "obs_id", "good_id", "price", "quantity"];
            let got: Vec<&str> = headers.iter().collect();
            if got != expected {
                return Err(Error::InvalidInput(format!(
                    "observation CSV header must be {expected:?}, got {got:?}"
                )));
            }
        }
        // (agent, obs) -> good -> (price, quantity), in row order
        let mut cells: HashMap<(String, String), HashMap<String, (f64, f64)>> = HashMap::new();
        let mut obs_order: Vec<(String, String)> = Vec::new();
        let mut goods: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != 5 {
                return Err(Error::InvalidInput(format!(
                    "observation CSV row has {} fields, expected 5",
                    record.len()
                )));
            }
            let agent = record[0].to_string();
            let obs = record[1].to_string();
            let good = record[2].to_string();
            let price: f64 = record[3].parse().map_err(|_| {
                Error::InvalidInput(format!("bad price {:?} for ({agent}, {obs}, {good})", &record[3]))
            })?;
            let quantity: f64 = record[4].parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "bad quantity {:?} for ({agent}, {obs}, {good})",
                    &record[4]
                ))
            })?;
            goods.insert(good.clone());
            let key = (agent.clone(), obs.clone());
            let entry = cells.entry(key.clone()).or_insert_with(|| {
                obs_order.push(key);
                HashMap::new()
            });
            if entry.insert(good.clone(), (price, quantity)).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate row for ({agent}, {obs}, {good})"
                )));
            }
        }
        if obs_order.is_empty() {
            return Err(Error::InvalidInput("observation CSV contains no data rows".into()));
        }
        let good_ids: Vec<String> = goods.into_iter().collect();
        let mut observations = Vec::with_capacity(obs_order.len());
        for (agent, obs) in obs_order {
            let entry = &cells[&(agent.clone(), obs.clone())];
            let mut prices = Vec::with_capacity(good_ids.len());
            let mut quantities = Vec::with_capacity(good_ids.len());
            for g in &good_ids {
                match entry.get(g) {
                    Some(&(p, q)) => {
                        prices.push(p);
                        quantities.push(q);
                    }
                    None => {
                        return Err(Error::InvalidInput(format!(
                            "observation ({agent}, {obs}) is missing good {g:?}"
                        )));
                    }
                }
            }
            observations.push(Observation {
                agent_id: agent,
                obs_id: obs,
                prices,
                quantities,
            });
        }
        Dataset::new(good_ids, observations)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Dataset::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes the long-format observation CSV. `header_comment`, when given,
    /// is emitted first as a `#`-prefixed line.
    pub fn write_csv<W: Write>(&self, mut out: W, header_comment: Option<&str>) -> Result<()> {
        if let Some(comment) = header_comment {
            writeln!(out, "# {comment}")?;
        }
        writeln!(out, "agent_id,obs_id,good_id,price,quantity")?;
        for obs in &self.observations {
            for (g, good) in self.good_ids.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    obs.agent_id, obs.obs_id, good, obs.prices[g], obs.quantities[g]
                )?;
            }
        }
        Ok(())
    }
}

/// Per-observation efficiency levels `e^n` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PrecisionAssignment {
    kind: PrecisionKind,
}

#[derive(Debug, Clone)]
enum PrecisionKind {
    Uniform(f64),
    /// Keyed by `(agent_id, obs_id)`; `obs_id` alone is only unique within
    /// an agent.
    PerObs(HashMap<(String, String), f64>),
}

impl PrecisionAssignment {
    /// A single level applied to every observation.
    pub fn uniform(e: f64) -> Result<Self> {
        check_level(e)?;
        Ok(PrecisionAssignment {
            kind: PrecisionKind::Uniform(e),
        })
    }

    /// Distinct levels per `(agent_id, obs_id)` pair.
    pub fn per_observation(levels: HashMap<(String, String), f64>) -> Result<Self> {
        for (&ref key, &e) in &levels {
            check_level(e).map_err(|_| {
                Error::InvalidInput(format!(
                    "precision level {e} for ({}, {}) is outside [0, 1]",
                    key.0, key.1
                ))
            })?;
        }
        Ok(PrecisionAssignment {
            kind: PrecisionKind::PerObs(levels),
        })
    }

    /// Level for one observation; errors when a per-observation map does not
    /// cover it.
    pub fn level_for(&self, obs: &Observation) -> Result<f64> {
        match &self.kind {
            PrecisionKind::Uniform(e) => Ok(*e),
            PrecisionKind::PerObs(map) => map
                .get(&(obs.agent_id.clone(), obs.obs_id.clone()))
                .copied()
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "precision assignment does not cover observation ({}, {})",
                        obs.agent_id, obs.obs_id
                    ))
                }),
        }
    }

    /// Levels aligned with the dataset's observation indices.
    pub fn levels_for(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        dataset
            .observations()
            .iter()
            .map(|obs| self.level_for(obs))
            .collect()
    }
}

fn check_level(e: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&e) || !e.is_finite() {
        return Err(Error::InvalidInput(format!(
            "precision level {e} is outside [0, 1]"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(agent: &str, id: &str, p: &[f64], q: &[f64]) -> Observation {
        Observation {
            agent_id: agent.into(),
            obs_id: id.into(),
            prices: p.to_vec(),
            quantities: q.to_vec(),
        }
    }

    fn goods(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("g{i}")).collect()
    }

    #[test]
    fn rejects_zero_expenditure() {
        let err = Dataset::new(goods(2), vec![obs("a", "1", &[1.0, 2.0], &[0.0, 0.0])]);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_non_positive_price_and_negative_quantity() {
        assert!(Dataset::new(goods(2), vec![obs("a", "1", &[0.0, 2.0], &[1.0, 1.0])]).is_err());
        assert!(Dataset::new(goods(2), vec![obs("a", "1", &[1.0, 2.0], &[-1.0, 1.0])]).is_err());
    }

    #[test]
    fn rejects_duplicate_ids_and_dimension_mismatch() {
        let d = Dataset::new(
            goods(2),
            vec![
                obs("a", "1", &[1.0, 2.0], &[1.0, 3.0]),
                obs("a", "1", &[2.0, 1.0], &[3.0, 1.0]),
            ],
        );
        assert!(d.is_err());
        let d = Dataset::new(goods(2), vec![obs("a", "1", &[1.0], &[1.0, 3.0])]);
        assert!(d.is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(
            goods(2),
            vec![
                obs("a", "1", &[1.0, 2.0], &[1.0, 3.0]),
                obs("b", "1", &[2.0, 1.0], &[3.0, 1.0]),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, Some("test")).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.k(), 2);
        assert_eq!(back.obs(0).quantities, vec![1.0, 3.0]);
        assert_eq!(back.agent_ids(), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn csv_missing_good_is_rejected() {
        let text = "agent_id,obs_id,good_id,price,quantity\n\
                    a,1,g0,1.0,1.0\n\
                    a,1,g1,2.0,3.0\n\
                    b,1,g0,2.0,3.0\n";
        let err = Dataset::from_csv_reader(text.as_bytes());
        assert!(matches!(err, Err(Error::InvalidInput(msg)) if msg.contains("missing good")));
    }

    #[test]
    fn precision_bounds_are_enforced() {
        assert!(PrecisionAssignment::uniform(1.2).is_err());
        assert!(PrecisionAssignment::uniform(-0.1).is_err());
        assert!(PrecisionAssignment::uniform(0.95).is_ok());
    }

    #[test]
    fn per_observation_coverage_is_checked() {
        let ds = Dataset::new(goods(2), vec![obs("a", "1", &[1.0, 2.0], &[1.0, 3.0])]).unwrap();
        let mut map = HashMap::new();
        map.insert(("a".to_string(), "2".to_string()), 0.9);
        let pa = PrecisionAssignment::per_observation(map).unwrap();
        assert!(pa.levels_for(&ds).is_err());
    }
}
