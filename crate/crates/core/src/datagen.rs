//! Simulated populations with planted preference types.
//!
//! Each type is a Cobb-Douglas exponent vector drawn from a symmetric
//! Dirichlet; agents of one type share it exactly. Demand spends the whole
//! budget (`q_k = alpha_k m / p_k`), so at zero noise any set of same-type
//! observations is jointly rationalizable, giving the pipeline a sharp
//! ground truth. Multiplicative log-normal noise keeps quantities positive.

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal, StandardNormal};

use crate::covtests::CovariateTable;
use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Simulation parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_agents: usize,
    pub n_types: usize,
    pub n_obs: usize,
    pub k_goods: usize,
    pub seed: u64,
    /// Standard deviation of the multiplicative log-normal quantity noise.
    pub sigma: f64,
    /// Concentration of the symmetric Dirichlet over exponents; small
    /// values give well-separated corner types.
    pub dirichlet_concentration: f64,
    /// Location of the log-normal price distribution.
    pub price_location: f64,
    /// Scale of the log-normal price distribution.
    pub price_scale: f64,
    /// Incomes are uniform on this range.
    pub income_range: (f64, f64),
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_agents: 40,
            n_types: 2,
            n_obs: 20,
            k_goods: 3,
            seed: 1,
            sigma: 0.0,
            dirichlet_concentration: 0.1,
            price_location: 0.0,
            price_scale: 0.25,
            income_range: (1.0, 10.0),
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.n_obs == 0 {
            return Err(Error::InvalidInput("need at least one agent and observation".into()));
        }
        if self.n_types == 0 || self.n_types > self.n_agents {
            return Err(Error::InvalidInput(format!(
                "n_types must lie in 1..={}",
                self.n_agents
            )));
        }
        if self.k_goods < 2 {
            return Err(Error::InvalidInput("need at least two goods".into()));
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::InvalidInput("sigma must be non-negative".into()));
        }
        if self.dirichlet_concentration <= 0.0 {
            return Err(Error::InvalidInput("concentration must be positive".into()));
        }
        if !(self.income_range.0 > 0.0 && self.income_range.1 >= self.income_range.0) {
            return Err(Error::InvalidInput("income range must be positive".into()));
        }
        if self.price_scale < 0.0 {
            return Err(Error::InvalidInput("price scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// A simulated population: the dataset, the planted type per agent, and a
/// covariate table carrying the type label plus decoy random covariates.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    /// agent id -> planted type index.
    pub true_types: Vec<(String, usize)>,
    pub covariates: CovariateTable,
}

fn agent_id(i: usize, width: usize) -> String {
    format!("a{i:0width$}")
}

/// Draws the population. Deterministic from the seed; every draw is keyed
/// by `(seed, stage, agent, observation)`, so the output does not depend
/// on generation order.
pub fn simulate_population(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let root = StreamKey::root(config.seed).with_label("datagen");
    let width = (config.n_agents.max(2) - 1).to_string().len().max(3);

    // Type exponent vectors: normalized Gamma draws are a Dirichlet sample.
    let gamma = Gamma::new(config.dirichlet_concentration, 1.0)
        .map_err(|e| Error::InvalidInput(format!("bad Dirichlet concentration: {e}")))?;
    let mut type_exponents = Vec::with_capacity(config.n_types);
    for ty in 0..config.n_types {
        let mut rng = root.with_label("type").with_index(ty as u64).rng();
        let mut alpha: Vec<f64> = (0..config.k_goods)
            .map(|_| {
                // Floor away from zero so every good is demanded and every
                // expenditure is positive.
                gamma.sample(&mut rng).max(1e-9)
            })
            .collect();
        let total: f64 = alpha.iter().sum();
        for a in &mut alpha {
            *a /= total;
        }
        type_exponents.push(alpha);
    }

    let price_dist = LogNormal::new(config.price_location, config.price_scale)
        .map_err(|e| Error::InvalidInput(format!("bad price distribution: {e}")))?;
    let mut observations = Vec::with_capacity(config.n_agents * config.n_obs);
    let mut true_types = Vec::with_capacity(config.n_agents);
    for agent in 0..config.n_agents {
        let ty = agent % config.n_types;
        let id = agent_id(agent, width);
        true_types.push((id.clone(), ty));
        let alpha = &type_exponents[ty];
        for obs in 0..config.n_obs {
            let mut rng = root
                .with_label("obs")
                .with_index(agent as u64)
                .with_index(obs as u64)
                .rng();
            let prices: Vec<f64> = (0..config.k_goods).map(|_| price_dist.sample(&mut rng)).collect();
            let income = rng.gen_range(config.income_range.0..=config.income_range.1);
            let mut quantities: Vec<f64> = (0..config.k_goods)
                .map(|g| alpha[g] * income / prices[g])
                .collect();
            if config.sigma > 0.0 {
                for q in &mut quantities {
                    let shock: f64 = StandardNormal.sample(&mut rng);
                    *q *= (config.sigma * shock).exp();
                }
            }
            observations.push(Observation {
                agent_id: id.clone(),
                obs_id: format!("t{obs:03}"),
                prices,
                quantities,
            });
        }
    }
    let goods = (0..config.k_goods).map(|g| format!("g{g}")).collect();
    let dataset = Dataset::new(goods, observations)?;

    // Covariates: the planted type plus two random decoys.
    let mut values = std::collections::BTreeMap::new();
    for (id, ty) in &true_types {
        let mut rng = root.with_label("covariates").with_label(id).rng();
        let mut row = std::collections::BTreeMap::new();
        row.insert("type".to_string(), format!("type{ty}"));
        row.insert(
            "decoy_coin".to_string(),
            if rng.gen_bool(0.5) { "heads" } else { "tails" }.to_string(),
        );
        row.insert(
            "decoy_tercile".to_string(),
            format!("q{}", rng.gen_range(0..3)),
        );
        values.insert(id.clone(), row);
    }
    let covariates = CovariateTable::new(
        vec![
            "type".to_string(),
            "decoy_coin".to_string(),
            "decoy_tercile".to_string(),
        ],
        values,
    );
    Ok(SimOutput {
        dataset,
        true_types,
        covariates,
    })
}

/// Writes the covariate table as the `agent_id,<name>,...` CSV.
pub fn write_covariates_csv<W: std::io::Write>(
    table: &CovariateTable,
    agents: &[String],
    mut out: W,
    header_comment: Option<&str>,
) -> Result<()> {
    if let Some(comment) = header_comment {
        writeln!(out, "# {comment}")?;
    }
    let names = table.covariates().to_vec();
    writeln!(out, "agent_id,{}", names.join(","))?;
    for agent in agents {
        let cells: Vec<&str> = names
            .iter()
            .map(|n| table.value(agent, n).unwrap_or(""))
            .collect();
        writeln!(out, "{agent},{}", cells.join(","))?;
    }
    Ok(())
}
