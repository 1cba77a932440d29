//! LP-format export of the integer program behind the largest
//! jointly-rational-subset problem.
//!
//! Variables: `U_n` in `[0, 1 - delta_U]` per observation, binary `x_i` per
//! agent, binary `psi_n_k` per ordered observation pair. Rows (all ordered
//! pairs, including `n = k`):
//!
//! - IP1: `U_n - U_k < psi_n_k`
//! - IP2: `psi_n_k - 1 <= U_n - U_k`
//! - IP3: `x_i(n) e_n (p_n.q_n) - p_n.q_k < psi_n_k A`
//! - IP4: `(psi_n_k - 1) A <= p_k.q_n - x_i(k) e_k (p_k.q_k)`
//!
//! Strict inequalities are rewritten with an explicit margin
//! (`<= rhs - eps_strict`), since LP formats cannot express open
//! constraints. The objective maximizes the number of selected agents.

use std::fmt::Write as _;

use crate::data::dot;
use crate::error::{Error, Result};
use crate::ls::LsProblem;

/// Fraction of `A` used as the strict-inequality margin.
pub const EPS_STRICT_FACTOR: f64 = 1e-6;
/// Gap below 1 for the upper bound of the `U` variables.
pub const DELTA_U: f64 = 1e-6;
/// `A` is set to this multiple of the maximum expenditure, satisfying the
/// requirement `A > max_n p_n.q_n`.
pub const BIG_A_FACTOR: f64 = 1.01;

/// Numeric content of the integer program for one instance; the LP text is
/// a rendering of this data.
#[derive(Debug, Clone)]
pub struct MilpModel {
    /// Ascending agent ids.
    pub agents: Vec<String>,
    /// Global observation indices, ascending.
    pub obs_global: Vec<usize>,
    /// Owning agent position `i(n)` per observation.
    pub owner: Vec<usize>,
    /// `e^n` per observation.
    pub e_levels: Vec<f64>,
    /// Own expenditures `p_n.q_n`.
    pub expenditures: Vec<f64>,
    /// `cross_cost[n][k] = p_n.q_k`.
    pub cross_cost: Vec<Vec<f64>>,
    pub big_a: f64,
    pub eps_strict: f64,
    pub delta_u: f64,
    /// Sanitized variable names.
    pub u_names: Vec<String>,
    pub x_names: Vec<String>,
}

fn sanitize(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

impl MilpModel {
    pub fn build(problem: &LsProblem) -> Result<MilpModel> {
        if problem.agents.is_empty() {
            return Err(Error::InvalidInput("agent set is empty".into()));
        }
        let mut agents: Vec<String> = problem.agents.clone();
        agents.sort();
        agents.dedup();
        let dataset = problem.dataset;
        let mut obs_global = Vec::new();
        let mut owner = Vec::new();
        for (pos, a) in agents.iter().enumerate() {
            for &g in dataset.obs_indices_of(a)? {
                obs_global.push(g);
                owner.push(pos);
            }
        }
        // Sort observations ascending, keeping owners aligned.
        let mut order: Vec<usize> = (0..obs_global.len()).collect();
        order.sort_by_key(|&i| obs_global[i]);
        let obs_global: Vec<usize> = order.iter().map(|&i| obs_global[i]).collect();
        let owner: Vec<usize> = order.iter().map(|&i| owner[i]).collect();

        let mut e_levels = Vec::with_capacity(obs_global.len());
        let mut expenditures = Vec::with_capacity(obs_global.len());
        for &g in &obs_global {
            e_levels.push(problem.e.level_for(dataset.obs(g))?);
            expenditures.push(dataset.expenditure(g));
        }
        let cross_cost: Vec<Vec<f64>> = obs_global
            .iter()
            .map(|&gn| {
                let on = dataset.obs(gn);
                obs_global
                    .iter()
                    .map(|&gk| dot(&on.prices, &dataset.obs(gk).quantities))
                    .collect()
            })
            .collect();
        let max_exp = expenditures.iter().cloned().fold(0.0, f64::max);
        let big_a = BIG_A_FACTOR * max_exp;
        let u_names = obs_global
            .iter()
            .map(|&g| {
                let o = dataset.obs(g);
                format!("U_{}_{}", sanitize(&o.agent_id), sanitize(&o.obs_id))
            })
            .collect();
        let x_names = agents.iter().map(|a| format!("x_{}", sanitize(a))).collect();
        Ok(MilpModel {
            agents,
            obs_global,
            owner,
            e_levels,
            expenditures,
            cross_cost,
            big_a,
            eps_strict: EPS_STRICT_FACTOR * big_a,
            delta_u: DELTA_U,
            u_names,
            x_names,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.obs_global.len()
    }

    fn psi_name(&self, n: usize, k: usize) -> String {
        let un = self.u_names[n].trim_start_matches("U_").to_string();
        let uk = self.u_names[k].trim_start_matches("U_").to_string();
        format!("psi_{un}_{uk}")
    }

    /// Renders the model in CPLEX LP format.
    pub fn to_lp_string(&self) -> String {
        let m = self.n_obs();
        let mut out = String::new();
        writeln!(out, "\\ largest jointly rational agent subset").unwrap();
        writeln!(
            out,
            "\\ A = {}, eps_strict = {}, delta_U = {}",
            self.big_a, self.eps_strict, self.delta_u
        )
        .unwrap();
        writeln!(out, "Maximize").unwrap();
        let objective = self
            .x_names
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" + ");
        writeln!(out, " obj: {objective}").unwrap();
        writeln!(out, "Subject To").unwrap();
        for n in 0..m {
            for k in 0..m {
                let psi = self.psi_name(n, k);
                let un = &self.u_names[n];
                let uk = &self.u_names[k];
                // IP1: U_n - U_k - psi <= -eps
                if n == k {
                    writeln!(out, " ip1_{n}_{k}: - {psi} <= {}", -self.eps_strict).unwrap();
                } else {
                    writeln!(
                        out,
                        " ip1_{n}_{k}: {un} - {uk} - {psi} <= {}",
                        -self.eps_strict
                    )
                    .unwrap();
                }
                // IP2: psi - U_n + U_k <= 1
                if n == k {
                    writeln!(out, " ip2_{n}_{k}: {psi} <= 1").unwrap();
                } else {
                    writeln!(out, " ip2_{n}_{k}: {psi} - {un} + {uk} <= 1").unwrap();
                }
                // IP3: e_n exp_n x_i(n) - A psi <= cost(n,k) - eps
                let coeff_n = self.e_levels[n] * self.expenditures[n];
                writeln!(
                    out,
                    " ip3_{n}_{k}: {coeff_n} {x} - {a} {psi} <= {rhs}",
                    x = self.x_names[self.owner[n]],
                    a = self.big_a,
                    rhs = self.cross_cost[n][k] - self.eps_strict
                )
                .unwrap();
                // IP4: A psi + e_k exp_k x_i(k) <= cost(k,n) + A
                let coeff_k = self.e_levels[k] * self.expenditures[k];
                writeln!(
                    out,
                    " ip4_{n}_{k}: {a} {psi} + {coeff_k} {x} <= {rhs}",
                    a = self.big_a,
                    x = self.x_names[self.owner[k]],
                    rhs = self.cross_cost[k][n] + self.big_a
                )
                .unwrap();
            }
        }
        writeln!(out, "Bounds").unwrap();
        for un in &self.u_names {
            writeln!(out, " 0 <= {un} <= {}", 1.0 - self.delta_u).unwrap();
        }
        writeln!(out, "Binaries").unwrap();
        for xn in &self.x_names {
            writeln!(out, " {xn}").unwrap();
        }
        for n in 0..m {
            for k in 0..m {
                writeln!(out, " {}", self.psi_name(n, k)).unwrap();
            }
        }
        writeln!(out, "End").unwrap();
        out
    }

    /// Evaluates every row against a full assignment; returns the labels of
    /// violated rows. `psi[n][k]` and `x[i]` take values 0 or 1.
    pub fn check_assignment(&self, x: &[f64], u: &[f64], psi: &[Vec<f64>]) -> Vec<String> {
        let m = self.n_obs();
        let slack = 1e-9 * self.big_a.max(1.0);
        let mut violated = Vec::new();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 && xi != 1.0 {
                violated.push(format!("x_{i} not binary"));
            }
        }
        for (n, &un) in u.iter().enumerate() {
            if !(-slack..=1.0 - self.delta_u + slack).contains(&un) {
                violated.push(format!("U bound {n}"));
            }
        }
        for n in 0..m {
            for k in 0..m {
                let p = psi[n][k];
                if p != 0.0 && p != 1.0 {
                    violated.push(format!("psi_{n}_{k} not binary"));
                }
                if u[n] - u[k] - p > -self.eps_strict + slack {
                    violated.push(format!("ip1_{n}_{k}"));
                }
                if p - u[n] + u[k] > 1.0 + slack {
                    violated.push(format!("ip2_{n}_{k}"));
                }
                let coeff_n = self.e_levels[n] * self.expenditures[n];
                if coeff_n * x[self.owner[n]] - self.big_a * p
                    > self.cross_cost[n][k] - self.eps_strict + slack
                {
                    violated.push(format!("ip3_{n}_{k}"));
                }
                let coeff_k = self.e_levels[k] * self.expenditures[k];
                if self.big_a * p + coeff_k * x[self.owner[k]]
                    > self.cross_cost[k][n] + self.big_a + slack
                {
                    violated.push(format!("ip4_{n}_{k}"));
                }
            }
        }
        violated
    }
}

/// Renders the instance as LP-format text.
pub fn export_milp(problem: &LsProblem) -> Result<String> {
    Ok(MilpModel::build(problem)?.to_lp_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, PrecisionAssignment};
    use crate::testkit;

    #[test]
    fn minimal_instance_counts() {
        let ds = Dataset::new(
            vec!["g0".into(), "g1".into()],
            vec![testkit::obs("a", "1", &[1.0, 2.0], &[1.0, 3.0])],
        )
        .unwrap();
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let problem = LsProblem::all_agents(&ds, &e, None);
        let model = MilpModel::build(&problem).unwrap();
        assert_eq!(model.n_obs(), 1);
        assert_eq!(model.agents.len(), 1);
        let text = model.to_lp_string();
        let rows = text
            .lines()
            .filter(|l| l.trim_start().starts_with("ip"))
            .count();
        assert_eq!(rows, 4);
        assert!(text.contains("x_a"));
        assert!(text.contains("U_a_1"));
        assert!(text.contains("psi_a_1_a_1"));
    }

    #[test]
    fn two_agents_one_observation_each() {
        let ds = testkit::mutual_strict_pair();
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let problem = LsProblem::all_agents(&ds, &e, None);
        let model = MilpModel::build(&problem).unwrap();
        assert_eq!(model.n_obs(), 2);
        let text = model.to_lp_string();
        let rows = text
            .lines()
            .filter(|l| l.trim_start().starts_with("ip"))
            .count();
        assert_eq!(rows, 16, "4 ordered pairs x 4 row families");
        let binaries = text
            .lines()
            .skip_while(|l| !l.starts_with("Binaries"))
            .skip(1)
            .take_while(|l| !l.starts_with("End"))
            .count();
        assert_eq!(binaries, 2 + 4, "2 x plus 4 psi");
    }

    #[test]
    fn big_a_exceeds_max_expenditure() {
        let ds = testkit::table1_dataset();
        let e = PrecisionAssignment::uniform(0.95).unwrap();
        let problem = LsProblem::all_agents(&ds, &e, None);
        let model = MilpModel::build(&problem).unwrap();
        let max_exp = (0..ds.len()).map(|i| ds.expenditure(i)).fold(0.0, f64::max);
        assert!(model.big_a > max_exp);
    }

    #[test]
    fn known_good_assignment_passes_row_check() {
        // Single consistent agent: x = 1, all psi follow U_n >= U_k.
        let ds = Dataset::new(
            vec!["g0".into(), "g1".into()],
            vec![testkit::obs("a", "1", &[1.0, 2.0], &[1.0, 3.0])],
        )
        .unwrap();
        let e = PrecisionAssignment::uniform(1.0).unwrap();
        let problem = LsProblem::all_agents(&ds, &e, None);
        let model = MilpModel::build(&problem).unwrap();
        let violations = model.check_assignment(&[1.0], &[0.0], &[vec![1.0]]);
        assert!(violations.is_empty(), "{violations:?}");
        // Deselecting the agent must also be feasible (objective 0).
        let violations = model.check_assignment(&[0.0], &[0.0], &[vec![1.0]]);
        assert!(violations.is_empty(), "{violations:?}");
    }
}
