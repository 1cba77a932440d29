use rpnet::datagen::{simulate_population, SimConfig};
use rpnet::data::PrecisionAssignment;
use rpnet::relations::garp_check;
fn main() {
    let e = PrecisionAssignment::uniform(1.0).unwrap();
    let mut violating = vec![];
    for seed in 1..=20u64 {
        let config = SimConfig { n_agents: 10, n_types: 2, n_obs: 10, seed, ..SimConfig::default() };
        let sim = simulate_population(&config).unwrap();
        if !garp_check(&sim.dataset, &e, None).unwrap().is_satisfied() { violating.push(seed); }
    }
    println!("violating seeds: {violating:?} ({}/20)", violating.len());
}
