//! Random instance and profile generators with reproducible seeding.
//!
//! Profiles are piecewise constant on the scenario grid with integer slot
//! weights, so every sampled state stays inside small-denominator rational
//! arithmetic. Each sample derives its generator from (seed, index), making
//! parallel verification order-independent.

use num::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curve::Step;
use crate::error::{Error, Result};
use crate::net::{Scenario, ScheduleCost, TreeNetwork};
use crate::rat::{rat, rint, Rat};

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Random per-origin entry profiles integrating exactly to the demands.
///
/// A few grid slots receive integer weights; rates are demand-normalized,
/// which covers both sub-capacity and bursty (queued) regimes.
pub fn random_inflows(scenario: &Scenario, seed: u64, index: u64) -> Result<Vec<Step>> {
    let mut rng = sample_rng(seed, index);
    let k = scenario.slots();
    if k == 0 {
        return Err(Error::Sampling("horizon has no slots".into()));
    }
    let mut profiles = Vec::with_capacity(scenario.net.len());
    for origin in 1..=scenario.net.len() {
        let demand = &scenario.demand[origin - 1];
        if demand.is_zero() {
            profiles.push(Step::zero());
            continue;
        }
        let mut weights = vec![0u32; k];
        let mut total = 0u32;
        for _ in 0..64 {
            let active = rng.gen_range(1..=k.min(6));
            for w in weights.iter_mut() {
                *w = 0;
            }
            for _ in 0..active {
                let slot = rng.gen_range(0..k);
                weights[slot] += rng.gen_range(1..=4);
            }
            total = weights.iter().sum();
            if total > 0 {
                break;
            }
        }
        if total == 0 {
            return Err(Error::Sampling(format!(
                "origin {origin}: no positive slot weights after retries"
            )));
        }
        let scale = demand / (rint(total as i64) * &scenario.dt);
        let rates: Vec<Rat> = weights.iter().map(|&w| rint(w as i64) * &scale).collect();
        profiles.push(Step::from_slots(&scenario.t_start, &scenario.dt, &rates));
    }
    Ok(profiles)
}

/// Parameters for random scenario generation.
#[derive(Debug, Clone)]
pub struct ScenarioParams {
    pub max_nodes: usize,
    pub max_leaf_capacity: i64,
    pub max_demand: i64,
    /// Free-flow times are drawn as grid multiples 0..=this.
    pub max_free_flow_steps: i64,
    pub dt: Rat,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            max_nodes: 10,
            max_leaf_capacity: 3,
            max_demand: 3,
            max_free_flow_steps: 2,
            dt: rat(1, 2),
        }
    }
}

/// Random tree scenario with capacity monotonicity enforced bottom-up,
/// integer capacities and demands, grid-multiple free-flow times, early
/// slope below the unit delay cost, and a horizon generous enough to keep
/// the optimal departure window interior.
pub fn random_scenario(params: &ScenarioParams, seed: u64, index: u64) -> Scenario {
    let mut rng = sample_rng(seed, index ^ 0x5eed_5eed);
    let n = rng.gen_range(1..=params.max_nodes);
    let parents: Vec<usize> = (1..=n).map(|i| rng.gen_range(0..i)).collect();
    // capacities leaves-first so each parent covers its children
    let mut capacities = vec![Rat::from_integer(0.into()); n];
    for i in (1..=n).rev() {
        let child_total: Rat = (1..=n)
            .filter(|&j| parents[j - 1] == i)
            .map(|j| capacities[j - 1].clone())
            .sum();
        capacities[i - 1] = child_total + rint(rng.gen_range(1..=params.max_leaf_capacity));
    }
    let free_flow: Vec<Rat> = (0..n)
        .map(|_| rint(rng.gen_range(0..=params.max_free_flow_steps)) * &params.dt)
        .collect();
    let net = TreeNetwork::build(&parents, &capacities, &free_flow)
        .expect("generator keeps the tree valid");

    let mut demand: Vec<Rat> = (0..n)
        .map(|_| rint(rng.gen_range(0..=params.max_demand)))
        .collect();
    if demand.iter().all(|q| q.is_zero()) {
        demand[rng.gen_range(0..n)] = rint(1);
    }
    // classic early/late slopes: beta below the unit queueing cost
    let beta = rat(rng.gen_range(1..=8), 10);
    let gamma = rat(rng.gen_range(5..=30), 10);
    let cost = ScheduleCost::new(Rat::from_integer(0.into()), beta, gamma).unwrap();

    // horizon: room to serve everything through the root plus path times
    let total: Rat = demand.iter().cloned().sum();
    let root_cap = net.root_capacity();
    let max_path: Rat = (1..=n).map(|i| net.path_free_flow(i)).max().unwrap();
    let slack = &total / &root_cap + max_path + rint(2);
    let steps = (&slack / &params.dt).ceil();
    let half = crate::rat::rmax(&(steps * &params.dt), &(rint(2) * &params.dt));

    Scenario::new(net, demand, cost, -half.clone(), half, params.dt.clone())
        .expect("generated horizon is admissible")
}

/// Entry profiles that reproduce an optimal slot allocation: volume per
/// destination slot, shifted upstream by the path free-flow time.
pub fn inflows_from_slot_volumes(scenario: &Scenario, q_star: &[Vec<Rat>]) -> Vec<Step> {
    (1..=scenario.net.len())
        .map(|i| {
            let shift = -scenario.net.path_free_flow(i);
            let rates: Vec<Rat> = q_star[i - 1].iter().map(|v| v / &scenario.dt).collect();
            Step::from_slots(&scenario.t_start, &scenario.dt, &rates).shift(&shift)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::Signed;

    #[test]
    fn profiles_integrate_to_demand() {
        let scenario = random_scenario(&ScenarioParams::default(), 7, 0);
        let profiles = random_inflows(&scenario, 7, 3).unwrap();
        for (idx, p) in profiles.iter().enumerate() {
            assert_eq!(p.integral(), scenario.demand[idx]);
            assert!(!p.min_rate().is_negative());
        }
    }

    #[test]
    fn generator_is_reproducible() {
        let a = random_scenario(&ScenarioParams::default(), 11, 4);
        let b = random_scenario(&ScenarioParams::default(), 11, 4);
        assert_eq!(a.demand, b.demand);
        assert_eq!(a.t_end, b.t_end);
        let pa = random_inflows(&a, 11, 9).unwrap();
        let pb = random_inflows(&b, 11, 9).unwrap();
        assert_eq!(pa, pb);
    }
}
