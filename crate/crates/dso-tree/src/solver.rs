//! Optimal departure scheduling as a min-cost flow on a time-expanded tree.
//!
//! The horizon is split into K slots of width dt. Flow from each origin is
//! routed source -> origin -> (origin, slot) -> parent copies -> sink; the
//! per-slot tree arcs carry capacity mu_i * dt in volume units and the entry
//! arc of (i, k) prices a unit at the exact slot average of the schedule
//! cost plus the path free-flow time. Successive shortest paths with node
//! potentials over rationals give an exact optimum; with integer-scaled
//! data the flow is integral. Demand and capacity multipliers are read off
//! the final potentials, with the sink potential pinned to zero.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num::integer::Integer;
use num::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::net::Scenario;
use crate::rat::{rint, to_f64, Rat};

/// Discretized instance: slot grid, exact slot-averaged costs and arc data.
#[derive(Debug, Clone)]
pub struct TimeExpandedNet {
    pub slots: usize,
    /// Left edge of each slot.
    pub slot_start: Vec<Rat>,
    /// Exact average of the schedule cost over each slot.
    pub slot_cost: Vec<Rat>,
    /// Path free-flow time per origin (entry-arc cost offset).
    pub path_free_flow: Vec<Rat>,
    /// Per-slot volume capacity of each link (mu_i * dt).
    pub link_capacity: Vec<Rat>,
    /// Demand per origin (source-arc capacity).
    pub demand: Vec<Rat>,
}

impl TimeExpandedNet {
    /// Total node count of the flow network: source, origins, slot copies, sink.
    pub fn node_count(&self, links: usize) -> usize {
        2 + links + links * self.slots
    }
}

/// Builds the time-expanded network; slot costs are integrated in closed
/// form so the discrete objective is the exact integral of any
/// slot-constant inflow profile.
pub fn discretize(scenario: &Scenario) -> TimeExpandedNet {
    let k = scenario.slots();
    let mut slot_start = Vec::with_capacity(k);
    let mut slot_cost = Vec::with_capacity(k);
    for idx in 0..k {
        let (lo, hi) = scenario.slot_bounds(idx);
        slot_cost.push(scenario.cost.slot_average(&lo, &hi));
        slot_start.push(lo);
    }
    let n = scenario.net.len();
    TimeExpandedNet {
        slots: k,
        slot_start,
        slot_cost,
        path_free_flow: (1..=n).map(|i| scenario.net.path_free_flow(i)).collect(),
        link_capacity: (1..=n)
            .map(|i| scenario.net.capacity(i) * &scenario.dt)
            .collect(),
        demand: scenario.demand.clone(),
    }
}

/// Exact optimum of the discretized problem with duals.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Routed volume per (origin, slot).
    pub q_star: Vec<Vec<Rat>>,
    pub objective: Rat,
    pub schedule_cost: Rat,
    pub free_flow_cost: Rat,
    /// Demand multiplier per origin.
    pub rho: Vec<Rat>,
    /// Capacity multiplier per (link, slot).
    pub p: Vec<Vec<Rat>>,
    /// Augmentation count of the flow solver.
    pub iterations: usize,
    /// Largest primal constraint violation of the returned solution,
    /// re-measured after solving; identically zero for exact data.
    pub residual: Rat,
}

struct FlowNet {
    // paired residual arcs: arc 2e and its reverse 2e+1
    to: Vec<usize>,
    residual: Vec<Rat>,
    cost: Vec<Rat>,
    adj: Vec<Vec<usize>>,
}

impl FlowNet {
    fn new(nodes: usize) -> FlowNet {
        FlowNet {
            to: Vec::new(),
            residual: Vec::new(),
            cost: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn link(&mut self, from: usize, to: usize, cap: Rat, cost: Rat) -> usize {
        let idx = self.to.len();
        self.to.push(to);
        self.residual.push(cap);
        self.cost.push(cost.clone());
        self.adj[from].push(idx);
        self.to.push(from);
        self.residual.push(Rat::zero());
        self.cost.push(-cost);
        self.adj[to].push(idx + 1);
        idx
    }

    fn flow_on(&self, arc: usize) -> Rat {
        // forward flow equals the reverse arc's residual
        self.residual[arc ^ 1].clone()
    }
}

/// Solves the discretized problem exactly. Fails with `Infeasible` when the
/// horizon cannot carry the demand through the bottlenecks.
pub fn solve(scenario: &Scenario) -> Result<LpSolution> {
    let net = discretize(scenario);
    solve_discretized(scenario, &net)
}

pub fn solve_discretized(scenario: &Scenario, net: &TimeExpandedNet) -> Result<LpSolution> {
    let n = scenario.net.len();
    let k = net.slots;
    let nodes = net.node_count(n);
    let source = 0usize;
    let sink = nodes - 1;
    let origin_node = |i: usize| i; // origins 1..=n
    let slot_node = |i: usize, kk: usize| n + (i - 1) * k + kk + 1;

    let total_demand: Rat = net.demand.iter().cloned().sum();
    let entry_cap = &total_demand + Rat::one(); // strictly above any feasible flow

    let mut flow = FlowNet::new(nodes);
    let mut source_arcs = Vec::with_capacity(n);
    let mut entry_arcs = vec![vec![0usize; k]; n];
    let mut tree_arcs = vec![vec![0usize; k]; n];
    for i in 1..=n {
        source_arcs.push(flow.link(
            source,
            origin_node(i),
            net.demand[i - 1].clone(),
            Rat::zero(),
        ));
    }
    // adjacency kept slot-major so ties resolve toward earlier slots
    for i in 1..=n {
        for kk in 0..k {
            let cost = &net.slot_cost[kk] + &net.path_free_flow[i - 1];
            entry_arcs[i - 1][kk] =
                flow.link(origin_node(i), slot_node(i, kk), entry_cap.clone(), cost);
        }
    }
    for i in 1..=n {
        let parent = scenario.net.parent(i);
        for kk in 0..k {
            let head = if parent == 0 {
                sink
            } else {
                slot_node(parent, kk)
            };
            tree_arcs[i - 1][kk] = flow.link(
                slot_node(i, kk),
                head,
                net.link_capacity[i - 1].clone(),
                Rat::zero(),
            );
        }
    }

    // successive shortest paths with potentials
    let mut potential = vec![Rat::zero(); nodes];
    let mut shipped = Rat::zero();
    let mut iterations = 0usize;
    while shipped < total_demand {
        let mut dist: Vec<Option<Rat>> = vec![None; nodes];
        let mut parent_arc = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        let mut heap: BinaryHeap<Reverse<(Rat, usize)>> = BinaryHeap::new();
        dist[source] = Some(Rat::zero());
        heap.push(Reverse((Rat::zero(), source)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if dist[u].as_ref() != Some(&d) {
                continue;
            }
            for &arc in &flow.adj[u] {
                if !flow.residual[arc].is_positive() {
                    continue;
                }
                let v = flow.to[arc];
                if done[v] {
                    continue;
                }
                let nd = &d + &flow.cost[arc] + &potential[u] - &potential[v];
                debug_assert!(!(&nd - &d).is_negative(), "negative reduced cost");
                let better = match &dist[v] {
                    None => true,
                    Some(old) => nd < *old,
                };
                if better {
                    dist[v] = Some(nd.clone());
                    parent_arc[v] = arc;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        let Some(d_sink) = dist[sink].clone() else {
            return Err(Error::Infeasible(format!(
                "only {shipped} of {total_demand} units can reach the destination within the horizon"
            )));
        };
        // cap potential growth at the sink distance so unreached nodes stay consistent
        for v in 0..nodes {
            let dv = dist[v].clone().unwrap_or_else(|| d_sink.clone());
            let dv = if dv > d_sink { d_sink.clone() } else { dv };
            potential[v] += dv;
        }
        // bottleneck along the path, bounded by the remaining demand
        let mut push = &total_demand - &shipped;
        let mut v = sink;
        while v != source {
            let arc = parent_arc[v];
            if flow.residual[arc] < push {
                push = flow.residual[arc].clone();
            }
            v = flow.to[arc ^ 1];
        }
        debug_assert!(push.is_positive());
        let mut v = sink;
        while v != source {
            let arc = parent_arc[v];
            flow.residual[arc] -= &push;
            flow.residual[arc ^ 1] += &push;
            v = flow.to[arc ^ 1];
        }
        shipped += &push;
        iterations += 1;
    }
    // sanity: all source arcs saturated
    for (i, &arc) in source_arcs.iter().enumerate() {
        debug_assert_eq!(flow.flow_on(arc), net.demand[i], "source arc not saturated");
    }

    let mut q_star = vec![vec![Rat::zero(); k]; n];
    let mut schedule_cost = Rat::zero();
    let mut free_flow_cost = Rat::zero();
    for i in 1..=n {
        for kk in 0..k {
            let q = flow.flow_on(entry_arcs[i - 1][kk]);
            if q.is_positive() {
                schedule_cost += &net.slot_cost[kk] * &q;
                free_flow_cost += &net.path_free_flow[i - 1] * &q;
            }
            q_star[i - 1][kk] = q;
        }
    }
    let objective = &schedule_cost + &free_flow_cost;

    // re-measure primal feasibility of the extracted solution
    let mut residual = Rat::zero();
    for i in 1..=n {
        let total: Rat = q_star[i - 1].iter().cloned().sum();
        let gap = (total - &net.demand[i - 1]).abs();
        residual = crate::rat::rmax(&residual, &gap);
        for kk in 0..k {
            let load: Rat = scenario
                .net
                .upstream_of(i)
                .iter()
                .map(|&j| q_star[j - 1][kk].clone())
                .sum();
            let over = load - &net.link_capacity[i - 1];
            if over > residual {
                residual = over;
            }
        }
    }
    debug_assert!(residual.is_zero(), "exact solve left residual {residual}");

    // duals from potentials, sink pinned to zero
    let sink_potential = potential[sink].clone();
    let rho: Vec<Rat> = (1..=n)
        .map(|i| -(&potential[origin_node(i)] - &sink_potential))
        .collect();
    let mut p = vec![vec![Rat::zero(); k]; n];
    for i in 1..=n {
        let parent = scenario.net.parent(i);
        for kk in 0..k {
            let head = if parent == 0 {
                sink
            } else {
                slot_node(parent, kk)
            };
            let price = &potential[head] - &potential[slot_node(i, kk)];
            if price.is_positive() {
                p[i - 1][kk] = price;
            }
        }
    }
    Ok(LpSolution {
        q_star,
        objective,
        schedule_cost,
        free_flow_cost,
        rho,
        p,
        iterations,
        residual,
    })
}

/// Verdict for one optimality-condition family.
#[derive(Debug, Clone, Serialize)]
pub struct OcVerdict {
    pub pass: bool,
    pub worst: f64,
    pub worst_exact: String,
    pub origin: Option<usize>,
    pub slot: Option<usize>,
}

struct OcBuilder {
    pass: bool,
    worst: Rat,
    origin: Option<usize>,
    slot: Option<usize>,
}

impl OcBuilder {
    fn new() -> OcBuilder {
        OcBuilder {
            pass: true,
            worst: Rat::zero(),
            origin: None,
            slot: None,
        }
    }

    fn record(&mut self, violation: Rat, tol: &Rat, origin: usize, slot: usize) {
        if violation > *tol {
            self.pass = false;
        }
        if violation > self.worst {
            self.worst = violation;
            self.origin = Some(origin);
            self.slot = Some(slot);
        }
    }

    fn build(self) -> OcVerdict {
        OcVerdict {
            pass: self.pass,
            worst: to_f64(&self.worst),
            worst_exact: self.worst.to_string(),
            origin: self.origin,
            slot: self.slot,
        }
    }
}

/// Optimality-condition report: demand conservation, stationarity of the
/// priced entry costs against the demand multipliers, and capacity
/// complementarity of the congestion prices.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalityReport {
    pub demand: OcVerdict,
    pub stationarity: OcVerdict,
    pub capacity: OcVerdict,
    pub sign: OcVerdict,
    pub pass: bool,
}

/// Checks a primal/dual pair against the optimality conditions with
/// tolerance `tol` (zero = exact complementarity).
pub fn check_optimality(scenario: &Scenario, sol: &LpSolution, tol: &Rat) -> OptimalityReport {
    let net = discretize(scenario);
    let n = scenario.net.len();
    let k = net.slots;
    let mut demand = OcBuilder::new();
    let mut stationarity = OcBuilder::new();
    let mut capacity = OcBuilder::new();
    let mut sign = OcBuilder::new();

    for i in 1..=n {
        let total: Rat = sol.q_star[i - 1].iter().cloned().sum();
        demand.record((total - &net.demand[i - 1]).abs(), tol, i, 0);
        for kk in 0..k {
            let mut lhs = &net.slot_cost[kk] + &net.path_free_flow[i - 1];
            for &j in scenario.net.downstream_of(i) {
                lhs += &sol.p[j - 1][kk];
            }
            let slack = &lhs - &sol.rho[i - 1];
            // priced cost must never undercut the multiplier
            sign.record(crate::rat::rmax(&-&slack, &Rat::zero()), tol, i, kk);
            if sol.q_star[i - 1][kk] > *tol {
                stationarity.record(slack.abs(), tol, i, kk);
            }
            let neg_q = crate::rat::rmax(&-&sol.q_star[i - 1][kk], &Rat::zero());
            sign.record(neg_q, tol, i, kk);
            let neg_p = crate::rat::rmax(&-&sol.p[i - 1][kk], &Rat::zero());
            sign.record(neg_p, tol, i, kk);
        }
    }
    for i in 1..=n {
        for kk in 0..k {
            let load: Rat = scenario
                .net
                .upstream_of(i)
                .iter()
                .map(|&j| sol.q_star[j - 1][kk].clone())
                .sum();
            let cap = &net.link_capacity[i - 1];
            let over = crate::rat::rmax(&(&load - cap), &Rat::zero());
            capacity.record(over, tol, i, kk);
            if sol.p[i - 1][kk] > *tol {
                capacity.record((load - cap).abs(), tol, i, kk);
            }
        }
    }
    let pass = demand.pass && stationarity.pass && capacity.pass && sign.pass;
    OptimalityReport {
        demand: demand.build(),
        stationarity: stationarity.build(),
        capacity: capacity.build(),
        sign: sign.build(),
        pass,
    }
}

/// Exhaustive oracle: enumerates every integral allocation of demand over
/// slots under the nested capacity constraints and returns the cheapest.
/// The instance must be integer-scaled (demands and slot capacities integer
/// multiples of a common unit); the candidate count is guarded.
pub fn brute_force_lp(scenario: &Scenario) -> Result<(Rat, Vec<Vec<Rat>>)> {
    const GUARD: u128 = 10_000_000;
    let net = discretize(scenario);
    let n = scenario.net.len();
    let k = net.slots;

    // common unit: gcd of all capacities and positive demands
    let mut unit: Option<Rat> = None;
    let mut fold = |x: &Rat| {
        if x.is_zero() {
            return;
        }
        unit = Some(match &unit {
            None => x.abs(),
            Some(u) => rat_gcd(u, x),
        });
    };
    for cap in &net.link_capacity {
        fold(cap);
    }
    for q in &net.demand {
        fold(q);
    }
    let Some(unit) = unit else {
        return Ok((Rat::zero(), vec![vec![Rat::zero(); k]; n]));
    };

    let demand_units: Vec<u64> = net
        .demand
        .iter()
        .map(|q| {
            let r = q / &unit;
            if !r.is_integer() {
                return Err(Error::Value(format!(
                    "demand {q} is not an integer multiple of the unit {unit}"
                )));
            }
            Ok(r.to_integer().try_into().unwrap_or(u64::MAX))
        })
        .collect::<Result<_>>()?;
    let cap_units: Vec<u64> = net
        .link_capacity
        .iter()
        .map(|c| {
            let r = c / &unit;
            if !r.is_integer() {
                return Err(Error::Value(format!(
                    "slot capacity {c} is not an integer multiple of the unit {unit}"
                )));
            }
            Ok(r.to_integer().try_into().unwrap_or(u64::MAX))
        })
        .collect::<Result<_>>()?;

    let mut estimate: u128 = 1;
    for &q in &demand_units {
        estimate = estimate.saturating_mul(compositions(q as u128, k as u128));
        if estimate > GUARD {
            return Err(Error::TooLarge(format!(
                "about {estimate} candidate allocations exceed the guard of {GUARD}"
            )));
        }
    }

    // cost of one unit placed in (origin, slot)
    let unit_cost: Vec<Vec<Rat>> = (0..n)
        .map(|i| {
            (0..k)
                .map(|kk| (&net.slot_cost[kk] + &net.path_free_flow[i]) * &unit)
                .collect()
        })
        .collect();

    let mut rem: Vec<Vec<u64>> = (0..n).map(|i| vec![cap_units[i]; k]).collect();
    let mut assign = vec![vec![0u64; k]; n];
    let mut best: Option<(Rat, Vec<Vec<u64>>)> = None;
    let mut current = Rat::zero();
    search(
        scenario,
        &demand_units,
        &unit_cost,
        0,
        0,
        demand_units.first().copied().unwrap_or(0),
        &mut rem,
        &mut assign,
        &mut current,
        &mut best,
    );
    let Some((best_cost, best_assign)) = best else {
        return Err(Error::Infeasible(
            "no integral allocation satisfies the capacity constraints".into(),
        ));
    };
    let q = best_assign
        .iter()
        .map(|row| row.iter().map(|&v| rint(v as i64) * &unit).collect())
        .collect();
    Ok((best_cost, q))
}

fn rat_gcd(a: &Rat, b: &Rat) -> Rat {
    // gcd(p1/q1, p2/q2) = gcd(p1 q2, p2 q1) / (q1 q2)
    let num = (a.numer() * b.denom()).gcd(&(b.numer() * a.denom()));
    Rat::new(num, a.denom() * b.denom())
}

fn compositions(total: u128, parts: u128) -> u128 {
    // C(total + parts - 1, parts - 1), saturating
    if parts == 0 {
        return if total == 0 { 1 } else { 0 };
    }
    let mut result: u128 = 1;
    let n = total + parts - 1;
    let r = (parts - 1).min(total);
    for step in 0..r {
        result = result.saturating_mul(n - step);
        result /= step + 1;
        if result > u128::MAX / 2 {
            return u128::MAX / 2;
        }
    }
    result
}

#[allow(clippy::too_many_arguments)]
fn search(
    scenario: &Scenario,
    demand_units: &[u64],
    unit_cost: &[Vec<Rat>],
    origin_idx: usize,
    slot: usize,
    left: u64,
    rem: &mut Vec<Vec<u64>>,
    assign: &mut Vec<Vec<u64>>,
    current: &mut Rat,
    best: &mut Option<(Rat, Vec<Vec<u64>>)>,
) {
    if let Some((bc, _)) = best {
        if *current >= *bc {
            return; // cannot improve: unit costs are nonnegative
        }
    }
    if origin_idx == demand_units.len() {
        let better = match best {
            None => true,
            Some((bc, _)) => *current < *bc,
        };
        if better {
            *best = Some((current.clone(), assign.clone()));
        }
        return;
    }
    let k = rem[0].len();
    if left == 0 {
        let next = origin_idx + 1;
        let next_left = demand_units.get(next).copied().unwrap_or(0);
        search(
            scenario,
            demand_units,
            unit_cost,
            next,
            0,
            next_left,
            rem,
            assign,
            current,
            best,
        );
        return;
    }
    if slot == k {
        return; // demand left but no slots: dead end
    }
    let origin = origin_idx + 1;
    let path: Vec<usize> = scenario.net.downstream_of(origin).to_vec();
    let cap_here = path.iter().map(|&j| rem[j - 1][slot]).min().unwrap_or(0);
    let max_here = cap_here.min(left);
    for put in (0..=max_here).rev() {
        for &j in &path {
            rem[j - 1][slot] -= put;
        }
        assign[origin_idx][slot] = put;
        *current += unit_cost[origin_idx][slot].clone() * rint(put as i64);
        search(
            scenario,
            demand_units,
            unit_cost,
            origin_idx,
            slot + 1,
            left - put,
            rem,
            assign,
            current,
            best,
        );
        *current -= unit_cost[origin_idx][slot].clone() * rint(put as i64);
        assign[origin_idx][slot] = 0;
        for &j in &path {
            rem[j - 1][slot] += put;
        }
    }
}

/// Solves the scenario at each grid step and tabulates the objectives.
pub fn refine_study(scenario: &Scenario, dts: &[Rat]) -> Result<Vec<(Rat, Rat)>> {
    let mut table = Vec::with_capacity(dts.len());
    for dt in dts {
        let mut refined = scenario.clone();
        refined.dt = dt.clone();
        refined.validate()?;
        let sol = solve(&refined)?;
        table.push((dt.clone(), sol.objective));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{schedule_cost, Scenario, TreeNetwork};
    use crate::rat::{rat, rint};
    use crate::sample::{random_scenario, ScenarioParams};

    fn single_link_scenario(demand: i64, horizon: (i64, i64)) -> Scenario {
        let net = TreeNetwork::build(&[0], &[rint(1)], &[rint(0)]).unwrap();
        Scenario::new(
            net,
            vec![rint(demand)],
            schedule_cost("0", "1", "1"),
            rint(horizon.0),
            rint(horizon.1),
            rat(1, 2),
        )
        .unwrap()
    }

    #[test]
    fn slot_costs_are_exact_averages() {
        let net = TreeNetwork::build(&[0], &[rint(1)], &[rint(0)]).unwrap();
        let scenario = Scenario::new(
            net,
            vec![rint(1)],
            schedule_cost("0", "1", "1"),
            rint(-1),
            rint(1),
            rat(1, 2),
        )
        .unwrap();
        let ten = discretize(&scenario);
        assert_eq!(ten.slots, 4);
        assert_eq!(
            ten.slot_cost,
            vec![rat(3, 4), rat(1, 4), rat(1, 4), rat(3, 4)]
        );
        assert_eq!(ten.node_count(1), 7);
    }

    #[test]
    fn single_bottleneck_optimum_and_duals() {
        let scenario = single_link_scenario(2, (-2, 2));
        let sol = solve(&scenario).unwrap();
        assert_eq!(sol.objective, rint(1));
        assert_eq!(sol.schedule_cost, rint(1));
        assert_eq!(sol.free_flow_cost, rint(0));
        // the four slots spanning [-1, 1] fill at capacity 1/2 each
        let expected: Vec<Rat> = vec![
            rint(0),
            rint(0),
            rat(1, 2),
            rat(1, 2),
            rat(1, 2),
            rat(1, 2),
            rint(0),
            rint(0),
        ];
        assert_eq!(sol.q_star[0], expected);
        // demand multiplier equals the marginal (boundary) slot cost
        assert_eq!(sol.rho[0], rat(3, 4));
        // congestion prices complement the slot costs on used slots
        let expected_p: Vec<Rat> = vec![
            rint(0),
            rint(0),
            rint(0),
            rat(1, 2),
            rat(1, 2),
            rint(0),
            rint(0),
            rint(0),
        ];
        assert_eq!(sol.p[0], expected_p);
        let oc = check_optimality(&scenario, &sol, &Rat::zero());
        assert!(oc.pass, "{oc:?}");

        // strong duality: objective = sum rho Q - sum p mu dt
        let dual: Rat = &sol.rho[0] * rint(2) - sol.p[0].iter().map(|p| p * rat(1, 2)).sum::<Rat>();
        assert_eq!(dual, sol.objective);
    }

    #[test]
    fn zero_demand_trivial_optimum() {
        let scenario = single_link_scenario(0, (-2, 2));
        let sol = solve(&scenario).unwrap();
        assert_eq!(sol.objective, rint(0));
        assert!(sol.q_star[0].iter().all(|q| q.is_zero()));
        let oc = check_optimality(&scenario, &sol, &Rat::zero());
        assert!(oc.pass, "{oc:?}");
    }

    #[test]
    fn free_flow_term_decomposes() {
        let net = TreeNetwork::build(
            &[3, 3, 0],
            &[rint(1), rint(1), rint(2)],
            &[rint(1), rint(2), rint(1)],
        )
        .unwrap();
        let scenario = Scenario::new(
            net,
            vec![rint(1), rint(1), rint(0)],
            schedule_cost("0", "1", "1"),
            rint(-2),
            rint(2),
            rat(1, 2),
        )
        .unwrap();
        let sol = solve(&scenario).unwrap();
        assert_eq!(sol.free_flow_cost, rint(5));
        assert_eq!(sol.objective, &sol.schedule_cost + rint(5));
        let (bf, _) = brute_force_lp(&scenario).unwrap();
        assert_eq!(bf, sol.objective);
        let oc = check_optimality(&scenario, &sol, &Rat::zero());
        assert!(oc.pass, "{oc:?}");
    }

    #[test]
    fn brute_force_matches_on_single_link() {
        let scenario = single_link_scenario(2, (-2, 2));
        let (bf, q) = brute_force_lp(&scenario).unwrap();
        assert_eq!(bf, rint(1));
        let total: Rat = q[0].iter().cloned().sum();
        assert_eq!(total, rint(2));
    }

    #[test]
    fn brute_force_zero_demand() {
        let scenario = single_link_scenario(0, (-2, 2));
        let (obj, q) = brute_force_lp(&scenario).unwrap();
        assert_eq!(obj, rint(0));
        assert!(q[0].iter().all(|v| v.is_zero()));
    }

    #[test]
    fn brute_force_guard_trips() {
        let net = TreeNetwork::build(&[0], &[rint(1)], &[rint(0)]).unwrap();
        let scenario = Scenario::new(
            net,
            vec![rint(10)],
            schedule_cost("0", "1", "1"),
            rint(-10),
            rint(10),
            rat(1, 2),
        )
        .unwrap();
        assert!(matches!(brute_force_lp(&scenario), Err(Error::TooLarge(_))));
    }

    #[test]
    fn inner_bottleneck_infeasible() {
        // chain 1 -> 2 -> 0: root admits the demand but link 1 cannot
        let net = TreeNetwork::build(&[2, 0], &[rint(1), rint(5)], &[rint(0), rint(0)]).unwrap();
        let scenario = Scenario::new(
            net,
            vec![rint(4), rint(0)],
            schedule_cost("0", "1", "1"),
            rint(0),
            rint(1),
            rat(1, 2),
        )
        .unwrap();
        assert!(matches!(solve(&scenario), Err(Error::Infeasible(_))));
    }

    #[test]
    fn perturbed_solution_fails_stationarity() {
        let scenario = single_link_scenario(2, (-2, 2));
        let mut sol = solve(&scenario).unwrap();
        // move half a unit from a used slot to a strictly costlier empty one
        sol.q_star[0][2] -= rat(1, 2);
        sol.q_star[0][0] += rat(1, 2);
        let oc = check_optimality(&scenario, &sol, &Rat::zero());
        assert!(!oc.stationarity.pass);
        assert!(oc.demand.pass);
    }

    #[test]
    fn refine_study_exact_on_grid_kink() {
        let scenario = single_link_scenario(2, (-2, 2));
        let table = refine_study(&scenario, &[rat(1, 2), rat(1, 4), rat(1, 8)]).unwrap();
        for (_, obj) in &table {
            assert_eq!(*obj, rint(1));
        }
        let empty = refine_study(&scenario, &[]).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn off_grid_preferred_time_converges() {
        // t* = 0.3 off the grid: optimum approaches delta Q^2 / (2 mu) as dt shrinks
        let net = TreeNetwork::build(&[0], &[rint(1)], &[rint(0)]).unwrap();
        let mut scenario = Scenario::new(
            net,
            vec![rint(2)],
            schedule_cost("3/10", "1", "1"),
            rint(-3),
            rint(3),
            rat(1, 2),
        )
        .unwrap();
        let analytic = rat(1, 2) * rint(4) / rint(2); // (beta gamma / (beta+gamma)) Q^2 / (2 mu)
        let sol_coarse = solve(&scenario).unwrap();
        scenario.dt = rat(1, 4);
        let sol_fine = solve(&scenario).unwrap();
        let err_coarse = &sol_coarse.objective - &analytic;
        let err_fine = &sol_fine.objective - &analytic;
        assert!(!err_coarse.is_negative());
        assert!(!err_fine.is_negative());
        assert!(err_fine <= err_coarse);
        scenario.dt = rat(1, 16);
        let sol_finest = solve(&scenario).unwrap();
        assert!(&sol_finest.objective - &analytic <= err_fine);
    }

    #[test]
    fn oracle_equivalence_on_random_instances() {
        let params = ScenarioParams {
            max_nodes: 4,
            max_leaf_capacity: 2,
            max_demand: 2,
            max_free_flow_steps: 1,
            dt: rint(1),
        };
        let mut checked = 0;
        for idx in 0..12 {
            let scenario = random_scenario(&params, 314, idx);
            if scenario.slots() > 8 {
                continue;
            }
            let sol = solve(&scenario).unwrap();
            let (bf, _) = match brute_force_lp(&scenario) {
                Ok(v) => v,
                Err(Error::TooLarge(_)) => continue,
                Err(e) => panic!("oracle failed: {e}"),
            };
            assert_eq!(sol.objective, bf, "instance {idx}");
            let oc = check_optimality(&scenario, &sol, &Rat::zero());
            assert!(oc.pass, "instance {idx}: {oc:?}");
            checked += 1;
        }
        assert!(checked >= 3, "only {checked} instances fit the oracle");
    }
}
