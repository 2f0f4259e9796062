//! Rooted tree network, schedule-delay cost and scenario description.
//!
//! Nodes are numbered 1..=N with the destination as node 0. Link `i` runs
//! from node `i` toward its parent and carries a bottleneck of capacity
//! `mu_i` at its downstream end, after a free-flow traversal of `d_i`.
//! Capacities must be monotone along the tree: the children of any node may
//! not jointly out-supply the node's own link.

use std::collections::BTreeMap;

use num::{Signed, Zero};
use serde_json::Value;

use crate::curve::Step;
use crate::error::{Error, Result};
use crate::rat::{parse_rat, rat_from_json, Rat};

/// Validated rooted tree with per-link capacity and free-flow time.
#[derive(Debug, Clone)]
pub struct TreeNetwork {
    parent: Vec<usize>,
    capacity: Vec<Rat>,
    free_flow: Vec<Rat>,
    /// children[n] = links flowing into node n, for n in 0..=N.
    children: Vec<Vec<usize>>,
    /// downstream[i] = link i plus every link on its path to the root.
    downstream: Vec<Vec<usize>>,
    /// upstream[i] = link i plus every link in its subtree.
    upstream: Vec<Vec<usize>>,
}

impl TreeNetwork {
    /// Builds and validates a network from per-origin parent/capacity/time arrays.
    ///
    /// `parents[i-1]` is the parent node of origin `i` (0 = destination).
    pub fn build(parents: &[usize], capacities: &[Rat], free_flow_times: &[Rat]) -> Result<Self> {
        let n = parents.len();
        if capacities.len() != n || free_flow_times.len() != n {
            return Err(Error::Value(format!(
                "array lengths disagree: {} parents, {} capacities, {} free-flow times",
                n,
                capacities.len(),
                free_flow_times.len()
            )));
        }
        for (idx, &p) in parents.iter().enumerate() {
            if p > n {
                return Err(Error::Value(format!(
                    "node {} has parent {} outside 0..={}",
                    idx + 1,
                    p,
                    n
                )));
            }
            if p == idx + 1 {
                return Err(Error::Cycle(format!("node {} is its own parent", idx + 1)));
            }
        }
        for (idx, mu) in capacities.iter().enumerate() {
            if !mu.is_positive() {
                return Err(Error::Value(format!(
                    "capacity of link {} must be > 0",
                    idx + 1
                )));
            }
        }
        for (idx, d) in free_flow_times.iter().enumerate() {
            if d.is_negative() {
                return Err(Error::Value(format!(
                    "free-flow time of link {} must be >= 0",
                    idx + 1
                )));
            }
        }
        // Every origin must reach the root without revisiting a node.
        for start in 1..=n {
            let mut node = start;
            let mut steps = 0usize;
            while node != 0 {
                node = parents[node - 1];
                steps += 1;
                if steps > n {
                    return Err(Error::Cycle(format!("node {start} never reaches node 0")));
                }
            }
        }
        let mut children = vec![Vec::new(); n + 1];
        for i in 1..=n {
            children[parents[i - 1]].push(i);
        }
        let mut downstream = vec![Vec::new(); n];
        for i in 1..=n {
            let mut path = vec![i];
            let mut node = parents[i - 1];
            while node != 0 {
                path.push(node);
                node = parents[node - 1];
            }
            downstream[i - 1] = path;
        }
        let mut upstream = vec![Vec::new(); n];
        for i in 1..=n {
            for &j in &downstream[i - 1] {
                upstream[j - 1].push(i);
            }
        }
        for set in &mut upstream {
            set.sort_unstable();
        }
        let net = TreeNetwork {
            parent: parents.to_vec(),
            capacity: capacities.to_vec(),
            free_flow: free_flow_times.to_vec(),
            children,
            downstream,
            upstream,
        };
        for i in 1..=n {
            let total: Rat = net.children(i).iter().map(|&j| net.capacity(j)).sum();
            if total > *net.capacity_ref(i) {
                return Err(Error::Capacity {
                    node: i,
                    children_total: total.to_string(),
                    capacity: net.capacity_ref(i).to_string(),
                });
            }
        }
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn check_node(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.len() {
            Err(Error::Index(i))
        } else {
            Ok(())
        }
    }

    pub fn parent(&self, i: usize) -> usize {
        self.parent[i - 1]
    }

    pub fn capacity(&self, i: usize) -> Rat {
        self.capacity[i - 1].clone()
    }

    pub fn capacity_ref(&self, i: usize) -> &Rat {
        &self.capacity[i - 1]
    }

    pub fn free_flow(&self, i: usize) -> &Rat {
        &self.free_flow[i - 1]
    }

    /// Links flowing into node `n` (n = 0 gives the root's children).
    pub fn children(&self, n: usize) -> &[usize] {
        &self.children[n]
    }

    /// Link i plus all links on the path from i to the root, in path order.
    pub fn downstream_of(&self, i: usize) -> &[usize] {
        &self.downstream[i - 1]
    }

    /// Link i plus all links in its subtree, sorted.
    pub fn upstream_of(&self, i: usize) -> &[usize] {
        &self.upstream[i - 1]
    }

    /// Free-flow time strictly downstream of bottleneck i.
    pub fn downstream_free_flow(&self, i: usize) -> Result<Rat> {
        self.check_node(i)?;
        Ok(self
            .downstream_of(i)
            .iter()
            .skip(1)
            .map(|&j| self.free_flow(j).clone())
            .sum())
    }

    /// Free-flow time of the whole path of origin i, bottleneck i included.
    pub fn path_free_flow(&self, i: usize) -> Rat {
        self.downstream_of(i)
            .iter()
            .map(|&j| self.free_flow(j).clone())
            .sum()
    }

    /// Links ordered children-before-parents (leaves first).
    pub fn topo_leaves_first(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (1..=self.len()).collect();
        let mut depth = vec![0usize; self.len() + 1];
        for i in 1..=self.len() {
            let mut node = i;
            while node != 0 {
                depth[i] += 1;
                node = self.parent(node);
            }
        }
        order.sort_by(|&a, &b| depth[b].cmp(&depth[a]).then(a.cmp(&b)));
        order
    }

    /// Links ordered parents-before-children (root side first).
    pub fn topo_root_first(&self) -> Vec<usize> {
        let mut order = self.topo_leaves_first();
        order.reverse();
        order
    }

    /// Total capacity of the links entering the destination.
    pub fn root_capacity(&self) -> Rat {
        self.children(0).iter().map(|&j| self.capacity(j)).sum()
    }
}

/// Two-slope piecewise-linear schedule-delay cost
/// `c(t) = beta * max(0, t* - t) + gamma * max(0, t - t*)`.
#[derive(Debug, Clone)]
pub struct ScheduleCost {
    pub preferred: Rat,
    pub early_slope: Rat,
    pub late_slope: Rat,
}

impl ScheduleCost {
    pub fn new(preferred: Rat, early_slope: Rat, late_slope: Rat) -> Result<Self> {
        if !early_slope.is_positive() || !late_slope.is_positive() {
            return Err(Error::Value("schedule cost slopes must be > 0".into()));
        }
        Ok(ScheduleCost {
            preferred,
            early_slope,
            late_slope,
        })
    }

    pub fn eval(&self, t: &Rat) -> Rat {
        if *t < self.preferred {
            (&self.preferred - t) * &self.early_slope
        } else {
            (t - &self.preferred) * &self.late_slope
        }
    }

    /// Exact integral of c over [a, b].
    pub fn integral(&self, a: &Rat, b: &Rat) -> Rat {
        if a >= b {
            return Rat::zero();
        }
        // Integral of the one-sided branch: slope * (half the squared distance).
        let half = crate::rat::rat(1, 2);
        let early = |from: &Rat, to: &Rat| -> Rat {
            // integral of beta*(t*-t) over [from, to], assuming to <= t*
            let lo = &self.preferred - to;
            let hi = &self.preferred - from;
            &self.early_slope * &half * (&hi * &hi - &lo * &lo)
        };
        let late = |from: &Rat, to: &Rat| -> Rat {
            let lo = from - &self.preferred;
            let hi = to - &self.preferred;
            &self.late_slope * &half * (&hi * &hi - &lo * &lo)
        };
        if *b <= self.preferred {
            early(a, b)
        } else if *a >= self.preferred {
            late(a, b)
        } else {
            early(a, &self.preferred) + late(&self.preferred, b)
        }
    }

    /// Average of c over a slot [a, b]; the kink is handled exactly.
    pub fn slot_average(&self, a: &Rat, b: &Rat) -> Rat {
        self.integral(a, b) / (b - a)
    }
}

/// One assignment instance: network, demands, cost, horizon and grid step.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: TreeNetwork,
    pub demand: Vec<Rat>,
    pub cost: ScheduleCost,
    pub t_start: Rat,
    pub t_end: Rat,
    pub dt: Rat,
    /// Optional per-origin inflow profiles carried by the scenario file.
    pub inflows: Option<Vec<Step>>,
}

impl Scenario {
    pub fn new(
        net: TreeNetwork,
        demand: Vec<Rat>,
        cost: ScheduleCost,
        t_start: Rat,
        t_end: Rat,
        dt: Rat,
    ) -> Result<Self> {
        let scenario = Scenario {
            net,
            demand,
            cost,
            t_start,
            t_end,
            dt,
            inflows: None,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.demand.len() != self.net.len() {
            return Err(Error::Value(format!(
                "{} demands for {} origins",
                self.demand.len(),
                self.net.len()
            )));
        }
        for (idx, q) in self.demand.iter().enumerate() {
            if q.is_negative() {
                return Err(Error::Value(format!(
                    "demand of origin {} is negative",
                    idx + 1
                )));
            }
        }
        if !self.dt.is_positive() {
            return Err(Error::Value("time step must be > 0".into()));
        }
        let span = &self.t_end - &self.t_start;
        if !span.is_positive() {
            return Err(Error::Value("horizon must have positive length".into()));
        }
        if !(&span / &self.dt).is_integer() {
            return Err(Error::Value(format!(
                "horizon length {span} is not an integer multiple of dt {}",
                self.dt
            )));
        }
        let total: Rat = self.demand.iter().cloned().sum();
        let throughput = self.net.root_capacity() * &span;
        if total > throughput {
            return Err(Error::Infeasible(format!(
                "total demand {total} exceeds destination throughput {throughput} over the horizon"
            )));
        }
        if let Some(inflows) = &self.inflows {
            if inflows.len() != self.net.len() {
                return Err(Error::Value(format!(
                    "{} inflow profiles for {} origins",
                    inflows.len(),
                    self.net.len()
                )));
            }
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        let span = &self.t_end - &self.t_start;
        let k = span / &self.dt;
        k.to_integer().try_into().unwrap_or(0)
    }

    pub fn slot_bounds(&self, k: usize) -> (Rat, Rat) {
        let lo = &self.t_start + &self.dt * crate::rat::rint(k as i64);
        let hi = &lo + &self.dt;
        (lo, hi)
    }

    pub fn total_demand(&self) -> Rat {
        self.demand.iter().cloned().sum()
    }

    /// Returns a copy with the horizon end extended to `at_least`, rounded up
    /// to the scenario grid.
    pub fn padded_to(&self, at_least: &Rat) -> Scenario {
        if *at_least <= self.t_end {
            return self.clone();
        }
        let slots = ((at_least - &self.t_start) / &self.dt).ceil();
        let t_end = &self.t_start + slots * &self.dt;
        Scenario {
            t_end,
            ..self.clone()
        }
    }
}

/// Parses the scenario JSON format:
///
/// ```json
/// {
///   "nodes": [{"id": 1, "parent": 0, "mu": 1, "d": 0, "Q": 2}],
///   "cost": {"t_star": 0, "beta": 1, "gamma": 1},
///   "horizon": [-2, 2],
///   "dt": 0.5,
///   "inflows": [{"origin": 1, "times": [0, 1], "rates": [2]}]
/// }
/// ```
///
/// Numbers may be decimal literals or exact fraction strings like "1/3".
pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::Parse("scenario must be a JSON object".into()))?;

    let nodes = obj
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("missing 'nodes' array".into()))?;
    let mut by_id: BTreeMap<usize, (usize, Rat, Rat, Rat)> = BTreeMap::new();
    for node in nodes {
        let node = node
            .as_object()
            .ok_or_else(|| Error::Parse("node entries must be objects".into()))?;
        let id = node
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse("node missing integer 'id'".into()))?
            as usize;
        let parent = node
            .get("parent")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Parse(format!("node {id} missing integer 'parent'")))?
            as usize;
        let field = |name: &str| -> Result<Rat> {
            node.get(name)
                .ok_or_else(|| Error::Parse(format!("node {id} missing '{name}'")))
                .and_then(rat_from_json)
        };
        let mu = field("mu")?;
        let d = field("d")?;
        let q = field("Q")?;
        if by_id.insert(id, (parent, mu, d, q)).is_some() {
            return Err(Error::Parse(format!("duplicate node id {id}")));
        }
    }
    let n = by_id.len();
    let expected: Vec<usize> = (1..=n).collect();
    let got: Vec<usize> = by_id.keys().copied().collect();
    if got != expected {
        return Err(Error::Parse(format!(
            "node ids must be exactly 1..={n}, got {got:?}"
        )));
    }
    let mut parents = Vec::with_capacity(n);
    let mut mus = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    let mut demand = Vec::with_capacity(n);
    for i in 1..=n {
        let (p, mu, d, q) = by_id.remove(&i).unwrap();
        parents.push(p);
        mus.push(mu);
        ds.push(d);
        demand.push(q);
    }
    let net = TreeNetwork::build(&parents, &mus, &ds)?;

    let cost_obj = obj
        .get("cost")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Parse("missing 'cost' object".into()))?;
    let cost_field = |name: &str| -> Result<Rat> {
        cost_obj
            .get(name)
            .ok_or_else(|| Error::Parse(format!("cost missing '{name}'")))
            .and_then(rat_from_json)
    };
    let cost = ScheduleCost::new(
        cost_field("t_star")?,
        cost_field("beta")?,
        cost_field("gamma")?,
    )?;

    let horizon = obj
        .get("horizon")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("missing 'horizon' [start, end]".into()))?;
    if horizon.len() != 2 {
        return Err(Error::Parse("'horizon' must have two entries".into()));
    }
    let t_start = rat_from_json(&horizon[0])?;
    let t_end = rat_from_json(&horizon[1])?;
    let dt = obj
        .get("dt")
        .ok_or_else(|| Error::Parse("missing 'dt'".into()))
        .and_then(rat_from_json)?;

    let mut scenario = Scenario::new(net, demand, cost, t_start, t_end, dt)?;

    if let Some(list) = obj.get("inflows") {
        let list = list
            .as_array()
            .ok_or_else(|| Error::Parse("'inflows' must be an array".into()))?;
        let mut profiles = vec![Step::zero(); scenario.net.len()];
        for entry in list {
            let entry = entry
                .as_object()
                .ok_or_else(|| Error::Parse("inflow entries must be objects".into()))?;
            let origin = entry
                .get("origin")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Parse("inflow missing integer 'origin'".into()))?
                as usize;
            scenario.net.check_node(origin)?;
            let times = entry
                .get("times")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Parse("inflow missing 'times'".into()))?
                .iter()
                .map(rat_from_json)
                .collect::<Result<Vec<_>>>()?;
            let rates = entry
                .get("rates")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Parse("inflow missing 'rates'".into()))?
                .iter()
                .map(rat_from_json)
                .collect::<Result<Vec<_>>>()?;
            profiles[origin - 1] = Step::from_breakpoints(times, rates)?;
        }
        scenario.inflows = Some(profiles);
        scenario.validate()?;
    }
    Ok(scenario)
}

/// Convenience constructor used by tests and generators.
pub fn schedule_cost(t_star: &str, beta: &str, gamma: &str) -> ScheduleCost {
    ScheduleCost::new(
        parse_rat(t_star).unwrap(),
        parse_rat(beta).unwrap(),
        parse_rat(gamma).unwrap(),
    )
    .unwrap()
}
