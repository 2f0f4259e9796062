//! Machine-readable exports: tidy CSV tables and canonical JSON summaries.
//!
//! Floats are printed with fixed precision and exact rationals are carried
//! alongside where equality matters, so identical runs produce
//! byte-identical artifacts.

use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::net::Scenario;
use crate::rat::{to_f64, Rat};
use crate::sim::{CostBreakdown, LagrangianView, TrafficState};
use crate::solver::LpSolution;

/// CSV cell rendering: exact fractions in exact mode (lossless reload),
/// fixed-precision floats otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumberStyle {
    Exact,
    Fixed,
}

impl NumberStyle {
    pub fn from_exact_flag(exact: bool) -> Self {
        if exact {
            NumberStyle::Exact
        } else {
            NumberStyle::Fixed
        }
    }

    fn render(&self, x: &Rat) -> String {
        match self {
            NumberStyle::Exact => x.to_string(),
            NumberStyle::Fixed => fmt_num(x),
        }
    }
}

/// Fixed-precision rendering used in CSV cells.
pub fn fmt_num(x: &Rat) -> String {
    format!("{:.12}", to_f64(x))
}

/// Number plus its exact form, for JSON fields where equality matters.
pub fn num_json(x: &Rat) -> Value {
    json!({ "value": to_f64(x), "exact": x.to_string() })
}

pub fn breakdown_json(cost: &CostBreakdown) -> Value {
    json!({
        "schedule": num_json(&cost.schedule),
        "queueing": num_json(&cost.queueing),
        "free_flow": num_json(&cost.free_flow),
        "total": num_json(&cost.total()),
    })
}

/// Per-link table of cumulative curves and Lagrangian delay:
/// `link,time,A,D,x,w_lagrangian`. Eulerian quantities are evaluated at
/// `time` on the clock; `w_lagrangian` reads the same value as a
/// destination arrival time.
pub fn state_csv(
    scenario: &Scenario,
    state: &TrafficState,
    view: &LagrangianView,
    style: NumberStyle,
) -> String {
    let mut out = String::from("link,time,A,D,x,w_lagrangian\n");
    for i in 1..=scenario.net.len() {
        let mut knots: Vec<Rat> = state.arrivals[i - 1]
            .times()
            .iter()
            .chain(state.departures[i - 1].times().iter())
            .cloned()
            .collect();
        for seg in &view.links[i - 1] {
            knots.push(seg.t0.clone());
            knots.push(seg.t1.clone());
        }
        knots.sort();
        knots.dedup();
        let x = state.departure_rate(i);
        for t in &knots {
            let sample = view.sample(i, t);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                i,
                style.render(t),
                style.render(&state.arrivals[i - 1].eval(t)),
                style.render(&state.departures[i - 1].eval(t)),
                style.render(&x.value_at(t)),
                style.render(&sample.w),
            );
        }
    }
    out
}

/// Optimal inflows per (origin, slot): `origin,slot_start,slot_end,q_star,rho_i`.
pub fn solution_flows_csv(scenario: &Scenario, sol: &LpSolution, style: NumberStyle) -> String {
    let mut out = String::from("origin,slot_start,slot_end,q_star,rho_i\n");
    for i in 1..=scenario.net.len() {
        for (k, q) in sol.q_star[i - 1].iter().enumerate() {
            let (lo, hi) = scenario.slot_bounds(k);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i,
                style.render(&lo),
                style.render(&hi),
                style.render(q),
                style.render(&sol.rho[i - 1]),
            );
        }
    }
    out
}

/// Capacity prices per (link, slot): `link,slot_start,p_ik`.
pub fn solution_prices_csv(scenario: &Scenario, sol: &LpSolution, style: NumberStyle) -> String {
    let mut out = String::from("link,slot_start,p_ik\n");
    for i in 1..=scenario.net.len() {
        for (k, p) in sol.p[i - 1].iter().enumerate() {
            let (lo, _) = scenario.slot_bounds(k);
            let _ = writeln!(out, "{},{},{}", i, style.render(&lo), style.render(p));
        }
    }
    out
}

pub fn solution_summary_json(sol: &LpSolution, exact_mode: bool) -> Value {
    json!({
        "objective": num_json(&sol.objective),
        "schedule_cost": num_json(&sol.schedule_cost),
        "free_flow_cost": num_json(&sol.free_flow_cost),
        "solver_iterations": sol.iterations,
        "exact_mode": exact_mode,
    })
}

/// Convergence table for a grid-refinement study: `dt,objective`.
pub fn refine_csv(table: &[(Rat, Rat)]) -> String {
    let mut out = String::from("dt,objective\n");
    for (dt, obj) in table {
        let _ = writeln!(out, "{},{}", fmt_num(dt), fmt_num(obj));
    }
    out
}

/// Canonical JSON rendering: pretty, deterministic key order (sorted for
/// maps, declaration order for derived reports), trailing newline.
pub fn to_canonical_json(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    text
}
