//! Point-queue simulation in Eulerian time and the derived Lagrangian view.
//!
//! The canonical state is Eulerian: per-link cumulative arrival and
//! departure curves produced by propagating inflows leaves-to-root through
//! each bottleneck. The Lagrangian view re-indexes every trip by its
//! destination arrival time `t`, tracing time-space paths backward from the
//! root: at a root-adjacent link the bottleneck departure time is `t`
//! itself, upstream links follow by subtracting free-flow times and
//! inverting cumulative curves under FIFO.
//!
//! All traces are piecewise linear with exact rational knots, so FIFO
//! identities, complementarity conditions and both cost accountings can be
//! verified with equality.

use num::{Signed, Zero};
use serde::Serialize;

use crate::curve::{point_queue, Curve, Step};
use crate::error::{Error, Result};
use crate::net::Scenario;
use crate::rat::{rint, rmax, to_f64, Rat};

/// Eulerian traffic state: cumulative curves per link plus the inflows that
/// produced them. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TrafficState {
    /// Entry profile of each origin at its own node.
    pub origin_inflows: Vec<Step>,
    /// Flow arriving at each bottleneck per Eulerian clock time.
    pub bottleneck_inflows: Vec<Step>,
    /// Cumulative arrivals A_i at each bottleneck.
    pub arrivals: Vec<Curve>,
    /// Cumulative departures D_i from each bottleneck.
    pub departures: Vec<Curve>,
    /// Analysis window: horizon start to the latest destination arrival.
    pub window: (Rat, Rat),
}

impl TrafficState {
    /// Departure rate x_i of link i.
    pub fn departure_rate(&self, i: usize) -> Step {
        self.departures[i - 1].derivative()
    }

    /// Cumulative destination arrivals (sum of root-adjacent departures).
    pub fn destination_arrivals(&self, scenario: &Scenario) -> Curve {
        let curves: Vec<&Curve> = scenario
            .net
            .children(0)
            .iter()
            .map(|&j| &self.departures[j - 1])
            .collect();
        Curve::sum(&curves)
    }

    /// True when no link carries a queue at any time.
    pub fn is_queue_free(&self) -> bool {
        !self.max_queue().is_positive()
    }

    /// Largest queue over all links and times.
    pub fn max_queue(&self) -> Rat {
        self.arrivals
            .iter()
            .zip(&self.departures)
            .map(|(a, d)| a.max_gap_above(d))
            .max()
            .unwrap_or_else(Rat::zero)
    }
}

/// Runs the point-queue model for the given per-origin entry profiles.
///
/// Links are processed leaves-to-root. Flow entering link i at node i
/// (origin inflow and child bottleneck departures alike) reaches bottleneck
/// i after the free-flow time d_i.
pub fn simulate(scenario: &Scenario, origin_inflows: &[Step]) -> Result<TrafficState> {
    let net = &scenario.net;
    if origin_inflows.len() != net.len() {
        return Err(Error::Value(format!(
            "{} inflow profiles for {} origins",
            origin_inflows.len(),
            net.len()
        )));
    }
    for (idx, inflow) in origin_inflows.iter().enumerate() {
        let origin = idx + 1;
        if inflow.min_rate().is_negative() {
            return Err(Error::Value(format!(
                "origin {origin} inflow has a negative rate"
            )));
        }
        if let Some((lo, hi)) = inflow.support() {
            if lo < scenario.t_start || hi > scenario.t_end {
                return Err(Error::Domain(format!(
                    "origin {origin} inflow on [{lo}, {hi}] leaves horizon [{}, {}]",
                    scenario.t_start, scenario.t_end
                )));
            }
        }
        let total = inflow.integral();
        if total != scenario.demand[idx] {
            return Err(Error::Demand {
                origin,
                got: total.to_string(),
                want: scenario.demand[idx].to_string(),
            });
        }
    }

    let n = net.len();
    let mut bottleneck_inflows = vec![Step::zero(); n];
    let mut arrivals = vec![Curve::zero(); n];
    let mut departures = vec![Curve::zero(); n];
    for i in net.topo_leaves_first() {
        let mut entering = origin_inflows[i - 1].clone();
        for &j in net.children(i) {
            entering = entering.add(&departures[j - 1].derivative());
        }
        let at_bottleneck = entering.shift(net.free_flow(i));
        arrivals[i - 1] = at_bottleneck.cumulative();
        departures[i - 1] = point_queue(&arrivals[i - 1], net.capacity_ref(i));
        bottleneck_inflows[i - 1] = at_bottleneck;
    }

    let mut latest = scenario.t_end.clone();
    for &j in net.children(0) {
        if let Some((_, hi)) = departures[j - 1].support() {
            if hi > latest {
                latest = hi;
            }
        }
    }
    Ok(TrafficState {
        origin_inflows: origin_inflows.to_vec(),
        bottleneck_inflows,
        arrivals,
        departures,
        window: (scenario.t_start.clone(), latest),
    })
}

/// One linear piece of the per-link trace over destination-arrival time.
/// Within `[t0, t1]` the bottleneck departure time sigma, arrival time tau
/// and cumulative subtree throughput n are all linear; consecutive pieces
/// may disagree in sigma/tau at shared endpoints where a zero-mass cohort
/// gap is skipped.
#[derive(Debug, Clone)]
pub struct LagSeg {
    pub t0: Rat,
    pub t1: Rat,
    pub sigma0: Rat,
    pub sigma1: Rat,
    pub tau0: Rat,
    pub tau1: Rat,
    pub n0: Rat,
    pub n1: Rat,
}

impl LagSeg {
    pub fn len(&self) -> Rat {
        &self.t1 - &self.t0
    }

    pub fn w0(&self) -> Rat {
        &self.sigma0 - &self.tau0
    }

    pub fn w1(&self) -> Rat {
        &self.sigma1 - &self.tau1
    }

    pub fn n_slope(&self) -> Rat {
        (&self.n1 - &self.n0) / self.len()
    }

    pub fn sigma_slope(&self) -> Rat {
        (&self.sigma1 - &self.sigma0) / self.len()
    }

    pub fn tau_slope(&self) -> Rat {
        (&self.tau1 - &self.tau0) / self.len()
    }

    fn interp(&self, t: &Rat) -> (Rat, Rat, Rat) {
        let frac = (t - &self.t0) / self.len();
        let sigma = &self.sigma0 + (&self.sigma1 - &self.sigma0) * &frac;
        let tau = &self.tau0 + (&self.tau1 - &self.tau0) * &frac;
        let n = &self.n0 + (&self.n1 - &self.n0) * &frac;
        (sigma, tau, n)
    }
}

/// Pointwise sample of the Lagrangian view at one destination arrival time.
#[derive(Debug, Clone)]
pub struct LagSample {
    pub sigma: Rat,
    pub tau: Rat,
    pub w: Rat,
    pub n: Rat,
}

/// Lagrangian-coordinate view of a traffic state.
#[derive(Debug, Clone)]
pub struct LagrangianView {
    /// Per-link trace, indexed by link - 1; segments tile the window.
    pub links: Vec<Vec<LagSeg>>,
    pub window: (Rat, Rat),
}

struct LinSeg {
    t0: Rat,
    t1: Rat,
    s0: Rat,
    s1: Rat,
}

/// Derives the per-link Lagrangian trace for a simulated (or hand-built)
/// state. Fails with `NonMonotone` when a recovered bottleneck arrival map
/// runs backward or stalls under positive flow, or when cumulative counts
/// would have to jump.
pub fn lagrangian_view(scenario: &Scenario, state: &TrafficState) -> Result<LagrangianView> {
    let net = &scenario.net;
    let (w0, w1) = state.window.clone();
    let mut links: Vec<Vec<LagSeg>> = vec![Vec::new(); net.len()];
    for i in net.topo_root_first() {
        let down = net.parent(i);
        let sigma_segs: Vec<LinSeg> = if down == 0 {
            vec![LinSeg {
                t0: w0.clone(),
                t1: w1.clone(),
                s0: w0.clone(),
                s1: w1.clone(),
            }]
        } else {
            let d_down = net.free_flow(down);
            links[down - 1]
                .iter()
                .map(|seg| LinSeg {
                    t0: seg.t0.clone(),
                    t1: seg.t1.clone(),
                    s0: &seg.tau0 - d_down,
                    s1: &seg.tau1 - d_down,
                })
                .collect()
        };
        links[i - 1] = build_trace(
            i,
            &state.arrivals[i - 1],
            &state.departures[i - 1],
            &sigma_segs,
        )?;
    }
    Ok(LagrangianView {
        links,
        window: (w0, w1),
    })
}

/// Eulerian times at which the queueing regime of (A, D) can change:
/// knots of both curves plus exact zero-crossings of the queue A - D.
fn regime_knots(a: &Curve, d: &Curve) -> Vec<Rat> {
    let mut knots: Vec<Rat> = a.times().iter().chain(d.times().iter()).cloned().collect();
    knots.sort();
    knots.dedup();
    let mut out = knots.clone();
    for k in 0..knots.len().saturating_sub(1) {
        let q0 = a.eval(&knots[k]) - d.eval(&knots[k]);
        let q1 = a.eval(&knots[k + 1]) - d.eval(&knots[k + 1]);
        if (q0.is_positive() && q1.is_negative()) || (q0.is_negative() && q1.is_positive()) {
            let frac = &q0 / (&q0 - &q1);
            out.push(&knots[k] + (&knots[k + 1] - &knots[k]) * frac);
        }
    }
    out.sort();
    out.dedup();
    out
}

fn build_trace(link: usize, a: &Curve, d: &Curve, sigma_segs: &[LinSeg]) -> Result<Vec<LagSeg>> {
    let knots = regime_knots(a, d);
    let mut out: Vec<LagSeg> = Vec::new();
    for seg in sigma_segs {
        if seg.t1 <= seg.t0 {
            return Err(Error::NonMonotone(format!(
                "link {link}: empty trace segment at t = {}",
                seg.t0
            )));
        }
        if seg.s1 < seg.s0 {
            return Err(Error::NonMonotone(format!(
                "link {link}: departure time map decreases near t = {}",
                seg.t0
            )));
        }
        let sig_slope = (&seg.s1 - &seg.s0) / (&seg.t1 - &seg.t0);
        // pull regime knots back into destination time
        let mut cuts: Vec<(Rat, Rat)> = vec![(seg.t0.clone(), seg.s0.clone())];
        if sig_slope.is_positive() {
            let lo = knots.partition_point(|s| *s <= seg.s0);
            let hi = knots.partition_point(|s| *s < seg.s1);
            for s in &knots[lo..hi] {
                let t = &seg.t0 + (s - &seg.s0) / &sig_slope;
                cuts.push((t, s.clone()));
            }
        }
        cuts.push((seg.t1.clone(), seg.s1.clone()));
        for pair in cuts.windows(2) {
            let (ta, sa) = &pair[0];
            let (tb, sb) = &pair[1];
            if ta >= tb {
                continue;
            }
            let sm = (sa + sb) / rint(2);
            let queue = a.eval(&sm) - d.eval(&sm);
            if queue.is_negative() {
                return Err(Error::NonMonotone(format!(
                    "link {link}: departures exceed arrivals near s = {sm}"
                )));
            }
            let va = d.eval(sa);
            let vb = d.eval(sb);
            if !queue.is_positive() {
                // no queue: tau coincides with sigma
                out.push(LagSeg {
                    t0: ta.clone(),
                    t1: tb.clone(),
                    sigma0: sa.clone(),
                    sigma1: sb.clone(),
                    tau0: sa.clone(),
                    tau1: sb.clone(),
                    n0: va,
                    n1: vb,
                });
                continue;
            }
            // queued: tau follows the inverse of A along the departed volume
            if vb < va {
                return Err(Error::NonMonotone(format!(
                    "link {link}: cumulative departures decrease near s = {sa}"
                )));
            }
            if va == vb {
                let tau = a
                    .upper_inverse(&va)
                    .ok_or_else(|| inverse_error(link, &va))?;
                out.push(LagSeg {
                    t0: ta.clone(),
                    t1: tb.clone(),
                    sigma0: sa.clone(),
                    sigma1: sb.clone(),
                    tau0: tau.clone(),
                    tau1: tau,
                    n0: va,
                    n1: vb,
                });
                continue;
            }
            // sub-refine at A's knot values strictly inside (va, vb) so the
            // inverse is linear on each emitted piece
            let v_slope = (&vb - &va) / (tb - ta);
            let seg_sig_slope = (sb - sa) / (tb - ta);
            let mut vcuts: Vec<(Rat, Rat)> = vec![(ta.clone(), va.clone())];
            for av in a.values() {
                if *av > va && *av < vb {
                    let t = ta + (av - &va) / &v_slope;
                    vcuts.push((t, av.clone()));
                }
            }
            vcuts.sort_by(|x, y| x.0.cmp(&y.0));
            vcuts.dedup_by(|x, y| x.0 == y.0);
            vcuts.push((tb.clone(), vb.clone()));
            for vpair in vcuts.windows(2) {
                let (t_lo, v_lo) = &vpair[0];
                let (t_hi, v_hi) = &vpair[1];
                if t_lo >= t_hi {
                    continue;
                }
                // lower endpoint as the rightmost time of its cohort, upper
                // endpoint as the first attainment: both lie on the same
                // rising segment of A, so the piece is linear
                let tau_lo = a
                    .upper_inverse(v_lo)
                    .ok_or_else(|| inverse_error(link, v_lo))?;
                let tau_hi = a
                    .first_inverse(v_hi)
                    .ok_or_else(|| inverse_error(link, v_hi))?;
                out.push(LagSeg {
                    t0: t_lo.clone(),
                    t1: t_hi.clone(),
                    sigma0: sa + (t_lo - ta) * &seg_sig_slope,
                    sigma1: sa + (t_hi - ta) * &seg_sig_slope,
                    tau0: tau_lo,
                    tau1: tau_hi,
                    n0: v_lo.clone(),
                    n1: v_hi.clone(),
                });
            }
        }
    }
    validate_trace(link, &out)?;
    Ok(out)
}

fn inverse_error(link: usize, v: &Rat) -> Error {
    Error::NonMonotone(format!(
        "link {link}: departed volume {v} was never observed arriving"
    ))
}

fn validate_trace(link: usize, segs: &[LagSeg]) -> Result<()> {
    for seg in segs {
        if seg.tau1 < seg.tau0 {
            return Err(Error::NonMonotone(format!(
                "link {link}: arrival time map decreases near t = {}",
                seg.t0
            )));
        }
        if seg.tau1 == seg.tau0 && seg.n1 != seg.n0 {
            return Err(Error::NonMonotone(format!(
                "link {link}: positive flow in zero arrival time near t = {}",
                seg.t0
            )));
        }
    }
    for pair in segs.windows(2) {
        if pair[1].n0 != pair[0].n1 {
            return Err(Error::NonMonotone(format!(
                "link {link}: cumulative count jumps at t = {}",
                pair[1].t0
            )));
        }
        if pair[1].tau0 < pair[0].tau1 {
            return Err(Error::NonMonotone(format!(
                "link {link}: arrival time map decreases across t = {}",
                pair[1].t0
            )));
        }
    }
    Ok(())
}

impl LagrangianView {
    /// Evaluates (sigma, tau, w, n) for link i at destination time t.
    /// At interior knots the right-hand segment is used.
    pub fn sample(&self, i: usize, t: &Rat) -> LagSample {
        let segs = &self.links[i - 1];
        debug_assert!(!segs.is_empty());
        let idx = segs.partition_point(|seg| seg.t0 <= *t);
        let seg = &segs[idx.saturating_sub(1).min(segs.len() - 1)];
        let t_clamped = if *t < seg.t0 {
            seg.t0.clone()
        } else if *t > seg.t1 {
            seg.t1.clone()
        } else {
            t.clone()
        };
        let (sigma, tau, n) = seg.interp(&t_clamped);
        LagSample {
            w: &sigma - &tau,
            sigma,
            tau,
            n,
        }
    }

    /// Cumulative subtree throughput knots of link i.
    fn n_slopes(&self, i: usize) -> Vec<(Rat, Rat, Rat)> {
        self.links[i - 1]
            .iter()
            .map(|seg| (seg.t0.clone(), seg.t1.clone(), seg.n_slope()))
            .collect()
    }

    /// Origin inflow rate q_i over destination time: the slope of N_i minus
    /// the slopes of the children's counts.
    pub fn origin_flow(&self, scenario: &Scenario, i: usize) -> Step {
        let own = self.n_slopes(i);
        let child_slopes: Vec<Vec<(Rat, Rat, Rat)>> = scenario
            .net
            .children(i)
            .iter()
            .map(|&j| self.n_slopes(j))
            .collect();
        let mut knots: Vec<Rat> = own
            .iter()
            .chain(child_slopes.iter().flatten())
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        knots.sort();
        knots.dedup();
        let rate_at = |list: &[(Rat, Rat, Rat)], t: &Rat| -> Rat {
            let idx = list.partition_point(|(a, _, _)| a <= t);
            if idx == 0 {
                return Rat::zero();
            }
            let (_, b, r) = &list[idx - 1];
            if t < b {
                r.clone()
            } else {
                Rat::zero()
            }
        };
        let mut rates = Vec::with_capacity(knots.len().saturating_sub(1));
        for k in 0..knots.len().saturating_sub(1) {
            let mid = (&knots[k] + &knots[k + 1]) / rint(2);
            let mut q = rate_at(&own, &mid);
            for list in &child_slopes {
                q -= rate_at(list, &mid);
            }
            rates.push(q);
        }
        Step::from_breakpoints(knots, rates).expect("knots are sorted and distinct")
    }

    /// Exact Stieltjes integral of the queueing delay against subtree
    /// throughput on link i.
    pub fn queue_cost(&self, i: usize) -> Rat {
        let mut total = Rat::zero();
        for seg in &self.links[i - 1] {
            let mass = &seg.n1 - &seg.n0;
            total += (seg.w0() + seg.w1()) / rint(2) * mass;
        }
        total
    }

    /// Total queueing delay cost over all links.
    pub fn total_queue_cost(&self, scenario: &Scenario) -> Rat {
        (1..=scenario.net.len()).map(|i| self.queue_cost(i)).sum()
    }

    /// Largest queueing delay w_i(t) anywhere in the view.
    pub fn max_delay(&self) -> Rat {
        let mut best = Rat::zero();
        for segs in &self.links {
            for seg in segs {
                let w = rmax(&seg.w0(), &seg.w1());
                if w > best {
                    best = w;
                }
            }
        }
        best
    }
}

/// Cost decomposition; all parts exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostBreakdown {
    pub schedule: Rat,
    pub queueing: Rat,
    pub free_flow: Rat,
}

impl CostBreakdown {
    pub fn total(&self) -> Rat {
        &self.schedule + &self.queueing + &self.free_flow
    }
}

/// Lagrangian cost accounting: per origin, the trip-cost integrand
/// `c(t) + sum over the path of (w_j(t) + d_j)` against the origin's own
/// inflow q_i(t).
pub fn total_cost(scenario: &Scenario, view: &LagrangianView) -> CostBreakdown {
    let net = &scenario.net;
    let mut schedule = Rat::zero();
    let mut queueing = Rat::zero();
    let mut free_flow = Rat::zero();
    for i in 1..=net.len() {
        let q = view.origin_flow(scenario, i);
        if q.is_zero() {
            continue;
        }
        let volume = q.integral();
        free_flow += net.path_free_flow(i) * &volume;
        // refine q's intervals with the cost kink and the path trace knots,
        // so every factor of the integrand is linear per interval
        let mut knots: Vec<Rat> = q.times().to_vec();
        knots.push(scenario.cost.preferred.clone());
        for &j in net.downstream_of(i) {
            for seg in &view.links[j - 1] {
                knots.push(seg.t0.clone());
                knots.push(seg.t1.clone());
            }
        }
        knots.sort();
        knots.dedup();
        for k in 0..knots.len().saturating_sub(1) {
            let (a, b) = (&knots[k], &knots[k + 1]);
            let mid = (a + b) / rint(2);
            let rate = q.value_at(&mid);
            if rate.is_zero() {
                continue;
            }
            schedule += &rate * scenario.cost.integral(a, b);
            // linear w on the open interval: midpoint value x length is exact
            let mut delay = Rat::zero();
            for &j in net.downstream_of(i) {
                delay += view.sample(j, &mid).w;
            }
            queueing += &rate * delay * (b - a);
        }
    }
    CostBreakdown {
        schedule,
        queueing,
        free_flow,
    }
}

/// Eulerian cost accounting, independent of the Lagrangian trace:
/// schedule cost from the destination arrival histogram, queueing cost as
/// the area between A_i and D_i per link, free-flow cost from routed volume.
pub fn eulerian_cost(scenario: &Scenario, state: &TrafficState) -> CostBreakdown {
    let net = &scenario.net;
    let dest = state.destination_arrivals(scenario);
    let rate = dest.derivative();
    let mut schedule = Rat::zero();
    let mut knots: Vec<Rat> = rate.times().to_vec();
    knots.push(scenario.cost.preferred.clone());
    knots.sort();
    knots.dedup();
    for k in 0..knots.len().saturating_sub(1) {
        let mid = (&knots[k] + &knots[k + 1]) / rint(2);
        let r = rate.value_at(&mid);
        if !r.is_zero() {
            schedule += r * scenario.cost.integral(&knots[k], &knots[k + 1]);
        }
    }
    let mut queueing = Rat::zero();
    for i in 1..=net.len() {
        queueing += state.arrivals[i - 1].area_above(&state.departures[i - 1]);
    }
    let mut free_flow = Rat::zero();
    for i in 1..=net.len() {
        free_flow += net.path_free_flow(i) * state.origin_inflows[i - 1].integral();
    }
    CostBreakdown {
        schedule,
        queueing,
        free_flow,
    }
}

/// Verdict for one constraint family.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintVerdict {
    pub pass: bool,
    /// Worst violation magnitude (0 when clean).
    pub worst: f64,
    pub worst_exact: String,
    /// Link and destination time of the worst violation, if any.
    pub link: Option<usize>,
    pub time: Option<f64>,
}

struct VerdictBuilder {
    pass: bool,
    worst: Rat,
    link: Option<usize>,
    time: Option<Rat>,
}

impl VerdictBuilder {
    fn new() -> Self {
        VerdictBuilder {
            pass: true,
            worst: Rat::zero(),
            link: None,
            time: None,
        }
    }

    fn record(&mut self, violation: Rat, tol: &Rat, link: usize, time: &Rat) {
        if violation > *tol {
            self.pass = false;
        }
        if violation > self.worst {
            self.worst = violation;
            self.link = Some(link);
            self.time = Some(time.clone());
        }
    }

    fn build(self) -> ConstraintVerdict {
        ConstraintVerdict {
            pass: self.pass,
            worst: to_f64(&self.worst),
            worst_exact: self.worst.to_string(),
            link: self.link,
            time: self.time.as_ref().map(to_f64),
        }
    }
}

/// Structured feasibility evidence for the queueing-model constraints.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    /// Queueing complementarity: subtree inflow equals mu_i sigma-dot when
    /// the link is queued, never exceeds it otherwise.
    pub complementarity: ConstraintVerdict,
    /// Demand conservation per origin.
    pub demand: ConstraintVerdict,
    /// Nonnegative origin inflows in Lagrangian coordinates.
    pub nonnegativity: ConstraintVerdict,
    /// Strict slope condition: total path delay growth stays below one,
    /// equivalently recovered arrival times keep increasing.
    pub slope: ConstraintVerdict,
    pub pass: bool,
}

/// Checks the feasibility constraints of a state against its view.
/// A tolerance of zero makes every comparison exact, with the slope
/// condition checked strictly.
pub fn check_feasibility(
    scenario: &Scenario,
    view: &LagrangianView,
    tol: &Rat,
) -> FeasibilityReport {
    let net = &scenario.net;
    let mut complementarity = VerdictBuilder::new();
    let mut demand = VerdictBuilder::new();
    let mut nonnegativity = VerdictBuilder::new();
    let mut slope = VerdictBuilder::new();

    for i in 1..=net.len() {
        let mu = net.capacity_ref(i);
        for seg in &view.links[i - 1] {
            let inflow = seg.n_slope();
            let cap = mu * seg.sigma_slope();
            let mid = (&seg.t0 + &seg.t1) / rint(2);
            let w_mid = (seg.w0() + seg.w1()) / rint(2);
            if w_mid > *tol {
                complementarity.record((inflow - cap).abs(), tol, i, &mid);
            } else {
                complementarity.record(rmax(&(inflow - cap), &Rat::zero()), tol, i, &mid);
            }
            // sum of path delay slopes = 1 - tau-dot; must stay below 1,
            // strictly in exact mode
            let tau_dot = seg.tau_slope();
            let excess = if tol.is_zero() && !tau_dot.is_positive() && !seg.n_slope().is_zero() {
                // flow moving in stalled arrival time would need infinite rates
                crate::rat::one()
            } else {
                rmax(&-&tau_dot, &Rat::zero())
            };
            slope.record(excess, tol, i, &seg.t0);
        }
        let q = view.origin_flow(scenario, i);
        let total = q.integral();
        demand.record(
            (total - &scenario.demand[i - 1]).abs(),
            tol,
            i,
            &scenario.t_end,
        );
        nonnegativity.record(
            rmax(&-q.min_rate(), &Rat::zero()),
            tol,
            i,
            &scenario.t_start,
        );
    }
    let pass = complementarity.pass && demand.pass && nonnegativity.pass && slope.pass;
    FeasibilityReport {
        complementarity: complementarity.build(),
        demand: demand.build(),
        nonnegativity: nonnegativity.build(),
        slope: slope.build(),
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{schedule_cost, Scenario, TreeNetwork};
    use crate::rat::{rat, rint};

    fn single_link(mu: i64, d: i64, demand: i64, horizon: (i64, i64)) -> Scenario {
        let net = TreeNetwork::build(&[0], &[rint(mu)], &[rint(d)]).unwrap();
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

    fn three_link_scenario() -> Scenario {
        // 1 -> 3, 2 -> 3, 3 -> 0 with mu = (1,1,2), d = (1,2,1)
        let net = TreeNetwork::build(
            &[3, 3, 0],
            &[rint(1), rint(1), rint(2)],
            &[rint(1), rint(2), rint(1)],
        )
        .unwrap();
        Scenario::new(
            net,
            vec![rint(2), rint(2), rint(1)],
            schedule_cost("0", "1", "1"),
            rint(-1),
            rint(2),
            rat(1, 2),
        )
        .unwrap()
    }

    #[test]
    fn burst_through_single_bottleneck() {
        let scenario = single_link(1, 0, 2, (0, 2));
        let inflow = vec![Step::constant(rint(2), rint(0), rint(1))];
        let state = simulate(&scenario, &inflow).unwrap();
        let a = &state.arrivals[0];
        let d = &state.departures[0];
        assert_eq!(a.eval(&rat(1, 2)), rint(1));
        assert_eq!(d.eval(&rint(1)), rint(1));
        assert_eq!(d.eval(&rint(2)), rint(2));
        assert_eq!(state.max_queue(), rint(1));
        assert_eq!(
            state.departure_rate(1),
            Step::constant(rint(1), rint(0), rint(2))
        );

        // commuter arriving at the destination at t entered at t/2 and waited t/2
        let view = lagrangian_view(&scenario, &state).unwrap();
        for t in [rat(1, 2), rint(1), rat(3, 2), rint(2)] {
            let s = view.sample(1, &t);
            assert_eq!(s.tau, &t / rint(2));
            assert_eq!(s.w, &t / rint(2));
            assert_eq!(s.sigma, t);
        }
        // queueing cost 1 by both accountings
        assert_eq!(view.queue_cost(1), rint(1));
        assert_eq!(a.area_above(d), rint(1));

        let feas = check_feasibility(&scenario, &view, &Rat::zero());
        assert!(feas.pass, "{feas:?}");

        let lagr = total_cost(&scenario, &view);
        let euler = eulerian_cost(&scenario, &state);
        assert_eq!(lagr, euler);
        assert_eq!(lagr.queueing, rint(1));
        assert_eq!(lagr.free_flow, rint(0));
        // schedule cost of arrivals at rate 1 on [0, 2] under |t|
        assert_eq!(lagr.schedule, rint(2));
    }

    #[test]
    fn below_capacity_no_queue() {
        let scenario = single_link(1, 0, 1, (0, 2));
        let inflow = vec![Step::constant(rat(1, 2), rint(0), rint(2))];
        let state = simulate(&scenario, &inflow).unwrap();
        assert!(state.is_queue_free());
        let view = lagrangian_view(&scenario, &state).unwrap();
        assert_eq!(view.max_delay(), rint(0));
        let cost = total_cost(&scenario, &view);
        assert_eq!(cost.queueing, rint(0));
    }

    #[test]
    fn zero_demand_is_all_zero() {
        let net = TreeNetwork::build(
            &[3, 3, 0],
            &[rint(1), rint(1), rint(2)],
            &[rint(1), rint(2), rint(1)],
        )
        .unwrap();
        let scenario = Scenario::new(
            net,
            vec![rint(0); 3],
            schedule_cost("0", "1", "1"),
            rint(0),
            rint(1),
            rat(1, 2),
        )
        .unwrap();
        let state = simulate(&scenario, &[Step::zero(), Step::zero(), Step::zero()]).unwrap();
        for i in 0..3 {
            assert!(state.arrivals[i].is_zero());
            assert!(state.departures[i].is_zero());
        }
        let view = lagrangian_view(&scenario, &state).unwrap();
        let cost = total_cost(&scenario, &view);
        assert_eq!(cost.total(), rint(0));
        assert!(check_feasibility(&scenario, &view, &Rat::zero()).pass);
    }

    #[test]
    fn demand_mismatch_rejected() {
        let scenario = single_link(1, 0, 2, (0, 2));
        let err = simulate(&scenario, &[Step::constant(rint(1), rint(0), rint(1))]).unwrap_err();
        assert!(matches!(err, Error::Demand { origin: 1, .. }));
    }

    #[test]
    fn inflow_outside_horizon_rejected() {
        let scenario = single_link(1, 0, 2, (0, 2));
        let err = simulate(&scenario, &[Step::constant(rint(2), rint(-1), rint(0))]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn merging_tree_hand_trace() {
        let scenario = three_link_scenario();
        let inflows = vec![
            Step::constant(rint(1), rint(0), rint(2)),
            Step::constant(rint(1), rint(-1), rint(1)),
            Step::constant(rint(1), rint(1), rint(2)),
        ];
        let state = simulate(&scenario, &inflows).unwrap();

        // upstream links run exactly at capacity, no queues there
        assert_eq!(
            state.departure_rate(1),
            Step::constant(rint(1), rint(1), rint(3))
        );
        assert_eq!(
            state.departure_rate(2),
            Step::constant(rint(1), rint(1), rint(3))
        );
        // root link sees 3 > mu = 2 on [2,3], queue drains by 4.5
        let a3 = &state.arrivals[2];
        let d3 = &state.departures[2];
        assert_eq!(a3.eval(&rint(3)), rint(3));
        assert_eq!(a3.eval(&rint(4)), rint(5));
        assert_eq!(d3.eval(&rat(9, 2)), rint(5));
        assert_eq!(
            state.departure_rate(3),
            Step::constant(rint(2), rint(2), rat(9, 2))
        );
        assert_eq!(a3.area_above(d3), rat(7, 4));
        assert_eq!(state.window.1, rat(9, 2));

        let view = lagrangian_view(&scenario, &state).unwrap();
        // hand-traced samples
        let s3 = view.sample(3, &rint(4));
        assert_eq!(s3.w, rat(1, 2));
        let s1 = view.sample(1, &rint(4));
        assert_eq!(s1.sigma, rat(5, 2));
        assert_eq!(s1.tau, rat(5, 2));
        assert_eq!(s1.w, rint(0));
        let s3_early = view.sample(3, &rint(3));
        assert_eq!(s3_early.w, rat(1, 3));
        let s1_early = view.sample(1, &rint(3));
        assert_eq!(s1_early.sigma, rat(5, 3));

        // origin flows in destination time
        let q1 = view.origin_flow(&scenario, 1);
        let q2 = view.origin_flow(&scenario, 2);
        let q3 = view.origin_flow(&scenario, 3);
        assert_eq!(q1.value_at(&rint(4)), rint(1));
        assert_eq!(q2.value_at(&rint(4)), rint(1));
        assert_eq!(q3.value_at(&rint(4)), rint(0));
        assert_eq!(q1.value_at(&rint(3)), rat(2, 3));
        assert_eq!(q2.value_at(&rint(3)), rat(2, 3));
        assert_eq!(q3.value_at(&rint(3)), rat(2, 3));
        assert_eq!(q1.integral(), rint(2));
        assert_eq!(q2.integral(), rint(2));
        assert_eq!(q3.integral(), rint(1));

        // sigma identity: sigma_1(t) = t - w_3(t) - d_3
        for t in [rat(5, 2), rint(3), rat(7, 2), rint(4)] {
            let w3 = view.sample(3, &t).w;
            assert_eq!(view.sample(1, &t).sigma, &t - &w3 - rint(1));
        }

        // queueing cost equals the queue area on the root link
        assert_eq!(view.total_queue_cost(&scenario), rat(7, 4));

        let feas = check_feasibility(&scenario, &view, &Rat::zero());
        assert!(feas.pass, "{feas:?}");

        let lagr = total_cost(&scenario, &view);
        let euler = eulerian_cost(&scenario, &state);
        assert_eq!(lagr, euler);
        assert_eq!(lagr.schedule, rat(65, 4));
        assert_eq!(lagr.queueing, rat(7, 4));
        assert_eq!(lagr.free_flow, rint(11));

        // FIFO identity at many sampled destination times
        for k in 0..200 {
            let t = rat(-1, 1) + rat(11, 4) * rat(k, 100);
            for i in 1..=3 {
                let s = view.sample(i, &t);
                assert_eq!(
                    state.arrivals[i - 1].eval(&s.tau),
                    state.departures[i - 1].eval(&s.sigma)
                );
            }
        }
    }

    #[test]
    fn hand_built_complementarity_violation() {
        // departures run at half capacity while a queue persists
        let scenario = single_link(1, 0, 2, (0, 2));
        let a = Step::constant(rint(2), rint(0), rint(1)).cumulative();
        let d = Curve::from_knots(vec![rint(0), rint(4)], vec![rint(0), rint(2)]).unwrap();
        let state = TrafficState {
            origin_inflows: vec![Step::constant(rint(2), rint(0), rint(1))],
            bottleneck_inflows: vec![Step::constant(rint(2), rint(0), rint(1))],
            arrivals: vec![a],
            departures: vec![d],
            window: (rint(0), rint(4)),
        };
        let view = lagrangian_view(&scenario, &state).unwrap();
        let feas = check_feasibility(&scenario, &view, &Rat::zero());
        assert!(!feas.complementarity.pass);
        assert_eq!(feas.complementarity.link, Some(1));
    }

    #[test]
    fn hand_built_departures_exceeding_arrivals_rejected() {
        let scenario = single_link(1, 0, 2, (0, 2));
        let a = Step::constant(rint(1), rint(0), rint(2)).cumulative();
        let d = Curve::from_knots(vec![rint(0), rint(1)], vec![rint(0), rint(2)]).unwrap();
        let state = TrafficState {
            origin_inflows: vec![Step::constant(rint(1), rint(0), rint(2))],
            bottleneck_inflows: vec![Step::constant(rint(1), rint(0), rint(2))],
            arrivals: vec![a],
            departures: vec![d],
            window: (rint(0), rint(2)),
        };
        assert!(matches!(
            lagrangian_view(&scenario, &state),
            Err(Error::NonMonotone(_))
        ));
    }

    #[test]
    fn demand_shortfall_detected_by_checker() {
        // simulate against halved demand, then check against the original
        let scenario = single_link(1, 0, 2, (0, 2));
        let mut halved = scenario.clone();
        halved.demand = vec![rint(1)];
        let state = simulate(&halved, &[Step::constant(rint(1), rint(0), rint(1))]).unwrap();
        let view = lagrangian_view(&halved, &state).unwrap();
        let feas = check_feasibility(&scenario, &view, &Rat::zero());
        assert!(!feas.demand.pass);
        assert_eq!(feas.demand.link, Some(1));
        assert_eq!(feas.demand.worst_exact, "1");
    }

    #[test]
    fn interior_cohort_gap_keeps_identities() {
        // burst, silence while the queue drains past empty, then a second burst
        let scenario = single_link(1, 0, 3, (0, 4));
        let inflow = Step::from_breakpoints(
            vec![rint(0), rint(1), rint(3), rint(4)],
            vec![rint(2), rint(0), rint(1)],
        )
        .unwrap();
        let state = simulate(&scenario, &[inflow]).unwrap();
        let view = lagrangian_view(&scenario, &state).unwrap();
        let feas = check_feasibility(&scenario, &view, &Rat::zero());
        assert!(feas.pass, "{feas:?}");
        assert_eq!(
            total_cost(&scenario, &view),
            eulerian_cost(&scenario, &state)
        );
        for k in 0..=80 {
            let t = rat(k, 20);
            let s = view.sample(1, &t);
            assert!(!s.w.is_negative(), "w = {} at t = {t}", s.w);
            assert_eq!(
                state.arrivals[0].eval(&s.tau),
                state.departures[0].eval(&s.sigma)
            );
        }
    }
}
