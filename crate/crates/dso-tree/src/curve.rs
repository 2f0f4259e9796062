//! Piecewise-constant flow rates and piecewise-linear cumulative curves.
//!
//! Flow rates are step functions over right-open intervals; their cumulative
//! curves are continuous piecewise-linear and Lipschitz, which keeps every
//! inverse lookup, composition and integral in closed form over rationals.
//! The point-queue response of a bottleneck is computed exactly by a single
//! forward sweep over the arrival curve.

use num::{Signed, Zero};

use crate::error::{Error, Result};
use crate::rat::{rint, Rat};

/// Piecewise-constant function of time. `times` holds n+1 strictly
/// increasing breakpoints, `rates` the value on each right-open interval
/// `[times[k], times[k+1])`. The function is zero outside its domain.
/// An empty `times` vector is the canonical zero function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    times: Vec<Rat>,
    rates: Vec<Rat>,
}

impl Step {
    pub fn zero() -> Step {
        Step {
            times: Vec::new(),
            rates: Vec::new(),
        }
    }

    /// Builds a step function from breakpoints and per-interval rates,
    /// normalizing to canonical form.
    pub fn from_breakpoints(times: Vec<Rat>, rates: Vec<Rat>) -> Result<Step> {
        if times.is_empty() && rates.is_empty() {
            return Ok(Step::zero());
        }
        if times.len() != rates.len() + 1 {
            return Err(Error::Value(format!(
                "step function needs one more breakpoint than rates: {} vs {}",
                times.len(),
                rates.len()
            )));
        }
        for pair in times.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Value(
                    "step breakpoints must be strictly increasing".into(),
                ));
            }
        }
        let mut step = Step { times, rates };
        step.normalize();
        Ok(step)
    }

    /// Uniform slots of width `dt` starting at `t0`, one rate per slot.
    pub fn from_slots(t0: &Rat, dt: &Rat, rates: &[Rat]) -> Step {
        let mut times = Vec::with_capacity(rates.len() + 1);
        for k in 0..=rates.len() {
            times.push(t0 + dt * rint(k as i64));
        }
        Step::from_breakpoints(times, rates.to_vec()).expect("uniform slots are well formed")
    }

    /// Constant `rate` on `[a, b)`.
    pub fn constant(rate: Rat, a: Rat, b: Rat) -> Step {
        Step::from_breakpoints(vec![a, b], vec![rate]).expect("a < b required")
    }

    fn normalize(&mut self) {
        // merge adjacent equal rates
        let mut times = Vec::with_capacity(self.times.len());
        let mut rates = Vec::with_capacity(self.rates.len());
        for k in 0..self.rates.len() {
            if rates.last() == Some(&self.rates[k]) {
                continue;
            }
            times.push(self.times[k].clone());
            rates.push(self.rates[k].clone());
        }
        if !self.times.is_empty() {
            times.push(self.times.last().unwrap().clone());
        }
        // trim leading/trailing zero-rate intervals
        while rates.first().map(|r| r.is_zero()).unwrap_or(false) {
            rates.remove(0);
            times.remove(0);
        }
        while rates.last().map(|r| r.is_zero()).unwrap_or(false) {
            rates.pop();
            times.pop();
        }
        if rates.is_empty() {
            times.clear();
        }
        self.times = times;
        self.rates = rates;
    }

    pub fn is_zero(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn times(&self) -> &[Rat] {
        &self.times
    }

    pub fn rates(&self) -> &[Rat] {
        &self.rates
    }

    /// Right-continuous evaluation.
    pub fn value_at(&self, t: &Rat) -> Rat {
        if self.times.is_empty() || *t < self.times[0] || *t >= *self.times.last().unwrap() {
            return Rat::zero();
        }
        let idx = self.times.partition_point(|bt| bt <= t) - 1;
        self.rates[idx.min(self.rates.len() - 1)].clone()
    }

    pub fn integral(&self) -> Rat {
        let mut total = Rat::zero();
        for k in 0..self.rates.len() {
            total += &self.rates[k] * (&self.times[k + 1] - &self.times[k]);
        }
        total
    }

    pub fn shift(&self, dt: &Rat) -> Step {
        Step {
            times: self.times.iter().map(|t| t + dt).collect(),
            rates: self.rates.clone(),
        }
    }

    pub fn scale(&self, factor: &Rat) -> Step {
        let mut out = Step {
            times: self.times.clone(),
            rates: self.rates.iter().map(|r| r * factor).collect(),
        };
        out.normalize();
        out
    }

    pub fn add(&self, other: &Step) -> Step {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Step) -> Step {
        self.combine(other, |a, b| a - b)
    }

    fn combine(&self, other: &Step, op: impl Fn(&Rat, &Rat) -> Rat) -> Step {
        let mut knots: Vec<Rat> = self
            .times
            .iter()
            .chain(other.times.iter())
            .cloned()
            .collect();
        knots.sort();
        knots.dedup();
        if knots.len() < 2 {
            // at most one knot: both functions are zero a.e.
            return Step::zero();
        }
        let mut rates = Vec::with_capacity(knots.len() - 1);
        for k in 0..knots.len() - 1 {
            let mid = (&knots[k] + &knots[k + 1]) / rint(2);
            rates.push(op(&self.value_at(&mid), &other.value_at(&mid)));
        }
        let mut out = Step {
            times: knots,
            rates,
        };
        out.normalize();
        out
    }

    pub fn min_rate(&self) -> Rat {
        self.rates.iter().min().cloned().unwrap_or_else(Rat::zero)
    }

    pub fn max_rate(&self) -> Rat {
        self.rates.iter().max().cloned().unwrap_or_else(Rat::zero)
    }

    /// First and last breakpoint, if the function is not identically zero.
    pub fn support(&self) -> Option<(Rat, Rat)> {
        if self.times.is_empty() {
            None
        } else {
            Some((self.times[0].clone(), self.times.last().unwrap().clone()))
        }
    }

    /// Cumulative curve starting from zero.
    pub fn cumulative(&self) -> Curve {
        if self.times.is_empty() {
            return Curve::zero();
        }
        let mut values = Vec::with_capacity(self.times.len());
        let mut acc = Rat::zero();
        values.push(acc.clone());
        for k in 0..self.rates.len() {
            acc += &self.rates[k] * (&self.times[k + 1] - &self.times[k]);
            values.push(acc.clone());
        }
        Curve {
            times: self.times.clone(),
            values,
        }
    }
}

/// Continuous piecewise-linear function of time, extended as a constant
/// before its first and after its last breakpoint. An empty curve is
/// identically zero. Cumulative flow curves are the nondecreasing case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Curve {
    times: Vec<Rat>,
    values: Vec<Rat>,
}

impl Curve {
    pub fn zero() -> Curve {
        Curve {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_knots(times: Vec<Rat>, values: Vec<Rat>) -> Result<Curve> {
        if times.len() != values.len() {
            return Err(Error::Value("curve needs one value per breakpoint".into()));
        }
        for pair in times.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Value(
                    "curve breakpoints must be strictly increasing".into(),
                ));
            }
        }
        let mut curve = Curve { times, values };
        curve.normalize();
        Ok(curve)
    }

    pub fn is_zero(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[Rat] {
        &self.times
    }

    pub fn values(&self) -> &[Rat] {
        &self.values
    }

    fn normalize(&mut self) {
        if self.times.is_empty() {
            return;
        }
        let n = self.times.len();
        let mut keep = vec![true; n];
        for k in 1..n - 1 {
            let left =
                (&self.values[k] - &self.values[k - 1]) * (&self.times[k + 1] - &self.times[k]);
            let right =
                (&self.values[k + 1] - &self.values[k]) * (&self.times[k] - &self.times[k - 1]);
            if left == right {
                // collinear; but only drop if the previous kept knot keeps it collinear
                keep[k] = false;
            }
        }
        // re-check collinearity against the previously kept knot to be safe
        let mut times = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            if !keep[k] {
                let prev_t = times.last().cloned();
                if let Some(pt) = prev_t {
                    let pv = values.last().cloned().unwrap();
                    let left = (&self.values[k] - &pv) * (&self.times[k + 1] - &self.times[k]);
                    let right = (&self.values[k + 1] - &self.values[k]) * (&self.times[k] - &pt);
                    if left == right {
                        continue;
                    }
                }
            }
            times.push(self.times[k].clone());
            values.push(self.values[k].clone());
        }
        // a constant-zero curve collapses to the canonical empty form
        if values.iter().all(|v| v.is_zero()) {
            times.clear();
            values.clear();
        }
        self.times = times;
        self.values = values;
    }

    pub fn eval(&self, t: &Rat) -> Rat {
        if self.times.is_empty() {
            return Rat::zero();
        }
        if *t <= self.times[0] {
            return self.values[0].clone();
        }
        let last = self.times.len() - 1;
        if *t >= self.times[last] {
            return self.values[last].clone();
        }
        let idx = self.times.partition_point(|bt| bt <= t) - 1;
        let span = &self.times[idx + 1] - &self.times[idx];
        let frac = (t - &self.times[idx]) / span;
        &self.values[idx] + (&self.values[idx + 1] - &self.values[idx]) * frac
    }

    pub fn initial_value(&self) -> Rat {
        self.values.first().cloned().unwrap_or_else(Rat::zero)
    }

    pub fn final_value(&self) -> Rat {
        self.values.last().cloned().unwrap_or_else(Rat::zero)
    }

    pub fn support(&self) -> Option<(Rat, Rat)> {
        if self.times.is_empty() {
            None
        } else {
            Some((self.times[0].clone(), self.times.last().unwrap().clone()))
        }
    }

    pub fn shift(&self, dt: &Rat) -> Curve {
        Curve {
            times: self.times.iter().map(|t| t + dt).collect(),
            values: self.values.clone(),
        }
    }

    /// Slopes between breakpoints as a step function.
    pub fn derivative(&self) -> Step {
        if self.times.len() < 2 {
            return Step::zero();
        }
        let mut rates = Vec::with_capacity(self.times.len() - 1);
        for k in 0..self.times.len() - 1 {
            let len = &self.times[k + 1] - &self.times[k];
            rates.push((&self.values[k + 1] - &self.values[k]) / len);
        }
        let mut step = Step {
            times: self.times.clone(),
            rates,
        };
        step.normalize();
        step
    }

    /// Pointwise sum of curves (exact; knots are the union of inputs').
    pub fn sum(curves: &[&Curve]) -> Curve {
        let mut knots: Vec<Rat> = curves
            .iter()
            .flat_map(|c| c.times.iter().cloned())
            .collect();
        knots.sort();
        knots.dedup();
        if knots.is_empty() {
            return Curve::zero();
        }
        let values: Vec<Rat> = knots
            .iter()
            .map(|t| curves.iter().map(|c| c.eval(t)).sum())
            .collect();
        let mut out = Curve {
            times: knots,
            values,
        };
        out.normalize();
        out
    }

    /// Rightmost time at which the curve equals `v`. For `v` on a flat run
    /// the run's right end is returned (last commuter of the cohort); for
    /// `v` equal to the final value the first time attaining it is returned.
    /// Returns `None` when the curve never reaches `v` or is unbounded flat
    /// at `v` on the right (constant curve).
    pub fn upper_inverse(&self, v: &Rat) -> Option<Rat> {
        if self.times.is_empty() {
            return None;
        }
        let last = self.values.len() - 1;
        if *v > self.values[last] {
            return None;
        }
        if *v >= self.values[last] {
            // first time attaining the final value
            let mut k = last;
            while k > 0 && self.values[k - 1] == self.values[last] {
                k -= 1;
            }
            return Some(self.times[k].clone());
        }
        if *v <= self.values[0] {
            if *v < self.values[0] {
                return None;
            }
            // rightmost time of the initial flat run at values[0]
            let mut k = 0;
            while k < last && self.values[k + 1] == self.values[0] {
                k += 1;
            }
            return Some(self.times[k].clone());
        }
        // last index j with values[j] <= v (values nondecreasing here)
        let j = self.values.partition_point(|val| val <= v) - 1;
        if self.values[j] == *v {
            return Some(self.times[j].clone());
        }
        let dv = &self.values[j + 1] - &self.values[j];
        debug_assert!(dv.is_positive());
        let frac = (v - &self.values[j]) / dv;
        Some(&self.times[j] + (&self.times[j + 1] - &self.times[j]) * frac)
    }

    /// First time at which the curve attains `v` (limit from below).
    /// Returns `None` when `v` is never reached or lies below the initial
    /// value.
    pub fn first_inverse(&self, v: &Rat) -> Option<Rat> {
        if self.times.is_empty() {
            return None;
        }
        if *v < self.values[0] || *v > *self.values.last().unwrap() {
            return None;
        }
        if *v == self.values[0] {
            return Some(self.times[0].clone());
        }
        // smallest j with values[j] >= v; the previous value is < v
        let j = self.values.partition_point(|val| val < v);
        let dv = &self.values[j] - &self.values[j - 1];
        debug_assert!(dv.is_positive());
        let frac = (v - &self.values[j - 1]) / dv;
        Some(&self.times[j - 1] + (&self.times[j] - &self.times[j - 1]) * frac)
    }

    /// Exact integral of `(self - other)` over the union of supports.
    pub fn area_above(&self, other: &Curve) -> Rat {
        let mut knots: Vec<Rat> = self
            .times
            .iter()
            .chain(other.times.iter())
            .cloned()
            .collect();
        knots.sort();
        knots.dedup();
        let mut total = Rat::zero();
        for k in 0..knots.len().saturating_sub(1) {
            let d0 = self.eval(&knots[k]) - other.eval(&knots[k]);
            let d1 = self.eval(&knots[k + 1]) - other.eval(&knots[k + 1]);
            total += (d0 + d1) * (&knots[k + 1] - &knots[k]) / rint(2);
        }
        total
    }

    /// Largest value of `(self - other)` over all knots (exact for
    /// piecewise-linear curves: the extremum sits on a knot).
    pub fn max_gap_above(&self, other: &Curve) -> Rat {
        let mut best = Rat::zero();
        for t in self.times.iter().chain(other.times.iter()) {
            let gap = self.eval(t) - other.eval(t);
            if gap > best {
                best = gap;
            }
        }
        best
    }
}

/// Departure curve of a point-queue bottleneck with capacity `mu`:
/// `D(s) = min(A(s), inf_{r<=s}[A(r) + mu (s - r)])`.
///
/// The sweep keeps the running departure value; inside a queued interval the
/// departure slope is exactly `mu`, and the queue-emptying instant is placed
/// by solving the linear crossing, so complementarity holds exactly.
pub fn point_queue(arrivals: &Curve, mu: &Rat) -> Curve {
    if arrivals.is_zero() {
        return Curve::zero();
    }
    debug_assert!(mu.is_positive());
    let times = arrivals.times();
    let values = arrivals.values();
    let mut out_t: Vec<Rat> = vec![times[0].clone()];
    let mut out_v: Vec<Rat> = vec![values[0].clone()];
    let mut t_cur = times[0].clone();
    let mut d_cur = values[0].clone();
    for k in 0..times.len() - 1 {
        let seg_end = &times[k + 1];
        let seg_len = seg_end - &times[k];
        let rate = (&values[k + 1] - &values[k]) / &seg_len;
        loop {
            let a_cur = arrivals.eval(&t_cur);
            let queue = &a_cur - &d_cur;
            debug_assert!(!queue.is_negative());
            if queue.is_positive() {
                if rate < *mu {
                    let drain = &queue / (mu - &rate);
                    let crossing = &t_cur + &drain;
                    if crossing < *seg_end {
                        d_cur += mu * &drain;
                        t_cur = crossing;
                        out_t.push(t_cur.clone());
                        out_v.push(d_cur.clone());
                        continue;
                    }
                }
                d_cur += mu * (seg_end - &t_cur);
                t_cur = seg_end.clone();
            } else {
                // no queue: departures follow arrivals up to capacity
                if rate <= *mu {
                    d_cur = values[k + 1].clone();
                } else {
                    d_cur += mu * (seg_end - &t_cur);
                }
                t_cur = seg_end.clone();
            }
            out_t.push(t_cur.clone());
            out_v.push(d_cur.clone());
            break;
        }
    }
    // drain any queue left at the end of the arrival curve
    let a_final = arrivals.final_value();
    let leftover = &a_final - &d_cur;
    if leftover.is_positive() {
        let t_done = &t_cur + leftover / mu;
        out_t.push(t_done);
        out_v.push(a_final);
    }
    let mut curve = Curve {
        times: out_t,
        values: out_v,
    };
    curve.normalize();
    curve
}
