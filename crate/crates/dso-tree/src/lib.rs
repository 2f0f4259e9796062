//! Dynamic system-optimal departure scheduling on rooted tree networks.
//!
//! Models commuter traffic on a directed tree with a single destination,
//! where every link ends in a point-queue bottleneck. The crate provides:
//!
//! - exact point-queue simulation over piecewise-constant inflows and the
//!   Lagrangian re-indexing of a state by destination arrival time
//!   ([`sim`]);
//! - the queue-elimination transform that rebuilds any feasible state with
//!   identical link departure flows and no queues, together with a
//!   sampling harness that verifies queues never survive at the optimum
//!   ([`transform`]);
//! - the discretized optimal scheduling problem solved exactly as a
//!   min-cost flow on a time-expanded tree, with dual multipliers and an
//!   exhaustive enumeration oracle ([`solver`]);
//! - scenario files, reports and a command-line front end ([`cli`]).
//!
//! All arithmetic is exact rational; conservation, complementarity and
//! cost identities are checked with equality rather than tolerances.
//!
//! ```
//! use dso_tree::curve::Step;
//! use dso_tree::net::{Scenario, ScheduleCost, TreeNetwork};
//! use dso_tree::rat::{rat, rint};
//! use dso_tree::sim::{lagrangian_view, simulate, total_cost};
//! use dso_tree::solver::solve;
//! use dso_tree::transform::eliminate_queues;
//!
//! // one link of capacity 1; two units of demand; |t| schedule penalty
//! let net = TreeNetwork::build(&[0], &[rint(1)], &[rint(0)])?;
//! let cost = ScheduleCost::new(rint(0), rint(1), rint(1))?;
//! let scenario = Scenario::new(net, vec![rint(2)], cost, rint(-2), rint(2), rat(1, 2))?;
//!
//! // a burst of rate 2 queues up; its queueing cost is pure waste
//! let state = simulate(&scenario, &[Step::constant(rint(2), rint(0), rint(1))])?;
//! let result = eliminate_queues(&scenario, &state)?;
//! assert_eq!(result.cost_delta, rint(-1));
//! assert!(result.transformed.is_queue_free());
//!
//! // the exact optimum spreads departures at capacity around t* = 0
//! let optimum = solve(&scenario)?;
//! assert_eq!(optimum.objective, rint(1));
//! let view = lagrangian_view(&scenario, &result.transformed)?;
//! assert!(total_cost(&scenario, &view).total() >= optimum.objective);
//! # Ok::<(), dso_tree::Error>(())
//! ```

pub mod cli;
pub mod curve;
pub mod error;
pub mod net;
pub mod rat;
pub mod report;
pub mod sample;
pub mod sim;
pub mod solver;
pub mod transform;

pub use error::{Error, Result};
pub use rat::Rat;
