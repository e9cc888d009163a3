//! Valuation of energy storage capacity on DC power networks.
//!
//! The toolkit models a transmission-constrained power network that must
//! balance a finite-support stochastic net-demand process over a finite
//! horizon. It computes the nodal price process induced by single-period
//! economic dispatch, the marginal value of an initial investment in storage
//! capacity at each bus, a total-variation upper bound on that value, and a
//! stochastic dynamic-programming oracle that verifies the price-based value
//! against the underlying control problem.
//!
//! Entry points by capability:
//!
//! - [`network`]: buses, lines, admittance/incidence/flow-factor operators,
//!   feasible injections, the `storval-net/1` file format.
//! - [`lp`]: a deterministic bounded-variable simplex solver with exact
//!   basis duals.
//! - [`dispatch`]: single-period economic dispatch, nodal prices, dual
//!   probing and finite-difference checks.
//! - [`scenario`]: scenario trees for finite-support demand processes, the
//!   `storval-tree/1` file format, i.i.d. and Markov builders.
//! - [`valuation`]: price lattices, storage value reports, the dissipative
//!   variant, tightness diagnostics and two-node limiting formulas.
//! - [`dp`]: exact single-device dynamic programming, grid dynamic
//!   programming for general capacities, and arbitrage policy simulators.
//! - [`verify`]: the cross-check audit wiring the above together.
//!
//! The `examples/` directory contains one runnable example per capability;
//! the `storval` binary exposes the same operations as subcommands.

pub mod config;
pub mod dispatch;
pub mod dp;
pub mod lp;
pub mod network;
pub mod report;
pub mod scenario;
pub mod valuation;
pub mod verify;

pub use config::Tolerances;
pub use dispatch::{solve_ed, DispatchSolution};
pub use network::{FlowOperators, Network};
pub use scenario::ScenarioTree;
pub use valuation::{LmvReport, PriceLattice};
