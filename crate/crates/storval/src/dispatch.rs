//! Single-period economic dispatch and nodal pricing.
//!
//! Given net demand `xi`, the dispatch problem chooses nodal generation and
//! consumption `v` minimizing total cost subject to `v - xi` being a feasible
//! injection. The dual multipliers of the power-balance rows are the nodal
//! prices: the marginal cost of serving one more unit of demand at each bus.
//!
//! The cost of dispatching `v` at bus `i` is `alpha_i * max(v_i, 0) -
//! beta_i * max(-v_i, 0)`, so the problem is linear once `v` is split into
//! nonnegative generation and consumption parts. The LP always has a bounded
//! optimum: generation and consumption are uncapacitated, and
//! `alpha >= beta` rules out profitable pumping loops.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{DISPATCH_SIGN_TOL, PRICE_MATCH_TOL};
use crate::lp::{self, LinearProgram, LpError, LpStatus};
use crate::network::{FlowOperators, Network};

const RESIDUAL_TOL: f64 = 1e-8;
const PRICE_FLOOR: f64 = -1e-10;

/// Optimal dispatch for one demand vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution {
    /// Net production per bus; positive generates, negative consumes.
    pub dispatch: Vec<f64>,
    /// Bus voltage phase angles realizing the injection.
    pub angles: Vec<f64>,
    /// Optimal dispatch cost.
    pub cost: f64,
    /// Nodal prices: duals of the power-balance rows.
    pub prices: Vec<f64>,
    /// Flow on each line, positive from the line's `from` bus.
    pub line_flows: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("demand vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("demand vector contains a non-finite entry at bus {node}")]
    NonFiniteDemand { node: usize },
    #[error("LP solver failed at xi = {xi:?}: {source}")]
    Solver { xi: Vec<f64>, source: LpError },
    #[error("dispatch LP reported {status:?} at xi = {xi:?}, which contradicts the model")]
    UnexpectedStatus { xi: Vec<f64>, status: LpStatus },
    #[error("solution invariant `{invariant}` violated at xi = {xi:?}: {detail}")]
    InvariantViolation {
        xi: Vec<f64>,
        invariant: &'static str,
        detail: String,
    },
    #[error("xi = {xi:?} sits on a price-region boundary (coordinate {coordinate})")]
    BoundaryPoint { xi: Vec<f64>, coordinate: usize },
    #[error("probe step must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error(
        "bus {bus} has both a shunt element and positive consumption \
         utility; dispatch is unbounded because a uniform angle shift turns \
         the shunt into a free power sink"
    )]
    ShuntedUtilitySink { bus: usize },
}

/// Builds the dispatch LP for demand `xi`.
///
/// Columns are ordered generation, consumption, angles, flow slacks. The
/// first `m` equality rows are the power balances whose duals are the nodal
/// prices; the remaining rows tie the flow slacks to the angles.
pub fn build_ed_lp(net: &Network, ops: &FlowOperators, xi: &[f64]) -> LinearProgram {
    let m = net.node_count();
    let l = net.line_count();
    let n = 3 * m + l;
    let rows = m + l;

    let mut matrix = DMatrix::zeros(rows, n);
    for i in 0..m {
        matrix[(i, i)] = 1.0;
        matrix[(i, m + i)] = -1.0;
        for j in 0..m {
            matrix[(i, 2 * m + j)] = -ops.admittance[(i, j)];
        }
    }
    for k in 0..l {
        for j in 0..m {
            matrix[(m + k, 2 * m + j)] = ops.incidence[(k, j)];
        }
        matrix[(m + k, 3 * m + k)] = -1.0;
    }

    let mut objective = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![f64::INFINITY; n];
    for i in 0..m {
        objective[i] = net.alpha()[i];
        objective[m + i] = -net.beta()[i];
        lower[2 * m + i] = f64::NEG_INFINITY;
    }
    for (k, line) in net.lines().iter().enumerate() {
        lower[3 * m + k] = -line.capacity;
        upper[3 * m + k] = line.capacity;
    }

    let mut eq_rhs = vec![0.0; rows];
    eq_rhs[..m].copy_from_slice(xi);

    LinearProgram {
        objective,
        eq_matrix: matrix,
        eq_rhs,
        lower,
        upper,
    }
}

/// Solves the dispatch problem and validates the solution structure.
pub fn solve_ed(
    net: &Network,
    ops: &FlowOperators,
    xi: &[f64],
) -> Result<DispatchSolution, DispatchError> {
    let m = net.node_count();
    if xi.len() != m {
        return Err(DispatchError::DimensionMismatch {
            got: xi.len(),
            expected: m,
        });
    }
    if let Some(node) = xi.iter().position(|v| !v.is_finite()) {
        return Err(DispatchError::NonFiniteDemand { node });
    }
    for bus in 0..m {
        if net.shunt_susceptances()[bus] > 0.0 && net.beta()[bus] > 0.0 {
            return Err(DispatchError::ShuntedUtilitySink { bus });
        }
    }

    let lp = build_ed_lp(net, ops, xi);
    let solution = lp::solve(&lp).map_err(|source| DispatchError::Solver {
        xi: xi.to_vec(),
        source,
    })?;
    if solution.status != LpStatus::Optimal {
        return Err(DispatchError::UnexpectedStatus {
            xi: xi.to_vec(),
            status: solution.status,
        });
    }

    let l = net.line_count();
    let dispatch: Vec<f64> = (0..m)
        .map(|i| solution.primal[i] - solution.primal[m + i])
        .collect();
    let angles: Vec<f64> = solution.primal[2 * m..3 * m].to_vec();
    let line_flows: Vec<f64> = solution.primal[3 * m..3 * m + l].to_vec();
    let prices: Vec<f64> = solution.eq_duals[..m].to_vec();
    let result = DispatchSolution {
        dispatch,
        angles,
        cost: solution.objective_value,
        prices,
        line_flows,
    };
    validate_solution(net, ops, xi, &result)?;
    Ok(result)
}

fn validate_solution(
    net: &Network,
    ops: &FlowOperators,
    xi: &[f64],
    sol: &DispatchSolution,
) -> Result<(), DispatchError> {
    let m = net.node_count();
    let violation = |invariant: &'static str, detail: String| DispatchError::InvariantViolation {
        xi: xi.to_vec(),
        invariant,
        detail,
    };

    for i in 0..m {
        let mut balance = sol.dispatch[i] - xi[i];
        for j in 0..m {
            balance -= ops.admittance[(i, j)] * sol.angles[j];
        }
        if balance.abs() > RESIDUAL_TOL {
            return Err(violation(
                "power balance",
                format!("bus {i} residual {balance}"),
            ));
        }
    }
    for (k, line) in net.lines().iter().enumerate() {
        if sol.line_flows[k].abs() > line.capacity + RESIDUAL_TOL {
            return Err(violation(
                "line capacity",
                format!("line {k} flow {}", sol.line_flows[k]),
            ));
        }
    }
    for i in 0..m {
        if sol.prices[i] < PRICE_FLOOR {
            return Err(violation(
                "price nonnegativity",
                format!("bus {i} price {}", sol.prices[i]),
            ));
        }
        let (alpha, beta) = (net.alpha()[i], net.beta()[i]);
        let price = sol.prices[i];
        let ok = if sol.dispatch[i] > DISPATCH_SIGN_TOL {
            (price - alpha).abs() <= PRICE_MATCH_TOL
        } else if sol.dispatch[i] < -DISPATCH_SIGN_TOL {
            (price - beta).abs() <= PRICE_MATCH_TOL
        } else {
            price >= beta - PRICE_MATCH_TOL && price <= alpha + PRICE_MATCH_TOL
        };
        if !ok {
            return Err(violation(
                "marginal-cost consistency",
                format!(
                    "bus {i} dispatch {} price {price} outside [{beta}, {alpha}] case",
                    sol.dispatch[i]
                ),
            ));
        }
    }
    Ok(())
}

/// Nodal prices at `xi`; shorthand for [`solve_ed`] followed by a projection.
pub fn price_fn(net: &Network, ops: &FlowOperators, xi: &[f64]) -> Result<Vec<f64>, DispatchError> {
    solve_ed(net, ops, xi).map(|sol| sol.prices)
}

/// Result of probing the price map around a demand point.
#[derive(Debug, Clone)]
pub struct InteriorityProbe {
    /// Prices at the probed point itself.
    pub prices: Vec<f64>,
    /// First coordinate whose perturbation moved the prices, if any.
    pub failed_coordinate: Option<usize>,
}

impl InteriorityProbe {
    pub fn is_interior(&self) -> bool {
        self.failed_coordinate.is_none()
    }
}

/// Probes whether `xi` sits strictly inside a region of constant prices by
/// re-solving at `xi ± delta * e_i` for every coordinate.
pub fn interiority_probe(
    net: &Network,
    ops: &FlowOperators,
    xi: &[f64],
    delta: f64,
) -> Result<InteriorityProbe, DispatchError> {
    if !(delta > 0.0) {
        return Err(DispatchError::NonPositiveDelta(delta));
    }
    let prices = price_fn(net, ops, xi)?;
    let mut probe_point = xi.to_vec();
    for coordinate in 0..xi.len() {
        for sign in [1.0, -1.0] {
            probe_point[coordinate] = xi[coordinate] + sign * delta;
            let probed = price_fn(net, ops, &probe_point)?;
            let moved = probed
                .iter()
                .zip(&prices)
                .any(|(a, b)| (a - b).abs() > PRICE_MATCH_TOL);
            if moved {
                return Ok(InteriorityProbe {
                    prices,
                    failed_coordinate: Some(coordinate),
                });
            }
        }
        probe_point[coordinate] = xi[coordinate];
    }
    Ok(InteriorityProbe {
        prices,
        failed_coordinate: None,
    })
}

/// True when prices are locally constant around `xi` (see
/// [`interiority_probe`]).
pub fn check_assumption_interiority(
    net: &Network,
    ops: &FlowOperators,
    xi: &[f64],
    delta: f64,
) -> Result<bool, DispatchError> {
    interiority_probe(net, ops, xi, delta).map(|probe| probe.is_interior())
}

/// Compares central finite differences of the dispatch cost against the
/// nodal prices, returning `|dQ/dxi_i - price_i|` per coordinate.
///
/// Requires `xi` to pass the interiority probe; on a region boundary the
/// one-sided costs straddle a kink and the comparison is meaningless.
pub fn gradient_check(
    net: &Network,
    ops: &FlowOperators,
    xi: &[f64],
    delta: f64,
) -> Result<Vec<f64>, DispatchError> {
    let probe = interiority_probe(net, ops, xi, delta)?;
    if let Some(coordinate) = probe.failed_coordinate {
        return Err(DispatchError::BoundaryPoint {
            xi: xi.to_vec(),
            coordinate,
        });
    }
    let mut point = xi.to_vec();
    let mut discrepancies = Vec::with_capacity(xi.len());
    for i in 0..xi.len() {
        point[i] = xi[i] + delta;
        let up = solve_ed(net, ops, &point)?.cost;
        point[i] = xi[i] - delta;
        let down = solve_ed(net, ops, &point)?.cost;
        point[i] = xi[i];
        let slope = (up - down) / (2.0 * delta);
        discrepancies.push((slope - probe.prices[i]).abs());
    }
    Ok(discrepancies)
}

/// Memoizing dispatch evaluator keyed by the exact bit pattern of the demand
/// vector, so equal demands always observe identical solutions.
#[derive(Debug, Default)]
pub struct EdCache {
    entries: BTreeMap<Vec<u64>, Arc<DispatchSolution>>,
}

pub fn demand_key(xi: &[f64]) -> Vec<u64> {
    xi.iter().map(|v| v.to_bits()).collect()
}

impl EdCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_solve(
        &mut self,
        net: &Network,
        ops: &FlowOperators,
        xi: &[f64],
    ) -> Result<Arc<DispatchSolution>, DispatchError> {
        let key = demand_key(xi);
        if let Some(hit) = self.entries.get(&key) {
            return Ok(Arc::clone(hit));
        }
        let solution = Arc::new(solve_ed(net, ops, xi)?);
        self.entries.insert(key, Arc::clone(&solution));
        Ok(solution)
    }

    /// Solves any missing entries for `demands` in parallel, inserting the
    /// results in input order so the cache contents are deterministic.
    pub fn ensure_all(
        &mut self,
        net: &Network,
        ops: &FlowOperators,
        demands: &[Vec<f64>],
    ) -> Result<(), DispatchError> {
        let mut missing: Vec<Vec<f64>> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for xi in demands {
            let key = demand_key(xi);
            if !self.entries.contains_key(&key) && seen.insert(key) {
                missing.push(xi.clone());
            }
        }
        let solved: Vec<Result<DispatchSolution, DispatchError>> = missing
            .par_iter()
            .map(|xi| solve_ed(net, ops, xi))
            .collect();
        for (xi, solution) in missing.into_iter().zip(solved) {
            self.entries.insert(demand_key(&xi), Arc::new(solution?));
        }
        Ok(())
    }
}
