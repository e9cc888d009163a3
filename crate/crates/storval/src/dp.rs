//! Dynamic-programming oracle for the multi-period dispatch problem.
//!
//! The oracle solves the storage control problem by backward induction over
//! the scenario tree, evaluating every stage cost with a fresh dispatch
//! solve at the storage-shifted demand. It never looks at the price-based
//! valuation formulas, so agreement between the two is a real cross-check:
//! the cost the price lattice predicts for an infinitesimal device must
//! match the cost reduction the control problem actually achieves.
//!
//! For a single device of capacity `eps` below the dual-regime safety margin
//! [`epsilon_bar`], the optimal policy is bang-bang, so the exact reachable
//! state set is `{0, eps}` and the recursion is exact. For general capacity
//! vectors a uniform storage grid restricts the moves, giving an upper bound
//! on the optimal cost that is still useful for trend checks.

use thiserror::Error;

use crate::config::{Tolerances, PRICE_MATCH_TOL};
use crate::dispatch::{self, DispatchError, EdCache};
use crate::network::{FlowOperators, Network};
use crate::scenario::ScenarioTree;
use crate::valuation::PriceLattice;

/// Probe distances are searched up to this radius; a regime boundary
/// further away than this contributes the radius itself.
pub const PROBE_RANGE_CAP: f64 = 1e3;

const POLICY_TIE_TOL: f64 = 1e-9;
const VALUE_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DpError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("tree demand dimension {tree} does not match network size {network}")]
    DimensionMismatch { tree: usize, network: usize },
    #[error("support point {xi:?} sits on a price-region boundary (coordinate {coordinate})")]
    BoundarySupport { xi: Vec<f64>, coordinate: usize },
    #[error("storage capacity must be nonnegative, got {0}")]
    NegativeCapacity(f64),
    #[error("device index {device} out of range for {node_count} buses")]
    DeviceOutOfRange { device: usize, node_count: usize },
    #[error("capacity vector has length {got}, expected {expected}")]
    CapacityDimension { got: usize, expected: usize },
    #[error("a positive capacity needs at least two grid points, got {0}")]
    GridTooSmall(usize),
    #[error("table would need {needed} entries, over the budget of {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("dissipation rate {0} outside (0, 1]")]
    GammaOutOfRange(f64),
}

/// Certified safety radius for single-device perturbations.
///
/// For every distinct demand in the tree and every coordinate direction,
/// the distance to the nearest change of the nodal price vector is bracketed
/// by doubling from the probe step and then bisecting. The result is half
/// the smallest certified distance, so any `eps` below it keeps every
/// shifted demand inside its original constant-price region. Boundaries
/// beyond [`PROBE_RANGE_CAP`] count as the cap.
pub fn epsilon_bar(
    net: &Network,
    ops: &FlowOperators,
    tree: &ScenarioTree,
    tol: &Tolerances,
) -> Result<f64, DpError> {
    if tree.dim() != net.node_count() {
        return Err(DpError::DimensionMismatch {
            tree: tree.dim(),
            network: net.node_count(),
        });
    }
    let delta0 = tol.probe_delta;
    let mut best = PROBE_RANGE_CAP;
    for xi in tree.support() {
        let probe = dispatch::interiority_probe(net, ops, &xi, delta0)?;
        if let Some(coordinate) = probe.failed_coordinate {
            return Err(DpError::BoundarySupport { xi, coordinate });
        }
        let base = &probe.prices;
        let mut point = xi.clone();
        for coordinate in 0..xi.len() {
            for sign in [1.0, -1.0] {
                let mut same_at = |distance: f64| -> Result<bool, DpError> {
                    point[coordinate] = xi[coordinate] + sign * distance;
                    let prices = dispatch::price_fn(net, ops, &point)?;
                    point[coordinate] = xi[coordinate];
                    Ok(prices
                        .iter()
                        .zip(base)
                        .all(|(a, b)| (a - b).abs() <= PRICE_MATCH_TOL))
                };

                // The interiority probe already certified delta0.
                let mut lo = delta0;
                let mut hi = None;
                let mut distance = 2.0 * delta0;
                while distance < best.min(PROBE_RANGE_CAP) {
                    if same_at(distance)? {
                        lo = distance;
                        distance *= 2.0;
                    } else {
                        hi = Some(distance);
                        break;
                    }
                }
                if let Some(mut hi) = hi {
                    while hi - lo > 1e-6 * lo.max(delta0) {
                        let mid = 0.5 * (lo + hi);
                        if same_at(mid)? {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    best = best.min(lo);
                }
                // No change found: the probe certifies up to `best` already.
            }
        }
    }
    Ok(0.5 * best)
}

/// Per-node tables of the exact two-state single-device recursion.
#[derive(Debug, Clone)]
pub struct SingleDeviceDp {
    pub device: usize,
    pub eps: f64,
    /// Cost-to-go with the device empty, per tree node.
    pub value_empty: Vec<f64>,
    /// Cost-to-go with the device full, per tree node.
    pub value_full: Vec<f64>,
    /// Candidate cost of charging/holding-full vs emptying, per (node, state).
    pub candidates_empty: Vec<[f64; 2]>,
    pub candidates_full: Vec<[f64; 2]>,
    /// Whether the recursion chose to charge, per (node, state). Ties charge.
    pub charge_from_empty: Vec<bool>,
    pub charge_from_full: Vec<bool>,
    /// Cost-to-go with no storage at all, per tree node.
    pub zero_value: Vec<f64>,
    /// Expected total cost with the device installed (empty at the start).
    pub total_value: f64,
    /// Expected total cost with no storage.
    pub total_zero_value: f64,
}

const CHARGE: usize = 0;
const EMPTY: usize = 1;

/// Exact dynamic program for one storage device of capacity `eps` at bus
/// `device`, over the reachable state set `{0, eps}`.
///
/// Every stage cost is a dispatch solve at the shifted demand
/// `xi + u * e_device`; the terminal stage always empties the device.
/// `eps = 0` is allowed and reproduces the no-storage cost.
pub fn solve_dp_single_device(
    net: &Network,
    ops: &FlowOperators,
    tree: &ScenarioTree,
    device: usize,
    eps: f64,
    cache: &mut EdCache,
) -> Result<SingleDeviceDp, DpError> {
    if tree.dim() != net.node_count() {
        return Err(DpError::DimensionMismatch {
            tree: tree.dim(),
            network: net.node_count(),
        });
    }
    if device >= net.node_count() {
        return Err(DpError::DeviceOutOfRange {
            device,
            node_count: net.node_count(),
        });
    }
    if !(eps >= 0.0) {
        return Err(DpError::NegativeCapacity(eps));
    }

    let count = tree.node_count();
    let mut value_empty = vec![0.0; count];
    let mut value_full = vec![0.0; count];
    let mut candidates_empty = vec![[0.0; 2]; count];
    let mut candidates_full = vec![[0.0; 2]; count];
    let mut charge_from_empty = vec![false; count];
    let mut charge_from_full = vec![false; count];
    let mut zero_value = vec![0.0; count];

    // The stage subproblems are independent; solve the distinct shifted
    // demands up front in parallel.
    let mut demands = Vec::new();
    for xi in tree.support() {
        for shift in [0.0, eps, -eps] {
            let mut shifted = xi.clone();
            shifted[device] += shift;
            demands.push(shifted);
        }
    }
    cache.ensure_all(net, ops, &demands)?;

    let mut stage_cost = |xi: &[f64], shift: f64| -> Result<f64, DpError> {
        if shift == 0.0 {
            return Ok(cache.get_or_solve(net, ops, xi)?.cost);
        }
        let mut shifted = xi.to_vec();
        shifted[device] += shift;
        Ok(cache.get_or_solve(net, ops, &shifted)?.cost)
    };

    // Children always carry larger ids than their parents, so a reverse
    // id sweep is a valid backward induction.
    for id in (0..count).rev() {
        let xi = &tree.node(id).xi.clone();
        let base_cost = stage_cost(xi, 0.0)?;
        let charge_cost = stage_cost(xi, eps)?; // u = eps - z with z = 0
        let sell_cost = stage_cost(xi, -eps)?; // u = -z with z = eps

        if tree.is_terminal(id) {
            zero_value[id] = base_cost;
            candidates_empty[id] = [charge_cost, base_cost];
            candidates_full[id] = [base_cost, sell_cost];
            value_empty[id] = candidates_empty[id][EMPTY];
            value_full[id] = candidates_full[id][EMPTY];
            charge_from_empty[id] = false;
            charge_from_full[id] = false;
        } else {
            let mut next_empty = 0.0;
            let mut next_full = 0.0;
            let mut next_zero = 0.0;
            for &child in tree.children(id) {
                let p = tree.node(child).prob;
                next_empty += p * value_empty[child];
                next_full += p * value_full[child];
                next_zero += p * zero_value[child];
            }
            zero_value[id] = base_cost + next_zero;
            candidates_empty[id] = [charge_cost + next_full, base_cost + next_empty];
            candidates_full[id] = [base_cost + next_full, sell_cost + next_empty];
            for (candidates, value, charge) in [
                (
                    &candidates_empty[id],
                    &mut value_empty[id],
                    &mut charge_from_empty[id],
                ),
                (
                    &candidates_full[id],
                    &mut value_full[id],
                    &mut charge_from_full[id],
                ),
            ] {
                *charge = candidates[CHARGE] <= candidates[EMPTY];
                *value = if *charge {
                    candidates[CHARGE]
                } else {
                    candidates[EMPTY]
                };
            }
        }
    }

    let mut total_value = 0.0;
    let mut total_zero_value = 0.0;
    for &root in tree.roots() {
        let p = tree.node(root).prob;
        total_value += p * value_empty[root];
        total_zero_value += p * zero_value[root];
    }
    Ok(SingleDeviceDp {
        device,
        eps,
        value_empty,
        value_full,
        candidates_empty,
        candidates_full,
        charge_from_empty,
        charge_from_full,
        zero_value,
        total_value,
        total_zero_value,
    })
}

/// Expected total dispatch cost with no storage installed.
pub fn expected_no_storage_cost(
    net: &Network,
    ops: &FlowOperators,
    tree: &ScenarioTree,
    cache: &mut EdCache,
) -> Result<f64, DpError> {
    if tree.dim() != net.node_count() {
        return Err(DpError::DimensionMismatch {
            tree: tree.dim(),
            network: net.node_count(),
        });
    }
    let mut total = 0.0;
    for (id, node) in tree.nodes() {
        let cost = cache.get_or_solve(net, ops, &node.xi)?.cost;
        total += tree.path_probability(id).expect("node exists") * cost;
    }
    Ok(total)
}

/// Value table of the grid-restricted dynamic program for a general
/// capacity vector.
#[derive(Debug, Clone)]
pub struct ValueFunctionTable {
    pub capacities: Vec<f64>,
    /// Storage levels per bus; a zero-capacity bus has the single level 0.
    pub grid: Vec<Vec<f64>>,
    /// `values[node][state]`, states in mixed-radix order over the grids.
    pub values: Vec<Vec<f64>>,
    /// Chosen target state per (node, state); ties take the smaller index.
    pub policy: Vec<Vec<usize>>,
    /// Expected total cost starting from empty storage.
    pub total_value: f64,
}

impl ValueFunctionTable {
    pub fn state_count(&self) -> usize {
        self.grid.iter().map(|levels| levels.len()).product()
    }

    /// Storage levels of a mixed-radix state index.
    pub fn state_levels(&self, state: usize) -> Vec<f64> {
        let mut rest = state;
        let mut levels = Vec::with_capacity(self.grid.len());
        for axis in &self.grid {
            levels.push(axis[rest % axis.len()]);
            rest /= axis.len();
        }
        levels
    }

    /// Storage move realizing a `state -> target` transition.
    pub fn transition_injection(&self, state: usize, target: usize) -> Vec<f64> {
        let from = self.state_levels(state);
        let to = self.state_levels(target);
        to.iter().zip(&from).map(|(t, f)| t - f).collect()
    }

    /// Storage move the stored policy takes at `(node, state)`. The matching
    /// dispatch is the solve at the node demand plus this injection.
    pub fn policy_injection(&self, node: usize, state: usize) -> Vec<f64> {
        self.transition_injection(state, self.policy[node][state])
    }
}

/// Grid dynamic program for capacities `b`.
///
/// Storage moves are restricted to land on an axis-uniform grid with
/// `grid_points_per_dim` levels per positive-capacity bus, so the value is
/// an upper bound on the unrestricted optimum. The bound is exact for
/// `b = 0` and for a single device on the two-point grid.
pub fn solve_dp_grid(
    net: &Network,
    ops: &FlowOperators,
    tree: &ScenarioTree,
    b: &[f64],
    grid_points_per_dim: usize,
    budget: usize,
    cache: &mut EdCache,
) -> Result<ValueFunctionTable, DpError> {
    let m = net.node_count();
    if tree.dim() != m {
        return Err(DpError::DimensionMismatch {
            tree: tree.dim(),
            network: m,
        });
    }
    if b.len() != m {
        return Err(DpError::CapacityDimension {
            got: b.len(),
            expected: m,
        });
    }
    let mut grid = Vec::with_capacity(m);
    for &capacity in b {
        if !(capacity >= 0.0) {
            return Err(DpError::NegativeCapacity(capacity));
        }
        if capacity == 0.0 {
            grid.push(vec![0.0]);
        } else {
            if grid_points_per_dim < 2 {
                return Err(DpError::GridTooSmall(grid_points_per_dim));
            }
            let levels = (0..grid_points_per_dim)
                .map(|k| capacity * k as f64 / (grid_points_per_dim - 1) as f64)
                .collect();
            grid.push(levels);
        }
    }
    let state_count: usize = grid.iter().map(|axis| axis.len()).product();
    let needed = state_count.saturating_mul(tree.node_count());
    if needed > budget {
        return Err(DpError::BudgetExceeded { needed, budget });
    }

    let levels_of = |state: usize| -> Vec<f64> {
        let mut rest = state;
        let mut levels = Vec::with_capacity(m);
        for axis in &grid {
            levels.push(axis[rest % axis.len()]);
            rest /= axis.len();
        }
        levels
    };
    let all_levels: Vec<Vec<f64>> = (0..state_count).map(levels_of).collect();

    // Per-(node, state) subproblems are independent; solve the distinct
    // shifted demands up front in parallel.
    let mut demands = Vec::new();
    for xi in tree.support() {
        for state in 0..state_count {
            for target in 0..state_count {
                let mut shifted = xi.clone();
                for bus in 0..m {
                    shifted[bus] += all_levels[target][bus] - all_levels[state][bus];
                }
                demands.push(shifted);
            }
        }
    }
    cache.ensure_all(net, ops, &demands)?;

    let count = tree.node_count();
    let mut values = vec![vec![0.0; state_count]; count];
    let mut policy = vec![vec![0usize; state_count]; count];

    for id in (0..count).rev() {
        let xi = tree.node(id).xi.clone();
        let terminal = tree.is_terminal(id);
        let mut continuation = vec![0.0; state_count];
        if !terminal {
            for &child in tree.children(id) {
                let p = tree.node(child).prob;
                for target in 0..state_count {
                    continuation[target] += p * values[child][target];
                }
            }
        }
        for state in 0..state_count {
            let mut best = f64::INFINITY;
            let mut best_target = 0;
            for target in 0..state_count {
                let mut shifted = xi.clone();
                for bus in 0..m {
                    shifted[bus] += all_levels[target][bus] - all_levels[state][bus];
                }
                let cost = cache.get_or_solve(net, ops, &shifted)?.cost + continuation[target];
                if cost < best {
                    best = cost;
                    best_target = target;
                }
            }
            values[id][state] = best;
            policy[id][state] = best_target;
        }
    }

    let mut total_value = 0.0;
    for &root in tree.roots() {
        total_value += tree.node(root).prob * values[root][0];
    }
    Ok(ValueFunctionTable {
        capacities: b.to_vec(),
        grid,
        values,
        policy,
        total_value,
    })
}

/// One disagreement between the recursion's action and the price-threshold
/// policy.
#[derive(Debug, Clone)]
pub struct PolicyMismatch {
    pub node: usize,
    pub stage: usize,
    pub state_full: bool,
    pub dp_charges: bool,
    pub threshold_charges: bool,
    pub candidate_gap: f64,
}

/// Comparison of the single-device recursion against the closed-form value
/// decomposition and the price-threshold policy, at every node and state.
#[derive(Debug, Clone)]
pub struct ValueDecompositionReport {
    pub device: usize,
    pub eps: f64,
    /// Largest deviation of `J(no storage) - J(z)` from
    /// `price * z + eps * expected future gains`, over nodes and states.
    pub max_value_residual: f64,
    pub value_tolerance: f64,
    pub policy_mismatches: Vec<PolicyMismatch>,
    /// Largest terminal-stage violation of "emptying is optimal".
    pub max_terminal_slack: f64,
}

impl ValueDecompositionReport {
    pub fn pass(&self) -> bool {
        self.max_value_residual <= self.value_tolerance
            && self.policy_mismatches.is_empty()
            && self.max_terminal_slack <= POLICY_TIE_TOL
    }
}

/// Verifies the single-device value decomposition and threshold policy.
pub fn verify_value_decomposition(
    net: &Network,
    ops: &FlowOperators,
    tree: &ScenarioTree,
    lattice: &PriceLattice,
    device: usize,
    eps: f64,
    cache: &mut EdCache,
) -> Result<ValueDecompositionReport, DpError> {
    let dp = solve_dp_single_device(net, ops, tree, device, eps, cache)?;
    let count = tree.node_count();

    // Expected future positive price gains at the device bus, conditional
    // on each node.
    let mut tail = vec![0.0; count];
    for id in (0..count).rev() {
        if let Some(predictor) = lattice.predictor(id) {
            let gain = (predictor[device] - lattice.prices(id)[device]).max(0.0);
            let expected_children: f64 = tree
                .children(id)
                .iter()
                .map(|&c| tree.node(c).prob * tail[c])
                .sum();
            tail[id] = gain + expected_children;
        }
    }

    let mut max_value_residual = 0.0_f64;
    let mut policy_mismatches = Vec::new();
    let mut max_terminal_slack = 0.0_f64;
    for (id, node) in tree.nodes() {
        let price = lattice.prices(id)[device];
        for (state_full, value) in [(false, dp.value_empty[id]), (true, dp.value_full[id])] {
            let z = if state_full { eps } else { 0.0 };
            let expected = price * z + eps * tail[id];
            let actual = dp.zero_value[id] - value;
            max_value_residual = max_value_residual.max((actual - expected).abs());
        }
        if tree.is_terminal(id) {
            for candidates in [&dp.candidates_empty[id], &dp.candidates_full[id]] {
                max_terminal_slack = max_terminal_slack.max(candidates[EMPTY] - candidates[CHARGE]);
            }
        } else {
            let predictor = lattice.predictor(id).expect("non-terminal node");
            let threshold_charges = price <= predictor[device];
            for (state_full, candidates, dp_charges) in [
                (false, &dp.candidates_empty[id], dp.charge_from_empty[id]),
                (true, &dp.candidates_full[id], dp.charge_from_full[id]),
            ] {
                let gap = (candidates[CHARGE] - candidates[EMPTY]).abs();
                if dp_charges != threshold_charges && gap > POLICY_TIE_TOL {
                    policy_mismatches.push(PolicyMismatch {
                        node: id,
                        stage: node.stage,
                        state_full,
                        dp_charges,
                        threshold_charges,
                        candidate_gap: gap,
                    });
                }
            }
        }
    }
    Ok(ValueDecompositionReport {
        device,
        eps,
        max_value_residual,
        value_tolerance: VALUE_RESIDUAL_TOL,
        policy_mismatches,
        max_terminal_slack,
    })
}

/// Expected revenue of the causal threshold policy for a device of capacity
/// `b` at bus `device`: fill when the (dissipation-discounted) predictor is
/// at or above the current price, empty otherwise, and always empty at the
/// final stage. `gamma` of `None` means a lossless device.
pub fn simulate_threshold_arbitrage(
    lattice: &PriceLattice,
    tree: &ScenarioTree,
    device: usize,
    b: f64,
    gamma: Option<f64>,
) -> Result<f64, DpError> {
    if device >= tree.dim() {
        return Err(DpError::DeviceOutOfRange {
            device,
            node_count: tree.dim(),
        });
    }
    if !(b >= 0.0) {
        return Err(DpError::NegativeCapacity(b));
    }
    let gamma = gamma.unwrap_or(1.0);
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(DpError::GammaOutOfRange(gamma));
    }

    // Each node is reached with exactly one inherited storage level, so a
    // single pass in id order suffices.
    let mut revenue = 0.0;
    let mut holdings = vec![0.0; tree.node_count()];
    for (id, node) in tree.nodes() {
        let arriving = match node.parent {
            None => 0.0,
            Some(parent) => holdings[parent],
        };
        let carried = gamma * arriving;
        let price = lattice.prices(id)[device];
        let weight = tree.path_probability(id).expect("node exists");
        if tree.is_terminal(id) {
            revenue += weight * price * carried;
        } else {
            let predictor = lattice.predictor(id).expect("non-terminal node")[device];
            if price <= gamma * predictor {
                revenue -= weight * price * (b - carried);
                holdings[id] = b;
            } else {
                revenue += weight * price * carried;
                holdings[id] = 0.0;
            }
        }
    }
    Ok(revenue)
}

/// Expected revenue of clairvoyant arbitrage: along each demand path, buy at
/// every local price minimum and sell at the following local maximum, always
/// selling out at the end.
pub fn perfect_foresight_revenue(
    lattice: &PriceLattice,
    tree: &ScenarioTree,
    device: usize,
    b: f64,
) -> Result<f64, DpError> {
    if device >= tree.dim() {
        return Err(DpError::DeviceOutOfRange {
            device,
            node_count: tree.dim(),
        });
    }
    if !(b >= 0.0) {
        return Err(DpError::NegativeCapacity(b));
    }
    let mut revenue = 0.0;
    for (leaf, _) in tree.nodes().filter(|(id, _)| tree.is_terminal(*id)) {
        let path = crate::valuation::root_path(tree, leaf);
        let prices: Vec<f64> = path.iter().map(|&id| lattice.prices(id)[device]).collect();
        let weight = tree.path_probability(leaf).expect("node exists");
        revenue += weight * b * extrema_sweep(&prices);
    }
    Ok(revenue)
}

/// Per-unit revenue of buying at each local minimum and selling at the next
/// local maximum of a price sequence.
fn extrema_sweep(prices: &[f64]) -> f64 {
    let last = prices.len().saturating_sub(1);
    let mut revenue = 0.0;
    let mut index = 0;
    while index < last {
        while index < last && prices[index + 1] <= prices[index] {
            index += 1;
        }
        if index == last {
            break;
        }
        let bought = prices[index];
        while index < last && prices[index + 1] >= prices[index] {
            index += 1;
        }
        revenue += prices[index] - bought;
    }
    revenue
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DEFAULT_NODE_BUDGET;
    use crate::scenario::TreeNode;
    use crate::valuation::{build_price_lattice, lmv};

    fn copperplate() -> (Network, FlowOperators) {
        let net = Network::new(1, Vec::new(), vec![0.0], vec![10.0], vec![2.0]).unwrap();
        let ops = FlowOperators::build(&net).unwrap();
        (net, ops)
    }

    fn two_node(capacity: f64) -> (Network, FlowOperators) {
        let net = Network::new(
            2,
            vec![crate::network::Line {
                from: 0,
                to: 1,
                susceptance: 1.0,
                capacity,
            }],
            vec![0.0; 2],
            vec![10.0; 2],
            vec![2.0; 2],
        )
        .unwrap();
        let ops = FlowOperators::build(&net).unwrap();
        (net, ops)
    }

    fn chain_tree(xis: &[Vec<f64>]) -> ScenarioTree {
        let nodes = xis
            .iter()
            .enumerate()
            .map(|(stage, xi)| TreeNode {
                stage,
                parent: if stage == 0 { None } else { Some(stage - 1) },
                prob: 1.0,
                xi: xi.clone(),
            })
            .collect();
        ScenarioTree::new(xis.len(), nodes, DEFAULT_NODE_BUDGET).unwrap()
    }

    fn copperplate_iid3() -> (Network, FlowOperators, ScenarioTree) {
        let (net, ops) = copperplate();
        let tree = ScenarioTree::build_iid(
            &[(vec![-1.0], 0.5), (vec![1.0], 0.5)],
            3,
            DEFAULT_NODE_BUDGET,
        )
        .unwrap();
        (net, ops, tree)
    }

    #[test]
    fn epsilon_bar_certifies_half_the_axis_distance() {
        let (net, ops) = copperplate();
        let tree = chain_tree(&[vec![1.0], vec![1.0]]);
        // The only regime change along the axis is at demand zero, one unit
        // away: the certified radius is half of that.
        let eps = epsilon_bar(&net, &ops, &tree, &Tolerances::default()).unwrap();
        assert!(eps <= 0.5 + 1e-9, "eps {eps}");
        assert!(eps >= 0.45, "eps {eps}");
    }

    #[test]
    fn epsilon_bar_congested_two_node() {
        let (net, ops) = two_node(1.0);
        let tree = chain_tree(&[vec![3.0, -2.0], vec![3.0, -2.0]]);
        let eps = epsilon_bar(&net, &ops, &tree, &Tolerances::default()).unwrap();
        // Sweep each axis on a fine mesh to locate the true first change.
        let base = dispatch::price_fn(&net, &ops, &[3.0, -2.0]).unwrap();
        let mut sweep_distance = f64::INFINITY;
        for coordinate in 0..2 {
            for sign in [1.0, -1.0] {
                for step in 1..=4000 {
                    let distance = step as f64 * 1e-3;
                    let mut point = [3.0, -2.0];
                    point[coordinate] += sign * distance;
                    let prices = dispatch::price_fn(&net, &ops, &point).unwrap();
                    if prices
                        .iter()
                        .zip(&base)
                        .any(|(a, b)| (a - b).abs() > PRICE_MATCH_TOL)
                    {
                        sweep_distance = sweep_distance.min(distance);
                        break;
                    }
                }
            }
        }
        assert!(
            eps <= 0.5 * sweep_distance + 1e-6,
            "eps {eps} sweep {sweep_distance}"
        );
        assert!(
            eps >= 0.4 * sweep_distance,
            "eps {eps} sweep {sweep_distance}"
        );
    }

    #[test]
    fn epsilon_bar_rejects_boundary_support() {
        let (net, ops) = two_node(1.0);
        let result = epsilon_bar(
            &net,
            &ops,
            &chain_tree(&[vec![0.5, -0.5], vec![1.0, 1.0]]),
            &Tolerances::default(),
        );
        assert!(matches!(result, Err(DpError::BoundarySupport { .. })));
    }

    #[test]
    fn zero_capacity_reproduces_no_storage_cost() {
        let (net, ops, tree) = copperplate_iid3();
        let mut cache = EdCache::new();
        let dp = solve_dp_single_device(&net, &ops, &tree, 0, 0.0, &mut cache).unwrap();
        let direct = expected_no_storage_cost(&net, &ops, &tree, &mut cache).unwrap();
        assert!((dp.total_value - direct).abs() <= 1e-12);
        assert!((dp.total_zero_value - direct).abs() <= 1e-12);
        assert!((direct - 12.0).abs() <= 1e-9);
    }

    #[test]
    fn deterministic_rise_buys_low_sells_high() {
        let (net, ops) = copperplate();
        let tree = chain_tree(&[vec![-1.0], vec![1.0]]);
        let mut cache = EdCache::new();
        let eps = 0.25;
        let dp = solve_dp_single_device(&net, &ops, &tree, 0, eps, &mut cache).unwrap();
        assert!((dp.total_zero_value - dp.total_value - eps * 8.0).abs() <= 1e-12);
        assert!(dp.charge_from_empty[0]);
    }

    #[test]
    fn headline_identity_on_copperplate() {
        let (net, ops, tree) = copperplate_iid3();
        let lattice = build_price_lattice(&net, &ops, &tree, &Tolerances::default()).unwrap();
        let report = lmv(&lattice, &tree);
        let mut cache = EdCache::new();
        let eps = 0.1;
        let dp = solve_dp_single_device(&net, &ops, &tree, 0, eps, &mut cache).unwrap();
        let saved = dp.total_zero_value - dp.total_value;
        assert!((saved - eps * report.lmv[0]).abs() <= 1e-9, "saved {saved}");
    }

    #[test]
    fn grid_matches_single_device_on_two_points() {
        let (net, ops, tree) = copperplate_iid3();
        let mut cache = EdCache::new();
        let eps = 0.2;
        let single = solve_dp_single_device(&net, &ops, &tree, 0, eps, &mut cache).unwrap();
        let table = solve_dp_grid(
            &net,
            &ops,
            &tree,
            &[eps],
            2,
            DEFAULT_NODE_BUDGET,
            &mut cache,
        )
        .unwrap();
        assert!((table.total_value - single.total_value).abs() <= 1e-12);
    }

    #[test]
    fn grid_value_non_increasing_in_capacity() {
        let (net, ops) = two_node(1.0);
        let tree = ScenarioTree::build_iid(
            &[(vec![3.0, -2.0], 0.5), (vec![-2.0, 0.4], 0.5)],
            3,
            DEFAULT_NODE_BUDGET,
        )
        .unwrap();
        let mut cache = EdCache::new();
        let small = solve_dp_grid(
            &net,
            &ops,
            &tree,
            &[0.2, 0.0],
            2,
            DEFAULT_NODE_BUDGET,
            &mut cache,
        )
        .unwrap();
        let large = solve_dp_grid(
            &net,
            &ops,
            &tree,
            &[0.4, 0.0],
            3,
            DEFAULT_NODE_BUDGET,
            &mut cache,
        )
        .unwrap();
        assert!(large.total_value <= small.total_value + 1e-12);
    }

    #[test]
    fn grid_budget_guardrail() {
        let (net, ops, tree) = copperplate_iid3();
        let mut cache = EdCache::new();
        let result = solve_dp_grid(&net, &ops, &tree, &[1e-3], 64, 100, &mut cache);
        assert!(matches!(result, Err(DpError::BudgetExceeded { .. })));
    }

    #[test]
    fn decomposition_terminal_and_chain_cases() {
        let (net, ops) = copperplate();
        let tree = chain_tree(&[vec![-1.0], vec![1.0]]);
        let tol = Tolerances::default();
        let lattice = build_price_lattice(&net, &ops, &tree, &tol).unwrap();
        let mut cache = EdCache::new();
        let report =
            verify_value_decomposition(&net, &ops, &tree, &lattice, 0, 0.25, &mut cache).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn decomposition_full_lattice_on_copperplate() {
        let (net, ops, tree) = copperplate_iid3();
        let tol = Tolerances::default();
        let lattice = build_price_lattice(&net, &ops, &tree, &tol).unwrap();
        let mut cache = EdCache::new();
        let report =
            verify_value_decomposition(&net, &ops, &tree, &lattice, 0, 0.3, &mut cache).unwrap();
        assert!(report.pass(), "{report:?}");
        assert!(report.max_value_residual <= 1e-9);
    }

    #[test]
    fn threshold_simulation_recovers_capacity_times_value() {
        let (net, ops, tree) = copperplate_iid3();
        let tol = Tolerances::default();
        let lattice = build_price_lattice(&net, &ops, &tree, &tol).unwrap();
        let report = lmv(&lattice, &tree);

        let zero = simulate_threshold_arbitrage(&lattice, &tree, 0, 0.0, None).unwrap();
        assert_eq!(zero, 0.0);

        let revenue = simulate_threshold_arbitrage(&lattice, &tree, 0, 2.0, None).unwrap();
        assert!((revenue - 2.0 * report.lmv[0]).abs() <= 1e-9);
        assert!((revenue - 8.0).abs() <= 1e-9);
    }

    #[test]
    fn threshold_simulation_deterministic_rise() {
        let (net, ops) = copperplate();
        let tree = chain_tree(&[vec![-1.0], vec![1.0]]);
        let lattice = build_price_lattice(&net, &ops, &tree, &Tolerances::default()).unwrap();
        let revenue = simulate_threshold_arbitrage(&lattice, &tree, 0, 1.0, None).unwrap();
        assert!((revenue - 8.0).abs() <= 1e-12);
    }

    #[test]
    fn foresight_revenue_matches_upper_bound() {
        let (net, ops, tree) = copperplate_iid3();
        let lattice = build_price_lattice(&net, &ops, &tree, &Tolerances::default()).unwrap();
        let report = lmv(&lattice, &tree);
        let b = 1.5;
        let revenue = perfect_foresight_revenue(&lattice, &tree, 0, b).unwrap();
        assert!((revenue - b * report.upper_bound[0]).abs() <= 1e-9);
    }

    #[test]
    fn extrema_sweep_handles_plateaus_and_oscillation() {
        assert_eq!(extrema_sweep(&[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(extrema_sweep(&[2.0, 10.0, 2.0, 10.0]), 16.0);
        assert_eq!(extrema_sweep(&[10.0, 2.0]), 0.0);
        assert_eq!(extrema_sweep(&[2.0, 2.0, 10.0, 10.0, 4.0]), 8.0);
    }
}
