//! Shared test fixtures and independent oracles.
//!
//! The oracles here recompute valuation quantities by explicit root-to-leaf
//! path enumeration, and solve small dispatch LPs by brute-force vertex
//! enumeration. They deliberately avoid the `valuation` and `lp` solver
//! paths they are used to check; dispatch solves are the only shared
//! machinery, and those are themselves checked against the vertex oracle.

#![allow(dead_code)]

use storval::config::DEFAULT_NODE_BUDGET;
use storval::dispatch;
use storval::lp::LinearProgram;
use storval::network::{FlowOperators, Line, Network};
use storval::scenario::{ScenarioTree, TreeNode};

pub fn copperplate() -> Network {
    Network::new(1, Vec::new(), vec![0.0], vec![10.0], vec![2.0]).unwrap()
}

pub fn two_node(capacity: f64) -> Network {
    Network::new(
        2,
        vec![Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            capacity,
        }],
        vec![0.0; 2],
        vec![10.0; 2],
        vec![2.0; 2],
    )
    .unwrap()
}

pub fn two_node_het(capacity: f64) -> Network {
    Network::new(
        2,
        vec![Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            capacity,
        }],
        vec![0.0; 2],
        vec![10.0, 6.0],
        vec![4.0, 2.0],
    )
    .unwrap()
}

pub fn triangle(capacity: f64) -> Network {
    let lines = vec![
        Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            capacity,
        },
        Line {
            from: 1,
            to: 2,
            susceptance: 1.0,
            capacity,
        },
        Line {
            from: 2,
            to: 0,
            susceptance: 1.0,
            capacity,
        },
    ];
    Network::new(3, lines, vec![0.0; 3], vec![10.0; 3], vec![2.0; 3]).unwrap()
}

pub fn four_node_tree() -> Network {
    let lines = vec![
        Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            capacity: 1.0,
        },
        Line {
            from: 1,
            to: 2,
            susceptance: 1.0,
            capacity: 1.0,
        },
        Line {
            from: 1,
            to: 3,
            susceptance: 1.0,
            capacity: 1.0,
        },
    ];
    Network::new(4, lines, vec![0.0; 4], vec![10.0; 4], vec![2.0; 4]).unwrap()
}

pub fn five_node_star() -> Network {
    let lines = (1..5)
        .map(|to| Line {
            from: 0,
            to,
            susceptance: 1.0,
            capacity: 1.0,
        })
        .collect();
    Network::new(5, lines, vec![0.0; 5], vec![10.0; 5], vec![2.0; 5]).unwrap()
}

pub fn ops(net: &Network) -> FlowOperators {
    FlowOperators::build(net).unwrap()
}

/// Deterministic single-path tree through the given demand sequence.
pub fn chain_tree(xis: &[Vec<f64>]) -> ScenarioTree {
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

pub fn iid_tree(support: &[(Vec<f64>, f64)], horizon: usize) -> ScenarioTree {
    ScenarioTree::build_iid(support, horizon, DEFAULT_NODE_BUDGET).unwrap()
}

pub fn markov_tree(
    states: &[Vec<f64>],
    transition: &[Vec<f64>],
    initial: &[f64],
    horizon: usize,
) -> ScenarioTree {
    ScenarioTree::build_markov(states, transition, initial, horizon, DEFAULT_NODE_BUDGET).unwrap()
}

/// All root-to-leaf paths with their probabilities.
pub fn enumerate_paths(tree: &ScenarioTree) -> Vec<(f64, Vec<usize>)> {
    let mut paths = Vec::new();
    for (leaf, _) in tree.nodes().filter(|(id, _)| tree.is_terminal(*id)) {
        let mut path = vec![leaf];
        let mut cursor = leaf;
        while let Some(parent) = tree.node(cursor).parent {
            path.push(parent);
            cursor = parent;
        }
        path.reverse();
        paths.push((tree.path_probability(leaf).unwrap(), path));
    }
    paths
}

/// Prices at every node, straight from per-node dispatch solves.
pub fn price_map(net: &Network, ops: &FlowOperators, tree: &ScenarioTree) -> Vec<Vec<f64>> {
    let mut cache: std::collections::BTreeMap<Vec<u64>, Vec<f64>> = Default::default();
    let mut prices = Vec::with_capacity(tree.node_count());
    for (_, node) in tree.nodes() {
        let key: Vec<u64> = node.xi.iter().map(|v| v.to_bits()).collect();
        let entry = cache
            .entry(key)
            .or_insert_with(|| dispatch::price_fn(net, ops, &node.xi).unwrap());
        prices.push(entry.clone());
    }
    prices
}

/// One-step predictors per node from direct child summation.
pub fn predictor_map(tree: &ScenarioTree, prices: &[Vec<f64>]) -> Vec<Option<Vec<f64>>> {
    let m = tree.dim();
    let mut predictors = vec![None; tree.node_count()];
    for (id, _) in tree.nodes() {
        if tree.is_terminal(id) {
            continue;
        }
        let mut expectation = vec![0.0; m];
        for &child in tree.children(id) {
            for bus in 0..m {
                expectation[bus] += tree.node(child).prob * prices[child][bus];
            }
        }
        predictors[id] = Some(expectation);
    }
    predictors
}

/// Valuation quantities computed by brute-force path enumeration.
pub struct PathOracle {
    pub lmv: Vec<f64>,
    pub upper_bound: Vec<f64>,
    pub tv_expectation: Vec<f64>,
    pub terminal_drift: Vec<f64>,
}

pub fn path_oracle(net: &Network, ops: &FlowOperators, tree: &ScenarioTree) -> PathOracle {
    let m = tree.dim();
    let prices = price_map(net, ops, tree);
    let predictors = predictor_map(tree, &prices);
    let mut lmv = vec![0.0; m];
    let mut tv = vec![0.0; m];
    let mut drift = vec![0.0; m];
    for (prob, path) in enumerate_paths(tree) {
        for bus in 0..m {
            for window in path.windows(2) {
                let here = prices[window[0]][bus];
                let next = prices[window[1]][bus];
                let predictor = predictors[window[0]].as_ref().unwrap()[bus];
                lmv[bus] += prob * (predictor - here).max(0.0);
                tv[bus] += prob * (next - here).abs();
            }
            drift[bus] += prob * (prices[*path.last().unwrap()][bus] - prices[path[0]][bus]);
        }
    }
    let upper_bound = tv
        .iter()
        .zip(&drift)
        .map(|(tv, drift)| 0.5 * tv + 0.5 * drift)
        .collect();
    PathOracle {
        lmv,
        upper_bound,
        tv_expectation: tv,
        terminal_drift: drift,
    }
}

/// Dissipative value at `gamma` by the same path enumeration.
pub fn path_oracle_dissipative(
    net: &Network,
    ops: &FlowOperators,
    tree: &ScenarioTree,
    gamma: f64,
) -> Vec<f64> {
    let m = tree.dim();
    let prices = price_map(net, ops, tree);
    let predictors = predictor_map(tree, &prices);
    let mut value = vec![0.0; m];
    for (prob, path) in enumerate_paths(tree) {
        for bus in 0..m {
            for window in path.windows(2) {
                let here = prices[window[0]][bus];
                let predictor = predictors[window[0]].as_ref().unwrap()[bus];
                value[bus] += prob * (gamma * predictor - here).max(0.0);
            }
        }
    }
    value
}

/// Brute-force minimum of a small bounded LP by enumerating basic feasible
/// points: every choice of basis columns and every resting value for the
/// nonbasic columns. A nonbasic column rests at any finite bound; a fully
/// free nonbasic column rests at zero, which fixes the gauge of feasible
/// sets that contain a line (the dispatch LP's uniform angle shift).
/// Returns the optimal objective.
pub fn brute_force_lp_value(lp: &LinearProgram) -> Option<f64> {
    let rows = lp.eq_matrix.nrows();
    let cols = lp.eq_matrix.ncols();
    let feas_tol = 1e-9;
    let mut best: Option<f64> = None;

    let mut basis = Vec::new();
    enumerate_bases(rows, cols, 0, &mut basis, &mut |basis: &[usize]| {
        let mut in_basis = vec![false; cols];
        for &col in basis {
            in_basis[col] = true;
        }
        let nonbasic: Vec<usize> = (0..cols).filter(|&c| !in_basis[c]).collect();
        let resting: Vec<Vec<f64>> = nonbasic
            .iter()
            .map(|&col| {
                let mut values = Vec::new();
                if lp.lower[col].is_finite() {
                    values.push(lp.lower[col]);
                }
                if lp.upper[col].is_finite() && lp.upper[col] != lp.lower[col] {
                    values.push(lp.upper[col]);
                }
                if values.is_empty() {
                    values.push(0.0);
                }
                values
            })
            .collect();
        let mut basis_matrix = nalgebra::DMatrix::zeros(rows, rows);
        for (slot, &col) in basis.iter().enumerate() {
            basis_matrix.set_column(slot, &lp.eq_matrix.column(col));
        }
        let inverse = match basis_matrix.try_inverse() {
            Some(inverse) => inverse,
            None => return,
        };

        let combos: usize = resting.iter().map(|values| values.len()).product();
        for pick in 0..combos {
            let mut x = vec![0.0; cols];
            let mut rest = pick;
            for (slot, &col) in nonbasic.iter().enumerate() {
                let values = &resting[slot];
                x[col] = values[rest % values.len()];
                rest /= values.len();
            }
            let mut rhs = nalgebra::DVector::from_column_slice(&lp.eq_rhs);
            for &col in &nonbasic {
                if x[col] != 0.0 {
                    for row in 0..rows {
                        rhs[row] -= lp.eq_matrix[(row, col)] * x[col];
                    }
                }
            }
            let basic_values = &inverse * rhs;
            let mut feasible = true;
            for (slot, &col) in basis.iter().enumerate() {
                let value = basic_values[slot];
                if value < lp.lower[col] - feas_tol || value > lp.upper[col] + feas_tol {
                    feasible = false;
                    break;
                }
                x[col] = value;
            }
            if !feasible {
                continue;
            }
            let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            best = Some(match best {
                Some(current) => current.min(objective),
                None => objective,
            });
        }
    });
    best
}

fn enumerate_bases(
    rows: usize,
    cols: usize,
    start: usize,
    basis: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if basis.len() == rows {
        visit(basis);
        return;
    }
    let needed = rows - basis.len();
    for col in start..cols {
        if cols - col < needed {
            break;
        }
        basis.push(col);
        enumerate_bases(rows, cols, col + 1, basis, visit);
        basis.pop();
    }
}

/// Named corpus instances spanning the reference networks, tree families
/// and horizons. Every instance passes the interiority gate.
pub struct Instance {
    pub name: &'static str,
    pub net: Network,
    pub tree: ScenarioTree,
}

pub fn corpus() -> Vec<Instance> {
    let mut instances = Vec::new();
    let mut add = |name: &'static str, net: Network, tree: ScenarioTree| {
        instances.push(Instance { name, net, tree });
    };

    // Copperplate: one bus, prices are two-valued.
    let cp2 = vec![(vec![-1.0], 0.5), (vec![1.0], 0.5)];
    let cp3 = vec![(vec![-1.3], 0.3), (vec![0.6], 0.4), (vec![1.1], 0.3)];
    add(
        "cp_det_n4",
        copperplate(),
        chain_tree(&[vec![0.8], vec![-0.9], vec![1.2], vec![-0.4]]),
    );
    add("cp_iid2_n2", copperplate(), iid_tree(&cp2, 2));
    add("cp_iid2_n3", copperplate(), iid_tree(&cp2, 3));
    add("cp_iid3_n4", copperplate(), iid_tree(&cp3, 4));
    add("cp_iid2_n5", copperplate(), iid_tree(&cp2, 5));
    add(
        "cp_markov_n4",
        copperplate(),
        markov_tree(
            &[vec![-1.0], vec![1.0]],
            &[vec![0.7, 0.3], vec![0.4, 0.6]],
            &[0.6, 0.4],
            4,
        ),
    );

    // Two-bus with a binding line.
    let tn2 = vec![(vec![3.0, -2.0], 0.5), (vec![-2.0, 0.4], 0.5)];
    let tn3 = vec![
        (vec![3.0, -2.0], 0.3),
        (vec![-2.0, 0.4], 0.3),
        (vec![0.8, 0.9], 0.4),
    ];
    add(
        "tn_det_n3",
        two_node(1.0),
        chain_tree(&[vec![3.0, -2.0], vec![-2.0, 0.4], vec![1.5, 1.2]]),
    );
    add("tn_iid2_n3", two_node(1.0), iid_tree(&tn2, 3));
    add("tn_iid3_n3", two_node(1.0), iid_tree(&tn3, 3));
    add("tn_iid2_n4", two_node(1.0), iid_tree(&tn2, 4));
    add(
        "tn_markov_n4",
        two_node(1.0),
        markov_tree(
            &[vec![3.0, -2.0], vec![-2.0, 0.4]],
            &[vec![0.7, 0.3], vec![0.4, 0.6]],
            &[0.6, 0.4],
            4,
        ),
    );
    add("tn_wide_iid2_n3", two_node(1e6), iid_tree(&tn2, 3));

    // Heterogeneous costs on the same two-bus graph.
    let het2 = vec![(vec![1.5, -0.3], 0.5), (vec![-1.2, 0.4], 0.5)];
    add("tnhet_iid2_n3", two_node_het(0.6), iid_tree(&het2, 3));
    add("tnhet_iid2_n4", two_node_het(0.6), iid_tree(&het2, 4));
    add(
        "tnhet_markov_n3",
        two_node_het(0.6),
        markov_tree(
            &[vec![1.5, -0.3], vec![-1.2, 0.4]],
            &[vec![0.8, 0.2], vec![0.3, 0.7]],
            &[0.5, 0.5],
            3,
        ),
    );

    // Three-point demand mixing three node-1 price levels: the bound is
    // strictly slack at bus 1 on this family.
    let het3 = vec![
        (vec![1.5, -0.3], 0.4),
        (vec![-1.2, 0.4], 0.3),
        (vec![0.3, 0.2], 0.3),
    ];
    add("tnhet3_iid3_n3", two_node_het(0.6), iid_tree(&het3, 3));
    add("tnhet3_iid3_n4", two_node_het(0.6), iid_tree(&het3, 4));

    // Cyclic three-bus network.
    let tri2 = vec![(vec![0.9, -0.4, 0.3], 0.5), (vec![-0.8, 0.45, -0.9], 0.5)];
    add(
        "tri_det_n3",
        triangle(1.0),
        chain_tree(&[
            vec![0.9, -0.4, 0.3],
            vec![-0.8, 0.45, -0.9],
            vec![1.2, 0.7, -0.3],
        ]),
    );
    add("tri_iid2_n3", triangle(1.0), iid_tree(&tri2, 3));
    add("tri_iid2_n4", triangle(1.0), iid_tree(&tri2, 4));
    add(
        "tri_tight_iid2_n3",
        triangle(0.35),
        iid_tree(
            &[(vec![1.6, -0.5, -0.2], 0.5), (vec![-0.9, 0.7, 0.5], 0.5)],
            3,
        ),
    );
    // Loop congestion prices a bus at the mean of the cost pair, giving a
    // three-valued price path around the cycle.
    let tri3 = vec![
        (vec![-2.0, 0.6, 0.4], 0.4),
        (vec![0.9, -1.1, 0.4], 0.3),
        (vec![0.4, -2.0, 0.6], 0.3),
    ];
    add("tri_loop_iid3_n3", triangle(0.5), iid_tree(&tri3, 3));

    // Acyclic four-bus tree.
    let ft2 = vec![
        (vec![1.1, -0.6, 0.4, -0.3], 0.5),
        (vec![-0.7, 0.8, -0.5, 0.9], 0.5),
    ];
    add("ft_iid2_n3", four_node_tree(), iid_tree(&ft2, 3));
    add("ft_iid2_n4", four_node_tree(), iid_tree(&ft2, 4));
    add(
        "ft_markov_n3",
        four_node_tree(),
        markov_tree(
            &[vec![1.1, -0.6, 0.4, -0.3], vec![-0.7, 0.8, -0.5, 0.9]],
            &[vec![0.6, 0.4], vec![0.25, 0.75]],
            &[0.5, 0.5],
            3,
        ),
    );

    // Acyclic five-bus star.
    let st2 = vec![
        (vec![1.2, -0.5, 0.3, -0.7, 0.6], 0.5),
        (vec![-0.9, 0.4, -0.6, 0.8, -0.3], 0.5),
    ];
    add("st_iid2_n2", five_node_star(), iid_tree(&st2, 2));
    add("st_iid2_n3", five_node_star(), iid_tree(&st2, 3));
    add(
        "st_det_n5",
        five_node_star(),
        chain_tree(&[
            vec![1.2, -0.5, 0.3, -0.7, 0.6],
            vec![-0.9, 0.4, -0.6, 0.8, -0.3],
            vec![0.7, 0.6, -0.4, 0.5, 0.8],
            vec![-1.1, -0.3, 0.5, -0.6, 0.4],
            vec![0.9, 0.2, 0.6, 0.7, -0.5],
        ]),
    );

    instances
}
