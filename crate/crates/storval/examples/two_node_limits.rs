//! The two-bus limiting formulas: with no transfer capacity each bus is
//! valued by the zero-upcrossings of its own net demand; with unlimited
//! capacity both buses are valued by the upcrossings of the demand sum.
//! The full pipeline at extreme line capacities reproduces both.
//!
//! Run with: cargo run --example two_node_limits

use storval::config::{Tolerances, DEFAULT_NODE_BUDGET};
use storval::network::{FlowOperators, Line, Network};
use storval::scenario::ScenarioTree;
use storval::valuation::{build_price_lattice, lmv, two_node_limits};

fn two_node(capacity: f64) -> Network {
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

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Bus 1 swings sign while bus 2 stays in surplus, so with no line the
    // buses are valued very differently; the demand sum swings sign too,
    // so an unlimited line drags both buses to the aggregate value.
    let tree = ScenarioTree::build_iid(
        &[(vec![1.2, -0.4], 0.5), (vec![-0.3, -0.8], 0.5)],
        3,
        DEFAULT_NODE_BUDGET,
    )?;
    let limits = two_node_limits(&two_node(1.0), &tree)?;
    println!("closed-form: f -> 0   {:?}", limits.lmv_f_zero);
    println!("closed-form: f -> inf {:?}", limits.lmv_f_inf);

    let tol = Tolerances::default();
    for (label, capacity, expected) in [
        ("f = 1e-6", 1e-6, &limits.lmv_f_zero),
        ("f = 1e6 ", 1e6, &limits.lmv_f_inf),
    ] {
        let net = two_node(capacity);
        let ops = FlowOperators::build(&net)?;
        let lattice = build_price_lattice(&net, &ops, &tree, &tol)?;
        let report = lmv(&lattice, &tree);
        let gap = (0..2)
            .map(|bus| (report.lmv[bus] - expected[bus]).abs())
            .fold(0.0f64, f64::max);
        println!(
            "pipeline at {label}: {:?} (gap to formula {gap:.2e})",
            report.lmv
        );
    }
    Ok(())
}
