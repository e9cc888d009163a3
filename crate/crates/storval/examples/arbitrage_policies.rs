//! The storage value as arbitrage revenue: a causal threshold trader earns
//! capacity times the value, a clairvoyant trader earns capacity times the
//! upper bound, and the two coincide exactly when prices are two-valued.
//!
//! Run with: cargo run --example arbitrage_policies

use storval::config::{Tolerances, DEFAULT_NODE_BUDGET};
use storval::dp::{perfect_foresight_revenue, simulate_threshold_arbitrage};
use storval::network::{FlowOperators, Line, Network};
use storval::scenario::ScenarioTree;
use storval::valuation::{build_price_lattice, lmv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Heterogeneous costs: bus 1 prices take three values (10, 6, 4), so
    // foresight beats any causal policy there.
    let net = Network::new(
        2,
        vec![Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            capacity: 0.6,
        }],
        vec![0.0; 2],
        vec![10.0, 6.0],
        vec![4.0, 2.0],
    )?;
    let ops = FlowOperators::build(&net)?;
    let tree = ScenarioTree::build_iid(
        &[
            (vec![1.5, -0.3], 0.4),
            (vec![-1.2, 0.4], 0.3),
            (vec![0.3, 0.2], 0.3),
        ],
        3,
        DEFAULT_NODE_BUDGET,
    )?;
    let lattice = build_price_lattice(&net, &ops, &tree, &Tolerances::default())?;
    let report = lmv(&lattice, &tree);

    let capacity = 2.0;
    println!("device capacity {capacity}");
    for bus in 0..2 {
        let causal = simulate_threshold_arbitrage(&lattice, &tree, bus, capacity, None)?;
        let foresight = perfect_foresight_revenue(&lattice, &tree, bus, capacity)?;
        println!("bus {}:", bus + 1);
        println!(
            "  threshold policy revenue {causal:.6} = capacity * value {:.6}",
            capacity * report.lmv[bus]
        );
        println!(
            "  perfect foresight revenue {foresight:.6} = capacity * bound {:.6}",
            capacity * report.upper_bound[bus]
        );
        println!("  foresight premium {:.6}", foresight - causal);

        // A lossy device trades against a discounted threshold and earns less.
        let lossy = simulate_threshold_arbitrage(&lattice, &tree, bus, capacity, Some(0.85))?;
        println!("  threshold revenue with 15% dissipation {lossy:.6}");
    }
    Ok(())
}
