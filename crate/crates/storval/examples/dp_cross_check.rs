//! Verify the price-based storage value against the stochastic
//! dynamic-programming oracle: installing an infinitesimal device of
//! capacity eps at a bus must reduce the optimal expected dispatch cost by
//! exactly eps times the bus value.
//!
//! Run with: cargo run --example dp_cross_check

use storval::config::{Tolerances, DEFAULT_NODE_BUDGET};
use storval::dispatch::EdCache;
use storval::dp::{epsilon_bar, solve_dp_single_device, verify_value_decomposition};
use storval::network::{FlowOperators, Line, Network};
use storval::scenario::ScenarioTree;
use storval::valuation::{build_price_lattice, lmv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = Network::new(
        2,
        vec![Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            capacity: 0.6,
        }],
        vec![0.0; 2],
        vec![10.0, 4.0],
        vec![6.0, 2.0],
    )?;
    let ops = FlowOperators::build(&net)?;
    let tree = ScenarioTree::build_markov(
        &[vec![1.5, -0.3], vec![-1.2, 0.4]],
        &[vec![0.8, 0.2], vec![0.3, 0.7]],
        &[0.5, 0.5],
        4,
        DEFAULT_NODE_BUDGET,
    )?;
    let tol = Tolerances::default();

    let lattice = build_price_lattice(&net, &ops, &tree, &tol)?;
    let report = lmv(&lattice, &tree);
    let radius = epsilon_bar(&net, &ops, &tree, &tol)?;
    println!("certified perturbation radius: {radius:.4}");

    let mut cache = EdCache::new();
    for bus in 0..2 {
        println!(
            "bus {} (price-based value {:.6}):",
            bus + 1,
            report.lmv[bus]
        );
        for fraction in [0.1, 0.5, 0.9] {
            let eps = fraction * radius;
            let dp = solve_dp_single_device(&net, &ops, &tree, bus, eps, &mut cache)?;
            let saved = dp.total_zero_value - dp.total_value;
            println!(
                "  eps = {eps:.4}: cost saved {saved:.10}, eps * value {:.10}, gap {:.2e}",
                eps * report.lmv[bus],
                (saved - eps * report.lmv[bus]).abs()
            );
        }
        let decomposition =
            verify_value_decomposition(&net, &ops, &tree, &lattice, bus, 0.5 * radius, &mut cache)?;
        println!(
            "  per-node decomposition residual {:.2e}, policy mismatches {}",
            decomposition.max_value_residual,
            decomposition.policy_mismatches.len()
        );
    }
    println!(
        "dispatch solves performed: {} (memoized by demand)",
        cache.len()
    );
    Ok(())
}
