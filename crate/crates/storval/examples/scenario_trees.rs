//! Build scenario trees for i.i.d. and Markov demand, query conditional
//! expectations, and round-trip the text format.
//!
//! Run with: cargo run --example scenario_trees

use std::collections::BTreeMap;

use storval::config::DEFAULT_NODE_BUDGET;
use storval::scenario::{parse_tree, write_tree, ScenarioTree};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iid = ScenarioTree::build_iid(
        &[(vec![1.0, -0.5], 0.3), (vec![-0.7, 0.4], 0.7)],
        3,
        DEFAULT_NODE_BUDGET,
    )?;
    println!(
        "i.i.d. tree: {} nodes, {} roots, horizon {}",
        iid.node_count(),
        iid.roots().len(),
        iid.horizon()
    );

    let markov = ScenarioTree::build_markov(
        &[vec![1.0, -0.5], vec![-0.7, 0.4]],
        &[vec![0.9, 0.1], vec![0.2, 0.8]],
        &[0.5, 0.5],
        3,
        DEFAULT_NODE_BUDGET,
    )?;
    println!(
        "markov tree: {} nodes (sticky chain branches less in mass)",
        markov.node_count()
    );

    // Conditional expectation of an arbitrary score over children.
    let root = markov.roots()[0];
    let scores: BTreeMap<usize, f64> = markov
        .children(root)
        .iter()
        .map(|&child| (child, markov.node(child).xi[0]))
        .collect();
    println!(
        "E[next xi_1 | first state] = {:.3}",
        markov.conditional_expectation(root, &scores)?
    );
    println!(
        "path probability of node 5: {:.4}",
        markov.path_probability(5)?
    );

    // The text format round-trips bit for bit.
    let text = write_tree(&markov);
    let reparsed = parse_tree(&text, DEFAULT_NODE_BUDGET)?;
    assert_eq!(markov, reparsed);
    println!("serialized form ({} bytes) begins:", text.len());
    for line in text.lines().take(5) {
        println!("  {line}");
    }
    Ok(())
}
