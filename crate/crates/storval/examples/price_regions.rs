//! Map the piecewise-constant price structure of a two-bus network by
//! sampling the demand plane, and render each bus's price regions as ASCII.
//!
//! Run with: cargo run --example price_regions

use storval::dispatch::price_fn;
use storval::network::{FlowOperators, Line, Network};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = Network::new(
        2,
        vec![Line {
            from: 0,
            to: 1,
            susceptance: 1.0,
            capacity: 1.0,
        }],
        vec![0.0; 2],
        vec![10.0; 2],
        vec![2.0; 2],
    )?;
    let ops = FlowOperators::build(&net)?;

    let steps = 25;
    let span = 3.0;
    for bus in 0..2 {
        println!("price at bus {} over xi in [-{span}, {span}]^2:", bus + 1);
        println!("  ('#' = generation cost 10, '.' = consumption utility 2)");
        // Rows print from high xi2 to low so the plot is oriented naturally.
        for row in (0..steps).rev() {
            let xi2 = -span + 2.0 * span * row as f64 / (steps - 1) as f64;
            let mut line = String::from("  ");
            for col in 0..steps {
                let xi1 = -span + 2.0 * span * col as f64 / (steps - 1) as f64;
                let prices = price_fn(&net, &ops, &[xi1, xi2])?;
                line.push(if prices[bus] > 6.0 { '#' } else { '.' });
            }
            println!("{line}");
        }
        println!();
    }
    println!("the region boundaries move with the line capacity; rerun with");
    println!("a different capacity in the Line to see the regions shear.");
    Ok(())
}
