//! Yield probability at symmetric distances for a family of crash costs, and
//! the chance of reaching each distance without having yielded.

use sequential_chicken::fit::DEFAULT_GRID;
use sequential_chicken::game::{cumulative_no_yield, yield_curve_model, GameParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k_max = 15;
    print!("{:>4}", "k");
    for c in DEFAULT_GRID {
        print!(" {:>9}", format!("C={c}"));
    }
    println!();
    let curves: Vec<_> = DEFAULT_GRID
        .iter()
        .map(|&c| yield_curve_model(&GameParams::new(c)?, k_max))
        .collect::<Result<_, _>>()?;
    for i in (0..curves[0].len()).rev() {
        print!("{:>4}", curves[0][i].k);
        for curve in &curves {
            print!(" {:>9.4}", curve[i].p_yield);
        }
        println!();
    }

    let mut desc = curves[1].clone();
    desc.reverse();
    println!("\nno-yield survival at C=3");
    for s in cumulative_no_yield(&desc)? {
        println!("{:>4} {:.4}", s.k, s.survival);
    }
    Ok(())
}
