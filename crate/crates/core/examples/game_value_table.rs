//! Backward induction over the sequential game: value and equilibrium policy
//! for every pair of distances up to a bound.
//!
//! Usage: `cargo run --example game_value_table -- [crash_cost] [size]`

use sequential_chicken::game::{GameParams, GameState, Solver};
use sequential_chicken::output::policy_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let c: f64 = args.next().map_or(Ok(3.0), |s| s.parse())?;
    let n: i32 = args.next().map_or(Ok(8), |s| s.parse())?;

    let solver = Solver::new(GameParams::new(c)?.with_bounds(n, n))?;
    print!("{}", policy_report(&solver, n, n)?);

    println!("\nvehicle value by state");
    for y in (2..=n).rev() {
        let row: Vec<String> = (2..=n)
            .map(|x| {
                format!(
                    "{:7.3}",
                    solver.value(GameState::new(y, x)).unwrap().vehicle
                )
            })
            .collect();
        println!("{y:>3} {}", row.join(" "));
    }
    println!("{} states memoized", solver.memo_len());
    Ok(())
}
