//! Play many equilibrium episodes and compare realized utilities to the
//! solved game value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sequential_chicken::game::{GameParams, GameState, Solver};
use sequential_chicken::sim::monte_carlo_stats;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = GameState::new(10, 10);
    let solver = Solver::new(GameParams::new(10.0)?)?;
    let value = solver.value(start)?;
    let stats = monte_carlo_stats(&solver, start, 100_000, &mut ChaCha8Rng::seed_from_u64(7))?;

    println!("episodes          {}", stats.n);
    println!(
        "game value        vehicle={:.4} pedestrian={:.4}",
        value.vehicle, value.pedestrian
    );
    println!(
        "realized mean     vehicle={:.4}±{:.4} pedestrian={:.4}±{:.4}",
        stats.mean_utilities.vehicle,
        stats.utilities_se.vehicle,
        stats.mean_utilities.pedestrian,
        stats.utilities_se.pedestrian
    );
    println!(
        "crash rate        {:.4}±{:.4}",
        stats.crash_rate, stats.crash_rate_se
    );
    println!("pedestrian wins   {:.4}", stats.pedestrian_win_rate);
    println!("mean turns        {:.2}", stats.mean_turns);
    if let Some(rate) = stats.symmetry_break_pass_rate() {
        println!(
            "after a one-sided yield, play ran FAST/FAST in {:.1}% of {} episodes",
            100.0 * rate,
            stats.symmetry_breaks
        );
    }
    if let Some(rate) = stats.symmetry_break_deterministic_rate() {
        println!(
            "and was pure with the non-yielder passing first in {:.1}%",
            100.0 * rate
        );
    }
    Ok(())
}
