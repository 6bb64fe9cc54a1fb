//! The one-shot game of chicken: swerving costs a little, a collision costs
//! a lot, so both players almost always swerve.

use sequential_chicken::game::{deviation_regret, solve_stage_game, Action, PayoffMatrix};

fn main() {
    // Rows: vehicle SLOW, FAST. Columns: pedestrian SLOW, FAST.
    let m =
        PayoffMatrix::from_pairs([[(0.0, 0.0), (-1.0, 1.0)], [(1.0, -1.0), (-1000.0, -1000.0)]]);
    let eq = solve_stage_game(&m).expect("mixed equilibrium exists");
    println!("equilibrium kind: {:?}", eq.kind);
    println!(
        "P(FAST) vehicle={:.6} pedestrian={:.6}",
        eq.p_vehicle_fast(),
        eq.p_pedestrian_fast()
    );
    println!(
        "value vehicle={:.6} pedestrian={:.6}",
        eq.value.vehicle, eq.value.pedestrian
    );
    println!(
        "largest gain from deviating: {:.2e}",
        deviation_regret(&m, &eq)
    );
    let crash = m.get(Action::Fast, Action::Fast);
    println!("a crash pays {} to each", crash.vehicle);
}
