//! A full 20-crossing session against a scripted pedestrian, with the vehicle
//! start adjusted after each crossing.
//!
//! Usage: `cargo run --example crossing_simulation -- [seed] [out.jsonl]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sequential_chicken::records::write_records;
use sequential_chicken::sim::{interesting_trend, run_self_play, PedestrianPolicy, SessionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;
    let out = args.next();

    let config = SessionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PedestrianPolicy::NoisyOptimal { epsilon: 0.1 };
    let run = run_self_play(&config, "demo", &mut policy, &mut rng)?;

    println!(
        "{:>3} {:>6} {:>6} {:>16} {:>5} {:>11}",
        "id", "ped_m", "car_m", "outcome", "steps", "interesting"
    );
    for c in &run.crossings {
        println!(
            "{:>3} {:>6.2} {:>6.2} {:>16} {:>5} {:>11}",
            c.crossing_id,
            c.ped_start,
            c.car_start,
            format!("{:?}", c.outcome),
            c.steps,
            c.interesting_steps
        );
    }
    let series: Vec<f64> = run
        .crossings
        .iter()
        .map(|c| c.interesting_fraction())
        .collect();
    let trend = interesting_trend(&series);
    println!(
        "pedestrian won {}/{}; interesting fraction {:.3}, trend {:+.4}/crossing",
        run.pedestrian_wins(),
        run.crossings.len(),
        run.interesting_fraction(),
        trend.slope
    );
    if let Some(path) = out {
        write_records(std::fs::File::create(&path)?, &run.records)?;
        println!("wrote {} records to {path}", run.records.len());
    }
    Ok(())
}
