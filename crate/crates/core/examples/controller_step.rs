//! One vehicle controller update from a raw pedestrian track: fit, intersect,
//! quantize, solve and sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sequential_chicken::controller::{controller_step, ScenarioGeometry, Snapshot, TrackPoint};
use sequential_chicken::sim::SessionConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geom = ScenarioGeometry::default();
    let solver = SessionConfig::default().solver()?;

    // Pedestrian walking toward the crossing point at full speed.
    let track: Vec<TrackPoint> = (0..10)
        .map(|i| {
            let t = f64::from(i) * 0.1;
            let p = geom.pedestrian_position(2.0 - geom.pedestrian_fast_speed * t);
            TrackPoint::new(t, p.x, p.y)
        })
        .collect();
    let snapshot = Snapshot {
        t: 0.9,
        tracks: std::slice::from_ref(&track),
        vehicle_arc: geom.vehicle_arc(1.2),
        commanded_speed: geom.vehicle_fast_speed,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = controller_step(&snapshot, &geom, &solver, &mut rng);
    println!("{}", serde_json::to_string_pretty(&out.info)?);
    println!("speed command {:.3} m/s", out.speed_command);
    Ok(())
}
