//! Recover the crash cost from decisions drawn from a known model, then run
//! the same fit on filtered self-play logs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sequential_chicken::fit::{
    filter_records, fit_summary, fit_ucrash, synthetic_decisions, FilterOptions, DEFAULT_GRID,
};
use sequential_chicken::game::GameParams;
use sequential_chicken::sim::{run_self_play, PedestrianPolicy, SessionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = GameParams::new(3.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points = synthetic_decisions(&truth, 2, 15, 600, &mut rng)?;
    let fit = fit_ucrash(&points, &DEFAULT_GRID, &truth)?;
    println!("synthetic data, true C=3");
    for c in &fit.candidates {
        println!(
            "  C={:<9} log-likelihood {:>10.3}",
            c.crash_cost,
            c.log_likelihood.unwrap_or(f64::NAN)
        );
    }
    println!("  best C={}", fit.best_crash_cost);

    let config = SessionConfig::default();
    let mut records = Vec::new();
    for s in 0..10 {
        let mut policy = PedestrianPolicy::Optimal;
        records.extend(run_self_play(&config, &format!("s{s}"), &mut policy, &mut rng)?.records);
    }
    let filtered = filter_records(&records, &config.geometry, &FilterOptions::default());
    let fit = fit_ucrash(&filtered.points, &DEFAULT_GRID, &config.game_params()?)?;
    let summary = fit_summary(&fit, &filtered);
    println!("\nself-play logs, 10 sessions");
    println!("  funnel {:?}", summary.funnel);
    println!(
        "  best C={} from {} decisions",
        summary.best_crash_cost, summary.points_used
    );
    println!(
        "  pedestrian share {:.3}",
        summary.win_share.pedestrian_share
    );
    Ok(())
}
