//! Plain-text renderings shared by the command line tool and the examples.

use std::fmt::Write;

use crate::game::{
    cumulative_no_yield, yield_curve_model, GameError, GameParams, GameState, Solver,
};

/// Near edge of pedestrian box `k` in meters, rounded to hide float noise.
pub fn bin_distance(k: i32, box_size: f64) -> f64 {
    (f64::from(k) * box_size * 1e9).round() / 1e9
}

/// Game value at `(y, x)` followed by the equilibrium SLOW probabilities of
/// every state `2..=y` by `2..=x`, as `vehicle/pedestrian` pairs.
pub fn policy_report(solver: &Solver, y: i32, x: i32) -> Result<String, GameError> {
    let p = solver.params();
    let start = GameState::new(y, x);
    let value = solver.value(start)?;
    let eq = solver.policy(start)?;
    let mut out = String::new();
    writeln!(
        out,
        "crash_cost={} turn_cost={} state=({y},{x})",
        p.crash_cost, p.turn_cost
    )
    .unwrap();
    writeln!(
        out,
        "value vehicle={:.12} pedestrian={:.12}",
        value.vehicle, value.pedestrian
    )
    .unwrap();
    writeln!(
        out,
        "policy P(SLOW) vehicle={:.12} pedestrian={:.12} ({:?})",
        eq.p_vehicle_slow, eq.p_pedestrian_slow, eq.kind
    )
    .unwrap();
    if y < 2 || x < 2 {
        return Ok(out);
    }
    writeln!(out, "\nP(SLOW) vehicle/pedestrian; rows y, columns x").unwrap();
    write!(out, "{:>4}", "y\\x").unwrap();
    for xi in 2..=x {
        write!(out, " {xi:>11}").unwrap();
    }
    out.push('\n');
    for yi in 2..=y {
        write!(out, "{yi:>4}").unwrap();
        for xi in 2..=x {
            let e = solver.policy(GameState::new(yi, xi))?;
            write!(
                out,
                " {:>5.3}/{:<5.3}",
                e.p_vehicle_slow, e.p_pedestrian_slow
            )
            .unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Model yield and no-yield curves for each crash cost, comma-separated.
///
/// Columns: `k, distance_m`, one `C=<c>` yield column per crash cost, then
/// one `S(C=<c>)` survival column per crash cost. Rows run from `k_max`
/// down to 2.
pub fn model_curves_csv(
    grid: &[f64],
    params: &GameParams,
    k_max: i32,
    ped_box: f64,
) -> Result<String, GameError> {
    let mut curves = Vec::with_capacity(grid.len());
    for &c in grid {
        let p = GameParams {
            crash_cost: c,
            ..*params
        };
        p.validate()?;
        let mut curve = yield_curve_model(&p, k_max)?;
        curve.reverse();
        let survival = cumulative_no_yield(&curve)?;
        curves.push((curve, survival));
    }
    let mut out = String::from("k,distance_m");
    for c in grid {
        write!(out, ",C={c}").unwrap();
    }
    for c in grid {
        write!(out, ",S(C={c})").unwrap();
    }
    out.push('\n');
    let rows = curves.first().map_or(0, |(c, _)| c.len());
    for i in 0..rows {
        let k = curves[0].0[i].k;
        write!(out, "{k},{}", bin_distance(k, ped_box)).unwrap();
        for (curve, _) in &curves {
            write!(out, ",{}", curve[i].p_yield).unwrap();
        }
        for (_, survival) in &curves {
            write!(out, ",{}", survival[i].survival).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}
