//! Equilibria of a single 2x2 stage game.

use super::{Equilibrium, EquilibriumKind, GameError, PayoffMatrix};

/// Relative tolerance under which two payoffs are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

const S: usize = 0;
const F: usize = 1;

/// Payoff differences that drive best responses.
///
/// `dv[j]` is the vehicle's gain from SLOW over FAST when the pedestrian plays
/// `j`; `dp[i]` is the pedestrian's gain from SLOW over FAST against vehicle
/// action `i`.
struct Diffs {
    dv: [f64; 2],
    dp: [f64; 2],
    tol: f64,
}

impl Diffs {
    fn new(m: &PayoffMatrix) -> Self {
        let e = &m.entries;
        let scale = e
            .iter()
            .flatten()
            .flat_map(|u| [u.vehicle.abs(), u.pedestrian.abs()])
            .fold(1.0_f64, f64::max);
        Self {
            dv: [
                e[S][S].vehicle - e[F][S].vehicle,
                e[S][F].vehicle - e[F][F].vehicle,
            ],
            dp: [
                e[S][S].pedestrian - e[S][F].pedestrian,
                e[F][S].pedestrian - e[F][F].pedestrian,
            ],
            tol: TIE_TOLERANCE * scale,
        }
    }

    fn tied(&self, d: f64) -> bool {
        d.abs() <= self.tol
    }

    /// Whether one player's tie against opponent action `j` combines with the
    /// opponent's preference for `j` over an interval of mixes.
    ///
    /// `own` are the tied player's diffs; `opp` the opponent's diffs, and the
    /// opponent prefers `j` against the tied player's mix `p` by
    /// `p * opp[S] + (1 - p) * opp[F]` (sign-adjusted for `j`).
    fn continuum(&self, own: [f64; 2], opp: [f64; 2]) -> bool {
        (0..2).any(|j| {
            if !self.tied(own[j]) {
                return false;
            }
            let sign = if j == S { 1.0 } else { -1.0 };
            let (g0, g1) = (sign * opp[F], sign * opp[S]);
            g0.max(g1) > self.tol || (self.tied(g0) && self.tied(g1))
        })
    }

    /// Vehicle pure best response check against pedestrian action `j`.
    fn vehicle_weak_br(&self, i: usize, j: usize) -> bool {
        if i == S {
            self.dv[j] >= -self.tol
        } else {
            self.dv[j] <= self.tol
        }
    }

    fn pedestrian_weak_br(&self, i: usize, j: usize) -> bool {
        if j == S {
            self.dp[i] >= -self.tol
        } else {
            self.dp[i] <= self.tol
        }
    }
}

/// Root of `t * d[S] + (1 - t) * d[F] = 0`.
fn indifference_root(d: [f64; 2], tol: f64) -> Option<f64> {
    let denom = d[S] - d[F];
    if denom.abs() <= tol {
        None
    } else {
        Some(-d[F] / denom)
    }
}

fn make(m: &PayoffMatrix, p: f64, q: f64) -> Equilibrium {
    let kind = if (p == 0.0 || p == 1.0) && (q == 0.0 || q == 1.0) {
        EquilibriumKind::Pure
    } else {
        EquilibriumKind::Mixed
    };
    Equilibrium {
        p_vehicle_slow: p,
        p_pedestrian_slow: q,
        value: m.expected(p, q),
        kind,
    }
}

fn pure_prob(i: usize) -> f64 {
    if i == S {
        1.0
    } else {
        0.0
    }
}

/// Solve a 2x2 bimatrix game by support enumeration.
///
/// A unique equilibrium is returned as is; the chicken pattern of two pure
/// equilibria plus one fully mixed one selects the mixed equilibrium. Any
/// matrix with a continuum of equilibria, or with another multiplicity
/// pattern, is reported as degenerate.
pub fn solve_stage_game(m: &PayoffMatrix) -> Result<Equilibrium, GameError> {
    if !m.is_finite() {
        return Err(GameError::NonFinite);
    }
    let d = Diffs::new(m);
    let vehicle_continuum = d.continuum(d.dv, d.dp);
    let pedestrian_continuum = d.continuum(d.dp, d.dv);
    if vehicle_continuum || pedestrian_continuum {
        return Err(GameError::Degenerate {
            vehicle_indifferent: vehicle_continuum,
            pedestrian_indifferent: pedestrian_continuum,
        });
    }

    let mut pure = Vec::with_capacity(4);
    for i in [S, F] {
        for j in [S, F] {
            if d.vehicle_weak_br(i, j) && d.pedestrian_weak_br(i, j) {
                pure.push((i, j));
            }
        }
    }

    // The vehicle's indifference fixes the pedestrian's mix and vice versa.
    let interior = |r: f64| r > d.tol && r < 1.0 - d.tol;
    let mixed = match (
        indifference_root(d.dp, d.tol),
        indifference_root(d.dv, d.tol),
    ) {
        (Some(p), Some(q)) if interior(p) && interior(q) => Some((p, q)),
        _ => None,
    };

    match (pure.as_slice(), mixed) {
        (&[(i, j)], None) => Ok(make(m, pure_prob(i), pure_prob(j))),
        ([], Some((p, q))) | ([_, _], Some((p, q))) => Ok(make(m, p, q)),
        _ => Err(GameError::Degenerate {
            vehicle_indifferent: d.dv.iter().any(|&x| d.tied(x)),
            pedestrian_indifferent: d.dp.iter().any(|&x| d.tied(x)),
        }),
    }
}

/// `a + b * eps` for an infinitesimal `eps > 0`, used to test membership of
/// a perturbed root in the open unit interval.
fn lex_in_unit_interval(a: f64, b: f64, tol: f64) -> bool {
    let above_zero = a > tol || (a.abs() <= tol && b > 0.0);
    let below_one = a < 1.0 - tol || ((a - 1.0).abs() <= tol && b < 0.0);
    above_zero && below_one
}

fn snap(x: f64, tol: f64) -> f64 {
    if x.abs() <= tol {
        0.0
    } else if (x - 1.0).abs() <= tol {
        1.0
    } else {
        x
    }
}

/// Equilibrium of the game in which FAST carries an extra infinitesimal
/// payoff for both players, taken in the limit.
///
/// Equal to [`solve_stage_game`] on generic matrices. On degenerate ones it
/// resolves every tie toward FAST, so an agent whose choice cannot change its
/// own payoff keeps moving at full speed.
pub fn select_prefer_fast(m: &PayoffMatrix) -> Result<Equilibrium, GameError> {
    if !m.is_finite() {
        return Err(GameError::NonFinite);
    }
    let d = Diffs::new(m);

    // With the bonus, SLOW is a best response only when strictly better.
    let mut pure = Vec::with_capacity(2);
    for i in [S, F] {
        for j in [S, F] {
            let v_ok = if i == S {
                d.dv[j] > d.tol
            } else {
                d.dv[j] <= d.tol
            };
            let p_ok = if j == S {
                d.dp[i] > d.tol
            } else {
                d.dp[i] <= d.tol
            };
            if v_ok && p_ok {
                pure.push((i, j));
            }
        }
    }

    // Perturbed indifference: t * d[S] + (1 - t) * d[F] = eps.
    let perturbed_root = |diff: [f64; 2]| {
        let denom = diff[S] - diff[F];
        if denom.abs() <= d.tol {
            None
        } else {
            let a = -diff[F] / denom;
            let b = 1.0 / denom;
            lex_in_unit_interval(a, b, d.tol).then_some(snap(a, d.tol))
        }
    };
    let mixed = match (perturbed_root(d.dp), perturbed_root(d.dv)) {
        (Some(p), Some(q)) => Some((p, q)),
        _ => None,
    };

    match (pure.as_slice(), mixed) {
        (&[(i, j)], None) => Ok(make(m, pure_prob(i), pure_prob(j))),
        ([], Some((p, q))) | ([_, _], Some((p, q))) => Ok(make(m, p, q)),
        _ => Err(GameError::Degenerate {
            vehicle_indifferent: d.dv.iter().any(|&x| d.tied(x)),
            pedestrian_indifferent: d.dp.iter().any(|&x| d.tied(x)),
        }),
    }
}

/// Largest gain either player could obtain by a pure unilateral deviation.
/// Zero (up to rounding) for an equilibrium.
pub fn deviation_regret(m: &PayoffMatrix, eq: &Equilibrium) -> f64 {
    let (p, q) = (eq.p_vehicle_slow, eq.p_pedestrian_slow);
    let value = m.expected(p, q);
    let vehicle_best = m.expected(1.0, q).vehicle.max(m.expected(0.0, q).vehicle);
    let pedestrian_best = m
        .expected(p, 1.0)
        .pedestrian
        .max(m.expected(p, 0.0).pedestrian);
    (vehicle_best - value.vehicle).max(pedestrian_best - value.pedestrian)
}
