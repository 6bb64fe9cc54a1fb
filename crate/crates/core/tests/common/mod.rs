//! Reference implementations written without the library's solver code.
//!
//! Stage games are solved by listing every equilibrium over every support.
//! Sequential values come from a plain recursion over the game tree; the FAST
//! preference used on ties is modelled with numbers of the form `a + b*eps`.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashMap;

const TOL: f64 = 1e-9;

/// `a + b*eps` for an infinitesimal `eps > 0`, ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lex {
    pub a: f64,
    pub b: f64,
}

impl Lex {
    pub fn real(a: f64) -> Self {
        Self { a, b: 0.0 }
    }

    fn sub(self, o: Lex) -> Lex {
        Lex {
            a: self.a - o.a,
            b: self.b - o.b,
        }
    }

    fn cmp_tol(self, o: Lex) -> Ordering {
        let da = self.a - o.a;
        let scale = self.a.abs().max(o.a.abs()).max(1.0);
        if da.abs() > TOL * scale {
            return da.partial_cmp(&0.0).unwrap();
        }
        let db = self.b - o.b;
        if db.abs() > TOL {
            db.partial_cmp(&0.0).unwrap()
        } else {
            Ordering::Equal
        }
    }

    fn is_zero(self) -> bool {
        self.cmp_tol(Lex::real(0.0)) == Ordering::Equal
    }
}

/// An equilibrium as (P(row 0), P(col 0)) plus expected payoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEq {
    pub p_row0: f64,
    pub p_col0: f64,
    pub row_value: f64,
    pub col_value: f64,
    pub mixed: bool,
}

fn expected(m: &[[f64; 2]; 2], p: f64, q: f64) -> f64 {
    p * q * m[0][0]
        + p * (1.0 - q) * m[0][1]
        + (1.0 - p) * q * m[1][0]
        + (1.0 - p) * (1.0 - q) * m[1][1]
}

/// Every Nash equilibrium of a 2x2 game with lexicographic payoffs, with
/// strategies reported at their real parts. Row player payoffs `a`, column
/// player payoffs `b`, both indexed `[row][col]`.
pub fn all_equilibria(a: &[[Lex; 2]; 2], b: &[[Lex; 2]; 2]) -> Vec<(f64, f64, bool)> {
    let mut out = Vec::new();
    // Pure supports.
    for i in 0..2 {
        for j in 0..2 {
            let row_ok = a[i][j].cmp_tol(a[1 - i][j]) != Ordering::Less;
            let col_ok = b[i][j].cmp_tol(b[i][1 - j]) != Ordering::Less;
            if row_ok && col_ok {
                out.push((
                    if i == 0 { 1.0 } else { 0.0 },
                    if j == 0 { 1.0 } else { 0.0 },
                    false,
                ));
            }
        }
    }
    // Full support: q makes the row player indifferent, p the column player.
    //   q*a00 + (1-q)*a01 = q*a10 + (1-q)*a11
    let q_num = a[1][1].sub(a[0][1]);
    let q_den = a[0][0].sub(a[0][1]).sub(a[1][0]).add(a[1][1]);
    let p_num = b[1][1].sub(b[1][0]);
    let p_den = b[0][0].sub(b[1][0]).sub(b[0][1]).add(b[1][1]);
    if let (Some(q), Some(p)) = (lex_ratio(q_num, q_den), lex_ratio(p_num, p_den)) {
        if strictly_inside(p) && strictly_inside(q) {
            out.push((p.a, q.a, true));
        }
    }
    out
}

impl Lex {
    fn add(self, o: Lex) -> Lex {
        Lex {
            a: self.a + o.a,
            b: self.b + o.b,
        }
    }
}

fn lex_ratio(num: Lex, den: Lex) -> Option<Lex> {
    if den.a.abs() > TOL {
        Some(Lex {
            a: num.a / den.a,
            b: (num.b * den.a - num.a * den.b) / (den.a * den.a),
        })
    } else if den.is_zero() {
        None
    } else {
        // Pure-eps denominator: only a pure-eps numerator gives a finite ratio.
        (num.a.abs() <= TOL).then(|| Lex::real(num.b / den.b))
    }
}

fn strictly_inside(x: Lex) -> bool {
    x.cmp_tol(Lex::real(0.0)) == Ordering::Greater && x.cmp_tol(Lex::real(1.0)) == Ordering::Less
}

/// The equilibrium a symmetric-chicken selection rule picks: the unique one,
/// or the mixed one when there are two pure equilibria besides it.
pub fn select(eqs: &[(f64, f64, bool)]) -> Option<(f64, f64)> {
    match eqs {
        [(p, q, _)] => Some((*p, *q)),
        _ => {
            let pure = eqs.iter().filter(|e| !e.2).count();
            let mixed: Vec<_> = eqs.iter().filter(|e| e.2).collect();
            (pure == 2 && mixed.len() == 1).then(|| (mixed[0].0, mixed[0].1))
        }
    }
}

/// Solve a real-valued 2x2 game with the selection rule above.
pub fn oracle_stage(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> Option<OracleEq> {
    let lift = |m: [[f64; 2]; 2]| m.map(|r| r.map(Lex::real));
    let eqs = all_equilibria(&lift(a), &lift(b));
    let (p, q) = select(&eqs)?;
    Some(OracleEq {
        p_row0: p,
        p_col0: q,
        row_value: expected(&a, p, q),
        col_value: expected(&b, p, q),
        mixed: eqs.len() > 1 || eqs[0].2,
    })
}

/// Rules of the sequential game, restated.
#[derive(Debug, Clone, Copy)]
pub struct Rules {
    pub crash: f64,
    pub turn: f64,
}

fn crashed(y: i32, x: i32) -> bool {
    (y == 0 || y == 1) && (x == 0 || x == 1)
}

fn passed(p: i32) -> bool {
    p < 0
}

/// Turns needed to get past the collision point at full speed.
fn turns_to_clear(pos: i32) -> f64 {
    let mut pos = pos;
    let mut n = 0.0;
    while pos >= 0 {
        pos -= 2;
        n += 1.0;
    }
    n
}

fn terminal(r: Rules, y: i32, x: i32) -> Option<(f64, f64)> {
    if crashed(y, x) {
        return Some((-r.crash, -r.crash));
    }
    match (passed(y), passed(x)) {
        (true, true) => Some((0.0, 0.0)),
        (true, false) => Some((0.0, -r.turn * turns_to_clear(x))),
        (false, true) => Some((-r.turn * turns_to_clear(y), 0.0)),
        (false, false) => None,
    }
}

/// Stage solution with an infinitesimal bonus for FAST (index 1).
fn fast_biased_stage(v: [[f64; 2]; 2], p: [[f64; 2]; 2]) -> (f64, f64, f64, f64) {
    let eps = Lex { a: 0.0, b: 1.0 };
    let mut a = v.map(|r| r.map(Lex::real));
    let mut b = p.map(|r| r.map(Lex::real));
    for x in a[1].iter_mut() {
        *x = x.add(eps);
    }
    for row in b.iter_mut() {
        row[1] = row[1].add(eps);
    }
    let eqs = all_equilibria(&a, &b);
    let (ps, qs) = select(&eqs)
        .unwrap_or_else(|| panic!("no selectable equilibrium for {v:?} / {p:?}: {eqs:?}"));
    (ps, qs, expected(&v, ps, qs), expected(&p, ps, qs))
}

fn stage_payoffs(
    r: Rules,
    y: i32,
    x: i32,
    value: &mut dyn FnMut(i32, i32) -> (f64, f64),
) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let mut v = [[0.0; 2]; 2];
    let mut p = [[0.0; 2]; 2];
    // index 0 = SLOW (one box), 1 = FAST (two boxes)
    for (i, dy) in [1, 2].into_iter().enumerate() {
        for (j, dx) in [1, 2].into_iter().enumerate() {
            let (cv, cp) = value(y - dy, x - dx);
            v[i][j] = cv - r.turn;
            p[i][j] = cp - r.turn;
        }
    }
    (v, p)
}

/// Game value by exhaustive recursion, recomputing every subtree.
pub fn exhaustive_value(r: Rules, y: i32, x: i32) -> (f64, f64) {
    if let Some(t) = terminal(r, y, x) {
        return t;
    }
    let (v, p) = stage_payoffs(r, y, x, &mut |yy, xx| exhaustive_value(r, yy, xx));
    let (_, _, vv, pv) = fast_biased_stage(v, p);
    (vv, pv)
}

/// Same recursion with a table, for depths the plain version cannot reach.
pub struct Tabled {
    rules: Rules,
    table: HashMap<(i32, i32), (f64, f64, f64, f64)>,
}

impl Tabled {
    pub fn new(rules: Rules) -> Self {
        Self {
            rules,
            table: HashMap::new(),
        }
    }

    /// (P(vehicle SLOW), P(pedestrian SLOW), vehicle value, pedestrian value).
    pub fn solve(&mut self, y: i32, x: i32) -> (f64, f64, f64, f64) {
        if let Some(t) = terminal(self.rules, y, x) {
            return (0.0, 0.0, t.0, t.1);
        }
        if let Some(s) = self.table.get(&(y, x)) {
            return *s;
        }
        let rules = self.rules;
        let (v, p) = stage_payoffs(rules, y, x, &mut |yy, xx| {
            let s = self.solve(yy, xx);
            (s.2, s.3)
        });
        let s = fast_biased_stage(v, p);
        self.table.insert((y, x), s);
        s
    }
}
