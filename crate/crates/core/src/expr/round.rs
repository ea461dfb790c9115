//! Tolerance-based snapping of coefficients to simple closed forms.

use std::f64::consts::{E, PI, SQRT_2};

use super::{normalize, Expr};

const MAX_DENOMINATOR: i64 = 20;
const MAX_NUMERATOR: i64 = 1000;
const MAX_MULTIPLE_DENOMINATOR: i64 = 4;

/// Named constants tried as `r * value` with small rational `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantTable {
    entries: Vec<(String, f64)>,
}

impl ConstantTable {
    /// Builds a table; values must be positive and distinct, names unique.
    pub fn new(entries: Vec<(String, f64)>) -> crate::Result<Self> {
        for (i, (name, v)) in entries.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(crate::Error::Invalid(format!(
                    "constant {name} must be positive, got {v}"
                )));
            }
            for (other, w) in &entries[..i] {
                if other == name || w == v {
                    return Err(crate::Error::Invalid(format!(
                        "duplicate constant {name}"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }
}

impl Default for ConstantTable {
    fn default() -> Self {
        let entries = [
            ("pi", PI),
            ("e", E),
            ("pi/2", PI / 2.0),
            ("2pi", 2.0 * PI),
            ("sqrt2", SQRT_2),
            ("1/3", 1.0 / 3.0),
            ("2/3", 2.0 / 3.0),
            ("8/3", 8.0 / 3.0),
        ];
        Self {
            entries: entries
                .iter()
                .map(|(n, v)| (n.to_string(), *v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    cost: i64,
    dist: f64,
    den: i64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        (self.cost, self.dist, self.den) < (other.cost, other.dist, other.den)
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn rational_cost(den: i64) -> i64 {
    if den == 1 {
        1
    } else {
        1 + den
    }
}

/// The simplest candidate strictly closer than `tol * max(1, |c|)` to `c`,
/// if any.
///
/// Costs: 0 for zero, 1 for integers, `1 + d` for `p/d`, and `3 + cost(r)`
/// for `r * kappa`. Ties go to the nearer candidate, then the smaller
/// denominator.
pub fn snap_value(c: f64, tol: f64, constants: &ConstantTable) -> Option<f64> {
    if !c.is_finite() {
        return None;
    }
    let slack = tol * c.abs().max(1.0);
    let mut best: Option<Candidate> = None;
    let mut offer = |cand: Candidate| {
        if cand.dist < slack && best.is_none_or(|b| cand.beats(&b)) {
            best = Some(cand);
        }
    };

    offer(Candidate {
        value: 0.0,
        cost: 0,
        dist: c.abs(),
        den: 1,
    });
    for d in 1..=MAX_DENOMINATOR {
        let p = (c * d as f64).round();
        if p == 0.0 || p.abs() > MAX_NUMERATOR as f64 || gcd(p as i64, d) != 1 {
            continue;
        }
        let value = p / d as f64;
        offer(Candidate {
            value,
            cost: rational_cost(d),
            dist: (c - value).abs(),
            den: d,
        });
    }
    for (_, kappa) in constants.entries() {
        for d in 1..=MAX_MULTIPLE_DENOMINATOR {
            let p = (c * d as f64 / kappa).round();
            if p == 0.0 || gcd(p as i64, d) != 1 {
                continue;
            }
            let value = if d == 1 && p == 1.0 {
                *kappa
            } else {
                kappa * p / d as f64
            };
            offer(Candidate {
                value,
                cost: 3 + rational_cost(d),
                dist: (c - value).abs(),
                den: d,
            });
        }
    }
    best.map(|b| b.value)
}

/// Snaps every constant and exponent of `e` at tolerance `tol`, then
/// re-normalizes so that zeroed coefficients delete their terms.
pub fn round_coefficients(e: &Expr, tol: f64, constants: &ConstantTable) -> Expr {
    normalize(&snap_tree(&normalize(e), tol, constants))
}

fn snap_tree(e: &Expr, tol: f64, constants: &ConstantTable) -> Expr {
    let snap = |v: f64| snap_value(v, tol, constants).unwrap_or(v);
    let rec = |a: &Expr| Box::new(snap_tree(a, tol, constants));
    match e {
        Expr::Const(c) => Expr::Const(snap(*c)),
        Expr::Var(i) => Expr::Var(*i),
        Expr::Sum(xs) => Expr::Sum(xs.iter().map(|x| snap_tree(x, tol, constants)).collect()),
        Expr::Prod(xs) => Expr::Prod(xs.iter().map(|x| snap_tree(x, tol, constants)).collect()),
        Expr::Pow(b, p) => Expr::Pow(rec(b), snap(*p)),
        Expr::Abs(a) => Expr::Abs(rec(a)),
        Expr::Sin(a) => Expr::Sin(rec(a)),
        Expr::Exp(a) => Expr::Exp(rec(a)),
        Expr::Sgn(a) => Expr::Sgn(rec(a)),
    }
}
