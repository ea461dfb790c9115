//! Canonical form: a sum of monomials `c * Π base^e`.
//!
//! Products distribute over sums (up to [`MAX_TERMS`] terms), small positive
//! integer powers of sums are expanded, exponentials inside one monomial are
//! merged into a single `exp` and constant terms are pulled out of their
//! arguments, and `abs(a)^(2k)` becomes `a^(2k)`. Like terms are merged and
//! terms are ordered by descending degree.

use std::cmp::Ordering;

use super::{cmp_expr, is_integer, signum0, Expr};

/// Expansion budget; larger products stay factored.
const MAX_TERMS: usize = 4096;
const MAX_EXPAND_POWER: f64 = 8.0;

#[derive(Debug, Clone)]
struct Term {
    coeff: f64,
    /// Sorted by base, exponents nonzero, bases unique.
    factors: Vec<(Expr, f64)>,
}

type Poly = Vec<Term>;

/// Returns the canonical form of `e`. Idempotent.
pub fn normalize(e: &Expr) -> Expr {
    to_expr(&norm(e))
}

fn constant(c: f64) -> Poly {
    if c == 0.0 {
        Vec::new()
    } else {
        vec![Term {
            coeff: c,
            factors: Vec::new(),
        }]
    }
}

fn one() -> Poly {
    constant(1.0)
}

fn single(base: Expr, e: f64) -> Poly {
    vec![Term {
        coeff: 1.0,
        factors: vec![(base, e)],
    }]
}

fn as_constant(p: &Poly) -> Option<f64> {
    match p.as_slice() {
        [] => Some(0.0),
        [t] if t.factors.is_empty() => Some(t.coeff),
        _ => None,
    }
}

fn is_even(e: f64) -> bool {
    is_integer(e) && (e as i64) % 2 == 0
}

fn is_nonneg_base(b: &Expr) -> bool {
    matches!(b, Expr::Abs(_) | Expr::Exp(_))
}

fn norm(e: &Expr) -> Poly {
    match e {
        Expr::Const(c) => constant(*c),
        Expr::Var(i) => single(Expr::Var(*i), 1.0),
        Expr::Sum(xs) => canonical(xs.iter().flat_map(norm).collect()),
        Expr::Prod(xs) => norm_prod(xs),
        Expr::Pow(b, p) => pow_poly(norm(b), *p),
        Expr::Abs(a) => norm_abs(norm(a)),
        Expr::Sgn(a) => norm_sgn(norm(a)),
        Expr::Sin(a) => {
            let a = norm(a);
            match as_constant(&a) {
                Some(c) => constant(c.sin()),
                None => single(Expr::sin(to_expr(&a)), 1.0),
            }
        }
        Expr::Exp(a) => exp_poly(norm(a)),
    }
}

fn norm_prod(xs: &[Expr]) -> Poly {
    // Constant numerators and `c^-1` denominators fold as a single division,
    // so that `8/3*z` and `8*z/3` give the same coefficient.
    let mut num = 1.0;
    let mut den = 1.0;
    let mut polys = Vec::new();
    for x in xs {
        if let Expr::Pow(b, p) = x {
            if let (Expr::Const(d), -1.0) = (b.as_ref(), *p) {
                den *= d;
                continue;
            }
        }
        let p = norm(x);
        match as_constant(&p) {
            Some(c) => num *= c,
            None => polys.push(p),
        }
    }
    let coeff = num / den;
    if coeff == 0.0 {
        return Vec::new();
    }
    let size = polys
        .iter()
        .fold(1usize, |acc, p| acc.saturating_mul(p.len()));
    let mut acc = constant(coeff);
    if size <= MAX_TERMS {
        for p in &polys {
            acc = mul(&acc, p);
        }
    } else {
        for p in &polys {
            let factor = if p.len() == 1 {
                p.clone()
            } else {
                single(to_expr(p), 1.0)
            };
            acc = mul(&acc, &factor);
        }
    }
    acc
}

fn exp_poly(a: Poly) -> Poly {
    let (c0, rest): (Vec<Term>, Vec<Term>) = a.into_iter().partition(|t| t.factors.is_empty());
    let c0 = c0.first().map_or(0.0, |t| t.coeff);
    if rest.is_empty() {
        return constant(c0.exp());
    }
    vec![Term {
        coeff: c0.exp(),
        factors: vec![(Expr::exp(to_expr(&rest)), 1.0)],
    }]
}

fn norm_abs(a: Poly) -> Poly {
    match a.len() {
        0 => Vec::new(),
        1 => {
            let t = &a[0];
            let mut acc = constant(t.coeff.abs());
            for (f, e) in &t.factors {
                // fractional powers are only defined on nonnegative bases
                let piece = if is_nonneg_base(f) || !is_integer(*e) {
                    make_factor(f.clone(), *e)
                } else {
                    make_factor(Expr::abs(f.clone()), *e)
                };
                acc = mul(&acc, &piece);
            }
            acc
        }
        _ => single(Expr::abs(to_expr(&a)), 1.0),
    }
}

fn norm_sgn(a: Poly) -> Poly {
    match a.len() {
        0 => Vec::new(),
        1 if a[0].factors.is_empty() => constant(signum0(a[0].coeff)),
        1 => {
            let m = term_expr(&Term {
                coeff: 1.0,
                factors: a[0].factors.clone(),
            });
            vec![Term {
                coeff: signum0(a[0].coeff),
                factors: vec![(Expr::sgn(m), 1.0)],
            }]
        }
        _ => single(Expr::sgn(to_expr(&a)), 1.0),
    }
}

fn pow_poly(b: Poly, p: f64) -> Poly {
    if p == 0.0 {
        return one();
    }
    if p == 1.0 {
        return b;
    }
    if b.is_empty() {
        return if p > 0.0 {
            Vec::new()
        } else {
            single(Expr::Const(0.0), p)
        };
    }
    if b.len() == 1 {
        let t = &b[0];
        if is_integer(p) {
            let c = t.coeff.powi(p as i32);
            if c.is_finite() && c != 0.0 {
                let mut acc = constant(c);
                for (f, e) in &t.factors {
                    acc = mul(&acc, &make_factor(f.clone(), e * p));
                }
                return acc;
            }
        } else if t.coeff > 0.0
            && t.factors
                .iter()
                .all(|(f, e)| is_nonneg_base(f) || is_even(*e))
        {
            let c = t.coeff.powf(p);
            if c.is_finite() && c != 0.0 {
                let mut acc = constant(c);
                for (f, e) in &t.factors {
                    let base = if is_nonneg_base(f) {
                        f.clone()
                    } else {
                        Expr::abs(f.clone())
                    };
                    acc = mul(&acc, &make_factor(base, e * p));
                }
                return acc;
            }
        }
        return single(term_expr(t), p);
    }
    if p > 0.0
        && p <= MAX_EXPAND_POWER
        && is_integer(p)
        && b.len().saturating_pow(p as u32) <= MAX_TERMS
    {
        let mut acc = b.clone();
        for _ in 1..(p as usize) {
            acc = mul(&acc, &b);
        }
        return acc;
    }
    single(to_expr(&b), p)
}

/// `base^e` for a factor base already in canonical form.
fn make_factor(base: Expr, e: f64) -> Poly {
    if e == 0.0 {
        return one();
    }
    match &base {
        Expr::Exp(a) => exp_poly(scale(norm(a), e)),
        Expr::Abs(a) if is_even(e) => pow_poly(norm(a), e),
        Expr::Pow(..) | Expr::Sum(_) | Expr::Prod(_) if is_integer(e) => pow_poly(norm(&base), e),
        _ => single(base, e),
    }
}

fn scale(p: Poly, s: f64) -> Poly {
    canonical(
        p.into_iter()
            .map(|t| Term {
                coeff: t.coeff * s,
                factors: t.factors,
            })
            .collect(),
    )
}

fn mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for s in a {
        for t in b {
            out.extend(term_mul(s, t));
        }
    }
    canonical(out)
}

fn term_mul(a: &Term, b: &Term) -> Poly {
    let coeff = a.coeff * b.coeff;
    if b.factors.is_empty() || a.factors.is_empty() {
        let factors = if a.factors.is_empty() {
            b.factors.clone()
        } else {
            a.factors.clone()
        };
        return vec![Term { coeff, factors }];
    }

    let mut exp_args: Poly = Vec::new();
    let mut exp_count = 0;
    let mut rest: Vec<(Expr, f64)> = Vec::new();
    for (f, e) in a.factors.iter().chain(&b.factors) {
        match f {
            Expr::Exp(arg) => {
                exp_count += 1;
                exp_args.extend(scale(norm(arg), *e));
            }
            _ => rest.push((f.clone(), *e)),
        }
    }
    rest.sort_by(|x, y| cmp_expr(&x.0, &y.0));

    let mut factors: Vec<(Expr, f64)> = Vec::new();
    let mut extra: Vec<Poly> = Vec::new();
    let mut i = 0;
    while i < rest.len() {
        let mut j = i + 1;
        let mut e = rest[i].1;
        while j < rest.len() && cmp_expr(&rest[j].0, &rest[i].0) == Ordering::Equal {
            e += rest[j].1;
            j += 1;
        }
        if j - i == 1 {
            factors.push(rest[i].clone());
        } else if e != 0.0 {
            extra.push(make_factor(rest[i].0.clone(), e));
        }
        i = j;
    }

    let mut coeff = coeff;
    match exp_count {
        0 => {}
        1 => {
            let f = a
                .factors
                .iter()
                .chain(&b.factors)
                .find(|(f, _)| matches!(f, Expr::Exp(_)))
                .cloned()
                .expect("one exp factor");
            factors.push(f);
        }
        _ => {
            let merged = exp_poly(canonical(exp_args));
            match merged.as_slice() {
                [] => return Vec::new(),
                [t] => {
                    coeff *= t.coeff;
                    factors.extend(t.factors.iter().cloned());
                }
                _ => unreachable!("exp_poly yields one term"),
            }
        }
    }
    factors.sort_by(cmp_factor);

    let mut acc = vec![Term { coeff, factors }];
    for p in &extra {
        acc = mul(&acc, p);
    }
    acc
}

fn cmp_factor(a: &(Expr, f64), b: &(Expr, f64)) -> Ordering {
    cmp_expr(&a.0, &b.0).then_with(|| a.1.total_cmp(&b.1))
}

fn cmp_factors(a: &[(Expr, f64)], b: &[(Expr, f64)]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = cmp_factor(x, y);
        if c != Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

fn degree(t: &Term) -> f64 {
    t.factors.iter().map(|(_, e)| e).sum()
}

/// Sorts by descending degree then factor structure, merges like terms and
/// drops zero coefficients.
fn canonical(mut terms: Vec<Term>) -> Poly {
    terms.sort_by(|a, b| {
        degree(b)
            .total_cmp(&degree(a))
            .then_with(|| cmp_factors(&a.factors, &b.factors))
    });
    let mut out: Poly = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some(last) if cmp_factors(&last.factors, &t.factors) == Ordering::Equal => {
                last.coeff += t.coeff;
            }
            _ => out.push(t),
        }
    }
    out.retain(|t| t.coeff != 0.0);
    out
}

fn term_expr(t: &Term) -> Expr {
    let mut parts = Vec::with_capacity(t.factors.len() + 1);
    if t.coeff != 1.0 || t.factors.is_empty() {
        parts.push(Expr::Const(t.coeff));
    }
    for (b, e) in &t.factors {
        parts.push(if *e == 1.0 {
            b.clone()
        } else {
            Expr::pow(b.clone(), *e)
        });
    }
    if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        Expr::Prod(parts)
    }
}

fn to_expr(p: &Poly) -> Expr {
    match p.as_slice() {
        [] => Expr::Const(0.0),
        [t] => term_expr(t),
        ts => Expr::Sum(ts.iter().map(term_expr).collect()),
    }
}
