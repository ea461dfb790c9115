//! Immutable symbolic expression trees.
//!
//! [`Expr`] is the output language of the pipeline: the trained network is
//! extracted into one tree per state dimension, rounded, scored and written
//! out as text. Trees are plain values; every operation here is a pure
//! function returning a new tree.

mod normalize;
mod round;
mod text;

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

pub use normalize::normalize;
pub use round::{round_coefficients, snap_value, ConstantTable};
pub use text::{parse_text, to_text};

/// Value read by `Var(n)` when the state vector has length `n`.
pub const CONSTANT_INPUT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// 0-based state index. Index `x.len()` evaluates to [`CONSTANT_INPUT`].
    Var(usize),
    Sum(Vec<Expr>),
    Prod(Vec<Expr>),
    Pow(Box<Expr>, f64),
    Abs(Box<Expr>),
    Sin(Box<Expr>),
    Exp(Box<Expr>),
    Sgn(Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn pow(base: Expr, exponent: f64) -> Self {
        Expr::Pow(Box::new(base), exponent)
    }

    pub fn abs(arg: Expr) -> Self {
        Expr::Abs(Box::new(arg))
    }

    pub fn sin(arg: Expr) -> Self {
        Expr::Sin(Box::new(arg))
    }

    pub fn exp(arg: Expr) -> Self {
        Expr::Exp(Box::new(arg))
    }

    pub fn sgn(arg: Expr) -> Self {
        Expr::Sgn(Box::new(arg))
    }

    /// `c * e`, without simplification.
    pub fn scaled(c: f64, e: Expr) -> Self {
        Expr::Prod(vec![Expr::Const(c), e])
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Sum(xs) | Expr::Prod(xs) => xs.iter().filter_map(Expr::max_var).max(),
            Expr::Pow(b, _) | Expr::Abs(b) | Expr::Sin(b) | Expr::Exp(b) | Expr::Sgn(b) => {
                b.max_var()
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Sum(xs) | Expr::Prod(xs) => 1 + xs.iter().map(Expr::size).sum::<usize>(),
            Expr::Pow(b, _) | Expr::Abs(b) | Expr::Sin(b) | Expr::Exp(b) | Expr::Sgn(b) => {
                1 + b.size()
            }
        }
    }

    /// Top-level additive terms (a single non-sum expression is one term).
    pub fn terms(&self) -> &[Expr] {
        match self {
            Expr::Sum(xs) => xs,
            other => std::slice::from_ref(other),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(_) => 1,
            Expr::Abs(_) => 2,
            Expr::Sgn(_) => 3,
            Expr::Sin(_) => 4,
            Expr::Exp(_) => 5,
            Expr::Pow(..) => 6,
            Expr::Prod(_) => 7,
            Expr::Sum(_) => 8,
        }
    }
}

/// Total order over trees, used for canonical term and factor ordering.
pub fn cmp_expr(a: &Expr, b: &Expr) -> Ordering {
    use Expr::*;
    match (a, b) {
        (Const(x), Const(y)) => x.total_cmp(y),
        (Var(i), Var(j)) => i.cmp(j),
        (Abs(x), Abs(y)) | (Sgn(x), Sgn(y)) | (Sin(x), Sin(y)) | (Exp(x), Exp(y)) => {
            cmp_expr(x, y)
        }
        (Pow(x, p), Pow(y, q)) => cmp_expr(x, y).then_with(|| p.total_cmp(q)),
        (Prod(xs), Prod(ys)) | (Sum(xs), Sum(ys)) => cmp_slices(xs, ys),
        _ => a.rank().cmp(&b.rank()),
    }
}

fn cmp_slices(xs: &[Expr], ys: &[Expr]) -> Ordering {
    for (x, y) in xs.iter().zip(ys) {
        let c = cmp_expr(x, y);
        if c != Ordering::Equal {
            return c;
        }
    }
    xs.len().cmp(&ys.len())
}

fn is_integer(p: f64) -> bool {
    p.fract() == 0.0 && p.abs() < 2.0_f64.powi(31)
}

/// Evaluates `e` at the state `x`.
///
/// `Var(x.len())` reads the appended constant input. Powers of negative bases
/// require an integer exponent; wrap the base in `Abs` otherwise.
pub fn evaluate(e: &Expr, x: &[f64]) -> Result<f64> {
    let v = eval_inner(e, x)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("expression evaluated to {v}")))
    }
}

fn eval_inner(e: &Expr, x: &[f64]) -> Result<f64> {
    Ok(match e {
        Expr::Const(c) => *c,
        Expr::Var(i) => match (*i).cmp(&x.len()) {
            Ordering::Less => x[*i],
            Ordering::Equal => CONSTANT_INPUT,
            Ordering::Greater => {
                return Err(Error::Domain(format!(
                    "variable index {i} out of range for a {}-dimensional state",
                    x.len()
                )))
            }
        },
        Expr::Sum(xs) => {
            let mut acc = 0.0;
            for t in xs {
                acc += eval_inner(t, x)?;
            }
            acc
        }
        Expr::Prod(xs) => {
            let mut acc = 1.0;
            for t in xs {
                acc *= eval_inner(t, x)?;
            }
            acc
        }
        Expr::Pow(b, p) => {
            let base = eval_inner(b, x)?;
            if is_integer(*p) {
                base.powi(*p as i32)
            } else if base < 0.0 {
                return Err(Error::Domain(format!(
                    "negative base {base} raised to non-integer exponent {p}"
                )));
            } else {
                base.powf(*p)
            }
        }
        Expr::Abs(a) => eval_inner(a, x)?.abs(),
        Expr::Sin(a) => eval_inner(a, x)?.sin(),
        Expr::Exp(a) => eval_inner(a, x)?.exp(),
        Expr::Sgn(a) => signum0(eval_inner(a, x)?),
    })
}

/// Sign with `sgn(0) = 0`.
pub fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates a vector model at `x`.
pub fn evaluate_all(model: &[Expr], x: &[f64]) -> Result<Vec<f64>> {
    model.iter().map(|e| evaluate(e, x)).collect()
}

/// Parameter count of a normalized tree: `Const` nodes plus non-integer
/// exponents.
pub fn count_parameters(e: &Expr) -> usize {
    match e {
        Expr::Const(_) => 1,
        Expr::Var(_) => 0,
        Expr::Sum(xs) | Expr::Prod(xs) => xs.iter().map(count_parameters).sum(),
        Expr::Pow(b, p) => count_parameters(b) + usize::from(!is_integer(*p)),
        Expr::Abs(b) | Expr::Sin(b) | Expr::Exp(b) | Expr::Sgn(b) => count_parameters(b),
    }
}

/// Number of nonzero additive terms; the "raw" count reported next to
/// [`count_parameters`].
pub fn count_terms(e: &Expr) -> usize {
    match e {
        Expr::Const(c) if *c == 0.0 => 0,
        other => other.terms().len(),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..=self.max_var().unwrap_or(0))
            .map(|i| format!("x{}", i + 1))
            .collect();
        f.write_str(&to_text(self, &names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_constants_and_sin() {
        assert_eq!(evaluate(&Expr::Const(2.5), &[]).unwrap(), 2.5);
        assert_eq!(evaluate(&Expr::sin(Expr::Var(0)), &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn abs_squared_of_negative_state() {
        let e = Expr::Prod(vec![Expr::pow(Expr::abs(Expr::Var(1)), 2.0)]);
        assert_eq!(evaluate(&e, &[5.0, -3.0]).unwrap(), 9.0);
    }

    #[test]
    fn var_n_reads_constant_input() {
        assert_eq!(evaluate(&Expr::Var(2), &[1.0, 1.0]).unwrap(), 2.0);
        assert!(matches!(
            evaluate(&Expr::Var(3), &[1.0, 1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn negative_base_fractional_power_is_domain_error() {
        let e = Expr::pow(Expr::Var(0), 0.5);
        assert!(matches!(evaluate(&e, &[-4.0]), Err(Error::Domain(_))));
        let wrapped = Expr::pow(Expr::abs(Expr::Var(0)), 0.5);
        assert_eq!(evaluate(&wrapped, &[-4.0]).unwrap(), 2.0);
        // integer exponents are fine on negative bases
        assert_eq!(evaluate(&Expr::pow(Expr::Var(0), 3.0), &[-2.0]).unwrap(), -8.0);
    }

    #[test]
    fn overflow_is_non_finite() {
        let e = Expr::exp(Expr::Var(0));
        assert!(matches!(evaluate(&e, &[1000.0]), Err(Error::NonFinite(_))));
        let e = Expr::pow(Expr::Var(0), -1.0);
        assert!(matches!(evaluate(&e, &[0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sgn_of_zero_is_zero() {
        assert_eq!(evaluate(&Expr::sgn(Expr::Var(0)), &[0.0]).unwrap(), 0.0);
        assert_eq!(evaluate(&Expr::sgn(Expr::Var(0)), &[-3.2]).unwrap(), -1.0);
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(count_parameters(&Expr::Var(1)), 0);
        let e = Expr::scaled(-4.857, Expr::sin(Expr::Var(0)));
        assert_eq!(count_parameters(&e), 1);
        let lorenz_x = normalize(&Expr::scaled(
            10.0,
            Expr::Sum(vec![Expr::Var(1), Expr::scaled(-1.0, Expr::Var(0))]),
        ));
        assert_eq!(count_parameters(&lorenz_x), 2);
        // non-integer exponents count, integer ones do not
        let e = Expr::Prod(vec![
            Expr::pow(Expr::abs(Expr::Var(0)), 0.5),
            Expr::pow(Expr::Var(1), 2.0),
        ]);
        assert_eq!(count_parameters(&e), 1);
    }

    #[test]
    fn term_counts() {
        assert_eq!(count_terms(&Expr::Const(0.0)), 0);
        assert_eq!(count_terms(&Expr::Var(0)), 1);
        assert_eq!(
            count_terms(&Expr::Sum(vec![Expr::Var(0), Expr::Var(1)])),
            2
        );
    }
}
