//! End-to-end identification: sample, train, extract, select, score.

use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::expr::{normalize, ConstantTable, Expr};
use crate::network::{extract_expression, InitSpec};
use crate::select::{select_model, Selection};
use crate::systems::{build_dataset, clean_samples, relative_rmse, Dataset, Layout, SystemDef};
use crate::train::{train_kfold, KFoldResult};

/// Trained folds, the best fold's network model and its selection sweep.
#[derive(Debug, Clone)]
pub struct Identification {
    pub kfold: KFoldResult,
    pub network_model: Vec<Expr>,
    pub selection: Selection,
    pub winner_rmse: f64,
    pub train_seconds: f64,
    pub select_seconds: f64,
}

impl Identification {
    pub fn winner(&self) -> &[Expr] {
        &self.selection.best().exprs
    }
}

/// Trains on `data` with the settings in `cfg` and selects a model.
pub fn identify(data: &Dataset, cfg: &RunConfig, table: &ConstantTable) -> Result<Identification> {
    cfg.validate()?;
    let start = Instant::now();
    let init = InitSpec::with_seed(cfg.seed);
    let kfold = train_kfold(data, &cfg.shape, &init, &cfg.loss, &cfg.train)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let network_model = extract_expression(&kfold.best().weights);
    let selection = select_model(&network_model, &data.x, &data.y, table)?;
    let winner_rmse = relative_rmse(&selection.best().exprs, data)?;
    Ok(Identification {
        kfold,
        network_model,
        selection,
        winner_rmse,
        train_seconds,
        select_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Builds the preset dataset for `system` and identifies it.
pub fn run(system: &SystemDef, cfg: &RunConfig) -> Result<(Dataset, Identification)> {
    if cfg.shape.n != system.n() {
        return Err(Error::Invalid(format!(
            "{} has {} states, config expects {}",
            system.name,
            system.n(),
            cfg.shape.n
        )));
    }
    if cfg.shape.time_input {
        return Err(Error::Invalid("built-in systems are autonomous".into()));
    }
    let data = build_dataset(
        system,
        &system.layout,
        cfg.noise.sigma1,
        cfg.noise.sigma2,
        cfg.seed,
    )?;
    let id = identify(&data, cfg, &ConstantTable::default())?;
    Ok((data, id))
}

/// Outcome of a structural comparison against a reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Sign of each state over clean samples of `system`, if it never changes.
pub fn definite_signs(system: &SystemDef, layout: &Layout, seed: u64) -> Result<Vec<Option<f64>>> {
    let (xs, _, _, _) = clean_samples(system, layout, seed)?;
    Ok((0..system.n())
        .map(|i| {
            if xs.iter().all(|r| r[i] > 0.0) {
                Some(1.0)
            } else if xs.iter().all(|r| r[i] < 0.0) {
                Some(-1.0)
            } else {
                None
            }
        })
        .collect())
}

/// Replaces `|x_i|` by `±x_i` for states of fixed sign and renormalizes.
/// Powers with non-integer exponents keep their absolute value.
pub fn resolve_abs(e: &Expr, signs: &[Option<f64>]) -> Expr {
    fn go(e: &Expr, signs: &[Option<f64>]) -> Expr {
        match e {
            Expr::Abs(a) => match a.as_ref() {
                Expr::Var(i) => match signs.get(*i).copied().flatten() {
                    Some(s) => Expr::scaled(s, Expr::Var(*i)),
                    None => e.clone(),
                },
                other => Expr::abs(go(other, signs)),
            },
            Expr::Pow(b, p) if p.fract() != 0.0 => Expr::pow(go_inner(b, signs), *p),
            Expr::Pow(b, p) => Expr::pow(go(b, signs), *p),
            Expr::Sum(xs) => Expr::Sum(xs.iter().map(|x| go(x, signs)).collect()),
            Expr::Prod(xs) => Expr::Prod(xs.iter().map(|x| go(x, signs)).collect()),
            Expr::Sin(a) => Expr::sin(go(a, signs)),
            Expr::Exp(a) => Expr::exp(go(a, signs)),
            Expr::Sgn(a) => Expr::sgn(go(a, signs)),
            Expr::Const(_) | Expr::Var(_) => e.clone(),
        }
    }
    fn go_inner(b: &Expr, signs: &[Option<f64>]) -> Expr {
        match b {
            Expr::Abs(a) => Expr::abs(go(a, signs)),
            other => go(other, signs),
        }
    }
    normalize(&go(e, signs))
}

/// Rewrites `sin(u)` as `-sin(-u)` (and likewise `sgn`) when the leading
/// non-constant term of `u` has a negative coefficient, then renormalizes.
pub fn canonical_odd(e: &Expr) -> Expr {
    fn negative_lead(a: &Expr) -> bool {
        let mut ts: Vec<(f64, Expr)> = a
            .terms()
            .iter()
            .map(split_coefficient)
            .filter(|(_, m)| !matches!(m, Expr::Const(_)))
            .collect();
        ts.sort_by(|x, y| crate::expr::cmp_expr(&x.1, &y.1));
        ts.first().is_some_and(|(c, _)| *c < 0.0)
    }
    fn odd(a: &Expr, f: fn(Expr) -> Expr) -> Expr {
        let a = go(a);
        if negative_lead(&a) {
            Expr::scaled(-1.0, f(normalize(&Expr::scaled(-1.0, a))))
        } else {
            f(a)
        }
    }
    fn go(e: &Expr) -> Expr {
        match e {
            Expr::Sin(a) => odd(a, Expr::sin),
            Expr::Sgn(a) => odd(a, Expr::sgn),
            Expr::Exp(a) => Expr::exp(go(a)),
            Expr::Abs(a) => Expr::abs(go(a)),
            Expr::Pow(b, p) => Expr::pow(go(b), *p),
            Expr::Sum(xs) => Expr::Sum(xs.iter().map(go).collect()),
            Expr::Prod(xs) => Expr::Prod(xs.iter().map(go).collect()),
            Expr::Const(_) | Expr::Var(_) => e.clone(),
        }
    }
    normalize(&go(e))
}

/// Every component equals the reference exactly after normalization.
pub fn exact_match(model: &[Expr], truth: &[Expr]) -> Verdict {
    let bad: Vec<usize> = (0..truth.len())
        .filter(|&i| model.get(i) != Some(&truth[i]))
        .collect();
    if bad.is_empty() && model.len() == truth.len() {
        Verdict::new(true, "exact")
    } else {
        Verdict::new(false, format!("components {bad:?} differ"))
    }
}

/// Each component has the reference's term set; coefficients are ignored.
pub fn same_terms(model: &[Expr], truth: &[Expr]) -> Verdict {
    if model.len() != truth.len() {
        return Verdict::new(false, "dimension mismatch");
    }
    for (i, (m, t)) in model.iter().zip(truth).enumerate() {
        let (a, b) = (monomials(m), monomials(t));
        if a != b {
            return Verdict::new(false, format!("component {i}: terms {a:?} vs {b:?}"));
        }
    }
    Verdict::new(true, "same terms")
}

/// Coefficient-free term signatures of a normalized expression.
pub fn monomials(e: &Expr) -> Vec<Expr> {
    let mut out: Vec<Expr> = e
        .terms()
        .into_iter()
        .map(|t| strip_coefficient(&t))
        .collect();
    out.sort_by(crate::expr::cmp_expr);
    out.dedup();
    out
}

/// Splits a term into its leading constant and the rest.
pub fn split_coefficient(t: &Expr) -> (f64, Expr) {
    match t {
        Expr::Const(c) => (*c, Expr::Const(1.0)),
        Expr::Prod(fs) => match fs.first() {
            Some(Expr::Const(c)) => {
                let rest: Vec<Expr> = fs[1..].to_vec();
                let rest = if rest.len() == 1 {
                    rest.into_iter().next().expect("one factor")
                } else {
                    Expr::Prod(rest)
                };
                (*c, rest)
            }
            _ => (1.0, t.clone()),
        },
        _ => (1.0, t.clone()),
    }
}

fn strip_coefficient(t: &Expr) -> Expr {
    split_coefficient(t).1
}

/// Coefficient of the term with signature `monomial` in `e` (0 if absent).
pub fn coefficient_of(e: &Expr, monomial: &Expr) -> f64 {
    e.terms()
        .iter()
        .map(split_coefficient)
        .filter(|(_, m)| m == monomial)
        .map(|(c, _)| c)
        .fold(0.0, |a, c| a + c)
}

/// Relative-RMSE of the identified models reported for each example.
pub fn reported_rmse(example: &str) -> Option<f64> {
    Some(match example {
        "takens_bogdanov" => 0.0210,
        "pendulum" => 0.0445,
        "rossler" => 0.0260,
        "lorenz" => 0.0259,
        "fitzhugh_nagumo" => 0.0240,
        "chemical_kinetics" => 0.0156,
        "chua" => 0.0541,
        _ => return None,
    })
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

/// Pass/fail against the recovery thresholds of a built-in example.
/// `seed` picks the clean trajectory used to find sign-definite states.
pub fn example_verdict(
    system: &SystemDef,
    seed: u64,
    winner: &[Expr],
    rmse: f64,
) -> Result<Verdict> {
    let signs = definite_signs(system, &system.layout, seed)?;
    let model: Vec<Expr> = winner
        .iter()
        .map(|e| canonical_odd(&resolve_abs(e, &signs)))
        .collect();
    let names = &system.var_names;
    let text = |e: &Expr| crate::expr::to_text(e, names);
    let v = match system.name.as_str() {
        "rossler" => exact_match(&model, &system.rhs),
        "lorenz" => {
            let exact = exact_match(&model, &system.rhs);
            let ok = (rmse - 0.0259).abs() <= 0.01;
            Verdict::new(
                exact.passed && ok,
                format!("{}; relative RMSE {:.2}% (target 2.59 ± 1)", exact.detail, 100.0 * rmse),
            )
        }
        "takens_bogdanov" => {
            let ydot = &model[1];
            let terms = same_terms(&model[1..], &system.rhs[1..]);
            let c = coefficient_of(ydot, &Expr::Const(1.0));
            let cy = coefficient_of(ydot, &Expr::Var(1));
            let cxx = coefficient_of(ydot, &Expr::pow(Expr::Var(0), 2.0));
            let cxy = coefficient_of(ydot, &Expr::Prod(vec![Expr::Var(0), Expr::Var(1)]));
            let passed = terms.passed
                && within(c, -4.6, -4.1)
                && within(cy, 1.35, 1.65)
                && cxx.round() == 1.0
                && cxy.round() == 1.0
                && rmse <= 0.03;
            Verdict::new(
                passed,
                format!(
                    "dy/dt = {}; constant {c}, y {cy}, x^2 {cxx}, x*y {cxy}; relative RMSE {:.2}%",
                    text(ydot),
                    100.0 * rmse
                ),
            )
        }
        "pendulum" => {
            let ydot = &model[1];
            let sin_x = Expr::sin(Expr::Var(0));
            let c = coefficient_of(ydot, &sin_x);
            let passed = monomials(ydot) == vec![sin_x] && within(c, -5.1, -4.6);
            Verdict::new(passed, format!("dy/dt = {}; sin coefficient {c}", text(ydot)))
        }
        "fitzhugh_nagumo" | "chemical_kinetics" | "chua" => {
            let target = reported_rmse(&system.name).expect("reported example");
            let near = (rmse - target).abs() <= 0.02;
            let mut detail = format!(
                "relative RMSE {:.2}% (reported {:.2} ± 2)",
                100.0 * rmse,
                100.0 * target
            );
            let mut passed = near;
            if system.name == "fitzhugh_nagumo" {
                let missing: Vec<String> = model
                    .iter()
                    .zip(&system.rhs)
                    .flat_map(|(m, t)| {
                        let have = monomials(m);
                        monomials(t).into_iter().filter(move |x| !have.contains(x))
                    })
                    .map(|m| text(&m))
                    .collect();
                passed &= missing.is_empty();
                if !missing.is_empty() {
                    detail.push_str(&format!("; missing terms {missing:?}"));
                }
            }
            if model.iter().any(|e| text(e).contains("sin(")) {
                detail.push_str("; sinusoidal surrogate terms present");
            }
            Verdict::new(passed, detail)
        }
        other => Verdict::new(false, format!("no reference thresholds for {other}")),
    };
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_text;

    fn vars() -> Vec<String> {
        ["x", "y"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn odd_functions_take_the_sign_outside() {
        let v = vars();
        let e = parse_text("5*sin(-x) + sgn(-2*y + 1) - 2*sin(x)", &v).unwrap();
        let want = parse_text("-7*sin(x) - sgn(2*y - 1)", &v).unwrap();
        assert_eq!(canonical_odd(&e), want);
        let sys = crate::systems::builtin("pendulum").unwrap();
        let w = [parse_text("y", &v).unwrap(), parse_text("4.9*sin(-x)", &v).unwrap()];
        assert!(example_verdict(&sys, 0, &w, 0.05).unwrap().passed);
    }

    #[test]
    fn term_signatures() {
        let v = vars();
        let a = parse_text("-4.333 + 1.5*y + x^2 + x*y", &v).unwrap();
        let b = parse_text("-4.41 + 1.5*y + x^2 + x*y", &v).unwrap();
        assert_eq!(monomials(&a), monomials(&b));
        assert!(same_terms(&[a.clone()], &[b.clone()]).passed);
        assert!(!exact_match(&[a.clone()], &[b]).passed);
        assert_eq!(coefficient_of(&a, &Expr::Const(1.0)), -4.333);
        assert_eq!(coefficient_of(&a, &Expr::Var(1)), 1.5);
        let xy = parse_text("x*y", &v).unwrap();
        assert_eq!(coefficient_of(&a, &xy), 1.0);
        assert_eq!(coefficient_of(&a, &parse_text("y^2", &v).unwrap()), 0.0);
    }

    #[test]
    fn abs_of_positive_state_resolves() {
        let v: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let e = parse_text("x*z - 2*z - 2*abs(z) + 2 + abs(x)", &v).unwrap();
        let r = resolve_abs(&e, &[None, None, Some(1.0)]);
        assert_eq!(r, parse_text("2 + x*z - 4*z + abs(x)", &v).unwrap());
        let keep = parse_text("abs(z)^0.5", &v).unwrap();
        assert_eq!(resolve_abs(&keep, &[None, None, Some(1.0)]), keep);
        let neg = parse_text("abs(y)", &v).unwrap();
        assert_eq!(resolve_abs(&neg, &[None, Some(-1.0), None]), parse_text("-y", &v).unwrap());
    }

    #[test]
    fn rossler_height_is_positive() {
        let sys = crate::systems::builtin("rossler").unwrap();
        let signs = definite_signs(&sys, &sys.layout, 0).unwrap();
        assert_eq!(signs[2], Some(1.0));
    }

    #[test]
    fn ground_truth_passes_its_own_verdict() {
        for (name, rmse) in [("rossler", 0.026), ("lorenz", 0.026), ("takens_bogdanov", 0.02)] {
            let sys = crate::systems::builtin(name).unwrap();
            let v = example_verdict(&sys, 0, &sys.rhs, rmse).unwrap();
            assert!(v.passed, "{name}: {}", v.detail);
        }
        let sys = crate::systems::builtin("lorenz").unwrap();
        assert!(!example_verdict(&sys, 0, &sys.rhs, 0.04).unwrap().passed);
    }

    #[test]
    fn pendulum_verdict_reads_the_sine_coefficient() {
        let sys = crate::systems::builtin("pendulum").unwrap();
        let v = &sys.var_names;
        let good = vec![parse_text("y", v).unwrap(), parse_text("-4.857*sin(x)", v).unwrap()];
        assert!(example_verdict(&sys, 0, &good, 0.045).unwrap().passed);
        let linear = vec![parse_text("y", v).unwrap(), parse_text("-4.2*x", v).unwrap()];
        assert!(!example_verdict(&sys, 0, &linear, 0.1).unwrap().passed);
    }

    #[test]
    fn extra_term_breaks_structure() {
        let v = vars();
        let a = parse_text("y + 0.01*x", &v).unwrap();
        let b = parse_text("y", &v).unwrap();
        assert!(!same_terms(&[a], &[b]).passed);
    }
}
