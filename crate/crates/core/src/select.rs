//! Model selection over a grid of rounding tolerances by corrected AIC.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{count_parameters, evaluate_all, round_coefficients, ConstantTable, Expr};

/// Eleven log-spaced rounding tolerances from 0.01 to 1.
pub const TOLERANCES: [f64; 11] = [
    0.01, 0.0158, 0.0251, 0.0398, 0.0631, 0.1, 0.1585, 0.2512, 0.3981, 0.631, 1.0,
];

pub fn tolerance_grid() -> [f64; 11] {
    TOLERANCES
}

/// Small-sample corrected AIC:
/// `2P + m ln(mse) + 2(P+1)(P+2)/(m-P-2)`.
pub fn aic_score(p: usize, mse: f64, m: usize) -> Result<f64> {
    if m <= p + 2 {
        return Err(Error::CorrectionUndefined { m, p });
    }
    if !(mse > 0.0) {
        return Err(Error::DegenerateFit(mse));
    }
    let (pf, mf) = (p as f64, m as f64);
    Ok(2.0 * pf + mf * mse.ln() + 2.0 * (pf + 1.0) * (pf + 2.0) / (mf - pf - 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateModel {
    pub tolerance: f64,
    pub exprs: Vec<Expr>,
    pub p: usize,
    pub mse: f64,
    /// `None` for discarded candidates and exact fits.
    pub aic: Option<f64>,
    /// Zero residual; ranks below every finite score.
    pub degenerate: bool,
    pub discarded_reason: Option<String>,
}

impl CandidateModel {
    pub fn is_discarded(&self) -> bool {
        self.discarded_reason.is_some()
    }

    /// AIC with exact fits mapped to `-inf`.
    pub fn score(&self) -> Option<f64> {
        if self.is_discarded() {
            None
        } else if self.degenerate {
            Some(f64::NEG_INFINITY)
        } else {
            self.aic
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// One entry per grid tolerance, in grid order.
    pub candidates: Vec<CandidateModel>,
    pub winner: usize,
}

impl Selection {
    pub fn best(&self) -> &CandidateModel {
        &self.candidates[self.winner]
    }
}

/// Mean over rows of the squared residual norm.
pub fn model_mse(model: &[Expr], x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let p = evaluate_all(model, xi)?;
        total += p.iter().zip(yi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / x.len() as f64)
}

fn candidate(
    exprs: &[Expr],
    tol: f64,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    table: &ConstantTable,
) -> CandidateModel {
    let rounded: Vec<Expr> = exprs.iter().map(|e| round_coefficients(e, tol, table)).collect();
    let p = rounded.iter().map(count_parameters).sum();
    let mut c = CandidateModel {
        tolerance: tol,
        exprs: rounded,
        p,
        mse: f64::NAN,
        aic: None,
        degenerate: false,
        discarded_reason: None,
    };
    match model_mse(&c.exprs, x, y) {
        Ok(mse) => c.mse = mse,
        Err(e) => {
            c.discarded_reason = Some(e.to_string());
            return c;
        }
    }
    if !c.mse.is_finite() {
        c.discarded_reason = Some(format!("non-finite mse {}", c.mse));
        return c;
    }
    match aic_score(p, c.mse, x.len()) {
        Ok(a) => c.aic = Some(a),
        Err(Error::DegenerateFit(_)) => c.degenerate = true,
        Err(e) => c.discarded_reason = Some(e.to_string()),
    }
    c
}

/// Rounds `exprs` at every grid tolerance, scores each rounded model on
/// `(x, y)` and returns the lowest score. Ties go to the larger tolerance,
/// then to fewer parameters.
pub fn select_model(
    exprs: &[Expr],
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    table: &ConstantTable,
) -> Result<Selection> {
    select_over(exprs, &tolerance_grid(), x, y, table)
}

/// [`select_model`] over an explicit tolerance list.
pub fn select_over(
    exprs: &[Expr],
    tolerances: &[f64],
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    table: &ConstantTable,
) -> Result<Selection> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Invalid(format!(
            "need matching non-empty rows, got {} states and {} targets",
            x.len(),
            y.len()
        )));
    }
    let candidates: Vec<CandidateModel> = tolerances
        .par_iter()
        .map(|&t| candidate(exprs, t, x, y, table))
        .collect();
    let winner = pick(&candidates).ok_or_else(|| {
        let reasons: Vec<String> = candidates
            .iter()
            .filter_map(|c| c.discarded_reason.clone())
            .collect();
        Error::Domain(format!("every candidate was discarded: {}", reasons.join("; ")))
    })?;
    Ok(Selection { candidates, winner })
}

/// Extra candidates scored alongside the grid, e.g. alternative models.
pub fn score_model(exprs: &[Expr], x: &[Vec<f64>], y: &[Vec<f64>]) -> CandidateModel {
    let p = exprs.iter().map(count_parameters).sum();
    let mut c = CandidateModel {
        tolerance: 0.0,
        exprs: exprs.to_vec(),
        p,
        mse: f64::NAN,
        aic: None,
        degenerate: false,
        discarded_reason: None,
    };
    match model_mse(exprs, x, y) {
        Ok(mse) if mse.is_finite() => c.mse = mse,
        Ok(mse) => c.discarded_reason = Some(format!("non-finite mse {mse}")),
        Err(e) => c.discarded_reason = Some(e.to_string()),
    }
    if c.discarded_reason.is_none() {
        match aic_score(p, c.mse, x.len()) {
            Ok(a) => c.aic = Some(a),
            Err(Error::DegenerateFit(_)) => c.degenerate = true,
            Err(e) => c.discarded_reason = Some(e.to_string()),
        }
    }
    c
}

fn pick(candidates: &[CandidateModel]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(s) = c.score() else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let o = &candidates[b];
                let bs = o.score().expect("scored");
                let better = match s.partial_cmp(&bs).expect("no NaN scores") {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => {
                        c.tolerance > o.tolerance || (c.tolerance == o.tolerance && c.p < o.p)
                    }
                };
                Some(if better { i } else { b })
            }
        };
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_text;

    #[test]
    fn grid_values() {
        let g = tolerance_grid();
        assert_eq!((g[0], g[5], g[10]), (0.01, 0.1, 1.0));
        for (i, t) in g.iter().enumerate() {
            let exact = 10f64.powf(-2.0 + i as f64 / 5.0);
            assert!((t - exact).abs() / exact < 5e-3, "{t} vs {exact}");
        }
    }

    #[test]
    fn aic_examples() {
        assert_eq!(aic_score(0, 1.0, 10).unwrap(), 0.5);
        let a = aic_score(5, (-2f64).exp(), 100).unwrap();
        assert!((a - (10.0 - 200.0 + 84.0 / 93.0)).abs() < 1e-12);
        assert!((a + 189.0968).abs() < 1e-4);
        let mut prev = f64::NEG_INFINITY;
        for p in 0..20 {
            let s = aic_score(p, 0.3, 10_000).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn aic_errors() {
        assert!(matches!(
            aic_score(8, 1.0, 10),
            Err(Error::CorrectionUndefined { m: 10, p: 8 })
        ));
        assert!(matches!(aic_score(1, 0.0, 10), Err(Error::DegenerateFit(_))));
    }

    fn rows(f: impl Fn(f64) -> f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![-1.0 + i as f64 / 25.0]).collect();
        let y = x.iter().map(|r| vec![f(r[0])]).collect();
        (x, y)
    }

    #[test]
    fn exact_rational_model_wins_at_largest_tolerance() {
        let vars = vec!["x".to_string()];
        let (x, y) = rows(|v| 3.0 * v + 0.1 * (7.0 * v).sin());
        let e = vec![parse_text("3*x", &vars).unwrap()];
        let s = select_model(&e, &x, &y, &ConstantTable::default()).unwrap();
        assert!(s.candidates.iter().all(|c| c.exprs == e));
        assert_eq!(s.winner, 10);
        assert_eq!(s.best().tolerance, 1.0);
    }

    #[test]
    fn winner_has_minimal_score() {
        let vars = vec!["x".to_string()];
        let (x, y) = rows(|v| 2.0 * v * v - 0.5 + 0.01 * (13.0 * v).sin());
        let e = vec![parse_text("2.013*x^2 - 0.497 + 0.004*x", &vars).unwrap()];
        let s = select_model(&e, &x, &y, &ConstantTable::default()).unwrap();
        let best = s.best().score().unwrap();
        for c in &s.candidates {
            if let Some(a) = c.score() {
                assert!(best <= a);
            }
        }
        assert_eq!(s.best().exprs[0], parse_text("2*x^2 - 1/2", &vars).unwrap());
    }

    #[test]
    fn exact_fit_is_degenerate_and_wins() {
        let vars = vec!["x".to_string()];
        let (x, y) = rows(|v| 2.0 * v);
        let e = vec![parse_text("2.05*x", &vars).unwrap()];
        let s = select_model(&e, &x, &y, &ConstantTable::default()).unwrap();
        assert!(s.best().degenerate);
        assert_eq!(s.best().score(), Some(f64::NEG_INFINITY));
        assert!(!s.candidates[0].degenerate);
    }

    #[test]
    fn non_evaluable_candidates_are_discarded() {
        let x: Vec<Vec<f64>> = (1..=6).map(|i| vec![-0.2 * i as f64]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * r[0] + 0.01]).collect();
        // a non-integer power of a signed base fails on negative inputs
        let e = vec![Expr::pow(Expr::Var(0), 1.5)];
        let table = ConstantTable::default();
        let s = select_model(&e, &x, &y, &table).unwrap();
        assert!(s.candidates[0].discarded_reason.as_ref().unwrap().contains("negative base"));
        assert_eq!(s.candidates[0].score(), None);
        assert_eq!(s.best().exprs, vec![Expr::pow(Expr::Var(0), 2.0)]);
        let err = select_over(&e, &[0.01, 0.1], &x, &y, &table).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
