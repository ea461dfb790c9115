//! Training objective: empirical error plus sparsity regularization.

use serde::{Deserialize, Serialize};

use crate::autodiff::{DualValue, Tape};
use crate::network::{FlatLayout, NetworkWeights, TapeWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Mae,
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    /// `L½` on linear weights, `L_poly` on power weights, `L_ops` on operator
    /// weights.
    Custom,
    /// `λ Σ |w|` over every weight.
    L1,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub error: ErrorKind,
    pub reg: RegKind,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub lambda: f64,
    /// Also apply `α₁ L½` to the dense output layer in custom mode. Off by default.
    pub out_l_half: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::custom()
    }
}

impl LossConfig {
    /// MAE with the custom regularizers.
    pub fn custom() -> Self {
        Self {
            error: ErrorKind::Mae,
            reg: RegKind::Custom,
            alpha1: 0.05,
            alpha2: 0.01,
            alpha3: 0.0375,
            lambda: 0.01,
            out_l_half: false,
        }
    }

    /// MSE with plain L1 regularization.
    pub fn l1_mse() -> Self {
        Self {
            error: ErrorKind::Mse,
            reg: RegKind::L1,
            ..Self::custom()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("lambda", self.lambda),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(crate::Error::Invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Mean over samples of the 1-norm (MAE) or squared 2-norm (MSE) of the
/// residual rows.
pub fn empirical_error(pred: &[Vec<f64>], target: &[Vec<f64>], kind: ErrorKind) -> f64 {
    assert_eq!(pred.len(), target.len(), "row counts differ");
    let m = pred.len() as f64;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| residual_norm(p, t, kind))
        .sum();
    total / m
}

fn residual_norm(p: &[f64], t: &[f64], kind: ErrorKind) -> f64 {
    p.iter()
        .zip(t)
        .map(|(a, b)| match kind {
            ErrorKind::Mae => (a - b).abs(),
            ErrorKind::Mse => (a - b) * (a - b),
        })
        .sum()
}

pub fn reg_l_half(w: &[f64], alpha1: f64) -> f64 {
    alpha1 * w.iter().map(|x| x.abs().sqrt()).sum::<f64>()
}

/// `α₂ 1.1^(Σ_{i<last} |w_i| + w_last)`; the last entry multiplies the
/// constant input.
pub fn reg_l_poly(w: &[f64], alpha2: f64) -> f64 {
    let (last, rest) = w.split_last().expect("non-empty weight vector");
    let s: f64 = rest.iter().map(|x| x.abs()).sum::<f64>() + last;
    alpha2 * 1.1f64.powf(s)
}

pub fn reg_l_ops(w_in: &[f64], w_out: &[f64], alpha3: f64) -> f64 {
    alpha3
        * w_in
            .iter()
            .chain(w_out)
            .map(|x| x.abs().sqrt())
            .sum::<f64>()
}

/// Regularization term of the total loss.
pub fn regularization(weights: &NetworkWeights, cfg: &LossConfig) -> f64 {
    match cfg.reg {
        RegKind::None => 0.0,
        RegKind::L1 => cfg.lambda * weights.to_flat().iter().map(|x| x.abs()).sum::<f64>(),
        RegKind::Custom => {
            let mut r = 0.0;
            for lw in &weights.layers {
                r += reg_l_half(&lw.lin, cfg.alpha1);
                r += reg_l_poly(&lw.pow, cfg.alpha2);
                r += reg_l_ops(&lw.ops_in, &lw.ops_out, cfg.alpha3);
            }
            if cfg.out_l_half {
                r += reg_l_half(&weights.w_out, cfg.alpha1);
            }
            r
        }
    }
}

/// Plain total loss of `weights` on the rows `x` with targets `y`.
pub fn total_loss(
    weights: &NetworkWeights,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    cfg: &LossConfig,
) -> crate::Result<f64> {
    let pred = x
        .iter()
        .map(|row| crate::network::forward(weights, row, None))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(empirical_error(&pred, y, cfg.error) + regularization(weights, cfg))
}

/// Records the batch error of `pred` against `target` rows.
pub fn tape_error(
    tape: &mut Tape,
    pred: &[Vec<DualValue>],
    target: &[&[f64]],
    kind: ErrorKind,
) -> DualValue {
    let mut terms = Vec::with_capacity(pred.len() * pred.first().map_or(0, Vec::len));
    for (p, t) in pred.iter().zip(target) {
        for (&pi, &ti) in p.iter().zip(t.iter()) {
            let c = tape.constant(ti);
            let r = tape.sub(pi, c);
            terms.push(match kind {
                ErrorKind::Mae => tape.abs(r),
                ErrorKind::Mse => tape.mul(r, r),
            });
        }
    }
    let s = tape.sum(&terms);
    tape.scale(s, 1.0 / pred.len() as f64)
}

fn tape_l_half(tape: &mut Tape, w: &[DualValue], alpha: f64, acc: &mut Vec<DualValue>) {
    let roots: Vec<DualValue> = w.iter().map(|&x| tape.sqrt_abs(x)).collect();
    let s = tape.sum(&roots);
    acc.push(tape.scale(s, alpha));
}

/// Records the regularization term for registered weights.
pub fn tape_regularization(tape: &mut Tape, reg: &TapeWeights, cfg: &LossConfig) -> DualValue {
    let w = &reg.params;
    let layout: &FlatLayout = reg.layout();
    let mut parts = Vec::new();
    match cfg.reg {
        RegKind::None => {}
        RegKind::L1 => {
            let abs: Vec<DualValue> = w.iter().map(|&x| tape.abs(x)).collect();
            let s = tape.sum(&abs);
            parts.push(tape.scale(s, cfg.lambda));
        }
        RegKind::Custom => {
            let ln11 = 1.1f64.ln();
            for i in 0..layout.layers.len() {
                tape_l_half(tape, &w[layout.lin(i)], cfg.alpha1, &mut parts);

                let pw = &w[layout.pow(i)];
                let (last, rest) = pw.split_last().expect("non-empty layer");
                let mut e: Vec<DualValue> = rest.iter().map(|&x| tape.abs(x)).collect();
                e.push(*last);
                let s = tape.sum(&e);
                let s = tape.scale(s, ln11);
                let p = tape.exp(s);
                parts.push(tape.scale(p, cfg.alpha2));

                let ops: Vec<DualValue> = w[layout.ops_in(i)]
                    .iter()
                    .chain(&w[layout.ops_out(i)])
                    .copied()
                    .collect();
                tape_l_half(tape, &ops, cfg.alpha3, &mut parts);
            }
            if cfg.out_l_half {
                tape_l_half(tape, &w[layout.w_out..], cfg.alpha1, &mut parts);
            }
        }
    }
    tape.sum(&parts)
}
