//! The stacked operator network.
//!
//! Each stack holds `L` operational layers. A layer reads the stack input
//! `z` (width `d`) and emits four signals:
//!
//! * linear: `w_lin · z`
//! * power: `Π max(|z_i|, 1e-8)^{w_pow,i}`
//! * product: `Π (σ(w_prod,i) z_i + 1 - σ(w_prod,i))`
//! * operator: `w_out · [exp(a), sin(a), sgn(a)]` with `a = w_in · z`
//!
//! A stack's output is its `4L` new signals followed by its input, so the
//! constant input `2` is always the last entry. The final dense layer maps
//! the `4LK + n + 1` signals of the last stack to the `n` outputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, DualValue, Tape, ABS_CLAMP};
use crate::error::{Error, Result};
use crate::expr::{normalize, signum0, Expr, CONSTANT_INPUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub n: usize,
    #[serde(rename = "K")]
    pub stacks: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    /// Appends time as an extra input after the states.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub time_input: bool,
}

impl NetworkShape {
    pub fn new(n: usize, stacks: usize, layers: usize) -> Result<Self> {
        let shape = Self {
            n,
            stacks,
            layers,
            time_input: false,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.stacks == 0 || self.layers == 0 {
            return Err(Error::Invalid(format!(
                "network shape needs n, K, L >= 1, got n={}, K={}, L={}",
                self.n, self.stacks, self.layers
            )));
        }
        Ok(())
    }

    /// Width of the raw input: states, optional time, constant.
    pub fn base_width(&self) -> usize {
        self.n + 1 + usize::from(self.time_input)
    }

    /// Input width of stack `k` (1-based).
    pub fn stack_input_width(&self, k: usize) -> usize {
        4 * self.layers * (k - 1) + self.base_width()
    }

    /// Number of signals feeding the dense output layer.
    pub fn output_width(&self) -> usize {
        4 * self.layers * self.stacks + self.base_width()
    }

    pub fn param_count(&self) -> usize {
        let layers: usize = (1..=self.stacks)
            .map(|k| self.layers * (4 * self.stack_input_width(k) + 3))
            .sum();
        layers + self.n * self.output_width()
    }
}

/// Closed-form trainable parameter count.
pub fn param_count(shape: &NetworkShape) -> usize {
    shape.param_count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub lin: Vec<f64>,
    pub pow: Vec<f64>,
    pub prod: Vec<f64>,
    pub ops_in: Vec<f64>,
    pub ops_out: [f64; 3],
}

impl LayerWeights {
    fn zeros(d: usize) -> Self {
        Self {
            lin: vec![0.0; d],
            pow: vec![0.0; d],
            prod: vec![0.0; d],
            ops_in: vec![0.0; d],
            ops_out: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub shape: NetworkShape,
    /// Layer `(k, l)` (0-based) is at index `k * L + l`.
    pub layers: Vec<LayerWeights>,
    /// Row-major `n × output_width`.
    pub w_out: Vec<f64>,
}

impl NetworkWeights {
    pub fn zeros(shape: NetworkShape) -> Self {
        let layers = (1..=shape.stacks)
            .flat_map(|k| {
                let d = shape.stack_input_width(k);
                (0..shape.layers).map(move |_| LayerWeights::zeros(d))
            })
            .collect();
        Self {
            shape,
            layers,
            w_out: vec![0.0; shape.n * shape.output_width()],
        }
    }

    pub fn layer(&self, k: usize, l: usize) -> &LayerWeights {
        &self.layers[k * self.shape.layers + l]
    }

    pub fn layer_mut(&mut self, k: usize, l: usize) -> &mut LayerWeights {
        &mut self.layers[k * self.shape.layers + l]
    }

    /// All parameters in canonical order: per layer `lin, pow, prod,
    /// ops_in, ops_out`, stacks then layers, followed by `W_out`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shape.param_count());
        for lw in &self.layers {
            out.extend_from_slice(&lw.lin);
            out.extend_from_slice(&lw.pow);
            out.extend_from_slice(&lw.prod);
            out.extend_from_slice(&lw.ops_in);
            out.extend_from_slice(&lw.ops_out);
        }
        out.extend_from_slice(&self.w_out);
        out
    }

    pub fn from_flat(shape: NetworkShape, flat: &[f64]) -> Result<Self> {
        if flat.len() != shape.param_count() {
            return Err(Error::Invalid(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                flat.len()
            )));
        }
        let mut w = Self::zeros(shape);
        w.set_flat(flat);
        Ok(w)
    }

    /// Overwrites all parameters from `flat` (canonical order).
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        let mut fill = |dst: &mut [f64]| {
            for x in dst {
                *x = it.next().expect("flat length checked");
            }
        };
        for lw in &mut self.layers {
            fill(&mut lw.lin);
            fill(&mut lw.pow);
            fill(&mut lw.prod);
            fill(&mut lw.ops_in);
            fill(&mut lw.ops_out);
        }
        fill(&mut self.w_out);
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// Offsets of each layer's blocks inside the flat parameter vector.
#[derive(Debug, Clone)]
pub struct FlatLayout {
    /// `(start, d)` per layer, index `k * L + l`.
    pub layers: Vec<(usize, usize)>,
    pub w_out: usize,
    pub width: usize,
}

impl FlatLayout {
    pub fn new(shape: &NetworkShape) -> Self {
        let mut layers = Vec::with_capacity(shape.stacks * shape.layers);
        let mut at = 0;
        for k in 1..=shape.stacks {
            let d = shape.stack_input_width(k);
            for _ in 0..shape.layers {
                layers.push((at, d));
                at += 4 * d + 3;
            }
        }
        Self {
            layers,
            w_out: at,
            width: shape.output_width(),
        }
    }

    pub fn lin(&self, i: usize) -> std::ops::Range<usize> {
        let (s, d) = self.layers[i];
        s..s + d
    }

    pub fn pow(&self, i: usize) -> std::ops::Range<usize> {
        let (s, d) = self.layers[i];
        s + d..s + 2 * d
    }

    pub fn prod(&self, i: usize) -> std::ops::Range<usize> {
        let (s, d) = self.layers[i];
        s + 2 * d..s + 3 * d
    }

    pub fn ops_in(&self, i: usize) -> std::ops::Range<usize> {
        let (s, d) = self.layers[i];
        s + 3 * d..s + 4 * d
    }

    pub fn ops_out(&self, i: usize) -> std::ops::Range<usize> {
        let (s, d) = self.layers[i];
        s + 4 * d..s + 4 * d + 3
    }

    pub fn out_row(&self, r: usize) -> std::ops::Range<usize> {
        let s = self.w_out + r * self.width;
        s..s + self.width
    }
}

/// Per-sublayer normal initializers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub lin_std: f64,
    /// Divided by the number of stacks.
    pub pow_std: f64,
    pub prod_mean: f64,
    /// Divided by the number of stacks.
    pub prod_std: f64,
    /// Divided by the 1-based stack index.
    pub ops_std: f64,
    pub out_std: f64,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            lin_std: 0.1,
            pow_std: 0.1,
            prod_mean: -1.0,
            prod_std: 0.5,
            ops_std: 0.1,
            out_std: 0.1,
            seed: 0,
        }
    }
}

impl InitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("positive finite std")
}

pub fn init_weights(shape: &NetworkShape, spec: &InitSpec) -> NetworkWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kk = shape.stacks as f64;
    let mut w = NetworkWeights::zeros(*shape);
    let lin = normal(0.0, spec.lin_std);
    let pow = normal(0.0, spec.pow_std / kk);
    let prod = normal(spec.prod_mean, spec.prod_std / kk);
    for k in 0..shape.stacks {
        let ops = normal(0.0, spec.ops_std / (k + 1) as f64);
        for l in 0..shape.layers {
            let lw = w.layer_mut(k, l);
            lw.lin.iter_mut().for_each(|x| *x = lin.sample(&mut rng));
            lw.pow.iter_mut().for_each(|x| *x = pow.sample(&mut rng));
            lw.prod.iter_mut().for_each(|x| *x = prod.sample(&mut rng));
            lw.ops_in.iter_mut().for_each(|x| *x = ops.sample(&mut rng));
            lw.ops_out.iter_mut().for_each(|x| *x = ops.sample(&mut rng));
        }
    }
    let out = normal(0.0, spec.out_std);
    w.w_out.iter_mut().for_each(|x| *x = out.sample(&mut rng));
    w
}

fn input_row(shape: &NetworkShape, x: &[f64], t: Option<f64>) -> Vec<f64> {
    let mut row = Vec::with_capacity(shape.base_width());
    row.extend_from_slice(x);
    if shape.time_input {
        row.push(t.unwrap_or(0.0));
    }
    row.push(CONSTANT_INPUT);
    row
}

/// Parameters of one network registered on a tape.
pub struct TapeWeights {
    pub params: Vec<DualValue>,
    /// `σ(w)` for product weights, indexed like `params` (other slots are
    /// unused copies).
    gates: Vec<DualValue>,
    layout: FlatLayout,
    shape: NetworkShape,
}

impl TapeWeights {
    /// Registers every weight as a tape parameter in canonical order.
    pub fn register(tape: &mut Tape, weights: &NetworkWeights) -> Self {
        let layout = FlatLayout::new(&weights.shape);
        let params: Vec<DualValue> = weights.to_flat().into_iter().map(|v| tape.param(v)).collect();
        let mut gates = params.clone();
        for i in 0..layout.layers.len() {
            for j in layout.prod(i) {
                gates[j] = tape.sigmoid(params[j]);
            }
        }
        Self {
            params,
            gates,
            layout,
            shape: weights.shape,
        }
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn layout(&self) -> &FlatLayout {
        &self.layout
    }

    /// Records the network output at state `x` (and time `t` when enabled).
    pub fn forward(&self, tape: &mut Tape, x: &[f64], t: Option<f64>) -> Vec<DualValue> {
        let shape = &self.shape;
        let w = &self.params;
        let mut z: Vec<DualValue> = input_row(shape, x, t)
            .into_iter()
            .map(|v| tape.constant(v))
            .collect();
        let mut gates = Vec::new();
        for k in 0..shape.stacks {
            let d = z.len();
            debug_assert_eq!(d, shape.stack_input_width(k + 1));
            let lnz: Vec<DualValue> = z.iter().map(|&zi| tape.ln_abs(zi)).collect();
            let mut next = Vec::with_capacity(4 * shape.layers + d);
            for l in 0..shape.layers {
                let i = k * shape.layers + l;
                let lin = tape.dot_vars(&w[self.layout.lin(i)], &z);
                let s = tape.dot_vars(&w[self.layout.pow(i)], &lnz);
                let pow = tape.exp(s);
                gates.clear();
                for (j, &zj) in self.layout.prod(i).zip(&z) {
                    gates.push(tape.gate(self.gates[j], zj));
                }
                let prod = tape.product(&gates);
                let a = tape.dot_vars(&w[self.layout.ops_in(i)], &z);
                let basis = [tape.exp(a), tape.sin(a), tape.sgn(a)];
                let ops = tape.dot_vars(&w[self.layout.ops_out(i)], &basis);
                next.extend([lin, pow, prod, ops]);
            }
            next.extend_from_slice(&z);
            z = next;
        }
        (0..shape.n)
            .map(|r| tape.dot_vars(&w[self.layout.out_row(r)], &z))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Plain evaluation of the network (no tape).
pub fn forward(weights: &NetworkWeights, x: &[f64], t: Option<f64>) -> Result<Vec<f64>> {
    let shape = &weights.shape;
    if x.len() != shape.n {
        return Err(Error::Invalid(format!(
            "state has {} entries, network expects {}",
            x.len(),
            shape.n
        )));
    }
    let mut z = input_row(shape, x, t);
    for k in 0..shape.stacks {
        let d = z.len();
        debug_assert_eq!(d, shape.stack_input_width(k + 1));
        let lnz: Vec<f64> = z.iter().map(|v| v.abs().max(ABS_CLAMP).ln()).collect();
        let mut next = Vec::with_capacity(4 * shape.layers + d);
        for l in 0..shape.layers {
            let lw = weights.layer(k, l);
            let lin = dot(&lw.lin, &z);
            let pow = dot(&lw.pow, &lnz).exp();
            let prod: f64 = lw
                .prod
                .iter()
                .zip(&z)
                .map(|(&w, &zi)| {
                    let s = sigmoid(w);
                    s * zi + (1.0 - s)
                })
                .product();
            let a = dot(&lw.ops_in, &z);
            let ops = dot(&lw.ops_out, &[a.exp(), a.sin(), signum0(a)]);
            next.extend([lin, pow, prod, ops]);
        }
        next.extend_from_slice(&z);
        z = next;
    }
    let width = shape.output_width();
    let out: Vec<f64> = weights
        .w_out
        .chunks(width)
        .map(|row| dot(row, &z))
        .collect();
    if let Some(v) = out.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("network output {v}")));
    }
    Ok(out)
}

fn weighted_sum(ws: &[f64], zs: &[Expr]) -> Expr {
    Expr::Sum(
        ws.iter()
            .zip(zs)
            .map(|(&w, z)| Expr::scaled(w, z.clone()))
            .collect(),
    )
}

/// Converts trained weights into one normalized expression per output.
///
/// States are `Var(0..n)`; with a time input, time is `Var(n)`. The constant
/// input appears as `Const(2)`.
pub fn extract_expression(weights: &NetworkWeights) -> Vec<Expr> {
    let shape = &weights.shape;
    let mut z: Vec<Expr> = (0..shape.n).map(Expr::Var).collect();
    if shape.time_input {
        z.push(Expr::Var(shape.n));
    }
    z.push(Expr::Const(CONSTANT_INPUT));
    for k in 0..shape.stacks {
        let mut next = Vec::with_capacity(4 * shape.layers + z.len());
        for l in 0..shape.layers {
            let lw = weights.layer(k, l);
            let lin = weighted_sum(&lw.lin, &z);
            let pow = Expr::Prod(
                lw.pow
                    .iter()
                    .zip(&z)
                    .map(|(&w, zi)| Expr::pow(Expr::abs(zi.clone()), w))
                    .collect(),
            );
            let prod = Expr::Prod(
                lw.prod
                    .iter()
                    .zip(&z)
                    .map(|(&w, zi)| {
                        let s = sigmoid(w);
                        Expr::Sum(vec![Expr::scaled(s, zi.clone()), Expr::Const(1.0 - s)])
                    })
                    .collect(),
            );
            let a = weighted_sum(&lw.ops_in, &z);
            let ops = Expr::Sum(vec![
                Expr::scaled(lw.ops_out[0], Expr::exp(a.clone())),
                Expr::scaled(lw.ops_out[1], Expr::sin(a.clone())),
                Expr::scaled(lw.ops_out[2], Expr::sgn(a)),
            ]);
            next.extend([lin, pow, prod, ops].iter().map(normalize));
        }
        next.extend(z);
        z = next;
    }
    weights
        .w_out
        .chunks(shape.output_width())
        .map(|row| normalize(&weighted_sum(row, &z)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::evaluate;

    #[test]
    fn counts_match_closed_form() {
        assert_eq!(NetworkShape::new(2, 1, 10).unwrap().param_count(), 236);
        assert_eq!(NetworkShape::new(3, 1, 10).unwrap().param_count(), 322);
        assert_eq!(NetworkShape::new(2, 2, 1).unwrap().param_count(), 68);
    }

    #[test]
    fn flat_round_trip() {
        let shape = NetworkShape::new(2, 2, 2).unwrap();
        let w = init_weights(&shape, &InitSpec::with_seed(3));
        let flat = w.to_flat();
        assert_eq!(flat.len(), shape.param_count());
        assert_eq!(NetworkWeights::from_flat(shape, &flat).unwrap(), w);
    }

    #[test]
    fn init_is_deterministic() {
        let shape = NetworkShape::new(3, 1, 10).unwrap();
        let a = init_weights(&shape, &InitSpec::with_seed(11));
        let b = init_weights(&shape, &InitSpec::with_seed(11));
        assert_eq!(a.to_flat(), b.to_flat());
        let c = init_weights(&shape, &InitSpec::with_seed(12));
        assert_ne!(a.to_flat(), c.to_flat());
    }

    #[test]
    fn prod_init_mean() {
        let shape = NetworkShape::new(99, 1, 100).unwrap();
        let w = init_weights(&shape, &InitSpec::with_seed(5));
        let draws: Vec<f64> = w.layers.iter().flat_map(|l| l.prod.clone()).collect();
        assert!(draws.len() >= 10_000);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((-1.05..=-0.95).contains(&mean), "mean {mean}");
    }

    #[test]
    fn saturated_products_give_zero_output() {
        let shape = NetworkShape::new(2, 1, 1).unwrap();
        let mut w = NetworkWeights::zeros(shape);
        w.layer_mut(0, 0).prod = vec![-40.0; 3];
        let y = forward(&w, &[0.7, -1.3], None).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn crafted_square_layer() {
        // pow picks |x2|^2, W_out row 0 reads the pow signal
        let shape = NetworkShape::new(2, 1, 1).unwrap();
        let mut w = NetworkWeights::zeros(shape);
        w.layer_mut(0, 0).pow = vec![0.0, 2.0, 0.0];
        w.layer_mut(0, 0).prod = vec![30.0, 30.0, -30.0];
        w.w_out[1] = 1.0;
        let y = forward(&w, &[1.0, 3.0], None).unwrap();
        assert!((y[0] - 9.0).abs() < 1e-12);
        let e = extract_expression(&w);
        assert_eq!(e[0], Expr::pow(Expr::Var(1), 2.0));
        assert_eq!(e[1], Expr::Const(0.0));
    }

    #[test]
    fn simple_product_gate() {
        let shape = NetworkShape::new(2, 1, 1).unwrap();
        let mut w = NetworkWeights::zeros(shape);
        w.w_out[2] = 1.0;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let gates = [1.5, 2.1, -0.99];
        w.layer_mut(0, 0).prod = gates.to_vec();
        for (x1, x2) in [(0.5, 0.5), (0.9, 0.8), (0.3, 0.9), (1.0, 1.0)] {
            let y = forward(&w, &[x1, x2], None).unwrap()[0];
            let expect: f64 = [x1, x2, 2.0]
                .iter()
                .zip(gates)
                .map(|(z, g)| sig(g) * z + 1.0 - sig(g))
                .product();
            assert!((y - expect).abs() < 1e-14);
        }
        // with the gates pushed to saturation the product is exactly x1*x2
        w.layer_mut(0, 0).prod = vec![40.0, 40.0, -40.0];
        for (x1, x2) in [(0.5, 0.5), (0.9, 0.8), (0.3, 0.9), (1.0, 1.0)] {
            let y = forward(&w, &[x1, x2], None).unwrap()[0];
            assert!((y - x1 * x2).abs() < 1e-12, "{x1} {x2}: {y}");
        }
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let shape = NetworkShape::new(2, 2, 2).unwrap();
        let w = init_weights(&shape, &InitSpec::with_seed(1));
        let mut tape = Tape::new();
        let reg = TapeWeights::register(&mut tape, &w);
        let x = [0.4, -1.7];
        let a: Vec<f64> = reg.forward(&mut tape, &x, None).iter().map(|d| d.value()).collect();
        let b = forward(&w, &x, None).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-14 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn extraction_matches_forward() {
        let shape = NetworkShape::new(3, 1, 3).unwrap();
        let w = init_weights(&shape, &InitSpec::with_seed(9));
        let e = extract_expression(&w);
        for x in [[0.3, -0.8, 1.9], [-2.0, 0.5, 0.1]] {
            let f = forward(&w, &x, None).unwrap();
            for (ei, fi) in e.iter().zip(&f) {
                let v = evaluate(ei, &x).unwrap();
                assert!((v - fi).abs() <= 1e-8 * (1.0 + fi.abs()));
            }
        }
    }

    #[test]
    fn time_input_widens_layers() {
        let shape = NetworkShape {
            n: 2,
            stacks: 1,
            layers: 1,
            time_input: true,
        };
        assert_eq!(shape.output_width(), 8);
        let w = init_weights(&shape, &InitSpec::with_seed(2));
        let f = forward(&w, &[0.5, 0.5], Some(1.5)).unwrap();
        let e = extract_expression(&w);
        let v = evaluate(&e[0], &[0.5, 0.5, 1.5]).unwrap();
        assert!((v - f[0]).abs() < 1e-10);
    }
}
