//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] is a flat Wengert list. Each node stores its value and the
//! local partial derivatives with respect to its inputs; edges into nodes
//! that do not depend on a registered parameter are never stored, so data
//! constants cost nothing in the backward sweep.

use crate::error::{Error, Result};

/// Lower bound applied to `|z|` before taking logarithms or powers.
pub const ABS_CLAMP: f64 = 1e-8;

/// A value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualValue {
    id: u32,
    value: f64,
}

impl DualValue {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn id(self) -> usize {
        self.id as usize
    }
}

/// Operations accepted by [`Tape::record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Neg,
    Sigmoid,
    Sin,
    Cos,
    Exp,
    Abs,
    Sgn,
    Ln,
    /// `|z|^w` with both operands variable: inputs `[z, w]`.
    PowVW,
    /// Inputs `[a_1..a_k, b_1..b_k]`, value `Σ a_i b_i`.
    Dot,
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<f64>,
    active: Vec<bool>,
    /// Edges of node `i` are `edge_end[i-1]..edge_end[i]`.
    edge_end: Vec<u32>,
    edge_input: Vec<u32>,
    edge_partial: Vec<f64>,
    params: Vec<u32>,
    non_finite: Option<String>,
    adjoint: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sgn(x: f64) -> f64 {
    crate::expr::signum0(x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all nodes and parameters, keeping allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.active.clear();
        self.edge_end.clear();
        self.edge_input.clear();
        self.edge_partial.clear();
        self.params.clear();
        self.non_finite = None;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Registers a trainable leaf. Gradients are returned in registration
    /// order.
    pub fn param(&mut self, value: f64) -> DualValue {
        let v = self.node(value, true);
        self.params.push(v.id);
        v
    }

    /// A leaf that carries no gradient.
    pub fn constant(&mut self, value: f64) -> DualValue {
        self.node(value, false)
    }

    fn node(&mut self, value: f64, active: bool) -> DualValue {
        let id = self.values.len() as u32;
        if !value.is_finite() && self.non_finite.is_none() {
            self.non_finite = Some(format!("node {id} has value {value}"));
        }
        self.values.push(value);
        self.active.push(active);
        self.edge_end.push(self.edge_input.len() as u32);
        DualValue { id, value }
    }

    #[inline]
    fn edge(&mut self, input: DualValue, partial: f64) {
        if self.active[input.id as usize] {
            if !partial.is_finite() && self.non_finite.is_none() {
                self.non_finite = Some(format!("partial into node {} is {partial}", input.id));
            }
            self.edge_input.push(input.id);
            self.edge_partial.push(partial);
        }
    }

    /// Closes the node opened by the preceding `edge` calls.
    #[inline]
    fn finish(&mut self, value: f64) -> DualValue {
        let id = self.values.len() as u32;
        let end = self.edge_input.len() as u32;
        let start = self.edge_end.last().copied().unwrap_or(0);
        if !value.is_finite() && self.non_finite.is_none() {
            self.non_finite = Some(format!("node {id} has value {value}"));
        }
        self.values.push(value);
        self.active.push(end > start);
        self.edge_end.push(end);
        DualValue { id, value }
    }

    /// Fails if any value or partial recorded so far was non-finite.
    pub fn check(&self) -> Result<()> {
        match &self.non_finite {
            None => Ok(()),
            Some(msg) => Err(Error::NonFinite(msg.clone())),
        }
    }

    /// Records `op` applied to `inputs`, failing on non-finite results.
    pub fn record(&mut self, op: Op, inputs: &[DualValue]) -> Result<DualValue> {
        let arity = match op {
            Op::Add | Op::Sub | Op::Mul | Op::PowVW => Some(2),
            Op::Dot => None,
            _ => Some(1),
        };
        if let Some(a) = arity {
            if inputs.len() != a {
                return Err(Error::Invalid(format!(
                    "{op:?} takes {a} inputs, got {}",
                    inputs.len()
                )));
            }
        } else if inputs.len() % 2 != 0 {
            return Err(Error::Invalid("dot takes an even number of inputs".into()));
        }
        let out = match op {
            Op::Add => self.add(inputs[0], inputs[1]),
            Op::Sub => self.sub(inputs[0], inputs[1]),
            Op::Mul => self.mul(inputs[0], inputs[1]),
            Op::Neg => self.neg(inputs[0]),
            Op::Sigmoid => self.sigmoid(inputs[0]),
            Op::Sin => self.sin(inputs[0]),
            Op::Cos => self.cos(inputs[0]),
            Op::Exp => self.exp(inputs[0]),
            Op::Abs => self.abs(inputs[0]),
            Op::Sgn => self.sgn(inputs[0]),
            Op::Ln => self.ln(inputs[0]),
            Op::PowVW => self.pow_vw(inputs[0], inputs[1]),
            Op::Dot => {
                let (a, b) = inputs.split_at(inputs.len() / 2);
                self.dot_vars(a, b)
            }
        };
        if !out.value.is_finite() {
            return Err(Error::NonFinite(format!("{op:?} produced {}", out.value)));
        }
        let id = out.id as usize;
        let start = if id == 0 { 0 } else { self.edge_end[id - 1] as usize };
        let end = self.edge_end[id] as usize;
        // a partial may be non-finite even when the value is not
        if let Some(p) = self.edge_partial[start..end].iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("{op:?} partial {p}")));
        }
        Ok(out)
    }

    pub fn add(&mut self, a: DualValue, b: DualValue) -> DualValue {
        self.edge(a, 1.0);
        self.edge(b, 1.0);
        self.finish(a.value + b.value)
    }

    pub fn sub(&mut self, a: DualValue, b: DualValue) -> DualValue {
        self.edge(a, 1.0);
        self.edge(b, -1.0);
        self.finish(a.value - b.value)
    }

    pub fn mul(&mut self, a: DualValue, b: DualValue) -> DualValue {
        self.edge(a, b.value);
        self.edge(b, a.value);
        self.finish(a.value * b.value)
    }

    pub fn neg(&mut self, a: DualValue) -> DualValue {
        self.edge(a, -1.0);
        self.finish(-a.value)
    }

    /// `c * a` for a plain constant `c`.
    pub fn scale(&mut self, a: DualValue, c: f64) -> DualValue {
        self.edge(a, c);
        self.finish(c * a.value)
    }

    pub fn sigmoid(&mut self, a: DualValue) -> DualValue {
        let s = sigmoid(a.value);
        self.edge(a, s * (1.0 - s));
        self.finish(s)
    }

    pub fn sin(&mut self, a: DualValue) -> DualValue {
        self.edge(a, a.value.cos());
        self.finish(a.value.sin())
    }

    pub fn cos(&mut self, a: DualValue) -> DualValue {
        self.edge(a, -a.value.sin());
        self.finish(a.value.cos())
    }

    pub fn exp(&mut self, a: DualValue) -> DualValue {
        let e = a.value.exp();
        self.edge(a, e);
        self.finish(e)
    }

    /// `|a|` with subgradient `sgn(a)`, zero at zero.
    pub fn abs(&mut self, a: DualValue) -> DualValue {
        self.edge(a, sgn(a.value));
        self.finish(a.value.abs())
    }

    /// Sign function; its derivative is taken as zero everywhere.
    pub fn sgn(&mut self, a: DualValue) -> DualValue {
        self.finish(sgn(a.value))
    }

    pub fn ln(&mut self, a: DualValue) -> DualValue {
        self.edge(a, 1.0 / a.value);
        self.finish(a.value.ln())
    }

    /// `ln(max(|a|, ABS_CLAMP))`.
    pub fn ln_abs(&mut self, a: DualValue) -> DualValue {
        let c = a.value.abs().max(ABS_CLAMP);
        self.edge(a, sgn(a.value) / c);
        self.finish(c.ln())
    }

    /// `max(|z|, ABS_CLAMP)^w`.
    pub fn pow_vw(&mut self, z: DualValue, w: DualValue) -> DualValue {
        let c = z.value.abs().max(ABS_CLAMP);
        let v = c.powf(w.value);
        self.edge(z, w.value * c.powf(w.value - 1.0) * sgn(z.value));
        self.edge(w, v * c.ln());
        self.finish(v)
    }

    /// `sqrt(|a|)` with subgradient zero at zero.
    pub fn sqrt_abs(&mut self, a: DualValue) -> DualValue {
        let r = a.value.abs().sqrt();
        let d = if r > 0.0 { sgn(a.value) / (2.0 * r) } else { 0.0 };
        self.edge(a, d);
        self.finish(r)
    }

    /// `s * z + (1 - s)`.
    pub fn gate(&mut self, s: DualValue, z: DualValue) -> DualValue {
        self.edge(s, z.value - 1.0);
        self.edge(z, s.value);
        self.finish(s.value * z.value + (1.0 - s.value))
    }

    pub fn sum(&mut self, xs: &[DualValue]) -> DualValue {
        let mut acc = 0.0;
        for x in xs {
            self.edge(*x, 1.0);
            acc += x.value;
        }
        self.finish(acc)
    }

    pub fn product(&mut self, xs: &[DualValue]) -> DualValue {
        // prefix/suffix products keep the partials exact when a factor is 0
        let n = xs.len();
        let mut suffix = vec![1.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * xs[i].value;
        }
        let mut prefix = 1.0;
        for (i, x) in xs.iter().enumerate() {
            self.edge(*x, prefix * suffix[i + 1]);
            prefix *= x.value;
        }
        self.finish(suffix[0])
    }

    /// `Σ w_i z_i` over tape values.
    pub fn dot_vars(&mut self, w: &[DualValue], z: &[DualValue]) -> DualValue {
        debug_assert_eq!(w.len(), z.len());
        let mut acc = 0.0;
        for (a, b) in w.iter().zip(z) {
            self.edge(*a, b.value);
            self.edge(*b, a.value);
            acc += a.value * b.value;
        }
        self.finish(acc)
    }

    /// `Σ w_i c_i` with plain constants `c`.
    pub fn dot_const(&mut self, w: &[DualValue], c: &[f64]) -> DualValue {
        debug_assert_eq!(w.len(), c.len());
        let mut acc = 0.0;
        for (a, b) in w.iter().zip(c) {
            self.edge(*a, *b);
            acc += a.value * b;
        }
        self.finish(acc)
    }

    /// Gradient of `output` with respect to every registered parameter.
    pub fn backward(&mut self, output: DualValue) -> Result<Vec<f64>> {
        let out = output.id as usize;
        let mut adj = std::mem::take(&mut self.adjoint);
        adj.clear();
        adj.resize(out + 1, 0.0);
        adj[out] = 1.0;
        for i in (0..=out).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { self.edge_end[i - 1] as usize };
            let end = self.edge_end[i] as usize;
            for e in start..end {
                adj[self.edge_input[e] as usize] += a * self.edge_partial[e];
            }
        }
        let grads: Vec<f64> = self
            .params
            .iter()
            .map(|&p| if (p as usize) <= out { adj[p as usize] } else { 0.0 })
            .collect();
        self.adjoint = adj;
        if let Some(g) = grads.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {g}")));
        }
        Ok(grads)
    }
}
