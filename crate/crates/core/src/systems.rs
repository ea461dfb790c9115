//! Benchmark dynamical systems, trajectory sampling and noisy datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{evaluate_all, parse_text, Expr};

/// RK4 substeps between stored samples.
pub const SUBSTEPS: usize = 10;

const STREAM_INITIAL: u64 = 0;
const STREAM_STATE_NOISE: u64 = 1;
const STREAM_DERIVATIVE_NOISE: u64 = 2;

/// Trajectory count, samples per trajectory and trajectory duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub trajectories: usize,
    pub points: usize,
    pub horizon: f64,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.trajectories * self.points
    }

    pub fn sample_dt(&self) -> f64 {
        self.horizon / self.points as f64
    }
}

type ClosedForm = fn(&[f64]) -> Vec<f64>;

#[derive(Debug, Clone)]
pub struct SystemDef {
    pub name: String,
    pub var_names: Vec<String>,
    pub rhs: Vec<Expr>,
    /// Hand-coded right-hand side, used for integration when present.
    pub closed_form: Option<ClosedForm>,
    /// Half-open sampling interval per state for initial conditions.
    pub ic_box: Vec<(f64, f64)>,
    /// Integration time discarded before sampling starts.
    pub burn_in: f64,
    pub layout: Layout,
    /// Layout of the large reference set used for noise-floor estimates.
    pub large_layout: Layout,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl SystemDef {
    pub fn n(&self) -> usize {
        self.var_names.len()
    }

    pub fn rhs_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.closed_form {
            Some(f) => {
                let d = f(x);
                if d.iter().all(|v| v.is_finite()) {
                    Ok(d)
                } else {
                    Err(Error::NonFinite(format!("{} rhs at {x:?}", self.name)))
                }
            }
            None => evaluate_all(&self.rhs, x),
        }
    }

    /// Builds a system from expression texts, checking that the right-hand
    /// side is evaluable on the sampling box corners and centre.
    pub fn from_texts(
        name: &str,
        var_names: &[&str],
        rhs: &[&str],
        ic_box: Vec<(f64, f64)>,
        layout: Layout,
    ) -> Result<Self> {
        let vars: Vec<String> = var_names.iter().map(|s| s.to_string()).collect();
        if rhs.len() != vars.len() {
            return Err(Error::Invalid(format!(
                "{name}: {} equations for {} variables",
                rhs.len(),
                vars.len()
            )));
        }
        if ic_box.len() != vars.len() {
            return Err(Error::Invalid(format!(
                "{name}: sampling box has {} intervals for {} variables",
                ic_box.len(),
                vars.len()
            )));
        }
        let rhs = rhs
            .iter()
            .map(|s| parse_text(s, &vars))
            .collect::<Result<Vec<_>>>()?;
        let def = Self {
            name: name.to_string(),
            var_names: vars,
            rhs,
            closed_form: None,
            ic_box,
            burn_in: 0.0,
            layout,
            large_layout: Layout {
                trajectories: 1000,
                points: 100,
                horizon: layout.horizon,
            },
            sigma1: 0.01,
            sigma2: 0.01,
        };
        let centre: Vec<f64> = def.ic_box.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        evaluate_all(&def.rhs, &centre)?;
        Ok(def)
    }
}

fn names(ns: &[&str]) -> Vec<String> {
    ns.iter().map(|s| s.to_string()).collect()
}

fn parse_all(texts: &[&str], vars: &[String]) -> Vec<Expr> {
    texts
        .iter()
        .map(|s| parse_text(s, vars).expect("built-in fixture parses"))
        .collect()
}

/// Expression fixtures for the built-in systems.
pub const FIXTURES: [(&str, &[&str], &[&str]); 7] = [
    ("takens_bogdanov", &["x", "y"], &["y", "-4.41 + 1.5*y + x^2 + x*y"]),
    ("pendulum", &["x", "y"], &["y", "-4.905*sin(x)"]),
    ("rossler", &["x", "y", "z"], &["-y - z", "x + 0.5*y", "2 + z*(x - 4)"]),
    ("lorenz", &["x", "y", "z"], &["10*(y - x)", "x*(28 - z) - y", "x*y - 8*z/3"]),
    (
        "fitzhugh_nagumo",
        &["v", "w"],
        &["v - v^3/3 - w + 0.328", "0.08*(v - 0.8*w + 0.7)"],
    ),
    (
        "chemical_kinetics",
        &["alpha", "theta"],
        &["-0.07*alpha*exp(theta) + 0.1", "alpha*exp(theta) - theta"],
    ),
    (
        "chua",
        &["x", "y", "z"],
        &["15.6*y - 31.2/7*x + 3.343*(abs(x + 1) - abs(x - 1))", "x - y + z", "-28*y"],
    ),
];

fn takens_bogdanov(s: &[f64]) -> Vec<f64> {
    let (x, y) = (s[0], s[1]);
    vec![y, -4.41 + 1.5 * y + x * x + x * y]
}

fn pendulum(s: &[f64]) -> Vec<f64> {
    vec![s[1], -4.905 * s[0].sin()]
}

fn rossler(s: &[f64]) -> Vec<f64> {
    let (x, y, z) = (s[0], s[1], s[2]);
    vec![-y - z, x + 0.5 * y, 2.0 + z * (x - 4.0)]
}

fn lorenz(s: &[f64]) -> Vec<f64> {
    let (x, y, z) = (s[0], s[1], s[2]);
    vec![10.0 * (y - x), x * (28.0 - z) - y, x * y - 8.0 * z / 3.0]
}

fn fitzhugh_nagumo(s: &[f64]) -> Vec<f64> {
    let (v, w) = (s[0], s[1]);
    vec![v - v * v * v / 3.0 - w + 0.328, 0.08 * (v - 0.8 * w + 0.7)]
}

fn chemical_kinetics(s: &[f64]) -> Vec<f64> {
    let (a, t) = (s[0], s[1]);
    let r = a * t.exp();
    vec![-0.07 * r + 0.1, r - t]
}

fn chua(s: &[f64]) -> Vec<f64> {
    let (x, y, z) = (s[0], s[1], s[2]);
    vec![
        15.6 * y - 31.2 / 7.0 * x + 3.343 * ((x + 1.0).abs() - (x - 1.0).abs()),
        x - y + z,
        -28.0 * y,
    ]
}

/// Names of the built-in systems.
pub fn builtin_names() -> Vec<&'static str> {
    FIXTURES.iter().map(|f| f.0).collect()
}

pub fn builtin(name: &str) -> Option<SystemDef> {
    let (_, vars, texts) = FIXTURES.iter().find(|f| f.0 == name)?;
    let var_names = names(vars);
    let rhs = parse_all(texts, &var_names);
    let many = |points, horizon| Layout {
        trajectories: 4,
        points,
        horizon,
    };
    let one = |horizon| Layout {
        trajectories: 1,
        points: 1000,
        horizon,
    };
    let long = Layout {
        trajectories: 1,
        points: 100_000,
        horizon: 1000.0,
    };
    let wide = |horizon| Layout {
        trajectories: 1000,
        points: 100,
        horizon,
    };
    let (closed_form, ic_box, burn_in, layout, large_layout, sigma): (
        ClosedForm,
        Vec<(f64, f64)>,
        f64,
        Layout,
        Layout,
        f64,
    ) = match name {
        "takens_bogdanov" => (
            takens_bogdanov,
            vec![(-3.0, 0.5), (-2.0, 2.0)],
            0.0,
            many(250, 1.0),
            wide(1.0),
            0.01,
        ),
        "pendulum" => (
            pendulum,
            vec![(-std::f64::consts::PI, std::f64::consts::PI), (-4.5, 4.5)],
            0.0,
            many(250, 4.0),
            wide(4.0),
            0.01,
        ),
        "rossler" => (
            rossler,
            vec![(-1.0, 1.0), (-1.0, 1.0), (0.0, 0.5)],
            100.0,
            one(100.0),
            long,
            0.01,
        ),
        "lorenz" => (
            lorenz,
            vec![(-10.0, 10.0), (-10.0, 10.0), (10.0, 30.0)],
            10.0,
            one(25.0),
            long,
            0.01,
        ),
        "fitzhugh_nagumo" => (
            fitzhugh_nagumo,
            vec![(-2.0, 2.0), (-1.0, 2.0)],
            0.0,
            Layout {
                trajectories: 100,
                points: 10,
                horizon: 1.0,
            },
            wide(1.0),
            0.01,
        ),
        "chemical_kinetics" => (
            chemical_kinetics,
            vec![(0.0, 0.7), (0.0, 7.0)],
            0.0,
            Layout {
                trajectories: 100,
                points: 160,
                horizon: 0.001,
            },
            wide(0.001),
            0.001,
        ),
        "chua" => (
            chua,
            vec![(-1.0, 1.0), (-0.5, 0.5), (-1.0, 1.0)],
            100.0,
            one(100.0),
            long,
            0.01,
        ),
        _ => return None,
    };
    Some(SystemDef {
        name: name.to_string(),
        var_names,
        rhs,
        closed_form: Some(closed_form),
        ic_box,
        burn_in,
        layout,
        large_layout,
        sigma1: sigma,
        sigma2: sigma,
    })
}

/// Classical fixed-step RK4; returns `steps + 1` states including `x0`.
pub fn integrate_rk4<F>(f: F, x0: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Invalid(format!("step must be positive, got {dt}")));
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    out.push(x.clone());
    for _ in 0..steps {
        x = rk4_step(&f, &x, dt)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// One classical RK4 step of size `dt`.
pub fn rk4_step<F>(f: &F, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let shifted = |k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = f(x)?;
    let k2 = f(&shifted(&k1, dt / 2.0))?;
    let k3 = f(&shifted(&k2, dt / 2.0))?;
    let k4 = f(&shifted(&k3, dt))?;
    let next: Vec<f64> = (0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFinite(format!("integration blew up from {x:?}")))
    }
}

/// States sampled every `dt` with [`SUBSTEPS`] RK4 steps in between.
pub fn sample_trajectory(
    system: &SystemDef,
    x0: &[f64],
    dt: f64,
    samples: usize,
) -> Result<Vec<Vec<f64>>> {
    let h = dt / SUBSTEPS as f64;
    let f = |x: &[f64]| system.rhs_eval(x);
    let mut out = Vec::with_capacity(samples);
    let mut x = x0.to_vec();
    for j in 0..samples {
        if j > 0 {
            for _ in 0..SUBSTEPS {
                x = rk4_step(&f, &x, h)?;
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Noisy samples of states and derivatives with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub system: String,
    pub var_names: Vec<String>,
    /// Noisy states, one row per sample.
    pub x: Vec<Vec<f64>>,
    /// Noisy derivatives, one row per sample.
    pub y: Vec<Vec<f64>>,
    pub traj: Vec<usize>,
    pub t: Vec<f64>,
    pub x_rms: Vec<f64>,
    pub xdot_rms: Vec<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub layout: Layout,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.var_names.len()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn rms_columns(rows: &[Vec<f64>], n: usize) -> Vec<f64> {
    let m = rows.len() as f64;
    (0..n)
        .map(|i| (rows.iter().map(|r| r[i] * r[i]).sum::<f64>() / m).sqrt())
        .collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Clean states and exact derivatives along `layout`, with trajectory ids
/// and sample times.
pub fn clean_samples(
    system: &SystemDef,
    layout: &Layout,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<usize>, Vec<f64>)> {
    if layout.total() == 0 || !(layout.horizon > 0.0) {
        return Err(Error::Invalid(format!("empty layout {layout:?}")));
    }
    let mut ic_rng = stream(seed, STREAM_INITIAL);
    let dt = layout.sample_dt();
    let m = layout.total();
    let (mut xs, mut ys) = (Vec::with_capacity(m), Vec::with_capacity(m));
    let (mut traj, mut ts) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for j in 0..layout.trajectories {
        let mut x0: Vec<f64> = system
            .ic_box
            .iter()
            .map(|&(a, b)| a + (b - a) * ic_rng.random::<f64>())
            .collect();
        if system.burn_in > 0.0 {
            let steps = (system.burn_in / dt).round() as usize;
            x0 = sample_trajectory(system, &x0, dt, steps + 1)?.pop().expect("non-empty");
        }
        let states = sample_trajectory(system, &x0, dt, layout.points)?;
        for (i, s) in states.into_iter().enumerate() {
            ys.push(system.rhs_eval(&s)?);
            xs.push(s);
            traj.push(j);
            ts.push(i as f64 * dt);
        }
    }
    Ok((xs, ys, traj, ts))
}

/// Samples `layout`, computes RMS scales from the clean values and adds
/// independent Gaussian noise of relative size `sigma1` to states and
/// `sigma2` to derivatives.
pub fn build_dataset(
    system: &SystemDef,
    layout: &Layout,
    sigma1: f64,
    sigma2: f64,
    seed: u64,
) -> Result<Dataset> {
    for (name, s) in [("sigma1", sigma1), ("sigma2", sigma2)] {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Invalid(format!("{name} must be >= 0, got {s}")));
        }
    }
    let n = system.n();
    let (mut xs, mut ys, traj, ts) = clean_samples(system, layout, seed)?;
    let x_rms = rms_columns(&xs, n);
    let xdot_rms = rms_columns(&ys, n);
    let mut state_rng = stream(seed, STREAM_STATE_NOISE);
    let mut deriv_rng = stream(seed, STREAM_DERIVATIVE_NOISE);
    for row in &mut xs {
        for (v, r) in row.iter_mut().zip(&x_rms) {
            let e: f64 = state_rng.sample(StandardNormal);
            *v += sigma1 * r * e;
        }
    }
    for row in &mut ys {
        for (v, r) in row.iter_mut().zip(&xdot_rms) {
            let e: f64 = deriv_rng.sample(StandardNormal);
            *v += sigma2 * r * e;
        }
    }
    Ok(Dataset {
        system: system.name.clone(),
        var_names: system.var_names.clone(),
        x: xs,
        y: ys,
        traj,
        t: ts,
        x_rms,
        xdot_rms,
        sigma1,
        sigma2,
        seed,
        layout: *layout,
    })
}

/// `sqrt(Σ |f(x) - y|² / Σ |y|²)` over the dataset rows.
pub fn relative_rmse(model: &[Expr], data: &Dataset) -> Result<f64> {
    relative_rmse_with(|x| evaluate_all(model, x), data)
}

/// [`relative_rmse`] for an arbitrary vector field.
pub fn relative_rmse_with<F>(f: F, data: &Dataset) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in data.x.iter().zip(&data.y) {
        let p = f(x)?;
        for (a, b) in p.iter().zip(y) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    if den == 0.0 {
        return Err(Error::DivideByZero("derivative data is identically zero".into()));
    }
    Ok((num / den).sqrt())
}
