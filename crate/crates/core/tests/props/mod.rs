//! Strategies and property checks shared by the property suites and the
//! acceptance run.
#![allow(dead_code)]

pub mod expr {
    use proptest::prelude::*;
    use symnet_core::expr::{evaluate, normalize, parse_text, to_text, Expr};

    pub fn names() -> Vec<String> {
        ["x", "y", "z"].iter().map(|s| s.to_string()).collect()
    }

    fn leaf() -> impl Strategy<Value = Expr> {
        prop_oneof![
            (0usize..3).prop_map(Expr::Var),
            (-3.0f64..3.0).prop_map(Expr::Const),
            prop::sample::select(vec![1.0, -1.0, 2.0, 0.5, 8.0 / 3.0, 0.1]).prop_map(Expr::Const),
        ]
    }

    pub fn tree() -> impl Strategy<Value = Expr> {
        leaf().prop_recursive(3, 24, 3, |inner| {
            let exponent = prop_oneof![
                prop::sample::select(vec![2.0, 3.0, -1.0, 0.5, 1.5, -0.1]),
                -2.0f64..2.0,
            ];
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Sum),
                prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Prod),
                (inner.clone(), exponent).prop_map(|(b, p)| Expr::pow(b, p)),
                (inner.clone(), 0.5f64..2.5).prop_map(|(b, p)| Expr::pow(Expr::abs(b), p)),
                inner.clone().prop_map(Expr::abs),
                inner.clone().prop_map(Expr::sin),
                inner.clone().prop_map(|a| Expr::exp(Expr::scaled(0.3, a))),
                inner.prop_map(Expr::sgn),
            ]
        })
    }

    pub fn points() -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec([-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0], 100)
    }

    pub fn round_trip(e: &Expr) -> Result<(), TestCaseError> {
        let n = normalize(e);
        let text = to_text(&n, &names());
        let back = parse_text(&text, &names()).unwrap();
        prop_assert_eq!(&back, &n, "text: {}", text);
        Ok(())
    }

    pub fn normalize_keeps_values(e: &Expr, xs: &[[f64; 3]]) -> Result<(), TestCaseError> {
        let n = normalize(e);
        for x in xs {
            let Ok(a) = evaluate(e, x) else { continue };
            let b = evaluate(&n, x);
            prop_assert!(b.is_ok(), "normalized form failed at {:?}: {} -> {}", x, e, n);
            let b = b.unwrap();
            prop_assert!(
                (a - b).abs() <= 1e-10 * (1.0 + a.abs()),
                "{} = {} but {} = {} at {:?}", e, a, n, b, x
            );
        }
        Ok(())
    }
}

pub mod select {
    use proptest::prelude::*;
    use symnet_core::expr::{evaluate, parse_text};
    use symnet_core::select::aic_score;

    /// The corrected AIC rebuilt as expression text and evaluated by the
    /// expression engine, with `L` standing for `ln(mse)`.
    pub fn aic_by_text(p: usize, mse: f64, m: usize) -> f64 {
        let text = format!("2*{p} + {m}*L + 2*({p} + 1)*({p} + 2)/({m} - {p} - 2)");
        let e = parse_text(&text, &["L".to_string()]).unwrap();
        evaluate(&e, &[mse.ln()]).unwrap()
    }

    pub fn aic_args() -> impl Strategy<Value = (usize, f64, usize)> {
        (0usize..60, 1e-8f64..1e4, 1usize..20_000)
    }

    pub fn aic_agrees(p: usize, mse: f64, extra: usize) -> Result<(), TestCaseError> {
        let m = p + 2 + extra;
        let a = aic_score(p, mse, m).unwrap();
        let b = aic_by_text(p, mse, m);
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
        Ok(())
    }
}

pub mod systems {
    use proptest::prelude::*;
    use symnet_core::systems::{build_dataset, builtin, integrate_rk4};

    /// Endpoint-error ratios of RK4 on `x' = -x` when the step is halved.
    pub fn rk4_ratios() -> Vec<f64> {
        let err = |steps: usize| {
            let traj =
                integrate_rk4(|x: &[f64]| Ok(vec![-x[0]]), &[1.0], 1.0 / steps as f64, steps).unwrap();
            (traj[steps][0] - (-1f64).exp()).abs()
        };
        [5, 10, 20].iter().map(|&s| err(s) / err(2 * s)).collect()
    }

    pub fn dataset_args() -> impl Strategy<Value = (&'static str, u64, f64, f64)> {
        (
            prop::sample::select(vec![
                "takens_bogdanov",
                "pendulum",
                "rossler",
                "lorenz",
                "fitzhugh_nagumo",
                "chua",
            ]),
            any::<u64>(),
            0.0..0.05f64,
            0.0..0.05f64,
        )
    }

    pub fn dataset_is_deterministic(name: &str, seed: u64, s1: f64, s2: f64) -> Result<(), TestCaseError> {
        let sys = builtin(name).unwrap();
        let a = build_dataset(&sys, &sys.layout, s1, s2, seed).unwrap();
        let b = build_dataset(&sys, &sys.layout, s1, s2, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let c = build_dataset(&sys, &sys.layout, s1, s2, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(a.x, c.x);
        Ok(())
    }
}

pub mod train {
    use std::collections::BTreeSet;

    use proptest::prelude::*;
    use symnet_core::train::partition;

    pub fn partition_args() -> impl Strategy<Value = (usize, usize, u64)> {
        (2usize..8)
            .prop_flat_map(|folds| (folds..3000, Just(folds), any::<u64>()))
    }

    pub fn partition_covers(m: usize, folds: usize, seed: u64) -> Result<(), TestCaseError> {
        let parts = partition(m, folds, seed);
        prop_assert_eq!(parts.len(), folds);
        let mut seen = BTreeSet::new();
        for p in &parts {
            prop_assert!(!p.is_empty());
            for &i in p {
                prop_assert!(seen.insert(i), "index {} appears twice", i);
            }
        }
        prop_assert_eq!(seen, (0..m).collect::<BTreeSet<_>>());
        Ok(())
    }
}

pub mod grad {
    use proptest::prelude::*;
    use symnet_core::autodiff::{DualValue, Tape};
    use symnet_core::network::{forward, init_weights, InitSpec, NetworkShape, NetworkWeights, TapeWeights};

    pub const STEP: f64 = 1e-6;

    pub type Build<'a> = dyn Fn(&mut Tape, &[DualValue]) -> DualValue + 'a;

    fn value_at(f: &Build, p: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<DualValue> = p.iter().map(|&v| tape.param(v)).collect();
        f(&mut tape, &vars).value()
    }

    pub fn tape_grad(f: &Build, p: &[f64]) -> Vec<f64> {
        let mut tape = Tape::new();
        let vars: Vec<DualValue> = p.iter().map(|&v| tape.param(v)).collect();
        let out = f(&mut tape, &vars);
        tape.backward(out).unwrap()
    }

    pub fn central(f: impl Fn(&[f64]) -> f64, p: &[f64], i: usize) -> f64 {
        let mut q = p.to_vec();
        q[i] = p[i] + STEP;
        let up = f(&q);
        q[i] = p[i] - STEP;
        (up - f(&q)) / (2.0 * STEP)
    }

    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    fn check_op(name: &str, f: &Build, p: &[f64]) -> Result<(), TestCaseError> {
        let g = tape_grad(f, p);
        for i in 0..p.len() {
            let fd = central(|q| value_at(f, q), p, i);
            prop_assert!(rel_err(g[i], fd) < 1e-5, "{name} param {i} at {p:?}: {} vs {fd}", g[i]);
        }
        Ok(())
    }

    /// Reals bounded away from zero by 1e-3.
    pub fn away() -> impl Strategy<Value = f64> {
        (1e-3..3.0f64, any::<bool>()).prop_map(|(m, neg)| if neg { -m } else { m })
    }

    pub fn pair() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0..3.0f64, 2)
    }

    /// One random evaluation point for every tape operation.
    #[derive(Debug, Clone)]
    pub struct OpPoint {
        pub a: f64,
        pub b: f64,
        pub c: f64,
        pub nz: f64,
        pub w: f64,
        pub many: Vec<f64>,
        pub consts: Vec<f64>,
    }

    pub fn op_point() -> impl Strategy<Value = OpPoint> {
        (
            -3.0..3.0f64,
            -3.0..3.0f64,
            -5.0..5.0f64,
            away(),
            -2.0..2.0f64,
            prop::collection::vec(-2.0..2.0f64, 6),
            prop::collection::vec(-2.0..2.0f64, 3),
        )
            .prop_map(|(a, b, c, nz, w, many, consts)| OpPoint { a, b, c, nz, w, many, consts })
    }

    /// Reverse-mode partials of every operation kind against central
    /// differences.
    pub fn every_op(pt: &OpPoint) -> Result<(), TestCaseError> {
        let (ab, c) = ([pt.a, pt.b], pt.c);
        check_op("add", &|t, v| t.add(v[0], v[1]), &ab)?;
        check_op("sub", &|t, v| t.sub(v[0], v[1]), &ab)?;
        check_op("mul", &|t, v| t.mul(v[0], v[1]), &ab)?;
        check_op("neg", &|t, v| t.neg(v[0]), &ab[..1])?;
        check_op("scale", &|t, v| t.scale(v[0], c), &ab[..1])?;
        check_op("sigmoid", &|t, v| t.sigmoid(v[0]), &ab[..1])?;
        check_op("sin", &|t, v| t.sin(v[0]), &ab[..1])?;
        check_op("cos", &|t, v| t.cos(v[0]), &ab[..1])?;
        check_op("exp", &|t, v| t.exp(v[0]), &ab[..1])?;
        check_op("abs", &|t, v| t.abs(v[0]), &[pt.nz])?;
        check_op("sgn", &|t, v| t.sgn(v[0]), &[pt.nz])?;
        check_op("ln_abs", &|t, v| t.ln_abs(v[0]), &[pt.nz])?;
        check_op("sqrt_abs", &|t, v| t.sqrt_abs(v[0]), &[pt.nz])?;
        check_op("ln", &|t, v| t.ln(v[0]), &[pt.nz.abs()])?;
        check_op("pow_vw", &|t, v| t.pow_vw(v[0], v[1]), &[pt.nz, pt.w])?;
        check_op("gate", &|t, v| { let s = t.sigmoid(v[0]); t.gate(s, v[1]) }, &ab)?;
        check_op("sum", &|t, v| t.sum(v), &pt.many)?;
        check_op("product", &|t, v| t.product(v), &pt.many)?;
        check_op("dot_vars", &|t, v| t.dot_vars(&v[..3], &v[3..]), &pt.many)?;
        let consts = pt.consts.clone();
        check_op("dot_const", &|t, v| t.dot_const(v, &consts), &pt.many[..3])?;
        Ok(())
    }

    pub fn jitter(shape: NetworkShape, seed: u64, noise: &[f64]) -> NetworkWeights {
        let mut w = init_weights(&shape, &InitSpec::with_seed(seed));
        let flat: Vec<f64> = w.to_flat().iter().zip(noise.iter().cycle()).map(|(a, b)| a + b).collect();
        w.set_flat(&flat);
        w
    }

    /// Every partial of every network output against central differences.
    pub fn network_gradient(w: &NetworkWeights, x: &[f64]) -> Result<(), TestCaseError> {
        let flat = w.to_flat();
        let mut tape = Tape::new();
        let reg = TapeWeights::register(&mut tape, w);
        let out = reg.forward(&mut tape, x, None);
        for (r, &o) in out.iter().enumerate() {
            let g = tape.backward(o).unwrap();
            for i in 0..flat.len() {
                let fd = central(
                    |q| forward(&NetworkWeights::from_flat(w.shape, q).unwrap(), x, None).unwrap()[r],
                    &flat,
                    i,
                );
                prop_assert!(rel_err(g[i], fd) < 1e-5, "output {r} param {i}: {} vs {fd}", g[i]);
            }
        }
        Ok(())
    }

    /// A single-layer network whose outputs read sublayer `s` only.
    pub fn isolate(seed: u64, noise: &[f64], s: usize) -> NetworkWeights {
        let mut w = jitter(NetworkShape::new(2, 1, 1).unwrap(), seed, noise);
        let width = w.shape.output_width();
        w.w_out.iter_mut().for_each(|v| *v = 0.0);
        w.w_out[s] = 1.0;
        w.w_out[width + s] = 1.0;
        w
    }

    pub fn state() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(away(), 2)
    }

    pub fn noise() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-0.3..0.3f64, 64)
    }

    pub fn network_point() -> impl Strategy<Value = (u64, Vec<f64>, Vec<f64>)> {
        (any::<u64>(), noise(), state())
    }
}
