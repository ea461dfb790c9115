mod props;

use proptest::prelude::*;
use props::grad::{
    central, every_op, isolate, jitter, network_gradient, network_point, noise, op_point, pair,
    rel_err, state, tape_grad,
};
use symnet_core::autodiff::{DualValue, Tape};
use symnet_core::expr::evaluate;
use symnet_core::loss::{
    reg_l_half, reg_l_ops, reg_l_poly, tape_error, tape_regularization, total_loss, LossConfig,
};
use symnet_core::network::{extract_expression, forward, param_count, NetworkShape, NetworkWeights, TapeWeights};

fn many() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_op_matches_finite_differences(pt in op_point()) {
        every_op(&pt)?;
    }

    #[test]
    fn backward_is_linear(p in pair(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let f = |t: &mut Tape, v: &[DualValue]| { let s = t.sin(v[0]); t.mul(s, v[1]) };
        let g = |t: &mut Tape, v: &[DualValue]| { let m = t.mul(v[0], v[1]); t.exp(m) };
        let both = |t: &mut Tape, v: &[DualValue]| {
            let (fv, gv) = (f(t, v), g(t, v));
            let (fa, gb) = (t.scale(fv, a), t.scale(gv, b));
            t.add(fa, gb)
        };
        let (gf, gg, gs) = (tape_grad(&f, &p), tape_grad(&g, &p), tape_grad(&both, &p));
        for i in 0..2 {
            let want = a * gf[i] + b * gg[i];
            prop_assert!((gs[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn identical_tapes_give_identical_gradients(p in many()) {
        let f = |t: &mut Tape, v: &[DualValue]| {
            let a = t.pow_vw(v[0], v[1]);
            let b = t.dot_vars(&v[2..4], &v[4..]);
            let s = t.sin(b);
            t.product(&[a, s, v[5]])
        };
        let bits = |g: Vec<f64>| g.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        prop_assert_eq!(bits(tape_grad(&f, &p)), bits(tape_grad(&f, &p)));
    }

    #[test]
    fn grad_lin_sublayer((seed, n, x) in network_point()) {
        network_gradient(&isolate(seed, &n, 0), &x)?;
    }

    #[test]
    fn grad_pow_sublayer((seed, n, x) in network_point()) {
        network_gradient(&isolate(seed, &n, 1), &x)?;
    }

    #[test]
    fn grad_prod_sublayer((seed, n, x) in network_point()) {
        network_gradient(&isolate(seed, &n, 2), &x)?;
    }

    #[test]
    fn grad_ops_sublayer((seed, n, x) in network_point()) {
        network_gradient(&isolate(seed, &n, 3), &x)?;
    }

    #[test]
    fn grad_full_network((seed, n, x) in network_point()) {
        network_gradient(&jitter(NetworkShape::new(2, 2, 2).unwrap(), seed, &n), &x)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn grad_total_loss(
        seed in any::<u64>(),
        n in noise(),
        xs in prop::collection::vec(state(), 4),
        ys in prop::collection::vec(pair(), 4),
    ) {
        let mut w = jitter(NetworkShape::new(2, 1, 2).unwrap(), seed, &n);
        let flat: Vec<f64> = w.to_flat().iter().map(|v| v.signum() * v.abs().max(1e-3)).collect();
        w.set_flat(&flat);
        let targets: Vec<&[f64]> = ys.iter().map(|r| r.as_slice()).collect();
        let with_out = LossConfig { out_l_half: true, ..LossConfig::custom() };
        for cfg in [LossConfig::custom(), with_out, LossConfig::l1_mse()] {
            let mut tape = Tape::new();
            let reg = TapeWeights::register(&mut tape, &w);
            let pred: Vec<Vec<DualValue>> = xs.iter().map(|x| reg.forward(&mut tape, x, None)).collect();
            let e = tape_error(&mut tape, &pred, &targets, cfg.error);
            let r = tape_regularization(&mut tape, &reg, &cfg);
            let total = tape.add(e, r);
            let g = tape.backward(total).unwrap();
            for i in 0..flat.len() {
                let fd = central(
                    |q| total_loss(&NetworkWeights::from_flat(w.shape, q).unwrap(), &xs, &ys, &cfg).unwrap(),
                    &flat,
                    i,
                );
                prop_assert!(rel_err(g[i], fd) < 1e-4, "{cfg:?} param {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn regularizers_are_nonnegative(w in prop::collection::vec(-5.0..5.0f64, 1..12), c in 1e-3..100.0f64) {
        prop_assert!(reg_l_half(&w, 0.05) >= 0.0);
        prop_assert!(reg_l_poly(&w, 0.01) >= 0.0);
        prop_assert!(reg_l_ops(&w, &[w[0], -1.0, 2.0], 0.0375) >= 0.0);
        let scaled: Vec<f64> = w.iter().map(|v| c * v).collect();
        let want = c.sqrt() * reg_l_half(&w, 0.05);
        prop_assert!((reg_l_half(&scaled, 0.05) - want).abs() <= 1e-12 * (1.0 + want));
    }

    #[test]
    fn param_count_matches_entries(n in 1usize..5, k in 1usize..4, l in 1usize..5, t in any::<bool>()) {
        let shape = NetworkShape { n, stacks: k, layers: l, time_input: t };
        let w = NetworkWeights::zeros(shape);
        prop_assert_eq!(w.to_flat().len(), shape.param_count());
        prop_assert_eq!(param_count(&shape), shape.param_count());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn extraction_matches_forward(
        seed in any::<u64>(),
        n in noise(),
        k in 1usize..3,
        xs in prop::collection::vec(state(), 100),
    ) {
        let w = jitter(NetworkShape::new(2, k, 2).unwrap(), seed, &n);
        let model = extract_expression(&w);
        for x in &xs {
            let f = forward(&w, x, None).unwrap();
            for (e, fi) in model.iter().zip(&f) {
                let v = evaluate(e, x).unwrap();
                prop_assert!((v - fi).abs() <= 1e-8 * (1.0 + fi.abs()), "{v} vs {fi} at {x:?}");
            }
        }
    }
}
