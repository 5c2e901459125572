mod common;

use common::*;
use proptest::prelude::*;
use sgumlp::tensor::ops::*;
use sgumlp::{Error, Tensor};

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, v.to_vec()).unwrap()
}

#[test]
fn matmul_identity_and_selector() {
    let m = t(&[2, 2], &[1., 2., 3., 4.]);
    assert_eq!(matmul(&Tensor::eye(2), &m).unwrap(), m);
    let sel = t(&[2, 2], &[1., 0., 0., 0.]);
    let b = t(&[2, 2], &[5., 6., 7., 8.]);
    assert_eq!(matmul(&sel, &b).unwrap().data(), &[5., 6., 0., 0.]);
}

#[test]
fn matmul_matches_nested_loops() {
    let mut r = rng(1);
    let a = rand_tensor(&mut r, &[7, 5]);
    let b = rand_tensor(&mut r, &[5, 3]);
    let c = matmul(&a, &b).unwrap();
    assert!(c.max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
    let at = naive_transpose(&a);
    assert!(matmul_tn(&at, &b).unwrap().max_abs_diff(&c) < 1e-12);
    let bt = naive_transpose(&b);
    assert!(matmul_nt(&a, &bt).unwrap().max_abs_diff(&c) < 1e-12);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let err = matmul(&Tensor::<f64>::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]"), "{msg}");
    assert!(matches!(err, Error::Dimension(_)));
}

#[test]
fn matmul_backward_closed_form_2x2() {
    let a = t(&[2, 2], &[1., 2., 3., 4.]);
    let b = t(&[2, 2], &[5., 6., 7., 8.]);
    let g = t(&[2, 2], &[1., 0., 0., 1.]);
    let (da, db) = matmul_backward(&a, &b, &g).unwrap();
    // G·Bᵀ with G = I is Bᵀ; Aᵀ·G is Aᵀ.
    assert_eq!(da.data(), &[5., 7., 6., 8.]);
    assert_eq!(db.data(), &[1., 3., 2., 4.]);
}

#[test]
fn gelu_values() {
    assert_eq!(gelu(&t(&[1], &[0.])).unwrap().data()[0], 0.0);
    let g1 = gelu(&t(&[1], &[1.])).unwrap().data()[0];
    let oracle = naive_gelu(1.0);
    assert!((g1 - oracle).abs() < 1e-14, "{g1} vs {oracle}");
    assert!((g1 - 0.841_344_746).abs() < 1e-8);
}

#[test]
fn gelu_gradient_matches_finite_differences() {
    for &x in &[-2.0, -0.5, 0.3, 4.0] {
        let xt = t(&[1], &[x]);
        let g = gelu_backward(&xt, &t(&[1], &[1.])).unwrap().data()[0];
        let h = 1e-5 * x.abs().max(1.0);
        let fd = (naive_gelu(x + h) - naive_gelu(x - h)) / (2.0 * h);
        assert!(rel_err(g, fd) < 1e-6, "x={x}: {g} vs {fd}");
    }
}

#[test]
fn layer_norm_examples() {
    let ones = Tensor::ones(&[3]);
    let zeros = Tensor::zeros(&[3]);
    let c = layer_norm(&t(&[1, 3], &[2., 2., 2.]), &ones, &zeros, 1e-5).unwrap();
    assert!(c.data().iter().all(|&v| v == 0.0));

    let y = layer_norm(
        &t(&[1, 2], &[1., 3.]),
        &Tensor::ones(&[2]),
        &Tensor::zeros(&[2]),
        1e-14,
    )
    .unwrap();
    assert!((y.data()[0] + 1.0).abs() < 1e-12 && (y.data()[1] - 1.0).abs() < 1e-12);

    let mut r = rng(2);
    let x = rand_tensor(&mut r, &[4, 6]);
    let y = layer_norm(&x, &Tensor::ones(&[6]), &Tensor::zeros(&[6]), 1e-12).unwrap();
    for row in y.data().chunks(6) {
        let mean = row.iter().sum::<f64>() / 6.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }
    let gain = rand_tensor(&mut r, &[6]);
    let bias = rand_tensor(&mut r, &[6]);
    let y = layer_norm(&x, &gain, &bias, 1e-5).unwrap();
    let oracle = naive_layer_norm(&x, gain.data(), bias.data(), 1e-5);
    assert!(y.max_abs_diff(&oracle) < 1e-12);
}

#[test]
fn layer_norm_rejects_bad_eps_and_shapes() {
    let x = Tensor::<f64>::ones(&[2, 3]);
    assert!(layer_norm(&x, &Tensor::ones(&[3]), &Tensor::zeros(&[3]), 0.0).is_err());
    assert!(matches!(
        layer_norm(&x, &Tensor::ones(&[2]), &Tensor::zeros(&[2]), 1e-5),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn softmax_examples() {
    let u = softmax(&t(&[3], &[0., 0., 0.])).unwrap();
    assert!(u.data().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    let big = softmax(&t(&[3], &[1000., 0., 0.])).unwrap();
    assert!((big.data()[0] - 1.0).abs() < 1e-12);
    assert!(big.data()[1] < 1e-12);
}

#[test]
fn depthwise_conv_examples() {
    let mut r = rng(3);
    let x = rand_tensor(&mut r, &[5, 5, 2]);
    let delta = Tensor::ones(&[1, 1, 2]);
    let y = depthwise_conv2d(&x, &delta, &Tensor::zeros(&[2])).unwrap();
    assert_eq!(y, x);

    let ones = Tensor::<f64>::ones(&[3, 3, 1]);
    let y = depthwise_conv2d(&ones, &Tensor::ones(&[3, 3, 1]), &Tensor::zeros(&[1])).unwrap();
    let oracle = naive_dwconv(&ones, &Tensor::ones(&[3, 3, 1]), &[0.0]);
    assert_eq!(y, oracle);
    assert_eq!(y.at3(1, 1, 0), 9.0);
    assert_eq!(y.at3(0, 0, 0), 4.0);
    assert_eq!(y.at3(0, 1, 0), 6.0);

    assert!(matches!(
        depthwise_conv2d(&x, &Tensor::ones(&[2, 2, 2]), &Tensor::zeros(&[2])),
        Err(Error::Config(_))
    ));
}

#[test]
fn depthwise_conv_matches_oracle_and_keeps_channels_apart() {
    let mut r = rng(4);
    let x = rand_tensor(&mut r, &[9, 9, 2]);
    let k = rand_tensor(&mut r, &[5, 5, 2]);
    let b = rand_tensor(&mut r, &[2]);
    let y = depthwise_conv2d(&x, &k, &b).unwrap();
    assert!(y.max_abs_diff(&naive_dwconv(&x, &k, b.data())) < 1e-12);

    let mut x2 = x.clone();
    for (i, v) in x2.data_mut().iter_mut().enumerate() {
        if i % 2 == 0 {
            *v += 10.0 * (i as f64).sin();
        }
    }
    let y2 = depthwise_conv2d(&x2, &k, &b).unwrap();
    for (i, (a, c)) in y.data().iter().zip(y2.data()).enumerate() {
        if i % 2 == 1 {
            assert_eq!(a.to_bits(), c.to_bits());
        }
    }
}

#[test]
fn elementwise_examples() {
    let mut r = rng(5);
    let a = rand_tensor(&mut r, &[3, 3]);
    let b = rand_tensor(&mut r, &[3, 3]);
    assert_eq!(mul(&a, &Tensor::ones(&[3, 3])).unwrap(), a);
    assert_eq!(add(&a, &Tensor::zeros(&[3, 3])).unwrap(), a);
    let p = mul(&a, &b).unwrap();
    for i in 0..9 {
        assert_eq!(p.data()[i], a.data()[i] * b.data()[i]);
    }
    assert!(add(&a, &Tensor::zeros(&[9])).is_err());
    assert_eq!(scale(&a, 2.0).unwrap().data()[4], 2.0 * a.data()[4]);
}

#[test]
fn non_finite_results_are_errors() {
    let x = t(&[1, 2], &[f64::MAX, f64::MAX]);
    assert!(matches!(
        matmul(&x, &t(&[2, 1], &[2.0, 2.0])),
        Err(Error::NonFinite { op: "matmul" })
    ));
}

#[test]
fn ops_are_pure() {
    let mut r = rng(6);
    let x = rand_tensor(&mut r, &[4, 4, 3]);
    let k = rand_tensor(&mut r, &[3, 3, 3]);
    let b = rand_tensor(&mut r, &[3]);
    let before = x.clone();
    let y1 = depthwise_conv2d(&x, &k, &b).unwrap();
    let y2 = depthwise_conv2d(&x, &k, &b).unwrap();
    assert_eq!(x, before);
    assert!(y1
        .data()
        .iter()
        .zip(y2.data())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

fn arb_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matmul_vjp_matches_fd(a in arb_vec(12), b in arb_vec(20), da in arb_vec(12), db in arb_vec(20), g in arb_vec(15)) {
        let (a, b) = (t(&[3, 4], &a), t(&[4, 5], &b));
        let (dira, dirb, g) = (t(&[3, 4], &da), t(&[4, 5], &db), t(&[3, 5], &g));
        let (ga, gb) = matmul_backward(&a, &b, &g).unwrap();
        let fa = directional_fd(|x| naive_matmul(x, &b), &a, &dira, &g);
        let fb = directional_fd(|x| naive_matmul(&a, x), &b, &dirb, &g);
        prop_assert!(rel_err(dot(&ga, &dira), fa) < 1e-6);
        prop_assert!(rel_err(dot(&gb, &dirb), fb) < 1e-6);
    }

    #[test]
    fn gelu_vjp_matches_fd(x in arb_vec(6), d in arb_vec(6), g in arb_vec(6)) {
        let (x, d, g) = (t(&[6], &x), t(&[6], &d), t(&[6], &g));
        let an = dot(&gelu_backward(&x, &g).unwrap(), &d);
        let fd = directional_fd(|x| x.map(naive_gelu), &x, &d, &g);
        prop_assert!(rel_err(an, fd) < 1e-6, "{} vs {}", an, fd);
    }

    #[test]
    fn mul_vjp_matches_fd(a in arb_vec(6), b in arb_vec(6), d in arb_vec(6), g in arb_vec(6)) {
        let (a, b, d, g) = (t(&[2, 3], &a), t(&[2, 3], &b), t(&[2, 3], &d), t(&[2, 3], &g));
        let (ga, gb) = mul_backward(&a, &b, &g).unwrap();
        let f = |x: &Tensor<f64>| Tensor::from_fn(&[2, 3], |i| x.data()[i] * b.data()[i]);
        prop_assert!(rel_err(dot(&ga, &d), directional_fd(f, &a, &d, &g)) < 1e-6);
        let f = |x: &Tensor<f64>| Tensor::from_fn(&[2, 3], |i| a.data()[i] * x.data()[i]);
        prop_assert!(rel_err(dot(&gb, &d), directional_fd(f, &b, &d, &g)) < 1e-6);
        let (g1, g2) = add_backward(&g);
        prop_assert_eq!(&g1, &g);
        prop_assert_eq!(&g2, &g);
        prop_assert_eq!(scale_backward(3.0, &g).unwrap(), g.map(|v| 3.0 * v));
    }

    #[test]
    fn layer_norm_vjp_matches_fd(x in arb_vec(15), gain in arb_vec(5), bias in arb_vec(5), d in arb_vec(15), g in arb_vec(15), dgn in arb_vec(5)) {
        let (x, d, g) = (t(&[3, 5], &x), t(&[3, 5], &d), t(&[3, 5], &g));
        let (gain, bias, dgn) = (t(&[5], &gain), t(&[5], &bias), t(&[5], &dgn));
        let (_, cache) = layer_norm_forward(&x, &gain, &bias, 1e-5).unwrap();
        let (dx, dgain, dbias) = layer_norm_backward(&cache, &gain, &g).unwrap();
        let fx = directional_fd(|x| naive_layer_norm(x, gain.data(), bias.data(), 1e-5), &x, &d, &g);
        prop_assert!(rel_err(dot(&dx, &d), fx) < 1e-6, "{} vs {}", dot(&dx, &d), fx);
        let fg = directional_fd(|gn| naive_layer_norm(&x, gn.data(), bias.data(), 1e-5), &gain, &dgn, &g);
        prop_assert!(rel_err(dot(&dgain, &dgn), fg) < 1e-6);
        let fb = directional_fd(|b| naive_layer_norm(&x, gain.data(), b.data(), 1e-5), &bias, &dgn, &g);
        prop_assert!(rel_err(dot(&dbias, &dgn), fb) < 1e-6);
    }

    #[test]
    fn softmax_vjp_matches_fd(x in arb_vec(8), d in arb_vec(8), g in arb_vec(8)) {
        let (x, d, g) = (t(&[2, 4], &x), t(&[2, 4], &d), t(&[2, 4], &g));
        let y = softmax(&x).unwrap();
        let an = dot(&softmax_backward(&y, &g).unwrap(), &d);
        let fd = directional_fd(|x| softmax(x).unwrap(), &x, &d, &g);
        prop_assert!(rel_err(an, fd) < 1e-6, "{} vs {}", an, fd);
    }

    #[test]
    fn softmax_slices_are_distributions(x in prop::collection::vec(-50.0f64..50.0, 12)) {
        let y = softmax(&t(&[3, 4], &x)).unwrap();
        for row in y.data().chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn layer_norm_standardizes(x in prop::collection::vec(-100.0f64..100.0, 24)) {
        let x = t(&[4, 6], &x);
        let (_, cache) = layer_norm_forward(&x, &Tensor::ones(&[6]), &Tensor::zeros(&[6]), 1e-5).unwrap();
        for (row, xr) in cache.xhat.data().chunks(6).zip(x.data().chunks(6)) {
            let m = xr.iter().sum::<f64>() / 6.0;
            let v = xr.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 6.0;
            prop_assume!(v > 1e-1);
            let mean = row.iter().sum::<f64>() / 6.0;
            let var = row.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 6.0;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-6 * (1.0 + 1e-5 / v) + 1e-5 / v);
        }
    }

    #[test]
    fn dwconv_vjp_matches_fd(x in arb_vec(50), k in arb_vec(18), dx in arb_vec(50), dk in arb_vec(18), g in arb_vec(50), b in arb_vec(2)) {
        let (x, dirx, g) = (t(&[5, 5, 2], &x), t(&[5, 5, 2], &dx), t(&[5, 5, 2], &g));
        let (k, dirk) = (t(&[3, 3, 2], &k), t(&[3, 3, 2], &dk));
        let (gx, gk, gb) = depthwise_conv2d_backward(&x, &k, &g).unwrap();
        let fx = directional_fd(|x| naive_dwconv(x, &k, &b), &x, &dirx, &g);
        prop_assert!(rel_err(dot(&gx, &dirx), fx) < 1e-6);
        let fk = directional_fd(|k| naive_dwconv(&x, k, &b), &k, &dirk, &g);
        prop_assert!(rel_err(dot(&gk, &dirk), fk) < 1e-6);
        let bsum: Vec<f64> = (0..2).map(|c| g.data().iter().skip(c).step_by(2).sum()).collect();
        prop_assert!((gb.data()[0] - bsum[0]).abs() < 1e-12 && (gb.data()[1] - bsum[1]).abs() < 1e-12);
    }

    #[test]
    fn dwconv_channel_independence(x in arb_vec(27), noise in arb_vec(27), k in arb_vec(27)) {
        let x = t(&[3, 3, 3], &x);
        let k = t(&[3, 3, 3], &k);
        let b = Tensor::zeros(&[3]);
        let mut x2 = x.clone();
        for (i, v) in x2.data_mut().iter_mut().enumerate() {
            if i % 3 != 1 { *v += noise[i]; }
        }
        let (y1, y2) = (depthwise_conv2d(&x, &k, &b).unwrap(), depthwise_conv2d(&x2, &k, &b).unwrap());
        for i in (1..27).step_by(3) {
            prop_assert_eq!(y1.data()[i].to_bits(), y2.data()[i].to_bits());
        }
    }
}

#[test]
fn oracle_erf_matches_tabulated_values() {
    for (z, v) in [
        (0.5, 0.5204998778130465),
        (1.0, 0.8427007929497149),
        (2.5, 0.999_593_047_982_555),
        (3.0, 0.9999779095030014),
        (5.0, 0.9999999999984626),
    ] {
        assert!((series_erf(z) - v).abs() < 1e-15, "erf({z})");
        assert!((series_erf(-z) + v).abs() < 1e-15);
    }
}
