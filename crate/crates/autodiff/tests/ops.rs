use autodiff::gradcheck::{grad_check, op_suite, random_tensor, DEFAULT_EPS, DEFAULT_TOL};
use autodiff::{Conv1dOptions, Graph, PadMode, Tensor, TensorError};

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape.to_vec(), data).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len(), "length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

#[test]
fn elementwise_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t(&[2], &[0.0, std::f64::consts::FRAC_PI_2]));
    let s = g.sin(x).unwrap();
    close(g.value(s), &[0.0, 1.0], 1e-15);

    let x = g.leaf(&t(&[2], &[-1.0, 2.0]));
    let y = g.leaky_relu(x, 0.2).unwrap();
    close(g.value(y), &[-0.2, 2.0], 1e-15);
}

#[test]
fn abs_gradient_matches_sign() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t(&[2], &[3.0, -3.0]).with_requires_grad(true));
    let a = g.abs(x).unwrap();
    let l = g.sum(a).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, -1.0]);
}

#[test]
fn abs_and_relu_gradient_at_zero_is_zero() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t(&[1], &[0.0]).with_requires_grad(true));
    let a = g.abs(x).unwrap();
    let r = g.relu(x).unwrap();
    let s = g.add(a, r).unwrap();
    let l = g.sum(s).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0]);
}

#[test]
fn log_of_non_positive_names_op_and_index() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t(&[3], &[1.0, 2.0, 0.0]));
    match g.log(x) {
        Err(TensorError::Domain { op, index, .. }) => {
            assert_eq!(op, "log");
            assert_eq!(index, 2);
        }
        other => panic!("expected domain error, got {other:?}"),
    }
}

#[test]
fn binary_shape_rules() {
    let mut g = Graph::<f64>::new();
    let a = g.leaf(&t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
    let b = g.leaf(&t(&[2], &[1., 1.]));
    assert!(matches!(g.add(a, b), Err(TensorError::ShapeMismatch { .. })));
    let s = g.scalar(10.0);
    let y = g.mul(a, s).unwrap();
    close(g.value(y), &[10., 20., 30., 40., 50., 60.], 0.0);
    let row = g.leaf(&t(&[3], &[1., 0., -1.]));
    let y = g.add(a, row).unwrap();
    close(g.value(y), &[2., 2., 2., 5., 5., 5.], 0.0);
}

#[test]
fn reduce_examples() {
    let mut g = Graph::<f64>::new();
    let v = g.leaf(&t(&[2], &[3.0, 4.0]));
    let f = g.frobenius_norm(v).unwrap();
    assert_eq!(g.item(f).unwrap(), 5.0);
    let v = g.leaf(&t(&[3], &[1.0, -2.0, 3.0]));
    let l = g.l1_norm(v).unwrap();
    assert_eq!(g.item(l).unwrap(), 6.0);
    let m = g.leaf(&t(&[2, 2], &[1., 2., 3., 4.]));
    let r = g.mean_axes(m, &[0]).unwrap();
    assert_eq!(g.shape(r), &[2]);
    close(g.value(r), &[2.0, 3.0], 0.0);
    assert!(matches!(
        g.mean_axes(m, &[2]),
        Err(TensorError::InvalidAxis { axis: 2, .. })
    ));
}

#[test]
fn conv1d_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t(&[1, 1, 3], &[1., 2., 3.]));
    let w = g.leaf(&t(&[1, 1, 1], &[1.]));
    let y = g.conv1d(x, w, None, Conv1dOptions::default()).unwrap();
    close(g.value(y), &[1., 2., 3.], 0.0);

    let x = g.leaf(&t(&[1, 1, 4], &[1., 2., 3., 4.]));
    let w = g.leaf(&t(&[1, 1, 2], &[1., 1.]));
    let y = g.conv1d(x, w, None, Conv1dOptions::default()).unwrap();
    close(g.value(y), &[3., 5., 7.], 0.0);

    let w = g.leaf(&t(&[1, 1, 5], &[1.; 5]));
    let e = g.conv1d(x, w, None, Conv1dOptions::default().dilation(1));
    assert!(e.is_err(), "output length would be < 1");
}

/// Triple-nested direct summation over an explicitly zero-padded input.
fn conv1d_oracle(
    x: &[f64],
    (b, cin, len): (usize, usize, usize),
    w: &[f64],
    (cout, k): (usize, usize),
    bias: &[f64],
    stride: usize,
    dilation: usize,
    padding: usize,
) -> Vec<f64> {
    let padded = len + 2 * padding;
    let out_len = (padded - dilation * (k - 1) - 1) / stride + 1;
    let mut xp = vec![0.0; b * cin * padded];
    for bi in 0..b {
        for c in 0..cin {
            for i in 0..len {
                xp[(bi * cin + c) * padded + padding + i] = x[(bi * cin + c) * len + i];
            }
        }
    }
    let mut out = vec![0.0; b * cout * out_len];
    for bi in 0..b {
        for co in 0..cout {
            for tt in 0..out_len {
                let mut acc = bias[co];
                for ci in 0..cin {
                    for kk in 0..k {
                        acc += w[(co * cin + ci) * k + kk] * xp[(bi * cin + ci) * padded + tt * stride + kk * dilation];
                    }
                }
                out[(bi * cout + co) * out_len + tt] = acc;
            }
        }
    }
    out
}

#[test]
fn conv1d_matches_direct_summation_oracle() {
    let mut seed = 0;
    for stride in 1..=3 {
        for dilation in 1..=3 {
            for padding in 1..=3 {
                for k in 1..=5 {
                    seed += 1;
                    let len = 16;
                    if len + 2 * padding < dilation * (k - 1) + 1 {
                        continue;
                    }
                    let x = random_tensor(seed, &[2, 2, len], 1.0);
                    let w = random_tensor(seed + 1000, &[3, 2, k], 1.0);
                    let b = random_tensor(seed + 2000, &[3], 1.0);
                    let mut g = Graph::new();
                    let (xv, wv, bv) = (g.leaf(&x), g.leaf(&w), g.leaf(&b));
                    let opts = Conv1dOptions::default().stride(stride).dilation(dilation).padding(padding);
                    let y = g.conv1d(xv, wv, Some(bv), opts).unwrap();
                    let expect = conv1d_oracle(x.data(), (2, 2, len), w.data(), (3, k), b.data(), stride, dilation, padding);
                    close(g.value(y), &expect, 1e-12);
                }
            }
        }
    }
}

#[test]
fn grouped_conv1d_matches_block_diagonal_dense_conv() {
    let x = random_tensor(1, &[1, 4, 10], 1.0);
    let wg = random_tensor(2, &[6, 2, 3], 1.0);
    // dense weight with zeros outside the group blocks
    let mut dense = vec![0.0; 6 * 4 * 3];
    for co in 0..6 {
        let grp = co / 3;
        for cil in 0..2 {
            for k in 0..3 {
                dense[(co * 4 + grp * 2 + cil) * 3 + k] = wg.data()[(co * 2 + cil) * 3 + k];
            }
        }
    }
    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let a = g.leaf(&wg);
    let d = g.leaf(&t(&[6, 4, 3], &dense));
    let ya = g.conv1d(xv, a, None, Conv1dOptions::default().groups(2).stride(2)).unwrap();
    let yd = g.conv1d(xv, d, None, Conv1dOptions::default().stride(2)).unwrap();
    close(g.value(ya), g.value(yd), 1e-12);
}

#[test]
fn conv_transpose1d_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t(&[1, 1, 1], &[1.]));
    let w = g.leaf(&t(&[1, 1, 2], &[1., 1.]));
    let y = g.conv_transpose1d(x, w, None, 1).unwrap();
    close(g.value(y), &[1., 1.], 0.0);

    let x = g.leaf(&t(&[1, 1, 3], &[1., 0., 1.]));
    let w = g.leaf(&t(&[1, 1, 4], &[1.; 4]));
    let y = g.conv_transpose1d(x, w, None, 2).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 8]);
    close(g.value(y), &[1., 1., 1., 1., 1., 1., 1., 1.], 0.0);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    for case in 0..100u64 {
        let stride = 1 + (case % 4) as usize;
        let k = stride + (case % 3) as usize;
        let (cin, cout, t_out) = (1 + (case % 3) as usize, 1 + (case % 2) as usize + 1, 3 + (case % 5) as usize);
        let len = (t_out - 1) * stride + k;
        let a = random_tensor(case, &[2, cin, len], 1.0);
        let w = random_tensor(case + 500, &[cout, cin, k], 1.0);
        let b = random_tensor(case + 900, &[2, cout, t_out], 1.0);
        let mut g = Graph::new();
        let (av, wv, bv) = (g.leaf(&a), g.leaf(&w), g.leaf(&b));
        let fwd = g.conv1d(av, wv, None, Conv1dOptions::default().stride(stride)).unwrap();
        let adj = g.conv_transpose1d(bv, wv, None, stride).unwrap();
        assert_eq!(g.shape(adj), a.shape());
        let lhs = dot(g.value(fwd), b.data());
        let rhs = dot(a.data(), g.value(adj));
        assert!((lhs - rhs).abs() <= 1e-10, "case {case}: {lhs} vs {rhs}");
    }
}

#[test]
fn structural_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t(&[2], &[0.5, -0.5]));
    let y = g.repeat_interleave(x, 2).unwrap();
    close(g.value(y), &[0.5, 0.5, -0.5, -0.5], 0.0);

    let x = g.leaf(&t(&[4], &[1., 3., 5., 7.]));
    let y = g.avg_pool1d(x, 2, 2).unwrap();
    close(g.value(y), &[2., 6.], 0.0);

    let x = g.leaf(&t(&[3], &[1., 2., 3.]));
    let y = g.pad1d(x, 1, 1, PadMode::Reflect).unwrap();
    close(g.value(y), &[2., 1., 2., 3., 2.], 0.0);
    let y = g.pad1d(x, 2, 0, PadMode::Zero).unwrap();
    close(g.value(y), &[0., 0., 1., 2., 3.], 0.0);
    assert!(g.pad1d(x, 3, 0, PadMode::Reflect).is_err());

    let x = g.leaf(&t(&[4], &[1., 2., 3., 4.]));
    let y = g.frame(x, 2, 2).unwrap();
    assert_eq!(g.shape(y), &[2, 2]);
    close(g.value(y), &[1., 2., 3., 4.], 0.0);

    let m = g.leaf(&t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
    let p = g.permute(m, &[1, 0]).unwrap();
    close(g.value(p), &[1., 4., 2., 5., 3., 6.], 0.0);
    let s = g.slice(m, 1, 1, 3).unwrap();
    close(g.value(s), &[2., 3., 5., 6.], 0.0);
    let c = g.concat(&[m, s], 1).unwrap();
    assert_eq!(g.shape(c), &[2, 5]);
    close(g.value(c), &[1., 2., 3., 2., 3., 4., 5., 6., 5., 6.], 0.0);
}

#[test]
fn backward_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t(&[2], &[1., 2.]).with_requires_grad(true));
    let sq = g.mul(x, x).unwrap();
    let l = g.sum(sq).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2., 4.]);

    // accumulation across calls
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[4., 8.]);
    g.zero_grads();
    assert_eq!(g.grad(x).unwrap(), &[0., 0.]);

    let mut g = Graph::<f64>::new();
    let x = g.leaf(&Tensor::zeros([4]).with_requires_grad(true));
    let m = g.mean(x).unwrap();
    g.backward(m).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.25; 4]);

    assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss(_))));
}

#[test]
fn constants_are_never_differentiated() {
    let mut g = Graph::<f64>::new();
    let c = g.leaf(&t(&[2], &[1., 2.]));
    let x = g.leaf(&t(&[2], &[3., 4.]).with_requires_grad(true));
    let y = g.mul(c, x).unwrap();
    let d = g.detach(y);
    let z = g.mul(d, x).unwrap();
    let l = g.sum(z).unwrap();
    g.backward(l).unwrap();
    assert!(g.grad(c).is_none());
    assert!(!g.requires_grad(d));
    // d is treated as constant: dl/dx = d = c * x
    assert_eq!(g.grad(x).unwrap(), &[3., 8.]);
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let x = random_tensor(11, &[2, 3, 40], 1.0);
        let w = random_tensor(12, &[4, 3, 5], 0.5);
        let mut g = Graph::<f32>::new();
        let xv = g.leaf(&x.cast());
        let wv = g.leaf(&w.cast::<f32>().with_requires_grad(true));
        let y = g.conv1d(xv, wv, None, Conv1dOptions::default().dilation(3)).unwrap();
        let y = g.tanh(y).unwrap();
        let s = g.rfft(y, 64).unwrap();
        let m = g.complex_abs(s, 1e-7).unwrap();
        let l = g.mean(m).unwrap();
        g.backward(l).unwrap();
        (g.value(m).to_vec(), g.grad(wv).unwrap().to_vec())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn every_op_passes_gradcheck() {
    let reports = op_suite(7, DEFAULT_EPS, DEFAULT_TOL);
    assert!(reports.len() > 60);
    for r in &reports {
        assert!(r.report.passed(), "{}: {}", r.name, r.report);
    }
}

#[test]
fn conv_leaky_mean_chain_passes_gradcheck() {
    let w = random_tensor(5, &[3, 2, 3], 1.0);
    let x = random_tensor(6, &[1, 2, 20], 1.0);
    let r = grad_check(
        move |g, xv| {
            let wv = g.leaf(&w);
            let y = g.conv1d(xv, wv, None, Conv1dOptions::default().dilation(2).padding(2))?;
            let y = g.leaky_relu(y, 0.2)?;
            g.mean(y)
        },
        &x,
        DEFAULT_EPS,
        DEFAULT_TOL,
    );
    assert!(r.passed(), "{r}");
}
