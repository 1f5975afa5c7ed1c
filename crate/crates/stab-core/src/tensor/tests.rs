use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

#[test]
fn matmul_identity_is_identity() {
    let mut g = Graph::new();
    let a = g.constant(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
    let i = g.constant(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    let out = g.matmul(a, i).unwrap();
    assert_eq!(g.data(out), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::new();
    let x = g.constant(vec![0.0, 0.0, 0.0], &[3]).unwrap();
    let s = g.softmax_lastdim(x).unwrap();
    let total: f64 = g.data(s).iter().sum();
    for v in g.data(s) {
        assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
    }
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
}

#[test]
fn slice_of_concat_recovers_input_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut g = Graph::new();
    let a_data = rand_vec(&mut rng, 6, -2.0, 2.0);
    let a = g.constant(a_data.clone(), &[2, 3]).unwrap();
    let b = g.constant(rand_vec(&mut rng, 10, -2.0, 2.0), &[2, 5]).unwrap();
    let cat = g.concat_lastdim(&[a, b]).unwrap();
    assert_eq!(g.shape(cat), &[2, 8]);
    let back = g.slice(cat, 1, 0, 3).unwrap();
    assert_eq!(g.data(back), a_data.as_slice());
}

#[test]
fn backward_of_square_is_two_x() {
    let mut g = Graph::new();
    let x = g.leaf(vec![3.0], &[1], true).unwrap();
    let y = g.mul(x, x).unwrap();
    let y = g.sum(y).unwrap();
    let map = g.backward(y).unwrap();
    assert_eq!(map.get(x).unwrap(), &[6.0]);
}

#[test]
fn backward_of_sum_is_ones() {
    let mut g = Graph::new();
    let x = g.leaf(vec![1.0, -2.0, 0.5, 4.0], &[2, 2], true).unwrap();
    let s = g.sum(x).unwrap();
    let map = g.backward(s).unwrap();
    assert_eq!(map.get(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
}

#[test]
fn backward_composite_matches_finite_differences() {
    // f = mean(softmax(W x) * (W x)) for random W folded into the closure
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w_data = rand_vec(&mut rng, 12, -1.0, 1.0);
    let x_data = rand_vec(&mut rng, 4, -1.0, 1.0);
    let err = finite_difference_check(
        |g, x| {
            let w = g.constant(w_data.clone(), &[3, 4])?;
            let xv = g.reshape(x, &[4, 1])?;
            let wx = g.matmul(w, xv)?;
            let wx = g.reshape(wx, &[3])?;
            let s = g.softmax_lastdim(wx)?;
            let prod = g.mul(s, wx)?;
            g.mean(prod)
        },
        &x_data,
        &[4],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn gradcheck_square_is_tight() {
    let err = finite_difference_check(
        |g, x| {
            let y = g.mul(x, x)?;
            g.sum(y)
        },
        &[2.0],
        &[1],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-8, "relative error {err}");
}

#[test]
fn gradcheck_constant_function_is_zero() {
    let err = finite_difference_check(
        |g, _x| {
            let c = g.constant(vec![5.0], &[1])?;
            g.sum(c)
        },
        &[1.0, 2.0],
        &[2],
        1e-6,
    )
    .unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn discarded_branch_contributes_nothing() {
    let mut g = Graph::new();
    let x = g.leaf(vec![1.0, 2.0], &[2], true).unwrap();
    let dead = g.exp(x).unwrap();
    let _unused = g.sum(dead).unwrap();
    let live = g.sum(x).unwrap();
    let map = g.backward(live).unwrap();
    assert_eq!(map.get(x).unwrap(), &[1.0, 1.0]);
}

#[test]
fn unreachable_parameter_gets_zero_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(vec![1.0], &[1], true).unwrap();
    let orphan = g.leaf(vec![9.0, 9.0], &[2], true).unwrap();
    let loss = g.sum(x).unwrap();
    let map = g.backward(loss).unwrap();
    assert_eq!(map.get(orphan).unwrap(), &[0.0, 0.0]);
}

#[test]
fn non_scalar_loss_is_a_contract_error() {
    let mut g = Graph::new();
    let x = g.leaf(vec![1.0, 2.0], &[2], true).unwrap();
    let y = g.relu(x).unwrap();
    let err = g.backward(y).unwrap_err();
    assert!(matches!(err, StabError::Contract(_)));
}

#[test]
fn shape_mismatch_names_op_and_shapes() {
    let mut g = Graph::new();
    let a = g.constant(vec![0.0; 6], &[2, 3]).unwrap();
    let b = g.constant(vec![0.0; 4], &[2, 2]).unwrap();
    let err = g.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
}

#[test]
fn log_of_non_positive_is_domain_error() {
    let mut g = Graph::new();
    let x = g.constant(vec![1.0, 0.0], &[2]).unwrap();
    let err = g.log(x).unwrap_err();
    assert!(matches!(err, StabError::Domain { op: "log", .. }));
}

#[test]
fn richer_broadcasts_are_rejected() {
    let mut g = Graph::new();
    // column-vs-matrix broadcast is outside the supported set
    let a = g.constant(vec![0.0; 6], &[2, 3]).unwrap();
    let b = g.constant(vec![0.0; 2], &[2, 1]).unwrap();
    assert!(g.add(a, b).is_err());
    assert!(g.mul(a, b).is_err());
    // suffix broadcast is add-only
    let bias = g.constant(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    assert!(g.add(a, bias).is_ok());
    assert!(g.sub(a, bias).is_err());
    assert!(g.mul(a, bias).is_err());
}

#[test]
fn mask_requiring_grad_is_rejected() {
    let mut g = Graph::new();
    let x = g.leaf(vec![1.0, 2.0], &[2], true).unwrap();
    let m = g.leaf(vec![0.0, 2.0], &[2], true).unwrap();
    assert!(matches!(g.dropout_mask_apply(x, m), Err(StabError::Contract(_))));
}

/// Every primitive passes a finite-difference check at 1e-6 over randomized
/// shapes and seeds.
#[test]
fn all_primitives_pass_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut runs = 0usize;
    for round in 0..8 {
        let b = 1 + round % 3;
        let m = 2 + (round / 2) % 3;
        let k = 1 + round % 4;
        let n = 2 + round % 2;

        // matmul 2D: check both operands
        let other = rand_vec(&mut rng, k * n, -1.0, 1.0);
        let x = rand_vec(&mut rng, m * k, -1.0, 1.0);
        let err = finite_difference_check(
            |g, a| {
                let bt = g.constant(other.clone(), &[k, n])?;
                let y = g.matmul(a, bt)?;
                g.sum(y)
            },
            &x,
            &[m, k],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "matmul lhs: {err}");
        let lhs = rand_vec(&mut rng, m * k, -1.0, 1.0);
        let x = rand_vec(&mut rng, k * n, -1.0, 1.0);
        let err = finite_difference_check(
            |g, bmat| {
                let a = g.constant(lhs.clone(), &[m, k])?;
                let y = g.matmul(a, bmat)?;
                let y = g.mul(y, y)?;
                g.mean(y)
            },
            &x,
            &[k, n],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "matmul rhs: {err}");

        // batched matmul 3D
        let rhs3 = rand_vec(&mut rng, b * k * n, -1.0, 1.0);
        let x = rand_vec(&mut rng, b * m * k, -1.0, 1.0);
        let err = finite_difference_check(
            |g, a| {
                let bt = g.constant(rhs3.clone(), &[b, k, n])?;
                let y = g.matmul(a, bt)?;
                g.sum(y)
            },
            &x,
            &[b, m, k],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "matmul 3d: {err}");

        // elementwise binary with same shape, scalar, and bias broadcast
        let w = rand_vec(&mut rng, m * n, -1.0, 1.0);
        let bias = rand_vec(&mut rng, n, -1.0, 1.0);
        let x = rand_vec(&mut rng, m * n, -1.0, 1.0);
        for mode in 0..4 {
            let err = finite_difference_check(
                |g, a| {
                    let y = match mode {
                        0 => {
                            let o = g.constant(w.clone(), &[m, n])?;
                            g.mul(a, o)?
                        }
                        1 => {
                            let o = g.constant(w.clone(), &[m, n])?;
                            g.sub(a, o)?
                        }
                        2 => {
                            let bb = g.constant(bias.clone(), &[n])?;
                            g.add(a, bb)?
                        }
                        _ => {
                            let s = g.scalar(1.7);
                            let t = g.mul(a, s)?;
                            g.add(t, s)?
                        }
                    };
                    let y = g.mul(y, y)?;
                    g.mean(y)
                },
                &x,
                &[m, n],
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-6, "binary mode {mode}: {err}");
            runs += 1;
        }

        // bias side of the suffix add
        let big = rand_vec(&mut rng, b * m * n, -1.0, 1.0);
        let x = rand_vec(&mut rng, n, -1.0, 1.0);
        let err = finite_difference_check(
            |g, bias| {
                let a = g.constant(big.clone(), &[b, m, n])?;
                let y = g.add(a, bias)?;
                let y = g.mul(y, y)?;
                g.sum(y)
            },
            &x,
            &[n],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "bias grad: {err}");

        // unary chain: exp, log, relu, scalar_mul, softmax
        let x = rand_vec(&mut rng, m * n, 0.5, 2.0);
        let err = finite_difference_check(
            |g, a| {
                let y = g.log(a)?;
                let y = g.exp(y)?;
                let y = g.scalar_mul(y, 0.37)?;
                let y = g.softmax_lastdim(y)?;
                let y2 = g.mul(y, y)?;
                g.sum(y2)
            },
            &x,
            &[m, n],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "unary chain: {err}");

        // relu away from the kink
        let x: Vec<f64> = rand_vec(&mut rng, m * n, -1.0, 1.0)
            .into_iter()
            .map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
            .collect();
        let err = finite_difference_check(
            |g, a| {
                let y = g.relu(a)?;
                g.mean(y)
            },
            &x,
            &[m, n],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "relu: {err}");

        // shape ops: reshape, slice, concat, transpose
        let x = rand_vec(&mut rng, b * m * n, -1.0, 1.0);
        let extra = rand_vec(&mut rng, b * m * 2, -1.0, 1.0);
        let err = finite_difference_check(
            |g, a| {
                let t = g.transpose_last2(a)?;
                let t = g.transpose_last2(t)?;
                let e = g.constant(extra.clone(), &[b, m, 2])?;
                let cat = g.concat_lastdim(&[t, e])?;
                let sl = g.slice(cat, 2, 1, n)?;
                let fl = g.reshape(sl, &[b * m * n])?;
                let sq = g.mul(fl, fl)?;
                g.mean(sq)
            },
            &x,
            &[b, m, n],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "shape chain: {err}");

        // dropout mask application
        let mask: Vec<f64> =
            (0..m * n).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 / (1.0 - 1.0 / 3.0) }).collect();
        let x = rand_vec(&mut rng, m * n, -1.0, 1.0);
        let err = finite_difference_check(
            |g, a| {
                let mk = g.constant(mask.clone(), &[m, n])?;
                let y = g.dropout_mask_apply(a, mk)?;
                let y = g.mul(y, y)?;
                g.sum(y)
            },
            &x,
            &[m, n],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "dropout: {err}");

        runs += 9;
    }
    assert!(runs >= 100, "only {runs} gradcheck runs");
}

mod properties {
    use proptest::prelude::*;

    use super::super::Graph;

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one_and_are_positive(
            rows in 1usize..5,
            width in 1usize..7,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..rows * width).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let mut g = Graph::new();
            let x = g.constant(data, &[rows, width]).unwrap();
            let s = g.softmax_lastdim(x).unwrap();
            for r in 0..rows {
                let row = &g.data(s)[r * width..(r + 1) * width];
                let total: f64 = row.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|v| *v > 0.0));
            }
        }
    }
}
