//! Finite-difference checks for every gradient-tape primitive.
//!
//! Each op is wrapped into a scalar objective with fixed mixing weights so
//! the incoming gradient is non-uniform, then the analytic gradient from
//! the reverse pass is compared coordinate-by-coordinate against central
//! differences of the forward value.

use privnet_core::nn::Var;
use privnet_core::{Tape, Tensor};
use proptest::prelude::*;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;
const ABS_TOL: f64 = 1e-7;

/// Deterministic, irregular mixing weights for collapsing an output
/// tensor to a scalar: w_i = sin(3i + 1) + 2.
fn mix_weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| (3.0 * i as f64 + 1.0).sin() + 2.0).collect()
}

/// Collapses `out` to `mean(out * w)` with the fixed irregular weights.
fn collapse(tape: &mut Tape, out: Var) -> Var {
    let n: usize = tape.shape(out).iter().product();
    let shape = tape.shape(out).to_vec();
    let w = tape.leaf(&Tensor::new(shape, mix_weights(n)).unwrap());
    let prod = tape.mul(out, w).unwrap();
    tape.mean_all(prod)
}

/// Checks d(loss)/d(x) for a scalar objective `build(tape, x_leaf)`
/// against central finite differences at `x0`.
fn check_grad(x0: &Tensor, build: impl Fn(&mut Tape, Var) -> Var) {
    let mut tape = Tape::new();
    let x = tape.leaf(x0);
    let loss = build(&mut tape, x);
    let analytic = tape.backward(loss).unwrap().get(x).to_vec();

    let value_at = |data: &[f64]| -> f64 {
        let t = Tensor::new(x0.shape().to_vec(), data.to_vec()).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(&t);
        let loss = build(&mut tape, x);
        tape.scalar_value(loss).unwrap()
    };

    let mut data = x0.data().to_vec();
    for i in 0..data.len() {
        let orig = data[i];
        data[i] = orig + H;
        let up = value_at(&data);
        data[i] = orig - H;
        let down = value_at(&data);
        data[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let err = (analytic[i] - numeric).abs();
        let scale = numeric.abs().max(analytic[i].abs()).max(1.0);
        assert!(
            err <= ABS_TOL + REL_TOL * scale,
            "coordinate {i}: analytic {} vs numeric {} (err {err})",
            analytic[i],
            numeric
        );
    }
}

fn small_matrix(max_dim: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0..3.0f64, r * c)
            .prop_map(move |data| Tensor::new(vec![r, c], data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_left(x in small_matrix(4), k in 1..4usize) {
        let cols = x.shape()[1];
        let b = Tensor::new(vec![cols, k], mix_weights(cols * k)).unwrap();
        check_grad(&x, |tape, xv| {
            let bv = tape.leaf(&b);
            let y = tape.matmul(xv, bv).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn matmul_right(x in small_matrix(4), m in 1..4usize) {
        let rows = x.shape()[0];
        let a = Tensor::new(vec![m, rows], mix_weights(m * rows)).unwrap();
        check_grad(&x, |tape, xv| {
            let av = tape.leaf(&a);
            let y = tape.matmul(av, xv).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn transpose(x in small_matrix(4)) {
        check_grad(&x, |tape, xv| {
            let y = tape.transpose(xv);
            collapse(tape, y)
        });
    }

    #[test]
    fn add(x in small_matrix(4)) {
        let other = Tensor::new(x.shape().to_vec(), mix_weights(x.len())).unwrap();
        check_grad(&x, |tape, xv| {
            let o = tape.leaf(&other);
            let y = tape.add(xv, o).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn add_self(x in small_matrix(4)) {
        check_grad(&x, |tape, xv| {
            let y = tape.add(xv, xv).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn add_row_matrix_side(x in small_matrix(4)) {
        let row = Tensor::new(vec![x.shape()[1]], mix_weights(x.shape()[1])).unwrap();
        check_grad(&x, |tape, xv| {
            let r = tape.leaf(&row);
            let y = tape.add_row(xv, r).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn add_row_bias_side(m in small_matrix(4)) {
        let bias = Tensor::new(vec![m.shape()[1]], mix_weights(m.shape()[1])).unwrap();
        check_grad(&bias, |tape, bv| {
            let mv = tape.leaf(&m);
            let y = tape.add_row(mv, bv).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn mul(x in small_matrix(4)) {
        let other = Tensor::new(x.shape().to_vec(), mix_weights(x.len())).unwrap();
        check_grad(&x, |tape, xv| {
            let o = tape.leaf(&other);
            let y = tape.mul(xv, o).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn mul_self(x in small_matrix(4)) {
        check_grad(&x, |tape, xv| {
            let y = tape.mul(xv, xv).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn affine(x in small_matrix(4), alpha in -2.0..2.0f64, beta in -2.0..2.0f64) {
        check_grad(&x, |tape, xv| {
            let y = tape.affine(xv, alpha, beta);
            collapse(tape, y)
        });
    }

    #[test]
    fn sigmoid(x in small_matrix(4)) {
        check_grad(&x, |tape, xv| {
            let y = tape.sigmoid(xv);
            collapse(tape, y)
        });
    }

    #[test]
    fn log(shape in (1..4usize, 1..4usize)) {
        let (r, c) = shape;
        let x = Tensor::new(
            vec![r, c],
            (0..r * c).map(|i| 0.2 + 0.37 * i as f64).collect(),
        )
        .unwrap();
        check_grad(&x, |tape, xv| {
            let y = tape.log(xv);
            collapse(tape, y)
        });
    }

    #[test]
    fn softmax_rows(x in small_matrix(4)) {
        check_grad(&x, |tape, xv| {
            let y = tape.softmax_rows(xv);
            collapse(tape, y)
        });
    }

    #[test]
    fn sum_all(x in small_matrix(4)) {
        check_grad(&x, |tape, xv| tape.sum_all(xv));
    }

    #[test]
    fn mean_all(x in small_matrix(4)) {
        check_grad(&x, |tape, xv| tape.mean_all(xv));
    }

    #[test]
    fn concat_cols(x in small_matrix(4)) {
        let rows = x.shape()[0];
        let other = Tensor::new(vec![rows, 2], mix_weights(rows * 2)).unwrap();
        check_grad(&x, |tape, xv| {
            let o = tape.leaf(&other);
            let y = tape.concat_cols(&[xv, o]).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn slice_cols(x in small_matrix(4)) {
        let c = x.shape()[1];
        let from = 0;
        let to = (c + 1) / 2;
        check_grad(&x, move |tape, xv| {
            let y = tape.slice_cols(xv, from, to).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn stack_rows(x in small_matrix(4)) {
        let cols = x.shape()[1];
        let other = Tensor::new(vec![2, cols], mix_weights(2 * cols)).unwrap();
        check_grad(&x, |tape, xv| {
            let o = tape.leaf(&other);
            let y = tape.stack_rows(&[o, xv]).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn gather(x in small_matrix(4)) {
        let rows = x.shape()[0] as u32;
        let indices: Vec<u32> = (0..rows).chain(0..rows.min(2)).collect();
        check_grad(&x, move |tape, xv| {
            let y = tape.gather(xv, &indices).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn bce_logits(x in small_matrix(4)) {
        let labels: Vec<f64> = (0..x.len()).map(|i| (i % 2) as f64).collect();
        check_grad(&x, move |tape, xv| {
            let y = tape.bce_logits(xv, &labels).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn ce_logits(x in small_matrix(4)) {
        let (r, c) = (x.shape()[0], x.shape()[1]);
        let labels: Vec<usize> = (0..r).map(|i| i % c).collect();
        check_grad(&x, move |tape, xv| {
            let y = tape.ce_logits(xv, &labels).unwrap();
            collapse(tape, y)
        });
    }

    #[test]
    fn two_layer_network_end_to_end(
        x in small_matrix(3),
        seed_shift in 0..7usize,
    ) {
        // dense -> sigmoid -> dense -> bce, checking grads through depth
        let rows = x.shape()[0];
        let cols = x.shape()[1];
        let hidden = 3;
        let w2 = Tensor::new(
            vec![hidden, 1],
            (0..hidden).map(|i| ((i + seed_shift) as f64 * 1.7).sin()).collect(),
        )
        .unwrap();
        let labels: Vec<f64> = (0..rows).map(|i| ((i + seed_shift) % 2) as f64).collect();
        let w1_data = mix_weights(cols * hidden);
        let w1 = Tensor::new(vec![cols, hidden], w1_data).unwrap();
        check_grad(&x, move |tape, xv| {
            let w1v = tape.leaf(&w1);
            let w2v = tape.leaf(&w2);
            let h = tape.matmul(xv, w1v).unwrap();
            let a = tape.sigmoid(h);
            let z = tape.matmul(a, w2v).unwrap();
            let l = tape.bce_logits(z, &labels).unwrap();
            tape.mean_all(l)
        });
    }
}
