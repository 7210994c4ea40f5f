use mwpgen_core::numerics::{init_normal, Rng, Tape, Tensor, Var};
use proptest::prelude::*;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

/// Weighted sum of the op output, so every output entry gets a distinct
/// upstream gradient.
fn scalar_loss(tape: &mut Tape, out: Var) -> Var {
    let [r, c] = tape.shape(out);
    let mut rng = Rng::new((r * 131 + c) as u64);
    let w = tape.constant(init_normal(r, c, 1.0, &mut rng));
    let prod = tape.mul(out, w).unwrap();
    tape.sum_all(prod).unwrap()
}

fn forward(build: &Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let loss = scalar_loss(&mut tape, out);
    tape.value(loss).item()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central finite differences on every input entry against the tape's
/// backward pass.
fn gradcheck(name: &str, build: &Build, inputs: Vec<Tensor>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let loss = scalar_loss(&mut tape, out);
    let grads = tape.backward(loss).unwrap();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads
            .wrt(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.rows(), input.cols()));
        for i in 0..input.len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= H;
            let numeric = (forward(build, &plus) - forward(build, &minus)) / (2.0 * H);
            let a = analytic.data()[i];
            let e = rel_err(a, numeric);
            assert!(e < TOL, "{name}: input {k} entry {i}: analytic {a} numeric {numeric} (rel {e})");
        }
    }
}

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    init_normal(rows, cols, 1.0, rng)
}

fn dims(rng: &mut Rng) -> (usize, usize, usize) {
    (1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(4))
}

/// Runs `case` on five random shape draws.
fn five_shapes(name: &str, seed: u64, case: impl Fn(usize, usize, usize, &mut Rng) -> (Box<Build>, Vec<Tensor>)) {
    let mut rng = Rng::new(seed);
    for _ in 0..5 {
        let (m, k, n) = dims(&mut rng);
        let (build, inputs) = case(m, k, n, &mut rng);
        gradcheck(name, build.as_ref(), inputs);
    }
}

#[test]
fn matmul() {
    five_shapes("matmul", 1, |m, k, n, rng| {
        (Box::new(|t, v| t.matmul(v[0], v[1]).unwrap()), vec![random(m, k, rng), random(k, n, rng)])
    });
}

#[test]
fn add_sub_mul_same_shape() {
    five_shapes("add", 2, |m, k, _, rng| {
        (Box::new(|t, v| t.add(v[0], v[1]).unwrap()), vec![random(m, k, rng), random(m, k, rng)])
    });
    five_shapes("sub", 3, |m, k, _, rng| {
        (Box::new(|t, v| t.sub(v[0], v[1]).unwrap()), vec![random(m, k, rng), random(m, k, rng)])
    });
    five_shapes("mul", 4, |m, k, _, rng| {
        (Box::new(|t, v| t.mul(v[0], v[1]).unwrap()), vec![random(m, k, rng), random(m, k, rng)])
    });
}

#[test]
fn broadcasting() {
    five_shapes("add row", 5, |m, k, _, rng| {
        (Box::new(|t, v| t.add(v[0], v[1]).unwrap()), vec![random(m, k, rng), random(1, k, rng)])
    });
    five_shapes("sub column", 6, |m, k, _, rng| {
        (Box::new(|t, v| t.sub(v[0], v[1]).unwrap()), vec![random(m, k, rng), random(m, 1, rng)])
    });
    five_shapes("mul scalar", 7, |m, k, _, rng| {
        (Box::new(|t, v| t.mul(v[1], v[0]).unwrap()), vec![random(m, k, rng), random(1, 1, rng)])
    });
    five_shapes("mul row", 8, |m, k, _, rng| {
        (Box::new(|t, v| t.mul(v[0], v[1]).unwrap()), vec![random(m, k, rng), random(1, k, rng)])
    });
}

#[test]
fn elementwise() {
    five_shapes("affine", 9, |m, k, _, rng| {
        (Box::new(|t, v| t.affine(v[0], -1.7, 0.3).unwrap()), vec![random(m, k, rng)])
    });
    five_shapes("sigmoid", 10, |m, k, _, rng| {
        (Box::new(|t, v| t.sigmoid(v[0]).unwrap()), vec![random(m, k, rng)])
    });
    five_shapes("tanh", 11, |m, k, _, rng| (Box::new(|t, v| t.tanh(v[0]).unwrap()), vec![random(m, k, rng)]));
    five_shapes("exp", 12, |m, k, _, rng| (Box::new(|t, v| t.exp(v[0]).unwrap()), vec![random(m, k, rng)]));
}

#[test]
fn normalizers() {
    five_shapes("softmax", 13, |m, k, _, rng| {
        (Box::new(|t, v| t.softmax(v[0]).unwrap()), vec![random(m, k + 1, rng)])
    });
    five_shapes("log_softmax", 14, |m, k, _, rng| {
        (Box::new(|t, v| t.log_softmax(v[0]).unwrap()), vec![random(m, k + 1, rng)])
    });
}

#[test]
fn reductions() {
    five_shapes("mean_rows", 15, |m, k, _, rng| {
        (Box::new(|t, v| t.mean_rows(v[0]).unwrap()), vec![random(m, k, rng)])
    });
    five_shapes("sum_all", 16, |m, k, _, rng| {
        (Box::new(|t, v| t.sum_all(v[0]).unwrap()), vec![random(m, k, rng)])
    });
}

#[test]
fn structural() {
    five_shapes("concat", 17, |m, k, n, rng| {
        (
            Box::new(|t, v| t.concat(&[v[0], v[1], v[0]]).unwrap()),
            vec![random(m, k, rng), random(m, n, rng)],
        )
    });
    five_shapes("slice_cols", 18, |m, k, _, rng| {
        let start = rng.below(k);
        let width = 1 + rng.below(k - start);
        (
            Box::new(move |t, v| t.slice_cols(v[0], start, width).unwrap()),
            vec![random(m, k, rng)],
        )
    });
    five_shapes("slice_rows", 19, |m, k, _, rng| {
        let start = rng.below(m);
        let count = 1 + rng.below(m - start);
        (
            Box::new(move |t, v| t.slice_rows(v[0], start, count).unwrap()),
            vec![random(m, k, rng)],
        )
    });
    five_shapes("transpose", 20, |m, k, _, rng| {
        (Box::new(|t, v| t.transpose(v[0]).unwrap()), vec![random(m, k, rng)])
    });
    five_shapes("reshape", 21, |m, k, _, rng| {
        (Box::new(move |t, v| t.reshape(v[0], k, m).unwrap()), vec![random(m, k, rng)])
    });
}

#[test]
fn lookups() {
    five_shapes("embed", 22, |m, k, n, rng| {
        let ids: Vec<usize> = (0..n + 2).map(|_| rng.below(m)).collect();
        (Box::new(move |t, v| t.embed(v[0], &ids).unwrap()), vec![random(m, k, rng)])
    });
    five_shapes("gather", 23, |m, k, _, rng| {
        let cols: Vec<usize> = (0..m).map(|_| rng.below(k)).collect();
        (Box::new(move |t, v| t.gather(v[0], &cols).unwrap()), vec![random(m, k, rng)])
    });
    five_shapes("linear", 24, |m, k, n, rng| {
        (
            Box::new(|t, v| t.linear(v[0], v[1], Some(v[2])).unwrap()),
            vec![random(m, k, rng), random(k, n, rng), random(1, n, rng)],
        )
    });
}

#[test]
fn three_layer_composite() {
    let mut rng = Rng::new(99);
    let inputs = vec![
        random(3, 4, &mut rng),
        random(4, 5, &mut rng),
        random(5, 5, &mut rng),
        random(5, 3, &mut rng),
        random(1, 5, &mut rng),
    ];
    let build: Box<Build> = Box::new(|t, v| {
        let h1 = t.linear(v[0], v[1], Some(v[4])).unwrap();
        let h1 = t.tanh(h1).unwrap();
        let h2 = t.matmul(h1, v[2]).unwrap();
        let h2 = t.sigmoid(h2).unwrap();
        let gated = t.mul(h1, h2).unwrap();
        let out = t.matmul(gated, v[3]).unwrap();
        t.log_softmax(out).unwrap()
    });
    gradcheck("composite", build.as_ref(), inputs);
}

#[test]
fn init_std_matches_request() {
    let mut rng = Rng::new(5);
    let t = init_normal(1000, 100, 0.02, &mut rng);
    let mean = t.sum() / t.len() as f64;
    let var = t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t.len() as f64;
    let std = var.sqrt();
    assert!((0.019..=0.021).contains(&std), "{std}");
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        rows in 1usize..5,
        cols in 1usize..8,
        scale in 0.1f64..500.0,
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let x = init_normal(rows, cols, scale, &mut rng);
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let s = tape.softmax(v).unwrap();
        let ls = tape.log_softmax(v).unwrap();
        let (s, ls) = (tape.value(s), tape.value(ls));
        prop_assert!(s.is_finite() && ls.is_finite());
        for r in 0..rows {
            prop_assert!(s.row(r).iter().all(|&p| p >= 0.0));
            prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let mass: f64 = ls.row(r).iter().map(|l| l.exp()).sum();
            prop_assert!((mass - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn mean_of_identical_rows_is_that_row(rows in 1usize..20, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let row = init_normal(1, 6, 3.0, &mut rng);
        let stacked = Tensor::from_rows(&vec![row.data().to_vec(); rows]).unwrap();
        let mut tape = Tape::new();
        let v = tape.constant(stacked);
        let m = tape.mean_rows(v).unwrap();
        prop_assert_eq!(tape.value(m), &row);
    }
}
