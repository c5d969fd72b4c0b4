//! Analytic gradients against central finite differences.

use parcel_tensor::{gradcheck, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 100;

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries kept at least `gap` away from zero, so kinks are never straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Vec<usize>, gap: f64) -> Tensor {
    let t = random(rng, shape);
    t.map(|v| if v.abs() < gap { v + gap.copysign(v) } else { v })
}

fn max_rel_err<F>(inputs: &[Tensor], weight_seed: u64, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut wrng = ChaCha8Rng::seed_from_u64(weight_seed);
    gradcheck::max_rel_err(inputs, &mut wrng, H, f).unwrap()
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5))
}

fn for_seeds(name: &str, mut case: impl FnMut(&mut ChaCha8Rng, u64) -> f64) {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        worst = worst.max(case(&mut rng, seed));
    }
    assert!(worst < TOL, "{name}: max relative error {worst:e}");
}

#[test]
fn matmul_and_transpose() {
    for_seeds("matmul", |rng, s| {
        let (m, k, n) = dims(rng);
        let ins = [random(rng, vec![m, k]), random(rng, vec![k, n])];
        max_rel_err(&ins, s, |t, v| t.matmul(v[0], v[1]))
    });
    for_seeds("transpose", |rng, s| {
        let (m, k, _) = dims(rng);
        max_rel_err(&[random(rng, vec![m, k])], s, |t, v| t.transpose(v[0]))
    });
}

#[test]
fn elementwise_binary() {
    for_seeds("add/sub/mul", |rng, s| {
        let (m, n, _) = dims(rng);
        let ins = [random(rng, vec![m, n]), random(rng, vec![m, n])];
        let a = max_rel_err(&ins, s, |t, v| t.add(v[0], v[1]));
        let b = max_rel_err(&ins, s, |t, v| t.sub(v[0], v[1]));
        let c = max_rel_err(&ins, s, |t, v| t.mul(v[0], v[1]));
        let d = max_rel_err(&ins[..1], s, |t, v| t.mul(v[0], v[0]));
        a.max(b).max(c).max(d)
    });
}

#[test]
fn affine_and_broadcast_row() {
    for_seeds("affine", |rng, s| {
        let (m, k, n) = dims(rng);
        let ins = [random(rng, vec![m, k]), random(rng, vec![k, n]), random(rng, vec![n])];
        max_rel_err(&ins, s, |t, v| t.affine(v[0], v[1], v[2]))
    });
}

#[test]
fn scaling_and_constants() {
    for_seeds("scale/mul_const", |rng, s| {
        let (m, n, _) = dims(rng);
        let c = random(rng, vec![m, n]);
        let ins = [random(rng, vec![m, n])];
        let a = max_rel_err(&ins, s, |t, v| t.scale(v[0], -1.7));
        let b = max_rel_err(&ins, s, |t, v| t.mul_const(v[0], c.clone()));
        a.max(b)
    });
}

#[test]
fn activations() {
    for_seeds("relu/sigmoid/tanh/softplus", |rng, s| {
        let (m, n, _) = dims(rng);
        let x = away_from_zero(rng, vec![m, n], 1e-3);
        let ins = [x.map(|v| v * 3.0)];
        let a = max_rel_err(&ins, s, |t, v| t.relu(v[0]));
        let b = max_rel_err(&ins, s, |t, v| t.sigmoid(v[0]));
        let c = max_rel_err(&ins, s, |t, v| t.tanh(v[0]));
        let d = max_rel_err(&ins, s, |t, v| t.softplus(v[0]));
        a.max(b).max(c).max(d)
    });
}

#[test]
fn log_with_floor() {
    for_seeds("ln_floor", |rng, s| {
        let (m, n, _) = dims(rng);
        let ins = [random(rng, vec![m, n]).map(|v| v.abs() + 0.05)];
        max_rel_err(&ins, s, |t, v| t.ln_floor(v[0], 1e-12))
    });
}

#[test]
fn reductions() {
    for_seeds("sum/mean", |rng, s| {
        let (m, n, _) = dims(rng);
        let ins = [random(rng, vec![m, n])];
        let a = max_rel_err(&ins, s, |t, v| t.sum(v[0]));
        let b = max_rel_err(&ins, s, |t, v| t.mean(v[0]));
        a.max(b)
    });
}

#[test]
fn masked_softmax_rows() {
    for_seeds("masked_softmax", |rng, s| {
        let (m, n, _) = dims(rng);
        let mut mask: Vec<bool> = (0..m * n).map(|_| rng.random_bool(0.7)).collect();
        for i in 0..m {
            mask[i * n + rng.random_range(0..n)] = true;
        }
        let ins = [random(rng, vec![m, n]).map(|v| v * 4.0)];
        let a = max_rel_err(&ins, s, |t, v| t.masked_softmax(v[0], &mask));
        let key_mask = &mask[..n];
        let b = if key_mask.iter().any(|&k| k) {
            max_rel_err(&ins, s, |t, v| t.masked_softmax(v[0], key_mask))
        } else {
            0.0
        };
        a.max(b)
    });
}

#[test]
fn structural_ops() {
    for_seeds("concat/slice/gather/select/reshape", |rng, s| {
        let (m, n, k) = dims(rng);
        let ins = [random(rng, vec![m, n]), random(rng, vec![m, k]), random(rng, vec![k, n])];
        let a = max_rel_err(&ins, s, |t, v| t.concat_cols(&[v[0], v[1], v[0]]));
        let b = max_rel_err(&ins, s, |t, v| t.concat_rows(&[v[0], v[2]]));
        let start = rng.random_range(0..n);
        let len = rng.random_range(1..=n - start);
        let c = max_rel_err(&ins, s, |t, v| t.slice_cols(v[0], start, len));
        let idx: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..m)).collect();
        let d = max_rel_err(&ins, s, |t, v| t.gather_rows(v[0], &idx));
        let e = max_rel_err(&ins, s, |t, v| t.embedding(v[2], &[k - 1, 0]));
        let flat = rng.random_range(0..m * n);
        let f = max_rel_err(&ins, s, |t, v| t.select(v[0], flat));
        let g = max_rel_err(&ins, s, |t, v| t.reshape(v[0], vec![m * n]));
        [a, b, c, d, e, f, g].into_iter().fold(0.0, f64::max)
    });
}

#[test]
fn layer_norm_rows() {
    for_seeds("layer_norm", |rng, s| {
        let (m, _, _) = dims(rng);
        let n = rng.random_range(2..7);
        let ins = [random(rng, vec![m, n]), random(rng, vec![n]), random(rng, vec![n])];
        max_rel_err(&ins, s, |t, v| t.layer_norm(v[0], v[1], v[2]))
    });
}

#[test]
fn dropout_with_fixed_mask() {
    for_seeds("dropout", |rng, s| {
        let (m, n, _) = dims(rng);
        let ins = [random(rng, vec![m, n])];
        max_rel_err(&ins, s, |t, v| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            t.dropout(v[0], 0.3, true, &mut r)
        })
    });
}

#[test]
fn three_layer_net() {
    for_seeds("mlp", |rng, s| {
        let (a, b, c) = dims(rng);
        let d = rng.random_range(1..4);
        let ins = [
            random(rng, vec![2, a]),
            random(rng, vec![a, b]),
            random(rng, vec![b]),
            random(rng, vec![b, c]),
            random(rng, vec![c]),
            random(rng, vec![c, d]),
            random(rng, vec![d]),
        ];
        max_rel_err(&ins, s, |t, v| {
            let h1 = t.affine(v[0], v[1], v[2])?;
            let h1 = t.tanh(h1)?;
            let h2 = t.affine(h1, v[3], v[4])?;
            let h2 = t.sigmoid(h2)?;
            t.affine(h2, v[5], v[6])
        })
    });
}
