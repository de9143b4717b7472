//! Central finite-difference checks (64-bit reference, h = 1e-4) for every
//! differentiable op, 20 random instances each.

use autodiff::reference::{self as r, check_gradients, Arr};
use autodiff::{Graph, PoolKind, RngStream, Tensor, Var};

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;

fn rand_tensor(rng: &mut RngStream, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.range(lo, hi))
}

/// Values bounded away from zero, for kinked ops.
fn away_from_zero(rng: &mut RngStream, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.range(0.05, 1.5);
        if rng.bernoulli(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced ≥ 0.01 apart, so max selections are stable under ±h.
fn distinct(rng: &mut RngStream, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f32> = (0..n).map(|i| i as f32 * 0.02 - 0.01 * n as f32).collect();
    rng.shuffle(&mut vals);
    Tensor::new(shape.to_vec(), vals).unwrap()
}

fn run(
    name: &str,
    mut make_inputs: impl FnMut(&mut RngStream) -> Vec<Tensor>,
    build: impl Fn(&mut Graph, &[Var]) -> autodiff::Result<Var> + Copy,
    reference: impl Fn(&[Arr]) -> Arr + Copy,
) {
    for seed in 0..INSTANCES {
        let mut rng = RngStream::new(seed, 0xfd);
        let inputs = make_inputs(&mut rng);
        let report = check_gradients(&inputs, build, reference, H, &mut rng).unwrap();
        assert!(
            report.max_rel_error < TOL,
            "{name} instance {seed}: relative error {}",
            report.max_rel_error
        );
    }
}

#[test]
fn add_sub_mul() {
    let shapes = |rng: &mut RngStream| {
        let s = [1 + rng.below(3), 1 + rng.below(4)];
        vec![rand_tensor(rng, &s, -2.0, 2.0), rand_tensor(rng, &s, -2.0, 2.0)]
    };
    run(
        "add",
        shapes,
        |g, v| g.add(v[0], v[1]),
        |a| a[0].zip(&a[1], |x, y| x + y),
    );
    run(
        "sub",
        shapes,
        |g, v| g.sub(v[0], v[1]),
        |a| a[0].zip(&a[1], |x, y| x - y),
    );
    run(
        "mul",
        shapes,
        |g, v| g.mul(v[0], v[1]),
        |a| a[0].zip(&a[1], |x, y| x * y),
    );
}

#[test]
fn scalar_broadcast() {
    let inputs = |rng: &mut RngStream| vec![rand_tensor(rng, &[3, 2], -2.0, 2.0), rand_tensor(rng, &[1], -2.0, 2.0)];
    run(
        "mul-scalar",
        inputs,
        |g, v| g.mul(v[0], v[1]),
        |a| a[0].zip(&a[1], |x, y| x * y),
    );
    run(
        "add-scalar",
        inputs,
        |g, v| g.add(v[0], v[1]),
        |a| a[0].zip(&a[1], |x, y| x + y),
    );
}

#[test]
fn unary_ops() {
    let any = |rng: &mut RngStream| vec![rand_tensor(rng, &[2, 3], -2.0, 2.0)];
    run("sigmoid", any, |g, v| g.sigmoid(v[0]), |a| a[0].map(r::sigmoid));
    run("exp", any, |g, v| g.exp(v[0]), |a| a[0].map(f64::exp));
    run(
        "scale",
        any,
        |g, v| g.scale(v[0], -1.7),
        |a| a[0].map(|x| x * -1.7f32 as f64),
    );
    run(
        "relu",
        |rng| vec![away_from_zero(rng, &[2, 3])],
        |g, v| g.relu(v[0]),
        |a| a[0].map(|x| x.max(0.0)),
    );
    run(
        "log",
        |rng| vec![rand_tensor(rng, &[2, 3], 0.2, 3.0)],
        |g, v| g.log(v[0]),
        |a| a[0].map(f64::ln),
    );
}

#[test]
fn reductions_and_reshape() {
    let any = |rng: &mut RngStream| vec![rand_tensor(rng, &[2, 3, 2], -2.0, 2.0)];
    run(
        "sum",
        any,
        |g, v| g.sum(v[0]),
        |a| Arr::new(vec![1], vec![a[0].data.iter().sum()]),
    );
    run(
        "mean",
        any,
        |g, v| g.mean(v[0]),
        |a| Arr::new(vec![1], vec![a[0].data.iter().sum::<f64>() / a[0].data.len() as f64]),
    );
    run(
        "reshape",
        any,
        |g, v| g.reshape(v[0], vec![6, 2]),
        |a| Arr::new(vec![6, 2], a[0].data.clone()),
    );
}

#[test]
fn matmul_and_bias() {
    run(
        "matmul",
        |rng| {
            let (m, k, n) = (1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4));
            vec![
                rand_tensor(rng, &[m, k], -1.0, 1.0),
                rand_tensor(rng, &[k, n], -1.0, 1.0),
            ]
        },
        |g, v| g.matmul(v[0], v[1]),
        |a| r::matmul(&a[0], &a[1]),
    );
    run(
        "add_row_bias",
        |rng| vec![rand_tensor(rng, &[3, 4], -1.0, 1.0), rand_tensor(rng, &[4], -1.0, 1.0)],
        |g, v| g.add_row_bias(v[0], v[1]),
        |a| r::add_row_bias(&a[0], &a[1]),
    );
}

#[test]
fn conv2d_configurations() {
    for (stride, pad, k) in [(1, 0, 3), (1, 1, 3), (2, 1, 3), (2, 0, 2)] {
        run(
            "conv2d",
            |rng| {
                vec![
                    rand_tensor(rng, &[2, 2, 6, 5], -1.0, 1.0),
                    rand_tensor(rng, &[3, 2, k, k], -1.0, 1.0),
                ]
            },
            move |g, v| g.conv2d(v[0], v[1], stride, pad),
            move |a| r::conv2d(&a[0], &a[1], stride, pad),
        );
    }
}

#[test]
fn pooling() {
    run(
        "max_pool",
        |rng| vec![distinct(rng, &[2, 2, 4, 4])],
        |g, v| g.pool2d(PoolKind::Max, v[0], 2, 2),
        |a| r::max_pool(&a[0], 2, 2),
    );
    run(
        "avg_pool",
        |rng| vec![rand_tensor(rng, &[2, 2, 5, 5], -1.0, 1.0)],
        |g, v| g.pool2d(PoolKind::Avg, v[0], 3, 2),
        |a| r::avg_pool(&a[0], 3, 2),
    );
    run(
        "global_avg_pool",
        |rng| vec![rand_tensor(rng, &[2, 3, 3, 4], -1.0, 1.0)],
        |g, v| g.pool2d(PoolKind::GlobalAvg, v[0], 0, 0),
        |a| r::global_avg_pool(&a[0]),
    );
}

#[test]
fn channel_scaling() {
    run(
        "scale_channels",
        |rng| {
            vec![
                rand_tensor(rng, &[2, 3, 3, 3], -1.0, 1.0),
                rand_tensor(rng, &[2, 3], 0.0, 1.0),
            ]
        },
        |g, v| g.scale_channels(v[0], v[1]),
        |a| r::scale_channels(&a[0], &a[1]),
    );
}

#[test]
fn batch_norm_modes() {
    run(
        "batch_norm_train",
        |rng| {
            vec![
                rand_tensor(rng, &[3, 2, 3, 3], -1.0, 1.0),
                rand_tensor(rng, &[2], 0.5, 1.5),
                rand_tensor(rng, &[2], -0.5, 0.5),
            ]
        },
        |g, v| g.batch_norm_train(v[0], v[1], v[2], 1e-5).map(|(o, _)| o),
        |a| r::batch_norm(&a[0], &a[1], &a[2], None, 1e-5f32 as f64),
    );
    let (mean, var) = ([0.1f32, -0.3], [0.8f32, 1.7]);
    run(
        "batch_norm_eval",
        |rng| {
            vec![
                rand_tensor(rng, &[2, 2, 3, 3], -1.0, 1.0),
                rand_tensor(rng, &[2], 0.5, 1.5),
                rand_tensor(rng, &[2], -0.5, 0.5),
            ]
        },
        move |g, v| g.batch_norm_eval(v[0], v[1], v[2], &mean, &var, 1e-5),
        move |a| {
            let m: Vec<f64> = mean.iter().map(|&v| v as f64).collect();
            let s: Vec<f64> = var.iter().map(|&v| v as f64).collect();
            r::batch_norm(&a[0], &a[1], &a[2], Some((&m, &s)), 1e-5f32 as f64)
        },
    );
}

#[test]
fn log_softmax_rows() {
    run(
        "log_softmax",
        |rng| vec![rand_tensor(rng, &[4, 3], -3.0, 3.0)],
        |g, v| g.log_softmax(v[0]),
        |a| r::log_softmax(&a[0]),
    );
}

#[test]
fn fan_out_accumulates() {
    // x used three times: f = x·x + 2x
    run(
        "fan-out",
        |rng| vec![rand_tensor(rng, &[5], -2.0, 2.0)],
        |g, v| {
            let sq = g.mul(v[0], v[0])?;
            let tw = g.scale(v[0], 2.0)?;
            g.add(sq, tw)
        },
        |a| a[0].map(|x| x * x + 2.0 * x),
    );
}

#[test]
fn checker_detects_wrong_gradient() {
    let mut rng = RngStream::new(1, 1);
    let inputs = vec![rand_tensor(&mut rng, &[4], -1.0, 1.0)];
    let report = check_gradients(
        &inputs,
        |g, v| g.scale(v[0], 1.0),
        |a| a[0].map(|x| 1.01 * x),
        H,
        &mut rng,
    )
    .unwrap();
    assert!(report.max_rel_error > 1e-3);
}
