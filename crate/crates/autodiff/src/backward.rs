//! Local backward rules: maps an output gradient to input gradients.

use crate::graph::{Graph, Op, Var};
use crate::kernels::{col2im, gemm_nt, gemm_tn};
use crate::tensor::Tensor;

/// Collapses a broadcast gradient back onto the operand's shape.
fn reduce_to(grad: Tensor, target: &[usize]) -> Tensor {
    let len: usize = target.iter().product();
    if grad.len() == len {
        Tensor::new(target.to_vec(), grad.into_data()).expect("same length")
    } else {
        Tensor::full(target.to_vec(), grad.sum())
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let bd = b.data();
    let scalar_b = bd.len() == 1 && a.len() != 1;
    let ad = a.data();
    Tensor::from_fn(a.shape().to_vec(), |i| f(ad[i], if scalar_b { bd[0] } else { bd[i] }))
}

pub(crate) fn input_grads(graph: &Graph, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
    let node = &graph.nodes[i];
    let out = &node.value;
    let wants = |v: Var| graph.requires_grad(v);
    let val = |v: Var| graph.value(v);
    let mut res = Vec::with_capacity(3);
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for v in [*a, *b] {
                if wants(v) {
                    res.push((v, reduce_to(g.clone(), val(v).shape())));
                }
            }
        }
        Op::Sub(a, b) => {
            if wants(*a) {
                res.push((*a, reduce_to(g.clone(), val(*a).shape())));
            }
            if wants(*b) {
                res.push((*b, reduce_to(g.map(|x| -x), val(*b).shape())));
            }
        }
        Op::Mul(a, b) => {
            if wants(*a) {
                res.push((*a, reduce_to(zip(g, val(*b), |gv, bv| gv * bv), val(*a).shape())));
            }
            if wants(*b) {
                res.push((*b, reduce_to(zip(g, val(*a), |gv, av| gv * av), val(*b).shape())));
            }
        }
        Op::Scale(a, s) => {
            if wants(*a) {
                res.push((*a, g.map(|x| x * s)));
            }
        }
        Op::Relu(a) => {
            if wants(*a) {
                res.push((*a, zip(g, val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })));
            }
        }
        Op::Sigmoid(a) => {
            if wants(*a) {
                res.push((*a, zip(g, out, |gv, y| gv * y * (1.0 - y))));
            }
        }
        Op::Exp(a) => {
            if wants(*a) {
                res.push((*a, zip(g, out, |gv, y| gv * y)));
            }
        }
        Op::Log(a) => {
            if wants(*a) {
                res.push((*a, zip(g, val(*a), |gv, x| gv / x)));
            }
        }
        Op::Reshape(a) => {
            if wants(*a) {
                res.push((*a, reduce_to(g.clone(), val(*a).shape())));
            }
        }
        Op::Sum(a) => {
            if wants(*a) {
                res.push((*a, Tensor::full(val(*a).shape().to_vec(), g.item())));
            }
        }
        Op::Mean(a) => {
            if wants(*a) {
                let n = val(*a).len() as f32;
                res.push((*a, Tensor::full(val(*a).shape().to_vec(), g.item() / n)));
            }
        }
        Op::MatMul(a, b) => {
            let (sa, sb) = (val(*a).shape(), val(*b).shape());
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            if wants(*a) {
                let mut ga = vec![0.0; m * k];
                gemm_nt(m, n, k, g.data(), val(*b).data(), &mut ga);
                res.push((*a, Tensor::new(vec![m, k], ga).unwrap()));
            }
            if wants(*b) {
                let mut gb = vec![0.0; k * n];
                gemm_tn(k, m, n, val(*a).data(), g.data(), &mut gb);
                res.push((*b, Tensor::new(vec![k, n], gb).unwrap()));
            }
        }
        Op::AddRowBias(x, bias) => {
            if wants(*x) {
                res.push((*x, g.clone()));
            }
            if wants(*bias) {
                let f = val(*bias).len();
                let mut gb = vec![0.0f32; f];
                for row in g.data().chunks(f) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                res.push((*bias, Tensor::new(vec![f], gb).unwrap()));
            }
        }
        Op::Conv2d { x, w, geom, cols } => {
            let (pl, p, f) = (geom.patch_len(), geom.out_pixels(), geom.filters);
            let wd = val(*w).data();
            if wants(*w) {
                let mut gw = vec![0.0f32; f * pl];
                for n in 0..geom.batch {
                    gemm_nt(
                        f,
                        p,
                        pl,
                        &g.data()[n * f * p..(n + 1) * f * p],
                        &cols[n * pl * p..(n + 1) * pl * p],
                        &mut gw,
                    );
                }
                res.push((*w, Tensor::new(val(*w).shape().to_vec(), gw).unwrap()));
            }
            if wants(*x) {
                let in_len = geom.in_channels * geom.height * geom.width;
                let mut gx = vec![0.0f32; geom.batch * in_len];
                let mut dcol = vec![0.0f32; pl * p];
                for n in 0..geom.batch {
                    dcol.iter_mut().for_each(|v| *v = 0.0);
                    gemm_tn(pl, f, p, wd, &g.data()[n * f * p..(n + 1) * f * p], &mut dcol);
                    col2im(geom, &dcol, &mut gx[n * in_len..(n + 1) * in_len]);
                }
                res.push((*x, Tensor::new(val(*x).shape().to_vec(), gx).unwrap()));
            }
        }
        Op::MaxPool2d { x, argmax } => {
            if wants(*x) {
                let mut gx = Tensor::zeros(val(*x).shape().to_vec());
                let gd = gx.data_mut();
                for (&src, gv) in argmax.iter().zip(g.data()) {
                    gd[src] += gv;
                }
                res.push((*x, gx));
            }
        }
        Op::AvgPool2d { x, window, stride } => {
            if wants(*x) {
                let s = val(*x).shape();
                let (h, w) = (s[2], s[3]);
                let (oh, ow) = (out.shape()[2], out.shape()[3]);
                let norm = 1.0 / (window * window) as f32;
                let mut gx = Tensor::zeros(s.to_vec());
                let gd = gx.data_mut();
                for plane in 0..s[0] * s[1] {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gv = g.data()[(plane * oh + oy) * ow + ox] * norm;
                            for ky in 0..*window {
                                for kx in 0..*window {
                                    gd[plane * h * w + (oy * stride + ky) * w + ox * stride + kx] += gv;
                                }
                            }
                        }
                    }
                }
                res.push((*x, gx));
            }
        }
        Op::GlobalAvgPool(x) => {
            if wants(*x) {
                let s = val(*x).shape();
                let hw = s[2] * s[3];
                let gd = g.data();
                let scale = 1.0 / hw as f32;
                res.push((*x, Tensor::from_fn(s.to_vec(), |i| gd[i / hw] * scale)));
            }
        }
        Op::ScaleChannels(x, s) => {
            let shape = val(*x).shape();
            let hw = shape[2] * shape[3];
            if wants(*x) {
                let sd = val(*s).data();
                res.push((*x, Tensor::from_fn(shape.to_vec(), |i| g.data()[i] * sd[i / hw])));
            }
            if wants(*s) {
                let xd = val(*x).data();
                let gs: Vec<f32> = g
                    .data()
                    .chunks(hw)
                    .zip(xd.chunks(hw))
                    .map(|(gp, xp)| gp.iter().zip(xp).map(|(a, b)| a * b).sum())
                    .collect();
                res.push((*s, Tensor::new(val(*s).shape().to_vec(), gs).unwrap()));
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => {
            let shape = val(*x).shape();
            let (n, c, hw) = (shape[0], shape[1], shape[2] * shape[3]);
            let gd = g.data();
            let mut sum_g = vec![0.0f64; c];
            let mut sum_gx = vec![0.0f64; c];
            for b in 0..n {
                for ch in 0..c {
                    let off = (b * c + ch) * hw;
                    for j in off..off + hw {
                        sum_g[ch] += gd[j] as f64;
                        sum_gx[ch] += (gd[j] * xhat[j]) as f64;
                    }
                }
            }
            if wants(*gamma) {
                let t: Vec<f32> = sum_gx.iter().map(|&v| v as f32).collect();
                res.push((*gamma, Tensor::new(vec![c], t).unwrap()));
            }
            if wants(*beta) {
                let t: Vec<f32> = sum_g.iter().map(|&v| v as f32).collect();
                res.push((*beta, Tensor::new(vec![c], t).unwrap()));
            }
            if wants(*x) {
                let gm = val(*gamma).data();
                let m = (n * hw) as f64;
                let gx = Tensor::from_fn(shape.to_vec(), |j| {
                    let ch = (j / hw) % c;
                    let k = gm[ch] * inv_std[ch];
                    if *batch_stats {
                        let mean_g = (sum_g[ch] / m) as f32;
                        let mean_gx = (sum_gx[ch] / m) as f32;
                        k * (gd[j] - mean_g - xhat[j] * mean_gx)
                    } else {
                        k * gd[j]
                    }
                });
                res.push((*x, gx));
            }
        }
        Op::LogSoftmax(x) => {
            if wants(*x) {
                let k = out.shape()[1];
                let mut gx = Vec::with_capacity(out.len());
                for (grow, orow) in g.data().chunks(k).zip(out.data().chunks(k)) {
                    let total: f32 = grow.iter().sum();
                    gx.extend(grow.iter().zip(orow).map(|(gv, lp)| gv - lp.exp() * total));
                }
                res.push((*x, Tensor::new(out.shape().to_vec(), gx).unwrap()));
            }
        }
    }
    res
}
