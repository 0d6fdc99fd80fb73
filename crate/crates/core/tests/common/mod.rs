//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use dfnet::{NetworkConfig, Real, Shape, Tensor};

/// Direct nested loops with explicit zero padding, accumulated in `f64`.
pub fn conv_oracle<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, dilation: usize) -> Tensor<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let k = ws.n as isize;
    let d = dilation as isize;
    let pad = d * (k - 1) / 2;
    Tensor::from_fn(xs.with_channels(ws.c), |n, i, j, o| {
        let mut acc = b.get(0, 0, 0, o).to_f64_lossy();
        for ki in 0..k {
            for kj in 0..k {
                let yi = i as isize + ki * d - pad;
                let xj = j as isize + kj * d - pad;
                if yi < 0 || xj < 0 || yi >= xs.h as isize || xj >= xs.w as isize {
                    continue;
                }
                for c in 0..xs.c {
                    acc += x.get(n, yi as usize, xj as usize, c).to_f64_lossy()
                        * w.get(ki as usize, kj as usize, c, o).to_f64_lossy();
                }
            }
        }
        acc
    })
}

pub fn max_abs_diff<T: Real>(a: &Tensor<T>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.to_f64_lossy() - y).abs())
        .fold(0.0, f64::max)
}

pub fn random_tensor(shape: Shape, rng: &mut impl rand::Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

fn conv(k: usize, cin: usize, cout: usize) -> usize {
    k * k * cin * cout + cout
}

fn dense(fin: usize, fout: usize) -> usize {
    fin * fout + fout
}

/// Per-layer parameter counts, derived by hand from the channel algebra.
pub fn param_sheet(cfg: &NetworkConfig) -> Vec<(String, usize)> {
    let (p2, p3) = (cfg.use_p2, cfg.use_p3);
    let mut rows = Vec::new();
    let mut x = cfg.input_channels;
    let mut s = 0;
    let mut side = cfg.input_size;
    for (i, b) in cfg.blocks.iter().enumerate() {
        let f = b.filters;
        let h = f / 2;
        let mut pro = |name: &str, cin: usize| {
            let p = format!("df{}.{name}", i + 1);
            rows.push((format!("{p}.p1a"), conv(3, cin, f)));
            rows.push((format!("{p}.p1b"), conv(3, f, f)));
            rows.push((format!("{p}.p1c"), conv(3, f, f)));
            if p2 {
                rows.push((format!("{p}.p2"), conv(1, cin, h)));
            }
            if p3 {
                rows.push((format!("{p}.p3"), conv(5, cin, h)));
            }
        };
        pro("pc1", x);
        pro("pc2", s + f + if p2 { h } else { 0 });
        x = f + if p2 { h } else { 0 } + if p3 { h } else { 0 };
        s = if p3 { h } else { 0 };
        side /= b.pool;
    }
    if s > 0 {
        rows.push(("head.side_conv".into(), conv(cfg.head.side_kernel, s, s)));
    }
    rows.push(("head.dense".into(), dense(x + side * side * s, cfg.head.dense_width)));
    rows.push(("head.out".into(), dense(cfg.head.dense_width, 1)));
    rows
}

/// Parameter counts of a built network grouped by layer name.
pub fn layer_counts<T: Real>(net: &dfnet::Network<T>) -> Vec<(String, usize)> {
    let mut rows: Vec<(String, usize)> = Vec::new();
    for p in net.params().entries() {
        let layer = p.name.rsplit_once('.').map_or(p.name.as_str(), |(l, _)| l);
        match rows.last_mut() {
            Some((name, n)) if name == layer => *n += p.value.len(),
            _ => rows.push((layer.to_owned(), p.value.len())),
        }
    }
    rows
}
