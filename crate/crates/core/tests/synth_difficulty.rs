//! The synthetic opacity set must not be linearly separable from raw pixels.

use dfnet::data::{synth_generate, Label, SyntheticSet};

/// Grayscale pixel vectors standardized with training-set statistics.
fn features(set: &SyntheticSet, mean: &[f64], std: &[f64]) -> Vec<(Vec<f64>, f64)> {
    Label::BOTH
        .iter()
        .flat_map(|&label| {
            set.images(label).iter().map(move |t| {
                let s = t.shape();
                let x = (0..s.h * s.w)
                    .map(|k| (t.get(0, k / s.w, k % s.w, 0) as f64 - mean[k]) / std[k])
                    .collect();
                (x, label.target() as f64)
            })
        })
        .collect()
}

fn pixel_stats(set: &SyntheticSet) -> (Vec<f64>, Vec<f64>) {
    let images: Vec<_> = set.normal.iter().chain(&set.opacity).collect();
    let d = set.size * set.size;
    let n = images.len() as f64;
    let px = |t: &dfnet::Tensor<f32>, k: usize| t.get(0, k / set.size, k % set.size, 0) as f64;
    let mean: Vec<f64> = (0..d).map(|k| images.iter().map(|t| px(t, k)).sum::<f64>() / n).collect();
    let std = (0..d)
        .map(|k| {
            let v = images.iter().map(|t| (px(t, k) - mean[k]).powi(2)).sum::<f64>() / n;
            v.sqrt().max(1e-6)
        })
        .collect();
    (mean, std)
}

/// L2-regularized logistic regression by full-batch gradient descent.
fn fit(data: &[(Vec<f64>, f64)], l2: f64) -> (Vec<f64>, f64) {
    let d = data[0].0.len();
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let lr = 0.05;
    for _ in 0..400 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, y) in data {
            let z: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - y;
            gb += err;
            for (g, a) in gw.iter_mut().zip(x) {
                *g += err * a;
            }
        }
        let n = data.len() as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * (g / n + l2 * *wi);
        }
        b -= lr * gb / n;
    }
    (w, b)
}

fn accuracy(data: &[(Vec<f64>, f64)], w: &[f64], b: f64) -> f64 {
    let hits = data
        .iter()
        .filter(|(x, y)| {
            let z: f64 = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            (z >= 0.0) == (*y == 1.0)
        })
        .count();
    hits as f64 / data.len() as f64
}

#[test]
fn linear_pixel_classifier_stays_below_eighty_percent() {
    let train = synth_generate(100, 64, 1).unwrap();
    let held_out = synth_generate(50, 64, 2).unwrap();
    let (mean, std) = pixel_stats(&train);
    let train_x = features(&train, &mean, &std);
    let test_x = features(&held_out, &mean, &std);
    for l2 in [0.0, 1e-3, 1e-1] {
        let (w, b) = fit(&train_x, l2);
        let acc = accuracy(&test_x, &w, b);
        println!("l2={l2} held-out accuracy {acc:.3}");
        assert!(acc < 0.8, "l2={l2}: linear accuracy {acc}");
    }
}
