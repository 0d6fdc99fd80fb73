use dfnet::ops::{concat_channels, conv2d_forward, maxpool2d, split_channels};
use dfnet::{conv2d, ConvSpec, Shape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{conv_oracle, max_abs_diff as max_diff, random_tensor as random};

prop_compose! {
    fn conv_case()(
        n in 1usize..=2, h in 1usize..=6, w in 1usize..=6, c in 1usize..=4, o in 1usize..=4,
        k in prop::sample::select(vec![1usize, 3, 5]), dilation in 1usize..=2, seed in any::<u64>(),
    ) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(Shape::new(n, h, w, c), &mut rng);
        let wt = random(Shape::new(k, k, c, o), &mut rng);
        let b = random(Shape::new(1, 1, 1, o), &mut rng);
        (x, wt, b, dilation)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conv_matches_direct_loops_f64((x, w, b, d) in conv_case()) {
        let y = conv2d_forward(&x, &w, &b, d).unwrap();
        prop_assert!(max_diff(&y, &conv_oracle(&x, &w, &b, d)) < 1e-12);
    }

    #[test]
    fn conv_matches_direct_loops_f32((x, w, b, d) in conv_case()) {
        let spec = ConvSpec::new(w.shape().n, d, w.cast::<f32>(), b.cast::<f32>()).unwrap();
        let y = conv2d(&x.cast::<f32>(), &spec).unwrap();
        let oracle = conv_oracle(&x.cast::<f32>(), &spec.weights, &spec.bias, d);
        prop_assert!(max_diff(&y, &oracle) < 1e-6);
    }

    #[test]
    fn conv_is_affine_in_its_input((x, w, b, d) in conv_case(), alpha in -2.0f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random(x.shape(), &mut rng);
        let zero_b = Tensor::zeros(b.shape());
        let mixed = Tensor::from_vec(
            x.shape(),
            x.data().iter().zip(z.data()).map(|(a, c)| alpha * a + c).collect(),
        ).unwrap();
        let lhs = conv2d_forward(&mixed, &w, &zero_b, d).unwrap();
        let cx = conv2d_forward(&x, &w, &zero_b, d).unwrap();
        let cz = conv2d_forward(&z, &w, &zero_b, d).unwrap();
        let rhs = Tensor::from_vec(
            cx.shape(),
            cx.data().iter().zip(cz.data()).map(|(a, c)| alpha * a + c).collect(),
        ).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn maxpool_commutes_with_monotone_maps(
        n in 1usize..=2, side in 1usize..=4, m in 1usize..=3, c in 1usize..=3, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(Shape::new(n, side * m, side * m, c), &mut rng);
        let f = |v: f64| 3.0 * v.max(0.0) + v + 0.5;
        let lhs = maxpool2d(&x.map(f), m).unwrap();
        let rhs = maxpool2d(&x, m).unwrap().map(f);
        prop_assert_eq!(lhs.shape(), Shape::new(n, side, side, c));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn split_undoes_concat(
        n in 1usize..=2, h in 1usize..=4, w in 1usize..=4,
        widths in prop::collection::vec(0usize..=3, 1..=4), seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<Tensor<f64>> = widths.iter().map(|&c| random(Shape::new(n, h, w, c), &mut rng)).collect();
        let refs: Vec<&Tensor<f64>> = parts.iter().collect();
        let joined = concat_channels(&refs).unwrap();
        prop_assert_eq!(joined.shape().c, widths.iter().sum::<usize>());
        prop_assert_eq!(split_channels(&joined, &widths).unwrap(), parts);
    }

    #[test]
    fn zero_channel_parts_are_neutral(n in 1usize..=2, h in 1usize..=4, c in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(Shape::new(n, h, h, c), &mut rng);
        let empty = Tensor::<f64>::zeros(Shape::new(n, h, h, 0));
        prop_assert_eq!(&concat_channels(&[&empty, &x]).unwrap(), &x);
        prop_assert_eq!(&concat_channels(&[&x, &empty]).unwrap(), &x);
    }
}

#[test]
fn maxpool_rejects_indivisible_input() {
    let x = Tensor::<f32>::zeros(Shape::new(1, 5, 4, 1));
    assert!(maxpool2d(&x, 2).is_err());
}

#[test]
fn conv_rejects_even_kernel_and_channel_mismatch() {
    let w = Tensor::<f64>::zeros(Shape::new(2, 2, 1, 1));
    assert!(ConvSpec::new(2, 1, w, Tensor::zeros(Shape::new(1, 1, 1, 1))).is_err());
    let x = Tensor::<f64>::zeros(Shape::new(1, 4, 4, 2));
    let w3 = Tensor::<f64>::zeros(Shape::new(3, 3, 3, 1));
    assert!(conv2d_forward(&x, &w3, &Tensor::zeros(Shape::new(1, 1, 1, 1)), 1).is_err());
}
