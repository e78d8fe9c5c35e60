mod common;

use common::oracle;
use eitnet_core::tensor::*;
use eitnet_core::{ConvSpec, SeedRng, Tensor};
use proptest::prelude::*;

fn small(rng: &mut SeedRng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

#[test]
fn conv3d_matches_nested_loops() {
    let mut rng = SeedRng::new(11);
    let x = Tensor::randn(&[2, 4, 4, 4], 1.0, &mut rng);
    let k = Tensor::randn(&[2, 2, 3, 3, 3], 1.0, &mut rng);
    let b = Tensor::randn(&[2], 1.0, &mut rng);
    let spec = ConvSpec::new((3, 3, 3)).padding((1, 0, 1)).stride((1, 2, 1));
    let y = conv3d(&x, &k, Some(&b), &spec).unwrap();
    let (shape, want) = oracle::conv3d(&x, &k, Some(b.data()), [1, 2, 1], [1, 0, 1]);
    assert_eq!(y.shape(), &shape[..]);
    assert!(oracle::max_abs(y.data(), &want) <= 1e-10);
}

#[test]
fn randomized_kernels_match_oracles() {
    let mut rng = SeedRng::new(2024);
    for _ in 0..40 {
        let cin = small(&mut rng, 1, 3);
        let cout = small(&mut rng, 1, 3);
        let ext = [small(&mut rng, 2, 6), small(&mut rng, 2, 6), small(&mut rng, 2, 6)];
        let ker = [small(&mut rng, 1, ext[0]), small(&mut rng, 1, ext[1]), small(&mut rng, 1, ext[2])];
        let stride = [small(&mut rng, 1, 2), small(&mut rng, 1, 2), small(&mut rng, 1, 2)];
        let x = Tensor::randn(&[cin, ext[0], ext[1], ext[2]], 1.0, &mut rng);
        let k = Tensor::randn(&[cout, cin, ker[0], ker[1], ker[2]], 1.0, &mut rng);
        let spec = ConvSpec::new((ker[0], ker[1], ker[2]))
            .stride((stride[0], stride[1], stride[2]))
            .bias(false);
        let y = conv3d(&x, &k, None, &spec).unwrap();
        let (shape, want) = oracle::conv3d(&x, &k, None, stride, [0, 0, 0]);
        assert_eq!(y.shape(), &shape[..]);
        assert!(oracle::max_abs(y.data(), &want) <= 1e-10);

        let p = pool3d_max(&x, &spec).unwrap();
        let (pshape, pwant) = oracle::pool3d_max(&x, ker, stride);
        assert_eq!(p.shape(), &pshape[..]);
        assert_eq!(p.data(), &pwant[..]);
    }
}

#[test]
fn conv3d_rejects_mismatch() {
    let x = Tensor::zeros(&[3, 4, 4, 4]);
    let k = Tensor::zeros(&[2, 2, 3, 3, 3]);
    let err = conv3d(&x, &k, None, &ConvSpec::new((3, 3, 3)).bias(false)).unwrap_err();
    assert!(err.to_string().contains("channels"), "{err}");
}

fn arb_tensor(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv3d_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = SeedRng::new(seed);
        let x = Tensor::randn(&[2, 4, 5, 3], 1.0, &mut rng);
        let y = Tensor::randn(&[2, 4, 5, 3], 1.0, &mut rng);
        let k = Tensor::randn(&[3, 2, 3, 3, 3], 1.0, &mut rng);
        let spec = ConvSpec::same((3, 3, 3)).bias(false);
        let lhs = conv3d(&x.scale(a).add(&y.scale(b)).unwrap(), &k, None, &spec).unwrap();
        let rhs = conv3d(&x, &k, None, &spec).unwrap().scale(a)
            .add(&conv3d(&y, &k, None, &spec).unwrap().scale(b)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-9);
    }

    #[test]
    fn relu_and_pool_are_monotone(seed in any::<u64>()) {
        let mut rng = SeedRng::new(seed);
        let x = Tensor::randn(&[2, 3, 4, 4], 1.0, &mut rng);
        let bump = Tensor::uniform(&[2, 3, 4, 4], 0.0, 1.0, &mut rng);
        let y = x.add(&bump).unwrap();
        let spec = ConvSpec::new((2, 2, 2)).stride((1, 2, 2));
        let (px, py) = (pool3d_max(&x, &spec).unwrap(), pool3d_max(&y, &spec).unwrap());
        prop_assert!(px.data().iter().zip(py.data()).all(|(a, b)| a <= b));
        let (rx, ry) = (relu(&x), relu(&y));
        prop_assert!(rx.data().iter().zip(ry.data()).all(|(a, b)| a <= b));
    }

    #[test]
    fn softmax_normalised_and_shift_invariant(v in arb_tensor(8), c in -50.0f64..50.0) {
        let t = Tensor::from_vec(v.clone());
        let p = softmax(&t, 0).unwrap();
        prop_assert!(p.data().iter().all(|&x| x > 0.0));
        prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let q = softmax(&t.map(|x| x + c), 0).unwrap();
        prop_assert!(p.max_abs_diff(&q) <= 1e-12);
    }

    #[test]
    fn dropout_reproducible(seed in any::<u64>(), p in 0.0f64..1.0) {
        let x = Tensor::full(&[64], 1.0);
        prop_assert_eq!(dropout(&x, p, seed).unwrap(), dropout(&x, p, seed).unwrap());
    }
}
