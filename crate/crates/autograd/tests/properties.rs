use mmn_autograd::Tensor;
use proptest::prelude::*;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #[test]
    fn concat_then_slice_is_identity(a in values(12), b in values(6), seed in values(18)) {
        let ta = Tensor::param(a.clone(), &[3, 4]).unwrap();
        let tb = Tensor::param(b.clone(), &[3, 2]).unwrap();
        let cat = Tensor::concat_last(&[&ta, &tb]).unwrap();
        let back_a = cat.slice_last(0, 4).unwrap();
        let back_b = cat.slice_last(4, 6).unwrap();
        prop_assert_eq!(back_a.data(), &a[..]);
        prop_assert_eq!(back_b.data(), &b[..]);

        let w = Tensor::new(seed[..12].to_vec(), &[3, 4]).unwrap();
        back_a.mul(&w).unwrap().sum().unwrap().backward().unwrap();
        prop_assert_eq!(ta.grad().unwrap(), w.to_vec());
        prop_assert!(tb.grad().unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn downsample_preserves_temporal_mean(x in values(2 * 8 * 3 * 2)) {
        let t = Tensor::new(x, &[2, 8, 3, 2]).unwrap();
        let before = t.mean().unwrap().item();
        let after = t.temporal_downsample_by_2().unwrap().mean().unwrap().item();
        prop_assert!((before - after).abs() < 1e-14);
    }

    #[test]
    fn softmax_rows_are_distributions(x in values(5 * 7)) {
        let y = Tensor::new(x, &[5, 7]).unwrap().softmax().unwrap();
        for row in y.data().chunks(7) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn gradient_accumulation_is_linear(x in values(6), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let t = Tensor::param(x.clone(), &[6]).unwrap();
        let y = t.mul_scalar(a).unwrap().sum().unwrap()
            .add(&t.mul_scalar(b).unwrap().sum().unwrap()).unwrap();
        y.backward().unwrap();
        for g in t.grad().unwrap() {
            prop_assert!((g - (a + b)).abs() < 1e-14);
        }
    }
}
