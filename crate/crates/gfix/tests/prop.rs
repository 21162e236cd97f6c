//! Property tests over the serialization and coding layers.

use proptest::collection::vec;
use proptest::prelude::*;

use gfix::codec::{self, EmpiricalPmf, ModulationGroup, QuantizedGroup};
use gfix::linalg::Matrix;
use gfix::tensor::{Tensor, TensorArchive};

fn tensor_strategy(index: usize) -> impl Strategy<Value = Tensor> {
    (vec(1usize..=4, 1..=4), any::<bool>()).prop_flat_map(move |(shape, f32_kind)| {
        let numel: usize = shape.iter().product();
        let name = format!("t{index}");
        if f32_kind {
            vec(-1e6f32..1e6f32, numel)
                .prop_map(move |data| Tensor::from_f32(&name, shape.clone(), data).unwrap())
                .boxed()
        } else {
            vec(-1e12f64..1e12f64, numel)
                .prop_map(move |data| Tensor::from_f64(&name, shape.clone(), data).unwrap())
                .boxed()
        }
    })
}

fn archive_strategy() -> impl Strategy<Value = TensorArchive> {
    (0usize..6).prop_flat_map(|n| {
        let tensors: Vec<_> = (0..n).map(tensor_strategy).collect();
        (tensors, vec(("[a-z]{1,8}", "[ -~]{0,12}"), 0..4)).prop_map(|(ts, meta)| {
            let mut a = TensorArchive::new();
            for t in ts {
                a.insert(t).unwrap();
            }
            for (k, v) in meta {
                a.set_metadata(k, v);
            }
            a
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn archive_round_trip_is_identity(archive in archive_strategy()) {
        let bytes = archive.to_bytes().unwrap();
        let back = TensorArchive::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &archive);
        // and re-serialization is byte-identical
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn stream_round_trip_is_identity(
        rank in 1usize..=4,
        count in 1usize..=3,
        seed in any::<u32>(),
        step in 1e-6f64..10.0,
    ) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed as u64);
        let n = rank * rank * count;
        let symbols: Vec<i32> = (0..n).map(|_| rng.gen_range(-1000..=1000)).collect();
        let g = QuantizedGroup {
            rank,
            layer_ids: (0..count).map(|i| format!("l{i}")).collect(),
            step,
            symbols,
        };
        let bytes = codec::encode_groups(std::slice::from_ref(&g)).unwrap();
        prop_assert_eq!(codec::decode_groups(&bytes).unwrap(), vec![g]);
    }

    #[test]
    fn quantization_error_within_half_step(
        values in vec(-100.0f64..100.0, 1..=16),
        step in 1e-3f64..10.0,
    ) {
        let r = 1;
        let maps: Vec<Matrix> = values
            .iter()
            .map(|&v| Matrix::from_vec(r, r, vec![v]).unwrap())
            .collect();
        let ids = (0..values.len()).map(|i| format!("l{i}")).collect();
        let g = ModulationGroup::new(r, ids, maps).unwrap();
        let q = codec::quantize(&g, step).unwrap();
        let back = codec::dequantize(&q).unwrap();
        for (orig, rec) in g.flatten().iter().zip(back.flatten()) {
            prop_assert!((orig - rec).abs() <= step / 2.0 * (1.0 + 1e-12));
        }
    }

    // Requantizing lattice data by an integer factor coarsens the histogram,
    // so both the distinct-symbol count and the estimated rate can only drop.
    // (For arbitrary off-lattice data the relation is a trend, not a theorem:
    // {0.9, 1.1} has one distinct symbol at step 1 but two at step 2.)
    #[test]
    fn requantization_by_integer_factor_is_monotone(
        ks in vec(-50i32..=50, 2..=64),
        step in 1e-3f64..1.0,
        m in 2i32..=5,
    ) {
        let values: Vec<f64> = ks.iter().map(|&k| k as f64 * step).collect();
        let maps: Vec<Matrix> =
            values.iter().map(|&v| Matrix::from_vec(1, 1, vec![v]).unwrap()).collect();
        let ids = (0..values.len()).map(|i| format!("l{i}")).collect();
        let g = ModulationGroup::new(1, ids, maps).unwrap();

        let fine = codec::quantize(&g, step).unwrap();
        let coarse = codec::quantize(&g, step * m as f64).unwrap();

        let distinct = |symbols: &[i32]| {
            let mut s: Vec<i32> = symbols.to_vec();
            s.sort_unstable();
            s.dedup();
            s.len()
        };
        prop_assert!(distinct(&coarse.symbols) <= distinct(&fine.symbols));

        let rate = |symbols: &[i32]| {
            let pmf = EmpiricalPmf::build(symbols).unwrap();
            pmf.rate_estimate(symbols).unwrap()
        };
        prop_assert!(rate(&coarse.symbols) <= rate(&fine.symbols) + 1e-9);

        // magnitude bound holds for any data and any pair of steps
        let max_abs = |symbols: &[i32]| symbols.iter().map(|s| s.unsigned_abs()).max().unwrap();
        prop_assert!(max_abs(&coarse.symbols) <= max_abs(&fine.symbols));
    }

    #[test]
    fn pmf_masses_sum_to_one(symbols in vec(-100i32..=100, 1..=256)) {
        let pmf = EmpiricalPmf::build(&symbols).unwrap();
        let sum: f64 = pmf.alphabet().iter().map(|&s| pmf.prob(s).unwrap()).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        let freqs = pmf.coder_freqs();
        prop_assert!(freqs.iter().all(|&f| f >= 1));
        let rate = pmf.rate_estimate(&symbols).unwrap();
        prop_assert!(rate >= 0.0);
    }

    #[test]
    fn reshape_round_trip(shape in vec(1usize..=5, 2..=4), seed in any::<u32>()) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed as u64);
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = Tensor::from_f64("t", shape.clone(), data).unwrap();
        for axis in 1..shape.len() {
            let m = t.reshape_2d(axis).unwrap();
            let back =
                Tensor::from_matrix_shaped("t", &m, shape.clone(), gfix::tensor::Dtype::F64)
                    .unwrap();
            prop_assert_eq!(&back, &t);
        }
    }
}
