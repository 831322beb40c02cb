use proptest::prelude::*;
use ssce_core::baselines::{toeplitz_ap, toeplitz_residual, ToeplitzConfig};
use ssce_core::data::dataset::{read_dataset_from, write_dataset_to};
use ssce_core::data::synthetic::{KaConfig, SyntheticConfig};
use ssce_core::data::windows::{extract, DataMap, WindowSpec};
use ssce_core::downstream::{amf, anmf, roc, wls_amplitude};
use ssce_core::linalg::eigenvalues;
use ssce_core::model::checkpoint::{parse_checkpoint, write_checkpoint_to};
use ssce_core::model::{AnyModel, Checkpoint, KaModel, KaModelConfig, Model, SsceConfig, SsceModel};
use ssce_core::trainer::{Adam, TrainConfig};
use ssce_core::{ComplexMatrix, C64};

fn complex() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn window(rows: usize, d: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec(complex(), rows * d).prop_map(move |v| ComplexMatrix::new(rows, d, v).unwrap())
}

fn hpd(d: usize) -> impl Strategy<Value = ComplexMatrix> {
    window(d + 1, d).prop_map(|x| x.adjoint_matmul(&x).add_diagonal(0.1))
}

fn small_model() -> SsceModel {
    let cfg = SsceConfig { dim: 4, hidden_layers: 2, width: 10, layers: 2, towers: 3, ..SsceConfig::default() };
    SsceModel::init(cfg, 12).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ssce_is_row_permutation_invariant(w in window(7, 4), perm in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle()) {
        let model = small_model();
        let s = model.estimate(&w).unwrap();
        let permuted = w.select_rows(&perm);
        let sp = model.estimate(&permuted).unwrap();
        prop_assert!(s.sub(&sp).frobenius_norm() <= 1e-10 * s.frobenius_norm());
    }

    #[test]
    fn ssce_output_is_hermitian_pd(w in window(5, 4)) {
        let model = small_model();
        let s = model.estimate(&w).unwrap();
        prop_assert!(s.hermitian_asymmetry() < 1e-12);
        let min = eigenvalues(&s).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= model.config().ridge - 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one(w in window(6, 4)) {
        for tower in small_model().attention_maps(&w).unwrap() {
            for map in tower {
                for i in 0..map.rows() {
                    let sum: C64 = map.row(i).iter().sum();
                    prop_assert!((sum.re - 1.0).abs() < 1e-12 && sum.im == 0.0);
                }
            }
        }
    }

    #[test]
    fn roc_is_invariant_to_positive_scaling(
        h0 in prop::collection::vec(0.0..10.0f64, 1..40),
        h1 in prop::collection::vec(0.0..12.0f64, 1..40),
        c in 0.01..100.0f64,
    ) {
        let a = roc(&h0, &h1, 0.1).unwrap();
        let scale = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let b = roc(&scale(&h0), &scale(&h1), 0.1).unwrap();
        prop_assert_eq!(&a.fpr, &b.fpr);
        prop_assert_eq!(&a.tpr, &b.tpr);
        prop_assert!((a.pauc01 - b.pauc01).abs() < 1e-15);
        prop_assert!(a.pauc01 >= 0.0 && a.pauc01 <= 1.0);
    }

    #[test]
    fn anmf_lies_in_unit_interval(z in prop::collection::vec(complex(), 4), s in prop::collection::vec(complex(), 4), p in hpd(4)) {
        prop_assume!(z.iter().any(|v| v.norm() > 1e-6) && s.iter().any(|v| v.norm() > 1e-6));
        let v = anmf(&z, &s, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(amf(&z, &s, &p).unwrap() >= 0.0);
    }

    #[test]
    fn wls_recovers_noiseless_amplitude(a in complex(), s in prop::collection::vec(complex(), 5), p in hpd(5)) {
        prop_assume!(s.iter().map(|v| v.norm_sqr()).sum::<f64>() > 1e-3);
        let z: Vec<C64> = s.iter().map(|v| a * v).collect();
        let est = wls_amplitude(&z, &s, &p).unwrap();
        prop_assert!((est - a).norm() <= 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn toeplitz_output_is_toeplitz_and_psd(w in window(6, 4)) {
        let cfg = ToeplitzConfig::default();
        let out = toeplitz_ap(&w, &cfg).unwrap();
        let scale = out.estimate.max_abs().max(1.0);
        prop_assert!(out.estimate.hermitian_asymmetry() < 1e-8);
        prop_assert!(toeplitz_residual(&out.estimate) <= 1e-8 * scale);
        let min = eigenvalues(&out.estimate).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-8 * scale);
    }
}

/// Every extracted window, checked against the geometry cell by cell on a
/// map whose entries encode their own coordinates.
#[test]
fn extraction_never_uses_guard_or_test_cells() {
    for spec in [
        WindowSpec { d: 3, guard: 1, half_width: 2, stride_time: 1 },
        WindowSpec { d: 2, guard: 0, half_width: 1, stride_time: 2 },
        WindowSpec { d: 4, guard: 2, half_width: 3, stride_time: 3 },
        WindowSpec::default(),
    ] {
        let (n_range, n_time) = (2 * (spec.guard + spec.half_width) + 5, spec.d + 7);
        let map = DataMap::from_fn(n_range, n_time, |r, t| C64::new(r as f64, t as f64));
        let pairs = extract(&map, &spec).unwrap();
        let reach = spec.guard + spec.half_width;
        let per_range = (n_time - spec.d) / spec.stride_time + 1;
        assert_eq!(pairs.len(), (n_range - 2 * reach) * per_range);
        for p in &pairs {
            for (k, z) in p.pair.label.iter().enumerate() {
                assert_eq!(*z, C64::new(p.range as f64, (p.time + k) as f64));
            }
            let f = &p.pair.features;
            assert_eq!(f.rows(), 2 * spec.half_width);
            let mut seen = Vec::new();
            for i in 0..f.rows() {
                let r = f[(i, 0)].re as usize;
                let dist = r.abs_diff(p.range);
                assert!(dist > spec.guard && dist <= reach, "range {r} for test cell {}", p.range);
                for k in 0..spec.d {
                    assert_eq!(f[(i, k)], C64::new(r as f64, (p.time + k) as f64));
                }
                seen.push(r);
            }
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), f.rows());
        }
    }
}

#[test]
fn dataset_round_trip_is_exact() {
    for pairs in [
        SyntheticConfig { n_envs: 25, seed: 3, ..SyntheticConfig::default() }.generate().unwrap(),
        KaConfig { n_envs: 10, ..KaConfig::example(4) }.generate().unwrap(),
    ] {
        let mut bytes = Vec::new();
        write_dataset_to(&mut bytes, serde_json::json!({ "note": "round trip" }), &pairs).unwrap();
        let (header, back) = read_dataset_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(header.count, pairs.len());
        assert_eq!(header.config["note"], "round trip");
        assert_eq!(back, pairs);
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let ssce = SsceModel::init(SsceConfig { dim: 3, width: 5, towers: 2, ..SsceConfig::default() }, 9).unwrap();
    let ka = KaModel::init(KaModelConfig::new(3, 10)).unwrap();
    for model in [AnyModel::Ssce(ssce), AnyModel::Ka(ka)] {
        let adam = Adam::new(&TrainConfig::desk(), &model.params());
        let ckpt = Checkpoint {
            model,
            seed: 5,
            iteration: 123,
            optimizer: Some(adam.state().clone()),
            run_config: serde_json::json!({ "k": [1, 2] }),
        };
        let mut bytes = Vec::new();
        write_checkpoint_to(&mut bytes, &ckpt).unwrap();
        let back = parse_checkpoint(&bytes).unwrap();
        assert_eq!(back, ckpt);
        let mut again = Vec::new();
        write_checkpoint_to(&mut again, &back).unwrap();
        assert_eq!(again, bytes);
    }
}
