mod common;

use common::{bimodal, seeded_density, triangular, ErrorOracle};
use devolve_core::data::{synthetic_dataset, SyntheticSpec};
use devolve_core::nn::{train, Architecture, LossKind, TrainConfig};
use devolve_core::quantizer::{
    dequantize, fit_optimal, nearest_code, optimal_levels, quantization_error, quantize, quantize_network,
    solve_optimal_levels, uniform_levels, Density, EvalSet, DENSITY_BINS, QuantConfig, QuantizationSpec,
    QuantizedModel, Rounding, Scheme,
};
use devolve_core::rng;
use devolve_core::sparsity::SparsityMask;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn uniform_density_gives_uniform_levels() {
    let d = Density::from_masses(-2.0, 3.0, &[1.0; 256]).unwrap();
    for bits in 1..=8 {
        let opt = optimal_levels(&d, bits).unwrap();
        let uni = uniform_levels(-2.0, 3.0, bits, Scheme::UniformAffine).unwrap();
        for (a, b) in opt.iter().zip(&uni) {
            assert!((a - b).abs() <= 1e-9, "bits {bits}: {a} vs {b}");
        }
    }
}

#[test]
fn one_bit_is_the_endpoints() {
    for seed in 0..5 {
        let d = seeded_density(seed);
        assert_eq!(optimal_levels(&d, 1).unwrap(), vec![d.lo(), d.hi()]);
    }
}

#[test]
fn spacing_condition_holds_on_seeded_densities() {
    for seed in 0..5 {
        let d = seeded_density(seed);
        for bits in [2, 3, 4, 8] {
            let o = solve_optimal_levels(&d, bits).unwrap();
            let l = &o.levels;
            assert_eq!(l.len(), 1 << bits);
            assert_eq!(l[0], d.lo());
            assert_eq!(*l.last().unwrap(), d.hi());
            assert!(l.windows(2).all(|w| w[0] < w[1]));
            let prods: Vec<f64> = l.windows(2).map(|w| (w[1] - w[0]) * d.eval(0.5 * (w[0] + w[1]))).collect();
            let c = prods.iter().sum::<f64>() / prods.len() as f64;
            for w in prods.windows(2) {
                assert!((w[0] - w[1]).abs() <= 1e-6 * c, "seed {seed} bits {bits}");
            }
        }
    }
}

#[test]
fn error_functional_matches_independent_integration() {
    for (name, d) in [("triangular", triangular()), ("bimodal", bimodal()), ("seeded", seeded_density(2))] {
        let oracle = ErrorOracle::new(&d, 400_000);
        let mut r = rng::stream(7, &[2]);
        for _ in 0..20 {
            let k = r.random_range(2..9);
            let mut levels: Vec<f64> = (0..k).map(|_| r.random_range(d.lo()..d.hi())).collect();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            let a = quantization_error(&levels, &d).unwrap();
            let b = oracle.error(&levels);
            assert!((a - b).abs() < 1e-6 * (d.hi() - d.lo()), "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn triangular_levels_are_the_spacing_solution() {
    // the spacing condition has the closed form l² = const on p = 2w
    // with gaps chosen so (l1 − 0)·(l1) = (l2 − l1)(l1 + l2) = (1 − l2)(l2 + 1)
    let d = triangular();
    let l = optimal_levels(&d, 2).unwrap();
    let f = |a: f64, b: f64| (b - a) * (a + b);
    let (p0, p1, p2) = (f(l[0], l[1]), f(l[1], l[2]), f(l[2], l[3]));
    assert!((p0 - p1).abs() < 1e-3 && (p1 - p2).abs() < 1e-3, "{l:?}");
}

#[test]
fn stochastic_rounding_is_unbiased() {
    let spec = QuantizationSpec {
        scheme: Scheme::UniformAffine,
        bits: 1,
        rounding: Rounding::Stochastic,
        levels: vec![0.5, 1.0],
        seed: 11,
        density_bins: None,
    };
    let codes = quantize(&vec![0.7; 100_000], None, &spec, 0).unwrap();
    let mean = dequantize(&codes, &spec).unwrap().iter().sum::<f64>() / 1e5;
    assert!((mean - 0.7).abs() <= 0.005, "{mean}");
}

#[test]
fn affine_error_halves_as_levels_double_on_uniform() {
    let d = Density::from_masses(0.0, 1.0, &[1.0; 32]).unwrap();
    let e1 = quantization_error(&[0.0, 1.0], &d).unwrap();
    let e2 = quantization_error(&[0.0, 0.5, 1.0], &d).unwrap();
    assert!((e1 - 0.25).abs() < 1e-14);
    assert!((e2 - 0.125).abs() < 1e-14);
}

proptest! {
    #[test]
    fn nearest_is_closest_and_within_half_gap(
        raw in proptest::collection::vec(-10.0f64..10.0, 2..20),
        ws in proptest::collection::vec(-12.0f64..12.0, 1..50),
    ) {
        let mut levels = raw;
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        prop_assume!(levels.len() >= 2);
        for w in ws {
            let c = nearest_code(&levels, w);
            let err = (levels[c] - w).abs();
            for l in &levels {
                prop_assert!(err <= (l - w).abs());
            }
            if w >= levels[0] && w <= *levels.last().unwrap() {
                let i = levels.partition_point(|&l| l <= w).clamp(1, levels.len() - 1);
                prop_assert!(err <= 0.5 * (levels[i] - levels[i - 1]) + 1e-12);
            }
        }
    }

    #[test]
    fn levels_survive_a_round_trip(seed in 0u64..1000, bits in 1u32..6) {
        let mut r = rng::stream(seed, &[3]);
        let v: Vec<f64> = (0..64).map(|_| r.random_range(-3.0..3.0)).collect();
        for rounding in [Rounding::Nearest, Rounding::Stochastic] {
            let s = QuantizationSpec::build(Scheme::UniformAffine, bits, rounding, &v, seed).unwrap();
            let back = dequantize(&quantize(&s.levels, None, &s, 0).unwrap(), &s).unwrap();
            prop_assert_eq!(&back, &s.levels);
        }
    }
}

#[test]
fn stochastic_streams_differ_per_tensor_and_replay() {
    let spec = QuantizationSpec::build(Scheme::UniformAffine, 2, Rounding::Stochastic, &[0.0, 1.0], 5).unwrap();
    let w = vec![0.4; 200];
    let a = quantize(&w, None, &spec, 0).unwrap();
    assert_eq!(a, quantize(&w, None, &spec, 0).unwrap());
    assert_ne!(a, quantize(&w, None, &spec, 1).unwrap());
}

struct Desk {
    net: devolve_core::nn::Network,
    test_x: devolve_core::Tensor,
    test_y: Vec<usize>,
}

fn desk_mlp() -> Desk {
    let set = synthetic_dataset(&SyntheticSpec::blobs(1200, 4, 16, 21)).unwrap();
    let (train_set, test_set) = set.split(400).unwrap();
    let mut net = Architecture::mlp(&[16, 64, 4]).build(21).unwrap();
    let cfg = TrainConfig { epochs: 20, lr: 0.05, batch_size: 32, seed: 21 };
    train(&mut net, &train_set.to_batch(), LossKind::CrossEntropy, &cfg, None).unwrap();
    Desk {
        net,
        test_x: test_set.inputs.clone(),
        test_y: test_set.labels.clone().unwrap(),
    }
}

fn keep_every(net: &devolve_core::nn::Network, keep: usize) -> SparsityMask {
    let mut mask = SparsityMask::empty(net);
    for t in net.weight_tensors() {
        for i in 0..net.param(t).unwrap().len() {
            if i % keep != 0 {
                mask.prune(t, i).unwrap();
            }
        }
    }
    mask
}

#[test]
fn identity_quantization_changes_nothing() {
    let desk = desk_mlp();
    let mask = keep_every(&desk.net, 5);
    let cfg = QuantConfig { scheme: Scheme::Identity, ..QuantConfig::default() };
    let eval = EvalSet { inputs: &desk.test_x, labels: Some(&desk.test_y) };
    let (model, q, report) = quantize_network(&desk.net, &mask, &cfg, Some(eval)).unwrap();
    assert_eq!(q, mask.applied(&desk.net).unwrap());
    assert_eq!(report.accuracy_delta(), Some(0.0));
    assert_eq!(report.divergence, Some(0.0));
    assert_eq!(model.tensors.len(), desk.net.params().len());
}

#[test]
fn one_table_per_tensor_and_json_round_trip() {
    let desk = desk_mlp();
    let mask = keep_every(&desk.net, 5);
    let cfg = QuantConfig { scheme: Scheme::OptimalDensity, bits: 4, rounding: Rounding::Nearest, ..QuantConfig::default() };
    let (model, q, _) = quantize_network(&desk.net, &mask, &cfg, None).unwrap();
    assert_eq!(model.tensors.len(), 4);
    for t in &model.tensors {
        assert_eq!(t.spec.levels.len(), 16);
        // tables are stored as f32
        assert!(t.spec.levels.iter().all(|&l| l as f32 as f64 == l));
    }
    let back = QuantizedModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_network(&desk.net).unwrap(), q);
    assert_eq!(back.mask(), mask);
}

#[test]
fn eight_bit_stochastic_at_80_percent_costs_at_most_one_point() {
    let desk = desk_mlp();
    let mask = keep_every(&desk.net, 5);
    let cfg = QuantConfig { scheme: Scheme::UniformAffine, bits: 8, rounding: Rounding::Stochastic, seed: 4, ..QuantConfig::default() };
    let eval = EvalSet { inputs: &desk.test_x, labels: Some(&desk.test_y) };
    let (_, _, report) = quantize_network(&desk.net, &mask, &cfg, Some(eval)).unwrap();
    assert!(report.accuracy_delta().unwrap().abs() <= 0.01, "{report:?}");
}

#[test]
fn four_bit_optimal_at_90_percent_costs_at_most_two_points() {
    let desk = desk_mlp();
    let mask = keep_every(&desk.net, 10);
    let cfg = QuantConfig { scheme: Scheme::OptimalDensity, bits: 4, rounding: Rounding::Nearest, ..QuantConfig::default() };
    let eval = EvalSet { inputs: &desk.test_x, labels: Some(&desk.test_y) };
    let (_, _, report) = quantize_network(&desk.net, &mask, &cfg, Some(eval)).unwrap();
    assert!(report.accuracy_delta().unwrap().abs() <= 0.02, "{report:?}");
}

#[test]
fn scale_scheme_keeps_zero_and_clips() {
    let v = [-0.5, -0.1, 0.2, 1.0];
    let s = QuantizationSpec::build(Scheme::UniformScale, 2, Rounding::Nearest, &v, 0).unwrap();
    assert_eq!(s.levels, vec![-2.0, -1.0, 0.0, 1.0]);
    let back = dequantize(&quantize(&[1.0, 5.0, -9.0], None, &s, 0).unwrap(), &s).unwrap();
    assert_eq!(back, vec![1.0, 1.0, -2.0]);
}

#[test]
#[ignore = "diagnostic"]
fn print_two_bit_comparison() {
    for (name, d) in [("triangular", triangular()), ("bimodal", bimodal())] {
        let oracle = ErrorOracle::new(&d, 200_000);
        let opt = optimal_levels(&d, 2).unwrap();
        let uni = uniform_levels(0.0, 1.0, 2, Scheme::UniformAffine).unwrap();
        let (bf, be) = oracle.brute_force_two_bit(1e-3);
        println!(
            "{name}: optimal {opt:?} err {:.6}; affine err {:.6}; brute force {bf:?} err {be:.6}",
            quantization_error(&opt, &d).unwrap(),
            quantization_error(&uni, &d).unwrap()
        );
    }
}


#[test]
fn small_samples_fall_back_to_a_coarser_histogram() {
    let n0 = Normal::new(0.0, 1.0).unwrap();
    for seed in 0..4u64 {
        let mut r = rng::stream(seed, &[64]);
        let v: Vec<f64> = (0..64).map(|_| n0.sample(&mut r)).collect();
        for bits in [2u32, 3, 4] {
            let (levels, bins) = fit_optimal(&v, bits).unwrap();
            assert!(bins.is_power_of_two() && (2..=DENSITY_BINS).contains(&bins));
            let d = Density::from_values(&v, bins).unwrap();
            let check = solve_optimal_levels(&d, bits).unwrap();
            assert_eq!(check.levels, levels);
            assert!(check.residual <= 1e-6);
            assert_eq!(levels[0], d.lo());
            assert_eq!(*levels.last().unwrap(), d.hi());
        }
    }
}
