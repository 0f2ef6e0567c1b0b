mod common;

use common::*;
use hodgeconv::filters::{laguerre_apply, numeric_support, FilterBank};
use hodgeconv::laplacian::{hodge_laplacian, spectral_decompose, spectral_filter_reference, HodgeLaplacian};
use hodgeconv::layers::{HLConvLayer, Model};
use hodgeconv::pooling::{build_hierarchy, pool_backward, pool_signal, pool_signal_cached, PoolMode, PoolOptions};
use hodgeconv::signal::SimplexSignal;
use hodgeconv::sparse::CsrMatrix;
use hodgeconv::train::{fit, generate_synthetic, saliency_map, SyntheticSpec, TrainConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_signal(r: &mut impl Rng, dim: usize, channels: usize) -> SimplexSignal {
    SimplexSignal::from_vec(dim, channels, (0..dim * channels).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `P L Pᵀ` where simplex `i` moves to position `perm[i]`.
fn permute_laplacian(l: &HodgeLaplacian, perm: &[usize]) -> HodgeLaplacian {
    let n = l.dim();
    let matrix = CsrMatrix::from_triplets(n, n, l.matrix.triplets().map(|(r, c, v)| (perm[r], perm[c], v)));
    HodgeLaplacian { k: l.k, matrix }
}

fn permute_signal(f: &SimplexSignal, perm: &[usize]) -> SimplexSignal {
    let mut out = SimplexSignal::zeros(f.dim(), f.channels());
    for i in 0..f.dim() {
        for c in 0..f.channels() {
            out.set(perm[i], c, f.get(i, c));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacians_are_symmetric_and_psd(seed in any::<u64>(), fill in any::<bool>(), k in 0usize..2) {
        let mut r = rng(seed);
        let c = random_complex(&mut r, 10, fill);
        let l = hodge_laplacian(&c, k).unwrap();
        prop_assert!(l.matrix.is_symmetric());
        let d = spectral_decompose(&l).unwrap();
        prop_assert!(d.eigenvalues.iter().all(|&v| v >= 0.0));
        let x: Vec<f64> = (0..l.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        let lx = l.matrix.mul_vec(&x);
        let quad: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
        prop_assert!(quad >= -1e-12);
    }

    #[test]
    fn boundary_of_boundary_vanishes(seed in any::<u64>()) {
        let c = random_complex(&mut rng(seed), 10, true);
        let b1 = c.boundary_1();
        let b2 = c.boundary_2().unwrap();
        for row in b1.compose(&b2).unwrap() {
            prop_assert!(row.iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn laguerre_matches_spectral_reference(seed in any::<u64>(), order in 1usize..7, k in 0usize..2) {
        let mut r = rng(seed);
        let c = random_complex_max_edges(&mut r, 30);
        let l = hodge_laplacian(&c, k).unwrap();
        let scale = r.random_range(0.5..4.0);
        let theta: Vec<f64> = (0..order).map(|_| r.random_range(-1.0..1.0)).collect();
        let bank = FilterBank::new(order, 1, 1, scale, theta).unwrap();
        let f = random_signal(&mut r, l.dim(), 1);
        let fast = laguerre_apply(&l, &bank, &f).unwrap();
        let slow = spectral_filter_reference(&l, bank.spectrum(0, 0), &f).unwrap();
        prop_assert!(fast.max_abs_diff(&slow) < 1e-8);
    }

    #[test]
    fn filters_stay_inside_hop_neighbourhood(seed in any::<u64>(), order in 1usize..5) {
        let mut r = rng(seed);
        let fill = r.random_bool(0.5);
        let c = random_complex(&mut r, 10, fill);
        let k = if c.n_edges() > 0 { 1 } else { 0 };
        let l = hodge_laplacian(&c, k).unwrap();
        let source = r.random_range(0..l.dim());
        let theta: Vec<f64> = (0..order).map(|_| r.random_range(-1.0..1.0)).collect();
        let bank = FilterBank::new(order, 1, 1, 1.0, theta).unwrap();
        let out = laguerre_apply(&l, &bank, &SimplexSignal::pulse(l.dim(), source)).unwrap();
        let hops = c.hop_distances(k, source).unwrap();
        for i in numeric_support(&out, 0.0) {
            prop_assert!(matches!(hops[i], Some(h) if h < order));
        }
    }

    #[test]
    fn hlconv_is_permutation_equivariant(seed in any::<u64>(), k in 0usize..2) {
        let mut r = rng(seed);
        let c = random_complex_max_edges(&mut r, 20);
        let l = hodge_laplacian(&c, k).unwrap();
        let mut layer = HLConvLayer::zeros(k, 3, 2, 3, 2.5).unwrap();
        layer.init_glorot(&mut r);
        for b in &mut layer.bias {
            *b = r.random_range(-0.5..0.5);
        }
        let f = random_signal(&mut r, l.dim(), 2);
        let mut perm: Vec<usize> = (0..l.dim()).collect();
        perm.shuffle(&mut r);
        let (out, _) = layer.forward(&l, &f).unwrap();
        let (out_p, _) = layer.forward(&permute_laplacian(&l, &perm), &permute_signal(&f, &perm)).unwrap();
        prop_assert!(out_p.max_abs_diff(&permute_signal(&out, &perm)) < 1e-12);
    }

    #[test]
    fn pooling_plans_partition_the_simplices(seed in any::<u64>(), k in 0usize..2) {
        let mut r = rng(seed);
        let c = random_complex_max_edges(&mut r, 30);
        for plan in build_hierarchy(&c, k, 2, PoolOptions::default()).unwrap() {
            let singles = plan.singletons().count();
            let pairs = plan.coarse_count() - singles;
            prop_assert_eq!(plan.fine_count, 2 * pairs + singles);
            let mut seen = vec![0usize; plan.fine_count];
            for (cluster, &(a, b)) in plan.pairs.iter().enumerate() {
                for s in std::iter::once(a).chain(b) {
                    seen[s] += 1;
                    prop_assert_eq!(plan.cluster_of[s], cluster);
                }
            }
            prop_assert!(seen.iter().all(|&n| n == 1));
            plan.coarse_complex.boundary_1().check_structure().unwrap();
            plan.coarse_complex.boundary_2().unwrap().check_structure().unwrap();
        }
    }

    #[test]
    fn pooled_signals_are_bounded_and_adjoint(seed in any::<u64>(), k in 0usize..2) {
        let mut r = rng(seed);
        let c = random_complex_max_edges(&mut r, 30);
        let plan = &build_hierarchy(&c, k, 1, PoolOptions::default()).unwrap()[0];
        let constant = SimplexSignal::from_vec(plan.fine_count, 1, vec![3.25; plan.fine_count]).unwrap();
        let pooled = pool_signal(plan, &constant, PoolMode::Avg).unwrap();
        prop_assert!(pooled.values().iter().all(|&v| v == 3.25));

        let f = random_signal(&mut r, plan.fine_count, 2);
        let avg = pool_signal(plan, &f, PoolMode::Avg).unwrap();
        let (max, cache) = pool_signal_cached(plan, &f, PoolMode::Max).unwrap();
        for (cl, &(a, b)) in plan.pairs.iter().enumerate() {
            for ch in 0..2 {
                let lo = b.map_or(f.get(a, ch), |b| f.get(a, ch).min(f.get(b, ch)));
                prop_assert!(lo <= avg.get(cl, ch) && avg.get(cl, ch) <= max.get(cl, ch));
            }
        }
        // <pool(f), g> = <f, poolᵀ(g)> in both modes (max with its argmax fixed).
        let g = random_signal(&mut r, plan.coarse_count(), 2);
        for (mode, pooled) in [(PoolMode::Avg, &avg), (PoolMode::Max, &max)] {
            let back = pool_backward(plan, &g, mode, &cache).unwrap();
            let lhs: f64 = pooled.values().iter().zip(g.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.values().iter().zip(back.values()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn saliency_ignores_sample_order(seed in any::<u64>()) {
        let spec = SyntheticSpec { seed, n_samples: 12, n_nodes: 6, time_len: 8, density: 0.5, ..SyntheticSpec::default() };
        let data = generate_synthetic(&spec).unwrap();
        let model = Model::new(learning_config(seed), &data.atlas).unwrap();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng(seed));
        let a = saliency_map(&model, &data).unwrap();
        let b = saliency_map(&model, &data.permuted(&order)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn eval_forward_is_bitwise_deterministic(seed in any::<u64>()) {
        let c = five_node_complex(seed);
        let model = Model::new(tiny_config(PoolMode::Max), &c).unwrap();
        let input = random_input(&c, 10, seed);
        let (a, _) = model.forward(&input, &mut rng(1), false).unwrap();
        let (b, _) = model.forward(&input, &mut rng(2), false).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged(seed in any::<u64>()) {
        let spec = SyntheticSpec { seed, n_samples: 10, n_nodes: 6, time_len: 8, density: 0.5, ..SyntheticSpec::default() };
        let data = generate_synthetic(&spec).unwrap();
        let mut model = Model::new(learning_config(seed), &data.atlas).unwrap();
        let before = model.clone();
        let cfg = TrainConfig { learning_rate: 0.0, weight_decay: 0.0, epochs: 3, batch_size: 4, seed, ..TrainConfig::default() };
        let report = fit(&mut model, &data, &cfg).unwrap();
        prop_assert_eq!(report.history.len(), 3);
        prop_assert_eq!(model.parameters(), before.parameters());
    }
}
