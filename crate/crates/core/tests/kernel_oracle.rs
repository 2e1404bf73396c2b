use approx::assert_relative_eq;
use mkbo_core::oracle::{feature_weights, implied_weight_vector, reweighted_weights, weighted_eval, MonomialBasis};
use mkbo_core::{gram, Anchor, KernelSpec, ReweightSet};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn anchors(rng: &mut ChaCha8Rng, n: usize, count: usize) -> ReweightSet {
    ReweightSet::new(
        (0..count)
            .map(|_| Anchor {
                x: point(rng, n),
                alpha: rng.random_range(-1.0..1.0),
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn reweighted_polynomial_matches_feature_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for degree in 1..=3u32 {
        for n in 1..=3usize {
            for count in 1..=5usize {
                let set = anchors(&mut rng, n, count);
                let spec = KernelSpec::polynomial(degree).unwrap().reweight(set.clone()).unwrap();
                let basis = MonomialBasis::new(n, degree);
                let tau = feature_weights(spec.kind(), &basis).unwrap();
                let w = reweighted_weights(&tau, &set, &basis).unwrap();
                for _ in 0..5 {
                    let (a, b) = (point(&mut rng, n), point(&mut rng, n));
                    let direct = spec.eval2(&a, &b).unwrap();
                    let oracle = weighted_eval(&w, &[&a, &b], &basis).unwrap();
                    assert_relative_eq!(direct, oracle, max_relative = 1e-9, epsilon = 1e-14);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked >= 200);
}

#[test]
fn nested_reweighting_composes_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..=2usize {
        let (e1, e2) = (anchors(&mut rng, n, 3), anchors(&mut rng, n, 2));
        let spec = KernelSpec::polynomial(2)
            .unwrap()
            .reweight(e1.clone())
            .unwrap()
            .reweight(e2.clone())
            .unwrap();
        let basis = MonomialBasis::new(n, 2);
        let tau = feature_weights(spec.kind(), &basis).unwrap();
        let by_hand = reweighted_weights(&reweighted_weights(&tau, &e1, &basis).unwrap(), &e2, &basis).unwrap();
        let implied = implied_weight_vector(&spec, &basis).unwrap();
        assert_eq!(by_hand, implied);
        for _ in 0..20 {
            let (a, b) = (point(&mut rng, n), point(&mut rng, n));
            let direct = spec.eval2(&a, &b).unwrap();
            let oracle = weighted_eval(&implied, &[&a, &b], &basis).unwrap();
            assert_relative_eq!(direct, oracle, max_relative = 1e-9, epsilon = 1e-14);
        }
    }
}

#[test]
fn higher_arity_reweighting_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let set = anchors(&mut rng, 2, 4);
    let spec = KernelSpec::polynomial(2).unwrap().reweight(set).unwrap();
    let basis = MonomialBasis::new(2, 2);
    let w = implied_weight_vector(&spec, &basis).unwrap();
    for _ in 0..20 {
        let pts: Vec<Vec<f64>> = (0..3).map(|_| point(&mut rng, 2)).collect();
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        assert_relative_eq!(
            spec.eval(&refs).unwrap(),
            weighted_eval(&w, &refs, &basis).unwrap(),
            max_relative = 1e-9,
            epsilon = 1e-14
        );
    }
}

#[test]
fn normalized_exponential_is_se() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let n = rng.random_range(1..=5usize);
        let sigma = rng.random_range(0.1..3.0);
        let (a, b) = (point(&mut rng, n), point(&mut rng, n));
        let norm = KernelSpec::exponential(sigma).unwrap().normalize();
        let se = KernelSpec::se(sigma).unwrap();
        let d2: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
        let closed = (-d2 / (2.0 * sigma)).exp();
        assert!((norm.eval2(&a, &b).unwrap() - closed).abs() <= 1e-12);
        assert!((se.eval2(&a, &b).unwrap() - closed).abs() <= 1e-12);
    }
}

#[test]
fn normalized_specs_have_unit_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let set = anchors(&mut rng, 3, 4);
    let specs = [
        KernelSpec::linear().normalize(),
        KernelSpec::polynomial(3).unwrap().normalize(),
        KernelSpec::exponential(0.7).unwrap().normalize(),
        KernelSpec::se(0.4).unwrap().normalize(),
        KernelSpec::se(0.4).unwrap().reweight(set.clone()).unwrap().normalize(),
        KernelSpec::polynomial(2).unwrap().reweight(set).unwrap().normalize(),
    ];
    for spec in &specs {
        for _ in 0..50 {
            let x = point(&mut rng, 3);
            assert!((spec.eval2(&x, &x).unwrap() - 1.0).abs() <= 1e-12, "{spec:?}");
        }
    }
}

fn min_eigen(spec: &KernelSpec, xs: &[Vec<f64>]) -> f64 {
    let g = gram(spec, xs, 0.0).unwrap();
    SymmetricEigen::new(g).eigenvalues.min()
}

#[test]
fn grams_are_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let n = rng.random_range(1..=3usize);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| point(&mut rng, n)).collect();
        let (e1, e2) = (anchors(&mut rng, n, 4), anchors(&mut rng, n, 3));
        let bases = [
            KernelSpec::linear(),
            KernelSpec::polynomial(2).unwrap(),
            KernelSpec::exponential(0.8).unwrap(),
            KernelSpec::se(0.3).unwrap(),
        ];
        for base in bases {
            let rw = base.clone().reweight(e1.clone()).unwrap();
            let nested = rw.clone().reweight(e2.clone()).unwrap();
            for spec in [
                base.clone(),
                rw.clone(),
                nested.clone(),
                base.normalize(),
                rw.normalize(),
                nested.normalize(),
            ] {
                let m = min_eigen(&spec, &xs);
                assert!(m >= -1e-8, "{} min eigenvalue {m}", spec.kind().name());
            }
        }
    }
}

fn arb_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #[test]
    fn m_kernels_are_permutation_symmetric(
        pts in proptest::collection::vec(arb_point(2), 4),
        alphas in proptest::collection::vec(-1.0f64..1.0, 3),
        anchor_pts in proptest::collection::vec(arb_point(2), 3),
    ) {
        let set = ReweightSet::from_pairs(anchor_pts.into_iter().zip(alphas)).unwrap();
        let specs = [
            KernelSpec::polynomial(2).unwrap(),
            KernelSpec::exponential(0.5).unwrap(),
            KernelSpec::se(0.5).unwrap().reweight(set.clone()).unwrap(),
            KernelSpec::polynomial(3).unwrap().reweight(set).unwrap().normalize(),
        ];
        let perms: [[usize; 4]; 4] = [[0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]];
        for spec in &specs {
            let base: Vec<&[f64]> = perms[0].iter().map(|&i| pts[i].as_slice()).collect();
            let v0 = spec.eval(&base).unwrap();
            for p in &perms[1..] {
                let refs: Vec<&[f64]> = p.iter().map(|&i| pts[i].as_slice()).collect();
                let v = spec.eval(&refs).unwrap();
                prop_assert!((v - v0).abs() <= 1e-12 * v0.abs().max(1.0));
            }
        }
    }

    #[test]
    fn exponential_oracle_converges(a in arb_point(2), b in arb_point(2)) {
        let spec = KernelSpec::exponential(1.0).unwrap();
        let basis = MonomialBasis::new(2, 14);
        let tau = feature_weights(spec.kind(), &basis).unwrap();
        let oracle = weighted_eval(&tau, &[&a, &b], &basis).unwrap();
        prop_assert!((oracle - spec.eval2(&a, &b).unwrap()).abs() <= 1e-9);
    }
}
