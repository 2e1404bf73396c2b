use approx::assert_abs_diff_eq;
use mkbo_core::kernel::gram;
use mkbo_core::oracle::{feature_weights, monomial_features, MonomialBasis};
use mkbo_core::svm::{dual_objective, loo_mse_select, train_svc, train_svr, SvmConfig, SvmModel};
use mkbo_core::{KernelSpec, LabeledDataset};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn data(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> LabeledDataset {
    LabeledDataset::new(xs, ys).unwrap()
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> LabeledDataset {
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ys = xs
        .iter()
        .map(|x| x.iter().sum::<f64>().sin() + 0.3 * x[0] * x[0])
        .collect();
    data(xs, ys)
}

#[test]
fn two_point_regression_analytic() {
    let d = data(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]);
    let m = train_svr(&d, &KernelSpec::linear(), &SvmConfig::regression(1, 10.0, 0.0)).unwrap();
    let a = m.alphas();
    assert_abs_diff_eq!(a[0], -1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(a[1], 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(m.bias(), 0.0, epsilon = 1e-6);
    assert_abs_diff_eq!(m.predict(&[0.5]).unwrap(), 0.5, epsilon = 1e-6);
}

#[test]
fn two_point_classification_analytic() {
    let d = data(vec![vec![0.0], vec![1.0]], vec![-1.0, 1.0]);
    let m = train_svc(&d, &KernelSpec::linear(), &SvmConfig::classification(1, 10.0)).unwrap();
    let a = m.alphas();
    assert_abs_diff_eq!(a[0], -2.0, epsilon = 1e-6);
    assert_abs_diff_eq!(a[1], 2.0, epsilon = 1e-6);
    assert_abs_diff_eq!(m.bias(), -1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(m.predict(&[0.0]).unwrap(), -1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(m.predict(&[1.0]).unwrap(), 1.0, epsilon = 1e-6);
}

#[test]
fn flipped_labels_negate_the_classifier() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<Vec<f64>> = (0..12)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| if x[0] + 0.3 * x[1] > 0.0 { 1.0 } else { -1.0 })
        .collect();
    let flipped: Vec<f64> = ys.iter().map(|y| -y).collect();
    let spec = KernelSpec::se(0.5).unwrap();
    let cfg = SvmConfig::classification(1, 5.0);
    let a = train_svc(&data(xs.clone(), ys), &spec, &cfg).unwrap();
    let b = train_svc(&data(xs.clone(), flipped), &spec, &cfg).unwrap();
    for (p, q) in a.alphas().iter().zip(b.alphas()) {
        assert_abs_diff_eq!(*p, -q, epsilon = 1e-6);
    }
    assert_abs_diff_eq!(a.bias(), -b.bias(), epsilon = 1e-6);
}

#[test]
fn separable_blobs_are_classified() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (cx, label) in [(-0.6, -1.0), (0.6, 1.0)] {
        for _ in 0..20 {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            xs.push(vec![cx + 0.1 * dx, 0.1 * dy]);
            ys.push(label);
        }
    }
    let d = data(xs, ys);
    let m = train_svc(&d, &KernelSpec::se(0.2).unwrap(), &SvmConfig::classification(1, 10.0)).unwrap();
    for (x, y) in d.rows() {
        assert!(m.predict(x).unwrap() * y > 0.0);
    }
}

#[test]
fn vanishing_budget_gives_constant_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = random_data(&mut rng, 10, 2);
    let m = train_svr(&d, &KernelSpec::se(0.5).unwrap(), &SvmConfig::regression(1, 1e-9, 0.0)).unwrap();
    assert!(m.alphas().iter().all(|a| a.abs() <= 1e-9 / 10.0 + 1e-15));
    let g0 = m.predict(&[0.1, 0.2]).unwrap();
    assert_abs_diff_eq!(m.predict(&[-0.7, 0.9]).unwrap(), g0, epsilon = 1e-8);
}

/// Objective values from libsvm on the same problems.
#[test]
fn q1_regression_matches_libsvm_objective() {
    let raw = include_str!("fixtures/svr_reference.json");
    let cases: Vec<serde_json::Value> = serde_json::from_str(raw).unwrap();
    assert_eq!(cases.len(), 10);
    let num = |v: &serde_json::Value| v.as_f64().unwrap();
    let nums = |v: &serde_json::Value| -> Vec<f64> { v.as_array().unwrap().iter().map(num).collect() };
    for case in &cases {
        let xs = case["x"].as_array().unwrap().iter().map(nums).collect();
        let d = data(xs, nums(&case["y"]));
        let (sigma, c, eps) = (num(&case["sigma"]), num(&case["c"]), num(&case["epsilon"]));
        let spec = KernelSpec::se(sigma).unwrap();
        let m = train_svr(&d, &spec, &SvmConfig::regression(1, c, eps)).unwrap();
        let k = gram(&spec, d.xs(), 0.0).unwrap();
        let a = m.alphas();
        let h: Vec<f64> = (0..d.len())
            .map(|i| (0..d.len()).map(|j| k[(i, j)] * a[j]).sum())
            .collect();
        let obj = dual_objective(&a, &h, d.ys(), 1, eps);
        assert_abs_diff_eq!(obj, num(&case["objective"]), epsilon = 1e-6);
    }
}

fn check_feasible(m: &SvmModel, c: f64) {
    let a = m.alphas();
    let n = a.len() as f64;
    assert!(a.iter().sum::<f64>().abs() <= 1e-8);
    assert!(a.iter().all(|v| v.abs() <= c / n + 1e-10));
    let h = &m.report().objective_history;
    for w in h.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "objective rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn q2_solver_is_feasible_and_descends() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let n = rng.random_range(4..=8usize);
        let d = random_data(&mut rng, n, 2);
        let c = rng.random_range(0.5..20.0);
        let m = train_svr(
            &d,
            &KernelSpec::polynomial(2).unwrap(),
            &SvmConfig::regression(2, c, 0.01),
        )
        .unwrap();
        check_feasible(&m, c);
        let last = *m.report().objective_history.last().unwrap();
        assert!(last < 0.0, "objective {last} not below the zero start");
    }
}

#[test]
fn q1_solver_is_feasible_and_descends() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let n = rng.random_range(4..=15usize);
        let d = random_data(&mut rng, n, 2);
        let c = rng.random_range(0.5..20.0);
        let m = train_svr(&d, &KernelSpec::se(0.3).unwrap(), &SvmConfig::regression(1, c, 0.01)).unwrap();
        check_feasible(&m, c);
    }
}

/// `g(x) = sum_k tau_k^2 theta_k(x) u_k^(2q-1) + b` with
/// `u_k = sum_i alpha_i theta_k(x_i)`; for `q = 1` this is `<w, phi(x)> + b`.
fn representor(m: &SvmModel, degree: u32, x: &[f64]) -> f64 {
    let n = x.len();
    let basis = MonomialBasis::new(n, degree);
    let tau = feature_weights(m.spec().kind(), &basis).unwrap();
    let mut u = vec![0.0; basis.len()];
    for a in m.anchors() {
        for (uk, f) in u.iter_mut().zip(monomial_features(&a.x, &basis).unwrap()) {
            *uk += a.alpha * f;
        }
    }
    let p = 2 * m.config().q as i32 - 1;
    let fx = monomial_features(x, &basis).unwrap();
    (0..basis.len())
        .map(|k| tau[k] * tau[k] * fx[k] * u[k].powi(p))
        .sum::<f64>()
        + m.bias()
}

#[test]
fn representor_identity_for_polynomial_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (q, degree, n) in [
        (1, 1, 6),
        (1, 2, 8),
        (1, 3, 8),
        (2, 1, 3),
        (2, 2, 3),
        (2, 2, 6),
        (3, 1, 4),
    ] {
        let d = random_data(&mut rng, n, 2);
        let spec = if degree == 1 {
            KernelSpec::linear()
        } else {
            KernelSpec::polynomial(degree).unwrap()
        };
        let m = train_svr(&d, &spec, &SvmConfig::regression(q, 10.0, 0.01)).unwrap();
        for _ in 0..10 {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let direct = m.predict(&x).unwrap();
            assert_abs_diff_eq!(direct, representor(&m, degree, &x), epsilon = 1e-8);
        }
    }
}

#[test]
fn loo_recovers_generating_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xs: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
    let truth = KernelSpec::se(0.2).unwrap();
    let k = gram(&truth, &xs, 1e-10).unwrap();
    let l = k.cholesky().unwrap().l();
    let z = DMatrix::from_fn(xs.len(), 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let ys: Vec<f64> = (l * z).iter().copied().collect();
    let d = data(xs, ys);
    let grid = [0.025, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
    let sel = loo_mse_select(&d, &KernelSpec::se(1.0).unwrap(), &[1.0, 10.0, 100.0], &grid, 0.0).unwrap();
    let pos = grid.iter().position(|g| Some(*g) == sel.sigma).unwrap();
    assert!((2..=4).contains(&pos), "selected {:?}", sel.sigma);
}
