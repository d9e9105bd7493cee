mod common;

use common::*;
use ou_cutoff::linalg::Matrix;
use ou_cutoff::noise::{JumpLaw, NoiseSpec};
use ou_cutoff::ou::{build_system, GaussianLaw};
use ou_cutoff::rng::RngStream;
use ou_cutoff::wasserstein::{ergodicity_bounds, w2_gaussian, wp_empirical, EmpiricalMeasure};
use proptest::prelude::*;

fn cloud(rng: &mut RngStream, n: usize, m: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| gaussian_vector(rng, m)).collect()
}

fn measure(points: Vec<Vec<f64>>) -> EmpiricalMeasure {
    EmpiricalMeasure::new(points).unwrap()
}

fn map_points(points: &[Vec<f64>], f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    points.iter().map(|p| f(p)).collect()
}

fn order() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(2.0), Just(3.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metric_axioms(seed in any::<u64>(), n in 2usize..=12, m in 1usize..=3, p in order()) {
        let mut rng = RngStream::new(seed, 0);
        let (u, v, w) = (cloud(&mut rng, n, m), cloud(&mut rng, n, m), cloud(&mut rng, n, m));
        let (mu, nu, xi) = (measure(u), measure(v), measure(w));
        let uv = wp_empirical(&mu, &nu, p).unwrap();
        prop_assert_eq!(uv, wp_empirical(&nu, &mu, p).unwrap());
        let uw = wp_empirical(&mu, &xi, p).unwrap();
        let wv = wp_empirical(&xi, &nu, p).unwrap();
        prop_assert!(uv <= uw + wv + 1e-12);
        prop_assert_eq!(wp_empirical(&mu, &mu, p).unwrap(), 0.0);
    }

    #[test]
    fn shift_linearity(seed in any::<u64>(), n in 1usize..=16, m in 1usize..=3, p in order()) {
        let mut rng = RngStream::new(seed, 0);
        let u = cloud(&mut rng, n, m);
        let x = gaussian_vector(&mut rng, m);
        let shifted = map_points(&u, |q| q.iter().zip(&x).map(|(a, b)| a + b).collect());
        let d = wp_empirical(&measure(shifted), &measure(u), p).unwrap();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((d - norm).abs() <= 1e-12 * (1.0 + norm));
    }

    #[test]
    fn translation_invariance(seed in any::<u64>(), n in 2usize..=12, m in 1usize..=3, p in order()) {
        let mut rng = RngStream::new(seed, 0);
        let (u, v) = (cloud(&mut rng, n, m), cloud(&mut rng, n, m));
        let a = gaussian_vector(&mut rng, m);
        let plus = |q: &[f64]| q.iter().zip(&a).map(|(s, t)| s + t).collect::<Vec<f64>>();
        let moved = wp_empirical(&measure(map_points(&u, plus)), &measure(map_points(&v, plus)), p).unwrap();
        let base = wp_empirical(&measure(u), &measure(v), p).unwrap();
        prop_assert!((moved - base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), n in 2usize..=12, m in 1usize..=3, p in order(), c in -3.0f64..3.0) {
        let mut rng = RngStream::new(seed, 0);
        let (u, v) = (cloud(&mut rng, n, m), cloud(&mut rng, n, m));
        let scale = |q: &[f64]| q.iter().map(|s| c * s).collect::<Vec<f64>>();
        let scaled = wp_empirical(&measure(map_points(&u, scale)), &measure(map_points(&v, scale)), p).unwrap();
        let base = wp_empirical(&measure(u), &measure(v), p).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + base));
    }

    #[test]
    fn projection_contracts(seed in any::<u64>(), n in 2usize..=12, m in 2usize..=4, p in order()) {
        let mut rng = RngStream::new(seed, 0);
        let (u, v) = (cloud(&mut rng, n, m), cloud(&mut rng, n, m));
        let drop_last = |q: &[f64]| q[..q.len() - 1].to_vec();
        let projected =
            wp_empirical(&measure(map_points(&u, drop_last)), &measure(map_points(&v, drop_last)), p).unwrap();
        let base = wp_empirical(&measure(u), &measure(v), p).unwrap();
        prop_assert!(projected <= base + 1e-12);
    }

    #[test]
    fn equal_covariance_gaussians(seed in any::<u64>(), m in 1usize..=5) {
        let mut rng = RngStream::new(seed, 0);
        let g = gaussian_matrix(&mut rng, m, m);
        let c = (&g * &g.transpose()).symmetrized();
        let (a, b) = (gaussian_vector(&mut rng, m), gaussian_vector(&mut rng, m));
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let w = w2_gaussian(&GaussianLaw::new(a, c.clone()).unwrap(), &GaussianLaw::new(b, c).unwrap()).unwrap();
        prop_assert!((w - gap).abs() <= 1e-9 * (1.0 + gap));
    }
}

#[test]
fn lower_mean_below_upper_shift() {
    let noise = NoiseSpec::Sum {
        parts: vec![
            NoiseSpec::CompoundPoisson {
                dim: 2,
                rate: 1.5,
                jump: JumpLaw::FixedAtoms { points: vec![vec![1.0, 0.5], vec![-0.5, 1.0]], weights: vec![0.3, 0.7] },
            },
            NoiseSpec::AlphaStable { dim: 2, alpha: 1.6, scale: 0.3 },
        ],
    };
    let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.5, 2.0]]).unwrap();
    let sys = build_system(a, Matrix::identity(2), noise).unwrap();
    let rng = RngStream::new(17, 0);
    for (k, t) in [0.1, 0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
        for x in [[0.0, 0.0], [2.0, -1.0], [5.0, 5.0]] {
            let b = ergodicity_bounds(&sys, &x, t, 1.0, 600, &rng.fork(k as u64)).unwrap();
            let se = b.wp_estimate_se.max(b.upper_disintegration_se);
            assert!(b.lower_mean <= b.upper_shift + 3.0 * se, "t = {t}, x = {x:?}: {b:?}");
            assert!(b.lower_mean <= b.upper_disintegration + 3.0 * b.upper_disintegration_se);
        }
    }
}
