use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rotasde_core::analysis::{fit_order, normal_quantile, qq_against_normal, variance};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn normal_quantile_matches_reference_distribution() {
    let reference = Normal::new(0.0, 1.0).unwrap();
    for i in 1..2000 {
        let p = i as f64 / 2000.0;
        let want = reference.inverse_cdf(p);
        let got = normal_quantile(p);
        assert!((got - want).abs() <= 1e-8 * (1.0 + want.abs()), "p {p}: {got} vs {want}");
    }
    for p in [1e-10, 1e-6, 0.01, 0.99, 1.0 - 1e-6] {
        let want = reference.inverse_cdf(p);
        assert!((normal_quantile(p) - want).abs() <= 1e-8 * want.abs());
    }
}

#[test]
fn gaussian_samples_lie_on_the_diagonal() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let samples: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let qq = qq_against_normal(&samples).unwrap();
    assert!(qq.max_deviation(0.98) < 0.1);
    assert!((variance(&samples) - 1.0).abs() < 0.05);
}

#[test]
fn heavy_tails_are_flagged() {
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    let samples: Vec<f64> = (0..10_000)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x * x * x
        })
        .collect();
    assert!(qq_against_normal(&samples).unwrap().max_deviation(0.98) > 0.5);
}

#[test]
fn order_fit_recovers_synthetic_slope() {
    let deltas = [0.1, 0.05, 0.025, 0.0125, 0.00625];
    let errors: Vec<f64> = deltas.iter().map(|d: &f64| 0.3 * d.powf(0.5)).collect();
    let report = fit_order(&deltas, &errors, 1).unwrap();
    assert!((report.slope - 0.5).abs() < 1e-12);
    assert!((report.intercept - 0.3f64.ln()).abs() < 1e-12);
    assert!(report.stderr_slope < 1e-12);
}
