use mvgap_core::sampling::{beta_variate, dirichlet_variate, gamma_variate, RngStream};
use mvgap_core::special::gamma_p;
use mvgap_core::stats::{ks_test_unsorted, MomentAccumulator, ReferenceCdf};

#[test]
fn gamma_variate_moments() {
    let mut rng = RngStream::new(1, 0);
    let n = 1_000_000;
    let (mut m1, mut m2) = (MomentAccumulator::new(), MomentAccumulator::new());
    for _ in 0..n {
        let x = gamma_variate(&mut rng, 2.0);
        m1.push(x);
        m2.push(x * x);
    }
    assert!((m1.mean() - 2.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    let e = m2.estimate();
    assert!((e.value - 6.0).abs() < 3.0 * e.stderr, "{e:?}");
}

#[test]
fn small_shape_gamma_and_beta_pass_ks() {
    let mut rng = RngStream::new(2, 0);
    for r in [0.05, 0.3, 0.9, 4.5] {
        let v: Vec<f64> = (0..20_000).map(|_| gamma_variate(&mut rng, r)).collect();
        assert!(ks_test_unsorted(&v, &ReferenceCdf::Gamma { shape: r }).passes(0.01), "r {r}");
    }
    for (a, b) in [(0.2, 0.8), (2.0, 3.0)] {
        let v: Vec<f64> = (0..20_000).map(|_| beta_variate(&mut rng, a, b)).collect();
        assert!(ks_test_unsorted(&v, &ReferenceCdf::Beta { a, b }).passes(0.01), "({a},{b})");
    }
}

#[test]
fn dirichlet_variate_means() {
    let mut rng = RngStream::new(3, 0);
    let n = 1_000_000;
    let (mut a, mut b) = (MomentAccumulator::new(), MomentAccumulator::new());
    for _ in 0..n {
        a.push(dirichlet_variate(&mut rng, &[1.0, 1.0])[0]);
        b.push(dirichlet_variate(&mut rng, &[2.0, 3.0])[0]);
    }
    assert!((a.mean() - 0.5).abs() < 3.0 * (1.0 / 12.0 / n as f64).sqrt());
    let e = b.estimate();
    assert!((e.value - 0.4).abs() < 3.0 * e.stderr);
}

#[test]
fn ks_rejection_rate_is_calibrated() {
    let reps = 1000;
    let mut rejections = 0;
    for k in 0..reps {
        let mut rng = RngStream::new(77, k);
        let v: Vec<f64> = (0..200).map(|_| gamma_variate(&mut rng, 1.5)).collect();
        if !ks_test_unsorted(&v, &ReferenceCdf::Gamma { shape: 1.5 }).passes(0.01) {
            rejections += 1;
        }
    }
    // Binomial(1000, 0.01): mean 10, sd about 3.1.
    assert!(rejections <= 25, "{rejections} rejections");
}

#[test]
fn ks_detects_shift() {
    let mut rng = RngStream::new(4, 0);
    let v: Vec<f64> = (0..100_000).map(|_| 0.5 * 1.5f64.sqrt() + gamma_variate(&mut rng, 1.5)).collect();
    assert!(!ks_test_unsorted(&v, &ReferenceCdf::Gamma { shape: 1.5 }).passes(0.01));
}

#[test]
fn incomplete_gamma_closed_form() {
    assert!((gamma_p(1.0, 1.0) - 0.632_120_558_828_557_7).abs() < 1e-10);
}
