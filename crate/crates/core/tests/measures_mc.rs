use std::f64::consts::PI;

use mvgap_core::forms::{
    check_crucial_identity, check_ibp, fleming_viot_field, mc_form, mc_functional_moments, mc_moments, mc_rayleigh,
    mc_scalar, CylindricalFunction, McConfig, OuterFunction, Side,
};
use mvgap_core::manifold::{
    gradient, BaseMeasure, GridFunction, GridVectorField, ManifoldGrid, Potential,
};
use mvgap_core::measure::Partition;
use mvgap_core::sampling::{
    parallel_accumulate, sample_gamma_partition, DirichletMeasureSampler, DirichletMethod,
    GammaMeasureSampler, LevyTruncation, RngStream,
};
use mvgap_core::spectral::builders::normalize_test_function;
use mvgap_core::spectral::{build_jacobi_problem, kkl_certificate};
use mvgap_core::special::expint_e1;
use mvgap_core::stats::{ks_test_unsorted, CovarianceAccumulator, ReferenceCdf};

fn theta(total: f64, amp: f64) -> BaseMeasure {
    let grid = ManifoldGrid::circle(2.0 * PI, 32).unwrap();
    BaseMeasure::new(grid, &Potential::Cosine { amplitude: amp })
        .unwrap()
        .with_total_mass(total)
        .unwrap()
}

fn g_fn(t: &BaseMeasure) -> GridFunction {
    t.grid().sample(|x| 1.0 + x.cos() + 0.5 * (2.0 * x).sin())
}

fn within(est: f64, se: f64, target: f64) -> bool {
    (est - target).abs() < 3.0 * se
}

fn total_masses(sampler: &GammaMeasureSampler, seed: u64, n: usize) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0);
    (0..n).map(|_| sampler.sample(&mut rng).total_mass()).collect()
}

#[test]
fn levy_total_mass_is_gamma() {
    for total in [0.7, 1.0, 1.7] {
        let t = theta(total, 0.3);
        let s = GammaMeasureSampler::new(&t, LevyTruncation::default());
        let v = total_masses(&s, 1, 100_000);
        let ks = ks_test_unsorted(&v, &ReferenceCdf::Gamma { shape: total });
        assert!(ks.passes(0.01), "{total}: {ks:?}");
    }
}

#[test]
fn levy_count_and_small_jump_deficit() {
    let t = theta(1.0, 0.0);
    let s = GammaMeasureSampler::new(&t, LevyTruncation::new(1.0, false).unwrap());
    let mut rng = RngStream::new(2, 0);
    let counts: Vec<f64> = (0..100_000)
        .map(|_| s.sample_configuration(&mut rng).len() as f64)
        .collect();
    let m = counts.iter().sum::<f64>() / counts.len() as f64;
    let se = (expint_e1(1.0) / counts.len() as f64).sqrt();
    assert!(within(m, se, expint_e1(1.0)), "{m}");

    let eps = 0.2;
    let s = GammaMeasureSampler::new(&t, LevyTruncation::new(eps, false).unwrap());
    let v = total_masses(&s, 3, 200_000);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let deficit = 1.0 - mean;
    assert!(within(deficit, (var / n).sqrt(), 1.0 - (-eps).exp()), "{deficit}");
}

#[test]
fn partition_marginals_are_independent_gammas() {
    let t = theta(1.7, 0.3);
    let part = Partition::contiguous(32, 3).unwrap();
    let s = GammaMeasureSampler::new(&t, LevyTruncation::default());
    let mut rng = RngStream::new(4, 0);
    let mut cols = vec![Vec::new(); 3];
    for _ in 0..100_000 {
        let m = s.sample(&mut rng).partition_masses(&part);
        for (c, x) in cols.iter_mut().zip(m) {
            c.push(x);
        }
    }
    for (i, cell) in part.cells().iter().enumerate() {
        let ks = ks_test_unsorted(&cols[i], &ReferenceCdf::Gamma { shape: t.mass_of(cell) });
        assert!(ks.passes(0.01), "cell {i}: {ks:?}");
    }
    let mut direct = RngStream::new(5, 0);
    let mut cov = CovarianceAccumulator::default();
    for _ in 0..100_000 {
        let v = sample_gamma_partition(&mut direct, &t, &part);
        cov.push(v[0], v[1]);
    }
    assert!(cov.correlation().abs() < 3.0 / (100_000f64).sqrt());
}

#[test]
fn total_mass_independent_of_shape() {
    let t = theta(1.0, 0.3);
    let part = Partition::contiguous(32, 4).unwrap();
    let s = GammaMeasureSampler::new(&t, LevyTruncation::default());
    let n = 100_000;
    let acc = parallel_accumulate(
        6,
        0,
        n,
        |rng, len, acc: &mut [CovarianceAccumulator; 3]| {
            for _ in 0..len {
                let eta = s.sample(rng);
                let mu = eta.normalize().unwrap();
                let p = mu.partition_masses(&part);
                for (a, pi) in acc.iter_mut().zip(p.iter().take(3)) {
                    a.push(eta.total_mass(), *pi);
                }
            }
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
        },
    );
    for a in acc {
        assert!(a.correlation().abs() < 3.0 / (n as f64).sqrt(), "{}", a.correlation());
    }
}

#[test]
fn dirichlet_methods_agree_on_partition_means() {
    let t = theta(1.0, 0.3);
    let part = Partition::contiguous(32, 2).unwrap();
    let alpha = t.mass_of(&part.cells()[0]);
    let n = 100_000;
    let mut means = Vec::new();
    for (k, method) in [DirichletMethod::LevyNormalize, DirichletMethod::StickBreaking(None)]
        .into_iter()
        .enumerate()
    {
        let s = DirichletMeasureSampler::new(&t, LevyTruncation::default(), method);
        let mut rng = RngStream::new(7, k as u64);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let mu = s.sample(&mut rng);
            assert!((mu.total_mass() - 1.0).abs() < 1e-12);
            v.push(mu.partition_masses(&part)[0]);
        }
        let ks = ks_test_unsorted(&v, &ReferenceCdf::Beta { a: alpha, b: 1.0 - alpha });
        assert!(ks.passes(0.01), "{method:?}: {ks:?}");
        let m = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        means.push((m, (var / n as f64).sqrt()));
    }
    let z = (means[0].0 - means[1].0) / (means[0].1.powi(2) + means[1].1.powi(2)).sqrt();
    assert!(z.abs() < 3.0, "z {z}");
}

#[test]
fn dirichlet_moment_identities() {
    for (k, total) in [0.7, 1.0, 1.7].into_iter().enumerate() {
        let t = theta(total, 0.3);
        let g = g_fn(&t);
        let cfg = McConfig::new(100 + k as u64, 200_000);
        let r = mc_moments(&cfg, &t, &g).unwrap();
        let tg = t.integrate(&g);
        let tg2 = t.integrate(&g.map(|x| x * x));
        assert!(within(r.mean.value, r.mean.stderr, tg / total), "{total}: {r:?}");
        let second = (tg2 + tg * tg) / (total * (total + 1.0));
        assert!(within(r.second.value, r.second.stderr, second), "{total}: {r:?}");

        let h = normalize_test_function(&t, &g).unwrap();
        let r = mc_moments(&cfg, &t, &h).unwrap();
        let var = 1.0 / (total * (total + 1.0));
        assert!(within(r.variance.value, r.variance.stderr, var), "{total}: {r:?}");

        let f0 = CylindricalFunction::mass(t.grid());
        let r = mc_functional_moments(&cfg, &t, &f0, Side::Gamma).unwrap();
        assert!(within(r.mean.value, r.mean.stderr, total));
        assert!(within(r.second.value, r.second.stderr, total * total + total));
    }
}

#[test]
fn form_values_match_closed_forms() {
    let t = theta(1.0, 0.3);
    let lambda = 1.5;
    let cfg = McConfig::new(9, 200_000);
    let f0 = CylindricalFunction::mass(t.grid());
    let e = mc_form(&cfg, &t, lambda, &f0, &f0, Side::Gamma).unwrap();
    assert!(within(e.value, e.stderr, lambda), "{e:?}");

    let h = normalize_test_function(&t, &g_fn(&t)).unwrap();
    let fh = CylindricalFunction::linear(t.grid(), h.clone()).unwrap();
    let gh = gradient(t.grid(), &h);
    let grad2 = t.integrate(&gh.map(|x| x * x));
    let expected = lambda / 2.0 + grad2;
    let e = mc_form(&cfg, &t, lambda, &fh, &fh, Side::Dirichlet).unwrap();
    assert!(within(e.value, e.stderr, expected), "{e:?} vs {expected}");

    let q = mc_rayleigh(&cfg, &t, lambda, &fh, Side::Dirichlet).unwrap();
    let cert = kkl_certificate(&t, lambda, &h).unwrap();
    assert!(within(q.quotient.value, q.quotient.stderr, cert.rayleigh_quotient), "{q:?} {cert:?}");
    assert!(q.quotient.value > cert.lower_bound - 3.0 * q.quotient.stderr);
}

#[test]
fn crucial_identity_pairs() {
    let t = theta(1.0, 0.3);
    let grid = t.grid().clone();
    let h1 = grid.sample(|x| x.cos());
    let h2 = grid.sample(|x| 0.5 + (2.0 * x).sin());
    let pairs = [
        (
            CylindricalFunction::linear(&grid, h1.clone()).unwrap(),
            CylindricalFunction::linear(&grid, h1.clone()).unwrap(),
        ),
        (
            CylindricalFunction::new(&grid, vec![h1.clone(), h2.clone()], OuterFunction::Product { arity: 2 }).unwrap(),
            CylindricalFunction::linear(&grid, h2.clone()).unwrap(),
        ),
        (
            CylindricalFunction::new(
                &grid,
                vec![h1, h2],
                OuterFunction::TanhLinear { coeffs: vec![1.0, -0.7], offset: 0.2 },
            )
            .unwrap(),
            CylindricalFunction::new(&grid, vec![grid.sample(|x| x.sin())], OuterFunction::square()).unwrap(),
        ),
    ];
    for (k, (f, g)) in pairs.iter().enumerate() {
        let c = check_crucial_identity(&McConfig::new(30 + k as u64, 200_000), &t, 1.0, f, g).unwrap();
        assert!(c.passes(3.0), "pair {k}: {c:?}");
    }
    let one = CylindricalFunction::constant(&grid, 1.0);
    let c = check_crucial_identity(&McConfig::new(1, 10_000), &t, 2.0, &one, &one).unwrap();
    assert!((c.lhs - c.rhs).abs() < 6.0 * (c.lhs_stderr + c.rhs_stderr));
}

#[test]
fn integration_by_parts() {
    let t = theta(1.0, 0.3);
    let grid = t.grid().clone();
    let v = GridVectorField::from_fn(&grid, |x| x.sin()).unwrap();
    let f = CylindricalFunction::new(
        &grid,
        vec![grid.sample(|x| x.cos()), grid.sample(|x| (2.0 * x).sin())],
        OuterFunction::TanhLinear { coeffs: vec![1.0, 0.5], offset: 0.1 },
    )
    .unwrap();
    for eps in [0.5, 1.0] {
        let c = check_ibp(&McConfig::new(40, 200_000), &t, &f, &v, eps).unwrap();
        assert!(c.passes(3.0), "eps {eps}: {c:?}");
        assert!(c.lhs.abs() > 3.0 * c.lhs_stderr, "lhs should be nonzero: {c:?}");
    }
    // Divergence-free case on the flat circle.
    let flat = theta(1.0, 0.0);
    let one = CylindricalFunction::constant(flat.grid(), 1.0);
    let c = check_ibp(&McConfig::new(41, 50_000), &flat, &one, &v, 0.5).unwrap();
    assert_eq!(c.lhs, 0.0);
    assert!(c.rhs.abs() < 3.0 * c.rhs_stderr.max(1e-12), "{c:?}");
}

#[test]
fn fleming_viot_matches_jacobi_form() {
    // Indicator inner functions remove the intrinsic part, so the centered
    // square field of f(<1_A, .>) is x(1-x) f'(x)^2 with x = mu(A).
    let t = theta(1.0, 0.0);
    let part = Partition::contiguous(32, 2).unwrap();
    let a1 = t.mass_of(&part.cells()[0]);
    let jac = build_jacobi_problem(1.0, a1, 1.0 - a1, 2000).unwrap();
    let x = jac.meta().coordinates.clone();
    for (k, outer) in [OuterFunction::identity(), OuterFunction::square()].into_iter().enumerate() {
        let f = CylindricalFunction::new(t.grid(), vec![part.indicator(0)], outer.clone()).unwrap();
        let cfg = McConfig::new(50 + k as u64, 200_000);
        let est = mc_scalar(&cfg, &t, Side::Dirichlet, |mu| fleming_viot_field(&f, &f, mu));
        let fx: Vec<f64> = x.iter().map(|&v| outer.eval(&[v])).collect();
        let form = jac.quadratic_form(&fx);
        assert!(within(est.value, est.stderr, form), "{est:?} vs {form}");
    }
}
