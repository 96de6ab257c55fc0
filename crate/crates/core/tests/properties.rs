use std::f64::consts::PI;

use mvgap_core::forms::{square_field_dirichlet, square_field_gamma, CylindricalFunction, OuterFunction};
use mvgap_core::manifold::{
    weighted_laplacian, BaseMeasure, GridFunction, ManifoldGrid, Potential,
};
use mvgap_core::measure::{phi, AtomicMeasure, PointConfiguration};
use mvgap_core::spectral::SpectralProblem;
use proptest::prelude::*;

const N: usize = 12;

fn grid() -> ManifoldGrid {
    ManifoldGrid::circle(2.0 * PI, N).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, N)
}

fn measure() -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0..N, 1e-3..4.0f64), 1..8)
        .prop_map(|p| AtomicMeasure::from_pairs(&p).unwrap())
}

fn outer() -> impl Strategy<Value = OuterFunction> {
    prop_oneof![
        (-2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64)
            .prop_map(|(a, b, c)| OuterFunction::Linear { coeffs: vec![a, b], offset: c }),
        (prop::collection::vec(-1.0..1.0f64, 4), -1.0..1.0f64, -1.0..1.0f64).prop_map(
            |(q, b0, b1)| OuterFunction::Quadratic { q, b: vec![b0, b1], c: 0.3 }
        ),
        Just(OuterFunction::Product { arity: 2 }),
        (-2.0..2.0f64, -2.0..2.0f64)
            .prop_map(|(a, b)| OuterFunction::TanhLinear { coeffs: vec![a, b], offset: 0.1 }),
    ]
}

fn cyl() -> impl Strategy<Value = CylindricalFunction> {
    (values(), values(), outer()).prop_map(|(h1, h2, f)| {
        CylindricalFunction::new(&grid(), vec![GridFunction::new(h1), GridFunction::new(h2)], f)
            .unwrap()
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gamma_square_field_symmetric_psd(f in cyl(), g in cyl(), eta in measure(), lambda in 0.05..5.0f64) {
        let fg = square_field_gamma(&f, &g, &eta, lambda);
        let gf = square_field_gamma(&g, &f, &eta, lambda);
        prop_assert!(close(fg, gf, 1e-12));
        prop_assert!(square_field_gamma(&f, &f, &eta, lambda) >= -1e-12);
    }

    #[test]
    fn dirichlet_square_field_symmetric_psd(f in cyl(), g in cyl(), eta in measure(), lambda in 0.05..5.0f64) {
        let mu = eta.normalize().unwrap();
        let fg = square_field_dirichlet(&f, &g, &mu, lambda);
        let gf = square_field_dirichlet(&g, &f, &mu, lambda);
        prop_assert!(close(fg, gf, 1e-12));
        prop_assert!(square_field_dirichlet(&f, &f, &mu, lambda) >= -1e-12);
    }

    #[test]
    fn centered_derivative_integrates_to_zero(f in cyl(), eta in measure()) {
        let mu = eta.normalize().unwrap();
        let d = f.centered_extrinsic_derivative(&mu);
        let s: f64 = mu.atoms().iter().zip(&d).map(|(a, v)| a.mass * v).sum();
        let scale: f64 = d.iter().fold(1.0, |m, v| m.max(v.abs()));
        prop_assert!(s.abs() < 1e-10 * scale);
    }

    #[test]
    fn normalization_algebra(eta in measure(), c in 0.01..100.0f64, h in values()) {
        let h = GridFunction::new(h);
        let mu = eta.normalize().unwrap();
        prop_assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        let scaled: Vec<(usize, f64)> = eta.atoms().iter().map(|a| (a.node, c * a.mass)).collect();
        let mu2 = AtomicMeasure::from_pairs(&scaled).unwrap().normalize().unwrap();
        for (a, b) in mu.atoms().iter().zip(mu2.atoms()) {
            prop_assert_eq!(a.node, b.node);
            prop_assert!(close(a.mass, b.mass, 1e-12));
        }
        prop_assert!(close(mu.pair(&h), eta.pair(&h) / eta.total_mass(), 1e-12));
    }

    #[test]
    fn truncation_algebra(eta in measure(), e1 in 1e-3..3.0f64, e2 in 1e-3..3.0f64) {
        let t1 = eta.truncate(e1);
        prop_assert!(t1.atoms().iter().all(|a| a.mass >= e1));
        prop_assert_eq!(&t1.truncate(e1), &t1);
        prop_assert_eq!(t1.truncate(e2), eta.truncate(e1.max(e2)));
        prop_assert!(t1.total_mass() <= eta.total_mass() + 1e-15);
    }

    #[test]
    fn phi_pairing(p1 in prop::collection::vec((0..N, 1e-4..5.0f64), 0..8),
                   p2 in prop::collection::vec((0..N, 1e-4..5.0f64), 0..8),
                   h in values()) {
        let h = GridFunction::new(h);
        let g1 = PointConfiguration::new(p1).unwrap();
        let g2 = PointConfiguration::new(p2).unwrap();
        prop_assert!(close(phi(&g1).pair(&h), g1.pair_lifted(&h), 1e-12));
        prop_assert!(close(phi(&g1).total_mass(), g1.mark_sum(), 1e-12));
        let u = phi(&g1.union(&g2));
        let m = phi(&g1).merge(&phi(&g2));
        prop_assert!(close(u.pair(&h), m.pair(&h), 1e-12));
    }

    #[test]
    fn assembled_problem_invariants(c in prop::collection::vec(0.0..10.0f64, 11),
                                    m in prop::collection::vec(0.01..10.0f64, 12),
                                    u in prop::collection::vec(-5.0..5.0f64, 12)) {
        let edges: Vec<(usize, usize, f64)> = c.iter().enumerate().map(|(i, &w)| (i, i + 1, w)).collect();
        let p = SpectralProblem::new(edges, None, m, "chain", vec![]);
        let a = p.dense_form();
        prop_assert!((&a - a.transpose()).amax() < 1e-12);
        prop_assert!(p.invariants().max_row_sum < 1e-12);
        prop_assert!(p.quadratic_form(&u) >= -1e-10);
        let au = p.apply_form(&u);
        let uau: f64 = au.iter().zip(&u).map(|(x, y)| x * y).sum();
        prop_assert!(close(uau, p.quadratic_form(&u), 1e-10));
    }

    #[test]
    fn weighted_laplacian_is_symmetric(u in values(), v in values(), amp in -1.0..1.0f64) {
        let theta = BaseMeasure::new(grid(), &Potential::Cosine { amplitude: amp }).unwrap();
        let (u, v) = (GridFunction::new(u), GridFunction::new(v));
        let lu = weighted_laplacian(&theta, &u);
        let lv = weighted_laplacian(&theta, &v);
        let a = theta.integrate(&lu.zip_with(&v, |x, y| x * y));
        let b = theta.integrate(&lv.zip_with(&u, |x, y| x * y));
        prop_assert!(close(a, b, 1e-10));
        prop_assert!(theta.integrate(&lu.zip_with(&u, |x, y| x * y)) <= 1e-10);
    }
}
