use proptest::prelude::*;

use nls_core::action::{action, energy, kappa, nehari_project};
use nls_core::grid::norms;
use nls_core::nodal::{nodal_project, part_nehari_defects};
use nls_core::spectral::{dirichlet_eigenpairs, exact_box_eigenvalue};
use nls_core::{build_grid, ActionParams, DomainSpec, Field, Grid};

fn grid() -> Grid {
    build_grid(DomainSpec::unit_interval(), 63).unwrap()
}

fn field(values: Vec<f64>) -> Field {
    Field::new(&grid(), values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_action_minus_mass_term(
        vals in prop::collection::vec(-3.0..3.0f64, 63),
        p in 2.1..10.0f64,
        lambda in -50.0..50.0f64,
    ) {
        let u = field(vals);
        let params = ActionParams::new(p, lambda).unwrap();
        let lhs = energy(&u, p);
        let rhs = action(&u, params) - 0.5 * lambda * u.l2_sq();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn nehari_projection_lands_on_the_manifold(
        vals in prop::collection::vec(0.01..3.0f64, 63),
        p in 2.5..10.0f64,
        lambda in -9.0..100.0f64,
    ) {
        let params = ActionParams::new(p, lambda).unwrap();
        let w = nehari_project(&field(vals), params).unwrap();
        let nm = norms(&w, p);
        let defect = (nm.grad_sq + lambda * nm.l2_sq - nm.lp_p).abs() / nm.lp_p;
        prop_assert!(defect <= 1e-10, "defect {}", defect);
        let j = action(&w, params);
        prop_assert!((j - kappa(p) * nm.lp_p).abs() <= 1e-10 * j.abs());
    }

    #[test]
    fn nodal_projection_satisfies_both_part_identities(
        plus in prop::collection::vec(0.05..2.0f64, 31),
        minus in prop::collection::vec(0.05..2.0f64, 32),
        p in 2.5..8.0f64,
        lambda in -30.0..60.0f64,
    ) {
        let vals: Vec<f64> = plus.into_iter().chain(minus.into_iter().map(|v| -v)).collect();
        let params = ActionParams::new(p, lambda).unwrap();
        let w = nodal_project(&field(vals), params).unwrap();
        let (dp, dm) = part_nehari_defects(&w, params).unwrap();
        prop_assert!(dp.max(dm) <= 1e-10, "defects {} {}", dp, dm);
    }

    #[test]
    fn interval_eigenvalues_match_the_stencil(n in 8usize..400, len in 0.5..5.0f64) {
        let g = build_grid(DomainSpec::interval(0.0, len), n).unwrap();
        let pairs = dirichlet_eigenpairs(&g, 2, 3).unwrap();
        for (j, pr) in pairs.iter().enumerate() {
            let exact = exact_box_eigenvalue(&g, [j + 1, 1]);
            prop_assert!((pr.value - exact).abs() <= 1e-10 * exact, "{} vs {}", pr.value, exact);
        }
    }
}
