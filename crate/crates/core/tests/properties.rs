//! Randomized invariants across modules.

use std::f64::consts::PI;

use proptest::prelude::*;
use smero_core::contour::{ContourOptions, Side, Sides};
use smero_core::frobenius::{canonical_basis, frobenius_solution, log_obstruction, pair_residue, Branch};
use smero_core::innerprod::{inner_product, FunctionHandle, InnerOptions};
use smero_core::potential::{Background, Potential, PotentialSpec};
use smero_core::series::{LaurentSeries, EXACT};
use smero_core::transfer::{discriminant, transfer_matrix, TransferOptions};
use smero_core::Complex64;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn perturbed_csc(eps: f64) -> Potential {
    Potential::from_spec(&PotentialSpec::csc_squared(1, 1.0).with_background(Background {
        cos: vec![0.0, 0.0, eps],
        ..Default::default()
    }))
    .unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 12,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn periodic_potentials_repeat(re in -3.0f64..3.0, im in 0.05f64..1.0, eps in -1.0f64..1.0) {
        let u = perturbed_csc(eps);
        let z = Complex64::new(re, im);
        let a = u.eval(z).unwrap();
        let b = u.eval(z + PI).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn profile_resums_to_potential(n in 1u32..4, center in -2.0f64..2.0, y in 0.02f64..0.2, phase in 0.0f64..std::f64::consts::TAU) {
        let u = Potential::from_spec(&PotentialSpec::InverseSquare {
            n,
            center,
            background: Some(Background { poly: vec![0.4, -0.3, 0.2], ..Default::default() }),
            period: None,
        })
        .unwrap();
        let p = u.singularity_profile(center, 6).unwrap();
        let z = Complex64::new(center, 0.0) + Complex64::from_polar(y, phase);
        let exact = u.eval(z).unwrap();
        prop_assert!((p.laurent.eval(z) - exact).norm() < 1e-10 * exact.norm());
    }

    #[test]
    fn monodromy_is_unimodular_with_real_trace(lam in -2.0f64..40.0, eps in 0.0f64..0.5) {
        let u = perturbed_csc(eps);
        let m = transfer_matrix(&u, c(lam), PI / 2.0, 1.5 * PI, &TransferOptions::default()).unwrap();
        prop_assert!((m.det() - 1.0).norm() < 1e-10);
        prop_assert!(m.trace().im.abs() < 1e-10);
        let d = discriminant(&u, c(lam), None, &TransferOptions::default()).unwrap();
        prop_assert!((d - m.trace()).norm() < 1e-8 * d.norm().max(1.0));
    }

    #[test]
    fn detour_side_does_not_matter(lam in -3.0f64..20.0, n in 1u32..4) {
        let u = Potential::from_spec(&PotentialSpec::inverse_square(n)).unwrap();
        let up = transfer_matrix(&u, c(lam), -1.0, 1.3, &TransferOptions::with_sides(Sides::All(Side::Upper))).unwrap();
        let down = transfer_matrix(&u, c(lam), -1.0, 1.3, &TransferOptions::with_sides(Sides::All(Side::Lower))).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((up.t[i][j] - down.t[i][j]).norm() < 1e-8 * up.t[i][j].norm().max(1.0));
            }
        }
    }

    #[test]
    fn solution_pairings_are_path_independent(
        l1 in 0.0f64..4.0, l2 in 0.0f64..4.0, a in -1.0f64..1.0, b in -1.0f64..1.0,
    ) {
        let u = Potential::from_spec(&PotentialSpec::inverse_square(1)).unwrap();
        let f = FunctionHandle::solution(&u, c(l1), -1.0, (c(1.0), c(a)));
        let g = FunctionHandle::solution(&u, c(l2), -1.0, (c(b), c(1.0)));
        let side = |s| InnerOptions::with_contour(ContourOptions::with_sides(Sides::All(s)));
        let up = inner_product(&f, &g, (-1.0, 1.0), &side(Side::Upper)).unwrap();
        let down = inner_product(&f, &g, (-1.0, 1.0), &side(Side::Lower)).unwrap();
        prop_assert!((up - down).norm() < 1e-8 * up.norm().max(1.0));
        let back = inner_product(&g, &f, (-1.0, 1.0), &side(Side::Upper)).unwrap();
        prop_assert!((up - back.conj()).norm() < 1e-8 * up.norm().max(1.0));
    }

    #[test]
    fn local_solutions_pair_without_residue(lam in -5.0f64..5.0, im in -1.0f64..1.0, n in 1u32..4) {
        let u = Potential::from_spec(&PotentialSpec::inverse_square(n)).unwrap();
        let lam = Complex64::new(lam, im);
        let f = frobenius_solution(&u, 0.0, lam, Branch::Lower, 24).unwrap();
        let g = frobenius_solution(&u, 0.0, lam, Branch::Upper, 24).unwrap();
        prop_assert!(pair_residue(&f, &g).unwrap().norm() < 1e-12);
        prop_assert!(pair_residue(&f, &f).unwrap().norm() < 1e-12);
    }

    #[test]
    fn canonical_rows_avoid_pivots(coeffs in prop::collection::vec(prop::collection::vec(-3i32..4, 6), 1..4)) {
        let span: Vec<LaurentSeries> = coeffs
            .iter()
            .map(|row| {
                LaurentSeries::from_coeffs(
                    0.0,
                    EXACT,
                    row.iter().enumerate().map(|(i, &v)| (-(i as i32) - 1, c(v as f64))),
                )
            })
            .collect();
        let basis = match canonical_basis(&span) {
            Err(smero_core::Error::DependentSet) => return Err(TestCaseError::reject("dependent span")),
            other => other.unwrap(),
        };
        prop_assert_eq!(basis.dim(), span.len());
        for (k, row) in basis.basis_rows.iter().enumerate() {
            for &(m, _, _) in row {
                prop_assert!(m < basis.exponents[k]);
                prop_assert!(!basis.exponents.contains(&m));
            }
        }
        prop_assert!(basis.exponents.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn obstruction_interpolates(alpha in 0.2f64..2.0, beta in -1.0f64..1.0) {
        // n = 1 pole with a non-even background: obstruction affine in lambda
        let u = Potential::from_spec(&PotentialSpec::inverse_square(1).with_background(Background {
            poly: vec![beta, alpha],
            ..Default::default()
        }))
        .unwrap();
        let at = |l: f64| log_obstruction(&u, 0.0, c(l), 12).unwrap();
        let (o0, o1, o2) = (at(0.0), at(1.0), at(2.5));
        let predicted = o0 + (o1 - o0) * 2.5;
        prop_assert!((predicted - o2).norm() < 1e-10 * o2.norm().max(1.0));
        prop_assert!(o0.norm() > 1e-3);
    }
}
