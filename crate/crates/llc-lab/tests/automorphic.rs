mod common;

use llc_lab::automorphic::{
    bruhat_decompose, closed_form_epsilon, expected_psi, expected_psi_tilde, gamma_automorphic, psi_u_eval,
    scrambled_class, whittaker_eval, zeta_psi, zeta_psi_tilde, AutError, MatG, SSCDatum, XLattice, ZetaOptions,
};
use llc_lab::exact_values::{collapse_to_monomial, CycloNumber, Q};
use llc_lab::local_fields::{FieldTag, LaurentElem};
use llc_lab::whittaker_pairs::support_check;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SMALL_QS: [u64; 2] = [3, 5];

fn power(g: &MatG, k: usize, d: &SSCDatum) -> MatG {
    let ff = d.ff();
    (0..k).fold(MatG::identity(g.n()), |acc, _| acc.mul(g, &ff))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_powers(d in common::datum()) {
        let g = MatG::g_chi(d.n, d.u0);
        prop_assert_eq!(whittaker_eval(&d, &MatG::identity(d.n)).unwrap(), CycloNumber::one());
        for j in 1..d.n {
            prop_assert_eq!(whittaker_eval(&d, &power(&g, j, &d)).unwrap(), CycloNumber::root(d.zeta.pow(j as i64)));
        }
        // g_χ^n = ϖ is central, so W(g_χ^n) = ω(ϖ).
        let gn = power(&g, d.n, &d);
        prop_assert_eq!(whittaker_eval(&d, &gn).unwrap(), CycloNumber::root(d.omega_varpi()));
    }

    #[test]
    fn left_and_right_equivariance(d in common::datum(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = support_check(&d, 12, &mut rng).unwrap();
        prop_assert_eq!(r.failures, 0);
    }

    #[test]
    fn central_and_unipotent_action(d in common::datum(), seed in any::<u64>()) {
        let ff = d.ff();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = MatG::random_exact(&mut rng, d.n, &ff, -1, 1, 6);
        let w = match whittaker_eval(&d, &g) {
            Ok(w) => w,
            Err(AutError::Singular) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let c = ff.random_unit(&mut rng);
        let z = LaurentElem::monomial(FieldTag::F, c, rand::Rng::gen_range(&mut rng, -2..=2));
        let zg = g.scale(&z, &ff);
        let omega_z = d.omega.eval(&z, &ff).unwrap();
        prop_assert_eq!(whittaker_eval(&d, &zg).unwrap(), w.mul_root(omega_z));
        let u = MatG::random_unipotent_exact(&mut rng, d.n, &ff, -2, 6);
        let ug = u.mul(&g, &ff);
        prop_assert_eq!(whittaker_eval(&d, &ug).unwrap(), w.mul_root(psi_u_eval(&u, &ff).unwrap()));
    }

    #[test]
    fn bruhat_class_is_pivot_order_independent(i in 0..SMALL_QS.len(), n in 2usize..=4, seed in any::<u64>()) {
        let q = SMALL_QS[i];
        let ff = llc_lab::local_fields::FiniteField::get(q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = MatG::random_exact(&mut rng, n, &ff, -2, 2, 6);
        let Ok(b) = bruhat_decompose(&g, &ff, false) else { return Ok(()) };
        prop_assert_eq!(scrambled_class(&g, &ff, &mut rng, 8).unwrap(), b.class);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gamma_matches_closed_form(
        (d, lam) in common::datum_in(&SMALL_QS, 3).prop_flat_map(|d| { let q = d.q; (Just(d), common::twist(q)) }),
        full in any::<bool>(),
    ) {
        let opts = ZetaOptions {
            x_lattice: if full { XLattice::Full } else { XLattice::Folded },
            ..ZetaOptions::default()
        };
        prop_assert_eq!(gamma_automorphic(&d, &lam, &opts).unwrap(), closed_form_epsilon(&d, &lam));
        let pt = collapse_to_monomial(&zeta_psi_tilde(&d, &lam, &opts).unwrap()).unwrap();
        let p = collapse_to_monomial(&zeta_psi(&d, &lam, &opts).unwrap()).unwrap();
        prop_assert_eq!(pt, expected_psi_tilde(&d, &lam));
        prop_assert_eq!(p, expected_psi(d.q));
    }

    #[test]
    fn gamma_ignores_measure_scale((d, lam) in common::datum_in(&SMALL_QS, 3).prop_flat_map(|d| { let q = d.q; (Just(d), common::twist(q)) })) {
        let opts = ZetaOptions { measure_scale: Q::new(7, 3), ..ZetaOptions::default() };
        prop_assert_eq!(gamma_automorphic(&d, &lam, &opts).unwrap(), closed_form_epsilon(&d, &lam));
    }
}
