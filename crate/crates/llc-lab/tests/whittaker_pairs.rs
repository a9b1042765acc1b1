mod common;

use llc_lab::automorphic::{whittaker_eval, AutError, MatG, SSCDatum};
use llc_lab::exact_values::RootOfUnity;
use llc_lab::local_fields::{FiniteField, TameChar};
use llc_lab::whittaker_pairs::{
    g_chi_inv, k_special_check, k_special_family, mirabolic_agreement, mirabolic_agreement_family, mirabolic_elements,
    pair_grid, PairConfig, PairError,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SMALL_QS: [u64; 2] = [3, 5];

#[test]
fn pair_grid_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (n, q) in [(2, 3), (2, 5), (3, 5)] {
        for (d1, d2) in pair_grid(n, q).unwrap() {
            let cfg = PairConfig::new(d1, d2, 2, 1).unwrap();
            let s = k_special_check(&cfg, 150, &mut rng).unwrap();
            assert!(s.ok(), "{s:?}");
            assert!(s.nonzero.iter().all(|&c| c > 0), "{s:?}");
            let m = mirabolic_agreement(&cfg, 40, &mut rng).unwrap();
            assert!(m.ok(), "{m:?}");
            assert!(m.nonzero > 0);
        }
    }
}

#[test]
fn mirabolic_enumeration_size() {
    // q^{(n−2)(B+1)}·q^{B+m} columns plus q^{(n−2)(B+1)} Levi elements.
    let ff = FiniteField::get(3).unwrap();
    for n in 2..=4usize {
        let (m, b) = (2u32, 1u32);
        let side = 3usize.pow((n as u32 - 2) * (b + 1));
        let want = side * 3usize.pow(b + m) + side;
        assert_eq!(mirabolic_elements(n, &ff, m, b).len(), want, "n={n}");
    }
}

#[test]
fn family_over_all_zeta() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = 5;
    let ff = FiniteField::get(q).unwrap();
    let omega = TameChar::new(q, 2, RootOfUnity::minus_one());
    let data: Vec<SSCDatum> = [1u8, 3]
        .into_iter()
        .flat_map(|u0| {
            SSCDatum::zeta_choices(3, omega.at_varpi(u0, &ff))
                .into_iter()
                .map(move |z| SSCDatum::new(3, q, u0, omega, z).unwrap())
        })
        .collect();
    let s = k_special_family(&data, 1, 3, 2, 300, &mut rng).unwrap();
    assert!(s.ok(), "{s:?}");
    let m = mirabolic_agreement_family(&data, 2, 1, 30, &mut rng).unwrap();
    assert!(m.ok(), "{m:?}");
}

#[test]
fn configs_must_match() {
    let ff = FiniteField::get(5).unwrap();
    let om = TameChar::trivial(5);
    let d2 = SSCDatum::new(2, 5, 1, om, SSCDatum::zeta_choices(2, om.at_varpi(1, &ff))[0]).unwrap();
    let d3 = SSCDatum::new(3, 5, 1, om, SSCDatum::zeta_choices(3, om.at_varpi(1, &ff))[0]).unwrap();
    assert_eq!(PairConfig::new(d2.clone(), d3, 2, 1), Err(PairError::Mismatched("n")));
    let om7 = TameChar::trivial(7);
    let e = SSCDatum::new(2, 7, 1, om7, RootOfUnity::one()).unwrap();
    assert_eq!(PairConfig::new(d2, e, 2, 1), Err(PairError::Mismatched("q")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn whittaker_values_are_unitary(d in common::datum(), seed in any::<u64>()) {
        let ff = d.ff();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..8 {
            let g = MatG::random_exact(&mut rng, d.n, &ff, -2, 2, 6);
            match whittaker_eval(&d, &g) {
                Ok(w) => prop_assert!(w.is_zero() || w.as_root_of_unity().is_some()),
                Err(AutError::Singular) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn inverse_generator_gives_conjugate(d in common::datum()) {
        let ff = d.ff();
        let w = whittaker_eval(&d, &g_chi_inv(d.n, d.u0, &ff)).unwrap();
        prop_assert_eq!(w, llc_lab::exact_values::CycloNumber::root(d.zeta.conj()));
    }

    #[test]
    fn random_small_pairs(
        d in common::datum_in(&SMALL_QS, 3),
        other_u in any::<u8>(),
        other_z in any::<usize>(),
        seed in any::<u64>(),
    ) {
        let ff = d.ff();
        let u2 = other_u % (d.q as u8 - 1) + 1;
        let zs = SSCDatum::zeta_choices(d.n, d.omega.at_varpi(u2, &ff));
        let e = SSCDatum::new(d.n, d.q, u2, d.omega, zs[other_z % d.n]).unwrap();
        let cfg = PairConfig::new(d, e, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(k_special_check(&cfg, 40, &mut rng).unwrap().ok());
        prop_assert!(mirabolic_agreement(&cfg, 10, &mut rng).unwrap().ok());
    }
}
