use llc_lab::exact_values::{CycloNumber, RootOfUnity};
use llc_lab::local_fields::{
    embed_in_e, norm_e_over_f, oracle, psi_eval, psi_residue, trace_e_over_f, FieldTag, FiniteField, LaurentElem,
    LevelOneCharE, TameChar,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const QS: [u64; 6] = [3, 5, 7, 9, 11, 13];

fn setup() -> impl Strategy<Value = (u64, u8, u8, u64)> {
    (0..QS.len(), 2u8..=4, any::<u64>()).prop_flat_map(|(i, n, seed)| {
        let q = QS[i];
        (Just(q), Just(n), 1u8..(q as u8), Just(seed))
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_e(r: &mut ChaCha8Rng, ff: &FiniteField, tag: FieldTag, len: usize) -> LaurentElem {
    loop {
        let x = LaurentElem::random(r, ff, tag, 0, len);
        if x.valuation() == Some(0) {
            return x;
        }
    }
}

#[test]
fn trace_spot_values() {
    let ff = FiniteField::get(7).unwrap();
    for n in 2u8..=4 {
        let tag = FieldTag::E { n, u0: 3 };
        let one = LaurentElem::one(tag);
        assert!(trace_e_over_f(&one, &ff).agrees_with(&LaurentElem::monomial(FieldTag::F, n, 0)));
        let pi = LaurentElem::uniformizer(tag);
        assert!(trace_e_over_f(&pi, &ff).is_zero());
        // ϖ_E^{-1}(2 + 5ϖ_E) has trace n·5.
        let x = LaurentElem::from_coeffs(tag, -1, &[2, 5], None);
        assert!(trace_e_over_f(&x, &ff).agrees_with(&LaurentElem::monomial(FieldTag::F, ff.from_int(5 * n as i64), 0)));
    }
}

#[test]
fn norm_of_uniformizer() {
    // N(ϖ_E) = (−1)^{n−1}·u0·t.
    for q in QS {
        let ff = FiniteField::get(q).unwrap();
        for n in 2u8..=4 {
            if (n as u64).is_multiple_of(ff.p()) {
                continue;
            }
            for u0 in ff.units() {
                let pi = LaurentElem::uniformizer(FieldTag::E { n, u0 });
                let sign = if n % 2 == 0 { ff.neg(u0) } else { u0 };
                let want = LaurentElem::monomial(FieldTag::F, sign, 1);
                assert!(norm_e_over_f(&pi, &ff).unwrap().agrees_with(&want), "q={q} n={n} u0={u0}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn trace_and_norm_match_oracle((q, n, u0, seed) in setup()) {
        let ff = FiniteField::get(q).unwrap();
        let tag = FieldTag::E { n, u0 };
        let mut r = rng(seed);
        let x = LaurentElem::random(&mut r, &ff, tag, -2, 10);
        prop_assert!(trace_e_over_f(&x, &ff).agrees_with(&oracle::trace(&x, &ff)));
        prop_assert!(norm_e_over_f(&x, &ff).unwrap().agrees_with(&oracle::norm(&x, &ff).unwrap()));
    }

    #[test]
    fn norm_is_multiplicative_and_trace_additive((q, n, u0, seed) in setup()) {
        let ff = FiniteField::get(q).unwrap();
        let tag = FieldTag::E { n, u0 };
        let mut r = rng(seed);
        let x = unit_e(&mut r, &ff, tag, 12);
        let y = unit_e(&mut r, &ff, tag, 12);
        let nxy = norm_e_over_f(&x.mul(&y, &ff), &ff).unwrap();
        let nx_ny = norm_e_over_f(&x, &ff).unwrap().mul(&norm_e_over_f(&y, &ff).unwrap(), &ff);
        prop_assert!(nxy.agrees_with(&nx_ny));
        let t = trace_e_over_f(&x.add(&y, &ff), &ff);
        prop_assert!(t.agrees_with(&trace_e_over_f(&x, &ff).add(&trace_e_over_f(&y, &ff), &ff)));
    }

    #[test]
    fn norm_of_embedded_is_power((q, n, u0, seed) in setup()) {
        let ff = FiniteField::get(q).unwrap();
        let mut r = rng(seed);
        let a = LaurentElem::random(&mut r, &ff, FieldTag::F, 0, 6);
        prop_assume!(!a.is_zero());
        let e = embed_in_e(&a, n, u0, &ff);
        prop_assert!(norm_e_over_f(&e, &ff).unwrap().agrees_with(&a.pow(n as i32, &ff).unwrap()));
    }

    #[test]
    fn psi_trace_pairing_on_first_shell((q, n, u0, seed) in setup()) {
        let ff = FiniteField::get(q).unwrap();
        let tag = FieldTag::E { n, u0 };
        let mut r = rng(seed);
        let y = LaurentElem::random(&mut r, &ff, tag, 0, 8);
        let a1 = y.coeff_at(1).unwrap();
        let x = y.shift(-1);
        let got = psi_eval(&trace_e_over_f(&x, &ff), &ff).unwrap();
        prop_assert_eq!(got, psi_residue(ff.mul(ff.from_int(n as i64), a1), &ff));
        // Changing y by p_E^2 does not move the value.
        let z = y.add(&LaurentElem::random(&mut r, &ff, tag, 2, 6), &ff).shift(-1);
        prop_assert_eq!(psi_eval(&trace_e_over_f(&z, &ff), &ff).unwrap(), got);
    }

    #[test]
    fn level_one_character_is_multiplicative(
        (q, n, u0, seed) in setup(),
        e in 0u64..12,
        k in 0i64..12,
        tw in prop::option::of((0i64..12, 0i64..4)),
    ) {
        let ff = FiniteField::get(q).unwrap();
        let tag = FieldTag::E { n, u0 };
        let xi = LevelOneCharE {
            n,
            u0,
            at_pi_e: RootOfUnity::new(k, 12),
            lambda_exp: -1,
            unit_exp: e % (q - 1),
            twist: tw.map(|(a, b)| TameChar::new(q, a, RootOfUnity::new(b, 4))),
        };
        let mut r = rng(seed);
        let x = unit_e(&mut r, &ff, tag, 10).shift(r.gen_range(-2..=2));
        let y = unit_e(&mut r, &ff, tag, 10).shift(r.gen_range(-2..=2));
        let lhs = xi.eval(&x.mul(&y, &ff), &ff).unwrap();
        let rhs = xi.eval(&x, &ff).unwrap().mul(&xi.eval(&y, &ff).unwrap());
        prop_assert_eq!(lhs, rhs);
        // Trivial on 1 + p_E^2.
        let w = LaurentElem::one(tag).add(&LaurentElem::random(&mut r, &ff, tag, 2, 8), &ff);
        prop_assert_eq!(xi.eval(&x.mul(&w, &ff), &ff).unwrap(), xi.eval(&x, &ff).unwrap());
    }

    #[test]
    fn tame_character_is_multiplicative(i in 0..QS.len(), e in 0i64..12, s in 0i64..6, seed in any::<u64>()) {
        let q = QS[i];
        let ff = FiniteField::get(q).unwrap();
        let chi = TameChar::new(q, e, RootOfUnity::new(s, 6));
        let mut r = rng(seed);
        let x = LaurentElem::random(&mut r, &ff, FieldTag::F, -1, 5);
        let y = LaurentElem::random(&mut r, &ff, FieldTag::F, 0, 5);
        prop_assume!(!x.is_zero() && !y.is_zero());
        let lhs = chi.eval(&x.mul(&y, &ff), &ff).unwrap();
        prop_assert_eq!(lhs, chi.eval(&x, &ff).unwrap().mul(chi.eval(&y, &ff).unwrap()));
        prop_assert_eq!(chi.mul(&chi.inv()), TameChar::trivial(q));
    }

    #[test]
    fn series_arithmetic_round_trips((q, n, u0, seed) in setup()) {
        let ff = FiniteField::get(q).unwrap();
        let tag = FieldTag::E { n, u0 };
        let mut r = rng(seed);
        let x = unit_e(&mut r, &ff, tag, 10).shift(1);
        let y = LaurentElem::random(&mut r, &ff, tag, -1, 10);
        prop_assert!(x.mul(&x.inv(&ff).unwrap(), &ff).agrees_with(&LaurentElem::one(tag)));
        prop_assert!(x.add(&y, &ff).sub(&y, &ff).agrees_with(&x));
        prop_assert!(x.mul(&y, &ff).agrees_with(&y.mul(&x, &ff)));
    }

    #[test]
    fn series_json_round_trip((q, n, u0, seed) in setup(), in_e in any::<bool>()) {
        let ff = FiniteField::get(q).unwrap();
        let tag = if in_e { FieldTag::E { n, u0 } } else { FieldTag::F };
        let mut r = rng(seed);
        let x = LaurentElem::random(&mut r, &ff, tag, -3, 7);
        let s = serde_json::to_string(&x).unwrap();
        let back: LaurentElem = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn gauss_sum_values_are_cyclotomic(i in 0..QS.len(), e in 1u64..12) {
        let q = QS[i];
        prop_assume!(e < q - 1);
        let g = llc_lab::galois::residue_gauss_sum(q, e).unwrap();
        let (re, im) = g.to_complex();
        prop_assert!((re * re + im * im - q as f64).abs() < 1e-9);
        prop_assert_eq!(g.mul(&g.conj()), CycloNumber::from_int(q as i128));
    }
}

