use llc_lab::exact_values::{
    collapse_to_monomial, cyclotomic_poly, CycloNumber, EpsMonomial, EpsPolynomial, LambdaGraded, RootOfUnity, Q,
};
use llc_lab::galois::residue_gauss_sum;
use proptest::prelude::*;

fn numeric(order: u64, dense: &[i128]) -> (f64, f64) {
    dense.iter().enumerate().fold((0.0, 0.0), |(re, im), (e, &c)| {
        let a = 2.0 * std::f64::consts::PI * e as f64 / order as f64;
        (re + c as f64 * a.cos(), im + c as f64 * a.sin())
    })
}

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9
}

fn dense_strategy() -> impl Strategy<Value = (u64, Vec<i128>)> {
    (1u64..=30).prop_flat_map(|n| (Just(n), prop::collection::vec(-4i128..=4, n as usize)))
}

fn cyclo_strategy() -> impl Strategy<Value = CycloNumber> {
    dense_strategy().prop_map(|(n, v)| CycloNumber::from_dense(n, v, 1))
}

fn eps_strategy() -> impl Strategy<Value = EpsMonomial> {
    (cyclo_strategy(), -3i32..=3, -4i128..=4, 1i128..=3, -2i64..=2).prop_map(|(c, a, num, den, s)| {
        EpsMonomial::new(7, LambdaGraded::monomial(a, c), Q::new(num, den), s)
    })
}

#[test]
fn cyclotomic_polynomials_small() {
    assert_eq!(*cyclotomic_poly(1), vec![-1, 1]);
    assert_eq!(*cyclotomic_poly(4), vec![1, 0, 1]);
    assert_eq!(*cyclotomic_poly(6), vec![1, -1, 1]);
    assert_eq!(*cyclotomic_poly(12), vec![1, 0, -1, 0, 1]);
}

#[test]
fn gauss_sum_norm_for_every_nontrivial_character() {
    for q in [3u64, 5, 7, 9, 11, 13] {
        for e in 1..q - 1 {
            let g = residue_gauss_sum(q, e).unwrap();
            assert_eq!(g.mul(&g.conj()), CycloNumber::from_int(q as i128), "q={q} e={e}");
        }
        // The trivial character gives Σψ(a) over units = −1.
        assert_eq!(residue_gauss_sum(q, 0).unwrap(), CycloNumber::from_int(-1));
    }
}

#[test]
fn root_of_unity_text_form() {
    let r = RootOfUnity::parse("3/12").unwrap();
    assert_eq!(r, RootOfUnity::new(1, 4));
    assert_eq!(r.to_string(), "1/4");
    assert!(RootOfUnity::parse("1/0").is_err());
    assert!(RootOfUnity::parse("x").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reduction_matches_numeric_value((n, v) in dense_strategy()) {
        let c = CycloNumber::from_dense(n, v.clone(), 1);
        prop_assert!(close(c.to_complex(), numeric(n, &v)));
    }

    #[test]
    fn reduction_is_idempotent((n, v) in dense_strategy()) {
        let c = CycloNumber::from_dense(n, v, 1);
        let again = CycloNumber::from_dense(c.order(), c.coeffs().iter().map(|x| *x.numer()).collect(), 1);
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(c.add(&CycloNumber::zero()), c);
    }

    #[test]
    fn exact_equality_agrees_with_numerics((n, v) in dense_strategy(), w in prop::collection::vec(-4i128..=4, 30)) {
        let w: Vec<i128> = w.into_iter().take(n as usize).collect();
        let a = CycloNumber::from_dense(n, v.clone(), 1);
        let b = CycloNumber::from_dense(n, w.clone(), 1);
        prop_assert_eq!(a == b, close(numeric(n, &v), numeric(n, &w)));
        // Adding a multiple of Φ_N never changes the value.
        let phi = cyclotomic_poly(n);
        let mut shifted = v.clone();
        for (i, c) in phi.iter().enumerate() {
            shifted[i % n as usize] += 3 * c;
        }
        prop_assert_eq!(CycloNumber::from_dense(n, shifted, 1), a);
    }

    #[test]
    fn mixed_orders_lift_consistently(a in cyclo_strategy(), b in cyclo_strategy()) {
        let s = a.add(&b);
        let p = a.mul(&b);
        let (ar, ai) = a.to_complex();
        let (br, bi) = b.to_complex();
        prop_assert!(close(s.to_complex(), (ar + br, ai + bi)));
        prop_assert!(close(p.to_complex(), (ar * br - ai * bi, ar * bi + ai * br)));
    }

    #[test]
    fn inverse_is_inverse(a in cyclo_strategy()) {
        prop_assume!(!a.is_zero());
        prop_assert_eq!(a.mul(&a.inverse().unwrap()), CycloNumber::one());
    }

    #[test]
    fn roots_of_unity_are_recognized(k in 0i64..60, n in 1u64..=24) {
        let r = RootOfUnity::new(k, n);
        prop_assert_eq!(CycloNumber::root(r).as_root_of_unity(), Some(r));
        prop_assert_eq!(RootOfUnity::parse(&r.to_string()).unwrap(), r);
        prop_assert_eq!(CycloNumber::root(r).conj(), CycloNumber::root(r.inv()));
    }

    #[test]
    fn eps_monomial_multiplication_is_associative_and_unital(a in eps_strategy(), b in eps_strategy(), c in eps_strategy()) {
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert_eq!(a.mul(&EpsMonomial::one(7)), a.clone());
        prop_assert_eq!(EpsMonomial::one(7).mul(&a), a);
    }

    #[test]
    fn eps_json_round_trip(a in eps_strategy()) {
        let s = serde_json::to_string(&a).unwrap();
        let back: EpsMonomial = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn single_term_polynomial_collapses(a in eps_strategy()) {
        prop_assume!(!a.unit.is_zero());
        let mut p = EpsPolynomial::new(7);
        p.add_term(-a.q_s, a.unit.clone(), a.q_const).unwrap();
        prop_assert_eq!(collapse_to_monomial(&p).unwrap(), a);
    }
}
