use llc_lab::building::{
    barycenter, cocharacter_kills, destabilizing_cocharacter, dim_gap, enumerate_facets, functionals_over, gap_vanishes_by_rule,
    gl_order, graded_quotient, in_closed_alcove, kernel_of_action, point_from_gaps, probe_nullity, r_of_x, root_count_dims,
    stability_certificate, ApartmentPoint, Certificate, FacetSpec,
};
use llc_lab::exact_values::Q;
use llc_lab::local_fields::FiniteField;
use num_traits::Zero;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn facet() -> impl Strategy<Value = FacetSpec> {
    prop::collection::vec(1usize..=3, 1..=5)
        .prop_flat_map(|m| {
            let k = m.len();
            (Just(m), if k >= 2 { prop::bool::ANY.boxed() } else { Just(false).boxed() })
        })
        .prop_map(|(m, t)| FacetSpec::new(t as u8, m).unwrap())
}

/// A facet with a point of it whose gaps are not all equal.
fn facet_and_gaps() -> impl Strategy<Value = (FacetSpec, Vec<Q>)> {
    facet()
        .prop_filter("needs two free gaps", |f| f.k() - f.t as usize >= 2)
        .prop_flat_map(|f| {
            let parts = f.k() - f.t as usize;
            (Just(f), prop::collection::vec(1i128..=9, parts))
        })
        .prop_filter("barycenter", |(_, w)| w.iter().any(|&a| a != w[0]))
        .prop_map(|(f, w)| {
            let s: i128 = w.iter().sum();
            let gaps = w.iter().map(|&a| Q::new(a, s)).collect();
            (f, gaps)
        })
}

fn product_gl_order(blocks: &[usize], q: u64) -> Option<u128> {
    blocks.iter().try_fold(1u128, |acc, &b| acc.checked_mul(gl_order(b, q)))
}

#[test]
fn facet_counts_are_powers_of_two() {
    for n in 2..=7 {
        let fs = enumerate_facets(n);
        assert_eq!(fs.len(), (1 << n) - 1, "n={n}");
        let mut sorted = fs.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), fs.len());
    }
}

#[test]
fn kernel_matches_probe_system() {
    let mut checked = 0;
    for n in 2..=5 {
        for f in enumerate_facets(n) {
            let gq = graded_quotient(&barycenter(&f).unwrap());
            if product_gl_order(&gq.blocks, 3).is_none_or(|o| o > 200_000) {
                continue;
            }
            let cert = kernel_of_action(&gq, 3).unwrap();
            let Certificate::KernelIsScalars { kernel_order, probe_nullity: pn, .. } = &cert else { panic!() };
            assert_eq!(*kernel_order == 2, *pn == 1, "{f}");
            assert!(cert.verify(&barycenter(&f).unwrap()).unwrap(), "{f}");
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn alcove_barycenters_are_stable() {
    for n in 2..=5 {
        let f = FacetSpec::new(0, vec![1; n]).unwrap();
        let c = stability_certificate(&f, 3).unwrap();
        assert_eq!(c.kind(), "StableExists");
        assert!(c.verify(&barycenter(&f).unwrap()).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn facet_text_round_trip(f in facet()) {
        prop_assert_eq!(f.to_string().parse::<FacetSpec>().unwrap(), f.clone());
        let short = format!("{}:{}", f.t, f.m.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","));
        prop_assert_eq!(short.parse::<FacetSpec>().unwrap(), f);
    }

    #[test]
    fn point_text_round_trip(c in prop::collection::vec((-20i128..=20, 1i128..=12), 2..=6)) {
        let x = ApartmentPoint(c.into_iter().map(|(a, b)| Q::new(a, b)).collect());
        prop_assert_eq!(x.to_string().parse::<ApartmentPoint>().unwrap(), x.clone());
        let bare = x.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        prop_assert_eq!(bare.parse::<ApartmentPoint>().unwrap(), x);
    }

    #[test]
    fn gap_rule_matches_root_count(f in facet()) {
        let x = barycenter(&f).unwrap();
        prop_assert!(in_closed_alcove(&x));
        let (g, v) = root_count_dims(&x);
        let gq = graded_quotient(&x);
        prop_assert!(gq.is_barycenter());
        prop_assert_eq!((gq.dim_g, gq.dim_v), (g, v));
        prop_assert_eq!(dim_gap(&f), Q::from_integer(g as i128 - v as i128));
        prop_assert_eq!(dim_gap(&f).is_zero(), gap_vanishes_by_rule(&f));
        prop_assert_eq!(gq.r, r_of_x(&x));
    }

    #[test]
    fn certificate_kind_follows_the_gap(f in facet()) {
        let c = stability_certificate(&f, 3).unwrap();
        let kind = if f.is_alcove() {
            "StableExists"
        } else if dim_gap(&f).is_zero() {
            "NoStableJordanWitness"
        } else {
            "NoStableDimGap"
        };
        prop_assert_eq!(c.kind(), kind);
        prop_assert!(c.verify(&barycenter(&f).unwrap()).unwrap());
    }

    #[test]
    fn nonbarycenters_are_destabilized((f, gaps) in facet_and_gaps(), seed in any::<u64>()) {
        let x = point_from_gaps(&f, &gaps);
        prop_assert!(in_closed_alcove(&x));
        let gq = graded_quotient(&x);
        prop_assert!(!gq.is_barycenter());
        let ff = FiniteField::get(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for lam in functionals_over(&gq, &ff, 81, 16, &mut rng) {
            let c = destabilizing_cocharacter(&x, &lam).unwrap();
            prop_assert!(c.verify(&x).unwrap());
            prop_assert!(cocharacter_kills(&c, &gq, &lam));
        }
    }

    #[test]
    fn probe_system_sees_only_scalars(f in facet()) {
        let gq = graded_quotient(&barycenter(&f).unwrap());
        prop_assert_eq!(probe_nullity(&gq), 1);
    }
}
