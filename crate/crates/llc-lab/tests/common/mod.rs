//! Strategies shared by the integration suites.
#![allow(dead_code)]

use llc_lab::automorphic::SSCDatum;
use llc_lab::exact_values::RootOfUnity;
use llc_lab::local_fields::{FiniteField, TameChar};
use proptest::prelude::*;

pub const QS: [u64; 6] = [3, 5, 7, 9, 11, 13];

fn char_p(q: u64) -> u64 {
    FiniteField::get(q).unwrap().p()
}

/// A valid datum with q drawn from `qs` and 2 ≤ n ≤ max_n, p ∤ n.
pub fn datum_in(qs: &'static [u64], max_n: usize) -> impl Strategy<Value = SSCDatum> {
    (0..qs.len(), 2..=max_n, any::<u32>(), any::<u32>(), any::<bool>(), any::<u32>())
        .prop_filter("p divides n", move |(i, n, ..)| !(*n as u64).is_multiple_of(char_p(qs[*i])))
        .prop_map(move |(i, n, u, e, neg, z)| {
            let q = qs[i];
            let ff = FiniteField::get(q).unwrap();
            let u0 = (u as u64 % (q - 1) + 1) as u8;
            let at_t = if neg { RootOfUnity::minus_one() } else { RootOfUnity::one() };
            let omega = TameChar::new(q, (e as u64 % (q - 1)) as i64, at_t);
            let choices = SSCDatum::zeta_choices(n, omega.at_varpi(u0, &ff));
            let zeta = choices[z as usize % n];
            SSCDatum::new(n, q, u0, omega, zeta).unwrap()
        })
}

pub fn datum() -> impl Strategy<Value = SSCDatum> {
    datum_in(&QS, 5)
}

/// A tame twist of F^× with λ(t) a 2(q−1)-th root of unity.
pub fn twist(q: u64) -> impl Strategy<Value = TameChar> {
    (0..q - 1, 0..2 * (q - 1)).prop_map(move |(e, s)| TameChar::new(q, e as i64, RootOfUnity::new(s as i64, 2 * (q - 1))))
}

pub fn datum_and_twist() -> impl Strategy<Value = (SSCDatum, TameChar)> {
    datum().prop_flat_map(|d| {
        let q = d.q;
        (Just(d), twist(q))
    })
}
