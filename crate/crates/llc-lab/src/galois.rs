//! The predicted parameter Ind_{W_E}^{W_F} ξ_ζ: the character ξ_ζ of E^×,
//! the discriminant character κ, brute-force Gauss sums and ε on the Galois side.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::automorphic::SSCDatum;
use crate::exact_values::{lambda_reduce, CycloNumber, EpsMonomial, LambdaGraded, RootOfUnity, Q};
use crate::local_fields::{
    norm_e_over_f, psi_eval, psi_residue, trace_e_over_f, unit_reps, FieldError, FieldTag, FiniteField, Fq,
    LaurentElem, LevelOneCharE, TameChar,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum GaloisError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Exact(#[from] crate::exact_values::ExactError),
}

/// Tame quadratic Hilbert symbol (a, b) over F_q((t)), q odd.
pub fn hilbert_tame(a: &LaurentElem, b: &LaurentElem, ff: &FiniteField) -> Result<i8, FieldError> {
    let alpha = a.valuation().ok_or(FieldError::ZeroInput)? as i64;
    let beta = b.valuation().ok_or(FieldError::ZeroInput)? as i64;
    let mut r = ff.mul(ff.pow(a.leading(), beta), ff.pow(b.leading(), -alpha));
    if (alpha * beta) % 2 != 0 {
        r = ff.neg(r);
    }
    Ok(ff.legendre(r))
}

/// κ_{E/F}: the quadratic character x ↦ (x, disc(X^n − ϖ)).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Kappa {
    pub n: usize,
    pub u0: Fq,
}

impl Kappa {
    /// (−1)^{(n−1)(n−2)/2}·n^n·ϖ^{n−1} as a series in t.
    pub fn discriminant(&self, ff: &FiniteField) -> LaurentElem {
        let n = self.n as i64;
        let sign = if ((n - 1) * (n - 2) / 2) % 2 == 0 { 1 } else { -1 };
        let d0 = ff.mul(ff.from_int(sign), ff.pow(ff.from_int(n), n));
        let unit = ff.mul(d0, ff.pow(self.u0, n - 1));
        LaurentElem::monomial(FieldTag::F, unit, (n - 1) as i32)
    }

    pub fn eval(&self, x: &LaurentElem, ff: &FiniteField) -> Result<i8, FieldError> {
        hilbert_tame(x, &self.discriminant(ff), ff)
    }

    pub fn at_varpi(&self, ff: &FiniteField) -> i8 {
        self.eval(&LaurentElem::monomial(FieldTag::F, self.u0, 1), ff).expect("nonzero")
    }

    /// Exponent e with κ(g^k) = ζ_{q−1}^{e·k} on units.
    pub fn unit_exp(&self, ff: &FiniteField) -> u64 {
        let g = LaurentElem::monomial(FieldTag::F, ff.generator(), 0);
        if self.eval(&g, ff).expect("nonzero") == 1 {
            0
        } else {
            (ff.q() - 1) / 2
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LambdaMode {
    /// Λ kept as a free formal unit.
    Formal,
    /// Λ^n rewritten to κ(ϖ).
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterDatum {
    pub datum: SSCDatum,
    pub xi: LevelOneCharE,
    pub kappa: Kappa,
    pub lambda_mode: LambdaMode,
}

/// ξ_ζ(ϖ_E) = ζ·Λ^{−1}, ξ_ζ = ω·κ^{−1} on k^×, ξ_ζ(1 + cϖ_E) = ψ(nc).
pub fn build_parameter(d: &SSCDatum, lambda_mode: LambdaMode) -> ParameterDatum {
    let ff = d.ff();
    let kappa = Kappa { n: d.n, u0: d.u0 };
    let q1 = ff.q() - 1;
    let unit_exp = (d.omega.unit_exp + q1 - kappa.unit_exp(&ff)) % q1;
    let xi = LevelOneCharE { n: d.n as u8, u0: d.u0, at_pi_e: d.zeta, lambda_exp: -1, unit_exp, twist: None };
    ParameterDatum { datum: d.clone(), xi, kappa, lambda_mode }
}

impl ParameterDatum {
    fn finish(&self, x: LambdaGraded, ff: &FiniteField) -> LambdaGraded {
        match self.lambda_mode {
            LambdaMode::Formal => x,
            LambdaMode::Reduced => lambda_reduce(&x, self.datum.n as u32, self.kappa.at_varpi(ff)),
        }
    }
}

/// Per-term data of o_E^×/(1+p_E^2) ∋ x = a_0 + a_1ϖ_E, with y = ϖ_E^{−1}x.
#[derive(Clone, Debug)]
struct GaussRow {
    a0: Fq,
    c1: Fq,
    norm: LaurentElem,
    /// Tr_{F_q/F_p} of the t^0 coefficient of Tr_{E/F}(y).
    psi_arg: Fq,
}

/// Trace and norm data for every term of the Gauss sum, for one (n, q, u0).
pub struct GaussTable {
    n: usize,
    u0: Fq,
    ff: Arc<FiniteField>,
    rows: Vec<GaussRow>,
}

impl GaussTable {
    pub fn build(n: usize, q: u64, u0: Fq) -> Result<Self, FieldError> {
        let ff = FiniteField::get(q)?;
        let tag = FieldTag::E { n: n as u8, u0 };
        let mut rows = vec![];
        for x in unit_reps(&ff, tag, 2) {
            let y = x.shift(-1);
            let a0 = y.leading();
            let c1 = ff.div(y.coeff_at(0)?, a0);
            let tr = trace_e_over_f(&y, &ff);
            let psi_arg = tr.coeff_at(0)?;
            let norm = norm_e_over_f(&y, &ff)?;
            rows.push(GaussRow { a0, c1, norm, psi_arg });
        }
        Ok(Self { n, u0, ff, rows })
    }

    pub fn cached(n: usize, q: u64, u0: Fq) -> Result<Arc<Self>, FieldError> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, u64, Fq), Arc<GaussTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().unwrap().get(&(n, q, u0)) {
            return Ok(t.clone());
        }
        let t = Arc::new(Self::build(n, q, u0)?);
        cache.lock().unwrap().insert((n, q, u0), t.clone());
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// τ(ξ, ψ_E) = Σ_x ξ^{−1}(y)·ψ(Tr y).
    pub fn gauss_sum(&self, xi: &LevelOneCharE) -> Result<LambdaGraded, FieldError> {
        assert_eq!((xi.n as usize, xi.u0), (self.n, self.u0), "character over a different extension");
        let ff = &*self.ff;
        let p = ff.p() as usize;
        let mut groups: HashMap<RootOfUnity, Vec<i128>> = HashMap::new();
        for r in &self.rows {
            let (tame, wild) = xi.eval_parts(-1, r.a0, r.c1, Some(&r.norm), ff)?;
            let b = ff.trace(ff.sub(r.psi_arg, wild)) as usize;
            groups.entry(tame.inv()).or_insert_with(|| vec![0; p])[b] += 1;
        }
        let sum = CycloNumber::sum_with_psi_buckets(groups.iter().map(|(r, c)| (*r, &c[..])), p as u64);
        Ok(LambdaGraded::monomial(xi.lambda_exp, sum))
    }
}

/// The Gauss sum through the cached term table.
pub fn gauss_sum_bruteforce(xi: &LevelOneCharE, q: u64) -> Result<LambdaGraded, FieldError> {
    GaussTable::cached(xi.n as usize, q, xi.u0)?.gauss_sum(xi)
}

/// The same sum evaluated term by term with no tabulation or grouping.
pub fn gauss_sum_direct(xi: &LevelOneCharE, q: u64) -> Result<LambdaGraded, FieldError> {
    let ff = FiniteField::get(q)?;
    let mut acc = LambdaGraded::zero();
    for x in unit_reps(&ff, xi.tag(), 2) {
        let y = x.shift(-1);
        let val = xi.eval(&y, &ff)?.inverse().expect("character values are units");
        let psi = psi_eval(&trace_e_over_f(&y, &ff), &ff)?;
        acc = acc.add(&val.mul_root(psi));
    }
    Ok(acc)
}

/// g(χ_e) = Σ_{a ∈ F_q^×} χ_e(a)·ψ(a) with χ_e(g^k) = ζ_{q−1}^{ek}.
pub fn residue_gauss_sum(q: u64, e: u64) -> Result<CycloNumber, FieldError> {
    let ff = FiniteField::get(q)?;
    let chi = TameChar::new(q, e as i64, RootOfUnity::one());
    let terms: Vec<RootOfUnity> = ff.units().map(|a| chi.on_residue(a, &ff).mul(psi_residue(a, &ff))).collect();
    Ok(CycloNumber::sum_of_roots(terms.iter().map(|r| (r, 1))))
}

/// For a_0 ≠ 1: Σ_{a_1} ψ(−n a_1/a_0)·ψ(n a_1) = 0.
pub fn inner_sums_vanish(n: usize, q: u64) -> Result<bool, FieldError> {
    let ff = FiniteField::get(q)?;
    let nn = ff.from_int(n as i64);
    for a0 in ff.units().filter(|&a| a != 1) {
        let roots: Vec<RootOfUnity> = ff
            .elements()
            .map(|a1| {
                let w = ff.add(ff.neg(ff.div(ff.mul(nn, a1), a0)), ff.mul(nn, a1));
                psi_residue(w, &ff)
            })
            .collect();
        if !CycloNumber::sum_of_roots(roots.iter().map(|r| (r, 1))).is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// λ_E = λ∘N_{E/F} attached to ξ.
pub fn twisted(xi: &LevelOneCharE, lambda: &TameChar) -> LevelOneCharE {
    if lambda.is_trivial() {
        xi.clone()
    } else {
        xi.with_twist(*lambda)
    }
}

/// ε(s, Ind(ξ ⊗ λ_E), ψ) = Λ·(τ(ξ⊗λ_E)/q)·q^{1/2−s}.
pub fn epsilon_galois(pd: &ParameterDatum, lambda: &TameChar) -> Result<EpsMonomial, GaloisError> {
    let q = pd.datum.q;
    let ff = pd.datum.ff();
    let tau = gauss_sum_bruteforce(&twisted(&pd.xi, lambda), q)?;
    let unit = tau.shift_lambda(1).scale(Ratio::new(1, q as i128));
    Ok(EpsMonomial::new(q, pd.finish(unit, &ff), Q::new(1, 2), -1))
}

/// det φ as a character of F^×: unit part exponent and value at ϖ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetParameter {
    pub unit_exp: u64,
    pub at_varpi: LambdaGraded,
}

/// x ↦ ξ(x)·κ(x) on F^×, evaluated through the embedding F ⊂ E.
pub fn det_parameter(pd: &ParameterDatum) -> Result<DetParameter, GaloisError> {
    let d = &pd.datum;
    let ff = d.ff();
    let eval = |x: &LaurentElem| -> Result<LambdaGraded, GaloisError> {
        let xe = crate::local_fields::embed_in_e(x, d.n as u8, d.u0, &ff);
        let v = pd.xi.eval(&xe, &ff)?;
        let k = pd.kappa.eval(x, &ff)?;
        Ok(if k == 1 { v } else { v.neg() })
    };
    let g = LaurentElem::monomial(FieldTag::F, ff.generator(), 0);
    let on_g = eval(&g)?;
    let root = on_g
        .homogeneous()
        .filter(|(a, _)| *a == 0)
        .and_then(|(_, c)| c.as_root_of_unity())
        .expect("unit values are Λ-free roots of unity");
    let unit_exp = root.exponent_in(ff.q() - 1);
    let at_varpi = pd.finish(eval(&d.varpi())?, &ff);
    Ok(DetParameter { unit_exp, at_varpi })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn datum(n: usize, q: u64, u0: Fq, e: i64, at_t: RootOfUnity, k: usize) -> SSCDatum {
        let ff = FiniteField::get(q).unwrap();
        let om = TameChar::new(q, e, at_t);
        let z = SSCDatum::zeta_choices(n, om.at_varpi(u0, &ff))[k];
        SSCDatum::new(n, q, u0, om, z).unwrap()
    }

    #[test]
    fn hilbert_symbol_basics() {
        let ff = FiniteField::get(7).unwrap();
        let sq = LaurentElem::monomial(FieldTag::F, 2, 0);
        let t = LaurentElem::monomial(FieldTag::F, 1, 1);
        assert_eq!(hilbert_tame(&sq, &t, &ff).unwrap(), 1);
        let nsq = LaurentElem::monomial(FieldTag::F, 3, 0);
        assert_eq!(hilbert_tame(&nsq, &t, &ff).unwrap(), -1);
        // (t, t) = (t, −1) = legendre(−1) = −1 for q = 7
        assert_eq!(hilbert_tame(&t, &t, &ff).unwrap(), -1);
    }

    #[test]
    fn kappa_on_units() {
        for q in [5u64, 7, 9, 11] {
            let ff = FiniteField::get(q).unwrap();
            for n in [2usize, 3, 4] {
                if (n as u64).is_multiple_of(ff.p()) {
                    continue;
                }
                let k = Kappa { n, u0: 2 % q as u8 };
                for a in ff.units() {
                    let x = LaurentElem::monomial(FieldTag::F, a, 0);
                    let expect = if n % 2 == 1 { 1 } else { ff.legendre(a) };
                    assert_eq!(k.eval(&x, &ff).unwrap(), expect);
                }
            }
        }
    }

    #[test]
    fn direct_twenty_term_sum() {
        let d = datum(3, 5, 1, 0, RootOfUnity::one(), 0);
        let pd = build_parameter(&d, LambdaMode::Formal);
        let direct = gauss_sum_direct(&pd.xi, 5).unwrap();
        assert_eq!(direct, LambdaGraded::monomial(-1, CycloNumber::from_int(5)));
        assert_eq!(gauss_sum_bruteforce(&pd.xi, 5).unwrap(), direct);
    }

    #[test]
    fn parameter_examples() {
        let d = datum(2, 7, 3, 0, RootOfUnity::one(), 0);
        let pd = build_parameter(&d, LambdaMode::Formal);
        assert_eq!(pd.xi.at_pi_e, RootOfUnity::one());
        assert_eq!(pd.xi.lambda_exp, -1);
        assert_eq!(pd.xi.unit_exp, 3);
        let ff = d.ff();
        let x = LaurentElem::from_coeffs(pd.xi.tag(), 0, &[1, 1], None);
        let (_, r) = pd.xi.eval_split(&x, &ff).unwrap();
        assert_eq!(r, psi_residue(ff.from_int(2), &ff));
    }

    #[test]
    fn gauss_sum_identity_small_grid() {
        for (n, q) in [(2, 3), (2, 5), (3, 5), (4, 7), (4, 9)] {
            let ff = FiniteField::get(q).unwrap();
            for u0 in ff.units() {
                for e in 0..(q as i64 - 1) {
                    let d = datum(n, q, u0, e, RootOfUnity::minus_one(), 1 % n);
                    let pd = build_parameter(&d, LambdaMode::Formal);
                    let tau = gauss_sum_bruteforce(&pd.xi, q).unwrap();
                    let expect = LambdaGraded::monomial(-1, CycloNumber::root(d.zeta).scale(Q::from_integer(q as i128)));
                    assert_eq!(tau, expect, "n={n} q={q} u0={u0} e={e}");
                }
            }
        }
    }

    #[test]
    fn residue_gauss_sums() {
        // Quadratic character mod 5: g² = χ(−1)·5 = 5.
        let g = residue_gauss_sum(5, 2).unwrap();
        assert_eq!(g.mul(&g), CycloNumber::from_int(5));
        assert_eq!(residue_gauss_sum(7, 0).unwrap(), CycloNumber::from_int(-1));
    }

    #[test]
    fn inner_sum_vanishing() {
        for (n, q) in [(2, 3), (3, 5), (4, 9), (5, 11)] {
            assert!(inner_sums_vanish(n, q).unwrap());
        }
    }

    #[test]
    fn epsilon_examples() {
        let d = datum(3, 7, 3, 2, RootOfUnity::one(), 2);
        let pd = build_parameter(&d, LambdaMode::Formal);
        let triv = epsilon_galois(&pd, &TameChar::trivial(7)).unwrap();
        assert_eq!(triv, crate::automorphic::closed_form_epsilon(&d, &TameChar::trivial(7)));
        assert!(triv.unit.is_lambda_free());
        let lam = TameChar::new(7, 1, RootOfUnity::one());
        let tw = epsilon_galois(&pd, &lam).unwrap();
        assert_eq!(tw, crate::automorphic::closed_form_epsilon(&d, &lam));
    }

    #[test]
    fn det_matches_central_character() {
        for (n, q) in [(2, 5), (3, 7), (4, 9)] {
            let ff = FiniteField::get(q).unwrap();
            for u0 in ff.units() {
                let d = datum(n, q, u0, 1, RootOfUnity::minus_one(), 0);
                let pd = build_parameter(&d, LambdaMode::Reduced);
                let det = det_parameter(&pd).unwrap();
                assert_eq!(det.unit_exp, d.omega.unit_exp);
                assert_eq!(det.at_varpi, LambdaGraded::from_cyclo(CycloNumber::root(d.omega_varpi())));
                let formal = det_parameter(&build_parameter(&d, LambdaMode::Formal)).unwrap();
                let k = pd.kappa.at_varpi(&ff) as i128;
                let expect = LambdaGraded::monomial(-(n as i32), CycloNumber::root(d.omega_varpi()).scale(Q::from_integer(k)));
                assert_eq!(formal.at_varpi, expect);
            }
        }
    }
}
