//! Special pairs of Whittaker functions for two simple supercuspidal data with
//! the same central character: K-conjugation symmetry on K = ⟨g_1, g_2⟩·Z·I^+
//! and agreement on the mirabolic subgroup.

use rand::Rng;
use serde::Serialize;

use crate::automorphic::{
    affine_generic_eval, bruhat_decompose, psi_u_eval, random_series, whittaker_eval, whittaker_from_parts, AutError, Bruhat, MatG,
    SSCDatum,
};
use crate::exact_values::{CycloNumber, RootOfUnity};
use crate::local_fields::{psi_residue, FieldError, FieldTag, FiniteField, Fq, LaurentElem, TameChar};

const F: FieldTag = FieldTag::F;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PairError {
    #[error(transparent)]
    Automorphic(#[from] AutError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("pair data differ in {0}")]
    Mismatched(&'static str),
}

/// Two data with equal n, q and ω, and the enumeration precision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairConfig {
    pub d1: SSCDatum,
    pub d2: SSCDatum,
    pub m: u32,
    pub b: u32,
}

impl PairConfig {
    pub fn new(d1: SSCDatum, d2: SSCDatum, m: u32, b: u32) -> Result<Self, PairError> {
        if d1.n != d2.n {
            return Err(PairError::Mismatched("n"));
        }
        if d1.q != d2.q {
            return Err(PairError::Mismatched("q"));
        }
        if d1.omega != d2.omega {
            return Err(PairError::Mismatched("central character"));
        }
        Ok(Self { d1, d2, m, b })
    }
}

/// Pairs used by the checks: (u=1, first ζ) against every other uniformizer
/// class with its first ζ, and against the other ζ for u=1; for ω trivial and
/// ω with unit exponent 1.
pub fn pair_grid(n: usize, q: u64) -> Result<Vec<(SSCDatum, SSCDatum)>, PairError> {
    let ff = FiniteField::get(q)?;
    let mut out = vec![];
    for omega in [TameChar::trivial(q), TameChar::new(q, 1, RootOfUnity::one())] {
        let mk = |u0: Fq, idx: usize| -> Result<SSCDatum, AutError> {
            let z = SSCDatum::zeta_choices(n, omega.at_varpi(u0, &ff))[idx];
            SSCDatum::new(n, q, u0, omega, z)
        };
        let base = mk(1, 0)?;
        for u2 in ff.units().filter(|&u| u != 1) {
            out.push((base.clone(), mk(u2, 0)?));
        }
        for idx in 1..n {
            out.push((base.clone(), mk(1, idx)?));
        }
    }
    Ok(out)
}

fn mono(c: Fq, v: i32) -> LaurentElem {
    LaurentElem::monomial(F, c, v)
}

/// g_χ^{−1} = ϖ^{−1}·g_χ^{n−1}: ones on the subdiagonal, ϖ^{−1} in the corner.
pub fn g_chi_inv(n: usize, u0: Fq, ff: &FiniteField) -> MatG {
    let mut m = MatG::zero(n);
    for i in 0..n - 1 {
        m.set(i + 1, i, LaurentElem::one(F));
    }
    m.set(0, n - 1, mono(ff.inv(u0), -1));
    m
}

/// A sampled element of K together with its inverse; the word is the membership witness.
#[derive(Clone, Debug)]
pub struct KWord {
    pub k: MatG,
    pub k_inv: MatG,
    pub letters: Vec<String>,
}

/// Random I^+ element as diag(1+p)·∏ elementary factors, with its inverse.
pub fn random_iplus_with_inverse<R: Rng>(
    rng: &mut R,
    n: usize,
    ff: &FiniteField,
    prec: usize,
) -> Result<(MatG, MatG), PairError> {
    let diag: Vec<LaurentElem> =
        (0..n).map(|_| LaurentElem::one(F).add(&random_series(rng, ff, 1, prec), ff)).collect();
    let dinv: Vec<LaurentElem> = diag.iter().map(|x| x.inv(ff)).collect::<Result<_, _>>()?;
    let mut k = MatG::diag(&diag);
    let mut k_inv = MatG::diag(&dinv);
    for _ in 0..n {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        let a = random_series(rng, ff, if i < j { 0 } else { 1 }, prec);
        let mut e = MatG::identity(n);
        e.set(i, j, a);
        let mut e_inv = MatG::identity(n);
        e_inv.set(i, j, a.neg(ff));
        k = k.mul(&e, ff);
        k_inv = e_inv.mul(&k_inv, ff);
    }
    Ok((k, k_inv))
}

/// Word of `len` letters from g_1^{±1}, g_2^{±1}, c·t^v and I^+ factors.
pub fn random_k_word<R: Rng>(
    rng: &mut R,
    n: usize,
    u1: Fq,
    u2: Fq,
    ff: &FiniteField,
    len: usize,
    prec: usize,
) -> Result<KWord, PairError> {
    let mut k = MatG::identity(n);
    let mut k_inv = MatG::identity(n);
    let mut letters = vec![];
    for _ in 0..len {
        let (a, a_inv, name) = match rng.gen_range(0..6) {
            0 => (MatG::g_chi(n, u1), g_chi_inv(n, u1, ff), "g1".to_string()),
            1 => (g_chi_inv(n, u1, ff), MatG::g_chi(n, u1), "g1^-1".to_string()),
            2 => (MatG::g_chi(n, u2), g_chi_inv(n, u2, ff), "g2".to_string()),
            3 => (g_chi_inv(n, u2, ff), MatG::g_chi(n, u2), "g2^-1".to_string()),
            4 => {
                let c = ff.random_unit(rng);
                let v = rng.gen_range(-1..=1);
                let z = MatG::diag(&vec![mono(c, v); n]);
                let zi = MatG::diag(&vec![mono(ff.inv(c), -v); n]);
                (z, zi, format!("{c}·t^{v}"))
            }
            _ => {
                let (a, ai) = random_iplus_with_inverse(rng, n, ff, prec)?;
                (a, ai, "k+".to_string())
            }
        };
        k = k.mul(&a, ff);
        k_inv = a_inv.mul(&k_inv, ff);
        letters.push(name);
    }
    Ok(KWord { k, k_inv, letters })
}

fn value_from(d: &SSCDatum, b: &Bruhat, ff: &FiniteField) -> CycloNumber {
    match b.class.hprime_shape(ff) {
        Some(s) if s.u0.is_none_or(|u| u == d.u0) => CycloNumber::root(whittaker_from_parts(d, &s, &b.sums, ff)),
        _ => CycloNumber::zero(),
    }
}

/// (W_1(g), W_2(g)) from one Bruhat decomposition.
pub fn pair_values(d1: &SSCDatum, d2: &SSCDatum, g: &MatG) -> Result<(CycloNumber, CycloNumber), PairError> {
    let ff = d1.ff();
    let b = bruhat_decompose(g, &ff, false)?;
    Ok((value_from(d1, &b, &ff), value_from(d2, &b, &ff)))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SymmetryReport {
    pub words: usize,
    pub nonzero: [usize; 2],
    pub violations: usize,
    pub first_violation: Option<Vec<String>>,
}

impl SymmetryReport {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

/// W_i(k^{−1}) = conj W_i(k) for `count` random words of K, i = 1, 2.
pub fn k_special_check<R: Rng>(cfg: &PairConfig, count: usize, rng: &mut R) -> Result<SymmetryReport, PairError> {
    let fam = k_special_family(&[cfg.d1.clone(), cfg.d2.clone()], cfg.d1.u0, cfg.d2.u0, cfg.m, count, rng)?;
    Ok(SymmetryReport {
        words: fam.words,
        nonzero: [fam.nonzero[0], fam.nonzero[1]],
        violations: fam.violations,
        first_violation: fam.first_violation,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FamilySymmetryReport {
    pub words: usize,
    /// Per datum, how many words gave W ≠ 0.
    pub nonzero: Vec<usize>,
    pub violations: usize,
    pub first_violation: Option<Vec<String>>,
}

impl FamilySymmetryReport {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

fn values_from(data: &[SSCDatum], b: &Bruhat, ff: &FiniteField) -> Vec<CycloNumber> {
    data.iter().map(|d| value_from(d, b, ff)).collect()
}

/// K-symmetry for K = ⟨g_{u1}, g_{u2}⟩·Z·I^+, checked on every datum in `data`
/// from shared decompositions. Data must share n and q.
pub fn k_special_family<R: Rng>(
    data: &[SSCDatum],
    u1: Fq,
    u2: Fq,
    m: u32,
    count: usize,
    rng: &mut R,
) -> Result<FamilySymmetryReport, PairError> {
    let Some(first) = data.first() else { return Ok(FamilySymmetryReport::default()) };
    if data.iter().any(|d| d.n != first.n || d.q != first.q) {
        return Err(PairError::Mismatched("n or q"));
    }
    let ff = first.ff();
    let prec = m as usize + 2;
    let mut rep = FamilySymmetryReport { nonzero: vec![0; data.len()], ..Default::default() };
    let unitary = |x: &CycloNumber| x.is_zero() || x.as_root_of_unity().is_some();
    for _ in 0..count {
        let len = rng.gen_range(1..=4);
        let w = random_k_word(rng, first.n, u1, u2, &ff, len, prec)?;
        let a = values_from(data, &bruhat_decompose(&w.k, &ff, false)?, &ff);
        let b = values_from(data, &bruhat_decompose(&w.k_inv, &ff, false)?, &ff);
        rep.words += 1;
        let mut bad = false;
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            rep.nonzero[i] += !x.is_zero() as usize;
            bad |= *y != x.conj() || !unitary(x);
        }
        if bad {
            rep.violations += 1;
            rep.first_violation.get_or_insert(w.letters);
        }
    }
    Ok(rep)
}

/// ι(g) = diag(g, 1).
pub fn iota(g: &MatG) -> MatG {
    let n = g.n() + 1;
    let mut m = MatG::identity(n);
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            m.set(i, j, g.get(i, j));
        }
    }
    m
}

/// Every element of o/p^k shifted to valuation ≥ lo: Σ_{i=lo}^{hi−1} a_i t^i.
fn shell(ff: &FiniteField, lo: i32, hi: i32) -> Vec<LaurentElem> {
    let len = (hi - lo) as usize;
    let q = ff.q() as usize;
    let mut out = vec![];
    let mut c = vec![0u8; len];
    'outer: loop {
        out.push(LaurentElem::from_coeffs(F, lo, &c, None));
        for e in c.iter_mut() {
            *e += 1;
            if (*e as usize) < q {
                continue 'outer;
            }
            *e = 0;
        }
        break;
    }
    out
}

/// x ∈ N_{n−1,1}: identity plus the given last-column entries above the corner.
fn n_elem(n: usize, col: &[LaurentElem]) -> MatG {
    let mut m = MatG::identity(n);
    for (i, x) in col.iter().enumerate() {
        m.set(i, n - 1, *x);
    }
    m
}

fn product_enum(lists: &[Vec<LaurentElem>]) -> Vec<Vec<LaurentElem>> {
    let mut out: Vec<Vec<LaurentElem>> = vec![vec![]];
    for l in lists {
        out = out.into_iter().flat_map(|p| l.iter().map(move |x| { let mut p = p.clone(); p.push(*x); p })).collect();
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MirabolicReport {
    pub checked: usize,
    pub nonzero: usize,
    pub mismatches: usize,
    pub x_formula_failures: usize,
    pub support_checked: usize,
    pub support_violations: usize,
}

impl MirabolicReport {
    pub fn ok(&self) -> bool {
        self.mismatches == 0 && self.x_formula_failures == 0 && self.support_violations == 0
    }
}

fn in_u_iplus(g: &MatG, ff: &FiniteField) -> Result<bool, PairError> {
    let b = bruhat_decompose(g, ff, false)?;
    let n = g.n();
    Ok((0..n).all(|i| b.class.perm[i] == i && b.class.vals[i] == 0 && b.class.units[i] == 1))
}

/// The precision-m enumeration of P_n: every x ∈ N_{n−1,1} (x_{n−1,n} over
/// p^{−B}/p^m, the rest over p^{−B}/p), then every superdiagonal g ∈ U_{n−1}
/// over p^{−B}/p as ι(g).
pub fn mirabolic_elements(n: usize, ff: &FiniteField, m: u32, b: u32) -> Vec<MirabolicElement> {
    let lo = -(b as i32);
    let mut out = vec![];
    let mut lists: Vec<Vec<LaurentElem>> = (0..n.saturating_sub(2)).map(|_| shell(ff, lo, 1)).collect();
    lists.push(shell(ff, lo, m as i32));
    for col in product_enum(&lists) {
        out.push(MirabolicElement::Column(col));
    }
    let sup: Vec<Vec<LaurentElem>> = (0..n.saturating_sub(2)).map(|_| shell(ff, lo, 1)).collect();
    for entries in product_enum(&sup) {
        let mut g = MatG::identity(n - 1);
        for (i, e) in entries.iter().enumerate() {
            g.set(i, i + 1, *e);
        }
        out.push(MirabolicElement::Levi(g));
    }
    out
}

#[derive(Clone, Debug)]
pub enum MirabolicElement {
    /// x ∈ N_{n−1,1} given by its last column above the corner.
    Column(Vec<LaurentElem>),
    /// ι(g) for g ∈ GL_{n−1}.
    Levi(MatG),
}

/// Agreement of W over each group of data sharing ω, across the enumeration
/// plus `mixed` random ι(g)·x with g from U_{n−1}I^+ or all of GL_{n−1}.
/// Also checks W(x) = ψ(x_{n−1,n}) and that W(ι(g)) ≠ 0 forces g ∈ U_{n−1}I^+.
pub fn mirabolic_agreement_family<R: Rng>(
    data: &[SSCDatum],
    m: u32,
    b: u32,
    mixed: usize,
    rng: &mut R,
) -> Result<MirabolicReport, PairError> {
    let Some(first) = data.first() else { return Ok(MirabolicReport::default()) };
    if data.iter().any(|d| d.n != first.n || d.q != first.q) {
        return Err(PairError::Mismatched("n or q"));
    }
    let n = first.n;
    let ff = first.ff();
    let lo = -(b as i32);
    let mut groups: Vec<Vec<usize>> = vec![];
    for (i, d) in data.iter().enumerate() {
        match groups.iter_mut().find(|g| data[g[0]].omega == d.omega) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let mut rep = MirabolicReport::default();
    let record = |rep: &mut MirabolicReport, vals: &[CycloNumber]| {
        rep.checked += 1;
        rep.nonzero += vals.iter().filter(|v| !v.is_zero()).count();
        let disagree = groups.iter().any(|g| g.iter().any(|&i| vals[i] != vals[g[0]]));
        rep.mismatches += disagree as usize;
    };
    for el in mirabolic_elements(n, &ff, m, b) {
        match el {
            MirabolicElement::Column(col) => {
                let vals = values_from(data, &bruhat_decompose(&n_elem(n, &col), &ff, false)?, &ff);
                record(&mut rep, &vals);
                let expect = CycloNumber::root(psi_residue(col[n - 2].coeff_at(0)?, &ff));
                rep.x_formula_failures += vals.iter().any(|v| *v != expect) as usize;
            }
            MirabolicElement::Levi(g) => {
                let vals = values_from(data, &bruhat_decompose(&iota(&g), &ff, false)?, &ff);
                record(&mut rep, &vals);
                if vals.iter().any(|v| !v.is_zero()) {
                    rep.support_checked += 1;
                    rep.support_violations += !in_u_iplus(&g, &ff)? as usize;
                }
            }
        }
    }

    let prec = m as usize + 4;
    for i in 0..mixed {
        let g = if i % 2 == 0 {
            MatG::random_unipotent(rng, n - 1, &ff, lo, prec).mul(&MatG::random_iplus(rng, n - 1, &ff, prec), &ff)
        } else {
            MatG::random(rng, n - 1, &ff, lo, 1, prec)
        };
        let col: Vec<LaurentElem> = (0..n - 1).map(|_| LaurentElem::random(rng, &ff, F, lo, prec)).collect();
        let p = iota(&g).mul(&n_elem(n, &col), &ff);
        let bd = match bruhat_decompose(&p, &ff, false) {
            Ok(bd) => bd,
            // A singular random draw is not an element of P_n.
            Err(AutError::Singular) => continue,
            Err(e) => return Err(e.into()),
        };
        record(&mut rep, &values_from(data, &bd, &ff));
        let gv = values_from(data, &bruhat_decompose(&iota(&g), &ff, false)?, &ff);
        if gv.iter().any(|v| !v.is_zero()) {
            rep.support_checked += 1;
            rep.support_violations += !in_u_iplus(&g, &ff)? as usize;
        }
    }
    Ok(rep)
}

/// W_1(p) = W_2(p) over the precision-m enumeration of P_n plus `mixed` samples.
pub fn mirabolic_agreement<R: Rng>(cfg: &PairConfig, mixed: usize, rng: &mut R) -> Result<MirabolicReport, PairError> {
    mirabolic_agreement_family(&[cfg.d1.clone(), cfg.d2.clone()], cfg.m, cfg.b, mixed, rng)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SupportReport {
    pub samples: usize,
    pub nonzero: usize,
    pub failures: usize,
}

/// g = u·w·k over random Bruhat cells: W(g) = ψ_U(u)·W(w)·χ(k), and W(g) ≠ 0
/// exactly when w lies in H′. Half the cells are drawn from H′ shapes.
pub fn support_check<R: Rng>(d: &SSCDatum, count: usize, rng: &mut R) -> Result<SupportReport, PairError> {
    let ff = d.ff();
    let n = d.n;
    let prec = 8;
    let mut rep = SupportReport::default();
    for i in 0..count {
        let w = if i % 2 == 0 {
            let j = rng.gen_range(0..n);
            let z = MatG::diag(&vec![mono(ff.random_unit(rng), rng.gen_range(-2..=2)); n]);
            let mut w = MatG::identity(n);
            for _ in 0..j {
                w = w.mul(&MatG::g_chi(n, d.u0), &ff);
            }
            w.mul(&z, &ff)
        } else {
            let mut perm: Vec<usize> = (0..n).collect();
            for a in (1..n).rev() {
                perm.swap(a, rng.gen_range(0..=a));
            }
            let mut w = MatG::zero(n);
            for (r, &c) in perm.iter().enumerate() {
                w.set(r, c, mono(ff.random_unit(rng), rng.gen_range(-2..=2)));
            }
            w
        };
        let u = MatG::random_unipotent_exact(rng, n, &ff, -2, prec);
        let k = MatG::random_iplus_exact(rng, n, &ff, prec);
        let g = u.mul(&w, &ff).mul(&k, &ff);
        let got = whittaker_eval(d, &g)?;
        let ww = whittaker_eval(d, &w)?;
        let expect = if ww.is_zero() {
            CycloNumber::zero()
        } else {
            let extra = psi_u_eval(&u, &ff)?.mul(affine_generic_eval(d, &k)?);
            ww.mul_root(extra)
        };
        rep.samples += 1;
        rep.nonzero += !got.is_zero() as usize;
        rep.failures += (got != expect) as usize;
    }
    Ok(rep)
}
