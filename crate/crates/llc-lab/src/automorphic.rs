//! Simple supercuspidal data, the affine Bruhat decomposition G = ∐ U·x·I^+,
//! the explicit Whittaker function and exact evaluation of the zeta integrals.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exact_values::{
    collapse_to_monomial, CycloNumber, EpsMonomial, EpsPolynomial, ExactError, LambdaGraded, RootOfUnity, Q,
};
use crate::local_fields::{psi_residue, FieldError, FieldTag, FiniteField, Fq, LaurentElem, TameChar};

const F: FieldTag = FieldTag::F;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AutError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("invalid datum: {0}")]
    InvalidDatum(String),
    #[error("matrix is singular at working precision")]
    Singular,
    #[error("matrix is not in I^+")]
    NotInIPlus,
    #[error("zeta integral changed between precision {m} and {next}")]
    PrecisionNotStabilized { m: u32, next: u32 },
    #[error("{count} nonzero Whittaker values outside the proven support")]
    SupportViolation { count: usize },
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// (n, q, ϖ = u0·t, ω, ζ) with ζ^n = ω(ϖ).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SSCDatum {
    pub n: usize,
    pub q: u64,
    pub u0: Fq,
    pub omega: TameChar,
    pub zeta: RootOfUnity,
}

impl SSCDatum {
    pub fn new(n: usize, q: u64, u0: Fq, omega: TameChar, zeta: RootOfUnity) -> Result<Self, AutError> {
        let ff = FiniteField::get(q)?;
        if n < 2 {
            return Err(AutError::InvalidDatum(format!("n = {n} < 2")));
        }
        if (n as u64).is_multiple_of(ff.p()) {
            return Err(FieldError::WildRamification { p: ff.p(), n: n as u64 }.into());
        }
        if u0 == 0 || u0 as u64 >= q {
            return Err(AutError::InvalidDatum(format!("uniformizer unit {u0} not in F_{q}^×")));
        }
        if omega.q != q {
            return Err(AutError::InvalidDatum("ω defined over a different field".into()));
        }
        let d = Self { n, q, u0, omega, zeta };
        if zeta.pow(n as i64) != d.omega_varpi() {
            return Err(AutError::InvalidDatum(format!("ζ = {zeta} is not an n-th root of ω(ϖ) = {}", d.omega_varpi())));
        }
        Ok(d)
    }

    pub fn ff(&self) -> Arc<FiniteField> {
        FiniteField::get(self.q).expect("validated field")
    }

    pub fn omega_varpi(&self) -> RootOfUnity {
        self.omega.at_varpi(self.u0, &self.ff())
    }

    /// ϖ as a series in t.
    pub fn varpi(&self) -> LaurentElem {
        LaurentElem::monomial(F, self.u0, 1)
    }

    /// All n-th roots of ω(ϖ).
    pub fn zeta_choices(n: usize, omega_varpi: RootOfUnity) -> Vec<RootOfUnity> {
        let base_order = omega_varpi.order() * n as u64;
        let r0 = RootOfUnity::new(omega_varpi.numerator() as i64, base_order);
        (0..n as i64).map(|k| r0.mul(RootOfUnity::new(k, n as u64))).collect()
    }
}

impl fmt::Display for SSCDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} q={} u0={} ω=(e={}, ω(t)={}) ζ={}",
            self.n, self.q, self.u0, self.omega.unit_exp, self.omega.at_t, self.zeta
        )
    }
}

/// n×n matrix over F, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatG {
    n: usize,
    a: Vec<LaurentElem>,
}

impl MatG {
    pub fn zero(n: usize) -> Self {
        Self { n, a: vec![LaurentElem::zero(F); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            m.set(i, i, LaurentElem::one(F));
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<LaurentElem>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self { n, a: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> Vec<Vec<LaurentElem>> {
        self.a.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> LaurentElem {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: LaurentElem) {
        self.a[i * self.n + j] = x;
    }

    pub fn mul(&self, o: &Self, ff: &FiniteField) -> Self {
        let n = self.n;
        let mut out = Self::zero(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.get(i, k);
                if x.is_exact_zero() {
                    continue;
                }
                for j in 0..n {
                    let y = o.get(k, j);
                    if !y.is_exact_zero() {
                        let cur = out.get(i, j);
                        out.set(i, j, cur.add(&x.mul(&y, ff), ff));
                    }
                }
            }
        }
        out
    }

    pub fn scale(&self, c: &LaurentElem, ff: &FiniteField) -> Self {
        Self { n: self.n, a: self.a.iter().map(|x| x.mul(c, ff)).collect() }
    }

    /// The generator g_χ: ones on the superdiagonal, ϖ in the corner.
    pub fn g_chi(n: usize, u0: Fq) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n - 1 {
            m.set(i, i + 1, LaurentElem::one(F));
        }
        m.set(n - 1, 0, LaurentElem::monomial(F, u0, 1));
        m
    }

    pub fn diag(entries: &[LaurentElem]) -> Self {
        let mut m = Self::zero(entries.len());
        for (i, e) in entries.iter().enumerate() {
            m.set(i, i, *e);
        }
        m
    }

    /// Agreement of every entry at the precision both sides know.
    pub fn agrees_with(&self, o: &Self) -> bool {
        self.n == o.n && self.a.iter().zip(&o.a).all(|(x, y)| x.agrees_with(y))
    }

    pub fn truncate_rel(&self, prec: usize) -> Self {
        Self {
            n: self.n,
            a: self
                .a
                .iter()
                .map(|x| if x.is_exact_zero() || x.is_zero() { *x } else { x.truncate(x.val_bound() + prec as i64) })
                .collect(),
        }
    }

    pub fn is_upper_unipotent(&self) -> bool {
        let one = LaurentElem::one(F);
        (0..self.n).all(|i| {
            (0..self.n).all(|j| {
                let x = self.get(i, j);
                match i.cmp(&j) {
                    std::cmp::Ordering::Equal => x.agrees_with(&one),
                    std::cmp::Ordering::Greater => x.is_zero(),
                    std::cmp::Ordering::Less => true,
                }
            })
        })
    }

    /// Diagonal in 1+p, above the diagonal in o, below in p.
    pub fn iplus_membership(&self, ff: &FiniteField) -> Result<bool, AutError> {
        for i in 0..self.n {
            for j in 0..self.n {
                let x = self.get(i, j);
                let ok = match i.cmp(&j) {
                    std::cmp::Ordering::Equal => {
                        let d = x.sub(&LaurentElem::one(F), ff);
                        val_at_least(&d, 1)?
                    }
                    std::cmp::Ordering::Less => val_at_least(&x, 0)?,
                    std::cmp::Ordering::Greater => val_at_least(&x, 1)?,
                };
                if !ok {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn random<R: Rng>(rng: &mut R, n: usize, ff: &FiniteField, vmin: i32, vmax: i32, prec: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                let v = rng.gen_range(vmin..=vmax);
                m.set(i, j, LaurentElem::random(rng, ff, F, v, prec));
            }
        }
        m
    }

    /// Random element of U with entries of valuation ≥ vmin.
    pub fn random_unipotent<R: Rng>(rng: &mut R, n: usize, ff: &FiniteField, vmin: i32, prec: usize) -> Self {
        let mut m = Self::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set(i, j, LaurentElem::random(rng, ff, F, vmin, prec));
            }
        }
        m
    }

    /// Random matrix of finite series (exact entries), valuations in vmin..=vmax.
    pub fn random_exact<R: Rng>(rng: &mut R, n: usize, ff: &FiniteField, vmin: i32, vmax: i32, len: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                let v = rng.gen_range(vmin..=vmax);
                m.set(i, j, random_series(rng, ff, v, len));
            }
        }
        m
    }

    pub fn random_unipotent_exact<R: Rng>(rng: &mut R, n: usize, ff: &FiniteField, vmin: i32, len: usize) -> Self {
        let mut m = Self::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set(i, j, random_series(rng, ff, vmin, len));
            }
        }
        m
    }

    pub fn random_iplus_exact<R: Rng>(rng: &mut R, n: usize, ff: &FiniteField, len: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                let x = match i.cmp(&j) {
                    std::cmp::Ordering::Equal => LaurentElem::one(F).add(&random_series(rng, ff, 1, len), ff),
                    std::cmp::Ordering::Less => random_series(rng, ff, 0, len),
                    std::cmp::Ordering::Greater => random_series(rng, ff, 1, len),
                };
                m.set(i, j, x);
            }
        }
        m
    }

    pub fn random_iplus<R: Rng>(rng: &mut R, n: usize, ff: &FiniteField, prec: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                let x = match i.cmp(&j) {
                    std::cmp::Ordering::Equal => {
                        LaurentElem::one(F).add(&LaurentElem::random(rng, ff, F, 1, prec - 1), ff)
                    }
                    std::cmp::Ordering::Less => LaurentElem::random(rng, ff, F, 0, prec),
                    std::cmp::Ordering::Greater => LaurentElem::random(rng, ff, F, 1, prec),
                };
                m.set(i, j, x);
            }
        }
        m
    }
}

/// Finite series Σ_{i<len} a_i t^{val+i} with random residues; exact.
pub fn random_series<R: Rng>(rng: &mut R, ff: &FiniteField, val: i32, len: usize) -> LaurentElem {
    let c: Vec<Fq> = (0..len).map(|_| ff.random(rng)).collect();
    LaurentElem::from_coeffs(F, val, &c, None)
}

fn val_at_least(x: &LaurentElem, k: i64) -> Result<bool, FieldError> {
    match x.valuation() {
        Some(v) => Ok(v as i64 >= k),
        None if x.abs_prec() >= k => Ok(true),
        None => Err(FieldError::InsufficientPrecision { needed: k, known: x.abs_prec() }),
    }
}

impl Serialize for MatG {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MatG {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<LaurentElem>>::deserialize(d)?;
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(serde::de::Error::custom("matrix must be square"));
        }
        Ok(MatG::from_rows(rows))
    }
}

impl fmt::Display for MatG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in self.rows() {
            let cells: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            writeln!(f, "[ {} ]", cells.join(" | "))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Affine Bruhat decomposition
// ---------------------------------------------------------------------------

/// Representative of N/T_1: row i holds units[i]·t^{vals[i]} in column perm[i].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonomialClass {
    pub perm: Vec<usize>,
    pub vals: Vec<i32>,
    pub units: Vec<Fq>,
}

/// The class as g_χ^j·c·t^v for ϖ = u0·t; `u0` is None when j = 0 (any ϖ works).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HPrimeShape {
    pub j: usize,
    pub c: Fq,
    pub v: i32,
    pub u0: Option<Fq>,
}

impl MonomialClass {
    pub fn matrix(&self) -> MatG {
        let n = self.perm.len();
        let mut m = MatG::zero(n);
        for i in 0..n {
            m.set(i, self.perm[i], LaurentElem::monomial(F, self.units[i], self.vals[i]));
        }
        m
    }

    pub fn hprime_shape(&self, ff: &FiniteField) -> Option<HPrimeShape> {
        let n = self.perm.len();
        let j = self.perm[0];
        let (c, v) = (self.units[0], self.vals[0]);
        let mut wrap: Option<Fq> = None;
        for i in 0..n {
            if self.perm[i] != (i + j) % n {
                return None;
            }
            if i + j < n {
                if self.vals[i] != v || self.units[i] != c {
                    return None;
                }
            } else {
                if self.vals[i] != v + 1 {
                    return None;
                }
                match wrap {
                    None => wrap = Some(self.units[i]),
                    Some(w) if w == self.units[i] => {}
                    Some(_) => return None,
                }
            }
        }
        Some(HPrimeShape { j, c, v, u0: wrap.map(|w| ff.div(w, c)) })
    }
}

impl fmt::Display for MonomialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (0..self.perm.len())
            .map(|i| format!("r{}→c{}:{}·t^{}", i + 1, self.perm[i] + 1, self.units[i], self.vals[i]))
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// Residue data for ψ_U(u) and χ(k): the character values are
/// ψ(psi_u), ψ(chi_sup + chi_wrap / u0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CharSums {
    pub psi_u: Fq,
    pub chi_sup: Fq,
    pub chi_wrap: Fq,
}

impl CharSums {
    /// ψ_U(u)·χ(k) for ϖ = u0·t.
    pub fn value(&self, u0: Fq, ff: &FiniteField) -> RootOfUnity {
        psi_residue(self.trace_arg(u0, ff), ff)
    }

    pub fn trace_arg(&self, u0: Fq, ff: &FiniteField) -> Fq {
        ff.add(ff.add(self.psi_u, self.chi_sup), ff.div(self.chi_wrap, u0))
    }
}

#[derive(Clone, Debug)]
pub struct Bruhat {
    pub class: MonomialClass,
    pub sums: CharSums,
    pub u: Option<MatG>,
    pub k: Option<MatG>,
}

/// g = u·w·k with u ∈ U, w monomial, k ∈ I^+; u and k are returned when `track`.
pub fn bruhat_decompose(g: &MatG, ff: &FiniteField, track: bool) -> Result<Bruhat, AutError> {
    let n = g.n;
    let mut m = g.clone();
    let mut u = track.then(|| MatG::identity(n));
    let mut k = track.then(|| MatG::identity(n));
    let mut used = vec![false; n];
    let mut class = MonomialClass { perm: vec![0; n], vals: vec![0; n], units: vec![0; n] };
    let mut sums = CharSums::default();
    let zero = LaurentElem::zero(F);

    for i in (0..n).rev() {
        let mut best: Option<(usize, i32)> = None;
        for c in 0..n {
            if used[c] {
                continue;
            }
            if let Some(v) = m.get(i, c).valuation() {
                if best.is_none_or(|(_, bv)| v < bv) {
                    best = Some((c, v));
                }
            }
        }
        let Some((l, v)) = best else {
            if (0..n).all(|c| used[c] || m.get(i, c).is_exact_zero()) {
                return Err(AutError::Singular);
            }
            let known = (0..n).filter(|&c| !used[c]).map(|c| m.get(i, c).abs_prec()).min().unwrap_or(0);
            return Err(FieldError::InsufficientPrecision { needed: known, known }.into());
        };
        for c in 0..n {
            let e = m.get(i, c);
            if used[c] || c == l || !e.is_zero() || e.is_exact_zero() {
                continue;
            }
            let bound = e.val_bound();
            if (c < l && bound <= v as i64) || (c > l && bound < v as i64) {
                return Err(FieldError::InsufficientPrecision { needed: v as i64 + 1, known: bound }.into());
            }
        }
        let piv = m.get(i, l);
        let pinv = piv.inv(ff)?;

        // Column moves: col c += α·col l, i.e. right multiplication by 1 + α E_{l,c}.
        for c in 0..n {
            if c == l || used[c] {
                continue;
            }
            let e = m.get(i, c);
            if e.is_exact_zero() {
                continue;
            }
            let alpha = e.mul(&pinv, ff).neg(ff);
            if e.is_zero() {
                m.set(i, c, zero);
                continue;
            }
            for r in 0..i {
                let y = m.get(r, l);
                if !y.is_exact_zero() {
                    let cur = m.get(r, c);
                    m.set(r, c, cur.add(&alpha.mul(&y, ff), ff));
                }
            }
            m.set(i, c, zero);
            if c == l + 1 {
                sums.chi_sup = ff.sub(sums.chi_sup, alpha.coeff_at(0)?);
            }
            if l == n - 1 && c == 0 {
                sums.chi_wrap = ff.sub(sums.chi_wrap, alpha.coeff_at(1)?);
            }
            if let Some(k) = k.as_mut() {
                // k ← (1 − α E_{l,c})·k
                for j in 0..n {
                    let y = k.get(c, j);
                    if !y.is_exact_zero() {
                        let cur = k.get(l, j);
                        k.set(l, j, cur.sub(&alpha.mul(&y, ff), ff));
                    }
                }
            }
        }

        // Row moves: row r += β·row i for r < i; row i is now the lone pivot.
        for r in 0..i {
            let e = m.get(r, l);
            if e.is_exact_zero() {
                continue;
            }
            let beta = e.mul(&pinv, ff).neg(ff);
            m.set(r, l, zero);
            if i == r + 1 {
                sums.psi_u = ff.sub(sums.psi_u, beta.coeff_at(0)?);
            }
            if let Some(u) = u.as_mut() {
                // u ← u·(1 − β E_{r,i})
                for a in 0..n {
                    let y = u.get(a, r);
                    if !y.is_exact_zero() {
                        let cur = u.get(a, i);
                        u.set(a, i, cur.sub(&beta.mul(&y, ff), ff));
                    }
                }
            }
        }

        // Scale the pivot to c·t^v by a diagonal element of 1 + p.
        let c0 = piv.leading();
        let exact = LaurentElem::monomial(F, c0, v);
        if let Some(k) = k.as_mut() {
            let d = piv.div(&exact, ff)?;
            for j in 0..n {
                let cur = k.get(l, j);
                if !cur.is_exact_zero() {
                    k.set(l, j, cur.mul(&d, ff));
                }
            }
        }
        m.set(i, l, exact);
        used[l] = true;
        class.perm[i] = l;
        class.vals[i] = v;
        class.units[i] = c0;
    }
    Ok(Bruhat { class, sums, u, k })
}

/// Class after conjugating the input by a random U on the left and I^+ on the
/// right; it must agree with the class of the input.
pub fn scrambled_class<R: Rng>(g: &MatG, ff: &FiniteField, rng: &mut R, prec: usize) -> Result<MonomialClass, AutError> {
    let n = g.n;
    let u = MatG::random_unipotent_exact(rng, n, ff, -2, prec);
    let k = MatG::random_iplus_exact(rng, n, ff, prec);
    let g2 = u.mul(g, ff).mul(&k, ff);
    Ok(bruhat_decompose(&g2, ff, false)?.class)
}

// ---------------------------------------------------------------------------
// Characters and the Whittaker function
// ---------------------------------------------------------------------------

/// χ(k) = ψ(k_{12} + … + k_{n−1,n} + k_{n1}/ϖ) for k ∈ I^+.
pub fn affine_generic_eval(d: &SSCDatum, k: &MatG) -> Result<RootOfUnity, AutError> {
    let ff = d.ff();
    if !k.iplus_membership(&ff)? {
        return Err(AutError::NotInIPlus);
    }
    let n = d.n;
    let mut s = 0;
    for i in 0..n - 1 {
        s = ff.add(s, k.get(i, i + 1).coeff_at(0)?);
    }
    s = ff.add(s, ff.div(k.get(n - 1, 0).coeff_at(1)?, d.u0));
    Ok(psi_residue(s, &ff))
}

/// ψ_U(u) = ψ(u_{12} + … + u_{n−1,n}).
pub fn psi_u_eval(u: &MatG, ff: &FiniteField) -> Result<RootOfUnity, AutError> {
    let mut s = 0;
    for i in 0..u.n - 1 {
        s = ff.add(s, u.get(i, i + 1).coeff_at(0)?);
    }
    Ok(psi_residue(s, ff))
}

#[derive(Clone, Debug)]
pub struct Located {
    pub j: usize,
    pub z: LaurentElem,
    pub bruhat: Bruhat,
}

/// g = u·g_χ^j·z·k with j ∈ {0..n−1}, or None when g ∉ U·H′.
pub fn uhprime_locate(d: &SSCDatum, g: &MatG, track: bool) -> Result<Option<Located>, AutError> {
    let ff = d.ff();
    let b = bruhat_decompose(g, &ff, track)?;
    Ok(match b.class.hprime_shape(&ff) {
        Some(s) if s.u0.is_none_or(|u| u == d.u0) => {
            Some(Located { j: s.j, z: LaurentElem::monomial(F, s.c, s.v), bruhat: b })
        }
        _ => None,
    })
}

/// ψ_U(u)·ζ^j·ω(z)·χ(k) for a located shape.
pub fn whittaker_from_parts(d: &SSCDatum, shape: &HPrimeShape, sums: &CharSums, ff: &FiniteField) -> RootOfUnity {
    d.zeta
        .pow(shape.j as i64)
        .mul(d.omega.at_t.pow(shape.v as i64))
        .mul(d.omega.on_residue(shape.c, ff))
        .mul(sums.value(d.u0, ff))
}

pub fn whittaker_eval(d: &SSCDatum, g: &MatG) -> Result<CycloNumber, AutError> {
    let ff = d.ff();
    let b = bruhat_decompose(g, &ff, false)?;
    Ok(match b.class.hprime_shape(&ff) {
        Some(s) if s.u0.is_none_or(|u| u == d.u0) => CycloNumber::root(whittaker_from_parts(d, &s, &b.sums, &ff)),
        _ => CycloNumber::zero(),
    })
}

/// The matrix Y(x_1, …, x_{n−2}; h) of the Ψ̃ integrand.
pub fn y_matrix(x: &[LaurentElem], h: &LaurentElem, ff: &FiniteField, prec: usize) -> Result<MatG, AutError> {
    let n = x.len() + 2;
    let mut m = MatG::zero(n);
    for i in 0..n - 1 {
        m.set(i, i + 1, LaurentElem::one(F));
    }
    let hinv = h.inv(ff)?;
    let hinv = hinv.truncate(hinv.val_bound() + prec as i64);
    m.set(n - 1, 0, hinv);
    for c in 2..n {
        let xi = x[n - 1 - c];
        m.set(n - 1, c, xi.mul(&hinv, ff).neg(ff));
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Zeta integrals
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XLattice {
    /// x_i over p^{−B}/p^m.
    Full,
    /// x_i over p^{−B}/o, using invariance of the integrand under x ↦ x + o.
    Folded,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ZetaOptions {
    pub m: u32,
    pub b: u32,
    pub x_lattice: XLattice,
    /// h over o^×/(1+p) instead of o^×/(1+p^m).
    pub h_fold: bool,
    pub work_prec: usize,
    /// Multiplier on the multiplicative measure (1 means vol(1+p) = q^{−1}).
    pub measure_scale: Q,
}

impl Default for ZetaOptions {
    fn default() -> Self {
        Self { m: 2, b: 1, x_lattice: XLattice::Folded, h_fold: false, work_prec: 12, measure_scale: Q::one() }
    }
}

impl ZetaOptions {
    fn h_depth(&self) -> u32 {
        if self.h_fold {
            1
        } else {
            self.m
        }
    }

    fn x_exponent(&self) -> Q {
        match self.x_lattice {
            XLattice::Full => Q::new(1, 2) - Q::from_integer(self.m as i128),
            XLattice::Folded => Q::new(1, 2),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct HCell {
    v: i32,
    a: LaurentElem,
}

#[derive(Clone, Copy, Debug)]
struct CellRecord {
    h_idx: u32,
    x_in_o: bool,
    shape: HPrimeShape,
    sums: CharSums,
}

/// Bruhat data for every (x, h) cell of the Ψ̃ integrand, for one (n, q, options).
/// Nothing here depends on ϖ, so the records serve every uniformizer class.
pub struct ZetaEngine {
    pub n: usize,
    pub ff: Arc<FiniteField>,
    pub opts: ZetaOptions,
    h_cells: Vec<HCell>,
    records: Vec<CellRecord>,
    diag_records: Vec<Option<(HPrimeShape, CharSums)>>,
    pub cells_scanned: usize,
}

fn x_reps(ff: &FiniteField, b: u32, top: i32) -> Vec<LaurentElem> {
    let lo = -(b as i32);
    let len = (top - lo) as usize;
    let q = ff.q() as usize;
    let total = q.pow(len as u32);
    (0..total)
        .map(|mut idx| {
            let mut digits = vec![0u8; len];
            for d in digits.iter_mut() {
                *d = (idx % q) as Fq;
                idx /= q;
            }
            LaurentElem::from_coeffs(F, lo, &digits, None)
        })
        .collect()
}

impl ZetaEngine {
    pub fn build(n: usize, q: u64, opts: ZetaOptions) -> Result<Self, AutError> {
        let ff = FiniteField::get(q)?;
        let b = opts.b as i32;
        let mut h_cells = vec![];
        for v in -b..=b {
            for a in crate::local_fields::unit_reps(&ff, F, opts.h_depth() as usize) {
                h_cells.push(HCell { v, a });
            }
        }
        let top = match opts.x_lattice {
            XLattice::Full => opts.m as i32,
            XLattice::Folded => 0,
        };
        let xs = x_reps(&ff, opts.b, top);
        let nx = n - 2;
        let x_count = xs.len().pow(nx as u32);
        let mut records = vec![];
        let mut scanned = 0;
        let mut idx = vec![0usize; nx];
        let mut xvec = vec![LaurentElem::zero(F); nx];
        for (hi, cell) in h_cells.iter().enumerate() {
            let h = cell.a.shift(cell.v);
            for flat in 0..x_count {
                let mut r = flat;
                for slot in idx.iter_mut() {
                    *slot = r % xs.len();
                    r /= xs.len();
                }
                for (s, &i) in xvec.iter_mut().zip(&idx) {
                    *s = xs[i];
                }
                let y = y_matrix(&xvec, &h, &ff, opts.work_prec)?;
                scanned += 1;
                let bd = bruhat_decompose(&y, &ff, false)?;
                if let Some(shape) = bd.class.hprime_shape(&ff) {
                    let x_in_o = xvec.iter().all(|x| x.is_zero() || x.valuation().unwrap() >= 0);
                    records.push(CellRecord { h_idx: hi as u32, x_in_o, shape, sums: bd.sums });
                }
            }
        }
        let mut diag_records = vec![];
        for cell in &h_cells {
            let mut entries = vec![LaurentElem::one(F); n];
            entries[0] = cell.a.shift(cell.v);
            let bd = bruhat_decompose(&MatG::diag(&entries), &ff, false)?;
            diag_records.push(bd.class.hprime_shape(&ff).map(|s| (s, bd.sums)));
        }
        Ok(Self { n, ff, opts, h_cells, records, diag_records, cells_scanned: scanned })
    }

    /// Shared engine per (n, q, options).
    pub fn cached(n: usize, q: u64, opts: &ZetaOptions) -> Result<Arc<Self>, AutError> {
        type Key = (usize, u64, ZetaOptions);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<ZetaEngine>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (n, q, opts.clone());
        if let Some(e) = cache.lock().unwrap().get(&key) {
            return Ok(e.clone());
        }
        let e = Arc::new(Self::build(n, q, opts.clone())?);
        cache.lock().unwrap().insert(key, e.clone());
        Ok(e)
    }

    /// Collects the cells lying in U·H′ for ϖ = u0·t.
    pub fn for_u0(&self, u0: Fq) -> UniformizerAggregate<'_> {
        let ff = &*self.ff;
        let p = ff.p() as usize;
        let u0inv = ff.inv(u0);
        let mut groups: HashMap<(u32, usize, Fq, i32), Vec<u64>> = HashMap::new();
        let mut violations = 0;
        for r in &self.records {
            if r.shape.u0.is_some_and(|w| w != u0) {
                continue;
            }
            let cell = &self.h_cells[r.h_idx as usize];
            let in_support = r.x_in_o && cell.v == -1 && cell.a.leading() == u0inv;
            if !in_support {
                violations += 1;
            }
            let b = ff.trace(r.sums.trace_arg(u0, ff)) as usize;
            let slot = groups
                .entry((r.h_idx, r.shape.j, r.shape.c, r.shape.v))
                .or_insert_with(|| vec![0; p]);
            slot[b] += 1;
        }
        UniformizerAggregate { engine: self, u0, groups, violations }
    }
}

/// The Ψ̃ and Ψ integrands summed per cell for one uniformizer class.
pub struct UniformizerAggregate<'a> {
    engine: &'a ZetaEngine,
    pub u0: Fq,
    groups: HashMap<(u32, usize, Fq, i32), Vec<u64>>,
    pub violations: usize,
}

impl UniformizerAggregate<'_> {
    fn h_weight_exp(&self) -> i128 {
        -(self.engine.opts.h_depth() as i128)
    }

    /// Ψ̃(1−s) for the twist λ, as a polynomial in q^{−s}.
    pub fn psi_tilde(&self, d: &SSCDatum, lambda: &TameChar) -> Result<EpsPolynomial, AutError> {
        let e = self.engine;
        let ff = &*e.ff;
        let n = e.n as i128;
        let p = ff.p();
        let mut per_shell: HashMap<i32, Vec<(RootOfUnity, Vec<i128>)>> = HashMap::new();
        for (&(hi, j, c, v), counts) in &self.groups {
            let cell = &e.h_cells[hi as usize];
            let h = cell.a.shift(cell.v);
            let base = d
                .zeta
                .pow(j as i64)
                .mul(d.omega.at_t.pow(v as i64))
                .mul(d.omega.on_residue(c, ff))
                .mul(lambda.eval(&h, ff)?.inv());
            per_shell
                .entry(cell.v)
                .or_default()
                .push((base, counts.iter().map(|&x| x as i128).collect()));
        }
        let mut poly = EpsPolynomial::new(ff.q());
        let x_exp = e.opts.x_exponent() * Q::from_integer(n - 2);
        for (v, list) in per_shell {
            let coeff = CycloNumber::sum_with_psi_buckets(list.iter().map(|(r, c)| (*r, &c[..])), p)
                .scale(e.opts.measure_scale);
            let v = v as i128;
            let c_exp = Q::from_integer(-v) * (Q::one() - Q::new(n - 1, 2)) + Q::from_integer(self.h_weight_exp()) + x_exp;
            poly.add_term(-(v as i64), LambdaGraded::from_cyclo(coeff), c_exp)?;
        }
        Ok(poly)
    }

    /// Ψ(s) for the twist λ.
    pub fn psi(&self, d: &SSCDatum, lambda: &TameChar) -> Result<EpsPolynomial, AutError> {
        let e = self.engine;
        let ff = &*e.ff;
        let n = e.n as i128;
        let mut per_shell: HashMap<i32, Vec<RootOfUnity>> = HashMap::new();
        for (cell, rec) in e.h_cells.iter().zip(&e.diag_records) {
            let Some((shape, sums)) = rec else { continue };
            if shape.u0.is_some_and(|w| w != self.u0) {
                continue;
            }
            let h = cell.a.shift(cell.v);
            let w = whittaker_from_parts(d, shape, sums, ff);
            per_shell.entry(cell.v).or_default().push(w.mul(lambda.eval(&h, ff)?));
        }
        let mut poly = EpsPolynomial::new(ff.q());
        for (v, list) in per_shell {
            let coeff = CycloNumber::sum_of_roots(list.iter().map(|r| (r, 1))).scale(e.opts.measure_scale);
            let v = v as i128;
            let c_exp = Q::from_integer(v) * Q::new(n - 1, 2) + Q::from_integer(self.h_weight_exp());
            poly.add_term(v as i64, LambdaGraded::from_cyclo(coeff), c_exp)?;
        }
        Ok(poly)
    }

    /// γ = λ(−1)^{n−1}·Ψ̃/Ψ, collapsed to a monomial.
    pub fn gamma(&self, d: &SSCDatum, lambda: &TameChar) -> Result<EpsMonomial, AutError> {
        let num = collapse_to_monomial(&self.psi_tilde(d, lambda)?)?;
        let den = collapse_to_monomial(&self.psi(d, lambda)?)?;
        let sign = lambda.at_minus_one().pow(d.n as i64 - 1);
        Ok(num.div(&den)?.scale_unit(&LambdaGraded::from_cyclo(CycloNumber::root(sign))))
    }
}

/// Ψ̃ at the given options, checked against precision m+1.
pub fn zeta_psi_tilde(d: &SSCDatum, lambda: &TameChar, opts: &ZetaOptions) -> Result<EpsPolynomial, AutError> {
    stabilized(d, opts, |agg| agg.psi_tilde(d, lambda))
}

/// Ψ at the given options, checked against precision m+1.
pub fn zeta_psi(d: &SSCDatum, lambda: &TameChar, opts: &ZetaOptions) -> Result<EpsPolynomial, AutError> {
    stabilized(d, opts, |agg| agg.psi(d, lambda))
}

fn poly_eq(a: &EpsPolynomial, b: &EpsPolynomial) -> bool {
    let mut x = a.clone();
    if x.merge(&b.scale(-Q::one())).is_err() {
        return false;
    }
    let empty = x.terms().next().is_none();
    empty
}

fn stabilized<Fn_>(d: &SSCDatum, opts: &ZetaOptions, f: Fn_) -> Result<EpsPolynomial, AutError>
where
    Fn_: Fn(&UniformizerAggregate<'_>) -> Result<EpsPolynomial, AutError>,
{
    let e1 = ZetaEngine::cached(d.n, d.q, opts)?;
    let a1 = e1.for_u0(d.u0);
    if a1.violations > 0 {
        return Err(AutError::SupportViolation { count: a1.violations });
    }
    let v1 = f(&a1)?;
    if opts.h_fold && opts.x_lattice == XLattice::Folded {
        return Ok(v1);
    }
    let next = ZetaOptions { m: opts.m + 1, ..opts.clone() };
    let e2 = ZetaEngine::cached(d.n, d.q, &next)?;
    let v2 = f(&e2.for_u0(d.u0))?;
    if !poly_eq(&v1, &v2) {
        return Err(AutError::PrecisionNotStabilized { m: opts.m, next: next.m });
    }
    Ok(v1)
}

/// γ(s, π_ζ × λ, ψ) from the integrals (equal to ε since L ≡ 1).
pub fn gamma_automorphic(d: &SSCDatum, lambda: &TameChar, opts: &ZetaOptions) -> Result<EpsMonomial, AutError> {
    let num = collapse_to_monomial(&zeta_psi_tilde(d, lambda, opts)?)?;
    let den = collapse_to_monomial(&zeta_psi(d, lambda, opts)?)?;
    let sign = lambda.at_minus_one().pow(d.n as i64 - 1);
    Ok(num.div(&den)?.scale_unit(&LambdaGraded::from_cyclo(CycloNumber::root(sign))))
}

/// λ(−1)^{n−1}·λ(ϖ)·ζ·q^{1/2−s}.
pub fn closed_form_epsilon(d: &SSCDatum, lambda: &TameChar) -> EpsMonomial {
    let ff = d.ff();
    let unit = lambda
        .at_minus_one()
        .pow(d.n as i64 - 1)
        .mul(lambda.at_varpi(d.u0, &ff))
        .mul(d.zeta);
    EpsMonomial::new(d.q, LambdaGraded::from_cyclo(CycloNumber::root(unit)), Q::new(1, 2), -1)
}

/// Ψ̃ coefficient expected from the closed form: λ(ϖ)·ζ·q^{−1/2−s}.
pub fn expected_psi_tilde(d: &SSCDatum, lambda: &TameChar) -> EpsMonomial {
    let ff = d.ff();
    let unit = lambda.at_varpi(d.u0, &ff).mul(d.zeta);
    EpsMonomial::new(d.q, LambdaGraded::from_cyclo(CycloNumber::root(unit)), Q::new(-1, 2), -1)
}

pub fn expected_psi(q: u64) -> EpsMonomial {
    EpsMonomial::new(q, LambdaGraded::one(), -Q::one(), 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn datum(n: usize, q: u64, u0: Fq) -> SSCDatum {
        SSCDatum::new(n, q, u0, TameChar::trivial(q), RootOfUnity::one()).unwrap()
    }

    #[test]
    fn datum_validation() {
        assert!(SSCDatum::new(3, 3, 1, TameChar::trivial(3), RootOfUnity::one()).is_err());
        assert!(SSCDatum::new(2, 5, 1, TameChar::trivial(5), RootOfUnity::new(1, 3)).is_err());
        assert!(SSCDatum::new(2, 5, 1, TameChar::trivial(5), RootOfUnity::minus_one()).is_ok());
        let choices = SSCDatum::zeta_choices(3, RootOfUnity::new(1, 2));
        assert_eq!(choices.len(), 3);
        assert!(choices.iter().all(|z| z.pow(3) == RootOfUnity::minus_one()));
    }

    #[test]
    fn iplus_examples() {
        let ff = FiniteField::get(5).unwrap();
        assert!(MatG::identity(3).iplus_membership(&ff).unwrap());
        assert!(!MatG::g_chi(3, 1).iplus_membership(&ff).unwrap());
        let mut d = MatG::identity(3);
        d.set(0, 0, LaurentElem::from_coeffs(F, 0, &[1, 1], None));
        assert!(d.iplus_membership(&ff).unwrap());
    }

    #[test]
    fn affine_generic_examples() {
        let d = datum(3, 5, 2);
        let id = MatG::identity(3);
        assert_eq!(affine_generic_eval(&d, &id).unwrap(), RootOfUnity::one());
        let mut k = id.clone();
        k.set(0, 1, LaurentElem::one(F));
        assert_eq!(affine_generic_eval(&d, &k).unwrap(), RootOfUnity::new(1, 5));
        let mut k = id.clone();
        k.set(2, 0, d.varpi());
        assert_eq!(affine_generic_eval(&d, &k).unwrap(), RootOfUnity::new(1, 5));
    }

    #[test]
    fn bruhat_trivial_cases() {
        let ff = FiniteField::get(5).unwrap();
        let b = bruhat_decompose(&MatG::identity(3), &ff, true).unwrap();
        assert_eq!(b.class.perm, vec![0, 1, 2]);
        assert!(b.u.unwrap().agrees_with(&MatG::identity(3)));
        let g = MatG::g_chi(3, 2);
        let b = bruhat_decompose(&g, &ff, true).unwrap();
        assert!(b.class.matrix().agrees_with(&g));
        let s = b.class.hprime_shape(&ff).unwrap();
        assert_eq!((s.j, s.c, s.v, s.u0), (1, 1, 0, Some(2)));
    }

    #[test]
    fn bruhat_reconstructs() {
        let ff = FiniteField::get(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut done = 0;
        while done < 60 {
            let n = 2 + done % 3;
            let g = MatG::random(&mut rng, n, &ff, -2, 2, 8);
            let Ok(b) = bruhat_decompose(&g, &ff, true) else { continue };
            let (u, k) = (b.u.unwrap(), b.k.unwrap());
            assert!(u.is_upper_unipotent());
            assert!(k.iplus_membership(&ff).unwrap());
            let back = u.mul(&b.class.matrix(), &ff).mul(&k, &ff);
            assert!(back.agrees_with(&g), "n={n}\n{g}\n{back}");
            done += 1;
        }
    }

    #[test]
    fn tracked_characters_match_sums() {
        let ff = FiniteField::get(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = datum(3, 7, 3);
        let mut done = 0;
        while done < 40 {
            let g = MatG::random(&mut rng, 3, &ff, -1, 2, 8);
            let Ok(b) = bruhat_decompose(&g, &ff, true) else { continue };
            let u = b.u.unwrap();
            let k = b.k.unwrap();
            let direct = psi_u_eval(&u, &ff).unwrap().mul(affine_generic_eval(&d, &k).unwrap());
            assert_eq!(direct, b.sums.value(d.u0, &ff));
            done += 1;
        }
    }

    #[test]
    fn whittaker_examples() {
        let om = TameChar::new(7, 2, RootOfUnity::one());
        let ov = om.at_varpi(3, &FiniteField::get(7).unwrap());
        let d = SSCDatum::new(3, 7, 3, om, SSCDatum::zeta_choices(3, ov)[1]).unwrap();
        assert_eq!(whittaker_eval(&d, &MatG::identity(3)).unwrap(), CycloNumber::one());
        let g = MatG::g_chi(3, d.u0);
        assert_eq!(whittaker_eval(&d, &g).unwrap(), CycloNumber::root(d.zeta));
        let ff = d.ff();
        let g3 = g.mul(&g, &ff).mul(&g, &ff);
        assert_eq!(whittaker_eval(&d, &g3).unwrap(), CycloNumber::root(d.omega_varpi()));
    }

    #[test]
    fn y_prime_is_g_chi_class() {
        let d = datum(4, 5, 3);
        let ff = d.ff();
        let h = d.varpi().inv(&ff).unwrap();
        let zero = LaurentElem::zero(F);
        let y = y_matrix(&[zero, zero], &h, &ff, 12).unwrap();
        let loc = uhprime_locate(&d, &y, true).unwrap().unwrap();
        assert_eq!(loc.j, 1);
        assert_eq!(whittaker_eval(&d, &y).unwrap(), CycloNumber::root(d.zeta));
        let x_bad = LaurentElem::monomial(F, 1, -1);
        let y = y_matrix(&[x_bad, zero], &h, &ff, 12).unwrap();
        assert!(uhprime_locate(&d, &y, false).unwrap().is_none());
    }

    #[test]
    fn zeta_closed_forms_small() {
        for (n, q) in [(2, 3), (2, 5), (3, 5)] {
            let ff = FiniteField::get(q).unwrap();
            for u0 in ff.units() {
                let d = datum(n, q, u0);
                let lam = TameChar::new(q, 1, RootOfUnity::new(1, 2));
                let opts = ZetaOptions::default();
                let g = gamma_automorphic(&d, &lam, &opts).unwrap();
                assert_eq!(g, closed_form_epsilon(&d, &lam), "n={n} q={q} u0={u0}");
                let pt = collapse_to_monomial(&zeta_psi_tilde(&d, &lam, &opts).unwrap()).unwrap();
                assert_eq!(pt, expected_psi_tilde(&d, &lam));
                let p = collapse_to_monomial(&zeta_psi(&d, &lam, &opts).unwrap()).unwrap();
                assert_eq!(p, expected_psi(q));
            }
        }
    }
}
