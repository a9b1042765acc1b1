//! Finite fields, truncated Laurent series for F = F_q((t)) and its totally
//! ramified extension E, and the characters living on them.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exact_values::{CycloNumber, LambdaGraded, RootOfUnity};

/// Element of F_q, encoded as the base-p digit integer of its coordinates.
pub type Fq = u8;

/// Relative precision cap; an element stored at this length counts as exact.
pub const MAX_PREC: usize = 24;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("insufficient precision: coefficient {needed} requested, known below {known}")]
    InsufficientPrecision { needed: i64, known: i64 },
    #[error("zero input")]
    ZeroInput,
    #[error("{0} is not an odd prime power below 256")]
    BadFieldSize(u64),
    #[error("p = {p} divides n = {n}")]
    WildRamification { p: u64, n: u64 },
}

// ---------------------------------------------------------------------------
// Finite fields
// ---------------------------------------------------------------------------

pub struct FiniteField {
    p: u8,
    f: u8,
    q: usize,
    modulus: Vec<u8>,
    add: Vec<u8>,
    mul: Vec<u8>,
    neg: Vec<u8>,
    inv: Vec<u8>,
    exp: Vec<u8>,
    log: Vec<u32>,
    trace: Vec<u8>,
}

impl fmt::Debug for FiniteField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{} (modulus {:?})", self.q, self.modulus)
    }
}

fn prime_power(q: u64) -> Option<(u64, u32)> {
    if q < 2 {
        return None;
    }
    let p = (2..=q).find(|d| q.is_multiple_of(*d))?;
    let mut r = q;
    let mut f = 0;
    while r.is_multiple_of(p) {
        r /= p;
        f += 1;
    }
    (r == 1).then_some((p, f))
}

fn digits(mut x: usize, p: usize, f: usize) -> Vec<usize> {
    let mut d = vec![0; f];
    for slot in d.iter_mut() {
        *slot = x % p;
        x /= p;
    }
    d
}

fn undigits(d: &[usize], p: usize) -> usize {
    d.iter().rev().fold(0, |acc, &x| acc * p + x)
}

/// x·v in F_p[x]/(m), m monic with low coefficients `m_low`.
fn times_x(v: &[usize], m_low: &[usize], p: usize) -> Vec<usize> {
    let f = v.len();
    let top = v[f - 1];
    let mut out = vec![0; f];
    for i in (1..f).rev() {
        out[i] = v[i - 1];
    }
    for i in 0..f {
        out[i] = (out[i] + p * p - top * m_low[i] % p) % p;
    }
    out
}

impl FiniteField {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        let (p, f) = prime_power(q).ok_or(FieldError::BadFieldSize(q))?;
        if p == 2 || q > 255 {
            return Err(FieldError::BadFieldSize(q));
        }
        let (p, f, qs) = (p as usize, f as usize, q as usize);
        let mut exp = vec![0u8; qs - 1];
        let mut modulus = vec![];
        if f == 1 {
            let g = (2..p)
                .find(|&g| {
                    let mut x = 1;
                    (1..p - 1).all(|_| {
                        x = x * g % p;
                        x != 1
                    })
                })
                .unwrap_or(1);
            let mut x = 1;
            for slot in exp.iter_mut() {
                *slot = x as u8;
                x = x * g % p;
            }
            modulus = vec![((p - g) % p) as u8, 1];
        } else {
            for low in 0..qs {
                let m_low = digits(low, p, f);
                if m_low[0] == 0 {
                    continue;
                }
                let mut v = vec![0; f];
                v[0] = 1;
                let mut pw = vec![0usize; qs - 1];
                let mut ok = true;
                for (k, slot) in pw.iter_mut().enumerate() {
                    let code = undigits(&v, p);
                    if k > 0 && code == 1 {
                        ok = false;
                        break;
                    }
                    *slot = code;
                    v = times_x(&v, &m_low, p);
                }
                if ok && undigits(&v, p) == 1 {
                    for (slot, c) in exp.iter_mut().zip(pw) {
                        *slot = c as u8;
                    }
                    modulus = m_low.iter().map(|&c| c as u8).chain([1]).collect();
                    break;
                }
            }
            assert!(!modulus.is_empty(), "no primitive modulus found for q = {q}");
        }
        let mut log = vec![u32::MAX; qs];
        for (k, &e) in exp.iter().enumerate() {
            log[e as usize] = k as u32;
        }
        let mut add = vec![0u8; qs * qs];
        let mut mul = vec![0u8; qs * qs];
        for a in 0..qs {
            let da = digits(a, p, f);
            for b in 0..qs {
                let db = digits(b, p, f);
                let s: Vec<usize> = da.iter().zip(&db).map(|(x, y)| (x + y) % p).collect();
                add[a * qs + b] = undigits(&s, p) as u8;
                mul[a * qs + b] = if a == 0 || b == 0 {
                    0
                } else {
                    exp[(log[a] as usize + log[b] as usize) % (qs - 1)]
                };
            }
        }
        let neg: Vec<u8> = (0..qs)
            .map(|a| undigits(&digits(a, p, f).iter().map(|x| (p - x) % p).collect::<Vec<_>>(), p) as u8)
            .collect();
        let inv: Vec<u8> = (0..qs)
            .map(|a| if a == 0 { 0 } else { exp[(qs - 1 - log[a] as usize) % (qs - 1)] })
            .collect();
        let mut ff = Self { p: p as u8, f: f as u8, q: qs, modulus, add, mul, neg, inv, exp, log, trace: vec![] };
        ff.trace = (0..qs)
            .map(|a| {
                let mut acc = 0u8;
                let mut y = a as u8;
                for _ in 0..f {
                    acc = ff.add(acc, y);
                    y = ff.pow(y, p as i64);
                }
                debug_assert!((acc as usize) < p);
                acc
            })
            .collect();
        Ok(ff)
    }

    /// Shared instance for `q`.
    pub fn get(q: u64) -> Result<Arc<Self>, FieldError> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<FiniteField>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(ff) = cache.lock().unwrap().get(&q) {
            return Ok(ff.clone());
        }
        let ff = Arc::new(Self::new(q)?);
        cache.lock().unwrap().insert(q, ff.clone());
        Ok(ff)
    }

    pub fn p(&self) -> u64 {
        self.p as u64
    }
    pub fn f(&self) -> u32 {
        self.f as u32
    }
    pub fn q(&self) -> u64 {
        self.q as u64
    }
    pub fn modulus(&self) -> &[u8] {
        &self.modulus
    }

    #[inline]
    pub fn add(&self, a: Fq, b: Fq) -> Fq {
        self.add[a as usize * self.q + b as usize]
    }
    #[inline]
    pub fn sub(&self, a: Fq, b: Fq) -> Fq {
        self.add(a, self.neg[b as usize])
    }
    #[inline]
    pub fn mul(&self, a: Fq, b: Fq) -> Fq {
        self.mul[a as usize * self.q + b as usize]
    }
    #[inline]
    pub fn neg(&self, a: Fq) -> Fq {
        self.neg[a as usize]
    }
    /// Inverse; 0 maps to 0.
    #[inline]
    pub fn inv(&self, a: Fq) -> Fq {
        self.inv[a as usize]
    }
    pub fn div(&self, a: Fq, b: Fq) -> Fq {
        assert!(b != 0, "division by zero in F_{}", self.q);
        self.mul(a, self.inv(b))
    }

    pub fn pow(&self, a: Fq, k: i64) -> Fq {
        if a == 0 {
            return if k == 0 { 1 } else { 0 };
        }
        let e = (self.log[a as usize] as i64 * k).rem_euclid(self.q as i64 - 1);
        self.exp[e as usize]
    }

    /// The fixed multiplicative generator.
    pub fn generator(&self) -> Fq {
        if self.q == 2 {
            1
        } else {
            self.exp[1]
        }
    }

    /// Discrete log to the fixed generator.
    pub fn log(&self, a: Fq) -> Option<u64> {
        (a != 0).then(|| self.log[a as usize] as u64)
    }

    pub fn exp(&self, k: i64) -> Fq {
        self.exp[k.rem_euclid(self.q as i64 - 1) as usize]
    }

    /// Absolute trace to F_p, returned as an integer in [0, p).
    pub fn trace(&self, a: Fq) -> u64 {
        self.trace[a as usize] as u64
    }

    /// Quadratic character: 1, −1, or 0 at zero.
    pub fn legendre(&self, a: Fq) -> i8 {
        match self.log(a) {
            None => 0,
            Some(l) if l % 2 == 0 => 1,
            Some(_) => -1,
        }
    }

    pub fn from_int(&self, k: i64) -> Fq {
        k.rem_euclid(self.p as i64) as Fq
    }

    pub fn elements(&self) -> impl Iterator<Item = Fq> {
        (0..self.q).map(|x| x as Fq)
    }

    pub fn units(&self) -> impl Iterator<Item = Fq> {
        (1..self.q).map(|x| x as Fq)
    }

    pub fn random_unit<R: Rng>(&self, rng: &mut R) -> Fq {
        rng.gen_range(1..self.q) as Fq
    }

    pub fn random<R: Rng>(&self, rng: &mut R) -> Fq {
        rng.gen_range(0..self.q) as Fq
    }
}

// ---------------------------------------------------------------------------
// Laurent series
// ---------------------------------------------------------------------------

/// Which field an element lives in. `E { n, u0 }` is F((ϖ_E)) with ϖ_E^n = u0·t.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldTag {
    F,
    E { n: u8, u0: Fq },
}

/// Σ_{i<len} c[i]·T^{val+i} + O(T^{val+len}), T the field's uniformizer.
/// A zero with `len = 0` is known modulo T^{val}; `val = i32::MAX` is an exact zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LaurentElem {
    tag: FieldTag,
    val: i32,
    len: u8,
    c: [Fq; MAX_PREC],
}

impl LaurentElem {
    pub fn zero(tag: FieldTag) -> Self {
        Self { tag, val: i32::MAX, len: 0, c: [0; MAX_PREC] }
    }

    /// Zero known only modulo T^{abs}.
    pub fn zero_mod(tag: FieldTag, abs: i64) -> Self {
        let val = abs.clamp(i32::MIN as i64 / 2, i32::MAX as i64 - 1) as i32;
        Self { tag, val, len: 0, c: [0; MAX_PREC] }
    }

    /// Exact element c·T^v.
    pub fn monomial(tag: FieldTag, c: Fq, v: i32) -> Self {
        if c == 0 {
            return Self::zero(tag);
        }
        let mut a = [0; MAX_PREC];
        a[0] = c;
        Self { tag, val: v, len: MAX_PREC as u8, c: a }
    }

    pub fn one(tag: FieldTag) -> Self {
        Self::monomial(tag, 1, 0)
    }

    pub fn uniformizer(tag: FieldTag) -> Self {
        Self::monomial(tag, 1, 1)
    }

    /// Σ coeffs[i]·T^{val+i}, exact when `prec` is None, otherwise known modulo T^{val+prec}.
    pub fn from_coeffs(tag: FieldTag, val: i32, coeffs: &[Fq], prec: Option<usize>) -> Self {
        let len = prec.unwrap_or(MAX_PREC).min(MAX_PREC);
        let mut c = [0; MAX_PREC];
        for (i, &x) in coeffs.iter().take(len).enumerate() {
            c[i] = x;
        }
        Self::normalized(tag, val as i64, len, c, prec.is_none())
    }

    fn normalized(tag: FieldTag, lo: i64, len: usize, c: [Fq; MAX_PREC], exact_if_zero: bool) -> Self {
        match c[..len].iter().position(|&x| x != 0) {
            None if exact_if_zero || len >= MAX_PREC => Self::zero(tag),
            None => Self::zero_mod(tag, lo + len as i64),
            Some(0) => Self { tag, val: lo as i32, len: len as u8, c },
            Some(i) => {
                let mut d = [0; MAX_PREC];
                d[..len - i].copy_from_slice(&c[i..len]);
                Self { tag, val: (lo + i as i64) as i32, len: (len - i) as u8, c: d }
            }
        }
    }

    pub fn tag(&self) -> FieldTag {
        self.tag
    }

    pub fn is_exact_zero(&self) -> bool {
        self.val == i32::MAX
    }

    /// Zero at the known precision.
    pub fn is_zero(&self) -> bool {
        self.len == 0
    }

    pub fn valuation(&self) -> Option<i32> {
        (self.len > 0).then_some(self.val)
    }

    /// Lower bound on the valuation (the known-zero bound for zeros).
    pub fn val_bound(&self) -> i64 {
        self.val as i64
    }

    pub fn rel_prec(&self) -> usize {
        self.len as usize
    }

    /// Exponent below which all coefficients are known.
    pub fn abs_prec(&self) -> i64 {
        if self.is_exact_zero() {
            i64::MAX
        } else {
            self.val as i64 + self.len as i64
        }
    }

    /// Leading coefficient (0 for zero).
    pub fn leading(&self) -> Fq {
        if self.len == 0 {
            0
        } else {
            self.c[0]
        }
    }

    pub fn coeffs(&self) -> &[Fq] {
        &self.c[..self.len as usize]
    }

    pub fn coeff_at(&self, k: i64) -> Result<Fq, FieldError> {
        if k >= self.abs_prec() {
            return Err(FieldError::InsufficientPrecision { needed: k, known: self.abs_prec() });
        }
        Ok(self.get(k))
    }

    #[inline]
    fn get(&self, k: i64) -> Fq {
        let i = k - self.val as i64;
        if i < 0 || i >= self.len as i64 {
            0
        } else {
            self.c[i as usize]
        }
    }

    /// Forgets everything from T^{abs} on.
    pub fn truncate(&self, abs: i64) -> Self {
        if abs >= self.abs_prec() {
            return *self;
        }
        if abs <= self.val as i64 {
            return Self::zero_mod(self.tag, abs);
        }
        let len = (abs - self.val as i64) as usize;
        let mut c = self.c;
        for x in c.iter_mut().skip(len) {
            *x = 0;
        }
        Self { len: len as u8, c, ..*self }
    }

    pub fn add(&self, o: &Self, ff: &FiniteField) -> Self {
        debug_assert_eq!(self.tag, o.tag);
        if self.is_exact_zero() {
            return *o;
        }
        if o.is_exact_zero() {
            return *self;
        }
        let abs = self.abs_prec().min(o.abs_prec());
        let lo = (self.val.min(o.val)) as i64;
        if lo >= abs {
            return Self::zero_mod(self.tag, abs);
        }
        let len = ((abs - lo) as usize).min(MAX_PREC);
        let mut c = [0; MAX_PREC];
        for (i, slot) in c.iter_mut().enumerate().take(len) {
            let k = lo + i as i64;
            *slot = ff.add(self.get(k), o.get(k));
        }
        Self::normalized(self.tag, lo, len, c, false)
    }

    pub fn neg(&self, ff: &FiniteField) -> Self {
        let mut out = *self;
        for x in out.c.iter_mut().take(self.len as usize) {
            *x = ff.neg(*x);
        }
        out
    }

    pub fn sub(&self, o: &Self, ff: &FiniteField) -> Self {
        self.add(&o.neg(ff), ff)
    }

    fn support_len(&self) -> usize {
        self.c[..self.len as usize].iter().rposition(|&x| x != 0).map_or(0, |i| i + 1)
    }

    pub fn mul(&self, o: &Self, ff: &FiniteField) -> Self {
        debug_assert_eq!(self.tag, o.tag);
        if self.is_exact_zero() || o.is_exact_zero() {
            return Self::zero(self.tag);
        }
        let val = self.val as i64 + o.val as i64;
        let len = self.len.min(o.len) as usize;
        if len == 0 {
            return Self::zero_mod(self.tag, val);
        }
        let (na, nb) = (self.support_len(), o.support_len());
        let mut c = [0; MAX_PREC];
        for i in 0..na.min(len) {
            let a = self.c[i];
            if a == 0 {
                continue;
            }
            for j in 0..nb.min(len - i) {
                let b = o.c[j];
                if b != 0 {
                    c[i + j] = ff.add(c[i + j], ff.mul(a, b));
                }
            }
        }
        Self { tag: self.tag, val: val as i32, len: len as u8, c }
    }

    /// Multiplication by a residue-field scalar.
    pub fn scale(&self, a: Fq, ff: &FiniteField) -> Self {
        if a == 0 {
            return Self::zero(self.tag);
        }
        let mut out = *self;
        for x in out.c.iter_mut().take(self.len as usize) {
            *x = ff.mul(*x, a);
        }
        out
    }

    /// Multiplication by T^k.
    pub fn shift(&self, k: i32) -> Self {
        if self.is_exact_zero() {
            return *self;
        }
        Self { val: self.val + k, ..*self }
    }

    pub fn inv(&self, ff: &FiniteField) -> Result<Self, FieldError> {
        if self.len == 0 {
            return Err(FieldError::ZeroInput);
        }
        let len = self.len as usize;
        let a0inv = ff.inv(self.c[0]);
        let na = self.support_len();
        let mut b = [0; MAX_PREC];
        b[0] = a0inv;
        for k in 1..len {
            let mut s = 0;
            for i in 1..=k.min(na.saturating_sub(1)) {
                s = ff.add(s, ff.mul(self.c[i], b[k - i]));
            }
            b[k] = ff.neg(ff.mul(a0inv, s));
        }
        Ok(Self { tag: self.tag, val: -self.val, len: len as u8, c: b })
    }

    pub fn div(&self, o: &Self, ff: &FiniteField) -> Result<Self, FieldError> {
        Ok(self.mul(&o.inv(ff)?, ff))
    }

    pub fn pow(&self, k: i32, ff: &FiniteField) -> Result<Self, FieldError> {
        let base = if k < 0 { self.inv(ff)? } else { *self };
        let mut acc = Self::one(self.tag);
        for _ in 0..k.unsigned_abs() {
            acc = acc.mul(&base, ff);
        }
        Ok(acc)
    }

    /// Equality of the coefficients both sides know.
    pub fn agrees_with(&self, o: &Self) -> bool {
        let abs = self.abs_prec().min(o.abs_prec());
        let lo = (self.val.min(o.val)) as i64;
        let hi = abs.min(lo + 4 * MAX_PREC as i64);
        (lo..hi).all(|k| self.get(k) == o.get(k))
    }

    /// Same as `agrees_with`, but both sides must know at least up to `abs`.
    pub fn agrees_to(&self, o: &Self, abs: i64) -> bool {
        self.abs_prec() >= abs && o.abs_prec() >= abs && self.truncate(abs).agrees_with(&o.truncate(abs))
    }

    pub fn random<R: Rng>(rng: &mut R, ff: &FiniteField, tag: FieldTag, val: i32, len: usize) -> Self {
        let mut c = [0; MAX_PREC];
        for x in c.iter_mut().take(len) {
            *x = ff.random(rng);
        }
        Self::normalized(tag, val as i64, len, c, false)
    }
}

impl fmt::Display for LaurentElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let var = match self.tag {
            FieldTag::F => "t",
            FieldTag::E { .. } => "w",
        };
        if self.is_exact_zero() {
            return write!(f, "0");
        }
        let mut parts = vec![];
        for (i, &c) in self.coeffs().iter().enumerate() {
            if c != 0 {
                parts.push(format!("{c}·{var}^{}", self.val as i64 + i as i64));
            }
        }
        if self.len < MAX_PREC as u8 {
            parts.push(format!("O({var}^{})", self.abs_prec()));
        }
        if parts.is_empty() {
            parts.push("0".into());
        }
        write!(f, "{}", parts.join(" + "))
    }
}

fn base_field() -> String {
    "F".into()
}

fn one_u8() -> u8 {
    1
}

/// JSON form; `field` defaults to "F" and `n` to 1, so {"val":0,"coeffs":[1]} is 1 ∈ F.
#[derive(Serialize, Deserialize)]
struct LaurentRepr {
    #[serde(default = "base_field")]
    field: String,
    #[serde(default = "one_u8")]
    n: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u0: Option<Fq>,
    val: i64,
    coeffs: Vec<Fq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prec: Option<usize>,
}

impl Serialize for LaurentElem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (field, n, u0) = match self.tag {
            FieldTag::F => ("F", 1, None),
            FieldTag::E { n, u0 } => ("E", n, Some(u0)),
        };
        let exact = self.len as usize == MAX_PREC || self.is_exact_zero();
        let coeffs = self.c[..self.support_len()].to_vec();
        let val = if self.is_exact_zero() { 0 } else { self.val as i64 };
        LaurentRepr { field: field.into(), n, u0, val, coeffs, prec: (!exact).then_some(self.len as usize) }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LaurentElem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = LaurentRepr::deserialize(d)?;
        let tag = match r.field.as_str() {
            "F" => FieldTag::F,
            "E" => FieldTag::E { n: r.n, u0: r.u0.unwrap_or(1) },
            other => return Err(serde::de::Error::custom(format!("unknown field {other:?}"))),
        };
        Ok(LaurentElem::from_coeffs(tag, r.val as i32, &r.coeffs, r.prec))
    }
}

// ---------------------------------------------------------------------------
// E over F
// ---------------------------------------------------------------------------

fn e_params(x: &LaurentElem) -> (usize, Fq) {
    match x.tag {
        FieldTag::E { n, u0 } => (n as usize, u0),
        FieldTag::F => panic!("expected an element of E"),
    }
}

/// Image of an F-element in E, using t = u0^{-1}·ϖ_E^n.
pub fn embed_in_e(x: &LaurentElem, n: u8, u0: Fq, ff: &FiniteField) -> LaurentElem {
    let tag = FieldTag::E { n, u0 };
    if x.is_exact_zero() {
        return LaurentElem::zero(tag);
    }
    let n = n as i64;
    let lo = x.val as i64 * n;
    let exact = x.len as usize == MAX_PREC;
    let len = if exact { MAX_PREC } else { ((x.len as i64) * n).min(MAX_PREC as i64) as usize };
    let u0inv = ff.inv(u0);
    let mut c = [0; MAX_PREC];
    for i in 0..len {
        if i as i64 % n == 0 {
            let k = x.val as i64 + i as i64 / n;
            c[i] = ff.mul(x.get(k), ff.pow(u0inv, k));
        }
    }
    LaurentElem::normalized(tag, lo, len, c, false)
}

/// Coordinates x_0, …, x_{n−1} ∈ F with x = Σ ϖ_E^i x_i.
pub fn decompose_e(x: &LaurentElem, ff: &FiniteField) -> Vec<LaurentElem> {
    let (n, u0) = e_params(x);
    if x.is_exact_zero() {
        return vec![LaurentElem::zero(FieldTag::F); n];
    }
    let ni = n as i64;
    let exact = x.len as usize == MAX_PREC;
    let abs = x.abs_prec();
    (0..ni)
        .map(|i| {
            let k_lo = (x.val as i64 - i).div_euclid(ni) + if (x.val as i64 - i).rem_euclid(ni) == 0 { 0 } else { 1 };
            let k_hi = if exact { k_lo + MAX_PREC as i64 } else { (abs - i + ni - 1).div_euclid(ni) };
            let len = (k_hi - k_lo).clamp(0, MAX_PREC as i64) as usize;
            let mut c = [0; MAX_PREC];
            for (j, slot) in c.iter_mut().enumerate().take(len) {
                let k = k_lo + j as i64;
                let v = x.get(k * ni + i);
                if v != 0 {
                    *slot = ff.mul(v, ff.pow(u0, k));
                }
            }
            LaurentElem::normalized(FieldTag::F, k_lo, len, c, exact)
        })
        .collect()
}

/// Matrix of multiplication by x on the basis 1, ϖ_E, …, ϖ_E^{n−1}.
pub fn multiplication_matrix(x: &LaurentElem, ff: &FiniteField) -> Vec<Vec<LaurentElem>> {
    let (n, u0) = e_params(x);
    let parts = decompose_e(x, ff);
    let wrap = LaurentElem::monomial(FieldTag::F, u0, 1);
    let mut m = vec![vec![LaurentElem::zero(FieldTag::F); n]; n];
    for j in 0..n {
        for (i, xi) in parts.iter().enumerate() {
            let r = i + j;
            if r < n {
                m[r][j] = *xi;
            } else {
                m[r - n][j] = xi.mul(&wrap, ff);
            }
        }
    }
    m
}

pub fn trace_e_over_f(x: &LaurentElem, ff: &FiniteField) -> LaurentElem {
    let m = multiplication_matrix(x, ff);
    (0..m.len()).fold(LaurentElem::zero(FieldTag::F), |acc, i| acc.add(&m[i][i], ff))
}

pub fn norm_e_over_f(x: &LaurentElem, ff: &FiniteField) -> Result<LaurentElem, FieldError> {
    determinant(multiplication_matrix(x, ff), ff)
}

/// Determinant by elimination with minimal-valuation pivots.
pub fn determinant(mut m: Vec<Vec<LaurentElem>>, ff: &FiniteField) -> Result<LaurentElem, FieldError> {
    let n = m.len();
    let tag = m.first().and_then(|r| r.first()).map_or(FieldTag::F, |x| x.tag);
    let mut det = LaurentElem::one(tag);
    for col in 0..n {
        let piv = (col..n)
            .filter(|&r| !m[r][col].is_zero())
            .min_by_key(|&r| m[r][col].val);
        let Some(r) = piv else {
            if (col..n).all(|r| m[r][col].is_exact_zero()) {
                return Ok(LaurentElem::zero(tag));
            }
            let known = (col..n).map(|r| m[r][col].abs_prec()).min().unwrap_or(0);
            return Err(FieldError::InsufficientPrecision { needed: known, known });
        };
        if r != col {
            m.swap(r, col);
            det = det.neg(ff);
        }
        let p = m[col][col];
        let pinv = p.inv(ff)?;
        det = det.mul(&p, ff);
        for r in col + 1..n {
            if m[r][col].is_exact_zero() {
                continue;
            }
            let factor = m[r][col].mul(&pinv, ff);
            for c in col + 1..n {
                if !m[col][c].is_exact_zero() {
                    let d = factor.mul(&m[col][c], ff);
                    m[r][c] = m[r][c].sub(&d, ff);
                }
            }
        }
    }
    Ok(det)
}

/// Independent norm and trace computations used as cross-checks.
pub mod oracle {
    use super::*;

    fn conjugate(x: &LaurentElem, mu: Fq, ff: &FiniteField) -> LaurentElem {
        let mut out = *x;
        for i in 0..x.len as usize {
            let k = x.val as i64 + i as i64;
            out.c[i] = ff.mul(x.c[i], ff.pow(mu, k));
        }
        out
    }

    fn conjugates(x: &LaurentElem, ff: &FiniteField) -> Option<Vec<LaurentElem>> {
        let (n, _) = e_params(x);
        let q1 = ff.q() as i64 - 1;
        if q1 % n as i64 != 0 {
            return None;
        }
        let step = q1 / n as i64;
        Some((0..n as i64).map(|j| conjugate(x, ff.exp(step * j), ff)).collect())
    }

    fn back_to_f(y: &LaurentElem, ff: &FiniteField) -> LaurentElem {
        decompose_e(y, ff).swap_remove(0)
    }

    /// Product of the n conjugates when μ_n ⊂ F_q, otherwise Res(u^n − ϖ, X(u)).
    pub fn norm(x: &LaurentElem, ff: &FiniteField) -> Result<LaurentElem, FieldError> {
        if let Some(cs) = conjugates(x, ff) {
            let prod = cs.iter().skip(1).fold(cs[0], |acc, y| acc.mul(y, ff));
            return Ok(back_to_f(&prod, ff));
        }
        let (n, u0) = e_params(x);
        let parts = decompose_e(x, ff);
        let size = 2 * n - 1;
        let zero = LaurentElem::zero(FieldTag::F);
        let mut s = vec![vec![zero; size]; size];
        // f = u^n − u0 t, listed from the top coefficient.
        let mut f = vec![zero; n + 1];
        f[0] = LaurentElem::one(FieldTag::F);
        f[n] = LaurentElem::monomial(FieldTag::F, ff.neg(u0), 1);
        for r in 0..n - 1 {
            for (j, c) in f.iter().enumerate() {
                s[r][r + j] = *c;
            }
        }
        for r in 0..n {
            for j in 0..n {
                s[n - 1 + r][r + j] = parts[n - 1 - j];
            }
        }
        determinant(s, ff)
    }

    /// Sum of conjugates when μ_n ⊂ F_q, otherwise n times the ϖ_E^{0 mod n} part.
    pub fn trace(x: &LaurentElem, ff: &FiniteField) -> LaurentElem {
        if let Some(cs) = conjugates(x, ff) {
            let sum = cs.iter().skip(1).fold(cs[0], |acc, y| acc.add(y, ff));
            return back_to_f(&sum, ff);
        }
        let (n, u0) = e_params(x);
        let mut coeffs = vec![];
        let abs = x.abs_prec();
        let lo = (x.val as i64).div_euclid(n as i64);
        let exact = x.len as usize == MAX_PREC;
        let mut k = lo;
        while (exact && coeffs.len() < MAX_PREC) || (!exact && k * (n as i64) < abs) {
            let c = x.get(k * n as i64);
            coeffs.push(ff.mul(ff.mul(c, ff.pow(u0, k)), ff.from_int(n as i64)));
            k += 1;
            if coeffs.len() >= MAX_PREC {
                break;
            }
        }
        let prec = (!exact).then_some(coeffs.len());
        LaurentElem::from_coeffs(FieldTag::F, lo as i32, &coeffs, prec)
    }
}

// ---------------------------------------------------------------------------
// Characters
// ---------------------------------------------------------------------------

/// ψ(x) = ζ_p^{Tr(coefficient of t^0)}.
pub fn psi_eval(x: &LaurentElem, ff: &FiniteField) -> Result<RootOfUnity, FieldError> {
    debug_assert_eq!(x.tag, FieldTag::F);
    let c = x.coeff_at(0)?;
    Ok(RootOfUnity::new(ff.trace(c) as i64, ff.p()))
}

/// ζ_p^{Tr(c)} for a residue c.
pub fn psi_residue(c: Fq, ff: &FiniteField) -> RootOfUnity {
    RootOfUnity::new(ff.trace(c) as i64, ff.p())
}

/// Representatives a_0 + a_1 T + … + a_{m−1} T^{m−1} of o^×/(1 + p^m).
pub fn unit_reps(ff: &FiniteField, tag: FieldTag, m: usize) -> Vec<LaurentElem> {
    assert!((1..=MAX_PREC).contains(&m));
    let q = ff.q() as usize;
    let total = (q - 1) * q.pow(m as u32 - 1);
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0u8; m];
    for idx in 0..total {
        let mut r = idx;
        digits[0] = (r % (q - 1) + 1) as Fq;
        r /= q - 1;
        for d in digits.iter_mut().skip(1) {
            *d = (r % q) as Fq;
            r /= q;
        }
        out.push(LaurentElem::from_coeffs(tag, 0, &digits, None));
    }
    out
}

/// Tame character of F^×: ζ_{q−1}^{e·dlog} on residues and `at_t` at t.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TameChar {
    pub q: u64,
    pub unit_exp: u64,
    pub at_t: RootOfUnity,
}

impl TameChar {
    pub fn new(q: u64, unit_exp: i64, at_t: RootOfUnity) -> Self {
        Self { q, unit_exp: unit_exp.rem_euclid(q as i64 - 1) as u64, at_t }
    }

    pub fn trivial(q: u64) -> Self {
        Self::new(q, 0, RootOfUnity::one())
    }

    /// The character with prescribed value at ϖ = u0·t.
    pub fn with_varpi_value(ff: &FiniteField, unit_exp: i64, at_varpi: RootOfUnity, u0: Fq) -> Self {
        let base = Self::new(ff.q(), unit_exp, RootOfUnity::one());
        Self { at_t: at_varpi.mul(base.on_residue(u0, ff).inv()), ..base }
    }

    pub fn is_trivial(&self) -> bool {
        self.unit_exp == 0 && self.at_t.is_one()
    }

    pub fn on_residue(&self, c: Fq, ff: &FiniteField) -> RootOfUnity {
        let l = ff.log(c).expect("residue must be nonzero");
        RootOfUnity::new((self.unit_exp * l) as i64, self.q - 1)
    }

    pub fn eval(&self, x: &LaurentElem, ff: &FiniteField) -> Result<RootOfUnity, FieldError> {
        debug_assert_eq!(x.tag, FieldTag::F);
        let v = x.valuation().ok_or(FieldError::ZeroInput)?;
        Ok(self.at_t.pow(v as i64).mul(self.on_residue(x.leading(), ff)))
    }

    pub fn at_varpi(&self, u0: Fq, ff: &FiniteField) -> RootOfUnity {
        self.at_t.mul(self.on_residue(u0, ff))
    }

    /// λ(−1) = (−1)^e.
    pub fn at_minus_one(&self) -> RootOfUnity {
        RootOfUnity::new((self.unit_exp % 2) as i64, 2)
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::new(self.q, (self.unit_exp + o.unit_exp) as i64, self.at_t.mul(o.at_t))
    }

    pub fn inv(&self) -> Self {
        Self::new(self.q, -(self.unit_exp as i64), self.at_t.inv())
    }

    pub fn pow(&self, k: i64) -> Self {
        Self::new(self.q, self.unit_exp as i64 * k, self.at_t.pow(k))
    }
}

/// Character of E^× of level one: on ϖ_E^k·a_0(1 + c_1ϖ_E + …) it is
/// at_pi_e^k · Λ^{lambda_exp·k} · ζ_{q−1}^{e·dlog a_0} · ψ(n c_1) · twist(N(x)).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelOneCharE {
    pub n: u8,
    pub u0: Fq,
    pub at_pi_e: RootOfUnity,
    pub lambda_exp: i32,
    pub unit_exp: u64,
    pub twist: Option<TameChar>,
}

impl LevelOneCharE {
    pub fn tag(&self) -> FieldTag {
        FieldTag::E { n: self.n, u0: self.u0 }
    }

    pub fn with_twist(&self, lambda: TameChar) -> Self {
        Self { twist: Some(lambda), ..self.clone() }
    }

    /// Value on ϖ_E^k·a_0(1 + c_1ϖ_E + …) with norm `norm`, split as
    /// (tame root of unity, wild residue w); the character value is
    /// Λ^{lambda_exp·k}·tame·ψ(w).
    pub fn eval_parts(
        &self,
        k: i32,
        a0: Fq,
        c1: Fq,
        norm: Option<&LaurentElem>,
        ff: &FiniteField,
    ) -> Result<(RootOfUnity, Fq), FieldError> {
        let q1 = ff.q() - 1;
        let mut tame = self
            .at_pi_e
            .pow(k as i64)
            .mul(RootOfUnity::new((self.unit_exp * ff.log(a0).ok_or(FieldError::ZeroInput)?) as i64, q1));
        if let Some(l) = &self.twist {
            let nm = norm.ok_or(FieldError::InsufficientPrecision { needed: 0, known: 0 })?;
            tame = tame.mul(l.eval(nm, ff)?);
        }
        Ok((tame, ff.mul(ff.from_int(self.n as i64), c1)))
    }

    /// Value split as (ϖ_E-power k, root-of-unity part); the full value carries Λ^{lambda_exp·k}.
    pub fn eval_split(&self, x: &LaurentElem, ff: &FiniteField) -> Result<(i32, RootOfUnity), FieldError> {
        debug_assert_eq!(x.tag, self.tag());
        let k = x.valuation().ok_or(FieldError::ZeroInput)?;
        let a0 = x.leading();
        let a1 = x.coeff_at(k as i64 + 1)?;
        let c1 = ff.div(a1, a0);
        let norm = match self.twist {
            Some(_) => Some(norm_e_over_f(x, ff)?),
            None => None,
        };
        let (tame, w) = self.eval_parts(k, a0, c1, norm.as_ref(), ff)?;
        Ok((k, tame.mul(psi_residue(w, ff))))
    }

    pub fn eval(&self, x: &LaurentElem, ff: &FiniteField) -> Result<LambdaGraded, FieldError> {
        let (k, r) = self.eval_split(x, ff)?;
        Ok(LambdaGraded::monomial(self.lambda_exp * k, CycloNumber::root(r)))
    }
}
