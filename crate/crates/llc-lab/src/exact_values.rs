//! Exact roots of unity, cyclotomic numbers, the formal constant Λ and
//! epsilon monomials in q^{-s}.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact rationals used throughout.
pub type Q = Ratio<i128>;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ExactError {
    #[error("sum does not collapse to one monomial ({terms} surviving terms)")]
    NotMonomial { terms: usize },
    #[error("q-exponents {0} and {1} differ by a non-integer")]
    IncommensurableExponents(String, String),
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// `q^k` as an exact rational.
pub fn q_pow(q: u64, k: i64) -> Q {
    let base = Q::from_integer(q as i128);
    if k >= 0 {
        num_traits::pow(base, k as usize)
    } else {
        num_traits::pow(base.recip(), (-k) as usize)
    }
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a.lcm(&b)
}

/// Euler phi.
pub fn phi(mut n: u64) -> u64 {
    let mut out = n;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            while n.is_multiple_of(p) {
                n /= p;
            }
            out -= out / p;
        }
        p += 1;
    }
    if n > 1 {
        out -= out / n;
    }
    out
}

// ---------------------------------------------------------------------------
// Roots of unity
// ---------------------------------------------------------------------------

/// exp(2πi·num/order), kept in lowest terms so equality is value equality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RootOfUnity {
    num: u64,
    order: u64,
}

impl RootOfUnity {
    pub fn new(num: i64, order: u64) -> Self {
        assert!(order > 0, "root of unity needs positive order");
        let n = (num as i128).rem_euclid(order as i128) as u64;
        if n == 0 {
            return Self { num: 0, order: 1 };
        }
        let g = n.gcd(&order);
        Self { num: n / g, order: order / g }
    }

    pub fn one() -> Self {
        Self { num: 0, order: 1 }
    }

    pub fn minus_one() -> Self {
        Self { num: 1, order: 2 }
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    /// Exact multiplicative order.
    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn is_one(&self) -> bool {
        self.num == 0
    }

    pub fn mul(self, other: Self) -> Self {
        let l = lcm(self.order, other.order);
        let a = self.num as i128 * (l / self.order) as i128 + other.num as i128 * (l / other.order) as i128;
        Self::new((a % l as i128) as i64, l)
    }

    pub fn inv(self) -> Self {
        Self::new(-(self.num as i64), self.order)
    }

    pub fn conj(self) -> Self {
        self.inv()
    }

    pub fn pow(self, k: i64) -> Self {
        let e = (self.num as i128 * k as i128).rem_euclid(self.order as i128);
        Self::new(e as i64, self.order)
    }

    /// Exponent of this root against a multiple `n` of its order.
    pub fn exponent_in(&self, n: u64) -> u64 {
        assert!(n.is_multiple_of(self.order), "{} does not divide {}", self.order, n);
        self.num * (n / self.order)
    }

    pub fn to_complex(&self) -> (f64, f64) {
        let a = 2.0 * std::f64::consts::PI * self.num as f64 / self.order as f64;
        (a.cos(), a.sin())
    }

    pub fn to_cyclo(&self) -> CycloNumber {
        CycloNumber::root(*self)
    }

    /// Parses `a/N`.
    pub fn parse(s: &str) -> Result<Self, ExactError> {
        let (a, n) = s
            .split_once('/')
            .ok_or_else(|| ExactError::Parse(format!("expected a/N, got {s:?}")))?;
        let a: i64 = a.trim().parse().map_err(|_| ExactError::Parse(s.to_string()))?;
        let n: u64 = n.trim().parse().map_err(|_| ExactError::Parse(s.to_string()))?;
        if n == 0 {
            return Err(ExactError::Parse(format!("zero order in {s:?}")));
        }
        Ok(Self::new(a, n))
    }
}

impl fmt::Display for RootOfUnity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.order)
    }
}

impl Serialize for RootOfUnity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RootOfUnity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        RootOfUnity::parse(&s).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Cyclotomic polynomials
// ---------------------------------------------------------------------------

fn cyclo_cache() -> &'static Mutex<HashMap<u64, Arc<Vec<i128>>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Vec<i128>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Coefficients (low to high) of the n-th cyclotomic polynomial, obtained by
/// dividing x^n - 1 by Φ_d for every proper divisor d.
pub fn cyclotomic_poly(n: u64) -> Arc<Vec<i128>> {
    if let Some(p) = cyclo_cache().lock().unwrap().get(&n) {
        return p.clone();
    }
    let mut num = vec![0i128; n as usize + 1];
    num[0] = -1;
    num[n as usize] = 1;
    for d in 1..n {
        if n.is_multiple_of(d) {
            let den = cyclotomic_poly(d);
            num = poly_div_exact(&num, &den);
        }
    }
    let arc = Arc::new(num);
    cyclo_cache().lock().unwrap().insert(n, arc.clone());
    arc
}

fn poly_div_exact(num: &[i128], den: &[i128]) -> Vec<i128> {
    let dn = den.len() - 1;
    let mut r = num.to_vec();
    let mut qv = vec![0i128; num.len() - dn];
    for i in (0..qv.len()).rev() {
        let c = r[i + dn];
        qv[i] = c;
        if c != 0 {
            for (j, &dj) in den.iter().enumerate() {
                r[i + j] -= c * dj;
            }
        }
    }
    debug_assert!(r.iter().all(|&x| x == 0));
    qv
}

// ---------------------------------------------------------------------------
// Cyclotomic numbers
// ---------------------------------------------------------------------------

/// Element of Q(ζ_N) in the basis 1, ζ, …, ζ^{φ(N)-1}; coefficients are
/// `nums[i] / den` with `den > 0` and no common factor.
#[derive(Clone, Debug)]
pub struct CycloNumber {
    order: u64,
    nums: Vec<i128>,
    den: i128,
}

impl CycloNumber {
    pub fn zero() -> Self {
        Self { order: 1, nums: vec![0], den: 1 }
    }

    pub fn one() -> Self {
        Self::from_rational(Q::one())
    }

    pub fn from_int(n: i128) -> Self {
        Self::from_rational(Q::from_integer(n))
    }

    pub fn from_rational(x: Q) -> Self {
        Self { order: 1, nums: vec![*x.numer()], den: *x.denom() }
    }

    pub fn root(r: RootOfUnity) -> Self {
        let mut dense = vec![0i128; r.order() as usize];
        dense[r.numerator() as usize] = 1;
        Self::from_dense(r.order(), dense, 1)
    }

    /// Sum of roots of unity with integer multiplicities.
    pub fn sum_of_roots<'a, I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (&'a RootOfUnity, i128)>,
    {
        let terms: Vec<(&RootOfUnity, i128)> = terms.into_iter().collect();
        let order = terms.iter().fold(1u64, |acc, (r, _)| lcm(acc, r.order()));
        let mut dense = vec![0i128; order as usize];
        for (r, c) in terms {
            dense[r.exponent_in(order) as usize] += c;
        }
        Self::from_dense(order, dense, 1)
    }

    /// Σ_r r·Σ_b counts[b]·ζ_p^b. Each inner vector is first reduced by
    /// Σ_b ζ_p^b = 0, so fully balanced groups drop out before any cyclotomic work.
    pub fn sum_with_psi_buckets<'a, I>(groups: I, p: u64) -> Self
    where
        I: IntoIterator<Item = (RootOfUnity, &'a [i128])>,
    {
        let mut terms: Vec<(RootOfUnity, i128)> = vec![];
        for (r, counts) in groups {
            debug_assert_eq!(counts.len() as u64, p);
            let lo = counts.iter().copied().min().unwrap_or(0);
            for (b, &c) in counts.iter().enumerate() {
                if c != lo {
                    terms.push((r.mul(RootOfUnity::new(b as i64, p)), c - lo));
                }
            }
        }
        Self::sum_of_roots(terms.iter().map(|(r, c)| (r, *c)))
    }

    /// Builds Σ dense[e] ζ_N^e / den with exponents read modulo N.
    pub fn from_dense(order: u64, dense: Vec<i128>, den: i128) -> Self {
        assert!(order > 0 && den != 0);
        let n = order as usize;
        let mut v = if dense.len() == n {
            dense
        } else {
            let mut v = vec![0i128; n];
            for (i, c) in dense.into_iter().enumerate() {
                v[i % n] += c;
            }
            v
        };
        let phi_poly = cyclotomic_poly(order);
        let deg = phi_poly.len() - 1;
        for i in (deg..n).rev() {
            let c = v[i];
            if c != 0 {
                v[i] = 0;
                for (j, &pj) in phi_poly.iter().enumerate().take(deg) {
                    if pj != 0 {
                        v[i - deg + j] -= c * pj;
                    }
                }
            }
        }
        v.truncate(deg);
        let mut out = Self { order, nums: v, den };
        out.normalize();
        out
    }

    fn normalize(&mut self) {
        if self.den < 0 {
            self.den = -self.den;
            for x in &mut self.nums {
                *x = -*x;
            }
        }
        let mut g = self.den;
        for &x in &self.nums {
            g = g.gcd(&x);
            if g == 1 {
                break;
            }
        }
        if self.nums.iter().all(|&x| x == 0) {
            self.den = 1;
            return;
        }
        if g > 1 {
            self.den /= g;
            for x in &mut self.nums {
                *x /= g;
            }
        }
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    /// Coefficient of ζ_N^e in the canonical basis.
    pub fn coeff(&self, e: usize) -> Q {
        Q::new(self.nums.get(e).copied().unwrap_or(0), self.den)
    }

    pub fn coeffs(&self) -> Vec<Q> {
        self.nums.iter().map(|&x| Q::new(x, self.den)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.nums.iter().all(|&x| x == 0)
    }

    /// The value as a rational, when it lies in Q.
    pub fn as_rational(&self) -> Option<Q> {
        if self.nums.iter().skip(1).all(|&x| x == 0) {
            Some(Q::new(self.nums[0], self.den))
        } else {
            None
        }
    }

    /// Dense exponent vector of this number viewed in order `m`.
    fn lifted(&self, m: u64) -> Vec<i128> {
        assert!(m.is_multiple_of(self.order));
        let step = (m / self.order) as usize;
        let mut v = vec![0i128; m as usize];
        for (e, &c) in self.nums.iter().enumerate() {
            v[e * step] += c;
        }
        v
    }

    /// Re-expresses the number in Q(ζ_m) for a multiple m of its order.
    pub fn lift(&self, m: u64) -> Self {
        if m == self.order {
            return self.clone();
        }
        Self::from_dense(m, self.lifted(m), self.den)
    }

    fn common(a: &Self, b: &Self) -> (Self, Self) {
        if a.order == b.order {
            (a.clone(), b.clone())
        } else {
            let l = lcm(a.order, b.order);
            (a.lift(l), b.lift(l))
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = Self::common(self, other);
        let nums = a
            .nums
            .iter()
            .zip(&b.nums)
            .map(|(&x, &y)| x * b.den + y * a.den)
            .collect();
        let mut out = Self { order: a.order, nums, den: a.den * b.den };
        out.normalize();
        out
    }

    pub fn neg(&self) -> Self {
        Self { order: self.order, nums: self.nums.iter().map(|x| -x).collect(), den: self.den }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if let Some(r) = other.as_rational() {
            return self.scale(r);
        }
        if let Some(r) = self.as_rational() {
            return other.scale(r);
        }
        let (a, b) = Self::common(self, other);
        let mut dense = vec![0i128; a.order as usize];
        let n = a.order as usize;
        for (i, &x) in a.nums.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.nums.iter().enumerate() {
                if y != 0 {
                    dense[(i + j) % n] += x * y;
                }
            }
        }
        Self::from_dense(a.order, dense, a.den * b.den)
    }

    pub fn mul_root(&self, r: RootOfUnity) -> Self {
        let l = lcm(self.order, r.order());
        let mut dense = vec![0i128; l as usize];
        let step = (l / self.order) as usize;
        let shift = r.exponent_in(l) as usize;
        for (e, &c) in self.nums.iter().enumerate() {
            dense[(e * step + shift) % l as usize] += c;
        }
        Self::from_dense(l, dense, self.den)
    }

    pub fn scale(&self, r: Q) -> Self {
        let mut out = Self {
            order: self.order,
            nums: self.nums.iter().map(|&x| x * r.numer()).collect(),
            den: self.den * r.denom(),
        };
        out.normalize();
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Galois action ζ ↦ ζ^a, gcd(a, N) = 1.
    pub fn galois(&self, a: u64) -> Self {
        let n = self.order as usize;
        let mut dense = vec![0i128; n];
        for (e, &c) in self.nums.iter().enumerate() {
            dense[(e * a as usize) % n] += c;
        }
        Self::from_dense(self.order, dense, self.den)
    }

    /// Complex conjugation.
    pub fn conj(&self) -> Self {
        self.galois(self.order - 1 + if self.order == 1 { 1 } else { 0 })
    }

    /// Multiplicative inverse via the product of the non-trivial conjugates.
    pub fn inverse(&self) -> Result<Self, ExactError> {
        if self.is_zero() {
            return Err(ExactError::NotInvertible("zero".into()));
        }
        if let Some(r) = self.as_rational() {
            return Ok(Self::from_rational(r.recip()));
        }
        let n = self.order;
        let mut prod = Self::one();
        for a in 2..n {
            if a.gcd(&n) == 1 {
                prod = prod.mul(&self.galois(a));
            }
        }
        let norm = self
            .mul(&prod)
            .as_rational()
            .ok_or_else(|| ExactError::NotInvertible("norm not rational".into()))?;
        Ok(prod.scale(norm.recip()))
    }

    /// Numerical value at ζ_N = exp(2πi/N).
    pub fn to_complex(&self) -> (f64, f64) {
        let n = self.order as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (e, &c) in self.nums.iter().enumerate() {
            if c != 0 {
                let a = 2.0 * std::f64::consts::PI * e as f64 / n;
                re += c as f64 * a.cos();
                im += c as f64 * a.sin();
            }
        }
        (re / self.den as f64, im / self.den as f64)
    }

    /// Finds a root of unity equal to this number, if there is one.
    pub fn as_root_of_unity(&self) -> Option<RootOfUnity> {
        let n = if self.order % 2 == 1 { 2 * self.order } else { self.order };
        (0..n as i64).map(|a| RootOfUnity::new(a, n)).find(|r| CycloNumber::root(*r) == *self)
    }
}

impl PartialEq for CycloNumber {
    fn eq(&self, other: &Self) -> bool {
        if self.order == other.order {
            return self.den == other.den && self.nums == other.nums;
        }
        if self.is_zero() && other.is_zero() {
            return true;
        }
        let (a, b) = Self::common(self, other);
        a.den == b.den && a.nums == b.nums
    }
}

impl Eq for CycloNumber {}

impl From<RootOfUnity> for CycloNumber {
    fn from(r: RootOfUnity) -> Self {
        Self::root(r)
    }
}

impl fmt::Display for CycloNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (e, c) in self.coeffs().iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if e == 0 {
                write!(f, "{c}")?;
            } else {
                write!(f, "({c})z{}^{e}", self.order)?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CycloRepr {
    order: u64,
    coeffs: BTreeMap<String, String>,
}

fn parse_q(s: &str) -> Result<Q, ExactError> {
    let bad = || ExactError::Parse(format!("bad rational {s:?}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let a: i128 = a.trim().parse().map_err(|_| bad())?;
            let b: i128 = b.trim().parse().map_err(|_| bad())?;
            if b == 0 {
                return Err(bad());
            }
            Ok(Q::new(a, b))
        }
        None => Ok(Q::from_integer(s.trim().parse().map_err(|_| bad())?)),
    }
}

pub fn q_to_string(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

impl Serialize for CycloNumber {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let coeffs = self
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(e, c)| (e.to_string(), q_to_string(c)))
            .collect();
        CycloRepr { order: self.order, coeffs }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CycloNumber {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = CycloRepr::deserialize(d)?;
        if r.order == 0 {
            return Err(D::Error::custom("order must be positive"));
        }
        let mut acc = CycloNumber::zero();
        for (e, c) in &r.coeffs {
            let e: i64 = e.parse().map_err(D::Error::custom)?;
            let c = parse_q(c).map_err(D::Error::custom)?;
            acc = acc.add(&CycloNumber::root(RootOfUnity::new(e, r.order)).scale(c));
        }
        Ok(acc.lift(lcm(acc.order, r.order)))
    }
}

// ---------------------------------------------------------------------------
// Λ-graded values
// ---------------------------------------------------------------------------

/// Laurent polynomial in the formal unit Λ with cyclotomic coefficients.
#[derive(Clone, Debug, Default)]
pub struct LambdaGraded {
    terms: BTreeMap<i32, CycloNumber>,
}

impl LambdaGraded {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_cyclo(CycloNumber::one())
    }

    pub fn from_cyclo(c: CycloNumber) -> Self {
        Self::monomial(0, c)
    }

    /// c·Λ^a.
    pub fn monomial(a: i32, c: CycloNumber) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(a, c);
        }
        Self { terms }
    }

    pub fn lambda_pow(a: i32) -> Self {
        Self::monomial(a, CycloNumber::one())
    }

    pub fn terms(&self) -> &BTreeMap<i32, CycloNumber> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_lambda_free(&self) -> bool {
        self.terms.keys().all(|&a| a == 0)
    }

    /// The single (exponent, coefficient) pair, if homogeneous and nonzero.
    pub fn homogeneous(&self) -> Option<(i32, &CycloNumber)> {
        if self.terms.len() == 1 {
            self.terms.iter().next().map(|(a, c)| (*a, c))
        } else {
            None
        }
    }

    /// Coefficient of Λ^0.
    pub fn constant(&self) -> CycloNumber {
        self.terms.get(&0).cloned().unwrap_or_else(CycloNumber::zero)
    }

    fn insert_add(&mut self, a: i32, c: CycloNumber) {
        let merged = match self.terms.remove(&a) {
            Some(old) => old.add(&c),
            None => c,
        };
        if !merged.is_zero() {
            self.terms.insert(a, merged);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&a, c) in &other.terms {
            out.insert_add(a, c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self { terms: self.terms.iter().map(|(&a, c)| (a, c.neg())).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (&a, x) in &self.terms {
            for (&b, y) in &other.terms {
                out.insert_add(a + b, x.mul(y));
            }
        }
        out
    }

    pub fn mul_cyclo(&self, c: &CycloNumber) -> Self {
        let mut out = Self::zero();
        for (&a, x) in &self.terms {
            out.insert_add(a, x.mul(c));
        }
        out
    }

    pub fn mul_root(&self, r: RootOfUnity) -> Self {
        Self { terms: self.terms.iter().map(|(&a, c)| (a, c.mul_root(r))).collect() }
    }

    pub fn scale(&self, r: Q) -> Self {
        let mut out = Self::zero();
        for (&a, x) in &self.terms {
            out.insert_add(a, x.scale(r));
        }
        out
    }

    pub fn shift_lambda(&self, k: i32) -> Self {
        Self { terms: self.terms.iter().map(|(&a, c)| (a + k, c.clone())).collect() }
    }

    /// Inverse of a homogeneous value.
    pub fn inverse(&self) -> Result<Self, ExactError> {
        let (a, c) = self
            .homogeneous()
            .ok_or_else(|| ExactError::NotInvertible("value is not Λ-homogeneous".into()))?;
        Ok(Self::monomial(-a, c.inverse()?))
    }
}

impl PartialEq for LambdaGraded {
    fn eq(&self, other: &Self) -> bool {
        self.terms.len() == other.terms.len()
            && self.terms.iter().zip(&other.terms).all(|((a, x), (b, y))| a == b && x == y)
    }
}

impl Eq for LambdaGraded {}

impl fmt::Display for LambdaGraded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(a, c)| if *a == 0 { format!("[{c}]") } else { format!("[{c}]·Λ^{a}") })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Serialize for LambdaGraded {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<String, &CycloNumber> = self.terms.iter().map(|(a, c)| (a.to_string(), c)).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LambdaGraded {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let m = BTreeMap::<String, CycloNumber>::deserialize(d)?;
        let mut out = LambdaGraded::zero();
        for (a, c) in m {
            let a: i32 = a.parse().map_err(D::Error::custom)?;
            out.insert_add(a, c);
        }
        Ok(out)
    }
}

/// Rewrites Λ^n ↦ κ(ϖ) until every exponent lies in [0, n).
pub fn lambda_reduce(x: &LambdaGraded, n: u32, kappa_pi: i8) -> LambdaGraded {
    assert!(kappa_pi == 1 || kappa_pi == -1, "kappa must be a sign");
    let n = n as i32;
    let mut out = LambdaGraded::zero();
    for (&a, c) in &x.terms {
        let r = a.rem_euclid(n);
        let k = (a - r) / n;
        let sign = if kappa_pi == -1 && k.rem_euclid(2) == 1 { -1 } else { 1 };
        out.insert_add(r, c.scale(Q::from_integer(sign)));
    }
    out
}

// ---------------------------------------------------------------------------
// Epsilon monomials
// ---------------------------------------------------------------------------

/// unit · q^{q_const + q_s·s}.
#[derive(Clone, Debug)]
pub struct EpsMonomial {
    pub q: u64,
    pub unit: LambdaGraded,
    pub q_const: Q,
    pub q_s: i64,
}

impl EpsMonomial {
    pub fn new(q: u64, unit: LambdaGraded, q_const: Q, q_s: i64) -> Self {
        Self { q, unit, q_const, q_s }
    }

    pub fn one(q: u64) -> Self {
        Self::new(q, LambdaGraded::one(), Q::zero(), 0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.q, other.q, "monomials over different q");
        Self::new(self.q, self.unit.mul(&other.unit), self.q_const + other.q_const, self.q_s + other.q_s)
    }

    pub fn div(&self, other: &Self) -> Result<Self, ExactError> {
        assert_eq!(self.q, other.q, "monomials over different q");
        Ok(Self::new(
            self.q,
            self.unit.mul(&other.unit.inverse()?),
            self.q_const - other.q_const,
            self.q_s - other.q_s,
        ))
    }

    pub fn scale_unit(&self, c: &LambdaGraded) -> Self {
        Self::new(self.q, self.unit.mul(c), self.q_const, self.q_s)
    }

    /// Same value with the constant exponent moved to `target` (integer shift only).
    pub fn with_const(&self, target: Q) -> Option<Self> {
        let d = self.q_const - target;
        if !d.is_integer() {
            return None;
        }
        let k = *d.numer() as i64;
        Some(Self::new(self.q, self.unit.scale(q_pow(self.q, k)), target, self.q_s))
    }
}

impl PartialEq for EpsMonomial {
    fn eq(&self, other: &Self) -> bool {
        if self.q != other.q {
            return false;
        }
        if self.unit.is_zero() || other.unit.is_zero() {
            return self.unit.is_zero() && other.unit.is_zero();
        }
        if self.q_s != other.q_s {
            return false;
        }
        match other.with_const(self.q_const) {
            Some(o) => o.unit == self.unit,
            None => false,
        }
    }
}

impl fmt::Display for EpsMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} · {}^({} + {}s)", self.unit, self.q, q_to_string(&self.q_const), self.q_s)
    }
}

#[derive(Serialize, Deserialize)]
struct QExpRepr {
    #[serde(rename = "const")]
    c: String,
    s: i64,
}

#[derive(Serialize, Deserialize)]
struct EpsRepr {
    q: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    unit: Option<CycloNumber>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    lambda: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    unit_terms: Option<LambdaGraded>,
    q_exp: QExpRepr,
}

impl Serialize for EpsMonomial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let q_exp = QExpRepr { c: q_to_string(&self.q_const), s: self.q_s };
        let repr = match self.unit.homogeneous() {
            Some((a, c)) => EpsRepr { q: self.q, unit: Some(c.clone()), lambda: Some(a), unit_terms: None, q_exp },
            None if self.unit.is_zero() => {
                EpsRepr { q: self.q, unit: Some(CycloNumber::zero()), lambda: Some(0), unit_terms: None, q_exp }
            }
            None => EpsRepr { q: self.q, unit: None, lambda: None, unit_terms: Some(self.unit.clone()), q_exp },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EpsMonomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = EpsRepr::deserialize(d)?;
        let unit = match (r.unit, r.lambda, r.unit_terms) {
            (Some(c), a, None) => LambdaGraded::monomial(a.unwrap_or(0), c),
            (None, None, Some(t)) => t,
            _ => return Err(D::Error::custom("expected unit+lambda or unit_terms")),
        };
        let c = parse_q(&r.q_exp.c).map_err(D::Error::custom)?;
        Ok(EpsMonomial::new(r.q, unit, c, r.q_exp.s))
    }
}

/// Raw zeta-integral value: power of q^{-s} ↦ (coefficient, q-exponent).
#[derive(Clone, Debug)]
pub struct EpsPolynomial {
    pub q: u64,
    terms: BTreeMap<i64, (LambdaGraded, Q)>,
}

impl EpsPolynomial {
    pub fn new(q: u64) -> Self {
        Self { q, terms: BTreeMap::new() }
    }

    /// Adds coeff · q^{q_exp} · (q^{-s})^power, merging like powers.
    pub fn add_term(&mut self, power: i64, coeff: LambdaGraded, q_exp: Q) -> Result<(), ExactError> {
        if coeff.is_zero() {
            return Ok(());
        }
        match self.terms.get_mut(&power) {
            None => {
                self.terms.insert(power, (coeff, q_exp));
            }
            Some((c0, e0)) => {
                let d = q_exp - *e0;
                if !d.is_integer() {
                    return Err(ExactError::IncommensurableExponents(q_to_string(e0), q_to_string(&q_exp)));
                }
                let k = *d.numer() as i64;
                *c0 = c0.add(&coeff.scale(q_pow(self.q, k)));
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), ExactError> {
        for (&p, (c, e)) in &other.terms {
            self.add_term(p, c.clone(), *e)?;
        }
        Ok(())
    }

    /// Surviving (nonzero) terms.
    pub fn terms(&self) -> impl Iterator<Item = (i64, &LambdaGraded, Q)> {
        self.terms.iter().filter(|(_, (c, _))| !c.is_zero()).map(|(&p, (c, e))| (p, c, *e))
    }

    pub fn scale(&self, r: Q) -> Self {
        Self {
            q: self.q,
            terms: self.terms.iter().map(|(&p, (c, e))| (p, (c.scale(r), *e))).collect(),
        }
    }
}

/// The single surviving term as a monomial, or `NotMonomial`.
pub fn collapse_to_monomial(p: &EpsPolynomial) -> Result<EpsMonomial, ExactError> {
    let live: Vec<_> = p.terms().collect();
    if live.len() != 1 {
        return Err(ExactError::NotMonomial { terms: live.len() });
    }
    let (power, c, e) = live[0];
    Ok(EpsMonomial::new(p.q, c.clone(), e, -power))
}

/// Sign as a rational.
pub fn sign_q(s: i8) -> Q {
    Q::from_integer(s as i128)
}

/// Absolute value helper used by tests.
pub fn q_abs(x: Q) -> Q {
    x.abs()
}
