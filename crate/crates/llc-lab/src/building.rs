//! Standard apartment of GL_n: facets of the closed standard alcove, the
//! graded pieces G_x, V_x at rational points, and finitely checkable
//! certificates for (in)stability of functionals.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::exact_values::Q;
use crate::local_fields::{FieldError, FiniteField, Fq};

/// Largest group enumerated by the brute-force checks.
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 25;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum BuildingError {
    #[error("invalid facet: {0}")]
    InvalidFacet(String),
    #[error("empty facet: t = 1 with a single block")]
    EmptyFacet,
    #[error("enumeration of {size} elements exceeds the limit {limit}")]
    SizeGuardExceeded { size: u128, limit: u128 },
    #[error("point is a barycenter: every arrow of the cyclic quiver is present")]
    NotNonBarycenter,
    #[error("functional does not lie in V_x: {0}")]
    BadFunctional(String),
    #[error("bad point: {0}")]
    BadPoint(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

type Result<T> = std::result::Result<T, BuildingError>;

fn q_str<S: Serializer>(v: &[Q], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

fn frac(x: Q) -> Q {
    x - x.floor()
}

// ---------------------------------------------------------------------------
// Facets

/// Facet cut out by ψ_j = 0 inside each block of sizes m, plus ψ_n = 0 when t = 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FacetSpec {
    pub t: u8,
    pub m: Vec<usize>,
}

impl FacetSpec {
    pub fn new(t: u8, m: Vec<usize>) -> Result<Self> {
        if t > 1 {
            return Err(BuildingError::InvalidFacet(format!("t = {t}")));
        }
        if m.is_empty() || m.contains(&0) {
            return Err(BuildingError::InvalidFacet(format!("block sizes {m:?}")));
        }
        if t == 1 && m.len() == 1 {
            return Err(BuildingError::EmptyFacet);
        }
        Ok(Self { t, m })
    }

    pub fn n(&self) -> usize {
        self.m.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.m.len()
    }

    pub fn is_alcove(&self) -> bool {
        self.t == 0 && self.m.iter().all(|&b| b == 1)
    }

    /// Block sizes of G_x̄; for t = 1 the first and last blocks merge.
    pub fn merged_blocks(&self) -> Vec<usize> {
        let k = self.k();
        if self.t == 0 || k < 2 {
            return self.m.clone();
        }
        let mut b = vec![self.m[0] + self.m[k - 1]];
        b.extend_from_slice(&self.m[1..k - 1]);
        b
    }

    /// Number of free gaps: block differences not forced to vanish.
    fn free_gaps(&self) -> usize {
        if self.t == 0 {
            self.k()
        } else {
            self.k() - 1
        }
    }
}

impl fmt::Display for FacetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m: Vec<String> = self.m.iter().map(|b| b.to_string()).collect();
        write!(f, "t={};m={}", self.t, m.join(","))
    }
}

impl FromStr for FacetSpec {
    type Err = BuildingError;

    /// "t=0;m=2,1" or the short form "0:2,1".
    fn from_str(s: &str) -> Result<Self> {
        let bad = || BuildingError::InvalidFacet(format!("cannot parse {s:?}; expected t=0;m=2,1 or 0:2,1"));
        let (t, m) = match s.split_once(';') {
            Some((t, m)) => (
                t.trim().strip_prefix("t=").ok_or_else(bad)?,
                m.trim().strip_prefix("m=").ok_or_else(bad)?,
            ),
            None => s.split_once(':').ok_or_else(bad)?,
        };
        let t: u8 = t.trim().parse().map_err(|_| bad())?;
        let m = m
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')')
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(t, m)
    }
}

fn compositions(total: usize, parts: usize, out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>) {
    if parts == 0 {
        if total == 0 {
            out.push(cur.clone());
        }
        return;
    }
    for first in 1..=total.saturating_sub(parts - 1) {
        cur.push(first);
        compositions(total - first, parts - 1, out, cur);
        cur.pop();
    }
}

/// Every nonempty facet of the closed standard alcove, as (t, composition of n).
pub fn enumerate_facets(n: usize) -> Vec<FacetSpec> {
    let mut out = vec![];
    for t in 0..=1u8 {
        for k in 1..=n {
            if t == 1 && k == 1 {
                continue;
            }
            let mut comps = vec![];
            compositions(n, k, &mut comps, &mut vec![]);
            out.extend(comps.into_iter().map(|m| FacetSpec { t, m }));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Points

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ApartmentPoint(#[serde(serialize_with = "q_str")] pub Vec<Q>);

impl ApartmentPoint {
    pub fn n(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for ApartmentPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", c.join(", "))
    }
}

impl FromStr for ApartmentPoint {
    type Err = BuildingError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let s = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(s);
        let coords = s
            .split(',')
            .map(|x| Q::from_str(x.trim()).map_err(|_| BuildingError::BadPoint(format!("bad coordinate {x:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if coords.len() < 2 {
            return Err(BuildingError::BadPoint("need at least two coordinates".into()));
        }
        Ok(Self(coords))
    }
}

/// Block i gets −i/k (t = 0) or −i/(k−1) (t = 1).
pub fn barycenter(f: &FacetSpec) -> Result<ApartmentPoint> {
    let f = FacetSpec::new(f.t, f.m.clone())?;
    let den = f.free_gaps() as i128;
    let mut x = vec![];
    for (i, &b) in f.m.iter().enumerate() {
        x.extend(std::iter::repeat_n(Q::new(-(i as i128 + 1), den), b));
    }
    Ok(ApartmentPoint(x))
}

/// Point of f with the given cyclic gaps (k of them for t = 0, k−1 for t = 1,
/// summing to 1), placed like the barycenter so that its last free block sits at −1.
pub fn point_from_gaps(f: &FacetSpec, gaps: &[Q]) -> ApartmentPoint {
    assert_eq!(gaps.len(), f.free_gaps());
    let mut x = vec![];
    let mut s = -gaps[gaps.len() - 1];
    for (i, &b) in f.m.iter().enumerate() {
        x.extend(std::iter::repeat_n(s, b));
        if i + 1 < f.k() {
            s -= gaps[i];
        }
    }
    ApartmentPoint(x)
}

/// Smallest positive value of an affine root at x, by a direct scan.
pub fn r_of_x(x: &ApartmentPoint) -> Q {
    let mut best: Option<Q> = None;
    for (a, &xa) in x.0.iter().enumerate() {
        for (b, &xb) in x.0.iter().enumerate() {
            if a == b {
                continue;
            }
            let f = frac(xa - xb);
            let v = if f.is_zero() { Q::one() } else { f };
            best = Some(best.map_or(v, |c: Q| c.min(v)));
        }
    }
    best.unwrap_or_else(Q::one)
}

/// (dim G_x, dim V_x) by counting roots, including the Cartan part of V_x
/// when r(x) is an integer.
pub fn root_count_dims(x: &ApartmentPoint) -> (usize, usize) {
    let n = x.n();
    let r = r_of_x(x);
    let mut g = n;
    let mut v = if r.is_integer() { n } else { 0 };
    for (a, &xa) in x.0.iter().enumerate() {
        for (b, &xb) in x.0.iter().enumerate() {
            if a == b {
                continue;
            }
            g += (xa - xb).is_integer() as usize;
            v += (xa - xb - r).is_integer() as usize;
        }
    }
    (g, v)
}

// ---------------------------------------------------------------------------
// Graded quotient

/// Cyclic-quiver normal form: blocks are the classes of coordinates mod 1,
/// ordered by decreasing fractional part; arrow i goes from block i to
/// block i+1 (mod K) and is present iff that gap equals r(x).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GradedQuotient {
    #[serde(serialize_with = "q_str_one")]
    pub r: Q,
    pub blocks: Vec<usize>,
    pub block_of: Vec<usize>,
    #[serde(serialize_with = "q_str")]
    pub gaps: Vec<Q>,
    pub arrows: Vec<bool>,
    pub dim_g: usize,
    pub dim_v: usize,
}

fn q_str_one<S: Serializer>(v: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl GradedQuotient {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// (rows, cols) of the matrix carried by arrow i.
    pub fn arrow_shape(&self, i: usize) -> (usize, usize) {
        (self.blocks[i], self.blocks[(i + 1) % self.k()])
    }

    pub fn missing_arrows(&self) -> Vec<usize> {
        (0..self.k()).filter(|&i| !self.arrows[i]).collect()
    }

    pub fn is_barycenter(&self) -> bool {
        self.arrows.iter().all(|&a| a)
    }

    pub fn dim_gap(&self) -> i64 {
        self.dim_g as i64 - self.dim_v as i64
    }
}

pub fn graded_quotient(x: &ApartmentPoint) -> GradedQuotient {
    let fr: Vec<Q> = x.0.iter().map(|&c| frac(c)).collect();
    let levels: Vec<Q> = fr.iter().copied().collect::<BTreeSet<_>>().into_iter().rev().collect();
    let k = levels.len();
    let block_of: Vec<usize> = fr.iter().map(|c| levels.iter().position(|l| l == c).unwrap()).collect();
    let mut blocks = vec![0; k];
    for &b in &block_of {
        blocks[b] += 1;
    }
    let mut gaps: Vec<Q> = (0..k.saturating_sub(1)).map(|i| levels[i] - levels[i + 1]).collect();
    gaps.push(Q::one() - (levels[0] - levels[k - 1]));
    let r = *gaps.iter().min().unwrap();
    let arrows: Vec<bool> = gaps.iter().map(|&d| d == r).collect();
    let dim_g = blocks.iter().map(|b| b * b).sum();
    let dim_v = (0..k).filter(|&i| arrows[i]).map(|i| blocks[i] * blocks[(i + 1) % k]).sum();
    GradedQuotient { r, blocks, block_of, gaps, arrows, dim_g, dim_v }
}

/// ½·Σ_cyclic (b_i − b_{i+1})² over the merged block sizes of f.
pub fn dim_gap(f: &FacetSpec) -> Q {
    let b = f.merged_blocks();
    let k = b.len();
    let s: i128 = (0..k).map(|i| (b[i] as i128 - b[(i + 1) % k] as i128).pow(2)).sum();
    Q::new(s, 2)
}

/// The vanishing criterion stated in terms of the original m.
pub fn gap_vanishes_by_rule(f: &FacetSpec) -> bool {
    let k = f.k();
    if f.t == 0 {
        f.m.iter().all(|&b| b == f.m[0])
    } else if k == 2 {
        true
    } else {
        f.m[1..k - 1].iter().all(|&b| b == f.m[0] + f.m[k - 1])
    }
}

// ---------------------------------------------------------------------------
// Matrices over F_q

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FqMat {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<Fq>,
}

impl FqMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, a: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn elementary(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.set(i, j, 1);
        m
    }

    /// Single Jordan block with eigenvalue c.
    pub fn jordan(n: usize, c: Fq) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, c);
            if i + 1 < n {
                m.set(i, i + 1, 1);
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> Fq {
        self.a[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Fq) {
        self.a[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().all(|&x| x == 0)
    }

    pub fn mul(&self, o: &Self, ff: &FiniteField) -> Self {
        assert_eq!(self.cols, o.rows);
        let mut m = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut s = 0;
                for l in 0..self.cols {
                    s = ff.add(s, ff.mul(self.get(i, l), o.get(l, j)));
                }
                m.set(i, j, s);
            }
        }
        m
    }

    pub fn sub_scalar(&self, c: Fq, ff: &FiniteField) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m.set(i, i, ff.sub(m.get(i, i), c));
        }
        m
    }

    /// Row echelon form; returns (rank, determinant if square).
    fn eliminate(&self, ff: &FiniteField) -> (usize, Fq) {
        let mut m = self.clone();
        let mut det: Fq = 1;
        let mut rank = 0;
        for col in 0..m.cols {
            let Some(p) = (rank..m.rows).find(|&r| m.get(r, col) != 0) else {
                det = 0;
                continue;
            };
            if p != rank {
                for j in 0..m.cols {
                    m.a.swap(p * m.cols + j, rank * m.cols + j);
                }
                det = ff.neg(det);
            }
            let pv = m.get(rank, col);
            det = ff.mul(det, pv);
            let inv = ff.inv(pv);
            for r in rank + 1..m.rows {
                let f = ff.mul(m.get(r, col), inv);
                if f != 0 {
                    for j in col..m.cols {
                        let v = ff.sub(m.get(r, j), ff.mul(f, m.get(rank, j)));
                        m.set(r, j, v);
                    }
                }
            }
            rank += 1;
        }
        (rank, if self.rows == self.cols && rank == self.rows { det } else { 0 })
    }

    pub fn rank(&self, ff: &FiniteField) -> usize {
        self.eliminate(ff).0
    }

    pub fn det(&self, ff: &FiniteField) -> Fq {
        assert_eq!(self.rows, self.cols);
        self.eliminate(ff).1
    }

    /// Ranks of (M − c)^j for j = 1..=n; these pin down the c-part of the Jordan type.
    pub fn rank_sequence(&self, c: Fq, ff: &FiniteField) -> Vec<usize> {
        let base = self.sub_scalar(c, ff);
        let mut p = base.clone();
        let mut out = vec![];
        for _ in 0..self.rows {
            out.push(p.rank(ff));
            p = p.mul(&base, ff);
        }
        out
    }
}

/// g·X == X·h, checked entrywise with early exit.
fn intertwines(g: &FqMat, x: &FqMat, h: &FqMat, ff: &FiniteField) -> bool {
    for i in 0..x.rows {
        for j in 0..x.cols {
            let mut l = 0;
            let mut r = 0;
            for c in 0..x.rows {
                l = ff.add(l, ff.mul(g.get(i, c), x.get(c, j)));
            }
            for c in 0..x.cols {
                r = ff.add(r, ff.mul(x.get(i, c), h.get(c, j)));
            }
            if l != r {
                return false;
            }
        }
    }
    true
}

/// All of GL_b(F_q), by filtering every b×b matrix.
/// |GL_b(F_q)|.
pub fn gl_order(b: usize, q: u64) -> u128 {
    let qb = (q as u128).pow(b as u32);
    (0..b as u32).map(|i| qb - (q as u128).pow(i)).product()
}

pub fn gl_elements(b: usize, ff: &FiniteField) -> Result<Vec<FqMat>> {
    let q = ff.q() as u128;
    let total = q.checked_pow((b * b) as u32).unwrap_or(u128::MAX);
    if total > BRUTE_FORCE_LIMIT {
        return Err(BuildingError::SizeGuardExceeded { size: total, limit: BRUTE_FORCE_LIMIT });
    }
    let mut out = vec![];
    let mut m = FqMat::zeros(b, b);
    'outer: loop {
        if m.det(ff) != 0 {
            out.push(m.clone());
        }
        for e in m.a.iter_mut() {
            *e += 1;
            if u64::from(*e) < ff.q() {
                continue 'outer;
            }
            *e = 0;
        }
        break;
    }
    Ok(out)
}

/// Counts tuples (g_1..g_K) ∈ ∏ GL_{b_i}(F_q) with g_i X = X g_{i+1} for every
/// test (arrow i, X). Exhaustive, with pruning once both ends of an arrow are fixed.
fn count_fixing(gq: &GradedQuotient, tests: &[(usize, FqMat)], ff: &FiniteField) -> Result<(u128, u128)> {
    let k = gq.k();
    let groups: Vec<Vec<FqMat>> = gq.blocks.iter().map(|&b| gl_elements(b, ff)).collect::<Result<_>>()?;
    let order = groups.iter().try_fold(1u128, |acc, g| acc.checked_mul(g.len() as u128)).unwrap_or(u128::MAX);
    if order > BRUTE_FORCE_LIMIT {
        return Err(BuildingError::SizeGuardExceeded { size: order, limit: BRUTE_FORCE_LIMIT });
    }
    // Tests become checkable once max(i, i+1 mod K) is assigned.
    let mut ready: Vec<Vec<&(usize, FqMat)>> = vec![vec![]; k];
    for t in tests {
        let (i, j) = (t.0, (t.0 + 1) % k);
        ready[i.max(j)].push(t);
    }
    fn go(
        depth: usize,
        chosen: &mut Vec<usize>,
        groups: &[Vec<FqMat>],
        ready: &[Vec<&(usize, FqMat)>],
        ff: &FiniteField,
    ) -> u128 {
        let k = groups.len();
        if depth == k {
            return 1;
        }
        let mut count = 0;
        for idx in 0..groups[depth].len() {
            chosen.push(idx);
            let ok = ready[depth].iter().all(|(i, x)| {
                let g = &groups[*i][chosen[*i]];
                let j = (i + 1) % k;
                let h = &groups[j][chosen[j]];
                intertwines(g, x, h, ff)
            });
            if ok {
                count += go(depth + 1, chosen, groups, ready, ff);
            }
            chosen.pop();
        }
        count
    }
    let fixed = go(0, &mut vec![], &groups, &ready, ff);
    Ok((order, fixed))
}

// ---------------------------------------------------------------------------
// Functionals

/// A point of V̌_x(F_q) ≅ V_x(F_q): one matrix per present arrow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalOverFq {
    pub q: u64,
    pub arrows: Vec<Option<FqMat>>,
}

impl FunctionalOverFq {
    /// Fills the present arrows row by row from `entries` (length dim V_x).
    pub fn from_entries(gq: &GradedQuotient, q: u64, entries: &[Fq]) -> Self {
        assert_eq!(entries.len(), gq.dim_v);
        let mut it = entries.iter().copied();
        let arrows = (0..gq.k())
            .map(|i| {
                gq.arrows[i].then(|| {
                    let (r, c) = gq.arrow_shape(i);
                    FqMat { rows: r, cols: c, a: it.by_ref().take(r * c).collect() }
                })
            })
            .collect();
        Self { q, arrows }
    }

    pub fn constant(gq: &GradedQuotient, q: u64, c: Fq) -> Self {
        Self::from_entries(gq, q, &vec![c; gq.dim_v])
    }

    fn tests(&self) -> Vec<(usize, FqMat)> {
        self.arrows.iter().enumerate().filter_map(|(i, a)| a.clone().map(|m| (i, m))).collect()
    }

    /// Support lies in V_x and every shape matches.
    pub fn lies_in(&self, gq: &GradedQuotient) -> bool {
        self.arrows.len() == gq.k()
            && self.arrows.iter().enumerate().all(|(i, a)| match a {
                Some(m) => gq.arrows[i] && (m.rows, m.cols) == gq.arrow_shape(i),
                None => !gq.arrows[i],
            })
    }
}

/// Every functional on V_x over F_q if there are at most `full_limit`, else `cap` random ones.
pub fn functionals_over<R: Rng>(
    gq: &GradedQuotient,
    ff: &FiniteField,
    full_limit: u128,
    cap: usize,
    rng: &mut R,
) -> Vec<FunctionalOverFq> {
    let q = ff.q();
    let total = (q as u128).checked_pow(gq.dim_v as u32).unwrap_or(u128::MAX);
    if total <= full_limit {
        let mut out = vec![];
        let mut e: Vec<Fq> = vec![0; gq.dim_v];
        'outer: loop {
            out.push(FunctionalOverFq::from_entries(gq, q, &e));
            for x in e.iter_mut() {
                *x += 1;
                if u64::from(*x) < q {
                    continue 'outer;
                }
                *x = 0;
            }
            break;
        }
        out
    } else {
        (0..cap)
            .map(|_| {
                let e: Vec<Fq> = (0..gq.dim_v).map(|_| ff.random(rng)).collect();
                FunctionalOverFq::from_entries(gq, q, &e)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Certificates

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StabilizerCheck {
    pub q: u64,
    pub group_order: u128,
    pub stabilizer_order: u128,
    pub scalar_order: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Certificate {
    /// Affine generic functional whose stabilizer is exactly the scalars over each field.
    StableExists { functional: FunctionalOverFq, checks: Vec<StabilizerCheck> },
    /// dim G_x − dim V_x > 0 forces stabilizers of dimension ≥ 2 > dim ker N.
    NoStableDimGap { dim_g: usize, dim_v: usize, kernel_dim: usize },
    /// Equal blocks of size m > 1: products X_1⋯X_K and W_1⋯W_K with the same
    /// determinant and different Jordan types.
    NoStableJordanWitness {
        m: usize,
        x: Vec<FqMat>,
        w: Vec<FqMat>,
        det: Fq,
        eigenvalue: Fq,
        x_ranks: Vec<usize>,
        w_ranks: Vec<usize>,
    },
    /// χ(s) = (s^{b_1}, …, s^{b_K}) contracts every present arrow to 0.
    UnstableCocharacter { missing: usize, weights: Vec<i64>, exponents: Vec<i64> },
    /// Only scalars act trivially: brute force over F_q plus a q-free probe system.
    KernelIsScalars { q: u64, group_order: u128, kernel_order: u128, probe_nullity: usize },
}

impl Certificate {
    pub fn kind(&self) -> &'static str {
        match self {
            Certificate::StableExists { .. } => "StableExists",
            Certificate::NoStableDimGap { .. } => "NoStableDimGap",
            Certificate::NoStableJordanWitness { .. } => "NoStableJordanWitness",
            Certificate::UnstableCocharacter { .. } => "UnstableCocharacter",
            Certificate::KernelIsScalars { .. } => "KernelIsScalars",
        }
    }

    /// Re-checks the certificate against the point it was issued for.
    pub fn verify(&self, x: &ApartmentPoint) -> Result<bool> {
        let gq = graded_quotient(x);
        Ok(match self {
            Certificate::StableExists { functional, checks } => {
                let fresh = stable_checks(&gq, functional, checks.iter().map(|c| c.q))?;
                functional.lies_in(&gq)
                    && functional.arrows.iter().flatten().all(|m| m.a.iter().all(|&e| e != 0))
                    && !checks.is_empty()
                    && fresh == *checks
                    && checks.iter().all(|c| c.stabilizer_order == c.scalar_order && c.scalar_order == (c.q - 1) as u128)
            }
            Certificate::NoStableDimGap { dim_g, dim_v, kernel_dim } => {
                let (g, v) = root_count_dims(x);
                (g, v) == (*dim_g, *dim_v) && g > v && *kernel_dim == 1 && probe_nullity(&gq) == 1
            }
            Certificate::NoStableJordanWitness { m, x: xs, w, det, eigenvalue, x_ranks, w_ranks } => {
                let ff = FiniteField::get(3)?;
                let prod = |ms: &[FqMat]| ms.iter().skip(1).fold(ms[0].clone(), |acc, b| acc.mul(b, &ff));
                gq.is_barycenter()
                    && gq.dim_gap() == 0
                    && gq.blocks.iter().all(|b| b == m)
                    && *m > 1
                    && xs.len() == gq.k()
                    && w.len() == gq.k()
                    && xs.iter().chain(w).all(|a| (a.rows, a.cols) == (*m, *m))
                    && {
                        let (px, pw) = (prod(xs), prod(w));
                        px.det(&ff) == *det
                            && pw.det(&ff) == *det
                            && px.rank_sequence(*eigenvalue, &ff) == *x_ranks
                            && pw.rank_sequence(*eigenvalue, &ff) == *w_ranks
                            && x_ranks != w_ranks
                    }
            }
            Certificate::UnstableCocharacter { missing, weights, exponents } => {
                let k = gq.k();
                weights.len() == k
                    && !gq.arrows[*missing]
                    && (0..k).all(|i| exponents[i] == weights[i] - weights[(i + 1) % k])
                    && (0..k).filter(|&i| gq.arrows[i]).all(|i| exponents[i] > 0)
            }
            Certificate::KernelIsScalars { q, group_order, kernel_order, probe_nullity: pn } => {
                let ff = FiniteField::get(*q)?;
                let (g, kern) = count_fixing(&gq, &basis_tests(&gq), &ff)?;
                (g, kern) == (*group_order, *kernel_order) && kern == (*q - 1) as u128 && *pn == 1 && probe_nullity(&gq) == 1
            }
        })
    }
}

fn stable_checks(
    gq: &GradedQuotient,
    lam: &FunctionalOverFq,
    qs: impl Iterator<Item = u64>,
) -> Result<Vec<StabilizerCheck>> {
    let tests = lam.tests();
    qs.map(|q| {
        let ff = FiniteField::get(q)?;
        let (group_order, stabilizer_order) = count_fixing(gq, &tests, &ff)?;
        Ok(StabilizerCheck { q, group_order, stabilizer_order, scalar_order: (q - 1) as u128 })
    })
    .collect()
}

fn basis_tests(gq: &GradedQuotient) -> Vec<(usize, FqMat)> {
    let mut out = vec![];
    for i in (0..gq.k()).filter(|&i| gq.arrows[i]) {
        let (r, c) = gq.arrow_shape(i);
        for a in 0..r {
            for b in 0..c {
                out.push((i, FqMat::elementary(r, c, a, b)));
            }
        }
    }
    out
}

/// Probe matrices for an s1×s2 arrow: identity strips, the remainder corner,
/// and the elementary matrices inside those positions.
pub fn probes(s1: usize, s2: usize) -> Vec<Vec<Vec<i64>>> {
    let zero = |r: usize, c: usize| vec![vec![0i64; c]; r];
    if s1 > s2 {
        let t = probes(s2, s1);
        return t
            .into_iter()
            .map(|m| (0..s1).map(|i| (0..s2).map(|j| m[j][i]).collect()).collect())
            .collect();
    }
    let mut out = vec![];
    if s1 == s2 {
        for a in 0..s1 {
            for b in 0..s2 {
                let mut y = zero(s1, s2);
                y[a][b] = 1;
                out.push(y);
            }
        }
        return out;
    }
    let (blocks, rem) = (s2 / s1, s2 % s1);
    for j in 0..blocks {
        let mut y = zero(s1, s2);
        for a in 0..s1 {
            y[a][j * s1 + a] = 1;
        }
        out.push(y);
    }
    if rem > 0 {
        let mut y = zero(s1, s2);
        for a in 0..rem {
            y[a][s2 - rem + a] = 1;
        }
        out.push(y);
    }
    for j in 0..blocks {
        for a in 0..s1 {
            for b in 0..s1 {
                let mut y = zero(s1, s2);
                y[a][j * s1 + b] = 1;
                out.push(y);
            }
        }
    }
    for a in 0..rem {
        for b in 0..rem {
            let mut y = zero(s1, s2);
            y[a][s2 - rem + b] = 1;
            out.push(y);
        }
    }
    out
}

/// Dimension over Q of {(h_1..h_K) : h_i Y = Y h_{i+1} for every probe Y of
/// every present arrow}; 1 means only scalars.
pub fn probe_nullity(gq: &GradedQuotient) -> usize {
    let k = gq.k();
    let offs: Vec<usize> = gq.blocks.iter().scan(0, |acc, b| {
        let o = *acc;
        *acc += b * b;
        Some(o)
    }).collect();
    let nvars: usize = gq.blocks.iter().map(|b| b * b).sum();
    let var = |blk: usize, a: usize, c: usize| offs[blk] + a * gq.blocks[blk] + c;
    let mut rows: Vec<Vec<Q>> = vec![];
    for i in (0..k).filter(|&i| gq.arrows[i]) {
        let j = (i + 1) % k;
        let (s1, s2) = gq.arrow_shape(i);
        for y in probes(s1, s2) {
            for a in 0..s1 {
                for b in 0..s2 {
                    let mut row = vec![Q::zero(); nvars];
                    for c in 0..s1 {
                        row[var(i, a, c)] += Q::from_integer(y[c][b] as i128);
                    }
                    for c in 0..s2 {
                        row[var(j, c, b)] -= Q::from_integer(y[a][c] as i128);
                    }
                    if row.iter().any(|e| !e.is_zero()) {
                        rows.push(row);
                    }
                }
            }
        }
    }
    nvars - rational_rank(rows, nvars)
}

fn rational_rank(mut rows: Vec<Vec<Q>>, ncols: usize) -> usize {
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else { continue };
        rows.swap(p, rank);
        let pivot = rows[rank][col];
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let f = rows[r][col] / pivot;
                for c in col..ncols {
                    let v = rows[rank][c] * f;
                    rows[r][c] -= v;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Brute-force kernel of G_x(F_q) → GL(V_x(F_q)), with the probe certificate.
pub fn kernel_of_action(gq: &GradedQuotient, q: u64) -> Result<Certificate> {
    let ff = FiniteField::get(q)?;
    let (group_order, kernel_order) = count_fixing(gq, &basis_tests(gq), &ff)?;
    Ok(Certificate::KernelIsScalars { q, group_order, kernel_order, probe_nullity: probe_nullity(gq) })
}

/// Certificate for the barycenter of f: StableExists for alcoves (brute force
/// over F_q and F_{q²}), otherwise the gap or Jordan-type obstruction.
pub fn stability_certificate(f: &FacetSpec, q: u64) -> Result<Certificate> {
    let x = barycenter(f)?;
    let gq = graded_quotient(&x);
    if gq.dim_gap() > 0 {
        return Ok(Certificate::NoStableDimGap { dim_g: gq.dim_g, dim_v: gq.dim_v, kernel_dim: 1 });
    }
    let m = gq.blocks[0];
    if m == 1 {
        let functional = FunctionalOverFq::constant(&gq, q, 1);
        let checks = stable_checks(&gq, &functional, [q, q * q].into_iter())?;
        return Ok(Certificate::StableExists { functional, checks });
    }
    let ff = FiniteField::get(3)?;
    let k = gq.k();
    let xs = vec![FqMat::identity(m); k];
    let mut w = xs.clone();
    w[0] = FqMat::jordan(m, 1);
    let x_ranks = FqMat::identity(m).rank_sequence(1, &ff);
    let w_ranks = FqMat::jordan(m, 1).rank_sequence(1, &ff);
    Ok(Certificate::NoStableJordanWitness { m, x: xs, w, det: 1, eigenvalue: 1, x_ranks, w_ranks })
}

/// Weights b with b_{j+1} = 1 decreasing by one cyclically, for the first
/// missing arrow j; every other arrow gets exponent b_i − b_{i+1} = 1.
pub fn destabilizing_cocharacter(x: &ApartmentPoint, lam: &FunctionalOverFq) -> Result<Certificate> {
    let gq = graded_quotient(x);
    let missing = *gq.missing_arrows().first().ok_or(BuildingError::NotNonBarycenter)?;
    if !lam.lies_in(&gq) {
        return Err(BuildingError::BadFunctional("support or shapes differ from V_x".into()));
    }
    let k = gq.k();
    let mut weights = vec![0i64; k];
    for s in 0..k {
        weights[(missing + 1 + s) % k] = 1 - s as i64;
    }
    let exponents = (0..k).map(|i| weights[i] - weights[(i + 1) % k]).collect();
    Ok(Certificate::UnstableCocharacter { missing, weights, exponents })
}

/// χ(s)·λ → 0: every arrow carrying a nonzero entry of λ has positive exponent.
pub fn cocharacter_kills(cert: &Certificate, gq: &GradedQuotient, lam: &FunctionalOverFq) -> bool {
    let Certificate::UnstableCocharacter { exponents, .. } = cert else { return false };
    lam.lies_in(gq)
        && lam
            .arrows
            .iter()
            .enumerate()
            .all(|(i, a)| a.as_ref().is_none_or(|m| m.is_zero() || exponents[i] > 0))
}

/// Interior points of f with gaps a_i/D, D ≤ max_den, other than the
/// barycenter; at most `cap`, chosen by `rng` when there are more.
pub fn nonbarycenter_samples<R: Rng>(f: &FacetSpec, max_den: usize, cap: usize, rng: &mut R) -> Vec<ApartmentPoint> {
    let parts = f.free_gaps();
    if parts < 2 {
        return vec![];
    }
    let mut seen: BTreeSet<Vec<Q>> = BTreeSet::new();
    for d in parts..=max_den {
        let mut comps = vec![];
        compositions(d, parts, &mut comps, &mut vec![]);
        for c in comps {
            let gaps: Vec<Q> = c.iter().map(|&a| Q::new(a as i128, d as i128)).collect();
            if gaps.iter().any(|g| *g != gaps[0]) {
                seen.insert(gaps);
            }
        }
    }
    let mut all: Vec<Vec<Q>> = seen.into_iter().collect();
    if all.len() > cap {
        all.shuffle(rng);
        all.truncate(cap);
    }
    all.iter().map(|g| point_from_gaps(f, g)).collect()
}

/// Whether x lies in the closed standard alcove (weakly decreasing, spread ≤ 1).
pub fn in_closed_alcove(x: &ApartmentPoint) -> bool {
    x.0.windows(2).all(|w| w[0] >= w[1]) && (x.0[0] - x.0[x.n() - 1]).abs() <= Q::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f(t: u8, m: &[usize]) -> FacetSpec {
        FacetSpec::new(t, m.to_vec()).unwrap()
    }

    #[test]
    fn facet_counts() {
        assert_eq!(enumerate_facets(2), vec![f(0, &[2]), f(0, &[1, 1]), f(1, &[1, 1])]);
        assert_eq!(enumerate_facets(3).len(), 7);
        assert!(!enumerate_facets(3).contains(&FacetSpec { t: 1, m: vec![3] }));
        assert_eq!(FacetSpec::new(1, vec![3]), Err(BuildingError::EmptyFacet));
    }

    #[test]
    fn facet_syntax() {
        assert_eq!("t=0;m=2,2".parse::<FacetSpec>().unwrap(), f(0, &[2, 2]));
        assert_eq!("1:1,2".parse::<FacetSpec>().unwrap(), f(1, &[1, 2]));
        let g = f(1, &[2, 1, 1]);
        assert_eq!(g.to_string().parse::<FacetSpec>().unwrap(), g);
        assert!("t=0,m=2".parse::<FacetSpec>().is_err());
        assert_eq!(gl_order(2, 3), 48);
        assert_eq!(gl_order(1, 9), 8);
    }

    #[test]
    fn barycenters_and_r() {
        let x = barycenter(&f(0, &[1, 1, 1])).unwrap();
        assert_eq!(x.0, vec![Q::new(-1, 3), Q::new(-2, 3), Q::from_integer(-1)]);
        assert_eq!(r_of_x(&x), Q::new(1, 3));
        let y = barycenter(&f(0, &[2, 1])).unwrap();
        assert_eq!(y.0, vec![Q::new(-1, 2), Q::new(-1, 2), Q::from_integer(-1)]);
        assert_eq!(r_of_x(&barycenter(&f(0, &[2, 2])).unwrap()), Q::new(1, 2));
        assert_eq!(r_of_x(&ApartmentPoint(vec![Q::zero(); 3])), Q::one());
        assert!(barycenter(&FacetSpec { t: 1, m: vec![2] }).is_err());
    }

    #[test]
    fn quotient_examples() {
        let a = graded_quotient(&barycenter(&f(0, &[1, 1, 1])).unwrap());
        assert_eq!((a.dim_g, a.dim_v, a.blocks.clone()), (3, 3, vec![1, 1, 1]));
        let b = graded_quotient(&barycenter(&f(0, &[2, 2])).unwrap());
        assert_eq!((b.dim_g, b.dim_v), (8, 8));
        let c = graded_quotient(&barycenter(&f(0, &[1, 2])).unwrap());
        assert_eq!((c.dim_g, c.dim_v, c.dim_gap()), (5, 4, 1));
        assert_eq!(dim_gap(&f(0, &[2, 2])), Q::zero());
        assert_eq!(dim_gap(&f(0, &[1, 2])), Q::one());
        assert_eq!(dim_gap(&f(0, &[3, 1])), Q::from_integer(4));
    }

    #[test]
    fn gap_matches_root_count_small() {
        for n in 2..=5 {
            for fs in enumerate_facets(n) {
                let x = barycenter(&fs).unwrap();
                let gq = graded_quotient(&x);
                assert_eq!(root_count_dims(&x), (gq.dim_g, gq.dim_v), "{fs}");
                assert_eq!(dim_gap(&fs), Q::from_integer(gq.dim_gap() as i128), "{fs}");
                assert_eq!(dim_gap(&fs).is_zero(), gap_vanishes_by_rule(&fs), "{fs}");
                assert_eq!(gq.r, r_of_x(&x));
                assert!(gq.is_barycenter());
                assert!(in_closed_alcove(&x));
            }
        }
    }

    #[test]
    fn kernels() {
        let gq = graded_quotient(&barycenter(&f(0, &[1, 1])).unwrap());
        let c = kernel_of_action(&gq, 3).unwrap();
        assert_eq!(c, Certificate::KernelIsScalars { q: 3, group_order: 4, kernel_order: 2, probe_nullity: 1 });
        let gq = graded_quotient(&barycenter(&f(0, &[2, 2])).unwrap());
        let c = kernel_of_action(&gq, 3).unwrap();
        assert!(matches!(c, Certificate::KernelIsScalars { group_order: 2304, kernel_order: 2, .. }));
        for (s1, s2) in [(1, 3), (2, 3), (2, 5), (3, 2), (3, 3)] {
            let gq = GradedQuotient {
                r: Q::new(1, 2),
                blocks: vec![s1, s2],
                block_of: vec![],
                gaps: vec![],
                arrows: vec![true, false],
                dim_g: 0,
                dim_v: 0,
            };
            assert_eq!(probe_nullity(&gq), 1, "{s1}x{s2}");
        }
    }

    #[test]
    fn certificates() {
        let a = stability_certificate(&f(0, &[1, 1, 1]), 3).unwrap();
        assert_eq!(a.kind(), "StableExists");
        assert!(a.verify(&barycenter(&f(0, &[1, 1, 1])).unwrap()).unwrap());
        let b = stability_certificate(&f(0, &[2, 2]), 3).unwrap();
        assert_eq!(b.kind(), "NoStableJordanWitness");
        assert!(b.verify(&barycenter(&f(0, &[2, 2])).unwrap()).unwrap());
        let c = stability_certificate(&f(0, &[1, 2]), 3).unwrap();
        assert_eq!(c, Certificate::NoStableDimGap { dim_g: 5, dim_v: 4, kernel_dim: 1 });
        assert!(c.verify(&barycenter(&f(0, &[1, 2])).unwrap()).unwrap());
        // The wrong kind for the point fails verification.
        assert!(!c.verify(&barycenter(&f(0, &[2, 2])).unwrap()).unwrap());
    }

    #[test]
    fn cocharacter_examples() {
        // k = 3, gaps (1/2, 1/4, 1/4): arrow 0 (X_1) is missing.
        let fs = f(0, &[1, 1, 1]);
        let x = point_from_gaps(&fs, &[Q::new(1, 2), Q::new(1, 4), Q::new(1, 4)]);
        let gq = graded_quotient(&x);
        assert_eq!(gq.missing_arrows(), vec![0]);
        let lam = FunctionalOverFq::constant(&gq, 3, 2);
        let c = destabilizing_cocharacter(&x, &lam).unwrap();
        assert!(c.verify(&x).unwrap() && cocharacter_kills(&c, &gq, &lam));
        // Missing X_2 gives b = (0, −1, 1).
        let x = point_from_gaps(&fs, &[Q::new(1, 4), Q::new(1, 2), Q::new(1, 4)]);
        let gq = graded_quotient(&x);
        let lam = FunctionalOverFq::constant(&gq, 3, 1);
        let Certificate::UnstableCocharacter { weights, .. } = destabilizing_cocharacter(&x, &lam).unwrap() else {
            panic!()
        };
        assert_eq!(weights, vec![0, -1, 1]);
        // k = 2 missing X_2 gives (1, 0).
        let x = point_from_gaps(&f(0, &[1, 1]), &[Q::new(1, 3), Q::new(2, 3)]);
        let gq = graded_quotient(&x);
        let lam = FunctionalOverFq::constant(&gq, 3, 1);
        let Certificate::UnstableCocharacter { weights, .. } = destabilizing_cocharacter(&x, &lam).unwrap() else {
            panic!()
        };
        assert_eq!(weights, vec![1, 0]);
        let bx = barycenter(&fs).unwrap();
        let bg = graded_quotient(&bx);
        let lam = FunctionalOverFq::constant(&bg, 3, 1);
        assert_eq!(destabilizing_cocharacter(&bx, &lam), Err(BuildingError::NotNonBarycenter));
    }

    #[test]
    fn samples_are_nonbarycenters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fs = f(0, &[2, 1, 1]);
        let pts = nonbarycenter_samples(&fs, 12, 1000, &mut rng);
        assert!(!pts.is_empty());
        let bar = graded_quotient(&barycenter(&fs).unwrap());
        for x in pts {
            let gq = graded_quotient(&x);
            assert!(!gq.is_barycenter());
            assert!(in_closed_alcove(&x));
            assert_eq!(gq.blocks, bar.blocks);
            assert!(gq.dim_v < bar.dim_v);
        }
        assert!(nonbarycenter_samples(&f(1, &[1, 2]), 12, 10, &mut rng).is_empty());
    }

    #[test]
    fn jordan_ranks() {
        let ff = FiniteField::get(5).unwrap();
        assert_eq!(FqMat::jordan(3, 2).rank_sequence(2, &ff), vec![2, 1, 0]);
        assert_eq!(FqMat::identity(3).det(&ff), 1);
        assert_eq!(gl_elements(2, &ff).unwrap().len(), 480);
    }
}
