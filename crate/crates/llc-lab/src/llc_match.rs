//! Matching automorphic and Galois ε-factors, and recovering a datum from its
//! table of twisted ε-factors.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::automorphic::{closed_form_epsilon, gamma_automorphic, AutError, SSCDatum, ZetaOptions};
use crate::exact_values::{EpsMonomial, RootOfUnity};
use crate::galois::{build_parameter, det_parameter, epsilon_galois, GaloisError, LambdaMode};
use crate::local_fields::{FiniteField, Fq, TameChar};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MatchError {
    #[error(transparent)]
    Automorphic(#[from] AutError),
    #[error(transparent)]
    Galois(#[from] GaloisError),
    #[error("inconsistent table: {0}")]
    InconsistentTable(String),
}

/// Twist with unit exponent e and value 1 at t.
pub fn unit_twist(q: u64, e: u64) -> TameChar {
    TameChar::new(q, e as i64, RootOfUnity::one())
}

/// All q−1 unit-part twists.
pub fn unit_twists(q: u64) -> Vec<TameChar> {
    (0..q - 1).map(|e| unit_twist(q, e)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpsSource {
    Closed,
    Galois,
    Integral,
}

/// ε(s, π × λ, ψ) keyed by the unit exponent of λ (λ(t) = 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTable {
    pub n: usize,
    pub q: u64,
    pub entries: BTreeMap<u64, EpsMonomial>,
}

impl EpsilonTable {
    pub fn generate(d: &SSCDatum, exps: &[u64], source: EpsSource) -> Result<Self, MatchError> {
        let pd = build_parameter(d, LambdaMode::Formal);
        let opts = ZetaOptions { h_fold: true, ..ZetaOptions::default() };
        let mut entries = BTreeMap::new();
        for &e in exps {
            let lam = unit_twist(d.q, e);
            let eps = match source {
                EpsSource::Closed => closed_form_epsilon(d, &lam),
                EpsSource::Galois => epsilon_galois(&pd, &lam)?,
                EpsSource::Integral => gamma_automorphic(d, &lam, &opts)?,
            };
            entries.insert(e % (d.q - 1), eps);
        }
        Ok(Self { n: d.n, q: d.q, entries })
    }
}

/// What a table pins down: ζ always, ϖ only when the twists separate classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Determination {
    pub zeta: RootOfUnity,
    pub u0: Option<Fq>,
    pub candidates: Vec<Fq>,
    pub datum: Option<SSCDatum>,
}

fn unit_of(eps: &EpsMonomial, q: u64) -> Result<RootOfUnity, MatchError> {
    let bad = |why: &str| MatchError::InconsistentTable(format!("{why}: {eps}"));
    if eps.q != q || eps.q_s != -1 {
        return Err(bad("not of the form c·q^{1/2−s}"));
    }
    let e = eps.with_const(Ratio::new(1, 2)).ok_or_else(|| bad("q-exponent off the half-integer lattice"))?;
    let (a, c) = e.unit.homogeneous().ok_or_else(|| bad("unit is not homogeneous"))?;
    if a != 0 {
        return Err(bad("unit carries Λ"));
    }
    c.as_root_of_unity().ok_or_else(|| bad("unit is not a root of unity"))
}

/// Recovers (ζ, ϖ) from a table containing the trivial twist.
pub fn determine_from_table(t: &EpsilonTable, omega: &TameChar) -> Result<Determination, MatchError> {
    let ff = FiniteField::get(t.q).map_err(AutError::from)?;
    let base = t
        .entries
        .get(&0)
        .ok_or_else(|| MatchError::InconsistentTable("trivial twist missing".into()))?;
    let zeta = unit_of(base, t.q)?;
    let units: BTreeMap<u64, RootOfUnity> =
        t.entries.iter().map(|(&e, eps)| unit_of(eps, t.q).map(|u| (e, u))).collect::<Result<_, _>>()?;
    let candidates: Vec<Fq> = ff
        .units()
        .filter(|&u0| {
            units.iter().all(|(&e, &val)| {
                let lam = unit_twist(t.q, e);
                let expect = lam.at_minus_one().pow(t.n as i64 - 1).mul(lam.at_varpi(u0, &ff)).mul(zeta);
                val == expect
            })
        })
        .filter(|&u0| zeta.pow(t.n as i64) == omega.at_varpi(u0, &ff))
        .collect();
    match candidates.len() {
        0 => Err(MatchError::InconsistentTable("no uniformizer class fits every entry".into())),
        1 => {
            let u0 = candidates[0];
            let datum = SSCDatum::new(t.n, t.q, u0, *omega, zeta)?;
            Ok(Determination { zeta, u0: Some(u0), candidates, datum: Some(datum) })
        }
        _ => Ok(Determination { zeta, u0: None, candidates, datum: None }),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchEntry {
    pub lambda: TameChar,
    pub automorphic: Option<EpsMonomial>,
    pub closed: EpsMonomial,
    pub galois: EpsMonomial,
    pub equal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatchReport {
    pub datum: SSCDatum,
    pub entries: Vec<MatchEntry>,
    pub central_character_ok: bool,
}

impl MatchReport {
    pub fn all_equal(&self) -> bool {
        self.central_character_ok && self.entries.iter().all(|e| e.equal)
    }
}

/// Compares the integral path (when `opts` is given), the closed form and the
/// Galois side for each twist, plus det φ = ω in reduced mode.
pub fn verify_matching(
    d: &SSCDatum,
    twists: &[TameChar],
    opts: Option<&ZetaOptions>,
) -> Result<MatchReport, MatchError> {
    let pd = build_parameter(d, LambdaMode::Formal);
    let mut entries = vec![];
    for lam in twists {
        let closed = closed_form_epsilon(d, lam);
        let galois = epsilon_galois(&pd, lam)?;
        let automorphic = match opts {
            Some(o) => Some(gamma_automorphic(d, lam, o)?),
            None => None,
        };
        let equal = closed == galois && automorphic.as_ref().is_none_or(|a| *a == closed);
        entries.push(MatchEntry { lambda: *lam, automorphic, closed, galois, equal });
    }
    let det = det_parameter(&build_parameter(d, LambdaMode::Reduced))?;
    let central_character_ok = det.unit_exp == d.omega.unit_exp
        && det.at_varpi
            == crate::exact_values::LambdaGraded::from_cyclo(crate::exact_values::CycloNumber::root(d.omega_varpi()));
    Ok(MatchReport { datum: d.clone(), entries, central_character_ok })
}
