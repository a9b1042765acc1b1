//! The acceptance grid. Each criterion is a runner returning a pass/fail line
//! with a count of exact comparisons made.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::automorphic::{
    bruhat_decompose, closed_form_epsilon, expected_psi, expected_psi_tilde, gamma_automorphic, scrambled_class,
    zeta_psi, zeta_psi_tilde, AutError, MatG, SSCDatum, ZetaEngine, ZetaOptions,
};
use crate::building::{
    barycenter, cocharacter_kills, destabilizing_cocharacter, dim_gap, enumerate_facets, functionals_over,
    gap_vanishes_by_rule, gl_order, graded_quotient, in_closed_alcove, kernel_of_action, nonbarycenter_samples,
    root_count_dims, stability_certificate,
};
use crate::exact_values::{collapse_to_monomial, CycloNumber, LambdaGraded, RootOfUnity, Q};
use crate::galois::{build_parameter, gauss_sum_bruteforce, gauss_sum_direct, residue_gauss_sum, twisted, LambdaMode};
use crate::llc_match::{determine_from_table, unit_twists, verify_matching, EpsSource, EpsilonTable};
use crate::local_fields::{norm_e_over_f, oracle, trace_e_over_f, FieldTag, FiniteField, Fq, LaurentElem, TameChar};
use crate::whittaker_pairs::{k_special_family, mirabolic_agreement_family};

pub const SCALE_ENV: &str = "LLC_SELFTEST_SCALE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Small,
    Full,
}

impl Scale {
    /// Reads LLC_SELFTEST_SCALE; unset means full.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var(SCALE_ENV) {
            Ok(v) => v.parse(),
            Err(_) => Ok(Scale::Full),
        }
    }
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "small" => Ok(Scale::Small),
            "full" => Ok(Scale::Full),
            other => Err(format!("unknown scale {other:?}; expected small or full")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub checked: u64,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} criterion {} ({}): {} exact checks, {:.1}s; {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.checked,
            self.seconds,
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str); 8] = [
    (1, "gauss-sum identity"),
    (2, "twisted gauss sums"),
    (3, "zeta-integral closed forms"),
    (4, "llc matching"),
    (5, "determination round-trip"),
    (6, "building stability"),
    (7, "special pairs"),
    (8, "oracle cross-checks"),
];

/// Tally of exact comparisons; keeps the first few failures verbatim.
#[derive(Default)]
struct Tally {
    checked: u64,
    failures: u64,
    first: Vec<String>,
    notes: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
            if self.first.len() < 5 {
                self.first.push(what());
            }
        }
    }

    fn note(&mut self, s: String) {
        self.notes.push(s);
    }
}

type Run = Result<Tally, String>;

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Grid

/// (n, q) with q in the residue-field list and p ∤ n.
pub fn grid(scale: Scale) -> Vec<(usize, u64)> {
    let (qs, nmax): (&[u64], usize) = match scale {
        Scale::Full => (&[3, 5, 7, 9, 11, 13], 6),
        Scale::Small => (&[3, 5, 7], 4),
    };
    let mut out = vec![];
    for &q in qs {
        let p = FiniteField::get(q).expect("grid fields exist").p() as usize;
        for n in 2..=nmax {
            if n % p != 0 {
                out.push((n, q));
            }
        }
    }
    out
}

/// Central characters: every unit exponent with ω(t) = ±1 (full), or
/// exponents {0, 1} (small).
pub fn omegas(q: u64, scale: Scale) -> Vec<TameChar> {
    let exps: Vec<i64> = match scale {
        Scale::Full => (0..q as i64 - 1).collect(),
        Scale::Small => vec![0, 1],
    };
    let mut out = vec![];
    for e in exps {
        for at_t in [RootOfUnity::one(), RootOfUnity::minus_one()] {
            out.push(TameChar::new(q, e, at_t));
        }
    }
    out
}

/// Every datum (u, ω, ζ) for the grid point.
pub fn data(n: usize, q: u64, scale: Scale) -> Result<Vec<SSCDatum>, AutError> {
    let ff = FiniteField::get(q)?;
    let mut out = vec![];
    for u0 in ff.units() {
        for om in omegas(q, scale) {
            for z in SSCDatum::zeta_choices(n, om.at_varpi(u0, &ff)) {
                out.push(SSCDatum::new(n, q, u0, om, z)?);
            }
        }
    }
    Ok(out)
}

/// Data with distinct inducing characters ξ (those differing only in ω(t) coincide).
fn distinct_xi(ds: Vec<SSCDatum>) -> Vec<SSCDatum> {
    let mut seen = HashSet::new();
    ds.into_iter()
        .filter(|d| seen.insert((d.u0, d.omega.unit_exp, d.zeta)))
        .collect()
}

// ---------------------------------------------------------------------------
// Criteria

fn c1(scale: Scale) -> Run {
    let mut t = Tally::default();
    for (n, q) in grid(scale) {
        for d in distinct_xi(data(n, q, scale).map_err(err)?) {
            let pd = build_parameter(&d, LambdaMode::Formal);
            let tau = gauss_sum_bruteforce(&pd.xi, q).map_err(err)?;
            let expect = LambdaGraded::monomial(-1, CycloNumber::root(d.zeta).scale(Q::from_integer(q as i128)));
            t.check(tau == expect, || format!("{d}: tau = {tau}"));
        }
    }
    Ok(t)
}

/// Tame twists: every unit exponent with λ(t) ∈ {1, −1, ζ_{q−1}}.
fn tame_twists(q: u64) -> Vec<TameChar> {
    let mut out = vec![];
    for e in 0..q as i64 - 1 {
        for at_t in [RootOfUnity::one(), RootOfUnity::minus_one(), RootOfUnity::new(1, q - 1)] {
            out.push(TameChar::new(q, e, at_t));
        }
    }
    out
}

fn c2(scale: Scale) -> Run {
    let mut t = Tally::default();
    for (n, q) in grid(scale) {
        let ff = FiniteField::get(q).map_err(err)?;
        let twists = tame_twists(q);
        for d in distinct_xi(data(n, q, scale).map_err(err)?) {
            let xi = build_parameter(&d, LambdaMode::Formal).xi;
            let base = gauss_sum_bruteforce(&xi, q).map_err(err)?;
            for lam in &twists {
                let tw = gauss_sum_bruteforce(&twisted(&xi, lam), q).map_err(err)?;
                let ratio = lam.at_minus_one().pow(n as i64 - 1).mul(lam.at_varpi(d.u0, &ff));
                t.check(tw == base.mul_root(ratio), || format!("{d}, λ = {lam:?}: {tw}"));
            }
        }
    }
    Ok(t)
}

fn c3(scale: Scale) -> Run {
    let mut t = Tally::default();
    let qs: &[u64] = match scale {
        Scale::Full => &[3, 5],
        Scale::Small => &[3],
    };
    for &q in qs {
        let ff = FiniteField::get(q).map_err(err)?;
        let lambdas = [
            TameChar::trivial(q),
            TameChar::new(q, 1, RootOfUnity::one()),
            TameChar::new(q, 0, RootOfUnity::minus_one()),
        ];
        for n in 2..=4usize {
            if n % ff.p() as usize == 0 {
                continue;
            }
            let ds = data(n, q, scale).map_err(err)?;
            for m in [2u32, 3] {
                // Each precision is compared against the next one up as well.
                let engine = |mm: u32| ZetaEngine::cached(n, q, &ZetaOptions { m: mm, ..ZetaOptions::default() });
                let engines = [engine(m).map_err(err)?, engine(m + 1).map_err(err)?];
                for u0 in ff.units() {
                    let aggs = [engines[0].for_u0(u0), engines[1].for_u0(u0)];
                    for a in &aggs {
                        t.check(a.violations == 0, || format!("n={n} q={q} m={m} u={u0}: support violations"));
                    }
                    for d in ds.iter().filter(|d| d.u0 == u0) {
                        for lam in &lambdas {
                            for a in &aggs {
                                let pt = collapse_to_monomial(&a.psi_tilde(d, lam).map_err(err)?).map_err(err)?;
                                let ps = collapse_to_monomial(&a.psi(d, lam).map_err(err)?).map_err(err)?;
                                t.check(pt == expected_psi_tilde(d, lam), || format!("{d} m={m} λ={lam:?}: Ψ̃ = {pt}"));
                                t.check(ps == expected_psi(q), || format!("{d} m={m} λ={lam:?}: Ψ = {ps}"));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(t)
}

fn c4(scale: Scale) -> Run {
    let mut t = Tally::default();
    let opts = ZetaOptions { h_fold: true, ..ZetaOptions::default() };
    for (n, q) in grid(scale) {
        let ff = FiniteField::get(q).map_err(err)?;
        let twists = unit_twists(q);
        let ds = data(n, q, scale).map_err(err)?;
        let engine = ZetaEngine::cached(n, q, &opts).map_err(err)?;
        for u0 in ff.units() {
            let agg = engine.for_u0(u0);
            t.check(agg.violations == 0, || format!("n={n} q={q} u={u0}: support violations"));
            for d in ds.iter().filter(|d| d.u0 == u0) {
                let rep = verify_matching(d, &twists, None).map_err(err)?;
                t.check(rep.central_character_ok, || format!("{d}: det φ ≠ ω"));
                for e in &rep.entries {
                    let g = agg.gamma(d, &e.lambda).map_err(err)?;
                    t.check(e.equal && g == e.closed, || {
                        format!("{d} λ_e={}: integral {g}, closed {}, galois {}", e.lambda.unit_exp, e.closed, e.galois)
                    });
                }
            }
        }
    }
    Ok(t)
}

fn c5(scale: Scale) -> Run {
    let mut t = Tally::default();
    for (n, q) in grid(scale) {
        let exps: Vec<u64> = (0..q - 1).collect();
        // Tables do not see ω beyond ζ^n = ω(ϖ), so distinctness is per ω.
        let mut per_omega: BTreeMap<(u64, u64, u64), (usize, HashSet<String>)> = BTreeMap::new();
        for d in data(n, q, scale).map_err(err)? {
            let table = EpsilonTable::generate(&d, &exps, EpsSource::Galois).map_err(err)?;
            let det = determine_from_table(&table, &d.omega).map_err(err)?;
            t.check(det.datum.as_ref() == Some(&d), || format!("{d}: recovered {:?}", det.datum));
            let key = (d.omega.unit_exp, d.omega.at_t.numerator(), d.omega.at_t.order());
            let slot = per_omega.entry(key).or_default();
            slot.0 += 1;
            slot.1.insert(serde_json::to_string(&table.entries).map_err(err)?);
        }
        for (key, (count, tables)) in per_omega {
            t.check(count == tables.len(), || format!("n={n} q={q} ω={key:?}: {count} data, {} tables", tables.len()));
        }
    }
    Ok(t)
}

fn c6(scale: Scale, rng: &mut ChaCha8Rng) -> Run {
    let mut t = Tally::default();
    let (nmax, cap) = match scale {
        Scale::Full => (8, 24),
        Scale::Small => (5, 6),
    };
    let f3 = FiniteField::get(3).map_err(err)?;
    let mut kernels = 0u64;
    let mut points = 0u64;
    for n in 2..=nmax {
        let facets = enumerate_facets(n);
        t.check(facets.len() == (1 << n) - 1, || format!("n={n}: {} facets", facets.len()));
        let distinct: HashSet<_> = facets.iter().collect();
        t.check(distinct.len() == facets.len(), || format!("n={n}: repeated facets"));
        for f in &facets {
            let x = barycenter(f).map_err(err)?;
            t.check(in_closed_alcove(&x), || format!("{f}: barycenter outside the alcove"));
            let gq = graded_quotient(&x);
            let counted = root_count_dims(&x);
            let b = f.merged_blocks();
            let k = b.len();
            let formula = (
                b.iter().map(|v| v * v).sum::<usize>(),
                (0..k).map(|i| b[i] * b[(i + 1) % k]).sum::<usize>(),
            );
            t.check(formula == counted && (gq.dim_g, gq.dim_v) == counted, || {
                format!("{f}: formula {formula:?}, roots {counted:?}, quiver {:?}", (gq.dim_g, gq.dim_v))
            });
            let gap = dim_gap(f);
            t.check(gap == Q::from_integer(counted.0 as i128 - counted.1 as i128), || format!("{f}: gap {gap}"));
            t.check(gap_vanishes_by_rule(f) == gap.is_zero(), || format!("{f}: gap-zero rule"));

            let cert = stability_certificate(f, 3).map_err(err)?;
            t.check((cert.kind() == "StableExists") == f.is_alcove(), || format!("{f}: {}", cert.kind()));
            t.check(cert.verify(&x).map_err(err)?, || format!("{f}: {} does not verify", cert.kind()));

            let order: u128 = gq.blocks.iter().map(|&b| gl_order(b, 3)).product();
            if order <= 200_000 {
                let kc = kernel_of_action(&gq, 3).map_err(err)?;
                t.check(kc.verify(&x).map_err(err)?, || format!("{f}: kernel certificate"));
                kernels += 1;
            }

            for y in nonbarycenter_samples(f, 12, cap, rng) {
                let gy = graded_quotient(&y);
                t.check(in_closed_alcove(&y) && !gy.is_barycenter(), || format!("{f}: bad sample {y}"));
                let lams = functionals_over(&gy, &f3, 729, 64, rng);
                let cc = destabilizing_cocharacter(&y, &lams[0]).map_err(err)?;
                t.check(cc.verify(&y).map_err(err)?, || format!("{y}: cocharacter does not verify"));
                for lam in &lams {
                    t.check(cocharacter_kills(&cc, &gy, lam), || format!("{y}: λ survives"));
                }
                points += 1;
            }
        }
    }
    t.note(format!("{kernels} kernel checks, {points} nonbarycenter points"));
    Ok(t)
}

fn c7(scale: Scale, rng: &mut ChaCha8Rng) -> Run {
    let mut t = Tally::default();
    let (nmax, words, mixed) = match scale {
        Scale::Full => (4, 10_000, 200),
        Scale::Small => (3, 300, 50),
    };
    for &q in &[3u64, 5] {
        let ff = FiniteField::get(q).map_err(err)?;
        for n in 2..=nmax {
            if n % ff.p() as usize == 0 {
                continue;
            }
            let ds = data(n, q, scale).map_err(err)?;
            let mir = mirabolic_agreement_family(&ds, 2, 1, mixed, rng).map_err(err)?;
            t.checked += mir.checked as u64;
            t.check(mir.ok() && mir.nonzero > 0, || format!("n={n} q={q}: mirabolic {mir:?}"));
            let units: Vec<Fq> = ff.units().collect();
            for (i, &u1) in units.iter().enumerate() {
                for &u2 in &units[i..] {
                    let sub: Vec<SSCDatum> = ds.iter().filter(|d| d.u0 == u1 || d.u0 == u2).cloned().collect();
                    let rep = k_special_family(&sub, u1, u2, 2, words, rng).map_err(err)?;
                    t.checked += (rep.words * sub.len()) as u64;
                    t.check(rep.ok() && rep.nonzero.iter().all(|&c| c > 0), || {
                        format!("n={n} q={q} u=({u1},{u2}): {} violations, first {:?}", rep.violations, rep.first_violation)
                    });
                }
            }
        }
    }
    Ok(t)
}

fn c8(scale: Scale, rng: &mut ChaCha8Rng) -> Run {
    let mut t = Tally::default();
    let (qs, bruhat_count): (&[u64], usize) = match scale {
        Scale::Full => (&[3, 5, 7, 9, 11, 13], 1000),
        Scale::Small => (&[3, 5, 7], 100),
    };

    // |g|² = q for Gauss sums of nontrivial characters of F_q^×, and |τ|² = q²
    // for the sums over o_E^×/(1+p_E²) through the unoptimized term-by-term
    // path (sampled: it is slow, and criterion 1 covers every datum).
    for &q in qs {
        for e in 1..q - 1 {
            let g = residue_gauss_sum(q, e).map_err(err)?;
            t.check(g.mul(&g.conj()) == CycloNumber::from_int(q as i128), || format!("q={q} e={e}: |g|² for g = {g}"));
        }
        let p = FiniteField::get(q).map_err(err)?.p() as usize;
        for n in (2..=3).filter(|n| n % p != 0) {
            let ds = distinct_xi(data(n, q, scale).map_err(err)?);
            let step = ds.len().div_ceil(16);
            for d in ds.into_iter().step_by(step) {
                let xi = build_parameter(&d, LambdaMode::Formal).xi;
                let tau = gauss_sum_direct(&xi, q).map_err(err)?;
                let q2 = CycloNumber::from_int((q * q) as i128);
                let ok = tau.homogeneous().is_some_and(|(_, c)| c.mul(&c.conj()) == q2);
                t.check(ok, || format!("{d}: |τ|² ≠ q² for τ = {tau}"));
            }
        }
    }

    // Trace and norm against the characteristic-polynomial oracle.
    for &q in &[3u64, 5, 7, 9] {
        let ff = FiniteField::get(q).map_err(err)?;
        for n in (2..=4u8).filter(|&n| !(n as u64).is_multiple_of(ff.p())) {
            for _ in 0..100 {
                let u0 = ff.random_unit(rng);
                let v = rng.gen_range(-3..=3);
                let x = LaurentElem::random(rng, &ff, FieldTag::E { n, u0 }, v, 8);
                if x.is_zero() {
                    continue;
                }
                let tr = trace_e_over_f(&x, &ff);
                t.check(tr.agrees_with(&oracle::trace(&x, &ff)), || format!("trace of {x}"));
                let nm = norm_e_over_f(&x, &ff).map_err(err)?;
                t.check(nm.agrees_with(&oracle::norm(&x, &ff).map_err(err)?), || format!("norm of {x}"));
            }
        }
    }

    // Pivot-order independence of the Bruhat class.
    let mut singular = 0;
    for &q in &[3u64, 5] {
        let ff = FiniteField::get(q).map_err(err)?;
        for n in 2..=4 {
            for _ in 0..bruhat_count {
                let g = MatG::random_exact(rng, n, &ff, -2, 2, 8);
                let direct = match bruhat_decompose(&g, &ff, false) {
                    Ok(b) => b.class,
                    Err(AutError::Singular) => {
                        singular += 1;
                        continue;
                    }
                    Err(e) => return Err(err(e)),
                };
                let other = scrambled_class(&g, &ff, rng, 8).map_err(err)?;
                t.check(direct == other, || format!("n={n} q={q}: {direct} vs {other}"));
            }
        }
    }
    t.note(format!("{singular} singular draws skipped"));

    // γ does not see the normalization of the multiplicative measure.
    let base = ZetaOptions { h_fold: true, ..ZetaOptions::default() };
    let scaled = ZetaOptions { measure_scale: Q::new(7, 3), ..base.clone() };
    for (n, q) in [(2usize, 3u64), (2, 5), (3, 5), (4, 3), (4, 5)] {
        let ds = data(n, q, Scale::Small).map_err(err)?;
        for d in ds.iter().step_by(3) {
            for lam in unit_twists(q) {
                let a = gamma_automorphic(d, &lam, &base).map_err(err)?;
                let b = gamma_automorphic(d, &lam, &scaled).map_err(err)?;
                t.check(a == b && a == closed_form_epsilon(d, &lam), || format!("{d}: γ {a} vs rescaled {b}"));
                // Ψ and Ψ̃ each scale linearly with the measure.
                let factor = LambdaGraded::one().scale(scaled.measure_scale);
                let pa = collapse_to_monomial(&zeta_psi(d, &lam, &base).map_err(err)?).map_err(err)?;
                let pb = collapse_to_monomial(&zeta_psi(d, &lam, &scaled).map_err(err)?).map_err(err)?;
                t.check(pa.scale_unit(&factor) == pb, || format!("{d}: Ψ {pa} vs rescaled {pb}"));
                let ta = collapse_to_monomial(&zeta_psi_tilde(d, &lam, &base).map_err(err)?).map_err(err)?;
                let tb = collapse_to_monomial(&zeta_psi_tilde(d, &lam, &scaled).map_err(err)?).map_err(err)?;
                t.check(ta.scale_unit(&factor) == tb, || format!("{d}: Ψ̃ {ta} vs rescaled {tb}"));
            }
        }
    }
    Ok(t)
}

/// Runs one criterion; errors count as failures.
pub fn run(id: u8, scale: Scale, seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(id as u64));
    let res = match id {
        1 => c1(scale),
        2 => c2(scale),
        3 => c3(scale),
        4 => c4(scale),
        5 => c5(scale),
        6 => c6(scale, &mut rng),
        7 => c7(scale, &mut rng),
        8 => c8(scale, &mut rng),
        _ => Err(format!("no criterion {id}")),
    };
    let name = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1);
    let (passed, checked, detail) = match res {
        Ok(t) => {
            let mut detail = if t.failures == 0 {
                "all equal".to_string()
            } else {
                format!("{} failures; first: {}", t.failures, t.first.join(" | "))
            };
            if !t.notes.is_empty() {
                detail = format!("{detail} ({})", t.notes.join("; "));
            }
            (t.failures == 0 && t.checked > 0, t.checked, detail)
        }
        Err(e) => (false, 0, format!("error: {e}")),
    };
    CriterionResult { id, name, passed, checked, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_all(scale: Scale, seed: u64) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|&(id, _)| run(id, scale, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_respects_p_not_dividing_n() {
        let g = grid(Scale::Full);
        assert!(g.contains(&(6, 13)) && g.contains(&(5, 9)));
        assert!(!g.contains(&(3, 3)) && !g.contains(&(6, 9)) && !g.contains(&(5, 5)));
        assert!(grid(Scale::Small).iter().all(|&(n, q)| n <= 4 && q <= 7));
    }

    #[test]
    fn data_counts() {
        // 4 uniformizer classes, 8 central characters, n choices of ζ each.
        assert_eq!(data(2, 5, Scale::Full).unwrap().len(), 4 * 8 * 2);
        assert_eq!(distinct_xi(data(2, 5, Scale::Full).unwrap()).len(), 4 * 4 * 4);
    }

    #[test]
    fn scale_parsing() {
        assert_eq!("small".parse::<Scale>(), Ok(Scale::Small));
        assert!("medium".parse::<Scale>().is_err());
    }
}
