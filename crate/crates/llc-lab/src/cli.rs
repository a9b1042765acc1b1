//! Command-line surface. Every subcommand produces a JSON value; `--format
//! table` renders the same value as aligned text.
//!
//! Exit codes: 0 success, 2 precondition violation, 3 mismatch.

use std::io::Write;
use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::automorphic::{
    bruhat_decompose, closed_form_epsilon, gamma_automorphic, whittaker_eval, AutError, MatG, SSCDatum, ZetaOptions,
};
use crate::building::{
    barycenter, cocharacter_kills, destabilizing_cocharacter, dim_gap, enumerate_facets, functionals_over,
    graded_quotient, r_of_x, stability_certificate, ApartmentPoint, BuildingError, FacetSpec,
};
use crate::exact_values::{CycloNumber, ExactError, LambdaGraded, RootOfUnity, Q};
use crate::galois::{build_parameter, epsilon_galois, gauss_sum_bruteforce, twisted, GaloisError, LambdaMode};
use crate::llc_match::{determine_from_table, unit_twists, verify_matching, EpsSource, EpsilonTable, MatchError};
use crate::local_fields::{FieldError, FieldTag, FiniteField, Fq, LaurentElem, TameChar};
use crate::selftest::{self, Scale};
use crate::whittaker_pairs::{k_special_check, mirabolic_agreement, PairConfig, PairError};

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Parser, Debug)]
#[command(name = "llc-lab", version, about = "Exact checks for simple supercuspidal representations of GL_n")]
pub struct Cli {
    /// Seed for every randomized check.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Integration precision m (unit shells o^×/(1+p^m)).
    #[arg(long, global = true, default_value_t = 2)]
    pub m: u32,
    /// Shell bound B (coordinates from p^{−B}).
    #[arg(long, global = true, default_value_t = 1)]
    pub b: u32,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Side {
    /// Integral path.
    Auto,
    Galois,
    Closed,
    /// All three, exit 3 unless equal.
    All,
}

fn parse_root(s: &str) -> Result<RootOfUnity, String> {
    RootOfUnity::parse(s).map_err(|e| e.to_string())
}

/// A simple supercuspidal datum. Roots of unity are written a/N for exp(2πi a/N);
/// the unit part of ω is its exponent against the stored generator of F_q^×.
#[derive(Args, Debug, Clone)]
pub struct DatumArgs {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub n: usize,
    /// ϖ = u·t, u given by its index in F_q (1..q−1).
    #[arg(long, default_value_t = 1)]
    pub u: Fq,
    #[arg(long, default_value_t = 0)]
    pub omega_e: i64,
    #[arg(long, value_parser = parse_root, default_value = "0/1")]
    pub omega_t: RootOfUnity,
    /// Defaults to the first n-th root of ω(ϖ).
    #[arg(long, value_parser = parse_root)]
    pub zeta: Option<RootOfUnity>,
}

#[derive(Args, Debug, Clone)]
pub struct TwistArgs {
    /// Unit exponent of the tame twist λ.
    #[arg(long)]
    pub twist_e: Option<i64>,
    /// λ(t).
    #[arg(long, value_parser = parse_root)]
    pub twist_t: Option<RootOfUnity>,
}

impl TwistArgs {
    fn given(&self) -> bool {
        self.twist_e.is_some() || self.twist_t.is_some()
    }

    fn lambda(&self, q: u64) -> TameChar {
        TameChar::new(q, self.twist_e.unwrap_or(0), self.twist_t.unwrap_or_else(RootOfUnity::one))
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// ε(s, π × λ, ψ) from the integrals, the Galois side or the closed form.
    Epsilon {
        #[command(flatten)]
        datum: DatumArgs,
        #[command(flatten)]
        twist: TwistArgs,
        #[arg(long, value_enum, default_value_t = Side::All)]
        side: Side,
        /// Integrate h over o^×/(1+p^m) with a stabilization check instead of o^×/(1+p).
        #[arg(long)]
        unfolded: bool,
    },
    /// Brute-force Gauss sum of the inducing character against ζ·Λ^{−1}·q.
    Gauss {
        #[command(flatten)]
        datum: DatumArgs,
        #[command(flatten)]
        twist: TwistArgs,
    },
    /// Facets of the standard alcove, stability certificates, destabilizing cocharacters.
    Facet {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        list: bool,
        /// "t=0;m=2,2" (or "0:2,2").
        #[arg(long)]
        spec: Option<String>,
        #[arg(long)]
        certify: bool,
        /// Apartment point, comma-separated rationals.
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long)]
        destabilize: bool,
        #[arg(long, default_value_t = 3)]
        fq: u64,
    },
    /// Affine Bruhat decomposition of a JSON matrix; with --u and friends also W(g).
    Bruhat {
        #[arg(long)]
        q: u64,
        /// JSON rows; entries are integers or series objects. Prefix @ to read a file.
        #[arg(long)]
        matrix: String,
        #[arg(long)]
        u: Option<Fq>,
        #[arg(long, default_value_t = 0)]
        omega_e: i64,
        #[arg(long, value_parser = parse_root, default_value = "0/1")]
        omega_t: RootOfUnity,
        #[arg(long, value_parser = parse_root)]
        zeta: Option<RootOfUnity>,
    },
    /// Full matching over all unit twists plus the determination round-trip.
    Match {
        #[command(flatten)]
        datum: DatumArgs,
        /// Skip the integral path.
        #[arg(long)]
        no_integral: bool,
    },
    /// Special-pair checks for two data with the same ω.
    Pair {
        #[arg(long)]
        q: u64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        u1: Fq,
        #[arg(long, default_value_t = 1)]
        u2: Fq,
        #[arg(long, default_value_t = 0)]
        omega_e: i64,
        #[arg(long, value_parser = parse_root, default_value = "0/1")]
        omega_t: RootOfUnity,
        #[arg(long, value_parser = parse_root)]
        zeta1: Option<RootOfUnity>,
        #[arg(long, value_parser = parse_root)]
        zeta2: Option<RootOfUnity>,
        #[arg(long, default_value_t = 1000)]
        words: usize,
        #[arg(long, default_value_t = 100)]
        mixed: usize,
    },
    /// The acceptance grid.
    Selftest {
        /// small or full; defaults to LLC_SELFTEST_SCALE, then full.
        #[arg(long)]
        scale: Option<String>,
        /// Restrict to these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Precondition(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

fn field_err(e: FieldError) -> CliError {
    match e {
        FieldError::BadFieldSize(_) | FieldError::WildRamification { .. } | FieldError::ZeroInput => {
            CliError::Precondition(e.to_string())
        }
        other => CliError::Internal(other.into()),
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        field_err(e)
    }
}

impl From<AutError> for CliError {
    fn from(e: AutError) -> Self {
        match e {
            AutError::Field(f) => field_err(f),
            AutError::InvalidDatum(_) | AutError::Singular | AutError::NotInIPlus => CliError::Precondition(e.to_string()),
            other => CliError::Internal(other.into()),
        }
    }
}

impl From<GaloisError> for CliError {
    fn from(e: GaloisError) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::Automorphic(a) => a.into(),
            other => CliError::Internal(other.into()),
        }
    }
}

impl From<PairError> for CliError {
    fn from(e: PairError) -> Self {
        match e {
            PairError::Automorphic(a) => a.into(),
            PairError::Field(f) => field_err(f),
            PairError::Mismatched(_) => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<BuildingError> for CliError {
    fn from(e: BuildingError) -> Self {
        match e {
            BuildingError::Field(f) => field_err(f),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        CliError::Internal(e.into())
    }
}

/// Result of a subcommand: the report and whether every comparison held.
#[derive(Debug)]
pub struct Outcome {
    pub value: Value,
    pub ok: bool,
}

impl Outcome {
    fn ok(value: Value) -> Self {
        Self { value, ok: true }
    }
}

fn to_json<T: serde::Serialize>(x: &T) -> Result<Value, CliError> {
    serde_json::to_value(x).map_err(|e| CliError::Internal(e.into()))
}

impl DatumArgs {
    pub fn datum(&self) -> Result<SSCDatum, CliError> {
        let ff = FiniteField::get(self.q)?;
        if self.u == 0 || self.u as u64 >= self.q {
            return Err(CliError::Precondition(format!("--u {} is not in F_{}^×", self.u, self.q)));
        }
        let omega = TameChar::new(self.q, self.omega_e, self.omega_t);
        let zeta = match self.zeta {
            Some(z) => z,
            None => SSCDatum::zeta_choices(self.n, omega.at_varpi(self.u, &ff))[0],
        };
        Ok(SSCDatum::new(self.n, self.q, self.u, omega, zeta)?)
    }
}

pub fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.cmd {
        Command::Epsilon { datum, twist, side, unfolded } => cmd_epsilon(cli, datum, twist, *side, *unfolded),
        Command::Gauss { datum, twist } => cmd_gauss(datum, twist),
        Command::Facet { n, list, spec, certify, point, destabilize, fq } => {
            cmd_facet(cli, *n, *list, spec.as_deref(), *certify, point.as_deref(), *destabilize, *fq)
        }
        Command::Bruhat { q, matrix, u, omega_e, omega_t, zeta } => cmd_bruhat(*q, matrix, *u, *omega_e, *omega_t, *zeta),
        Command::Match { datum, no_integral } => cmd_match(cli, datum, *no_integral),
        Command::Pair { q, n, u1, u2, omega_e, omega_t, zeta1, zeta2, words, mixed } => {
            let mk = |u: Fq, z: Option<RootOfUnity>| {
                DatumArgs { q: *q, n: *n, u, omega_e: *omega_e, omega_t: *omega_t, zeta: z }.datum()
            };
            cmd_pair(cli, mk(*u1, *zeta1)?, mk(*u2, *zeta2)?, *words, *mixed)
        }
        Command::Selftest { scale, only } => cmd_selftest(cli, scale.as_deref(), only),
    }
}

fn zeta_options(cli: &Cli, unfolded: bool) -> ZetaOptions {
    ZetaOptions { m: cli.m, b: cli.b, h_fold: !unfolded, ..ZetaOptions::default() }
}

pub fn cmd_epsilon(cli: &Cli, da: &DatumArgs, tw: &TwistArgs, side: Side, unfolded: bool) -> Result<Outcome, CliError> {
    let d = da.datum()?;
    let lam = tw.lambda(d.q);
    let mut out = json!({ "datum": to_json(&d)?, "twist": to_json(&lam)? });
    let mut vals = vec![];
    if matches!(side, Side::Auto | Side::All) {
        let e = gamma_automorphic(&d, &lam, &zeta_options(cli, unfolded))?;
        out["automorphic"] = to_json(&e)?;
        vals.push(e);
    }
    if matches!(side, Side::Galois | Side::All) {
        let e = epsilon_galois(&build_parameter(&d, LambdaMode::Formal), &lam)?;
        out["galois"] = to_json(&e)?;
        vals.push(e);
    }
    if matches!(side, Side::Closed | Side::All) {
        let e = closed_form_epsilon(&d, &lam);
        out["closed"] = to_json(&e)?;
        vals.push(e);
    }
    let equal = vals.windows(2).all(|w| w[0] == w[1]);
    if side == Side::All {
        out["equal"] = json!(equal);
    }
    Ok(Outcome { value: out, ok: equal })
}

pub fn cmd_gauss(da: &DatumArgs, tw: &TwistArgs) -> Result<Outcome, CliError> {
    let d = da.datum()?;
    let xi = build_parameter(&d, LambdaMode::Formal).xi;
    let tau = gauss_sum_bruteforce(&xi, d.q)?;
    let formula = LambdaGraded::monomial(-1, CycloNumber::root(d.zeta).scale(Q::from_integer(d.q as i128)));
    let mut out = json!({
        "datum": to_json(&d)?,
        "tau": to_json(&tau)?,
        "formula": to_json(&formula)?,
        "equal": tau == formula,
    });
    let mut ok = tau == formula;
    if tw.given() {
        let lam = tw.lambda(d.q);
        let tt = gauss_sum_bruteforce(&twisted(&xi, &lam), d.q)?;
        let ratio = lam.at_minus_one().pow(d.n as i64 - 1).mul(lam.at_varpi(d.u0, &d.ff()));
        let twist_ok = tt == tau.mul_root(ratio);
        out["twist"] = to_json(&lam)?;
        out["tau_twisted"] = to_json(&tt)?;
        out["ratio"] = json!(ratio.to_string());
        out["twist_equal"] = json!(twist_ok);
        ok &= twist_ok;
    }
    Ok(Outcome { value: out, ok })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_facet(
    cli: &Cli,
    n: Option<usize>,
    list: bool,
    spec: Option<&str>,
    certify: bool,
    point: Option<&str>,
    destabilize: bool,
    fq: u64,
) -> Result<Outcome, CliError> {
    let ff = FiniteField::get(fq)?;
    if list {
        let n = n.ok_or_else(|| CliError::Precondition("--list needs --n".into()))?;
        if n < 1 {
            return Err(CliError::Precondition("n must be positive".into()));
        }
        let rows: Vec<Value> = enumerate_facets(n)
            .iter()
            .map(|f| -> Result<Value, CliError> {
                let x = barycenter(f)?;
                let gq = graded_quotient(&x);
                Ok(json!({
                    "spec": f.to_string(),
                    "alcove": f.is_alcove(),
                    "barycenter": x.to_string(),
                    "dim_g": gq.dim_g,
                    "dim_v": gq.dim_v,
                    "gap": dim_gap(f).to_string(),
                }))
            })
            .collect::<Result<_, _>>()?;
        return Ok(Outcome::ok(json!({ "n": n, "count": rows.len(), "facets": rows })));
    }
    if let Some(s) = spec {
        let f: FacetSpec = s.parse()?;
        if n.is_some_and(|n| n != f.n()) {
            return Err(CliError::Precondition(format!("--n does not match the facet's n = {}", f.n())));
        }
        let x = barycenter(&f)?;
        let mut out = json!({
            "spec": f.to_string(),
            "barycenter": x.to_string(),
            "graded_quotient": to_json(&graded_quotient(&x))?,
        });
        let mut ok = true;
        if certify {
            let cert = stability_certificate(&f, fq)?;
            let verified = cert.verify(&x)?;
            out["certificate"] = to_json(&cert)?;
            out["verified"] = json!(verified);
            ok = verified;
        }
        return Ok(Outcome { value: out, ok });
    }
    if let Some(p) = point {
        let x: ApartmentPoint = p.parse()?;
        if n.is_some_and(|n| n != x.n()) {
            return Err(CliError::Precondition(format!("--n does not match the point's dimension {}", x.n())));
        }
        let gq = graded_quotient(&x);
        let mut out = json!({
            "point": x.to_string(),
            "r": r_of_x(&x).to_string(),
            "graded_quotient": to_json(&gq)?,
        });
        let mut ok = true;
        if destabilize {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let lams = functionals_over(&gq, &ff, 729, 64, &mut rng);
            let cert = destabilizing_cocharacter(&x, &lams[0])?;
            let verified = cert.verify(&x)?;
            let killed = lams.iter().filter(|l| cocharacter_kills(&cert, &gq, l)).count();
            out["certificate"] = to_json(&cert)?;
            out["verified"] = json!(verified);
            out["functionals_checked"] = json!(lams.len());
            out["functionals_killed"] = json!(killed);
            ok = verified && killed == lams.len();
        }
        return Ok(Outcome { value: out, ok });
    }
    Err(CliError::Precondition("facet needs --list, --spec or --point".into()))
}

/// Matrix entry on the command line: an integer of F_p or a series object.
#[derive(Deserialize)]
#[serde(untagged)]
enum EntryArg {
    Int(i64),
    Series(LaurentElem),
}

fn read_matrix(arg: &str, ff: &FiniteField) -> Result<MatG, CliError> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::Precondition(format!("{path}: {e}")))?,
        None => arg.to_string(),
    };
    let rows: Vec<Vec<EntryArg>> =
        serde_json::from_str(&text).map_err(|e| CliError::Precondition(format!("matrix JSON: {e}")))?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Precondition("matrix must be square and nonempty".into()));
    }
    let rows = rows
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|e| match e {
                    EntryArg::Int(k) if k.rem_euclid(ff.p() as i64) == 0 => LaurentElem::zero(FieldTag::F),
                    EntryArg::Int(k) => LaurentElem::monomial(FieldTag::F, ff.from_int(k), 0),
                    EntryArg::Series(x) => x,
                })
                .collect()
        })
        .collect();
    Ok(MatG::from_rows(rows))
}

pub fn cmd_bruhat(
    q: u64,
    matrix: &str,
    u: Option<Fq>,
    omega_e: i64,
    omega_t: RootOfUnity,
    zeta: Option<RootOfUnity>,
) -> Result<Outcome, CliError> {
    let ff = FiniteField::get(q)?;
    let g = read_matrix(matrix, &ff)?;
    let b = bruhat_decompose(&g, &ff, true)?;
    let (uu, kk) = (b.u.clone().expect("tracked"), b.k.clone().expect("tracked"));
    let rebuilt = uu.mul(&b.class.matrix(), &ff).mul(&kk, &ff);
    let consistent = rebuilt.agrees_with(&g) && uu.is_upper_unipotent() && kk.iplus_membership(&ff)?;
    let shape = b.class.hprime_shape(&ff).map(|s| json!({ "j": s.j, "c": s.c, "v": s.v, "u0": s.u0 }));
    let mut out = json!({
        "class": to_json(&b.class)?,
        "hprime_shape": shape,
        "u": to_json(&uu)?,
        "k": to_json(&kk)?,
        "consistent": consistent,
    });
    if let Some(u) = u {
        let d = DatumArgs { q, n: g.n(), u, omega_e, omega_t, zeta }.datum()?;
        out["datum"] = to_json(&d)?;
        out["whittaker"] = to_json(&whittaker_eval(&d, &g)?)?;
    }
    Ok(Outcome { value: out, ok: consistent })
}

pub fn cmd_match(cli: &Cli, da: &DatumArgs, no_integral: bool) -> Result<Outcome, CliError> {
    let d = da.datum()?;
    let opts = zeta_options(cli, false);
    let report = verify_matching(&d, &unit_twists(d.q), (!no_integral).then_some(&opts))?;
    let exps: Vec<u64> = (0..d.q - 1).collect();
    let table = EpsilonTable::generate(&d, &exps, EpsSource::Galois)?;
    let det = determine_from_table(&table, &d.omega)?;
    let round_trip = det.datum.as_ref() == Some(&d);
    let ok = report.all_equal() && round_trip;
    Ok(Outcome {
        value: json!({
            "report": to_json(&report)?,
            "all_equal": report.all_equal(),
            "table": to_json(&table)?,
            "determined": {
                "zeta": det.zeta.to_string(),
                "u0": det.u0,
                "candidates": det.candidates,
                "datum": to_json(&det.datum)?,
            },
            "round_trip": round_trip,
        }),
        ok,
    })
}

pub fn cmd_pair(cli: &Cli, d1: SSCDatum, d2: SSCDatum, words: usize, mixed: usize) -> Result<Outcome, CliError> {
    let cfg = PairConfig::new(d1, d2, cli.m, cli.b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let sym = k_special_check(&cfg, words, &mut rng)?;
    let mir = mirabolic_agreement(&cfg, mixed, &mut rng)?;
    let ok = sym.ok() && mir.ok();
    Ok(Outcome {
        value: json!({ "config": to_json(&cfg)?, "k_symmetry": to_json(&sym)?, "mirabolic": to_json(&mir)?, "ok": ok }),
        ok,
    })
}

pub fn cmd_selftest(cli: &Cli, scale: Option<&str>, only: &[u8]) -> Result<Outcome, CliError> {
    let scale = match scale {
        Some(s) => s.parse::<Scale>(),
        None => Scale::from_env(),
    }
    .map_err(CliError::Precondition)?;
    if let Some(bad) = only.iter().find(|&&i| !selftest::CRITERIA.iter().any(|c| c.0 == i)) {
        return Err(CliError::Precondition(format!("no criterion {bad}")));
    }
    let results: Vec<_> = selftest::CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.0))
        .map(|c| selftest::run(c.0, scale, cli.seed))
        .collect();
    let ok = results.iter().all(|r| r.passed);
    Ok(Outcome { value: json!({ "scale": to_json(&scale)?, "results": to_json(&results)?, "passed": ok }), ok })
}

// ---------------------------------------------------------------------------
// Rendering

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn is_row_list(v: &Value) -> bool {
    matches!(v, Value::Array(a) if !a.is_empty() && a.iter().all(Value::is_object))
}

/// A serialized series as "c·t^v + …" (or ϖ_E for elements of E).
fn series_text(m: &serde_json::Map<String, Value>) -> Option<String> {
    let coeffs = m.get("coeffs")?.as_array()?;
    let val = m.get("val")?.as_i64()?;
    let var = if m.get("field")?.as_str()? == "E" { "ϖ_E" } else { "t" };
    let mut parts: Vec<String> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.as_u64() != Some(0))
        .map(|(i, c)| match val + i as i64 {
            0 => scalar(c),
            e => format!("{}·{var}^{e}", scalar(c)),
        })
        .collect();
    if let Some(p) = m.get("prec").and_then(Value::as_i64) {
        parts.push(format!("O({var}^{})", val + p));
    }
    Some(if parts.is_empty() { "0".into() } else { parts.join(" + ") })
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    if let Some(t) = v.as_object().and_then(series_text) {
        out.push((prefix.to_string(), t));
        return;
    }
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) if a.iter().any(|x| x.is_object() || x.is_array()) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

fn row_table(rows: &[Value]) -> String {
    let mut cols: Vec<String> = vec![];
    for r in rows {
        for k in r.as_object().into_iter().flat_map(|m| m.keys()) {
            if !cols.contains(k) {
                cols.push(k.clone());
            }
        }
    }
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| r.get(c).map_or_else(String::new, scalar)).collect())
        .collect();
    let widths: Vec<usize> = (0..cols.len())
        .map(|i| cells.iter().map(|r| r[i].chars().count()).chain([cols[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |xs: &[String]| -> String {
        xs.iter()
            .zip(&widths)
            .map(|(x, w)| format!("{x:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut s = line(&cols);
    for r in &cells {
        s.push('\n');
        s.push_str(&line(r));
    }
    s
}

/// Aligned text: scalar fields as `key  value`, lists of records as column tables.
pub fn render_table(v: &Value) -> String {
    let mut sections = vec![];
    let mut pairs = vec![];
    if let Value::Object(m) = v {
        for (k, x) in m {
            if is_row_list(x) {
                sections.push(format!("{k}:\n{}", row_table(x.as_array().expect("row list"))));
            } else {
                flatten(k, x, &mut pairs);
            }
        }
    } else if is_row_list(v) {
        sections.push(row_table(v.as_array().expect("row list")));
    } else {
        flatten("value", v, &mut pairs);
    }
    let w = pairs.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let mut out: Vec<String> = pairs.iter().map(|(k, x)| format!("{k:<w$}  {x}")).collect();
    out.extend(sections);
    out.join("\n")
}

pub fn render(v: &Value, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(v).expect("JSON values serialize"),
        Format::Table => render_table(v),
    }
}

/// Parses arguments, runs the subcommand, prints the report and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(o) => {
            // A closed pipe downstream is not our failure.
            let _ = writeln!(std::io::stdout().lock(), "{}", render(&o.value, cli.format));
            ExitCode::from(if o.ok { 0 } else { 3 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
