//! `nfcount`: command-line front end for the norm-form counting library.

mod manifest;
mod parse;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use nfcount_core::arith::primes::{sieve_primes, vp_u64};
use nfcount_core::cone::ConeSpec;
use nfcount_core::congruence::{Budget, CongruenceQuery, RhoEngine};
use nfcount_core::error::{Error, Result};
use nfcount_core::field::splitting::{PrimeClass, SplittingTable};
use nfcount_core::field::zeta::zeta_partial_sum;
use nfcount_core::field::{FieldSpec, IdealBasis};
use nfcount_core::local_global::{
    beta_infinity, beta_p, divisor_density, divisor_density_lattice, verify_nb, DivisorDensityQuery,
};
use nfcount_core::majorant::{build_w, majorant_audit, AuditParams, MultFn, WContext};
use nfcount_core::representation::{count_nt, progression_sum, wtricked_average, ProblemConfig, ReprCounter};
use nfcount_core::units::{class_kappa, classical_regulator, kappa_closed_form, LogDomain, Sign, UnitSystem};

use manifest::{Csv, Manifest};
use parse::{int, parse_count, parse_sign, parse_w_override, uint, WOverride};

const CACHE_ENV: &str = "NFCOUNT_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(name = "nfcount", version, about = "Norm-form congruence densities, representation counts and majorant audits")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// cache directory for splitting tables; NFCOUNT_CACHE_DIR takes precedence
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// JSON report path (default: stdout)
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// CSV export of the report's table, when it has one
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// run manifest path (default: <report>.manifest.json when --report is given)
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// operation budget (enumerated points)
    #[arg(long, global = true)]
    budget: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct ConeArgs {
    /// `full`, `sector:<k>` or a JSON cone
    #[arg(long, default_value = "full")]
    cone: String,
    /// sign ε of the represented integers
    #[arg(long, default_value = "+", value_parser = parse_sign, allow_hyphen_values = true)]
    sign: Sign,
    /// congruence modulus M on the representing vector
    #[arg(long, default_value_t = 1)]
    modulus: u64,
    /// residue b mod M, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    residue: Option<Vec<i64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validated field data, units and splitting of small primes
    FieldInfo {
        #[arg(long)]
        field: PathBuf,
        /// splitting table bound
        #[arg(long, default_value_t = 100)]
        split_limit: u64,
    },
    /// ρ(p^m, A): solutions of N(x) ≡ A mod p^m
    Rho {
        #[arg(long)]
        field: PathBuf,
        #[arg(short = 'p')]
        p: u64,
        #[arg(short = 'm')]
        m: u32,
        #[arg(short = 'A', allow_hyphen_values = true)]
        a: i128,
        /// ideal basis JSON {"rows": [[...]]}
        #[arg(long)]
        ideal: Option<PathBuf>,
        #[arg(long)]
        modulus: Option<u64>,
        /// base residue x0 mod M, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        base: Option<Vec<i64>>,
    },
    /// r_K(m), or the partial sum Σ_{m≤x} r_K(m)
    Rk {
        #[arg(long)]
        field: PathBuf,
        #[arg(short = 'm', conflicts_with = "x")]
        m: Option<u64>,
        #[arg(short = 'x', long = "x", value_parser = parse_count)]
        x: Option<u64>,
    },
    /// R(m): representations of m in the fundamental domain
    Repr {
        #[arg(long)]
        field: PathBuf,
        #[arg(short = 'm', allow_hyphen_values = true)]
        m: i128,
        #[command(flatten)]
        cone: ConeArgs,
        /// list the representing vectors
        #[arg(long)]
        points: bool,
    },
    /// N(T) for a problem configuration
    Count {
        #[arg(long)]
        config: PathBuf,
        #[arg(short = 'T', long = "T", value_parser = parse_count)]
        t: u64,
    },
    /// Divisor density α_f(p^{c_1}, …, p^{c_r})
    Alpha {
        #[arg(long)]
        config: PathBuf,
        #[arg(short = 'p')]
        p: u64,
        /// exponents c_1..c_r, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        c: Vec<u32>,
    },
    /// Local densities β_p
    Beta {
        #[arg(long)]
        config: PathBuf,
        #[arg(short = 'p', conflicts_with = "all_up_to", required_unless_present = "all_up_to")]
        p: Option<u64>,
        #[arg(long)]
        all_up_to: Option<u64>,
        #[arg(long)]
        m_max: Option<u32>,
    },
    /// Archimedean density β_∞
    BetaInf {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1 << 16)]
        points: u64,
    },
    /// N(T) against β_∞ ∏ β_p T^s
    VerifyNb {
        #[arg(long)]
        config: PathBuf,
        #[arg(short = 'T', long = "T", value_parser = parse_count)]
        t: u64,
        #[arg(long)]
        pcut: Option<u64>,
        #[arg(long, default_value_t = 1 << 16)]
        points: u64,
    },
    /// Pointwise and averaged majorant checks for a multiplicative function
    MajorantAudit {
        #[arg(long)]
        field: PathBuf,
        /// tau<k>, r_k, r_res or ind_p01
        #[arg(long = "f")]
        f: String,
        #[arg(long, default_value_t = 0.125)]
        gamma: f64,
        #[arg(long, default_value_t = 6.0)]
        c1: f64,
        /// sweep range
        #[arg(long = "T", value_parser = parse_count, default_value = "100000")]
        t: u64,
        #[arg(long = "analytic-T", default_value_t = 1e8)]
        analytic_t: f64,
        /// w=<w>, c1=<C1> or W=<modulus>; repeatable
        #[arg(long = "W-override", value_parser = parse_w_override)]
        w_override: Vec<WOverride>,
        #[arg(short = 'A', default_value_t = 1)]
        a: u64,
        /// moment order
        #[arg(short = 'k', default_value_t = 1)]
        k: u32,
        #[arg(long, default_value = "full")]
        cone: String,
        /// skip the representation-count checks
        #[arg(long)]
        no_counter: bool,
    },
    /// Σ R(m) over m ≡ A mod q against the predicted main term
    Progression {
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        cone: ConeArgs,
        #[arg(short = 'x', long = "x")]
        x: f64,
        #[arg(short = 'q')]
        q: u64,
        #[arg(short = 'A', allow_hyphen_values = true)]
        a: i128,
    },
    /// W-tricked average of R over Wm+A in progressions mod q
    Wtrick {
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        cone: ConeArgs,
        #[arg(long = "W")]
        w_mod: u64,
        #[arg(long = "w")]
        w: u64,
        #[arg(short = 'A', allow_hyphen_values = true)]
        a: i128,
        #[arg(short = 'T', long = "T", value_parser = parse_count)]
        t: u64,
        #[arg(short = 'q')]
        q: u64,
        /// residue of m mod q
        #[arg(long = "a", allow_hyphen_values = true, default_value_t = 0)]
        res: i128,
    },
}

/// What a subcommand produced: the report, an optional table and an error raised after the report
/// was complete.
struct Outcome {
    report: Value,
    csv: Option<Csv>,
    failure: Option<Error>,
}

impl Outcome {
    fn new(report: Value) -> Self {
        Outcome { report, csv: None, failure: None }
    }

    fn with_csv(mut self, csv: Csv) -> Self {
        self.csv = Some(csv);
        self
    }
}

struct Ctx {
    cache_dir: Option<PathBuf>,
    seed: u64,
    budget: Option<u64>,
    manifest: Manifest,
}

impl Ctx {
    fn field(&mut self, path: &Path) -> Result<Arc<FieldSpec>> {
        let f = self.manifest.phase("load field", || FieldSpec::from_path(path))?;
        self.manifest.config_hashes.insert(path.display().to_string(), f.hash.clone());
        Ok(Arc::new(f))
    }

    fn config(&mut self, path: &Path) -> Result<ProblemConfig> {
        let c = self.manifest.phase("load config", || ProblemConfig::from_path(path))?;
        self.manifest.config_hashes.insert(path.display().to_string(), c.hash.clone());
        for f in &c.fields {
            self.manifest.config_hashes.insert(format!("field:{}", f.name), f.hash.clone());
        }
        Ok(c)
    }

    fn counter(&mut self, field: &Arc<FieldSpec>, args: &ConeArgs) -> Result<ReprCounter> {
        let cone = parse::parse_cone(&args.cone)?;
        let units = UnitSystem::from_field(field)?;
        let domain = Arc::new(self.manifest.phase("fundamental domain", || LogDomain::new(field, &units))?);
        let b = args.residue.clone().unwrap_or_else(|| vec![0; field.n]);
        let c = ReprCounter::from_parts(field.clone(), domain, cone, b, args.modulus)?;
        Ok(match self.budget {
            Some(bud) => c.with_budget(bud),
            None => c,
        })
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let g = cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let cache_dir = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from).or(g.cache_dir);
    let mut ctx = Ctx {
        cache_dir,
        seed: g.seed,
        budget: g.budget,
        manifest: Manifest::new(argv, g.seed, rayon::current_num_threads()),
    };
    ctx.manifest.subcommand = subcommand_name(&cli.command).into();
    let out = dispatch(&mut ctx, cli.command)?;

    let text = serde_json::to_string_pretty(&out.report)? + "\n";
    ctx.manifest.set_report(&text);
    match &g.report {
        Some(p) => std::fs::write(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &g.csv {
        match &out.csv {
            Some(c) => std::fs::write(p, c.render())?,
            None => eprintln!("note: {} has no table; --csv ignored", ctx.manifest.subcommand),
        }
    }
    let manifest_path = g.manifest.or_else(|| g.report.as_ref().map(|p| {
        let mut s = p.clone().into_os_string();
        s.push(".manifest.json");
        PathBuf::from(s)
    }));
    if let Some(p) = manifest_path {
        std::fs::write(p, serde_json::to_string_pretty(&ctx.manifest)? + "\n")?;
    }
    match out.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::FieldInfo { .. } => "field-info",
        Command::Rho { .. } => "rho",
        Command::Rk { .. } => "rk",
        Command::Repr { .. } => "repr",
        Command::Count { .. } => "count",
        Command::Alpha { .. } => "alpha",
        Command::Beta { .. } => "beta",
        Command::BetaInf { .. } => "beta-inf",
        Command::VerifyNb { .. } => "verify-nb",
        Command::MajorantAudit { .. } => "majorant-audit",
        Command::Progression { .. } => "progression",
        Command::Wtrick { .. } => "wtrick",
    }
}

fn class_name(c: PrimeClass) -> &'static str {
    match c {
        PrimeClass::P0 => "P0",
        PrimeClass::P1 => "P1",
        PrimeClass::P2 => "P2",
    }
}

fn dispatch(ctx: &mut Ctx, cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::FieldInfo { field, split_limit } => field_info(ctx, &field, split_limit),
        Command::Rho { field, p, m, a, ideal, modulus, base } => {
            let f = ctx.field(&field)?;
            let mut engine = match &ideal {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    let basis: IdealBasis = serde_json::from_str(&text)?;
                    if basis.rows.len() != f.n || basis.rows.iter().any(|r| r.len() != f.n) {
                        return Err(Error::InvalidConfig(format!("ideal basis must be {0}×{0}", f.n)));
                    }
                    RhoEngine::with_ideal(&f, &basis)
                }
                None => RhoEngine::new(&f),
            };
            if let Some(b) = ctx.budget {
                engine = engine.with_budget(Budget { max_points: b });
            }
            let ell = modulus.map(|md| vp_u64(md, p)).unwrap_or(0);
            let x0 = base.unwrap_or_default();
            if ell > 0 && x0.len() != f.n {
                return Err(Error::InvalidConfig(format!("--base needs {} coordinates", f.n)));
            }
            let q = CongruenceQuery::new(p, m, a).with_base(ell, if ell > 0 { x0 } else { vec![] });
            let r = ctx.manifest.phase("rho", || engine.rho(&q))?;
            Ok(Outcome::new(json!({
                "p": p, "m": m, "A": int(a), "ell": ell,
                "ideal": ideal.is_some(),
                "count": uint(r.count),
                "backend": r.backend,
            })))
        }
        Command::Rk { field, m, x } => {
            let f = ctx.field(&field)?;
            match (m, x) {
                (Some(m), _) => {
                    if m == 0 {
                        return Err(Error::DomainError("r_K is defined for m ≥ 1".into()));
                    }
                    Ok(Outcome::new(json!({ "m": m, "r_k": f.r_k(m)? })))
                }
                (None, Some(x)) => {
                    let units = UnitSystem::from_field(&f)?;
                    let kappa = class_kappa(&f, &units)?;
                    let z = ctx.manifest.phase("partial sum", || zeta_partial_sum(&f, x, kappa))?;
                    let table = f.r_k_table(x)?;
                    let mut csv = Csv::new(&["m", "r_k"]);
                    for (m, v) in table.iter().enumerate().skip(1) {
                        csv.row(vec![m.to_string(), v.to_string()]);
                    }
                    Ok(Outcome::new(json!({ "kappa": kappa, "h": f.class_number, "partial_sum": z })).with_csv(csv))
                }
                (None, None) => Err(Error::InvalidConfig("rk needs -m or -x".into())),
            }
        }
        Command::Repr { field, m, cone, points } => {
            let f = ctx.field(&field)?;
            let counter = ctx.counter(&f, &cone)?;
            let count = ctx.manifest.phase("count", || counter.count(m))?;
            let mut report = json!({ "m": int(m), "cone": counter.cone, "modulus": cone.modulus, "count": count });
            if points {
                let pts = counter.points(m)?;
                let rendered: Vec<Vec<Value>> = pts.iter().map(|v| v.iter().map(|&c| int(c)).collect()).collect();
                report["points"] = json!(rendered);
            }
            Ok(Outcome::new(report))
        }
        Command::Count { config, t } => {
            let c = ctx.config(&config)?;
            let r = ctx.manifest.phase("count", || count_nt(&c, t))?;
            let mut csv = Csv::new(&["orthant", "count"]);
            for (k, v) in &r.breakdown {
                csv.row(vec![k.clone(), v.to_string()]);
            }
            Ok(Outcome::new(json!(r)).with_csv(csv))
        }
        Command::Alpha { config, p, c } => {
            let cfg = ctx.config(&config)?;
            if c.len() != cfg.r {
                return Err(Error::InvalidConfig(format!("{} exponents for {} forms", c.len(), cfg.r)));
            }
            let q = DivisorDensityQuery { forms: cfg.forms.clone(), p, c: c.clone(), modulus: cfg.modulus, a: cfg.a.clone() };
            let budget = ctx.budget.unwrap_or(1 << 26);
            let v = ctx.manifest.phase("enumerate", || divisor_density(&q, budget))?;
            let mut report = json!({ "p": p, "c": c, "value": v.to_string(), "value_f64": parse::ratio_f64(&v) });
            if cfg.modulus % p != 0 {
                let lat = divisor_density_lattice(&cfg.forms, p, &c);
                report["lattice"] = json!(lat.to_string());
                report["agree"] = json!(lat == v);
            }
            Ok(Outcome::new(report))
        }
        Command::Beta { config, p, all_up_to, m_max } => {
            let cfg = ctx.config(&config)?;
            let primes = match (p, all_up_to) {
                (Some(p), _) => vec![p],
                (None, Some(b)) => sieve_primes(b),
                _ => unreachable!("clap requires one of -p, --all-up-to"),
            };
            let mut csv = Csv::new(&["p", "value", "value_f64", "m", "stabilized", "backend"]);
            let mut list = Vec::new();
            for q in primes {
                let r = ctx.manifest.phase("beta_p", || beta_p(&cfg, q, m_max))?;
                csv.row(vec![
                    q.to_string(),
                    r.value.clone(),
                    r.value_f64.to_string(),
                    r.m.to_string(),
                    r.stabilized.to_string(),
                    r.backend.clone(),
                ]);
                list.push(json!(r));
            }
            let report = if p.is_some() { list.pop().unwrap() } else { json!({ "beta_p": list }) };
            Ok(Outcome::new(report).with_csv(csv))
        }
        Command::BetaInf { config, points } => {
            let cfg = ctx.config(&config)?;
            let seed = ctx.seed;
            let r = ctx.manifest.phase("beta_inf", || beta_infinity(&cfg, points, seed))?;
            Ok(Outcome::new(json!(r)))
        }
        Command::VerifyNb { config, t, pcut, points } => {
            let cfg = ctx.config(&config)?;
            let seed = ctx.seed;
            let r = ctx.manifest.phase("verify", || verify_nb(&cfg, t, pcut, points, seed))?;
            let mut csv = Csv::new(&["p", "value", "value_f64", "m", "stabilized"]);
            for e in &r.beta_p {
                csv.row(vec![e.p.to_string(), e.value.clone(), e.value_f64.to_string(), e.m.to_string(), e.stabilized.to_string()]);
            }
            Ok(Outcome::new(json!(r)).with_csv(csv))
        }
        Command::MajorantAudit { field, f, gamma, c1, t, analytic_t, w_override, a, k, cone, no_counter } => {
            let fld = ctx.field(&field)?;
            let func = MultFn::from_name(&f, Some(fld.clone()))?;
            let wctx = w_context(t as f64, c1, &w_override)?;
            let counter = if no_counter {
                None
            } else {
                let args = ConeArgs { cone, sign: Sign::Plus, modulus: 1, residue: None };
                Some(ctx.counter(&fld, &args)?)
            };
            let params = AuditParams { gamma, c1, analytic_t, t, a, k };
            let rep = ctx.manifest.phase("audit", || majorant_audit(&fld, counter.as_ref(), &func, &params, &wctx))?;
            let mut csv = Csv::new(&["check", "status", "checked", "violations", "witness", "measured", "bound"]);
            for c in &rep.checks {
                csv.row(vec![
                    c.name.clone(),
                    format!("{:?}", c.status).to_lowercase(),
                    c.checked.to_string(),
                    c.violations.to_string(),
                    c.witness.map(|w| w.to_string()).unwrap_or_default(),
                    c.measured.to_string(),
                    c.bound.to_string(),
                ]);
            }
            let report = json!(rep);
            let failure = rep.into_result().err();
            Ok(Outcome { report, csv: Some(csv), failure })
        }
        Command::Progression { field, cone, x, q, a } => {
            let f = ctx.field(&field)?;
            let counter = ctx.counter(&f, &cone)?;
            let seed = ctx.seed;
            let r = ctx.manifest.phase("progression", || progression_sum(&counter, cone.sign, x, q, a, seed))?;
            Ok(Outcome::new(json!({ "x": x, "q": q, "A": int(a), "result": r })))
        }
        Command::Wtrick { field, cone, w_mod, w, a, t, q, res } => {
            let f = ctx.field(&field)?;
            let counter = ctx.counter(&f, &cone)?;
            let r = ctx.manifest.phase("wtrick", || wtricked_average(&counter, cone.sign, w_mod, w, a, t, q, res))?;
            Ok(Outcome::new(json!({ "W": w_mod, "w": w, "A": int(a), "T": t, "q": q, "a": int(res), "result": r })))
        }
    }
}

fn w_context(t: f64, c1: f64, overrides: &[WOverride]) -> Result<WContext> {
    let mut o = nfcount_core::majorant::WOverrides::default();
    let mut explicit = None;
    for ov in overrides {
        match ov {
            WOverride::SmallW(w) => o.w = Some(*w),
            WOverride::C1(c) => o.c1 = Some(*c),
            WOverride::Modulus(m) => explicit = Some(*m),
        }
    }
    match explicit {
        Some(_) if o.w.is_some() || o.c1.is_some() => {
            Err(Error::InvalidConfig("W=<modulus> cannot be combined with w= or c1=".into()))
        }
        Some(m) => Ok(WContext::explicit(t, nfcount_core::arith::primes::factorize(m))),
        None => Ok(build_w(t, c1, &o)),
    }
}

fn field_info(ctx: &mut Ctx, path: &Path, split_limit: u64) -> Result<Outcome> {
    let f = ctx.field(path)?;
    let dir = ctx.cache_dir.clone();
    let (table, hit) = ctx.manifest.phase("splitting table", || SplittingTable::cached(&f, split_limit, dir.as_deref()))?;
    ctx.manifest.record_cache(hit);
    let mut splitting = Vec::new();
    let mut csv = Csv::new(&["p", "class", "splitting"]);
    for (p, st) in &table.entries {
        let class = table.class(&f, *p).map(class_name).unwrap_or("?");
        let pairs: Vec<[u32; 2]> = st.0.iter().map(|&(e, d)| [e, d]).collect();
        splitting.push(json!({ "p": p, "class": class, "ef": pairs }));
        csv.row(vec![p.to_string(), class.into(), format!("{pairs:?}")]);
    }
    let units = match UnitSystem::from_field(&f) {
        Ok(u) => {
            let domain = LogDomain::new(&f, &u)?;
            let full = ConeSpec::full();
            json!({
                "rank": u.fundamental.len(),
                "mu_order": u.mu_order,
                "mu_plus_order": u.mu_plus_order,
                "fundamental": u.fundamental.iter().map(|v| v.iter().map(|&c| int(c)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "norms": u.norms,
                "regulator": classical_regulator(&f, &u)?,
                "kappa": class_kappa(&f, &u)?,
                "kappa_plus": kappa_closed_form(&domain, &full, Sign::Plus),
                "kappa_minus": kappa_closed_form(&domain, &full, Sign::Minus),
            })
        }
        Err(Error::InvalidUnits(msg)) => json!({ "error": msg }),
        Err(e) => return Err(e),
    };
    let report = json!({
        "name": f.name,
        "degree": f.n,
        "discriminant": int(f.disc),
        "signature": [f.r1, f.r2],
        "class_number": f.class_number,
        "min_poly": f.min_poly.iter().map(|&c| int(c)).collect::<Vec<_>>(),
        "index_primes": f.index_primes,
        "hash": f.hash,
        "units": units,
        "splitting_limit": split_limit,
        "splitting": splitting,
    });
    Ok(Outcome::new(report).with_csv(csv))
}
