//! Command line front end. Every subcommand delegates to the library and
//! prints a single JSON (or CSV) artifact; verification subcommands exit 0
//! on pass, 1 on failure, and any input/capacity problem exits 2.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::BigRational;
use serde_json::{json, Value};

use krawtchouk::basis::{
    c2n_table, character_basis, gks_check, h_matrix, hadamard4_table, helmert, hypergroup_check,
    s3_table, validate_basis, xu, OrthoBasis, PositivityReport, ProbabilityVector,
};
use krawtchouk::chains::{
    circulant_chain, ehrenfest_chain, eigen_residuals, independent_all_chain, lancaster_kernel,
    lancaster_urn_chain, lightbulb_chain, metropolis_chain, reconstruction_gap, refresh_chain,
    simulate, simulate_trace, single_site_chain, sticky_refresh_chain, subset_chain, verify_eigen,
    CompositionChain, SingleBallChain, SubsetLaw,
};
use krawtchouk::comb::{big_to_rational, factorial, rising_int};
use krawtchouk::expand::{recurrence_coefficients, reproducing_kernels};
use krawtchouk::io;
use krawtchouk::lancaster::{
    bivariate_from_correlations, extract_correlations, linearization_distribution,
    linearization_identity_gap, mass_gap, BivariateTable,
};
use krawtchouk::poly::{
    build_table, dual_orthogonality_gap, duality_gap, eval_xu_k, transform_check,
};
use krawtchouk::scalar::parse_rational;
use krawtchouk::{Error, Exact, Result, RunConfig, Scalar};
use num::{One, Zero};

/// Multivariate Krawtchouk systems: orthogonal bases, polynomial tables,
/// identity verification, composition Markov chains, and bivariate laws.
#[derive(Parser)]
#[command(name = "krawtchouk", version)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Arithmetic backend for constructions and checks
    #[arg(long, global = true, value_enum, default_value_t = Backend::Float)]
    backend: Backend,
    /// Tolerance for float verification (exact runs still report deviations)
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    /// Cell-count guard for enumerations; KRAWTCHOUK_CAPACITY sets the default
    #[arg(long, global = true)]
    capacity: Option<u128>,
    /// Seed for trajectory simulation
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the artifact to this path instead of stdout
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Exact,
    Float,
}

impl Backend {
    fn name(self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Float => "float",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BasisKind {
    Helmert,
    Xu,
}

impl BasisKind {
    fn name(self) -> &'static str {
        match self {
            BasisKind::Helmert => "helmert",
            BasisKind::Xu => "xu",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum BallKind {
    Refresh,
    Metropolis,
}

#[derive(Clone, Copy, ValueEnum)]
enum LiftKind {
    SingleSite,
    Independent,
    Subset,
}

#[derive(Subcommand)]
enum Cmd {
    /// Orthogonal bases on the categories and positivity diagnostics
    #[command(subcommand)]
    Basis(BasisCmd),
    /// Polynomial tables and algebraic identity checks
    #[command(subcommand)]
    Poly(PolyCmd),
    /// Markov chains on compositions diagonalized by the polynomials
    #[command(subcommand)]
    Chain(ChainCmd),
    /// Bivariate multinomial laws with prescribed polynomial correlations
    #[command(subcommand)]
    Lancaster(LancasterCmd),
}

/// Probability vector shared by most subcommands.
#[derive(Args)]
struct PArg {
    /// Probabilities as comma-separated rationals, e.g. 1/2,1/3,1/6
    #[arg(short, long, value_delimiter = ',')]
    p: Vec<String>,
    /// Number of categories; checked against the length of -p
    #[arg(short, long)]
    d: Option<usize>,
}

/// Polynomial system: probabilities, ball count, basis family.
#[derive(Args)]
struct SystemArgs {
    #[command(flatten)]
    p: PArg,
    /// Number of balls
    #[arg(short = 'N', long = "balls")]
    n_balls: u32,
    /// Basis family the polynomials are built on
    #[arg(long, value_enum, default_value_t = BasisKind::Helmert)]
    basis: BasisKind,
}

#[derive(Subcommand)]
enum BasisCmd {
    /// Orthonormal nested-contrast basis
    Helmert(PArg),
    /// Rational triangular basis with product-form weights
    Xu(PArg),
    /// Basis from a real character table (built-in or a JSON document)
    Character {
        /// Built-in table: s3, hadamard4, or c2:<n>
        #[arg(long, conflicts_with = "from")]
        table: Option<String>,
        /// Read {p, rows, weights} JSON produced by the basis subcommands
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Positivity and monotonicity diagnostics for a probability vector
    Check {
        #[command(flatten)]
        p: PArg,
        /// Nonnegativity of the triple-product hypergroup sums
        #[arg(long)]
        hypergroup: bool,
        /// Pairwise-minimum condition equivalent to the hypergroup property
        #[arg(long)]
        gks: bool,
        /// Strong monotonicity of the sorted probabilities
        #[arg(long)]
        strong_monotone: bool,
    },
}

#[derive(Subcommand)]
enum PolyCmd {
    /// Print the full table of polynomial values
    Table {
        #[command(flatten)]
        sys: SystemArgs,
        /// Artifact format
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Verify algebraic identities of the polynomial system
    Verify {
        #[command(flatten)]
        sys: SystemArgs,
        /// Gram matrix diagonal with the closed-form norms
        #[arg(long)]
        orthogonality: bool,
        /// Self-duality of the normalized values and dual orthogonality
        #[arg(long)]
        duality: bool,
        /// Conditional-binomial product formula against the table
        #[arg(long)]
        xu_identity: bool,
        /// Three-term recurrence coefficients against the projection oracle
        #[arg(long)]
        recurrence: bool,
        /// Moment-generating transform against its product closed form
        #[arg(long)]
        transform: bool,
        /// Degree-graded reproducing kernels agree across bases
        #[arg(long)]
        kernel_invariance: bool,
    },
}

#[derive(Subcommand)]
enum ChainCmd {
    /// Construct a chain and print its kernel and spectral data
    Build {
        #[command(subcommand)]
        kind: ChainKind,
    },
    /// Check the claimed eigenstructure entrywise against the kernel
    VerifyEigen {
        #[command(subcommand)]
        kind: ChainKind,
    },
    /// Run a seeded trajectory and report occupation statistics
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[command(subcommand)]
        kind: ChainKind,
    },
}

#[derive(Args)]
struct SimArgs {
    /// Number of transitions
    #[arg(long, global = true, default_value_t = 1000)]
    steps: u64,
    /// Start composition, colon-separated (e.g. 4:0); default: first state
    #[arg(long, global = true)]
    start: Option<String>,
    /// Write the trajectory here as JSON lines, one per step
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
}

/// Optional lift of a single-ball move to the composition chain on N balls.
#[derive(Args)]
struct LiftArgs {
    /// Number of balls; omit to stay at the single-ball chain
    #[arg(short = 'N', long = "balls")]
    n_balls: Option<u32>,
    /// How the single-ball move acts on the N balls
    #[arg(long, value_enum, default_value_t = LiftKind::SingleSite)]
    lift: LiftKind,
    /// Law over refreshed-subset sizes 0..=N for --lift subset
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    law: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum ChainKind {
    /// Random-scan Metropolis move targeting p (sorted nonincreasing)
    Metropolis {
        #[command(flatten)]
        p: PArg,
        #[command(flatten)]
        lift: LiftArgs,
    },
    /// Redistribute a uniformly random k-set of the N balls by a ball move
    Ehrenfest {
        #[command(flatten)]
        p: PArg,
        /// Number of balls
        #[arg(short = 'N', long = "balls")]
        n_balls: u32,
        /// Number of balls redistributed per step
        #[arg(short, long, default_value_t = 1)]
        k: u32,
        /// Single-ball move applied to the chosen balls
        #[arg(long, value_enum, default_value_t = BallKind::Refresh)]
        ball: BallKind,
    },
    /// Stay put with state-dependent retention, otherwise redraw from theta
    StickyRefresh {
        /// Retention probability per state, comma-separated rationals in [0,1)
        #[arg(long, value_delimiter = ',')]
        retention: Vec<String>,
        /// Refresh distribution, comma-separated rationals
        #[arg(long, value_delimiter = ',')]
        theta: Vec<String>,
        #[command(flatten)]
        lift: LiftArgs,
    },
    /// Cyclic walk with step law q on Z_d; Fourier eigenstructure
    Circulant {
        /// Step probabilities q[0..d), comma-separated rationals
        #[arg(short, long, value_delimiter = ',')]
        q: Vec<String>,
        #[command(flatten)]
        lift: LiftArgs,
    },
    /// N lamps, each on or off; flip a uniformly random k-set
    Lightbulb {
        /// Number of lamps
        #[arg(short = 'N', long = "balls")]
        n_balls: u32,
        /// Number of lamps flipped per step
        #[arg(short, long, default_value_t = 1)]
        k: u32,
    },
    /// Correlation-kernel chain; repeat --beta for an exchangeable urn
    Lancaster {
        #[command(flatten)]
        p: PArg,
        /// Correlation point: d-1 comma-separated rationals; repeatable
        #[arg(long = "beta", allow_hyphen_values = true)]
        beta: Vec<String>,
        /// Orthonormal basis carrying the correlations
        #[arg(long, value_enum, default_value_t = BasisKind::Helmert)]
        basis: BasisKind,
    },
}

#[derive(Subcommand)]
enum LancasterCmd {
    /// Assemble the bivariate law from prescribed correlations
    Build(BivariateArgs),
    /// Assemble and fail unless the bivariate law is pointwise nonnegative
    Check(BivariateArgs),
    /// Recover correlations from a joint table over the compositions
    Extract {
        #[command(flatten)]
        sys: SystemArgs,
        /// CSV matrix of joint values, rows and columns in state order
        #[arg(long)]
        joint: PathBuf,
        /// Treat the matrix as counts and normalize to a probability table
        #[arg(long)]
        normalize: bool,
    },
    /// Expand a product of scaled polynomials into the hypergroup mixture
    Linearize {
        #[command(flatten)]
        sys: SystemArgs,
        /// First composition, colon-separated (e.g. 2:0:0)
        #[arg(short = 'x', long)]
        x: String,
        /// Second composition, colon-separated
        #[arg(short = 'y', long)]
        y: String,
    },
}

#[derive(Args)]
struct BivariateArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// Correlation assignment index=value (e.g. --rho 1:0=1/3); repeatable
    #[arg(long = "rho", allow_hyphen_values = true)]
    rho: Vec<String>,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = Cli::parse();
    let mut cfg = RunConfig::default();
    cfg.tol = cli.run.tol;
    cfg.seed = cli.run.seed;
    if let Some(cap) = cli.run.capacity {
        cfg.capacity = cap;
    }
    match dispatch(&cli, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

macro_rules! with_backend {
    ($backend:expr, $S:ident, $body:expr) => {
        match $backend {
            Backend::Exact => {
                type $S = Exact;
                $body
            }
            Backend::Float => {
                type $S = f64;
                $body
            }
        }
    };
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<i32> {
    let run = &cli.run;
    match &cli.command {
        Cmd::Basis(cmd) => with_backend!(run.backend, S, basis_cmd::<S>(cmd, run, cfg)),
        Cmd::Poly(cmd) => with_backend!(run.backend, S, poly_cmd::<S>(cmd, run, cfg)),
        Cmd::Chain(cmd) => chain_cmd(cmd, run, cfg),
        Cmd::Lancaster(cmd) => with_backend!(run.backend, S, lancaster_cmd::<S>(cmd, run, cfg)),
    }
}

// ---------------------------------------------------------------- helpers

fn parse_rationals(items: &[String]) -> Result<Vec<BigRational>> {
    items.iter().map(|s| parse_rational(s)).collect()
}

fn pvec(args: &PArg) -> Result<ProbabilityVector> {
    if args.p.is_empty() {
        return Err(Error::Invalid("give the probabilities with -p".into()));
    }
    let p = ProbabilityVector::new(parse_rationals(&args.p)?)?;
    if let Some(d) = args.d {
        if d != p.d() {
            return Err(Error::Dimension(format!(
                "-d {d} disagrees with the {} entries of -p",
                p.d()
            )));
        }
    }
    Ok(p)
}

fn parse_label(s: &str) -> Result<Vec<u32>> {
    s.split(':')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Parse(format!("bad composition label {s:?}")))
        })
        .collect()
}

fn build_basis<S: Scalar>(kind: BasisKind, p: &ProbabilityVector) -> Result<OrthoBasis<S>> {
    match kind {
        BasisKind::Helmert => helmert(p),
        BasisKind::Xu => xu(p),
    }
}

fn rat_strings(v: &[BigRational]) -> Vec<String> {
    v.iter().map(|r| r.to_string()).collect()
}

fn scalar_strings<S: Scalar>(v: &[S]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn positivity_json(rep: &PositivityReport) -> Value {
    json!({
        "holds": rep.holds,
        "checked": rep.checked,
        "min_value": rep.min_value,
        "min_display": rep.min_display,
        "witness": [rep.witness.0, rep.witness.1, rep.witness.2],
    })
}

fn write_text(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit(doc: &Value, out: &Option<PathBuf>) -> Result<()> {
    write_text(&format!("{doc:#}\n"), out)
}

// ------------------------------------------------------------------ basis

fn basis_cmd<S: Scalar>(cmd: &BasisCmd, run: &RunArgs, cfg: &RunConfig) -> Result<i32> {
    match cmd {
        BasisCmd::Helmert(parg) => {
            let p = pvec(parg)?;
            let basis: OrthoBasis<S> = helmert(&p)?;
            emit(&io::basis_json(&p, &basis), &run.output)?;
            Ok(0)
        }
        BasisCmd::Xu(parg) => {
            let p = pvec(parg)?;
            let basis: OrthoBasis<S> = xu(&p)?;
            emit(&io::basis_json(&p, &basis), &run.output)?;
            Ok(0)
        }
        BasisCmd::Character { table, from } => {
            let (p, basis): (ProbabilityVector, OrthoBasis<S>) = match (table, from) {
                (Some(tag), None) => {
                    let (rows, sizes) = builtin_table(tag)?;
                    character_basis(&rows, &sizes)?
                }
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(path)?;
                    let doc: Value = serde_json::from_str(&text)
                        .map_err(|e| Error::Parse(format!("bad basis JSON: {e}")))?;
                    let (p, basis) = io::basis_from_json::<S>(&doc)?;
                    let report = validate_basis(&p, &basis, cfg.tol);
                    if !report.ok {
                        return Err(Error::Invalid(format!(
                            "document is not an orthogonal basis: {}",
                            report.detail
                        )));
                    }
                    (p, basis)
                }
                _ => {
                    return Err(Error::Invalid(
                        "give exactly one of --table or --from".into(),
                    ))
                }
            };
            emit(&io::basis_json(&p, &basis), &run.output)?;
            Ok(0)
        }
        BasisCmd::Check {
            p,
            hypergroup,
            gks,
            strong_monotone,
        } => {
            let p = pvec(p)?;
            let mut checks = serde_json::Map::new();
            let mut holds = true;
            if *strong_monotone {
                let ok = p.is_strongly_monotone();
                holds &= ok;
                checks.insert("strong_monotone".into(), json!({ "holds": ok }));
            }
            if *hypergroup {
                let basis: OrthoBasis<S> = helmert(&p)?;
                let rep = hypergroup_check(&h_matrix(&p, &basis)?, cfg.tol)?;
                holds &= rep.holds;
                checks.insert("hypergroup".into(), positivity_json(&rep));
            }
            if *gks {
                let basis: OrthoBasis<S> = helmert(&p)?;
                let rep = gks_check(&p, &basis, cfg.tol);
                holds &= rep.holds;
                checks.insert("gks".into(), positivity_json(&rep));
            }
            if checks.is_empty() {
                return Err(Error::Invalid(
                    "pass at least one of --hypergroup, --gks, --strong-monotone".into(),
                ));
            }
            let doc = json!({
                "schema": io::SCHEMA,
                "d": p.d(),
                "p": rat_strings(p.as_slice()),
                "holds": holds,
                "checks": Value::Object(checks),
            });
            emit(&doc, &run.output)?;
            Ok(if holds { 0 } else { 1 })
        }
    }
}

fn builtin_table(tag: &str) -> Result<(Vec<Vec<BigRational>>, Vec<u64>)> {
    if tag == "s3" {
        return Ok(s3_table());
    }
    if tag == "hadamard4" {
        return Ok(hadamard4_table());
    }
    if let Some(rest) = tag.strip_prefix("c2:") {
        let n: u32 = rest
            .parse()
            .map_err(|_| Error::Parse(format!("bad exponent in {tag:?}")))?;
        if n == 0 || n > 6 {
            return Err(Error::Invalid("c2:<n> supports n in 1..=6".into()));
        }
        return Ok(c2n_table(n));
    }
    Err(Error::Parse(format!(
        "unknown character table {tag:?}; use s3, hadamard4, or c2:<n>"
    )))
}

// ------------------------------------------------------------------- poly

fn poly_cmd<S: Scalar>(cmd: &PolyCmd, run: &RunArgs, cfg: &RunConfig) -> Result<i32> {
    match cmd {
        PolyCmd::Table { sys, format } => {
            let p = pvec(&sys.p)?;
            let basis: OrthoBasis<S> = build_basis(sys.basis, &p)?;
            let table = build_table(&p, &basis, sys.n_balls, cfg.capacity)?;
            match format {
                Format::Json => emit(
                    &io::table_json(&table, sys.basis.name(), run.backend.name()),
                    &run.output,
                )?,
                Format::Csv => write_text(&io::table_csv(&table), &run.output)?,
            }
            Ok(0)
        }
        PolyCmd::Verify {
            sys,
            orthogonality,
            duality,
            xu_identity,
            recurrence,
            transform,
            kernel_invariance,
        } => {
            let p = pvec(&sys.p)?;
            let basis: OrthoBasis<S> = build_basis(sys.basis, &p)?;
            let table = build_table(&p, &basis, sys.n_balls, cfg.capacity)?;
            let mut checks = serde_json::Map::new();
            let mut ok = true;
            if *orthogonality {
                let rep = table.orthogonality_report(cfg.tol);
                ok &= rep.ok;
                checks.insert(
                    "orthogonality".into(),
                    json!({
                        "ok": rep.ok,
                        "max_deviation": rep.max_deviation,
                        "pairs_checked": rep.pairs_checked,
                        "worst_pair": [rep.worst_pair.0, rep.worst_pair.1],
                    }),
                );
            }
            if *duality {
                let h = h_matrix(&p, &basis)?;
                let gap = duality_gap(&h, sys.n_balls, cfg.capacity)?;
                let ortho = dual_orthogonality_gap(&h, sys.n_balls, cfg.capacity)?;
                let pass = gap <= cfg.tol && ortho <= cfg.tol;
                ok &= pass;
                checks.insert(
                    "duality".into(),
                    json!({ "ok": pass, "gap": gap, "orthogonality_gap": ortho }),
                );
            }
            if *xu_identity {
                let (dev, count) = xu_identity_gap::<S>(&p, sys.n_balls, cfg.capacity)?;
                let pass = dev <= cfg.tol;
                ok &= pass;
                checks.insert(
                    "xu_identity".into(),
                    json!({ "ok": pass, "max_deviation": dev, "values_checked": count }),
                );
            }
            if *recurrence {
                let mut adjusted = true;
                let mut claimed = true;
                let mut count = 0usize;
                for i in 1..p.d() {
                    for r in 0..table.indices().len() {
                        let n = table.indices().get(r).to_vec();
                        let rep = recurrence_coefficients(&table, i, &n, cfg.tol)?;
                        adjusted &= rep.adjusted_matches;
                        claimed &= rep.claimed_matches;
                        count += 1;
                    }
                }
                ok &= adjusted;
                checks.insert(
                    "recurrence".into(),
                    json!({ "ok": adjusted, "claimed_all": claimed, "expansions_checked": count }),
                );
            }
            if *transform {
                let phi: Vec<BigRational> = (1..=p.d())
                    .map(|i| BigRational::from_integer((i as i64).into()))
                    .collect();
                let mut dev: f64 = 0.0;
                for r in 0..table.indices().len() {
                    let n = table.indices().get(r).to_vec();
                    let check = transform_check(&p, &basis, sys.n_balls, &n, &phi, cfg.capacity)?;
                    dev = dev.max(check.deviation);
                }
                let pass = dev <= cfg.tol;
                ok &= pass;
                checks.insert(
                    "transform".into(),
                    json!({ "ok": pass, "max_deviation": dev, "phi": rat_strings(&phi) }),
                );
            }
            if *kernel_invariance {
                let other_kind = match sys.basis {
                    BasisKind::Helmert => BasisKind::Xu,
                    BasisKind::Xu => BasisKind::Helmert,
                };
                let other: OrthoBasis<S> = build_basis(other_kind, &p)?;
                let other_table = build_table(&p, &other, sys.n_balls, cfg.capacity)?;
                let ours = reproducing_kernels(&table)?;
                let theirs = reproducing_kernels(&other_table)?;
                let mut dev: f64 = 0.0;
                for (a, b) in ours.iter().zip(theirs.iter()) {
                    for (ra, rb) in a.iter().zip(b.iter()) {
                        for (va, vb) in ra.iter().zip(rb.iter()) {
                            dev = dev.max((va.clone() - vb.clone()).abs_f64());
                        }
                    }
                }
                let pass = dev <= cfg.tol;
                ok &= pass;
                checks.insert(
                    "kernel_invariance".into(),
                    json!({ "ok": pass, "max_deviation": dev, "against": other_kind.name() }),
                );
            }
            if checks.is_empty() {
                return Err(Error::Invalid(
                    "pass at least one identity flag (see --help)".into(),
                ));
            }
            let doc = json!({
                "schema": io::SCHEMA,
                "d": p.d(),
                "N": sys.n_balls,
                "p": rat_strings(p.as_slice()),
                "basis": sys.basis.name(),
                "backend": run.backend.name(),
                "ok": ok,
                "checks": Value::Object(checks),
            });
            emit(&doc, &run.output)?;
            Ok(if ok { 0 } else { 1 })
        }
    }
}

/// Worst deviation of the conditional-binomial product polynomials from
/// their closed-form rescaling of the table values, over all (n, x).
fn xu_identity_gap<S: Scalar>(
    p: &ProbabilityVector,
    n_balls: u32,
    capacity: u128,
) -> Result<(f64, usize)> {
    let basis: OrthoBasis<S> = xu(p)?;
    let table = build_table(p, &basis, n_balls, capacity)?;
    let mut dev: f64 = 0.0;
    let mut count = 0usize;
    for r in 0..table.indices().len() {
        let n = table.indices().get(r).to_vec();
        let total: u32 = n.iter().sum();
        let mut scale = BigRational::one() / rising_int(-(n_balls as i64), total);
        let mut head = BigRational::zero();
        for (j, &k) in n.iter().enumerate() {
            scale *= big_to_rational(&factorial(k));
            let base = p.get(j) / (BigRational::one() - &head);
            scale *= num::pow::pow(base, k as usize);
            head += p.get(j);
        }
        let scale = S::from_rational(&scale);
        for (xi, x) in table.states().iter().enumerate() {
            let k_val = S::from_rational(&eval_xu_k(p, x, &n, n_balls)?);
            let q = table.value(r, xi);
            dev = dev.max((k_val - scale.mul_ref(q)).abs_f64());
            count += 1;
        }
    }
    Ok((dev, count))
}

// ------------------------------------------------------------------ chain

enum Built<S> {
    Single(SingleBallChain<S>, Option<Value>),
    Comp(CompositionChain<S>),
}

enum Mode<'a> {
    Build,
    Verify,
    Simulate(&'a SimArgs),
}

fn chain_cmd(cmd: &ChainCmd, run: &RunArgs, cfg: &RunConfig) -> Result<i32> {
    let (mode, kind) = match cmd {
        ChainCmd::Build { kind } => (Mode::Build, kind),
        ChainCmd::VerifyEigen { kind } => (Mode::Verify, kind),
        ChainCmd::Simulate { sim, kind } => (Mode::Simulate(sim), kind),
    };
    match kind {
        ChainKind::Metropolis { p, lift } => with_backend!(run.backend, S, {
            let ball = metropolis_chain::<S>(&pvec(p)?)?;
            finish_chain(mode, lift_built(ball, lift, cfg.capacity)?, run, cfg)
        }),
        ChainKind::Ehrenfest {
            p,
            n_balls,
            k,
            ball,
        } => with_backend!(run.backend, S, {
            let p = pvec(p)?;
            let single: SingleBallChain<S> = match ball {
                BallKind::Refresh => refresh_chain(&p, &helmert(&p)?)?,
                BallKind::Metropolis => metropolis_chain(&p)?,
            };
            let chain = ehrenfest_chain(&single, *n_balls, *k, cfg.capacity)?;
            finish_chain(mode, Built::Comp(chain), run, cfg)
        }),
        ChainKind::StickyRefresh {
            retention,
            theta,
            lift,
        } => {
            let theta = ProbabilityVector::new(parse_rationals(theta)?)?;
            let ball = sticky_refresh_chain(&parse_rationals(retention)?, &theta)?;
            finish_chain(mode, lift_built(ball, lift, cfg.capacity)?, run, cfg)
        }
        ChainKind::Circulant { q, lift } => {
            let ball = circulant_chain(&parse_rationals(q)?)?;
            finish_chain(mode, lift_built(ball, lift, cfg.capacity)?, run, cfg)
        }
        ChainKind::Lightbulb { n_balls, k } => with_backend!(run.backend, S, {
            let chain = lightbulb_chain::<S>(*n_balls, *k, cfg.capacity)?;
            finish_chain(mode, Built::Comp(chain), run, cfg)
        }),
        ChainKind::Lancaster { p, beta, basis } => with_backend!(run.backend, S, {
            let p = pvec(p)?;
            let u: OrthoBasis<S> = build_basis(*basis, &p)?;
            if beta.is_empty() {
                return Err(Error::Invalid("give at least one --beta point".into()));
            }
            let points: Vec<Vec<S>> = beta
                .iter()
                .map(|spec| {
                    spec.split(',')
                        .map(|t| Ok(S::from_rational(&parse_rational(t)?)))
                        .collect::<Result<Vec<S>>>()
                })
                .collect::<Result<_>>()?;
            if points.len() == 1 {
                let (ball, membership) = lancaster_kernel(&points[0], &u, &p, cfg.tol)?;
                finish_chain(
                    mode,
                    Built::Single(ball, Some(positivity_json(&membership))),
                    run,
                    cfg,
                )
            } else {
                let chain = lancaster_urn_chain(&points, &u, &p, cfg.capacity)?;
                finish_chain(mode, Built::Comp(chain), run, cfg)
            }
        }),
    }
}

fn lift_built<S: Scalar>(
    ball: SingleBallChain<S>,
    args: &LiftArgs,
    capacity: u128,
) -> Result<Built<S>> {
    let Some(n_balls) = args.n_balls else {
        return Ok(Built::Single(ball, None));
    };
    let chain = match args.lift {
        LiftKind::SingleSite => single_site_chain(&ball, n_balls, capacity)?,
        LiftKind::Independent => independent_all_chain(&ball, n_balls, capacity)?,
        LiftKind::Subset => {
            let law = args
                .law
                .as_ref()
                .ok_or_else(|| Error::Invalid("--lift subset needs --law".into()))?;
            let law = SubsetLaw::new(parse_rationals(law)?)?;
            subset_chain(&ball, n_balls, &law, capacity)?
        }
    };
    Ok(Built::Comp(chain))
}

fn finish_chain<S: Scalar>(
    mode: Mode,
    built: Built<S>,
    run: &RunArgs,
    cfg: &RunConfig,
) -> Result<i32> {
    match (mode, built) {
        (Mode::Build, Built::Single(ball, extra)) => {
            let mut doc = io::single_ball_json(&ball);
            if let Some(membership) = extra {
                doc["membership"] = membership;
            }
            emit(&doc, &run.output)?;
            Ok(0)
        }
        (Mode::Build, Built::Comp(chain)) => {
            emit(&io::composition_chain_json(&chain), &run.output)?;
            Ok(0)
        }
        (Mode::Verify, Built::Single(ball, _)) => {
            let rep = ball.validate(cfg.tol);
            let doc = json!({
                "schema": io::SCHEMA,
                "d": ball.d(),
                "ok": rep.ok,
                "row_sum_dev": rep.row_sum_dev,
                "min_entry": rep.min_entry,
                "stationarity_dev": rep.stationarity_dev,
                "biorthogonality_dev": rep.biorthogonality_dev,
                "right_residual": rep.right_residual,
                "left_residual": rep.left_residual,
                "rho": scalar_strings(&ball.eigen.rho),
            });
            emit(&doc, &run.output)?;
            Ok(if rep.ok { 0 } else { 1 })
        }
        (Mode::Verify, Built::Comp(chain)) => {
            let alpha = build_table(
                &chain.p,
                &chain.ball.eigen.alpha_basis(),
                chain.n_balls,
                cfg.capacity,
            )?;
            let beta = build_table(
                &chain.p,
                &chain.ball.eigen.beta_basis(),
                chain.n_balls,
                cfg.capacity,
            )?;
            let residuals = eigen_residuals(&chain, &alpha, &beta);
            let rep = verify_eigen(&chain, &alpha, &beta, cfg.tol);
            let (row_gap, min_entry) = chain.stochasticity();
            let stationarity = chain.stationarity_gap();
            let imaginary = chain.imaginary_residue();
            let ok = rep.ok
                && row_gap <= cfg.tol
                && min_entry >= -cfg.tol
                && stationarity <= cfg.tol
                && imaginary <= cfg.tol;
            let mut doc = io::spectral_report_json(&chain, &residuals);
            doc["ok"] = json!(ok);
            doc["max_right_residual"] = json!(rep.max_right_residual);
            doc["max_left_residual"] = json!(rep.max_left_residual);
            doc["worst_index"] = json!(rep.worst_index);
            doc["row_sum_gap"] = json!(row_gap);
            doc["min_entry"] = json!(min_entry);
            doc["stationarity_gap"] = json!(stationarity);
            doc["imaginary_residue"] = json!(imaginary);
            doc["reconstruction_gap"] = json!(reconstruction_gap(&chain, &alpha, &beta));
            emit(&doc, &run.output)?;
            Ok(if ok { 0 } else { 1 })
        }
        (Mode::Simulate(_), Built::Single(..)) => Err(Error::Invalid(
            "simulation runs on composition chains; lift the move with -N".into(),
        )),
        (Mode::Simulate(sim), Built::Comp(chain)) => {
            let start = match &sim.start {
                Some(s) => parse_label(s)?,
                None => chain.states.get(0).to_vec(),
            };
            let report = match &sim.trace {
                Some(path) => {
                    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
                    let report =
                        simulate_trace(&chain, &start, sim.steps, cfg.seed, |step, state| {
                            let _ = writeln!(file, "{}", io::trace_line(step, state));
                        })?;
                    file.flush()?;
                    report
                }
                None => simulate(&chain, &start, sim.steps, cfg.seed)?,
            };
            let doc = json!({
                "schema": io::SCHEMA,
                "steps": report.steps,
                "seed": cfg.seed,
                "start": start,
                "final_state": report.final_state,
                "states": chain.states.iter().cloned().collect::<Vec<_>>(),
                "occupation": report.occupation,
                "tv_to_stationary": report.tv_to_stationary,
            });
            emit(&doc, &run.output)?;
            Ok(0)
        }
    }
}

// -------------------------------------------------------------- lancaster

fn lancaster_cmd<S: Scalar>(cmd: &LancasterCmd, run: &RunArgs, cfg: &RunConfig) -> Result<i32> {
    match cmd {
        LancasterCmd::Build(args) => bivariate_cmd::<S>(args, false, run, cfg),
        LancasterCmd::Check(args) => bivariate_cmd::<S>(args, true, run, cfg),
        LancasterCmd::Extract {
            sys,
            joint,
            normalize,
        } => {
            let p = pvec(&sys.p)?;
            let basis: OrthoBasis<S> = build_basis(sys.basis, &p)?;
            let table = build_table(&p, &basis, sys.n_balls, cfg.capacity)?;
            let text = std::fs::read_to_string(joint)?;
            let mut values: Vec<Vec<S>> = io::matrix_from_csv(&text)?;
            if *normalize {
                values = io::normalize_matrix(&values)?;
            }
            let states = table.states().len();
            if values.len() != states || values.iter().any(|row| row.len() != states) {
                return Err(Error::Dimension(format!(
                    "joint table must be {states}x{states} for d={} N={}",
                    p.d(),
                    sys.n_balls
                )));
            }
            let joint = BivariateTable {
                values,
                rho: Vec::new(),
                n_balls: sys.n_balls,
            };
            let margin_gap = joint.margin_gap(&table);
            if margin_gap > cfg.tol {
                let doc = json!({
                    "schema": io::SCHEMA,
                    "ok": false,
                    "margin_gap": margin_gap,
                });
                emit(&doc, &run.output)?;
                return Ok(1);
            }
            let rep = extract_correlations(&joint, &table, cfg.tol)?;
            let ok = rep.max_cross <= cfg.tol;
            let indices: Vec<Vec<u32>> = (0..table.indices().len())
                .map(|r| table.indices().get(r).to_vec())
                .collect();
            let doc = json!({
                "schema": io::SCHEMA,
                "d": p.d(),
                "N": sys.n_balls,
                "p": rat_strings(p.as_slice()),
                "ok": ok,
                "indices": indices,
                "rho": scalar_strings(&rep.rho),
                "max_cross": rep.max_cross,
                "worst_cross": [rep.worst_cross.0, rep.worst_cross.1],
                "margin_gap": rep.margin_gap,
            });
            emit(&doc, &run.output)?;
            Ok(if ok { 0 } else { 1 })
        }
        LancasterCmd::Linearize { sys, x, y } => {
            let p = pvec(&sys.p)?;
            let basis: OrthoBasis<S> = build_basis(sys.basis, &p)?;
            let table = build_table(&p, &basis, sys.n_balls, cfg.capacity)?;
            let x = parse_label(x)?;
            let y = parse_label(y)?;
            let base = hypergroup_check(&h_matrix(&p, &basis)?, cfg.tol)?;
            if !base.holds {
                let doc = json!({
                    "schema": io::SCHEMA,
                    "ok": false,
                    "hypergroup": positivity_json(&base),
                });
                emit(&doc, &run.output)?;
                return Ok(1);
            }
            let phi = linearization_distribution(&table, &x, &y, cfg.tol)?;
            let mass = mass_gap(&phi);
            let identity = linearization_identity_gap(&table, &x, &y, &phi)?;
            let min_value = phi.iter().map(|v| v.to_f64()).fold(f64::INFINITY, f64::min);
            let ok = mass <= cfg.tol && identity <= cfg.tol && min_value >= -cfg.tol;
            let doc = json!({
                "schema": io::SCHEMA,
                "d": p.d(),
                "N": sys.n_balls,
                "p": rat_strings(p.as_slice()),
                "x": x,
                "y": y,
                "states": table.states().iter().cloned().collect::<Vec<_>>(),
                "phi": scalar_strings(&phi),
                "ok": ok,
                "mass_gap": mass,
                "identity_gap": identity,
                "min_value": min_value,
            });
            emit(&doc, &run.output)?;
            Ok(if ok { 0 } else { 1 })
        }
    }
}

fn bivariate_cmd<S: Scalar>(
    args: &BivariateArgs,
    gate: bool,
    run: &RunArgs,
    cfg: &RunConfig,
) -> Result<i32> {
    let p = pvec(&args.sys.p)?;
    let basis: OrthoBasis<S> = build_basis(args.sys.basis, &p)?;
    let table = build_table(&p, &basis, args.sys.n_balls, cfg.capacity)?;
    let mut rho: BTreeMap<Vec<u32>, S> = BTreeMap::new();
    for spec in &args.rho {
        let (idx, val) = spec
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected index=value, got {spec:?}")))?;
        rho.insert(parse_label(idx)?, S::from_rational(&parse_rational(val)?));
    }
    let (joint, positivity) = bivariate_from_correlations(&rho, &table, cfg.tol)?;
    let mut doc = io::bivariate_json(&joint, &table);
    doc["positivity"] = positivity_json(&positivity);
    doc["margin_gap"] = json!(joint.margin_gap(&table));
    doc["total_gap"] = json!(joint.total_gap());
    emit(&doc, &run.output)?;
    Ok(if gate && !positivity.holds { 1 } else { 0 })
}
