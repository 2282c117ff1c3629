//! znkz command-line interface. Every command prints one JSON report.
//! Exit codes: 0 pass, 1 check failed, 2 input error, 3 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use znkz::json::{self as js, CurveInput};
use znkz::kz::{self, CycleRef, Solver, Theorem};
use znkz::mp::{self, Prec, DEFAULT_PRECISION};
use znkz::periods::Periods;
use znkz::verify::{self, IdentityCase, IdentityId, Rel4Reading};
use znkz::{theta, CurveSpec, Error, OrderedPartition};

const PRECISION_ENV: &str = "ZNKZ_PRECISION";

#[derive(Parser, Debug)]
#[command(name = "znkz", version, about = "KZ solutions on Z_N curves: periods, theta formulas, exact identity checks")]
struct Cli {
    /// Working precision in bits (default: curve file, then $ZNKZ_PRECISION, then 128)
    #[arg(long, global = true)]
    precision: Option<u32>,
    /// Write the report here instead of stdout
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Seed for randomized checks
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Regenerate the regression fixtures into DIR and exit
    #[arg(long, value_name = "DIR")]
    fixtures: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Genus and L for (N, m) or a curve file
    Genus {
        curve: Option<PathBuf>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Period matrices A, tau, sigma and the D coefficients
    Periods {
        curve: PathBuf,
        /// Include cycle polylines for plotting
        #[arg(long)]
        export_cycles: bool,
    },
    /// Integral solution f_Lambda for every partition
    Solve {
        curve: PathBuf,
        /// Cycle list such as A1,A2
        #[arg(long, value_delimiter = ',')]
        cycles: Option<Vec<String>>,
        /// 1-based branch indices p_1..p_L
        #[arg(long, value_delimiter = ',')]
        pset: Option<Vec<usize>>,
        /// 1: mu determinant, 2: zeta determinant
        #[arg(long, default_value_t = 1)]
        theorem: u8,
    },
    /// Finite-difference residual of the KZ equation
    CheckKz {
        curve: PathBuf,
        /// Branch indices to differentiate in (default: all)
        #[arg(long, value_delimiter = ',')]
        p: Option<Vec<usize>>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// sl_N singlet residual of the solution vector
    CheckSinglet {
        curve: PathBuf,
        #[arg(long, default_value_t = 1e-20)]
        tolerance: f64,
    },
    /// Theta-function solution and its ratio to the integral solution
    ThetaSolve {
        curve: PathBuf,
        /// 1-based indices i_1..i_L (default 1..L)
        #[arg(long, value_delimiter = ',')]
        index_set: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Thomae constancy over perturbed copies of the curve
    CheckThomae {
        curve: PathBuf,
        /// Partition as "1,2|3,4" (default: standard)
        #[arg(long)]
        partition: Option<String>,
        #[arg(long, default_value_t = 3)]
        samples: usize,
        /// Perturbation size relative to the minimal branch point distance
        #[arg(long, default_value_t = 0.05)]
        scale: f64,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// N = 2 Smirnov formula against the integral solution
    CheckSmirnov {
        curve: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Exact rational checks of the algebraic identities
    CheckIdentities {
        /// Identity id (default: all)
        #[arg(long)]
        id: Option<String>,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Index tuple (default: every admissible tuple)
        #[arg(long, value_delimiter = ',')]
        indices: Option<Vec<usize>>,
        /// Partition as "1,2|3,4" (default: standard)
        #[arg(long)]
        partition: Option<String>,
        /// Run the appendix derivation suite instead
        #[arg(long)]
        appendix: bool,
    },
    /// mult(0, V^{Nm}), I(N, m) and their ratio
    DimCount {
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        m: usize,
    },
}

enum Failure {
    Input(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numeric(e.to_string())
        }
    }
}

type Out = Result<(Value, bool), Failure>;

struct Loaded {
    spec: CurveSpec,
    hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn env_precision() -> Result<Option<u32>, Failure> {
    match std::env::var(PRECISION_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Input(format!("{PRECISION_ENV}={s:?} is not an integer"))),
        Err(_) => Ok(None),
    }
}

fn resolve_precision(flag: Option<u32>, file: Option<u32>) -> Result<Prec, Failure> {
    let p = match flag.or(file) {
        Some(p) => p,
        None => env_precision()?.unwrap_or(DEFAULT_PRECISION),
    };
    if p < 53 {
        return Err(Failure::Input(format!("precision {p} below 53 bits")));
    }
    Ok(p)
}

fn load(path: &Path, flag: Option<u32>) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Failure::Input("curve file is not UTF-8".into()))?;
    let input = js::parse_curve(&text)?;
    let prec = resolve_precision(flag, input.precision_bits)?;
    Ok(Loaded { spec: input.build(prec)?, hash: sha256_hex(&bytes) })
}

fn solve_options(solver: &Solver, cycles: &Option<Vec<String>>, pset: &Option<Vec<usize>>, theorem: u8) -> Result<kz::SolveOptions, Failure> {
    let mut opts = solver.default_options()?;
    if let Some(c) = cycles {
        opts.cycles = c.iter().map(|s| CycleRef::parse(s)).collect::<znkz::Result<Vec<_>>>()?;
    }
    if let Some(p) = pset {
        opts.pset = p.clone();
    }
    opts.theorem = match theorem {
        1 => Theorem::Mu,
        2 => Theorem::Zeta,
        t => return Err(Failure::Input(format!("--theorem must be 1 or 2, got {t}"))),
    };
    Ok(opts)
}

fn cycle_name(c: &CycleRef) -> String {
    match c {
        CycleRef::A(i) => format!("A{i}"),
        CycleRef::B(i) => format!("B{i}"),
    }
}

fn solution_json(spec: &CurveSpec, sol: &kz::SolutionVector) -> Value {
    let prec = spec.prec();
    let rows: Vec<Value> = sol
        .partitions
        .iter()
        .enumerate()
        .map(|(k, pt)| {
            json!({
                "partition": js::partition(pt),
                "value": js::complex(&sol.f[k], prec),
                "fbar": js::complex(&sol.fbar[k], prec),
                "err": js::real(sol.err[k]),
            })
        })
        .collect();
    json!({
        "solutions": rows,
        "branch_metadata": {
            "base_point": js::complex(spec.base(), prec),
            "log_delta": js::complex(&sol.log_delta, prec),
            "delta_power": "principal log",
            "cycles": sol.cycles.iter().map(cycle_name).collect::<Vec<_>>(),
            "pset": sol.pset,
            "theorem": if sol.theorem == Theorem::Mu { 1 } else { 2 },
        },
        "err": js::real(sol.max_err()),
    })
}

fn periods_json(p: &Periods, export: bool) -> Value {
    let prec = p.spec.prec();
    let d = &p.data;
    let mut v = json!({
        "A": js::cmat(&d.a_matrix, prec),
        "B": js::cmat(&d.b_matrix, prec),
        "tau": js::cmat(&d.tau, prec),
        "sigma": js::cmat(&d.sigma, prec),
        "D": js::cmat(&d.d_coeffs, prec),
        "err": js::real(d.err),
        "cond": js::real(d.cond),
        "normalization_defect": js::real(d.normalization_defect),
        "b_flipped": d.flipped,
        "genus": p.genus(),
    });
    if export {
        let cycles = znkz::homology::elementary_cycles(&p.spec)
            .map(|c| znkz::homology::export_cycles(&p.spec, &c))
            .ok();
        v["cycles"] = serde_json::to_value(cycles).unwrap_or(Value::Null);
    }
    v
}

fn check(residual: f64, tolerance: f64) -> (Value, bool) {
    let pass = residual.is_finite() && residual < tolerance;
    (json!({"residual": js::real(residual), "tolerance": js::real(tolerance), "pass": pass}), pass)
}

fn characteristics_json(ch: &theta::Characteristics) -> Value {
    json!({"delta": ch.delta_strings(), "epsilon": ch.epsilon_strings()})
}

fn perturbed_samples(spec: &CurveSpec, count: usize, scale: f64, seed: u64) -> Result<Vec<CurveSpec>, Failure> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let step = scale * spec.min_dist();
    let prec = spec.prec();
    let mut out = vec![spec.clone()];
    while out.len() < count.max(1) {
        let lams: Vec<_> = spec
            .lambdas()
            .iter()
            .map(|l| {
                let (dx, dy): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                rug::Complex::with_val(prec, l + mp::c(prec, dx * step, dy * step))
            })
            .collect();
        out.push(CurveSpec::new(spec.n(), spec.m(), lams, prec)?);
    }
    Ok(out)
}

fn run_identities(
    id: &Option<String>,
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
    indices: &Option<Vec<usize>>,
    partition: &Option<String>,
) -> Out {
    let pt = match partition {
        Some(s) => js::parse_partition(s)?,
        None => OrderedPartition::standard(n, m),
    };
    if pt.n() != n || pt.m() != m {
        return Err(Failure::Input("partition does not match --N/--m".into()));
    }
    let ids: Vec<IdentityId> = match id {
        Some(s) => vec![s.parse()?],
        None => IdentityId::ALL.to_vec(),
    };
    let mut results = Vec::new();
    let mut pass = true;
    for id in ids {
        let cases = match indices {
            Some(ix) => {
                let mut out = Vec::new();
                for reading in readings(id) {
                    let mut case = IdentityCase::new(id, n, m, ix.clone()).with_partition(pt.clone()).with_trials(trials, seed);
                    case.reading = reading;
                    out.push(verify::run_case(&case)?);
                }
                out
            }
            None => verify::run_all_indices(id, &pt, trials, seed)?,
        };
        for r in cases {
            // the rel4 reading that the derivation supports decides the verdict
            let counts = r.reading.is_none_or(|x| x == Rel4Reading::Literal);
            if counts {
                pass &= r.pass;
            }
            let mut params = Map::new();
            params.insert("N".into(), json!(n));
            params.insert("m".into(), json!(m));
            params.insert("partition".into(), json!(r.partition));
            for (name, v) in id.schema().iter().zip(&r.indices) {
                params.insert((*name).into(), json!(v));
            }
            if let Some(x) = r.reading {
                params.insert("reading".into(), json!(x));
            }
            let mut row = json!({"id": id.as_str(), "params": params, "pass": r.pass, "trials": r.trials});
            if let Some(w) = &r.witness {
                row["witness"] = serde_json::to_value(w).unwrap_or(Value::Null);
            }
            results.push(row);
        }
    }
    Ok((json!({"results": results, "seed": seed, "pass": pass}), pass))
}

fn readings(id: IdentityId) -> Vec<Rel4Reading> {
    if id == IdentityId::Rel4 {
        vec![Rel4Reading::Literal, Rel4Reading::Shifted]
    } else {
        vec![Rel4Reading::Literal]
    }
}

fn run(cli: &Cli, cmd: &Cmd) -> Result<(Value, bool, String, Option<Prec>), Failure> {
    let flag = cli.precision;
    let args_hash = || sha256_hex(format!("{cmd:?}").as_bytes());
    match cmd {
        Cmd::Genus { curve, n, m } => {
            let (n, m, hash, prec) = match curve {
                Some(path) => {
                    let l = load(path, flag)?;
                    (l.spec.n(), l.spec.m(), l.hash, Some(l.spec.prec()))
                }
                None => match (n, m) {
                    (Some(n), Some(m)) => (*n, *m, args_hash(), None),
                    _ => return Err(Failure::Input("give a curve file or --N and --m".into())),
                },
            };
            if n < 2 || m < 1 {
                return Err(Failure::Input(format!("need N >= 2 and m >= 1, got N={n}, m={m}")));
            }
            let v = json!({"N": n, "m": m, "genus": znkz::curve::genus_of(n, m), "L": znkz::curve::ell_of(n, m)});
            Ok((v, true, hash, prec))
        }
        Cmd::Periods { curve, export_cycles } => {
            let l = load(curve, flag)?;
            let p = Periods::compute(&l.spec)?;
            Ok((periods_json(&p, *export_cycles), true, l.hash, Some(l.spec.prec())))
        }
        Cmd::Solve { curve, cycles, pset, theorem } => {
            let l = load(curve, flag)?;
            let solver = Solver::new(&l.spec)?;
            let opts = solve_options(&solver, cycles, pset, *theorem)?;
            let sol = solver.solve(&opts)?;
            Ok((solution_json(&l.spec, &sol), true, l.hash, Some(l.spec.prec())))
        }
        Cmd::CheckKz { curve, p, h, tolerance } => {
            let l = load(curve, flag)?;
            let solver = Solver::new(&l.spec)?;
            let opts = solver.default_options()?;
            let ps: Vec<usize> = p.clone().unwrap_or_else(|| (1..=l.spec.count()).collect());
            let mut worst: f64 = 0.0;
            for q in ps {
                worst = worst.max(kz::kz_residual(&solver, &opts, q, *h)?);
            }
            let (v, pass) = check(worst, *tolerance);
            Ok((v, pass, l.hash, Some(l.spec.prec())))
        }
        Cmd::CheckSinglet { curve, tolerance } => {
            let l = load(curve, flag)?;
            let solver = Solver::new(&l.spec)?;
            let sol = solver.solve(&solver.default_options()?)?;
            let (v, pass) = check(kz::singlet_residual(&l.spec, &sol), *tolerance);
            Ok((v, pass, l.hash, Some(l.spec.prec())))
        }
        Cmd::ThetaSolve { curve, index_set, tolerance } => {
            let l = load(curve, flag)?;
            let spec = &l.spec;
            let prec = spec.prec();
            let periods = Periods::compute(spec)?;
            let anchor = OrderedPartition::standard(spec.n(), spec.m());
            let map = theta::find_characteristics(&periods, &anchor)?;
            let ix: Vec<usize> = index_set.clone().unwrap_or_else(|| (1..=spec.ell()).collect());
            let vals = theta::theta_solutions(&periods, &map, &ix)?;
            let solver = Solver::with_periods(spec, Some(periods.clone()))?;
            let sol = solver.solve(&solver.default_options()?)?;
            let spread = theta::ratio_spread(&vals, &sol.f);
            let pass = spread.is_finite() && spread < *tolerance;
            let rows: Vec<Value> = sol
                .partitions
                .iter()
                .zip(&vals)
                .map(|(pt, v)| {
                    json!({
                        "partition": js::partition(pt),
                        "value": js::complex(v, prec),
                        "characteristics": characteristics_json(&map.for_partition(pt)),
                    })
                })
                .collect();
            let v = json!({
                "solutions": rows,
                "index_set": ix,
                "characteristics": characteristics_json(&map.for_partition(&anchor)),
                "shift": characteristics_json(&map.shift),
                "anchor_defect": js::real(map.anchor_defect),
                "candidates_tested": map.candidates_tested,
                "ratio_spread": js::real(spread),
                "tolerance": js::real(*tolerance),
                "pass": pass,
            });
            Ok((v, pass, l.hash, Some(prec)))
        }
        Cmd::CheckThomae { curve, partition, samples, scale, tolerance } => {
            let l = load(curve, flag)?;
            let pt = match partition {
                Some(s) => js::parse_partition(s)?,
                None => OrderedPartition::standard(l.spec.n(), l.spec.m()),
            };
            if pt.n() != l.spec.n() || pt.m() != l.spec.m() {
                return Err(Failure::Input("partition does not match the curve".into()));
            }
            let curves = perturbed_samples(&l.spec, *samples, *scale, cli.seed)?;
            let rep = theta::thomae_check(&curves, &pt)?;
            let pass = rep.spread < *tolerance && rep.composite_spread < *tolerance;
            let v = json!({
                "partition": js::partition(&pt),
                "samples": curves.iter().map(|c| CurveInput::from_spec(c).to_json()).collect::<Vec<_>>(),
                "characteristics": rep.characteristics.iter().map(characteristics_json).collect::<Vec<_>>(),
                "residual": js::real(rep.spread),
                "composite_residual": js::real(rep.composite_spread),
                "tolerance": js::real(*tolerance),
                "pass": pass,
            });
            Ok((v, pass, l.hash, Some(l.spec.prec())))
        }
        Cmd::CheckSmirnov { curve, tolerance } => {
            let l = load(curve, flag)?;
            let periods = Periods::compute(&l.spec)?;
            let anchor = OrderedPartition::standard(l.spec.n(), l.spec.m());
            let map = theta::find_characteristics(&periods, &anchor)?;
            let sm = theta::smirnov_sl2(&periods, &map)?;
            let solver = Solver::with_periods(&l.spec, Some(periods))?;
            let sol = solver.solve(&solver.default_options()?)?;
            let vals: Vec<_> = sm.into_iter().map(|(_, v)| v).collect();
            let (v, pass) = check(theta::ratio_modulus_spread(&vals, &sol.f), *tolerance);
            Ok((v, pass, l.hash, Some(l.spec.prec())))
        }
        Cmd::CheckIdentities { id, n, m, trials, indices, partition, appendix } => {
            let (v, pass) = if *appendix {
                let rep = verify::verify_appendix_suite(*n, *m, *trials, cli.seed)?;
                let pass = rep.all_pass();
                let mut v = serde_json::to_value(&rep).unwrap_or(Value::Null);
                v["pass"] = json!(pass);
                (v, pass)
            } else {
                run_identities(id, *n, *m, *trials, cli.seed, indices, partition)?
            };
            Ok((v, pass, args_hash(), None))
        }
        Cmd::DimCount { n, m } => {
            let d = kz::dim_counts(*n, *m)?;
            let int = |x: &rug::Integer| x.to_u64().map(|u| json!(u)).unwrap_or_else(|| json!(x.to_string()));
            let v = json!({"N": n, "m": m, "mult": int(&d.mult), "I": int(&d.i), "ratio": d.ratio.to_string()});
            Ok((v, true, args_hash(), None))
        }
    }
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Genus { .. } => "genus",
        Cmd::Periods { .. } => "periods",
        Cmd::Solve { .. } => "solve",
        Cmd::CheckKz { .. } => "check-kz",
        Cmd::CheckSinglet { .. } => "check-singlet",
        Cmd::ThetaSolve { .. } => "theta-solve",
        Cmd::CheckThomae { .. } => "check-thomae",
        Cmd::CheckSmirnov { .. } => "check-smirnov",
        Cmd::CheckIdentities { .. } => "check-identities",
        Cmd::DimCount { .. } => "dim-count",
    }
}

fn emit(out: &Option<PathBuf>, v: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("serializable report");
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn fixtures(dir: &Path, flag: Option<u32>) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    let prec = resolve_precision(flag, None)?;
    for (name, n, m, pts) in js::standard_fixtures() {
        let spec = js::fixture_curve(n, m, &pts, prec)?;
        let curve = CurveInput::from_spec(&spec).to_json();
        let curve_text = serde_json::to_string_pretty(&curve).expect("curve json") + "\n";
        let periods = Periods::compute(&spec)?;
        let solver = Solver::with_periods(&spec, Some(periods.clone()))?;
        let sol = solver.solve(&solver.default_options()?)?;
        let report = json!({
            "provenance": {
                "generator": "znkz --fixtures",
                "version": env!("CARGO_PKG_VERSION"),
                "input_sha256": sha256_hex(curve_text.as_bytes()),
                "precision_bits": prec,
            },
            "periods": periods_json(&periods, false),
            "solve": solution_json(&spec, &sol),
        });
        let write = |file: String, text: String| {
            fs::write(dir.join(&file), text).map_err(|e| Failure::Input(format!("{file}: {e}")))
        };
        write(format!("{name}.curve.json"), curve_text)?;
        write(format!("{name}.expected.json"), serde_json::to_string_pretty(&report).expect("report") + "\n")?;
    }
    Ok(())
}

fn fail(code: u8, kind: &str, msg: &str) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": msg}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(dir) = &cli.fixtures {
        return match fixtures(dir, cli.precision) {
            Ok(()) => ExitCode::SUCCESS,
            Err(Failure::Input(m)) => fail(2, "input", &m),
            Err(Failure::Numeric(m)) => fail(3, "numerical", &m),
        };
    }
    let Some(cmd) = &cli.command else {
        return fail(2, "input", "no command given (see --help)");
    };
    match run(&cli, cmd) {
        Ok((mut v, pass, hash, prec)) => {
            v["command"] = json!(command_name(cmd));
            v["input_sha256"] = json!(hash);
            if let Some(p) = prec {
                v["precision_bits"] = json!(p);
            }
            if let Err(e) = emit(&cli.output, &v) {
                return fail(2, "input", &e.to_string());
            }
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Failure::Input(m)) => fail(2, "input", &m),
        Err(Failure::Numeric(m)) => fail(3, "numerical", &m),
    }
}
