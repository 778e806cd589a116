//! `netfn`: batch front-end for network function codes.
//!
//! Exit status is 0 on success, 1 on a domain error and 2 on a usage error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_rational::Rational64;
use serde::Serialize;
use serde_json::{json, Value};

use netfn::capacity::robust_lower;
use netfn::code::{identity_target, sum_target, CodeFile, ErrorVector, LinearNetworkCode, ReceivedWord};
use netfn::decoder::{erasure_decode, md_decode, outage_decode};
use netfn::distance::{is_robust, min_distance, robust_by_exhaustion};
use netfn::error::{CodeError, ConstructionError, FieldError, GradientError, NetworkError};
use netfn::field::Field;
use netfn::gradient::{
    build_scheme, load_to_assignment, optimize_load, random_gradients, simulate, Adversary, DataAssignment,
    GradientCodingScheme, Quantizer, SchemeFile, WorkerProfile,
};
use netfn::identity_code::{construct_identity_code, construct_identity_code_auto, DEFAULT_PATTERN_CAP};
use netfn::matrix::FieldMatrix;
use netfn::network::{Network, NetworkSpec};
use netfn::sum_code::{construct_sum_code, construct_sum_code_auto, three_layer_sum_code};

#[derive(Parser)]
#[command(name = "netfn", version, about = "Robust linear network function computation")]
struct Cli {
    /// Print structured JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Network inspection.
    #[command(subcommand)]
    Net(NetCmd),
    /// Code construction and analysis.
    #[command(subcommand)]
    Code(CodeCmd),
    /// Decode a received word.
    Decode(DecodeArgs),
    /// Gradient coding.
    #[command(subcommand)]
    Grad(GradCmd),
}

#[derive(Subcommand)]
enum NetCmd {
    /// Check a network file.
    Validate {
        #[arg(long)]
        net: PathBuf,
    },
    /// Min-cut from a set of vertices to the sink (or `--to`).
    Mincut {
        #[arg(long)]
        net: PathBuf,
        /// Comma-separated vertex names.
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: Option<String>,
    },
    /// Robust capacity bounds with a witness construction.
    Bounds {
        #[arg(long)]
        net: PathBuf,
        #[command(flatten)]
        target: TargetArg,
        #[arg(long)]
        tau: usize,
        /// Field of the target matrix, `p` or `p^m`.
        #[arg(long, default_value = "7")]
        field: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct TargetArg {
    /// `sum`, `identity`, or rows like `1,0;2,1;0,3`.
    #[arg(long)]
    target: String,
}

#[derive(Args)]
struct NetCode {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    code: PathBuf,
}

#[derive(Subcommand)]
enum CodeCmd {
    /// Sum code with distance h − k + 1.
    ConstructSum {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        k: usize,
        /// `p` or `p^m`; omitted means the smallest prime field that works.
        #[arg(long)]
        field: Option<String>,
        /// Use the Reed–Solomon construction for three-layer networks.
        #[arg(long)]
        three_layer: bool,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identity code with distance δ + 1.
    ConstructIdentity {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        field: Option<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_PATTERN_CAP)]
        cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum distance of a code for a target.
    Distance {
        #[command(flatten)]
        files: NetCode,
        #[command(flatten)]
        target: TargetArg,
        /// Checked against the code file when given.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Whether a code corrects τ errors.
    Robust {
        #[command(flatten)]
        files: NetCode,
        #[command(flatten)]
        target: TargetArg,
        #[arg(long)]
        tau: usize,
        /// Also confirm by enumerating up to this many (message, error) pairs.
        #[arg(long)]
        exhaustive: Option<u64>,
    },
    /// Transmit a message with injected errors and decode it.
    Simulate {
        #[command(flatten)]
        files: NetCode,
        #[command(flatten)]
        target: TargetArg,
        /// Message symbols, source-major, comma-separated.
        #[arg(long)]
        x: String,
        /// Errors as `edge=value` pairs, comma-separated.
        #[arg(long, default_value = "")]
        errors: String,
        #[arg(long)]
        tau: usize,
    },
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    files: NetCode,
    #[command(flatten)]
    target: TargetArg,
    /// Received symbols, comma-separated, `*` for an erasure.
    #[arg(long)]
    word: String,
    #[arg(long, default_value_t = 0)]
    tau: usize,
    /// Known outage edges; switches to outage decoding.
    #[arg(long)]
    outages: Option<String>,
    /// Erasure-only decoding.
    #[arg(long)]
    erasure: bool,
}

#[derive(Subcommand)]
enum GradCmd {
    /// Optimal loads and a matching data assignment.
    Plan {
        /// Storage fractions, comma-separated rationals.
        #[arg(long)]
        r: String,
        /// Speeds, comma-separated rationals.
        #[arg(long)]
        s: String,
        #[arg(long)]
        tau_s: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a gradient coding scheme.
    Build {
        /// Assignment file.
        #[arg(long, conflicts_with = "cyclic")]
        assignment: Option<PathBuf>,
        /// `n,w`: n workers, worker i holds subsets i..i+w−1 mod n.
        #[arg(long)]
        cyclic: Option<String>,
        #[arg(long, default_value_t = 0)]
        tau_s: usize,
        #[arg(long, default_value_t = 0)]
        tau_b: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        field: String,
        /// Record a fixed-point scale for real-valued gradients.
        #[arg(long)]
        quantize_scale: Option<u64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end run with stragglers and Byzantine workers.
    Simulate {
        #[arg(long)]
        scheme: PathBuf,
        /// Straggling worker indices (0-based).
        #[arg(long, default_value = "")]
        stragglers: String,
        /// Byzantine worker indices (0-based).
        #[arg(long, default_value = "")]
        byzantine: String,
        #[arg(long)]
        seed: u64,
        /// Include wall-clock timings (breaks byte-identical output).
        #[arg(long)]
        timings: bool,
    },
}

/// Malformed argument values; reported with exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Stable short code for an error, printed as `error[code]`.
fn error_code(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return "usage";
        }
        if cause.is::<FieldError>() {
            return "field";
        }
        if cause.is::<NetworkError>() {
            return "network";
        }
        if cause.is::<CodeError>() {
            return "code";
        }
        if cause.is::<ConstructionError>() {
            return "construction";
        }
        if cause.is::<GradientError>() {
            return "gradient";
        }
        if cause.is::<serde_json::Error>() {
            return "parse";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "other"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = error_code(&e);
            eprintln!("error[{code}]: {e:#}");
            if code == "usage" {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

struct Out {
    json: bool,
}

impl Out {
    fn emit(&self, value: Value, human: impl fmt::Display) -> Result<()> {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&value)?);
        } else {
            println!("{human}");
        }
        Ok(())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_net(path: &Path) -> Result<Network> {
    let spec: NetworkSpec = read_json(path)?;
    Ok(Network::from_spec(&spec)?)
}

fn load_code(files: &NetCode) -> Result<(Network, LinearNetworkCode)> {
    let net = load_net(&files.net)?;
    let file: CodeFile = read_json(&files.code)?;
    let code = LinearNetworkCode::from_file(&net, &file)?;
    Ok((net, code))
}

fn parse_field(s: &str) -> Result<Field> {
    let (p, m) = match s.split_once('^') {
        Some((p, m)) => (p, m),
        None => (s, "1"),
    };
    let p: u32 = p.trim().parse().map_err(|_| usage(format!("bad field {s:?}")))?;
    let m: u32 = m.trim().parse().map_err(|_| usage(format!("bad field {s:?}")))?;
    Ok(Field::new(p, m, None)?)
}

fn parse_target(arg: &TargetArg, field: &Field, s: usize) -> Result<FieldMatrix> {
    match arg.target.as_str() {
        "sum" => Ok(sum_target(field, s)),
        "identity" => Ok(identity_target(field, s)),
        rows => {
            let parsed: Vec<Vec<i64>> = rows
                .split(';')
                .map(|r| {
                    r.split(',')
                        .map(|v| v.trim().parse::<i64>().map_err(|_| usage(format!("bad target entry {v:?}"))))
                        .collect()
                })
                .collect::<Result<_>>()?;
            if parsed.len() != s {
                return Err(usage(format!("target has {} rows for {s} sources", parsed.len())));
            }
            let refs: Vec<&[i64]> = parsed.iter().map(Vec::as_slice).collect();
            FieldMatrix::from_i64_rows(field, &refs).map_err(|e| usage(e.to_string()))
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| usage(format!("bad {what} {v:?}"))))
        .collect()
}

fn parse_symbols(s: &str, field: &Field) -> Result<Vec<u32>> {
    let v: Vec<u32> = parse_list(s, "symbol")?;
    if let Some(&bad) = v.iter().find(|&&x| !field.contains(x)) {
        return Err(usage(format!("symbol {bad} is not in GF({})", field.order())));
    }
    Ok(v)
}

fn fmt_vec<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn edge_ids(net: &Network, edges: &[usize]) -> Vec<String> {
    edges.iter().map(|&e| net.edge_id(e).to_string()).collect()
}

fn run(cli: &Cli) -> Result<()> {
    let out = Out { json: cli.json };
    match &cli.cmd {
        Command::Net(cmd) => run_net(cmd, &out),
        Command::Code(cmd) => run_code(cmd, &out),
        Command::Decode(args) => run_decode(args, &out),
        Command::Grad(cmd) => run_grad(cmd, &out),
    }
}

fn run_net(cmd: &NetCmd, out: &Out) -> Result<()> {
    match cmd {
        NetCmd::Validate { net } => {
            let n = load_net(net)?;
            let h = n.min_source_mincut();
            out.emit(
                json!({
                    "valid": true,
                    "vertices": n.vertex_count(),
                    "edges": n.edge_count(),
                    "sources": n.source_count(),
                    "min_source_mincut": h,
                }),
                format!(
                    "ok: {} vertices, {} edges, {} sources, min source cut {h}",
                    n.vertex_count(),
                    n.edge_count(),
                    n.source_count()
                ),
            )
        }
        NetCmd::Mincut { net, from, to } => {
            let n = load_net(net)?;
            let from: Vec<usize> = from
                .split(',')
                .map(|v| n.vertex_index(v.trim()))
                .collect::<Result<_, _>>()?;
            let to = match to {
                Some(v) => n.vertex_index(v)?,
                None => n.sink(),
            };
            let cut = n.min_cut(&from, to)?;
            out.emit(
                json!({ "value": cut.size, "cut": edge_ids(&n, &cut.edges) }),
                cut.size,
            )
        }
        NetCmd::Bounds {
            net,
            target,
            tau,
            field,
            seed,
        } => {
            let n = load_net(net)?;
            let f = parse_field(field)?;
            let t = parse_target(target, &f, n.source_count())?;
            let report = robust_lower(&n, &t, *tau, *seed)?;
            let human = format!(
                "upper = {}\nlower = {}\nscheme = {}\ngap = {}",
                report.upper,
                report.lower,
                serde_json::to_string(&report.scheme)?,
                report.gap
            );
            out.emit(serde_json::to_value(&report)?, human)
        }
    }
}

fn run_code(cmd: &CodeCmd, out: &Out) -> Result<()> {
    match cmd {
        CodeCmd::ConstructSum {
            net,
            k,
            field,
            three_layer,
            seed,
            out: path,
        } => {
            let n = load_net(net)?;
            let (bundle, log) = match (field, three_layer) {
                (Some(f), true) => (three_layer_sum_code(&n, *k, &parse_field(f)?, *seed)?, Vec::new()),
                (None, true) => {
                    let relays = n.sink_edges().len() as u64;
                    let f = Field::prime(netfn::field::next_prime(relays + 1) as u32)?;
                    (three_layer_sum_code(&n, *k, &f, *seed)?, Vec::new())
                }
                (Some(f), false) => (construct_sum_code(&n, *k, &parse_field(f)?, *seed)?, Vec::new()),
                (None, false) => construct_sum_code_auto(&n, *k, *seed, 2)?,
            };
            write_json(path, &bundle.code.to_file())?;
            let s = bundle.summary();
            let mut v = serde_json::to_value(&s)?;
            v["log"] = json!(log);
            if let Some(m) = &bundle.margin {
                v["gaussian_margin_sufficient"] = json!(m.sufficient);
            }
            out.emit(
                v,
                format!("d_min = {} (h = {}, k = {}, q = {}, seed = {})", s.d_min, s.h, s.k, s.q, s.seed),
            )
        }
        CodeCmd::ConstructIdentity {
            net,
            k,
            field,
            seed,
            cap,
            out: path,
        } => {
            let n = load_net(net)?;
            let bundle = match field {
                Some(f) => construct_identity_code(&n, *k, &parse_field(f)?, *seed, *cap)?,
                None => construct_identity_code_auto(&n, *k, *seed, *cap, 2)?,
            };
            write_json(path, &bundle.code.to_file())?;
            let s = bundle.summary();
            out.emit(
                serde_json::to_value(&s)?,
                format!(
                    "d_min = {} (δ = {}, |R(δ)| = {}, k = {}, q = {}, seed = {})",
                    s.d_min, s.delta, s.patterns, s.k, s.q, s.seed
                ),
            )
        }
        CodeCmd::Distance { files, target, k } => {
            let (net, code) = load_code(files)?;
            if let Some(k) = k {
                if *k != code.k() {
                    bail!(usage(format!("--k {k} but the code has rate {}", code.k())));
                }
            }
            let t = parse_target(target, code.field(), net.source_count())?;
            let cert = min_distance(&code, &t)?;
            let bound = net.cut_quantities(&t, code.k())?.singleton_bound;
            out.emit(
                json!({
                    "d_min": cert.d_min,
                    "singleton_bound": bound,
                    "pattern": edge_ids(&net, &cert.pattern),
                    "x": cert.x,
                    "z": cert.z,
                }),
                cert.d_min,
            )
        }
        CodeCmd::Robust {
            files,
            target,
            tau,
            exhaustive,
        } => {
            let (net, code) = load_code(files)?;
            let t = parse_target(target, code.field(), net.source_count())?;
            let d = min_distance(&code, &t)?.d_min;
            let robust = is_robust(&code, &t, *tau)?;
            let by_def = match exhaustive {
                Some(budget) => Some(robust_by_exhaustion(&code, &t, *tau, *budget)?),
                None => None,
            };
            if by_def.is_some_and(|b| b != robust) {
                return Err(anyhow!(CodeError::Invariant(
                    "distance criterion and exhaustive check disagree".into()
                )));
            }
            out.emit(
                json!({ "robust": robust, "d_min": d, "tau": tau, "exhaustive": by_def }),
                format!("robust = {robust} (d_min = {d}, τ = {tau})"),
            )
        }
        CodeCmd::Simulate {
            files,
            target,
            x,
            errors,
            tau,
        } => {
            let (net, code) = load_code(files)?;
            let field = code.field().clone();
            let t = parse_target(target, &field, net.source_count())?;
            let x = parse_symbols(x, &field)?;
            if x.len() != code.message_len() {
                bail!(usage(format!("--x needs {} symbols", code.message_len())));
            }
            let mut z = ErrorVector::zero(net.edge_count());
            for item in errors.split(',').filter(|s| !s.trim().is_empty()) {
                let (e, v) = item
                    .split_once('=')
                    .ok_or_else(|| usage(format!("error {item:?} is not edge=value")))?;
                let v = parse_symbols(v, &field)?[0];
                z.values[net.edge_index(e.trim())?] = v;
            }
            let y = code.transmit(&x, &z)?;
            let truth = code.target_kron(&t)?.vec_mul(&x)?;
            let res = md_decode(&code, &t, &ReceivedWord::from_values(&y), *tau)?;
            let correct = res.value.as_ref() == Some(&truth);
            out.emit(
                json!({
                    "received": y,
                    "error_weight": z.weight(),
                    "expected": truth,
                    "decoded": res,
                    "correct": correct,
                }),
                format!(
                    "received = {}\nexpected = {}\ndecoded = {}\ncorrect = {correct}",
                    fmt_vec(&y),
                    fmt_vec(&truth),
                    res.value.as_deref().map_or("detected-failure".into(), fmt_vec)
                ),
            )
        }
    }
}

fn run_decode(args: &DecodeArgs, out: &Out) -> Result<()> {
    let (net, code) = load_code(&args.files)?;
    let t = parse_target(&args.target, code.field(), net.source_count())?;
    let word: ReceivedWord = args.word.parse().map_err(|e| usage(format!("bad word: {e}")))?;
    if word.len() != net.sink_edges().len() {
        bail!(usage(format!("word needs {} symbols", net.sink_edges().len())));
    }
    if let Some(bad) = word.0.iter().flatten().find(|&&v| !code.field().contains(v)) {
        bail!(usage(format!("symbol {bad} is not in GF({})", code.field().order())));
    }
    let res = if let Some(list) = &args.outages {
        let outages: Vec<usize> = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|e| net.edge_index(e.trim()))
            .collect::<Result<_, _>>()?;
        outage_decode(&code, &t, &word, &outages)?
    } else if args.erasure {
        erasure_decode(&code, &t, &word)?
    } else {
        md_decode(&code, &t, &word, args.tau)?
    };
    let human = match &res.value {
        Some(v) if res.is_ok() => fmt_vec(v),
        _ => "detected-failure".to_string(),
    };
    out.emit(serde_json::to_value(&res)?, human)
}

fn parse_rationals(s: &str, what: &str) -> Result<Vec<Rational64>> {
    parse_list(s, what)
}

fn run_grad(cmd: &GradCmd, out: &Out) -> Result<()> {
    match cmd {
        GradCmd::Plan { r, s, tau_s, m, out: path } => {
            let r = parse_rationals(r, "storage")?;
            let s = parse_rationals(s, "speed")?;
            if r.len() != s.len() {
                bail!(usage("--r and --s need the same length"));
            }
            let profiles: Vec<WorkerProfile> = r
                .iter()
                .zip(&s)
                .map(|(&storage, &speed)| WorkerProfile { storage, speed })
                .collect();
            let mu = optimize_load(&profiles, *tau_s, *m)?;
            let time = mu.iter().zip(&s).map(|(&u, &v)| u / v).max().unwrap_or_default();
            let a = load_to_assignment(&mu, *tau_s, *m)?;
            if let Some(p) = path {
                write_json(p, &a)?;
            }
            out.emit(
                json!({
                    "mu": mu.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                    "time": time.to_string(),
                    "assignment": a,
                }),
                format!("μ = {}\ntime = {time}\nsubsets = {}", fmt_vec(&mu), a.subsets),
            )
        }
        GradCmd::Build {
            assignment,
            cyclic,
            tau_s,
            tau_b,
            m,
            p,
            field,
            quantize_scale,
            seed,
            out: path,
        } => {
            let a: DataAssignment = match (assignment, cyclic) {
                (Some(file), None) => read_json(file)?,
                (None, Some(spec)) => {
                    let v: Vec<usize> = parse_list(spec, "cyclic parameter")?;
                    if v.len() != 2 || v[1] == 0 || v[1] > v[0] {
                        bail!(usage("--cyclic takes n,w with 0 < w ≤ n"));
                    }
                    DataAssignment::cyclic(v[0], v[1])
                }
                _ => bail!(usage("give exactly one of --assignment or --cyclic")),
            };
            let f = parse_field(field)?;
            let mut scheme = build_scheme(&a, *tau_s, *tau_b, *m, *p, &f, *seed)?;
            if let Some(scale) = quantize_scale {
                if !f.is_prime_field() {
                    bail!(usage("quantization needs a prime field"));
                }
                scheme.quantizer = Some(Quantizer { q: f.order(), scale: *scale });
            }
            write_json(path, &scheme.to_file())?;
            out.emit(
                json!({
                    "d_min": scheme.d_min,
                    "workers": a.worker_count(),
                    "subsets": a.subsets,
                    "replication": a.replication().into_iter().min(),
                    "q": f.order(),
                    "seed": seed,
                }),
                format!(
                    "d_min = {} ({} workers, {} subsets, GF({}))",
                    scheme.d_min,
                    a.worker_count(),
                    a.subsets,
                    f.order()
                ),
            )
        }
        GradCmd::Simulate {
            scheme,
            stragglers,
            byzantine,
            seed,
            timings,
        } => {
            let file: SchemeFile = read_json(scheme)?;
            let s = GradientCodingScheme::from_file(&file)?;
            let adv = Adversary {
                stragglers: parse_list(stragglers, "worker")?,
                byzantine: parse_list::<usize>(byzantine, "worker")?
                    .into_iter()
                    .map(|w| (w, None))
                    .collect(),
            };
            let grads = random_gradients(s.field(), s.assignment.subsets, s.p, *seed);
            let mut report = simulate(&s, &grads, &adv, seed.wrapping_add(1))?;
            if !timings {
                report.timings = None;
            }
            let human = format!(
                "success = {}\nwithin_budget = {}\nexpected = {}\ndecoded = {}",
                report.success,
                report.within_budget,
                fmt_vec(&report.expected),
                report.decoded.as_deref().map_or("failure".into(), fmt_vec)
            );
            out.emit(serde_json::to_value(&report)?, human)
        }
    }
}
