//! Batch front end: preprocess a matrix into a sampling state, draw subsets,
//! validate against the brute-force oracle suite, benchmark the scaling
//! claims, and calibrate row rescalings. All output is JSON; exit code 0
//! means success (for validate: every check passed), 1 is an operational
//! failure, 2 is an input problem (missing/corrupt file or bad usage).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rdpp_core::error::Error;
use rdpp_core::io::read_matrix;
use rdpp_core::linalg::{eigh, RowMatrix};
use rdpp_core::oracle::run_suite;
use rdpp_core::parallel::map_indexed;
use rdpp_core::preprocess::{build_state, calibrate_scale, Mode};
use rdpp_core::rng;
use rdpp_core::sampler::sample_dpp_timed;
use rdpp_core::state::PreprocessedState;
use rdpp_core::synth;

#[derive(Parser)]
#[command(
    name = "rdpp",
    version,
    about = "Sample determinantal point processes over the rows of a matrix"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the sampling state for a matrix and write it to disk
    Preprocess(PreprocessArgs),
    /// Draw subsets from a preprocessed state (JSON lines, one draw per line)
    Sample(SampleArgs),
    /// Run the oracle validation suite against the sampler (n ≤ 12)
    Validate(ValidateArgs),
    /// Measure per-sample cost vs row count and preprocessing cost vs nnz
    Bench(BenchArgs),
    /// Solve for the row rescaling that hits a target expected subset size
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input matrix (Matrix Market or CSV; format sniffed from content)
    #[arg(long)]
    input: PathBuf,
    /// Where to write the binary state file
    #[arg(long)]
    state: PathBuf,
    /// Approximation accuracy for sketched mode, in (0, 1]
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// exact | sketched
    #[arg(long, default_value = "exact")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of draws
    #[arg(long, default_value_t = 1)]
    num: usize,
    /// Write JSON lines here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker cap for parallel draws (default: available cores, max 8)
    #[arg(long)]
    threads: Option<usize>,
    /// Include per-draw wall time (wall_us); off by default so equal seeds
    /// give byte-identical output
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// exact | sketched
    #[arg(long, default_value = "exact")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws per distributional check
    #[arg(long, default_value_t = 200_000)]
    num: usize,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker cap for the sampling batches
    #[arg(long)]
    threads: Option<usize>,
    /// Timed draws per matrix size
    #[arg(long, default_value_t = 200)]
    num: usize,
    /// Preprocessing repetitions per nnz level
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Smaller row count for the per-sample comparison
    #[arg(long, default_value_t = 10_000)]
    small_n: usize,
    /// Larger row count for the per-sample comparison
    #[arg(long, default_value_t = 100_000)]
    large_n: usize,
    /// Column count for the per-sample comparison
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Row count for the nnz-scaling comparison
    #[arg(long, default_value_t = 50_000)]
    nnz_n: usize,
    /// Column count for the nnz-scaling comparison
    #[arg(long, default_value_t = 40)]
    nnz_d: usize,
    /// Nonzeros per row at the base nnz level (doubled for the second level)
    #[arg(long, default_value_t = 4)]
    per_row: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Preprocessed state whose spectrum drives the calibration
    #[arg(long)]
    state: PathBuf,
    /// Desired expected subset size, in (0, d)
    #[arg(long)]
    target_size: f64,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            emit_error(&e);
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.cmd {
        Cmd::Preprocess(a) => cmd_preprocess(a),
        Cmd::Sample(a) => cmd_sample(a),
        Cmd::Validate(a) => cmd_validate(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Calibrate(a) => cmd_calibrate(a),
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io(_) => "io",
        Error::Parse { .. } => "parse",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::EmptyMatrix => "empty_matrix",
        Error::NotPositiveDefinite { .. } => "not_positive_definite",
        Error::EighNonConvergence { .. } => "eigh_non_convergence",
        Error::DegenerateDirection { .. } => "degenerate_direction",
        Error::RankCollapse { .. } => "rank_collapse",
        Error::RankDeficient { .. } => "rank_deficient",
        Error::SketchRankDeficient { .. } => "sketch_rank_deficient",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::TargetUnreachable { .. } => "target_unreachable",
        Error::CorruptState(_) => "corrupt_state",
        Error::AcceptanceBoundViolated { .. } => "acceptance_bound_violated",
        Error::MaxOuterExceeded { .. } => "max_outer_exceeded",
        Error::BruteForceTooLarge { .. } => "brute_force_too_large",
        Error::EnumerationTooLarge { .. } => "enumeration_too_large",
    }
}

fn emit_error(e: &Error) {
    let mut obj = json!({ "error": e.to_string(), "kind": error_kind(e) });
    if matches!(e, Error::BruteForceTooLarge { .. }) {
        obj["guidance"] = json!(
            "validation enumerates every subset of the input; supply a matrix \
             with at most 12 rows (sampling itself has no such limit)"
        );
    }
    eprintln!("{obj}");
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}

fn usage_error(msg: &str) -> i32 {
    eprintln!("{}", json!({ "error": msg, "kind": "usage" }));
    2
}

fn default_threads(requested: Option<usize>) -> usize {
    requested.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1).min(8)
    })
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<i32, Error> {
    let x = read_matrix(&a.input)?;
    let t0 = Instant::now();
    let state = build_state(&x, a.epsilon, a.mode, &mut rng::stream(a.seed, 0))?;
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    state.write_to(&a.state)?;
    println!(
        "{}",
        json!({
            "n": state.n(),
            "d": state.d(),
            "s_tilde": state.s_tilde(),
            "q": state.q(),
            "eta": state.eta(),
            "wall_ms": wall_ms,
            "mode": a.mode.to_string(),
        })
    );
    Ok(0)
}

fn cmd_sample(a: SampleArgs) -> Result<i32, Error> {
    if a.num == 0 {
        return Ok(usage_error("--num must be at least 1"));
    }
    let x = read_matrix(&a.input)?;
    let state = PreprocessedState::read_from(&a.state)?;
    if state.n() != x.n() || state.d() != x.d() {
        return Err(Error::DimensionMismatch {
            expected: state.n() * 1_000_000 + state.d(),
            got: x.n() * 1_000_000 + x.d(),
        });
    }

    let threads = default_threads(a.threads);
    // one RNG stream per draw: output is identical for any worker count
    let draws = map_indexed(a.num, threads, |i| {
        let mut r = rng::stream(a.seed, i as u64);
        sample_dpp_timed(&state, &x, &mut r)
    });

    let mut out: BufWriter<Box<dyn Write>> = BufWriter::new(match &a.output {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(std::io::stdout()),
    });
    for draw in draws {
        let t = draw?;
        let mut line = json!({
            "subset": t.subset.indices,
            "K": t.draw.k,
            "outer_iters": t.draw.outer_iters,
        });
        if a.timings {
            line["wall_us"] = json!((t.rdpp_ns + t.downsample_ns) as f64 / 1e3);
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(0)
}

fn cmd_validate(a: ValidateArgs) -> Result<i32, Error> {
    if a.num == 0 {
        return Ok(usage_error("--num must be at least 1"));
    }
    let x = read_matrix(&a.input)?;
    let threads = default_threads(a.threads);
    let report = run_suite(&x, a.epsilon, a.mode, a.num, a.seed, threads)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(if report.all_pass { 0 } else { 1 })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn cmd_bench(a: BenchArgs) -> Result<i32, Error> {
    if a.num == 0 || a.repeats == 0 {
        return Ok(usage_error("--num and --repeats must be at least 1"));
    }
    if a.small_n >= a.large_n {
        return Ok(usage_error("--small-n must be below --large-n"));
    }
    let threads = default_threads(a.threads);

    // per-sample cost at two row counts, same column count
    let mut sizes = Vec::new();
    let mut medians_us = Vec::new();
    for (j, &n) in [a.small_n, a.large_n].iter().enumerate() {
        let tag = j as u64;
        let x = synth::gaussian_matrix(n, a.dim, &mut rng::stream(a.seed, 100 + tag))?;
        let state = build_state(&x, 0.5, Mode::Sketched, &mut rng::stream(a.seed, 200 + tag))?;
        // warm up caches and the allocator before timing
        for w in 0..20u64 {
            sample_dpp_timed(&state, &x, &mut rng::stream(a.seed, 900 + 32 * tag + w))?;
        }
        let times = map_indexed(a.num, threads, |i| {
            let mut r = rng::stream(a.seed, (300 + tag) << 32 | i as u64);
            let t0 = Instant::now();
            let res = sample_dpp_timed(&state, &x, &mut r);
            res.map(|_| t0.elapsed().as_secs_f64() * 1e6)
        });
        let mut us = Vec::with_capacity(a.num);
        for t in times {
            us.push(t?);
        }
        let med = median(&mut us);
        sizes.push(json!({ "n": n, "median_us": med }));
        medians_us.push(med);
    }
    let per_sample_ratio = medians_us[1] / medians_us[0];

    // preprocessing cost at two nnz levels, same n and d (CSR storage)
    let mut levels = Vec::new();
    let mut medians_ms = Vec::new();
    for (j, per_row) in [a.per_row, 2 * a.per_row].into_iter().enumerate() {
        let tag = j as u64;
        let trips =
            synth::sparse_triplets(a.nnz_n, a.nnz_d, per_row, &mut rng::stream(a.seed, 400 + tag));
        let x = RowMatrix::from_triplets_with_budget(a.nnz_n, a.nnz_d, &trips, 0)?;
        let mut ms = Vec::with_capacity(a.repeats);
        for rep in 0..a.repeats as u64 {
            let t0 = Instant::now();
            build_state(&x, 0.5, Mode::Sketched, &mut rng::stream(a.seed, 500 + 32 * tag + rep))?;
            ms.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        let med = median(&mut ms);
        levels.push(json!({ "nnz": x.nnz(), "median_ms": med }));
        medians_ms.push(med);
    }
    let preprocess_ratio = medians_ms[1] / medians_ms[0];

    println!(
        "{}",
        json!({
            "per_sample": { "d": a.dim, "sizes": sizes, "ratio": per_sample_ratio },
            "preprocess": { "n": a.nnz_n, "d": a.nnz_d, "levels": levels, "ratio": preprocess_ratio },
        })
    );
    Ok(0)
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<i32, Error> {
    let state = PreprocessedState::read_from(&a.state)?;
    let eig = eigh(state.a())?;
    let alpha = calibrate_scale(&eig, a.target_size, 1e-9)?;
    let achieved: f64 = eig
        .values
        .iter()
        .map(|&l| {
            let v = alpha * alpha * l.max(0.0);
            v / (1.0 + v)
        })
        .sum();
    println!("{}", json!({ "alpha": alpha, "achieved_expected_size": achieved }));
    Ok(0)
}
