use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hiercp::ancestors::{bruteforce_ancestors, omega_set, solve_ancestors};
use hiercp::conformal::{
    required_rank, CalibratedPredictor, ConformalConfig, Randomizer, CALIBRATION_STREAM,
    PREDICTION_STREAM,
};
use hiercp::eval::{generate_synthetic, run_benchmark, MethodSpec, MetricReport};
use hiercp::fixtures::{dirichlet_view, random_hierarchy};
use hiercp::io;
use hiercp::{Error, ErrorKind, Result};

#[derive(Parser, Debug)]
#[command(
    name = "hiercp",
    version,
    about = "Conformal set-valued prediction over class hierarchies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the conformal threshold on a labelled calibration set.
    Calibrate(CalibrateArgs),
    /// Write one prediction set per row of a probability table.
    Predict(PredictArgs),
    /// Score a predictions file against labels.
    Evaluate(EvaluateArgs),
    /// Resampled calibration/test benchmark over several methods.
    Benchmark(BenchmarkArgs),
    /// Write a synthetic, perfectly calibrated dataset.
    Synth(SynthArgs),
    /// Compare the ancestor solver with exhaustive search on random trees.
    OracleCheck(OracleArgs),
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    probs: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_parser = ["crsvp", "crsvp-r", "lac", "aps"])]
    method: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Node budget for crsvp-r.
    #[arg(long)]
    r: Option<usize>,
    /// Pin the uniform draw to 0.
    #[arg(long)]
    naive: bool,
    /// Never predict the empty set.
    #[arg(long)]
    no_empty: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use this draw for every instance instead of seeded draws.
    #[arg(long)]
    fixed_u: Option<f64>,
    /// Predictor file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    probs: PathBuf,
    #[arg(long)]
    predictor: PathBuf,
    /// Overrides the seed stored in the predictor.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fixed_u: Option<f64>,
    /// JSON lines output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    hierarchy: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Method name for the report row.
    #[arg(long, default_value = "predictions")]
    method: String,
    /// CSV report path; a JSON copy goes next to it. Stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Use this dataset instead of synthetic data (needs --probs and --labels).
    #[arg(long, requires_all = ["probs", "labels"])]
    hierarchy: Option<PathBuf>,
    #[arg(long, requires = "hierarchy")]
    probs: Option<PathBuf>,
    #[arg(long, requires = "hierarchy")]
    labels: Option<PathBuf>,
    /// Comma-separated: crsvp, ncrsvp, crsvp-<r>, ncrsvp-<r>, crsvp-K, aps, nps, lac.
    #[arg(
        long,
        default_value = "lac,nps,aps,ncrsvp,crsvp,ncrsvp-1,crsvp-1,ncrsvp-3,crsvp-3"
    )]
    methods: String,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 20)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    synth: SynthShape,
    /// CSV report path; a JSON copy goes next to it. Stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthShape {
    /// Number of classes.
    #[arg(long = "k", visible_alias = "K", default_value_t = 64)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    arity: usize,
    /// Number of instances.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Dirichlet concentration of each row.
    #[arg(long, default_value_t = 0.1)]
    concentration: f64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    shape: SynthShape,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives hierarchy.json, probs.csv and labels.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long = "k", visible_alias = "K", default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 4)]
    r_max: usize,
    /// Largest number of children per node.
    #[arg(long, default_value_t = 4)]
    arity: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let h = io::read_hierarchy(&args.hierarchy)?;
    let views = io::read_probabilities(&args.probs, &h)?;
    let labels = io::read_labels(&args.labels, &h)?;
    let config = ConformalConfig {
        alpha: args.alpha,
        method: args.method,
        r: args.r,
        randomized: !args.naive,
        allow_empty: !args.no_empty,
        seed: args.seed,
    };
    config.validate()?;
    let draws = Randomizer::for_config(&config, CALIBRATION_STREAM, args.fixed_u)?;
    let predictor = CalibratedPredictor::calibrate(&h, &views, &labels, config, draws)?;
    io::write_string(&args.out, &predictor.to_json())?;
    let n = predictor.n_cal;
    let m = required_rank(n, predictor.config.alpha);
    let tau = if predictor.is_full_set() {
        "inf".to_string()
    } else {
        predictor.tau_star.to_string()
    };
    println!("N = {n}");
    println!("m = {m}");
    println!("tau* = {tau}");
    if m > n {
        log::warn!("m = {m} exceeds N = {n}; every prediction will be the full class set");
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let h = io::read_hierarchy(&args.hierarchy)?;
    let mut predictor = CalibratedPredictor::from_json(&io::read_to_string(&args.predictor)?)?;
    predictor.check_hierarchy(&h)?;
    if let Some(seed) = args.seed {
        predictor.config.seed = seed;
    }
    let views = io::read_probabilities(&args.probs, &h)?;
    let draws = Randomizer::for_config(&predictor.config, PREDICTION_STREAM, args.fixed_u)?;
    let predictions = predictor.predict_batch(&h, &views, draws)?;
    match &args.out {
        Some(path) => io::write_predictions(io::create(path)?, &h, &predictions),
        None => io::write_predictions(std::io::stdout().lock(), &h, &predictions),
    }
}

fn write_report(report: &MetricReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            report.write_csv(io::create(path)?)?;
            io::write_string(&path.with_extension("json"), &report.to_json())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            report.write_csv(&mut stdout)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let h = io::read_hierarchy(&args.hierarchy)?;
    let sets = io::read_predictions(&args.predictions, &h)?;
    let labels = io::read_labels(&args.labels, &h)?;
    let report = MetricReport::evaluate(&h, &args.method, &sets, &labels)?;
    write_report(&report, args.out.as_deref())
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let methods = MethodSpec::parse_list(&args.methods)?;
    let report = match (&args.hierarchy, &args.probs, &args.labels) {
        (Some(hp), Some(pp), Some(lp)) => {
            let h = io::read_hierarchy(hp)?;
            let views = io::read_probabilities(pp, &h)?;
            let labels = io::read_labels(lp, &h)?;
            run_benchmark(
                &h,
                &views,
                &labels,
                &methods,
                args.alpha,
                args.resamples,
                args.seed,
            )?
        }
        _ => {
            let s = &args.synth;
            let data = generate_synthetic(s.k, s.arity, s.n, s.concentration, args.seed)?;
            data.benchmark(&methods, args.alpha, args.resamples, args.seed)?
        }
    };
    write_report(&report, args.out.as_deref())
}

fn synth(args: SynthArgs) -> Result<()> {
    let s = &args.shape;
    let data = generate_synthetic(s.k, s.arity, s.n, s.concentration, args.seed)?;
    std::fs::create_dir_all(&args.out).map_err(|source| Error::File {
        path: args.out.display().to_string(),
        source,
    })?;
    io::write_string(&args.out.join("hierarchy.json"), &data.hierarchy.to_json())?;
    io::write_probabilities(
        io::create(&args.out.join("probs.csv"))?,
        &data.hierarchy,
        &data.probs,
    )?;
    io::write_labels(
        io::create(&args.out.join("labels.txt"))?,
        &data.hierarchy,
        &data.labels,
    )?;
    println!(
        "wrote {} instances over {} classes to {}",
        s.n,
        s.k,
        args.out.display()
    );
    Ok(())
}

fn oracle_check(args: OracleArgs) -> Result<bool> {
    if args.r_max == 0 || args.trials == 0 {
        return Err(Error::InvalidParameter(
            "--trials and --r-max must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut matches = 0;
    for trial in 0..args.trials {
        let h = random_hierarchy(args.k, args.arity, &mut rng)?;
        let p = dirichlet_view(args.k, 1.0, &mut rng)?;
        let r = rng.random_range(1..=args.r_max);
        let y = rng.random_range(0..args.k);
        let omega = omega_set(&p, y)?;
        let dp = solve_ancestors(&h, &p, &omega, r)?;
        let bf = bruteforce_ancestors(&h, &p, &omega, r)?;
        if dp.classes == bf.classes && (dp.cost - bf.cost).abs() <= 1e-12 {
            matches += 1;
        } else {
            eprintln!(
                "mismatch in trial {trial} (r = {r}, omega = {omega:?}): solver {:?} cost {}, oracle {:?} cost {}",
                dp.classes, dp.cost, bf.classes, bf.cost
            );
        }
    }
    println!("{matches}/{} exact matches", args.trials);
    Ok(matches == args.trials)
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Calibrate(a) => calibrate(a).map(|_| true),
        Command::Predict(a) => predict(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
        Command::Benchmark(a) => benchmark(a).map(|_| true),
        Command::Synth(a) => synth(a).map(|_| true),
        Command::OracleCheck(a) => oracle_check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let kind = e.kind();
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", kind.as_str());
            ExitCode::from(exit_code(kind))
        }
    }
}
