//! `bfai`: run experiments, compute optimal allocations and check the
//! sampling rule from the command line.
//!
//! Exit status is 0 on success, 2 on usage errors (bad flags, unreadable or
//! malformed instance files) and 1 when the computation itself fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bfai::experiments::build;
use bfai::harness::{derive_seed, run_once_with, state_after, RunOptions};
use bfai::problem::ArmClass;
use bfai::report::{self, fmt_real};
use bfai::sampler::phi_estimate;
use bfai::{
    optimal_beta, run_macro, solve_allocation, Algorithm, AllocationProfile, ExperimentId,
    ProblemInstance, RateModel, SamplerConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "bfai", version, about = "Best-feasible-arm identification with top-two Thompson sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Macro-replications of one algorithm at several budgets.
    Run(RunArgs),
    /// Optimal leader share, allocation and rates of an instance.
    Rates(Common),
    /// Optimal allocation at a given leader share.
    Allocate(AllocateArgs),
    /// Compare select_arm frequencies with the closed-form play
    /// probabilities on a warm-started posterior.
    PhiCheck(PhiArgs),
}

#[derive(Args, Debug)]
#[group(id = "source", required = true, multiple = false)]
struct Source {
    /// Built-in experiment: exp1..exp5 or dose.
    #[arg(long, group = "source")]
    experiment: Option<ExperimentId>,
    /// Instance file (JSON with `mu`, `sigma2`, `gamma`).
    #[arg(long, group = "source")]
    instance: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Common {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "bfai-ts")]
    algo: Algorithm,
    /// Leader share, or `star` for the optimal one.
    #[arg(long, default_value = "0.5")]
    beta: BetaArg,
    /// Comma-separated budgets; defaults to the experiment's own.
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Warm-up samples per arm.
    #[arg(long, default_value_t = 6)]
    n0: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    /// Also write PFS-versus-budget and sampling-rate-versus-round series
    /// into this directory.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AllocateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    beta: BetaArg,
}

#[derive(Args, Debug)]
struct PhiArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "0.5")]
    beta: BetaArg,
    /// Samples taken before freezing the posterior, warm-up included.
    #[arg(long)]
    rounds: Option<usize>,
    /// Posterior draws and select_arm calls.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    n0: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug)]
enum BetaArg {
    Value(f64),
    Star,
}

impl std::str::FromStr for BetaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "star" {
            return Ok(BetaArg::Star);
        }
        match s.parse::<f64>() {
            Ok(b) if b > 0.0 && b <= 1.0 => Ok(BetaArg::Value(b)),
            _ => Err(format!("expected a number in (0, 1] or `star`, got `{s}`")),
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<bfai::Error> for Failure {
    fn from(e: bfai::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome<T> = Result<T, Failure>;

fn load(source: &Source) -> Outcome<(String, ProblemInstance, Option<ExperimentId>)> {
    match (&source.experiment, &source.instance) {
        (Some(id), None) => Ok((id.to_string(), build(*id).instance, Some(*id))),
        (None, Some(path)) => {
            let inst = ProblemInstance::read(path).map_err(|e| {
                Failure::Usage(format!("invalid instance file `{}`: {e}", path.display()))
            })?;
            let name = path.file_stem().map_or("instance".into(), |s| s.to_string_lossy().into_owned());
            Ok((name, inst, None))
        }
        _ => Err(Failure::Usage("give exactly one of --experiment and --instance".into())),
    }
}

fn resolve_beta(beta: BetaArg, inst: &ProblemInstance) -> Outcome<f64> {
    match beta {
        BetaArg::Value(b) => Ok(b),
        BetaArg::Star => Ok(optimal_beta(&RateModel::from_instance(inst))?.0),
    }
}

fn emit(text: &str, output: Option<&Path>) -> Outcome<()> {
    match output {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::Runtime(format!("cannot write `{}`: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn class_name(c: ArmClass) -> &'static str {
    match c {
        ArmClass::Best => "best",
        ArmClass::FeasibleWorse => "feasible-worse",
        ArmClass::InfeasibleBetter => "infeasible-better",
        ArmClass::InfeasibleWorse => "infeasible-worse",
    }
}

fn profile_text(
    label: &str,
    source: &str,
    model: &RateModel,
    prof: &AllocationProfile,
    format: Format,
) -> String {
    let classes = model.classification();
    match format {
        Format::Json => {
            let arms: Vec<_> = (0..prof.alpha.len())
                .map(|i| {
                    json!({
                        "arm": i + 1,
                        "class": class_name(classes.class_of(i)),
                        "alpha": prof.alpha[i],
                        "rate": if prof.r[i].is_finite() { json!(prof.r[i]) } else { json!(null) },
                    })
                })
                .collect();
            let mut doc = serde_json::Map::new();
            doc.insert("source".into(), json!(source));
            doc.insert(label.into(), json!(prof.beta));
            doc.insert("gamma_rate".into(), json!(prof.gamma_rate));
            doc.insert("best_arm".into(), json!(prof.best + 1));
            doc.insert("arms".into(), json!(arms));
            serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n"
        }
        Format::Csv => {
            let mut out = format!("{label},gamma_rate,arm,class,alpha,rate\n");
            for i in 0..prof.alpha.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    fmt_real(prof.beta),
                    fmt_real(prof.gamma_rate),
                    i + 1,
                    class_name(classes.class_of(i)),
                    fmt_real(prof.alpha[i]),
                    fmt_real(prof.r[i])
                );
            }
            out
        }
    }
}

fn rates(args: &Common) -> Outcome<()> {
    let (name, inst, _) = load(&args.source)?;
    let model = RateModel::from_instance(&inst);
    let (_, prof) = optimal_beta(&model)?;
    emit(&profile_text("beta_star", &name, &model, &prof, args.format), args.output.as_deref())
}

fn allocate(args: &AllocateArgs) -> Outcome<()> {
    let (name, inst, _) = load(&args.common.source)?;
    let beta = resolve_beta(args.beta, &inst)?;
    let model = RateModel::from_instance(&inst);
    let prof = solve_allocation(&model, beta)?;
    let text = profile_text("beta", &name, &model, &prof, args.common.format);
    emit(&text, args.common.output.as_deref())
}

fn run(args: &RunArgs) -> Outcome<()> {
    let (name, inst, id) = load(&args.common.source)?;
    let budgets = match (args.budgets.is_empty(), id) {
        (false, _) => args.budgets.clone(),
        (true, Some(id)) => build(id).budgets.to_vec(),
        (true, None) => return Err(Failure::Usage("--budgets is required with --instance".into())),
    };
    let beta = match args.algo {
        Algorithm::BfaiTs => resolve_beta(args.beta, &inst)?,
        _ => 1.0,
    };
    let cfg = SamplerConfig { beta, n0: args.n0, ..SamplerConfig::default() };
    let report =
        run_macro(&name, &inst, args.algo, &cfg, &budgets, args.reps, args.seed, args.parallelism)?;
    let text = match args.common.format {
        Format::Csv => report::to_csv(&report),
        Format::Json => report::to_json(&report) + "\n",
    };
    emit(&text, args.common.output.as_deref())?;

    if let Some(dir) = &args.plot_dir {
        let io = |e: std::io::Error| Failure::Runtime(format!("cannot write to `{}`: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("pfs_vs_budget.csv"), report::pfs_series_csv(&[report])).map_err(io)?;
        // one replication at the largest budget, counts every 1% of it
        let (b, &budget) = budgets.iter().enumerate().max_by_key(|&(_, b)| *b).expect("budgets nonempty");
        let every = (budget / 100).max(1);
        let opts = RunOptions { history_every: Some(every), ..Default::default() };
        let seed = derive_seed(args.seed, 0, b as u64);
        let res = run_once_with(&inst, args.algo, &cfg, budget, seed, &opts)?;
        let points: Vec<(usize, Vec<u64>)> = res
            .history
            .unwrap_or_default()
            .into_iter()
            .map(|h| (h.round, h.counts))
            .collect();
        fs::write(dir.join("sampling_rates_vs_round.csv"), report::sampling_rate_series_csv(&points))
            .map_err(io)?;
    }
    Ok(())
}

fn phi_check(args: &PhiArgs) -> Outcome<()> {
    let (name, inst, _) = load(&args.common.source)?;
    let beta = resolve_beta(args.beta, &inst)?;
    let cfg = SamplerConfig { beta, n0: args.n0, ..SamplerConfig::default() };
    let rounds = args.rounds.unwrap_or(inst.k() * args.n0);
    if args.draws == 0 {
        return Err(Failure::Usage("--draws must be positive".into()));
    }
    let state = state_after(&inst, Algorithm::BfaiTs, &cfg, rounds, args.seed)?;
    let mut rng = bfai::harness::rng_from_seed(derive_seed(args.seed, 1, 0));
    let chk = phi_estimate(&state, &cfg, inst.thresholds(), args.draws, &mut rng)?;
    let p = &chk.exact.p;
    let text = match args.common.format {
        Format::Json => {
            let doc = json!({
                "source": name,
                "beta": beta,
                "rounds": rounds,
                "calls": chk.calls,
                "max_abs_gap": chk.max_abs_gap(),
                "empty_prob": chk.exact.empty,
                "p": p,
                "formula": chk.formula,
                "formula_mc": chk.formula_mc,
                "empirical": chk.empirical,
            });
            serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n"
        }
        Format::Csv => {
            let mut out = String::from("arm,p,formula,formula_mc,empirical\n");
            for i in 0..p.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    i + 1,
                    fmt_real(p[i]),
                    fmt_real(chk.formula[i]),
                    fmt_real(chk.formula_mc[i]),
                    fmt_real(chk.empirical[i])
                );
            }
            out
        }
    };
    emit(&text, args.common.output.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => run(a),
        Command::Rates(a) => rates(a),
        Command::Allocate(a) => allocate(a),
        Command::PhiCheck(a) => phi_check(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
