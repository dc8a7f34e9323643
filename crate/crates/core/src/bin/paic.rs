use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use paic::criteria::{evaluate_criteria, Criterion};
use paic::exec::init_thread_pool;
use paic::experiments::{
    run_logit_experiment, run_normal_bias_experiment, EtaOracle, LogitExperimentConfig, NormalExperimentConfig, TauRule,
};
use paic::mcmc::{ConjugateNormalSampler, HierLogitSampler, PosteriorDraws, PosteriorSampler, SampleKey};
use paic::model::{ConjugateNormalModel, HierLogitModel, Hyperprior, Model, ObservationSet};
use paic::report::{write_experiment, write_report, Format, Provenance, ReportFile};
use paic::{Error, Execution, Result};

#[derive(Parser)]
#[command(name = "paic", version, about = "Bayesian predictive information criteria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate criteria for one data set.
    Compute(ComputeArgs),
    /// Run a replicated simulation study.
    Experiment {
        #[command(subcommand)]
        study: Study,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelKind {
    Normal,
    NormalFlat,
    HierLogit,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Args, Serialize)]
struct ComputeArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// CSV with column `y` (and `n_trials` for hier-logit).
    #[arg(long)]
    data: PathBuf,
    /// Posterior draws CSV (`theta_1..theta_p[,chain]`); sampled when absent.
    #[arg(long)]
    draws: Option<PathBuf>,
    /// Comma-separated subset of paic,bpic,waic2,loo,dic,popt.
    #[arg(long, value_delimiter = ',', default_value = "paic,bpic,waic2,loo,dic")]
    criteria: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    #[serde(skip)]
    format: OutFormat,
    /// Worker threads (falls back to PAIC_THREADS, then all cores).
    #[arg(long)]
    #[serde(skip)]
    threads: Option<usize>,
    /// Likelihood variance of the normal model.
    #[arg(long, default_value_t = 1.0)]
    sigma_a2: f64,
    /// Prior mean of the normal model.
    #[arg(long, default_value_t = 0.0)]
    mu0: f64,
    /// Prior variance of the normal model.
    #[arg(long, default_value_t = 1e4)]
    tau02: f64,
    /// Draws from the exact normal posterior.
    #[arg(long, default_value_t = 4000)]
    normal_draws: usize,
    #[arg(long, default_value_t = 3)]
    chains: usize,
    #[arg(long, default_value_t = 5000)]
    draws_per_chain: usize,
    #[arg(long, default_value_t = 2000)]
    warmup: usize,
    /// Variance of the normal hyperprior on the random-effect mean.
    #[arg(long, default_value_t = 1e6)]
    mu_var: f64,
    /// Degrees of freedom of the scaled inverse chi-square hyperprior.
    #[arg(long, default_value_t = 0.1)]
    nu: f64,
    /// Scale of the scaled inverse chi-square hyperprior.
    #[arg(long, default_value_t = 10.0)]
    s2: f64,
}

#[derive(Args)]
struct CommonExperimentArgs {
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Run replications on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Study {
    /// Conjugate normal study over an (n, prior, σ_A²) grid.
    Normal {
        #[command(flatten)]
        common: CommonExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        sigma_a2: Option<Vec<f64>>,
        /// Prior rules such as `fixed:10000`, `per-n:10000`, `flat`.
        #[arg(long, value_delimiter = ',')]
        prior: Option<Vec<String>>,
        #[arg(long, default_value_t = 0.0)]
        mu_t: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_t2: f64,
        /// Skip the generic mode/information-matrix evaluation.
        #[arg(long)]
        closed_form_only: bool,
    },
    /// Hierarchical logit study.
    Logit {
        #[command(flatten)]
        common: CommonExperimentArgs,
        #[arg(long, default_value_t = 15)]
        groups: usize,
        #[arg(long, default_value_t = 50)]
        trials: u64,
        /// Monte Carlo replicate data sets for η instead of the exact sum.
        #[arg(long)]
        mc_draws: Option<usize>,
        #[arg(long)]
        no_loo: bool,
        #[arg(long, default_value_t = 3)]
        chains: usize,
        #[arg(long, default_value_t = 5000)]
        draws_per_chain: usize,
        #[arg(long, default_value_t = 2000)]
        warmup: usize,
    },
}

fn parse_rule(s: &str) -> Result<TauRule> {
    let s = s.trim();
    if s == "flat" {
        return Ok(TauRule::Flat);
    }
    let (kind, v) = s.split_once(':').ok_or_else(|| Error::Invalid(format!("bad prior rule `{s}`")))?;
    let v: f64 = v.parse().map_err(|_| Error::Invalid(format!("bad prior rule `{s}`")))?;
    match kind {
        "fixed" => Ok(TauRule::Fixed(v)),
        "per-n" => Ok(TauRule::PerN(v)),
        _ => Err(Error::Invalid(format!("bad prior rule `{s}`"))),
    }
}

fn run_compute(args: &ComputeArgs) -> Result<()> {
    init_thread_pool(args.threads);
    let criteria: Vec<Criterion> = args.criteria.iter().map(|c| c.parse()).collect::<Result<_>>()?;
    let data = ObservationSet::from_csv(&args.data)?;
    let key = SampleKey::new(args.seed);
    let exec = Execution::Parallel;
    let reports = match args.model {
        ModelKind::Normal | ModelKind::NormalFlat => {
            let model = match args.model {
                ModelKind::Normal => ConjugateNormalModel::new(args.sigma_a2, args.mu0, args.tau02)?,
                _ => ConjugateNormalModel::flat(args.sigma_a2)?,
            };
            let sampler = ConjugateNormalSampler { draws: args.normal_draws, ..Default::default() };
            evaluate(&model, &data, args, &sampler, key, &criteria, exec)?
        }
        ModelKind::HierLogit => {
            let hyper = Hyperprior { mu_var: args.mu_var, nu: args.nu, s2: args.s2, ..Default::default() };
            let model = HierLogitModel::new(data.len_all(), hyper)?;
            let sampler = HierLogitSampler {
                chains: args.chains,
                draws_per_chain: args.draws_per_chain,
                warmup: args.warmup,
                execution: exec,
                ..Default::default()
            };
            evaluate(&model, &data, args, &sampler, key, &criteria, exec)?
        }
    };
    let file = ReportFile { provenance: Provenance::new(args, args.seed), reports };
    let format = match args.format {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
    };
    match &args.out {
        Some(path) => write_report(&file, format, path),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&paic::report::render_report(&file, format))
                .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
        }
    }
}

fn evaluate<M, S>(
    model: &M,
    data: &ObservationSet,
    args: &ComputeArgs,
    sampler: &S,
    key: SampleKey,
    criteria: &[Criterion],
    exec: Execution,
) -> Result<Vec<paic::report::ReportEntry>>
where
    M: Model + std::any::Any,
    S: PosteriorSampler<M>,
{
    model.validate(data)?;
    let (draws, sampler_warning) = match &args.draws {
        Some(p) => (PosteriorDraws::read_csv(p, args.seed)?, None),
        None => {
            let out = sampler.sample(model, data, key)?;
            let warn = (!out.converged).then(|| {
                let d = out.diagnostics.as_ref();
                format!(
                    "posterior sampler failed the convergence gate (max rhat {:.4}, min ess {:.0})",
                    d.map_or(f64::NAN, |d| d.max_rhat()),
                    d.map_or(f64::NAN, |d| d.min_ess())
                )
            });
            (out.draws, warn)
        }
    };
    if draws.dim() != model.dim() {
        return Err(Error::Invalid(format!(
            "draws have {} columns but the {} model has dimension {}",
            draws.dim(),
            model.name(),
            model.dim()
        )));
    }
    let mut entries = evaluate_criteria(model, data, &draws, sampler, key, criteria, exec)?;
    if let Some(w) = sampler_warning {
        for e in &mut entries {
            if let paic::report::ReportEntry::Report(r) = e {
                r.warnings.push(w.clone());
            }
        }
    }
    Ok(entries)
}

fn run_experiment(study: &Study) -> Result<()> {
    match study {
        Study::Normal { common, n, sigma_a2, prior, mu_t, sigma_t2, closed_form_only } => {
            init_thread_pool(common.threads);
            let mut cfg = NormalExperimentConfig { seed: common.seed, mu_t: *mu_t, sigma_t2: *sigma_t2, ..Default::default() };
            if let Some(r) = common.reps {
                cfg.replications = r;
            }
            if let Some(n) = n {
                cfg.n = n.clone();
            }
            if let Some(s) = sigma_a2 {
                cfg.sigma_a2 = s.clone();
            }
            if let Some(p) = prior {
                cfg.tau_rules = p.iter().map(|s| parse_rule(s)).collect::<Result<_>>()?;
            }
            cfg.generic = !closed_form_only;
            if common.sequential {
                cfg.execution = Execution::Sequential;
            }
            let result = run_normal_bias_experiment(&cfg)?;
            write_experiment(&result, &Provenance::new(&cfg, cfg.seed), &common.out)?;
            Ok(())
        }
        Study::Logit { common, groups, trials, mc_draws, no_loo, chains, draws_per_chain, warmup } => {
            init_thread_pool(common.threads);
            let mut cfg = LogitExperimentConfig {
                groups: *groups,
                trials: *trials,
                seed: common.seed,
                loo: !no_loo,
                sampler: HierLogitSampler {
                    chains: *chains,
                    draws_per_chain: *draws_per_chain,
                    warmup: *warmup,
                    ..Default::default()
                },
                ..Default::default()
            };
            if let Some(r) = common.reps {
                cfg.replications = r;
            }
            if let Some(j) = mc_draws {
                cfg.oracle = EtaOracle::MonteCarlo { draws: *j };
            }
            if common.sequential {
                cfg.execution = Execution::Sequential;
            }
            let result = run_logit_experiment(&cfg)?;
            write_experiment(&result, &Provenance::new(&cfg, cfg.seed), &common.out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Compute(args) => run_compute(args),
        Command::Experiment { study } => run_experiment(study),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
