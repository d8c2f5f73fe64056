use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{demo_config, RunConfig};
use super::record::read_records;
use super::report::{aggregate, write_csv};
use super::sweep::{parse_range, run_sweep, SweepGrid};
use super::{execute_to_dir, HarnessError, TRAJECTORY_FILE};
use crate::controller::Variant;
use crate::markov::{bounds_from_classified, Bound, ClassifiedGroups, GroupEstimate, TransitionModel};
use crate::simulation::{monte_carlo_profile, ChainParams, SyntheticQuestionSpec};
use crate::stopping::optimal_iterations;

#[derive(Debug, Parser)]
#[command(name = "seqstop", version, about = "Gated sequential refinement with optimal stopping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form analysis of one chain: lambda, limit, regime, i*, bounds.
    Analyze(AnalyzeArgs),
    /// Compare Monte Carlo chain simulation against the closed form.
    Simulate(SimulateArgs),
    /// Run a dataset through the controller and persist trajectories.
    Run(RunArgs),
    /// Run a dataset over a grid of tau / gamma / sigma and emit CSV.
    Sweep(SweepArgs),
    /// Aggregate trajectory files into an accuracy vs token-proxy CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub p0: f64,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Transition pair `a,b` of the beneficial group, for the upper bound.
    #[arg(long, value_parser = parse_pair)]
    pub upper: Option<(f64, f64)>,
    /// Transition pair `a,b` of the detrimental group, for the lower bound.
    #[arg(long, value_parser = parse_pair)]
    pub lower: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Single chain instead of the built-in grid (requires --b and --p0 too).
    #[arg(long, requires_all = ["b", "p0"])]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long, default_value = "1,2,5,20")]
    pub steps: String,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Allowed distance in binomial standard errors.
    #[arg(long, default_value_t = 4.0)]
    pub max_z: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub run_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Run config; the built-in 200-question synthetic dataset when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `lo:hi:step` or a comma list.
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    /// Comma list of gate, map, training_free, naive.
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<Variant>,
    #[arg(long)]
    pub run_seed: Option<u64>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trajectory files, or run directories containing one.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn fmt_bound(b: &Bound) -> String {
    match b {
        Bound::Present { value, .. } => format!("{value}"),
        Bound::Absent => "absent".into(),
        Bound::Unestimable { reason } => format!("unestimable ({reason})"),
    }
}

pub fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Simulate(args) => simulate(args),
        Command::Run(args) => run_cmd(args),
        Command::Sweep(args) => sweep(args),
        Command::Report(args) => report(args),
    }
}

fn analyze(args: AnalyzeArgs) -> Result<(), HarnessError> {
    let model = TransitionModel::new(args.a, args.b)?;
    let regime = model.classify_regime(args.p0, args.sigma)?;
    let decision = optimal_iterations(&model, args.p0, args.tau)?;
    let mut out = io::stdout().lock();
    let w = |out: &mut io::StdoutLock, s: String| writeln!(out, "{s}").map_err(|e| HarnessError::Format(e.to_string()));
    w(&mut out, format!("lambda={}", model.lambda()))?;
    w(&mut out, format!("L={}", model.fixed_point()))?;
    w(&mut out, format!("asymptotic_benefit={}", model.asymptotic_benefit(args.p0, args.sigma)?))?;
    w(&mut out, format!("regime={regime}"))?;
    match decision.iterations {
        Some(i) => {
            w(&mut out, format!("i*={i}"))?;
            w(&mut out, format!("p_i*={}", model.correct_probability_at(args.p0, i)))?;
        }
        None => w(&mut out, "i*=none".into())?,
    }
    w(&mut out, format!("case={}", decision.case.label()))?;
    let group = |p: Option<(f64, f64)>| -> Result<Option<GroupEstimate>, HarnessError> {
        Ok(match p {
            Some((a, b)) => Some(GroupEstimate::Model(TransitionModel::new(a, b)?)),
            None => None,
        })
    };
    let bounds = bounds_from_classified(&ClassifiedGroups {
        all: Some(GroupEstimate::Model(model)),
        beneficial: group(args.upper)?,
        detrimental: group(args.lower)?,
        tally: Default::default(),
    });
    w(
        &mut out,
        format!(
            "bounds: neutral={} upper={} lower={}",
            fmt_bound(&bounds.neutral),
            fmt_bound(&bounds.upper),
            fmt_bound(&bounds.lower)
        ),
    )
}

fn simulate(args: SimulateArgs) -> Result<(), HarnessError> {
    let steps: Vec<u32> = parse_range(&args.steps)
        .map_err(HarnessError::Config)?
        .into_iter()
        .map(|s| s as u32)
        .collect();
    let mut specs = Vec::new();
    match (args.a, args.b, args.p0) {
        (Some(a), Some(b), Some(p0)) => specs.push((a, b, p0)),
        _ => {
            let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
            for &a in &grid {
                for &b in &grid {
                    for &p0 in &[0.1, 0.5, 0.9] {
                        specs.push((a, b, p0));
                    }
                }
            }
        }
    }
    println!("a,b,p0,i,closed_form,monte_carlo,std_error,z,ok");
    let (mut cells, mut ok) = (0usize, 0usize);
    for (a, b, p0) in specs {
        let model = TransitionModel::new(a, b)?;
        let spec = SyntheticQuestionSpec::new(format!("mc-{a}-{b}-{p0}"), p0, ChainParams::new(a, b)?);
        let est = monte_carlo_profile(&spec, &steps, args.trials, args.seed);
        for (&i, e) in steps.iter().zip(est) {
            let exact = model.correct_probability_at(p0, i);
            let z = e.z_score(exact);
            let pass = z <= args.max_z;
            cells += 1;
            ok += pass as usize;
            println!("{a},{b},{p0},{i},{exact},{},{},{z:.3},{pass}", e.p_hat, e.std_error);
        }
    }
    eprintln!("{ok}/{cells} cells within {} standard errors", args.max_z);
    if ok * 1000 < cells * 999 {
        return Err(HarnessError::Format(format!(
            "only {ok} of {cells} cells agree with the closed form"
        )));
    }
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<(), HarnessError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.run_seed {
        cfg.run_seed = seed;
    }
    let dir = args.output_dir.unwrap_or_else(|| cfg.output_dir.clone());
    let out = execute_to_dir(&cfg, &dir)?;
    let rows = aggregate(&out.records);
    for r in &rows {
        println!(
            "variant={} questions={} accuracy={} mean_iterations={:.3} gated={} stopped={} exhausted={} failed={}",
            r.variant.as_str(),
            r.questions,
            r.accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
            r.mean_iterations,
            r.gated,
            r.stopped,
            r.exhausted,
            r.failed
        );
    }
    let b = &out.run.bounds;
    println!(
        "bounds: neutral={} upper={} lower={}",
        fmt_bound(&b.neutral),
        fmt_bound(&b.upper),
        fmt_bound(&b.lower)
    );
    if out.clamp_warnings > 0 {
        eprintln!("warning: {} verifier scores clamped to [0, 1]", out.clamp_warnings);
    }
    println!("wrote {}", dir.join(TRAJECTORY_FILE).display());
    if let Some(first) = out.run.failures.first() {
        return Err(HarnessError::QuestionsFailed {
            failed: out.run.failures.len(),
            total: out.questions,
            first: format!("{}: {}", first.question_id, first.message),
        });
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), HarnessError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => demo_config(),
    };
    if let Some(seed) = args.run_seed {
        cfg.run_seed = seed;
    }
    let axis = |s: &Option<String>| -> Result<Vec<f64>, HarnessError> {
        s.as_deref()
            .map_or(Ok(Vec::new()), parse_range)
            .map_err(HarnessError::Config)
    };
    let grid = SweepGrid {
        variants: args.variant.clone(),
        taus: axis(&args.tau)?,
        gammas: axis(&args.gamma)?,
        sigmas: axis(&args.sigma)?,
    };
    let rows = run_sweep(&cfg, &grid)?;
    emit_csv(&rows, args.out.as_ref())
}

fn report(args: ReportArgs) -> Result<(), HarnessError> {
    let mut records = Vec::new();
    for p in &args.inputs {
        let path = if p.is_dir() { p.join(TRAJECTORY_FILE) } else { p.clone() };
        records.extend(read_records(&path)?);
    }
    emit_csv(&aggregate(&records), args.out.as_ref())
}

fn emit_csv<T: serde::Serialize>(rows: &[T], out: Option<&PathBuf>) -> Result<(), HarnessError> {
    let result = match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
            write_csv(rows, file)
        }
        None => write_csv(rows, io::stdout().lock()),
    };
    result.map_err(|e| HarnessError::Format(e.to_string()))
}
