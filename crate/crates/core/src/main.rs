use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use fg_sfrql::checkpoint;
use fg_sfrql::env::EnvKind;
use fg_sfrql::gradcheck::{run_gradcheck, TOLERANCE};
use fg_sfrql::metrics::{
    compare_summary, default_label, emit_plots, format_f64, load_run, run_suite, write_run,
    ExperimentSuite, PlotKind,
};
use fg_sfrql::train::{
    evaluate, measure_overhead, train, Algorithm, ConfigOverrides, LrSchedule, OverheadTarget,
};

#[derive(Parser)]
#[command(name = "fg-sfrql", version, about = "Successor-feature Q-learning with full-gradient updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write its step log, summary and checkpoint.
    Train(TrainArgs),
    /// Train every run of a suite file for every seed, then plot and compare.
    Suite {
        file: PathBuf,
    },
    /// Evaluate a checkpoint with greedy rollouts.
    Eval {
        /// Checkpoint directory (a run's `checkpoint/`).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        step_cap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time one update per step for each algorithm.
    Overhead {
        #[arg(long, value_enum, default_value_t = EnvKind::FourRooms)]
        env: EnvKind,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        averaging_n: usize,
        /// Optional CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw an SVG chart from run directories.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Tabulate training reward and final evaluation across run directories.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for compare.txt and compare.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    env: Option<EnvKind>,
    #[arg(long, value_enum)]
    algo: Option<Algorithm>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps_per_task: Option<usize>,
    #[arg(long)]
    num_tasks: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    averaging_n: Option<usize>,
    #[arg(long, value_enum)]
    lr_schedule: Option<LrSchedule>,
    /// Learn linear reward models online instead of using the task weights.
    #[arg(long)]
    learn_rewards: bool,
    /// Update successor features from replay minibatches instead of the online transition.
    #[arg(long)]
    minibatch: bool,
    /// Grow the pivot batch size by one every 10,000 iterations.
    #[arg(long)]
    growing_n: bool,
    /// Record update wall-clock time in the step log.
    #[arg(long)]
    record_timing: bool,
    /// Output directory; defaults to runs/<env>_<algo>_seed<seed>.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl TrainArgs {
    fn overrides(&self) -> ConfigOverrides {
        let flag = |b: bool| b.then_some(true);
        ConfigOverrides {
            env: self.env,
            algorithm: self.algo,
            seed: self.seed,
            steps_per_task: self.steps_per_task,
            num_tasks: self.num_tasks,
            batch_size: self.batch_size,
            alpha: self.alpha,
            gamma: self.gamma,
            epsilon: self.epsilon,
            horizon: self.horizon,
            averaging_n: self.averaging_n,
            lr_schedule: self.lr_schedule,
            learn_rewards: flag(self.learn_rewards),
            minibatch: flag(self.minibatch),
            growing_n: flag(self.growing_n),
            record_timing: flag(self.record_timing),
            ..Default::default()
        }
    }
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(p) => ConfigOverrides::from_file(p)?,
        None => ConfigOverrides::default(),
    };
    let cfg = ConfigOverrides::resolve(&[&file, &args.overrides()])?;
    let out = args.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{}_{}_seed{}", cfg.env.name(), cfg.algorithm.name(), cfg.seed))
    });
    let record = train(&cfg)?;
    let summary = write_run(&out, &record, &default_label(&cfg))?;
    println!("wrote {}", out.display());
    println!("total training reward {:.3}", summary.total_reward);
    if let Some(rate) = summary.skip_rate {
        println!("skip rate {rate:.4}");
    }
    for e in &summary.eval {
        println!("task {} eval {:.3} ± {:.3}", e.task_id, e.mean, e.std);
    }
    println!("eval mean {:.3}", summary.eval_mean);
    Ok(())
}

fn cmd_eval(dir: &Path, episodes: Option<usize>, step_cap: Option<usize>, seed: Option<u64>) -> anyhow::Result<()> {
    let (learner, manifest) = checkpoint::load(dir)?;
    let mut cfg = manifest.config.clone();
    cfg.eval_episodes = episodes.unwrap_or(cfg.eval_episodes);
    cfg.eval_step_cap = step_cap.unwrap_or(cfg.eval_step_cap);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let stats = evaluate(&learner, &cfg)?;
    for e in &stats {
        println!("task {} eval {:.3} ± {:.3} over {} episodes", e.task_id, e.mean, e.std, e.returns.len());
    }
    Ok(())
}

fn cmd_gradcheck(instances: usize, seed: u64) -> anyhow::Result<bool> {
    let report = run_gradcheck(instances, seed)?;
    for c in &report.checks {
        println!("{:<32} {:>5} instances  max relative error {:.3e}", c.name, c.instances, c.max_rel_error);
    }
    println!("max relative error {:.3e} (tolerance {TOLERANCE:.0e})", report.max_rel_error());
    Ok(report.passed())
}

fn cmd_overhead(env: EnvKind, steps: usize, seed: u64, averaging_n: usize, out: Option<&Path>) -> anyhow::Result<()> {
    let layers = ConfigOverrides {
        env: Some(env),
        seed: Some(seed),
        averaging_n: Some(averaging_n),
        ..Default::default()
    };
    let cfg = ConfigOverrides::resolve(&[&layers])?;
    let mut targets = vec![OverheadTarget::Noop];
    targets.extend(
        [Algorithm::Dqn, Algorithm::Fgdqn, Algorithm::Sfdqn, Algorithm::FgSfdqnAlg1, Algorithm::FgSfdqnAlg2, Algorithm::FgSfdqnAlg3]
            .map(OverheadTarget::Algo),
    );
    let stats = measure_overhead(&cfg, &targets, steps)?;
    println!("{:<16} {:>8} {:>12} {:>14}", "algorithm", "samples", "mean ms", "variance ms2");
    for s in &stats {
        println!("{:<16} {:>8} {:>12.5} {:>14.3e}", s.target.name(), s.samples, s.mean_ms, s.var_ms2);
    }
    if let Some(path) = out {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(["algorithm", "samples", "mean_ms", "var_ms2"])?;
        for s in &stats {
            w.write_record([
                s.target.name().to_string(),
                s.samples.to_string(),
                format_f64(s.mean_ms),
                format_f64(s.var_ms2),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn load_all(dirs: &[PathBuf]) -> anyhow::Result<Vec<fg_sfrql::metrics::LoadedRun>> {
    dirs.iter()
        .map(|d| load_run(d).with_context(|| format!("loading {}", d.display())))
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Train(args) => cmd_train(&args)?,
        Command::Suite { file } => {
            let suite = ExperimentSuite::from_file(&file)?;
            let outcome = run_suite(&suite, &ConfigOverrides::default())?;
            println!("{} runs written to {}", outcome.summaries.len(), suite.output_dir.display());
            if let Some(c) = outcome.comparison {
                print!("{}", c.to_text());
            }
        }
        Command::Eval { checkpoint, episodes, step_cap, seed } => cmd_eval(&checkpoint, episodes, step_cap, seed)?,
        Command::Gradcheck { instances, seed } => return cmd_gradcheck(instances, seed),
        Command::Overhead { env, steps, seed, averaging_n, out } => {
            cmd_overhead(env, steps, seed, averaging_n, out.as_deref())?
        }
        Command::Plot { kind, out, runs } => {
            emit_plots(&load_all(&runs)?, kind, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Compare { runs, out } => {
            let summaries: Vec<_> = load_all(&runs)?.into_iter().map(|r| r.summary).collect();
            let c = compare_summary(&summaries)?;
            print!("{}", c.to_text());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("compare.txt"), c.to_text())?;
                c.write_csv(BufWriter::new(File::create(dir.join("compare.csv"))?))?;
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gradient check failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
