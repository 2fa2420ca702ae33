use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rollout_eval::http;
use rollout_eval_core::metrics::{count_velocity_peaks, sparc, speed_profile, PeakConfig, SparcConfig, SpeedProfile};
use rollout_eval_core::model::validate_task_spec;
use rollout_eval_core::report::{build_report, render, Format, ReportOptions};
use rollout_eval_core::service::{metrics_for, NewSession, NextAssignment, SessionService};
use rollout_eval_core::stats::{compare, shift_report, BetaPosterior, Counts};
use rollout_eval_core::stl::{parse_formula, robustness};
use rollout_eval_core::store::replay;
use rollout_eval_core::{TaskSpec, Trace};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rollout-eval", version, about = "Blind A/B evaluation of robot policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Task definition files.
    #[command(subcommand)]
    Task(TaskCommand),
    /// Blind evaluation sessions.
    #[command(subcommand)]
    Session(SessionCommand),
    /// Trajectory metrics for a single trace.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Bayesian comparison of success counts.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Evaluation reports.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Subcommand)]
enum TaskCommand {
    /// Checks a task file and lists every problem found.
    Validate { task: PathBuf },
}

#[derive(Args)]
struct SessionDir {
    /// Directory holding session logs.
    #[arg(long, default_value = "sessions")]
    dir: PathBuf,
}

#[derive(Args, Clone)]
struct AnalysisArgs {
    /// Beta prior as `alpha,beta`.
    #[arg(long, default_value = "1,1", value_parser = parse_prior)]
    prior: BetaPosterior,
    /// Credible level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Monte Carlo draws for difference intervals.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Monte Carlo seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ReportArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Count started but unscored rollouts as failures instead of excluding them.
    #[arg(long)]
    include_aborted: bool,
}

impl ReportArgs {
    fn options(&self) -> ReportOptions {
        ReportOptions {
            prior: self.analysis.prior,
            level: self.analysis.level,
            n_samples: self.analysis.samples,
            seed: self.analysis.seed,
            include_aborted: self.include_aborted,
        }
    }
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Creates a session with a randomized, blinded assignment plan.
    Plan {
        #[command(flatten)]
        dir: SessionDir,
        #[arg(long)]
        task: PathBuf,
        /// Comma-separated policy ids.
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        /// Runs per policy on each initial condition.
        #[arg(long, default_value_t = 1)]
        reps: u32,
        /// Plan seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Subset of initial conditions (default: all in the task).
        #[arg(long, value_delimiter = ',')]
        ics: Option<Vec<u32>>,
        /// Session id (default: random).
        #[arg(long)]
        id: Option<String>,
    },
    /// Runs the HTTP service.
    Serve {
        #[command(flatten)]
        dir: SessionDir,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static files served for unmatched paths.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Prints the blinded session status.
    Status {
        #[command(flatten)]
        dir: SessionDir,
        id: String,
    },
    /// Prints the next assignment, marking it started.
    Next {
        #[command(flatten)]
        dir: SessionDir,
        id: String,
    },
    /// Records rubric answers for a rollout.
    Submit {
        #[command(flatten)]
        dir: SessionDir,
        id: String,
        rollout: usize,
        /// `question=yes|no`, once per question.
        #[arg(long = "answer", value_parser = parse_answer, required = true)]
        answers: Vec<(String, bool)>,
        #[arg(long, default_value = "")]
        note: String,
        /// Replace answers recorded earlier; the previous answers stay in the log.
        #[arg(long)]
        amend: bool,
    },
    /// Copies a trace file into the session and attaches it to a rollout.
    Attach {
        #[command(flatten)]
        dir: SessionDir,
        id: String,
        rollout: usize,
        trace: PathBuf,
    },
    /// Adds a free-text note to the session or one rollout.
    Note {
        #[command(flatten)]
        dir: SessionDir,
        id: String,
        text: String,
        #[arg(long)]
        rollout: Option<usize>,
    },
    /// Unblinds the session and prints the revealed plan with aggregates.
    Finalize {
        #[command(flatten)]
        dir: SessionDir,
        id: String,
        /// Unblind even if some rollouts are unscored.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Args)]
struct SpeedArgs {
    trace: PathBuf,
    /// Task whose metric configuration to use.
    #[arg(long)]
    task: Option<PathBuf>,
    /// Position signals (overrides the task).
    #[arg(long, value_delimiter = ',')]
    signals: Option<Vec<String>>,
    /// Resampling rate in Hz (overrides the task).
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// STL robustness at the start of the trace.
    Stl {
        trace: PathBuf,
        /// Formula to evaluate; without it every specification in `--task` is.
        #[arg(long)]
        formula: Option<String>,
        #[arg(long)]
        task: Option<PathBuf>,
    },
    /// Spectral arc length of the speed profile.
    Sparc(SpeedArgs),
    /// Number of prominent velocity peaks.
    Peaks(SpeedArgs),
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Posterior comparison of two conditions given as `successes/trials`.
    Compare {
        #[arg(long, value_parser = parse_counts)]
        first: Counts,
        #[arg(long, value_parser = parse_counts)]
        second: Counts,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Before/after comparison on shared initial conditions. Each file maps
    /// IC id to `{"successes": s, "failures": f}`.
    Shift {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Builds the report of an unblinded session log.
    Build {
        log: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: Format,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
}

fn parse_prior(s: &str) -> Result<BetaPosterior, String> {
    let (a, b) = s.split_once(',').ok_or("expected `alpha,beta`")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad alpha `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad beta `{b}`"))?;
    BetaPosterior::new(a, b).map_err(|e| e.to_string())
}

fn parse_counts(s: &str) -> Result<Counts, String> {
    let (k, n) = s.split_once('/').ok_or("expected `successes/trials`")?;
    let k: u64 = k.trim().parse().map_err(|_| format!("bad success count `{k}`"))?;
    let n: u64 = n.trim().parse().map_err(|_| format!("bad trial count `{n}`"))?;
    if k > n {
        return Err(format!("{k} successes out of {n} trials"));
    }
    Ok(Counts::new(k, n - k))
}

fn parse_answer(s: &str) -> Result<(String, bool), String> {
    let (q, v) = s.split_once('=').ok_or("expected `question=yes|no`")?;
    let v = match v.trim().to_ascii_lowercase().as_str() {
        "yes" | "y" | "true" | "1" => true,
        "no" | "n" | "false" | "0" => false,
        other => return Err(format!("answer `{other}` is not yes or no")),
    };
    Ok((q.trim().to_owned(), v))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_task(path: &Path) -> Result<TaskSpec> {
    TaskSpec::load(path).with_context(|| format!("reading task {}", path.display()))
}

fn load_trace(path: &Path) -> Result<Trace> {
    Trace::load(path).with_context(|| format!("reading trace {}", path.display()))
}

fn open_service(dir: &SessionDir) -> Result<SessionService> {
    SessionService::open(&dir.dir).with_context(|| format!("opening session directory {}", dir.dir.display()))
}

fn speed(args: &SpeedArgs) -> Result<(SpeedProfile, SparcConfig, PeakConfig)> {
    let task = args.task.as_deref().map(load_task).transpose()?;
    let config = task.map(|t| t.metric_config).unwrap_or_default();
    let signals = args.signals.clone().unwrap_or_else(|| config.position_signals.clone());
    if signals.is_empty() {
        bail!("no position signals; pass --signals or a task with metric_config.position_signals");
    }
    let trace = load_trace(&args.trace)?;
    let names: Vec<&str> = signals.iter().map(String::as_str).collect();
    let profile = speed_profile(&trace, &names, args.rate.unwrap_or(config.sample_rate_hz))?;
    Ok((profile, config.sparc, config.peaks))
}

fn run_session(cmd: SessionCommand) -> Result<()> {
    match cmd {
        SessionCommand::Plan { dir, task, policies, reps, seed, ics, id } => {
            let svc = open_service(&dir)?;
            let request = NewSession { task: load_task(&task)?, policies, repetitions: reps, seed, ics };
            let id = match id {
                Some(id) => {
                    svc.create_session_with_id(&id, &request)?;
                    id
                }
                None => svc.create_session(&request)?,
            };
            let state = svc.snapshot(&id)?;
            println!("{id}");
            eprintln!("{} rollouts planned in {}", state.len(), svc.log_path(&id).display());
        }
        SessionCommand::Serve { dir, port, host, static_dir, report } => {
            let svc = Arc::new(open_service(&dir)?);
            let app = http::router(svc, report.options(), static_dir.as_deref());
            let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        SessionCommand::Status { dir, id } => print_json(&open_service(&dir)?.status(&id)?)?,
        SessionCommand::Next { dir, id } => {
            let next = open_service(&dir)?.next_assignment(&id)?;
            if let NextAssignment::Complete { progress } = &next {
                eprintln!("all {} rollouts scored", progress.total);
            }
            print_json(&next)?;
        }
        SessionCommand::Submit { dir, id, rollout, answers, note, amend } => {
            let answers: BTreeMap<String, bool> = answers.into_iter().collect();
            print_json(&open_service(&dir)?.submit_rubric(&id, rollout, answers, note, amend)?)?;
        }
        SessionCommand::Attach { dir, id, rollout, trace } => {
            println!("{}", open_service(&dir)?.attach_trajectory(&id, rollout, &trace)?);
        }
        SessionCommand::Note { dir, id, text, rollout } => open_service(&dir)?.add_note(&id, rollout, text)?,
        SessionCommand::Finalize { dir, id, force, report } => {
            print_json(&open_service(&dir)?.finalize_session(&id, force, &report.options())?)?;
        }
    }
    Ok(())
}

fn run_metrics(cmd: MetricsCommand) -> Result<()> {
    match cmd {
        MetricsCommand::Stl { trace, formula, task } => {
            let specs: Vec<(String, String)> = match (formula, task) {
                (Some(f), _) => vec![("formula".into(), f)],
                (None, Some(task)) => load_task(&task)?.stl_specs.into_iter().map(|s| (s.name, s.formula)).collect(),
                (None, None) => bail!("pass --formula or --task"),
            };
            let trace = load_trace(&trace)?;
            for (name, text) in specs {
                let f = parse_formula(&text).map_err(|e| anyhow!("{name}: {e}"))?;
                let rho = robustness(&f, &trace).map_err(|e| anyhow!("{name}: {e}"))?;
                let verdict = if rho >= 0.0 { "satisfied" } else { "violated" };
                println!("{name}\t{rho}\t{verdict}");
            }
        }
        MetricsCommand::Sparc(args) => {
            let (profile, config, _) = speed(&args)?;
            println!("{}", sparc(&profile, &config)?);
        }
        MetricsCommand::Peaks(args) => {
            let (profile, _, config) = speed(&args)?;
            println!("{}", count_velocity_peaks(&profile, &config)?);
        }
    }
    Ok(())
}

fn read_counts(path: &Path) -> Result<BTreeMap<u32, Counts>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_stats(cmd: StatsCommand) -> Result<()> {
    match cmd {
        StatsCommand::Compare { first, second, analysis: a } => {
            print_json(&compare(first, second, a.prior, a.level, a.samples, a.seed)?)
        }
        StatsCommand::Shift { before, after, analysis: a } => {
            let (before, after) = (read_counts(&before)?, read_counts(&after)?);
            print_json(&shift_report(&before, &after, a.prior, a.level, a.samples, a.seed)?)
        }
    }
}

fn run_report(cmd: ReportCommand) -> Result<()> {
    let ReportCommand::Build { log, format, out, report } = cmd;
    let bytes = std::fs::read(&log).with_context(|| format!("reading {}", log.display()))?;
    let state = replay(&bytes).with_context(|| format!("replaying {}", log.display()))?;
    let base = log.parent().unwrap_or(Path::new("."));
    let metrics = metrics_for(&state, base);
    let text = render(&build_report(&state, &metrics, &report.options())?, format);
    match out {
        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Task(TaskCommand::Validate { task }) => {
            let violations = validate_task_spec(&load_task(&task)?);
            if violations.is_empty() {
                println!("ok");
            } else {
                for v in &violations {
                    println!("{v}");
                }
                bail!("{} problem(s) in {}", violations.len(), task.display());
            }
            Ok(())
        }
        Command::Session(cmd) => run_session(cmd),
        Command::Metrics(cmd) => run_metrics(cmd),
        Command::Stats(cmd) => run_stats(cmd),
        Command::Report(cmd) => run_report(cmd),
    }
}
