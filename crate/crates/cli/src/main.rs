use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pwa_cbf::multibarrier::generate_test_points;
use pwa_cbf::synth::trace_csv;
use pwa_cbf::BarrierKind;
use pwa_cbf_cli::commands::{self, Artifact, Status};
use pwa_cbf_cli::{fixtures, load_problem, InputError};

#[derive(Parser)]
#[command(name = "pwa-cbf", version, about = "Piecewise-affine control barrier synthesis for switched affine systems")]
struct Cli {
    /// Worker threads for the parallel search (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct KindArgs {
    /// Synthesize max-of-affine barriers only.
    #[arg(long, conflicts_with = "min")]
    max: bool,
    /// Synthesize min-of-affine barriers only.
    #[arg(long)]
    min: bool,
}

impl KindArgs {
    fn kinds(&self, default: BarrierKind) -> Vec<BarrierKind> {
        match (self.max, self.min) {
            (true, _) => vec![BarrierKind::Max],
            (_, true) => vec![BarrierKind::Min],
            _ => vec![default],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one barrier separating the initial set from the unsafe set.
    Synth {
        problem: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        kind: KindArgs,
        /// Replace the initial set by this point (comma separated).
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        /// Write the search-tree trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Synthesize a barrier family over test points.
    SynthFamily {
        problem: PathBuf,
        /// JSON file with an array of points, `random:N`, or `problem` for the bundled points.
        #[arg(long, default_value = "problem")]
        points: String,
        /// Sampling box for `random:N` (`lo:hi,…`); defaults to the unsafe box grown by 5.
        #[arg(long, allow_hyphen_values = true)]
        bounds: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
        /// Run only one kind (default: both).
        #[arg(long, conflicts_with = "min_only")]
        max_only: bool,
        #[arg(long)]
        min_only: bool,
    },
    /// Check C1, C2p and C3; exits 0 iff the barrier verifies.
    Verify {
        problem: PathBuf,
        barrier: PathBuf,
        /// Replace the initial set by this point (comma separated).
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
    },
    /// Simulate the closed loop under a barrier or family switching rule.
    Simulate {
        problem: PathBuf,
        artifact: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 10.0)]
        t_final: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Grid of barrier values for external contouring.
    Levelset {
        artifact: PathBuf,
        /// `lo:hi,…`, one interval per coordinate.
        #[arg(long, allow_hyphen_values = true)]
        bounds: String,
        /// Samples per axis.
        #[arg(long, default_value_t = 101)]
        res: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a bundled example and print a summary table.
    Bench {
        /// ex5, ex6, ex7 or ex8.
        example: String,
        #[command(flatten)]
        kind: KindArgs,
        /// Per-point time limit in seconds, overriding the bundled one.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Write the resulting family here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(Status::Internal.code());
        }
    }
    match run(cli.command) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Status::of_error(&e).code())
        }
    }
}

fn load_with_x0(problem: &Path, x0: Option<&str>) -> anyhow::Result<pwa_cbf_cli::ProblemSpec> {
    let p = load_problem(problem)?;
    match x0 {
        Some(x) => p.with_initial_point(&commands::parse_vector(x)?),
        None => Ok(p),
    }
}

fn run(command: Command) -> anyhow::Result<Status> {
    match command {
        Command::Synth { problem, output, kind, x0, trace } => {
            let p = load_with_x0(&problem, x0.as_deref())?;
            let kind = kind.kinds(p.params.kind)[0];
            let cfg = pwa_cbf::SynthConfig {
                trace: trace.is_some(),
                ..p.config(kind)
            };
            let out = commands::synth(&p, &cfg)?;
            print!("{}", commands::stats_text(&out));
            if let Some(path) = trace {
                std::fs::write(&path, trace_csv(&out.trace)).with_context(|| format!("writing {}", path.display()))?;
            }
            match &out.barrier {
                Some(b) => {
                    commands::save_json(&output, b)?;
                    Ok(Status::Success)
                }
                None => Ok(Status::Fail),
            }
        }
        Command::SynthFamily { problem, points, bounds, output, max_only, min_only } => {
            let p = load_problem(&problem)?;
            let pts = if points == "problem" {
                p.test_points.clone()
            } else if let Some(count) = points.strip_prefix("random:") {
                let count: usize = count.parse().map_err(|_| InputError(format!("bad point count `{count}`")))?;
                let bounds = match bounds {
                    Some(b) => commands::parse_bounds(&b)?,
                    None => commands::padded_unsafe_box(&p.xu, 5.0)?,
                };
                generate_test_points(&p.xu, &bounds, count, p.params.seed, 1e-2).map_err(|e| InputError(e.to_string()))?
            } else {
                let text = std::fs::read_to_string(&points).map_err(|e| InputError(format!("{points}: {e}")))?;
                serde_json::from_str(&text).map_err(|e| InputError(format!("{points}: {e}")))?
            };
            commands::check_points(&p, &pts)?;
            let kinds = match (max_only, min_only) {
                (true, _) => vec![BarrierKind::Max],
                (_, true) => vec![BarrierKind::Min],
                _ => vec![BarrierKind::Max, BarrierKind::Min],
            };
            let report = commands::synth_family(&p, &pts, &kinds)?;
            for kind in &kinds {
                println!("{kind:?}: {}/{} found", report.found(*kind), pts.len());
            }
            commands::save_json(&output, &report.family)?;
            Ok(if report.family.is_empty() { Status::Fail } else { Status::Success })
        }
        Command::Verify { problem, barrier, x0 } => {
            let p = load_with_x0(&problem, x0.as_deref())?;
            let b = match commands::load_artifact(&barrier)? {
                Artifact::Barrier(b) => b,
                Artifact::Family(_) => return Err(InputError("verify expects a single barrier".into()).into()),
            };
            let (out, text) = commands::verify(&p, &b)?;
            print!("{text}");
            Ok(if out.is_verified() { Status::Success } else { Status::Counterexample })
        }
        Command::Simulate { problem, artifact, x0, dt, t_final, output } => {
            let p = load_problem(&problem)?;
            let a = commands::load_artifact(&artifact)?;
            let x0 = commands::parse_vector(&x0)?;
            let (traj, report) = commands::simulate_checked(&p, &a, &x0, dt, t_final)?;
            std::fs::write(&output, traj.to_csv()).with_context(|| format!("writing {}", output.display()))?;
            println!("samples: {}", traj.len());
            println!("mode switches: {}", traj.mode_switches);
            println!("max barrier value: {:.6}", report.max_barrier_value);
            println!("monitor flags: {}", report.bound_flags.len());
            println!("unsafe entries: {}", report.unsafe_entries.len());
            if let Some(reason) = &traj.aborted {
                println!("aborted: {reason}");
            }
            Ok(if report.is_clean() && traj.aborted.is_none() { Status::Success } else { Status::Fail })
        }
        Command::Levelset { artifact, bounds, res, output } => {
            let a = commands::load_artifact(&artifact)?;
            let bounds = commands::parse_bounds(&bounds)?;
            let csv = commands::levelset_csv(&a, &bounds, res)?;
            std::fs::write(&output, csv).with_context(|| format!("writing {}", output.display()))?;
            Ok(Status::Success)
        }
        Command::Bench { example, kind, time_limit, output } => {
            let mut p = fixtures::problem(&example).map_err(|e| InputError(e.to_string()))?;
            if let Some(t) = time_limit {
                p.params.time_limit_secs = Some(t);
            }
            let kinds = if kind.max || kind.min {
                kind.kinds(BarrierKind::Max)
            } else {
                vec![BarrierKind::Max, BarrierKind::Min]
            };
            let mut rows = Vec::new();
            let mut members = Vec::new();
            let mut provenance = Vec::new();
            for k in kinds {
                let (row, report) = commands::bench(&p, k)?;
                rows.push(row);
                members.extend(report.family.members);
                provenance.extend(report.family.provenance);
            }
            print!("{}", commands::bench_table(&rows));
            if let Some(path) = output {
                commands::save_json(&path, &pwa_cbf::BarrierFamily::new(members, provenance)?)?;
            }
            Ok(Status::Success)
        }
    }
}
