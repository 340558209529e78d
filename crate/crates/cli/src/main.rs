//! `oneshot-doe`: run σ sweeps, design tournaments, the finite-dimension
//! probability check and DE initialisation benchmarks.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oneshot_doe::de_opt::{de_bench, DeConfig, NamedDe, PopulationRule};
use oneshot_doe::harness::{
    export, run_experiment, win_matrix, write_artifact, Artifact, ExperimentConfig, Format, RegretRecord, Strategy,
    SweepSpec,
};
use oneshot_doe::io::format_real;
use oneshot_doe::objectives::ObjectiveKind;
use oneshot_doe::stats::{theorem1_check, McRoute, TheoryCheck, TheoryCheckConfig};

use config::{key_reference, CliError, Command, Settings};

#[derive(Parser)]
#[command(name = "oneshot-doe", version, about = "Rescaled Gaussian one-shot designs and their benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Mean regret of a Gaussian design as a function of σ.
    #[command(after_help = key_reference(Command::Sweep))]
    Sweep(Common),
    /// Replicated tournament of design strategies, summarised as a win matrix.
    #[command(after_help = key_reference(Command::DoeBench))]
    DoeBench(Common),
    /// Empirical vs closed-form probability that the best of λ Gaussian
    /// samples lands in the gain region.
    #[command(after_help = key_reference(Command::TheoryCheck))]
    TheoryCheck(Common),
    /// Differential evolution with different initial designs.
    #[command(after_help = key_reference(Command::DeBench))]
    DeBench(Common),
}

/// Flags shared by every subcommand. Precedence, lowest first: built-in
/// defaults, `--config`, the dedicated flags, then `--set`.
#[derive(Args)]
struct Common {
    /// Flat `key = value` file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any setting.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Output file or directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, cmd: Command) -> Result<Settings, CliError> {
        let mut s = Settings::defaults(cmd);
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        if let Some(seed) = self.seed {
            s.set("seed", &seed.to_string())?;
        }
        if let Some(w) = self.workers {
            s.set("workers", &w.to_string())?;
        }
        if let Some(f) = &self.format {
            s.set("format", f)?;
        }
        if let Some(o) = &self.output {
            s.set("output", &o.to_string_lossy())?;
        }
        for pair in &self.set {
            s.set_pair(pair)?;
        }
        Ok(s)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match &cli.command {
        Sub::Sweep(c) => (Command::Sweep, c),
        Sub::DoeBench(c) => (Command::DoeBench, c),
        Sub::TheoryCheck(c) => (Command::TheoryCheck, c),
        Sub::DeBench(c) => (Command::DeBench, c),
    };
    match common.resolve(cmd).and_then(|s| run(cmd, &s)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oneshot-doe {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command, s: &Settings) -> Result<(), CliError> {
    let workers: usize = s.get("workers")?;
    if workers == 0 {
        return Err(CliError::Config("`workers` must be at least 1".into()));
    }
    let format: Format = s.get("format")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cmd {
        Command::Sweep => sweep(s, format),
        Command::DoeBench => doe_bench(s, format),
        Command::TheoryCheck => theory_check(s, format),
        Command::DeBench => de(s, format),
    })
}

fn output(s: &Settings) -> Option<PathBuf> {
    let o = s.raw("output");
    (!o.is_empty()).then(|| PathBuf::from(o))
}

fn sweep(s: &Settings, format: Format) -> Result<(), CliError> {
    let spec = SweepSpec {
        objective: s.get("objective")?,
        dim: s.get("dim")?,
        lambda: s.get("lambda")?,
        multiples: s.grid("grid")?,
        extra_sigmas: s.list("extra_sigmas")?,
        reps: s.get("reps")?,
        seed: s.get("seed")?,
        route: s.get::<McRoute>("route")?,
    };
    let curve = spec.run()?;
    emit(Artifact::Curve(&curve), output(s).as_deref(), format)
}

fn doe_bench(s: &Settings, format: Format) -> Result<(), CliError> {
    let cfg = ExperimentConfig {
        objectives: s.list::<ObjectiveKind>("objectives")?,
        dims: s.list("dims")?,
        budgets: s.list("budgets")?,
        strategies: s.list::<Strategy>("strategies")?,
        reps: s.get("reps")?,
        seed: s.get("seed")?,
    };
    let records = run_experiment(&cfg)?;
    finish_bench(&records, output(s).as_deref(), format)
}

fn de(s: &Settings, format: Format) -> Result<(), CliError> {
    let kinds: Vec<ObjectiveKind> = s.list("objectives")?;
    let dims: Vec<usize> = s.list("dims")?;
    let budgets: Vec<usize> = s.list("budgets")?;
    let rules: Vec<PopulationRule> = s.list("init_rules")?;
    let samplers: Vec<Strategy> = s.list("samplers")?;
    let (workers, f, cr): (usize, f64, f64) = (s.get("parallelism")?, s.get("f")?, s.get("cr")?);
    let reps: usize = s.get("reps")?;
    let seed: u64 = s.get("seed")?;
    for (key, empty) in [("budgets", budgets.is_empty()), ("init_rules", rules.is_empty()), ("samplers", samplers.is_empty())] {
        if empty {
            return Err(CliError::Config(format!("`{key}` is empty")));
        }
    }
    let problems: Vec<(ObjectiveKind, usize)> = kinds.iter().flat_map(|&k| dims.iter().map(move |&d| (k, d))).collect();
    let mut records = Vec::new();
    for &budget in &budgets {
        let mut configs = Vec::new();
        for &rule in &rules {
            for init in &samplers {
                let mut c = DeConfig::new(budget, rule, init.clone(), 0);
                c.workers = workers;
                c.f = f;
                c.cr = cr;
                configs.push(NamedDe::from(c));
            }
        }
        records.extend(de_bench(&configs, &problems, reps, seed)?);
    }
    finish_bench(&records, output(s).as_deref(), format)
}

/// Records plus win matrix into a directory, or the matrix alone to stdout.
fn finish_bench(records: &[RegretRecord], out: Option<&Path>, format: Format) -> Result<(), CliError> {
    let matrix = win_matrix(records)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            export(Artifact::Records(records), &dir.join(format!("records.{format}")), format)?;
            export(Artifact::Matrix(&matrix), &dir.join(format!("win_matrix.{format}")), format)?;
            Ok(())
        }
        None => emit(Artifact::Matrix(&matrix), None, format),
    }
}

fn emit(item: Artifact<'_>, out: Option<&Path>, format: Format) -> Result<(), CliError> {
    match out {
        Some(path) => Ok(export(item, path, format)?),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_artifact(item, &mut lock, format)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn theory_check(s: &Settings, format: Format) -> Result<(), CliError> {
    let mut cfg = TheoryCheckConfig::new(s.get("dim")?, s.get("lambda")?, s.get("reps")?, s.get("seed")?);
    cfg.delta = s.get("delta")?;
    cfg.c1 = s.get("c1")?;
    cfg.c2 = s.get("c2")?;
    cfg.route = s.get("route")?;
    let check = theorem1_check(&cfg)?;
    let text = match format {
        Format::Json => {
            let mut t = serde_json::to_string_pretty(&check).map_err(|e| CliError::Runtime(e.to_string()))?;
            t.push('\n');
            t
        }
        Format::Csv => check_csv(&check),
    };
    match output(s) {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn check_csv(c: &TheoryCheck) -> String {
    let r = format_real;
    format!(
        "d,lambda,delta,c1,c2,reps,frequency,ci_low,ci_high,closed_form\n{},{},{},{},{},{},{},{},{},{}\n",
        c.d,
        c.lambda,
        r(c.delta),
        r(c.c1),
        r(c.c2),
        c.reps,
        r(c.frequency),
        r(c.ci_low),
        r(c.ci_high),
        r(c.closed_form)
    )
}
