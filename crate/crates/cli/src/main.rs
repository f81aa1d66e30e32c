//! `qregret`: simulation tables, adversary certificates and invariant suites.

mod adversary_cmd;
mod config;
mod output;
mod tables;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use quantile_regret::Exact;

use config::Settings;
use output::{timestamp, OutputSet};

#[derive(Parser)]
#[command(name = "qregret", version, about = "Finite-sample regret of treatment rules under quantile objectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Maximal and mean regret per rule over the grid state space.
    Table1,
    /// How often the empirical success rule beats each other rule.
    Table2,
    /// Build and certify a worst-case state for one rule.
    Adversary {
        /// `const:<c>`, `esr`, `table:<file>`; with covariates also
        /// `const:<c1>,<c2>,..` and `covtable:<file>`.
        rule: String,
    },
    /// Run an invariant suite: cardinality, sandwich, oracle, minimax-set or all.
    Verify { suite: String },
}

#[derive(Args, Default)]
struct Flags {
    /// `key=value` settings file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Quantile level(s), comma-separated for tables.
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// Known untreated quantile(s), comma-separated for tables.
    #[arg(long, global = true)]
    q0: Option<String>,
    /// Untreated specification(s): I, II.
    #[arg(long = "y0-choice", global = true)]
    y0_choice: Option<String>,
    /// fixed, random or innovation.
    #[arg(long, global = true)]
    design: Option<String>,
    #[arg(long = "n-grid", global = true)]
    n_grid: Option<String>,
    #[arg(long = "w-grid", global = true)]
    w_grid: Option<String>,
    /// Sample size for the simulation, or `n` of the random and innovation designs.
    #[arg(long = "sample-size", global = true)]
    sample_size: Option<String>,
    #[arg(long, global = true)]
    replications: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Tie buffer of the empirical success rule.
    #[arg(long, global = true)]
    xi: Option<String>,
    /// Position inside the quantile interval, 0 = lower end.
    #[arg(long, global = true)]
    r: Option<String>,
    /// Comma-separated simulation rules, e.g. `esr,const:1,const:0.5,const:0`.
    #[arg(long, global = true)]
    rules: Option<String>,
    /// Exact rational arithmetic.
    #[arg(long, global = true)]
    exact: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Monte Carlo strategy: aggregated, direct or exact.
    #[arg(long, global = true)]
    mc: Option<String>,
    /// Perturbation of the two-point untreated law.
    #[arg(long, global = true)]
    epsilon: Option<String>,
    #[arg(long, global = true)]
    n0: Option<String>,
    #[arg(long, global = true)]
    n1: Option<String>,
    /// Treatment probability of the random design.
    #[arg(long, global = true)]
    p: Option<String>,
    /// Number of covariate values for the adversary.
    #[arg(long, global = true)]
    covariates: Option<String>,
    /// Covariate masses, comma-separated.
    #[arg(long, global = true)]
    fx: Option<String>,
    #[arg(long, global = true)]
    trials: Option<String>,
    #[arg(long = "max-n", global = true)]
    max_n: Option<String>,
}

impl Flags {
    fn settings(&self) -> Result<Settings> {
        let pairs = [
            ("alpha", &self.alpha),
            ("q0", &self.q0),
            ("y0-choice", &self.y0_choice),
            ("design", &self.design),
            ("n-grid", &self.n_grid),
            ("w-grid", &self.w_grid),
            ("sample-size", &self.sample_size),
            ("replications", &self.replications),
            ("seed", &self.seed),
            ("xi", &self.xi),
            ("r", &self.r),
            ("rules", &self.rules),
            ("threads", &self.threads),
            ("out", &self.out),
            ("mc", &self.mc),
            ("epsilon", &self.epsilon),
            ("n0", &self.n0),
            ("n1", &self.n1),
            ("p", &self.p),
            ("covariates", &self.covariates),
            ("fx", &self.fx),
            ("trials", &self.trials),
            ("max-n", &self.max_n),
        ];
        let mut set: Vec<(&str, String)> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if self.exact {
            set.push(("exact", "true".to_string()));
        }
        Settings::from_pairs(set)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let started = timestamp();
    let file = match &cli.flags.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let (name, defaults) = match &cli.command {
        Command::Table1 => ("table1", tables::defaults()),
        Command::Table2 => ("table2", tables::defaults()),
        Command::Adversary { .. } => ("adversary", adversary_cmd::defaults()),
        Command::Verify { .. } => ("verify", verify::defaults()),
    };
    let settings = cli.flags.settings()?.over(&file.over(&defaults));
    if let Some(threads) = settings.get("threads") {
        let n: usize = threads.trim().parse().context("setting `threads`")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let exact = settings.flag("exact")?;
    let seed = settings.get("seed").map(|_| settings.parse::<u64>("seed")).transpose()?;
    let run_id = settings.run_id(name);
    let out_dir = settings.get("out").map(PathBuf::from);

    match &cli.command {
        Command::Table1 | Command::Table2 => {
            let table = if name == "table1" { tables::Table::One } else { tables::Table::Two };
            let dir = out_dir.context("missing setting `out`")?;
            let mut out = OutputSet::new(&dir);
            if exact {
                tables::run::<Exact>(table, &settings, &mut out, &run_id)?;
            } else {
                tables::run::<f64>(table, &settings, &mut out, &run_id)?;
            }
            let manifest = out.commit(name, &settings, exact, seed, started)?;
            println!("{}", manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Adversary { rule } => {
            let outcome = if exact {
                adversary_cmd::run::<Exact>(rule, &settings)?
            } else {
                adversary_cmd::run::<f64>(rule, &settings)?
            };
            let record = format!("{}run: {run_id}\n", outcome.record);
            print!("{record}");
            if let Some(dir) = out_dir {
                let mut out = OutputSet::new(dir);
                out.add("certificate.txt", record.into_bytes());
                out.commit(name, &settings, exact, seed, started)?;
            }
            Ok(if outcome.certified { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Verify { suite } => {
            let results = verify::run(suite, &settings)?;
            let mut lines = String::new();
            for r in &results {
                lines.push_str(&serde_json::to_string(r)?);
                lines.push('\n');
            }
            print!("{lines}");
            if let Some(dir) = out_dir {
                let mut out = OutputSet::new(dir);
                out.add("verify.jsonl", lines.into_bytes());
                out.commit(name, &settings, exact, seed, started)?;
            }
            let all = results.iter().all(|r| r.pass);
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}
