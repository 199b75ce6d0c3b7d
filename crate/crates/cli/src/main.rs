use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use misslogit::datagen::{gen_dataset, ScenarioConfig};
use misslogit::harness::{
    illustrate_2d, materialize, oracle_check, read_results_csv, run_experiment, summarize, write_illustration_csv,
    write_pattern_summary_csv, write_summary_csv, ExperimentConfig, GroupField, IllustrationOptions, RunOptions, Status,
    METRICS,
};
use misslogit::io::save_dataset;
use misslogit::oracle::{bayes_probs_mc, Link};
use misslogit::rng::stream;

#[derive(Parser)]
#[command(name = "misslogit", version, about = "Logistic prediction with missing covariates: simulation grids and oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write results.csv, summary.csv and params.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Keep cells already recorded in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Aggregate results.csv into means and standard errors.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Comma-separated grouping fields (scenario, method, n, replicate).
        #[arg(long, default_value = "method,n")]
        group: String,
    },
    /// Compare closed-form and Monte Carlo Bayes probabilities for a config.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
        /// Number of test rows to check.
        #[arg(long, default_value_t = 2000)]
        rows: usize,
    },
    /// Bayes probability curves of the two-feature example, as CSV.
    #[command(name = "illustrate-2d")]
    Illustrate2d {
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 200_000)]
        k: usize,
        #[arg(long, default_value_t = 161)]
        grid_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate one dataset from a scenario config and save it as CSV plus JSON sidecar.
    Generate {
        /// Scenario JSON (kind, d, rho, miss_prob, beta_star, seed).
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Seed of the sample itself (the scenario seed fixes parameters).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte Carlo draws for a Bayes-probability column (0 = none).
        #[arg(long, default_value_t = 0)]
        bayes_k: usize,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            workers,
            resume,
        } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let rows = run_experiment(
                &cfg,
                &RunOptions {
                    workers,
                    out_dir: Some(out.clone()),
                    resume,
                },
            )?;
            let failed = rows.iter().filter(|r| matches!(r.status, Status::Failed(_))).count();
            let unconverged = rows.iter().filter(|r| r.status == Status::NotConverged).count();
            println!(
                "{} rows written to {} ({failed} failed, {unconverged} not converged)",
                rows.len(),
                out.join("results.csv").display()
            );
        }
        Command::Summarize { input, group } => {
            let fields = GroupField::parse_list(&group)?;
            let path = input.join("results.csv");
            let rows = read_results_csv(File::open(&path).with_context(|| format!("opening {}", path.display()))?)?;
            let (summary, patterns) = summarize(&rows, &fields)?;
            write_summary_csv(&summary, &fields, BufWriter::new(File::create(input.join("summary.csv"))?))?;
            write_pattern_summary_csv(&patterns, &fields, BufWriter::new(File::create(input.join("summary_patterns.csv"))?))?;
            let stdout = io::stdout();
            let mut w = stdout.lock();
            let names: Vec<&str> = fields.iter().map(|f| f.name()).collect();
            writeln!(w, "{}\t{}", names.join("\t"), METRICS.join("\t"))?;
            for s in &summary {
                let cells: Vec<String> = s
                    .metrics
                    .iter()
                    .map(|m| match m {
                        Some(m) => format!("{:.4} ({:.4})", m.mean, m.se),
                        None => "NA".into(),
                    })
                    .collect();
                writeln!(w, "{}\t{}", s.key.join("\t"), cells.join("\t"))?;
            }
        }
        Command::OracleCheck { config, rows } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let report = oracle_check(&cfg, rows)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.passed() {
                bail!("{} rows exceed the logistic approximation bound", report.logistic_violations);
            }
        }
        Command::Illustrate2d {
            out,
            k,
            grid_points,
            seed,
        } => {
            let curves = illustrate_2d(&IllustrationOptions {
                k,
                grid_points,
                seed,
                ..IllustrationOptions::default()
            })?;
            for c in &curves {
                eprintln!(
                    "{}: best logistic sigma({:.4} + {:.4} x1), max deviation {:.4}",
                    c.case, c.intercept, c.slope, c.max_deviation
                );
            }
            match out {
                Some(path) => write_illustration_csv(&curves, BufWriter::new(File::create(path)?))?,
                None => write_illustration_csv(&curves, io::stdout().lock())?,
            }
        }
        Command::Generate {
            scenario,
            n,
            out,
            seed,
            bayes_k,
        } => {
            let text = fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let cfg: ScenarioConfig = serde_json::from_str(&text)?;
            cfg.validate()?;
            let (cfg, mixture) = materialize(&cfg)?;
            let mut data = gen_dataset(&cfg, &mixture, n, &mut stream(seed, &[]))?;
            if bayes_k > 0 {
                let nonlinear = misslogit::datagen::NonlinearTransform;
                let transform: Option<&dyn misslogit::datagen::FeatureTransform> = match cfg.kind {
                    misslogit::ScenarioKind::Nonlinear => Some(&nonlinear),
                    _ => None,
                };
                let probs = bayes_probs_mc(
                    &data.z_observed,
                    &data.mask,
                    &mixture,
                    0.0,
                    cfg.beta_star()?,
                    bayes_k,
                    Link::Logistic,
                    transform,
                    seed ^ 0x5EED,
                )?;
                data.bayes_probs = Some(probs.iter().map(|e| e.mean).collect());
            }
            save_dataset(&out, &data, &mixture)?;
            println!("{n} rows written to {}", out.display());
        }
    }
    Ok(())
}
