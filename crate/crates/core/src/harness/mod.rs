//! Replicated simulation grids: data generation, Bayes probabilities,
//! method fitting and scoring, with CSV output.

mod illustrate;
mod oracle_check;
mod results;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_dataset, gen_mixture, Dataset, NonlinearTransform, PatternMixture, ScenarioConfig, ScenarioKind};
use crate::error::{Error, Result};
use crate::estimators::{fit, MethodSpec};
use crate::metrics::{coef_mse, EvalReport};
use crate::oracle::{bayes_probs_closed_form, bayes_probs_mc, epsilon_sup, Link, McEstimate, ProbitScale};
use crate::rng::{derive_seed, hash_str, stream, TAG_METHOD, TAG_MIXTURE, TAG_ORACLE, TAG_TEST, TAG_TRAIN};

pub use illustrate::{illustrate_2d, write_illustration_csv, IllustrationCurve, IllustrationOptions, SecondFeature};
pub use oracle_check::{oracle_check, OracleCheckReport};
pub use results::{
    read_results_csv, summarize, write_pattern_summary_csv, write_results_csv, write_summary_csv, write_timings_csv,
    GroupField, PatternSummaryRow, ResultRow, Status, SummaryRow, METRICS,
};

fn default_test_size() -> usize {
    15_000
}
fn default_replicates() -> usize {
    10
}
fn default_mc_k() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub methods: Vec<MethodSpec>,
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_mc_k")]
    pub oracle_mc_k: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.train_sizes.is_empty() || self.train_sizes.contains(&0) {
            return Err(Error::Config("train_sizes must be non-empty and positive".into()));
        }
        if self.test_size == 0 || self.oracle_mc_k == 0 {
            return Err(Error::Config("test_size and oracle_mc_k must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods listed".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.methods {
            m.validate()?;
            if !seen.insert(m.label()) {
                return Err(Error::Config(format!("method {} listed twice", m.label())));
            }
        }
        Ok(())
    }
}

/// Scenario with `beta_star` filled in, and its mixture. Both depend only
/// on the scenario seed, so every replicate shares them.
pub fn materialize(scenario: &ScenarioConfig) -> Result<(ScenarioConfig, PatternMixture)> {
    let scenario = scenario.with_beta_star();
    let mixture = gen_mixture(&scenario, &mut stream(scenario.seed, &[TAG_MIXTURE]))?;
    Ok((scenario, mixture))
}

/// Seed of one `(replicate, n)` grid cell.
pub fn cell_seed(base_seed: u64, replicate: usize, n: usize) -> u64 {
    derive_seed(base_seed, &[replicate as u64, n as u64])
}

pub struct CellData {
    pub train: Dataset,
    pub test: Dataset,
    /// Monte Carlo Bayes probabilities of the test rows.
    pub bayes: Vec<McEstimate>,
}

/// Generate the train/test pair of a cell and its test-set Bayes
/// probabilities. For Gaussian scenarios the Monte Carlo values are checked
/// against the rescaled-probit closed form first.
pub fn cell_data(
    config: &ExperimentConfig,
    scenario: &ScenarioConfig,
    mixture: &PatternMixture,
    replicate: usize,
    n: usize,
) -> Result<CellData> {
    let seed = cell_seed(config.base_seed, replicate, n);
    let train = gen_dataset(scenario, mixture, n, &mut stream(seed, &[TAG_TRAIN]))?;
    let mut test = gen_dataset(scenario, mixture, config.test_size, &mut stream(seed, &[TAG_TEST]))?;
    let beta = scenario.beta_star()?;
    let nonlinear = NonlinearTransform;
    let transform: Option<&dyn crate::datagen::FeatureTransform> = match scenario.kind {
        ScenarioKind::Nonlinear => Some(&nonlinear),
        _ => None,
    };
    let bayes = bayes_probs_mc(
        &test.z_observed,
        &test.mask,
        mixture,
        0.0,
        beta,
        config.oracle_mc_k,
        Link::Logistic,
        transform,
        derive_seed(seed, &[TAG_ORACLE]),
    )?;
    if transform.is_none() {
        let closed = bayes_probs_closed_form(&test.z_observed, &test.mask, mixture, 0.0, beta, ProbitScale::LogisticPi8)?;
        let bound = 2.0 * epsilon_sup().value;
        if let Some((i, (c, mc))) = closed
            .iter()
            .zip(&bayes)
            .enumerate()
            .find(|(_, (c, mc))| (*c - mc.mean).abs() > bound + 3.0 * mc.se)
        {
            return Err(Error::InvalidInput(format!(
                "oracle cross-check failed on test row {i}: closed form {c:.5}, Monte Carlo {:.5} (se {:.5})",
                mc.mean, mc.se
            )));
        }
    }
    test.bayes_probs = Some(bayes.iter().map(|e| e.mean).collect());
    Ok(CellData { train, test, bayes })
}

/// Fit one method on a cell and score it.
pub fn evaluate_method(spec: &MethodSpec, cell: &CellData, cell_seed: u64, scenario_name: &str, replicate: usize) -> ResultRow {
    let n = cell.train.n();
    let mut row = ResultRow::new(scenario_name, &spec.label(), n, replicate);
    let seed = derive_seed(cell_seed, &[TAG_METHOD, hash_str(&spec.label())]);
    let start = Instant::now();
    let fitted = match fit(spec, &cell.train, seed) {
        Ok(f) => f,
        Err(e) => {
            row.fit_seconds = start.elapsed().as_secs_f64();
            row.status = Status::Failed(e.to_string());
            return row;
        }
    };
    row.fit_seconds = start.elapsed().as_secs_f64();
    if !fitted.diagnostics.converged {
        row.status = Status::NotConverged;
    }
    let beta = cell.test.scenario.beta_star().expect("materialized scenario");
    row.coef_mse = match coef_mse(fitted.coef_report.as_ref().map(|c| c.features.as_slice()), beta) {
        Ok(v) => v,
        Err(e) => {
            row.status = Status::Failed(e.to_string());
            return row;
        }
    };
    let start = Instant::now();
    let probs = match fitted.predict(&cell.test.z_observed, &cell.test.mask) {
        Ok(p) => p,
        Err(Error::UnsupportedPrediction(_)) => {
            row.predict_seconds = start.elapsed().as_secs_f64();
            return row;
        }
        Err(e) => {
            row.status = Status::Failed(e.to_string());
            return row;
        }
    };
    row.predict_seconds = start.elapsed().as_secs_f64();
    let bayes = cell.test.bayes_probs.as_ref().expect("cell data carries Bayes probabilities");
    match EvalReport::evaluate(&probs, bayes, &cell.test.y, &cell.test.mask, row.coef_mse) {
        Ok(rep) => row.fill_from(&rep),
        Err(e) => row.status = Status::Failed(e.to_string()),
    }
    row
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Output directory for `results.csv` and friends.
    pub out_dir: Option<PathBuf>,
    /// Reuse cells already recorded in `cells.jsonl`.
    pub resume: bool,
}

#[derive(Serialize)]
struct ParamsDump<'a> {
    config: &'a ExperimentConfig,
    scenario: &'a ScenarioConfig,
    beta_star: &'a [f64],
    mixture: &'a PatternMixture,
    method_labels: Vec<String>,
    oracle_crosscheck_bound: f64,
}

const CELLS_FILE: &str = "cells.jsonl";

fn load_cells(path: &Path) -> Result<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // A torn final line from an interrupted run is skipped.
        match serde_json::from_str(&line) {
            Ok(r) => rows.push(r),
            Err(e) => log::warn!("skipping unreadable line in {}: {e}", path.display()),
        }
    }
    Ok(rows)
}

/// Run the whole grid. Rows come back sorted by method (config order), `n`
/// and replicate, independent of scheduling.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let (scenario, mixture) = materialize(&config.scenario)?;
    let labels: Vec<String> = config.methods.iter().map(|m| m.label()).collect();
    let scenario_name = scenario.kind.name().to_string();

    let mut done: BTreeMap<(String, usize, usize), ResultRow> = BTreeMap::new();
    let mut journal = None;
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        let dump = ParamsDump {
            config,
            scenario: &scenario,
            beta_star: scenario.beta_star()?,
            mixture: &mixture,
            method_labels: labels.clone(),
            oracle_crosscheck_bound: 2.0 * epsilon_sup().value,
        };
        let mut f = BufWriter::new(File::create(dir.join("params.json"))?);
        serde_json::to_writer_pretty(&mut f, &dump)?;
        f.flush()?;
        let cells_path = dir.join(CELLS_FILE);
        if opts.resume {
            for r in load_cells(&cells_path)? {
                done.insert((r.method.clone(), r.n, r.replicate), r);
            }
            log::info!("resuming with {} recorded cells", done.len());
        } else if cells_path.exists() {
            fs::remove_file(&cells_path)?;
        }
        journal = Some(Mutex::new(
            OpenOptions::new().create(true).append(true).open(&cells_path)?,
        ));
    }

    let tasks: Vec<(usize, usize)> = (0..config.replicates)
        .flat_map(|r| config.train_sizes.iter().map(move |&n| (r, n)))
        .collect();
    let run_task = |&(replicate, n): &(usize, usize)| -> Result<Vec<ResultRow>> {
        let todo: Vec<&MethodSpec> = config
            .methods
            .iter()
            .filter(|m| !done.contains_key(&(m.label(), n, replicate)))
            .collect();
        if todo.is_empty() {
            return Ok(Vec::new());
        }
        let seed = cell_seed(config.base_seed, replicate, n);
        let rows: Vec<ResultRow> = match cell_data(config, &scenario, &mixture, replicate, n) {
            Ok(cell) => todo
                .iter()
                .map(|m| {
                    let row = evaluate_method(m, &cell, seed, &scenario_name, replicate);
                    log::info!("{} n={} rep={}: {}", row.method, n, replicate, row.status);
                    row
                })
                .collect(),
            Err(e) => {
                log::error!("replicate {replicate}, n = {n} aborted: {e}");
                todo.iter()
                    .map(|m| {
                        let mut row = ResultRow::new(&scenario_name, &m.label(), n, replicate);
                        row.status = Status::Failed(format!("oracle: {e}"));
                        row
                    })
                    .collect()
            }
        };
        if let Some(j) = &journal {
            let mut f = j.lock().expect("journal lock");
            for r in &rows {
                writeln!(f, "{}", serde_json::to_string(r)?)?;
            }
            f.flush()?;
        }
        Ok(rows)
    };

    let fresh: Vec<Vec<ResultRow>> = match opts.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| tasks.par_iter().map(run_task).collect::<Result<_>>())?
        }
        None => tasks.par_iter().map(run_task).collect::<Result<_>>()?,
    };

    let order: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut rows: Vec<ResultRow> = done
        .into_values()
        .filter(|r| order.contains_key(r.method.as_str()) && config.train_sizes.contains(&r.n) && r.replicate < config.replicates)
        .chain(fresh.into_iter().flatten())
        .collect();
    rows.sort_by_key(|r| (order[r.method.as_str()], r.n, r.replicate));

    if let Some(dir) = &opts.out_dir {
        write_results_csv(&rows, BufWriter::new(File::create(dir.join("results.csv"))?))?;
        write_timings_csv(&rows, BufWriter::new(File::create(dir.join("timings.csv"))?))?;
        let fields = [GroupField::Scenario, GroupField::Method, GroupField::N];
        let (summary, patterns) = summarize(&rows, &fields)?;
        write_summary_csv(&summary, &fields, BufWriter::new(File::create(dir.join("summary.csv"))?))?;
        write_pattern_summary_csv(&patterns, &fields, BufWriter::new(File::create(dir.join("summary_patterns.csv"))?))?;
    }
    Ok(rows)
}
