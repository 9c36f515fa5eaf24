//! Parallel multi-seed runs, ablation grids and their summaries.

use std::path::Path;

use rayon::prelude::*;
use trickbench_core::harness::{bootstrap_ci, effect_size, mean, run_seed, ExperimentConfig, SeedRun};
use trickbench_core::SeededRng;

use crate::config;
use crate::csvio;
use crate::error::{Error, Result};

pub const SEED_OFFSET_VAR: &str = "TRICKBENCH_SEED_OFFSET";
pub const CI_LEVEL: f64 = 0.95;
pub const CI_RESAMPLES: usize = 10_000;
/// Every summary interval is drawn from `SeededRng::for_component(0, "summary-bootstrap")`.
pub const CI_STREAM: &str = "summary-bootstrap";

/// Reads [`SEED_OFFSET_VAR`]; unset or empty means no offset.
pub fn seed_offset_from_env() -> Result<u64> {
    match std::env::var(SEED_OFFSET_VAR) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| Error::SeedOffset(v)),
        _ => Ok(0),
    }
}

pub fn apply_seed_offset(config: &mut ExperimentConfig, offset: u64) -> Result<()> {
    for s in &mut config.seeds {
        *s = s
            .checked_add(offset)
            .ok_or_else(|| Error::SeedOffset(offset.to_string()))?;
    }
    Ok(())
}

/// Runs every seed on at most `jobs` threads. Results come back in seed-list
/// order and are identical for any `jobs`.
pub fn run_seeds(config: &ExperimentConfig, jobs: usize) -> Result<Vec<SeedRun>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let runs = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_seed(config, seed))
            .collect::<Vec<_>>()
    });
    Ok(runs.into_iter().collect::<trickbench_core::Result<_>>()?)
}

/// Writes `<stem>.curves.csv` and `<stem>.diagnostics.csv` in `dir`.
pub fn write_runs(dir: &Path, stem: &str, runs: &[SeedRun]) -> Result<()> {
    let curves: Vec<_> = runs.iter().flat_map(|r| r.curve.iter().cloned()).collect();
    if !curves.is_empty() {
        csvio::write_curves(&dir.join(format!("{stem}.curves.csv")), &curves)?;
    }
    csvio::write_diagnostics(
        &dir.join(format!("{stem}.diagnostics.csv")),
        runs.iter().flat_map(|r| r.diagnostics.iter().map(move |d| (r.seed, d))),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell: String,
    pub config_hash: String,
    pub algorithm: String,
    pub env: String,
    pub n_seeds: usize,
    /// `seed@step` for every failed seed.
    pub failures: Vec<String>,
    pub final_mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub effect_size: Option<f64>,
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "cell",
    "config_hash",
    "algorithm",
    "env",
    "n_seeds",
    "n_failed",
    "failures",
    "final_mean",
    "ci_low",
    "ci_high",
    "n_resamples",
    "effect_size",
];

/// Final evaluation return of every seed that did not fail.
pub fn final_returns(runs: &[SeedRun]) -> Vec<f64> {
    runs.iter().filter_map(SeedRun::final_return).collect()
}

/// Summary of one cell. Failed seeds are excluded from the statistics and
/// listed in `failures`; the effect size is taken against `baseline` final
/// returns when both groups allow it.
pub fn summarize(cell: &str, config: &ExperimentConfig, runs: &[SeedRun], baseline: Option<&[f64]>) -> SummaryRow {
    let finals = final_returns(runs);
    let ci = (!finals.is_empty()).then(|| {
        let mut rng = SeededRng::for_component(0, CI_STREAM);
        bootstrap_ci(&finals, CI_LEVEL, CI_RESAMPLES, &mut rng).expect("non-empty samples")
    });
    SummaryRow {
        cell: cell.to_string(),
        config_hash: config::config_hash(config),
        algorithm: config.algorithm.to_string(),
        env: config.env.name().to_string(),
        n_seeds: runs.len(),
        failures: runs
            .iter()
            .filter_map(|r| r.failure.as_ref().map(|f| format!("{}@{}", r.seed, f.step)))
            .collect(),
        final_mean: (!finals.is_empty()).then(|| mean(&finals)),
        ci_low: ci.map(|c| c.lower),
        ci_high: ci.map(|c| c.upper),
        effect_size: baseline.and_then(|b| effect_size(&finals, b).ok()),
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(SUMMARY_HEADER).map_err(Error::csv(path))?;
    let opt = |x: Option<f64>| x.map(csvio::format_float).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.cell.clone(),
            r.config_hash.clone(),
            r.algorithm.clone(),
            r.env.clone(),
            r.n_seeds.to_string(),
            r.failures.len().to_string(),
            r.failures.join(";"),
            opt(r.final_mean),
            opt(r.ci_low),
            opt(r.ci_high),
            CI_RESAMPLES.to_string(),
            opt(r.effect_size),
        ])
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// One `--toggle key=v1,v2` argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Toggle {
    pub section: String,
    pub key: String,
    pub values: Vec<toml::Value>,
    labels: Vec<String>,
}

impl Toggle {
    /// Parses `key=v1,v2,...`. A bare key is looked up in `[experiment]`
    /// first, then in the algorithm's section; `section.key` is explicit.
    /// `on`/`off` mean true/false; other values take the type of the
    /// default they replace.
    pub fn parse(arg: &str, table: &toml::Table) -> Result<Self> {
        let fail = |message: &str| Error::Toggle {
            toggle: arg.to_string(),
            message: message.to_string(),
        };
        let (name, values) = arg.split_once('=').ok_or_else(|| fail("expected <name>=<v1>,<v2>"))?;
        let labels: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if labels.iter().any(String::is_empty) {
            return Err(fail("empty value"));
        }
        let defaults = defaults_for(table)?;
        let (section, key) = match name.split_once('.') {
            Some((s, k)) => (s.to_string(), k.to_string()),
            None => {
                let algorithm = defaults["experiment"]["algorithm"].as_str().unwrap_or_default().to_string();
                if config::EXPERIMENT_KEYS.contains(&name) {
                    ("experiment".to_string(), name.to_string())
                } else if defaults[&algorithm].as_table().is_some_and(|t| t.contains_key(name)) {
                    (algorithm, name.to_string())
                } else {
                    return Err(fail("unknown setting"));
                }
            }
        };
        let known = match defaults.get(&section).and_then(|s| s.as_table()) {
            Some(t) => t.contains_key(&key) || (section == "experiment" && config::EXPERIMENT_KEYS.contains(&key.as_str())),
            None => false,
        };
        if !known {
            return Err(fail("unknown setting"));
        }
        // `target_return` has no default to copy a type from
        let float_hint = toml::Value::Float(0.0);
        let default = defaults[&section]
            .get(&key)
            .or((key == "target_return").then_some(&float_hint));
        let values = labels.iter().map(|l| typed_value(l, default)).collect();
        Ok(Self {
            section,
            key,
            values,
            labels,
        })
    }
}

fn defaults_for(table: &toml::Table) -> Result<toml::Table> {
    Ok(config::to_table(&config::from_table(table.clone())?))
}

fn typed_value(raw: &str, default: Option<&toml::Value>) -> toml::Value {
    use toml::Value;
    match raw {
        "on" | "true" => return Value::Boolean(true),
        "off" | "false" => return Value::Boolean(false),
        _ => {}
    }
    match default {
        Some(Value::Float(_)) => raw.parse().map(Value::Float).unwrap_or_else(|_| Value::String(raw.into())),
        Some(Value::Integer(_)) => raw.parse().map(Value::Integer).unwrap_or_else(|_| Value::String(raw.into())),
        _ => raw
            .parse::<i64>()
            .map(Value::Integer)
            .or_else(|_| raw.parse::<f64>().map(Value::Float))
            .unwrap_or_else(|_| Value::String(raw.into())),
    }
}

/// One point of an ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// `key=value` pairs joined by commas.
    pub label: String,
    pub config: ExperimentConfig,
}

impl Cell {
    /// File-name form of the label.
    pub fn stem(&self) -> String {
        self.label
            .chars()
            .map(|c| match c {
                '=' => '-',
                ',' => '_',
                c if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' => c,
                _ => '_',
            })
            .collect()
    }
}

/// Cross product of `toggles` applied to `base`, in odometer order with the
/// last toggle varying fastest. The first cell takes the first value of
/// every toggle and serves as the baseline.
pub fn expand_grid(base: &toml::Table, toggles: &[Toggle]) -> Result<Vec<Cell>> {
    let mut cells = vec![(Vec::<String>::new(), base.clone())];
    for t in toggles {
        let mut next = Vec::with_capacity(cells.len() * t.values.len());
        for (labels, table) in &cells {
            for (value, label) in t.values.iter().zip(&t.labels) {
                let mut table = table.clone();
                let section = table
                    .entry(t.section.clone())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                let section = section.as_table_mut().ok_or_else(|| Error::Toggle {
                    toggle: t.key.clone(),
                    message: format!("`{}` is not a section", t.section),
                })?;
                section.insert(t.key.clone(), value.clone());
                let mut labels = labels.clone();
                labels.push(format!("{}={label}", t.key));
                next.push((labels, table));
            }
        }
        cells = next;
    }
    cells
        .into_iter()
        .map(|(labels, table)| {
            let label = if labels.is_empty() { "base".to_string() } else { labels.join(",") };
            let config = config::from_table(table).map_err(|e| Error::Toggle {
                toggle: label.clone(),
                message: e.to_string(),
            })?;
            Ok(Cell { label, config })
        })
        .collect()
}
