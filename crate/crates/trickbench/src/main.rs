use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use trickbench::{config, csvio, runner};
use trickbench_core::env::Task;
use trickbench_core::harness::{Algorithm, ExperimentConfig};
use trickbench_core::init::{InitKind, InitScheme};
use trickbench_core::policy::{probe_initial_action_density, PolicyKind, ProbeConfig};
use trickbench_core::SeededRng;

#[derive(Parser)]
#[command(name = "trickbench", version, about = "Run and ablate deep-RL implementation details")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of one config and write curves, diagnostics and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seeds trained in parallel.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Train for 1000 episodes instead of the config's episode count.
        #[arg(long)]
        full_length: bool,
    },
    /// Run the cross product of one or more toggles. The cell built from the
    /// first value of every toggle is the effect-size baseline.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// `name=v1,v2,...`, e.g. `lrs=on,off` or `init=orthogonal,lecun`.
        #[arg(long, required = true)]
        toggle: Vec<String>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        full_length: bool,
    },
    /// Histogram of the first actions of freshly initialized policies.
    Probe {
        #[arg(long, value_parser = parse_kind)]
        kind: PolicyKind,
        #[arg(long, value_parser = parse_init)]
        init: InitKind,
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
        #[arg(long, value_parser = parse_task, default_value = "cartpole-swingup")]
        env: Task,
        #[arg(long, default_value_t = 5000)]
        n_states: usize,
        #[arg(long, default_value_t = 100)]
        n_inits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "probe.csv")]
        out: PathBuf,
    },
    /// Print the fully explicit default config of an algorithm.
    Defaults {
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Algorithm,
        #[arg(long, value_parser = parse_task, default_value = "cartpole-swingup")]
        env: Task,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: trickbench_core::Error| e.to_string())
}

fn parse_task(s: &str) -> Result<Task, String> {
    Task::ALL
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| format!("unknown env `{s}`"))
}

fn parse_init(s: &str) -> Result<InitKind, String> {
    s.parse().map_err(|e: trickbench_core::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<PolicyKind, String> {
    match s {
        "gaussian" => Ok(PolicyKind::Gaussian),
        "tanh-gaussian" => Ok(PolicyKind::TanhGaussian),
        "deterministic" => Ok(PolicyKind::Deterministic),
        _ => Err(format!("unknown policy kind `{s}`")),
    }
}

fn load_table(path: &Path, full_length: bool) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table = config::parse_table(&text).with_context(|| path.display().to_string())?;
    if full_length {
        if let Some(toml::Value::Table(e)) = table.get_mut("experiment") {
            e.insert(
                "episodes".into(),
                toml::Value::Integer(config::FULL_LENGTH_EPISODES as i64),
            );
        }
    }
    Ok(table)
}

fn prepare(mut config: ExperimentConfig) -> Result<ExperimentConfig> {
    runner::apply_seed_offset(&mut config, runner::seed_offset_from_env()?)?;
    Ok(config)
}

fn run_cells(cells: Vec<(String, String, ExperimentConfig)>, jobs: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut results = Vec::with_capacity(cells.len());
    for (label, stem, config) in cells {
        let config = prepare(config)?;
        eprintln!("{label}: {} seeds of {} on {}", config.seeds.len(), config.algorithm, config.env.name());
        let runs = runner::run_seeds(&config, jobs)?;
        for r in &runs {
            match (&r.failure, r.final_return()) {
                (Some(f), _) => eprintln!("  seed {} failed at step {}: {}", r.seed, f.step, f.message),
                (None, Some(x)) => eprintln!("  seed {} final return {x:.1}", r.seed),
                (None, None) => eprintln!("  seed {} produced no evaluation", r.seed),
            }
        }
        std::fs::write(out.join(format!("{stem}.toml")), config::to_toml(&config))?;
        results.push((label, stem, config, runs));
    }
    // CSVs are written only after every cell finished
    let baseline = runner::final_returns(&results[0].3);
    let with_baseline = results.len() > 1;
    let mut summary = Vec::with_capacity(results.len());
    for (i, (label, stem, config, runs)) in results.iter().enumerate() {
        runner::write_runs(out, stem, runs)?;
        let b = (with_baseline && i > 0).then_some(baseline.as_slice());
        summary.push(runner::summarize(label, config, runs, b));
    }
    runner::write_summary(&out.join("summary.csv"), &summary)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            jobs,
            out,
            full_length,
        } => {
            let c = config::from_table(load_table(&config, full_length)?)
                .with_context(|| config.display().to_string())?;
            run_cells(vec![("run".into(), "run".into(), c)], jobs, &out)
        }
        Command::Ablate {
            config,
            toggle,
            jobs,
            out,
            full_length,
        } => {
            let table = load_table(&config, full_length)?;
            let toggles = toggle
                .iter()
                .map(|t| runner::Toggle::parse(t, &table))
                .collect::<trickbench::Result<Vec<_>>>()?;
            let cells = runner::expand_grid(&table, &toggles)?
                .into_iter()
                .map(|c| (c.label.clone(), c.stem(), c.config))
                .collect();
            run_cells(cells, jobs, &out)
        }
        Command::Probe {
            kind,
            init,
            gain,
            env,
            n_states,
            n_inits,
            seed,
            out,
        } => {
            let scheme = InitScheme { kind: init, gain };
            let probe = ProbeConfig {
                n_states,
                n_inits,
                ..ProbeConfig::new(kind, scheme, env.obs_dim())
            };
            let mut rng = SeededRng::for_component(seed, "probe");
            let hist = probe_initial_action_density(&probe, &mut rng)?;
            csvio::write_probe(&out, &hist)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::Defaults { algorithm, env } => {
            print!("{}", config::to_toml(&ExperimentConfig::new(algorithm, env)));
            Ok(())
        }
    }
}
