//! Command-line pipeline for the mufat simulator: generate the training
//! grid, label it with the simulation oracle, train the strategy selector,
//! predict, simulate single runs, run the benchmark table, and calibrate
//! the timing model.
//!
//! Exit codes: 0 success, 2 configuration error, 3 inapplicable strategy,
//! 4 consistency violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mufat::policy::{
    default_strategy_grid, evaluate_cost, label_by_oracle, labeled_to_csv, labels_from_csv,
    predict_strategy, preset_grid, train, Activation, Mlp, OracleContext, TrainConfig,
};
use mufat::sim::config::{parse_kv, run_config_from_str, timing_to_cfg, workload_from_map};
use mufat::sim::{benchmark_suite, calibrate, CalibrationTargets};
use mufat::strategy::BaselinePreset;
use mufat::workload::{generate_training_grid, grid_from_csv, grid_to_csv, HardwareContext};
use mufat::{run_simulation, Error, FlashTimingParams, StrategyTuple};

#[derive(Parser)]
#[command(name = "mufat", version, about = "FAT-on-flash file-management overhead simulator")]
struct Cli {
    /// Seed for anything randomized (event jitter, training shuffles).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the full training grid (4352 samples) as CSV.
    GenTrainset {
        #[arg(long)]
        out: PathBuf,
    },
    /// Label a grid CSV by exhaustive simulation over a strategy grid.
    Label {
        #[arg(long)]
        grid: PathBuf,
        /// `expanded`, `presets`, or a comma-separated list of preset names.
        #[arg(long, default_value = "expanded")]
        strategies: String,
        /// Bytes simulated per (sample, strategy), e.g. 64MB.
        #[arg(long, default_value = "64MB")]
        budget: String,
        /// Timing config; defaults to the calibrated medium.
        #[arg(long)]
        timing: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the strategy selector on a labeled CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Optional key=value hyperparameter file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss/accuracy CSV.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Predict a strategy tuple for each stream of a workload.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Workload config (stream.N.* keys).
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Run one simulation from a run config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the six-row benchmark table under the four baselines and a model.
    Benchmark {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write every cell's full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// Solve timing parameters from target overhead ratios.
    Calibrate {
        #[arg(long, default_value_t = 102.2)]
        mu_original: f64,
        /// Pre-allocation target; pass `none` to skip the free-space solve.
        #[arg(long, default_value = "0.32")]
        mu_acpa: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_size(s: &str) -> Result<u64, Error> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: u64 = num
        .parse()
        .map_err(|_| Error::Config(format!("bad size `{s}`")))?;
    let mult = match unit.trim() {
        "" | "B" => 1,
        "kB" | "KB" => 1_000,
        "MB" => 1_000_000,
        "GB" => 1_000_000_000,
        "KiB" => 1 << 10,
        "MiB" => 1 << 20,
        "GiB" => 1 << 30,
        other => return Err(Error::Config(format!("unknown size unit `{other}`"))),
    };
    Ok(n * mult)
}

fn load_timing(path: &Option<PathBuf>) -> Result<FlashTimingParams, Error> {
    match path {
        None => Ok(mufat::sim::calibrate::calibrated_default().timing),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let map = parse_kv(&text)?;
            mufat::sim::config::timing_from_map(&map, FlashTimingParams::default())
        }
    }
}

fn parse_strategy_grid(s: &str) -> Result<Vec<StrategyTuple>, Error> {
    match s {
        "expanded" => Ok(default_strategy_grid()),
        "presets" => Ok(preset_grid()),
        list => list
            .split(',')
            .map(|name| {
                BaselinePreset::from_name(name.trim())
                    .map(mufat::preset)
                    .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))
            })
            .collect(),
    }
}

fn train_config(path: &Option<PathBuf>, seed: u64) -> Result<TrainConfig, Error> {
    let mut cfg = TrainConfig { seed, ..TrainConfig::default() };
    if let Some(p) = path {
        let map = parse_kv(&std::fs::read_to_string(p)?)?;
        let f = |key: &str, d: f64| -> Result<f64, Error> {
            map.get(key)
                .map(|v| v.parse().map_err(|_| Error::Config(format!("bad `{key}`"))))
                .unwrap_or(Ok(d))
        };
        let u = |key: &str, d: usize| -> Result<usize, Error> {
            map.get(key)
                .map(|v| v.parse().map_err(|_| Error::Config(format!("bad `{key}`"))))
                .unwrap_or(Ok(d))
        };
        cfg.learning_rate = f("learning_rate", cfg.learning_rate)?;
        cfg.layerwise_epochs = u("layerwise_epochs", cfg.layerwise_epochs)?;
        cfg.finetune_epochs = u("finetune_epochs", cfg.finetune_epochs)?;
        cfg.batch_size = u("batch_size", cfg.batch_size)?;
        cfg.init_scale = f("init_scale", cfg.init_scale)?;
        cfg.holdout_frac = f("holdout_frac", cfg.holdout_frac)?;
        if let Some(v) = map.get("seed") {
            cfg.seed = v.parse().map_err(|_| Error::Config("bad `seed`".into()))?;
        }
    }
    Ok(cfg)
}

fn hidden_dims(path: &Option<PathBuf>) -> Result<Vec<usize>, Error> {
    if let Some(p) = path {
        let map = parse_kv(&std::fs::read_to_string(p)?)?;
        if let Some(v) = map.get("hidden_dims") {
            return v
                .split(',')
                .map(|d| d.trim().parse().map_err(|_| Error::Config("bad `hidden_dims`".into())))
                .collect();
        }
    }
    Ok(vec![32, 32])
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenTrainset { out } => {
            let hw = HardwareContext::default();
            let grid = generate_training_grid(&hw);
            std::fs::write(&out, grid_to_csv(&grid))?;
            if cli.verbose {
                eprintln!("wrote {} samples to {}", grid.len(), out.display());
            }
        }
        Command::Label { grid, strategies, budget, timing, out } => {
            let timing = load_timing(&timing)?;
            let hw = HardwareContext { timing, ..Default::default() };
            let mut samples = grid_from_csv(&std::fs::read_to_string(&grid)?, &hw)?;
            let tuples = parse_strategy_grid(&strategies)?;
            let budget = parse_size(&budget)?;
            let ctx = OracleContext { timing, charge_read_jumps: true, seed: cli.seed };
            let total = samples.len();
            for (i, s) in samples.iter_mut().enumerate() {
                label_by_oracle(s, &tuples, budget, &ctx)?;
                if cli.verbose && (i + 1) % 500 == 0 {
                    eprintln!("labeled {}/{total}", i + 1);
                }
            }
            std::fs::write(&out, labeled_to_csv(&samples))?;
        }
        Command::Train { data, config, out, report, timing } => {
            let timing = load_timing(&timing)?;
            let hw = HardwareContext { timing, ..Default::default() };
            let samples = labels_from_csv(&std::fs::read_to_string(&data)?, &hw)?;
            let cfg = train_config(&config, cli.seed)?;
            let dims = hidden_dims(&config)?;
            let mut model = Mlp::new(&dims, Activation::Sigmoid, cfg.init_scale, cfg.seed);
            let train_report = train(&mut model, &samples, &cfg)?;
            if train_report.degenerate_labels {
                eprintln!(
                    "warning: every head saw a single label class; the model \
                     degenerates to a constant strategy"
                );
            }
            std::fs::write(&out, model.to_json())?;
            if let Some(r) = report {
                std::fs::write(&r, train_report.to_csv())?;
            }
            if cli.verbose {
                eprintln!(
                    "trained on {} samples ({} held out), final loss {:.6}",
                    samples.len(),
                    train_report.holdout.len(),
                    train_report.finetune_end_loss
                );
                let held: Vec<_> =
                    train_report.holdout.iter().map(|&i| samples[i].clone()).collect();
                let ctx = OracleContext { timing, charge_read_jumps: true, seed: cli.seed };
                let records = evaluate_cost(&model, &held, 64_000_000, &ctx)?;
                let within = records
                    .iter()
                    .filter(|r| r.mu_achieved <= 1.25 * r.mu_best)
                    .count();
                eprintln!(
                    "held-out: {}/{} within 1.25x of the oracle ratio",
                    within,
                    records.len()
                );
            }
        }
        Command::Predict { model, workload, timing } => {
            let timing = load_timing(&timing)?;
            let model = Mlp::from_json(&std::fs::read_to_string(&model)?)?;
            let map = parse_kv(&std::fs::read_to_string(&workload)?)?;
            let w = workload_from_map(&map)?;
            let hw = HardwareContext {
                timing,
                cache_bytes: w.cache_bytes_per_stream,
                compute_score: 0.5,
            };
            for (i, s) in w.streams.iter().enumerate() {
                let x = mufat::preprocess(s, &hw)?;
                let tuple = predict_strategy(&model, &x, &w)?;
                println!("stream {i} ({}): {tuple}", s.data_type.name());
            }
        }
        Command::Simulate { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let mut cfg = run_config_from_str(&text, base)?;
            if cfg.seed == 0 {
                cfg.seed = cli.seed;
            }
            cfg.violation_dump = Some(
                out.clone()
                    .unwrap_or_else(|| PathBuf::from("report.json"))
                    .with_extension("violation.json"),
            );
            let report = run_simulation(&cfg)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            match out {
                Some(p) => std::fs::write(&p, &json)?,
                None => println!("{json}"),
            }
            if cli.verbose {
                eprintln!("mu = {:.6}, effective {:.3} MB/s", report.mu, report.effective_mb_s);
            }
        }
        Command::Benchmark { model, out, json, timing } => {
            let timing = load_timing(&timing)?;
            let model = Mlp::from_json(&std::fs::read_to_string(&model)?)?;
            let table = benchmark_suite(timing, &model, cli.seed)?;
            std::fs::write(&out, table.to_csv())?;
            if let Some(p) = json {
                std::fs::write(&p, table.to_json())?;
            }
            if cli.verbose {
                eprint!("{}", table.to_csv());
            }
        }
        Command::Calibrate { mu_original, mu_acpa, out } => {
            let mu_acpa = match mu_acpa.as_str() {
                "none" => None,
                v => Some(
                    v.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad --mu-acpa `{v}`")))?,
                ),
            };
            let targets = CalibrationTargets { mu_original, mu_acpa, ..Default::default() };
            let c = calibrate(&targets)?;
            for w in &c.warnings {
                eprintln!("warning: {w}");
            }
            let mut text = timing_to_cfg(&c.timing);
            if let Some(m) = c.measured_mu_acpa {
                text.push_str(&format!("# measured pre-allocation ratio: {m:.6}\n"));
            }
            std::fs::write(&out, text)?;
            if cli.verbose {
                eprintln!(
                    "t_jump = {} ns ({:.1}x a sector write), capacity = {} B",
                    c.timing.t_jump_ns,
                    c.timing.jump_to_sector_write_ratio(),
                    c.timing.volume_capacity
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
