use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amp2_core::data::{generate_event_dataset, generate_point_dataset, io, EventDatasetConfig, PointDatasetConfig};
use amp2_core::energy::estimate_energy;
use amp2_core::stats::{monte_carlo_x, InitStrategy, StatsRow};
use amp2_core::{NeuronConfig, RandomSource};
use amp2_bench::{emit_plots, run_ablation_grid, run_experiment, ExperimentConfig, GridSpec, Result, RunRecord};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amp2", version, about = "Train and analyse AMP2 spiking networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Zero,
    Random,
    Amp2,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Points,
    Events,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run the AWP × RMP × depth grid, e.g. --grid "depth=3,4,6".
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "depth=3")]
        grid: String,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Monte Carlo statistics of the normalized membrane input.
    Stats {
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Energy estimate for the given extents, as JSON.
    Energy {
        #[arg(long)]
        t: usize,
        #[arg(long)]
        b: usize,
        #[arg(long)]
        c: usize,
        #[arg(long)]
        n: usize,
    },
    /// Charts from every record_*.json below a directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as binary files plus a CSV export.
    GenerateData {
        #[arg(long, value_enum, default_value = "points")]
        kind: DataKind,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&fs::read_to_string(path)?)
}

fn write_records(dir: &Path, records: &[RunRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in records {
        r.write_metrics_csv(fs::File::create(dir.join(format!("metrics_seed{}.csv", r.seed)))?)?;
        fs::write(dir.join(format!("record_seed{}.json", r.seed)), serde_json::to_string_pretty(r)?)?;
    }
    Ok(())
}

fn collect_records(dir: &Path, out: &mut Vec<RunRecord>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_records(&path, out)?;
        } else if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("record_") && n.ends_with(".json"))
        {
            out.push(serde_json::from_str(&fs::read_to_string(&path)?)?);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = load_config(&config)?;
            let res = run_experiment(&cfg)?;
            write_records(&out, &res.records)?;
            fs::write(out.join("config.json"), cfg.to_json())?;
            for r in &res.records {
                println!("seed {}: test accuracy {:.2}% ({:.1}s)", r.seed, r.final_test_accuracy, r.wall_clock_seconds);
            }
            println!("mean test accuracy {:.2}%  config {}", res.mean_test_accuracy(), res.config_hash);
        }
        Command::Ablate {
            config,
            grid,
            out,
            workers,
        } => {
            let cfg = load_config(&config)?;
            let grid: GridSpec = grid.parse()?;
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let table = run_ablation_grid(&cfg, &grid, workers)?;
            fs::create_dir_all(&out)?;
            for (row, recs) in table.rows.iter().zip(&table.records) {
                let dir = out.join(format!("d{}_awp{}_rmp{}", row.depth, row.awp as u8, row.rmp as u8));
                write_records(&dir, recs)?;
            }
            table.write_csv(fs::File::create(out.join("ablation.csv"))?)?;
            fs::write(out.join("ablation.md"), table.to_markdown())?;
            print!("{}", table.to_markdown());
        }
        Command::Stats {
            strategy,
            depth,
            samples,
            seed,
        } => {
            let strategy = match strategy {
                Strategy::Zero => InitStrategy::Zero,
                Strategy::Random => InitStrategy::Random,
                Strategy::Amp2 => InitStrategy::Amp2Fusion,
            };
            let cfg = NeuronConfig::default();
            let est = monte_carlo_x(strategy, &cfg, depth, samples, &mut RandomSource::seeded(seed))?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.serialize(StatsRow::new(&est, &cfg))?;
            w.flush()?;
        }
        Command::Energy { t, b, c, n } => {
            println!("{}", serde_json::to_string_pretty(&estimate_energy(t, b, c, n)?)?);
        }
        Command::Plot { input, out } => {
            let mut records = Vec::new();
            collect_records(&input, &mut records)?;
            for f in emit_plots(&records, &out.unwrap_or(input))? {
                println!("{}", f.display());
            }
        }
        Command::GenerateData {
            kind,
            out,
            classes,
            per_class,
            seed,
        } => {
            fs::create_dir_all(&out)?;
            match kind {
                DataKind::Points => {
                    let cfg = PointDatasetConfig {
                        classes,
                        per_class,
                        seed,
                        ..Default::default()
                    };
                    let ds = generate_point_dataset(&cfg)?;
                    for (split, samples) in [("train", &ds.train), ("test", &ds.test)] {
                        io::save_points(&out.join(format!("points_{split}.bin")), samples)?;
                        io::write_points_csv(&mut fs::File::create(out.join(format!("points_{split}.csv")))?, samples)?;
                    }
                }
                DataKind::Events => {
                    let cfg = EventDatasetConfig {
                        classes,
                        per_class,
                        seed,
                        ..Default::default()
                    };
                    let ds = generate_event_dataset(&cfg)?;
                    for (split, samples) in [("train", &ds.train), ("test", &ds.test)] {
                        io::save_events(&out.join(format!("events_{split}.bin")), samples, cfg.width, cfg.height)?;
                        io::write_events_csv(&mut fs::File::create(out.join(format!("events_{split}.csv")))?, samples)?;
                    }
                }
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
