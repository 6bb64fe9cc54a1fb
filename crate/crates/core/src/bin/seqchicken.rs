use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sequential_chicken::fit::{
    curve_table, filter_records, fit_summary, fit_ucrash, FilterOptions, DEFAULT_GRID,
};
use sequential_chicken::game::{GameParams, GameState, Selection, Solver};
use sequential_chicken::output::{model_curves_csv, policy_report};
use sequential_chicken::records::{read_records, records_to_string};
use sequential_chicken::service::{http, SessionStore};
use sequential_chicken::sim::{monte_carlo_stats, run_self_play, PedestrianPolicy, SessionConfig};

type BoxError = Box<dyn std::error::Error>;

/// Sequential chicken between a vehicle and a pedestrian: solve, simulate, fit, serve.
#[derive(Parser)]
#[command(name = "seqchicken", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the game value and equilibrium policy table.
    Solve {
        /// Crash cost in seconds; a comma-separated list prints one report each.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        ucrash: Vec<f64>,
        /// Cost per turn in seconds.
        #[arg(long, default_value_t = 1.0)]
        turn_cost: f64,
        /// Vehicle distance in boxes.
        #[arg(long, default_value_t = 12)]
        y: i32,
        /// Pedestrian distance in boxes.
        #[arg(long, default_value_t = 12)]
        x: i32,
        #[arg(long, value_enum, default_value_t = SelectionArg::PreferFast)]
        selection: SelectionArg,
    },
    /// Write model yield and no-yield curves as CSV.
    Curve {
        /// Crash costs to tabulate.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "2,3,10,100,1000,10000,1000000"
        )]
        ucrash: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        turn_cost: f64,
        /// Largest symmetric distance in boxes.
        #[arg(long, default_value_t = 20)]
        kmax: i32,
        /// Session config (TOML) supplying the pedestrian box size.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded simulation of discrete episodes or continuous crossings.
    Simulate {
        #[arg(long, value_enum, default_value_t = Mode::Episodes)]
        mode: Mode,
        /// Crash cost; in crossings mode overrides the config.
        #[arg(long)]
        ucrash: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        turn_cost: f64,
        /// Episode start, vehicle boxes.
        #[arg(long, default_value_t = 10)]
        y: i32,
        /// Episode start, pedestrian boxes.
        #[arg(long, default_value_t = 10)]
        x: i32,
        /// Episodes, or sessions in crossings mode.
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scripted pedestrian in crossings mode.
        #[arg(long, value_enum, default_value_t = PolicyArg::Optimal)]
        policy: PolicyArg,
        /// Random-action probability for the noisy-optimal pedestrian.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Session config (TOML) for crossings mode; defaults: C=3, 20 crossings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Crossing log output (crossings mode); the summary goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the crash cost to a crossing log.
    Fit {
        /// Crossing log, one JSON record per line.
        #[arg(long = "in")]
        input: PathBuf,
        /// Candidate crash costs.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "2,3,10,100,1000,10000,1000000"
        )]
        ucrash: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        turn_cost: f64,
        /// Session config (TOML) supplying the geometry used to record the log.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Curve CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep steps whose pedestrian action was filled in after a timeout.
        #[arg(long)]
        include_auto: bool,
        /// Steps before the pedestrian has moved this far are dropped, m.
        #[arg(long, default_value_t = 2.0)]
        min_travel: f64,
    },
    /// Serve the live-session API over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory for session logs; in memory when absent.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    PreferFast,
    Strict,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Episodes,
    Crossings,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    AlwaysFast,
    SlowWhenInteresting,
    Optimal,
    NoisyOptimal,
}

fn load_config(path: Option<&Path>) -> Result<SessionConfig, BoxError> {
    let Some(path) = path else {
        return Ok(SessionConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let config: SessionConfig =
        toml::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e.message()))?;
    config.validate()?;
    Ok(config)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), BoxError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<(), BoxError> {
    match cli.command {
        Command::Solve {
            ucrash,
            turn_cost,
            y,
            x,
            selection,
        } => {
            let selection = match selection {
                SelectionArg::PreferFast => Selection::PreferFast,
                SelectionArg::Strict => Selection::Strict,
            };
            let mut text = String::new();
            for (i, c) in ucrash.into_iter().enumerate() {
                let params = GameParams::new(c)?
                    .with_turn_cost(turn_cost)
                    .with_bounds(y.max(1), x.max(1))
                    .with_selection(selection);
                let solver = Solver::new(params)?;
                if i > 0 {
                    text.push('\n');
                }
                text += &policy_report(&solver, y, x)?;
            }
            emit(None, &text)
        }
        Command::Curve {
            ucrash,
            turn_cost,
            kmax,
            config,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let params = GameParams::default()
                .with_turn_cost(turn_cost)
                .with_bounds(kmax.max(2), kmax.max(2));
            let csv = model_curves_csv(&ucrash, &params, kmax, config.geometry.ped_box)?;
            emit(out.as_deref(), &csv)
        }
        Command::Simulate {
            mode,
            ucrash,
            turn_cost,
            y,
            x,
            n,
            seed,
            policy,
            epsilon,
            config,
            out,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match mode {
                Mode::Episodes => {
                    let params = GameParams::new(ucrash.unwrap_or(3.0))?
                        .with_turn_cost(turn_cost)
                        .with_bounds(y.max(1), x.max(1));
                    let solver = Solver::new(params)?;
                    let value = solver.value(GameState::new(y, x))?;
                    let stats = monte_carlo_stats(&solver, GameState::new(y, x), n, &mut rng)?;
                    #[derive(serde::Serialize)]
                    struct Report<'a> {
                        seed: u64,
                        start: GameState,
                        game_value: sequential_chicken::game::UtilityPair,
                        stats: &'a sequential_chicken::sim::OutcomeStats,
                    }
                    let report = Report {
                        seed,
                        start: GameState::new(y, x),
                        game_value: value,
                        stats: &stats,
                    };
                    emit(out.as_deref(), &to_json(&report))
                }
                Mode::Crossings => {
                    let mut config = load_config(config.as_deref())?;
                    if let Some(c) = ucrash {
                        config.crash_cost = c;
                    }
                    config.turn_cost = turn_cost;
                    config.validate()?;
                    let mut ped = match policy {
                        PolicyArg::AlwaysFast => PedestrianPolicy::AlwaysFast,
                        PolicyArg::SlowWhenInteresting => PedestrianPolicy::SlowWhenInteresting,
                        PolicyArg::Optimal => PedestrianPolicy::Optimal,
                        PolicyArg::NoisyOptimal => PedestrianPolicy::NoisyOptimal { epsilon },
                    };
                    let mut records = Vec::new();
                    let mut summaries = Vec::new();
                    for i in 0..n {
                        let id = format!("sim{:04}", i + 1);
                        let run = run_self_play(&config, &id, &mut ped, &mut rng)?;
                        summaries.push(serde_json::json!({
                            "session_id": id,
                            "pedestrian_wins": run.pedestrian_wins(),
                            "interesting_fraction": run.interesting_fraction(),
                            "crossings": run.crossings,
                        }));
                        records.extend(run.records);
                    }
                    let log = records_to_string(&records);
                    match out {
                        Some(path) => {
                            emit(Some(&path), &log)?;
                            emit(None, &to_json(&summaries))
                        }
                        None => emit(None, &log),
                    }
                }
            }
        }
        Command::Fit {
            input,
            ucrash,
            turn_cost,
            config,
            out,
            include_auto,
            min_travel,
        } => {
            let config = load_config(config.as_deref())?;
            let file = File::open(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let (records, issues) = read_records(BufReader::new(file))?;
            for issue in &issues {
                log::warn!("{}: {issue:?}", input.display());
            }
            let options = FilterOptions {
                min_travel_m: min_travel,
                exclude_auto: !include_auto,
            };
            let mut filtered = filter_records(&records, &config.geometry, &options);
            filtered.funnel.malformed = issues.len();
            let params = config.game_params()?.with_turn_cost(turn_cost);
            let grid = if ucrash.is_empty() {
                DEFAULT_GRID.to_vec()
            } else {
                ucrash
            };
            let fit = fit_ucrash(&filtered.points, &grid, &params)?;
            if let Some(path) = out.as_deref() {
                emit(Some(path), &curve_table(&fit, config.geometry.ped_box))?;
            }
            emit(None, &to_json(&fit_summary(&fit, &filtered)))
        }
        Command::Serve {
            port,
            host,
            store,
            workers,
        } => {
            let store = match store {
                Some(dir) => SessionStore::open(dir)?,
                None => SessionStore::in_memory(),
            };
            let handle = http::serve(Arc::new(store), &format!("{host}:{port}"), workers)?;
            eprintln!("listening on http://{}", handle.addr());
            handle.join();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "seqchicken: {}",
                e.to_string().lines().next().unwrap_or("error")
            );
            ExitCode::FAILURE
        }
    }
}
