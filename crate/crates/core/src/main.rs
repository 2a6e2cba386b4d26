use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use injury_forecast::data::{assign_labels, parse_season, SeasonLog};
use injury_forecast::evaluation::{
    compare, default_forecasters, fit_final_model, run_pipeline, PipelineConfig,
};
use injury_forecast::features::{build_training_table, FeatureSpec};
use injury_forecast::generator::{generate, GeneratorConfig};
use injury_forecast::learners::DecisionTreeModel;
use injury_forecast::rules::{extract_rules, render_handbook, rule_stats, HandbookFormat};
use injury_forecast::simulator::{
    feature_trace, look_ahead_violations, savings, walk_forward, weekly_csv, Money, SimConfig,
};
use injury_forecast::table::TrainingTable;

#[derive(Parser)]
#[command(name = "injury-forecast", version, about = "Injury forecasting from GPS training workloads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SeasonFiles {
    #[arg(long)]
    sessions: PathBuf,
    #[arg(long)]
    injuries: PathBuf,
    #[arg(long)]
    players: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a season; prints a JSON summary.
    Ingest {
        #[command(flatten)]
        files: SeasonFiles,
        #[arg(long, default_value_t = 3)]
        horizon: u32,
    },
    /// Build the 55-feature training table as CSV.
    Featurize {
        #[command(flatten)]
        files: SeasonFiles,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        horizon: u32,
        /// FeatureSpec JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the evaluation protocol and fit the final tree.
    Train {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output directory for model.json and report.json.
        #[arg(long)]
        out: PathBuf,
        /// PipelineConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare all forecasters over repeated trials.
    Compare {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Writes comparison.csv and comparison.txt here; text also goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Weekly walk-forward forecasting with cost report.
    Simulate {
        #[command(flatten)]
        files: SeasonFiles,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "83")]
        salary: String,
        #[arg(long)]
        start_week: Option<usize>,
        /// Also refit every baseline and mono forecaster weekly.
        #[arg(long)]
        comparators: bool,
        /// SimConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Injury rules from a fitted tree.
    Rules {
        #[arg(long)]
        model: PathBuf,
        /// Training table for frequency and accuracy.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic season (players, sessions, injuries, ledger).
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// GeneratorConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

type Res<T> = Result<T, String>;

fn read_text(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Res<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    s.push('\n');
    write_text(path, &s)
}

/// Writes to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) -> Res<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => r.map_err(|e| format!("stdout: {e}")),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Res<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| format!("{}: {e}", p.display())),
    }
}

fn load_season(f: &SeasonFiles) -> Res<SeasonLog> {
    parse_season(&f.sessions, &f.injuries, &f.players).map_err(|e| {
        format!(
            "{e} (sessions {}, injuries {}, players {})",
            f.sessions.display(),
            f.injuries.display(),
            f.players.display()
        )
    })
}

fn load_table(path: &Path) -> Res<TrainingTable> {
    let f = fs::File::open(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    TrainingTable::read_csv(f).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Res<()> {
    match cli.command {
        Command::Ingest { files, horizon } => {
            let log = load_season(&files)?;
            let labels = assign_labels(&log, horizon);
            let summary = serde_json::json!({
                "players": log.players().len(),
                "sessions": log.session_count(),
                "injuries": log.injuries().len(),
                "first_date": log.first_date(),
                "last_date": log.last_date(),
                "labeled_sessions": labels.sessions.len(),
                "positives": labels.sessions.iter().filter(|l| l.label).count(),
                "excluded_sessions": labels.excluded,
                "orphan_injuries": labels.orphans.len(),
            });
            emit(&(serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())? + "\n"))?;
        }
        Command::Featurize {
            files,
            out,
            horizon,
            config,
        } => {
            let spec: FeatureSpec = load_config(config.as_deref())?;
            let log = load_season(&files)?;
            let labels = assign_labels(&log, horizon);
            let (table, summary) = build_training_table(&labels, log.players(), log.injuries(), &spec)
                .map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf, false).map_err(|e| e.to_string())?;
            write_text(&out, &String::from_utf8(buf).expect("csv is utf-8"))?;
            eprintln!("{}", serde_json::to_string(&summary).map_err(|e| e.to_string())?);
        }
        Command::Train {
            table,
            seed,
            out,
            config,
        } => {
            let cfg = PipelineConfig {
                seed,
                ..load_config(config.as_deref())?
            };
            let t = load_table(&table)?;
            let report = run_pipeline(&t, &cfg).map_err(|e| e.to_string())?;
            let model = fit_final_model(&t, &cfg, &report.features, &report.hyperparams)
                .map_err(|e| e.to_string())?;
            write_text(&out.join("model.json"), &(model.to_json() + "\n"))?;
            write_json(&out.join("report.json"), &report)?;
            emit(&format!(
                "injury precision {:.3} recall {:.3} f1 {:.3}; features {:?}\n",
                report.injury.precision, report.injury.recall, report.injury.f1, report.features
            ))?;
        }
        Command::Compare {
            table,
            seed,
            trials,
            out,
            config,
        } => {
            let cfg: PipelineConfig = load_config(config.as_deref())?;
            let t = load_table(&table)?;
            let c = compare(&t, &cfg, &default_forecasters(), trials, seed).map_err(|e| e.to_string())?;
            let text = c.to_text();
            if let Some(dir) = out {
                write_text(&dir.join("comparison.csv"), &c.to_csv())?;
                write_text(&dir.join("comparison.txt"), &text)?;
            }
            emit(&text)?;
        }
        Command::Simulate {
            files,
            seed,
            out,
            salary,
            start_week,
            comparators,
            config,
        } => {
            let mut cfg: SimConfig = load_config(config.as_deref())?;
            cfg.pipeline.seed = seed;
            if let Some(w) = start_week {
                cfg.start_week = w;
            }
            if comparators {
                cfg.comparators = default_forecasters().into_iter().skip(1).collect();
            }
            let salary: Money = salary.parse().map_err(|e| format!("--salary: {e}"))?;
            let log = load_season(&files)?;
            let outcomes = walk_forward(&log, &cfg).map_err(|e| e.to_string())?;
            let violations = look_ahead_violations(&outcomes);
            if !violations.is_empty() {
                return Err(format!("look-ahead detected in weeks {violations:?}"));
            }
            let report = savings(&outcomes, log.injuries(), salary);
            let trace = feature_trace(&outcomes);
            write_text(&out.join("weekly.csv"), &weekly_csv(&outcomes))?;
            write_json(&out.join("weeks.json"), &outcomes)?;
            write_json(&out.join("cost.json"), &report)?;
            write_json(&out.join("features.json"), &trace)?;
            if let Some(last) = outcomes.last() {
                emit(&format!(
                    "final cumulative F1 {:.3}; detected {}/{} injuries; savings {} of {} ({:.1}%)\n",
                    last.cumulative_f1,
                    outcomes.iter().map(|o| o.detected.len()).sum::<usize>(),
                    outcomes.iter().map(|o| o.detected.len() + o.missed.len()).sum::<usize>(),
                    report.savings,
                    report.total_cost,
                    100.0 * report.percent_decrease
                ))?;
            }
        }
        Command::Rules {
            model,
            table,
            format,
            out,
        } => {
            let m = DecisionTreeModel::from_json(&read_text(&model)?)
                .map_err(|e| format!("{}: {e}", model.display()))?;
            let mut rules = extract_rules(&m);
            if let Some(p) = table {
                rules = rule_stats(&rules, &load_table(&p)?).map_err(|e| format!("{}: {e}", p.display()))?;
            }
            let fmt = match format {
                Format::Text => HandbookFormat::Text,
                Format::Json => HandbookFormat::Json,
            };
            let doc = render_handbook(&rules, fmt);
            match out {
                Some(p) => write_text(&p, &doc)?,
                None => emit(&doc)?,
            }
        }
        Command::Generate { seed, out, config } => {
            let cfg = GeneratorConfig {
                seed,
                ..load_config(config.as_deref())?
            };
            let (log, ledger) = generate(&cfg).map_err(|e| e.to_string())?;
            log.write_csv(&out).map_err(|e| e.to_string())?;
            write_json(&out.join("ledger.json"), &ledger)?;
            eprintln!(
                "{} players, {} sessions, {} injuries -> {}",
                log.players().len(),
                log.session_count(),
                log.injuries().len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
