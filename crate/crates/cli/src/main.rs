use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use hashtag_lifecycle::event::{read_events_file, validate_stream, write_csv, write_jsonl, EventStream, Format};
use hashtag_lifecycle::pipeline::{run_pipeline, PipelineConfig, ReportBundle, Stage, Stages};
use hashtag_lifecycle::report::ModelTable;
use hashtag_lifecycle::synth::{gen_debate_scenario, ScenarioSpec};
use hashtag_lifecycle::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "lifecycle", version, about = "Lifecycle analytics for event-driven hashtags")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Also fit models with environmental covariates.
    #[arg(long, global = true)]
    with_env: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scenario {
    /// One debate episode with planted winners, also-rans, sidebars and decoys.
    Debate,
    /// Four debate episodes.
    Standard,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check event files, printing stream statistics.
    Validate {
        /// Event files; defaults to the config's inputs.
        inputs: Vec<PathBuf>,
    },
    /// Generate a synthetic event stream with ground truth and a matching config.
    Simulate {
        #[arg(long, value_enum, default_value = "standard")]
        scenario: Scenario,
        /// Scenario spec (TOML) instead of a built-in scenario.
        #[arg(long, value_name = "PATH", conflicts_with = "scenario")]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "jsonl")]
        format: String,
    },
    /// Find novel, popular and relevant hashtags.
    Detect,
    /// Per-minute vibrancy and environment frames.
    Features,
    /// Spline fits and curve summaries.
    Curves,
    /// Winner / also-ran classes.
    Classify,
    /// Growth models with ARMA(2,1) errors.
    FitGrowth,
    /// Cox persistence models.
    FitSurvival,
    /// Kaplan-Meier curves per class.
    Km,
    /// Re-render model tables from the JSON in the output directory.
    Report,
    /// The full pipeline, honoring the config's stage toggles.
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("this command needs --config"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.with_env {
        cfg.with_env = true;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    if let Some(out) = &cli.out {
        return Ok(out.clone());
    }
    if cli.config.is_some() {
        return Ok(load_config(cli)?.out);
    }
    Err(Error::config("no output directory: pass --out or --config"))
}

fn run_stage(cli: &Cli, stage: Option<Stage>) -> Result<i32> {
    let mut cfg = load_config(cli)?;
    if let Some(stage) = stage {
        cfg.stages = Stages::only(&stage.closure());
    }
    let bundle = run_pipeline(&cfg)?;
    summarize(&bundle, &cfg.out);
    Ok(bundle.exit_code())
}

fn summarize(bundle: &ReportBundle, out: &Path) {
    if !bundle.detected.is_empty() {
        let relevant = bundle.detected.iter().filter(|r| r.relevant).count();
        println!("detected {} novel hashtags, {relevant} relevant", bundle.detected.len());
    }
    if !bundle.series.is_empty() {
        println!("summarized {} curves", bundle.series.len());
    }
    for (_, t) in bundle.growth_tables.iter().chain(&bundle.persistence_tables) {
        println!();
        print!("{}", t.to_text());
    }
    for row in &bundle.km_summary {
        match row.median {
            Some(m) => println!("{}: median time to saturation {m} min", row.class.title()),
            None => println!("{}: median time to saturation not reached", row.class.title()),
        }
    }
    for e in &bundle.errors {
        let class = e.class.map(|c| format!(" ({})", c.title())).unwrap_or_default();
        eprintln!("error in {}{class}: {}", e.stage, e.message);
    }
    println!("outputs in {}", out.display());
}

fn validate(cli: &Cli, inputs: &[PathBuf]) -> Result<i32> {
    let files = if inputs.is_empty() {
        let cfg = load_config(cli)?;
        cfg.validate()?;
        cfg.inputs
    } else {
        inputs.to_vec()
    };
    if files.is_empty() {
        return Err(Error::config("no input files"));
    }
    let mut events = Vec::new();
    for f in &files {
        events.extend(read_events_file(f)?.into_events());
    }
    let stats = validate_stream(&EventStream::new(events))?;
    println!("{stats}");
    Ok(0)
}

fn simulate(cli: &Cli, scenario: Scenario, spec: Option<&Path>, format: &str) -> Result<i32> {
    let out = cli.out.clone().ok_or_else(|| Error::config("simulate needs --out"))?;
    let format: Format = format.parse()?;
    let seed = cli.seed.unwrap_or(0);
    let spec = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
            let mut s: ScenarioSpec = toml::from_str(&text).map_err(|e| Error::config(e.to_string()))?;
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            s
        }
        None => match scenario {
            Scenario::Debate => ScenarioSpec::debate(seed),
            Scenario::Standard => ScenarioSpec::standard(seed),
        },
    };
    let (stream, truth) = gen_debate_scenario(&spec)?;
    fs::create_dir_all(&out)?;
    let events_name = match format {
        Format::Jsonl => "events.jsonl",
        Format::Csv => "events.csv",
    };
    let w = BufWriter::new(fs::File::create(out.join(events_name))?);
    match format {
        Format::Jsonl => write_jsonl(&stream, w)?,
        Format::Csv => write_csv(&stream, w)?,
    }
    fs::write(out.join("ground_truth.json"), serde_json::to_string_pretty(&truth)? + "\n")?;
    let spec_toml = toml::to_string_pretty(&spec).map_err(|e| Error::config(e.to_string()))?;
    fs::write(out.join("scenario.toml"), spec_toml)?;
    let mut cfg = PipelineConfig::new(vec![PathBuf::from(events_name)], spec.episodes.clone(), "report");
    cfg.seed = spec.seed;
    cfg.with_env = cli.with_env;
    fs::write(out.join("pipeline.toml"), cfg.to_toml()?)?;
    info!("{} events written", stream.len());
    println!("wrote {} events to {}", stream.len(), out.join(events_name).display());
    println!("run with: lifecycle run --config {}", out.join("pipeline.toml").display());
    Ok(0)
}

fn report(cli: &Cli) -> Result<i32> {
    let dir = out_dir(cli)?.join("tables");
    let mut stems: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::data(format!("no model tables in {}", dir.display())));
    }
    for p in stems {
        let table: ModelTable = serde_json::from_str(&fs::read_to_string(&p)?)?;
        let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        table.write(&dir, &stem)?;
        print!("{}", table.to_text());
        println!();
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Validate { inputs } => validate(cli, inputs),
        Command::Simulate { scenario, spec, format } => simulate(cli, *scenario, spec.as_deref(), format),
        Command::Detect => run_stage(cli, Some(Stage::Detect)),
        Command::Features => run_stage(cli, Some(Stage::Features)),
        Command::Curves => run_stage(cli, Some(Stage::Curves)),
        Command::Classify => run_stage(cli, Some(Stage::Classify)),
        Command::FitGrowth => run_stage(cli, Some(Stage::FitGrowth)),
        Command::FitSurvival => run_stage(cli, Some(Stage::FitSurvival)),
        Command::Km => run_stage(cli, Some(Stage::Km)),
        Command::Report => report(cli),
        Command::Run => run_stage(cli, None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let _ = io::Write::flush(&mut io::stdout());
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
