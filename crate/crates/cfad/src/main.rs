//! Command-line driver: experiment campaigns, identifiability reports, and
//! single-trial convergence traces.

use cfad::channel::{dump_channels_json, sample_channel, ChannelModel};
use cfad::consensus::{
    run_algorithm1, write_fronthaul_csv, write_trace_csv, Algorithm1Options,
};
use cfad::harness::{ExperimentConfig, Preset};
use cfad::rng::{substream, StreamClass};
use cfad::scenario::{Scenario, ScenarioConfig};
use cfad::solver::SolverParams;
use cfad::Result;
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "cfad", about = "Distributed activity detection simulator", version)]
struct Cli {
    /// Number of worker threads (defaults to the rayon heuristic).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment preset and write CSV results plus a JSON manifest.
    Run(RunArgs),
    /// Emit identifiability reports (orthogonality sweep, null-space probe).
    Analyze(AnalyzeArgs),
    /// Dump a single trial's convergence trace and fronthaul log.
    Trace(TraceArgs),
}

/// Scenario overrides shared by all subcommands; any field left unset falls
/// back to the TOML config (if given) and then the built-in defaults.
#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    area_side: Option<f64>,
    #[arg(long)]
    num_devices: Option<usize>,
    #[arg(long)]
    num_aps: Option<usize>,
    #[arg(long)]
    antennas_per_ap: Option<usize>,
    #[arg(long)]
    signature_len: Option<usize>,
    #[arg(long)]
    carrier_wavelength: Option<f64>,
    #[arg(long)]
    scatterers_per_ap: Option<usize>,
    #[arg(long)]
    scatter_var: Option<f64>,
    #[arg(long)]
    active_ratio: Option<f64>,
    #[arg(long)]
    noise_power_dbm: Option<f64>,
    #[arg(long)]
    tx_power_dbm: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_toml(&std::fs::read_to_string(path)?)?,
            None => ScenarioConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        apply!(
            area_side,
            num_devices,
            num_aps,
            antennas_per_ap,
            signature_len,
            carrier_wavelength,
            scatterers_per_ap,
            scatter_var,
            active_ratio,
            noise_power_dbm,
            tx_power_dbm,
            seed
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Preset: fig2a_iterations, fig2b_ap_sweep, fig3a_device_sweep,
    /// fig3b_seqlen_sweep, or custom.
    #[arg(long, default_value = "custom")]
    preset: String,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Monte-Carlo trials per experiment point.
    #[arg(long, default_value_t = cfad::harness::DEFAULT_TRIALS)]
    trials: usize,
    /// Outer-iteration cap.
    #[arg(long, default_value_t = cfad::consensus::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Threshold-grid resolution.
    #[arg(long, default_value_t = cfad::harness::DEFAULT_GAMMA_GRID)]
    gamma_points: usize,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Device pairs to sample for the orthogonality sweep.
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trial index to trace.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    /// Outer-iteration cap.
    #[arg(long, default_value_t = cfad::consensus::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Also dump the sampled per-AP channel realizations as JSON.
    #[arg(long)]
    dump_channels: bool,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let preset: Preset = args.preset.parse()?;
    let scenario = args.scenario.resolve()?;
    let exp = ExperimentConfig {
        trials: args.trials,
        max_iters: args.max_iters,
        gamma_points: args.gamma_points,
        ..ExperimentConfig::new(preset, scenario)
    };
    let out = cfad::harness::run_experiment(&exp, &args.out)?;
    println!("wrote {}", out.csv_path.display());
    println!("wrote {}", out.manifest_path.display());
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let scenario = Scenario::generate(&cfg)?;
    let model = ChannelModel::new(&scenario);
    std::fs::create_dir_all(&args.out)?;
    let report = cfad::analysis::proposition1_sweep(&scenario, &model.stats, args.pairs)?;
    let csv_path = args.out.join("prop1_pairs.csv");
    cfad::analysis::write_prop1_csv(&report, std::fs::File::create(&csv_path)?)?;
    println!("wrote {}", csv_path.display());
    let summary_path = args.out.join("prop1_summary.json");
    std::fs::write(
        &summary_path,
        cfad::analysis::prop1_summary_json(&report)? + "\n",
    )?;
    println!("wrote {}", summary_path.display());
    let null_path = args.out.join("nullspace.json");
    let null_json = match cfad::analysis::nullspace_probe(
        &model.stats,
        &scenario.signatures,
        &scenario.truth.0,
    ) {
        Ok(r) => serde_json::to_string_pretty(&r)?,
        Err(e) => serde_json::to_string_pretty(&serde_json::json!({
            "skipped": e.to_string(),
        }))?,
    };
    std::fs::write(&null_path, null_json + "\n")?;
    println!("wrote {}", null_path.display());
    Ok(())
}

fn cmd_trace(args: &TraceArgs) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let scenario = Scenario::generate_trial(&cfg, args.trial)?;
    let model = ChannelModel::new(&scenario);
    let mut ch = substream(cfg.seed, StreamClass::Channels, args.trial);
    let mut no = substream(cfg.seed, StreamClass::Noise, args.trial);
    let signals = model.synthesize_received(&scenario, &scenario.truth, &mut ch, &mut no);
    let out = run_algorithm1(
        &scenario,
        &signals,
        &model,
        &SolverParams::default(),
        &Algorithm1Options {
            max_iters: args.max_iters,
            record_trace: true,
            ..Default::default()
        },
    )?;
    std::fs::create_dir_all(&args.out)?;
    let scenario_path = args.out.join("scenario.json");
    std::fs::write(&scenario_path, scenario.dump_json()?)?;
    println!("wrote {}", scenario_path.display());
    let trace_path = args.out.join("trace.csv");
    write_trace_csv(
        out.trace.as_deref().unwrap_or(&[]),
        std::fs::File::create(&trace_path)?,
    )?;
    println!("wrote {}", trace_path.display());
    let fh_path = args.out.join("fronthaul.csv");
    write_fronthaul_csv(&out.fronthaul, std::fs::File::create(&fh_path)?)?;
    println!("wrote {}", fh_path.display());
    if args.dump_channels {
        // an independent draw from the channel substream, for inspection
        let mut rng = substream(cfg.seed, StreamClass::Channels, args.trial);
        let channels: Vec<_> = model.stats[0]
            .iter()
            .map(|st| sample_channel(st, &mut rng))
            .collect();
        let ch_path = args.out.join("channels.json");
        std::fs::write(&ch_path, dump_channels_json(&channels)?)?;
        println!("wrote {}", ch_path.display());
    }
    let result_path = args.out.join("result.json");
    std::fs::write(
        &result_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "trial": args.trial,
            "iterations_used": out.iterations_used,
            "a": out.a,
            "truth": scenario.truth.0,
            "delta_history": out.delta_history,
        }))? + "\n",
    )?;
    println!("wrote {}", result_path.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            fail(&format!("failed to configure {workers} workers: {e}"));
        }
    }
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Trace(args) => cmd_trace(args),
    };
    if let Err(e) = result {
        fail(&e.to_string());
    }
}

fn fail(message: &str) -> ! {
    let record = serde_json::json!({ "error": message });
    let mut stderr = std::io::stderr();
    writeln!(stderr, "{record}").ok();
    std::process::exit(1);
}
