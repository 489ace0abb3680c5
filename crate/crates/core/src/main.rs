use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use topotrack::config::{Preset, RunConfig};
use topotrack::error::{Error, Result};
use topotrack::field::{generate_synthetic, write_sequence, SyntheticSpec};
use topotrack::pipeline::run_pipeline;

#[derive(Parser)]
#[command(
    name = "topotrack",
    version,
    about = "Topology-driven tracking of cloud systems in scalar-field sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tracking pipeline and write all artifacts
    Run(Box<RunArgs>),
    /// Render a synthetic .grid sequence from a JSON scene specification
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat JSON config file; individual flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter preset: marine, land-morning, or land-midday
    #[arg(long)]
    preset: Option<String>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Write per-pair couplings to couplings.csv
    #[arg(long)]
    dump_couplings: bool,
    #[arg(long)]
    input_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    interval_minutes: Option<f64>,
    #[arg(long)]
    detection_threshold: Option<f64>,
    /// Pixel connectivity for object detection: 4 or 8
    #[arg(long)]
    connectivity: Option<u8>,
    #[arg(long)]
    min_area_px: Option<u64>,
    #[arg(long)]
    zone_node_cap: Option<usize>,
    #[arg(long)]
    zone_step: Option<u64>,
    #[arg(long)]
    merge_radius_km: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    q: Option<u32>,
    /// Mass search range, written LO,HI
    #[arg(long, value_parser = parse_mass_range)]
    m_range: Option<(f64, f64)>,
    #[arg(long)]
    m_step: Option<f64>,
    #[arg(long)]
    max_match_km: Option<f64>,
    #[arg(long)]
    speed_limit_m_per_s: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Range-normalize attribute and structural costs before fusing
    #[arg(long)]
    normalize_costs: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON scene specification (grid size, spacing, frames, blobs)
    #[arg(long)]
    spec: PathBuf,
    /// Directory receiving the frame_NNNN.grid files
    #[arg(long)]
    output_dir: PathBuf,
}

fn parse_mass_range(text: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got '{text}'"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad mass bound '{s}': {e}"))
    };
    Ok((parse(lo)?, parse(hi)?))
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &args.preset {
        Preset::from_name(name)?.apply(&mut cfg);
    }

    macro_rules! override_from {
        ($($flag:ident => $key:ident),* $(,)?) => {
            $(if let Some(v) = args.$flag.clone() { cfg.$key = v.into(); })*
        };
    }
    override_from!(
        input_dir => input_dir,
        output_dir => output_dir,
        interval_minutes => interval_minutes,
        detection_threshold => detection_threshold,
        connectivity => connectivity,
        min_area_px => min_area_px,
        zone_node_cap => zone_node_cap,
        zone_step => zone_step,
        merge_radius_km => merge_radius_km,
        alpha => alpha,
        q => q,
        m_step => m_step,
        r => r,
        seed => seed,
    );
    if let Some((lo, hi)) = args.m_range {
        cfg.m_range = [lo, hi];
    }
    // A screen flag replaces whatever the config or preset chose; giving
    // both flags is rejected by validation below.
    match (args.max_match_km, args.speed_limit_m_per_s) {
        (Some(km), None) => {
            cfg.max_match_km = Some(km);
            cfg.speed_limit_m_per_s = None;
        }
        (None, Some(speed)) => {
            cfg.speed_limit_m_per_s = Some(speed);
            cfg.max_match_km = None;
        }
        (Some(km), Some(speed)) => {
            cfg.max_match_km = Some(km);
            cfg.speed_limit_m_per_s = Some(speed);
        }
        (None, None) => {}
    }
    if args.dump_couplings {
        cfg.dump_couplings = true;
    }
    if args.normalize_costs {
        cfg.normalize_costs = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let output = run_pipeline(&cfg, args.jobs)?;
    println!(
        "tracked {} frames: {} trajectories, {} events",
        output.sequence.frames.len(),
        output.trajectories.trajectories.len(),
        output.trajectories.events.len()
    );
    for (kind, count) in &output.report.event_counts {
        println!("  {kind}: {count}");
    }
    println!("artifacts written to {}", cfg.output_dir.display());
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).map_err(|source| Error::Io {
        path: args.spec.clone(),
        source,
    })?;
    let spec: SyntheticSpec = serde_json::from_str(&text).map_err(|err| Error::Parse {
        path: args.spec.clone(),
        line: err.line(),
        msg: err.to_string(),
    })?;
    let sequence = generate_synthetic(&spec)?;
    write_sequence(&sequence, &args.output_dir)?;
    println!(
        "wrote {} frames ({}x{} px) to {}",
        sequence.frames.len(),
        spec.width_px,
        spec.height_px,
        args.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
