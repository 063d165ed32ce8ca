use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use photosim_core::buffering::solve_schedule;
use photosim_core::config::SimConfig;
use photosim_core::mesh::{
    calibrate_constants, estimate_output_bits, output_error_study, program_tile, random_orthogonal, NoiseSpec,
    ProgrammingMode,
};
use photosim_core::report::{
    buffer_schedule, emit_comparison, emit_report, emit_schedule, emit_sweep, run_simulation, run_sweep,
    BatchMode, BatchSelection, Format, Parallelism, RunFlags, SweepAxes,
};
use photosim_core::timing::{CoreType, MemoryTrace, ParallelMode};
use photosim_core::workload::Workload;
use photosim_core::{Error, Result};

#[derive(Parser)]
#[command(name = "photosim", version, about = "Electro-photonic accelerator simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workload description file.
    #[arg(long, global = true)]
    workload: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Table)]
    format: OutFormat,
    /// Seed for Monte-Carlo and random-matrix commands.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    #[arg(long, global = true)]
    no_pipelining: bool,
    /// Half-capacity double buffering instead of the transfer schedule.
    #[arg(long, global = true)]
    double_buffering: bool,
    /// Memory-trace bins.
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Fixed batch size.
    #[arg(long, global = true)]
    batch: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Table,
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Table => Format::Table,
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload on one configuration.
    Simulate,
    /// Cross-product sweep over array size, clock, core, batch and parallelism.
    Sweep(SweepArgs),
    /// Photo-core and systolic array side by side.
    Compare,
    /// Activation-SRAM trace and next-batch transfer schedule.
    BufferSchedule(ScheduleArgs),
    /// Export the phase program of a matrix.
    Decompose(DecomposeArgs),
    /// Monte-Carlo output precision of a noisy mesh.
    Precision(PrecisionArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    f_c: Option<Vec<f64>>,
    /// photo_core, systolic_array
    #[arg(long, value_delimiter = ',')]
    core: Option<Vec<String>>,
    /// Batch sizes, or `auto` for the batch search.
    #[arg(long = "batches", value_delimiter = ',')]
    batches: Option<Vec<String>>,
    /// `mode:n` items, e.g. data:1,wdm:4,tile:16
    #[arg(long, value_delimiter = ',')]
    parallelism: Option<Vec<String>>,
}

#[derive(Args)]
struct ScheduleArgs {
    /// JSON `{dt, usage}` trace instead of a workload.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Next-batch input bytes (trace mode).
    #[arg(long)]
    x_input: Option<f64>,
    /// Capacity in bytes (trace mode); defaults to the config's act_sram_bytes.
    #[arg(long)]
    x_max: Option<f64>,
    /// Bytes per second (trace mode); defaults to the config's pcie bandwidth.
    #[arg(long)]
    bw: Option<f64>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// JSON array of rows.
    #[arg(long, conflicts_with = "random")]
    matrix: Option<PathBuf>,
    /// Random orthogonal matrix of this size.
    #[arg(long)]
    random: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Naive,
    ErrorCorrected,
}

#[derive(Args)]
struct PrecisionArgs {
    #[arg(long, value_delimiter = ',', default_value = "32,64")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Defaults to the config's eps_phi.
    #[arg(long)]
    eps_phi: Option<f64>,
    /// Defaults to the config's eps_dc.
    #[arg(long)]
    eps_dc: Option<f64>,
    /// Defaults to the config's b_in.
    #[arg(long)]
    b_in: Option<u32>,
    /// Defaults to the config's b_w.
    #[arg(long)]
    b_w: Option<u32>,
    #[arg(long, value_enum, default_value_t = Mode::ErrorCorrected)]
    mode: Mode,
    /// Fit the error-model constants instead and print them as TOML.
    #[arg(long)]
    calibrate: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(mut text) => {
            if !text.ends_with('\n') {
                text.push('\n');
            }
            // A closed pipe (e.g. `| head`) is not an error.
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config(g: &Global) -> Result<SimConfig> {
    let mut cfg = match &g.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    RunFlags {
        no_pipelining: g.no_pipelining,
        double_buffering: g.double_buffering,
        bins: g.bins,
        batch: g.batch,
    }
    .apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn workload(g: &Global) -> Result<Workload> {
    match &g.workload {
        Some(p) => Workload::load(p),
        None => Err(Error::Config("--workload is required for this command".into())),
    }
}

fn run(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    let format = Format::from(g.format);
    match &cli.command {
        Command::Simulate => emit_report(&run_simulation(&workload(g)?, &config(g)?)?, format),
        Command::Sweep(args) => {
            let cfg = config(g)?;
            let axes = sweep_axes(args, &cfg)?;
            emit_sweep(&run_sweep(&workload(g)?, &cfg, &axes)?, format)
        }
        Command::Compare => {
            let w = workload(g)?;
            let mut cfg = config(g)?;
            cfg.accelerator.core = CoreType::PhotoCore;
            let photo = run_simulation(&w, &cfg)?;
            cfg.accelerator.core = CoreType::SystolicArray;
            let systolic = run_simulation(&w, &cfg)?;
            emit_comparison(&photo, &systolic, format)
        }
        Command::BufferSchedule(args) => schedule(g, args, format),
        Command::Decompose(args) => decompose(g, args, format),
        Command::Precision(args) => precision(g, args, format),
    }
}

fn parse_core(s: &str) -> Result<CoreType> {
    match s {
        "photo_core" => Ok(CoreType::PhotoCore),
        "systolic_array" => Ok(CoreType::SystolicArray),
        _ => Err(Error::Config(format!("unknown core `{s}` (photo_core | systolic_array)"))),
    }
}

fn parse_parallelism(s: &str) -> Result<Parallelism> {
    let bad = || Error::Config(format!("bad parallelism `{s}`, expected mode:n"));
    let (mode, n) = s.split_once(':').ok_or_else(bad)?;
    let mode = match mode {
        "data" => ParallelMode::Data,
        "tile" => ParallelMode::Tile,
        "wdm" => ParallelMode::Wdm,
        _ => return Err(bad()),
    };
    Ok(Parallelism {
        mode,
        n: n.parse().map_err(|_| bad())?,
    })
}

fn sweep_axes(args: &SweepArgs, cfg: &SimConfig) -> Result<SweepAxes> {
    let mut axes = SweepAxes::from_config(cfg);
    if let Some(m) = &args.m {
        axes.m = m.clone();
    }
    if let Some(f) = &args.f_c {
        axes.f_c = f.clone();
    }
    if let Some(c) = &args.core {
        axes.core = c.iter().map(|s| parse_core(s)).collect::<Result<_>>()?;
    }
    if let Some(b) = &args.batches {
        axes.batch = b
            .iter()
            .map(|s| match s.as_str() {
                "auto" => Ok(None),
                n => n
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Config(format!("bad batch `{n}`"))),
            })
            .collect::<Result<_>>()?;
    }
    if let Some(p) = &args.parallelism {
        axes.parallelism = p.iter().map(|s| parse_parallelism(s)).collect::<Result<_>>()?;
    }
    Ok(axes)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn schedule(g: &Global, args: &ScheduleArgs, format: Format) -> Result<String> {
    let cfg = config(g)?;
    let Some(path) = &args.trace else {
        let (selection, trace, schedule) = buffer_schedule(&workload(g)?, &cfg)?;
        return emit_schedule(&selection, &trace, &schedule, format);
    };
    let trace: MemoryTrace = serde_json::from_str(&read(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let x_input = args
        .x_input
        .ok_or_else(|| Error::Config("--x-input is required with --trace".into()))?;
    let x_max = args.x_max.unwrap_or(cfg.accelerator.act_sram_bytes as f64);
    let bw = args.bw.unwrap_or(cfg.accelerator.pcie_bytes_per_sec);
    let schedule = solve_schedule(&trace, x_input, x_max, bw)?;
    let selection = BatchSelection {
        mode: BatchMode::Fixed,
        batch: g.batch.unwrap_or(1),
        peak_act_bytes: trace.peak(),
        act_sram_bytes: x_max,
        next_input_bytes: x_input,
        schedule_objective: Some(schedule.objective),
    };
    emit_schedule(&selection, &trace, &schedule, format)
}

fn decompose(g: &Global, args: &DecomposeArgs, format: Format) -> Result<String> {
    let tile = match (&args.matrix, args.random) {
        (Some(path), _) => {
            let rows: Vec<Vec<f64>> = serde_json::from_str(&read(path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config(format!("{}: matrix must be square and nonempty", path.display())));
            }
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        }
        (None, Some(m)) if m >= 1 => random_orthogonal(m, &mut NoiseSpec::ideal(g.seed).rng(0)),
        _ => return Err(Error::Config("pass --matrix FILE or --random M (M >= 1)".into())),
    };
    let program = program_tile(&tile)?;
    let rebuilt = program.realize_ideal().matrix() * program.scale;
    let err = (rebuilt - &tile).abs().max();
    match format {
        Format::Json => Ok(program.to_json()),
        Format::Csv => {
            let mut s = String::from("mesh,layer,pos,phi\n");
            for (name, phases) in [("v", &program.phi_v), ("u", &program.phi_u)] {
                for p in phases {
                    let _ = writeln!(s, "{name},{},{},{}", p.layer, p.pos, p.phi);
                }
            }
            for (i, (sig, sign)) in program.sigma.iter().zip(&program.signs).enumerate() {
                let _ = writeln!(s, "sigma,{i},0,{}", sig * sign);
            }
            Ok(s)
        }
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "m             {}", program.m);
            let _ = writeln!(s, "scale         {}", program.scale);
            let _ = writeln!(s, "mzis          {} + {}", program.phi_v.len(), program.phi_u.len());
            let _ = writeln!(s, "max |error|   {err:.3e}");
            let _ = writeln!(s, "sigma         {:?}", program.sigma);
            let _ = writeln!(s, "signs         {:?}", program.signs);
            for (name, phases) in [("V^T", &program.phi_v), ("U", &program.phi_u)] {
                let _ = writeln!(s, "\n{name}\n{:>6}{:>6}{:>14}", "layer", "pos", "phi");
                for p in phases {
                    let _ = writeln!(s, "{:>6}{:>6}{:>14.8}", p.layer, p.pos, p.phi);
                }
            }
            Ok(s)
        }
    }
}

fn precision(g: &Global, args: &PrecisionArgs, format: Format) -> Result<String> {
    let cfg = config(g)?;
    if args.calibrate {
        let model = calibrate_constants(args.trials, g.seed);
        return Ok(format!(
            "[devices.mesh_error]\nc1 = {:.4}\nc2 = {:.4}\nc3 = {:.4}\n",
            model.c1, model.c2, model.c3
        ));
    }
    let d = &cfg.devices;
    let mode = match args.mode {
        Mode::Naive => ProgrammingMode::Naive,
        Mode::ErrorCorrected => ProgrammingMode::ErrorCorrected,
    };
    let noise = NoiseSpec {
        eps_phi: args.eps_phi.unwrap_or(d.eps_phi),
        eps_dc: args.eps_dc.unwrap_or(d.eps_dc),
        b_in: args.b_in.unwrap_or(d.b_in),
        b_out: d.b_out,
        seed: g.seed,
        b_w: Some(args.b_w.unwrap_or(d.b_w)),
        programming: mode,
    };
    noise.validate()?;
    let rows: Vec<_> = args
        .m
        .iter()
        .map(|&m| {
            let study = output_error_study(m, &noise, args.trials);
            let model = estimate_output_bits(m, &noise, mode, &d.mesh_error);
            (study, model)
        })
        .collect();
    match format {
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(s, model)| serde_json::json!({ "study": s, "model_bits": model }))
                .collect();
            serde_json::to_string_pretty(&serde_json::json!({ "noise": noise, "results": v }))
                .map_err(|e| Error::Report(e.to_string()))
        }
        Format::Csv => {
            let mut s = String::from("m,trials,rms_error,effective_bits,model_bits\n");
            for (st, model) in &rows {
                let _ = writeln!(s, "{},{},{},{},{}", st.m, st.trials, st.rms_error, st.effective_bits, model);
            }
            Ok(s)
        }
        Format::Table => {
            let mut s = format!(
                "eps_phi={} eps_dc={} b_in={} b_w={:?} mode={:?}\n{:>6}{:>8}{:>14}{:>10}{:>12}\n",
                noise.eps_phi, noise.eps_dc, noise.b_in, noise.b_w, mode, "m", "trials", "rms", "bits", "model_bits"
            );
            for (st, model) in &rows {
                let _ = writeln!(
                    s,
                    "{:>6}{:>8}{:>14.4e}{:>10.2}{:>12.2}",
                    st.m, st.trials, st.rms_error, st.effective_bits, model
                );
            }
            Ok(s)
        }
    }
}
