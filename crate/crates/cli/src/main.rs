//! `pim-dram`: map, time and functionally simulate a network on the
//! in-DRAM accelerator model.
//!
//! Exit codes: 0 success, 1 bad input or I/O, 2 infeasible mapping,
//! 3 oracle mismatch or a failed plan check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pim_dram::area::area_power_report;
use pim_dram::report::ReportFormat;
use pim_dram::runner::{map_and_validate, precision_sweep, run, Mode, RunConfig};
use pim_dram::timing::TimingParams;
use pim_dram::{Error, NetworkDescription, Precision, Preset};

#[derive(Parser)]
#[command(name = "pim-dram", version, about = "In-DRAM bit-serial DNN accelerator model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map a network, then run it functionally and/or through the timing model.
    Run(RunArgs),
    /// Map a network and write the mapping plan as JSON.
    Map(MapArgs),
    /// Print the area and power tables.
    Area {
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Full-pipeline latency across precisions.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => ReportFormat::Table,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Alexnet,
    Vgg16,
    Resnet18,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Alexnet => Preset::AlexNet,
            PresetArg::Vgg16 => Preset::Vgg16,
            PresetArg::Resnet18 => Preset::ResNet18,
        }
    }
}

#[derive(Args)]
struct NetworkArgs {
    /// Built-in network.
    #[arg(long, value_enum, conflicts_with = "network", required_unless_present = "network")]
    preset: Option<PresetArg>,
    /// Network description JSON.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Operand precision in bits.
    #[arg(short = 'n', long)]
    precision: Option<u32>,
    /// Parallelism vector name (P1, P2, ...) or comma-separated k per layer.
    #[arg(long)]
    parallelism: Option<String>,
}

#[derive(Args)]
struct GeometryArgs {
    /// 4096x4096 subarrays instead of the 256x256 default.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    subarrays_per_bank: Option<usize>,
    #[arg(long)]
    banks: Option<usize>,
    /// Timing parameters TOML.
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    net: NetworkArgs,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// functional, timing or both.
    #[arg(long, default_value = "timing")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Images streamed through the pipeline.
    #[arg(long, default_value_t = 1)]
    images: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Also write the report here (JSON or table, by --format).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    net: NetworkArgs,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Where to write the plan JSON.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    net: NetworkArgs,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Precisions to sweep, comma separated.
    #[arg(long, default_value = "1,2,3,4,5,6,7,8", value_delimiter = ',')]
    bits: Vec<u32>,
    #[arg(long, default_value_t = 1)]
    images: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn load_network(args: &NetworkArgs) -> pim_dram::Result<NetworkDescription> {
    let n = args.precision.map(Precision::new).transpose()?;
    let mut net = match (&args.preset, &args.network) {
        (Some(p), _) => {
            let preset = Preset::from(*p);
            let name = match &args.parallelism {
                Some(s) if !s.contains(',') && s.to_ascii_uppercase().starts_with('P') => s.as_str(),
                _ => "P1",
            };
            preset.network(n.unwrap_or(Precision::new(8)?), name)?
        }
        (None, Some(path)) => NetworkDescription::load(path)?,
        (None, None) => return Err(Error::Config("give --preset or --network".into())),
    };
    if let Some(n) = n {
        net = net.with_precision(n);
    }
    if let Some(s) = &args.parallelism {
        if s.contains(',') || s.parse::<usize>().is_ok() {
            let v = s
                .split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|e| Error::Parse(format!("parallelism `{x}`: {e}"))))
                .collect::<pim_dram::Result<Vec<_>>>()?;
            net = net.with_parallelism(v);
        } else if args.network.is_some() {
            return Err(Error::Config("named parallelism vectors only exist for presets".into()));
        }
    }
    // a malformed description is an input error, not a failed check
    net.validate().map_err(|e| match e {
        Error::Validation(m) => Error::Config(m),
        other => other,
    })?;
    Ok(net)
}

fn run_config(g: &GeometryArgs) -> pim_dram::Result<RunConfig> {
    let mut cfg = if g.full_scale { RunConfig::full_scale() } else { RunConfig::default() };
    if let Some(r) = g.rows {
        cfg.subarray_rows = r;
    }
    if let Some(c) = g.cols {
        cfg.subarray_cols = c;
    }
    if let Some(s) = g.subarrays_per_bank {
        cfg.subarrays_per_bank = s;
    }
    if let Some(b) = g.banks {
        cfg.banks = b;
    }
    if let Some(path) = &g.timing {
        cfg.timing = TimingParams::load(path)?;
    }
    Ok(cfg)
}

fn write_out(path: &Option<PathBuf>, text: &str) -> pim_dram::Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> pim_dram::Result<()> {
    let net = load_network(&a.net)?;
    let mut cfg = run_config(&a.geometry)?;
    cfg.mode = a.mode.parse::<Mode>()?;
    cfg.seed = a.seed;
    cfg.images = a.images;
    let report = run(&net, &cfg)?;
    let text = report.emit(a.format.into())?;
    write_out(&a.output, &text)?;
    if a.output.is_none() {
        print!("{text}");
    } else {
        let total = report.latency.as_ref().map(|l| format!(" total_ns={:.2}", l.pipeline.total_ns)).unwrap_or_default();
        println!("{} n={} mode={} status={}{total}", report.network, report.precision, report.mode, report.status);
    }
    Ok(())
}

fn cmd_map(a: &MapArgs) -> pim_dram::Result<()> {
    let net = load_network(&a.net)?;
    let cfg = run_config(&a.geometry)?;
    let plan = map_and_validate(&net, &cfg)?;
    write_out(&a.output, &plan.to_json()?)?;
    for (l, spec) in plan.layers.iter().zip(&net.layers) {
        println!(
            "{:<20} bank={:<3} k={:<3} mac_size={:<6} macs={:<9} subarrays={:<8} padding={}",
            spec.name,
            l.bank,
            l.k,
            l.mac_size,
            l.total_macs,
            l.subarrays_used(),
            l.padding_columns
        );
    }
    for r in &plan.reserved {
        let e = &net.residuals[r.edge];
        println!("residual {}->{} reserved bank {}", e.from_layer, e.to_layer, r.reserved_bank);
    }
    println!("plan valid: {} layers, {} reserved banks", plan.layers.len(), plan.reserved.len());
    Ok(())
}

fn cmd_area(format: Format) -> pim_dram::Result<()> {
    let r = area_power_report();
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&r)?),
        Format::Table => {
            println!("{:<12} {:>12} {:>10} {:>16} {:>10}", "component", "area_um2", "share%", "power_nw", "share%");
            for (a, p) in r.area_um2.iter().zip(&r.power_nw) {
                println!("{:<12} {:>12} {:>10} {:>16} {:>10}", a.component, a.value, a.listed_percentage, p.value, p.listed_percentage);
            }
            println!("total area {} um^2, total power {} nW", r.area_total_um2, r.power_total_nw);
            println!("256x8 transpose SRAM: {} um^2", r.transpose_sram_area_um2);
        }
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> pim_dram::Result<()> {
    let net = load_network(&a.net)?;
    let mut cfg = run_config(&a.geometry)?;
    cfg.images = a.images;
    let points = precision_sweep(&net, &a.bits, &cfg)?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&points)? + "\n",
        Format::Table => {
            let mut s = format!("{:>3} {:>18} {:>18}\n", "n", "multiply_ns", "total_ns");
            for p in &points {
                s += &format!("{:>3} {:>18.2} {:>18.2}\n", p.n, p.multiply_ns, p.total_ns);
            }
            s
        }
    };
    write_out(&a.output, &text)?;
    print!("{text}");
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MappingInfeasible(_) => 2,
        Error::OracleMismatch { .. } | Error::Validation(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Map(a) => cmd_map(a),
        Command::Area { format } => cmd_area(*format),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

