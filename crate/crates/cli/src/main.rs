use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsecfu::analytics::{
    self, plot_data, sssa_speedup_analytical, LayerSpec, SpeedupPoint, SweepCell, SweepConfig,
};
use sparsecfu::cfu::pack_rtype;
use sparsecfu::codec::{dump_codes, encode_kernel, int7_clamp};
use sparsecfu::container::Container;
use sparsecfu::kernel::{self, RunReport};
use sparsecfu::tensor::{dense_conv_oracle, PadChannels};
use sparsecfu::workload::{
    self, gen_combined, gen_combined_aligned, magnitude_prune, GENERATOR_ID,
};
use sparsecfu::{
    Accelerator, ConvSpec, CostProfile, Granularity, InputTensor, Instruction, SparsityConfig,
    SparsityMode, WeightTensor, DEFAULT_SKIP_CAP, LITERAL_SKIP_CAP,
};

#[derive(Parser)]
#[command(
    name = "sparsecfu",
    version,
    about = "Sparse convolution CFU simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded sparse weight tensor (or activations with --inputs)
    Gen(GenArgs),
    /// Magnitude-prune a raw weight tensor to a target zero fraction
    Prune(PruneArgs),
    /// Clamp to INT7 and embed lookahead skip codes
    Encode(EncodeArgs),
    /// Run one layer on an accelerator and print a report row
    Run(RunArgs),
    /// Run a grid of sparsity levels and write a CSV table
    Sweep(SweepArgs),
    /// Print closed-form cycle counts and speedups
    Analytic(AnalyticArgs),
    /// Check every accelerator against the dense oracle
    Verify(VerifyArgs),
    /// Print instruction word encodings
    Isa,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Iid,
    Exact,
}

impl From<Mode> for SparsityMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Iid => SparsityMode::Iid,
            Mode::Exact => SparsityMode::ExactRatio,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GranularityArg {
    Element,
    Block4,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Element => Granularity::Element,
            GranularityArg::Block4 => Granularity::Block4,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Weight dims O,H,W,C or H,W,C (activation dims H,W,C with --inputs)
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Fraction of all-zero 4-blocks
    #[arg(long, default_value_t = 0.0)]
    x_ss: f64,
    /// Fraction of zeros inside surviving blocks
    #[arg(long, default_value_t = 0.0)]
    x_us: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "iid")]
    mode: Mode,
    /// Keep zero runs reachable by the lookahead loop (runs <= skip cap,
    /// first block of each row nonzero)
    #[arg(long)]
    aligned: bool,
    #[arg(long, default_value_t = DEFAULT_SKIP_CAP)]
    skip_cap: u32,
    /// Generate uniform INT8 activations instead of weights
    #[arg(long)]
    inputs: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PruneArgs {
    input: PathBuf,
    /// Zero fraction to reach
    #[arg(long)]
    target: f64,
    #[arg(long, value_enum, default_value = "element")]
    granularity: GranularityArg,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    input: PathBuf,
    /// Longest run of zero blocks one code may skip (1..15)
    #[arg(long, default_value_t = DEFAULT_SKIP_CAP, conflicts_with = "alg1_literal")]
    skip_cap: u32,
    /// Cap runs at 4 blocks
    #[arg(long)]
    alg1_literal: bool,
    /// Print `h,w,c,code` per block (prefixed with `o,` for 4D kernels)
    #[arg(long)]
    dump_codes: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    /// Extra cycles per loop iteration
    #[arg(long, default_value_t = 0)]
    overhead: u32,
    /// Cycles charged for each inc_indvar
    #[arg(long, default_value_t = 0)]
    inc_cost: u32,
}

impl CostArgs {
    fn profile(&self) -> CostProfile {
        CostProfile::default()
            .with_overhead(self.overhead)
            .with_inc_indvar_cost(self.inc_cost)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_accel)]
    accel: Accelerator,
    #[arg(long)]
    weights: PathBuf,
    /// Activation tensor; random activations from --seed when omitted
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Height,width of generated activations (defaults to the kernel size)
    #[arg(long, value_delimiter = ',', num_args = 2)]
    input_hw: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    padding: usize,
    #[command(flatten)]
    cost: CostArgs,
    /// Omit the CSV header line
    #[arg(long)]
    no_header: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// USSA at x_us = 0, 0.02, ..., 1
    UssaCurve,
    /// SSSA at x_ss = 0.25, 0.5, 0.75
    SssaBars,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum, conflicts_with_all = ["accel", "x_ss", "x_us"])]
    preset: Option<Preset>,
    #[arg(long, value_delimiter = ',', value_parser = parse_accel)]
    accel: Vec<Accelerator>,
    #[arg(long, value_delimiter = ',')]
    x_ss: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    x_us: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Layer as O,K,C (single output pixel, KxK kernel)
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [64, 3, 64])]
    layer: Vec<usize>,
    #[arg(long, value_enum, default_value = "iid")]
    mode: Mode,
    #[arg(long)]
    aligned: bool,
    #[arg(long, default_value_t = DEFAULT_SKIP_CAP)]
    skip_cap: u32,
    #[command(flatten)]
    cost: CostArgs,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// CSV destination (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write closed-form `x,s_a,s_o` curve data
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(long, conflicts_with = "sssa", required_unless_present = "sssa")]
    ussa: bool,
    #[arg(long)]
    sssa: bool,
    /// Sparsity level; prints the full curve when omitted
    #[arg(long)]
    x: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight dims for random tensors (H,W,C or O,H,W,C)
    #[arg(long, value_delimiter = ',', default_values_t = [3, 3, 16])]
    dims: Vec<usize>,
    #[arg(long, requires = "inputs")]
    weights: Option<PathBuf>,
    #[arg(long, requires = "weights")]
    inputs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 1)]
    padding: usize,
}

fn parse_accel(s: &str) -> Result<Accelerator, String> {
    s.parse::<Accelerator>().map_err(|e| e.to_string())
}

/// Shortest decimal with at most five fractional digits.
fn short(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.5}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn load(path: &Path) -> Result<Container> {
    Container::load(path).with_context(|| format!("reading {}", path.display()))
}

fn save(c: &Container, path: &Path) -> Result<()> {
    c.save(path)
        .with_context(|| format!("writing {}", path.display()))
}

fn gen_tag(cfg: &SparsityConfig, aligned: bool) -> String {
    let mode = match cfg.mode {
        SparsityMode::Iid => "iid",
        SparsityMode::ExactRatio => "exact",
    };
    let mut tag = format!(
        "{GENERATOR_ID} seed={} x_ss={} x_us={} mode={mode}",
        cfg.seed, cfg.x_ss, cfg.x_us
    );
    if aligned {
        tag.push_str(" aligned");
    }
    tag
}

/// Reads `key=value` out of a generator tag.
fn tag_value(tag: Option<&str>, key: &str) -> Option<f64> {
    tag?.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
        .and_then(|v| v.parse().ok())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    if a.inputs {
        let dims: [usize; 3] = a
            .dims
            .as_slice()
            .try_into()
            .context("activation dims must be H,W,C")?;
        let x = analytics::random_inputs(dims, a.seed)?;
        let tag = format!("{GENERATOR_ID} seed={} uniform-i8", a.seed);
        return save(&Container::from_inputs(&x, Some(&tag)), &a.output);
    }
    let cfg = SparsityConfig::new(a.x_ss, a.x_us, a.seed, a.mode.into());
    let w = if a.aligned {
        gen_combined_aligned(&a.dims, &cfg, a.skip_cap)?
    } else {
        gen_combined(&a.dims, &cfg)?
    };
    save(
        &Container::from_weights(&w, Some(&gen_tag(&cfg, a.aligned))),
        &a.output,
    )
}

fn cmd_prune(a: PruneArgs) -> Result<()> {
    let c = load(&a.input)?;
    let gen = c.header.gen.clone();
    let w = magnitude_prune(&c.into_weights()?, a.target, a.granularity.into())?;
    eprintln!("zero fraction {}", short(workload::zero_fraction(&w)));
    save(&Container::from_weights(&w, gen.as_deref()), &a.output)
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    if a.output.is_none() && !a.dump_codes {
        bail!("nothing to do: give --output and/or --dump-codes");
    }
    let c = load(&a.input)?;
    let gen = c.header.gen.clone();
    let w = c.into_weights()?;
    if w.is_encoded() {
        bail!("{} is already encoded", a.input.display());
    }
    let cap = if a.alg1_literal {
        LITERAL_SKIP_CAP
    } else {
        a.skip_cap
    };
    let enc = encode_kernel(&int7_clamp(&w), cap)?;
    if a.dump_codes {
        let four_d = enc.dims().len() == 4;
        let mut out = io::BufWriter::new(io::stdout().lock());
        for e in dump_codes(&enc)? {
            if four_d {
                write!(out, "{},", e.o)?;
            }
            writeln!(out, "{},{},{},{}", e.h, e.w, e.c, e.code)?;
        }
        out.flush()?;
    }
    if let Some(path) = &a.output {
        save(&Container::from_weights(&enc, gen.as_deref()), path)?;
    }
    Ok(())
}

fn pad_weights(w: WeightTensor) -> WeightTensor {
    if w.is_encoded() {
        w
    } else {
        w.pad_channels_to_multiple_of_4()
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let c = load(&a.weights)?;
    let gen = c.header.gen.clone();
    let w = pad_weights(c.into_weights()?);
    if a.accel.needs_encoding() && !w.is_encoded() {
        bail!(
            "{} needs encoded weights; run `sparsecfu encode` first",
            a.accel
        );
    }
    if !a.accel.needs_encoding() && w.is_encoded() {
        bail!("{} needs raw weights, got an encoded tensor", a.accel);
    }
    let x = match &a.inputs {
        Some(path) => load(path)?.into_inputs()?,
        None => {
            let [_, kh, kw, c] = w.shape4();
            let hw = a.input_hw.clone().unwrap_or_else(|| vec![kh, kw]);
            analytics::random_inputs([hw[0], hw[1], c], a.seed)?
        }
    }
    .pad_channels_to_multiple_of_4();
    let spec = ConvSpec::infer(&w, &x, a.stride, a.padding)?;
    let report = kernel::run(a.accel, &w, &x, &spec, &a.cost.profile())?;
    let row = report.csv_row(
        tag_value(gen.as_deref(), "x_ss"),
        tag_value(gen.as_deref(), "x_us"),
    );
    if !a.no_header {
        println!("{}", RunReport::CSV_HEADER);
    }
    println!("{row}");
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let grid: Vec<SweepCell> = match a.preset {
        Some(Preset::UssaCurve) => analytics::ussa_curve_grid(),
        Some(Preset::SssaBars) => analytics::sssa_bar_grid(),
        None => {
            if a.accel.is_empty() {
                bail!("give --preset or at least one --accel");
            }
            let x_ss = if a.x_ss.is_empty() { vec![0.0] } else { a.x_ss };
            let x_us = if a.x_us.is_empty() { vec![0.0] } else { a.x_us };
            let mut grid = Vec::new();
            for &acc in &a.accel {
                for &s in &x_ss {
                    for &u in &x_us {
                        grid.push(SweepCell::new(acc, s, u));
                    }
                }
            }
            grid
        }
    };
    let cfg = SweepConfig {
        layer: LayerSpec::single_pixel(a.layer[0], a.layer[1], a.layer[2]),
        mode: a.mode.into(),
        profile: a.cost.profile(),
        skip_cap: a.skip_cap,
        skip_aligned: a.aligned,
    };
    let rows = analytics::sweep(&grid, &a.seeds, &cfg, a.jobs)?;
    let csv = analytics::sweep_csv(&rows)?;
    match &a.output {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    if let Some(path) = &a.plot_data {
        fs::write(path, plot_data(&analytics::curve_xs())?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_analytic(a: AnalyticArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    let xs = match a.x {
        Some(x) => vec![x],
        None => analytics::curve_xs(),
    };
    for x in xs {
        if a.sssa {
            writeln!(
                out,
                "x={} s_a={}",
                short(x),
                short(sssa_speedup_analytical(x)?)
            )?;
        } else {
            let p = SpeedupPoint::ussa(x)?;
            writeln!(
                out,
                "x={} c_a={} c_o={} s_a={} s_o={}",
                short(p.x),
                short(p.c_a),
                short(p.c_o),
                short(p.s_a),
                short(p.s_o)
            )?;
        }
    }
    Ok(())
}

fn verify_tensors(a: &VerifyArgs) -> Result<(WeightTensor, InputTensor)> {
    if let (Some(wp), Some(xp)) = (&a.weights, &a.inputs) {
        let w = load(wp)?.into_weights()?;
        if w.is_encoded() {
            bail!("verify needs raw weights");
        }
        let x = load(xp)?.into_inputs()?;
        return Ok((
            w.pad_channels_to_multiple_of_4(),
            x.pad_channels_to_multiple_of_4(),
        ));
    }
    let cfg = SparsityConfig::new(0.5, 0.25, a.seed, SparsityMode::Iid);
    let w = gen_combined(&a.dims, &cfg)?;
    let [_, kh, kw, c] = w.shape4();
    let x = analytics::random_inputs([kh + 3, kw + 3, c], a.seed ^ 1)?;
    Ok((w, x))
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let (w, x) = verify_tensors(&a)?;
    let spec = ConvSpec::infer(&w, &x, a.stride, a.padding)?;
    let clamped = int7_clamp(&w);
    let encoded = encode_kernel(&clamped, DEFAULT_SKIP_CAP)?;
    let oracle = dense_conv_oracle(&w, &x, &spec)?;
    let oracle7 = dense_conv_oracle(&clamped, &x, &spec)?;
    let profile = CostProfile::default();
    let mut ok = 0;
    for accel in Accelerator::ALL {
        let (weights, expected) = if accel.needs_encoding() {
            (&encoded, &oracle7)
        } else {
            (&w, &oracle)
        };
        let r: RunReport = kernel::run(accel, weights, &x, &spec, &profile)?;
        if r.output == *expected {
            ok += 1;
        } else {
            eprintln!("MISMATCH: {accel} output differs from oracle");
        }
    }
    let n = Accelerator::ALL.len();
    if ok == n {
        println!("OK: {ok}/{n} accelerators match oracle");
    } else {
        println!("FAIL: {ok}/{n} accelerators match oracle");
    }
    Ok(ok == n)
}

fn cmd_isa() -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "mnemonic,funct7,funct3,opcode,template")?;
    for i in Instruction::ALL {
        let t = i.template();
        let word = pack_rtype(&t)?;
        writeln!(
            out,
            "{},{:#04x},{},{:#04x},{word:#010x}",
            i.mnemonic(),
            t.funct7,
            t.funct3,
            t.opcode
        )?;
        writeln!(
            out,
            "  .word {word:#010x} | (RD << 7) | (RS1 << 15) | (RS2 << 20)"
        )?;
    }
    Ok(())
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<io::Error>()
        .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a).map(|_| true),
        Command::Prune(a) => cmd_prune(a).map(|_| true),
        Command::Encode(a) => cmd_encode(a).map(|_| true),
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Analytic(a) => cmd_analytic(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::Isa => cmd_isa().map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
