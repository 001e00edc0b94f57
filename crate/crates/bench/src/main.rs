use std::path::PathBuf;

use anyhow::{ensure, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rnsckks::context::Parameters;
use rnsckks_bench::presets::{self, bootstrap_config};
use rnsckks_bench::report::{destination, emit, render, Format};
use rnsckks_bench::{lr, micro, vectors};

#[derive(Parser)]
#[command(name = "rnsckks-bench", version, about = "Benchmarks and demos for the rnsckks library")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time one primitive, optionally sweeping levels, limb batches or parameter sets.
    Bench(BenchArgs),
    /// Bootstrap random ciphertexts and report time, precision and remaining levels.
    BootstrapReport(BootArgs),
    /// Train logistic regression on encrypted data and compare with the clear run.
    Lr(LrArgs),
    /// Write deterministic keys digests, ciphertexts and operation outputs.
    DumpVectors(DumpArgs),
    /// List the named parameter sets.
    Presets,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Named parameter set; the flags below override its fields.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    logn: Option<u32>,
    /// Multiplicative depth L.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    delta_bits: Option<u32>,
    #[arg(long)]
    dnum: Option<usize>,
    /// Enforce the 128-bit bound on log2(QP) instead of the toy profile.
    #[arg(long)]
    secure: bool,
}

impl ParamArgs {
    fn resolve(&self, default_preset: &str) -> Result<Parameters> {
        let base = presets::preset(self.preset.as_deref().unwrap_or(default_preset))?;
        let mut p = Parameters::new(
            self.logn.unwrap_or(base.log_n),
            self.depth.unwrap_or(base.depth),
            self.delta_bits.unwrap_or(base.delta_bits),
            self.dnum.unwrap_or(base.dnum),
        );
        if !self.secure {
            p = p.toy();
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Clone)]
struct OutArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output file; defaults to a file in $RNSCKKS_OUT_DIR, else standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    None,
    Level,
    LimbBatch,
    Params,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "hmult")]
    op: micro::Op,
    #[arg(long, value_enum, default_value = "none")]
    sweep: SweepKind,
    #[command(flatten)]
    params: ParamArgs,
    /// Level to run at (default: top); with --sweep level, a comma list of levels.
    #[arg(long, value_delimiter = ',')]
    level: Vec<usize>,
    /// Limbs per parallel task, 0 for all; with --sweep limb-batch, a comma list.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    limb_batch: Vec<usize>,
    /// Presets compared by --sweep params.
    #[arg(long, value_delimiter = ',', default_value = "toy,hom,digits")]
    presets: Vec<String>,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BootArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Slot counts to bootstrap (default: all slots).
    #[arg(long, value_delimiter = ',')]
    slots: Vec<usize>,
    /// Ciphertexts bootstrapped per slot count.
    #[arg(long, default_value_t = 3)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct LrArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// CSV dataset (header row, numeric features, binary label last).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    samples: usize,
    /// Slots per sample row; defaults to 32, reduced to fit the ring.
    #[arg(long)]
    align: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Skip the per-iteration bootstrap (limits the iteration count).
    #[arg(long)]
    no_bootstrap: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long, default_value_t = 7)]
    logn: u32,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 30)]
    delta_bits: u32,
    #[arg(long, default_value_t = 1)]
    dnum: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Check an existing file against a fresh run instead of writing one.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_rows<T: serde::Serialize>(rows: &[T], out: &OutArgs, stem: &str) -> Result<()> {
    let bytes = render(rows, out.format)?;
    emit(&bytes, destination(out.out.as_deref(), stem, out.format.extension()).as_deref())
}

fn bench(a: BenchArgs) -> Result<()> {
    let params = a.params.resolve("toy")?;
    let single_level = match (a.sweep, a.level.as_slice()) {
        (SweepKind::Level, _) | (_, []) => None,
        (_, [l]) => Some(*l),
        _ => anyhow::bail!("several levels need --sweep level"),
    };
    let sweep = match a.sweep {
        SweepKind::None => micro::Sweep::Single,
        SweepKind::Level => micro::Sweep::Level((!a.level.is_empty()).then(|| a.level.clone())),
        SweepKind::LimbBatch => micro::Sweep::LimbBatch(a.limb_batch.clone()),
        SweepKind::Params => micro::Sweep::Params(
            a.presets
                .iter()
                .map(|n| presets::preset(n).map(|p| p.params()))
                .collect::<Result<_>>()?,
        ),
    };
    ensure!(
        a.sweep == SweepKind::LimbBatch || a.limb_batch.len() == 1,
        "several limb batches need --sweep limb-batch"
    );
    let opts = micro::BenchOptions {
        params,
        level: single_level,
        limb_batch: a.limb_batch[0],
        iters: a.iters,
        seed: a.seed,
    };
    let results = micro::run_microbench(a.op, &sweep, &opts)?;
    write_rows(&results, &a.out, "bench")
}

fn bootstrap_report(a: BootArgs) -> Result<()> {
    let params = a.params.resolve("desk")?;
    let slots = if a.slots.is_empty() { vec![params.ring_degree() / 2] } else { a.slots.clone() };
    let configs: Vec<_> = slots.iter().map(|&s| bootstrap_config(&params, s)).collect();
    let reports = rnsckks_bench::run_bootstrap_report(&params, &configs, a.iters, a.seed)?;
    write_rows(&reports, &a.out, "bootstrap")
}

fn lr_demo(a: LrArgs) -> Result<()> {
    let params = a.params.resolve("desk")?;
    let default = lr::LrConfig::default();
    let align = a
        .align
        .unwrap_or_else(|| default.align.min((params.ring_degree() / 2 / a.samples.max(1)).max(1)));
    let cfg = lr::LrConfig {
        data: a.data.clone(),
        samples: a.samples,
        align,
        learning_rate: a.learning_rate,
        iterations: a.iters,
        bootstrap: !a.no_bootstrap,
        sigmoid_degree: a.degree,
        seed: a.seed,
    };
    let report = rnsckks_bench::run_lr_demo(&params, &cfg)?;
    match a.out.format {
        Format::Json => write_rows(&[report], &a.out, "lr"),
        Format::Csv => write_rows(&report.rows(), &a.out, "lr"),
    }
}

fn dump(a: DumpArgs) -> Result<()> {
    if let Some(path) = &a.replay {
        let bytes = std::fs::read(path)?;
        let r = vectors::replay(&bytes)?;
        println!(
            "{} sections, {} mismatched {:?}, max decrypt error {:e}",
            r.sections,
            r.mismatched.len(),
            r.mismatched,
            r.max_error
        );
        ensure!(r.ok(), "replay of {} failed", path.display());
        return Ok(());
    }
    let params = Parameters::new(a.logn, a.depth, a.delta_bits, a.dnum).toy();
    let bytes = vectors::dump_test_vectors(&params, a.seed)?;
    emit(&bytes, destination(a.out.as_deref(), "vectors", "bin").as_deref())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Bench(a) => bench(a),
        Command::BootstrapReport(a) => bootstrap_report(a),
        Command::Lr(a) => lr_demo(a),
        Command::DumpVectors(a) => dump(a),
        Command::Presets => {
            for p in presets::PRESETS {
                println!(
                    "{:<11} [2^{}, {}, {}, {}]  {}",
                    p.name, p.log_n, p.depth, p.delta_bits, p.dnum, p.about
                );
            }
            Ok(())
        }
    }
}
