//! Closed-form cycle and speedup models, Monte-Carlo validation and the
//! sweep harness behind the speedup curves.
//!
//! For IID sparsity `x`, the number of zeros `k` in a block is
//! `Binomial(4, x)`. The ideal variable-cycle MAC needs `4 - k` cycles
//! (`c_a`); the implemented one still spends one cycle on an all-zero block
//! (`c_o`). Speedups are taken against the 4-cycle sequential baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfu;
use crate::codec::{encode_kernel, Block, DEFAULT_SKIP_CAP};
use crate::error::{Error, Result};
use crate::kernel::{self, Accelerator, CostProfile, RunReport};
use crate::tensor::{ConvSpec, InputTensor};
use crate::workload::{
    gen_combined, gen_combined_aligned, gen_unstructured, SparsityConfig, SparsityMode,
};

fn check_x(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Fraction(x));
    }
    Ok(())
}

fn binomial4(k: u32) -> f64 {
    [1.0, 4.0, 6.0, 4.0, 1.0][k as usize]
}

/// `P(k zeros in a block)` under IID sparsity `x`.
fn p_zeros(x: f64, k: u32) -> f64 {
    binomial4(k) * x.powi(k as i32) * (1.0 - x).powi(4 - k as i32)
}

/// Expected cycles per block of an ideal variable-cycle MAC (zero cycles for
/// an all-zero block).
pub fn ussa_c_analytical(x: f64) -> Result<f64> {
    check_x(x)?;
    Ok((0..=4).map(|k| p_zeros(x, k) * f64::from(4 - k)).sum())
}

/// Expected cycles per block of the implemented MAC, which charges one cycle
/// for an all-zero block.
pub fn ussa_c_observed(x: f64) -> Result<f64> {
    check_x(x)?;
    let partial: f64 = (0..=3).map(|k| p_zeros(x, k) * f64::from(4 - k)).sum();
    Ok(partial + p_zeros(x, 4))
}

/// Variance of the per-block cycle count of the implemented MAC.
pub fn ussa_cycle_variance(x: f64) -> Result<f64> {
    let mean = ussa_c_observed(x)?;
    let second: f64 = (0..=4)
        .map(|k| {
            let c = f64::from((4 - k).max(1));
            p_zeros(x, k) * c * c
        })
        .sum();
    Ok((second - mean * mean).max(0.0))
}

/// Analytical SSSA speedup `1 / (1 - x_ss)`: only nonzero blocks execute.
/// Infinite at `x_ss = 1`.
pub fn sssa_speedup_analytical(x_ss: f64) -> Result<f64> {
    check_x(x_ss)?;
    if x_ss == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (1.0 - x_ss))
}

/// Cycles and speedups at one sparsity level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupPoint {
    pub x: f64,
    pub c_a: f64,
    pub c_o: f64,
    pub s_a: f64,
    pub s_o: f64,
}

impl SpeedupPoint {
    pub fn ussa(x: f64) -> Result<Self> {
        let c_a = ussa_c_analytical(x)?;
        let c_o = ussa_c_observed(x)?;
        Ok(Self {
            x,
            c_a,
            c_o,
            s_a: 4.0 / c_a,
            s_o: 4.0 / c_o,
        })
    }
}

/// The 51-point grid `0, 0.02, ..., 1`.
pub fn curve_xs() -> Vec<f64> {
    (0..=50).map(|i| f64::from(i) / 50.0).collect()
}

/// `x,s_a,s_o` lines for plotting.
pub fn plot_data(xs: &[f64]) -> Result<String> {
    let mut out = String::from("x,s_a,s_o\n");
    for &x in xs {
        let p = SpeedupPoint::ussa(x)?;
        out.push_str(&format!("{},{},{}\n", p.x, p.s_a, p.s_o));
    }
    Ok(out)
}

/// Empirical mean of a per-block cycle count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub variance: f64,
    pub n: u64,
}

impl MonteCarloEstimate {
    pub fn std_err(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// Mean `ussa_vcmac` cycles over `n_blocks` IID blocks of sparsity `x`.
pub fn monte_carlo_ussa(x: f64, n_blocks: u64, seed: u64) -> Result<MonteCarloEstimate> {
    check_x(x)?;
    if n_blocks == 0 {
        return Err(Error::Contract(
            "monte carlo needs at least one block".into(),
        ));
    }
    let weights = gen_unstructured(
        &[1, 1, 4 * n_blocks as usize],
        &SparsityConfig::new(0.0, x, seed, SparsityMode::Iid),
    )?;
    let (mut sum, mut sq) = (0u64, 0u64);
    for blk in weights.data().chunks_exact(4) {
        let c = u64::from(cfu::ussa_vcmac(Block::from_slice(blk), Block::ZERO).cycles);
        sum += c;
        sq += c * c;
    }
    let n = n_blocks as f64;
    let mean = sum as f64 / n;
    Ok(MonteCarloEstimate {
        mean,
        variance: (sq as f64 / n - mean * mean).max(0.0),
        n: n_blocks,
    })
}

/// Shape of the synthetic layer a sweep runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub in_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerSpec {
    /// A layer whose output is a single pixel, so each weight block is issued once.
    pub fn single_pixel(out_channels: usize, kernel: usize, in_channels: usize) -> Self {
        Self {
            out_channels,
            kernel_height: kernel,
            kernel_width: kernel,
            in_channels,
            input_height: kernel,
            input_width: kernel,
            stride: 1,
            padding: 0,
        }
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.kernel_height,
            self.kernel_width,
            self.in_channels,
        ]
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [self.input_height, self.input_width, self.in_channels]
    }
}

impl Default for LayerSpec {
    fn default() -> Self {
        Self::single_pixel(64, 3, 64)
    }
}

/// One point of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub accelerator: Accelerator,
    pub x_ss: f64,
    pub x_us: f64,
}

impl SweepCell {
    pub fn new(accelerator: Accelerator, x_ss: f64, x_us: f64) -> Self {
        Self {
            accelerator,
            x_ss,
            x_us,
        }
    }
}

/// Settings shared by all cells of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub layer: LayerSpec,
    pub mode: SparsityMode,
    pub profile: CostProfile,
    pub skip_cap: u32,
    /// Place zero blocks so the lookahead loop never lands on one
    /// (see [`gen_combined_aligned`]).
    pub skip_aligned: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            layer: LayerSpec::default(),
            mode: SparsityMode::Iid,
            profile: CostProfile::default(),
            skip_cap: DEFAULT_SKIP_CAP,
            skip_aligned: false,
        }
    }
}

/// A finished sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub seed: u64,
    pub report: RunReport,
    pub c_a: Option<f64>,
    pub c_o: Option<f64>,
    pub s_a: Option<f64>,
}

pub const SWEEP_CSV_HEADER: &str =
    "accelerator,x_ss,x_us,total_blocks,executed_blocks,cycles,baseline_cycles,speedup,seed,c_a,c_o,s_a";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.report
                .csv_row(Some(self.cell.x_ss), Some(self.cell.x_us)),
            self.seed,
            opt(self.c_a),
            opt(self.c_o),
            opt(self.s_a)
        )
    }
}

/// Expected `(c_a, c_o, s_a)` for a cell under IID sparsity, where a model exists.
pub fn analytical_columns(cell: &SweepCell) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    match cell.accelerator {
        Accelerator::Ussa => {
            // structural zero blocks are ordinary all-zero blocks to the USSA
            let c_a = (1.0 - cell.x_ss) * ussa_c_analytical(cell.x_us)?;
            let c_o = cell.x_ss + (1.0 - cell.x_ss) * ussa_c_observed(cell.x_us)?;
            Ok((Some(c_a), Some(c_o), Some(4.0 / c_a)))
        }
        Accelerator::Sssa => Ok((None, None, Some(sssa_speedup_analytical(cell.x_ss)?))),
        _ => Ok((None, None, None)),
    }
}

/// Seed of the activation stream for a given workload seed.
fn input_seed(seed: u64) -> u64 {
    seed ^ 0x5EED_1A7E_0000_0001
}

/// Uniform INT8 activations from a seeded ChaCha8 stream.
pub fn random_inputs(dims: [usize; 3], seed: u64) -> Result<InputTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.iter().product::<usize>())
        .map(|_| rng.gen::<i8>())
        .collect();
    InputTensor::new(dims, data)
}

/// Generates the cell's workload and runs it.
pub fn run_cell(cell: &SweepCell, seed: u64, cfg: &SweepConfig) -> Result<SweepRow> {
    let sparsity = SparsityConfig::new(cell.x_ss, cell.x_us, seed, cfg.mode);
    let weights = if cfg.skip_aligned {
        gen_combined_aligned(&cfg.layer.weight_dims(), &sparsity, cfg.skip_cap)?
    } else {
        gen_combined(&cfg.layer.weight_dims(), &sparsity)?
    };
    let inputs = random_inputs(cfg.layer.input_dims(), input_seed(seed))?;
    let spec = ConvSpec::infer(&weights, &inputs, cfg.layer.stride, cfg.layer.padding)?;
    let weights = if cell.accelerator.needs_encoding() {
        encode_kernel(&weights, cfg.skip_cap)?
    } else {
        weights
    };
    let report = kernel::run(cell.accelerator, &weights, &inputs, &spec, &cfg.profile)?;
    let (c_a, c_o, s_a) = analytical_columns(cell)?;
    Ok(SweepRow {
        cell: *cell,
        seed,
        report,
        c_a,
        c_o,
        s_a,
    })
}

/// Runs every `(cell, seed)` pair, in grid-major then seed order. Cells run
/// in parallel on `jobs` threads (0 = rayon default); the order of the result
/// does not depend on completion order. Failures are reported per row.
pub fn sweep(
    grid: &[SweepCell],
    seeds: &[u64],
    cfg: &SweepConfig,
    jobs: usize,
) -> Result<Vec<Result<SweepRow>>> {
    let tasks: Vec<(SweepCell, u64)> = grid
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (*c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Contract(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| {
        tasks
            .par_iter()
            .map(|(cell, seed)| run_cell(cell, *seed, cfg))
            .collect()
    }))
}

/// Renders sweep rows as CSV. The first failed row aborts rendering.
pub fn sweep_csv(rows: &[Result<SweepRow>]) -> Result<String> {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let row = row.as_ref().map_err(Clone::clone)?;
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    Ok(out)
}

/// `{(ussa, 0, x) : x = 0, 0.02, ..., 1}`.
pub fn ussa_curve_grid() -> Vec<SweepCell> {
    curve_xs()
        .into_iter()
        .map(|x| SweepCell::new(Accelerator::Ussa, 0.0, x))
        .collect()
}

/// `{(sssa, x, 0) : x in {0.25, 0.5, 0.75}}`.
pub fn sssa_bar_grid() -> Vec<SweepCell> {
    [0.25, 0.5, 0.75]
        .into_iter()
        .map(|x| SweepCell::new(Accelerator::Sssa, x, 0.0))
        .collect()
}
