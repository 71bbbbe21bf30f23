//! Convolution kernel executors for the baseline and the three sparse CFUs.
//!
//! The loop nest is `output_height / output_width / out_channel / (h, w)`
//! with an innermost loop over the channel row of the weight tensor. The
//! baseline and USSA kernels step that loop by one block; SSSA and CSA run a
//! `while (i < in_channels)` loop advanced by the increment instruction.
//! Receptive-field taps that fall into the spatial padding are executed with
//! zero activations, so every output position issues the same blocks.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfu::{self, CfuResult, InductionVar};
use crate::codec::Block;
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, InputTensor, OutputTensor, WeightTensor};

/// Which functional unit a layer runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Accelerator {
    BaselineSimd,
    BaselineSeq,
    Sssa,
    Ussa,
    Csa,
}

/// MAC cost model selector of a [`CostProfile`].
pub type MacModel = Accelerator;

impl Accelerator {
    pub const ALL: [Accelerator; 5] = [
        Accelerator::BaselineSimd,
        Accelerator::BaselineSeq,
        Accelerator::Sssa,
        Accelerator::Ussa,
        Accelerator::Csa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Accelerator::BaselineSimd => "baseline-simd",
            Accelerator::BaselineSeq => "baseline-seq",
            Accelerator::Sssa => "sssa",
            Accelerator::Ussa => "ussa",
            Accelerator::Csa => "csa",
        }
    }

    /// Whether the kernel consumes lookahead-encoded weights.
    pub fn needs_encoding(self) -> bool {
        matches!(self, Accelerator::Sssa | Accelerator::Csa)
    }

    /// The baseline an accelerator's speedup is reported against.
    pub fn baseline(self) -> Accelerator {
        match self {
            Accelerator::BaselineSimd | Accelerator::Sssa => Accelerator::BaselineSimd,
            Accelerator::BaselineSeq | Accelerator::Ussa | Accelerator::Csa => {
                Accelerator::BaselineSeq
            }
        }
    }
}

impl fmt::Display for Accelerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Accelerator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Accelerator::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Contract(format!("unknown accelerator '{s}'")))
    }
}

/// Cycle charges applied on top of the instruction models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostProfile {
    /// Charged once per executed inner-loop iteration, in every kernel.
    pub per_block_loop_overhead: u32,
    /// Visible cost of the increment instruction; 0 models full overlap with the MAC.
    pub inc_indvar_cost: u32,
    pub mac_model: MacModel,
}

impl CostProfile {
    pub fn new(mac_model: MacModel) -> Self {
        Self {
            per_block_loop_overhead: 0,
            inc_indvar_cost: 0,
            mac_model,
        }
    }

    pub fn with_overhead(mut self, cycles: u32) -> Self {
        self.per_block_loop_overhead = cycles;
        self
    }

    pub fn with_inc_indvar_cost(mut self, cycles: u32) -> Self {
        self.inc_indvar_cost = cycles;
        self
    }
}

impl Default for CostProfile {
    fn default() -> Self {
        Self::new(MacModel::BaselineSimd)
    }
}

/// Result of running one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub accelerator: Accelerator,
    pub output: OutputTensor,
    pub total_blocks: u64,
    pub executed_blocks: u64,
    pub skipped_blocks: u64,
    pub cycles: u64,
    pub baseline_cycles: u64,
    /// `baseline_cycles / cycles`, exact.
    pub speedup: Ratio<u64>,
}

impl RunReport {
    pub fn speedup_f64(&self) -> f64 {
        *self.speedup.numer() as f64 / *self.speedup.denom() as f64
    }

    /// Mean cycles charged per block of the layer (skipped blocks included).
    pub fn cycles_per_block(&self) -> f64 {
        self.cycles as f64 / self.total_blocks as f64
    }

    pub const CSV_HEADER: &'static str =
        "accelerator,x_ss,x_us,total_blocks,executed_blocks,cycles,baseline_cycles,speedup";

    /// One CSV row; unknown sparsity levels are left empty.
    pub fn csv_row(&self, x_ss: Option<f64>, x_us: Option<f64>) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.accelerator,
            opt(x_ss),
            opt(x_us),
            self.total_blocks,
            self.executed_blocks,
            self.cycles,
            self.baseline_cycles,
            self.speedup_f64()
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counters {
    executed: u64,
    cycles: u64,
}

impl Counters {
    fn merge(self, other: Counters) -> Counters {
        Counters {
            executed: self.executed + other.executed,
            cycles: self.cycles + other.cycles,
        }
    }
}

/// Walks one encoded channel row the way the `while` loop does, calling
/// `visit` with the index of each block it lands on.
pub fn walk_encoded_row(row: &[i8], mut visit: impl FnMut(usize)) -> Result<()> {
    let in_channels = row.len() as u32;
    let mut iv = InductionVar::START;
    while iv.get() < in_channels {
        let b = iv.block();
        visit(b);
        let next = cfu::sssa_inc_indvar(Block::from_slice(&row[b * 4..]), iv);
        if next.get() > in_channels {
            return Err(Error::Overshoot {
                from: iv.get(),
                next: next.get(),
                in_channels,
            });
        }
        iv = next;
    }
    Ok(())
}

/// Blocks visited by the SSSA/CSA loop for each `(o, h, w)` row of an encoded
/// kernel. The visitation depends only on the weights.
pub fn visitation_trace(weights: &WeightTensor) -> Result<Vec<Vec<usize>>> {
    if !weights.is_encoded() {
        return Err(Error::Contract(
            "visitation trace needs an encoded kernel".into(),
        ));
    }
    weights
        .row_chunks()
        .map(|row| {
            let mut visited = Vec::new();
            walk_encoded_row(row, |b| visited.push(b))?;
            Ok(visited)
        })
        .collect()
}

enum Loop {
    /// `for (i = 0; i < C; i += 4)`
    Dense(fn(Block, Block) -> CfuResult),
    /// `while (i < C) { mac; i = inc_indvar(filter[i], i); }`
    Skipping(fn(Block, Block) -> CfuResult),
}

fn execute(
    weights: &WeightTensor,
    inputs: &InputTensor,
    spec: &ConvSpec,
    kernel: Loop,
    profile: &CostProfile,
) -> Result<(OutputTensor, Counters)> {
    spec.check(weights, inputs)?;
    spec.check_blocked()?;
    let [_, kh, kw, c] = weights.shape4();
    let zeros = vec![0i8; c];
    let per_iter = u64::from(profile.per_block_loop_overhead);
    let inc_cost = u64::from(profile.inc_indvar_cost);

    let run_row = |row: &[i8], px: &[i8], acc: &mut i32, n: &mut Counters| -> Result<()> {
        match kernel {
            Loop::Dense(mac) => {
                for (w, x) in row.chunks_exact(4).zip(px.chunks_exact(4)) {
                    let r = mac(Block::from_slice(w), Block::from_slice(x));
                    *acc = acc.wrapping_add(r.value);
                    n.executed += 1;
                    n.cycles += u64::from(r.cycles) + per_iter;
                }
                Ok(())
            }
            Loop::Skipping(mac) => walk_encoded_row(row, |b| {
                let r = mac(
                    Block::from_slice(&row[b * 4..]),
                    Block::from_slice(&px[b * 4..]),
                );
                *acc = acc.wrapping_add(r.value);
                n.executed += 1;
                n.cycles += u64::from(r.cycles) + inc_cost + per_iter;
            }),
        }
    };

    let rows: Vec<(Vec<i32>, Counters)> = (0..spec.output_height)
        .into_par_iter()
        .map(|oy| -> Result<(Vec<i32>, Counters)> {
            let mut n = Counters::default();
            let mut line = Vec::with_capacity(spec.output_width * spec.out_channels);
            for ox in 0..spec.output_width {
                for o in 0..spec.out_channels {
                    let mut acc = 0i32;
                    for h in 0..kh {
                        for w in 0..kw {
                            let px = inputs
                                .pixel(spec.tap(oy, h), spec.tap(ox, w))
                                .unwrap_or(&zeros);
                            run_row(weights.row(o, h, w), px, &mut acc, &mut n)?;
                        }
                    }
                    line.push(acc);
                }
            }
            Ok((line, n))
        })
        .collect::<Result<_>>()?;

    let mut out = OutputTensor::zeros(spec.output_dims());
    let mut total = Counters::default();
    for (oy, (line, n)) in rows.into_iter().enumerate() {
        for (i, v) in line.into_iter().enumerate() {
            out.set(oy, i / spec.out_channels, i % spec.out_channels, v);
        }
        total = total.merge(n);
    }
    Ok((out, total))
}

/// Blocks issued by a dense pass over the layer.
pub fn total_blocks(weights: &WeightTensor, spec: &ConvSpec) -> u64 {
    (spec.output_height * spec.output_width) as u64 * (weights.len() / 4) as u64
}

fn baseline_cycles(total: u64, baseline: Accelerator, profile: &CostProfile) -> u64 {
    let mac = match baseline {
        Accelerator::BaselineSeq => cfu::SEQ_MAC_CYCLES,
        _ => cfu::SIMD_MAC_CYCLES,
    };
    total * (u64::from(mac) + u64::from(profile.per_block_loop_overhead))
}

fn report(
    accelerator: Accelerator,
    output: OutputTensor,
    total_blocks: u64,
    n: Counters,
    baseline_cycles: u64,
) -> RunReport {
    RunReport {
        accelerator,
        output,
        total_blocks,
        executed_blocks: n.executed,
        skipped_blocks: total_blocks - n.executed,
        cycles: n.cycles,
        baseline_cycles,
        speedup: Ratio::new(baseline_cycles, n.cycles.max(1)),
    }
}

fn require_raw(weights: &WeightTensor) -> Result<()> {
    if weights.is_encoded() {
        return Err(Error::Contract(
            "kernel expects raw weights but the tensor is encoded".into(),
        ));
    }
    Ok(())
}

fn require_encoded(weights: &WeightTensor) -> Result<()> {
    if !weights.is_encoded() {
        return Err(Error::Contract(
            "kernel expects lookahead-encoded weights".into(),
        ));
    }
    Ok(())
}

/// Dense loop with the baseline MAC selected by `profile.mac_model`
/// (`baseline-simd` or `baseline-seq`).
pub fn run_baseline(
    weights: &WeightTensor,
    inputs: &InputTensor,
    spec: &ConvSpec,
    profile: &CostProfile,
) -> Result<RunReport> {
    require_raw(weights)?;
    let (accel, mac): (_, fn(Block, Block) -> CfuResult) = match profile.mac_model {
        Accelerator::BaselineSimd => (Accelerator::BaselineSimd, cfu::simd_mac),
        Accelerator::BaselineSeq => (Accelerator::BaselineSeq, cfu::seq_mac_baseline),
        other => {
            return Err(Error::Contract(format!(
                "baseline kernel needs a baseline MAC model, got {other}"
            )))
        }
    };
    let (out, n) = execute(weights, inputs, spec, Loop::Dense(mac), profile)?;
    let total = total_blocks(weights, spec);
    Ok(report(accel, out, total, n, n.cycles))
}

/// Lookahead-skipping loop with the single-cycle 7-bit MAC. Speedup is
/// reported against `baseline-simd` under the same loop overhead.
pub fn run_sssa(
    weights: &WeightTensor,
    inputs: &InputTensor,
    spec: &ConvSpec,
    profile: &CostProfile,
) -> Result<RunReport> {
    require_encoded(weights)?;
    let (out, n) = execute(
        weights,
        inputs,
        spec,
        Loop::Skipping(cfu::sssa_mac),
        profile,
    )?;
    let total = total_blocks(weights, spec);
    let base = baseline_cycles(total, Accelerator::BaselineSimd, profile);
    Ok(report(Accelerator::Sssa, out, total, n, base))
}

/// Dense loop with the variable-cycle MAC; speedup against `baseline-seq`.
pub fn run_ussa(
    weights: &WeightTensor,
    inputs: &InputTensor,
    spec: &ConvSpec,
    profile: &CostProfile,
) -> Result<RunReport> {
    require_raw(weights)?;
    let (out, n) = execute(weights, inputs, spec, Loop::Dense(cfu::ussa_vcmac), profile)?;
    let total = total_blocks(weights, spec);
    let base = baseline_cycles(total, Accelerator::BaselineSeq, profile);
    Ok(report(Accelerator::Ussa, out, total, n, base))
}

/// Lookahead-skipping loop with the variable-cycle 7-bit MAC; speedup
/// against `baseline-seq`.
pub fn run_csa(
    weights: &WeightTensor,
    inputs: &InputTensor,
    spec: &ConvSpec,
    profile: &CostProfile,
) -> Result<RunReport> {
    require_encoded(weights)?;
    let (out, n) = execute(
        weights,
        inputs,
        spec,
        Loop::Skipping(cfu::csa_vcmac),
        profile,
    )?;
    let total = total_blocks(weights, spec);
    let base = baseline_cycles(total, Accelerator::BaselineSeq, profile);
    Ok(report(Accelerator::Csa, out, total, n, base))
}

/// Runs `accelerator`, taking the overhead knobs from `profile`.
pub fn run(
    accelerator: Accelerator,
    weights: &WeightTensor,
    inputs: &InputTensor,
    spec: &ConvSpec,
    profile: &CostProfile,
) -> Result<RunReport> {
    let profile = CostProfile {
        mac_model: accelerator,
        ..*profile
    };
    match accelerator {
        Accelerator::BaselineSimd | Accelerator::BaselineSeq => {
            run_baseline(weights, inputs, spec, &profile)
        }
        Accelerator::Sssa => run_sssa(weights, inputs, spec, &profile),
        Accelerator::Ussa => run_ussa(weights, inputs, spec, &profile),
        Accelerator::Csa => run_csa(weights, inputs, spec, &profile),
    }
}
