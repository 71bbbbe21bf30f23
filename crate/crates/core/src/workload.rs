//! Seeded generators for sparse weight tensors and a magnitude pruner.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with
//! `seed_from_u64(seed)`, consumed in a fixed order (masks first, then
//! nonzero magnitudes in linear index order). The generator identity is
//! recorded as [`GENERATOR_ID`] in SCFU1 headers.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::WeightTensor;

pub const GENERATOR_ID: &str = "chacha8/rand-0.8";

/// How sparsity fractions are realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SparsityMode {
    /// Every element (or block) is zero independently with the given probability.
    #[default]
    Iid,
    /// Exactly `round(x * n)` zeros, placed uniformly at random.
    ExactRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityConfig {
    /// Unstructured zero fraction, applied inside surviving blocks.
    pub x_us: f64,
    /// Fraction of all-zero 4-blocks.
    pub x_ss: f64,
    pub seed: u64,
    pub mode: SparsityMode,
}

impl SparsityConfig {
    pub fn new(x_ss: f64, x_us: f64, seed: u64, mode: SparsityMode) -> Self {
        Self {
            x_us,
            x_ss,
            seed,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction(self.x_us)?;
        check_fraction(self.x_ss)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn check_fraction(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Fraction(x));
    }
    Ok(())
}

fn count_for(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Uniform draw from `[-64, -1] ∪ [1, 63]`.
fn nonzero_int7(rng: &mut impl Rng) -> i8 {
    let r: i8 = rng.gen_range(0..127);
    if r < 64 {
        r - 64
    } else {
        r - 63
    }
}

/// Selects which of `n` items are zeroed.
fn zero_mask(rng: &mut impl Rng, n: usize, fraction: f64, mode: SparsityMode) -> Vec<bool> {
    match mode {
        SparsityMode::Iid => (0..n).map(|_| rng.gen_bool(fraction)).collect(),
        SparsityMode::ExactRatio => {
            let mut mask = vec![false; n];
            for i in index::sample(rng, n, count_for(fraction, n)) {
                mask[i] = true;
            }
            mask
        }
    }
}

fn materialise(rng: &mut impl Rng, dims: &[usize], zero: &[bool]) -> Result<WeightTensor> {
    let data = zero
        .iter()
        .map(|&z| if z { 0 } else { nonzero_int7(rng) })
        .collect();
    WeightTensor::with_flags(dims.to_vec(), data, false, true)
}

fn blocked_len(dims: &[usize]) -> Result<usize> {
    match dims.last() {
        Some(&c) if c > 0 && c % 4 == 0 => Ok(dims.iter().product::<usize>() / 4),
        _ => Err(Error::Shape(format!(
            "channel dimension of {dims:?} must be a positive multiple of 4"
        ))),
    }
}

/// Unstructured sparsity with zero fraction `cfg.x_us`.
pub fn gen_unstructured(dims: &[usize], cfg: &SparsityConfig) -> Result<WeightTensor> {
    cfg.validate()?;
    let n = dims.iter().product();
    let mut rng = cfg.rng();
    let mask = zero_mask(&mut rng, n, cfg.x_us, cfg.mode);
    materialise(&mut rng, dims, &mask)
}

/// 4:4 block sparsity with zero-block fraction `cfg.x_ss`; surviving blocks are dense.
pub fn gen_semi_structured(dims: &[usize], cfg: &SparsityConfig) -> Result<WeightTensor> {
    gen_combined(dims, &SparsityConfig { x_us: 0.0, ..*cfg })
}

/// Block mask (`x_ss`) first, then an element mask (`x_us`) over the
/// elements of surviving blocks.
pub fn gen_combined(dims: &[usize], cfg: &SparsityConfig) -> Result<WeightTensor> {
    cfg.validate()?;
    let blocks = blocked_len(dims)?;
    let mut rng = cfg.rng();
    let block_zero = zero_mask(&mut rng, blocks, cfg.x_ss, cfg.mode);
    element_mask_and_fill(&mut rng, dims, &block_zero, cfg)
}

fn element_mask_and_fill(
    rng: &mut impl Rng,
    dims: &[usize],
    block_zero: &[bool],
    cfg: &SparsityConfig,
) -> Result<WeightTensor> {
    let n = block_zero.len() * 4;
    let surviving: Vec<usize> = (0..n).filter(|i| !block_zero[i / 4]).collect();
    let elem_zero = zero_mask(rng, surviving.len(), cfg.x_us, cfg.mode);
    let mut zero: Vec<bool> = (0..n).map(|i| block_zero[i / 4]).collect();
    for (&i, z) in surviving.iter().zip(elem_zero) {
        zero[i] = z;
    }
    materialise(rng, dims, &zero)
}

/// Exactly `round(x_ss * blocks)` zero blocks, placed so that the lookahead
/// loop never lands on one: each channel row starts with a nonzero block and
/// no zero run is longer than `skip_cap`. Zero blocks are spread over rows as
/// evenly as possible (remainders go to random rows) and then dropped into
/// random gaps after the nonzero blocks of the row. `cfg.mode` only affects
/// the element mask.
pub fn gen_semi_structured_aligned(
    dims: &[usize],
    cfg: &SparsityConfig,
    skip_cap: u32,
) -> Result<WeightTensor> {
    gen_combined_aligned(dims, &SparsityConfig { x_us: 0.0, ..*cfg }, skip_cap)
}

/// [`gen_combined`] with the block mask of [`gen_semi_structured_aligned`].
pub fn gen_combined_aligned(
    dims: &[usize],
    cfg: &SparsityConfig,
    skip_cap: u32,
) -> Result<WeightTensor> {
    cfg.validate()?;
    if !(1..=15).contains(&skip_cap) {
        return Err(Error::SkipCap(skip_cap));
    }
    let blocks = blocked_len(dims)?;
    let mut rng = cfg.rng();
    let block_zero = aligned_block_mask(&mut rng, dims, blocks, cfg.x_ss, skip_cap)?;
    element_mask_and_fill(&mut rng, dims, &block_zero, cfg)
}

fn aligned_block_mask(
    rng: &mut impl Rng,
    dims: &[usize],
    blocks: usize,
    x_ss: f64,
    skip_cap: u32,
) -> Result<Vec<bool>> {
    let row_blocks = dims[dims.len() - 1] / 4;
    let rows = blocks / row_blocks;
    let zeros = count_for(x_ss, blocks);
    let cap = skip_cap as usize;

    let mut per_row = vec![zeros / rows; rows];
    for r in index::sample(rng, rows, zeros % rows) {
        per_row[r] += 1;
    }
    let mut mask = Vec::with_capacity(blocks);
    for k in per_row {
        let nonzero = row_blocks - k;
        if nonzero == 0 || k > nonzero * cap {
            return Err(Error::Contract(format!(
                "cannot place {k} zero blocks in a row of {row_blocks} with skip cap {skip_cap}"
            )));
        }
        let mut gaps = vec![0usize; nonzero];
        let mut open: Vec<usize> = (0..nonzero).collect();
        for _ in 0..k {
            let slot = rng.gen_range(0..open.len());
            let g = open[slot];
            gaps[g] += 1;
            if gaps[g] == cap {
                open.swap_remove(slot);
            }
        }
        for g in gaps {
            mask.push(false);
            mask.extend(std::iter::repeat_n(true, g));
        }
    }
    Ok(mask)
}

/// Pruning granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    Element,
    Block4,
}

/// Zeroes exactly `round(target * n)` elements (smallest `|w|`) or 4-blocks
/// (smallest L1 norm). Ties go to the lowest linear index first.
pub fn magnitude_prune(
    weights: &WeightTensor,
    target: f64,
    granularity: Granularity,
) -> Result<WeightTensor> {
    check_fraction(target)?;
    if weights.is_encoded() {
        return Err(Error::Contract("cannot prune an encoded kernel".into()));
    }
    let mut data = weights.data().to_vec();
    match granularity {
        Granularity::Element => {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.sort_by_key(|&i| (data[i].unsigned_abs(), i));
            for i in order.into_iter().take(count_for(target, data.len())) {
                data[i] = 0;
            }
        }
        Granularity::Block4 => {
            let blocks = blocked_len(weights.dims())?;
            let l1 = |b: usize| -> u32 {
                data[b * 4..b * 4 + 4]
                    .iter()
                    .map(|w| u32::from(w.unsigned_abs()))
                    .sum()
            };
            let mut order: Vec<(u32, usize)> = (0..blocks).map(|b| (l1(b), b)).collect();
            order.sort_unstable();
            for (_, b) in order.into_iter().take(count_for(target, blocks)) {
                data[b * 4..b * 4 + 4].fill(0);
            }
        }
    }
    WeightTensor::with_flags(
        weights.dims().to_vec(),
        data,
        false,
        weights.is_int7_clamped(),
    )
}

/// Fraction of zero weights.
pub fn zero_fraction(weights: &WeightTensor) -> f64 {
    weights.data().iter().filter(|&&w| w == 0).count() as f64 / weights.len() as f64
}
