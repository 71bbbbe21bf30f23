//! Lookahead skip-code computation and the bit-level weight encoding.
//!
//! Each block of four int7 weights carries a 4-bit [`SkipCode`] spread over
//! the LSBs of its four bytes (byte `i` holds bit `i`). The remaining seven
//! bits of each byte are the weight in two's complement, so decoding is an
//! arithmetic shift right by one.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{WeightTensor, INT7_MAX, INT7_MIN};

/// Largest code representable in the four LSBs of a block.
pub const MAX_SKIP_CODE: u8 = 15;

/// Default skip cap: the full 4-bit code range.
pub const DEFAULT_SKIP_CAP: u32 = 15;

/// Cap matching the literal `skip_blocks < 4` loop guard of the original
/// encoding pseudo-code.
pub const LITERAL_SKIP_CAP: u32 = 4;

/// Four signed 8-bit weights packed little-endian into one 32-bit operand:
/// `w0` in bits 7:0 through `w3` in bits 31:24.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Block(pub u32);

impl Block {
    pub const ZERO: Block = Block(0);

    pub fn from_bytes(bytes: [i8; 4]) -> Self {
        Block(u32::from_le_bytes(bytes.map(|b| b as u8)))
    }

    /// Packs the first four elements of `s`.
    ///
    /// # Panics
    /// If `s` is shorter than four elements.
    pub fn from_slice(s: &[i8]) -> Self {
        Block::from_bytes([s[0], s[1], s[2], s[3]])
    }

    pub fn bytes(self) -> [i8; 4] {
        self.0.to_le_bytes().map(|b| b as i8)
    }

    pub fn word(self) -> u32 {
        self.0
    }

    /// Weights as seen by the MAC datapath of an encoded block.
    pub fn decoded(self) -> [i8; 4] {
        self.bytes().map(decode_weight)
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({:#010x} = {:?})", self.0, self.bytes())
    }
}

/// Number of all-zero blocks that immediately follow a block, 0..=15.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SkipCode(u8);

impl SkipCode {
    pub const ZERO: SkipCode = SkipCode(0);

    pub fn new(value: u8) -> Result<Self> {
        if value > MAX_SKIP_CODE {
            return Err(Error::FieldRange {
                field: "skip code",
                value: value.into(),
                bits: 4,
            });
        }
        Ok(SkipCode(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Bit `i` of the code, stored in the LSB of byte `i`.
    pub fn bit(self, i: usize) -> u8 {
        (self.0 >> i) & 1
    }
}

impl fmt::Display for SkipCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// True iff all four weights of the block are zero. With `encoded` set the
/// decoded 7-bit payloads are inspected and the skip bits ignored.
pub fn check_blk_skip(block: Block, encoded: bool) -> bool {
    if encoded {
        block.0 & 0xFEFE_FEFE == 0
    } else {
        block.0 == 0
    }
}

/// Embeds `skip_blocks` into four int7 weights: keep the sign bit, move bits
/// 5:0 to 6:1, and put bit `i` of the code into the LSB of weight `i`.
pub fn encode_last_bits(weights: [i8; 4], skip_blocks: SkipCode) -> Result<[i8; 4]> {
    let mut out = [0i8; 4];
    for (i, (&w, slot)) in weights.iter().zip(out.iter_mut()).enumerate() {
        if !(INT7_MIN..=INT7_MAX).contains(&w) {
            return Err(Error::WeightRange { index: i, value: w });
        }
        let raw = w as u8;
        let sign_bit = (raw >> 7) & 0b1;
        let skip_bit = skip_blocks.bit(i);
        let mut b = raw & 0b1011_1111;
        b = (b << 1) & 0b0111_1110;
        b |= skip_bit;
        b |= sign_bit << 7;
        *slot = b as i8;
    }
    Ok(out)
}

/// Recovers the int7 weight from an encoded byte (bits 7:1 as two's complement).
#[inline]
pub fn decode_weight(byte: i8) -> i8 {
    byte >> 1
}

/// Gathers the LSB of each byte lane into a 4-bit code.
#[inline]
pub fn extract_skip_code(block: Block) -> SkipCode {
    let w = block.0;
    let code = (w & 1) | ((w >> 7) & 0b10) | ((w >> 14) & 0b100) | ((w >> 21) & 0b1000);
    SkipCode(code as u8)
}

/// Skip codes for every block of one channel row: the count of consecutive
/// all-zero raw blocks after each block, clamped to `skip_cap`.
pub fn row_skip_codes(row: &[i8], skip_cap: u32) -> Result<Vec<SkipCode>> {
    check_cap(skip_cap)?;
    if !row.len().is_multiple_of(4) {
        return Err(Error::Shape(format!(
            "row of {} channels is not a whole number of blocks",
            row.len()
        )));
    }
    let zero: Vec<bool> = row
        .chunks_exact(4)
        .map(|b| check_blk_skip(Block::from_slice(b), false))
        .collect();
    let mut codes = vec![SkipCode::ZERO; zero.len()];
    // consecutive zero blocks starting right after the current block
    let mut run_after = 0u32;
    for b in (0..zero.len()).rev() {
        codes[b] = SkipCode(run_after.min(skip_cap) as u8);
        run_after = if zero[b] { run_after + 1 } else { 0 };
    }
    Ok(codes)
}

fn check_cap(skip_cap: u32) -> Result<()> {
    if !(1..=u32::from(MAX_SKIP_CODE)).contains(&skip_cap) {
        return Err(Error::SkipCap(skip_cap));
    }
    Ok(())
}

/// Encodes every block of every `(h, w)` channel row with its lookahead code.
/// Zero blocks are encoded too, so a row that starts with zeros chain-skips.
pub fn encode_kernel(weights: &WeightTensor, skip_cap: u32) -> Result<WeightTensor> {
    check_cap(skip_cap)?;
    if weights.is_encoded() {
        return Err(Error::Contract("kernel is already encoded".into()));
    }
    let c = weights.channels();
    if !c.is_multiple_of(4) {
        return Err(Error::Shape(format!(
            "channel count {c} is not a multiple of 4; pad channels first"
        )));
    }
    if let Some((index, &value)) = weights
        .data()
        .iter()
        .enumerate()
        .find(|(_, w)| !(INT7_MIN..=INT7_MAX).contains(*w))
    {
        return Err(Error::WeightRange { index, value });
    }

    let mut data = weights.data().to_vec();
    data.par_chunks_mut(c).try_for_each(|row| -> Result<()> {
        let codes = row_skip_codes(row, skip_cap)?;
        for (block, code) in row.chunks_exact_mut(4).zip(codes) {
            let enc = encode_last_bits([block[0], block[1], block[2], block[3]], code)?;
            block.copy_from_slice(&enc);
        }
        Ok(())
    })?;
    WeightTensor::with_flags(weights.dims().to_vec(), data, true, true)
}

/// Inverse of the payload part of [`encode_kernel`]; skip codes are dropped.
pub fn decode_kernel(weights: &WeightTensor) -> Result<WeightTensor> {
    if !weights.is_encoded() {
        return Err(Error::Contract("kernel is not encoded".into()));
    }
    let data = weights.data().iter().map(|&b| decode_weight(b)).collect();
    WeightTensor::with_flags(weights.dims().to_vec(), data, false, true)
}

/// Clamps every weight into [-64, 63]. Encoded tensors are already int7 and
/// are returned unchanged.
pub fn int7_clamp(weights: &WeightTensor) -> WeightTensor {
    if weights.is_encoded() {
        return weights.clone();
    }
    let data = weights
        .data()
        .iter()
        .map(|&w| w.clamp(INT7_MIN, INT7_MAX))
        .collect();
    WeightTensor::with_flags(weights.dims().to_vec(), data, false, true)
        .expect("clamped data satisfies the int7 tag")
}

/// One entry of the `--dump-codes` listing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeEntry {
    pub o: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub code: SkipCode,
}

/// Skip code of every block of an encoded kernel, in memory order.
pub fn dump_codes(weights: &WeightTensor) -> Result<Vec<CodeEntry>> {
    if !weights.is_encoded() {
        return Err(Error::Contract("kernel is not encoded".into()));
    }
    let [o, kh, kw, _] = weights.shape4();
    let mut out = Vec::with_capacity(weights.len() / 4);
    for oi in 0..o {
        for h in 0..kh {
            for w in 0..kw {
                for (b, blk) in weights.row(oi, h, w).chunks_exact(4).enumerate() {
                    out.push(CodeEntry {
                        o: oi,
                        h,
                        w,
                        c: b * 4,
                        code: extract_skip_code(Block::from_slice(blk)),
                    });
                }
            }
        }
    }
    Ok(out)
}
