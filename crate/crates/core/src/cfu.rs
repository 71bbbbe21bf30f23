//! Bit-exact models of the custom instructions and the R-type word packer.
//!
//! Each MAC-class instruction takes two 32-bit operands (`rs1` = a block of
//! weights, `rs2` = four activations) and returns the dot product together
//! with the number of cycles the functional unit is busy. The CFU holds no
//! state; accumulation happens in the caller's register.

use std::fmt;

use crate::codec::{extract_skip_code, Block};
use crate::error::{Error, Result};

/// Major opcode reserved for custom instructions (`custom-0`).
pub const CUSTOM_0: u8 = 0b000_1011;

/// `funct7` value selecting the MAC datapath.
pub const FUNCT7_MAC: u8 = 0;
/// `funct7` value selecting the induction-variable increment.
pub const FUNCT7_INC_INDVAR: u8 = 1;

pub const SIMD_MAC_CYCLES: u32 = 1;
pub const SEQ_MAC_CYCLES: u32 = 4;
pub const SSSA_MAC_CYCLES: u32 = 1;
pub const INC_INDVAR_CYCLES: u32 = 1;

/// Fields of a standard RISC-V R-type instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RTypeInstruction {
    pub opcode: u8,
    pub rd: u8,
    pub funct3: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub funct7: u8,
}

impl RTypeInstruction {
    /// A `custom-0` instruction with the given function codes and registers.
    pub fn custom0(funct7: u8, funct3: u8, rd: u8, rs1: u8, rs2: u8) -> Self {
        Self {
            opcode: CUSTOM_0,
            rd,
            funct3,
            rs1,
            rs2,
            funct7,
        }
    }

    fn check(&self) -> Result<()> {
        let fields: [(&'static str, u8, u32); 6] = [
            ("opcode", self.opcode, 7),
            ("rd", self.rd, 5),
            ("funct3", self.funct3, 3),
            ("rs1", self.rs1, 5),
            ("rs2", self.rs2, 5),
            ("funct7", self.funct7, 7),
        ];
        for (field, value, bits) in fields {
            if u32::from(value) >> bits != 0 {
                return Err(Error::FieldRange {
                    field,
                    value: value.into(),
                    bits,
                });
            }
        }
        Ok(())
    }
}

/// Packs `funct7 | rs2 | rs1 | funct3 | rd | opcode` (MSB to LSB).
pub fn pack_rtype(instr: &RTypeInstruction) -> Result<u32> {
    instr.check()?;
    Ok(u32::from(instr.funct7) << 25
        | u32::from(instr.rs2) << 20
        | u32::from(instr.rs1) << 15
        | u32::from(instr.funct3) << 12
        | u32::from(instr.rd) << 7
        | u32::from(instr.opcode))
}

pub fn unpack_rtype(word: u32) -> RTypeInstruction {
    RTypeInstruction {
        opcode: (word & 0x7f) as u8,
        rd: ((word >> 7) & 0x1f) as u8,
        funct3: ((word >> 12) & 0x7) as u8,
        rs1: ((word >> 15) & 0x1f) as u8,
        rs2: ((word >> 20) & 0x1f) as u8,
        funct7: (word >> 25) as u8,
    }
}

/// Value and latency returned by an instruction model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CfuResult {
    pub value: i32,
    pub cycles: u32,
}

impl CfuResult {
    pub fn new(value: i32, cycles: u32) -> Self {
        Self { value, cycles }
    }
}

/// Inner-loop channel index; always a multiple of four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct InductionVar(u32);

impl InductionVar {
    pub const START: InductionVar = InductionVar(0);

    pub fn new(i: u32) -> Result<Self> {
        if !i.is_multiple_of(4) {
            return Err(Error::Contract(format!(
                "induction variable {i} is not a multiple of 4"
            )));
        }
        Ok(Self(i))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Index of the block this variable points at.
    pub fn block(self) -> usize {
        (self.0 / 4) as usize
    }
}

fn dot(w: [i8; 4], x: [i8; 4]) -> i32 {
    w.iter()
        .zip(x)
        .map(|(&w, x)| i32::from(w) * i32::from(x))
        .sum()
}

fn nonzero(w: [i8; 4]) -> u32 {
    w.iter().filter(|&&w| w != 0).count() as u32
}

/// Baseline 4-lane SIMD MAC, one cycle.
pub fn simd_mac(weights: Block, inputs: Block) -> CfuResult {
    CfuResult::new(dot(weights.bytes(), inputs.bytes()), SIMD_MAC_CYCLES)
}

/// Baseline single-multiplier sequential MAC: four cycles regardless of zeros.
pub fn seq_mac_baseline(weights: Block, inputs: Block) -> CfuResult {
    CfuResult::new(dot(weights.bytes(), inputs.bytes()), SEQ_MAC_CYCLES)
}

/// MAC over four decoded 7-bit weights; the skip bits never reach the multipliers.
pub fn sssa_mac(weights: Block, inputs: Block) -> CfuResult {
    CfuResult::new(dot(weights.decoded(), inputs.bytes()), SSSA_MAC_CYCLES)
}

/// Advances `iv` by `4 * (code + 1)`, skipping the zero blocks announced by
/// the block's lookahead code. Costs [`INC_INDVAR_CYCLES`].
pub fn sssa_inc_indvar(weights: Block, iv: InductionVar) -> InductionVar {
    let increment = (u32::from(extract_skip_code(weights).value()) + 1) << 2;
    InductionVar(iv.0 + increment)
}

/// Variable-cycle MAC on raw INT8 weights: one cycle per nonzero weight, and a
/// single cycle for an all-zero block.
pub fn ussa_vcmac(weights: Block, inputs: Block) -> CfuResult {
    let w = weights.bytes();
    CfuResult::new(dot(w, inputs.bytes()), nonzero(w).max(1))
}

/// Variable-cycle MAC on decoded 7-bit weights. Zero detection looks at the
/// decoded payloads, so skip bits do not count as nonzero weights.
pub fn csa_vcmac(weights: Block, inputs: Block) -> CfuResult {
    let w = weights.decoded();
    CfuResult::new(dot(w, inputs.bytes()), nonzero(w).max(1))
}

pub fn csa_inc_indvar(weights: Block, iv: InductionVar) -> InductionVar {
    sssa_inc_indvar(weights, iv)
}

/// The CFU designs that can be attached to the core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Design {
    BaselineSimd,
    BaselineSeq,
    Sssa,
    Ussa,
    Csa,
}

/// Every instruction exposed by the designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    SimdMac,
    SeqMac,
    SssaMac,
    SssaIncIndvar,
    UssaVcmac,
    CsaVcmac,
    CsaIncIndvar,
}

impl Instruction {
    pub const ALL: [Instruction; 7] = [
        Instruction::SimdMac,
        Instruction::SeqMac,
        Instruction::SssaMac,
        Instruction::SssaIncIndvar,
        Instruction::UssaVcmac,
        Instruction::CsaVcmac,
        Instruction::CsaIncIndvar,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Instruction::SimdMac => "cfu_simd_mac",
            Instruction::SeqMac => "cfu_seq_mac",
            Instruction::SssaMac => "sssa_mac",
            Instruction::SssaIncIndvar => "sssa_inc_indvar",
            Instruction::UssaVcmac => "ussa_vcmac",
            Instruction::CsaVcmac => "csa_vcmac",
            Instruction::CsaIncIndvar => "csa_inc_indvar",
        }
    }

    pub fn design(self) -> Design {
        match self {
            Instruction::SimdMac => Design::BaselineSimd,
            Instruction::SeqMac => Design::BaselineSeq,
            Instruction::SssaMac | Instruction::SssaIncIndvar => Design::Sssa,
            Instruction::UssaVcmac => Design::Ussa,
            Instruction::CsaVcmac | Instruction::CsaIncIndvar => Design::Csa,
        }
    }

    pub fn funct7(self) -> u8 {
        match self {
            Instruction::SssaIncIndvar | Instruction::CsaIncIndvar => FUNCT7_INC_INDVAR,
            _ => FUNCT7_MAC,
        }
    }

    pub fn funct3(self) -> u8 {
        0
    }

    /// Instruction with all register fields zeroed.
    pub fn template(self) -> RTypeInstruction {
        self.with_registers(0, 0, 0)
    }

    pub fn with_registers(self, rd: u8, rs1: u8, rs2: u8) -> RTypeInstruction {
        RTypeInstruction::custom0(self.funct7(), self.funct3(), rd, rs1, rs2)
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Routes an issued instruction to the selected design's datapath. Bit 0 of
/// `funct7` chooses MAC (0) or induction-variable increment (1); for the
/// increment `rs2` carries `i` and the result value is the updated `i`.
pub fn dispatch(design: Design, funct7: u8, rs1: u32, rs2: u32) -> Result<CfuResult> {
    let weights = Block(rs1);
    let inputs = Block(rs2);
    let inc = funct7 & 1 == 1;
    let result = match (design, inc) {
        (Design::BaselineSimd, false) => simd_mac(weights, inputs),
        (Design::BaselineSeq, false) => seq_mac_baseline(weights, inputs),
        (Design::Ussa, false) => ussa_vcmac(weights, inputs),
        (Design::Sssa, false) => sssa_mac(weights, inputs),
        (Design::Csa, false) => csa_vcmac(weights, inputs),
        (Design::Sssa | Design::Csa, true) => {
            let next = sssa_inc_indvar(weights, InductionVar::new(rs2)?);
            CfuResult::new(next.get() as i32, INC_INDVAR_CYCLES)
        }
        (d, true) => {
            return Err(Error::Contract(format!(
                "{d:?} has no induction-variable instruction (funct7={funct7:#x})"
            )))
        }
    };
    Ok(result)
}
