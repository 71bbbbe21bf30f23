//! Functional and cycle-cost models of three RISC-V custom functional units
//! (CFUs) that accelerate sparse integer convolutions:
//!
//! * **SSSA** skips whole 4-weight blocks of zeros using a 4-bit lookahead
//!   code stored in the LSBs of each encoded weight.
//! * **USSA** uses a variable-cycle MAC whose latency equals the number of
//!   nonzero weights in a block (minimum one cycle).
//! * **CSA** combines both.
//!
//! Every instruction model returns an exact value and a cycle count; the
//! kernel executors replay the convolution loop nest with those models and
//! report outputs plus cycle totals, which are checked bit-for-bit against a
//! dense reference convolution.
//!
//! Module map:
//!
//! * [`tensor`]: tensor containers, the dense oracle, channel padding.
//! * [`container`]: the `SCFU1` on-disk tensor format.
//! * [`codec`]: lookahead skip-code computation and bit-level weight encoding.
//! * [`cfu`]: instruction models and R-type word packing.
//! * [`kernel`]: baseline / SSSA / USSA / CSA kernel executors.
//! * [`workload`]: seeded sparse tensor generators and magnitude pruning.
//! * [`analytics`]: closed-form cycle models, Monte-Carlo checks, sweeps.

pub mod analytics;
pub mod cfu;
pub mod codec;
pub mod container;
pub mod error;
pub mod kernel;
pub mod tensor;
pub mod workload;

pub use cfu::{CfuResult, InductionVar, Instruction, RTypeInstruction, CUSTOM_0};
pub use codec::{Block, SkipCode, DEFAULT_SKIP_CAP, LITERAL_SKIP_CAP};
pub use error::{Error, Result};
pub use kernel::{Accelerator, CostProfile, MacModel, RunReport};
pub use tensor::{ConvSpec, InputTensor, OutputTensor, WeightTensor};
pub use workload::{Granularity, SparsityConfig, SparsityMode};
