//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits nonzero if any fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsecfu::analytics::{ussa_c_observed, LayerSpec, SpeedupPoint};
use sparsecfu::cfu::{self, pack_rtype, unpack_rtype, InductionVar};
use sparsecfu::codec::{
    decode_weight, encode_kernel, encode_last_bits, extract_skip_code, int7_clamp,
};
use sparsecfu::kernel::{self, run_baseline, run_csa, run_sssa, run_ussa, visitation_trace};
use sparsecfu::tensor::dense_conv_oracle;
use sparsecfu::workload::{self, gen_semi_structured_aligned};
use sparsecfu::{
    analytics, Accelerator, Block, CostProfile, InputTensor, MacModel, RTypeInstruction, SkipCode,
    SparsityConfig, SparsityMode, WeightTensor,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// About 10^6 weights with a single output pixel, so every weight block is
/// issued exactly once.
fn million_weight_layer() -> LayerSpec {
    LayerSpec::single_pixel(64, 3, 1744)
}

fn layer_tensors(layer: &LayerSpec, w: WeightTensor, seed: u64) -> (WeightTensor, InputTensor) {
    let x = analytics::random_inputs(layer.input_dims(), seed).unwrap();
    (w, x)
}

// 1. Codec round trip
fn ac1_codec_round_trip() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    for w in -64i8..=63 {
        for s in 0..16u8 {
            let code = SkipCode::new(s).unwrap();
            let enc = encode_last_bits([w; 4], code).map_err(|e| e.to_string())?;
            for &b in &enc {
                ensure(decode_weight(b) == w, || {
                    format!("weight {w} code {s}: decoded {}", decode_weight(b))
                })?;
            }
            let back = extract_skip_code(Block::from_bytes(enc));
            ensure(back == code, || {
                format!("weight {w} code {s}: got code {back}")
            })?;
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(cases == 128 * 16, || format!("only {cases} cases"))?;
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{cases} (weight, code) pairs recovered exactly in {elapsed:?}"
    ))
}

// 2. Output equivalence against the dense oracle
fn ac2_output_equivalence() -> Outcome {
    let start = Instant::now();
    let p = CostProfile::default();
    let mut blocks = 0u64;
    for seed in 0..100u64 {
        let l = common::random_layer(seed, 8, 64, 64);
        let oracle =
            dense_conv_oracle(&l.weights, &l.inputs, &l.spec).map_err(|e| e.to_string())?;
        for model in [MacModel::BaselineSimd, MacModel::BaselineSeq] {
            let r = run_baseline(&l.weights, &l.inputs, &l.spec, &CostProfile::new(model)).unwrap();
            ensure(r.output == oracle, || {
                format!("seed {seed}: {model} differs from oracle")
            })?;
        }
        let r = run_ussa(&l.weights, &l.inputs, &l.spec, &p).unwrap();
        ensure(r.output == oracle, || {
            format!("seed {seed}: ussa differs from oracle")
        })?;
        blocks += r.total_blocks;

        let clamped = int7_clamp(&l.weights);
        let oracle7 = dense_conv_oracle(&clamped, &l.inputs, &l.spec).unwrap();
        let enc = encode_kernel(&clamped, 15).map_err(|e| e.to_string())?;
        let r = run_sssa(&enc, &l.inputs, &l.spec, &p).map_err(|e| e.to_string())?;
        ensure(r.output == oracle7, || {
            format!("seed {seed}: sssa differs from oracle")
        })?;
        let r = run_csa(&enc, &l.inputs, &l.spec, &p).map_err(|e| e.to_string())?;
        ensure(r.output == oracle7, || {
            format!("seed {seed}: csa differs from oracle")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "100 layers x 5 kernels ({blocks} blocks per kernel in total), bit-exact in {elapsed:?}"
    ))
}

// 3. USSA closed form
fn ac3_ussa_closed_form() -> Outcome {
    let layer = million_weight_layer();
    let mut worst: f64 = 0.0;
    let mut sims = Vec::new();
    for i in 1..=9 {
        let x = f64::from(i) / 10.0;
        let w = workload::gen_unstructured(
            &layer.weight_dims(),
            &SparsityConfig::new(0.0, x, 1000 + i as u64, SparsityMode::Iid),
        )
        .unwrap();
        ensure(w.len() >= 1_000_000, || {
            format!("layer has only {} weights", w.len())
        })?;
        let (w, xin) = layer_tensors(&layer, w, i as u64);
        let spec = sparsecfu::ConvSpec::valid(&w, &xin).unwrap();
        let r = run_ussa(&w, &xin, &spec, &CostProfile::default()).unwrap();
        let c_o = ussa_c_observed(x).unwrap();
        let closed = 4.0 * (1.0 - x) + x.powi(4);
        ensure((c_o - closed).abs() < 1e-12, || {
            format!("c_o({x}) = {c_o} != {closed}")
        })?;
        let err = rel_err(r.cycles_per_block(), c_o);
        worst = worst.max(err);
        ensure(err <= 0.01, || {
            format!(
                "x={x}: simulated {} vs c_o {c_o} ({:.3}%)",
                r.cycles_per_block(),
                err * 100.0
            )
        })?;
        sims.push((x, r.speedup_f64()));
    }
    // plotted observed speedups
    for (x, plotted) in [(0.5, 1.9394), (0.8, 3.3069)] {
        let s_o = SpeedupPoint::ussa(x).unwrap().s_o;
        ensure(rel_err(s_o, plotted) <= 0.01, || {
            format!("s_o({x}) = {s_o}, plotted {plotted}")
        })?;
        let sim = sims.iter().find(|(sx, _)| (sx - x).abs() < 1e-9).unwrap().1;
        ensure(rel_err(sim, plotted) <= 0.01, || {
            format!("simulated s_o({x}) = {sim}, plotted {plotted}")
        })?;
    }
    Ok(format!(
        "x=0.1..0.9 on 1,004,544-weight layers, worst deviation from c_o {:.3}%; s_o(0.5), s_o(0.8) within 1% of plot",
        worst * 100.0
    ))
}

// 4. SSSA analytical speedup
fn ac4_sssa_speedup() -> Outcome {
    let layer = LayerSpec::single_pixel(64, 3, 64);
    let mut parts = Vec::new();
    for (i, (x, expected)) in [
        (0.25, Ratio::new(4u64, 3)),
        (0.5, Ratio::from_integer(2)),
        (0.75, Ratio::from_integer(4)),
    ]
    .into_iter()
    .enumerate()
    {
        let raw = gen_semi_structured_aligned(
            &layer.weight_dims(),
            &SparsityConfig::new(x, 0.0, 40 + i as u64, SparsityMode::ExactRatio),
            15,
        )
        .map_err(|e| e.to_string())?;
        let (raw, xin) = layer_tensors(&layer, raw, 7);
        let spec = sparsecfu::ConvSpec::valid(&raw, &xin).unwrap();
        let enc = encode_kernel(&raw, 15).unwrap();
        let r = run_sssa(&enc, &xin, &spec, &CostProfile::default()).unwrap();
        ensure(r.speedup == expected, || {
            format!("x_ss={x}: speedup {} != {expected}", r.speedup)
        })?;

        let nonzero_blocks = raw
            .data()
            .chunks(4)
            .filter(|b| b.iter().any(|&v| v != 0))
            .count() as u64;
        ensure(r.executed_blocks == nonzero_blocks, || {
            format!(
                "x_ss={x}: executed {} blocks, {nonzero_blocks} are nonzero",
                r.executed_blocks
            )
        })?;
        for (row, visited) in raw.row_chunks().zip(visitation_trace(&enc).unwrap()) {
            let visited: BTreeSet<usize> = visited.into_iter().collect();
            for b in 0..row.len() / 4 {
                if !visited.contains(&b) {
                    ensure(row[b * 4..b * 4 + 4].iter().all(|&v| v == 0), || {
                        format!("x_ss={x}: skipped block {b} is not all-zero")
                    })?;
                }
            }
        }
        parts.push(format!("{x}->{}", r.speedup));
    }
    Ok(format!(
        "speedups {} (exact); every skipped block all-zero, executed = nonzero blocks",
        parts.join(", ")
    ))
}

/// Blocks the lookahead loop must land on, derived from the zero-run
/// structure alone: every nonzero block, plus inside each maximal zero run
/// the blocks at which a capped code runs out.
fn expected_visits(zero: &[bool], cap: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut b = 0;
    while b < zero.len() {
        if !zero[b] {
            out.insert(b);
            b += 1;
            continue;
        }
        let start = b;
        while b < zero.len() && zero[b] {
            b += 1;
        }
        let len = b - start;
        let stride = cap + 1;
        if start == 0 {
            // the loop starts on the first block
            out.extend((0..len).step_by(stride).map(|k| start + k));
        } else {
            out.extend((stride - 1..len).step_by(stride).map(|k| start + k));
        }
    }
    out
}

// 5. Increment semantics
fn ac5_increment_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut steps = 0u64;
    for layout in 0..10_000 {
        let n = rng.gen_range(1..=64);
        let density = rng.gen_range(0.0..1.0);
        let cap = rng.gen_range(1..=15u32);
        let zero: Vec<bool> = (0..n).map(|_| rng.gen_bool(density)).collect();
        let row: Vec<i8> = zero
            .iter()
            .flat_map(|&z| if z { [0; 4] } else { [1, -2, 0, 3] })
            .collect();
        let w = WeightTensor::new(vec![1, 1, 4 * n], row).unwrap();
        let enc = encode_kernel(&w, cap).unwrap();

        let mut visited = BTreeSet::new();
        let mut iv = InductionVar::START;
        while (iv.get() as usize) < 4 * n {
            let blk = Block::from_slice(&enc.data()[iv.get() as usize..]);
            let code = u32::from(extract_skip_code(blk).value());
            ensure(code <= cap, || {
                format!("layout {layout}: code {code} > cap {cap}")
            })?;
            let next = cfu::sssa_inc_indvar(blk, iv);
            ensure(next.get() == iv.get() + 4 * (code + 1), || {
                format!(
                    "layout {layout}: i {} -> {} with code {code}",
                    iv.get(),
                    next.get()
                )
            })?;
            visited.insert(iv.block());
            iv = next;
            steps += 1;
        }
        ensure(iv.get() as usize == 4 * n, || {
            format!("layout {layout}: loop ended at i={}", iv.get())
        })?;
        let expected = expected_visits(&zero, cap as usize);
        ensure(visited == expected, || {
            format!(
                "layout {layout} (cap {cap}, {zero:?}): visited {visited:?}, expected {expected:?}"
            )
        })?;
        let traced: BTreeSet<usize> = visitation_trace(&enc).unwrap()[0].iter().copied().collect();
        ensure(traced == visited, || {
            format!("layout {layout}: executor trace differs")
        })?;
    }
    Ok(format!(
        "10000 layouts, {steps} increments, all matched the zero-run scan"
    ))
}

// 6. USSA cycle bounds
fn ac6_ussa_cycle_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for pattern in 0u8..16 {
        for _ in 0..1000 {
            let mut w = [0i8; 4];
            for (k, slot) in w.iter_mut().enumerate() {
                if pattern >> k & 1 == 1 {
                    *slot = loop {
                        let v: i8 = rng.gen();
                        if v != 0 {
                            break v;
                        }
                    };
                }
            }
            let x: [i8; 4] = rng.gen();
            let r = cfu::ussa_vcmac(Block::from_bytes(w), Block::from_bytes(x));
            let nnz = pattern.count_ones();
            ensure(r.cycles == nnz.max(1), || {
                format!("pattern {pattern:04b}: {} cycles", r.cycles)
            })?;
            let expected_value: i32 = w.iter().zip(x).map(|(&a, b)| a as i32 * b as i32).sum();
            ensure(r.value == expected_value, || {
                format!("pattern {pattern:04b}: wrong value")
            })?;
        }
    }
    let zero = cfu::ussa_vcmac(Block::ZERO, Block::from_bytes([9; 4])).cycles;
    let dense = cfu::ussa_vcmac(Block::from_bytes([1, -1, 127, -128]), Block::ZERO).cycles;
    ensure(zero == 1 && dense == 4, || {
        format!("all-zero {zero}, dense {dense}")
    })?;
    Ok("16 zero patterns x 1000 magnitude draws: cycles = max(1, nnz)".into())
}

// 7. CSA composition
fn ac7_csa_composition() -> Outcome {
    let layer = million_weight_layer();
    let p = CostProfile::default();
    let run_all = |x_ss: f64, x_us: f64, seed: u64| -> Result<[kernel::RunReport; 3], String> {
        let raw = workload::gen_combined(
            &layer.weight_dims(),
            &SparsityConfig::new(x_ss, x_us, seed, SparsityMode::Iid),
        )
        .map_err(|e| e.to_string())?;
        let (raw, xin) = layer_tensors(&layer, raw, seed);
        let spec = sparsecfu::ConvSpec::valid(&raw, &xin).unwrap();
        let enc = encode_kernel(&raw, 15).map_err(|e| e.to_string())?;
        Ok([
            kernel::run(Accelerator::Csa, &enc, &xin, &spec, &p).unwrap(),
            kernel::run(Accelerator::Ussa, &raw, &xin, &spec, &p).unwrap(),
            kernel::run(Accelerator::BaselineSeq, &raw, &xin, &spec, &p).unwrap(),
        ])
    };
    for (i, (x_ss, x_us)) in [
        (0.0, 0.0),
        (0.25, 0.25),
        (0.5, 0.25),
        (0.75, 0.5),
        (0.3, 0.8),
        (0.9, 0.1),
    ]
    .into_iter()
    .enumerate()
    {
        let [csa, ussa, seq] = run_all(x_ss, x_us, 70 + i as u64)?;
        ensure(
            csa.cycles <= ussa.cycles && ussa.cycles <= seq.cycles,
            || {
                format!(
                    "({x_ss}, {x_us}): csa {} ussa {} seq {}",
                    csa.cycles, ussa.cycles, seq.cycles
                )
            },
        )?;
    }

    let [csa, _, _] = run_all(0.5, 0.25, 99)?;
    let pure_ss = workload::gen_semi_structured(
        &layer.weight_dims(),
        &SparsityConfig::new(0.5, 0.0, 98, SparsityMode::Iid),
    )
    .unwrap();
    let (pure_ss, xin) = layer_tensors(&layer, pure_ss, 98);
    let spec = sparsecfu::ConvSpec::valid(&pure_ss, &xin).unwrap();
    let sssa = run_sssa(&encode_kernel(&pure_ss, 15).unwrap(), &xin, &spec, &p).unwrap();
    let overall = 0.5 + 0.5 * 0.25;
    let pure_us = workload::gen_unstructured(
        &layer.weight_dims(),
        &SparsityConfig::new(0.0, overall, 97, SparsityMode::Iid),
    )
    .unwrap();
    let ussa = run_ussa(&pure_us, &xin, &spec, &p).unwrap();
    let (s_csa, s_sssa, s_ussa) = (csa.speedup_f64(), sssa.speedup_f64(), ussa.speedup_f64());
    ensure(s_csa > s_sssa && s_csa > s_ussa, || {
        format!("csa {s_csa:.4} vs sssa {s_sssa:.4}, ussa@{overall} {s_ussa:.4}")
    })?;
    Ok(format!(
        "cycle ordering holds on 6 (x_ss, x_us) mixes; at (0.5, 0.25) csa {s_csa:.3}x > sssa {s_sssa:.3}x, ussa@0.625 {s_ussa:.3}x"
    ))
}

// 8. R-type packing
fn ac8_rtype_packing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100_000 {
        let i = RTypeInstruction {
            opcode: rng.gen_range(0..128),
            rd: rng.gen_range(0..32),
            funct3: rng.gen_range(0..8),
            rs1: rng.gen_range(0..32),
            rs2: rng.gen_range(0..32),
            funct7: rng.gen_range(0..128),
        };
        let word = pack_rtype(&i).map_err(|e| e.to_string())?;
        ensure(unpack_rtype(word) == i, || {
            format!("{i:?} -> {word:#010x} did not round-trip")
        })?;
    }
    let zeroed = pack_rtype(&RTypeInstruction::custom0(0, 0, 0, 0, 0)).unwrap();
    ensure(zeroed == 0x0000_000B, || {
        format!("custom-0 word {zeroed:#010x}")
    })?;
    // words assembled by clang (riscv32) from `.insn r 0x0b, ...` and `add`/`sub`
    for (i, word) in [
        (RTypeInstruction::custom0(1, 0, 10, 11, 12), 0x02c5_850bu32),
        (RTypeInstruction::custom0(0x55, 3, 31, 1, 17), 0xab10_bf8b),
        (
            RTypeInstruction {
                opcode: 0x33,
                rd: 10,
                funct3: 0,
                rs1: 11,
                rs2: 12,
                funct7: 0,
            },
            0x00c5_8533,
        ),
        (
            RTypeInstruction {
                opcode: 0x33,
                rd: 5,
                funct3: 0,
                rs1: 6,
                rs2: 7,
                funct7: 0x20,
            },
            0x4073_02b3,
        ),
    ] {
        let packed = pack_rtype(&i).unwrap();
        ensure(packed == word, || {
            format!("{i:?}: {packed:#010x} != assembler {word:#010x}")
        })?;
    }
    Ok("100000 random field tuples round-trip; custom-0 zero word = 0x0000000b; assembler words match".into())
}

// 9. INT7 clamp
fn ac9_int7_clamp() -> Outcome {
    let all: Vec<i8> = (i8::MIN..=i8::MAX).collect();
    let t = WeightTensor::new(vec![1, 1, 256], all.clone()).unwrap();
    let c = int7_clamp(&t);
    for (&w, &v) in all.iter().zip(c.data()) {
        let expected = w.clamp(-64, 63);
        ensure(v == expected, || {
            format!("clamp({w}) = {v}, expected {expected}")
        })?;
    }
    ensure(c.is_int7_clamped(), || "result not tagged int7".into())?;
    Ok("all 256 INT8 values clamp to [-64, 63], in-range values unchanged".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 codec round trip", ac1_codec_round_trip),
        ("AC2 output equivalence vs oracle", ac2_output_equivalence),
        ("AC3 USSA closed form", ac3_ussa_closed_form),
        ("AC4 SSSA analytical speedup", ac4_sssa_speedup),
        ("AC5 increment semantics", ac5_increment_semantics),
        ("AC6 USSA cycle bounds", ac6_ussa_cycle_bounds),
        ("AC7 CSA composition", ac7_csa_composition),
        ("AC8 R-type packing", ac8_rtype_packing),
        ("AC9 INT7 clamp", ac9_int7_clamp),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.2?}]", start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{:.2?}]", start.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
