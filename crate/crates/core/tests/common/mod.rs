#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsecfu::{ConvSpec, InputTensor, WeightTensor};

/// Straight scalar loop over `(oy, ox, o, kh, kw, c)`, written without any
/// of the library's indexing helpers.
pub fn brute_force_conv(
    w_dims: [usize; 4],
    w: &[i8],
    x_dims: [usize; 3],
    x: &[i8],
    stride: usize,
    pad: usize,
) -> Vec<i32> {
    let [o_n, kh, kw, c_n] = w_dims;
    let [ih, iw, _] = x_dims;
    let oh = (ih + 2 * pad - kh) / stride + 1;
    let ow = (iw + 2 * pad - kw) / stride + 1;
    let mut out = vec![0i32; oh * ow * o_n];
    for oy in 0..oh {
        for ox in 0..ow {
            for o in 0..o_n {
                let mut acc: i64 = 0;
                for dy in 0..kh {
                    for dx in 0..kw {
                        let y = (oy * stride + dy) as i64 - pad as i64;
                        let xx = (ox * stride + dx) as i64 - pad as i64;
                        if y < 0 || xx < 0 || y >= ih as i64 || xx >= iw as i64 {
                            continue;
                        }
                        for c in 0..c_n {
                            let wi = o * kh * kw * c_n + dy * kw * c_n + dx * c_n + c;
                            let xi = (y as usize) * iw * c_n + (xx as usize) * c_n + c;
                            acc += w[wi] as i64 * x[xi] as i64;
                        }
                    }
                }
                out[(oy * ow + ox) * o_n + o] = acc as i32;
            }
        }
    }
    out
}

pub fn random_i8(rng: &mut ChaCha8Rng, n: usize, lo: i8, hi: i8) -> Vec<i8> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// A random layer with channels a multiple of four. Roughly half the weight
/// blocks and a fraction of individual weights are zeroed.
pub struct Layer {
    pub weights: WeightTensor,
    pub inputs: InputTensor,
    pub spec: ConvSpec,
}

pub fn random_layer(seed: u64, max_hw: usize, max_c: usize, max_o: usize) -> Layer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = 4 * rng.gen_range(1..=max_c / 4);
    let o = rng.gen_range(1..=max_o);
    let ih = rng.gen_range(1..=max_hw);
    let iw = rng.gen_range(1..=max_hw);
    let kh = rng.gen_range(1..=ih.min(3));
    let kw = rng.gen_range(1..=iw.min(3));
    let block_zero_p = rng.gen_range(0.0..0.9);
    let elem_zero_p = rng.gen_range(0.0..0.5);
    let mut w = Vec::with_capacity(o * kh * kw * c);
    for _ in 0..o * kh * kw * c / 4 {
        if rng.gen_bool(block_zero_p) {
            w.extend([0; 4]);
        } else {
            for _ in 0..4 {
                w.push(if rng.gen_bool(elem_zero_p) {
                    0
                } else {
                    rng.gen()
                });
            }
        }
    }
    let x = random_i8(&mut rng, ih * iw * c, i8::MIN, i8::MAX);
    let weights = WeightTensor::new(vec![o, kh, kw, c], w).unwrap();
    let inputs = InputTensor::new([ih, iw, c], x).unwrap();
    let spec = ConvSpec::valid(&weights, &inputs).unwrap();
    Layer {
        weights,
        inputs,
        spec,
    }
}

/// Counts consecutive all-zero blocks after block `b` by direct scanning.
pub fn scan_zero_run_after(row: &[i8], b: usize) -> usize {
    let blocks = row.len() / 4;
    let mut n = 0;
    let mut j = b + 1;
    while j < blocks && row[j * 4..j * 4 + 4].iter().all(|&v| v == 0) {
        n += 1;
        j += 1;
    }
    n
}
