//! Shared fixtures for the kernel benchmarks.

use sparsecfu::analytics::{random_inputs, LayerSpec};
use sparsecfu::codec::{encode_kernel, int7_clamp};
use sparsecfu::workload::gen_combined;
use sparsecfu::{
    ConvSpec, InputTensor, SparsityConfig, SparsityMode, WeightTensor, DEFAULT_SKIP_CAP,
};

/// One benchmark layer, raw and encoded.
pub struct Fixture {
    pub raw: WeightTensor,
    pub encoded: WeightTensor,
    pub inputs: InputTensor,
    pub spec: ConvSpec,
}

impl Fixture {
    /// A 3x3, 64-in, 64-out layer over a 16x16 input with same padding.
    pub fn conv3x3(x_ss: f64, x_us: f64, seed: u64) -> Self {
        let layer = LayerSpec {
            input_height: 16,
            input_width: 16,
            padding: 1,
            ..LayerSpec::single_pixel(64, 3, 64)
        };
        let cfg = SparsityConfig::new(x_ss, x_us, seed, SparsityMode::ExactRatio);
        let raw = int7_clamp(&gen_combined(&layer.weight_dims(), &cfg).expect("valid layer"));
        let encoded = encode_kernel(&raw, DEFAULT_SKIP_CAP).expect("int7 weights");
        let inputs = random_inputs(layer.input_dims(), seed).expect("valid dims");
        let spec = ConvSpec::infer(&raw, &inputs, layer.stride, layer.padding).expect("valid spec");
        Self {
            raw,
            encoded,
            inputs,
            spec,
        }
    }
}
