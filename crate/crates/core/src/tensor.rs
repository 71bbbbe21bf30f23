//! Tensor containers and the dense reference convolution.
//!
//! All tensors are row-major with channels innermost, so four consecutive
//! weights along the input-channel axis are contiguous and form one block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive int7 range that encoded weights must respect.
pub const INT7_MIN: i8 = -64;
pub const INT7_MAX: i8 = 63;

fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

fn round_up_4(c: usize) -> usize {
    c.div_ceil(4) * 4
}

/// Convolution weights, `(H, W, C)` for a single filter or `(O, H, W, C)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightTensor {
    dims: Vec<usize>,
    data: Vec<i8>,
    encoded: bool,
    int7_clamped: bool,
}

impl WeightTensor {
    /// Builds a raw (unencoded) weight tensor.
    pub fn new(dims: Vec<usize>, data: Vec<i8>) -> Result<Self> {
        Self::with_flags(dims, data, false, false)
    }

    /// Builds a tensor with explicit `encoded` / `int7_clamped` tags, checking
    /// that the data honours them.
    pub fn with_flags(
        dims: Vec<usize>,
        data: Vec<i8>,
        encoded: bool,
        int7_clamped: bool,
    ) -> Result<Self> {
        if dims.len() != 3 && dims.len() != 4 {
            return Err(Error::Shape(format!(
                "weight tensor must be 3D (H,W,C) or 4D (O,H,W,C), got {} dims",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dimension in {dims:?}")));
        }
        if data.len() != product(&dims) {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {:?} (expected {})",
                data.len(),
                dims,
                product(&dims)
            )));
        }
        if int7_clamped && !encoded {
            if let Some((index, &value)) = data
                .iter()
                .enumerate()
                .find(|(_, w)| !(INT7_MIN..=INT7_MAX).contains(*w))
            {
                return Err(Error::WeightRange { index, value });
            }
        }
        Ok(Self {
            dims,
            data,
            encoded,
            int7_clamped: int7_clamped || encoded,
        })
    }

    /// Zero tensor of the given shape.
    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = product(&dims);
        Self::new(dims, vec![0; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<i8> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_encoded(&self) -> bool {
        self.encoded
    }

    pub fn is_int7_clamped(&self) -> bool {
        self.int7_clamped
    }

    /// `(O, H, W, C)`, with `O = 1` for a 3D tensor.
    pub fn shape4(&self) -> [usize; 4] {
        match *self.dims.as_slice() {
            [h, w, c] => [1, h, w, c],
            [o, h, w, c] => [o, h, w, c],
            _ => unreachable!("dims validated at construction"),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.shape4()[0]
    }

    pub fn kernel_height(&self) -> usize {
        self.shape4()[1]
    }

    pub fn kernel_width(&self) -> usize {
        self.shape4()[2]
    }

    pub fn channels(&self) -> usize {
        self.shape4()[3]
    }

    /// Number of rows along the channel axis, one per `(o, h, w)`.
    pub fn rows(&self) -> usize {
        let [o, h, w, _] = self.shape4();
        o * h * w
    }

    /// The channel row at `(o, h, w)`.
    pub fn row(&self, o: usize, h: usize, w: usize) -> &[i8] {
        let [_, kh, kw, c] = self.shape4();
        let start = ((o * kh + h) * kw + w) * c;
        &self.data[start..start + c]
    }

    /// Iterates over channel rows in `(o, h, w)` order.
    pub fn row_chunks(&self) -> std::slice::ChunksExact<'_, i8> {
        self.data.chunks_exact(self.channels())
    }
}

/// Activations laid out as `(height, width, channels)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputTensor {
    dims: [usize; 3],
    data: Vec<i8>,
}

impl InputTensor {
    pub fn new(dims: [usize; 3], data: Vec<i8>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero-sized dimension in {dims:?}")));
        }
        if data.len() != product(&dims) {
            return Err(Error::Shape(format!(
                "input length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn height(&self) -> usize {
        self.dims[0]
    }

    pub fn width(&self) -> usize {
        self.dims[1]
    }

    pub fn channels(&self) -> usize {
        self.dims[2]
    }

    /// Channel vector at a spatial position, `None` when it lies in the padding.
    pub fn pixel(&self, y: isize, x: isize) -> Option<&[i8]> {
        if y < 0 || x < 0 || y as usize >= self.dims[0] || x as usize >= self.dims[1] {
            return None;
        }
        let c = self.dims[2];
        let start = (y as usize * self.dims[1] + x as usize) * c;
        Some(&self.data[start..start + c])
    }
}

/// 32-bit accumulators laid out as `(output_height, output_width, out_channels)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputTensor {
    dims: [usize; 3],
    data: Vec<i32>,
}

impl OutputTensor {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0; product(&dims)],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn get(&self, oy: usize, ox: usize, o: usize) -> i32 {
        self.data[(oy * self.dims[1] + ox) * self.dims[2] + o]
    }

    pub(crate) fn set(&mut self, oy: usize, ox: usize, o: usize, v: i32) {
        let i = (oy * self.dims[1] + ox) * self.dims[2] + o;
        self.data[i] = v;
    }
}

/// Loop bounds of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub output_height: usize,
    pub output_width: usize,
    pub out_channels: usize,
    pub in_channels: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Derives output dimensions from the tensors, stride and padding.
    pub fn infer(
        weights: &WeightTensor,
        inputs: &InputTensor,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Shape("stride must be positive".into()));
        }
        let [o, kh, kw, c] = weights.shape4();
        if inputs.channels() != c {
            return Err(Error::Shape(format!(
                "input has {} channels, weights expect {c}",
                inputs.channels()
            )));
        }
        let ph = inputs.height() + 2 * padding;
        let pw = inputs.width() + 2 * padding;
        if ph < kh || pw < kw {
            return Err(Error::Shape(format!(
                "kernel {kh}x{kw} larger than padded input {ph}x{pw}"
            )));
        }
        Ok(Self {
            output_height: (ph - kh) / stride + 1,
            output_width: (pw - kw) / stride + 1,
            out_channels: o,
            in_channels: c,
            stride,
            padding,
        })
    }

    /// Stride 1, no padding.
    pub fn valid(weights: &WeightTensor, inputs: &InputTensor) -> Result<Self> {
        Self::infer(weights, inputs, 1, 0)
    }

    /// Checks that the conv spec agrees with the tensors it will run on.
    pub fn check(&self, weights: &WeightTensor, inputs: &InputTensor) -> Result<()> {
        let expected = Self::infer(weights, inputs, self.stride, self.padding)?;
        if expected != *self {
            return Err(Error::Shape(format!(
                "conv spec {self:?} inconsistent with tensors (expected {expected:?})"
            )));
        }
        Ok(())
    }

    /// Checks the block-ISA requirement that channels come in whole words.
    pub fn check_blocked(&self) -> Result<()> {
        if self.in_channels == 0 || !self.in_channels.is_multiple_of(4) {
            return Err(Error::Shape(format!(
                "in_channels = {} is not a positive multiple of 4; pad channels first",
                self.in_channels
            )));
        }
        Ok(())
    }

    pub fn output_dims(&self) -> [usize; 3] {
        [self.output_height, self.output_width, self.out_channels]
    }

    /// Input coordinate of kernel tap `k` for output coordinate `out`.
    pub(crate) fn tap(&self, out: usize, k: usize) -> isize {
        (out * self.stride + k) as isize - self.padding as isize
    }
}

/// Exact integer convolution used as the correctness reference for every
/// accelerated kernel. Accumulates in 32 bits with two's-complement
/// wrap-around (never saturates).
pub fn dense_conv_oracle(
    weights: &WeightTensor,
    inputs: &InputTensor,
    spec: &ConvSpec,
) -> Result<OutputTensor> {
    if weights.is_encoded() {
        return Err(Error::Contract(
            "dense oracle needs raw weights; decode the kernel first".into(),
        ));
    }
    spec.check(weights, inputs)?;
    let [_, kh, kw, _] = weights.shape4();
    let mut out = OutputTensor::zeros(spec.output_dims());
    for oy in 0..spec.output_height {
        for ox in 0..spec.output_width {
            for o in 0..spec.out_channels {
                let mut acc = 0i32;
                for h in 0..kh {
                    for w in 0..kw {
                        let Some(px) = inputs.pixel(spec.tap(oy, h), spec.tap(ox, w)) else {
                            continue;
                        };
                        for (&wt, &x) in weights.row(o, h, w).iter().zip(px) {
                            acc = acc.wrapping_add(i32::from(wt) * i32::from(x));
                        }
                    }
                }
                out.set(oy, ox, o, acc);
            }
        }
    }
    Ok(out)
}

/// Rounds the channel dimension up to a multiple of four with zero fill.
pub trait PadChannels: Sized {
    fn pad_channels_to_multiple_of_4(&self) -> Self;
}

fn pad_rows(data: &[i8], c: usize) -> Vec<i8> {
    let padded = round_up_4(c);
    if padded == c {
        return data.to_vec();
    }
    let mut out = Vec::with_capacity(data.len() / c * padded);
    for row in data.chunks_exact(c) {
        out.extend_from_slice(row);
        out.resize(out.len() + padded - c, 0);
    }
    out
}

impl PadChannels for WeightTensor {
    fn pad_channels_to_multiple_of_4(&self) -> Self {
        let c = self.channels();
        let mut dims = self.dims.clone();
        *dims.last_mut().expect("non-empty dims") = round_up_4(c);
        Self {
            dims,
            data: pad_rows(&self.data, c),
            encoded: self.encoded,
            int7_clamped: self.int7_clamped,
        }
    }
}

impl PadChannels for InputTensor {
    fn pad_channels_to_multiple_of_4(&self) -> Self {
        let c = self.channels();
        Self {
            dims: [self.dims[0], self.dims[1], round_up_4(c)],
            data: pad_rows(&self.data, c),
        }
    }
}
