//! The `SCFU1` tensor container.
//!
//! ```text
//! SCFU1\n
//! {"dims":[...],"dtype":"i8","layout":"rowmajor_c_innermost","encoded":false}\n
//! <prod(dims) raw signed bytes>
//! ```
//!
//! The header may carry an optional `"gen"` field naming the generator that
//! produced the tensor.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{InputTensor, WeightTensor};

pub const MAGIC: &str = "SCFU1";
pub const DTYPE: &str = "i8";
pub const LAYOUT: &str = "rowmajor_c_innermost";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub dims: Vec<usize>,
    pub dtype: String,
    pub layout: String,
    pub encoded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<String>,
}

impl Header {
    pub fn new(dims: Vec<usize>, encoded: bool) -> Self {
        Self {
            dims,
            dtype: DTYPE.into(),
            layout: LAYOUT.into(),
            encoded,
            gen: None,
        }
    }
}

/// A decoded container: header plus payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub header: Header,
    pub payload: Vec<i8>,
}

impl Container {
    pub fn from_weights(w: &WeightTensor, gen: Option<&str>) -> Self {
        let mut header = Header::new(w.dims().to_vec(), w.is_encoded());
        header.gen = gen.map(str::to_owned);
        Self {
            header,
            payload: w.data().to_vec(),
        }
    }

    pub fn from_inputs(x: &InputTensor, gen: Option<&str>) -> Self {
        let mut header = Header::new(x.dims().to_vec(), false);
        header.gen = gen.map(str::to_owned);
        Self {
            header,
            payload: x.data().to_vec(),
        }
    }

    /// Encoded tensors are tagged int7; raw ones are not assumed to be.
    pub fn into_weights(self) -> Result<WeightTensor> {
        let encoded = self.header.encoded;
        WeightTensor::with_flags(self.header.dims, self.payload, encoded, encoded)
    }

    pub fn into_inputs(self) -> Result<InputTensor> {
        if self.header.encoded {
            return Err(Error::Format("activation tensors cannot be encoded".into()));
        }
        let dims: [usize; 3] = self.header.dims.as_slice().try_into().map_err(|_| {
            Error::Shape(format!(
                "activation tensor must be 3D, got {:?}",
                self.header.dims
            ))
        })?;
        InputTensor::new(dims, self.payload)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = serde_json::to_string(&self.header)
            .map_err(|e| Error::Format(format!("cannot serialise header: {e}")))?;
        w.write_all(MAGIC.as_bytes())?;
        w.write_all(b"\n")?;
        w.write_all(header.as_bytes())?;
        w.write_all(b"\n")?;
        let bytes: Vec<u8> = self.payload.iter().map(|&b| b as u8).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 128);
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line != format!("{MAGIC}\n").as_bytes() {
            return Err(Error::Format(format!("missing '{MAGIC}' magic line")));
        }
        line.clear();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::Format("header line is not terminated".into()));
        }
        let header: Header = serde_json::from_slice(&line[..line.len() - 1])
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.dtype != DTYPE {
            return Err(Error::Format(format!(
                "unsupported dtype '{}'",
                header.dtype
            )));
        }
        if header.layout != LAYOUT {
            return Err(Error::Format(format!(
                "unsupported layout '{}'",
                header.layout
            )));
        }
        let expected: usize = header.dims.iter().product();
        let mut bytes = Vec::with_capacity(expected);
        r.read_to_end(&mut bytes)?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "payload has {} bytes, dims {:?} need {expected}",
                bytes.len(),
                header.dims
            )));
        }
        Ok(Self {
            header,
            payload: bytes.into_iter().map(|b| b as i8).collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}
