//! Dense multi-dimensional arrays of f32 values.
//!
//! All training state is binary32; verification oracles in the test suites
//! are free to shadow these in binary64.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("{op}: axis {axis} ({name}) mismatch: expected {expected}, got {got}")]
    Axis {
        op: &'static str,
        axis: usize,
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: expected rank {expected}, got shape {got:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("{op}: data length {len} does not match shape {shape:?}")]
    DataLen {
        op: &'static str,
        shape: Vec<usize>,
        len: usize,
    },
    #[error("{op}: window of width {width} exceeds input length {len}")]
    Window {
        op: &'static str,
        width: usize,
        len: usize,
    },
}

/// Dense row-major tensor with an explicit shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self, ShapeError> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(ShapeError::DataLen {
                op: "from_vec",
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterpret the same data under a new shape of equal volume.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, ShapeError> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(ShapeError::DataLen {
                op: "reshape",
                shape: shape.to_vec(),
                len: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checked in test/debug builds after every layer application.
    #[inline]
    pub(crate) fn debug_assert_finite(&self, context: &str) {
        debug_assert!(self.all_finite(), "non-finite values after {context}");
    }

    /// Serialize as `ndim: u32 LE, dims: u32 LE each, data: f32 LE`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`Tensor::to_bytes`]. Returns the tensor and bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), ShapeError> {
        let fail = || ShapeError::DataLen {
            op: "from_bytes",
            shape: vec![],
            len: bytes.len(),
        };
        let take4 = |at: usize| -> Result<[u8; 4], ShapeError> {
            bytes
                .get(at..at + 4)
                .map(|s| [s[0], s[1], s[2], s[3]])
                .ok_or_else(fail)
        };
        let ndim = u32::from_le_bytes(take4(0)?) as usize;
        let mut shape = Vec::with_capacity(ndim);
        let mut off = 4;
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take4(off)?) as usize);
            off += 4;
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f32::from_le_bytes(take4(off)?));
            off += 4;
        }
        Ok((Tensor { shape, data }, off))
    }
}
