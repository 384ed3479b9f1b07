use serde::{Deserialize, Serialize};

use super::{FixedScalar, NumericError};

/// Row-major N-dimensional array of Q16.16 scalars.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct FixedTensor {
    shape: Vec<usize>,
    data: Vec<FixedScalar>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<FixedScalar>,
}

impl TryFrom<RawTensor> for FixedTensor {
    type Error = NumericError;

    fn try_from(raw: RawTensor) -> Result<Self, NumericError> {
        FixedTensor::new(raw.shape, raw.data)
    }
}

impl FixedTensor {
    pub fn new(shape: Vec<usize>, data: Vec<FixedScalar>) -> Result<Self, NumericError> {
        // Dimensions are encoded as u32 in `to_bytes`.
        let expected = shape
            .iter()
            .try_fold(1usize, |acc, &d| u32::try_from(d).ok().and_then(|_| acc.checked_mul(d)));
        if expected != Some(data.len()) {
            return Err(NumericError::ShapeMismatch {
                expected: shape,
                found: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![FixedScalar::ZERO; len],
        }
    }

    pub fn from_raw(shape: Vec<usize>, raw: Vec<i32>) -> Result<Self, NumericError> {
        Self::new(shape, raw.into_iter().map(FixedScalar::from_raw).collect())
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64]) -> Result<Self, NumericError> {
        Self::new(shape, values.iter().map(|&v| FixedScalar::from_f64(v)).collect())
    }

    /// 1-D tensor.
    pub fn vector(values: Vec<FixedScalar>) -> Self {
        Self {
            shape: vec![values.len()],
            data: values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[FixedScalar] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [FixedScalar] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<FixedScalar> {
        self.data
    }

    pub fn raw(&self) -> impl Iterator<Item = i32> + '_ {
        self.data.iter().map(|v| v.raw())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, NumericError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NumericError::ShapeMismatch {
                expected: shape,
                found: self.shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn flatten(self) -> Self {
        let len = self.data.len();
        Self {
            shape: vec![len],
            data: self.data,
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, NumericError> {
        self.zip_with(other, FixedScalar::checked_add)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, NumericError> {
        self.zip_with(other, FixedScalar::checked_sub)
    }

    fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(FixedScalar, FixedScalar) -> Result<FixedScalar, NumericError>,
    ) -> Result<Self, NumericError> {
        if self.shape != other.shape {
            return Err(NumericError::ShapeMismatch {
                expected: self.shape.clone(),
                found: other.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Canonical byte encoding used for hashing and commitments:
    /// `ndim: u32 LE`, each dimension as `u32 LE`, then every element as `i32 LE`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.raw().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NumericError> {
        let malformed = || NumericError::Malformed("tensor encoding".into());
        let read_u32 = |at: usize| -> Result<u32, NumericError> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(malformed)
        };
        let ndim = read_u32(0)? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for k in 0..ndim {
            shape.push(read_u32(4 + 4 * k)? as usize);
        }
        let start = 4 + 4 * ndim;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(malformed)?;
        if bytes.len() != start + 4 * len {
            return Err(malformed());
        }
        let data = bytes[start..]
            .chunks_exact(4)
            .map(|c| FixedScalar::from_raw(i32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Ok(Self { shape, data })
    }
}

/// Squared Euclidean distance between two flattened tensors, with 32 fractional bits.
pub fn squared_distance(a: &[FixedScalar], b: &[FixedScalar]) -> u128 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = (x.raw() as i64 - y.raw() as i64).unsigned_abs();
            (diff as u128) * (diff as u128)
        })
        .sum()
}
