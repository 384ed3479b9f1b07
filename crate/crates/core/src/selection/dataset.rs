//! Labelled datasets and their binary container.
//!
//! Layout (integers little-endian):
//!
//! | bytes | content                                                        |
//! |-------|----------------------------------------------------------------|
//! | 4     | magic `PDED`                                                   |
//! | 4     | `u32` format version (1)                                       |
//! | 4     | `u32` manifest length `M`                                      |
//! | M     | JSON manifest `{"n", "feature_shape", "label_arity", "q_format"}` |
//! | rest  | `n` feature buffers then `n` one-hot label buffers, `i32` Q16.16 |

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SelectionError;
use crate::numerics::{FixedScalar, FixedTensor, Q_FORMAT};

pub const DATASET_MAGIC: &[u8; 4] = b"PDED";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub xs: Vec<FixedTensor>,
    /// One-hot label vectors.
    pub ys: Vec<FixedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    n: usize,
    feature_shape: Vec<usize>,
    label_arity: usize,
    q_format: String,
}

pub fn one_hot(class: usize, classes: usize) -> FixedTensor {
    let mut v = vec![FixedScalar::ZERO; classes];
    v[class] = FixedScalar::ONE;
    FixedTensor::vector(v)
}

impl Dataset {
    pub fn new(xs: Vec<FixedTensor>, ys: Vec<FixedTensor>) -> Result<Self, SelectionError> {
        if xs.len() != ys.len() {
            return Err(SelectionError::Malformed(format!(
                "{} features but {} labels",
                xs.len(),
                ys.len()
            )));
        }
        if let Some(first) = xs.first() {
            if xs.iter().any(|x| x.shape() != first.shape()) {
                return Err(SelectionError::Malformed("features differ in shape".into()));
            }
        }
        if let Some(first) = ys.first() {
            if ys.iter().any(|y| y.shape() != first.shape() || y.shape().len() != 1) {
                return Err(SelectionError::Malformed("labels must be equal-length vectors".into()));
            }
        }
        Ok(Self { xs, ys })
    }

    /// Builds one-hot labels from class indices.
    pub fn from_classes(xs: Vec<FixedTensor>, classes: &[usize], arity: usize) -> Result<Self, SelectionError> {
        if let Some(&bad) = classes.iter().find(|&&c| c >= arity) {
            return Err(SelectionError::Malformed(format!(
                "class {bad} out of range for {arity} classes"
            )));
        }
        Self::new(xs, classes.iter().map(|&c| one_hot(c, arity)).collect())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn feature_shape(&self) -> &[usize] {
        self.xs.first().map(FixedTensor::shape).unwrap_or(&[])
    }

    pub fn label_arity(&self) -> usize {
        self.ys.first().map(FixedTensor::len).unwrap_or(0)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            xs: indices.iter().map(|&i| self.xs[i].clone()).collect(),
            ys: indices.iter().map(|&i| self.ys[i].clone()).collect(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SelectionError> {
        let manifest = serde_json::to_vec(&Manifest {
            n: self.len(),
            feature_shape: self.feature_shape().to_vec(),
            label_arity: self.label_arity(),
            q_format: Q_FORMAT.to_string(),
        })
        .expect("manifest serializes");
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(manifest.len() as u32).to_le_bytes())?;
        w.write_all(&manifest)?;
        for t in self.xs.iter().chain(&self.ys) {
            let bytes: Vec<u8> = t.raw().flat_map(i32::to_le_bytes).collect();
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SelectionError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SelectionError> {
        let bad = |m: &str| SelectionError::Malformed(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != DATASET_MAGIC {
            return Err(bad("not a dataset file"));
        }
        if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != VERSION {
            return Err(bad("unsupported dataset version"));
        }
        let mlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let manifest: Manifest = bytes
            .get(12..12 + mlen)
            .ok_or_else(|| bad("truncated manifest"))
            .and_then(|m| serde_json::from_slice(m).map_err(|e| SelectionError::Malformed(e.to_string())))?;
        if manifest.q_format != Q_FORMAT {
            return Err(bad("unsupported q format"));
        }
        let flen: usize = manifest.feature_shape.iter().product();
        let body = &bytes[12 + mlen..];
        let expected = manifest
            .n
            .checked_mul(flen + manifest.label_arity)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| bad("size overflow"))?;
        if body.len() != expected {
            return Err(bad("buffer length does not match manifest"));
        }
        let mut values = body
            .chunks_exact(4)
            .map(|c| FixedScalar::from_raw(i32::from_le_bytes(c.try_into().unwrap())));
        let mut take = |shape: Vec<usize>, len: usize| {
            FixedTensor::new(shape, values.by_ref().take(len).collect()).expect("length checked above")
        };
        let xs = (0..manifest.n)
            .map(|_| take(manifest.feature_shape.clone(), flen))
            .collect();
        let ys = (0..manifest.n)
            .map(|_| take(vec![manifest.label_arity], manifest.label_arity))
            .collect();
        Self::new(xs, ys)
    }

    /// Parses rows of `feature_1,…,feature_d,class`. A non-numeric first row
    /// is treated as a header.
    pub fn from_csv(text: &str, arity: usize) -> Result<Self, SelectionError> {
        let mut xs = Vec::new();
        let mut classes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let row = match parsed {
                Ok(row) => row,
                Err(_) if lineno == 0 => continue,
                Err(e) => return Err(SelectionError::Malformed(format!("line {}: {e}", lineno + 1))),
            };
            let (label, features) = row
                .split_last()
                .filter(|(_, f)| !f.is_empty())
                .ok_or_else(|| SelectionError::Malformed(format!("line {}: need features and a label", lineno + 1)))?;
            if label.fract() != 0.0 || *label < 0.0 {
                return Err(SelectionError::Malformed(format!(
                    "line {}: label must be a class index",
                    lineno + 1
                )));
            }
            let values = features
                .iter()
                .map(|&v| FixedScalar::try_from_f64(v))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SelectionError::Malformed(format!("line {}: {e}", lineno + 1)))?;
            xs.push(FixedTensor::vector(values));
            classes.push(*label as usize);
        }
        Self::from_classes(xs, &classes, arity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let xs = vec![
            FixedTensor::from_f64(vec![2], &[0.5, -1.0]).unwrap(),
            FixedTensor::from_f64(vec![2], &[2.0, 3.25]).unwrap(),
        ];
        Dataset::from_classes(xs, &[1, 0], 3).unwrap()
    }

    #[test]
    fn container_round_trip() {
        let d = sample();
        let bytes = d.to_bytes();
        assert_eq!(&bytes[..4], DATASET_MAGIC);
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        assert!(Dataset::from_bytes(b"nope").is_err());
    }

    #[test]
    fn csv_import_with_header() {
        let d = Dataset::from_csv("x,y,label\n0.5,-1,1\n2,3.25,0\n", 3).unwrap();
        assert_eq!(d, sample());
        assert!(Dataset::from_csv("1,2,7\n", 3).is_err());
        assert!(Dataset::from_csv("1,2,0\n1,x,0\n", 3).is_err());
    }
}
