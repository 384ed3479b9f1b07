//! Representative-set selection and the `(d, δ)`-representativeness metric.
//!
//! All distances are compared squared, as exact `u128` values with 32
//! fractional bits.

mod dataset;
mod projection;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{one_hot, Dataset, DATASET_MAGIC};
pub use projection::{coin_flip_seed, jl_project, CoinShare, ProjectionMatrix};

use crate::numerics::{sqrt_q32, squared_distance, FixedScalar, FixedTensor, NumericError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectionError {
    #[error("k = {k} exceeds the {n} available points")]
    KTooLarge { k: usize, n: usize },
    #[error("no points to select from")]
    Empty,
    #[error("every point is in the representative set")]
    EmptyComplement,
    #[error("index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("revealed {0} does not match its commitment")]
    CommitmentMismatch(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

impl From<std::io::Error> for SelectionError {
    fn from(e: std::io::Error) -> Self {
        SelectionError::Io(e.to_string())
    }
}

/// Indices `I_R` of the chosen points, in selection order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepresentativeSet {
    pub indices: Vec<usize>,
}

impl RepresentativeSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self, SelectionError> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(SelectionError::IndexOutOfRange(i));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(SelectionError::Domain(format!("index {i} repeated")));
            }
        }
        Ok(Self { indices })
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    /// Indices of `0..n` not in the set, ascending.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        let mut member = vec![false; n];
        for &i in &self.indices {
            member[i] = true;
        }
        (0..n).filter(|&i| !member[i]).collect()
    }
}

/// Squared `d` with 32 fractional bits, comparable with [`squared_distance`].
pub fn squared_threshold(d: FixedScalar) -> u128 {
    let r = d.raw().unsigned_abs() as u128;
    r * r
}

/// For every point, squared distance to its nearest representative.
pub fn nearest_sq_distances(points: &[FixedTensor], rep: &RepresentativeSet) -> Vec<u128> {
    points
        .par_iter()
        .map(|p| {
            rep.indices
                .iter()
                .map(|&j| squared_distance(p.data(), points[j].data()))
                .min()
                .unwrap_or(u128::MAX)
        })
        .collect()
}

/// Nearest representative of `x` and its squared distance; ties go to the
/// earlier entry of `rep`.
pub fn nearest_representative(
    points: &[FixedTensor],
    rep: &RepresentativeSet,
    x: &FixedTensor,
) -> Option<(usize, u128)> {
    rep.indices
        .iter()
        .map(|&j| (j, squared_distance(x.data(), points[j].data())))
        .fold(None, |best: Option<(usize, u128)>, cand| match best {
            Some(b) if b.1 <= cand.1 => Some(b),
            _ => Some(cand),
        })
}

/// Greedy max-min selection starting from index 0. Each step adds the
/// unchosen point farthest from the chosen set, lowest index on ties.
pub fn k_center_greedy(points: &[FixedTensor], k: usize) -> Result<RepresentativeSet, SelectionError> {
    let n = points.len();
    if n == 0 {
        return Err(SelectionError::Empty);
    }
    if k > n {
        return Err(SelectionError::KTooLarge { k, n });
    }
    let shape = points[0].shape();
    if let Some(bad) = points.iter().find(|p| p.shape() != shape) {
        return Err(SelectionError::ShapeMismatch {
            expected: shape.to_vec(),
            found: bad.shape().to_vec(),
        });
    }
    let mut chosen = vec![false; n];
    let mut indices = Vec::with_capacity(k);
    let mut min_dist = vec![u128::MAX; n];
    let mut next = 0;
    while indices.len() < k {
        chosen[next] = true;
        indices.push(next);
        let centre = points[next].data();
        min_dist.par_iter_mut().zip(points).for_each(|(m, p)| {
            *m = (*m).min(squared_distance(p.data(), centre));
        });
        let best = (0..n)
            .filter(|&i| !chosen[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if min_dist[b] >= min_dist[i] => Some(b),
                _ => Some(i),
            });
        match best {
            Some(b) => next = b,
            None => break,
        }
    }
    Ok(RepresentativeSet { indices })
}

/// Outcome of checking Def. 1 on the full dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representativeness {
    pub holds: bool,
    /// Points whose nearest representative is at distance `>= d`.
    pub outliers: usize,
}

/// Largest outlier count allowed by ratio `δ` over `n` items.
pub fn tolerated(delta: f64, n: usize) -> usize {
    (delta * n as f64 + 1e-9).floor() as usize
}

pub fn representativeness(
    parent: &[FixedTensor],
    rep: &RepresentativeSet,
    d: FixedScalar,
    delta: f64,
) -> Result<Representativeness, SelectionError> {
    if d.raw() <= 0 || !(0.0..=1.0).contains(&delta) {
        return Err(SelectionError::Domain("need d > 0 and δ in [0, 1]".into()));
    }
    let threshold = squared_threshold(d);
    let outliers = nearest_sq_distances(parent, rep)
        .into_iter()
        .filter(|&s| s >= threshold)
        .count();
    Ok(Representativeness {
        holds: outliers <= tolerated(delta, parent.len()),
        outliers,
    })
}

/// Nearest-rank `(1 − δ)` quantile of the squared nearest-representative
/// distances over the points outside `rep`.
pub fn percentile_sq_distance(
    parent: &[FixedTensor],
    rep: &RepresentativeSet,
    delta: f64,
) -> Result<u128, SelectionError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(SelectionError::Domain("δ must lie in [0, 1]".into()));
    }
    let outside = rep.complement(parent.len());
    if outside.is_empty() {
        return Err(SelectionError::EmptyComplement);
    }
    let mut dists: Vec<u128> = outside
        .par_iter()
        .map(|&i| {
            nearest_representative(parent, rep, &parent[i])
                .map(|(_, s)| s)
                .unwrap_or(u128::MAX)
        })
        .collect();
    dists.sort_unstable();
    let n = dists.len();
    let rank = (((1.0 - delta) * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(dists[rank - 1])
}

/// The percentile distance `d'`, square-rooted and floored to Q16.16.
pub fn percentile_distance(
    parent: &[FixedTensor],
    rep: &RepresentativeSet,
    delta: f64,
) -> Result<FixedScalar, SelectionError> {
    Ok(sqrt_q32(percentile_sq_distance(parent, rep, delta)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(coords: &[[f64; 2]]) -> Vec<FixedTensor> {
        coords
            .iter()
            .map(|c| FixedTensor::from_f64(vec![2], c).unwrap())
            .collect()
    }

    #[test]
    fn k_center_basics() {
        let square = pts(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(k_center_greedy(&square, 1).unwrap().indices, vec![0]);
        assert_eq!(k_center_greedy(&square, 2).unwrap().indices, vec![0, 2]);
        assert_eq!(k_center_greedy(&square, 4).unwrap().indices, vec![0, 2, 1, 3]);
        assert_eq!(
            k_center_greedy(&square, 5),
            Err(SelectionError::KTooLarge { k: 5, n: 4 })
        );
    }

    #[test]
    fn duplicates_still_yield_distinct_indices() {
        let same = pts(&[[1.0, 1.0]; 3]);
        assert_eq!(k_center_greedy(&same, 3).unwrap().indices, vec![0, 1, 2]);
    }

    #[test]
    fn representativeness_edges() {
        let p = pts(&[[0.0, 0.0], [0.1, 0.0], [50.0, 50.0]]);
        let all = RepresentativeSet::new(vec![0, 1, 2], 3).unwrap();
        let r = representativeness(&p, &all, FixedScalar::EPSILON, 0.0).unwrap();
        assert_eq!((r.holds, r.outliers), (true, 0));
        let near = RepresentativeSet::new(vec![0], 3).unwrap();
        let r = representativeness(&p, &near, FixedScalar::ONE, 0.0).unwrap();
        assert_eq!((r.holds, r.outliers), (false, 1));
        assert!(representativeness(&p, &near, FixedScalar::ONE, 0.34).unwrap().holds);
    }

    #[test]
    fn percentile_nearest_rank() {
        let mut coords = vec![[0.0, 0.0]];
        coords.extend((1..=9).map(|i| [i as f64, 0.0]));
        let p = pts(&coords);
        let rep = RepresentativeSet::new(vec![0], 10).unwrap();
        let at = |delta| percentile_distance(&p, &rep, delta).unwrap().to_f64();
        assert_eq!(at(0.0), 9.0);
        assert_eq!(at(0.2), 8.0);
        assert_eq!(at(1.0), 1.0);
        let full = RepresentativeSet::new((0..10).collect(), 10).unwrap();
        assert_eq!(
            percentile_distance(&p, &full, 0.1),
            Err(SelectionError::EmptyComplement)
        );
    }

    #[test]
    fn rep_set_validation() {
        assert!(RepresentativeSet::new(vec![0, 0], 3).is_err());
        assert!(RepresentativeSet::new(vec![3], 3).is_err());
        assert_eq!(RepresentativeSet::new(vec![2, 0], 4).unwrap().complement(4), vec![1, 3]);
    }
}
