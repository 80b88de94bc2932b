//! Assembly of joint samples from independently simulated levels.
//!
//! Each level contributes a `(f_1/f_l) x N` matrix of sample paths in common
//! units. The stacked sample concatenates them, keeping whatever dependence the
//! levels already carry. The ranked sample sorts every row ascending, giving a
//! comonotonic coupling in which column `i` holds the `i/N` quantile of every
//! node. The permuted sample shuffles every row independently.

use std::fmt;

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hierarchy::HierarchySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Stacked,
    Ranked,
    Permuted,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Stacked, Scheme::Ranked, Scheme::Permuted];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Stacked => "stacked",
            Scheme::Ranked => "ranked",
            Scheme::Permuted => "permuted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stacked" => Some(Scheme::Stacked),
            "ranked" => Some(Scheme::Ranked),
            "permuted" => Some(Scheme::Permuted),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Joint sample paths for the nodes of one level.
#[derive(Debug, Clone)]
pub struct LevelSample {
    level: usize,
    matrix: DMatrix<f64>,
    origin: Option<DateTime<Utc>>,
}

impl LevelSample {
    pub fn new(level: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() < 2 {
            return Err(Error::TooFewSamples {
                required: 2,
                actual: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        Ok(Self {
            level,
            matrix,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: DateTime<Utc>) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn origin(&self) -> Option<DateTime<Utc>> {
        self.origin
    }

    pub fn samples(&self) -> usize {
        self.matrix.ncols()
    }
}

/// An `M x N` joint sample; row `i` is flat node `i`.
#[derive(Debug, Clone)]
pub struct JointSample {
    matrix: DMatrix<f64>,
    scheme: Scheme,
    hierarchy: HierarchySpec,
    seed: Option<u64>,
}

impl JointSample {
    /// Wraps an existing matrix as a stacked sample.
    pub fn from_matrix(matrix: DMatrix<f64>, hierarchy: &HierarchySpec) -> Result<Self> {
        if matrix.nrows() != hierarchy.nodes() {
            return Err(Error::DimensionMismatch(format!(
                "joint sample has {} rows, hierarchy has {} nodes",
                matrix.nrows(),
                hierarchy.nodes()
            )));
        }
        if matrix.ncols() == 0 {
            return Err(Error::EmptySample);
        }
        Ok(Self {
            matrix,
            scheme: Scheme::Stacked,
            hierarchy: hierarchy.clone(),
            seed: None,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn hierarchy(&self) -> &HierarchySpec {
        &self.hierarchy
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn samples(&self) -> usize {
        self.matrix.ncols()
    }

    /// Builds this stacked sample's counterpart under `scheme`.
    pub fn assemble(&self, scheme: Scheme, seed: u64) -> Result<JointSample> {
        match scheme {
            Scheme::Stacked => {
                require_stacked(self)?;
                Ok(self.clone())
            }
            Scheme::Ranked => rank(self),
            Scheme::Permuted => permute(self, seed),
        }
    }
}

fn require_stacked(sample: &JointSample) -> Result<()> {
    if sample.scheme != Scheme::Stacked {
        return Err(Error::SchemeMismatch {
            expected: Scheme::Stacked.name(),
            actual: sample.scheme.name(),
        });
    }
    Ok(())
}

/// Concatenates one sample per level, in level order.
pub fn stack(levels: &[LevelSample], h: &HierarchySpec) -> Result<JointSample> {
    let mut ordered: Vec<Option<&LevelSample>> = vec![None; h.levels()];
    for sample in levels {
        h.check_level(sample.level)?;
        ordered[sample.level] = Some(sample);
    }
    let ordered: Vec<&LevelSample> = ordered
        .into_iter()
        .enumerate()
        .map(|(level, s)| s.ok_or(Error::MissingLevel(level)))
        .collect::<Result<_>>()?;

    let n = ordered[0].samples();
    for sample in &ordered {
        if sample.samples() != n {
            return Err(Error::ColumnMismatch {
                expected: n,
                actual: sample.samples(),
            });
        }
        let expected = h.nodes_in_level(sample.level);
        if sample.matrix.nrows() != expected {
            return Err(Error::RowCountMismatch {
                level: sample.level,
                expected,
                actual: sample.matrix.nrows(),
            });
        }
    }

    let mut matrix = DMatrix::zeros(h.nodes(), n);
    for sample in ordered {
        let offset = h.level_offset(sample.level);
        matrix
            .rows_mut(offset, sample.matrix.nrows())
            .copy_from(&sample.matrix);
    }
    Ok(JointSample {
        matrix,
        scheme: Scheme::Stacked,
        hierarchy: h.clone(),
        seed: None,
    })
}

/// Sorts every row of a stacked sample ascending.
pub fn rank(stacked: &JointSample) -> Result<JointSample> {
    require_stacked(stacked)?;
    let mut matrix = stacked.matrix.clone();
    let mut row = Vec::with_capacity(matrix.ncols());
    for r in 0..matrix.nrows() {
        row.clear();
        row.extend(matrix.row(r).iter().copied());
        row.sort_by(f64::total_cmp);
        for (c, v) in row.iter().enumerate() {
            matrix[(r, c)] = *v;
        }
    }
    Ok(JointSample {
        matrix,
        scheme: Scheme::Ranked,
        hierarchy: stacked.hierarchy.clone(),
        seed: None,
    })
}

/// Shuffles every row of a stacked sample independently.
///
/// Row `r` is shuffled by a Fisher-Yates pass (`i` from `N-1` down to 1, swap
/// with a uniform index in `0..=i`) driven by ChaCha8 keyed with the seed's
/// little-endian bytes (zero padded to 32 bytes) on stream `r`. Uniform indices
/// come from [`uniform_below`]. Rows are therefore reproducible independently
/// of evaluation order.
pub fn permute(stacked: &JointSample, seed: u64) -> Result<JointSample> {
    require_stacked(stacked)?;
    let mut matrix = stacked.matrix.clone();
    let n = matrix.ncols();
    let mut row = Vec::with_capacity(n);
    for r in 0..matrix.nrows() {
        let mut rng = row_rng(seed, r as u64);
        row.clear();
        row.extend(matrix.row(r).iter().copied());
        for i in (1..n).rev() {
            let j = uniform_below(&mut rng, i as u64 + 1) as usize;
            row.swap(i, j);
        }
        for (c, v) in row.iter().enumerate() {
            matrix[(r, c)] = *v;
        }
    }
    Ok(JointSample {
        matrix,
        scheme: Scheme::Permuted,
        hierarchy: stacked.hierarchy.clone(),
        seed: Some(seed),
    })
}

/// ChaCha8 generator keyed by `seed` and positioned on `stream`.
pub fn row_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `0..bound` by rejection on 64-bit draws: draws at or
/// above the largest multiple of `bound` are discarded, the rest reduced
/// modulo `bound`.
pub fn uniform_below<R: RngCore>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}
