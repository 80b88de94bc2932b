//! Temporal hierarchy structure and the summing matrix.
//!
//! A hierarchy is described by its frequency vector `f`: level `l` holds
//! `f[0] / f[l]` nodes, each covering `f[l]` consecutive bottom periods of one
//! cycle. Levels need not nest (8h and 12h blocks of a day overlap), so every
//! level is aggregated directly from the bottom level.
//!
//! Nodes are enumerated top to bottom, left to right within a level. All
//! indices in this crate are zero-based.
//!
//! Values in "common units" are native-unit aggregates divided by `f[l]`, so
//! every level is on the scale of a single bottom period.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchySpec {
    freqs: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl HierarchySpec {
    pub fn new(freqs: &[usize]) -> Result<Self> {
        let (&cycle, &last) = match (freqs.first(), freqs.last()) {
            (Some(first), Some(last)) => (first, last),
            _ => return Err(Error::EmptyFrequencies),
        };
        if last != 1 {
            return Err(Error::MissingBottom(last));
        }
        if freqs.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::NotDecreasing(freqs.to_vec()));
        }
        if let Some(&freq) = freqs.iter().find(|&&f| cycle % f != 0) {
            return Err(Error::NonDivisor { freq, cycle });
        }

        let mut offsets = Vec::with_capacity(freqs.len());
        let mut total = 0;
        for &f in freqs {
            offsets.push(total);
            total += cycle / f;
        }
        Ok(Self {
            freqs: freqs.to_vec(),
            offsets,
            total,
        })
    }

    pub fn freqs(&self) -> &[usize] {
        &self.freqs
    }

    /// Frequency `f_l` of a level: bottom periods per node.
    pub fn freq(&self, level: usize) -> usize {
        self.freqs[level]
    }

    /// Cycle length `f_1`, equal to the number of bottom nodes.
    pub fn cycle_len(&self) -> usize {
        self.freqs[0]
    }

    /// Number of levels `L`.
    pub fn levels(&self) -> usize {
        self.freqs.len()
    }

    /// Total node count `M`.
    pub fn nodes(&self) -> usize {
        self.total
    }

    /// Bottom node count `m`.
    pub fn bottom_nodes(&self) -> usize {
        self.freqs[0]
    }

    pub fn bottom_level(&self) -> usize {
        self.freqs.len() - 1
    }

    pub fn nodes_in_level(&self, level: usize) -> usize {
        self.freqs[0] / self.freqs[level]
    }

    /// Flat index of the first node of `level`.
    pub fn level_offset(&self, level: usize) -> usize {
        self.offsets[level]
    }

    /// Flat index range covered by `level`.
    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        let start = self.offsets[level];
        start..start + self.nodes_in_level(level)
    }

    pub fn node(&self, level: usize, position: usize) -> Result<NodeId> {
        if level >= self.levels() {
            return Err(Error::LevelOutOfRange {
                level,
                levels: self.levels(),
            });
        }
        let count = self.nodes_in_level(level);
        if position >= count {
            return Err(Error::DimensionMismatch(format!(
                "position {position} out of range for level {level} with {count} nodes"
            )));
        }
        Ok(NodeId {
            level,
            position,
            flat: self.offsets[level] + position,
        })
    }

    pub fn node_at(&self, flat: usize) -> Result<NodeId> {
        if flat >= self.total {
            return Err(Error::DimensionMismatch(format!(
                "flat index {flat} out of range for {} nodes",
                self.total
            )));
        }
        // offsets are increasing; the owning level is the last offset <= flat
        let level = self.offsets.partition_point(|&o| o <= flat) - 1;
        Ok(NodeId {
            level,
            position: flat - self.offsets[level],
            flat,
        })
    }

    /// Level of every flat node index, in enumeration order.
    pub fn node_levels(&self) -> Vec<usize> {
        (0..self.levels())
            .flat_map(|l| std::iter::repeat_n(l, self.nodes_in_level(l)))
            .collect()
    }

    /// The level-`level` node whose window of bottom periods contains bottom
    /// node `bottom`.
    pub fn ancestor(&self, level: usize, bottom: usize) -> NodeId {
        let position = bottom / self.freqs[level];
        NodeId {
            level,
            position,
            flat: self.offsets[level] + position,
        }
    }

    pub fn check_level(&self, level: usize) -> Result<()> {
        if level < self.levels() {
            Ok(())
        } else {
            Err(Error::LevelOutOfRange {
                level,
                levels: self.levels(),
            })
        }
    }
}

/// Position of a node in the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub level: usize,
    pub position: usize,
    pub flat: usize,
}

/// The `M x m` matrix mapping common-unit bottom values to every node.
#[derive(Debug, Clone)]
pub struct SummingMatrix {
    entries: DMatrix<f64>,
    hierarchy: HierarchySpec,
}

impl SummingMatrix {
    pub fn new(hierarchy: &HierarchySpec) -> Self {
        let m = hierarchy.bottom_nodes();
        let mut entries = DMatrix::zeros(hierarchy.nodes(), m);
        for level in 0..hierarchy.levels() {
            let f = hierarchy.freq(level);
            let weight = 1.0 / f as f64;
            for position in 0..hierarchy.nodes_in_level(level) {
                let row = hierarchy.level_offset(level) + position;
                for col in position * f..(position + 1) * f {
                    entries[(row, col)] = weight;
                }
            }
        }
        Self {
            entries,
            hierarchy: hierarchy.clone(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn hierarchy(&self) -> &HierarchySpec {
        &self.hierarchy
    }

    /// Full common-unit vector `S b` for bottom values `b`.
    pub fn expand(&self, bottom: &DVector<f64>) -> Result<DVector<f64>> {
        if bottom.len() != self.entries.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "bottom vector has {} entries, expected {}",
                bottom.len(),
                self.entries.ncols()
            )));
        }
        Ok(&self.entries * bottom)
    }
}

/// Native-unit sums over consecutive windows of `f_l` bottom periods.
pub fn aggregate_to_level(bottom: &[f64], h: &HierarchySpec, level: usize) -> Result<Vec<f64>> {
    h.check_level(level)?;
    let cycle = h.cycle_len();
    if !bottom.len().is_multiple_of(cycle) {
        return Err(Error::PartialCycle {
            len: bottom.len(),
            cycle,
        });
    }
    Ok(bottom
        .chunks_exact(h.freq(level))
        .map(|w| w.iter().sum())
        .collect())
}

pub fn to_common_units(values: &[f64], h: &HierarchySpec, level: usize) -> Result<Vec<f64>> {
    h.check_level(level)?;
    let f = h.freq(level) as f64;
    Ok(values.iter().map(|v| v / f).collect())
}

pub fn from_common_units(values: &[f64], h: &HierarchySpec, level: usize) -> Result<Vec<f64>> {
    h.check_level(level)?;
    let f = h.freq(level) as f64;
    Ok(values.iter().map(|v| v * f).collect())
}

/// Common-unit values of every node for one cycle of bottom observations.
pub fn cycle_vector(bottom_cycle: &[f64], h: &HierarchySpec) -> Result<DVector<f64>> {
    if bottom_cycle.len() != h.cycle_len() {
        return Err(Error::PartialCycle {
            len: bottom_cycle.len(),
            cycle: h.cycle_len(),
        });
    }
    let mut out = Vec::with_capacity(h.nodes());
    for level in 0..h.levels() {
        let native = aggregate_to_level(bottom_cycle, h, level)?;
        out.extend(to_common_units(&native, h, level)?);
    }
    Ok(DVector::from_vec(out))
}
