//! Combination matrices `P` and the reconciliation `S P Y`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hierarchy::{HierarchySpec, SummingMatrix};
use crate::sampling::{JointSample, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Bottom up: keep the bottom level, discard the rest.
    BottomUp,
    /// Every bottom node gets the mean of the bottom level.
    BottomAverage,
    /// Every bottom node gets the mean of all nodes.
    GlobalAverage,
    /// Mean of a bottom node and the node containing it at each level.
    LinealAverage,
    /// Weighted least squares with `W = diag(f_l^2)`.
    Wls,
    /// Cross-validated weights, one per node.
    CvFull,
    /// Cross-validated weights, one per level.
    CvLevel,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BottomUp => "BU",
            Method::BottomAverage => "BA",
            Method::GlobalAverage => "GA",
            Method::LinealAverage => "LA",
            Method::Wls => "WLS",
            Method::CvFull => "CV",
            Method::CvLevel => "CVR",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An `m x M` combination matrix.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    method: Method,
    hierarchy: HierarchySpec,
}

impl WeightMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn hierarchy(&self) -> &HierarchySpec {
        &self.hierarchy
    }
}

#[derive(Debug, Clone)]
pub struct ReconciledSample {
    matrix: DMatrix<f64>,
    method: Method,
    scheme: Scheme,
}

impl ReconciledSample {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
}

pub fn fixed_weights(method: Method, h: &HierarchySpec) -> Result<WeightMatrix> {
    let m = h.bottom_nodes();
    let total = h.nodes();
    let bottom_start = h.level_offset(h.bottom_level());
    let mut p = DMatrix::zeros(m, total);
    match method {
        Method::BottomUp => {
            for r in 0..m {
                p[(r, bottom_start + r)] = 1.0;
            }
        }
        Method::BottomAverage => {
            let w = 1.0 / m as f64;
            for r in 0..m {
                for c in bottom_start..total {
                    p[(r, c)] = w;
                }
            }
        }
        Method::GlobalAverage => p.fill(1.0 / total as f64),
        Method::LinealAverage => {
            let w = 1.0 / h.levels() as f64;
            for r in 0..m {
                for level in 0..h.levels() {
                    p[(r, h.ancestor(level, r).flat)] = w;
                }
            }
        }
        other => return Err(Error::NotFixedMethod(other.name())),
    }
    Ok(WeightMatrix {
        entries: p,
        method,
        hierarchy: h.clone(),
    })
}

/// `P = (S' W^-1 S)^-1 S' W^-1` with `W = diag(f_l^2)`.
pub fn wls_weights(h: &HierarchySpec) -> Result<WeightMatrix> {
    let s = SummingMatrix::new(h);
    let precision = DVector::from_iterator(
        h.nodes(),
        h.node_levels().into_iter().map(|l| {
            let f = h.freq(l) as f64;
            1.0 / (f * f)
        }),
    );
    // S' W^-1, scaling column i of S' by the node's precision
    let mut st_winv = s.matrix().transpose();
    for (mut col, w) in st_winv.column_iter_mut().zip(precision.iter()) {
        col *= *w;
    }
    let normal = &st_winv * s.matrix();
    let chol = normal.cholesky().ok_or(Error::SingularSystem)?;
    let p = chol.solve(&st_winv);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(WeightMatrix {
        entries: p,
        method: Method::Wls,
        hierarchy: h.clone(),
    })
}

/// Level-weight matrix: row `r` carries `v[l]` on the level-`l` node
/// containing bottom node `r`.
pub fn weights_from_levels(v: &[f64], h: &HierarchySpec) -> Result<WeightMatrix> {
    if v.len() != h.levels() {
        return Err(Error::LengthMismatch {
            expected: h.levels(),
            actual: v.len(),
        });
    }
    let mut p = DMatrix::zeros(h.bottom_nodes(), h.nodes());
    for r in 0..h.bottom_nodes() {
        for (level, &w) in v.iter().enumerate() {
            p[(r, h.ancestor(level, r).flat)] = w;
        }
    }
    Ok(WeightMatrix {
        entries: p,
        method: Method::CvLevel,
        hierarchy: h.clone(),
    })
}

/// Node-weight matrix: `v[l][j]` is the weight on node `j` of level `l`,
/// applied to every bottom node it contains.
pub fn weights_from_nodes(v: &[Vec<f64>], h: &HierarchySpec) -> Result<WeightMatrix> {
    for level in 0..h.levels() {
        let count = h.nodes_in_level(level);
        let have = v.get(level).map_or(0, Vec::len);
        if have < count {
            return Err(Error::MissingWeight { level, node: have });
        }
    }
    let mut p = DMatrix::zeros(h.bottom_nodes(), h.nodes());
    for r in 0..h.bottom_nodes() {
        for (level, weights) in v.iter().enumerate().take(h.levels()) {
            let node = h.ancestor(level, r);
            p[(r, node.flat)] = weights[node.position];
        }
    }
    Ok(WeightMatrix {
        entries: p,
        method: Method::CvFull,
        hierarchy: h.clone(),
    })
}

/// Node weights given in flat node order.
pub fn weights_from_flat(v: &[f64], h: &HierarchySpec) -> Result<WeightMatrix> {
    if v.len() != h.nodes() {
        return Err(Error::LengthMismatch {
            expected: h.nodes(),
            actual: v.len(),
        });
    }
    let nested: Vec<Vec<f64>> = (0..h.levels())
        .map(|l| v[h.level_range(l)].to_vec())
        .collect();
    weights_from_nodes(&nested, h)
}

pub fn reconcile(s: &SummingMatrix, p: &WeightMatrix, y: &JointSample) -> Result<ReconciledSample> {
    let sm = s.matrix();
    let pm = p.matrix();
    let ym = y.matrix();
    if pm.nrows() != sm.ncols() || pm.ncols() != sm.nrows() || ym.nrows() != pm.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "S is {}x{}, P is {}x{}, Y is {}x{}",
            sm.nrows(),
            sm.ncols(),
            pm.nrows(),
            pm.ncols(),
            ym.nrows(),
            ym.ncols()
        )));
    }
    let bottom = pm * ym;
    Ok(ReconciledSample {
        matrix: sm * bottom,
        method: p.method(),
        scheme: y.scheme(),
    })
}

/// `S P Y` for the level-weight matrix of `v`, without forming `P`.
pub fn reconcile_levels(v: &[f64], y: &DMatrix<f64>, h: &HierarchySpec) -> Result<DMatrix<f64>> {
    if v.len() != h.levels() {
        return Err(Error::LengthMismatch {
            expected: h.levels(),
            actual: v.len(),
        });
    }
    if y.nrows() != h.nodes() {
        return Err(Error::DimensionMismatch(format!(
            "sample has {} rows, hierarchy has {} nodes",
            y.nrows(),
            h.nodes()
        )));
    }
    let m = h.bottom_nodes();
    let levels = h.levels();
    let ancestors: Vec<usize> = (0..m)
        .flat_map(|r| (0..levels).map(move |l| (l, r)))
        .map(|(l, r)| h.ancestor(l, r).flat)
        .collect();
    let mut out = DMatrix::zeros(h.nodes(), y.ncols());
    let mut bottom = vec![0.0; m];
    let rows = h.nodes();
    for (col, target) in y
        .as_slice()
        .chunks_exact(rows)
        .zip(out.as_mut_slice().chunks_exact_mut(rows))
    {
        for (b, anc) in bottom.iter_mut().zip(ancestors.chunks_exact(levels)) {
            *b = anc.iter().zip(v).map(|(&i, w)| w * col[i]).sum();
        }
        for level in 0..levels {
            let f = h.freq(level);
            let scale = 1.0 / f as f64;
            let offset = h.level_offset(level);
            for (t, chunk) in target[offset..].iter_mut().zip(bottom.chunks_exact(f)) {
                *t = chunk.iter().sum::<f64>() * scale;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    pub coherent: bool,
    pub max_violation: f64,
}

/// Largest `|y - S y_bottom|` over all entries, with `y_bottom` the last `m`
/// rows of each column.
pub fn check_coherence(y: &DMatrix<f64>, s: &SummingMatrix, tol: f64) -> Result<Coherence> {
    let sm = s.matrix();
    if y.nrows() != sm.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "sample has {} rows, hierarchy has {} nodes",
            y.nrows(),
            sm.nrows()
        )));
    }
    let m = sm.ncols();
    let bottom = y.rows(y.nrows() - m, m);
    let implied = sm * bottom;
    let max_violation = y
        .iter()
        .zip(implied.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Coherence {
        coherent: max_violation <= tol,
        max_violation,
    })
}
