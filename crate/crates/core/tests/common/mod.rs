#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use temporal_recon::cli::experiment::{fit_levels, origin_samples};
use temporal_recon::scoring::ValidationSet;
use temporal_recon::simkit::{simulate_truth, SyntheticScenario};
use temporal_recon::HierarchySpec;

pub type Q = Ratio<i64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random strictly decreasing divisor chain of a cycle length up to 24,
/// always containing the cycle itself and 1.
pub fn random_hierarchy<R: Rng>(rng: &mut R) -> HierarchySpec {
    let cycle = rng.gen_range(1..=24usize);
    let mut freqs: Vec<usize> = (2..cycle)
        .filter(|d| cycle % d == 0 && rng.gen_bool(0.5))
        .collect();
    freqs.push(cycle);
    if cycle > 1 {
        freqs.push(1);
    }
    freqs.sort_unstable_by(|a, b| b.cmp(a));
    freqs.dedup();
    HierarchySpec::new(&freqs).unwrap()
}

/// `O(N^2)` energy form straight from the definition.
pub fn brute_crps(sample: &[f64], z: f64) -> f64 {
    let n = sample.len() as f64;
    let a: f64 = sample.iter().map(|x| (x - z).abs()).sum::<f64>() / n;
    let mut b = 0.0;
    for x in sample {
        for y in sample {
            b += (x - y).abs();
        }
    }
    a - b / (2.0 * n * n)
}

/// Summing matrix built block by block as `f^-1 (I_k kron 1'_f)`.
pub fn kronecker_s(freqs: &[usize]) -> Vec<Vec<Q>> {
    let m = freqs[0];
    let mut rows = Vec::new();
    for &f in freqs {
        let k = m / f;
        let ones: Vec<Q> = vec![Q::from_integer(1); f];
        for i in 0..k {
            // row i of I_k, Kronecker product with the ones row
            let mut row = Vec::with_capacity(m);
            for j in 0..k {
                let e = if i == j {
                    Q::from_integer(1)
                } else {
                    Q::from_integer(0)
                };
                row.extend(ones.iter().map(|o| e * o / Q::from_integer(f as i64)));
            }
            rows.push(row);
        }
    }
    rows
}

pub fn to_f64(q: &Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

pub fn max_abs_diff_q(a: &DMatrix<f64>, b: &[Vec<Q>]) -> f64 {
    assert_eq!(a.nrows(), b.len());
    let mut worst: f64 = 0.0;
    for (i, row) in b.iter().enumerate() {
        assert_eq!(a.ncols(), row.len());
        for (j, q) in row.iter().enumerate() {
            worst = worst.max((a[(i, j)] - to_f64(q)).abs());
        }
    }
    worst
}

/// Exact inverse of a small rational matrix by Gauss-Jordan elimination.
pub fn invert_q(a: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let n = a.len();
    let mut aug: Vec<Vec<Q>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| Q::from_integer((i == j) as i64)));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| aug[r][col] != Q::from_integer(0))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = aug[r][col];
                if factor != Q::from_integer(0) {
                    let pivot_row = aug[col].clone();
                    for (v, pv) in aug[r].iter_mut().zip(pivot_row) {
                        *v -= factor * pv;
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn mul_q(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).fold(Q::from_integer(0), |acc, k| acc + row[k] * b[k][j]))
                .collect()
        })
        .collect()
}

pub fn transpose_q(a: &[Vec<Q>]) -> Vec<Vec<Q>> {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

/// WLS combination `(S' W^-1 S)^-1 S' W^-1` with `W = diag(f_l^2)`, exactly.
pub fn wls_oracle(freqs: &[usize]) -> Vec<Vec<Q>> {
    let s = kronecker_s(freqs);
    let mut w_inv_diag = Vec::new();
    for &f in freqs {
        let w = Q::new(1, (f * f) as i64);
        w_inv_diag.extend(std::iter::repeat_n(w, freqs[0] / f));
    }
    let st = transpose_q(&s);
    let st_w: Vec<Vec<Q>> = st
        .iter()
        .map(|row| row.iter().zip(&w_inv_diag).map(|(a, w)| a * w).collect())
        .collect();
    let gram = mul_q(&st_w, &s);
    mul_q(&invert_q(&gram), &st_w)
}

/// Validation set from the AR(1) scenario on the given hierarchy.
pub fn synthetic_validation(
    freqs: &[usize],
    samples: usize,
    train_cycles: usize,
    val_cycles: usize,
    seed: u64,
) -> (HierarchySpec, ValidationSet) {
    let h = HierarchySpec::new(freqs).unwrap();
    let scn = SyntheticScenario {
        phi: 0.7,
        sigma: 1.0,
        mu: 1.5,
        cycle_len: h.cycle_len(),
        train_cycles,
        val_cycles,
        test_cycles: 1,
        seed,
        clip_at_zero: false,
    };
    let truth = simulate_truth(&scn).unwrap();
    let history = &truth[..(train_cycles + val_cycles) * h.cycle_len()];
    let models = fit_levels(history, train_cycles, &h).unwrap();
    let (samples, actuals) = origin_samples(
        history,
        &models,
        train_cycles..train_cycles + val_cycles,
        &h,
        samples,
        seed,
    )
    .unwrap();
    (h, ValidationSet::new(samples, actuals).unwrap())
}

/// Instance where only the bottom level carries information: bottom samples
/// are centred on the truth, every coarser level on a biased, noisier value.
pub fn bottom_informative(
    freqs: &[usize],
    origins: usize,
    samples: usize,
    seed: u64,
) -> (HierarchySpec, ValidationSet) {
    use rand_distr::{Distribution, Normal};
    let h = HierarchySpec::new(freqs).unwrap();
    let mut r = rng(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut joint = Vec::new();
    let mut actuals = Vec::new();
    for _ in 0..origins {
        let bottom: Vec<f64> = (0..h.bottom_nodes())
            .map(|_| 5.0 + unit.sample(&mut r))
            .collect();
        let actual = temporal_recon::hierarchy::cycle_vector(&bottom, &h).unwrap();
        let mut y = DMatrix::zeros(h.nodes(), samples);
        for (i, level) in h.node_levels().into_iter().enumerate() {
            let (bias, sd) = if level == h.bottom_level() {
                (0.0, 0.3)
            } else {
                (2.0, 1.5)
            };
            for c in 0..samples {
                y[(i, c)] = actual[i] + bias + sd * unit.sample(&mut r);
            }
        }
        joint.push(temporal_recon::JointSample::from_matrix(y, &h).unwrap());
        actuals.push(actual);
    }
    (h, ValidationSet::new(joint, actuals).unwrap())
}

/// Every point of the simplex in `levels` coordinates on a grid of `1/steps`.
pub fn simplex_grid(levels: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(levels: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == levels - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(levels, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    rec(levels, steps, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|v| v.into_iter().map(|k| k as f64 / steps as f64).collect())
        .collect()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-3.0..3.0))
}

pub fn random_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-3.0..3.0))
}
