//! Normalized Gaussian column families and spectral certification of the
//! almost-orthonormality and besselian hypotheses over column subsets.
//!
//! Level indices are 1-based throughout the public API.

use std::collections::BTreeSet;
use std::time::Instant;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::iter::{IntoParallelIterator, ParallelBridge, ParallelIterator};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream_rng};

/// One level of a family: v unit columns in ℓ2^u plus the cached Gram matrix.
#[derive(Debug, Clone)]
pub struct RipLevel {
    pub u: usize,
    pub v: usize,
    pub columns: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

impl RipLevel {
    pub fn column(&self, i: usize) -> DVector<f64> {
        self.columns.column(i).into_owned()
    }
}

#[derive(Debug, Clone)]
pub struct RipFamily {
    pub levels: Vec<RipLevel>,
    pub seed: u64,
}

impl RipFamily {
    /// Generate per-level i.i.d. Gaussian columns rescaled to unit ℓ2 norm.
    /// Deterministic for a fixed seed; level n draws from stream n.
    pub fn generate(level_dims: &[(usize, usize)], seed: u64) -> Result<RipFamily> {
        let levels = level_dims
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| gen_gaussian_columns(u, v, seed, i as u64 + 1, false))
            .collect::<Result<Vec<_>>>()?;
        Ok(RipFamily { levels, seed })
    }

    /// As `generate` but with a QR orthonormalization post-pass per level,
    /// supplying exactly-orthonormal reference fixtures (requires v ≤ u).
    pub fn generate_orthonormal(level_dims: &[(usize, usize)], seed: u64) -> Result<RipFamily> {
        let levels = level_dims
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| gen_gaussian_columns(u, v, seed, i as u64 + 1, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(RipFamily { levels, seed })
    }

    /// Unit-norm Parseval-frame columns: the orthogonal projection of a
    /// coordinate basis onto a random u-dimensional subspace, renormalized.
    /// The unnormalized Gram is a rank-u projection, so every principal
    /// submatrix eigenvalue is at most the largest column normalization
    /// factor; for v moderately above u this keeps λ_max well below 2.
    pub fn generate_frame(level_dims: &[(usize, usize)], seed: u64) -> Result<RipFamily> {
        let levels = level_dims
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| gen_frame_columns(u, v, seed, i as u64 + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(RipFamily { levels, seed })
    }

    /// 1-based level accessor.
    pub fn level(&self, n: usize) -> Result<&RipLevel> {
        if n == 0 || n > self.levels.len() {
            return Err(Error::InvalidArgument(format!(
                "level {n} out of range 1..={}",
                self.levels.len()
            )));
        }
        Ok(&self.levels[n - 1])
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

pub fn gen_gaussian_columns(
    u: usize,
    v: usize,
    seed: u64,
    stream: u64,
    orthonormalize: bool,
) -> Result<RipLevel> {
    if u == 0 || v == 0 {
        return Err(Error::InvalidArgument("level dimensions must be positive".into()));
    }
    if orthonormalize && v > u {
        return Err(Error::InvalidArgument(
            "orthonormalization needs v <= u".into(),
        ));
    }
    let mut rng = stream_rng(seed, stream);
    let mut columns = DMatrix::zeros(u, v);
    for j in 0..v {
        loop {
            let mut col = DVector::from_fn(u, |_, _| standard_normal(&mut rng));
            if col.norm() > 1e-8 {
                normalize_exact(&mut col);
                columns.set_column(j, &col);
                break;
            }
        }
    }
    if orthonormalize {
        let qr = columns.clone().qr();
        let q = qr.q();
        columns.copy_from(&q.columns(0, v).into_owned());
    }
    let gram = columns.transpose() * &columns;
    Ok(RipLevel { u, v, columns, gram })
}

/// Rescale until the computed sum of squares is exactly 1.0. Division
/// alone can leave the self-inner-product one ulp off, which downstream
/// exact checks (‖T_n‖ = 1, Φ_m(T_M) = 1) would expose; after rescaling,
/// nudge single entries by ulps until the ascending-order accumulation
/// (the order used by the norm and pairing routines) lands on 1.0.
fn normalize_exact(col: &mut DVector<f64>) {
    let sumsq = |c: &DVector<f64>| c.iter().fold(0.0f64, |acc, x| acc + x * x);
    for _ in 0..4 {
        let s = sumsq(col);
        if s == 1.0 {
            return;
        }
        *col /= s.sqrt();
    }
    // Entries in order of decreasing magnitude: larger entries move the sum
    // in coarser ulp steps, smaller ones in finer steps.
    let mut order: Vec<usize> = (0..col.len()).collect();
    order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()));
    for &j in &order {
        for _ in 0..8 {
            let s = sumsq(col);
            if s == 1.0 {
                return;
            }
            let toward = if (s > 1.0) == (col[j] > 0.0) { f64::NEG_INFINITY } else { f64::INFINITY };
            col[j] = nextafter(col[j], toward);
        }
        // Undo the failed trial steps before moving to a finer entry.
        let s = sumsq(col);
        if s != 1.0 {
            *col /= s.sqrt();
        }
    }
}

fn nextafter(x: f64, toward: f64) -> f64 {
    if x == toward || x.is_nan() {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1) * toward.signum();
    }
    let bits = x.to_bits();
    let next = if (toward > x) == (x >= 0.0) { bits + 1 } else { bits - 1 };
    f64::from_bits(next)
}

/// Random Parseval frame with renormalized columns; see `generate_frame`.
pub fn gen_frame_columns(u: usize, v: usize, seed: u64, stream: u64) -> Result<RipLevel> {
    if u == 0 || v == 0 {
        return Err(Error::InvalidArgument("level dimensions must be positive".into()));
    }
    if u > v {
        return Err(Error::InvalidArgument("frame generation needs u <= v".into()));
    }
    let mut rng = stream_rng(seed, stream);
    loop {
        let raw = DMatrix::from_fn(v, v, |_, _| standard_normal(&mut rng));
        let q = raw.qr().q();
        // Rows 0..u of Qᵀ: each column is the subspace projection of e_j.
        let frame = q.columns(0, u).transpose().into_owned();
        let mut columns = DMatrix::zeros(u, v);
        let mut ok = true;
        for j in 0..v {
            let mut col = frame.column(j).into_owned();
            // A coordinate vector nearly orthogonal to the subspace would
            // blow up under renormalization; redraw the subspace instead.
            if col.norm() < 0.3 * (u as f64 / v as f64).sqrt() {
                ok = false;
                break;
            }
            normalize_exact(&mut col);
            columns.set_column(j, &col);
        }
        if ok {
            let gram = columns.transpose() * &columns;
            return Ok(RipLevel { u, v, columns, gram });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "samples")]
pub enum CertMode {
    Exhaustive,
    Sampled(usize),
}

/// Spectral certificate for principal Gram submatrices of a fixed size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RipCertificate {
    pub level: usize,
    pub order: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub mode: CertMode,
    pub besselian_only: bool,
    pub elapsed_ms: u64,
}

impl RipCertificate {
    /// Two-sided almost-orthonormality bound at this order.
    pub fn almost_on_holds(&self) -> bool {
        self.lambda_min >= 0.5 && self.lambda_max <= 2.0
    }

    /// One-sided (besselian) upper bound at this order.
    pub fn besselian_holds(&self) -> bool {
        self.lambda_max <= 2.0
    }

    pub fn is_exhaustive(&self) -> bool {
        self.mode == CertMode::Exhaustive
    }
}

/// Extreme eigenvalues of all order-sized principal Gram submatrices.
/// Monotonicity of extreme eigenvalues under subset inclusion makes
/// size-`order` subsets sufficient for all |J| ≤ order.
pub fn certify_almost_on(
    level_data: &RipLevel,
    level: usize,
    order: usize,
    budget: usize,
) -> Result<RipCertificate> {
    certify(level_data, level, order, budget, false)
}

/// As `certify_almost_on`, but reported with only λ_max binding.
pub fn certify_besselian(
    level_data: &RipLevel,
    level: usize,
    order: usize,
    budget: usize,
) -> Result<RipCertificate> {
    certify(level_data, level, order, budget, true)
}

fn certify(
    level_data: &RipLevel,
    level: usize,
    order: usize,
    budget: usize,
    besselian_only: bool,
) -> Result<RipCertificate> {
    let v = level_data.v;
    if order == 0 || order > v {
        return Err(Error::InvalidArgument(format!(
            "order {order} out of range 1..={v}"
        )));
    }
    let start = Instant::now();
    let gram = &level_data.gram;
    let (lambda_min, lambda_max, mode) =
        if let Some(count) = binomial_capped(v, order, budget) {
            let _ = count;
            let (lo, hi) = (0..v)
                .combinations(order)
                .par_bridge()
                .map(|subset| submatrix_extremes(gram, &subset))
                .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), merge_extremes);
            (lo, hi, CertMode::Exhaustive)
        } else {
            let samples = budget.max(1);
            let (lo, hi) = (0..samples as u64)
                .into_par_iter()
                .map(|s| {
                    let mut rng = stream_rng(0x5249_5000 ^ level as u64, s);
                    let subset = sample_subset(&mut rng, v, order);
                    submatrix_extremes(gram, &subset)
                })
                .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), merge_extremes);
            (lo, hi, CertMode::Sampled(samples))
        };
    Ok(RipCertificate {
        level,
        order,
        lambda_min,
        lambda_max,
        mode,
        besselian_only,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}

fn merge_extremes(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.min(b.0), a.1.max(b.1))
}

fn submatrix_extremes(gram: &DMatrix<f64>, subset: &[usize]) -> (f64, f64) {
    let k = subset.len();
    match k {
        1 => (gram[(subset[0], subset[0])], gram[(subset[0], subset[0])]),
        2 => {
            let d1 = gram[(subset[0], subset[0])];
            let d2 = gram[(subset[1], subset[1])];
            let off = gram[(subset[0], subset[1])];
            let mid = 0.5 * (d1 + d2);
            let r = (0.25 * (d1 - d2) * (d1 - d2) + off * off).sqrt();
            (mid - r, mid + r)
        }
        _ => {
            let sub = DMatrix::from_fn(k, k, |i, j| gram[(subset[i], subset[j])]);
            let eig = sub.symmetric_eigenvalues();
            (eig.min(), eig.max())
        }
    }
}

/// C(n, k) if it does not exceed `cap`, else None.
pub fn binomial_capped(n: usize, k: usize, cap: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Floyd's algorithm: uniform k-subset of {0..n-1}, sorted.
pub(crate) fn sample_subset<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut chosen = BTreeSet::new();
    for j in (n - k)..n {
        let t = rng.gen_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RipWitness {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub achieved_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RipVerdict {
    pub holds: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub mode: CertMode,
    pub witness: Option<RipWitness>,
}

/// Classical RIP check: (1−δ)‖x‖ ≤ ‖Ax‖ ≤ (1+δ)‖x‖ for all k-sparse x,
/// decided via singular-value extremes of column submatrices.
pub fn verify_rip_def(
    columns: &DMatrix<f64>,
    k: usize,
    delta: f64,
    budget: usize,
) -> Result<RipVerdict> {
    let v = columns.ncols();
    if k == 0 || k > v {
        return Err(Error::InvalidArgument(format!("sparsity {k} out of range 1..={v}")));
    }
    type Item = (f64, f64, Vec<usize>, Vec<usize>); // (σmin, σmax, argmin, argmax)
    let eval = |subset: Vec<usize>| -> Item {
        let sub = DMatrix::from_fn(columns.nrows(), k, |i, j| columns[(i, subset[j])]);
        let sv = sub.singular_values();
        // σ_min of a tall submatrix: nalgebra returns min(nrows,ncols) values,
        // all of them since k ≤ nrows is assumed for RIP instances; if k >
        // nrows the smallest singular value of the map on coefficients is 0.
        let smax = sv.max();
        let smin = if k > columns.nrows() { 0.0 } else { sv.min() };
        (smin, smax, subset.clone(), subset)
    };
    let merge = |a: Item, b: Item| -> Item {
        let (min_v, min_s) = if b.0 < a.0 || (b.0 == a.0 && b.2 < a.2) {
            (b.0, b.2)
        } else {
            (a.0, a.2)
        };
        let (max_v, max_s) = if b.1 > a.1 || (b.1 == a.1 && b.3 < a.3) {
            (b.1, b.3)
        } else {
            (a.1, a.3)
        };
        (min_v, max_v, min_s, max_s)
    };
    let id = || (f64::INFINITY, f64::NEG_INFINITY, vec![usize::MAX], vec![usize::MAX]);
    let (smin, smax, argmin, argmax, mode) = if binomial_capped(v, k, budget).is_some() {
        let r = (0..v)
            .combinations(k)
            .par_bridge()
            .map(eval)
            .reduce(id, merge);
        (r.0, r.1, r.2, r.3, CertMode::Exhaustive)
    } else {
        let samples = budget.max(1);
        let r = (0..samples as u64)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream_rng(0x5249_5001, s);
                eval(sample_subset(&mut rng, v, k))
            })
            .reduce(id, merge);
        (r.0, r.1, r.2, r.3, CertMode::Sampled(samples))
    };
    let holds = smin >= 1.0 - delta && smax <= 1.0 + delta;
    let witness = if holds {
        None
    } else {
        let (support, lower_side) = if smin < 1.0 - delta {
            (argmin, true)
        } else {
            (argmax, false)
        };
        let sub = DMatrix::from_fn(columns.nrows(), k, |i, j| columns[(i, support[j])]);
        let gram = sub.transpose() * &sub;
        let eig = gram.symmetric_eigen();
        let idx = (0..k)
            .max_by(|&a, &b| {
                let (ea, eb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
                if lower_side { eb.total_cmp(&ea) } else { ea.total_cmp(&eb) }
            })
            .unwrap();
        let coeff: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let ratio = eig.eigenvalues[idx].max(0.0).sqrt();
        Some(RipWitness { support, coefficients: coeff, achieved_ratio: ratio })
    };
    Ok(RipVerdict { holds, sigma_min: smin, sigma_max: smax, mode, witness })
}
