//! Operator-norm engine with exact closed forms where available and a
//! (heuristic lower, certified upper) pair everywhere else.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::spaces::{norming_functional, norming_vector, BlockSpace, DenseOperator, ExtExponent};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Closed-form exact value (column/row norm formulas).
    Exact,
    /// Largest singular value; exact for ℓ2 → ℓ2.
    Spectral,
    /// Exact via enumeration of the 2^dim sign vectors of an ℓ∞-type domain.
    SignEnumeration,
    /// Lower bound from alternating ascent; upper is a certified bound.
    HeuristicLower,
    /// Upper bound only (σ_max times norm-comparison factors).
    CertifiedUpper,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormBound {
    pub lower: f64,
    pub upper: f64,
    pub mode: NormMode,
}

impl NormBound {
    pub fn exact(v: f64, mode: NormMode) -> Self {
        NormBound { lower: v, upper: v, mode }
    }

    pub fn is_exact(&self) -> bool {
        matches!(
            self.mode,
            NormMode::Exact | NormMode::Spectral | NormMode::SignEnumeration
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OpNormOptions {
    /// Refuse to fall back to heuristics.
    pub require_exact: bool,
    /// Max domain dimension for sign-vector enumeration (2^cap evaluations).
    pub sign_cap: usize,
    /// Random restarts for the alternating-ascent lower bound.
    pub restarts: usize,
    pub ascent_iters: usize,
    pub seed: u64,
}

impl Default for OpNormOptions {
    fn default() -> Self {
        OpNormOptions {
            require_exact: false,
            sign_cap: 20,
            restarts: 64,
            ascent_iters: 60,
            seed: 0,
        }
    }
}

/// Operator norm of `t` between its tagged spaces.
///
/// Exact routes, tried in order:
/// 1. ℓ2 → ℓ2: largest singular value.
/// 2. ℓ2-type domain, sup-type codomain: max row ℓ2 norm.
/// 3. ℓ1-type domain: max codomain norm over columns.
/// 4. sup-type domain with dim ≤ sign_cap: enumerate sign vectors.
///
/// Otherwise a heuristic lower bound (alternating ascent) is paired with a
/// certified upper bound (σ_max times the ℓ2-comparison factors of the two
/// spaces).
pub fn op_norm(t: &DenseOperator, opts: &OpNormOptions) -> Result<NormBound> {
    let dom = &t.domain;
    let cod = &t.codomain;

    if dom.is_l2_type() && cod.is_l2_type() {
        return Ok(NormBound::exact(sigma_max(t), NormMode::Spectral));
    }
    if dom.is_l2_type() && cod.is_sup_type() {
        let v = (0..t.matrix.nrows())
            .map(|i| t.matrix.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        return Ok(NormBound::exact(v, NormMode::Exact));
    }
    if dom.is_l1_type() {
        let mut v = 0.0f64;
        for j in 0..t.matrix.ncols() {
            let col: Vec<f64> = t.matrix.column(j).iter().copied().collect();
            v = v.max(cod.norm(&col)?);
        }
        return Ok(NormBound::exact(v, NormMode::Exact));
    }
    if dom.is_sup_type() && dom.total_dim <= opts.sign_cap {
        return Ok(NormBound::exact(sign_enumeration_norm(t)?, NormMode::SignEnumeration));
    }
    if opts.require_exact {
        return Err(Error::UnsupportedExact);
    }

    let upper = certified_upper(t);
    let lower = alternating_ascent(t, opts)?;
    Ok(NormBound {
        lower: lower.min(upper),
        upper,
        mode: NormMode::HeuristicLower,
    })
}

pub fn sigma_max(t: &DenseOperator) -> f64 {
    t.matrix.clone().singular_values().max()
}

/// Exact norm for a sup-type domain: ‖T·‖ is convex, so its max over the
/// unit cube is attained at a vertex.
fn sign_enumeration_norm(t: &DenseOperator) -> Result<f64> {
    let d = t.domain.total_dim;
    let mut best = 0.0f64;
    let mut x = DVector::from_element(d, 1.0);
    // Fixing the first sign to +1 halves the work (norm is even).
    for bits in 0..(1u64 << (d - 1)) {
        for j in 1..d {
            x[j] = if (bits >> (j - 1)) & 1 == 1 { -1.0 } else { 1.0 };
        }
        let y = &t.matrix * &x;
        best = best.max(t.codomain.norm(y.as_slice())?);
    }
    Ok(best)
}

/// Rigorous (possibly loose) upper bound: ‖T‖ ≤ C_cod · σ_max · C_dom where
/// C_cod bounds ‖·‖_cod by ‖·‖_2 and C_dom bounds ‖·‖_2 by ‖·‖_dom.
pub fn certified_upper(t: &DenseOperator) -> f64 {
    norm_vs_l2_factor(&t.codomain) * sigma_max(t) * l2_vs_norm_factor(&t.domain)
}

/// C with ‖y‖_space ≤ C ‖y‖_2 for all y.
fn norm_vs_l2_factor(space: &BlockSpace) -> f64 {
    let inner = space
        .blocks
        .iter()
        .map(|b| dim_factor(b.dim, b.inner, true))
        .fold(1.0f64, f64::max);
    inner * dim_factor(space.blocks.len(), space.outer, true)
}

/// C with ‖y‖_2 ≤ C ‖y‖_space for all y.
fn l2_vs_norm_factor(space: &BlockSpace) -> f64 {
    let inner = space
        .blocks
        .iter()
        .map(|b| dim_factor(b.dim, b.inner, false))
        .fold(1.0f64, f64::max);
    inner * dim_factor(space.blocks.len(), space.outer, false)
}

/// n^{(1/p - 1/2)+} or n^{(1/2 - 1/p)+}.
fn dim_factor(n: usize, p: ExtExponent, p_vs_two: bool) -> f64 {
    let inv_p = match p {
        ExtExponent::Finite(pv) => 1.0 / pv,
        ExtExponent::Infinity | ExtExponent::CZero => 0.0,
    };
    let e = if p_vs_two { inv_p - 0.5 } else { 0.5 - inv_p };
    (n as f64).powf(e.max(0.0))
}

/// Maximize ‖Tx‖ over the unit sphere of the domain by alternating a
/// codomain norming-functional step with a domain renormalization step.
/// Monotone in the objective; reported only as a lower bound.
fn alternating_ascent(t: &DenseOperator, opts: &OpNormOptions) -> Result<f64> {
    let d = t.domain.total_dim;
    let tt = t.matrix.transpose();
    let mut best = 0.0f64;
    for restart in 0..opts.restarts {
        let mut rng = stream_rng(opts.seed, restart as u64);
        let raw: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let mut g = DVector::from_vec(raw);
        let mut x = norming_vector(&g, &t.domain);
        if x.iter().all(|&c| c == 0.0) {
            continue;
        }
        for _ in 0..opts.ascent_iters {
            let y = &t.matrix * &x;
            best = best.max(t.codomain.norm(y.as_slice())?);
            let f = norming_functional(&y, &t.codomain);
            g = &tt * &f;
            let next = norming_vector(&g, &t.domain);
            if next.iter().all(|&c| c == 0.0) {
                break;
            }
            x = next;
        }
        let y = &t.matrix * &x;
        best = best.max(t.codomain.norm(y.as_slice())?);
    }
    Ok(best)
}
