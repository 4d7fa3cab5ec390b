//! Constructive factorization algorithms: masked diagonals through formal
//! identities, the identity through a single analysis operator, and
//! factorization across certified ℓ∞ embeddings.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constructions::{build_t_m, build_t_n, NetEmbedding, ParamSchedule};
use crate::error::{Error, Result};
use crate::opnorm::{op_norm, sigma_max, NormBound, NormMode, OpNormOptions};
use crate::rip::RipFamily;
use crate::rng::stream_rng;
use crate::simplex::min_l1_combination;
use crate::spaces::{block_diag, compose, BlockSpace, DenseOperator, ExtExponent};

const RECON_TOL: f64 = 1e-9;

/// DB ≈ R ∘ I ∘ P across a small formal identity. The index budget Σ|J_n|
/// never exceeds budget_s_m; R is a 0/1 coordinate embedding.
#[derive(Debug, Clone)]
pub struct ApproxFactorization {
    /// Per schedule level, the selected column indices (0-based).
    pub index_sets: Vec<Vec<usize>>,
    pub p_op: DenseOperator,
    pub r_op: DenseOperator,
    pub i_formal: DenseOperator,
    pub residual_norm: f64,
    pub p_norm: NormBound,
    pub r_norm: NormBound,
    pub budget_s_m: u64,
}

impl ApproxFactorization {
    pub fn total_selected(&self) -> usize {
        self.index_sets.iter().map(Vec::len).sum()
    }
}

/// Factor D∘B through the formal identity on the columns where B*g is
/// large. Follows the selection proof verbatim: t = s_m + 1 candidates,
/// keep those with ‖B*g_j‖ ≥ 1/m.
pub fn factor_through_formal_identity(
    b: &DenseOperator,
    schedule: &ParamSchedule,
    family: &RipFamily,
    m: usize,
    n_levels: &BTreeSet<usize>,
) -> Result<ApproxFactorization> {
    if m == 0 || m > schedule.num_levels() {
        return Err(Error::InvalidArgument(format!("m = {m} outside schedule")));
    }
    if schedule.p < 2.0 {
        return Err(Error::HypothesisFailed(
            "outer exponent below 2; apply the p <= 2 reduction first".into(),
        ));
    }
    let space_u = schedule.space_u();
    if b.codomain.total_dim != space_u.total_dim {
        return Err(Error::SpaceMismatch("B must map into the ℓ2-block sum".into()));
    }
    // The selection count Σ|J_n| ≤ s_m is proved for B defined on ℓ2^{u_m};
    // a smaller domain only helps.
    if !b.domain.is_l2_type() || b.domain.total_dim > schedule.u(m) {
        return Err(Error::HypothesisFailed(format!(
            "B must act on an ℓ2 space of dimension at most u_m = {}",
            schedule.u(m)
        )));
    }
    if let Some(&bad) = n_levels.iter().find(|&&n| n <= m || n > schedule.num_levels()) {
        return Err(Error::InvalidArgument(format!(
            "level {bad} not in {{ {} < n <= {} }}",
            m,
            schedule.num_levels()
        )));
    }
    let b_bound = op_norm(b, &OpNormOptions::default())?;
    if b_bound.upper > 1.0 + 1e-9 {
        return Err(Error::HypothesisFailed(format!(
            "need a certified ‖B‖ <= 1, got upper bound {:.6}",
            b_bound.upper
        )));
    }
    let s_m = schedule.s_n(m).value;
    let t_budget = s_m as usize + 1;

    // Dual norms ‖B*g_j^{(n)}‖ for every candidate column.
    let dual = b.domain.dual_space()?;
    let offsets = space_u.offsets();
    let mut scored: Vec<(usize, usize, f64)> = Vec::new();
    for &n in n_levels {
        let lvl = family.level(n)?;
        for j in 0..lvl.v {
            let g = lvl.column(j);
            let mut row = DVector::zeros(b.domain.total_dim);
            for c in 0..b.domain.total_dim {
                let mut acc = 0.0;
                for r in 0..lvl.u {
                    acc += g[r] * b.matrix[(offsets[n - 1] + r, c)];
                }
                row[c] = acc;
            }
            scored.push((n, j, dual.norm(row.as_slice())?));
        }
    }
    // Largest first; ties broken lexicographically on (level, column).
    scored.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.0, a.1).cmp(&(b.0, b.1)))
    });
    let threshold = 1.0 / m as f64;
    let mut index_sets = vec![Vec::new(); schedule.num_levels()];
    for &(n, j, w) in scored.iter().take(t_budget) {
        if w >= threshold {
            index_sets[n - 1].push(j);
        }
    }
    for set in &mut index_sets {
        set.sort_unstable();
    }

    let mask = n_levels.clone();
    let d = build_t_m(schedule, family, &mask)?;
    let db = compose(&d.realized, b)?;
    assemble_formal(b, schedule, family, index_sets, db, s_m)
}

fn assemble_formal(
    b: &DenseOperator,
    schedule: &ParamSchedule,
    family: &RipFamily,
    index_sets: Vec<Vec<usize>>,
    db: DenseOperator,
    s_m: u64,
) -> Result<ApproxFactorization> {
    let total: usize = index_sets.iter().map(Vec::len).sum();
    if total == 0 {
        // Degenerate: nothing selected, the factorization is zero.
        let one_l2 = BlockSpace::simple(ExtExponent::TWO, 1)?;
        let one_inf = BlockSpace::simple(ExtExponent::Infinity, 1)?;
        let residual_norm = op_norm(&db, &OpNormOptions::default())?.upper;
        return Ok(ApproxFactorization {
            index_sets,
            p_op: DenseOperator::zero(b.domain.clone(), one_l2.clone()),
            r_op: DenseOperator::zero(one_inf.clone(), db.codomain.clone()),
            i_formal: DenseOperator::zero(one_l2, one_inf),
            residual_norm,
            p_norm: NormBound::exact(0.0, NormMode::Exact),
            r_norm: NormBound::exact(0.0, NormMode::Exact),
            budget_s_m: s_m,
        });
    }
    let space_u = schedule.space_u();
    let space_v = schedule.space_v();
    let u_offsets = space_u.offsets();
    let v_offsets = space_v.offsets();
    let active: Vec<usize> = (1..=schedule.num_levels())
        .filter(|&n| !index_sets[n - 1].is_empty())
        .collect();
    let mid_l2 = BlockSpace::new(
        active
            .iter()
            .map(|&n| (ExtExponent::TWO, index_sets[n - 1].len()))
            .collect(),
        ExtExponent::Finite(schedule.p),
    )?;
    let mid_inf = BlockSpace::new(
        active
            .iter()
            .map(|&n| (ExtExponent::Infinity, index_sets[n - 1].len()))
            .collect(),
        ExtExponent::CZero,
    )?;

    // P x = (⟨Bx, g_j⟩): rows are g_j^T restricted to block n, times B.
    let mut p_mat = DMatrix::zeros(total, b.domain.total_dim);
    let mut r_mat = DMatrix::zeros(space_v.total_dim, total);
    let mut row = 0usize;
    for &n in &active {
        let lvl = family.level(n)?;
        for &j in &index_sets[n - 1] {
            let g = lvl.column(j);
            for c in 0..b.domain.total_dim {
                let mut acc = 0.0;
                for r in 0..lvl.u {
                    acc += g[r] * b.matrix[(u_offsets[n - 1] + r, c)];
                }
                p_mat[(row, c)] = acc;
            }
            r_mat[(v_offsets[n - 1] + j, row)] = 1.0;
            row += 1;
        }
    }
    let p_op = DenseOperator::new(p_mat, b.domain.clone(), mid_l2.clone())?;
    let i_formal = DenseOperator::new(DMatrix::identity(total, total), mid_l2, mid_inf.clone())?;
    let r_op = DenseOperator::new(r_mat, mid_inf, space_v)?;

    let approx = compose(&r_op, &compose(&i_formal, &p_op)?)?;
    let residual = db.add(&approx.scale(-1.0))?;
    let residual_norm = op_norm(&residual, &OpNormOptions::default())?.upper;

    // For p >= 2 the outer ℓp norm on ℓ2 blocks is dominated by the global
    // ℓ2 norm, so σ_max is a valid upper bound for ‖P‖; exact at p = 2.
    let sigma = sigma_max(&p_op);
    let p_norm = if schedule.p == 2.0 && b.domain.is_l2_type() {
        NormBound::exact(sigma, NormMode::Spectral)
    } else {
        NormBound { lower: 0.0, upper: sigma, mode: NormMode::CertifiedUpper }
    };
    Ok(ApproxFactorization {
        index_sets,
        p_op,
        r_op,
        i_formal,
        residual_norm,
        p_norm,
        r_norm: NormBound::exact(1.0, NormMode::Exact),
        budget_s_m: s_m,
    })
}

/// For p ≤ 2, retag B's codomain with outer exponent 2. The formal identity
/// from the ℓp-sum to the ℓ2-sum has norm 1 since ‖·‖_2 ≤ ‖·‖_p.
pub fn reduce_p_le_2(
    b: &DenseOperator,
    schedule: &ParamSchedule,
) -> Result<(DenseOperator, ParamSchedule, String)> {
    if schedule.p > 2.0 {
        return Err(Error::InvalidArgument(format!(
            "reduction applies to p <= 2, got {}",
            schedule.p
        )));
    }
    let retagged = ParamSchedule::new(2.0, schedule.levels.clone())?;
    let b2 = DenseOperator::new(
        b.matrix.clone(),
        b.domain.clone(),
        b.codomain.with_outer(ExtExponent::TWO),
    )?;
    let note = format!(
        "codomain outer exponent retagged {} -> 2; the identity has norm 1 for p <= 2; \
         place all selected columns at the smallest active level",
        schedule.p
    );
    Ok((b2, retagged, note))
}

/// I = A ∘ P ∘ T_n ∘ B on ℓ∞^m, with the column subset S found by
/// rejection sampling against the Gram-energy bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityFactorization {
    #[serde(skip)]
    pub a_op: Option<DenseOperator>,
    #[serde(skip)]
    pub p_op: Option<DenseOperator>,
    #[serde(skip)]
    pub b_op: Option<DenseOperator>,
    /// 0-based column subset S at the fixed level.
    pub subset: Vec<usize>,
    pub reconstruction_error: f64,
    pub gram_energy: f64,
    pub a_norm: f64,
    pub b_norm: f64,
    pub tries: usize,
}

pub fn factor_identity_through_t_n(
    family: &RipFamily,
    m: usize,
    n: usize,
    m_cols: usize,
    seed: u64,
    max_tries: usize,
) -> Result<IdentityFactorization> {
    let lvl = family.level(n)?;
    if m == 0 || m_cols < m || m_cols > lvl.v {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= m <= M_cols <= v_n, got m = {m}, M_cols = {m_cols}, v_n = {}",
            lvl.v
        )));
    }
    // Hypothesis m sqrt(m(m-1)/(M-1)) < 1/2; trivially true at m = 1.
    let threshold = if m == 1 {
        0.0
    } else {
        let thr = m as f64 * (m as f64 - 1.0) / (m_cols as f64 - 1.0);
        if m as f64 * thr.sqrt() >= 0.5 {
            let minimal = 4 * m.pow(3) * (m - 1) + 2;
            return Err(Error::HypothesisFailed(format!(
                "m·sqrt(m(m-1)/(M-1)) >= 1/2 at M_cols = {m_cols}; minimal admissible M_cols = {minimal}"
            )));
        }
        thr
    };
    let gram = &lvl.gram;
    let mut best_energy = f64::INFINITY;
    let mut accepted: Option<(Vec<usize>, f64, usize)> = None;
    for t in 0..max_tries {
        let mut rng = stream_rng(seed ^ 0x4944_5446, t as u64);
        let subset = crate::rip::sample_subset(&mut rng, m_cols, m);
        let mut energy = 0.0;
        for (a, &i) in subset.iter().enumerate() {
            for &j in subset.iter().skip(a + 1) {
                energy += 2.0 * gram[(i, j)] * gram[(i, j)];
            }
        }
        best_energy = best_energy.min(energy);
        if energy <= threshold + 1e-15 {
            accepted = Some((subset, energy, t + 1));
            break;
        }
    }
    let Some((subset, gram_energy, tries)) = accepted else {
        return Err(Error::BudgetExhausted(format!(
            "no subset within {max_tries} tries; best Gram energy {best_energy:.6e} vs threshold {threshold:.6e}"
        )));
    };

    let inf_m = BlockSpace::simple(ExtExponent::Infinity, m)?;
    let l2_u = BlockSpace::simple(ExtExponent::TWO, lvl.u)?;
    let inf_v = BlockSpace::simple(ExtExponent::Infinity, lvl.v)?;

    // B e_i = g_{S_i}.
    let mut b_mat = DMatrix::zeros(lvl.u, m);
    for (i, &col) in subset.iter().enumerate() {
        b_mat.set_column(i, &lvl.columns.column(col));
    }
    let b_op = DenseOperator::new(b_mat, inf_m.clone(), l2_u)?;
    let b_norm = op_norm(&b_op, &OpNormOptions::default())?.upper;
    if b_norm > 2.0 + 1e-9 {
        return Err(Error::HypothesisFailed(format!("‖B‖ = {b_norm:.6} exceeds 2")));
    }

    // P: coordinate projection of ℓ∞^{v_n} onto the S coordinates.
    let mut p_mat = DMatrix::zeros(m, lvl.v);
    for (i, &col) in subset.iter().enumerate() {
        p_mat[(i, col)] = 1.0;
    }
    let p_op = DenseOperator::new(p_mat, inf_v, inf_m.clone())?;

    // U = G_S; A = U^{-1} on ℓ∞^m, ‖A‖ exactly the max row ℓ1 norm.
    let g_s = DMatrix::from_fn(m, m, |i, j| gram[(subset[i], subset[j])]);
    let u_inv = g_s
        .try_inverse()
        .ok_or_else(|| Error::HypothesisFailed("Gram submatrix singular".into()))?;
    let a_norm = (0..m)
        .map(|i| (0..m).map(|j| u_inv[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    if a_norm > 2.0 + 1e-9 {
        return Err(Error::HypothesisFailed(format!("‖A‖ = {a_norm:.6} exceeds 2")));
    }
    let a_op = DenseOperator::new(u_inv, inf_m.clone(), inf_m)?;

    let t_n = build_t_n(family, n)?;
    let recon = compose(&a_op, &compose(&p_op, &compose(&t_n, &b_op)?)?)?;
    let reconstruction_error = (recon.matrix - DMatrix::<f64>::identity(m, m)).amax();
    Ok(IdentityFactorization {
        a_op: Some(a_op),
        p_op: Some(p_op),
        b_op: Some(b_op),
        subset,
        reconstruction_error,
        gram_energy,
        a_norm,
        b_norm,
        tries,
    })
}

/// Given J: E → ℓ∞^m with certified ‖x‖ ≤ ‖Jx‖ and any T: E → sup-type
/// codomain, produce A with T = A∘J and ‖A‖_{∞→∞} ≤ ‖T‖ up to LP rounding.
/// Each row of T is expressed as a minimal-ℓ1 signed combination of the
/// rows of J.
pub fn factor_through_embedding(j_emb: &DenseOperator, t: &DenseOperator) -> Result<DenseOperator> {
    if j_emb.domain.total_dim != t.domain.total_dim {
        return Err(Error::SpaceMismatch("embedding and T domains differ".into()));
    }
    if !j_emb.codomain.is_sup_type() {
        return Err(Error::SpaceMismatch("embedding must land in a sup-type space".into()));
    }
    let m = j_emb.codomain.total_dim;
    let k = t.codomain.total_dim;
    let mut a = DMatrix::zeros(k, m);
    for row in 0..k {
        let g = t.matrix.row(row).transpose();
        let coeffs = min_l1_combination(&j_emb.matrix, &g).map_err(|e| match e {
            Error::LpInfeasible { detail, .. } => Error::LpInfeasible { row, detail },
            other => other,
        })?;
        a.set_row(row, &coeffs.transpose());
    }
    let a_op = DenseOperator::new(a, j_emb.codomain.clone(), t.codomain.clone())?;
    let recon = compose(&a_op, j_emb)?;
    let gap = (recon.matrix - &t.matrix).amax();
    if gap > RECON_TOL {
        return Err(Error::HypothesisFailed(format!(
            "reconstruction gap {gap:.3e} exceeds tolerance"
        )));
    }
    Ok(a_op)
}

/// Per-block embedding factorization for a block-diagonal T and matching
/// nets; A = diag(A_n) with ‖A‖ ≤ max_n ‖T_n‖.
pub fn factor_through_l(t: &DenseOperator, nets: &[NetEmbedding]) -> Result<DenseOperator> {
    if nets.len() != t.domain.blocks.len() || nets.len() != t.codomain.blocks.len() {
        return Err(Error::SpaceMismatch("one net per block required".into()));
    }
    let mut blocks = Vec::with_capacity(nets.len());
    for (n, net) in nets.iter().enumerate() {
        let dr = t.domain.block_range(n);
        let cr = t.codomain.block_range(n);
        let sub = t.matrix.view((cr.start, dr.start), (cr.len(), dr.len())).into_owned();
        let t_n = DenseOperator::new(
            sub,
            BlockSpace::simple(t.domain.blocks[n].inner, dr.len())?,
            BlockSpace::simple(t.codomain.blocks[n].inner, cr.len())?,
        )?;
        blocks.push(factor_through_embedding(&net.operator, &t_n)?);
    }
    block_diag(&blocks, ExtExponent::CZero, t.codomain.outer)
}

/// A certified finite-dimensional witness: J_n maps ℓ2^{d_n} onto a
/// subspace of T's n-th domain block on which T is bounded below.
#[derive(Debug, Clone)]
pub struct Witness {
    pub j_n: DenseOperator,
    pub epsilon: f64,
}

/// K ≈ A∘T∘B where B = diag(J_n) routes K's domain blocks through the
/// witness subspaces and A solves the per-block embedding LPs.
pub fn factor_k_through_witnessed_t(
    t: &DenseOperator,
    witnesses: &[Witness],
    k: &DenseOperator,
) -> Result<(DenseOperator, DenseOperator)> {
    let levels = witnesses.len();
    if levels != t.domain.blocks.len()
        || levels != t.codomain.blocks.len()
        || levels != k.domain.blocks.len()
        || levels != k.codomain.blocks.len()
    {
        return Err(Error::SpaceMismatch("witness count must match block count".into()));
    }
    let mut a_blocks = Vec::with_capacity(levels);
    let mut b_blocks = Vec::with_capacity(levels);
    for (n, w) in witnesses.iter().enumerate() {
        let dr = t.domain.block_range(n);
        let cr = t.codomain.block_range(n);
        if w.j_n.codomain.total_dim != dr.len()
            || w.j_n.domain.total_dim != k.domain.block_range(n).len()
        {
            return Err(Error::SpaceMismatch(format!("witness {n} dimensions off")));
        }
        if w.epsilon <= 0.0 {
            return Err(Error::HypothesisFailed(format!("witness {n}: epsilon must be positive")));
        }
        // Witness normalization: (1/ε)‖x‖ ≤ ‖J_n x‖ ≤ (2/ε)‖x‖, checked
        // exactly via singular values on the ℓ2 block.
        let svals = w.j_n.matrix.clone().svd(false, false).singular_values;
        let (smin, smax) = (svals.min(), svals.max());
        if smin < 1.0 / w.epsilon - 1e-9 || smax > 2.0 / w.epsilon + 1e-9 {
            return Err(Error::HypothesisFailed(format!(
                "witness {n}: singular range [{smin:.4}, {smax:.4}] outside [1/ε, 2/ε]"
            )));
        }
        let t_block = t.matrix.view((cr.start, dr.start), (cr.len(), dr.len())).into_owned();
        let tj = DenseOperator::new(
            &t_block * &w.j_n.matrix,
            w.j_n.domain.clone(),
            BlockSpace::simple(ExtExponent::Infinity, cr.len())?,
        )?;
        // ‖T J_n x‖ ≥ ε‖J_n x‖ ≥ ‖x‖ makes T∘J_n a 1-lower embedding; an
        // observed violation on a norming direction refuses the witness.
        let lower_probe = embedding_lower_probe(&tj);
        if lower_probe < 1.0 - 1e-7 {
            return Err(Error::HypothesisFailed(format!(
                "witness {n}: ‖T J x‖ >= ‖x‖ fails, observed ratio {lower_probe:.4}"
            )));
        }
        let k_block = DenseOperator::new(
            k.matrix
                .view(
                    (k.codomain.block_range(n).start, k.domain.block_range(n).start),
                    (k.codomain.block_range(n).len(), k.domain.block_range(n).len()),
                )
                .into_owned(),
            w.j_n.domain.clone(),
            BlockSpace::simple(k.codomain.blocks[n].inner, k.codomain.block_range(n).len())?,
        )?;
        a_blocks.push((n, factor_through_embedding(&tj, &k_block)?));
        b_blocks.push(w.j_n.clone());
    }
    // Assemble A against T's full codomain and B against its full domain.
    let mut a_mat = DMatrix::zeros(k.codomain.total_dim, t.codomain.total_dim);
    for (n, a_n) in &a_blocks {
        let rr = k.codomain.block_range(*n);
        let cc = t.codomain.block_range(*n);
        a_mat.view_mut((rr.start, cc.start), (rr.len(), cc.len())).copy_from(&a_n.matrix);
    }
    let a = DenseOperator::new(a_mat, t.codomain.clone(), k.codomain.clone())?;
    let mut b_mat = DMatrix::zeros(t.domain.total_dim, k.domain.total_dim);
    for (n, j_n) in b_blocks.iter().enumerate() {
        let rr = t.domain.block_range(n);
        let cc = k.domain.block_range(n);
        b_mat.view_mut((rr.start, cc.start), (rr.len(), cc.len())).copy_from(&j_n.matrix);
    }
    let b = DenseOperator::new(b_mat, k.domain.clone(), t.domain.clone())?;
    let recon = compose(&a, &compose(t, &b)?)?;
    let gap = (recon.matrix - &k.matrix).amax();
    if gap > RECON_TOL {
        return Err(Error::HypothesisFailed(format!("K - ATB gap {gap:.3e}")));
    }
    Ok((a, b))
}

/// Sampled lower bound for min ‖Jx‖_∞ over unit x, sharpened by a descent
/// from the worst sample. A value below 1 certifies a violation; a value
/// at or above 1 is evidence, not proof.
fn embedding_lower_probe(j: &DenseOperator) -> f64 {
    let d = j.domain.total_dim;
    let mut worst = f64::INFINITY;
    let mut worst_x = DVector::from_element(d, (d as f64).sqrt().recip());
    for s in 0..512u64 {
        let mut rng = stream_rng(0x4c4f_5745, s);
        let x = DVector::from_vec(crate::rng::random_unit_vector(&mut rng, d));
        let r = (&j.matrix * &x).amax();
        if r < worst {
            worst = r;
            worst_x = x;
        }
    }
    // Coordinate descent around the worst direction.
    let mut step = 0.5;
    while step > 1e-6 {
        let mut improved = false;
        for i in 0..d {
            for sgn in [1.0, -1.0] {
                let mut cand = worst_x.clone();
                cand[i] += sgn * step;
                let nn = cand.norm();
                if nn > 0.0 {
                    cand /= nn;
                    let r = (&j.matrix * &cand).amax();
                    if r < worst {
                        worst = r;
                        worst_x = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    worst
}
