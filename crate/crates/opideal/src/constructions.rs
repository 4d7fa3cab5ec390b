//! Parameter schedules and the concrete operators built from a column
//! family: analysis operators T_n, masked diagonals T_M, formal inclusions,
//! and certified net embeddings into ℓ∞.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rip::RipFamily;
use crate::rng::{random_unit_vector, stream_rng};
use crate::spaces::{norming_functional, BlockSpace, DenseOperator, ExtExponent};

/// s_n = (2u_n)^{p/2} n^p for p ≥ 2, and 2 u_n n² for p ≤ 2.
/// Both branches agree at p = 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SValue {
    pub value: u64,
    /// False when the exponent is non-integral and the value was ceiled.
    pub exact: bool,
}

pub fn s_of(p: f64, u: usize, n: usize) -> Result<SValue> {
    if p < 1.0 || u == 0 || n == 0 {
        return Err(Error::InvalidArgument("s_of needs p >= 1, u >= 1, n >= 1".into()));
    }
    if p <= 2.0 {
        return Ok(SValue { value: 2 * u as u64 * (n as u64).pow(2), exact: true });
    }
    let half_p = p / 2.0;
    if half_p.fract() == 0.0 {
        let e = half_p as u32;
        let value = (2 * u as u64).pow(e) * (n as u64).pow(2 * e);
        Ok(SValue { value, exact: true })
    } else {
        let raw = (2.0 * u as f64).powf(half_p) * (n as f64).powf(p);
        Ok(SValue { value: raw.ceil() as u64, exact: false })
    }
}

/// A finite schedule (p, (u_n, v_n)) with the derived s_n values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub p: f64,
    pub levels: Vec<(usize, usize)>,
    pub s: Vec<SValue>,
}

impl ParamSchedule {
    pub fn new(p: f64, levels: Vec<(usize, usize)>) -> Result<Self> {
        if !(1.0..f64::INFINITY).contains(&p) {
            return Err(Error::InvalidExponent(p));
        }
        if levels.is_empty() || levels.iter().any(|&(u, v)| u == 0 || v == 0) {
            return Err(Error::InvalidArgument("schedule needs nonempty positive levels".into()));
        }
        let s = levels
            .iter()
            .enumerate()
            .map(|(i, &(u, _))| s_of(p, u, i + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamSchedule { p, levels, s })
    }

    /// Named desk-scale presets. The exponential hypothesis on u_n is not
    /// attainable at these sizes; schedule_check reports that honestly.
    pub fn preset(name: &str) -> Option<ParamSchedule> {
        match name {
            "tiny" => ParamSchedule::new(2.0, vec![(2, 6), (16, 20), (24, 40)]).ok(),
            "small" => ParamSchedule::new(2.0, vec![(4, 12), (40, 60), (96, 256)]).ok(),
            _ => None,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// 1-based accessors.
    pub fn u(&self, n: usize) -> usize {
        self.levels[n - 1].0
    }

    pub fn v(&self, n: usize) -> usize {
        self.levels[n - 1].1
    }

    pub fn s_n(&self, n: usize) -> SValue {
        self.s[n - 1]
    }

    /// U = (⊕ ℓ2^{u_n})_{ℓp}.
    pub fn space_u(&self) -> BlockSpace {
        BlockSpace::new(
            self.levels.iter().map(|&(u, _)| (ExtExponent::TWO, u)).collect(),
            ExtExponent::Finite(self.p),
        )
        .expect("levels validated")
    }

    /// V = (⊕ ℓ∞^{v_n})_{c0}.
    pub fn space_v(&self) -> BlockSpace {
        BlockSpace::new(
            self.levels.iter().map(|&(_, v)| (ExtExponent::Infinity, v)).collect(),
            ExtExponent::CZero,
        )
        .expect("levels validated")
    }

    /// W = (⊕ ℓ∞^{v_n})_{ℓ∞}, the bidual-side home of the Hahn–Banach
    /// extensions.
    pub fn space_w(&self) -> BlockSpace {
        self.space_v().with_outer(ExtExponent::Infinity)
    }

    /// V* ≅ (⊕ ℓ1^{v_n})_{ℓ1}.
    pub fn space_v_star(&self) -> BlockSpace {
        self.space_v().dual_space().expect("c0-sum has a dual")
    }

    /// Predual of U: (⊕ ℓ2^{u_n})_{c0} at p = 1, ℓq-sum otherwise.
    pub fn space_u_star(&self) -> BlockSpace {
        let outer = if self.p == 1.0 {
            ExtExponent::CZero
        } else {
            ExtExponent::Finite(self.p).conjugate()
        };
        self.space_u().with_outer(outer)
    }

    /// Codomain of the formal inclusion: c0 re-blocked as (⊕ ℓ∞^{u_n})_{c0}.
    pub fn space_v_ublocked(&self) -> BlockSpace {
        BlockSpace::new(
            self.levels.iter().map(|&(u, _)| (ExtExponent::Infinity, u)).collect(),
            ExtExponent::CZero,
        )
        .expect("levels validated")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelCheck {
    pub n: usize,
    /// u_n ≥ 19 n³ (6n+1)^{u_1+…+u_{n−1}}, evaluated in big-integer
    /// arithmetic.
    pub u_growth_holds: bool,
    /// Decimal digit count of the exponential lower bound on u_n.
    pub u_growth_rhs_digits: usize,
    /// v_n ≥ 9 n³ s_n.
    pub v_growth_holds: bool,
    pub s_n: SValue,
}

/// Per-level report on the schedule hypotheses. Never overflows: the
/// right-hand sides are computed exactly as big integers.
pub fn schedule_check(schedule: &ParamSchedule) -> Vec<LevelCheck> {
    let mut prefix_u: u64 = 0;
    let mut out = Vec::with_capacity(schedule.num_levels());
    for n in 1..=schedule.num_levels() {
        let (u, v) = schedule.levels[n - 1];
        let n_big = BigUint::from(n as u64);
        let rhs2 = BigUint::from(19u32)
            * n_big.pow(3)
            * BigUint::from(6 * n as u64 + 1).pow(prefix_u as u32);
        let u_growth_holds = BigUint::from(u as u64) >= rhs2;
        let s_n = schedule.s_n(n);
        let rhs3 = BigUint::from(9u32) * BigUint::from(n as u64).pow(3) * BigUint::from(s_n.value);
        let v_growth_holds = BigUint::from(v as u64) >= rhs3;
        out.push(LevelCheck {
            n,
            u_growth_holds,
            u_growth_rhs_digits: rhs2.to_string().len(),
            v_growth_holds,
            s_n,
        });
        prefix_u += u as u64;
    }
    out
}

/// T_n: ℓ2^{u_n} → ℓ∞^{v_n}, x ↦ (⟨x, g_i^{(n)}⟩)_i. Rows are the columns
/// of the family transposed; the unit columns make ‖T_n‖ = 1 exactly.
pub fn build_t_n(family: &RipFamily, n: usize) -> Result<DenseOperator> {
    let lvl = family.level(n)?;
    DenseOperator::new(
        lvl.columns.transpose(),
        BlockSpace::simple(ExtExponent::TWO, lvl.u)?,
        BlockSpace::simple(ExtExponent::Infinity, lvl.v)?,
    )
}

/// A masked diagonal diag(T_n)_{n∈mask}: U → V, zero on levels off the mask.
#[derive(Debug, Clone)]
pub struct MaskedDiagonal {
    /// 1-based level indices carried by the operator.
    pub mask: BTreeSet<usize>,
    pub realized: DenseOperator,
}

pub fn build_t_m(
    schedule: &ParamSchedule,
    family: &RipFamily,
    mask: &BTreeSet<usize>,
) -> Result<MaskedDiagonal> {
    check_family_matches(schedule, family)?;
    if let Some(&bad) = mask.iter().find(|&&n| n == 0 || n > schedule.num_levels()) {
        return Err(Error::InvalidArgument(format!("mask level {bad} out of range")));
    }
    let domain = schedule.space_u();
    let codomain = schedule.space_v();
    let mut m = DMatrix::zeros(codomain.total_dim, domain.total_dim);
    for n in 1..=schedule.num_levels() {
        if mask.contains(&n) {
            let t_n = build_t_n(family, n)?;
            let rows = codomain.block_range(n - 1);
            let cols = domain.block_range(n - 1);
            m.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
                .copy_from(&t_n.matrix);
        }
    }
    Ok(MaskedDiagonal {
        mask: mask.clone(),
        realized: DenseOperator::new(m, domain, codomain)?,
    })
}

/// Diag(T_n)_{n∈N} restricted to the listed levels only: maps
/// (⊕_{n∈N} ℓ2^{u_n})_{ℓp} → (⊕_{n∈N} ℓ∞^{v_n})_{c0}.
pub fn build_diag_restricted(
    schedule: &ParamSchedule,
    family: &RipFamily,
    levels: &BTreeSet<usize>,
) -> Result<DenseOperator> {
    check_family_matches(schedule, family)?;
    if levels.is_empty() {
        return Err(Error::InvalidArgument("restricted diagonal needs levels".into()));
    }
    let ops = levels
        .iter()
        .map(|&n| build_t_n(family, n))
        .collect::<Result<Vec<_>>>()?;
    crate::spaces::block_diag(&ops, ExtExponent::Finite(schedule.p), ExtExponent::CZero)
}

/// I_{U,V}: the diagonal of formal identities ℓ2^{u_n} → ℓ∞^{u_n}.
pub fn build_formal_inclusion(schedule: &ParamSchedule) -> DenseOperator {
    let domain = schedule.space_u();
    let codomain = schedule.space_v_ublocked();
    let d = domain.total_dim;
    DenseOperator::new(DMatrix::identity(d, d), domain, codomain).expect("square identity")
}

fn check_family_matches(schedule: &ParamSchedule, family: &RipFamily) -> Result<()> {
    if family.num_levels() < schedule.num_levels() {
        return Err(Error::SpaceMismatch("family has fewer levels than schedule".into()));
    }
    for n in 1..=schedule.num_levels() {
        let lvl = family.level(n)?;
        if (lvl.u, lvl.v) != schedule.levels[n - 1] {
            return Err(Error::SpaceMismatch(format!(
                "level {n}: family ({}, {}) vs schedule {:?}",
                lvl.u,
                lvl.v,
                schedule.levels[n - 1]
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetMethod {
    /// Identity rows; the domain already carries the sup norm.
    Identity,
    /// Signs ±1 in dimension one.
    SignPair,
    /// Equispaced angular net in dimension two; lower bound certified on a
    /// dense angular grid minus a Lipschitz slack.
    AngularGrid,
    /// Deterministic latitude/longitude net in dimension three, grid
    /// certified with Lipschitz slack.
    SphericalGrid,
    /// Seeded random net with greedy thinning; lower bound is empirical
    /// (sampled directions plus descent), not a proof.
    RandomSampled,
}

/// An embedding ℓ_p^d → ℓ∞^m with ‖x‖ ≤ ‖Kx‖ ≤ distortion·‖x‖, rows scaled
/// so the lower bound holds by construction of the certificate.
#[derive(Debug, Clone)]
pub struct NetEmbedding {
    pub operator: DenseOperator,
    pub distortion: f64,
    pub method: NetMethod,
}

/// Build K_n / L_n style embeddings. `rows` defaults to a count sufficient
/// for the requested distortion where a closed form exists.
pub fn build_net_embedding(
    inner_p: ExtExponent,
    dim: usize,
    distortion_target: f64,
    rows: Option<usize>,
    seed: u64,
) -> Result<NetEmbedding> {
    if !(1.0 < distortion_target && distortion_target <= 2.0) {
        return Err(Error::InvalidArgument(
            "distortion target must lie in (1, 2]".into(),
        ));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("net embedding needs dim >= 1".into()));
    }
    let domain = BlockSpace::simple(inner_p, dim)?;

    if inner_p.is_sup() {
        let op = DenseOperator::new(
            DMatrix::identity(dim, dim),
            domain,
            BlockSpace::simple(ExtExponent::Infinity, dim)?,
        )?;
        return Ok(NetEmbedding { operator: op, distortion: 1.0, method: NetMethod::Identity });
    }
    if dim == 1 {
        let op = DenseOperator::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            domain,
            BlockSpace::simple(ExtExponent::Infinity, 2)?,
        )?;
        return Ok(NetEmbedding { operator: op, distortion: 1.0, method: NetMethod::SignPair });
    }

    match dim {
        2 => net_dim2(inner_p, distortion_target, rows, domain),
        3 => net_dim3(inner_p, distortion_target, rows, domain),
        _ => net_random(inner_p, dim, distortion_target, rows, domain, seed),
    }
}

/// Rows = norming functionals of equispaced directions on the circle.
fn net_dim2(
    inner_p: ExtExponent,
    target: f64,
    rows: Option<usize>,
    domain: BlockSpace,
) -> Result<NetEmbedding> {
    let m = rows.unwrap_or_else(|| {
        // 1/cos(π/m) ≤ target for the Euclidean case; reuse as default.
        let needed = std::f64::consts::PI / (1.0 / target).acos();
        (needed.ceil() as usize).max(4)
    });
    let mut f = DMatrix::zeros(m, 2);
    for k in 0..m {
        let th = std::f64::consts::TAU * k as f64 / m as f64;
        let dir = DVector::from_vec(vec![th.cos(), th.sin()]);
        let row = norming_functional(&dir, &domain);
        f.set_row(k, &row.transpose());
    }
    // Certified lower bound for min_θ max_k ⟨x(θ), f_k⟩ / ‖x(θ)‖_p over a
    // dense angular grid; the slack covers the Lipschitz constant of the
    // ratio in the Euclidean angle (≤ 5 for any p ∈ [1, ∞)).
    let grid = 200_000usize;
    let mut lower = f64::INFINITY;
    for g in 0..grid {
        let th = std::f64::consts::TAU * g as f64 / grid as f64;
        let x = [th.cos(), th.sin()];
        let num = (0..m)
            .map(|k| f[(k, 0)] * x[0] + f[(k, 1)] * x[1])
            .fold(f64::NEG_INFINITY, f64::max);
        let den = crate::spaces::pnorm(&x, inner_p);
        lower = lower.min(num / den);
    }
    let slack = 5.0 * std::f64::consts::TAU / grid as f64;
    let certified = lower - slack;
    finish_net(f, domain, certified, target, m, NetMethod::AngularGrid)
}

/// Deterministic latitude/longitude net on the 2-sphere.
fn net_dim3(
    inner_p: ExtExponent,
    target: f64,
    rows: Option<usize>,
    domain: BlockSpace,
) -> Result<NetEmbedding> {
    let m = rows.unwrap_or(200);
    // Directions from a Fibonacci sphere, rows their norming functionals.
    let mut f = DMatrix::zeros(m, 3);
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    for k in 0..m {
        let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let phi = std::f64::consts::TAU * (k as f64 / golden).fract();
        let dir = DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z]);
        let row = norming_functional(&dir, &domain);
        f.set_row(k, &row.transpose());
    }
    // Lat/long verification grid with analytic mesh width.
    let nth = 700usize;
    let nph = 1400usize;
    let mut lower = f64::INFINITY;
    for it in 0..=nth {
        let th = std::f64::consts::PI * it as f64 / nth as f64;
        let (st, ct) = th.sin_cos();
        for ip in 0..nph {
            let ph = std::f64::consts::TAU * ip as f64 / nph as f64;
            let x = [st * ph.cos(), st * ph.sin(), ct];
            let num = (0..m)
                .map(|k| f[(k, 0)] * x[0] + f[(k, 1)] * x[1] + f[(k, 2)] * x[2])
                .fold(f64::NEG_INFINITY, f64::max);
            let den = crate::spaces::pnorm(&x, inner_p);
            lower = lower.min(num / den);
        }
    }
    let mesh = (std::f64::consts::PI / nth as f64).max(std::f64::consts::TAU / nph as f64);
    let slack = 9.0 * mesh;
    finish_net(f, domain, lower - slack, target, m, NetMethod::SphericalGrid)
}

/// Seeded random rows with greedy thinning; the certificate is empirical.
fn net_random(
    inner_p: ExtExponent,
    dim: usize,
    target: f64,
    rows: Option<usize>,
    domain: BlockSpace,
    seed: u64,
) -> Result<NetEmbedding> {
    let m = rows.unwrap_or(64 * dim * dim);
    let mut rng = stream_rng(seed, 0x4e45_54);
    let mut candidates: Vec<DVector<f64>> = Vec::with_capacity(2 * m);
    for i in 0..domain.total_dim {
        for sign in [1.0, -1.0] {
            let mut e = DVector::zeros(dim);
            e[i] = sign;
            candidates.push(norming_functional(&e, &domain));
        }
    }
    while candidates.len() < 4 * m {
        let dir = DVector::from_vec(random_unit_vector(&mut rng, dim));
        candidates.push(norming_functional(&dir, &domain));
    }
    // Greedy thinning: drop rows nearly parallel to an already-kept row.
    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut cos_cut = 0.999;
    while kept.len() < m && cos_cut > 0.5 {
        kept.clear();
        for c in &candidates {
            let cn = c.norm();
            if kept
                .iter()
                .all(|k| (k.dot(c) / (k.norm() * cn)).abs() < cos_cut)
            {
                kept.push(c.clone());
                if kept.len() == m {
                    break;
                }
            }
        }
        cos_cut -= 0.01;
    }
    let mut f = DMatrix::zeros(kept.len(), dim);
    for (k, row) in kept.iter().enumerate() {
        f.set_row(k, &row.transpose());
    }
    // Empirical lower bound: sampled directions plus the worst found.
    let mut lower = f64::INFINITY;
    for s in 0..20_000u64 {
        let mut r = stream_rng(seed, 0x4e45_5400 | s);
        let x = random_unit_vector(&mut r, dim);
        let num = (0..f.nrows())
            .map(|k| (0..dim).map(|j| f[(k, j)] * x[j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let den = crate::spaces::pnorm(&x, inner_p);
        lower = lower.min(num / den);
    }
    finish_net(f, domain, lower, target, m, NetMethod::RandomSampled)
}

fn finish_net(
    f: DMatrix<f64>,
    domain: BlockSpace,
    certified_lower: f64,
    target: f64,
    rows_used: usize,
    method: NetMethod,
) -> Result<NetEmbedding> {
    if certified_lower <= 0.0 {
        return Err(Error::BudgetExhausted(format!(
            "net of {rows_used} rows does not cover the dual sphere; increase rows"
        )));
    }
    let distortion = 1.0 / certified_lower;
    if distortion > target {
        let required = (rows_used as f64 * distortion / target).ceil() as usize;
        return Err(Error::BudgetExhausted(format!(
            "net distortion {distortion:.6} exceeds target {target}; roughly {required} rows needed"
        )));
    }
    let m = f.nrows();
    let scaled = f / certified_lower;
    let op = DenseOperator::new(
        scaled,
        domain,
        BlockSpace::simple(ExtExponent::Infinity, m)?,
    )?;
    Ok(NetEmbedding { operator: op, distortion, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opnorm::{op_norm, OpNormOptions};

    #[test]
    fn s_of_examples() {
        assert_eq!(s_of(2.0, 4, 1).unwrap(), SValue { value: 8, exact: true });
        assert_eq!(s_of(1.0, 3, 2).unwrap(), SValue { value: 24, exact: true });
        // Both branches of the definition agree at p = 2.
        for (u, n) in [(2usize, 1usize), (5, 2), (7, 3), (16, 4)] {
            let a = s_of(2.0, u, n).unwrap().value;
            assert_eq!(a, 2 * u as u64 * (n as u64).pow(2));
        }
        assert!(!s_of(3.0, 4, 1).unwrap().exact);
    }

    #[test]
    fn schedule_check_is_honest_at_desk_scale() {
        let sched = ParamSchedule::preset("tiny").unwrap();
        let checks = schedule_check(&sched);
        // At n = 1 the bound reads u_1 >= 19; tiny has u_1 = 2.
        assert!(!checks[0].u_growth_holds);
        assert!(checks.iter().skip(1).all(|c| !c.u_growth_holds));
        // Already at n = 2 for u_1 = 19 the bound exceeds 10^6.
        let big = ParamSchedule::new(2.0, vec![(19, 6), (1_000_000, 20)]).unwrap();
        let c = schedule_check(&big);
        assert!(c[0].u_growth_holds);
        assert!(!c[1].u_growth_holds);
        // RHS at n = 2 is 19 * 8 * 7^19 > 10^6.
        assert!(c[1].u_growth_rhs_digits > 6);
    }

    #[test]
    fn v_growth_at_n1() {
        // p = 2, u_1 = 19: s_1 = 38, so the bound requires v_1 >= 9 * 38.
        let ok = ParamSchedule::new(2.0, vec![(19, 9 * 38)]).unwrap();
        assert!(schedule_check(&ok)[0].v_growth_holds);
        let bad = ParamSchedule::new(2.0, vec![(19, 9 * 38 - 1)]).unwrap();
        assert!(!schedule_check(&bad)[0].v_growth_holds);
    }

    #[test]
    fn t_n_has_unit_norm_and_reproduces_columns() {
        let family = RipFamily::generate(&[(6, 10)], 3).unwrap();
        let t1 = build_t_n(&family, 1).unwrap();
        let b = op_norm(&t1, &OpNormOptions::default()).unwrap();
        assert!(b.is_exact());
        assert!((b.upper - 1.0).abs() < 1e-12);
        // i-th coordinate of T_n g_i is <g_i, g_i> = 1.
        let g2 = family.level(1).unwrap().column(2);
        let y = t1.apply(&g2).unwrap();
        assert!((y[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_diagonal_zero_on_empty_mask() {
        let sched = ParamSchedule::new(2.0, vec![(2, 4), (3, 5)]).unwrap();
        let family = RipFamily::generate(&sched.levels, 9).unwrap();
        let empty = build_t_m(&sched, &family, &BTreeSet::new()).unwrap();
        assert!(empty.realized.matrix.iter().all(|&x| x == 0.0));
        let full: BTreeSet<usize> = [1, 2].into_iter().collect();
        let all = build_t_m(&sched, &family, &full).unwrap();
        let b = op_norm(&all.realized, &OpNormOptions::default()).unwrap();
        assert!(b.is_exact());
        assert!((b.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_masks_add() {
        let sched = ParamSchedule::new(2.0, vec![(2, 4), (3, 5), (2, 6)]).unwrap();
        let family = RipFamily::generate(&sched.levels, 11).unwrap();
        let m1: BTreeSet<usize> = [1, 3].into_iter().collect();
        let m2: BTreeSet<usize> = [2].into_iter().collect();
        let union: BTreeSet<usize> = m1.union(&m2).copied().collect();
        let lhs = build_t_m(&sched, &family, &union).unwrap().realized;
        let rhs = build_t_m(&sched, &family, &m1)
            .unwrap()
            .realized
            .add(&build_t_m(&sched, &family, &m2).unwrap().realized)
            .unwrap();
        assert_eq!(lhs.matrix, rhs.matrix);
    }

    #[test]
    fn formal_inclusion_is_identity_with_norm_one() {
        let sched = ParamSchedule::new(2.0, vec![(3, 4)]).unwrap();
        let i_uv = build_formal_inclusion(&sched);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(i_uv.apply(&x).unwrap(), x);
        let b = op_norm(&i_uv, &OpNormOptions::default()).unwrap();
        assert!(b.is_exact());
        assert!((b.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn net_dim1_is_exact() {
        let net = build_net_embedding(ExtExponent::TWO, 1, 1.5, None, 0).unwrap();
        assert_eq!(net.method, NetMethod::SignPair);
        assert_eq!(net.distortion, 1.0);
        let y = net.operator.apply(&DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(y.as_slice(), &[2.0, -2.0]);
    }

    #[test]
    fn net_sup_domain_identity() {
        let net = build_net_embedding(ExtExponent::Infinity, 4, 2.0, None, 0).unwrap();
        assert_eq!(net.method, NetMethod::Identity);
        assert_eq!(net.distortion, 1.0);
    }

    #[test]
    fn net_l2_dim2_sixteen_rows() {
        let net = build_net_embedding(ExtExponent::TWO, 2, 2.0, Some(16), 0).unwrap();
        let bound = 1.0 / (std::f64::consts::PI / 16.0).cos();
        assert!(net.distortion <= bound + 1e-3, "distortion {}", net.distortion);
        // Exhaustive angular sweep of the realized distortion.
        let mut worst_lo = f64::INFINITY;
        let mut worst_hi = 0.0f64;
        for g in 0..100_000 {
            let th = std::f64::consts::TAU * g as f64 / 100_000.0;
            let x = DVector::from_vec(vec![th.cos(), th.sin()]);
            let y = net.operator.apply(&x).unwrap();
            let r = y.amax();
            worst_lo = worst_lo.min(r);
            worst_hi = worst_hi.max(r);
        }
        assert!(worst_lo >= 1.0 - 1e-9);
        assert!(worst_hi <= net.distortion + 1e-9);
    }

    #[test]
    fn net_dim3_within_target() {
        let net = build_net_embedding(ExtExponent::TWO, 3, 2.0, None, 0).unwrap();
        assert!(net.distortion <= 2.0);
        let mut rng = stream_rng(5, 0);
        for _ in 0..2_000 {
            let x = DVector::from_vec(random_unit_vector(&mut rng, 3));
            let r = net.operator.apply(&x).unwrap().amax();
            assert!(r >= 1.0 - 1e-9 && r <= net.distortion + 1e-9);
        }
    }
}
