//! Finite direct sums of p-norm spaces, vectors and dense operators.
//!
//! A [`BlockSpace`] is a finite stand-in for spaces of the form
//! (⊕ ℓ_r^{d_n})_outer. The c0 tag coincides with ℓ_∞ in norm on finite
//! blocks but is kept distinct so that duality bookkeeping (c0-sum ↦
//! ℓ_1-sum) stays faithful.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An extended exponent in [1, ∞] with a distinguished c0 tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtExponent {
    Finite(f64),
    Infinity,
    CZero,
}

impl ExtExponent {
    pub const ONE: ExtExponent = ExtExponent::Finite(1.0);
    pub const TWO: ExtExponent = ExtExponent::Finite(2.0);

    pub fn finite(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(ExtExponent::Finite(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    /// Conjugate exponent. c0 conjugates to 1; exponent 1 to ∞.
    pub fn conjugate(self) -> Self {
        match self {
            ExtExponent::Finite(p) if p == 1.0 => ExtExponent::Infinity,
            ExtExponent::Finite(p) => ExtExponent::Finite(p / (p - 1.0)),
            ExtExponent::Infinity | ExtExponent::CZero => ExtExponent::ONE,
        }
    }

    /// True for ∞ and c0, which share the sup norm on finite blocks.
    pub fn is_sup(self) -> bool {
        matches!(self, ExtExponent::Infinity | ExtExponent::CZero)
    }

    pub fn as_str(self) -> String {
        match self {
            ExtExponent::Finite(p) if p.fract() == 0.0 => format!("{}", p as u64),
            ExtExponent::Finite(p) => format!("{p}"),
            ExtExponent::Infinity => "inf".to_string(),
            ExtExponent::CZero => "c0".to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinity" => Ok(ExtExponent::Infinity),
            "c0" => Ok(ExtExponent::CZero),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad exponent '{other}'")))?;
                ExtExponent::finite(p)
            }
        }
    }
}

impl Serialize for ExtExponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.as_str())
    }
}

impl<'de> Deserialize<'de> for ExtExponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ExtExponent::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// p-norm of a slice under an extended exponent.
pub fn pnorm(xs: &[f64], p: ExtExponent) -> f64 {
    match p {
        ExtExponent::Infinity | ExtExponent::CZero => {
            xs.iter().fold(0.0, |m, x| m.max(x.abs()))
        }
        ExtExponent::Finite(p) if p == 1.0 => xs.iter().map(|x| x.abs()).sum(),
        ExtExponent::Finite(p) if p == 2.0 => xs.iter().map(|x| x * x).sum::<f64>().sqrt(),
        ExtExponent::Finite(p) => xs.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub inner: ExtExponent,
    pub dim: usize,
}

/// A finite direct sum (⊕ ℓ_{r_n}^{d_n})_outer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpace {
    pub blocks: Vec<Block>,
    pub outer: ExtExponent,
    pub total_dim: usize,
}

impl BlockSpace {
    pub fn new(blocks: Vec<(ExtExponent, usize)>, outer: ExtExponent) -> Result<Self> {
        if blocks.is_empty() || blocks.iter().any(|&(_, d)| d == 0) {
            return Err(Error::InvalidArgument(
                "block space needs at least one block, all dims >= 1".into(),
            ));
        }
        if blocks.iter().any(|&(e, _)| e == ExtExponent::CZero) {
            return Err(Error::InvalidArgument(
                "c0 tag is reserved for the outer norm".into(),
            ));
        }
        let total_dim = blocks.iter().map(|&(_, d)| d).sum();
        Ok(BlockSpace {
            blocks: blocks.into_iter().map(|(inner, dim)| Block { inner, dim }).collect(),
            outer,
            total_dim,
        })
    }

    /// Single block ℓ_p^d. Inner ∞ is tagged c0 outside so its dual exists.
    pub fn simple(p: ExtExponent, dim: usize) -> Result<Self> {
        let outer = if p.is_sup() { ExtExponent::CZero } else { p };
        let inner = if p == ExtExponent::CZero { ExtExponent::Infinity } else { p };
        BlockSpace::new(vec![(inner, dim)], outer)
    }

    /// Byte offsets of each block into the coordinate array.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.blocks.len() + 1);
        let mut acc = 0;
        for b in &self.blocks {
            offs.push(acc);
            acc += b.dim;
        }
        offs.push(acc);
        offs
    }

    pub fn block_range(&self, n: usize) -> std::ops::Range<usize> {
        let offs = self.offsets();
        offs[n]..offs[n + 1]
    }

    /// Collapse the mixed norm to a single exponent when possible.
    /// Blocks of dimension 1 are exponent-agnostic.
    pub fn uniform_exponent(&self) -> Option<ExtExponent> {
        if self.blocks.len() == 1 {
            return Some(self.blocks[0].inner);
        }
        let mut candidate: Option<ExtExponent> = None;
        for b in &self.blocks {
            if b.dim == 1 {
                continue;
            }
            match candidate {
                None => candidate = Some(b.inner),
                Some(c) if norms_agree(c, b.inner) => {}
                Some(_) => return None,
            }
        }
        match candidate {
            None => Some(self.outer),
            Some(c) if norms_agree(c, self.outer) => Some(self.outer),
            Some(_) => None,
        }
    }

    /// Norm is the sup of coordinate magnitudes.
    pub fn is_sup_type(&self) -> bool {
        matches!(self.uniform_exponent(), Some(e) if e.is_sup())
    }

    /// Norm is the Euclidean norm of the coordinates.
    pub fn is_l2_type(&self) -> bool {
        matches!(self.uniform_exponent(), Some(ExtExponent::Finite(p)) if p == 2.0)
    }

    /// Norm is the ℓ_1 norm of the coordinates.
    pub fn is_l1_type(&self) -> bool {
        matches!(self.uniform_exponent(), Some(ExtExponent::Finite(p)) if p == 1.0)
    }

    pub fn norm(&self, coords: &[f64]) -> Result<f64> {
        if coords.len() != self.total_dim {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim,
                got: coords.len(),
                context: "vector norm",
            });
        }
        let mut block_norms = Vec::with_capacity(self.blocks.len());
        let mut off = 0;
        for b in &self.blocks {
            block_norms.push(pnorm(&coords[off..off + b.dim], b.inner));
            off += b.dim;
        }
        Ok(pnorm(&block_norms, self.outer))
    }

    /// Dual space: conjugate every exponent; c0-sum ↦ ℓ_1-sum. Taking the
    /// dual of an ℓ_∞-sum is refused (that is bidual territory).
    pub fn dual_space(&self) -> Result<BlockSpace> {
        let outer = match self.outer {
            ExtExponent::Infinity => return Err(Error::DualOfSupSum),
            e => e.conjugate(),
        };
        let blocks = self
            .blocks
            .iter()
            .map(|b| (b.inner.conjugate(), b.dim))
            .collect();
        BlockSpace::new(blocks, outer)
    }

    /// Same coordinates under a different outer exponent.
    pub fn with_outer(&self, outer: ExtExponent) -> BlockSpace {
        BlockSpace {
            blocks: self.blocks.clone(),
            outer,
            total_dim: self.total_dim,
        }
    }
}

fn norms_agree(a: ExtExponent, b: ExtExponent) -> bool {
    a == b || (a.is_sup() && b.is_sup())
}

/// A concrete vector in a [`BlockSpace`].
#[derive(Debug, Clone)]
pub struct SpaceVector {
    pub coords: DVector<f64>,
    pub space: BlockSpace,
}

impl SpaceVector {
    pub fn new(coords: DVector<f64>, space: BlockSpace) -> Result<Self> {
        if coords.len() != space.total_dim {
            return Err(Error::DimensionMismatch {
                expected: space.total_dim,
                got: coords.len(),
                context: "space vector",
            });
        }
        Ok(SpaceVector { coords, space })
    }

    pub fn norm(&self) -> f64 {
        self.space.norm(self.coords.as_slice()).expect("length checked at construction")
    }
}

pub fn vector_norm(v: &SpaceVector) -> f64 {
    v.norm()
}

/// A dense matrix tagged with domain and codomain spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub domain: BlockSpace,
    pub codomain: BlockSpace,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>, domain: BlockSpace, codomain: BlockSpace) -> Result<Self> {
        if matrix.ncols() != domain.total_dim {
            return Err(Error::DimensionMismatch {
                expected: domain.total_dim,
                got: matrix.ncols(),
                context: "operator columns vs domain",
            });
        }
        if matrix.nrows() != codomain.total_dim {
            return Err(Error::DimensionMismatch {
                expected: codomain.total_dim,
                got: matrix.nrows(),
                context: "operator rows vs codomain",
            });
        }
        Ok(DenseOperator { matrix, domain, codomain })
    }

    pub fn identity(space: BlockSpace) -> Self {
        let d = space.total_dim;
        DenseOperator {
            matrix: DMatrix::identity(d, d),
            domain: space.clone(),
            codomain: space,
        }
    }

    pub fn zero(domain: BlockSpace, codomain: BlockSpace) -> Self {
        let m = DMatrix::zeros(codomain.total_dim, domain.total_dim);
        DenseOperator { matrix: m, domain, codomain }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.domain.total_dim {
            return Err(Error::DimensionMismatch {
                expected: self.domain.total_dim,
                got: x.len(),
                context: "operator apply",
            });
        }
        Ok(&self.matrix * x)
    }

    pub fn apply_vec(&self, x: &SpaceVector) -> Result<SpaceVector> {
        if x.space != self.domain {
            return Err(Error::SpaceMismatch("apply: vector space != operator domain".into()));
        }
        SpaceVector::new(self.apply(&x.coords)?, self.codomain.clone())
    }

    /// Adjoint: matrix transposed, spaces dualized and swapped.
    pub fn adjoint(&self) -> Result<DenseOperator> {
        DenseOperator::new(
            self.matrix.transpose(),
            self.codomain.dual_space()?,
            self.domain.dual_space()?,
        )
    }

    pub fn scale(&self, c: f64) -> DenseOperator {
        DenseOperator {
            matrix: &self.matrix * c,
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
        }
    }

    pub fn add(&self, other: &DenseOperator) -> Result<DenseOperator> {
        if self.domain != other.domain || self.codomain != other.codomain {
            return Err(Error::SpaceMismatch("add: spaces differ".into()));
        }
        DenseOperator::new(&self.matrix + &other.matrix, self.domain.clone(), self.codomain.clone())
    }
}

/// compose(a, b) = a ∘ b.
pub fn compose(a: &DenseOperator, b: &DenseOperator) -> Result<DenseOperator> {
    if b.codomain != a.domain {
        return Err(Error::SpaceMismatch(format!(
            "compose: codomain of inner ({:?} dims) != domain of outer ({:?} dims)",
            b.codomain.total_dim, a.domain.total_dim
        )));
    }
    DenseOperator::new(&a.matrix * &b.matrix, b.domain.clone(), a.codomain.clone())
}

/// Block-diagonal assembly. Each factor becomes one block of the domain and
/// one block of the codomain; factors must be single-block on both sides.
pub fn block_diag(
    ops: &[DenseOperator],
    domain_outer: ExtExponent,
    codomain_outer: ExtExponent,
) -> Result<DenseOperator> {
    if ops.is_empty() {
        return Err(Error::InvalidArgument("block_diag of zero operators".into()));
    }
    let mut dom_blocks = Vec::new();
    let mut cod_blocks = Vec::new();
    for op in ops {
        if op.domain.blocks.len() != 1 || op.codomain.blocks.len() != 1 {
            return Err(Error::SpaceMismatch(
                "block_diag factors must be single-block operators".into(),
            ));
        }
        dom_blocks.push((op.domain.blocks[0].inner, op.domain.blocks[0].dim));
        cod_blocks.push((op.codomain.blocks[0].inner, op.codomain.blocks[0].dim));
    }
    let domain = BlockSpace::new(dom_blocks, domain_outer)?;
    let codomain = BlockSpace::new(cod_blocks, codomain_outer)?;
    let mut m = DMatrix::zeros(codomain.total_dim, domain.total_dim);
    let mut r0 = 0;
    let mut c0 = 0;
    for op in ops {
        let (r, c) = (op.matrix.nrows(), op.matrix.ncols());
        m.view_mut((r0, c0), (r, c)).copy_from(&op.matrix);
        r0 += r;
        c0 += c;
    }
    DenseOperator::new(m, domain, codomain)
}

/// Zero every diagonal block whose (0-based) index is not in `mask`.
/// Requires equally many domain and codomain blocks.
pub fn mask_blocks(t: &DenseOperator, mask: &std::collections::BTreeSet<usize>) -> Result<DenseOperator> {
    let nb = t.domain.blocks.len();
    if t.codomain.blocks.len() != nb {
        return Err(Error::SpaceMismatch(
            "mask_blocks needs aligned domain/codomain block lists".into(),
        ));
    }
    if let Some(&bad) = mask.iter().find(|&&i| i >= nb) {
        return Err(Error::InvalidArgument(format!("mask index {bad} out of range")));
    }
    let mut m = t.matrix.clone();
    for n in 0..nb {
        if !mask.contains(&n) {
            let rows = t.codomain.block_range(n);
            let cols = t.domain.block_range(n);
            m.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
                .fill(0.0);
        }
    }
    DenseOperator::new(m, t.domain.clone(), t.codomain.clone())
}

/// Unit vector x (in the `space` norm) maximizing ⟨x, g⟩; the maximum equals
/// the dual norm of g. Returns the zero vector when g = 0.
pub fn norming_vector(g: &DVector<f64>, space: &BlockSpace) -> DVector<f64> {
    let mut out = DVector::zeros(space.total_dim);
    let mut block_duals = Vec::with_capacity(space.blocks.len());
    let mut off = 0;
    let mut parts: Vec<Vec<f64>> = Vec::with_capacity(space.blocks.len());
    for b in &space.blocks {
        let gb = &g.as_slice()[off..off + b.dim];
        let (x, val) = max_pairing_unit(gb, b.inner);
        parts.push(x);
        block_duals.push(val);
        off += b.dim;
    }
    let (weights, _) = max_pairing_unit(&block_duals, space.outer);
    let mut off = 0;
    for (i, b) in space.blocks.iter().enumerate() {
        for j in 0..b.dim {
            out[off + j] = weights[i] * parts[i][j];
        }
        off += b.dim;
    }
    out
}

/// Norming functional of v: ⟨v, f⟩ = ‖v‖_space with f of dual norm 1.
pub fn norming_functional(v: &DVector<f64>, space: &BlockSpace) -> DVector<f64> {
    // A norming functional of v in X is a norming vector of v in the
    // conjugate-exponent space.
    let conj = BlockSpace {
        blocks: space
            .blocks
            .iter()
            .map(|b| Block { inner: b.inner.conjugate(), dim: b.dim })
            .collect(),
        outer: space.outer.conjugate(),
        total_dim: space.total_dim,
    };
    norming_vector(v, &conj)
}

/// Unit vector of the ℓ_p ball maximizing the pairing with g.
fn max_pairing_unit(g: &[f64], p: ExtExponent) -> (Vec<f64>, f64) {
    let n = g.len();
    let q = p.conjugate();
    let dual = pnorm(g, q);
    if dual == 0.0 {
        return (vec![0.0; n], 0.0);
    }
    let x = match p {
        ExtExponent::Infinity | ExtExponent::CZero => {
            g.iter().map(|&gi| if gi >= 0.0 { 1.0 } else { -1.0 }).collect()
        }
        ExtExponent::Finite(pv) if pv == 1.0 => {
            let k = g
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap();
            let mut x = vec![0.0; n];
            x[k] = g[k].signum();
            x
        }
        ExtExponent::Finite(_) => {
            let qv = match q {
                ExtExponent::Finite(qv) => qv,
                // p = 1 handled above, so q is finite unless p = ∞,
                // which is also handled above.
                _ => unreachable!(),
            };
            g.iter()
                .map(|&gi| gi.signum() * (gi.abs() / dual).powf(qv - 1.0))
                .collect()
        }
    };
    (x, dual)
}
