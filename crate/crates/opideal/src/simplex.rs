//! Dense two-phase primal simplex for the small equality-form programs
//! produced by the embedding factorizations: min c·x, Ax = b, x ≥ 0.
//! Bland's rule keeps pivoting deterministic and cycle-free.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;

/// Optimal basic solution of min c·x subject to Ax = b, x ≥ 0.
pub fn solve_lp(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return Err(Error::InvalidArgument("lp shape mismatch".into()));
    }
    // Phase 1: artificial variables, rows flipped so b >= 0.
    let mut tab = DMatrix::zeros(m, n + m);
    let mut rhs = DVector::zeros(m);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            tab[(i, j)] = sign * a[(i, j)];
        }
        tab[(i, n + i)] = 1.0;
        rhs[i] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let phase1_cost = DVector::from_fn(n + m, |j, _| if j >= n { 1.0 } else { 0.0 });
    let obj = run_simplex(&mut tab, &mut rhs, &mut basis, &phase1_cost)?;
    if obj > 1e-7 {
        return Err(Error::LpInfeasible { row: 0, detail: format!("phase-1 objective {obj:.3e}") });
    }
    // Drive any artificial variable out of the basis; drop it if its row is
    // entirely zero on the structural columns (redundant constraint).
    for i in 0..m {
        if basis[i] >= n {
            let pivot_col = (0..n).find(|&j| tab[(i, j)].abs() > PIVOT_EPS);
            if let Some(j) = pivot_col {
                pivot(&mut tab, &mut rhs, &mut basis, i, j);
            }
        }
    }
    // Phase 2 on the structural columns only.
    let mut tab2 = tab.columns(0, n).into_owned();
    let mut rhs2 = rhs.clone();
    let mut rows_keep: Vec<usize> = Vec::new();
    let mut basis2: Vec<usize> = Vec::new();
    for i in 0..m {
        if basis[i] < n {
            rows_keep.push(i);
            basis2.push(basis[i]);
        }
    }
    if rows_keep.len() < m {
        let kept = DMatrix::from_fn(rows_keep.len(), n, |i, j| tab2[(rows_keep[i], j)]);
        let kept_rhs = DVector::from_fn(rows_keep.len(), |i, _| rhs2[rows_keep[i]]);
        tab2 = kept;
        rhs2 = kept_rhs;
    }
    run_simplex(&mut tab2, &mut rhs2, &mut basis2, c)?;
    let mut x = DVector::zeros(n);
    for (i, &bv) in basis2.iter().enumerate() {
        x[bv] = rhs2[i];
    }
    Ok(x)
}

/// Standard primal iterations with Bland's rule; returns the objective.
fn run_simplex(
    tab: &mut DMatrix<f64>,
    rhs: &mut DVector<f64>,
    basis: &mut [usize],
    cost: &DVector<f64>,
) -> Result<f64> {
    let (m, n) = tab.shape();
    let max_iters = 200 * (m + n) + 1000;
    for _ in 0..max_iters {
        // Reduced costs: c_j - c_B B^{-1} A_j, read off the tableau.
        let mut entering = None;
        for j in 0..n {
            if basis.contains(&j) {
                continue;
            }
            let mut red = cost[j];
            for i in 0..m {
                red -= cost[basis[i]] * tab[(i, j)];
            }
            if red < -PIVOT_EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else {
            let obj = (0..m).map(|i| cost[basis[i]] * rhs[i]).sum();
            return Ok(obj);
        };
        // Ratio test, ties broken by smallest basis index (Bland).
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if tab[(i, j)] > PIVOT_EPS {
                let ratio = rhs[i] / tab[(i, j)];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - PIVOT_EPS
                            || (ratio < lr + PIVOT_EPS && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((i, _)) = leave else {
            return Err(Error::LpInfeasible { row: j, detail: "unbounded column".into() });
        };
        pivot(tab, rhs, basis, i, j);
    }
    Err(Error::BudgetExhausted("simplex iteration cap".into()))
}

fn pivot(tab: &mut DMatrix<f64>, rhs: &mut DVector<f64>, basis: &mut [usize], r: usize, c: usize) {
    let (m, _n) = tab.shape();
    let p = tab[(r, c)];
    let mut row = tab.row(r).into_owned() / p;
    // Clamp pivot-row noise so repeated pivots stay stable.
    for v in row.iter_mut() {
        if v.abs() < PIVOT_EPS {
            *v = 0.0;
        }
    }
    tab.set_row(r, &row);
    rhs[r] /= p;
    for i in 0..m {
        if i != r {
            let f = tab[(i, c)];
            if f != 0.0 {
                let adj = &row * f;
                let mut cur = tab.row(i).into_owned();
                cur -= adj;
                tab.set_row(i, &cur);
                rhs[i] -= f * rhs[r];
            }
        }
    }
    basis[r] = c;
}

/// Express `g` as F^T t with minimal ℓ1 coefficient mass: used to place a
/// functional inside the absolute convex hull of the rows of F.
/// Returns t with Σ|t_i| minimal; errors when g is outside the span.
pub fn min_l1_combination(f_rows: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let m = f_rows.nrows();
    let d = f_rows.ncols();
    if g.len() != d {
        return Err(Error::InvalidArgument("combination target dim mismatch".into()));
    }
    // t = a - b with a, b >= 0: min Σ(a+b) s.t. F^T (a - b) = g.
    let mut a = DMatrix::zeros(d, 2 * m);
    for i in 0..d {
        for j in 0..m {
            a[(i, j)] = f_rows[(j, i)];
            a[(i, m + j)] = -f_rows[(j, i)];
        }
    }
    let c = DVector::from_element(2 * m, 1.0);
    let x = solve_lp(&a, g, &c)?;
    Ok(DVector::from_fn(m, |j, _| x[j] - x[m + j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_feasible_program() {
        // min x + y s.t. x + 2y = 4, x, y >= 0 -> (0, 2) with objective 2.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = DVector::from_vec(vec![4.0]);
        let c = DVector::from_vec(vec![1.0, 1.0]);
        let x = solve_lp(&a, &b, &c).unwrap();
        assert!((x[0] - 0.0).abs() < 1e-9 && (x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_handled() {
        // x - y = -3, min x + y -> (0, 3).
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![-3.0]);
        let c = DVector::from_vec(vec![1.0, 1.0]);
        let x = solve_lp(&a, &b, &c).unwrap();
        assert!((x[0]).abs() < 1e-9 && (x[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        // x = 1 and x = 2 simultaneously.
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let c = DVector::from_vec(vec![1.0]);
        assert!(matches!(solve_lp(&a, &b, &c), Err(Error::LpInfeasible { .. })));
    }

    #[test]
    fn redundant_row_tolerated() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![2.0, 4.0]);
        let c = DVector::from_vec(vec![1.0, 3.0]);
        let x = solve_lp(&a, &b, &c).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && x[1].abs() < 1e-9);
    }

    #[test]
    fn min_l1_reproduces_target() {
        // Rows span the plane; g = (1, 1) should come out exactly.
        let f = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let t = min_l1_combination(&f, &g).unwrap();
        let rebuilt = f.transpose() * &t;
        assert!((rebuilt - &g).norm() < 1e-9);
        // Mass 1 via the third row beats mass 2 via the first two.
        let mass: f64 = t.iter().map(|v| v.abs()).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn outside_span_is_infeasible() {
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let g = DVector::from_vec(vec![0.0, 1.0]);
        assert!(min_l1_combination(&f, &g).is_err());
    }
}
