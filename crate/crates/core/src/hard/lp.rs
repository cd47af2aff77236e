//! Dense two-phase simplex for tiny equality-form LPs and the moment-matching LP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cheb::{cheb_value, extrema_nodes, finite_minimax};
use crate::error::{invalid, LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Vec<usize>,
}

const PIVOT_TOL: f64 = 1e-11;

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the right-hand side.
    t: DMatrix<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.t.nrows() - 1
    }

    fn cols(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[(r, c)];
        let w = self.t.ncols();
        for j in 0..w {
            self.t[(r, j)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i != r {
                let f = self.t[(i, c)];
                if f != 0.0 {
                    for j in 0..w {
                        let v = self.t[(r, j)];
                        self.t[(i, j)] -= f * v;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes the objective row (stored as reduced costs `c_j − z_j`) over the
    /// columns `< allowed`, entering by Bland's rule.
    fn run(&mut self, allowed: usize) -> Result<()> {
        let m = self.rows();
        let obj = m;
        let rhs = self.cols();
        for _ in 0..10_000 {
            let Some(c) = (0..allowed).find(|&j| self.t[(obj, j)] > PIVOT_TOL) else {
                return Ok(());
            };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..m {
                let a = self.t[(i, c)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, rhs)] / a;
                    best = match best {
                        None => Some((ratio, i)),
                        Some((r, bi)) => {
                            if ratio < r - 1e-14 * r.abs().max(1.0)
                                || ((ratio - r).abs() <= 1e-14 * r.abs().max(1.0) && self.basis[i] < self.basis[bi])
                            {
                                Some((ratio, i))
                            } else {
                                Some((r, bi))
                            }
                        }
                    };
                }
            }
            let Some((_, r)) = best else {
                return Err(LabError::Infeasible("objective is unbounded".into()));
            };
            self.pivot(r, c);
        }
        Err(LabError::Numerical("simplex iteration limit".into()))
    }
}

/// Maximizes `cᵀx` subject to `Ax = b`, `x ≥ 0`.
pub fn simplex_max(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return invalid("LP dimensions disagree");
    }
    // phase 1 with one artificial per row, rows flipped so that b ≥ 0
    let mut t = DMatrix::zeros(m + 1, n + m + 1);
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = s * a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        t[(i, n + m)] = s * b[i];
    }
    // maximize −Σ artificials: reduced costs are the column sums of the rows
    for j in 0..n {
        t[(m, j)] = (0..m).map(|i| t[(i, j)]).sum();
    }
    t[(m, n + m)] = (0..m).map(|i| t[(i, n + m)]).sum();
    let mut tab = Tableau { t, basis: (n..n + m).collect() };
    tab.run(n)?;
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let infeas = tab.t[(m, n + m)];
    if infeas > 1e-9 * scale {
        return Err(LabError::Infeasible(format!("phase 1 residual {infeas:e}")));
    }
    // drive artificials out of the basis where possible; rows that cannot be pivoted are redundant
    let mut keep: Vec<usize> = Vec::new();
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| tab.t[(r, j)].abs() > 1e-9) {
                tab.pivot(r, c);
                keep.push(r);
            }
        } else {
            keep.push(r);
        }
    }
    // phase 2 tableau without artificial columns
    let mm = keep.len();
    let mut t2 = DMatrix::zeros(mm + 1, n + 1);
    let mut basis = Vec::with_capacity(mm);
    for (ri, &r) in keep.iter().enumerate() {
        for j in 0..n {
            t2[(ri, j)] = tab.t[(r, j)];
        }
        t2[(ri, n)] = tab.t[(r, n + m)];
        basis.push(tab.basis[r]);
    }
    for j in 0..n {
        t2[(mm, j)] = c[j] - (0..mm).map(|i| c[basis[i]] * t2[(i, j)]).sum::<f64>();
    }
    t2[(mm, n)] = -(0..mm).map(|i| c[basis[i]] * t2[(i, n)]).sum::<f64>();
    let mut tab2 = Tableau { t: t2, basis };
    tab2.run(n)?;
    let mut x = vec![0.0; n];
    for (i, &bj) in tab2.basis.iter().enumerate() {
        x[bj] = tab2.t[(i, n)].max(0.0);
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { x, objective, basis: tab2.basis })
}

/// Best basic feasible solution by enumerating every column subset of size `rank(A)`.
pub fn vertex_enumeration(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let (m, n) = a.shape();
    if n > 20 {
        return invalid("vertex enumeration is limited to 20 variables");
    }
    let bv = DVector::from_column_slice(b);
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let mut best: Option<LpSolution> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let cols: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let sub = DMatrix::from_fn(m, m, |i, j| a[(i, cols[j])]);
        let svd = sub.clone().svd(false, false);
        let smin = svd.singular_values.min();
        let smax = svd.singular_values.max();
        if !(smin > 1e-12 * smax) {
            continue;
        }
        let Some(xb) = sub.lu().solve(&bv) else { continue };
        if xb.iter().any(|&v| v < -1e-9 * scale) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (k, &j) in cols.iter().enumerate() {
            x[j] = xb[k].max(0.0);
        }
        let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
        if best.as_ref().map_or(true, |s| objective > s.objective) {
            best = Some(LpSolution { x, objective, basis: cols });
        }
    }
    best.ok_or_else(|| LabError::Infeasible("no basic feasible solution".into()))
}

/// The moment-matching LP on the Chebyshev extrema nodes: variables `(x, x′)`, rows
/// `Σx + Σx′ = 2d` and `Σ (x_i − x′_i) T_j(t_i) = 0` for `j ≤ K`, objective `Σ (x_i − x′_i)/λ_i`.
#[derive(Debug, Clone)]
pub struct MomentLp {
    pub k: usize,
    pub kappa: f64,
    pub d: usize,
    pub nodes: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl MomentLp {
    pub fn new(k: usize, kappa: f64, d: usize) -> Result<Self> {
        if k == 0 {
            return invalid("K must be at least 1");
        }
        if !(kappa > 1.0) {
            return invalid("kappa must exceed 1");
        }
        if d < 4 * (k + 2) {
            return invalid(format!("d = {d} is below 4(K+2)"));
        }
        let nodes = extrema_nodes(k, kappa)?.nodes;
        let p = k + 2;
        let mut a = DMatrix::zeros(k + 2, 2 * p);
        for i in 0..p {
            a[(0, i)] = 1.0;
            a[(0, p + i)] = 1.0;
            let t = (2.0 * nodes[i] - (kappa + 1.0)) / (kappa - 1.0);
            for j in 0..=k {
                let v = cheb_value(j, t);
                a[(j + 1, i)] = v;
                a[(j + 1, p + i)] = -v;
            }
        }
        let mut b = vec![0.0; k + 2];
        b[0] = 2.0 * d as f64;
        let c = (0..2 * p).map(|i| if i < p { 1.0 / nodes[i] } else { -1.0 / nodes[i - p] }).collect();
        Ok(MomentLp { k, kappa, d, nodes, a, b, c })
    }
}

/// Optimal `(x, x′)` of the moment LP together with its dual certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentSolution {
    pub k: usize,
    pub kappa: f64,
    pub d: usize,
    pub nodes: Vec<f64>,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub objective: f64,
    /// Finite minimax error `E` of `1/λ` on the nodes at degree `K`.
    pub minimax: f64,
    /// `|objective − 2dE| / (2dE)`.
    pub duality_gap: f64,
}

pub const DUALITY_TOL: f64 = 1e-6;

pub fn solve_moment_lp(k: usize, kappa: f64, d: usize) -> Result<MomentSolution> {
    let lp = MomentLp::new(k, kappa, d)?;
    let sol = simplex_max(&lp.a, &lp.b, &lp.c)?;
    let (e, _) = finite_minimax(&lp.nodes, k)?;
    let dual = 2.0 * d as f64 * e;
    let gap = (sol.objective - dual).abs() / dual;
    if !(gap <= DUALITY_TOL) {
        return Err(LabError::Numerical(format!(
            "duality gap {gap:e}: primal {} vs 2dE {dual}",
            sol.objective
        )));
    }
    let p = k + 2;
    Ok(MomentSolution {
        k,
        kappa,
        d,
        nodes: lp.nodes,
        x: sol.x[..p].to_vec(),
        x_prime: sol.x[p..].to_vec(),
        objective: sol.objective,
        minimax: e,
        duality_gap: gap,
    })
}

/// Mixes with the uniform vector `d/(K+2)` and then recombines with weights `(1 ± c₁)/2`.
pub fn strengthen(sol: &MomentSolution, c1: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(c1 > 0.0 && c1 < 1.0) {
        return invalid("c1 must lie in (0, 1)");
    }
    let u = sol.d as f64 / (sol.k + 2) as f64;
    let x: Vec<f64> = sol.x.iter().map(|v| 0.5 * (v + u)).collect();
    let xp: Vec<f64> = sol.x_prime.iter().map(|v| 0.5 * (v + u)).collect();
    let (hi, lo) = (0.5 * (1.0 + c1), 0.5 * (1.0 - c1));
    let xt = x.iter().zip(&xp).map(|(a, b)| hi * a + lo * b).collect();
    let xpt = x.iter().zip(&xp).map(|(a, b)| hi * b + lo * a).collect();
    Ok((xt, xpt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 2y, x + y + s1 = 4, x + 3y + s2 = 6 → (4, 0), value 12
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 0.0, 1.0, 3.0, 0.0, 1.0]);
        let s = simplex_max(&a, &[4.0, 6.0], &[3.0, 2.0, 0.0, 0.0]).unwrap();
        assert!((s.objective - 12.0).abs() < 1e-12);
        let v = vertex_enumeration(&a, &[4.0, 6.0], &[3.0, 2.0, 0.0, 0.0]).unwrap();
        assert!((v.objective - 12.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(simplex_max(&a, &[-1.0], &[1.0, 0.0]), Err(LabError::Infeasible(_))));
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!(simplex_max(&a, &[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn k1_kappa9_against_vertices() {
        let lp = MomentLp::new(1, 9.0, 90).unwrap();
        let s = solve_moment_lp(1, 9.0, 90).unwrap();
        let v = vertex_enumeration(&lp.a, &lp.b, &lp.c).unwrap();
        assert!((s.objective - v.objective).abs() <= 1e-8 * v.objective);
        // moments j = 0, 1 in the monomial basis
        for j in 0..=1 {
            let m: f64 = s.nodes.iter().zip(s.x.iter().zip(&s.x_prime)).map(|(l, (a, b))| (a - b) * l.powi(j)).sum();
            assert!(m.abs() < 1e-8 * 90.0 * 9f64.powi(j), "{j}: {m}");
        }
        assert!(s.objective > 0.0);
        // nodes 9, 5, 1: best line to 1/x equioscillates with E = 8/45 ... by hand
        let e = hand_minimax_3(9.0, 5.0, 1.0);
        assert!((s.minimax - e).abs() < 1e-12);
        assert!((s.objective - 180.0 * e).abs() < 1e-9);
    }

    /// Linear minimax of 1/x on three nodes by the alternation equations.
    fn hand_minimax_3(a: f64, b: f64, c: f64) -> f64 {
        // 1/a − (p + q a) = e, 1/b − (p + q b) = −e, 1/c − (p + q c) = e
        let q = (1.0 / a - 1.0 / c) / (a - c);
        let p_plus_e = 1.0 / c - q * c;
        // 1/b − p − q b = −e with p = p_plus_e − e
        (p_plus_e + q * b - 1.0 / b) / 2.0
    }

    #[test]
    fn strengthening_bounds() {
        let s = solve_moment_lp(3, 64.0, 400).unwrap();
        let c1 = 0.1;
        let (x, xp) = strengthen(&s, c1).unwrap();
        let lo = 400.0 / (2.0 * 5.0);
        for i in 0..5 {
            assert!(x[i] >= lo - 1e-9 && xp[i] >= lo - 1e-9);
            assert!((x[i] - xp[i]).abs() / x[i] <= 2.0 * c1 / (1.0 - c1));
        }
        let obj: f64 = s.nodes.iter().zip(x.iter().zip(&xp)).map(|(l, (a, b))| (a - b) / l).sum();
        assert!((obj - c1 * 400.0 * s.minimax).abs() < 1e-9 * obj.abs());
        assert!((x.iter().sum::<f64>() - 400.0).abs() < 1e-9);
        assert!(strengthen(&s, 1.0).is_err());
    }

    #[test]
    fn preconditions() {
        assert!(MomentLp::new(0, 9.0, 90).is_err());
        assert!(MomentLp::new(2, 1.0, 90).is_err());
        assert!(MomentLp::new(2, 9.0, 15).is_err());
    }
}
