//! Small dense-free linear algebra for nodal systems: a banded symmetric
//! matrix with Cholesky factorisation, and matrix-free conjugate gradients.

use crate::grid::Grid;

/// Symmetric band matrix stored by lower diagonals.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    // data[i * (bw + 1) + k] = A[i][i - k]
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    /// `diag(diagonal) + scale * K` with `K` the nodal stiffness of `grid`.
    pub fn diag_plus_stiffness(grid: &Grid, diagonal: &[f64], scale: f64) -> Self {
        let mut m = BandMatrix::zeros(grid.node_count(), grid.bandwidth());
        for (i, d) in diagonal.iter().enumerate() {
            m.add(i, i, *d);
        }
        let vol = grid.cell_volume() * scale;
        for c in 0..grid.cell_count() {
            for axis in 0..grid.dim() {
                let (nodes, coeffs, len) = grid.cell_stencil(c, axis);
                for a in 0..len {
                    for b in 0..len {
                        if nodes[b] <= nodes[a] {
                            m.add(nodes[a], nodes[b], vol * coeffs[a] * coeffs[b]);
                        }
                    }
                }
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry (i, j) with `j <= i`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw);
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j <= i { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + (i - j)]
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            *o = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    /// Cholesky factor `L` with `A = L L^T`; `None` when `A` is not
    /// positive definite.
    pub fn cholesky(&self) -> Option<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for k in lo..=i {
                // sum over j < k shared by rows i and k
                let jlo = lo.max(k.saturating_sub(bw));
                let mut s = self.data[i * w + (i - k)];
                for j in jlo..k {
                    s -= l[i * w + (i - j)] * l[k * w + (k - j)];
                }
                if k == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - k)] = s / l[k * w];
                }
            }
        }
        Some(BandCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = x[i];
            for j in lo..i {
                s -= self.l[i * w + (i - j)] * x[j];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= self.l[j * w + (j - i)] * x[j];
            }
            x[i] = s / self.l[i * w];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CgFailure {
    /// A search direction with `p^T A p <= 0` was met.
    Indefinite,
    MaxIterations(CgStats),
}

/// Conjugate gradients for a symmetric positive definite operator.
/// `x` holds the initial guess on entry and the solution on exit.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgStats, CgFailure> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rel = rr.sqrt() / bnorm;
        if rel <= rel_tol {
            return Ok(CgStats {
                iterations: it,
                relative_residual: rel,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(CgFailure::Indefinite);
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let rel = rr.sqrt() / bnorm;
    if rel <= rel_tol {
        Ok(CgStats {
            iterations: max_iter,
            relative_residual: rel,
        })
    } else {
        Err(CgFailure::MaxIterations(CgStats {
            iterations: max_iter,
            relative_residual: rel,
        }))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &BandMatrix) -> Vec<Vec<f64>> {
        (0..m.size())
            .map(|i| (0..m.size()).map(|j| m.get(i, j)).collect())
            .collect()
    }

    #[test]
    fn cholesky_solves_2d_system() {
        let g = Grid::new(2, &[1.0, 1.0], &[3, 2]).unwrap();
        let diag: Vec<f64> = g.node_weights().iter().map(|w| w * 10.0).collect();
        let a = BandMatrix::diag_plus_stiffness(&g, &diag, 0.3);
        let x_true: Vec<f64> = (0..g.node_count()).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = vec![0.0; g.node_count()];
        a.apply(&x_true, &mut b);
        let chol = a.cholesky().unwrap();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn band_matches_stiffness_operator() {
        let g = Grid::new(2, &[1.0, 2.0], &[2, 3]).unwrap();
        let zero = vec![0.0; g.node_count()];
        let a = BandMatrix::diag_plus_stiffness(&g, &zero, 1.0);
        let d = dense(&a);
        for j in 0..g.node_count() {
            let mut e = vec![0.0; g.node_count()];
            e[j] = 1.0;
            let mut ke = vec![0.0; g.node_count()];
            g.stiffness_apply(&e, &mut ke);
            for i in 0..g.node_count() {
                assert!((ke[i] - d[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = BandMatrix::zeros(2, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(1, 0, 2.0);
        assert!(m.cholesky().is_none());
    }

    #[test]
    fn cg_matches_direct_solve() {
        let g = Grid::new(1, &[1.0], &[20]).unwrap();
        let diag: Vec<f64> = g.node_weights().to_vec();
        let a = BandMatrix::diag_plus_stiffness(&g, &diag, 1.0);
        let b: Vec<f64> = (0..g.node_count()).map(|i| i as f64).collect();
        let mut x = vec![0.0; b.len()];
        let stats = conjugate_gradient(|v, o| a.apply(v, o), &b, &mut x, 1e-13, 200).unwrap();
        assert!(stats.relative_residual <= 1e-13);
        let mut y = b.clone();
        a.cholesky().unwrap().solve_in_place(&mut y);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn cg_flags_indefinite_operator() {
        let b = vec![1.0, 1.0];
        let mut x = vec![0.0; 2];
        let r = conjugate_gradient(
            |v, o| {
                o[0] = -v[0];
                o[1] = -v[1];
            },
            &b,
            &mut x,
            1e-12,
            10,
        );
        assert_eq!(r, Err(CgFailure::Indefinite));
    }
}
