//! Symmetric tridiagonal linear algebra: factorizations, Sturm counts and implicit QL.

use rayon::prelude::*;

use crate::error::{EquiwaveError, Result};

/// Symmetric tridiagonal matrix with diagonal `diag` and off-diagonal `off` (len n-1).
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// LDL^T factors of a symmetric tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct Ldl {
    pub d: Vec<f64>,
    /// Sub-diagonal of the unit lower factor.
    pub l: Vec<f64>,
}

impl SymTridiag {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// LDL^T without pivoting; `None` unless every pivot is positive.
    pub fn ldl(&self) -> Option<Ldl> {
        let n = self.dim();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        d.push(self.diag[0]);
        if !(d[0] > 0.0) {
            return None;
        }
        for i in 1..n {
            let li = self.off[i - 1] / d[i - 1];
            let di = self.diag[i] - li * self.off[i - 1];
            if !(di > 0.0) {
                return None;
            }
            l.push(li);
            d.push(di);
        }
        Some(Ldl { d, l })
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn sturm_count(&self, x: f64) -> usize {
        let n = self.dim();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let denom = if q == 0.0 { f64::EPSILON * self.off[i - 1].abs().max(1e-300) } else { q };
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut rad = 0.0;
            if i > 0 {
                rad += self.off[i - 1].abs();
            }
            if i + 1 < n {
                rad += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - rad);
            hi = hi.max(self.diag[i] + rad);
        }
        (lo, hi)
    }

    /// The `index`-th smallest eigenvalue by Sturm bisection.
    pub fn eigenvalue_bisect(&self, index: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve (T - shift I) x = b with partial pivoting.
    pub fn solve_shifted(&self, shift: f64, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        // Rows of U have up to two super-diagonals after pivoting.
        let mut a: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                [
                    self.diag[i] - shift,
                    if i + 1 < n { self.off[i] } else { 0.0 },
                    0.0,
                ]
            })
            .collect();
        let mut sub: Vec<f64> = self.off.clone();
        let mut x = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            let below = sub[i];
            if below.abs() > a[i][0].abs() {
                // Swap rows i and i+1.
                let row_next = [a[i + 1][0], a[i + 1][1], a[i + 1][2]];
                let row_i = [below, row_next[0], row_next[1]];
                let old = a[i];
                a[i] = row_i;
                a[i + 1] = [old[1], old[2], 0.0];
                sub[i] = old[0];
                x.swap(i, i + 1);
            }
            let piv = if a[i][0] == 0.0 { 1e-300 } else { a[i][0] };
            let m = sub[i] / piv;
            a[i + 1][0] -= m * a[i][1];
            a[i + 1][1] -= m * a[i][2];
            x[i + 1] -= m * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= a[i][1] * x[i + 1];
            }
            if i + 2 < n {
                s -= a[i][2] * x[i + 2];
            }
            let piv = if a[i][0] == 0.0 { 1e-300 } else { a[i][0] };
            x[i] = s / piv;
        }
        x
    }
}

impl Ldl {
    /// Solve L D L^T x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }

    /// Solve L^T D^{1/2} x = g, so that x has covariance (L D L^T)^{-1} for white g.
    pub fn solve_root_transpose(&self, g: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x: Vec<f64> = g.iter().zip(&self.d).map(|(a, d)| a / d.sqrt()).collect();
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}

/// Implicit-shift QL on a symmetric tridiagonal matrix.
///
/// Returns eigenvalues (unsorted) and, when requested, eigenvectors stored
/// column-major (column j holds the vector of eigenvalue j).
pub fn tql_implicit(t: &SymTridiag, vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = t.dim();
    let mut d = t.diag.clone();
    let mut e = t.off.clone();
    e.push(0.0);
    let mut z = if vectors {
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        Some(z)
    } else {
        None
    };
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(EquiwaveError::EigenNoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0_f64, 1.0_f64, 0.0_f64);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_mut() {
                    let (left, right) = z.split_at_mut((i + 1) * n);
                    let zi = &mut left[i * n..];
                    let zi1 = &mut right[..n];
                    for k in 0..n {
                        let f = zi1[k];
                        zi1[k] = s * zi[k] + c * f;
                        zi[k] = c * zi[k] - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Row-major dense square matrix product, rows computed in parallel.
pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    c.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let ai = &a[i * n..(i + 1) * n];
        for (k, aik) in ai.iter().enumerate() {
            if *aik == 0.0 {
                continue;
            }
            let bk = &b[k * n..(k + 1) * n];
            for (cj, bkj) in row.iter_mut().zip(bk) {
                *cj += aik * bkj;
            }
        }
    });
    c
}

pub fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag { diag: vec![2.0; n], off: vec![-1.0; n - 1] }
    }

    #[test]
    fn ql_recovers_laplacian_spectrum() {
        let n = 50;
        let (mut ev, _) = tql_implicit(&laplacian(n), false).unwrap();
        ev.sort_by(|a, b| a.total_cmp(b));
        for (j, v) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (j + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn ldl_and_solvers() {
        let t = SymTridiag { diag: vec![4.0, 5.0, 6.0, 3.0], off: vec![1.0, -2.0, 0.5] };
        let x = vec![1.0, -2.0, 0.25, 3.0];
        let b = t.matvec(&x);
        let sol = t.ldl().unwrap().solve(&b);
        let sol2 = t.solve_shifted(0.0, &b);
        for i in 0..4 {
            assert!((sol[i] - x[i]).abs() < 1e-13);
            assert!((sol2[i] - x[i]).abs() < 1e-13);
        }
        let bad = SymTridiag { diag: vec![1.0, -1.0], off: vec![0.0] };
        assert!(bad.ldl().is_none());
        assert_eq!(bad.sturm_count(0.0), 1);
    }

    proptest! {
        #[test]
        fn ql_diagonalizes_random_tridiagonals(
            diag in proptest::collection::vec(-5.0..5.0f64, 2..30),
            seed in proptest::collection::vec(-3.0..3.0f64, 30),
        ) {
            let n = diag.len();
            let t = SymTridiag { diag, off: seed[..n - 1].to_vec() };
            let (ev, z) = tql_implicit(&t, true).unwrap();
            let z = z.unwrap();
            let scale = 1.0 + t.gershgorin().0.abs().max(t.gershgorin().1.abs());
            for j in 0..n {
                let v = &z[j * n..(j + 1) * n];
                let av = t.matvec(v);
                for k in 0..n {
                    prop_assert!((av[k] - ev[j] * v[k]).abs() < 1e-11 * scale);
                }
                for i in 0..n {
                    let dot: f64 = v.iter().zip(&z[i * n..(i + 1) * n]).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() < 1e-12);
                }
            }
            // Sturm bisection agrees with QL.
            let mut sorted = ev.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            prop_assert!((t.eigenvalue_bisect(0) - sorted[0]).abs() < 1e-10 * scale);
        }

        #[test]
        fn pivoted_solve_inverts(
            diag in proptest::collection::vec(-5.0..5.0f64, 2..30),
            off in proptest::collection::vec(0.5..3.0f64, 30),
            x in proptest::collection::vec(-1.0..1.0f64, 30),
        ) {
            let n = diag.len();
            let t = SymTridiag { diag, off: off[..n - 1].to_vec() };
            let x = &x[..n];
            let b = t.matvec(x);
            let sol = t.solve_shifted(0.0, &b);
            let res = t.matvec(&sol);
            for k in 0..n {
                prop_assert!((res[k] - b[k]).abs() < 1e-8 * (1.0 + b[k].abs()));
            }
        }
    }
}
