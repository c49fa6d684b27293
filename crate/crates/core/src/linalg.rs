//! Small dense linear algebra helpers. Matrices here are at most a few dozen
//! rows wide, so clarity wins over blocking.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative pivot threshold below which a column of an equilibrated matrix is
/// treated as linearly dependent on the columns already factored.
pub const RANK_TOL: f64 = 1e-11;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Condition number of a symmetric matrix after scaling it to unit diagonal.
///
/// Returns `f64::INFINITY` when a diagonal entry is zero, the matrix has a
/// non-positive eigenvalue, or any entry is non-finite.
pub fn equilibrated_condition(sym: &DMatrix<f64>) -> f64 {
    if sym.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let n = sym.nrows();
    if n == 0 {
        return 1.0;
    }
    let d: Vec<f64> = (0..n).map(|k| sym[(k, k)]).collect();
    if d.iter().any(|&v| v <= 0.0) {
        return f64::INFINITY;
    }
    let scaled = DMatrix::from_fn(n, n, |r, c| sym[(r, c)] / (d[r] * d[c]).sqrt());
    symmetric_condition(&scaled)
}

/// `max |lambda| / min lambda` for a symmetric matrix; infinite if not
/// positive definite.
pub fn symmetric_condition(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Householder QR with column pivoting on a column-equilibrated copy of `a`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// R in the upper triangle, Householder vectors below.
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    /// `perm[k]` is the original column in position `k`.
    perm: Vec<usize>,
    /// Column scale factors applied before factoring.
    scale: Vec<f64>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let scale: Vec<f64> = (0..n)
            .map(|j| {
                let norm = a.column(j).norm();
                if norm > 0.0 && norm.is_finite() {
                    1.0 / norm
                } else {
                    0.0
                }
            })
            .collect();
        let mut qr = DMatrix::from_fn(m, n, |r, c| a[(r, c)] * scale[c]);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![0.0; n.min(m)];
        let mut norms: Vec<f64> = (0..n).map(|j| qr.column(j).norm_squared()).collect();

        for k in 0..n.min(m) {
            let (p, _) = norms[k..]
                .iter()
                .enumerate()
                .fold((0, -1.0), |best, (j, &v)| if v > best.1 { (j, v) } else { best });
            let p = p + k;
            if p != k {
                qr.swap_columns(k, p);
                norms.swap(k, p);
                perm.swap(k, p);
            }
            let alpha = qr.view((k, k), (m - k, 1)).norm();
            if alpha == 0.0 {
                tau[k] = 0.0;
                continue;
            }
            let x0 = qr[(k, k)];
            let beta = if x0 >= 0.0 { -alpha } else { alpha };
            let v0 = x0 - beta;
            for r in (k + 1)..m {
                qr[(r, k)] /= v0;
            }
            tau[k] = (beta - x0) / beta;
            qr[(k, k)] = beta;
            for j in (k + 1)..n {
                let mut s = qr[(k, j)];
                for r in (k + 1)..m {
                    s += qr[(r, k)] * qr[(r, j)];
                }
                s *= tau[k];
                qr[(k, j)] -= s;
                for r in (k + 1)..m {
                    let vr = qr[(r, k)];
                    qr[(r, j)] -= s * vr;
                }
                norms[j] = (k + 1..m).map(|r| qr[(r, j)].powi(2)).sum();
            }
        }

        let r00 = if n > 0 && m > 0 { qr[(0, 0)].abs() } else { 0.0 };
        let rank = (0..n.min(m))
            .take_while(|&k| r00 > 0.0 && qr[(k, k)].abs() > RANK_TOL * r00)
            .count();
        Self {
            qr,
            tau,
            perm,
            scale,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.qr.ncols()
    }

    /// Original column indices found to be dependent, ascending.
    pub fn deficient_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// Least-squares solution of `a x = b`. Requires full column rank.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (m, n) = self.qr.shape();
        let mut y = b.clone();
        for k in 0..n.min(m) {
            let mut s = y[k];
            for r in (k + 1)..m {
                s += self.qr[(r, k)] * y[r];
            }
            s *= self.tau[k];
            y[k] -= s;
            for r in (k + 1)..m {
                y[r] -= s * self.qr[(r, k)];
            }
        }
        let mut z = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in (k + 1)..n {
                s -= self.qr[(k, j)] * z[j];
            }
            z[k] = s / self.qr[(k, k)];
        }
        let mut x = DVector::zeros(n);
        for (k, &col) in self.perm.iter().enumerate() {
            x[col] = z[k] * self.scale[col];
        }
        x
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.qr.ncols();
        let mut out = DMatrix::zeros(n, b.ncols());
        for c in 0..b.ncols() {
            let x = self.solve(&b.column(c).into_owned());
            out.set_column(c, &x);
        }
        out
    }
}

/// Symmetrizes in place by averaging with the transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}
