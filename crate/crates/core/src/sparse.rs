//! Minimal complex sparse linear algebra for the lattice oracle:
//! CSR storage, ILU(0) preconditioning and preconditioned BiCGStab.

use crate::numerics::C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("zero pivot in ILU(0) at row {0}")]
    ZeroPivot(usize),
    #[error("BiCGStab stalled at residual {resid:.3e} (target {target:.3e}) after {iters} iterations")]
    NonConvergence { resid: f64, target: f64, iters: usize },
}

/// Compressed sparse row matrix over complex doubles.
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<C64>,
}

impl CsrMatrix {
    /// Build from unsorted triplets; duplicate entries are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, C64)>) -> Self {
        triplets.sort_unstable_by_key(|t| ((t.0 as u64) << 32) | t.1 as u64);
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indptr[r as usize + 1] += 1;
                indices.push(c);
                data.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix { n, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for i in 0..self.n {
            let mut acc = C64::new(0.0, 0.0);
            for idx in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[idx] * x[self.indices[idx] as usize];
            }
            y[i] = acc;
        }
    }
}

/// ILU(0): incomplete LU on the sparsity pattern of A. Stores the combined
/// factors in CSR layout (strict lower = L with unit diagonal, upper = U).
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_idx: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, SparseError> {
        Self::with_shift(a, C64::new(0.0, 0.0))
    }

    /// ILU(0) of (A + shift * I). A purely imaginary shift keeps the pivots
    /// of an indefinite wave operator away from zero; the factorization is
    /// then applied as a preconditioner for the unshifted system.
    pub fn with_shift(a: &CsrMatrix, shift: C64) -> Result<Self, SparseError> {
        let n = a.n;
        let mut lu = CsrMatrix {
            n,
            indptr: a.indptr.clone(),
            indices: a.indices.clone(),
            data: a.data.clone(),
        };
        let mut diag_idx = vec![usize::MAX; n];
        for i in 0..n {
            for idx in lu.indptr[i]..lu.indptr[i + 1] {
                if lu.indices[idx] as usize == i {
                    diag_idx[i] = idx;
                }
            }
            if diag_idx[i] == usize::MAX {
                return Err(SparseError::ZeroPivot(i));
            }
            lu.data[diag_idx[i]] += shift;
        }
        // column lookup scratch: position of column j in the current row
        let mut colpos = vec![usize::MAX; n];
        for i in 0..n {
            let row = lu.indptr[i]..lu.indptr[i + 1];
            for idx in row.clone() {
                colpos[lu.indices[idx] as usize] = idx;
            }
            // eliminate using previous rows k < i present in row i
            for idx in row.clone() {
                let k = lu.indices[idx] as usize;
                if k >= i {
                    break;
                }
                let pivot = lu.data[diag_idx[k]];
                if pivot.norm() == 0.0 {
                    return Err(SparseError::ZeroPivot(k));
                }
                let factor = lu.data[idx] / pivot;
                lu.data[idx] = factor;
                for uidx in (diag_idx[k] + 1)..lu.indptr[k + 1] {
                    let j = lu.indices[uidx] as usize;
                    let pos = colpos[j];
                    if pos != usize::MAX {
                        let delta = factor * lu.data[uidx];
                        lu.data[pos] -= delta;
                    }
                }
            }
            for idx in row {
                colpos[lu.indices[idx] as usize] = usize::MAX;
            }
            if lu.data[diag_idx[i]].norm() == 0.0 {
                return Err(SparseError::ZeroPivot(i));
            }
        }
        Ok(Ilu0 { lu, diag_idx })
    }

    /// Solve (L U) z = r in place.
    pub fn apply(&self, r: &[C64], z: &mut [C64]) {
        let n = self.lu.n;
        // forward: L z = r (unit diagonal)
        for i in 0..n {
            let mut acc = r[i];
            for idx in self.lu.indptr[i]..self.diag_idx[i] {
                acc -= self.lu.data[idx] * z[self.lu.indices[idx] as usize];
            }
            z[i] = acc;
        }
        // backward: U z = z
        for i in (0..n).rev() {
            let mut acc = z[i];
            for idx in (self.diag_idx[i] + 1)..self.lu.indptr[i + 1] {
                acc -= self.lu.data[idx] * z[self.lu.indices[idx] as usize];
            }
            z[i] = acc / self.lu.data[self.diag_idx[i]];
        }
    }
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Right-preconditioned BiCGStab for A x = b.
pub fn bicgstab(
    a: &CsrMatrix,
    precond: &Ilu0,
    b: &[C64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<C64>, SolveStats), SparseError> {
    let n = a.n;
    let bnorm = norm(b).max(1e-300);
    let target = rel_tol * bnorm;
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = C64::new(1.0, 0.0);
    let mut alpha = C64::new(1.0, 0.0);
    let mut omega = C64::new(1.0, 0.0);
    let mut v = vec![C64::new(0.0, 0.0); n];
    let mut p = vec![C64::new(0.0, 0.0); n];
    let mut phat = vec![C64::new(0.0, 0.0); n];
    let mut shat = vec![C64::new(0.0, 0.0); n];
    let mut t = vec![C64::new(0.0, 0.0); n];
    let mut best = f64::INFINITY;
    let mut r0 = r0;
    let mut iter = 0usize;
    while iter < max_iter {
        iter += 1;
        let rho_new = dotc(&r0, &r);
        let breakdown = !rho_new.norm().is_finite()
            || rho_new.norm() < 1e-30 * norm(&r) * norm(&r0)
            || !omega.norm().is_finite()
            || omega.norm() < 1e-300;
        if breakdown {
            // restart the shadow residual from the current residual
            r0 = r.clone();
            rho = dotc(&r0, &r);
            alpha = C64::new(1.0, 0.0);
            omega = C64::new(1.0, 0.0);
            for z in v.iter_mut().chain(p.iter_mut()) {
                *z = C64::new(0.0, 0.0);
            }
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut phat);
        a.matvec(&phat, &mut v);
        alpha = rho / dotc(&r0, &v);
        if !alpha.norm().is_finite() {
            r0 = r.clone();
            omega = C64::new(1.0, 0.0);
            continue;
        }
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok((x, SolveStats { iterations: iter, residual: norm(&s) / bnorm }));
        }
        precond.apply(&s, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dotc(&t, &t);
        if tt.norm() < 1e-300 {
            r0 = r.clone();
            omega = C64::new(1.0, 0.0);
            continue;
        }
        omega = dotc(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = norm(&r);
        best = best.min(rn);
        if rn <= target {
            return Ok((x, SolveStats { iterations: iter, residual: rn / bnorm }));
        }
    }
    Err(SparseError::NonConvergence { resid: best / bnorm, target: rel_tol, iters: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: C64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i as u32, i as u32, C64::new(2.0, 0.0) + shift));
            if i + 1 < n {
                t.push((i as u32, i as u32 + 1, C64::new(-1.0, 0.0)));
                t.push((i as u32 + 1, i as u32, C64::new(-1.0, 0.0)));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn bicgstab_solves_shifted_laplacian() {
        let n = 500;
        let a = laplacian_1d(n, C64::new(0.3, 0.4));
        let b: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.1).sin(), 0.2)).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let (x, stats) = bicgstab(&a, &ilu, &b, 1e-10, 500).unwrap();
        let mut ax = vec![C64::new(0.0, 0.0); n];
        a.matvec(&x, &mut ax);
        let resid: f64 = ax.iter().zip(&b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
        assert!(resid < 1e-8, "residual {resid:e} after {} iters", stats.iterations);
    }

    #[test]
    fn ilu_is_exact_for_tridiagonal() {
        // ILU(0) on a tridiagonal matrix is a complete factorization
        let n = 50;
        let a = laplacian_1d(n, C64::new(0.0, 1.0));
        let ilu = Ilu0::new(&a).unwrap();
        let b: Vec<C64> = (0..n).map(|i| C64::new(1.0 + i as f64, -0.5)).collect();
        let mut z = vec![C64::new(0.0, 0.0); n];
        ilu.apply(&b, &mut z);
        let mut az = vec![C64::new(0.0, 0.0); n];
        a.matvec(&z, &mut az);
        let resid: f64 = az.iter().zip(&b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
        assert!(resid < 1e-10, "residual {resid:e}");
    }

    #[test]
    fn triplets_merge_duplicates() {
        let a = CsrMatrix::from_triplets(
            2,
            vec![
                (0, 0, C64::new(1.0, 0.0)),
                (0, 0, C64::new(2.0, 0.0)),
                (1, 1, C64::new(1.0, 0.0)),
            ],
        );
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.data[0], C64::new(3.0, 0.0));
    }
}
