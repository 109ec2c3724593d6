//! Up-looking sparse LDLᵀ for complex symmetric (not Hermitian) matrices.
//!
//! The symbolic phase (elimination tree and column counts) depends only on
//! the sparsity pattern and is shared by every numeric factorization. Input
//! is the upper triangle in compressed-column form, already permuted.
//! No pivoting: nodal admittance matrices of passive networks have a
//! positive semidefinite real part, and a refinement step backs this up.

use num_complex::Complex64;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    parent: Vec<usize>,
    /// Column pointers of L.
    lp: Vec<usize>,
}

impl Symbolic {
    pub fn analyze(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Self {
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &row in &row_idx[col_ptr[k]..col_ptr[k + 1]] {
                let mut i = row;
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        Self { n, parent, lp }
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }
}

#[derive(Debug, Clone)]
pub struct Factor {
    li: Vec<usize>,
    lx: Vec<Complex64>,
    d: Vec<Complex64>,
}

/// Returns the index of the first zero pivot on failure.
pub fn factor(
    sym: &Symbolic,
    col_ptr: &[usize],
    row_idx: &[usize],
    values: &[Complex64],
) -> Result<Factor, usize> {
    let n = sym.n;
    let nnz = sym.factor_nnz();
    let mut li = vec![0usize; nnz];
    let mut lx = vec![Complex64::new(0.0, 0.0); nnz];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    let mut pattern = vec![0usize; n];
    let mut flag = vec![NONE; n];
    let mut lnz = vec![0usize; n];

    for k in 0..n {
        // Nonzero pattern of row k of L, in topological order.
        let mut top = n;
        flag[k] = k;
        for p in col_ptr[k]..col_ptr[k + 1] {
            let mut i = row_idx[p];
            if i > k {
                continue;
            }
            y[i] += values[p];
            let mut len = 0;
            while flag[i] != k {
                pattern[len] = i;
                len += 1;
                flag[i] = k;
                i = sym.parent[i];
            }
            while len > 0 {
                top -= 1;
                len -= 1;
                pattern[top] = pattern[len];
            }
        }
        d[k] = y[k];
        y[k] = Complex64::new(0.0, 0.0);
        for &i in &pattern[top..n] {
            let yi = y[i];
            y[i] = Complex64::new(0.0, 0.0);
            let start = sym.lp[i];
            let end = start + lnz[i];
            for p in start..end {
                y[li[p]] -= lx[p] * yi;
            }
            let l_ki = yi / d[i];
            d[k] -= l_ki * yi;
            li[end] = k;
            lx[end] = l_ki;
            lnz[i] += 1;
        }
        if d[k] == Complex64::new(0.0, 0.0) || !d[k].is_finite() {
            return Err(k);
        }
    }
    Ok(Factor { li, lx, d })
}

impl Factor {
    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve_in_place(&self, sym: &Symbolic, x: &mut [Complex64]) {
        let n = sym.n;
        for j in 0..n {
            let xj = x[j];
            for p in sym.lp[j]..sym.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in sym.lp[j]..sym.lp[j + 1] {
                xj -= self.lx[p] * x[self.li[p]];
            }
            x[j] = xj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dense_three_by_three() {
        // Complex symmetric A, upper triangle by column.
        let a = [
            [c(4.0, 1.0), c(1.0, -1.0), c(0.5, 0.0)],
            [c(1.0, -1.0), c(3.0, 2.0), c(0.0, 1.0)],
            [c(0.5, 0.0), c(0.0, 1.0), c(2.0, -0.5)],
        ];
        let col_ptr = [0, 1, 3, 6];
        let row_idx = [0, 0, 1, 0, 1, 2];
        let values = [a[0][0], a[0][1], a[1][1], a[0][2], a[1][2], a[2][2]];
        let sym = Symbolic::analyze(3, &col_ptr, &row_idx);
        let f = factor(&sym, &col_ptr, &row_idx, &values).unwrap();
        let b = [c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)];
        let mut x = b;
        f.solve_in_place(&sym, &mut x);
        for i in 0..3 {
            let ax: Complex64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((ax - b[i]).norm() < 1e-14, "row {i}: {ax} vs {}", b[i]);
        }
    }

    #[test]
    fn zero_pivot_reported() {
        let col_ptr = [0, 1, 3];
        let row_idx = [0, 0, 1];
        let values = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        let sym = Symbolic::analyze(2, &col_ptr, &row_idx);
        assert_eq!(factor(&sym, &col_ptr, &row_idx, &values).unwrap_err(), 0);
    }
}
