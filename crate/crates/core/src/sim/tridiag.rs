/// Thomas factorization of a tridiagonal matrix, reusable across solves.
///
/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    /// Reciprocal pivots.
    inv_pivot: Vec<f64>,
    /// Eliminated super-diagonal `upper[i] / pivot[i]`.
    c: Vec<f64>,
}

impl TridiagonalLu {
    /// Panics on a zero pivot; callers only factor diagonally dominant systems.
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        assert!(n > 0 && lower.len() == n && upper.len() == n, "tridiagonal shape");
        let mut inv_pivot = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let l = if i == 0 { 0.0 } else { lower[i] };
            let p = diag[i] - l * prev_c;
            assert!(p != 0.0 && p.is_finite(), "singular tridiagonal system at row {i}");
            inv_pivot[i] = 1.0 / p;
            c[i] = if i + 1 < n { upper[i] * inv_pivot[i] } else { 0.0 };
            prev_c = c[i];
        }
        Self {
            lower: lower.to_vec(),
            inv_pivot,
            c,
        }
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Solve in place: `rhs` becomes `x`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n, "rhs length");
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c[i] * rhs[i + 1];
        }
    }
}
