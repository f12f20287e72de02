//! Dense least squares via column-pivoted Householder QR.
//!
//! Rank-deficient systems get the minimum-norm solution: the leading `r`
//! rows of `R` are factored again from the right (a complete orthogonal
//! decomposition), so aliased columns receive no weight.

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column {j} has wrong length");
            m.col_mut(j).copy_from_slice(c);
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols);
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = values[i * cols + j];
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// New matrix with the given columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut m = Self::zeros(self.rows, cols.len());
        for (k, &j) in cols.iter().enumerate() {
            m.col_mut(k).copy_from_slice(self.col(j));
        }
        m
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                for (o, a) in out.iter_mut().zip(self.col(j)) {
                    *o += a * vj;
                }
            }
        }
        out
    }

    /// `Xᵀ v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        (0..self.cols).map(|j| dot(self.col(j), v)).collect()
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for i in 0..self.rows {
                self.data.swap(a * self.rows + i, b * self.rows + i);
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    // scaled to avoid overflow on large entries
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// Householder reflector `I - tau v vᵀ` with `v[0] = 1`, mapping `x` onto
/// `beta e_1`.
struct Reflector {
    v: Vec<f64>,
    tau: f64,
}

fn householder(x: &[f64]) -> (Reflector, f64) {
    let alpha = x[0];
    let tail = norm(&x[1..]);
    let mut v = x.to_vec();
    v[0] = 1.0;
    if tail == 0.0 {
        return (Reflector { v, tau: 0.0 }, alpha);
    }
    let beta = -alpha.signum() * alpha.hypot(tail);
    let denom = alpha - beta;
    for vi in v.iter_mut().skip(1) {
        *vi /= denom;
    }
    (Reflector { v, tau: (beta - alpha) / beta }, beta)
}

impl Reflector {
    /// Apply to `y[offset..]`.
    fn apply(&self, y: &mut [f64], offset: usize) {
        if self.tau == 0.0 {
            return;
        }
        let seg = &mut y[offset..offset + self.v.len()];
        let s = self.tau * dot(&self.v, seg);
        for (yi, vi) in seg.iter_mut().zip(&self.v) {
            *yi -= s * vi;
        }
    }
}

/// Relative pivot size below which a column counts as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("design has {rows} rows but {cols} columns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("response has {got} values but design has {rows} rows")]
    Shape { rows: usize, got: usize },
    #[error("non-finite value in design or response")]
    NonFinite,
}

/// Minimizes `‖y − Xβ‖²`; returns the minimum-norm solution and the
/// numerical rank of `X`.
pub fn least_squares(x: &Matrix, y: &[f64]) -> Result<LeastSquares, LinalgError> {
    let (m, n) = (x.rows, x.cols);
    if y.len() != m {
        return Err(LinalgError::Shape { rows: m, got: y.len() });
    }
    if m < n {
        return Err(LinalgError::Underdetermined { rows: m, cols: n });
    }
    if !x.data.iter().chain(y).all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if n == 0 {
        return Ok(LeastSquares { coefficients: vec![], residuals: y.to_vec(), rss: dot(y, y), rank: 0 });
    }

    let mut a = x.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut qty = y.to_vec();
    let mut rank = 0;
    let mut first_pivot = 0.0;

    for k in 0..n {
        // pivot on the largest remaining column norm, recomputed exactly
        let (best, best_norm) = (k..n)
            .map(|j| (j, norm(&a.col(j)[k..])))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if k == 0 {
            first_pivot = best_norm;
        }
        if first_pivot == 0.0 || best_norm <= RANK_TOLERANCE * first_pivot {
            break;
        }
        a.swap_cols(k, best);
        perm.swap(k, best);

        let (h, beta) = householder(&a.col(k)[k..]);
        {
            let col = a.col_mut(k);
            col[k] = beta;
            for v in col[k + 1..].iter_mut() {
                *v = 0.0;
            }
        }
        for j in k + 1..n {
            h.apply(a.col_mut(j), k);
        }
        h.apply(&mut qty, k);
        rank += 1;
    }

    // Solve the r × n trapezoid [R11 R12] z = (Qᵀy)[..r] for minimum norm:
    // factor its transpose as Q2 R2, solve R2ᵀ u = c, then z = Q2 u.
    let r = rank;
    let mut z = vec![0.0; n];
    if r > 0 {
        let mut t = Matrix::zeros(n, r);
        for i in 0..r {
            for j in i..n {
                t[(j, i)] = a[(i, j)];
            }
        }
        let mut reflectors = Vec::with_capacity(r);
        for k in 0..r {
            let (h, beta) = householder(&t.col(k)[k..]);
            {
                let col = t.col_mut(k);
                col[k] = beta;
                for v in col[k + 1..].iter_mut() {
                    *v = 0.0;
                }
            }
            for j in k + 1..r {
                h.apply(t.col_mut(j), k);
            }
            reflectors.push(h);
        }
        // forward substitution with R2ᵀ (lower triangular)
        let mut u = vec![0.0; n];
        for i in 0..r {
            let s: f64 = (0..i).map(|k| t[(k, i)] * u[k]).sum();
            u[i] = (qty[i] - s) / t[(i, i)];
        }
        for (k, h) in reflectors.iter().enumerate().rev() {
            h.apply(&mut u, k);
        }
        z = u;
    }

    let mut coefficients = vec![0.0; n];
    for (k, &j) in perm.iter().enumerate() {
        coefficients[j] = z[k];
    }
    let fitted = x.mul_vec(&coefficients);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss = dot(&residuals, &residuals);
    Ok(LeastSquares { coefficients, residuals, rss, rank })
}
