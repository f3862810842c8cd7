use crate::autodiff::Real;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// row-major, `n × n`.
#[derive(Clone, Debug)]
pub struct Cholesky<R> {
    n: usize,
    l: Vec<R>,
}

impl<R: Real> Cholesky<R> {
    /// Factors `a` (row-major, only the lower triangle is read). Returns
    /// `None` if a pivot is not strictly positive.
    pub fn factor(a: &[R], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![R::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = if j == 0 {
                    a[i * n + j]
                } else {
                    a[i * n + j] - R::dot(&l[i * n..i * n + j], &l[j * n..j * n + j])
                };
                if i == j {
                    if !(s.value() > 0.0) {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[R]) -> Vec<R> {
        let n = self.n;
        let l = &self.l;
        let mut y = vec![R::zero(); n];
        for i in 0..n {
            let s = if i == 0 {
                b[i]
            } else {
                b[i] - R::dot(&l[i * n..i * n + i], &y[..i])
            };
            y[i] = s / l[i * n + i];
        }
        let mut x = vec![R::zero(); n];
        let mut col = Vec::with_capacity(n);
        for i in (0..n).rev() {
            col.clear();
            col.extend((i + 1..n).map(|k| l[k * n + i]));
            let s = if i + 1 == n {
                y[i]
            } else {
                y[i] - R::dot(&col, &x[i + 1..])
            };
            x[i] = s / l[i * n + i];
        }
        x
    }
}

/// Dense row-major matrix-vector product.
pub fn mat_vec<R: Real>(a: &[R], n: usize, x: &[R]) -> Vec<R> {
    (0..n).map(|i| R::dot(&a[i * n..(i + 1) * n], x)).collect()
}
