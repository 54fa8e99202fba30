//! Minimal dense linear algebra for small square systems.
//!
//! The toolkit only ever works with n x n matrices for small n (the
//! built-in systems are planar), so this module hand-rolls exactly what is
//! needed: a row-major square matrix, Euclidean vector norms, and the
//! spectral (Euclidean operator) norm.

/// Row-major n x n matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Mat {
        Mat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
        let n = rows.len();
        let mut m = Mat::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix rows must be square");
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    /// Wrap an existing row-major buffer of length n*n.
    pub fn from_flat(n: usize, data: Vec<f64>) -> Mat {
        assert_eq!(data.len(), n * n);
        Mat { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.get(i, j) * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Mat { n: self.n, data }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Mat { n: self.n, data }
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let mut pivot = col;
            for row in col + 1..n {
                if a[row * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = row;
                }
            }
            if a[pivot * n + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            for row in col + 1..n {
                let f = a[row * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[row * n + j] -= f * a[col * n + j];
                }
            }
        }
        det
    }

    /// Spectral norm (largest singular value). Closed form for n <= 2,
    /// one-sided cyclic Jacobi iteration to relative 1e-12 otherwise.
    pub fn spectral_norm(&self) -> f64 {
        match self.n {
            0 => 0.0,
            1 => self.data[0].abs(),
            2 => {
                // sigma_max^2 = (f + sqrt(f^2 - 4 d^2)) / 2 with
                // f = ||M||_F^2 and d = det M.
                let f = self.data.iter().map(|v| v * v).sum::<f64>();
                let d = self.data[0] * self.data[3] - self.data[1] * self.data[2];
                let disc = (f * f - 4.0 * d * d).max(0.0);
                (0.5 * (f + disc.sqrt())).sqrt()
            }
            _ => self.jacobi_norm(),
        }
    }

    fn jacobi_norm(&self) -> f64 {
        let n = self.n;
        // One-sided Jacobi: orthogonalize the columns of a working copy;
        // the largest column norm converges to sigma_max.
        let mut a = self.data.clone();
        let col_dot = |a: &[f64], p: usize, q: usize| -> f64 {
            (0..n).map(|i| a[i * n + p] * a[i * n + q]).sum()
        };
        let tol = 1e-12;
        for _sweep in 0..60 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let app = col_dot(&a, p, p);
                    let aqq = col_dot(&a, q, q);
                    let apq = col_dot(&a, p, q);
                    if apq.abs() <= tol * (app * aqq).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..n {
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        a[i * n + p] = c * aip - s * aiq;
                        a[i * n + q] = s * aip + c * aiq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut best = 0.0_f64;
        for p in 0..n {
            best = best.max(col_dot(&a, p, p));
        }
        best.sqrt()
    }
}

/// Euclidean norm of a vector.
pub fn vec_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
