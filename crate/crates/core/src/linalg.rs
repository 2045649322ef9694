//! Small dense linear algebra: LU solves and the nonsymmetric eigenproblem.
//!
//! The eigen-solver reduces to upper Hessenberg form by stabilised elementary
//! similarity transforms and then runs the Francis double-shift QR iteration.
//! Eigenvectors, when needed, come from inverse iteration in complex arithmetic.

use std::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + num_traits::Zero + num_traits::One> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Matrix<T> {
    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(&self.data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        crate::scalar::max_abs_diff(&self.data, &other.data)
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }
}

/// LU factorisation with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    /// Factorise; pivots below `rel_tol · ‖A‖∞` are reported as singular.
    pub fn new(a: &Matrix<T>, rel_tol: T) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: a.cols(),
            });
        }
        let n = a.rows();
        let scale = a.norm_inf().max(T::min_positive_value());
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(pmax > rel_tol * scale) {
                return Err(Error::Singular {
                    column: k,
                    pivot: to_f64(pmax),
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[k * n + j];
                        lu[i * n + j] -= f * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Solve `A x = b`.
pub fn solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    Ok(Lu::new(a, lit(1e-14))?.solve(b))
}

/// In-place reduction to upper Hessenberg form; entries below the subdiagonal are zeroed.
fn hessenberg<T: Real>(a: &mut [T], n: usize) {
    let at = |i: usize, j: usize| i * n + j;
    for m in 1..n.saturating_sub(1) {
        let mut x = T::zero();
        let mut piv = m;
        for j in m..n {
            if a[at(j, m - 1)].abs() > x.abs() {
                x = a[at(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..n {
                a.swap(at(piv, j), at(m, j));
            }
            for j in 0..n {
                a.swap(at(j, piv), at(j, m));
            }
        }
        if x != T::zero() {
            for i in m + 1..n {
                let mut y = a[at(i, m - 1)];
                if y != T::zero() {
                    y /= x;
                    a[at(i, m - 1)] = y;
                    for j in m..n {
                        let v = a[at(m, j)];
                        a[at(i, j)] -= y * v;
                    }
                    for j in 0..n {
                        let v = a[at(j, i)];
                        a[at(j, m)] += y * v;
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[at(i, j)] = T::zero();
        }
    }
}

fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

const MAX_QR_ITERATIONS: usize = 60;

/// Full spectrum of a real square matrix, sorted by decreasing real part.
pub fn eigenvalues<T: Real>(m: &Matrix<T>) -> Result<Vec<Complex<T>>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            got: m.cols(),
        });
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let mut a = m.as_slice().to_vec();
    hessenberg(&mut a, n);
    let mut wr = vec![T::zero(); n];
    let mut wi = vec![T::zero(); n];
    hqr(&mut a, n, &mut wr, &mut wi)?;
    let mut out: Vec<Complex<T>> = wr.into_iter().zip(wi).map(|(r, i)| Complex::new(r, i)).collect();
    out.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

// Francis double-shift QR on an upper Hessenberg matrix (1-based indexing internally).
fn hqr<T: Real>(h: &mut [T], n: usize, wr: &mut [T], wi: &mut [T]) -> Result<()> {
    macro_rules! a {
        ($i:expr, $j:expr) => {
            h[($i - 1) * n + ($j - 1)]
        };
    }
    let half: T = lit(0.5);
    let mut anorm = T::zero();
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a!(i, j).abs();
        }
    }
    let mut nn = n;
    let mut t = T::zero();
    let mut its = 0usize;
    while nn >= 1 {
        let mut l = nn;
        while l >= 2 {
            let mut s = a!(l - 1, l - 1).abs() + a!(l, l).abs();
            if s == T::zero() {
                s = anorm;
            }
            if a!(l, l - 1).abs() + s == s {
                a!(l, l - 1) = T::zero();
                break;
            }
            l -= 1;
        }
        let mut x = a!(nn, nn);
        if l == nn {
            wr[nn - 1] = x + t;
            wi[nn - 1] = T::zero();
            nn -= 1;
            its = 0;
            continue;
        }
        let mut y = a!(nn - 1, nn - 1);
        let mut w = a!(nn, nn - 1) * a!(nn - 1, nn);
        if l == nn - 1 {
            let p = half * (y - x);
            let q = p * p + w;
            let mut z = q.abs().sqrt();
            x += t;
            if q >= T::zero() {
                z = p + sign(z, p);
                wr[nn - 2] = x + z;
                wr[nn - 1] = x + z;
                if z != T::zero() {
                    wr[nn - 1] = x - w / z;
                }
                wi[nn - 2] = T::zero();
                wi[nn - 1] = T::zero();
            } else {
                wr[nn - 2] = x + p;
                wr[nn - 1] = x + p;
                wi[nn - 2] = -z;
                wi[nn - 1] = z;
            }
            nn -= 2;
            its = 0;
            continue;
        }
        if its == MAX_QR_ITERATIONS {
            return Err(Error::EigenNoConvergence { dim: n });
        }
        if its % 10 == 0 && its > 0 {
            // exceptional shift
            t += x;
            for i in 1..=nn {
                a!(i, i) -= x;
            }
            let s = a!(nn, nn - 1).abs() + a!(nn - 1, nn - 2).abs();
            x = lit::<T>(0.75) * s;
            y = x;
            w = lit::<T>(-0.4375) * s * s;
        }
        its += 1;
        let (mut p, mut q, mut r, mut z);
        let mut m = nn - 2;
        loop {
            z = a!(m, m);
            r = x - z;
            let s0 = y - z;
            p = (r * s0 - w) / a!(m + 1, m) + a!(m, m + 1);
            q = a!(m + 1, m + 1) - z - r - s0;
            r = a!(m + 2, m + 1);
            let s = p.abs() + q.abs() + r.abs();
            p /= s;
            q /= s;
            r /= s;
            if m == l {
                break;
            }
            let u = a!(m, m - 1).abs() * (q.abs() + r.abs());
            let v = p.abs() * (a!(m - 1, m - 1).abs() + z.abs() + a!(m + 1, m + 1).abs());
            if u + v == v {
                break;
            }
            m -= 1;
        }
        for i in m + 2..=nn {
            a!(i, i - 2) = T::zero();
            if i != m + 2 {
                a!(i, i - 3) = T::zero();
            }
        }
        let mut k = m;
        while k <= nn - 1 {
            if k != m {
                p = a!(k, k - 1);
                q = a!(k + 1, k - 1);
                r = T::zero();
                if k != nn - 1 {
                    r = a!(k + 2, k - 1);
                }
                x = p.abs() + q.abs() + r.abs();
                if x != T::zero() {
                    p /= x;
                    q /= x;
                    r /= x;
                }
            }
            let s = sign((p * p + q * q + r * r).sqrt(), p);
            if s != T::zero() {
                if k == m {
                    if l != m {
                        a!(k, k - 1) = -a!(k, k - 1);
                    }
                } else {
                    a!(k, k - 1) = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;
                for j in k..=nn {
                    p = a!(k, j) + q * a!(k + 1, j);
                    if k != nn - 1 {
                        p += r * a!(k + 2, j);
                        a!(k + 2, j) -= p * z;
                    }
                    a!(k + 1, j) -= p * y;
                    a!(k, j) -= p * x;
                }
                let mmin = if nn < k + 3 { nn } else { k + 3 };
                for i in l..=mmin {
                    p = x * a!(i, k) + y * a!(i, k + 1);
                    if k != nn - 1 {
                        p += z * a!(i, k + 2);
                        a!(i, k + 2) -= p * r;
                    }
                    a!(i, k + 1) -= p * q;
                    a!(i, k) -= p;
                }
            }
            k += 1;
        }
    }
    Ok(())
}

/// Unit (max-norm) eigenvector for `lambda` by inverse iteration.
pub fn eigenvector<T: Real>(m: &Matrix<T>, lambda: Complex<T>) -> Result<Vec<Complex<T>>> {
    let n = m.rows();
    let scale = m.norm_inf().max(T::one());
    // Nudge off the exact eigenvalue so the shifted system stays solvable.
    let shift = lambda + Complex::new(lit::<T>(1e-10) * scale, lit::<T>(1e-10) * scale);
    let mut a: Vec<Complex<T>> = m.as_slice().iter().map(|&x| Complex::new(x, T::zero())).collect();
    for i in 0..n {
        a[i * n + i] -= shift;
    }
    let (lu, perm) = complex_lu(&mut a, n)?;
    let mut v: Vec<Complex<T>> = (0..n)
        .map(|i| Complex::new(T::one(), lit::<T>(0.1) * lit::<T>(i as f64)))
        .collect();
    for _ in 0..4 {
        v = complex_solve(&lu, &perm, n, &v);
        let norm = v.iter().fold(T::zero(), |acc, z| acc.max(z.norm()));
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::Singular { column: 0, pivot: 0.0 });
        }
        // normalise phase on the largest component
        let big = *v.iter().max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
        let unit = big / Complex::new(big.norm(), T::zero());
        for z in &mut v {
            *z = *z / (unit * Complex::new(norm, T::zero()));
        }
    }
    Ok(v)
}

/// Relative residual ‖A v − λ v‖∞ / ‖v‖∞.
pub fn eigen_residual<T: Real>(m: &Matrix<T>, lambda: Complex<T>, v: &[Complex<T>]) -> T {
    let n = m.rows();
    let vnorm = v.iter().fold(T::zero(), |acc, z| acc.max(z.norm()));
    let mut worst = T::zero();
    for i in 0..n {
        let mut s = Complex::new(T::zero(), T::zero());
        for j in 0..n {
            s += v[j] * m[(i, j)];
        }
        s -= lambda * v[i];
        worst = worst.max(s.norm());
    }
    worst / vnorm
}

fn complex_lu<T: Real>(a: &mut [Complex<T>], n: usize) -> Result<(Vec<Complex<T>>, Vec<usize>)> {
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, a[i * n + k].norm()))
            .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(pmax > T::zero()) {
            return Err(Error::Singular {
                column: k,
                pivot: to_f64(pmax),
            });
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let d = a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] / d;
            a[i * n + k] = f;
            for j in k + 1..n {
                let u = a[k * n + j];
                a[i * n + j] -= f * u;
            }
        }
    }
    Ok((a.to_vec(), perm))
}

fn complex_solve<T: Real>(lu: &[Complex<T>], perm: &[usize], n: usize, b: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut x: Vec<Complex<T>> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for j in 0..i {
            let t = lu[i * n + j] * x[j];
            x[i] -= t;
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            let t = lu[i * n + j] * x[j];
            x[i] -= t;
        }
        x[i] = x[i] / lu[i * n + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_row_major(n, n, data).unwrap()
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let m = Matrix::from_row_major(2, 2, vec![0.0f64, -1.0, 1.0, 0.0]).unwrap();
        let ev = eigenvalues(&m).unwrap();
        assert_eq!(ev.len(), 2);
        for z in &ev {
            assert!(z.re.abs() < 1e-14);
            assert_relative_eq!(z.im.abs(), 1.0, epsilon = 1e-14);
        }
        assert!(ev[0].im * ev[1].im < 0.0);
    }

    #[test]
    fn diagonal_matrix_returns_diagonal() {
        let mut m = Matrix::<f64>::zeros(4, 4);
        for (i, d) in [3.0, -1.0, 0.5, 2.0].iter().enumerate() {
            m[(i, i)] = *d;
        }
        let ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
        assert_eq!(ev, vec![3.0, 2.0, 0.5, -1.0]);
    }

    #[test]
    fn trace_identity_on_random_matrices() {
        for seed in 0..20 {
            let m = random_matrix(12, seed);
            let ev = eigenvalues(&m).unwrap();
            let sum: Complex<f64> = ev.iter().sum();
            assert!((sum.re - m.trace()).abs() < 1e-8, "seed {seed}");
            assert!(sum.im.abs() < 1e-8);
        }
    }

    #[test]
    fn eigenpair_residuals_small_up_to_dim_48() {
        for (n, seed) in [(3, 1), (12, 2), (24, 3), (48, 4)] {
            let m = random_matrix(n, seed);
            for lambda in eigenvalues(&m).unwrap() {
                let v = eigenvector(&m, lambda).unwrap();
                assert!(eigen_residual(&m, lambda, &v) < 1e-8, "n={n} λ={lambda}");
            }
        }
    }

    #[test]
    fn lu_solves_and_detects_singularity() {
        let m = Matrix::from_row_major(3, 3, vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]).unwrap();
        let x = solve(&m, &[1.0, 2.0, 3.0]).unwrap();
        let back = m.mul_vec(&x);
        for (a, b) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
        let s = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(solve(&s, &[1.0, 1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn companion_matrix_roots() {
        // x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        let m = Matrix::from_row_major(3, 3, vec![6.0, -11.0, 6.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
        for (a, b) in ev.iter().zip([3.0, 2.0, 1.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_non_square() {
        let m = Matrix::<f64>::zeros(2, 3);
        assert!(eigenvalues(&m).is_err());
    }
}
