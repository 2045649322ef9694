//! Autonomous vector fields and one-parameter families of them.

use crate::linalg::Matrix;
use crate::scalar::{lit, Real};

/// `dx/dt = f(x)` on ℝⁿ.
pub trait VectorField<T: Real>: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, state: &[T], out: &mut [T]);

    /// Jacobian ∂f/∂x; defaults to central finite differences.
    fn jacobian(&self, state: &[T]) -> Matrix<T> {
        fd_jacobian(self, state, lit(1e-6))
    }
}

/// A family `p ↦ f_p` of vector fields sharing one state space.
pub trait Family<T: Real>: Sync {
    type Field: VectorField<T>;

    fn at(&self, p: T) -> crate::Result<Self::Field>;
}

/// Central-difference Jacobian with absolute step `h`.
pub fn fd_jacobian<T: Real, F: VectorField<T> + ?Sized>(field: &F, state: &[T], h: T) -> Matrix<T> {
    let n = field.dim();
    let mut jac = Matrix::zeros(n, n);
    let mut probe = state.to_vec();
    let mut fp = vec![T::zero(); n];
    let mut fm = vec![T::zero(); n];
    let two_h = h + h;
    for k in 0..n {
        let orig = probe[k];
        probe[k] = orig + h;
        field.eval(&probe, &mut fp);
        probe[k] = orig - h;
        field.eval(&probe, &mut fm);
        probe[k] = orig;
        for i in 0..n {
            jac[(i, k)] = (fp[i] - fm[i]) / two_h;
        }
    }
    jac
}

/// Convenience: evaluate into a fresh vector.
pub fn eval_vec<T: Real, F: VectorField<T> + ?Sized>(field: &F, state: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); field.dim()];
    field.eval(state, &mut out);
    out
}

/// Closure-backed field, handy for normal forms and synthetic tests.
pub struct FnField<G> {
    dim: usize,
    f: G,
}

impl<G> FnField<G> {
    pub fn new(dim: usize, f: G) -> Self {
        Self { dim, f }
    }
}

impl<T: Real, G: Fn(&[T], &mut [T]) + Sync> VectorField<T> for FnField<G> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, state: &[T], out: &mut [T]) {
        (self.f)(state, out)
    }
}

/// Family built from a parameter-taking closure.
pub struct FnFamily<G> {
    dim: usize,
    f: G,
}

impl<G> FnFamily<G> {
    pub fn new(dim: usize, f: G) -> Self {
        Self { dim, f }
    }
}

pub struct BoundFn<G, T> {
    dim: usize,
    f: G,
    p: T,
}

impl<T: Real, G: Fn(T, &[T], &mut [T]) + Sync> VectorField<T> for BoundFn<G, T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, state: &[T], out: &mut [T]) {
        (self.f)(self.p, state, out)
    }
}

impl<T: Real, G: Fn(T, &[T], &mut [T]) + Sync + Clone> Family<T> for FnFamily<G> {
    type Field = BoundFn<G, T>;

    fn at(&self, p: T) -> crate::Result<Self::Field> {
        Ok(BoundFn {
            dim: self.dim,
            f: self.f.clone(),
            p,
        })
    }
}
