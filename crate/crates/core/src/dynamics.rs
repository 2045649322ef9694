//! Mean-field equations of motion for an arbitrary unit cell.
//!
//! Per site `i` with population `n`, coherence `σ = x + iy` and shift
//! `D_i = Σ_j W_ij n_j (+ second-order term)`:
//!
//! ```text
//! dn/dt = Ω y − γ n
//! dx/dt = −(γ/2) x + (Δ − D) y
//! dy/dt = −(γ/2) y − (Δ − D) x − (Ω/2)(2n − 1)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Family, VectorField};
use crate::integrate::{self, AdaptiveOptions, Rk4Options, Trajectory};
use crate::lattice::{build_unit_cell, CouplingTable, HighOrderForm, ModelParams, UnitCell};
use crate::linalg::Matrix;
use crate::scalar::{lit, Real};

/// Flattened `(n, x, y)` triples, one per site.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StateVector<T>(pub Vec<T>);

impl<T: Real> StateVector<T> {
    pub fn zeros(sites: usize) -> Self {
        Self(vec![T::zero(); 3 * sites])
    }

    pub fn from_sites(sites: &[(T, T, T)]) -> Self {
        Self(sites.iter().flat_map(|&(n, x, y)| [n, x, y]).collect())
    }

    pub fn sites(&self) -> usize {
        self.0.len() / 3
    }

    pub fn n(&self, i: usize) -> T {
        self.0[3 * i]
    }

    pub fn x(&self, i: usize) -> T {
        self.0[3 * i + 1]
    }

    pub fn y(&self, i: usize) -> T {
        self.0[3 * i + 2]
    }

    pub fn set_site(&mut self, i: usize, n: T, x: T, y: T) {
        self.0[3 * i] = n;
        self.0[3 * i + 1] = x;
        self.0[3 * i + 2] = y;
    }

    pub fn populations(&self) -> Vec<T> {
        populations(&self.0)
    }

    /// `(2x)² + (2y)² + (2n − 1)²`, at most 1 for a physical state.
    pub fn bloch_norm_sq(&self, i: usize) -> T {
        bloch_norm_sq(&self.0, i)
    }

    /// State with site `i` moved to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(permute_sites(&self.0, perm))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

pub fn populations<T: Real>(state: &[T]) -> Vec<T> {
    state.iter().step_by(3).copied().collect()
}

pub fn bloch_norm_sq<T: Real>(state: &[T], i: usize) -> T {
    let two: T = lit(2.0);
    let (n, x, y) = (state[3 * i], state[3 * i + 1], state[3 * i + 2]);
    (two * x).powi(2) + (two * y).powi(2) + (two * n - T::one()).powi(2)
}

pub fn permute_sites<T: Real>(state: &[T], perm: &[usize]) -> Vec<T> {
    let mut out = vec![T::zero(); state.len()];
    for (i, &j) in perm.iter().enumerate() {
        out[3 * j..3 * j + 3].copy_from_slice(&state[3 * i..3 * i + 3]);
    }
    out
}

/// Parameters, cell and couplings bound together as a vector field.
#[derive(Clone, Debug)]
pub struct MeanField<T> {
    pub params: ModelParams<T>,
    pub cell: UnitCell,
    pub table: CouplingTable<T>,
}

impl<T: Real> MeanField<T> {
    pub fn new(params: ModelParams<T>, rows: usize, cols: usize) -> Result<Self> {
        let (cell, table) = build_unit_cell(rows, cols, &params)?;
        Ok(Self { params, cell, table })
    }

    pub fn sites(&self) -> usize {
        self.cell.sites()
    }

    /// Same cell with a different inter-chain coupling.
    pub fn with_v_inter(&self, v_inter: T) -> Result<Self> {
        Self::new(self.params.with_v_inter(v_inter), self.cell.rows, self.cell.cols)
    }

    fn shifts(&self, state: &[T], d: &mut [T]) {
        let n_sites = self.sites();
        let r = self.params.r_high_order;
        for (i, di) in d.iter_mut().enumerate().take(n_sites) {
            let row = self.table.row(i);
            let mut s = T::zero();
            match self.params.high_order_form {
                HighOrderForm::NeighborResolved if r != T::zero() => {
                    for (j, &w) in row.iter().enumerate() {
                        let nj = state[3 * j];
                        s += w * (nj + r * nj * nj);
                    }
                }
                _ => {
                    for (j, &w) in row.iter().enumerate() {
                        s += w * state[3 * j];
                    }
                    if r != T::zero() {
                        let ni = state[3 * i];
                        s += r * self.table.v_sum[i] * ni * ni;
                    }
                }
            }
            *di = s;
        }
    }

    /// `∂D_i/∂n_j`.
    fn shift_derivative(&self, state: &[T], i: usize, j: usize) -> T {
        let w = self.table.get(i, j);
        let r = self.params.r_high_order;
        let two: T = lit(2.0);
        match self.params.high_order_form {
            HighOrderForm::NeighborResolved => w * (T::one() + two * r * state[3 * j]),
            HighOrderForm::Local => {
                if i == j {
                    w + two * r * self.table.v_sum[i] * state[3 * i]
                } else {
                    w
                }
            }
        }
    }

    pub fn integrate_rk4(&self, state0: &StateVector<T>, opts: &Rk4Options<T>) -> Result<Trajectory<T>> {
        check_len(self, state0)?;
        let traj = integrate::integrate_rk4(self, &state0.0, opts).map_err(|e| self.annotate_error(e))?;
        Ok(traj.with_provenance(self.params.clone(), self.cell.clone()))
    }

    pub fn integrate_adaptive(
        &self,
        state0: &StateVector<T>,
        opts: &AdaptiveOptions<T>,
    ) -> Result<Trajectory<T>> {
        check_len(self, state0)?;
        let traj =
            integrate::integrate_adaptive(self, &state0.0, opts).map_err(|e| self.annotate_error(e))?;
        Ok(traj.with_provenance(self.params.clone(), self.cell.clone()))
    }

    fn annotate_error(&self, e: Error) -> Error {
        match e {
            Error::NonFinite { t, last_state, .. } => Error::NonFinite {
                t,
                last_state,
                context: format!("params {:?}, cell {}x{}", self.params, self.cell.rows, self.cell.cols),
            },
            other => other,
        }
    }
}

fn check_len<T: Real>(model: &MeanField<T>, state: &StateVector<T>) -> Result<()> {
    if state.0.len() != 3 * model.sites() {
        return Err(Error::DimensionMismatch {
            expected: 3 * model.sites(),
            got: state.0.len(),
        });
    }
    Ok(())
}

impl<T: Real> VectorField<T> for MeanField<T> {
    fn dim(&self) -> usize {
        3 * self.sites()
    }

    fn eval(&self, state: &[T], out: &mut [T]) {
        let p = &self.params;
        let half: T = lit(0.5);
        let two: T = lit(2.0);
        let sites = self.sites();
        let mut d = [T::zero(); 64];
        let mut heap;
        let d: &mut [T] = if sites <= 64 {
            &mut d[..sites]
        } else {
            heap = vec![T::zero(); sites];
            &mut heap
        };
        self.shifts(state, d);
        for i in 0..sites {
            let (n, x, y) = (state[3 * i], state[3 * i + 1], state[3 * i + 2]);
            let det = p.delta - d[i];
            out[3 * i] = p.omega * y - p.gamma * n;
            out[3 * i + 1] = -half * p.gamma * x + det * y;
            out[3 * i + 2] = -half * p.gamma * y - det * x - half * p.omega * (two * n - T::one());
        }
    }

    fn jacobian(&self, state: &[T]) -> Matrix<T> {
        let p = &self.params;
        let sites = self.sites();
        let half: T = lit(0.5);
        let mut d = vec![T::zero(); sites];
        self.shifts(state, &mut d);
        let mut jac = Matrix::zeros(3 * sites, 3 * sites);
        for i in 0..sites {
            let (x, y) = (state[3 * i + 1], state[3 * i + 2]);
            let det = p.delta - d[i];
            let (rn, rx, ry) = (3 * i, 3 * i + 1, 3 * i + 2);
            jac[(rn, rn)] = -p.gamma;
            jac[(rn, ry)] = p.omega;
            jac[(rx, rx)] = -half * p.gamma;
            jac[(rx, ry)] = det;
            jac[(ry, ry)] = -half * p.gamma;
            jac[(ry, rx)] = -det;
            jac[(ry, rn)] = -p.omega;
            for j in 0..sites {
                let dd = self.shift_derivative(state, i, j);
                if dd != T::zero() {
                    jac[(rx, 3 * j)] -= y * dd;
                    jac[(ry, 3 * j)] += x * dd;
                }
            }
        }
        jac
    }
}

/// Right-hand side for a typed state.
pub fn eom_rhs<T: Real>(state: &StateVector<T>, model: &MeanField<T>) -> Result<StateVector<T>> {
    check_len(model, state)?;
    let mut out = vec![T::zero(); state.0.len()];
    model.eval(&state.0, &mut out);
    Ok(StateVector(out))
}

/// The mean-field model viewed as a family in the inter-chain coupling `V_i`.
#[derive(Clone, Debug)]
pub struct VInterFamily<T> {
    pub base: ModelParams<T>,
    pub rows: usize,
    pub cols: usize,
}

impl<T: Real> VInterFamily<T> {
    pub fn new(base: ModelParams<T>, rows: usize, cols: usize) -> Self {
        Self { base, rows, cols }
    }

    pub fn of(model: &MeanField<T>) -> Self {
        Self::new(model.params.clone(), model.cell.rows, model.cell.cols)
    }
}

impl<T: Real> Family<T> for VInterFamily<T> {
    type Field = MeanField<T>;

    fn at(&self, p: T) -> Result<MeanField<T>> {
        MeanField::new(self.base.with_v_inter(p), self.rows, self.cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::fd_jacobian;
    use crate::lattice::DiagCoupling;
    use approx::assert_relative_eq;

    fn default_2x2(vi: f64) -> MeanField<f64> {
        MeanField::new(ModelParams::paper_default().with_v_inter(vi), 2, 2).unwrap()
    }

    #[test]
    fn undriven_ground_state_is_stationary() {
        let mut p = ModelParams::<f64>::paper_default();
        p.omega = 0.0;
        let m = MeanField::new(p, 2, 2).unwrap();
        let d = eom_rhs(&StateVector::zeros(4), &m).unwrap();
        assert!(d.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn driven_ground_state_builds_coherence() {
        let m = default_2x2(1.0);
        let d = eom_rhs(&StateVector::zeros(4), &m).unwrap();
        for i in 0..4 {
            assert_eq!(d.n(i), 0.0);
            assert_eq!(d.x(i), 0.0);
            assert_relative_eq!(d.y(i), 1.1, epsilon = 1e-15);
        }
    }

    // Oracle: the four-site equations written out term by term with complex σ.
    #[test]
    fn four_site_rhs_matches_written_out_equations() {
        use num_complex::Complex64 as C;
        let (om, de, v, vi, g) = (2.2, 2.5, 5.0, 1.0, 1.0);
        let sites = [(0.3, 0.1, -0.2), (0.15, -0.05, 0.12), (0.4, 0.2, 0.05), (0.05, -0.1, -0.3)];
        let n: Vec<f64> = sites.iter().map(|s| s.0).collect();
        let sig: Vec<C> = sites.iter().map(|s| C::new(s.1, s.2)).collect();
        // (self, intra partner, inter partner) for 1A, 1B, 2A, 2B
        let partners = [(0, 1, 2), (1, 0, 3), (2, 3, 0), (3, 2, 1)];
        let mut expect = Vec::new();
        for &(i, b, c) in &partners {
            let dn = om * sig[i].im - g * n[i];
            let shift = de - 2.0 * v * n[b] - vi * n[c];
            let ds = -0.5 * g * sig[i] - C::i() * shift * sig[i] - C::i() * 0.5 * om * (2.0 * n[i] - 1.0);
            expect.extend([dn, ds.re, ds.im]);
        }
        let got = eom_rhs(&StateVector::from_sites(&sites), &default_2x2(vi)).unwrap();
        for (a, b) in got.0.iter().zip(&expect) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        assert!(matches!(
            eom_rhs(&StateVector::zeros(3), &default_2x2(1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_site_cell_is_uniform_chain() {
        let mut p = ModelParams::<f64>::paper_default();
        p.v_inter = 0.0;
        let one = MeanField::new(p.clone(), 1, 1).unwrap();
        let s = StateVector::from_sites(&[(0.3, 0.1, 0.2)]);
        let d = eom_rhs(&s, &one).unwrap();
        let shift = p.delta - 2.0 * p.v_intra * 0.3;
        assert_relative_eq!(d.x(0), -0.05 + shift * 0.2, epsilon = 1e-14);
        assert_relative_eq!(d.y(0), -0.1 - shift * 0.1 - 1.1 * (0.6 - 1.0), epsilon = 1e-14);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for (rows, cols, r, form) in [
            (2, 2, 0.0, HighOrderForm::NeighborResolved),
            (2, 4, 2.0, HighOrderForm::NeighborResolved),
            (4, 2, 2.0, HighOrderForm::Local),
            (1, 1, 0.5, HighOrderForm::Local),
        ] {
            let mut p = ModelParams::paper_default().with_v_inter(if rows > 1 { 1.3 } else { 0.0 });
            p.r_high_order = r;
            p.high_order_form = form;
            p.v_nnn = 5.0 / 64.0;
            p.v_diag = DiagCoupling::Geometric;
            let m = MeanField::new(p, rows, cols).unwrap();
            for _ in 0..10 {
                let st: Vec<f64> = crate::seeds::random_bloch(m.sites(), &mut rng).0;
                let a = m.jacobian(&st);
                let f = fd_jacobian(&m, &st, 1e-6);
                assert!(a.max_abs_diff(&f) < 1e-6, "{}", a.max_abs_diff(&f));
            }
        }
    }

    #[test]
    fn high_order_forms_agree_on_uniform_states() {
        let mut p = ModelParams::<f64>::paper_default();
        p.r_high_order = 2.0;
        let local = MeanField::new(ModelParams { high_order_form: HighOrderForm::Local, ..p.clone() }, 2, 2).unwrap();
        let nbr = MeanField::new(p, 2, 2).unwrap();
        let s = StateVector::from_sites(&[(0.25, 0.1, -0.2); 4]);
        let a = eom_rhs(&s, &local).unwrap();
        let b = eom_rhs(&s, &nbr).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert_relative_eq!(*x, *y, epsilon = 1e-14);
        }
    }

    #[test]
    fn f32_evaluation_tracks_f64() {
        let m64 = default_2x2(1.0);
        let m32 = MeanField::<f32>::new(ModelParams::paper_default().with_v_inter(1.0), 2, 2).unwrap();
        let s = [(0.3, 0.1, -0.2), (0.15, -0.05, 0.12), (0.4, 0.2, 0.05), (0.05, -0.1, -0.3)];
        let s32: Vec<(f32, f32, f32)> = s.iter().map(|&(a, b, c)| (a as f32, b as f32, c as f32)).collect();
        let d64 = eom_rhs(&StateVector::from_sites(&s), &m64).unwrap();
        let d32 = eom_rhs(&StateVector::from_sites(&s32), &m32).unwrap();
        for (a, b) in d64.0.iter().zip(&d32.0) {
            assert!((a - *b as f64).abs() < 1e-5);
        }
    }
}
