//! Model parameters, the periodic unit cell and the mean-field coupling matrix.
//!
//! Sites are laid out row-major: row `r` is a chain, column `c` a sublattice
//! along the chain. Labels follow the `1A, 1B, 2A, 2B` convention.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// How the diagonal inter-chain coupling is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagCoupling<T> {
    Explicit(T),
    /// Derived from `v_intra` and `v_inter` through the r⁻⁶ law.
    Geometric,
}

/// Placement of the second-order mean-field shift `r·n²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HighOrderForm {
    /// `r · 𝒱_i · n_i²` using the site's own population.
    Local,
    /// `r · Σ_j W_ij n_j²`, each bond carrying its own second-order term.
    NeighborResolved,
}

impl HighOrderForm {
    pub fn as_str(self) -> &'static str {
        match self {
            HighOrderForm::Local => "local",
            HighOrderForm::NeighborResolved => "neighbor",
        }
    }
}

/// Physical couplings in units of the decay rate γ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams<T> {
    pub omega: T,
    pub delta: T,
    pub gamma: T,
    pub v_intra: T,
    pub v_inter: T,
    pub v_diag: DiagCoupling<T>,
    /// Diagonal neighbours counted per adjacent chain (1 or 2).
    pub diag_multiplicity: u8,
    pub r_high_order: T,
    pub high_order_form: HighOrderForm,
    pub v_nnn: T,
}

impl<T: Real> ModelParams<T> {
    /// Ω = 2.2, Δ = 2.5, V = 5, γ = 1, V_i = 1, V_{i2} = 0.
    pub fn paper_default() -> Self {
        Self {
            omega: lit(2.2),
            delta: lit(2.5),
            gamma: T::one(),
            v_intra: lit(5.0),
            v_inter: T::one(),
            v_diag: DiagCoupling::Explicit(T::zero()),
            diag_multiplicity: 1,
            r_high_order: T::zero(),
            high_order_form: HighOrderForm::NeighborResolved,
            v_nnn: T::zero(),
        }
    }

    /// Look up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-default" => Some(Self::paper_default()),
            _ => None,
        }
    }

    pub fn with_v_inter(&self, v_inter: T) -> Self {
        Self {
            v_inter,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("omega", self.omega),
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("v_intra", self.v_intra),
            ("v_inter", self.v_inter),
            ("r_high_order", self.r_high_order),
            ("v_nnn", self.v_nnn),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        if self.gamma <= T::zero() {
            return Err(Error::InvalidParams("gamma must be positive".into()));
        }
        if self.v_inter < T::zero() {
            return Err(Error::InvalidParams("v_inter must be nonnegative".into()));
        }
        if self.v_intra < self.v_inter {
            return Err(Error::InvalidParams(format!(
                "v_intra ({}) must be >= v_inter ({})",
                self.v_intra, self.v_inter
            )));
        }
        if self.v_nnn < T::zero() {
            return Err(Error::InvalidParams("v_nnn must be nonnegative".into()));
        }
        if let DiagCoupling::Explicit(v) = self.v_diag {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::InvalidParams(
                    "v_diag must be finite and nonnegative".into(),
                ));
            }
        }
        if !(1..=2).contains(&self.diag_multiplicity) {
            return Err(Error::InvalidParams(
                "diag_multiplicity must be 1 or 2".into(),
            ));
        }
        Ok(())
    }

    /// Numeric diagonal coupling; the geometric form vanishes when either chain spacing is infinite.
    pub fn resolved_v_diag(&self) -> T {
        match self.v_diag {
            DiagCoupling::Explicit(v) => v,
            DiagCoupling::Geometric => {
                geometric_diag_coupling(self.v_intra, self.v_inter).unwrap_or(T::zero())
            }
        }
    }
}

/// Van-der-Waals coupling at the diagonal distance √(a² + b²), given
/// `V = C₆/a⁶` and `V_i = C₆/b⁶`.
pub fn geometric_diag_coupling<T: Real>(v_intra: T, v_inter: T) -> Result<T> {
    if !(v_intra > T::zero() && v_inter > T::zero()) {
        return Err(Error::InvalidParams(format!(
            "geometric diagonal coupling needs positive couplings, got V = {v_intra}, V_i = {v_inter}"
        )));
    }
    let third = lit::<T>(1.0 / 3.0);
    let s = v_intra.powf(-third) + v_inter.powf(-third);
    Ok(s.powi(-3))
}

/// Periodic block of inequivalent sites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UnitCell {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<String>,
}

impl UnitCell {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidCell {
                rows,
                cols,
                reason: "cell must contain at least one site".into(),
            });
        }
        if cols > 1 && cols % 2 == 1 {
            return Err(Error::InvalidCell {
                rows,
                cols,
                reason: "column count must be even".into(),
            });
        }
        let labels = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| site_label(r, c)))
            .collect();
        Ok(Self { rows, cols, labels })
    }

    pub fn sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        (row % self.rows) * self.cols + (col % self.cols)
    }

    pub fn row_col(&self, site: usize) -> (usize, usize) {
        (site / self.cols, site % self.cols)
    }

    /// Site permutation shifting every chain by one column (A ↔ B).
    pub fn sublattice_shift(&self) -> Vec<usize> {
        (0..self.sites())
            .map(|i| {
                let (r, c) = self.row_col(i);
                self.index(r, c + 1)
            })
            .collect()
    }

    /// Site permutation reversing the chain order (1 ↔ 2 for two chains).
    pub fn chain_reverse(&self) -> Vec<usize> {
        (0..self.sites())
            .map(|i| {
                let (r, c) = self.row_col(i);
                self.index(self.rows - 1 - r, c)
            })
            .collect()
    }

    /// Site permutation shifting every site one chain down, with wrap.
    pub fn chain_shift(&self) -> Vec<usize> {
        (0..self.sites())
            .map(|i| {
                let (r, c) = self.row_col(i);
                self.index(r + 1, c)
            })
            .collect()
    }

    pub fn site_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// `1A`, `1B`, … for up to 26 columns, `1:c27` style beyond.
pub fn site_label(row: usize, col: usize) -> String {
    if col < 26 {
        format!("{}{}", row + 1, (b'A' + col as u8) as char)
    } else {
        format!("{}:c{}", row + 1, col + 1)
    }
}

/// Interaction matrix: `w[i][j]` multiplies `n_j` in site `i`'s detuning shift.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingTable<T> {
    pub sites: usize,
    pub w: Vec<T>,
    /// Row sums 𝒱_i = Σ_j W_ij.
    pub v_sum: Vec<T>,
}

impl<T: Real> CouplingTable<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.w[i * self.sites + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.w[i * self.sites..(i + 1) * self.sites]
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..self.sites).all(|i| (0..self.sites).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

/// Build the unit cell and sum the periodic neighbour couplings with multiplicity.
pub fn build_unit_cell<T: Real>(
    rows: usize,
    cols: usize,
    params: &ModelParams<T>,
) -> Result<(UnitCell, CouplingTable<T>)> {
    params.validate()?;
    let cell = UnitCell::new(rows, cols)?;
    let n = cell.sites();
    let mut w = vec![T::zero(); n * n];
    let v_diag = params.resolved_v_diag();
    let diag_each = v_diag * lit::<T>(params.diag_multiplicity as f64 / 2.0);

    // Two chains share a single inter-chain bond; three or more form a ring.
    let row_offsets: &[isize] = match rows {
        1 => &[],
        2 => &[1],
        _ => &[1, -1],
    };
    let wrap = |x: usize, d: isize, m: usize| (x as isize + d).rem_euclid(m as isize) as usize;

    for r in 0..rows {
        for c in 0..cols {
            let i = cell.index(r, c);
            for d in [1isize, -1] {
                w[i * n + cell.index(r, wrap(c, d, cols))] += params.v_intra;
            }
            if params.v_nnn != T::zero() {
                for d in [2isize, -2] {
                    w[i * n + cell.index(r, wrap(c, d, cols))] += params.v_nnn;
                }
            }
            for &dr in row_offsets {
                let rr = wrap(r, dr, rows);
                w[i * n + cell.index(rr, c)] += params.v_inter;
                if diag_each != T::zero() {
                    for dc in [1isize, -1] {
                        w[i * n + cell.index(rr, wrap(c, dc, cols))] += diag_each;
                    }
                }
            }
        }
    }
    let v_sum = (0..n).map(|i| w[i * n..(i + 1) * n].iter().copied().sum()).collect();
    Ok((cell, CouplingTable { sites: n, w, v_sum }))
}

/// Conversion of dimensionless (γ-unit) quantities to laboratory units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalUnits {
    /// γ / 2π in MHz.
    pub gamma_mhz: f64,
}

impl PhysicalUnits {
    pub const RB87: Self = Self { gamma_mhz: 6.0 };
    pub const CS: Self = Self { gamma_mhz: 5.2 };

    pub fn new(gamma_mhz: f64) -> Result<Self> {
        if !(gamma_mhz > 0.0 && gamma_mhz.is_finite()) {
            return Err(Error::InvalidParams("gamma_mhz must be positive".into()));
        }
        Ok(Self { gamma_mhz })
    }

    /// Seconds per unit of 1/γ.
    pub fn time_scale(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.gamma_mhz * 1e6)
    }

    pub fn seconds(&self, t: f64) -> f64 {
        t * self.time_scale()
    }

    /// Frequency in units of 2π·MHz.
    pub fn frequency_mhz_2pi(&self, f: f64) -> f64 {
        f * self.gamma_mhz
    }

    /// Angular frequency in rad/s.
    pub fn angular_frequency(&self, f: f64) -> f64 {
        f * 2.0 * std::f64::consts::PI * self.gamma_mhz * 1e6
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(v: f64, vi: f64, vd: f64) -> ModelParams<f64> {
        ModelParams {
            v_intra: v,
            v_inter: vi,
            v_diag: DiagCoupling::Explicit(vd),
            ..ModelParams::paper_default()
        }
    }

    #[test]
    fn two_by_two_matches_four_site_equations() {
        let (cell, w) = build_unit_cell(2, 2, &params(5.0, 1.0, 0.0)).unwrap();
        assert_eq!(cell.labels, ["1A", "1B", "2A", "2B"]);
        assert_eq!(w.row(0), &[0.0, 10.0, 1.0, 0.0]);
        assert_eq!(w.row(3), &[0.0, 1.0, 10.0, 0.0]);
    }

    #[test]
    fn single_site_self_coupling_is_two_v() {
        let p = ModelParams {
            v_inter: 0.0,
            ..params(5.0, 0.0, 0.0)
        };
        let (_, w) = build_unit_cell(1, 1, &p).unwrap();
        assert_eq!(w.w, vec![10.0]);
    }

    // Oracle: enumerate all neighbours of 1A on the infinite two-chain strip and fold them into the cell.
    #[test]
    fn two_by_four_with_nnn_matches_enumeration() {
        let v = 5.0;
        let vi = 1.0;
        let v2 = 5.0 / 64.0;
        let p = ModelParams {
            v_nnn: v2,
            ..params(v, vi, 0.0)
        };
        let (cell, w) = build_unit_cell(2, 4, &p).unwrap();
        let mut expect = vec![0.0; 8];
        for (dr, dc, coeff) in [(0i64, 1i64, v), (0, -1, v), (0, 2, v2), (0, -2, v2), (1, 0, vi)] {
            let c = (dc.rem_euclid(4)) as usize;
            expect[cell.index(dr as usize, c)] += coeff;
        }
        assert_eq!(w.row(0), expect.as_slice());
        assert_relative_eq!(w.get(0, cell.site_index("1C").unwrap()), 5.0 / 32.0);
        assert_eq!(w.get(0, cell.site_index("1B").unwrap()), v);
        assert_eq!(w.get(0, cell.site_index("1D").unwrap()), v);
    }

    #[test]
    fn row_sums_follow_diag_multiplicity() {
        for m in [1u8, 2] {
            let p = ModelParams {
                diag_multiplicity: m,
                ..params(5.0, 1.0, 0.3)
            };
            let (_, w) = build_unit_cell(2, 2, &p).unwrap();
            for s in &w.v_sum {
                assert_relative_eq!(*s, 10.0 + 1.0 + m as f64 * 0.3, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn rejects_empty_and_odd_cells() {
        let p = ModelParams::<f64>::paper_default();
        assert!(build_unit_cell(0, 2, &p).is_err());
        assert!(build_unit_cell(2, 0, &p).is_err());
        assert!(build_unit_cell(2, 3, &p).is_err());
    }

    #[test]
    fn validate_rejects_inverted_couplings() {
        assert!(params(1.0, 2.0, 0.0).validate().is_err());
        let mut p = params(5.0, 1.0, 0.0);
        p.gamma = 0.0;
        assert!(p.validate().is_err());
        p.gamma = 1.0;
        p.omega = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn geometric_diagonal_examples() {
        assert_relative_eq!(geometric_diag_coupling(5.0, 5.0).unwrap(), 0.625, epsilon = 1e-14);
        // C6 = 1: spacing a from V = a⁻⁶, chain gap b from V_i = b⁻⁶
        let (a, b) = (5f64.powf(-1.0 / 6.0), 1.0);
        let direct = a.hypot(b).powi(-6);
        assert_relative_eq!(geometric_diag_coupling(5.0, 1.0).unwrap(), direct, epsilon = 1e-14);
        assert_relative_eq!(direct, 0.25123, epsilon = 1e-5);
        assert_relative_eq!(geometric_diag_coupling(5.0, 1e18).unwrap(), 5.0, epsilon = 1e-3);
        assert!(geometric_diag_coupling(0.0, 1.0).is_err());
        assert!(geometric_diag_coupling(1.0, -1.0).is_err());
    }

    #[test]
    fn physical_unit_conversion() {
        assert_relative_eq!(PhysicalUnits::RB87.seconds(1.0) * 1e9, 26.525823848649224, epsilon = 1e-9);
        assert_relative_eq!(PhysicalUnits::CS.seconds(1.0) * 1e9, 30.6067, epsilon = 1e-3);
        assert_eq!(PhysicalUnits::new(1.0).unwrap().frequency_mhz_2pi(1.0), 1.0);
        assert!(PhysicalUnits::new(0.0).is_err());
    }

    #[test]
    fn symmetric_cell_invariant_under_chain_and_sublattice_swap() {
        let (cell, w) = build_unit_cell(2, 2, &params(5.0, 5.0, 0.0)).unwrap();
        for perm in [cell.chain_reverse(), cell.sublattice_shift()] {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(w.get(perm[i], perm[j]), w.get(i, j));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn coupling_matrix_symmetric_nonnegative(
            v in 0.1f64..10.0, frac in 0.0f64..1.0, vd in 0.0f64..1.0, v2 in 0.0f64..0.5,
            rows in 1usize..5, half_cols in 1usize..4, geometric in any::<bool>(), m in 1u8..3,
        ) {
            let vi = v * frac;
            let p = ModelParams {
                v_diag: if geometric { DiagCoupling::Geometric } else { DiagCoupling::Explicit(vd) },
                v_nnn: v2,
                diag_multiplicity: m,
                ..params(v, vi, 0.0)
            };
            let (_, w) = build_unit_cell(rows, 2 * half_cols, &p).unwrap();
            prop_assert!(w.is_symmetric(1e-12));
            prop_assert!(w.w.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn geometric_coupling_monotone_and_bounded(a in 0.1f64..10.0, b in 0.1f64..10.0, da in 0.01f64..1.0) {
            let g = geometric_diag_coupling(a, b).unwrap();
            prop_assert!(g <= a.min(b) * (1.0 + 1e-12));
            prop_assert!(geometric_diag_coupling(a + da, b).unwrap() > g);
            prop_assert!(geometric_diag_coupling(a, b + da).unwrap() > g);
        }
    }
}
