//! Fixed points: damped Newton, linear stability and the multistart census.

use std::fmt;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{MeanField, StateVector};
use crate::error::{Error, Result};
use crate::field::{eval_vec, fd_jacobian, VectorField};
use crate::lattice::UnitCell;
use crate::linalg::{eigenvalues, Lu};
use crate::scalar::{lit, max_abs, max_abs_diff, to_f64, Real};
use crate::seeds;

/// Population-equality tolerance for pattern classification.
pub const EPS_EQ: f64 = 1e-6;
/// Stable iff every eigenvalue has real part below `-STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// L∞ distance under which two roots are the same.
pub const DEDUP_TOL: f64 = 1e-6;
pub const MIN_CENSUS_SEEDS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SolutionClass {
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "AF")]
    Af,
    #[serde(rename = "AF2")]
    Af2,
    #[serde(rename = "non-uniform")]
    NonUniform,
}

impl SolutionClass {
    pub const ALL: [SolutionClass; 4] = [Self::Uniform, Self::Af, Self::Af2, Self::NonUniform];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Af => "AF",
            Self::Af2 => "AF2",
            Self::NonUniform => "non-uniform",
        }
    }
}

impl fmt::Display for SolutionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolutionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown solution class '{s}'")))
    }
}

fn depends_only_on<T: Real>(cell: &UnitCell, pops: &[T], eps: T, key: impl Fn(usize, usize) -> usize) -> bool {
    let mut reference: [Option<T>; 2] = [None, None];
    for (i, &n) in pops.iter().enumerate() {
        let (r, c) = cell.row_col(i);
        let k = key(r, c);
        match reference[k] {
            None => reference[k] = Some(n),
            Some(v) if (v - n).abs() > eps => return false,
            _ => {}
        }
    }
    true
}

/// Pattern class of a population vector; the most symmetric label wins.
pub fn classify_populations<T: Real>(cell: &UnitCell, pops: &[T], eps: T) -> SolutionClass {
    let lo = pops.iter().copied().fold(T::infinity(), T::min);
    let hi = pops.iter().copied().fold(T::neg_infinity(), T::max);
    if hi - lo <= eps {
        SolutionClass::Uniform
    } else if depends_only_on(cell, pops, eps, |r, c| (r + c) % 2) {
        SolutionClass::Af
    } else if depends_only_on(cell, pops, eps, |_, c| c % 2) {
        SolutionClass::Af2
    } else {
        SolutionClass::NonUniform
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// Largest allowed L∞ update per iteration.
    pub max_step: T,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            tol: lit(1e-12),
            max_iter: 200,
            max_step: lit(0.5),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonResult<T> {
    pub state: Vec<T>,
    pub residual: T,
    pub iterations: usize,
}

/// Damped Newton with backtracking on the max-norm residual.
pub fn newton<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    seed: &[T],
    opts: &NewtonOptions<T>,
) -> Result<NewtonResult<T>> {
    let n = field.dim();
    if seed.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: seed.len(),
        });
    }
    let mut x = seed.to_vec();
    let mut f = eval_vec(field, &x);
    let mut res = max_abs(&f);
    let mut trial = vec![T::zero(); n];
    let mut ft = vec![T::zero(); n];
    for it in 0..opts.max_iter {
        if !res.is_finite() {
            return Err(Error::NewtonFailed {
                iterations: it,
                residual: to_f64(res),
                reason: "non-finite residual".into(),
            });
        }
        if res < opts.tol {
            return Ok(NewtonResult {
                state: x,
                residual: res,
                iterations: it,
            });
        }
        let lu = Lu::new(&field.jacobian(&x), lit(1e-14)).map_err(|e| Error::NewtonFailed {
            iterations: it,
            residual: to_f64(res),
            reason: format!("{e} at iterate {:?}", x.iter().map(|&v| to_f64(v)).collect::<Vec<_>>()),
        })?;
        let neg: Vec<T> = f.iter().map(|&v| -v).collect();
        let dx = lu.solve(&neg);
        let len = max_abs(&dx);
        let mut lambda = if len > opts.max_step { opts.max_step / len } else { T::one() };
        let floor: T = lit(1.0 / 1024.0);
        loop {
            for i in 0..n {
                trial[i] = x[i] + lambda * dx[i];
            }
            field.eval(&trial, &mut ft);
            let rt = max_abs(&ft);
            if (rt.is_finite() && rt < (T::one() - lit::<T>(1e-4) * lambda) * res) || lambda < floor {
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut f, &mut ft);
                res = rt;
                break;
            }
            lambda *= lit(0.5);
        }
    }
    if res < opts.tol {
        return Ok(NewtonResult {
            state: x,
            residual: res,
            iterations: opts.max_iter,
        });
    }
    Err(Error::NewtonFailed {
        iterations: opts.max_iter,
        residual: to_f64(res),
        reason: "iteration limit".into(),
    })
}

/// Largest real part in a spectrum.
pub fn spectral_abscissa<T: Real>(eig: &[Complex<T>]) -> T {
    eig.iter().map(|z| z.re).fold(T::neg_infinity(), T::max)
}

/// Largest real part among eigenvalues with nonzero imaginary part.
pub fn leading_complex_pair<T: Real>(eig: &[Complex<T>]) -> Option<Complex<T>> {
    let scale = eig.iter().map(|z| z.norm()).fold(T::one(), T::max);
    let cut = scale * lit(1e-8);
    eig.iter()
        .filter(|z| z.im > cut)
        .copied()
        .max_by(|a, b| a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal))
}

#[derive(Clone, Debug)]
pub struct FixedPoint<T> {
    pub state: StateVector<T>,
    pub residual: T,
    pub eigenvalues: Vec<Complex<T>>,
    pub max_real: T,
    pub stable: bool,
    pub class: SolutionClass,
    /// Max-abs difference between the analytic and finite-difference Jacobians.
    pub jacobian_check: T,
}

impl<T: Real> FixedPoint<T> {
    /// Linearise `model` at an already converged root.
    pub fn analyse(model: &MeanField<T>, state: Vec<T>, residual: T) -> Result<Self> {
        let jac = model.jacobian(&state);
        let fd = fd_jacobian(model, &state, lit(1e-6));
        let eig = eigenvalues(&jac)?;
        let max_real = spectral_abscissa(&eig);
        let class = classify_populations(&model.cell, &crate::dynamics::populations(&state), lit(EPS_EQ));
        Ok(Self {
            jacobian_check: jac.max_abs_diff(&fd),
            stable: max_real < -lit::<T>(STABILITY_MARGIN),
            state: StateVector(state),
            residual,
            eigenvalues: eig,
            max_real,
            class,
        })
    }

    pub fn populations(&self) -> Vec<T> {
        self.state.populations()
    }
}

/// Newton from `seed` followed by the stability analysis.
pub fn newton_solve<T: Real>(model: &MeanField<T>, seed: &StateVector<T>, opts: &NewtonOptions<T>) -> Result<FixedPoint<T>> {
    let r = newton(model, &seed.0, opts)?;
    FixedPoint::analyse(model, r.state, r.residual)
}

/// An AF₂ root reached from lifted column patterns, if one exists.
pub fn af2_root<T: Real>(model: &MeanField<T>) -> Option<FixedPoint<T>> {
    const PAIRS: [(f64, f64); 8] = [
        (0.15, 0.45),
        (0.45, 0.15),
        (0.1, 0.3),
        (0.3, 0.1),
        (0.05, 0.6),
        (0.6, 0.05),
        (0.2, 0.8),
        (0.8, 0.2),
    ];
    let opts = NewtonOptions::default();
    PAIRS.iter().find_map(|&(a, b)| {
        let pops = seeds::column_pattern(&model.cell, lit(a), lit(b));
        let fp = newton_solve(model, &seeds::lift(model, &pops), &opts).ok()?;
        (fp.class == SolutionClass::Af2).then_some(fp)
    })
}

/// The uniform root, continued from the lifted single-value guesses.
pub fn uniform_root<T: Real>(model: &MeanField<T>) -> Option<FixedPoint<T>> {
    let opts = NewtonOptions::default();
    [0.05, 0.1, 0.2, 0.3, 0.02].iter().find_map(|&n| {
        let pops = vec![lit::<T>(n); model.sites()];
        let fp = newton_solve(model, &seeds::lift(model, &pops), &opts).ok()?;
        (fp.class == SolutionClass::Uniform).then_some(fp)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassCount {
    pub class: SolutionClass,
    pub count: usize,
    pub stable: usize,
    pub unstable: usize,
}

#[derive(Clone, Debug)]
pub struct SolutionCensus<T> {
    pub v_inter: T,
    pub n_seeds: usize,
    pub rng_seed: u64,
    pub converged_seeds: usize,
    pub roots: Vec<FixedPoint<T>>,
}

impl<T: Real> SolutionCensus<T> {
    pub fn of_class(&self, class: SolutionClass) -> impl Iterator<Item = &FixedPoint<T>> {
        self.roots.iter().filter(move |r| r.class == class)
    }

    pub fn count(&self, class: SolutionClass) -> usize {
        self.of_class(class).count()
    }

    pub fn counts(&self) -> Vec<ClassCount> {
        SolutionClass::ALL
            .iter()
            .map(|&class| {
                let stable = self.of_class(class).filter(|r| r.stable).count();
                let count = self.count(class);
                ClassCount {
                    class,
                    count,
                    stable,
                    unstable: count - stable,
                }
            })
            .collect()
    }

    /// `(class, count, stable)` triples, the part compared across censuses.
    pub fn signature(&self) -> Vec<(SolutionClass, usize, usize)> {
        self.counts().into_iter().map(|c| (c.class, c.count, c.stable)).collect()
    }
}

/// Seeds tried by [`census`]: structured patterns first, random draws after.
pub fn census_seeds<T: Real>(model: &MeanField<T>, n_seeds: usize, rng_seed: u64) -> Vec<StateVector<T>> {
    let levels = [0.05, 0.15, 0.3, 0.45, 0.6, 0.8];
    let mut out = Vec::with_capacity(n_seeds);
    for &a in &levels {
        out.push(seeds::lift(model, &vec![lit::<T>(a); model.sites()]));
    }
    for &a in &levels {
        for &b in &levels {
            if a != b {
                out.push(seeds::lift(model, &seeds::checkerboard(&model.cell, lit(a), lit(b))));
                out.push(seeds::lift(model, &seeds::column_pattern(&model.cell, lit(a), lit(b))));
            }
        }
    }
    let mut k = 0u64;
    while out.len() < n_seeds {
        let mut rng = seeds::stream_rng(rng_seed, k);
        out.push(if k % 2 == 0 {
            seeds::random_bloch(model.sites(), &mut rng)
        } else {
            let pops = seeds::random_populations::<T, _>(model.sites(), &mut rng).populations();
            seeds::lift(model, &pops)
        });
        k += 1;
    }
    out
}

/// Multistart Newton census with L∞ deduplication.
pub fn census<T: Real>(model: &MeanField<T>, n_seeds: usize, rng_seed: u64) -> Result<SolutionCensus<T>> {
    if n_seeds < MIN_CENSUS_SEEDS {
        return Err(Error::InvalidArgument(format!(
            "census needs at least {MIN_CENSUS_SEEDS} seeds, got {n_seeds}"
        )));
    }
    let opts = NewtonOptions::default();
    let seeds = census_seeds(model, n_seeds, rng_seed);
    let solved: Vec<Option<NewtonResult<T>>> = seeds
        .par_iter()
        .map(|s| newton(model, &s.0, &opts).ok())
        .collect();
    let converged_seeds = solved.iter().filter(|s| s.is_some()).count();
    let mut unique: Vec<NewtonResult<T>> = Vec::new();
    for r in solved.into_iter().flatten() {
        if unique.iter().all(|u| max_abs_diff(&u.state, &r.state) > lit(DEDUP_TOL)) {
            unique.push(r);
        }
    }
    let mut roots = unique
        .into_par_iter()
        .map(|r| FixedPoint::analyse(model, r.state, r.residual))
        .collect::<Result<Vec<_>>>()?;
    roots.sort_by(|a, b| {
        a.class.cmp(&b.class).then_with(|| {
            a.state
                .0
                .iter()
                .zip(&b.state.0)
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok(SolutionCensus {
        v_inter: model.params.v_inter,
        n_seeds,
        rng_seed,
        converged_seeds,
        roots,
    })
}
