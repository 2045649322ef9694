//! Limit-cycle detection, synchronisation-mode classification and basin sampling.
//!
//! The period comes from the spacing of the population maxima of a reference
//! site, one maximum per excursion above 75% of the range and refined by a
//! parabola through the neighbouring samples. Phase offsets come from the
//! circular cross-correlation of the populations resampled over whole periods.
//!
//! Two cycle classes are recognised. An AF cycle has an equal-time
//! checkerboard pattern. An AF₂ cycle repeats every two columns and adjacent
//! chains run half a period apart, `n_{r+1,c}(t) = n_{r,c}(t + T/2)`. The
//! equal-time on-site lock between chains and the half-period shift inside a
//! chain are reported alongside.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{MeanField, StateVector};
use crate::error::{Error, Result};
use crate::integrate::{Rk4Options, Trajectory};
use crate::lattice::UnitCell;
use crate::scalar::{lit, to_f64, Real};
use crate::seeds::{self, SeedKind};
use crate::steady::{newton_solve, NewtonOptions, SolutionClass};

#[derive(Clone, Debug)]
pub struct CycleOptions<T> {
    pub t_transient: T,
    /// All population amplitudes below this mean a fixed point.
    pub eps_osc: T,
    /// Symmetry residuals must be below this fraction of the largest amplitude.
    pub eps_cyc_rel: T,
    pub min_periods: usize,
    /// Peaks are counted once per excursion above `min + peak_level·range`.
    pub peak_level: T,
    /// Largest tolerated `(max − min)` peak spacing relative to the period.
    pub max_spread: T,
    /// Largest tolerated relative amplitude change between window halves.
    pub max_drift: T,
    pub samples_per_period: usize,
}

impl<T: Real> Default for CycleOptions<T> {
    fn default() -> Self {
        Self {
            t_transient: lit(100.0),
            eps_osc: lit(1e-4),
            eps_cyc_rel: lit(1e-3),
            min_periods: 20,
            peak_level: lit(0.75),
            max_spread: lit(0.01),
            max_drift: lit(1e-3),
            samples_per_period: 128,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CycleClass {
    #[serde(rename = "fixed-point")]
    FixedPoint,
    #[serde(rename = "AF-cycle")]
    AfCycle,
    #[serde(rename = "AF2-cycle")]
    Af2Cycle,
    #[serde(rename = "unclassified")]
    Unclassified,
}

impl CycleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FixedPoint => "fixed-point",
            Self::AfCycle => "AF-cycle",
            Self::Af2Cycle => "AF2-cycle",
            Self::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for CycleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// L∞ residuals of the symmetry tests; `NaN` where a test does not apply.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryResiduals<T> {
    /// Equal-time dependence on `(r + c) mod 2` only.
    pub af: T,
    /// `max(column_period, inter_shift)`.
    pub af2: T,
    /// `n_{r,c}(t)` against `n_{r, c mod 2}(t)`.
    pub column_period: T,
    /// `n_{r+1,c}(t)` against `n_{r,c}(t + T/2)`.
    pub inter_shift: T,
    /// Equal-time `n_{r,c}(t)` against `n_{0,c}(t)`.
    pub onsite_lock: T,
    /// `n_{r,0}(t)` against `n_{r,1}(t + T/2)`.
    pub intra_shift: T,
    /// Tolerance the residuals were compared with.
    pub tolerance: T,
}

#[derive(Clone, Debug)]
pub struct CycleDescriptor<T> {
    pub class: CycleClass,
    pub period: Option<T>,
    /// `(max − min)` peak spacing over the period.
    pub period_spread: Option<T>,
    pub peaks: usize,
    pub reference_site: usize,
    pub amplitudes: Vec<T>,
    pub means: Vec<T>,
    /// `phase_offsets[i][j]` in `[0, 2π)`; `n_j` lags `n_i` by this phase.
    pub phase_offsets: Vec<Vec<T>>,
    pub residuals: Option<SymmetryResiduals<T>>,
    pub t_start: T,
    pub t_end: T,
    pub note: Option<String>,
}

impl<T: Real> CycleDescriptor<T> {
    pub fn max_amplitude(&self) -> T {
        self.amplitudes.iter().copied().fold(T::zero(), T::max)
    }

    pub fn offset(&self, i: usize, j: usize) -> Option<T> {
        self.phase_offsets.get(i).and_then(|r| r.get(j)).copied()
    }
}

struct Window<'a, T> {
    traj: &'a Trajectory<T>,
    k0: usize,
}

impl<T: Real> Window<'_, T> {
    fn len(&self) -> usize {
        self.traj.len() - self.k0
    }

    fn t(&self, k: usize) -> T {
        self.traj.times[self.k0 + k]
    }

    fn n(&self, site: usize, k: usize) -> T {
        self.traj.data[(self.k0 + k) * self.traj.dim + 3 * site]
    }

    fn n_at(&self, site: usize, t: T) -> T {
        self.traj.interp(3 * site, t)
    }

    fn t_end(&self) -> T {
        self.t(self.len() - 1)
    }

    fn equal_residual(&self, i: usize, j: usize) -> T {
        (0..self.len())
            .map(|k| (self.n(i, k) - self.n(j, k)).abs())
            .fold(T::zero(), T::max)
    }

    /// `max_t |n_i(t) − n_j(t + tau)|` over samples with `t + tau` inside the window.
    fn shift_residual(&self, i: usize, j: usize, tau: T) -> T {
        let end = self.t_end();
        (0..self.len())
            .take_while(|&k| self.t(k) + tau <= end)
            .map(|k| (self.n(i, k) - self.n_at(j, self.t(k) + tau)).abs())
            .fold(T::zero(), T::max)
    }
}

/// Vertex abscissa of the parabola through three points.
fn parabola_vertex<T: Real>(t: [T; 3], y: [T; 3]) -> T {
    let (d1, d2) = (t[0] - t[1], t[2] - t[1]);
    let (e1, e2) = (y[0] - y[1], y[2] - y[1]);
    let den = d1 * d2 * (d1 - d2);
    if den == T::zero() {
        return t[1];
    }
    let a = (e1 * d2 - e2 * d1) / den;
    let b = (e2 * d1 * d1 - e1 * d2 * d2) / den;
    if a >= T::zero() {
        return t[1];
    }
    let v = t[1] - b / (lit::<T>(2.0) * a);
    v.max(t[0]).min(t[2])
}

fn peak_times<T: Real>(w: &Window<'_, T>, site: usize, level: T) -> Vec<T> {
    let len = w.len();
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for k in 0..len {
        let v = w.n(site, k);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let thr = lo + level * (hi - lo);
    let mut out = Vec::new();
    let mut k = 0;
    while k < len {
        if w.n(site, k) < thr {
            k += 1;
            continue;
        }
        let start = k;
        let mut best = k;
        while k < len && w.n(site, k) >= thr {
            if w.n(site, k) > w.n(site, best) {
                best = k;
            }
            k += 1;
        }
        // excursions cut by the window edges carry no reliable maximum
        if start == 0 || k == len || best == 0 || best + 1 >= len {
            continue;
        }
        let ts = [w.t(best - 1), w.t(best), w.t(best + 1)];
        let ys = [w.n(site, best - 1), w.n(site, best), w.n(site, best + 1)];
        out.push(parabola_vertex(ts, ys));
    }
    out
}

struct PeriodFit<T> {
    period: T,
    spread: T,
    cycles: usize,
}

/// Mean spacing of every `k`-th maximum for the smallest `k` whose spacings agree.
///
/// Waveforms with several humps above the peak level give `k > 1`.
fn period_from_peaks<T: Real>(peaks: &[T], max_spread: T) -> PeriodFit<T> {
    let mut best: Option<PeriodFit<T>> = None;
    for k in 1..=MAX_PEAKS_PER_PERIOD {
        if peaks.len() < 2 * k + 1 {
            break;
        }
        let gaps: Vec<T> = (0..peaks.len() - k).map(|i| peaks[i + k] - peaks[i]).collect();
        let cycles = (peaks.len() - 1) / k;
        let period = (peaks[cycles * k] - peaks[0]) / T::from_usize(cycles).unwrap();
        let gmin = gaps.iter().copied().fold(T::infinity(), T::min);
        let gmax = gaps.iter().copied().fold(T::neg_infinity(), T::max);
        let fit = PeriodFit {
            period,
            spread: (gmax - gmin) / period,
            cycles,
        };
        if fit.spread < max_spread {
            return fit;
        }
        if best.as_ref().is_none() {
            best = Some(fit);
        }
    }
    best.unwrap()
}

const MAX_PEAKS_PER_PERIOD: usize = 4;

fn phase_offsets<T: Real>(w: &Window<'_, T>, sites: usize, period: T, m: usize, active: &[bool]) -> Vec<Vec<T>> {
    let two_pi = T::TAU();
    let periods = to_f64((w.t_end() - w.t(0)) / period).floor() as usize;
    let n = periods * m;
    let dt = period / T::from_usize(m).unwrap();
    let t0 = w.t(0);
    let series: Vec<Vec<T>> = (0..sites)
        .map(|s| {
            let v: Vec<T> = (0..n).map(|k| w.n_at(s, t0 + dt * T::from_usize(k).unwrap())).collect();
            let mean = v.iter().copied().sum::<T>() / T::from_usize(n.max(1)).unwrap();
            v.into_iter().map(|x| x - mean).collect()
        })
        .collect();
    let mut out = vec![vec![T::zero(); sites]; sites];
    for i in 0..sites {
        for j in i + 1..sites {
            if !(active[i] && active[j]) || n == 0 {
                out[i][j] = T::nan();
                out[j][i] = T::nan();
                continue;
            }
            let corr: Vec<T> = (0..m)
                .map(|l| (0..n).map(|k| series[i][k] * series[j][(k + l) % n]).sum())
                .collect();
            let best = (0..m)
                .max_by(|&a, &b| corr[a].partial_cmp(&corr[b]).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap();
            let (cm, c0, cp) = (corr[(best + m - 1) % m], corr[best], corr[(best + 1) % m]);
            let den = cm - lit::<T>(2.0) * c0 + cp;
            let delta = if den < T::zero() {
                lit::<T>(0.5) * (cm - cp) / den
            } else {
                T::zero()
            };
            let frac = (T::from_usize(best).unwrap() + delta) / T::from_usize(m).unwrap();
            let mut phi = two_pi * frac;
            phi = phi - two_pi * (phi / two_pi).floor();
            if phi >= two_pi {
                phi = phi - two_pi;
            }
            out[i][j] = phi;
            let back = two_pi - phi;
            out[j][i] = if back >= two_pi { back - two_pi } else { back };
        }
    }
    out
}

/// Period, amplitudes and phase offsets of the part of `traj` after the transient.
///
/// The class is only `FixedPoint` or, pending [`classify_cycle`], `Unclassified`.
pub fn detect_cycle<T: Real>(traj: &Trajectory<T>, opts: &CycleOptions<T>) -> Result<CycleDescriptor<T>> {
    if traj.dim % 3 != 0 || traj.dim == 0 {
        return Err(Error::InvalidArgument(format!("trajectory dimension {} is not 3·sites", traj.dim)));
    }
    let sites = traj.dim / 3;
    let k0 = traj.times.partition_point(|&t| t < opts.t_transient);
    if traj.len() < k0 + 3 {
        return Err(Error::TooShort(format!(
            "{} samples after t_transient = {}",
            traj.len().saturating_sub(k0),
            to_f64(opts.t_transient)
        )));
    }
    let w = Window { traj, k0 };
    let (t_start, t_end) = (w.t(0), w.t_end());
    let mut amplitudes = Vec::with_capacity(sites);
    let mut means = Vec::with_capacity(sites);
    for s in 0..sites {
        let (mut lo, mut hi, mut sum) = (T::infinity(), T::neg_infinity(), T::zero());
        for k in 0..w.len() {
            let v = w.n(s, k);
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        amplitudes.push((hi - lo) * lit(0.5));
        means.push(sum / T::from_usize(w.len()).unwrap());
    }
    let mut desc = CycleDescriptor {
        class: CycleClass::Unclassified,
        period: None,
        period_spread: None,
        peaks: 0,
        reference_site: 0,
        amplitudes,
        means,
        phase_offsets: Vec::new(),
        residuals: None,
        t_start,
        t_end,
        note: None,
    };
    if desc.amplitudes.iter().all(|&a| a < opts.eps_osc) {
        desc.class = CycleClass::FixedPoint;
        return Ok(desc);
    }
    let reference = if desc.amplitudes[0] >= opts.eps_osc {
        0
    } else {
        (0..sites)
            .max_by(|&a, &b| desc.amplitudes[a].partial_cmp(&desc.amplitudes[b]).unwrap())
            .unwrap()
    };
    desc.reference_site = reference;
    let peaks = peak_times(&w, reference, opts.peak_level);
    desc.peaks = peaks.len();
    if peaks.len() < 3 {
        return Err(Error::TooShort(format!(
            "{} complete maxima in [{}, {}]",
            peaks.len(),
            to_f64(t_start),
            to_f64(t_end)
        )));
    }
    let fit = period_from_peaks(&peaks, opts.max_spread);
    let period = fit.period;
    desc.period = Some(period);
    desc.period_spread = Some(fit.spread);
    let span = (t_end - t_start) / period;
    if span < T::from_usize(opts.min_periods).unwrap() {
        return Err(Error::TooShort(format!(
            "window holds {:.1} periods of T = {:.4}, need {}",
            to_f64(span),
            to_f64(period),
            opts.min_periods
        )));
    }
    if fit.spread >= opts.max_spread {
        desc.note = Some(format!("peak spacing spread {:.3e} of the period", to_f64(fit.spread)));
        return Ok(desc);
    }
    if T::from_usize(fit.cycles + 3).unwrap() < span {
        desc.note = Some(format!("{} maxima for {:.1} periods", peaks.len(), to_f64(span)));
        return Ok(desc);
    }
    let half = traj.times.partition_point(|&t| t < t_start + (t_end - t_start) * lit(0.5));
    let drift = amplitude_drift(&w, half - k0, sites);
    if drift > opts.max_drift {
        desc.note = Some(format!("amplitude drift {:.3e} between window halves", to_f64(drift)));
        desc.period = Some(period);
        return Ok(desc);
    }
    let active: Vec<bool> = desc.amplitudes.iter().map(|&a| a >= opts.eps_osc).collect();
    desc.phase_offsets = phase_offsets(&w, sites, period, opts.samples_per_period.max(8), &active);
    Ok(desc)
}

/// Largest relative change of a site's half-range between the two halves of the window.
fn amplitude_drift<T: Real>(w: &Window<'_, T>, split: usize, sites: usize) -> T {
    let range = |s: usize, a: usize, b: usize| {
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for k in a..b {
            let v = w.n(s, k);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    };
    let full = (0..sites).map(|s| range(s, 0, w.len())).fold(T::zero(), T::max);
    (0..sites)
        .map(|s| (range(s, 0, split) - range(s, split, w.len())).abs() / full)
        .fold(T::zero(), T::max)
}

/// Symmetry residuals of a detected cycle and the class they imply.
pub fn classify_cycle<T: Real>(
    traj: &Trajectory<T>,
    cell: &UnitCell,
    desc: &mut CycleDescriptor<T>,
    opts: &CycleOptions<T>,
) -> Result<CycleClass> {
    if traj.dim != 3 * cell.sites() {
        return Err(Error::DimensionMismatch {
            expected: 3 * cell.sites(),
            got: traj.dim,
        });
    }
    let period = match (desc.class, desc.period, desc.note.as_ref()) {
        (CycleClass::FixedPoint, ..) => return Ok(CycleClass::FixedPoint),
        (_, Some(p), None) => p,
        _ => return Ok(CycleClass::Unclassified),
    };
    let k0 = traj.times.partition_point(|&t| t < desc.t_start);
    let w = Window { traj, k0 };
    let half_t = period * lit(0.5);
    let (rows, cols) = (cell.rows, cell.cols);
    let nan = T::nan();
    let max_over = |pairs: &mut dyn Iterator<Item = T>| pairs.fold(T::zero(), T::max);

    let af = if cell.sites() < 2 {
        nan
    } else {
        let parity_ref = |p: usize| {
            if p == 0 {
                cell.index(0, 0)
            } else if cols > 1 {
                cell.index(0, 1)
            } else {
                cell.index(1, 0)
            }
        };
        max_over(&mut (0..cell.sites()).map(|i| {
            let (r, c) = cell.row_col(i);
            w.equal_residual(i, parity_ref((r + c) % 2))
        }))
    };
    let column_period = if cols > 2 {
        max_over(&mut (0..cell.sites()).map(|i| {
            let (r, c) = cell.row_col(i);
            w.equal_residual(i, cell.index(r, c % 2))
        }))
    } else {
        T::zero()
    };
    let (inter_shift, onsite_lock) = if rows >= 2 {
        let chain_pairs = if rows == 2 { 1 } else { rows };
        let inter = max_over(&mut (0..chain_pairs).flat_map(|r| {
            let w = &w;
            (0..cols).map(move |c| w.shift_residual(cell.index(r + 1, c), cell.index(r, c), half_t))
        }));
        let lock = max_over(&mut (0..cell.sites()).map(|i| {
            let (_, c) = cell.row_col(i);
            w.equal_residual(i, cell.index(0, c))
        }));
        (inter, lock)
    } else {
        (nan, nan)
    };
    let intra_shift = if cols >= 2 {
        max_over(&mut (0..rows).map(|r| w.shift_residual(cell.index(r, 0), cell.index(r, 1), half_t)))
    } else {
        nan
    };
    let af2 = if rows >= 2 { column_period.max(inter_shift) } else { nan };
    let tol = opts.eps_cyc_rel * desc.max_amplitude();
    // a cycle with all sites in lockstep is neither mode
    let lockstep = cell.sites() >= 2
        && max_over(&mut (1..cell.sites()).map(|i| w.equal_residual(i, 0))) < tol;
    let class = if lockstep {
        desc.note = Some("all sites oscillate in lockstep".into());
        CycleClass::Unclassified
    } else if af < tol {
        CycleClass::AfCycle
    } else if af2 < tol {
        CycleClass::Af2Cycle
    } else {
        CycleClass::Unclassified
    };
    desc.residuals = Some(SymmetryResiduals {
        af,
        af2,
        column_period,
        inter_shift,
        onsite_lock,
        intra_shift,
        tolerance: tol,
    });
    desc.class = class;
    Ok(class)
}

/// [`detect_cycle`] followed by [`classify_cycle`].
pub fn analyse_cycle<T: Real>(traj: &Trajectory<T>, cell: &UnitCell, opts: &CycleOptions<T>) -> Result<CycleDescriptor<T>> {
    let mut desc = detect_cycle(traj, opts)?;
    classify_cycle(traj, cell, &mut desc, opts)?;
    Ok(desc)
}

/// `√(Σ_{k=2..=max_order} |c_k|²) / |c_1|` for the population of `site`,
/// with `c_k` the Fourier coefficients over the last whole periods of `traj`.
pub fn harmonic_distortion<T: Real>(traj: &Trajectory<T>, site: usize, period: T, max_order: usize) -> Result<T> {
    if 3 * site >= traj.dim || !(period > T::zero()) || max_order < 2 {
        return Err(Error::InvalidArgument("harmonic_distortion needs a valid site, period > 0 and order >= 2".into()));
    }
    let (Some(&t0), Some(&t1)) = (traj.times.first(), traj.times.last()) else {
        return Err(Error::TooShort("empty trajectory".into()));
    };
    let periods = to_f64((t1 - t0) / period).floor() as usize;
    if periods == 0 {
        return Err(Error::TooShort("less than one period recorded".into()));
    }
    let m = 64 * max_order;
    let n = periods * m;
    let dt = period / T::from_usize(m).unwrap();
    let start = t1 - period * T::from_usize(periods).unwrap();
    let v: Vec<T> = (0..n).map(|k| traj.interp(3 * site, start + dt * T::from_usize(k).unwrap())).collect();
    let coeff = |order: usize| -> T {
        let w = T::TAU() * T::from_usize(order).unwrap() / T::from_usize(m).unwrap();
        let (mut re, mut im) = (T::zero(), T::zero());
        for (k, &x) in v.iter().enumerate() {
            let a = w * T::from_usize(k).unwrap();
            re += x * a.cos();
            im -= x * a.sin();
        }
        re.hypot(im) / T::from_usize(n).unwrap()
    };
    let fundamental = coeff(1);
    let higher: T = (2..=max_order).map(|k| coeff(k).powi(2)).sum();
    Ok(higher.sqrt() / fundamental)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attractor {
    FixedPoint { class: SolutionClass, stable: bool },
    AfCycle,
    Af2Cycle,
    Unclassified,
}

impl Attractor {
    pub fn label(self) -> String {
        match self {
            Attractor::FixedPoint { class, stable } => {
                format!("fixed-point:{}{}", class.as_str(), if stable { "" } else { ":unstable" })
            }
            Attractor::AfCycle => CycleClass::AfCycle.as_str().into(),
            Attractor::Af2Cycle => CycleClass::Af2Cycle.as_str().into(),
            Attractor::Unclassified => CycleClass::Unclassified.as_str().into(),
        }
    }

    pub fn is_classified(self) -> bool {
        self != Attractor::Unclassified
    }
}

impl fmt::Display for Attractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug)]
pub struct AttractorOptions<T> {
    pub dt: T,
    pub stride: usize,
    /// Analysis window length; integration continues window by window.
    pub window: T,
    /// Give up (unclassified) once the trajectory reaches this time.
    pub t_limit: T,
    pub cycle: CycleOptions<T>,
}

impl<T: Real> Default for AttractorOptions<T> {
    fn default() -> Self {
        Self {
            dt: lit(1e-3),
            stride: 10,
            window: lit(100.0),
            t_limit: lit(2000.0),
            cycle: CycleOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttractorReport<T> {
    pub attractor: Attractor,
    pub descriptor: CycleDescriptor<T>,
    /// Time at which classification succeeded or was abandoned.
    pub t_end: T,
    pub final_state: StateVector<T>,
}

/// Integrates from `seed` window by window until the attractor classifies.
pub fn classify_attractor<T: Real>(
    model: &MeanField<T>,
    seed: &StateVector<T>,
    opts: &AttractorOptions<T>,
) -> Result<AttractorReport<T>> {
    let t_tr = opts.cycle.t_transient;
    let mut state = seed.clone();
    let mut t = T::zero();
    if t_tr > T::zero() {
        let tr = model.integrate_rk4(&state, &Rk4Options::new(t_tr).dt(opts.dt).stride(usize::MAX).record_from(t_tr))?;
        state = StateVector(tr.last_state().unwrap().to_vec());
        t = t_tr;
    }
    let chunk_opts = CycleOptions {
        t_transient: T::zero(),
        ..opts.cycle.clone()
    };
    let mut window = opts.window;
    loop {
        window = window.min(opts.t_limit - t).max(opts.window);
        let chunk = model
            .integrate_rk4(&state, &Rk4Options::new(window).dt(opts.dt).stride(opts.stride))?
            .shifted(t);
        t += window;
        state = StateVector(chunk.last_state().unwrap().to_vec());
        let chunk_opts = CycleOptions {
            t_transient: chunk.times[0],
            ..chunk_opts.clone()
        };
        let outcome = analyse_cycle(&chunk, &model.cell, &chunk_opts);
        let finished = t >= opts.t_limit - opts.dt;
        match outcome {
            Ok(desc) => {
                let attractor = match desc.class {
                    CycleClass::AfCycle => Some(Attractor::AfCycle),
                    CycleClass::Af2Cycle => Some(Attractor::Af2Cycle),
                    CycleClass::FixedPoint => newton_solve(model, &state, &NewtonOptions::default())
                        .ok()
                        .filter(|fp| crate::scalar::max_abs_diff(&fp.state.0, &state.0) < lit(1e-3))
                        .map(|fp| {
                            state = fp.state.clone();
                            Attractor::FixedPoint {
                                class: fp.class,
                                stable: fp.stable,
                            }
                        }),
                    CycleClass::Unclassified => None,
                };
                if let Some(attractor) = attractor {
                    return Ok(AttractorReport {
                        attractor,
                        descriptor: desc,
                        t_end: t,
                        final_state: state,
                    });
                }
                if finished {
                    return Ok(AttractorReport {
                        attractor: Attractor::Unclassified,
                        descriptor: desc,
                        t_end: t,
                        final_state: state,
                    });
                }
            }
            Err(Error::TooShort(msg)) if finished => {
                let mut desc = detect_fallback(&chunk);
                desc.note = Some(msg);
                return Ok(AttractorReport {
                    attractor: Attractor::Unclassified,
                    descriptor: desc,
                    t_end: t,
                    final_state: state,
                });
            }
            // Slow cycles need a longer window to hold enough periods.
            Err(Error::TooShort(_)) => window = window + window,
            Err(e) => return Err(e),
        }
    }
}

fn detect_fallback<T: Real>(traj: &Trajectory<T>) -> CycleDescriptor<T> {
    let sites = traj.dim / 3;
    let mut amplitudes = Vec::new();
    let mut means = Vec::new();
    for s in 0..sites {
        let v = traj.component(3 * s);
        let lo = v.iter().copied().fold(T::infinity(), T::min);
        let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
        amplitudes.push((hi - lo) * lit(0.5));
        means.push(v.iter().copied().sum::<T>() / T::from_usize(v.len().max(1)).unwrap());
    }
    CycleDescriptor {
        class: CycleClass::Unclassified,
        period: None,
        period_spread: None,
        peaks: 0,
        reference_site: 0,
        amplitudes,
        means,
        phase_offsets: Vec::new(),
        residuals: None,
        t_start: traj.times.first().copied().unwrap_or(T::zero()),
        t_end: traj.times.last().copied().unwrap_or(T::zero()),
        note: None,
    }
}

pub const MIN_BASIN_SAMPLES: usize = 20;

#[derive(Clone, Debug)]
pub struct BasinRecord<T> {
    pub index: usize,
    pub seed: StateVector<T>,
    pub attractor: Attractor,
    pub period: Option<T>,
    pub t_end: T,
}

#[derive(Clone, Debug)]
pub struct BasinSample<T> {
    pub rng_seed: u64,
    pub seed_kind: SeedKind,
    pub records: Vec<BasinRecord<T>>,
}

impl<T: Real> BasinSample<T> {
    /// Fraction of samples per attractor label, unclassified included.
    pub fn fractions(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.attractor.label()).or_insert(0.0) += 1.0;
        }
        let n = self.records.len() as f64;
        for v in out.values_mut() {
            *v /= n;
        }
        out
    }

    pub fn fraction(&self, attractor: Attractor) -> f64 {
        self.records.iter().filter(|r| r.attractor == attractor).count() as f64 / self.records.len() as f64
    }

    pub fn unclassified(&self) -> usize {
        self.records.iter().filter(|r| !r.attractor.is_classified()).count()
    }
}

/// Classifies the attractors reached from `n_samples` random seeds of `kind`.
pub fn basin_sample<T: Real>(
    model: &MeanField<T>,
    n_samples: usize,
    rng_seed: u64,
    kind: SeedKind,
    opts: &AttractorOptions<T>,
) -> Result<BasinSample<T>> {
    if n_samples < MIN_BASIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "basin sampling needs at least {MIN_BASIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if !kind.is_random() {
        return Err(Error::InvalidArgument(format!("seed kind '{kind}' is not random")));
    }
    let records = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let seed = seeds::generate(kind, model, rng_seed, k as u64)?;
            let rep = classify_attractor(model, &seed, opts)?;
            Ok(BasinRecord {
                index: k,
                seed,
                attractor: rep.attractor,
                period: rep.descriptor.period,
                t_end: rep.t_end,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BasinSample {
        rng_seed,
        seed_kind: kind,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::IntegratorMeta;
    use std::f64::consts::{PI, TAU};

    fn synthetic(cell: &UnitCell, omega: f64, phases: &[f64], amps: &[f64], t_max: f64, dt: f64) -> Trajectory<f64> {
        let meta = IntegratorMeta {
            method: "synthetic",
            dt: Some(dt),
            tol: None,
            accepted_steps: 0,
            rejected_steps: 0,
            min_step: dt,
            max_step: dt,
            stride: 1,
        };
        let mut tr = Trajectory::new(3 * cell.sites(), meta);
        let steps = (t_max / dt).round() as usize;
        for k in 0..=steps {
            let t = k as f64 * dt;
            let mut s = vec![0.0; 3 * cell.sites()];
            for i in 0..cell.sites() {
                // n_i(t) = 0.5 + a sin(ωt − φ_i): site i lags by φ_i
                s[3 * i] = 0.5 + amps[i] * (omega * t - phases[i]).sin();
            }
            tr.push(t, &s);
        }
        tr
    }

    fn opts() -> CycleOptions<f64> {
        CycleOptions {
            t_transient: 10.0,
            ..CycleOptions::default()
        }
    }

    #[test]
    fn constant_trajectory_is_a_fixed_point() {
        let cell = UnitCell::new(2, 2).unwrap();
        let tr = synthetic(&cell, 1.0, &[0.0; 4], &[0.0; 4], 200.0, 0.05);
        let d = analyse_cycle(&tr, &cell, &opts()).unwrap();
        assert_eq!(d.class, CycleClass::FixedPoint);
        assert!(d.period.is_none());
    }

    #[test]
    fn synthetic_phases_recover_af() {
        let cell = UnitCell::new(2, 2).unwrap();
        let tr = synthetic(&cell, 2.0, &[0.0, PI, PI, 0.0], &[0.1; 4], 200.0, 0.01);
        let d = analyse_cycle(&tr, &cell, &opts()).unwrap();
        assert_eq!(d.class, CycleClass::AfCycle);
        assert!((d.period.unwrap() - PI).abs() < 1e-6);
        assert!((d.offset(0, 1).unwrap() - PI).abs() < 1e-3);
        assert!(d.offset(0, 3).unwrap().abs() < 1e-3 || (d.offset(0, 3).unwrap() - TAU).abs() < 1e-3);
    }

    #[test]
    fn synthetic_phases_recover_af2() {
        let cell = UnitCell::new(2, 2).unwrap();
        // chain 2 half a period behind chain 1, unequal sublattice amplitudes
        let tr = synthetic(&cell, 2.0, &[0.0, 1.0, PI, 1.0 + PI], &[0.1, 0.05, 0.1, 0.05], 200.0, 0.01);
        let d = analyse_cycle(&tr, &cell, &opts()).unwrap();
        assert_eq!(d.class, CycleClass::Af2Cycle);
        assert!((d.offset(0, 2).unwrap() - PI).abs() < 1e-3);
        assert!((d.offset(0, 1).unwrap() - 1.0).abs() < 1e-3);
        let r = d.residuals.unwrap();
        assert!(r.onsite_lock > 0.1);
    }

    #[test]
    fn arbitrary_phases_are_recovered_and_antisymmetric() {
        let cell = UnitCell::new(2, 2).unwrap();
        let phases = [0.3, 2.0, 4.1, 5.9];
        let tr = synthetic(&cell, 1.7, &phases, &[0.1, 0.08, 0.12, 0.05], 300.0, 0.01);
        let d = analyse_cycle(&tr, &cell, &opts()).unwrap();
        assert_eq!(d.class, CycleClass::Unclassified);
        for i in 0..4 {
            for j in 0..4 {
                let want = (phases[j] - phases[i]).rem_euclid(TAU);
                let got = d.offset(i, j).unwrap();
                let err = (got - want).abs().min(TAU - (got - want).abs());
                assert!(err < 2e-3, "{i}{j}: {got} vs {want}");
                let sum = (d.offset(i, j).unwrap() + d.offset(j, i).unwrap()).rem_euclid(TAU);
                assert!(sum.min(TAU - sum) < 1e-12);
            }
        }
    }

    #[test]
    fn short_window_is_rejected() {
        let cell = UnitCell::new(2, 2).unwrap();
        let tr = synthetic(&cell, 0.5, &[0.0, PI, PI, 0.0], &[0.1; 4], 100.0, 0.01);
        assert!(matches!(detect_cycle(&tr, &opts()), Err(Error::TooShort(_))));
    }

    #[test]
    fn irregular_spacing_is_unclassified() {
        let cell = UnitCell::new(1, 2).unwrap();
        let meta = synthetic(&cell, 1.0, &[0.0; 2], &[0.0; 2], 1.0, 0.5).meta;
        let mut tr = Trajectory::new(6, meta);
        for k in 0..=40000 {
            let t = k as f64 * 0.01;
            // slow frequency modulation
            let ph = 2.0 * t + 0.8 * (0.05 * t).sin();
            tr.push(t, &[0.5 + 0.1 * ph.sin(), 0.0, 0.0, 0.5 - 0.1 * ph.sin(), 0.0, 0.0]);
        }
        let d = analyse_cycle(&tr, &cell, &opts()).unwrap();
        assert_eq!(d.class, CycleClass::Unclassified);
        assert!(d.note.is_some());
    }

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let f = |t: f64| -(t - 0.37).powi(2) + 2.0;
        let v = parabola_vertex([0.0, 0.5, 1.2], [f(0.0), f(0.5), f(1.2)]);
        assert!((v - 0.37).abs() < 1e-12);
    }

    #[test]
    fn distortion_of_known_harmonics() {
        let cell = UnitCell::new(1, 1).unwrap();
        let pure = synthetic(&cell, 2.0, &[0.0], &[0.1], 40.0, 0.01);
        assert!(harmonic_distortion(&pure, 0, PI, 6).unwrap() < 1e-4);
        let meta = pure.meta.clone();
        let mut tr = Trajectory::new(3, meta);
        for k in 0..=4000 {
            let t = k as f64 * 0.01;
            tr.push(t, &[0.5 + 0.1 * (2.0 * t).sin() + 0.03 * (4.0 * t + 0.4).cos(), 0.0, 0.0]);
        }
        let d = harmonic_distortion(&tr, 0, PI, 6).unwrap();
        assert!((d - 0.3).abs() < 1e-3, "{d}");
        assert!(harmonic_distortion(&tr, 1, PI, 6).is_err());
    }
}
