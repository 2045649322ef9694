//! Fixed-step RK4 and step-doubling adaptive RK4.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::lattice::{ModelParams, UnitCell};
use crate::scalar::{lit, max_abs_diff, to_f64, Real};

/// Default cap on recorded samples per run.
pub const MAX_SAMPLES: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegratorMeta {
    pub method: &'static str,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub min_step: f64,
    pub max_step: f64,
    pub stride: usize,
}

/// Recorded time series; states are stored flat, `dim` values per sample.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub dim: usize,
    pub times: Vec<T>,
    pub data: Vec<T>,
    pub meta: IntegratorMeta,
    pub params: Option<ModelParams<T>>,
    pub cell: Option<UnitCell>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(dim: usize, meta: IntegratorMeta) -> Self {
        Self {
            dim,
            times: Vec::new(),
            data: Vec::new(),
            meta,
            params: None,
            cell: None,
        }
    }

    pub fn with_provenance(mut self, params: ModelParams<T>, cell: UnitCell) -> Self {
        self.params = Some(params);
        self.cell = Some(cell);
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: T, state: &[T]) {
        debug_assert_eq!(state.len(), self.dim);
        self.times.push(t);
        self.data.extend_from_slice(state);
    }

    pub fn state(&self, k: usize) -> &[T] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last_state(&self) -> Option<&[T]> {
        if self.is_empty() {
            None
        } else {
            Some(self.state(self.len() - 1))
        }
    }

    /// Time series of one component.
    pub fn component(&self, c: usize) -> Vec<T> {
        (0..self.len()).map(|k| self.data[k * self.dim + c]).collect()
    }

    /// Linear interpolation of component `c` at time `t` (clamped to the recorded range).
    pub fn interp(&self, c: usize, t: T) -> T {
        let n = self.len();
        if n == 0 {
            return T::nan();
        }
        if t <= self.times[0] {
            return self.data[c];
        }
        if t >= self.times[n - 1] {
            return self.data[(n - 1) * self.dim + c];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (a, b) = (self.data[k * self.dim + c], self.data[(k + 1) * self.dim + c]);
        a + (b - a) * (t - t0) / (t1 - t0)
    }

    /// Samples with `t >= t_from`.
    pub fn tail(&self, t_from: T) -> Self {
        let k0 = self.times.partition_point(|&s| s < t_from);
        Self {
            dim: self.dim,
            times: self.times[k0..].to_vec(),
            data: self.data[k0 * self.dim..].to_vec(),
            meta: self.meta.clone(),
            params: self.params.clone(),
            cell: self.cell.clone(),
        }
    }

    /// Copy with every time shifted by `dt`.
    pub fn shifted(&self, dt: T) -> Self {
        let mut out = self.clone();
        for t in &mut out.times {
            *t += dt;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Rk4Options<T> {
    pub dt: T,
    pub t_max: T,
    /// Record every `stride`-th step; `None` picks the smallest stride keeping ≤ [`MAX_SAMPLES`].
    pub stride: Option<usize>,
    /// Skip recording before this time (the final state is always kept).
    pub record_from: T,
}

impl<T: Real> Rk4Options<T> {
    pub fn new(t_max: T) -> Self {
        Self {
            dt: lit(1e-3),
            t_max,
            stride: None,
            record_from: T::zero(),
        }
    }

    pub fn dt(mut self, dt: T) -> Self {
        self.dt = dt;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = Some(stride);
        self
    }

    pub fn record_from(mut self, t: T) -> Self {
        self.record_from = t;
        self
    }
}

struct Rk4Work<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Rk4Work<T> {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![T::zero(); n],
            k2: vec![T::zero(); n],
            k3: vec![T::zero(); n],
            k4: vec![T::zero(); n],
            tmp: vec![T::zero(); n],
        }
    }

    fn step<F: VectorField<T> + ?Sized>(&mut self, f: &F, y: &[T], h: T, out: &mut [T]) {
        let half: T = lit(0.5);
        let sixth: T = lit(1.0 / 6.0);
        let two: T = lit(2.0);
        f.eval(y, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half * h * self.k1[i];
        }
        f.eval(&self.tmp, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + half * h * self.k2[i];
        }
        f.eval(&self.tmp, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f.eval(&self.tmp, &mut self.k4);
        for i in 0..y.len() {
            out[i] = y[i] + sixth * h * (self.k1[i] + two * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

fn non_finite<T: Real>(t: T, last: &[T]) -> Error {
    Error::NonFinite {
        t: to_f64(t),
        last_state: last.iter().map(|&x| to_f64(x)).collect(),
        context: String::new(),
    }
}

/// Classical RK4 with fixed step; the last step is shortened to land on `t_max`.
pub fn integrate_rk4<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    state0: &[T],
    opts: &Rk4Options<T>,
) -> Result<Trajectory<T>> {
    let n = field.dim();
    if state0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state0.len(),
        });
    }
    if !(opts.dt > T::zero()) || !(opts.t_max > T::zero()) {
        return Err(Error::InvalidArgument("dt and t_max must be positive".into()));
    }
    if state0.iter().any(|x| !x.is_finite()) {
        return Err(non_finite(T::zero(), state0));
    }
    let ratio = to_f64(opts.t_max / opts.dt);
    let steps = (ratio - 1e-9).ceil().max(1.0) as usize;
    let record_steps = {
        let from = to_f64(opts.record_from / opts.dt).max(0.0) as usize;
        steps.saturating_sub(from).max(1)
    };
    let stride = opts
        .stride
        .unwrap_or_else(|| record_steps.div_ceil(MAX_SAMPLES))
        .max(1);
    let mut traj = Trajectory::new(
        n,
        IntegratorMeta {
            method: "rk4",
            dt: Some(to_f64(opts.dt)),
            tol: None,
            accepted_steps: steps,
            rejected_steps: 0,
            min_step: to_f64(opts.dt),
            max_step: to_f64(opts.dt),
            stride,
        },
    );
    let mut y = state0.to_vec();
    let mut next = vec![T::zero(); n];
    let mut work = Rk4Work::new(n);
    if opts.record_from <= T::zero() {
        traj.push(T::zero(), &y);
    }
    let mut t = T::zero();
    let mut recorded = 0usize;
    for k in 1..=steps {
        let h = if k == steps { opts.t_max - t } else { opts.dt };
        work.step(field, &y, h, &mut next);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(non_finite(t, &y));
        }
        std::mem::swap(&mut y, &mut next);
        t = if k == steps {
            opts.t_max
        } else {
            opts.dt * T::from_usize(k).unwrap()
        };
        if t >= opts.record_from {
            recorded += 1;
            if recorded % stride == 0 || k == steps {
                traj.push(t, &y);
            }
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug)]
pub struct AdaptiveOptions<T> {
    pub t_max: T,
    pub tol: T,
    pub dt_init: T,
    pub dt_min: T,
    pub dt_max: T,
    pub stride: usize,
    /// When set, steps are clipped so samples land exactly on multiples of this spacing.
    pub sample_every: Option<T>,
    pub record_from: T,
}

impl<T: Real> AdaptiveOptions<T> {
    pub fn new(t_max: T, tol: T) -> Self {
        Self {
            t_max,
            tol,
            dt_init: lit(1e-3),
            dt_min: lit(1e-10),
            dt_max: lit(0.1),
            stride: 1,
            sample_every: None,
            record_from: T::zero(),
        }
    }

    pub fn sample_every(mut self, dt: T) -> Self {
        self.sample_every = Some(dt);
        self
    }
}

/// Step-doubling RK4: a full step is compared with two half steps and the
/// step is accepted when the max-norm difference is below `tol`.
pub fn integrate_adaptive<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    state0: &[T],
    opts: &AdaptiveOptions<T>,
) -> Result<Trajectory<T>> {
    let n = field.dim();
    if state0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state0.len(),
        });
    }
    if !(opts.tol > T::zero()) || !(opts.t_max > T::zero()) {
        return Err(Error::InvalidArgument("tol and t_max must be positive".into()));
    }
    if state0.iter().any(|x| !x.is_finite()) {
        return Err(non_finite(T::zero(), state0));
    }
    let half: T = lit(0.5);
    let safety: T = lit(0.9);
    let fifth: T = lit(0.2);
    let mut meta = IntegratorMeta {
        method: "rk4-step-doubling",
        dt: None,
        tol: Some(to_f64(opts.tol)),
        accepted_steps: 0,
        rejected_steps: 0,
        min_step: f64::INFINITY,
        max_step: 0.0,
        stride: opts.stride.max(1),
    };
    let mut traj = Trajectory::new(n, meta.clone());
    let mut y = state0.to_vec();
    let mut full = vec![T::zero(); n];
    let mut mid = vec![T::zero(); n];
    let mut two_half = vec![T::zero(); n];
    let mut work = Rk4Work::new(n);
    let mut t = T::zero();
    let mut h = opts.dt_init.min(opts.dt_max);
    let mut next_sample = opts.sample_every;
    if opts.record_from <= T::zero() {
        traj.push(t, &y);
    }
    let eps = opts.t_max * lit(1e-14);
    while t < opts.t_max - eps {
        let mut target = opts.t_max;
        if let Some(ts) = next_sample {
            target = target.min(ts);
        }
        let clipped = h >= target - t;
        let step = if clipped { target - t } else { h };
        if step < opts.dt_min {
            if clipped && step > T::zero() {
                // tiny remainder to an output time: take it without control
            } else {
                return Err(Error::StepUnderflow {
                    t: to_f64(t),
                    step: to_f64(step),
                    min: to_f64(opts.dt_min),
                });
            }
        }
        work.step(field, &y, step, &mut full);
        work.step(field, &y, half * step, &mut mid);
        work.step(field, &mid, half * step, &mut two_half);
        let err = max_abs_diff(&full, &two_half);
        if !err.is_finite() || two_half.iter().any(|x| !x.is_finite()) {
            if step <= opts.dt_min {
                return Err(non_finite(t, &y));
            }
            h = step * lit(0.25);
            meta.rejected_steps += 1;
            continue;
        }
        if err <= opts.tol || step < opts.dt_min {
            t = if clipped { target } else { t + step };
            std::mem::swap(&mut y, &mut two_half);
            meta.accepted_steps += 1;
            meta.min_step = meta.min_step.min(to_f64(step));
            meta.max_step = meta.max_step.max(to_f64(step));
            let on_sample = clipped && next_sample.is_some_and(|ts| target == ts);
            let done = t >= opts.t_max - eps;
            if t >= opts.record_from {
                let record = match opts.sample_every {
                    Some(_) => on_sample || done,
                    None => meta.accepted_steps % meta.stride == 0 || done,
                };
                if record {
                    traj.push(t, &y);
                }
            }
            if on_sample {
                next_sample = opts.sample_every.map(|d| t + d);
            }
        } else {
            meta.rejected_steps += 1;
        }
        let factor = if err == T::zero() {
            lit(4.0)
        } else {
            (safety * (opts.tol / err).powf(fifth)).max(lit(0.1)).min(lit(4.0))
        };
        // a clipped step says nothing about the natural step size unless it failed
        if !(clipped && err <= opts.tol) {
            h = (step * factor).min(opts.dt_max);
        }
        if h < opts.dt_min {
            return Err(Error::StepUnderflow {
                t: to_f64(t),
                step: to_f64(h),
                min: to_f64(opts.dt_min),
            });
        }
    }
    traj.meta = meta;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use approx::assert_relative_eq;

    fn decay() -> FnField<impl Fn(&[f64], &mut [f64]) + Sync> {
        FnField::new(1, |s: &[f64], o: &mut [f64]| o[0] = -s[0])
    }

    #[test]
    fn rk4_hits_t_max_and_records_endpoints() {
        let tr = integrate_rk4(&decay(), &[1.0], &Rk4Options::new(1.0).dt(0.3)).unwrap();
        assert_eq!(tr.times.first(), Some(&0.0));
        assert_eq!(tr.times.last(), Some(&1.0));
        assert_eq!(tr.len(), 5);
    }

    #[test]
    fn rk4_stride_and_record_from() {
        let tr = integrate_rk4(&decay(), &[1.0], &Rk4Options::new(1.0).dt(0.01).stride(10).record_from(0.5))
            .unwrap();
        assert!(tr.times[0] >= 0.5);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert!(tr.len() <= 6);
    }

    #[test]
    fn rk4_reports_blow_up() {
        let f = FnField::new(1, |s: &[f64], o: &mut [f64]| o[0] = s[0] * s[0]);
        let err = integrate_rk4(&f, &[1.0], &Rk4Options::new(5.0).dt(0.01)).unwrap_err();
        match err {
            Error::NonFinite { last_state, .. } => assert!(last_state[0].is_finite()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rk4_rejects_bad_step() {
        assert!(integrate_rk4(&decay(), &[1.0], &Rk4Options::new(1.0).dt(0.0)).is_err());
        assert!(integrate_rk4(&decay(), &[1.0, 2.0], &Rk4Options::new(1.0)).is_err());
    }

    #[test]
    fn adaptive_matches_closed_form_decay() {
        let tr = integrate_adaptive(&decay(), &[1.0], &AdaptiveOptions::new(1.0, 1e-10)).unwrap();
        assert_relative_eq!(tr.times.last().copied().unwrap(), 1.0, epsilon = 1e-13);
        assert!((tr.last_state().unwrap()[0] - (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn adaptive_step_count_monotone_in_tol() {
        let mut prev = 0;
        for k in 0..8 {
            let tol = 1e-6 / 2f64.powi(k);
            let tr = integrate_adaptive(&decay(), &[1.0], &AdaptiveOptions::new(5.0, tol)).unwrap();
            assert!(tr.meta.accepted_steps >= prev, "tol {tol}");
            prev = tr.meta.accepted_steps;
        }
    }

    #[test]
    fn adaptive_samples_on_grid() {
        let tr = integrate_adaptive(&decay(), &[1.0], &AdaptiveOptions::new(1.0, 1e-10).sample_every(0.25))
            .unwrap();
        let expect = [0.0, 0.25, 0.5, 0.75, 1.0];
        assert_eq!(tr.len(), expect.len());
        for (t, e) in tr.times.iter().zip(expect) {
            assert_relative_eq!(*t, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn adaptive_underflow_detected() {
        let f = FnField::new(1, |s: &[f64], o: &mut [f64]| o[0] = s[0] * s[0]);
        let mut opts = AdaptiveOptions::new(5.0, 1e-10);
        opts.dt_min = 1e-6;
        assert!(integrate_adaptive(&f, &[1.0], &opts).is_err());
    }

    #[test]
    fn interpolation_is_linear_between_samples() {
        let tr = integrate_rk4(&decay(), &[1.0], &Rk4Options::new(1.0).dt(0.5)).unwrap();
        let mid = tr.interp(0, 0.25);
        assert_relative_eq!(mid, 0.5 * (tr.data[0] + tr.data[1]), epsilon = 1e-15);
    }
}
