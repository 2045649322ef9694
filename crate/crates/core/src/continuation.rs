//! Natural-parameter continuation, bifurcation locators and the phase diagram.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{MeanField, StateVector, VInterFamily};
use crate::error::{Error, Result};
use crate::field::{Family, VectorField};
use crate::linalg::eigenvalues;
use crate::oscillation::{classify_attractor, Attractor, AttractorOptions, CycleClass};
use crate::scalar::{lit, max_abs_diff, to_f64, Real};
use crate::seeds::{self, SeedKind};
use crate::steady::{self, census, leading_complex_pair, newton, spectral_abscissa, ClassCount, NewtonOptions, SolutionClass};

#[derive(Clone, Debug)]
pub struct ContinuationOptions<T> {
    pub step: T,
    pub step_min: T,
    /// Largest accepted L∞ change of the root between consecutive points.
    pub max_jump: T,
    pub newton: NewtonOptions<T>,
}

impl<T: Real> Default for ContinuationOptions<T> {
    fn default() -> Self {
        Self {
            step: lit(0.05),
            step_min: lit(1e-4),
            max_jump: lit(0.1),
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BranchPoint<T> {
    pub param: T,
    pub state: Vec<T>,
    pub residual: T,
    pub eigenvalues: Vec<Complex<T>>,
}

impl<T: Real> BranchPoint<T> {
    pub fn max_real(&self) -> T {
        spectral_abscissa(&self.eigenvalues)
    }

    pub fn leading_pair(&self) -> Option<Complex<T>> {
        leading_complex_pair(&self.eigenvalues)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BranchEnd<T> {
    /// The whole requested range was covered.
    RangeEnd,
    /// Continuation failed between the last point and `failed_at`.
    Terminated { failed_at: T, reason: String },
}

#[derive(Clone, Debug)]
pub struct Branch<T> {
    pub points: Vec<BranchPoint<T>>,
    pub end: BranchEnd<T>,
}

impl<T: Real> Branch<T> {
    pub fn first(&self) -> &BranchPoint<T> {
        &self.points[0]
    }

    pub fn last(&self) -> &BranchPoint<T> {
        self.points.last().unwrap()
    }

    /// Point whose parameter is closest to `p`.
    pub fn nearest(&self, p: T) -> &BranchPoint<T> {
        self.points
            .iter()
            .min_by(|a, b| (a.param - p).abs().partial_cmp(&(b.param - p).abs()).unwrap())
            .unwrap()
    }

    pub fn params(&self) -> Vec<T> {
        self.points.iter().map(|q| q.param).collect()
    }
}

/// Acceptance test applied to every converged root; `false` ends the branch.
pub type Accept<'a, F, T> = &'a (dyn Fn(&F, &[T]) -> bool + Sync);

fn solve_at<T: Real, F: Family<T>>(
    family: &F,
    p: T,
    seed: &[T],
    opts: &ContinuationOptions<T>,
    accept: Accept<'_, F::Field, T>,
) -> std::result::Result<BranchPoint<T>, String> {
    let field = family.at(p).map_err(|e| e.to_string())?;
    let r = newton(&field, seed, &opts.newton).map_err(|e| e.to_string())?;
    if max_abs_diff(&r.state, seed) > opts.max_jump {
        return Err("root jumped".into());
    }
    if !accept(&field, &r.state) {
        return Err("root left the branch".into());
    }
    let eig = eigenvalues(&field.jacobian(&r.state)).map_err(|e| e.to_string())?;
    Ok(BranchPoint {
        param: p,
        state: r.state,
        residual: r.residual,
        eigenvalues: eig,
    })
}

/// Continues a root from `start` towards `end`, halving the step on failure.
pub fn branch_track<T: Real, F: Family<T>>(
    family: &F,
    seed: &[T],
    start: T,
    end: T,
    opts: &ContinuationOptions<T>,
    accept: Accept<'_, F::Field, T>,
) -> Result<Branch<T>> {
    let first_opts = ContinuationOptions {
        max_jump: T::infinity(),
        ..opts.clone()
    };
    let first = solve_at(family, start, seed, &first_opts, accept)
        .map_err(|e| Error::Continuation(format!("no acceptable root at range start {}: {e}", to_f64(start))))?;
    let dir = if end >= start { T::one() } else { -T::one() };
    let mut points = vec![first];
    let mut h = opts.step.abs();
    loop {
        let last = points.last().unwrap();
        let p = last.param;
        if (end - p) * dir <= T::zero() {
            return Ok(Branch {
                points,
                end: BranchEnd::RangeEnd,
            });
        }
        let next = if (end - p).abs() <= h { end } else { p + dir * h };
        match solve_at(family, next, &last.state, opts, accept) {
            Ok(pt) => {
                points.push(pt);
                h = (h * lit(2.0)).min(opts.step.abs());
            }
            Err(reason) => {
                h *= lit(0.5);
                if h < opts.step_min {
                    return Ok(Branch {
                        points,
                        end: BranchEnd::Terminated { failed_at: next, reason },
                    });
                }
            }
        }
    }
}

/// Shrinks `[good, bad]` until narrower than `resolution`; `test` must hold at `good`.
fn bisect<T: Real, S: Clone>(
    mut good: (T, S),
    mut bad: T,
    resolution: T,
    mut test: impl FnMut(T, &S) -> Option<S>,
) -> ((T, S), T) {
    while (bad - good.0).abs() > resolution {
        let mid = (good.0 + bad) * lit(0.5);
        match test(mid, &good.1) {
            Some(s) => good = (mid, s),
            None => bad = mid,
        }
    }
    (good, bad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Hopf,
    Pitchfork,
    Merge,
}

#[derive(Clone, Debug)]
pub struct BifurcationEvent<T> {
    pub kind: EventKind,
    pub location: T,
    pub lo: T,
    pub hi: T,
    /// Critical eigenvalue at the bracket end nearest the crossing.
    pub eigenvalue: Option<Complex<T>>,
    /// `(parameter, distance)` along the branch approaching the event.
    pub distances: Vec<(T, T)>,
    pub note: Option<String>,
}

impl<T: Real> BifurcationEvent<T> {
    pub fn width(&self) -> T {
        (self.hi - self.lo).abs()
    }
}

fn ordered<T: Real>(a: T, b: T) -> (T, T) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn point_at<T: Real, F: Family<T>>(
    family: &F,
    p: T,
    seed: &[T],
    opts: &ContinuationOptions<T>,
    accept: Accept<'_, F::Field, T>,
) -> Option<BranchPoint<T>> {
    solve_at(family, p, seed, opts, accept).ok()
}

fn sign_change_bisect<T: Real, F: Family<T>>(
    family: &F,
    branch: &Branch<T>,
    indicator: &dyn Fn(&BranchPoint<T>) -> Option<T>,
    name: &str,
    resolution: T,
    opts: &ContinuationOptions<T>,
    accept: Accept<'_, F::Field, T>,
) -> Result<(BranchPoint<T>, BranchPoint<T>)> {
    let pair = branch.points.windows(2).find(|w| match (indicator(&w[0]), indicator(&w[1])) {
        (Some(a), Some(b)) => (a > T::zero()) != (b > T::zero()),
        _ => false,
    });
    let Some(w) = pair else {
        return Err(Error::NoSignChange {
            indicator: name.into(),
            lo: to_f64(branch.first().param),
            hi: to_f64(branch.last().param),
        });
    };
    let s0 = indicator(&w[0]).unwrap() > T::zero();
    let mut good = w[0].clone();
    let mut bad = w[1].clone();
    let free = ContinuationOptions {
        max_jump: T::infinity(),
        ..opts.clone()
    };
    while (bad.param - good.param).abs() > resolution {
        let mid = (good.param + bad.param) * lit(0.5);
        let seed = if (mid - good.param).abs() <= (mid - bad.param).abs() {
            &good.state
        } else {
            &bad.state
        };
        let pt = point_at(family, mid, seed, &free, accept)
            .ok_or_else(|| Error::Continuation(format!("{name}: lost the branch at {}", to_f64(mid))))?;
        match indicator(&pt) {
            Some(v) if (v > T::zero()) == s0 => good = pt,
            Some(_) => bad = pt,
            None => return Err(Error::Continuation(format!("{name}: indicator undefined at {}", to_f64(mid)))),
        }
    }
    Ok((good, bad))
}

/// Sign change of the real part of the leading complex pair along `branch`.
pub fn locate_hopf<T: Real, F: Family<T>>(
    family: &F,
    branch: &Branch<T>,
    resolution: T,
    opts: &ContinuationOptions<T>,
    accept: Accept<'_, F::Field, T>,
) -> Result<BifurcationEvent<T>> {
    let ind = |p: &BranchPoint<T>| p.leading_pair().map(|z| z.re);
    let (a, b) = sign_change_bisect(family, branch, &ind, "leading complex pair", resolution, opts, accept)?;
    let za = a.leading_pair().unwrap();
    let zb = b.leading_pair().unwrap();
    let z = if za.re.abs() <= zb.re.abs() { za } else { zb };
    let (lo, hi) = ordered(a.param, b.param);
    let note = (z.im.abs() <= lit(1e-6)).then(|| "crossing eigenvalue is real".to_string());
    Ok(BifurcationEvent {
        kind: EventKind::Hopf,
        location: (lo + hi) * lit(0.5),
        lo,
        hi,
        eigenvalue: Some(z),
        distances: Vec::new(),
        note,
    })
}

/// Largest real eigenvalue among those with zero imaginary part.
pub fn leading_real<T: Real>(eig: &[Complex<T>]) -> Option<T> {
    let scale = eig.iter().map(|z| z.norm()).fold(T::one(), T::max);
    let cut = scale * lit(1e-8);
    eig.iter().filter(|z| z.im.abs() <= cut).map(|z| z.re).reduce(T::max)
}

/// Last parameter at which `branch` can still be continued, refined by bisection.
fn existence_bracket<T: Real, F: Family<T>>(
    family: &F,
    branch: &Branch<T>,
    resolution: T,
    opts: &ContinuationOptions<T>,
    accept: Accept<'_, F::Field, T>,
) -> Result<(BranchPoint<T>, T)> {
    let BranchEnd::Terminated { failed_at, .. } = &branch.end else {
        return Err(Error::Continuation("branch covers the whole range; nothing to locate".into()));
    };
    let last = branch.last().clone();
    let ((_, good), bad) = bisect((last.param, last), *failed_at, resolution, |p, prev: &BranchPoint<T>| {
        point_at(family, p, &prev.state, opts, accept)
    });
    Ok((good, bad))
}

/// Distances from the points of `branch` to the reference root continued along `reference`.
fn distances_to<T: Real, F: Family<T>>(
    family: &F,
    branch: &Branch<T>,
    reference: &Branch<T>,
    opts: &ContinuationOptions<T>,
    accept_ref: Accept<'_, F::Field, T>,
) -> Vec<(T, T)> {
    let free = ContinuationOptions {
        max_jump: T::infinity(),
        ..opts.clone()
    };
    branch
        .points
        .iter()
        .filter_map(|q| {
            let near = reference.nearest(q.param);
            let r = point_at(family, q.param, &near.state, &free, accept_ref)?;
            Some((q.param, max_abs_diff(&q.state, &r.state)))
        })
        .collect()
}

/// Collapse of the asymmetric branch onto the symmetric one.
///
/// Both the end of the asymmetric branch and the real-eigenvalue stability
/// flip of the symmetric branch are bisected; they must agree within `agree_tol`.
#[allow(clippy::too_many_arguments)]
pub fn locate_pitchfork<T: Real, F: Family<T>>(
    family: &F,
    symmetric: &Branch<T>,
    asymmetric: &Branch<T>,
    resolution: T,
    agree_tol: T,
    opts: &ContinuationOptions<T>,
    accept_sym: Accept<'_, F::Field, T>,
    accept_asym: Accept<'_, F::Field, T>,
) -> Result<BifurcationEvent<T>> {
    let (good, bad) = existence_bracket(family, asymmetric, resolution, opts, accept_asym)?;
    let (elo, ehi) = ordered(good.param, bad);
    let ind = |p: &BranchPoint<T>| leading_real(&p.eigenvalues);
    // only sign changes near the existence bracket belong to this event
    let window: Vec<BranchPoint<T>> = symmetric
        .points
        .iter()
        .filter(|q| (q.param - (elo + ehi) * lit(0.5)).abs() <= opts.step.abs() * lit(3.0) + agree_tol)
        .cloned()
        .collect();
    let local = Branch {
        points: window,
        end: BranchEnd::RangeEnd,
    };
    let (a, b) = sign_change_bisect(family, &local, &ind, "leading real eigenvalue", resolution, opts, accept_sym)?;
    let (slo, shi) = ordered(a.param, b.param);
    let e_mid = (elo + ehi) * lit(0.5);
    let s_mid = (slo + shi) * lit(0.5);
    if (e_mid - s_mid).abs() > agree_tol {
        return Err(Error::IndicatorsDisagree {
            exist_lo: to_f64(elo),
            exist_hi: to_f64(ehi),
            stab_lo: to_f64(slo),
            stab_hi: to_f64(shi),
        });
    }
    let mut tail = asymmetric.clone();
    if good.param != tail.last().param {
        tail.points.push(good);
    }
    let distances = distances_to(family, &tail, symmetric, opts, accept_sym);
    let lo = elo.min(slo);
    let hi = ehi.max(shi);
    let z = [&a, &b]
        .iter()
        .filter_map(|p| {
            let r = leading_real(&p.eigenvalues)?;
            Some(Complex::new(r, T::zero()))
        })
        .min_by(|x, y| x.re.abs().partial_cmp(&y.re.abs()).unwrap());
    Ok(BifurcationEvent {
        kind: EventKind::Pitchfork,
        location: (lo + hi) * lit(0.5),
        lo,
        hi,
        eigenvalue: z,
        distances,
        note: Some(format!(
            "existence bracket [{:.6}, {:.6}], stability bracket [{:.6}, {:.6}]",
            to_f64(elo),
            to_f64(ehi),
            to_f64(slo),
            to_f64(shi)
        )),
    })
}

/// End of `pair`, where its roots fall onto the `reference` root.
pub fn locate_merge<T: Real, F: Family<T>>(
    family: &F,
    pair: &Branch<T>,
    reference: &Branch<T>,
    resolution: T,
    opts: &ContinuationOptions<T>,
    accept_pair: Accept<'_, F::Field, T>,
    accept_ref: Accept<'_, F::Field, T>,
) -> Result<BifurcationEvent<T>> {
    let (good, bad) = existence_bracket(family, pair, resolution, opts, accept_pair)?;
    let (lo, hi) = ordered(good.param, bad);
    let mut tail = pair.clone();
    if good.param != tail.last().param {
        tail.points.push(good);
    }
    let distances = distances_to(family, &tail, reference, opts, accept_ref);
    Ok(BifurcationEvent {
        kind: EventKind::Merge,
        location: (lo + hi) * lit(0.5),
        lo,
        hi,
        eigenvalue: None,
        distances,
        note: None,
    })
}

fn class_filter<T: Real>(class: SolutionClass) -> impl Fn(&MeanField<T>, &[T]) -> bool + Sync {
    move |m: &MeanField<T>, s: &[T]| {
        steady::classify_populations(&m.cell, &crate::dynamics::populations(s), lit(steady::EPS_EQ)) == class
    }
}

/// Continues the root of `class` nearest `seed` in `V_i`.
pub fn track_class<T: Real>(
    family: &VInterFamily<T>,
    class: SolutionClass,
    seed: &StateVector<T>,
    start: T,
    end: T,
    opts: &ContinuationOptions<T>,
) -> Result<Branch<T>> {
    let accept = class_filter::<T>(class);
    branch_track(family, &seed.0, start, end, opts, &accept)
}

#[derive(Clone, Debug)]
pub struct EventOptions<T> {
    pub v_start: T,
    /// Upper end of the sweep; `None` means `V_i = V`.
    pub v_end: Option<T>,
    /// Where the non-uniform branch is seeded from the census.
    pub nonuniform_seed_v: T,
    pub resolution: T,
    pub agree_tol: T,
    pub n_seeds: usize,
    pub rng_seed: u64,
    pub continuation: ContinuationOptions<T>,
}

impl<T: Real> Default for EventOptions<T> {
    fn default() -> Self {
        Self {
            v_start: lit(0.5),
            v_end: None,
            nonuniform_seed_v: lit(1.0),
            resolution: lit(1e-4),
            agree_tol: lit(5e-3),
            n_seeds: 100,
            rng_seed: 0,
            continuation: ContinuationOptions::default(),
        }
    }
}

#[derive(Debug)]
pub struct TransitionEvents<T> {
    pub af2_branch: Branch<T>,
    pub uniform_branch: Branch<T>,
    pub nonuniform_branch: Option<Branch<T>>,
    pub hopf: Result<BifurcationEvent<T>>,
    pub pitchfork: Result<BifurcationEvent<T>>,
    pub merge: Result<BifurcationEvent<T>>,
}

/// Tracks the AF₂, uniform and non-uniform branches and locates the three transitions.
pub fn locate_transitions<T: Real>(family: &VInterFamily<T>, opts: &EventOptions<T>) -> Result<TransitionEvents<T>> {
    let v_end = opts.v_end.unwrap_or(family.base.v_intra);
    let c = &opts.continuation;
    let start_model = family.at(opts.v_start)?;
    let af2_seed = steady::af2_root(&start_model)
        .ok_or_else(|| Error::Continuation(format!("no AF2 root at V_i = {}", to_f64(opts.v_start))))?;
    let uni_seed = steady::uniform_root(&start_model)
        .ok_or_else(|| Error::Continuation(format!("no uniform root at V_i = {}", to_f64(opts.v_start))))?;
    let af2_branch = track_class(family, SolutionClass::Af2, &af2_seed.state, opts.v_start, v_end, c)?;
    let uniform_branch = track_class(family, SolutionClass::Uniform, &uni_seed.state, opts.v_start, v_end, c)?;

    let acc_af2 = class_filter::<T>(SolutionClass::Af2);
    let acc_uni = class_filter::<T>(SolutionClass::Uniform);
    let acc_nu = class_filter::<T>(SolutionClass::NonUniform);

    let hopf = locate_hopf(family, &af2_branch, opts.resolution, c, &acc_af2);

    let nu_model = family.at(opts.nonuniform_seed_v)?;
    let nu_census = census(&nu_model, opts.n_seeds.max(steady::MIN_CENSUS_SEEDS), opts.rng_seed)?;
    let nonuniform_branch = match nu_census.of_class(SolutionClass::NonUniform).next() {
        Some(root) => Some(track_class(
            family,
            SolutionClass::NonUniform,
            &root.state,
            opts.nonuniform_seed_v,
            v_end,
            c,
        )?),
        None => None,
    };
    let pitchfork = match &nonuniform_branch {
        Some(nu) => locate_pitchfork(family, &af2_branch, nu, opts.resolution, opts.agree_tol, c, &acc_af2, &acc_nu),
        None => Err(Error::Continuation(format!(
            "no non-uniform root at V_i = {}",
            to_f64(opts.nonuniform_seed_v)
        ))),
    };
    let merge = locate_merge(family, &af2_branch, &uniform_branch, opts.resolution, c, &acc_af2, &acc_uni);
    Ok(TransitionEvents {
        af2_branch,
        uniform_branch,
        nonuniform_branch,
        hopf,
        pitchfork,
        merge,
    })
}

#[derive(Clone, Debug)]
pub struct AmplitudeLaw<T> {
    pub distances: Vec<T>,
    pub amplitudes: Vec<T>,
    pub classes: Vec<CycleClass>,
    /// Least-squares slope of `log amplitude` against `log distance`.
    pub exponent: T,
}

/// Cycle amplitude at `V_c − μ` for each `μ`, followed downwards from the largest.
pub fn hopf_amplitude_law<T: Real>(
    family: &VInterFamily<T>,
    critical: T,
    mus: &[T],
    opts: &AttractorOptions<T>,
) -> Result<AmplitudeLaw<T>> {
    let mut order: Vec<T> = mus.to_vec();
    order.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut state: Option<StateVector<T>> = None;
    let mut amplitudes = Vec::new();
    let mut classes = Vec::new();
    for &mu in &order {
        let model = family.at(critical - mu)?;
        let seed = match &state {
            Some(s) => s.clone(),
            None => seeds::generate(SeedKind::Af2Biased, &model, 0, 0)?,
        };
        // relaxation onto a weakly attracting cycle slows down like 1/μ
        let settle = (lit::<T>(5.0) / mu).max(opts.cycle.t_transient);
        let local = AttractorOptions {
            cycle: crate::oscillation::CycleOptions {
                t_transient: settle,
                ..opts.cycle.clone()
            },
            t_limit: settle + opts.t_limit,
            ..opts.clone()
        };
        let rep = classify_attractor(&model, &seed, &local)?;
        amplitudes.push(rep.descriptor.max_amplitude());
        classes.push(match rep.attractor {
            Attractor::AfCycle => CycleClass::AfCycle,
            Attractor::Af2Cycle => CycleClass::Af2Cycle,
            Attractor::FixedPoint { .. } => CycleClass::FixedPoint,
            Attractor::Unclassified => CycleClass::Unclassified,
        });
        state = Some(rep.final_state);
    }
    let xs: Vec<f64> = order.iter().map(|&m| to_f64(m).ln()).collect();
    let ys: Vec<f64> = amplitudes.iter().map(|&a| to_f64(a).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(AmplitudeLaw {
        distances: order,
        amplitudes,
        classes,
        exponent: lit(sxy / sxx),
    })
}

#[derive(Clone, Debug)]
pub struct PhasePoint<T> {
    pub v_inter: T,
    pub phase: Option<u8>,
    pub af_attractor: Attractor,
    pub af2_attractor: Attractor,
    pub counts: Vec<ClassCount>,
}

impl<T: Real> PhasePoint<T> {
    /// Needs manual review: some attractor is unclassified or no label applies.
    pub fn flagged(&self) -> bool {
        self.phase.is_none() || !self.af_attractor.is_classified() || !self.af2_attractor.is_classified()
    }
}

/// Phase from the attractor of the AF₂-biased seed.
pub fn phase_label<T: Real>(v_inter: T, af2_attractor: Attractor) -> Option<u8> {
    if v_inter == T::zero() {
        return Some(0);
    }
    match af2_attractor {
        Attractor::Af2Cycle => Some(1),
        Attractor::FixedPoint {
            class: SolutionClass::Af2,
            stable: true,
        } => Some(2),
        Attractor::AfCycle => Some(3),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub struct PhaseDiagramOptions<T> {
    pub n_seeds: usize,
    pub rng_seed: u64,
    pub attractor: AttractorOptions<T>,
}

impl<T: Real> Default for PhaseDiagramOptions<T> {
    fn default() -> Self {
        Self {
            n_seeds: 100,
            rng_seed: 0,
            attractor: AttractorOptions::default(),
        }
    }
}

/// `{0.05, 0.10, …, 5.00}`.
pub fn default_grid<T: Real>() -> Vec<T> {
    (1..=100).map(|k| lit(0.05 * k as f64)).collect()
}

pub fn phase_point<T: Real>(family: &VInterFamily<T>, v: T, opts: &PhaseDiagramOptions<T>) -> Result<PhasePoint<T>> {
    let model = family.at(v)?;
    let counts = census(&model, opts.n_seeds, opts.rng_seed)?.counts();
    let af_seed = seeds::generate(SeedKind::AfBiased, &model, opts.rng_seed, 0)?;
    let af2_seed = seeds::generate(SeedKind::Af2Biased, &model, opts.rng_seed, 0)?;
    let af = classify_attractor(&model, &af_seed, &opts.attractor)?.attractor;
    let af2 = classify_attractor(&model, &af2_seed, &opts.attractor)?.attractor;
    Ok(PhasePoint {
        v_inter: v,
        phase: phase_label(v, af2),
        af_attractor: af,
        af2_attractor: af2,
        counts,
    })
}

/// Phase point for every grid value, computed concurrently and returned in grid order.
pub fn phase_diagram<T: Real>(family: &VInterFamily<T>, grid: &[T], opts: &PhaseDiagramOptions<T>) -> Result<Vec<PhasePoint<T>>> {
    let v_max = family.base.v_intra;
    if let Some(&bad) = grid.iter().find(|&&v| v < T::zero() || v > v_max) {
        return Err(Error::InvalidArgument(format!(
            "grid value {} outside [0, {}]",
            to_f64(bad),
            to_f64(v_max)
        )));
    }
    grid.par_iter().map(|&v| phase_point(family, v, opts)).collect()
}

/// Grid values after which the phase label changes.
pub fn label_changes<T: Real>(points: &[PhasePoint<T>]) -> Vec<(T, T)> {
    points
        .windows(2)
        .filter(|w| w[0].phase != w[1].phase)
        .map(|w| (w[0].v_inter, w[1].v_inter))
        .collect()
}
