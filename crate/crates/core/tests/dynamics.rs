use proptest::prelude::*;
use rydsync::dynamics::{eom_rhs, MeanField, StateVector};
use rydsync::field::{fd_jacobian, VectorField};
use rydsync::integrate::{AdaptiveOptions, Rk4Options};
use rydsync::lattice::{DiagCoupling, HighOrderForm, ModelParams};
use rydsync::scalar::max_abs_diff;
use rydsync::seeds::{generate, random_bloch, stream_rng, SeedKind};

fn model(vi: f64, rows: usize, cols: usize) -> MeanField<f64> {
    MeanField::new(ModelParams::paper_default().with_v_inter(vi), rows, cols).unwrap()
}

/// Ω = 0 decouples `n`; the coherence then rotates with the integrated detuning.
fn undriven_closed_form(m: &MeanField<f64>, s0: &StateVector<f64>, t: f64) -> Vec<f64> {
    let g = m.params.gamma;
    let decay = (-g * t).exp();
    let integral = (1.0 - decay) / g;
    let mut out = vec![0.0; s0.0.len()];
    for i in 0..m.sites() {
        let shift: f64 = m.table.row(i).iter().zip(s0.populations()).map(|(w, n)| w * n).sum();
        let theta = m.params.delta * t - shift * integral;
        let (x0, y0) = (s0.x(i), s0.y(i));
        let amp = (-0.5 * g * t).exp();
        // z = x + iy evolves as z0·e^{−γt/2}·e^{−iθ}
        out[3 * i] = s0.n(i) * decay;
        out[3 * i + 1] = amp * (x0 * theta.cos() + y0 * theta.sin());
        out[3 * i + 2] = amp * (y0 * theta.cos() - x0 * theta.sin());
    }
    out
}

#[test]
fn rk4_converges_at_fourth_order_on_undriven_oracle() {
    let mut p = ModelParams::paper_default();
    p.omega = 0.0;
    let m = MeanField::new(p, 2, 2).unwrap();
    let s0 = StateVector::from_sites(&[(0.4, 0.2, -0.1), (0.1, -0.3, 0.2), (0.3, 0.1, 0.1), (0.2, 0.0, -0.25)]);
    let t = 5.0;
    let exact = undriven_closed_form(&m, &s0, t);
    let err = |dt: f64| {
        let tr = m.integrate_rk4(&s0, &Rk4Options::new(t).dt(dt).stride(usize::MAX)).unwrap();
        max_abs_diff(tr.last_state().unwrap(), &exact)
    };
    let (e1, e2) = (err(0.04), err(0.02));
    assert!(e1 / e2 >= 12.0, "ratio {}", e1 / e2);
    assert!(err(1e-3) < 1e-10);
}

#[test]
fn adaptive_agrees_with_fixed_step_at_strong_coupling() {
    let m = model(5.0, 2, 2);
    let s0 = generate(SeedKind::AfBiased, &m, 0, 0).unwrap();
    let fixed = m.integrate_rk4(&s0, &Rk4Options::new(50.0).dt(1e-3).stride(1000)).unwrap();
    let adaptive = m
        .integrate_adaptive(&s0, &AdaptiveOptions::new(50.0, 1e-10).sample_every(1.0))
        .unwrap();
    assert_eq!(fixed.len(), adaptive.len());
    for k in 0..fixed.len() {
        assert!((fixed.times[k] - adaptive.times[k]).abs() < 1e-9);
        assert!(max_abs_diff(fixed.state(k), adaptive.state(k)) < 1e-5, "sample {k}");
    }
}

#[test]
fn adaptive_reports_step_statistics() {
    let m = model(1.0, 2, 2);
    let s0 = generate(SeedKind::AfBiased, &m, 0, 0).unwrap();
    let tr = m.integrate_adaptive(&s0, &AdaptiveOptions::new(20.0, 1e-8)).unwrap();
    assert!(tr.meta.accepted_steps > 0);
    assert!(tr.meta.min_step > 0.0 && tr.meta.min_step <= tr.meta.max_step);
    assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
}

fn params_strategy() -> impl Strategy<Value = ModelParams<f64>> {
    (0.0..3.0f64, 0.0..4.0f64, 2.0..6.0f64, 0.0..1.0f64, 0.0..0.3f64, 0.0..0.1f64, 0.0..2.5f64, any::<bool>())
        .prop_map(|(omega, delta, v, vi_frac, vd, nnn, r, local)| {
            let mut p = ModelParams::paper_default();
            p.omega = omega;
            p.delta = delta;
            p.v_intra = v;
            p.v_inter = v * vi_frac;
            p.v_diag = DiagCoupling::Explicit(vd);
            p.v_nnn = nnn;
            p.r_high_order = r;
            p.high_order_form = if local { HighOrderForm::Local } else { HighOrderForm::NeighborResolved };
            p
        })
}

fn cell_strategy() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![Just((2, 2)), Just((2, 4)), Just((4, 2)), Just((1, 2)), Just((3, 2))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rhs_is_equivariant_under_cell_symmetries(p in params_strategy(), (rows, cols) in cell_strategy(), seed in any::<u64>()) {
        let m = MeanField::new(p, rows, cols).unwrap();
        let s: StateVector<f64> = random_bloch(m.sites(), &mut stream_rng(seed, 0));
        let f = eom_rhs(&s, &m).unwrap();
        for perm in [m.cell.sublattice_shift(), m.cell.chain_reverse(), m.cell.chain_shift()] {
            let fp = eom_rhs(&s.permuted(&perm), &m).unwrap();
            prop_assert!(max_abs_diff(&fp.0, &f.permuted(&perm).0) < 1e-12);
        }
    }

    #[test]
    fn analytic_jacobian_matches_central_differences(p in params_strategy(), (rows, cols) in cell_strategy(), seed in any::<u64>()) {
        let m = MeanField::new(p, rows, cols).unwrap();
        let s: StateVector<f64> = random_bloch(m.sites(), &mut stream_rng(seed, 1));
        let diff = m.jacobian(&s.0).max_abs_diff(&fd_jacobian(&m, &s.0, 1e-6));
        prop_assert!(diff < 1e-6, "{diff}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn physical_states_stay_in_the_bloch_ball(vi in 0.0..5.0f64, seed in any::<u64>()) {
        let m = model(vi, 2, 2);
        let s = generate(SeedKind::RandomBloch, &m, seed, 0).unwrap();
        let tr = m.integrate_rk4(&s, &Rk4Options::new(200.0).stride(20)).unwrap();
        for k in 0..tr.len() {
            let st = StateVector(tr.state(k).to_vec());
            for i in 0..m.sites() {
                prop_assert!(st.bloch_norm_sq(i) <= 1.0 + 1e-6);
                prop_assert!((-1e-9..=1.0 + 1e-9).contains(&st.n(i)));
            }
        }
    }
}
