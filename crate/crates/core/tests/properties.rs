use guided_bridge::backward::{solve_backward, GridMode, TimeGrid};
use guided_bridge::mcmc::{pcn_blend, run_chain, SamplerConfig};
use guided_bridge::model::catalog::{self, FhnParams, FmParams};
use guided_bridge::model::{DiffusionModel, LinearAuxiliary, Observation};
use guided_bridge::proposal::{guiding_weight, simulate_guided, Innovations};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(d: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-3.0..3.0f64, d).prop_map(DVector::from_vec)
}

fn catalog_models() -> Vec<(DiffusionModel, LinearAuxiliary)> {
    let wells = catalog::nlcar_wells;
    vec![
        catalog::brownian(3),
        catalog::integrated_diffusion(1.2, catalog::sine_nonlinearity(1.0, 2.0, 1)),
        catalog::nlcar3(0.9, wells()),
        catalog::fitzhugh_nagumo(FhnParams::default(), 0.4).unwrap(),
        catalog::nonlinear2d(catalog::Nonlinear2dVariant::ConstantSigma),
        catalog::nonlinear2d(catalog::Nonlinear2dVariant::StateSigmaX2),
        catalog::nonlinear2d(catalog::Nonlinear2dVariant::StateSigmaLx { v: 0.3 }),
        catalog::fm_demodulation(FmParams {
            alpha: 0.5,
            gamma: 1.0,
            omega: 2.0,
            psi: 0.3,
        }),
        catalog::tracking_2d([1.0, 0.3, -0.2, 0.8], wells(), wells()).unwrap(),
        catalog::hairer_stuart_voss(0.5, 1.0, wells()).unwrap(),
        catalog::non_delyon_hu(wells()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn catalog_shapes_and_purity(t in 0.0..4.0f64, raw in prop::collection::vec(-3.0..3.0f64, 4)) {
        for (model, aux) in catalog_models() {
            let d = model.dim();
            let x = DVector::from_column_slice(&raw[..d]);
            let b = model.drift(t, &x);
            let s = model.dispersion(t, &x);
            prop_assert_eq!(b.len(), d);
            prop_assert_eq!((s.nrows(), s.ncols()), (d, model.noise_dim()));
            prop_assert_eq!(model.drift(t, &x), b);
            prop_assert_eq!(model.dispersion(t, &x), s);
            prop_assert!(aux.check_compatible(&model).is_ok());
            let a = aux.diffusivity(t);
            prop_assert!((&a - a.transpose()).amax() == 0.0);
            prop_assert!(a.symmetric_eigenvalues().min() >= -1e-12 * a.amax().max(1.0));
        }
    }

    #[test]
    fn matched_dispersion_for_chain_models(t in 0.0..2.0f64, x2 in state(2), x3 in state(3)) {
        let (m, aux) = catalog::integrated_diffusion(1.7, catalog::nlcar_wells());
        prop_assert_eq!(m.diffusivity(t, &x2), aux.diffusivity(t));
        let (m, aux) = catalog::nlcar3(0.6, catalog::nlcar_wells());
        prop_assert_eq!(m.diffusivity(t, &x3), aux.diffusivity(t));
    }

    #[test]
    fn fhn_auxiliary_is_tangent_at_the_linearization_point(v in -1.5..1.5f64, x2 in -2.0..2.0f64, d in -1e-3..1e-3f64) {
        let p = FhnParams::default();
        let (m, aux) = catalog::fitzhugh_nagumo(p, v).unwrap();
        let at = DVector::from_vec(vec![v, x2]);
        prop_assert!((m.drift(0.0, &at) - aux.drift(0.0, &at)).amax() < 1e-9);
        let off = DVector::from_vec(vec![v + d, x2]);
        // second-order contact: the gap is -3 v d^2 - d^3 over eps
        let gap = (m.drift(0.0, &off) - aux.drift(0.0, &off))[0];
        prop_assert!((gap - (-3.0 * v * d * d - d * d * d) / p.eps).abs() < 1e-9);
    }

    #[test]
    fn tau_grid_invariants(horizon in 0.1..10.0f64, frac in 1e-3..0.5f64) {
        let h = horizon * frac;
        let g = TimeGrid::new(GridMode::Tau, horizon, h).unwrap();
        let k = g.knots();
        prop_assert_eq!(k[0], 0.0);
        prop_assert_eq!(*k.last().unwrap(), horizon);
        for w in k.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!(w[1] - w[0] <= 2.0 * h * (1.0 + 1e-12));
        }
    }

    #[test]
    fn terminal_values_and_definiteness(eps in 0.0..1e-3f64, v in state(2)) {
        let (_, aux) = catalog::hairer_stuart_voss(0.7, 1.1, catalog::zero_nonlinearity()).unwrap();
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let obs = Observation::new(l.clone(), v, 1.0, DVector::zeros(2)).unwrap();
        let grid = TimeGrid::new(GridMode::Tau, 1.0, 0.05).unwrap();
        let gd = solve_backward(&aux, &obs, &grid, eps).unwrap();
        let n = grid.intervals();
        prop_assert_eq!(gd.l_at(n), &l);
        prop_assert_eq!(gd.mu_at(n), &DVector::zeros(2));
        prop_assert_eq!(gd.mdag_at(n), &(DMatrix::identity(2, 2) * eps));
        for i in 0..n {
            let m = gd.mdag_at(i);
            prop_assert_eq!(m, &m.transpose());
            prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn guiding_term_is_affine_in_the_state(x in state(3), y in state(3), w in 0.0..1.0f64, k in 0usize..50) {
        let (_, aux) = catalog::nlcar3(1.0, catalog::zero_nonlinearity());
        let obs = Observation::new(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), DVector::from_element(1, 0.5), 1.0, DVector::zeros(3)).unwrap();
        let grid = TimeGrid::new(GridMode::Tau, 1.0, 0.02).unwrap();
        let gd = solve_backward(&aux, &obs, &grid, 1e-10).unwrap();
        let mix = &x * w + &y * (1.0 - w);
        let lhs = gd.guiding_r(k, &mix).unwrap();
        let rhs = gd.guiding_r(k, &x).unwrap() * w + gd.guiding_r(k, &y).unwrap() * (1.0 - w);
        prop_assert!((&lhs - &rhs).amax() <= 1e-8 * rhs.amax().max(1.0));
    }

    #[test]
    fn weight_vanishes_for_exact_auxiliaries(x in state(2), k in 0usize..20) {
        let b = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.3]);
        let (model, aux) = catalog::linear("lin", b, DVector::from_vec(vec![0.3, -0.2]), DMatrix::from_row_slice(2, 1, &[0.0, 1.0])).unwrap();
        let obs = Observation::new(DMatrix::identity(2, 2), DVector::zeros(2), 1.0, DVector::zeros(2)).unwrap();
        let grid = TimeGrid::new(GridMode::Tau, 1.0, 0.05).unwrap();
        let gd = solve_backward(&aux, &obs, &grid, 1e-10).unwrap();
        prop_assert!(guiding_weight(&model, &gd, k, &x).unwrap().abs() < 1e-9);
    }

    #[test]
    fn guided_paths_start_at_x0_and_are_deterministic(seed in any::<u64>(), x0 in state(2)) {
        let (model, aux) = catalog::integrated_diffusion(1.0, catalog::sine_nonlinearity(1.0, 1.0, 0));
        let obs = Observation::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.0]), 1.0, x0.clone()).unwrap();
        let grid = TimeGrid::new(GridMode::Tau, 1.0, 0.05).unwrap();
        let gd = solve_backward(&aux, &obs, &grid, 1e-10).unwrap();
        let innov = Innovations::sample(&grid, 1, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(innov.increments().len(), grid.len() - 1);
        let a = simulate_guided(&model, &gd, &x0, &innov).unwrap();
        prop_assert_eq!(a.path.state(0), &x0);
        prop_assert!(a.log_psi.is_finite());
        prop_assert_eq!(simulate_guided(&model, &gd, &x0, &innov).unwrap(), a);
    }

    #[test]
    fn blend_is_elementwise(rho in 0.0..1.0f64, seed in any::<u64>()) {
        let grid = TimeGrid::new(GridMode::Uniform, 1.0, 0.1).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let z = Innovations::sample(&grid, 2, &mut r);
        let w = Innovations::sample(&grid, 2, &mut r);
        let c = (1.0 - rho * rho).sqrt();
        let b = pcn_blend(&z, &w, rho).unwrap();
        for ((bi, zi), wi) in b.increments().iter().zip(z.increments()).zip(w.increments()) {
            prop_assert!((bi - (zi * rho + wi * c)).amax() <= 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn acceptance_rate_is_the_accepted_fraction(seed in any::<u64>(), rho in 0.0..0.95f64) {
        let (model, aux) = catalog::fitzhugh_nagumo(FhnParams::default(), -1.0).unwrap();
        let obs = Observation::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_element(1, -1.0), 2.0, DVector::from_vec(vec![-0.5, -0.6])).unwrap();
        let mut cfg = SamplerConfig::new(rho, 50, seed);
        cfg.thin = 10;
        let s = run_chain(&model, &aux, &obs, &cfg).unwrap();
        prop_assert_eq!(s.acceptance_rate, s.accepted as f64 / 50.0);
        prop_assert_eq!(s.log_psi_trace.len(), 50);
        prop_assert_eq!(s.stored_paths.len(), 6);
        prop_assert_eq!(s.seed, seed);
    }
}
