use proptest::prelude::*;

use singcert::extremal::{adjoint_trajectory, dubins_initial_covector, reference_flow, uniform_grid};
use singcert::falsifier::NeedleWord;
use singcert::linalg::{self, Mat, Vector};
use singcert::model_core::commutator;
use singcert::second_variation::{assemble_galerkin, assemble_lq, goh_transform, restricted_spectrum, InitialSpace};
use singcert::{
    adapted_chart, build_dubins_system, competitor_sweep, needle_variation, ControlSignal, FalsifierSettings, Model,
    SecondVariationProblem, SpaceForm,
};

fn space_form() -> impl Strategy<Value = SpaceForm> {
    prop_oneof![Just(SpaceForm::Euclidean), Just(SpaceForm::Sphere), Just(SpaceForm::Hyperbolic)]
}

fn problem(sf: SpaceForm) -> SecondVariationProblem {
    let sys = build_dubins_system(sf, 3).unwrap();
    let p0 = dubins_initial_covector(&sys).unwrap();
    let q0 = Mat::identity(4, 4);
    let model = Model::Group(sys.clone());
    let grid = uniform_grid(1.0, 0.01).unwrap();
    let tr = adjoint_trajectory(&model, &q0, &p0, &ControlSignal::zero(2), &grid).unwrap();
    let chart = adapted_chart(&sys, &q0, &[]).unwrap().with_covector(&p0);
    assemble_lq(&model, &tr, &chart, 0.0).unwrap()
}

fn word() -> impl Strategy<Value = NeedleWord> {
    (1usize..5).prop_flat_map(|len| {
        (
            prop::collection::vec(0usize..2, len),
            prop::collection::vec(-1.0..1.0f64, len),
            prop::collection::vec(-1.0..1.0f64, len),
        )
            .prop_map(|(c, t, tb)| NeedleWord::new(c, t, tb).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn double_brackets_with_the_drift(sf in space_form(), n in 3usize..6) {
        let sys = build_dubins_system(sf, n).unwrap();
        let a0 = &sys.drift;
        for i in 0..sys.m() {
            for j in 0..sys.m() {
                let v = commutator(&sys.controlled[i], &commutator(&sys.controlled[j], a0).unwrap()).unwrap();
                let target = if i == j { -a0.clone() } else { Mat::zeros(sys.d, sys.d) };
                prop_assert!(linalg::max_abs(&(v - target)) <= 1e-12);
            }
        }
    }

    #[test]
    fn covector_values_round_trip(sf in space_form(), vals in prop::collection::vec(-2.0..2.0f64, 6)) {
        let sys = build_dubins_system(sf, 3).unwrap();
        let v = Vector::from_vec(vals);
        let back = sys.frame().covector_values(&sys.frame().covector_from_values(&v));
        prop_assert!((back - v).amax() <= 1e-12);
    }

    #[test]
    fn group_flow_stays_in_the_group(sf in space_form(), u in prop::collection::vec(-3.0..3.0f64, 2)) {
        let sys = build_dubins_system(sf, 3).unwrap();
        let model = Model::Group(sys.clone());
        let grid = uniform_grid(1.0, 0.05).unwrap();
        let fc = reference_flow(&model, None, &ControlSignal::Constant { value: u }, &grid).unwrap();
        for m in &fc.states {
            prop_assert!(sys.group_residual(m) <= 1e-9);
        }
    }

    #[test]
    fn zero_mean_variations_cost_half_their_norm(seed_w in prop::collection::vec(-1.0..1.0f64, 32)) {
        let pr = problem(SpaceForm::Euclidean);
        let k = 16;
        let form = assemble_galerkin(&pr, k).unwrap();
        let h = 1.0 / k as f64;
        let w: Vec<Vector> = seed_w.chunks(2).map(|c| Vector::from_column_slice(c)).collect();
        let mean = w.iter().fold(Vector::zeros(2), |a, b| a + b) / k as f64;
        let w: Vec<Vector> = w.into_iter().map(|v| v - &mean).collect();
        let y = form.embed(&w);
        prop_assert!(form.constraint_residual(&y) <= 1e-12);
        let half = 0.5 * w.iter().map(|v| v.norm_squared() * h).sum::<f64>();
        prop_assert!((form.value(&y) - half).abs() <= 1e-10);
    }

    #[test]
    fn free_margin_is_monotone_in_rho(sf in space_form(), a in 0.0..2.0f64, b in 0.0..2.0f64) {
        let pr = problem(sf).with_initial(InitialSpace::Free);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let margin = |rho: f64| {
            let form = assemble_galerkin(&pr.with_rho(rho), 8).unwrap();
            restricted_spectrum(&form).unwrap().min_eigenvalue
        };
        prop_assert!(margin(hi) >= margin(lo) - 1e-10);
    }

    #[test]
    fn needle_overlay_scales_with_eps(w in word(), eps in 0.01..0.3f64, s_bar in 0.0..0.5f64) {
        let nv = needle_variation(&ControlSignal::zero(2), 1.0, s_bar, &w, eps).unwrap();
        let l1 = nv.overlay.l1_norm(0.0, 1.0, 1);
        prop_assert!((l1 - eps * w.l1_norm()).abs() <= 1e-12 * (1.0 + l1));
        let (a, b) = nv.window();
        prop_assert!((b - a - 2.0 * eps * eps).abs() <= 1e-15);
    }

    #[test]
    fn goh_transform_of_a_constant(c in prop::collection::vec(-2.0..2.0f64, 2)) {
        let grid = uniform_grid(1.0, 0.1).unwrap();
        let gt = goh_transform(&ControlSignal::Constant { value: c.clone() }, &grid).unwrap();
        for (t, w) in grid.iter().zip(&gt.w) {
            for i in 0..2 {
                prop_assert!((w[i] - c[i] * (1.0 - t)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn control_signals_round_trip_through_json(vals in prop::collection::vec(-5.0..5.0f64, 4)) {
        let u = ControlSignal::PiecewiseConstant { breaks: vec![0.0, 0.3, 1.0], values: vec![vals[..2].to_vec(), vals[2..].to_vec()] };
        let back: ControlSignal = serde_json::from_str(&serde_json::to_string(&u).unwrap()).unwrap();
        prop_assert_eq!(back, u);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn sweeps_are_reproducible(seed in 0u64..1000) {
        let sys = build_dubins_system(SpaceForm::Euclidean, 3).unwrap();
        let p0 = dubins_initial_covector(&sys).unwrap();
        let model = Model::Group(sys);
        let grid = uniform_grid(1.0, 0.01).unwrap();
        let tr = adjoint_trajectory(&model, &Mat::identity(4, 4), &p0, &ControlSignal::zero(2), &grid).unwrap();
        let s = FalsifierSettings { n_samples: 3, seed, ..Default::default() };
        let a = serde_json::to_string(&competitor_sweep(&model, &tr, &s).unwrap()).unwrap();
        let b = serde_json::to_string(&competitor_sweep(&model, &tr, &s).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}
