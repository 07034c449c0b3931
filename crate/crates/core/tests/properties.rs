//! Property tests over randomly drawn models and spectral densities.

use pseudomode::lindblad::{build_hs, time_grid, EmitterParams, Equation, MasterEquation, PropagateOptions};
use pseudomode::markov::{self, MarkovParams};
use pseudomode::specdens::{CoupledOhmic, LorentzianMode, SpectralDensity, Tabulated};
use pseudomode::FewModeModel;
use proptest::prelude::*;

fn model_strategy(max_modes: usize) -> impl Strategy<Value = FewModeModel> {
    (1..=max_modes).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n * n),
            prop::collection::vec(1e-3f64..1.0, n),
            prop::collection::vec(0.0f64..1.0, n),
        )
            .prop_map(move |(raw, kappa, g)| {
                let mut omega = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        omega[i * n + j] = if i <= j { raw[i * n + j] } else { raw[j * n + i] };
                    }
                }
                FewModeModel::new(omega, kappa, g).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fitted_density_is_nonnegative(m in model_strategy(5)) {
        let s = m.scale();
        let vals: Vec<f64> = (0..=400).map(|k| m.eval(-10.0 * s + 20.0 * s * k as f64 / 400.0).unwrap()).collect();
        let peak = vals.iter().cloned().fold(0.0, f64::max);
        prop_assert!(vals.iter().all(|&v| v >= -1e-12 * peak));
    }

    #[test]
    fn resolvent_and_dissipative_forms_agree(m in model_strategy(4), x in -6.0f64..6.0) {
        let a = m.eval(x).unwrap();
        let b = m.eval_dissipative_form(x).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12));
    }

    #[test]
    fn counter_rotating_rate_is_negative(m in model_strategy(3), we in 0.1f64..3.0) {
        let j = SpectralDensity::CoupledOhmic(CoupledOhmic::new(0.2, 1.0, 0.1).unwrap());
        let dj = markov::residual(&j, &m);
        let rate = markov::gamma_mod(&dj, -we).unwrap();
        prop_assert!(rate < 0.0);
        prop_assert!((rate + 2.0 * std::f64::consts::PI * m.eval(-we).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn tabulated_round_trips(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..2.0), 2..30),
    ) {
        let mut grid: Vec<f64> = pts.iter().enumerate().map(|(i, (d, _))| i as f64 + 0.01 + 0.9 * d).collect();
        grid.sort_by(f64::total_cmp);
        let values: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let t = Tabulated::new(grid.clone(), values.clone()).unwrap();
        for (w, v) in grid.iter().zip(&values) {
            prop_assert_eq!(t.value(*w), *v);
        }
        let sd = SpectralDensity::Tabulated(t);
        let json = serde_json::to_string(&sd).unwrap();
        let back: SpectralDensity = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, sd);
    }

    #[test]
    fn sum_is_pointwise_linear(
        a in (0.0f64..0.5, 0.1f64..3.0, 0.01f64..1.0),
        b in (0.0f64..0.5, 0.1f64..3.0, 0.01f64..1.0),
        x in -2.0f64..5.0,
    ) {
        let la = SpectralDensity::lorentzians(vec![LorentzianMode::new(a.0, a.1, a.2).unwrap()]);
        let lb = SpectralDensity::CoupledOhmic(CoupledOhmic::new(b.0, b.1, b.2).unwrap());
        let s = SpectralDensity::sum(vec![la.clone(), lb.clone()]);
        let d = SpectralDensity::difference(s.clone(), lb.clone());
        prop_assert!((s.value(x) - la.value(x) - lb.value(x)).abs() <= 1e-15 * s.value(x).abs().max(1e-300));
        prop_assert!((d.value(x) - la.value(x)).abs() <= 1e-12 * s.value(x).abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sum_rule_holds(m in model_strategy(3)) {
        let j = SpectralDensity::Fitted(m.clone());
        let s = m.scale();
        // the 1/ω² tails beyond ±L carry Σg²κ/(πL)
        let cut = 1e4 * s;
        let total = j.integrate(-cut, cut).unwrap() + 2.0 * m.far_field_coefficient() / cut;
        let want = m.spectral_sum_rule();
        prop_assert!((total - want).abs() <= 1e-6 * want.max(1e-12), "{} vs {}", total, want);
    }

    #[test]
    fn trace_is_preserved_for_signed_rates(
        g in 0.0f64..0.3,
        kappa in 0.0f64..0.2,
        gm in -0.01f64..0.01,
        gt in -0.01f64..0.0,
        detuning in -0.2f64..0.2,
    ) {
        let m = FewModeModel::new(vec![0.6 + detuning], vec![kappa], vec![g]).unwrap();
        let e = EmitterParams::excited(0.6);
        let h = build_hs(&e, &m, false, 3).unwrap();
        let markov = MarkovParams { delta_mod: 0.003, gamma_mod: gm, delta_mod_tilde: 0.002, gamma_mod_tilde: gt };
        let eq = MasterEquation::new(&h, &m, &markov, Equation::UscEq, 1.0).unwrap();
        let traj = eq.propagate(&e, &time_grid(50.0, 26).unwrap(), &PropagateOptions::default()).unwrap();
        prop_assert!(traj.max_trace_drift() < 1e-8 * 50.0);
    }

    #[test]
    fn rwa_conserves_excitation_number(
        g in prop::collection::vec(0.0f64..0.2, 2),
        w in prop::collection::vec(0.5f64..1.5, 2),
        c in -0.1f64..0.1,
    ) {
        let m = FewModeModel::new(vec![w[0], c, c, w[1]], vec![0.0, 0.0], g).unwrap();
        let e = EmitterParams::excited(1.0);
        let h = build_hs(&e, &m, true, 2).unwrap();
        let eq = MasterEquation::new(&h, &m, &MarkovParams::default(), Equation::RwaEq, 1.0).unwrap();
        let traj = eq.propagate(&e, &time_grid(80.0, 41).unwrap(), &PropagateOptions::default()).unwrap();
        for k in 0..traj.len() {
            let n = traj.emitter_population[k] + traj.mode_populations.iter().map(|s| s[k]).sum::<f64>();
            prop_assert!((n - 1.0).abs() < 1e-10);
        }
    }
}
