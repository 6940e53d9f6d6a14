use bpre::bpre::{iterate_pgf, mobius_composition, simulate_population, survival_curve, survival_prob_quenched};
use bpre::env::{sample_environment, EnvironmentModel, Family, OffspringLaw, SecondaryRule};
use bpre::estimators::{tower_comparison, PhiSpec};
use bpre::stats::Moments;
use bpre::{StableParams, Streams};
use proptest::prelude::*;

fn model() -> EnvironmentModel {
    EnvironmentModel::geometric(StableParams::new(1.5, 0.0, 1.0).unwrap()).unwrap()
}

#[test]
fn mobius_fast_path_matches_generic_iteration() {
    let m = model();
    let s = Streams::new(40);
    let mut worst = 0.0f64;
    for i in 0..10_000u64 {
        let mut rng = s.rng(i);
        let n = 1 + (i % 100) as usize;
        let env = sample_environment(&m, n, &mut rng).unwrap();
        let mob = mobius_composition(&env, 0, n).unwrap().unwrap();
        for x in [0.0, 0.3, 0.9] {
            worst = worst.max((mob.apply(x) - iterate_pgf(&env, 0, n, x).unwrap()).abs());
        }
        let fwd = *survival_curve(&env).last().unwrap();
        worst = worst.max((fwd - survival_prob_quenched(&env, n).unwrap()).abs());
    }
    assert!(worst <= 1e-12, "largest discrepancy {worst}");
}

#[test]
fn survival_is_bounded_by_the_walk_minimum() {
    let models = [
        model(),
        EnvironmentModel::new(
            Family::Poisson,
            StableParams::new(1.2, -0.4, 1.0).unwrap(),
            SecondaryRule::None,
        )
        .unwrap(),
        EnvironmentModel::new(
            Family::LinearFractional,
            StableParams::new(1.8, 0.3, 0.5).unwrap(),
            SecondaryRule::Uniform { lo: 1.0, hi: 3.0 },
        )
        .unwrap(),
    ];
    for (k, m) in models.iter().enumerate() {
        let s = Streams::new(41 + k as u64);
        for i in 0..2000u64 {
            let env = sample_environment(m, 60, &mut s.rng(i)).unwrap();
            let curve = survival_curve(&env);
            let mut walk = 0.0f64;
            let mut low = 0.0f64;
            for (law, surv) in env.iter().zip(&curve) {
                walk += law.log_mean();
                low = low.min(walk);
                assert!(*surv <= low.exp() * (1.0 + 1e-12), "family {k}, path {i}");
                assert!(*surv >= 0.0);
            }
        }
    }
}

#[test]
fn population_simulation_matches_quenched_survival() {
    // one fixed Poisson environment: the generic iteration against 2e5
    // simulated trajectories
    let env: Vec<OffspringLaw> = [0.4, -0.7, 0.2, -0.1, 0.9, -1.2, 0.3]
        .iter()
        .map(|&x| OffspringLaw::poisson(x).unwrap())
        .collect();
    let n = env.len();
    let want = survival_prob_quenched(&env, n).unwrap();
    let s = Streams::new(44);
    let mut m = Moments::default();
    for i in 0..200_000u64 {
        let t = simulate_population(&env, 1, &mut s.rng(i), 1 << 40).unwrap();
        m.push(if t.survived(n) { 1.0 } else { 0.0 });
    }
    assert!((m.value() - want).abs() < 3.0 * m.std_error(), "{} vs {want}", m.value());
}

#[test]
fn rao_blackwell_estimator_agrees_and_has_smaller_variance() {
    let phi = PhiSpec::default_for(1.5);
    let r = tower_comparison(&model(), 32, &phi, 1_000_000_000_000_000, 100_000, &Streams::new(45), 1).unwrap();
    assert!(r.diff.abs() < 3.0 * r.merged_se, "{r:?}");
    assert!(r.var_rao_blackwell < r.var_direct);
}

proptest! {
    #[test]
    fn pgf_iteration_stays_in_unit_interval(
        xs in prop::collection::vec(-3.0f64..3.0, 1..40),
        s in 0.0f64..=1.0,
    ) {
        let env: Vec<OffspringLaw> = xs.iter().map(|&x| OffspringLaw::geometric(x).unwrap()).collect();
        let n = env.len();
        let v = iterate_pgf(&env, 0, n, s).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        // monotone in s
        let w = iterate_pgf(&env, 0, n, (s + 0.01).min(1.0)).unwrap();
        prop_assert!(w >= v - 1e-15);
    }

    #[test]
    fn zeta_at_one_dominates_inverse_mean(x in -20.0f64..20.0, kappa in 0.0f64..4.0) {
        // ζ(1) = E ξ² / (E ξ)² ≥ 1 / E ξ since ξ is integer valued
        if let Ok(law) = OffspringLaw::linear_fractional(x, kappa.max((1.0 - (-x).exp()).max(0.0))) {
            prop_assert!(law.log_zeta(1).unwrap() >= -x - 1e-9);
        }
    }
}
