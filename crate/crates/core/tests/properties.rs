//! Randomized invariants over seeded instances.

use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pgrates::analysis::{contraction_along_trace, min_prob_floor, min_prob_floor_check, monotone_gap};
use pgrates::gradients::{
    bandit_entropy_gradient, bandit_pg_gradient, mdp_entropy_gradient, mdp_pg_gradient, soft_value_objective,
    value_objective,
};
use pgrates::instance::{random_bandit, random_logits, random_mdp, random_positive_distribution};
use pgrates::mdp::simplex::{self, h_apply, softmax};
use pgrates::mdp::{
    discounted_state_distribution, policy_values, soft_policy_values, softmax_policy, solve_optimal,
    solve_soft_optimal, PolicyLogits, PolicyTable, StateDistribution, TabularMdp,
};
use pgrates::optimizer::{run, Init, MethodSpec, ProblemSpec, RunConfig, Table};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gammas() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(0.5), Just(0.9)]
}

/// `(1/(1−γ)) Σ_s d(s) Σ_a w(s, a)`.
fn weighted(d: &StateDistribution, gamma: f64, w: impl Fn(usize) -> f64) -> f64 {
    d.as_slice().iter().enumerate().map(|(s, x)| x * w(s)).sum::<f64>() / (1.0 - gamma)
}

fn step(theta: &PolicyLogits, g: &pgrates::gradients::GradientTable, eta: f64) -> PolicyLogits {
    PolicyLogits::new(theta.matrix() + g.matrix() * eta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_rows_are_distributions_and_shift_invariant(
        row in prop::collection::vec(-30.0f64..30.0, 1..12),
        c in -100.0f64..100.0,
    ) {
        let p = softmax(&row);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = row.iter().map(|x| x + c).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        prop_assert_eq!(argmax(&p), argmax(&q));
    }

    #[test]
    fn performance_difference(seed: u64, s_n in 1usize..5, a_n in 1usize..5, gamma in gammas()) {
        let mut g = rng(seed);
        let mdp = random_mdp(&mut g, s_n, a_n, gamma);
        let pi = softmax_policy(&random_logits(&mut g, s_n, a_n, 2.0)).unwrap();
        let pi2 = softmax_policy(&random_logits(&mut g, s_n, a_n, 2.0)).unwrap();
        let rho = random_positive_distribution(&mut g, s_n);
        let vb = policy_values(&mdp, &pi, &rho).unwrap();
        let vb2 = policy_values(&mdp, &pi2, &rho).unwrap();
        let rhs = weighted(&vb2.d, gamma, |s| (0..a_n).map(|a| pi2.prob(s, a) * vb.adv[(s, a)]).sum());
        prop_assert!((vb2.value_at(&rho) - vb.value_at(&rho) - rhs).abs() <= 1e-8);
    }

    #[test]
    fn value_suboptimality(seed: u64, s_n in 1usize..5, a_n in 1usize..5, gamma in gammas()) {
        let mut g = rng(seed);
        let mdp = random_mdp(&mut g, s_n, a_n, gamma);
        let pi = softmax_policy(&random_logits(&mut g, s_n, a_n, 2.0)).unwrap();
        let rho = random_positive_distribution(&mut g, s_n);
        let sol = solve_optimal(&mdp, 1e-12).unwrap();
        let star = sol.policy();
        let vb = policy_values(&mdp, &pi, &rho).unwrap();
        let rhs = weighted(&vb.d, gamma, |s| {
            (0..a_n).map(|a| (star.prob(s, a) - pi.prob(s, a)) * sol.q_star[(s, a)]).sum()
        });
        prop_assert!((sol.value_at(&rho) - vb.value_at(&rho) - rhs).abs() <= 1e-8);
    }

    #[test]
    fn soft_suboptimality_is_weighted_kl(
        seed: u64, s_n in 1usize..5, a_n in 1usize..5, gamma in gammas(),
        tau in prop_oneof![Just(0.05), Just(0.2), Just(1.0)],
    ) {
        let mut g = rng(seed);
        let mdp = random_mdp(&mut g, s_n, a_n, gamma);
        let pi = softmax_policy(&random_logits(&mut g, s_n, a_n, 2.0)).unwrap();
        let rho = random_positive_distribution(&mut g, s_n);
        let (star, sb_star) = solve_soft_optimal(&mdp, tau, 1e-12, &rho).unwrap();
        let sb = soft_policy_values(&mdp, &pi, &rho, tau).unwrap();
        let d = discounted_state_distribution(&mdp, &pi, &rho).unwrap();
        let rhs = weighted(&d, gamma, |s| tau * simplex::kl_divergence(&pi.row(s), &star.row(s)));
        prop_assert!((sb_star.value_at(&rho) - sb.value_at(&rho) - rhs).abs() <= 1e-8);
    }

    #[test]
    fn h_norm_decay(raw in prop::collection::vec(-3.0f64..3.0, 2..10), x_seed: u64) {
        let pi = softmax(&raw);
        let mut g = rng(x_seed);
        let x = simplex::center(&random_logits(&mut g, 1, pi.len(), 1.0).row(0));
        let mut hx = vec![0.0; pi.len()];
        h_apply(&pi, &x, &mut hx);
        let min_pi = pi.iter().copied().fold(f64::INFINITY, f64::min);
        let nx = simplex::norm2(&x);
        prop_assert!(simplex::norm2(&hx) >= min_pi * nx - 1e-12);
        let rest: Vec<f64> = x.iter().zip(&hx).map(|(a, b)| a - b).collect();
        prop_assert!(simplex::norm2(&rest) <= (1.0 - min_pi) * nx + 1e-12);
    }

    #[test]
    fn gradient_rows_sum_to_zero(seed: u64, s_n in 1usize..5, a_n in 1usize..6, gamma in gammas()) {
        let mut g = rng(seed);
        let mdp = random_mdp(&mut g, s_n, a_n, gamma);
        let th = random_logits(&mut g, s_n, a_n, 3.0);
        let mu = random_positive_distribution(&mut g, s_n);
        prop_assert!(mdp_pg_gradient(&mdp, &th, &mu).unwrap().max_row_sum() <= 1e-10);
        prop_assert!(mdp_entropy_gradient(&mdp, &th, &mu, 0.3).unwrap().max_row_sum() <= 1e-10);
        let r = random_bandit(&mut g, a_n).bandit_rewards();
        let tb = random_logits(&mut g, 1, a_n, 3.0);
        prop_assert!(bandit_pg_gradient(&r, &tb).unwrap().max_row_sum() <= 1e-10);
        prop_assert!(bandit_entropy_gradient(&r, &tb, 0.3).unwrap().max_row_sum() <= 1e-10);
    }

    #[test]
    fn one_smooth_step_never_decreases_the_objective(
        seed: u64, s_n in 1usize..4, a_n in 2usize..5, gamma in gammas(),
        tau in prop_oneof![Just(0.05), Just(0.2), Just(1.0)],
    ) {
        let mut g = rng(seed);
        let r = random_bandit(&mut g, a_n).bandit_rewards();
        let th = random_logits(&mut g, 1, a_n, 3.0);
        let f = |t: &PolicyLogits| softmax(&t.row(0)).iter().zip(&r).map(|(p, x)| p * x).sum::<f64>();
        let next = step(&th, &bandit_pg_gradient(&r, &th).unwrap(), 1.0 / 2.5);
        prop_assert!(f(&next) >= f(&th) - 1e-12);

        let mdp = random_mdp(&mut g, s_n, a_n, gamma);
        let mu = random_positive_distribution(&mut g, s_n);
        let th = random_logits(&mut g, s_n, a_n, 2.0);
        let beta = 8.0 / (1.0 - gamma).powi(3);
        let next = step(&th, &mdp_pg_gradient(&mdp, &th, &mu).unwrap(), 1.0 / beta);
        let (v0, v1) = (value_objective(&mdp, &th, &mu).unwrap(), value_objective(&mdp, &next, &mu).unwrap());
        prop_assert!(v1 >= v0 - 1e-12);

        let beta = (8.0 + tau * (4.0 + 8.0 * (a_n as f64).ln())) / (1.0 - gamma).powi(3);
        let next = step(&th, &mdp_entropy_gradient(&mdp, &th, &mu, tau).unwrap(), 1.0 / beta);
        let v0 = soft_value_objective(&mdp, &th, &mu, tau).unwrap();
        let v1 = soft_value_objective(&mdp, &next, &mu, tau).unwrap();
        prop_assert!(v1 >= v0 - 1e-12);
    }

    #[test]
    fn unreached_self_loop_blocks_are_stationary(seed: u64, s_n in 2usize..5, a_n in 2usize..5, gamma in gammas()) {
        let mut g = rng(seed);
        let rewards = random_mdp(&mut g, s_n, a_n, 0.0).rewards().row_iter()
            .map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>();
        let mdp = TabularMdp::self_loops(&rewards, gamma).unwrap();
        let mut w = random_positive_distribution(&mut g, s_n).as_slice().to_vec();
        w[0] = 0.0;
        let total: f64 = w.iter().sum();
        let mu = StateDistribution::new(w.iter().map(|x| x / total).collect()).unwrap();
        let th = random_logits(&mut g, s_n, a_n, 3.0);
        let grad = mdp_pg_gradient(&mdp, &th, &mu).unwrap();
        prop_assert!(grad.row(0).iter().all(|x| *x == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn default_step_runs_ascend(seed: u64, s_n in 1usize..4, a_n in 2usize..5, gamma in prop_oneof![Just(0.0), Just(0.5)]) {
        let problem = if s_n == 1 {
            ProblemSpec::random_bandit(a_n, seed)
        } else {
            ProblemSpec::random_mdp(s_n, a_n, gamma, seed)
        };
        for method in [MethodSpec::plain(), MethodSpec::entropy(0.2)] {
            let cfg = RunConfig::new(problem.clone(), method, 300).with_init(Init::Random { seed });
            let trace = run(&cfg).unwrap();
            let rep = monotone_gap(&trace, 1e-12);
            prop_assert!(rep.pass, "{}", rep.to_json_line());
        }
    }

    #[test]
    fn entropy_bandit_contracts_and_keeps_its_floor(
        seed: u64, k in 2usize..10, tau in prop_oneof![Just(0.2), Just(0.5), Just(1.0)], eta_frac in 0.1f64..1.0,
    ) {
        let eta = eta_frac / tau;
        let init = random_logits(&mut rng(seed), 1, k, 1.5);
        let cfg = RunConfig::new(ProblemSpec::random_bandit(k, seed), MethodSpec::entropy(tau).with_eta(eta), 400)
            .with_init(Init::Logits(Table::Flat(init.row(0))));
        let trace = run(&cfg).unwrap();
        let rep = contraction_along_trace(&trace, eta, 1e-10).unwrap();
        prop_assert!(rep.pass, "{}", rep.to_json_line());
        let rep = min_prob_floor_check(&trace, min_prob_floor(k, tau, init.max_abs()));
        prop_assert!(rep.pass, "{}", rep.to_json_line());
    }

    #[test]
    fn configs_round_trip_through_json(seed: u64, k in 2usize..6, tau in 0.01f64..2.0) {
        let cfg = RunConfig::new(ProblemSpec::random_bandit(k, seed), MethodSpec::entropy(tau), 10)
            .with_init(Init::Random { seed });
        let text = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}

#[test]
fn policy_tables_from_logits_have_unit_rows() {
    let mut g = rng(1);
    for _ in 0..200 {
        let th = random_logits(&mut g, 4, 6, 10.0);
        let pi: PolicyTable = softmax_policy(&th).unwrap();
        for s in 0..4 {
            assert!((pi.row(s).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let shift = DVector::from_fn(4, |s, _| s as f64 * 7.5 - 11.0);
        let mut m = th.matrix().clone();
        for s in 0..4 {
            for a in 0..6 {
                m[(s, a)] += shift[s];
            }
        }
        let pi2 = softmax_policy(&PolicyLogits::new(m).unwrap()).unwrap();
        assert!((pi.matrix() - pi2.matrix()).amax() <= 1e-12);
    }
}
