//! Numerical certificates for the convergence inequalities and rate
//! estimation from optimizer traces.

pub mod checks;
pub mod fixtures;
pub mod rates;
pub mod report;
pub mod suites;

pub use checks::{
    bandit_soft_gap, contraction_residual, degree_check, degree_probe, degree_probe_point, entropy_lojasiewicz,
    entropy_lojasiewicz_bandit, entropy_lojasiewicz_mdp, lojasiewicz_bandit, lojasiewicz_mdp,
    reversed_lojasiewicz_bandit, reversed_lojasiewicz_mdp, smoothness_witness, DegreeMode, BANDIT_TOL, DEGREE_TOL,
    MDP_TOL,
};
pub use fixtures::{
    all_fixtures, counterexample_fixture, escape_threshold_ratio, nonconcavity_fixture, nonconcavity_witness,
};
pub use rates::{
    contraction_along_trace, linear_rate_envelope, lower_bound_check, min_prob_floor, min_prob_floor_check,
    monotone_gap, monotone_opt_prob, pseudo_rate_envelope, rate_fit, rate_fit_trace, uniform_init_envelope,
};
pub use report::{count_failures, CheckReport, RateFit, RateModel};
pub use suites::{run_suite, Suite};
