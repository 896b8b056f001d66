//! Named randomized verification suites. Each trial draws its own instance
//! from a seed mixed out of the suite seed, so results do not depend on the
//! thread count.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::{json, Value};

use super::checks::{
    degree_check, degree_probe, degree_probe_point, entropy_lojasiewicz, lojasiewicz_bandit, lojasiewicz_mdp,
    reversed_lojasiewicz_bandit, reversed_lojasiewicz_mdp, smoothness_witness, DegreeMode, BANDIT_TOL,
};
use super::fixtures::all_fixtures;
use super::report::CheckReport;
use crate::error::{Error, Result};
use crate::gradients::{
    bandit_pg_gradient, entropy_rate_gradient, entropy_rate_objective, finite_difference_gradient,
    mdp_entropy_gradient, mdp_pg_gradient, soft_value_objective, value_objective, GradientTable, DEFAULT_FD_STEP,
};
use crate::instance::{
    random_logits, random_mdp, random_positive_distribution, random_rewards, random_simplex, rng_from_seed,
};
use crate::mdp::simplex::{self, h_matrix};
use crate::mdp::{
    discounted_entropy, discounted_state_distribution, policy_values, soft_policy_values, softmax_policy,
    solve_optimal, solve_soft_optimal, PolicyLogits, StateDistribution, TabularMdp, DEFAULT_SOLVER_TOL,
};

/// Tolerance for identities that go through linear solves.
pub const SOLVE_TOL: f64 = 1e-8;
/// Maximum relative error of a gradient against central differences.
pub const GRADCHECK_TOL: f64 = 1e-5;
/// Tolerance of the spectrum checks.
pub const SPECTRUM_TOL: f64 = 1e-12;
/// Temperatures cycled through by the entropy suites.
pub const SUITE_TEMPERATURES: [f64; 3] = [0.05, 0.2, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Lojasiewicz,
    Reversed,
    EntropyLojasiewicz,
    Smoothness,
    Spectrum,
    Gradcheck,
    Identities,
    Degree,
    Fixtures,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Lojasiewicz,
        Suite::Reversed,
        Suite::EntropyLojasiewicz,
        Suite::Smoothness,
        Suite::Spectrum,
        Suite::Gradcheck,
        Suite::Identities,
        Suite::Degree,
        Suite::Fixtures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Lojasiewicz => "lojasiewicz",
            Suite::Reversed => "reversed",
            Suite::EntropyLojasiewicz => "entropy_lojasiewicz",
            Suite::Smoothness => "smoothness",
            Suite::Spectrum => "spectrum",
            Suite::Gradcheck => "gradcheck",
            Suite::Identities => "identities",
            Suite::Degree => "degree",
            Suite::Fixtures => "fixtures",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::config("suite", format!("unknown suite `{s}`")))
    }
}

/// Runs a suite with `trials` trials derived from `seed`.
pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    match suite {
        Suite::Lojasiewicz => lojasiewicz_suite(trials, seed),
        Suite::Reversed => reversed_suite(trials, seed),
        Suite::EntropyLojasiewicz => entropy_lojasiewicz_suite(trials, seed),
        Suite::Smoothness => smoothness_suite(trials, seed),
        Suite::Spectrum => spectrum_suite(trials, seed),
        Suite::Gradcheck => gradcheck_suite(trials, seed),
        Suite::Identities => identities_suite(trials, seed),
        Suite::Degree => degree_suite(trials, seed),
        Suite::Fixtures => all_fixtures(),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `i` in sub-stream `stream` of a suite seeded with `seed`.
pub fn trial_seed(seed: u64, stream: u64, i: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ i)
}

fn tag(mut rep: CheckReport, seed: u64, trial: usize) -> CheckReport {
    if let Value::Object(map) = &mut rep.context {
        map.insert("seed".into(), seed.into());
        map.insert("trial".into(), trial.into());
    }
    rep
}

/// Runs `n` trials of `f` in parallel, one seeded RNG per trial, keeping trial
/// order in the output.
fn par_trials<F>(n: usize, seed: u64, stream: u64, f: F) -> Result<Vec<CheckReport>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<CheckReport>> + Sync,
{
    let chunks: Vec<Vec<CheckReport>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, stream, i as u64);
            let mut rng = rng_from_seed(s);
            Ok(f(&mut rng)?.into_iter().map(|r| tag(r, s, i)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Logit scale for random parameters; wide enough to reach near-deterministic
/// policies.
fn logit_scale<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(0.0..5.0)
}

fn random_bandit_case<R: Rng>(rng: &mut R, max_k: usize) -> (Vec<f64>, PolicyLogits) {
    let k = rng.random_range(2..=max_k);
    let r = random_rewards(rng, k);
    let scale = logit_scale(rng);
    (r, random_logits(rng, 1, k, scale))
}

struct MdpCase {
    mdp: TabularMdp,
    theta: PolicyLogits,
    mu: StateDistribution,
    rho: StateDistribution,
}

fn random_mdp_case<R: Rng>(rng: &mut R, max_s: usize, max_a: usize, gammas: &[f64]) -> MdpCase {
    let s = rng.random_range(1..=max_s);
    let a = rng.random_range(2..=max_a);
    let gamma = gammas[rng.random_range(0..gammas.len())];
    let mdp = random_mdp(rng, s, a, gamma);
    let scale = logit_scale(rng);
    let theta = random_logits(rng, s, a, scale);
    let mu = random_positive_distribution(rng, s);
    let rho = StateDistribution::new(random_simplex(rng, s)).expect("valid distribution");
    MdpCase { mdp, theta, mu, rho }
}

/// A point within Euclidean distance one of `theta`.
fn nearby<R: Rng>(rng: &mut R, theta: &PolicyLogits) -> PolicyLogits {
    let m = theta.matrix();
    let dir = DMatrix::from_fn(m.nrows(), m.ncols(), |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    let n = dir.norm();
    let radius: f64 = rng.random_range(0.0..=1.0);
    let step = if n > 0.0 { dir * (radius / n) } else { dir };
    PolicyLogits::new(m + step).expect("finite logits")
}

fn mdp_context(c: &MdpCase) -> Value {
    json!({"s": c.mdp.num_states(), "a": c.mdp.num_actions(), "gamma": c.mdp.gamma()})
}

/// Bandit gradient domination on `trials` instances and its MDP form on
/// `⌈trials/5⌉` instances.
pub fn lojasiewicz_suite(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = par_trials(trials, seed, 0, |rng| {
        let (r, th) = random_bandit_case(rng, 10);
        Ok(vec![lojasiewicz_bandit(&r, &th)?])
    })?;
    out.extend(par_trials(trials.div_ceil(5), seed, 1, |rng| {
        let c = random_mdp_case(rng, 4, 4, &[0.5, 0.9]);
        Ok(vec![lojasiewicz_mdp(&c.mdp, &c.theta, &c.mu, &c.rho)?])
    })?);
    Ok(out)
}

/// Reversed inequality on bandits and MDPs; instances with ties are redrawn.
pub fn reversed_suite(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = par_trials(trials, seed, 2, |rng| loop {
        let (r, th) = random_bandit_case(rng, 10);
        match reversed_lojasiewicz_bandit(&r, &th) {
            Err(Error::Degenerate(_)) => continue,
            other => return Ok(vec![other?]),
        }
    })?;
    out.extend(par_trials(trials.div_ceil(5), seed, 3, |rng| loop {
        let c = random_mdp_case(rng, 4, 4, &[0.5, 0.9]);
        match reversed_lojasiewicz_mdp(&c.mdp, &c.theta, &c.mu) {
            Err(Error::Degenerate(_)) => continue,
            other => return Ok(vec![other?]),
        }
    })?);
    Ok(out)
}

/// Regularized gradient domination (degree one half) on bandits and MDPs.
pub fn entropy_lojasiewicz_suite(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = par_trials(trials, seed, 4, |rng| {
        let (r, th) = random_bandit_case(rng, 10);
        let tau = SUITE_TEMPERATURES[rng.random_range(0..SUITE_TEMPERATURES.len())];
        let mdp = TabularMdp::bandit(&r)?;
        let u = StateDistribution::uniform(1);
        Ok(vec![entropy_lojasiewicz(&mdp, &th, &u, &u, tau)?])
    })?;
    out.extend(par_trials(trials.div_ceil(5), seed, 5, |rng| {
        let c = random_mdp_case(rng, 4, 4, &[0.5, 0.9]);
        let tau = SUITE_TEMPERATURES[rng.random_range(0..SUITE_TEMPERATURES.len())];
        Ok(vec![entropy_lojasiewicz(&c.mdp, &c.theta, &c.mu, &c.rho, tau)?])
    })?);
    Ok(out)
}

/// `trials` bandit pairs at `β = 5/2`, `⌈trials/10⌉` MDP pairs at
/// `β = 8/(1 − γ)³` with `γ = 0.9` and `⌈trials/10⌉` entropy-rate pairs at
/// `β = (4 + 8 log A)/(1 − γ)³`.
pub fn smoothness_suite(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = par_trials(trials, seed, 6, |rng| {
        let (r, th) = random_bandit_case(rng, 10);
        let th2 = nearby(rng, &th);
        Ok(vec![smoothness_witness(
            "smoothness_bandit",
            |t| Ok(simplex::softmax(&t.row(0)).iter().zip(&r).map(|(p, x)| p * x).sum()),
            |t| bandit_pg_gradient(&r, t),
            &th,
            &th2,
            2.5,
            json!({"k": r.len()}),
        )?])
    })?;
    out.extend(par_trials(trials.div_ceil(10), seed, 7, |rng| {
        let c = random_mdp_case(rng, 4, 4, &[0.9]);
        let th2 = nearby(rng, &c.theta);
        let beta = 8.0 / (1.0 - c.mdp.gamma()).powi(3);
        Ok(vec![smoothness_witness(
            "smoothness_mdp",
            |t| value_objective(&c.mdp, t, &c.mu),
            |t| mdp_pg_gradient(&c.mdp, t, &c.mu),
            &c.theta,
            &th2,
            beta,
            mdp_context(&c),
        )?])
    })?);
    out.extend(par_trials(trials.div_ceil(10), seed, 8, |rng| {
        let c = random_mdp_case(rng, 4, 4, &[0.5, 0.9]);
        let th2 = nearby(rng, &c.theta);
        let a = c.mdp.num_actions() as f64;
        let beta = (4.0 + 8.0 * a.ln()) / (1.0 - c.mdp.gamma()).powi(3);
        Ok(vec![smoothness_witness(
            "smoothness_entropy_rate",
            |t| entropy_rate_objective(&c.mdp, t, &c.mu),
            |t| entropy_rate_gradient(&c.mdp, t, &c.mu),
            &c.theta,
            &th2,
            beta,
            mdp_context(&c),
        )?])
    })?);
    Ok(out)
}

/// Spectrum of `H(π)` and norm decay on centered vectors, per random `π`.
pub fn spectrum_suite(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    par_trials(trials, seed, 9, |rng| {
        let k = rng.random_range(2..=10);
        let scale = logit_scale(rng);
        let pi = simplex::softmax(&random_logits(rng, 1, k, scale).row(0));
        let x: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        spectrum_checks(&pi, &x)
    })
}

/// The four spectrum and norm-decay reports for one `π` and test vector `x`.
pub fn spectrum_checks(pi: &[f64], x: &[f64]) -> Result<Vec<CheckReport>> {
    let k = pi.len();
    let h = h_matrix(pi)?;
    let mut lambda: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    lambda.sort_by(f64::total_cmp);
    let mut sorted = pi.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ctx = json!({"k": k});
    let interlace =
        (1..k).map(|i| (lambda[i] - sorted[i - 1]).min(sorted[i] - lambda[i])).fold(f64::INFINITY, f64::min);

    let y = simplex::center(x);
    let yv = nalgebra::DVector::from_vec(y.clone());
    let hy = &h * &yv;
    let ny = yv.norm();
    let min_pi = sorted[0];
    let rest = (&yv - &hy).norm();
    Ok(vec![
        CheckReport::equal("spectrum_zero_eigenvalue", lambda[0], 0.0, SPECTRUM_TOL, ctx.clone()),
        CheckReport::geq("spectrum_interlacing", interlace, 0.0, SPECTRUM_TOL, ctx.clone()),
        CheckReport::geq("norm_decay_lower", hy.norm(), min_pi * ny, BANDIT_TOL, ctx.clone()),
        CheckReport::geq("norm_decay_upper", (1.0 - min_pi) * ny, rest, BANDIT_TOL, ctx),
    ])
}

/// Plain and regularized gradients against central differences on random
/// MDPs with `S, A ≤ 5` and `γ ∈ {0, 0.5, 0.9}`; one report per instance
/// holding the larger of the two relative errors.
pub fn gradcheck_suite(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    par_trials(trials, seed, 10, |rng| {
        let c = random_mdp_case(rng, 5, 5, &[0.0, 0.5, 0.9]);
        let tau = SUITE_TEMPERATURES[rng.random_range(0..SUITE_TEMPERATURES.len())];
        let plain = mdp_pg_gradient(&c.mdp, &c.theta, &c.mu)?;
        let fd_plain = finite_difference_gradient(|t| value_objective(&c.mdp, t, &c.mu), &c.theta, DEFAULT_FD_STEP)?;
        let soft = mdp_entropy_gradient(&c.mdp, &c.theta, &c.mu, tau)?;
        let fd_soft =
            finite_difference_gradient(|t| soft_value_objective(&c.mdp, t, &c.mu, tau), &c.theta, DEFAULT_FD_STEP)?;
        let e_plain = plain.relative_error(&fd_plain)?;
        let e_soft = soft.relative_error(&fd_soft)?;
        let mut ctx = mdp_context(&c);
        ctx["tau"] = tau.into();
        ctx["error_plain"] = e_plain.into();
        ctx["error_entropy"] = e_soft.into();
        Ok(vec![CheckReport::geq("gradcheck", GRADCHECK_TOL, e_plain.max(e_soft), 0.0, ctx)])
    })
}

/// Value identities on random MDPs and the two logit inequalities on random
/// logit pairs.
pub fn identities_suite(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    par_trials(trials, seed, 11, |rng| {
        let c = random_mdp_case(rng, 4, 4, &[0.5, 0.9]);
        let tau = SUITE_TEMPERATURES[rng.random_range(0..SUITE_TEMPERATURES.len())];
        let scale = logit_scale(rng);
        let other = random_logits(rng, c.mdp.num_states(), c.mdp.num_actions(), scale);
        let mut out = value_identities(&c.mdp, &c.theta, &other, &c.rho, tau)?;
        let k = rng.random_range(2..=10);
        let s1 = logit_scale(rng);
        let s2 = logit_scale(rng);
        let a = random_logits(rng, 1, k, s1).row(0);
        let b = random_logits(rng, 1, k, s2).row(0);
        out.extend(logit_inequalities(&a, &b));
        Ok(out)
    })
}

/// `KL(π_θ ‖ π_θ′) ≤ ½‖θ′ − θ − c1‖∞²` and `‖π_θ − π_θ′‖₁ ≤ ‖θ′ − θ − c1‖∞`
/// with `c` the mean of `θ′ − θ`.
pub fn logit_inequalities(theta: &[f64], theta_prime: &[f64]) -> Vec<CheckReport> {
    let diff: Vec<f64> = theta_prime.iter().zip(theta).map(|(a, b)| a - b).collect();
    let gap = simplex::norm_inf(&simplex::center(&diff));
    let kl = simplex::kl_from_logits(theta, theta_prime);
    let p = simplex::softmax(theta);
    let q = simplex::softmax(theta_prime);
    let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
    let ctx = json!({"k": theta.len()});
    vec![
        CheckReport::geq("kl_logit", 0.5 * gap * gap, kl, BANDIT_TOL, ctx.clone()),
        CheckReport::geq("policy_logit", gap, l1, BANDIT_TOL, ctx),
    ]
}

/// Performance difference, value sub-optimality, soft sub-optimality (direct
/// against the KL form), `Ṽ = V + τℍ`, and agreement of the two forms of the
/// regularized gradient.
pub fn value_identities(
    mdp: &TabularMdp,
    theta: &PolicyLogits,
    other: &PolicyLogits,
    rho: &StateDistribution,
    tau: f64,
) -> Result<Vec<CheckReport>> {
    let gamma = mdp.gamma();
    let scale = 1.0 / (1.0 - gamma);
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let ctx = json!({"s": s_n, "a": a_n, "gamma": gamma, "tau": tau});
    let pi = softmax_policy(theta)?;
    let pi2 = softmax_policy(other)?;
    let vb = policy_values(mdp, &pi, rho)?;
    let vb2 = policy_values(mdp, &pi2, rho)?;

    let pd_rhs = scale
        * (0..s_n)
            .map(|s| vb2.d.as_slice()[s] * (0..a_n).map(|a| pi2.prob(s, a) * vb.adv[(s, a)]).sum::<f64>())
            .sum::<f64>();
    let pd = CheckReport::equal(
        "performance_difference",
        vb2.value_at(rho) - vb.value_at(rho),
        pd_rhs,
        SOLVE_TOL,
        ctx.clone(),
    );

    let sol = solve_optimal(mdp, DEFAULT_SOLVER_TOL)?;
    let pi_star = sol.policy();
    let vs_rhs = scale
        * (0..s_n)
            .map(|s| {
                vb.d.as_slice()[s]
                    * (0..a_n).map(|a| (pi_star.prob(s, a) - pi.prob(s, a)) * sol.q_star[(s, a)]).sum::<f64>()
            })
            .sum::<f64>();
    let vs =
        CheckReport::equal("value_suboptimality", sol.value_at(rho) - vb.value_at(rho), vs_rhs, SOLVE_TOL, ctx.clone());

    let (soft_star, soft_star_values) = solve_soft_optimal(mdp, tau, 1e-12, rho)?;
    let soft = soft_policy_values(mdp, &pi, rho, tau)?;
    let log_pi = theta.log_policy();
    let kl_rhs = scale
        * tau
        * (0..s_n)
            .map(|s| {
                vb.d.as_slice()[s]
                    * (0..a_n).map(|a| pi.prob(s, a) * (log_pi[(s, a)] - soft_star.prob(s, a).ln())).sum::<f64>()
            })
            .sum::<f64>();
    let ss = CheckReport::equal(
        "soft_suboptimality",
        soft_star_values.value_at(rho) - soft.value_at(rho),
        kl_rhs,
        SOLVE_TOL,
        ctx.clone(),
    );

    let split = CheckReport::equal(
        "soft_value_split",
        soft.value_at(rho),
        vb.value_at(rho) + tau * discounted_entropy(mdp, &pi, rho)?,
        SOLVE_TOL,
        ctx.clone(),
    );

    let g = mdp_entropy_gradient(mdp, theta, rho, tau)?;
    let d = discounted_state_distribution(mdp, &pi, rho)?;
    let mut alt = DMatrix::zeros(s_n, a_n);
    for s in 0..s_n {
        let x: Vec<f64> = (0..a_n).map(|a| soft.q_soft[(s, a)] - tau * log_pi[(s, a)]).collect();
        let mut hx = vec![0.0; a_n];
        simplex::h_apply(&pi.row(s), &x, &mut hx);
        for a in 0..a_n {
            alt[(s, a)] = scale * d.as_slice()[s] * hx[a];
        }
    }
    let err = g.relative_error(&GradientTable::new(alt))?;
    let forms = CheckReport::geq("entropy_gradient_forms", SOLVE_TOL, err, 0.0, ctx);

    Ok(vec![pd, vs, ss, split, forms])
}

/// Degree separation: the plain objective violates degree `ξ = 0.1` at
/// `ε = 1e−6` on rewards `(0.6, 0.4, 0.2)`, degree zero holds along the probe
/// grid, and the regularized objective (`τ = 0.2`) satisfies degree `1/2` on
/// the grid and on `trials` random instances.
pub fn degree_suite(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let r = [0.6, 0.4, 0.2];
    let tau = 0.2;
    let plain = degree_probe_point(&r, 0.0, 0.1, 1e-6, DegreeMode::Plain)?;
    let mut out = vec![CheckReport::geq("degree_plain_violated", plain.rhs, plain.lhs, 0.0, plain.context.clone())];
    out.extend(degree_probe(&r, 0.0, 0.0, 13, DegreeMode::Plain)?);
    out.extend(degree_probe(&r, tau, 0.5, 13, DegreeMode::Entropy)?);
    out.extend(par_trials(trials, seed, 12, |rng| {
        let (r, th) = random_bandit_case(rng, 10);
        Ok(vec![degree_check(&r, &th, tau, 0.5, DegreeMode::Entropy)?])
    })?);
    Ok(out)
}
