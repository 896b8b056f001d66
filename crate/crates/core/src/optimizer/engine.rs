use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DMatrix;

use super::config::{ResolvedRun, RunConfig, FULL_RECORD_HORIZON};
use super::method::{default_entropy_eta, default_plain_eta, temperature_at, MethodKind, MethodSpec, SwitchPoint};
use super::trace::{IterationRecord, RunTrace};
use crate::error::{Error, Result};
use crate::gradients::{bandit_entropy_into, bandit_pg_into};
use crate::mdp::simplex::{self, kl_divergence};
use crate::mdp::{
    discounted_state_distribution, policy_values, soft_values_and_visitation, softmax_policy, solve_optimal,
    solve_soft_optimal, OptimalSolution, PolicyLogits, PolicyTable, StateDistribution, DEFAULT_SOLVER_TOL,
};

/// Accuracy of the soft-optimal reference policy used for `δ̃`.
const SOFT_REFERENCE_TOL: f64 = 1e-12;

/// Temperature and step-size bookkeeping, including the two-stage switch.
struct Schedule<'a> {
    method: &'a MethodSpec,
    delta_star: f64,
    eta_plain: f64,
    eta_entropy: f64,
    switch_t: Option<usize>,
}

impl<'a> Schedule<'a> {
    fn new(method: &'a MethodSpec, delta_star: f64, is_bandit: bool, gamma: f64, num_actions: usize) -> Self {
        let eta_plain = method.eta.fixed().unwrap_or_else(|| default_plain_eta(is_bandit, gamma));
        let eta_entropy = match method.tau {
            Some(tau) => method.eta.fixed().unwrap_or_else(|| default_entropy_eta(is_bandit, gamma, tau, num_actions)),
            None => eta_plain,
        };
        let switch_t = match (method.kind, method.t1) {
            (MethodKind::TwoStage, SwitchPoint::At(t1)) => Some(t1 + 1),
            _ => None,
        };
        Schedule { method, delta_star, eta_plain, eta_entropy, switch_t }
    }

    fn adaptive_pending(&self) -> bool {
        self.method.kind == MethodKind::TwoStage
            && matches!(self.method.t1, SwitchPoint::Named(_))
            && self.switch_t.is_none()
    }

    /// Called with `‖π_t − π_{t−1}‖₁` for `t ≥ 2`.
    fn observe_change(&mut self, t: usize, change: f64) {
        if self.adaptive_pending() && change < self.method.switch_tol {
            self.switch_t = Some(t);
        }
    }

    fn switched(&self, t: usize) -> bool {
        self.switch_t.is_some_and(|s| t >= s)
    }

    fn tau(&self, t: usize) -> Result<f64> {
        if self.method.kind == MethodKind::TwoStage && self.switched(t) {
            return Ok(0.0);
        }
        temperature_at(self.method, self.delta_star, t)
    }

    fn eta(&self, tau: f64) -> f64 {
        match self.method.kind {
            MethodKind::Decaying => 1.0 / tau,
            _ if tau > 0.0 => self.eta_entropy,
            _ => self.eta_plain,
        }
    }
}

struct Recorder {
    horizon: usize,
    stride: usize,
    last_t: usize,
    records: Vec<IterationRecord>,
    c_running: f64,
    c_after_switch: Option<f64>,
}

impl Recorder {
    fn new(cfg: &RunConfig) -> Self {
        Recorder {
            horizon: FULL_RECORD_HORIZON,
            stride: cfg.record_every,
            last_t: cfg.iterations,
            records: Vec::with_capacity(cfg.iterations.min(FULL_RECORD_HORIZON + 1024)),
            c_running: f64::INFINITY,
            c_after_switch: None,
        }
    }

    fn push(&mut self, rec: IterationRecord, switched: bool, force: bool) {
        self.c_running = self.c_running.min(rec.opt_prob);
        if switched {
            let c = self.c_after_switch.get_or_insert(f64::INFINITY);
            *c = c.min(rec.opt_prob);
        }
        let t = rec.t;
        if force || t <= self.horizon || t.is_multiple_of(self.stride) || t == self.last_t {
            self.records.push(rec);
        }
    }
}

fn check_finite(theta: &[f64], t: usize) -> Result<()> {
    if let Some(i) = theta.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { t, detail: format!("logit {i} became {}", theta[i]) });
    }
    Ok(())
}

/// Runs gradient ascent as configured and returns the trace.
pub fn run(config: &RunConfig) -> Result<RunTrace> {
    let start = Instant::now();
    let resolved = config.resolve()?;
    let sol = solve_optimal(&resolved.mdp, DEFAULT_SOLVER_TOL)?;
    let mut schedule = Schedule::new(
        &config.method,
        sol.delta_star,
        resolved.mdp.is_bandit(),
        resolved.mdp.gamma(),
        resolved.mdp.num_actions(),
    );
    // Surface schedule errors (for example a zero gap) before iterating.
    schedule.tau(1)?;
    let mut recorder = Recorder::new(config);
    let iterations_run = if resolved.mdp.is_bandit() {
        run_bandit(config, &resolved, &sol, &mut schedule, &mut recorder)?
    } else {
        run_mdp(config, &resolved, &sol, &mut schedule, &mut recorder)?
    };
    Ok(RunTrace {
        config: config.clone(),
        records: recorder.records,
        c_running: recorder.c_running,
        iterations_run,
        delta_star: sol.delta_star,
        switch_t: schedule.switch_t.filter(|&s| s <= iterations_run),
        c_after_switch: recorder.c_after_switch,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn run_bandit(
    cfg: &RunConfig,
    rr: &ResolvedRun,
    sol: &OptimalSolution,
    schedule: &mut Schedule,
    recorder: &mut Recorder,
) -> Result<usize> {
    let r = rr.mdp.bandit_rewards();
    let k = r.len();
    let r_max = sol.v_star[0];
    let opt_set = &sol.optimal_sets[0];
    let mut theta = rr.theta.row(0);
    let mut log_pi = vec![0.0; k];
    let mut pi = vec![0.0; k];
    let mut prev_pi = vec![0.0; k];
    let mut g = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    let mut zeta = vec![0.0; k];
    let mut soft_ref: Option<(f64, Vec<f64>)> = None;

    for t in 1..=cfg.iterations {
        simplex::log_softmax_into(&theta, &mut log_pi);
        for (p, lp) in pi.iter_mut().zip(&log_pi) {
            *p = lp.exp();
        }
        if t >= 2 {
            let change: f64 = pi.iter().zip(&prev_pi).map(|(a, b)| (a - b).abs()).sum();
            schedule.observe_change(t, change);
        }
        let tau = schedule.tau(t)?;

        let delta: f64 = pi.iter().zip(&r).map(|(p, ri)| p * (r_max - ri)).sum();
        let opt_prob: f64 = opt_set.iter().map(|&a| pi[a]).sum();
        let min_prob = pi.iter().copied().fold(f64::INFINITY, f64::min);

        let (soft_delta, zeta_norm) = if tau > 0.0 {
            if soft_ref.as_ref().is_none_or(|(t0, _)| *t0 != tau) {
                let scaled: Vec<f64> = r.iter().map(|x| x / tau).collect();
                soft_ref = Some((tau, simplex::log_softmax(&scaled)));
            }
            let log_star = &soft_ref.as_ref().expect("set above").1;
            let kl: f64 = pi.iter().zip(&log_pi).zip(log_star).map(|((p, lp), ls)| p * (lp - ls)).sum();
            for ((z, th), ri) in zeta.iter_mut().zip(&theta).zip(&r) {
                *z = tau * th - ri;
            }
            simplex::center_in_place(&mut zeta);
            bandit_entropy_into(&r, &log_pi, &pi, tau, &mut scratch, &mut g);
            (Some((tau * kl).max(0.0)), Some(simplex::norm2(&zeta)))
        } else {
            bandit_pg_into(&r, &pi, &mut g);
            (None, None)
        };

        let stop = cfg.stop_delta_below.is_some_and(|x| delta < x);
        recorder.push(
            IterationRecord {
                t,
                delta,
                soft_delta,
                opt_prob,
                min_prob,
                zeta_norm,
                grad_norm: simplex::norm2(&g),
                tau_t: tau,
            },
            schedule.switched(t),
            stop,
        );
        if stop || t == cfg.iterations {
            return Ok(t);
        }

        let eta = schedule.eta(tau);
        if cfg.method.kind == MethodKind::Decaying {
            let ratio = tau / schedule.tau(t + 1)?;
            for (th, gi) in theta.iter_mut().zip(&g) {
                *th = ratio * (*th + eta * gi);
            }
        } else {
            for (th, gi) in theta.iter_mut().zip(&g) {
                *th += eta * gi;
            }
        }
        check_finite(&theta, t + 1)?;
        std::mem::swap(&mut prev_pi, &mut pi);
    }
    Ok(cfg.iterations)
}

/// Soft-optimal reference `log π*_τ` per temperature.
struct SoftReference(HashMap<u64, DMatrix<f64>>);

impl SoftReference {
    fn log_policy(&mut self, rr: &ResolvedRun, tau: f64) -> Result<&DMatrix<f64>> {
        let key = tau.to_bits();
        match self.0.entry(key) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(e) => {
                let (pi, _) = solve_soft_optimal(&rr.mdp, tau, SOFT_REFERENCE_TOL, &rr.rho)?;
                Ok(e.insert(pi.matrix().map(f64::ln)))
            }
        }
    }
}

fn run_mdp(
    cfg: &RunConfig,
    rr: &ResolvedRun,
    sol: &OptimalSolution,
    schedule: &mut Schedule,
    recorder: &mut Recorder,
) -> Result<usize> {
    let mdp = &rr.mdp;
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let scale = 1.0 / (1.0 - mdp.gamma());
    let same_dist = rr.mu == rr.rho;
    let mut theta = rr.theta.matrix().clone();
    let mut prev_pi: Option<PolicyTable> = None;
    let mut soft_ref = SoftReference(HashMap::new());
    // V*(s) − Q*(s, a) ≥ 0.
    let regret = DMatrix::from_fn(s_n, a_n, |s, a| sol.v_star[s] - sol.q_star[(s, a)]);

    for t in 1..=cfg.iterations {
        let logits = PolicyLogits::new(theta.clone())?;
        let pi = softmax_policy(&logits)?;
        if let Some(prev) = &prev_pi {
            let change = (pi.matrix() - prev.matrix()).abs().sum();
            schedule.observe_change(t, change);
        }
        let tau = schedule.tau(t)?;

        let (adv, d_mu) = if tau > 0.0 {
            let (sb, d) = soft_values_and_visitation(mdp, &pi, &logits.log_policy(), &rr.mu, tau)?;
            (sb.adv_soft, d)
        } else {
            let vb = policy_values(mdp, &pi, &rr.mu)?;
            (vb.adv, vb.d)
        };
        let d_rho: StateDistribution =
            if same_dist { d_mu.clone() } else { discounted_state_distribution(mdp, &pi, &rr.rho)? };
        let g = DMatrix::from_fn(s_n, a_n, |s, a| scale * d_mu.as_slice()[s] * pi.prob(s, a) * adv[(s, a)]);

        let delta = scale
            * (0..s_n)
                .map(|s| d_rho.as_slice()[s] * (0..a_n).map(|a| pi.prob(s, a) * regret[(s, a)]).sum::<f64>())
                .sum::<f64>();
        let opt_prob = (0..s_n)
            .map(|s| sol.optimal_sets[s].iter().map(|&a| pi.prob(s, a)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let soft_delta = if tau > 0.0 {
            let log_star = soft_ref.log_policy(rr, tau)?;
            let kl = (0..s_n)
                .map(|s| {
                    let q: Vec<f64> = log_star.row(s).iter().map(|x| x.exp()).collect();
                    d_rho.as_slice()[s] * kl_divergence(&pi.row(s), &q)
                })
                .sum::<f64>();
            Some((scale * tau * kl).max(0.0))
        } else {
            None
        };

        let stop = cfg.stop_delta_below.is_some_and(|x| delta < x);
        recorder.push(
            IterationRecord {
                t,
                delta,
                soft_delta,
                opt_prob,
                min_prob: pi.min_prob(),
                zeta_norm: None,
                grad_norm: g.norm(),
                tau_t: tau,
            },
            schedule.switched(t),
            stop,
        );
        if stop || t == cfg.iterations {
            return Ok(t);
        }
        theta += g * schedule.eta(tau);
        check_finite(theta.as_slice(), t + 1)?;
        prev_pi = Some(pi);
    }
    Ok(cfg.iterations)
}
