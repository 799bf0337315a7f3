//! Transmission delays and the admissible delay budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::Trajectory;
use crate::sim::{ControlAffineSystem, EventLog};
use crate::trigger::{kappa_threshold, quadratic_threshold, TriggerError, TriggerPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("invalid delay {0}: delays must be finite and nonnegative")]
    InvalidDelay(f64),
    #[error("empty delay sequence")]
    EmptySequence,
    #[error("Lambert W is evaluated on nonnegative reals only, got {0}")]
    NegativeArgument(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("eps_bar_m = {eps_bar_m} is smaller than eps_bar = {eps_bar}")]
    Ordering { eps_bar: f64, eps_bar_m: f64 },
    #[error("no delay budget for the {0} trigger")]
    UnsupportedPolicy(&'static str),
    #[error("no events to measure")]
    NoEvents,
    #[error(transparent)]
    Trigger(#[from] TriggerError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum DelayModel {
    #[default]
    None,
    Constant(f64),
    /// `Δ_k` for the k-th event; the last entry repeats once exhausted.
    Sequence(Vec<f64>),
    /// Uniform on `[0, max]` from a seeded ChaCha stream.
    RandomBounded {
        max: f64,
        seed: u64,
    },
}

fn valid_delay(d: f64) -> Result<(), DelayError> {
    if d >= 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(DelayError::InvalidDelay(d))
    }
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), DelayError> {
        match self {
            DelayModel::None => Ok(()),
            DelayModel::Constant(d) => valid_delay(*d),
            DelayModel::Sequence(v) if v.is_empty() => Err(DelayError::EmptySequence),
            DelayModel::Sequence(v) => v.iter().try_for_each(|d| valid_delay(*d)),
            DelayModel::RandomBounded { max, .. } => valid_delay(*max),
        }
    }

    pub fn sampler(&self) -> DelaySampler {
        let rng = match self {
            DelayModel::RandomBounded { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        DelaySampler { model: self.clone(), index: 0, rng }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DelayModel::None => "none",
            DelayModel::Constant(_) => "constant",
            DelayModel::Sequence(_) => "sequence",
            DelayModel::RandomBounded { .. } => "random",
        }
    }
}

/// Stateful stream of per-event delays.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    model: DelayModel,
    index: usize,
    rng: Option<ChaCha8Rng>,
}

impl DelaySampler {
    pub fn next_delay(&mut self) -> f64 {
        let k = self.index;
        self.index += 1;
        match &self.model {
            DelayModel::None => 0.0,
            DelayModel::Constant(d) => *d,
            DelayModel::Sequence(v) => v[k.min(v.len() - 1)],
            DelayModel::RandomBounded { max, .. } => {
                let rng = self.rng.as_mut().expect("random model carries a generator");
                rng.random_range(0.0..=*max)
            }
        }
    }
}

/// Principal branch of the Lambert W function on `[0, ∞)`.
pub fn lambert_w0(x: f64) -> Result<f64, DelayError> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(DelayError::NegativeArgument(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut w = x.ln_1p();
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-16 * w.abs().max(1.0) {
            break;
        }
    }
    Ok(w)
}

/// Deviation threshold `h(ε)` of a state-deviation trigger for a frozen β.
pub fn h_of_eps(policy: &TriggerPolicy, beta: f64) -> Result<f64, DelayError> {
    match *policy {
        TriggerPolicy::Quadratic { alpha, eps1 } => Ok(quadratic_threshold(alpha, beta, eps1)?),
        TriggerPolicy::Kappa { kappa, eps1 } => Ok(kappa_threshold(kappa, eps1)?),
        _ => Err(DelayError::UnsupportedPolicy(policy.name())),
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<(), DelayError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(DelayError::NonPositive { name, value })
    }
}

/// Solves `dw̃/dr = 1/(rl + e^{lw̃}‖p(w̃ + t_prev)‖)`, `w̃(0) = 0`, with
/// RK4 steps of `10⁻⁴·r`.
pub fn w_tilde<P>(r: f64, l: f64, p: P, t_prev: f64) -> Result<f64, DelayError>
where
    P: Fn(f64) -> f64,
{
    require_positive("l", l)?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(DelayError::NegativeArgument(r));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let rhs = |rho: f64, w: f64| -> Result<f64, DelayError> {
        let pv = p(w + t_prev);
        require_positive("p", pv)?;
        Ok(1.0 / (rho * l + (l * w).exp() * pv))
    };
    let steps = 10_000;
    let dr = r / steps as f64;
    let mut w = 0.0;
    for k in 0..steps {
        let rho = k as f64 * dr;
        let k1 = rhs(rho, w)?;
        let k2 = rhs(rho + 0.5 * dr, w + 0.5 * dr * k1)?;
        let k3 = rhs(rho + 0.5 * dr, w + 0.5 * dr * k2)?;
        let k4 = rhs(rho + dr, w + dr * k3)?;
        w += dr / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(w)
}

/// `w̃(r) = W(lr/p)/l` for constant `p`.
pub fn w_tilde_constant(r: f64, l: f64, p: f64) -> Result<f64, DelayError> {
    require_positive("l", l)?;
    require_positive("p", p)?;
    if !(r >= 0.0) {
        return Err(DelayError::NegativeArgument(r));
    }
    Ok(lambert_w0(l * r / p)? / l)
}

/// Bound on `Δ_k + Δ_{k−1}`: `W(lε̄_m/p_m)/(lε̄_m)·ε̄`.
pub fn delay_budget(l: f64, p_m: f64, eps_bar: f64, eps_bar_m: f64) -> Result<f64, DelayError> {
    require_positive("l", l)?;
    require_positive("p_m", p_m)?;
    require_positive("eps_bar", eps_bar)?;
    if eps_bar_m < eps_bar {
        return Err(DelayError::Ordering { eps_bar, eps_bar_m });
    }
    let z = l * eps_bar_m;
    Ok(lambert_w0(z / p_m)? / z * eps_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayBudget {
    pub l: f64,
    pub p_m: f64,
    pub eps_bar: f64,
    pub eps_bar_m: f64,
    pub budget: f64,
    pub max_observed_delay_pair: f64,
    pub utilization: f64,
    pub violated: bool,
}

/// Measures `l`, `p_m` and `ε̄` over an event-triggered run and evaluates
/// the budget. `l = max_k (L_f⁰ + Σ L_fⁱ|u_{k,i}|)`, `p_m` is the largest
/// `‖f₀(s, x_k) + Σ fᵢ(s, x_k)u_{k,i}‖` over each inter-event window, and
/// `ε̄ = ε̄_m` is the smallest threshold used.
pub fn measure_budget(
    sys: &ControlAffineSystem,
    policy: &TriggerPolicy,
    evt: &Trajectory,
    log: &EventLog,
) -> Result<DelayBudget, DelayError> {
    if log.events.is_empty() {
        return Err(DelayError::NoEvents);
    }
    let mut l = 0.0_f64;
    let mut eps_bar = f64::INFINITY;
    let mut p_m = 0.0_f64;
    let times = evt.times();
    let mut j = 0;
    for (k, e) in log.events.iter().enumerate() {
        let lk = sys.drift_lipschitz()
            + (0..sys.input_count()).map(|i| sys.input_lipschitz(i) * e.held_control[i].abs()).sum::<f64>();
        l = l.max(lk);
        eps_bar = eps_bar.min(h_of_eps(policy, e.beta)?);
        let end = log.events.get(k + 1).map_or(evt.end(), |n| n.t);
        while j < times.len() && times[j] < e.t {
            j += 1;
        }
        let mut jj = j;
        while jj < times.len() && times[jj] <= end {
            let p = sys.closed_loop(times[jj], &e.sampled_state, &e.held_control).norm();
            p_m = p_m.max(p);
            jj += 1;
        }
    }
    let budget = delay_budget(l, p_m, eps_bar, eps_bar)?;
    let pair = log.max_delay_pair();
    Ok(DelayBudget {
        l,
        p_m,
        eps_bar,
        eps_bar_m: eps_bar,
        budget,
        max_observed_delay_pair: pair,
        utilization: pair / budget,
        violated: pair > budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bisect_w(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, x.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(lambert_w0(std::f64::consts::E).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lambert_w0(1.0).unwrap(), 0.567_143_290_409_783_8, epsilon = 1e-15);
        assert_abs_diff_eq!(lambert_w0(1.0).unwrap(), bisect_w(1.0), epsilon = 1e-14);
        assert!(lambert_w0(-0.1).is_err());
    }

    #[test]
    fn w_tilde_examples() {
        assert_eq!(w_tilde(0.0, 1.0, |_| 1.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(w_tilde_constant(std::f64::consts::E, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-14);
        let closed = w_tilde_constant(1.0, 0.5, 2.0).unwrap();
        assert_abs_diff_eq!(closed, 2.0 * bisect_w(0.25), epsilon = 1e-12);
        assert_abs_diff_eq!(closed, 0.407_777, epsilon = 1e-6);
        assert_abs_diff_eq!(w_tilde(1.0, 0.5, |_| 2.0, 3.0).unwrap(), closed, epsilon = 1e-10);
        assert!(w_tilde(1.0, 0.0, |_| 1.0, 0.0).is_err());
        assert!(w_tilde(1.0, 1.0, |_| 0.0, 0.0).is_err());
    }

    #[test]
    fn budget_examples() {
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(delay_budget(1.0, 1.0, e, e).unwrap(), 1.0, epsilon = 1e-14);
        assert!(delay_budget(1.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn h_dispatch() {
        let q = TriggerPolicy::Quadratic { alpha: 1.0, eps1: 1.0 };
        assert_abs_diff_eq!(h_of_eps(&q, 1.0).unwrap(), 0.2, epsilon = 1e-15);
        let k = TriggerPolicy::Kappa { kappa: 2.0, eps1: 0.1 };
        assert_abs_diff_eq!(h_of_eps(&k, 0.0).unwrap(), 0.05, epsilon = 1e-15);
        let d = TriggerPolicy::Delta { eps1: 0.1 };
        assert_eq!(h_of_eps(&d, 1.0), Err(DelayError::UnsupportedPolicy("delta")));
    }

    #[test]
    fn samplers() {
        let mut s = DelayModel::Sequence(vec![0.1, 0.2]).sampler();
        let v: Vec<f64> = (0..4).map(|_| s.next_delay()).collect();
        assert_eq!(v, vec![0.1, 0.2, 0.2, 0.2]);
        let model = DelayModel::RandomBounded { max: 0.5, seed: 7 };
        let a: Vec<f64> = {
            let mut s = model.sampler();
            (0..50).map(|_| s.next_delay()).collect()
        };
        let b: Vec<f64> = {
            let mut s = model.sampler();
            (0..50).map(|_| s.next_delay()).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|d| (0.0..=0.5).contains(d)));
        assert!(DelayModel::Constant(-1.0).validate().is_err());
        assert!(DelayModel::Sequence(vec![]).validate().is_err());
        assert!(DelayModel::Constant(f64::NAN).validate().is_err());
    }
}
