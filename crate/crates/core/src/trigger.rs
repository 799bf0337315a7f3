//! Event-generation policies and the constants behind them.
//!
//! The δ-trigger fires when `g(t) = ε₁ − ‖δ(t)‖ ≤ 0`, where δ is the
//! disturbance injected into the error dynamics by holding the last sampled
//! control. The state-deviation triggers (quadratic and κ) fire on
//! `‖xₑ(t) − xₑ(t_k)‖` instead and are sufficient for `‖δ‖ ≤ ε₁`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::monitor::Trajectory;
use crate::sim::{ControlAffineSystem, FeedbackController};

/// Closed-loop Jacobian samples taken along the nominal trajectory.
pub const JACOBIAN_SAMPLES: usize = 50;
/// Central-difference step for the closed-loop Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Eigenvalues with real part at or above this are treated as not stable.
pub const STABILITY_MARGIN: f64 = -1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriggerError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("invalid Lyapunov constants: {0}")]
    InvalidConstants(String),
    #[error("closed loop not exponentially stable at t = {t}: eigenvalue real part {real_part}")]
    NotExponentiallyStable { t: f64, real_part: f64 },
    #[error("Lyapunov equation is singular")]
    SingularLyapunov,
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
}

fn positive(name: &'static str, value: f64) -> Result<f64, TriggerError> {
    if value > 0.0 && !value.is_nan() {
        Ok(value)
    } else {
        Err(TriggerError::NonPositive { name, value })
    }
}

/// Quadratic-sandwich and decay constants of a Lyapunov function for the
/// error dynamics: `c₁‖e‖² ≤ V ≤ c₂‖e‖²`, `V̇ ≤ −c₃‖e‖²`, `‖∂V/∂e‖ ≤ c₄‖e‖`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LyapunovConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl LyapunovConstants {
    pub fn new(c1: f64, c2: f64, c3: f64, c4: f64) -> Result<Self, TriggerError> {
        let c = Self { c1, c2, c3, c4 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), TriggerError> {
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3), ("c4", self.c4)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(TriggerError::InvalidConstants(format!("{name} = {v} is not positive")));
            }
        }
        if self.c1 > self.c2 {
            return Err(TriggerError::InvalidConstants(format!("c1 = {} exceeds c2 = {}", self.c1, self.c2)));
        }
        Ok(())
    }

    /// Steady-state gain `c₂c₄/(c₁c₃)` from `sup‖δ‖` to `sup‖e‖`.
    pub fn gain(&self) -> f64 {
        self.c2 * self.c4 / (self.c1 * self.c3)
    }
}

/// `ε₁ = (c₁c₃)/(c₂c₄)·ε`: keeping `‖δ‖ ≤ ε₁` keeps `‖e‖ ≤ ε`.
pub fn epsilon1(c: &LyapunovConstants, eps: f64) -> Result<f64, TriggerError> {
    c.validate()?;
    positive("eps", eps)?;
    Ok(c.c1 * c.c3 / (c.c2 * c.c4) * eps)
}

/// `δ = Σᵢ fᵢ(t, x_now)(γᵢ(x_held) − γᵢ(x_now))`.
pub fn delta_of(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    mode: usize,
    t: f64,
    x_now: &DVector<f64>,
    x_held: &DVector<f64>,
) -> DVector<f64> {
    let held = ctrl.control(mode, x_held);
    delta_with_control(sys, ctrl, mode, t, x_now, &held)
}

/// δ for an explicitly held control vector.
pub fn delta_with_control(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    mode: usize,
    t: f64,
    x_now: &DVector<f64>,
    u_held: &DVector<f64>,
) -> DVector<f64> {
    let now = ctrl.control(mode, x_now);
    let mut delta = DVector::zeros(sys.dim());
    for i in 0..sys.input_count() {
        let diff = u_held[i] - now[i];
        if diff != 0.0 {
            delta += sys.input_field(i, t, x_now) * diff;
        }
    }
    delta
}

/// `g = ε₁ − ‖δ‖`; an event fires when `g ≤ 0`.
pub fn g_value(delta_norm: f64, eps1: f64) -> f64 {
    eps1 - delta_norm
}

/// `βε₁/(β² + 4αε₁)`: deviations below this keep `α d² + β d ≤ ε₁`.
pub fn quadratic_threshold(alpha: f64, beta: f64, eps1: f64) -> Result<f64, TriggerError> {
    if !(alpha >= 0.0) {
        return Err(TriggerError::NonPositive { name: "alpha", value: alpha });
    }
    positive("beta", beta)?;
    positive("eps1", eps1)?;
    Ok(beta * eps1 / (beta * beta + 4.0 * alpha * eps1))
}

/// `ε₁/κ`.
pub fn kappa_threshold(kappa: f64, eps1: f64) -> Result<f64, TriggerError> {
    positive("kappa", kappa)?;
    positive("eps1", eps1)?;
    Ok(eps1 / kappa)
}

/// `α = Σᵢ L_γⁱ L_fⁱ` over the input channels.
pub fn alpha_of(sys: &ControlAffineSystem, ctrl: &dyn FeedbackController) -> f64 {
    let lg = ctrl.lipschitz();
    (0..sys.input_count()).map(|i| lg[i] * sys.input_lipschitz(i)).sum()
}

/// `β(t) = Σᵢ L_γⁱ ‖fᵢ(t, x_k)‖` at the sampled state.
pub fn beta_of(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    t: f64,
    x_sample: &DVector<f64>,
) -> f64 {
    let lg = ctrl.lipschitz();
    (0..sys.input_count()).map(|i| lg[i] * sys.input_field(i, t, x_sample).norm()).sum()
}

/// `κ = maxᵢ L_γⁱ · sup_{x∈Ω} Σᵢ ‖fᵢ(t, x)‖` with the sup taken over a
/// uniform grid of the box Ω (corners included).
pub fn kappa_over_box(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    t: f64,
    lower: &[f64],
    upper: &[f64],
    points_per_axis: usize,
) -> Result<f64, TriggerError> {
    let n = sys.dim();
    if lower.len() != n || upper.len() != n {
        return Err(TriggerError::InvalidBox(format!("bounds must have length {n}")));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(TriggerError::InvalidBox("lower bound exceeds upper bound".into()));
    }
    let per_axis = points_per_axis.max(2);
    let max_lg = ctrl.lipschitz().iter().copied().fold(0.0, f64::max);
    let mut idx = vec![0usize; n];
    let mut sup = 0.0_f64;
    loop {
        let x = DVector::from_iterator(
            n,
            (0..n).map(|d| {
                let s = idx[d] as f64 / (per_axis - 1) as f64;
                lower[d] + s * (upper[d] - lower[d])
            }),
        );
        let total: f64 = (0..sys.input_count()).map(|i| sys.input_field(i, t, &x).norm()).sum();
        sup = sup.max(total);
        let mut d = 0;
        loop {
            if d == n {
                return Ok(max_lg * sup);
            }
            idx[d] += 1;
            if idx[d] < per_axis {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Event-generation rule evaluated at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum TriggerPolicy {
    /// Fires when `‖δ‖ ≥ ε₁`.
    Delta {
        eps1: f64,
    },
    /// Fires when the deviation from the last sample reaches
    /// `βε₁/(β² + 4αε₁)`, with β frozen at the last event.
    Quadratic {
        alpha: f64,
        eps1: f64,
    },
    /// Fires when the deviation reaches `ε₁/κ`.
    Kappa {
        kappa: f64,
        eps1: f64,
    },
    EveryStep,
    Never,
}

impl TriggerPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            TriggerPolicy::Delta { .. } => "delta",
            TriggerPolicy::Quadratic { .. } => "quadratic",
            TriggerPolicy::Kappa { .. } => "kappa",
            TriggerPolicy::EveryStep => "every-step",
            TriggerPolicy::Never => "never",
        }
    }

    /// Deviation threshold of the state-deviation policies for a frozen β.
    pub fn deviation_threshold(&self, beta: f64) -> Option<f64> {
        match *self {
            TriggerPolicy::Quadratic { alpha, eps1 } => Some(if beta > 0.0 {
                beta * eps1 / (beta * beta + 4.0 * alpha * eps1)
            } else if alpha > 0.0 {
                (eps1 / alpha).sqrt()
            } else {
                f64::INFINITY
            }),
            TriggerPolicy::Kappa { kappa, eps1 } => Some(eps1 / kappa),
            _ => None,
        }
    }

    /// Trigger margin; the policy fires when it is `≤ 0`.
    pub fn margin(&self, delta_norm: f64, deviation: f64, beta: f64) -> f64 {
        match self {
            TriggerPolicy::Delta { eps1 } => g_value(delta_norm, *eps1),
            TriggerPolicy::Quadratic { .. } | TriggerPolicy::Kappa { .. } => {
                self.deviation_threshold(beta).unwrap() - deviation
            }
            TriggerPolicy::EveryStep => 0.0,
            TriggerPolicy::Never => f64::INFINITY,
        }
    }
}

/// Policy selector used by configs and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerKind {
    Delta,
    Quadratic,
    Kappa,
    EveryStep,
    Never,
}

impl TriggerKind {
    pub const ALL: [TriggerKind; 5] = [
        TriggerKind::Delta,
        TriggerKind::Quadratic,
        TriggerKind::Kappa,
        TriggerKind::EveryStep,
        TriggerKind::Never,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TriggerKind::Delta => "delta",
            TriggerKind::Quadratic => "quadratic",
            TriggerKind::Kappa => "kappa",
            TriggerKind::EveryStep => "every-step",
            TriggerKind::Never => "never",
        }
    }
}

impl std::str::FromStr for TriggerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TriggerKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            format!("unknown trigger '{s}' (expected delta, quadratic, kappa, every-step or never)")
        })
    }
}

/// Sampled `‖δ‖` on a uniform grid. δ jumps at events, so each grid point
/// stores the value just before and just after any event there.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaHistory {
    pub step: f64,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

impl DeltaHistory {
    pub fn continuous(step: f64, values: Vec<f64>) -> Self {
        Self { step, before: values.clone(), after: values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorForecast {
    /// Bound at the final grid time.
    pub final_bound: f64,
    /// Largest bound over the grid.
    pub sup_bound: f64,
    /// Bound at every grid time.
    pub profile: Vec<f64>,
}

/// Convolution bound `(c₄/2c₁)∫ e^{−(t−s)c₃/2c₂}‖δ(s)‖ds`, trapezoidal on
/// the grid.
pub fn error_bound_forecast(c: &LyapunovConstants, history: &DeltaHistory) -> ErrorForecast {
    let n = history.before.len().min(history.after.len());
    let rate = c.c3 / (2.0 * c.c2);
    let gain = c.c4 / (2.0 * c.c1);
    let decay = (-rate * history.step).exp();
    let half = 0.5 * history.step;
    let mut integral = 0.0;
    let mut profile = Vec::with_capacity(n);
    if n > 0 {
        profile.push(0.0);
    }
    for j in 1..n {
        integral = decay * integral + half * (decay * history.after[j - 1] + history.before[j]);
        profile.push(gain * integral);
    }
    ErrorForecast {
        final_bound: profile.last().copied().unwrap_or(0.0),
        sup_bound: profile.iter().copied().fold(0.0, f64::max),
        profile,
    }
}

/// Solves `AᵀP + PA = −I` through the Kronecker form.
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<DMatrix<f64>, TriggerError> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, (-&eye).iter().copied());
    let sol = op.lu().solve(&rhs).ok_or(TriggerError::SingularLyapunov)?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Central-difference Jacobian of the closed loop `f₀ + Σ fᵢγᵢ`.
pub fn closed_loop_jacobian(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    mode: usize,
    t: f64,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let n = sys.dim();
    let field = |y: &DVector<f64>| sys.closed_loop(t, y, &ctrl.control(mode, y));
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += JACOBIAN_STEP;
        minus[j] -= JACOBIAN_STEP;
        let col = (field(&plus) - field(&minus)) / (2.0 * JACOBIAN_STEP);
        jac.set_column(j, &col);
    }
    jac
}

#[derive(Debug, Clone)]
pub struct ConstantsEstimate {
    pub constants: LyapunovConstants,
    pub sample_times: Vec<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub solutions: Vec<DMatrix<f64>>,
}

/// Envelope of frozen-time Lyapunov solutions: `c₁ = min λ_min(P)`,
/// `c₂ = max λ_max(P)`, `c₃ = 1`, `c₄ = 2c₂`.
pub fn constants_from_jacobians(
    times: &[f64],
    jacobians: &[DMatrix<f64>],
) -> Result<ConstantsEstimate, TriggerError> {
    if jacobians.is_empty() {
        return Err(TriggerError::InvalidConstants("no Jacobian samples".into()));
    }
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0_f64;
    let mut solutions = Vec::with_capacity(jacobians.len());
    for (&t, a) in times.iter().zip(jacobians) {
        let worst = a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if !(worst < STABILITY_MARGIN) {
            return Err(TriggerError::NotExponentiallyStable { t, real_part: worst });
        }
        let p = solve_lyapunov(a)?;
        let eig = p.clone().symmetric_eigen().eigenvalues;
        c1 = c1.min(eig.min());
        c2 = c2.max(eig.max());
        solutions.push(p);
    }
    let constants = LyapunovConstants::new(c1, c2, 1.0, 2.0 * c2)?;
    Ok(ConstantsEstimate {
        constants,
        sample_times: times.to_vec(),
        jacobians: jacobians.to_vec(),
        solutions,
    })
}

/// Frozen-time estimate of the converse-Lyapunov constants along a nominal
/// closed-loop trajectory.
pub fn estimate_constants(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    nominal: &Trajectory,
) -> Result<ConstantsEstimate, TriggerError> {
    let len = nominal.len();
    let picks: Vec<usize> = (0..JACOBIAN_SAMPLES)
        .map(|i| (i * (len - 1) + (JACOBIAN_SAMPLES - 1) / 2) / (JACOBIAN_SAMPLES - 1))
        .collect();
    let mut mode = 0;
    let mut next_pick = 0;
    let mut times = Vec::with_capacity(JACOBIAN_SAMPLES);
    let mut jacobians = Vec::with_capacity(JACOBIAN_SAMPLES);
    for (j, (t, x)) in nominal.times().iter().zip(nominal.states()).enumerate() {
        mode = ctrl.next_mode(mode, x);
        while next_pick < picks.len() && picks[next_pick] == j {
            times.push(*t);
            jacobians.push(closed_loop_jacobian(sys, ctrl, mode, *t, x));
            next_pick += 1;
        }
    }
    constants_from_jacobians(&times, &jacobians)
}
