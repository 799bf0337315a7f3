//! Control-affine systems, fixed-step RK4 integration, and lock-step
//! co-simulation of the ideal and event-triggered loops.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::delay::DelayModel;
use crate::monitor::{tube_distance, Trajectory};
use crate::trigger::{beta_of, delta_with_control, TriggerPolicy};

/// More events than this before the horizon is treated as Zeno behaviour.
pub const ZENO_LIMIT: usize = 1_000_000;

pub type VectorField = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),
    #[error("more than {limit} events before t = {t}")]
    ZenoSuspect { t: f64, limit: usize },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid delay model: {0}")]
    InvalidDelay(String),
}

/// `ẋ = f₀(t, x) + Σᵢ fᵢ(t, x) uᵢ`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    dim: usize,
    drift: VectorField,
    inputs: Vec<VectorField>,
    lipschitz: Vec<f64>,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("dim", &self.dim)
            .field("inputs", &self.inputs.len())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl ControlAffineSystem {
    /// `lipschitz` holds `L_f⁰, L_f¹, …, L_fᵐ`.
    pub fn new(
        dim: usize,
        drift: VectorField,
        inputs: Vec<VectorField>,
        lipschitz: Vec<f64>,
    ) -> Result<Self, SimError> {
        if dim == 0 {
            return Err(SimError::InvalidSystem("state dimension must be positive".into()));
        }
        if lipschitz.len() != inputs.len() + 1 {
            return Err(SimError::InvalidSystem(format!(
                "expected {} Lipschitz constants, got {}",
                inputs.len() + 1,
                lipschitz.len()
            )));
        }
        if lipschitz.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(SimError::InvalidSystem("Lipschitz constants must be finite and nonnegative".into()));
        }
        Ok(Self { dim, drift, inputs, lipschitz })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(t, x)
    }

    pub fn input_field(&self, i: usize, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.inputs[i])(t, x)
    }

    pub fn drift_lipschitz(&self) -> f64 {
        self.lipschitz[0]
    }

    pub fn input_lipschitz(&self, i: usize) -> f64 {
        self.lipschitz[i + 1]
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    /// Vector field under the input `u`.
    pub fn closed_loop(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dx = self.drift(t, x);
        for (i, field) in self.inputs.iter().enumerate() {
            if u[i] != 0.0 {
                dx += field(t, x) * u[i];
            }
        }
        dx
    }
}

/// State feedback `u = γ(mode, x)`. Modes let a controller sequence
/// sub-tasks; a mode change always forces an event.
pub trait FeedbackController: Send + Sync {
    fn input_count(&self) -> usize;

    /// `L_γ¹, …, L_γᵐ`.
    fn lipschitz(&self) -> &[f64];

    fn control(&self, mode: usize, x: &DVector<f64>) -> DVector<f64>;

    fn next_mode(&self, mode: usize, _x: &DVector<f64>) -> usize {
        mode
    }
}

pub type ControlLaw = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Single-mode controller from a closure.
#[derive(Clone)]
pub struct FnController {
    law: ControlLaw,
    lipschitz: Vec<f64>,
}

impl FnController {
    pub fn new(law: ControlLaw, lipschitz: Vec<f64>) -> Self {
        Self { law, lipschitz }
    }
}

impl FeedbackController for FnController {
    fn input_count(&self) -> usize {
        self.lipschitz.len()
    }

    fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    fn control(&self, _mode: usize, x: &DVector<f64>) -> DVector<f64> {
        (self.law)(x)
    }
}

/// Grid `t₀, t₀+h, …` ending exactly at `T` (the last step may be shorter).
pub fn time_grid(t0: f64, t_end: f64, h: f64) -> Result<Vec<f64>, SimError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(SimError::InvalidGrid(format!("step must be positive, got {h}")));
    }
    if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(SimError::InvalidGrid(format!("horizon [{t0}, {t_end}] is empty")));
    }
    let ratio = (t_end - t0) / h;
    let steps = if (ratio - ratio.round()).abs() < 1e-6 { ratio.round() } else { ratio.ceil() };
    if steps > 1e8 {
        return Err(SimError::InvalidGrid(format!("{steps} steps exceed the grid limit")));
    }
    let steps = (steps as usize).max(1);
    let mut times: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * h).collect();
    times.push(t_end);
    Ok(times)
}

/// One classical RK4 step of `ẋ = F(t, x)`.
pub fn rk4_step<F>(field: F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = field(t, x);
    let k2 = field(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = field(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = field(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<(), SimError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SimError::NonFiniteState(t))
    }
}

fn check_setup(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    x0: &DVector<f64>,
) -> Result<(), SimError> {
    if x0.len() != sys.dim() {
        return Err(SimError::DimensionMismatch { expected: sys.dim(), found: x0.len() });
    }
    if ctrl.input_count() != sys.input_count() {
        return Err(SimError::DimensionMismatch { expected: sys.input_count(), found: ctrl.input_count() });
    }
    check_finite(x0, 0.0)
}

fn to_trajectory(times: Vec<f64>, states: Vec<DVector<f64>>) -> Trajectory {
    Trajectory::new(times, states).expect("simulation grid is strictly increasing")
}

/// Continuous feedback loop `ẋ = f₀ + Σ fᵢγᵢ(x)`; the controller mode is
/// updated at grid points.
pub fn integrate_ideal(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    x0: &DVector<f64>,
    t0: f64,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, SimError> {
    check_setup(sys, ctrl, x0)?;
    let times = time_grid(t0, t_end, h)?;
    let mut states = Vec::with_capacity(times.len());
    let mut x = x0.clone();
    let mut mode = ctrl.next_mode(0, &x);
    states.push(x.clone());
    for w in times.windows(2) {
        let field = |t: f64, y: &DVector<f64>| sys.closed_loop(t, y, &ctrl.control(mode, y));
        x = rk4_step(field, w[0], &x, w[1] - w[0]);
        check_finite(&x, w[1])?;
        mode = ctrl.next_mode(mode, &x);
        states.push(x.clone());
    }
    Ok(to_trajectory(times, states))
}

/// One transmitted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub sampled_state: DVector<f64>,
    pub held_control: DVector<f64>,
    pub delay: f64,
    /// `t + delay`, pushed forward if needed so packets arrive in order.
    pub applied_at: f64,
    pub mode: usize,
    /// `β` frozen at this event.
    pub beta: f64,
}

/// Trigger quantities at one grid point. `before`/`after` refer to any
/// event fired at this point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub delta_before: f64,
    pub delta_after: f64,
    /// Trigger margin before the decision; the policy fires when `≤ 0`.
    pub margin: f64,
    /// `‖xₑ(t) − xₑ(t_k)‖` against the sample in force before the decision.
    pub deviation: f64,
    /// `Σ L_γⁱ ‖fᵢ(t, xₑ(t_k))‖` for the same sample.
    pub beta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub trace: Vec<TraceSample>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.t).collect()
    }

    pub fn inter_event_times(&self) -> Vec<f64> {
        self.events.windows(2).map(|w| w[1].t - w[0].t).collect()
    }

    /// Largest `Δ_k + Δ_{k−1}`, or the single delay when there is one event.
    pub fn max_delay_pair(&self) -> f64 {
        let pairs = self.events.windows(2).map(|w| w[0].delay + w[1].delay);
        match self.events.len() {
            0 => 0.0,
            1 => self.events[0].delay,
            _ => pairs.fold(0.0, f64::max),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let (m, n) = match self.events.first() {
            Some(e) => (e.held_control.len(), e.sampled_state.len()),
            None => (0, 0),
        };
        let mut header = vec!["k".to_string(), "t_k".into(), "applied_at".into()];
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.extend((1..=n).map(|i| format!("x_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (k, e) in self.events.iter().enumerate() {
            let mut row = vec![k.to_string(), e.t.to_string(), e.applied_at.to_string()];
            row.extend(e.held_control.iter().map(|v| v.to_string()));
            row.extend(e.sampled_state.iter().map(|v| v.to_string()));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_trace_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,delta_before,delta_after,margin,deviation,beta")?;
        for s in &self.trace {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.t, s.delta_before, s.delta_after, s.margin, s.deviation, s.beta
            )?;
        }
        Ok(())
    }
}

struct Sample {
    mode: usize,
    state: DVector<f64>,
    control: DVector<f64>,
    beta: f64,
}

/// Sample-and-hold loop. The trigger is evaluated at every grid point
/// except the last; a fired event transmits `γ(xₑ(t_k))`, which reaches
/// the actuator `Δ_k` later. Until the first packet arrives the actuator
/// outputs zero.
#[allow(clippy::too_many_arguments)]
pub fn integrate_event_triggered(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    policy: &TriggerPolicy,
    delays: &DelayModel,
    x0: &DVector<f64>,
    t0: f64,
    t_end: f64,
    h: f64,
) -> Result<(Trajectory, EventLog), SimError> {
    check_setup(sys, ctrl, x0)?;
    delays.validate().map_err(|e| SimError::InvalidDelay(e.to_string()))?;
    let times = time_grid(t0, t_end, h)?;
    let last = times.len() - 1;
    let mut sampler = delays.sampler();

    let mut x = x0.clone();
    let mut mode = 0;
    let mut applied = DVector::zeros(sys.input_count());
    let mut pending: VecDeque<(f64, DVector<f64>)> = VecDeque::new();
    let mut last_arrival = f64::NEG_INFINITY;
    let mut sample: Option<Sample> = None;
    let mut log = EventLog::default();
    let mut states = Vec::with_capacity(times.len());
    states.push(x.clone());

    for j in 0..=last {
        let t = times[j];
        while pending.front().is_some_and(|(at, _)| *at <= t) {
            applied = pending.pop_front().unwrap().1;
        }

        let next_mode = ctrl.next_mode(mode, &x);
        let mode_changed = next_mode != mode;
        mode = next_mode;

        let (delta_before, deviation, beta_now, margin) = match &sample {
            None => (0.0, 0.0, beta_of(sys, ctrl, t, &x), f64::NEG_INFINITY),
            Some(s) => {
                // Mismatch under the law the sample was taken with; a mode
                // switch fires on its own.
                let d = delta_with_control(sys, ctrl, s.mode, t, &x, &s.control).norm();
                let dev = (&x - &s.state).norm();
                (d, dev, beta_of(sys, ctrl, t, &s.state), policy.margin(d, dev, s.beta))
            }
        };
        let fire = sample.is_none() || (j < last && (mode_changed || margin <= 0.0));

        if fire {
            if log.events.len() >= ZENO_LIMIT {
                return Err(SimError::ZenoSuspect { t, limit: ZENO_LIMIT });
            }
            let control = ctrl.control(mode, &x);
            let beta = beta_of(sys, ctrl, t, &x);
            let delay = sampler.next_delay();
            let applied_at = (t + delay).max(last_arrival);
            last_arrival = applied_at;
            log.events.push(Event {
                t,
                sampled_state: x.clone(),
                held_control: control.clone(),
                delay,
                applied_at,
                mode,
                beta,
            });
            if applied_at <= t {
                applied = control.clone();
            } else {
                pending.push_back((applied_at, control.clone()));
            }
            sample = Some(Sample { mode, state: x.clone(), control, beta });
        }

        log.trace.push(TraceSample {
            t,
            delta_before,
            delta_after: if fire { 0.0 } else { delta_before },
            margin,
            deviation,
            beta: beta_now,
        });

        if j == last {
            break;
        }
        let t_next = times[j + 1];
        let mut tc = t;
        while let Some((at, _)) = pending.front() {
            if *at >= t_next {
                break;
            }
            let at = *at;
            if at > tc {
                x = rk4_step(|s, y| sys.closed_loop(s, y, &applied), tc, &x, at - tc);
                tc = at;
            }
            applied = pending.pop_front().unwrap().1;
        }
        if t_next > tc {
            x = rk4_step(|s, y| sys.closed_loop(s, y, &applied), tc, &x, t_next - tc);
        }
        check_finite(&x, t_next)?;
        states.push(x.clone());
    }
    Ok((to_trajectory(times, states), log))
}

#[derive(Debug, Clone)]
pub struct CoSimulation {
    pub ideal: Trajectory,
    pub evt: Trajectory,
    pub log: EventLog,
    pub sup_error: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn cosimulate(
    sys: &ControlAffineSystem,
    ctrl: &dyn FeedbackController,
    policy: &TriggerPolicy,
    delays: &DelayModel,
    x0: &DVector<f64>,
    t0: f64,
    t_end: f64,
    h: f64,
) -> Result<CoSimulation, SimError> {
    let ideal = integrate_ideal(sys, ctrl, x0, t0, t_end, h)?;
    let (evt, log) = integrate_event_triggered(sys, ctrl, policy, delays, x0, t0, t_end, h)?;
    let sup_error = tube_distance(&ideal, &evt).expect("both loops share one grid");
    Ok(CoSimulation { ideal, evt, log, sup_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn decay() -> (ControlAffineSystem, FnController) {
        let sys = ControlAffineSystem::new(1, Arc::new(|_, x| -x.clone()), vec![], vec![1.0]).unwrap();
        let ctrl = FnController::new(Arc::new(|_| DVector::zeros(0)), vec![]);
        (sys, ctrl)
    }

    fn integrator() -> (ControlAffineSystem, FnController) {
        // ẋ = u, u = −x
        let sys = ControlAffineSystem::new(
            1,
            Arc::new(|_, _| DVector::zeros(1)),
            vec![Arc::new(|_, _| DVector::from_element(1, 1.0))],
            vec![0.0, 0.0],
        )
        .unwrap();
        let ctrl = FnController::new(Arc::new(|x| -x.clone()), vec![1.0]);
        (sys, ctrl)
    }

    #[test]
    fn grid_ends_at_horizon() {
        let g = time_grid(0.0, 10.0, 1e-3).unwrap();
        assert_eq!(g.len(), 10_001);
        assert_eq!(*g.last().unwrap(), 10.0);
        let g = time_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 5);
        assert_abs_diff_eq!(g[3], 0.9, epsilon = 1e-15);
        assert_eq!(g[4], 1.0);
        assert!(time_grid(0.0, 1.0, 0.0).is_err());
        assert!(time_grid(1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn exponential_decay() {
        let (sys, ctrl) = decay();
        let traj = integrate_ideal(&sys, &ctrl, &DVector::from_element(1, 1.0), 0.0, 1.0, 1e-3).unwrap();
        assert_abs_diff_eq!(traj.last_state()[0], (-1.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn zero_field_constant() {
        let sys = ControlAffineSystem::new(
            2,
            Arc::new(|_, _| DVector::zeros(2)),
            vec![Arc::new(|_, _| DVector::from_vec(vec![1.0, 0.0]))],
            vec![0.0, 0.0],
        )
        .unwrap();
        let ctrl = FnController::new(Arc::new(|_| DVector::zeros(1)), vec![1.0]);
        let x0 = DVector::from_vec(vec![0.3, -0.7]);
        let traj = integrate_ideal(&sys, &ctrl, &x0, 0.0, 2.0, 0.01).unwrap();
        assert!(traj.states().iter().all(|x| *x == x0));
    }

    #[test]
    fn never_trigger_is_open_loop() {
        let (sys, ctrl) = integrator();
        let x0 = DVector::from_element(1, 1.0);
        let (traj, log) = integrate_event_triggered(
            &sys,
            &ctrl,
            &TriggerPolicy::Never,
            &DelayModel::None,
            &x0,
            0.0,
            1.0,
            1e-2,
        )
        .unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.events[0].t, 0.0);
        // constant control −1 from x0 = 1
        assert_abs_diff_eq!(traj.last_state()[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn diverging_state_reported() {
        let sys = ControlAffineSystem::new(1, Arc::new(|_, x| x.map(|v| v * v)), vec![], vec![1.0]).unwrap();
        let ctrl = FnController::new(Arc::new(|_| DVector::zeros(0)), vec![]);
        let err = integrate_ideal(&sys, &ctrl, &DVector::from_element(1, 1.0), 0.0, 5.0, 0.01).unwrap_err();
        assert!(matches!(err, SimError::NonFiniteState(t) if t > 0.9 && t < 1.1));
    }

    #[test]
    fn delay_shifts_application() {
        let (sys, ctrl) = integrator();
        let x0 = DVector::from_element(1, 1.0);
        let h = 1e-2;
        let run = |d: DelayModel| {
            integrate_event_triggered(&sys, &ctrl, &TriggerPolicy::EveryStep, &d, &x0, 0.0, 1.0, h).unwrap().1
        };
        let a = run(DelayModel::None);
        let b = run(DelayModel::Constant(h));
        assert_eq!(a.event_times(), b.event_times());
        for (ea, eb) in a.events.iter().zip(&b.events) {
            assert_abs_diff_eq!(eb.applied_at - ea.applied_at, h, epsilon = 1e-12);
        }
    }

    #[test]
    fn delta_vanishes_after_zero_delay_event() {
        let (sys, ctrl) = integrator();
        let policy = TriggerPolicy::Delta { eps1: 0.05 };
        let x0 = DVector::from_element(1, 1.0);
        let (_, log) =
            integrate_event_triggered(&sys, &ctrl, &policy, &DelayModel::None, &x0, 0.0, 2.0, 1e-3).unwrap();
        assert!(log.len() > 3);
        for s in &log.trace {
            if s.margin <= 0.0 && s.t < 2.0 {
                assert!(s.delta_after <= 1e-12);
            }
            assert!(s.delta_after <= 0.05 + 1e-9);
        }
    }

    #[test]
    fn events_csv_header() {
        let (sys, ctrl) = integrator();
        let x0 = DVector::from_element(1, 1.0);
        let (_, log) = integrate_event_triggered(
            &sys,
            &ctrl,
            &TriggerPolicy::Never,
            &DelayModel::None,
            &x0,
            0.0,
            1.0,
            0.1,
        )
        .unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "k,t_k,applied_at,u_1,x_1");
        assert_eq!(text.lines().nth(1).unwrap(), "0,0,0,-1,1");
    }
}
