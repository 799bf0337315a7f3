//! Built-in scenarios: a planar nonlinear system stabilised to the origin,
//! and a unicycle with a two-phase potential-field controller.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::delay::DelayModel;
use crate::regions::Region;
use crate::rtl::{Proposition, PropositionTable};
use crate::sim::{ControlAffineSystem, FeedbackController, FnController};
use crate::trigger::{LyapunovConstants, TriggerKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}' (expected example1 or example2)")]
    Unknown(String),
    #[error("goal ({x}, {y}) lies inside an obstacle")]
    GoalInsideObstacle { x: f64, y: f64 },
    #[error("scenario needs region '{0}'")]
    MissingRegion(String),
    #[error("region '{name}' must be {expected}")]
    RegionShape { name: String, expected: &'static str },
    #[error("invalid gains: {0}")]
    InvalidGains(String),
}

/// Where the Lyapunov constants come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantsSpec {
    Estimate,
    Explicit(LyapunovConstants),
}

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub system: ControlAffineSystem,
    pub controller: Arc<dyn FeedbackController>,
    pub x0: DVector<f64>,
    pub t0: f64,
    pub horizon: f64,
    pub step: f64,
    pub formula: String,
    pub table: PropositionTable,
    pub epsilon: f64,
    pub constants: ConstantsSpec,
    /// Box Ω for the κ trigger.
    pub omega: (Vec<f64>, Vec<f64>),
    pub trigger: TriggerKind,
    pub delay: DelayModel,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("system", &self.system)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .field("step", &self.step)
            .field("formula", &self.formula)
            .field("epsilon", &self.epsilon)
            .field("constants", &self.constants)
            .field("trigger", &self.trigger)
            .field("delay", &self.delay)
            .finish_non_exhaustive()
    }
}

pub fn by_name(name: &str) -> Result<Scenario, ScenarioError> {
    match name {
        "example1" => Ok(example1()),
        "example2" => Ok(example2()),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

pub fn example1_system() -> ControlAffineSystem {
    ControlAffineSystem::new(
        2,
        Arc::new(|_, x| v2(-x[0].sin(), -x[1])),
        vec![Arc::new(|_, x| v2(-x[1], x[0]))],
        vec![1.0, 1.0],
    )
    .expect("valid system")
}

/// `u = −x₂`.
pub fn example1_controller() -> FnController {
    FnController::new(Arc::new(|x| DVector::from_element(1, -x[1])), vec![1.0])
}

pub fn example1_table() -> PropositionTable {
    let mut table = PropositionTable::new();
    table.insert("p1", Proposition::new("pi1", Region::ball(vec![0.0, 0.0], 0.1).expect("valid ball")));
    table
}

/// `ẋ = −(sin x₁, x₂) + (−x₂, x₁)u`, `u = −x₂`, from `(0, 1)`, goal `◇□p1`
/// with `p1 = B₀(0.1)` and `ε = 0.05`.
pub fn example1() -> Scenario {
    Scenario {
        name: "example1".into(),
        system: example1_system(),
        controller: Arc::new(example1_controller()),
        x0: v2(0.0, 1.0),
        t0: 0.0,
        horizon: 10.0,
        step: 1e-3,
        formula: "<>[] p1".into(),
        table: example1_table(),
        epsilon: 0.05,
        constants: ConstantsSpec::Estimate,
        omega: (vec![-1.5, -1.5], vec![1.5, 1.5]),
        trigger: TriggerKind::Delta,
        delay: DelayModel::None,
    }
}

/// Gains of the potential-field controller.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialGains {
    pub k_att: f64,
    pub k_rep: f64,
    pub influence: f64,
    pub k_v: f64,
    pub k_w: f64,
    pub v_max: f64,
    /// Turning is scaled down once `‖∇U‖` drops below this.
    pub arrival: f64,
}

impl Default for PotentialGains {
    fn default() -> Self {
        Self { k_att: 1.0, k_rep: 0.1, influence: 1.5, k_v: 1.0, k_w: 4.0, v_max: 1.0, arrival: 0.2 }
    }
}

impl PotentialGains {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fields = [
            ("k_att", self.k_att),
            ("influence", self.influence),
            ("k_v", self.k_v),
            ("k_w", self.k_w),
            ("v_max", self.v_max),
            ("arrival", self.arrival),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ScenarioError::InvalidGains(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.k_rep >= 0.0) || !self.k_rep.is_finite() {
            return Err(ScenarioError::InvalidGains(format!(
                "k_rep must be nonnegative, got {}",
                self.k_rep
            )));
        }
        Ok(())
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Attractive quadratic potential to a planar goal plus inverse-distance
/// repulsion from nearby obstacles, steering a unicycle `(x, y, θ)`.
#[derive(Debug, Clone)]
pub struct PotentialField {
    goal: [f64; 2],
    obstacles: Vec<Region>,
    gains: PotentialGains,
    final_heading: Option<f64>,
}

impl PotentialField {
    pub fn new(goal: [f64; 2], obstacles: Vec<Region>, gains: PotentialGains) -> Result<Self, ScenarioError> {
        gains.validate()?;
        for obs in &obstacles {
            if obs.dim() != 2 {
                return Err(ScenarioError::InvalidGains("obstacles must be planar".into()));
            }
            if obs.contains(&goal).unwrap_or(true) {
                return Err(ScenarioError::GoalInsideObstacle { x: goal[0], y: goal[1] });
            }
        }
        Ok(Self { goal, obstacles, gains, final_heading: None })
    }

    /// Near the goal, turn towards `heading` instead of freezing θ.
    pub fn with_final_heading(mut self, heading: f64) -> Self {
        self.final_heading = Some(heading);
        self
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        let g = &self.gains;
        let mut grad = [g.k_att * (p[0] - self.goal[0]), g.k_att * (p[1] - self.goal[1])];
        for obs in &self.obstacles {
            let d = obs.signed_distance_unchecked(&p);
            if d >= g.influence || g.k_rep == 0.0 {
                continue;
            }
            let d = d.max(1e-6);
            let step = 1e-7;
            let dx = (obs.signed_distance_unchecked(&[p[0] + step, p[1]])
                - obs.signed_distance_unchecked(&[p[0] - step, p[1]]))
                / (2.0 * step);
            let dy = (obs.signed_distance_unchecked(&[p[0], p[1] + step])
                - obs.signed_distance_unchecked(&[p[0], p[1] - step]))
                / (2.0 * step);
            let scale = -g.k_rep * (1.0 / d - 1.0 / g.influence) / (d * d);
            grad[0] += scale * dx;
            grad[1] += scale * dy;
        }
        grad
    }

    /// `(v, w)` at the pose `(x, y, θ)`.
    pub fn command(&self, x: &DVector<f64>) -> DVector<f64> {
        let g = &self.gains;
        let grad = self.gradient([x[0], x[1]]);
        let norm = grad[0].hypot(grad[1]);
        let blend = (norm / g.arrival).min(1.0);
        let settle = match self.final_heading {
            Some(h) => (1.0 - blend) * wrap_angle(h - x[2]),
            None => 0.0,
        };
        if norm == 0.0 {
            return DVector::from_vec(vec![0.0, g.k_w * settle]);
        }
        let heading = (-grad[1]).atan2(-grad[0]);
        let err = wrap_angle(heading - x[2]);
        let v = (g.k_v * err.cos().max(0.0) * norm).min(g.v_max);
        let w = g.k_w * (blend * err + settle);
        DVector::from_vec(vec![v, w])
    }
}

/// Runs potential fields in sequence, moving to the next once within
/// `capture` of the current goal.
#[derive(Debug, Clone)]
pub struct WaypointController {
    phases: Vec<PotentialField>,
    capture: f64,
    lipschitz: Vec<f64>,
}

impl WaypointController {
    pub fn new(
        phases: Vec<PotentialField>,
        capture: f64,
        lipschitz: Vec<f64>,
    ) -> Result<Self, ScenarioError> {
        if phases.is_empty() {
            return Err(ScenarioError::InvalidGains("at least one phase is needed".into()));
        }
        if !(capture > 0.0) {
            return Err(ScenarioError::InvalidGains(format!(
                "capture radius must be positive, got {capture}"
            )));
        }
        Ok(Self { phases, capture, lipschitz })
    }

    pub fn phases(&self) -> &[PotentialField] {
        &self.phases
    }
}

impl FeedbackController for WaypointController {
    fn input_count(&self) -> usize {
        2
    }

    fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    fn control(&self, mode: usize, x: &DVector<f64>) -> DVector<f64> {
        self.phases[mode.min(self.phases.len() - 1)].command(x)
    }

    fn next_mode(&self, mode: usize, x: &DVector<f64>) -> usize {
        let mut mode = mode;
        while mode + 1 < self.phases.len() {
            let goal = self.phases[mode].goal();
            if (x[0] - goal[0]).hypot(x[1] - goal[1]) > self.capture {
                break;
            }
            mode += 1;
        }
        mode
    }
}

/// Single-phase potential-field controller.
pub fn potential_controller(
    goal: [f64; 2],
    obstacles: Vec<Region>,
    gains: PotentialGains,
    lipschitz: Vec<f64>,
) -> Result<WaypointController, ScenarioError> {
    let field = PotentialField::new(goal, obstacles, gains)?;
    WaypointController::new(vec![field], f64::INFINITY, lipschitz)
}

/// `ẋ = (cos θ, sin θ, 0)v + (0, 0, 1)w`.
pub fn unicycle() -> ControlAffineSystem {
    ControlAffineSystem::new(
        3,
        Arc::new(|_, _| DVector::zeros(3)),
        vec![
            Arc::new(|_, x| DVector::from_vec(vec![x[2].cos(), x[2].sin(), 0.0])),
            Arc::new(|_, _| DVector::from_vec(vec![0.0, 0.0, 1.0])),
        ],
        vec![0.0, 1.0, 0.0],
    )
    .expect("valid system")
}

/// Lipschitz bounds of the unicycle controller for the default gains.
pub const EXAMPLE2_CONTROLLER_LIPSCHITZ: [f64; 2] = [2.0, 80.0];

/// Lyapunov constants used for the unicycle, whose closed loop is not
/// exponentially stable along the whole path.
pub const EXAMPLE2_CONSTANTS: LyapunovConstants = LyapunovConstants { c1: 1.0, c2: 1.0, c3: 0.2, c4: 2.0 };

pub fn example2_table() -> PropositionTable {
    let disk = |x: f64, y: f64| Region::ball(vec![x, y], 1.0).expect("valid ball");
    let mut table = PropositionTable::new();
    for (name, label, region) in
        [("p1", "pi1", disk(0.0, 3.0)), ("p2", "pi2", disk(6.0, 0.0)), ("p3", "pi3", disk(2.0, 0.0))]
    {
        table.insert(name, Proposition::new(label, region).with_projection(vec![0, 1]));
    }
    table
}

fn ball_of(table: &PropositionTable, name: &str) -> Result<([f64; 2], f64), ScenarioError> {
    let prop = table.get(name).ok_or_else(|| ScenarioError::MissingRegion(name.into()))?;
    match &prop.region {
        Region::Ball { center, radius } if center.len() == 2 => Ok(([center[0], center[1]], *radius)),
        _ => Err(ScenarioError::RegionShape { name: name.into(), expected: "a planar ball" }),
    }
}

/// Two-phase waypoint controller for the reach-avoid task: first to the
/// centre of `p1` while avoiding the ε-expansions of `p2` and `p3`, then to
/// the centre of `p2` while avoiding the ε-expansion of `p3`.
pub fn example2_controller(
    table: &PropositionTable,
    epsilon: f64,
    gains: PotentialGains,
    lipschitz: Vec<f64>,
) -> Result<WaypointController, ScenarioError> {
    let (g1, r1) = ball_of(table, "p1")?;
    let (g2, _) = ball_of(table, "p2")?;
    let grow = |name: &str| -> Result<Region, ScenarioError> {
        let (c, r) = ball_of(table, name)?;
        Ok(Region::ball(c.to_vec(), r + epsilon).expect("valid ball"))
    };
    let first = PotentialField::new(g1, vec![grow("p3")?, grow("p2")?], gains)?;
    let second = PotentialField::new(g2, vec![grow("p3")?], gains)?
        .with_final_heading((g2[1] - g1[1]).atan2(g2[0] - g1[0]));
    let capture = 0.5 * (r1 - epsilon).max(0.0);
    WaypointController::new(vec![first, second], capture, lipschitz)
}

/// Unicycle from `(−5, −2, 0)` with `◇p2 ∧ (¬p2 U p1) ∧ □¬p3` and `ε = 0.25`.
pub fn example2() -> Scenario {
    let table = example2_table();
    let epsilon = 0.25;
    let controller = example2_controller(
        &table,
        epsilon,
        PotentialGains::default(),
        EXAMPLE2_CONTROLLER_LIPSCHITZ.to_vec(),
    )
    .expect("built-in geometry is consistent");
    Scenario {
        name: "example2".into(),
        system: unicycle(),
        controller: Arc::new(controller),
        x0: DVector::from_vec(vec![-5.0, -2.0, 0.0]),
        t0: 0.0,
        horizon: 40.0,
        step: 1e-3,
        formula: "<> p2 & (!p2 U p1) & [] !p3".into(),
        table,
        epsilon,
        constants: ConstantsSpec::Explicit(EXAMPLE2_CONSTANTS),
        omega: (vec![-8.0, -5.0, -4.0], vec![8.0, 5.0, 4.0]),
        trigger: TriggerKind::Delta,
        delay: DelayModel::None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wrap() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(0.3), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn aligned_goal_drives_straight() {
        let pf = PotentialField::new([5.0, 0.0], vec![], PotentialGains::default()).unwrap();
        let u = pf.command(&DVector::from_vec(vec![0.0, 0.0, 0.0]));
        assert!(u[0] > 0.0);
        assert_abs_diff_eq!(u[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn at_goal_stops() {
        let pf = PotentialField::new([1.0, 2.0], vec![], PotentialGains::default()).unwrap();
        let u = pf.command(&DVector::from_vec(vec![1.0, 2.0, 0.7]));
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn goal_in_obstacle_rejected() {
        let obs = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            PotentialField::new([0.5, 0.0], vec![obs], PotentialGains::default()),
            Err(ScenarioError::GoalInsideObstacle { .. })
        ));
    }

    #[test]
    fn repulsion_pushes_away() {
        let obs = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let with = PotentialField::new([5.0, 0.0], vec![obs], PotentialGains::default()).unwrap();
        let without = PotentialField::new([5.0, 0.0], vec![], PotentialGains::default()).unwrap();
        let p = [0.0, 1.5];
        assert!(with.gradient(p)[1] < without.gradient(p)[1]);
    }

    #[test]
    fn waypoint_switches_inside_capture() {
        let s = example2();
        let x = DVector::from_vec(vec![0.1, 2.9, 0.0]);
        assert_eq!(s.controller.next_mode(0, &x), 1);
        assert_eq!(s.controller.next_mode(0, &s.x0), 0);
    }

    #[test]
    fn example1_shape() {
        let s = example1();
        assert_eq!(s.system.dim(), 2);
        assert_eq!(s.system.input_count(), 1);
        let u = s.controller.control(0, &s.x0);
        assert_eq!(u[0], -1.0);
        assert_eq!(s.system.input_field(0, 0.0, &s.x0), v2(-1.0, 0.0));
        assert!(by_name("example3").is_err());
    }
}
