//! Parametric CartPole dynamics used as the agent's internal domain model.
//!
//! A [`DomainModel`] holds seven numeric fluents. The same stepping function
//! drives both the agent's predictions and the ground-truth environment, so
//! the only way the two can disagree is through fluent values.

use std::fmt;
use std::ops::{Index, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Integration step used by the environment and the planner (seconds).
pub const TIME_STEP: f64 = 0.02;

/// Named numeric fluents of the CartPole domain, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluentName {
    MassCart,
    MassPole,
    /// Half the pole length.
    LengthPole,
    ForceMag,
    Gravity,
    AngleLimit,
    XLimit,
}

impl FluentName {
    pub const COUNT: usize = 7;

    pub const ALL: [FluentName; FluentName::COUNT] = [
        FluentName::MassCart,
        FluentName::MassPole,
        FluentName::LengthPole,
        FluentName::ForceMag,
        FluentName::Gravity,
        FluentName::AngleLimit,
        FluentName::XLimit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FluentName::MassCart => "mass_cart",
            FluentName::MassPole => "mass_pole",
            FluentName::LengthPole => "length_pole",
            FluentName::ForceMag => "force_mag",
            FluentName::Gravity => "gravity",
            FluentName::AngleLimit => "angle_limit",
            FluentName::XLimit => "x_limit",
        }
    }
}

impl fmt::Display for FluentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FluentName {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FluentName::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| ModelError::UnknownFluent(s.to_string()))
    }
}

/// The agent's beliefs about the environment dynamics.
///
/// Values are stored as a fixed-size vector indexed by [`FluentName`], so
/// iteration and serialization order are stable. Every value is finite and
/// strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FluentRecord", into = "FluentRecord")]
pub struct DomainModel {
    values: [f64; FluentName::COUNT],
}

impl DomainModel {
    /// Standard benchmark values.
    pub const NOMINAL: DomainModel = DomainModel {
        values: [1.0, 0.1, 0.5, 10.0, 9.8, 0.2095, 2.4],
    };

    pub fn new(values: [f64; FluentName::COUNT]) -> Result<Self, ModelError> {
        for fluent in FluentName::ALL {
            check_fluent(fluent, values[fluent.index()])?;
        }
        Ok(DomainModel { values })
    }

    pub fn nominal() -> Self {
        Self::NOMINAL
    }

    pub fn get(&self, fluent: FluentName) -> f64 {
        self.values[fluent.index()]
    }

    /// Returns a copy with one fluent replaced.
    pub fn with(&self, fluent: FluentName, value: f64) -> Result<Self, ModelError> {
        check_fluent(fluent, value)?;
        let mut values = self.values;
        values[fluent.index()] = value;
        Ok(DomainModel { values })
    }

    pub fn values(&self) -> &[f64; FluentName::COUNT] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (FluentName, f64)> + '_ {
        FluentName::ALL.into_iter().map(|f| (f, self.get(f)))
    }

    /// Bitwise equality, distinguishing values that compare equal as floats
    /// but differ in representation.
    pub fn bitwise_eq(&self, other: &DomainModel) -> bool {
        self.values
            .iter()
            .zip(other.values.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Default for DomainModel {
    fn default() -> Self {
        Self::NOMINAL
    }
}

impl Index<FluentName> for DomainModel {
    type Output = f64;

    fn index(&self, fluent: FluentName) -> &f64 {
        &self.values[fluent.index()]
    }
}

pub(crate) fn check_fluent(fluent: FluentName, value: f64) -> Result<(), ModelError> {
    if !value.is_finite() || value <= 0.0 {
        return Err(ModelError::InvalidFluent { fluent, value });
    }
    Ok(())
}

/// Serialized shape of a [`DomainModel`]: one key per fluent, canonical order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FluentRecord {
    pub mass_cart: f64,
    pub mass_pole: f64,
    pub length_pole: f64,
    pub force_mag: f64,
    pub gravity: f64,
    pub angle_limit: f64,
    pub x_limit: f64,
}

impl FluentRecord {
    pub(crate) fn from_values(v: [f64; FluentName::COUNT]) -> Self {
        FluentRecord {
            mass_cart: v[0],
            mass_pole: v[1],
            length_pole: v[2],
            force_mag: v[3],
            gravity: v[4],
            angle_limit: v[5],
            x_limit: v[6],
        }
    }

    pub(crate) fn into_values(self) -> [f64; FluentName::COUNT] {
        [
            self.mass_cart,
            self.mass_pole,
            self.length_pole,
            self.force_mag,
            self.gravity,
            self.angle_limit,
            self.x_limit,
        ]
    }
}

impl TryFrom<FluentRecord> for DomainModel {
    type Error = ModelError;

    fn try_from(record: FluentRecord) -> Result<Self, Self::Error> {
        DomainModel::new(record.into_values())
    }
}

impl From<DomainModel> for FluentRecord {
    fn from(model: DomainModel) -> Self {
        FluentRecord::from_values(model.values)
    }
}

/// Cart position/velocity and pole angle/angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl State {
    pub const ZERO: State = State::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        State {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        State::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Negates all four components.
    pub fn mirror(self) -> Self {
        State::new(-self.x, -self.x_dot, -self.theta, -self.theta_dot)
    }
}

impl Sub for State {
    type Output = [f64; 4];

    fn sub(self, rhs: State) -> [f64; 4] {
        [
            self.x - rhs.x,
            self.x_dot - rhs.x_dot,
            self.theta - rhs.theta,
            self.theta_dot - rhs.theta_dot,
        ]
    }
}

/// Push direction. The applied force is `±force_mag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Left, Action::Right];

    pub fn force(self, model: &DomainModel) -> f64 {
        match self {
            Action::Left => -model[FluentName::ForceMag],
            Action::Right => model[FluentName::ForceMag],
        }
    }

    pub fn mirror(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }
}

/// An ordered action sequence with its integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    actions: Vec<Action>,
    dt: f64,
}

impl Plan {
    pub fn new(actions: Vec<Action>, dt: f64) -> Result<Self, ModelError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ModelError::InvalidTimeStep(dt));
        }
        Ok(Plan { actions, dt })
    }

    pub fn empty(dt: f64) -> Result<Self, ModelError> {
        Plan::new(Vec::new(), dt)
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, action: Action) {
        self.actions.push(action);
    }

    pub fn extend_from(&mut self, other: &Plan) {
        self.actions.extend_from_slice(&other.actions);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanningProblem {
    pub initial_state: State,
    pub horizon: usize,
}

impl PlanningProblem {
    pub fn new(initial_state: State, horizon: usize) -> Result<Self, ModelError> {
        if horizon == 0 {
            return Err(ModelError::ZeroHorizon);
        }
        Ok(PlanningProblem {
            initial_state,
            horizon,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub next: State,
}

/// Observed `(s_t, a, s_{t+1})` transitions of one episode.
///
/// Built by appending, so consecutive transitions always chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    initial_state: State,
    transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new(initial_state: State) -> Self {
        Trajectory {
            initial_state,
            transitions: Vec::new(),
        }
    }

    pub fn initial_state(&self) -> State {
        self.initial_state
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn last_state(&self) -> State {
        self.transitions
            .last()
            .map_or(self.initial_state, |t| t.next)
    }

    pub fn push(&mut self, action: Action, next: State) {
        let state = self.last_state();
        self.transitions.push(Transition {
            state,
            action,
            next,
        });
    }

    /// The observed state sequence `[s_0, s_1, ..., s_n]`.
    pub fn states(&self) -> Vec<State> {
        std::iter::once(self.initial_state)
            .chain(self.transitions.iter().map(|t| t.next))
            .collect()
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.transitions.iter().map(|t| t.action)
    }

    pub fn is_chained(&self) -> bool {
        let mut prev = self.initial_state;
        for t in &self.transitions {
            if t.state != prev {
                return false;
            }
            prev = t.next;
        }
        true
    }
}

/// Cart and pole accelerations `(x_acc, theta_acc)` under `force`.
pub fn dynamics_derivatives(model: &DomainModel, s: &State, force: f64) -> (f64, f64) {
    let mass_pole = model[FluentName::MassPole];
    let length = model[FluentName::LengthPole];
    let total_mass = model[FluentName::MassCart] + mass_pole;
    let pole_mass_length = mass_pole * length;
    let (sin_theta, cos_theta) = s.theta.sin_cos();

    let temp = (force + pole_mass_length * s.theta_dot * s.theta_dot * sin_theta) / total_mass;
    let theta_acc = (model[FluentName::Gravity] * sin_theta - cos_theta * temp)
        / (length * (4.0 / 3.0 - mass_pole * cos_theta * cos_theta / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos_theta / total_mass;
    (x_acc, theta_acc)
}

/// One explicit Euler step. Positions advance with the pre-update velocities.
pub fn step_model(model: &DomainModel, s: &State, action: Action, dt: f64) -> State {
    let (x_acc, theta_acc) = dynamics_derivatives(model, s, action.force(model));
    State {
        x: s.x + dt * s.x_dot,
        x_dot: s.x_dot + dt * x_acc,
        theta: s.theta + dt * s.theta_dot,
        theta_dot: s.theta_dot + dt * theta_acc,
    }
}

/// Failure test: strict exceedance of the angle or cart limit.
pub fn is_terminal(model: &DomainModel, s: &State) -> bool {
    s.theta.abs() > model[FluentName::AngleLimit] || s.x.abs() > model[FluentName::XLimit]
}

/// Predicted state sequence of `plan` from `s0`.
///
/// Has `plan.len() + 1` states unless a terminal state is reached first, in
/// which case the sequence ends with that state.
pub fn simulate_plan(model: &DomainModel, s0: State, plan: &Plan) -> Vec<State> {
    let mut states = Vec::with_capacity(plan.len() + 1);
    states.push(s0);
    let mut s = s0;
    if is_terminal(model, &s) {
        return states;
    }
    for &action in plan.actions() {
        s = step_model(model, &s, action, plan.dt());
        states.push(s);
        if is_terminal(model, &s) {
            break;
        }
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn nominal_push_right_from_rest() {
        let (x_acc, theta_acc) = dynamics_derivatives(&DomainModel::NOMINAL, &State::ZERO, 10.0);
        // temp = 10/1.1, denominator = 0.5 * (4/3 - 0.1/1.1)
        assert!(close(x_acc, 9.7561, 1e-4), "{x_acc}");
        assert!(close(theta_acc, -14.6341, 1e-4), "{theta_acc}");
    }

    #[test]
    fn zero_force_at_rest_is_equilibrium() {
        let model = DomainModel::new([2.0, 0.3, 1.1, 7.0, 12.0, 0.3, 3.0]).unwrap();
        assert_eq!(dynamics_derivatives(&model, &State::ZERO, 0.0), (0.0, 0.0));
    }

    #[test]
    fn theta_acc_linear_in_gravity_when_unforced() {
        let s = State::new(0.0, 0.0, 0.07, 0.0);
        let base = DomainModel::NOMINAL;
        let doubled = base.with(FluentName::Gravity, 19.6).unwrap();
        let (_, a1) = dynamics_derivatives(&base, &s, 0.0);
        let (_, a2) = dynamics_derivatives(&doubled, &s, 0.0);
        assert!(close(a2 / a1, 2.0, 1e-12));
    }

    #[test]
    fn euler_step_from_rest() {
        let s = step_model(
            &DomainModel::NOMINAL,
            &State::ZERO,
            Action::Right,
            TIME_STEP,
        );
        assert_eq!(s.x, 0.0);
        assert_eq!(s.theta, 0.0);
        assert!(close(s.x_dot, 0.19512, 1e-5));
        assert!(close(s.theta_dot, -0.29268, 1e-5));
    }

    #[test]
    fn position_uses_old_velocity() {
        let s = State::new(0.0, 1.0, 0.0, 0.0);
        let next = step_model(&DomainModel::NOMINAL, &s, Action::Right, TIME_STEP);
        assert_eq!(next.x, 0.02);
    }

    #[test]
    fn terminal_boundaries() {
        let d = DomainModel::NOMINAL;
        assert!(!is_terminal(&d, &State::ZERO));
        assert!(is_terminal(&d, &State::new(2.5, 0.0, 0.0, 0.0)));
        assert!(!is_terminal(&d, &State::new(0.0, 0.0, 0.2095, 0.0)));
        assert!(is_terminal(&d, &State::new(0.0, 0.0, -0.2096, 0.0)));
        assert!(!is_terminal(&d, &State::new(-2.4, 0.0, 0.0, 0.0)));
    }

    #[test]
    fn simulate_empty_and_single_step() {
        let d = DomainModel::NOMINAL;
        assert_eq!(
            simulate_plan(&d, State::ZERO, &Plan::empty(TIME_STEP).unwrap()),
            vec![State::ZERO]
        );
        let plan = Plan::new(vec![Action::Right], TIME_STEP).unwrap();
        let states = simulate_plan(&d, State::ZERO, &plan);
        assert_eq!(states.len(), 2);
        assert_eq!(
            states[1],
            step_model(&d, &State::ZERO, Action::Right, TIME_STEP)
        );
    }

    #[test]
    fn simulate_stops_at_terminal_state() {
        let d = DomainModel::NOMINAL;
        let plan = Plan::new(vec![Action::Right; 200], TIME_STEP).unwrap();
        let states = simulate_plan(&d, State::ZERO, &plan);
        assert!(states.len() < 201);
        assert!(is_terminal(&d, states.last().unwrap()));
        assert!(states[..states.len() - 1]
            .iter()
            .all(|s| !is_terminal(&d, s)));
    }

    #[test]
    fn rejects_non_positive_and_non_finite_fluents() {
        let mut v = *DomainModel::NOMINAL.values();
        v[FluentName::Gravity.index()] = 0.0;
        assert!(matches!(
            DomainModel::new(v),
            Err(ModelError::InvalidFluent {
                fluent: FluentName::Gravity,
                ..
            })
        ));
        assert!(DomainModel::NOMINAL
            .with(FluentName::XLimit, f64::NAN)
            .is_err());
        assert!(Plan::new(vec![], 0.0).is_err());
        assert!(PlanningProblem::new(State::ZERO, 0).is_err());
    }

    #[test]
    fn json_uses_fixed_fluent_order() {
        let json = serde_json::to_string(&DomainModel::NOMINAL).unwrap();
        assert_eq!(
            json,
            r#"{"mass_cart":1.0,"mass_pole":0.1,"length_pole":0.5,"force_mag":10.0,"gravity":9.8,"angle_limit":0.2095,"x_limit":2.4}"#
        );
        let back: DomainModel = serde_json::from_str(&json).unwrap();
        assert!(back.bitwise_eq(&DomainModel::NOMINAL));
        let missing = r#"{"mass_cart":1.0}"#;
        assert!(serde_json::from_str::<DomainModel>(missing).is_err());
        let negative = json.replace("\"gravity\":9.8", "\"gravity\":-9.8");
        assert!(serde_json::from_str::<DomainModel>(&negative).is_err());
    }

    #[test]
    fn fluent_names_parse() {
        for f in FluentName::ALL {
            assert_eq!(f.as_str().parse::<FluentName>().unwrap(), f);
        }
        assert!("pole_length".parse::<FluentName>().is_err());
    }

    #[test]
    fn trajectory_chains_by_construction() {
        let mut t = Trajectory::new(State::ZERO);
        t.push(Action::Left, State::new(0.1, 0.0, 0.0, 0.0));
        t.push(Action::Right, State::new(0.2, 0.0, 0.0, 0.0));
        assert!(t.is_chained());
        assert_eq!(t.transitions()[0].state, State::ZERO);
        assert_eq!(t.transitions()[1].state, t.transitions()[0].next);
        assert_eq!(t.states().len(), 3);
    }
}
