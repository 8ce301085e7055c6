use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::geometry::{normalize_angle, Rect, Vec2};
use crate::fsm::TransportState;

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident, $prefix:literal) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(RobotId, "r");
id_type!(ObjectId, "obj");
id_type!(
    /// Assigned by the service when an operator joins.
    OperatorId,
    "op"
);
id_type!(TeamId, "team");

/// Planar pose; `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Composes a pose expressed in this pose's frame into the world frame.
    pub fn compose(&self, local: &Pose) -> Pose {
        let p = self.position() + local.position().rotate(self.theta);
        Pose::new(p.x, p.y, self.theta + local.theta)
    }
}

/// Differential-drive velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub v: f64,
    pub omega: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn is_zero(&self) -> bool {
        self.v == 0.0 && self.omega == 0.0
    }

    pub fn clamped(&self, v_max: f64, omega_max: f64) -> Twist {
        Twist::new(
            self.v.clamp(-v_max, v_max),
            self.omega.clamp(-omega_max, omega_max),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Big,
    Small,
}

impl SizeClass {
    /// Default point value of a delivered object.
    pub fn default_points(self) -> u32 {
        match self {
            SizeClass::Big => 2,
            SizeClass::Small => 1,
        }
    }

    pub fn default_modalities(self) -> BTreeSet<Modality> {
        match self {
            SizeClass::Big => [
                Modality::ObjectOriented,
                Modality::RobotOriented,
                Modality::TeamOriented,
            ]
            .into(),
            SizeClass::Small => [Modality::RobotOriented, Modality::TeamOriented].into(),
        }
    }
}

/// Interaction modality an operator used to issue a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    ObjectOriented,
    RobotOriented,
    TeamOriented,
}

/// What a robot is currently doing on behalf of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assignment {
    /// Member of the formation transporting `object`.
    Transport { object: ObjectId },
    /// Robot-oriented waypoint.
    Waypoint { goal: Vec2, issuer: OperatorId },
    /// Team-oriented move; `target` is this robot's place around `marker`.
    TeamMove {
        team: TeamId,
        marker: Vec2,
        target: Vec2,
        issuer: OperatorId,
    },
}

impl Assignment {
    /// Point the robot is driving to under direct operator control.
    pub fn direct_goal(&self) -> Option<Vec2> {
        match *self {
            Assignment::Waypoint { goal, .. } => Some(goal),
            Assignment::TeamMove { target, .. } => Some(target),
            Assignment::Transport { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub pose: Pose,
    pub twist: Twist,
    pub radius: f64,
    pub fsm: TransportState,
    pub team: Option<TeamId>,
    pub fault: bool,
    pub assignment: Option<Assignment>,
}

impl RobotState {
    pub fn new(id: RobotId, pose: Pose, radius: f64) -> Self {
        Self {
            id,
            pose,
            twist: Twist::ZERO,
            radius,
            fsm: TransportState::Idle,
            team: None,
            fault: false,
            assignment: None,
        }
    }

    pub fn position(&self) -> Vec2 {
        self.pose.position()
    }

    pub fn transport_object(&self) -> Option<ObjectId> {
        match self.assignment {
            Some(Assignment::Transport { object }) => Some(object),
            _ => None,
        }
    }
}

/// Goal set on an object by an object-oriented command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectGoal {
    pub pose: Pose,
    /// Set by a rotation command: the heading is part of the goal.
    pub orient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportObjectState {
    pub id: ObjectId,
    pub size_class: SizeClass,
    pub half_extents: Vec2,
    pub pose: Pose,
    pub goal: Option<ObjectGoal>,
    /// Scoring area center; the object is delivered once it rests there.
    pub target: Pose,
    pub points: u32,
    pub allowed_modalities: BTreeSet<Modality>,
    pub lock_owner: Option<OperatorId>,
    pub delivered: bool,
}

impl TransportObjectState {
    pub fn rect(&self) -> Rect {
        Rect::new(self.pose.position(), self.pose.theta, self.half_extents)
    }

    pub fn allows(&self, m: Modality) -> bool {
        self.allowed_modalities.contains(&m)
    }
}

/// Axis-aligned arena bounds, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Arena {
    pub fn centered(width: f64, height: f64) -> Self {
        Self {
            min_x: -width / 2.0,
            min_y: -height / 2.0,
            max_x: width / 2.0,
            max_y: height / 2.0,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// Clamps a disc center so the disc stays inside.
    pub fn clamp_disc(&self, p: Vec2, radius: f64) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min_x + radius, self.max_x - radius),
            p.y.clamp(self.min_y + radius, self.max_y - radius),
        )
    }
}

impl Default for Arena {
    fn default() -> Self {
        Arena::centered(4.0, 4.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub sim_time: f64,
    /// Sorted by id.
    pub robots: Vec<RobotState>,
    /// Sorted by id.
    pub objects: Vec<TransportObjectState>,
    pub arena: Arena,
}

impl WorldState {
    pub fn robot(&self, id: RobotId) -> Option<&RobotState> {
        self.robots
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.robots[i])
    }

    pub fn robot_mut(&mut self, id: RobotId) -> Option<&mut RobotState> {
        self.robots
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(move |i| &mut self.robots[i])
    }

    pub fn object(&self, id: ObjectId) -> Option<&TransportObjectState> {
        self.objects
            .binary_search_by_key(&id, |o| o.id)
            .ok()
            .map(|i| &self.objects[i])
    }

    pub fn object_mut(&mut self, id: ObjectId) -> Option<&mut TransportObjectState> {
        self.objects
            .binary_search_by_key(&id, |o| o.id)
            .ok()
            .map(move |i| &mut self.objects[i])
    }
}

/// Simulation parameters. Defaults are Khepera-IV-scale values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub robot_radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub contact_tolerance: f64,
    pub pos_tolerance: f64,
    pub ang_tolerance: f64,
    pub penetration_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            robot_radius: 0.07,
            v_max: 0.2,
            omega_max: 1.5,
            contact_tolerance: 0.01,
            pos_tolerance: 0.05,
            ang_tolerance: 0.1,
            penetration_tolerance: 1e-3,
        }
    }
}
