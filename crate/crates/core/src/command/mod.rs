//! Operator command semantics: object-, robot- and team-oriented
//! interaction, team selection, advisory object locks, and
//! last-received-wins resolution between concurrent operators.
//!
//! Commands only touch goals, teams, locks and robot assignments. Poses
//! change exclusively through [`crate::sim::step_world`].

mod polygon;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Actor, EventPayload, EventSink};
use crate::fsm::{plan_formation, FormationMode, FormationPlan, FsmConfig, TransportState};
use crate::sim::{
    Assignment, Modality, ObjectGoal, ObjectId, OperatorId, Pose, RobotId, RobotState, SimConfig,
    TeamId, Vec2, WorldState,
};

pub use polygon::{centroid, point_in_polygon, signed_area2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandBody {
    MoveObject {
        object_id: ObjectId,
        goal: Pose,
    },
    RotateObject {
        object_id: ObjectId,
        goal_theta: f64,
    },
    MoveRobot {
        robot_id: RobotId,
        goal: Vec2,
    },
    SelectTeam {
        polygon: Vec<Vec2>,
    },
    MoveTeam {
        team_id: TeamId,
        goal: Vec2,
    },
    LockObject {
        object_id: ObjectId,
    },
    UnlockObject {
        object_id: ObjectId,
    },
}

/// What a command retargets, for conflict accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Object(ObjectId),
    Robot(RobotId),
    Team(TeamId),
}

impl CommandBody {
    /// Interaction modality; locks are a transparency feature and have none.
    pub fn modality(&self) -> Option<Modality> {
        match self {
            CommandBody::MoveObject { .. } | CommandBody::RotateObject { .. } => {
                Some(Modality::ObjectOriented)
            }
            CommandBody::MoveRobot { .. } => Some(Modality::RobotOriented),
            CommandBody::SelectTeam { .. } | CommandBody::MoveTeam { .. } => {
                Some(Modality::TeamOriented)
            }
            CommandBody::LockObject { .. } | CommandBody::UnlockObject { .. } => None,
        }
    }

    /// Entity whose goal this command sets, if any.
    pub fn goal_target(&self) -> Option<Target> {
        match *self {
            CommandBody::MoveObject { object_id, .. }
            | CommandBody::RotateObject { object_id, .. } => Some(Target::Object(object_id)),
            CommandBody::MoveRobot { robot_id, .. } => Some(Target::Robot(robot_id)),
            CommandBody::MoveTeam { team_id, .. } => Some(Target::Team(team_id)),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CommandBody::MoveObject { .. } => "move_object",
            CommandBody::RotateObject { .. } => "rotate_object",
            CommandBody::MoveRobot { .. } => "move_robot",
            CommandBody::SelectTeam { .. } => "select_team",
            CommandBody::MoveTeam { .. } => "move_team",
            CommandBody::LockObject { .. } => "lock_object",
            CommandBody::UnlockObject { .. } => "unlock_object",
        }
    }
}

/// A command stamped by the service: `seq` is the arrival order and the
/// conflict-resolution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub seq: u64,
    pub issuer: OperatorId,
    pub body: CommandBody,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Rejection {
    #[error("unknown {entity}")]
    UnknownEntity { entity: String },
    #[error("{object} cannot be manipulated {modality:?}")]
    ModalityNotAllowed {
        object: ObjectId,
        modality: Modality,
    },
    #[error("{object} is locked by {owner}")]
    LockDenied { object: ObjectId, owner: OperatorId },
    #[error("{object} is not locked by you")]
    NotLockOwner {
        object: ObjectId,
        owner: Option<OperatorId>,
    },
    #[error("{team} belongs to {owner}")]
    NotTeamOwner { team: TeamId, owner: OperatorId },
    #[error("{object} has already been delivered")]
    AlreadyDelivered { object: ObjectId },
    #[error("invalid goal: {reason}")]
    InvalidGoal { reason: String },
    #[error("team selection needs a polygon with at least three vertices")]
    InvalidPolygon,
    #[error("{reason}")]
    Other { reason: String },
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::UnknownEntity { .. } => "unknown_entity",
            Rejection::ModalityNotAllowed { .. } => "modality_not_allowed",
            Rejection::LockDenied { .. } => "lock_denied",
            Rejection::NotLockOwner { .. } => "not_lock_owner",
            Rejection::NotTeamOwner { .. } => "not_team_owner",
            Rejection::AlreadyDelivered { .. } => "already_delivered",
            Rejection::InvalidGoal { .. } => "invalid_goal",
            Rejection::InvalidPolygon => "invalid_polygon",
            Rejection::Other { .. } => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSelection {
    pub team_id: TeamId,
    pub owner: OperatorId,
    pub members: BTreeSet<RobotId>,
    pub centroid_marker: Vec2,
    pub polygon: Vec<Vec2>,
}

/// An object transport in progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formation {
    pub plan: FormationPlan,
    pub issuer: OperatorId,
    /// Former members pulled out under direct control; the rest of the team
    /// stays paused until these arrive.
    pub awaiting: BTreeSet<RobotId>,
    /// State each paused member had before pausing.
    pub paused_from: BTreeMap<RobotId, TransportState>,
}

/// Gap between neighbours in a team line.
pub const TEAM_GAP: f64 = 0.02;

/// Policy knobs of the command layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRules {
    pub sim: SimConfig,
    pub fsm: FsmConfig,
    /// Cap on robots recruited for an object-oriented transport; `None`
    /// recruits every idle healthy robot (perimeter capacity still applies).
    pub transport_team_size: Option<usize>,
    /// Center-to-center spacing of robots in a team line.
    pub team_spacing: f64,
}

impl Default for CommandRules {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            sim,
            fsm: FsmConfig::with_contact_tolerance(sim.contact_tolerance),
            transport_team_size: None,
            team_spacing: 2.0 * sim.robot_radius + TEAM_GAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandState {
    pub rules: CommandRules,
    pub teams: BTreeMap<TeamId, TeamSelection>,
    pub formations: BTreeMap<ObjectId, Formation>,
    /// Operator whose command set each object's current goal.
    pub goal_issuer: BTreeMap<ObjectId, OperatorId>,
    next_team: u32,
}

/// State a paused member returns to once its team resumes.
pub fn resume_state(paused_from: TransportState) -> TransportState {
    match paused_from {
        TransportState::PushObject | TransportState::RotateObject => TransportState::ApproachObject,
        s => s,
    }
}

/// Short human-readable status for robot panels and on-robot badges.
pub fn robot_status(robot: &RobotState) -> String {
    if robot.fault {
        return "fault".to_owned();
    }
    match robot.assignment {
        Some(Assignment::Transport { object }) => format!("{object}: {}", robot.fsm),
        // Goals stay out of the status: they are operator actions, and the
        // status is shown in every mode.
        Some(Assignment::Waypoint { .. }) => "moving to waypoint".to_owned(),
        Some(Assignment::TeamMove { .. }) => "moving with team".to_owned(),
        None => "idle".to_owned(),
    }
}

fn in_arena(world: &WorldState, p: Vec2) -> Result<(), Rejection> {
    if !p.is_finite() || !world.arena.contains(p) {
        return Err(Rejection::InvalidGoal {
            reason: format!("({:.3}, {:.3}) is outside the arena", p.x, p.y),
        });
    }
    Ok(())
}

impl CommandState {
    pub fn new(rules: CommandRules) -> Self {
        Self {
            rules,
            teams: BTreeMap::new(),
            formations: BTreeMap::new(),
            goal_issuer: BTreeMap::new(),
            next_team: 1,
        }
    }

    pub fn team_of_owner(&self, owner: OperatorId) -> Option<&TeamSelection> {
        self.teams.values().find(|t| t.owner == owner)
    }

    /// Applies one command. On rejection neither `self` nor `world` changes.
    pub fn apply_command(
        &mut self,
        world: &mut WorldState,
        cmd: &Command,
        sink: &mut EventSink,
    ) -> Result<(), Rejection> {
        let actor = Actor::Operator(cmd.issuer);
        match &cmd.body {
            CommandBody::MoveObject { object_id, goal } => {
                self.check_object_command(world, *object_id)?;
                if !goal.is_finite() {
                    return Err(Rejection::InvalidGoal {
                        reason: "non-finite pose".into(),
                    });
                }
                in_arena(world, goal.position())?;
                let goal = Pose::new(goal.x, goal.y, goal.theta);
                self.start_transport(
                    world,
                    *object_id,
                    ObjectGoal {
                        pose: goal,
                        orient: false,
                    },
                    FormationMode::Translate,
                    cmd.issuer,
                );
                sink.emit(
                    actor,
                    EventPayload::ObjectMoved {
                        object: *object_id,
                        goal,
                    },
                );
            }
            CommandBody::RotateObject {
                object_id,
                goal_theta,
            } => {
                self.check_object_command(world, *object_id)?;
                if !goal_theta.is_finite() {
                    return Err(Rejection::InvalidGoal {
                        reason: "non-finite heading".into(),
                    });
                }
                let pose = world.object(*object_id).expect("checked").pose;
                let goal = Pose::new(pose.x, pose.y, *goal_theta);
                self.start_transport(
                    world,
                    *object_id,
                    ObjectGoal {
                        pose: goal,
                        orient: true,
                    },
                    FormationMode::Rotate,
                    cmd.issuer,
                );
                sink.emit(
                    actor,
                    EventPayload::ObjectRotated {
                        object: *object_id,
                        goal_theta: goal.theta,
                    },
                );
            }
            CommandBody::MoveRobot { robot_id, goal } => {
                if world.robot(*robot_id).is_none() {
                    return Err(Rejection::UnknownEntity {
                        entity: robot_id.to_string(),
                    });
                }
                in_arena(world, *goal)?;
                self.detach(world, *robot_id);
                let r = world.robot_mut(*robot_id).expect("checked");
                r.assignment = Some(Assignment::Waypoint {
                    goal: *goal,
                    issuer: cmd.issuer,
                });
                r.fsm = TransportState::Idle;
                sink.emit(
                    actor,
                    EventPayload::RobotMoved {
                        robot: *robot_id,
                        goal: *goal,
                    },
                );
            }
            CommandBody::SelectTeam { polygon } => {
                if polygon.len() < 3 || polygon.iter().any(|p| !p.is_finite()) {
                    return Err(Rejection::InvalidPolygon);
                }
                let members: BTreeSet<RobotId> = world
                    .robots
                    .iter()
                    .filter(|r| point_in_polygon(r.position(), polygon))
                    .map(|r| r.id)
                    .collect();
                let previous: Vec<TeamId> = self
                    .teams
                    .values()
                    .filter(|t| t.owner == cmd.issuer)
                    .map(|t| t.team_id)
                    .collect();
                for id in previous {
                    self.teams.remove(&id);
                    for r in world.robots.iter_mut().filter(|r| r.team == Some(id)) {
                        r.team = None;
                    }
                }
                let team_id = TeamId(self.next_team);
                self.next_team += 1;
                let marker = centroid(polygon);
                for r in world.robots.iter_mut().filter(|r| members.contains(&r.id)) {
                    r.team = Some(team_id);
                }
                sink.emit(
                    actor,
                    EventPayload::TeamCreated {
                        team: team_id,
                        members: members.iter().copied().collect(),
                        marker,
                    },
                );
                self.teams.insert(
                    team_id,
                    TeamSelection {
                        team_id,
                        owner: cmd.issuer,
                        members,
                        centroid_marker: marker,
                        polygon: polygon.clone(),
                    },
                );
            }
            CommandBody::MoveTeam { team_id, goal } => {
                let team = self
                    .teams
                    .get(team_id)
                    .ok_or_else(|| Rejection::UnknownEntity {
                        entity: team_id.to_string(),
                    })?;
                if team.owner != cmd.issuer {
                    return Err(Rejection::NotTeamOwner {
                        team: *team_id,
                        owner: team.owner,
                    });
                }
                in_arena(world, *goal)?;
                let targets = self.team_line(world, team, *goal);
                for (rid, target) in targets {
                    self.detach(world, rid);
                    let r = world.robot_mut(rid).expect("members exist");
                    r.assignment = Some(Assignment::TeamMove {
                        team: *team_id,
                        marker: *goal,
                        target,
                        issuer: cmd.issuer,
                    });
                    r.fsm = TransportState::Idle;
                }
                self.teams
                    .get_mut(team_id)
                    .expect("checked")
                    .centroid_marker = *goal;
                sink.emit(
                    actor,
                    EventPayload::TeamMoved {
                        team: *team_id,
                        goal: *goal,
                    },
                );
            }
            CommandBody::LockObject { object_id } => {
                let obj = world
                    .object(*object_id)
                    .ok_or_else(|| Rejection::UnknownEntity {
                        entity: object_id.to_string(),
                    })?;
                match obj.lock_owner {
                    Some(owner) if owner == cmd.issuer => return Ok(()),
                    Some(owner) => {
                        return Err(Rejection::LockDenied {
                            object: *object_id,
                            owner,
                        })
                    }
                    None => {}
                }
                let mut released = None;
                for o in world.objects.iter_mut() {
                    if o.lock_owner == Some(cmd.issuer) {
                        o.lock_owner = None;
                        released = Some(o.id);
                    }
                }
                world.object_mut(*object_id).expect("checked").lock_owner = Some(cmd.issuer);
                sink.emit(
                    actor,
                    EventPayload::LockChanged {
                        object: *object_id,
                        owner: Some(cmd.issuer),
                        released,
                    },
                );
            }
            CommandBody::UnlockObject { object_id } => {
                let obj = world
                    .object(*object_id)
                    .ok_or_else(|| Rejection::UnknownEntity {
                        entity: object_id.to_string(),
                    })?;
                if obj.lock_owner != Some(cmd.issuer) {
                    return Err(Rejection::NotLockOwner {
                        object: *object_id,
                        owner: obj.lock_owner,
                    });
                }
                world.object_mut(*object_id).expect("checked").lock_owner = None;
                sink.emit(
                    actor,
                    EventPayload::LockChanged {
                        object: *object_id,
                        owner: None,
                        released: None,
                    },
                );
            }
        }
        Ok(())
    }

    fn check_object_command(
        &self,
        world: &WorldState,
        object_id: ObjectId,
    ) -> Result<(), Rejection> {
        let obj = world
            .object(object_id)
            .ok_or_else(|| Rejection::UnknownEntity {
                entity: object_id.to_string(),
            })?;
        if obj.delivered {
            return Err(Rejection::AlreadyDelivered { object: object_id });
        }
        if !obj.allows(Modality::ObjectOriented) {
            return Err(Rejection::ModalityNotAllowed {
                object: object_id,
                modality: Modality::ObjectOriented,
            });
        }
        Ok(())
    }

    /// Sets the object goal and (re)plans its formation from current poses.
    fn start_transport(
        &mut self,
        world: &mut WorldState,
        object_id: ObjectId,
        goal: ObjectGoal,
        mode: FormationMode,
        issuer: OperatorId,
    ) {
        world.object_mut(object_id).expect("checked").goal = Some(goal);
        self.goal_issuer.insert(object_id, issuer);

        let previous = self.formations.remove(&object_id);
        let object = world.object(object_id).expect("checked").clone();
        let center = object.pose.position();
        let mut candidates: Vec<RobotState> = world
            .robots
            .iter()
            .filter(|r| {
                !r.fault && (r.assignment.is_none() || r.transport_object() == Some(object_id))
            })
            .cloned()
            .collect();
        if let Some(k) = self.rules.transport_team_size {
            candidates.sort_by(|a, b| {
                a.position()
                    .distance(center)
                    .total_cmp(&b.position().distance(center))
                    .then(a.id.cmp(&b.id))
            });
            candidates.truncate(k);
        }

        // Release the old team; the new plan re-recruits whoever fits.
        if let Some(prev) = previous {
            for rid in prev.plan.members() {
                if let Some(r) = world.robot_mut(rid) {
                    r.assignment = None;
                    r.fsm = TransportState::Idle;
                }
            }
        }
        let Ok(outcome) = plan_formation(
            &object,
            &candidates,
            goal.pose,
            mode,
            &self.rules.fsm,
            self.rules.sim.robot_radius,
        ) else {
            return;
        };
        for slot in &outcome.plan.slots {
            let r = world.robot_mut(slot.robot).expect("candidate exists");
            r.assignment = Some(Assignment::Transport { object: object_id });
            r.fsm = TransportState::ReachObject;
        }
        self.formations.insert(
            object_id,
            Formation {
                plan: outcome.plan,
                issuer,
                awaiting: BTreeSet::new(),
                paused_from: BTreeMap::new(),
            },
        );
    }

    /// Takes `robot` out of its formation; the remaining members pause until
    /// it reaches its new goal.
    fn detach(&mut self, world: &mut WorldState, robot: RobotId) {
        let Some(object) = world.robot(robot).and_then(RobotState::transport_object) else {
            return;
        };
        let Some(f) = self.formations.get_mut(&object) else {
            return;
        };
        f.plan = f.plan.without(robot);
        f.paused_from.remove(&robot);
        f.awaiting.insert(robot);
        for m in f.plan.members() {
            let r = world.robot_mut(m).expect("members exist");
            if r.fsm.is_active() && r.fsm != TransportState::Paused {
                f.paused_from.insert(m, r.fsm);
                r.fsm = TransportState::Paused;
            }
        }
        if f.plan.slots.is_empty() {
            self.formations.remove(&object);
        }
    }

    /// Line-abreast places around `goal`, perpendicular to the direction of
    /// travel, members ordered along that line by their current position.
    fn team_line(
        &self,
        world: &WorldState,
        team: &TeamSelection,
        goal: Vec2,
    ) -> Vec<(RobotId, Vec2)> {
        let travel = (goal - team.centroid_marker)
            .normalized()
            .unwrap_or(Vec2::new(1.0, 0.0));
        let across = travel.perp();
        let mut members: Vec<&RobotState> = team
            .members
            .iter()
            .filter_map(|id| world.robot(*id))
            .collect();
        members.sort_by(|a, b| {
            a.position()
                .dot(across)
                .total_cmp(&b.position().dot(across))
                .then(a.id.cmp(&b.id))
        });
        let m = members.len();
        members
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let off = (i as f64 - (m as f64 - 1.0) / 2.0) * self.rules.team_spacing;
                let p = world.arena.clamp_disc(goal + across * off, r.radius);
                (r.id, p)
            })
            .collect()
    }

    /// Post-step bookkeeping: direct-control arrivals, resuming paused
    /// teams, dropping faulted members and retiring finished transports.
    pub fn settle(&mut self, world: &mut WorldState) {
        let arrive = self.rules.fsm.arrive_tolerance;
        for r in world.robots.iter_mut() {
            if let Some(goal) = r.assignment.and_then(|a| a.direct_goal()) {
                if !r.fault && r.position().distance(goal) <= arrive {
                    r.assignment = None;
                }
            }
        }

        let ids: Vec<ObjectId> = self.formations.keys().copied().collect();
        for oid in ids {
            let f = self.formations.get_mut(&oid).expect("listed");
            let delivered = world.object(oid).is_none_or(|o| o.delivered);

            let faulted: Vec<RobotId> = f
                .plan
                .members()
                .filter(|id| world.robot(*id).is_none_or(|r| r.fault))
                .collect();
            for id in faulted {
                f.plan = f.plan.without(id);
                f.paused_from.remove(&id);
                if let Some(r) = world.robot_mut(id) {
                    r.assignment = None;
                    r.fsm = TransportState::Idle;
                }
            }

            f.awaiting.retain(|id| {
                world.robot(*id).is_some_and(|r| {
                    !r.fault && r.assignment.and_then(|a| a.direct_goal()).is_some()
                })
            });
            if f.awaiting.is_empty() && !f.paused_from.is_empty() {
                for (id, prev) in std::mem::take(&mut f.paused_from) {
                    if let Some(r) = world.robot_mut(id) {
                        if r.fsm == TransportState::Paused {
                            r.fsm = resume_state(prev);
                        }
                    }
                }
            }

            let finished = f.plan.members().all(|id| {
                world
                    .robot(id)
                    .is_none_or(|r| r.fsm == TransportState::Idle)
            });
            if delivered || finished || f.plan.slots.is_empty() {
                let f = self.formations.remove(&oid).expect("listed");
                for id in f.plan.members() {
                    if let Some(r) = world.robot_mut(id) {
                        r.assignment = None;
                        r.fsm = TransportState::Idle;
                    }
                }
            }
        }
    }
}
