//! The authoritative game session: command intake, the fixed-step tick
//! loop, awareness-event routing by communication mode, and per-operator
//! views.

pub mod protocol;
pub mod record;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{
    robot_status, Command, CommandBody, CommandRules, CommandState, Rejection, TeamSelection,
};
use crate::event::{Actor, AwarenessEvent, EventPayload, EventSink, Visibility};
use crate::fsm::{
    formation_motion, fsm_step, go_to_point, is_valid_transition, FsmError, TransportState,
};
use crate::sim::{
    step_world, ObjectGoal, ObjectId, ObjectMotion, OperatorId, Pose, RobotId, SimError, SizeClass,
    TeamId, Twist, Vec2, WorldState,
};

/// Communication condition of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CommMode {
    /// No communication.
    #[serde(rename = "NC")]
    Nc,
    /// Direct (verbal) communication only.
    #[serde(rename = "DC")]
    Dc,
    /// Indirect communication through the interface only.
    #[serde(rename = "IC")]
    Ic,
    /// Direct and indirect.
    #[serde(rename = "MC")]
    Mc,
}

impl CommMode {
    pub const ALL: [CommMode; 4] = [CommMode::Nc, CommMode::Dc, CommMode::Ic, CommMode::Mc];

    pub fn direct(self) -> bool {
        matches!(self, CommMode::Dc | CommMode::Mc)
    }

    pub fn indirect(self) -> bool {
        matches!(self, CommMode::Ic | CommMode::Mc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CommMode::Nc => "NC",
            CommMode::Dc => "DC",
            CommMode::Ic => "IC",
            CommMode::Mc => "MC",
        }
    }
}

impl fmt::Display for CommMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown communication mode {0:?} (expected NC, DC, IC or MC)")]
pub struct ParseModeError(pub String);

impl FromStr for CommMode {
    type Err = ParseModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NC" => Ok(CommMode::Nc),
            "DC" => Ok(CommMode::Dc),
            "IC" => Ok(CommMode::Ic),
            "MC" => Ok(CommMode::Mc),
            _ => Err(ParseModeError(s.to_owned())),
        }
    }
}

/// Whether `recipient` is shown `event` under `mode`. Issuers always see
/// their own actions.
pub fn route_event(mode: CommMode, event: &AwarenessEvent, recipient: OperatorId) -> bool {
    match event.visibility {
        Visibility::Always => true,
        Visibility::IndirectOnly => mode.indirect() || event.issuer() == Some(recipient),
    }
}

/// Whether `event` goes into `recipient`'s text log: teammates' actions
/// that reached them.
pub fn logs_event(mode: CommMode, event: &AwarenessEvent, recipient: OperatorId) -> bool {
    event.visibility == Visibility::IndirectOnly
        && event.issuer() != Some(recipient)
        && route_event(mode, event, recipient)
}

/// Bounded newest-first log of teammates' actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLog {
    capacity: usize,
    entries: VecDeque<String>,
}

impl TextLog {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, line: String) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        self.entries.push_front(line);
    }

    /// Newest first.
    pub fn entries(&self) -> Vec<String> {
        self.entries.iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Lobby,
    Running,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mode: CommMode,
    pub time_limit_s: f64,
    pub max_points: u32,
    /// Operators needed before the clock starts.
    pub required_players: usize,
    pub log_capacity: usize,
    pub rules: CommandRules,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: CommMode::Mc,
            time_limit_s: 480.0,
            max_points: 8,
            required_players: 2,
            log_capacity: 3,
            rules: CommandRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameStatus {
    pub tick: u64,
    pub sim_time: f64,
    pub clock_remaining: f64,
    pub points_scored: u32,
    pub max_points: u32,
    pub mode: CommMode,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub id: RobotId,
    pub pose: Pose,
    pub radius: f64,
    pub status: String,
    pub state: TransportState,
    pub idle: bool,
    pub fault: bool,
    /// Only shown for the viewer's own team unless indirect communication
    /// is on.
    pub team: Option<TeamId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: ObjectId,
    pub size_class: SizeClass,
    pub pose: Pose,
    pub half_extents: Vec2,
    pub target: Pose,
    pub points: u32,
    pub delivered: bool,
    pub goal: Option<ObjectGoal>,
    pub lock_owner: Option<OperatorId>,
}

/// What one operator's interface shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientView {
    pub operator: OperatorId,
    pub robots: Vec<RobotView>,
    pub objects: Vec<ObjectView>,
    pub teams: Vec<TeamSelection>,
    pub log: Vec<String>,
    pub status: GameStatus,
}

/// Result of one submitted command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub tick: u64,
    pub command: Command,
    pub rejection: Option<Rejection>,
}

/// Everything that happened in one tick, for broadcasting and recording.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub tick: u64,
    pub commands: Vec<CommandOutcome>,
    pub faults: Vec<(RobotId, bool)>,
    pub events: Vec<AwarenessEvent>,
    /// Every FSM state change this tick, in the order it happened.
    pub transitions: Vec<Transition>,
    /// World just before integration; filled only when tracing.
    pub pre_step: Option<WorldState>,
}

/// Which part of the tick changed a robot's FSM state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Command,
    Controller,
    Settle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub robot: RobotId,
    pub from: TransportState,
    pub to: TransportState,
    pub stage: Stage,
}

fn fsm_states(world: &WorldState) -> Vec<(RobotId, TransportState)> {
    world.robots.iter().map(|r| (r.id, r.fsm)).collect()
}

fn diff_states(
    before: &[(RobotId, TransportState)],
    world: &WorldState,
    stage: Stage,
    out: &mut Vec<Transition>,
) {
    for ((id, from), r) in before.iter().zip(&world.robots) {
        if r.fsm != *from {
            out.push(Transition {
                robot: *id,
                from: *from,
                to: r.fsm,
                stage,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("session is full ({0} operators)")]
    Full(usize),
    #[error("unknown operator {0}")]
    UnknownOperator(OperatorId),
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("game is not running")]
    NotRunning,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fsm(#[from] FsmError),
    #[error("invalid transition {robot}: {from} -> {to}")]
    BadTransition {
        robot: RobotId,
        from: TransportState,
        to: TransportState,
    },
}

#[derive(Debug, Clone)]
pub struct Session {
    pub config: SessionConfig,
    pub world: WorldState,
    pub commands: CommandState,
    /// Keep a copy of the pre-integration world in each tick report.
    pub trace: bool,
    phase: Phase,
    operators: BTreeMap<OperatorId, String>,
    logs: BTreeMap<OperatorId, TextLog>,
    inbox: Vec<Command>,
    pending_faults: Vec<(RobotId, bool)>,
    next_command_seq: u64,
    sink: EventSink,
    points: u32,
    scored: BTreeSet<ObjectId>,
    statuses: BTreeMap<RobotId, String>,
}

impl Session {
    pub fn new(config: SessionConfig, world: WorldState) -> Self {
        let statuses = world
            .robots
            .iter()
            .map(|r| (r.id, robot_status(r)))
            .collect();
        let scored: BTreeSet<ObjectId> = world
            .objects
            .iter()
            .filter(|o| o.delivered)
            .map(|o| o.id)
            .collect();
        let points = world
            .objects
            .iter()
            .filter(|o| o.delivered)
            .map(|o| o.points)
            .sum();
        Self {
            commands: CommandState::new(config.rules),
            trace: false,
            config,
            world,
            phase: Phase::Lobby,
            operators: BTreeMap::new(),
            logs: BTreeMap::new(),
            inbox: Vec::new(),
            pending_faults: Vec::new(),
            next_command_seq: 0,
            sink: EventSink::default(),
            points,
            scored,
            statuses,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn points(&self) -> u32 {
        self.points
    }

    pub fn operators(&self) -> &BTreeMap<OperatorId, String> {
        &self.operators
    }

    pub fn time_limit_ticks(&self) -> u64 {
        (self.config.time_limit_s / self.config.rules.sim.dt).round() as u64
    }

    /// Registers an operator; the game starts once enough have joined.
    pub fn join(&mut self, name: &str) -> Result<OperatorId, SessionError> {
        if self.operators.len() >= self.config.required_players.max(1) {
            return Err(SessionError::Full(self.operators.len()));
        }
        let id = OperatorId(self.operators.len() as u32 + 1);
        self.operators.insert(id, name.to_owned());
        self.logs.insert(id, TextLog::new(self.config.log_capacity));
        if self.phase == Phase::Lobby && self.operators.len() >= self.config.required_players {
            self.phase = Phase::Running;
        }
        Ok(id)
    }

    /// Queues a command for the next tick and returns its stamped form.
    pub fn submit(
        &mut self,
        issuer: OperatorId,
        body: CommandBody,
    ) -> Result<Command, SessionError> {
        if !self.operators.contains_key(&issuer) {
            return Err(SessionError::UnknownOperator(issuer));
        }
        if self.phase != Phase::Running {
            return Err(SessionError::NotRunning);
        }
        let cmd = Command {
            seq: self.next_command_seq,
            issuer,
            body,
        };
        self.next_command_seq += 1;
        self.inbox.push(cmd.clone());
        Ok(cmd)
    }

    /// Queues an already-stamped command (replay).
    pub fn enqueue(&mut self, cmd: Command) {
        self.next_command_seq = self.next_command_seq.max(cmd.seq + 1);
        self.inbox.push(cmd);
    }

    /// Sets or clears a robot fault at the start of the next tick.
    pub fn inject_fault(&mut self, robot: RobotId, on: bool) -> Result<(), SessionError> {
        if self.world.robot(robot).is_none() {
            return Err(SessionError::UnknownRobot(robot));
        }
        self.pending_faults.push((robot, on));
        Ok(())
    }

    pub fn status(&self) -> GameStatus {
        let limit = self.time_limit_ticks();
        GameStatus {
            tick: self.world.tick,
            sim_time: self.world.sim_time,
            clock_remaining: limit.saturating_sub(self.world.tick) as f64
                * self.config.rules.sim.dt,
            points_scored: self.points,
            max_points: self.config.max_points,
            mode: self.config.mode,
            phase: self.phase,
        }
    }

    /// Advances the game by one fixed step. Does nothing unless running.
    pub fn run_tick(&mut self) -> Result<TickReport, SessionError> {
        let mut report = TickReport {
            tick: self.world.tick,
            ..TickReport::default()
        };
        if self.phase != Phase::Running {
            return Ok(report);
        }
        self.sink.sim_time = self.world.sim_time;

        for (rid, on) in std::mem::take(&mut self.pending_faults) {
            let r = self
                .world
                .robot_mut(rid)
                .ok_or(SessionError::UnknownRobot(rid))?;
            if r.fault != on {
                r.fault = on;
                r.twist = Twist::ZERO;
                self.sink
                    .emit(Actor::System, EventPayload::Fault { robot: rid, on });
            }
            report.faults.push((rid, on));
        }

        let mut inbox = std::mem::take(&mut self.inbox);
        inbox.sort_by_key(|c| c.seq);
        for cmd in inbox {
            let before = fsm_states(&self.world);
            let rejection = self
                .commands
                .apply_command(&mut self.world, &cmd, &mut self.sink)
                .err();
            diff_states(
                &before,
                &self.world,
                Stage::Command,
                &mut report.transitions,
            );
            report.commands.push(CommandOutcome {
                tick: self.world.tick,
                command: cmd,
                rejection,
            });
        }

        let before = fsm_states(&self.world);
        let (cmds, motions) = self.controllers()?;
        diff_states(
            &before,
            &self.world,
            Stage::Controller,
            &mut report.transitions,
        );
        if self.trace {
            report.pre_step = Some(self.world.clone());
        }
        let sim = self.config.rules.sim;
        self.world = step_world(&self.world, &cmds, &motions, sim.dt, &sim)?;
        let before = fsm_states(&self.world);
        self.commands.settle(&mut self.world);
        diff_states(&before, &self.world, Stage::Settle, &mut report.transitions);
        self.sink.sim_time = self.world.sim_time;

        for o in &self.world.objects {
            if o.delivered && self.scored.insert(o.id) {
                self.points += o.points;
                self.sink.emit(
                    Actor::System,
                    EventPayload::Delivery {
                        object: o.id,
                        points: o.points,
                    },
                );
                self.sink.emit(
                    Actor::System,
                    EventPayload::Score {
                        points: self.points,
                        max_points: self.config.max_points,
                    },
                );
            }
        }
        for r in &self.world.robots {
            let status = robot_status(r);
            if self.statuses.get(&r.id) != Some(&status) {
                self.statuses.insert(r.id, status.clone());
                self.sink.emit(
                    Actor::Robot(r.id),
                    EventPayload::RobotStateChanged {
                        robot: r.id,
                        idle: r.assignment.is_none() && !r.fault,
                        status,
                    },
                );
            }
        }

        report.events = self.sink.drain();
        for ev in &report.events {
            let line = ev.render(&self.operators);
            for (op, log) in self.logs.iter_mut() {
                if logs_event(self.config.mode, ev, *op) {
                    log.push(line.clone());
                }
            }
        }

        if self.world.tick >= self.time_limit_ticks() || self.points >= self.config.max_points {
            self.phase = Phase::Finished;
        }
        Ok(report)
    }

    /// Per-robot twists and per-object formation motions for this tick.
    #[allow(clippy::type_complexity)]
    fn controllers(
        &mut self,
    ) -> Result<(BTreeMap<RobotId, Twist>, BTreeMap<ObjectId, ObjectMotion>), SessionError> {
        let sim = self.config.rules.sim;
        let fsm = self.config.rules.fsm;
        let mut cmds: BTreeMap<RobotId, Twist> = self
            .world
            .robots
            .iter()
            .map(|r| (r.id, Twist::ZERO))
            .collect();
        let mut next_states = Vec::new();
        for f in self.commands.formations.values() {
            for rid in f.plan.members() {
                let robot = self
                    .world
                    .robot(rid)
                    .ok_or(SessionError::UnknownRobot(rid))?;
                let out = fsm_step(robot, &f.plan, &self.world, &sim, &fsm)?;
                if out.next_state != robot.fsm && !is_valid_transition(robot.fsm, out.next_state) {
                    return Err(SessionError::BadTransition {
                        robot: rid,
                        from: robot.fsm,
                        to: out.next_state,
                    });
                }
                next_states.push((rid, out.next_state));
                cmds.insert(rid, out.cmd);
            }
        }
        for (rid, s) in next_states {
            self.world.robot_mut(rid).expect("checked").fsm = s;
        }
        let mut motions = BTreeMap::new();
        for (oid, f) in &self.commands.formations {
            if let Some(m) = formation_motion(&f.plan, &self.world, &sim, &fsm) {
                motions.insert(*oid, m);
            }
        }
        for r in &self.world.robots {
            if r.fault {
                continue;
            }
            if let Some(goal) = r.assignment.and_then(|a| a.direct_goal()) {
                cmds.insert(r.id, go_to_point(r, goal, sim.v_max, &sim, &fsm));
            }
        }
        Ok((cmds, motions))
    }

    /// The interface state shown to `op`, gated by the communication mode.
    pub fn snapshot(&self, op: OperatorId) -> Result<ClientView, SessionError> {
        if !self.operators.contains_key(&op) {
            return Err(SessionError::UnknownOperator(op));
        }
        let share = self.config.mode.indirect();
        let own_team = |t: Option<TeamId>| {
            t.filter(|id| share || self.commands.teams.get(id).is_some_and(|s| s.owner == op))
        };
        let robots = self
            .world
            .robots
            .iter()
            .map(|r| RobotView {
                id: r.id,
                pose: r.pose,
                radius: r.radius,
                status: robot_status(r),
                state: r.fsm,
                idle: r.assignment.is_none() && !r.fault,
                fault: r.fault,
                team: own_team(r.team),
            })
            .collect();
        let objects = self
            .world
            .objects
            .iter()
            .map(|o| {
                let mine = self.commands.goal_issuer.get(&o.id) == Some(&op);
                ObjectView {
                    id: o.id,
                    size_class: o.size_class,
                    pose: o.pose,
                    half_extents: o.half_extents,
                    target: o.target,
                    points: o.points,
                    delivered: o.delivered,
                    goal: o.goal.filter(|_| share || mine),
                    lock_owner: o.lock_owner.filter(|owner| share || *owner == op),
                }
            })
            .collect();
        let teams = self
            .commands
            .teams
            .values()
            .filter(|t| share || t.owner == op)
            .cloned()
            .collect();
        Ok(ClientView {
            operator: op,
            robots,
            objects,
            teams,
            log: self.logs.get(&op).map(TextLog::entries).unwrap_or_default(),
            status: self.status(),
        })
    }
}
