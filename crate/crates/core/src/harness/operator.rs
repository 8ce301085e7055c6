//! Scripted stand-ins for human operators.
//!
//! An operator sees only its own [`ClientView`] and answers with command
//! bodies, exactly as a console would.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::command::{point_in_polygon, CommandBody};
use crate::service::{ClientView, ObjectView, RobotView};
use crate::sim::{ObjectId, OperatorId, Pose, Rect, RobotId, Vec2};

/// Clearance kept between a robot and an object it is lining up behind.
const STAGE_GAP: f64 = 0.12;
/// Extra run-up before the staging point so the last legs point along the
/// push direction.
const RUN_UP: f64 = 0.3;
const LEG_TIMEOUT_S: f64 = 60.0;
const MAX_ATTEMPTS: u32 = 4;
/// A leg counts as done without seeing the robots move if they are this
/// close to its goal.
const LEG_ARRIVED: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub at_s: f64,
    pub body: CommandBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    /// Object-oriented: send the object to its target and let the robots
    /// sort it out. Waits for `min_robots` idle robots.
    Transport {
        object: ObjectId,
        #[serde(default)]
        lock: bool,
        #[serde(default = "one")]
        min_robots: usize,
    },
    /// Robot-oriented: drive one robot behind the object, then through it.
    RobotPush { object: ObjectId, robot: RobotId },
    /// Team-oriented: select the robots as a team and push in a line.
    TeamPush {
        object: ObjectId,
        robots: Vec<RobotId>,
    },
}

fn one() -> usize {
    1
}

impl Task {
    pub fn object(&self) -> ObjectId {
        match self {
            Task::Transport { object, .. }
            | Task::RobotPush { object, .. }
            | Task::TeamPush { object, .. } => *object,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    #[serde(flatten)]
    pub task: Task,
    /// Objects that must be delivered before this task starts.
    #[serde(default)]
    pub after: Vec<ObjectId>,
    #[serde(default)]
    pub start_s: f64,
}

impl TaskEntry {
    pub fn now(task: Task) -> Self {
        Self {
            task,
            after: Vec::new(),
            start_s: 0.0,
        }
    }

    pub fn after(task: Task, after: &[ObjectId]) -> Self {
        Self {
            task,
            after: after.to_vec(),
            start_s: 0.0,
        }
    }
}

/// Issues a random command every `period_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub seed: u64,
    pub period_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorScript {
    pub name: String,
    #[serde(default)]
    pub timed: Vec<TimedCommand>,
    #[serde(default)]
    pub tasks: Vec<TaskEntry>,
    #[serde(default)]
    pub random: Option<RandomSpec>,
}

impl OperatorScript {
    pub fn idle(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Waiting,
    /// Transport issued at this time.
    Commanded {
        since: f64,
    },
    /// Team selection sent; waiting for it to show up.
    Selecting {
        since: f64,
    },
    Legs {
        legs: Vec<Vec2>,
        next: usize,
        issued_at: f64,
        attempt: u32,
        /// The robots have been seen busy since the leg was issued. Over a
        /// network the first views after a command can predate it.
        moved: bool,
    },
    Done,
}

#[derive(Debug, Clone)]
struct TaskRun {
    entry: TaskEntry,
    phase: Phase,
    attempts: u32,
}

/// A running script.
#[derive(Debug, Clone)]
pub struct ScriptedOperator {
    pub id: OperatorId,
    pub script: OperatorScript,
    next_timed: usize,
    tasks: Vec<TaskRun>,
    rng: Option<ChaCha8Rng>,
    next_random: f64,
}

fn object(view: &ClientView, id: ObjectId) -> Option<&ObjectView> {
    view.objects.iter().find(|o| o.id == id)
}

fn robot(view: &ClientView, id: RobotId) -> Option<&RobotView> {
    view.robots.iter().find(|r| r.id == id)
}

fn delivered(view: &ClientView, id: ObjectId) -> bool {
    object(view, id).is_some_and(|o| o.delivered)
}

fn rect_of(o: &ObjectView) -> Rect {
    Rect::new(o.pose.position(), o.pose.theta, o.half_extents)
}

/// Push axis for moving `o` towards its target: the object-frame axis best
/// aligned with the remaining offset, as (world direction, half extent along
/// it, distance to cover).
fn push_axis(o: &ObjectView) -> (Vec2, f64, f64) {
    let off = o.target.position() - o.pose.position();
    let local = off.rotate(-o.pose.theta);
    let (axis, half) = if local.x.abs() >= local.y.abs() {
        (Vec2::new(local.x.signum(), 0.0), o.half_extents.x)
    } else {
        (Vec2::new(0.0, local.y.signum()), o.half_extents.y)
    };
    let d = axis.rotate(o.pose.theta);
    (d, half, off.dot(d))
}

/// Waypoints from `from` to `to` that go around `obstacles`.
pub fn route(from: Vec2, to: Vec2, obstacles: &[Rect]) -> Vec<Vec2> {
    let mut out = Vec::new();
    let mut cur = from;
    for _ in 0..12 {
        let blocking = obstacles
            .iter()
            .filter(|o| o.contains(cur) || !o.segment_clear(cur, to))
            .min_by(|a, b| a.distance(cur).total_cmp(&b.distance(cur)));
        let Some(rect) = blocking else {
            break;
        };
        let w = rect.detour(cur, to);
        if w == to || w.distance(cur) < 1e-9 {
            break;
        }
        out.push(w);
        cur = w;
    }
    out.push(to);
    out
}

/// A polygon around exactly `members` among `robots`, if one of the simple
/// shapes tried works.
pub fn selection_polygon(members: &[Vec2], others: &[Vec2], pad: f64) -> Option<Vec<Vec2>> {
    if members.is_empty() {
        return None;
    }
    let (mut lo, mut hi) = (members[0], members[0]);
    for p in members {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let aabb = vec![
        Vec2::new(lo.x - pad, lo.y - pad),
        Vec2::new(hi.x + pad, lo.y - pad),
        Vec2::new(hi.x + pad, hi.y + pad),
        Vec2::new(lo.x - pad, hi.y + pad),
    ];
    let mut shapes = vec![aabb];
    if members.len() == 2 {
        let (a, b) = (members[0], members[1]);
        let u = (b - a).normalized().unwrap_or(Vec2::new(1.0, 0.0));
        let n = u.perp();
        shapes.push(vec![
            a - u * pad - n * pad,
            b + u * pad - n * pad,
            b + u * pad + n * pad,
            a - u * pad + n * pad,
        ]);
    }
    shapes.into_iter().find(|poly| {
        members.iter().all(|p| point_in_polygon(*p, poly))
            && !others.iter().any(|p| point_in_polygon(*p, poly))
    })
}

impl ScriptedOperator {
    pub fn new(id: OperatorId, mut script: OperatorScript) -> Self {
        script.timed.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
        let tasks = script
            .tasks
            .iter()
            .cloned()
            .map(|entry| TaskRun {
                entry,
                phase: Phase::Waiting,
                attempts: 0,
            })
            .collect();
        let rng = script.random.map(|r| ChaCha8Rng::seed_from_u64(r.seed));
        Self {
            id,
            script,
            next_timed: 0,
            tasks,
            rng,
            next_random: 0.0,
        }
    }

    /// True once every task has finished and no timed command is pending.
    pub fn finished(&self) -> bool {
        self.next_timed >= self.script.timed.len()
            && self.tasks.iter().all(|t| t.phase == Phase::Done)
            && self.script.random.is_none()
    }

    /// Commands to send given the current view at sim time `t`.
    pub fn poll(&mut self, view: &ClientView, t: f64) -> Vec<CommandBody> {
        let mut out = Vec::new();
        while self.next_timed < self.script.timed.len()
            && self.script.timed[self.next_timed].at_s <= t + 1e-9
        {
            out.push(self.script.timed[self.next_timed].body.clone());
            self.next_timed += 1;
        }
        let me = self.id;
        for task in &mut self.tasks {
            step_task(task, view, me, t, &mut out);
        }
        if let (Some(spec), Some(rng)) = (self.script.random, self.rng.as_mut()) {
            if t + 1e-9 >= self.next_random {
                self.next_random += spec.period_s;
                out.push(random_command(rng, view, me));
            }
        }
        out
    }
}

fn random_command(rng: &mut ChaCha8Rng, view: &ClientView, me: OperatorId) -> CommandBody {
    let point =
        |rng: &mut ChaCha8Rng| Vec2::new(rng.gen_range(-1.9..1.9), rng.gen_range(-1.9..1.9));
    let nr = view.robots.len().max(1) as u32;
    let no = view.objects.len().max(1) as u32;
    let object_id = |rng: &mut ChaCha8Rng| {
        view.objects
            .get(rng.gen_range(0..no) as usize)
            .map_or(ObjectId(1), |o| o.id)
    };
    match rng.gen_range(0..7) {
        0 => {
            let g = point(rng);
            CommandBody::MoveObject {
                object_id: object_id(rng),
                goal: Pose::new(g.x, g.y, 0.0),
            }
        }
        1 => CommandBody::RotateObject {
            object_id: object_id(rng),
            goal_theta: rng.gen_range(-3.1..3.1),
        },
        2 => CommandBody::MoveRobot {
            robot_id: RobotId(rng.gen_range(1..=nr)),
            goal: point(rng),
        },
        3 => {
            let c = point(rng);
            let s = rng.gen_range(0.2..1.0);
            CommandBody::SelectTeam {
                polygon: vec![
                    c,
                    c + Vec2::new(s, 0.0),
                    c + Vec2::new(s, s),
                    c + Vec2::new(0.0, s),
                ],
            }
        }
        4 => match view.teams.iter().find(|t| t.owner == me) {
            Some(team) => CommandBody::MoveTeam {
                team_id: team.team_id,
                goal: point(rng),
            },
            None => CommandBody::MoveRobot {
                robot_id: RobotId(rng.gen_range(1..=nr)),
                goal: point(rng),
            },
        },
        5 => CommandBody::LockObject {
            object_id: object_id(rng),
        },
        _ => CommandBody::UnlockObject {
            object_id: object_id(rng),
        },
    }
}

fn members(task: &Task) -> Vec<RobotId> {
    match task {
        Task::Transport { .. } => Vec::new(),
        Task::RobotPush { robot, .. } => vec![*robot],
        Task::TeamPush { robots, .. } => robots.clone(),
    }
}

/// Legs for one push: around other objects to the run-up point, then the
/// staging point, then through to where the object sits on its target.
fn push_legs(view: &ClientView, obj: &ObjectView, from: Vec2, width: f64) -> Vec<Vec2> {
    let radius = view.robots.first().map_or(0.07, |r| r.radius);
    let (d, half, along) = push_axis(obj);
    let c = obj.pose.position();
    let stage = c - d * (half + radius + STAGE_GAP);
    let run_up = stage - d * RUN_UP;
    let end = c + d * along - d * (half + radius);
    let margin = radius + width / 2.0 + 0.04;
    let obstacles: Vec<Rect> = view
        .objects
        .iter()
        .map(|o| rect_of(o).inflated(margin))
        .collect();
    let mut legs = route(from, run_up, &obstacles);
    legs.push(stage);
    legs.push(end);
    legs
}

fn step_task(
    run: &mut TaskRun,
    view: &ClientView,
    me: OperatorId,
    t: f64,
    out: &mut Vec<CommandBody>,
) {
    let oid = run.entry.task.object();
    let Some(obj) = object(view, oid) else {
        run.phase = Phase::Done;
        return;
    };
    let team = members(&run.entry.task);
    let bots: Vec<&RobotView> = team.iter().filter_map(|id| robot(view, *id)).collect();
    if run.phase != Phase::Done && obj.delivered {
        match &run.entry.task {
            Task::Transport { lock: true, .. } if obj.lock_owner == Some(me) => {
                out.push(CommandBody::UnlockObject { object_id: oid });
            }
            // A delivered object stops moving; call the pushers off so they
            // do not keep leaning on it.
            Task::RobotPush { .. } => {
                for r in bots.iter().filter(|r| !r.idle && !r.fault) {
                    out.push(CommandBody::MoveRobot {
                        robot_id: r.id,
                        goal: r.pose.position(),
                    });
                }
            }
            Task::TeamPush { .. } if bots.iter().any(|r| !r.idle) => {
                if let Some(sel) = view.teams.iter().find(|s| s.owner == me) {
                    let c = bots.iter().fold(Vec2::ZERO, |a, r| a + r.pose.position())
                        * (1.0 / bots.len() as f64);
                    out.push(CommandBody::MoveTeam {
                        team_id: sel.team_id,
                        goal: c,
                    });
                }
            }
            _ => {}
        }
        run.phase = Phase::Done;
        return;
    }
    if bots.iter().any(|r| r.fault) && !team.is_empty() {
        // A teammate broke down; give the task up.
        run.phase = Phase::Done;
        return;
    }
    let all_idle = bots.len() == team.len() && bots.iter().all(|r| r.idle);

    match run.phase.clone() {
        Phase::Done => {}
        Phase::Waiting => {
            if t + 1e-9 < run.entry.start_s || !run.entry.after.iter().all(|o| delivered(view, *o))
            {
                return;
            }
            match &run.entry.task {
                Task::Transport {
                    lock, min_robots, ..
                } => {
                    let idle = view.robots.iter().filter(|r| r.idle).count();
                    if idle < *min_robots {
                        return;
                    }
                    if *lock && obj.lock_owner.is_none() {
                        out.push(CommandBody::LockObject { object_id: oid });
                    }
                    out.push(CommandBody::MoveObject {
                        object_id: oid,
                        goal: obj.target,
                    });
                    run.attempts += 1;
                    run.phase = Phase::Commanded { since: t };
                }
                Task::RobotPush { .. } => {
                    if !all_idle {
                        return;
                    }
                    let legs = push_legs(view, obj, bots[0].pose.position(), 0.0);
                    out.push(CommandBody::MoveRobot {
                        robot_id: bots[0].id,
                        goal: legs[0],
                    });
                    run.attempts += 1;
                    run.phase = Phase::Legs {
                        legs,
                        next: 1,
                        issued_at: t,
                        attempt: run.attempts,
                        moved: false,
                    };
                }
                Task::TeamPush { .. } => {
                    if !all_idle {
                        return;
                    }
                    let mine: Vec<Vec2> = bots.iter().map(|r| r.pose.position()).collect();
                    let others: Vec<Vec2> = view
                        .robots
                        .iter()
                        .filter(|r| !team.contains(&r.id))
                        .map(|r| r.pose.position())
                        .collect();
                    if let Some(polygon) = selection_polygon(&mine, &others, 0.05) {
                        out.push(CommandBody::SelectTeam { polygon });
                        run.attempts += 1;
                        run.phase = Phase::Selecting { since: t };
                    }
                }
            }
        }
        Phase::Commanded { since } => {
            let busy = view
                .robots
                .iter()
                .any(|r| r.status.starts_with(&format!("{oid}:")));
            if !busy && t - since > 2.0 {
                // The transport fell apart (fault, or someone took the robots).
                run.phase = Phase::Waiting;
            }
        }
        Phase::Selecting { since } => {
            let mut want = team.clone();
            want.sort();
            match view.teams.iter().find(|s| s.owner == me) {
                Some(sel) if sel.members.iter().copied().eq(want.iter().copied()) => {
                    let centroid = bots.iter().fold(Vec2::ZERO, |a, r| a + r.pose.position())
                        * (1.0 / bots.len() as f64);
                    let spacing = 2.0 * bots[0].radius + 0.02;
                    let width = spacing * (bots.len() as f64 - 1.0);
                    let legs = push_legs(view, obj, centroid, width);
                    out.push(CommandBody::MoveTeam {
                        team_id: sel.team_id,
                        goal: legs[0],
                    });
                    run.phase = Phase::Legs {
                        legs,
                        next: 1,
                        issued_at: t,
                        attempt: run.attempts,
                        moved: false,
                    };
                }
                _ if t - since > 2.0 => run.phase = Phase::Waiting,
                _ => {}
            }
        }
        Phase::Legs {
            legs,
            next,
            issued_at,
            attempt,
            moved,
        } => {
            let timed_out = t - issued_at > LEG_TIMEOUT_S;
            if !all_idle && !timed_out {
                if !moved {
                    run.phase = Phase::Legs {
                        legs,
                        next,
                        issued_at,
                        attempt,
                        moved: true,
                    };
                }
                return;
            }
            let centroid = bots.iter().fold(Vec2::ZERO, |a, r| a + r.pose.position())
                * (1.0 / bots.len() as f64);
            if !timed_out && !moved && centroid.distance(legs[next - 1]) > LEG_ARRIVED {
                return;
            }
            let goal = if next < legs.len() {
                legs[next]
            } else if run.attempts < MAX_ATTEMPTS {
                // Pushed but not delivered: line up again from here.
                run.phase = Phase::Waiting;
                return;
            } else {
                run.phase = Phase::Done;
                return;
            };
            let (goal, next) = if timed_out {
                (legs[next - 1], next)
            } else {
                (goal, next + 1)
            };
            match &run.entry.task {
                Task::RobotPush { robot, .. } => out.push(CommandBody::MoveRobot {
                    robot_id: *robot,
                    goal,
                }),
                Task::TeamPush { .. } => match view.teams.iter().find(|s| s.owner == me) {
                    Some(sel) => out.push(CommandBody::MoveTeam {
                        team_id: sel.team_id,
                        goal,
                    }),
                    None => {
                        run.phase = Phase::Waiting;
                        return;
                    }
                },
                Task::Transport { .. } => unreachable!("transports have no legs"),
            }
            run.phase = Phase::Legs {
                legs,
                next,
                issued_at: t,
                attempt,
                moved: false,
            };
        }
    }
}

/// The two-operator plan for the bundled scenario: each operator takes one
/// big object (object-oriented), one small object with a single robot and
/// one small object with a two-robot team.
pub fn default_scripts() -> Vec<OperatorScript> {
    let a = OperatorScript {
        name: "A".into(),
        tasks: vec![
            TaskEntry::now(Task::RobotPush {
                object: ObjectId(3),
                robot: RobotId(1),
            }),
            TaskEntry::now(Task::TeamPush {
                object: ObjectId(4),
                robots: vec![RobotId(4), RobotId(5)],
            }),
            TaskEntry::now(Task::Transport {
                object: ObjectId(1),
                lock: true,
                min_robots: 2,
            }),
        ],
        ..OperatorScript::default()
    };
    let b = OperatorScript {
        name: "B".into(),
        tasks: vec![
            TaskEntry::now(Task::RobotPush {
                object: ObjectId(6),
                robot: RobotId(9),
            }),
            TaskEntry::now(Task::TeamPush {
                object: ObjectId(5),
                robots: vec![RobotId(6), RobotId(7)],
            }),
            TaskEntry::after(
                Task::Transport {
                    object: ObjectId(2),
                    lock: true,
                    min_robots: 2,
                },
                &[ObjectId(6)],
            ),
        ],
        ..OperatorScript::default()
    };
    vec![a, b]
}
