//! Oracles and drivers shared by the integration tests and the acceptance
//! report. Everything here is written against the public API only.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use cotransport::command::{Command, CommandBody};
use cotransport::event::{Actor, AwarenessEvent, EventKind, EventPayload};
use cotransport::fsm::TransportState;
use cotransport::harness::{
    default_scripts, replay, run_headless, HeadlessOptions, OperatorScript, RandomSpec,
    ScenarioConfig, ScriptedOperator,
};
use cotransport::service::record::world_digest;
use cotransport::service::{logs_event, route_event, CommMode, Phase, Session, TickReport};
use cotransport::sim::{
    Assignment, Modality, ObjectId, OperatorId, Pose, RobotId, SimConfig, SizeClass, Vec2,
    WorldState,
};
use cotransport::stats::{borda, friedman, study_rankings, Include};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Outcome = Result<String, String>;

// ---------------------------------------------------------------- stats

/// Plain mid-rank of every cell, counted by comparison.
pub fn oracle_ranks(row: &[f64]) -> Vec<f64> {
    row.iter()
        .map(|&x| {
            let less = row.iter().filter(|&&y| y < x).count() as f64;
            let same = row.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (same - 1.0) / 2.0
        })
        .collect()
}

/// Friedman statistic in Conover's form, (k-1)(sum R_j^2 - nC) / (A - C),
/// which handles ties without a separate correction factor.
pub fn oracle_friedman(rows: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = rows.len() as f64;
    let k = rows[0].len();
    let ranks: Vec<Vec<f64>> = rows.iter().map(|r| oracle_ranks(r)).collect();
    let col: Vec<f64> = (0..k).map(|j| ranks.iter().map(|r| r[j]).sum()).collect();
    let a: f64 = ranks.iter().flatten().map(|r| r * r).sum();
    let kf = k as f64;
    let c = n * kf * (kf + 1.0) * (kf + 1.0) / 4.0;
    let s: f64 = col.iter().map(|r| r * r).sum();
    let chi2 = if a == c {
        0.0
    } else {
        (kf - 1.0) * (s - n * c) / (a - c)
    };
    (chi2, col.iter().map(|r| r / n).collect())
}

pub fn random_ratings(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rng.gen_range(2..=20);
    let k = rng.gen_range(2..=6);
    let levels = rng.gen_range(2..=7);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.05) {
                vec![3.0; k]
            } else {
                (0..k).map(|_| rng.gen_range(1..=levels) as f64).collect()
            }
        })
        .collect()
}

pub const FRIEDMAN_TOL: f64 = 1e-12;

pub fn friedman_oracle_check(matrices: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for m in 0..matrices {
        let rows = random_ratings(&mut rng);
        let got = friedman(&rows).map_err(|e| format!("matrix {m}: {e}"))?;
        let (chi2, mean) = oracle_friedman(&rows);
        let mut err = (got.chi2 - chi2).abs();
        for (a, b) in got.mean_ranks.iter().zip(&mean) {
            err = err.max((a - b).abs());
        }
        if err > FRIEDMAN_TOL {
            return Err(format!(
                "matrix {m}: chi2 {} vs oracle {chi2}, rows {rows:?}",
                got.chi2
            ));
        }
        worst = worst.max(err);
    }
    Ok(format!("{matrices} matrices, max abs error {worst:.1e}"))
}

pub fn friedman_analytic_check() -> Outcome {
    for n in 2..=20 {
        let tied = vec![vec![2.0; 4]; n];
        let r = friedman(&tied).map_err(|e| e.to_string())?;
        if r.chi2 != 0.0 || r.p != 1.0 {
            return Err(format!("all tied, n={n}: chi2 {} p {}", r.chi2, r.p));
        }
        let same = vec![vec![1.0, 2.0, 3.0, 4.0]; n];
        let r = friedman(&same).map_err(|e| e.to_string())?;
        if r.chi2 != 3.0 * n as f64 {
            return Err(format!(
                "identical rankings, n={n}: chi2 {} != {}",
                r.chi2,
                3 * n
            ));
        }
    }
    Ok("chi2 = 0 (all tied) and chi2 = 3n (k = 4, identical) for n = 2..20".into())
}

pub const EXPECTED_BORDA: [(CommMode, u32); 4] = [
    (CommMode::Nc, 18),
    (CommMode::Dc, 34),
    (CommMode::Ic, 33),
    (CommMode::Mc, 45),
];

pub fn borda_check() -> Outcome {
    let rankings = study_rankings();
    let start = Instant::now();
    let got = borda(&rankings, Include::Stated, true);
    let took = start.elapsed();
    let want: BTreeMap<CommMode, u32> = EXPECTED_BORDA.into_iter().collect();
    if rankings.len() != 13 {
        return Err(format!("{} ranked rows, expected 13", rankings.len()));
    }
    if got != want {
        return Err(format!("got {got:?}"));
    }
    if took >= Duration::from_millis(1) {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("NC=18 DC=34 IC=33 MC=45 in {took:?}"))
}

// ---------------------------------------------------------------- scenario

pub fn scenario_check() -> Outcome {
    let cfg = ScenarioConfig::default_scenario();
    let world = cfg.world();
    let big = world
        .objects
        .iter()
        .filter(|o| o.size_class == SizeClass::Big)
        .count();
    let small = world
        .objects
        .iter()
        .filter(|o| o.size_class == SizeClass::Small)
        .count();
    let mut problems = Vec::new();
    if world.robots.len() != 9 {
        problems.push(format!("{} robots", world.robots.len()));
    }
    if (big, small) != (2, 4) {
        problems.push(format!("{big} big + {small} small"));
    }
    for o in &world.objects {
        let want = if o.size_class == SizeClass::Big { 2 } else { 1 };
        if o.points != want {
            problems.push(format!("{} worth {}", o.id, o.points));
        }
        let object_ok = o.allows(Modality::ObjectOriented) == (o.size_class == SizeClass::Big);
        if !object_ok {
            problems.push(format!("{} modalities {:?}", o.id, o.allowed_modalities));
        }
    }
    if cfg.max_points() != 8 {
        problems.push(format!("max {} points", cfg.max_points()));
    }
    if cfg.time_limit_s != 480.0 || cfg.ticks() != 4800 {
        problems.push(format!("{} s / {} ticks", cfg.time_limit_s, cfg.ticks()));
    }
    if problems.is_empty() {
        Ok("9 robots, 2 big (2 pts) + 4 small (1 pt), max 8, 480 s = 4800 ticks".into())
    } else {
        Err(problems.join("; "))
    }
}

// ---------------------------------------------------------------- end to end

pub fn end_to_end_check() -> Outcome {
    let start = Instant::now();
    let cfg = ScenarioConfig::default_scenario();
    let out = run_headless(&cfg, default_scripts(), &HeadlessOptions::default())
        .map_err(|e| e.to_string())?;
    let s = &out.status;
    if s.points_scored != 8 || s.phase != Phase::Finished || s.sim_time > 480.0 {
        return Err(format!("status {s:?}"));
    }
    if out.report.deliveries.len() != 6 {
        return Err(format!("{} deliveries", out.report.deliveries.len()));
    }
    let used = out.report.modalities_used();
    for m in [
        Modality::ObjectOriented,
        Modality::RobotOriented,
        Modality::TeamOriented,
    ] {
        if !used.contains(&m) {
            return Err(format!("{m:?} never used"));
        }
    }
    let rep = replay(out.log.as_bytes()).map_err(|e| format!("replay: {e}"))?;
    if rep.status != out.status {
        return Err(format!("replayed status {:?}", rep.status));
    }
    let a = serde_json::to_string(&out.world).expect("world serializes");
    let b = serde_json::to_string(&rep.world).expect("world serializes");
    if a != b || rep.digest != world_digest(&out.world) {
        return Err("replayed world differs".into());
    }
    let took = start.elapsed();
    if took >= Duration::from_secs(30) {
        return Err(format!("took {took:?}"));
    }
    Ok(format!(
        "8/8 points at {:.1} s simulated, 6 deliveries, {} commands, replay identical, {took:.2?} wall",
        s.sim_time,
        out.report.total_commands()
    ))
}

// ---------------------------------------------------------------- fsm

/// The transport machine's edges, plus cancel-to-Idle, pause/resume and
/// re-planning back to ReachObject.
pub fn allowed_edge(from: TransportState, to: TransportState) -> bool {
    use TransportState::*;
    let machine = [
        (Idle, ReachObject),
        (ReachObject, ApproachObject),
        (ApproachObject, PushObject),
        (ApproachObject, RotateObject),
        (PushObject, ApproachObject),
        (RotateObject, ApproachObject),
    ];
    let bookkeeping = [
        (ReachObject, Paused),
        (ApproachObject, Paused),
        (PushObject, Paused),
        (RotateObject, Paused),
        (Paused, ReachObject),
        (Paused, ApproachObject),
        (ApproachObject, ReachObject),
        (PushObject, ReachObject),
        (RotateObject, ReachObject),
    ];
    to == Idle || machine.contains(&(from, to)) || bookkeeping.contains(&(from, to))
}

fn gap(world: &WorldState, robot: RobotId, object: ObjectId) -> f64 {
    let r = world.robot(robot).expect("robot");
    world
        .object(object)
        .expect("object")
        .rect()
        .distance(r.position())
        - r.radius
}

/// Checks one traced tick: every FSM change is an allowed edge, and every
/// object that moved was either carried by a healthy formation all in the
/// same Push/Rotate state and in contact, or was free and shoved by a
/// healthy robot that could reach it within the tick.
pub fn check_tick(report: &TickReport, after: &WorldState, sim: &SimConfig) -> Result<(), String> {
    let contact_tol = sim.contact_tolerance;
    for t in &report.transitions {
        if !allowed_edge(t.from, t.to) {
            return Err(format!(
                "tick {}: {} {:?} -> {:?} in {:?}",
                report.tick, t.robot, t.from, t.to, t.stage
            ));
        }
    }
    let pre = report.pre_step.as_ref().ok_or("tick was not traced")?;
    for (o0, o1) in pre.objects.iter().zip(&after.objects) {
        if o0.pose == o1.pose {
            continue;
        }
        if o0.delivered {
            return Err(format!("tick {}: delivered {} moved", report.tick, o0.id));
        }
        let members: Vec<_> = pre
            .robots
            .iter()
            .filter(|r| r.transport_object() == Some(o0.id))
            .collect();
        if let Some(first) = members.first() {
            let state = first.fsm;
            let moving = matches!(
                state,
                TransportState::PushObject | TransportState::RotateObject
            );
            let ok = moving
                && members
                    .iter()
                    .all(|r| !r.fault && r.fsm == state && gap(pre, r.id, o0.id) <= contact_tol);
            if !ok {
                let detail: Vec<_> = members
                    .iter()
                    .map(|r| {
                        format!(
                            "{} {:?} fault={} gap={:.4}",
                            r.id,
                            r.fsm,
                            r.fault,
                            gap(pre, r.id, o0.id)
                        )
                    })
                    .collect();
                return Err(format!(
                    "tick {}: {} moved with team [{}]",
                    report.tick,
                    o0.id,
                    detail.join(", ")
                ));
            }
        } else {
            // Judged on the pre-step world: the pusher may be separated from
            // the object again by robot-robot resolution after the shove.
            let reach = sim.v_max * sim.dt + contact_tol;
            let pusher = pre
                .robots
                .iter()
                .any(|r| !r.fault && gap(pre, r.id, o0.id) <= reach);
            if !pusher {
                return Err(format!(
                    "tick {}: free {} moved with nobody touching it",
                    report.tick, o0.id
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct FuzzStats {
    pub ticks: u64,
    pub games: u32,
    pub commands: u64,
    pub faults: u64,
    pub transitions: u64,
    pub object_moves: u64,
    pub formation_moves: u64,
    pub states_seen: BTreeSet<TransportState>,
}

/// Random operators plus random fault toggles for `steps` ticks, restarting
/// the game whenever one finishes.
pub fn fsm_fuzz(seed: u64, steps: u64) -> Result<FuzzStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FuzzStats::default();
    let mut cfg = ScenarioConfig::default_scenario();
    cfg.time_limit_s = 250.0;
    cfg.transport_team_size = None;
    let sim = cfg.sim;
    while stats.ticks < steps {
        stats.games += 1;
        let mut session = Session::new(cfg.session_config(), cfg.world());
        session.trace = true;
        let mut ops = Vec::new();
        // One impatient operator and one that leaves transports time to
        // get going.
        for (name, period) in [
            ("A", rng.gen_range(0.3..3.0)),
            ("B", rng.gen_range(5.0..40.0)),
        ] {
            let id = session.join(name).map_err(|e| e.to_string())?;
            let script = OperatorScript {
                name: name.into(),
                random: Some(RandomSpec {
                    seed: rng.gen(),
                    period_s: period,
                }),
                ..OperatorScript::default()
            };
            ops.push(ScriptedOperator::new(id, script));
        }
        while session.phase() == Phase::Running && stats.ticks < steps {
            let t = session.world.sim_time;
            for op in &mut ops {
                let view = session.snapshot(op.id).map_err(|e| e.to_string())?;
                for body in op.poll(&view, t) {
                    session.submit(op.id, body).map_err(|e| e.to_string())?;
                    stats.commands += 1;
                }
            }
            if rng.gen_bool(0.01) {
                let r = RobotId(rng.gen_range(1..=9));
                let on = !session.world.robot(r).expect("robot").fault;
                session.inject_fault(r, on).map_err(|e| e.to_string())?;
                stats.faults += 1;
            }
            let before: Vec<Pose> = session.world.objects.iter().map(|o| o.pose).collect();
            let report = session
                .run_tick()
                .map_err(|e| format!("tick {}: {e}", session.world.tick))?;
            check_tick(&report, &session.world, &sim)?;
            let pre = report.pre_step.as_ref().expect("traced");
            for (p, o) in before.iter().zip(&session.world.objects) {
                if *p != o.pose {
                    stats.object_moves += 1;
                    if pre
                        .robots
                        .iter()
                        .any(|r| r.transport_object() == Some(o.id))
                    {
                        stats.formation_moves += 1;
                    }
                }
            }
            stats.transitions += report.transitions.len() as u64;
            stats
                .states_seen
                .extend(session.world.robots.iter().map(|r| r.fsm));
            stats.ticks += 1;
        }
    }
    Ok(stats)
}

/// A two-robot push of obj1; one member faults once the push is under way.
/// Returns the number of ticks until every healthy member is back in
/// ApproachObject.
pub fn fault_regression_ticks() -> Result<u64, String> {
    let mut cfg = ScenarioConfig::default_scenario();
    cfg.players = 1;
    let mut session = Session::new(cfg.session_config(), cfg.world());
    let op = session.join("A").map_err(|e| e.to_string())?;
    let obj = ObjectId(1);
    session
        .submit(
            op,
            CommandBody::MoveObject {
                object_id: obj,
                goal: Pose::new(-0.9, 1.2, 0.0),
            },
        )
        .map_err(|e| e.to_string())?;
    let members = |s: &Session| -> Vec<RobotId> {
        s.world
            .robots
            .iter()
            .filter(|r| r.transport_object() == Some(obj))
            .map(|r| r.id)
            .collect()
    };
    let mut pushing = 0;
    for _ in 0..3000 {
        session.run_tick().map_err(|e| e.to_string())?;
        let m = members(&session);
        let all_push = !m.is_empty()
            && m.iter().all(|id| {
                session.world.robot(*id).expect("robot").fsm == TransportState::PushObject
            });
        pushing = if all_push { pushing + 1 } else { 0 };
        // Well into the push, not on its first tick.
        if pushing == 20 {
            break;
        }
    }
    if pushing < 20 {
        return Err("the team never settled into PushObject".into());
    }
    let team = members(&session);
    let victim = team[0];
    session
        .inject_fault(victim, true)
        .map_err(|e| e.to_string())?;
    for n in 1..=10u64 {
        session.run_tick().map_err(|e| e.to_string())?;
        let rest: Vec<_> = team.iter().filter(|id| **id != victim).collect();
        if rest.iter().all(|id| {
            session.world.robot(**id).expect("robot").fsm == TransportState::ApproachObject
        }) {
            let v = session.world.robot(victim).expect("robot");
            if v.transport_object().is_some() {
                return Err(format!("faulted {victim} still assigned"));
            }
            return Ok(n);
        }
    }
    Err("team did not regress within 10 ticks".into())
}

// ---------------------------------------------------------------- conflicts

/// One submitted command in a conflict scenario.
#[derive(Debug, Clone)]
pub struct Submitted {
    pub tick: u8,
    pub issuer: u32,
    pub body: CommandBody,
}

fn is_big(id: ObjectId) -> bool {
    id.0 == 1 || id.0 == 2
}

/// Replays `cmds` through a session (arrival order within a tick shuffled
/// by `shuffle_seed`) and compares every entity's goal with the last
/// accepted command on it, found by a linear scan of the whole history.
pub fn conflict_case(cmds: &[Submitted], shuffle_seed: u64) -> Result<(), String> {
    let mut cfg = ScenarioConfig::default_scenario();
    cfg.players = 3;
    let mut session = Session::new(cfg.session_config(), cfg.world());
    for name in ["A", "B", "C"] {
        session.join(name).map_err(|e| e.to_string())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let stamped: Vec<(u8, Command)> = cmds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (
                c.tick,
                Command {
                    seq: i as u64,
                    issuer: OperatorId(c.issuer),
                    body: c.body.clone(),
                },
            )
        })
        .collect();
    let last_tick = cmds.iter().map(|c| c.tick).max().unwrap_or(0);

    // Team bookkeeping for the oracle: which team each SelectTeam created,
    // and its members, read off the TeamCreated events by command order.
    let mut created = Vec::new();
    for tick in 0..=last_tick {
        let mut batch: Vec<Command> = stamped
            .iter()
            .filter(|(t, _)| *t == tick)
            .map(|(_, c)| c.clone())
            .collect();
        batch.shuffle(&mut rng);
        for c in batch {
            session.enqueue(c);
        }
        let report = session.run_tick().map_err(|e| e.to_string())?;
        for ev in &report.events {
            if let EventPayload::TeamCreated { team, members, .. } = &ev.payload {
                created.push((*team, members.clone()));
            }
        }
        check_ownership_invariants(&session)?;
    }

    // Oracle.
    let mut created = created.into_iter();
    let mut teams: BTreeMap<u32, (OperatorId, Vec<RobotId>)> = BTreeMap::new();
    let mut object_goal: BTreeMap<ObjectId, (OperatorId, &CommandBody)> = BTreeMap::new();
    let mut robot_goal: BTreeMap<RobotId, Assignment> = BTreeMap::new();
    let mut team_marker: BTreeMap<u32, Vec2> = BTreeMap::new();
    for (_, c) in &stamped {
        match &c.body {
            CommandBody::MoveObject { object_id, .. }
            | CommandBody::RotateObject { object_id, .. } => {
                if is_big(*object_id) {
                    object_goal.insert(*object_id, (c.issuer, &c.body));
                }
            }
            CommandBody::MoveRobot { robot_id, goal } => {
                if robot_id.0 >= 1 && robot_id.0 <= 9 {
                    robot_goal.insert(
                        *robot_id,
                        Assignment::Waypoint {
                            goal: *goal,
                            issuer: c.issuer,
                        },
                    );
                }
            }
            CommandBody::SelectTeam { .. } => {
                let (team, members) = created.next().ok_or("SelectTeam without TeamCreated")?;
                teams.retain(|_, (owner, _)| *owner != c.issuer);
                teams.insert(team.0, (c.issuer, members));
            }
            CommandBody::MoveTeam { team_id, goal } => {
                if let Some((owner, members)) = teams.get(&team_id.0) {
                    if *owner == c.issuer {
                        team_marker.insert(team_id.0, *goal);
                        for r in members {
                            robot_goal.insert(
                                *r,
                                Assignment::TeamMove {
                                    team: *team_id,
                                    marker: *goal,
                                    target: Vec2::ZERO,
                                    issuer: c.issuer,
                                },
                            );
                        }
                    }
                }
            }
            _ => {}
        }
    }

    let world = &session.world;
    for (oid, (issuer, body)) in &object_goal {
        let goal = world
            .object(*oid)
            .and_then(|o| o.goal)
            .ok_or(format!("{oid} lost its goal"))?;
        let ok = match body {
            CommandBody::MoveObject { goal: g, .. } => {
                !goal.orient && goal.pose == Pose::new(g.x, g.y, g.theta)
            }
            CommandBody::RotateObject { goal_theta, .. } => {
                goal.orient && goal.pose.theta == Pose::new(0.0, 0.0, *goal_theta).theta
            }
            _ => unreachable!(),
        };
        if !ok || session.commands.goal_issuer.get(oid) != Some(issuer) {
            return Err(format!(
                "{oid}: goal {goal:?}, expected from {body:?} by {issuer}"
            ));
        }
    }
    for (id, (owner, _)) in &teams {
        let t = session
            .commands
            .teams
            .get(&cotransport::sim::TeamId(*id))
            .ok_or(format!("team{id} missing"))?;
        if t.owner != *owner {
            return Err(format!("team{id} owned by {}", t.owner));
        }
        if let Some(m) = team_marker.get(id) {
            if t.centroid_marker != *m {
                return Err(format!(
                    "team{id} marker {:?} expected {m:?}",
                    t.centroid_marker
                ));
            }
        }
    }
    for (rid, want) in &robot_goal {
        let got = world.robot(*rid).expect("robot").assignment;
        let ok = match (got, want) {
            (
                Some(Assignment::Waypoint { goal, issuer }),
                Assignment::Waypoint { goal: g, issuer: i },
            ) => goal == *g && issuer == *i,
            (
                Some(Assignment::TeamMove {
                    team,
                    marker,
                    issuer,
                    ..
                }),
                Assignment::TeamMove {
                    team: t,
                    marker: m,
                    issuer: i,
                    ..
                },
            ) => team == *t && marker == *m && issuer == *i,
            _ => false,
        };
        if !ok {
            return Err(format!("{rid}: assignment {got:?}, expected {want:?}"));
        }
    }
    Ok(())
}

pub fn check_ownership_invariants(session: &Session) -> Result<(), String> {
    let mut owners = BTreeSet::new();
    for t in session.commands.teams.values() {
        if !owners.insert(t.owner) {
            return Err(format!("{} owns two teams", t.owner));
        }
    }
    let mut lockers = BTreeSet::new();
    for o in &session.world.objects {
        if let Some(owner) = o.lock_owner {
            if !lockers.insert(owner) {
                return Err(format!("{owner} holds two locks"));
            }
        }
    }
    Ok(())
}

pub fn random_submitted(rng: &mut ChaCha8Rng, len: usize) -> Vec<Submitted> {
    let mut tick = 0u8;
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.3) && tick < 4 {
                tick += 1;
            }
            Submitted {
                tick,
                issuer: rng.gen_range(1..=3),
                body: random_body(rng),
            }
        })
        .collect()
}

/// Commands over a small id range so that they collide often. Robot goals
/// are far from the spawn row so nobody arrives within a few ticks.
pub fn random_body(rng: &mut ChaCha8Rng) -> CommandBody {
    let far = |rng: &mut ChaCha8Rng| Vec2::new(rng.gen_range(-1.8..1.8), rng.gen_range(0.3..1.8));
    let object_id = ObjectId(rng.gen_range(1..=7));
    match rng.gen_range(0..8) {
        0 | 1 => {
            let g = far(rng);
            CommandBody::MoveObject {
                object_id,
                goal: Pose::new(g.x, g.y, rng.gen_range(-3.0..3.0)),
            }
        }
        2 => CommandBody::RotateObject {
            object_id,
            goal_theta: rng.gen_range(-3.0..3.0),
        },
        3 => CommandBody::MoveRobot {
            robot_id: RobotId(rng.gen_range(1..=10)),
            goal: far(rng),
        },
        4 => {
            let x0 = rng.gen_range(-2.0..1.5);
            let w = rng.gen_range(0.1..2.0);
            CommandBody::SelectTeam {
                polygon: vec![
                    Vec2::new(x0, -1.9),
                    Vec2::new(x0 + w, -1.9),
                    Vec2::new(x0 + w, -1.3),
                    Vec2::new(x0, -1.3),
                ],
            }
        }
        5 => CommandBody::MoveTeam {
            team_id: cotransport::sim::TeamId(rng.gen_range(1..=6)),
            goal: far(rng),
        },
        6 => CommandBody::LockObject { object_id },
        _ => CommandBody::UnlockObject { object_id },
    }
}

// ---------------------------------------------------------------- gating

/// Operator actions, as opposed to robot and world facts.
pub fn is_operator_action(kind: EventKind) -> bool {
    matches!(
        kind,
        EventKind::ObjectMoved
            | EventKind::ObjectRotated
            | EventKind::RobotMoved
            | EventKind::TeamCreated
            | EventKind::TeamMoved
            | EventKind::LockChanged
    )
}

pub fn sample_payload(kind: EventKind) -> EventPayload {
    match kind {
        EventKind::ObjectMoved => EventPayload::ObjectMoved {
            object: ObjectId(1),
            goal: Pose::new(0.5, 0.5, 0.0),
        },
        EventKind::ObjectRotated => EventPayload::ObjectRotated {
            object: ObjectId(1),
            goal_theta: 1.0,
        },
        EventKind::RobotMoved => EventPayload::RobotMoved {
            robot: RobotId(1),
            goal: Vec2::new(0.1, 0.2),
        },
        EventKind::TeamCreated => EventPayload::TeamCreated {
            team: cotransport::sim::TeamId(1),
            members: vec![RobotId(1)],
            marker: Vec2::ZERO,
        },
        EventKind::TeamMoved => EventPayload::TeamMoved {
            team: cotransport::sim::TeamId(1),
            goal: Vec2::ZERO,
        },
        EventKind::LockChanged => EventPayload::LockChanged {
            object: ObjectId(1),
            owner: Some(OperatorId(1)),
            released: None,
        },
        EventKind::RobotStateChanged => EventPayload::RobotStateChanged {
            robot: RobotId(1),
            status: "idle".into(),
            idle: true,
        },
        EventKind::Fault => EventPayload::Fault {
            robot: RobotId(1),
            on: true,
        },
        EventKind::Delivery => EventPayload::Delivery {
            object: ObjectId(1),
            points: 2,
        },
        EventKind::Score => EventPayload::Score {
            points: 2,
            max_points: 8,
        },
    }
}

/// Exhaustive kind x mode x actor x recipient table for the routing rules.
pub fn routing_matrix() -> Result<usize, String> {
    let mut cells = 0;
    let actors = [
        Actor::Operator(OperatorId(1)),
        Actor::Operator(OperatorId(2)),
        Actor::Robot(RobotId(3)),
        Actor::System,
    ];
    for kind in EventKind::ALL {
        for mode in CommMode::ALL {
            for actor in actors {
                let payload = sample_payload(kind);
                let ev = AwarenessEvent {
                    seq: 0,
                    sim_time: 0.0,
                    actor,
                    visibility: kind.visibility(),
                    payload,
                };
                for recipient in [OperatorId(1), OperatorId(2), OperatorId(3)] {
                    cells += 1;
                    let own = actor == Actor::Operator(recipient);
                    let indirect = matches!(mode, CommMode::Ic | CommMode::Mc);
                    let want_route = !is_operator_action(kind) || own || indirect;
                    let want_log = is_operator_action(kind) && !own && indirect;
                    let route = route_event(mode, &ev, recipient);
                    let log = logs_event(mode, &ev, recipient);
                    if route != want_route || log != want_log {
                        return Err(format!(
                            "{kind:?} in {mode} from {actor:?} to {recipient}: route {route} log {log}"
                        ));
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// Plays one command of every kind from A in each mode (plus a fault and a
/// delivery) and inspects what B's interface shows after every tick.
pub fn session_gating(mode: CommMode) -> Result<BTreeSet<EventKind>, String> {
    let mut cfg = ScenarioConfig::default_scenario();
    cfg.mode = mode;
    let mut world = cfg.world();
    // obj6 starts on its target so the first tick delivers it.
    let o6 = world.object_mut(ObjectId(6)).expect("obj6");
    o6.pose = Pose::new(o6.target.x + 0.03, o6.target.y, 0.0);
    let mut session = Session::new(cfg.session_config(), world);
    let a = session.join("A").map_err(|e| e.to_string())?;
    let b = session.join("B").map_err(|e| e.to_string())?;
    let square = |x: f64| {
        vec![
            Vec2::new(x - 0.1, -1.8),
            Vec2::new(x + 0.5, -1.8),
            Vec2::new(x + 0.5, -1.4),
            Vec2::new(x - 0.1, -1.4),
        ]
    };
    let script = vec![
        CommandBody::MoveObject {
            object_id: ObjectId(1),
            goal: Pose::new(-0.9, 0.5, 0.0),
        },
        CommandBody::RotateObject {
            object_id: ObjectId(2),
            goal_theta: 1.0,
        },
        CommandBody::MoveRobot {
            robot_id: RobotId(9),
            goal: Vec2::new(1.5, 0.0),
        },
        CommandBody::SelectTeam {
            polygon: square(-0.4),
        },
        CommandBody::MoveTeam {
            team_id: cotransport::sim::TeamId(1),
            goal: Vec2::new(0.0, 0.6),
        },
        CommandBody::LockObject {
            object_id: ObjectId(3),
        },
        CommandBody::UnlockObject {
            object_id: ObjectId(3),
        },
        CommandBody::LockObject {
            object_id: ObjectId(4),
        },
    ];
    let indirect = matches!(mode, CommMode::Ic | CommMode::Mc);
    let mut kinds = BTreeSet::new();
    let mut a_lines = 0;
    for (i, body) in script.into_iter().enumerate() {
        session.submit(a, body).map_err(|e| e.to_string())?;
        if i == 2 {
            session
                .inject_fault(RobotId(8), true)
                .map_err(|e| e.to_string())?;
        }
        let report = session.run_tick().map_err(|e| e.to_string())?;
        if let Some(c) = report.commands.iter().find(|c| c.rejection.is_some()) {
            return Err(format!("{:?} rejected: {:?}", c.command.body, c.rejection));
        }
        for ev in &report.events {
            kinds.insert(ev.kind());
            if is_operator_action(ev.kind()) {
                a_lines += 1;
            }
        }
        let view = session.snapshot(b).map_err(|e| e.to_string())?;
        if view.log.len() > 3 {
            return Err(format!("log of {} entries", view.log.len()));
        }
        let from_a = view.log.iter().filter(|l| l.starts_with("A ")).count();
        let goals = view.objects.iter().filter(|o| o.goal.is_some()).count();
        let locks = view
            .objects
            .iter()
            .filter(|o| o.lock_owner.is_some())
            .count();
        let teams = view.teams.len() + view.robots.iter().filter(|r| r.team.is_some()).count();
        if indirect {
            if from_a != a_lines.min(3) || from_a != view.log.len() {
                return Err(format!(
                    "{mode}: B's log {:?} after {a_lines} actions by A",
                    view.log
                ));
            }
            if i >= 1 && goals != 2 {
                return Err(format!("{mode}: B sees {goals} object goals"));
            }
            if i >= 3 && teams == 0 {
                return Err(format!("{mode}: B cannot see A's team"));
            }
            if (i == 5 || i == 7) && locks != 1 {
                return Err(format!("{mode}: B sees {locks} locks"));
            }
        } else if from_a + goals + locks + teams > 0 {
            return Err(format!(
                "{mode}: A's actions leak to B (log {:?}, {goals} goals, {locks} locks, {teams} team marks)",
                view.log
            ));
        }
        // A's own interface always reflects A's actions, and A's log never
        // echoes them.
        let own = session.snapshot(a).map_err(|e| e.to_string())?;
        if own.log.iter().any(|l| l.starts_with("A ")) {
            return Err(format!("{mode}: A's log echoes A: {:?}", own.log));
        }
        if i >= 1 && own.objects.iter().filter(|o| o.goal.is_some()).count() != 2 {
            return Err(format!("{mode}: A cannot see its own goals"));
        }
    }
    Ok(kinds)
}

/// Random commands from both operators; B's log never exceeds three lines
/// and never shows A's actions outside the indirect modes.
pub fn random_log_bound(mode: CommMode, seed: u64, ticks: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ScenarioConfig::default_scenario();
    cfg.mode = mode;
    let mut session = Session::new(cfg.session_config(), cfg.world());
    let a = session.join("A").map_err(|e| e.to_string())?;
    let b = session.join("B").map_err(|e| e.to_string())?;
    let indirect = matches!(mode, CommMode::Ic | CommMode::Mc);
    for _ in 0..ticks {
        for _ in 0..rng.gen_range(0..4) {
            let who = if rng.gen_bool(0.5) { a } else { b };
            session
                .submit(who, random_body(&mut rng))
                .map_err(|e| e.to_string())?;
        }
        session.run_tick().map_err(|e| e.to_string())?;
        for (me, other) in [(a, "B "), (b, "A ")] {
            let view = session.snapshot(me).map_err(|e| e.to_string())?;
            if view.log.len() > 3 {
                return Err(format!("{mode}: log of {}", view.log.len()));
            }
            if !indirect && view.log.iter().any(|l| l.starts_with(other)) {
                return Err(format!("{mode}: {:?}", view.log));
            }
        }
    }
    Ok(())
}
