use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{angle_diff, Vec2};
use super::types::*;
use crate::fsm::TransportState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("unknown robot {0} in command map")]
    UnknownRobot(RobotId),
    #[error("unknown object {0} in motion map")]
    UnknownObject(ObjectId),
}

/// Rigid-body velocity of an object, applied about its center.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectMotion {
    pub linear: Vec2,
    pub angular: f64,
}

/// Exact unicycle integration over `dt` for a constant twist.
pub fn integrate_unicycle(pose: Pose, cmd: Twist, dt: f64) -> Pose {
    let Twist { v, omega } = cmd;
    let th = pose.theta;
    if omega.abs() < 1e-9 {
        Pose::new(
            pose.x + v * dt * th.cos(),
            pose.y + v * dt * th.sin(),
            th + omega * dt,
        )
    } else {
        let th2 = th + omega * dt;
        let r = v / omega;
        Pose::new(
            pose.x + r * (th2.sin() - th.sin()),
            pose.y - r * (th2.cos() - th.cos()),
            th2,
        )
    }
}

/// Advances one robot by `dt` under `cmd`. A faulted robot keeps its pose
/// and reports zero twist.
pub fn step_kinematics(robot: &RobotState, cmd: Twist, dt: f64) -> Result<RobotState, SimError> {
    if !(robot.pose.is_finite() && cmd.v.is_finite() && cmd.omega.is_finite() && dt.is_finite()) {
        return Err(SimError::NonFinite("step_kinematics"));
    }
    if dt <= 0.0 {
        return Err(SimError::BadTimeStep(dt));
    }
    let mut next = robot.clone();
    if robot.fault {
        next.twist = Twist::ZERO;
    } else {
        next.pose = integrate_unicycle(robot.pose, cmd, dt);
        next.twist = cmd;
    }
    Ok(next)
}

/// True iff the gap between the robot disc and the object rectangle is at
/// most `tolerance`.
pub fn contact(robot: &RobotState, object: &TransportObjectState, tolerance: f64) -> bool {
    object.rect().distance(robot.position()) - robot.radius <= tolerance
}

/// True iff the object rests on its operator goal (heading included when the
/// goal came from a rotation). No goal means false.
pub fn at_goal(object: &TransportObjectState, cfg: &SimConfig) -> bool {
    let Some(goal) = object.goal else {
        return false;
    };
    let pos_ok = object.pose.position().distance(goal.pose.position()) <= cfg.pos_tolerance;
    let ang_ok =
        !goal.orient || angle_diff(goal.pose.theta, object.pose.theta).abs() <= cfg.ang_tolerance;
    pos_ok && ang_ok
}

/// True iff the object center lies within the positional tolerance of its
/// scoring target.
pub fn at_target(object: &TransportObjectState, cfg: &SimConfig) -> bool {
    object.pose.position().distance(object.target.position()) <= cfg.pos_tolerance
}

/// Objects that only move through their formation (or not at all).
fn held(world: &WorldState, object: &TransportObjectState) -> bool {
    object.delivered
        || world
            .robots
            .iter()
            .any(|r| r.transport_object() == Some(object.id))
}

/// Whether a formation motion request for `object` satisfies the
/// quasi-static contract: every assigned robot is healthy, in the same
/// Push/Rotate state and touching the object.
pub fn formation_may_move(
    world: &WorldState,
    object: &TransportObjectState,
    cfg: &SimConfig,
) -> bool {
    if object.delivered {
        return false;
    }
    let mut members = world
        .robots
        .iter()
        .filter(|r| r.transport_object() == Some(object.id))
        .peekable();
    let Some(first) = members.peek() else {
        return false;
    };
    let state = first.fsm;
    if !matches!(
        state,
        TransportState::PushObject | TransportState::RotateObject
    ) {
        return false;
    }
    members.all(|r| !r.fault && r.fsm == state && contact(r, object, cfg.contact_tolerance))
}

fn clamp_object(arena: &Arena, object: &mut TransportObjectState) {
    let (lo, hi) = object.rect().aabb();
    let mut shift = Vec2::ZERO;
    if lo.x < arena.min_x {
        shift.x = arena.min_x - lo.x;
    } else if hi.x > arena.max_x {
        shift.x = arena.max_x - hi.x;
    }
    if lo.y < arena.min_y {
        shift.y = arena.min_y - lo.y;
    } else if hi.y > arena.max_y {
        shift.y = arena.max_y - hi.y;
    }
    object.pose.x += shift.x;
    object.pose.y += shift.y;
}

const RESOLVE_PASSES: usize = 6;

/// Advances the whole world by one tick.
///
/// Robots missing from `cmds` keep their residual twist. Object motions are
/// honored only when [`formation_may_move`] holds on the pre-step state.
/// Free objects (no formation, not delivered) are shoved by robots that
/// drive into them; every other object is an obstacle robots are projected
/// out of. Robot overlaps are resolved in id order.
pub fn step_world(
    world: &WorldState,
    cmds: &BTreeMap<RobotId, Twist>,
    motions: &BTreeMap<ObjectId, ObjectMotion>,
    dt: f64,
    cfg: &SimConfig,
) -> Result<WorldState, SimError> {
    if !dt.is_finite() {
        return Err(SimError::NonFinite("step_world"));
    }
    if dt <= 0.0 {
        return Err(SimError::BadTimeStep(dt));
    }
    for (id, t) in cmds {
        if world.robot(*id).is_none() {
            return Err(SimError::UnknownRobot(*id));
        }
        if !(t.v.is_finite() && t.omega.is_finite()) {
            return Err(SimError::NonFinite("robot command"));
        }
    }
    for (id, m) in motions {
        if world.object(*id).is_none() {
            return Err(SimError::UnknownObject(*id));
        }
        if !(m.linear.is_finite() && m.angular.is_finite()) {
            return Err(SimError::NonFinite("object motion"));
        }
    }

    let mut next = world.clone();
    next.tick = world.tick + 1;
    next.sim_time = next.tick as f64 * dt;

    // Formation-driven objects.
    for (id, m) in motions {
        let obj = world.object(*id).expect("checked above");
        if !formation_may_move(world, obj, cfg) {
            continue;
        }
        let o = next.object_mut(*id).expect("same ids");
        o.pose = Pose::new(
            o.pose.x + m.linear.x * dt,
            o.pose.y + m.linear.y * dt,
            o.pose.theta + m.angular * dt,
        );
        clamp_object(&world.arena, o);
    }

    // Robot kinematics.
    for r in next.robots.iter_mut() {
        let cmd = cmds
            .get(&r.id)
            .copied()
            .unwrap_or(r.twist)
            .clamped(cfg.v_max, cfg.omega_max);
        *r = step_kinematics(r, cmd, dt)?;
    }

    // Manual pushing of free objects.
    let held_flags: Vec<bool> = world.objects.iter().map(|o| held(world, o)).collect();
    for ri in 0..next.robots.len() {
        if next.robots[ri].fault {
            continue;
        }
        let (c, radius) = (next.robots[ri].position(), next.robots[ri].radius);
        for (oi, o) in next.objects.iter_mut().enumerate() {
            if held_flags[oi] {
                continue;
            }
            let hit = o.rect().disc_contact(c, radius);
            if hit.penetration > 0.0 {
                let d = -hit.normal * hit.penetration;
                o.pose.x += d.x;
                o.pose.y += d.y;
                clamp_object(&world.arena, o);
            }
        }
    }

    for _ in 0..RESOLVE_PASSES {
        resolve_robot_objects(&mut next);
        resolve_robot_pairs(&mut next);
        for r in next.robots.iter_mut().filter(|r| !r.fault) {
            let p = next.arena.clamp_disc(r.position(), r.radius);
            r.pose.x = p.x;
            r.pose.y = p.y;
        }
    }

    for o in next.objects.iter_mut() {
        if !o.delivered && at_target(o, cfg) {
            o.delivered = true;
        }
    }
    Ok(next)
}

fn resolve_robot_objects(world: &mut WorldState) {
    let WorldState {
        robots, objects, ..
    } = world;
    for r in robots.iter_mut().filter(|r| !r.fault) {
        for o in objects.iter() {
            let hit = o.rect().disc_contact(r.position(), r.radius);
            if hit.penetration > 0.0 {
                let p = r.position() + hit.normal * hit.penetration;
                r.pose.x = p.x;
                r.pose.y = p.y;
            }
        }
    }
}

fn resolve_robot_pairs(world: &mut WorldState) {
    let n = world.robots.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&world.robots[i], &world.robots[j]);
            if a.fault && b.fault {
                continue;
            }
            let delta = b.position() - a.position();
            let dist = delta.norm();
            let overlap = a.radius + b.radius - dist;
            if overlap <= 0.0 {
                continue;
            }
            let n_ab = delta.normalized().unwrap_or(Vec2::new(1.0, 0.0));
            let (sa, sb) = match (a.fault, b.fault) {
                (true, false) => (0.0, 1.0),
                (false, true) => (1.0, 0.0),
                _ => (0.5, 0.5),
            };
            let (left, right) = world.robots.split_at_mut(j);
            let a = &mut left[i];
            let b = &mut right[0];
            a.pose.x -= n_ab.x * overlap * sa;
            a.pose.y -= n_ab.y * overlap * sa;
            b.pose.x += n_ab.x * overlap * sb;
            b.pose.y += n_ab.y * overlap * sb;
        }
    }
}
