use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use super::plan::{FormationMode, FormationPlan, Slot};
use super::state::TransportState;
use super::FsmError;
use crate::sim::{
    angle_diff, at_goal, contact, ObjectMotion, RobotState, SimConfig, TransportObjectState, Twist,
    Vec2, WorldState,
};

/// Controller parameters. None of these come with the hardware; they are
/// tuned for the default robot radius and speed limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsmConfig {
    /// Gap between a slot and the object face.
    pub standoff: f64,
    /// Free space between neighbouring robots on a face.
    pub slot_gap: f64,
    /// Reach completion radius around each slot.
    pub slot_tolerance: f64,
    /// Slot distance beyond which the formation counts as broken.
    pub break_threshold: f64,
    /// Heading error accepted as "facing".
    pub facing_tolerance: f64,
    pub push_speed: f64,
    /// Object yaw rate while rotating, rad/s.
    pub rotate_speed: f64,
    pub approach_speed: f64,
    /// Extra clearance of the travel lane around the object.
    pub lane_clearance: f64,
    pub arrive_tolerance: f64,
    pub k_heading: f64,
    pub k_distance: f64,
    pub k_track: f64,
}

impl FsmConfig {
    /// Break threshold derived from the contact tolerance: twice the
    /// tolerance plus 5 cm.
    pub fn with_contact_tolerance(contact_tolerance: f64) -> Self {
        Self {
            break_threshold: 2.0 * contact_tolerance + 0.05,
            ..Self::default()
        }
    }
}

impl Default for FsmConfig {
    fn default() -> Self {
        Self {
            standoff: 0.005,
            slot_gap: 0.02,
            slot_tolerance: 0.03,
            break_threshold: 2.0 * 0.01 + 0.05,
            facing_tolerance: 0.05,
            push_speed: 0.1,
            rotate_speed: 0.3,
            approach_speed: 0.05,
            lane_clearance: 0.01,
            arrive_tolerance: 0.01,
            k_heading: 3.0,
            k_distance: 1.5,
            k_track: 2.0,
        }
    }
}

/// Result of one controller evaluation for one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsmStepOutput {
    pub next_state: TransportState,
    pub cmd: Twist,
}

impl FsmStepOutput {
    fn hold(state: TransportState) -> Self {
        Self {
            next_state: state,
            cmd: Twist::ZERO,
        }
    }
}

/// Drives toward `goal`, turning in place first when badly misaligned.
pub fn go_to_point(
    robot: &RobotState,
    goal: Vec2,
    v_cap: f64,
    sim: &SimConfig,
    cfg: &FsmConfig,
) -> Twist {
    let d = goal - robot.position();
    let dist = d.norm();
    if dist <= cfg.arrive_tolerance {
        return Twist::ZERO;
    }
    let err = angle_diff(d.angle(), robot.pose.theta);
    let omega = (cfg.k_heading * err).clamp(-sim.omega_max, sim.omega_max);
    let v = if err.abs() > FRAC_PI_4 {
        0.0
    } else {
        (cfg.k_distance * dist).min(v_cap).min(sim.v_max) * err.cos()
    };
    Twist::new(v, omega)
}

fn turn_to(robot: &RobotState, heading: f64, sim: &SimConfig, cfg: &FsmConfig) -> Twist {
    let err = angle_diff(heading, robot.pose.theta);
    Twist::new(
        0.0,
        (cfg.k_heading * err).clamp(-sim.omega_max, sim.omega_max),
    )
}

fn members<'a>(
    plan: &'a FormationPlan,
    world: &'a WorldState,
) -> impl Iterator<Item = (&'a Slot, Option<&'a RobotState>)> + 'a {
    plan.slots.iter().map(move |s| (s, world.robot(s.robot)))
}

fn object_of<'a>(
    plan: &FormationPlan,
    world: &'a WorldState,
) -> Result<&'a TransportObjectState, FsmError> {
    world
        .object(plan.object)
        .ok_or(FsmError::MissingObject(plan.object))
}

/// Distance of the travel lane from the object faces.
fn lane_offset(radius: f64, cfg: &FsmConfig) -> f64 {
    3.0 * radius + cfg.standoff + cfg.lane_clearance
}

/// Heading each member must hold while pushing or rotating.
fn drive_heading(slot: &Slot, plan: &FormationPlan, object: &TransportObjectState) -> f64 {
    match plan.mode {
        FormationMode::Translate => {
            let d = plan.goal.position() - object.pose.position();
            d.normalized()
                .map(Vec2::angle)
                .unwrap_or_else(|| slot.world(&object.pose).theta)
        }
        FormationMode::Rotate => slot.world(&object.pose).theta,
    }
}

/// Every member is within slot tolerance of its slot.
pub fn all_at_slots(plan: &FormationPlan, world: &WorldState, cfg: &FsmConfig) -> bool {
    let Some(object) = world.object(plan.object) else {
        return false;
    };
    members(plan, world).all(|(s, r)| {
        r.is_some_and(|r| {
            r.position().distance(s.world(&object.pose).position()) <= cfg.slot_tolerance
        })
    })
}

/// Every member touches the object.
pub fn all_in_contact(plan: &FormationPlan, world: &WorldState, sim: &SimConfig) -> bool {
    let Some(object) = world.object(plan.object) else {
        return false;
    };
    !plan.slots.is_empty()
        && members(plan, world)
            .all(|(_, r)| r.is_some_and(|r| contact(r, object, sim.contact_tolerance)))
}

fn all_facing(plan: &FormationPlan, world: &WorldState, cfg: &FsmConfig) -> bool {
    let Some(object) = world.object(plan.object) else {
        return false;
    };
    members(plan, world).all(|(s, r)| {
        r.is_some_and(|r| {
            angle_diff(drive_heading(s, plan, object), r.pose.theta).abs() <= cfg.facing_tolerance
        })
    })
}

/// True iff a member is gone or faulted, strays farther than the break
/// threshold from its slot (strictly), or lost contact while in
/// Push/Rotate.
pub fn formation_broken(
    plan: &FormationPlan,
    world: &WorldState,
    sim: &SimConfig,
    cfg: &FsmConfig,
) -> bool {
    let Some(object) = world.object(plan.object) else {
        return true;
    };
    members(plan, world).any(|(s, r)| match r {
        None => true,
        Some(r) => {
            r.fault
                || r.position().distance(s.world(&object.pose).position()) > cfg.break_threshold
                || (r.fsm.is_moving_object() && !contact(r, object, sim.contact_tolerance))
        }
    })
}

/// Velocity the formation imposes on its object this tick, or `None` when
/// the formation is not (yet) allowed to move it.
///
/// The speed is capped so the member lagging furthest behind its contact
/// point stays within half the break threshold.
pub fn formation_motion(
    plan: &FormationPlan,
    world: &WorldState,
    sim: &SimConfig,
    cfg: &FsmConfig,
) -> Option<ObjectMotion> {
    let object = world.object(plan.object)?;
    let state = match plan.mode {
        FormationMode::Translate => TransportState::PushObject,
        FormationMode::Rotate => TransportState::RotateObject,
    };
    if plan.slots.is_empty()
        || object.delivered
        || members(plan, world).any(|(_, r)| r.is_none_or(|r| r.fsm != state || r.fault))
        || at_goal(object, sim)
        || formation_broken(plan, world, sim, cfg)
        || !all_in_contact(plan, world, sim)
        || !all_facing(plan, world, cfg)
    {
        return None;
    }
    let dt = sim.dt;
    let nominal = match plan.mode {
        FormationMode::Translate => {
            let d = plan.goal.position() - object.pose.position();
            let dist = d.norm();
            let dir = d.normalized()?;
            ObjectMotion {
                linear: dir * cfg.push_speed.min(dist / dt),
                angular: 0.0,
            }
        }
        FormationMode::Rotate => {
            let err = angle_diff(plan.goal.theta, object.pose.theta);
            let reach = plan
                .slots
                .iter()
                .map(|s| s.local.position().norm())
                .fold(0.0_f64, f64::max);
            let limit = cfg.rotate_speed.min(0.75 * sim.v_max / reach.max(1e-6));
            ObjectMotion {
                linear: Vec2::ZERO,
                angular: err.signum() * limit.min(err.abs() / dt),
            }
        }
    };
    let cap = 0.5 * cfg.break_threshold;
    let lag = members(plan, world)
        .filter_map(|(s, r)| r.map(|r| (s, r)))
        .map(|(s, r)| {
            let target = s.contact_point(&object.pose, cfg.standoff);
            let v = point_velocity(&nominal, object.pose.position(), target);
            v.normalized()
                .map_or(0.0, |u| (target - r.position()).dot(u))
        })
        .fold(0.0_f64, f64::max);
    let factor = ((cap - lag) / (0.5 * cap)).clamp(0.0, 1.0);
    if factor == 0.0 {
        return None;
    }
    Some(ObjectMotion {
        linear: nominal.linear * factor,
        angular: nominal.angular * factor,
    })
}

fn point_velocity(m: &ObjectMotion, center: Vec2, p: Vec2) -> Vec2 {
    m.linear + (p - center).perp() * m.angular
}

/// Navigation toward a slot: around the object along a clearance lane, then
/// straight in along the face normal.
pub fn nav_to_slot(
    robot: &RobotState,
    slot: &Slot,
    object: &TransportObjectState,
    sim: &SimConfig,
    cfg: &FsmConfig,
) -> Twist {
    let s = slot.world(&object.pose).position();
    let p = robot.position();
    if p.distance(s) <= cfg.arrive_tolerance {
        return Twist::ZERO;
    }
    let n = slot.world_normal(&object.pose);
    let t = n.perp();
    let rel = p - s;
    let lane = lane_offset(robot.radius, cfg);
    let pre_dist = lane - robot.radius - cfg.standoff;
    let along = rel.dot(n);
    let in_corridor = rel.dot(t).abs() <= cfg.slot_tolerance
        && along >= -cfg.slot_tolerance
        && along <= pre_dist + cfg.slot_tolerance;
    let goal = if in_corridor {
        s
    } else {
        let pre = s + n * pre_dist;
        // The keep-out box sits a little inside the lane so that a robot on
        // the lane is never "inside" it and stalled by a tiny exit step.
        let keep_out = object.rect().inflated(lane - 2.0 * cfg.arrive_tolerance);
        if keep_out.contains(p) {
            object.rect().inflated(lane).detour(p, pre)
        } else {
            // Corners already reached count as passed.
            let mut w = keep_out.detour(p, pre);
            for _ in 0..3 {
                if w == pre || w.distance(p) > 2.0 * cfg.arrive_tolerance {
                    break;
                }
                w = keep_out.detour(w, pre);
            }
            w
        }
    };
    go_to_point(robot, goal, sim.v_max, sim, cfg)
}

/// One evaluation of the transport machine for `robot`.
///
/// Transition guards look at the whole team, so every member evaluated on
/// the same snapshot reaches the same decision.
pub fn fsm_step(
    robot: &RobotState,
    plan: &FormationPlan,
    world: &WorldState,
    sim: &SimConfig,
    cfg: &FsmConfig,
) -> Result<FsmStepOutput, FsmError> {
    use TransportState::*;
    let object = object_of(plan, world)?;
    let slot = plan
        .slot_of(robot.id)
        .ok_or(FsmError::NotInPlan(robot.id))?;
    if robot.fault {
        return Ok(FsmStepOutput::hold(robot.fsm));
    }
    let out = match robot.fsm {
        Idle => FsmStepOutput::hold(Idle),
        Paused => FsmStepOutput::hold(Paused),
        ReachObject => {
            if all_at_slots(plan, world, cfg) {
                FsmStepOutput::hold(ApproachObject)
            } else {
                FsmStepOutput {
                    next_state: ReachObject,
                    cmd: nav_to_slot(robot, slot, object, sim, cfg),
                }
            }
        }
        ApproachObject => {
            if all_in_contact(plan, world, sim) {
                FsmStepOutput::hold(match plan.mode {
                    FormationMode::Translate => PushObject,
                    FormationMode::Rotate => RotateObject,
                })
            } else if contact(robot, object, sim.contact_tolerance) {
                FsmStepOutput::hold(ApproachObject)
            } else if robot
                .position()
                .distance(slot.world(&object.pose).position())
                > cfg.break_threshold
            {
                // Knocked out of place: go back to the slot before closing in.
                FsmStepOutput {
                    next_state: ApproachObject,
                    cmd: nav_to_slot(robot, slot, object, sim, cfg),
                }
            } else {
                let to_center = object.pose.position() - robot.position();
                let err = angle_diff(to_center.angle(), robot.pose.theta);
                let cmd = if err.abs() > cfg.facing_tolerance {
                    turn_to(robot, to_center.angle(), sim, cfg)
                } else {
                    Twist::new(
                        cfg.approach_speed,
                        (cfg.k_heading * err).clamp(-sim.omega_max, sim.omega_max),
                    )
                };
                FsmStepOutput {
                    next_state: ApproachObject,
                    cmd,
                }
            }
        }
        PushObject | RotateObject => {
            if at_goal(object, sim) || object.delivered {
                FsmStepOutput::hold(Idle)
            } else if formation_broken(plan, world, sim, cfg) {
                FsmStepOutput::hold(ApproachObject)
            } else {
                let heading = drive_heading(slot, plan, object);
                let cmd = match formation_motion(plan, world, sim, cfg) {
                    None if !all_facing(plan, world, cfg) => turn_to(robot, heading, sim, cfg),
                    motion => {
                        let m = motion.unwrap_or_default();
                        let target = slot.contact_point(&object.pose, cfg.standoff);
                        let ff = point_velocity(&m, object.pose.position(), target);
                        let u = ff + (target - robot.position()) * cfg.k_track;
                        let err = angle_diff(heading, robot.pose.theta);
                        Twist::new(u.dot(robot.pose.heading()), m.angular + cfg.k_heading * err)
                            .clamped(sim.v_max, sim.omega_max)
                    }
                };
                FsmStepOutput {
                    next_state: robot.fsm,
                    cmd,
                }
            }
        }
    };
    Ok(out)
}
