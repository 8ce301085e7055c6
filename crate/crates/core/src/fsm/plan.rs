use serde::{Deserialize, Serialize};

use super::{FsmConfig, FsmError};
use crate::sim::{angle_diff, ObjectId, Pose, RobotId, RobotState, TransportObjectState, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormationMode {
    Translate,
    Rotate,
}

/// A robot's place in the formation, expressed in the object frame so it
/// travels with the object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub robot: RobotId,
    /// Slot pose relative to the object.
    pub local: Pose,
    /// Outward normal of the face the slot sits on, object frame.
    pub normal: Vec2,
}

impl Slot {
    pub fn world(&self, object: &Pose) -> Pose {
        object.compose(&self.local)
    }

    pub fn world_normal(&self, object: &Pose) -> Vec2 {
        self.normal.rotate(object.theta)
    }

    /// Where the robot center sits when touching the face at this slot.
    pub fn contact_point(&self, object: &Pose, standoff: f64) -> Vec2 {
        self.world(object).position() - self.world_normal(object) * standoff
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationPlan {
    pub object: ObjectId,
    /// Ordered by slot index; robot ids pairwise distinct.
    pub slots: Vec<Slot>,
    pub goal: Pose,
    pub mode: FormationMode,
}

impl FormationPlan {
    pub fn slot_of(&self, robot: RobotId) -> Option<&Slot> {
        self.slots.iter().find(|s| s.robot == robot)
    }

    pub fn members(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.slots.iter().map(|s| s.robot)
    }

    pub fn contains(&self, robot: RobotId) -> bool {
        self.slot_of(robot).is_some()
    }

    /// Drops `robot`'s slot, keeping every other slot where it was.
    pub fn without(&self, robot: RobotId) -> FormationPlan {
        FormationPlan {
            slots: self
                .slots
                .iter()
                .copied()
                .filter(|s| s.robot != robot)
                .collect(),
            ..self.clone()
        }
    }
}

/// A plan plus the candidates that did not fit on the perimeter.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: FormationPlan,
    pub idle: Vec<RobotId>,
}

/// Upper bound on candidates fed to the exact assignment search.
const MAX_CANDIDATES: usize = 16;

/// Lays slots around `object` and assigns `team` to them.
///
/// Translate mode spreads the slots evenly over the face opposite the goal
/// direction; Rotate mode spreads them by arc length over the whole
/// perimeter starting from the middle of the +x face. Robots are matched to
/// slots by minimum total travel distance, ties going to the lower robot id
/// on the lower slot index. Robots beyond perimeter capacity stay idle.
pub fn plan_formation(
    object: &TransportObjectState,
    team: &[RobotState],
    goal: Pose,
    mode: FormationMode,
    cfg: &FsmConfig,
    radius: f64,
) -> Result<PlanOutcome, FsmError> {
    if team.is_empty() {
        return Err(FsmError::EmptyTeam);
    }
    let mut candidates: Vec<&RobotState> = team.iter().collect();
    candidates.sort_by_key(|r| r.id);
    candidates.dedup_by_key(|r| r.id);
    let spacing = 2.0 * radius + cfg.slot_gap;
    let offset = radius + cfg.standoff;
    let h = object.half_extents;

    let layout: Vec<(Pose, Vec2)> = match mode {
        FormationMode::Translate => {
            let d = (goal.position() - object.pose.position()).rotate(-object.pose.theta);
            let d = d.normalized().unwrap_or(Vec2::new(1.0, 0.0));
            let heading = d.angle();
            // Back face: outward normal opposite the dominant goal direction.
            let (normal, half_len, depth) = if d.x.abs() >= d.y.abs() {
                (Vec2::new(-d.x.signum(), 0.0), h.y, h.x)
            } else {
                (Vec2::new(0.0, -d.y.signum()), h.x, h.y)
            };
            let len = 2.0 * half_len;
            let capacity = ((len / spacing).floor() as usize).max(1);
            let m = candidates.len().min(capacity);
            let tangent = normal.perp();
            (0..m)
                .map(|i| {
                    let t = -half_len + len * (i as f64 + 0.5) / m as f64;
                    let p = normal * (depth + offset) + tangent * t;
                    (Pose::new(p.x, p.y, heading), normal)
                })
                .collect()
        }
        FormationMode::Rotate => {
            let perimeter = 4.0 * (h.x + h.y);
            let capacity = ((perimeter / spacing).floor() as usize).max(1);
            let m = candidates.len().min(capacity);
            let spin = rotation_sign(angle_diff(goal.theta, object.pose.theta));
            (0..m)
                .map(|i| {
                    let (on_edge, normal) = perimeter_point(h, perimeter * i as f64 / m as f64);
                    let p = on_edge + normal * offset;
                    let heading = p.angle() + spin * std::f64::consts::FRAC_PI_2;
                    (Pose::new(p.x, p.y, heading), normal)
                })
                .collect()
        }
    };

    if candidates.len() > MAX_CANDIDATES {
        let c = object.pose.position();
        candidates.sort_by(|a, b| {
            a.position()
                .distance(c)
                .total_cmp(&b.position().distance(c))
                .then(a.id.cmp(&b.id))
        });
        candidates.truncate(MAX_CANDIDATES);
        candidates.sort_by_key(|r| r.id);
    }

    let world_slots: Vec<Vec2> = layout
        .iter()
        .map(|(p, _)| object.pose.compose(p).position())
        .collect();
    let cost: Vec<Vec<f64>> = candidates
        .iter()
        .map(|r| {
            world_slots
                .iter()
                .map(|s| r.position().distance(*s))
                .collect()
        })
        .collect();
    let chosen = assign_min_distance(&cost);

    let slots: Vec<Slot> = layout
        .iter()
        .zip(&chosen)
        .map(|((local, normal), &ri)| Slot {
            robot: candidates[ri].id,
            local: *local,
            normal: *normal,
        })
        .collect();
    let mut idle: Vec<RobotId> = team
        .iter()
        .map(|r| r.id)
        .filter(|id| !slots.iter().any(|s| s.robot == *id))
        .collect();
    idle.sort();
    idle.dedup();
    Ok(PlanOutcome {
        plan: FormationPlan {
            object: object.id,
            slots,
            goal,
            mode,
        },
        idle,
    })
}

/// +1 for counter-clockwise (including the exact half turn), -1 otherwise.
pub fn rotation_sign(err: f64) -> f64 {
    if err >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Point at arc length `s` along the rectangle boundary (counter-clockwise
/// from the middle of the +x face) and the outward normal of its face.
pub fn perimeter_point(h: Vec2, s: f64) -> (Vec2, Vec2) {
    let segments = [
        (
            Vec2::new(h.x, 0.0),
            Vec2::new(0.0, 1.0),
            h.y,
            Vec2::new(1.0, 0.0),
        ),
        (
            Vec2::new(h.x, h.y),
            Vec2::new(-1.0, 0.0),
            2.0 * h.x,
            Vec2::new(0.0, 1.0),
        ),
        (
            Vec2::new(-h.x, h.y),
            Vec2::new(0.0, -1.0),
            2.0 * h.y,
            Vec2::new(-1.0, 0.0),
        ),
        (
            Vec2::new(-h.x, -h.y),
            Vec2::new(1.0, 0.0),
            2.0 * h.x,
            Vec2::new(0.0, -1.0),
        ),
        (
            Vec2::new(h.x, -h.y),
            Vec2::new(0.0, 1.0),
            h.y,
            Vec2::new(1.0, 0.0),
        ),
    ];
    let mut rest = s;
    for (start, dir, len, normal) in segments {
        if rest < len {
            return (start + dir * rest, normal);
        }
        rest -= len;
    }
    (Vec2::new(h.x, 0.0), Vec2::new(1.0, 0.0))
}

/// Exact minimum-cost assignment of rows (robots) to every column (slot),
/// `rows >= cols`. Among optimal assignments the one that is
/// lexicographically smallest slot by slot wins. Returns the row chosen for
/// each column.
fn assign_min_distance(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    debug_assert!(m <= n && n <= MAX_CANDIDATES);
    // best[mask]: cheapest way to fill slots popcount(mask).. with rows not in mask.
    let mut best = vec![f64::INFINITY; 1 << n];
    let mut masks: Vec<u32> = (0..(1u32 << n))
        .filter(|mk| (mk.count_ones() as usize) <= m)
        .collect();
    masks.sort_by_key(|mk| std::cmp::Reverse(mk.count_ones()));
    for mask in masks {
        let j = mask.count_ones() as usize;
        if j == m {
            best[mask as usize] = 0.0;
            continue;
        }
        let mut b = f64::INFINITY;
        for (i, row) in cost.iter().enumerate() {
            if mask & (1 << i) == 0 {
                b = b.min(row[j] + best[(mask | (1 << i)) as usize]);
            }
        }
        best[mask as usize] = b;
    }
    let mut mask = 0u32;
    let mut out = Vec::with_capacity(m);
    #[allow(clippy::needless_range_loop)]
    for j in 0..m {
        let target = best[mask as usize];
        let tol = 1e-9 * (1.0 + target.abs());
        let i = (0..n)
            .find(|&i| {
                mask & (1 << i) == 0
                    && cost[i][j] + best[(mask | (1 << i)) as usize] <= target + tol
            })
            .expect("some row attains the optimum");
        out.push(i);
        mask |= 1 << i;
    }
    out
}
