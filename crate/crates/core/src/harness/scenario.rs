use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{CommandRules, TEAM_GAP};
use crate::fsm::FsmConfig;
use crate::service::{CommMode, SessionConfig};
use crate::sim::{
    Arena, Modality, ObjectId, Pose, Rect, RobotId, RobotState, SimConfig, SizeClass,
    TransportObjectState, Vec2, WorldState,
};

pub const DEFAULT_SCENARIO: &str = include_str!("../../data/default_scenario.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: ObjectId,
    pub size_class: SizeClass,
    pub pose: Pose,
    /// Required; optional here only so the error can name the object.
    #[serde(default)]
    pub target: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_extents: Option<Vec2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_modalities: Option<BTreeSet<Modality>>,
}

impl ObjectSpec {
    pub fn half_extents(&self) -> Vec2 {
        self.half_extents.unwrap_or(match self.size_class {
            SizeClass::Big => Vec2::new(0.35, 0.25),
            SizeClass::Small => Vec2::new(0.1, 0.1),
        })
    }

    pub fn points(&self) -> u32 {
        self.points.unwrap_or(self.size_class.default_points())
    }

    pub fn rect_at(&self, pose: Pose) -> Rect {
        Rect::new(pose.position(), pose.theta, self.half_extents())
    }
}

fn default_time_limit() -> f64 {
    480.0
}

fn default_players() -> usize {
    2
}

fn default_log_capacity() -> usize {
    3
}

fn default_mode() -> CommMode {
    CommMode::Mc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub arena: Arena,
    /// Spawn poses; robot ids are assigned 1, 2, ... in this order.
    pub robots: Vec<Pose>,
    pub objects: Vec<ObjectSpec>,
    #[serde(default = "default_time_limit")]
    pub time_limit_s: f64,
    /// Defaults to the sum of object points.
    #[serde(default)]
    pub max_points: Option<u32>,
    #[serde(default = "default_mode")]
    pub mode: CommMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_players")]
    pub players: usize,
    #[serde(default = "default_log_capacity")]
    pub log_capacity: usize,
    #[serde(default)]
    pub transport_team_size: Option<usize>,
    /// Lifts the fixed 2/1 points per size class.
    #[serde(default)]
    pub allow_custom_points: bool,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub fsm: Option<FsmConfig>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Separating-axis overlap test for two rectangles (touching is not overlap).
fn rects_overlap(a: &Rect, b: &Rect) -> bool {
    let axes = [
        Vec2::from_angle(a.theta),
        Vec2::from_angle(a.theta).perp(),
        Vec2::from_angle(b.theta),
        Vec2::from_angle(b.theta).perp(),
    ];
    axes.iter().all(|ax| {
        let proj = |r: &Rect| {
            r.corners()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    let d = c.dot(*ax);
                    (lo.min(d), hi.max(d))
                })
        };
        let (alo, ahi) = proj(a);
        let (blo, bhi) = proj(b);
        ahi > blo + 1e-9 && bhi > alo + 1e-9
    })
}

impl ScenarioConfig {
    pub fn default_scenario() -> Self {
        Self::from_json(DEFAULT_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn max_points(&self) -> u32 {
        self.max_points
            .unwrap_or_else(|| self.objects.iter().map(ObjectSpec::points).sum())
    }

    pub fn ticks(&self) -> u64 {
        (self.time_limit_s / self.sim.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let a = &self.arena;
        if !(a.max_x > a.min_x && a.max_y > a.min_y) {
            return Err(invalid("arena", "empty bounds"));
        }
        if !(self.time_limit_s > 0.0 && self.time_limit_s.is_finite()) {
            return Err(invalid("time_limit_s", "must be positive"));
        }
        if self.sim.dt.is_nan() || self.sim.dt <= 0.0 {
            return Err(invalid("sim.dt", "must be positive"));
        }
        if self.players == 0 {
            return Err(invalid("players", "must be at least 1"));
        }
        if self.log_capacity == 0 {
            return Err(invalid("log_capacity", "must be at least 1"));
        }
        let r = self.sim.robot_radius;
        let inside_disc = |p: Vec2| {
            p.x - r >= a.min_x && p.x + r <= a.max_x && p.y - r >= a.min_y && p.y + r <= a.max_y
        };
        for (i, p) in self.robots.iter().enumerate() {
            if !p.is_finite() || !inside_disc(p.position()) {
                return Err(invalid(format!("robots[{i}]"), "outside the arena"));
            }
            for (j, q) in self.robots.iter().enumerate().take(i) {
                if p.position().distance(q.position()) < 2.0 * r {
                    return Err(invalid(
                        format!("robots[{i}]"),
                        format!("overlaps robots[{j}]"),
                    ));
                }
            }
        }
        let mut ids = BTreeMap::new();
        let rect_inside = |rect: &Rect| rect.corners().iter().all(|c| a.contains(*c));
        for (i, o) in self.objects.iter().enumerate() {
            let field = |f: &str| format!("objects[{i}] ({}){f}", o.id);
            if let Some(j) = ids.insert(o.id, i) {
                return Err(invalid(field(".id"), format!("duplicate of objects[{j}]")));
            }
            let Some(target) = o.target else {
                return Err(invalid(
                    field(".target"),
                    format!("missing target pose for {}", o.id),
                ));
            };
            let h = o.half_extents();
            if !(h.x > 0.0 && h.y > 0.0) {
                return Err(invalid(field(".half_extents"), "must be positive"));
            }
            if !o.pose.is_finite() || !rect_inside(&o.rect_at(o.pose)) {
                return Err(invalid(field(".pose"), "object outside the arena"));
            }
            if !target.is_finite() || !rect_inside(&o.rect_at(target)) {
                return Err(invalid(field(".target"), "target outside the arena"));
            }
            let expected = o.size_class.default_points();
            if !self.allow_custom_points && o.points() != expected {
                return Err(invalid(
                    field(".points"),
                    format!(
                        "{:?} objects are worth {expected} (set allow_custom_points to override)",
                        o.size_class
                    ),
                ));
            }
            for (j, q) in self.objects.iter().enumerate().take(i) {
                if rects_overlap(&o.rect_at(o.pose), &q.rect_at(q.pose)) {
                    return Err(invalid(field(".pose"), format!("overlaps objects[{j}]")));
                }
            }
            for (k, p) in self.robots.iter().enumerate() {
                if o.rect_at(o.pose).distance(p.position()) < r {
                    return Err(invalid(field(".pose"), format!("overlaps robots[{k}]")));
                }
            }
        }
        let total: u32 = self.objects.iter().map(ObjectSpec::points).sum();
        if self.max_points() > total {
            return Err(invalid(
                "max_points",
                format!("exceeds the {total} points available"),
            ));
        }
        Ok(())
    }

    pub fn world(&self) -> WorldState {
        let robots = self
            .robots
            .iter()
            .enumerate()
            .map(|(i, p)| RobotState::new(RobotId(i as u32 + 1), *p, self.sim.robot_radius))
            .collect();
        let mut objects: Vec<TransportObjectState> = self
            .objects
            .iter()
            .map(|o| TransportObjectState {
                id: o.id,
                size_class: o.size_class,
                half_extents: o.half_extents(),
                pose: o.pose,
                goal: None,
                target: o.target.expect("validated"),
                points: o.points(),
                allowed_modalities: o
                    .allowed_modalities
                    .clone()
                    .unwrap_or_else(|| o.size_class.default_modalities()),
                lock_owner: None,
                delivered: false,
            })
            .collect();
        objects.sort_by_key(|o| o.id);
        WorldState {
            tick: 0,
            sim_time: 0.0,
            robots,
            objects,
            arena: self.arena,
        }
    }

    pub fn rules(&self) -> CommandRules {
        CommandRules {
            sim: self.sim,
            fsm: self
                .fsm
                .unwrap_or_else(|| FsmConfig::with_contact_tolerance(self.sim.contact_tolerance)),
            transport_team_size: self.transport_team_size,
            team_spacing: 2.0 * self.sim.robot_radius + TEAM_GAP,
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            mode: self.mode,
            time_limit_s: self.time_limit_s,
            max_points: self.max_points(),
            required_players: self.players,
            log_capacity: self.log_capacity,
            rules: self.rules(),
        }
    }
}
