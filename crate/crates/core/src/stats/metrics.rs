use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::command::{CommandBody, Target};
use crate::event::EventPayload;
use crate::service::record::{read_log, CommandRecord, LogError, LogRecord};
use crate::sim::{Modality, ObjectId, OperatorId, RobotId};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorCounts {
    pub object_oriented: u32,
    pub robot_oriented: u32,
    pub team_oriented: u32,
    pub lock: u32,
    pub unlock: u32,
    pub rejected: u32,
}

impl OperatorCounts {
    pub fn total(&self) -> u32 {
        self.object_oriented + self.robot_oriented + self.team_oriented + self.lock + self.unlock
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub object: ObjectId,
    pub points: u32,
    pub sim_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub points: u32,
    pub max_points: u32,
    pub duration_s: f64,
    pub deliveries: Vec<Delivery>,
    /// Accepted commands by issuer and kind; rejected ones are counted apart.
    pub commands: BTreeMap<OperatorId, OperatorCounts>,
    /// Accepted commands superseded by the next accepted command on the same
    /// target from a different operator.
    pub conflicts: u32,
    pub robot_idle_s: BTreeMap<RobotId, f64>,
}

impl GameReport {
    pub fn total_commands(&self) -> u32 {
        self.commands.values().map(OperatorCounts::total).sum()
    }

    pub fn modalities_used(&self) -> Vec<Modality> {
        let mut out = Vec::new();
        let any = |f: fn(&OperatorCounts) -> u32| self.commands.values().any(|c| f(c) > 0);
        if any(|c| c.object_oriented) {
            out.push(Modality::ObjectOriented);
        }
        if any(|c| c.robot_oriented) {
            out.push(Modality::RobotOriented);
        }
        if any(|c| c.team_oriented) {
            out.push(Modality::TeamOriented);
        }
        out
    }

    pub fn total_idle_s(&self) -> f64 {
        self.robot_idle_s.values().sum()
    }
}

/// Count of accepted commands overridden by another operator's later
/// command on the same target.
pub fn count_conflicts<'a>(commands: impl IntoIterator<Item = &'a CommandRecord>) -> u32 {
    let mut accepted: Vec<&CommandRecord> = commands.into_iter().filter(|c| c.accepted).collect();
    accepted.sort_by_key(|c| c.command.seq);
    let mut last: BTreeMap<Target, OperatorId> = BTreeMap::new();
    let mut conflicts = 0;
    for c in accepted {
        if let Some(t) = c.command.body.goal_target() {
            if let Some(prev) = last.insert(t, c.command.issuer) {
                if prev != c.command.issuer {
                    conflicts += 1;
                }
            }
        }
    }
    conflicts
}

pub fn extract_metrics(records: &[LogRecord]) -> GameReport {
    let mut report = GameReport::default();
    let mut idle_since: BTreeMap<RobotId, Option<f64>> = BTreeMap::new();
    let mut cmds = Vec::new();
    let mut end = 0.0f64;

    for rec in records {
        match rec {
            LogRecord::Session(h) => {
                if let Some(robots) = h.scenario.get("robots").and_then(|r| r.as_array()) {
                    for (i, _) in robots.iter().enumerate() {
                        idle_since.insert(RobotId(i as u32 + 1), Some(0.0));
                    }
                }
            }
            LogRecord::Join(j) => {
                report.commands.entry(j.operator).or_default();
            }
            LogRecord::Command(c) => {
                let counts = report.commands.entry(c.command.issuer).or_default();
                if !c.accepted {
                    counts.rejected += 1;
                    continue;
                }
                match c.command.body {
                    CommandBody::LockObject { .. } => counts.lock += 1,
                    CommandBody::UnlockObject { .. } => counts.unlock += 1,
                    ref body => match body.modality() {
                        Some(Modality::ObjectOriented) => counts.object_oriented += 1,
                        Some(Modality::RobotOriented) => counts.robot_oriented += 1,
                        Some(Modality::TeamOriented) => counts.team_oriented += 1,
                        None => {}
                    },
                }
                cmds.push(c);
            }
            LogRecord::Fault(_) => {}
            LogRecord::Event(ev) => {
                end = end.max(ev.sim_time);
                match &ev.payload {
                    EventPayload::Delivery { object, points } => {
                        report.deliveries.push(Delivery {
                            object: *object,
                            points: *points,
                            sim_time: ev.sim_time,
                        });
                        report.points += points;
                    }
                    EventPayload::Score { max_points, .. } => report.max_points = *max_points,
                    EventPayload::RobotStateChanged { robot, idle, .. } => {
                        let slot = idle_since.entry(*robot).or_insert(Some(0.0));
                        match (*slot, *idle) {
                            (Some(t0), false) => {
                                *report.robot_idle_s.entry(*robot).or_default() += ev.sim_time - t0;
                                *slot = None;
                            }
                            (None, true) => *slot = Some(ev.sim_time),
                            _ => {}
                        }
                    }
                    _ => {}
                }
            }
            LogRecord::Final(f) => {
                end = end.max(f.status.sim_time);
                report.max_points = f.status.max_points;
                report.points = f.status.points_scored;
            }
        }
    }
    for (robot, since) in idle_since {
        if let Some(t0) = since {
            *report.robot_idle_s.entry(robot).or_default() += end - t0;
        }
    }
    report.duration_s = end;
    report.conflicts = count_conflicts(cmds);
    report
}

/// Reads an NDJSON recording and summarizes it; parse errors carry the
/// offending line number.
pub fn extract_metrics_from<R: BufRead>(reader: R) -> Result<GameReport, LogError> {
    Ok(extract_metrics(&read_log(reader)?))
}
