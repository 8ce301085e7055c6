use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::operator::{OperatorScript, ScriptedOperator};
use super::scenario::{ScenarioConfig, ScenarioError};
use crate::command::Command;
use crate::service::record::{
    read_log, world_digest, LogError, LogRecord, Recorder, SessionHeader, LOG_VERSION,
};
use crate::service::{GameStatus, Phase, Session, SessionError};
use crate::sim::{RobotId, WorldState};
use crate::stats::{extract_metrics, GameReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{0} operator scripts for a {1}-player scenario")]
    TooManyOperators(usize, usize),
    #[error("recording is from {found}, this is {expected}")]
    Version { found: String, expected: String },
    #[error("recording is truncated: {0}")]
    Truncated(&'static str),
    #[error("replay diverged at line {line}: expected {expected} got {found}")]
    Divergence {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A scheduled fault toggle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub at_s: f64,
    pub robot: RobotId,
    pub on: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadlessOptions {
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Stop early after this many ticks.
    #[serde(default)]
    pub max_ticks: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct HeadlessOutcome {
    pub status: GameStatus,
    pub world: WorldState,
    pub report: GameReport,
    /// NDJSON recording of the game.
    pub log: String,
}

fn header(cfg: &ScenarioConfig) -> SessionHeader {
    SessionHeader {
        version: LOG_VERSION.to_owned(),
        mode: cfg.mode,
        seed: cfg.seed,
        scenario: serde_json::to_value(cfg).expect("scenario serializes"),
    }
}

/// Runs a full game on one thread with scripted operators; deterministic
/// for a given scenario, scripts and options.
pub fn run_headless(
    cfg: &ScenarioConfig,
    scripts: Vec<OperatorScript>,
    opts: &HeadlessOptions,
) -> Result<HeadlessOutcome, HarnessError> {
    cfg.validate()?;
    if scripts.len() > cfg.players {
        return Err(HarnessError::TooManyOperators(scripts.len(), cfg.players));
    }
    let mut scripts = scripts;
    for i in scripts.len()..cfg.players {
        scripts.push(OperatorScript::idle(&format!("op{}", i + 1)));
    }
    let mut session = Session::new(cfg.session_config(), cfg.world());
    let mut rec = Recorder::new(Vec::new());
    rec.header(&header(cfg))?;
    let mut ops = Vec::new();
    for s in scripts {
        let id = session.join(&s.name)?;
        rec.join(id, &s.name)?;
        ops.push(ScriptedOperator::new(id, s));
    }
    let dt = cfg.sim.dt;
    let mut faults: BTreeMap<u64, Vec<FaultSpec>> = BTreeMap::new();
    for f in &opts.faults {
        faults
            .entry((f.at_s / dt).round() as u64)
            .or_default()
            .push(*f);
    }

    while session.phase() == Phase::Running {
        if opts.max_ticks.is_some_and(|m| session.world.tick >= m) {
            break;
        }
        let t = session.world.sim_time;
        for f in faults.remove(&session.world.tick).unwrap_or_default() {
            session.inject_fault(f.robot, f.on)?;
        }
        for op in &mut ops {
            let view = session.snapshot(op.id)?;
            for body in op.poll(&view, t) {
                session.submit(op.id, body)?;
            }
        }
        let report = session.run_tick()?;
        rec.tick(&report, t)?;
    }
    let status = session.status();
    rec.finish(&status, &session.world)?;
    let log = String::from_utf8(rec.into_inner()).expect("recorder writes UTF-8");
    let records = read_log(log.as_bytes())?;
    Ok(HeadlessOutcome {
        report: extract_metrics(&records),
        status,
        world: session.world,
        log,
    })
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub status: GameStatus,
    pub world: WorldState,
    pub digest: String,
    pub report: GameReport,
}

/// Re-runs a recording and checks that it reproduces itself line for line,
/// including the final world digest.
pub fn replay<R: BufRead>(reader: R) -> Result<ReplayOutcome, HarnessError> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let records = read_log(text.as_bytes())?;

    let Some(LogRecord::Session(head)) = records.first() else {
        return Err(HarnessError::Truncated("missing session header"));
    };
    if head.version != LOG_VERSION {
        return Err(HarnessError::Version {
            found: head.version.clone(),
            expected: LOG_VERSION.to_owned(),
        });
    }
    let Some(LogRecord::Final(fin)) = records.last() else {
        return Err(HarnessError::Truncated("missing final game status"));
    };
    let cfg: ScenarioConfig =
        serde_json::from_value(head.scenario.clone()).map_err(ScenarioError::from)?;
    cfg.validate()?;

    let mut commands: BTreeMap<u64, Vec<Command>> = BTreeMap::new();
    let mut faults: BTreeMap<u64, Vec<(RobotId, bool)>> = BTreeMap::new();
    let mut names = Vec::new();
    let mut expected_seq = 0;
    for (i, r) in records.iter().enumerate() {
        match r {
            LogRecord::Join(j) => names.push(j.name.clone()),
            LogRecord::Command(c) => {
                if c.command.seq != expected_seq {
                    return Err(HarnessError::Divergence {
                        line: i + 1,
                        expected: format!("command seq {expected_seq}"),
                        found: format!("command seq {}", c.command.seq),
                    });
                }
                expected_seq += 1;
                commands.entry(c.tick).or_default().push(c.command.clone());
            }
            LogRecord::Fault(f) => faults.entry(f.tick).or_default().push((f.robot_id, f.on)),
            _ => {}
        }
    }

    let mut session = Session::new(cfg.session_config(), cfg.world());
    let mut rec = Recorder::new(Vec::new());
    rec.header(head)?;
    for name in &names {
        let id = session.join(name)?;
        rec.join(id, name)?;
    }
    while session.phase() == Phase::Running && session.world.tick < fin.status.tick {
        let t = session.world.sim_time;
        let tick = session.world.tick;
        for (robot, on) in faults.remove(&tick).unwrap_or_default() {
            session.inject_fault(robot, on)?;
        }
        for c in commands.remove(&tick).unwrap_or_default() {
            session.enqueue(c);
        }
        let report = session.run_tick()?;
        rec.tick(&report, t)?;
    }
    let status = session.status();
    rec.finish(&status, &session.world)?;
    let produced = String::from_utf8(rec.into_inner()).expect("recorder writes UTF-8");

    let mut want = text.lines().filter(|l| !l.trim().is_empty());
    let mut got = produced.lines();
    let mut line = 0;
    loop {
        line += 1;
        match (want.next(), got.next()) {
            (None, None) => break,
            (a, b) if a == b => continue,
            (a, b) => {
                return Err(HarnessError::Divergence {
                    line,
                    expected: a.unwrap_or("<end of recording>").to_owned(),
                    found: b.unwrap_or("<end of replay>").to_owned(),
                })
            }
        }
    }
    Ok(ReplayOutcome {
        digest: world_digest(&session.world),
        report: extract_metrics(&records),
        status,
        world: session.world,
    })
}
