//! Newline-delimited JSON game recordings, one envelope per line.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::protocol::{parse_envelope, Envelope, MessageType, ProtocolError};
use super::{CommMode, GameStatus, TickReport};
use crate::command::{Command, Rejection};
use crate::event::AwarenessEvent;
use crate::sim::{OperatorId, RobotId, WorldState};

/// Version stamped into recordings; replays refuse other versions.
pub const LOG_VERSION: &str = concat!("cotransport/", env!("CARGO_PKG_VERSION"));

/// Hex SHA-256 of the canonical JSON encoding of a world.
pub fn world_digest(world: &WorldState) -> String {
    let bytes = serde_json::to_vec(world).expect("world serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub version: String,
    pub mode: CommMode,
    pub seed: u64,
    /// Full scenario the session was built from.
    pub scenario: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinRecord {
    pub operator: OperatorId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    /// Tick at whose start the command was applied.
    pub tick: u64,
    #[serde(flatten)]
    pub command: Command,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub tick: u64,
    pub robot_id: RobotId,
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    #[serde(flatten)]
    pub status: GameStatus,
    pub world_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Session(SessionHeader),
    Join(JoinRecord),
    Command(CommandRecord),
    Fault(FaultRecord),
    Event(AwarenessEvent),
    Final(FinalRecord),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ProtocolError,
    },
    #[error("line {line}: unexpected record type {kind:?}")]
    UnexpectedType { line: usize, kind: String },
    #[error("line {line}: sequence gap (expected {expected}, found {found})")]
    Gap {
        line: usize,
        expected: u64,
        found: u64,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LogError {
    pub fn line(&self) -> Option<usize> {
        match self {
            LogError::Parse { line, .. }
            | LogError::UnexpectedType { line, .. }
            | LogError::Gap { line, .. } => Some(*line),
            LogError::Io(_) => None,
        }
    }
}

/// Streams a session into an NDJSON sink.
pub struct Recorder<W: Write> {
    out: W,
    next_seq: u64,
}

impl<W: Write> Recorder<W> {
    pub fn new(out: W) -> Self {
        Self { out, next_seq: 0 }
    }

    fn line<T: Serialize>(&mut self, kind: MessageType, t: f64, body: &T) -> io::Result<()> {
        let env = Envelope::new(kind, self.next_seq, t, body);
        self.next_seq += 1;
        writeln!(self.out, "{}", env.to_json())
    }

    pub fn header(&mut self, header: &SessionHeader) -> io::Result<()> {
        self.line(MessageType::Session, 0.0, header)
    }

    pub fn join(&mut self, operator: OperatorId, name: &str) -> io::Result<()> {
        self.line(
            MessageType::Join,
            0.0,
            &JoinRecord {
                operator,
                name: name.to_owned(),
            },
        )
    }

    /// Records one tick's commands, faults and events. `t` is the sim time
    /// at the start of that tick.
    pub fn tick(&mut self, report: &TickReport, t: f64) -> io::Result<()> {
        for (robot_id, on) in &report.faults {
            self.line(
                MessageType::Fault,
                t,
                &FaultRecord {
                    tick: report.tick,
                    robot_id: *robot_id,
                    on: *on,
                },
            )?;
        }
        for c in &report.commands {
            self.line(
                MessageType::Command,
                t,
                &CommandRecord {
                    tick: c.tick,
                    command: c.command.clone(),
                    accepted: c.rejection.is_none(),
                    rejection: c.rejection.clone(),
                },
            )?;
        }
        for ev in &report.events {
            self.line(MessageType::Event, ev.sim_time, ev)?;
        }
        Ok(())
    }

    pub fn finish(&mut self, status: &GameStatus, world: &WorldState) -> io::Result<()> {
        self.line(
            MessageType::GameStatus,
            status.sim_time,
            &FinalRecord {
                status: status.clone(),
                world_digest: world_digest(world),
            },
        )?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a recording; line numbers in errors are 1-based. Envelope seqs
/// must be contiguous so that deleted or reordered lines are caught.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<LogRecord>, LogError> {
    let mut records = Vec::new();
    let mut expected = 0u64;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |e| LogError::Parse {
            line: line_no,
            source: e,
        };
        let env = parse_envelope(&line).map_err(parse)?;
        if env.seq != expected {
            return Err(LogError::Gap {
                line: line_no,
                expected,
                found: env.seq,
            });
        }
        expected += 1;
        let rec = match env.message_type().map_err(parse)? {
            MessageType::Session => LogRecord::Session(env.body_as().map_err(parse)?),
            MessageType::Join => LogRecord::Join(env.body_as().map_err(parse)?),
            MessageType::Command => LogRecord::Command(env.body_as().map_err(parse)?),
            MessageType::Fault => LogRecord::Fault(env.body_as().map_err(parse)?),
            MessageType::Event => LogRecord::Event(env.body_as().map_err(parse)?),
            MessageType::GameStatus => LogRecord::Final(env.body_as().map_err(parse)?),
            other => {
                return Err(LogError::UnexpectedType {
                    line: line_no,
                    kind: other.as_str().to_owned(),
                })
            }
        };
        records.push(rec);
    }
    Ok(records)
}
