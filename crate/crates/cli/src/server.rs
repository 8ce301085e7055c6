//! Network front end. One task owns the session and advances it on a fixed
//! clock; every connection gets its own reader and writer task and talks to
//! the loop only through channels.
//!
//! Plain TCP clients send 4-byte big-endian length-prefixed UTF-8 JSON
//! frames. A connection whose first bytes are `GET ` is upgraded to a
//! WebSocket and exchanges text frames instead.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::future::{ready, Future};
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::time::Duration;

use futures_util::{Sink, SinkExt, Stream, StreamExt, TryStreamExt};
use serde::Serialize;
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::{Error as WsError, Message};
use tokio_util::bytes::Bytes;
use tokio_util::codec::{Framed, LengthDelimitedCodec};
use tracing::{debug, info, warn};

use cotransport::harness::{ScenarioConfig, ScenarioError};
use cotransport::service::protocol::{
    parse_client_message, parse_envelope, ByeBody, ClientMessage, CommandRejectedBody, Envelope,
    JoinedBody, MessageType, StateDelta,
};
use cotransport::service::record::{world_digest, Recorder, SessionHeader, LOG_VERSION};
use cotransport::service::{route_event, ClientView, GameStatus, Phase, Session, SessionError};
use cotransport::sim::OperatorId;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub scenario: ScenarioConfig,
    /// Wall-clock time per simulation tick.
    pub tick: Duration,
    pub record: Option<PathBuf>,
    /// Full keyframe every this many ticks, deltas in between.
    pub keyframe_every: u64,
}

impl ServeOptions {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            tick: Duration::from_secs_f64(scenario.sim.dt),
            scenario,
            record: None,
            keyframe_every: 50,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeOutcome {
    pub status: GameStatus,
    pub world_digest: String,
}

type ConnId = u64;

enum Inbound {
    Open {
        conn: ConnId,
        out: UnboundedSender<String>,
    },
    Text {
        conn: ConnId,
        text: String,
    },
    Closed {
        conn: ConnId,
    },
}

/// Runs one game to completion (or until `shutdown` resolves) and returns
/// the final status.
pub async fn serve(
    listener: TcpListener,
    opts: ServeOptions,
    shutdown: impl Future<Output = ()>,
) -> Result<ServeOutcome, ServeError> {
    opts.scenario.validate()?;
    let (tx, rx) = unbounded_channel();
    let acceptor = tokio::spawn(accept_loop(listener, tx));
    let result = GameLoop::new(&opts)?.run(rx, shutdown).await;
    acceptor.abort();
    result
}

async fn accept_loop(listener: TcpListener, inbound: UnboundedSender<Inbound>) {
    let mut next: ConnId = 1;
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                let conn = next;
                next += 1;
                debug!(conn, %peer, "connection");
                tokio::spawn(handle_connection(stream, conn, inbound.clone()));
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

async fn is_websocket(stream: &TcpStream) -> bool {
    let mut head = [0u8; 4];
    for _ in 0..200 {
        match stream.peek(&mut head).await {
            Ok(n) if n >= 4 => return &head == b"GET ",
            Ok(0) | Err(_) => return false,
            Ok(_) => tokio::time::sleep(Duration::from_millis(5)).await,
        }
    }
    false
}

async fn handle_connection(stream: TcpStream, conn: ConnId, inbound: UnboundedSender<Inbound>) {
    let _ = stream.set_nodelay(true);
    if is_websocket(&stream).await {
        match tokio_tungstenite::accept_async(stream).await {
            Ok(ws) => {
                let (sink, source) = ws.split();
                let sink = sink.with(|s: String| ready(Ok::<_, WsError>(Message::Text(s))));
                let source = source.try_filter_map(|m| {
                    ready(Ok(match m {
                        Message::Text(t) => Some(t),
                        Message::Binary(b) => String::from_utf8(b).ok(),
                        _ => None,
                    }))
                });
                pump(conn, source, sink, inbound).await;
            }
            Err(e) => warn!(conn, "websocket handshake failed: {e}"),
        }
    } else {
        let (sink, source) = Framed::new(stream, LengthDelimitedCodec::new()).split();
        let sink = sink.with(|s: String| ready(Ok::<_, io::Error>(Bytes::from(s))));
        let source = source.map_ok(|b| String::from_utf8_lossy(&b).into_owned());
        pump(conn, source, sink, inbound).await;
    }
}

async fn pump<S, K, E>(conn: ConnId, mut source: S, mut sink: K, inbound: UnboundedSender<Inbound>)
where
    S: Stream<Item = Result<String, E>> + Unpin,
    K: Sink<String> + Unpin,
{
    let (out, mut outbox) = unbounded_channel::<String>();
    if inbound.send(Inbound::Open { conn, out }).is_err() {
        return;
    }
    let writer = async move {
        while let Some(msg) = outbox.recv().await {
            if sink.send(msg).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    };
    let reader = async {
        while let Some(Ok(text)) = source.next().await {
            if inbound.send(Inbound::Text { conn, text }).is_err() {
                break;
            }
        }
        let _ = inbound.send(Inbound::Closed { conn });
    };
    tokio::join!(writer, reader);
}

struct Client {
    out: UnboundedSender<String>,
    seq: u64,
    operator: Option<OperatorId>,
    last: Option<ClientView>,
    since_keyframe: u64,
}

impl Client {
    fn send<T: Serialize>(&mut self, kind: MessageType, t: f64, body: &T) {
        let env = Envelope::new(kind, self.seq, t, body);
        self.seq += 1;
        let _ = self.out.send(env.to_json());
    }

    fn reject(&mut self, t: f64, body: CommandRejectedBody) {
        self.send(MessageType::CommandRejected, t, &body);
    }
}

fn rejection(code: &str, reason: impl Into<String>, seq: Option<u64>) -> CommandRejectedBody {
    CommandRejectedBody {
        code: code.to_owned(),
        reason: reason.into(),
        seq,
        lock_owner: None,
    }
}

struct GameLoop {
    session: Session,
    recorder: Option<Recorder<BufWriter<File>>>,
    clients: BTreeMap<ConnId, Client>,
    /// Server command seq -> (connection, client message seq), for routing
    /// rejections back after the tick.
    pending: HashMap<u64, (ConnId, u64)>,
    tick: Duration,
    keyframe_every: u64,
}

impl GameLoop {
    fn new(opts: &ServeOptions) -> Result<Self, ServeError> {
        let cfg = &opts.scenario;
        let recorder = match &opts.record {
            Some(path) => {
                let mut rec = Recorder::new(BufWriter::new(File::create(path)?));
                rec.header(&SessionHeader {
                    version: LOG_VERSION.to_owned(),
                    mode: cfg.mode,
                    seed: cfg.seed,
                    scenario: serde_json::to_value(cfg).expect("scenario serializes"),
                })?;
                Some(rec)
            }
            None => None,
        };
        Ok(Self {
            session: Session::new(cfg.session_config(), cfg.world()),
            recorder,
            clients: BTreeMap::new(),
            pending: HashMap::new(),
            tick: opts.tick,
            keyframe_every: opts.keyframe_every.max(1),
        })
    }

    async fn run(
        mut self,
        mut rx: UnboundedReceiver<Inbound>,
        shutdown: impl Future<Output = ()>,
    ) -> Result<ServeOutcome, ServeError> {
        tokio::pin!(shutdown);
        let mut clock = tokio::time::interval(self.tick);
        clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
        info!(mode = %self.session.config.mode.as_str(), players = self.session.config.required_players, "waiting for operators");
        loop {
            let running = self.session.phase() == Phase::Running;
            tokio::select! {
                _ = &mut shutdown => {
                    info!("shutting down");
                    break;
                }
                Some(msg) = rx.recv() => self.inbound(msg)?,
                _ = clock.tick(), if running => {
                    self.step()?;
                    if self.session.phase() == Phase::Finished {
                        break;
                    }
                }
            }
        }
        self.finish()
    }

    fn now(&self) -> f64 {
        self.session.world.sim_time
    }

    fn inbound(&mut self, msg: Inbound) -> Result<(), ServeError> {
        match msg {
            Inbound::Open { conn, out } => {
                self.clients.insert(
                    conn,
                    Client {
                        out,
                        seq: 0,
                        operator: None,
                        last: None,
                        since_keyframe: 0,
                    },
                );
            }
            Inbound::Closed { conn } => {
                if let Some(c) = self.clients.remove(&conn) {
                    info!(conn, operator = ?c.operator, "disconnected");
                }
            }
            Inbound::Text { conn, text } => self.message(conn, &text)?,
        }
        Ok(())
    }

    fn message(&mut self, conn: ConnId, text: &str) -> Result<(), ServeError> {
        let t = self.now();
        let Some(client) = self.clients.get_mut(&conn) else {
            return Ok(());
        };
        let parsed =
            parse_envelope(text).and_then(|env| Ok((env.seq, parse_client_message(&env)?)));
        let (seq, msg) = match parsed {
            Ok(m) => m,
            Err(e) => {
                let seq = serde_json::from_str::<serde_json::Value>(text)
                    .ok()
                    .and_then(|v| v.get("seq").and_then(|s| s.as_u64()));
                client.reject(t, CommandRejectedBody::from_protocol(&e, seq));
                return Ok(());
            }
        };
        match msg {
            ClientMessage::Join(body) => self.join(conn, seq, &body.name)?,
            ClientMessage::Command(body) => {
                let Some(op) = client.operator else {
                    client.reject(
                        t,
                        rejection("not_joined", "join before sending commands", Some(seq)),
                    );
                    return Ok(());
                };
                match self.session.submit(op, body) {
                    Ok(cmd) => {
                        self.pending.insert(cmd.seq, (conn, seq));
                    }
                    Err(e) => client.reject(t, rejection("not_running", e.to_string(), Some(seq))),
                }
            }
            ClientMessage::Fault(f) => {
                if let Err(e) = self.session.inject_fault(f.robot_id, f.on) {
                    client.reject(t, rejection("unknown_robot", e.to_string(), Some(seq)));
                }
            }
            ClientMessage::Bye => {
                if let Some(mut c) = self.clients.remove(&conn) {
                    c.send(
                        MessageType::Bye,
                        t,
                        &ByeBody {
                            reason: "goodbye".into(),
                        },
                    );
                }
            }
        }
        Ok(())
    }

    fn join(&mut self, conn: ConnId, seq: u64, name: &str) -> Result<(), ServeError> {
        let t = self.now();
        if self.clients[&conn].operator.is_some() {
            let c = self.clients.get_mut(&conn).expect("checked");
            c.reject(
                t,
                rejection("already_joined", "this connection has joined", Some(seq)),
            );
            return Ok(());
        }
        // A returning operator takes their seat back if nobody holds it.
        let seated: Vec<OperatorId> = self.clients.values().filter_map(|c| c.operator).collect();
        let returning = self
            .session
            .operators()
            .iter()
            .find(|(id, n)| n.as_str() == name && !seated.contains(id))
            .map(|(id, _)| *id);
        let was_lobby = self.session.phase() == Phase::Lobby;
        let op = match returning {
            Some(op) => op,
            None => match self.session.join(name) {
                Ok(op) => {
                    if let Some(rec) = &mut self.recorder {
                        rec.join(op, name)?;
                    }
                    op
                }
                Err(e) => {
                    let c = self.clients.get_mut(&conn).expect("checked");
                    c.reject(t, rejection("session_full", e.to_string(), Some(seq)));
                    c.send(
                        MessageType::Bye,
                        t,
                        &ByeBody {
                            reason: e.to_string(),
                        },
                    );
                    self.clients.remove(&conn);
                    return Ok(());
                }
            },
        };
        info!(conn, %op, name, "joined");
        let view = self.session.snapshot(op)?;
        let mode = self.session.config.mode;
        let c = self.clients.get_mut(&conn).expect("checked");
        c.operator = Some(op);
        c.send(
            MessageType::Joined,
            t,
            &JoinedBody {
                operator: op,
                name: name.to_owned(),
                mode,
            },
        );
        c.send(MessageType::StateKeyframe, t, &view);
        c.last = Some(view);
        c.since_keyframe = 0;
        if was_lobby && self.session.phase() == Phase::Running {
            info!("all operators present, game running");
            self.broadcast_status();
        }
        Ok(())
    }

    fn broadcast_status(&mut self) {
        let status = self.session.status();
        for c in self.clients.values_mut() {
            c.send(MessageType::GameStatus, status.sim_time, &status);
        }
    }

    fn step(&mut self) -> Result<(), ServeError> {
        let t = self.now();
        let report = self.session.run_tick()?;
        if let Some(rec) = &mut self.recorder {
            rec.tick(&report, t)?;
        }
        for outcome in &report.commands {
            let Some((conn, seq)) = self.pending.remove(&outcome.command.seq) else {
                continue;
            };
            if let (Some(r), Some(c)) = (&outcome.rejection, self.clients.get_mut(&conn)) {
                c.reject(t, CommandRejectedBody::from_rejection(r, Some(seq)));
            }
        }
        let mode = self.session.config.mode;
        let now = self.now();
        for c in self.clients.values_mut() {
            let Some(op) = c.operator else { continue };
            for ev in report.events.iter().filter(|ev| route_event(mode, ev, op)) {
                c.send(MessageType::Event, ev.sim_time, ev);
            }
            let view = self.session.snapshot(op)?;
            c.since_keyframe += 1;
            match &c.last {
                Some(prev) if c.since_keyframe < self.keyframe_every => {
                    let delta = StateDelta::between(prev, &view);
                    c.send(MessageType::StateDelta, now, &delta);
                }
                _ => {
                    c.send(MessageType::StateKeyframe, now, &view);
                    c.since_keyframe = 0;
                }
            }
            c.last = Some(view);
        }
        Ok(())
    }

    fn finish(mut self) -> Result<ServeOutcome, ServeError> {
        let status = self.session.status();
        if let Some(mut rec) = self.recorder.take() {
            rec.finish(&status, &self.session.world)?;
        }
        info!(
            points = status.points_scored,
            max = status.max_points,
            t = status.sim_time,
            "game over"
        );
        self.broadcast_status();
        for c in self.clients.values_mut() {
            c.send(
                MessageType::Bye,
                status.sim_time,
                &ByeBody {
                    reason: "game over".into(),
                },
            );
        }
        Ok(ServeOutcome {
            world_digest: world_digest(&self.session.world),
            status,
        })
    }
}
