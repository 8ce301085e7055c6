#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};
use tokio_util::bytes::Bytes;
use tokio_util::codec::{Framed, LengthDelimitedCodec};

use cotransport::harness::ScenarioConfig;
use cotransport::service::protocol::{parse_envelope, Envelope, PROTOCOL_VERSION};
use cotransport_cli::server::{serve, ServeError, ServeOptions, ServeOutcome};

pub struct Server {
    pub addr: SocketAddr,
    pub handle: JoinHandle<Result<ServeOutcome, ServeError>>,
    pub stop: Option<oneshot::Sender<()>>,
}

pub async fn start(cfg: ScenarioConfig, tick_ms: u64, record: Option<PathBuf>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let mut opts = ServeOptions::new(cfg);
    opts.tick = Duration::from_millis(tick_ms);
    opts.record = record;
    opts.keyframe_every = 20;
    let (stop, stopped) = oneshot::channel::<()>();
    let handle = tokio::spawn(serve(listener, opts, async {
        let _ = stopped.await;
    }));
    Server {
        addr,
        handle,
        stop: Some(stop),
    }
}

pub enum Conn {
    Tcp(Framed<TcpStream, LengthDelimitedCodec>),
    Ws(Box<WebSocketStream<MaybeTlsStream<TcpStream>>>),
}

impl Conn {
    pub async fn tcp(addr: SocketAddr) -> Self {
        let s = TcpStream::connect(addr).await.unwrap();
        Conn::Tcp(Framed::new(s, LengthDelimitedCodec::new()))
    }

    pub async fn ws(addr: SocketAddr) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/"))
            .await
            .unwrap();
        Conn::Ws(Box::new(ws))
    }

    pub async fn send_raw(&mut self, text: String) {
        match self {
            Conn::Tcp(f) => f.send(Bytes::from(text)).await.unwrap(),
            Conn::Ws(w) => w.send(Message::Text(text)).await.unwrap(),
        }
    }

    pub async fn send<T: Serialize>(&mut self, kind: &str, seq: u64, body: &T) {
        let env = Envelope {
            v: PROTOCOL_VERSION,
            kind: kind.to_owned(),
            seq,
            t: 0.0,
            body: serde_json::to_value(body).unwrap(),
        };
        self.send_raw(env.to_json()).await;
    }

    /// Next message, or None once the server hangs up.
    pub async fn recv(&mut self) -> Option<Envelope> {
        loop {
            let next = tokio::time::timeout(Duration::from_secs(20), async {
                match self {
                    Conn::Tcp(f) => f
                        .next()
                        .await
                        .map(|r| r.ok().map(|b| String::from_utf8(b.to_vec()).unwrap())),
                    Conn::Ws(w) => w.next().await.map(|r| {
                        r.ok().and_then(|m| match m {
                            Message::Text(t) => Some(t),
                            _ => None,
                        })
                    }),
                }
            })
            .await
            .expect("server went quiet");
            match next {
                None => return None,
                Some(None) => {
                    if matches!(self, Conn::Tcp(_)) {
                        return None;
                    }
                }
                Some(Some(text)) => {
                    return Some(parse_envelope(&text).expect("server sends valid envelopes"))
                }
            }
        }
    }

    /// Skips messages until one of `kind` arrives.
    pub async fn expect(&mut self, kind: &str) -> Envelope {
        loop {
            let env = self
                .recv()
                .await
                .unwrap_or_else(|| panic!("closed while waiting for {kind}"));
            if env.kind == kind {
                return env;
            }
        }
    }
}
