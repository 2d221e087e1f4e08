//! TCP transport. A connection whose first bytes are `GET ` is upgraded to a
//! WebSocket (one JSON message per text frame); anything else speaks
//! newline-delimited JSON on the raw socket.
//!
//! Connection tasks only move text. The session loop is the single owner of
//! the [`Session`]: it applies queued client messages in arrival order,
//! drains the queue once more right before each tick, and hands outgoing
//! text back to per-connection writer tasks.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::{JoinHandle, JoinSet};
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::Message;

use crate::error::{Result, ServerError};
use crate::session::{ClientId, Session, TickOutcome};

/// Longest accepted client message, in bytes.
pub const MAX_MESSAGE_BYTES: usize = 64 * 1024;

enum Inbound {
    Connected {
        writer: mpsc::UnboundedSender<Outbound>,
        id: oneshot::Sender<ClientId>,
    },
    Text(ClientId, String),
    Violation(ClientId, String),
    Closed(ClientId),
}

enum Outbound {
    Text(String),
    Close,
}

pub struct Server {
    listener: TcpListener,
    session: Session,
    exit_when_over: bool,
}

impl Server {
    pub async fn bind(addr: &str, session: Session) -> Result<Self> {
        let listener = TcpListener::bind(addr).await.map_err(|source| ServerError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Self {
            listener,
            session,
            exit_when_over: false,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Stop once the match (or playback) has ended instead of idling.
    pub fn exit_when_over(mut self, yes: bool) -> Self {
        self.exit_when_over = yes;
        self
    }

    /// Serves until `shutdown` resolves (or the match ends, see
    /// [`Server::exit_when_over`]) and returns the session.
    pub async fn run(self, shutdown: impl Future<Output = ()>) -> Result<Session> {
        let Server {
            listener,
            mut session,
            exit_when_over,
        } = self;
        let (tx, mut rx) = mpsc::unbounded_channel();
        let mut connections = JoinSet::new();
        let accept = tokio::spawn(async move {
            let mut handlers = JoinSet::new();
            loop {
                match listener.accept().await {
                    Ok((stream, peer)) => {
                        log::info!("connection from {peer}");
                        handlers.spawn(connection(stream, tx.clone()));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        });

        let mut writers: HashMap<ClientId, mpsc::UnboundedSender<Outbound>> = HashMap::new();
        let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / session.tick_rate()));
        interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
        tokio::pin!(shutdown);
        let result = loop {
            tokio::select! {
                _ = &mut shutdown => break Ok(()),
                Some(msg) = rx.recv() => apply(&mut session, &mut writers, &mut connections, msg),
                _ = interval.tick() => {
                    while let Ok(msg) = rx.try_recv() {
                        apply(&mut session, &mut writers, &mut connections, msg);
                    }
                    match session.tick() {
                        Ok(outcome) => {
                            flush(&mut session, &mut writers);
                            if exit_when_over && (outcome == TickOutcome::Finished || session.is_over()) {
                                break Ok(());
                            }
                        }
                        Err(e) => break Err(e),
                    }
                }
            }
            flush(&mut session, &mut writers);
        };
        accept.abort();
        for (_, w) in writers.drain() {
            let _ = w.send(Outbound::Close);
        }
        // Let writers deliver what is already queued.
        let _ = tokio::time::timeout(Duration::from_secs(2), async {
            while connections.join_next().await.is_some() {}
        })
        .await;
        result.map(|()| session)
    }
}

fn apply(
    session: &mut Session,
    writers: &mut HashMap<ClientId, mpsc::UnboundedSender<Outbound>>,
    connections: &mut JoinSet<()>,
    msg: Inbound,
) {
    match msg {
        Inbound::Connected { writer, id } => {
            let client = session.connect();
            writers.insert(client, writer.clone());
            if id.send(client).is_err() {
                session.disconnect(client);
                writers.remove(&client);
                return;
            }
            // Tracks the connection so shutdown can wait for its writer.
            connections.spawn(async move { writer.closed().await });
        }
        Inbound::Text(client, text) => session.handle(client, &text),
        Inbound::Violation(client, msg) => session.violation(client, msg),
        Inbound::Closed(client) => {
            session.disconnect(client);
            if let Some(w) = writers.remove(&client) {
                let _ = w.send(Outbound::Close);
            }
        }
    }
}

fn flush(session: &mut Session, writers: &mut HashMap<ClientId, mpsc::UnboundedSender<Outbound>>) {
    for out in session.drain() {
        if let Some(w) = writers.get(&out.to) {
            let _ = w.send(Outbound::Text(out.text));
        }
    }
    for client in session.take_kicked() {
        if let Some(w) = writers.remove(&client) {
            let _ = w.send(Outbound::Close);
        }
    }
}

async fn is_websocket(stream: &TcpStream) -> std::io::Result<bool> {
    const GET: &[u8] = b"GET ";
    let mut buf = [0u8; 4];
    loop {
        let n = stream.peek(&mut buf).await?;
        if n == 0 || buf[..n] != GET[..n] {
            return Ok(false);
        }
        if n == GET.len() {
            return Ok(true);
        }
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
}

async fn connection(stream: TcpStream, inbound: mpsc::UnboundedSender<Inbound>) {
    let _ = stream.set_nodelay(true);
    let websocket = match is_websocket(&stream).await {
        Ok(ws) => ws,
        Err(e) => return log::debug!("connection closed before its first message: {e}"),
    };
    let (writer, outbound) = mpsc::unbounded_channel();
    let (id_tx, id_rx) = oneshot::channel();
    if inbound.send(Inbound::Connected { writer, id: id_tx }).is_err() {
        return;
    }
    let Ok(id) = id_rx.await else {
        return;
    };
    let served = if websocket {
        match tokio_tungstenite::accept_async(stream).await {
            Ok(ws) => Some(serve_websocket(ws, id, &inbound, outbound).await),
            Err(e) => {
                log::warn!("websocket handshake failed: {e}");
                None
            }
        }
    } else {
        let (read, write) = stream.into_split();
        Some(serve_lines(read, write, id, &inbound, outbound).await)
    };
    match served {
        // The session replies with an error and then closes the writer.
        Some((writer, Ended::Violation)) => {
            let _ = writer.await;
            let _ = inbound.send(Inbound::Closed(id));
        }
        Some((writer, Ended::Closed)) => {
            let _ = inbound.send(Inbound::Closed(id));
            let _ = writer.await;
        }
        None => {
            let _ = inbound.send(Inbound::Closed(id));
        }
    }
}

/// How the reading side of a connection ended.
enum Ended {
    Closed,
    Violation,
}

async fn serve_lines(
    read: impl AsyncRead + Unpin,
    mut write: impl AsyncWrite + Unpin + Send + 'static,
    id: ClientId,
    inbound: &mpsc::UnboundedSender<Inbound>,
    mut outbound: mpsc::UnboundedReceiver<Outbound>,
) -> (JoinHandle<()>, Ended) {
    let writer = tokio::spawn(async move {
        while let Some(Outbound::Text(text)) = outbound.recv().await {
            let mut line = text.into_bytes();
            line.push(b'\n');
            if write.write_all(&line).await.is_err() {
                return;
            }
        }
        let _ = write.shutdown().await;
    });
    let mut reader = BufReader::new(read);
    let mut line = Vec::new();
    let ended = loop {
        let buf = match reader.fill_buf().await {
            Ok([]) | Err(_) => break Ended::Closed,
            Ok(buf) => buf,
        };
        let (chunk, complete) = match buf.iter().position(|&b| b == b'\n') {
            Some(i) => (&buf[..i], Some(i + 1)),
            None => (buf, None),
        };
        line.extend_from_slice(chunk);
        let used = complete.unwrap_or(chunk.len());
        reader.consume(used);
        if line.len() > MAX_MESSAGE_BYTES {
            let _ = inbound.send(Inbound::Violation(
                id,
                format!("message longer than {MAX_MESSAGE_BYTES} bytes"),
            ));
            break Ended::Violation;
        }
        if complete.is_some() {
            let text = String::from_utf8_lossy(&line).trim().to_string();
            line.clear();
            if !text.is_empty() && inbound.send(Inbound::Text(id, text)).is_err() {
                break Ended::Closed;
            }
        }
    };
    (writer, ended)
}

async fn serve_websocket(
    ws: tokio_tungstenite::WebSocketStream<TcpStream>,
    id: ClientId,
    inbound: &mpsc::UnboundedSender<Inbound>,
    mut outbound: mpsc::UnboundedReceiver<Outbound>,
) -> (JoinHandle<()>, Ended) {
    let (mut sink, mut stream) = ws.split();
    let writer = tokio::spawn(async move {
        while let Some(Outbound::Text(text)) = outbound.recv().await {
            if sink.send(Message::Text(text)).await.is_err() {
                return;
            }
        }
        let _ = sink.close().await;
    });
    let ended = loop {
        let Some(frame) = stream.next().await else {
            break Ended::Closed;
        };
        match frame {
            Ok(Message::Text(text)) if text.len() > MAX_MESSAGE_BYTES => {
                let _ = inbound.send(Inbound::Violation(
                    id,
                    format!("message longer than {MAX_MESSAGE_BYTES} bytes"),
                ));
                break Ended::Violation;
            }
            Ok(Message::Text(text)) => {
                for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
                    let _ = inbound.send(Inbound::Text(id, line.to_string()));
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = inbound.send(Inbound::Violation(id, "binary frames are not supported".into()));
                break Ended::Violation;
            }
            Ok(Message::Close(_)) | Err(_) => break Ended::Closed,
            Ok(_) => {}
        }
    };
    (writer, ended)
}
