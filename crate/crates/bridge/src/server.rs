//! TCP server: one reader thread per connection, one stepping thread per
//! session, newline-delimited JSON both ways.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use onramp_core::DiscreteAction;

use crate::protocol::{ClientMessage, FrameMessage, Pacing, ServerMessage};
use crate::session::Session;
use crate::BridgeError;

enum Command {
    Action(DiscreteAction),
    Close,
}

type Registry = Arc<Mutex<HashMap<u64, Sender<Command>>>>;

/// Fan-out of server messages to any number of subscribers. Subscribers
/// whose receiving end is gone are dropped.
#[derive(Default)]
pub struct Broadcast {
    subscribers: Vec<Sender<ServerMessage>>,
}

impl Broadcast {
    pub fn subscribe(&mut self, tx: Sender<ServerMessage>) {
        self.subscribers.push(tx);
    }

    pub fn send(&mut self, msg: &ServerMessage) {
        self.subscribers.retain(|tx| tx.send(msg.clone()).is_ok());
    }

    pub fn is_empty(&self) -> bool {
        self.subscribers.is_empty()
    }
}

pub struct Server {
    listener: TcpListener,
    sessions: Registry,
    next_id: Arc<AtomicU64>,
}

impl Server {
    pub fn bind(addr: &str) -> Result<Self, BridgeError> {
        let listener = TcpListener::bind(addr).map_err(|e| BridgeError::Io(format!("{addr}: {e}")))?;
        Ok(Self { listener, sessions: Registry::default(), next_id: Arc::new(AtomicU64::new(1)) })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, BridgeError> {
        self.listener.local_addr().map_err(|e| BridgeError::Io(e.to_string()))
    }

    /// Accepts connections until the listener fails.
    pub fn run(self) -> Result<(), BridgeError> {
        for stream in self.listener.incoming() {
            let stream = stream.map_err(|e| BridgeError::Io(e.to_string()))?;
            let (sessions, next_id) = (self.sessions.clone(), self.next_id.clone());
            thread::spawn(move || {
                let _ = handle_connection(stream, sessions, next_id);
            });
        }
        Ok(())
    }

    pub fn spawn(self) -> JoinHandle<Result<(), BridgeError>> {
        thread::spawn(move || self.run())
    }
}

fn handle_connection(stream: TcpStream, sessions: Registry, next_id: Arc<AtomicU64>) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let (out_tx, out_rx) = mpsc::channel::<ServerMessage>();
    let mut writer = stream.try_clone()?;
    let writer_thread = thread::spawn(move || {
        for msg in out_rx {
            if writer.write_all(msg.to_line().as_bytes()).is_err() {
                break;
            }
        }
    });
    let mut owned = Vec::new();
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg = match serde_json::from_str::<ClientMessage>(&line) {
            Ok(m) => m,
            Err(e) => {
                let _ = out_tx.send(ServerMessage::error(None, format!("malformed message: {e}")));
                continue;
            }
        };
        match msg {
            ClientMessage::Open { config } => {
                let id = next_id.fetch_add(1, Ordering::Relaxed);
                match Session::open(id, config) {
                    Ok(session) => {
                        let (cmd_tx, cmd_rx) = mpsc::channel();
                        sessions.lock().expect("registry lock").insert(id, cmd_tx);
                        owned.push(id);
                        let mut broadcast = Broadcast::default();
                        broadcast.subscribe(out_tx.clone());
                        let registry = sessions.clone();
                        thread::spawn(move || {
                            run_session(session, cmd_rx, broadcast);
                            registry.lock().expect("registry lock").remove(&id);
                        });
                    }
                    Err(e) => {
                        let _ = out_tx.send(ServerMessage::error(None, e.to_string()));
                    }
                }
            }
            ClientMessage::Action { session_id, action } => forward(&sessions, &out_tx, session_id, Command::Action(action)),
            ClientMessage::Close { session_id } => forward(&sessions, &out_tx, session_id, Command::Close),
        }
    }
    // The client hung up; its sessions go with it.
    let mut reg = sessions.lock().expect("registry lock");
    for id in owned {
        reg.remove(&id);
    }
    drop(reg);
    drop(out_tx);
    let _ = writer_thread.join();
    Ok(())
}

fn forward(sessions: &Registry, out: &Sender<ServerMessage>, id: u64, cmd: Command) {
    let tx = sessions.lock().expect("registry lock").get(&id).cloned();
    let delivered = tx.is_some_and(|tx| tx.send(cmd).is_ok());
    if !delivered {
        let _ = out.send(ServerMessage::error(Some(id), BridgeError::UnknownSession(id).to_string()));
    }
}

const FRAME_PERIOD: Duration = Duration::from_millis(100);

/// Stepping loop of one session. Pending actions are consumed at decision
/// boundaries; frames leave according to the session's pacing.
fn run_session(mut session: Session, commands: Receiver<Command>, mut out: Broadcast) {
    let id = session.id();
    let pacing = session.config().pacing;
    out.send(&ServerMessage::Ack { session_id: id, of: "open".into(), trace_csv: None });
    out.send(&ServerMessage::Frame(Box::new(session.initial_frame())));
    let mut outbox: VecDeque<FrameMessage> = VecDeque::new();
    let mut next_due = Instant::now();
    loop {
        while let Some(f) = outbox.front() {
            if pacing == Pacing::Realtime && Instant::now() < next_due {
                break;
            }
            out.send(&ServerMessage::Frame(Box::new(f.clone())));
            outbox.pop_front();
            next_due = next_due.max(Instant::now() - FRAME_PERIOD) + FRAME_PERIOD;
        }
        if out.is_empty() {
            return;
        }
        let free_running = outbox.is_empty() && pacing != Pacing::Lockstep && !session.is_done();
        let cmd = if free_running {
            commands.try_recv().map_err(|e| match e {
                mpsc::TryRecvError::Empty => RecvTimeoutError::Timeout,
                mpsc::TryRecvError::Disconnected => RecvTimeoutError::Disconnected,
            })
        } else if pacing == Pacing::Realtime && !outbox.is_empty() {
            commands.recv_timeout(next_due.saturating_duration_since(Instant::now()))
        } else {
            commands.recv().map_err(|_| RecvTimeoutError::Disconnected)
        };
        match cmd {
            Ok(Command::Action(a)) => {
                if session.is_done() {
                    out.send(&ServerMessage::error(Some(id), BridgeError::Ended(id).to_string()));
                    continue;
                }
                session.submit(a);
                out.send(&ServerMessage::Ack { session_id: id, of: "action".into(), trace_csv: None });
                if pacing == Pacing::Lockstep {
                    step(&mut session, &mut outbox, &mut out);
                }
            }
            Ok(Command::Close) => {
                for f in outbox.drain(..) {
                    out.send(&ServerMessage::Frame(Box::new(f)));
                }
                out.send(&ServerMessage::Ack { session_id: id, of: "close".into(), trace_csv: Some(session.trace_csv()) });
                return;
            }
            Err(RecvTimeoutError::Timeout) => {
                if free_running {
                    step(&mut session, &mut outbox, &mut out);
                }
            }
            Err(RecvTimeoutError::Disconnected) => return,
        }
    }
}

fn step(session: &mut Session, outbox: &mut VecDeque<FrameMessage>, out: &mut Broadcast) {
    match session.step_decision() {
        Ok(frames) => outbox.extend(frames),
        Err(e) => out.send(&ServerMessage::error(Some(session.id()), e.to_string())),
    }
}
