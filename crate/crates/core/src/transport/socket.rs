// Copyright 2026 The BuffetFS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! TCP transport. Frames are the wire codec's `magic | tag | len | body`.
//!
//! A client keeps a pool of request connections per server, one dedicated
//! connection for one-way traffic (drained by a background sender), and one
//! push connection per server opened with `RegisterPush`.

use std::collections::{HashMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Weak};
use std::thread;
use std::time::Instant;

use log::{debug, warn};
use parking_lot::{Condvar, Mutex};

use super::{CounterSet, InvalidationTarget, RpcCounters, Transport, TransportError};
use crate::server::{BServer, PushSink};
use crate::wire::{decode_message, encode_message, parse_header, RpcMessage, HEADER_LEN};

const MAX_FRAME: usize = 1 << 30;

fn io_err(e: io::Error) -> TransportError {
    TransportError::Io(e.to_string())
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
fn read_frame(stream: &mut impl Read) -> Result<Option<Vec<u8>>, TransportError> {
    let mut frame = vec![0u8; HEADER_LEN];
    match stream.read_exact(&mut frame) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(io_err(e)),
    }
    let (_, body_len) = parse_header(&frame)?;
    if body_len > MAX_FRAME {
        return Err(TransportError::Io(format!("frame of {body_len} bytes refused")));
    }
    frame.resize(HEADER_LEN + body_len, 0);
    stream.read_exact(&mut frame[HEADER_LEN..]).map_err(io_err)?;
    Ok(Some(frame))
}

fn write_msg(stream: &mut impl Write, msg: &RpcMessage) -> Result<usize, TransportError> {
    let frame = encode_message(msg)?;
    stream.write_all(&frame).map_err(io_err)?;
    Ok(frame.len())
}

type PushChannels = Mutex<HashMap<u32, Arc<Mutex<TcpStream>>>>;

struct SocketPushSink {
    channels: Arc<PushChannels>,
}

impl PushSink for SocketPushSink {
    fn push(&self, client_id: u32, req: &RpcMessage) -> Result<(), TransportError> {
        let chan = self
            .channels
            .lock()
            .get(&client_id)
            .cloned()
            .ok_or_else(|| TransportError::Unreachable(format!("client {client_id}")))?;
        let mut stream = chan.lock();
        write_msg(&mut *stream, req).map(|_| ())
    }
}

/// Serves a [`BServer`] over TCP.
pub struct SocketServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl SocketServer {
    pub fn bind(addr: impl ToSocketAddrs, server: Arc<BServer>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let channels: Arc<PushChannels> = Arc::default();
        server.set_push_sink(Arc::new(SocketPushSink {
            channels: Arc::clone(&channels),
        }));
        let stop2 = Arc::clone(&stop);
        thread::Builder::new()
            .name(format!("bserver-accept-{local}"))
            .spawn(move || {
                for conn in listener.incoming() {
                    if stop2.load(Ordering::SeqCst) {
                        break;
                    }
                    match conn {
                        Ok(stream) => {
                            let server = Arc::clone(&server);
                            let channels = Arc::clone(&channels);
                            thread::spawn(move || serve_connection(stream, server, channels));
                        }
                        Err(e) => warn!("accept failed: {e}"),
                    }
                }
            })?;
        Ok(Self { addr: local, stop })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&self) {
        if !self.stop.swap(true, Ordering::SeqCst) {
            // wake the accept loop
            let _ = TcpStream::connect(self.addr);
        }
    }
}

impl Drop for SocketServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_connection(mut stream: TcpStream, server: Arc<BServer>, channels: Arc<PushChannels>) {
    let _ = stream.set_nodelay(true);
    let mut push_client = None;
    loop {
        let frame = match read_frame(&mut stream) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                debug!("connection closed: {e}");
                break;
            }
        };
        let msg = match decode_message(&frame) {
            Ok(m) => m,
            Err(e) => {
                warn!("undecodable frame, closing connection: {e}");
                break;
            }
        };
        if let RpcMessage::RegisterPush { client_id } = msg {
            match stream.try_clone() {
                Ok(w) => {
                    channels.lock().insert(client_id, Arc::new(Mutex::new(w)));
                    push_client = Some(client_id);
                }
                Err(e) => warn!("cannot register push channel: {e}"),
            }
            continue;
        }
        if let Some(reply) = server.dispatch(msg) {
            if let Err(e) = write_msg(&mut stream, &reply) {
                debug!("reply write failed: {e}");
                break;
            }
        }
    }
    if let Some(client) = push_client {
        channels.lock().remove(&client);
    }
}

enum Outgoing {
    Msg(String, Vec<u8>),
    Barrier(u64),
}

struct AsyncState {
    queue: Mutex<VecDeque<Outgoing>>,
    queued: Condvar,
    done: Mutex<u64>,
    done_cv: Condvar,
    stop: AtomicBool,
}

fn sender_loop(state: Arc<AsyncState>) {
    let mut conns: HashMap<String, TcpStream> = HashMap::new();
    loop {
        let item = {
            let mut q = state.queue.lock();
            loop {
                if let Some(item) = q.pop_front() {
                    break item;
                }
                if state.stop.load(Ordering::SeqCst) {
                    return;
                }
                state.queued.wait(&mut q);
            }
        };
        match item {
            Outgoing::Msg(addr, frame) => {
                if !conns.contains_key(&addr) {
                    match TcpStream::connect(&addr) {
                        Ok(s) => {
                            let _ = s.set_nodelay(true);
                            conns.insert(addr.clone(), s);
                        }
                        Err(e) => {
                            warn!("async message to {addr} dropped: {e}");
                            continue;
                        }
                    }
                }
                let stream = conns.get_mut(&addr).unwrap();
                if let Err(e) = stream.write_all(&frame) {
                    warn!("async message to {addr} dropped: {e}");
                    conns.remove(&addr);
                }
            }
            Outgoing::Barrier(seq) => {
                // a Pong on each async connection means every earlier
                // message on it was processed
                conns.retain(|addr, stream| {
                    let ok = write_msg(stream, &RpcMessage::Ping { seq }).is_ok()
                        && matches!(
                            read_frame(stream).map(|f| f.map(|f| decode_message(&f))),
                            Ok(Some(Ok(RpcMessage::Pong { .. })))
                        );
                    if !ok {
                        warn!("drain barrier to {addr} failed; dropping connection");
                    }
                    ok
                });
                *state.done.lock() = seq;
                state.done_cv.notify_all();
            }
        }
    }
}

/// Client endpoint speaking TCP to one or more [`SocketServer`]s.
pub struct SocketTransport {
    pool: Mutex<HashMap<String, Vec<TcpStream>>>,
    counters: CounterSet,
    async_state: Arc<AsyncState>,
    barrier_seq: AtomicU64,
    push_streams: Mutex<Vec<TcpStream>>,
}

impl Default for SocketTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl SocketTransport {
    pub fn new() -> Self {
        let async_state = Arc::new(AsyncState {
            queue: Mutex::new(VecDeque::new()),
            queued: Condvar::new(),
            done: Mutex::new(0),
            done_cv: Condvar::new(),
            stop: AtomicBool::new(false),
        });
        let st = Arc::clone(&async_state);
        thread::Builder::new()
            .name("socket-async".into())
            .spawn(move || sender_loop(st))
            .expect("spawn async sender");
        Self {
            pool: Mutex::new(HashMap::new()),
            counters: CounterSet::default(),
            async_state,
            barrier_seq: AtomicU64::new(0),
            push_streams: Mutex::new(Vec::new()),
        }
    }

    fn connect(addr: &str) -> Result<TcpStream, TransportError> {
        let s = TcpStream::connect(addr)
            .map_err(|e| TransportError::Unreachable(format!("{addr}: {e}")))?;
        let _ = s.set_nodelay(true);
        Ok(s)
    }

    fn exchange(stream: &mut TcpStream, msg: &RpcMessage) -> Result<(usize, Vec<u8>), TransportError> {
        let sent = write_msg(stream, msg)?;
        let reply = read_frame(stream)?
            .ok_or_else(|| TransportError::Io("connection closed before reply".into()))?;
        Ok((sent, reply))
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        self.async_state.stop.store(true, Ordering::SeqCst);
        self.async_state.queued.notify_all();
        for s in self.push_streams.lock().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Transport for SocketTransport {
    fn call(&self, addr: &str, msg: RpcMessage) -> Result<RpcMessage, TransportError> {
        if !msg.expects_reply() {
            return Err(TransportError::WrongKind(msg.name()));
        }
        let start = Instant::now();
        let pooled = self.pool.lock().get_mut(addr).and_then(Vec::pop);
        let mut stream = match pooled {
            Some(s) => s,
            None => Self::connect(addr)?,
        };
        let (sent, frame) = match Self::exchange(&mut stream, &msg) {
            Ok(r) => r,
            // a pooled connection may have gone stale; retry once on a fresh one
            Err(TransportError::Io(_)) if pooled_retry_allowed(&msg) => {
                stream = Self::connect(addr)?;
                Self::exchange(&mut stream, &msg)?
            }
            Err(e) => return Err(e),
        };
        let reply = decode_message(&frame)?;
        self.pool
            .lock()
            .entry(addr.to_string())
            .or_default()
            .push(stream);
        let elapsed = start.elapsed().as_nanos() as u64;
        self.counters.record_call(msg.tag(), sent, frame.len(), elapsed);
        Ok(reply)
    }

    fn notify(&self, addr: &str, msg: RpcMessage) -> Result<(), TransportError> {
        if !msg.is_one_way() {
            return Err(TransportError::WrongKind(msg.name()));
        }
        let frame = encode_message(&msg)?;
        self.counters.record_async(msg.tag(), frame.len());
        self.async_state
            .queue
            .lock()
            .push_back(Outgoing::Msg(addr.to_string(), frame));
        self.async_state.queued.notify_one();
        Ok(())
    }

    fn drain(&self) {
        let seq = self.barrier_seq.fetch_add(1, Ordering::SeqCst) + 1;
        self.async_state
            .queue
            .lock()
            .push_back(Outgoing::Barrier(seq));
        self.async_state.queued.notify_one();
        let mut done = self.async_state.done.lock();
        while *done < seq {
            self.async_state.done_cv.wait(&mut done);
        }
    }

    fn register_push(
        &self,
        addr: &str,
        target: Weak<dyn InvalidationTarget>,
    ) -> Result<(), TransportError> {
        let client_id = target
            .upgrade()
            .ok_or_else(|| TransportError::Unreachable("agent dropped".into()))?
            .client_id();
        let mut stream = Self::connect(addr)?;
        write_msg(&mut stream, &RpcMessage::RegisterPush { client_id })?;
        // a round trip on the same connection confirms the registration
        write_msg(&mut stream, &RpcMessage::Ping { seq: 0 })?;
        match read_frame(&mut stream)?.map(|f| decode_message(&f)) {
            Some(Ok(RpcMessage::Pong { .. })) => {}
            _ => return Err(TransportError::Io("push registration not confirmed".into())),
        }
        self.push_streams
            .lock()
            .push(stream.try_clone().map_err(io_err)?);
        let addr = addr.to_string();
        thread::Builder::new()
            .name(format!("push-{client_id}"))
            .spawn(move || push_loop(stream, target, &addr))
            .map_err(io_err)?;
        Ok(())
    }

    fn snapshot_counters(&self) -> RpcCounters {
        self.counters.snapshot()
    }

    fn reset_counters(&self) {
        self.counters.reset();
    }
}

// Only requests that are safe to resend after a failed write or read.
fn pooled_retry_allowed(msg: &RpcMessage) -> bool {
    matches!(
        msg,
        RpcMessage::GetDirRequest { .. } | RpcMessage::AdminDumpRequest { .. } | RpcMessage::Ping { .. }
    )
}

fn push_loop(mut stream: TcpStream, target: Weak<dyn InvalidationTarget>, addr: &str) {
    loop {
        let frame = match read_frame(&mut stream) {
            Ok(Some(f)) => f,
            Ok(None) => return,
            Err(e) => {
                debug!("push channel from {addr} closed: {e}");
                return;
            }
        };
        let msg = match decode_message(&frame) {
            Ok(m) => m,
            Err(e) => {
                warn!("bad push frame from {addr}: {e}");
                return;
            }
        };
        let Some(target) = target.upgrade() else {
            return;
        };
        if let RpcMessage::InvalidateRequest { .. } = msg {
            let ack = target.handle_invalidate(&msg);
            if let Err(e) = write_msg(&mut stream, &ack) {
                warn!("ack to {addr} failed: {e}");
                return;
            }
        } else {
            debug!("ignoring {} on push channel", msg.name());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::server::ServerConfig;
    use crate::types::BuffetInode;

    #[test]
    fn call_and_drain_over_tcp() {
        let server = BServer::new(ServerConfig::new(1, 0));
        let ss = SocketServer::bind("127.0.0.1:0", Arc::clone(&server)).unwrap();
        let addr = ss.local_addr().to_string();
        let t = SocketTransport::new();
        let reply = t
            .call(
                &addr,
                RpcMessage::GetDirRequest {
                    dir_inode: BuffetInode::root(1, 0),
                    client_id: 1,
                },
            )
            .unwrap();
        assert!(matches!(reply, RpcMessage::GetDirReply { .. }));
        t.notify(
            &addr,
            RpcMessage::CloseNotify {
                inode: BuffetInode::new(1, 0, 1),
                open_token: 1,
                client_id: 1,
            },
        )
        .unwrap();
        t.drain();
        t.drain();
        let c = t.snapshot_counters();
        assert_eq!((c.sync_rpcs, c.async_msgs), (1, 1));
    }

    #[test]
    fn unreachable_address() {
        let t = SocketTransport::new();
        let r = t.call(
            "127.0.0.1:1",
            RpcMessage::Ping { seq: 1 },
        );
        assert!(matches!(r, Err(TransportError::Unreachable(_))));
    }
}
