//! Endpoint state machines for the three schemes plus transmit-side fault
//! shaping.
//!
//! All wire styles reduce to the same model: an application-facing write path
//! (shaping → optional delay queue → backlog → wire) and a read path (wire →
//! rx buffer). `poll` pumps both directions; nothing happens between polls,
//! which is what makes virtual-time runs reproducible.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::os::fd::{AsRawFd, FromRawFd, RawFd};
use std::os::unix::fs::OpenOptionsExt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock, Mutex};
use std::time::{Duration, Instant};

use dtp_core::time::{Timestamp, VirtualClock};

use crate::{ConnectionString, FaultSpec, Role, Scheme, TransportError};

/// Traffic counters. `bytes_out` counts bytes actually released to the wire
/// (after shaping and after any latency delay); `bytes_in` counts bytes that
/// arrived in the receive buffer. For a healthy pair, one side's `bytes_out`
/// eventually equals the other side's `bytes_in`, which is what the
/// settle barrier waits for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EndpointStats {
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub reconnects: u64,
}

// ---------------------------------------------------------------------------
// Seeded per-byte corruption
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pure function of (seed, index): decides whether transmitted byte `index`
/// is corrupted and, if so, what it becomes. The XOR mask is never zero, so a
/// corrupted byte always differs from the original.
fn corrupt_byte(seed: u64, index: u64, probability: f64, b: u8) -> u8 {
    let h = splitmix64(seed ^ splitmix64(index));
    let threshold = (probability * (1u64 << 53) as f64) as u64;
    if (h >> 11) < threshold {
        b ^ ((splitmix64(h) % 255) as u8 + 1)
    } else {
        b
    }
}

#[derive(Default)]
struct Faults {
    drop_all: bool,
    corrupt: Option<(f64, u64)>,
    latency: Option<Duration>,
    disconnect_at: Option<Timestamp>,
}

// ---------------------------------------------------------------------------
// mem:// rendezvous registry
// ---------------------------------------------------------------------------

struct MemShared {
    to_listen: VecDeque<u8>,
    to_connect: VecDeque<u8>,
    listen_open: bool,
    connect_open: bool,
    /// Bumped on every (re)connect so the listen side can count reconnects.
    session: u64,
}

static MEM_REGISTRY: LazyLock<Mutex<HashMap<String, Arc<Mutex<MemShared>>>>> =
    LazyLock::new(Default::default);

// ---------------------------------------------------------------------------
// Wire state per scheme
// ---------------------------------------------------------------------------

enum Wire {
    Mem {
        name: String,
        shared: Option<Arc<Mutex<MemShared>>>,
        last_session: u64,
    },
    TcpListen {
        listener: TcpListener,
        stream: Option<TcpStream>,
        had_session: bool,
    },
    TcpConnect {
        stream: Option<TcpStream>,
        had_session: bool,
    },
    PtyListen {
        master: Option<File>,
        link: PathBuf,
    },
    PtyConnect {
        file: Option<File>,
        had_session: bool,
    },
}

type Tap = Box<dyn FnMut(Timestamp, &[u8]) + Send>;

struct Inner {
    cs: ConnectionString,
    role: Role,
    clock: VirtualClock,
    wire: Wire,
    faults: Faults,
    stats: EndpointStats,
    corrupt_index: u64,
    /// Shaped bytes waiting for their virtual release time.
    delay: VecDeque<(Timestamp, Vec<u8>)>,
    /// Shaped, released bytes not yet accepted by the wire.
    backlog: VecDeque<u8>,
    rx: VecDeque<u8>,
    rx_tap: Option<Tap>,
    tx_tap: Option<Tap>,
    disconnect_fired: bool,
}

/// One side of a duplex byte stream. Cheap to clone; clones share state.
#[derive(Clone)]
pub struct Endpoint {
    inner: Arc<Mutex<Inner>>,
}

impl Endpoint {
    pub fn open(
        cs: &ConnectionString,
        role: Role,
        clock: VirtualClock,
    ) -> Result<Endpoint, TransportError> {
        let wire = match (cs.scheme, role) {
            (Scheme::Mem, Role::Listen) => {
                let mut reg = MEM_REGISTRY.lock().unwrap();
                if reg.contains_key(&cs.address) {
                    return Err(TransportError::BindConflict(cs.address.clone()));
                }
                let shared = Arc::new(Mutex::new(MemShared {
                    to_listen: VecDeque::new(),
                    to_connect: VecDeque::new(),
                    listen_open: true,
                    connect_open: false,
                    session: 0,
                }));
                reg.insert(cs.address.clone(), shared.clone());
                Wire::Mem {
                    name: cs.address.clone(),
                    shared: Some(shared),
                    last_session: 0,
                }
            }
            (Scheme::Mem, Role::Connect) => {
                let shared = attach_mem(&cs.address)?;
                let session = shared.lock().unwrap().session;
                Wire::Mem {
                    name: cs.address.clone(),
                    shared: Some(shared),
                    last_session: session,
                }
            }
            (Scheme::Tcp, Role::Listen) => {
                let listener = TcpListener::bind(&cs.address).map_err(|e| {
                    if e.kind() == io::ErrorKind::AddrInUse {
                        TransportError::BindConflict(cs.address.clone())
                    } else {
                        TransportError::Io(e)
                    }
                })?;
                listener.set_nonblocking(true)?;
                Wire::TcpListen {
                    listener,
                    stream: None,
                    had_session: false,
                }
            }
            (Scheme::Tcp, Role::Connect) => Wire::TcpConnect {
                stream: Some(dial_tcp(&cs.address)?),
                had_session: true,
            },
            (Scheme::Pty, Role::Listen) => {
                let (master, slave_path) = open_pty_master()?;
                let link = PathBuf::from(&cs.address);
                place_symlink(&slave_path, &link)?;
                Wire::PtyListen {
                    master: Some(master),
                    link,
                }
            }
            (Scheme::Pty, Role::Connect) => Wire::PtyConnect {
                file: Some(open_pty_slave(&cs.address)?),
                had_session: true,
            },
        };
        Ok(Endpoint {
            inner: Arc::new(Mutex::new(Inner {
                cs: cs.clone(),
                role,
                clock,
                wire,
                faults: Faults::default(),
                stats: EndpointStats::default(),
                corrupt_index: 0,
                delay: VecDeque::new(),
                backlog: VecDeque::new(),
                rx: VecDeque::new(),
                rx_tap: None,
                tx_tap: None,
                disconnect_fired: false,
            })),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.inner.lock().unwrap().cs.scheme
    }

    pub fn role(&self) -> Role {
        self.inner.lock().unwrap().role
    }

    /// The concrete bound address. For a TCP listener bound to port 0 this
    /// reports the kernel-assigned port.
    pub fn local_address(&self) -> String {
        let g = self.inner.lock().unwrap();
        match &g.wire {
            Wire::TcpListen { listener, .. } => listener
                .local_addr()
                .map(|a| a.to_string())
                .unwrap_or_else(|_| g.cs.address.clone()),
            _ => g.cs.address.clone(),
        }
    }

    /// Queues bytes for transmission, applying fault shaping. Bytes written
    /// while no peer is attached are discarded, as they would be on a real
    /// unplugged link.
    pub fn write(&self, data: &[u8]) -> Result<(), TransportError> {
        let mut g = self.inner.lock().unwrap();
        let now = g.clock.now();
        g.check_disconnect_deadline(now);
        if let Some(tap) = g.tx_tap.as_mut() {
            tap(now, data);
        }
        if !g.peer_attached() || g.faults.drop_all {
            return Ok(());
        }
        let shaped: Vec<u8> = if let Some((p, seed)) = g.faults.corrupt {
            let base = g.corrupt_index;
            g.corrupt_index += data.len() as u64;
            data.iter()
                .enumerate()
                .map(|(i, &b)| corrupt_byte(seed, base + i as u64, p, b))
                .collect()
        } else {
            data.to_vec()
        };
        match g.faults.latency {
            Some(d) => {
                let release = now + d;
                g.delay.push_back((release, shaped));
            }
            None => {
                g.backlog.extend(shaped);
                g.flush_wire();
            }
        }
        Ok(())
    }

    /// Drains everything currently received.
    pub fn read_available(&self) -> Vec<u8> {
        let mut g = self.inner.lock().unwrap();
        let now = g.clock.now();
        g.check_disconnect_deadline(now);
        g.pump(now);
        g.rx.drain(..).collect()
    }

    /// Pumps the endpoint: releases due delayed bytes, flushes the backlog,
    /// accepts pending peers, and moves arrived bytes into the rx buffer.
    pub fn poll(&self) {
        let mut g = self.inner.lock().unwrap();
        let now = g.clock.now();
        g.check_disconnect_deadline(now);
        g.pump(now);
    }

    pub fn inject_fault(&self, fault: FaultSpec) -> Result<(), TransportError> {
        let mut g = self.inner.lock().unwrap();
        match fault {
            FaultSpec::DropAll => {
                if g.faults.latency.is_some() {
                    return Err(TransportError::ConflictingFaults);
                }
                g.faults.drop_all = true;
                g.delay.clear();
                g.backlog.clear();
                g.disconnect_wire();
            }
            FaultSpec::Corrupt { probability, seed } => {
                if !(0.0..=1.0).contains(&probability) || !probability.is_finite() {
                    return Err(TransportError::BadProbability(probability));
                }
                g.faults.corrupt = Some((probability, seed));
            }
            FaultSpec::Latency { duration } => {
                if g.faults.drop_all {
                    return Err(TransportError::ConflictingFaults);
                }
                g.faults.latency = Some(duration);
            }
            FaultSpec::DisconnectAt { at } => {
                g.faults.disconnect_at = Some(at);
                g.disconnect_fired = false;
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> EndpointStats {
        self.inner.lock().unwrap().stats
    }

    pub fn is_connected(&self) -> bool {
        self.inner.lock().unwrap().connected()
    }

    /// Orderly local disconnect: pending shaped bytes are discarded.
    pub fn disconnect(&self) {
        let mut g = self.inner.lock().unwrap();
        g.delay.clear();
        g.backlog.clear();
        g.disconnect_wire();
    }

    /// Re-attaches a connect-role endpoint to its address. Listen endpoints
    /// re-accept automatically on `poll`.
    pub fn reconnect(&self) -> Result<(), TransportError> {
        let mut g = self.inner.lock().unwrap();
        if g.role != Role::Connect {
            return Err(TransportError::Io(io::Error::other(
                "listen endpoints re-accept automatically",
            )));
        }
        let address = g.cs.address.clone();
        match &mut g.wire {
            Wire::Mem {
                shared,
                last_session,
                ..
            } => {
                let arc = attach_mem(&address)?;
                {
                    let mut s = arc.lock().unwrap();
                    s.to_listen.clear();
                    s.to_connect.clear();
                }
                *last_session = arc.lock().unwrap().session;
                *shared = Some(arc);
                // A connect-role mem endpoint always attaches at open, so
                // any successful reconnect is a re-connection.
                g.stats.reconnects += 1;
            }
            Wire::TcpConnect {
                stream,
                had_session,
            } => {
                let s = dial_tcp(&address)?;
                let had = *had_session;
                *stream = Some(s);
                *had_session = true;
                if had {
                    g.stats.reconnects += 1;
                }
            }
            Wire::PtyConnect { file, had_session } => {
                let f = open_pty_slave(&address)?;
                let had = *had_session;
                *file = Some(f);
                *had_session = true;
                if had {
                    g.stats.reconnects += 1;
                }
            }
            _ => unreachable!("connect role only pairs with connect wires"),
        }
        g.rx.clear();
        g.backlog.clear();
        g.delay.clear();
        Ok(())
    }

    /// Observes bytes as they arrive in the receive buffer.
    pub fn set_rx_tap(&self, tap: impl FnMut(Timestamp, &[u8]) + Send + 'static) {
        self.inner.lock().unwrap().rx_tap = Some(Box::new(tap));
    }

    /// Observes bytes as the application submits them for transmission.
    pub fn set_tx_tap(&self, tap: impl FnMut(Timestamp, &[u8]) + Send + 'static) {
        self.inner.lock().unwrap().tx_tap = Some(Box::new(tap));
    }

    /// Shaped bytes released to transmission but not yet accepted by the
    /// wire. Delayed bytes whose release time has not arrived are excluded.
    pub fn pending_tx(&self) -> usize {
        self.inner.lock().unwrap().backlog.len()
    }
}

/// Polls both sides of a pair until every byte released by each has arrived
/// at the other, or the wall-clock timeout expires. This is the flush barrier
/// that makes TCP- and PTY-carried runs deterministic in virtual time.
pub fn settle_pair(a: &Endpoint, b: &Endpoint, timeout: Duration) -> Result<(), TransportError> {
    let start = Instant::now();
    loop {
        a.poll();
        b.poll();
        let (sa, sb) = (a.stats(), b.stats());
        if sa.bytes_out == sb.bytes_in
            && sb.bytes_out == sa.bytes_in
            && a.pending_tx() == 0
            && b.pending_tx() == 0
        {
            return Ok(());
        }
        if start.elapsed() > timeout {
            return Err(TransportError::SettleTimeout(timeout));
        }
        std::thread::sleep(Duration::from_micros(200));
    }
}

impl Inner {
    fn connected(&self) -> bool {
        match &self.wire {
            Wire::Mem { shared, .. } => shared
                .as_ref()
                .map(|s| {
                    let s = s.lock().unwrap();
                    s.listen_open && s.connect_open
                })
                .unwrap_or(false),
            Wire::TcpListen { stream, .. } => stream.is_some(),
            Wire::TcpConnect { stream, .. } => stream.is_some(),
            Wire::PtyListen { master, .. } => master.is_some(),
            Wire::PtyConnect { file, .. } => file.is_some(),
        }
    }

    /// Whether writes currently have somewhere to go.
    fn peer_attached(&self) -> bool {
        match &self.wire {
            Wire::Mem { shared, .. } => shared
                .as_ref()
                .map(|s| {
                    let s = s.lock().unwrap();
                    s.listen_open && s.connect_open
                })
                .unwrap_or(false),
            Wire::TcpListen { stream, .. } => stream.is_some(),
            Wire::TcpConnect { stream, .. } => stream.is_some(),
            // The tty object buffers master writes even before a slave opens.
            Wire::PtyListen { master, .. } => master.is_some(),
            Wire::PtyConnect { file, .. } => file.is_some(),
        }
    }

    fn check_disconnect_deadline(&mut self, now: Timestamp) {
        if let Some(at) = self.faults.disconnect_at {
            if !self.disconnect_fired && now >= at {
                self.disconnect_fired = true;
                self.delay.clear();
                self.backlog.clear();
                self.disconnect_wire();
            }
        }
    }

    fn disconnect_wire(&mut self) {
        match &mut self.wire {
            Wire::Mem { shared, .. } => {
                if let Some(s) = shared.take() {
                    let mut s = s.lock().unwrap();
                    match self.role {
                        Role::Listen => s.listen_open = false,
                        Role::Connect => s.connect_open = false,
                    }
                }
            }
            Wire::TcpListen { stream, .. } => {
                if let Some(s) = stream.take() {
                    let _ = s.shutdown(std::net::Shutdown::Both);
                }
            }
            Wire::TcpConnect { stream, .. } => {
                if let Some(s) = stream.take() {
                    let _ = s.shutdown(std::net::Shutdown::Both);
                }
            }
            Wire::PtyListen { master, .. } => {
                *master = None;
            }
            Wire::PtyConnect { file, .. } => {
                *file = None;
            }
        }
    }

    /// Releases due delayed bytes, flushes the backlog, then pumps reads.
    fn pump(&mut self, now: Timestamp) {
        while let Some((release, _)) = self.delay.front() {
            if *release <= now {
                let (_, bytes) = self.delay.pop_front().unwrap();
                self.backlog.extend(bytes);
            } else {
                break;
            }
        }
        self.flush_wire();
        self.pump_reads(now);
    }

    /// Pushes backlog bytes onto the wire, counting what was accepted.
    fn flush_wire(&mut self) {
        if self.backlog.is_empty() {
            return;
        }
        match &mut self.wire {
            Wire::Mem { shared, .. } => {
                if let Some(s) = shared {
                    let mut s = s.lock().unwrap();
                    if s.listen_open && s.connect_open {
                        let q = match self.role {
                            Role::Listen => &mut s.to_connect,
                            Role::Connect => &mut s.to_listen,
                        };
                        self.stats.bytes_out += self.backlog.len() as u64;
                        q.extend(self.backlog.drain(..));
                    } else {
                        self.backlog.clear();
                    }
                } else {
                    self.backlog.clear();
                }
            }
            Wire::TcpListen { stream, .. } | Wire::TcpConnect { stream, .. } => {
                let mut lost = false;
                if let Some(s) = stream {
                    while !self.backlog.is_empty() {
                        let chunk = self.backlog.make_contiguous();
                        match s.write(chunk) {
                            Ok(0) => break,
                            Ok(n) => {
                                self.stats.bytes_out += n as u64;
                                self.backlog.drain(..n);
                            }
                            Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                            Err(_) => {
                                lost = true;
                                break;
                            }
                        }
                    }
                } else {
                    self.backlog.clear();
                }
                if lost {
                    *stream = None;
                    self.backlog.clear();
                }
            }
            Wire::PtyListen {
                master: file_slot, ..
            }
            | Wire::PtyConnect {
                file: file_slot, ..
            } => {
                let mut lost = false;
                if let Some(f) = file_slot {
                    while !self.backlog.is_empty() {
                        let chunk = self.backlog.make_contiguous();
                        match f.write(chunk) {
                            Ok(0) => break,
                            Ok(n) => {
                                self.stats.bytes_out += n as u64;
                                self.backlog.drain(..n);
                            }
                            Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                            Err(_) => {
                                lost = true;
                                break;
                            }
                        }
                    }
                } else {
                    self.backlog.clear();
                }
                if lost {
                    *file_slot = None;
                    self.backlog.clear();
                }
            }
        }
    }

    fn pump_reads(&mut self, now: Timestamp) {
        let mut arrived: Vec<u8> = Vec::new();
        match &mut self.wire {
            Wire::Mem {
                shared,
                last_session,
                ..
            } => {
                if let Some(s) = shared {
                    let mut s = s.lock().unwrap();
                    if self.role == Role::Listen && s.session > *last_session {
                        // Count every session established since we last
                        // looked; the first-ever session is not a reconnect.
                        let new = s.session - *last_session;
                        self.stats.reconnects += if *last_session == 0 { new - 1 } else { new };
                        *last_session = s.session;
                    }
                    let q = match self.role {
                        Role::Listen => &mut s.to_listen,
                        Role::Connect => &mut s.to_connect,
                    };
                    arrived.extend(q.drain(..));
                }
            }
            Wire::TcpListen {
                listener,
                stream,
                had_session,
            } => {
                if stream.is_none() {
                    match listener.accept() {
                        Ok((s, _)) => {
                            let _ = s.set_nonblocking(true);
                            let _ = s.set_nodelay(true);
                            if *had_session {
                                self.stats.reconnects += 1;
                            }
                            *had_session = true;
                            *stream = Some(s);
                        }
                        Err(_) => {}
                    }
                }
                if let Some(s) = stream {
                    if !read_stream(s, &mut arrived) {
                        *stream = None;
                    }
                }
            }
            Wire::TcpConnect { stream, .. } => {
                if let Some(s) = stream {
                    if !read_stream(s, &mut arrived) {
                        *stream = None;
                    }
                }
            }
            Wire::PtyListen { master, .. } => {
                if let Some(f) = master {
                    // EIO from a pty master means "no slave is open"; the
                    // master stays usable, so keep it.
                    let _ = read_file(f, &mut arrived);
                }
            }
            Wire::PtyConnect { file, .. } => {
                if let Some(f) = file {
                    if !read_file(f, &mut arrived) {
                        *file = None;
                    }
                }
            }
        }
        if !arrived.is_empty() {
            self.stats.bytes_in += arrived.len() as u64;
            if let Some(tap) = self.rx_tap.as_mut() {
                tap(now, &arrived);
            }
            self.rx.extend(arrived);
        }
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        match &self.wire {
            Wire::Mem { name, shared, .. } => {
                if let Some(s) = shared {
                    let mut g = s.lock().unwrap();
                    match self.role {
                        Role::Listen => g.listen_open = false,
                        Role::Connect => g.connect_open = false,
                    }
                }
                if self.role == Role::Listen {
                    MEM_REGISTRY.lock().unwrap().remove(name);
                }
            }
            Wire::PtyListen { link, .. } => {
                let _ = std::fs::remove_file(link);
            }
            _ => {}
        }
    }
}

/// Reads everything available; returns false when the peer has gone away.
fn read_stream(s: &mut TcpStream, out: &mut Vec<u8>) -> bool {
    let mut buf = [0u8; 8192];
    loop {
        match s.read(&mut buf) {
            Ok(0) => return false,
            Ok(n) => out.extend_from_slice(&buf[..n]),
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => return true,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(_) => return false,
        }
    }
}

fn read_file(f: &mut File, out: &mut Vec<u8>) -> bool {
    let mut buf = [0u8; 8192];
    loop {
        match f.read(&mut buf) {
            Ok(0) => return false,
            Ok(n) => out.extend_from_slice(&buf[..n]),
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => return true,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(_) => return false,
        }
    }
}

fn attach_mem(name: &str) -> Result<Arc<Mutex<MemShared>>, TransportError> {
    let reg = MEM_REGISTRY.lock().unwrap();
    let shared = reg
        .get(name)
        .cloned()
        .ok_or_else(|| TransportError::ConnectionRefused(format!("mem://{name}")))?;
    drop(reg);
    let mut s = shared.lock().unwrap();
    if !s.listen_open {
        return Err(TransportError::ConnectionRefused(format!("mem://{name}")));
    }
    s.connect_open = true;
    s.session += 1;
    drop(s);
    Ok(shared)
}

fn dial_tcp(addr: &str) -> Result<TcpStream, TransportError> {
    let stream = TcpStream::connect(addr).map_err(|e| {
        if e.kind() == io::ErrorKind::ConnectionRefused {
            TransportError::ConnectionRefused(format!("tcp://{addr}"))
        } else {
            TransportError::Io(e)
        }
    })?;
    stream.set_nodelay(true)?;
    stream.set_nonblocking(true)?;
    Ok(stream)
}

fn set_raw_mode(fd: RawFd) -> io::Result<()> {
    unsafe {
        let mut t: libc::termios = std::mem::zeroed();
        if libc::tcgetattr(fd, &mut t) != 0 {
            return Err(io::Error::last_os_error());
        }
        libc::cfmakeraw(&mut t);
        if libc::tcsetattr(fd, libc::TCSANOW, &t) != 0 {
            return Err(io::Error::last_os_error());
        }
    }
    Ok(())
}

fn set_nonblocking_fd(fd: RawFd) -> io::Result<()> {
    unsafe {
        let flags = libc::fcntl(fd, libc::F_GETFL);
        if flags < 0 {
            return Err(io::Error::last_os_error());
        }
        if libc::fcntl(fd, libc::F_SETFL, flags | libc::O_NONBLOCK) < 0 {
            return Err(io::Error::last_os_error());
        }
    }
    Ok(())
}

/// Allocates a pseudo-terminal master and reports the slave device path.
fn open_pty_master() -> Result<(File, PathBuf), TransportError> {
    unsafe {
        let fd = libc::posix_openpt(libc::O_RDWR | libc::O_NOCTTY);
        if fd < 0 {
            return Err(TransportError::Io(io::Error::last_os_error()));
        }
        let fail = |fd: RawFd| -> TransportError {
            let e = io::Error::last_os_error();
            libc::close(fd);
            TransportError::Io(e)
        };
        if libc::grantpt(fd) != 0 || libc::unlockpt(fd) != 0 {
            return Err(fail(fd));
        }
        let mut buf = [0i8; 256];
        if libc::ptsname_r(fd, buf.as_mut_ptr() as *mut libc::c_char, buf.len()) != 0 {
            return Err(fail(fd));
        }
        let name = std::ffi::CStr::from_ptr(buf.as_ptr() as *const libc::c_char)
            .to_string_lossy()
            .into_owned();
        if set_nonblocking_fd(fd).is_err() || set_raw_mode(fd).is_err() {
            return Err(fail(fd));
        }
        Ok((File::from_raw_fd(fd), PathBuf::from(name)))
    }
}

/// Symlinks `link` → `slave_path` so a driver configured with the link path
/// opens the pty slave. A dangling leftover link is replaced; a live file is
/// a bind conflict.
fn place_symlink(slave_path: &Path, link: &Path) -> Result<(), TransportError> {
    match std::os::unix::fs::symlink(slave_path, link) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
            let dangling =
                link.symlink_metadata().is_ok() && std::fs::metadata(link).is_err();
            if dangling {
                std::fs::remove_file(link)?;
                std::os::unix::fs::symlink(slave_path, link)?;
                Ok(())
            } else {
                Err(TransportError::BindConflict(
                    link.to_string_lossy().into_owned(),
                ))
            }
        }
        Err(e) => Err(TransportError::Io(e)),
    }
}

fn open_pty_slave(path: &str) -> Result<File, TransportError> {
    let file = std::fs::OpenOptions::new()
        .read(true)
        .write(true)
        .custom_flags(libc::O_NOCTTY | libc::O_NONBLOCK)
        .open(path)
        .map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                TransportError::ConnectionRefused(format!("pty://{path}"))
            } else {
                TransportError::Io(e)
            }
        })?;
    set_raw_mode(file.as_raw_fd()).map_err(TransportError::Io)?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem_pair(name: &str) -> (Endpoint, Endpoint, VirtualClock) {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = format!("mem://{name}").parse().unwrap();
        let listen = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        let connect = Endpoint::open(&cs, Role::Connect, clock.clone()).unwrap();
        (listen, connect, clock)
    }

    #[test]
    fn mem_pair_orders_bytes_both_directions() {
        let (listen, connect, _clock) = mem_pair("order-test");
        listen.write(b"hello ").unwrap();
        listen.write(b"world").unwrap();
        connect.write(b"cmd").unwrap();
        assert_eq!(connect.read_available(), b"hello world");
        assert_eq!(listen.read_available(), b"cmd");
    }

    #[test]
    fn mem_connect_without_listener_refused() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "mem://nobody-home".parse().unwrap();
        assert!(matches!(
            Endpoint::open(&cs, Role::Connect, clock),
            Err(TransportError::ConnectionRefused(_))
        ));
    }

    #[test]
    fn mem_double_listen_is_bind_conflict() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "mem://dup-listen".parse().unwrap();
        let _a = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        assert!(matches!(
            Endpoint::open(&cs, Role::Listen, clock),
            Err(TransportError::BindConflict(_))
        ));
    }

    #[test]
    fn mem_name_freed_after_drop() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "mem://freed".parse().unwrap();
        let a = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        drop(a);
        assert!(Endpoint::open(&cs, Role::Listen, clock).is_ok());
    }

    #[test]
    fn writes_before_peer_attaches_are_discarded() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "mem://early-write".parse().unwrap();
        let listen = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        listen.write(b"lost").unwrap();
        assert_eq!(listen.stats().bytes_out, 0);
        let connect = Endpoint::open(&cs, Role::Connect, clock).unwrap();
        assert!(connect.read_available().is_empty());
        listen.write(b"kept").unwrap();
        assert_eq!(connect.read_available(), b"kept");
    }

    #[test]
    fn stats_zero_then_count_writes() {
        let (listen, connect, _clock) = mem_pair("stats-count");
        assert_eq!(listen.stats(), EndpointStats::default());
        listen.write(&[0u8; 10]).unwrap();
        assert_eq!(listen.stats().bytes_out, 10);
        connect.poll();
        assert_eq!(connect.stats().bytes_in, 10);
    }

    #[test]
    fn drop_all_silences_and_disconnects() {
        let (listen, connect, _clock) = mem_pair("drop-all");
        listen.write(b"before").unwrap();
        assert_eq!(connect.read_available(), b"before");
        listen.inject_fault(FaultSpec::DropAll).unwrap();
        listen.write(b"after").unwrap();
        assert!(connect.read_available().is_empty());
        assert!(!connect.is_connected());
        assert!(!listen.is_connected());
    }

    #[test]
    fn drop_all_and_latency_conflict_both_orders() {
        let (listen, _connect, _clock) = mem_pair("conflict-a");
        listen
            .inject_fault(FaultSpec::Latency {
                duration: Duration::from_millis(5),
            })
            .unwrap();
        assert!(matches!(
            listen.inject_fault(FaultSpec::DropAll),
            Err(TransportError::ConflictingFaults)
        ));
        let (listen2, _connect2, _clock2) = mem_pair("conflict-b");
        listen2.inject_fault(FaultSpec::DropAll).unwrap();
        assert!(matches!(
            listen2.inject_fault(FaultSpec::Latency {
                duration: Duration::from_millis(5)
            }),
            Err(TransportError::ConflictingFaults)
        ));
    }

    #[test]
    fn corrupt_probability_validated() {
        let (listen, _c, _clock) = mem_pair("bad-prob");
        assert!(matches!(
            listen.inject_fault(FaultSpec::Corrupt {
                probability: 1.5,
                seed: 0
            }),
            Err(TransportError::BadProbability(_))
        ));
    }

    #[test]
    fn corrupt_is_deterministic_across_runs() {
        let input: Vec<u8> = (0..2000u32).map(|i| (i % 251) as u8).collect();
        let run = |name: &str| -> Vec<u8> {
            let (listen, connect, _clock) = mem_pair(name);
            listen
                .inject_fault(FaultSpec::Corrupt {
                    probability: 0.05,
                    seed: 7,
                })
                .unwrap();
            // Vary write chunking between runs; corruption keys on byte
            // index, not on write boundaries.
            let chunk = if name.ends_with('1') { 17 } else { 64 };
            for c in input.chunks(chunk) {
                listen.write(c).unwrap();
            }
            connect.read_available()
        };
        let a = run("corrupt-run1");
        let b = run("corrupt-run2");
        assert_eq!(a, b);
        assert_ne!(a, input);
    }

    #[test]
    fn corrupt_full_probability_changes_every_byte() {
        let (listen, connect, _clock) = mem_pair("corrupt-all");
        listen
            .inject_fault(FaultSpec::Corrupt {
                probability: 1.0,
                seed: 3,
            })
            .unwrap();
        let input: Vec<u8> = (0..=255u8).collect();
        listen.write(&input).unwrap();
        let out = connect.read_available();
        assert_eq!(out.len(), input.len());
        for (i, (&a, &b)) in input.iter().zip(&out).enumerate() {
            assert_ne!(a, b, "byte {i} unchanged");
        }
    }

    #[test]
    fn corrupt_zero_probability_changes_nothing() {
        let (listen, connect, _clock) = mem_pair("corrupt-none");
        listen
            .inject_fault(FaultSpec::Corrupt {
                probability: 0.0,
                seed: 3,
            })
            .unwrap();
        let input: Vec<u8> = (0..=255u8).collect();
        listen.write(&input).unwrap();
        assert_eq!(connect.read_available(), input);
    }

    #[test]
    fn corrupt_rate_near_probability() {
        let (listen, connect, _clock) = mem_pair("corrupt-rate");
        listen
            .inject_fault(FaultSpec::Corrupt {
                probability: 0.01,
                seed: 42,
            })
            .unwrap();
        let input = vec![0u8; 100_000];
        for c in input.chunks(4096) {
            listen.write(c).unwrap();
        }
        let out = connect.read_available();
        let flips = out.iter().filter(|&&b| b != 0).count();
        assert!((600..=1400).contains(&flips), "flips = {flips}");
    }

    #[test]
    fn latency_shifts_arrival_by_exact_duration() {
        let (listen, connect, clock) = mem_pair("latency-50");
        listen
            .inject_fault(FaultSpec::Latency {
                duration: Duration::from_millis(50),
            })
            .unwrap();
        listen.write(b"delayed").unwrap();
        assert!(connect.read_available().is_empty());
        clock.advance(Duration::from_millis(49)).unwrap();
        listen.poll();
        assert!(connect.read_available().is_empty());
        clock.advance(Duration::from_millis(1)).unwrap();
        listen.poll();
        assert_eq!(connect.read_available(), b"delayed");
    }

    #[test]
    fn disconnect_at_then_reconnect_counts_once() {
        let (listen, connect, clock) = mem_pair("disc-at");
        connect
            .inject_fault(FaultSpec::DisconnectAt {
                at: Timestamp::from_millis(100),
            })
            .unwrap();
        listen.write(b"x").unwrap();
        assert_eq!(connect.read_available(), b"x");
        clock.advance(Duration::from_millis(100)).unwrap();
        connect.poll();
        assert!(!connect.is_connected());
        connect.reconnect().unwrap();
        listen.poll();
        assert!(connect.is_connected());
        assert_eq!(connect.stats().reconnects, 1);
        assert_eq!(listen.stats().reconnects, 1);
        listen.write(b"again").unwrap();
        assert_eq!(connect.read_available(), b"again");
    }

    #[test]
    fn tcp_ephemeral_port_reported() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "tcp://127.0.0.1:0".parse().unwrap();
        let listen = Endpoint::open(&cs, Role::Listen, clock).unwrap();
        let addr = listen.local_address();
        let port: u16 = addr.rsplit(':').next().unwrap().parse().unwrap();
        assert!(port > 0);
    }

    #[test]
    fn tcp_round_trip_and_settle() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "tcp://127.0.0.1:0".parse().unwrap();
        let listen = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        let connect_cs: ConnectionString =
            format!("tcp://{}", listen.local_address()).parse().unwrap();
        let connect = Endpoint::open(&connect_cs, Role::Connect, clock).unwrap();
        // The listener must accept before its writes have a peer.
        settle_pair(&listen, &connect, Duration::from_secs(2)).unwrap();
        listen.write(b"data!").unwrap();
        connect.write(b"START").unwrap();
        settle_pair(&listen, &connect, Duration::from_secs(2)).unwrap();
        assert_eq!(connect.read_available(), b"data!");
        assert_eq!(listen.read_available(), b"START");
    }

    #[test]
    fn tcp_connect_to_dead_port_refused() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "tcp://127.0.0.1:0".parse().unwrap();
        let listen = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        let addr = listen.local_address();
        drop(listen);
        let connect_cs: ConnectionString = format!("tcp://{addr}").parse().unwrap();
        assert!(matches!(
            Endpoint::open(&connect_cs, Role::Connect, clock),
            Err(TransportError::ConnectionRefused(_))
        ));
    }

    #[test]
    fn tcp_listener_reaccepts_and_counts_reconnect() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "tcp://127.0.0.1:0".parse().unwrap();
        let listen = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        let connect_cs: ConnectionString =
            format!("tcp://{}", listen.local_address()).parse().unwrap();
        let connect = Endpoint::open(&connect_cs, Role::Connect, clock).unwrap();
        settle_pair(&listen, &connect, Duration::from_secs(2)).unwrap();
        assert!(listen.is_connected());
        connect.disconnect();
        // Give the kernel a moment to deliver the FIN, then poll.
        let start = Instant::now();
        while listen.is_connected() && start.elapsed() < Duration::from_secs(2) {
            listen.poll();
            std::thread::sleep(Duration::from_micros(200));
        }
        assert!(!listen.is_connected());
        connect.reconnect().unwrap();
        let start = Instant::now();
        while !listen.is_connected() && start.elapsed() < Duration::from_secs(2) {
            listen.poll();
            std::thread::sleep(Duration::from_micros(200));
        }
        assert!(listen.is_connected());
        assert_eq!(listen.stats().reconnects, 1);
        assert_eq!(connect.stats().reconnects, 1);
        listen.write(b"back").unwrap();
        settle_pair(&listen, &connect, Duration::from_secs(2)).unwrap();
        assert_eq!(connect.read_available(), b"back");
    }

    #[test]
    fn pty_round_trip_preserves_all_byte_values() {
        let clock = VirtualClock::new_virtual();
        let link = std::env::temp_dir().join(format!("ttyDTP-rt-{}", std::process::id()));
        let cs: ConnectionString = format!("pty://{}", link.display()).parse().unwrap();
        let listen = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        assert!(link.symlink_metadata().is_ok(), "symlink placed");
        let connect = Endpoint::open(&cs, Role::Connect, clock).unwrap();
        // Every byte value must survive: raw mode disables CR/NL mangling
        // and echo, which matters for binary sensor frames.
        let payload: Vec<u8> = (0..=255u8).collect();
        listen.write(&payload).unwrap();
        connect.write(b"PING\r\n").unwrap();
        settle_pair(&listen, &connect, Duration::from_secs(2)).unwrap();
        assert_eq!(connect.read_available(), payload);
        assert_eq!(listen.read_available(), b"PING\r\n");
        drop(connect);
        drop(listen);
        assert!(link.symlink_metadata().is_err(), "symlink cleaned up");
    }

    #[test]
    fn pty_connect_missing_path_refused() {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "pty:///tmp/definitely-not-there-dtp".parse().unwrap();
        assert!(matches!(
            Endpoint::open(&cs, Role::Connect, clock),
            Err(TransportError::ConnectionRefused(_))
        ));
    }

    #[test]
    fn lossless_random_chunking_mem() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let data: Vec<u8> = (0..10_000).map(|_| rng.gen()).collect();
        let (listen, connect, _clock) = mem_pair("fuzz-chunks");
        let mut sent = 0;
        while sent < data.len() {
            let n = rng.gen_range(1..=257).min(data.len() - sent);
            listen.write(&data[sent..sent + n]).unwrap();
            sent += n;
        }
        assert_eq!(connect.read_available(), data);
    }

    #[test]
    fn lossless_random_chunking_tcp() {
        use rand::{Rng, SeedableRng};
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "tcp://127.0.0.1:0".parse().unwrap();
        let listen = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        let connect_cs: ConnectionString =
            format!("tcp://{}", listen.local_address()).parse().unwrap();
        let connect = Endpoint::open(&connect_cs, Role::Connect, clock).unwrap();
        settle_pair(&listen, &connect, Duration::from_secs(2)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
        let data: Vec<u8> = (0..50_000).map(|_| rng.gen()).collect();
        let mut sent = 0;
        let mut received = Vec::new();
        while sent < data.len() {
            let n = rng.gen_range(1..=1024).min(data.len() - sent);
            listen.write(&data[sent..sent + n]).unwrap();
            sent += n;
            received.extend(connect.read_available());
        }
        settle_pair(&listen, &connect, Duration::from_secs(2)).unwrap();
        received.extend(connect.read_available());
        assert_eq!(received, data);
    }
}
